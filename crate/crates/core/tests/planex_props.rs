use indexmap::IndexMap;
use parley_core::dialogue::Author;
use parley_core::envgraph::{validate_path, RoomId};
use parley_core::planex::{extract_plan_blocks, extract_plan_set, latest_plans, validate_plan_set, PlanError, PlanSet};
use parley_testkit::{self as kit, oracle};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn recency_matches_sort_oracle(seed in any::<u64>()) {
        let mut r = StdRng::seed_from_u64(seed);
        let roster = kit::roster(&mut r, 4);
        let (t, planted) = kit::plan_transcript(&mut r, &roster, 20);
        let expected = oracle::latest_plans(&roster, &planted);
        let (found, missing) = latest_plans(&t, &roster);
        prop_assert_eq!(&found, &expected);
        let want_missing: Vec<String> = roster.iter().filter(|n| !expected.contains_key(*n)).cloned().collect();
        prop_assert_eq!(&missing, &want_missing);
        match extract_plan_set(&t, &roster) {
            Ok(set) => {
                prop_assert!(missing.is_empty());
                prop_assert_eq!(set, PlanSet::new(expected));
            }
            Err(PlanError::MissingPlan(m)) => prop_assert_eq!(m, want_missing),
        }
    }

    #[test]
    fn chatter_after_plans_changes_nothing(seed in any::<u64>()) {
        let mut r = StdRng::seed_from_u64(seed);
        let roster = kit::roster(&mut r, 4);
        let (mut t, _) = kit::plan_transcript(&mut r, &roster, 10);
        let before = latest_plans(&t, &roster);
        for _ in 0..r.gen_range(1..5) {
            let a = kit::author(&mut r, &roster);
            t.append(a, &kit::chatter(&mut r)).unwrap();
        }
        prop_assert_eq!(latest_plans(&t, &roster), before);
    }

    #[test]
    fn validation_matches_direct_checks(seed in any::<u64>()) {
        let mut r = StdRng::seed_from_u64(seed);
        let g = kit::graph(&mut r, 8);
        let agents = r.gen_range(1..=4);
        let (mut plans, positions) = kit::plan_set(&mut r, &g, agents, 4);
        // break some of them
        for path in plans.values_mut() {
            match r.gen_range(0..6) {
                0 => *path = kit::path(&mut r, &g, 5),
                1 => path.push(kit::room("Nowhere")),
                2 => path[0] = g.rooms().choose(&mut r).unwrap().clone(),
                _ => {}
            }
        }
        let report = validate_plan_set(&PlanSet::new(plans.clone()), &g, &positions);
        prop_assert_eq!(report.ok, oracle::plans_ok(&g, &plans, &positions));
        if report.ok {
            for (agent, path) in &plans {
                prop_assert!(validate_path(&g, path).is_empty());
                prop_assert!(positions[agent].matches(&path[0]));
            }
        }
    }
}

#[test]
fn blocks_ignore_whitespace_and_keyword_case() {
    let canonical = extract_plan_blocks("PLAN Alpha: Kitchen -> Hall");
    for body in [
        "   plan Alpha:Kitchen->Hall   ",
        "\tPlan   Alpha :  Kitchen  ->  Hall\n",
        "we agree. PLAN Alpha: Kitchen -> Hall @supervisor",
    ] {
        assert_eq!(extract_plan_blocks(body), canonical, "{body:?}");
    }
}

#[test]
fn supervisor_may_dictate_a_plan() {
    let mut t = parley_core::dialogue::Transcript::new(["Alpha"]);
    t.append(Author::Agent("Alpha".into()), "PLAN Alpha: Kitchen").unwrap();
    t.append(Author::Supervisor, "No. PLAN alpha: Kitchen -> Hall").unwrap();
    let set = extract_plan_set(&t, &["Alpha".to_string()]).unwrap();
    let want: IndexMap<String, Vec<RoomId>> =
        [("Alpha".to_string(), vec![kit::room("Kitchen"), kit::room("Hall")])].into_iter().collect();
    assert_eq!(set, PlanSet::new(want));
}
