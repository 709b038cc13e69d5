use parley_core::envgraph::RoomId;
use parley_core::planex::PlanSet;
use parley_core::sim::{run_to_end, EventKind, ExecutionConfig, FailureSpec, RobotStatus};
use parley_testkit as kit;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

fn same_edge(a: &RoomId, b: &RoomId, x: &RoomId, y: &RoomId) -> bool {
    (a.matches(x) && b.matches(y)) || (a.matches(y) && b.matches(x))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn completion_tick_follows_longest_plan(seed in any::<u64>()) {
        let mut r = StdRng::seed_from_u64(seed);
        let g = kit::connected_graph(&mut r, 10);
        let agents = r.gen_range(1..=4);
        let (plans, _) = kit::plan_set(&mut r, &g, agents, 6);
        let tpe = r.gen_range(1..=4u32);
        let config = ExecutionConfig { ticks_per_edge: tpe, failures: vec![] };
        let set = PlanSet::new(plans.clone());
        let (state, events) = run_to_end(&set, &g, config.clone()).unwrap();

        let longest = plans.values().map(|p| p.len() - 1).max().unwrap() as u64;
        let done = events.iter().filter(|e| e.kind == EventKind::AllComplete).collect::<Vec<_>>();
        prop_assert_eq!(done.len(), 1);
        prop_assert_eq!(done[0].tick, tpe as u64 * longest);
        prop_assert!(state.complete);

        for (agent, path) in &plans {
            // arrival at hop k happens at tick k * ticks_per_edge
            let arrivals: Vec<(u64, &RoomId)> = events
                .iter()
                .filter(|e| e.agent.as_deref() == Some(agent))
                .filter_map(|e| match &e.kind { EventKind::Arrive { room } => Some((e.tick, room)), _ => None })
                .collect();
            let expected: Vec<(u64, &RoomId)> = path[1..]
                .iter()
                .enumerate()
                .map(|(k, room)| ((k as u64 + 1) * tpe as u64, room))
                .collect();
            prop_assert_eq!(arrivals, expected);
            prop_assert_eq!(&state.robot(agent).unwrap().room, path.last().unwrap());
        }
        prop_assert!(events.windows(2).all(|w| w[0].tick <= w[1].tick));
        // same inputs, same trace
        prop_assert_eq!(run_to_end(&set, &g, config).unwrap().1, events);
    }

    #[test]
    fn blocked_edge_stops_the_robot_at_departure(seed in any::<u64>()) {
        let mut r = StdRng::seed_from_u64(seed);
        let g = kit::connected_graph(&mut r, 8);
        prop_assume!(g.edge_count() > 0);
        let agents = r.gen_range(1..=3);
        let (plans, _) = kit::plan_set(&mut r, &g, agents, 6);
        let edges: Vec<(RoomId, RoomId)> = g.edges().map(|(a, b)| (a.clone(), b.clone())).collect();
        let (a, b) = edges.choose(&mut r).unwrap().clone();
        let from_tick = r.gen_range(0..6u64);
        let tpe = r.gen_range(1..=3u32);
        let config = ExecutionConfig {
            ticks_per_edge: tpe,
            failures: vec![FailureSpec::BlockEdge { a: a.clone(), b: b.clone(), from_tick }],
        };
        let (state, events) = run_to_end(&PlanSet::new(plans.clone()), &g, config).unwrap();

        for (agent, path) in &plans {
            let hit = (0..path.len() - 1).find(|&k| {
                let depart = k as u64 * tpe as u64 + 1;
                depart >= from_tick && same_edge(&path[k], &path[k + 1], &a, &b)
            });
            let robot = state.robot(agent).unwrap();
            match hit {
                Some(k) => {
                    prop_assert_eq!(robot.status, RobotStatus::Blocked);
                    prop_assert_eq!(&robot.room, &path[k]);
                    let blocked: Vec<u64> = events
                        .iter()
                        .filter(|e| e.agent.as_deref() == Some(agent) && e.is_blocked())
                        .map(|e| e.tick)
                        .collect();
                    prop_assert_eq!(blocked, vec![k as u64 * tpe as u64 + 1]);
                }
                None => {
                    prop_assert_eq!(robot.status, RobotStatus::Done);
                    prop_assert_eq!(&robot.room, path.last().unwrap());
                }
            }
        }
    }
}
