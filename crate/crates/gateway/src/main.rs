use std::net::SocketAddr;

use parley_gateway::{serve, state_from_env, BIND_ENV, DEFAULT_BIND};
use tracing_subscriber::EnvFilter;

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();

    let bind = std::env::var(BIND_ENV).unwrap_or_else(|_| DEFAULT_BIND.to_string());
    let addr: SocketAddr = match bind.parse() {
        Ok(addr) => addr,
        Err(e) => {
            eprintln!("invalid {BIND_ENV} {bind:?}: {e}");
            std::process::exit(2);
        }
    };
    if let Err(e) = serve(addr, state_from_env()).await {
        eprintln!("gateway failed: {e}");
        std::process::exit(1);
    }
}
