use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use tapestry_core::tapestry::Tapestry;
use tapestry_service::{cors, router, AppState};

#[derive(Parser)]
#[command(name = "tapestry-service", version, about = "Serve a tapestry for scenario exploration")]
struct Args {
    /// Tapestry JSON written by `tapestry tapestry`.
    #[arg(long)]
    tapestry: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Allowed CORS origin; repeatable. Any origin when omitted.
    #[arg(long = "cors-origin")]
    cors_origins: Vec<String>,
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let fail = |msg: String| {
        eprintln!("{}", serde_json::json!({ "error": "startup", "message": msg }));
        ExitCode::from(2)
    };
    let text = match std::fs::read_to_string(&args.tapestry) {
        Ok(t) => t,
        Err(e) => return fail(format!("{}: {e}", args.tapestry.display())),
    };
    let tapestry = match Tapestry::from_json(&text) {
        Ok(t) => t,
        Err(e) => return fail(e.to_string()),
    };
    let cors = match cors(&args.cors_origins) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let app = router(Arc::new(AppState::new(tapestry)), cors);
    let listener = match tokio::net::TcpListener::bind(args.bind).await {
        Ok(l) => l,
        Err(e) => return fail(format!("bind {}: {e}", args.bind)),
    };
    log::info!("listening on {}", args.bind);
    if let Err(e) = axum::serve(listener, app).await {
        return fail(e.to_string());
    }
    ExitCode::SUCCESS
}
