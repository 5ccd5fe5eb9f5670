use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use cpcp_service::{router, SessionStore, DEFAULT_MAX_UPLOAD_BYTES};
use tracing::info;
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(
    name = "cpcp-server",
    version,
    about = "Serve bundle layouts over HTTP"
)]
struct Args {
    #[arg(long, env = "CPCP_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Largest accepted dataset upload, in bytes.
    #[arg(long, env = "CPCP_MAX_UPLOAD_BYTES", default_value_t = DEFAULT_MAX_UPLOAD_BYTES)]
    max_upload_bytes: usize,
    /// JSON file that view state is written through to and restored from.
    #[arg(long, env = "CPCP_PERSIST_PATH")]
    persist: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .init();
    let args = Args::parse();
    let store = match &args.persist {
        Some(path) => SessionStore::with_persistence(path)?,
        None => SessionStore::new(),
    };
    let app = router(Arc::new(store), args.max_upload_bytes);
    let listener = tokio::net::TcpListener::bind(args.bind).await?;
    info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
