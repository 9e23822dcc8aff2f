use std::net::SocketAddr;

use clap::Parser;

#[derive(Parser)]
#[command(name = "fpp-server", about = "Serve first-passage percolation experiments over HTTP")]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let args = Args::parse();
    let (listener, local) = fpp_server::bind(args.addr).await?;
    eprintln!("listening on http://{local}");
    fpp_server::serve(listener, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
