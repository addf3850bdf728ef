//! The review API over a fixture run.
//!
//! ```text
//! cargo run --example serve_api            # serve on 127.0.0.1:8080 until Ctrl-C
//! cargo run --example serve_api -- --once  # ephemeral port, one request per endpoint, exit
//! ```

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use registry_dedup::api::{router, ApiOptions};
use registry_dedup::cli::stages::run_pipeline;
use registry_dedup::cli::RunConfig;
use registry_dedup::store::{RunDir, Store};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};

async fn request(addr: SocketAddr, method: &str, path: &str, body: &str) -> anyhow::Result<String> {
    let mut stream = TcpStream::connect(addr).await?;
    let req = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(req.as_bytes()).await?;
    let mut out = String::new();
    stream.read_to_string(&mut out).await?;
    let (head, body) = out.split_once("\r\n\r\n").unwrap_or((&out, ""));
    Ok(format!(
        "{}\n{}",
        head.lines().next().unwrap_or(""),
        body.chars().take(300).collect::<String>()
    ))
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let once = std::env::args().any(|a| a == "--once");
    let tmp = tempfile::tempdir()?;
    let config = RunConfig::load(
        &std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/worked_examples/run.toml"),
    )?;
    let mut run = RunDir::create(tmp.path())?;
    run_pipeline(&mut run, &config.input_specs()?, &config.similarity, None)?;
    let store = Arc::new(RwLock::new(Store::open(tmp.path())?));
    let app = router(
        store.clone(),
        &ApiOptions {
            cors: true,
            ui_dir: None,
        },
    );

    let listener = TcpListener::bind(if once {
        "127.0.0.1:0"
    } else {
        "127.0.0.1:8080"
    })
    .await?;
    let addr = listener.local_addr()?;
    println!("serving on http://{addr}/api/sets");
    if !once {
        axum::serve(listener, app).await?;
        return Ok(());
    }

    let server = tokio::spawn(async move { axum::serve(listener, app).await });
    let set_id = store.read().unwrap().sets()[0].set.id.clone();
    for (method, path, body) in [
        ("GET", "/api/run".to_string(), String::new()),
        (
            "GET",
            "/api/sets?status=needs-review&pageSize=2".to_string(),
            String::new(),
        ),
        ("GET", format!("/api/sets/{set_id}"), String::new()),
        (
            "POST",
            format!("/api/sets/{set_id}/decision"),
            r#"{"verdict":"accept","reviewer":"example"}"#.to_string(),
        ),
        (
            "POST",
            format!("/api/sets/{set_id}/decision"),
            r#"{"verdict":"amend","amendedMembers":[],"reviewer":"example"}"#.to_string(),
        ),
        ("GET", "/api/stats".to_string(), String::new()),
        ("GET", "/api/nothing".to_string(), String::new()),
    ] {
        println!(
            "> {method} {path}\n{}\n",
            request(addr, method, &path, &body).await?
        );
    }
    server.abort();
    Ok(())
}
