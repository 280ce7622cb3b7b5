//! Serves an annotation queue on localhost and walks one verify task
//! through the HTTP API with a plain TCP client.
//!
//! ```bash
//! cargo run --release --example annotation_server
//! ```

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::{Arc, Mutex};

use simtext::data::{encode_pgm, synthetic_corpus, Canvas, SyntheticStyle};
use simtext::manifold::{Entry, ManifoldIndex};
use simtext::service::{router, Annotation, ServiceItem, DEFAULT_LEASE_TTL};
use simtext::workflow::{Engine, EngineConfig, Mode, Thresholds, WorkItem};

fn request(port: u16, method: &str, path: &str, body: &str) -> std::io::Result<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port))?;
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    let mut out = String::new();
    s.read_to_string(&mut out)?;
    Ok(out.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or(out))
}

fn main() -> anyhow::Result<()> {
    // a toy one-dimensional dictionary stands in for real embeddings
    let index = ManifoldIndex::from_entries((0..5).map(|i| Entry {
        id: format!("oak{i}"),
        feat: vec![i as f64 * 0.01],
        label: "OAK".into(),
    }))?;
    let engine = Engine::new(index, EngineConfig::new(Thresholds::new(0.5, 0.9)?, Mode::Assistive))?;
    let images = synthetic_corpus(&["OAK"], 1, &SyntheticStyle::default(), 0, Canvas::TEXT)?;
    let item = ServiceItem {
        item: WorkItem { id: "scan/0001".into(), feat: vec![0.0], truth: None },
        image: encode_pgm(images[0].pixels.data(), 28, 56),
    };
    let state = Arc::new(Mutex::new(Annotation::new(engine, vec![item], DEFAULT_LEASE_TTL)?));

    let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
    listener.set_nonblocking(true)?;
    let port = listener.local_addr()?.port();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().expect("runtime");
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
            axum::serve(listener, router(state)).await
        })
    });

    let task = request(port, "GET", "/api/v1/tasks/next?annotator=alice", "")?;
    println!("task:    {task}");
    let id: serde_json::Value = serde_json::from_str(&task)?;
    let reply = request(port, "POST", &format!("/api/v1/tasks/{}/label", id["task_id"]), r#"{"label":"OAK"}"#)?;
    println!("submit:  {reply}");
    println!("metrics: {}", request(port, "GET", "/api/v1/metrics", "")?);
    Ok(())
}
