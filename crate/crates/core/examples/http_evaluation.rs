//! Evaluating against an OpenAI-compatible chat-completions endpoint.
//!
//! Run against a real server:
//! `cargo run --example http_evaluation -- http://localhost:8000/v1 my-model [TOKEN_ENV]`
//!
//! With no arguments a throwaway local server answers every question with "B",
//! failing each prompt's first attempt with a 503 to show the retry path.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use temrob::annotations::{EventAnnotation, VideoRecord};
use temrob::evalclient::{
    load_log, run_evaluation, EndpointConfig, HttpResponder, RetryPolicy, RunOptions,
};
use temrob::perturb::{build_item, Severity};

/// One request per connection; enough for a demo, not a real server.
fn spawn_demo_server() -> anyhow::Result<String> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let url = format!("http://{}/v1", listener.local_addr()?);
    let seen: Arc<Mutex<HashSet<String>>> = Arc::default();
    std::thread::spawn(move || {
        for mut stream in listener.incoming().flatten() {
            let seen = Arc::clone(&seen);
            std::thread::spawn(move || -> std::io::Result<()> {
                let mut reader = BufReader::new(stream.try_clone()?);
                let mut len = 0;
                let mut line = String::new();
                while reader.read_line(&mut line)? > 0 && line != "\r\n" {
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                    line.clear();
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body)?;
                let first = seen.lock().unwrap().insert(String::from_utf8_lossy(&body).into_owned());
                let (status, reply) = if first {
                    (503, "{}".to_string())
                } else {
                    (200, r#"{"choices":[{"message":{"content":"B"}}]}"#.to_string())
                };
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                    reply.len()
                )
            });
        }
    });
    Ok(url)
}

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut config = match args.as_slice() {
        [url, model, rest @ ..] => {
            let mut c = EndpointConfig::new(url, model);
            c.auth_token_env = rest.first().cloned();
            c
        }
        [] => EndpointConfig::new(spawn_demo_server()?, "demo"),
        _ => anyhow::bail!("usage: http_evaluation [BASE_URL MODEL [TOKEN_ENV]]"),
    };
    config.retry = RetryPolicy {
        max_attempts: 3,
        backoff_base_secs: 0.05,
    };
    let responder = HttpResponder::new(&config)?;
    println!("endpoint: {}", responder.url());

    let record = VideoRecord {
        video_id: "tea".into(),
        duration: 40.0,
        events: ["boil water", "add tea leaves", "steep", "pour into a cup"]
            .iter()
            .enumerate()
            .map(|(i, d)| EventAnnotation {
                event_id: i.to_string(),
                description: d.to_string(),
                start: 10.0 * i as f64,
                end: 10.0 * i as f64 + 8.0,
            })
            .collect(),
    };
    let items: Vec<_> = [Severity::Absolute, Severity::Relative]
        .into_iter()
        .map(|s| build_item(&record, s, 0))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flat_map(|p| [p.clean, p.adversarial])
        .collect();

    let dir = tempfile::tempdir()?;
    let log = dir.path().join("log.jsonl");
    let opts = RunOptions {
        max_concurrency: 2,
        retry: config.retry,
        ..RunOptions::default()
    };
    let summary = run_evaluation(&items, &responder, &opts, &log)?;
    println!("{summary:?}");
    for r in load_log(&log)? {
        println!(
            "{:<28} {:<11} {:?} {:?} {}",
            r.item_id,
            r.setting.as_str(),
            r.parsed_letter,
            r.parsed_role,
            r.error.unwrap_or_default()
        );
    }
    // Rerunning resumes from the log and sends nothing.
    println!("rerun: {:?}", run_evaluation(&items, &responder, &opts, &log)?);
    Ok(())
}
