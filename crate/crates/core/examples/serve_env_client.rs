//! Starts the JSON-lines environment server on a local port and drives it
//! from a client thread, the way a remote learner would.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};

use serde_json::{json, Value};
use wipeplan::env::{EnvConfig, TaskKind};
use wipeplan::protocol::serve_listener;

fn main() -> wipeplan::Result<()> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let config = EnvConfig::preset(TaskKind::CleanSpills);
    let server = std::thread::spawn(move || serve_listener(&config, listener, Some(1)));

    let mut conn = TcpStream::connect(addr)?;
    let mut reader = BufReader::new(conn.try_clone()?);
    let mut call = |request: Value| -> wipeplan::Result<Value> {
        writeln!(conn, "{request}")?;
        let mut line = String::new();
        reader.read_line(&mut line)?;
        Ok(serde_json::from_str(&line)?)
    };

    let mut reply = call(json!({"cmd": "reset", "seed": 12}))?;
    let mut total = 0.0;
    let mut k = 0;
    while reply["done"] == false {
        // Sweep across the table in bands, alternating direction.
        let y = 0.1 + 0.2 * (k % 5) as f64;
        let (x, theta) = if k % 2 == 0 { (0.0, 0.0) } else { (1.0, std::f64::consts::PI) };
        reply = call(json!({"cmd": "step", "action": [x, y, theta, 1.0]}))?;
        let dirty = reply["obs"].as_array().map_or(0, |o| o.iter().filter(|v| *v == 1).count());
        total += reply["reward"].as_f64().unwrap_or(0.0);
        println!("step {:2}: reward {:+6.1}, dirty pixels {dirty:4}", k + 1, reply["reward"].as_f64().unwrap_or(0.0));
        k += 1;
    }
    println!("episode over after {k} wipes, return {total:.1}");
    println!("{}", call(json!({"cmd": "step", "action": [0.5, 0.5, 0.0, 0.1]}))?);
    println!("{}", call(json!({"cmd": "close"}))?);
    server.join().expect("server thread")?;
    Ok(())
}
