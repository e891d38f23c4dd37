//! A policy process for `wipe evaluate --policy external:<command>`.
//!
//! Reads one JSON request per line on stdin and answers wipe actions on
//! stdout. This one wipes from the dirty pixel farthest from the table
//! centre straight towards the centre.

use std::io::{BufRead, Write};

use serde_json::{json, Value};

fn main() -> std::io::Result<()> {
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    for line in stdin.lock().lines() {
        let msg: Value = serde_json::from_str(&line?).unwrap_or(Value::Null);
        let Some(obs) = msg["obs"].as_array() else { continue };
        let w = msg["table"]["width_m"].as_f64().unwrap_or(1.0);
        let h = msg["table"]["height_m"].as_f64().unwrap_or(1.0);
        let (cx, cy) = (0.5 * w, 0.5 * h);
        let mut far = (cx, cy, 0.0);
        for (idx, v) in obs.iter().enumerate() {
            if v != 1 {
                continue;
            }
            let (i, j) = (idx / 64, idx % 64);
            let (x, y) = ((i as f64 + 0.5) * w / 64.0, (j as f64 + 0.5) * h / 64.0);
            let d = (x - cx).hypot(y - cy);
            if d > far.2 {
                far = (x, y, d);
            }
        }
        let (x, y, d) = far;
        // Start a little behind the crumb so the wiper catches it.
        let theta = (cy - y).atan2(cx - x);
        let back = 0.04;
        let action = [x - back * theta.cos(), y - back * theta.sin(), theta, d + back];
        writeln!(stdout, "{}", json!({ "action": action }))?;
        stdout.flush()?;
    }
    Ok(())
}
