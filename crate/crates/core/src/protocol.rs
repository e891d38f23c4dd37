//! JSON-lines environment server.
//!
//! Requests, one JSON object per line:
//!
//! ```text
//! {"cmd":"reset","seed":7}
//! {"cmd":"step","action":[px,py,theta,length]}
//! {"cmd":"close"}
//! ```
//!
//! Reset and step answer `{"obs":[4096 x 0/1],"reward":r,"done":b,"info":{..}}`
//! where `obs[i * 64 + j]` is pixel `i` along x and `j` along y. Close answers
//! `{"closed":true}`. Failures answer `{"error":code}` plus an optional
//! `detail`, and the session keeps going.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, ToSocketAddrs};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::env::{EnvConfig, Observation, StepInfo, WipingEnv};
use crate::error::Result;
use crate::sde::WipeAction;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Reset { seed: u64 },
    Step { action: [f64; 4] },
    Close,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transition {
    pub obs: Vec<u8>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

fn obs_bits(obs: &Observation) -> Vec<u8> {
    obs.as_flat().iter().map(|&v| u8::from(v > 0.0)).collect()
}

fn error_line(code: &str, detail: Option<String>) -> String {
    match detail {
        Some(d) => json!({ "error": code, "detail": d }).to_string(),
        None => json!({ "error": code }).to_string(),
    }
}

/// One client's environment.
pub struct Session {
    config: EnvConfig,
    env: Option<WipingEnv>,
    closed: bool,
}

impl Session {
    pub fn new(config: EnvConfig) -> Self {
        Self {
            config,
            env: None,
            closed: false,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Answers one request line.
    pub fn handle_line(&mut self, line: &str) -> String {
        let request: Request = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => return error_line("malformed_request", Some(e.to_string())),
        };
        match request {
            Request::Reset { seed } => match WipingEnv::reset(self.config.clone(), seed) {
                Ok((env, obs)) => {
                    let t = Transition {
                        obs: obs_bits(&obs),
                        reward: 0.0,
                        done: env.is_done(),
                        info: env.info(),
                    };
                    self.env = Some(env);
                    serde_json::to_string(&t).expect("transition serialises")
                }
                Err(e) => error_line("reset_failed", Some(e.to_string())),
            },
            Request::Step { action } => {
                let Some(env) = self.env.as_mut() else {
                    return error_line("not_reset", Some("send a reset before stepping".into()));
                };
                if env.is_done() {
                    return error_line("episode_done", None);
                }
                if action.iter().any(|v| !v.is_finite()) {
                    return error_line("invalid_action", Some("action entries must be finite".into()));
                }
                match env.step(WipeAction::from_array(action)) {
                    Ok(r) => serde_json::to_string(&Transition {
                        obs: obs_bits(&r.observation),
                        reward: r.reward,
                        done: r.done,
                        info: r.info,
                    })
                    .expect("transition serialises"),
                    Err(e) => error_line("step_failed", Some(e.to_string())),
                }
            }
            Request::Close => {
                self.closed = true;
                self.env = None;
                json!({ "closed": true }).to_string()
            }
        }
    }
}

/// Serves one session until `close` or end of input.
pub fn serve<R: BufRead, W: Write>(config: &EnvConfig, reader: R, mut writer: W) -> Result<()> {
    config.validate()?;
    let mut session = Session::new(config.clone());
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = session.handle_line(&line);
        writer.write_all(reply.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        if session.is_closed() {
            break;
        }
    }
    Ok(())
}

pub fn serve_stdio(config: &EnvConfig) -> Result<()> {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    serve(config, stdin.lock(), BufWriter::new(stdout.lock()))
}

/// Accepts connections on `listener`, one thread and one session each. Stops
/// after `max_connections` when given, otherwise runs forever.
pub fn serve_listener(config: &EnvConfig, listener: TcpListener, max_connections: Option<usize>) -> Result<()> {
    config.validate()?;
    std::thread::scope(|scope| {
        for (n, stream) in listener.incoming().enumerate() {
            let stream = stream?;
            let config = config.clone();
            scope.spawn(move || {
                let peer = stream.peer_addr().ok();
                let reader = match stream.try_clone() {
                    Ok(s) => BufReader::new(s),
                    Err(e) => {
                        log::error!("connection setup failed: {e}");
                        return;
                    }
                };
                if let Err(e) = serve(&config, reader, stream) {
                    log::warn!("session {peer:?} ended with error: {e}");
                }
            });
            if max_connections.is_some_and(|m| n + 1 >= m) {
                break;
            }
        }
        Ok(())
    })
}

pub fn serve_tcp(config: &EnvConfig, addr: impl ToSocketAddrs) -> Result<()> {
    let listener = TcpListener::bind(addr)?;
    log::info!("serving on {}", listener.local_addr()?);
    serve_listener(config, listener, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(lines: &str) -> Vec<serde_json::Value> {
        let mut out = Vec::new();
        serve(&EnvConfig::default(), lines.as_bytes(), &mut out).unwrap();
        String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }

    #[test]
    fn step_before_reset() {
        let r = run("{\"cmd\":\"step\",\"action\":[0.5,0.5,0,0.1]}\n");
        assert_eq!(r[0]["error"], "not_reset");
    }

    #[test]
    fn malformed_lines_keep_session_alive() {
        let r = run("not json\n{\"cmd\":\"jump\"}\n{\"cmd\":\"reset\",\"seed\":1}\n");
        assert_eq!(r.len(), 3);
        assert_eq!(r[0]["error"], "malformed_request");
        assert_eq!(r[1]["error"], "malformed_request");
        assert_eq!(r[2]["obs"].as_array().unwrap().len(), 4096);
    }

    #[test]
    fn close_ends_session() {
        let r = run("{\"cmd\":\"close\"}\n{\"cmd\":\"reset\",\"seed\":1}\n");
        assert_eq!(r.len(), 1);
        assert_eq!(r[0]["closed"], true);
    }

    #[test]
    fn clamped_flag() {
        let r = run("{\"cmd\":\"reset\",\"seed\":3}\n{\"cmd\":\"step\",\"action\":[2.0,0.5,0,0.1]}\n");
        assert_eq!(r[1]["info"]["clamped"], true);
    }
}
