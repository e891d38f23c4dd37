use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};

use serde_json::Value;
use wipeplan::env::{EnvConfig, TaskKind, WipingEnv};
use wipeplan::protocol::{serve, serve_listener, Session};
use wipeplan::sde::WipeAction;

fn replies(config: &EnvConfig, input: &str) -> Vec<Value> {
    let mut out = Vec::new();
    serve(config, input.as_bytes(), &mut out).unwrap();
    String::from_utf8(out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn reset_twice_gives_identical_observations() {
    let r = replies(&EnvConfig::default(), "{\"cmd\":\"reset\",\"seed\":8}\n{\"cmd\":\"reset\",\"seed\":8}\n");
    assert_eq!(r[0], r[1]);
    assert_eq!(r[0]["reward"], 0.0);
    assert_eq!(r[0]["info"]["step"], 0);
}

#[test]
fn server_matches_in_process_environment() {
    let config = EnvConfig::preset(TaskKind::CleanSpills);
    let actions = [[0.2, 0.3, 0.4, 0.5], [0.9, 0.1, 2.0, 0.7], [0.5, 0.5, -1.0, 0.2]];
    let mut input = String::from("{\"cmd\":\"reset\",\"seed\":21}\n");
    for a in actions {
        input.push_str(&format!("{{\"cmd\":\"step\",\"action\":[{},{},{},{}]}}\n", a[0], a[1], a[2], a[3]));
    }
    let r = replies(&config, &input);
    let (mut env, obs) = WipingEnv::reset(config, 21).unwrap();
    let bits = |o: &wipeplan::env::Observation| -> Vec<Value> {
        o.as_flat().iter().map(|&v| Value::from(u8::from(v > 0.0))).collect()
    };
    assert_eq!(r[0]["obs"].as_array().unwrap(), &bits(&obs));
    for (k, a) in actions.iter().enumerate() {
        if env.is_done() {
            break;
        }
        let s = env.step(WipeAction::from_array(*a)).unwrap();
        assert_eq!(r[k + 1]["reward"].as_f64().unwrap(), s.reward);
        assert_eq!(r[k + 1]["done"].as_bool().unwrap(), s.done);
        assert_eq!(r[k + 1]["obs"].as_array().unwrap(), &bits(&s.observation));
    }
}

#[test]
fn stepping_a_finished_episode_is_refused() {
    let config = EnvConfig {
        max_steps: 1,
        ..EnvConfig::default()
    };
    let r = replies(
        &config,
        "{\"cmd\":\"reset\",\"seed\":1}\n{\"cmd\":\"step\",\"action\":[0.5,0.5,0,0.1]}\n{\"cmd\":\"step\",\"action\":[0.5,0.5,0,0.1]}\n{\"cmd\":\"reset\",\"seed\":1}\n",
    );
    assert_eq!(r[1]["done"], true);
    assert_eq!(r[2]["error"], "episode_done");
    assert!(r[3]["obs"].is_array());
}

#[test]
fn bad_requests_get_error_codes() {
    let mut s = Session::new(EnvConfig::default());
    let code = |v: String| serde_json::from_str::<Value>(&v).unwrap()["error"].clone();
    assert_eq!(code(s.handle_line("{\"cmd\":\"step\",\"action\":[0,0,0,0]}")), "not_reset");
    assert_eq!(code(s.handle_line("{\"cmd\":\"reset\"}")), "malformed_request");
    assert_eq!(code(s.handle_line("{\"cmd\":\"reset\",\"seed\":1,\"extra\":2}")), "malformed_request");
    assert_eq!(code(s.handle_line("{\"cmd\":\"step\",\"action\":[0,0,0]}")), "malformed_request");
    s.handle_line("{\"cmd\":\"reset\",\"seed\":1}");
    assert_eq!(code(s.handle_line("{\"cmd\":\"step\",\"action\":[0,0,0,1e999]}")), "malformed_request");
    let ok: Value = serde_json::from_str(&s.handle_line("{\"cmd\":\"step\",\"action\":[5,5,0,0.1]}")).unwrap();
    assert_eq!(ok["info"]["clamped"], true);
    assert!(!s.is_closed());
}

#[test]
fn tcp_sessions_are_independent() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = std::thread::spawn(move || serve_listener(&EnvConfig::default(), listener, Some(2)));
    let talk = move |seed: u64| {
        let mut conn = TcpStream::connect(addr).unwrap();
        let mut reader = BufReader::new(conn.try_clone().unwrap());
        let mut line = String::new();
        writeln!(conn, "{{\"cmd\":\"reset\",\"seed\":{seed}}}").unwrap();
        reader.read_line(&mut line).unwrap();
        let reset: Value = serde_json::from_str(&line).unwrap();
        line.clear();
        writeln!(conn, "{{\"cmd\":\"close\"}}").unwrap();
        reader.read_line(&mut line).unwrap();
        assert_eq!(serde_json::from_str::<Value>(&line).unwrap()["closed"], true);
        reset
    };
    let a = std::thread::spawn(move || talk(1));
    let b = talk(2);
    let a = a.join().unwrap();
    server.join().unwrap().unwrap();
    let (env1, _) = WipingEnv::reset(EnvConfig::default(), 1).unwrap();
    assert_eq!(a["info"]["particle_count"], env1.info().particle_count);
    assert_ne!(a["obs"], b["obs"]);
}
