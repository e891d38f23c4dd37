//! Subcommands behind the `wipe` binary. Every artifact records the config
//! hash and seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Matrix3;
use serde::Serialize;

use crate::baseline::{evaluate_outcomes, EvalReport, PolicyKind};
use crate::config::RunConfig;
use crate::env::{StepInfo, WipingEnv};
use crate::error::{Error, Result};
use crate::mask::{cloud_from_mask, density_pgm, dilate, read_mask, write_observation_pgm};
use crate::protocol;
use crate::rng::{seeded_rng, SimRng};
use crate::sde::{sample_initial_cloud, simulate_wipe_with, ParticleCloud, WipeAction};
use crate::trajopt::{plan_wipe, PlanArtifact, PlanRequest, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Simulate,
    Rollout,
    Evaluate,
    Plan,
    ServeEnv,
}

impl FromStr for Subcommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "simulate" => Self::Simulate,
            "rollout" => Self::Rollout,
            "evaluate" => Self::Evaluate,
            "plan" => Self::Plan,
            "serve-env" => Self::ServeEnv,
            other => return Err(Error::config(format!("unknown subcommand `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

/// Exit status for an error: 1 for invalid input, 2 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        _ => 2,
    }
}

fn provenance_line(config: &RunConfig) -> String {
    format!("# config_hash={} seed={}\n", config.hash(), config.seed)
}

fn prepare_output(config: &RunConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&config.output_dir);
    std::fs::create_dir_all(&dir)?;
    let value: serde_json::Value = serde_json::from_str(&config.canonical_json())?;
    write_json(&dir.join("config.json"), &value)?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn run_subcommand(config: &RunConfig, cmd: Subcommand) -> Result<RunOutcome> {
    config.validate()?;
    match cmd {
        Subcommand::Simulate => simulate(config),
        Subcommand::Rollout => rollout(config),
        Subcommand::Evaluate => evaluate(config),
        Subcommand::Plan => plan(config),
        Subcommand::ServeEnv => {
            match config.serve.port {
                Some(port) => protocol::serve_tcp(&config.env, (config.serve.host.as_str(), port))?,
                None => protocol::serve_stdio(&config.env)?,
            }
            Ok(RunOutcome::default())
        }
    }
}

/// Initial cloud for `simulate`: mask, then fixed mixture, then `env.init`.
pub fn initial_cloud(config: &RunConfig, rng: &mut SimRng) -> Result<ParticleCloud> {
    let table = &config.env.table;
    if let Some(m) = &config.simulate.mask {
        let mut mask = read_mask(Path::new(&m.path))?;
        if m.dilate {
            mask = dilate(&mask, 2);
        }
        return cloud_from_mask(&mask, table, m.particle_count, rng);
    }
    let spec = match &config.simulate.initial {
        Some(s) => s.clone(),
        None => config.env.init.realize(table, rng),
    };
    sample_initial_cloud(&spec, table, rng)
}

fn push_particles(csv: &mut String, step: usize, time: f64, cloud: &ParticleCloud) {
    for i in 0..cloud.len() {
        let [x, y] = cloud.position(i);
        let _ = writeln!(csv, "{step},{time},{i},{x},{y},{}", u8::from(cloud.wiped[i]));
    }
}

fn simulate(config: &RunConfig) -> Result<RunOutcome> {
    let dir = prepare_output(config)?;
    let table = config.env.table;
    let params = config.env.sde;
    let mut rng = seeded_rng(config.seed);
    let mut cloud = initial_cloud(config, &mut rng)?;
    let (action, clamped) = WipeAction::from_array(config.simulate.action).clamp_to(&table);
    if clamped {
        log::warn!("simulate.action was clamped to the action box");
    }

    let mut csv = provenance_line(config);
    csv.push_str("step,time,particle,x,y,wiped\n");
    push_particles(&mut csv, 0, 0.0, &cloud);
    let mut frames = vec![crate::env::render_observation(&cloud, &table)];
    let duration = action.duration(params.speed);
    let initial_count = cloud.len();
    let mut monotone = true;
    let mut wiped_before = cloud.wiped.clone();
    simulate_wipe_with(&mut cloud, &action, &table, &params, &mut rng, |k, _, c| {
        let t = ((k + 1) as f64 * params.dt).min(duration);
        push_particles(&mut csv, k + 1, t, c);
        frames.push(crate::env::render_observation(c, &table));
        monotone &= wiped_before.iter().zip(&c.wiped).all(|(b, a)| !*b || *a);
        wiped_before.clone_from(&c.wiped);
    });
    if cloud.len() != initial_count || !monotone {
        return Err(Error::Numeric("particle invariants violated during simulation".into()));
    }

    let mut artifacts = Vec::new();
    let csv_path = dir.join("particles.csv");
    std::fs::write(&csv_path, csv)?;
    artifacts.push(csv_path);
    for (k, obs) in frames.iter().enumerate() {
        let p = dir.join(format!("obs_{k:03}.pgm"));
        write_observation_pgm(obs, &p)?;
        artifacts.push(p);
    }
    if let Some(sigma) = config.simulate.density_sigma_px {
        let p = dir.join("density_final.pgm");
        std::fs::write(&p, density_pgm(&cloud, &table, sigma)?)?;
        artifacts.push(p);
    }
    let summary = format!(
        "simulated {} steps, {} particles, {} wiped, {} off table",
        frames.len() - 1,
        cloud.len(),
        cloud.wiped_count(),
        cloud.off_table_count(&table)
    );
    Ok(RunOutcome { artifacts, summary })
}

#[derive(Serialize)]
struct TranscriptStep {
    step: usize,
    action: Option<[f64; 4]>,
    obs: Vec<u8>,
    reward: f64,
    done: bool,
    info: StepInfo,
}

#[derive(Serialize)]
struct Transcript {
    config_hash: String,
    seed: u64,
    policy: String,
    steps: Vec<TranscriptStep>,
}

fn rollout(config: &RunConfig) -> Result<RunOutcome> {
    let dir = prepare_output(config)?;
    let kind = PolicyKind::parse(&config.policy)?;
    let mut policy = kind.instantiate()?;
    let (mut env, mut obs) = WipingEnv::reset(config.env.clone(), config.seed)?;
    policy.begin_episode(config.seed)?;
    let bits = |o: &crate::env::Observation| o.as_flat().iter().map(|&v| u8::from(v > 0.0)).collect();
    let mut steps = vec![TranscriptStep {
        step: 0,
        action: None,
        obs: bits(&obs),
        reward: 0.0,
        done: env.is_done(),
        info: env.info(),
    }];
    let mut total = 0.0;
    while !env.is_done() {
        let action = policy.act(&obs, env.step_index(), &config.env.table)?;
        let r = env.step(action)?;
        total += r.reward;
        steps.push(TranscriptStep {
            step: env.step_index(),
            action: Some(action.clamp_to(&config.env.table).0.to_array()),
            obs: bits(&r.observation),
            reward: r.reward,
            done: r.done,
            info: r.info,
        });
        obs = r.observation;
    }
    let path = dir.join("rollout.json");
    write_json(
        &path,
        &Transcript {
            config_hash: config.hash(),
            seed: config.seed,
            policy: kind.name(),
            steps,
        },
    )?;
    Ok(RunOutcome {
        artifacts: vec![path],
        summary: format!("{} wipes, return {total:.6}", env.step_index()),
    })
}

fn evaluate(config: &RunConfig) -> Result<RunOutcome> {
    let dir = prepare_output(config)?;
    let kind = PolicyKind::parse(&config.policy)?;
    let outcomes = evaluate_outcomes(&config.env, &kind, config.episodes, config.seed)?;
    let report = EvalReport::from_outcomes(&outcomes);

    let mut csv = provenance_line(config);
    csv.push_str(EvalReport::CSV_HEADER);
    csv.push('\n');
    csv.push_str(&report.csv_row());
    csv.push('\n');
    let report_path = dir.join("eval.csv");
    std::fs::write(&report_path, csv)?;

    let mut per = provenance_line(config);
    per.push_str("seed,wipes,success,off_table_events\n");
    for (k, o) in outcomes.iter().enumerate() {
        let _ = writeln!(
            per,
            "{},{},{},{}",
            config.seed.wrapping_add(k as u64),
            o.wipes,
            u8::from(o.success),
            o.off_table_events
        );
    }
    let episodes_path = dir.join("episodes.csv");
    std::fs::write(&episodes_path, per)?;
    Ok(RunOutcome {
        artifacts: vec![report_path, episodes_path],
        summary: report.summary(&kind.name()),
    })
}

pub fn plan_request(config: &RunConfig) -> Result<PlanRequest> {
    let model = config.load_robot()?;
    let scene = config.load_scene()?;
    let x0 = config.plan_x0(&model);
    let p = &config.plan;
    let r = p.tool_in_table;
    Ok(PlanRequest {
        action: WipeAction::from_array(p.action).clamp_to(&config.env.table).0,
        model,
        scene,
        x0,
        speed: p.speed.unwrap_or(config.env.sde.speed),
        dt: p.dt,
        tool_in_table: Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        ),
        weights: p.weights,
        rotation_mask: p.rotation_mask,
        enforce_joint_limits: p.enforce_joint_limits,
        reference: p.reference,
        solver: p.solver,
    })
}

fn plan(config: &RunConfig) -> Result<RunOutcome> {
    let dir = prepare_output(config)?;
    let request = plan_request(config)?;
    let (spec, result) = plan_wipe(&request)?;
    let artifact = PlanArtifact::new(&spec, &result, &config.hash(), config.seed);
    let path = dir.join("plan.json");
    write_json(&path, &artifact)?;
    if result.status == SolveStatus::Converged && result.max_constraint_violation > 1e-6 {
        return Err(Error::Numeric(format!(
            "converged plan violates constraints by {:.3e}",
            result.max_constraint_violation
        )));
    }
    Ok(RunOutcome {
        artifacts: vec![path],
        summary: format!(
            "{:?} after {} iterations: cost {:.6e}, max violation {:.3e}, terminal error {:.3e} m",
            result.status,
            result.iterations,
            result.cost,
            result.max_constraint_violation,
            artifact.terminal_position_error
        ),
    })
}
