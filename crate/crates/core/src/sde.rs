//! Jump-diffusion model of crumb and spill particles under a moving wiper.
//!
//! The table state is an empirical cloud of equally weighted particles. A
//! particle that sits on the table, has not been absorbed yet and lies inside
//! the wiper footprint is carried along with the wiper (drift), jittered by a
//! Brownian term aligned with the wiper frame, and absorbed by a Poisson
//! clock of intensity `lambda`. Everything else is frozen.
//!
//! The equations are integrated with Euler–Maruyama.

use std::f64::consts::TAU;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular table `[0, width] x [0, height]` in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableGeometry {
    pub width_m: f64,
    pub height_m: f64,
}

impl Default for TableGeometry {
    fn default() -> Self {
        Self {
            width_m: 1.0,
            height_m: 1.0,
        }
    }
}

impl TableGeometry {
    pub fn new(width_m: f64, height_m: f64) -> Result<Self> {
        let table = Self { width_m, height_m };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_m > 0.0 && self.width_m.is_finite()) {
            return Err(Error::config("table.width_m must be positive"));
        }
        if !(self.height_m > 0.0 && self.height_m.is_finite()) {
            return Err(Error::config("table.height_m must be positive"));
        }
        Ok(())
    }

    /// Closed-set membership.
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.width_m).contains(&x) && (0.0..=self.height_m).contains(&y)
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * self.width_m, 0.5 * self.height_m]
    }

    /// Upper bound `L = min(w, h)` on the wipe length.
    pub fn max_wipe_length(&self) -> f64 {
        self.width_m.min(self.height_m)
    }
}

/// Empirical measure of the table state.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParticleCloud {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub wiped: Vec<bool>,
}

impl ParticleCloud {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::config("particle coordinate arrays differ in length"));
        }
        let wiped = vec![false; xs.len()];
        Ok(Self { xs, ys, wiped })
    }

    pub fn from_points(points: &[[f64; 2]]) -> Self {
        Self {
            xs: points.iter().map(|p| p[0]).collect(),
            ys: points.iter().map(|p| p[1]).collect(),
            wiped: vec![false; points.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn position(&self, i: usize) -> [f64; 2] {
        [self.xs[i], self.ys[i]]
    }

    pub fn wiped_count(&self) -> usize {
        self.wiped.iter().filter(|&&w| w).count()
    }

    /// Unwiped particles outside the table.
    pub fn off_table_count(&self, table: &TableGeometry) -> usize {
        self.dirty()
            .filter(|&(x, y)| !table.contains(x, y))
            .count()
    }

    /// Positions of particles that have not been absorbed.
    pub fn dirty(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.len())
            .filter(move |&i| !self.wiped[i])
            .map(move |i| (self.xs[i], self.ys[i]))
    }

    /// Unwiped particles that are still on the table.
    pub fn dirty_on_table<'a>(
        &'a self,
        table: &'a TableGeometry,
    ) -> impl Iterator<Item = (f64, f64)> + 'a {
        self.dirty().filter(move |&(x, y)| table.contains(x, y))
    }
}

/// One high-level wipe: start of the footprint centre, heading and length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WipeAction {
    pub px: f64,
    pub py: f64,
    pub theta: f64,
    pub length: f64,
}

impl WipeAction {
    pub fn new(px: f64, py: f64, theta: f64, length: f64) -> Self {
        Self {
            px,
            py,
            theta,
            length,
        }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.px, self.py, self.theta, self.length]
    }

    pub fn duration(&self, speed: f64) -> f64 {
        self.length / speed
    }

    pub fn direction(&self) -> [f64; 2] {
        [self.theta.cos(), self.theta.sin()]
    }

    pub fn end_point(&self) -> [f64; 2] {
        let [c, s] = self.direction();
        [self.px + self.length * c, self.py + self.length * s]
    }

    pub fn is_within(&self, table: &TableGeometry) -> bool {
        self.px.is_finite()
            && self.py.is_finite()
            && self.theta.is_finite()
            && self.length.is_finite()
            && table.contains(self.px, self.py)
            && (0.0..TAU).contains(&self.theta)
            && (0.0..=table.max_wipe_length()).contains(&self.length)
    }

    /// Projects the action onto the action box. The heading is wrapped into
    /// `[0, 2pi)`; non-finite components fall back to zero. The flag reports
    /// whether anything changed.
    pub fn clamp_to(&self, table: &TableGeometry) -> (WipeAction, bool) {
        let finite_or_zero = |v: f64| if v.is_finite() { v } else { 0.0 };
        let px = finite_or_zero(self.px).clamp(0.0, table.width_m);
        let py = finite_or_zero(self.py).clamp(0.0, table.height_m);
        let mut theta = finite_or_zero(self.theta).rem_euclid(TAU);
        if theta >= TAU {
            theta = 0.0;
        }
        let length = finite_or_zero(self.length).clamp(0.0, table.max_wipe_length());
        let clamped = WipeAction::new(px, py, theta, length);
        let changed = clamped.to_array() != self.to_array();
        (clamped, changed)
    }
}

/// Parameters of the jump-diffusion and of its discretisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdeParams {
    pub alpha: f64,
    pub lambda: f64,
    pub speed: f64,
    pub dt: f64,
    pub wiper_long_m: f64,
    pub wiper_short_m: f64,
}

impl Default for SdeParams {
    fn default() -> Self {
        Self {
            alpha: 1e-2,
            lambda: 0.0,
            speed: 0.15,
            dt: 0.1,
            wiper_long_m: 0.30,
            wiper_short_m: 0.05,
        }
    }
}

impl SdeParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.alpha >= 0.0, "sde.alpha must be >= 0"),
            (self.lambda >= 0.0, "sde.lambda must be >= 0"),
            (self.speed > 0.0, "sde.speed must be > 0"),
            (self.dt > 0.0, "sde.dt must be > 0"),
            (self.wiper_long_m > 0.0, "sde.wiper_long_m must be > 0"),
            (self.wiper_short_m > 0.0, "sde.wiper_short_m must be > 0"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::config(msg));
            }
        }
        if self.dt * self.speed > self.wiper_short_m * (1.0 + 1e-12) {
            return Err(Error::config(
                "sde.dt too large: the wiper would skip particles (dt * speed > wiper_short_m)",
            ));
        }
        Ok(())
    }

    /// Number of Euler steps for a wipe of the given duration. The last step
    /// may be shorter than `dt`.
    pub fn step_count(&self, duration: f64) -> usize {
        if duration <= 0.0 {
            return 0;
        }
        (duration / self.dt - 1e-9).ceil().max(1.0) as usize
    }
}

/// Oriented rectangle covered by the wiper. The long edge is perpendicular to
/// the direction of travel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WiperFootprint {
    pub center: [f64; 2],
    pub theta: f64,
    pub half_long: f64,
    pub half_short: f64,
}

impl WiperFootprint {
    /// Closed membership of the rectangle (table not considered).
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.theta.sin_cos();
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let along = dx * c + dy * s;
        let across = -dx * s + dy * c;
        along.abs() <= self.half_short && across.abs() <= self.half_long
    }

    /// Corner points, counter-clockwise.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.theta.sin_cos();
        let along = [c * self.half_short, s * self.half_short];
        let across = [-s * self.half_long, c * self.half_long];
        let [cx, cy] = self.center;
        [
            [cx + along[0] + across[0], cy + along[1] + across[1]],
            [cx - along[0] + across[0], cy - along[1] + across[1]],
            [cx - along[0] - across[0], cy - along[1] - across[1]],
            [cx + along[0] - across[0], cy + along[1] - across[1]],
        ]
    }
}

/// Footprint of the wiper `t` seconds into the wipe.
pub fn wiper_footprint_at(action: &WipeAction, t: f64, params: &SdeParams) -> Result<WiperFootprint> {
    let duration = action.duration(params.speed);
    if !(0.0..=duration).contains(&t) {
        return Err(Error::TimeOutOfRange { t, duration });
    }
    let [c, s] = action.direction();
    Ok(WiperFootprint {
        center: [
            action.px + t * params.speed * c,
            action.py + t * params.speed * s,
        ],
        theta: action.theta,
        half_long: 0.5 * params.wiper_long_m,
        half_short: 0.5 * params.wiper_short_m,
    })
}

/// Spatial part of the contact indicator: inside the footprint and on the table.
#[inline]
pub fn particle_in_contact(p: [f64; 2], fp: &WiperFootprint, table: &TableGeometry) -> bool {
    table.contains(p[0], p[1]) && fp.contains(p[0], p[1])
}

/// One Euler–Maruyama step of length `params.dt`.
pub fn em_step<R: Rng + ?Sized>(
    cloud: &mut ParticleCloud,
    fp: &WiperFootprint,
    table: &TableGeometry,
    params: &SdeParams,
    rng: &mut R,
) {
    em_step_for(cloud, fp, table, params, params.dt, rng)
}

/// Euler–Maruyama step of arbitrary length `h`.
///
/// Random numbers are consumed only for particles in contact, three per
/// particle in index order (two normals, one uniform), so the stream layout is
/// independent of `alpha` and `lambda`.
pub fn em_step_for<R: Rng + ?Sized>(
    cloud: &mut ParticleCloud,
    fp: &WiperFootprint,
    table: &TableGeometry,
    params: &SdeParams,
    h: f64,
    rng: &mut R,
) {
    let (s, c) = fp.theta.sin_cos();
    let drift = params.speed * h;
    let diffusion = params.alpha * params.speed * h.sqrt();
    let absorb_prob = -(-params.lambda * h).exp_m1();

    for i in 0..cloud.len() {
        if cloud.wiped[i] {
            continue;
        }
        let (x, y) = (cloud.xs[i], cloud.ys[i]);
        if !particle_in_contact([x, y], fp, table) {
            continue;
        }
        let xi_along: f64 = rng.sample(StandardNormal);
        let xi_across: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.random();

        cloud.xs[i] = x + drift * c + diffusion * (c * xi_along - s * xi_across);
        cloud.ys[i] = y + drift * s + diffusion * (s * xi_along + c * xi_across);
        if u < absorb_prob {
            cloud.wiped[i] = true;
        }
    }
}

/// Runs a full wipe and returns the footprint at the start of every step.
pub fn simulate_wipe<R: Rng + ?Sized>(
    cloud: &mut ParticleCloud,
    action: &WipeAction,
    table: &TableGeometry,
    params: &SdeParams,
    rng: &mut R,
) -> Vec<WiperFootprint> {
    simulate_wipe_with(cloud, action, table, params, rng, |_, _, _| {})
}

/// Like [`simulate_wipe`], calling `after_step(k, footprint, cloud)` after
/// every step.
pub fn simulate_wipe_with<R, F>(
    cloud: &mut ParticleCloud,
    action: &WipeAction,
    table: &TableGeometry,
    params: &SdeParams,
    rng: &mut R,
    mut after_step: F,
) -> Vec<WiperFootprint>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &WiperFootprint, &ParticleCloud),
{
    let duration = action.duration(params.speed);
    let steps = params.step_count(duration);
    let mut trace = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = (k as f64 * params.dt).min(duration);
        let h = (duration - t).min(params.dt);
        if h <= 0.0 {
            break;
        }
        let fp = wiper_footprint_at(action, t, params).expect("step time within wipe interval");
        em_step_for(cloud, &fp, table, params, h, rng);
        after_step(k, &fp, cloud);
        trace.push(fp);
    }
    trace
}

/// One Gaussian bump of the initial particle distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mean: [f64; 2],
    pub std: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialStateSpec {
    pub components: Vec<GaussianComponent>,
    #[serde(default = "default_particle_count")]
    pub particle_count: usize,
}

pub(crate) fn default_particle_count() -> usize {
    1000
}

impl InitialStateSpec {
    pub fn single(mean: [f64; 2], std: f64, particle_count: usize) -> Self {
        Self {
            components: vec![GaussianComponent {
                mean,
                std,
                weight: 1.0,
            }],
            particle_count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::config("init.components must not be empty"));
        }
        if self.particle_count == 0 {
            return Err(Error::config("init.particle_count must be >= 1"));
        }
        let mut total = 0.0;
        for c in &self.components {
            if !(c.weight >= 0.0) {
                return Err(Error::config("init.components.weight must be >= 0"));
            }
            if !(c.std >= 0.0 && c.std.is_finite()) {
                return Err(Error::config("init.components.std must be finite and >= 0"));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config("init.components weights must sum to 1"));
        }
        Ok(())
    }
}

const MAX_REJECTIONS: usize = 100_000;

/// Draws the initial cloud from a Gaussian mixture, rejection-sampling points
/// that fall off the table.
pub fn sample_initial_cloud<R: Rng + ?Sized>(
    spec: &InitialStateSpec,
    table: &TableGeometry,
    rng: &mut R,
) -> Result<ParticleCloud> {
    sample_labeled(spec, table, rng).map(|(cloud, _)| cloud)
}

pub(crate) fn sample_labeled<R: Rng + ?Sized>(
    spec: &InitialStateSpec,
    table: &TableGeometry,
    rng: &mut R,
) -> Result<(ParticleCloud, Vec<usize>)> {
    spec.validate()?;
    let picker = WeightedIndex::new(spec.components.iter().map(|c| c.weight))
        .map_err(|e| Error::config(format!("init.components weights: {e}")))?;
    let normals: Vec<(Normal<f64>, Normal<f64>)> = spec
        .components
        .iter()
        .map(|c| {
            let nx = Normal::new(c.mean[0], c.std);
            let ny = Normal::new(c.mean[1], c.std);
            match (nx, ny) {
                (Ok(nx), Ok(ny)) => Ok((nx, ny)),
                _ => Err(Error::config("init.components has an invalid mean or std")),
            }
        })
        .collect::<Result<_>>()?;

    let n = spec.particle_count;
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k = picker.sample(rng);
        let (nx, ny) = &normals[k];
        let mut attempts = 0;
        loop {
            let x = nx.sample(rng);
            let y = ny.sample(rng);
            if table.contains(x, y) {
                xs.push(x);
                ys.push(y);
                break;
            }
            attempts += 1;
            if attempts >= MAX_REJECTIONS {
                return Err(Error::config(format!(
                    "init.components[{k}] rarely produces on-table samples"
                )));
            }
        }
        labels.push(k);
    }
    Ok((ParticleCloud::new(xs, ys)?, labels))
}

/// Per-episode initial distribution: either a fixed mixture or a family of
/// mixtures drawn afresh at every reset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitDistribution {
    Fixed(InitialStateSpec),
    Randomized {
        components_min: usize,
        components_max: usize,
        mean_range: [f64; 2],
        std_range: [f64; 2],
        #[serde(default = "default_particle_count")]
        particle_count: usize,
    },
}

impl Default for InitDistribution {
    fn default() -> Self {
        Self::training()
    }
}

impl InitDistribution {
    /// Single Gaussian with random mean in `[0.2, 0.8]^2` and std in
    /// `[0.05, 0.15]` (fractions of the table size for the mean).
    pub fn training() -> Self {
        Self::Randomized {
            components_min: 1,
            components_max: 1,
            mean_range: [0.2, 0.8],
            std_range: [0.05, 0.15],
            particle_count: default_particle_count(),
        }
    }

    /// Two or three Gaussians, for generalisation tests.
    pub fn generalization() -> Self {
        Self::Randomized {
            components_min: 2,
            components_max: 3,
            mean_range: [0.2, 0.8],
            std_range: [0.05, 0.15],
            particle_count: default_particle_count(),
        }
    }

    pub fn particle_count(&self) -> usize {
        match self {
            Self::Fixed(spec) => spec.particle_count,
            Self::Randomized { particle_count, .. } => *particle_count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Fixed(spec) => spec.validate(),
            Self::Randomized {
                components_min,
                components_max,
                mean_range,
                std_range,
                particle_count,
            } => {
                if *components_min == 0 || components_min > components_max {
                    return Err(Error::config(
                        "init.components_min must be >= 1 and <= components_max",
                    ));
                }
                if !(0.0 <= mean_range[0] && mean_range[0] <= mean_range[1] && mean_range[1] <= 1.0) {
                    return Err(Error::config("init.mean_range must lie within [0, 1]"));
                }
                if !(0.0 <= std_range[0] && std_range[0] <= std_range[1]) {
                    return Err(Error::config("init.std_range must be non-negative and ordered"));
                }
                if *particle_count == 0 {
                    return Err(Error::config("init.particle_count must be >= 1"));
                }
                Ok(())
            }
        }
    }

    /// Draws the mixture for one episode. Means are scaled by the table size.
    pub fn realize<R: Rng + ?Sized>(&self, table: &TableGeometry, rng: &mut R) -> InitialStateSpec {
        match self {
            Self::Fixed(spec) => spec.clone(),
            Self::Randomized {
                components_min,
                components_max,
                mean_range,
                std_range,
                particle_count,
            } => {
                let n = rng.random_range(*components_min..=*components_max);
                let weight = 1.0 / n as f64;
                let components = (0..n)
                    .map(|_| {
                        let mx = uniform(rng, mean_range[0], mean_range[1]) * table.width_m;
                        let my = uniform(rng, mean_range[0], mean_range[1]) * table.height_m;
                        let std = uniform(rng, std_range[0], std_range[1]);
                        GaussianComponent {
                            mean: [mx, my],
                            std,
                            weight,
                        }
                    })
                    .collect();
                InitialStateSpec {
                    components,
                    particle_count: *particle_count,
                }
            }
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}
