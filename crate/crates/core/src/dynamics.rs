//! Euler-Maruyama integration of the singular-drift particle systems with
//! rejection-and-refine steps, plus ergodic time averages.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::{format_f64, min_distance, min_gap_sorted, Config1D, Config2D, GameParams};
use crate::equilibrium::PotentialSpec;
use crate::error::{Error, Result};
use crate::point::{Coord, Point2};
use crate::rng::fill_normals;
use crate::transforms::{all_h1_h2_1d, all_h1_h2_2d};

/// Smallest admissible distance between two planar particles.
pub const COLLISION_FLOOR: f64 = 1e-9;

/// Number of batches used for batch-means standard errors.
pub const BATCHES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeConfig {
    pub dt: f64,
    #[serde(default = "default_halvings")]
    pub max_halvings: u32,
    #[serde(default)]
    pub burn_in: f64,
    pub horizon: f64,
    pub seed: u64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    /// Refine any step that shrinks a neighbour distance below this fraction
    /// of its old value; `None` refines on state-space violations only.
    #[serde(default = "default_contraction")]
    pub gap_contraction: Option<f64>,
}

fn default_halvings() -> u32 {
    20
}

fn default_stride() -> usize {
    1
}

fn default_contraction() -> Option<f64> {
    Some(GAP_CONTRACTION)
}

impl SdeConfig {
    pub fn new(dt: f64, burn_in: f64, horizon: f64, seed: u64) -> Self {
        SdeConfig {
            dt,
            max_halvings: default_halvings(),
            burn_in,
            horizon,
            seed,
            record_stride: default_stride(),
            gap_contraction: default_contraction(),
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn with_gap_contraction(mut self, ratio: Option<f64>) -> Self {
        self.gap_contraction = ratio;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.burn_in >= 0.0 && self.horizon >= self.burn_in && self.horizon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= burn_in <= horizon, got burn_in = {}, horizon = {}",
                self.burn_in, self.horizon
            )));
        }
        if self.max_halvings > 40 {
            return Err(Error::InvalidConfig(
                "max_halvings must be at most 40".into(),
            ));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidConfig(
                "record_stride must be at least 1".into(),
            ));
        }
        if let Some(r) = self.gap_contraction {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "gap_contraction must lie in (0, 1), got {r}"
                )));
            }
        }
        Ok(())
    }

    fn steps(&self, t: f64) -> u64 {
        (t / self.dt).round() as u64
    }
}

/// Drift field of a particle system.
pub trait Feedback<P>: Sync {
    fn drift(&self, state: &[P], out: &mut [P]);
}

/// Equilibrium drift on the line: `(beta / 2) h1_i - V'(x_i) / 2`.
#[derive(Debug, Clone)]
pub struct DysonFeedback {
    pub beta: f64,
    pub potential: PotentialSpec,
}

impl DysonFeedback {
    pub fn new(params: &GameParams) -> Self {
        DysonFeedback {
            beta: params.beta,
            potential: params.potential.clone(),
        }
    }
}

impl Feedback<f64> for DysonFeedback {
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        let (h1, _) = all_h1_h2_1d(x);
        for ((o, &xi), h) in out.iter_mut().zip(x).zip(h1) {
            *o = 0.5 * self.beta * h - 0.5 * self.potential.grad(xi);
        }
    }
}

/// Equilibrium drift in the plane.
#[derive(Debug, Clone)]
pub struct CoulombFeedback {
    pub beta: f64,
    pub potential: PotentialSpec,
}

impl CoulombFeedback {
    pub fn new(params: &GameParams) -> Self {
        CoulombFeedback {
            beta: params.beta,
            potential: params.potential.clone(),
        }
    }
}

impl Feedback<Point2> for CoulombFeedback {
    fn drift(&self, z: &[Point2], out: &mut [Point2]) {
        let (h1, _) = all_h1_h2_2d(z);
        for ((o, &zi), h) in out.iter_mut().zip(z).zip(h1) {
            *o = h * (0.5 * self.beta) - self.potential.grad_2d(zi) * 0.5;
        }
    }
}

/// A unilateral change of one player's feedback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Perturbation {
    /// Add a constant to the player's drift.
    Additive(f64),
    /// Multiply the player's drift.
    Scale(f64),
    /// Use repulsion `beta + shift` in the player's own feedback.
    BetaShift(f64),
}

/// The equilibrium feedback with player `player` deviating.
#[derive(Debug, Clone)]
pub struct DeviatingFeedback {
    pub base: DysonFeedback,
    pub player: usize,
    pub perturbation: Perturbation,
}

impl Feedback<f64> for DeviatingFeedback {
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        self.base.drift(x, out);
        let i = self.player;
        match self.perturbation {
            Perturbation::Additive(c) => out[i] += c,
            Perturbation::Scale(s) => out[i] *= s,
            Perturbation::BetaShift(d) => {
                let h1 = (out[i] + 0.5 * self.base.potential.grad(x[i])) / (0.5 * self.base.beta);
                out[i] = 0.5 * (self.base.beta + d) * h1 - 0.5 * self.base.potential.grad(x[i]);
            }
        }
    }
}

/// Default smallest ratio of a new nearest-neighbour distance to the old one
/// within a single accepted (sub-)step.
pub const GAP_CONTRACTION: f64 = 0.5;

/// State constraint checked after every proposal.
pub trait Admissible: Coord {
    /// `Some(gap)` when the proposal leaves the state space.
    fn violation(points: &[Self]) -> Option<f64>;

    /// Whether some neighbour distance shrank below `ratio` times its old value.
    fn contracted(old: &[Self], new: &[Self], ratio: f64) -> bool;
}

impl Admissible for f64 {
    fn violation(points: &[f64]) -> Option<f64> {
        let g = min_gap_sorted(points);
        (!(g > 0.0) || points.iter().any(|p| !p.is_finite())).then_some(g)
    }

    fn contracted(old: &[f64], new: &[f64], ratio: f64) -> bool {
        old.windows(2)
            .zip(new.windows(2))
            .any(|(a, b)| b[1] - b[0] < ratio * (a[1] - a[0]))
    }
}

impl Admissible for Point2 {
    fn violation(points: &[Point2]) -> Option<f64> {
        let d = min_distance(points);
        (!(d >= COLLISION_FLOOR) || points.iter().any(|p| !p.is_finite())).then_some(d)
    }

    fn contracted(old: &[Point2], new: &[Point2], ratio: f64) -> bool {
        let r2 = ratio * ratio;
        for k in 0..old.len() {
            for l in k + 1..old.len() {
                if (new[k] - new[l]).norm_sq() < r2 * (old[k] - old[l]).norm_sq() {
                    return true;
                }
            }
        }
        false
    }
}

/// Address of the bridge normals used when a step has to be refined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeKey {
    pub seed: u64,
    pub step: u64,
    pub max_halvings: u32,
    pub gap_contraction: Option<f64>,
}

impl Default for BridgeKey {
    fn default() -> Self {
        BridgeKey {
            seed: 0,
            step: 0,
            max_halvings: default_halvings(),
            gap_contraction: default_contraction(),
        }
    }
}

struct Stepper<'a, P, F> {
    feedback: &'a F,
    amplitude: f64,
    key: BridgeKey,
    drift: Vec<P>,
    proposal: Vec<P>,
    worst_gap: f64,
    refined: bool,
}

type Visit<'v, P> = dyn FnMut(&[P], &[P], f64) + 'v;

impl<'a, P: Admissible, F: Feedback<P>> Stepper<'a, P, F> {
    fn new(feedback: &'a F, amplitude: f64, key: BridgeKey, n: usize) -> Self {
        Stepper {
            feedback,
            amplitude,
            key,
            drift: vec![P::zero(); n],
            proposal: vec![P::zero(); n],
            worst_gap: f64::INFINITY,
            refined: false,
        }
    }

    /// Advance `state` over `dt` with Brownian increments `dw`. A proposal
    /// that leaves the state space, or shrinks a neighbour distance by more
    /// than the key's contraction ratio, is replaced by two half steps whose
    /// increments come from a Brownian bridge draw. `visit` sees the state,
    /// its drift and the duration of every accepted sub-step.
    fn advance(
        &mut self,
        state: &mut [P],
        dt: f64,
        dw: &[f64],
        depth: u32,
        path: u64,
        visit: &mut Visit<'_, P>,
    ) -> std::result::Result<(), u32> {
        self.feedback.drift(state, &mut self.drift);
        for (k, p) in self.proposal.iter_mut().enumerate() {
            let noise = P::from_slice(&dw[k * P::DIM..(k + 1) * P::DIM]);
            *p = state[k] + self.drift[k] * dt + noise * self.amplitude;
        }
        let violation = P::violation(&self.proposal);
        let exhausted = depth >= self.key.max_halvings;
        if violation.is_none()
            && (exhausted
                || !self
                    .key
                    .gap_contraction
                    .is_some_and(|r| P::contracted(state, &self.proposal, r)))
        {
            visit(state, &self.drift, dt);
            state.copy_from_slice(&self.proposal);
            return Ok(());
        }
        if let Some(gap) = violation {
            self.worst_gap = self.worst_gap.min(gap);
            if exhausted {
                return Err(depth);
            }
        }
        self.refined = true;
        let mut z = vec![0.0; dw.len()];
        fill_normals(
            self.key.seed,
            &[self.key.step, u64::from(depth) + 1, path],
            &mut z,
        );
        let half = 0.5 * dt.sqrt();
        let first: Vec<f64> = dw.iter().zip(&z).map(|(w, z)| 0.5 * w + half * z).collect();
        let second: Vec<f64> = dw.iter().zip(&z).map(|(w, z)| 0.5 * w - half * z).collect();
        self.advance(state, 0.5 * dt, &first, depth + 1, 2 * path, visit)?;
        self.advance(state, 0.5 * dt, &second, depth + 1, 2 * path + 1, visit)
    }
}

fn step_generic<P: Admissible, F: Feedback<P>>(
    state: &mut [P],
    feedback: &F,
    amplitude: f64,
    dt: f64,
    noise: &[f64],
    key: BridgeKey,
    time: f64,
) -> Result<()> {
    let dw: Vec<f64> = noise.iter().map(|z| z * dt.sqrt()).collect();
    let mut stepper = Stepper::new(feedback, amplitude, key, state.len());
    stepper
        .advance(state, dt, &dw, 0, 0, &mut |_, _, _| {})
        .map_err(|halvings| Error::Step {
            time,
            halvings,
            gap: stepper.worst_gap,
        })
}

fn noise_amplitude(params: &GameParams, n: usize) -> f64 {
    params.sigma / ((n - 1) as f64).sqrt()
}

/// One Euler-Maruyama step of the Dyson dynamics driven by `noise` (`N`
/// standard normals).
pub fn step_dyson_1d(
    state: &Config1D,
    params: &GameParams,
    dt: f64,
    noise: &[f64],
    key: BridgeKey,
) -> Result<Config1D> {
    let n = state.len();
    if noise.len() != n {
        return Err(Error::domain(format!(
            "expected {n} normals, got {}",
            noise.len()
        )));
    }
    let mut x = state.points().to_vec();
    let fb = DysonFeedback::new(params);
    step_generic(&mut x, &fb, noise_amplitude(params, n), dt, noise, key, 0.0)?;
    Ok(Config1D::new_unchecked(x))
}

/// One Euler-Maruyama step of the planar Coulomb dynamics driven by `noise`
/// (`2N` standard normals, `x` then `y` per particle).
pub fn step_coulomb_2d(
    state: &Config2D,
    params: &GameParams,
    dt: f64,
    noise: &[f64],
    key: BridgeKey,
) -> Result<Config2D> {
    let n = state.len();
    if noise.len() != 2 * n {
        return Err(Error::domain(format!(
            "expected {} normals, got {}",
            2 * n,
            noise.len()
        )));
    }
    let mut z = state.points().to_vec();
    let fb = CoulombFeedback::new(params);
    step_generic(&mut z, &fb, noise_amplitude(params, n), dt, noise, key, 0.0)?;
    Ok(Config2D::new_unchecked(z))
}

/// Running cost `f(state, drift)`.
pub type IntegrandFn<'a, P> = dyn Fn(&[P], &[P]) -> f64 + Sync + 'a;

/// A named running integrand `f(state, drift)`.
pub struct Integrand<'a, P> {
    pub name: String,
    pub f: Box<IntegrandFn<'a, P>>,
}

impl<'a, P> Integrand<'a, P> {
    pub fn new(name: impl Into<String>, f: impl Fn(&[P], &[P]) -> f64 + Sync + 'a) -> Self {
        Integrand {
            name: name.into(),
            f: Box::new(f),
        }
    }
}

/// Accumulated time integral of one integrand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    /// Cumulative integral at each recorded time.
    pub recorded: Vec<f64>,
    /// Integral over each of the batches of the averaging window.
    pub batch_sums: Vec<f64>,
    /// Cumulative integral at `burn_in` and at `horizon`.
    pub at_burn_in: f64,
    pub at_horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<C> {
    pub times: Vec<f64>,
    pub states: Vec<C>,
    pub integrals: BTreeMap<String, Accumulator>,
    pub burn_in: f64,
    pub horizon: f64,
    /// Duration of each batch of the averaging window.
    pub batch_durations: Vec<f64>,
    /// Number of steps that needed at least one refinement.
    pub refined_steps: u64,
}

/// Time average over `[burn_in, horizon]` with a batch-means standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub batch_means: Vec<f64>,
}

/// Generic driver: run `feedback` with noise amplitude `amplitude` from
/// `initial`, accumulating `integrands` by left-endpoint quadrature.
pub fn simulate_with<P, F>(
    initial: Vec<P>,
    feedback: &F,
    amplitude: f64,
    sde: &SdeConfig,
    integrands: &[Integrand<'_, P>],
) -> Result<Trajectory<Vec<P>>>
where
    P: Admissible,
    F: Feedback<P>,
{
    sde.validate()?;
    if let Some(gap) = P::violation(&initial) {
        return Err(Error::InvalidConfig(format!(
            "initial state is not admissible (gap {gap:e})"
        )));
    }
    let n = initial.len();
    let total = sde.steps(sde.horizon);
    let burn = sde.steps(sde.burn_in).min(total);
    let window = total - burn;
    let batch_edges: Vec<u64> = (0..=BATCHES)
        .map(|k| burn + (k as u64 * window) / BATCHES as u64)
        .collect();

    let mut state = initial;
    let mut noise = vec![0.0; n * P::DIM];
    let mut cumulative = vec![0.0; integrands.len()];
    let mut batch_sums = vec![vec![0.0; BATCHES]; integrands.len()];
    let mut at_burn = vec![0.0; integrands.len()];
    let mut recorded = vec![Vec::new(); integrands.len()];
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut refined = 0u64;
    let mut batch = 0usize;

    for step in 0..=total {
        if step == burn {
            at_burn.clone_from(&cumulative);
        }
        if step >= burn && (step - burn) % sde.record_stride as u64 == 0 {
            times.push(step as f64 * sde.dt);
            states.push(state.clone());
            for (r, c) in recorded.iter_mut().zip(&cumulative) {
                r.push(*c);
            }
        }
        if step == total {
            break;
        }
        while batch + 1 < BATCHES && step >= batch_edges[batch + 1] {
            batch += 1;
        }
        fill_normals(sde.seed, &[step, 0, 0], &mut noise);
        let key = BridgeKey {
            seed: sde.seed,
            step,
            max_halvings: sde.max_halvings,
            gap_contraction: sde.gap_contraction,
        };
        let dw: Vec<f64> = noise.iter().map(|z| z * sde.dt.sqrt()).collect();
        let mut stepper = Stepper::new(feedback, amplitude, key, n);
        let time = step as f64 * sde.dt;
        let in_window = step >= burn;
        let mut visit = |x: &[P], drift: &[P], h: f64| {
            for (k, ig) in integrands.iter().enumerate() {
                let v = (ig.f)(x, drift) * h;
                cumulative[k] += v;
                if in_window {
                    batch_sums[k][batch] += v;
                }
            }
        };
        stepper
            .advance(&mut state, sde.dt, &dw, 0, 0, &mut visit)
            .map_err(|halvings| Error::Step {
                time,
                halvings,
                gap: stepper.worst_gap,
            })?;
        if stepper.refined {
            refined += 1;
        }
    }

    let integrals = integrands
        .iter()
        .enumerate()
        .map(|(k, ig)| {
            (
                ig.name.clone(),
                Accumulator {
                    recorded: std::mem::take(&mut recorded[k]),
                    batch_sums: std::mem::take(&mut batch_sums[k]),
                    at_burn_in: at_burn[k],
                    at_horizon: cumulative[k],
                },
            )
        })
        .collect();
    let batch_durations = batch_edges
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 * sde.dt)
        .collect();
    Ok(Trajectory {
        times,
        states,
        integrals,
        burn_in: burn as f64 * sde.dt,
        horizon: total as f64 * sde.dt,
        batch_durations,
        refined_steps: refined,
    })
}

/// Run the Dyson dynamics of `params` from `initial`.
pub fn simulate_1d(
    initial: &Config1D,
    params: &GameParams,
    sde: &SdeConfig,
    integrands: &[Integrand<'_, f64>],
) -> Result<Trajectory<Config1D>> {
    params.validate()?;
    let fb = DysonFeedback::new(params);
    let amp = noise_amplitude(params, initial.len());
    let t = simulate_with(initial.points().to_vec(), &fb, amp, sde, integrands)?;
    Ok(t.map_states(Config1D::new_unchecked))
}

/// Run the planar Coulomb dynamics of `params` from `initial`.
pub fn simulate_2d(
    initial: &Config2D,
    params: &GameParams,
    sde: &SdeConfig,
    integrands: &[Integrand<'_, Point2>],
) -> Result<Trajectory<Config2D>> {
    params.validate()?;
    let fb = CoulombFeedback::new(params);
    let amp = noise_amplitude(params, initial.len());
    let t = simulate_with(initial.points().to_vec(), &fb, amp, sde, integrands)?;
    Ok(t.map_states(Config2D::new_unchecked))
}

impl<C> Trajectory<C> {
    pub fn map_states<D>(self, f: impl FnMut(C) -> D) -> Trajectory<D> {
        Trajectory {
            times: self.times,
            states: self.states.into_iter().map(f).collect(),
            integrals: self.integrals,
            burn_in: self.burn_in,
            horizon: self.horizon,
            batch_durations: self.batch_durations,
            refined_steps: self.refined_steps,
        }
    }

    fn accumulator(&self, name: &str) -> Result<&Accumulator> {
        self.integrals
            .get(name)
            .ok_or_else(|| Error::UnknownName(name.to_string()))
    }

    /// Batch means of an integral over the averaging window.
    pub fn batch_means(&self, name: &str) -> Result<Vec<f64>> {
        let acc = self.accumulator(name)?;
        Ok(acc
            .batch_sums
            .iter()
            .zip(&self.batch_durations)
            .filter(|(_, d)| **d > 0.0)
            .map(|(s, d)| s / d)
            .collect())
    }

    pub fn write_integrals_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.integrals)?;
        Ok(())
    }
}

impl Trajectory<Config1D> {
    /// Rows `(t, particle, x)`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "particle", "x"])?;
        for (t, s) in self.times.iter().zip(&self.states) {
            for (k, x) in s.points().iter().enumerate() {
                wtr.write_record([format_f64(*t), k.to_string(), format_f64(*x)])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

impl Trajectory<Config2D> {
    /// Rows `(t, particle, x, y)`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "particle", "x", "y"])?;
        for (t, s) in self.times.iter().zip(&self.states) {
            for (k, p) in s.points().iter().enumerate() {
                wtr.write_record([
                    format_f64(*t),
                    k.to_string(),
                    format_f64(p.x),
                    format_f64(p.y),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `(I(horizon) - I(burn_in)) / (horizon - burn_in)` with a batch-means
/// standard error.
pub fn ergodic_average<C>(traj: &Trajectory<C>, name: &str) -> Result<ErgodicEstimate> {
    let acc = traj.accumulator(name)?;
    let window = traj.horizon - traj.burn_in;
    if !(window > 0.0) {
        return Err(Error::domain(
            "averaging window is empty (horizon == burn_in)",
        ));
    }
    let mean = (acc.at_horizon - acc.at_burn_in) / window;
    let batch_means = traj.batch_means(name)?;
    Ok(ErgodicEstimate {
        mean,
        std_error: standard_error(&batch_means),
        batch_means,
    })
}

/// Paired batch-means estimate of `mean(b) - mean(a)` for trajectories driven
/// by the same noise.
pub fn paired_difference<C>(
    a: &Trajectory<C>,
    b: &Trajectory<C>,
    name: &str,
) -> Result<ErgodicEstimate> {
    let ea = ergodic_average(a, name)?;
    let eb = ergodic_average(b, name)?;
    if ea.batch_means.len() != eb.batch_means.len() {
        return Err(Error::domain("trajectories have different batch layouts"));
    }
    let d: Vec<f64> = eb
        .batch_means
        .iter()
        .zip(&ea.batch_means)
        .map(|(x, y)| x - y)
        .collect();
    Ok(ErgodicEstimate {
        mean: eb.mean - ea.mean,
        std_error: standard_error(&d),
        batch_means: d,
    })
}

/// Standard error of the mean of (approximately independent) batch values.
pub fn standard_error(v: &[f64]) -> f64 {
    let k = v.len();
    if k < 2 {
        return f64::NAN;
    }
    let d: Vec<f64> = v.iter().map(|x| x - v[0]).collect();
    let m = d.iter().sum::<f64>() / k as f64;
    let var = d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1) as f64;
    (var / k as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(n: usize, beta: f64, sigma: f64) -> GameParams {
        GameParams::new(n, beta, sigma).unwrap()
    }

    #[test]
    fn two_particle_fixed_point() {
        // drift of x_2 = 1: (beta/2) / (1 - (-1)) - 1/2 = 0
        let p = params(2, 2.0, 1e-12);
        let c = Config1D::new(vec![-1.0, 1.0]).unwrap();
        let out = step_dyson_1d(&c, &p, 0.01, &[0.0, 0.0], BridgeKey::default()).unwrap();
        assert_eq!(out.points(), &[-1.0, 1.0]);
    }

    #[test]
    fn reflection_equivariance() {
        let p = params(2, 2.0, 1.0);
        let c = Config1D::new(vec![-0.7, 0.7]).unwrap();
        let out = step_dyson_1d(&c, &p, 0.01, &[0.3, -0.3], BridgeKey::default()).unwrap();
        assert_eq!(out.points()[0], -out.points()[1]);
    }

    #[test]
    fn refinement_rescues_a_crossing_step() {
        let p = params(2, 2.0, 1.0);
        let c = Config1D::new(vec![-0.01, 0.01]).unwrap();
        // a large opposing kick would swap the pair in one step
        let out = step_dyson_1d(
            &c,
            &p,
            0.01,
            &[30.0, -30.0],
            BridgeKey {
                seed: 3,
                step: 0,
                max_halvings: 30,
                ..BridgeKey::default()
            },
        )
        .unwrap();
        assert!(out.points()[0] < out.points()[1]);
        let err = step_dyson_1d(
            &c,
            &p,
            0.01,
            &[30.0, -30.0],
            BridgeKey {
                seed: 3,
                step: 0,
                max_halvings: 0,
                ..BridgeKey::default()
            },
        );
        assert!(matches!(err, Err(Error::Step { halvings: 0, .. })));
    }

    #[test]
    fn planar_pair_balance() {
        // drift of (r, 0): (beta/2) / (2r) - r/2 vanishes at r = sqrt(beta/2) / ... solved numerically
        let beta: f64 = 2.0;
        let p = params(2, beta, 1e-12);
        let f = |r: f64| beta / 2.0 / (2.0 * r) - r / 2.0;
        let (mut lo, mut hi) = (0.1, 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let r = 0.5 * (lo + hi);
        let c = Config2D::new(vec![Point2::new(-r, 0.0), Point2::new(r, 0.0)]).unwrap();
        let out = step_coulomb_2d(&c, &p, 0.01, &[0.0; 4], BridgeKey::default()).unwrap();
        assert!((out.points()[1] - Point2::new(r, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn planar_rotation_equivariance() {
        let p = params(3, 2.0, 1.0);
        let pts = vec![
            Point2::new(0.2, 0.1),
            Point2::new(-0.4, 0.3),
            Point2::new(0.1, -0.5),
        ];
        let noise = [0.3, -0.2, 1.1, 0.4, -0.7, 0.05];
        let th = 0.9;
        let rot: Vec<Point2> = pts.iter().map(|z| z.rotate(th)).collect();
        let rn: Vec<f64> = noise
            .chunks(2)
            .flat_map(|c| {
                let v = Point2::new(c[0], c[1]).rotate(th);
                [v.x, v.y]
            })
            .collect();
        let a = step_coulomb_2d(
            &Config2D::new(pts).unwrap(),
            &p,
            0.01,
            &noise,
            BridgeKey::default(),
        )
        .unwrap();
        let b = step_coulomb_2d(
            &Config2D::new(rot).unwrap(),
            &p,
            0.01,
            &rn,
            BridgeKey::default(),
        )
        .unwrap();
        for (u, v) in a.points().iter().zip(b.points()) {
            assert!((u.rotate(th) - *v).norm() < 1e-14);
        }
    }

    #[test]
    fn empty_window() {
        let p = params(3, 2.0, 1.0);
        let c = Config1D::new(vec![-1.0, 0.0, 1.0]).unwrap();
        let sde = SdeConfig::new(0.01, 1.0, 1.0, 5);
        let ig = [Integrand::new("one", |_: &[f64], _: &[f64]| 1.0)];
        let t = simulate_1d(&c, &p, &sde, &ig).unwrap();
        assert_eq!(t.times.len(), 1);
        let acc = &t.integrals["one"];
        assert_eq!(acc.at_horizon - acc.at_burn_in, 0.0);
        assert!(ergodic_average(&t, "one").is_err());
    }

    #[test]
    fn constant_integrand_has_zero_error() {
        let p = params(3, 2.0, 1.0);
        let c = Config1D::new(vec![-1.0, 0.0, 1.0]).unwrap();
        let sde = SdeConfig::new(0.01, 1.0, 5.0, 5).with_stride(50);
        let ig = [Integrand::new("c", |_: &[f64], _: &[f64]| 0.7)];
        let t = simulate_1d(&c, &p, &sde, &ig).unwrap();
        let e = ergodic_average(&t, "c").unwrap();
        assert_relative_eq!(e.mean, 0.7, max_relative = 1e-12);
        assert_eq!(e.std_error, 0.0, "{:?}", e.batch_means);
        assert!(matches!(
            ergodic_average(&t, "nope"),
            Err(Error::UnknownName(_))
        ));
    }

    #[test]
    fn deterministic_given_seed() {
        let p = params(6, 2.0, 1.0);
        let c = Config1D::new(vec![-2.0, -1.0, -0.2, 0.3, 1.0, 2.1]).unwrap();
        let sde = SdeConfig::new(1e-3, 0.5, 2.0, 42).with_stride(100);
        let ig = [Integrand::new("x2", |x: &[f64], _: &[f64]| x[2] * x[2])];
        let a = simulate_1d(&c, &p, &sde, &ig).unwrap();
        let b = simulate_1d(&c, &p, &sde, &ig).unwrap();
        assert_eq!(a, b);
        let other = SdeConfig { seed: 43, ..sde };
        assert_ne!(simulate_1d(&c, &p, &other, &ig).unwrap().states, a.states);
    }

    #[test]
    fn ordering_survives_long_runs() {
        let p = params(10, 2.0, 1.0);
        let c = Config1D::new((0..10).map(|k| -1.8 + 0.4 * k as f64).collect()).unwrap();
        let sde = SdeConfig::new(1e-3, 0.0, 100.0, 1).with_stride(1000);
        let t = simulate_1d(&c, &p, &sde, &[]).unwrap();
        assert_eq!(t.states.len(), 101);
        assert!(t.states.iter().all(|s| s.min_gap() > 0.0));
    }

    #[test]
    fn planar_confinement() {
        let p = params(30, 2.0, 1.0);
        let pts: Vec<Point2> = (0..30)
            .map(|k| {
                Point2::from_polar(1.3 * ((k as f64 + 0.5) / 30.0).sqrt(), 2.399_963 * k as f64)
            })
            .collect();
        let sde = SdeConfig::new(2e-3, 0.0, 50.0, 9).with_stride(250);
        let t = simulate_2d(&Config2D::new(pts).unwrap(), &p, &sde, &[]).unwrap();
        let rmax = t
            .states
            .iter()
            .flat_map(|s| s.points().iter().map(|z| z.norm()))
            .fold(0.0, f64::max);
        assert!(rmax < 3.0, "{rmax}");
        assert!(t.states.iter().all(|s| s.min_distance() >= COLLISION_FLOOR));
    }
}
