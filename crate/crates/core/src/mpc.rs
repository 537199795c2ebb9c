//! Cross-entropy-method model predictive control.
//!
//! Each control step plans a `horizon`-step action sequence against a
//! [`Forward`] model by iteratively refitting a diagonal Gaussian to the
//! lowest-cost samples, executes the first action, and replans from the
//! next measurement.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::contact_sim::{ContactSim, ForceState, NoiseStd, FORCE_DIMS, STATE_DIM};
use crate::dynamics::Forward;
use crate::error::{Error, Result};
use crate::seed;
use crate::vec2::Vec2;

/// Per-axis lower bound on the sampling std, mm.
pub const STD_FLOOR: f64 = 0.01;
/// Actions are clipped to this multiple of `init_std` per axis.
pub const CLIP_MULTIPLE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub n_samples: usize,
    pub horizon: usize,
    pub cem_iters: usize,
    pub elite_frac: f64,
    /// Initial per-axis sampling std, mm. The default is the square root of
    /// half the 4 mm grid range, read as a variance; wider draws push a
    /// learned model far outside the step sizes it was trained on.
    pub init_std: Vec2,
    /// Weight on squared force error.
    pub alpha: f64,
    /// Weight on squared torque error. Torques in N·m are about 30 times
    /// smaller than the lateral forces, so this is large enough to put both
    /// terms on a comparable scale.
    pub beta: f64,
    /// Reuse the same standard-normal draws in every iteration.
    pub common_random_numbers: bool,
    /// Keep the previous iteration's elites in the candidate pool, which
    /// makes the elite-mean cost non-increasing.
    pub carry_elites: bool,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            n_samples: 200,
            horizon: 6,
            cem_iters: 5,
            elite_frac: 0.1,
            init_std: Vec2::new(std::f64::consts::SQRT_2, std::f64::consts::SQRT_2),
            alpha: 0.05,
            beta: 1000.0,
            common_random_numbers: false,
            carry_elites: false,
        }
    }
}

impl PlanConfig {
    pub fn elite_count(&self) -> usize {
        ((self.n_samples as f64 * self.elite_frac).round() as usize).clamp(1, self.n_samples.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("plan: {m}")));
        if self.n_samples == 0 {
            return bad("n_samples must be at least 1");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if !(self.elite_frac > 0.0 && self.elite_frac <= 1.0) {
            return bad("elite_frac must be in (0, 1]");
        }
        if !(self.init_std.x > 0.0 && self.init_std.y > 0.0 && self.init_std.is_finite()) {
            return bad("init_std must be positive");
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return bad("cost weights must be non-negative");
        }
        Ok(())
    }

    fn clip(&self, a: Vec2) -> Vec2 {
        let lim = Vec2::new(CLIP_MULTIPLE * self.init_std.x, CLIP_MULTIPLE * self.init_std.y);
        Vec2::new(a.x.clamp(-lim.x, lim.x), a.y.clamp(-lim.y, lim.y))
    }
}

/// `alpha * |force error|^2 + beta * |torque error|^2`.
pub fn state_cost(pred: &ForceState, goal: &ForceState, alpha: f64, beta: f64) -> f64 {
    let mut f = 0.0;
    let mut t = 0.0;
    for d in 0..STATE_DIM {
        let e = goal.0[d] - pred.0[d];
        if d < FORCE_DIMS {
            f += e * e;
        } else {
            t += e * e;
        }
    }
    alpha * f + beta * t
}

/// Summed state cost of free-running rollouts from `start`, one per action
/// sequence, batched through the model.
pub fn rollout_costs<F: Forward>(
    model: &F,
    start: &ForceState,
    position: Option<Vec2>,
    sequences: &[Vec<Vec2>],
    goal: &ForceState,
    cfg: &PlanConfig,
) -> Vec<f64> {
    let rows = sequences.len();
    if rows == 0 {
        return Vec::new();
    }
    let steps = sequences[0].len();
    let starts = vec![*start; rows];
    let positions = position.map(|p| vec![p; rows]);
    let mut hidden = model.begin(&starts, positions.as_deref());
    let mut states = starts;
    let mut costs = vec![0.0; rows];
    for t in 0..steps {
        let actions: Vec<Vec2> = sequences.iter().map(|s| s[t]).collect();
        states = model.advance(&mut hidden, &states, &actions);
        for (c, s) in costs.iter_mut().zip(&states) {
            *c += state_cost(s, goal, cfg.alpha, cfg.beta);
        }
    }
    costs
}

pub fn rollout_cost<F: Forward>(
    model: &F,
    start: &ForceState,
    position: Option<Vec2>,
    actions: &[Vec2],
    goal: &ForceState,
    cfg: &PlanConfig,
) -> f64 {
    rollout_costs(model, start, position, &[actions.to_vec()], goal, cfg)[0]
}

/// Outcome of one planning call.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub first_action: Vec2,
    /// Mean action sequence after the last iteration.
    pub mean: Vec<Vec2>,
    /// Mean cost of the elite set after each iteration.
    pub elite_costs: Vec<f64>,
    /// Cost of the returned mean sequence.
    pub mean_cost: f64,
}

/// CEM over action sequences. `position` is forwarded to models that track
/// position (the grid oracle) and ignored by learned models.
pub fn cem_plan_traced<F: Forward>(
    model: &F,
    start: &ForceState,
    position: Option<Vec2>,
    goal: &ForceState,
    cfg: &PlanConfig,
    seed_value: u64,
) -> Plan {
    let h = cfg.horizon;
    let n = cfg.n_samples;
    let k = cfg.elite_count();
    let mut mean = vec![Vec2::ZERO; h];
    let mut std = vec![cfg.init_std; h];
    let mut rng = seed::rng(seed::derive(seed_value, "cem"));
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<Vec2>> {
        (0..n)
            .map(|_| {
                (0..h)
                    .map(|_| Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                    .collect()
            })
            .collect()
    };
    let fixed_noise = cfg.common_random_numbers.then(|| draw(&mut rng));
    let mut elites: Vec<(f64, Vec<Vec2>)> = Vec::new();
    let mut elite_costs = Vec::with_capacity(cfg.cem_iters);
    for _ in 0..cfg.cem_iters {
        let noise = match &fixed_noise {
            Some(z) => z.clone(),
            None => draw(&mut rng),
        };
        let samples: Vec<Vec<Vec2>> = noise
            .iter()
            .map(|z| {
                (0..h)
                    .map(|t| cfg.clip(Vec2::new(mean[t].x + std[t].x * z[t].x, mean[t].y + std[t].y * z[t].y)))
                    .collect()
            })
            .collect();
        let costs = rollout_costs(model, start, position, &samples, goal, cfg);
        let mut pool: Vec<(f64, Vec<Vec2>)> = costs.into_iter().zip(samples).collect();
        if cfg.carry_elites {
            pool.append(&mut elites);
        }
        // Stable sort: ties keep sample order, so results are seed-determined.
        pool.sort_by(|a, b| a.0.total_cmp(&b.0));
        pool.truncate(k);
        elites = pool;
        elite_costs.push(elites.iter().map(|e| e.0).sum::<f64>() / k as f64);
        for t in 0..h {
            let m = elites.iter().fold(Vec2::ZERO, |acc, e| acc + e.1[t]) * (1.0 / k as f64);
            let var = elites.iter().fold(Vec2::ZERO, |acc, e| {
                let d = e.1[t] - m;
                acc + Vec2::new(d.x * d.x, d.y * d.y)
            }) * (1.0 / k as f64);
            mean[t] = m;
            std[t] = Vec2::new(var.x.sqrt().max(STD_FLOOR), var.y.sqrt().max(STD_FLOOR));
        }
    }
    let mean: Vec<Vec2> = mean.into_iter().map(|a| cfg.clip(a)).collect();
    let mean_cost = rollout_cost(model, start, position, &mean, goal, cfg);
    Plan {
        first_action: mean[0],
        mean,
        elite_costs,
        mean_cost,
    }
}

pub fn cem_plan<F: Forward>(
    model: &F,
    start: &ForceState,
    position: Option<Vec2>,
    goal: &ForceState,
    cfg: &PlanConfig,
    seed_value: u64,
) -> Vec2 {
    cem_plan_traced(model, start, position, goal, cfg, seed_value).first_action
}

/// Something that picks the next displacement from a measurement.
pub trait Controller {
    /// `offset` is the true peg offset; only oracle controllers may use it.
    /// Returns the action and the controller's own cost estimate (0 if it
    /// has none).
    fn act(&mut self, observation: &ForceState, offset: Vec2, seed_value: u64) -> (Vec2, f64);
}

/// CEM against a learned model, seeing only the force state.
pub struct CemController<'a, F: Forward> {
    pub model: &'a F,
    pub goal: ForceState,
    pub config: PlanConfig,
    /// Pass the true offset to the model; for position-tracking oracles.
    pub use_position: bool,
}

impl<F: Forward> Controller for CemController<'_, F> {
    fn act(&mut self, observation: &ForceState, offset: Vec2, seed_value: u64) -> (Vec2, f64) {
        let pos = self.use_position.then_some(offset);
        let plan = cem_plan_traced(self.model, observation, pos, &self.goal, &self.config, seed_value);
        (plan.first_action, plan.mean_cost)
    }
}

/// Gaussian random displacements; a negative control.
pub struct RandomController {
    pub std: Vec2,
}

impl Controller for RandomController {
    fn act(&mut self, _observation: &ForceState, _offset: Vec2, seed_value: u64) -> (Vec2, f64) {
        let mut rng = seed::rng(seed::derive(seed_value, "random-action"));
        let z = Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        (Vec2::new(self.std.x * z.x, self.std.y * z.y), 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub max_steps: usize,
    /// Success when the true offset is within this radius, mm.
    pub success_radius: f64,
    pub f_max: f64,
    pub noise: NoiseStd,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            max_steps: 6,
            success_radius: 0.5,
            f_max: 10.0,
            noise: NoiseStd::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub steps_taken: usize,
    pub success: bool,
    pub final_distance: f64,
    /// Distance to the hole centre at each measurement, starting with the
    /// initial offset; `steps_taken + 1` entries.
    pub distances: Vec<f64>,
    /// Controller cost estimate for each executed action.
    pub costs: Vec<f64>,
    /// Every pose reported insertion at the final measurement.
    pub inserted: bool,
}

impl TrialResult {
    /// Distance at each of `0..=len` steps; after a success the peg is
    /// seated and the distance is 0, after a failure it stays put.
    pub fn distance_curve(&self, len: usize) -> Vec<f64> {
        let last = self.distances.len() - 1;
        (0..=len)
            .map(|t| match (t < last, self.success) {
                (true, _) => self.distances[t],
                (false, true) => 0.0,
                (false, false) => self.final_distance,
            })
            .collect()
    }
}

/// Probe, act, move, repeat. Terminates on success (within
/// `success_radius` of the centre, or inserted at all poses) or after
/// `max_steps` actions.
pub fn run_episode(
    sim: &ContactSim,
    controller: &mut dyn Controller,
    start: Vec2,
    cfg: &EpisodeConfig,
    seed_value: u64,
) -> Result<TrialResult> {
    let mut offset = start;
    let mut distances = Vec::with_capacity(cfg.max_steps + 1);
    let mut costs = Vec::with_capacity(cfg.max_steps);
    for step in 0..=cfg.max_steps {
        let probe_seed = seed::derive_indexed(seed_value, "probe", step as u64);
        let (state, inserted) = sim.probe_multipose_detailed(offset, cfg.f_max, cfg.noise, probe_seed)?;
        let all_in = inserted.iter().all(|&b| b);
        let d = offset.norm();
        distances.push(d);
        if d <= cfg.success_radius || all_in || step == cfg.max_steps {
            return Ok(TrialResult {
                steps_taken: step,
                success: d <= cfg.success_radius || all_in,
                final_distance: d,
                distances,
                costs,
                inserted: all_in,
            });
        }
        let (a, c) = controller.act(&state, offset, seed::derive_indexed(seed_value, "act", step as u64));
        costs.push(c);
        offset += a;
    }
    unreachable!("loop returns on the final step")
}

/// Uniform draw from the annulus `radius ± half_width` around the centre.
pub fn ring_start(radius: f64, half_width: f64, seed_value: u64) -> Vec2 {
    let mut rng = seed::rng(seed::derive(seed_value, "ring-start"));
    let (lo, hi) = ((radius - half_width).max(0.0), radius + half_width);
    // Area-uniform radius.
    let u: f64 = rng.random();
    let r = (lo * lo + u * (hi * hi - lo * lo)).sqrt();
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    Vec2::new(r * theta.cos(), r * theta.sin())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub trials: Vec<TrialResult>,
    pub success_rate: f64,
}

/// `trials` episodes from ring starts; trial `i` uses seed
/// `derive_indexed(seed, "trial", i)`.
pub fn run_trials(
    sim: &ContactSim,
    controller: &mut dyn Controller,
    trials: usize,
    ring: (f64, f64),
    cfg: &EpisodeConfig,
    seed_value: u64,
) -> Result<Summary> {
    let mut out = Vec::with_capacity(trials);
    for i in 0..trials {
        let s = seed::derive_indexed(seed_value, "trial", i as u64);
        let start = ring_start(ring.0, ring.1, s);
        out.push(run_episode(sim, controller, start, cfg, s)?);
    }
    let success_rate = if trials == 0 {
        0.0
    } else {
        out.iter().filter(|t| t.success).count() as f64 / trials as f64
    };
    Ok(Summary {
        trials: out,
        success_rate,
    })
}

/// Default start ring: 2 ± 0.5 mm.
pub const START_RING: (f64, f64) = (2.0, 0.5);
