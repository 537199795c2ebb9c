//! Learned force-state transition model.
//!
//! A two-layer LSTM reads `[state, action]` in normalized units and predicts
//! the next state. Training is teacher-forced BPTT on fixed-length random
//! walk trajectories with a mean-squared loss in normalized units; the
//! evaluation metric is in raw units with torque errors weighted by 100.

mod io;
pub mod lstm;
mod norm;
mod oracle;

use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::contact_sim::{ForceState, FORCE_DIMS, STATE_DIM};
use crate::dataset::Trajectory;
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, fill_uniform, Adam};
use crate::seed;
use crate::vec2::Vec2;

pub use io::{load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use lstm::{Layout, INPUT_DIM};
pub use norm::{NormStats, MIN_STD};
pub use oracle::GridOracle;

/// Denominator floor of the gradient-check relative error.
pub const GRAD_CHECK_FLOOR: f64 = 1e-5;

/// Weight on squared torque errors in [`eval_error`].
pub const TORQUE_WEIGHT: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    /// Finetuning runs at `learning_rate * finetune_lr_scale`.
    pub finetune_lr_scale: f64,
    pub trajs_per_episode: usize,
    /// Lower bounds on the normalization std of force and torque dims.
    pub force_std_floor: f64,
    pub torque_std_floor: f64,
    /// Predict the change in normalized state instead of the state itself.
    pub residual: bool,
    /// Set by the initializer; not read from configuration.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            hidden: 64,
            learning_rate: 1e-3,
            grad_clip: 5.0,
            finetune_lr_scale: 0.1,
            trajs_per_episode: 20,
            force_std_floor: 0.1,
            torque_std_floor: 0.004,
            residual: false,
            seed: 0,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("dynamics: {m}")));
        if self.hidden == 0 {
            return bad("hidden must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.grad_clip >= 0.0 && self.finetune_lr_scale >= 0.0) {
            return bad("grad_clip and finetune_lr_scale must be non-negative");
        }
        if self.trajs_per_episode == 0 {
            return bad("trajs_per_episode must be at least 1");
        }
        if !(self.force_std_floor >= 0.0 && self.torque_std_floor >= 0.0) {
            return bad("std floors must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub episodes_run: usize,
    /// Training loss of each episode's batch, normalized units.
    pub losses: Vec<f64>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsModel {
    pub config: DynamicsConfig,
    pub norm: NormStats,
    /// Flat parameters in [`Layout`] order.
    pub params: Vec<f64>,
    /// Optimizer steps taken so far; seeds the batch stream of the next run.
    pub episodes_trained: u64,
}

/// Recurrent state for a batch of independent sequences.
pub type Hidden = lstm::State;

pub fn init_model(config: &DynamicsConfig, seed_value: u64) -> DynamicsModel {
    let layout = Layout { hidden: config.hidden };
    let h = config.hidden;
    let mut params = vec![0.0; layout.len()];
    let mut rng = seed::rng(seed::derive(seed_value, "dynamics-init"));
    {
        let mut v = layout.views_mut(&mut params);
        let mut fill = |m: &mut [f64], fan_in: usize| fill_uniform(&mut rng, m, 1.0 / (fan_in as f64).sqrt());
        fill(v.w1.as_slice_mut().expect("contiguous"), INPUT_DIM);
        fill(v.u1.as_slice_mut().expect("contiguous"), h);
        fill(v.w2.as_slice_mut().expect("contiguous"), h);
        fill(v.u2.as_slice_mut().expect("contiguous"), h);
        fill(v.wo.as_slice_mut().expect("contiguous"), h);
        for j in h..2 * h {
            v.b1[j] = 1.0;
            v.b2[j] = 1.0;
        }
    }
    DynamicsModel {
        config: DynamicsConfig {
            seed: seed_value,
            ..config.clone()
        },
        norm: NormStats::default(),
        params,
        episodes_trained: 0,
    }
}

/// Normalized, batch-ready copy of a trajectory.
struct Prepared {
    /// `len × INPUT_DIM`.
    inputs: Vec<f64>,
    /// `len × STATE_DIM`.
    targets: Vec<f64>,
    len: usize,
}

fn prepare(norm: &NormStats, t: &Trajectory) -> Prepared {
    let len = t.actions.len().min(t.states.len().saturating_sub(1));
    let mut inputs = vec![0.0; len * INPUT_DIM];
    let mut targets = vec![0.0; len * STATE_DIM];
    for s in 0..len {
        let row = &mut inputs[s * INPUT_DIM..(s + 1) * INPUT_DIM];
        norm.normalize_state(&t.states[s], &mut row[..STATE_DIM]);
        row[STATE_DIM..].copy_from_slice(&norm.normalize_action(t.actions[s]));
        norm.normalize_state(&t.states[s + 1], &mut targets[s * STATE_DIM..(s + 1) * STATE_DIM]);
    }
    Prepared { inputs, targets, len }
}

/// Gradient corruption applied after BPTT, for negative-control tests.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GradMutation {
    #[default]
    None,
    /// Multiply the read-out gradients by this factor.
    ScaleHead(f64),
}

impl DynamicsModel {
    pub fn layout(&self) -> Layout {
        Layout {
            hidden: self.config.hidden,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn zero_hidden(&self, batch: usize) -> Hidden {
        Hidden::zeros(batch, self.config.hidden)
    }

    /// One step for a single sequence.
    pub fn forward(&self, state: &ForceState, action: Vec2, hidden: &Hidden) -> (ForceState, Hidden) {
        let mut h = hidden.clone();
        let out = self.step_batch(&mut h, std::slice::from_ref(state), &[action]);
        (out[0], h)
    }

    /// One step for a batch; `hidden` must have `states.len()` rows.
    pub fn step_batch(&self, hidden: &mut Hidden, states: &[ForceState], actions: &[Vec2]) -> Vec<ForceState> {
        assert_eq!(states.len(), actions.len());
        let rows = states.len();
        let mut x = Array2::zeros((rows, INPUT_DIM));
        for r in 0..rows {
            let row = x.row_mut(r).into_slice().expect("contiguous");
            self.norm.normalize_state(&states[r], &mut row[..STATE_DIM]);
            row[STATE_DIM..].copy_from_slice(&self.norm.normalize_action(actions[r]));
        }
        let p = self.layout().views(&self.params);
        let current = self.config.residual.then(|| x.clone());
        let (mut y, _) = lstm::step(&p, x, hidden, false);
        if let Some(c) = current {
            y += &c.slice(ndarray::s![.., ..STATE_DIM]);
        }
        (0..rows)
            .map(|r| self.norm.denormalize_state(y.row(r).as_slice().expect("contiguous")))
            .collect()
    }

    /// Mean-squared normalized loss over a batch and its gradient.
    fn loss_and_grad(&self, batch: &[&Prepared], grads: Option<&mut [f64]>) -> f64 {
        let rows = batch.len();
        let steps = batch.iter().map(|b| b.len).max().unwrap_or(0);
        let count: usize = batch.iter().map(|b| b.len).sum::<usize>() * STATE_DIM;
        if rows == 0 || count == 0 {
            return 0.0;
        }
        let layout = self.layout();
        let p = layout.views(&self.params);
        let mut state = self.zero_hidden(rows);
        let keep = grads.is_some();
        let mut caches = Vec::with_capacity(steps);
        let mut dys = Vec::with_capacity(steps);
        let mut loss = 0.0;
        let scale = 1.0 / count as f64;
        for t in 0..steps {
            let x = Array2::from_shape_fn((rows, INPUT_DIM), |(r, j)| {
                let b = batch[r];
                if t < b.len {
                    b.inputs[t * INPUT_DIM + j]
                } else {
                    0.0
                }
            });
            let current = self.config.residual.then(|| x.clone());
            let (mut y, cache) = lstm::step(&p, x, &mut state, keep);
            if let Some(c) = current {
                y += &c.slice(ndarray::s![.., ..STATE_DIM]);
            }
            let mut dy = Array2::zeros((rows, STATE_DIM));
            for r in 0..rows {
                let b = batch[r];
                if t >= b.len {
                    continue;
                }
                for d in 0..STATE_DIM {
                    let e = y[[r, d]] - b.targets[t * STATE_DIM + d];
                    loss += e * e;
                    dy[[r, d]] = 2.0 * e * scale;
                }
            }
            if let Some(c) = cache {
                caches.push(c);
                dys.push(dy);
            }
        }
        if let Some(g) = grads {
            lstm::backward(&layout, &p, &caches, &dys, g);
        }
        loss * scale
    }

    /// Supervised training from scratch: fits normalization statistics to
    /// `trajectories`, then runs `episodes` Adam steps at the configured
    /// learning rate.
    pub fn train(&mut self, trajectories: &[Trajectory], episodes: usize) -> Result<TrainReport> {
        self.train_with(trajectories, episodes, &mut |_, _| true)
    }

    pub fn train_with(
        &mut self,
        trajectories: &[Trajectory],
        episodes: usize,
        observer: &mut dyn FnMut(usize, &DynamicsModel) -> bool,
    ) -> Result<TrainReport> {
        self.norm = NormStats::fit(trajectories, self.config.force_std_floor, self.config.torque_std_floor);
        let lr = self.config.learning_rate;
        self.fit(trajectories, episodes, lr, observer)
    }

    /// Continues training on new data with the existing normalization and a
    /// reduced learning rate.
    pub fn finetune(&mut self, trajectories: &[Trajectory], episodes: usize) -> Result<TrainReport> {
        self.finetune_with(trajectories, episodes, &mut |_, _| true)
    }

    pub fn finetune_with(
        &mut self,
        trajectories: &[Trajectory],
        episodes: usize,
        observer: &mut dyn FnMut(usize, &DynamicsModel) -> bool,
    ) -> Result<TrainReport> {
        let lr = self.config.learning_rate * self.config.finetune_lr_scale;
        self.fit(trajectories, episodes, lr, observer)
    }

    /// Training loop shared by [`train`](Self::train) and
    /// [`finetune`](Self::finetune). `observer` runs after every episode with
    /// the number of episodes completed in this call; returning `false`
    /// stops early.
    pub fn fit(
        &mut self,
        trajectories: &[Trajectory],
        episodes: usize,
        learning_rate: f64,
        observer: &mut dyn FnMut(usize, &DynamicsModel) -> bool,
    ) -> Result<TrainReport> {
        let started = Instant::now();
        let prepared: Vec<Prepared> = trajectories
            .iter()
            .map(|t| prepare(&self.norm, t))
            .filter(|p| p.len > 0)
            .collect();
        let mut losses = Vec::with_capacity(episodes);
        if prepared.is_empty() || episodes == 0 {
            return Ok(TrainReport {
                episodes_run: 0,
                losses,
                wall_seconds: started.elapsed().as_secs_f64(),
            });
        }
        let mut adam = Adam::new(self.params.len(), learning_rate);
        let mut grads = vec![0.0; self.params.len()];
        let per = self.config.trajs_per_episode;
        let mut episodes_run = 0;
        for e in 0..episodes {
            let mut rng = seed::rng(seed::derive_indexed(
                self.config.seed,
                "dynamics-batch",
                self.episodes_trained,
            ));
            let batch: Vec<&Prepared> = (0..per)
                .map(|_| &prepared[rng.random_range(0..prepared.len())])
                .collect();
            grads.iter_mut().for_each(|g| *g = 0.0);
            let loss = self.loss_and_grad(&batch, Some(&mut grads));
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { episode: e, loss });
            }
            clip_grad_norm(&mut grads, self.config.grad_clip);
            adam.step(&mut self.params, &grads);
            self.episodes_trained += 1;
            losses.push(loss);
            episodes_run += 1;
            if !observer(episodes_run, self) {
                break;
            }
        }
        Ok(TrainReport {
            episodes_run,
            losses,
            wall_seconds: started.elapsed().as_secs_f64(),
        })
    }

    /// Normalized teacher-forced loss over all of `trajectories` without
    /// touching parameters.
    pub fn loss(&self, trajectories: &[Trajectory]) -> f64 {
        let prepared: Vec<Prepared> = trajectories.iter().map(|t| prepare(&self.norm, t)).collect();
        let refs: Vec<&Prepared> = prepared.iter().collect();
        self.loss_and_grad(&refs, None)
    }

    /// Largest relative discrepancy between BPTT and central finite
    /// differences over every parameter, on the teacher-forced loss of
    /// `probe`. Relative error is `|a - n| / max(|a| + |n|, GRAD_CHECK_FLOOR)`; the floor keeps
    /// finite-difference roundoff (about 1e-10) on vanishing gradients from
    /// dominating.
    pub fn gradient_check(&self, probe: &[Trajectory], mutation: GradMutation) -> f64 {
        let prepared: Vec<Prepared> = probe.iter().map(|t| prepare(&self.norm, t)).collect();
        let refs: Vec<&Prepared> = prepared.iter().filter(|p| p.len > 0).collect();
        if refs.is_empty() {
            return 0.0;
        }
        let mut analytic = vec![0.0; self.params.len()];
        self.loss_and_grad(&refs, Some(&mut analytic));
        if let GradMutation::ScaleHead(k) = mutation {
            for g in &mut analytic[self.layout().head_range()] {
                *g *= k;
            }
        }
        let step = 1e-5;
        let mut probe_model = self.clone();
        let mut worst: f64 = 0.0;
        for i in 0..self.params.len() {
            let orig = probe_model.params[i];
            probe_model.params[i] = orig + step;
            let up = probe_model.loss_and_grad(&refs, None);
            probe_model.params[i] = orig - step;
            let down = probe_model.loss_and_grad(&refs, None);
            probe_model.params[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[i];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(GRAD_CHECK_FLOOR);
            worst = worst.max(rel);
        }
        worst
    }
}

/// Anything that can roll force states forward under actions, batched.
pub trait Forward: Sync {
    type Hidden: Clone + Send;

    /// Fresh recurrent state for sequences starting at `starts`. Models that
    /// track position may use `positions` when given.
    fn begin(&self, starts: &[ForceState], positions: Option<&[Vec2]>) -> Self::Hidden;

    /// Feeds one `(state, action)` pair per sequence; returns next states.
    fn advance(&self, hidden: &mut Self::Hidden, states: &[ForceState], actions: &[Vec2]) -> Vec<ForceState>;
}

impl Forward for DynamicsModel {
    type Hidden = Hidden;

    fn begin(&self, starts: &[ForceState], _positions: Option<&[Vec2]>) -> Hidden {
        self.zero_hidden(starts.len())
    }

    fn advance(&self, hidden: &mut Hidden, states: &[ForceState], actions: &[Vec2]) -> Vec<ForceState> {
        self.step_batch(hidden, states, actions)
    }
}

/// Weighted raw-unit squared error between two states.
pub fn weighted_error(pred: &ForceState, truth: &ForceState) -> f64 {
    let sq = |r: std::ops::Range<usize>| -> f64 { r.map(|d| (pred.0[d] - truth.0[d]).powi(2)).sum() };
    sq(0..FORCE_DIMS) + TORQUE_WEIGHT * sq(FORCE_DIMS..STATE_DIM)
}

/// Mean over trajectories of the summed per-step weighted error of
/// teacher-forced one-step predictions. Empty input gives 0.
pub fn eval_error<F: Forward>(model: &F, trajectories: &[Trajectory]) -> f64 {
    if trajectories.is_empty() {
        return 0.0;
    }
    let rows = trajectories.len();
    let steps = trajectories.iter().map(|t| t.len()).max().unwrap_or(0);
    let starts: Vec<ForceState> = trajectories.iter().map(|t| t.states[0]).collect();
    let positions: Vec<Vec2> = trajectories.iter().map(|t| t.positions[0]).collect();
    let mut hidden = model.begin(&starts, Some(&positions));
    let mut total = 0.0;
    for s in 0..steps {
        // Finished sequences keep stepping on their final state; their
        // predictions are ignored.
        let states: Vec<ForceState> = trajectories.iter().map(|t| t.states[s.min(t.len())]).collect();
        let actions: Vec<Vec2> = trajectories
            .iter()
            .map(|t| t.actions.get(s).copied().unwrap_or(Vec2::ZERO))
            .collect();
        let pred = model.advance(&mut hidden, &states, &actions);
        for r in 0..rows {
            if s < trajectories[r].len() {
                total += weighted_error(&pred[r], &trajectories[r].states[s + 1]);
            }
        }
    }
    total / rows as f64
}
