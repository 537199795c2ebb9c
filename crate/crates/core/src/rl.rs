//! Model-based reinforcement learning.
//!
//! A discrete eight-direction policy with a separate value network, trained
//! by synchronous advantage actor-critic entirely against a frozen
//! [`DynamicsModel`]. The simulator is touched only for evaluation and for
//! the optional online baseline in [`train_online`].

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::contact_sim::{ContactSim, ForceState, NoiseStd, STATE_DIM};
use crate::container::{read_file, write_file, Reader, Writer};
use crate::dataset::GridTable;
use crate::dynamics::{DynamicsModel, NormStats};
use crate::error::{Error, Result};
use crate::mpc::{ring_start, run_trials, Controller, EpisodeConfig, Summary};
use crate::nn::{clip_grad_norm, fill_uniform, softmax, Adam};
use crate::seed;
use crate::vec2::Vec2;

pub const N_ACTIONS: usize = 8;

/// Unit directions in index order E, S, W, N, NE, SW, SE, NW; diagonals move
/// one unit on each axis.
pub const DIRECTIONS: [(f64, f64); N_ACTIONS] = [
    (1.0, 0.0),
    (0.0, -1.0),
    (-1.0, 0.0),
    (0.0, 1.0),
    (1.0, 1.0),
    (-1.0, -1.0),
    (1.0, -1.0),
    (-1.0, 1.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DiscreteAction(pub usize);

impl DiscreteAction {
    pub fn all() -> impl Iterator<Item = DiscreteAction> {
        (0..N_ACTIONS).map(DiscreteAction)
    }

    pub fn displacement(self, step_size: f64) -> Vec2 {
        let (x, y) = DIRECTIONS[self.0];
        Vec2::new(x * step_size, y * step_size)
    }

    pub fn name(self) -> &'static str {
        ["E", "S", "W", "N", "NE", "SW", "SE", "NW"][self.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// Similarity bandwidth, normalized units squared.
    pub sigma: f64,
    /// Success threshold on the similarity.
    pub epsilon: f64,
    pub goal_reward: f64,
    pub step_reward: f64,
}

impl RewardConfig {
    pub fn new(sigma: f64) -> Self {
        RewardConfig {
            sigma,
            epsilon: 0.9,
            goal_reward: 1.0,
            step_reward: -0.02,
        }
    }

    /// Bandwidth set to half the median squared normalized distance between
    /// the grid states and the goal.
    pub fn for_grid(grid: &GridTable, goal: &ForceState, norm: &NormStats) -> Self {
        let mut d: Vec<f64> = grid
            .states
            .iter()
            .map(|s| normalized_distance_sq(s, goal, norm))
            .collect();
        d.sort_by(f64::total_cmp);
        let median = if d.is_empty() {
            1.0
        } else if d.len() % 2 == 1 {
            d[d.len() / 2]
        } else {
            0.5 * (d[d.len() / 2 - 1] + d[d.len() / 2])
        };
        // All-goal grids have a zero median; any positive bandwidth works.
        RewardConfig::new(if median > 0.0 { 0.5 * median } else { 1.0 })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config("reward: sigma must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config("reward: epsilon must be in (0, 1)".into()));
        }
        Ok(())
    }
}

pub fn normalized_distance_sq(a: &ForceState, b: &ForceState, norm: &NormStats) -> f64 {
    (0..STATE_DIM)
        .map(|d| ((a.0[d] - b.0[d]) / norm.state_std[d]).powi(2))
        .sum()
}

/// `exp(-|a - b|^2 / sigma)` with the distance in normalized units.
pub fn similarity(state: &ForceState, goal: &ForceState, sigma: f64, norm: &NormStats) -> f64 {
    (-normalized_distance_sq(state, goal, norm) / sigma).exp()
}

/// Goal reward when the similarity strictly exceeds `epsilon`, step reward
/// otherwise.
pub fn reward(state: &ForceState, goal: &ForceState, cfg: &RewardConfig, norm: &NormStats) -> f64 {
    if similarity(state, goal, cfg.sigma, norm) > cfg.epsilon {
        cfg.goal_reward
    } else {
        cfg.step_reward
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub entropy_weight: f64,
    pub value_weight: f64,
    /// Steps per training episode.
    pub horizon: usize,
    /// Episodes rolled out in lockstep per update.
    pub envs_per_update: usize,
    pub grad_clip: f64,
    /// Displacement per axis of one discrete move, mm.
    pub step_size: f64,
    /// Set by the initializer; not read from configuration.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            hidden: 64,
            learning_rate: 1e-3,
            gamma: 0.95,
            entropy_weight: 0.01,
            value_weight: 0.5,
            horizon: 10,
            envs_per_update: 16,
            grad_clip: 5.0,
            step_size: 0.5,
            seed: 0,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("policy: {m}")));
        if self.hidden == 0 || self.horizon == 0 || self.envs_per_update == 0 {
            return bad("hidden, horizon and envs_per_update must be at least 1");
        }
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in [0, 1]");
        }
        if !(self.learning_rate >= 0.0 && self.entropy_weight >= 0.0 && self.value_weight >= 0.0) {
            return bad("learning_rate and loss weights must be non-negative");
        }
        if !(self.step_size > 0.0) {
            return bad("step_size must be positive");
        }
        Ok(())
    }
}

/// Policy and value networks, each `30 -> hidden (tanh) -> out`.
///
/// Flat parameter order: policy `w1 (30×H), b1 (H), w2 (H×8), b2 (8)`, then
/// value `w1 (30×H), b1 (H), w2 (H), b2 (1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    pub config: PolicyConfig,
    pub norm: NormStats,
    pub params: Vec<f64>,
}

struct Offsets {
    pw1: usize,
    pb1: usize,
    pw2: usize,
    pb2: usize,
    vw1: usize,
    vb1: usize,
    vw2: usize,
    vb2: usize,
    len: usize,
}

fn offsets(h: usize) -> Offsets {
    let pw1 = 0;
    let pb1 = pw1 + STATE_DIM * h;
    let pw2 = pb1 + h;
    let pb2 = pw2 + h * N_ACTIONS;
    let vw1 = pb2 + N_ACTIONS;
    let vb1 = vw1 + STATE_DIM * h;
    let vw2 = vb1 + h;
    let vb2 = vw2 + h;
    Offsets {
        pw1,
        pb1,
        pw2,
        pb2,
        vw1,
        vb1,
        vw2,
        vb2,
        len: vb2 + 1,
    }
}

/// Activations of one forward pass, kept for backprop.
struct Trace {
    x: [f64; STATE_DIM],
    hp: Vec<f64>,
    hv: Vec<f64>,
    probs: Vec<f64>,
    value: f64,
}

pub fn init_policy(config: &PolicyConfig, norm: &NormStats, seed_value: u64) -> PolicyModel {
    let h = config.hidden;
    let o = offsets(h);
    let mut params = vec![0.0; o.len];
    let mut rng = seed::rng(seed::derive(seed_value, "policy-init"));
    let in_bound = 1.0 / (STATE_DIM as f64).sqrt();
    let hid_bound = 1.0 / (h as f64).sqrt();
    fill_uniform(&mut rng, &mut params[o.pw1..o.pb1], in_bound);
    // A small output layer keeps the initial distribution near uniform.
    fill_uniform(&mut rng, &mut params[o.pw2..o.pb2], 0.1 * hid_bound);
    fill_uniform(&mut rng, &mut params[o.vw1..o.vb1], in_bound);
    fill_uniform(&mut rng, &mut params[o.vw2..o.vb2], hid_bound);
    PolicyModel {
        config: PolicyConfig {
            seed: seed_value,
            ..config.clone()
        },
        norm: norm.clone(),
        params,
    }
}

impl PolicyModel {
    fn trace(&self, state: &ForceState) -> Trace {
        let h = self.config.hidden;
        let o = offsets(h);
        let p = &self.params;
        let mut x = [0.0; STATE_DIM];
        self.norm.normalize_state(state, &mut x);
        let layer = |w: usize, b: usize| -> Vec<f64> {
            (0..h)
                .map(|j| {
                    let z = p[b + j] + (0..STATE_DIM).map(|i| x[i] * p[w + i * h + j]).sum::<f64>();
                    z.tanh()
                })
                .collect()
        };
        let hp = layer(o.pw1, o.pb1);
        let hv = layer(o.vw1, o.vb1);
        let logits: Vec<f64> = (0..N_ACTIONS)
            .map(|a| p[o.pb2 + a] + (0..h).map(|j| hp[j] * p[o.pw2 + j * N_ACTIONS + a]).sum::<f64>())
            .collect();
        let value = p[o.vb2] + (0..h).map(|j| hv[j] * p[o.vw2 + j]).sum::<f64>();
        Trace {
            x,
            probs: softmax(&logits),
            hp,
            hv,
            value,
        }
    }

    /// Action distribution and value estimate.
    pub fn forward(&self, state: &ForceState) -> ([f64; N_ACTIONS], f64) {
        let t = self.trace(state);
        let mut probs = [0.0; N_ACTIONS];
        probs.copy_from_slice(&t.probs);
        (probs, t.value)
    }

    /// Most probable action, lowest index on ties.
    pub fn greedy(&self, state: &ForceState) -> DiscreteAction {
        let (p, _) = self.forward(state);
        let mut best = 0;
        for a in 1..N_ACTIONS {
            if p[a] > p[best] {
                best = a;
            }
        }
        DiscreteAction(best)
    }

    /// Accumulates `scale` times the gradient of
    /// `-adv * log pi(a) - entropy_weight * H(pi) + value_weight * (ret - V)^2`.
    fn accumulate(&self, t: &Trace, action: usize, advantage: f64, ret: f64, scale: f64, g: &mut [f64]) {
        let h = self.config.hidden;
        let o = offsets(h);
        let p = &self.params;
        let entropy: f64 = -t
            .probs
            .iter()
            .map(|&q| if q > 0.0 { q * q.ln() } else { 0.0 })
            .sum::<f64>();
        let mut dz = [0.0; N_ACTIONS];
        for a in 0..N_ACTIONS {
            let q = t.probs[a];
            let onehot = if a == action { 1.0 } else { 0.0 };
            let d_ent = if q > 0.0 { q * (q.ln() + entropy) } else { 0.0 };
            dz[a] = scale * (advantage * (q - onehot) + self.config.entropy_weight * d_ent);
        }
        let dv = scale * -2.0 * self.config.value_weight * (ret - t.value);
        for a in 0..N_ACTIONS {
            g[o.pb2 + a] += dz[a];
        }
        for j in 0..h {
            let mut dhp = 0.0;
            for a in 0..N_ACTIONS {
                g[o.pw2 + j * N_ACTIONS + a] += t.hp[j] * dz[a];
                dhp += p[o.pw2 + j * N_ACTIONS + a] * dz[a];
            }
            let dzp = dhp * (1.0 - t.hp[j] * t.hp[j]);
            g[o.pb1 + j] += dzp;
            let dzv = dv * p[o.vw2 + j] * (1.0 - t.hv[j] * t.hv[j]);
            g[o.vw2 + j] += t.hv[j] * dv;
            g[o.vb1 + j] += dzv;
            for i in 0..STATE_DIM {
                g[o.pw1 + i * h + j] += t.x[i] * dzp;
                g[o.vw1 + i * h + j] += t.x[i] * dzv;
            }
        }
        g[o.vb2] += dv;
    }

    fn objective(&self, t: &Trace, action: usize, advantage: f64, ret: f64) -> f64 {
        let entropy: f64 = -t
            .probs
            .iter()
            .map(|&q| if q > 0.0 { q * q.ln() } else { 0.0 })
            .sum::<f64>();
        -advantage * t.probs[action].ln() - self.config.entropy_weight * entropy
            + self.config.value_weight * (ret - t.value).powi(2)
    }

    /// Largest relative error between analytic and central-difference
    /// gradients of the actor-critic objective on `samples`
    /// (`state, action, advantage, return`).
    pub fn gradient_check(&self, samples: &[(ForceState, usize, f64, f64)]) -> f64 {
        let total = |m: &PolicyModel| -> f64 {
            samples
                .iter()
                .map(|(s, a, adv, ret)| m.objective(&m.trace(s), *a, *adv, *ret))
                .sum()
        };
        let mut g = vec![0.0; self.params.len()];
        for (s, a, adv, ret) in samples {
            self.accumulate(&self.trace(s), *a, *adv, *ret, 1.0, &mut g);
        }
        let mut m = self.clone();
        let step = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..self.params.len() {
            let orig = m.params[i];
            m.params[i] = orig + step;
            let up = total(&m);
            m.params[i] = orig - step;
            let down = total(&m);
            m.params[i] = orig;
            let n = (up - down) / (2.0 * step);
            worst = worst.max((g[i] - n).abs() / (g[i].abs() + n.abs()).max(1e-5));
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlReport {
    pub episodes_run: usize,
    /// Undiscounted return of each episode.
    pub returns: Vec<f64>,
    pub wall_seconds: f64,
}

/// Where the next state of a training rollout comes from.
trait RolloutEnv {
    type Hidden;
    fn reset(&mut self, rows: usize, rng: &mut rand_chacha::ChaCha8Rng) -> (Vec<ForceState>, Self::Hidden);
    fn step(
        &mut self,
        hidden: &mut Self::Hidden,
        states: &[ForceState],
        moves: &[Vec2],
        step: usize,
    ) -> Result<Vec<ForceState>>;
}

struct ModelEnv<'a> {
    dynamics: &'a DynamicsModel,
    grid: &'a GridTable,
    goal: ForceState,
    reward: RewardConfig,
}

impl RolloutEnv for ModelEnv<'_> {
    type Hidden = crate::dynamics::Hidden;

    fn reset(&mut self, rows: usize, rng: &mut rand_chacha::ChaCha8Rng) -> (Vec<ForceState>, Self::Hidden) {
        let starts = (0..rows)
            .map(|_| {
                // Prefer starts that are not already at the goal.
                let mut s = self.grid.states[rng.random_range(0..self.grid.len())];
                for _ in 0..16 {
                    if reward(&s, &self.goal, &self.reward, &self.dynamics.norm) < self.reward.goal_reward {
                        break;
                    }
                    s = self.grid.states[rng.random_range(0..self.grid.len())];
                }
                s
            })
            .collect();
        (starts, self.dynamics.zero_hidden(rows))
    }

    fn step(
        &mut self,
        hidden: &mut Self::Hidden,
        states: &[ForceState],
        moves: &[Vec2],
        _step: usize,
    ) -> Result<Vec<ForceState>> {
        Ok(self.dynamics.step_batch(hidden, states, moves))
    }
}

struct SimEnv<'a> {
    sim: &'a ContactSim,
    ring: (f64, f64),
    f_max: f64,
    noise: NoiseStd,
    seed: u64,
    episode: u64,
}

impl RolloutEnv for SimEnv<'_> {
    /// True offsets.
    type Hidden = Vec<Vec2>;

    fn reset(&mut self, rows: usize, _rng: &mut rand_chacha::ChaCha8Rng) -> (Vec<ForceState>, Vec<Vec2>) {
        let mut offsets = Vec::with_capacity(rows);
        let mut states = Vec::with_capacity(rows);
        for _ in 0..rows {
            let s = seed::derive_indexed(self.seed, "online-episode", self.episode);
            self.episode += 1;
            let off = ring_start(self.ring.0, self.ring.1, s);
            let probe = seed::derive_indexed(s, "probe", 0);
            states.push(
                self.sim
                    .probe_multipose(off, self.f_max, self.noise, probe)
                    .expect("probe at a finite offset"),
            );
            offsets.push(off);
        }
        (states, offsets)
    }

    fn step(
        &mut self,
        hidden: &mut Vec<Vec2>,
        _states: &[ForceState],
        moves: &[Vec2],
        step: usize,
    ) -> Result<Vec<ForceState>> {
        hidden
            .iter_mut()
            .zip(moves)
            .enumerate()
            .map(|(r, (off, &m))| {
                *off += m;
                let s = seed::derive_indexed(
                    self.seed,
                    "online-probe",
                    (self.episode << 8) ^ ((r as u64) << 4) ^ step as u64,
                );
                self.sim.probe_multipose(*off, self.f_max, self.noise, s)
            })
            .collect()
    }
}

struct Step {
    trace: Trace,
    action: usize,
    reward: f64,
}

fn train_a2c<E: RolloutEnv>(
    policy: &mut PolicyModel,
    env: &mut E,
    goal: &ForceState,
    reward_cfg: &RewardConfig,
    episodes: usize,
    stream: &str,
    observer: &mut dyn FnMut(usize, &PolicyModel) -> bool,
) -> Result<RlReport> {
    reward_cfg.validate()?;
    let started = Instant::now();
    let cfg = policy.config.clone();
    let mut adam = Adam::new(policy.params.len(), cfg.learning_rate);
    let mut grads = vec![0.0; policy.params.len()];
    let mut returns = Vec::with_capacity(episodes);
    let mut done_episodes = 0;
    let mut update = 0u64;
    while done_episodes < episodes {
        let rows = cfg.envs_per_update.min(episodes - done_episodes);
        let mut rng = seed::rng(seed::derive_indexed(cfg.seed, stream, update));
        update += 1;
        let (mut states, mut hidden) = env.reset(rows, &mut rng);
        let mut alive = vec![true; rows];
        let mut paths: Vec<Vec<Step>> = (0..rows).map(|_| Vec::new()).collect();
        for t in 0..cfg.horizon {
            if !alive.iter().any(|&a| a) {
                break;
            }
            let mut moves = vec![Vec2::ZERO; rows];
            let mut picks = vec![0usize; rows];
            for r in 0..rows {
                if !alive[r] {
                    continue;
                }
                let trace = policy.trace(&states[r]);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut a = N_ACTIONS - 1;
                for (i, &q) in trace.probs.iter().enumerate() {
                    acc += q;
                    if u < acc {
                        a = i;
                        break;
                    }
                }
                picks[r] = a;
                moves[r] = DiscreteAction(a).displacement(cfg.step_size);
                paths[r].push(Step {
                    trace,
                    action: a,
                    reward: 0.0,
                });
            }
            let next = env.step(&mut hidden, &states, &moves, t)?;
            for r in 0..rows {
                if !alive[r] {
                    continue;
                }
                let rew = reward(&next[r], goal, reward_cfg, &policy.norm);
                paths[r].last_mut().expect("pushed above").reward = rew;
                if rew >= reward_cfg.goal_reward {
                    alive[r] = false;
                }
                let _ = picks[r];
            }
            states = next;
        }
        grads.iter_mut().for_each(|g| *g = 0.0);
        let samples: usize = paths.iter().map(|p| p.len()).sum();
        let scale = 1.0 / samples.max(1) as f64;
        let mut loss = 0.0;
        for (r, path) in paths.iter().enumerate() {
            // Truncated episodes bootstrap from the value of the last state.
            let mut ret = if alive[r] { policy.trace(&states[r]).value } else { 0.0 };
            for s in path.iter().rev() {
                ret = s.reward + cfg.gamma * ret;
                let adv = ret - s.trace.value;
                loss += scale * policy.objective(&s.trace, s.action, adv, ret);
                policy.accumulate(&s.trace, s.action, adv, ret, scale, &mut grads);
            }
            returns.push(path.iter().map(|s| s.reward).sum());
        }
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                episode: done_episodes,
                loss,
            });
        }
        clip_grad_norm(&mut grads, cfg.grad_clip);
        adam.step(&mut policy.params, &grads);
        done_episodes += rows;
        if !observer(done_episodes, policy) {
            break;
        }
    }
    Ok(RlReport {
        episodes_run: done_episodes,
        returns,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Trains against the frozen `dynamics` only: episodes start at grid
/// states and every successor state is a model prediction.
pub fn train_offline(
    policy: &mut PolicyModel,
    dynamics: &DynamicsModel,
    grid: &GridTable,
    goal: &ForceState,
    reward_cfg: &RewardConfig,
    episodes: usize,
) -> Result<RlReport> {
    train_offline_with(policy, dynamics, grid, goal, reward_cfg, episodes, &mut |_, _| true)
}

pub fn train_offline_with(
    policy: &mut PolicyModel,
    dynamics: &DynamicsModel,
    grid: &GridTable,
    goal: &ForceState,
    reward_cfg: &RewardConfig,
    episodes: usize,
    observer: &mut dyn FnMut(usize, &PolicyModel) -> bool,
) -> Result<RlReport> {
    let mut env = ModelEnv {
        dynamics,
        grid,
        goal: *goal,
        reward: reward_cfg.clone(),
    };
    train_a2c(policy, &mut env, goal, reward_cfg, episodes, "offline-update", observer)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineConfig {
    pub ring: (f64, f64),
    pub f_max: f64,
    pub noise: NoiseStd,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            ring: crate::mpc::START_RING,
            f_max: 10.0,
            noise: NoiseStd::default(),
        }
    }
}

/// The same actor-critic run directly on the simulator, one probe per
/// state; the baseline that the offline method is compared against.
pub fn train_online(
    policy: &mut PolicyModel,
    sim: &ContactSim,
    goal: &ForceState,
    reward_cfg: &RewardConfig,
    online: &OnlineConfig,
    episodes: usize,
    observer: &mut dyn FnMut(usize, &PolicyModel) -> bool,
) -> Result<RlReport> {
    let mut env = SimEnv {
        sim,
        ring: online.ring,
        f_max: online.f_max,
        noise: online.noise,
        seed: seed::derive(policy.config.seed, "online"),
        episode: 0,
    };
    train_a2c(policy, &mut env, goal, reward_cfg, episodes, "online-update", observer)
}

/// Greedy policy as a controller.
pub struct PolicyController<'a> {
    pub policy: &'a PolicyModel,
}

impl Controller for PolicyController<'_> {
    fn act(&mut self, observation: &ForceState, _offset: Vec2, _seed: u64) -> (Vec2, f64) {
        let a = self.policy.greedy(observation);
        (a.displacement(self.policy.config.step_size), 0.0)
    }
}

pub fn eval_policy(
    sim: &ContactSim,
    policy: &PolicyModel,
    trials: usize,
    ring: (f64, f64),
    cfg: &EpisodeConfig,
    seed_value: u64,
) -> Result<Summary> {
    let mut c = PolicyController { policy };
    run_trials(sim, &mut c, trials, ring, cfg, seed_value)
}

pub const POLICY_MAGIC: &str = "ftdyn-policy";
pub const POLICY_VERSION: &str = "1";

pub fn policy_to_text(p: &PolicyModel) -> String {
    let c = &p.config;
    let mut w = Writer::new(POLICY_MAGIC, POLICY_VERSION);
    w.keyed(
        "config",
        &[
            ("hidden", c.hidden.to_string()),
            ("learning_rate", c.learning_rate.to_string()),
            ("gamma", c.gamma.to_string()),
            ("entropy_weight", c.entropy_weight.to_string()),
            ("value_weight", c.value_weight.to_string()),
            ("horizon", c.horizon.to_string()),
            ("envs_per_update", c.envs_per_update.to_string()),
            ("grad_clip", c.grad_clip.to_string()),
            ("step_size", c.step_size.to_string()),
            ("seed", c.seed.to_string()),
        ],
    );
    w.floats("state_mean", &p.norm.state_mean);
    w.floats("state_std", &p.norm.state_std);
    w.floats("action_mean", &p.norm.action_mean);
    w.floats("action_std", &p.norm.action_std);
    w.block(&p.params);
    w.finish()
}

pub fn policy_from_text(text: &str, path: &Path) -> Result<PolicyModel> {
    let mut r = Reader::open(text, path, POLICY_MAGIC, POLICY_VERSION)?;
    let k = r.keyed("config")?;
    let config = PolicyConfig {
        hidden: k.get("hidden")?,
        learning_rate: k.get("learning_rate")?,
        gamma: k.get("gamma")?,
        entropy_weight: k.get("entropy_weight")?,
        value_weight: k.get("value_weight")?,
        horizon: k.get("horizon")?,
        envs_per_update: k.get("envs_per_update")?,
        grad_clip: k.get("grad_clip")?,
        step_size: k.get("step_size")?,
        seed: k.get("seed")?,
    };
    if config.hidden == 0 {
        return Err(r.err("hidden must be at least 1"));
    }
    let state_mean = r.floats("state_mean", STATE_DIM)?;
    let state_std = r.floats("state_std", STATE_DIM)?;
    let am = r.floats("action_mean", 2)?;
    let asd = r.floats("action_std", 2)?;
    let norm = NormStats {
        state_mean,
        state_std,
        action_mean: [am[0], am[1]],
        action_std: [asd[0], asd[1]],
    };
    if !norm.is_valid() {
        return Err(r.err("invalid normalization statistics"));
    }
    let params = r.block(offsets(config.hidden).len)?;
    r.finish()?;
    Ok(PolicyModel { config, norm, params })
}

pub fn save_policy(p: &PolicyModel, path: &Path) -> Result<()> {
    write_file(path, &policy_to_text(p))
}

pub fn load_policy(path: &Path) -> Result<PolicyModel> {
    policy_from_text(&read_file(path)?, path)
}
