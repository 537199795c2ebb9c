//! The experiment protocol as pure functions of the configuration, shared by
//! the commands (which add file I/O) and by the acceptance suite.
//!
//! Child seeds are derived from the root seed and a tag naming the purpose
//! and hole, so adding or reordering holes never changes another hole's
//! stream. All controllers on one hole share the trial seed, which makes the
//! start positions and sensor noise paired across conditions.

use ftdyn::dataset::{generate_trajectories, sample_grid, side_for_fraction};
use ftdyn::dynamics::{eval_error, init_model, NormStats};
use ftdyn::mpc::{run_trials, CemController, RandomController, Summary};
use ftdyn::rl::{eval_policy, init_policy, train_offline_with, PolicyModel, RewardConfig, RlReport};
use ftdyn::seed::derive;
use ftdyn::{ContactSim, DynamicsModel, ForceState, GridTable, Result, TrainReport, Trajectory, Vec2};

use crate::config::ExperimentConfig;

/// File-name label of a data fraction: `0.2 -> "20"`.
pub fn pct(fraction: f64) -> String {
    let p = fraction * 100.0;
    if (p - p.round()).abs() < 1e-9 {
        format!("{}", p.round() as i64)
    } else {
        format!("{p}").replace('.', "p")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Continue from the pretrained model at the finetune learning rate.
    Pretrained,
    /// Fresh weights and normalization, full learning rate.
    Scratch,
}

impl Init {
    pub fn name(self) -> &'static str {
        match self {
            Init::Pretrained => "pretrained",
            Init::Scratch => "scratch",
        }
    }
}

fn action_std(grid: &GridTable, scale: f64) -> Vec2 {
    let s = grid.spacing();
    Vec2::new(s.x * scale, s.y * scale)
}

pub fn full_grid(cfg: &ExperimentConfig, sim: &ContactSim) -> Result<GridTable> {
    sample_grid(sim, cfg.grid.n, cfg.grid.range, cfg.sim.f_max)
}

/// The coarse grid holding `fraction` of the full grid's points.
pub fn coarse_grid(cfg: &ExperimentConfig, sim: &ContactSim, fraction: f64) -> Result<GridTable> {
    let n = side_for_fraction(cfg.grid.n, fraction);
    sample_grid(sim, n, cfg.grid.range, cfg.sim.f_max)
}

/// Pretraining trajectories on a training hole's full grid.
pub fn training_set(cfg: &ExperimentConfig, grid: &GridTable) -> Vec<Trajectory> {
    let d = &cfg.data;
    let seed = derive(cfg.seed, &format!("train-data/{}", grid.spec_id));
    generate_trajectories(
        grid,
        d.trajectories_per_hole,
        d.horizon,
        action_std(grid, d.action_std_scale),
        seed,
    )
}

/// Held-out trajectories on a hole's full grid.
pub fn heldout_set(cfg: &ExperimentConfig, grid: &GridTable) -> Vec<Trajectory> {
    let d = &cfg.data;
    let seed = derive(cfg.seed, &format!("heldout/{}", grid.spec_id));
    generate_trajectories(grid, d.heldout, d.horizon, action_std(grid, d.action_std_scale), seed)
}

/// Finetune trajectories on a coarse grid; the step std follows that grid's
/// own spacing.
pub fn finetune_set(cfg: &ExperimentConfig, grid: &GridTable, fraction: f64) -> Vec<Trajectory> {
    let d = &cfg.data;
    let seed = derive(cfg.seed, &format!("finetune-data/{}-f{}", grid.spec_id, pct(fraction)));
    generate_trajectories(
        grid,
        d.finetune_trajectories,
        d.horizon,
        action_std(grid, d.action_std_scale),
        seed,
    )
}

pub fn pretrain(cfg: &ExperimentConfig, pooled: &[Trajectory]) -> Result<(DynamicsModel, TrainReport)> {
    let mut model = init_model(&cfg.dynamics, derive(cfg.seed, "pretrain"));
    let report = model.train(pooled, cfg.pretrain.episodes)?;
    Ok((model, report))
}

#[derive(Debug, Clone)]
pub struct Adapted {
    pub model: DynamicsModel,
    /// `(episodes completed, held-out error)`, from 0 every `eval_every`
    /// episodes and at the end.
    pub curve: Vec<(usize, f64)>,
    pub report: TrainReport,
}

/// Trains on one hole's finetune data, either continuing from `pretrained`
/// or from fresh weights with the same episode budget.
pub fn adapt(
    cfg: &ExperimentConfig,
    pretrained: &DynamicsModel,
    init: Init,
    data: &[Trajectory],
    heldout: &[Trajectory],
) -> Result<Adapted> {
    let every = cfg.finetune.eval_every;
    let mut model = match init {
        Init::Pretrained => pretrained.clone(),
        Init::Scratch => {
            let mut m = init_model(&cfg.dynamics, derive(cfg.seed, "scratch"));
            // Same statistics `train_with` fits, so the episode-0 point is
            // measured in the model's own normalization.
            m.norm = NormStats::fit(data, cfg.dynamics.force_std_floor, cfg.dynamics.torque_std_floor);
            m
        }
    };
    let mut curve = vec![(0, eval_error(&model, heldout))];
    let mut observer = |done: usize, m: &DynamicsModel| {
        if done.is_multiple_of(every) {
            curve.push((done, eval_error(m, heldout)));
        }
        true
    };
    let report = match init {
        Init::Pretrained => model.finetune_with(data, cfg.finetune.episodes, &mut observer)?,
        Init::Scratch => model.train_with(data, cfg.finetune.episodes, &mut observer)?,
    };
    if report.episodes_run % every != 0 {
        curve.push((report.episodes_run, eval_error(&model, heldout)));
    }
    Ok(Adapted { model, curve, report })
}

pub fn trial_seed(cfg: &ExperimentConfig, hole_id: &str) -> u64 {
    derive(cfg.seed, &format!("trials/{hole_id}"))
}

pub fn mpc_trials(
    cfg: &ExperimentConfig,
    sim: &ContactSim,
    model: &DynamicsModel,
    goal: &ForceState,
) -> Result<Summary> {
    let mut c = CemController {
        model,
        goal: *goal,
        config: cfg.mpc.clone(),
        use_position: false,
    };
    let seed = trial_seed(cfg, &sim.spec().id());
    run_trials(sim, &mut c, cfg.trials.count, cfg.trials.ring, &cfg.episode, seed)
}

/// Gaussian actions at the planner's initial spread; a negative control.
pub fn random_trials(cfg: &ExperimentConfig, sim: &ContactSim) -> Result<Summary> {
    let mut c = RandomController { std: cfg.mpc.init_std };
    let seed = trial_seed(cfg, &sim.spec().id());
    run_trials(sim, &mut c, cfg.trials.count, cfg.trials.ring, &cfg.episode, seed)
}

pub fn policy_trials(cfg: &ExperimentConfig, sim: &ContactSim, policy: &PolicyModel) -> Result<Summary> {
    let seed = trial_seed(cfg, &sim.spec().id());
    eval_policy(sim, policy, cfg.trials.count, cfg.trials.ring, &cfg.episode, seed)
}

#[derive(Debug, Clone)]
pub struct TrainedPolicy {
    pub policy: PolicyModel,
    pub report: RlReport,
    pub reward: RewardConfig,
}

/// Offline actor-critic against the frozen `model`, starting from `grid`'s
/// states.
pub fn train_policy(
    cfg: &ExperimentConfig,
    model: &DynamicsModel,
    grid: &GridTable,
    goal: &ForceState,
    fraction: f64,
) -> Result<TrainedPolicy> {
    let reward = RewardConfig::for_grid(grid, goal, &model.norm);
    let seed = derive(cfg.seed, &format!("policy/{}-f{}", grid.spec_id, pct(fraction)));
    let mut policy = init_policy(&cfg.rl, &model.norm, seed);
    let report = train_offline_with(
        &mut policy,
        model,
        grid,
        goal,
        &reward,
        cfg.rl_train.episodes,
        &mut |_, _| true,
    )?;
    Ok(TrainedPolicy { policy, report, reward })
}
