//! The pipeline stages with file I/O. Each reads its inputs from the run
//! directory and writes CSV tables and text artifacts back into it; the
//! computations themselves live in [`crate::pipeline`].

use ftdyn::dataset::{load_dataset, save_dataset};
use ftdyn::dynamics::{eval_error, load_model, save_model};
use ftdyn::mpc::Summary;
use ftdyn::rl::{load_policy, save_policy};
use ftdyn::{ContactSim, DynamicsModel, GridTable, HoleSpec, Trajectory};

use crate::config::ExperimentConfig;
use crate::output::{num, RunDir};
use crate::pipeline::{self, pct, Init};
use crate::CliError;

fn grid_path(id: &str) -> String {
    format!("grids/{id}.grid")
}

fn coarse_grid_path(id: &str, f: f64) -> String {
    format!("grids/{id}-f{}.grid", pct(f))
}

fn train_data_path(id: &str) -> String {
    format!("data/train/{id}.csv")
}

fn finetune_data_path(id: &str, f: f64) -> String {
    format!("data/finetune/{id}-f{}.csv", pct(f))
}

fn heldout_path(id: &str) -> String {
    format!("data/heldout/{id}.csv")
}

const PRETRAINED: &str = "models/pretrained.model";

fn model_path(id: &str, f: f64, init: Init) -> String {
    match init {
        Init::Pretrained => format!("models/{id}-f{}.model", pct(f)),
        Init::Scratch => format!("models/{id}-f{}-scratch.model", pct(f)),
    }
}

fn policy_path(id: &str, f: f64) -> String {
    format!("policies/{id}-f{}.policy", pct(f))
}

struct Hole {
    id: String,
    sim: ContactSim,
}

fn holes(cfg: &ExperimentConfig, specs: Vec<HoleSpec>) -> Result<Vec<Hole>, CliError> {
    specs
        .into_iter()
        .map(|spec| {
            let sim = ContactSim::new(spec, cfg.sim)?;
            Ok(Hole { id: spec.id(), sim })
        })
        .collect()
}

fn load_trajs(run: &mut RunDir, rel: &str) -> Result<Vec<Trajectory>, CliError> {
    let p = run.input(rel, "gen-data")?;
    Ok(load_dataset(&p)?)
}

fn load_dyn(run: &mut RunDir, rel: &str, hint: &str) -> Result<DynamicsModel, CliError> {
    let p = run.input(rel, hint)?;
    Ok(load_model(&p)?)
}

/// Grids and trajectory files for every hole: the full training grids and
/// their datasets, held-out trajectories on every full grid, and one coarse
/// grid plus finetune dataset per test hole and data fraction.
pub fn gen_data(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    for hole in holes(cfg, cfg.train_holes()?)? {
        let grid = pipeline::full_grid(cfg, &hole.sim)?;
        run.write(&grid_path(&hole.id), grid.to_text().as_bytes())?;
        let train = pipeline::training_set(cfg, &grid);
        run.write_with(&train_data_path(&hole.id), |p| save_dataset(&train, p))?;
        let held = pipeline::heldout_set(cfg, &grid);
        run.write_with(&heldout_path(&hole.id), |p| save_dataset(&held, p))?;
    }
    for hole in holes(cfg, cfg.test_holes()?)? {
        let full = pipeline::full_grid(cfg, &hole.sim)?;
        run.write(&grid_path(&hole.id), full.to_text().as_bytes())?;
        let held = pipeline::heldout_set(cfg, &full);
        run.write_with(&heldout_path(&hole.id), |p| save_dataset(&held, p))?;
        for &f in &cfg.finetune.fractions {
            let grid = pipeline::coarse_grid(cfg, &hole.sim, f)?;
            run.write(&coarse_grid_path(&hole.id, f), grid.to_text().as_bytes())?;
            let trajs = pipeline::finetune_set(cfg, &grid, f);
            run.write_with(&finetune_data_path(&hole.id, f), |p| save_dataset(&trajs, p))?;
        }
    }
    Ok(())
}

/// Pretraining on the pooled training-hole datasets; writes the model and
/// `loss_curve.csv` (episode, loss in normalized units).
pub fn train_dynamics(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    let mut pooled = Vec::new();
    for spec in cfg.train_holes()? {
        pooled.extend(load_trajs(run, &train_data_path(&spec.id()))?);
    }
    let (model, report) = pipeline::pretrain(cfg, &pooled)?;
    run.write_with(PRETRAINED, |p| save_model(&model, p))?;
    let rows: Vec<Vec<String>> = report
        .losses
        .iter()
        .enumerate()
        .map(|(e, l)| vec![(e + 1).to_string(), num(*l)])
        .collect();
    run.write_csv("loss_curve.csv", &["episode", "loss"], &rows)
}

/// Finetunes the pretrained model on each test hole's coarse-grid dataset
/// and, if configured, trains a fresh model on the same data and budget.
/// Held-out error is tracked every `eval_every` episodes.
pub fn finetune(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    let pretrained = load_dyn(run, PRETRAINED, "train-dynamics")?;
    let mut curve = Vec::new();
    let mut losses = Vec::new();
    for spec in cfg.test_holes()? {
        let id = spec.id();
        let held = load_trajs(run, &heldout_path(&id))?;
        for &f in &cfg.finetune.fractions {
            let data = load_trajs(run, &finetune_data_path(&id, f))?;
            let mut inits = vec![Init::Pretrained];
            if cfg.finetune.scratch_baseline {
                inits.push(Init::Scratch);
            }
            for init in inits {
                let label = [id.clone(), num(f), init.name().to_string()];
                let pipeline::Adapted {
                    model,
                    curve: points,
                    report,
                } = pipeline::adapt(cfg, &pretrained, init, &data, &held)?;
                for (e, err) in points {
                    curve.push([&label[..], &[e.to_string(), num(err)]].concat());
                }
                for (e, l) in report.losses.iter().enumerate() {
                    losses.push([&label[..], &[(e + 1).to_string(), num(*l)]].concat());
                }
                run.write_with(&model_path(&id, f, init), |p| save_model(&model, p))?;
            }
        }
    }
    run.write_csv(
        "transfer_curve.csv",
        &["hole", "data_fraction", "init", "episode", "err"],
        &curve,
    )?;
    run.write_csv(
        "finetune_loss_curve.csv",
        &["hole", "data_fraction", "init", "episode", "loss"],
        &losses,
    )
}

/// `eval.csv`: held-out error of the zero-shot pretrained model and of every
/// finetuned and scratch model. `eval_training.csv`: the pretrained model on
/// the training holes, checked against the smoke threshold.
pub fn eval_dynamics(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    let pretrained = load_dyn(run, PRETRAINED, "train-dynamics")?;
    let mut rows = Vec::new();
    for spec in cfg.test_holes()? {
        let id = spec.id();
        let held = load_trajs(run, &heldout_path(&id))?;
        rows.push(vec![
            id.clone(),
            num(0.0),
            "pretrained".into(),
            num(eval_error(&pretrained, &held)),
        ]);
        for &f in &cfg.finetune.fractions {
            for init in [Init::Pretrained, Init::Scratch] {
                let rel = model_path(&id, f, init);
                if init == Init::Scratch && !run.exists(&rel) {
                    continue;
                }
                let m = load_dyn(run, &rel, "finetune")?;
                let label = match init {
                    Init::Pretrained => "finetuned",
                    Init::Scratch => "scratch",
                };
                rows.push(vec![id.clone(), num(f), label.into(), num(eval_error(&m, &held))]);
            }
        }
    }
    run.write_csv("eval.csv", &["hole", "data_fraction", "init", "err"], &rows)?;

    let mut smoke = Vec::new();
    let mut worst: Option<(String, f64)> = None;
    if cfg.eval.include_training {
        for spec in cfg.train_holes()? {
            let id = spec.id();
            let held = load_trajs(run, &heldout_path(&id))?;
            let err = eval_error(&pretrained, &held);
            if err > cfg.eval.smoke_threshold && worst.as_ref().is_none_or(|w| err > w.1) {
                worst = Some((id.clone(), err));
            }
            smoke.push(vec![id, num(err)]);
        }
    }
    run.write_csv("eval_training.csv", &["hole", "err"], &smoke)?;
    match worst {
        Some((id, err)) => Err(CliError::Runtime(format!(
            "pretrained model error {err:.3} on training hole {id} exceeds eval.smoke_threshold {}",
            cfg.eval.smoke_threshold
        ))),
        None => Ok(()),
    }
}

struct Condition {
    hole: String,
    controller: &'static str,
    fraction: f64,
    summary: Summary,
}

fn success_rows(conds: &[Condition]) -> Vec<Vec<String>> {
    conds
        .iter()
        .map(|c| {
            let t = &c.summary.trials;
            let steps = t.iter().map(|r| r.steps_taken as f64).sum::<f64>() / t.len().max(1) as f64;
            vec![
                c.hole.clone(),
                c.controller.to_string(),
                num(c.fraction),
                num(c.summary.success_rate),
                num(steps),
            ]
        })
        .collect()
}

fn distance_rows(conds: &[Condition], max_steps: usize) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for c in conds {
        let t = &c.summary.trials;
        let mut sums = vec![0.0; max_steps + 1];
        for r in t {
            for (s, d) in sums.iter_mut().zip(r.distance_curve(max_steps)) {
                *s += d;
            }
        }
        for (step, s) in sums.iter().enumerate() {
            rows.push(vec![
                c.hole.clone(),
                c.controller.to_string(),
                num(c.fraction),
                step.to_string(),
                num(s / t.len().max(1) as f64),
            ]);
        }
    }
    rows
}

fn write_benchmark(run: &mut RunDir, dir: &str, conds: &[Condition], max_steps: usize) -> Result<(), CliError> {
    run.write_csv(
        &format!("{dir}/success.csv"),
        &["hole", "controller", "data_fraction", "success_rate", "mean_steps"],
        &success_rows(conds),
    )?;
    run.write_csv(
        &format!("{dir}/distance_curve.csv"),
        &["hole", "controller", "data_fraction", "step", "mean_distance"],
        &distance_rows(conds, max_steps),
    )
}

fn random_baseline(cfg: &ExperimentConfig, hole: &Hole) -> Result<Option<Condition>, CliError> {
    if !cfg.trials.random_baseline {
        return Ok(None);
    }
    Ok(Some(Condition {
        hole: hole.id.clone(),
        controller: "random",
        fraction: 0.0,
        summary: pipeline::random_trials(cfg, &hole.sim)?,
    }))
}

/// CEM trials per test hole and data fraction; `mpc/success.csv` and
/// `mpc/distance_curve.csv`. The `random` rows are a negative control that
/// ignores the measurement.
pub fn run_mpc(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    let mut conds = Vec::new();
    for hole in holes(cfg, cfg.test_holes()?)? {
        let goal = hole.sim.goal_state(cfg.episode.f_max)?;
        for &f in &cfg.trials.fractions {
            let model = load_dyn(run, &model_path(&hole.id, f, Init::Pretrained), "finetune")?;
            conds.push(Condition {
                hole: hole.id.clone(),
                controller: "mpc",
                fraction: f,
                summary: pipeline::mpc_trials(cfg, &hole.sim, &model, &goal)?,
            });
        }
        conds.extend(random_baseline(cfg, &hole)?);
    }
    write_benchmark(run, "mpc", &conds, cfg.episode.max_steps)
}

/// Offline actor-critic training per test hole and data fraction against
/// the finetuned model, starting from the coarse grid's states. The
/// simulator's probe counter is read around training and reported in
/// `rl/train.csv`.
pub fn train_rl(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    let mut returns = Vec::new();
    let mut summary = Vec::new();
    for hole in holes(cfg, cfg.test_holes()?)? {
        let goal = hole.sim.goal_state(cfg.episode.f_max)?;
        for &f in &cfg.rl_train.fractions {
            let model = load_dyn(run, &model_path(&hole.id, f, Init::Pretrained), "finetune")?;
            let gp = run.input(&coarse_grid_path(&hole.id, f), "gen-data")?;
            let grid = GridTable::load(&gp)?;
            let before = hole.sim.probe_count();
            let pipeline::TrainedPolicy { policy, report, reward } =
                pipeline::train_policy(cfg, &model, &grid, &goal, f)?;
            let probes = hole.sim.probe_count() - before;
            for (e, r) in report.returns.iter().enumerate() {
                returns.push(vec![hole.id.clone(), num(f), (e + 1).to_string(), num(*r)]);
            }
            let tail = report.returns.len().min(100);
            let tail_mean = if tail == 0 {
                0.0
            } else {
                report.returns[report.returns.len() - tail..].iter().sum::<f64>() / tail as f64
            };
            summary.push(vec![
                hole.id.clone(),
                num(f),
                report.episodes_run.to_string(),
                probes.to_string(),
                num(reward.sigma),
                num(tail_mean),
            ]);
            run.write_with(&policy_path(&hole.id, f), |p| save_policy(&policy, p))?;
        }
    }
    run.write_csv(
        "rl/returns.csv",
        &["hole", "data_fraction", "episode", "return"],
        &returns,
    )?;
    run.write_csv(
        "rl/train.csv",
        &[
            "hole",
            "data_fraction",
            "episodes",
            "sim_probes",
            "sigma",
            "final_mean_return",
        ],
        &summary,
    )
}

/// Greedy-policy trials; `rl/success.csv` and `rl/distance_curve.csv`, with
/// the same trial seeds as `run-mpc`.
pub fn eval_policy(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    let mut conds = Vec::new();
    for hole in holes(cfg, cfg.test_holes()?)? {
        for &f in &cfg.rl_train.fractions {
            let p = run.input(&policy_path(&hole.id, f), "train-rl")?;
            let policy = load_policy(&p)?;
            let summary = pipeline::policy_trials(cfg, &hole.sim, &policy)?;
            conds.push(Condition {
                hole: hole.id.clone(),
                controller: "rl",
                fraction: f,
                summary,
            });
        }
        conds.extend(random_baseline(cfg, &hole)?);
    }
    write_benchmark(run, "rl", &conds, cfg.episode.max_steps)
}
