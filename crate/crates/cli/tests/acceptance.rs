//! End-to-end acceptance checks at the default configuration.
//!
//! Each test writes one `criterion N [name]: PASS|FAIL ...` line straight to
//! stderr, so the line shows even when libtest captures output, and then
//! asserts. Trained models are shared between tests through process-wide
//! caches; every entry is a pure function of its key.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use ftdyn::contact_sim::{Tilt, POSES, STATE_DIM};
use ftdyn::dataset::{generate_trajectories, lattice, sample_grid};
use ftdyn::dynamics::{init_model, GradMutation, GridOracle, NormStats};
use ftdyn::geometry::{catalog, CatalogRole, Shape};
use ftdyn::mpc::{cem_plan, run_trials, CemController, PlanConfig, Summary};
use ftdyn::rl::{
    eval_policy, init_policy, normalized_distance_sq, reward, similarity, train_online, OnlineConfig, RewardConfig,
};
use ftdyn::seed::derive;
use ftdyn::{
    ContactSim, DynamicsConfig, DynamicsModel, ForceState, ForceTorque, Forward, GridTable, HoleSpec, ShapeKind,
    Trajectory, Vec2,
};
use ftdyn_cli::pipeline::{self, Adapted, Init, TrainedPolicy};
use ftdyn_cli::{main_with, ExperimentConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config as RunnerConfig, RngAlgorithm, TestCaseError, TestRng, TestRunner};

const SEEDS: [u64; 3] = [0, 1, 2];
/// The unseen-shape hole used where one hole stands for all.
const PROBE_HOLE: &str = "hexagon";

fn verdict(n: u32, name: &str, pass: bool, started: Instant, detail: &str) {
    let line = format!(
        "criterion {n} [{name}]: {} ({:.0}s) {detail}\n",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn say(text: &str) {
    let _ = std::io::stderr().write_all(format!("    {text}\n").as_bytes());
}

/// One cell per key; concurrent callers with the same key wait for the first.
struct Memo<K, V>(Mutex<BTreeMap<K, Arc<OnceLock<Arc<V>>>>>);

impl<K: Ord, V> Memo<K, V> {
    const fn new() -> Self {
        Memo(Mutex::new(BTreeMap::new()))
    }

    fn get(&self, key: K, init: impl FnOnce() -> V) -> Arc<V> {
        let cell = self.0.lock().unwrap().entry(key).or_default().clone();
        cell.get_or_init(|| Arc::new(init())).clone()
    }
}

fn config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        ..ExperimentConfig::default()
    }
}

struct TestHole {
    sim: ContactSim,
    full: GridTable,
    goal: ForceState,
}

fn test_hole_ids() -> Vec<String> {
    config(0).test_holes().unwrap().iter().map(HoleSpec::id).collect()
}

fn hole_id(prefix: &str) -> String {
    test_hole_ids().into_iter().find(|id| id.starts_with(prefix)).unwrap()
}

fn test_hole(id: &str) -> Arc<TestHole> {
    static M: Memo<String, TestHole> = Memo::new();
    M.get(id.to_string(), || {
        let cfg = config(0);
        let spec = cfg.test_holes().unwrap().into_iter().find(|s| s.id() == id).unwrap();
        let sim = ContactSim::new(spec, cfg.sim).unwrap();
        let full = pipeline::full_grid(&cfg, &sim).unwrap();
        let goal = sim.goal_state(cfg.sim.f_max).unwrap();
        TestHole { sim, full, goal }
    })
}

fn heldout(seed: u64, id: &str) -> Arc<Vec<Trajectory>> {
    static M: Memo<(u64, String), Vec<Trajectory>> = Memo::new();
    M.get((seed, id.to_string()), || {
        pipeline::heldout_set(&config(seed), &test_hole(id).full)
    })
}

fn pretrained(seed: u64) -> Arc<DynamicsModel> {
    static M: Memo<u64, DynamicsModel> = Memo::new();
    M.get(seed, || {
        let cfg = config(seed);
        let mut pooled = Vec::new();
        for spec in cfg.train_holes().unwrap() {
            let sim = ContactSim::new(spec, cfg.sim).unwrap();
            let grid = pipeline::full_grid(&cfg, &sim).unwrap();
            pooled.extend(pipeline::training_set(&cfg, &grid));
        }
        pipeline::pretrain(&cfg, &pooled).unwrap().0
    })
}

fn coarse(id: &str, fraction: f64) -> GridTable {
    pipeline::coarse_grid(&config(0), &test_hole(id).sim, fraction).unwrap()
}

fn adapted(seed: u64, id: &str, fraction: f64, init: Init) -> Arc<Adapted> {
    static M: Memo<(u64, String, String, &'static str), Adapted> = Memo::new();
    M.get((seed, id.to_string(), pipeline::pct(fraction), init.name()), || {
        let cfg = config(seed);
        let data = pipeline::finetune_set(&cfg, &coarse(id, fraction), fraction);
        pipeline::adapt(&cfg, &pretrained(seed), init, &data, &heldout(seed, id)).unwrap()
    })
}

fn finetuned(id: &str, fraction: f64) -> Arc<Adapted> {
    adapted(0, id, fraction, Init::Pretrained)
}

fn trials_config(count: usize) -> ExperimentConfig {
    let mut cfg = config(0);
    cfg.trials.count = count;
    cfg
}

fn mpc_summary(id: &str, fraction: f64, count: usize) -> Arc<Summary> {
    static M: Memo<(String, String, usize), Summary> = Memo::new();
    M.get((id.to_string(), pipeline::pct(fraction), count), || {
        let h = test_hole(id);
        pipeline::mpc_trials(&trials_config(count), &h.sim, &finetuned(id, fraction).model, &h.goal).unwrap()
    })
}

fn policy(id: &str, fraction: f64) -> Arc<TrainedPolicy> {
    static M: Memo<(String, String), TrainedPolicy> = Memo::new();
    M.get((id.to_string(), pipeline::pct(fraction)), || {
        let h = test_hole(id);
        pipeline::train_policy(
            &config(0),
            &finetuned(id, fraction).model,
            &coarse(id, fraction),
            &h.goal,
            fraction,
        )
        .unwrap()
    })
}

fn rl_summary(id: &str, fraction: f64, count: usize) -> Arc<Summary> {
    static M: Memo<(String, String, usize), Summary> = Memo::new();
    M.get((id.to_string(), pipeline::pct(fraction), count), || {
        let h = test_hole(id);
        pipeline::policy_trials(&trials_config(count), &h.sim, &policy(id, fraction).policy).unwrap()
    })
}

fn success_rate(trials: &[ftdyn::mpc::TrialResult]) -> f64 {
    trials.iter().filter(|t| t.success).count() as f64 / trials.len() as f64
}

/// Mean over trials of the distance to the centre after `step` actions.
fn mean_distance(trials: &[ftdyn::mpc::TrialResult], step: usize, max_steps: usize) -> f64 {
    trials.iter().map(|t| t.distance_curve(max_steps)[step]).sum::<f64>() / trials.len() as f64
}

#[test]
fn criterion_1_gradient_correctness() {
    let started = Instant::now();
    let sim = ContactSim::new(HoleSpec::new(ShapeKind::Square, 20.0, 5.0).unwrap(), Default::default()).unwrap();
    let grid = sample_grid(&sim, 9, (4.0, 4.0), 10.0).unwrap();
    let mut worst = 0.0f64;
    let mut control = f64::INFINITY;
    for seed in 0..5u64 {
        let hidden = [4, 6, 8][seed as usize % 3];
        let probe = generate_trajectories(&grid, 3, 3, Vec2::new(0.25, 0.25), 100 + seed);
        assert!(probe.iter().all(|t| t.actions.len() == 3));
        let mut m = init_model(
            &DynamicsConfig {
                hidden,
                ..DynamicsConfig::default()
            },
            seed,
        );
        m.norm = NormStats::fit(&probe, 0.1, 0.004);
        worst = worst.max(m.gradient_check(&probe, GradMutation::None));
        control = control.min(m.gradient_check(&probe, GradMutation::ScaleHead(1.1)));
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = worst < 1e-4 && control > 1e-2 && secs < 60.0;
    verdict(
        1,
        "gradient correctness",
        pass,
        started,
        &format!("max rel err {worst:.2e} < 1e-4; mutated head {control:.2e} > 1e-2"),
    );
    assert!(pass);
}

#[test]
fn criterion_2_oracle_planner_success() {
    let started = Instant::now();
    let cfg = config(0);
    let mut rates = Vec::new();
    for spec in cfg.train_holes().unwrap() {
        let sim = ContactSim::new(spec, cfg.sim).unwrap();
        let grid = pipeline::full_grid(&cfg, &sim).unwrap();
        let oracle = GridOracle::new(&grid);
        let mut c = CemController {
            model: &oracle,
            goal: sim.goal_state(cfg.sim.f_max).unwrap(),
            config: cfg.mpc.clone(),
            use_position: true,
        };
        let s = run_trials(
            &sim,
            &mut c,
            100,
            cfg.trials.ring,
            &cfg.episode,
            pipeline::trial_seed(&cfg, &spec.id()),
        )
        .unwrap();
        rates.push((spec.id(), s.success_rate));
    }
    let (worst_id, worst) = rates.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap().clone();
    let secs = started.elapsed().as_secs_f64();
    let pass = worst >= 0.95 && secs < 600.0;
    verdict(
        2,
        "oracle planner",
        pass,
        started,
        &format!(
            "{} holes x 100 trials; worst {worst_id} {worst:.2} >= 0.95",
            rates.len()
        ),
    );
    assert!(pass, "{rates:?}");
}

#[test]
fn criterion_3_finetuned_dynamics_error() {
    let started = Instant::now();
    let id = hole_id(PROBE_HOLE);
    let errs: Vec<f64> = SEEDS
        .iter()
        .map(|&s| adapted(s, &id, 0.2, Init::Pretrained).curve.last().unwrap().1)
        .collect();
    for (s, e) in SEEDS.iter().zip(&errs) {
        say(&format!(
            "{id} seed {s}: zero-shot {:.2}, finetuned {e:.2}",
            adapted(*s, &id, 0.2, Init::Pretrained).curve[0].1
        ));
    }
    for other in test_hole_ids() {
        let a = finetuned(&other, 0.2);
        say(&format!(
            "{other} seed 0: zero-shot {:.2}, finetuned {:.2}",
            a.curve[0].1,
            a.curve.last().unwrap().1
        ));
    }
    let pass = errs.iter().all(|&e| e < 0.1);
    let shown: Vec<String> = errs.iter().map(|e| format!("{e:.2}")).collect();
    verdict(
        3,
        "finetuned dynamics error",
        pass,
        started,
        &format!("{id} Err over 3 seeds [{}], all < 0.1", shown.join(", ")),
    );
    assert!(pass, "{errs:?}");
}

/// First curve episode at which the error is at most `target`; `None` if
/// the curve never gets there.
fn episodes_to_reach(curve: &[(usize, f64)], target: f64) -> Option<usize> {
    curve.iter().find(|(_, e)| *e <= target).map(|(ep, _)| *ep)
}

#[test]
fn criterion_4_transfer_sample_efficiency() {
    let started = Instant::now();
    let id = hole_id(PROBE_HOLE);
    let budget = config(0).finetune.episodes;
    let mut ratios = Vec::new();
    let mut low_data = Vec::new();
    for &s in &SEEDS {
        let pre = adapted(s, &id, 0.2, Init::Pretrained);
        let scr = adapted(s, &id, 0.2, Init::Scratch);
        let target = 2.0 * pre.curve.last().unwrap().1;
        let need_pre = episodes_to_reach(&pre.curve, target).expect("the final point meets twice itself");
        // A scratch run that never gets there is charged the whole budget,
        // which can only understate its requirement.
        let need_scr = episodes_to_reach(&scr.curve, target);
        let ratio = match need_scr.unwrap_or(budget) {
            0 => 1.0,
            n => need_pre as f64 / n as f64,
        };
        ratios.push(ratio);
        say(&format!(
            "seed {s}: E* {target:.2}; pretrained reaches it at {need_pre}, scratch at {}; ratio {ratio:.2}",
            need_scr.map_or(format!(">{budget}"), |n| n.to_string())
        ));
        let e_pre = adapted(s, &id, 0.02, Init::Pretrained).curve.last().unwrap().1;
        let e_scr = adapted(s, &id, 0.02, Init::Scratch).curve.last().unwrap().1;
        say(&format!(
            "seed {s}: 2% data Err pretrained {e_pre:.2} vs scratch {e_scr:.2}"
        ));
        low_data.push((e_pre, e_scr));
    }
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let pre2 = low_data.iter().map(|p| p.0).sum::<f64>() / low_data.len() as f64;
    let scr2 = low_data.iter().map(|p| p.1).sum::<f64>() / low_data.len() as f64;
    let pass = mean_ratio <= 0.3 && pre2 < scr2;
    verdict(
        4,
        "transfer sample efficiency",
        pass,
        started,
        &format!("mean episode ratio {mean_ratio:.2} <= 0.30; 2% mean Err pretrained {pre2:.2} < scratch {scr2:.2}"),
    );
    assert!(pass);
}

#[test]
fn criterion_5_controller_success() {
    let started = Instant::now();
    let mut rows = Vec::new();
    for id in test_hole_ids() {
        let m = mpc_summary(&id, 0.2, 100).success_rate;
        let r = rl_summary(&id, 0.2, 100).success_rate;
        say(&format!("{id}: MPC {m:.2}, RL {r:.2}"));
        rows.push((id, m, r));
    }
    let mpc_ok = rows.iter().all(|r| r.1 >= 0.80);
    let rl_ok = rows.iter().all(|r| r.2 >= 0.85);
    let rl_wins = rows.iter().filter(|r| r.2 >= r.1).count();
    let pass = mpc_ok && rl_ok && rl_wins >= 4;
    let min_m = rows.iter().map(|r| r.1).fold(1.0, f64::min);
    let min_r = rows.iter().map(|r| r.2).fold(1.0, f64::min);
    verdict(
        5,
        "controller success",
        pass,
        started,
        &format!("min MPC {min_m:.2} >= 0.80; min RL {min_r:.2} >= 0.85; RL >= MPC on {rl_wins}/6 (need 4)"),
    );
    assert!(pass, "{rows:?}");
}

#[test]
fn criterion_6_data_quality_orders_control_quality() {
    let started = Instant::now();
    const TRIALS: usize = 20;
    let max_steps = config(0).episode.max_steps;
    let mut checks = Vec::new();
    let mut parts = Vec::new();
    let controllers: [(&str, fn(&str, f64, usize) -> Arc<Summary>); 2] = [("MPC", mpc_summary), ("RL", rl_summary)];
    for (controller, run) in controllers {
        for fraction in [0.02, 0.2, 0.4] {
            let mut pooled = Vec::new();
            for id in test_hole_ids() {
                // Trial i depends only on its own seed, so the first 20 of
                // the 100 benchmark trials are the 20-trial condition.
                let count = if fraction == 0.2 { 100 } else { TRIALS };
                let s = run(&id, fraction, count);
                let t = &s.trials[..TRIALS];
                say(&format!(
                    "{controller} {}% {id}: success {:.2}, mean distance step 4 {:.2}, step {max_steps} {:.2}",
                    pipeline::pct(fraction),
                    success_rate(t),
                    mean_distance(t, 4, max_steps),
                    mean_distance(t, max_steps, max_steps)
                ));
                pooled.extend_from_slice(t);
            }
            let (step, ok, value) = if fraction == 0.02 {
                let d = mean_distance(&pooled, max_steps, max_steps);
                (max_steps, d > 1.0, d)
            } else {
                let d = mean_distance(&pooled, 4, max_steps);
                (4, d < 0.5, d)
            };
            let rel = if fraction == 0.02 { ">" } else { "<" };
            let bound = if fraction == 0.02 { 1.0 } else { 0.5 };
            parts.push(format!(
                "{controller} {}% d{step} {value:.2} {rel} {bound}",
                pipeline::pct(fraction)
            ));
            checks.push(ok);
        }
    }
    let pass = checks.iter().all(|&c| c);
    verdict(
        6,
        "data quality orders control quality",
        pass,
        started,
        &parts.join("; "),
    );
    assert!(pass);
}

#[test]
fn criterion_7_offline_training_never_probes() {
    let started = Instant::now();
    let cfg = config(0);
    let id = hole_id(PROBE_HOLE);
    let spec = cfg.test_holes().unwrap().into_iter().find(|s| s.id() == id).unwrap();

    // Probes spent by the offline method: the coarse grid and the goal.
    let sim = ContactSim::new(spec, cfg.sim).unwrap();
    let grid = pipeline::coarse_grid(&cfg, &sim, 0.2).unwrap();
    let goal = sim.goal_state(cfg.sim.f_max).unwrap();
    let offline_probes = sim.probe_count();
    let model = finetuned(&id, 0.2);
    let before = sim.probe_count();
    let trained = pipeline::train_policy(&cfg, &model.model, &grid, &goal, 0.2).unwrap();
    let during = sim.probe_count() - before;
    assert_eq!(
        trained.policy,
        policy(&id, 0.2).policy,
        "the cached policy is the same computation"
    );

    let eval_trials = 20;
    let target = success_rate(&rl_summary(&id, 0.2, 100).trials[..eval_trials]);

    let train_sim = ContactSim::new(spec, cfg.sim).unwrap();
    let eval_sim = ContactSim::new(spec, cfg.sim).unwrap();
    let online = OnlineConfig {
        ring: cfg.trials.ring,
        f_max: cfg.episode.f_max,
        noise: cfg.episode.noise,
    };
    let mut learner = init_policy(&cfg.rl, &model.model.norm, derive(cfg.seed, "online-policy"));
    let budget = cfg.rl_train.episodes;
    let check_every = 10 * cfg.rl.envs_per_update;
    let mut reached = None;
    let mut best = 0.0f64;
    train_online(
        &mut learner,
        &train_sim,
        &goal,
        &trained.reward,
        &online,
        budget,
        &mut |done, p| {
            if done % check_every != 0 {
                return true;
            }
            let s = eval_policy(
                &eval_sim,
                p,
                eval_trials,
                cfg.trials.ring,
                &cfg.episode,
                pipeline::trial_seed(&cfg, &id),
            )
            .unwrap();
            best = best.max(s.success_rate);
            if s.success_rate >= target {
                reached = Some(done);
                return false;
            }
            true
        },
    )
    .unwrap();
    let online_probes = train_sim.probe_count();
    // Without reaching the target the count so far is a lower bound on the
    // probes online training would need.
    let multiple = online_probes as f64 / offline_probes as f64;
    let pass = during == 0 && multiple > 100.0;
    let outcome = match reached {
        Some(ep) => format!("reached {target:.2} after {ep} episodes"),
        None => format!("best {best:.2} < {target:.2} within {budget} episodes"),
    };
    verdict(
        7,
        "offline purity",
        pass,
        started,
        &format!("{during} probes during offline training; online {online_probes} vs offline {offline_probes} probes ({multiple:.0}x > 100x, {outcome})"),
    );
    assert!(pass);
}

const TINY: &str = r#"
[holes]
train = ["round,10,5,1", "square,20,5,1"]
test = ["hexagon,15,50,1"]
[data]
trajectories_per_hole = 30
finetune_trajectories = 30
heldout = 5
[pretrain]
episodes = 20
[finetune]
episodes = 20
fractions = [0.2, 0.02]
eval_every = 10
[trials]
count = 3
fractions = [0.2]
[rl_train]
episodes = 20
fractions = [0.2]
[mpc]
n_samples = 20
cem_iters = 2
[eval]
smoke_threshold = 1e6
"#;

fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_string_lossy().into_owned(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn criterion_8_reruns_are_byte_identical() {
    let started = Instant::now();
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("cfg.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let commands = [
        "gen-data",
        "train-dynamics",
        "finetune",
        "eval-dynamics",
        "run-mpc",
        "train-rl",
        "eval-policy",
    ];
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let out = t.path().join(run);
        for c in commands {
            let args = [
                c,
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seed",
                "7",
            ];
            assert_eq!(main_with(std::iter::once("ftdyn").chain(args)), 0, "{c}");
        }
        let report_out = t.path().join(format!("report-{run}"));
        let dirs = [t.path().join("a"), out.clone()];
        let mut args = vec![
            "ftdyn".to_string(),
            "report".into(),
            "--out".into(),
            report_out.to_string_lossy().into_owned(),
        ];
        args.extend(dirs.iter().map(|d| d.to_string_lossy().into_owned()));
        assert_eq!(main_with(args), 0);
        let mut tree = files(&out);
        tree.insert(
            "report.csv".into(),
            std::fs::read(report_out.join("report.csv")).unwrap(),
        );
        trees.push(tree);
    }
    let (a, b) = (&trees[0], &trees[1]);
    let differing: Vec<&String> = a.keys().filter(|k| b.get(*k) != a.get(*k)).collect();
    let csvs = a.keys().filter(|k| k.ends_with(".csv")).count();
    let pass = a.keys().eq(b.keys()) && differing.is_empty() && csvs > 0;
    verdict(
        8,
        "determinism",
        pass,
        started,
        &format!(
            "{} files ({csvs} CSV) over 8 commands, {} differ",
            a.len(),
            differing.len()
        ),
    );
    assert!(pass, "{differing:?}");
}

fn runner() -> TestRunner {
    let cfg = RunnerConfig {
        cases: 1000,
        failure_persistence: None,
        ..RunnerConfig::default()
    };
    TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn all_holes() -> Vec<HoleSpec> {
    let mut v = catalog(CatalogRole::Training);
    v.extend(catalog(CatalogRole::Testing));
    v
}

fn segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn sdf_suite(holes: &[HoleSpec]) -> Result<(), String> {
    let n = holes.len();
    runner()
        .run(
            &(0..n, -25.0..25.0f64, -25.0..25.0f64, -1.0..1.0f64, -1.0..1.0f64),
            |(i, x, y, dx, dy)| {
                let shape = holes[i].shape();
                let p = Vec2::new(x, y);
                let d = shape.sdf(p);
                if d.abs() > 1e-9 {
                    prop_assert_eq!(d < 0.0, shape.contains(p), "sign vs containment at {:?}", p);
                }
                let q = p + Vec2::new(dx, dy);
                prop_assert!((shape.sdf(q) - d).abs() <= (q - p).norm() + 1e-9, "not 1-Lipschitz");
                match &shape {
                    Shape::Disk { radius } => prop_assert!((d - (p.norm() - radius)).abs() < 1e-12),
                    Shape::Polygon { vertices } => {
                        let edge = (0..vertices.len())
                            .map(|k| segment_distance(p, vertices[k], vertices[(k + 1) % vertices.len()]))
                            .fold(f64::INFINITY, f64::min);
                        prop_assert!((d.abs() - edge).abs() < 1e-9, "{} vs edge distance {}", d, edge);
                    }
                    _ => {}
                }
                Ok(())
            },
        )
        .map_err(|e| e.to_string())
}

fn nearest_suite() -> Result<(), String> {
    runner()
        .run(
            &(2usize..10, 1.0..8.0f64, 1.0..8.0f64, -6.0..6.0f64, -6.0..6.0f64),
            |(n, rx, ry, x, y)| {
                let positions = lattice(n, (rx, ry));
                let grid = GridTable {
                    spec_id: "probe".into(),
                    n,
                    range: (rx, ry),
                    states: vec![ForceState::default(); positions.len()],
                    positions,
                    f_max: 10.0,
                };
                let p = Vec2::new(x, y);
                let mut d: Vec<(f64, usize)> = grid
                    .positions
                    .iter()
                    .enumerate()
                    .map(|(i, &q)| ((q - p).norm_sq(), i))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                if d[1].0 - d[0].0 < 1e-9 {
                    return Err(TestCaseError::reject("tie"));
                }
                prop_assert_eq!(grid.nearest_index(p), d[0].1);
                Ok(())
            },
        )
        .map_err(|e| e.to_string())
}

fn descent_suite(sims: &[ContactSim]) -> Result<(), String> {
    let n = sims.len();
    runner()
        .run(&(0..n, -3.0..3.0f64, -3.0..3.0f64, 0usize..POSES), |(i, x, y, pose)| {
            let s = &sims[i];
            let tilt = Tilt::poses(s.config().tilt_deg)[pose];
            let r = s.solve_descent(Vec2::new(x, y), tilt, 10.0).unwrap();
            if r.inserted {
                prop_assert_eq!(r.reading, ForceTorque::inserted(10.0));
            } else {
                let bound = s.config().depth_tol * s.spec().elasticity * s.footprint().area();
                prop_assert!(
                    (r.reading.fz - 10.0).abs() <= bound,
                    "fz {} off by more than {}",
                    r.reading.fz,
                    bound
                );
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn layout_suite(grids: &[(GridTable, ForceState)]) -> Result<(), String> {
    let reading = (
        -50.0..50.0f64,
        -50.0..50.0f64,
        -50.0..50.0f64,
        -5.0..5.0f64,
        -5.0..5.0f64,
        -5.0..5.0f64,
    )
        .prop_map(|(fx, fy, fz, tx, ty, tz)| ForceTorque { fx, fy, fz, tx, ty, tz });
    runner()
        .run(&proptest::array::uniform5(reading), |readings| {
            let s = ForceState::from_readings(&readings);
            for (p, r) in readings.iter().enumerate() {
                prop_assert_eq!(s.reading(p), *r);
                prop_assert_eq!(&s.force_part()[3 * p..3 * p + 3], &[r.fx, r.fy, r.fz]);
                prop_assert_eq!(&s.torque_part()[3 * p..3 * p + 3], &[r.tx, r.ty, r.tz]);
            }
            prop_assert_eq!(ForceState::parse_csv(&s.to_csv()), Some(s));
            Ok(())
        })
        .map_err(|e| format!("layout: {e}"))?;
    distinguishability(grids)
}

/// Six channels of the level pose.
fn level_reading(s: &ForceState) -> [f64; 6] {
    let r = s.reading(0);
    [r.fx, r.fy, r.fz, r.tx, r.ty, r.tz]
}

/// Exhaustive over every pair of grid points on every hole, skipping pairs
/// where both points read the seated state: no two points share a state,
/// and the closest pair of full states is further apart than the closest
/// pair of level-pose readings.
fn distinguishability(grids: &[(GridTable, ForceState)]) -> Result<(), String> {
    let mut bad = Vec::new();
    for (grid, goal) in grids {
        let (mut full, mut level, mut same) = (f64::INFINITY, f64::INFINITY, 0usize);
        for i in 0..grid.len() {
            for j in i + 1..grid.len() {
                let (a, b) = (&grid.states[i], &grid.states[j]);
                if a == goal && b == goal {
                    continue;
                }
                let d = a.distance_sq(b).sqrt();
                let (la, lb) = (level_reading(a), level_reading(b));
                let dl = la.iter().zip(&lb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                same += usize::from(d == 0.0);
                full = full.min(d);
                level = level.min(dl);
            }
        }
        if same > 0 || full <= level {
            bad.push(format!(
                "{} ({same} identical pairs, closest {full:.1e} vs level {level:.1e})",
                grid.spec_id
            ));
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(format!(
            "distinguishability fails on {}/{} holes: {}",
            bad.len(),
            grids.len(),
            bad.join(", ")
        ))
    }
}

fn reward_suite() -> Result<(), String> {
    let norm = NormStats::default();
    runner()
        .run(
            &(0.01..100.0f64, 0.01..0.99f64, 0.0..50.0f64, 0usize..STATE_DIM),
            |(sigma, epsilon, d, dim)| {
                let cfg = RewardConfig {
                    sigma,
                    epsilon,
                    ..RewardConfig::new(sigma)
                };
                let goal = ForceState::default();
                let mut s = goal;
                s.0[dim] = d.sqrt();
                let dist = normalized_distance_sq(&s, &goal, &norm);
                prop_assert!((dist - d).abs() <= 1e-12 * (1.0 + d));
                let boundary = -sigma * epsilon.ln();
                if (dist - boundary).abs() < 1e-9 * (1.0 + boundary) {
                    return Err(TestCaseError::reject("on the boundary"));
                }
                let expect = if dist < boundary {
                    cfg.goal_reward
                } else {
                    cfg.step_reward
                };
                prop_assert_eq!(reward(&s, &goal, &cfg, &norm), expect);
                let sim = similarity(&s, &goal, sigma, &norm);
                prop_assert!((0.0..=1.0).contains(&sim));
                prop_assert_eq!(similarity(&goal, &goal, sigma, &norm), 1.0);
                let mut further = s;
                further.0[dim] += 0.1;
                prop_assert!(similarity(&further, &goal, sigma, &norm) <= sim);
                Ok(())
            },
        )
        .map_err(|e| e.to_string())
}

/// Predicted state carries the accumulated displacement in its first two
/// force channels, so the cost is quadratic in the action sum.
struct Integrator;

impl Forward for Integrator {
    type Hidden = Vec<Vec2>;

    fn begin(&self, starts: &[ForceState], _positions: Option<&[Vec2]>) -> Vec<Vec2> {
        starts.iter().map(|s| Vec2::new(s.0[0], s.0[1])).collect()
    }

    fn advance(&self, hidden: &mut Vec<Vec2>, _states: &[ForceState], actions: &[Vec2]) -> Vec<ForceState> {
        hidden
            .iter_mut()
            .zip(actions)
            .map(|(p, &a)| {
                *p += a;
                at(*p)
            })
            .collect()
    }
}

fn at(p: Vec2) -> ForceState {
    let mut s = ForceState::default();
    s.0[0] = p.x;
    s.0[1] = p.y;
    s
}

fn cem_suite() -> Result<(), String> {
    let cfg = PlanConfig {
        horizon: 1,
        ..PlanConfig::default()
    };
    // Optimum within one initial std of the sampling mean; further out the
    // elite spread can collapse before reaching it.
    let (lx, ly) = (cfg.init_std.x, cfg.init_std.y);
    runner()
        .run(
            &(-2.5..2.5f64, -2.5..2.5f64, -lx..lx, -ly..ly, any::<u64>()),
            |(sx, sy, wx, wy, seed)| {
                let (start, want) = (Vec2::new(sx, sy), Vec2::new(wx, wy));
                let target = start + want;
                let a = cem_plan(&Integrator, &at(start), None, &at(target), &cfg, seed);
                prop_assert!((a - want).norm() < 0.05, "{:?} vs optimum {:?}", a, want);
                Ok(())
            },
        )
        .map_err(|e| e.to_string())
}

#[test]
fn criterion_9_property_suites() {
    let started = Instant::now();
    let holes = all_holes();
    let sims: Vec<ContactSim> = holes
        .iter()
        .map(|h| ContactSim::new(*h, Default::default()).unwrap())
        .collect();
    let grids: Vec<(GridTable, ForceState)> = sims
        .iter()
        .map(|s| {
            (
                sample_grid(s, 9, (4.0, 4.0), 10.0).unwrap(),
                s.goal_state(10.0).unwrap(),
            )
        })
        .collect();
    let suites: [(&str, Box<dyn Fn() -> Result<(), String>>); 6] = [
        ("sdf oracle", Box::new(|| sdf_suite(&holes))),
        ("nearest neighbour", Box::new(nearest_suite)),
        ("descent residual", Box::new(|| descent_suite(&sims))),
        (
            "force-state layout and distinguishability",
            Box::new(|| layout_suite(&grids)),
        ),
        ("reward boundary", Box::new(reward_suite)),
        ("CEM quadratic optimum", Box::new(cem_suite)),
    ];
    let mut failures = Vec::new();
    for (name, suite) in &suites {
        match suite() {
            Ok(()) => say(&format!("{name}: ok")),
            Err(e) => {
                say(&format!("{name}: {e}"));
                failures.push(*name);
            }
        }
    }
    let pass = failures.is_empty();
    verdict(
        9,
        "property suites",
        pass,
        started,
        &format!(
            "{}/{} suites pass at 1000 cases",
            suites.len() - failures.len(),
            suites.len()
        ),
    );
    assert!(pass, "{failures:?}");
}
