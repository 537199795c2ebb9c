use ftdyn::dataset::{generate_trajectories, sample_grid};
use ftdyn::dynamics::init_model;
use ftdyn::rl::{eval_policy, init_policy, train_offline, PolicyConfig, PolicyModel, RewardConfig};
use ftdyn::{ContactSim, DynamicsConfig, DynamicsModel, ForceState, GridTable, HoleSpec, ShapeKind, SimConfig, Vec2};

struct World {
    sim: ContactSim,
    grid: GridTable,
    goal: ForceState,
    model: DynamicsModel,
}

/// A small model fitted to one training hole, enough for rollouts with
/// structure.
fn world(train_episodes: usize) -> World {
    let spec = HoleSpec::new(ShapeKind::Round, 20.0, 5.0).unwrap();
    let sim = ContactSim::new(spec, SimConfig::default()).unwrap();
    let grid = sample_grid(&sim, 9, (4.0, 4.0), 10.0).unwrap();
    let goal = sim.goal_state(10.0).unwrap();
    let trajs = generate_trajectories(&grid, 200, 10, Vec2::new(0.25, 0.25), 5);
    let mut model = init_model(
        &DynamicsConfig {
            hidden: 16,
            ..DynamicsConfig::default()
        },
        1,
    );
    model.train(&trajs, train_episodes).unwrap();
    World { sim, grid, goal, model }
}

fn train(w: &World, cfg: &PolicyConfig, episodes: usize) -> (PolicyModel, Vec<f64>) {
    let reward = RewardConfig::for_grid(&w.grid, &w.goal, &w.model.norm);
    let mut p = init_policy(cfg, &w.model.norm, 11);
    let report = train_offline(&mut p, &w.model, &w.grid, &w.goal, &reward, episodes).unwrap();
    assert_eq!(report.episodes_run, episodes);
    assert_eq!(report.returns.len(), episodes);
    (p, report.returns)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Largest over smallest action probability.
fn spread(p: &PolicyModel, s: &ForceState) -> f64 {
    let (probs, _) = p.forward(s);
    let max = probs.iter().cloned().fold(0.0, f64::max);
    let min = probs.iter().cloned().fold(1.0, f64::min);
    max / min
}

fn small() -> PolicyConfig {
    PolicyConfig {
        hidden: 16,
        ..PolicyConfig::default()
    }
}

#[test]
fn offline_training_is_pure_and_deterministic() {
    let w = world(50);
    let before = w.sim.probe_count();
    let (a, ra) = train(&w, &small(), 160);
    let (b, rb) = train(&w, &small(), 160);
    assert_eq!(
        w.sim.probe_count(),
        before,
        "offline training must not touch the simulator"
    );
    assert_eq!(a, b);
    assert_eq!(ra, rb);
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let w = world(20);
    let cfg = PolicyConfig {
        learning_rate: 0.0,
        ..small()
    };
    let fresh = init_policy(&cfg, &w.model.norm, 11);
    let (trained, _) = train(&w, &cfg, 64);
    assert_eq!(trained.params, fresh.params);
}

#[test]
fn training_against_a_fitted_model_pays_off_on_the_simulator() {
    let w = world(1500);
    let (p, returns) = train(&w, &small(), 3000);
    let early = mean(&returns[..300]);
    let late = mean(&returns[returns.len() - 300..]);
    assert!(late > early, "early {early:.3}, late {late:.3}");
    assert!(
        w.grid.states.iter().any(|s| spread(&p, s) > 1.5),
        "the default entropy bonus lets the policy commit"
    );
    let fresh = init_policy(&small(), &w.model.norm, 11);
    let before = eval_policy(&w.sim, &fresh, 40, (2.0, 0.5), &Default::default(), 3).unwrap();
    let after = eval_policy(&w.sim, &p, 40, (2.0, 0.5), &Default::default(), 3).unwrap();
    assert!(
        after.success_rate >= before.success_rate + 0.5,
        "untrained {} vs trained {}",
        before.success_rate,
        after.success_rate
    );
}

#[test]
fn overwhelming_entropy_bonus_keeps_the_policy_uniform() {
    let w = world(300);
    let cfg = PolicyConfig {
        entropy_weight: 100.0,
        ..small()
    };
    let (p, _) = train(&w, &cfg, 1000);
    for s in &w.grid.states {
        assert!(spread(&p, s) < 1.5, "{:?}", p.forward(s).0);
    }
}
