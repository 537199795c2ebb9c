//! Experiment configuration: one TOML file with a section per stage, plus
//! `--set section.key=value` overrides. Every key must already exist in the
//! default configuration, so typos are rejected rather than ignored.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Value;

use ftdyn::dynamics::DynamicsConfig;
use ftdyn::geometry::{catalog, CatalogRole};
use ftdyn::mpc::{EpisodeConfig, PlanConfig, START_RING};
use ftdyn::rl::PolicyConfig;
use ftdyn::{HoleSpec, ShapeKind, SimConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct ExperimentConfig {
    /// Root seed; every stage derives its own stream from it.
    pub seed: u64,
    pub sim: SimConfig,
    pub holes: HolesConfig,
    pub grid: GridConfig,
    pub data: DataConfig,
    pub dynamics: DynamicsConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub eval: EvalConfig,
    pub mpc: PlanConfig,
    pub episode: EpisodeConfig,
    pub trials: TrialsConfig,
    pub rl: PolicyConfig,
    pub rl_train: RlTrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HolesConfig {
    /// `kind,size_mm,elasticity,clearance_mm` lines.
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub n: usize,
    /// Full lattice extent along x and y, mm.
    pub range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub trajectories_per_hole: usize,
    pub finetune_trajectories: usize,
    pub heldout: usize,
    pub horizon: usize,
    /// Per-step action std as a multiple of the lattice spacing.
    pub action_std_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub episodes: usize,
    /// Fractions of the full grid's point count.
    pub fractions: Vec<f64>,
    /// Also train a fresh model on the same data and budget.
    pub scratch_baseline: bool,
    /// Held-out error is recorded every this many episodes.
    pub eval_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Also evaluate the pretrained model on the training holes.
    pub include_training: bool,
    /// Largest acceptable training-hole error before the command fails.
    pub smoke_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialsConfig {
    pub count: usize,
    /// Start ring radius and half-width, mm.
    pub ring: (f64, f64),
    /// Finetune fractions whose models are benchmarked.
    pub fractions: Vec<f64>,
    /// Include the random-action negative control.
    pub random_baseline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlTrainConfig {
    pub episodes: usize,
    pub fractions: Vec<f64>,
}


impl Default for HolesConfig {
    fn default() -> Self {
        let table_one = [
            ShapeKind::Round,
            ShapeKind::Square,
            ShapeKind::Triangle,
            ShapeKind::Ellipse,
            ShapeKind::Hexagon,
            ShapeKind::XShape,
        ];
        HolesConfig {
            train: catalog(CatalogRole::Training).iter().map(HoleSpec::to_line).collect(),
            test: catalog(CatalogRole::Testing)
                .iter()
                .filter(|s| table_one.contains(&s.kind))
                .map(HoleSpec::to_line)
                .collect(),
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n: 9,
            range: (4.0, 4.0),
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            trajectories_per_hole: 1000,
            finetune_trajectories: 2000,
            heldout: 20,
            horizon: 10,
            action_std_scale: 0.5,
        }
    }
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig { episodes: 4000 }
    }
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            episodes: 3000,
            fractions: vec![0.02, 0.2, 0.4, 0.6, 0.8, 1.0],
            scratch_baseline: true,
            eval_every: 100,
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            include_training: true,
            smoke_threshold: 200.0,
        }
    }
}

impl Default for TrialsConfig {
    fn default() -> Self {
        TrialsConfig {
            count: 100,
            ring: START_RING,
            fractions: vec![0.02, 0.2, 0.4],
            random_baseline: true,
        }
    }
}

impl Default for RlTrainConfig {
    fn default() -> Self {
        RlTrainConfig {
            episodes: 3000,
            fractions: vec![0.02, 0.2, 0.4],
        }
    }
}

impl ExperimentConfig {
    /// Parses `text` (may be empty), applies `overrides` and validates.
    pub fn resolve(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let defaults = Value::try_from(ExperimentConfig::default()).expect("defaults serialize");
        let user: Value = text
            .parse::<toml::Table>()
            .map(Value::Table)
            .map_err(|e| CliError::Config(format!("config: {e}")))?;
        check_known(&user, &defaults, "")?;
        // Overlay onto the defaults so partial tables (one field of a
        // struct) stay complete.
        let mut tree = defaults.clone();
        merge(&mut tree, user);
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: ExperimentConfig = tree
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn train_holes(&self) -> Result<Vec<HoleSpec>, CliError> {
        parse_holes(&self.holes.train)
    }

    pub fn test_holes(&self) -> Result<Vec<HoleSpec>, CliError> {
        parse_holes(&self.holes.test)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.dynamics.validate()?;
        self.mpc.validate()?;
        self.rl.validate()?;
        let mut ids: Vec<String> = self
            .train_holes()?
            .iter()
            .chain(&self.test_holes()?)
            .map(HoleSpec::id)
            .collect();
        let total = ids.len();
        ids.sort();
        ids.dedup();
        if ids.len() != total {
            return bad("holes: every hole needs a distinct kind-size id across train and test".into());
        }
        let mut labels: Vec<String> = self
            .finetune
            .fractions
            .iter()
            .map(|&f| crate::pipeline::pct(f))
            .collect();
        let total = labels.len();
        labels.sort();
        labels.dedup();
        if labels.len() != total {
            return bad("finetune: fractions must be distinct at percent resolution".into());
        }
        if self.grid.n < 2 || !(self.grid.range.0 > 0.0 && self.grid.range.1 > 0.0) {
            return bad("grid: n must be at least 2 and range positive".into());
        }
        if self.data.horizon == 0 || !(self.data.action_std_scale >= 0.0) {
            return bad("data: horizon must be at least 1 and action_std_scale non-negative".into());
        }
        if self.finetune.eval_every == 0 {
            return bad("finetune: eval_every must be at least 1".into());
        }
        let fractions = self
            .finetune
            .fractions
            .iter()
            .chain(&self.trials.fractions)
            .chain(&self.rl_train.fractions);
        for &f in fractions {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("fractions must be in (0, 1], got {f}"));
            }
        }
        if !(self.episode.success_radius >= 0.0 && self.episode.f_max > 0.0) {
            return bad("episode: success_radius must be non-negative and f_max positive".into());
        }
        Ok(())
    }
}

fn parse_holes(lines: &[String]) -> Result<Vec<HoleSpec>, CliError> {
    lines
        .iter()
        .map(|l| HoleSpec::from_line(l).map_err(|e| CliError::Config(format!("holes: {l:?}: {e}"))))
        .collect()
}

fn check_known(tree: &Value, defaults: &Value, prefix: &str) -> Result<(), CliError> {
    if let (Value::Table(t), Value::Table(d)) = (tree, defaults) {
        for (k, v) in t {
            let path = if prefix.is_empty() {
                k.clone()
            } else {
                format!("{prefix}.{k}")
            };
            match d.get(k) {
                None => return Err(CliError::Config(format!("unknown config key {path:?}"))),
                Some(dv) => check_known(v, dv, &path)?,
            }
        }
    }
    Ok(())
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// `section.key=value`; the value is read as a TOML literal, falling back to
/// a bare string.
fn apply_override(tree: &mut Value, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {spec:?}")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    };
    let mut node = tree;
    for k in &keys {
        node = node
            .get_mut(k)
            .ok_or_else(|| CliError::Config(format!("unknown config key {path:?}")))?;
    }
    *node = value;
    Ok(())
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
