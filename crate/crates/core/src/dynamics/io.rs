use std::path::Path;

use super::{DynamicsConfig, DynamicsModel, Layout, NormStats};
use crate::contact_sim::STATE_DIM;
use crate::container::{read_file, write_file, Reader, Writer};
use crate::error::Result;

pub const MODEL_MAGIC: &str = "ftdyn-model";
pub const MODEL_VERSION: &str = "1";

pub(crate) fn model_to_text(m: &DynamicsModel) -> String {
    let c = &m.config;
    let mut w = Writer::new(MODEL_MAGIC, MODEL_VERSION);
    w.keyed(
        "config",
        &[
            ("hidden", c.hidden.to_string()),
            ("learning_rate", c.learning_rate.to_string()),
            ("grad_clip", c.grad_clip.to_string()),
            ("finetune_lr_scale", c.finetune_lr_scale.to_string()),
            ("trajs_per_episode", c.trajs_per_episode.to_string()),
            ("force_std_floor", c.force_std_floor.to_string()),
            ("torque_std_floor", c.torque_std_floor.to_string()),
            ("residual", c.residual.to_string()),
            ("seed", c.seed.to_string()),
            ("episodes_trained", m.episodes_trained.to_string()),
        ],
    );
    w.floats("state_mean", &m.norm.state_mean);
    w.floats("state_std", &m.norm.state_std);
    w.floats("action_mean", &m.norm.action_mean);
    w.floats("action_std", &m.norm.action_std);
    w.block(&m.params);
    w.finish()
}

pub(crate) fn model_from_text(text: &str, path: &Path) -> Result<DynamicsModel> {
    let mut r = Reader::open(text, path, MODEL_MAGIC, MODEL_VERSION)?;
    let k = r.keyed("config")?;
    let config = DynamicsConfig {
        hidden: k.get("hidden")?,
        learning_rate: k.get("learning_rate")?,
        grad_clip: k.get("grad_clip")?,
        finetune_lr_scale: k.get("finetune_lr_scale")?,
        trajs_per_episode: k.get("trajs_per_episode")?,
        force_std_floor: k.get("force_std_floor")?,
        torque_std_floor: k.get("torque_std_floor")?,
        residual: k.get("residual")?,
        seed: k.get("seed")?,
    };
    let episodes_trained = k.get("episodes_trained")?;
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
    let layout = Layout { hidden: config.hidden };
    let params = r.block(layout.len())?;
    r.finish()?;
    Ok(DynamicsModel {
        config,
        norm,
        params,
        episodes_trained,
    })
}

pub fn save_model(model: &DynamicsModel, path: &Path) -> Result<()> {
    write_file(path, &model_to_text(model))
}

pub fn load_model(path: &Path) -> Result<DynamicsModel> {
    model_from_text(&read_file(path)?, path)
}
