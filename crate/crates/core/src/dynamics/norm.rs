use serde::{Deserialize, Serialize};

use crate::contact_sim::{ForceState, FORCE_DIMS, STATE_DIM};
use crate::dataset::Trajectory;
use crate::vec2::Vec2;

/// Hard lower bound on every std entry.
pub const MIN_STD: f64 = 1e-6;

/// Per-dimension affine normalization of states and actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
    pub action_mean: [f64; 2],
    pub action_std: [f64; 2],
}

impl Default for NormStats {
    fn default() -> Self {
        NormStats {
            state_mean: vec![0.0; STATE_DIM],
            state_std: vec![1.0; STATE_DIM],
            action_mean: [0.0; 2],
            action_std: [1.0; 2],
        }
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone, floor: f64) -> (f64, f64) {
    let n = values.clone().count().max(1) as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt().max(floor).max(MIN_STD))
}

impl NormStats {
    /// Statistics over every state and commanded action in `trajectories`.
    /// Force dims use `force_floor`, torque dims `torque_floor`.
    pub fn fit(trajectories: &[Trajectory], force_floor: f64, torque_floor: f64) -> Self {
        let mut out = NormStats::default();
        if trajectories.is_empty() {
            return out;
        }
        let states = || trajectories.iter().flat_map(|t| t.states.iter());
        for d in 0..STATE_DIM {
            let floor = if d < FORCE_DIMS { force_floor } else { torque_floor };
            let (m, s) = mean_std(states().map(move |st| st.0[d]), floor);
            out.state_mean[d] = m;
            out.state_std[d] = s;
        }
        let actions = || trajectories.iter().flat_map(|t| t.actions.iter());
        let (mx, sx) = mean_std(actions().map(|a| a.x), 0.0);
        let (my, sy) = mean_std(actions().map(|a| a.y), 0.0);
        out.action_mean = [mx, my];
        out.action_std = [sx, sy];
        out
    }

    pub fn normalize_state(&self, s: &ForceState, out: &mut [f64]) {
        for d in 0..STATE_DIM {
            out[d] = (s.0[d] - self.state_mean[d]) / self.state_std[d];
        }
    }

    pub fn denormalize_state(&self, v: &[f64]) -> ForceState {
        let mut s = [0.0; STATE_DIM];
        for d in 0..STATE_DIM {
            s[d] = v[d] * self.state_std[d] + self.state_mean[d];
        }
        ForceState(s)
    }

    pub fn normalize_action(&self, a: Vec2) -> [f64; 2] {
        [
            (a.x - self.action_mean[0]) / self.action_std[0],
            (a.y - self.action_mean[1]) / self.action_std[1],
        ]
    }

    pub fn is_valid(&self) -> bool {
        self.state_mean.len() == STATE_DIM
            && self.state_std.len() == STATE_DIM
            && self.state_mean.iter().chain(&self.action_mean).all(|v| v.is_finite())
            && self
                .state_std
                .iter()
                .chain(&self.action_std)
                .all(|v| v.is_finite() && *v >= MIN_STD)
    }
}
