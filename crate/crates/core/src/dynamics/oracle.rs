use super::Forward;
use crate::contact_sim::ForceState;
use crate::dataset::GridTable;
use crate::vec2::Vec2;

/// Exact transition model of the grid world: tracks the position, clamps it
/// to the grid and reports the nearest lattice state.
#[derive(Debug, Clone, Copy)]
pub struct GridOracle<'a> {
    pub grid: &'a GridTable,
}

impl<'a> GridOracle<'a> {
    pub fn new(grid: &'a GridTable) -> Self {
        GridOracle { grid }
    }

    /// Lattice position whose state is closest to `s`, lowest index on ties.
    pub fn locate(&self, s: &ForceState) -> Vec2 {
        let mut best = (f64::INFINITY, 0);
        for (i, g) in self.grid.states.iter().enumerate() {
            let d = g.distance_sq(s);
            if d < best.0 {
                best = (d, i);
            }
        }
        self.grid.positions[best.1]
    }
}

impl Forward for GridOracle<'_> {
    type Hidden = Vec<Vec2>;

    fn begin(&self, starts: &[ForceState], positions: Option<&[Vec2]>) -> Vec<Vec2> {
        match positions {
            Some(p) => p.iter().map(|&q| self.grid.clamp(q)).collect(),
            None => starts.iter().map(|s| self.locate(s)).collect(),
        }
    }

    fn advance(&self, hidden: &mut Vec<Vec2>, _states: &[ForceState], actions: &[Vec2]) -> Vec<ForceState> {
        hidden
            .iter_mut()
            .zip(actions)
            .map(|(p, &a)| {
                *p = self.grid.clamp(*p + a);
                *self.grid.nearest_state(*p)
            })
            .collect()
    }
}
