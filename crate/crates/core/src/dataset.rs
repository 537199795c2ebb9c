//! Grid probing and offline trajectory synthesis.
//!
//! A hole is probed once on an `n × n` lattice. Arbitrary many training
//! trajectories are then generated without further interaction: a random
//! walk of Gaussian actions is played on the lattice's bounding box and
//! every visited position is labelled with the state of its nearest lattice
//! point.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::contact_sim::{ContactSim, ForceState, NoiseStd, STATE_DIM};
use crate::error::{Error, Result};
use crate::seed;
use crate::vec2::Vec2;

#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    pub spec_id: String,
    pub n: usize,
    /// Full extent of the lattice along x and y (mm).
    pub range: (f64, f64),
    /// Row-major: `positions[row * n + col]`, row indexes y.
    pub positions: Vec<Vec2>,
    pub states: Vec<ForceState>,
    pub f_max: f64,
}

/// Regular `n × n` lattice over `[-rx/2, rx/2] × [-ry/2, ry/2]`.
pub fn lattice(n: usize, range: (f64, f64)) -> Vec<Vec2> {
    let step = |r: f64, i: usize| -r / 2.0 + r * i as f64 / (n - 1) as f64;
    (0..n)
        .flat_map(|row| (0..n).map(move |col| Vec2::new(step(range.0, col), step(range.1, row))))
        .collect()
}

/// Probes every lattice point of an `n × n` grid without sensor noise.
pub fn sample_grid(sim: &ContactSim, n: usize, range: (f64, f64), f_max: f64) -> Result<GridTable> {
    if n < 2 {
        return Err(Error::Config(format!("grid side must be at least 2, got {n}")));
    }
    if !(range.0 > 0.0 && range.1 > 0.0) {
        return Err(Error::Config(format!("grid range must be positive, got {range:?}")));
    }
    let positions = lattice(n, range);
    let states = positions
        .iter()
        .map(|&p| sim.probe_multipose(p, f_max, NoiseStd::ZERO, 0))
        .collect::<Result<Vec<_>>>()?;
    Ok(GridTable {
        spec_id: sim.spec().id(),
        n,
        range,
        positions,
        states,
        f_max,
    })
}

/// Lattice side for a grid holding roughly `fraction` of the points of a
/// `full_n × full_n` grid over the same range (never below 2).
pub fn side_for_fraction(full_n: usize, fraction: f64) -> usize {
    ((full_n as f64 * fraction.max(0.0).sqrt()).round() as usize).clamp(2, full_n)
}

impl GridTable {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn spacing(&self) -> Vec2 {
        let d = (self.n - 1) as f64;
        Vec2::new(self.range.0 / d, self.range.1 / d)
    }

    pub fn half_range(&self) -> Vec2 {
        Vec2::new(self.range.0 / 2.0, self.range.1 / 2.0)
    }

    pub fn clamp(&self, p: Vec2) -> Vec2 {
        let h = self.half_range();
        Vec2::new(p.x.clamp(-h.x, h.x), p.y.clamp(-h.y, h.y))
    }

    /// Index of the Euclidean-nearest lattice point; ties go to the smallest
    /// row-major index.
    pub fn nearest_index(&self, p: Vec2) -> usize {
        let h = self.half_range();
        let sp = self.spacing();
        let guess =
            |v: f64, half: f64, step: f64| -> i64 { (((v + half) / step).round() as i64).clamp(0, self.n as i64 - 1) };
        let (gc, gr) = (guess(p.x, h.x, sp.x), guess(p.y, h.y, sp.y));
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for r in (gr - 1).max(0)..=(gr + 1).min(self.n as i64 - 1) {
            for c in (gc - 1).max(0)..=(gc + 1).min(self.n as i64 - 1) {
                let idx = r as usize * self.n + c as usize;
                let d = (self.positions[idx] - p).norm_sq();
                if d < best_d || (d == best_d && idx < best) {
                    best_d = d;
                    best = idx;
                }
            }
        }
        best
    }

    pub fn nearest_state(&self, p: Vec2) -> &ForceState {
        &self.states[self.nearest_index(p)]
    }

    /// Writes `grid spec=.. n=.. rx=.. ry=.. f_max=..` followed by one
    /// `row,col,px,py,f0..f29` line per lattice point.
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "grid spec={} n={} rx={} ry={} f_max={}\n",
            self.spec_id, self.n, self.range.0, self.range.1, self.f_max
        );
        for (i, (p, s)) in self.positions.iter().zip(&self.states).enumerate() {
            let _ = writeln!(out, "{},{},{},{},{}", i / self.n, i % self.n, p.x, p.y, s.to_csv());
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::format(path, 1, "empty grid file"))?;
        let kv = parse_header(header, "grid")
            .ok_or_else(|| Error::format(path, 1, "expected `grid spec=.. n=.. rx=.. ry=.. f_max=..`"))?;
        let get = |k: &str| {
            kv.iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Error::format(path, 1, format!("missing `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse::<f64>()
                .map_err(|_| Error::format(path, 1, format!("bad `{k}`")))
        };
        let n: usize = get("n")?.parse().map_err(|_| Error::format(path, 1, "bad `n`"))?;
        let mut grid = GridTable {
            spec_id: get("spec")?,
            n,
            range: (num("rx")?, num("ry")?),
            positions: Vec::with_capacity(n * n),
            states: Vec::with_capacity(n * n),
            f_max: num("f_max")?,
        };
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let vals = parse_floats(line).ok_or_else(|| Error::format(path, lineno, "bad number"))?;
            if vals.len() != 4 + STATE_DIM {
                return Err(Error::format(
                    path,
                    lineno,
                    format!("expected {} fields", 4 + STATE_DIM),
                ));
            }
            grid.positions.push(Vec2::new(vals[2], vals[3]));
            grid.states
                .push(ForceState::from_slice(&vals[4..]).expect("length checked"));
        }
        if grid.states.len() != n * n {
            return Err(Error::format(
                path,
                grid.states.len() + 1,
                format!("expected {} grid points, found {}", n * n, grid.states.len()),
            ));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub start: Vec2,
    /// Commanded displacements; the realised motion is clamped to the grid.
    pub actions: Vec<Vec2>,
    /// `actions.len() + 1` states.
    pub states: Vec<ForceState>,
    pub positions: Vec<Vec2>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Replays `actions` from `start` on the grid, clamping positions to the
/// grid range and labelling them with nearest-lattice states.
pub fn replay(grid: &GridTable, start: Vec2, actions: &[Vec2]) -> Trajectory {
    let mut positions = Vec::with_capacity(actions.len() + 1);
    let mut p = grid.clamp(start);
    positions.push(p);
    for &a in actions {
        p = grid.clamp(p + a);
        positions.push(p);
    }
    let states = positions.iter().map(|&q| *grid.nearest_state(q)).collect();
    Trajectory {
        start: positions[0],
        actions: actions.to_vec(),
        states,
        positions,
    }
}

/// Random-walk trajectories of `horizon` steps starting at uniformly drawn
/// lattice points, with i.i.d. Gaussian actions of per-axis std `action_std`.
pub fn generate_trajectories(
    grid: &GridTable,
    count: usize,
    horizon: usize,
    action_std: Vec2,
    seed_value: u64,
) -> Vec<Trajectory> {
    assert!(horizon >= 1, "trajectory horizon must be at least 1");
    (0..count)
        .map(|i| {
            let mut rng = seed::rng(seed::derive_indexed(seed_value, "trajectory", i as u64));
            let start = grid.positions[rng.random_range(0..grid.len())];
            let actions: Vec<Vec2> = (0..horizon)
                .map(|_| Vec2::new(gaussian(&mut rng, action_std.x), gaussian(&mut rng, action_std.y)))
                .collect();
            replay(grid, start, &actions)
        })
        .collect()
}

fn gaussian<R: Rng>(rng: &mut R, std: f64) -> f64 {
    if std > 0.0 {
        Normal::new(0.0, std).expect("finite std").sample(rng)
    } else {
        0.0
    }
}

fn parse_header(line: &str, tag: &str) -> Option<Vec<(String, String)>> {
    let mut words = line.split_whitespace();
    if !tag.is_empty() && words.next()? != tag {
        return None;
    }
    words
        .map(|w| {
            let (k, v) = w.split_once('=')?;
            Some((k.to_string(), v.to_string()))
        })
        .collect()
}

fn parse_floats(line: &str) -> Option<Vec<f64>> {
    line.split(',').map(|t| t.trim().parse::<f64>().ok()).collect()
}

/// Writes trajectories in the line format
///
/// ```text
/// T=<int> dim=30
/// traj_id,step,px,py,ax,ay,f0,...,f29
/// ```
///
/// with empty action fields on each trajectory's terminal step.
pub fn save_dataset(trajectories: &[Trajectory], path: &Path) -> Result<()> {
    fs::write(path, dataset_to_text(trajectories)).map_err(|e| Error::io(path, e))
}

pub fn dataset_to_text(trajectories: &[Trajectory]) -> String {
    let horizon = trajectories.first().map_or(0, Trajectory::len);
    let mut out = format!("T={horizon} dim={STATE_DIM}\n");
    for (id, tr) in trajectories.iter().enumerate() {
        for (step, (p, s)) in tr.positions.iter().zip(&tr.states).enumerate() {
            let _ = match tr.actions.get(step) {
                Some(a) => write!(out, "{id},{step},{},{},{},{},", p.x, p.y, a.x, a.y),
                None => write!(out, "{id},{step},{},{},,,", p.x, p.y),
            };
            out.push_str(&s.to_csv());
            out.push('\n');
        }
    }
    out
}

pub fn load_dataset(path: &Path) -> Result<Vec<Trajectory>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path)
}

pub fn parse_dataset(text: &str, path: &Path) -> Result<Vec<Trajectory>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(path, 1, "missing `T=<int> dim=30` header"))?;
    let kv = parse_header(header, "").ok_or_else(|| Error::format(path, 1, "malformed header"))?;
    let field = |k: &str| -> Result<usize> {
        kv.iter()
            .find(|(key, _)| key == k)
            .and_then(|(_, v)| v.parse().ok())
            .ok_or_else(|| Error::format(path, 1, format!("header lacks integer `{k}`")))
    };
    let horizon = field("T")?;
    if field("dim")? != STATE_DIM {
        return Err(Error::format(path, 1, format!("state dimension must be {STATE_DIM}")));
    }

    let mut out: Vec<Trajectory> = Vec::new();
    let mut current: Option<Trajectory> = None;
    let finish = |tr: Trajectory, lineno: usize| -> Result<Trajectory> {
        if tr.states.len() != horizon + 1 || tr.actions.len() != horizon {
            return Err(Error::format(
                path,
                lineno,
                format!("trajectory has {} steps, expected {}", tr.states.len(), horizon + 1),
            ));
        }
        Ok(tr)
    };
    let mut lineno = 1;
    for line in lines {
        lineno += 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 6 + STATE_DIM {
            return Err(Error::format(
                path,
                lineno,
                format!("expected {} fields, found {}", 6 + STATE_DIM, fields.len()),
            ));
        }
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::format(path, lineno, format!("bad integer {s:?}")))
        };
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::format(path, lineno, format!("bad number {s:?}")))
        };
        let (id, step) = (int(fields[0])?, int(fields[1])?);
        let pos = Vec2::new(num(fields[2])?, num(fields[3])?);
        let state_vals = fields[6..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
        let state = ForceState::from_slice(&state_vals).expect("length checked");

        if step == 0 {
            if let Some(tr) = current.take() {
                out.push(finish(tr, lineno - 1)?);
            }
            if id != out.len() {
                return Err(Error::format(
                    path,
                    lineno,
                    format!("expected trajectory id {}", out.len()),
                ));
            }
            current = Some(Trajectory {
                start: pos,
                actions: Vec::new(),
                states: Vec::new(),
                positions: Vec::new(),
            });
        }
        let tr = current
            .as_mut()
            .ok_or_else(|| Error::format(path, lineno, "trajectory does not start at step 0"))?;
        if id != out.len() || step != tr.states.len() {
            return Err(Error::format(path, lineno, format!("unexpected step {id}/{step}")));
        }
        if step < horizon {
            tr.actions.push(Vec2::new(num(fields[4])?, num(fields[5])?));
        } else if !(fields[4].is_empty() && fields[5].is_empty()) {
            return Err(Error::format(
                path,
                lineno,
                "terminal step must have empty action fields",
            ));
        }
        tr.positions.push(pos);
        tr.states.push(state);
    }
    if let Some(tr) = current.take() {
        out.push(finish(tr, lineno)?);
    }
    Ok(out)
}
