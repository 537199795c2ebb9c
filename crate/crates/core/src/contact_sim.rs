//! Quasi-static contact simulator and the multi-pose force state.
//!
//! A rigid peg whose cross-section is the hole eroded by the clearance is
//! lowered onto an elastic plate. Every footprint point that lies over plate
//! material acts as a penalty spring; points close to the rim also pick up a
//! Coulomb-style lateral component. For each probe the peg is tilted into one
//! of five poses and lowered until the normal force reaches `f_max`.

use std::sync::atomic::{AtomicU64, Ordering};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{make_footprint, HoleSpec, PegFootprint, Shape};
use crate::seed;
use crate::vec2::Vec2;

pub const POSES: usize = 5;
pub const STATE_DIM: usize = 6 * POSES;
pub const FORCE_DIMS: usize = 3 * POSES;

/// One 6-axis wrist reading: forces in N, torques in N·m.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ForceTorque {
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl ForceTorque {
    pub fn inserted(f_max: f64) -> Self {
        ForceTorque {
            fz: f_max,
            ..Default::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.fx, self.fy, self.fz, self.tx, self.ty, self.tz]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// End-effector rotation about x and y, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tilt {
    pub rx: f64,
    pub ry: f64,
}

pub const TILT_DEG: f64 = 30.0;

impl Tilt {
    pub const LEVEL: Tilt = Tilt { rx: 0.0, ry: 0.0 };

    /// The fixed pose order used everywhere in the force state.
    pub fn poses(delta: f64) -> [Tilt; POSES] {
        [
            Tilt { rx: 0.0, ry: 0.0 },
            Tilt { rx: delta, ry: 0.0 },
            Tilt { rx: -delta, ry: 0.0 },
            Tilt { rx: 0.0, ry: delta },
            Tilt { rx: 0.0, ry: -delta },
        ]
    }

    /// Height offset of a footprint point relative to the pivot.
    fn height(&self, d: Vec2) -> f64 {
        self.ry.to_radians().tan() * d.x - self.rx.to_radians().tan() * d.y
    }
}

/// The 30-d multi-pose state: `fx, fy, fz` for poses 1..5 followed by
/// `tx, ty, tz` for poses 1..5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceState(#[serde(with = "state_serde")] pub [f64; STATE_DIM]);

mod state_serde {
    use super::STATE_DIM;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64; STATE_DIM], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; STATE_DIM], D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        v.try_into()
            .map_err(|_| serde::de::Error::custom("force state needs 30 values"))
    }
}

impl Default for ForceState {
    fn default() -> Self {
        ForceState([0.0; STATE_DIM])
    }
}

impl ForceState {
    pub fn from_readings(readings: &[ForceTorque; POSES]) -> Self {
        let mut v = [0.0; STATE_DIM];
        for (i, r) in readings.iter().enumerate() {
            v[3 * i] = r.fx;
            v[3 * i + 1] = r.fy;
            v[3 * i + 2] = r.fz;
            v[FORCE_DIMS + 3 * i] = r.tx;
            v[FORCE_DIMS + 3 * i + 1] = r.ty;
            v[FORCE_DIMS + 3 * i + 2] = r.tz;
        }
        ForceState(v)
    }

    pub fn reading(&self, pose: usize) -> ForceTorque {
        let v = &self.0;
        ForceTorque {
            fx: v[3 * pose],
            fy: v[3 * pose + 1],
            fz: v[3 * pose + 2],
            tx: v[FORCE_DIMS + 3 * pose],
            ty: v[FORCE_DIMS + 3 * pose + 1],
            tz: v[FORCE_DIMS + 3 * pose + 2],
        }
    }

    pub fn force_part(&self) -> &[f64] {
        &self.0[..FORCE_DIMS]
    }

    pub fn torque_part(&self) -> &[f64] {
        &self.0[FORCE_DIMS..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn from_slice(v: &[f64]) -> Option<Self> {
        v.try_into().ok().map(ForceState)
    }

    pub fn distance_sq(&self, other: &ForceState) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// 30 comma-separated decimals.
    pub fn to_csv(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        parts.join(",")
    }

    pub fn parse_csv(s: &str) -> Option<Self> {
        let vals: std::result::Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
        Self::from_slice(&vals.ok()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    pub reading: ForceTorque,
    pub descent_depth: f64,
    pub inserted: bool,
}

/// Per-channel standard deviation of additive sensor noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseStd {
    pub force: f64,
    pub torque: f64,
}

impl NoiseStd {
    pub const ZERO: NoiseStd = NoiseStd {
        force: 0.0,
        torque: 0.0,
    };
}

impl Default for NoiseStd {
    fn default() -> Self {
        NoiseStd {
            force: 0.05,
            torque: 0.002,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Stop threshold on the normal force (N).
    pub f_max: f64,
    pub friction: f64,
    /// Width of the rim band that produces lateral force (mm).
    pub edge_band: f64,
    pub tilt_deg: f64,
    /// Footprint lattice density (points per mm).
    pub resolution: f64,
    /// Bisection tolerance on descent depth (mm).
    pub depth_tol: f64,
    pub noise: NoiseStd,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            f_max: 10.0,
            friction: 0.3,
            edge_band: 0.5,
            tilt_deg: TILT_DEG,
            resolution: 3.0,
            depth_tol: 1e-4,
            noise: NoiseStd::default(),
        }
    }
}

/// Footprint points that rest on plate material for a given lateral offset.
struct ContactPatch {
    /// (position relative to the footprint centroid, rim direction if the
    /// point lies inside the edge band)
    points: Vec<(Vec2, Option<Vec2>)>,
}

/// Simulated robot + plate for one hole.
///
/// Every multi-pose probe increments an internal counter so that callers can
/// verify which code paths touch the "real" environment.
pub struct ContactSim {
    spec: HoleSpec,
    shape: Shape,
    footprint: PegFootprint,
    config: SimConfig,
    probes: AtomicU64,
}

impl std::fmt::Debug for ContactSim {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContactSim")
            .field("spec", &self.spec)
            .field("footprint_points", &self.footprint.len())
            .field("probes", &self.probe_count())
            .finish()
    }
}

impl ContactSim {
    pub fn new(spec: HoleSpec, config: SimConfig) -> Result<Self> {
        let footprint = make_footprint(&spec, config.resolution)?;
        Ok(ContactSim {
            shape: spec.shape(),
            spec,
            footprint,
            config,
            probes: AtomicU64::new(0),
        })
    }

    pub fn spec(&self) -> &HoleSpec {
        &self.spec
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn footprint(&self) -> &PegFootprint {
        &self.footprint
    }

    /// Number of multi-pose probes issued so far.
    pub fn probe_count(&self) -> u64 {
        self.probes.load(Ordering::Relaxed)
    }

    fn patch(&self, offset: Vec2) -> ContactPatch {
        let band = self.config.edge_band;
        let c = self.footprint.centroid;
        let points = self
            .footprint
            .points
            .iter()
            .filter_map(|&p| {
                let q = p + offset;
                let s = self.shape.sdf(q);
                (s > 0.0).then(|| {
                    let rim = (s < band).then(|| self.shape.sdf_gradient(q));
                    (p - c, rim)
                })
            })
            .collect();
        ContactPatch { points }
    }

    /// Highest footprint point under `tilt`; penetration is measured from the
    /// moment this point reaches the plate surface.
    fn lead_height(&self, tilt: &Tilt) -> f64 {
        let c = self.footprint.centroid;
        self.footprint
            .points
            .iter()
            .map(|&p| tilt.height(p - c))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn patch_wrench(&self, patch: &ContactPatch, tilt: &Tilt, lead: f64, depth: f64) -> ForceTorque {
        let stiffness = self.spec.elasticity * self.footprint.point_area;
        let mu = self.config.friction;
        let mut w = ForceTorque::default();
        for &(d, rim) in &patch.points {
            let pen = depth + tilt.height(d) - lead;
            if pen <= 0.0 {
                continue;
            }
            let fz = stiffness * pen;
            let lat = rim.map_or(Vec2::ZERO, |n| n * (mu * fz));
            // lever arm in metres
            let r = d * 1e-3;
            w.fx += lat.x;
            w.fy += lat.y;
            w.fz += fz;
            w.tx += r.y * fz;
            w.ty -= r.x * fz;
            w.tz += r.x * lat.y - r.y * lat.x;
        }
        w
    }

    /// Wrench on the peg at lateral `offset`, pose `tilt` and descent `depth`
    /// (mm below first contact of the lowest peg point).
    pub fn contact_wrench(&self, offset: Vec2, tilt: Tilt, depth: f64) -> ForceTorque {
        let patch = self.patch(offset);
        self.patch_wrench(&patch, &tilt, self.lead_height(&tilt), depth.max(0.0))
    }

    fn descend(&self, patch: &ContactPatch, offset: Vec2, tilt: &Tilt, f_max: f64) -> Result<ProbeResult> {
        let lead = self.lead_height(tilt);
        let fz = |z: f64| self.patch_wrench(patch, tilt, lead, z).fz;
        let top = self.spec.plate_thickness;
        let at_top = fz(top);
        if at_top < f_max {
            return Ok(ProbeResult {
                reading: ForceTorque::inserted(f_max),
                descent_depth: self.spec.floor_depth,
                inserted: true,
            });
        }
        let (mut lo, mut hi) = (0.0, top);
        let (mut f_lo, mut f_hi) = (fz(lo), at_top);
        while hi - lo > self.config.depth_tol {
            let mid = 0.5 * (lo + hi);
            let f_mid = fz(mid);
            if f_mid < f_lo || f_mid > f_hi {
                return Err(Error::NonMonotoneField {
                    x: offset.x,
                    y: offset.y,
                });
            }
            if f_mid < f_max {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
                f_hi = f_mid;
            }
        }
        // fz is piecewise linear in depth; a secant step inside the final
        // bracket lands on the threshold to rounding error
        let z = if f_hi > f_lo {
            lo + (f_max - f_lo) / (f_hi - f_lo) * (hi - lo)
        } else {
            hi
        };
        let mut reading = self.patch_wrench(patch, tilt, lead, z);
        let mut depth = z;
        if reading.fz < f_lo || reading.fz > f_hi {
            depth = hi;
            reading = self.patch_wrench(patch, tilt, lead, hi);
        }
        Ok(ProbeResult {
            reading,
            descent_depth: depth,
            inserted: false,
        })
    }

    /// Lowers the peg until the normal force reaches `f_max`. If the plate
    /// cannot supply `f_max` within its thickness the peg drops to the hole
    /// floor and reads the canonical inserted signature.
    pub fn solve_descent(&self, offset: Vec2, tilt: Tilt, f_max: f64) -> Result<ProbeResult> {
        let patch = self.patch(offset);
        self.descend(&patch, offset, &tilt, f_max)
    }

    /// Five-pose probe at `offset` with additive Gaussian sensor noise.
    /// Returns the force state and the per-pose inserted flags.
    pub fn probe_multipose_detailed(
        &self,
        offset: Vec2,
        f_max: f64,
        noise: NoiseStd,
        rng_seed: u64,
    ) -> Result<(ForceState, [bool; POSES])> {
        self.probes.fetch_add(1, Ordering::Relaxed);
        let patch = self.patch(offset);
        let mut readings = [ForceTorque::default(); POSES];
        let mut inserted = [false; POSES];
        for (i, tilt) in Tilt::poses(self.config.tilt_deg).iter().enumerate() {
            let r = self.descend(&patch, offset, tilt, f_max)?;
            readings[i] = r.reading;
            inserted[i] = r.inserted;
        }
        let mut state = ForceState::from_readings(&readings);
        add_noise(&mut state, noise, rng_seed);
        Ok((state, inserted))
    }

    pub fn probe_multipose(&self, offset: Vec2, f_max: f64, noise: NoiseStd, rng_seed: u64) -> Result<ForceState> {
        self.probe_multipose_detailed(offset, f_max, noise, rng_seed)
            .map(|(s, _)| s)
    }

    /// The noise-free state at the aligned position.
    pub fn goal_state(&self, f_max: f64) -> Result<ForceState> {
        self.probe_multipose(Vec2::ZERO, f_max, NoiseStd::ZERO, 0)
    }
}

pub fn add_noise(state: &mut ForceState, noise: NoiseStd, rng_seed: u64) {
    if noise.force <= 0.0 && noise.torque <= 0.0 {
        return;
    }
    let mut rng = seed::rng(rng_seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    for (i, v) in state.0.iter_mut().enumerate() {
        let std = if i < FORCE_DIMS { noise.force } else { noise.torque };
        let z: f64 = unit.sample(&mut rng);
        *v += std * z;
    }
}
