//! Parametric 2-d hole shapes and the peg cross-sections that fit them.
//!
//! All coordinates are millimetres in the plate frame with the hole's
//! reference point at the origin. Shapes without central symmetry are
//! translated so that their area centroid sits at the origin.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ShapeKind {
    Square,
    Round,
    Semicircle,
    Triangle,
    Diamond,
    Pentagon,
    Trapezium,
    Ellipse,
    Hexagon,
    LShape,
    XShape,
}

impl ShapeKind {
    pub const TRAINING: [ShapeKind; 7] = [
        ShapeKind::Square,
        ShapeKind::Round,
        ShapeKind::Semicircle,
        ShapeKind::Triangle,
        ShapeKind::Diamond,
        ShapeKind::Pentagon,
        ShapeKind::Trapezium,
    ];

    pub const UNSEEN: [ShapeKind; 4] = [
        ShapeKind::Ellipse,
        ShapeKind::Hexagon,
        ShapeKind::LShape,
        ShapeKind::XShape,
    ];

    pub const ALL: [ShapeKind; 11] = [
        ShapeKind::Square,
        ShapeKind::Round,
        ShapeKind::Semicircle,
        ShapeKind::Triangle,
        ShapeKind::Diamond,
        ShapeKind::Pentagon,
        ShapeKind::Trapezium,
        ShapeKind::Ellipse,
        ShapeKind::Hexagon,
        ShapeKind::LShape,
        ShapeKind::XShape,
    ];

    pub fn is_training(self) -> bool {
        Self::TRAINING.contains(&self)
    }

    /// Shapes whose sdf is invariant under `p -> -p`.
    pub fn is_centrally_symmetric(self) -> bool {
        matches!(
            self,
            ShapeKind::Round
                | ShapeKind::Square
                | ShapeKind::Ellipse
                | ShapeKind::Hexagon
                | ShapeKind::XShape
                | ShapeKind::Diamond
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Square => "square",
            ShapeKind::Round => "round",
            ShapeKind::Semicircle => "semicircle",
            ShapeKind::Triangle => "triangle",
            ShapeKind::Diamond => "diamond",
            ShapeKind::Pentagon => "pentagon",
            ShapeKind::Trapezium => "trapezium",
            ShapeKind::Ellipse => "ellipse",
            ShapeKind::Hexagon => "hexagon",
            ShapeKind::LShape => "lshape",
            ShapeKind::XShape => "xshape",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        ShapeKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == lower || (lower == "x-shaped" && *k == ShapeKind::XShape))
            .ok_or_else(|| Error::InvalidSpec(format!("unknown shape kind {s:?}")))
    }
}

/// Stiffness of the deformable boards used for the training holes (N/mm³).
pub const DEFORMABLE_ELASTICITY: f64 = 5.0;
/// Stiffness of the rigid test holes (N/mm³).
pub const RIGID_ELASTICITY: f64 = 50.0;
pub const DEFAULT_CLEARANCE: f64 = 1.0;
pub const DEFAULT_PLATE_THICKNESS: f64 = 3.0;
pub const DEFAULT_FLOOR_DEPTH: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoleSpec {
    pub kind: ShapeKind,
    /// Edge length for polygons, diameter for round and semicircle, long
    /// radius for the ellipse (mm).
    pub size: f64,
    /// Contact stiffness per unit area (N/mm per mm²).
    pub elasticity: f64,
    pub clearance: f64,
    pub plate_thickness: f64,
    pub floor_depth: f64,
}

impl HoleSpec {
    pub fn new(kind: ShapeKind, size: f64, elasticity: f64) -> Result<Self> {
        let spec = HoleSpec {
            kind,
            size,
            elasticity,
            clearance: DEFAULT_CLEARANCE,
            plate_thickness: DEFAULT_PLATE_THICKNESS,
            floor_depth: DEFAULT_FLOOR_DEPTH,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_clearance(mut self, clearance: f64) -> Result<Self> {
        self.clearance = clearance;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidSpec(format!("{what} must be positive, got {v}")))
            }
        };
        positive(self.size, "size")?;
        positive(self.elasticity, "elasticity")?;
        positive(self.clearance, "clearance")?;
        positive(self.plate_thickness, "plate_thickness")?;
        if !(self.floor_depth > self.plate_thickness) {
            return Err(Error::InvalidSpec(format!(
                "floor_depth {} must exceed plate_thickness {}",
                self.floor_depth, self.plate_thickness
            )));
        }
        Ok(())
    }

    /// Short identifier such as `round-15`.
    pub fn id(&self) -> String {
        format!("{}-{}", self.kind, self.size)
    }

    pub fn shape(&self) -> Shape {
        Shape::build(self.kind, self.size)
    }

    /// `kind,size_mm,elasticity,clearance_mm`
    pub fn to_line(&self) -> String {
        format!("{},{},{},{}", self.kind, self.size, self.elasticity, self.clearance)
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim().split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::InvalidSpec(format!(
                "expected `kind,size_mm,elasticity,clearance_mm`, got {line:?}"
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidSpec(format!("bad number {s:?} in {line:?}")))
        };
        HoleSpec::new(fields[0].parse()?, num(fields[1])?, num(fields[2])?)?.with_clearance(num(fields[3])?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatalogRole {
    Training,
    Testing,
}

/// The hole catalog: seven training shapes at 10/20/30 mm on deformable
/// boards, and rigid test holes of unseen shape or unseen size (15 mm).
pub fn catalog(role: CatalogRole) -> Vec<HoleSpec> {
    let mk = |kind, size, k| HoleSpec::new(kind, size, k).expect("catalog specs are valid");
    match role {
        CatalogRole::Training => ShapeKind::TRAINING
            .iter()
            .flat_map(|&kind| {
                [10.0, 20.0, 30.0]
                    .into_iter()
                    .map(move |s| mk(kind, s, DEFORMABLE_ELASTICITY))
            })
            .collect(),
        CatalogRole::Testing => [
            ShapeKind::Round,
            ShapeKind::Square,
            ShapeKind::Triangle,
            ShapeKind::Ellipse,
            ShapeKind::Hexagon,
            ShapeKind::LShape,
            ShapeKind::XShape,
        ]
        .into_iter()
        .map(|kind| mk(kind, 15.0, RIGID_ELASTICITY))
        .collect(),
    }
}

pub fn catalog_to_text(specs: &[HoleSpec]) -> String {
    let mut out = String::from("# kind,size_mm,elasticity,clearance_mm\n");
    for s in specs {
        out.push_str(&s.to_line());
        out.push('\n');
    }
    out
}

pub fn catalog_from_text(text: &str) -> Result<Vec<HoleSpec>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(HoleSpec::from_line)
        .collect()
}

/// Geometric realisation of a hole aperture.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Disk {
        radius: f64,
    },
    /// Half disk whose flat side lies on `y = -offset`, bulging towards `+y`.
    HalfDisk {
        radius: f64,
        offset: f64,
    },
    Ellipse {
        semi_major: f64,
        semi_minor: f64,
    },
    Polygon {
        vertices: Vec<Vec2>,
    },
}

impl Shape {
    pub fn build(kind: ShapeKind, s: f64) -> Shape {
        match kind {
            ShapeKind::Round => Shape::Disk { radius: s / 2.0 },
            ShapeKind::Semicircle => {
                let radius = s / 2.0;
                Shape::HalfDisk {
                    radius,
                    offset: 4.0 * radius / (3.0 * PI),
                }
            }
            ShapeKind::Ellipse => Shape::Ellipse {
                semi_major: s,
                semi_minor: s * 2.0 / 3.0,
            },
            ShapeKind::Square => {
                let h = s / 2.0;
                symmetric_polygon(&[Vec2::new(h, -h), Vec2::new(h, h)])
            }
            ShapeKind::Diamond => {
                let (a, b) = (s * (PI / 6.0).cos(), s * 0.5);
                symmetric_polygon(&[Vec2::new(a, 0.0), Vec2::new(0.0, b)])
            }
            ShapeKind::Hexagon => {
                let pts: Vec<Vec2> = (0..3)
                    .map(|k| {
                        let t = k as f64 * PI / 3.0;
                        Vec2::new(s * t.cos(), s * t.sin())
                    })
                    .collect();
                symmetric_polygon(&pts)
            }
            ShapeKind::XShape => {
                let (l, w) = (s / 2.0, s / 6.0);
                let plus = [
                    Vec2::new(l, w),
                    Vec2::new(w, w),
                    Vec2::new(w, l),
                    Vec2::new(-w, l),
                    Vec2::new(-w, w),
                    Vec2::new(-l, w),
                ];
                let rotated: Vec<Vec2> = plus
                    .iter()
                    .map(|p| Vec2::new((p.x - p.y) * FRAC_1_SQRT_2, (p.x + p.y) * FRAC_1_SQRT_2))
                    .collect();
                symmetric_polygon(&rotated)
            }
            ShapeKind::Triangle => regular_polygon(3, s),
            ShapeKind::Pentagon => regular_polygon(5, s),
            ShapeKind::Trapezium => {
                let (b, t, h) = (s / 2.0, s / 4.0, 0.6 * s);
                centered_polygon(vec![
                    Vec2::new(-b, 0.0),
                    Vec2::new(b, 0.0),
                    Vec2::new(t, h),
                    Vec2::new(-t, h),
                ])
            }
            ShapeKind::LShape => {
                let h = s / 2.0;
                centered_polygon(vec![
                    Vec2::new(0.0, 0.0),
                    Vec2::new(s, 0.0),
                    Vec2::new(s, h),
                    Vec2::new(h, h),
                    Vec2::new(h, s),
                    Vec2::new(0.0, s),
                ])
            }
        }
    }

    /// Signed distance: negative inside the aperture, positive over the plate.
    pub fn sdf(&self, p: Vec2) -> f64 {
        match self {
            Shape::Disk { radius } => p.norm() - radius,
            Shape::HalfDisk { radius, offset } => half_disk_sdf(*radius, Vec2::new(p.x, p.y + offset)),
            Shape::Ellipse { semi_major, semi_minor } => ellipse_sdf(*semi_major, *semi_minor, p),
            Shape::Polygon { vertices } => polygon_sdf(vertices, p),
        }
    }

    /// Outward unit normal of the level set through `p` (direction of
    /// increasing sdf), by central differences.
    pub fn sdf_gradient(&self, p: Vec2) -> Vec2 {
        const H: f64 = 1e-5;
        let gx = self.sdf(p + Vec2::new(H, 0.0)) - self.sdf(p - Vec2::new(H, 0.0));
        let gy = self.sdf(p + Vec2::new(0.0, H)) - self.sdf(p - Vec2::new(0.0, H));
        let g = Vec2::new(gx, gy);
        let n = g.norm();
        if n > 0.0 {
            g * (1.0 / n)
        } else {
            Vec2::ZERO
        }
    }

    /// Axis-aligned half extents of a box centred at the origin that contains
    /// the aperture.
    pub fn half_extent(&self) -> Vec2 {
        match self {
            Shape::Disk { radius } => Vec2::new(*radius, *radius),
            Shape::HalfDisk { radius, offset } => Vec2::new(*radius, radius.max(*offset)),
            Shape::Ellipse { semi_major, semi_minor } => Vec2::new(*semi_major, *semi_minor),
            Shape::Polygon { vertices } => vertices.iter().fold(Vec2::ZERO, |acc, v| {
                Vec2::new(acc.x.max(v.x.abs()), acc.y.max(v.y.abs()))
            }),
        }
    }

    /// Exact containment test, independent of the distance computation.
    pub fn contains(&self, p: Vec2) -> bool {
        match self {
            Shape::Disk { radius } => p.norm_sq() < radius * radius,
            Shape::HalfDisk { radius, offset } => {
                let q = Vec2::new(p.x, p.y + offset);
                q.y > 0.0 && q.norm_sq() < radius * radius
            }
            Shape::Ellipse { semi_major, semi_minor } => (p.x / semi_major).powi(2) + (p.y / semi_minor).powi(2) < 1.0,
            Shape::Polygon { vertices } => point_in_polygon(vertices, p),
        }
    }
}

/// Polygon from the first half of a centrally symmetric vertex loop; the
/// second half is the exact negation so that `sdf(p) == sdf(-p)` bit for bit.
fn symmetric_polygon(half: &[Vec2]) -> Shape {
    let mut vertices = half.to_vec();
    vertices.extend(half.iter().map(|&v| -v));
    Shape::Polygon { vertices }
}

fn regular_polygon(n: usize, edge: f64) -> Shape {
    let r = edge / (2.0 * (PI / n as f64).sin());
    let vertices = (0..n)
        .map(|k| {
            let t = PI / 2.0 + 2.0 * PI * k as f64 / n as f64;
            Vec2::new(r * t.cos(), r * t.sin())
        })
        .collect();
    Shape::Polygon { vertices }
}

/// Translates a simple polygon so its area centroid is at the origin.
fn centered_polygon(vertices: Vec<Vec2>) -> Shape {
    let c = polygon_centroid(&vertices);
    Shape::Polygon {
        vertices: vertices.into_iter().map(|v| v - c).collect(),
    }
}

fn polygon_centroid(v: &[Vec2]) -> Vec2 {
    let mut area2 = 0.0;
    let mut c = Vec2::ZERO;
    for i in 0..v.len() {
        let (a, b) = (v[i], v[(i + 1) % v.len()]);
        let w = a.cross(b);
        area2 += w;
        c += (a + b) * w;
    }
    c * (1.0 / (3.0 * area2))
}

/// Crossing-number test with a `+x` ray.
pub fn point_in_polygon(v: &[Vec2], p: Vec2) -> bool {
    let mut inside = false;
    let mut j = v.len() - 1;
    for i in 0..v.len() {
        let (a, b) = (v[i], v[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn segment_distance_sq(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
    (p - a - ab * t).norm_sq()
}

fn polygon_sdf(v: &[Vec2], p: Vec2) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..v.len() {
        best = best.min(segment_distance_sq(p, v[i], v[(i + 1) % v.len()]));
    }
    let d = best.sqrt();
    if point_in_polygon(v, p) {
        -d
    } else {
        d
    }
}

/// Half disk `{|q| < r, q.y > 0}` in its own frame.
fn half_disk_sdf(r: f64, q: Vec2) -> f64 {
    let flat = segment_distance_sq(q, Vec2::new(-r, 0.0), Vec2::new(r, 0.0)).sqrt();
    let arc = if q.y >= 0.0 {
        (q.norm() - r).abs()
    } else {
        (q - Vec2::new(r, 0.0)).norm().min((q + Vec2::new(r, 0.0)).norm())
    };
    let d = flat.min(arc);
    if q.y > 0.0 && q.norm_sq() < r * r {
        -d
    } else {
        d
    }
}

/// Robust point-to-ellipse distance (bisection on the secular equation),
/// exact to machine precision and symmetric in both axes.
fn ellipse_sdf(a: f64, b: f64, p: Vec2) -> f64 {
    let (e0, e1) = (a, b);
    let (y0, y1) = (p.x.abs(), p.y.abs());
    let dist = if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g != 0.0 {
                let r0 = (e0 / e1) * (e0 / e1);
                let sbar = ellipse_root(r0, z0, z1, g);
                let x0 = r0 * y0 / (sbar + r0);
                let x1 = y1 / (sbar + 1.0);
                (x0 - y0).hypot(x1 - y1)
            } else {
                0.0
            }
        } else {
            (y1 - e1).abs()
        }
    } else {
        let numer0 = e0 * y0;
        let denom0 = e0 * e0 - e1 * e1;
        if numer0 < denom0 {
            let xde0 = numer0 / denom0;
            let x0 = e0 * xde0;
            let x1 = e1 * (1.0 - xde0 * xde0).max(0.0).sqrt();
            (x0 - y0).hypot(x1)
        } else {
            (y0 - e0).abs()
        }
    };
    if (y0 / e0).powi(2) + (y1 / e1).powi(2) < 1.0 {
        -dist
    } else {
        dist
    }
}

fn ellipse_root(r0: f64, z0: f64, z1: f64, g: f64) -> f64 {
    let n0 = r0 * z0;
    let mut s0 = z1 - 1.0;
    let mut s1 = if g < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
    let mut s = 0.0;
    for _ in 0..200 {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 {
            break;
        }
        let ratio0 = n0 / (s + r0);
        let ratio1 = z1 / (s + 1.0);
        let gs = ratio0 * ratio0 + ratio1 * ratio1 - 1.0;
        if gs > 0.0 {
            s0 = s;
        } else if gs < 0.0 {
            s1 = s;
        } else {
            break;
        }
    }
    s
}

/// Signed distance from `p` to the boundary of the hole described by `spec`.
pub fn sdf(spec: &HoleSpec, p: Vec2) -> f64 {
    spec.shape().sdf(p)
}

/// Sample points covering the peg cross-section.
#[derive(Debug, Clone, PartialEq)]
pub struct PegFootprint {
    pub points: Vec<Vec2>,
    /// Area represented by each point (mm²).
    pub point_area: f64,
    pub centroid: Vec2,
}

impl PegFootprint {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.point_area * self.points.len() as f64
    }
}

pub const MIN_FOOTPRINT_POINTS: usize = 64;

/// Rasterises the hole eroded by its clearance on a lattice with
/// `resolution` points per millimetre. The lattice is symmetric about the
/// origin. If fewer than [`MIN_FOOTPRINT_POINTS`] points survive, the
/// resolution is doubled (up to 16×) before giving up.
pub fn make_footprint(spec: &HoleSpec, resolution: f64) -> Result<PegFootprint> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "footprint resolution must be positive, got {resolution}"
        )));
    }
    spec.validate()?;
    let shape = spec.shape();
    let ext = shape.half_extent();
    let mut res = resolution;
    for _ in 0..5 {
        let h = 1.0 / res;
        let nx = (ext.x / h).ceil() as i64 + 1;
        let ny = (ext.y / h).ceil() as i64 + 1;
        let mut points = Vec::new();
        for iy in -ny..ny {
            for ix in -nx..nx {
                let p = Vec2::new((ix as f64 + 0.5) * h, (iy as f64 + 0.5) * h);
                if shape.sdf(p) <= -spec.clearance {
                    points.push(p);
                }
            }
        }
        if points.len() >= MIN_FOOTPRINT_POINTS {
            let sum = points.iter().fold(Vec2::ZERO, |acc, &p| acc + p);
            let centroid = sum * (1.0 / points.len() as f64);
            return Ok(PegFootprint {
                points,
                point_area: h * h,
                centroid,
            });
        }
        res *= 2.0;
    }
    Err(Error::EmptyFootprint {
        kind: spec.kind.to_string(),
        clearance: spec.clearance,
    })
}
