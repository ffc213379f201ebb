use std::collections::{HashMap, HashSet};

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cloud::Point;
use crate::error::{Error, Result};
use crate::seed::rng_for;

const SHAPE_STREAM: u64 = 0x5348_4150;
const FIDUCIAL_STREAM: u64 = 0x4649_4455;
const SCALE_STREAM: u64 = 0x5343_414c;

/// Closed triangle surface with interior marker points, in millimetres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub fiducials: Vec<Point>,
}

impl SyntheticMesh {
    pub fn validate(&self) -> Result<()> {
        if self.vertices.is_empty() || self.triangles.is_empty() {
            return Err(Error::param("mesh needs vertices and triangles"));
        }
        if let Some(t) = self
            .triangles
            .iter()
            .find(|t| t.iter().any(|&i| i >= self.vertices.len()))
        {
            return Err(Error::param(format!("triangle {t:?} references a missing vertex")));
        }
        Ok(())
    }

    /// `V - E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = HashSet::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.vertices.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    /// Every edge shared by exactly two triangles, traversed in opposite
    /// directions (closed and consistently oriented).
    pub fn is_watertight(&self) -> bool {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// Ray-parity inside test against the triangles.
    pub fn contains(&self, p: &Point) -> bool {
        // An irrational-ish direction avoids hitting edges exactly.
        let dir = Vector3::new(0.577_215_664_9, std::f64::consts::LOG10_2, 0.758_546_143_9).normalize();
        let mut crossings = 0;
        for t in &self.triangles {
            if ray_hits_triangle(
                p,
                &dir,
                &self.vertices[t[0]],
                &self.vertices[t[1]],
                &self.vertices[t[2]],
            ) {
                crossings += 1;
            }
        }
        crossings % 2 == 1
    }

    pub fn extent(&self) -> Vector3<f64> {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        hi - lo
    }

    /// Applies `f` to vertices and fiducials alike.
    pub fn map_points(&self, f: impl Fn(&Point) -> Point) -> Self {
        Self {
            vertices: self.vertices.iter().map(&f).collect(),
            triangles: self.triangles.clone(),
            fiducials: self.fiducials.iter().map(&f).collect(),
        }
    }
}

fn ray_hits_triangle(origin: &Point, dir: &Vector3<f64>, a: &Point, b: &Point, c: &Point) -> bool {
    // Moller-Trumbore.
    let e1 = b - a;
    let e2 = c - a;
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-14 {
        return false;
    }
    let s = origin - a;
    let u = s.dot(&h) / det;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) / det;
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    e2.dot(&q) / det > 0.0
}

/// Parameters of the procedural organ-like blob.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapeParams {
    /// Icosphere subdivision level (4 gives 2562 vertices).
    pub subdivisions: u32,
    /// Range of the longest semi-axis, mm.
    pub semi_axis: [f64; 2],
    /// Second semi-axis as a fraction of the first.
    pub middle_ratio: [f64; 2],
    /// Third semi-axis as a fraction of the first.
    pub minor_ratio: [f64; 2],
    /// Cap on the relative radial perturbation by the harmonics (0: ellipsoid).
    pub harmonic_amplitude: f64,
    pub fiducials: usize,
    /// Fiducials stay inside this fraction of the local radius.
    pub fiducial_margin: f64,
}

impl Default for ShapeParams {
    fn default() -> Self {
        Self {
            subdivisions: 4,
            semi_axis: [72.0, 85.0],
            middle_ratio: [0.6, 0.9],
            minor_ratio: [0.4, 0.65],
            harmonic_amplitude: 0.25,
            fiducials: 200,
            fiducial_margin: 0.9,
        }
    }
}

impl ShapeParams {
    fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite();
        if !(ordered(self.semi_axis) && ordered(self.middle_ratio) && ordered(self.minor_ratio)) {
            return Err(Error::param("shape ranges must be positive and ordered"));
        }
        if !(0.0..0.5).contains(&self.harmonic_amplitude) {
            return Err(Error::param("harmonic amplitude must lie in [0, 0.5)"));
        }
        if !(self.fiducial_margin > 0.0 && self.fiducial_margin < 1.0) {
            return Err(Error::param("fiducial margin must lie in (0, 1)"));
        }
        if self.subdivisions > 7 {
            return Err(Error::param("icosphere subdivision level above 7"));
        }
        Ok(())
    }
}

/// Unit icosphere: vertices on the sphere and outward-oriented triangles.
pub fn icosphere(subdivisions: u32) -> (Vec<Point>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Point> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Point>| {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) / 2.0).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

/// Real spherical-harmonic basis for degrees 1..=3 (unnormalized polynomial form).
fn harmonics(d: &Vector3<f64>) -> [f64; 15] {
    let (x, y, z) = (d.x, d.y, d.z);
    [
        y,
        z,
        x,
        x * y,
        y * z,
        3.0 * z * z - 1.0,
        x * z,
        x * x - y * y,
        y * (3.0 * x * x - y * y),
        x * y * z,
        y * (5.0 * z * z - 1.0),
        z * (5.0 * z * z - 3.0),
        x * (5.0 * z * z - 1.0),
        z * (x * x - y * y),
        x * (x * x - 3.0 * y * y),
    ]
}

/// Star-shaped radial surface `r(d)`.
#[derive(Clone, Debug, PartialEq)]
struct RadialShape {
    axes: Vector3<f64>,
    coefficients: [f64; 15],
}

impl RadialShape {
    fn radius(&self, d: &Vector3<f64>) -> f64 {
        let e = 1.0 / ((d.x / self.axes.x).powi(2) + (d.y / self.axes.y).powi(2) + (d.z / self.axes.z).powi(2)).sqrt();
        let h: f64 = harmonics(d).iter().zip(&self.coefficients).map(|(b, c)| b * c).sum();
        e * (1.0 + h)
    }
}

/// Smooth blob: a harmonic-perturbed ellipsoid sampled on an icosphere, with
/// interior fiducials drawn by rejection.
pub fn generate_shape(seed: u64) -> SyntheticMesh {
    generate_shape_with(seed, &ShapeParams::default()).expect("default shape parameters are valid")
}

pub fn generate_shape_with(seed: u64, params: &ShapeParams) -> Result<SyntheticMesh> {
    params.validate()?;
    let mut rng = rng_for(seed, &[SHAPE_STREAM]);
    let a = rng.random_range(params.semi_axis[0]..=params.semi_axis[1]);
    let b = a * rng.random_range(params.middle_ratio[0]..=params.middle_ratio[1]);
    let c = a * rng.random_range(params.minor_ratio[0]..=params.minor_ratio[1]);
    let mut coefficients = [0.0; 15];
    for (k, slot) in coefficients.iter_mut().enumerate() {
        // Degree 1 only shifts the blob; degree 3 is damped.
        let weight = if k < 3 {
            0.0
        } else if k < 8 {
            1.0
        } else {
            0.6
        };
        let g: f64 = StandardNormal.sample(&mut rng);
        *slot = g * weight;
    }
    let (dirs, triangles) = icosphere(params.subdivisions);
    let mut shape = RadialShape {
        axes: Vector3::new(a, b, c),
        coefficients,
    };
    let h: Vec<f64> = dirs
        .iter()
        .map(|d| harmonics(d).iter().zip(&coefficients).map(|(h, c)| h * c).sum::<f64>())
        .collect();
    let rms = (h.iter().map(|v| v * v).sum::<f64>() / h.len() as f64).sqrt();
    let peak = h.iter().map(|v| v.abs()).fold(0.0, f64::max);
    // Typical perturbation around a third of the cap, peak never above it.
    let wanted = params.harmonic_amplitude * rng.random_range(0.25..=0.45);
    let gain = if rms > 0.0 {
        (wanted / rms).min(params.harmonic_amplitude / peak)
    } else {
        0.0
    };
    shape.coefficients.iter_mut().for_each(|c| *c *= gain);

    let vertices: Vec<Point> = dirs.iter().map(|d| d * shape.radius(d)).collect();

    let mut frng = rng_for(seed, &[FIDUCIAL_STREAM]);
    let bound = vertices.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut fiducials = Vec::with_capacity(params.fiducials);
    while fiducials.len() < params.fiducials {
        let p = Vector3::new(
            frng.random_range(-bound..bound),
            frng.random_range(-bound..bound),
            frng.random_range(-bound..bound),
        );
        let r = p.norm();
        if r == 0.0 || r < params.fiducial_margin * shape.radius(&(p / r)) {
            fiducials.push(p);
        }
    }
    Ok(SyntheticMesh {
        vertices,
        triangles,
        fiducials,
    })
}

/// Per-axis scaling by factors drawn from `U[0.5, 1]`.
pub fn apply_scaling_augmentation(mesh: &SyntheticMesh, seed: u64) -> SyntheticMesh {
    scale_mesh(mesh, &scaling_factors(seed))
}

pub fn scaling_factors(seed: u64) -> Vector3<f64> {
    let mut rng = rng_for(seed, &[SCALE_STREAM]);
    Vector3::new(
        rng.random_range(0.5..=1.0),
        rng.random_range(0.5..=1.0),
        rng.random_range(0.5..=1.0),
    )
}

pub fn scale_mesh(mesh: &SyntheticMesh, factors: &Vector3<f64>) -> SyntheticMesh {
    mesh.map_points(|p| p.component_mul(factors))
}
