use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SyntheticMesh;
use crate::cloud::{Point, RigidTransform};
use crate::error::{Error, Result};
use crate::matching::fit_rigid;
use crate::seed::rng_for;

const CONTROL_STREAM: u64 = 0x4354_524c;

/// Gradient norm the field is rescaled to stay under.
pub const GRADIENT_LIMIT: f64 = 0.5;
/// Gradient norm at which a field is rejected outright.
pub const GRADIENT_REJECT: f64 = 1.0;

/// Random Gaussian-RBF displacement field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformationSpec {
    pub control_points: usize,
    /// Kernel width sigma, mm.
    pub kernel_width: f64,
    /// Standard deviation of each weight component, mm.
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for DeformationSpec {
    fn default() -> Self {
        Self {
            control_points: 8,
            kernel_width: 40.0,
            amplitude: 4.2,
            seed: 0,
        }
    }
}

impl DeformationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::param(format!(
                "amplitude must be non-negative, got {}",
                self.amplitude
            )));
        }
        if !(self.kernel_width > 0.0 && self.kernel_width.is_finite()) {
            return Err(Error::param(format!(
                "kernel width must be positive, got {}",
                self.kernel_width
            )));
        }
        Ok(())
    }
}

/// `u(x) = sum_c w_c exp(-|x - c|^2 / (2 sigma^2))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementField {
    pub centers: Vec<Point>,
    pub weights: Vec<Vector3<f64>>,
    pub kernel_width: f64,
}

impl DisplacementField {
    pub fn new(centers: Vec<Point>, weights: Vec<Vector3<f64>>, kernel_width: f64) -> Result<Self> {
        if centers.len() != weights.len() {
            return Err(Error::param("one weight per control point"));
        }
        if !(kernel_width > 0.0) {
            return Err(Error::param("kernel width must be positive"));
        }
        Ok(Self {
            centers,
            weights,
            kernel_width,
        })
    }

    pub fn displacement(&self, x: &Point) -> Vector3<f64> {
        let s2 = 2.0 * self.kernel_width * self.kernel_width;
        self.centers
            .iter()
            .zip(&self.weights)
            .fold(Vector3::zeros(), |acc, (c, w)| {
                acc + w * (-(x - c).norm_squared() / s2).exp()
            })
    }

    /// Jacobian `du/dx`.
    pub fn gradient(&self, x: &Point) -> Matrix3<f64> {
        let s2 = self.kernel_width * self.kernel_width;
        self.centers
            .iter()
            .zip(&self.weights)
            .fold(Matrix3::zeros(), |acc, (c, w)| {
                let d = x - c;
                let k = (-d.norm_squared() / (2.0 * s2)).exp();
                acc - w * d.transpose() * (k / s2)
            })
    }

    fn scale(&mut self, factor: f64) {
        self.weights.iter_mut().for_each(|w| *w *= factor);
    }
}

/// Draws a field around `mesh`: control points uniform in its bounding box,
/// weight components `N(0, amplitude^2)`.
pub fn sample_field(mesh: &SyntheticMesh, spec: &DeformationSpec) -> Result<DisplacementField> {
    spec.validate()?;
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for v in &mesh.vertices {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    let mut rng = rng_for(spec.seed, &[CONTROL_STREAM]);
    let mut centers = Vec::with_capacity(spec.control_points);
    let mut weights = Vec::with_capacity(spec.control_points);
    for _ in 0..spec.control_points {
        centers.push(Vector3::from_fn(|i, _| {
            if lo[i] < hi[i] {
                rng.random_range(lo[i]..=hi[i])
            } else {
                lo[i]
            }
        }));
        weights.push(Vector3::from_fn(|_, _| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * spec.amplitude
        }));
    }
    DisplacementField::new(centers, weights, spec.kernel_width)
}

/// Largest Frobenius norm of the field gradient over the mesh vertices and fiducials.
pub fn max_gradient(field: &DisplacementField, mesh: &SyntheticMesh) -> f64 {
    mesh.vertices
        .iter()
        .chain(&mesh.fiducials)
        .map(|p| field.gradient(p).norm())
        .fold(0.0, f64::max)
}

/// Displaces vertices and fiducials by a random smooth field.
///
/// Fields whose gradient reaches [`GRADIENT_LIMIT`] are scaled down below it;
/// fields at or above [`GRADIENT_REJECT`] are rejected so the caller can
/// resample with another seed.
pub fn deform(mesh: &SyntheticMesh, spec: &DeformationSpec) -> Result<(SyntheticMesh, DisplacementField)> {
    let mut field = sample_field(mesh, spec)?;
    let g = max_gradient(&field, mesh);
    if g >= GRADIENT_REJECT {
        return Err(Error::DeformationRejected { gradient: g });
    }
    if g >= GRADIENT_LIMIT {
        field.scale(0.99 * GRADIENT_LIMIT / g);
    }
    let deformed = mesh.map_points(|p| p + field.displacement(p));
    Ok((deformed, field))
}

/// Result of aligning a deformed model back onto its undeformed fiducials.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidRemoval {
    pub mesh: SyntheticMesh,
    /// Transform applied to the deformed model.
    pub transform: RigidTransform,
    /// Fiducial RMS after alignment, mm.
    pub residual_rms: f64,
}

pub fn fiducial_rms(a: &[Point], b: &[Point]) -> f64 {
    (a.iter().zip(b).map(|(p, q)| (p - q).norm_squared()).sum::<f64>() / a.len() as f64).sqrt()
}

/// Unweighted Procrustes from the deformed fiducials onto the undeformed
/// ones, applied to the whole deformed model.
pub fn remove_rigid_component(undeformed_fiducials: &[Point], deformed: &SyntheticMesh) -> Result<RigidRemoval> {
    if undeformed_fiducials.len() != deformed.fiducials.len() {
        return Err(Error::param("fiducial sets differ in length"));
    }
    if undeformed_fiducials.len() < 3 {
        return Err(Error::param("rigid removal needs at least 3 fiducials"));
    }
    let transform = fit_rigid(&deformed.fiducials, undeformed_fiducials, None)?;
    let mesh = deformed.map_points(|p| transform.apply(p));
    let residual_rms = fiducial_rms(&mesh.fiducials, undeformed_fiducials);
    Ok(RigidRemoval {
        mesh,
        transform,
        residual_rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::generate_shape;

    #[test]
    fn zero_amplitude_is_identity() {
        let m = generate_shape(0);
        let spec = DeformationSpec {
            amplitude: 0.0,
            ..Default::default()
        };
        let (d, _) = deform(&m, &spec).unwrap();
        assert_eq!(d, m);
    }

    #[test]
    fn far_narrow_kernel_vanishes() {
        let m = generate_shape(0);
        let field = DisplacementField::new(
            vec![Vector3::new(1e4, 0.0, 0.0)],
            vec![Vector3::new(50.0, 50.0, 50.0)],
            1.0,
        )
        .unwrap();
        for v in &m.vertices {
            assert!(field.displacement(v).norm() < 1e-12);
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let m = generate_shape(1);
        let field = sample_field(&m, &DeformationSpec::default()).unwrap();
        let x = m.vertices[17];
        let g = field.gradient(&x);
        let h = 1e-4;
        for k in 0..3 {
            let mut e = Vector3::zeros();
            e[k] = h;
            let fd = (field.displacement(&(x + e)) - field.displacement(&(x - e))) / (2.0 * h);
            for r in 0..3 {
                assert!((g[(r, k)] - fd[r]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gradient_guard() {
        let m = generate_shape(2);
        let wild = DeformationSpec {
            amplitude: 500.0,
            kernel_width: 10.0,
            ..Default::default()
        };
        assert!(matches!(deform(&m, &wild), Err(Error::DeformationRejected { .. })));
        for seed in 0..10 {
            let spec = DeformationSpec {
                seed,
                ..Default::default()
            };
            if let Ok((_, field)) = deform(&m, &spec) {
                assert!(max_gradient(&field, &m) < GRADIENT_LIMIT);
            }
        }
    }

    #[test]
    fn rigid_motion_is_removed_exactly() {
        let m = generate_shape(3);
        let t = RigidTransform::from_euler_xyz(0.4, -0.3, 1.0, Vector3::new(10.0, -20.0, 5.0));
        let moved = m.map_points(|p| t.apply(p));
        let r = remove_rigid_component(&m.fiducials, &moved).unwrap();
        assert!(r.residual_rms < 1e-9);
        for (a, b) in r.mesh.vertices.iter().zip(&m.vertices) {
            assert!((a - b).norm() < 1e-9);
        }
        let r0 = remove_rigid_component(&m.fiducials, &m).unwrap();
        assert!(r0.transform.rotation_error(&RigidTransform::identity()) < 1e-9);
        assert!(r0.transform.translation_error(&RigidTransform::identity()) < 1e-9);
    }

    #[test]
    fn removal_reduces_residual_and_is_a_fixed_point() {
        let m = generate_shape(4);
        let spec = DeformationSpec {
            seed: 11,
            ..Default::default()
        };
        let (d, _) = deform(&m, &spec).unwrap();
        let before = fiducial_rms(&d.fiducials, &m.fiducials);
        let r = remove_rigid_component(&m.fiducials, &d).unwrap();
        assert!(r.residual_rms <= before);
        let again = remove_rigid_component(&m.fiducials, &r.mesh).unwrap();
        assert!(again.transform.rotation_error(&RigidTransform::identity()) < 1e-9);
        assert!(again.transform.translation_error(&RigidTransform::identity()) < 1e-9);
    }

    #[test]
    fn too_few_fiducials() {
        let mut m = generate_shape(0);
        m.fiducials.truncate(2);
        assert!(remove_rigid_component(&m.fiducials, &m).is_err());
    }
}
