//! Rotation-group primitives.
//!
//! Axial vectors are identified with antisymmetric matrices through
//! `hat(a) x = a ∧ x`. Rotations are plain [`Mat3`]s; functions that accept
//! user input validate orthogonality, internal helpers do not.

use crate::error::{Error, Result};
use crate::quad;
use crate::{Mat3, Vec3};

const UNIT_TOL: f64 = 1e-10;

/// Antisymmetric matrix of `a`: `hat(a) x = a ∧ x`.
pub fn hat(a: &Vec3) -> Mat3 {
    Mat3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Axial vector of the antisymmetric part of `m`.
pub fn vee(m: &Mat3) -> Vec3 {
    0.5 * Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
}

/// Frobenius norm, written `|||·|||` in the docs.
pub fn fro(m: &Mat3) -> f64 {
    m.norm()
}

/// `sin√x/√x` and `(1 − cos√x)/x` together with their first two x-derivatives.
///
/// Series for small x, closed forms beyond; the series is used up to x = 1
/// where twelve terms are far below rounding.
pub(crate) fn exp_coeffs(x: f64) -> ([f64; 3], [f64; 3]) {
    if x <= 1.0 {
        let mut a = [0.0; 3];
        let mut b = [0.0; 3];
        // a_n = (-1)^n/(2n+1)!, b_n = (-1)^n/(2n+2)!
        let mut fa = 1.0; // 1/(2n+1)!
        let mut fb = 0.5; // 1/(2n+2)!
        for n in 0..12 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let nf = n as f64;
            let xn = if n == 0 { 1.0 } else { x.powi(n) };
            let xn1 = if n >= 1 { nf * x.powi(n - 1) } else { 0.0 };
            let xn2 = if n >= 2 { nf * (nf - 1.0) * x.powi(n - 2) } else { 0.0 };
            a[0] += sign * fa * xn;
            a[1] += sign * fa * xn1;
            a[2] += sign * fa * xn2;
            b[0] += sign * fb * xn;
            b[1] += sign * fb * xn1;
            b[2] += sign * fb * xn2;
            fa /= (2.0 * nf + 2.0) * (2.0 * nf + 3.0);
            fb /= (2.0 * nf + 3.0) * (2.0 * nf + 4.0);
        }
        (a, b)
    } else {
        let t = x.sqrt();
        let (s, c) = t.sin_cos();
        let a0 = s / t;
        let a1 = (t * c - s) / (2.0 * t.powi(3));
        let a2 = (-t * t * s - 3.0 * t * c + 3.0 * s) / (4.0 * t.powi(5));
        let b0 = (1.0 - c) / x;
        let nb = t * s - 2.0 * (1.0 - c);
        let b1 = nb / (2.0 * t.powi(4));
        let b2 = (t * (t * c - s) - 4.0 * nb) / (4.0 * t.powi(6));
        ([a0, a1, a2], [b0, b1, b2])
    }
}

/// `exp(hat(φ))` without validation.
pub fn exp_axial(phi: &Vec3) -> Mat3 {
    let (a, b) = exp_coeffs(phi.norm_squared());
    let k = hat(phi);
    Mat3::identity() + k * a[0] + k * k * b[0]
}

/// Right Jacobian of the exponential: `d exp(φ+εψ)/dε = exp(φ) hat(J_r(φ) ψ)`.
pub fn right_jacobian(phi: &Vec3) -> Mat3 {
    let x = phi.norm_squared();
    let k = hat(phi);
    let (a, b) = exp_coeffs(x);
    // (θ − sinθ)/θ³ = (1 − a)/x, evaluated by series for small x.
    let c = if x <= 1e-2 {
        1.0 / 6.0 - x / 120.0 + x * x / 5040.0 - x * x * x / 362_880.0
    } else {
        (1.0 - a[0]) / x
    };
    Mat3::identity() - k * b[0] + k * k * c
}

/// Rotation by `theta` about the unit `axis`:
/// `R x = cosθ x + (1 − cosθ)(x·a)a + sinθ a∧x`.
pub fn rodrigues(axis: &Vec3, theta: f64) -> Result<Mat3> {
    if !axis.iter().all(|v| v.is_finite()) || !theta.is_finite() {
        return Err(Error::invalid("rodrigues: non-finite input"));
    }
    if (axis.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::invalid(format!(
            "rodrigues: axis norm {} is not 1",
            axis.norm()
        )));
    }
    let (s, c) = theta.sin_cos();
    Ok(Mat3::identity() * c + axis * axis.transpose() * (1.0 - c) + hat(axis) * s)
}

/// Deviation from SO(3): `(|||RᵀR − I|||, |det R − 1|)`.
pub fn orthogonality_defect(r: &Mat3) -> (f64, f64) {
    ((r.transpose() * r - Mat3::identity()).norm(), (r.determinant() - 1.0).abs())
}

/// Nearest rotation to `m` in Frobenius norm: `U diag(1,1,det(UVᵀ)) Vᵀ`.
/// Also returns the singular values (descending).
pub fn polar_rotation(m: &Mat3) -> (Mat3, [f64; 3]) {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    // nalgebra does not sort singular values; do it here.
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| svd.singular_values[j].partial_cmp(&svd.singular_values[i]).unwrap());
    let sigma = [
        svd.singular_values[idx[0]],
        svd.singular_values[idx[1]],
        svd.singular_values[idx[2]],
    ];
    let u = Mat3::from_columns(&[u.column(idx[0]), u.column(idx[1]), u.column(idx[2])]);
    let vt = Mat3::from_rows(&[vt.row(idx[0]), vt.row(idx[1]), vt.row(idx[2])]);
    let d = (u * vt).determinant().signum();
    let r = u * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * vt;
    (r, sigma)
}

/// Result of [`log_rotation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle {
    pub axis: Vec3,
    /// In `[0, π]`.
    pub theta: f64,
    /// The input was not orthogonal within 1e-12 and was projected first.
    pub projected: bool,
}

impl AxisAngle {
    pub fn rotation_vector(&self) -> Vec3 {
        self.axis * self.theta
    }
}

/// Inverse of [`rodrigues`] with `θ ∈ [0, π]`.
///
/// `θ = 0` gives axis `e₁`. Near `θ = π` the axis is read from the dominant
/// diagonal entry of `(R + Rᵀ)/2 − cosθ I`; exactly at π the sign is fixed so
/// the first nonzero component is positive.
pub fn log_rotation(r: &Mat3) -> Result<AxisAngle> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("log_rotation: non-finite matrix"));
    }
    let (o, d) = orthogonality_defect(r);
    let (r, projected) = if o > 1e-12 || d > 1e-12 {
        let (p, sigma) = polar_rotation(r);
        if sigma[2] <= 1e-12 * sigma[0].max(1e-300) {
            return Err(Error::invalid("log_rotation: singular matrix"));
        }
        (p, true)
    } else {
        (*r, false)
    };
    let s = vee(&r);
    let c = 0.5 * (r.trace() - 1.0);
    let sn = s.norm();
    let theta = sn.atan2(c.clamp(-1.0, 1.0));
    if sn == 0.0 && c > 0.0 {
        return Ok(AxisAngle { axis: Vec3::x(), theta: 0.0, projected });
    }
    let axis = if c > -0.5 {
        s / sn
    } else {
        // (R+Rᵀ)/2 = cosθ I + (1 − cosθ) a aᵀ
        let sym = 0.5 * (r + r.transpose());
        let aat = (sym - Mat3::identity() * c) / (1.0 - c);
        let i = (0..3)
            .max_by(|&i, &j| aat[(i, i)].partial_cmp(&aat[(j, j)]).unwrap())
            .unwrap();
        let mut a: Vec3 = aat.column(i).into();
        a /= a.norm();
        let dot = a.dot(&s);
        if dot < 0.0 || (dot == 0.0 && first_nonzero_negative(&a)) {
            a = -a;
        }
        if sn <= 1e-14 && first_nonzero_negative(&a) {
            a = -a;
        }
        a
    };
    Ok(AxisAngle { axis, theta, projected })
}

fn first_nonzero_negative(a: &Vec3) -> bool {
    a.iter().find(|v| v.abs() > 1e-14).is_some_and(|v| *v < 0.0)
}

/// Rotation vector `θ a` of `r` (no validation beyond [`log_rotation`]).
pub fn log_vec(r: &Mat3) -> Vec3 {
    log_rotation(r).map(|aa| aa.rotation_vector()).unwrap_or_else(|_| Vec3::zeros())
}

fn check_rotation(r: &Mat3, what: &str) -> Result<()> {
    let (o, d) = orthogonality_defect(r);
    if o > 1e-10 || d > 1e-10 {
        return Err(Error::invalid(format!("{what} is not a rotation (defect {o:.2e})")));
    }
    Ok(())
}

/// Geodesic `U(t) = U0 · rodrigues(a, tθ)` from `U0` to `U1`, where
/// `(a, θ) = log(U0ᵀ U1)`. `|||dU/dt||| = √2 θ`.
pub fn geodesic_path(u0: &Mat3, u1: &Mat3, t: f64) -> Result<Mat3> {
    check_rotation(u0, "U0")?;
    check_rotation(u1, "U1")?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("geodesic_path: t = {t} outside [0, 1]")));
    }
    let aa = log_rotation(&(u0.transpose() * u1))?;
    Ok(u0 * exp_axial(&(aa.axis * (t * aa.theta))))
}

/// Constant speed `|||dU/dt|||` of [`geodesic_path`].
pub fn geodesic_speed(u0: &Mat3, u1: &Mat3) -> Result<f64> {
    let aa = log_rotation(&(u0.transpose() * u1))?;
    Ok(std::f64::consts::SQRT_2 * aa.theta)
}

/// SO(3)-valued field on `[0, L]` with piecewise-constant generator:
/// on `[σ_k, σ_{k+1}]`, `R(s) = values[k] · exp((s − σ_k) hat(generator[k]))`.
#[derive(Debug, Clone)]
pub struct RotationField {
    grid: Vec<f64>,
    values: Vec<Mat3>,
    generator: Vec<Vec3>,
    clamped: bool,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::invalid("grid needs at least two nodes"));
    }
    if !grid.iter().all(|x| x.is_finite()) {
        return Err(Error::invalid("grid has non-finite nodes"));
    }
    if grid[0] != 0.0 {
        return Err(Error::invalid("grid must start at 0"));
    }
    for (k, w) in grid.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(Error::invalid(format!(
                "zero-length or decreasing interval {k}: [{}, {}]",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Exact propagation `R_{k+1} = R_k exp(h_k hat(a_k))` starting from the identity.
pub fn integrate_generator(grid: &[f64], generator: &[Vec3]) -> Result<RotationField> {
    integrate_generator_from(Mat3::identity(), grid, generator)
}

/// As [`integrate_generator`] with a prescribed initial rotation.
pub fn integrate_generator_from(
    start: Mat3,
    grid: &[f64],
    generator: &[Vec3],
) -> Result<RotationField> {
    check_grid(grid)?;
    check_rotation(&start, "initial rotation")?;
    if generator.len() + 1 != grid.len() {
        return Err(Error::invalid(format!(
            "generator has {} intervals, grid has {}",
            generator.len(),
            grid.len() - 1
        )));
    }
    if !generator.iter().all(|a| a.iter().all(|v| v.is_finite())) {
        return Err(Error::invalid("generator has non-finite entries"));
    }
    let mut values = Vec::with_capacity(grid.len());
    values.push(start);
    for (k, a) in generator.iter().enumerate() {
        let h = grid[k + 1] - grid[k];
        let next = values[k] * exp_axial(&(a * h));
        values.push(next);
    }
    let clamped = start == Mat3::identity();
    Ok(RotationField { grid: grid.to_vec(), values, generator: generator.to_vec(), clamped })
}

/// Piecewise-geodesic field through `samples` at uniformly spaced nodes on `[0, length]`.
///
/// Node values are the samples themselves; the generator on each interval is
/// `log(R_kᵀ R_{k+1}) / h`.
pub fn interpolate_rotation_samples(samples: &[Mat3], length: f64) -> Result<RotationField> {
    if samples.is_empty() {
        return Err(Error::invalid("no rotation samples"));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::invalid("length must be positive"));
    }
    for (k, r) in samples.iter().enumerate() {
        check_rotation(r, &format!("sample {k}"))?;
    }
    let (grid, values) = if samples.len() == 1 {
        (vec![0.0, length], vec![samples[0], samples[0]])
    } else {
        (quad::uniform_grid(length, samples.len() - 1), samples.to_vec())
    };
    let generator = values
        .windows(2)
        .zip(grid.windows(2))
        .map(|(r, g)| Ok(log_rotation(&(r[0].transpose() * r[1]))?.rotation_vector() / (g[1] - g[0])))
        .collect::<Result<Vec<_>>>()?;
    let clamped = values[0] == Mat3::identity();
    Ok(RotationField { grid, values, generator, clamped })
}

impl RotationField {
    /// Constant identity field on `grid`.
    pub fn identity(grid: &[f64]) -> Result<Self> {
        integrate_generator(grid, &vec![Vec3::zeros(); grid.len() - 1])
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }
    pub fn values(&self) -> &[Mat3] {
        &self.values
    }
    pub fn generator(&self) -> &[Vec3] {
        &self.generator
    }
    pub fn clamped(&self) -> bool {
        self.clamped
    }
    pub fn length(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    /// Interval index containing `s`.
    pub fn interval(&self, s: f64) -> usize {
        quad::locate(&self.grid, s)
    }

    /// `R(s)`.
    pub fn eval(&self, s: f64) -> Mat3 {
        let k = self.interval(s);
        self.values[k] * exp_axial(&(self.generator[k] * (s - self.grid[k])))
    }

    /// Axial vector of `A = Rᵀ dR/ds` at `s` (right-continuous at nodes).
    pub fn generator_at(&self, s: f64) -> Vec3 {
        self.generator[self.interval(s)]
    }

    /// `∫ |||dR/ds|||² = Σ 2|a_k|² h_k`.
    pub fn h1_energy(&self) -> f64 {
        self.generator
            .iter()
            .zip(self.grid.windows(2))
            .map(|(a, g)| 2.0 * a.norm_squared() * (g[1] - g[0]))
            .sum()
    }

    /// `∫_a^b R(z) t(z) dz` by Gauss–Legendre on every smooth piece.
    pub fn integrate_applied<F: Fn(f64) -> Vec3>(&self, a: f64, b: f64, t: F) -> Vec3 {
        if b <= a {
            return Vec3::zeros();
        }
        let mut acc = Vec3::zeros();
        let mut lo = a;
        while lo < b {
            let k = self.interval(lo);
            let hi = if k + 1 < self.grid.len() - 1 { self.grid[k + 1].min(b) } else { b };
            let hi = if hi <= lo { b } else { hi };
            acc += quad::gauss5(lo, hi, |z| {
                self.values[k] * exp_axial(&(self.generator[k] * (z - self.grid[k]))) * t(z)
            });
            lo = hi;
        }
        acc
    }

    /// Largest orthogonality defect over the node values.
    pub fn max_defect(&self) -> f64 {
        self.values
            .iter()
            .map(|r| {
                let (o, d) = orthogonality_defect(r);
                o.max(d)
            })
            .fold(0.0, f64::max)
    }
}
