//! Closed-form correctors: the warping that minimizes the cross-section energy
//! for given curvatures, and the resulting limit strain `Ê`.
//!
//! Everything is expressed through the frame curvatures `(k₁, k₂, τ)`, which
//! are `(R′t·Rn₁, R′t·Rn₂, R′n₁·Rn₂)` in the nonlinear model and
//! `(ℛ′·n₂, −ℛ′·n₁, ℛ′·t)` in the linear ones. The warping is returned in
//! frame components `(w·n₁, w·n₂, w·t)` (times `R` in the nonlinear case).

use crate::geometry::Frame;
use crate::{Mat3, Vec3};

use super::Stiffness;

/// Frame curvatures of an axial vector `a` (with `R′ = R hat(a)`, or `a = ℛ′`).
pub fn frame_curvatures(a: &Vec3, f: &Frame) -> [f64; 3] {
    [a.dot(&f.n2), -a.dot(&f.n1), a.dot(&f.t)]
}

/// Constants of the warping profile: Poisson ratio and the mean correction
/// `c = (I₁ − I₂)/(2|ω|)` that makes the in-plane warping zero-mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpingShape {
    pub nu: f64,
    pub c: f64,
}

impl WarpingShape {
    pub fn new(stiff: &Stiffness) -> Self {
        WarpingShape { nu: stiff.nu, c: (stiff.i1 - stiff.i2) / (2.0 * stiff.area) }
    }
}

/// Warping `w(S)` in frame components for curvatures `k`, with `χ(S) = chi`.
pub fn warping_local(shape: &WarpingShape, s: [f64; 2], chi: f64, k: [f64; 3]) -> Vec3 {
    let (s1, s2) = (s[0], s[1]);
    let q = 0.5 * (s1 * s1 - s2 * s2) - shape.c;
    Vec3::new(
        shape.nu * (q * k[0] + s1 * s2 * k[1]),
        shape.nu * (s1 * s2 * k[0] - q * k[1]),
        chi * k[2],
    )
}

/// `(∂w/∂S₁, ∂w/∂S₂)` in frame components.
pub fn warping_grad(shape: &WarpingShape, s: [f64; 2], grad_chi: [f64; 2], k: [f64; 3]) -> [Vec3; 2] {
    let (s1, s2, nu) = (s[0], s[1], shape.nu);
    [
        Vec3::new(nu * (s1 * k[0] + s2 * k[1]), nu * (s2 * k[0] - s1 * k[1]), grad_chi[0] * k[2]),
        Vec3::new(nu * (-s2 * k[0] + s1 * k[1]), nu * (s1 * k[0] + s2 * k[1]), grad_chi[1] * k[2]),
    ]
}

/// Limit strain at the minimum over the correctors, frame components.
///
/// The (2,3) slot uses `∂χ/∂S₂ + S₁`, the partner of `∂χ/∂S₁ − S₂` in `K`.
pub fn e_hat_reduced(s: [f64; 2], grad_chi: [f64; 2], k: [f64; 3], nu: f64) -> Mat3 {
    let e33 = -s[0] * k[0] - s[1] * k[1];
    let e13 = 0.5 * (grad_chi[0] - s[1]) * k[2];
    let e23 = 0.5 * (grad_chi[1] + s[0]) * k[2];
    let d = -nu * e33;
    Mat3::new(d, 0.0, e13, 0.0, d, e23, e13, e23, e33)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit::Material;
    use crate::quad;
    use crate::section::{analyze, SectionSpec};

    fn frame() -> Frame {
        Frame { t: Vec3::z(), n1: Vec3::x(), n2: Vec3::y() }
    }

    #[test]
    fn zero_curvature_gives_zero() {
        let shape = WarpingShape { nu: 0.3, c: 0.1 };
        let k = frame_curvatures(&Vec3::zeros(), &frame());
        assert_eq!(warping_local(&shape, [0.3, -0.2], 0.7, k), Vec3::zeros());
        assert_eq!(e_hat_reduced([0.3, -0.2], [0.1, 0.2], k, 0.3), Mat3::zeros());
    }

    #[test]
    fn pure_torsion_shear_slots() {
        let c = 0.8;
        let k = frame_curvatures(&Vec3::new(0.0, 0.0, c), &frame());
        let (s, g) = ([0.3, -0.4], [0.05, -0.02]);
        let e = e_hat_reduced(s, g, k, 0.25);
        assert!((e[(0, 2)] - 0.5 * (g[0] - s[1]) * c).abs() < 1e-15);
        assert!((e[(1, 2)] - 0.5 * (g[1] + s[0]) * c).abs() < 1e-15);
        assert_eq!(e[(2, 2)], 0.0);
        assert_eq!(e, e.transpose());
    }

    #[test]
    fn trace_is_scaled_axial_strain() {
        let nu = 0.27;
        let k = [0.4, -1.1, 0.3];
        for s in [[0.1, 0.2], [-0.5, 0.3], [0.0, -0.9]] {
            let e = e_hat_reduced(s, [0.0, 0.0], k, nu);
            assert!((e.trace() - (1.0 - 2.0 * nu) * e[(2, 2)]).abs() < 1e-15);
        }
    }

    #[test]
    fn bending_warping_matches_formula() {
        let shape = WarpingShape { nu: 0.25, c: 0.0 };
        let (k1, k2) = (0.7, -0.3);
        for s in [[0.2, 0.5], [-0.6, 0.1]] {
            let w = warping_local(&shape, s, 0.0, [k1, k2, 0.0]);
            let (a, b) = (s[0], s[1]);
            assert!((w[0] - 0.25 * ((a * a - b * b) / 2.0 * k1 + a * b * k2)).abs() < 1e-15);
            assert!((w[1] - 0.25 * (a * b * k1 + (b * b - a * a) / 2.0 * k2)).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let shape = WarpingShape { nu: 0.3, c: 0.05 };
        let k = [0.4, -0.7, 0.9];
        let s = [0.21, -0.37];
        // χ linear so its gradient is exact
        let chi = |p: [f64; 2]| 0.3 * p[0] - 0.1 * p[1];
        let g = warping_grad(&shape, s, [0.3, -0.1], k);
        let h = 1e-6;
        for a in 0..2 {
            let mut p = s;
            let mut m = s;
            p[a] += h;
            m[a] -= h;
            let fd = (warping_local(&shape, p, chi(p), k) - warping_local(&shape, m, chi(m), k)) / (2.0 * h);
            assert!((fd - g[a]).norm() < 1e-9);
        }
    }

    /// Section integral of `(λ/2)(tr Ê)² + μ|Ê|²` reproduces
    /// `(E/2)(I₁k₁² + I₂k₂²) + (μK/2)τ²`.
    #[test]
    fn reduced_density_integrates_to_stiffness_form() {
        let (sec, c) = analyze(&SectionSpec::Rectangle { width: 1.0, height: 0.6, center: [0.0, 0.0] }, 3).unwrap();
        let m = Material::lame(1.3, 0.8).unwrap();
        let st = Stiffness::new(&c, &m).unwrap();
        let k = [0.4, -0.9, 0.6];
        let mut acc = 0.0;
        for (ti, (tri, g)) in sec.triangles().iter().zip(sec.tri_geom()).enumerate() {
            let p = tri.map(|i| sec.nodes()[i]);
            for (b, w) in quad::tri7() {
                let s = crate::section::bary_point(&p, &b);
                let e = e_hat_reduced(s, c.grad_chi[ti], k, st.nu);
                acc += g.area * w * (0.5 * m.lambda * e.trace().powi(2) + m.mu * e.norm_squared());
            }
        }
        let expect = 0.5 * st.young * (st.i1 * k[0] * k[0] + st.i2 * k[1] * k[1]) + 0.5 * st.mu_k() * k[2] * k[2];
        assert!((acc - expect).abs() < 1e-12 * expect, "{acc} vs {expect}");
    }

    #[test]
    fn warping_has_zero_section_mean() {
        let (sec, c) = analyze(&SectionSpec::Rectangle { width: 1.0, height: 0.5, center: [0.0, 0.0] }, 3).unwrap();
        let st = Stiffness::new(&c, &Material::lame(1.0, 1.0).unwrap()).unwrap();
        let shape = WarpingShape::new(&st);
        let k = [0.3, 0.8, -0.5];
        let mut mean = Vec3::zeros();
        for (ti, (tri, g)) in sec.triangles().iter().zip(sec.tri_geom()).enumerate() {
            let p = tri.map(|i| sec.nodes()[i]);
            for (b, w) in quad::tri7() {
                let s = crate::section::bary_point(&p, &b);
                mean += warping_local(&shape, s, c.chi_at(&sec, ti, &b), k) * (g.area * w);
            }
        }
        assert!(mean.norm() < 1e-12, "{mean}");
    }
}
