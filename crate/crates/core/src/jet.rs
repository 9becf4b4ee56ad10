//! Second-order forward derivatives of the matrix exponential along a line.
//!
//! A [`MatJet`] carries `(M, M′, M″)` for a matrix-valued function of one real
//! parameter ε at ε = 0. This is all the Hessian of the reduced energy needs:
//! products of exponentials differentiated twice along one direction.

use crate::so3::{exp_coeffs, hat};
use crate::{Mat3, Vec3};

#[derive(Debug, Clone, Copy)]
pub(crate) struct MatJet {
    pub v: Mat3,
    pub d: Mat3,
    pub dd: Mat3,
}

impl MatJet {
    pub fn identity() -> Self {
        MatJet { v: Mat3::identity(), d: Mat3::zeros(), dd: Mat3::zeros() }
    }

    pub fn mul(&self, o: &MatJet) -> MatJet {
        MatJet {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
            dd: self.dd * o.v + 2.0 * self.d * o.d + self.v * o.dd,
        }
    }

    /// Jet of `ε ↦ exp(hat(φ + εψ))`.
    pub fn exp(phi: &Vec3, psi: &Vec3) -> MatJet {
        let x = [phi.norm_squared(), 2.0 * phi.dot(psi), 2.0 * psi.norm_squared()];
        let (a, b) = exp_coeffs(x[0]);
        // chain rule: (f∘x)' = f1 x', (f∘x)'' = f2 x'^2 + f1 x''
        let ja = [a[0], a[1] * x[1], a[2] * x[1] * x[1] + a[1] * x[2]];
        let jb = [b[0], b[1] * x[1], b[2] * x[1] * x[1] + b[1] * x[2]];
        let p = hat(phi);
        let q = hat(psi);
        let k2 = [p * p, p * q + q * p, 2.0 * q * q];
        MatJet {
            v: Mat3::identity() + p * ja[0] + k2[0] * jb[0],
            d: p * ja[1] + q * ja[0] + k2[0] * jb[1] + k2[1] * jb[0],
            dd: p * ja[2] + 2.0 * q * ja[1] + k2[0] * jb[2] + 2.0 * k2[1] * jb[1] + k2[2] * jb[0],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::exp_axial;

    #[test]
    fn exp_jet_matches_finite_differences() {
        let cases = [
            (Vec3::new(0.3, -0.2, 0.9), Vec3::new(1.0, 0.4, -0.3)),
            (Vec3::zeros(), Vec3::new(0.2, -0.7, 0.1)),
            (Vec3::new(2.0, 1.0, -1.5), Vec3::new(-0.3, 0.2, 0.5)),
        ];
        for (phi, psi) in cases {
            let j = MatJet::exp(&phi, &psi);
            let e = 1e-4;
            let p = exp_axial(&(phi + psi * e));
            let m = exp_axial(&(phi - psi * e));
            let c = exp_axial(&phi);
            assert!((j.v - c).norm() < 1e-15);
            assert!(((p - m) / (2.0 * e) - j.d).norm() < 1e-7);
            assert!(((p - 2.0 * c + m) / (e * e) - j.dd).norm() < 1e-6);
        }
    }
}
