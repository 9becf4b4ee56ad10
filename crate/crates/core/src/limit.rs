//! One-dimensional limit models of the rod.
//!
//! The axial unknown of the nonlinear model is the axial vector `a` of
//! `A = Rᵀ dR/ds₃`, piecewise constant on the axial grid; rotations are
//! propagated exactly, `R_{k+1} = R_k exp(h_k a_k)`. With the frame components
//! `k₁ = a·n₂`, `k₂ = −a·n₁`, `τ = a·t` the elastic density is
//! `(EI₁/2)k₁² + (EI₂/2)k₂² + (μK/4)τ² = aᵀQa`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{FrameField, FramePoint};
use crate::quad;
use crate::section::SectionConstants;
use crate::{Mat3, Vec3};

pub mod correctors;
pub mod linear;
pub mod loads;
pub mod nonlinear;

pub use correctors::{e_hat_reduced, frame_curvatures, warping_grad, warping_local, WarpingShape};
pub use linear::{solve_coupled, solve_extensional, solve_linear, CoupledSolution, ExtensionalSolution, LinearSolution};
pub use loads::{assemble_load_matrix, GateReport, LoadMatrix, LoadProfile, LoadSpec, SectionLoadTerm};
pub use nonlinear::{energy_f_nl, FixedPointOptions, NonlinearProblem, NonlinearSolution};

/// Isotropic St Venant–Kirchhoff material in Lamé form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Material {
    pub lambda: f64,
    pub mu: f64,
}

impl Material {
    pub fn lame(lambda: f64, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) || !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("need mu > 0 and lambda >= 0 (got lambda={lambda}, mu={mu})")));
        }
        Ok(Material { lambda, mu })
    }

    pub fn from_young_poisson(e: f64, nu: f64) -> Result<Self> {
        if !(e > 0.0 && e.is_finite()) || !(0.0..0.5).contains(&nu) {
            return Err(Error::invalid(format!("need E > 0 and 0 <= nu < 1/2 (got E={e}, nu={nu})")));
        }
        Material::lame(e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)), e / (2.0 * (1.0 + nu)))
    }

    pub fn young(&self) -> f64 {
        self.mu * (3.0 * self.lambda + 2.0 * self.mu) / (self.lambda + self.mu)
    }

    pub fn poisson(&self) -> f64 {
        self.lambda / (2.0 * (self.lambda + self.mu))
    }
}

/// Section and material constants entering the 1D functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stiffness {
    pub area: f64,
    pub i1: f64,
    pub i2: f64,
    pub k: f64,
    pub young: f64,
    pub mu: f64,
    pub nu: f64,
}

impl Stiffness {
    pub fn new(c: &SectionConstants, m: &Material) -> Result<Self> {
        Stiffness::from_values(c.area, c.i1, c.i2, c.k, m)
    }

    pub fn from_values(area: f64, i1: f64, i2: f64, k: f64, m: &Material) -> Result<Self> {
        for (v, n) in [(area, "area"), (i1, "I1"), (i2, "I2"), (k, "K")] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Singular(format!("degenerate section constant {n} = {v}")));
            }
        }
        Ok(Stiffness { area, i1, i2, k, young: m.young(), mu: m.mu, nu: m.poisson() })
    }

    pub fn ei1(&self) -> f64 {
        self.young * self.i1
    }
    pub fn ei2(&self) -> f64 {
        self.young * self.i2
    }
    pub fn mu_k(&self) -> f64 {
        self.mu * self.k
    }

    /// Pointwise elastic matrix `Q` with `aᵀQa` the reduced density.
    pub fn q(&self, fp: &FramePoint) -> Mat3 {
        let f = &fp.frame;
        f.n2 * f.n2.transpose() * (0.5 * self.ei1())
            + f.n1 * f.n1.transpose() * (0.5 * self.ei2())
            + f.t * f.t.transpose() * (0.25 * self.mu_k())
    }

    /// `min(EI₁, EI₂, μK/2)`.
    pub fn coercivity(&self) -> f64 {
        self.ei1().min(self.ei2()).min(0.5 * self.mu_k())
    }
}

/// Axial discretization shared by all 1D solvers.
#[derive(Debug, Clone)]
pub struct Rod1D {
    frame: FrameField,
    grid: Vec<f64>,
    nodes: Vec<FramePoint>,
    gauss: Vec<[(f64, f64, FramePoint); 2]>,
    q: Vec<Mat3>,
    stiff: Stiffness,
}

impl Rod1D {
    pub fn new(frame: &FrameField, intervals: usize, stiff: Stiffness) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::invalid("axial grid needs at least one interval"));
        }
        let grid = quad::uniform_grid(frame.line().length(), intervals);
        Rod1D::with_grid(frame, grid, stiff)
    }

    pub fn with_grid(frame: &FrameField, grid: Vec<f64>, stiff: Stiffness) -> Result<Self> {
        let l = frame.line().length();
        if grid.len() < 2 || grid[0] != 0.0 || (grid[grid.len() - 1] - l).abs() > 1e-12 * l {
            return Err(Error::invalid("axial grid must span [0, L]"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("axial grid must be strictly increasing"));
        }
        let nodes = grid.iter().map(|&s| frame.at(s)).collect();
        let gauss: Vec<[(f64, f64, FramePoint); 2]> = grid
            .windows(2)
            .map(|w| quad::gauss2(w[0], w[1]).map(|(s, wt)| (s, wt, frame.at(s))))
            .collect();
        let q = gauss.iter().map(|g| g.iter().map(|(_, w, fp)| stiff.q(fp) * *w).sum()).collect();
        Ok(Rod1D { frame: frame.clone(), grid, nodes, gauss, q, stiff })
    }

    pub fn frame(&self) -> &FrameField {
        &self.frame
    }
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }
    pub fn intervals(&self) -> usize {
        self.grid.len() - 1
    }
    pub fn length(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }
    pub fn h(&self, k: usize) -> f64 {
        self.grid[k + 1] - self.grid[k]
    }
    pub fn node_frames(&self) -> &[FramePoint] {
        &self.nodes
    }
    pub fn gauss_points(&self) -> &[[(f64, f64, FramePoint); 2]] {
        &self.gauss
    }
    /// `∫ Q` over interval `k` (2-point Gauss).
    pub fn q_block(&self, k: usize) -> &Mat3 {
        &self.q[k]
    }
    pub fn stiffness(&self) -> &Stiffness {
        &self.stiff
    }
}

/// `L²` norm of a piecewise-constant antisymmetric field given by axial
/// vectors: `|||hat(a)|||² = 2|a|²`.
pub fn axial_l2(grid: &[f64], a: &[Vec3]) -> f64 {
    a.iter().zip(grid.windows(2)).map(|(v, w)| 2.0 * v.norm_squared() * (w[1] - w[0])).sum::<f64>().sqrt()
}

/// `2 vee(M) = (M₃₂ − M₂₃, M₁₃ − M₃₁, M₂₁ − M₁₂)`, so `⟨M, hat(ω)⟩ = ω·vee2(M)`.
pub fn vee2(m: &Mat3) -> Vec3 {
    Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
}
