//! Asymptotic one-dimensional models of thin curved elastic rods.
//!
//! The crate is organised bottom-up:
//!
//! * [`so3`]: Rodrigues rotations, logarithm, geodesics and exact integration of
//!   piecewise-constant generators.
//! * [`geometry`]: middle lines, frames and the chart `Φ(s) = M(s₃) + s₁n₁ + s₂n₂`.
//! * [`section`]: cross-section meshes, second moments and the torsion function.
//! * [`decomposition`]: splitting a sampled 3D deformation into an elementary part
//!   and a warping.
//! * [`limit`]: the nonlinear inextensible, linear, extensional and coupled rod models.
//! * [`energy3d`]: St Venant–Kirchhoff energy, recovery sequences and the
//!   Γ-convergence sweep.
//!
//! Everything is nondimensional. Matrices are `nalgebra` 3×3 `f64`.

pub mod decomposition;
pub mod energy3d;
pub mod geometry;
pub mod limit;
pub mod par;
pub mod quad;
pub mod section;
pub mod so3;

mod banded;
mod error;
mod jet;
mod poly;

pub use banded::BandedCholesky;
pub use error::{Error, Result};
pub use poly::Poly;

pub type Mat3 = nalgebra::Matrix3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
