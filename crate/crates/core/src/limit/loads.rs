//! Load profiles and the load matrix `𝐆`.
//!
//! With `F = |ω| f + Σ_α G_α (n_α′·t)` and `G_α(s₃) = ∫_ω g S_α`,
//! `𝐆(s₃) = (∫_{s₃}^L F) ⊗ t + Σ_α G_α ⊗ n_α`, so that for every admissible
//! `(𝒱, R)` with `𝒱′ = Rt`, `𝒱(0) = M(0)`:
//! `∫⟨𝐆, R − I⟩ = ∫F·(𝒱 − M) + Σ_α ∫G_α·(R − I)n_α`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::FrameField;
use crate::poly::Poly;
use crate::quad;
use crate::section::CrossSection;
use crate::{Mat3, Vec3};

use super::Stiffness;

/// One term `S₁^p S₂^q c(s₃)` of the section load `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionLoadTerm {
    #[serde(default)]
    pub s1: u32,
    #[serde(default)]
    pub s2: u32,
    /// Components of `c` as polynomials in `s₃`.
    pub c: [Poly; 3],
}

/// Loads as given in the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Force density, one polynomial in `s₃` per component.
    #[serde(default)]
    pub f: [Poly; 3],
    #[serde(default)]
    pub g: Vec<SectionLoadTerm>,
    /// Scalar `f̃` of special (extensional) loads.
    #[serde(default)]
    pub f_tilde: Option<Poly>,
}

fn default_kappa() -> f64 {
    2.0
}

impl Default for LoadSpec {
    fn default() -> Self {
        LoadSpec { kappa: 2.0, f: Default::default(), g: vec![], f_tilde: None }
    }
}

pub(crate) fn eval3(p: &[Poly; 3], s: f64) -> Vec3 {
    Vec3::new(p[0].eval(s), p[1].eval(s), p[2].eval(s))
}

/// Validated loads together with their section moments.
#[derive(Debug, Clone)]
pub struct LoadProfile {
    spec: LoadSpec,
    area: f64,
    g_alpha: [[Poly; 3]; 2],
}

fn add_scaled(acc: &mut Poly, p: &Poly, c: f64) {
    if acc.0.len() < p.0.len() {
        acc.0.resize(p.0.len(), 0.0);
    }
    for (a, b) in acc.0.iter_mut().zip(&p.0) {
        *a += c * b;
    }
}

impl LoadProfile {
    pub fn new(spec: &LoadSpec, section: &CrossSection) -> Result<Self> {
        if !(spec.kappa >= 2.0 && spec.kappa.is_finite()) {
            return Err(Error::invalid(format!("kappa must be >= 2 (got {})", spec.kappa)));
        }
        let finite = |p: &Poly| p.0.iter().all(|c| c.is_finite());
        if !spec.f.iter().all(finite)
            || !spec.g.iter().all(|t| t.c.iter().all(finite))
            || !spec.f_tilde.iter().all(finite)
        {
            return Err(Error::invalid("load coefficients must be finite"));
        }
        let rule = quad::tri7();
        let moment = |p: u32, q: u32| section.integrate(&rule, |s| s[0].powi(p as i32) * s[1].powi(q as i32));
        let area = section.area();
        let mut mean: [Poly; 3] = Default::default();
        let mut g_alpha: [[Poly; 3]; 2] = Default::default();
        for term in &spec.g {
            let m0 = moment(term.s1, term.s2);
            let m1 = moment(term.s1 + 1, term.s2);
            let m2 = moment(term.s1, term.s2 + 1);
            for i in 0..3 {
                add_scaled(&mut mean[i], &term.c[i], m0);
                add_scaled(&mut g_alpha[0][i], &term.c[i], m1);
                add_scaled(&mut g_alpha[1][i], &term.c[i], m2);
            }
        }
        let scale: f64 = spec
            .g
            .iter()
            .flat_map(|t| t.c.iter().flat_map(|p| p.0.iter()))
            .fold(0.0, |m, c| m.max(c.abs()));
        let r = section.max_radius().max(1.0);
        let worst = mean.iter().flat_map(|p| p.0.iter()).fold(0.0f64, |m, c| m.max(c.abs()));
        if worst > 1e-10 * area * scale * r.powi(4) {
            return Err(Error::invalid(format!(
                "section load g must have zero section mean (residual coefficient {worst:.3e})"
            )));
        }
        Ok(LoadProfile { spec: spec.clone(), area, g_alpha })
    }

    /// Profile with only the force density `f` (and `f̃`), for sections known by area.
    pub fn axial_only(spec: &LoadSpec, area: f64) -> Result<Self> {
        if !spec.g.is_empty() {
            return Err(Error::invalid("section loads need the section geometry"));
        }
        if !(spec.kappa >= 2.0) {
            return Err(Error::invalid("kappa must be >= 2"));
        }
        Ok(LoadProfile { spec: spec.clone(), area, g_alpha: Default::default() })
    }

    pub fn spec(&self) -> &LoadSpec {
        &self.spec
    }
    pub fn kappa(&self) -> f64 {
        self.spec.kappa
    }
    pub fn area(&self) -> f64 {
        self.area
    }
    pub fn f(&self, s: f64) -> Vec3 {
        eval3(&self.spec.f, s)
    }
    /// `g(S, s₃)`.
    pub fn g(&self, p: [f64; 2], s: f64) -> Vec3 {
        self.spec
            .g
            .iter()
            .map(|t| eval3(&t.c, s) * (p[0].powi(t.s1 as i32) * p[1].powi(t.s2 as i32)))
            .sum()
    }
    /// `G_α(s₃) = ∫_ω g S_α`, `alpha ∈ {0, 1}`.
    pub fn g_alpha(&self, alpha: usize, s: f64) -> Vec3 {
        eval3(&self.g_alpha[alpha], s)
    }
    pub fn f_tilde(&self) -> Option<&Poly> {
        self.spec.f_tilde.as_ref()
    }
    pub fn has_section_load(&self) -> bool {
        self.spec.g.iter().any(|t| t.c.iter().any(|p| !p.is_zero()))
    }
    pub fn is_zero(&self) -> bool {
        self.spec.f.iter().all(Poly::is_zero) && !self.has_section_load()
    }

    /// Loads multiplied by `eta` (all of `f`, `g`, `f̃`).
    pub fn scaled(&self, eta: f64) -> LoadProfile {
        let mut spec = self.spec.clone();
        spec.f = spec.f.map(|p| p.scale(eta));
        for t in &mut spec.g {
            t.c = t.c.clone().map(|p| p.scale(eta));
        }
        spec.f_tilde = spec.f_tilde.map(|p| p.scale(eta));
        LoadProfile { spec, area: self.area, g_alpha: self.g_alpha.clone().map(|g| g.map(|p| p.scale(eta))) }
    }

    /// Largest nodal mismatch of `∫_{s₃}^L f = f̃ t`, when `f̃` is given.
    pub fn f_tilde_mismatch(&self, frame: &FrameField, grid: &[f64]) -> Option<f64> {
        let ft = self.spec.f_tilde.as_ref()?;
        let m = grid.len() - 1;
        let mut tail = Vec3::zeros();
        let mut worst: f64 = (ft.eval(grid[m]) * frame.frame(grid[m]).t).norm();
        for k in (0..m).rev() {
            tail += quad::gauss5(grid[k], grid[k + 1], |s| self.f(s));
            worst = worst.max((tail - frame.frame(grid[k]).t * ft.eval(grid[k])).norm());
        }
        Some(worst)
    }
}

/// `𝐆` on an axial grid, evaluable anywhere on `[0, L]`.
#[derive(Debug, Clone)]
pub struct LoadMatrix {
    grid: Vec<f64>,
    frame: FrameField,
    profile: LoadProfile,
    tail_nodes: Vec<Vec3>,
}

/// Builds `𝐆`; the tail integral `∫_{s₃}^L F` uses 5-point Gauss per interval.
pub fn assemble_load_matrix(profile: &LoadProfile, frame: &FrameField, grid: &[f64]) -> LoadMatrix {
    let mut lm = LoadMatrix {
        grid: grid.to_vec(),
        frame: frame.clone(),
        profile: profile.clone(),
        tail_nodes: vec![Vec3::zeros(); grid.len()],
    };
    for k in (0..grid.len() - 1).rev() {
        lm.tail_nodes[k] = lm.tail_nodes[k + 1] + quad::gauss5(grid[k], grid[k + 1], |s| lm.force(s));
    }
    lm
}

impl LoadMatrix {
    pub fn profile(&self) -> &LoadProfile {
        &self.profile
    }
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// `F(s₃) = |ω| f + Σ_α G_α (n_α′·t)`.
    pub fn force(&self, s: f64) -> Vec3 {
        let fp = self.frame.at(s);
        let t = fp.frame.t;
        self.profile.f(s) * self.profile.area
            + self.profile.g_alpha(0, s) * fp.dn1.dot(&t)
            + self.profile.g_alpha(1, s) * fp.dn2.dot(&t)
    }

    /// `∫_s^L F`.
    pub fn tail(&self, s: f64) -> Vec3 {
        let k = quad::locate(&self.grid, s);
        self.tail_nodes[k + 1] + quad::gauss5(s, self.grid[k + 1], |z| self.force(z))
    }

    pub fn at(&self, s: f64) -> Mat3 {
        let f = self.frame.frame(s);
        let tail = if self.grid.contains(&s) {
            self.tail_nodes[self.grid.iter().position(|&x| x == s).unwrap()]
        } else {
            self.tail(s)
        };
        tail * f.t.transpose()
            + self.profile.g_alpha(0, s) * f.n1.transpose()
            + self.profile.g_alpha(1, s) * f.n2.transpose()
    }

    /// `𝐆` at the grid nodes.
    pub fn nodes(&self) -> Vec<Mat3> {
        self.grid.iter().map(|&s| self.at(s)).collect()
    }

    /// `‖𝐆‖_{L²(0,L)}` (Frobenius), 5-point Gauss per interval.
    pub fn l2_norm(&self) -> f64 {
        self.grid
            .windows(2)
            .map(|w| quad::gauss5(w[0], w[1], |s| self.at(s).norm_squared()))
            .sum::<f64>()
            .sqrt()
    }

    /// Right-hand side of the defining identity of `𝐆`.
    pub fn load_work<V, R>(&self, v_minus_m: V, r: R) -> f64
    where
        V: Fn(f64) -> Vec3,
        R: Fn(f64) -> Mat3,
    {
        self.grid
            .windows(2)
            .map(|w| {
                quad::gauss5(w[0], w[1], |s| {
                    let f = self.frame.frame(s);
                    let ri = r(s) - Mat3::identity();
                    self.force(s).dot(&v_minus_m(s))
                        + self.profile.g_alpha(0, s).dot(&(ri * f.n1))
                        + self.profile.g_alpha(1, s).dot(&(ri * f.n2))
                })
            })
            .sum()
    }

    /// Uniqueness gate `‖𝐆‖ < L^{-3/2} min(EI₁, EI₂, μK/2)`.
    pub fn gate(&self, stiff: &Stiffness) -> GateReport {
        let l = self.grid[self.grid.len() - 1];
        GateReport::evaluate(self.l2_norm(), l.powf(-1.5) * stiff.coercivity())
    }
}

/// Outcome of the load-size gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateReport {
    pub g_norm: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl GateReport {
    pub fn evaluate(g_norm: f64, threshold: f64) -> Self {
        GateReport { g_norm, threshold, pass: g_norm < threshold }
    }
}
