//! Three-dimensional St Venant–Kirchhoff energy, rescaling, recovery fields and
//! the numerical Γ-convergence sweep.
//!
//! Rescaled coordinates are `S = (s₁/δ, s₂/δ)`, `s₃`. Loads act as
//! `f_δ = δ^κ f(s₃) + δ^{κ−1} g(S, s₃)`. Energies are physical:
//! `J(v) − J(Id) = δ² ∫_Ω [W(∇v) − f_δ·(v − Id)] |det ∇Φ| dS ds₃`.

use std::sync::Arc;

use serde::Serialize;

use crate::decomposition::{dist_so3, DeformationField3D};
use crate::error::{Error, Result};
use crate::geometry::{grad_phi_at, jac_det_at, FrameField, FramePoint, RodChart};
use crate::limit::{
    frame_curvatures, warping_grad, warping_local, LinearSolution, LoadProfile, Material, NonlinearSolution, Rod1D,
    WarpingShape,
};
use crate::section::{bary_point, CrossSection, SectionConstants, P2};
use crate::so3::{hat, integrate_generator, RotationField};
use crate::{par, quad, Mat3, Vec3};

/// `½(FᵀF − I)`.
pub fn green_st_venant(f: &Mat3) -> Mat3 {
    0.5 * (f.transpose() * f - Mat3::identity())
}

/// `(λ/2)(tr E)² + μ|E|²`.
fn svk_strain(e: &Mat3, m: &Material) -> f64 {
    0.5 * m.lambda * e.trace().powi(2) + m.mu * e.norm_squared()
}

/// St Venant–Kirchhoff density; `f64::INFINITY` when `det F ≤ 0`.
pub fn svk_density(f: &Mat3, m: &Material) -> f64 {
    if f.determinant() <= 0.0 {
        return f64::INFINITY;
    }
    svk_strain(&green_st_venant(f), m)
}

/// `Π_δ`: rescaled point `(S₁, S₂, s₃)` to physical `(δS₁, δS₂, s₃)`.
pub fn rescale_point(p: [f64; 3], delta: f64) -> [f64; 3] {
    [delta * p[0], delta * p[1], p[2]]
}

/// Inverse of [`rescale_point`].
pub fn unscale_point(s: [f64; 3], delta: f64) -> [f64; 3] {
    [s[0] / delta, s[1] / delta, s[2]]
}

/// `(Π_δφ)(S) = φ(δS₁, δS₂, s₃)`.
pub fn rescale<T, F: Fn([f64; 3]) -> T>(phi: F, delta: f64) -> impl Fn([f64; 3]) -> T {
    move |p| phi(rescale_point(p, delta))
}

/// `Π_δ⁻¹`.
pub fn unscale<T, F: Fn([f64; 3]) -> T>(psi: F, delta: f64) -> impl Fn([f64; 3]) -> T {
    move |s| psi(unscale_point(s, delta))
}

/// Limit Green–St Venant tensor in frame components.
///
/// `dw` are the in-section derivatives `∂w̄/∂S_α`, `k = (k₁, k₂, τ)` the frame
/// curvatures and `dvs` the derivative of the stretching term `𝒱_S`. For κ = 2
/// all vectors are components in the rotated frame `(Rn₁, Rn₂, Rt)`; for κ > 2
/// in `(n₁, n₂, t)`.
pub fn limit_tensor(s: P2, dw: [Vec3; 2], k: [f64; 3], dvs: Vec3) -> Mat3 {
    let c3 = Vec3::new(-s[1] * k[2], s[0] * k[2], -s[0] * k[0] - s[1] * k[1]) + dvs;
    let m = Mat3::from_columns(&[dw[0], dw[1], c3]);
    0.5 * (m + m.transpose())
}

/// Symmetric tensor field in frame components at a list of points.
#[derive(Debug, Clone)]
pub struct GreenStVenantField {
    /// `(S₁, S₂, s₃)`.
    pub points: Vec<[f64; 3]>,
    pub local: Vec<Mat3>,
    /// `(n₁ | n₂ | t)` at each point.
    pub frames: Vec<Mat3>,
}

impl GreenStVenantField {
    /// `E = P Ê Pᵀ`, symmetrized so that symmetry is exact.
    pub fn world(&self, i: usize) -> Mat3 {
        let e = self.frames[i] * self.local[i] * self.frames[i].transpose();
        0.5 * (e + e.transpose())
    }
}

/// Result of [`total_energy`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyValue {
    pub value: f64,
    /// First quadrature point `(S₁, S₂, s₃)` with `det ∇v ≤ 0`.
    pub infinite_at: Option<[f64; 3]>,
}

fn load_density(profile: &LoadProfile, delta: f64, p: P2, s: f64) -> Vec3 {
    let k = profile.kappa();
    profile.f(s) * delta.powf(k) + profile.g(p, s) * delta.powf(k - 1.0)
}

/// `J(v) − J(Id)` of a sampled field, with `∇v` from grid finite differences.
///
/// One quadrature point per (triangle centroid, axial node) with trapezoid
/// weights along the axis.
pub fn total_energy(field: &DeformationField3D, profile: &LoadProfile, material: &Material) -> Result<EnergyValue> {
    let chart = field.chart();
    let delta = chart.delta();
    let sec = field.section();
    let grads = field.grad_x()?;
    let axial = field.axial();
    let wts = quad::trapezoid_weights(axial);
    let ntri = sec.triangles().len();
    let n = field.n_section();
    let rows = par::map_range(axial.len(), |j| {
        let s = axial[j];
        let fp = chart.frame().at(s);
        let mut acc = 0.0;
        for (t, (tri, g)) in sec.triangles().iter().zip(sec.tri_geom()).enumerate() {
            let p = tri.map(|i| sec.nodes()[i]);
            let c = bary_point(&p, &[1.0 / 3.0; 3]);
            let w = svk_density(&grads[j * ntri + t], material);
            if !w.is_finite() {
                return Err([c[0], c[1], s]);
            }
            let v = tri.iter().map(|&i| field.values()[j * n + i]).sum::<Vec3>() / 3.0;
            let x = fp.m + (fp.frame.n1 * c[0] + fp.frame.n2 * c[1]) * delta;
            let det = jac_det_at(&fp, delta * c[0], delta * c[1]).abs();
            acc += g.area * (w - load_density(profile, delta, c, s).dot(&(v - x))) * det;
        }
        Ok(acc * wts[j])
    });
    let mut value = 0.0;
    for r in rows {
        match r {
            Ok(x) => value += x,
            Err(p) => return Ok(EnergyValue { value: f64::INFINITY, infinite_at: Some(p) }),
        }
    }
    Ok(EnergyValue { value: value * delta * delta, infinite_at: None })
}

/// Recovery fields built from a limit solution:
/// `v = 𝒱_δ + R_δ(s₁n₁ + s₂n₂) + δ^κ R_δ P w ψ`, with `R_δ′ = δ^{κ−2} R_δ hat(g)`,
/// `𝒱_δ′ = R_δ t`, `P = (n₁|n₂|t)` and `w` the closed-form warping.
///
/// `g` is the piecewise-constant generator of the solution (`a` for κ = 2,
/// `ℛ′` for κ > 2). The warping uses curvatures of the continuous piecewise
/// linear interpolant of nodal averages of `g` and is switched on by a cubic
/// ramp `ψ` over `[0, L/4]`, so that `w̄(·, ·, 0) = 0` and `v` is `W^{1,∞}`.
/// The stretching term `𝒱_S` vanishes (it is optimal for these correctors).
#[derive(Debug, Clone)]
pub struct Recovery {
    frame: FrameField,
    section: Arc<CrossSection>,
    chi: Vec<f64>,
    grad_chi: Vec<P2>,
    grid: Vec<f64>,
    gen: Vec<Vec3>,
    smooth: Vec<Vec3>,
    shape: WarpingShape,
    kappa: f64,
    ramp: f64,
}

/// Per-δ data: rotation field and middle-line values at the grid nodes.
struct Scaled {
    delta: f64,
    sigma: f64,
    amp: f64,
    rot: RotationField,
    line: Vec<Vec3>,
}

/// Everything at one axial point that does not depend on `S`.
struct AxialPoint {
    fp: FramePoint,
    p: Mat3,
    dp: Mat3,
    r: Mat3,
    line: Vec3,
    g: Vec3,
    k: [f64; 3],
    kbar: [f64; 3],
    dkbar: [f64; 3],
    psi: f64,
    dpsi: f64,
}

/// 3D quantities at one quadrature point.
struct PointEval {
    /// `∇_x v = R(I + H)`.
    h: Mat3,
    v_minus_id: Vec3,
    det_phi: f64,
}

impl Recovery {
    pub fn new(
        rod: &Rod1D,
        section: Arc<CrossSection>,
        constants: &SectionConstants,
        generator: Vec<Vec3>,
        kappa: f64,
    ) -> Result<Self> {
        if !(kappa >= 2.0 && kappa.is_finite()) {
            return Err(Error::invalid(format!("kappa must be >= 2 (got {kappa})")));
        }
        if generator.len() != rod.intervals() {
            return Err(Error::invalid(format!(
                "generator has {} entries for {} intervals",
                generator.len(),
                rod.intervals()
            )));
        }
        if !generator.iter().all(|a| a.iter().all(|x| x.is_finite())) {
            return Err(Error::invalid("generator has non-finite entries"));
        }
        if constants.chi.len() != section.nodes().len() || constants.grad_chi.len() != section.triangles().len() {
            return Err(Error::invalid("section constants do not belong to this section mesh"));
        }
        let m = generator.len();
        let smooth = (0..=m)
            .map(|k| match k {
                0 => generator[0],
                k if k == m => generator[m - 1],
                k => 0.5 * (generator[k - 1] + generator[k]),
            })
            .collect();
        Ok(Recovery {
            frame: rod.frame().clone(),
            section,
            chi: constants.chi.clone(),
            grad_chi: constants.grad_chi.clone(),
            grid: rod.grid().to_vec(),
            gen: generator,
            smooth,
            shape: WarpingShape::new(rod.stiffness()),
            kappa,
            ramp: 0.25 * rod.length(),
        })
    }

    /// κ = 2 recovery from a converged nonlinear solution.
    pub fn nonlinear(
        rod: &Rod1D,
        section: Arc<CrossSection>,
        constants: &SectionConstants,
        sol: &NonlinearSolution,
    ) -> Result<Self> {
        Recovery::new(rod, section, constants, sol.a.clone(), 2.0)
    }

    /// κ > 2 recovery from a linear solution (generator `ℛ′`).
    pub fn linear(
        rod: &Rod1D,
        section: Arc<CrossSection>,
        constants: &SectionConstants,
        sol: &LinearSolution,
        kappa: f64,
    ) -> Result<Self> {
        if kappa <= 2.0 {
            return Err(Error::invalid("linear recovery needs kappa > 2"));
        }
        Recovery::new(rod, section, constants, sol.r_prime(rod.grid()), kappa)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn section(&self) -> &Arc<CrossSection> {
        &self.section
    }
    pub fn frame(&self) -> &FrameField {
        &self.frame
    }
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    fn scaled(&self, delta: f64) -> Result<Scaled> {
        let sigma = delta.powf(self.kappa - 2.0);
        let gen: Vec<Vec3> = self.gen.iter().map(|a| a * sigma).collect();
        let rot = integrate_generator(&self.grid, &gen)?;
        let mut line = vec![self.frame.at(0.0).m];
        for k in 0..self.grid.len() - 1 {
            let next = line[k] + rot.integrate_applied(self.grid[k], self.grid[k + 1], |z| self.frame.frame(z).t);
            line.push(next);
        }
        Ok(Scaled { delta, sigma, amp: delta.powf(self.kappa), rot, line })
    }

    fn axial_point(&self, sc: &Scaled, s: f64) -> AxialPoint {
        let fp = self.frame.at(s);
        let k = quad::locate(&self.grid, s);
        let h = self.grid[k + 1] - self.grid[k];
        let x = (s - self.grid[k]) / h;
        let ab = self.smooth[k] * (1.0 - x) + self.smooth[k + 1] * x;
        let dab = (self.smooth[k + 1] - self.smooth[k]) / h;
        let f = &fp.frame;
        let kbar = frame_curvatures(&ab, f);
        let dkbar = [
            dab.dot(&f.n2) + ab.dot(&fp.dn2),
            -dab.dot(&f.n1) - ab.dot(&fp.dn1),
            dab.dot(&f.t) + ab.dot(&fp.dt),
        ];
        let g = self.gen[k];
        let (psi, dpsi) = if s >= self.ramp {
            (1.0, 0.0)
        } else {
            let y = s / self.ramp;
            (y * y * (3.0 - 2.0 * y), 6.0 * y * (1.0 - y) / self.ramp)
        };
        let line = sc.line[k] + sc.rot.integrate_applied(self.grid[k], s, |z| self.frame.frame(z).t);
        AxialPoint {
            fp,
            p: f.matrix(),
            dp: Mat3::from_columns(&[fp.dn1, fp.dn2, fp.dt]),
            r: sc.rot.eval(s),
            line,
            g,
            k: frame_curvatures(&g, f),
            kbar,
            dkbar,
            psi,
            dpsi,
        }
    }

    fn eval_point(&self, sc: &Scaled, ax: &AxialPoint, p: P2, chi: f64, gchi: P2) -> PointEval {
        let (d, sh) = (sc.delta, &self.shape);
        let w = warping_local(sh, p, chi, ax.kbar);
        let dw = warping_grad(sh, p, gchi, ax.kbar);
        let w3 = warping_local(sh, p, chi, ax.dkbar);
        let f = &ax.fp.frame;
        let sn = (f.n1 * p[0] + f.n2 * p[1]) * d;
        let gh = hat(&ax.g);
        let inplane = sc.amp / d * ax.psi;
        let pw = ax.p * w;
        let c3 = gh * sn * sc.sigma
            + (gh * pw * (sc.sigma * ax.psi) + ax.dp * w * ax.psi + ax.p * w3 * ax.psi + pw * ax.dpsi) * sc.amp;
        let dmat = Mat3::from_columns(&[ax.p * dw[0] * inplane, ax.p * dw[1] * inplane, c3]);
        let gp = grad_phi_at(&ax.fp, d * p[0], d * p[1]);
        let h = dmat * gp.try_inverse().expect("grad Phi is invertible for delta < delta0");
        let x = ax.fp.m + sn;
        let v = ax.line + ax.r * (sn + pw * (sc.amp * ax.psi));
        PointEval { h, v_minus_id: v - x, det_phi: jac_det_at(&ax.fp, d * p[0], d * p[1]) }
    }

    /// Limit tensor `Ê` (frame components) of this recovery at `(S, s₃)`.
    fn e_hat(&self, ax: &AxialPoint, p: P2, gchi: P2) -> Mat3 {
        let dw = warping_grad(&self.shape, p, gchi, ax.kbar);
        limit_tensor(p, [dw[0] * ax.psi, dw[1] * ax.psi], ax.k, Vec3::zeros())
    }

    /// Samples the recovery field at scale `chart.delta()`.
    pub fn field(&self, chart: Arc<RodChart>, axial: Vec<f64>) -> Result<DeformationField3D> {
        self.check_chart(&chart)?;
        let sc = self.scaled(chart.delta())?;
        let nodes = self.section.nodes().to_vec();
        let rows = par::map(&axial, |&s| {
            let ax = self.axial_point(&sc, s);
            let f = &ax.fp.frame;
            nodes
                .iter()
                .zip(&self.chi)
                .map(|(p, &chi)| {
                    let sn = (f.n1 * p[0] + f.n2 * p[1]) * sc.delta;
                    let w = warping_local(&self.shape, *p, chi, ax.kbar);
                    ax.line + ax.r * (sn + ax.p * w * (sc.amp * ax.psi))
                })
                .collect::<Vec<_>>()
        });
        DeformationField3D::new(chart, axial, rows.into_iter().flatten().collect())
    }

    /// Middle line `𝒱_δ` at `s`.
    pub fn middle_line(&self, delta: f64, s: f64) -> Result<Vec3> {
        let sc = self.scaled(delta)?;
        Ok(self.axial_point(&sc, s).line)
    }

    /// Rotation field `R_δ`.
    pub fn rotation(&self, delta: f64) -> Result<RotationField> {
        Ok(self.scaled(delta)?.rot)
    }

    /// Limit displacement `𝒰(s) = ∫₀ˢ ℛ × t` with `ℛ` the P1 primitive of the generator.
    pub fn limit_displacement(&self, s: f64) -> Vec3 {
        let mut r = Vec3::zeros();
        let mut u = Vec3::zeros();
        for k in 0..self.grid.len() - 1 {
            let (a, b) = (self.grid[k], self.grid[k + 1]);
            let g = self.gen[k];
            let hi = b.min(s);
            if hi > a {
                u += quad::gauss5(a, hi, |z| (r + g * (z - a)).cross(&self.frame.frame(z).t));
            }
            if s <= b {
                break;
            }
            r += g * (b - a);
        }
        u
    }

    fn check_chart(&self, chart: &RodChart) -> Result<()> {
        if !Arc::ptr_eq(chart.section(), &self.section) && chart.section().nodes() != self.section.nodes() {
            return Err(Error::invalid("chart section differs from the recovery section"));
        }
        Ok(())
    }

    /// Limit tensor field at the Γ-sweep quadrature points.
    pub fn limit_field(&self) -> Result<GreenStVenantField> {
        let sc = self.scaled(1.0)?;
        let sec = &self.section;
        let mut out = GreenStVenantField { points: vec![], local: vec![], frames: vec![] };
        for w in self.grid.windows(2) {
            for (s, _) in quad::gauss2(w[0], w[1]) {
                let ax = self.axial_point(&sc, s);
                for (t, tri) in sec.triangles().iter().enumerate() {
                    let pts = tri.map(|i| sec.nodes()[i]);
                    for (b, _) in quad::tri7() {
                        let p = bary_point(&pts, &b);
                        out.points.push([p[0], p[1], s]);
                        out.local.push(self.e_hat(&ax, p, self.grad_chi[t]));
                        out.frames.push(ax.p);
                    }
                }
            }
        }
        Ok(out)
    }

    fn axial_quadrature(&self) -> Vec<(f64, f64)> {
        self.grid.windows(2).flat_map(|w| quad::gauss2(w[0], w[1])).collect()
    }

    /// Limit energy `𝒥` of the recovery data (same quadrature as the sweep).
    pub fn limit_energy(&self, profile: &LoadProfile, material: &Material) -> Result<f64> {
        let sc = self.scaled(1.0)?;
        let sec = &self.section;
        let nonlinear = self.kappa == 2.0;
        let parts = par::map(&self.axial_quadrature(), |&(s, ws)| {
            let ax = self.axial_point(&sc, s);
            let f = &ax.fp.frame;
            let (x, rvec) = if nonlinear {
                (ax.line - ax.fp.m, Vec3::zeros())
            } else {
                let k = quad::locate(&self.grid, s);
                let r0: Vec3 = (0..k).map(|i| self.gen[i] * (self.grid[i + 1] - self.grid[i])).sum();
                (self.limit_displacement(s), r0 + self.gen[k] * (s - self.grid[k]))
            };
            let d = [ax.fp.dn1.dot(&f.t), ax.fp.dn2.dot(&f.t)];
            let fs = profile.f(s);
            let mut acc = 0.0;
            for (t, (tri, geo)) in sec.triangles().iter().zip(sec.tri_geom()).enumerate() {
                let pts = tri.map(|i| sec.nodes()[i]);
                for (b, wq) in quad::tri7() {
                    let p = bary_point(&pts, &b);
                    let e = self.e_hat(&ax, p, self.grad_chi[t]);
                    let sn = f.n1 * p[0] + f.n2 * p[1];
                    let y = if nonlinear { (ax.r - Mat3::identity()) * sn } else { rvec.cross(&sn) };
                    let load = fs.dot(&x) + profile.g(p, s).dot(&(x * (p[0] * d[0] + p[1] * d[1]) + y));
                    acc += geo.area * wq * (svk_strain(&e, material) - load);
                }
            }
            acc * ws
        });
        Ok(parts.into_iter().sum())
    }

    /// One δ of the sweep.
    fn sweep_point(&self, profile: &LoadProfile, material: &Material, delta: f64) -> Result<SweepSums> {
        let sc = self.scaled(delta)?;
        let sec = &self.section;
        let ek = delta.powf(self.kappa - 1.0);
        let parts = par::map(&self.axial_quadrature(), |&(s, ws)| {
            let ax = self.axial_point(&sc, s);
            let mut acc = SweepSums::default();
            for (t, (tri, geo)) in sec.triangles().iter().zip(sec.tri_geom()).enumerate() {
                let pts = tri.map(|i| sec.nodes()[i]);
                for (b, wq) in quad::tri7() {
                    let p = bary_point(&pts, &b);
                    let chi = b[0] * self.chi[tri[0]] + b[1] * self.chi[tri[1]] + b[2] * self.chi[tri[2]];
                    let pe = self.eval_point(&sc, &ax, p, chi, self.grad_chi[t]);
                    let fi = Mat3::identity() + pe.h;
                    if fi.determinant() <= 0.0 {
                        acc.infinite_at.get_or_insert([p[0], p[1], s]);
                        continue;
                    }
                    let w = geo.area * wq * ws;
                    let det = pe.det_phi.abs();
                    let e = 0.5 * (pe.h + pe.h.transpose() + pe.h.transpose() * pe.h);
                    let load = load_density(profile, delta, p, s).dot(&pe.v_minus_id);
                    acc.energy += w * (svk_strain(&e, material) - load) * det;
                    let ehat = ax.p * self.e_hat(&ax, p, self.grad_chi[t]) * ax.p.transpose();
                    acc.tensor_gap += w * (e / ek - ehat).norm_squared();
                    acc.e_hat += w * ehat.norm_squared();
                    acc.dist += w * dist_so3(&fi).powi(2) * det;
                }
            }
            acc
        });
        let mut out = SweepSums::default();
        for p in parts {
            out.energy += p.energy;
            out.tensor_gap += p.tensor_gap;
            out.e_hat += p.e_hat;
            out.dist += p.dist;
            if out.infinite_at.is_none() {
                out.infinite_at = p.infinite_at;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct SweepSums {
    /// `∫_Ω [W − f_δ·(v − Id)] |det ∇Φ|`.
    energy: f64,
    tensor_gap: f64,
    e_hat: f64,
    /// `∫_Ω dist(∇v, SO(3))² |det ∇Φ|`.
    dist: f64,
    infinite_at: Option<[f64; 3]>,
}

/// One surviving δ of the sweep.
#[derive(Debug, Clone, Serialize)]
pub struct GammaEntry {
    pub delta: f64,
    /// `(J(v_δ) − J(Id))/δ^{2κ}`.
    pub quotient: f64,
    /// `|quotient − 𝒥|`.
    pub gap: f64,
    /// `‖(1/(2δ^{κ−1}))((∇v)ᵀ∇v − I) − E‖_{L²(Ω)}`.
    pub tensor_gap: f64,
    /// `‖Ê‖_{L²(Ω)}`.
    pub e_hat_norm: f64,
    /// `δ^{−κ}‖dist(∇v, SO(3))‖_{L²(Ω_δ)}`.
    pub dist_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaReport {
    pub kappa: f64,
    pub deltas: Vec<f64>,
    pub limit_energy: f64,
    pub entries: Vec<GammaEntry>,
    /// Least-squares slope of `log gap` against `log δ`; `None` with fewer than
    /// two positive gaps.
    pub slope: Option<f64>,
    pub tensor_slope: Option<f64>,
    pub monotone: bool,
    pub tensor_monotone: bool,
    pub dropped: Vec<f64>,
    pub warnings: Vec<String>,
}

fn loglog_slope(pts: &[(f64, f64)]) -> Option<f64> {
    let p: Vec<(f64, f64)> = pts.iter().filter(|(_, y)| *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if p.len() < 2 {
        return None;
    }
    let n = p.len() as f64;
    let mx = p.iter().map(|q| q.0).sum::<f64>() / n;
    let my = p.iter().map(|q| q.1).sum::<f64>() / n;
    let sxy: f64 = p.iter().map(|q| (q.0 - mx) * (q.1 - my)).sum();
    let sxx: f64 = p.iter().map(|q| (q.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Non-increasing as δ decreases (small relative slack for exact zeros).
fn is_monotone(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-300)
}

/// Evaluates the recovery sequence at every δ and compares with the limit energy.
///
/// δ values for which the chart is invalid or the 3D energy is infinite are
/// dropped with a warning.
pub fn gamma_check(rec: &Recovery, profile: &LoadProfile, material: &Material, deltas: &[f64]) -> Result<GammaReport> {
    if deltas.is_empty() {
        return Err(Error::invalid("empty delta list"));
    }
    if !deltas.iter().all(|d| *d > 0.0 && d.is_finite()) || deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("deltas must be positive and strictly decreasing"));
    }
    if profile.kappa() != rec.kappa {
        return Err(Error::invalid(format!(
            "load scaling kappa = {} does not match the recovery kappa = {}",
            profile.kappa(),
            rec.kappa
        )));
    }
    let limit = rec.limit_energy(profile, material)?;
    let kappa = rec.kappa;
    let results = par::map(deltas, |&d| -> Result<std::result::Result<GammaEntry, String>> {
        if let Err(e) = RodChart::new(rec.frame.clone(), rec.section.clone(), d) {
            return Ok(Err(format!("delta {d} dropped: {e}")));
        }
        let sums = rec.sweep_point(profile, material, d)?;
        if let Some(p) = sums.infinite_at {
            return Ok(Err(format!("delta {d} dropped: det grad v <= 0 at (S1, S2, s3) = {p:?}")));
        }
        let quotient = sums.energy * d.powf(2.0 - 2.0 * kappa);
        Ok(Ok(GammaEntry {
            delta: d,
            quotient,
            gap: (quotient - limit).abs(),
            tensor_gap: sums.tensor_gap.sqrt(),
            e_hat_norm: sums.e_hat.sqrt(),
            dist_bound: (sums.dist * d * d).sqrt() / d.powf(kappa),
        }))
    });
    let mut entries = vec![];
    let mut dropped = vec![];
    let mut warnings = vec![];
    for (r, &d) in results.into_iter().zip(deltas) {
        match r? {
            Ok(e) => entries.push(e),
            Err(w) => {
                dropped.push(d);
                warnings.push(w);
            }
        }
    }
    let gaps: Vec<f64> = entries.iter().map(|e| e.gap).collect();
    let tg: Vec<f64> = entries.iter().map(|e| e.tensor_gap).collect();
    Ok(GammaReport {
        kappa,
        deltas: deltas.to_vec(),
        limit_energy: limit,
        slope: loglog_slope(&entries.iter().map(|e| (e.delta, e.gap)).collect::<Vec<_>>()),
        tensor_slope: loglog_slope(&entries.iter().map(|e| (e.delta, e.tensor_gap)).collect::<Vec<_>>()),
        monotone: is_monotone(&gaps),
        tensor_monotone: is_monotone(&tg),
        entries,
        dropped,
        warnings,
    })
}
