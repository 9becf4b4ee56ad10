//! Linear bending-torsion, extensional and coupled models.
//!
//! `ℛ` is continuous piecewise linear on the rod grid with `ℛ(0) = 0`; the
//! displacement `𝒰 = ∫ ℛ ∧ t` is eliminated through
//! `∫ F·𝒰 + Σ_α ∫ G_α·(ℛ ∧ n_α) = ∫ ⟨𝐆, hat(ℛ)⟩`, so the discrete problem is
//! `min ½ xᵀKx − bᵀx` with `b_m = w_m vee2(𝐆_m)`. This is the exact
//! linearization at `a = 0` of the discrete nonlinear functional.


use crate::banded::BandMatrix;
use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::quad;
use crate::{Mat3, Vec3};

use super::correctors::frame_curvatures;
use super::loads::{LoadMatrix, LoadProfile};
use super::{vee2, Rod1D};

#[derive(Debug, Clone)]
pub struct LinearSolution {
    /// `ℛ` at the nodes (`ℛ_0 = 0`).
    pub r: Vec<Vec3>,
    /// `𝒰` at the nodes.
    pub u: Vec<Vec3>,
    /// `m_κ`.
    pub energy: f64,
    /// `‖Kx − b‖₂` of the discrete system.
    pub gradient_residual: f64,
}

#[derive(Debug, Clone)]
pub struct ExtensionalSolution {
    /// `U_E` at the nodes.
    pub ue: Vec<Vec3>,
    /// `dU_E/ds₃·t = f̃/E` at the nodes.
    pub strain: Vec<f64>,
    pub energy: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct CoupledSolution {
    pub r: Vec<Vec3>,
    pub u: Vec<Vec3>,
    pub ue: Vec<Vec3>,
    /// `dU_E/ds₃·t = f̃/E − ½|𝒰′|²` at the nodes.
    pub strain: Vec<f64>,
    /// `m₃ = ℱ_LG(𝒰₀, ℛ₀, U_E,₀)` by direct quadrature.
    pub energy: f64,
    pub gradient_residual: f64,
    pub warnings: Vec<String>,
}

impl LinearSolution {
    /// `ℛ′` on each interval.
    pub fn r_prime(&self, grid: &[f64]) -> Vec<Vec3> {
        r_prime(&self.r, grid)
    }

    /// `ℛ` at `s` (linear interpolation).
    pub fn r_at(&self, grid: &[f64], s: f64) -> Vec3 {
        interp(&self.r, grid, s)
    }

    /// Frame curvatures `(ℛ′·n₂, −ℛ′·n₁, ℛ′·t)` at `s`.
    pub fn curvatures_at(&self, rod: &Rod1D, s: f64) -> [f64; 3] {
        let k = quad::locate(rod.grid(), s);
        frame_curvatures(&((self.r[k + 1] - self.r[k]) / rod.h(k)), &rod.frame().frame(s))
    }
}

fn r_prime(r: &[Vec3], grid: &[f64]) -> Vec<Vec3> {
    r.windows(2).zip(grid.windows(2)).map(|(r, g)| (r[1] - r[0]) / (g[1] - g[0])).collect()
}

fn interp(r: &[Vec3], grid: &[f64], s: f64) -> Vec3 {
    let k = quad::locate(grid, s);
    let h = grid[k + 1] - grid[k];
    (r[k] * (grid[k + 1] - s) + r[k + 1] * (s - grid[k])) / h
}

fn add_block(k: &mut BandMatrix, i: Option<usize>, j: Option<usize>, b: &Mat3) {
    let (Some(i), Some(j)) = (i, j) else { return };
    for p in 0..3 {
        for q in 0..3 {
            if 3 * i + p >= 3 * j + q {
                k.add(3 * i + p, 3 * j + q, b[(p, q)]);
            }
        }
    }
}

/// Bending-torsion stiffness; node `m ≥ 1` owns dofs `3(m−1)..3m`.
fn assemble_stiffness(rod: &Rod1D) -> BandMatrix {
    let m = rod.intervals();
    let mut k = BandMatrix::zeros(3 * m, 5);
    for e in 0..m {
        let blk = rod.q_block(e) * (2.0 / rod.h(e).powi(2));
        let (a, b) = (e.checked_sub(1), Some(e));
        add_block(&mut k, a, a, &blk);
        add_block(&mut k, b, b, &blk);
        add_block(&mut k, b, a, &(-blk));
    }
    k
}

fn load_vector(rod: &Rod1D, loads: &LoadMatrix) -> Result<Vec<f64>> {
    if loads.grid() != rod.grid() {
        return Err(Error::invalid("load matrix and rod use different axial grids"));
    }
    let w = quad::trapezoid_weights(rod.grid());
    Ok(loads.nodes().iter().zip(&w).skip(1).flat_map(|(g, w)| {
            let v = vee2(g) * *w;
            [v.x, v.y, v.z]
        }).collect())
}

fn unpack(x: &[f64]) -> Vec<Vec3> {
    std::iter::once(Vec3::zeros()).chain(x.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2]))).collect()
}

fn residual(k: &BandMatrix, x: &[f64], b: &[f64]) -> f64 {
    k.mul_vec(x).iter().zip(b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// `𝒰(s_k) = ∫₀^{s_k} ℛ ∧ t`, 5-point Gauss per interval.
fn displacement(rod: &Rod1D, r: &[Vec3]) -> Vec<Vec3> {
    let grid = rod.grid();
    let frame = rod.frame();
    let mut u = vec![Vec3::zeros()];
    for k in 0..grid.len() - 1 {
        let inc = quad::gauss5(grid[k], grid[k + 1], |s| interp(r, grid, s).cross(&frame.frame(s).t));
        let next = u[k] + inc;
        u.push(next);
    }
    u
}

fn solve_system(k: &BandMatrix, b: &[f64], what: &str) -> Result<Vec<f64>> {
    let chol = k.factor().map_err(|e| Error::Singular(format!("{what}: {e}")))?;
    Ok(chol.solve(b))
}

/// Minimizes the linear bending-torsion functional.
pub fn solve_linear(rod: &Rod1D, loads: &LoadMatrix) -> Result<LinearSolution> {
    let k = assemble_stiffness(rod);
    let b = load_vector(rod, loads)?;
    let x = solve_system(&k, &b, "bending-torsion system")?;
    let energy = -0.5 * b.iter().zip(&x).map(|(b, x)| b * x).sum::<f64>();
    let r = unpack(&x);
    let u = displacement(rod, &r);
    Ok(LinearSolution { r, u, energy, gradient_residual: residual(&k, &x, &b) })
}

fn f_tilde_of(profile: &LoadProfile) -> Result<&Poly> {
    profile.f_tilde().ok_or_else(|| Error::invalid("f_tilde is required for the extensional and coupled models"))
}

fn check_f_tilde(profile: &LoadProfile, rod: &Rod1D, warnings: &mut Vec<String>) {
    if let Some(m) = profile.f_tilde_mismatch(rod.frame(), rod.grid()) {
        if m > 1e-8 {
            warnings.push(format!("f_tilde is not the tail integral of f (max nodal mismatch {m:.3e})"));
        }
    }
}

/// Pointwise minimizer of the extensional functional, `dU_E/ds₃·t = f̃/E`.
pub fn solve_extensional(rod: &Rod1D, profile: &LoadProfile) -> Result<ExtensionalSolution> {
    let ft = f_tilde_of(profile)?;
    let st = rod.stiffness();
    let grid = rod.grid();
    let frame = rod.frame();
    let mut warnings = vec![];
    check_f_tilde(profile, rod, &mut warnings);
    if (profile.kappa() - 3.0).abs() < 1e-12 {
        if let Some(&s) = grid.iter().find(|&&s| ft.eval(s) < 0.0) {
            warnings.push(format!("sign condition f_tilde >= 0 fails at s3 = {s}"));
        }
    }
    let mut ue = vec![Vec3::zeros()];
    for k in 0..grid.len() - 1 {
        let inc = quad::gauss5(grid[k], grid[k + 1], |s| frame.frame(s).t * (ft.eval(s) / st.young));
        let next = ue[k] + inc;
        ue.push(next);
    }
    let energy = -st.area / (2.0 * st.young) * ft.mul(ft).integrate(0.0, rod.length());
    Ok(ExtensionalSolution {
        ue,
        strain: grid.iter().map(|&s| ft.eval(s) / st.young).collect(),
        energy,
        warnings,
    })
}

/// Coupled model: bending-torsion with the extra term `(|ω|/2)∫ f̃|𝒰′|²`,
/// then `dU_E/ds₃·t = f̃/E − ½|𝒰′|²`.
pub fn solve_coupled(rod: &Rod1D, loads: &LoadMatrix, special: &LoadProfile) -> Result<CoupledSolution> {
    let ft = f_tilde_of(special)?;
    let st = rod.stiffness();
    let grid = rod.grid();
    let frame = rod.frame();
    let warnings = vec![];
    let mut k = assemble_stiffness(rod);
    for e in 0..rod.intervals() {
        let (s0, s1) = (grid[e], grid[e + 1]);
        let h = s1 - s0;
        let block = |i: usize, j: usize| {
            quad::gauss5(s0, s1, |s| {
                let n = [(s1 - s) / h, (s - s0) / h];
                let t = frame.frame(s).t;
                (Mat3::identity() - t * t.transpose()) * (st.area * ft.eval(s) * n[i] * n[j])
            })
        };
        let (a, b) = (e.checked_sub(1), Some(e));
        add_block(&mut k, a, a, &block(0, 0));
        add_block(&mut k, b, b, &block(1, 1));
        add_block(&mut k, b, a, &block(1, 0));
    }
    let b = load_vector(rod, loads)?;
    let x = solve_system(&k, &b, "coupled system (coupling term may be indefinite)")?;
    let r = unpack(&x);
    let u = displacement(rod, &r);
    let strain_at = |s: f64| ft.eval(s) / st.young - 0.5 * interp(&r, grid, s).cross(&frame.frame(s).t).norm_squared();
    let mut ue = vec![Vec3::zeros()];
    let mut energy = 0.0;
    for e in 0..rod.intervals() {
        let inc = quad::gauss5(grid[e], grid[e + 1], |s| frame.frame(s).t * strain_at(s));
        let next = ue[e] + inc;
        ue.push(next);
        let rp = (r[e + 1] - r[e]) / rod.h(e);
        energy += rp.dot(&(rod.q_block(e) * rp));
        energy += quad::gauss5(grid[e], grid[e + 1], |s| {
            let du = interp(&r, grid, s).cross(&frame.frame(s).t).norm_squared();
            let ext = strain_at(s);
            0.5 * st.young * st.area * (ext + 0.5 * du).powi(2) - st.area * ft.eval(s) * ext
        });
    }
    energy -= b.iter().zip(&x).map(|(b, x)| b * x).sum::<f64>();
    Ok(CoupledSolution {
        strain: grid.iter().map(|&s| strain_at(s)).collect(),
        r,
        u,
        ue,
        energy,
        gradient_residual: residual(&k, &x, &b),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_frame, build_middle_line, CurveSpec, FrameField, FrameSpec};
    use crate::limit::loads::{assemble_load_matrix, LoadSpec, SectionLoadTerm};
    use crate::limit::nonlinear::{FixedPointOptions, NonlinearProblem};
    use crate::limit::{axial_l2, Material, Stiffness};
    use crate::section::{build_section, CrossSection, SectionSpec};

    fn straight(l: f64) -> FrameField {
        let line = build_middle_line(&CurveSpec::Straight { start: [0.0; 3], direction: [0.0, 0.0, 1.0], length: l }).unwrap();
        build_frame(&line, &FrameSpec::default()).unwrap()
    }

    fn arc() -> FrameField {
        let line = build_middle_line(&CurveSpec::CircularArc { radius: 2.0, length: 1.5, center: [0.0; 3] }).unwrap();
        build_frame(&line, &FrameSpec::default()).unwrap()
    }

    fn disc() -> CrossSection {
        build_section(&SectionSpec::Disc { radius: 1.0 }, 2).unwrap()
    }

    fn stiff(area: f64) -> Stiffness {
        Stiffness::from_values(area, 0.03, 0.02, 0.04, &Material::lame(1.0, 1.0).unwrap()).unwrap()
    }

    fn p(c: &[f64]) -> Poly {
        Poly(c.to_vec())
    }

    fn general_loads() -> LoadSpec {
        LoadSpec {
            f: [p(&[0.02, 0.01]), p(&[-0.015]), p(&[0.01])],
            g: vec![SectionLoadTerm { s1: 1, s2: 0, c: [p(&[0.0]), p(&[0.05]), p(&[0.02, 0.01])] }],
            ..LoadSpec::default()
        }
    }

    fn setup(fr: &FrameField, m: usize, spec: &LoadSpec) -> (Rod1D, LoadMatrix, LoadProfile) {
        let sec = disc();
        let rod = Rod1D::new(fr, m, stiff(sec.area())).unwrap();
        let lp = LoadProfile::new(spec, &sec).unwrap();
        let lm = assemble_load_matrix(&lp, fr, rod.grid());
        (rod, lm, lp)
    }

    #[test]
    fn zero_loads_zero_solution() {
        let (rod, lm, _) = setup(&arc(), 10, &LoadSpec::default());
        let s = solve_linear(&rod, &lm).unwrap();
        assert!(s.r.iter().chain(&s.u).all(|v| *v == Vec3::zeros()));
        assert_eq!(s.energy, 0.0);
    }

    #[test]
    fn discrete_gradient_vanishes_and_displacement_follows_rotation() {
        let (rod, lm, _) = setup(&arc(), 40, &general_loads());
        let s = solve_linear(&rod, &lm).unwrap();
        assert!(s.gradient_residual < 1e-10);
        assert!(s.energy < 0.0);
        // nodal increments of 𝒰 against a refined quadrature of ℛ ∧ t
        let grid = rod.grid();
        for k in 0..grid.len() - 1 {
            let sub = quad::uniform_grid(grid[k + 1] - grid[k], 10);
            let fine: Vec3 = sub
                .windows(2)
                .map(|w| quad::gauss5(grid[k] + w[0], grid[k] + w[1], |z| s.r_at(grid, z).cross(&rod.frame().frame(z).t)))
                .sum();
            assert!((s.u[k + 1] - s.u[k] - fine).norm() < 1e-13);
        }
    }

    #[test]
    fn straight_beam_fine_grid_self_oracle() {
        let spec = LoadSpec { f: [p(&[0.3]), p(&[]), p(&[])], ..LoadSpec::default() };
        let (rod, lm, _) = setup(&straight(2.0), 200, &spec);
        let (rod_f, lm_f, _) = setup(&straight(2.0), 2000, &spec);
        let c = solve_linear(&rod, &lm).unwrap();
        let f = solve_linear(&rod_f, &lm_f).unwrap();
        assert!((c.energy - f.energy).abs() <= 1e-4 * f.energy.abs());
        let (uc, uf) = (c.u.last().unwrap(), f.u.last().unwrap());
        assert!((uc - uf).norm() <= 1e-4 * uf.norm());
        // cantilever tip deflection q L⁴ / (8 E I); deflection along n₁ = e₁
        // bends with ℛ′·n₂, which pairs with I₁
        let q = 0.3 * disc().area();
        let tip = q * 16.0 / (8.0 * rod.stiffness().ei1());
        assert!((uf.x - tip).abs() < 1e-4 * tip, "{} vs {tip}", uf.x);
    }

    #[test]
    fn energy_converges_at_second_order() {
        let e: Vec<f64> = [10, 20, 40, 80]
            .iter()
            .map(|&m| {
                let (rod, lm, _) = setup(&arc(), m, &general_loads());
                solve_linear(&rod, &lm).unwrap().energy
            })
            .collect();
        assert!(e.windows(2).all(|w| w[1] <= w[0]), "{e:?}");
        let order = ((e[1] - e[2]) / (e[2] - e[3])).log2();
        assert!(order >= 1.9, "{order}");
    }

    #[test]
    fn nonlinear_generator_linearizes_to_r_prime() {
        let fr = arc();
        let (rod, lm, lp) = setup(&fr, 20, &general_loads());
        let lin = solve_linear(&rod, &lm).unwrap();
        let rp = lin.r_prime(rod.grid());
        let gap = |eta: f64| {
            let lm = assemble_load_matrix(&lp.scaled(eta), &fr, rod.grid());
            let nl = NonlinearProblem::new(rod.clone(), lm).unwrap();
            let s = nl.solve(&FixedPointOptions::default(), None).unwrap();
            let d: Vec<Vec3> = s.a.iter().zip(&rp).map(|(a, r)| a / eta - r).collect();
            axial_l2(rod.grid(), &d) / axial_l2(rod.grid(), &rp)
        };
        let (g1, g2) = (gap(0.2), gap(0.1));
        assert!(g1 / g2 >= 1.8, "{g1} {g2}");
    }

    #[test]
    fn extensional_closed_forms() {
        let sec = disc();
        let st = stiff(sec.area());
        let rod = Rod1D::new(&straight(1.0), 16, st).unwrap();
        let lp = |ft: Poly| LoadProfile::new(&LoadSpec { f_tilde: Some(ft), ..LoadSpec::default() }, &sec).unwrap();
        let z = solve_extensional(&rod, &lp(p(&[]))).unwrap();
        assert_eq!(z.energy, 0.0);
        assert!(z.ue.iter().all(|v| *v == Vec3::zeros()));
        let c = 0.7;
        let s = solve_extensional(&rod, &lp(p(&[c]))).unwrap();
        let expect = -st.area * c * c / (2.0 * st.young);
        assert!((s.energy - expect).abs() < 1e-14);
        assert!((s.ue.last().unwrap().z - c / st.young).abs() < 1e-14);
        let s = solve_extensional(&rod, &lp(p(&[0.0, 1.0]))).unwrap();
        assert!((s.energy + st.area / (6.0 * st.young)).abs() < 1e-14);
        assert!(solve_extensional(&rod, &LoadProfile::new(&LoadSpec::default(), &sec).unwrap()).is_err());
    }

    #[test]
    fn extensional_sign_and_compatibility_warnings() {
        let sec = disc();
        let rod = Rod1D::new(&straight(1.0), 8, stiff(sec.area())).unwrap();
        let spec = LoadSpec { kappa: 3.0, f_tilde: Some(p(&[-0.1, 0.2])), ..LoadSpec::default() };
        let s = solve_extensional(&rod, &LoadProfile::new(&spec, &sec).unwrap()).unwrap();
        assert_eq!(s.warnings.len(), 2, "{:?}", s.warnings);
        // f = −f̃′ t with f̃(L) = 0 is compatible
        let spec = LoadSpec { kappa: 3.0, f: [p(&[]), p(&[]), p(&[1.0])], f_tilde: Some(p(&[1.0, -1.0])), ..LoadSpec::default() };
        let s = solve_extensional(&rod, &LoadProfile::new(&spec, &sec).unwrap()).unwrap();
        assert!(s.warnings.is_empty(), "{:?}", s.warnings);
    }

    #[test]
    fn coupled_reduces_to_its_parts() {
        let fr = arc();
        let (rod, lm, _) = setup(&fr, 24, &general_loads());
        let sec = disc();
        let zero = LoadProfile::new(&LoadSpec { f_tilde: Some(p(&[])), ..LoadSpec::default() }, &sec).unwrap();
        let lin = solve_linear(&rod, &lm).unwrap();
        let c = solve_coupled(&rod, &lm, &zero).unwrap();
        for (a, b) in c.r.iter().zip(&lin.r) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!((c.energy - lin.energy).abs() < 1e-12);

        let special = LoadProfile::new(&LoadSpec { f_tilde: Some(p(&[0.4, 0.1])), ..LoadSpec::default() }, &sec).unwrap();
        let (_, lm0, _) = setup(&fr, 24, &LoadSpec::default());
        let c = solve_coupled(&rod, &lm0, &special).unwrap();
        let e = solve_extensional(&rod, &special).unwrap();
        assert!(c.r.iter().all(|v| v.norm() == 0.0));
        for (a, b) in c.ue.iter().zip(&e.ue) {
            assert!((a - b).norm() < 1e-14);
        }
        assert!((c.energy - e.energy).abs() < 1e-14);
    }

    #[test]
    fn coupled_depends_continuously_on_f_tilde() {
        let fr = arc();
        let (rod, lm, _) = setup(&fr, 24, &general_loads());
        let sec = disc();
        let lin = solve_linear(&rod, &lm).unwrap();
        let gap = |eps: f64| {
            let sp = LoadProfile::new(&LoadSpec { f_tilde: Some(p(&[eps])), ..LoadSpec::default() }, &sec).unwrap();
            let c = solve_coupled(&rod, &lm, &sp).unwrap();
            c.r.iter().zip(&lin.r).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
        };
        let (g1, g2) = (gap(2e-4), gap(1e-4));
        assert!(g1 > 0.0 && (g1 / g2 - 2.0).abs() < 0.1, "{g1} {g2}");
    }

    #[test]
    fn coupled_stationarity_and_indefinite_failure() {
        let fr = arc();
        let (rod, lm, _) = setup(&fr, 24, &general_loads());
        let sec = disc();
        let sp = LoadProfile::new(&LoadSpec { f_tilde: Some(p(&[0.3])), ..LoadSpec::default() }, &sec).unwrap();
        let c = solve_coupled(&rod, &lm, &sp).unwrap();
        assert!(c.gradient_residual < 1e-10);
        let neg = LoadProfile::new(&LoadSpec { f_tilde: Some(p(&[-50.0])), ..LoadSpec::default() }, &sec).unwrap();
        assert!(matches!(solve_coupled(&rod, &lm, &neg), Err(Error::Singular(_))));
    }
}
