//! Nonlinear inextensible model in the generator variable.
//!
//! Discrete reduced functional, with `R₀ = I`, `R_{k+1} = R_k exp(h_k a_k)`:
//!
//! `𝒢(a) = Σ_k a_kᵀ Q_k a_k − Σ_m w_m ⟨𝐆_m, R_m − I⟩`
//!
//! (`Q_k` = 2-point Gauss integral of `Q` on interval `k`, `w` trapezoid
//! weights). Gradient and Hessian below are exact for this discrete functional.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::MatJet;
use crate::quad;
use crate::so3::{exp_axial, hat, integrate_generator, right_jacobian, RotationField};
use crate::{Mat3, Vec3};

use super::correctors::frame_curvatures;
use super::loads::{GateReport, LoadMatrix};
use super::{axial_l2, vee2, Rod1D};

/// Damped fixed-point iteration controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions { damping: 0.5, tol: 1e-10, max_iter: 500 }
    }
}

/// Discrete reduced problem: rod discretization plus nodal load matrices.
#[derive(Debug, Clone)]
pub struct NonlinearProblem {
    rod: Rod1D,
    loads: LoadMatrix,
    g: Vec<Mat3>,
    w: Vec<f64>,
    q_inv: Vec<Mat3>,
}

#[derive(Debug, Clone)]
pub struct NonlinearSolution {
    /// Generator `a` per interval.
    pub a: Vec<Vec3>,
    pub rotation: RotationField,
    /// `𝒱₀ = M(0) + ∫ R₀ t` at the nodes.
    pub v: Vec<Vec3>,
    /// `m₂ = 𝒢(a₀)`.
    pub energy: f64,
    /// `ℱ_NL(𝒱₀, R₀)` by direct quadrature.
    pub energy_direct: f64,
    /// `|ℱ_NL − 𝒢_ref|`, the change-of-variables cross-check.
    pub energy_check: f64,
    /// `‖a − Ã(a)‖_{L²}`.
    pub residual: f64,
    /// Euclidean norm of the discrete gradient.
    pub gradient_norm: f64,
    pub iterations: usize,
    pub gate: GateReport,
}

impl NonlinearProblem {
    pub fn new(rod: Rod1D, loads: LoadMatrix) -> Result<Self> {
        if loads.grid() != rod.grid() {
            return Err(Error::invalid("load matrix and rod use different axial grids"));
        }
        let g = loads.nodes();
        let w = quad::trapezoid_weights(rod.grid());
        let q_inv = (0..rod.intervals())
            .map(|k| {
                (rod.q_block(k) * 2.0)
                    .try_inverse()
                    .ok_or_else(|| Error::Singular(format!("elastic block {k} not invertible")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NonlinearProblem { rod, loads, g, w, q_inv })
    }

    pub fn rod(&self) -> &Rod1D {
        &self.rod
    }
    pub fn loads(&self) -> &LoadMatrix {
        &self.loads
    }

    fn check_len(&self, a: &[Vec3]) {
        assert_eq!(a.len(), self.rod.intervals(), "generator length does not match the grid");
    }

    /// Node rotations `R_0 = I, …, R_M`.
    pub fn rotations(&self, a: &[Vec3]) -> Vec<Mat3> {
        self.check_len(a);
        let mut r = Vec::with_capacity(a.len() + 1);
        r.push(Mat3::identity());
        for (k, ak) in a.iter().enumerate() {
            let next = r[k] * exp_axial(&(ak * self.rod.h(k)));
            r.push(next);
        }
        r
    }

    fn elastic(&self, a: &[Vec3]) -> f64 {
        a.iter().enumerate().map(|(k, ak)| ak.dot(&(self.rod.q_block(k) * ak))).sum()
    }

    /// `𝒢(a)`.
    pub fn energy(&self, a: &[Vec3]) -> f64 {
        let r = self.rotations(a);
        let load: f64 = self
            .g
            .iter()
            .zip(&r)
            .zip(&self.w)
            .map(|((g, r), w)| w * g.dot(&(r - Mat3::identity())))
            .sum();
        self.elastic(a) - load
    }

    /// `𝒢(a)` with 5-point Gauss for both terms, evaluating `Q(s)` and `𝐆(s)`
    /// pointwise. Converges to the continuous functional as the grid is refined.
    pub fn reference_energy(&self, a: &[Vec3]) -> f64 {
        let r = self.rotations(a);
        let grid = self.rod.grid();
        let st = self.rod.stiffness();
        let frame = self.rod.frame();
        (0..a.len())
            .map(|k| {
                quad::gauss5(grid[k], grid[k + 1], |s| {
                    let q = st.q(&frame.at(s));
                    let rs = r[k] * exp_axial(&(a[k] * (s - grid[k])));
                    a[k].dot(&(q * a[k])) - self.loads.at(s).dot(&(rs - Mat3::identity()))
                })
            })
            .sum()
    }

    /// `S_k = Σ_{m ≥ k+1} w_m 𝐆_m R_mᵀ` for every interval `k`.
    fn tails(&self, r: &[Mat3]) -> Vec<Mat3> {
        let m = r.len() - 1;
        let mut s = vec![Mat3::zeros(); m];
        let mut acc = Mat3::zeros();
        for k in (0..m).rev() {
            acc += self.g[k + 1] * r[k + 1].transpose() * self.w[k + 1];
            s[k] = acc;
        }
        s
    }

    /// Load part of the gradient, `h_k J_r(h_k a_k)ᵀ R_{k+1}ᵀ vee2(S_k)`.
    fn load_gradient(&self, a: &[Vec3]) -> Vec<Vec3> {
        let r = self.rotations(a);
        let s = self.tails(&r);
        (0..a.len())
            .map(|k| {
                let h = self.rod.h(k);
                right_jacobian(&(a[k] * h)).transpose() * (r[k + 1].transpose() * vee2(&s[k])) * h
            })
            .collect()
    }

    /// Discrete gradient: `𝒢′(a)(b) = Σ_k g_k·b_k`.
    pub fn gradient_vec(&self, a: &[Vec3]) -> Vec<Vec3> {
        self.load_gradient(a)
            .into_iter()
            .enumerate()
            .map(|(k, l)| self.rod.q_block(k) * a[k] * 2.0 - l)
            .collect()
    }

    /// `𝒢′(a)(b)`.
    pub fn gradient(&self, a: &[Vec3], b: &[Vec3]) -> f64 {
        self.check_len(b);
        self.gradient_vec(a).iter().zip(b).map(|(g, b)| g.dot(b)).sum()
    }

    /// `𝒢″(a)(b, b)`.
    pub fn hessian(&self, a: &[Vec3], b: &[Vec3]) -> f64 {
        self.check_len(a);
        self.check_len(b);
        let elastic: f64 = b.iter().enumerate().map(|(k, bk)| 2.0 * bk.dot(&(self.rod.q_block(k) * bk))).sum();
        let mut jet = MatJet::identity();
        let mut load = 0.0;
        for k in 0..a.len() {
            let h = self.rod.h(k);
            jet = jet.mul(&MatJet::exp(&(a[k] * h), &(b[k] * h)));
            load += self.w[k + 1] * self.g[k + 1].dot(&jet.dd);
        }
        elastic - load
    }

    /// The fixed-point map `Ã(a)`, whose fixed points are the critical points of `𝒢`.
    pub fn fixed_point_map(&self, a: &[Vec3]) -> Vec<Vec3> {
        self.load_gradient(a).iter().zip(&self.q_inv).map(|(l, qi)| qi * l).collect()
    }

    pub fn gate(&self) -> GateReport {
        self.loads.gate(self.rod.stiffness())
    }

    /// Damped fixed-point iteration from `init` (zero if `None`).
    pub fn solve(&self, opts: &FixedPointOptions, init: Option<&[Vec3]>) -> Result<NonlinearSolution> {
        if !(opts.damping > 0.0 && opts.damping <= 1.0) {
            return Err(Error::invalid(format!("damping must lie in (0, 1] (got {})", opts.damping)));
        }
        if !(opts.tol > 0.0) || opts.max_iter == 0 {
            return Err(Error::invalid("tolerance and iteration cap must be positive"));
        }
        let grid = self.rod.grid();
        let mut a = match init {
            Some(x) => {
                self.check_len(x);
                x.to_vec()
            }
            None => vec![Vec3::zeros(); self.rod.intervals()],
        };
        let rho = opts.damping;
        let mut iterations = 0;
        loop {
            iterations += 1;
            let target = self.fixed_point_map(&a);
            let next: Vec<Vec3> = a.iter().zip(&target).map(|(x, t)| x * (1.0 - rho) + t * rho).collect();
            let step: Vec<Vec3> = next.iter().zip(&a).map(|(n, x)| n - x).collect();
            let diff = axial_l2(grid, &step);
            let scale = 1.0 + axial_l2(grid, &a);
            a = next;
            if diff <= opts.tol * scale {
                break;
            }
            if !diff.is_finite() || iterations >= opts.max_iter {
                return Err(Error::NoConvergence { iterations, residual: diff });
            }
        }
        self.finish(a, iterations)
    }

    fn finish(&self, a: Vec<Vec3>, iterations: usize) -> Result<NonlinearSolution> {
        let grid = self.rod.grid();
        let target = self.fixed_point_map(&a);
        let res: Vec<Vec3> = a.iter().zip(&target).map(|(x, t)| x - t).collect();
        let residual = axial_l2(grid, &res);
        let gradient_norm = self.gradient_vec(&a).iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
        let rotation = integrate_generator(grid, &a)?;
        let v = reconstruct_line(&self.rod, &rotation);
        let energy = self.energy(&a);
        let reference = self.reference_energy(&a);
        let energy_direct = energy_f_nl(&self.rod, &self.loads, &v, &rotation)?;
        Ok(NonlinearSolution {
            a,
            rotation,
            v,
            energy,
            energy_direct,
            energy_check: (energy_direct - reference).abs(),
            residual,
            gradient_norm,
            iterations,
            gate: self.gate(),
        })
    }
}

impl NonlinearSolution {
    /// `(k₁, k₂, τ)` of `R₀` at `s`.
    pub fn curvatures_at(&self, rod: &Rod1D, s: f64) -> [f64; 3] {
        frame_curvatures(&self.rotation.generator_at(s), &rod.frame().frame(s))
    }
}

/// `𝒱(s_k) = M(0) + ∫₀^{s_k} R t` at every node.
pub fn reconstruct_line(rod: &Rod1D, r: &RotationField) -> Vec<Vec3> {
    let grid = rod.grid();
    let frame = rod.frame();
    let mut v = Vec::with_capacity(grid.len());
    v.push(frame.line().point(0.0));
    for k in 0..grid.len() - 1 {
        let inc = r.integrate_applied(grid[k], grid[k + 1], |z| frame.frame(z).t);
        let next = v[k] + inc;
        v.push(next);
    }
    v
}

/// `ℱ_NL(𝒱, R)` evaluated directly: bending and torsion from `R′ = R hat(a)`
/// and the load work `∫F·(𝒱 − M) + Σ_α ∫G_α·(R − I)n_α`, all by 5-point Gauss.
///
/// `v` holds the nodal values of `𝒱`; between nodes `𝒱 = 𝒱(s_k) + ∫ R t`.
pub fn energy_f_nl(rod: &Rod1D, loads: &LoadMatrix, v: &[Vec3], r: &RotationField) -> Result<f64> {
    let grid = rod.grid();
    if r.grid() != grid || v.len() != grid.len() {
        return Err(Error::invalid("fields do not live on the rod grid"));
    }
    let frame = rod.frame();
    let line = frame.line();
    let l = rod.length();
    if (r.values()[0] - Mat3::identity()).norm() > 1e-12 {
        return Err(Error::invalid("inadmissible pair: R(0) != I"));
    }
    if (v[0] - line.point(0.0)).norm() > 1e-12 * (1.0 + l) {
        return Err(Error::invalid("inadmissible pair: V(0) != M(0)"));
    }
    for k in 0..grid.len() - 1 {
        let inc = r.integrate_applied(grid[k], grid[k + 1], |z| frame.frame(z).t);
        if (v[k + 1] - v[k] - inc).norm() > 1e-10 * (1.0 + l) {
            return Err(Error::invalid(format!("inadmissible pair: dV/ds != R t on interval {k}")));
        }
    }
    let st = rod.stiffness();
    let profile = loads.profile();
    let mut total = 0.0;
    for k in 0..grid.len() - 1 {
        let a = r.generator()[k];
        let ah = hat(&a);
        total += quad::gauss5(grid[k], grid[k + 1], |s| {
            let f = frame.frame(s);
            let rs = r.values()[k] * exp_axial(&(a * (s - grid[k])));
            let dr = rs * ah;
            let k1 = (dr * f.t).dot(&(rs * f.n1));
            let k2 = (dr * f.t).dot(&(rs * f.n2));
            let tau = (dr * f.n1).dot(&(rs * f.n2));
            let elastic = 0.5 * st.ei1() * k1 * k1 + 0.5 * st.ei2() * k2 * k2 + 0.25 * st.mu_k() * tau * tau;
            let vs = v[k] + r.integrate_applied(grid[k], s, |z| frame.frame(z).t);
            let ri = rs - Mat3::identity();
            let work = loads.force(s).dot(&(vs - line.point(s)))
                + profile.g_alpha(0, s).dot(&(ri * f.n1))
                + profile.g_alpha(1, s).dot(&(ri * f.n2));
            elastic - work
        });
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_frame, build_middle_line, CurveSpec, FrameField, FrameSpec};
    use crate::limit::loads::{assemble_load_matrix, LoadProfile, LoadSpec, SectionLoadTerm};
    use crate::limit::{Material, Stiffness};
    use crate::poly::Poly;
    use crate::section::{build_section, SectionSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn straight(l: f64) -> FrameField {
        let line = build_middle_line(&CurveSpec::Straight { start: [0.0; 3], direction: [0.0, 0.0, 1.0], length: l }).unwrap();
        build_frame(&line, &FrameSpec::default()).unwrap()
    }

    fn arc() -> FrameField {
        let line = build_middle_line(&CurveSpec::CircularArc { radius: 2.0, length: 1.5, center: [0.0; 3] }).unwrap();
        build_frame(&line, &FrameSpec::default()).unwrap()
    }

    fn stiff() -> Stiffness {
        Stiffness::from_values(0.5, 0.03, 0.02, 0.04, &Material::lame(1.0, 1.0).unwrap()).unwrap()
    }

    fn loads_spec(scale: f64) -> LoadSpec {
        let p = |c: &[f64]| Poly(c.iter().map(|x| x * scale).collect());
        LoadSpec {
            f: [p(&[0.02, 0.01]), p(&[-0.015]), p(&[0.01])],
            g: vec![SectionLoadTerm { s1: 1, s2: 0, c: [p(&[0.0]), p(&[0.05]), p(&[0.02, 0.01])] }],
            ..LoadSpec::default()
        }
    }

    fn problem(frame: &FrameField, m: usize, scale: f64) -> NonlinearProblem {
        let sec = build_section(&SectionSpec::Rectangle { width: 1.0, height: 0.5, center: [0.0; 2] }, 2).unwrap();
        let rod = Rod1D::new(frame, m, stiff()).unwrap();
        let lp = LoadProfile::new(&loads_spec(scale), &sec).unwrap();
        let lm = assemble_load_matrix(&lp, frame, rod.grid());
        NonlinearProblem::new(rod, lm).unwrap()
    }

    fn random_field(rng: &mut ChaCha8Rng, m: usize, amp: f64) -> Vec<Vec3> {
        (0..m)
            .map(|_| Vec3::new(rng.gen_range(-amp..amp), rng.gen_range(-amp..amp), rng.gen_range(-amp..amp)))
            .collect()
    }

    #[test]
    fn zero_generator_zero_energy() {
        let p = problem(&arc(), 8, 1.0);
        assert_eq!(p.energy(&vec![Vec3::zeros(); 8]), 0.0);
    }

    #[test]
    fn pure_torsion_energy() {
        let fr = straight(2.0);
        let rod = Rod1D::new(&fr, 10, stiff()).unwrap();
        let sec = build_section(&SectionSpec::Disc { radius: 1.0 }, 2).unwrap();
        let lp = LoadProfile::new(&LoadSpec::default(), &sec).unwrap();
        let lm = assemble_load_matrix(&lp, &fr, rod.grid());
        let p = NonlinearProblem::new(rod, lm).unwrap();
        let c = 0.7;
        let a = vec![Vec3::new(0.0, 0.0, c); 10];
        let expect = 0.25 * stiff().mu_k() * 2.0 * c * c;
        assert!((p.energy(&a) - expect).abs() < 1e-14);
        let r = integrate_generator(p.rod().grid(), &a).unwrap();
        let v = reconstruct_line(p.rod(), &r);
        let direct = energy_f_nl(p.rod(), p.loads(), &v, &r).unwrap();
        assert!((direct - expect).abs() < 1e-13);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert!(p.energy(&random_field(&mut rng, 10, 2.0)) >= 0.0);
        }
    }

    #[test]
    fn gradient_and_hessian_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for fr in [straight(1.5), arc()] {
            let p = problem(&fr, 12, 20.0);
            for _ in 0..5 {
                let a = random_field(&mut rng, 12, 1.0);
                let b = random_field(&mut rng, 12, 1.0);
                let g = p.gradient(&a, &b);
                let h = p.hessian(&a, &b);
                let e0 = p.energy(&a);
                let shifted = |eps: f64| -> Vec<Vec3> { a.iter().zip(&b).map(|(x, y)| x + y * eps).collect() };
                let r1: Vec<f64> =
                    [1e-3, 1e-4].iter().map(|&e| (p.energy(&shifted(e)) - e0 - e * g).abs()).collect();
                assert!(r1[0] / r1[1] > 50.0, "{r1:?}");
                let r2: Vec<f64> =
                    [1e-3, 1e-4].iter().map(|&e| (p.gradient(&shifted(e), &b) - g - e * h).abs()).collect();
                assert!(r2[0] / r2[1] > 50.0, "{r2:?}");
            }
        }
    }

    #[test]
    fn zero_loads_converge_in_one_step() {
        let fr = arc();
        let rod = Rod1D::new(&fr, 16, stiff()).unwrap();
        let sec = build_section(&SectionSpec::Disc { radius: 1.0 }, 2).unwrap();
        let lp = LoadProfile::new(&LoadSpec::default(), &sec).unwrap();
        let lm = assemble_load_matrix(&lp, &fr, rod.grid());
        let p = NonlinearProblem::new(rod, lm).unwrap();
        let s = p.solve(&FixedPointOptions::default(), None).unwrap();
        assert_eq!(s.iterations, 1);
        assert!(s.a.iter().all(|a| *a == Vec3::zeros()));
        assert_eq!(s.energy, 0.0);
        assert_eq!(s.residual, 0.0);
        for (v, &x) in s.v.iter().zip(p.rod().grid()) {
            assert!((v - fr.line().point(x)).norm() < 1e-14);
        }
    }

    #[test]
    fn solution_is_stationary_and_unique() {
        let p = problem(&arc(), 24, 0.4);
        assert!(p.gate().pass, "{:?}", p.gate());
        let s = p.solve(&FixedPointOptions::default(), None).unwrap();
        assert!(s.residual < 1e-8, "{}", s.residual);
        assert!(s.energy < 0.0);
        assert!(s.energy_check < 1e-10, "{}", s.energy_check);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = p.rod().grid().to_vec();
        for _ in 0..20 {
            let b = random_field(&mut rng, 24, 1.0);
            assert!(p.gradient(&s.a, &b).abs() <= 1e-8 * axial_l2(&grid, &b));
        }
        for _ in 0..4 {
            let init = random_field(&mut rng, 24, 0.5);
            let t = p.solve(&FixedPointOptions::default(), Some(&init)).unwrap();
            let d: Vec<Vec3> = t.a.iter().zip(&s.a).map(|(x, y)| x - y).collect();
            assert!(axial_l2(&grid, &d) < 1e-6);
        }
    }

    #[test]
    fn f_nl_matches_reference_energy_on_random_fields() {
        let p = problem(&arc(), 10, 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_field(&mut rng, 10, 1.5);
            let r = integrate_generator(p.rod().grid(), &a).unwrap();
            let v = reconstruct_line(p.rod(), &r);
            let d = energy_f_nl(p.rod(), p.loads(), &v, &r).unwrap();
            let e = p.reference_energy(&a);
            assert!((d - e).abs() < 1e-10 * (1.0 + e.abs()), "{d} vs {e}");
        }
    }

    #[test]
    fn inadmissible_pairs_rejected() {
        let p = problem(&straight(1.0), 4, 1.0);
        let r = RotationField::identity(p.rod().grid()).unwrap();
        let mut v = reconstruct_line(p.rod(), &r);
        v[2].x += 0.1;
        assert!(energy_f_nl(p.rod(), p.loads(), &v, &r).is_err());
    }

    #[test]
    fn coercivity_bound_under_gate() {
        let p = problem(&arc(), 12, 0.5);
        let gate = p.gate();
        assert!(gate.pass);
        let st = p.rod().stiffness();
        let l = p.rod().length();
        let c = 0.5 * (st.coercivity() - l.powf(1.5) * gate.g_norm);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let a = random_field(&mut rng, 12, 2.0);
            let b = random_field(&mut rng, 12, 1.0);
            let nb = axial_l2(p.rod().grid(), &b);
            assert!(p.hessian(&a, &b) >= c * nb * nb);
        }
    }

    #[test]
    fn non_convergence_reported() {
        let p = problem(&arc(), 8, 1.0);
        let opts = FixedPointOptions { max_iter: 2, tol: 1e-14, damping: 0.1 };
        assert!(matches!(p.solve(&opts, None), Err(Error::NoConvergence { .. })));
    }
}
