//! Splitting a sampled deformation of the rod into an elementary deformation
//! `𝒱(s₃) + R(s₃)(s₁n₁ + s₂n₂)` and a warping `v̄`.
//!
//! Fields are sampled on the tensor grid (section mesh nodes) × (axial nodes),
//! in rescaled coordinates: the value at `(S, s₃)` is `v(Φ(δS₁, δS₂, s₃))`.
//! Gradients live at (triangle, axial node) pairs: the P1 in-section gradient
//! and a vertex-averaged three-point axial difference. `∇Φ` is differentiated
//! by the same discrete operators, so rigid motions are reproduced exactly.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{jac_det_at, RodChart};
use crate::par;
use crate::quad;
use crate::section::CrossSection;
use crate::so3::{interpolate_rotation_samples, polar_rotation, RotationField};
use crate::{Mat3, Vec3};

/// Sampled `v ∘ Φ` on (section nodes) × (axial nodes); value `(j, i)` at
/// `values[j * n_section + i]`.
#[derive(Debug, Clone)]
pub struct DeformationField3D {
    chart: Arc<RodChart>,
    axial: Vec<f64>,
    values: Vec<Vec3>,
}

impl DeformationField3D {
    pub fn new(chart: Arc<RodChart>, axial: Vec<f64>, values: Vec<Vec3>) -> Result<Self> {
        let l = chart.length();
        if axial.len() < 3 {
            return Err(Error::invalid("need at least three axial nodes"));
        }
        if axial[0] != 0.0 || (axial[axial.len() - 1] - l).abs() > 1e-12 * l.max(1.0) {
            return Err(Error::invalid("axial nodes must span [0, L]"));
        }
        if axial.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("axial nodes must be strictly increasing"));
        }
        let n = chart.section().nodes().len();
        if values.len() != n * axial.len() {
            return Err(Error::invalid(format!(
                "expected {} values ({} section nodes x {} axial nodes), got {}",
                n * axial.len(),
                n,
                axial.len(),
                values.len()
            )));
        }
        if !values.iter().all(|v| v.iter().all(|x| x.is_finite())) {
            return Err(Error::invalid("field has non-finite values"));
        }
        Ok(DeformationField3D { chart, axial, values })
    }

    /// Samples `f(S, s₃)` on the grid (axial lines in parallel).
    pub fn from_fn<F>(chart: Arc<RodChart>, axial: Vec<f64>, f: F) -> Result<Self>
    where
        F: Fn([f64; 2], f64) -> Vec3 + Sync + Send,
    {
        let nodes = chart.section().nodes().to_vec();
        let rows = par::map(&axial, |&s| nodes.iter().map(|&p| f(p, s)).collect::<Vec<_>>());
        DeformationField3D::new(chart, axial, rows.into_iter().flatten().collect())
    }

    /// `v = Id`, i.e. the samples of `Φ`.
    pub fn identity(chart: Arc<RodChart>, axial: Vec<f64>) -> Result<Self> {
        let c = chart.clone();
        let d = chart.delta();
        DeformationField3D::from_fn(chart, axial, move |p, s| c.phi_unchecked([d * p[0], d * p[1], s]))
    }

    pub fn chart(&self) -> &Arc<RodChart> {
        &self.chart
    }
    pub fn section(&self) -> &CrossSection {
        self.chart.section()
    }
    pub fn axial(&self) -> &[f64] {
        &self.axial
    }
    pub fn values(&self) -> &[Vec3] {
        &self.values
    }
    pub fn n_section(&self) -> usize {
        self.section().nodes().len()
    }
    pub fn at(&self, j: usize, i: usize) -> Vec3 {
        self.values[j * self.n_section() + i]
    }

    /// `∇_s` of the sampled field at every (triangle, axial node), row-major in `j`.
    pub fn grad_s(&self) -> Vec<Mat3> {
        grad_s(self.section(), &self.axial, &self.values, self.chart.delta())
    }

    /// `∇_s Φ` by the same discrete operators.
    pub fn grad_s_phi(&self) -> Vec<Mat3> {
        let id = DeformationField3D::identity(self.chart.clone(), self.axial.clone()).expect("grid already validated");
        id.grad_s()
    }

    /// `∇_x v = ∇_s v (∇_s Φ)⁻¹` at every (triangle, axial node).
    pub fn grad_x(&self) -> Result<Vec<Mat3>> {
        let gv = self.grad_s();
        let gp = self.grad_s_phi();
        gv.iter()
            .zip(&gp)
            .map(|(v, p)| {
                p.try_inverse().map(|pi| v * pi).ok_or_else(|| Error::Singular("discrete grad Phi not invertible".into()))
            })
            .collect()
    }
}

/// Three-point first-derivative weights at node `j` of a nonuniform grid
/// (one-sided at the ends); returns `(indices, weights)`.
fn axial_stencil(x: &[f64], j: usize) -> ([usize; 3], [f64; 3]) {
    let n = x.len();
    if j == 0 {
        let (h1, h2) = (x[1] - x[0], x[2] - x[1]);
        ([0, 1, 2], [-(2.0 * h1 + h2) / (h1 * (h1 + h2)), (h1 + h2) / (h1 * h2), -h1 / (h2 * (h1 + h2))])
    } else if j == n - 1 {
        let (h1, h2) = (x[n - 2] - x[n - 3], x[n - 1] - x[n - 2]);
        ([n - 3, n - 2, n - 1], [h2 / (h1 * (h1 + h2)), -(h1 + h2) / (h1 * h2), (2.0 * h2 + h1) / (h2 * (h1 + h2))])
    } else {
        let (h1, h2) = (x[j] - x[j - 1], x[j + 1] - x[j]);
        ([j - 1, j, j + 1], [-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2))])
    }
}

fn grad_s(sec: &CrossSection, axial: &[f64], values: &[Vec3], delta: f64) -> Vec<Mat3> {
    let n = sec.nodes().len();
    let rows = par::map_range(axial.len(), |j| {
        let (idx, w) = axial_stencil(axial, j);
        sec.triangles()
            .iter()
            .zip(sec.tri_geom())
            .map(|(t, g)| {
                let mut c = [Vec3::zeros(); 3];
                for (v, &node) in t.iter().enumerate() {
                    let val = values[j * n + node];
                    c[0] += val * (g.grad[v][0] / delta);
                    c[1] += val * (g.grad[v][1] / delta);
                    for (&jj, &ww) in idx.iter().zip(&w) {
                        c[2] += values[jj * n + node] * (ww / 3.0);
                    }
                }
                Mat3::from_columns(&c)
            })
            .collect::<Vec<_>>()
    });
    rows.into_iter().flatten().collect()
}

/// `dist(F, SO(3)) = ‖√(FᵀF) − I‖` for `det F > 0`; for `det F ≤ 0` the
/// smallest singular value enters with a flipped sign.
pub fn dist_so3(f: &Mat3) -> f64 {
    let (_, mut s) = polar_rotation(f);
    if f.determinant() <= 0.0 {
        s[2] = -s[2];
    }
    s.iter().map(|x| (x - 1.0).powi(2)).sum::<f64>().sqrt()
}

/// Per axial node, the area-weighted section mean `𝒱(s₃)`.
pub fn section_means(field: &DeformationField3D) -> Vec<Vec3> {
    let m = field.section().lumped_mass();
    let area: f64 = m.iter().sum();
    (0..field.axial.len())
        .map(|j| (0..m.len()).map(|i| field.at(j, i) * m[i]).sum::<Vec3>() / area)
        .collect()
}

/// Default slice count `round(3L/(4δ))`.
pub fn default_slices(length: f64, delta: f64) -> usize {
    ((0.75 * length / delta).round() as usize).max(1)
}

/// Nearest rotation to the averaged `∇_x v` on slices centered at
/// `α_k = kL/N` with half-width `L/(2N)`, `k = 0..=N`.
pub fn fit_slice_rotations(field: &DeformationField3D, n: usize) -> Result<Vec<Mat3>> {
    if n == 0 {
        return Err(Error::invalid("slice count must be positive"));
    }
    let g = field.grad_x()?;
    let sec = field.section();
    let nt = sec.triangles().len();
    let l = field.chart.length();
    let half = 0.5 * l / n as f64;
    let axial = &field.axial;
    let w = quad::trapezoid_weights(axial);
    let fits = par::map_range(n + 1, |k| {
        let alpha = l * k as f64 / n as f64;
        let members: Vec<usize> =
            (0..axial.len()).filter(|&j| (axial[j] - alpha).abs() <= half * (1.0 + 1e-12)).collect();
        if members.len() < 2 {
            return Err(Error::invalid(format!(
                "slice {k} around s3 = {alpha} holds {} axial node(s); need at least 2 (refine the axial grid or use fewer slices)",
                members.len()
            )));
        }
        let mut acc = Mat3::zeros();
        for &j in &members {
            for (t, geo) in sec.tri_geom().iter().enumerate() {
                acc += g[j * nt + t] * (geo.area * w[j]);
            }
        }
        let (r, sigma) = polar_rotation(&acc);
        if sigma[1] <= 1e-12 * sigma[0] {
            return Err(Error::DegenerateSlice { slice: k, sigma });
        }
        Ok(r)
    });
    fits.into_iter().collect()
}

/// Norms entering the decomposition estimates and their `δ`-normalized ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateReport {
    /// `D = ‖dist(∇v, SO(3))‖_{L²(𝒫_δ)}`.
    pub dist: f64,
    pub warping: f64,
    pub warping_grad: f64,
    pub rotation_derivative: f64,
    pub stretch: f64,
    pub grad_minus_rotation: f64,
    /// `‖v̄‖/(δD)`, `‖∇v̄‖/D`, `‖R′‖δ²/D`, `‖𝒱′ − Rt‖δ/D`, `‖∇v − R‖/D`.
    pub ratios: [f64; 5],
}

#[derive(Debug, Clone)]
pub struct ElementaryDecomposition {
    pub v: Vec<Vec3>,
    pub rotation: RotationField,
    /// Warping, laid out like the input field.
    pub warping: Vec<Vec3>,
    pub vb: Vec<Vec3>,
    pub vs: Vec<Vec3>,
    pub estimates: EstimateReport,
}

/// `𝒱_B(s₃) = 𝒱(0) + ∫₀^{s₃} R t` and `𝒱_S = 𝒱 − 𝒱_B` at the axial nodes.
pub fn split_bending_stretching(
    chart: &RodChart,
    axial: &[f64],
    v: &[Vec3],
    rotation: &RotationField,
) -> (Vec<Vec3>, Vec<Vec3>) {
    let frame = chart.frame();
    let mut vb = vec![v[0]];
    for j in 0..axial.len() - 1 {
        let inc = rotation.integrate_applied(axial[j], axial[j + 1], |z| frame.frame(z).t);
        let next = vb[j] + inc;
        vb.push(next);
    }
    let vs = v.iter().zip(&vb).map(|(a, b)| a - b).collect();
    (vb, vs)
}

/// Full decomposition with `slices` (default `round(3L/(4δ))`) rotation samples.
pub fn decompose(field: &DeformationField3D, clamp_left: bool, slices: Option<usize>) -> Result<ElementaryDecomposition> {
    let chart = field.chart.clone();
    let delta = chart.delta();
    let l = chart.length();
    let n = slices.unwrap_or_else(|| default_slices(l, delta));
    let mut samples = fit_slice_rotations(field, n)?;
    if clamp_left {
        samples[0] = Mat3::identity();
    }
    let rotation = interpolate_rotation_samples(&samples, l)?;
    let v = section_means(field);
    let sec = field.section();
    let nodes = sec.nodes();
    let ns = nodes.len();
    let axial = &field.axial;
    let frames: Vec<_> = axial.iter().map(|&s| chart.frame().at(s)).collect();
    let rots: Vec<Mat3> = axial.iter().map(|&s| rotation.eval(s)).collect();
    let mut warping = Vec::with_capacity(field.values.len());
    for j in 0..axial.len() {
        let f = &frames[j].frame;
        for (i, p) in nodes.iter().enumerate() {
            let offset = f.n1 * (delta * p[0]) + f.n2 * (delta * p[1]);
            warping.push(field.at(j, i) - v[j] - rots[j] * offset);
        }
    }
    let (vb, vs) = split_bending_stretching(&chart, axial, &v, &rotation);

    // estimates
    let w = quad::trapezoid_weights(axial);
    let mass = sec.lumped_mass();
    let d2 = delta * delta;
    let grad_x = field.grad_x()?;
    let grad_w = grad_s(sec, axial, &warping, delta);
    let nt = sec.triangles().len();
    let mut dist = 0.0;
    let mut gw = 0.0;
    let mut gr = 0.0;
    let mut vol = 0.0;
    for j in 0..axial.len() {
        for (t, (tri, geo)) in sec.triangles().iter().zip(sec.tri_geom()).enumerate() {
            let c = tri.iter().fold([0.0; 2], |c, &i| [c[0] + nodes[i][0] / 3.0, c[1] + nodes[i][1] / 3.0]);
            let base = geo.area * d2 * w[j];
            let jd = jac_det_at(&frames[j], delta * c[0], delta * c[1]);
            let g = &grad_x[j * nt + t];
            dist += base * jd * dist_so3(g).powi(2);
            vol += base * jd;
            gw += base * grad_w[j * nt + t].norm_squared();
            gr += base * (g - rots[j]).norm_squared();
        }
    }
    let warp: f64 = (0..axial.len())
        .map(|j| w[j] * d2 * (0..ns).map(|i| mass[i] * warping[j * ns + i].norm_squared()).sum::<f64>())
        .sum();
    let stretch: f64 = (0..axial.len() - 1)
        .map(|j| {
            let dv = (v[j + 1] - v[j]) / (axial[j + 1] - axial[j]);
            quad::gauss2(axial[j], axial[j + 1])
                .iter()
                .map(|&(s, wt)| wt * (dv - rotation.eval(s) * chart.frame().frame(s).t).norm_squared())
                .sum::<f64>()
        })
        .sum();
    let dist = dist.sqrt();
    let norms = [warp.sqrt(), gw.sqrt(), rotation.h1_energy().sqrt(), stretch.sqrt(), gr.sqrt()];
    let ratios = if dist <= 1e-12 * vol.sqrt() {
        [0.0; 5]
    } else {
        [
            norms[0] / (delta * dist),
            norms[1] / dist,
            norms[2] * d2 / dist,
            norms[3] * delta / dist,
            norms[4] / dist,
        ]
    };
    let estimates = EstimateReport {
        dist,
        warping: norms[0],
        warping_grad: norms[1],
        rotation_derivative: norms[2],
        stretch: norms[3],
        grad_minus_rotation: norms[4],
        ratios,
    };
    Ok(ElementaryDecomposition { v, rotation, warping, vb, vs, estimates })
}

impl ElementaryDecomposition {
    /// `𝒱 + R(δS·n) + v̄` on the grid of `field`.
    pub fn reconstruct(&self, field: &DeformationField3D) -> Vec<Vec3> {
        let chart = field.chart();
        let delta = chart.delta();
        let nodes = field.section().nodes();
        let mut out = Vec::with_capacity(self.warping.len());
        for (j, &s) in field.axial().iter().enumerate() {
            let f = chart.frame().frame(s);
            let r = self.rotation.eval(s);
            for (i, p) in nodes.iter().enumerate() {
                let offset = f.n1 * (delta * p[0]) + f.n2 * (delta * p[1]);
                out.push(self.v[j] + r * offset + self.warping[j * nodes.len() + i]);
            }
        }
        out
    }
}
