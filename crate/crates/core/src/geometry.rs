//! Middle lines, frames and the chart of the physical rod.
//!
//! The chart is `Φ(s₁, s₂, s₃) = M(s₃) + s₁ n₁(s₃) + s₂ n₂(s₃)` with `M`
//! arc-length parametrized and `(n₁, n₂, t)` a right-handed orthonormal frame,
//! `n₂ = t ∧ n₁`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::section::CrossSection;
use crate::Vec3;

/// User description of a middle line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSpec {
    /// `M(s) = start + s·direction`.
    Straight {
        #[serde(default)]
        start: [f64; 3],
        direction: [f64; 3],
        length: f64,
    },
    /// Arc of the circle of radius `radius` around `center` in the plane
    /// orthogonal to e₃, starting at `center + radius·e₁`, counter-clockwise.
    CircularArc {
        radius: f64,
        length: f64,
        #[serde(default)]
        center: [f64; 3],
    },
    /// `(ρ cos φ, ρ sin φ, bφ)` reparametrized by arc length `s = φ√(ρ²+b²)`.
    Helix { radius: f64, rise: f64, length: f64 },
    /// Natural cubic spline through `points` (chord-length knots), reparametrized
    /// by arc length.
    Spline { points: Vec<[f64; 3]> },
}

#[derive(Debug, Clone)]
enum Curve {
    Straight { p0: Vec3, d: Vec3 },
    Arc { c: Vec3, rho: f64 },
    Helix { rho: f64, b: f64, c: f64 },
    Spline(Box<Spline>),
}

/// Arc-length parametrized curve `M(s₃)`, `s₃ ∈ [0, L]`.
#[derive(Debug, Clone)]
pub struct MiddleLine {
    spec: CurveSpec,
    curve: Curve,
    length: f64,
    max_curvature: f64,
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn positive(x: f64, what: &str) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::invalid(format!("{what} must be positive and finite (got {x})")));
    }
    Ok(())
}

/// Validates `spec` and builds the arc-length parametrized curve.
pub fn build_middle_line(spec: &CurveSpec) -> Result<MiddleLine> {
    let (curve, length, kmax) = match spec {
        CurveSpec::Straight { start, direction, length } => {
            positive(*length, "length")?;
            let d = v3(*direction);
            if !(d.norm() > 0.0) || !d.iter().all(|x| x.is_finite()) {
                return Err(Error::invalid("straight line: zero-length direction"));
            }
            (Curve::Straight { p0: v3(*start), d: d.normalize() }, *length, 0.0)
        }
        CurveSpec::CircularArc { radius, length, center } => {
            positive(*radius, "radius")?;
            positive(*length, "length")?;
            if *length >= 2.0 * std::f64::consts::PI * radius {
                return Err(Error::invalid("circular arc closes on itself (self-intersecting)"));
            }
            (Curve::Arc { c: v3(*center), rho: *radius }, *length, 1.0 / radius)
        }
        CurveSpec::Helix { radius, rise, length } => {
            positive(*radius, "radius")?;
            positive(*length, "length")?;
            if !rise.is_finite() {
                return Err(Error::invalid("helix rise must be finite"));
            }
            let c = (radius * radius + rise * rise).sqrt();
            if *rise == 0.0 && *length >= 2.0 * std::f64::consts::PI * radius {
                return Err(Error::invalid("flat helix closes on itself (self-intersecting)"));
            }
            (Curve::Helix { rho: *radius, b: *rise, c }, *length, radius / (c * c))
        }
        CurveSpec::Spline { points } => {
            let sp = Spline::new(points)?;
            let l = sp.total;
            let kmax = sp.max_curvature();
            (Curve::Spline(Box::new(sp)), l, kmax)
        }
    };
    Ok(MiddleLine { spec: spec.clone(), curve, length, max_curvature: kmax })
}

impl MiddleLine {
    pub fn spec(&self) -> &CurveSpec {
        &self.spec
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn max_curvature(&self) -> f64 {
        self.max_curvature
    }

    /// `(M, t, dt/ds)` at `s`.
    pub fn eval(&self, s: f64) -> (Vec3, Vec3, Vec3) {
        match &self.curve {
            Curve::Straight { p0, d } => (p0 + d * s, *d, Vec3::zeros()),
            Curve::Arc { c, rho } => {
                let (sn, cs) = (s / rho).sin_cos();
                (
                    c + Vec3::new(rho * cs, rho * sn, 0.0),
                    Vec3::new(-sn, cs, 0.0),
                    Vec3::new(-cs, -sn, 0.0) / *rho,
                )
            }
            Curve::Helix { rho, b, c } => {
                let (sn, cs) = (s / c).sin_cos();
                (
                    Vec3::new(rho * cs, rho * sn, b * s / c),
                    Vec3::new(-rho * sn / c, rho * cs / c, b / c),
                    Vec3::new(-rho * cs, -rho * sn, 0.0) / (c * c),
                )
            }
            Curve::Spline(sp) => sp.eval_arclength(s),
        }
    }

    pub fn point(&self, s: f64) -> Vec3 {
        self.eval(s).0
    }
    pub fn tangent(&self, s: f64) -> Vec3 {
        self.eval(s).1
    }

    /// Frenet torsion where it is defined analytically (0 for planar kinds).
    fn frenet_torsion(&self) -> f64 {
        match &self.curve {
            Curve::Helix { b, c, .. } => b / (c * c),
            _ => 0.0,
        }
    }
}

/// Natural cubic spline in chord-length parameter with an arc-length table.
#[derive(Debug, Clone)]
struct Spline {
    knots: Vec<f64>,
    // per segment, per component: cubic coefficients in (u − u_i)
    coef: Vec<[[f64; 4]; 3]>,
    // arc length at knots
    arc: Vec<f64>,
    total: f64,
}

impl Spline {
    fn new(points: &[[f64; 3]]) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::invalid("spline needs at least 4 points"));
        }
        let p: Vec<Vec3> = points.iter().map(|q| v3(*q)).collect();
        if !p.iter().all(|q| q.iter().all(|x| x.is_finite())) {
            return Err(Error::invalid("spline points must be finite"));
        }
        let mut knots = vec![0.0];
        for w in p.windows(2) {
            let h = (w[1] - w[0]).norm();
            if h <= 1e-12 {
                return Err(Error::invalid("spline has repeated consecutive points (zero-length)"));
            }
            knots.push(knots.last().unwrap() + h);
        }
        let n = p.len();
        let mut coef = vec![[[0.0; 4]; 3]; n - 1];
        for c in 0..3 {
            let y: Vec<f64> = p.iter().map(|q| q[c]).collect();
            let m = natural_second_derivatives(&knots, &y);
            for i in 0..n - 1 {
                let h = knots[i + 1] - knots[i];
                coef[i][c] = [
                    y[i],
                    (y[i + 1] - y[i]) / h - h * (2.0 * m[i] + m[i + 1]) / 6.0,
                    m[i] / 2.0,
                    (m[i + 1] - m[i]) / (6.0 * h),
                ];
            }
        }
        let mut sp = Spline { knots, coef, arc: vec![0.0], total: 0.0 };
        for i in 0..n - 1 {
            let seg = sp.arc_between(i, sp.knots[i], sp.knots[i + 1]);
            sp.arc.push(sp.arc[i] + seg);
        }
        sp.total = *sp.arc.last().unwrap();
        sp.check_self_intersection()?;
        Ok(sp)
    }

    fn derivs(&self, u: f64) -> (Vec3, Vec3, Vec3) {
        let i = quad::locate(&self.knots, u);
        let x = u - self.knots[i];
        let mut p = Vec3::zeros();
        let mut d = Vec3::zeros();
        let mut dd = Vec3::zeros();
        for c in 0..3 {
            let [a, b, cc, e] = self.coef[i][c];
            p[c] = a + x * (b + x * (cc + x * e));
            d[c] = b + x * (2.0 * cc + 3.0 * e * x);
            dd[c] = 2.0 * cc + 6.0 * e * x;
        }
        (p, d, dd)
    }

    fn speed(&self, u: f64) -> f64 {
        self.derivs(u).1.norm()
    }

    fn arc_between(&self, seg: usize, a: f64, b: f64) -> f64 {
        // composite 5-point Gauss; the integrand is smooth within a segment
        let h = self.knots[seg + 1] - self.knots[seg];
        let pieces = (((b - a) / h) * 16.0).ceil().max(1.0) as usize;
        let mut acc = 0.0;
        for j in 0..pieces {
            let lo = a + (b - a) * j as f64 / pieces as f64;
            let hi = a + (b - a) * (j + 1) as f64 / pieces as f64;
            acc += quad::gauss5(lo, hi, |u| self.speed(u));
        }
        acc
    }

    fn param_of(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.total);
        let i = quad::locate(&self.arc, s);
        let (u0, u1) = (self.knots[i], self.knots[i + 1]);
        let target = s - self.arc[i];
        let seg = self.arc[i + 1] - self.arc[i];
        let mut u = u0 + (u1 - u0) * target / seg;
        let (mut lo, mut hi) = (u0, u1);
        for _ in 0..60 {
            let f = self.arc_between(i, u0, u) - target;
            if f > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            if f.abs() < 1e-15 * self.total.max(1.0) {
                break;
            }
            let mut next = u - f / self.speed(u);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            u = next;
        }
        u
    }

    fn eval_arclength(&self, s: f64) -> (Vec3, Vec3, Vec3) {
        let u = self.param_of(s);
        let (p, d, dd) = self.derivs(u);
        let sp = d.norm();
        let t = d / sp;
        let tp = (dd - t * t.dot(&dd)) / (sp * sp);
        (p, t, tp)
    }

    fn max_curvature(&self) -> f64 {
        let mut k: f64 = 0.0;
        for i in 0..self.knots.len() - 1 {
            for j in 0..=32 {
                let u = self.knots[i] + (self.knots[i + 1] - self.knots[i]) * j as f64 / 32.0;
                let (_, d, dd) = self.derivs(u);
                k = k.max(d.cross(&dd).norm() / d.norm().powi(3));
            }
        }
        k
    }

    fn check_self_intersection(&self) -> Result<()> {
        let per = 12;
        let mut pts = vec![];
        for i in 0..self.knots.len() - 1 {
            for j in 0..per {
                let u = self.knots[i] + (self.knots[i + 1] - self.knots[i]) * j as f64 / per as f64;
                pts.push(self.derivs(u).0);
            }
        }
        pts.push(self.derivs(*self.knots.last().unwrap()).0);
        let tol = 1e-9 * self.total;
        for a in 0..pts.len() - 1 {
            for b in a + 2..pts.len() - 1 {
                if segment_distance(pts[a], pts[a + 1], pts[b], pts[b + 1]) <= tol {
                    return Err(Error::invalid("spline is self-intersecting"));
                }
            }
        }
        Ok(())
    }
}

fn natural_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let a = h0 / 6.0;
        let b = (h0 + h1) / 3.0;
        let cc = h1 / 6.0;
        let r = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        let denom = b - a * c[i - 1];
        c[i] = cc / denom;
        d[i] = (r - a * d[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d[i] - c[i] * m[i + 1];
    }
    m
}

fn segment_distance(p0: Vec3, p1: Vec3, q0: Vec3, q1: Vec3) -> f64 {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let c = d1.dot(&r);
    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    let mut s = if denom > 1e-300 { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    ((p0 + d1 * s) - (q0 + d2 * t)).norm()
}

/// How `n₁` is chosen along the line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FrameMethod {
    /// Frenet frame (`n₁` toward the centre of curvature); a fixed transverse
    /// vector on straight lines.
    #[default]
    Analytic,
    /// Double-reflection rotation-minimizing frame.
    RotationMinimizing,
}

/// Frame options from the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSpec {
    #[serde(default)]
    pub method: FrameMethod,
    /// Vector projected on the normal plane to fix `n₁` where curvature does not.
    #[serde(default)]
    pub reference: Option<[f64; 3]>,
    /// Node count of the rotation-minimizing recurrence.
    #[serde(default = "default_frame_nodes")]
    pub nodes: usize,
}

fn default_frame_nodes() -> usize {
    1024
}

impl Default for FrameSpec {
    fn default() -> Self {
        FrameSpec { method: FrameMethod::Analytic, reference: None, nodes: default_frame_nodes() }
    }
}

/// `(t, n₁, n₂)` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub t: Vec3,
    pub n1: Vec3,
    pub n2: Vec3,
}

impl Frame {
    /// Matrix with columns `(n₁ | n₂ | t)`.
    pub fn matrix(&self) -> crate::Mat3 {
        crate::Mat3::from_columns(&[self.n1, self.n2, self.t])
    }
}

/// Frame together with arc-length derivatives.
#[derive(Debug, Clone, Copy)]
pub struct FramePoint {
    pub m: Vec3,
    pub frame: Frame,
    pub dt: Vec3,
    pub dn1: Vec3,
    pub dn2: Vec3,
}

/// Frame field along a middle line.
#[derive(Debug, Clone)]
pub struct FrameField {
    line: MiddleLine,
    method: FrameMethod,
    fixed_n1: Option<Vec3>,
    rmf: Vec<(Vec3, Vec3, Vec3)>, // (M, t, n1) at the recurrence nodes
    rmf_grid: Vec<f64>,
    orientation: &'static str,
}

fn project_normal(t: &Vec3, r: &Vec3) -> Option<Vec3> {
    let p = r - t * t.dot(r);
    (p.norm() > 1e-8).then(|| p.normalize())
}

fn default_reference(t: &Vec3) -> Vec3 {
    if t.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    }
}

/// Builds the frame field; the analytic method is refused for splines.
pub fn build_frame(line: &MiddleLine, spec: &FrameSpec) -> Result<FrameField> {
    let reference = spec.reference.map(v3);
    let (_, t0, k0) = line.eval(0.0);
    let pick = |t: &Vec3| -> Result<Vec3> {
        let r = reference.unwrap_or_else(|| default_reference(t));
        project_normal(t, &r).ok_or_else(|| Error::invalid("frame reference is parallel to the tangent"))
    };
    let mut ff = FrameField {
        line: line.clone(),
        method: spec.method,
        fixed_n1: None,
        rmf: vec![],
        rmf_grid: vec![],
        orientation: "",
    };
    match spec.method {
        FrameMethod::Analytic => match &line.curve {
            Curve::Spline(_) => {
                return Err(Error::invalid(
                    "analytic frame requested for a sampled spline; use rotation_minimizing",
                ))
            }
            Curve::Straight { d, .. } => {
                ff.fixed_n1 = Some(pick(d)?);
                ff.orientation = "constant transverse reference";
            }
            _ => ff.orientation = "inward normal (toward centre of curvature)",
        },
        FrameMethod::RotationMinimizing => {
            if spec.nodes < 2 {
                return Err(Error::invalid("rotation-minimizing frame needs at least 2 nodes"));
            }
            let n0 = if reference.is_none() && k0.norm() > 1e-12 {
                ff.orientation = "rotation-minimizing, starting at the inward normal";
                k0.normalize()
            } else {
                ff.orientation = "rotation-minimizing, starting at the reference";
                pick(&t0)?
            };
            ff.rmf_grid = quad::uniform_grid(line.length, spec.nodes - 1);
            let (m0, _, _) = line.eval(0.0);
            ff.rmf.push((m0, t0, n0));
            for k in 1..ff.rmf_grid.len() {
                let (m, t, _) = line.eval(ff.rmf_grid[k]);
                let prev = ff.rmf[k - 1];
                let n = double_reflection(prev, m, t);
                ff.rmf.push((m, t, n));
            }
        }
    }
    Ok(ff)
}

fn double_reflection((x0, t0, r0): (Vec3, Vec3, Vec3), x1: Vec3, t1: Vec3) -> Vec3 {
    let v1 = x1 - x0;
    let c1 = v1.dot(&v1);
    if c1 == 0.0 {
        return r0;
    }
    let rl = r0 - v1 * (2.0 / c1 * v1.dot(&r0));
    let tl = t0 - v1 * (2.0 / c1 * v1.dot(&t0));
    let v2 = t1 - tl;
    let c2 = v2.dot(&v2);
    let r = if c2 == 0.0 { rl } else { rl - v2 * (2.0 / c2 * v2.dot(&rl)) };
    (r - t1 * t1.dot(&r)).normalize()
}

impl FrameField {
    pub fn line(&self) -> &MiddleLine {
        &self.line
    }
    pub fn method(&self) -> FrameMethod {
        self.method
    }
    /// Human-readable orientation convention, recorded in outputs.
    pub fn orientation(&self) -> &'static str {
        self.orientation
    }

    pub fn at(&self, s: f64) -> FramePoint {
        let (m, t, dt) = self.line.eval(s);
        let n1 = match (self.method, &self.line.curve) {
            (FrameMethod::Analytic, Curve::Straight { .. }) => self.fixed_n1.unwrap(),
            (FrameMethod::Analytic, Curve::Arc { c, .. }) => {
                let mut v = c - m;
                v.z = 0.0;
                v.normalize()
            }
            (FrameMethod::Analytic, _) => dt.normalize(),
            (FrameMethod::RotationMinimizing, _) => {
                let k = quad::locate(&self.rmf_grid, s);
                if s == self.rmf_grid[k] {
                    self.rmf[k].2
                } else {
                    double_reflection(self.rmf[k], m, t)
                }
            }
        };
        let n2 = t.cross(&n1);
        let tau = match self.method {
            FrameMethod::Analytic => self.line.frenet_torsion(),
            FrameMethod::RotationMinimizing => 0.0,
        };
        let dn1 = -t * dt.dot(&n1) + n2 * tau;
        let dn2 = -t * dt.dot(&n2) - n1 * tau;
        FramePoint { m, frame: Frame { t, n1, n2 }, dt, dn1, dn2 }
    }

    pub fn frame(&self, s: f64) -> Frame {
        self.at(s).frame
    }
}

/// Chart `Φ` of the rod of section scale `δ`.
#[derive(Debug, Clone)]
pub struct RodChart {
    frame: FrameField,
    section: Arc<CrossSection>,
    delta: f64,
    delta0: f64,
}

impl RodChart {
    /// Builds the chart and enforces `δ ≤ δ₀ = 0.9/(κ_max · r_max)`.
    pub fn new(frame: FrameField, section: Arc<CrossSection>, delta: f64) -> Result<Self> {
        positive(delta, "delta")?;
        let kmax = frame.line.max_curvature;
        let rmax = section.max_radius();
        let delta0 = if kmax * rmax > 0.0 { 0.9 / (kmax * rmax) } else { f64::INFINITY };
        if delta > delta0 {
            return Err(Error::invalid(format!(
                "delta {delta} exceeds delta0 = {delta0:.6} (geometry too thick)"
            )));
        }
        let chart = RodChart { frame, section, delta, delta0 };
        chart.check_injective()?;
        Ok(chart)
    }

    /// Coarse global injectivity check: distant parts of the line must stay
    /// further apart than the rod thickness.
    fn check_injective(&self) -> Result<()> {
        let l = self.length();
        let r = self.delta * self.section.max_radius();
        let n = 200;
        let pts: Vec<(f64, Vec3)> =
            (0..=n).map(|k| l * k as f64 / n as f64).map(|s| (s, self.frame.line.point(s))).collect();
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let ds = pts[j].0 - pts[i].0;
                if ds > 4.0 * r && (pts[j].1 - pts[i].1).norm() <= 2.0 * r {
                    return Err(Error::invalid(format!(
                        "chart is not injective: s={} and s={} are closer than the thickness",
                        pts[i].0, pts[j].0
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        RodChart::new(self.frame.clone(), self.section.clone(), delta)
    }

    pub fn frame(&self) -> &FrameField {
        &self.frame
    }
    pub fn line(&self) -> &MiddleLine {
        &self.frame.line
    }
    pub fn section(&self) -> &Arc<CrossSection> {
        &self.section
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn delta0(&self) -> f64 {
        self.delta0
    }
    pub fn length(&self) -> f64 {
        self.frame.line.length
    }

    fn check_domain(&self, s: [f64; 3]) -> Result<()> {
        let l = self.length();
        if !(s[2] >= 0.0 && s[2] <= l) {
            return Err(Error::invalid(format!("s3 = {} outside [0, {l}]", s[2])));
        }
        let p = [s[0] / self.delta, s[1] / self.delta];
        if !self.section.contains(p) {
            return Err(Error::invalid(format!("(s1, s2)/delta = {p:?} outside the section")));
        }
        Ok(())
    }

    /// `Φ(s)` with domain validation.
    pub fn phi(&self, s: [f64; 3]) -> Result<Vec3> {
        self.check_domain(s)?;
        Ok(self.phi_unchecked(s))
    }

    pub fn phi_unchecked(&self, s: [f64; 3]) -> Vec3 {
        let fp = self.frame.at(s[2]);
        fp.m + fp.frame.n1 * s[0] + fp.frame.n2 * s[1]
    }

    /// `det ∇Φ = 1 + s₁ det(n₁|n₂|n₁′) + s₂ det(n₁|n₂|n₂′)`; an error when not positive.
    pub fn jac_det(&self, s: [f64; 3]) -> Result<f64> {
        self.check_domain(s)?;
        let d = jac_det_at(&self.frame.at(s[2]), s[0], s[1]);
        if d <= 0.0 {
            return Err(Error::invalid(format!(
                "det grad Phi = {d} <= 0 at {s:?}: delta exceeds delta0"
            )));
        }
        Ok(d)
    }

    /// `∇Φ = (n₁ | n₂ | t + s₁n₁′ + s₂n₂′)`.
    pub fn grad_phi(&self, s: [f64; 3]) -> crate::Mat3 {
        grad_phi_at(&self.frame.at(s[2]), s[0], s[1])
    }
}

/// `det ∇Φ` from a precomputed frame point.
pub fn jac_det_at(fp: &FramePoint, s1: f64, s2: f64) -> f64 {
    let t = fp.frame.t;
    1.0 + s1 * fp.dn1.dot(&t) + s2 * fp.dn2.dot(&t)
}

/// `∇Φ` from a precomputed frame point.
pub fn grad_phi_at(fp: &FramePoint, s1: f64, s2: f64) -> crate::Mat3 {
    let f = &fp.frame;
    crate::Mat3::from_columns(&[f.n1, f.n2, f.t + fp.dn1 * s1 + fp.dn2 * s2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::section::{build_section, SectionSpec};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn straight_z(l: f64) -> MiddleLine {
        build_middle_line(&CurveSpec::Straight { start: [0.0; 3], direction: [0.0, 0.0, 1.0], length: l })
            .unwrap()
    }

    fn arc(rho: f64, l: f64) -> MiddleLine {
        build_middle_line(&CurveSpec::CircularArc { radius: rho, length: l, center: [0.0; 3] }).unwrap()
    }

    fn disc() -> Arc<CrossSection> {
        Arc::new(build_section(&SectionSpec::Disc { radius: 1.0 }, 2).unwrap())
    }

    fn fd_check_arclength(line: &MiddleLine, tol: f64) {
        let l = line.length();
        for k in 0..=20 {
            let s = (l * k as f64 / 20.0).clamp(1e-5, l - 1e-5);
            let h = 1e-6;
            let d = (line.point(s + h) - line.point(s - h)) / (2.0 * h);
            assert!((d.norm() - 1.0).abs() < tol, "|M'| = {} at {s}", d.norm());
            assert!((d - line.tangent(s)).norm() < 1e-6);
            let dt = (line.tangent(s + h) - line.tangent(s - h)) / (2.0 * h);
            assert!((dt - line.eval(s).2).norm() < 1e-5 * (1.0 + dt.norm()));
        }
    }

    #[test]
    fn straight_segment() {
        let line = build_middle_line(&CurveSpec::Straight {
            start: [1.0, 2.0, 3.0],
            direction: [0.0, 3.0, 4.0],
            length: 2.0,
        })
        .unwrap();
        let p = line.point(1.5);
        assert!((p - Vec3::new(1.0, 2.0 + 0.9, 3.0 + 1.2)).norm() < 1e-15);
        assert_eq!(line.tangent(0.2), line.tangent(1.9));
    }

    #[test]
    fn circle_and_helix_are_unit_speed() {
        let c = arc(2.0, 5.0);
        fd_check_arclength(&c, 1e-8);
        for k in 0..10 {
            assert!((c.eval(0.5 * k as f64).2.norm() - 0.5).abs() < 1e-14);
        }
        let h = build_middle_line(&CurveSpec::Helix { radius: 1.0, rise: 0.3, length: 8.0 }).unwrap();
        fd_check_arclength(&h, 1e-8);
        assert!((h.max_curvature() - 1.0 / 1.09).abs() < 1e-14);
    }

    #[test]
    fn spline_reparametrization() {
        let pts: Vec<[f64; 3]> = (0..9)
            .map(|i| {
                let u = i as f64 * 0.4;
                [u.cos(), u.sin(), 0.3 * u]
            })
            .collect();
        let line = build_middle_line(&CurveSpec::Spline { points: pts }).unwrap();
        fd_check_arclength(&line, 1e-8);
        assert!((line.point(line.length()) - Vec3::new(3.2f64.cos(), 3.2f64.sin(), 0.96)).norm() < 1e-12);
    }

    #[test]
    fn invalid_curves_rejected() {
        assert!(build_middle_line(&CurveSpec::Spline { points: vec![[0.0; 3]; 3] }).is_err());
        let dup = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 1.0, 0.0]];
        assert!(build_middle_line(&CurveSpec::Spline { points: dup }).is_err());
        let cross = vec![[0.0, 0.0, 0.0], [2.0, 2.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]];
        assert!(build_middle_line(&CurveSpec::Spline { points: cross }).is_err());
        let closed = CurveSpec::CircularArc { radius: 1.0, length: 7.0, center: [0.0; 3] };
        assert!(build_middle_line(&closed).is_err());
        let zero = CurveSpec::Straight { start: [0.0; 3], direction: [0.0; 3], length: 1.0 };
        assert!(build_middle_line(&zero).is_err());
    }

    #[test]
    fn frames() {
        let f = build_frame(&straight_z(1.0), &FrameSpec::default()).unwrap();
        let fr = f.frame(0.3);
        assert_eq!((fr.n1, fr.n2, fr.t), (Vec3::x(), Vec3::y(), Vec3::z()));

        let c = arc(1.0, 3.0);
        let f = build_frame(&c, &FrameSpec::default()).unwrap();
        for k in 0..10 {
            let s = 0.3 * k as f64;
            let fp = f.at(s);
            let inward = (Vec3::zeros() - fp.m).normalize();
            assert!((fp.frame.n1 - inward).norm() < 1e-14);
            assert!((fp.frame.n2 - Vec3::z()).norm() < 1e-14);
        }

        let rmf = FrameSpec { method: FrameMethod::RotationMinimizing, ..FrameSpec::default() };
        let f = build_frame(&straight_z(2.0), &rmf).unwrap();
        for k in 0..10 {
            assert!((f.frame(0.2 * k as f64).n1 - Vec3::x()).norm() < 1e-12);
        }
        let f = build_frame(&c, &rmf).unwrap();
        for k in 0..10 {
            let fp = f.at(0.29 * k as f64);
            assert!((fp.frame.n1 - (-fp.m).normalize()).norm() < 1e-10);
        }
    }

    #[test]
    fn analytic_frame_rejected_for_spline() {
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.2, 0.0], [2.0, 0.0, 0.1], [3.0, 0.3, 0.0]];
        let line = build_middle_line(&CurveSpec::Spline { points: pts }).unwrap();
        assert!(build_frame(&line, &FrameSpec::default()).is_err());
        let rmf = FrameSpec { method: FrameMethod::RotationMinimizing, ..FrameSpec::default() };
        let f = build_frame(&line, &rmf).unwrap();
        for k in 0..=10 {
            let fr = f.frame(line.length() * k as f64 / 10.0);
            assert!((fr.n1.norm() - 1.0).abs() < 1e-10 && fr.t.dot(&fr.n1).abs() < 1e-10);
            assert!((fr.n2 - fr.t.cross(&fr.n1)).norm() < 1e-10);
        }
    }

    #[test]
    fn chart_evaluation() {
        let sec = disc();
        let f = build_frame(&straight_z(1.0), &FrameSpec::default()).unwrap();
        let ch = RodChart::new(f, sec.clone(), 0.1).unwrap();
        let p = ch.phi([0.03, -0.02, 0.4]).unwrap();
        assert!((p - Vec3::new(0.03, -0.02, 0.4)).norm() < 1e-15);
        assert_eq!(ch.jac_det([0.05, 0.0, 0.5]).unwrap(), 1.0);
        assert!(ch.phi([0.2, 0.0, 0.5]).is_err());
        assert!(ch.phi([0.0, 0.0, 1.5]).is_err());

        let f = build_frame(&arc(1.0, 2.0), &FrameSpec::default()).unwrap();
        let ch = RodChart::new(f, sec.clone(), 0.2).unwrap();
        let p = ch.phi([0.1, 0.0, 0.0]).unwrap();
        assert!((p - Vec3::new(0.9, 0.0, 0.0)).norm() < 1e-15);
        // inward n₁: sections shrink toward the centre
        let d = ch.jac_det([0.1, 0.05, 1.0]).unwrap();
        assert!((d - (1.0 - 0.1)).abs() < 1e-14);
        assert!(RodChart::new(ch.frame().clone(), sec, 0.95).is_err());
    }

    fn fd_det(ch: &RodChart, s: [f64; 3]) -> f64 {
        let h = 1e-6;
        let mut cols = vec![];
        for i in 0..3 {
            let mut a = s;
            let mut b = s;
            a[i] += h;
            b[i] -= h;
            cols.push((ch.phi_unchecked(a) - ch.phi_unchecked(b)) / (2.0 * h));
        }
        crate::Mat3::from_columns(&cols).determinant()
    }

    #[test]
    fn jac_det_matches_finite_differences_on_helix_rmf() {
        let h = build_middle_line(&CurveSpec::Helix { radius: 1.0, rise: 0.4, length: 5.0 }).unwrap();
        for method in [FrameMethod::Analytic, FrameMethod::RotationMinimizing] {
            let f = build_frame(&h, &FrameSpec { method, ..FrameSpec::default() }).unwrap();
            let ch = RodChart::new(f, disc(), 0.3).unwrap();
            for k in 1..10 {
                let s = [0.2 * (k as f64 * 0.7).sin(), 0.2 * (k as f64).cos(), 0.5 * k as f64];
                let d = ch.jac_det(s).unwrap();
                assert!((d - fd_det(&ch, s)).abs() < 1e-6, "{method:?}");
                assert!((d - ch.grad_phi(s).determinant()).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn prop_jac_det_random_arcs(rho in 0.5..4.0f64, frac in 0.1..0.75f64, s1 in -0.3..0.3f64, s2 in -0.3..0.3f64, u in 0.05..0.95f64) {
            let line = arc(rho, 2.0 * PI * rho * frac);
            let f = build_frame(&line, &FrameSpec::default()).unwrap();
            let delta = 0.3 * rho;
            let ch = RodChart::new(f, disc(), delta).unwrap();
            let s = [s1 * delta, s2 * delta, u * line.length()];
            let d = ch.jac_det(s).unwrap();
            prop_assert!((d - fd_det(&ch, s)).abs() < 1e-6);
            prop_assert!((d - (1.0 - s[0] / rho)).abs() < 1e-12);
        }
    }
}
