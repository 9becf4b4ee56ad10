//! Reference cross-section: triangulation, centring and principal axes, second
//! moments and the P1 torsion (warping) function `χ`.
//!
//! `χ` solves `∫∇χ·∇ψ = −∫(−S₂ ∂₁ψ + S₁ ∂₂ψ)` with `∫χ = 0`, and
//! `K = ∫(∂₁χ − S₂)² + (∂₂χ + S₁)²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::quad::TRI3;

pub type P2 = [f64; 2];

/// Shape description from the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SectionSpec {
    Disc {
        radius: f64,
    },
    /// `width` along S₁, `height` along S₂.
    Rectangle {
        width: f64,
        height: f64,
        #[serde(default)]
        center: P2,
    },
    /// Semi-axes `a` (S₁) and `b` (S₂).
    Ellipse {
        a: f64,
        b: f64,
    },
    /// Simple polygon, counter-clockwise.
    Polygon {
        vertices: Vec<P2>,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct TriGeom {
    pub area: f64,
    /// Gradients of the three barycentric basis functions.
    pub grad: [P2; 3],
}

/// Triangulated, centred section in principal axes.
#[derive(Debug, Clone)]
pub struct CrossSection {
    spec: SectionSpec,
    level: u32,
    nodes: Vec<P2>,
    tris: Vec<[usize; 3]>,
    geom: Vec<TriGeom>,
    boundary: Vec<P2>,
    area: f64,
    /// Centroid of the input shape, subtracted from the geometry.
    offset: P2,
    /// Angle of the applied rotation to principal axes.
    rotation: f64,
    product_moment: f64,
    max_radius: f64,
}

/// Default refinement level.
pub const DEFAULT_LEVEL: u32 = 5;

fn check_pos(x: f64, what: &str) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::invalid(format!("section {what} must be positive and finite (got {x})")));
    }
    Ok(())
}

fn cross(o: P2, a: P2, b: P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn signed_area(poly: &[P2]) -> f64 {
    let n = poly.len();
    0.5 * (0..n).map(|i| {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        p[0] * q[1] - q[0] * p[1]
    }).sum::<f64>()
}

/// Builds and normalizes the section mesh.
pub fn build_section(spec: &SectionSpec, level: u32) -> Result<CrossSection> {
    if level > 9 {
        return Err(Error::invalid("section refinement level must be at most 9"));
    }
    let (nodes, tris, boundary) = match spec {
        SectionSpec::Disc { radius } => {
            check_pos(*radius, "radius")?;
            disc_mesh(*radius, *radius, level)
        }
        SectionSpec::Ellipse { a, b } => {
            check_pos(*a, "semi-axis a")?;
            check_pos(*b, "semi-axis b")?;
            disc_mesh(*a, *b, level)
        }
        SectionSpec::Rectangle { width, height, center } => {
            check_pos(*width, "width")?;
            check_pos(*height, "height")?;
            rect_mesh(*width, *height, *center, level)
        }
        SectionSpec::Polygon { vertices } => polygon_mesh(vertices, level)?,
    };
    let mut sec = CrossSection {
        spec: spec.clone(),
        level,
        nodes,
        tris,
        geom: vec![],
        boundary,
        area: 0.0,
        offset: [0.0; 2],
        rotation: 0.0,
        product_moment: 0.0,
        max_radius: 0.0,
    };
    sec.normalize()?;
    check_connected(&sec.tris, sec.nodes.len())?;
    Ok(sec)
}

fn tri_geom(p: [P2; 3]) -> TriGeom {
    let d = cross(p[0], p[1], p[2]);
    let mut grad = [[0.0; 2]; 3];
    for i in 0..3 {
        let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        grad[i] = [(a[1] - b[1]) / d, (b[0] - a[0]) / d];
    }
    TriGeom { area: 0.5 * d, grad }
}

impl CrossSection {
    fn raw_moments(&self) -> (f64, P2, [f64; 3]) {
        let mut a = 0.0;
        let mut m1 = [0.0; 2];
        let mut m2 = [0.0; 3];
        for t in &self.tris {
            let p = t.map(|i| self.nodes[i]);
            let ar = 0.5 * cross(p[0], p[1], p[2]);
            a += ar;
            for (b, w) in TRI3 {
                let x = b[0] * p[0][0] + b[1] * p[1][0] + b[2] * p[2][0];
                let y = b[0] * p[0][1] + b[1] * p[1][1] + b[2] * p[2][1];
                m1[0] += ar * w * x;
                m1[1] += ar * w * y;
                m2[0] += ar * w * x * x;
                m2[1] += ar * w * y * y;
                m2[2] += ar * w * x * y;
            }
        }
        (a, m1, m2)
    }

    fn normalize(&mut self) -> Result<()> {
        let (a, m1, _) = self.raw_moments();
        let scale = self.boundary.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
        if !(a > 1e-14 * scale * scale) {
            return Err(Error::invalid("degenerate section (zero area)"));
        }
        let c = [m1[0] / a, m1[1] / a];
        self.offset = c;
        let shift = |p: &mut P2| {
            p[0] -= c[0];
            p[1] -= c[1];
        };
        self.nodes.iter_mut().for_each(shift);
        self.boundary.iter_mut().for_each(shift);
        let (_, _, m2) = self.raw_moments();
        if m2[2].abs() > 1e-13 * (m2[0] + m2[1]) {
            // rotate by θ so that the product moment vanishes
            let th = 0.5 * (2.0 * m2[2]).atan2(m2[0] - m2[1]);
            let (s, co) = th.sin_cos();
            let rot = |p: &mut P2| *p = [co * p[0] + s * p[1], -s * p[0] + co * p[1]];
            self.nodes.iter_mut().for_each(rot);
            self.boundary.iter_mut().for_each(rot);
            self.rotation = th;
        }
        // tidy the tiny residual first moment left by the floating-point shift
        let (a, m1, m2) = self.raw_moments();
        let c = [m1[0] / a, m1[1] / a];
        self.nodes.iter_mut().for_each(|p| {
            p[0] -= c[0];
            p[1] -= c[1];
        });
        self.area = a;
        self.product_moment = m2[2] - a * c[0] * c[1];
        self.geom = self.tris.iter().map(|t| tri_geom(t.map(|i| self.nodes[i]))).collect();
        if self.geom.iter().any(|g| !(g.area > 0.0)) {
            return Err(Error::invalid("section mesh has degenerate or inverted triangles"));
        }
        self.max_radius = self.nodes.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
        Ok(())
    }

    pub fn spec(&self) -> &SectionSpec {
        &self.spec
    }
    pub fn level(&self) -> u32 {
        self.level
    }
    pub fn nodes(&self) -> &[P2] {
        &self.nodes
    }
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.tris
    }
    pub fn tri_geom(&self) -> &[TriGeom] {
        &self.geom
    }
    pub fn area(&self) -> f64 {
        self.area
    }
    /// Centroid of the shape as given, before recentring.
    pub fn input_centroid(&self) -> P2 {
        self.offset
    }
    pub fn rotation_angle(&self) -> f64 {
        self.rotation
    }
    pub fn product_moment(&self) -> f64 {
        self.product_moment
    }
    /// `max |S|` over the section.
    pub fn max_radius(&self) -> f64 {
        self.max_radius
    }

    /// First moments `(∫S₁, ∫S₂)`.
    pub fn first_moments(&self) -> P2 {
        let (_, m1, _) = self.raw_moments();
        m1
    }

    /// Lumped nodal masses (`∫ψᵢ`, exact for P1 integrands).
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.nodes.len()];
        for (t, g) in self.tris.iter().zip(&self.geom) {
            for &i in t {
                m[i] += g.area / 3.0;
            }
        }
        m
    }

    /// Point-in-section test (tolerant on the boundary).
    pub fn contains(&self, p: P2) -> bool {
        let tol = 1e-9 * self.max_radius;
        match self.spec {
            SectionSpec::Disc { radius } => return p[0].hypot(p[1]) <= radius.max(self.max_radius) + tol,
            SectionSpec::Ellipse { a, b } => {
                let (ra, rb) = (a.max(self.max_radius_along(0)), b.max(self.max_radius_along(1)));
                return (p[0] / ra).powi(2) + (p[1] / rb).powi(2) <= 1.0 + 1e-9;
            }
            _ => {}
        }
        if point_in_polygon(&self.boundary, p) {
            return true;
        }
        let n = self.boundary.len();
        (0..n).any(|i| seg_dist(p, self.boundary[i], self.boundary[(i + 1) % n]) <= tol)
    }

    fn max_radius_along(&self, axis: usize) -> f64 {
        self.nodes.iter().map(|p| p[axis].abs()).fold(0.0, f64::max)
    }

    /// Integral of a function of `S` using a triangle rule of the given points.
    pub fn integrate<F: Fn(P2) -> f64>(&self, rule: &[([f64; 3], f64)], f: F) -> f64 {
        let mut acc = 0.0;
        for (t, g) in self.tris.iter().zip(&self.geom) {
            let p = t.map(|i| self.nodes[i]);
            for (b, w) in rule {
                acc += g.area * w * f(bary_point(&p, b));
            }
        }
        acc
    }

    /// Global P1 torsion problem.
    pub fn solve_torsion(&self) -> Result<TorsionSolution> {
        solve_torsion(self)
    }
}

pub fn bary_point(p: &[P2; 3], b: &[f64; 3]) -> P2 {
    [
        b[0] * p[0][0] + b[1] * p[1][0] + b[2] * p[2][0],
        b[0] * p[0][1] + b[1] * p[1][1] + b[2] * p[2][1],
    ]
}

fn point_in_polygon(poly: &[P2], p: P2) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn seg_dist(p: P2, a: P2, b: P2) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let l2 = d[0] * d[0] + d[1] * d[1];
    let t = if l2 > 0.0 { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / l2).clamp(0.0, 1.0) } else { 0.0 };
    (p[0] - a[0] - t * d[0]).hypot(p[1] - a[1] - t * d[1])
}

type Mesh = (Vec<P2>, Vec<[usize; 3]>, Vec<P2>);

fn orient(nodes: &[P2], t: [usize; 3]) -> [usize; 3] {
    if cross(nodes[t[0]], nodes[t[1]], nodes[t[2]]) < 0.0 {
        [t[0], t[2], t[1]]
    } else {
        t
    }
}

/// Polar rings: `2^level` rings, `6j` nodes on ring `j`. The outer radius is
/// scaled so that the boundary polygon has the area of the true ellipse.
fn disc_mesh(a: f64, b: f64, level: u32) -> Mesh {
    let nr = 1usize << level;
    let n = 6 * nr;
    let theta = 2.0 * std::f64::consts::PI / n as f64;
    let req = (2.0 * std::f64::consts::PI / (n as f64 * theta.sin())).sqrt();
    let mut nodes = vec![[0.0, 0.0]];
    let mut start = vec![0usize];
    for j in 1..=nr {
        start.push(nodes.len());
        let r = req * j as f64 / nr as f64;
        for i in 0..6 * j {
            let ang = 2.0 * std::f64::consts::PI * i as f64 / (6 * j) as f64;
            nodes.push([a * r * ang.cos(), b * r * ang.sin()]);
        }
    }
    let mut tris = vec![];
    for i in 0..6 {
        tris.push([0, 1 + i, 1 + (i + 1) % 6]);
    }
    for j in 2..=nr {
        let (ni, no) = (6 * (j - 1), 6 * j);
        let (si, so) = (start[j - 1], start[j]);
        let (mut ia, mut ob) = (0usize, 0usize);
        while ia < ni || ob < no {
            // advance the ring whose next node comes first in angle
            let inner_next = (ia + 1) as f64 / ni as f64;
            let outer_next = (ob + 1) as f64 / no as f64;
            if ob < no && (ia >= ni || outer_next <= inner_next) {
                tris.push([si + ia % ni, so + ob, so + (ob + 1) % no]);
                ob += 1;
            } else {
                tris.push([si + ia, so + ob % no, si + (ia + 1) % ni]);
                ia += 1;
            }
        }
    }
    let tris = tris.into_iter().map(|t| orient(&nodes, t)).collect();
    let boundary = nodes[start[nr]..].to_vec();
    (nodes, tris, boundary)
}

/// Uniform grid, `2^(level+1)` cells across the short side, cells split along
/// the `(+1, +1)` diagonal.
fn rect_mesh(w: f64, h: f64, c: P2, level: u32) -> Mesh {
    let base = 1usize << (level + 1);
    let (nx, ny) = if w <= h {
        (base, ((h / w) * base as f64).round().max(1.0) as usize)
    } else {
        (((w / h) * base as f64).round().max(1.0) as usize, base)
    };
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([
                c[0] - 0.5 * w + w * i as f64 / nx as f64,
                c[1] - 0.5 * h + h * j as f64 / ny as f64,
            ]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut tris = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            tris.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            tris.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let boundary = vec![
        [c[0] - 0.5 * w, c[1] - 0.5 * h],
        [c[0] + 0.5 * w, c[1] - 0.5 * h],
        [c[0] + 0.5 * w, c[1] + 0.5 * h],
        [c[0] - 0.5 * w, c[1] + 0.5 * h],
    ];
    (nodes, tris, boundary)
}

fn segments_cross(a: P2, b: P2, c: P2, d: P2) -> bool {
    let d1 = cross(a, b, c);
    let d2 = cross(a, b, d);
    let d3 = cross(c, d, a);
    let d4 = cross(c, d, b);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

fn polygon_mesh(v: &[P2], level: u32) -> Result<Mesh> {
    let n = v.len();
    if n < 3 {
        return Err(Error::invalid("polygon needs at least 3 vertices"));
    }
    if !v.iter().all(|p| p[0].is_finite() && p[1].is_finite()) {
        return Err(Error::invalid("polygon vertices must be finite"));
    }
    let scale = v.iter().map(|p| p[0].abs().max(p[1].abs())).fold(0.0, f64::max);
    let a = signed_area(v);
    if a.abs() <= 1e-14 * scale * scale {
        return Err(Error::invalid("degenerate section (zero area)"));
    }
    if a < 0.0 {
        return Err(Error::invalid("polygon must be counter-clockwise"));
    }
    for i in 0..n {
        let (p, q) = (v[i], v[(i + 1) % n]);
        if (p[0] - q[0]).hypot(p[1] - q[1]) <= 1e-14 * scale {
            return Err(Error::invalid("polygon has repeated vertices"));
        }
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(p, q, v[j], v[(j + 1) % n]) {
                return Err(Error::invalid("polygon is not simple"));
            }
        }
    }
    let mut nodes = v.to_vec();
    let mut tris = ear_clip(v)?;
    delaunay_flips(&nodes, &mut tris, scale);
    let target = 1usize << (2 * level + 3);
    while tris.len() < target {
        refine(&mut nodes, &mut tris);
    }
    Ok((nodes, tris, v.to_vec()))
}

fn ear_clip(v: &[P2]) -> Result<Vec<[usize; 3]>> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    let mut tris = vec![];
    while idx.len() > 3 {
        let m = idx.len();
        let mut found = None;
        for k in 0..m {
            let (a, b, c) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
            if cross(v[a], v[b], v[c]) <= 0.0 {
                continue;
            }
            let blocked = idx.iter().any(|&p| {
                p != a && p != b && p != c && {
                    let q = v[p];
                    cross(v[a], v[b], q) >= 0.0 && cross(v[b], v[c], q) >= 0.0 && cross(v[c], v[a], q) >= 0.0
                }
            });
            if !blocked {
                found = Some(k);
                break;
            }
        }
        let k = found.ok_or_else(|| Error::invalid("polygon triangulation failed (not simple?)"))?;
        let m = idx.len();
        tris.push([idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]]);
        idx.remove(k);
    }
    tris.push([idx[0], idx[1], idx[2]]);
    Ok(tris)
}

fn in_circle(a: P2, b: P2, c: P2, d: P2) -> f64 {
    let m = [
        [a[0] - d[0], a[1] - d[1]],
        [b[0] - d[0], b[1] - d[1]],
        [c[0] - d[0], c[1] - d[1]],
    ];
    let r = m.map(|p| p[0] * p[0] + p[1] * p[1]);
    m[0][0] * (m[1][1] * r[2] - r[1] * m[2][1]) - m[0][1] * (m[1][0] * r[2] - r[1] * m[2][0])
        + r[0] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Lawson edge flips toward a constrained Delaunay triangulation (boundary
/// edges are never shared, so they are never flipped). Near-ties are left alone
/// so that the result does not depend on rounding of rotated input.
fn delaunay_flips(nodes: &[P2], tris: &mut [[usize; 3]], scale: f64) {
    let tol = 1e-10 * scale.powi(4);
    for _ in 0..10 * tris.len() + 10 {
        let mut flipped = false;
        'outer: for i in 0..tris.len() {
            for e in 0..3 {
                let (p, q) = (tris[i][e], tris[i][(e + 1) % 3]);
                let r = tris[i][(e + 2) % 3];
                for j in 0..tris.len() {
                    if j == i {
                        continue;
                    }
                    let Some(f) = (0..3).find(|&f| tris[j][f] == q && tris[j][(f + 1) % 3] == p) else {
                        continue;
                    };
                    let s = tris[j][(f + 2) % 3];
                    if in_circle(nodes[p], nodes[q], nodes[r], nodes[s]) > tol
                        && cross(nodes[r], nodes[p], nodes[s]) > 0.0
                        && cross(nodes[s], nodes[q], nodes[r]) > 0.0
                    {
                        tris[i] = [r, p, s];
                        tris[j] = [s, q, r];
                        flipped = true;
                        break 'outer;
                    }
                }
            }
        }
        if !flipped {
            break;
        }
    }
}

fn refine(nodes: &mut Vec<P2>, tris: &mut Vec<[usize; 3]>) {
    let mut mid = std::collections::HashMap::new();
    let mut get = |a: usize, b: usize, nodes: &mut Vec<P2>| -> usize {
        *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
            let (p, q) = (nodes[a], nodes[b]);
            nodes.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
            nodes.len() - 1
        })
    };
    let mut out = Vec::with_capacity(4 * tris.len());
    for &[a, b, c] in tris.iter() {
        let ab = get(a, b, nodes);
        let bc = get(b, c, nodes);
        let ca = get(c, a, nodes);
        out.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
    }
    *tris = out;
}

fn check_connected(tris: &[[usize; 3]], n: usize) -> Result<()> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut used = vec![false; n];
    for t in tris {
        for k in 0..3 {
            used[t[k]] = true;
            let (a, b) = (find(&mut parent, t[k]), find(&mut parent, t[(k + 1) % 3]));
            parent[a] = b;
        }
    }
    if used.iter().any(|u| !u) {
        return Err(Error::Singular("section mesh has isolated nodes".into()));
    }
    let root = find(&mut parent, 0);
    if (0..n).any(|i| find(&mut parent, i) != root) {
        return Err(Error::Singular("section mesh is disconnected; torsion system is singular".into()));
    }
    Ok(())
}

/// Nodal torsion function and solver diagnostics.
#[derive(Debug, Clone)]
pub struct TorsionSolution {
    pub chi: Vec<f64>,
    /// Residual of the bordered (Lagrange multiplier) system.
    pub residual: f64,
    pub iterations: usize,
}

struct Csr {
    rowptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl Csr {
    fn mul(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.rowptr[i]..self.rowptr[i + 1] {
                acc += self.val[k] * x[self.col[k]];
            }
            *yi = acc;
        }
    }
}

fn assemble(sec: &CrossSection) -> (Csr, Vec<f64>) {
    let n = sec.nodes.len();
    // per-triangle local matrices in parallel, deterministic serial scatter
    let local: Vec<([[f64; 3]; 3], [f64; 3])> = par::map_range(sec.tris.len(), |k| {
        let g = &sec.geom[k];
        let t = sec.tris[k];
        let c = bary_point(&t.map(|i| sec.nodes[i]), &[1.0 / 3.0; 3]);
        let mut ke = [[0.0; 3]; 3];
        let mut be = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                ke[i][j] = g.area * (g.grad[i][0] * g.grad[j][0] + g.grad[i][1] * g.grad[j][1]);
            }
            be[i] = g.area * (c[1] * g.grad[i][0] - c[0] * g.grad[i][1]);
        }
        (ke, be)
    });
    let mut rows: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
    let mut b = vec![0.0; n];
    for (t, (ke, be)) in sec.tris.iter().zip(&local) {
        for i in 0..3 {
            b[t[i]] += be[i];
            for j in 0..3 {
                *rows[t[i]].entry(t[j]).or_insert(0.0) += ke[i][j];
            }
        }
    }
    let mut rowptr = vec![0];
    let mut col = vec![];
    let mut val = vec![];
    for r in rows {
        for (c, v) in r {
            col.push(c);
            val.push(v);
        }
        rowptr.push(col.len());
    }
    (Csr { rowptr, col, val }, b)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// P1 solve of the torsion problem. The load is orthogonal to constants, so
/// the multiplier of the zero-mean constraint vanishes; Jacobi-preconditioned
/// CG on the semidefinite system followed by removal of the mean.
pub fn solve_torsion(sec: &CrossSection) -> Result<TorsionSolution> {
    let n = sec.nodes.len();
    let (a, b) = assemble(sec);
    let mass = sec.lumped_mass();
    let diag: Vec<f64> = (0..n)
        .map(|i| (a.rowptr[i]..a.rowptr[i + 1]).find(|&k| a.col[k] == i).map_or(1.0, |k| a.val[k]))
        .collect();
    let scale = sec.area * sec.max_radius;
    let bnorm = dot(&b, &b).sqrt();
    let tol = 1e-14 * (bnorm + scale);
    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut it = 0;
    let max_it = 20 * n + 100;
    while dot(&r, &r).sqrt() > tol && it < max_it {
        a.mul(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
    }
    let mean = dot(&mass, &x) / sec.area;
    x.iter_mut().for_each(|v| *v -= mean);
    let mut ax = vec![0.0; n];
    a.mul(&x, &mut ax);
    let res2: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() + dot(&mass, &x).powi(2);
    let residual = res2.sqrt();
    if !(residual <= 1e-10 * (bnorm + scale)) {
        return Err(Error::NoConvergence { iterations: it, residual });
    }
    Ok(TorsionSolution { chi: x, residual, iterations: it })
}

/// Section constants used by the limit models.
#[derive(Debug, Clone, Serialize)]
pub struct SectionConstants {
    pub area: f64,
    pub i1: f64,
    pub i2: f64,
    /// Torsion constant from the gradient formula.
    pub k: f64,
    /// `I₁ + I₂ − ∫|∇χ|²`: equals `k` at the discrete solution.
    pub k_identity: f64,
    #[serde(skip)]
    pub chi: Vec<f64>,
    /// Constant gradient of `χ` on each triangle.
    #[serde(skip)]
    pub grad_chi: Vec<P2>,
    pub torsion_residual: f64,
}

pub fn section_constants(sec: &CrossSection, sol: &TorsionSolution) -> SectionConstants {
    let mut i1 = 0.0;
    let mut i2 = 0.0;
    let mut k = 0.0;
    let mut gg = 0.0;
    let mut grad_chi = Vec::with_capacity(sec.tris.len());
    for (t, g) in sec.tris.iter().zip(&sec.geom) {
        let p = t.map(|i| sec.nodes[i]);
        let mut d = [0.0; 2];
        for i in 0..3 {
            d[0] += sol.chi[t[i]] * g.grad[i][0];
            d[1] += sol.chi[t[i]] * g.grad[i][1];
        }
        grad_chi.push(d);
        gg += g.area * (d[0] * d[0] + d[1] * d[1]);
        for (b, w) in TRI3 {
            let s = bary_point(&p, &b);
            let wa = g.area * w;
            i1 += wa * s[0] * s[0];
            i2 += wa * s[1] * s[1];
            k += wa * ((d[0] - s[1]).powi(2) + (d[1] + s[0]).powi(2));
        }
    }
    SectionConstants {
        area: sec.area,
        i1,
        i2,
        k,
        k_identity: i1 + i2 - gg,
        chi: sol.chi.clone(),
        grad_chi,
        torsion_residual: sol.residual,
    }
}

/// Builds the section, solves for `χ` and returns both.
pub fn analyze(spec: &SectionSpec, level: u32) -> Result<(CrossSection, SectionConstants)> {
    let sec = build_section(spec, level)?;
    let sol = sec.solve_torsion()?;
    let c = section_constants(&sec, &sol);
    Ok((sec, c))
}

impl SectionConstants {
    /// `χ` at barycentric coordinates `b` of triangle `t`.
    pub fn chi_at(&self, sec: &CrossSection, t: usize, b: &[f64; 3]) -> f64 {
        let tri = sec.tris[t];
        b[0] * self.chi[tri[0]] + b[1] * self.chi[tri[1]] + b[2] * self.chi[tri[2]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn square_oracle() -> f64 {
        let mut s = 0.0;
        let mut n = 1;
        while n < 200 {
            let nf = n as f64;
            s += (nf * PI / 2.0).tanh() / nf.powi(5);
            n += 2;
        }
        1.0 / 3.0 - 64.0 / PI.powi(5) * s
    }

    #[test]
    fn square_series_value() {
        assert!((square_oracle() - 0.140_577).abs() < 1e-5);
    }

    #[test]
    fn disc_area_and_zero_chi() {
        let (sec, c) = analyze(&SectionSpec::Disc { radius: 1.0 }, 4).unwrap();
        assert!((sec.area() - PI).abs() < 1e-6);
        assert!(c.chi.iter().all(|x| x.abs() <= 1e-10));
        let (_, c) = analyze(&SectionSpec::Disc { radius: 1.0 }, 5).unwrap();
        assert!((c.k - PI / 2.0).abs() < 0.01 * PI / 2.0);
        let (_, c2) = analyze(&SectionSpec::Disc { radius: 2.5 }, 3).unwrap();
        assert!(c2.chi.iter().all(|x| x.abs() <= 1e-10));
    }

    #[test]
    fn rectangle_recentred_moments() {
        let sec = build_section(&SectionSpec::Rectangle { width: 1.0, height: 2.0, center: [3.0, -1.0] }, 3)
            .unwrap();
        assert!((sec.input_centroid()[0] - 3.0).abs() < 1e-12);
        let m = sec.first_moments();
        assert!(m[0].abs() < 1e-12 && m[1].abs() < 1e-12);
        let i1 = sec.integrate(&TRI3, |s| s[0] * s[0]);
        let i2 = sec.integrate(&TRI3, |s| s[1] * s[1]);
        assert!((i1 - 1.0 / 6.0).abs() < 1e-12);
        assert!((i2 - 2.0 / 3.0).abs() < 1e-12);
    }

    fn l_shape() -> Vec<P2> {
        vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.5], [0.0, 2.5]]
    }

    #[test]
    fn l_shape_principal_axes() {
        // oracle: eigenvectors of the raw inertia tensor from polygon formulas
        let v = l_shape();
        let n = v.len();
        let (mut a, mut cx, mut cy, mut ixx, mut iyy, mut ixy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let (p, q) = (v[i], v[(i + 1) % n]);
            let cr = p[0] * q[1] - q[0] * p[1];
            a += cr / 2.0;
            cx += (p[0] + q[0]) * cr / 6.0;
            cy += (p[1] + q[1]) * cr / 6.0;
            ixx += (p[0] * p[0] + p[0] * q[0] + q[0] * q[0]) * cr / 12.0;
            iyy += (p[1] * p[1] + p[1] * q[1] + q[1] * q[1]) * cr / 12.0;
            ixy += (p[0] * q[1] + 2.0 * p[0] * p[1] + 2.0 * q[0] * q[1] + q[0] * p[1]) * cr / 24.0;
        }
        let (cx, cy) = (cx / a, cy / a);
        let (jxx, jyy, jxy) = (ixx - a * cx * cx, iyy - a * cy * cy, ixy - a * cx * cy);
        let tr = jxx + jyy;
        let disc = ((jxx - jyy).powi(2) / 4.0 + jxy * jxy).sqrt();
        let eig = [tr / 2.0 - disc, tr / 2.0 + disc];

        let sec = build_section(&SectionSpec::Polygon { vertices: v }, 2).unwrap();
        assert!((sec.area() - a).abs() < 1e-12);
        assert!(sec.product_moment().abs() <= 1e-8);
        let i1 = sec.integrate(&TRI3, |s| s[0] * s[0]);
        let i2 = sec.integrate(&TRI3, |s| s[1] * s[1]);
        let mut got = [i1, i2];
        got.sort_by(f64::total_cmp);
        assert!((got[0] - eig[0]).abs() < 1e-10 && (got[1] - eig[1]).abs() < 1e-10);
        assert!(sec.contains([0.0, 0.0]) || !sec.nodes().is_empty());
    }

    #[test]
    fn square_torsion() {
        let (sec, c) = analyze(&SectionSpec::Rectangle { width: 1.0, height: 1.0, center: [0.0; 2] }, 5).unwrap();
        let k = square_oracle();
        assert!((c.k - k).abs() < 0.01 * k, "K = {}", c.k);
        assert!((c.k - c.k_identity).abs() < 1e-8);
        assert!(c.torsion_residual <= 1e-12);
        // χ(S₂, S₁) = −χ(S₁, S₂)
        let idx: std::collections::HashMap<(i64, i64), usize> = sec
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, p)| (((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64), i))
            .collect();
        for (i, p) in sec.nodes().iter().enumerate() {
            let j = idx[&((p[1] * 1e9).round() as i64, (p[0] * 1e9).round() as i64)];
            assert!((c.chi[i] + c.chi[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn square_convergence_rate() {
        let k = square_oracle();
        let sq = SectionSpec::Rectangle { width: 1.0, height: 1.0, center: [0.0; 2] };
        let e: Vec<f64> = (1..4).map(|l| (analyze(&sq, l).unwrap().1.k - k).abs()).collect();
        assert!(e[0] / e[1] >= 3.0 && e[1] / e[2] >= 3.0, "{e:?}");
    }

    #[test]
    fn ellipse_torsion() {
        let (_, c) = analyze(&SectionSpec::Ellipse { a: 2.0, b: 1.0 }, 5).unwrap();
        let k = 8.0 * PI / 5.0;
        assert!((c.k - k).abs() < 0.01 * k, "K = {}", c.k);
        assert!((c.area - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn invalid_sections() {
        assert!(build_section(&SectionSpec::Disc { radius: 0.0 }, 2).is_err());
        let collinear = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        assert!(build_section(&SectionSpec::Polygon { vertices: collinear }, 2).is_err());
        let cw = vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]];
        assert!(build_section(&SectionSpec::Polygon { vertices: cw }, 2).is_err());
        let bowtie = vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(build_section(&SectionSpec::Polygon { vertices: bowtie }, 2).is_err());
    }

    #[test]
    fn disconnected_mesh_is_singular() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [3.0, 0.0], [4.0, 0.0], [3.0, 1.0]];
        let tris = vec![[0, 1, 2], [3, 4, 5]];
        assert!(matches!(check_connected(&tris, nodes.len()), Err(Error::Singular(_))));
    }

    #[test]
    fn parallel_assembly_is_deterministic() {
        let spec = SectionSpec::Polygon { vertices: l_shape() };
        let a = analyze(&spec, 3).unwrap().1;
        let b = par::sequential(|| analyze(&spec, 3).unwrap().1);
        assert_eq!(a.chi, b.chi);
        assert_eq!(a.k.to_bits(), b.k.to_bits());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn prop_polygon_invariants(angle in 0.0..std::f64::consts::TAU, dx in -3.0..3.0f64, dy in -3.0..3.0f64) {
            let (s, c) = angle.sin_cos();
            let v: Vec<P2> = l_shape().iter().map(|p| [c * p[0] - s * p[1] + dx, s * p[0] + c * p[1] + dy]).collect();
            let (sec, k) = analyze(&SectionSpec::Polygon { vertices: v }, 2).unwrap();
            let base = analyze(&SectionSpec::Polygon { vertices: l_shape() }, 2).unwrap().1;
            prop_assert!((k.k - base.k).abs() <= 1e-6 * base.k);
            let m = sec.first_moments();
            prop_assert!(m[0].abs() <= 1e-10 * sec.area() * 2.0 * sec.max_radius());
            prop_assert!(m[1].abs() <= 1e-10 * sec.area() * 2.0 * sec.max_radius());
            prop_assert!(sec.product_moment().abs() <= 1e-8 * sec.area() * (2.0 * sec.max_radius()).powi(2));
            let mean: f64 = k.chi.iter().zip(sec.lumped_mass()).map(|(x, m)| x * m).sum();
            prop_assert!(mean.abs() <= 1e-10 * sec.area());
            prop_assert!((k.k - k.k_identity).abs() <= 1e-8);
            prop_assert!(k.i1 > 0.0 && k.i2 > 0.0 && k.k > 0.0);
        }
    }
}
