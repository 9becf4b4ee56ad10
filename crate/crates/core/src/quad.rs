//! Fixed quadrature rules: Gauss–Legendre on intervals and symmetric rules on
//! triangles (barycentric coordinates, weights summing to one).

/// Two-point Gauss–Legendre nodes on [-1, 1] (weights are 1).
pub const GAUSS2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

const GL5_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL5_W: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Points and weights of the 2-point rule mapped to `[a, b]`.
pub fn gauss2(a: f64, b: f64) -> [(f64, f64); 2] {
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    [(m + r * GAUSS2[0], r), (m + r * GAUSS2[1], r)]
}

/// 5-point Gauss–Legendre on `[a, b]` (exact to degree 9).
pub fn gauss5<F: FnMut(f64) -> T, T>(a: f64, b: f64, mut f: F) -> T
where
    T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    let mut acc = f(m + r * GL5_X[0]) * (r * GL5_W[0]);
    for i in 1..5 {
        acc = acc + f(m + r * GL5_X[i]) * (r * GL5_W[i]);
    }
    acc
}

/// Degree-2 triangle rule (three interior points).
pub const TRI3: [([f64; 3], f64); 3] = [
    ([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], 1.0 / 3.0),
];

/// Degree-5 triangle rule (7 points, Radon).
pub fn tri7() -> [([f64; 3], f64); 7] {
    let s15 = 15f64.sqrt();
    let a1 = (6.0 - s15) / 21.0;
    let a2 = (6.0 + s15) / 21.0;
    let w1 = (155.0 - s15) / 1200.0;
    let w2 = (155.0 + s15) / 1200.0;
    let b1 = 1.0 - 2.0 * a1;
    let b2 = 1.0 - 2.0 * a2;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 9.0 / 40.0),
        ([a1, a1, b1], w1),
        ([a1, b1, a1], w1),
        ([b1, a1, a1], w1),
        ([a2, a2, b2], w2),
        ([a2, b2, a2], w2),
        ([b2, a2, a2], w2),
    ]
}

/// Composite trapezoid weights for a grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut w = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let h = grid[k + 1] - grid[k];
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    w
}

/// Uniform grid with `m` intervals on `[0, l]`.
pub fn uniform_grid(l: f64, m: usize) -> Vec<f64> {
    (0..=m).map(|k| l * k as f64 / m as f64).collect()
}

/// Index `k` of the interval `[grid[k], grid[k+1]]` containing `s` (clamped).
pub fn locate(grid: &[f64], s: f64) -> usize {
    let m = grid.len() - 1;
    match grid.binary_search_by(|x| x.partial_cmp(&s).unwrap()) {
        Ok(k) => k.min(m - 1),
        Err(0) => 0,
        Err(k) => (k - 1).min(m - 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rules_exactness() {
        let i: f64 = gauss2(0.0, 2.0).iter().map(|&(x, w)| w * x.powi(3)).sum();
        assert!((i - 4.0).abs() < 1e-14);
        let j = gauss5(-1.0, 3.0, |x| x.powi(9));
        assert!((j - (3f64.powi(10) - 1.0) / 10.0).abs() < 1e-9);
    }

    #[test]
    fn tri7_integrates_quintics() {
        // ∫ over the reference triangle of x^3 y^2 = 3!2!/(7!) * 2 * area, area = 1/2.
        let exact = 6.0 * 2.0 / 5040.0;
        let v: f64 = tri7()
            .iter()
            .map(|(b, w)| w * 0.5 * b[1].powi(3) * b[2].powi(2))
            .sum();
        assert!((v - exact).abs() < 1e-15);
        let q: f64 = TRI3.iter().map(|(b, w)| w * 0.5 * b[1] * b[2]).sum();
        assert!((q - 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn locate_clamps() {
        let g = uniform_grid(1.0, 4);
        assert_eq!(locate(&g, 0.0), 0);
        assert_eq!(locate(&g, 1.0), 3);
        assert_eq!(locate(&g, 0.5), 2);
        assert_eq!(locate(&g, 0.49), 1);
    }
}
