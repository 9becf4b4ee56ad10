use nalgebra::Vector3;
use thinrod::section::{analyze, SectionSpec};
use thinrod::so3::{exp_axial, integrate_generator, log_vec, orthogonality_defect};
use thinrod::{par, Mat3};

#[test]
fn disc_torsion_constant_matches_polar_moment() {
    let (sec, c) = analyze(&SectionSpec::Disc { radius: 1.0 }, 4).unwrap();
    // χ ≡ 0 on a disc, so K = I₁ + I₂ = π/2
    assert!((c.k - std::f64::consts::FRAC_PI_2).abs() < 5e-3, "{}", c.k);
    assert!((c.k - c.k_identity).abs() < 1e-10);
    assert!((sec.area() - c.area).abs() < 1e-12);
}

#[test]
fn constant_generator_matches_exponential() {
    let a = Vector3::new(0.3, -1.1, 0.7);
    let grid: Vec<f64> = (0..=40).map(|k| k as f64 / 40.0).collect();
    let field = integrate_generator(&grid, &vec![a; 40]).unwrap();
    let exact = exp_axial(&a);
    assert!((field.eval(1.0) - exact).norm() < 1e-12);
    let (d_orth, d_det) = orthogonality_defect(&field.eval(0.37));
    assert!(d_orth < 1e-13 && d_det < 1e-13);
    assert!((log_vec(&exact) - a).norm() < 1e-12);
    assert_eq!(field.eval(0.0), Mat3::identity());
}

#[test]
fn sequential_and_parallel_sections_agree() {
    let spec = SectionSpec::Ellipse { a: 1.0, b: 0.5 };
    let (_, p) = analyze(&spec, 3).unwrap();
    let (_, s) = par::sequential(|| analyze(&spec, 3)).unwrap();
    assert_eq!(p.k.to_bits(), s.k.to_bits());
    assert_eq!(p.chi, s.chi);
}
