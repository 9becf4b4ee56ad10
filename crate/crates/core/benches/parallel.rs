use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use thinrod::decomposition::decompose;
use thinrod::energy3d::{gamma_check, Recovery};
use thinrod::geometry::{build_frame, build_middle_line, CurveSpec, FrameSpec, RodChart};
use thinrod::limit::{LoadProfile, LoadSpec, Material, Rod1D, SectionLoadTerm, Stiffness};
use thinrod::section::{analyze, SectionSpec};
use thinrod::{par, quad, Poly, Vec3};

struct Case {
    rec: Recovery,
    loads: LoadProfile,
    material: Material,
    chart: Arc<RodChart>,
}

fn case() -> Case {
    let line = build_middle_line(&CurveSpec::CircularArc { radius: 2.0, length: 1.0, center: [0.0; 3] }).unwrap();
    let frame = build_frame(&line, &FrameSpec::default()).unwrap();
    let (sec, consts) = analyze(&SectionSpec::Disc { radius: 1.0 }, 3).unwrap();
    let sec = Arc::new(sec);
    let material = Material::lame(1.0, 1.0).unwrap();
    let rod = Rod1D::new(&frame, 32, Stiffness::new(&consts, &material).unwrap()).unwrap();
    let gen = (0..32).map(|k| Vec3::new(0.4, 0.2 * k as f64 / 32.0, -0.3)).collect();
    let rec = Recovery::new(&rod, sec.clone(), &consts, gen, 2.0).unwrap();
    let c = |x: f64| Poly(vec![x]);
    let spec = LoadSpec {
        f: [c(0.5), c(0.0), c(0.3)],
        g: vec![SectionLoadTerm { s1: 1, s2: 0, c: [c(0.0), c(0.0), c(0.4)] }],
        ..LoadSpec::default()
    };
    let loads = LoadProfile::new(&spec, &sec).unwrap();
    let chart = Arc::new(RodChart::new(frame, sec, 0.05).unwrap());
    Case { rec, loads, material, chart }
}

fn bench(c: &mut Criterion) {
    let k = case();
    let deltas = [0.2, 0.1, 0.05, 0.025];
    let mut g = c.benchmark_group("gamma_sweep");
    g.sample_size(10);
    g.bench_function("parallel", |b| b.iter(|| black_box(gamma_check(&k.rec, &k.loads, &k.material, &deltas).unwrap())));
    g.bench_function("sequential", |b| {
        b.iter(|| par::sequential(|| black_box(gamma_check(&k.rec, &k.loads, &k.material, &deltas).unwrap())))
    });
    g.finish();

    let field = k.rec.field(k.chart.clone(), quad::uniform_grid(1.0, 80)).unwrap();
    let mut g = c.benchmark_group("decompose");
    g.sample_size(10);
    g.bench_function("parallel", |b| b.iter(|| black_box(decompose(&field, true, None).unwrap())));
    g.bench_function("sequential", |b| b.iter(|| par::sequential(|| black_box(decompose(&field, true, None).unwrap()))));
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
