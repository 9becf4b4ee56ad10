//! Command implementations: each reads a validated config and writes CSV/JSON
//! into the output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;
use thinrod::decomposition::{decompose, DeformationField3D};
use thinrod::energy3d::{gamma_check, Recovery};
use thinrod::geometry::{build_frame, build_middle_line, FrameField, RodChart};
use thinrod::limit::{
    assemble_load_matrix, solve_coupled, solve_extensional, solve_linear, LoadProfile, NonlinearProblem, Rod1D,
    Stiffness,
};
use thinrod::section::{analyze, CrossSection, SectionConstants};
use thinrod::so3::log_rotation;
use thinrod::Vec3;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Model {
    Nonlinear,
    Linear,
    Extensional,
    Coupled,
}

/// Fixed 17-significant-digit rendering.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.into_iter().map(fmt))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    fs::write(path, s).map_err(|e| CliError::io(path, e))
}

fn v3(v: &Vec3) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

struct Setup {
    frame: FrameField,
    section: Arc<CrossSection>,
    consts: SectionConstants,
}

fn setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    let line = build_middle_line(&cfg.geometry.curve)?;
    let frame = build_frame(&line, &cfg.geometry.frame)?;
    let (sec, consts) = analyze(&cfg.section.shape, cfg.section.level)?;
    Ok(Setup { frame, section: Arc::new(sec), consts })
}

fn rod(cfg: &RunConfig, s: &Setup) -> Result<Rod1D, CliError> {
    let stiff = Stiffness::new(&s.consts, &cfg.material()?)?;
    Ok(Rod1D::new(&s.frame, cfg.solver.intervals, stiff)?)
}

pub fn section(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let s = setup(cfg)?;
    let sec = &s.section;
    let summary = json!({
        "spec": sec.spec(),
        "level": sec.level(),
        "nodes": sec.nodes().len(),
        "triangles": sec.triangles().len(),
        "input_centroid": sec.input_centroid(),
        "rotation_angle": sec.rotation_angle(),
        "max_radius": sec.max_radius(),
        "constants": &s.consts,
    });
    write_json(&out.join("section.json"), &summary)?;
    write_csv(
        &out.join("chi.csv"),
        &["S1", "S2", "chi"],
        sec.nodes().iter().zip(&s.consts.chi).map(|(p, c)| vec![p[0], p[1], *c]),
    )
}

pub fn solve(cfg: &RunConfig, model: Model, out: &Path) -> Result<(), CliError> {
    let s = setup(cfg)?;
    let rod = rod(cfg, &s)?;
    let profile = LoadProfile::new(&cfg.loads, &s.section)?;
    let grid = rod.grid().to_vec();
    let needs_tilde = matches!(model, Model::Extensional | Model::Coupled);
    if needs_tilde && profile.f_tilde().is_none() {
        return Err(CliError::config("loads.f_tilde is required for the extensional and coupled models"));
    }
    match model {
        Model::Nonlinear => {
            let loads = assemble_load_matrix(&profile, rod.frame(), &grid);
            let prob = NonlinearProblem::new(rod.clone(), loads)?;
            let sol = prob.solve(&cfg.solver.fixed_point, None)?;
            let rows = grid.iter().enumerate().map(|(k, &z)| {
                let aa = log_rotation(&sol.rotation.values()[k]).map(|x| x.rotation_vector()).unwrap_or_else(|_| Vec3::zeros());
                let c = sol.curvatures_at(&rod, z);
                let mut r = vec![z];
                r.extend(v3(&aa));
                r.extend(v3(&sol.v[k]));
                r.extend(c);
                r
            });
            write_csv(
                &out.join("solution.csv"),
                &["s3", "rot1", "rot2", "rot3", "V1", "V2", "V3", "k1", "k2", "tau"],
                rows,
            )?;
            write_csv(
                &out.join("generator.csv"),
                &["s_left", "s_right", "a1", "a2", "a3"],
                sol.a.iter().enumerate().map(|(k, a)| vec![grid[k], grid[k + 1], a[0], a[1], a[2]]),
            )?;
            write_json(
                &out.join("summary.json"),
                &json!({
                    "model": "nonlinear",
                    "energy": sol.energy,
                    "energy_direct": sol.energy_direct,
                    "energy_check": sol.energy_check,
                    "residual": sol.residual,
                    "gradient_norm": sol.gradient_norm,
                    "iterations": sol.iterations,
                    "gate": sol.gate,
                    "stiffness": rod.stiffness(),
                }),
            )
        }
        Model::Linear => {
            let loads = assemble_load_matrix(&profile, rod.frame(), &grid);
            let gate = loads.gate(rod.stiffness());
            let sol = solve_linear(&rod, &loads)?;
            let rows = grid.iter().enumerate().map(|(k, &z)| {
                let mut r = vec![z];
                r.extend(v3(&sol.r[k]));
                r.extend(v3(&sol.u[k]));
                r
            });
            write_csv(&out.join("solution.csv"), &["s3", "R1", "R2", "R3", "U1", "U2", "U3"], rows)?;
            write_json(
                &out.join("summary.json"),
                &json!({
                    "model": "linear",
                    "energy": sol.energy,
                    "gradient_residual": sol.gradient_residual,
                    "gate": gate,
                    "stiffness": rod.stiffness(),
                }),
            )
        }
        Model::Extensional => {
            let sol = solve_extensional(&rod, &profile)?;
            let rows = grid.iter().enumerate().map(|(k, &z)| {
                let mut r = vec![z];
                r.extend(v3(&sol.ue[k]));
                r.push(sol.strain[k]);
                r
            });
            write_csv(&out.join("solution.csv"), &["s3", "Ue1", "Ue2", "Ue3", "strain"], rows)?;
            write_json(
                &out.join("summary.json"),
                &json!({
                    "model": "extensional",
                    "energy": sol.energy,
                    "warnings": sol.warnings,
                    "stiffness": rod.stiffness(),
                }),
            )
        }
        Model::Coupled => {
            let loads = assemble_load_matrix(&profile, rod.frame(), &grid);
            let sol = solve_coupled(&rod, &loads, &profile)?;
            let rows = grid.iter().enumerate().map(|(k, &z)| {
                let mut r = vec![z];
                r.extend(v3(&sol.r[k]));
                r.extend(v3(&sol.u[k]));
                r.extend(v3(&sol.ue[k]));
                r.push(sol.strain[k]);
                r
            });
            write_csv(
                &out.join("solution.csv"),
                &["s3", "R1", "R2", "R3", "U1", "U2", "U3", "Ue1", "Ue2", "Ue3", "strain"],
                rows,
            )?;
            write_json(
                &out.join("summary.json"),
                &json!({
                    "model": "coupled",
                    "energy": sol.energy,
                    "gradient_residual": sol.gradient_residual,
                    "warnings": sol.warnings,
                    "stiffness": rod.stiffness(),
                }),
            )
        }
    }
}

/// Reads a field CSV (`S1,S2,s3,v1,v2,v3`) onto the section mesh × axial nodes.
pub fn read_field(path: &Path, chart: Arc<RodChart>) -> Result<DeformationField3D, CliError> {
    let bad = |msg: String| CliError::config(format!("{}: {msg}", path.display()));
    let mut rd = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header: Vec<String> = rd.headers().map_err(|e| bad(e.to_string()))?.iter().map(|h| h.trim().to_string()).collect();
    if header != ["S1", "S2", "s3", "v1", "v2", "v3"] {
        return Err(bad(format!("expected header S1,S2,s3,v1,v2,v3, got {}", header.join(","))));
    }
    let mut rows = vec![];
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("line {}: {e}", i + 2)))?;
        if vals.len() != 6 || !vals.iter().all(|x| x.is_finite()) {
            return Err(bad(format!("line {}: need six finite numbers", i + 2)));
        }
        rows.push(vals);
    }
    let mut axial: Vec<f64> = rows.iter().map(|r| r[2]).collect();
    axial.sort_by(|a, b| a.partial_cmp(b).unwrap());
    axial.dedup();
    let index: BTreeMap<u64, usize> = axial.iter().enumerate().map(|(j, z)| (z.to_bits(), j)).collect();
    let nodes = chart.section().nodes();
    let tol = 1e-9 * (1.0 + chart.section().max_radius());
    let ns = nodes.len();
    let mut values = vec![None; ns * axial.len()];
    for (i, r) in rows.iter().enumerate() {
        let node = nodes
            .iter()
            .position(|p| (p[0] - r[0]).abs() <= tol && (p[1] - r[1]).abs() <= tol)
            .ok_or_else(|| bad(format!("line {}: ({}, {}) is not a section mesh node", i + 2, r[0], r[1])))?;
        let slot = &mut values[index[&r[2].to_bits()] * ns + node];
        if slot.is_some() {
            return Err(bad(format!("line {}: duplicate sample", i + 2)));
        }
        *slot = Some(Vec3::new(r[3], r[4], r[5]));
    }
    let values: Vec<Vec3> = values
        .into_iter()
        .collect::<Option<_>>()
        .ok_or_else(|| bad(format!("field does not cover all {} section nodes on every axial node", ns)))?;
    Ok(DeformationField3D::new(chart, axial, values)?)
}

pub fn decompose_cmd(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let fc = cfg.field.as_ref().ok_or_else(|| CliError::config("field {path, delta} is required for decompose"))?;
    let s = setup(cfg)?;
    let chart = Arc::new(RodChart::new(s.frame.clone(), s.section.clone(), fc.delta)?);
    let field = read_field(&fc.path, chart)?;
    let dec = decompose(&field, cfg.solver.clamp_left, cfg.solver.slices)?;
    let axial = field.axial();
    let ns = field.n_section();
    let nodes = s.section.nodes();
    write_csv(
        &out.join("warping.csv"),
        &["S1", "S2", "s3", "w1", "w2", "w3"],
        (0..dec.warping.len()).map(|k| {
            let (j, i) = (k / ns, k % ns);
            let w = dec.warping[k];
            vec![nodes[i][0], nodes[i][1], axial[j], w[0], w[1], w[2]]
        }),
    )?;
    let mut header = vec!["s3", "V1", "V2", "V3"];
    header.extend(["R11", "R12", "R13", "R21", "R22", "R23", "R31", "R32", "R33"]);
    header.extend(["VB1", "VB2", "VB3", "VS1", "VS2", "VS3"]);
    write_csv(
        &out.join("elementary.csv"),
        &header,
        axial.iter().enumerate().map(|(j, &z)| {
            let r = dec.rotation.eval(z);
            let mut row = vec![z];
            row.extend(v3(&dec.v[j]));
            for a in 0..3 {
                for b in 0..3 {
                    row.push(r[(a, b)]);
                }
            }
            row.extend(v3(&dec.vb[j]));
            row.extend(v3(&dec.vs[j]));
            row
        }),
    )?;
    let max_warping = dec.warping.iter().map(|w| w.norm()).fold(0.0, f64::max);
    write_json(
        &out.join("decomposition.json"),
        &json!({
            "delta": fc.delta,
            "axial_nodes": axial.len(),
            "slices": dec.rotation.grid().len(),
            "max_warping": max_warping,
            "estimates": dec.estimates,
        }),
    )
}

pub fn gamma(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let s = setup(cfg)?;
    let rod = rod(cfg, &s)?;
    let material = cfg.material()?;
    let profile = LoadProfile::new(&cfg.loads, &s.section)?;
    let loads = assemble_load_matrix(&profile, rod.frame(), rod.grid());
    let kappa = profile.kappa();
    let (rec, solver_info) = if kappa == 2.0 {
        let prob = NonlinearProblem::new(rod.clone(), loads)?;
        let sol = prob.solve(&cfg.solver.fixed_point, None)?;
        let info = json!({"model": "nonlinear", "energy": sol.energy, "residual": sol.residual, "gate": sol.gate});
        (Recovery::nonlinear(&rod, s.section.clone(), &s.consts, &sol)?, info)
    } else {
        let gate = loads.gate(rod.stiffness());
        let sol = solve_linear(&rod, &loads)?;
        let info = json!({"model": "linear", "energy": sol.energy, "gate": gate});
        (Recovery::linear(&rod, s.section.clone(), &s.consts, &sol, kappa)?, info)
    };
    let rep = gamma_check(&rec, &profile, &material, &cfg.solver.deltas)?;
    write_csv(
        &out.join("gamma.csv"),
        &["delta", "quotient", "gap", "tensor_gap"],
        rep.entries.iter().map(|e| vec![e.delta, e.quotient, e.gap, e.tensor_gap]),
    )?;
    write_json(&out.join("gamma.json"), &json!({"report": rep, "solver": solver_info}))
}
