use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use tsd_core::experiment::{components, target_problem, verification_problem};
use tsd_core::optimize::{run, History, IterationRecord, Iterate, Termination};
use tsd_core::verify::{run_verification, Method};
use tsd_core::{generate_crossed_mesh, vtk, BoundaryData, Problem};

use crate::config::RunConfig;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    /// A check did not meet its tolerance.
    CheckFailed = 1,
    InvalidConfig = 2,
    SolverFailure = 3,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

/// Runs the requested derivative checks and writes one error CSV per method
/// plus a per-node comparison.
pub fn cmd_verify(cfg: &RunConfig) -> Result<ExitStatus> {
    let mesh = generate_crossed_mesh(cfg.verify_level());
    let (problem, phi) = match verification_problem(&mesh, cfg.problem.clone()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitStatus::SolverFailure);
        }
    };
    let requested: Vec<(Method, Vec<f64>)> = cfg
        .verification
        .methods
        .iter()
        .map(|&m| (m, cfg.verification.steps(m).to_vec()))
        .collect();
    let report = match run_verification(&problem, &phi, &requested) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitStatus::SolverFailure);
        }
    };
    ensure_dir(&cfg.output)?;
    let all = report.errors_csv();
    let header = all.lines().next().unwrap_or_default();
    for m in &report.methods {
        let body: String = all
            .lines()
            .skip(1)
            .filter(|l| l.starts_with(&format!("{},", m.method)))
            .map(|l| format!("{l}\n"))
            .collect();
        write(&cfg.output.join(format!("errors_{}.csv", m.method)), &format!("{header}\n{body}"))?;
    }
    write(&cfg.output.join("nodes.csv"), &report.nodes_csv())?;

    println!("nodes {}", mesh.num_nodes());
    for m in &report.methods {
        let fmt = |s: Option<f64>| s.map_or("-".to_string(), |v| format!("{v:.17e}"));
        println!("{} slope_S {} slope_T {}", m.method, fmt(m.slope_s), fmt(m.slope_t));
        if let Some(w) = m.worst {
            println!("{} worst node {} step {:.17e} error {:.17e}", m.method, w.node, w.step, w.error);
        }
    }
    match report.hd_max_relative_error() {
        Some(err) => {
            println!("hd max relative error {err:.17e}");
            if err <= cfg.verification.hd_tolerance {
                Ok(ExitStatus::Success)
            } else {
                eprintln!("hyper-dual agreement {err:e} exceeds {:e}", cfg.verification.hd_tolerance);
                Ok(ExitStatus::CheckFailed)
            }
        }
        None => Ok(ExitStatus::Success),
    }
}

fn snapshot(problem: &Problem, it: &Iterate, title: &str) -> String {
    let class: Vec<f64> = it.field.classification.labels.iter().map(|c| c.code() as f64).collect();
    vtk::unstructured_grid(
        problem.mesh(),
        title,
        &[
            ("phi", &it.phi),
            ("u", &it.solution.u),
            ("p", &it.solution.p),
            ("uhat", problem.uhat()),
            ("dJ", &it.field.dj),
            ("G", &it.field.g),
            ("nodeclass", &class),
        ],
    )
}

/// Runs the optimization, writing `history.csv`, VTK snapshots on the
/// configured cadence and the final design with its interface.
pub fn cmd_optimize(cfg: &RunConfig) -> Result<ExitStatus> {
    let mesh = generate_crossed_mesh(cfg.optimize_level());
    ensure_dir(&cfg.output)?;
    let (problem, _) = match target_problem(&mesh, cfg.problem.clone()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitStatus::SolverFailure);
        }
    };
    let mut partial = History::default();
    let mut zero_shape_iters = 0usize;
    let cadence = cfg.optimizer.snapshot_cadence;
    let observer = |rec: &IterationRecord, it: &Iterate| -> tsd_core::Result<()> {
        partial.records.push(*rec);
        if !it.field.zero_shape.is_empty() {
            zero_shape_iters += 1;
        }
        if cadence > 0 && rec.iter.is_multiple_of(cadence) {
            let path = cfg.output.join(format!("snapshot_{:05}.vtk", rec.iter));
            vtk::write(&path, &snapshot(&problem, it, &format!("iteration {}", rec.iter)))?;
        }
        Ok(())
    };
    let result = run(&problem, &cfg.optimizer, observer);
    let res = match result {
        Ok(r) => r,
        Err(e) => {
            write(&cfg.output.join("history.csv"), &partial.to_csv())?;
            eprintln!("error: {e}");
            return Ok(ExitStatus::SolverFailure);
        }
    };
    write(&cfg.output.join("history.csv"), &res.history.to_csv())?;
    let last = res.final_iterate.clone();
    write(&cfg.output.join("final.vtk"), &snapshot(&problem, &last, "final design"))?;
    write(&cfg.output.join("interface.vtk"), &vtk::interface_polydata(&mesh, &last.phi)?)?;

    let first = res.history.records[0];
    let fin = *res.history.last().expect("history holds the initial state");
    let reduction = fin.j / first.j;
    println!("iterations {}", fin.iter);
    println!("J0 {:.17e}", first.j);
    println!("J {:.17e}", fin.j);
    println!("reduction {reduction:.17e}");
    println!("normG0 {:.17e}", first.norm_g);
    println!("normG {:.17e}", fin.norm_g);
    if zero_shape_iters > 0 {
        println!("iterates with zero-valued interface nodes {zero_shape_iters}");
    }
    match res.termination {
        Termination::MaxIterations => {}
        t => println!("stopped early: {t:?}"),
    }
    for (i, c) in components(&mesh, &last.phi)?.iter().enumerate() {
        println!(
            "component {i} area {:.17e} centroid {:.17e} {:.17e}",
            c.area, c.centroid[0], c.centroid[1]
        );
    }
    if cfg.optimizer.max_iter == 0 || reduction <= cfg.target_reduction {
        Ok(ExitStatus::Success)
    } else {
        eprintln!("objective reduced by {reduction:e}, above the target {:e}", cfg.target_reduction);
        Ok(ExitStatus::CheckFailed)
    }
}

/// Prints node, element and Dirichlet node counts.
pub fn cmd_mesh_info(level: usize) -> Result<ExitStatus> {
    let mesh = generate_crossed_mesh(level).tag_boundary(&BoundaryData::default());
    println!("nodes {}", mesh.num_nodes());
    println!("elements {}", mesh.num_elements());
    println!("dirichlet {}", mesh.num_dirichlet());
    Ok(ExitStatus::Success)
}
