//! Executes a resolved configuration and writes the CSV and VTK artifacts.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;

use monoamr::amr::{amr_loop, fitted_rate, uniform_sweep, StepStats};
use monoamr::io::{write_vtk, CsvWriter};
use monoamr::physics::PhysicsModel;
use monoamr::Error;

use crate::config::RunConfig;

#[derive(Debug)]
pub enum RunError {
    Config(Error),
    Solver(Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) | RunError::Solver(e) => e.fmt(f),
        }
    }
}

fn component_names(model: &PhysicsModel) -> Vec<&'static str> {
    match model {
        PhysicsModel::Euler { .. } => vec!["rho", "rho_u", "rho_v", "rho_E"],
        _ => vec!["u"],
    }
}

/// Human-readable table of the steps, with the fitted rate for uniform sweeps.
pub fn summary(steps: &[StepStats], uniform: bool) -> String {
    let mut s = String::from("step      cells       dofs     l1_error   nl_iters  converged\n");
    for r in steps {
        let e = r.l1_error.map_or_else(|| "-".to_owned(), |e| format!("{e:.4e}"));
        let _ = writeln!(
            s,
            "{:>4} {:>10} {:>10} {:>12} {:>10} {:>10}",
            r.step, r.cells, r.dofs, e, r.nl_iters, r.converged
        );
    }
    if uniform {
        if let Some(rate) = fitted_rate(steps) {
            let _ = writeln!(s, "fitted L1 rate: {rate:.3}");
        }
    }
    s
}

/// Runs the configured case. Artifacts written before a failure are kept.
pub fn run(cfg: &RunConfig) -> Result<String, RunError> {
    let (case, uniform) = cfg.build_case().map_err(RunError::Config)?;
    let io = |e: std::io::Error| RunError::Config(Error::Io(format!("{}: {e}", cfg.out.display())));
    fs::create_dir_all(&cfg.out).map_err(io)?;
    let mut csv = CsvWriter::new(BufWriter::new(File::create(cfg.out.join("run.csv")).map_err(io)?));
    let names = component_names(&case.model);
    let observer = |snap: &monoamr::amr::StepSnapshot<'_>| {
        csv.write(snap.stats)?;
        let path = cfg.out.join(format!("step_{:03}.vtk", snap.stats.step));
        let file = File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        write_vtk(BufWriter::new(file), snap, &names)
    };
    let outcome = match uniform {
        Some((a, b)) => uniform_sweep(&case, (b / a).trailing_zeros() as u8, observer),
        None => amr_loop(&case, observer),
    }
    .map_err(RunError::Solver)?;
    if let Some(last) = outcome.steps.last().filter(|s| !s.converged) {
        return Err(RunError::Solver(Error::MaxIterations(last.nl_iters)));
    }
    Ok(summary(&outcome.steps, uniform.is_some()))
}
