//! Refinement indicators, fixed-fraction marking and the
//! solve, estimate, mark and adapt loop.

use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::assembly::Operators;
use crate::boundary::Dirichlet;
use crate::cases::{l1_error, CaseDefinition};
use crate::error::{Error, Result};
use crate::fespace::{FESpace, NodeRef, StateVector};
use crate::mesh::{AdaptiveMesh, CellMark, Side};
use crate::solver::{hybrid_solve, Problem};

/// Which indicator drives refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndicatorKind {
    Kelly,
    #[default]
    GraphLaplacian,
}

/// Marking fractions and stopping limits of an adaptive run.
#[derive(Debug, Clone, PartialEq)]
pub struct AmrConfig {
    pub refine_fraction: f64,
    pub coarsen_fraction: f64,
    pub max_cells: usize,
    pub max_steps: usize,
    pub indicator: IndicatorKind,
    /// Component the indicator looks at.
    pub component: usize,
}

impl Default for AmrConfig {
    fn default() -> Self {
        Self {
            refine_fraction: 0.3,
            coarsen_fraction: 0.1,
            max_cells: 50_000,
            max_steps: 12,
            indicator: IndicatorKind::GraphLaplacian,
            component: 0,
        }
    }
}

impl AmrConfig {
    pub fn validate(&self) -> Result<()> {
        let (r, c) = (self.refine_fraction, self.coarsen_fraction);
        if !(0.0..1.0).contains(&r) || !(0.0..1.0).contains(&c) || r + c > 1.0 {
            return Err(Error::InvalidArgument(format!("invalid marking fractions ({r}, {c})")));
        }
        Ok(())
    }
}

/// Gradient of the bilinear interpolant of one component at local point `t` of a cell.
fn cell_gradient(space: &FESpace, u: &StateVector, comp: usize, cell: usize, t: [f64; 2]) -> [f64; 2] {
    let v = space.corner_values(u, cell, comp);
    let h = space.mesh().cell_size(cell);
    [
        ((v[1] - v[0]) * (1.0 - t[1]) + (v[3] - v[2]) * t[1]) / h[0],
        ((v[2] - v[0]) * (1.0 - t[0]) + (v[3] - v[1]) * t[0]) / h[1],
    ]
}

fn local(space: &FESpace, cell: usize, p: [f64; 2]) -> [f64; 2] {
    let b = space.mesh().cell_bounds(cell);
    [
        ((p[0] - b.min[0]) / (b.max[0] - b.min[0])).clamp(0.0, 1.0),
        ((p[1] - b.min[1]) / (b.max[1] - b.min[1])).clamp(0.0, 1.0),
    ]
}

const GAUSS3: [(f64, f64); 3] =
    [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];

/// `∫ ((∇u_K − ∇u_N)·n)²` over the segment `a..b`.
fn jump_integral(
    space: &FESpace,
    u: &StateVector,
    comp: usize,
    k: usize,
    nb: usize,
    n: [f64; 2],
    a: [f64; 2],
    b: [f64; 2],
) -> f64 {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    GAUSS3
        .iter()
        .map(|&(s, w)| {
            let t = 0.5 * (s + 1.0);
            let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let gk = cell_gradient(space, u, comp, k, local(space, k, p));
            let gn = cell_gradient(space, u, comp, nb, local(space, nb, p));
            let j = (gk[0] - gn[0]) * n[0] + (gk[1] - gn[1]) * n[1];
            0.5 * w * len * j * j
        })
        .sum()
}

fn side_segment(space: &FESpace, cell: usize, side: Side) -> ([f64; 2], [f64; 2]) {
    let mesh = space.mesh();
    let [a, b] = side.corners();
    (mesh.to_physical(mesh.corner(cell, a)), mesh.to_physical(mesh.corner(cell, b)))
}

/// Squared Kelly indicator `η_K² = (h_K/24) ∫_{∂K} ⟦∂u/∂n⟧²` per cell; boundary faces contribute nothing.
pub fn kelly(space: &FESpace, u: &StateVector, comp: usize) -> Vec<f64> {
    let mesh = space.mesh();
    (0..mesh.num_cells())
        .map(|k| {
            let key = mesh.key(k);
            let mut total = 0.0;
            for side in Side::ALL {
                let Some(nk) = mesh.neighbor_key(key, side) else { continue };
                let n = side.normal();
                match mesh.leaf_covering(nk) {
                    Some(nb) => {
                        let (a, b) = side_segment(space, k, side);
                        total += jump_integral(space, u, comp, k, nb, n, a, b);
                    }
                    None => {
                        let opposite = match side {
                            Side::Left => Side::Right,
                            Side::Right => Side::Left,
                            Side::Bottom => Side::Top,
                            Side::Top => Side::Bottom,
                        };
                        for c in opposite.corners() {
                            let child = nk.children()[c];
                            let nb = mesh.index_of(&child).expect("2:1 balance keeps finer neighbours one level down");
                            let (a, b) = side_segment(space, nb, opposite);
                            total += jump_integral(space, u, comp, k, nb, n, a, b);
                        }
                    }
                }
            }
            mesh.cell_h(k) / 24.0 * total
        })
        .collect()
}

/// Squared graph-Laplacian indicator `Σ_{i ∈ K} Σ_{j ∈ N(i)} (u_i − u_j)²` over the
/// conforming corners of each cell (the `h^{d−2}` factor is one in two dimensions).
pub fn graph_indicator(space: &FESpace, u: &StateVector, comp: usize) -> Vec<f64> {
    let node_sum: Vec<f64> = (0..space.num_nodes())
        .map(|i| {
            let ui = u.node(i)[comp];
            space.neighbors(i).iter().map(|&j| (ui - u.node(j)[comp]).powi(2)).sum()
        })
        .collect();
    (0..space.num_cells())
        .map(|cell| {
            space
                .cell_nodes(cell)
                .iter()
                .filter_map(|n| match n {
                    NodeRef::Conforming(i) => Some(node_sum[*i]),
                    NodeRef::Hanging(_) => None,
                })
                .sum()
        })
        .collect()
}

pub fn indicator(kind: IndicatorKind, space: &FESpace, u: &StateVector, comp: usize) -> Vec<f64> {
    match kind {
        IndicatorKind::Kelly => kelly(space, u, comp),
        IndicatorKind::GraphLaplacian => graph_indicator(space, u, comp),
    }
}

/// Refines the `⌈r·n⌉` largest and coarsens the `⌊c·n⌋` smallest values; ties go to the lower index.
/// Nothing is refined once the mesh holds `max_cells` cells.
pub fn mark(values: &[f64], cfg: &AmrConfig) -> Vec<CellMark> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let n_ref = if n >= cfg.max_cells { 0 } else { (cfg.refine_fraction * n as f64).ceil() as usize };
    let n_coarse = ((cfg.coarsen_fraction * n as f64).floor() as usize).min(n - n_ref.min(n));
    let mut marks = vec![CellMark::Keep; n];
    for &c in &order[..n_ref.min(n)] {
        marks[c] = CellMark::Refine;
    }
    for &c in &order[n - n_coarse..] {
        marks[c] = CellMark::Coarsen;
    }
    marks
}

/// Per-step statistics written to the run CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: usize,
    pub cells: usize,
    pub dofs: usize,
    pub l1_error: Option<f64>,
    pub wall_s: f64,
    pub nl_iters: usize,
    pub converged: bool,
}

/// Solution state handed to the observer after every step.
pub struct StepSnapshot<'a> {
    pub stats: &'a StepStats,
    pub space: &'a FESpace,
    pub u: &'a StateVector,
    pub indicator: &'a [f64],
    pub detector: &'a [f64],
}

/// Final state of a run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub steps: Vec<StepStats>,
    pub mesh: AdaptiveMesh,
    pub solution: StateVector,
}

/// Solves the case on one space starting from `guess`; a failed solve keeps the guess.
fn solve_on(
    case: &CaseDefinition,
    space: &FESpace,
    guess: StateVector,
) -> Result<(StateVector, usize, bool, Vec<f64>)> {
    let ops = Operators::new(space);
    let dirichlet = Dirichlet::build(space, &case.model, &case.boundary)?;
    let mut problem = Problem::new(space, &ops, &case.model, &dirichlet, case.params.clone(), case.scheme.detector())?;
    let (u, iters, converged) = match hybrid_solve(&mut problem, guess.clone(), &case.nonlinear) {
        Ok((u, report)) => (u, report.iterations(), report.converged),
        Err(e) => {
            log::warn!("nonlinear solve failed: {e}");
            let mut g = guess;
            dirichlet.impose(&mut g);
            (g, 0, false)
        }
    };
    let alpha = problem.detector_field(&u, false).values;
    Ok((u, iters, converged, alpha))
}

/// Adaptive run: solve, estimate, mark and adapt until the step or cell limit is reached.
pub fn amr_loop(
    case: &CaseDefinition,
    mut observer: impl FnMut(&StepSnapshot<'_>) -> Result<()>,
) -> Result<RunOutcome> {
    let cfg = &case.amr;
    cfg.validate()?;
    let m = case.model.components();
    let mut mesh = case.initial_mesh()?;
    let mut space = FESpace::new(&mesh, m);
    let mut guess = space.interpolate(|p| (case.initial)(p));
    let mut steps = Vec::new();
    for step in 0..=cfg.max_steps {
        let t0 = Instant::now();
        let (u, iters, converged, alpha) = solve_on(case, &space, guess)?;
        let eta = indicator(cfg.indicator, &space, &u, cfg.component);
        let l1 = case.exact.as_ref().map(|f| l1_error(&space, &u, f.as_ref(), case.error_component));
        let stats = StepStats {
            step,
            cells: mesh.num_cells(),
            dofs: space.num_nodes() * m,
            l1_error: l1,
            wall_s: t0.elapsed().as_secs_f64(),
            nl_iters: iters,
            converged,
        };
        info!("step {step}: {} cells, L1 {:?}, {} iterations, converged {converged}", stats.cells, l1, iters);
        observer(&StepSnapshot { stats: &stats, space: &space, u: &u, indicator: &eta, detector: &alpha })?;
        steps.push(stats);
        if step == cfg.max_steps || mesh.num_cells() >= cfg.max_cells {
            return Ok(RunOutcome { steps, mesh, solution: u });
        }
        let (next, mapping) = mesh.adapt(&mark(&eta, cfg));
        if next.num_cells() > cfg.max_cells {
            return Ok(RunOutcome { steps, mesh, solution: u });
        }
        let next_space = FESpace::new(&next, m);
        guess = next_space.transfer_from(&space, &u, &mapping);
        mesh = next;
        space = next_space;
    }
    unreachable!("the loop returns on its last step")
}

/// Uniform sweep: the root grid refined `0..=levels` times, each solve started from the previous one.
pub fn uniform_sweep(
    case: &CaseDefinition,
    levels: u8,
    mut observer: impl FnMut(&StepSnapshot<'_>) -> Result<()>,
) -> Result<RunOutcome> {
    let m = case.model.components();
    let mut mesh = case.initial_mesh()?;
    let mut space = FESpace::new(&mesh, m);
    let mut guess = space.interpolate(|p| (case.initial)(p));
    let mut steps = Vec::new();
    for step in 0..=levels as usize {
        let t0 = Instant::now();
        let (u, iters, converged, alpha) = solve_on(case, &space, guess)?;
        let eta = indicator(case.amr.indicator, &space, &u, case.amr.component);
        let l1 = case.exact.as_ref().map(|f| l1_error(&space, &u, f.as_ref(), case.error_component));
        let stats = StepStats {
            step,
            cells: mesh.num_cells(),
            dofs: space.num_nodes() * m,
            l1_error: l1,
            wall_s: t0.elapsed().as_secs_f64(),
            nl_iters: iters,
            converged,
        };
        info!("uniform step {step}: {} cells, L1 {:?}, {} iterations", stats.cells, l1, iters);
        observer(&StepSnapshot { stats: &stats, space: &space, u: &u, indicator: &eta, detector: &alpha })?;
        steps.push(stats);
        if step == levels as usize {
            return Ok(RunOutcome { steps, mesh, solution: u });
        }
        let (next, mapping) = mesh.adapt(&vec![CellMark::Refine; mesh.num_cells()]);
        let next_space = FESpace::new(&next, m);
        guess = next_space.transfer_from(&space, &u, &mapping);
        mesh = next;
        space = next_space;
    }
    unreachable!("the loop returns on its last step")
}

/// Least-squares slope of `−log(error)` against `log(√cells)`, i.e. the rate in `h`.
pub fn fitted_rate(steps: &[StepStats]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = steps
        .iter()
        .filter_map(|s| s.l1_error.filter(|e| *e > 0.0).map(|e| (0.5 * (s.cells as f64).ln(), -e.ln())))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Rect;

    #[test]
    fn marking_follows_the_ranking() {
        let values: Vec<f64> = (1..=10).map(f64::from).collect();
        let marks = mark(&values, &AmrConfig::default());
        let refined: Vec<usize> = (0..10).filter(|&i| marks[i] == CellMark::Refine).collect();
        let coarsened: Vec<usize> = (0..10).filter(|&i| marks[i] == CellMark::Coarsen).collect();
        assert_eq!(refined, vec![7, 8, 9]);
        assert_eq!(coarsened, vec![0]);
    }

    #[test]
    fn single_cell_is_refined() {
        assert_eq!(mark(&[0.5], &AmrConfig::default()), vec![CellMark::Refine]);
    }

    #[test]
    fn indicators_vanish_on_constants() {
        let mesh = AdaptiveMesh::new_uniform(3, 3, Rect::unit()).unwrap();
        let marks: Vec<CellMark> = (0..9).map(|c| if c == 4 { CellMark::Refine } else { CellMark::Keep }).collect();
        let (mesh, _) = mesh.adapt(&marks);
        let space = FESpace::new(&mesh, 1);
        let u = StateVector::from_vec(1, vec![3.0; space.num_nodes()]);
        assert!(kelly(&space, &u, 0).iter().all(|v| v.abs() < 1e-14));
        assert!(graph_indicator(&space, &u, 0).iter().all(|v| v.abs() < 1e-14));
    }
}
