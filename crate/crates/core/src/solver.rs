//! Nonlinear residual and Jacobian of the stabilised scheme, the hybrid
//! Picard–Newton driver with backtracking line search, and Backward Euler steps.

use std::sync::Arc;

use log::{debug, info};

use crate::assembly::{convection_action, convection_matrix, Operators};
use crate::boundary::Dirichlet;
use crate::error::{Error, Result};
use crate::fespace::{FESpace, StateVector};
use crate::linsolve::{LinearSolver, LinearSolverKind};
use crate::physics::PhysicsModel;
use crate::sparse::{BlockSparseMatrix, Pattern};
use crate::stabilization::{
    elemental_diffusion, mass_weights, scalar_pair_diffusion, system_detector, DetectorField, Diffusion,
    StabilizationParams, StencilTable,
};

/// How the shock detector is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectorMode {
    /// Computed from the current iterate (high-order scheme).
    Computed,
    /// The same value at every node; `Constant(1.0)` is the low-order scheme.
    Constant(f64),
    /// Fixed nodal values, independent of the iterate.
    Fixed(Vec<f64>),
}

/// Stopping rules of the hybrid solver.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearConfig {
    /// Relative residual at which Picard hands over to Newton.
    pub tol1: f64,
    /// Final relative residual.
    pub tol2: f64,
    /// Relative increment `‖ΔU‖/‖U‖` accepted as convergence in the Newton phase.
    pub du_tol: f64,
    /// Total iterations over both phases.
    pub max_iters: usize,
    pub linear: LinearSolverKind,
}

impl Default for NonlinearConfig {
    fn default() -> Self {
        Self { tol1: 1e-2, tol2: 1e-8, du_tol: 1e-4, max_iters: 500, linear: LinearSolverKind::Direct }
    }
}

impl NonlinearConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol1 > self.tol2 && self.tol2 > 0.0 && self.du_tol > 0.0 && self.max_iters > 0) {
            return Err(Error::InvalidArgument(format!("invalid nonlinear configuration {self:?}")));
        }
        Ok(())
    }
}

/// Which linearisation produced an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Picard,
    Newton,
}

/// History of a nonlinear solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    /// `‖R‖` before the first and after every accepted iteration.
    pub residual_norms: Vec<f64>,
    pub phases: Vec<Phase>,
    pub lambdas: Vec<f64>,
    pub picard_iters: usize,
    pub newton_iters: usize,
    /// Iteration count at which Newton took over, if it did.
    pub switched_at: Option<usize>,
    pub converged: bool,
}

impl SolveReport {
    pub fn iterations(&self) -> usize {
        self.picard_iters + self.newton_iters
    }

    pub fn initial_residual(&self) -> f64 {
        self.residual_norms.first().copied().unwrap_or(0.0)
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_norms.last().copied().unwrap_or(0.0)
    }

    pub fn relative_residual(&self) -> f64 {
        let r0 = self.initial_residual();
        if r0 > 0.0 {
            self.final_residual() / r0
        } else {
            0.0
        }
    }
}

/// Artificial diffusion of one node pair with its derivatives.
#[derive(Debug, Clone)]
struct PairTerm {
    i: usize,
    j: usize,
    nu: f64,
    dalpha: Vec<(usize, f64)>,
    du: Option<[[f64; 4]; 2]>,
}

/// A discretised problem on a fixed space: operators, boundary data, stabilisation and time term.
pub struct Problem<'a> {
    pub space: &'a FESpace,
    pub ops: &'a Operators,
    pub model: &'a PhysicsModel,
    pub dirichlet: &'a Dirichlet,
    pub params: StabilizationParams,
    pub detector: DetectorMode,
    /// Backward Euler data `(Δt, U_n)`; `None` for the steady problem.
    pub transient: Option<(f64, StateVector)>,
    table: StencilTable,
    scalar_k: Option<BlockSparseMatrix>,
    jac_pattern: Arc<Pattern>,
}

impl<'a> Problem<'a> {
    pub fn new(
        space: &'a FESpace,
        ops: &'a Operators,
        model: &'a PhysicsModel,
        dirichlet: &'a Dirichlet,
        params: StabilizationParams,
        detector: DetectorMode,
    ) -> Result<Self> {
        params.validate()?;
        if space.components() != model.components() {
            return Err(Error::InvalidArgument("space and model disagree on the number of components".into()));
        }
        if params.tracked.iter().any(|&c| c >= model.components()) {
            return Err(Error::InvalidArgument("tracked component out of range".into()));
        }
        let scalar_k = if model.is_scalar() {
            let zero = StateVector::zeros(space.num_nodes(), 1);
            Some(convection_matrix(space, ops, model, &zero)?)
        } else {
            None
        };
        Ok(Self {
            space,
            ops,
            model,
            dirichlet,
            params,
            detector,
            transient: None,
            table: StencilTable::new(space),
            scalar_k,
            jac_pattern: Arc::new(ops.pattern.squared()),
        })
    }

    fn m(&self) -> usize {
        self.model.components()
    }

    /// Sets the global wave speed used by the regularisation scalings from the given state.
    pub fn refresh_scaling(&mut self, u: &StateVector) -> Result<()> {
        let space = self.space;
        let s = self.model.max_speed((0..space.num_nodes()).map(|i| (u.node(i), space.coord(i))))?;
        self.params.lambda_max = if s > 0.0 { s } else { 1.0 };
        Ok(())
    }

    /// Detector field of the current mode.
    pub fn detector_field(&self, u: &StateVector, with_grad: bool) -> DetectorField {
        match &self.detector {
            DetectorMode::Computed => {
                system_detector(self.space, &self.table, u, self.dirichlet, &self.params, with_grad)
            }
            DetectorMode::Constant(v) => DetectorField::constant(self.space, *v),
            DetectorMode::Fixed(v) => DetectorField::from_values(self.space, v.clone(), &self.params),
        }
    }

    fn pair_terms(&self, u: &StateVector, alpha: &DetectorField) -> Result<Vec<PairTerm>> {
        let space = self.space;
        let mut out = Vec::new();
        if let Some(k) = &self.scalar_k {
            let pattern = k.pattern();
            for i in 0..space.num_nodes() {
                for idx in pattern.row_range(i) {
                    let j = pattern.col(idx);
                    if j <= i {
                        continue;
                    }
                    let h = space.node_h(i).min(space.node_h(j));
                    let (nu, di, dj) = scalar_pair_diffusion(
                        k.block_at(idx)[0],
                        k.get(j, i, 0, 0),
                        alpha.values[i],
                        alpha.values[j],
                        self.params.sigma_h(h),
                        self.params.variant,
                    );
                    out.push(PairTerm { i, j, nu, dalpha: vec![(i, di), (j, dj)], du: None });
                }
            }
        } else {
            for cell in 0..space.num_cells() {
                for pd in elemental_diffusion(space, self.ops, self.model, u, alpha, cell, &self.params)? {
                    out.push(PairTerm { i: pd.i, j: pd.j, nu: pd.nu, dalpha: pd.dalpha, du: Some(pd.du) });
                }
            }
        }
        Ok(out)
    }

    /// Assembled artificial diffusion for a detector field.
    pub fn diffusion(&self, u: &StateVector, alpha: &DetectorField) -> Result<Diffusion> {
        let mut d = Diffusion::zeros(&self.ops.pattern);
        for t in self.pair_terms(u, alpha)? {
            d.add_pair(&self.ops.pattern, t.i, t.j, t.nu);
        }
        Ok(d)
    }

    /// Rate `(U − U_n)/Δt` of the transient term.
    fn rate(&self, u: &StateVector) -> Option<(f64, Vec<f64>)> {
        self.transient
            .as_ref()
            .map(|(dt, prev)| (*dt, u.as_slice().iter().zip(prev.as_slice()).map(|(a, b)| (a - b) / dt).collect()))
    }

    /// `R(U) = M̃(U) δ_t U + K(U) U + B(U) U`, with identity rows `u − ū` on Dirichlet entries.
    pub fn residual(&self, u: &StateVector) -> Result<Vec<f64>> {
        let m = self.m();
        let space = self.space;
        let pattern = &self.ops.pattern;
        let mut r = convection_action(space, self.ops, self.model, u)?;
        let alpha = self.detector_field(u, false);
        for t in self.pair_terms(u, &alpha)? {
            let (ui, uj) = (u.node(t.i), u.node(t.j));
            for c in 0..m {
                let d = t.nu * (ui[c] - uj[c]);
                r[t.i * m + c] += d;
                r[t.j * m + c] -= d;
            }
        }
        if let Some((_, x)) = self.rate(u) {
            let w = mass_weights(space, pattern, &alpha, &self.params);
            for i in 0..space.num_nodes() {
                for idx in pattern.row_range(i) {
                    let j = pattern.col(idx);
                    let mij = self.ops.mass[idx];
                    for c in 0..m {
                        r[i * m + c] += mij * x[j * m + c] + w[idx].0 * mij * (x[i * m + c] - x[j * m + c]);
                    }
                }
            }
        }
        for i in 0..space.num_nodes() {
            for &(c, g) in self.dirichlet.fixed(i) {
                r[i * m + c] = u.node(i)[c] - g;
            }
        }
        Ok(r)
    }

    /// Exact Jacobian of [`Problem::residual`] on the two-ring pattern.
    pub fn jacobian(&self, u: &StateVector) -> Result<BlockSparseMatrix> {
        let m = self.m();
        let space = self.space;
        let n = space.num_nodes();
        let pattern = &self.ops.pattern;
        let mut jac = BlockSparseMatrix::zeros(self.jac_pattern.clone(), m);
        match &self.scalar_k {
            Some(k) => jac.add_subpattern(1.0, k),
            None => jac.add_subpattern(1.0, &convection_matrix(space, self.ops, self.model, u)?),
        }
        let with_grad = self.detector == DetectorMode::Computed;
        let alpha = self.detector_field(u, with_grad);
        // ∂R_i/∂α_d per pattern entry (i, d).
        let mut dr_dalpha = vec![[0.0; 4]; pattern.nnz()];
        let mm = m * m;
        for t in self.pair_terms(u, &alpha)? {
            let (ui, uj) = (u.node(t.i), u.node(t.j));
            let diff: Vec<f64> = (0..m).map(|c| ui[c] - uj[c]).collect();
            for (a, b, s) in [(t.i, t.j, 1.0), (t.j, t.i, -1.0)] {
                let aa = self.jac_pattern.find(a, a).expect("diagonal");
                let ab = self.jac_pattern.find(a, b).expect("pair in pattern");
                let vals = jac.values_mut();
                for r in 0..m {
                    vals[aa * mm + r * m + r] += t.nu;
                    vals[ab * mm + r * m + r] -= t.nu;
                }
                if let Some(du) = &t.du {
                    // du[0] is with respect to u_i, du[1] to u_j.
                    let (ci, cj) = if a == t.i { (aa, ab) } else { (ab, aa) };
                    for r in 0..m {
                        for c in 0..m {
                            vals[ci * mm + r * m + c] += s * du[0][c] * diff[r];
                            vals[cj * mm + r * m + c] += s * du[1][c] * diff[r];
                        }
                    }
                }
                if with_grad {
                    for &(d, g) in &t.dalpha {
                        let idx = pattern.find(a, d).expect("detector dependency within the node neighbourhood");
                        for r in 0..m {
                            dr_dalpha[idx][r] += s * g * diff[r];
                        }
                    }
                }
            }
        }
        if let Some((dt, x)) = self.rate(u) {
            let w = mass_weights(space, pattern, &alpha, &self.params);
            for i in 0..n {
                let ii = self.jac_pattern.find(i, i).expect("diagonal");
                for idx in pattern.row_range(i) {
                    let j = pattern.col(idx);
                    let mij = self.ops.mass[idx];
                    let (s, si, sj) = w[idx];
                    let ij = self.jac_pattern.find(i, j).expect("pattern entry");
                    let vals = jac.values_mut();
                    for r in 0..m {
                        vals[ij * mm + r * m + r] += (1.0 - s) * mij / dt;
                        vals[ii * mm + r * m + r] += s * mij / dt;
                    }
                    if with_grad && j != i {
                        let jd = pattern.find(i, j).expect("pattern entry");
                        let id = pattern.find(i, i).expect("diagonal");
                        for r in 0..m {
                            let xd = x[i * m + r] - x[j * m + r];
                            dr_dalpha[id][r] += si * mij * xd;
                            dr_dalpha[jd][r] += sj * mij * xd;
                        }
                    }
                }
            }
        }
        if with_grad {
            let vals = jac.values_mut();
            for i in 0..n {
                for idx in pattern.row_range(i) {
                    let d = pattern.col(idx);
                    let coef = dr_dalpha[idx];
                    if coef[..m].iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    for &(k, g) in &alpha.grads[d] {
                        let (node, c) = (k / m, k % m);
                        let e = self.jac_pattern.find(i, node).expect("two-ring pattern");
                        for r in 0..m {
                            vals[e * mm + r * m + c] += coef[r] * g;
                        }
                    }
                }
            }
        }
        self.dirichlet_rows(&mut jac);
        Ok(jac)
    }

    /// Picard matrix `M̃/Δt + K + B` with the detector set to one on the left-hand side.
    pub fn picard_matrix(&self, u: &StateVector) -> Result<BlockSparseMatrix> {
        let m = self.m();
        let space = self.space;
        let pattern = &self.ops.pattern;
        let mut a = match &self.scalar_k {
            Some(k) => k.clone(),
            None => convection_matrix(space, self.ops, self.model, u)?,
        };
        let one = DetectorField::constant(space, 1.0);
        let d = self.diffusion(u, &one)?;
        for i in 0..space.num_nodes() {
            for idx in pattern.row_range(i) {
                let s = if pattern.col(idx) == i { d.nu[idx] } else { -d.nu[idx] };
                let blk = a.block_at_mut(idx);
                for r in 0..m {
                    blk[r * m + r] += s;
                }
            }
        }
        if let Some((dt, _)) = &self.transient {
            let w = mass_weights(space, pattern, &one, &self.params);
            for i in 0..space.num_nodes() {
                let ii = pattern.find(i, i).expect("diagonal");
                for idx in pattern.row_range(i) {
                    let mij = self.ops.mass[idx];
                    let s = w[idx].0;
                    for r in 0..m {
                        a.block_at_mut(idx)[r * m + r] += (1.0 - s) * mij / dt;
                        a.block_at_mut(ii)[r * m + r] += s * mij / dt;
                    }
                }
            }
        }
        self.dirichlet_rows(&mut a);
        Ok(a)
    }

    fn dirichlet_rows(&self, a: &mut BlockSparseMatrix) {
        for i in 0..self.space.num_nodes() {
            for &(c, _) in self.dirichlet.fixed(i) {
                a.set_identity_row(i, c);
            }
        }
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Outcome of a line search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub lambda: f64,
    /// `‖R‖` at the returned step (infinite if it was never admissible).
    pub norm: f64,
    pub backtracks: usize,
    /// Whether the sufficient-decrease condition holds at the returned step.
    pub accepted: bool,
}

pub const LS_C: f64 = 1e-4;
pub const LS_MIN_LAMBDA: f64 = 1e-4;
pub const LS_MAX_BACKTRACKS: usize = 10;

/// Cubic backtracking on `φ(λ) = ½‖R(U + λΔU)‖²`.
///
/// `eval(λ)` returns `‖R(U + λΔU)‖`, or `None` where the state is inadmissible.
/// `slope` is `φ′(0)`; for an exact Newton step it is `−‖R(U)‖²`.
pub fn line_search(mut eval: impl FnMut(f64) -> Option<f64>, r0: f64, slope: f64) -> LineSearch {
    if r0 == 0.0 {
        return LineSearch { lambda: 1.0, norm: 0.0, backtracks: 0, accepted: true };
    }
    let slope = if slope < 0.0 { slope } else { -r0 * r0 };
    let phi0 = 0.5 * r0 * r0;
    let mut lambda = 1.0;
    let mut prev: Option<(f64, f64)> = None;
    for backtracks in 0..=LS_MAX_BACKTRACKS {
        let value = eval(lambda);
        if let Some(rn) = value {
            if rn <= (1.0 - LS_C * lambda) * r0 {
                return LineSearch { lambda, norm: rn, backtracks, accepted: true };
            }
        }
        if backtracks == LS_MAX_BACKTRACKS {
            break;
        }
        let next = match value {
            None => 0.5 * lambda,
            Some(rn) => {
                let phi = 0.5 * rn * rn;
                let t = match prev {
                    None => -slope * lambda * lambda / (2.0 * (phi - phi0 - slope * lambda)),
                    Some((lp, php)) => {
                        let r1 = phi - phi0 - slope * lambda;
                        let r2 = php - phi0 - slope * lp;
                        let den = lambda - lp;
                        let a = (r1 / (lambda * lambda) - r2 / (lp * lp)) / den;
                        let b = (-lp * r1 / (lambda * lambda) + lambda * r2 / (lp * lp)) / den;
                        if a == 0.0 {
                            -slope / (2.0 * b)
                        } else {
                            let disc = (b * b - 3.0 * a * slope).max(0.0);
                            (-b + disc.sqrt()) / (3.0 * a)
                        }
                    }
                };
                prev = Some((lambda, phi));
                if t.is_finite() {
                    t
                } else {
                    0.5 * lambda
                }
            }
        };
        lambda = next.clamp(0.1 * lambda, 0.5 * lambda);
    }
    let norm = eval(LS_MIN_LAMBDA).unwrap_or(f64::INFINITY);
    LineSearch { lambda: LS_MIN_LAMBDA, norm, backtracks: LS_MAX_BACKTRACKS, accepted: norm < r0 }
}

fn step(u: &StateVector, du: &[f64], lambda: f64) -> StateVector {
    let data = u.as_slice().iter().zip(du).map(|(a, b)| a + lambda * b).collect();
    StateVector::from_vec(u.components(), data)
}

/// Residual norm, treating inadmissible states as a failed evaluation.
fn residual_norm(problem: &Problem<'_>, u: &StateVector) -> Result<Option<f64>> {
    match problem.residual(u) {
        Ok(r) => Ok(Some(norm2(&r)).filter(|v| v.is_finite())),
        Err(Error::InadmissibleState { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Hybrid Picard–Newton solve of `R(U) = 0` starting from `u0`.
///
/// Returns the last accepted iterate and its history; running out of
/// iterations is reported through `converged = false`, not as an error.
pub fn hybrid_solve(
    problem: &mut Problem<'_>,
    u0: StateVector,
    cfg: &NonlinearConfig,
) -> Result<(StateVector, SolveReport)> {
    cfg.validate()?;
    let mut u = u0;
    problem.dirichlet.impose(&mut u);
    let mut linear = LinearSolver::new(cfg.linear);
    let mut report = SolveReport::default();
    problem.refresh_scaling(&u)?;
    let mut r = problem.residual(&u)?;
    let r0 = norm2(&r);
    report.residual_norms.push(r0);
    if r0 == 0.0 {
        report.converged = true;
        return Ok((u, report));
    }
    let mut phase = Phase::Picard;
    let mut fallback_used = false;
    while report.iterations() < cfg.max_iters {
        let rn = norm2(&r);
        if rn / r0 < cfg.tol2 {
            report.converged = true;
            break;
        }
        if phase == Phase::Picard && rn / r0 < cfg.tol1 {
            phase = Phase::Newton;
            report.switched_at = Some(report.iterations());
        }
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let a = match phase {
            Phase::Picard => problem.picard_matrix(&u)?,
            Phase::Newton => problem.jacobian(&u)?,
        };
        let du = linear.solve(&a, &rhs)?;
        let ls = line_search(|l| residual_norm(problem, &step(&u, &du, l)).ok().flatten(), rn, -rn * rn);
        debug!("{phase:?} iteration {}: |R| = {rn:.3e}, lambda = {:.3e}", report.iterations(), ls.lambda);
        if !ls.accepted {
            // Try the other linearisation once before giving up.
            if fallback_used {
                info!("line search stalled at |R|/|R0| = {:.3e}", rn / r0);
                break;
            }
            fallback_used = true;
            phase = match phase {
                Phase::Picard => {
                    report.switched_at.get_or_insert(report.iterations());
                    Phase::Newton
                }
                Phase::Newton => Phase::Picard,
            };
            continue;
        }
        fallback_used = false;
        u = step(&u, &du, ls.lambda);
        match phase {
            Phase::Picard => report.picard_iters += 1,
            Phase::Newton => report.newton_iters += 1,
        }
        report.phases.push(phase);
        report.lambdas.push(ls.lambda);
        problem.refresh_scaling(&u)?;
        r = problem.residual(&u)?;
        let rn_new = norm2(&r);
        report.residual_norms.push(rn_new);
        let unorm = u.norm();
        let du_rel = norm2(&du) / if unorm > 0.0 { unorm } else { 1.0 };
        if rn_new / r0 < cfg.tol2 || (phase == Phase::Newton && du_rel < cfg.du_tol) {
            report.converged = true;
            break;
        }
        if phase == Phase::Newton && report.switched_at.is_none() {
            report.switched_at = Some(report.iterations());
        }
    }
    Ok((u, report))
}

/// One Backward Euler step from `u_n` with time step `dt`.
pub fn be_step(
    problem: &mut Problem<'_>,
    u_n: &StateVector,
    dt: f64,
    cfg: &NonlinearConfig,
) -> Result<(StateVector, SolveReport)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    problem.transient = Some((dt, u_n.clone()));
    let out = hybrid_solve(problem, u_n.clone(), cfg);
    problem.transient = None;
    out
}
