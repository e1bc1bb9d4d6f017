//! Shock detectors, artificial diffusion and the detector-weighted mass matrix.
//!
//! Every routine comes in a sharp and a smooth (regularised) flavour selected by
//! [`Variant`]. Routines used by the Newton solver can also return derivatives:
//! detector gradients are taken with respect to the tracked components of the
//! nodal states, diffusion gradients with respect to the detector values and,
//! for the elemental Euler diffusion, the two states of the pair through the
//! Roe average.

use crate::assembly::Operators;
use crate::boundary::Dirichlet;
use crate::error::{Error, Result};
use crate::fespace::{FESpace, NodeRef, StateVector, SymmetricStencil};
use crate::physics::{norm, roe_average, roe_average_with_derivatives, PhysicsModel};
use crate::sparse::{BlockSparseMatrix, Pattern};

/// Sharp (non-differentiable) or smooth (regularised) stabilisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    Sharp,
    #[default]
    Smooth,
}

/// Detector exponent, regularisation parameters and their mesh-size scalings.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilizationParams {
    pub q: f64,
    pub sigma: f64,
    pub eps: f64,
    pub zeta: f64,
    /// Characteristic length `L`.
    pub length: f64,
    /// Largest wave speed over the domain.
    pub lambda_max: f64,
    pub dim: i32,
    /// Components watched by the detector.
    pub tracked: Vec<usize>,
    pub variant: Variant,
}

impl Default for StabilizationParams {
    fn default() -> Self {
        Self {
            q: 2.0,
            sigma: 1e-2,
            eps: 1e-4,
            zeta: 1e-10,
            length: 1.0,
            lambda_max: 1.0,
            dim: 2,
            tracked: vec![0],
            variant: Variant::Smooth,
        }
    }
}

impl StabilizationParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.sigma, self.eps, self.zeta, self.length];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.q >= 1.0) || self.tracked.is_empty() {
            return Err(Error::InvalidArgument(format!("invalid stabilization parameters {self:?}")));
        }
        Ok(())
    }

    pub fn sigma_h(&self, h: f64) -> f64 {
        self.sigma * self.lambda_max.powi(2) * self.length.powi(2 * (self.dim - 3)) * h.powi(4)
    }

    pub fn eps_h(&self, h: f64) -> f64 {
        self.eps * self.length.powi(-4) * h * h
    }

    pub fn zeta_h(&self) -> f64 {
        self.zeta / self.length
    }
}

/// `√(x² + ε)`, an upper bound of `|x|`.
pub fn absn(x: f64, eps: f64) -> f64 {
    (x * x + eps).sqrt()
}

pub fn absn_prime(x: f64, eps: f64) -> f64 {
    x / (x * x + eps).sqrt()
}

/// `x² / √(x² + ε)`, a lower bound of `|x|`.
pub fn absd(x: f64, eps: f64) -> f64 {
    x * x / (x * x + eps).sqrt()
}

pub fn absd_prime(x: f64, eps: f64) -> f64 {
    let s = x * x + eps;
    x * (x * x + 2.0 * eps) / (s * s.sqrt())
}

/// Smooth maximum `absn(x − y)/2 + (x + y)/2 ≥ max(x, y)`, evaluated without cancellation.
pub fn smax(x: f64, y: f64, sigma: f64) -> f64 {
    let d = (x - y).abs();
    x.max(y) + 0.5 * sigma / (absn(d, sigma) + d)
}

/// Smooth maximum and its partial derivatives.
pub fn smax_grad(x: f64, y: f64, sigma: f64) -> (f64, f64, f64) {
    let d = absn_prime(x - y, sigma);
    (smax(x, y, sigma), 0.5 * (1.0 + d), 0.5 * (1.0 - d))
}

/// Smooth limiter to one: `2x⁴ − 5x³ + 3x² + x` below one, one above.
pub fn z_limit(x: f64) -> f64 {
    if x < 1.0 {
        x * (1.0 + x * (3.0 + x * (-5.0 + 2.0 * x)))
    } else {
        1.0
    }
}

pub fn z_limit_prime(x: f64) -> f64 {
    if x < 1.0 {
        (x - 1.0) * (x - 1.0) * (8.0 * x + 1.0)
    } else {
        0.0
    }
}

fn max_grad(x: f64, y: f64) -> (f64, f64, f64) {
    if x >= y {
        (x, 1.0, 0.0)
    } else {
        (y, 0.0, 1.0)
    }
}

impl Variant {
    /// Maximum of two values with partial derivatives (one-sided for the sharp variant).
    pub fn max2(self, x: f64, y: f64, sigma: f64) -> (f64, f64, f64) {
        match self {
            Variant::Sharp => max_grad(x, y),
            Variant::Smooth => smax_grad(x, y, sigma),
        }
    }

    fn abs_upper(self, x: f64, eps: f64) -> (f64, f64) {
        match self {
            Variant::Sharp => (x.abs(), x.signum()),
            Variant::Smooth => (absn(x, eps), absn_prime(x, eps)),
        }
    }
}

/// Symmetric stencils of every neighbour pair, built once per space.
#[derive(Debug, Clone)]
pub struct StencilTable {
    rows: Vec<Vec<(usize, SymmetricStencil)>>,
}

impl StencilTable {
    pub fn new(space: &FESpace) -> Self {
        let rows = (0..space.num_nodes())
            .map(|i| {
                space.neighbors(i).iter().filter(|&&j| j != i).map(|&j| (j, space.symmetric_stencil(i, j))).collect()
            })
            .collect();
        Self { rows }
    }

    pub fn row(&self, i: usize) -> &[(usize, SymmetricStencil)] {
        &self.rows[i]
    }
}

/// Jump and mean of the linearised gradient of component `comp` at node `i` in direction `x_j − x_i`.
pub fn jump_mean(space: &FESpace, u: &StateVector, comp: usize, i: usize, j: usize) -> (f64, f64) {
    let st = space.symmetric_stencil(i, j);
    let ui = u.node(i)[comp];
    let a = (u.node(j)[comp] - ui) / st.r;
    if st.boundary_reduced {
        return (a, 0.5 * a.abs());
    }
    let us: f64 = st.weights.iter().map(|(k, w)| w * u.node(*k)[comp]).sum();
    let b = (us - ui) / st.r_sym;
    (a + b, 0.5 * (a.abs() + b.abs()))
}

/// Component detector at one node, with its gradient over nodal values of that component when requested.
pub fn shock_detector(
    space: &FESpace,
    table: &StencilTable,
    u: &StateVector,
    comp: usize,
    i: usize,
    params: &StabilizationParams,
    with_grad: bool,
) -> (f64, Vec<(usize, f64)>) {
    let ui = u.node(i)[comp];
    let eps = params.eps_h(space.node_h(i));
    let smooth = params.variant == Variant::Smooth;
    let mut jump = 0.0;
    let mut den = 0.0;
    // d(jump)/du and d(den)/du as sparse lists over nodes.
    let mut djump: Vec<(usize, f64)> = Vec::new();
    let mut dden: Vec<(usize, f64)> = Vec::new();
    let mut add_diff = |target: f64, coeffs: &[(usize, f64)], inv_r: f64, jump: &mut f64, den: &mut f64| {
        let d = (target - ui) * inv_r;
        *jump += d;
        let (m, dm) = if smooth { (absd(d, eps), absd_prime(d, eps)) } else { (d.abs(), d.signum()) };
        *den += m;
        if with_grad {
            for &(k, w) in coeffs {
                djump.push((k, w * inv_r));
                dden.push((k, dm * w * inv_r));
            }
            djump.push((i, -inv_r));
            dden.push((i, -dm * inv_r));
        }
    };
    for (j, st) in table.row(i) {
        add_diff(u.node(*j)[comp], &[(*j, 1.0)], 1.0 / st.r, &mut jump, &mut den);
        if !st.boundary_reduced {
            let us: f64 = st.weights.iter().map(|(k, w)| w * u.node(*k)[comp]).sum();
            add_diff(us, &st.weights, 1.0 / st.r_sym, &mut jump, &mut den);
        }
    }

    let (alpha, dnum_scale, dden_scale) = if smooth {
        let zeta = params.zeta_h();
        let (an, dan) = (absn(jump, eps), absn_prime(jump, eps));
        let num = an + zeta;
        let d = den + zeta;
        let x = num / d;
        let z = z_limit(x);
        let alpha = z.powf(params.q);
        let dalpha_dx = if z > 0.0 { params.q * z.powf(params.q - 1.0) * z_limit_prime(x) } else { 0.0 };
        (alpha, dalpha_dx * dan / d, -dalpha_dx * x / d)
    } else if den == 0.0 {
        (0.0, 0.0, 0.0)
    } else {
        let x = (jump.abs() / den).min(1.0);
        let alpha = x.powf(params.q);
        let dadx = if x > 0.0 { params.q * x.powf(params.q - 1.0) } else { 0.0 };
        (alpha, dadx * jump.signum() / den, -dadx * x / den)
    };

    let mut grad = Vec::new();
    if with_grad {
        grad.extend(djump.into_iter().map(|(k, v)| (k, v * dnum_scale)));
        grad.extend(dden.into_iter().map(|(k, v)| (k, v * dden_scale)));
        merge_sparse(&mut grad);
    }
    (alpha, grad)
}

fn merge_sparse(v: &mut Vec<(usize, f64)>) {
    v.sort_unstable_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(v.len());
    for &(k, x) in v.iter() {
        match out.last_mut() {
            Some(last) if last.0 == k => last.1 += x,
            _ => out.push((k, x)),
        }
    }
    *v = out;
}

/// Nodal detector values, their extension to hanging nodes, and optional gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorField {
    pub values: Vec<f64>,
    pub hanging: Vec<f64>,
    /// Per conforming node: `(scalar DOF index n·m + c, ∂α/∂u)`.
    pub grads: Vec<Vec<(usize, f64)>>,
    /// Per hanging node: `(master, ∂α_k/∂α_master)`.
    pub hanging_grads: Vec<Vec<(usize, f64)>>,
}

impl DetectorField {
    /// The same value at every conforming and hanging node.
    pub fn constant(space: &FESpace, value: f64) -> Self {
        Self {
            values: vec![value; space.num_nodes()],
            hanging: vec![value; space.num_hanging()],
            grads: vec![Vec::new(); space.num_nodes()],
            hanging_grads: space
                .constraints()
                .masters
                .iter()
                .map(|ms| ms.iter().map(|(i, _)| (*i, 0.0)).collect())
                .collect(),
        }
    }

    /// Builds the field from conforming values, extending to hanging nodes by (smooth) master maximum.
    pub fn from_values(space: &FESpace, values: Vec<f64>, params: &StabilizationParams) -> Self {
        let mut f =
            Self { values, hanging: Vec::new(), grads: vec![Vec::new(); space.num_nodes()], hanging_grads: Vec::new() };
        f.extend_to_hanging(space, params);
        f
    }

    fn extend_to_hanging(&mut self, space: &FESpace, params: &StabilizationParams) {
        self.hanging.clear();
        self.hanging_grads.clear();
        for ms in &space.constraints().masters {
            let h = ms.iter().map(|(i, _)| space.node_h(*i)).fold(f64::INFINITY, f64::min);
            let sigma = params.sigma_h(h);
            let mut val = self.values[ms[0].0];
            let mut g = vec![(ms[0].0, 1.0)];
            for &(i, _) in &ms[1..] {
                let (v, dx, dy) = params.variant.max2(val, self.values[i], sigma);
                for e in g.iter_mut() {
                    e.1 *= dx;
                }
                g.push((i, dy));
                val = v;
            }
            if val > 1.0 {
                val = 1.0;
                g.iter_mut().for_each(|e| e.1 = 0.0);
            }
            self.hanging.push(val);
            self.hanging_grads.push(g);
        }
    }

    /// Value at a cell corner.
    pub fn at(&self, node: NodeRef) -> f64 {
        match node {
            NodeRef::Conforming(i) => self.values[i],
            NodeRef::Hanging(k) => self.hanging[k],
        }
    }
}

/// System detector: (smooth) maximum of the component detectors over `params.tracked`,
/// zero on fully constrained Dirichlet nodes.
pub fn system_detector(
    space: &FESpace,
    table: &StencilTable,
    u: &StateVector,
    dirichlet: &Dirichlet,
    params: &StabilizationParams,
    with_grad: bool,
) -> DetectorField {
    let m = u.components();
    let n = space.num_nodes();
    let mut values = vec![0.0; n];
    let mut grads = vec![Vec::new(); n];
    for i in 0..n {
        if dirichlet.is_fully_fixed(i) {
            continue;
        }
        let sigma = params.sigma_h(space.node_h(i));
        let mut acc: Option<(f64, Vec<(usize, f64)>)> = None;
        for &c in &params.tracked {
            let (a, g) = shock_detector(space, table, u, c, i, params, with_grad);
            let g: Vec<(usize, f64)> = g.into_iter().map(|(k, v)| (k * m + c, v)).collect();
            acc = Some(match acc {
                None => (a, g),
                Some((prev, mut pg)) => {
                    let (v, dx, dy) = params.variant.max2(prev, a, sigma);
                    pg.iter_mut().for_each(|e| e.1 *= dx);
                    pg.extend(g.into_iter().map(|(k, x)| (k, x * dy)));
                    merge_sparse(&mut pg);
                    (v, pg)
                }
            });
        }
        let (mut a, mut g) = acc.expect("at least one tracked component");
        if a > 1.0 {
            a = 1.0;
            g.clear();
        }
        values[i] = a;
        grads[i] = g;
    }
    let mut f = DetectorField { values, hanging: Vec::new(), grads, hanging_grads: Vec::new() };
    f.extend_to_hanging(space, params);
    f
}

/// Artificial diffusion per pattern entry: symmetric off-diagonal `ν_ij`, diagonal `Σ_j ν_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct Diffusion {
    pub nu: Vec<f64>,
}

impl Diffusion {
    pub fn zeros(pattern: &Pattern) -> Self {
        Self { nu: vec![0.0; pattern.nnz()] }
    }

    pub fn add_pair(&mut self, pattern: &Pattern, i: usize, j: usize, v: f64) {
        let a = pattern.find(i, j).expect("pair in pattern");
        let b = pattern.find(j, i).expect("pair in pattern");
        self.nu[a] += v;
        self.nu[b] += v;
        let di = pattern.find(i, i).expect("diagonal");
        let dj = pattern.find(j, j).expect("diagonal");
        self.nu[di] += v;
        self.nu[dj] += v;
    }
}

/// Scalar nodal diffusion for one pair with its derivatives with respect to `α_i` and `α_j`.
pub fn scalar_pair_diffusion(kij: f64, kji: f64, ai: f64, aj: f64, sigma: f64, variant: Variant) -> (f64, f64, f64) {
    let (inner, dx, dy) = variant.max2(ai * kij, aj * kji, sigma);
    let (outer, d0, _) = variant.max2(inner, 0.0, sigma);
    (outer, d0 * dx * kij, d0 * dy * kji)
}

/// Nodal diffusion `ν_ij = max(α_i K_ij, 0, α_j K_ji)` (or its smooth form) from the assembled scalar `K`.
pub fn scalar_diffusion(
    space: &FESpace,
    k: &BlockSparseMatrix,
    alpha: &DetectorField,
    params: &StabilizationParams,
) -> Diffusion {
    let pattern = k.pattern();
    let mut d = Diffusion::zeros(pattern);
    for i in 0..space.num_nodes() {
        for idx in pattern.row_range(i) {
            let j = pattern.col(idx);
            if j <= i {
                continue;
            }
            let kji = k.get(j, i, 0, 0);
            let h = space.node_h(i).min(space.node_h(j));
            let (nu, _, _) = scalar_pair_diffusion(
                k.block_at(idx)[0],
                kji,
                alpha.values[i],
                alpha.values[j],
                params.sigma_h(h),
                params.variant,
            );
            d.add_pair(pattern, i, j, nu);
        }
    }
    d
}

/// Elemental diffusion of one DOF pair of a cell, with derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDiffusion {
    pub i: usize,
    pub j: usize,
    pub nu: f64,
    /// `∂ν/∂α_d` for conforming DOFs `d`.
    pub dalpha: Vec<(usize, f64)>,
    /// `∂ν/∂u_i` and `∂ν/∂u_j`.
    pub du: [[f64; 4]; 2],
}

/// Regularised spectral radius `|v·c| + a‖c‖` and its derivative with respect to both pair states.
fn lambda_with_grad(
    v: [f64; 2],
    a: f64,
    dv: &[[[f64; 4]; 2]; 2],
    da: &[[f64; 4]; 2],
    c: [f64; 2],
    eps: f64,
    variant: Variant,
) -> (f64, [[f64; 4]; 2]) {
    let vc = v[0] * c[0] + v[1] * c[1];
    let cn = norm(c);
    let (abs_vc, dabs) = variant.abs_upper(vc, eps);
    let mut g = [[0.0; 4]; 2];
    for s in 0..2 {
        for k in 0..4 {
            g[s][k] = dabs * (c[0] * dv[s][0][k] + c[1] * dv[s][1][k]) + cn * da[s][k];
        }
    }
    (abs_vc + a * cn, g)
}

/// Elemental Euler diffusion `ν^e_ij` for every DOF pair of a cell.
///
/// Hanging corners contribute through their constraint weights: every pair of
/// distinct corners `(a, b)` adds `C_ai C_bj max(α_a λ_ab, α_b λ_ba)` and every
/// hanging corner `a` adds `C_ai C_aj α_a λ_aa`, all spectral radii evaluated at
/// the Roe state of `(u_i, u_j)`.
pub fn elemental_diffusion(
    space: &FESpace,
    ops: &Operators,
    model: &PhysicsModel,
    u: &StateVector,
    alpha: &DetectorField,
    cell: usize,
    params: &StabilizationParams,
) -> Result<Vec<PairDiffusion>> {
    let gamma =
        model.gamma().ok_or_else(|| Error::InvalidArgument("elemental diffusion needs a system model".into()))?;
    let geo = ops.geometry(space, cell);
    let cd = space.cell_dofs(cell);
    let nodes = space.cell_nodes(cell);
    let h = space.mesh().cell_h(cell);
    let (eps, sigma) = (params.eps_h(h), params.sigma_h(h));
    let variant = params.variant;
    let corner_alpha: [f64; 4] = nodes.map(|n| alpha.at(n));
    let mut out = Vec::with_capacity(cd.dofs.len() * (cd.dofs.len() - 1) / 2);

    for p in 0..cd.dofs.len() {
        for q in p + 1..cd.dofs.len() {
            let (i, j) = (cd.dofs[p], cd.dofs[q]);
            let (roe, rd) = roe_average_with_derivatives(u.node(i), u.node(j), gamma).map_err(|e| e.at_node(i))?;
            let lam = |a: usize, b: usize| lambda_with_grad(roe.v, roe.a, &rd.dv, &rd.da, geo.c[a][b], eps, variant);
            let (wp, wq) = (&cd.weights[p], &cd.weights[q]);
            let mut nu = 0.0;
            let mut dcorner = [0.0; 4];
            let mut du = [[0.0; 4]; 2];
            // Symmetrised over (p, q) ↔ (q, p) so that ν_ij = ν_ji.
            for a in 0..4 {
                for b in 0..4 {
                    if a == b {
                        continue;
                    }
                    let w = wp[a] * wq[b];
                    if w == 0.0 {
                        continue;
                    }
                    let (lab, glab) = lam(a, b);
                    let (lba, glba) = lam(b, a);
                    let (s, sx, sy) = variant.max2(corner_alpha[a] * lab, corner_alpha[b] * lba, sigma);
                    nu += w * s;
                    dcorner[a] += w * sx * lab;
                    dcorner[b] += w * sy * lba;
                    for side in 0..2 {
                        for k in 0..4 {
                            du[side][k] +=
                                w * (sx * corner_alpha[a] * glab[side][k] + sy * corner_alpha[b] * glba[side][k]);
                        }
                    }
                }
            }
            for a in 0..4 {
                if !matches!(nodes[a], NodeRef::Hanging(_)) {
                    continue;
                }
                let w = wp[a] * wq[a];
                if w == 0.0 {
                    continue;
                }
                let (laa, glaa) = lam(a, a);
                nu += w * corner_alpha[a] * laa;
                dcorner[a] += w * laa;
                for side in 0..2 {
                    for k in 0..4 {
                        du[side][k] += w * corner_alpha[a] * glaa[side][k];
                    }
                }
            }
            let mut dalpha = Vec::new();
            for a in 0..4 {
                if dcorner[a] == 0.0 {
                    continue;
                }
                match nodes[a] {
                    NodeRef::Conforming(d) => dalpha.push((d, dcorner[a])),
                    NodeRef::Hanging(k) => {
                        for &(d, g) in &alpha.hanging_grads[k] {
                            dalpha.push((d, dcorner[a] * g));
                        }
                    }
                }
            }
            merge_sparse(&mut dalpha);
            out.push(PairDiffusion { i, j, nu, dalpha, du });
        }
    }
    Ok(out)
}

/// Assembled artificial diffusion for either model.
pub fn diffusion(
    space: &FESpace,
    ops: &Operators,
    model: &PhysicsModel,
    u: &StateVector,
    k: &BlockSparseMatrix,
    alpha: &DetectorField,
    params: &StabilizationParams,
) -> Result<Diffusion> {
    if model.is_scalar() {
        return Ok(scalar_diffusion(space, k, alpha, params));
    }
    let mut d = Diffusion::zeros(&ops.pattern);
    for cell in 0..space.num_cells() {
        for pd in elemental_diffusion(space, ops, model, u, alpha, cell, params)? {
            d.add_pair(&ops.pattern, pd.i, pd.j, pd.nu);
        }
    }
    Ok(d)
}

/// Graph-Laplacian stabilisation matrix: `B_ij = −ν_ij I`, `B_ii = ν_ii I`.
pub fn stabilization_matrix(pattern: &std::sync::Arc<Pattern>, d: &Diffusion, m: usize) -> BlockSparseMatrix {
    let mut b = BlockSparseMatrix::zeros(pattern.clone(), m);
    for i in 0..pattern.n() {
        for idx in pattern.row_range(i) {
            let s = if pattern.col(idx) == i { d.nu[idx] } else { -d.nu[idx] };
            let blk = b.block_at_mut(idx);
            for r in 0..m {
                blk[r * m + r] = s;
            }
        }
    }
    b
}

/// `(B U)_i = Σ_j ν_ij (u_i − u_j)`.
pub fn stabilization_action(pattern: &Pattern, d: &Diffusion, u: &StateVector) -> Vec<f64> {
    let m = u.components();
    let mut out = vec![0.0; u.as_slice().len()];
    for i in 0..pattern.n() {
        let ui = u.node(i);
        for idx in pattern.row_range(i) {
            let j = pattern.col(idx);
            if j == i {
                continue;
            }
            let uj = u.node(j);
            for r in 0..m {
                out[i * m + r] += d.nu[idx] * (ui[r] - uj[r]);
            }
        }
    }
    out
}

/// Mass-matrix weight `max(α_i, α_j)` (or its smooth form) for every pattern entry.
pub fn mass_weights(
    space: &FESpace,
    pattern: &Pattern,
    alpha: &DetectorField,
    params: &StabilizationParams,
) -> Vec<(f64, f64, f64)> {
    let mut w = Vec::with_capacity(pattern.nnz());
    for i in 0..pattern.n() {
        for idx in pattern.row_range(i) {
            let j = pattern.col(idx);
            let h = space.node_h(i).min(space.node_h(j));
            w.push(params.variant.max2(alpha.values[i], alpha.values[j], params.sigma_h(h)));
        }
    }
    w
}

/// Detector-weighted mass `M̃_ij = [1 − max(α_i, α_j)] M_ij + δ_ij Σ_k max(α_i, α_k) M_ik`.
pub fn detector_mass(
    space: &FESpace,
    ops: &Operators,
    alpha: &DetectorField,
    params: &StabilizationParams,
    m: usize,
) -> BlockSparseMatrix {
    let pattern = &ops.pattern;
    let w = mass_weights(space, pattern, alpha, params);
    let mut out = BlockSparseMatrix::zeros(pattern.clone(), m);
    for i in 0..pattern.n() {
        let diag = pattern.find(i, i).expect("diagonal");
        let mut extra = 0.0;
        for idx in pattern.row_range(i) {
            let v = (1.0 - w[idx].0) * ops.mass[idx];
            extra += w[idx].0 * ops.mass[idx];
            let blk = out.block_at_mut(idx);
            for r in 0..m {
                blk[r * m + r] += v;
            }
        }
        let blk = out.block_at_mut(diag);
        for r in 0..m {
            blk[r * m + r] += extra;
        }
    }
    out
}

/// Outcome of [`verify_bounds`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundsReport {
    /// Nodes where the local discrete maximum principle fails (scalar only).
    pub dmp_violations: Vec<usize>,
    /// Nodes whose stabilised off-diagonal entries were checked.
    pub checked_nodes: usize,
    /// Largest eigenvalue of any checked off-diagonal block of `K̄(u_ij)`.
    pub max_offdiag_eigenvalue: f64,
    /// Largest mismatch between `(K̄U)_i` and `Σ_{j≠i} K̄_ij (u_j − u_i)` over interior nodes.
    pub max_row_identity_error: f64,
}

/// Checks the discrete maximum principle (scalar) and the local-bounds structure of the
/// stabilised operator at nodes whose detector reaches one.
pub fn verify_bounds(
    space: &FESpace,
    ops: &Operators,
    model: &PhysicsModel,
    u: &StateVector,
    alpha: &DetectorField,
    d: &Diffusion,
    dirichlet: &Dirichlet,
    tol: f64,
) -> Result<BoundsReport> {
    let pattern = &ops.pattern;
    let m = model.components();
    let mut report = BoundsReport { max_offdiag_eigenvalue: f64::NEG_INFINITY, ..Default::default() };
    let ku = crate::assembly::convection_action(space, ops, model, u)?;
    let bu = stabilization_action(pattern, d, u);
    for i in 0..space.num_nodes() {
        if dirichlet.is_fully_fixed(i) {
            continue;
        }
        let ui = u.node(i);
        if m == 1 {
            let others = pattern.row(i).iter().filter(|&&j| j != i).map(|&j| u.node(j)[0]);
            let (lo, hi) = others.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
            if ui[0] < lo - tol || ui[0] > hi + tol {
                report.dmp_violations.push(i);
            }
        }
        let offdiag = |j: usize, idx: usize| -> Result<(f64, crate::physics::Block)> {
            let c = ops.c[idx];
            let mut blk = match *model {
                PhysicsModel::Scalar { velocity } => {
                    let v = velocity.at(space.coord(j));
                    let mut b = crate::physics::ZERO_BLOCK;
                    b[0][0] = v[0] * c[0] + v[1] * c[1];
                    b
                }
                PhysicsModel::Euler { gamma } => {
                    let r = roe_average(ui, u.node(j), gamma)?;
                    crate::physics::euler_jacobian(r.v, r.h, c, gamma)
                }
            };
            for (r, row) in blk.iter_mut().enumerate().take(m) {
                row[r] -= d.nu[idx];
            }
            let eig = match *model {
                PhysicsModel::Scalar { .. } => blk[0][0],
                PhysicsModel::Euler { gamma } => {
                    let r = roe_average(ui, u.node(j), gamma)?;
                    r.v[0] * c[0] + r.v[1] * c[1] + r.a * norm(c) - d.nu[idx]
                }
            };
            Ok((eig, blk))
        };
        let interior = !space.is_boundary(i);
        let mut identity = vec![0.0; m];
        for idx in pattern.row_range(i) {
            let j = pattern.col(idx);
            if j == i {
                continue;
            }
            let (eig, blk) = offdiag(j, idx)?;
            if alpha.values[i] >= 1.0 {
                report.max_offdiag_eigenvalue = report.max_offdiag_eigenvalue.max(eig);
            }
            if interior {
                let uj = u.node(j);
                for r in 0..m {
                    identity[r] += (0..m).map(|c| blk[r][c] * (uj[c] - ui[c])).sum::<f64>();
                }
            }
        }
        if alpha.values[i] >= 1.0 {
            report.checked_nodes += 1;
        }
        if interior {
            let err = (0..m).map(|r| (ku[i * m + r] + bu[i * m + r] - identity[r]).powi(2)).sum::<f64>().sqrt();
            report.max_row_identity_error = report.max_row_identity_error.max(err);
        }
    }
    if report.checked_nodes == 0 {
        report.max_offdiag_eigenvalue = 0.0;
    }
    Ok(report)
}
