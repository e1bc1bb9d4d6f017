//! Linear solves for block sparse systems: sparse LU with a cached symbolic
//! factorisation, or restarted GMRES preconditioned with ILU(0).
//!
//! The direct solver keeps the last numeric factors of each pattern. A later
//! matrix on the same pattern is first solved by GMRES preconditioned with
//! those factors, and refactorised only when that fails to converge quickly.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat, SymbolicSparseColMatRef};
use faer::Mat;

use crate::error::{Error, Result};
use crate::sparse::{BlockSparseMatrix, Pattern};

/// Choice of linear solver.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LinearSolverKind {
    #[default]
    Direct,
    Gmres {
        restart: usize,
        max_iters: usize,
        tol: f64,
    },
}

/// Scalar compressed-row structure of a block pattern.
#[derive(Debug, Clone)]
struct ScalarStructure {
    pattern: Arc<Pattern>,
    m: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    /// Position of each scalar entry in the block value array.
    source: Vec<usize>,
}

impl ScalarStructure {
    fn new(pattern: Arc<Pattern>, m: usize) -> Self {
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut source = Vec::new();
        for i in 0..pattern.n() {
            for r in 0..m {
                for idx in pattern.row_range(i) {
                    let j = pattern.col(idx);
                    for c in 0..m {
                        cols.push(j * m + c);
                        source.push(idx * m * m + r * m + c);
                    }
                }
                row_ptr.push(cols.len());
            }
        }
        Self { pattern, m, row_ptr, cols, source }
    }

    fn matches(&self, a: &BlockSparseMatrix) -> bool {
        self.m == a.block_size() && (Arc::ptr_eq(&self.pattern, a.pattern()) || *self.pattern == **a.pattern())
    }

    fn values(&self, a: &BlockSparseMatrix) -> Vec<f64> {
        let v = a.values();
        self.source.iter().map(|&s| v[s]).collect()
    }

    fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }
}

struct DirectCache {
    structure: ScalarStructure,
    // The row structure of A is the column structure of Aᵀ.
    transposed: SymbolicSparseColMat<usize>,
    symbolic: SymbolicLu<usize>,
    /// Factors of the last matrix factorised on this pattern.
    factors: Option<Factors>,
}

/// Symbolic caches kept at once (the Picard and Jacobian patterns).
const CACHED_PATTERNS: usize = 2;

/// GMRES budget and tolerance when reusing stale factors.
const REUSE_MAX_ITERS: usize = 25;
const REUSE_TOL: f64 = 1e-10;

/// Numeric LU factors of one matrix.
struct Factors {
    lu: Lu<usize, f64>,
}

impl Factors {
    fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        let mut m = Mat::from_fn(n, 1, |i, _| x[i]);
        self.lu.solve_transpose_in_place(m.as_mut());
        for (i, v) in x.iter_mut().enumerate() {
            *v = m[(i, 0)];
        }
    }
}

/// Linear solver that reuses symbolic work while the sparsity pattern is unchanged.
pub struct LinearSolver {
    kind: LinearSolverKind,
    direct: Vec<DirectCache>,
    structure: Option<ScalarStructure>,
}

impl std::fmt::Debug for LinearSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearSolver").field("kind", &self.kind).finish_non_exhaustive()
    }
}

/// Relative residual `‖A x − b‖ / ‖b‖` (absolute when `b = 0`).
pub fn relative_residual(a: &BlockSparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r = ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nb > 0.0 {
        r / nb
    } else {
        r
    }
}

impl LinearSolver {
    pub fn new(kind: LinearSolverKind) -> Self {
        Self { kind, direct: Vec::new(), structure: None }
    }

    pub fn kind(&self) -> LinearSolverKind {
        self.kind
    }

    /// Solves `A x = b`.
    pub fn solve(&mut self, a: &BlockSparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != a.dim() {
            return Err(Error::InvalidArgument(format!(
                "right-hand side has length {} for a system of size {}",
                b.len(),
                a.dim()
            )));
        }
        match self.kind {
            LinearSolverKind::Direct => self.solve_direct(a, b),
            LinearSolverKind::Gmres { restart, max_iters, tol } => {
                if !self.structure.as_ref().is_some_and(|s| s.matches(a)) {
                    self.structure = Some(ScalarStructure::new(a.pattern().clone(), a.block_size()));
                }
                let s = self.structure.as_ref().expect("structure");
                let values = s.values(a);
                let pre = Ilu0::new(s, &values)?;
                gmres(|x, y| csr_mul(s, &values, x, y), |x| pre.apply(x), b, restart, max_iters, tol)
            }
        }
    }

    fn cache_index(&mut self, a: &BlockSparseMatrix) -> Result<usize> {
        if let Some(p) = self.direct.iter().position(|c| c.structure.matches(a)) {
            return Ok(p);
        }
        let structure = ScalarStructure::new(a.pattern().clone(), a.block_size());
        let n = structure.dim();
        let transposed =
            SymbolicSparseColMat::new_checked(n, n, structure.row_ptr.clone(), None, structure.cols.clone());
        let symbolic = SymbolicLu::try_new(transposed.as_ref())
            .map_err(|e| Error::SingularMatrix(format!("symbolic factorisation failed: {e:?}")))?;
        if self.direct.len() == CACHED_PATTERNS {
            self.direct.remove(0);
        }
        self.direct.push(DirectCache { structure, transposed, symbolic, factors: None });
        Ok(self.direct.len() - 1)
    }

    fn solve_direct(&mut self, a: &BlockSparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
        let pos = self.cache_index(a)?;
        let cache = &mut self.direct[pos];
        if let Some(f) = &cache.factors {
            let reused = gmres(
                |x, y| a.mul_vec_into(x, y),
                |x| f.solve_in_place(x),
                b,
                REUSE_MAX_ITERS,
                REUSE_MAX_ITERS,
                REUSE_TOL,
            );
            if let Ok(x) = reused {
                if x.iter().all(|v| v.is_finite()) {
                    return Ok(x);
                }
            }
        }
        cache.factors = None;
        let values = cache.structure.values(a);
        let sym: SymbolicSparseColMatRef<'_, usize> = cache.transposed.as_ref();
        let at = SparseColMatRef::new(sym, &values);
        let lu = Lu::try_new_with_symbolic(cache.symbolic.clone(), at)
            .map_err(|e| Error::SingularMatrix(format!("numeric factorisation failed: {e:?}")))?;
        let f = Factors { lu };
        let mut out = b.to_vec();
        f.solve_in_place(&mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularMatrix("factorisation produced non-finite values".into()));
        }
        // One step of iterative refinement tightens badly scaled systems.
        if relative_residual(a, &out, b) > 1e-10 {
            let ax = a.mul_vec(&out);
            let mut r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            f.solve_in_place(&mut r);
            out.iter_mut().zip(&r).for_each(|(v, d)| *v += d);
        }
        cache.factors = Some(f);
        Ok(out)
    }
}

/// Incomplete LU factorisation with the sparsity of `A`, stored in place of its values.
struct Ilu0<'a> {
    s: &'a ScalarStructure,
    lu: Vec<f64>,
    diag: Vec<usize>,
}

impl<'a> Ilu0<'a> {
    fn new(s: &'a ScalarStructure, values: &[f64]) -> Result<Self> {
        let n = s.dim();
        let mut lu = values.to_vec();
        let mut diag = vec![usize::MAX; n];
        for (i, d) in diag.iter_mut().enumerate() {
            let r = s.row_ptr[i]..s.row_ptr[i + 1];
            let k = s.cols[r.clone()]
                .binary_search(&i)
                .map_err(|_| Error::SingularMatrix(format!("missing diagonal in row {i}")))?;
            *d = r.start + k;
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let r = s.row_ptr[i]..s.row_ptr[i + 1];
            for p in r.clone() {
                pos[s.cols[p]] = p;
            }
            for p in r.clone() {
                let k = s.cols[p];
                if k >= i {
                    break;
                }
                let piv = lu[diag[k]];
                if piv == 0.0 {
                    return Err(Error::SingularMatrix(format!("zero pivot in row {k}")));
                }
                let l = lu[p] / piv;
                lu[p] = l;
                for q in diag[k] + 1..s.row_ptr[k + 1] {
                    let t = pos[s.cols[q]];
                    if t != usize::MAX {
                        lu[t] -= l * lu[q];
                    }
                }
            }
            for p in r {
                pos[s.cols[p]] = usize::MAX;
            }
            if lu[diag[i]] == 0.0 {
                return Err(Error::SingularMatrix(format!("zero pivot in row {i}")));
            }
        }
        Ok(Self { s, lu, diag })
    }

    fn apply(&self, x: &mut [f64]) {
        let s = self.s;
        let n = s.dim();
        for i in 0..n {
            let mut v = x[i];
            for p in s.row_ptr[i]..self.diag[i] {
                v -= self.lu[p] * x[s.cols[p]];
            }
            x[i] = v;
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            for p in self.diag[i] + 1..s.row_ptr[i + 1] {
                v -= self.lu[p] * x[s.cols[p]];
            }
            x[i] = v / self.lu[self.diag[i]];
        }
    }
}

fn csr_mul(s: &ScalarStructure, values: &[f64], x: &[f64], y: &mut [f64]) {
    for (i, yi) in y.iter_mut().enumerate() {
        *yi = (s.row_ptr[i]..s.row_ptr[i + 1]).map(|p| values[p] * x[s.cols[p]]).sum();
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Right-preconditioned restarted GMRES; `tol` bounds the true relative residual.
fn gmres(
    matvec: impl Fn(&[f64], &mut [f64]),
    precondition: impl Fn(&mut [f64]),
    b: &[f64],
    restart: usize,
    max_iters: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    let n = b.len();
    let restart = restart.max(1);
    let nb = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if nb == 0.0 {
        return Ok(x);
    }
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut iters = 0;
    let mut res = 1.0;
    while iters < max_iters {
        matvec(&x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let beta = dot(&r, &r).sqrt();
        res = beta / nb;
        if res <= tol {
            return Ok(x);
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|t| t / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k = 0;
        while k < restart && iters < max_iters {
            let mut z = v[k].clone();
            precondition(&mut z);
            matvec(&z, &mut w);
            for (jj, vj) in v.iter().enumerate() {
                h[jj][k] = dot(&w, vj);
                w.iter_mut().zip(vj).for_each(|(a, b)| *a -= h[jj][k] * b);
            }
            h[k + 1][k] = dot(&w, &w).sqrt();
            for jj in 0..k {
                let t = cs[jj] * h[jj][k] + sn[jj] * h[jj + 1][k];
                h[jj + 1][k] = -sn[jj] * h[jj][k] + cs[jj] * h[jj + 1][k];
                h[jj][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            let (c, sgn) = if d == 0.0 { (1.0, 0.0) } else { (h[k][k] / d, h[k + 1][k] / d) };
            cs[k] = c;
            sn[k] = sgn;
            h[k][k] = d;
            g[k + 1] = -sgn * g[k];
            g[k] *= c;
            let hk = h[k + 1][k];
            v.push(w.iter().map(|t| if hk > 0.0 { t / hk } else { 0.0 }).collect());
            iters += 1;
            k += 1;
            res = g[k].abs() / nb;
            if res <= tol || hk == 0.0 {
                break;
            }
        }
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            y[i] = (g[i] - (i + 1..k).map(|jj| h[i][jj] * y[jj]).sum::<f64>()) / h[i][i];
        }
        let mut upd = vec![0.0; n];
        for (i, yi) in y.iter().enumerate() {
            upd.iter_mut().zip(&v[i]).for_each(|(u, vi)| *u += yi * vi);
        }
        precondition(&mut upd);
        x.iter_mut().zip(&upd).for_each(|(a, b)| *a += b);
    }
    matvec(&x, &mut r);
    let final_res = r.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt() / nb;
    if final_res <= tol {
        Ok(x)
    } else {
        Err(Error::LinearSolverDiverged { iterations: iters, residual: final_res.max(res) })
    }
}
