#![allow(dead_code, clippy::needless_range_loop)]

use faer::Mat;
use monoamr::amr::amr_loop;
use monoamr::assembly::Operators;
use monoamr::boundary::Dirichlet;
use monoamr::cases::{CaseDefinition, Scheme};
use monoamr::fespace::{FESpace, NodeRef, StateVector};
use monoamr::mesh::{AdaptiveMesh, CellKey, CellMark, Rect};
use monoamr::physics::{roe_average, PhysicsModel};
use monoamr::solver::{DetectorMode, Problem};
use monoamr::stabilization::{verify_bounds, Variant};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const GAMMA: f64 = 1.4;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Unit square, refined once, then the lower-left child refined again: 7 leaves, 2 hanging nodes.
pub fn seven_leaf_mesh() -> AdaptiveMesh {
    refine_keys(&AdaptiveMesh::new_refined(1, 1, Rect::unit(), 1).unwrap(), &[CellKey::new(1, 0, 0)])
}

pub fn refine_keys(mesh: &AdaptiveMesh, keys: &[CellKey]) -> AdaptiveMesh {
    let marks: Vec<CellMark> =
        mesh.leaves().iter().map(|k| if keys.contains(k) { CellMark::Refine } else { CellMark::Keep }).collect();
    mesh.adapt(&marks).0
}

/// A 4×4 mesh with a refined patch, so hanging nodes sit in the interior and on the boundary.
pub fn hanging_mesh() -> AdaptiveMesh {
    let m = AdaptiveMesh::new_uniform(4, 4, Rect::unit()).unwrap();
    let m = refine_keys(&m, &[CellKey::new(0, 1, 1), CellKey::new(0, 2, 1), CellKey::new(0, 0, 3)]);
    refine_keys(&m, &[CellKey::new(1, 3, 3)])
}

pub fn euler_state(rho: f64, v: [f64; 2], p: f64) -> [f64; 4] {
    let e = p / (GAMMA - 1.0) + 0.5 * rho * (v[0] * v[0] + v[1] * v[1]);
    [rho, rho * v[0], rho * v[1], e]
}

pub fn random_euler_state(rng: &mut impl Rng) -> [f64; 4] {
    euler_state(
        rng.random_range(0.5..2.0),
        [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
        rng.random_range(0.5..2.0),
    )
}

pub fn euler_flux(u: &[f64]) -> [[f64; 4]; 2] {
    let (rho, mx, my, e) = (u[0], u[1], u[2], u[3]);
    let (vx, vy) = (mx / rho, my / rho);
    let p = (GAMMA - 1.0) * (e - 0.5 * rho * (vx * vx + vy * vy));
    [[mx, mx * vx + p, my * vx, (e + p) * vx], [my, mx * vy, my * vy + p, (e + p) * vy]]
}

/// Every distinct leaf corner of a mesh, with its constraint row over the conforming DOFs of `space`,
/// found geometrically: a point in the open interior of some leaf edge is hanging on that edge's endpoints.
pub struct FullNodes {
    pub fine: Vec<[u32; 2]>,
    /// `C[a]` = (conforming DOF, weight) pairs.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub hanging: Vec<bool>,
}

impl FullNodes {
    pub fn new(space: &FESpace) -> Self {
        let mesh = space.mesh();
        let mut fine: Vec<[u32; 2]> = Vec::new();
        for c in 0..mesh.num_cells() {
            for k in 0..4 {
                let p = mesh.corner(c, k);
                if !fine.contains(&p) {
                    fine.push(p);
                }
            }
        }
        let conforming = |p: [u32; 2]| match space.node_at(p) {
            Some(NodeRef::Conforming(i)) => i,
            other => panic!("edge endpoint {p:?} is not conforming: {other:?}"),
        };
        let mut rows = Vec::new();
        let mut hanging = Vec::new();
        for &p in &fine {
            let mut master = None;
            'cells: for c in 0..mesh.num_cells() {
                let (lo, hi) = mesh.key(c).fine_bounds();
                let edges = [
                    ([lo[0], lo[1]], [hi[0], lo[1]]),
                    ([lo[0], hi[1]], [hi[0], hi[1]]),
                    ([lo[0], lo[1]], [lo[0], hi[1]]),
                    ([hi[0], lo[1]], [hi[0], hi[1]]),
                ];
                for (a, b) in edges {
                    let on_x = a[1] == b[1] && p[1] == a[1] && p[0] > a[0] && p[0] < b[0];
                    let on_y = a[0] == b[0] && p[0] == a[0] && p[1] > a[1] && p[1] < b[1];
                    if on_x || on_y {
                        master = Some((a, b));
                        break 'cells;
                    }
                }
            }
            match master {
                Some((a, b)) => {
                    rows.push(vec![(conforming(a), 0.5), (conforming(b), 0.5)]);
                    hanging.push(true);
                }
                None => {
                    rows.push(vec![(conforming(p), 1.0)]);
                    hanging.push(false);
                }
            }
        }
        Self { fine, rows, hanging }
    }

    pub fn index(&self, p: [u32; 2]) -> usize {
        self.fine.iter().position(|q| *q == p).expect("known corner")
    }

    /// Dense `C` with one row per full node and one column per conforming DOF.
    pub fn dense_c(&self, n: usize) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut row = vec![0.0; n];
                for &(j, w) in r {
                    row[j] += w;
                }
                row
            })
            .collect()
    }
}

const GAUSS2: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

fn q1(a: usize, t: [f64; 2]) -> f64 {
    let fx = if a & 1 == 0 { 1.0 - t[0] } else { t[0] };
    let fy = if a >> 1 == 0 { 1.0 - t[1] } else { t[1] };
    fx * fy
}

fn q1_grad(a: usize, t: [f64; 2], h: [f64; 2]) -> [f64; 2] {
    let (sx, sy) = (if a & 1 == 0 { -1.0 } else { 1.0 }, if a >> 1 == 0 { -1.0 } else { 1.0 });
    let fx = if a & 1 == 0 { 1.0 - t[0] } else { t[0] };
    let fy = if a >> 1 == 0 { 1.0 - t[1] } else { t[1] };
    [sx * fy / h[0], sy * fx / h[1]]
}

/// `(∇φ_b, φ_a)` and `(φ_a, φ_b)` on an `h[0] × h[1]` rectangle by 2×2 Gauss quadrature.
pub fn quadrature_geometry(h: [f64; 2]) -> ([[[f64; 2]; 4]; 4], [[f64; 4]; 4]) {
    let mut c = [[[0.0; 2]; 4]; 4];
    let mut m = [[0.0; 4]; 4];
    let w = 0.25 * h[0] * h[1];
    for &x in &GAUSS2 {
        for &y in &GAUSS2 {
            for a in 0..4 {
                for b in 0..4 {
                    let g = q1_grad(b, [x, y], h);
                    c[a][b][0] += w * g[0] * q1(a, [x, y]);
                    c[a][b][1] += w * g[1] * q1(a, [x, y]);
                    m[a][b] += w * q1(a, [x, y]) * q1(b, [x, y]);
                }
            }
        }
    }
    (c, m)
}

/// `f′(u)·n` written out from velocity and total enthalpy.
pub fn textbook_jacobian(v: [f64; 2], h: f64, n: [f64; 2]) -> [[f64; 4]; 4] {
    let g = GAMMA - 1.0;
    let (u, w) = (v[0], v[1]);
    let vn = u * n[0] + w * n[1];
    let k = 0.5 * (u * u + w * w);
    [
        [0.0, n[0], n[1], 0.0],
        [g * k * n[0] - u * vn, vn - (g - 1.0) * u * n[0], u * n[1] - g * w * n[0], g * n[0]],
        [g * k * n[1] - w * vn, w * n[0] - g * u * n[1], vn - (g - 1.0) * w * n[1], g * n[1]],
        [(g * k - h) * vn, h * n[0] - g * u * vn, h * n[1] - g * w * vn, (g + 1.0) * vn],
    ]
}

/// Full-node corner indices, geometry `(∇φ_b, φ_a)` and mass of one cell.
pub type DenseCell = ([usize; 4], [[[f64; 2]; 4]; 4], [[f64; 4]; 4]);

/// Dense assembly over every leaf corner, eliminated with the constraint matrix `C`.
pub struct Dense {
    pub space: FESpace,
    pub full: FullNodes,
    pub c: Vec<Vec<f64>>,
    pub cells: Vec<DenseCell>,
}

impl Dense {
    pub fn new(mesh: &AdaptiveMesh, m: usize) -> Self {
        let space = FESpace::new(mesh, m);
        let full = FullNodes::new(&space);
        let c = full.dense_c(space.num_nodes());
        let cells = (0..mesh.num_cells())
            .map(|e| {
                let idx = [0, 1, 2, 3].map(|k| full.index(mesh.corner(e, k)));
                let (g, ms) = quadrature_geometry(mesh.cell_size(e));
                (idx, g, ms)
            })
            .collect();
        Self { space, full, c, cells }
    }

    pub fn nf(&self) -> usize {
        self.full.fine.len()
    }

    /// `Cᵀ A C` for a dense full-node matrix `A`.
    pub fn eliminate(&self, a: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.space.num_nodes();
        let mut out = vec![vec![0.0; n]; n];
        for (p, row) in a.iter().enumerate() {
            for (q, &v) in row.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                for i in 0..n {
                    if self.c[p][i] == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        out[i][j] += self.c[p][i] * v * self.c[q][j];
                    }
                }
            }
        }
        out
    }

    pub fn full_matrix(&self, f: impl Fn(&[[f64; 2]; 4], &[f64; 4], usize, usize) -> f64) -> Vec<Vec<f64>> {
        let nf = self.nf();
        let mut a = vec![vec![0.0; nf]; nf];
        for (idx, g, ms) in &self.cells {
            for p in 0..4 {
                for q in 0..4 {
                    a[idx[p]][idx[q]] += f(&g[p], &ms[p], p, q);
                }
            }
        }
        a
    }
}

pub const JACOBIAN_DIRECTIONS: usize = 5;
pub const JACOBIAN_REL_TOL: f64 = 1e-5;

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest relative error of `J·w` against `(R(U+τw) − R(U−τw))/2τ` over random directions.
fn max_fd_error(problem: &Problem<'_>, u: &StateVector, seed: u64) -> f64 {
    let jac = problem.jacobian(u).unwrap();
    let mut r = rng(seed);
    let scale = u.as_slice().iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1.0);
    let tau = 1e-6 * scale;
    let mut worst = 0.0f64;
    for _ in 0..JACOBIAN_DIRECTIONS {
        let w: Vec<f64> = (0..u.as_slice().len()).map(|_| r.random_range(-1.0..1.0)).collect();
        let shifted = |s: f64| {
            let data = u.as_slice().iter().zip(&w).map(|(a, b)| a + s * tau * b).collect();
            problem.residual(&StateVector::from_vec(u.components(), data)).unwrap()
        };
        let (rp, rm) = (shifted(1.0), shifted(-1.0));
        let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * tau)).collect();
        let jw = jac.mul_vec(&w);
        let err: Vec<f64> = jw.iter().zip(&fd).map(|(a, b)| a - b).collect();
        worst = worst.max(l2(&err) / l2(&fd));
    }
    worst
}

/// Relative FD error of the analytic Jacobian of `case` on `mesh` at a random state, smooth variant.
pub fn jacobian_fd_error(
    case: &CaseDefinition,
    mesh: &AdaptiveMesh,
    u: impl Fn(&FESpace, &mut rand::rngs::StdRng) -> StateVector,
    transient: bool,
) -> f64 {
    let space = FESpace::new(mesh, case.model.components());
    let ops = Operators::new(&space);
    let dirichlet = Dirichlet::build(&space, &case.model, &case.boundary).unwrap();
    let mut params = case.params.clone();
    params.variant = Variant::Smooth;
    let mut problem = Problem::new(&space, &ops, &case.model, &dirichlet, params, DetectorMode::Computed).unwrap();
    let mut r = rng(3);
    let state = u(&space, &mut r);
    problem.refresh_scaling(&state).unwrap();
    if transient {
        problem.transient = Some((0.05, u(&space, &mut r)));
    }
    max_fd_error(&problem, &state, 17)
}

/// Corner inflow with random density, velocity and pressure perturbations.
pub fn perturbed_corner_state(space: &FESpace, r: &mut rand::rngs::StdRng) -> StateVector {
    let case = CaseDefinition::by_name("compression_corner").unwrap();
    StateVector::from_fn(space.num_nodes(), 4, |i| {
        let base = (case.initial)(space.coord(i));
        let rho = base[0] * r.random_range(0.8..1.25);
        let v = [base[1] / base[0] + r.random_range(-0.2..0.2), base[2] / base[0] + r.random_range(-0.2..0.2)];
        let p = 1.0 / GAMMA * r.random_range(0.8..1.25);
        euler_state(rho, v, p).to_vec()
    })
}

pub const DMP_TOL: f64 = 1e-8;
pub const BOUNDS_TOL: f64 = 1e-10;

/// Solves `case` with the smooth high-order scheme on the root mesh and one adapted mesh and
/// checks global bounds and the local DMP on both. Returns the extreme nodal values.
pub fn check_dmp(case: CaseDefinition) -> (f64, f64) {
    let mut case = case.with_scheme(Scheme::High);
    case.params.variant = Variant::Smooth;
    case.amr.max_steps = 1;
    let mut hanging_seen = false;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    amr_loop(&case, |snap| {
        let (space, u) = (snap.space, snap.u);
        assert!(snap.stats.converged, "{}: step {} did not converge", case.name, snap.stats.step);
        hanging_seen |= space.num_hanging() > 0;
        for &v in u.as_slice() {
            lo = lo.min(v);
            hi = hi.max(v);
            assert!((-DMP_TOL..=1.0 + DMP_TOL).contains(&v), "{}: value {v} outside [0, 1]", case.name);
        }
        let ops = Operators::new(space);
        let dirichlet = Dirichlet::build(space, &case.model, &case.boundary)?;
        let mut problem =
            Problem::new(space, &ops, &case.model, &dirichlet, case.params.clone(), DetectorMode::Computed)?;
        problem.refresh_scaling(u)?;
        let alpha = problem.detector_field(u, false);
        let d = problem.diffusion(u, &alpha)?;
        let report = verify_bounds(space, &ops, &case.model, u, &alpha, &d, &dirichlet, DMP_TOL)?;
        assert!(report.dmp_violations.is_empty(), "{}: DMP fails at nodes {:?}", case.name, report.dmp_violations);
        Ok(())
    })
    .unwrap();
    assert!(hanging_seen, "the adapted mesh should contain hanging nodes");
    (lo, hi)
}

/// Largest real part of the eigenvalues of `f′(u_ij)·c_ij − ν_ij I`, from a dense eigensolve.
fn offdiag_max_eigenvalue(ui: &[f64], uj: &[f64], c: [f64; 2], nu: f64) -> f64 {
    let r = roe_average(ui, uj, GAMMA).unwrap();
    let a = textbook_jacobian(r.v, r.h, c);
    Mat::from_fn(4, 4, |i, j| a[i][j] - if i == j { nu } else { 0.0 })
        .eigenvalues()
        .unwrap()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Checks the off-diagonal eigenvalue bound (dense eigensolves) on nodes with a saturated
/// detector and the interior row identity on an Euler state. Returns the checked node count
/// and the largest off-diagonal eigenvalue found.
pub fn check_local_bounds(space: &FESpace, u: &StateVector, detector: DetectorMode) -> (usize, f64) {
    let ops = Operators::new(space);
    let model = PhysicsModel::Euler { gamma: GAMMA };
    let dirichlet = Dirichlet::none(space.num_nodes(), 4);
    let params = monoamr::stabilization::StabilizationParams { tracked: vec![0, 3], ..Default::default() };
    let mut problem = Problem::new(space, &ops, &model, &dirichlet, params, detector).unwrap();
    problem.refresh_scaling(u).unwrap();
    let alpha = problem.detector_field(u, false);
    let d = problem.diffusion(u, &alpha).unwrap();
    let report = verify_bounds(space, &ops, &model, u, &alpha, &d, &dirichlet, 0.0).unwrap();
    assert!(report.max_offdiag_eigenvalue <= BOUNDS_TOL, "library eigenvalue {}", report.max_offdiag_eigenvalue);
    assert!(report.max_row_identity_error <= BOUNDS_TOL, "library row identity {}", report.max_row_identity_error);

    let pattern = &ops.pattern;
    let mut checked = 0;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..space.num_nodes() {
        let ui = u.node(i);
        let mut lhs = [0.0; 4];
        let mut rhs = [0.0; 4];
        for idx in pattern.row_range(i) {
            let j = pattern.col(idx);
            let (uj, c, nu) = (u.node(j), ops.c[idx], d.nu[idx]);
            let f = euler_flux(uj);
            for r in 0..4 {
                lhs[r] += f[0][r] * c[0] + f[1][r] * c[1];
            }
            if j == i {
                continue;
            }
            let roe = roe_average(ui, uj, GAMMA).unwrap();
            let a = textbook_jacobian(roe.v, roe.h, c);
            for r in 0..4 {
                lhs[r] += nu * (ui[r] - uj[r]);
                rhs[r] += (0..4).map(|k| (a[r][k] - if r == k { nu } else { 0.0 }) * (uj[k] - ui[k])).sum::<f64>();
            }
            if alpha.values[i] >= 1.0 {
                let eig = offdiag_max_eigenvalue(ui, uj, c, nu);
                assert!(eig <= BOUNDS_TOL, "block ({i}, {j}) has eigenvalue {eig}");
                worst = worst.max(eig);
            }
        }
        if alpha.values[i] >= 1.0 {
            checked += 1;
        }
        if !space.is_boundary(i) {
            let err = (0..4).map(|r| (lhs[r] - rhs[r]).powi(2)).sum::<f64>().sqrt();
            assert!(err <= BOUNDS_TOL, "row identity error {err} at interior node {i}");
        }
    }
    (checked, worst)
}
