//! Group finite-element assembly of the mass and convection operators.
//!
//! All integrals are exact for Q1 on axis-aligned rectangles. The convection
//! matrix is built from the assembled geometric coefficients
//! `c_ij = Σ_e (∇φ_j, φ_i)_e` (hanging corners folded onto their masters) and
//! nodal flux Jacobians: `K_ij = f′(u_j)·c_ij`. Integrating the Galerkin term
//! by parts with the full boundary flux turns `−(φ_j, ∇φ_i) + (φ_j φ_i, n)_Γ`
//! into exactly `c_ij`, so rows of outflow nodes carry the boundary term and
//! rows of inflow nodes are replaced by their Dirichlet data.

use std::sync::Arc;

use crate::error::Result;
use crate::fespace::{FESpace, StateVector};
use crate::physics::PhysicsModel;
use crate::sparse::{BlockSparseMatrix, Pattern};

const M1: [[f64; 2]; 2] = [[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]];

/// Exact Q1 integrals on one rectangle, corner order (0,0), (1,0), (0,1), (1,1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementalGeometry {
    /// `c[a][b] = (∇φ_b, φ_a)_e`.
    pub c: [[[f64; 2]; 4]; 4],
    /// `mass[a][b] = (φ_a, φ_b)_e`.
    pub mass: [[f64; 4]; 4],
}

impl ElementalGeometry {
    pub fn new(size: [f64; 2]) -> Self {
        let (hx, hy) = (size[0], size[1]);
        let sgn = |k: usize| if k == 0 { -1.0 } else { 1.0 };
        let mut c = [[[0.0; 2]; 4]; 4];
        let mut mass = [[0.0; 4]; 4];
        for a in 0..4 {
            let (ax, ay) = (a & 1, a >> 1);
            for b in 0..4 {
                let (bx, by) = (b & 1, b >> 1);
                c[a][b] = [0.5 * sgn(bx) * hy * M1[ay][by], 0.5 * sgn(by) * hx * M1[ax][bx]];
                mass[a][b] = hx * M1[ax][bx] * hy * M1[ay][by];
            }
        }
        Self { c, mass }
    }

    pub fn of_cell(space: &FESpace, cell: usize) -> Self {
        Self::new(space.mesh().cell_size(cell))
    }
}

/// Solution-independent operators of a space: sparsity, assembled `c_ij` and consistent mass.
#[derive(Debug, Clone)]
pub struct Operators {
    pub pattern: Arc<Pattern>,
    /// `c_ij` per pattern entry.
    pub c: Vec<[f64; 2]>,
    /// Scalar consistent mass per pattern entry.
    pub mass: Vec<f64>,
    /// Row sums of the consistent mass.
    pub lumped: Vec<f64>,
    /// Geometry per refinement level present in the mesh.
    geometry: Vec<Option<ElementalGeometry>>,
}

impl Operators {
    pub fn new(space: &FESpace) -> Self {
        let n = space.num_nodes();
        let rows: Vec<Vec<usize>> = (0..n).map(|i| space.neighbors(i).to_vec()).collect();
        let pattern = Arc::new(Pattern::from_rows(&rows));
        let mesh = space.mesh();
        let mut geometry: Vec<Option<ElementalGeometry>> = vec![None; mesh.max_level() as usize + 1];
        for cell in 0..mesh.num_cells() {
            let l = mesh.level(cell) as usize;
            if geometry[l].is_none() {
                geometry[l] = Some(ElementalGeometry::new(mesh.cell_size(cell)));
            }
        }
        let mut c = vec![[0.0; 2]; pattern.nnz()];
        let mut mass = vec![0.0; pattern.nnz()];
        for cell in 0..mesh.num_cells() {
            let g = geometry[mesh.level(cell) as usize].as_ref().expect("level geometry");
            let cd = space.cell_dofs(cell);
            for (ki, &i) in cd.dofs.iter().enumerate() {
                for (kj, &j) in cd.dofs.iter().enumerate() {
                    let (wi, wj) = (&cd.weights[ki], &cd.weights[kj]);
                    let mut cij = [0.0; 2];
                    let mut mij = 0.0;
                    for a in 0..4 {
                        if wi[a] == 0.0 {
                            continue;
                        }
                        for b in 0..4 {
                            let w = wi[a] * wj[b];
                            if w == 0.0 {
                                continue;
                            }
                            cij[0] += w * g.c[a][b][0];
                            cij[1] += w * g.c[a][b][1];
                            mij += w * g.mass[a][b];
                        }
                    }
                    let idx = pattern.find(i, j).expect("cell DOFs are neighbours");
                    c[idx][0] += cij[0];
                    c[idx][1] += cij[1];
                    mass[idx] += mij;
                }
            }
        }
        let lumped = (0..n).map(|i| pattern.row_range(i).map(|k| mass[k]).sum()).collect();
        Self { pattern, c, mass, lumped, geometry }
    }

    pub fn geometry(&self, space: &FESpace, cell: usize) -> &ElementalGeometry {
        self.geometry[space.mesh().level(cell) as usize].as_ref().expect("level geometry")
    }

    /// Consistent mass matrix with `m × m` identity blocks.
    pub fn mass_matrix(&self, m: usize) -> BlockSparseMatrix {
        let mut a = BlockSparseMatrix::zeros(self.pattern.clone(), m);
        for idx in 0..self.pattern.nnz() {
            let b = a.block_at_mut(idx);
            for r in 0..m {
                b[r * m + r] = self.mass[idx];
            }
        }
        a
    }
}

/// Assembled mass matrix `M`, convection matrix `K(U)` and right-hand side `G`.
#[derive(Debug, Clone)]
pub struct System {
    pub mass: BlockSparseMatrix,
    pub convection: BlockSparseMatrix,
    /// Body-force load; the models here are force-free, so it is zero.
    pub rhs: Vec<f64>,
}

/// Convection matrix `K_ij = f′(u_j)·c_ij`.
pub fn convection_matrix(
    space: &FESpace,
    ops: &Operators,
    model: &PhysicsModel,
    u: &StateVector,
) -> Result<BlockSparseMatrix> {
    let m = model.components();
    let n = space.num_nodes();
    let mut k = BlockSparseMatrix::zeros(ops.pattern.clone(), m);
    for i in 0..n {
        for idx in ops.pattern.row_range(i) {
            let j = ops.pattern.col(idx);
            let blk = model.jacobian(u.node(j), space.coord(j), ops.c[idx]).map_err(|e| e.at_node(j))?;
            k.add_block_at(idx, &blk, 1.0);
        }
    }
    Ok(k)
}

/// Nodal flux divergence `(K(U) U)_i = Σ_j c_ij · f(u_j)` without forming `K`.
pub fn convection_action(space: &FESpace, ops: &Operators, model: &PhysicsModel, u: &StateVector) -> Result<Vec<f64>> {
    let m = model.components();
    let n = space.num_nodes();
    let mut flux = Vec::with_capacity(n);
    for j in 0..n {
        flux.push(model.flux(u.node(j), space.coord(j)).map_err(|e| e.at_node(j))?);
    }
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for idx in ops.pattern.row_range(i) {
            let j = ops.pattern.col(idx);
            let c = ops.c[idx];
            for r in 0..m {
                out[i * m + r] += c[0] * flux[j][0][r] + c[1] * flux[j][1][r];
            }
        }
    }
    Ok(out)
}

/// Assembles `M`, `K(U)` and `G` on the conforming nodes.
pub fn assemble_system(space: &FESpace, ops: &Operators, model: &PhysicsModel, u: &StateVector) -> Result<System> {
    let m = model.components();
    Ok(System {
        mass: ops.mass_matrix(m),
        convection: convection_matrix(space, ops, model, u)?,
        rhs: vec![0.0; space.num_nodes() * m],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{AdaptiveMesh, Rect};
    use crate::physics::VelocityField;

    #[test]
    fn unit_square_geometry() {
        let g = ElementalGeometry::new([1.0, 1.0]);
        assert!((g.c[0][1][0] - 1.0 / 6.0).abs() < 1e-15);
        assert!((g.c[0][1][1] + 1.0 / 12.0).abs() < 1e-15);
        assert!((g.mass[0][0] - 1.0 / 9.0).abs() < 1e-15);
        for a in 0..4 {
            let s: [f64; 2] = (0..4).fold([0.0, 0.0], |acc, b| [acc[0] + g.c[a][b][0], acc[1] + g.c[a][b][1]]);
            assert!(s[0].abs() < 1e-15 && s[1].abs() < 1e-15);
        }
    }

    #[test]
    fn constant_state_has_zero_interior_rows() {
        let mesh = AdaptiveMesh::new_uniform(4, 4, Rect::unit()).unwrap();
        let space = FESpace::new(&mesh, 1);
        let ops = Operators::new(&space);
        let model = PhysicsModel::Scalar { velocity: VelocityField::Constant([0.3, -0.7]) };
        let u = StateVector::from_vec(1, vec![2.0; space.num_nodes()]);
        let r = convection_action(&space, &ops, &model, &u).unwrap();
        for i in 0..space.num_nodes() {
            if !space.is_boundary(i) {
                assert!(r[i].abs() < 1e-14);
            }
        }
    }
}
