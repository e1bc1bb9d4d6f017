//! Boundary data on the four sides of the rectangular domain and the strong
//! (row-replacement) imposition of Dirichlet values.

use std::fmt;
use std::sync::Arc;

use crate::error::Result;
use crate::fespace::{FESpace, StateVector};
use crate::mesh::Side;
use crate::physics::PhysicsModel;
use crate::sparse::BlockSparseMatrix;

/// Boundary state as a function of position.
pub type StateFn = Arc<dyn Fn([f64; 2]) -> Vec<f64> + Send + Sync>;

#[derive(Clone, Default)]
pub enum BoundaryCondition {
    /// Nothing is imposed.
    #[default]
    Outflow,
    /// Every component is fixed to the given state.
    Prescribed(StateFn),
    /// Every component is fixed where all eigenvalues of `f′(u_D)·n` are non-positive.
    Characteristic(StateFn),
    /// Normal momentum vanishes (Euler only).
    SlipWall,
}

impl fmt::Debug for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryCondition::Outflow => write!(f, "Outflow"),
            BoundaryCondition::Prescribed(_) => write!(f, "Prescribed(..)"),
            BoundaryCondition::Characteristic(_) => write!(f, "Characteristic(..)"),
            BoundaryCondition::SlipWall => write!(f, "SlipWall"),
        }
    }
}

/// Conditions on the left, right, bottom and top sides.
#[derive(Clone, Debug, Default)]
pub struct BoundaryData {
    pub left: BoundaryCondition,
    pub right: BoundaryCondition,
    pub bottom: BoundaryCondition,
    pub top: BoundaryCondition,
}

impl BoundaryData {
    pub fn side(&self, s: Side) -> &BoundaryCondition {
        match s {
            Side::Left => &self.left,
            Side::Right => &self.right,
            Side::Bottom => &self.bottom,
            Side::Top => &self.top,
        }
    }

    /// Same condition on all four sides.
    pub fn uniform(bc: BoundaryCondition) -> Self {
        Self { left: bc.clone(), right: bc.clone(), bottom: bc.clone(), top: bc }
    }
}

/// Fixed `(component, value)` pairs per conforming node.
#[derive(Debug, Clone, PartialEq)]
pub struct Dirichlet {
    m: usize,
    fixed: Vec<Vec<(usize, f64)>>,
}

impl Dirichlet {
    pub fn none(n: usize, m: usize) -> Self {
        Self { m, fixed: vec![Vec::new(); n] }
    }

    /// Resolves boundary data to nodal constraints. At corners a prescribed
    /// side wins; otherwise full constraints win over the wall condition.
    pub fn build(space: &FESpace, model: &PhysicsModel, bc: &BoundaryData) -> Result<Self> {
        let m = model.components();
        let mut out = Self::none(space.num_nodes(), m);
        for i in 0..space.num_nodes() {
            let sides = space.boundary_sides(i);
            if sides.is_empty() {
                continue;
            }
            let x = space.coord(i);
            let mut full: Option<Vec<f64>> = None;
            let mut wall_components = Vec::new();
            for s in sides.iter().copied() {
                match bc.side(s) {
                    BoundaryCondition::Prescribed(f) => {
                        full = Some(f(x));
                        break;
                    }
                    BoundaryCondition::Characteristic(f) => {
                        let ud = f(x);
                        let eig = model.normal_eigenvalues(&ud, x, s.normal())?;
                        if full.is_none() && eig.iter().all(|l| *l <= 0.0) {
                            full = Some(ud);
                        }
                    }
                    BoundaryCondition::SlipWall => {
                        if m > 1 {
                            let n = s.normal();
                            wall_components.push(if n[0] != 0.0 { 1 } else { 2 });
                        }
                    }
                    BoundaryCondition::Outflow => {}
                }
            }
            // A later prescribed side must still override an earlier characteristic one.
            for s in sides.iter().copied() {
                if let BoundaryCondition::Prescribed(f) = bc.side(s) {
                    full = Some(f(x));
                }
            }
            out.fixed[i] = match full {
                Some(ud) => ud.into_iter().enumerate().collect(),
                None => wall_components.into_iter().map(|c| (c, 0.0)).collect(),
            };
        }
        Ok(out)
    }

    pub fn fixed(&self, i: usize) -> &[(usize, f64)] {
        &self.fixed[i]
    }

    pub fn is_fully_fixed(&self, i: usize) -> bool {
        self.fixed[i].len() == self.m
    }

    pub fn is_fixed(&self, i: usize, c: usize) -> bool {
        self.fixed[i].iter().any(|(k, _)| *k == c)
    }

    pub fn is_empty(&self) -> bool {
        self.fixed.iter().all(|f| f.is_empty())
    }

    /// Overwrites the constrained entries of a state.
    pub fn impose(&self, u: &mut StateVector) {
        for (i, f) in self.fixed.iter().enumerate() {
            for &(c, v) in f {
                u.node_mut(i)[c] = v;
            }
        }
    }

    /// Zeroes the constrained entries of a vector (e.g. an increment).
    pub fn zero(&self, v: &mut [f64]) {
        for (i, f) in self.fixed.iter().enumerate() {
            for &(c, _) in f {
                v[i * self.m + c] = 0.0;
            }
        }
    }
}

/// Replaces constrained rows of `A x = b` by identity rows carrying the
/// prescribed values and moves the constrained columns to the right-hand side.
pub fn apply_dirichlet(a: &mut BlockSparseMatrix, b: &mut [f64], dir: &Dirichlet) {
    let m = a.block_size();
    let pattern = a.pattern().clone();
    for i in 0..a.n() {
        for &(c, g) in dir.fixed(i) {
            for &k in pattern.row(i) {
                let idx = pattern.find(k, i).expect("symmetric pattern");
                let blk = a.block_at_mut(idx);
                for r in 0..m {
                    if k == i && r == c {
                        continue;
                    }
                    b[k * m + r] -= blk[r * m + c] * g;
                    blk[r * m + c] = 0.0;
                }
            }
        }
    }
    for i in 0..a.n() {
        for &(c, g) in dir.fixed(i) {
            a.set_identity_row(i, c);
            b[i * m + c] = g;
        }
    }
}
