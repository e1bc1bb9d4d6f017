//! Q1 nodal space on an [`AdaptiveMesh`].
//!
//! Conforming nodes are numbered row by row (bottom to top, left to right).
//! Hanging nodes sit at the midpoints of coarse/fine edges and are never
//! degrees of freedom: their values are the average of the two coarse edge
//! endpoints, which 2:1 corner balance guarantees to be conforming.

use std::collections::HashMap;

use crate::mesh::{AdaptiveMesh, CellMapping, Side, MAX_LEVEL};

/// A node referenced by a cell corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeRef {
    Conforming(usize),
    Hanging(usize),
}

/// Hanging-node constraints `v_k = Σ_j C_kj v_j`.
#[derive(Debug, Clone, Default)]
pub struct ConstraintMap {
    /// Masters and weights per hanging node.
    pub masters: Vec<Vec<(usize, f64)>>,
    /// Hanging nodes constrained by each conforming node.
    pub constrained_by: Vec<Vec<usize>>,
}

/// Conforming degrees of freedom touched by one cell after resolving hanging corners.
#[derive(Debug, Clone)]
pub struct CellDofs {
    pub dofs: Vec<usize>,
    /// `weights[k][a]` is the coefficient of `dofs[k]` in corner `a`'s value.
    pub weights: Vec<[f64; 4]>,
}

impl CellDofs {
    /// Expands a corner row `r[a]` onto the cell DOFs: `Σ_a weights[k][a] r[a]`.
    pub fn expand(&self, k: usize, r: &[f64; 4]) -> f64 {
        (0..4).map(|a| self.weights[k][a] * r[a]).sum()
    }
}

/// Point on the far side of `x_i` used by the jump/mean of a node pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricStencil {
    pub x_sym: [f64; 2],
    /// Distance `|x_j − x_i|`.
    pub r: f64,
    /// Distance `|x_sym − x_i|`; zero when boundary-reduced.
    pub r_sym: f64,
    /// Interpolation weights of `u(x_sym)` over conforming nodes.
    pub weights: Vec<(usize, f64)>,
    pub boundary_reduced: bool,
}

/// Nodal values of an `m`-component field over the conforming nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    m: usize,
    data: Vec<f64>,
}

impl StateVector {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self { m, data: vec![0.0; n * m] }
    }

    pub fn from_vec(m: usize, data: Vec<f64>) -> Self {
        assert!(m > 0 && data.len().is_multiple_of(m), "data length must be a multiple of m");
        Self { m, data }
    }

    pub fn from_fn(n: usize, m: usize, mut f: impl FnMut(usize) -> Vec<f64>) -> Self {
        let mut data = Vec::with_capacity(n * m);
        for i in 0..n {
            let v = f(i);
            assert_eq!(v.len(), m);
            data.extend_from_slice(&v);
        }
        Self { m, data }
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn num_nodes(&self) -> usize {
        self.data.len() / self.m
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Component `c` of every node.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.m).copied().collect()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Q1 finite-element space over the leaves of a mesh.
#[derive(Debug, Clone)]
pub struct FESpace {
    mesh: AdaptiveMesh,
    m: usize,
    fine: Vec<[u32; 2]>,
    coords: Vec<[f64; 2]>,
    hanging_fine: Vec<[u32; 2]>,
    hanging_coords: Vec<[f64; 2]>,
    constraints: ConstraintMap,
    cell_nodes: Vec<[NodeRef; 4]>,
    cell_dofs: Vec<CellDofs>,
    node_cells: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    lookup: HashMap<[u32; 2], NodeRef>,
}

impl FESpace {
    pub fn new(mesh: &AdaptiveMesh, m: usize) -> Self {
        let hanging = mesh.hanging_interfaces();
        let mut hanging_fine: Vec<[u32; 2]> = Vec::with_capacity(hanging.len());
        let mut hanging_ends = Vec::with_capacity(hanging.len());
        let mut lookup: HashMap<[u32; 2], NodeRef> = HashMap::new();
        for h in &hanging {
            if let std::collections::hash_map::Entry::Vacant(e) = lookup.entry(h.fine_midpoint) {
                e.insert(NodeRef::Hanging(hanging_fine.len()));
                hanging_fine.push(h.fine_midpoint);
                hanging_ends.push(h.endpoints);
            }
        }

        let mut fine: Vec<[u32; 2]> = (0..mesh.num_cells())
            .flat_map(|c| (0..4).map(move |a| mesh.corner(c, a)))
            .filter(|p| !lookup.contains_key(p))
            .collect();
        fine.sort_unstable_by_key(|p| (p[1], p[0]));
        fine.dedup();
        for (i, p) in fine.iter().enumerate() {
            lookup.insert(*p, NodeRef::Conforming(i));
        }
        let n = fine.len();

        let mut constraints = ConstraintMap { masters: Vec::new(), constrained_by: vec![Vec::new(); n] };
        for (k, ends) in hanging_ends.iter().enumerate() {
            let ms: Vec<(usize, f64)> = ends
                .iter()
                .map(|e| match lookup[e] {
                    NodeRef::Conforming(i) => (i, 0.5),
                    NodeRef::Hanging(_) => unreachable!("corner balance keeps hanging masters conforming"),
                })
                .collect();
            for (i, _) in &ms {
                constraints.constrained_by[*i].push(k);
            }
            constraints.masters.push(ms);
        }

        let cell_nodes: Vec<[NodeRef; 4]> =
            (0..mesh.num_cells()).map(|c| [0, 1, 2, 3].map(|a| lookup[&mesh.corner(c, a)])).collect();

        let cell_dofs: Vec<CellDofs> = cell_nodes
            .iter()
            .map(|nodes| {
                let mut dofs: Vec<usize> = Vec::with_capacity(6);
                let mut weights: Vec<[f64; 4]> = Vec::with_capacity(6);
                let mut add = |dof: usize, a: usize, w: f64| {
                    let k = match dofs.iter().position(|d| *d == dof) {
                        Some(k) => k,
                        None => {
                            dofs.push(dof);
                            weights.push([0.0; 4]);
                            dofs.len() - 1
                        }
                    };
                    weights[k][a] += w;
                };
                for (a, nr) in nodes.iter().enumerate() {
                    match *nr {
                        NodeRef::Conforming(i) => add(i, a, 1.0),
                        NodeRef::Hanging(k) => {
                            for &(i, w) in &constraints.masters[k] {
                                add(i, a, w);
                            }
                        }
                    }
                }
                let mut order: Vec<usize> = (0..dofs.len()).collect();
                order.sort_unstable_by_key(|k| dofs[*k]);
                CellDofs {
                    dofs: order.iter().map(|k| dofs[*k]).collect(),
                    weights: order.iter().map(|k| weights[*k]).collect(),
                }
            })
            .collect();

        let mut node_cells = vec![Vec::new(); n];
        for (c, nodes) in cell_nodes.iter().enumerate() {
            for nr in nodes {
                if let NodeRef::Conforming(i) = nr {
                    node_cells[*i].push(c);
                }
            }
        }

        let mut neighbors = vec![Vec::new(); n];
        for cd in &cell_dofs {
            for &i in &cd.dofs {
                neighbors[i].extend_from_slice(&cd.dofs);
            }
        }
        for nb in neighbors.iter_mut() {
            nb.sort_unstable();
            nb.dedup();
        }

        let coords = fine.iter().map(|p| mesh.to_physical(*p)).collect();
        let hanging_coords = hanging_fine.iter().map(|p| mesh.to_physical(*p)).collect();
        Self {
            mesh: mesh.clone(),
            m,
            fine,
            coords,
            hanging_fine,
            hanging_coords,
            constraints,
            cell_nodes,
            cell_dofs,
            node_cells,
            neighbors,
            lookup,
        }
    }

    pub fn mesh(&self) -> &AdaptiveMesh {
        &self.mesh
    }

    pub fn components(&self) -> usize {
        self.m
    }

    /// Number of conforming nodes (degrees of freedom per component).
    pub fn num_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn num_hanging(&self) -> usize {
        self.hanging_coords.len()
    }

    pub fn num_cells(&self) -> usize {
        self.mesh.num_cells()
    }

    pub fn coord(&self, i: usize) -> [f64; 2] {
        self.coords[i]
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn fine_coord(&self, i: usize) -> [u32; 2] {
        self.fine[i]
    }

    pub fn hanging_coord(&self, k: usize) -> [f64; 2] {
        self.hanging_coords[k]
    }

    pub fn hanging_fine_coord(&self, k: usize) -> [u32; 2] {
        self.hanging_fine[k]
    }

    pub fn constraints(&self) -> &ConstraintMap {
        &self.constraints
    }

    pub fn cell_nodes(&self, cell: usize) -> &[NodeRef; 4] {
        &self.cell_nodes[cell]
    }

    pub fn cell_dofs(&self, cell: usize) -> &CellDofs {
        &self.cell_dofs[cell]
    }

    /// Cells having conforming node `i` as a corner (Ω_i).
    pub fn node_cells(&self, i: usize) -> &[usize] {
        &self.node_cells[i]
    }

    /// Sorted neighbourhood N(i), including `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn node_at(&self, fine: [u32; 2]) -> Option<NodeRef> {
        self.lookup.get(&fine).copied()
    }

    /// Domain sides the conforming node lies on.
    pub fn boundary_sides(&self, i: usize) -> Vec<Side> {
        let p = self.fine[i];
        let n = self.mesh.fine_extent();
        let mut s = Vec::new();
        if p[0] == 0 {
            s.push(Side::Left);
        }
        if p[0] == n[0] {
            s.push(Side::Right);
        }
        if p[1] == 0 {
            s.push(Side::Bottom);
        }
        if p[1] == n[1] {
            s.push(Side::Top);
        }
        s
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        !self.boundary_sides(i).is_empty()
    }

    /// Values at the four corners of a cell, with hanging corners interpolated.
    pub fn corner_values(&self, u: &StateVector, cell: usize, comp: usize) -> [f64; 4] {
        let cd = &self.cell_dofs[cell];
        let mut r = [0.0; 4];
        for (k, &d) in cd.dofs.iter().enumerate() {
            let v = u.node(d)[comp];
            for (a, ra) in r.iter_mut().enumerate() {
                *ra += cd.weights[k][a] * v;
            }
        }
        r
    }

    /// Value of a hanging node.
    pub fn hanging_value(&self, u: &StateVector, k: usize, comp: usize) -> f64 {
        self.constraints.masters[k].iter().map(|&(i, w)| w * u.node(i)[comp]).sum()
    }

    /// Local coordinates of a fine-integer point inside a cell.
    fn local_coords(&self, cell: usize, q: [f64; 2]) -> [f64; 2] {
        let (lo, hi) = self.mesh.key(cell).fine_bounds();
        [(q[0] - lo[0] as f64) / (hi[0] - lo[0]) as f64, (q[1] - lo[1] as f64) / (hi[1] - lo[1]) as f64]
    }

    fn cell_for_fine(&self, q: [u32; 2]) -> usize {
        let n = self.mesh.fine_extent();
        let probe = [q[0].min(n[0] - 1), q[1].min(n[1] - 1)];
        self.mesh.locate_fine(probe).expect("point inside domain")
    }

    /// Conforming-node weights reproducing the FE function at local point `t` of a cell.
    pub fn weights_at_local(&self, cell: usize, t: [f64; 2]) -> Vec<(usize, f64)> {
        let phi = shape_values(t);
        let cd = &self.cell_dofs[cell];
        cd.dofs.iter().enumerate().map(|(k, &d)| (d, cd.expand(k, &phi))).filter(|(_, w)| *w != 0.0).collect()
    }

    /// Evaluates the FE function at a physical point.
    pub fn evaluate(&self, u: &StateVector, p: [f64; 2]) -> Vec<f64> {
        let cell = self.mesh.locate(p);
        let b = self.mesh.cell_bounds(cell);
        let t = [(p[0] - b.min[0]) / (b.max[0] - b.min[0]), (p[1] - b.min[1]) / (b.max[1] - b.min[1])];
        self.evaluate_local(u, cell, t)
    }

    pub fn evaluate_local(&self, u: &StateVector, cell: usize, t: [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; u.components()];
        for (d, w) in self.weights_at_local(cell, t) {
            for (o, v) in out.iter_mut().zip(u.node(d)) {
                *o += w * v;
            }
        }
        out
    }

    fn evaluate_fine(&self, u: &StateVector, q: [u32; 2]) -> Vec<f64> {
        let cell = self.cell_for_fine(q);
        let t = self.local_coords(cell, [q[0] as f64, q[1] as f64]);
        self.evaluate_local(u, cell, t)
    }

    /// Far-side point of the pair `(i, j)`: the first exit from Ω_i along the ray from `x_i` away from `x_j`.
    pub fn symmetric_stencil(&self, i: usize, j: usize) -> SymmetricStencil {
        let (qi, qj) = (self.fine[i], self.fine[j]);
        let d = [qi[0] as f64 - qj[0] as f64, qi[1] as f64 - qj[1] as f64];
        let xi = self.coords[i];
        let xj = self.coords[j];
        let r = ((xj[0] - xi[0]).powi(2) + (xj[1] - xi[1]).powi(2)).sqrt();

        let mut best: Option<(f64, usize)> = None;
        for &c in &self.node_cells[i] {
            let (lo, hi) = self.mesh.key(c).fine_bounds();
            let mut t = f64::INFINITY;
            let mut ok = true;
            for a in 0..2 {
                // Direction of the cell interior as seen from x_i along this axis.
                let inward = if lo[a] == qi[a] { 1.0 } else { -1.0 };
                if d[a] == 0.0 {
                    continue;
                }
                if d[a] * inward < 0.0 {
                    ok = false;
                    break;
                }
                t = t.min((hi[a] - lo[a]) as f64 / d[a].abs());
            }
            if ok && t.is_finite() && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, c));
            }
        }

        match best {
            None => SymmetricStencil { x_sym: xi, r, r_sym: 0.0, weights: vec![(i, 1.0)], boundary_reduced: true },
            Some((t, c)) => {
                let q = [qi[0] as f64 + t * d[0], qi[1] as f64 + t * d[1]];
                let loc = self.local_coords(c, q);
                let loc = loc.map(|v| {
                    if v.abs() < 1e-14 {
                        0.0
                    } else if (v - 1.0).abs() < 1e-14 {
                        1.0
                    } else {
                        v
                    }
                });
                let x_sym = [xi[0] + t * (xi[0] - xj[0]), xi[1] + t * (xi[1] - xj[1])];
                SymmetricStencil {
                    x_sym,
                    r,
                    r_sym: t * r,
                    weights: self.weights_at_local(c, loc),
                    boundary_reduced: false,
                }
            }
        }
    }

    /// Nodal interpolation of the FE function of `old` onto this space.
    pub fn transfer_from(&self, old: &FESpace, u_old: &StateVector, mapping: &CellMapping) -> StateVector {
        if mapping.is_identity() && old.mesh == self.mesh {
            return u_old.clone();
        }
        let m = u_old.components();
        let mut out = StateVector::zeros(self.num_nodes(), m);
        for (i, q) in self.fine.iter().enumerate() {
            let v = match old.lookup.get(q) {
                Some(NodeRef::Conforming(k)) => u_old.node(*k).to_vec(),
                _ => old.evaluate_fine(u_old, *q),
            };
            out.node_mut(i).copy_from_slice(&v);
        }
        out
    }

    /// Nodal interpolant of a function given at physical points.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> Vec<f64>) -> StateVector {
        StateVector::from_fn(self.num_nodes(), self.m, |i| f(self.coords[i]))
    }

    /// Characteristic cell size around a conforming node (smallest adjacent cell).
    pub fn node_h(&self, i: usize) -> f64 {
        self.node_cells[i].iter().map(|c| self.mesh.cell_h(*c)).fold(f64::INFINITY, f64::min)
    }

    /// Fine integer extent of a single level-`MAX_LEVEL` unit, in physical units.
    pub fn fine_unit(&self) -> [f64; 2] {
        self.mesh.cell_size_at(MAX_LEVEL)
    }
}

/// Bilinear shape functions at local coordinates, corner order (0,0), (1,0), (0,1), (1,1).
pub fn shape_values(t: [f64; 2]) -> [f64; 4] {
    let (x, y) = (t[0], t[1]);
    [(1.0 - x) * (1.0 - y), x * (1.0 - y), (1.0 - x) * y, x * y]
}
