//! Hierarchical quadtree meshes over a rectangle.
//!
//! A mesh is a forest of quadtrees rooted on an `nx × ny` grid of equal
//! rectangles. Every leaf is addressed by a [`CellKey`]: its refinement level
//! and its integer position in the (virtual) uniform grid of that level. The
//! per-root Morton path of a key is available through [`CellKey::morton_path`]
//! and is what orders the leaves.
//!
//! Meshes are immutable values: [`AdaptiveMesh::adapt`] returns a new mesh
//! together with a [`CellMapping`] that records where every new leaf came
//! from. All meshes produced by this module are 2:1 balanced across edges
//! *and* corners, so every coarse/fine edge carries exactly one hanging node.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

/// Deepest refinement level a cell may reach.
pub const MAX_LEVEL: u8 = 20;

/// Largest accepted root-grid dimension, so that fine integer coordinates fit in `u32`.
const MAX_ROOT_DIM: u32 = 2048;

/// Axis-aligned rectangle `[min.x, max.x] × [min.y, max.y]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    pub fn unit() -> Self {
        Self::new([0.0, 0.0], [1.0, 1.0])
    }

    pub fn extent(&self) -> [f64; 2] {
        [self.max[0] - self.min[0], self.max[1] - self.min[1]]
    }

    pub fn area(&self) -> f64 {
        let e = self.extent();
        e[0] * e[1]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

/// One of the four sides of a rectangle (a cell or the whole domain).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    /// Unit outward normal.
    pub fn normal(self) -> [f64; 2] {
        match self {
            Side::Left => [-1.0, 0.0],
            Side::Right => [1.0, 0.0],
            Side::Bottom => [0.0, -1.0],
            Side::Top => [0.0, 1.0],
        }
    }

    /// Integer step to the neighbouring cell across this side.
    pub fn offset(self) -> (i64, i64) {
        match self {
            Side::Left => (-1, 0),
            Side::Right => (1, 0),
            Side::Bottom => (0, -1),
            Side::Top => (0, 1),
        }
    }

    /// Local corner indices (see [`AdaptiveMesh::corner`]) of the side's two endpoints.
    pub fn corners(self) -> [usize; 2] {
        match self {
            Side::Left => [0, 2],
            Side::Right => [1, 3],
            Side::Bottom => [0, 1],
            Side::Top => [2, 3],
        }
    }
}

/// Address of a quadtree cell: level and integer position in the uniform grid of that level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellKey {
    pub level: u8,
    pub ix: u32,
    pub iy: u32,
}

impl CellKey {
    pub fn new(level: u8, ix: u32, iy: u32) -> Self {
        Self { level, ix, iy }
    }

    pub fn parent(&self) -> Option<CellKey> {
        (self.level > 0).then(|| CellKey::new(self.level - 1, self.ix / 2, self.iy / 2))
    }

    /// Children in local corner order: (0,0), (1,0), (0,1), (1,1).
    pub fn children(&self) -> [CellKey; 4] {
        let (l, x, y) = (self.level + 1, 2 * self.ix, 2 * self.iy);
        [CellKey::new(l, x, y), CellKey::new(l, x + 1, y), CellKey::new(l, x, y + 1), CellKey::new(l, x + 1, y + 1)]
    }

    /// Root cell containing this key, as `(ix, iy)` on the root grid.
    pub fn root(&self) -> (u32, u32) {
        (self.ix >> self.level, self.iy >> self.level)
    }

    /// Morton (Z-order) path inside the root cell: two bits per level, coarsest first.
    pub fn morton_path(&self) -> u64 {
        let mask = (1u32 << self.level) - 1;
        let (lx, ly) = (self.ix & mask, self.iy & mask);
        let mut code = 0u64;
        for bit in (0..self.level).rev() {
            code = (code << 2) | ((((ly >> bit) & 1) << 1) | ((lx >> bit) & 1)) as u64;
        }
        code
    }

    fn order_key(&self) -> (u32, u32, u64, u8) {
        let (rx, ry) = self.root();
        let shift = 2 * (MAX_LEVEL - self.level) as u32;
        (ry, rx, self.morton_path() << shift, self.level)
    }

    /// Lower-left and upper-right corners in integer coordinates at [`MAX_LEVEL`].
    pub fn fine_bounds(&self) -> ([u32; 2], [u32; 2]) {
        let s = MAX_LEVEL - self.level;
        ([self.ix << s, self.iy << s], [(self.ix + 1) << s, (self.iy + 1) << s])
    }
}

/// Requested action for one leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CellMark {
    Refine,
    #[default]
    Keep,
    Coarsen,
}

/// Where a leaf of an adapted mesh came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Unchanged old leaf.
    Same(usize),
    /// Descendant of an old leaf that was refined.
    Child(usize),
    /// Merge of four old sibling leaves, in local corner order.
    Parent([usize; 4]),
}

/// Old-to-new leaf correspondence produced by [`AdaptiveMesh::adapt`].
#[derive(Debug, Clone, PartialEq)]
pub struct CellMapping {
    /// One entry per new leaf.
    pub provenance: Vec<Provenance>,
    /// Old leaves whose refine/coarsen mark could not be honoured and was treated as keep.
    pub downgraded: Vec<usize>,
}

impl CellMapping {
    pub fn identity(n: usize) -> Self {
        Self { provenance: (0..n).map(Provenance::Same).collect(), downgraded: Vec::new() }
    }

    pub fn is_identity(&self) -> bool {
        self.provenance.iter().enumerate().all(|(i, p)| *p == Provenance::Same(i))
    }
}

/// A coarse cell edge that borders two finer cells; its midpoint is a hanging node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HangingInterface {
    pub coarse_cell: usize,
    pub side: Side,
    pub midpoint: [f64; 2],
    /// Midpoint in integer coordinates at [`MAX_LEVEL`].
    pub fine_midpoint: [u32; 2],
    /// Edge endpoints in integer coordinates at [`MAX_LEVEL`].
    pub endpoints: [[u32; 2]; 2],
}

/// 2:1-balanced quadtree forest over a rectangle.
#[derive(Debug, Clone)]
pub struct AdaptiveMesh {
    domain: Rect,
    nx: u32,
    ny: u32,
    leaves: Vec<CellKey>,
    lookup: HashMap<CellKey, usize>,
}

impl PartialEq for AdaptiveMesh {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain && self.nx == other.nx && self.ny == other.ny && self.leaves == other.leaves
    }
}

impl AdaptiveMesh {
    /// Uniform `nx × ny` level-0 mesh.
    pub fn new_uniform(nx: usize, ny: usize, domain: Rect) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument(format!("root grid must be non-empty, got {nx}×{ny}")));
        }
        if nx > MAX_ROOT_DIM as usize || ny > MAX_ROOT_DIM as usize {
            return Err(Error::InvalidArgument(format!("root grid {nx}×{ny} exceeds {MAX_ROOT_DIM} per axis")));
        }
        let e = domain.extent();
        if !(e[0] > 0.0 && e[1] > 0.0 && e[0].is_finite() && e[1].is_finite()) {
            return Err(Error::InvalidArgument(format!("degenerate domain {domain:?}")));
        }
        let leaves = (0..ny as u32).flat_map(|iy| (0..nx as u32).map(move |ix| CellKey::new(0, ix, iy))).collect();
        Ok(Self::from_leaves(domain, nx as u32, ny as u32, leaves))
    }

    /// Uniform mesh refined `levels` times everywhere.
    pub fn new_refined(nx: usize, ny: usize, domain: Rect, levels: u8) -> Result<Self> {
        let mut mesh = Self::new_uniform(nx, ny, domain)?;
        for _ in 0..levels {
            let marks = vec![CellMark::Refine; mesh.num_cells()];
            mesh = mesh.adapt(&marks).0;
        }
        Ok(mesh)
    }

    fn from_leaves(domain: Rect, nx: u32, ny: u32, mut leaves: Vec<CellKey>) -> Self {
        leaves.sort_by_key(|k| k.order_key());
        let lookup = leaves.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        Self { domain, nx, ny, leaves, lookup }
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn root_dims(&self) -> (usize, usize) {
        (self.nx as usize, self.ny as usize)
    }

    pub fn num_cells(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaves(&self) -> &[CellKey] {
        &self.leaves
    }

    pub fn key(&self, cell: usize) -> CellKey {
        self.leaves[cell]
    }

    pub fn level(&self, cell: usize) -> u8 {
        self.leaves[cell].level
    }

    pub fn index_of(&self, key: &CellKey) -> Option<usize> {
        self.lookup.get(key).copied()
    }

    pub fn max_level(&self) -> u8 {
        self.leaves.iter().map(|k| k.level).max().unwrap_or(0)
    }

    /// Cell extent per axis at a refinement level.
    pub fn cell_size_at(&self, level: u8) -> [f64; 2] {
        let e = self.domain.extent();
        let f = (1u64 << level) as f64;
        [e[0] / (self.nx as f64 * f), e[1] / (self.ny as f64 * f)]
    }

    pub fn cell_size(&self, cell: usize) -> [f64; 2] {
        self.cell_size_at(self.leaves[cell].level)
    }

    /// Characteristic size of a cell (its longer side).
    pub fn cell_h(&self, cell: usize) -> f64 {
        let s = self.cell_size(cell);
        s[0].max(s[1])
    }

    /// Number of [`MAX_LEVEL`] integer units along each axis of the domain.
    pub fn fine_extent(&self) -> [u32; 2] {
        [self.nx << MAX_LEVEL, self.ny << MAX_LEVEL]
    }

    /// Physical coordinates of a point given in integer coordinates at [`MAX_LEVEL`].
    pub fn to_physical(&self, p: [u32; 2]) -> [f64; 2] {
        let n = self.fine_extent();
        let e = self.domain.extent();
        [
            self.domain.min[0] + e[0] * (p[0] as f64 / n[0] as f64),
            self.domain.min[1] + e[1] * (p[1] as f64 / n[1] as f64),
        ]
    }

    pub fn cell_bounds(&self, cell: usize) -> Rect {
        let (lo, hi) = self.leaves[cell].fine_bounds();
        Rect::new(self.to_physical(lo), self.to_physical(hi))
    }

    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let b = self.cell_bounds(cell);
        [0.5 * (b.min[0] + b.max[0]), 0.5 * (b.min[1] + b.max[1])]
    }

    /// Corner `c` of a cell in integer coordinates; local order (0,0), (1,0), (0,1), (1,1).
    pub fn corner(&self, cell: usize, c: usize) -> [u32; 2] {
        let (lo, hi) = self.leaves[cell].fine_bounds();
        [if c & 1 == 0 { lo[0] } else { hi[0] }, if c & 2 == 0 { lo[1] } else { hi[1] }]
    }

    fn in_domain(&self, level: u8, ix: i64, iy: i64) -> bool {
        ix >= 0 && iy >= 0 && ix < ((self.nx as i64) << level) && iy < ((self.ny as i64) << level)
    }

    fn shifted(&self, key: CellKey, dx: i64, dy: i64) -> Option<CellKey> {
        let (x, y) = (key.ix as i64 + dx, key.iy as i64 + dy);
        self.in_domain(key.level, x, y).then(|| CellKey::new(key.level, x as u32, y as u32))
    }

    /// Same-level key across a side, or `None` outside the domain.
    pub fn neighbor_key(&self, key: CellKey, side: Side) -> Option<CellKey> {
        let (dx, dy) = side.offset();
        self.shifted(key, dx, dy)
    }

    /// Leaf equal to `key` or one of its ancestors, if any. `None` means the
    /// region of `key` is covered by strictly finer leaves.
    pub fn leaf_covering(&self, key: CellKey) -> Option<usize> {
        covering(&self.lookup, key).map(|(_, i)| *i)
    }

    /// Leaf whose closure contains `p` (points outside are clamped to the domain).
    pub fn locate(&self, p: [f64; 2]) -> usize {
        let n = self.fine_extent();
        let e = self.domain.extent();
        let mut q = [0u32; 2];
        for a in 0..2 {
            let t = ((p[a] - self.domain.min[a]) / e[a]).clamp(0.0, 1.0);
            q[a] = ((t * n[a] as f64).floor() as u64).min(n[a] as u64 - 1) as u32;
        }
        self.locate_fine(q).expect("every point of the domain lies in a leaf")
    }

    /// Leaf containing the half-open fine unit cell at integer point `q`.
    pub fn locate_fine(&self, q: [u32; 2]) -> Option<usize> {
        let key = CellKey::new(MAX_LEVEL, q[0], q[1]);
        self.leaf_covering(key)
    }

    /// Refines, coarsens and rebalances. Refinement wins over coarsening;
    /// a sibling group is merged only if all four are marked for coarsening and
    /// the merge keeps the mesh 2:1 balanced. Unhonoured marks fall back to keep
    /// and are listed in [`CellMapping::downgraded`].
    pub fn adapt(&self, marks: &[CellMark]) -> (AdaptiveMesh, CellMapping) {
        assert_eq!(marks.len(), self.num_cells(), "one mark per leaf is required");
        let mut set: HashSet<CellKey> = self.leaves.iter().copied().collect();
        let mut downgraded = Vec::new();

        let mut queue: Vec<CellKey> = Vec::new();
        for (i, m) in marks.iter().enumerate() {
            if *m == CellMark::Refine {
                if self.leaves[i].level < MAX_LEVEL {
                    queue.push(self.leaves[i]);
                } else {
                    downgraded.push(i);
                }
            }
        }
        // Process in reverse so the pop order follows the leaf order.
        queue.reverse();
        while let Some(k) = queue.pop() {
            if !set.remove(&k) {
                continue;
            }
            for c in k.children() {
                set.insert(c);
            }
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let Some(nk) = self.shifted(k, dx, dy) else { continue };
                    if let Some(owner) = covering_set(&set, nk) {
                        if owner.level < k.level {
                            queue.push(owner);
                        }
                    }
                }
            }
        }

        // Coarsening: unanimous sibling groups that survived refinement.
        let mut groups: Vec<CellKey> = Vec::new();
        let mut seen = HashSet::new();
        for (i, m) in marks.iter().enumerate() {
            let k = self.leaves[i];
            if *m != CellMark::Coarsen {
                continue;
            }
            let Some(p) = k.parent() else {
                downgraded.push(i);
                continue;
            };
            if !seen.insert(p) {
                continue;
            }
            let sib = p.children();
            let unanimous = sib
                .iter()
                .all(|s| self.index_of(s).map(|j| marks[j] == CellMark::Coarsen).unwrap_or(false) && set.contains(s));
            if unanimous {
                groups.push(p);
            }
        }
        groups.sort_by_key(|k| k.order_key());
        let mut merged: HashSet<CellKey> = HashSet::new();
        for p in groups {
            let fine = p.level + 1;
            let (bx, by) = (2 * p.ix as i64, 2 * p.iy as i64);
            let mut ok = true;
            'ring: for y in by - 1..=by + 2 {
                for x in bx - 1..=bx + 2 {
                    let inner = (bx..=bx + 1).contains(&x) && (by..=by + 1).contains(&y);
                    if inner || !self.in_domain(fine, x, y) {
                        continue;
                    }
                    if covering_set(&set, CellKey::new(fine, x as u32, y as u32)).is_none() {
                        ok = false;
                        break 'ring;
                    }
                }
            }
            if ok {
                for c in p.children() {
                    set.remove(&c);
                }
                set.insert(p);
                merged.insert(p);
            }
        }
        for (i, m) in marks.iter().enumerate() {
            if *m == CellMark::Coarsen {
                let k = self.leaves[i];
                if k.parent().is_some_and(|p| !merged.contains(&p)) {
                    downgraded.push(i);
                }
            }
        }
        downgraded.sort_unstable();
        downgraded.dedup();

        let mesh = AdaptiveMesh::from_leaves(self.domain, self.nx, self.ny, set.into_iter().collect());
        let provenance = mesh
            .leaves
            .iter()
            .map(|k| {
                if let Some(i) = self.index_of(k) {
                    Provenance::Same(i)
                } else if merged.contains(k) {
                    let c = k.children();
                    Provenance::Parent(c.map(|c| self.index_of(&c).expect("merged children were leaves")))
                } else {
                    Provenance::Child(self.leaf_covering(*k).expect("new leaf descends from an old leaf"))
                }
            })
            .collect();
        (mesh, CellMapping { provenance, downgraded })
    }

    /// Coarse edges adjacent to finer cells, one entry per hanging midpoint.
    /// Domain-boundary edges never appear.
    pub fn hanging_interfaces(&self) -> Vec<HangingInterface> {
        let mut out = Vec::new();
        for (cell, key) in self.leaves.iter().enumerate() {
            for side in Side::ALL {
                let (dx, dy) = side.offset();
                let Some(nk) = self.shifted(*key, dx, dy) else { continue };
                if self.leaf_covering(nk).is_some() {
                    continue;
                }
                let [a, b] = side.corners().map(|c| self.corner(cell, c));
                let mid = [(a[0] + b[0]) / 2, (a[1] + b[1]) / 2];
                out.push(HangingInterface {
                    coarse_cell: cell,
                    side,
                    midpoint: self.to_physical(mid),
                    fine_midpoint: mid,
                    endpoints: [a, b],
                });
            }
        }
        out
    }

    /// Checks 2:1 balance across edges and corners using neighbour lookups.
    pub fn is_balanced(&self) -> bool {
        self.leaves.iter().all(|k| {
            (-1..=1).all(|dy| {
                (-1..=1).all(|dx| match self.shifted(*k, dx, dy) {
                    None => true,
                    Some(nk) => {
                        if self.leaf_covering(nk).is_some() {
                            // Equal or coarser neighbour: must be at most one level up.
                            covering(&self.lookup, nk).is_none_or(|(o, _)| o.level + 1 >= k.level)
                        } else {
                            // Finer neighbours: none of the children of nk may be subdivided further.
                            nk.children().iter().all(|c| self.leaf_covering(*c).is_some())
                        }
                    }
                })
            })
        })
    }
}

fn covering(lookup: &HashMap<CellKey, usize>, key: CellKey) -> Option<(CellKey, &usize)> {
    let mut k = key;
    loop {
        if let Some(i) = lookup.get(&k) {
            return Some((k, i));
        }
        k = k.parent()?;
    }
}

fn covering_set(set: &HashSet<CellKey>, key: CellKey) -> Option<CellKey> {
    let mut k = key;
    loop {
        if set.contains(&k) {
            return Some(k);
        }
        k = k.parent()?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> AdaptiveMesh {
        AdaptiveMesh::new_uniform(2, 2, Rect::unit()).unwrap()
    }

    fn refine_one(mesh: &AdaptiveMesh, cell: usize) -> AdaptiveMesh {
        let mut marks = vec![CellMark::Keep; mesh.num_cells()];
        marks[cell] = CellMark::Refine;
        mesh.adapt(&marks).0
    }

    #[test]
    fn uniform_counts() {
        assert_eq!(AdaptiveMesh::new_uniform(16, 16, Rect::unit()).unwrap().num_cells(), 256);
        assert_eq!(AdaptiveMesh::new_uniform(1, 1, Rect::unit()).unwrap().num_cells(), 1);
        let wide = AdaptiveMesh::new_uniform(64, 16, Rect::new([0.0, 0.0], [4.1, 1.0])).unwrap();
        assert_eq!(wide.num_cells(), 1024);
        assert!(wide.leaves().iter().all(|k| k.level == 0));
    }

    #[test]
    fn zero_dimension_is_rejected() {
        assert!(matches!(AdaptiveMesh::new_uniform(0, 4, Rect::unit()), Err(Error::InvalidArgument(_))));
        assert!(AdaptiveMesh::new_uniform(2, 2, Rect::new([0.0, 0.0], [0.0, 1.0])).is_err());
    }

    #[test]
    fn all_keep_is_identity() {
        let m = refine_one(&two_by_two(), 0);
        let (again, map) = m.adapt(&vec![CellMark::Keep; m.num_cells()]);
        assert_eq!(again, m);
        assert!(map.is_identity());
    }

    #[test]
    fn refine_one_of_four_gives_seven() {
        let (m, map) = {
            let mut marks = vec![CellMark::Keep; 4];
            marks[3] = CellMark::Refine;
            two_by_two().adapt(&marks)
        };
        assert_eq!(m.num_cells(), 7);
        assert_eq!(map.provenance.iter().filter(|p| matches!(p, Provenance::Child(3))).count(), 4);
        assert!(m.is_balanced());
    }

    #[test]
    fn morton_path_orders_children() {
        let k = CellKey::new(0, 0, 0);
        let paths: Vec<u64> = k.children().iter().map(|c| c.morton_path()).collect();
        assert_eq!(paths, vec![0, 1, 2, 3]);
        assert_eq!(CellKey::new(2, 3, 1).morton_path(), 0b0111);
    }

    #[test]
    fn hanging_midpoints_on_seven_leaf_mesh() {
        let m = refine_one(&two_by_two(), 0);
        let h = m.hanging_interfaces();
        assert_eq!(h.len(), 2);
        let mut mids: Vec<[f64; 2]> = h.iter().map(|i| i.midpoint).collect();
        mids.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(mids, vec![[0.25, 0.5], [0.5, 0.25]]);
        assert!(two_by_two().hanging_interfaces().is_empty());
        let all = m.adapt(&vec![CellMark::Refine; m.num_cells()]).0;
        let uni = two_by_two().adapt(&[CellMark::Refine; 4]).0.adapt(&[CellMark::Refine; 16]).0;
        assert!(uni.hanging_interfaces().is_empty());
        assert_eq!(all.num_cells(), 28);
    }

    #[test]
    fn coarsening_requires_unanimous_siblings() {
        let m = two_by_two().adapt(&[CellMark::Refine; 4]).0;
        let mut marks = vec![CellMark::Keep; 16];
        // Children of root cell (0,0) are the first four leaves in Morton order.
        for mk in marks.iter_mut().take(3) {
            *mk = CellMark::Coarsen;
        }
        let (same, map) = m.adapt(&marks);
        assert_eq!(same.num_cells(), 16);
        assert_eq!(map.downgraded, vec![0, 1, 2]);
        marks[3] = CellMark::Coarsen;
        let (coarser, map) = m.adapt(&marks);
        assert_eq!(coarser.num_cells(), 13);
        assert!(map.provenance.contains(&Provenance::Parent([0, 1, 2, 3])));
    }

    #[test]
    fn coarsening_blocked_by_balance() {
        // Refine a corner cell twice; its parent group cannot be merged while
        // the grandchildren still sit next to it.
        let m = two_by_two().adapt(&[CellMark::Refine; 4]).0;
        let corner = m.index_of(&CellKey::new(1, 1, 1)).unwrap();
        let m = refine_one(&m, corner);
        assert!(m.is_balanced());
        let marks: Vec<CellMark> = m
            .leaves()
            .iter()
            .map(|k| if k.level == 1 && k.root() == (1, 0) { CellMark::Coarsen } else { CellMark::Keep })
            .collect();
        let (out, map) = m.adapt(&marks);
        assert!(out.is_balanced());
        assert_eq!(out.num_cells(), m.num_cells());
        assert_eq!(map.downgraded.len(), 4);
    }

    #[test]
    fn locate_finds_cells() {
        let m = refine_one(&two_by_two(), 0);
        let c = m.locate([0.1, 0.1]);
        assert_eq!(m.key(c), CellKey::new(1, 0, 0));
        let c = m.locate([0.9, 0.9]);
        assert_eq!(m.key(c), CellKey::new(0, 1, 1));
        let c = m.locate([1.0, 1.0]);
        assert_eq!(m.key(c), CellKey::new(0, 1, 1));
    }
}
