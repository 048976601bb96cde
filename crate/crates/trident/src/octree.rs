//! Labeled axis-aligned octrees over a 3D box.
//!
//! An [`Octree`] stores a boolean subset of a box as an adaptively
//! subdivided cell tree. Any axis may be marked periodic (used for the
//! orientation coordinate of pose space), which affects point lookup,
//! adjacency, and connectivity. Trees built over the same box, depth, and
//! periodicity support exact boolean set algebra, volume measurement,
//! connected-component labeling, and a compact binary serialization.

use crate::scalar::Real;
use std::collections::HashMap;
use std::io::{Read, Write};
use thiserror::Error;

/// Hard cap on subdivision depth (3 bits of locational code per level).
pub const MAX_TREE_DEPTH: u8 = 20;

/// Builds accept depths in `1..=MAX_BUILD_DEPTH`; deeper trees would make
/// the conservative boundary layer meaninglessly fine for this pipeline.
pub const MAX_BUILD_DEPTH: u8 = 12;

/// Axis-aligned box `[lo, hi]` in three dimensions.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Box3<R> {
    pub lo: [R; 3],
    pub hi: [R; 3],
}

impl<R: Real> Box3<R> {
    pub fn new(lo: [R; 3], hi: [R; 3]) -> Self {
        for a in 0..3 {
            assert!(
                lo[a].is_finite() && hi[a].is_finite() && lo[a] < hi[a],
                "box must have finite positive extent on every axis"
            );
        }
        Self { lo, hi }
    }

    pub fn center(&self) -> [R; 3] {
        let half = R::of(0.5);
        [
            (self.lo[0] + self.hi[0]) * half,
            (self.lo[1] + self.hi[1]) * half,
            (self.lo[2] + self.hi[2]) * half,
        ]
    }

    pub fn widths(&self) -> [R; 3] {
        [
            self.hi[0] - self.lo[0],
            self.hi[1] - self.lo[1],
            self.hi[2] - self.lo[2],
        ]
    }

    pub fn volume(&self) -> R {
        let w = self.widths();
        w[0] * w[1] * w[2]
    }

    /// Half the diagonal length; bounds the distance from the center to
    /// any point of the box.
    pub fn half_diagonal(&self) -> R {
        let w = self.widths();
        (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt() * R::of(0.5)
    }

    pub fn contains(&self, p: [R; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.lo[a] && p[a] <= self.hi[a])
    }

    /// Child box for octant `i`; bit `a` of `i` selects the upper half of
    /// axis `a` (bit 0 = x, bit 1 = y, bit 2 = z).
    pub fn octant(&self, i: u8) -> Self {
        let mid = self.center();
        let mut lo = self.lo;
        let mut hi = self.hi;
        for a in 0..3 {
            if (i >> a) & 1 == 1 {
                lo[a] = mid[a];
            } else {
                hi[a] = mid[a];
            }
        }
        Self { lo, hi }
    }

    /// Corner `j`, with the same bit convention as [`Box3::octant`].
    pub fn corner(&self, j: u8) -> [R; 3] {
        let mut p = self.lo;
        for a in 0..3 {
            if (j >> a) & 1 == 1 {
                p[a] = self.hi[a];
            }
        }
        p
    }
}

/// Locational code of one cell: the path of octant choices from the root.
///
/// Cells are totally ordered by depth-aligned code (spatial position along
/// the space-filling curve), with shallower cells first on ties — so a
/// parent sorts immediately before its first child.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CellId {
    depth: u8,
    code: u64,
}

impl CellId {
    pub const ROOT: CellId = CellId { depth: 0, code: 0 };

    pub fn new(depth: u8, code: u64) -> Self {
        assert!(depth <= MAX_TREE_DEPTH);
        assert!(code < 1u64 << (3 * depth as u32).min(63));
        Self { depth, code }
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn code(&self) -> u64 {
        self.code
    }

    pub fn child(&self, idx: u8) -> Self {
        debug_assert!(idx < 8 && self.depth < MAX_TREE_DEPTH);
        Self {
            depth: self.depth + 1,
            code: (self.code << 3) | idx as u64,
        }
    }

    pub fn parent(&self) -> Option<Self> {
        (self.depth > 0).then(|| Self {
            depth: self.depth - 1,
            code: self.code >> 3,
        })
    }

    /// Octant index taken at `level` (1-based: level 1 is the choice made
    /// at the root).
    fn step(&self, level: u8) -> u8 {
        debug_assert!(level >= 1 && level <= self.depth);
        ((self.code >> (3 * (self.depth - level) as u32)) & 7) as u8
    }

    /// Integer cell coordinates on the `2^depth` grid, per axis.
    pub fn coords(&self) -> [u32; 3] {
        let mut c = [0u32; 3];
        for level in 1..=self.depth {
            let s = self.step(level);
            for a in 0..3 {
                c[a] = (c[a] << 1) | ((s >> a) & 1) as u32;
            }
        }
        c
    }

    pub fn from_coords(depth: u8, c: [u32; 3]) -> Self {
        assert!(depth <= MAX_TREE_DEPTH);
        let side = 1u32 << depth;
        assert!(c.iter().all(|v| *v < side));
        let mut code = 0u64;
        for bit in (0..depth).rev() {
            let mut s = 0u64;
            for a in 0..3 {
                s |= (((c[a] >> bit) & 1) as u64) << a;
            }
            code = (code << 3) | s;
        }
        Self { depth, code }
    }

    /// Code shifted so cells of different depths compare spatially.
    fn aligned(&self) -> u128 {
        (self.code as u128) << (3 * (MAX_TREE_DEPTH - self.depth) as u32)
    }
}

impl Ord for CellId {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.aligned()
            .cmp(&o.aligned())
            .then(self.depth.cmp(&o.depth))
    }
}

impl PartialOrd for CellId {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

/// Classifier verdict for one cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellClass {
    Empty,
    Full,
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Node {
    Leaf(bool),
    Internal(Box<[Node; 8]>),
}

impl Node {
    fn canonical(children: [Node; 8]) -> Node {
        if let Node::Leaf(v) = children[0] {
            if children
                .iter()
                .all(|c| matches!(c, Node::Leaf(w) if *w == v))
            {
                return Node::Leaf(v);
            }
        }
        Node::Internal(Box::new(children))
    }
}

/// Connected-component labeling of the full cells of a tree.
#[derive(Clone, Debug)]
pub struct Components {
    /// Number of components; labels run `0..count`.
    pub count: u32,
    /// Label per full leaf. Components are numbered in increasing order of
    /// their smallest member cell, making labels deterministic.
    pub labels: HashMap<CellId, u32>,
}

/// Serialization / deserialization failures.
#[derive(Debug, Error)]
pub enum TreeIoError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes (not an octree stream)")]
    BadMagic,
    #[error("malformed octree stream: {0}")]
    BadStructure(&'static str),
}

const OCTREE_MAGIC: &[u8; 4] = b"OCT1";

/// Boolean subset of a box, stored as an adaptive octant tree.
#[derive(Clone, Debug, PartialEq)]
pub struct Octree<R> {
    bounds: Box3<R>,
    max_depth: u8,
    periodic: [bool; 3],
    root: Node,
}

impl<R: Real> Octree<R> {
    /// Builds a tree by recursive classification. `classify` sees each
    /// candidate cell with its depth; `Mixed` verdicts subdivide until
    /// `max_depth`, where they resolve conservatively to full.
    pub fn build(
        bounds: Box3<R>,
        max_depth: u8,
        periodic: [bool; 3],
        classify: &mut impl FnMut(&Box3<R>, u8) -> CellClass,
    ) -> Self {
        assert!(
            (1..=MAX_BUILD_DEPTH).contains(&max_depth),
            "max_depth must lie in 1..={MAX_BUILD_DEPTH}"
        );
        let root = Self::build_node(&bounds, 0, max_depth, classify);
        Self {
            bounds,
            max_depth,
            periodic,
            root,
        }
    }

    fn build_node(
        bounds: &Box3<R>,
        depth: u8,
        max_depth: u8,
        classify: &mut impl FnMut(&Box3<R>, u8) -> CellClass,
    ) -> Node {
        match classify(bounds, depth) {
            CellClass::Empty => Node::Leaf(false),
            CellClass::Full => Node::Leaf(true),
            CellClass::Mixed => {
                if depth >= max_depth {
                    return Node::Leaf(true);
                }
                let children = std::array::from_fn(|i| {
                    Self::build_node(&bounds.octant(i as u8), depth + 1, max_depth, classify)
                });
                Node::canonical(children)
            }
        }
    }

    /// Builds the tree whose full set is exactly the given max-depth
    /// cells (duplicates allowed). The canonical merged form is produced
    /// directly from the sorted locational codes.
    pub fn from_max_depth_cells(
        bounds: Box3<R>,
        max_depth: u8,
        periodic: [bool; 3],
        cells: impl IntoIterator<Item = CellId>,
    ) -> Self {
        assert!((1..=MAX_BUILD_DEPTH).contains(&max_depth));
        let mut codes: Vec<u64> = cells
            .into_iter()
            .map(|id| {
                assert!(id.depth == max_depth, "cells must be at max depth");
                id.code
            })
            .collect();
        codes.sort_unstable();
        codes.dedup();
        fn make(codes: &[u64], prefix: u64, depth: u8, max: u8) -> Node {
            if codes.is_empty() {
                return Node::Leaf(false);
            }
            let shift = 3 * (max - depth) as u32;
            if depth == max {
                return Node::Leaf(true); // non-empty slice at exact cell
            }
            if codes.len() as u64 == 1u64 << shift {
                return Node::Leaf(true); // every descendant present
            }
            let children = std::array::from_fn(|i| {
                let child_prefix = (prefix << 3) | i as u64;
                let cs = 3 * (max - depth - 1) as u32;
                let lo = child_prefix << cs;
                let hi = (child_prefix + 1) << cs;
                let a = codes.partition_point(|c| *c < lo);
                let b = codes.partition_point(|c| *c < hi);
                make(&codes[a..b], child_prefix, depth + 1, max)
            });
            Node::canonical(children)
        }
        let root = make(&codes, 0, 0, max_depth);
        Self {
            bounds,
            max_depth,
            periodic,
            root,
        }
    }

    /// The max-depth cell containing a point (wrapping periodic axes),
    /// or `None` outside the box on a non-periodic axis.
    pub fn max_depth_cell_at(&self, p: [R; 3]) -> Option<CellId> {
        cell_containing(&self.bounds, self.periodic, self.max_depth, p)
    }

    /// A single-leaf tree covering the whole box.
    pub fn uniform(bounds: Box3<R>, max_depth: u8, periodic: [bool; 3], value: bool) -> Self {
        assert!((1..=MAX_BUILD_DEPTH).contains(&max_depth));
        Self {
            bounds,
            max_depth,
            periodic,
            root: Node::Leaf(value),
        }
    }

    pub fn bounds(&self) -> &Box3<R> {
        &self.bounds
    }

    pub fn max_depth(&self) -> u8 {
        self.max_depth
    }

    pub fn periodic(&self) -> [bool; 3] {
        self.periodic
    }

    /// Geometric box of a cell (independent of tree contents).
    pub fn cell_box(&self, id: CellId) -> Box3<R> {
        let mut b = self.bounds;
        for level in 1..=id.depth {
            b = b.octant(id.step(level));
        }
        b
    }

    pub fn cell_center(&self, id: CellId) -> [R; 3] {
        self.cell_box(id).center()
    }

    /// Side length of a max-depth leaf along each axis.
    pub fn finest_widths(&self) -> [R; 3] {
        let w = self.bounds.widths();
        let s = R::of(f64::from(1u32 << self.max_depth));
        [w[0] / s, w[1] / s, w[2] / s]
    }

    fn wrap_point(&self, mut p: [R; 3]) -> [R; 3] {
        for a in 0..3 {
            if self.periodic[a] {
                let w = self.bounds.hi[a] - self.bounds.lo[a];
                let mut t = (p[a] - self.bounds.lo[a]) % w;
                if t < R::zero() {
                    t = t + w;
                }
                p[a] = self.bounds.lo[a] + t;
            }
        }
        p
    }

    /// Membership at a point. Periodic axes wrap; non-periodic coordinates
    /// outside the box give `false`. Internal subdivision planes follow
    /// half-open semantics (a point on a plane belongs to the upper cell).
    pub fn value_at(&self, p: [R; 3]) -> bool {
        self.leaf_at(p).map(|(_, v)| v).unwrap_or(false)
    }

    /// Leaf containing a point, its value, and the max-depth cell
    /// containing the point. All three come from one descent, so the cell
    /// is always a descendant of the leaf — unlike pairing [`Self::leaf_at`]
    /// with [`Self::max_depth_cell_at`], which use different rounding and
    /// can disagree for points sitting exactly on cell faces.
    pub fn locate(&self, p: [R; 3]) -> Option<(CellId, bool, CellId)> {
        let p = self.wrap_point(p);
        if !self.bounds.contains(p) {
            return None;
        }
        let mut node = &self.root;
        let mut b = self.bounds;
        let mut id = CellId::ROOT;
        let mut leaf: Option<(CellId, bool)> = None;
        loop {
            if leaf.is_none() {
                if let Node::Leaf(v) = node {
                    leaf = Some((id, *v));
                }
            }
            if id.depth() == self.max_depth {
                break;
            }
            let mid = b.center();
            let mut idx = 0u8;
            for a in 0..3 {
                if p[a] >= mid[a] {
                    idx |= 1 << a;
                }
            }
            if let Node::Internal(children) = node {
                node = &children[idx as usize];
            }
            b = b.octant(idx);
            id = id.child(idx);
        }
        let (leaf_id, value) = leaf.expect("no internal nodes exist at max depth");
        Some((leaf_id, value, id))
    }

    /// Leaf containing a point, with its value.
    pub fn leaf_at(&self, p: [R; 3]) -> Option<(CellId, bool)> {
        let p = self.wrap_point(p);
        if !self.bounds.contains(p) {
            return None;
        }
        let mut node = &self.root;
        let mut b = self.bounds;
        let mut id = CellId::ROOT;
        loop {
            match node {
                Node::Leaf(v) => return Some((id, *v)),
                Node::Internal(children) => {
                    let mid = b.center();
                    let mut idx = 0u8;
                    for a in 0..3 {
                        if p[a] >= mid[a] {
                            idx |= 1 << a;
                        }
                    }
                    node = &children[idx as usize];
                    b = b.octant(idx);
                    id = id.child(idx);
                }
            }
        }
    }

    /// Visits every leaf in locational order.
    pub fn visit_leaves(&self, f: &mut impl FnMut(CellId, &Box3<R>, bool)) {
        fn go<R: Real>(
            node: &Node,
            id: CellId,
            b: &Box3<R>,
            f: &mut impl FnMut(CellId, &Box3<R>, bool),
        ) {
            match node {
                Node::Leaf(v) => f(id, b, *v),
                Node::Internal(children) => {
                    for (i, c) in children.iter().enumerate() {
                        go(c, id.child(i as u8), &b.octant(i as u8), f);
                    }
                }
            }
        }
        go(&self.root, CellId::ROOT, &self.bounds, f);
    }

    /// All full leaves, in locational order.
    pub fn full_leaves(&self) -> Vec<CellId> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |id, _, v| {
            if v {
                out.push(id);
            }
        });
        out
    }

    pub fn full_leaf_count(&self) -> usize {
        let mut n = 0;
        self.visit_leaves(&mut |_, _, v| n += usize::from(v));
        n
    }

    pub fn is_empty_set(&self) -> bool {
        self.full_leaf_count() == 0
    }

    /// Measure of the full region (exact for the tree itself).
    pub fn volume(&self) -> R {
        fn fraction<R: Real>(node: &Node) -> R {
            match node {
                Node::Leaf(true) => R::one(),
                Node::Leaf(false) => R::zero(),
                Node::Internal(children) => {
                    let mut s = R::zero();
                    for c in children.iter() {
                        s = s + fraction::<R>(c);
                    }
                    s / R::of(8.0)
                }
            }
        }
        fraction::<R>(&self.root) * self.bounds.volume()
    }

    fn assert_compatible(&self, o: &Self) {
        assert!(
            self.bounds == o.bounds && self.max_depth == o.max_depth && self.periodic == o.periodic,
            "set algebra requires trees over the same box, depth, and periodicity"
        );
    }

    fn zip(a: &Node, b: &Node, f: &impl Fn(bool, bool) -> bool) -> Node {
        match (a, b) {
            (Node::Leaf(x), Node::Leaf(y)) => Node::Leaf(f(*x, *y)),
            _ => {
                // A leaf zipped against an internal node acts as its own
                // eighth-fold child.
                let ka = if let Node::Internal(k) = a { Some(k) } else { None };
                let kb = if let Node::Internal(k) = b { Some(k) } else { None };
                let children = std::array::from_fn(|i| {
                    let ca = ka.map_or(a, |k| &k[i]);
                    let cb = kb.map_or(b, |k| &k[i]);
                    Self::zip(ca, cb, f)
                });
                Node::canonical(children)
            }
        }
    }

    fn combine(&self, o: &Self, f: impl Fn(bool, bool) -> bool) -> Self {
        self.assert_compatible(o);
        Self {
            bounds: self.bounds,
            max_depth: self.max_depth,
            periodic: self.periodic,
            root: Self::zip(&self.root, &o.root, &f),
        }
    }

    pub fn union(&self, o: &Self) -> Self {
        self.combine(o, |a, b| a || b)
    }

    pub fn intersect(&self, o: &Self) -> Self {
        self.combine(o, |a, b| a && b)
    }

    pub fn difference(&self, o: &Self) -> Self {
        self.combine(o, |a, b| a && !b)
    }

    /// New tree keeping only the full leaves selected by `keep`; structure
    /// is re-canonicalized.
    pub fn retain_full(&self, keep: &mut impl FnMut(CellId) -> bool) -> Self {
        fn go(node: &Node, id: CellId, keep: &mut impl FnMut(CellId) -> bool) -> Node {
            match node {
                Node::Leaf(false) => Node::Leaf(false),
                Node::Leaf(true) => Node::Leaf(keep(id)),
                Node::Internal(children) => {
                    let kids = std::array::from_fn(|i| go(&children[i], id.child(i as u8), keep));
                    Node::canonical(kids)
                }
            }
        }
        Self {
            bounds: self.bounds,
            max_depth: self.max_depth,
            periodic: self.periodic,
            root: go(&self.root, CellId::ROOT, keep),
        }
    }

    pub fn complement(&self) -> Self {
        fn flip(n: &Node) -> Node {
            match n {
                Node::Leaf(v) => Node::Leaf(!v),
                Node::Internal(k) => {
                    Node::Internal(Box::new(std::array::from_fn(|i| flip(&k[i]))))
                }
            }
        }
        Self {
            bounds: self.bounds,
            max_depth: self.max_depth,
            periodic: self.periodic,
            root: flip(&self.root),
        }
    }

    /// Node at the exact cell `id`, or the ancestor leaf that covers it.
    /// Returns the node and the depth at which descent stopped.
    fn descend(&self, id: CellId) -> (&Node, u8) {
        let mut node = &self.root;
        for level in 1..=id.depth {
            match node {
                Node::Leaf(_) => return (node, level - 1),
                Node::Internal(children) => node = &children[id.step(level) as usize],
            }
        }
        (node, id.depth)
    }

    /// The same-depth neighbor cell of `id` in direction `dir` along
    /// `axis`, respecting periodic wrap. `None` when it falls outside a
    /// non-periodic boundary.
    pub fn neighbor_cell(&self, id: CellId, axis: usize, dir: i32) -> Option<CellId> {
        let side = 1u32 << id.depth;
        let mut c = id.coords();
        let v = c[axis] as i64 + dir as i64;
        let w = if v < 0 {
            if !self.periodic[axis] {
                return None;
            }
            (v + side as i64) as u32
        } else if v >= side as i64 {
            if !self.periodic[axis] {
                return None;
            }
            (v - side as i64) as u32
        } else {
            v as u32
        };
        c[axis] = w;
        Some(CellId::from_coords(id.depth, c))
    }

    /// Full leaves of `node` lying on the face of the subtree where the
    /// `axis` coordinate takes its `side` extreme (0 = low face).
    fn collect_face_full(node: &Node, id: CellId, axis: usize, side: u8, out: &mut Vec<CellId>) {
        match node {
            Node::Leaf(true) => out.push(id),
            Node::Leaf(false) => {}
            Node::Internal(children) => {
                for i in 0..8u8 {
                    if (i >> axis) & 1 == side {
                        Self::collect_face_full(
                            &children[i as usize],
                            id.child(i),
                            axis,
                            side,
                            out,
                        );
                    }
                }
            }
        }
    }

    /// True iff the face of `node` at the `side` extreme of `axis` is
    /// entirely full.
    fn face_fully_full(node: &Node, axis: usize, side: u8) -> bool {
        match node {
            Node::Leaf(v) => *v,
            Node::Internal(children) => (0..8u8)
                .filter(|i| (i >> axis) & 1 == side)
                .all(|i| Self::face_fully_full(&children[i as usize], axis, side)),
        }
    }

    /// For a full leaf `id` and a face direction, the neighboring full
    /// leaf cells touching that face (possibly an ancestor-sized cell).
    fn face_neighbors(&self, id: CellId, axis: usize, dir: i32) -> Vec<CellId> {
        let Some(n) = self.neighbor_cell(id, axis, dir) else {
            return Vec::new();
        };
        let (node, depth) = self.descend(n);
        match node {
            Node::Leaf(true) => {
                let trunc = CellId {
                    depth,
                    code: n.code >> (3 * (n.depth - depth) as u32),
                };
                vec![trunc]
            }
            Node::Leaf(false) => Vec::new(),
            Node::Internal(_) => {
                // The neighbor cell is subdivided; its touching face is the
                // one opposite to `dir`.
                let side = if dir > 0 { 0 } else { 1 };
                let mut out = Vec::new();
                Self::collect_face_full(node, n, axis, side, &mut out);
                out
            }
        }
    }

    /// True iff some part of the face of full leaf `id` in direction
    /// `dir`/`axis` borders empty space (or the domain boundary on a
    /// non-periodic axis).
    /// True when the `dir`-side face of full leaf `id` along `axis` is not
    /// entirely backed by full cells — i.e. the face lies on the set's
    /// cell-level boundary (domain edges of non-periodic axes count).
    pub fn face_exposed(&self, id: CellId, axis: usize, dir: i32) -> bool {
        let Some(n) = self.neighbor_cell(id, axis, dir) else {
            return true;
        };
        let (node, _) = self.descend(n);
        let side = if dir > 0 { 0 } else { 1 };
        !Self::face_fully_full(node, axis, side)
    }

    /// Full leaves with at least one face not entirely backed by full
    /// cells — the cell-level boundary of the set. Locational order.
    pub fn boundary_cells(&self) -> Vec<CellId> {
        self.full_leaves()
            .into_iter()
            .filter(|id| {
                (0..3).any(|axis| {
                    self.face_exposed(*id, axis, 1) || self.face_exposed(*id, axis, -1)
                })
            })
            .collect()
    }

    /// Labels the full cells by face-adjacency (6-connectivity, with wrap
    /// across periodic axes).
    pub fn connected_components(&self) -> Components {
        let leaves = self.full_leaves();
        let index: HashMap<CellId, usize> =
            leaves.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut uf = UnionFind::new(leaves.len());
        for (i, id) in leaves.iter().enumerate() {
            for axis in 0..3 {
                // Both directions are scanned so that adjacency against a
                // coarser neighbor (which only the finer side can see) is
                // never missed.
                for dir in [1, -1] {
                    for nb in self.face_neighbors(*id, axis, dir) {
                        if let Some(j) = index.get(&nb) {
                            uf.union(i, *j);
                        }
                    }
                }
            }
        }
        // Components ordered by their smallest cell (leaves are already in
        // locational order, so first occurrence = smallest).
        let mut label_of_root: HashMap<usize, u32> = HashMap::new();
        let mut labels = HashMap::with_capacity(leaves.len());
        let mut count = 0u32;
        for (i, id) in leaves.iter().enumerate() {
            let r = uf.find(i);
            let l = *label_of_root.entry(r).or_insert_with(|| {
                let l = count;
                count += 1;
                l
            });
            labels.insert(*id, l);
        }
        Components { count, labels }
    }

    /// Serializes as a compact preorder byte stream.
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), TreeIoError> {
        w.write_all(OCTREE_MAGIC)?;
        for a in 0..3 {
            w.write_all(&self.bounds.lo[a].to_f64_lossy().to_le_bytes())?;
        }
        for a in 0..3 {
            w.write_all(&self.bounds.hi[a].to_f64_lossy().to_le_bytes())?;
        }
        w.write_all(&[self.max_depth])?;
        w.write_all(&[
            u8::from(self.periodic[0]),
            u8::from(self.periodic[1]),
            u8::from(self.periodic[2]),
        ])?;
        fn emit(n: &Node, w: &mut impl Write) -> Result<(), TreeIoError> {
            match n {
                Node::Leaf(false) => w.write_all(&[0])?,
                Node::Leaf(true) => w.write_all(&[1])?,
                Node::Internal(children) => {
                    w.write_all(&[2])?;
                    for c in children.iter() {
                        emit(c, w)?;
                    }
                }
            }
            Ok(())
        }
        emit(&self.root, w)
    }

    /// Reads a tree previously written by [`Octree::write_to`], consuming
    /// exactly its bytes from the stream.
    pub fn read_from(r: &mut impl Read) -> Result<Self, TreeIoError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != OCTREE_MAGIC {
            return Err(TreeIoError::BadMagic);
        }
        let mut f = [0u8; 8];
        let mut lo = [R::zero(); 3];
        let mut hi = [R::zero(); 3];
        for v in lo.iter_mut() {
            r.read_exact(&mut f)?;
            *v = R::of(f64::from_le_bytes(f));
        }
        for v in hi.iter_mut() {
            r.read_exact(&mut f)?;
            *v = R::of(f64::from_le_bytes(f));
        }
        let mut b = [0u8; 1];
        r.read_exact(&mut b)?;
        let max_depth = b[0];
        if max_depth == 0 || max_depth > MAX_BUILD_DEPTH {
            return Err(TreeIoError::BadStructure("depth overflow"));
        }
        let mut per = [0u8; 3];
        r.read_exact(&mut per)?;
        if per.iter().any(|v| *v > 1) {
            return Err(TreeIoError::BadStructure("periodic flag not 0/1"));
        }
        for a in 0..3 {
            if !(lo[a].is_finite() && hi[a].is_finite() && lo[a] < hi[a]) {
                return Err(TreeIoError::BadStructure("degenerate bounds"));
            }
        }
        fn parse<RR: Real>(r: &mut impl Read, depth: u8, max: u8) -> Result<Node, TreeIoError> {
            let mut b = [0u8; 1];
            r.read_exact(&mut b)?;
            match b[0] {
                0 => Ok(Node::Leaf(false)),
                1 => Ok(Node::Leaf(true)),
                2 => {
                    if depth >= max {
                        return Err(TreeIoError::BadStructure(
                            "internal node below the declared max depth",
                        ));
                    }
                    let mut children: [Node; 8] = std::array::from_fn(|_| Node::Leaf(false));
                    for c in children.iter_mut() {
                        *c = parse::<RR>(r, depth + 1, max)?;
                    }
                    Ok(Node::Internal(Box::new(children)))
                }
                _ => Err(TreeIoError::BadStructure("unknown node tag")),
            }
        }
        let root = parse::<R>(r, 0, max_depth)?;
        Ok(Self {
            bounds: Box3::new(lo, hi),
            max_depth,
            periodic: [per[0] == 1, per[1] == 1, per[2] == 1],
            root,
        })
    }
}

/// The depth-`depth` cell of the grid over `bounds` containing `p`.
/// Periodic axes wrap; points exactly on the upper bound of a
/// non-periodic axis belong to the last cell.
pub fn cell_containing<R: Real>(
    bounds: &Box3<R>,
    periodic: [bool; 3],
    depth: u8,
    p: [R; 3],
) -> Option<CellId> {
    let side = 1u32 << depth;
    let mut c = [0u32; 3];
    for a in 0..3 {
        let w = bounds.hi[a] - bounds.lo[a];
        let mut t = (p[a] - bounds.lo[a]) / w;
        if periodic[a] {
            t = t - t.floor();
        } else if t < R::zero() || t > R::one() {
            return None;
        }
        let i = (t * R::of(f64::from(side))).floor().to_f64_lossy() as i64;
        c[a] = i.clamp(0, side as i64 - 1) as u32;
    }
    Some(CellId::from_coords(depth, c))
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Deterministic: smaller index wins the root.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::VecDeque;

    fn unit_box() -> Box3<f64> {
        Box3::new([0.0; 3], [1.0; 3])
    }

    #[test]
    fn cell_id_coords_roundtrip_and_order() {
        let id = CellId::from_coords(3, [5, 2, 7]);
        assert_eq!(id.coords(), [5, 2, 7]);
        let parent = id.parent().unwrap();
        assert_eq!(parent.coords(), [2, 1, 3]);
        // A parent sorts immediately before its own first child and before
        // all its descendants.
        assert!(parent < id || parent.child(0) <= id);
        assert!(parent < parent.child(0));
        assert!(parent.child(0) < parent.child(1));
        // Cells of equal depth sort by locational code.
        let a = CellId::from_coords(2, [0, 0, 0]);
        let b = CellId::from_coords(2, [1, 0, 0]);
        assert!(a < b);
    }

    #[test]
    fn octant_and_corner_agree_on_bit_convention() {
        let b = Box3::new([0.0, 10.0, -2.0], [1.0, 12.0, 0.0]);
        let o5 = b.octant(5); // bits: x=1, y=0, z=1
        assert_eq!(o5.lo, [0.5, 10.0, -1.0]);
        assert_eq!(o5.hi, [1.0, 11.0, 0.0]);
        assert_eq!(b.corner(5), [1.0, 10.0, 0.0]);
    }

    fn half_space_classify(c: f64) -> impl FnMut(&Box3<f64>, u8) -> CellClass {
        move |b, _| {
            if b.hi[0] <= c {
                CellClass::Full
            } else if b.lo[0] >= c {
                CellClass::Empty
            } else {
                CellClass::Mixed
            }
        }
    }

    #[test]
    fn half_space_volume_converges_from_above() {
        // Off-dyadic plane so no cell edge ever coincides with it.
        let c = 0.532871;
        for depth in [3u8, 5, 7] {
            let t = Octree::build(unit_box(), depth, [false; 3], &mut half_space_classify(c));
            let v = t.volume();
            let slack = 1.0 / f64::from(1u32 << depth); // one boundary layer
            assert!(v >= c && v <= c + slack, "depth {depth}: vol {v}");
        }
    }

    #[test]
    fn boolean_ops_match_pointwise_logic() {
        let ball = |b: &Box3<f64>, _: u8| {
            let cen = [0.45, 0.55, 0.5];
            let r = 0.31;
            let mut near = 0;
            for j in 0..8 {
                let p = b.corner(j);
                let d2: f64 = (0..3).map(|a| (p[a] - cen[a]).powi(2)).sum();
                if d2 <= r * r {
                    near += 1;
                }
            }
            // Corner verdicts are not exact for a ball; mark uncertain
            // cells mixed so the test exercises deep subdivision.
            match near {
                8 => CellClass::Full,
                0 => {
                    let cp: f64 = (0..3)
                        .map(|a| {
                            let t = cen[a].clamp(b.lo[a], b.hi[a]);
                            (t - cen[a]).powi(2)
                        })
                        .sum();
                    if cp > r * r {
                        CellClass::Empty
                    } else {
                        CellClass::Mixed
                    }
                }
                _ => CellClass::Mixed,
            }
        };
        let a = Octree::build(unit_box(), 5, [false; 3], &mut half_space_classify(0.47));
        let mut ball_classify = ball;
        let b = Octree::build(unit_box(), 5, [false; 3], &mut ball_classify);
        let union = a.union(&b);
        let inter = a.intersect(&b);
        let diff = a.difference(&b);
        let comp = a.complement();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let p = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            let (va, vb) = (a.value_at(p), b.value_at(p));
            assert_eq!(union.value_at(p), va || vb);
            assert_eq!(inter.value_at(p), va && vb);
            assert_eq!(diff.value_at(p), va && !vb);
            assert_eq!(comp.value_at(p), !va);
        }
        // Algebraic sanity on measures.
        let vsum = union.volume() + inter.volume();
        assert!((vsum - (a.volume() + b.volume())).abs() < 1e-12);
    }

    #[test]
    fn union_with_self_is_identity() {
        let t = Octree::build(unit_box(), 4, [false; 3], &mut half_space_classify(0.3));
        assert_eq!(t.union(&t), t);
        assert_eq!(t.intersect(&t), t);
        assert!(t.difference(&t).is_empty_set());
    }

    #[test]
    fn set_equal_trees_serialize_identically() {
        // Canonical form: the same set reached by different op orders must
        // produce byte-identical streams.
        let a = Octree::build(unit_box(), 4, [false; 3], &mut half_space_classify(0.3));
        let b = Octree::build(unit_box(), 4, [false; 3], &mut half_space_classify(0.62));
        let bytes = |t: &Octree<f64>| {
            let mut v = Vec::new();
            t.write_to(&mut v).unwrap();
            v
        };
        assert_eq!(bytes(&a.union(&b)), bytes(&b.union(&a)));
        assert_eq!(bytes(&a.intersect(&b)), bytes(&b.intersect(&a)));
        let via_diff = a.difference(&a.difference(&b));
        assert_eq!(bytes(&via_diff), bytes(&a.intersect(&b)));
    }

    #[test]
    fn tree_from_cell_set_matches_membership() {
        let depth = 4u8;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let side = 1u32 << depth;
        let cells: Vec<CellId> = (0..300)
            .map(|_| {
                CellId::from_coords(
                    depth,
                    [
                        rng.gen_range(0..side),
                        rng.gen_range(0..side),
                        rng.gen_range(0..side),
                    ],
                )
            })
            .collect();
        let t = Octree::from_max_depth_cells(unit_box(), depth, [false; 3], cells.clone());
        use std::collections::HashSet;
        let set: HashSet<CellId> = cells.into_iter().collect();
        assert_eq!(t.full_leaf_count(), set.len(), "thin set should not merge");
        for id in &set {
            let c = t.cell_box(*id).center();
            assert!(t.value_at(c));
            assert_eq!(t.max_depth_cell_at(c), Some(*id));
        }
        // A complete 2x2x2 block of cells merges into one parent leaf.
        let block: Vec<CellId> = (0..8u8)
            .map(|i| CellId::from_coords(1, [0, 0, 0]).child(i))
            .collect();
        let merged = Octree::from_max_depth_cells(unit_box(), 2, [false; 3], block);
        assert_eq!(merged.full_leaves(), vec![CellId::from_coords(1, [0, 0, 0])]);
    }

    #[test]
    fn cell_containing_wraps_and_clamps() {
        let b = Box3::new([0.0, 0.0, -1.0], [2.0, 2.0, 1.0]);
        let id = cell_containing(&b, [false, false, true], 2, [0.1, 1.9, -0.99]).unwrap();
        assert_eq!(id.coords(), [0, 3, 0]);
        // Periodic z wraps.
        let w = cell_containing(&b, [false, false, true], 2, [0.1, 0.1, 1.5]).unwrap();
        assert_eq!(w.coords()[2], 1); // 1.5 wraps to -0.5 -> second z cell
        // Upper bound on a non-periodic axis clamps to the last cell.
        let top = cell_containing(&b, [false, false, true], 2, [2.0, 0.1, 0.0]).unwrap();
        assert_eq!(top.coords()[0], 3);
        assert!(cell_containing(&b, [false, false, true], 2, [2.1, 0.1, 0.0]).is_none());
    }

    #[test]
    fn retain_full_prunes_and_recanonicalizes() {
        let t = Octree::build(unit_box(), 3, [false; 3], &mut half_space_classify(0.5));
        // Keep only cells below y = 0.5: result must equal the quarter
        // space built directly.
        let kept = t.retain_full(&mut |id| {
            let b = t.cell_box(id);
            b.hi[1] <= 0.5
        });
        let mut quarter = |b: &Box3<f64>, _: u8| {
            if b.hi[0] <= 0.5 && b.hi[1] <= 0.5 {
                CellClass::Full
            } else if b.lo[0] >= 0.5 || b.lo[1] >= 0.5 {
                CellClass::Empty
            } else {
                CellClass::Mixed
            }
        };
        let direct = Octree::build(unit_box(), 3, [false; 3], &mut quarter);
        assert_eq!(kept, direct);
        // Keeping everything is the identity.
        assert_eq!(t.retain_full(&mut |_| true), t);
    }

    /// Voxel-accurate random set; classify is exact at `depth`, so the
    /// tree equals the voxel set and components can be cross-checked by
    /// breadth-first flood fill.
    struct VoxelSet {
        side: usize,
        cells: Vec<bool>,
    }

    impl VoxelSet {
        fn random(depth: u8, fill: f64, seed: u64) -> Self {
            let side = 1usize << depth;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cells = (0..side * side * side)
                .map(|_| rng.gen::<f64>() < fill)
                .collect();
            Self { side, cells }
        }

        fn get(&self, i: usize, j: usize, k: usize) -> bool {
            self.cells[(i * self.side + j) * self.side + k]
        }

        fn classify(&self, b: &Box3<f64>, _depth: u8) -> CellClass {
            // Integer block covered by this cell on the voxel grid.
            let s = self.side as f64;
            let r = |v: f64| (v * s).round() as usize;
            let (i0, i1) = (r(b.lo[0]), r(b.hi[0]));
            let (j0, j1) = (r(b.lo[1]), r(b.hi[1]));
            let (k0, k1) = (r(b.lo[2]), r(b.hi[2]));
            let mut any = false;
            let mut all = true;
            for i in i0..i1 {
                for j in j0..j1 {
                    for k in k0..k1 {
                        if self.get(i, j, k) {
                            any = true;
                        } else {
                            all = false;
                        }
                    }
                }
            }
            match (any, all) {
                (true, true) => CellClass::Full,
                (false, _) => CellClass::Empty,
                _ => CellClass::Mixed,
            }
        }

        fn flood_components(&self, periodic_z: bool) -> usize {
            let mut seen = vec![false; self.cells.len()];
            let mut count = 0;
            let n = self.side;
            for start in 0..self.cells.len() {
                if !self.cells[start] || seen[start] {
                    continue;
                }
                count += 1;
                let mut q = VecDeque::from([start]);
                seen[start] = true;
                while let Some(c) = q.pop_front() {
                    let (i, j, k) = (c / (n * n), (c / n) % n, c % n);
                    let mut push = |i: usize, j: usize, k: usize| {
                        let idx = (i * n + j) * n + k;
                        if self.cells[idx] && !seen[idx] {
                            seen[idx] = true;
                            q.push_back(idx);
                        }
                    };
                    if i > 0 {
                        push(i - 1, j, k);
                    }
                    if i + 1 < n {
                        push(i + 1, j, k);
                    }
                    if j > 0 {
                        push(i, j - 1, k);
                    }
                    if j + 1 < n {
                        push(i, j + 1, k);
                    }
                    if k > 0 {
                        push(i, j, k - 1);
                    } else if periodic_z {
                        push(i, j, n - 1);
                    }
                    if k + 1 < n {
                        push(i, j, k + 1);
                    } else if periodic_z {
                        push(i, j, 0);
                    }
                }
            }
            count
        }
    }

    #[test]
    fn components_match_voxel_flood_fill() {
        for seed in [1u64, 2, 9, 17] {
            for periodic_z in [false, true] {
                let vox = VoxelSet::random(3, 0.42, seed);
                let tree = Octree::build(
                    unit_box(),
                    3,
                    [false, false, periodic_z],
                    &mut |b, d| vox.classify(b, d),
                );
                let comps = tree.connected_components();
                let expect = vox.flood_components(periodic_z);
                assert_eq!(
                    comps.count as usize, expect,
                    "seed {seed} periodic {periodic_z}"
                );
                // Labels must agree with voxel-level adjacency: every
                // adjacent full voxel pair shares a component label.
                let n = vox.side;
                let center = |i: usize| (i as f64 + 0.5) / n as f64;
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            if !vox.get(i, j, k) {
                                continue;
                            }
                            let here = tree.leaf_at([center(i), center(j), center(k)]).unwrap();
                            assert!(here.1);
                            let l_here = comps.labels[&here.0];
                            if i + 1 < n && vox.get(i + 1, j, k) {
                                let nb =
                                    tree.leaf_at([center(i + 1), center(j), center(k)]).unwrap();
                                assert_eq!(l_here, comps.labels[&nb.0]);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn components_merge_across_mixed_depth_leaves() {
        // Left half full (one big leaf after canonicalization), plus a
        // thin full layer right of the plane only near the bottom: the
        // fine cells must connect to the coarse leaf.
        let mut classify = |b: &Box3<f64>, _: u8| {
            if b.hi[0] <= 0.5 {
                CellClass::Full
            } else if b.lo[0] >= 0.5 {
                if b.hi[0] <= 0.625 && b.hi[1] <= 0.25 && b.hi[2] <= 0.25 {
                    CellClass::Full
                } else if b.lo[0] < 0.625 && b.lo[1] < 0.25 && b.lo[2] < 0.25 {
                    CellClass::Mixed
                } else {
                    CellClass::Empty
                }
            } else {
                CellClass::Mixed
            }
        };
        let t = Octree::build(unit_box(), 3, [false; 3], &mut classify);
        let comps = t.connected_components();
        assert_eq!(comps.count, 1, "fine strip should join the coarse half");
    }

    #[test]
    fn boundary_cells_of_half_space_hug_the_plane() {
        let t = Octree::build(unit_box(), 4, [false; 3], &mut half_space_classify(0.5));
        // Exactly dyadic plane: tree is [0, .5] full as one merged block.
        let boundary = t.boundary_cells();
        assert!(!boundary.is_empty());
        for id in &boundary {
            let b = t.cell_box(*id);
            // Every full cell touches the domain wall, so every full cell
            // is a boundary cell here; the set equals all full leaves.
            assert!(b.hi[0] <= 0.5 + 1e-12);
        }
        assert_eq!(boundary.len(), t.full_leaves().len());
    }

    #[test]
    fn periodic_axis_wraps_value_queries() {
        // Full only in the low-z slab; query below lo wraps around.
        let mut classify = |b: &Box3<f64>, _: u8| {
            if b.hi[2] <= 0.25 {
                CellClass::Full
            } else if b.lo[2] >= 0.25 {
                CellClass::Empty
            } else {
                CellClass::Mixed
            }
        };
        let t = Octree::build(unit_box(), 3, [false, false, true], &mut classify);
        assert!(t.value_at([0.5, 0.5, 0.1]));
        assert!(!t.value_at([0.5, 0.5, 0.5]));
        assert!(t.value_at([0.5, 0.5, 1.05])); // wraps to 0.05
        assert!(t.value_at([0.5, 0.5, -0.9])); // wraps to 0.1
        assert!(!t.value_at([1.5, 0.5, 0.1])); // non-periodic overflow
    }

    #[test]
    fn serialization_errors_are_detected() {
        let t = Octree::build(unit_box(), 3, [false; 3], &mut half_space_classify(0.3));
        let mut bytes = Vec::new();
        t.write_to(&mut bytes).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            Octree::<f64>::read_from(&mut bad_magic.as_slice()),
            Err(TreeIoError::BadMagic)
        ));

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(
            Octree::<f64>::read_from(&mut &truncated[..]),
            Err(TreeIoError::Io(_))
        ));

        let mut bad_tag = bytes.clone();
        let last = bad_tag.len() - 1;
        bad_tag[last] = 7;
        assert!(Octree::<f64>::read_from(&mut bad_tag.as_slice()).is_err());
    }

    #[test]
    fn read_consumes_exactly_its_bytes() {
        let t = Octree::build(unit_box(), 2, [true, false, false], &mut half_space_classify(0.4));
        let mut bytes = Vec::new();
        t.write_to(&mut bytes).unwrap();
        bytes.extend_from_slice(b"TRAILER");
        let mut cursor = bytes.as_slice();
        let back = Octree::<f64>::read_from(&mut cursor).unwrap();
        assert_eq!(back, t);
        assert_eq!(cursor, b"TRAILER");
    }

    proptest! {
        #[test]
        fn serialization_roundtrips(seed in 0u64..500, depth in 1u8..4, fill in 0.2f64..0.8,
                                    px in proptest::bool::ANY, pz in proptest::bool::ANY) {
            let vox = VoxelSet::random(depth, fill, seed);
            let t = Octree::build(unit_box(), depth, [px, false, pz], &mut |b, d| vox.classify(b, d));
            let mut bytes = Vec::new();
            t.write_to(&mut bytes).unwrap();
            let back = Octree::<f64>::read_from(&mut bytes.as_slice()).unwrap();
            prop_assert_eq!(back, t);
        }

        #[test]
        fn cell_id_roundtrips(depth in 0u8..=6, i in 0u32..64, j in 0u32..64, k in 0u32..64) {
            let side = 1u32 << depth;
            let c = [i % side, j % side, k % side];
            let id = CellId::from_coords(depth, c);
            prop_assert_eq!(id.coords(), c);
            prop_assert_eq!(id.depth(), depth);
        }

        #[test]
        fn volume_is_between_zero_and_box(seed in 0u64..200) {
            let vox = VoxelSet::random(2, 0.5, seed);
            let t = Octree::build(unit_box(), 2, [false; 3], &mut |b, d| vox.classify(b, d));
            let v = t.volume();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            // Volume equals the voxel count over 64 exactly (dyadic sums).
            let full = vox.cells.iter().filter(|c| **c).count() as f64;
            prop_assert!((v - full / 64.0).abs() < 1e-12);
        }
    }
}
