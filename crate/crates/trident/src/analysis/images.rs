//! Joint-space side of the pipeline: images of basic regions, pairwise
//! coincidence classification, uniqueness domains, and the multiplicity
//! map.

use super::{AnalysisConfig, FORCE_SUBDIVIDE_DEPTH};
use crate::kinematics::{inverse_kinematics, ManipulatorGeometry, Pose};
use crate::octree::{cell_containing, CellClass, CellId, Octree};
use crate::regions::{RegionSet, SetKind};
use std::collections::{BTreeMap, HashMap, HashSet};

/// Joint-space image of every basic region, as an octree of max-depth
/// cells touched by the inverse kinematics of a dense pose lattice.
///
/// The lattice spacing is chosen from Lipschitz bounds on the leg lengths
/// (|∂ρ/∂x|, |∂ρ/∂y| ≤ 1 and |∂ρ/∂φ| ≤ max platform radius), so that
/// consecutive samples cannot skip over a joint-space cell: the image of
/// each region comes out without spurious pinholes.
pub fn build_basic_components(
    g: &ManipulatorGeometry<f64>,
    cfg: &AnalysisConfig,
    basic: &RegionSet<f64>,
) -> Vec<Octree<f64>> {
    let jb = cfg.joint_box;
    let depth = cfg.max_depth;
    let jleaf = cfg.joint_leaf();
    let eta = 0.9 * jleaf[0].min(jleaf[1]).min(jleaf[2]);
    let lphi = g.l2().max(g.l3());
    let mut out = Vec::with_capacity(basic.region_count() as usize);
    for r in 0..basic.region_count() {
        let mut cells: HashSet<CellId> = HashSet::new();
        let mut last: Option<CellId> = None;
        for id in basic.region_cells(r) {
            let b = basic.tree().cell_box(id);
            let w = b.widths();
            // Odd counts, so the exact cell center is always a sample.
            let odd = |n: usize| n | 1;
            let m = [
                odd((w[0] / eta).ceil() as usize + 1),
                odd((w[1] / eta).ceil() as usize + 1),
                odd((w[2] * lphi / eta).ceil() as usize + 1),
            ];
            for i in 0..m[0] {
                let x = b.lo[0] + w[0] * (i as f64) / ((m[0] - 1) as f64);
                for j in 0..m[1] {
                    let y = b.lo[1] + w[1] * (j as f64) / ((m[1] - 1) as f64);
                    for k in 0..m[2] {
                        let phi = b.lo[2] + w[2] * (k as f64) / ((m[2] - 1) as f64);
                        let q = inverse_kinematics(g, &Pose::new(x, y, phi));
                        let p = [q.rho[0], q.rho[1], q.rho[2]];
                        if let Some(cell) = cell_containing(&jb, [false; 3], depth, p) {
                            if last != Some(cell) {
                                cells.insert(cell);
                                last = Some(cell);
                            }
                        }
                    }
                }
            }
        }
        out.push(Octree::from_max_depth_cells(jb, depth, [false; 3], cells));
    }
    out
}

/// Volume Jaccard index of two sets on the same grid; 0 when both are
/// empty.
pub fn jaccard(a: &Octree<f64>, b: &Octree<f64>) -> f64 {
    let union = a.union(b).volume();
    if union <= 0.0 {
        return 0.0;
    }
    a.intersect(b).volume() / union
}

/// Pairwise classification of the basic components.
pub struct Coincidence {
    /// Coincidence classes (groups with pairwise Jaccard at or above the
    /// coincident threshold), each sorted, ordered by smallest member.
    pub classes: Vec<Vec<u32>>,
    /// Class index of each component.
    pub class_of: Vec<u32>,
    /// Full symmetric Jaccard matrix (1.0 on the diagonal).
    pub jaccard: Vec<Vec<f64>>,
    /// Pairs in the ambiguous band, empty components, and other troubles.
    pub faults: Vec<String>,
}

impl Coincidence {
    /// True when the two components' images are disjoint under the
    /// configured threshold.
    pub fn disjoint(&self, i: u32, j: u32, cfg: &AnalysisConfig) -> bool {
        i != j && self.jaccard[i as usize][j as usize] <= cfg.disjoint_jaccard
    }
}

/// Classifies every component pair as coincident (Jaccard ≥ the upper
/// threshold) or disjoint (≤ the lower threshold); anything in between is
/// reported as a fault and treated as neither. Coincident pairs are merged
/// transitively into classes.
pub fn coincidence_classes(components: &[Octree<f64>], cfg: &AnalysisConfig) -> Coincidence {
    let n = components.len();
    let mut faults = Vec::new();
    for (i, c) in components.iter().enumerate() {
        if c.is_empty_set() {
            faults.push(format!("basic component {i} has an empty joint-space image"));
        }
    }
    let mut matrix = vec![vec![0.0f64; n]; n];
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        matrix[i][i] = 1.0;
        for j in (i + 1)..n {
            let v = jaccard(&components[i], &components[j]);
            matrix[i][j] = v;
            matrix[j][i] = v;
            if v >= cfg.coincident_jaccard {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    let (lo, hi) = (a.min(b), a.max(b));
                    parent[hi] = lo;
                }
            } else if v > cfg.disjoint_jaccard {
                faults.push(format!(
                    "components {i} and {j}: Jaccard {v:.4} is neither coincident nor disjoint"
                ));
            }
        }
    }
    let mut class_of = vec![u32::MAX; n];
    let mut classes: Vec<Vec<u32>> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        if class_of[root] == u32::MAX {
            class_of[root] = classes.len() as u32;
            classes.push(Vec::new());
        }
        class_of[i] = class_of[root];
        classes[class_of[i] as usize].push(i as u32);
    }
    Coincidence {
        classes,
        class_of,
        jaccard: matrix,
        faults,
    }
}

/// Uniqueness domains: per aspect, the basic regions are partitioned into
/// families with pairwise-disjoint images; each family, together with the
/// separating characteristic-surface cells adjacent to at least two of its
/// members, is one domain where the direct kinematics is globally unique.
///
/// The partition leans on the coincident-or-disjoint structure of one
/// aspect's components: two regions of an aspect overlap in image exactly
/// when they share a coincidence class, so distributing each class round-
/// robin gives maximal disjoint families, and the family count is the
/// largest class restriction. Concretely the regions are colored greedily
/// in (class, id) order, each taking the first family it does not overlap
/// — which reproduces the class rounds when the structure is clean, and
/// degrades into extra families (reported as a fault, not hidden) when
/// coarse-depth image dilation creates spurious cross-class overlaps.
pub fn build_uniqueness_domains(
    basic: &RegionSet<f64>,
    region_aspect: &[u32],
    characteristic: &[Octree<f64>],
    coin: &Coincidence,
    cfg: &AnalysisConfig,
    aspect_count: u32,
) -> (RegionSet<f64>, Vec<Vec<u32>>, Vec<String>) {
    let n = basic.region_count();
    let mut faults = Vec::new();

    // Greedy family coloring in (class, id) order, aspect by aspect.
    let mut domains: Vec<Vec<u32>> = Vec::new();
    for a in 0..aspect_count {
        let mut by_class: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for r in (0..n).filter(|r| region_aspect[*r as usize] == a) {
            by_class
                .entry(coin.class_of[r as usize])
                .or_default()
                .push(r);
        }
        let rounds = by_class.values().map(Vec::len).max().unwrap_or(0);
        let mut families: Vec<Vec<u32>> = Vec::new();
        for grp in by_class.values() {
            for r in grp {
                let slot = families
                    .iter()
                    .position(|f| f.iter().all(|s| coin.disjoint(*r, *s, cfg)));
                match slot {
                    Some(i) => families[i].push(*r),
                    None => families.push(vec![*r]),
                }
            }
        }
        if families.len() > rounds {
            faults.push(format!(
                "uniqueness domains: aspect {a} needed {} families where its \
                 largest coincidence class has {rounds} members — some \
                 cross-class images overlap at this depth",
                families.len()
            ));
        }
        domains.extend(families);
    }

    // Domain label of each basic region.
    let mut region_domain = vec![u32::MAX; n as usize];
    for (d, members) in domains.iter().enumerate() {
        for r in members {
            region_domain[*r as usize] = d as u32;
        }
    }

    // Claim characteristic-surface cells that separate two members of the
    // same domain (earlier domains claim first; each cell claimed once).
    let mut claimed: Vec<HashMap<CellId, u32>> =
        vec![HashMap::new(); characteristic.len()];
    for (d, members) in domains.iter().enumerate() {
        let mset: HashSet<u32> = members.iter().copied().collect();
        let a = region_aspect[members[0] as usize] as usize;
        let surface = &characteristic[a];
        for id in surface.full_leaves() {
            if claimed[a].contains_key(&id) {
                continue;
            }
            let mut touched: HashSet<u32> = HashSet::new();
            for axis in 0..3 {
                for dir in [-1, 1] {
                    if let Some(nb) = surface.neighbor_cell(id, axis, dir) {
                        let c = surface.cell_box(nb).center();
                        if let Some(lbl) = basic.label_at(c) {
                            if mset.contains(&lbl) {
                                touched.insert(lbl);
                            }
                        }
                    }
                }
            }
            if touched.len() >= 2 {
                claimed[a].insert(id, d as u32);
            }
        }
    }

    // Assemble the labeled set. The union of the basic tree with the
    // claimed surface cells may merge sibling blocks, so labels are
    // recomputed per final leaf from interior sample points.
    let mut tree = basic.tree().clone();
    for (a, surface) in characteristic.iter().enumerate() {
        let kept = surface.retain_full(&mut |id| claimed[a].contains_key(&id));
        tree = tree.union(&kept);
    }
    let domain_at = |p: [f64; 3]| -> Option<u32> {
        if let Some(r) = basic.label_at(p) {
            return Some(region_domain[r as usize]);
        }
        for (a, surface) in characteristic.iter().enumerate() {
            if let Some((id, true)) = surface.leaf_at(p) {
                if let Some(d) = claimed[a].get(&id) {
                    return Some(*d);
                }
            }
        }
        None
    };
    let mut labels: HashMap<CellId, u32> = HashMap::new();
    let mut conflicts = 0usize;
    let mut unresolved = 0usize;
    tree.visit_leaves(&mut |id, bx, full| {
        if !full {
            return;
        }
        let c = bx.center();
        let lbl = domain_at(c);
        match lbl {
            Some(d) => {
                // Octant centers are strictly interior; a merged leaf that
                // straddles domains is detected here.
                for oct in 0..8u8 {
                    if domain_at(bx.octant(oct).center()) != Some(d) {
                        conflicts += 1;
                        break;
                    }
                }
                labels.insert(id, d);
            }
            None => {
                unresolved += 1;
                labels.insert(id, 0);
            }
        }
    });
    if conflicts > 0 {
        faults.push(format!(
            "uniqueness domains: {conflicts} merged cells straddle more than one domain"
        ));
    }
    if unresolved > 0 {
        faults.push(format!(
            "uniqueness domains: {unresolved} cells had no resolvable domain"
        ));
    }
    let set = RegionSet::new(tree, labels, domains.len() as u32, SetKind::UniquenessDomain)
        .expect("domain labels cover the assembled tree");
    (set, domains, faults)
}

/// Multiplicity map: joint-space cells labeled by how many basic
/// components cover them — the cell-level estimate of the number of
/// direct-kinematics solutions.
pub fn multiplicity_map(
    joint_space: &Octree<f64>,
    components: &[Octree<f64>],
    cfg: &AnalysisConfig,
) -> RegionSet<f64> {
    let bounds = *joint_space.bounds();
    let depth = joint_space.max_depth();
    let limit = FORCE_SUBDIVIDE_DEPTH.min(depth);
    let mut memo: HashMap<[u64; 3], u32> = HashMap::new();
    let count = |p: [f64; 3], memo: &mut HashMap<[u64; 3], u32>| -> u32 {
        let k = [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()];
        *memo.entry(k).or_insert_with(|| {
            components.iter().filter(|c| c.value_at(p)).count() as u32
        })
    };
    let tree = Octree::build(bounds, depth, [false; 3], &mut |b, d| {
        if d < limit {
            return CellClass::Mixed;
        }
        if d == depth {
            // At the bottom the center decides, so no cell is ever forced
            // Full with a zero count by the conservative Mixed closure.
            return if count(b.center(), &mut memo) > 0 {
                CellClass::Full
            } else {
                CellClass::Empty
            };
        }
        let lattice = super::sets::cell_lattice(b, cfg.surface_lattice);
        let first = count(lattice[0], &mut memo);
        let mut uniform = true;
        for p in &lattice[1..] {
            if count(*p, &mut memo) != first {
                uniform = false;
                break;
            }
        }
        match (uniform, first) {
            (false, _) => CellClass::Mixed,
            (true, 0) => CellClass::Empty,
            (true, _) => CellClass::Full,
        }
    });
    let mut labels: HashMap<CellId, u32> = HashMap::new();
    let mut max_label = 0u32;
    tree.visit_leaves(&mut |id, bx, full| {
        if full {
            let c = count(bx.center(), &mut memo);
            max_label = max_label.max(c);
            labels.insert(id, c);
        }
    });
    RegionSet::new(tree, labels, max_label + 1, SetKind::Multiplicity)
        .expect("multiplicity labels cover the tree")
}
