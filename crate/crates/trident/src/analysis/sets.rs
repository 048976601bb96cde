//! Octree construction for the pose-space sets: workspace, joint space,
//! singular surface, aspects, characteristic surfaces, basic regions.

use super::{AnalysisConfig, FORCE_SUBDIVIDE_DEPTH};
use crate::kinematics::{
    assembly_exists_on, det_a_at, forward_kinematics_on, inverse_kinematics, within_limits,
    JointVector, ManipulatorGeometry, PhiGrid, Pose,
};
use crate::octree::{Box3, CellClass, CellId, Octree};
use crate::regions::{RegionSet, SetKind};
use std::collections::{HashMap, HashSet};

/// Inclusive per-axis lattice over a cell: `n` points per axis plus the
/// center when `n == 2` (corners + center, 9 samples by default).
pub(crate) fn cell_lattice(b: &Box3<f64>, n: usize) -> Vec<[f64; 3]> {
    debug_assert!(n >= 2);
    let mut pts = Vec::with_capacity(n * n * n + 1);
    let coord = |axis: usize, i: usize| {
        b.lo[axis] + (b.hi[axis] - b.lo[axis]) * (i as f64) / ((n - 1) as f64)
    };
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                pts.push([coord(0, i), coord(1, j), coord(2, k)]);
            }
        }
    }
    if n == 2 {
        pts.push(b.center());
    }
    pts
}

fn key(p: [f64; 3]) -> [u64; 3] {
    [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()]
}

fn force_limit(cfg: &AnalysisConfig) -> u8 {
    FORCE_SUBDIVIDE_DEPTH.min(cfg.max_depth)
}

/// Classifies a lattice of boolean samples: all true ⇒ Full, all false ⇒
/// Empty, otherwise Mixed.
fn classify_bools(values: impl IntoIterator<Item = bool>) -> CellClass {
    let mut any = false;
    let mut all = true;
    for v in values {
        any |= v;
        all &= v;
    }
    match (any, all) {
        (false, _) => CellClass::Empty,
        (true, true) => CellClass::Full,
        (true, false) => CellClass::Mixed,
    }
}

/// Workspace `W`: poses whose inverse kinematics lands inside the
/// actuation limits. The orientation axis is periodic.
pub fn build_workspace(g: &ManipulatorGeometry<f64>, cfg: &AnalysisConfig) -> Octree<f64> {
    let limit = force_limit(cfg);
    let inside = |p: &[f64; 3]| {
        let q = inverse_kinematics(g, &Pose::new(p[0], p[1], p[2]));
        within_limits(g, &q)
    };
    Octree::build(
        cfg.workspace_box,
        cfg.max_depth,
        [false, false, true],
        &mut |b, depth| {
            if depth < limit {
                return CellClass::Mixed;
            }
            classify_bools(cell_lattice(b, cfg.surface_lattice).iter().map(inside))
        },
    )
}

/// Joint space `Q`: joint vectors for which at least one assembly (a
/// forward-kinematics solution) exists. Samples are memoized because the
/// existence sweep is the expensive primitive.
pub fn build_joint_space(
    g: &ManipulatorGeometry<f64>,
    cfg: &AnalysisConfig,
    grid: &PhiGrid<f64>,
) -> Octree<f64> {
    let limit = force_limit(cfg);
    let mut memo: HashMap<[u64; 3], bool> = HashMap::new();
    Octree::build(
        cfg.joint_box,
        cfg.max_depth,
        [false, false, false],
        &mut |b, depth| {
            if depth < limit {
                return CellClass::Mixed;
            }
            let values: Vec<bool> = cell_lattice(b, cfg.surface_lattice)
                .into_iter()
                .map(|p| {
                    *memo.entry(key(p)).or_insert_with(|| {
                        assembly_exists_on(grid, g, &JointVector::new(p[0], p[1], p[2]))
                    })
                })
                .collect();
            classify_bools(values)
        },
    )
}

/// Singular surface `S`: cells where `det A` changes sign across the
/// sample lattice, or where the center value is small relative to the
/// cell size (so tangential zero sets are not missed). The raw surface is
/// clipped to the workspace; labeling into a region set happens after the
/// aspect pass, which may absorb sub-resolution pockets into the surface.
pub fn build_singular_surface(
    g: &ManipulatorGeometry<f64>,
    cfg: &AnalysisConfig,
    workspace: &Octree<f64>,
) -> Octree<f64> {
    let limit = force_limit(cfg);
    let det = |p: &[f64; 3]| det_a_at(g, &Pose::new(p[0], p[1], p[2]));
    let raw = Octree::build(
        cfg.workspace_box,
        cfg.max_depth,
        [false, false, true],
        &mut |b, depth| {
            if depth < limit {
                return CellClass::Mixed;
            }
            let mut pos = false;
            let mut neg = false;
            let mut zero = false;
            for p in cell_lattice(b, cfg.surface_lattice) {
                let d = det(&p);
                if d > 0.0 {
                    pos = true;
                } else if d < 0.0 {
                    neg = true;
                } else {
                    zero = true;
                }
            }
            if (pos && neg) || zero {
                // Subdividing a sign change keeps the surface one leaf
                // thick; the builder turns Mixed into Full at max depth.
                return CellClass::Mixed;
            }
            if det(&b.center()).abs() < cfg.det_threshold * b.half_diagonal() {
                CellClass::Mixed
            } else {
                CellClass::Empty
            }
        },
    );
    raw.intersect(workspace)
}

/// Aspects: connected components of `W − S`, each expected to carry one
/// sign of `det A`. Components far below the dominant scale (at most
/// 1/200th of the largest component's cell count) are sub-resolution
/// pockets pinched off by the one-leaf-thick singular band; they are
/// absorbed into the singular surface instead of being reported as
/// aspects, and the augmented surface is returned alongside. Returns the
/// labeled set, per-aspect signs, sign-uniformity faults, and the
/// augmented singular tree.
pub fn build_aspects(
    g: &ManipulatorGeometry<f64>,
    workspace: &Octree<f64>,
    singular: &Octree<f64>,
) -> (RegionSet<f64>, Vec<i8>, Vec<String>, Octree<f64>) {
    let free = workspace.difference(singular);
    let comps = free.connected_components();
    let mut counts = vec![0usize; comps.count as usize];
    for label in comps.labels.values() {
        counts[*label as usize] += 1;
    }
    let largest = counts.iter().copied().max().unwrap_or(0);
    let speck_limit = largest / 200;
    let speck_labels: HashSet<u32> = counts
        .iter()
        .enumerate()
        .filter(|(_, c)| **c <= speck_limit)
        .map(|(l, _)| l as u32)
        .collect();
    let (free, singular_aug) = if speck_labels.is_empty() {
        (free, singular.clone())
    } else {
        let speck_cells: HashSet<CellId> = comps
            .labels
            .iter()
            .filter(|(_, l)| speck_labels.contains(l))
            .map(|(id, _)| *id)
            .collect();
        let specks = free.retain_full(&mut |id| speck_cells.contains(&id));
        (free.difference(&specks), singular.union(&specks))
    };
    let aspects = RegionSet::from_components(free, SetKind::Aspect);
    let n = aspects.region_count() as usize;
    let mut signs = vec![0i8; n];
    let mut mismatches = vec![0usize; n];
    let mut totals = vec![0usize; n];
    for (id, label) in aspects.labels() {
        let c = aspects.tree().cell_box(*id).center();
        let d = det_a_at(g, &Pose::new(c[0], c[1], c[2]));
        let s: i8 = if d > 0.0 {
            1
        } else if d < 0.0 {
            -1
        } else {
            0
        };
        let slot = &mut signs[*label as usize];
        totals[*label as usize] += 1;
        if s == 0 {
            mismatches[*label as usize] += 1;
        } else if *slot == 0 {
            *slot = s;
        } else if *slot != s {
            mismatches[*label as usize] += 1;
        }
    }
    let mut faults = Vec::new();
    for (a, &m) in mismatches.iter().enumerate() {
        if m > 0 {
            faults.push(format!(
                "aspect {a}: {m} of {} cells disagree with the region determinant sign",
                totals[a]
            ));
        }
    }
    (aspects, signs, faults, singular_aug)
}

/// Every max-depth cell id covered by the full leaves of a tree.
pub(crate) fn max_depth_cells(tree: &Octree<f64>) -> Vec<CellId> {
    let depth = tree.max_depth();
    let mut cells = Vec::new();
    for leaf in tree.full_leaves() {
        let s = depth - leaf.depth();
        let side = 1u32 << s;
        let base = leaf.coords().map(|c| c << s);
        for i in 0..side {
            for j in 0..side {
                for k in 0..side {
                    cells.push(CellId::from_coords(
                        depth,
                        [base[0] + i, base[1] + j, base[2] + k],
                    ));
                }
            }
        }
    }
    cells
}

/// Characteristic surface of one aspect: the preimage, inside the
/// aspect, of the joint-space walls across which the number of assemblies
/// (forward-kinematics solutions) changes.
///
/// The joint vector of a strictly interior pose lies strictly inside the
/// joint space (every leg is strictly within its limits), so it can only
/// coincide with the image of a boundary pose when that boundary pose is
/// singular — limit-boundary poses map onto the joint-space boundary
/// instead. The interior part of the preimage-of-boundary-image surface is
/// therefore exactly the preimage of the fold walls, across which two
/// assemblies merge and the fiber count drops. The surface is computed as
/// an interface skin: every max-depth cell of the aspect is labeled with
/// the fiber count at its center's joint vector, and cells with a face
/// neighbor (inside the aspect) of a different count are marked, on both
/// sides of each such face. A connected path of unmarked aspect cells
/// therefore carries a constant measured count, which makes the walls
/// watertight by construction: no flood fill can cross between count
/// zones, at any resolution, regardless of how the fibers stretch.
pub fn build_characteristic_surface(
    g: &ManipulatorGeometry<f64>,
    aspect: &Octree<f64>,
    grid: &PhiGrid<f64>,
) -> Octree<f64> {
    let depth = aspect.max_depth();
    let bounds = *aspect.bounds();
    let cells = max_depth_cells(aspect);
    // Fiber count of each cell, measured at the center.
    let mut count: HashMap<CellId, usize> = HashMap::with_capacity(cells.len());
    for id in &cells {
        let c = aspect.cell_box(*id).center();
        let q = inverse_kinematics(g, &Pose::new(c[0], c[1], c[2]));
        count.insert(*id, forward_kinematics_on(grid, g, &q).len());
    }
    // Interface skin: a differing face neighbor marks both cells.
    let mut marked: HashSet<CellId> = HashSet::new();
    for id in &cells {
        let c0 = count[id];
        for axis in 0..3 {
            for dir in [-1, 1] {
                if let Some(nb) = aspect.neighbor_cell(*id, axis, dir) {
                    if count.get(&nb).is_some_and(|cn| *cn != c0) {
                        marked.insert(*id);
                    }
                }
            }
        }
    }
    let cells: Vec<CellId> = marked.into_iter().collect();
    Octree::from_max_depth_cells(bounds, depth, aspect.periodic(), cells)
}

/// Basic regions: per aspect, connected components of the aspect minus its
/// characteristic surface, pooled globally and ordered by smallest cell.
/// Returns the labeled set and each region's aspect.
pub fn build_basic_regions(
    aspects: &RegionSet<f64>,
    characteristic: &[Octree<f64>],
) -> (RegionSet<f64>, Vec<u32>, Vec<String>) {
    assert_eq!(aspects.region_count() as usize, characteristic.len());
    let mut pooled: Vec<(CellId, u32, Vec<CellId>)> = Vec::new();
    let mut faults = Vec::new();
    let mut union_tree: Option<Octree<f64>> = None;
    for a in 0..aspects.region_count() {
        let aspect_tree = aspects.region_tree(a);
        let remainder = aspect_tree.difference(&characteristic[a as usize]);
        if remainder.is_empty_set() {
            faults.push(format!(
                "aspect {a}: characteristic surface swallowed the whole aspect"
            ));
            continue;
        }
        let comps = remainder.connected_components();
        let mut cells_by_label: Vec<Vec<CellId>> = vec![Vec::new(); comps.count as usize];
        for (id, label) in &comps.labels {
            cells_by_label[*label as usize].push(*id);
        }
        for mut cells in cells_by_label {
            cells.sort_unstable();
            pooled.push((cells[0], a, cells));
        }
        union_tree = Some(match union_tree {
            Some(t) => t.union(&remainder),
            None => remainder,
        });
    }
    let tree = union_tree.expect("at least one aspect must survive");
    pooled.sort_by_key(|(first, _, _)| *first);
    let mut labels = HashMap::new();
    let mut region_aspect = Vec::with_capacity(pooled.len());
    for (r, (_, a, cells)) in pooled.iter().enumerate() {
        region_aspect.push(*a);
        for id in cells {
            labels.insert(*id, r as u32);
        }
    }
    let count = pooled.len() as u32;
    let set = RegionSet::new(tree, labels, count, SetKind::BasicRegion)
        .expect("component labels cover the pooled tree");
    (set, region_aspect, faults)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::testkit::bundle5;

    #[test]
    fn lattice_has_corners_plus_center_by_default() {
        let b = Box3::new([0.0; 3], [1.0; 3]);
        let pts = cell_lattice(&b, 2);
        assert_eq!(pts.len(), 9);
        assert!(pts.contains(&[0.0, 0.0, 0.0]));
        assert!(pts.contains(&[1.0, 1.0, 1.0]));
        assert!(pts.contains(&[0.5, 0.5, 0.5]));
        assert_eq!(cell_lattice(&b, 3).len(), 27);
    }

    #[test]
    fn workspace_contains_known_reachable_and_excludes_far_poses() {
        let b = bundle5();
        // A pose from the forward-kinematics benchmark is deep inside W.
        assert!(b.workspace.value_at([-13.42, -6.66, 0.5857]));
        // The annulus around the first anchor bounds x² + y² = ρ₁².
        assert!(!b.workspace.value_at([0.0, 0.0, 0.0]));
        assert!(!b.workspace.value_at([32.9, 32.9, 0.0]));
        let vol = b.workspace.volume();
        let total = b.config.workspace_box.volume();
        assert!(vol > 0.05 * total && vol < 0.95 * total, "vol = {vol}");
    }

    #[test]
    fn workspace_membership_matches_dense_sampling() {
        let b = bundle5();
        let g = &b.geometry;
        let mut agree = 0usize;
        let mut total = 0usize;
        let leaf = b.config.workspace_leaf();
        let n = 17;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let p = [
                        -30.0 + 60.0 * (i as f64) / ((n - 1) as f64),
                        -30.0 + 60.0 * (j as f64) / ((n - 1) as f64),
                        -3.0 + 6.0 * (k as f64) / ((n - 1) as f64),
                    ];
                    let q = inverse_kinematics(g, &Pose::new(p[0], p[1], p[2]));
                    let truth = within_limits(g, &q);
                    let tree = b.workspace.value_at(p);
                    total += 1;
                    if truth == tree {
                        agree += 1;
                    } else {
                        // Disagreements must hug the boundary: some nearby
                        // sample within one leaf must flip the truth value.
                        let mut flipped = false;
                        for dx in [-1.0, 0.0, 1.0] {
                            for dy in [-1.0, 0.0, 1.0] {
                                for dp in [-1.0, 0.0, 1.0] {
                                    let s = Pose::new(
                                        p[0] + dx * leaf[0],
                                        p[1] + dy * leaf[1],
                                        p[2] + dp * leaf[2],
                                    );
                                    if within_limits(g, &inverse_kinematics(g, &s)) != truth {
                                        flipped = true;
                                    }
                                }
                            }
                        }
                        assert!(flipped, "interior misclassification at {p:?}");
                    }
                }
            }
        }
        // At this coarse depth the conservative boundary layer is thick,
        // so only a loose global agreement bound is meaningful; the flip
        // check above is the real assertion.
        assert!(agree as f64 >= 0.85 * total as f64, "{agree}/{total}");
    }

    #[test]
    fn joint_space_contains_benchmark_and_excludes_unreachable() {
        let b = bundle5();
        assert!(b.joint_space.value_at([14.98, 15.38, 12.0]));
        // A long first leg with both others near minimum cannot close:
        // the platform would have to be far from the base and near it at
        // the same time.
        assert!(!b.joint_space.value_at([31.9, 10.1, 10.1]));
        assert!(b.joint_space.volume() > 0.0);
    }

    #[test]
    fn singular_surface_is_thin_and_contains_detected_zeros() {
        let b = bundle5();
        let g = &b.geometry;
        let s_vol = b.singular.tree().volume();
        let w_vol = b.workspace.volume();
        assert!(s_vol > 0.0);
        assert!(s_vol < 0.35 * w_vol, "surface too thick: {s_vol} vs {w_vol}");
        // Every zero of det A along a workspace segment must be covered.
        let (x, phi) = (-10.0, 0.4);
        for y in crate::kinematics::type2_singular_y(g, x, phi) {
            let p = [x, y, phi];
            if b.workspace.value_at(p) {
                assert!(
                    b.singular.tree().value_at(p),
                    "missed singular point at y = {y}"
                );
            }
        }
    }

    #[test]
    fn aspects_split_by_sign_and_cover_free_workspace() {
        let b = bundle5();
        assert!(b.aspects.region_count() >= 2, "{}", b.aspects.region_count());
        let mut seen = std::collections::HashSet::new();
        for s in &b.aspect_signs {
            assert!(*s == 1 || *s == -1, "aspect sign fault: {s}");
            seen.insert(*s);
        }
        assert_eq!(seen.len(), 2, "both determinant signs must appear");
        // Aspect trees partition W − S.
        let free = b.workspace.difference(b.singular.tree());
        let mut acc: Option<Octree<f64>> = None;
        for a in 0..b.aspects.region_count() {
            let t = b.aspects.region_tree(a);
            acc = Some(match acc {
                Some(u) => u.union(&t),
                None => t,
            });
        }
        let acc = acc.unwrap();
        assert!(acc.difference(&free).is_empty_set());
        assert!(free.difference(&acc).is_empty_set());
    }

    #[test]
    fn characteristic_surfaces_live_inside_their_aspects() {
        let b = bundle5();
        let mut by_volume: Vec<u32> = (0..b.aspects.region_count()).collect();
        by_volume.sort_by(|x, y| {
            b.aspects
                .volume_of(*y)
                .partial_cmp(&b.aspects.volume_of(*x))
                .unwrap()
        });
        for a in 0..b.aspects.region_count() {
            let t = b.aspects.region_tree(a);
            let sc = &b.characteristic[a as usize];
            assert!(
                sc.difference(&t).is_empty_set(),
                "surface of aspect {a} leaks outside the aspect"
            );
            // The surface must not swallow the aspect.
            assert!(sc.volume() < 0.8 * t.volume());
        }
        // The dominant aspects must have nonempty surfaces.
        for a in &by_volume[..2] {
            assert!(
                !b.characteristic[*a as usize].is_empty_set(),
                "aspect {a} has an empty surface"
            );
        }
    }

    #[test]
    fn basic_regions_partition_aspects_minus_surfaces() {
        let b = bundle5();
        assert!(b.basic.region_count() > b.aspects.region_count());
        assert_eq!(b.region_aspect.len(), b.basic.region_count() as usize);
        // The two dominant aspects are split into several basic regions;
        // tiny spurious aspects (a coarse-depth artifact) may stay whole.
        let mut by_volume: Vec<u32> = (0..b.aspects.region_count()).collect();
        by_volume.sort_by(|x, y| {
            b.aspects
                .volume_of(*y)
                .partial_cmp(&b.aspects.volume_of(*x))
                .unwrap()
        });
        for a in &by_volume[..2] {
            let n = b.region_aspect.iter().filter(|x| **x == *a).count();
            assert!(n >= 2, "aspect {a} produced {n} basic regions");
        }
        // The pooled tree equals the union of aspect remainders.
        for a in 0..b.aspects.region_count() {
            let remainder = b
                .aspects
                .region_tree(a)
                .difference(&b.characteristic[a as usize]);
            assert!(remainder.difference(b.basic.tree()).is_empty_set());
        }
        // Region 0 owns the globally smallest cell.
        let first_cells = b.basic.region_cells(0);
        let mut all: Vec<CellId> = b.basic.labels().keys().copied().collect();
        all.sort_unstable();
        assert_eq!(first_cells[0], all[0]);
    }

    #[test]
    fn max_depth_cells_expand_coarse_leaves() {
        let b = Box3::new([0.0; 3], [1.0; 3]);
        // Full in the low-x half: one depth-1 leaf on the full side.
        let tree = Octree::build(b, 2, [false; 3], &mut |bx: &Box3<f64>, _| {
            if bx.hi[0] <= 0.5 {
                CellClass::Full
            } else if bx.lo[0] >= 0.5 {
                CellClass::Empty
            } else {
                CellClass::Mixed
            }
        });
        let cells = max_depth_cells(&tree);
        // Half of the 4³ max-depth lattice.
        assert_eq!(cells.len(), 32);
        assert!(cells.iter().all(|id| id.depth() == 2));
        let mut uniq: Vec<_> = cells.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), cells.len());
        for id in &cells {
            assert!(tree.cell_box(*id).center()[0] < 0.5);
        }
    }

    #[test]
    fn characteristic_surface_separates_fiber_count_zones() {
        let b = bundle5();
        let g = &b.geometry;
        let grid = PhiGrid::new(b.config.phi_samples);
        for a in 0..b.aspects.region_count() {
            let tree = b.aspects.region_tree(a);
            let surface = &b.characteristic[a as usize];
            // The surface stays inside its aspect.
            assert!(surface.difference(&tree).is_empty_set());
            // Adjacent remainder cells never straddle a fiber-count change:
            // walk a straight x-line of cells and check counts only change
            // across marked cells.
            let remainder = tree.difference(surface);
            let mut prev: Option<usize> = None;
            let lo = *remainder.bounds();
            let leaf_w = (lo.hi[0] - lo.lo[0]) / 32.0;
            for i in 0..32 {
                let p = [lo.lo[0] + (i as f64 + 0.5) * leaf_w, 5.2, 0.4];
                if !remainder.value_at(p) {
                    prev = None;
                    continue;
                }
                let q = inverse_kinematics(g, &Pose::new(p[0], p[1], p[2]));
                let n = forward_kinematics_on(&grid, g, &q).len();
                if let Some(m) = prev {
                    assert_eq!(m, n, "count changed inside a region at x index {i}");
                }
                prev = Some(n);
            }
        }
    }
}
