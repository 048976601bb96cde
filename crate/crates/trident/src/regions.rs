//! Octrees whose full leaves carry dense region labels.
//!
//! A [`RegionSet`] pairs an [`Octree`] with a label per full leaf and a
//! provenance tag saying which analysis product it holds. Labels are dense
//! in `[0, region_count)` for partition-style sets; the multiplicity map
//! reuses the machinery with labels meaning solution counts, where some
//! values may be unused.

use crate::octree::{Box3, CellId, Octree, TreeIoError};
use crate::scalar::Real;
use std::collections::HashMap;
use std::io::{Read, Write};
use thiserror::Error;

/// What a labeled set represents in the analysis pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetKind {
    Aspect,
    BasicRegion,
    UniquenessDomain,
    SingularSurface,
    CharacteristicSurface,
    /// Labels are solution-multiplicity values rather than dense region
    /// identifiers.
    Multiplicity,
}

impl SetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SetKind::Aspect => "aspect",
            SetKind::BasicRegion => "basic_region",
            SetKind::UniquenessDomain => "uniqueness_domain",
            SetKind::SingularSurface => "singular_surface",
            SetKind::CharacteristicSurface => "characteristic_surface",
            SetKind::Multiplicity => "multiplicity",
        }
    }
}

#[derive(Debug, Error)]
pub enum RegionError {
    #[error("labels must cover exactly the full leaves of the tree")]
    LabelCoverage,
    #[error("label {0} out of range (region_count {1})")]
    LabelRange(u32, u32),
    #[error(transparent)]
    Io(#[from] TreeIoError),
}

const REGION_MAGIC: &[u8; 4] = b"RGN1";

/// A labeled octree: each full leaf belongs to exactly one region.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionSet<R> {
    tree: Octree<R>,
    labels: HashMap<CellId, u32>,
    region_count: u32,
    kind: SetKind,
}

impl<R: Real> RegionSet<R> {
    /// Wraps a tree with externally computed labels, validating coverage
    /// and range.
    pub fn new(
        tree: Octree<R>,
        labels: HashMap<CellId, u32>,
        region_count: u32,
        kind: SetKind,
    ) -> Result<Self, RegionError> {
        let leaves = tree.full_leaves();
        if leaves.len() != labels.len() {
            return Err(RegionError::LabelCoverage);
        }
        for id in &leaves {
            match labels.get(id) {
                None => return Err(RegionError::LabelCoverage),
                Some(l) if *l >= region_count => {
                    return Err(RegionError::LabelRange(*l, region_count))
                }
                _ => {}
            }
        }
        Ok(Self {
            tree,
            labels,
            region_count,
            kind,
        })
    }

    /// Labels the tree by its connected components (face adjacency with
    /// periodic wrap), numbered by smallest member cell.
    pub fn from_components(tree: Octree<R>, kind: SetKind) -> Self {
        let comps = tree.connected_components();
        Self {
            tree,
            labels: comps.labels,
            region_count: comps.count,
            kind,
        }
    }

    pub fn tree(&self) -> &Octree<R> {
        &self.tree
    }

    pub fn kind(&self) -> SetKind {
        self.kind
    }

    pub fn region_count(&self) -> u32 {
        self.region_count
    }

    pub fn labels(&self) -> &HashMap<CellId, u32> {
        &self.labels
    }

    pub fn label_of(&self, id: CellId) -> Option<u32> {
        self.labels.get(&id).copied()
    }

    /// Label of the region containing a point, or `None` outside the set.
    pub fn label_at(&self, p: [R; 3]) -> Option<u32> {
        match self.tree.leaf_at(p) {
            Some((id, true)) => self.label_of(id),
            _ => None,
        }
    }

    /// Cells of one region, in locational order.
    pub fn region_cells(&self, label: u32) -> Vec<CellId> {
        let mut out: Vec<CellId> = self
            .labels
            .iter()
            .filter(|(_, l)| **l == label)
            .map(|(id, _)| *id)
            .collect();
        out.sort();
        out
    }

    /// One region as a plain boolean octree.
    pub fn region_tree(&self, label: u32) -> Octree<R> {
        self.tree
            .retain_full(&mut |id| self.labels.get(&id) == Some(&label))
    }

    pub fn volume_of(&self, label: u32) -> R {
        self.region_tree(label).volume()
    }

    /// Serializes as the underlying octree stream followed by the label
    /// block: magic, `region_count` (little-endian u32), then one u32 per
    /// full leaf in preorder.
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), RegionError> {
        self.tree.write_to(w)?;
        w.write_all(REGION_MAGIC).map_err(TreeIoError::Io)?;
        w.write_all(&self.region_count.to_le_bytes())
            .map_err(TreeIoError::Io)?;
        let mut err = None;
        self.tree.visit_leaves(&mut |id, _, full| {
            if full && err.is_none() {
                let l = self.labels[&id];
                if let Err(e) = w.write_all(&l.to_le_bytes()) {
                    err = Some(TreeIoError::Io(e));
                }
            }
        });
        match err {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    }

    /// Reads a set written by [`RegionSet::write_to`]. The provenance tag
    /// is not part of the stream and is supplied by the caller.
    pub fn read_from(r: &mut impl Read, kind: SetKind) -> Result<Self, RegionError> {
        let tree = Octree::<R>::read_from(r)?;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(TreeIoError::Io)?;
        if &magic != REGION_MAGIC {
            return Err(TreeIoError::BadMagic.into());
        }
        let mut u = [0u8; 4];
        r.read_exact(&mut u).map_err(TreeIoError::Io)?;
        let region_count = u32::from_le_bytes(u);
        let leaves = tree.full_leaves();
        let mut labels = HashMap::with_capacity(leaves.len());
        for id in leaves {
            r.read_exact(&mut u).map_err(TreeIoError::Io)?;
            labels.insert(id, u32::from_le_bytes(u));
        }
        Self::new(tree, labels, region_count, kind)
    }

    /// Writes one CSV row per full leaf: the cell center coordinates under
    /// the caller's axis names, then the label.
    pub fn write_cells_csv(
        &self,
        w: &mut impl Write,
        axis_names: [&str; 3],
    ) -> std::io::Result<()> {
        writeln!(
            w,
            "{},{},{},label",
            axis_names[0], axis_names[1], axis_names[2]
        )?;
        let mut err = None;
        self.tree.visit_leaves(&mut |id, b: &Box3<R>, full| {
            if full && err.is_none() {
                let c = b.center();
                let l = self.labels[&id];
                if let Err(e) = writeln!(
                    w,
                    "{},{},{},{}",
                    c[0].to_f64_lossy(),
                    c[1].to_f64_lossy(),
                    c[2].to_f64_lossy(),
                    l
                ) {
                    err = Some(e);
                }
            }
        });
        err.map_or(Ok(()), Err)
    }
}
