//! The workspace/joint-space set pipeline.
//!
//! Stages, in dependency order:
//!
//! 1. workspace `W` — poses whose leg lengths are all within limits;
//! 2. joint space `Q` — joint vectors with at least one assembly;
//! 3. singular surface `S` — the zero set of `det A` inside `W`;
//! 4. aspects — connected components of `W − S` (maximal singularity-free
//!    regions), each with a uniform sign of `det A`;
//! 5. characteristic surfaces — per aspect, the preimage (inside the
//!    aspect) of the image of the aspect's boundary;
//! 6. basic regions — components of an aspect minus its characteristic
//!    surface; the direct-kinematics solution is unique on each;
//! 7. basic components — joint-space images of basic regions, classified
//!    pairwise coincident/disjoint into coincidence classes;
//! 8. uniqueness domains — per aspect, a greedy partition of the basic
//!    regions into maximal families with pairwise-disjoint images, plus
//!    their separating characteristic-surface cells;
//! 9. multiplicity map — joint-space cells labeled by how many basic
//!    components cover them (the solution-count estimate).

pub mod images;
pub mod sets;

use crate::kinematics::{ManipulatorGeometry, PhiGrid, DEFAULT_PHI_SAMPLES};
use crate::octree::{Box3, Octree};
use crate::regions::RegionSet;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

/// Subdivide unconditionally above this depth so no coarse cell is ever
/// misclassified from a handful of samples.
pub(crate) const FORCE_SUBDIVIDE_DEPTH: u8 = 4;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("max_depth must lie in 1..=12")]
    Depth,
    #[error("sample lattice must have at least 2 points per axis")]
    Lattice,
    #[error("thresholds must satisfy 0 < disjoint < coincident < 1 and det threshold > 0")]
    Thresholds,
    #[error("orientation sweep needs at least 8 samples")]
    PhiSamples,
    #[error("joint box must be positive and within (0, inf)")]
    JointBox,
}

/// Tuning knobs for the set pipeline.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Pose-space box; the third axis (orientation) is periodic.
    pub workspace_box: Box3<f64>,
    /// Joint-space box, typically the actuation limits cubed.
    pub joint_box: Box3<f64>,
    /// Octree subdivision depth for every built set.
    pub max_depth: u8,
    /// Points per axis in the per-cell classification lattice (2 gives
    /// the 8 corners + center = 9 samples).
    pub surface_lattice: usize,
    /// Center test for the singular surface: a cell is kept when
    /// |det A(center)| < this threshold times the cell half-diagonal.
    pub det_threshold: f64,
    /// Jaccard at or above which two joint-space images are coincident.
    pub coincident_jaccard: f64,
    /// Jaccard at or below which two joint-space images are disjoint.
    pub disjoint_jaccard: f64,
    /// Orientation samples for forward-kinematics sweeps.
    pub phi_samples: usize,
    /// Seed for all randomized sampling built on top of the bundle.
    pub seed: u64,
}

impl AnalysisConfig {
    /// Reference configuration: boxes derived from the geometry, full
    /// depth 7.
    pub fn for_geometry(g: &ManipulatorGeometry<f64>) -> Self {
        let r = g.reach_radius();
        let (lo, hi) = g.joint_limits();
        Self {
            workspace_box: Box3::new(
                [-r, -r, -std::f64::consts::PI],
                [r, r, std::f64::consts::PI],
            ),
            joint_box: Box3::new([lo; 3], [hi; 3]),
            max_depth: 7,
            surface_lattice: 2,
            det_threshold: 4.0e4,
            coincident_jaccard: 0.8,
            disjoint_jaccard: 0.05,
            phi_samples: DEFAULT_PHI_SAMPLES,
            seed: 0x3a7d,
        }
    }

    /// Faster configuration (depth 6) for smoke runs.
    pub fn quick(g: &ManipulatorGeometry<f64>) -> Self {
        Self::for_geometry(g).with_depth(6)
    }

    pub fn with_depth(mut self, depth: u8) -> Self {
        self.max_depth = depth;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=12).contains(&self.max_depth) {
            return Err(ConfigError::Depth);
        }
        if self.surface_lattice < 2 {
            return Err(ConfigError::Lattice);
        }
        if !(self.det_threshold > 0.0
            && self.disjoint_jaccard > 0.0
            && self.disjoint_jaccard < self.coincident_jaccard
            && self.coincident_jaccard < 1.0)
        {
            return Err(ConfigError::Thresholds);
        }
        if self.phi_samples < 8 {
            return Err(ConfigError::PhiSamples);
        }
        if self.joint_box.lo.iter().any(|v| *v <= 0.0) {
            return Err(ConfigError::JointBox);
        }
        Ok(())
    }

    /// Per-axis width of a max-depth workspace cell.
    pub fn workspace_leaf(&self) -> [f64; 3] {
        let w = self.workspace_box.widths();
        let s = f64::from(1u32 << self.max_depth);
        [w[0] / s, w[1] / s, w[2] / s]
    }

    /// Per-axis width of a max-depth joint-space cell.
    pub fn joint_leaf(&self) -> [f64; 3] {
        let w = self.joint_box.widths();
        let s = f64::from(1u32 << self.max_depth);
        [w[0] / s, w[1] / s, w[2] / s]
    }
}

/// Everything the pipeline produces, immutable once built.
pub struct AnalysisBundle {
    pub geometry: ManipulatorGeometry<f64>,
    pub config: AnalysisConfig,
    pub workspace: Octree<f64>,
    pub joint_space: Octree<f64>,
    pub singular: RegionSet<f64>,
    pub aspects: RegionSet<f64>,
    /// Sign of det A on each aspect (+1/−1; 0 marks a fault).
    pub aspect_signs: Vec<i8>,
    /// One characteristic-surface tree per aspect label.
    pub characteristic: Vec<Octree<f64>>,
    pub basic: RegionSet<f64>,
    /// Aspect label of each basic region.
    pub region_aspect: Vec<u32>,
    /// Joint-space image of each basic region.
    pub components: Vec<Octree<f64>>,
    pub coincidence: images::Coincidence,
    pub uniqueness: RegionSet<f64>,
    /// Basic-region members of each uniqueness domain.
    pub domain_members: Vec<Vec<u32>>,
    pub multiplicity: RegionSet<f64>,
    /// Human-readable resolution faults accumulated across stages.
    pub faults: Vec<String>,
    /// Wall-clock seconds per stage (diagnostic; never serialized into
    /// deterministic outputs).
    pub timings: Vec<(&'static str, f64)>,
}

impl AnalysisBundle {
    /// Runs the full pipeline. Panics only on programmer error (invalid
    /// config); numerical trouble lands in `faults`.
    pub fn build(geometry: ManipulatorGeometry<f64>, config: AnalysisConfig) -> Self {
        config.validate().expect("invalid analysis configuration");
        let grid = PhiGrid::new(config.phi_samples);
        let mut faults = Vec::new();
        let mut timings = Vec::new();
        let mut clock = Instant::now();
        let mut lap = |name: &'static str, timings: &mut Vec<(&'static str, f64)>| {
            let dt = clock.elapsed().as_secs_f64();
            timings.push((name, dt));
            clock = Instant::now();
        };

        let workspace = sets::build_workspace(&geometry, &config);
        lap("workspace", &mut timings);
        let joint_space = sets::build_joint_space(&geometry, &config, &grid);
        lap("joint_space", &mut timings);
        let singular_tree = sets::build_singular_surface(&geometry, &config, &workspace);
        lap("singular_surface", &mut timings);
        let (aspects, aspect_signs, mut aspect_faults, singular_tree) =
            sets::build_aspects(&geometry, &workspace, &singular_tree);
        faults.append(&mut aspect_faults);
        let singular =
            RegionSet::from_components(singular_tree, crate::regions::SetKind::SingularSurface);
        lap("aspects", &mut timings);

        let mut characteristic = Vec::with_capacity(aspects.region_count() as usize);
        for a in 0..aspects.region_count() {
            let tree = aspects.region_tree(a);
            characteristic.push(sets::build_characteristic_surface(&geometry, &tree, &grid));
        }
        lap("characteristic_surfaces", &mut timings);

        let (basic, region_aspect, mut basic_faults) =
            sets::build_basic_regions(&aspects, &characteristic);
        faults.append(&mut basic_faults);
        lap("basic_regions", &mut timings);

        let components = images::build_basic_components(&geometry, &config, &basic);
        lap("basic_components", &mut timings);

        let coincidence = images::coincidence_classes(&components, &config);
        faults.extend(coincidence.faults.iter().cloned());
        lap("coincidence", &mut timings);

        let (uniqueness, domain_members, mut domain_faults) = images::build_uniqueness_domains(
            &basic,
            &region_aspect,
            &characteristic,
            &coincidence,
            &config,
            aspects.region_count(),
        );
        faults.append(&mut domain_faults);
        lap("uniqueness_domains", &mut timings);

        let multiplicity = images::multiplicity_map(&joint_space, &components, &config);
        lap("multiplicity", &mut timings);

        Self {
            geometry,
            config,
            workspace,
            joint_space,
            singular,
            aspects,
            aspect_signs,
            characteristic,
            basic,
            region_aspect,
            components,
            coincidence,
            uniqueness,
            domain_members,
            multiplicity,
            faults,
            timings,
        }
    }

    /// Deterministic result digest (no timings, no machine state).
    pub fn summary(&self) -> Summary {
        let mut class_sizes: Vec<usize> =
            self.coincidence.classes.iter().map(|c| c.len()).collect();
        class_sizes.sort_unstable();
        let mut histogram: Vec<(u32, usize)> = Vec::new();
        for (_, label) in self.multiplicity.labels() {
            match histogram.iter_mut().find(|(l, _)| *l == *label) {
                Some((_, n)) => *n += 1,
                None => histogram.push((*label, 1)),
            }
        }
        histogram.sort_unstable();
        Summary {
            max_depth: self.config.max_depth,
            workspace_volume: self.workspace.volume(),
            joint_space_volume: self.joint_space.volume(),
            singular_cell_count: self.singular.tree().full_leaf_count(),
            aspect_count: self.aspects.region_count(),
            aspect_signs: self.aspect_signs.clone(),
            characteristic_cell_counts: self
                .characteristic
                .iter()
                .map(|t| t.full_leaf_count())
                .collect(),
            basic_region_count: self.basic.region_count(),
            coincidence_class_sizes: class_sizes,
            uniqueness_domain_count: self.uniqueness.region_count(),
            multiplicity_cell_histogram: histogram,
            faults: self.faults.clone(),
        }
    }

    /// Writes every set (binary + CSV) and the summary into `dir`.
    pub fn export(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let pose_axes = ["x", "y", "phi"];
        let joint_axes = ["rho1", "rho2", "rho3"];
        let write_tree = |name: &str, t: &Octree<f64>| -> std::io::Result<()> {
            let mut f = std::fs::File::create(dir.join(name))?;
            t.write_to(&mut f).map_err(io_other)?;
            Ok(())
        };
        let write_rgn = |name: &str, rs: &RegionSet<f64>, axes: [&str; 3]| -> std::io::Result<()> {
            let mut f = std::fs::File::create(dir.join(format!("{name}.rgn")))?;
            rs.write_to(&mut f).map_err(io_other)?;
            let mut c = std::fs::File::create(dir.join(format!("{name}.csv")))?;
            rs.write_cells_csv(&mut c, axes)?;
            Ok(())
        };
        write_tree("workspace.oct", &self.workspace)?;
        write_tree("joint_space.oct", &self.joint_space)?;
        write_rgn("singular", &self.singular, pose_axes)?;
        write_rgn("aspects", &self.aspects, pose_axes)?;
        for (a, t) in self.characteristic.iter().enumerate() {
            write_tree(&format!("characteristic_aspect{a}.oct"), t)?;
        }
        write_rgn("basic_regions", &self.basic, pose_axes)?;
        for (r, t) in self.components.iter().enumerate() {
            write_tree(&format!("component_{r:02}.oct"), t)?;
        }
        write_rgn("uniqueness_domains", &self.uniqueness, pose_axes)?;
        write_rgn("multiplicity", &self.multiplicity, joint_axes)?;
        let mut s = std::fs::File::create(dir.join("summary.json"))?;
        serde_json::to_writer_pretty(&mut s, &self.summary())?;
        s.write_all(b"\n")?;
        Ok(())
    }
}

fn io_other(e: impl std::error::Error + Send + Sync + 'static) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::Other, e)
}

/// Deterministic digest of one pipeline run.
#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub max_depth: u8,
    pub workspace_volume: f64,
    pub joint_space_volume: f64,
    pub singular_cell_count: usize,
    pub aspect_count: u32,
    pub aspect_signs: Vec<i8>,
    pub characteristic_cell_counts: Vec<usize>,
    pub basic_region_count: u32,
    pub coincidence_class_sizes: Vec<usize>,
    pub uniqueness_domain_count: u32,
    /// (multiplicity value, number of joint cells) pairs, ascending.
    pub multiplicity_cell_histogram: Vec<(u32, usize)>,
    pub faults: Vec<String>,
}
