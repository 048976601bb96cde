//! Kinematics and assembly-mode analysis for planar 3-RPR parallel
//! manipulators.
//!
//! The library is organized bottom-up:
//!
//! * [`kinematics`] — manipulator geometry, inverse/forward kinematics,
//!   kinematic Jacobians and singularity predicates. Generic over the
//!   scalar type.
//! * [`octree`] — labeled axis-aligned octrees over a 3D box (with an
//!   optional periodic axis), boolean set algebra, connectivity, and a
//!   compact binary serialization.
//! * [`regions`] — octrees whose full leaves carry dense region labels.
//! * [`analysis`] — the workspace/joint-space set pipeline: singular
//!   surface, aspects, characteristic surfaces, basic regions and their
//!   joint-space images, coincidence classes, uniqueness domains, and the
//!   solution-multiplicity map.
//! * [`path`] — joint-space path continuation and assembly-mode-change
//!   classification.
//! * [`files`] — geometry/waypoint file formats and run manifests.
//!
//! The kinematic core is generic over [`scalar::Real`]; the analysis
//! pipeline and the file formats are pinned to `f64`, and the aliases
//! below name those concrete instantiations.

pub mod analysis;
pub mod files;
pub mod kinematics;
pub mod math;
pub mod octree;
pub mod path;
pub mod regions;
pub mod scalar;

/// Manipulator geometry over `f64`, as used by the analysis pipeline.
pub type Geometry64 = kinematics::ManipulatorGeometry<f64>;
/// Platform pose over `f64`.
pub type Pose64 = kinematics::Pose<f64>;
/// Joint (leg length) vector over `f64`.
pub type Joints64 = kinematics::JointVector<f64>;
/// Axis-aligned box over `f64`.
pub type Box64 = octree::Box3<f64>;
/// Octree over `f64` coordinates.
pub type Octree64 = octree::Octree<f64>;
/// Region-labeled octree over `f64` coordinates.
pub type RegionSet64 = regions::RegionSet<f64>;
