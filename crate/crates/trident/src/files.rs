//! File formats: geometry descriptions, waypoint lists, run manifests,
//! and re-loading exported analysis directories.

use crate::analysis::AnalysisConfig;
use crate::kinematics::{GeometryError, JointVector, ManipulatorGeometry};
use crate::math::Point2;
use crate::octree::Octree;
use crate::regions::{RegionSet, SetKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: invalid geometry: {source}")]
    Geometry {
        path: PathBuf,
        source: GeometryError,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> FileError {
    FileError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> FileError {
    FileError::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// On-disk geometry description.
#[derive(Debug, Serialize, Deserialize)]
pub struct GeometryFile {
    /// Base anchor coordinates, first at the origin, second on the x-axis.
    pub base_points: [[f64; 2]; 3],
    /// Platform triangle edge lengths (1–2, 2–3, 3–1).
    pub platform_edges: [f64; 3],
    /// Actuated leg length limits `[min, max]`.
    pub joint_limits: [f64; 2],
}

impl GeometryFile {
    pub fn from_geometry(g: &ManipulatorGeometry<f64>) -> Self {
        let b = g.base_points();
        let (lo, hi) = g.joint_limits();
        Self {
            base_points: [[b[0].x, b[0].y], [b[1].x, b[1].y], [b[2].x, b[2].y]],
            platform_edges: *g.platform_edges(),
            joint_limits: [lo, hi],
        }
    }

    pub fn into_geometry(self) -> Result<ManipulatorGeometry<f64>, GeometryError> {
        ManipulatorGeometry::new(
            [
                Point2::new(self.base_points[0][0], self.base_points[0][1]),
                Point2::new(self.base_points[1][0], self.base_points[1][1]),
                Point2::new(self.base_points[2][0], self.base_points[2][1]),
            ],
            self.platform_edges,
            (self.joint_limits[0], self.joint_limits[1]),
        )
    }
}

/// Reads and validates a geometry JSON file.
pub fn load_geometry(path: &Path) -> Result<ManipulatorGeometry<f64>, FileError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: GeometryFile =
        serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))?;
    file.into_geometry().map_err(|source| FileError::Geometry {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a geometry description as pretty JSON.
pub fn save_geometry(path: &Path, g: &ManipulatorGeometry<f64>) -> Result<(), FileError> {
    let file = GeometryFile::from_geometry(g);
    let mut text = serde_json::to_string_pretty(&file).expect("geometry serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Parses a waypoint CSV: one `rho1,rho2,rho3` row per waypoint, with an
/// optional header row.
pub fn load_waypoints(path: &Path) -> Result<Vec<JointVector<f64>>, FileError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_err(
                path,
                format!("line {}: expected 3 comma-separated values", lineno + 1),
            ));
        }
        let mut vals = [0.0f64; 3];
        let mut numeric = true;
        for (i, f) in fields.iter().enumerate() {
            match f.parse::<f64>() {
                Ok(v) if v.is_finite() => vals[i] = v,
                _ => {
                    numeric = false;
                    break;
                }
            }
        }
        if !numeric {
            if lineno == 0 {
                continue; // header row
            }
            return Err(parse_err(path, format!("line {}: non-numeric field", lineno + 1)));
        }
        if vals.iter().any(|v| *v < 0.0) {
            return Err(parse_err(
                path,
                format!("line {}: leg lengths must be non-negative", lineno + 1),
            ));
        }
        out.push(JointVector::new(vals[0], vals[1], vals[2]));
    }
    if out.is_empty() {
        return Err(parse_err(path, "no waypoints found"));
    }
    Ok(out)
}

/// Writes waypoints in the same CSV dialect `load_waypoints` reads.
pub fn save_waypoints(path: &Path, waypoints: &[JointVector<f64>]) -> Result<(), FileError> {
    let mut text = String::from("rho1,rho2,rho3\n");
    for q in waypoints {
        text.push_str(&format!("{:.17},{:.17},{:.17}\n", q.rho[0], q.rho[1], q.rho[2]));
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// SHA-256 of a file's bytes, hex-encoded.
pub fn sha256_file(path: &Path) -> Result<String, FileError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Reproducibility record written alongside every command's outputs.
/// Deliberately contains nothing machine- or time-dependent.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// The subcommand and its semantic arguments.
    pub command: Vec<String>,
    pub geometry_path: String,
    pub geometry_sha256: String,
    /// Additional input files (waypoint CSVs and the like) with hashes.
    pub inputs: Vec<(String, String)>,
    pub output_dir: String,
    /// Full analysis configuration when the command ran the pipeline.
    pub config: Option<AnalysisConfig>,
}

impl RunManifest {
    pub fn new(
        command: Vec<String>,
        geometry_path: &Path,
        output_dir: &Path,
    ) -> Result<Self, FileError> {
        Ok(Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            geometry_path: geometry_path.display().to_string(),
            geometry_sha256: sha256_file(geometry_path)?,
            inputs: Vec::new(),
            output_dir: output_dir.display().to_string(),
            config: None,
        })
    }

    pub fn with_input(mut self, path: &Path) -> Result<Self, FileError> {
        let hash = sha256_file(path)?;
        self.inputs.push((path.display().to_string(), hash));
        Ok(self)
    }

    pub fn with_config(mut self, config: AnalysisConfig) -> Self {
        self.config = Some(config);
        self
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, FileError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join("manifest.json");
        let mut f = std::fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        serde_json::to_writer_pretty(&mut f, self).map_err(|e| parse_err(&path, e.to_string()))?;
        f.write_all(b"\n").map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self, FileError> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map_err(|e| parse_err(&path, e.to_string()))
    }
}

/// The subset of an exported analysis directory needed to classify path
/// reports: the basic regions, their joint-space components, and the
/// pairwise coincidence structure (recomputed from the components, which
/// is cheap next to rebuilding the pipeline).
pub struct StoredAnalysis {
    pub config: AnalysisConfig,
    pub basic: RegionSet<f64>,
    pub components: Vec<Octree<f64>>,
}

pub fn load_stored_analysis(dir: &Path) -> Result<StoredAnalysis, FileError> {
    let manifest = RunManifest::read(dir)?;
    let config = manifest.config.ok_or_else(|| {
        parse_err(
            &dir.join("manifest.json"),
            "manifest carries no analysis configuration",
        )
    })?;
    let basic_path = dir.join("basic_regions.rgn");
    let mut f = std::fs::File::open(&basic_path).map_err(|e| io_err(&basic_path, e))?;
    let basic = RegionSet::read_from(&mut f, SetKind::BasicRegion)
        .map_err(|e| parse_err(&basic_path, e.to_string()))?;
    let mut components = Vec::new();
    for r in 0..basic.region_count() {
        let p = dir.join(format!("component_{r:02}.oct"));
        let mut f = std::fs::File::open(&p).map_err(|e| io_err(&p, e))?;
        let tree =
            Octree::read_from(&mut f).map_err(|e| parse_err(&p, e.to_string()))?;
        components.push(tree);
    }
    Ok(StoredAnalysis {
        config,
        basic,
        components,
    })
}
