//! Command-line interface: inverse/forward kinematics queries, the full
//! workspace analysis pipeline, path continuation, and the search for
//! non-singular assembly-mode-changing loops.

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use trident::analysis::{images, AnalysisBundle, AnalysisConfig};
use trident::files::{
    load_geometry, load_stored_analysis, load_waypoints, save_geometry, save_waypoints,
    RunManifest,
};
use trident::kinematics::{
    det_a_at, forward_kinematics_on, inverse_kinematics, JointVector, ManipulatorGeometry,
    PhiGrid, Pose,
};
use trident::octree::Box3;
use trident::path::{
    classify_mode_change_with, continue_path, find_mode_change_loop, JointPath,
};

#[derive(Parser)]
#[command(
    name = "trident",
    version,
    about = "Kinematics and workspace-structure analysis for planar 3-RPR parallel manipulators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GeometryArg {
    /// Geometry JSON file; the built-in benchmark geometry when omitted.
    #[arg(long, global = true)]
    geometry: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Inverse kinematics: leg lengths for a pose.
    Ik {
        #[command(flatten)]
        geometry: GeometryArg,
        /// Pose as x y phi.
        #[arg(long, num_args = 3, allow_hyphen_values = true)]
        pose: Vec<f64>,
    },
    /// Forward kinematics: all assembly poses for given leg lengths.
    Fk {
        #[command(flatten)]
        geometry: GeometryArg,
        /// Leg lengths rho1 rho2 rho3.
        #[arg(long, num_args = 3)]
        rho: Vec<f64>,
        /// Orientation sweep resolution.
        #[arg(long, default_value_t = 2048)]
        phi_samples: usize,
    },
    /// Run the full set pipeline and export every set.
    Analyze {
        #[command(flatten)]
        geometry: GeometryArg,
        /// Octree subdivision depth.
        #[arg(long, default_value_t = 7)]
        depth: u8,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Pose-space box override: x0 x1 y0 y1 (orientation stays
        /// [-pi, pi]).
        #[arg(long, num_args = 4, allow_hyphen_values = true)]
        workspace_box: Option<Vec<f64>>,
        /// Joint-space box override: lo hi (cubed).
        #[arg(long, num_args = 2)]
        joint_box: Option<Vec<f64>>,
        /// Sampling seed recorded in the manifest.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Continue a forward-kinematics solution along a waypoint CSV.
    Path {
        #[command(flatten)]
        geometry: GeometryArg,
        /// Waypoint CSV (rho1,rho2,rho3 rows).
        #[arg(long)]
        path: PathBuf,
        /// Start pose x y phi (must solve the first waypoint).
        #[arg(long, num_args = 3, allow_hyphen_values = true)]
        start: Vec<f64>,
        /// Maximum parameter step per segment.
        #[arg(long, default_value_t = 0.02)]
        step: f64,
        /// Exported analysis directory; enables mode-change
        /// classification.
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Report output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search for a non-singular assembly-mode-changing loop.
    SearchPath {
        #[command(flatten)]
        geometry: GeometryArg,
        /// Loop anchor: leg lengths rho1 rho2 rho3.
        #[arg(long, num_args = 3)]
        rho: Vec<f64>,
        /// Index (in lexicographic pose order) of the starting solution.
        #[arg(long, default_value_t = 0)]
        solution: usize,
        /// Pipeline depth for the guiding bundle.
        #[arg(long, default_value_t = 6)]
        depth: u8,
        /// Maximum parameter step for candidate loops.
        #[arg(long, default_value_t = 0.02)]
        step: f64,
        /// Output directory for the found waypoints and report.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the built-in benchmark geometry to a JSON file.
    WriteGeometry {
        /// Destination path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap's own help/version exits are successes; real usage
            // errors exit 1 per the interface contract.
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn geometry_from(arg: &GeometryArg) -> Result<(ManipulatorGeometry<f64>, String), String> {
    match &arg.geometry {
        Some(p) => {
            let g = load_geometry(p).map_err(|e| e.to_string())?;
            Ok((g, p.display().to_string()))
        }
        None => Ok((ManipulatorGeometry::example(), "<built-in>".to_string())),
    }
}

#[derive(Serialize)]
struct FkRow {
    x: f64,
    y: f64,
    phi: f64,
    residual: f64,
    det_a_sign: i8,
}

#[derive(Serialize)]
struct FkOutput {
    rho: [f64; 3],
    count: usize,
    solutions: Vec<FkRow>,
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Ik { geometry, pose } => {
            let (g, _) = geometry_from(&geometry)?;
            let p = Pose::new(pose[0], pose[1], pose[2]);
            let q = inverse_kinematics(&g, &p);
            let within = trident::kinematics::within_limits(&g, &q);
            println!(
                "{}",
                serde_json::json!({
                    "pose": {"x": p.x, "y": p.y, "phi": p.phi},
                    "rho": q.rho,
                    "within_limits": within,
                })
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Fk {
            geometry,
            rho,
            phi_samples,
        } => {
            let (g, _) = geometry_from(&geometry)?;
            if rho.iter().any(|v| *v < 0.0) {
                return Err("leg lengths must be non-negative".into());
            }
            let q = JointVector::new(rho[0], rho[1], rho[2]);
            let grid = PhiGrid::new(phi_samples.max(8));
            let sols = forward_kinematics_on(&grid, &g, &q);
            let rows: Vec<FkRow> = sols
                .iter()
                .map(|s| {
                    let f = trident::kinematics::residual(&g, &q, s);
                    let det = det_a_at(&g, s);
                    FkRow {
                        x: s.x,
                        y: s.y,
                        phi: s.phi,
                        residual: f[0].abs().max(f[1].abs()).max(f[2].abs()),
                        det_a_sign: if det > 0.0 { 1 } else { -1 },
                    }
                })
                .collect();
            let out = FkOutput {
                rho: q.rho,
                count: rows.len(),
                solutions: rows,
            };
            println!("{}", serde_json::to_string_pretty(&out).unwrap());
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze {
            geometry,
            depth,
            out,
            workspace_box,
            joint_box,
            seed,
        } => {
            let (g, gpath) = geometry_from(&geometry)?;
            let mut cfg = AnalysisConfig::for_geometry(&g).with_depth(depth);
            if let Some(w) = workspace_box {
                cfg.workspace_box = Box3::new(
                    [w[0], w[2], -std::f64::consts::PI],
                    [w[1], w[3], std::f64::consts::PI],
                );
            }
            if let Some(j) = joint_box {
                cfg.joint_box = Box3::new([j[0]; 3], [j[1]; 3]);
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate().map_err(|e| e.to_string())?;

            let manifest = manifest_for(&geometry, &gpath, &out, command_line("analyze"), &g)?
                .with_config(cfg.clone());
            let bundle = AnalysisBundle::build(g, cfg);
            bundle.export(&out).map_err(|e| e.to_string())?;
            manifest.write(&out).map_err(|e| e.to_string())?;
            for (stage, seconds) in &bundle.timings {
                eprintln!("{stage}: {seconds:.2}s");
            }
            let summary = bundle.summary();
            println!("{}", serde_json::to_string_pretty(&summary).unwrap());
            if bundle.faults.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("analysis completed with {} fault(s)", bundle.faults.len());
                Ok(ExitCode::from(2))
            }
        }
        Command::Path {
            geometry,
            path,
            start,
            step,
            bundle,
            out,
        } => {
            let (g, _) = geometry_from(&geometry)?;
            let waypoints = load_waypoints(&path).map_err(|e| e.to_string())?;
            let jp = JointPath::new(&g, waypoints, step).map_err(|e| e.to_string())?;
            let start_pose = Pose::new(start[0], start[1], start[2]);
            let mut report = continue_path(&g, &jp, &start_pose).map_err(|e| e.to_string())?;

            let classification = match &bundle {
                Some(dir) => {
                    let stored = load_stored_analysis(dir).map_err(|e| e.to_string())?;
                    let coincidence =
                        images::coincidence_classes(&stored.components, &stored.config);
                    Some(
                        classify_mode_change_with(
                            &mut report,
                            &stored.config.workspace_box,
                            &stored.basic,
                            &stored.components,
                            &coincidence,
                        )
                        .map_err(|e| e.to_string())?,
                    )
                }
                None => None,
            };

            let doc = serde_json::json!({
                "report": report,
                "classification": classification,
            });
            let text = format!("{}\n", serde_json::to_string_pretty(&doc).unwrap());
            match &out {
                Some(p) => std::fs::write(p, text).map_err(|e| e.to_string())?,
                None => print!("{text}"),
            }
            if report.failed_at.is_some() {
                eprintln!(
                    "continuation failed at parameter {:.6}",
                    report.failed_at.unwrap()
                );
                Ok(ExitCode::from(2))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
        Command::SearchPath {
            geometry,
            rho,
            solution,
            depth,
            step,
            out,
        } => {
            let (g, gpath) = geometry_from(&geometry)?;
            let q0 = JointVector::new(rho[0], rho[1], rho[2]);
            let grid = PhiGrid::default();
            let sols = forward_kinematics_on(&grid, &g, &q0);
            let start = sols
                .get(solution)
                .ok_or_else(|| format!("only {} solutions at this joint vector", sols.len()))?;
            let cfg = AnalysisConfig::for_geometry(&g).with_depth(depth);
            eprintln!("building guidance bundle at depth {depth}...");
            let bundle = AnalysisBundle::build(g.clone(), cfg);
            let found = find_mode_change_loop(&g, &bundle, &q0, start, step)
                .ok_or("no non-singular mode-changing loop found from this start")?;
            let (loop_path, report, classification) = found;
            std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
            save_waypoints(&out.join("mode_change_path.csv"), loop_path.waypoints())
                .map_err(|e| e.to_string())?;
            let doc = serde_json::json!({
                "start": {"x": start.x, "y": start.y, "phi": start.phi},
                "step": loop_path.step(),
                "report": report,
                "classification": classification,
            });
            std::fs::write(
                out.join("mode_change_report.json"),
                format!("{}\n", serde_json::to_string_pretty(&doc).unwrap()),
            )
            .map_err(|e| e.to_string())?;
            let manifest = manifest_for(&geometry, &gpath, &out, command_line("search-path"), &g)?;
            manifest.write(&out).map_err(|e| e.to_string())?;
            println!(
                "mode change found: region {} -> region {}, min |detA| = {:.3e}",
                classification.start_region, classification.end_region, report.min_abs_det_a
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::WriteGeometry { out } => {
            save_geometry(&out, &ManipulatorGeometry::example()).map_err(|e| e.to_string())?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn command_line(sub: &str) -> Vec<String> {
    let mut v = vec![sub.to_string()];
    v.extend(std::env::args().skip(2));
    v
}

fn manifest_for(
    arg: &GeometryArg,
    gpath: &str,
    out: &Path,
    command: Vec<String>,
    g: &ManipulatorGeometry<f64>,
) -> Result<RunManifest, String> {
    match &arg.geometry {
        Some(p) => RunManifest::new(command, p, out).map_err(|e| e.to_string()),
        None => {
            // The built-in geometry has no file; hash a canonical JSON
            // rendering of it instead so the manifest still pins content.
            let dir = std::env::temp_dir().join(format!("trident-geom-{}", std::process::id()));
            std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
            let p = dir.join("builtin_geometry.json");
            save_geometry(&p, g).map_err(|e| e.to_string())?;
            let mut m = RunManifest::new(command, &p, out).map_err(|e| e.to_string())?;
            m.geometry_path = gpath.to_string();
            let _ = std::fs::remove_file(&p);
            Ok(m)
        }
    }
}
