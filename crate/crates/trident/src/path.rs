//! Joint-space path continuation: follow one forward-kinematics solution
//! branch along a piecewise-linear joint path, certify the absence of
//! singularity crossings, and classify assembly-mode changes against a
//! built analysis bundle.

use crate::analysis::AnalysisBundle;
use crate::kinematics::{
    jacobians, residual, within_limits, JointVector, ManipulatorGeometry, Pose,
};
use crate::math::{angle_distance, wrap_angle};
use serde::Serialize;
use thiserror::Error;

/// Accepted forward-kinematics residual for every traced pose.
pub const CONTINUATION_RESIDUAL: f64 = 1e-8;
/// Corrector aims for this residual before settling for the accepted one.
const CORRECTOR_TARGET: f64 = 1e-10;
/// Residual under which the start pose counts as lying on the FK fiber.
pub const START_RESIDUAL: f64 = 1e-6;
/// Continuation aborts (no guessing) when |det A| drops below this.
pub const SINGULAR_GUARD: f64 = 1e-10;
/// Maximum per-axis pose change between consecutive accepted steps: the
/// reference max-depth workspace cell (x, y, orientation). Larger jumps
/// trigger step halving so silent branch hops cannot hide in a step.
pub const TRACE_JUMP_LIMIT: [f64; 3] = [
    0.515625,
    0.515625,
    std::f64::consts::TAU / 128.0,
];
const MAX_CORRECTOR_ITERS: usize = 8;
/// The step may halve this many times before continuation gives up.
const MAX_HALVINGS: u32 = 20;

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("a joint path needs at least two waypoints")]
    TooFewWaypoints,
    #[error("waypoint {0} violates the joint limits")]
    OutsideLimits(usize),
    #[error("the maximum parameter step must be positive")]
    BadStep,
    #[error("start pose is not on the FK fiber of the first waypoint (residual {residual:.3e})")]
    StartNotOnFiber { residual: f64 },
}

/// Piecewise-linear path through joint space; parameter `t` runs from 0
/// to the number of segments, one unit per segment.
#[derive(Clone, Debug)]
pub struct JointPath {
    waypoints: Vec<JointVector<f64>>,
    step: f64,
}

impl JointPath {
    pub fn new(
        g: &ManipulatorGeometry<f64>,
        waypoints: Vec<JointVector<f64>>,
        step: f64,
    ) -> Result<Self, PathError> {
        if waypoints.len() < 2 {
            return Err(PathError::TooFewWaypoints);
        }
        if !(step > 0.0) {
            return Err(PathError::BadStep);
        }
        for (i, q) in waypoints.iter().enumerate() {
            if !within_limits(g, q) {
                return Err(PathError::OutsideLimits(i));
            }
        }
        Ok(Self { waypoints, step })
    }

    pub fn waypoints(&self) -> &[JointVector<f64>] {
        &self.waypoints
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of linear segments; the parameter domain is `[0, segments]`.
    pub fn segments(&self) -> usize {
        self.waypoints.len() - 1
    }

    /// Joint vector at parameter `t` (clamped to the domain).
    pub fn at(&self, t: f64) -> JointVector<f64> {
        let t = t.clamp(0.0, self.segments() as f64);
        let seg = (t.floor() as usize).min(self.segments() - 1);
        let u = t - seg as f64;
        let a = &self.waypoints[seg].rho;
        let b = &self.waypoints[seg + 1].rho;
        JointVector::new(
            a[0] + (b[0] - a[0]) * u,
            a[1] + (b[1] - a[1]) * u,
            a[2] + (b[2] - a[2]) * u,
        )
    }

    /// The same path walked end to start.
    pub fn reversed(&self) -> Self {
        let mut waypoints = self.waypoints.clone();
        waypoints.reverse();
        Self {
            waypoints,
            step: self.step,
        }
    }
}

/// One accepted continuation step.
#[derive(Clone, Debug, Serialize)]
pub struct TracePoint {
    /// Path parameter.
    pub t: f64,
    /// Joint vector at `t`.
    pub rho: [f64; 3],
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub det_a: f64,
    pub residual: f64,
}

/// Outcome of a continuation run. Region fields are `None` until the
/// report is classified against an analysis bundle.
#[derive(Clone, Debug, Serialize)]
pub struct PathReport {
    pub trace: Vec<TracePoint>,
    pub min_abs_det_a: f64,
    /// Parameters where `det A` changed sign between accepted steps.
    pub sign_change_locations: Vec<f64>,
    pub sign_change_count: usize,
    pub start_region: Option<u32>,
    pub end_region: Option<u32>,
    pub mode_changed: Option<bool>,
    /// Parameter where continuation gave up, if it did.
    pub failed_at: Option<f64>,
}

impl PathReport {
    pub fn succeeded(&self) -> bool {
        self.failed_at.is_none()
    }

    /// Final traced pose.
    pub fn end_pose(&self) -> Option<Pose<f64>> {
        self.trace.last().map(|p| Pose::new(p.x, p.y, p.phi))
    }
}

enum Corrected {
    Converged(Pose<f64>, f64, f64),
    Singular,
    NoConverge,
}

/// Newton corrector at fixed joint vector, starting from `guess`.
fn correct(g: &ManipulatorGeometry<f64>, q: &JointVector<f64>, guess: &Pose<f64>) -> Corrected {
    let mut x = *guess;
    for _ in 0..MAX_CORRECTOR_ITERS {
        let f = residual(g, q, &x);
        let res = f[0].abs().max(f[1].abs()).max(f[2].abs());
        let jac = jacobians(g, &x, q);
        if jac.det_a.abs() < SINGULAR_GUARD {
            return Corrected::Singular;
        }
        if res <= CORRECTOR_TARGET {
            return Corrected::Converged(x, res, jac.det_a);
        }
        match jac.a.solve([-f[0], -f[1], -f[2]]) {
            Some(step) => {
                x = Pose::new(x.x + step[0], x.y + step[1], wrap_angle(x.phi + step[2]));
            }
            None => return Corrected::Singular,
        }
    }
    let f = residual(g, q, &x);
    let res = f[0].abs().max(f[1].abs()).max(f[2].abs());
    if res <= CONTINUATION_RESIDUAL {
        let det = jacobians(g, &x, q).det_a;
        if det.abs() < SINGULAR_GUARD {
            return Corrected::Singular;
        }
        Corrected::Converged(x, res, det)
    } else {
        Corrected::NoConverge
    }
}

fn pose_jump_ok(a: &Pose<f64>, b: &Pose<f64>) -> bool {
    (a.x - b.x).abs() <= TRACE_JUMP_LIMIT[0]
        && (a.y - b.y).abs() <= TRACE_JUMP_LIMIT[1]
        && angle_distance(a.phi, b.phi) <= TRACE_JUMP_LIMIT[2]
}

/// Continues the solution branch through `start` along the path with a
/// secant predictor (zeroth-order on the first step) and Newton corrector.
/// The secant predictor keeps the trace on the smooth solution curve when
/// the branch crosses the singular surface tangentially; a zeroth-order
/// guess would land between the continuing branch and its mirror sibling
/// and could bounce back. The step halves whenever the corrector stalls or
/// the pose moves more than one reference leaf; continuation stops
/// (recording `failed_at`) rather than guess whenever `|det A|` falls below
/// the singular guard or the step underflows.
pub fn continue_path(
    g: &ManipulatorGeometry<f64>,
    path: &JointPath,
    start: &Pose<f64>,
) -> Result<PathReport, PathError> {
    let q0 = path.at(0.0);
    let f0 = residual(g, &q0, start);
    let r0 = f0[0].abs().max(f0[1].abs()).max(f0[2].abs());
    if r0 > START_RESIDUAL {
        return Err(PathError::StartNotOnFiber { residual: r0 });
    }

    let mut trace: Vec<TracePoint> = Vec::new();
    let mut sign_change_locations = Vec::new();
    let mut failed_at = None;

    // Settle the start pose onto the fiber at full precision.
    let (mut pose, mut det_prev) = match correct(g, &q0, start) {
        Corrected::Converged(p, res, det) => {
            trace.push(TracePoint {
                t: 0.0,
                rho: q0.rho,
                x: p.x,
                y: p.y,
                phi: p.phi,
                det_a: det,
                residual: res,
            });
            (p, det)
        }
        _ => {
            return Err(PathError::StartNotOnFiber { residual: r0 });
        }
    };

    let total = path.segments() as f64;
    let mut t = 0.0f64;
    let mut dt = path.step;
    let min_dt = path.step / f64::from(1u32 << MAX_HALVINGS);
    let mut prev: Option<(f64, Pose<f64>)> = None;
    while t < total {
        let target = (t + dt).min(total);
        let q = path.at(target);
        let guess = match prev {
            Some((tp, pp)) if t > tp => {
                let r = (target - t) / (t - tp);
                Pose::new(
                    pose.x + (pose.x - pp.x) * r,
                    pose.y + (pose.y - pp.y) * r,
                    wrap_angle(pose.phi + wrap_angle(pose.phi - pp.phi) * r),
                )
            }
            _ => pose,
        };
        let outcome = correct(g, &q, &guess);
        match outcome {
            Corrected::Converged(p, res, det) => {
                if !pose_jump_ok(&pose, &p) {
                    dt *= 0.5;
                    if dt < min_dt {
                        failed_at = Some(target);
                        break;
                    }
                    continue;
                }
                if det * det_prev < 0.0 {
                    sign_change_locations.push(target);
                }
                trace.push(TracePoint {
                    t: target,
                    rho: q.rho,
                    x: p.x,
                    y: p.y,
                    phi: p.phi,
                    det_a: det,
                    residual: res,
                });
                prev = Some((t, pose));
                pose = p;
                det_prev = det;
                t = target;
                dt = (dt * 2.0).min(path.step);
            }
            Corrected::Singular => {
                failed_at = Some(target);
                break;
            }
            Corrected::NoConverge => {
                dt *= 0.5;
                if dt < min_dt {
                    failed_at = Some(target);
                    break;
                }
            }
        }
    }

    let min_abs_det_a = trace
        .iter()
        .map(|p| p.det_a.abs())
        .fold(f64::INFINITY, f64::min);
    Ok(PathReport {
        sign_change_count: sign_change_locations.len(),
        trace,
        min_abs_det_a,
        sign_change_locations,
        start_region: None,
        end_region: None,
        mode_changed: None,
        failed_at,
    })
}

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("the report has no trace to classify")]
    EmptyTrace,
    #[error("trace point {0} lies outside the analyzed workspace box")]
    OutsideBox(usize),
    #[error("the {0} pose does not resolve to a basic region")]
    UnresolvedEndpoint(&'static str),
}

/// Mode-change classification of a continuation trace against a bundle.
#[derive(Clone, Debug, Serialize)]
pub struct ModeChange {
    pub start_region: u32,
    pub end_region: u32,
    pub mode_changed: bool,
    /// Basic-region id under each trace point (`None` on separating
    /// surfaces).
    pub trace_regions: Vec<Option<u32>>,
    /// The joint-space trace entered a coincidence class of exactly two
    /// basic components — the necessary condition for a non-singular
    /// assembly-mode change.
    pub through_size_two_class: bool,
    /// A mode change between two regions of a six-fold coincidence class
    /// with no intermediate basic region in the trace: theoretically
    /// impossible, so such a report is flagged.
    pub direct_six_to_six_flagged: bool,
}

/// Labels a successful trace with basic-region ids and checks the
/// assembly-mode-change conditions. Fills the report's region fields.
pub fn classify_mode_change(
    report: &mut PathReport,
    bundle: &AnalysisBundle,
) -> Result<ModeChange, ClassifyError> {
    classify_mode_change_with(
        report,
        &bundle.config.workspace_box,
        &bundle.basic,
        &bundle.components,
        &bundle.coincidence,
    )
}

/// [`classify_mode_change`] against the individual pipeline artifacts —
/// what a reloaded analysis directory provides.
pub fn classify_mode_change_with(
    report: &mut PathReport,
    workspace_box: &crate::octree::Box3<f64>,
    basic: &crate::regions::RegionSet<f64>,
    components: &[crate::octree::Octree<f64>],
    coincidence: &crate::analysis::images::Coincidence,
) -> Result<ModeChange, ClassifyError> {
    if report.trace.is_empty() {
        return Err(ClassifyError::EmptyTrace);
    }
    let mut trace_regions = Vec::with_capacity(report.trace.len());
    for (i, p) in report.trace.iter().enumerate() {
        // Pose orientations are pre-wrapped into the box's periodic axis,
        // so plain containment is the right out-of-box test.
        let pt = [p.x, p.y, p.phi];
        if !workspace_box.contains(pt) {
            return Err(ClassifyError::OutsideBox(i));
        }
        trace_regions.push(basic.label_at(pt));
    }
    let start_region =
        trace_regions[0].ok_or(ClassifyError::UnresolvedEndpoint("start"))?;
    let end_region = trace_regions[trace_regions.len() - 1]
        .ok_or(ClassifyError::UnresolvedEndpoint("end"))?;
    let mode_changed = start_region != end_region;

    let through_size_two_class = report.trace.iter().any(|p| {
        let covering: Vec<u32> = components
            .iter()
            .enumerate()
            .filter(|(_, c)| c.value_at(p.rho))
            .map(|(i, _)| i as u32)
            .collect();
        covering.len() == 2 && {
            let cls = coincidence.class_of[covering[0] as usize];
            cls == coincidence.class_of[covering[1] as usize]
                && coincidence.classes[cls as usize].len() == 2
        }
    });

    let class_len = |r: u32| {
        let c = coincidence.class_of[r as usize] as usize;
        coincidence.classes[c].len()
    };
    let no_intermediate = trace_regions
        .iter()
        .flatten()
        .all(|r| *r == start_region || *r == end_region);
    let direct_six_to_six_flagged =
        mode_changed && class_len(start_region) == 6 && class_len(end_region) == 6 && no_intermediate;

    report.start_region = Some(start_region);
    report.end_region = Some(end_region);
    report.mode_changed = Some(mode_changed);
    Ok(ModeChange {
        start_region,
        end_region,
        mode_changed,
        trace_regions,
        through_size_two_class,
        direct_six_to_six_flagged,
    })
}

/// Searches for a closed loop that starts and ends at `q0` but swaps the
/// assembly mode of `start`, guided by the multiplicity map: candidate
/// loops visit joint cells covered by exactly one size-two coincidence
/// class. Returns the first (in deterministic order) loop whose
/// continuation succeeds with zero sign changes and a changed end region.
pub fn find_mode_change_loop(
    g: &ManipulatorGeometry<f64>,
    bundle: &AnalysisBundle,
    q0: &JointVector<f64>,
    start: &Pose<f64>,
    step: f64,
) -> Option<(JointPath, PathReport, ModeChange)> {
    // Candidate target cells: interiors of pairwise intersections of
    // size-two classes' components.
    let mut candidates: Vec<[f64; 3]> = Vec::new();
    for class in &bundle.coincidence.classes {
        if class.len() != 2 {
            continue;
        }
        let overlap = bundle.components[class[0] as usize]
            .intersect(&bundle.components[class[1] as usize]);
        let mut cells = overlap.full_leaves();
        cells.sort_unstable();
        // Interior cells only: all six neighbors present in the overlap.
        let interior: Vec<_> = cells
            .iter()
            .filter(|id| {
                (0..3).all(|axis| {
                    [-1i32, 1].iter().all(|dir| {
                        overlap
                            .neighbor_cell(**id, axis, *dir)
                            .map(|nb| {
                                let c = overlap.cell_box(nb).center();
                                overlap.value_at(c)
                            })
                            .unwrap_or(false)
                    })
                })
            })
            .copied()
            .collect();
        let pool = if interior.is_empty() { cells } else { interior };
        // A handful of well-spread candidates per class keeps the search
        // cheap and deterministic.
        let stride = (pool.len() / 12).max(1);
        for id in pool.iter().step_by(stride) {
            candidates.push(overlap.cell_box(*id).center());
        }
    }

    for c in candidates {
        let target = JointVector::new(c[0], c[1], c[2]);
        let Ok(path) = JointPath::new(g, vec![*q0, target, *q0], step) else {
            continue;
        };
        let Ok(mut report) = continue_path(g, &path, start) else {
            continue;
        };
        if !report.succeeded() || report.sign_change_count != 0 {
            continue;
        }
        let Ok(classification) = classify_mode_change(&mut report, bundle) else {
            continue;
        };
        if classification.mode_changed
            && classification.through_size_two_class
            && report.min_abs_det_a >= 10.0 * SINGULAR_GUARD
        {
            return Some((path, report, classification));
        }
    }
    None
}
