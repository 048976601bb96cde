//! Planar 3-RPR kinematic core.
//!
//! The manipulator has a fixed base triangle `A1 A2 A3` and a moving
//! platform triangle `B1 B2 B3`; leg `i` is a prismatic actuator of length
//! `rho_i` joining `A_i` to `B_i` through passive revolute joints. The
//! platform pose is `X = (x, y, phi)` where `(x, y)` places `B1` and `phi`
//! orients the edge `B1 -> B2`.
//!
//! With `A1` pinned at the origin and `A2` on the x-axis, the loop-closure
//! residuals take the squared-distance form
//!
//! ```text
//! F1 = x^2 + y^2                                                - rho1^2
//! F2 = (x + l2 cos phi - c2)^2 + (y + l2 sin phi)^2             - rho2^2
//! F3 = (x + l3 cos(phi+t) - c3)^2 + (y + l3 sin(phi+t) - d3)^2  - rho3^2
//! ```
//!
//! where `l2 = |B1 B2|`, `l3 = |B1 B3|`, `t` is the platform angle at `B1`,
//! `c2 = A2.x`, and `(c3, d3) = A3`. Inverse kinematics is closed-form;
//! forward kinematics reduces, for fixed `phi`, to a two-circle
//! intersection followed by a one-dimensional root sweep in `phi`.

use crate::math::{angle_distance, wrap_angle, Mat3, Point2};
use crate::scalar::Real;
use thiserror::Error;

/// Accepted max-norm of the squared-distance residual for a refined
/// forward-kinematics solution.
pub const FK_RESIDUAL_ACCEPT: f64 = 1e-9;
/// Residual norm at which Newton polishing stops early.
pub const FK_RESIDUAL_TARGET: f64 = 1e-12;
/// Max-norm separation below which two candidate poses are considered the
/// same solution (after angle wrap).
pub const FK_MERGE_TOLERANCE: f64 = 1e-6;
/// |det A| below which Newton correction is abandoned in favor of the
/// bisection iterate (the step would be meaningless near a singularity).
pub const NEWTON_DET_GUARD: f64 = 1e-10;
/// Target |det A| for refined singular-surface roots.
pub const SINGULAR_ROOT_TOLERANCE: f64 = 1e-8;
/// Default number of orientation samples for the forward-kinematics sweep.
pub const DEFAULT_PHI_SAMPLES: usize = 2048;

/// Geometry construction failures.
#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("base point A1 must sit at the origin and A2 on the positive x-axis")]
    BaseFrame,
    #[error("platform edges must satisfy the strict triangle inequality")]
    Triangle,
    #[error("platform edges and joint limits must be finite and positive")]
    NonPositive,
    #[error("joint limits must satisfy 0 < min < max")]
    Limits,
}

/// Fixed manipulator dimensions plus the derived platform parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ManipulatorGeometry<R> {
    base: [Point2<R>; 3],
    edges: [R; 3],
    rho_min: R,
    rho_max: R,
    // Derived platform frame (see module docs).
    l2: R,
    l3: R,
    theta: R,
    cos_theta: R,
    sin_theta: R,
    c2: R,
    c3: R,
    d3: R,
}

impl<R: Real> ManipulatorGeometry<R> {
    /// Builds a geometry from base anchor points, platform edge lengths
    /// `[|B1B2|, |B2B3|, |B3B1|]`, and shared prismatic limits.
    pub fn new(
        base: [Point2<R>; 3],
        edges: [R; 3],
        joint_limits: (R, R),
    ) -> Result<Self, GeometryError> {
        let fin = |v: R| v.is_finite();
        if !(base.iter().all(|p| fin(p.x) && fin(p.y)) && edges.iter().all(|e| fin(*e))) {
            return Err(GeometryError::NonPositive);
        }
        if edges.iter().any(|e| *e <= R::zero()) {
            return Err(GeometryError::NonPositive);
        }
        if base[0].x != R::zero() || base[0].y != R::zero() || base[1].y != R::zero() {
            return Err(GeometryError::BaseFrame);
        }
        let [e12, e23, e31] = edges;
        if e12 + e23 <= e31 || e23 + e31 <= e12 || e31 + e12 <= e23 {
            return Err(GeometryError::Triangle);
        }
        let (rho_min, rho_max) = joint_limits;
        if !(fin(rho_min) && fin(rho_max)) || rho_min <= R::zero() || rho_min >= rho_max {
            return Err(GeometryError::Limits);
        }
        let l2 = e12;
        let l3 = e31;
        let two = R::of(2.0);
        let cos_theta = (l2 * l2 + l3 * l3 - e23 * e23) / (two * l2 * l3);
        // Strict triangle inequality already guarantees |cos| < 1.
        let theta = cos_theta.acos();
        Ok(Self {
            base,
            edges,
            rho_min,
            rho_max,
            l2,
            l3,
            theta,
            cos_theta,
            sin_theta: theta.sin(),
            c2: base[1].x,
            c3: base[2].x,
            d3: base[2].y,
            })
    }

    /// The classic six-solution benchmark instance: base anchors (0,0),
    /// (15.91,0), (0,10); platform edges 17.04, 16.54, 20.84; prismatic
    /// limits [10, 32].
    pub fn example() -> Self {
        Self::new(
            [
                Point2::new(R::zero(), R::zero()),
                Point2::new(R::of(15.91), R::zero()),
                Point2::new(R::zero(), R::of(10.0)),
            ],
            [R::of(17.04), R::of(16.54), R::of(20.84)],
            (R::of(10.0), R::of(32.0)),
        )
        .expect("benchmark dimensions are valid")
    }

    pub fn base_points(&self) -> &[Point2<R>; 3] {
        &self.base
    }

    pub fn platform_edges(&self) -> &[R; 3] {
        &self.edges
    }

    pub fn joint_limits(&self) -> (R, R) {
        (self.rho_min, self.rho_max)
    }

    pub fn l2(&self) -> R {
        self.l2
    }

    pub fn l3(&self) -> R {
        self.l3
    }

    /// Platform interior angle at `B1`, in radians.
    pub fn platform_angle(&self) -> R {
        self.theta
    }

    /// Positions of the platform joints `B1, B2, B3` at a pose.
    pub fn platform_points(&self, pose: &Pose<R>) -> [Point2<R>; 3] {
        let (s, c) = pose.phi.sin_cos();
        let (st, ct) = (
            s * self.cos_theta + c * self.sin_theta,
            c * self.cos_theta - s * self.sin_theta,
        );
        let b1 = Point2::new(pose.x, pose.y);
        let b2 = Point2::new(pose.x + self.l2 * c, pose.y + self.l2 * s);
        let b3 = Point2::new(pose.x + self.l3 * ct, pose.y + self.l3 * st);
        [b1, b2, b3]
    }

    /// A conservative bound on reachable |x| and |y|: every pose with a leg
    /// within limits keeps `B1` inside this radius.
    pub fn reach_radius(&self) -> R {
        self.rho_max + R::one()
    }
}

/// Platform pose `(x, y, phi)`, `phi` normalized to `[-pi, pi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose<R> {
    pub x: R,
    pub y: R,
    pub phi: R,
}

impl<R: Real> Pose<R> {
    pub fn new(x: R, y: R, phi: R) -> Self {
        Self {
            x,
            y,
            phi: wrap_angle(phi),
        }
    }

    /// Max-norm distance with angular wrap on the third component.
    pub fn distance(&self, o: &Self) -> R {
        let dp = angle_distance(self.phi, o.phi);
        (self.x - o.x).abs().max((self.y - o.y).abs()).max(dp)
    }
}

/// Actuated leg lengths `(rho1, rho2, rho3)`, componentwise non-negative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointVector<R> {
    pub rho: [R; 3],
}

impl<R: Real> JointVector<R> {
    pub fn new(rho1: R, rho2: R, rho3: R) -> Self {
        assert!(
            rho1 >= R::zero() && rho2 >= R::zero() && rho3 >= R::zero(),
            "leg lengths must be non-negative"
        );
        Self {
            rho: [rho1, rho2, rho3],
        }
    }
}

/// Analytic Jacobians of the residual `F(q, X)`.
///
/// `a = dF/dX` (pose side), `b = dF/dq` (joint side). Under the
/// squared-distance residual convention, `b` is diagonal with entries
/// `-2 rho_i`, so `det_b = -8 rho1 rho2 rho3`.
#[derive(Clone, Copy, Debug)]
pub struct JacobianPair<R> {
    pub a: Mat3<R>,
    pub b: Mat3<R>,
    pub det_a: R,
    pub det_b: R,
}

/// Leg vectors `B_i - A_i` and the phi-derivative moments, shared by the
/// residual and Jacobian evaluations.
fn leg_frame<R: Real>(g: &ManipulatorGeometry<R>, pose: &Pose<R>) -> ([Point2<R>; 3], [R; 3]) {
    let pts = g.platform_points(pose);
    let legs = [
        pts[0].sub(g.base[0]),
        pts[1].sub(g.base[1]),
        pts[2].sub(g.base[2]),
    ];
    let (s, c) = pose.phi.sin_cos();
    let (st, ct) = (
        s * g.cos_theta + c * g.sin_theta,
        c * g.cos_theta - s * g.sin_theta,
    );
    // d(B_i)/dphi, dotted against the leg vector, times 2 later.
    let moments = [
        R::zero(),
        g.l2 * (legs[1].y * c - legs[1].x * s),
        g.l3 * (legs[2].y * ct - legs[2].x * st),
    ];
    (legs, moments)
}

/// Closed-form leg lengths for a pose. Never fails; limits are not
/// enforced here (see [`within_limits`]).
pub fn inverse_kinematics<R: Real>(g: &ManipulatorGeometry<R>, pose: &Pose<R>) -> JointVector<R> {
    let (legs, _) = leg_frame(g, pose);
    JointVector {
        rho: [legs[0].norm(), legs[1].norm(), legs[2].norm()],
    }
}

/// True iff every leg length lies inside the closed actuation interval.
pub fn within_limits<R: Real>(g: &ManipulatorGeometry<R>, q: &JointVector<R>) -> bool {
    q.rho.iter().all(|r| *r >= g.rho_min && *r <= g.rho_max)
}

/// Squared-distance residuals `F_i = |B_i - A_i|^2 - rho_i^2`.
pub fn residual<R: Real>(
    g: &ManipulatorGeometry<R>,
    q: &JointVector<R>,
    pose: &Pose<R>,
) -> [R; 3] {
    let (legs, _) = leg_frame(g, pose);
    [
        legs[0].norm_sq() - q.rho[0] * q.rho[0],
        legs[1].norm_sq() - q.rho[1] * q.rho[1],
        legs[2].norm_sq() - q.rho[2] * q.rho[2],
    ]
}

/// Analytic Jacobians of `F` at `(X, q)`. The caller is expected (but not
/// required) to pass a pair near the solution fiber `F = 0`.
pub fn jacobians<R: Real>(
    g: &ManipulatorGeometry<R>,
    pose: &Pose<R>,
    q: &JointVector<R>,
) -> JacobianPair<R> {
    let a = pose_jacobian(g, pose);
    let two = R::of(2.0);
    let mut b = Mat3::zeros();
    for i in 0..3 {
        b.m[i][i] = -two * q.rho[i];
    }
    let det_b = -R::of(8.0) * q.rho[0] * q.rho[1] * q.rho[2];
    JacobianPair {
        a,
        b,
        det_a: a.det(),
        det_b,
    }
}

/// The pose-side Jacobian `dF/dX`; a pure function of the pose.
pub fn pose_jacobian<R: Real>(g: &ManipulatorGeometry<R>, pose: &Pose<R>) -> Mat3<R> {
    let (legs, moments) = leg_frame(g, pose);
    let two = R::of(2.0);
    Mat3::new([
        [two * legs[0].x, two * legs[0].y, two * moments[0]],
        [two * legs[1].x, two * legs[1].y, two * moments[1]],
        [two * legs[2].x, two * legs[2].y, two * moments[2]],
    ])
}

/// `det(dF/dX)` at a pose. Zeroes of this determinant are the type-2
/// (parallel) singularities: the three leg lines concur or are parallel.
pub fn det_a_at<R: Real>(g: &ManipulatorGeometry<R>, pose: &Pose<R>) -> R {
    pose_jacobian(g, pose).det()
}

/// Precomputed uniform orientation grid over `[-pi, pi)` with cached
/// trigonometry, shared across forward-kinematics sweeps.
#[derive(Clone, Debug)]
pub struct PhiGrid<R> {
    phis: Vec<R>,
    sin_cos: Vec<(R, R)>,
}

impl<R: Real> PhiGrid<R> {
    /// `n` uniform samples; at least 8.
    pub fn new(n: usize) -> Self {
        assert!(n >= 8, "orientation grid needs at least 8 samples");
        let two_pi = R::PI() + R::PI();
        let step = two_pi / R::of(n as f64);
        let mut phis = Vec::with_capacity(n);
        let mut sin_cos = Vec::with_capacity(n);
        for k in 0..n {
            let phi = -R::PI() + step * R::of(k as f64);
            phis.push(phi);
            sin_cos.push(phi.sin_cos());
        }
        Self { phis, sin_cos }
    }

    pub fn len(&self) -> usize {
        self.phis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phis.is_empty()
    }
}

impl<R: Real> Default for PhiGrid<R> {
    fn default() -> Self {
        Self::new(DEFAULT_PHI_SAMPLES)
    }
}

/// Sweep sample: both circle-intersection branches at one orientation.
/// `defined` is false where the first two leg circles do not intersect.
#[derive(Clone, Copy)]
struct SweepEval<R> {
    defined: bool,
    // Third-leg residual and intersection point, per branch (+, -).
    g: [R; 2],
    pt: [(R, R); 2],
}

impl<R: Real> SweepEval<R> {
    fn undefined() -> Self {
        Self {
            defined: false,
            g: [R::zero(); 2],
            pt: [(R::zero(), R::zero()); 2],
        }
    }
}

/// Evaluates both forward-kinematics branches at one orientation.
///
/// Circle 1 is centered at the origin with radius `rho1`; equation (2)
/// rewrites as a circle centered at `(c2 - l2 cos phi, -l2 sin phi)` with
/// radius `rho2`. Each intersection point, substituted into the third leg
/// equation, yields the branch residual.
fn sweep_eval<R: Real>(
    g: &ManipulatorGeometry<R>,
    q: &JointVector<R>,
    sin_phi: R,
    cos_phi: R,
) -> SweepEval<R> {
    let ox = g.c2 - g.l2 * cos_phi;
    let oy = -(g.l2 * sin_phi);
    let d2 = ox * ox + oy * oy;
    if d2 <= R::of(1e-24) {
        return SweepEval::undefined();
    }
    let d = d2.sqrt();
    let r1 = q.rho[0];
    let r2 = q.rho[1];
    let a = (d2 + r1 * r1 - r2 * r2) / (R::of(2.0) * d);
    let h2 = r1 * r1 - a * a;
    if h2 < R::zero() {
        return SweepEval::undefined();
    }
    let h = h2.sqrt();
    let (ux, uy) = (ox / d, oy / d);
    let (px, py) = (a * ux, a * uy);
    let (hx, hy) = (-(h * uy), h * ux);
    // Third platform joint offset relative to B1.
    let st = sin_phi * g.cos_theta + cos_phi * g.sin_theta;
    let ct = cos_phi * g.cos_theta - sin_phi * g.sin_theta;
    let bx = g.l3 * ct - g.c3;
    let by = g.l3 * st - g.d3;
    let r3sq = q.rho[2] * q.rho[2];
    let mut out = SweepEval {
        defined: true,
        g: [R::zero(); 2],
        pt: [(R::zero(), R::zero()); 2],
    };
    for (slot, sign) in [(0usize, R::one()), (1usize, -R::one())] {
        let x = px + sign * hx;
        let y = py + sign * hy;
        let gx = x + bx;
        let gy = y + by;
        out.g[slot] = gx * gx + gy * gy - r3sq;
        out.pt[slot] = (x, y);
    }
    out
}

fn sweep_eval_at<R: Real>(g: &ManipulatorGeometry<R>, q: &JointVector<R>, phi: R) -> SweepEval<R> {
    let (s, c) = phi.sin_cos();
    sweep_eval(g, q, s, c)
}

/// Finds the edge of the branch-existence interval between a defined
/// orientation `lo` and an undefined `hi` (or vice versa), returning the
/// last defined orientation found.
fn bisect_existence<R: Real>(
    g: &ManipulatorGeometry<R>,
    q: &JointVector<R>,
    defined_side: R,
    undefined_side: R,
) -> R {
    let mut def = defined_side;
    let mut undef = undefined_side;
    for _ in 0..64 {
        let mid = (def + undef) * R::of(0.5);
        if sweep_eval_at(g, q, mid).defined {
            def = mid;
        } else {
            undef = mid;
        }
    }
    def
}

/// Bisects one branch residual to a root inside `[lo, hi]`, where the
/// residual has opposite signs at the ends. Returns the best iterate.
fn bisect_branch<R: Real>(
    g: &ManipulatorGeometry<R>,
    q: &JointVector<R>,
    branch: usize,
    mut lo: R,
    mut hi: R,
    mut g_lo: R,
) -> (R, (R, R), R) {
    let mut best_phi = lo;
    let mut best_g = g_lo.abs();
    let mut best_pt = sweep_eval_at(g, q, lo).pt[branch];
    for _ in 0..96 {
        let mid = (lo + hi) * R::of(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        let e = sweep_eval_at(g, q, mid);
        if !e.defined {
            // Rounding pushed the iterate outside the existence interval;
            // shrink toward the defined endpoint.
            hi = mid;
            continue;
        }
        let gm = e.g[branch];
        if gm.abs() < best_g {
            best_g = gm.abs();
            best_phi = mid;
            best_pt = e.pt[branch];
        }
        if gm == R::zero() {
            break;
        }
        if (g_lo < R::zero()) != (gm < R::zero()) {
            hi = mid;
        } else {
            lo = mid;
            g_lo = gm;
        }
    }
    (best_phi, best_pt, best_g)
}

/// Newton-polishes a candidate on the full residual system, falling back
/// to the unpolished iterate near singular configurations.
fn polish<R: Real>(
    g: &ManipulatorGeometry<R>,
    q: &JointVector<R>,
    mut pose: Pose<R>,
) -> (Pose<R>, R) {
    let target = R::of(FK_RESIDUAL_TARGET);
    let guard = R::of(NEWTON_DET_GUARD);
    let mut f = residual(g, q, &pose);
    let mut norm = f[0].abs().max(f[1].abs()).max(f[2].abs());
    for _ in 0..40 {
        if norm <= target {
            break;
        }
        let a = pose_jacobian(g, &pose);
        if a.det().abs() < guard {
            break;
        }
        let Some(step) = a.solve([-f[0], -f[1], -f[2]]) else {
            break;
        };
        let mag = step[0].abs().max(step[1].abs()).max(step[2].abs());
        let scale = if mag > R::one() { R::one() / mag } else { R::one() };
        let next = Pose::new(
            pose.x + step[0] * scale,
            pose.y + step[1] * scale,
            pose.phi + step[2] * scale,
        );
        let f_next = residual(g, q, &next);
        let n_next = f_next[0].abs().max(f_next[1].abs()).max(f_next[2].abs());
        if !n_next.is_finite() {
            break;
        }
        pose = next;
        f = f_next;
        if n_next >= norm && norm < R::of(FK_RESIDUAL_ACCEPT) {
            norm = n_next;
            break;
        }
        norm = n_next;
    }
    (pose, norm)
}

/// All real forward-kinematics solutions for `q`, using a caller-supplied
/// orientation grid. Solutions are refined to residual max-norm
/// [`FK_RESIDUAL_ACCEPT`], deduplicated at [`FK_MERGE_TOLERANCE`], and
/// sorted lexicographically by `(x, y, phi)`.
pub fn forward_kinematics_on<R: Real>(
    grid: &PhiGrid<R>,
    g: &ManipulatorGeometry<R>,
    q: &JointVector<R>,
) -> Vec<Pose<R>> {
    let n = grid.len();
    let mut candidates: Vec<(R, (R, R))> = Vec::new();

    let first = sweep_eval(g, q, grid.sin_cos[0].0, grid.sin_cos[0].1);
    let mut prev = first;
    let mut prev_phi = grid.phis[0];
    for k in 1..=n {
        let (cur, cur_phi) = if k == n {
            // Close the periodic sweep; phi = pi is the same sample as -pi.
            (first, R::PI())
        } else {
            (
                sweep_eval(g, q, grid.sin_cos[k].0, grid.sin_cos[k].1),
                grid.phis[k],
            )
        };
        for branch in 0..2 {
            match (prev.defined, cur.defined) {
                (true, true) => {
                    let gl = prev.g[branch];
                    let gr = cur.g[branch];
                    if gl == R::zero() {
                        candidates.push((prev_phi, prev.pt[branch]));
                    } else if (gl < R::zero()) != (gr < R::zero()) {
                        let (phi, pt, _) = bisect_branch(g, q, branch, prev_phi, cur_phi, gl);
                        candidates.push((phi, pt));
                    }
                }
                (true, false) => {
                    // The circles detach inside this interval; check for a
                    // root between the last defined sample and the edge.
                    let edge = bisect_existence(g, q, prev_phi, cur_phi);
                    let e = sweep_eval_at(g, q, edge);
                    if e.defined {
                        let gl = prev.g[branch];
                        let ge = e.g[branch];
                        if (gl < R::zero()) != (ge < R::zero()) {
                            let (phi, pt, _) = bisect_branch(g, q, branch, prev_phi, edge, gl);
                            candidates.push((phi, pt));
                        } else if ge == R::zero() {
                            candidates.push((edge, e.pt[branch]));
                        }
                    }
                }
                (false, true) => {
                    let edge = bisect_existence(g, q, cur_phi, prev_phi);
                    let e = sweep_eval_at(g, q, edge);
                    if e.defined {
                        let ge = e.g[branch];
                        let gr = cur.g[branch];
                        if (ge < R::zero()) != (gr < R::zero()) {
                            let (phi, pt, _) = bisect_branch(g, q, branch, edge, cur_phi, ge);
                            candidates.push((phi, pt));
                        } else if ge == R::zero() {
                            candidates.push((edge, e.pt[branch]));
                        }
                    }
                }
                (false, false) => {}
            }
        }
        prev = cur;
        prev_phi = cur_phi;
    }

    // Refine, filter, and deduplicate.
    let accept = R::of(FK_RESIDUAL_ACCEPT);
    let merge = R::of(FK_MERGE_TOLERANCE);
    let mut kept: Vec<(Pose<R>, R)> = Vec::new();
    for (phi, (x, y)) in candidates {
        let seed = Pose::new(x, y, phi);
        let (pose, norm) = polish(g, q, seed);
        if !(norm <= accept)
            || !pose.x.is_finite()
            || !pose.y.is_finite()
            || !pose.phi.is_finite()
        {
            continue;
        }
        if let Some(existing) = kept.iter_mut().find(|(p, _)| p.distance(&pose) <= merge) {
            if norm < existing.1 {
                *existing = (pose, norm);
            }
        } else {
            kept.push((pose, norm));
        }
    }
    let mut out: Vec<Pose<R>> = kept.into_iter().map(|(p, _)| p).collect();
    out.sort_by(|a, b| {
        (a.x, a.y, a.phi)
            .partial_cmp(&(b.x, b.y, b.phi))
            .expect("finite poses")
    });
    out
}

/// All real forward-kinematics solutions using the default orientation
/// grid ([`DEFAULT_PHI_SAMPLES`] samples).
pub fn forward_kinematics<R: Real>(
    g: &ManipulatorGeometry<R>,
    q: &JointVector<R>,
) -> Vec<Pose<R>> {
    forward_kinematics_on(&PhiGrid::default(), g, q)
}

/// Cheap existence test: true iff the sweep detects at least one solution
/// branch sign change. Exits as early as possible; used by the joint-space
/// octree classifier where full root refinement would be wasted.
pub fn assembly_exists_on<R: Real>(
    grid: &PhiGrid<R>,
    g: &ManipulatorGeometry<R>,
    q: &JointVector<R>,
) -> bool {
    let n = grid.len();
    let first = sweep_eval(g, q, grid.sin_cos[0].0, grid.sin_cos[0].1);
    let mut prev = first;
    for k in 1..=n {
        let cur = if k == n {
            first
        } else {
            sweep_eval(g, q, grid.sin_cos[k].0, grid.sin_cos[k].1)
        };
        if prev.defined && cur.defined {
            for branch in 0..2 {
                let gl = prev.g[branch];
                let gr = cur.g[branch];
                if gl == R::zero() || (gl < R::zero()) != (gr < R::zero()) {
                    return true;
                }
            }
        }
        prev = cur;
    }
    false
}

/// All `y` in `[y_lo, y_hi]` with `det A(x, y, phi) = 0`, located by
/// sign-change bracketing at pitch `step` and refined by bisection until
/// |det A| falls below [`SINGULAR_ROOT_TOLERANCE`] (or the bracket reaches
/// floating-point width). Tangential (non-sign-changing) zeros are not
/// detected, by construction.
pub fn type2_singular_y_in<R: Real>(
    g: &ManipulatorGeometry<R>,
    x: R,
    phi: R,
    y_lo: R,
    y_hi: R,
    step: R,
) -> Vec<R> {
    assert!(step > R::zero() && y_hi > y_lo);
    let det = |y: R| det_a_at(g, &Pose::new(x, y, phi));
    let mut roots = Vec::new();
    let mut y_prev = y_lo;
    let mut d_prev = det(y_prev);
    let mut y = y_lo + step;
    loop {
        let clipped = if y > y_hi { y_hi } else { y };
        let d = det(clipped);
        if d_prev == R::zero() {
            roots.push(y_prev);
        } else if (d_prev < R::zero()) != (d < R::zero()) {
            let (mut lo, mut hi, mut d_lo) = (y_prev, clipped, d_prev);
            let mut best = (lo, d_lo.abs());
            for _ in 0..110 {
                let mid = (lo + hi) * R::of(0.5);
                if mid <= lo || mid >= hi {
                    break;
                }
                let dm = det(mid);
                if dm.abs() < best.1 {
                    best = (mid, dm.abs());
                }
                if dm == R::zero() {
                    break;
                }
                if (d_lo < R::zero()) != (dm < R::zero()) {
                    hi = mid;
                } else {
                    lo = mid;
                    d_lo = dm;
                }
            }
            roots.push(best.0);
        }
        if clipped >= y_hi {
            if det(y_hi) == R::zero() && roots.last().map_or(true, |r| *r != y_hi) {
                roots.push(y_hi);
            }
            break;
        }
        y_prev = clipped;
        d_prev = d;
        y = y + step;
    }
    // A zero landing exactly on a grid sample is found both by bisection in
    // the preceding interval and by the sample test; merge such twins.
    roots.dedup_by(|b, a| (*b - *a).abs() <= R::of(1e-9));
    roots
}

/// [`type2_singular_y_in`] over the default workspace span (`|y|` up to
/// the reach radius) at a pitch comparable to the analysis octree leaf.
pub fn type2_singular_y<R: Real>(g: &ManipulatorGeometry<R>, x: R, phi: R) -> Vec<R> {
    let r = g.reach_radius();
    let step = (r + r) / R::of(256.0);
    type2_singular_y_in(g, x, phi, -r, r, step)
}
