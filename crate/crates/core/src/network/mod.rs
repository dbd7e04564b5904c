//! Stokes graph / exponential network tracer: seeds primary trajectories at
//! branch points and logarithmic punctures, evolves them along
//! Im[e^{-i theta} int (lambda_2 - lambda_1)] = 0 with an adaptive
//! Runge-Kutta-Fehlberg integrator and projection, applies the intersection
//! spawning rules, and sweeps phases for saddles.

mod svg;

pub use svg::render;

use std::collections::BTreeMap;

use num::complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{
    branch_points, classify_punctures, BranchPoint, Puncture, PunctureKind, PunctureLocation,
    QdeModel,
};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error(transparent)]
    Curve(#[from] crate::curve::CurveError),
    #[error("no branch points to seed from")]
    NothingToTrace,
}

/// (ij, n) with i, j in {+, -} encoded as +1/-1; (i, i, 0) is forbidden and
/// the (++) and (--) families coincide, normalized here to (+, +, n).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryLabel {
    pub i: i8,
    pub j: i8,
    pub n: i64,
}

impl TrajectoryLabel {
    pub fn new(i: i8, j: i8, n: i64) -> Self {
        let mut l = TrajectoryLabel { i, j, n };
        if i == j {
            assert!(n != 0, "trivial label (i, i, 0) is forbidden");
            l.i = 1;
            l.j = 1;
        }
        l
    }

    pub fn is_diagonal(&self) -> bool {
        self.i == self.j
    }

    /// Multiplier of log y_+ in the defining difference: s_j - s_i.
    fn sheet_mult(&self) -> f64 {
        (self.j - self.i) as f64
    }

    fn opposite(&self, other: &TrajectoryLabel) -> bool {
        self.i == other.j && self.j == other.i && self.n == -other.n
    }
}

impl std::fmt::Display for TrajectoryLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = |v: i8| if v > 0 { '+' } else { '-' };
        write!(f, "({}{},{})", s(self.i), s(self.j), self.n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parent {
    BranchPoint { index: usize, ray: usize },
    Puncture { index: usize, family_n: i64 },
    Intersection { id: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    HitPuncture,
    HitBranchPoint,
    MassCapExceeded,
    LengthCapExceeded,
    LeftDomain,
    StiffRegion,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: usize,
    pub label: TrajectoryLabel,
    pub parent: Parent,
    pub generation: u32,
    /// Stokes-matrix shift label (l) carried by a primary line; 0 away from
    /// log cuts and for all non-primary lines.
    pub ell_label: i64,
    /// Polyline vertices w.
    pub points: Vec<[f64; 2]>,
    /// Continued log y_+ at each vertex (the log-branch record).
    pub log_branch: Vec<[f64; 2]>,
    /// Accumulated |int (lambda_2 - lambda_1)|, monotone along the line.
    pub mass: f64,
    pub stop: StopReason,
}

impl Trajectory {
    pub fn point(&self, k: usize) -> Complex64 {
        Complex64::new(self.points[k][0], self.points[k][1])
    }

    /// Approximate accumulated mass up to vertex k.
    fn mass_at(&self, k: usize) -> f64 {
        if self.points.len() <= 1 {
            return 0.0;
        }
        self.mass * k as f64 / (self.points.len() - 1) as f64
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Intersection {
    pub id: usize,
    pub position: [f64; 2],
    pub incoming: [usize; 2],
    pub incoming_labels: [TrajectoryLabel; 2],
    /// Which incoming trajectory anchored the n-lift and mass of the children.
    pub anchor: usize,
    pub spawned: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogCut {
    pub puncture: String,
    pub branch_point: usize,
    pub degree_k: i64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TraceCaps {
    pub max_generation: u32,
    pub max_abs_n: i64,
    pub max_mass: f64,
    /// Trajectories entering a puncture stop at this fraction of the
    /// coordinate scale.
    pub stop_radius: f64,
    pub max_steps: usize,
}

impl Default for TraceCaps {
    fn default() -> Self {
        TraceCaps {
            max_generation: 1,
            max_abs_n: 2,
            max_mass: 30.0,
            stop_radius: 1e-4,
            max_steps: 40_000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StokesGraph {
    pub model_name: String,
    pub theta: f64,
    pub caps: TraceCaps,
    pub branch_points: Vec<BranchPoint>,
    pub punctures: Vec<Puncture>,
    pub trajectories: Vec<Trajectory>,
    pub intersections: Vec<Intersection>,
    pub log_cuts: Vec<LogCut>,
    pub warnings: Vec<String>,
}

impl StokesGraph {
    pub fn primary_lines(&self) -> impl Iterator<Item = &Trajectory> {
        self.trajectories.iter().filter(|t| matches!(t.parent, Parent::BranchPoint { .. }))
    }
}

/// Serialize a graph to its canonical structured-text record.
pub fn dump(graph: &StokesGraph) -> String {
    serde_json::to_string_pretty(graph).expect("graph serialization cannot fail")
}

/// Read a dump back; `dump(read_dump(dump(g)))` equals `dump(g)` bit-exactly.
pub fn read_dump(text: &str) -> Result<StokesGraph, serde_json::Error> {
    serde_json::from_str(text)
}

// ---------------------------------------------------------------------------
// The integrator
// ---------------------------------------------------------------------------

/// Continued value of log y_+ along a path.
#[derive(Clone, Copy)]
struct SheetState {
    log_y: Complex64,
}

impl SheetState {
    fn advance(&mut self, model: &QdeModel, w: Complex64) -> Complex64 {
        let t = model.t0_at(w);
        let root = (t * t - Complex64::new(1.0, 0.0)).sqrt();
        let prev = self.log_y.exp();
        let (c1, c2) = (t + root, t - root);
        let y = if (c1 - prev).norm() <= (c2 - prev).norm() { c1 } else { c2 };
        let mut l = y.ln();
        let two_pi = 2.0 * std::f64::consts::PI;
        while l.im - self.log_y.im > std::f64::consts::PI {
            l -= Complex64::new(0.0, two_pi);
        }
        while l.im - self.log_y.im < -std::f64::consts::PI {
            l += Complex64::new(0.0, two_pi);
        }
        self.log_y = l;
        l
    }
}

/// The defining difference D(w) = ((s_j - s_i) log y_+ + 2 pi i n) * cover;
/// a trajectory satisfies (D / w) dw/dt = e^{i theta}.
fn lambda_diff(label: &TrajectoryLabel, log_y: Complex64, cover: f64) -> Complex64 {
    (Complex64::new(label.sheet_mult(), 0.0) * log_y
        + Complex64::new(0.0, 2.0 * std::f64::consts::PI * label.n as f64))
        * cover
}

struct TraceOutcome {
    points: Vec<Complex64>,
    logs: Vec<Complex64>,
    mass: f64,
    stop: StopReason,
}

/// Evolve one trajectory from a seed with the Cash-Karp 4(5) embedded pair on
/// the arc-length-normalized direction field, re-imposing the Im condition
/// after each accepted step. `orientation` fixes the outgoing t-direction.
#[allow(clippy::too_many_arguments)]
fn trace_one(
    model: &QdeModel,
    label: &TrajectoryLabel,
    seed_w: Complex64,
    seed_log: Complex64,
    orientation: f64,
    theta: f64,
    caps: &TraceCaps,
    scale: f64,
    start_mass: f64,
    bps: &[BranchPoint],
) -> TraceOutcome {
    let cover = model.cover_degree as f64;
    let eith = Complex64::new(theta.cos(), theta.sin());
    let mut state = SheetState { log_y: seed_log };
    let mut w = seed_w;
    let mut mass = start_mass;
    let mut im_drift = 0.0;
    let mut points = vec![w];
    let mut logs = vec![state.log_y];
    let mut h = 1e-3 * scale;
    let h_min = 1e-11 * scale;
    let h_max = 2e-2 * scale;
    let r_inner = caps.stop_radius * scale;
    let r_outer = scale / caps.stop_radius;
    let mut stop = StopReason::LengthCapExceeded;

    let field = |w: Complex64, log_y: Complex64| -> Option<Complex64> {
        let d = lambda_diff(label, log_y, cover);
        if d.norm() < 1e-13 {
            return None;
        }
        let v = eith * w / d;
        Some(Complex64::new(orientation, 0.0) * v / v.norm())
    };

    'outer: for _ in 0..caps.max_steps {
        let l0 = state.log_y;
        let Some(k1) = field(w, l0) else {
            stop = StopReason::HitBranchPoint;
            break;
        };
        macro_rules! stage {
            ($wp:expr) => {{
                let wp = $wp;
                let mut st = SheetState { log_y: l0 };
                let l = st.advance(model, wp);
                match field(wp, l) {
                    Some(v) => v,
                    None => {
                        stop = StopReason::HitBranchPoint;
                        break 'outer;
                    }
                }
            }};
        }
        let hk = Complex64::new(h, 0.0);
        let k2 = stage!(w + hk * k1 * 0.2);
        let k3 = stage!(w + hk * (k1 * 0.075 + k2 * 0.225));
        let k4 = stage!(w + hk * (k1 * 0.3 - k2 * 0.9 + k3 * 1.2));
        let k5 = stage!(
            w + hk * (k1 * (-11.0 / 54.0) + k2 * 2.5 + k3 * (-70.0 / 27.0) + k4 * (35.0 / 27.0))
        );
        let k6 = stage!(
            w + hk
                * (k1 * (1631.0 / 55296.0)
                    + k2 * (175.0 / 512.0)
                    + k3 * (575.0 / 13824.0)
                    + k4 * (44275.0 / 110592.0)
                    + k5 * (253.0 / 4096.0))
        );
        let w5 = w
            + hk * (k1 * (37.0 / 378.0)
                + k3 * (250.0 / 621.0)
                + k4 * (125.0 / 594.0)
                + k6 * (512.0 / 1771.0));
        let w4 = w
            + hk * (k1 * (2825.0 / 27648.0)
                + k3 * (18575.0 / 48384.0)
                + k4 * (13525.0 / 55296.0)
                + k5 * (277.0 / 14336.0)
                + k6 * 0.25);
        let err = (w5 - w4).norm();
        let tol = 1e-9 * scale;
        if err > tol {
            if h > h_min {
                h = (h * 0.9 * (tol / err).powf(0.25)).max(h_min);
                continue;
            }
            stop = StopReason::StiffRegion;
            break;
        }
        // accept the step, then Newton-project the endpoint so that the
        // single-segment trapezoid increment keeps the running Im at zero
        let d0 = lambda_diff(label, l0, cover);
        let mut p = w5;
        let mut l_p;
        let mut seg;
        let mut drift_candidate;
        let mut iters = 0;
        loop {
            let mut probe = SheetState { log_y: l0 };
            l_p = probe.advance(model, p);
            let d_p = lambda_diff(label, l_p, cover);
            seg = (d0 / w + d_p / p) * 0.5 * (p - w);
            drift_candidate = im_drift + (seg * eith.conj()).im;
            iters += 1;
            if drift_candidate.abs() < 1e-12 * (1.0 + scale) || iters > 4 || d_p.norm() < 1e-10 {
                break;
            }
            let corr = Complex64::new(0.0, -drift_candidate) * eith * p / d_p;
            if corr.norm() > 2.0 * h {
                break;
            }
            p += corr;
        }
        im_drift = drift_candidate;
        mass += (seg * eith.conj()).re.abs();
        state.log_y = l_p;
        w = p;
        points.push(w);
        logs.push(state.log_y);
        if err < 0.1 * tol {
            h = (h * 1.5).min(h_max);
        }
        if w.norm() < r_inner || w.norm() > r_outer {
            stop = StopReason::HitPuncture;
            break;
        }
        if mass > caps.max_mass {
            stop = StopReason::MassCapExceeded;
            break;
        }
        if points.len() > 8 && bps.iter().any(|b| (w - b.pos()).norm() < 1e-6 * scale) {
            stop = StopReason::HitBranchPoint;
            break;
        }
    }
    TraceOutcome { points, logs, mass, stop }
}

// ---------------------------------------------------------------------------
// Seeding
// ---------------------------------------------------------------------------

struct Seed {
    label: TrajectoryLabel,
    parent: Parent,
    generation: u32,
    ell_label: i64,
    w: Complex64,
    log_y: Complex64,
    orientation: f64,
    start_mass: f64,
}

/// Geometry scale: the largest branch-point radius (at least 1).
fn coordinate_scale(bps: &[BranchPoint]) -> f64 {
    bps.iter().map(|b| b.pos().norm()).fold(1.0f64, f64::max)
}

/// The three primary rays of a branch point at phase theta: the directions
/// where the local Airy integral (c0 s / w_b)(w - w_b)^{3/2} is real.
fn primary_rays(bp: &BranchPoint, theta: f64) -> [f64; 3] {
    let c0 = bp.c0_c64();
    let s = bp.sign_class as f64;
    let base = (2.0 / 3.0) * (theta - (c0 * Complex64::new(s, 0.0) / bp.pos()).arg());
    let mut rays = [0.0f64; 3];
    for (k, r) in rays.iter_mut().enumerate() {
        *r = base + 2.0 * std::f64::consts::PI * (k as f64) / 3.0;
    }
    rays
}

/// Seed on a ray at angle phi, distance delta from the branch point. The sheet
/// is fixed by the local model log y = log(s) + (c0/s) sqrt(u) with the square
/// root taken along the ray, which removes the sheet coin-flip right at the
/// degenerate point. The orientation is chosen so the field leaves along phi.
fn seed_on_ray(
    model: &QdeModel,
    bp: &BranchPoint,
    label: &TrajectoryLabel,
    phi: f64,
    delta: f64,
    theta: f64,
) -> Seed {
    let dir = Complex64::new(phi.cos(), phi.sin());
    let w = bp.pos() + Complex64::new(delta, 0.0) * dir;
    let c0 = bp.c0_c64();
    let s = bp.sign_class as f64;
    let sqrt_u =
        Complex64::new(delta.sqrt(), 0.0) * Complex64::new((phi / 2.0).cos(), (phi / 2.0).sin());
    let base = if s > 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::new(0.0, std::f64::consts::PI)
    };
    let log_y = base + c0 / Complex64::new(s, 0.0) * sqrt_u;
    let cover = model.cover_degree as f64;
    let eith = Complex64::new(theta.cos(), theta.sin());
    let d = lambda_diff(label, log_y, cover);
    let v = eith * w / d;
    let orientation = if (v.conj() * dir).re >= 0.0 { 1.0 } else { -1.0 };
    Seed {
        label: *label,
        parent: Parent::BranchPoint { index: 0, ray: 0 },
        generation: 0,
        ell_label: 0,
        w,
        log_y,
        orientation,
        start_mass: 0.0,
    }
}

// ---------------------------------------------------------------------------
// Signatures, cut labels
// ---------------------------------------------------------------------------

/// Dominance test: along the first primary ray,
/// Re[e^{-i theta} int (lambda_+ - lambda_-)] grows positive iff psi_+
/// dominates, making the lines (+-, 0) and the signature +1. The global sheet
/// is fixed by continuing y_+ from the model's anchor point.
fn assign_signatures(
    model: &QdeModel,
    bps: &mut [BranchPoint],
    theta: f64,
    scale: f64,
) -> Result<(), NetworkError> {
    let probe_dist = 0.04 * scale;
    for bp in bps.iter_mut() {
        let rays = primary_rays(bp, theta);
        let phi = rays[0];
        let dir = Complex64::new(phi.cos(), phi.sin());
        let c0 = bp.c0_c64();
        let s = bp.sign_class as f64;
        let base = if s > 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, std::f64::consts::PI)
        };
        let delta0 = 1e-7 * scale;
        let sqrt_u = Complex64::new(delta0.sqrt(), 0.0)
            * Complex64::new((phi / 2.0).cos(), (phi / 2.0).sin());
        let mut ss = SheetState { log_y: base + c0 / Complex64::new(s, 0.0) * sqrt_u };
        let mut f_acc = Complex64::new(0.0, 0.0);
        let n_steps = 400;
        let mut prev_w = bp.pos() + dir * Complex64::new(delta0, 0.0);
        let mut prev_d = Complex64::new(2.0, 0.0) * ss.log_y / prev_w;
        for k in 1..=n_steps {
            let w = bp.pos() + dir * Complex64::new(probe_dist * k as f64 / n_steps as f64, 0.0);
            let l = ss.advance(model, w);
            let d = Complex64::new(2.0, 0.0) * l / w;
            f_acc += (d + prev_d) * 0.5 * (w - prev_w);
            prev_w = w;
            prev_d = d;
        }
        let y_local = ss.log_y.exp();
        let anchored = anchored_sheet(model, prev_w, scale)?;
        let global_match =
            if (y_local - anchored).norm() <= (y_local - 1.0 / anchored).norm() { 1.0 } else { -1.0 };
        let eith = Complex64::new(theta.cos(), theta.sin());
        let g = (f_acc * eith.conj()).re * global_match;
        bp.signature = if g >= 0.0 { 1 } else { -1 };
    }
    Ok(())
}

/// Continue y_+ from the model's anchor to w along a bent path over the
/// branch-point belt.
fn anchored_sheet(
    model: &QdeModel,
    target: Complex64,
    scale: f64,
) -> Result<Complex64, NetworkError> {
    let anchor = model.anchor;
    let lift = Complex64::new(0.0, 2.5 * scale);
    let waypoints = [anchor, anchor + lift, target + lift, target];
    let mut path = Vec::new();
    for pair in waypoints.windows(2) {
        let n = 400;
        for k in 0..n {
            path.push(pair[0] + (pair[1] - pair[0]) * Complex64::new(k as f64 / n as f64, 0.0));
        }
    }
    path.push(target);
    let log = crate::curve::continue_log_sheet(model, &path, None)?;
    Ok(log.exp())
}

/// Labels carried by the three primary lines of a branch point encircled by a
/// log cut: the two rays flanking the cut carry (-l), the far one (l), with
/// l = k * signature (k the puncture degree).
fn ell_labels(bp: &BranchPoint, rays: &[f64; 3], cut_dir: Option<f64>) -> [i64; 3] {
    let Some(phi_cut) = cut_dir else { return [0; 3] };
    if bp.enc_log_shift == 0 {
        return [0; 3];
    }
    let ell = bp.enc_log_shift * bp.signature as i64;
    let mut dists: Vec<(usize, f64)> = rays
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let mut d = (r - phi_cut).rem_euclid(2.0 * std::f64::consts::PI);
            if d > std::f64::consts::PI {
                d = 2.0 * std::f64::consts::PI - d;
            }
            (k, d)
        })
        .collect();
    dists.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let far = dists[2].0;
    let mut out = [-ell; 3];
    out[far] = ell;
    out
}

// ---------------------------------------------------------------------------
// Graph construction
// ---------------------------------------------------------------------------

/// Trace the Stokes graph at phase theta with the given caps.
pub fn build_graph(
    model: &QdeModel,
    theta: f64,
    caps: &TraceCaps,
) -> Result<StokesGraph, NetworkError> {
    let mut bps = branch_points(model)?;
    if bps.is_empty() {
        return Err(NetworkError::NothingToTrace);
    }
    let punctures = classify_punctures(model);
    let scale = coordinate_scale(&bps);
    assign_signatures(model, &mut bps, theta, scale)?;

    let mut warnings = Vec::new();
    let has_log = punctures.iter().any(|p| p.kind == PunctureKind::Logarithmic);
    if has_log && theta.abs() < 1e-3 {
        warnings.push(format!(
            "DegenerateGraph: theta = {} is within tolerance of the D0 critical phase 0",
            theta
        ));
    }

    let mut log_cuts = Vec::new();
    for p in &punctures {
        if p.kind != PunctureKind::Logarithmic {
            continue;
        }
        let key = puncture_key(p);
        if let Some((idx, _)) = bps.iter().enumerate().find(|(i, b)| {
            b.enc_log_shift == p.degree_k
                && model.log_cut_pairing.get(&key).map_or(true, |&j| j == *i)
        }) {
            log_cuts.push(LogCut { puncture: key, branch_point: idx, degree_k: p.degree_k });
        }
    }

    // Primary seeds: three rays per branch point with Delta n = 0 and the
    // signature's line type.
    let mut seeds = Vec::new();
    for (bi, bp) in bps.iter().enumerate() {
        let rays = primary_rays(bp, theta);
        let cut_dir = log_cuts.iter().find(|c| c.branch_point == bi).map(|c| {
            match c.puncture.as_str() {
                "infinity" => bp.pos().arg(),
                "origin" => (-bp.pos()).arg(),
                other => {
                    let mut it = other.split(',');
                    let re: f64 = it.next().and_then(|s| s.parse().ok()).unwrap_or(0.0);
                    let im: f64 = it.next().and_then(|s| s.parse().ok()).unwrap_or(0.0);
                    (Complex64::new(re, im) - bp.pos()).arg()
                }
            }
        });
        let ells = ell_labels(bp, &rays, cut_dir);
        let label = TrajectoryLabel::new(bp.signature, -bp.signature, 0);
        for (ri, &phi) in rays.iter().enumerate() {
            let mut seed = seed_on_ray(model, bp, &label, phi, 1e-7 * scale, theta);
            seed.parent = Parent::BranchPoint { index: bi, ray: ri };
            seed.ell_label = ells[ri];
            seeds.push(seed);
        }
    }
    // Spiral families from logarithmic punctures at 0 / infinity.
    for (pi, p) in punctures.iter().enumerate() {
        if p.kind != PunctureKind::Logarithmic {
            continue;
        }
        let seed_radius = match p.location {
            PunctureLocation::Origin => {
                0.45 * bps.iter().map(|b| b.pos().norm()).fold(f64::MAX, f64::min)
            }
            PunctureLocation::Infinity => 2.2 * scale,
            PunctureLocation::Finite(_) => 0.2 * scale,
        };
        for n in 1..=caps.max_abs_n {
            for sgn in [1i64, -1] {
                let label = TrajectoryLabel::new(1, 1, sgn * n);
                let w = Complex64::new(seed_radius, 0.0);
                let log_y = {
                    let t = model.t0_at(w);
                    (t + (t * t - Complex64::new(1.0, 0.0)).sqrt()).ln()
                };
                seeds.push(Seed {
                    label,
                    parent: Parent::Puncture { index: pi, family_n: sgn * n },
                    generation: 0,
                    ell_label: 0,
                    w,
                    log_y,
                    orientation: 1.0,
                    start_mass: 0.0,
                });
            }
        }
    }

    // Evolve generation by generation; intersections spawn children in a
    // deterministic order.
    let mut trajectories: Vec<Trajectory> = Vec::new();
    let mut intersections: Vec<Intersection> = Vec::new();
    let mut frontier = seeds;
    let mut generation = 0u32;
    loop {
        let outcomes: Vec<TraceOutcome> = frontier
            .par_iter()
            .map(|s| {
                trace_one(
                    model, &s.label, s.w, s.log_y, s.orientation, theta, caps, scale,
                    s.start_mass, &bps,
                )
            })
            .collect();
        let first_new = trajectories.len();
        for (s, o) in frontier.iter().zip(outcomes) {
            trajectories.push(Trajectory {
                id: trajectories.len(),
                label: s.label,
                parent: s.parent,
                generation: s.generation,
                ell_label: s.ell_label,
                points: o.points.iter().map(|w| [w.re, w.im]).collect(),
                log_branch: o.logs.iter().map(|l| [l.re, l.im]).collect(),
                mass: o.mass,
                stop: o.stop,
            });
        }
        frontier = Vec::new();
        if generation >= caps.max_generation {
            break;
        }
        let mut found = find_intersections(&trajectories, first_new, scale);
        found.sort_by_key(|h| (h.ids, h.k_a, h.k_b));
        for hit in found {
            let (ta, tb) = (&trajectories[hit.ids.0], &trajectories[hit.ids.1]);
            let (la, lb) = (local_label(model, ta, hit.k_a), local_label(model, tb, hit.k_b));
            if la == lb || la.opposite(&lb) {
                continue;
            }
            let children = spawn_rules(&la, &lb, caps);
            if children.is_empty() {
                continue;
            }
            let inter_id = intersections.len();
            let mut spawned_ids = Vec::new();
            let anchor_is_a = la.n.abs() <= lb.n.abs();
            let (anchor_t, anchor_k) =
                if anchor_is_a { (ta, hit.k_a) } else { (tb, hit.k_b) };
            // reduce the anchor's continued log to the local n = 0 window
            let l_anchor = Complex64::new(
                anchor_t.log_branch[anchor_k][0],
                anchor_t.log_branch[anchor_k][1],
            );
            let folds = (l_anchor.im / (2.0 * std::f64::consts::PI)).round();
            let base_log = l_anchor - Complex64::new(0.0, 2.0 * std::f64::consts::PI * folds);
            let base_mass = ta.mass_at(hit.k_a) + tb.mass_at(hit.k_b);
            for label in children {
                spawned_ids.push(trajectories.len() + frontier.len());
                frontier.push(Seed {
                    label,
                    parent: Parent::Intersection { id: inter_id },
                    generation: generation + 1,
                    ell_label: 0,
                    w: hit.pos,
                    log_y: base_log,
                    orientation: 1.0,
                    start_mass: base_mass,
                });
            }
            intersections.push(Intersection {
                id: inter_id,
                position: [hit.pos.re, hit.pos.im],
                incoming: [hit.ids.0, hit.ids.1],
                incoming_labels: [la, lb],
                anchor: if anchor_is_a { hit.ids.0 } else { hit.ids.1 },
                spawned: spawned_ids,
            });
        }
        if frontier.is_empty() {
            break;
        }
        generation += 1;
    }

    Ok(StokesGraph {
        model_name: model.name.clone(),
        theta,
        caps: *caps,
        branch_points: bps,
        punctures,
        trajectories,
        intersections,
        log_cuts,
        warnings,
    })
}

fn puncture_key(p: &Puncture) -> String {
    match p.location {
        PunctureLocation::Origin => "origin".to_string(),
        PunctureLocation::Infinity => "infinity".to_string(),
        PunctureLocation::Finite(q) => format!("{},{}", q[0], q[1]),
    }
}

/// The trajectory's label in the local trivialization at vertex k: the
/// continued log y_+ may sit in another 2 pi i window (or on the reciprocal
/// sheet), which shifts the effective n (or swaps ij).
fn local_label(model: &QdeModel, t: &Trajectory, k: usize) -> TrajectoryLabel {
    if t.label.is_diagonal() {
        return t.label;
    }
    let w = t.point(k);
    let l = Complex64::new(t.log_branch[k][0], t.log_branch[k][1]);
    let y = l.exp();
    let t0 = model.t0_at(w);
    let root = (t0 * t0 - Complex64::new(1.0, 0.0)).sqrt();
    let y_loc = t0 + root;
    let same_sheet = (y - y_loc).norm() <= (y - 1.0 / y_loc).norm();
    let l_ref = if same_sheet { y_loc.ln() } else { (1.0 / y_loc).ln() };
    let m = ((l - l_ref).im / (2.0 * std::f64::consts::PI)).round() as i64;
    let mult = (t.label.j - t.label.i) as i64;
    if same_sheet {
        TrajectoryLabel { i: t.label.i, j: t.label.j, n: t.label.n + mult * m }
    } else {
        TrajectoryLabel { i: -t.label.i, j: -t.label.j, n: t.label.n + mult * m }
    }
}

/// Intersection spawning rules:
///   (+-, n) x (-+, m): (+-, n + k(m+n)), (-+, m + k(m+n)), (++, k(m+n)) for
///     k >= 1, truncated by caps;
///   (+-, n) x (+-, m): nothing;
///   (ij, n) x (++, m): (ij, k(n+m)) for k >= 1, truncated.
fn spawn_rules(a: &TrajectoryLabel, b: &TrajectoryLabel, caps: &TraceCaps) -> Vec<TrajectoryLabel> {
    let mut out = Vec::new();
    let mut push = |i: i8, j: i8, n: i64| {
        if (i != j || n != 0) && n.abs() <= caps.max_abs_n {
            out.push(TrajectoryLabel::new(i, j, n));
        }
    };
    match (a.is_diagonal(), b.is_diagonal()) {
        (false, false) => {
            if a.i == b.j && a.j == b.i {
                let total = a.n + b.n;
                if total == 0 {
                    return out;
                }
                for k in 1..=(2 * caps.max_abs_n + 2) {
                    push(a.i, a.j, a.n + k * total);
                    push(b.i, b.j, b.n + k * total);
                    push(1, 1, k * total);
                }
            }
        }
        (false, true) | (true, false) => {
            let (off, diag) = if a.is_diagonal() { (b, a) } else { (a, b) };
            let total = off.n + diag.n;
            if total == 0 {
                return out;
            }
            for k in 1..=(2 * caps.max_abs_n + 2) {
                push(off.i, off.j, k * total);
            }
        }
        (true, true) => {}
    }
    out
}

struct Hit {
    ids: (usize, usize),
    k_a: usize,
    k_b: usize,
    pos: Complex64,
}

/// Segment-segment intersection search over a uniform spatial grid; only
/// pairs involving a trajectory with id >= first_new are reported.
fn find_intersections(trajectories: &[Trajectory], first_new: usize, scale: f64) -> Vec<Hit> {
    let cell = 0.02 * scale;
    let key = |p: &[f64; 2]| -> (i64, i64) {
        ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64)
    };
    let mut grid: BTreeMap<(i64, i64), Vec<(usize, usize)>> = BTreeMap::new();
    for (ti, t) in trajectories.iter().enumerate() {
        for k in 0..t.points.len().saturating_sub(1) {
            let (a, b) = (&t.points[k], &t.points[k + 1]);
            for kk in [key(a), key(b)] {
                grid.entry(kk).or_default().push((ti, k));
            }
        }
    }
    let mut hits = Vec::new();
    let mut seen: BTreeMap<(usize, usize, i64, i64), ()> = BTreeMap::new();
    for (ti, t) in trajectories.iter().enumerate().skip(first_new) {
        for k in 0..t.points.len().saturating_sub(1) {
            let a0 = t.point(k);
            let a1 = t.point(k + 1);
            let mut candidates = Vec::new();
            for kk in [key(&t.points[k]), key(&t.points[k + 1])] {
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        if let Some(v) = grid.get(&(kk.0 + dx, kk.1 + dy)) {
                            candidates.extend_from_slice(v);
                        }
                    }
                }
            }
            candidates.sort_unstable();
            candidates.dedup();
            for (tj, kj) in candidates {
                if tj >= ti {
                    continue;
                }
                let o = &trajectories[tj];
                let b0 = o.point(kj);
                let b1 = o.point(kj + 1);
                if let Some(p) = seg_intersect(a0, a1, b0, b1) {
                    let cellk = (
                        (p.re / (4.0 * cell)).round() as i64,
                        (p.im / (4.0 * cell)).round() as i64,
                    );
                    if seen.insert((tj, ti, cellk.0, cellk.1), ()).is_some() {
                        continue;
                    }
                    // skip shared seed points (sibling rays)
                    if k < 2 && kj < 2 && (a0 - b0).norm() < 1e-5 * scale {
                        continue;
                    }
                    hits.push(Hit { ids: (tj, ti), k_a: kj, k_b: k, pos: p });
                }
            }
        }
    }
    hits
}

fn seg_intersect(a0: Complex64, a1: Complex64, b0: Complex64, b1: Complex64) -> Option<Complex64> {
    let d1 = a1 - a0;
    let d2 = b1 - b0;
    let denom = d1.re * d2.im - d1.im * d2.re;
    if denom.abs() < 1e-18 {
        return None;
    }
    let r = b0 - a0;
    let t = (r.re * d2.im - r.im * d2.re) / denom;
    let u = (r.re * d1.im - r.im * d1.re) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some(a0 + d1 * t)
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Saddle detection
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct Saddle {
    pub theta: f64,
    pub kind: SaddleKind,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum SaddleKind {
    BranchPair { from: usize, to: usize },
    /// Closed diagonal trajectory around a logarithmic puncture
    /// (the D0-type degeneration).
    D0Ring { puncture: String },
}

/// Sweep phases in (theta_min, theta_max). Two detection channels: (a) a
/// primary trajectory hitting another branch point, accepted only when it
/// arrives anti-parallel to one of the target's outgoing rays (a parallel
/// arrival is a line passing through, not a saddle); (b) D0-ring closures of
/// the diagonal spiral families at theta = 0 mod pi when logarithmic
/// punctures exist.
pub fn find_saddles(
    model: &QdeModel,
    theta_min: f64,
    theta_max: f64,
    resolution: usize,
) -> Result<Vec<Saddle>, NetworkError> {
    let mut bps = branch_points(model)?;
    let scale = coordinate_scale(&bps);
    let punctures = classify_punctures(model);
    let mut out: Vec<Saddle> = Vec::new();

    if punctures.iter().any(|p| p.kind == PunctureKind::Logarithmic) {
        let name = punctures
            .iter()
            .find(|p| p.kind == PunctureKind::Logarithmic)
            .map(puncture_key)
            .unwrap_or_default();
        let mut k = (theta_min / std::f64::consts::PI).ceil() as i64;
        while (k as f64) * std::f64::consts::PI < theta_max {
            let th = k as f64 * std::f64::consts::PI;
            if th > theta_min {
                // confirm numerically: the spiral closes into a circle here
                let dev = d0_circle_deviation(model, th, 1)?;
                if dev < 1e-6 {
                    out.push(Saddle { theta: th, kind: SaddleKind::D0Ring { puncture: name.clone() } });
                }
            }
            k += 1;
        }
    }

    let caps = TraceCaps {
        max_generation: 0,
        max_abs_n: 1,
        max_mass: 60.0,
        stop_radius: 5e-4,
        max_steps: 20_000,
    };
    assign_signatures(model, &mut bps, 0.5 * (theta_min + theta_max), scale)?;
    let n_bp = bps.len();
    for a in 0..n_bp {
        for ray in 0..3 {
            let mut grid: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
            for step in 0..=resolution {
                let th = theta_min + (theta_max - theta_min) * step as f64 / resolution as f64;
                grid.push((th, miss_distances(model, &bps, a, ray, th, &caps, scale)));
            }
            for b in 0..n_bp {
                if b == a {
                    continue;
                }
                for win in 0..resolution {
                    let m0 = grid[win].1.iter().find(|(i, _)| *i == b);
                    let m1 = grid[win + 1].1.iter().find(|(i, _)| *i == b);
                    let (Some(&(_, d0)), Some(&(_, d1))) = (m0, m1) else { continue };
                    if d0.signum() == d1.signum()
                        || d0.abs() > 0.4 * scale
                        || d1.abs() > 0.4 * scale
                    {
                        continue;
                    }
                    let (mut lo, mut hi, mut dlo) = (grid[win].0, grid[win + 1].0, d0);
                    for _ in 0..50 {
                        let mid = 0.5 * (lo + hi);
                        let dm = miss_distances(model, &bps, a, ray, mid, &caps, scale)
                            .iter()
                            .find(|(i, _)| *i == b)
                            .map(|&(_, d)| d)
                            .unwrap_or(f64::MAX);
                        if dm.signum() == dlo.signum() {
                            lo = mid;
                            dlo = dm;
                        } else {
                            hi = mid;
                        }
                        if hi - lo < 1e-6 {
                            break;
                        }
                    }
                    let th_c = 0.5 * (lo + hi);
                    if is_true_saddle(model, &bps, a, ray, b, th_c, &caps, scale)
                        && !out.iter().any(|s| (s.theta - th_c).abs() < 1e-3)
                    {
                        out.push(Saddle {
                            theta: th_c,
                            kind: SaddleKind::BranchPair { from: a, to: b },
                        });
                    }
                }
            }
        }
    }
    out.sort_by(|x, y| x.theta.partial_cmp(&y.theta).unwrap());
    Ok(out)
}

fn miss_distances(
    model: &QdeModel,
    bps: &[BranchPoint],
    a: usize,
    ray: usize,
    theta: f64,
    caps: &TraceCaps,
    scale: f64,
) -> Vec<(usize, f64)> {
    let bp = &bps[a];
    let rays = primary_rays(bp, theta);
    let label = TrajectoryLabel::new(bp.signature, -bp.signature, 0);
    let seed = seed_on_ray(model, bp, &label, rays[ray], 1e-7 * scale, theta);
    let o = trace_one(
        model, &label, seed.w, seed.log_y, seed.orientation, theta, caps, scale, 0.0, &[],
    );
    let mut out = Vec::new();
    for (bi, other) in bps.iter().enumerate() {
        if bi == a {
            continue;
        }
        let target = other.pos();
        let mut best = f64::MAX;
        let mut best_k = 0;
        for (k, p) in o.points.iter().enumerate() {
            let d = (p - target).norm();
            if d < best {
                best = d;
                best_k = k;
            }
        }
        let sign = if best_k + 1 < o.points.len() && best_k > 0 {
            let p = o.points[best_k];
            let q = o.points[best_k + 1];
            let dir = q - p;
            let tov = target - p;
            (dir.re * tov.im - dir.im * tov.re).signum()
        } else {
            1.0
        };
        out.push((bi, sign * best));
    }
    out
}

/// A genuine saddle terminates at the target: its defining difference
/// D = -2 log y + 2 pi i n vanishes there. A line merely passing through
/// arrives on another logarithmic lift, where |D| stays of order 2 pi.
#[allow(clippy::too_many_arguments)]
fn is_true_saddle(
    model: &QdeModel,
    bps: &[BranchPoint],
    a: usize,
    ray: usize,
    b: usize,
    theta: f64,
    caps: &TraceCaps,
    scale: f64,
) -> bool {
    let bp = &bps[a];
    let rays = primary_rays(bp, theta);
    let label = TrajectoryLabel::new(bp.signature, -bp.signature, 0);
    let seed = seed_on_ray(model, bp, &label, rays[ray], 1e-7 * scale, theta);
    let o = trace_one(
        model, &label, seed.w, seed.log_y, seed.orientation, theta, caps, scale, 0.0, &[],
    );
    let target = bps[b].pos();
    let mut best = f64::MAX;
    let mut best_k = 0usize;
    for (k, p) in o.points.iter().enumerate() {
        let d = (p - target).norm();
        if d < best {
            best = d;
            best_k = k;
        }
    }
    if best > 0.02 * scale || best_k == 0 {
        return false;
    }
    let cover = model.cover_degree as f64;
    let d_here = lambda_diff(&label, o.logs[best_k], cover);
    d_here.norm() < 1.5 * cover
}

/// Trace one diagonal spiral for a full turn at phase theta with a fixed-step
/// RK4 and report the maximal relative radial deviation; at theta = 0 the
/// spiral closes into a circle.
pub fn d0_circle_deviation(model: &QdeModel, theta: f64, n: i64) -> Result<f64, NetworkError> {
    let bps = branch_points(model)?;
    let scale = coordinate_scale(&bps);
    let r0 = 2.2 * scale;
    let label = TrajectoryLabel::new(1, 1, n);
    let cover = model.cover_degree as f64;
    let eith = Complex64::new(theta.cos(), theta.sin());
    let log_y = Complex64::new(0.0, 0.0); // diagonal field ignores the sheet
    let f = |w: Complex64| -> Complex64 {
        let d = lambda_diff(&label, log_y, cover);
        let v = eith * w / d;
        v / v.norm()
    };
    let mut w = Complex64::new(r0, 0.0);
    let h = 1e-3 * scale;
    let mut turned = 0.0f64;
    let mut max_dev = 0.0f64;
    let mut guard = 0usize;
    while turned.abs() < 2.0 * std::f64::consts::PI {
        let k1 = f(w);
        let k2 = f(w + k1 * (0.5 * h));
        let k3 = f(w + k2 * (0.5 * h));
        let k4 = f(w + k3 * h);
        let w_next = w + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        turned += (w_next / w).arg();
        w = w_next;
        max_dev = max_dev.max(((w.norm() - r0) / r0).abs());
        guard += 1;
        if guard > 20_000_000 {
            break;
        }
    }
    Ok(max_dev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{LaurentPoly, Qi};
    use std::collections::BTreeMap as Map;

    fn qairy_model() -> QdeModel {
        crate::models::builtin("qairy", &Map::new()).unwrap().model
    }

    #[test]
    fn qairy_primary_count_and_labels() {
        let m = qairy_model();
        let caps = TraceCaps { max_generation: 0, ..Default::default() };
        let g = build_graph(&m, std::f64::consts::PI / 5.0, &caps).unwrap();
        assert_eq!(g.branch_points.len(), 2);
        let primaries: Vec<_> = g.primary_lines().collect();
        assert_eq!(primaries.len(), 6, "3 + 3 primary lines");
        let cut_bp = g.log_cuts[0].branch_point;
        let mut ells: Vec<i64> = primaries
            .iter()
            .filter(|t| matches!(t.parent, Parent::BranchPoint { index, .. } if index == cut_bp))
            .map(|t| t.ell_label)
            .collect();
        ells.sort();
        assert_eq!(ells, vec![-1, -1, 1]);
        let other: Vec<i64> = primaries
            .iter()
            .filter(|t| matches!(t.parent, Parent::BranchPoint { index, .. } if index != cut_bp))
            .map(|t| t.ell_label)
            .collect();
        assert_eq!(other, vec![0, 0, 0]);
    }

    #[test]
    fn im_condition_stays_small() {
        let m = qairy_model();
        let caps = TraceCaps { max_generation: 0, ..Default::default() };
        let g = build_graph(&m, 0.7, &caps).unwrap();
        let cover = m.cover_degree as f64;
        let eith = Complex64::new(0.7f64.cos(), 0.7f64.sin());
        for t in g.primary_lines() {
            let mut f = Complex64::new(0.0, 0.0);
            let mut worst = 0.0f64;
            for k in 1..t.points.len() {
                let w0 = t.point(k - 1);
                let w1 = t.point(k);
                let l0 = Complex64::new(t.log_branch[k - 1][0], t.log_branch[k - 1][1]);
                let l1 = Complex64::new(t.log_branch[k][0], t.log_branch[k][1]);
                let d0 = lambda_diff(&t.label, l0, cover) / w0;
                let d1 = lambda_diff(&t.label, l1, cover) / w1;
                f += (d0 + d1) * 0.5 * (w1 - w0);
                worst = worst.max((f * eith.conj()).im.abs());
            }
            assert!(
                worst <= 1e-6 * (1.0 + t.mass),
                "Im drift {} too large on trajectory {} (mass {})",
                worst,
                t.id,
                t.mass
            );
        }
    }

    #[test]
    fn z_shift_covariance() {
        // The diagonal difference depends only on the relative shift, never on
        // the absolute logarithmic index of the pair.
        let l = TrajectoryLabel::new(1, 1, 1);
        let d = lambda_diff(&l, Complex64::new(0.3, -0.2), 1.0);
        assert!((d - Complex64::new(0.0, 2.0 * std::f64::consts::PI)).norm() < 1e-15);
    }

    #[test]
    fn spawn_rule_table() {
        let caps = TraceCaps { max_abs_n: 3, ..Default::default() };
        let a = TrajectoryLabel::new(1, -1, 0);
        let b = TrajectoryLabel::new(1, -1, 1);
        assert!(spawn_rules(&a, &b, &caps).is_empty(), "(+-,0) x (+-,1) spawns nothing");
        let b = TrajectoryLabel::new(-1, 1, 1);
        let spawned = spawn_rules(&a, &b, &caps);
        assert!(spawned.contains(&TrajectoryLabel::new(1, -1, 1)));
        assert!(spawned.contains(&TrajectoryLabel::new(-1, 1, 2)));
        assert!(spawned.contains(&TrajectoryLabel::new(1, 1, 1)));
        let b = TrajectoryLabel::new(-1, 1, 0);
        assert!(a.opposite(&b));
        let a = TrajectoryLabel::new(1, -1, 1);
        let b = TrajectoryLabel::new(1, 1, 1);
        let spawned = spawn_rules(&a, &b, &caps);
        assert!(spawned.contains(&TrajectoryLabel::new(1, -1, 2)));
    }

    #[test]
    fn dump_roundtrip_bit_exact() {
        let m = qairy_model();
        let caps = TraceCaps { max_generation: 0, max_steps: 2000, ..Default::default() };
        let g = build_graph(&m, 0.9, &caps).unwrap();
        let d1 = dump(&g);
        let g2 = read_dump(&d1).unwrap();
        let d2 = dump(&g2);
        assert_eq!(d1, d2);
    }

    #[test]
    fn determinism() {
        let m = qairy_model();
        let caps = TraceCaps { max_generation: 1, max_steps: 4000, ..Default::default() };
        let d1 = dump(&build_graph(&m, 0.9, &caps).unwrap());
        let d2 = dump(&build_graph(&m, 0.9, &caps).unwrap());
        assert_eq!(d1, d2);
    }

    #[test]
    fn d0_circles_close_at_zero() {
        let m = qairy_model();
        let dev = d0_circle_deviation(&m, 0.0, 1).unwrap();
        assert!(dev < 1e-6, "deviation {}", dev);
        let dev = d0_circle_deviation(&m, 0.4, 1).unwrap();
        assert!(dev > 1e-3, "deviation {}", dev);
    }

    #[test]
    fn qairy_saddle_sweep() {
        let m = qairy_model();
        let saddles = find_saddles(&m, -1.2, 1.2, 24).unwrap();
        assert!(
            saddles
                .iter()
                .any(|s| s.theta.abs() < 1e-3 && matches!(s.kind, SaddleKind::D0Ring { .. })),
            "expected the D0 saddle at theta = 0, got {:?}",
            saddles.iter().map(|s| s.theta).collect::<Vec<_>>()
        );
        let theta_star = (2.0 * std::f64::consts::LN_2 / std::f64::consts::PI).atan();
        assert!(
            !saddles.iter().any(|s| (s.theta - theta_star).abs() < 5e-2),
            "pass-through at theta_* misreported as saddle: {:?}",
            saddles.iter().map(|s| s.theta).collect::<Vec<_>>()
        );
    }

    #[test]
    fn qairy_positive_window_empty() {
        let m = qairy_model();
        let saddles = find_saddles(&m, 0.1, 1.0, 18).unwrap();
        assert!(
            saddles.is_empty(),
            "got {:?}",
            saddles.iter().map(|s| s.theta).collect::<Vec<_>>()
        );
    }

    #[test]
    fn constant_model_has_nothing_to_trace() {
        let m = QdeModel::new("const", 1, vec![LaurentPoly::constant(Qi::from_int(2))]);
        assert!(build_graph(&m, 0.3, &TraceCaps::default()).is_err());
    }
}
