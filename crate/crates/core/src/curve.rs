//! The q-difference model in involutive form, its WKB curve y + 1/y = 2 T0(x),
//! and the taxonomy of critical points: square-root branch points, logarithmic
//! punctures, and regular/apparent/colliding punctures at 0 and infinity.

use std::collections::BTreeMap;
use std::fmt;

use num::complex::Complex64;
use num::traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{LaurentPoly, Qi};

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("T0 is constant; the WKB curve has no branch points")]
    ConstantTrace,
    #[error("branch point at w = {0} is not simple")]
    NonSimpleBranchPoint(Complex64),
    #[error("evaluation at w = {0} hits a pole of T0 (logarithmic puncture)")]
    LogPunctureHit(Complex64),
    #[error("sheets degenerate at w = {0} (branch point)")]
    DegenerateSheets(Complex64),
    #[error("q-Pochhammer product diverges: |q| = {0} >= 1")]
    DivergentProduct(f64),
    #[error("root finding did not converge")]
    RootsDiverged,
    #[error("bad model config: {0}")]
    BadConfig(String),
}

/// Declared symmetry of the w-plane model data, used by property checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelSymmetry {
    /// w -> -w
    NegateW,
    /// w -> 1/w
    InvertW,
}

/// A second-order q-difference equation in involutive form,
/// psi(q x) + psi(q^-1 x) = 2 T(x, q) psi(x), presented on the w-cover
/// x = w^cover_degree with T a Laurent polynomial in w at every hbar order.
#[derive(Clone, Debug)]
pub struct QdeModel {
    pub name: String,
    /// c with x = w^c; 1 for almost everything, 2 when half-integer powers
    /// force a double cover.
    pub cover_degree: u32,
    /// T_k(w) for k = 0, 1, ... (finitely many stored).
    pub trace_coeffs: Vec<LaurentPoly>,
    /// Named complex constants of the model.
    pub parameters: BTreeMap<String, Qi>,
    /// Declared symmetries (documentation + property checks).
    pub symmetries: Vec<ModelSymmetry>,
    /// Sheet-label anchor: y_+ is the root with larger |y| at this point,
    /// continued elsewhere by continuity. Exposed as config; no canonical rule.
    pub anchor: Complex64,
    /// Explicit log-cut pairing overrides: puncture location -> branch point
    /// index (into `branch_points()` output). `None` falls back to nearest.
    pub log_cut_pairing: BTreeMap<String, usize>,
}

impl QdeModel {
    pub fn new(name: impl Into<String>, cover_degree: u32, trace_coeffs: Vec<LaurentPoly>) -> Self {
        assert!(cover_degree == 1 || cover_degree == 2, "cover degree must be 1 or 2");
        assert!(!trace_coeffs.is_empty(), "T needs at least the order-0 coefficient");
        QdeModel {
            name: name.into(),
            cover_degree,
            trace_coeffs,
            parameters: BTreeMap::new(),
            symmetries: Vec::new(),
            anchor: Complex64::new(4.0, 0.5),
            log_cut_pairing: BTreeMap::new(),
        }
    }

    pub fn t0(&self) -> &LaurentPoly {
        &self.trace_coeffs[0]
    }

    pub fn t_k(&self, k: usize) -> LaurentPoly {
        self.trace_coeffs.get(k).cloned().unwrap_or_else(LaurentPoly::zero)
    }

    /// T0(w) numerically.
    pub fn t0_at(&self, w: Complex64) -> Complex64 {
        self.t0().eval(w)
    }

    /// x d/dx T0 evaluated numerically (w-plane log derivative divided by w).
    pub fn t0_prime_at(&self, w: Complex64) -> Complex64 {
        self.t0().dlog().eval(w) / w
    }
}

/// Square-root branch point of the WKB curve: a simple root of T0 = +/-1.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchPoint {
    /// Position in the w-coordinate.
    pub position: [f64; 2],
    /// Value of T0 there: +1 or -1.
    pub sign_class: i8,
    /// Local coefficient c0 with T0 = sign_class (1 + c0^2/2 (w - w_b) + ...).
    pub c0: [f64; 2],
    /// Dominance signature: +1 for (+-), -1 for (-+), 0 when not yet assigned
    /// (signatures are fixed at trace time from the Stokes-line dominance test).
    pub signature: i8,
    /// Logarithmic degree k of the puncture whose cut encircles this branch
    /// point; 0 when no logarithmic cut ends here.
    pub enc_log_shift: i64,
}

impl BranchPoint {
    pub fn pos(&self) -> Complex64 {
        Complex64::new(self.position[0], self.position[1])
    }

    pub fn c0_c64(&self) -> Complex64 {
        Complex64::new(self.c0[0], self.c0[1])
    }
}

/// Where a puncture sits on the x-plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PunctureLocation {
    Origin,
    Infinity,
    Finite([f64; 2]),
}

impl PunctureLocation {
    pub fn as_c64(&self) -> Option<Complex64> {
        match self {
            PunctureLocation::Origin => Some(Complex64::zero()),
            PunctureLocation::Infinity => None,
            PunctureLocation::Finite(p) => Some(Complex64::new(p[0], p[1])),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PunctureKind {
    /// One sheet of y runs to 0, the other to infinity.
    Logarithmic,
    /// y tends to finite limits e^{mu}, e^{-mu} distinct from 0, inf, +/-1.
    Regular,
    /// y -> +/-1 with integer local exponent (regular or apparent singularity).
    Apparent,
    /// y -> +/-1 with half-integer local exponent: a regular puncture that
    /// collided with a branch point.
    Colliding,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Puncture {
    pub location: PunctureLocation,
    pub kind: PunctureKind,
    /// For logarithmic punctures: the divergence degree k < 0 of T0 in the
    /// local coordinate. 0 otherwise.
    pub degree_k: i64,
    /// For regular punctures: residue exponent mu with limiting sheets
    /// e^{mu}, e^{-mu}. For apparent/colliding: the limit value of y (0 or pi
    /// phase encoded in mu as log of the limit).
    pub mu: Option<[f64; 2]>,
}

impl Puncture {
    pub fn mu_c64(&self) -> Option<Complex64> {
        self.mu.map(|m| Complex64::new(m[0], m[1]))
    }
}

/// y_+/- = T0 +/- sqrt(T0^2 - 1) with the branch of the square root picked by
/// `branch_choice`; `y_+ * y_- = 1` exactly.
pub fn sheets_at(
    model: &QdeModel,
    w: Complex64,
    branch_choice: i8,
) -> Result<(Complex64, Complex64), CurveError> {
    let t0 = model.t0();
    // Pole of T0 at w (or at 0/infinity as a Laurent tail)?
    if w.norm() < 1e-14 {
        if t0.min_exp().map_or(false, |e| e < 0) {
            return Err(CurveError::LogPunctureHit(w));
        }
    }
    let t = t0.eval(w);
    if !t.is_finite() {
        return Err(CurveError::LogPunctureHit(w));
    }
    let disc = t * t -fc(1.0);
    let root = disc.sqrt();
    if root.norm() < 1e-13 {
        return Err(CurveError::DegenerateSheets(w));
    }
    let s = if branch_choice >= 0 { root } else { -root };
    Ok((t + s, t - s))
}

fn fc(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// All square-root branch points: simple roots of (T0 - 1)(T0 + 1) = 0.
pub fn branch_points(model: &QdeModel) -> Result<Vec<BranchPoint>, CurveError> {
    let t0 = model.t0();
    if t0.is_constant() {
        return Err(CurveError::ConstantTrace);
    }
    let mut out = Vec::new();
    for sign in [1i8, -1i8] {
        // roots of T0 - sign = 0, cleared to a polynomial in w
        let shifted = {
            let mut p = t0.clone();
            p.add_term(0, Qi::from_int(-(sign as i64)));
            p
        };
        let roots = laurent_roots(&shifted)?;
        for w in roots {
            // simplicity: dT0/dw must not vanish there
            let deriv = t0.dlog().eval(w) / w;
            if deriv.norm() < 1e-8 {
                return Err(CurveError::NonSimpleBranchPoint(w));
            }
            // T0 = s(1 + c0^2/2 u + ...) => c0^2 = 2 s T0'(w_b)
            let c0sq = fc(2.0 * sign as f64) * deriv;
            let c0 = c0sq.sqrt();
            out.push(BranchPoint {
                position: [w.re, w.im],
                sign_class: sign,
                c0: [c0.re, c0.im],
                signature: 0,
                enc_log_shift: 0,
            });
        }
    }
    // Deterministic order: by (re, im).
    out.sort_by(|a, b| {
        (a.position[0], a.position[1])
            .partial_cmp(&(b.position[0], b.position[1]))
            .unwrap()
    });
    assign_log_cut_pairing(model, &mut out);
    Ok(out)
}

/// Pair each logarithmic puncture with the branch point its cut encircles and
/// record the puncture degree there. Default rule: the puncture at 0 pairs with
/// the branch point of smallest |w|, the one at infinity with the largest |w|,
/// a finite one with the nearest; explicit overrides win.
fn assign_log_cut_pairing(model: &QdeModel, bps: &mut [BranchPoint]) {
    if bps.is_empty() {
        return;
    }
    for p in classify_punctures(model) {
        if p.kind != PunctureKind::Logarithmic {
            continue;
        }
        let key = match p.location {
            PunctureLocation::Origin => "origin".to_string(),
            PunctureLocation::Infinity => "infinity".to_string(),
            PunctureLocation::Finite(q) => format!("{},{}", q[0], q[1]),
        };
        let idx = if let Some(&i) = model.log_cut_pairing.get(&key) {
            i.min(bps.len() - 1)
        } else {
            match p.location {
                PunctureLocation::Origin => argmin(bps, |b| b.pos().norm()),
                PunctureLocation::Infinity => argmin(bps, |b| -b.pos().norm()),
                PunctureLocation::Finite(q) => {
                    let z = Complex64::new(q[0], q[1]);
                    argmin(bps, |b| (b.pos() - z).norm())
                }
            }
        };
        bps[idx].enc_log_shift = p.degree_k;
    }
}

fn argmin(bps: &[BranchPoint], f: impl Fn(&BranchPoint) -> f64) -> usize {
    let mut best = 0;
    for i in 1..bps.len() {
        if f(&bps[i]) < f(&bps[best]) {
            best = i;
        }
    }
    best
}

/// Classify 0, infinity, and every finite pole of T0 (classification is total).
pub fn classify_punctures(model: &QdeModel) -> Vec<Puncture> {
    let t0 = model.t0();
    let mut out = Vec::new();

    // Origin: behavior governed by the lowest Laurent exponent.
    let min_exp = t0.min_exp().unwrap_or(0);
    out.push(classify_boundary(
        t0,
        PunctureLocation::Origin,
        min_exp,
        t0.coeff(0),
    ));

    // Infinity: local coordinate 1/w; divergence degree is -max_exp.
    let max_exp = t0.max_exp().unwrap_or(0);
    out.push(classify_boundary(
        &t0.substitute_inverted(),
        PunctureLocation::Infinity,
        -max_exp,
        t0.coeff(0),
    ));

    // Finite poles of T0 live only at w = 0 for Laurent data; finite x* poles
    // would enter through a rational T0, which the Laurent model represents by
    // clearing to the origin. Nothing further to scan here.
    out
}

/// Classify one boundary puncture (0 or infinity) from the local Laurent data
/// written in the local coordinate (w near 0).
fn classify_boundary(
    local: &LaurentPoly,
    location: PunctureLocation,
    min_exp: i64,
    _const_coeff: Qi,
) -> Puncture {
    if min_exp < 0 {
        // T0 diverges: logarithmic puncture of degree k = min_exp.
        return Puncture { location, kind: PunctureKind::Logarithmic, degree_k: min_exp, mu: None };
    }
    // T0 finite at the puncture: limit a = T0(0) in the local coordinate.
    let a = local.coeff(0).to_c64();
    let disc = a * a - fc(1.0);
    if disc.norm() > 1e-13 {
        // Regular puncture: y -> e^{+/-mu} with cosh(mu) = a.
        let mu = (a + disc.sqrt()).ln();
        return Puncture { location, kind: PunctureKind::Regular, degree_k: 0, mu: Some([mu.re, mu.im]) };
    }
    // a = +/-1: the local exponent of sqrt(T0^2 - 1) decides. Find the lowest
    // exponent of T0^2 - 1 in the local coordinate: odd => half-integer
    // exponent in lambda => colliding; even => apparent/regular.
    let rho = &(local * local) - &LaurentPoly::one();
    let lead = rho.min_exp().unwrap_or(0);
    let kind = if lead % 2 != 0 { PunctureKind::Colliding } else { PunctureKind::Apparent };
    let mu = a.ln();
    Puncture { location, kind, degree_k: 0, mu: Some([mu.re, mu.im]) }
}

/// Truncated infinite q-Pochhammer symbol (x; q)_inf = prod_{k>=1} (1 - x q^k).
///
/// The product here starts at k = 1, following the defining display; with that
/// convention the shift identity reads (qx; q)_inf (1 - qx) = (x; q)_inf.
pub fn qpochhammer(x: Complex64, q: Complex64, terms: u32) -> Result<Complex64, CurveError> {
    if q.norm() >= 1.0 {
        return Err(CurveError::DivergentProduct(q.norm()));
    }
    assert!(terms >= 1, "need at least one factor");
    let mut acc = Complex64::new(1.0, 0.0);
    let mut qk = q;
    for _ in 0..terms {
        acc *= Complex64::new(1.0, 0.0) - x * qk;
        qk *= q;
        if qk.norm() < 1e-300 {
            break;
        }
    }
    Ok(acc)
}

/// Aberth-Ehrlich simultaneous root finder with Newton polish, on the
/// polynomial obtained by clearing the Laurent tail.
pub fn laurent_roots(p: &LaurentPoly) -> Result<Vec<Complex64>, CurveError> {
    if p.is_zero() || p.is_constant() {
        return Ok(Vec::new());
    }
    let min = p.min_exp().unwrap();
    let poly = p.shift(-min);
    let deg = poly.max_exp().unwrap() as usize;
    let coeffs: Vec<Complex64> = (0..=deg as i64).map(|e| poly.coeff(e).to_c64()).collect();
    let eval = |z: Complex64| -> (Complex64, Complex64) {
        // Horner for value and derivative.
        let mut v = Complex64::zero();
        let mut d = Complex64::zero();
        for c in coeffs.iter().rev() {
            d = d * z + v;
            v = v * z + c;
        }
        (v, d)
    };
    // Initial guesses on a circle scaled by a coefficient-based radius bound.
    let lead = coeffs[deg].norm();
    let radius = 1.0
        + coeffs[..deg]
            .iter()
            .map(|c| c.norm() / lead)
            .fold(0.0f64, f64::max);
    let mut roots: Vec<Complex64> = (0..deg)
        .map(|k| {
            let ang = 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / deg as f64;
            fc(0.7 * radius) * Complex64::new(ang.cos(), ang.sin())
        })
        .collect();
    for _ in 0..200 {
        let mut max_step = 0.0f64;
        let snapshot = roots.clone();
        for i in 0..deg {
            let (v, d) = eval(snapshot[i]);
            if v.norm() == 0.0 {
                continue;
            }
            let newton = v / d;
            let mut repulsion = Complex64::zero();
            for (j, &rj) in snapshot.iter().enumerate() {
                if j != i {
                    repulsion += fc(1.0) / (snapshot[i] - rj);
                }
            }
            let denom = fc(1.0) - newton * repulsion;
            let step = newton / denom;
            roots[i] -= step;
            max_step = max_step.max(step.norm());
        }
        if max_step < 1e-14 * (1.0 + radius) {
            break;
        }
    }
    // Newton polish to 1e-13.
    for r in roots.iter_mut() {
        for _ in 0..50 {
            let (v, d) = eval(*r);
            if d.norm() == 0.0 {
                break;
            }
            let step = v / d;
            *r -= step;
            if step.norm() < 1e-13 * (1.0 + r.norm()) {
                break;
            }
        }
        let (v, _) = eval(*r);
        if v.norm() > 1e-6 * (1.0 + lead) {
            return Err(CurveError::RootsDiverged);
        }
    }
    roots.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    Ok(roots)
}

/// Continue log y_+ along a polyline, starting from the principal value at the
/// first point, keeping Im(log y) continuous. Returns the final log y.
pub fn continue_log_sheet(
    model: &QdeModel,
    path: &[Complex64],
    start_log: Option<Complex64>,
) -> Result<Complex64, CurveError> {
    assert!(path.len() >= 2);
    let (y0, _) = sheets_at(model, path[0], 1)?;
    let mut log_y = start_log.unwrap_or_else(|| y0.ln());
    let mut prev_y = log_y.exp();
    for &w in &path[1..] {
        let t = model.t0_at(w);
        let root = (t * t - fc(1.0)).sqrt();
        // pick the root continuation closest to the previous y
        let cand1 = t + root;
        let cand2 = t - root;
        let y = if (cand1 - prev_y).norm() <= (cand2 - prev_y).norm() { cand1 } else { cand2 };
        // unwrapped log: adjust branch so the jump is < pi
        let mut l = y.ln();
        let two_pi = 2.0 * std::f64::consts::PI;
        while (l.im - log_y.im) > std::f64::consts::PI {
            l -= Complex64::new(0.0, two_pi);
        }
        while (l.im - log_y.im) < -std::f64::consts::PI {
            l += Complex64::new(0.0, two_pi);
        }
        log_y = l;
        prev_y = y;
    }
    Ok(log_y)
}

impl fmt::Display for QdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model {} (cover degree {})", self.name, self.cover_degree)?;
        for (k, t) in self.trace_coeffs.iter().enumerate() {
            if !t.is_zero() {
                writeln!(f, "  T_{} = {}", k, t)?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Model config files: structured text with keys name, cover_degree,
// parameters, T as [[hbar_order, [[exponent, re, im], ...]], ...].
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct RawModelConfig {
    name: String,
    #[serde(default = "one_u32")]
    cover_degree: u32,
    #[serde(default)]
    parameters: BTreeMap<String, serde_json::Value>,
    #[serde(rename = "T")]
    t: Vec<(u32, Vec<(i64, serde_json::Value, serde_json::Value)>)>,
    #[serde(default)]
    anchor: Option<[f64; 2]>,
    #[serde(default)]
    log_cut_pairing: BTreeMap<String, usize>,
}

fn one_u32() -> u32 {
    1
}

/// Exact-number parsing: string literals ("0.03", "97/100") parse exactly
/// into Q; plain JSON numbers go through their (exact) dyadic f64 value, so
/// write decimals as strings when the exact rational matters.
fn value_to_rational(v: &serde_json::Value) -> Result<num::BigRational, CurveError> {
    match v {
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                return Ok(num::BigRational::from_integer(i.into()));
            }
            let f = n
                .as_f64()
                .ok_or_else(|| CurveError::BadConfig(format!("bad number {}", n)))?;
            num::BigRational::from_float(f)
                .ok_or_else(|| CurveError::BadConfig(format!("non-finite number {}", n)))
        }
        serde_json::Value::String(s) => crate::exact::Qi::parse_real(s)
            .map(|q| q.re)
            .ok_or_else(|| CurveError::BadConfig(format!("cannot parse number {:?}", s))),
        other => Err(CurveError::BadConfig(format!("expected number, got {}", other))),
    }
}

/// Parse a model config from structured text. Unknown keys are rejected.
pub fn parse_model_config(text: &str) -> Result<QdeModel, CurveError> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CurveError::BadConfig(e.to_string()))?;
    reject_unknown_keys(&mut value)?;
    let raw: RawModelConfig =
        serde_json::from_value(value).map_err(|e| CurveError::BadConfig(e.to_string()))?;
    let mut coeffs: Vec<LaurentPoly> = Vec::new();
    for (order, terms) in &raw.t {
        while coeffs.len() <= *order as usize {
            coeffs.push(LaurentPoly::zero());
        }
        let mut p = LaurentPoly::zero();
        for (exp, re, im) in terms {
            let re = value_to_rational(re)?;
            let im = value_to_rational(im)?;
            p.add_term(*exp, Qi::new(re, im));
        }
        coeffs[*order as usize] = p;
    }
    if coeffs.is_empty() || coeffs[0].is_zero() {
        return Err(CurveError::BadConfig("T must include a nonzero order-0 entry".into()));
    }
    let mut model = QdeModel::new(raw.name, raw.cover_degree, coeffs);
    for (k, v) in &raw.parameters {
        let r = value_to_rational(v)?;
        model.parameters.insert(k.clone(), Qi::new(r, num::rational::BigRational::zero()));
    }
    if let Some([re, im]) = raw.anchor {
        model.anchor = Complex64::new(re, im);
    }
    model.log_cut_pairing = raw.log_cut_pairing;
    Ok(model)
}

fn reject_unknown_keys(v: &mut serde_json::Value) -> Result<(), CurveError> {
    const KNOWN: &[&str] = &["name", "cover_degree", "parameters", "T", "anchor", "log_cut_pairing"];
    if let serde_json::Value::Object(map) = v {
        for k in map.keys() {
            if !KNOWN.contains(&k.as_str()) {
                return Err(CurveError::BadConfig(format!("unknown key {:?}", k)));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::LaurentPoly;

    fn qairy() -> QdeModel {
        QdeModel::new("qairy", 1, vec![LaurentPoly::x()])
    }

    #[test]
    fn sheets_basic() {
        let m = qairy();
        // x = 5/4 -> (2, 1/2)
        let (yp, ym) = sheets_at(&m, fc(1.25), 1).unwrap();
        assert!((yp - fc(2.0)).norm() < 1e-12);
        assert!((ym - fc(0.5)).norm() < 1e-12);
        // product and sum identities
        let w = Complex64::new(0.3, 1.7);
        let (a, b) = sheets_at(&m, w, 1).unwrap();
        assert!((a * b - fc(1.0)).norm() < 1e-12);
        assert!((a + b - 2.0 * m.t0_at(w)).norm() < 1e-12);
    }

    #[test]
    fn sheets_at_origin_limit() {
        let m = qairy();
        // x -> 0: y_+/- -> +/- i
        let (yp, ym) = sheets_at(&m, fc(1e-9), 1).unwrap();
        assert!((yp - Complex64::new(0.0, 1.0)).norm() < 1e-6);
        assert!((ym - Complex64::new(0.0, -1.0)).norm() < 1e-6);
    }

    #[test]
    fn degenerate_at_branch_point() {
        let m = qairy();
        assert!(matches!(sheets_at(&m, fc(1.0), 1), Err(CurveError::DegenerateSheets(_))));
    }

    #[test]
    fn qairy_branch_points() {
        let m = qairy();
        let bps = branch_points(&m).unwrap();
        let mut pos: Vec<f64> = bps.iter().map(|b| b.position[0]).collect();
        pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((pos[0] + 1.0).abs() < 1e-12);
        assert!((pos[1] - 1.0).abs() < 1e-12);
        for b in &bps {
            assert!(b.c0_c64().norm() > 1e-8);
        }
    }

    #[test]
    fn qairy_punctures() {
        let m = qairy();
        let ps = classify_punctures(&m);
        let origin = ps.iter().find(|p| p.location == PunctureLocation::Origin).unwrap();
        assert_eq!(origin.kind, PunctureKind::Regular);
        // mu = i pi / 2
        let mu = origin.mu_c64().unwrap();
        assert!((mu - Complex64::new(0.0, std::f64::consts::FRAC_PI_2)).norm() < 1e-12);
        let inf = ps.iter().find(|p| p.location == PunctureLocation::Infinity).unwrap();
        assert_eq!(inf.kind, PunctureKind::Logarithmic);
        assert_eq!(inf.degree_k, -1);
    }

    #[test]
    fn constant_trace_rejected() {
        let m = QdeModel::new("const", 1, vec![LaurentPoly::constant(Qi::from_int(3))]);
        assert!(matches!(branch_points(&m), Err(CurveError::ConstantTrace)));
    }

    #[test]
    fn qpochhammer_values() {
        let q = fc(0.5);
        // (0; q) = 1 and (x; 0) = 1
        assert!((qpochhammer(fc(0.0), q, 50).unwrap() - fc(1.0)).norm() < 1e-15);
        assert!((qpochhammer(fc(0.7), fc(0.0), 50).unwrap() - fc(1.0)).norm() < 1e-15);
        assert!(qpochhammer(fc(0.1), fc(1.0), 10).is_err());
        // Shift identity for the k>=1 product: (qx;q)(1-qx) = (x;q).
        let x = fc(0.3);
        let lhs = qpochhammer(q * x, q, 200).unwrap() * (fc(1.0) - q * x);
        let rhs = qpochhammer(x, q, 200).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn log_monodromy_around_infinity() {
        // Continuation of log y_+ around a large loop gains 2 pi i * |k|.
        let m = qairy();
        let n = 1000;
        let path: Vec<Complex64> = (0..=n)
            .map(|i| {
                let ang = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                fc(25.0) * Complex64::new(ang.cos(), ang.sin())
            })
            .collect();
        let start = {
            let (y0, _) = sheets_at(&m, path[0], 1).unwrap();
            y0.ln()
        };
        let end = continue_log_sheet(&m, &path, Some(start)).unwrap();
        let delta = end - start;
        assert!((delta - Complex64::new(0.0, 2.0 * std::f64::consts::PI)).norm() < 1e-6);
    }

    #[test]
    fn config_roundtrip() {
        let text = r#"{
            "name": "qairy_kappa",
            "cover_degree": 1,
            "parameters": {"kappa": "0.5"},
            "T": [[0, [[0, "0.5", 0], [1, 1, 0]]]]
        }"#;
        let m = parse_model_config(text).unwrap();
        assert_eq!(m.name, "qairy_kappa");
        let bps = branch_points(&m).unwrap();
        let pos: Vec<f64> = bps.iter().map(|b| b.position[0]).collect();
        assert!((pos[0] + 1.5).abs() < 1e-10);
        assert!((pos[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let text = r#"{"name": "m", "T": [[0, [[1, 1, 0]]]], "bogus": 1}"#;
        assert!(parse_model_config(text).is_err());
    }
}
