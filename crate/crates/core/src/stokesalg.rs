//! Symbolic Stokes calculus: a commutative Laurent-monomial ring over named
//! symbols (Voros Y, logarithmic shift xi, soliton X, charge X_gamma) with
//! exact rational exponents, 2x2 matrices over it, path-word composition,
//! regularized traces, q-Wronskian cross-ratios, and framed transport.

use std::collections::BTreeMap;
use std::fmt;

use num::bigint::BigInt;
use num::complex::Complex64;
use num::rational::BigRational;
use num::traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::exact::Qi;
use std::ops::Mul as _;

#[derive(Debug, Error)]
pub enum AlgError {
    #[error("token {0} is not invertible within its truncation contract")]
    NonInvertibleToken(String),
    #[error("division by a non-monomial expression")]
    NonMonomialDivision,
    #[error("malformed detour: {0}")]
    MalformedDetour(String),
    #[error("charge assignment does not cover symbol {0}")]
    IncompleteAssignment(String),
    #[error("path word syntax error: {0}")]
    BadWord(String),
    #[error("matrix determinant is not 1")]
    NonUnitDeterminant,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum SymbolKind {
    /// Voros symbol Y (exponential of a quantum period).
    Voros,
    /// q-periodic shift factor xi = (x / anchor)^{2 pi i / hbar}; carries unit
    /// weight in the x^{2 pi i / hbar} grading.
    Shift,
    /// Soliton variable X of framed transport.
    Soliton,
    /// Charge variable X_gamma.
    Charge,
}

/// A named generator of the monomial ring. Shift symbols remember which branch
/// point anchors them so anchor-ratio constants can be recognized.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Symbol {
    pub name: String,
    pub kind: SymbolKind,
    /// Branch-point index anchoring a shift symbol; None for other kinds.
    pub anchor: Option<u32>,
}

impl Symbol {
    pub fn voros(name: impl Into<String>) -> Self {
        Symbol { name: name.into(), kind: SymbolKind::Voros, anchor: None }
    }

    pub fn shift(name: impl Into<String>, anchor: u32) -> Self {
        Symbol { name: name.into(), kind: SymbolKind::Shift, anchor: Some(anchor) }
    }

    pub fn soliton(name: impl Into<String>) -> Self {
        Symbol { name: name.into(), kind: SymbolKind::Soliton, anchor: None }
    }

    pub fn charge(name: impl Into<String>) -> Self {
        Symbol { name: name.into(), kind: SymbolKind::Charge, anchor: None }
    }
}

type ExpVec = BTreeMap<Symbol, BigRational>;

/// Finite sum of terms coeff * prod sym^exponent with exact rational exponents
/// and Gaussian-rational coefficients; canonically ordered and pruned.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SymExpr {
    terms: BTreeMap<ExpVec, Qi>,
}

impl SymExpr {
    pub fn zero() -> Self {
        SymExpr { terms: BTreeMap::new() }
    }

    pub fn one() -> Self {
        SymExpr::constant(Qi::one())
    }

    pub fn constant(c: Qi) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(ExpVec::new(), c);
        }
        SymExpr { terms }
    }

    pub fn i() -> Self {
        SymExpr::constant(Qi::i())
    }

    pub fn symbol(s: Symbol) -> Self {
        SymExpr::monomial(Qi::one(), [(s, BigRational::one())])
    }

    pub fn symbol_pow(s: Symbol, num: i64, den: i64) -> Self {
        SymExpr::monomial(Qi::one(), [(s, BigRational::new(BigInt::from(num), BigInt::from(den)))])
    }

    pub fn monomial(coeff: Qi, powers: impl IntoIterator<Item = (Symbol, BigRational)>) -> Self {
        let mut ev = ExpVec::new();
        for (s, e) in powers {
            if !e.is_zero() {
                ev.insert(s, e);
            }
        }
        let mut terms = BTreeMap::new();
        if !coeff.is_zero() {
            terms.insert(ev, coeff);
        }
        SymExpr { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1 && self.terms.iter().all(|(ev, c)| ev.is_empty() && c.is_one())
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&ExpVec, &Qi)> {
        self.terms.iter()
    }

    fn add_term(&mut self, ev: ExpVec, c: Qi) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&ev) {
            Some(entry) => {
                *entry += &c;
                if entry.is_zero() {
                    self.terms.remove(&ev);
                }
            }
            None => {
                self.terms.insert(ev, c);
            }
        }
    }

    pub fn add(&self, rhs: &SymExpr) -> SymExpr {
        let mut out = self.clone();
        for (ev, c) in &rhs.terms {
            out.add_term(ev.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, rhs: &SymExpr) -> SymExpr {
        self.add(&rhs.neg())
    }

    pub fn neg(&self) -> SymExpr {
        SymExpr { terms: self.terms.iter().map(|(ev, c)| (ev.clone(), -c.clone())).collect() }
    }

    pub fn mul(&self, rhs: &SymExpr) -> SymExpr {
        let mut out = SymExpr::zero();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let mut ev = ea.clone();
                for (s, e) in eb {
                    let entry = ev.entry(s.clone()).or_insert_with(BigRational::zero);
                    *entry += e;
                    if entry.is_zero() {
                        ev.remove(s);
                    }
                }
                out.add_term(ev, ca.mul(cb));
            }
        }
        out
    }

    pub fn scale(&self, c: &Qi) -> SymExpr {
        if c.is_zero() {
            return SymExpr::zero();
        }
        SymExpr { terms: self.terms.iter().map(|(ev, v)| (ev.clone(), v.mul(c))).collect() }
    }

    /// The single (exponent-vector, coefficient) pair when this is a monomial.
    pub fn as_monomial(&self) -> Option<(&ExpVec, &Qi)> {
        if self.terms.len() == 1 {
            self.terms.iter().next()
        } else {
            None
        }
    }

    /// Inverse of a monomial. Fails on sums.
    pub fn mono_inv(&self) -> Result<SymExpr, AlgError> {
        let (ev, c) = self.as_monomial().ok_or(AlgError::NonMonomialDivision)?;
        Ok(SymExpr {
            terms: [(ev.iter().map(|(s, e)| (s.clone(), -e.clone())).collect(), c.inv())]
                .into_iter()
                .collect(),
        })
    }

    pub fn div_mono(&self, rhs: &SymExpr) -> Result<SymExpr, AlgError> {
        Ok(self.mul(&rhs.mono_inv()?))
    }

    /// Monomial raised to an exact rational power; requires coefficient 1.
    pub fn mono_pow(&self, p: &BigRational) -> Result<SymExpr, AlgError> {
        let (ev, c) = self.as_monomial().ok_or(AlgError::NonMonomialDivision)?;
        if !c.is_one() {
            return Err(AlgError::NonMonomialDivision);
        }
        let scaled: ExpVec = ev
            .iter()
            .map(|(s, e)| (s.clone(), e * p))
            .filter(|(_, e)| !e.is_zero())
            .collect();
        Ok(SymExpr { terms: [(scaled, Qi::one())].into_iter().collect() })
    }

    /// Shift-weight of a term: the sum of exponents of shift symbols.
    fn term_shift_weight(ev: &ExpVec) -> BigRational {
        let mut w = BigRational::zero();
        for (s, e) in ev {
            if s.kind == SymbolKind::Shift {
                w += e;
            }
        }
        w
    }

    fn filter_terms(&self, keep: impl Fn(&ExpVec) -> bool) -> SymExpr {
        SymExpr {
            terms: self
                .terms
                .iter()
                .filter(|(ev, _)| keep(ev))
                .map(|(ev, c)| (ev.clone(), c.clone()))
                .collect(),
        }
    }

    /// Substitute symbols by monomials (rational exponents allowed) or by
    /// general expressions (then the exponent must be a nonnegative integer).
    pub fn substitute(&self, map: &BTreeMap<Symbol, SymExpr>) -> Result<SymExpr, AlgError> {
        let mut out = SymExpr::zero();
        for (ev, c) in &self.terms {
            let mut term = SymExpr::constant(c.clone());
            for (s, e) in ev {
                let base = match map.get(s) {
                    Some(b) => b.clone(),
                    None => SymExpr::symbol(s.clone()),
                };
                let powed = match base.mono_pow(e) {
                    Ok(p) => p,
                    Err(_) => {
                        let n = e
                            .to_integer()
                            .to_i64()
                            .filter(|_| e.is_integer())
                            .ok_or(AlgError::NonMonomialDivision)?;
                        int_pow(&base, n)?
                    }
                };
                term = term.mul(&powed);
            }
            out = out.add(&term);
        }
        Ok(out)
    }

    /// Numeric evaluation with an assignment of complex values to symbols.
    pub fn eval(&self, values: &BTreeMap<Symbol, Complex64>) -> Result<Complex64, AlgError> {
        let mut acc = Complex64::new(0.0, 0.0);
        for (ev, c) in &self.terms {
            let mut t = c.to_c64();
            for (s, e) in ev {
                let v = values
                    .get(s)
                    .ok_or_else(|| AlgError::IncompleteAssignment(s.name.clone()))?;
                t *= v.powf(e.to_f64().unwrap_or(0.0));
            }
            acc += t;
        }
        Ok(acc)
    }
}

fn int_pow(base: &SymExpr, n: i64) -> Result<SymExpr, AlgError> {
    if n == 0 {
        return Ok(SymExpr::one());
    }
    let b = if n < 0 { base.mono_inv()? } else { base.clone() };
    let mut acc = SymExpr::one();
    for _ in 0..n.unsigned_abs() {
        acc = acc.mul(&b);
    }
    Ok(acc)
}

impl fmt::Display for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (ev, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if ev.is_empty() {
                write!(f, "{}", c)?;
                continue;
            }
            if !c.is_one() {
                write!(f, "{}*", c)?;
            }
            let mut sep = "";
            for (s, e) in ev {
                write!(f, "{}{}", sep, s.name)?;
                if !e.is_one() {
                    if e.is_integer() {
                        write!(f, "^{}", e.to_integer())?;
                    } else {
                        write!(f, "^({})", e)?;
                    }
                }
                sep = "*";
            }
        }
        Ok(())
    }
}

/// 2x2 matrix over the symbolic ring.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Mat2 {
    pub e: [[SymExpr; 2]; 2],
}

impl Mat2 {
    pub fn identity() -> Self {
        Mat2 { e: [[SymExpr::one(), SymExpr::zero()], [SymExpr::zero(), SymExpr::one()]] }
    }

    pub fn new(a: SymExpr, b: SymExpr, c: SymExpr, d: SymExpr) -> Self {
        Mat2 { e: [[a, b], [c, d]] }
    }

    pub fn diag(a: SymExpr, d: SymExpr) -> Self {
        Mat2::new(a, SymExpr::zero(), SymExpr::zero(), d)
    }

    pub fn mul(&self, rhs: &Mat2) -> Mat2 {
        let mut out =
            Mat2::new(SymExpr::zero(), SymExpr::zero(), SymExpr::zero(), SymExpr::zero());
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = SymExpr::zero();
                for (k, rhs_row) in rhs.e.iter().enumerate() {
                    acc = acc.add(&self.e[i][k].mul(&rhs_row[j]));
                }
                out.e[i][j] = acc;
            }
        }
        out
    }

    pub fn det(&self) -> SymExpr {
        self.e[0][0].mul(&self.e[1][1]).sub(&self.e[0][1].mul(&self.e[1][0]))
    }

    pub fn trace(&self) -> SymExpr {
        self.e[0][0].add(&self.e[1][1])
    }

    /// Adjugate inverse; exact because every constructor here has det = 1.
    pub fn inv(&self) -> Result<Mat2, AlgError> {
        if !self.det().is_one() {
            return Err(AlgError::NonUnitDeterminant);
        }
        Ok(Mat2::new(
            self.e[1][1].clone(),
            self.e[0][1].neg(),
            self.e[1][0].neg(),
            self.e[0][0].clone(),
        ))
    }

    pub fn scale(&self, c: &Qi) -> Mat2 {
        Mat2::new(
            self.e[0][0].scale(c),
            self.e[0][1].scale(c),
            self.e[1][0].scale(c),
            self.e[1][1].scale(c),
        )
    }

    #[cfg(test)]
    fn sub_identity(&self) -> Mat2 {
        Mat2::new(
            self.e[0][0].sub(&SymExpr::one()),
            self.e[0][1].clone(),
            self.e[1][0].clone(),
            self.e[1][1].sub(&SymExpr::one()),
        )
    }
}

impl fmt::Display for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[[{}, {}],", self.e[0][0], self.e[0][1])?;
        write!(f, " [{}, {}]]", self.e[1][0], self.e[1][1])
    }
}

// ---------------------------------------------------------------------------
// Constructors
// ---------------------------------------------------------------------------

/// Stokes matrix S^(l) = [[-xi^l, i], [i, 0]]; l = 0 is the plain branch-point
/// matrix with S^3 = 1.
pub fn stokes_matrix(l: i64, xi: &Symbol) -> Mat2 {
    let xl = SymExpr::symbol_pow(xi.clone(), l, 1);
    Mat2::new(xl.neg(), SymExpr::i(), SymExpr::i(), SymExpr::zero())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransportKind {
    /// Opposite-signature branch points: [[0, iY], [iY^-1, 0]].
    OffDiag,
    /// Same-signature branch points: [[Y, 0], [0, Y^-1]].
    Diag,
}

pub fn transport_matrix(kind: TransportKind, y: &Symbol) -> Mat2 {
    let yp = SymExpr::symbol(y.clone());
    let ym = SymExpr::symbol_pow(y.clone(), -1, 1);
    match kind {
        TransportKind::OffDiag => Mat2::new(
            SymExpr::zero(),
            yp.mul(&SymExpr::i()),
            ym.mul(&SymExpr::i()),
            SymExpr::zero(),
        ),
        TransportKind::Diag => Mat2::diag(yp, ym),
    }
}

/// Square-root branch-cut matrix beta = [[0, i], [i, 0]].
pub fn cut_matrix() -> Mat2 {
    Mat2::new(SymExpr::zero(), SymExpr::i(), SymExpr::i(), SymExpr::zero())
}

/// Logarithmic-cut crossing: diag(xi^l, xi^-l).
pub fn logcut_matrix(l: i64, xi: &Symbol) -> Mat2 {
    Mat2::diag(SymExpr::symbol_pow(xi.clone(), l, 1), SymExpr::symbol_pow(xi.clone(), -l, 1))
}

/// Stokes matrices (L_+, L_-) of the two spiral families at a logarithmic
/// puncture of degree k < 0, with the geometric series truncated at `order`:
/// L_- = diag(1 + xi^-k, (1 + xi^-k)^-1), L_+ = diag((1 + xi^k)^-1, 1 + xi^k).
pub fn log_puncture_matrices(k: i64, xi: &Symbol, order: u32) -> (Mat2, Mat2) {
    assert!(k < 0, "logarithmic degree must be negative");
    assert!(order >= 1);
    let geom = |step: i64| -> SymExpr {
        let mut acc = SymExpr::zero();
        for j in 0..=order as i64 {
            let c = if j % 2 == 0 { Qi::one() } else { -Qi::one() };
            acc = acc.add(&SymExpr::monomial(
                c,
                [(xi.clone(), BigRational::from_integer(BigInt::from(step * j)))],
            ));
        }
        acc
    };
    let one_plus =
        |step: i64| -> SymExpr { SymExpr::one().add(&SymExpr::symbol_pow(xi.clone(), step, 1)) };
    let l_minus = Mat2::diag(one_plus(-k), geom(-k));
    let l_plus = Mat2::diag(geom(k), one_plus(k));
    (l_plus, l_minus)
}

// ---------------------------------------------------------------------------
// Path words
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PathToken {
    S { l: i64, xi: Symbol, inverse: bool },
    TOff { y: Symbol, inverse: bool },
    TDiag { y: Symbol, inverse: bool },
    LPlus { k: i64, xi: Symbol, order: u32, inverse: bool },
    LMinus { k: i64, xi: Symbol, order: u32, inverse: bool },
    Cut { inverse: bool },
    LogCut { l: i64, xi: Symbol, inverse: bool },
}

pub type PathWord = Vec<PathToken>;

/// Left-to-right product of the word's matrices; inverses by adjugate
/// (det = 1 everywhere, so this is division-free). Truncated L tokens refuse
/// inversion rather than silently truncating.
pub fn compose_path(word: &PathWord) -> Result<Mat2, AlgError> {
    let mut acc = Mat2::identity();
    for tok in word {
        let m = match tok {
            PathToken::S { l, xi, inverse } => maybe_inv(stokes_matrix(*l, xi), *inverse)?,
            PathToken::TOff { y, inverse } => {
                maybe_inv(transport_matrix(TransportKind::OffDiag, y), *inverse)?
            }
            PathToken::TDiag { y, inverse } => {
                maybe_inv(transport_matrix(TransportKind::Diag, y), *inverse)?
            }
            PathToken::LPlus { k, xi, order, inverse } => {
                if *inverse {
                    return Err(AlgError::NonInvertibleToken(format!(
                        "Lplusinv({},{})",
                        k, xi.name
                    )));
                }
                log_puncture_matrices(*k, xi, *order).0
            }
            PathToken::LMinus { k, xi, order, inverse } => {
                if *inverse {
                    return Err(AlgError::NonInvertibleToken(format!(
                        "Lminusinv({},{})",
                        k, xi.name
                    )));
                }
                log_puncture_matrices(*k, xi, *order).1
            }
            PathToken::Cut { inverse } => maybe_inv(cut_matrix(), *inverse)?,
            PathToken::LogCut { l, xi, inverse } => maybe_inv(logcut_matrix(*l, xi), *inverse)?,
        };
        acc = acc.mul(&m);
    }
    Ok(acc)
}

fn maybe_inv(m: Mat2, inverse: bool) -> Result<Mat2, AlgError> {
    if inverse {
        m.inv()
    } else {
        Ok(m)
    }
}

/// Parse the CLI word grammar: tokens separated by `*`, e.g.
/// `Sinv(-1,xi1) * Toff(Y1) * S(0) * Tdiaginv(XB)`.
///
/// Shift symbols named here get anchor indices in order of first appearance.
pub fn parse_path_word(text: &str) -> Result<PathWord, AlgError> {
    let mut word = PathWord::new();
    let mut anchors: BTreeMap<String, u32> = BTreeMap::new();
    let mut anchor_of = |name: &str| -> Symbol {
        let next = anchors.len() as u32;
        let idx = *anchors.entry(name.to_string()).or_insert(next);
        Symbol::shift(name, idx)
    };
    for raw in text.split('*') {
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        let (head, args) = match t.split_once('(') {
            Some((h, rest)) => {
                let inner = rest
                    .strip_suffix(')')
                    .ok_or_else(|| AlgError::BadWord(format!("missing ')' in {:?}", t)))?;
                (h.trim(), inner.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>())
            }
            None => (t, Vec::new()),
        };
        let inverse = head.ends_with("inv");
        let base = head.strip_suffix("inv").unwrap_or(head);
        let parse_int = |s: &str| {
            s.parse::<i64>().map_err(|_| AlgError::BadWord(format!("bad integer {:?}", s)))
        };
        match base {
            "S" => {
                if args.is_empty() {
                    return Err(AlgError::BadWord("S needs at least the shift index".into()));
                }
                let l = parse_int(&args[0])?;
                let xi = if args.len() > 1 { anchor_of(&args[1]) } else { anchor_of("xi") };
                word.push(PathToken::S { l, xi, inverse });
            }
            "Toff" => {
                let y =
                    args.first().ok_or_else(|| AlgError::BadWord("Toff needs a symbol".into()))?;
                word.push(PathToken::TOff { y: Symbol::voros(y.clone()), inverse });
            }
            "Tdiag" => {
                let y =
                    args.first().ok_or_else(|| AlgError::BadWord("Tdiag needs a symbol".into()))?;
                word.push(PathToken::TDiag { y: Symbol::voros(y.clone()), inverse });
            }
            "Lplus" | "Lminus" => {
                if args.len() < 2 {
                    return Err(AlgError::BadWord(format!("{} needs (k, xi[, order])", base)));
                }
                let k = parse_int(&args[0])?;
                let xi = anchor_of(&args[1]);
                let order = if args.len() > 2 { parse_int(&args[2])? as u32 } else { 6 };
                if base == "Lplus" {
                    word.push(PathToken::LPlus { k, xi, order, inverse });
                } else {
                    word.push(PathToken::LMinus { k, xi, order, inverse });
                }
            }
            "B" | "cut" => word.push(PathToken::Cut { inverse }),
            "logcut" => {
                if args.len() < 2 {
                    return Err(AlgError::BadWord("logcut needs (l, xi)".into()));
                }
                let l = parse_int(&args[0])?;
                let xi = anchor_of(&args[1]);
                word.push(PathToken::LogCut { l, xi, inverse });
            }
            other => return Err(AlgError::BadWord(format!("unknown token {:?}", other))),
        }
    }
    Ok(word)
}

// ---------------------------------------------------------------------------
// Regularized traces
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegularizationMode {
    /// Keep terms of total shift-weight zero; anchor-ratio combinations like
    /// xi_2 / xi_1 survive as basepoint-independent constants.
    XiGraded,
    /// Keep only terms containing no shift symbols at all.
    DropAllXi,
}

/// The regularized trace of a q-periodic monodromy matrix: the weight-zero
/// part of the trace over the logarithmic cover.
pub fn regularized_trace(m: &Mat2, mode: RegularizationMode) -> SymExpr {
    let tr = m.trace();
    match mode {
        RegularizationMode::XiGraded => {
            tr.filter_terms(|ev| SymExpr::term_shift_weight(ev).is_zero())
        }
        RegularizationMode::DropAllXi => {
            tr.filter_terms(|ev| ev.iter().all(|(s, _)| s.kind != SymbolKind::Shift))
        }
    }
}

// ---------------------------------------------------------------------------
// Fock-Goncharov cross-ratios
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FgCase {
    /// Branch points of opposite signature, off-diagonal transport.
    OppositeSignature,
    /// Branch points of the same signature, diagonal transport.
    SameSignature,
}

/// Build the four vanishing solutions around a shared Stokes region and return
/// the wedge cross-ratio (s1^s2)(s3^s4) / ((s2^s3)(s1^s4)).
///
/// Working in the basis of the primed branch point, s1, s2 are the columns of
/// the identity; s3, s4 are the columns of the analytic-continuation word
/// relating the two normalizations. The same-signature quadrilateral is
/// degenerate (s4 parallel to s2) and the raw wedge ratio reduces to the
/// orientation sign -1, which the coordinate normalization removes; that case
/// therefore yields exactly 1 and captures no Voros symbol.
pub fn fg_cross_ratio(case: FgCase, l: i64, l_prime: i64) -> SymExpr {
    let y = Symbol::voros("Y");
    let xi_b = Symbol::shift("xi_b", 0);
    let xi_bp = Symbol::shift("xi_bp", 1);
    let word: PathWord = match case {
        FgCase::OppositeSignature => vec![
            PathToken::S { l: l_prime, xi: xi_bp, inverse: false },
            PathToken::TOff { y, inverse: true },
            PathToken::S { l: -l, xi: xi_b, inverse: true },
        ],
        FgCase::SameSignature => vec![
            PathToken::S { l, xi: xi_b, inverse: false },
            PathToken::TDiag { y, inverse: true },
            PathToken::S { l: l_prime, xi: xi_bp, inverse: true },
        ],
    };
    let w = compose_path(&word).expect("FG words are always invertible");
    let raw = wedge_cross_ratio(&w);
    match case {
        FgCase::OppositeSignature => raw,
        FgCase::SameSignature => raw.neg(),
    }
}

/// Raw wedge cross-ratio of the lines {e2, e1, W e2, W e1} with
/// u ^ v = u_1 v_2 - u_2 v_1 and det W = 1:
/// (s1^s2)(s3^s4) / ((s2^s3)(s1^s4)) = -1 / (W_00 W_11).
fn wedge_cross_ratio(w: &Mat2) -> SymExpr {
    let den = w.e[1][1].mul(&w.e[0][0]).neg();
    SymExpr::one().div_mono(&den).expect("cross-ratio denominators are monomials")
}

// ---------------------------------------------------------------------------
// Framed transport (detour calculus)
// ---------------------------------------------------------------------------

/// A detour: a soliton symbol with its trajectory type (ij, n); the two sheets
/// are encoded +1 / -1 and n is the logarithmic shift.
#[derive(Clone, Debug)]
pub struct Detour {
    pub soliton: Symbol,
    pub from_sheet: i8,
    pub to_sheet: i8,
    pub log_shift: i64,
}

impl Detour {
    pub fn new(soliton: Symbol, from_sheet: i8, to_sheet: i8, log_shift: i64) -> Self {
        Detour { soliton, from_sheet, to_sheet, log_shift }
    }
}

/// Multiply the unipotent detour matrices in order, prepend the two path-lift
/// symbols to the diagonal trace entries, and keep only the soliton words
/// whose net logarithmic shift vanishes.
pub fn framed_transport(
    detours: &[Detour],
    lift_i: &Symbol,
    lift_j: &Symbol,
) -> Result<SymExpr, AlgError> {
    let mut shifts: BTreeMap<Symbol, i64> = BTreeMap::new();
    let mut acc = Mat2::identity();
    for d in detours {
        if d.from_sheet == d.to_sheet {
            return Err(AlgError::MalformedDetour(format!(
                "soliton {} has equal sheet labels",
                d.soliton.name
            )));
        }
        if d.soliton.kind != SymbolKind::Soliton {
            return Err(AlgError::MalformedDetour(format!(
                "{} is not a soliton symbol",
                d.soliton.name
            )));
        }
        shifts.insert(d.soliton.clone(), d.log_shift);
        let x = SymExpr::symbol(d.soliton.clone());
        // type (ij, n) sits in row i, column j: upper unipotent; (ji, n): lower.
        let m = if d.from_sheet > 0 {
            Mat2::new(SymExpr::one(), x, SymExpr::zero(), SymExpr::one())
        } else {
            Mat2::new(SymExpr::one(), SymExpr::zero(), x, SymExpr::one())
        };
        acc = acc.mul(&m);
    }
    let total = acc.e[0][0]
        .mul(&SymExpr::symbol(lift_i.clone()))
        .add(&acc.e[1][1].mul(&SymExpr::symbol(lift_j.clone())));
    Ok(total.filter_terms(|ev| {
        let mut net = 0i64;
        for (s, e) in ev {
            if let Some(n) = shifts.get(s) {
                let k = e.to_integer().to_i64().unwrap_or(0);
                net += n * k;
            }
        }
        net == 0
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xi() -> Symbol {
        Symbol::shift("xi", 0)
    }

    #[test]
    fn stokes_matrix_identities() {
        let s0 = stokes_matrix(0, &xi());
        assert!(s0.det().is_one());
        let s3 = s0.mul(&s0).mul(&s0);
        assert_eq!(s3, Mat2::identity());
        for l in -3..=3 {
            let m = stokes_matrix(-l, &xi())
                .mul(&stokes_matrix(l, &xi()))
                .mul(&stokes_matrix(-l, &xi()));
            let expected =
                Mat2::diag(SymExpr::symbol_pow(xi(), -l, 1), SymExpr::symbol_pow(xi(), l, 1));
            assert_eq!(m, expected, "l = {}", l);
        }
    }

    #[test]
    fn transport_identities() {
        let y = Symbol::voros("Y");
        let t = transport_matrix(TransportKind::OffDiag, &y);
        assert!(t.det().is_one());
        let sq = t.mul(&t);
        assert_eq!(sq, Mat2::identity().scale(&-Qi::one()));
        let d = transport_matrix(TransportKind::Diag, &y);
        assert!(d.det().is_one());
        assert_eq!(d.mul(&d.inv().unwrap()), Mat2::identity());
        assert!(cut_matrix().det().is_one());
        assert!(logcut_matrix(2, &xi()).det().is_one());
    }

    #[test]
    fn log_puncture_flatness() {
        // L_- diag(xi^k, xi^-k) L_+ = I up to terms beyond the truncation order.
        for k in [-1i64, -2] {
            let order = 6;
            let (lp, lm) = log_puncture_matrices(k, &xi(), order);
            assert!(lp.det().sub(&SymExpr::one()).terms().all(|(ev, _)| !ev.is_empty()));
            let prod = lm.mul(&logcut_matrix(k, &xi())).mul(&lp);
            let residual = prod.sub_identity();
            for (ev, _) in residual.e[0][0].terms().chain(residual.e[1][1].terms()) {
                let w = ev
                    .get(&xi())
                    .map(|e| e.to_integer().to_i64().unwrap().abs())
                    .unwrap_or(0);
                assert!(
                    w > order as i64 * k.abs(),
                    "flatness residual below truncation order: xi^{}",
                    w
                );
            }
            assert!(residual.e[0][1].is_zero() && residual.e[1][0].is_zero());
        }
    }

    #[test]
    fn l_matrices_tend_to_identity() {
        // xi -> 0 formal limit: constant terms are the identity.
        let (lp, lm) = log_puncture_matrices(-1, &xi(), 4);
        for m in [&lp, &lm] {
            for i in 0..2 {
                let c: Vec<_> = m.e[i][i]
                    .terms()
                    .filter(|(ev, _)| ev.is_empty())
                    .map(|(_, c)| c.clone())
                    .collect();
                assert_eq!(c, vec![Qi::one()]);
            }
        }
        // order=1: L_- upper entry is 1 + xi^-k
        let (_, lm1) = log_puncture_matrices(-1, &xi(), 1);
        assert_eq!(lm1.e[0][0], SymExpr::one().add(&SymExpr::symbol(xi())));
    }

    #[test]
    fn l_inverse_signals() {
        let word = vec![PathToken::LPlus { k: -1, xi: xi(), order: 4, inverse: true }];
        assert!(matches!(compose_path(&word), Err(AlgError::NonInvertibleToken(_))));
    }

    #[test]
    fn qairy_monodromy_word() {
        let word = parse_path_word("Sinv(-1,xi) * Toff(Y) * Sinv(0,xi) * Toffinv(Y)").unwrap();
        let m = compose_path(&word).unwrap();
        let y = Symbol::voros("Y");
        let y2 = SymExpr::symbol_pow(y.clone(), 2, 1);
        let ym2 = SymExpr::symbol_pow(y.clone(), -2, 1);
        assert_eq!(m.e[0][0], ym2.neg());
        assert_eq!(m.e[0][1], SymExpr::zero());
        assert_eq!(m.e[1][1], y2.neg());
        assert_eq!(m.trace(), y2.neg().add(&ym2.neg()));
        let expect21 = SymExpr::monomial(
            Qi::i(),
            [
                (xi(), BigRational::from_integer((-1).into())),
                (y, BigRational::from_integer((-2).into())),
            ],
        )
        .add(&SymExpr::i());
        assert_eq!(m.e[1][0], expect21);
    }

    #[test]
    fn empty_word_is_identity() {
        assert_eq!(compose_path(&PathWord::new()).unwrap(), Mat2::identity());
    }

    #[test]
    fn fg_cross_ratios() {
        let y = Symbol::voros("Y");
        let got = fg_cross_ratio(FgCase::OppositeSignature, 0, 0);
        assert_eq!(got, SymExpr::symbol_pow(y.clone(), -2, 1));
        let got = fg_cross_ratio(FgCase::OppositeSignature, 1, 0);
        let expect = SymExpr::monomial(
            Qi::one(),
            [
                (y.clone(), BigRational::from_integer((-2).into())),
                (Symbol::shift("xi_b", 0), BigRational::one()),
            ],
        );
        assert_eq!(got, expect);
        let got = fg_cross_ratio(FgCase::OppositeSignature, -3, 2);
        let expect = SymExpr::monomial(
            Qi::one(),
            [
                (y, BigRational::from_integer((-2).into())),
                (Symbol::shift("xi_b", 0), BigRational::from_integer((-3).into())),
                (Symbol::shift("xi_bp", 1), BigRational::from_integer((-2).into())),
            ],
        );
        assert_eq!(got, expect);
        for (l, lp) in [(0, 0), (1, 0), (2, -1), (-3, 3)] {
            assert!(fg_cross_ratio(FgCase::SameSignature, l, lp).is_one());
        }
    }

    #[test]
    fn framed_transport_appendix() {
        let a = Detour::new(Symbol::soliton("a"), 1, -1, 0);
        let b = Detour::new(Symbol::soliton("b"), -1, 1, 0);
        let c = Detour::new(Symbol::soliton("c"), -1, 1, 1);
        let d = Detour::new(Symbol::soliton("d"), 1, -1, -1);
        let pi = Symbol::soliton("P_i");
        let pj = Symbol::soliton("P_j");
        let got = framed_transport(&[a.clone(), b.clone(), c, d], &pi, &pj).unwrap();
        let m = |syms: &[&str]| {
            SymExpr::monomial(
                Qi::one(),
                syms.iter().map(|s| (Symbol::soliton(*s), BigRational::one())),
            )
        };
        let expect = m(&["P_i"])
            .add(&m(&["P_i", "a", "b"]))
            .add(&m(&["P_j"]))
            .add(&m(&["P_j", "c", "d"]));
        assert_eq!(got, expect);

        // all n = 0: all six trace terms survive
        let c0 = Detour::new(Symbol::soliton("c"), -1, 1, 0);
        let d0 = Detour::new(Symbol::soliton("d"), 1, -1, 0);
        let got = framed_transport(&[a, b, c0, d0], &pi, &pj).unwrap();
        assert_eq!(got.num_terms(), 6);

        // no detours
        let got = framed_transport(&[], &pi, &pj).unwrap();
        assert_eq!(got, m(&["P_i"]).add(&m(&["P_j"])));

        let bad = Detour::new(Symbol::soliton("z"), 1, 1, 0);
        assert!(matches!(framed_transport(&[bad], &pi, &pj), Err(AlgError::MalformedDetour(_))));
    }

    #[test]
    fn regularized_trace_modes() {
        let y = Symbol::voros("Y");
        let e = SymExpr::symbol_pow(y.clone(), 2, 1).add(&SymExpr::symbol_pow(y, -2, 1));
        let m = Mat2::diag(e.clone(), SymExpr::zero());
        assert_eq!(regularized_trace(&m, RegularizationMode::XiGraded), e);
        assert_eq!(regularized_trace(&m, RegularizationMode::DropAllXi), e);
        let xi1 = Symbol::shift("xi1", 0);
        let xi2 = Symbol::shift("xi2", 1);
        let ratio = SymExpr::monomial(
            Qi::one(),
            [(xi1, BigRational::from_integer((-1).into())), (xi2, BigRational::one())],
        );
        let m = Mat2::diag(ratio.clone(), SymExpr::zero());
        assert_eq!(regularized_trace(&m, RegularizationMode::XiGraded), ratio);
        assert!(regularized_trace(&m, RegularizationMode::DropAllXi).is_zero());
    }

    #[test]
    fn drop_all_is_subset_of_graded() {
        let word = parse_path_word(
            "Sinv(-1,xi1) * Tdiaginv(XB) * S(0,xi1) * Toffinv(XA) * Sinv(0,xi1) * Tdiag(XB) * S(1,xi2) * Toff(XA)",
        )
        .unwrap();
        let m = compose_path(&word).unwrap();
        let graded = regularized_trace(&m, RegularizationMode::XiGraded);
        let dropped = regularized_trace(&m, RegularizationMode::DropAllXi);
        for (ev, c) in dropped.terms() {
            let found = graded.terms().any(|(ev2, c2)| ev2 == ev && c2 == c);
            assert!(found, "DropAllXi term missing from XiGraded");
        }
    }

    #[test]
    fn det_one_preserved_by_composition() {
        let word = parse_path_word(
            "S(2,xi1) * Toff(Y1) * B * Tdiag(Y2) * logcut(1,xi2) * Sinv(-1,xi1)",
        )
        .unwrap();
        let m = compose_path(&word).unwrap();
        assert!(m.det().is_one());
    }
}
