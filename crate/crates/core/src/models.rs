//! Curated constructors for the four worked equations: model data, frozen
//! monodromy path words, expected closed-form answers, and charge
//! identifications. The path words are fixtures transcribed from the matrix
//! products of the worked examples, not derived from graph geometry.

use std::collections::BTreeMap;
use std::ops::Mul as _;

use num::bigint::BigInt;
use num::complex::Complex64;
use num::rational::BigRational;
use num::traits::{One, Zero};
use thiserror::Error;

use crate::curve::QdeModel;
use crate::exact::{LaurentPoly, Qi};
use crate::stokesalg::{
    compose_path, parse_path_word, regularized_trace, Mat2, PathWord, RegularizationMode, SymExpr,
    Symbol,
};

#[derive(Debug, Error)]
pub enum ModelsError {
    #[error("unknown builtin model {0:?}")]
    UnknownModel(String),
    #[error("degenerate moduli: {0}")]
    DegenerateModuli(String),
    #[error("charge assignment incomplete: no solution for term {0}")]
    NoChargeSolution(String),
    #[error(transparent)]
    Alg(#[from] crate::stokesalg::AlgError),
}

/// Everything the acceptance machinery needs for one worked model.
pub struct ModelBundle {
    pub model: QdeModel,
    /// name -> frozen path word.
    pub paths: BTreeMap<String, PathWord>,
    /// name -> regularization mode used for this path's trace.
    pub modes: BTreeMap<String, RegularizationMode>,
    /// name -> expected full monodromy matrix (where the worked example
    /// displays one).
    pub expected_matrix: BTreeMap<String, Mat2>,
    /// name -> expected regularized trace.
    pub expected_trace: BTreeMap<String, SymExpr>,
    /// Charge dictionary: basis charge symbol -> monomial in Voros/shift/
    /// charge symbols.
    pub charge_dictionary: Vec<(Symbol, SymExpr)>,
    /// Optional numeric identifications at hbar = 1 (e.g. Y^2 = -e^{-pi^2}).
    pub numeric_closure: BTreeMap<Symbol, Complex64>,
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn mono(pairs: &[(Symbol, (i64, i64))]) -> SymExpr {
    SymExpr::monomial(Qi::one(), pairs.iter().map(|(s, (n, d))| (s.clone(), rat(*n, *d))))
}

fn y(name: &str) -> Symbol {
    Symbol::voros(name)
}

fn xi(name: &str, anchor: u32) -> Symbol {
    Symbol::shift(name, anchor)
}

/// Build one of the named models. Parameters default to the worked values:
/// qairy_kappa(kappa = 1/2), qhyper(Q = 200/97), qmathieu(kappa = 3i/100,
/// tau = 97/100).
pub fn builtin(name: &str, params: &BTreeMap<String, Qi>) -> Result<ModelBundle, ModelsError> {
    match name {
        "qairy" => Ok(qairy_bundle()),
        "qairy_kappa" => {
            let kappa = params.get("kappa").cloned().unwrap_or_else(|| Qi::from_ratio(1, 2));
            qairy_kappa_bundle(kappa)
        }
        "qhyper" => {
            let q_param = params.get("Q").cloned().unwrap_or_else(|| Qi::from_ratio(200, 97));
            qhyper_bundle(q_param)
        }
        "qmathieu" => {
            let kappa =
                params.get("kappa").cloned().unwrap_or_else(|| Qi::from_parts(0, 1, 3, 100));
            let tau = params.get("tau").cloned().unwrap_or_else(|| Qi::from_ratio(97, 100));
            qmathieu_bundle(kappa, tau)
        }
        "qramanujan" => Ok(qramanujan_bundle()),
        other => Err(ModelsError::UnknownModel(other.to_string())),
    }
}

pub fn builtin_names() -> &'static [&'static str] {
    &["qairy", "qairy_kappa", "qhyper", "qmathieu", "qramanujan"]
}

fn qairy_bundle() -> ModelBundle {
    let mut model = QdeModel::new("qairy", 1, vec![LaurentPoly::x()]);
    model.symmetries = vec![crate::curve::ModelSymmetry::NegateW];
    // Log cut from infinity encircles the branch point at w = -1 (index 0 in
    // sorted order), matching the worked Stokes graph.
    model.log_cut_pairing.insert("infinity".into(), 0);

    let word = parse_path_word("Sinv(-1,xi1) * Toff(Y) * Sinv(0,xi1) * Toffinv(Y)").unwrap();
    let yy = y("Y");
    let x1 = xi("xi1", 0);
    let y2 = mono(&[(yy.clone(), (2, 1))]);
    let ym2 = mono(&[(yy.clone(), (-2, 1))]);
    let m21 = SymExpr::monomial(
        Qi::i(),
        [(x1.clone(), rat(-1, 1)), (yy.clone(), rat(-2, 1))],
    )
    .add(&SymExpr::i());
    let expected = Mat2::new(ym2.neg(), SymExpr::zero(), m21, y2.neg());
    let trace = y2.neg().add(&ym2.neg());

    let mut numeric = BTreeMap::new();
    // Y^2 = -e^{-pi^2} at hbar = 1.
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    numeric.insert(yy.clone(), Complex64::new(0.0, (-pi2 / 2.0).exp()));

    // tr M = X_{D0bar}^{1/4} + X_{D0}^{1/4} with X_D0 = (-Y^2)^4 = Y^8.
    let d0 = Symbol::charge("X_D0");
    let charge_dictionary = vec![(d0, mono(&[(yy, (8, 1))]))];

    ModelBundle {
        model,
        paths: [("full_loop".to_string(), word)].into(),
        modes: [("full_loop".to_string(), RegularizationMode::XiGraded)].into(),
        expected_matrix: [("full_loop".to_string(), expected)].into(),
        expected_trace: [("full_loop".to_string(), trace)].into(),
        charge_dictionary,
        numeric_closure: numeric,
    }
}

fn qairy_kappa_bundle(kappa: Qi) -> Result<ModelBundle, ModelsError> {
    // T0 = kappa + x; kappa = +/-1 collides a branch point with the origin.
    let k2 = (&kappa).mul(&kappa);
    if (k2.clone() - Qi::one()).is_zero() {
        return Err(ModelsError::DegenerateModuli(
            "kappa = +/-1 collides a branch point with the puncture at the origin".into(),
        ));
    }
    let t0 = LaurentPoly::from_terms([(0, kappa.clone()), (1, Qi::one())]);
    let mut model = QdeModel::new("qairy_kappa", 1, vec![t0]);
    model.parameters.insert("kappa".into(), kappa);
    model.log_cut_pairing.insert("infinity".into(), 0);

    let word = parse_path_word("Sinv(-1,xi1) * Toff(Y1) * Sinv(0,xi1) * Toffinv(Y2)").unwrap();
    let y1 = y("Y1");
    let y2s = y("Y2");
    let prod = mono(&[(y1.clone(), (1, 1)), (y2s.clone(), (1, 1))]);
    let prod_inv = mono(&[(y1, (-1, 1)), (y2s, (-1, 1))]);
    let trace = prod.neg().add(&prod_inv.neg());

    Ok(ModelBundle {
        model,
        paths: [("full_loop".to_string(), word)].into(),
        modes: [("full_loop".to_string(), RegularizationMode::XiGraded)].into(),
        expected_matrix: BTreeMap::new(),
        expected_trace: [("full_loop".to_string(), trace)].into(),
        charge_dictionary: Vec::new(),
        numeric_closure: BTreeMap::new(),
    })
}

/// Default hbar-order kept for the q-hypergeometric trace coefficients, which
/// carry the explicit q^-1 of the involutive reduction to all orders.
const QHYPER_TRACE_ORDER: usize = 10;

fn qhyper_bundle(q_param: Qi) -> Result<ModelBundle, ModelsError> {
    if q_param.is_zero() {
        return Err(ModelsError::DegenerateModuli("Q must be nonzero".into()));
    }
    let q_inv = q_param.inv();
    // On the double cover x = w^2: T(w, q) = Q^-1 (q^-1 w + w^-1), so
    // T_0 = Q^-1 (w + 1/w) and T_k = Q^-1 (-1)^k / k! w for k >= 1.
    let mut coeffs =
        vec![LaurentPoly::from_terms([(1, q_inv.clone()), (-1, q_inv.clone())])];
    let mut fact = BigRational::one();
    for k in 1..=QHYPER_TRACE_ORDER {
        fact *= rat(k as i64, 1);
        let sign = if k % 2 == 0 { 1 } else { -1 };
        let c = (&q_inv).mul(&Qi::new(rat(sign, 1) / fact.clone(), BigRational::zero()));
        coeffs.push(LaurentPoly::monomial(1, c));
    }
    let mut model = QdeModel::new("qhyper", 2, coeffs);
    model.parameters.insert("Q".into(), q_param);
    model.symmetries =
        vec![crate::curve::ModelSymmetry::NegateW, crate::curve::ModelSymmetry::InvertW];
    // Log cuts along the negative real axis: origin pairs with the inner-left
    // branch point, infinity with the outer-left one (indices in sorted order).
    model.log_cut_pairing.insert("origin".into(), 1);
    model.log_cut_pairing.insert("infinity".into(), 0);

    let full = parse_path_word(
        "Sinv(-1,xi1) * Tdiaginv(XB) * S(0,xi1) * Toffinv(XA) * Sinv(0,xi1) * Tdiag(XB) * S(1,xi2) * Toff(XA)",
    )
    .unwrap();
    let half = parse_path_word("Sinv(-1,xi1) * Tdiaginv(XB) * S(0,xi1) * Toffinv(XA)").unwrap();

    let xa = y("XA");
    let xb = y("XB");
    let full_expected = mono(&[(xb.clone(), (2, 1))])
        .add(&mono(&[(xb.clone(), (-2, 1))]))
        .add(&mono(&[(xa.clone(), (2, 1)), (xb.clone(), (-2, 1))]));
    let half_expected = mono(&[(xa.clone(), (1, 1)), (xb.clone(), (-1, 1))]);

    // Charge dictionary with gamma_1 + gamma_2 = 4(log XA - log XB), so the
    // half monodromy is (X_{gamma_1 + gamma_2})^{1/4}.
    let g1 = Symbol::charge("X_g1");
    let g2 = Symbol::charge("X_g2");
    let charge_dictionary = vec![
        (g1, mono(&[(xa.clone(), (2, 1)), (xb.clone(), (-4, 1))])),
        (g2, mono(&[(xa, (2, 1))])),
    ];

    Ok(ModelBundle {
        model,
        paths: [("full_loop".to_string(), full), ("half_loop".to_string(), half)].into(),
        modes: [
            ("full_loop".to_string(), RegularizationMode::DropAllXi),
            ("half_loop".to_string(), RegularizationMode::DropAllXi),
        ]
        .into(),
        expected_matrix: BTreeMap::new(),
        expected_trace: [
            ("full_loop".to_string(), full_expected),
            ("half_loop".to_string(), half_expected),
        ]
        .into(),
        charge_dictionary,
        numeric_closure: BTreeMap::new(),
    })
}

fn qmathieu_bundle(kappa: Qi, tau: Qi) -> Result<ModelBundle, ModelsError> {
    if tau.is_zero() {
        return Err(ModelsError::DegenerateModuli("tau must be nonzero".into()));
    }
    // T0 = (kappa - tau (x + 1/x)) / 2
    let half = Qi::from_ratio(1, 2);
    let mt2 = (&tau).mul(&Qi::from_ratio(-1, 2));
    let t0 = LaurentPoly::from_terms([
        (0, (&kappa).mul(&half)),
        (1, mt2.clone()),
        (-1, mt2),
    ]);
    let mut model = QdeModel::new("qmathieu", 1, vec![t0]);
    model.parameters.insert("kappa".into(), kappa.clone());
    model.parameters.insert("tau".into(), tau.clone());
    model.symmetries = vec![crate::curve::ModelSymmetry::InvertW];

    // x1, x2 = (kappa - 2 -/+ sqrt((kappa-2)^2 - 4 tau^2)) / (2 tau): the two
    // T0 = +1 roots, encircled by the log cuts from infinity and the origin.
    let km2 = kappa.to_c64() - Complex64::new(2.0, 0.0);
    let disc = (km2 * km2 - 4.0 * tau.to_c64() * tau.to_c64()).sqrt();
    let x1 = (km2 - disc) / (2.0 * tau.to_c64());
    let x2 = (km2 + disc) / (2.0 * tau.to_c64());
    let bps = crate::curve::branch_points(&model)
        .map_err(|e| ModelsError::DegenerateModuli(e.to_string()))?;
    let idx_of = |target: Complex64| -> usize {
        let mut best = 0;
        for (i, b) in bps.iter().enumerate() {
            if (b.pos() - target).norm() < (bps[best].pos() - target).norm() {
                best = i;
            }
        }
        best
    };
    model.log_cut_pairing.insert("infinity".into(), idx_of(x1));
    model.log_cut_pairing.insert("origin".into(), idx_of(x2));

    let word = parse_path_word(
        "Sinv(-1,xi1) * Tdiaginv(Y31) * S(0,xi1) * Toffinv(Y43) * Sinv(0,xi1) * Tdiag(Y42) * S(1,xi2) * Toff(Y21)",
    )
    .unwrap();
    let (y21, y31, y42, y43) = (y("Y21"), y("Y31"), y("Y42"), y("Y43"));
    let (x1s, x2s) = (xi("xi1", 0), xi("xi2", 1));
    // Y31 Y42 Y43 Y21 (x1/x2)^{2 pi i / hbar} + Y43 Y21 / (Y31 Y42)
    //   + Y21 / (Y31 Y42 Y43) + Y31 Y42 Y43 / Y21,
    // the anchor ratio realized as xi2/xi1.
    let term1 = mono(&[
        (y21.clone(), (1, 1)),
        (y31.clone(), (1, 1)),
        (y42.clone(), (1, 1)),
        (y43.clone(), (1, 1)),
        (x1s.clone(), (-1, 1)),
        (x2s.clone(), (1, 1)),
    ]);
    let term2 = mono(&[
        (y21.clone(), (1, 1)),
        (y43.clone(), (1, 1)),
        (y31.clone(), (-1, 1)),
        (y42.clone(), (-1, 1)),
    ]);
    let term3 = mono(&[
        (y21.clone(), (1, 1)),
        (y31.clone(), (-1, 1)),
        (y42.clone(), (-1, 1)),
        (y43.clone(), (-1, 1)),
    ]);
    let term4 = mono(&[
        (y21.clone(), (-1, 1)),
        (y31.clone(), (1, 1)),
        (y42.clone(), (1, 1)),
        (y43.clone(), (1, 1)),
    ]);
    let trace = term1.add(&term2).add(&term3).add(&term4);

    // Charge dictionary (basis gamma_1..gamma_4, X_D0 opaque):
    //   X_g1 = X_D0 Y31^-2 Y42^-2 Y43^-2 (xi1/xi2)
    //   X_g2 = Y21^2 (xi2/xi1)
    //   X_g3 = Y31^2 Y42^2 Y21^-2
    //   X_g4 = Y43^2
    // so that X_g1 X_g2 X_g3 X_g4 = X_D0 exactly.
    let d0 = Symbol::charge("X_D0");
    let g = |i: usize| Symbol::charge(format!("X_g{}", i));
    let dict1 = SymExpr::monomial(
        Qi::one(),
        [
            (d0.clone(), rat(1, 1)),
            (y31.clone(), rat(-2, 1)),
            (y42.clone(), rat(-2, 1)),
            (y43.clone(), rat(-2, 1)),
            (x1s.clone(), rat(1, 1)),
            (x2s.clone(), rat(-1, 1)),
        ],
    );
    let dict2 = mono(&[(y21.clone(), (2, 1)), (x1s, (-1, 1)), (x2s, (1, 1))]);
    let dict3 = mono(&[(y31, (2, 1)), (y42, (2, 1)), (y21, (-2, 1))]);
    let dict4 = mono(&[(y43, (2, 1))]);
    let charge_dictionary =
        vec![(g(1), dict1), (g(2), dict2), (g(3), dict3), (g(4), dict4)];

    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    let mut numeric = BTreeMap::new();
    numeric.insert(d0, Complex64::new((-4.0 * pi2).exp(), 0.0));

    Ok(ModelBundle {
        model,
        paths: [("full_loop".to_string(), word)].into(),
        modes: [("full_loop".to_string(), RegularizationMode::XiGraded)].into(),
        expected_matrix: BTreeMap::new(),
        expected_trace: [("full_loop".to_string(), trace)].into(),
        charge_dictionary,
        numeric_closure: numeric,
    })
}

/// The q-Ramanujan equation is the q-Airy curve after x -> x^-2, realized on
/// a double cover with T0 = 1/w. Alias model; the monodromy data is qairy's.
fn qramanujan_bundle() -> ModelBundle {
    let mut bundle = qairy_bundle();
    bundle.model = QdeModel::new("qramanujan", 2, vec![LaurentPoly::monomial(-1, Qi::one())]);
    bundle.model.log_cut_pairing.insert("origin".into(), 0);
    bundle
}

// ---------------------------------------------------------------------------
// Charge rewriting
// ---------------------------------------------------------------------------

/// Rewrite an expression in Voros/shift symbols into charge variables using
/// the bundle's dictionary: each input term must be a product of rational
/// powers of the dictionary monomials (solved exactly over Q).
pub fn charge_map(bundle: &ModelBundle, expr: &SymExpr) -> Result<SymExpr, ModelsError> {
    // Collect the generator set spanned by the dictionary targets.
    let mut gens: Vec<Symbol> = Vec::new();
    let mut gen_index = BTreeMap::new();
    let mut columns: Vec<Vec<BigRational>> = Vec::new();
    for (_, target) in &bundle.charge_dictionary {
        let (ev, c) = target
            .as_monomial()
            .ok_or_else(|| ModelsError::NoChargeSolution("dictionary entry not a monomial".into()))?;
        if !c.is_one() {
            return Err(ModelsError::NoChargeSolution(
                "dictionary coefficients must be 1".into(),
            ));
        }
        for s in ev.keys() {
            if !gen_index.contains_key(s) {
                gen_index.insert(s.clone(), gens.len());
                gens.push(s.clone());
            }
        }
    }
    for (_, target) in &bundle.charge_dictionary {
        let (ev, _) = target.as_monomial().unwrap();
        let mut col = vec![BigRational::zero(); gens.len()];
        for (s, e) in ev {
            col[gen_index[s]] = e.clone();
        }
        columns.push(col);
    }

    let mut out = SymExpr::zero();
    for (ev, coeff) in expr.terms() {
        // target exponent vector over the generators
        let mut rhs = vec![BigRational::zero(); gens.len()];
        for (s, e) in ev {
            match gen_index.get(s) {
                Some(&i) => rhs[i] = e.clone(),
                None => {
                    return Err(ModelsError::NoChargeSolution(format!(
                        "symbol {} not in dictionary span",
                        s.name
                    )))
                }
            }
        }
        let sol = solve_exact(&columns, &rhs).ok_or_else(|| {
            ModelsError::NoChargeSolution(format!("{:?}", ev.keys().collect::<Vec<_>>()))
        })?;
        let term = SymExpr::monomial(
            coeff.clone(),
            bundle
                .charge_dictionary
                .iter()
                .zip(sol.iter())
                .filter(|(_, a)| !a.is_zero())
                .map(|((sym, _), a)| (sym.clone(), a.clone())),
        );
        out = out.add(&term);
    }
    Ok(out)
}

/// Solve sum_j a_j col_j = rhs exactly over Q (least-degrees-of-freedom
/// solution via Gaussian elimination); None when inconsistent.
fn solve_exact(columns: &[Vec<BigRational>], rhs: &[BigRational]) -> Option<Vec<BigRational>> {
    let n_rows = rhs.len();
    let n_cols = columns.len();
    // augmented matrix rows x (cols + 1)
    let mut m: Vec<Vec<BigRational>> = (0..n_rows)
        .map(|r| {
            let mut row: Vec<BigRational> =
                columns.iter().map(|c| c[r].clone()).collect();
            row.push(rhs[r].clone());
            row
        })
        .collect();
    let mut pivot_cols = Vec::new();
    let mut row = 0;
    for col in 0..n_cols {
        let pivot = (row..n_rows).find(|&r| !m[r][col].is_zero());
        let Some(p) = pivot else { continue };
        m.swap(row, p);
        let scale = m[row][col].clone();
        for v in m[row].iter_mut() {
            *v /= scale.clone();
        }
        for r in 0..n_rows {
            if r != row && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c2 in 0..=n_cols {
                    let sub = &m[row][c2] * &f;
                    m[r][c2] -= sub;
                }
            }
        }
        pivot_cols.push(col);
        row += 1;
        if row == n_rows {
            break;
        }
    }
    // inconsistency check
    for r in row..n_rows {
        if m[r][..n_cols].iter().all(|v| v.is_zero()) && !m[r][n_cols].is_zero() {
            return None;
        }
    }
    let mut sol = vec![BigRational::zero(); n_cols];
    for (i, &c) in pivot_cols.iter().enumerate() {
        sol[c] = m[i][n_cols].clone();
    }
    Some(sol)
}

// ---------------------------------------------------------------------------
// Bundle verification
// ---------------------------------------------------------------------------

pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Run every frozen oracle of a bundle: path composition against expected
/// matrices and regularized traces, and the charge-map identities.
pub fn verify_bundle(bundle: &ModelBundle) -> Result<Vec<CheckOutcome>, ModelsError> {
    let mut out = Vec::new();
    for (name, word) in &bundle.paths {
        let m = compose_path(word)?;
        if let Some(expected) = bundle.expected_matrix.get(name) {
            let passed = &m == expected;
            out.push(CheckOutcome {
                name: format!("{}:matrix", name),
                passed,
                detail: if passed {
                    "matches".into()
                } else {
                    format!("expected {}\n got {}", expected, m)
                },
            });
        }
        if let Some(expected) = bundle.expected_trace.get(name) {
            let mode = bundle.modes[name];
            let got = regularized_trace(&m, mode);
            let passed = &got == expected;
            out.push(CheckOutcome {
                name: format!("{}:trace", name),
                passed,
                detail: if passed {
                    format!("{}", got)
                } else {
                    format!("expected {} got {}", expected, got)
                },
            });
        }
        let det_ok = m.det().is_one();
        out.push(CheckOutcome {
            name: format!("{}:det", name),
            passed: det_ok,
            detail: if det_ok { "det = 1".into() } else { format!("det = {}", m.det()) },
        });
    }
    // Charge identities where a dictionary exists.
    if !bundle.charge_dictionary.is_empty() {
        if let Some(expected) = bundle.expected_trace.get("full_loop") {
            let charges = charge_map(bundle, expected)?;
            let subs: BTreeMap<Symbol, SymExpr> =
                bundle.charge_dictionary.iter().cloned().collect();
            let back = charges.substitute(&subs)?;
            let passed = &back == expected;
            out.push(CheckOutcome {
                name: "charge_map:roundtrip".into(),
                passed,
                detail: if passed {
                    format!("{}", charges)
                } else {
                    format!("expected {} got {}", expected, back)
                },
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Degeneration chain between the models
// ---------------------------------------------------------------------------

/// qmathieu(2 kappa, tau) with x -> -2x/tau has T0 = kappa + x + (tau^2/4)/x;
/// the formal tau -> infinity limit drops the flavor term tau^2/(4x) and
/// leaves the qairy_kappa trace. Returns (max coefficient error on the common
/// support, the leftover exponents).
pub fn qmathieu_to_qairy_kappa_check(kappa: &Qi, tau: &Qi) -> (f64, Vec<i64>) {
    let two_kappa = kappa.mul(&Qi::from_int(2));
    let mt2 = tau.mul(&Qi::from_ratio(-1, 2));
    let t0_qm = LaurentPoly::from_terms([
        (0, (&two_kappa).mul(&Qi::from_ratio(1, 2))),
        (1, mt2.clone()),
        (-1, mt2),
    ]);
    // substitute x -> (-2/tau) x
    let c = (&Qi::from_int(-2)).mul(&tau.inv());
    let rescaled = t0_qm.substitute_scaled(&c);
    let target = LaurentPoly::from_terms([(0, kappa.clone()), (1, Qi::one())]);
    let mut err = 0.0f64;
    let mut leftover = Vec::new();
    for (e, coeff) in rescaled.terms() {
        if e == 0 || e == 1 {
            let want = target.coeff(e);
            err = err.max((coeff.clone() - want).to_c64().norm());
        } else {
            leftover.push(e);
        }
    }
    (err, leftover)
}

/// qhyper(Q) equals qmathieu(0, -2/Q) after the w-substitution, exactly at
/// the level of T0 coefficients.
pub fn qhyper_equals_qmathieu_check(q_param: &Qi) -> bool {
    let qh = builtin("qhyper", &[("Q".to_string(), q_param.clone())].into()).unwrap();
    let tau = (&Qi::from_int(-2)).mul(&q_param.inv());
    let qm = qmathieu_bundle(Qi::zero(), tau).unwrap();
    qh.model.t0() == qm.model.t0()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stokesalg::RegularizationMode;

    #[test]
    fn qairy_bundle_verifies() {
        let b = builtin("qairy", &BTreeMap::new()).unwrap();
        let checks = verify_bundle(&b).unwrap();
        for c in &checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn qairy_kappa_bundle_verifies() {
        let b = builtin("qairy_kappa", &BTreeMap::new()).unwrap();
        let checks = verify_bundle(&b).unwrap();
        for c in &checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
        // branch points at -kappa +/- 1 = {1/2, -3/2}
        let bps = crate::curve::branch_points(&b.model).unwrap();
        let mut re: Vec<f64> = bps.iter().map(|p| p.position[0]).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((re[0] + 1.5).abs() < 1e-12);
        assert!((re[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_moduli_rejected() {
        let mut p = BTreeMap::new();
        p.insert("kappa".to_string(), Qi::from_int(1));
        assert!(matches!(
            builtin("qairy_kappa", &p),
            Err(ModelsError::DegenerateModuli(_))
        ));
    }

    #[test]
    fn qhyper_bundle_verifies() {
        let b = builtin("qhyper", &BTreeMap::new()).unwrap();
        let checks = verify_bundle(&b).unwrap();
        for c in &checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn qhyper_half_monodromy_charge() {
        let b = builtin("qhyper", &BTreeMap::new()).unwrap();
        let half = b.expected_trace["half_loop"].clone();
        let charges = charge_map(&b, &half).unwrap();
        // X_A / X_B = (X_{g1+g2})^{1/4} = X_g1^{1/4} X_g2^{1/4}
        let expect = SymExpr::monomial(
            Qi::one(),
            [
                (Symbol::charge("X_g1"), rat(1, 4)),
                (Symbol::charge("X_g2"), rat(1, 4)),
            ],
        );
        assert_eq!(charges, expect);
    }

    #[test]
    fn qmathieu_bundle_verifies() {
        let b = builtin("qmathieu", &BTreeMap::new()).unwrap();
        let checks = verify_bundle(&b).unwrap();
        for c in &checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn qmathieu_charge_expression() {
        let b = builtin("qmathieu", &BTreeMap::new()).unwrap();
        let trace = b.expected_trace["full_loop"].clone();
        let charges = charge_map(&b, &trace).unwrap();
        // Expected lattice vectors with gamma_D0 = g1+g2+g3+g4 eliminated:
        //   1/2 (g3+g4), -1/2 (g3+g4), g2 + 1/2 (g3+g4), 1/2 (g4-g3)
        let g = |i: usize| Symbol::charge(format!("X_g{}", i));
        let expect = SymExpr::monomial(Qi::one(), [(g(3), rat(1, 2)), (g(4), rat(1, 2))])
            .add(&SymExpr::monomial(Qi::one(), [(g(3), rat(-1, 2)), (g(4), rat(-1, 2))]))
            .add(&SymExpr::monomial(
                Qi::one(),
                [(g(2), rat(1, 1)), (g(3), rat(1, 2)), (g(4), rat(1, 2))],
            ))
            .add(&SymExpr::monomial(Qi::one(), [(g(3), rat(-1, 2)), (g(4), rat(1, 2))]));
        assert_eq!(charges, expect);
    }

    #[test]
    fn qmathieu_d0_product_relation() {
        // X_g1 X_g2 X_g3 X_g4 expands to exactly X_D0 through the dictionary.
        let b = builtin("qmathieu", &BTreeMap::new()).unwrap();
        let subs: BTreeMap<Symbol, SymExpr> = b.charge_dictionary.iter().cloned().collect();
        let product = SymExpr::monomial(
            Qi::one(),
            (1..=4).map(|i| (Symbol::charge(format!("X_g{}", i)), BigRational::one())),
        );
        let expanded = product.substitute(&subs).unwrap();
        assert_eq!(expanded, SymExpr::symbol(Symbol::charge("X_D0")));
    }

    #[test]
    fn identity_assignment_is_noop() {
        // With the dictionary mapping each charge symbol to itself, charge_map
        // returns the input unchanged.
        let y21 = Symbol::charge("Y21");
        let y43 = Symbol::charge("Y43");
        let bundle = ModelBundle {
            model: QdeModel::new("x", 1, vec![LaurentPoly::x()]),
            paths: BTreeMap::new(),
            modes: BTreeMap::new(),
            expected_matrix: BTreeMap::new(),
            expected_trace: BTreeMap::new(),
            charge_dictionary: vec![
                (y21.clone(), SymExpr::symbol(y21.clone())),
                (y43.clone(), SymExpr::symbol(y43.clone())),
            ],
            numeric_closure: BTreeMap::new(),
        };
        let e = SymExpr::monomial(Qi::one(), [(y21, rat(2, 1)), (y43, rat(-1, 1))]);
        assert_eq!(charge_map(&bundle, &e).unwrap(), e);
    }

    #[test]
    fn degeneration_qmathieu_to_qairy_kappa() {
        let kappa = Qi::from_ratio(1, 2);
        let tau = Qi::from_int(1_000_000);
        let (err, leftover) = qmathieu_to_qairy_kappa_check(&kappa, &tau);
        assert!(err < 1e-8, "common coefficients differ by {}", err);
        // only the flavor term x^-1 survives outside the limit curve
        assert_eq!(leftover, vec![-1]);
    }

    #[test]
    fn degeneration_qhyper_is_qmathieu() {
        assert!(qhyper_equals_qmathieu_check(&Qi::from_ratio(200, 97)));
        assert!(qhyper_equals_qmathieu_check(&Qi::from_ratio(5, 3)));
    }

    #[test]
    fn qmathieu_x1_x2_branch_points() {
        // x1,2 = (kappa - 2 -/+ sqrt((kappa-2)^2 - 4 tau^2)) / (2 tau) are
        // branch points of the model.
        let b = builtin("qmathieu", &BTreeMap::new()).unwrap();
        let kappa = Complex64::new(0.0, 0.03);
        let tau = Complex64::new(0.97, 0.0);
        let km2 = kappa - Complex64::new(2.0, 0.0);
        let disc = (km2 * km2 - 4.0 * tau * tau).sqrt();
        let x1 = (km2 - disc) / (2.0 * tau);
        let x2 = (km2 + disc) / (2.0 * tau);
        let bps = crate::curve::branch_points(&b.model).unwrap();
        for target in [x1, x2] {
            let nearest = bps.iter().map(|p| (p.pos() - target).norm()).fold(f64::MAX, f64::min);
            assert!(nearest < 1e-10, "missing branch point near {}", target);
        }
        assert_eq!(bps.len(), 4);
    }

    #[test]
    fn unknown_model_errors() {
        assert!(matches!(
            builtin("nope", &BTreeMap::new()),
            Err(ModelsError::UnknownModel(_))
        ));
    }

    #[test]
    fn bundle_modes_cover_paths() {
        for name in builtin_names() {
            let b = builtin(name, &BTreeMap::new()).unwrap();
            for key in b.paths.keys() {
                assert!(b.modes.contains_key(key));
                assert!(matches!(
                    b.modes[key],
                    RegularizationMode::XiGraded | RegularizationMode::DropAllXi
                ));
            }
        }
    }
}
