use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num::complex::Complex64;

use super::qi::Qi;

/// Sparse Laurent polynomial over the Gaussian rationals: sum of c_k * x^k, k in Z.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct LaurentPoly {
    terms: BTreeMap<i64, Qi>,
}

impl LaurentPoly {
    pub fn zero() -> Self {
        LaurentPoly { terms: BTreeMap::new() }
    }

    pub fn one() -> Self {
        LaurentPoly::monomial(0, Qi::one())
    }

    pub fn x() -> Self {
        LaurentPoly::monomial(1, Qi::one())
    }

    pub fn constant(c: Qi) -> Self {
        LaurentPoly::monomial(0, c)
    }

    pub fn monomial(exp: i64, coeff: Qi) -> Self {
        let mut terms = BTreeMap::new();
        if !coeff.is_zero() {
            terms.insert(exp, coeff);
        }
        LaurentPoly { terms }
    }

    pub fn from_terms(it: impl IntoIterator<Item = (i64, Qi)>) -> Self {
        let mut p = LaurentPoly::zero();
        for (e, c) in it {
            p.add_term(e, c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.len() <= 1 && self.terms.keys().all(|&e| e == 0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (i64, &Qi)> {
        self.terms.iter().map(|(&e, c)| (e, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, exp: i64) -> Qi {
        self.terms.get(&exp).cloned().unwrap_or_else(Qi::zero)
    }

    pub fn min_exp(&self) -> Option<i64> {
        self.terms.keys().next().copied()
    }

    pub fn max_exp(&self) -> Option<i64> {
        self.terms.keys().next_back().copied()
    }

    pub fn add_term(&mut self, exp: i64, coeff: Qi) {
        if coeff.is_zero() {
            return;
        }
        let entry = self.terms.entry(exp).or_insert_with(Qi::zero);
        *entry += &coeff;
        if entry.is_zero() {
            self.terms.remove(&exp);
        }
    }

    pub fn scale(&self, c: &Qi) -> Self {
        if c.is_zero() {
            return LaurentPoly::zero();
        }
        LaurentPoly {
            terms: self.terms.iter().map(|(&e, v)| (e, v.mul(c))).collect(),
        }
    }

    /// Multiply by x^k.
    pub fn shift(&self, k: i64) -> Self {
        LaurentPoly {
            terms: self.terms.iter().map(|(&e, v)| (e + k, v.clone())).collect(),
        }
    }

    /// d/d(log x) = x d/dx, which maps x^k to k x^k.
    pub fn dlog(&self) -> Self {
        LaurentPoly {
            terms: self
                .terms
                .iter()
                .filter(|(&e, _)| e != 0)
                .map(|(&e, v)| (e, v.mul(&Qi::from_int(e))))
                .collect(),
        }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (&e, c) in &self.terms {
            acc += c.to_c64() * z.powi(e as i32);
        }
        acc
    }

    pub fn eval_qi(&self, z: &Qi) -> Qi {
        let mut acc = Qi::zero();
        for (&e, c) in &self.terms {
            let mut p = Qi::one();
            let base = if e >= 0 { z.clone() } else { z.inv() };
            for _ in 0..e.unsigned_abs() {
                p *= &base;
            }
            p *= c;
            acc += &p;
        }
        acc
    }

    /// Exact division: returns `self / rhs` when the remainder vanishes.
    ///
    /// Works on Laurent data by shifting both operands to plain polynomials.
    pub fn try_div_exact(&self, rhs: &LaurentPoly) -> Option<LaurentPoly> {
        if rhs.is_zero() {
            return None;
        }
        if self.is_zero() {
            return Some(LaurentPoly::zero());
        }
        let a_min = self.min_exp().unwrap();
        let b_min = rhs.min_exp().unwrap();
        let a = self.shift(-a_min);
        let b = rhs.shift(-b_min);
        let (bd_max, b_lead) = {
            let e = b.max_exp().unwrap();
            (e, b.coeff(e))
        };
        let b_lead_inv = b_lead.inv();
        let mut rem = a;
        let mut quot = LaurentPoly::zero();
        while !rem.is_zero() {
            let r_max = rem.max_exp().unwrap();
            if r_max < bd_max {
                return None;
            }
            let q_exp = r_max - bd_max;
            let q_coeff = (&rem.coeff(r_max)).mul(&b_lead_inv);
            let mono = LaurentPoly::monomial(q_exp, q_coeff);
            rem = &rem - &(&mono * &b);
            quot = &quot + &mono;
        }
        Some(quot.shift(a_min - b_min))
    }

    /// Substitute x -> c*x for a scalar c (used by model symmetries x -> -x).
    pub fn substitute_scaled(&self, c: &Qi) -> Self {
        let mut out = LaurentPoly::zero();
        for (&e, v) in &self.terms {
            let mut p = Qi::one();
            let base = if e >= 0 { c.clone() } else { c.inv() };
            for _ in 0..e.unsigned_abs() {
                p *= &base;
            }
            out.add_term(e, v.mul(&p));
        }
        out
    }

    /// Substitute x -> 1/x.
    pub fn substitute_inverted(&self) -> Self {
        LaurentPoly {
            terms: self.terms.iter().map(|(&e, v)| (-e, v.clone())).collect(),
        }
    }
}

impl fmt::Display for LaurentPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (&e, c) in self.terms.iter().rev() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match e {
                0 => write!(f, "{}", c)?,
                1 => write!(f, "{}*x", c)?,
                _ => write!(f, "{}*x^{}", c, e)?,
            }
        }
        Ok(())
    }
}

impl Add for &LaurentPoly {
    type Output = LaurentPoly;
    fn add(self, rhs: &LaurentPoly) -> LaurentPoly {
        let mut out = self.clone();
        for (&e, c) in &rhs.terms {
            out.add_term(e, c.clone());
        }
        out
    }
}

impl Sub for &LaurentPoly {
    type Output = LaurentPoly;
    fn sub(self, rhs: &LaurentPoly) -> LaurentPoly {
        let mut out = self.clone();
        for (&e, c) in &rhs.terms {
            out.add_term(e, -c.clone());
        }
        out
    }
}

impl Neg for &LaurentPoly {
    type Output = LaurentPoly;
    fn neg(self) -> LaurentPoly {
        LaurentPoly {
            terms: self.terms.iter().map(|(&e, c)| (e, -c.clone())).collect(),
        }
    }
}

impl Mul for &LaurentPoly {
    type Output = LaurentPoly;
    fn mul(self, rhs: &LaurentPoly) -> LaurentPoly {
        let mut out = LaurentPoly::zero();
        for (&ea, ca) in &self.terms {
            for (&eb, cb) in &rhs.terms {
                out.add_term(ea + eb, ca.mul(cb));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(pairs: &[(i64, i64)]) -> LaurentPoly {
        LaurentPoly::from_terms(pairs.iter().map(|&(e, c)| (e, Qi::from_int(c))))
    }

    #[test]
    fn exact_division_roundtrip() {
        let a = p(&[(-2, 1), (0, -3), (3, 2)]);
        let b = p(&[(-1, 2), (1, 5)]);
        let prod = &a * &b;
        assert_eq!(prod.try_div_exact(&b).unwrap(), a);
        assert_eq!(prod.try_div_exact(&a).unwrap(), b);
        // Non-divisible case.
        let c = &prod + &LaurentPoly::one();
        assert!(c.try_div_exact(&b).is_none());
    }

    #[test]
    fn dlog_acts_on_exponents() {
        let a = p(&[(-2, 3), (0, 7), (4, 1)]);
        let d = a.dlog();
        assert_eq!(d.coeff(-2), Qi::from_int(-6));
        assert_eq!(d.coeff(0), Qi::zero());
        assert_eq!(d.coeff(4), Qi::from_int(4));
    }
}
