use std::fmt;

use num::complex::Complex64;

use super::poly::LaurentPoly;
use super::qi::Qi;

/// Element of Q(i)(x)[r] / (r^2 - rho(x)), stored with r-degree <= 1:
/// `(even + odd*r) / den`.
///
/// `rho = T0^2 - 1` is fixed by the ambient [`RatExprField`]. Denominators are
/// normalized monic (leading coefficient 1, lowest exponent 0); x-powers move
/// into the Laurent numerators.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RationalExpr {
    pub even: LaurentPoly,
    pub odd: LaurentPoly,
    pub den: LaurentPoly,
}

impl RationalExpr {
    pub fn is_zero(&self) -> bool {
        self.even.is_zero() && self.odd.is_zero()
    }

    /// True when the expression has no r-odd part.
    pub fn is_even(&self) -> bool {
        self.odd.is_zero()
    }
}

impl fmt::Display for RationalExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let num = if self.odd.is_zero() {
            format!("{}", self.even)
        } else if self.even.is_zero() {
            format!("({}) * r", self.odd)
        } else {
            format!("({}) + ({}) * r", self.even, self.odd)
        };
        if self.den.is_constant() && self.den.coeff(0).is_one() {
            write!(f, "{}", num)
        } else {
            write!(f, "[{}] / [{}]", num, self.den)
        }
    }
}

/// The function field context: fixes rho = T0^2 - 1 and provides arithmetic.
#[derive(Clone, Debug)]
pub struct RatExprField {
    t0: LaurentPoly,
    rho: LaurentPoly,
    drho: LaurentPoly,
}

impl RatExprField {
    pub fn new(t0: LaurentPoly) -> Self {
        let rho = &(&t0 * &t0) - &LaurentPoly::one();
        let drho = rho.dlog();
        RatExprField { t0, rho, drho }
    }

    pub fn t0(&self) -> &LaurentPoly {
        &self.t0
    }

    pub fn rho(&self) -> &LaurentPoly {
        &self.rho
    }

    pub fn zero(&self) -> RationalExpr {
        self.from_poly(LaurentPoly::zero())
    }

    pub fn one(&self) -> RationalExpr {
        self.from_poly(LaurentPoly::one())
    }

    pub fn from_poly(&self, p: LaurentPoly) -> RationalExpr {
        RationalExpr { even: p, odd: LaurentPoly::zero(), den: LaurentPoly::one() }
    }

    pub fn constant(&self, c: Qi) -> RationalExpr {
        self.from_poly(LaurentPoly::constant(c))
    }

    /// The generator r = sqrt(T0^2 - 1).
    pub fn r(&self) -> RationalExpr {
        RationalExpr { even: LaurentPoly::zero(), odd: LaurentPoly::one(), den: LaurentPoly::one() }
    }

    /// y_s = T0 + s*r for s = +1/-1; these are the two sheets, with y_+ y_- = 1.
    pub fn sheet(&self, sign: i8) -> RationalExpr {
        let odd = if sign >= 0 {
            LaurentPoly::one()
        } else {
            -&LaurentPoly::one()
        };
        RationalExpr { even: self.t0.clone(), odd, den: LaurentPoly::one() }
    }

    fn normalize(&self, mut e: RationalExpr) -> RationalExpr {
        if e.is_zero() {
            e.den = LaurentPoly::one();
            return e;
        }
        // Cancel full powers of rho and of the denominator itself.
        loop {
            if e.den.is_constant() {
                break;
            }
            if let (Some(qe), Some(qo)) =
                (e.even.try_div_exact(&e.den), e.odd.try_div_exact(&e.den))
            {
                e.even = qe;
                e.odd = qo;
                e.den = LaurentPoly::one();
                break;
            }
            if let Some(dq) = e.den.try_div_exact(&self.rho) {
                if let (Some(qe), Some(qo)) =
                    (e.even.try_div_exact(&self.rho), e.odd.try_div_exact(&self.rho))
                {
                    e.even = qe;
                    e.odd = qo;
                    e.den = dq;
                    continue;
                }
            }
            break;
        }
        // Monic, min-exponent-zero denominator.
        if let (Some(max), Some(min)) = (e.den.max_exp(), e.den.min_exp()) {
            let lead = e.den.coeff(max);
            if !lead.is_one() {
                let inv = lead.inv();
                e.den = e.den.scale(&inv);
                e.even = e.even.scale(&inv);
                e.odd = e.odd.scale(&inv);
            }
            if min != 0 {
                e.den = e.den.shift(-min);
                e.even = e.even.shift(-min);
                e.odd = e.odd.shift(-min);
            }
        }
        e
    }

    pub fn add(&self, a: &RationalExpr, b: &RationalExpr) -> RationalExpr {
        if a.den == b.den {
            return self.normalize(RationalExpr {
                even: &a.even + &b.even,
                odd: &a.odd + &b.odd,
                den: a.den.clone(),
            });
        }
        self.normalize(RationalExpr {
            even: &(&a.even * &b.den) + &(&b.even * &a.den),
            odd: &(&a.odd * &b.den) + &(&b.odd * &a.den),
            den: &a.den * &b.den,
        })
    }

    pub fn sub(&self, a: &RationalExpr, b: &RationalExpr) -> RationalExpr {
        self.add(a, &self.neg(b))
    }

    pub fn neg(&self, a: &RationalExpr) -> RationalExpr {
        RationalExpr { even: -&a.even, odd: -&a.odd, den: a.den.clone() }
    }

    pub fn mul(&self, a: &RationalExpr, b: &RationalExpr) -> RationalExpr {
        // (e1 + o1 r)(e2 + o2 r) = e1 e2 + o1 o2 rho + (e1 o2 + o1 e2) r
        let even = &(&a.even * &b.even) + &(&(&a.odd * &b.odd) * &self.rho);
        let odd = &(&a.even * &b.odd) + &(&a.odd * &b.even);
        self.normalize(RationalExpr { even, odd, den: &a.den * &b.den })
    }

    pub fn scale(&self, a: &RationalExpr, c: &Qi) -> RationalExpr {
        RationalExpr { even: a.even.scale(c), odd: a.odd.scale(c), den: a.den.clone() }
    }

    /// Conjugate: r -> -r.
    pub fn conj(&self, a: &RationalExpr) -> RationalExpr {
        RationalExpr { even: a.even.clone(), odd: -&a.odd, den: a.den.clone() }
    }

    /// General inverse: 1/(e + o r) = (e - o r) / (e^2 - o^2 rho).
    pub fn inv(&self, a: &RationalExpr) -> Option<RationalExpr> {
        if a.is_zero() {
            return None;
        }
        let norm = &(&a.even * &a.even) - &(&(&a.odd * &a.odd) * &self.rho);
        if norm.is_zero() {
            return None;
        }
        Some(self.normalize(RationalExpr {
            even: &a.even * &a.den,
            odd: -&(&a.odd * &a.den),
            den: norm,
        }))
    }

    pub fn div(&self, a: &RationalExpr, b: &RationalExpr) -> Option<RationalExpr> {
        Some(self.mul(a, &self.inv(b)?))
    }

    /// Division by 2r, the step that drives the q-Riccati recursion:
    /// a/(2r) = a * r / (2 rho).
    pub fn div_2r(&self, a: &RationalExpr) -> RationalExpr {
        let half = Qi::from_ratio(1, 2);
        let ar = self.mul(a, &self.r());
        self.normalize(RationalExpr {
            even: ar.even.scale(&half),
            odd: ar.odd.scale(&half),
            den: &ar.den * &self.rho,
        })
    }

    /// d/d(log x), using r' = rho' r / (2 rho) re-reduced by the relation.
    pub fn dlog(&self, a: &RationalExpr) -> RationalExpr {
        // (n/d)' = (n' d - n d') / d^2, applied to even and odd parts, plus the
        // odd part's r-derivative contribution odd * drho/(2 rho) staying odd.
        let half = Qi::from_ratio(1, 2);
        let de = &(&a.even.dlog() * &a.den) - &(&a.even * &a.den.dlog());
        let dod = &(&a.odd.dlog() * &a.den) - &(&a.odd * &a.den.dlog());
        // odd * drho/(2rho) term: numerator odd*drho*den/(2) over den^2*rho
        let extra = (&a.odd * &self.drho).scale(&half);
        let even = &de * &self.rho;
        let odd = &(&dod * &self.rho) + &(&extra * &a.den);
        let den = &(&a.den * &a.den) * &self.rho;
        self.normalize(RationalExpr { even, odd, den })
    }

    /// l-fold d/d(log x).
    pub fn dlog_n(&self, a: &RationalExpr, l: usize) -> RationalExpr {
        let mut cur = a.clone();
        for _ in 0..l {
            cur = self.dlog(&cur);
        }
        cur
    }

    pub fn eq(&self, a: &RationalExpr, b: &RationalExpr) -> bool {
        self.sub(a, b).is_zero()
    }

    /// Evaluate at x = z with an explicit value for r (branch chosen by caller).
    pub fn eval(&self, a: &RationalExpr, z: Complex64, r_value: Complex64) -> Complex64 {
        (a.even.eval(z) + a.odd.eval(z) * r_value) / a.den.eval(z)
    }

    /// Evaluate with the principal branch r = sqrt(T0(z)^2 - 1).
    pub fn eval_principal(&self, a: &RationalExpr, z: Complex64) -> Complex64 {
        let r = (self.t0.eval(z) * self.t0.eval(z) - 1.0).sqrt();
        self.eval(a, z, r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn airy_field() -> RatExprField {
        RatExprField::new(LaurentPoly::x())
    }

    #[test]
    fn sheets_multiply_to_one() {
        let f = airy_field();
        let yp = f.sheet(1);
        let ym = f.sheet(-1);
        let prod = f.mul(&yp, &ym);
        assert!(f.eq(&prod, &f.one()));
        let sum = f.add(&yp, &ym);
        assert!(f.eq(&sum, &f.from_poly(f.t0().scale(&Qi::from_int(2)))));
    }

    #[test]
    fn inverse_of_sheet_is_conjugate() {
        let f = airy_field();
        let yp = f.sheet(1);
        let inv = f.inv(&yp).unwrap();
        assert!(f.eq(&inv, &f.sheet(-1)));
    }

    #[test]
    fn div_2r_times_2r_roundtrips() {
        let f = airy_field();
        let a = f.add(&f.sheet(1), &f.from_poly(LaurentPoly::monomial(-2, Qi::from_int(3))));
        let b = f.div_2r(&a);
        let two_r = f.scale(&f.r(), &Qi::from_int(2));
        assert!(f.eq(&f.mul(&b, &two_r), &a));
    }

    #[test]
    fn dlog_of_r() {
        // r = sqrt(x^2-1): dlog r = x^2/(x^2-1) * ... : x d/dx r = x * x/r = x^2/r
        // = x^2 r / rho.
        let f = airy_field();
        let d = f.dlog(&f.r());
        let expected = RationalExpr {
            even: LaurentPoly::zero(),
            odd: LaurentPoly::monomial(2, Qi::one()),
            den: f.rho().clone(),
        };
        assert!(f.eq(&d, &expected));
    }

    #[test]
    fn dlog_leibniz() {
        let f = airy_field();
        let a = f.add(&f.sheet(1), &f.from_poly(LaurentPoly::monomial(-1, Qi::from_int(2))));
        let b = f.div_2r(&f.sheet(-1));
        let lhs = f.dlog(&f.mul(&a, &b));
        let rhs = f.add(&f.mul(&f.dlog(&a), &b), &f.mul(&a, &f.dlog(&b)));
        assert!(f.eq(&lhs, &rhs));
    }
}
