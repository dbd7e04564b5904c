use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num::bigint::BigInt;
use num::complex::Complex64;
use num::rational::BigRational;
use num::traits::{One, Signed, ToPrimitive, Zero};

/// A Gaussian rational: `re + im*i` with both parts in Q.
#[derive(Clone, PartialEq, Eq, Debug, Hash)]
pub struct Qi {
    pub re: BigRational,
    pub im: BigRational,
}

impl Qi {
    pub fn new(re: BigRational, im: BigRational) -> Self {
        Qi { re, im }
    }

    pub fn zero() -> Self {
        Qi::new(BigRational::zero(), BigRational::zero())
    }

    pub fn one() -> Self {
        Qi::new(BigRational::one(), BigRational::zero())
    }

    pub fn i() -> Self {
        Qi::new(BigRational::zero(), BigRational::one())
    }

    pub fn from_int(n: i64) -> Self {
        Qi::new(BigRational::from_integer(BigInt::from(n)), BigRational::zero())
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Qi::new(
            BigRational::new(BigInt::from(num), BigInt::from(den)),
            BigRational::zero(),
        )
    }

    /// `a/b + (c/d)i` from integer parts.
    pub fn from_parts(re_num: i64, re_den: i64, im_num: i64, im_den: i64) -> Self {
        assert!(re_den != 0 && im_den != 0, "zero denominator");
        Qi::new(
            BigRational::new(BigInt::from(re_num), BigInt::from(re_den)),
            BigRational::new(BigInt::from(im_num), BigInt::from(im_den)),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.re.is_one() && self.im.is_zero()
    }

    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        Qi::new(self.re.clone(), -self.im.clone())
    }

    /// |z|^2 = re^2 + im^2, a nonnegative rational.
    pub fn norm_sq(&self) -> BigRational {
        &self.re * &self.re + &self.im * &self.im
    }

    pub fn inv(&self) -> Self {
        assert!(!self.is_zero(), "division by zero Qi");
        let n = self.norm_sq();
        Qi::new(&self.re / &n, -&self.im / &n)
    }

    pub fn to_c64(&self) -> Complex64 {
        Complex64::new(rat_to_f64(&self.re), rat_to_f64(&self.im))
    }

    /// Parse a decimal or rational literal: "3", "-0.25", "1e-3", "97/100".
    pub fn parse_real(s: &str) -> Option<Qi> {
        parse_rational(s).map(|r| Qi::new(r, BigRational::zero()))
    }
}

pub(crate) fn rat_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Fall back on a division of truncated parts for extreme magnitudes.
        let n = r.numer().to_f64().unwrap_or(f64::MAX);
        let d = r.denom().to_f64().unwrap_or(f64::MAX);
        n / d
    })
}

/// Parse "123", "-4.56", "7e-2", "1.2e3", "97/100" into an exact rational.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let num = BigInt::from_str(n.trim()).ok()?;
        let den = BigInt::from_str(d.trim()).ok()?;
        if den.is_zero() {
            return None;
        }
        return Some(BigRational::new(num, den));
    }
    let (mantissa, exp) = match s.split_once(['e', 'E']) {
        Some((m, e)) => (m, i32::from_str(e).ok()?),
        None => (s, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    let digits = format!(
        "{}{}",
        if int_part.is_empty() || int_part == "-" || int_part == "+" {
            format!("{}0", int_part)
        } else {
            int_part.to_string()
        },
        frac_part
    );
    let num = BigInt::from_str(&digits).ok()?;
    let shift = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let scale = num::pow::pow(ten, shift.unsigned_abs() as usize);
    Some(if shift >= 0 {
        BigRational::from_integer(num * scale)
    } else {
        BigRational::new(num, scale)
    })
}

impl fmt::Display for Qi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            return write!(f, "{}", self.re);
        }
        if self.re.is_zero() {
            return write!(f, "{}*i", self.im);
        }
        if self.im.is_negative() {
            write!(f, "({}-{}*i)", self.re, -self.im.clone())
        } else {
            write!(f, "({}+{}*i)", self.re, self.im)
        }
    }
}

impl Add for Qi {
    type Output = Qi;
    fn add(self, rhs: Qi) -> Qi {
        Qi::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl<'a> Add<&'a Qi> for Qi {
    type Output = Qi;
    fn add(self, rhs: &Qi) -> Qi {
        Qi::new(self.re + &rhs.re, self.im + &rhs.im)
    }
}

impl AddAssign<&Qi> for Qi {
    fn add_assign(&mut self, rhs: &Qi) {
        self.re += &rhs.re;
        self.im += &rhs.im;
    }
}

impl Sub for Qi {
    type Output = Qi;
    fn sub(self, rhs: Qi) -> Qi {
        Qi::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl SubAssign<&Qi> for Qi {
    fn sub_assign(&mut self, rhs: &Qi) {
        self.re -= &rhs.re;
        self.im -= &rhs.im;
    }
}

impl Neg for Qi {
    type Output = Qi;
    fn neg(self) -> Qi {
        Qi::new(-self.re, -self.im)
    }
}

impl Mul for Qi {
    type Output = Qi;
    fn mul(self, rhs: Qi) -> Qi {
        (&self).mul(&rhs)
    }
}

impl<'a, 'b> Mul<&'b Qi> for &'a Qi {
    type Output = Qi;
    fn mul(self, rhs: &Qi) -> Qi {
        Qi::new(
            &self.re * &rhs.re - &self.im * &rhs.im,
            &self.re * &rhs.im + &self.im * &rhs.re,
        )
    }
}

impl MulAssign<&Qi> for Qi {
    fn mul_assign(&mut self, rhs: &Qi) {
        *self = (&*self).mul(rhs);
    }
}

impl Div for Qi {
    type Output = Qi;
    fn div(self, rhs: Qi) -> Qi {
        (&self).mul(&rhs.inv())
    }
}
