//! Exact arithmetic in the cyclotomic field Q(ζ), ζ = e^{iπ/4}.
//!
//! An element is stored as `c0 + c1·ζ + c2·ζ² + c3·ζ³` with big-rational
//! coefficients. Reduction uses ζ⁴ = −1.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Q8 {
    c: [BigRational; 4],
}

fn q(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

impl Q8 {
    pub fn new(c0: BigRational, c1: BigRational, c2: BigRational, c3: BigRational) -> Self {
        Q8 { c: [c0, c1, c2, c3] }
    }

    pub fn from_ints(c: [i64; 4]) -> Self {
        Q8 { c: c.map(q) }
    }

    pub fn from_rational(r: BigRational) -> Self {
        Q8 { c: [r, BigRational::zero(), BigRational::zero(), BigRational::zero()] }
    }

    pub fn from_int(n: i64) -> Self {
        Self::from_rational(q(n))
    }

    pub fn zero() -> Self {
        Self::from_int(0)
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    /// ζ^k for any integer k.
    pub fn zeta_pow(k: i64) -> Self {
        let k = k.rem_euclid(8) as usize;
        let mut c = [0i64; 4];
        if k < 4 {
            c[k] = 1;
        } else {
            c[k - 4] = -1;
        }
        Self::from_ints(c)
    }

    pub fn zeta() -> Self {
        Self::zeta_pow(1)
    }

    /// The imaginary unit ζ².
    pub fn i() -> Self {
        Self::zeta_pow(2)
    }

    /// √2 = ζ − ζ³.
    pub fn sqrt2() -> Self {
        Self::from_ints([0, 1, 0, -1])
    }

    /// Critical weight x = √2 − 1.
    pub fn x_crit() -> Self {
        Self::from_ints([-1, 1, 0, -1])
    }

    /// `p + r·√2` for rationals `p`, `r`.
    pub fn from_sqrt2_parts(p: BigRational, r: BigRational) -> Self {
        Q8 { c: [p, r.clone(), BigRational::zero(), -r] }
    }

    pub fn coeffs(&self) -> &[BigRational; 4] {
        &self.c
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|x| x.is_zero())
    }

    /// Complex conjugation, the automorphism ζ ↦ ζ⁻¹ = −ζ³.
    pub fn conj(&self) -> Self {
        Q8 { c: [self.c[0].clone(), -self.c[3].clone(), -self.c[2].clone(), -self.c[1].clone()] }
    }

    /// Galois automorphism ζ ↦ ζ^j for odd j.
    pub fn galois(&self, j: i64) -> Self {
        let mut out = Q8::zero();
        for (k, ck) in self.c.iter().enumerate() {
            if ck.is_zero() {
                continue;
            }
            out += Q8::zeta_pow(j * k as i64).scale(ck);
        }
        out
    }

    pub fn scale(&self, r: &BigRational) -> Self {
        Q8 { c: [&self.c[0] * r, &self.c[1] * r, &self.c[2] * r, &self.c[3] * r] }
    }

    pub fn re(&self) -> Self {
        (self + &self.conj()).scale(&BigRational::new(1.into(), 2.into()))
    }

    /// Imaginary part as a real field element.
    pub fn im(&self) -> Self {
        // (a − ā)/(2i) = −i(a − ā)/2
        let d = self - &self.conj();
        (&d * &Q8::zeta_pow(6)).scale(&BigRational::new(1.into(), 2.into()))
    }

    pub fn is_real(&self) -> bool {
        self.c[2].is_zero() && (&self.c[1] + &self.c[3]).is_zero()
    }

    /// For a real element `p + r√2`, returns `(p, r)`.
    pub fn sqrt2_parts(&self) -> Option<(BigRational, BigRational)> {
        if self.is_real() {
            Some((self.c[0].clone(), self.c[1].clone()))
        } else {
            None
        }
    }

    /// Exact sign of a real element; `None` if the element is not real.
    pub fn real_sign(&self) -> Option<Ordering> {
        let (p, r) = self.sqrt2_parts()?;
        let sp = p.signum();
        let sr = r.signum();
        if sp == sr || r.is_zero() {
            return Some(sp.cmp(&BigRational::zero()).then(sr.cmp(&BigRational::zero())));
        }
        if p.is_zero() {
            return Some(sr.cmp(&BigRational::zero()));
        }
        // opposite signs: compare p² with 2r²
        let a = &p * &p;
        let b = &r * &r * q(2);
        let mag = a.cmp(&b);
        Some(match mag {
            Ordering::Equal => Ordering::Equal,
            Ordering::Greater => sp.cmp(&BigRational::zero()),
            Ordering::Less => sr.cmp(&BigRational::zero()),
        })
    }

    /// Field norm down to Q: the product of all four Galois conjugates.
    pub fn norm(&self) -> BigRational {
        let p = self * &self.galois(3) * self.galois(5) * self.galois(7);
        debug_assert!(p.c[1].is_zero() && p.c[2].is_zero() && p.c[3].is_zero());
        p.c[0].clone()
    }

    /// Multiplicative inverse, `None` for zero.
    pub fn inv(&self) -> Option<Self> {
        if self.is_zero() {
            return None;
        }
        let others = self.galois(3) * self.galois(5) * self.galois(7);
        let n = (self * &others).c[0].clone();
        Some(others.scale(&n.recip()))
    }

    pub fn checked_div(&self, other: &Self) -> Option<Self> {
        other.inv().map(|v| self * &v)
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut acc = Q8::one();
        let mut base = self.clone();
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                acc = &acc * &base;
            }
            base = &base * &base;
            n >>= 1;
        }
        acc
    }

    pub fn to_c64(&self) -> Complex64 {
        let part = |x: Q8| {
            let (p, r) = x.sqrt2_parts().expect("real part");
            real_to_f64(&p, &r)
        };
        Complex64::new(part(self.re()), part(self.im()))
    }

    /// Real and imaginary parts, exact and as doubles.
    pub fn parts(&self) -> (Q8, Q8, Complex64) {
        (self.re(), self.im(), self.to_c64())
    }
}

/// p + r√2 without cancellation: opposite signs go through the conjugate.
fn real_to_f64(p: &BigRational, r: &BigRational) -> f64 {
    if p.is_zero() || r.is_zero() || p.is_positive() == r.is_positive() {
        return rat_to_f64(p) + std::f64::consts::SQRT_2 * rat_to_f64(r);
    }
    let two = BigRational::from_integer(2.into());
    let num = p * p - &two * r * r;
    let den = rat_to_f64(p) - std::f64::consts::SQRT_2 * rat_to_f64(r);
    rat_to_f64(&num) / den
}

pub fn rat_to_f64(r: &BigRational) -> f64 {
    // big numerators overflow a naive ratio, so shift both to ~64 bits first
    let n = r.numer();
    let d = r.denom();
    let nb = n.bits() as i64;
    let db = d.bits() as i64;
    if nb < 1000 && db < 1000 {
        if let (Some(a), Some(b)) = (n.to_f64(), d.to_f64()) {
            if a.is_finite() && b.is_finite() {
                return a / b;
            }
        }
    }
    let shift_n = (nb - 60).max(0);
    let shift_d = (db - 60).max(0);
    let a = (n >> shift_n as usize).to_f64().unwrap_or(0.0);
    let b = (d >> shift_d as usize).to_f64().unwrap_or(1.0);
    a / b * 2f64.powi((shift_n - shift_d) as i32)
}

/// Formats a rational as `p/q` (always with a denominator).
pub fn rat_string(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    match s.split_once('/') {
        Some((a, b)) => {
            let a: BigInt = a.trim().parse().ok()?;
            let b: BigInt = b.trim().parse().ok()?;
            if b.is_zero() {
                None
            } else {
                Some(BigRational::new(a, b))
            }
        }
        None => s.parse::<BigInt>().ok().map(BigRational::from_integer),
    }
}

fn mul_raw(a: &[BigRational; 4], b: &[BigRational; 4]) -> [BigRational; 4] {
    let mut out: [BigRational; 4] = Default::default();
    for i in 0..4 {
        if a[i].is_zero() {
            continue;
        }
        for j in 0..4 {
            if b[j].is_zero() {
                continue;
            }
            let p = &a[i] * &b[j];
            let k = i + j;
            if k < 4 {
                out[k] += p;
            } else {
                out[k - 4] -= p;
            }
        }
    }
    out
}

macro_rules! binop {
    ($tr:ident, $f:ident, $body:expr) => {
        impl<'a, 'b> $tr<&'b Q8> for &'a Q8 {
            type Output = Q8;
            fn $f(self, rhs: &'b Q8) -> Q8 {
                let g: fn(&Q8, &Q8) -> Q8 = $body;
                g(self, rhs)
            }
        }
        impl $tr<Q8> for Q8 {
            type Output = Q8;
            fn $f(self, rhs: Q8) -> Q8 {
                (&self).$f(&rhs)
            }
        }
        impl<'b> $tr<&'b Q8> for Q8 {
            type Output = Q8;
            fn $f(self, rhs: &'b Q8) -> Q8 {
                (&self).$f(rhs)
            }
        }
        impl<'a> $tr<Q8> for &'a Q8 {
            type Output = Q8;
            fn $f(self, rhs: Q8) -> Q8 {
                self.$f(&rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| Q8 {
    c: [&a.c[0] + &b.c[0], &a.c[1] + &b.c[1], &a.c[2] + &b.c[2], &a.c[3] + &b.c[3]]
});
binop!(Sub, sub, |a, b| Q8 {
    c: [&a.c[0] - &b.c[0], &a.c[1] - &b.c[1], &a.c[2] - &b.c[2], &a.c[3] - &b.c[3]]
});
binop!(Mul, mul, |a, b| Q8 { c: mul_raw(&a.c, &b.c) });

impl AddAssign<&Q8> for Q8 {
    fn add_assign(&mut self, rhs: &Q8) {
        for k in 0..4 {
            self.c[k] += &rhs.c[k];
        }
    }
}
impl AddAssign<Q8> for Q8 {
    fn add_assign(&mut self, rhs: Q8) {
        *self += &rhs;
    }
}
impl SubAssign<&Q8> for Q8 {
    fn sub_assign(&mut self, rhs: &Q8) {
        for k in 0..4 {
            self.c[k] -= &rhs.c[k];
        }
    }
}
impl MulAssign<&Q8> for Q8 {
    fn mul_assign(&mut self, rhs: &Q8) {
        self.c = mul_raw(&self.c, &rhs.c);
    }
}
impl Neg for Q8 {
    type Output = Q8;
    fn neg(self) -> Q8 {
        Q8 { c: self.c.map(|x| -x) }
    }
}
impl Neg for &Q8 {
    type Output = Q8;
    fn neg(self) -> Q8 {
        self.clone().neg()
    }
}

impl fmt::Debug for Q8 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q8({}, {}, {}, {})", self.c[0], self.c[1], self.c[2], self.c[3])
    }
}

impl fmt::Display for Q8 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        let names = ["", "ζ", "ζ²", "ζ³"];
        for k in 0..4 {
            if self.c[k].is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if k == 0 {
                write!(f, "{}", self.c[k])?;
            } else if self.c[k].is_one() {
                write!(f, "{}", names[k])?;
            } else {
                write!(f, "({})·{}", self.c[k], names[k])?;
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// Wire form: four `p/q` strings plus the double image.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Q8Json {
    pub coeffs: [String; 4],
    pub re: f64,
    pub im: f64,
}

impl From<&Q8> for Q8Json {
    fn from(a: &Q8) -> Self {
        let z = a.to_c64();
        Q8Json {
            coeffs: [rat_string(&a.c[0]), rat_string(&a.c[1]), rat_string(&a.c[2]), rat_string(&a.c[3])],
            re: z.re,
            im: z.im,
        }
    }
}

impl TryFrom<&Q8Json> for Q8 {
    type Error = String;
    fn try_from(j: &Q8Json) -> Result<Self, String> {
        let mut c: [BigRational; 4] = Default::default();
        for k in 0..4 {
            c[k] = parse_rational(&j.coeffs[k]).ok_or_else(|| format!("bad rational {:?}", j.coeffs[k]))?;
        }
        Ok(Q8 { c })
    }
}

impl Serialize for Q8 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        Q8Json::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Q8 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = Q8Json::deserialize(d)?;
        Q8::try_from(&j).map_err(serde::de::Error::custom)
    }
}

/// Evaluates Σ_L coeff[L]·x^L for integer coefficients, x = x_crit.
pub fn poly_in_x(coeffs: &[i128]) -> Q8 {
    // Horner in Q(√2) on (p, r) pairs keeps this fast
    let mut p = BigInt::zero();
    let mut r = BigInt::zero();
    for c in coeffs.iter().rev() {
        // (p + r√2)(−1 + √2) = (−p + 2r) + (p − r)√2
        let np = -&p + &r * 2;
        let nr = &p - &r;
        p = np + BigInt::from(*c);
        r = nr;
    }
    Q8::from_sqrt2_parts(BigRational::from_integer(p), BigRational::from_integer(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zeta_times_conj_is_one() {
        let z = Q8::zeta();
        assert_eq!(&z * &z.conj(), Q8::one());
    }

    #[test]
    fn sqrt2_squared() {
        assert_eq!(Q8::sqrt2().pow(2), Q8::from_int(2));
    }

    #[test]
    fn x_crit_squared() {
        assert_eq!(Q8::x_crit().pow(2), Q8::from_ints([3, -2, 0, 2]));
    }

    #[test]
    fn parts_of_i_and_zeta() {
        let (re, im, _) = Q8::i().parts();
        assert!(re.is_zero());
        assert_eq!(im, Q8::one());
        let (re, _, _) = Q8::zeta().parts();
        let half = BigRational::new(1.into(), 2.into());
        assert_eq!(re, Q8::new(BigRational::zero(), half.clone(), BigRational::zero(), -half));
        let f = Q8::x_crit().to_c64();
        assert!((f.re - 0.414213562373095).abs() < 1e-12 && f.im == 0.0);
    }

    #[test]
    fn sign_in_real_subfield() {
        assert_eq!(Q8::x_crit().real_sign(), Some(Ordering::Greater));
        assert_eq!((-Q8::x_crit()).real_sign(), Some(Ordering::Greater.reverse()));
        assert_eq!(Q8::from_ints([-2, 1, 0, -1]).real_sign(), Some(Ordering::Less));
        // 3 − 2√2 > 0
        assert_eq!(Q8::from_ints([3, -2, 0, 2]).real_sign(), Some(Ordering::Greater));
        assert_eq!(Q8::zero().real_sign(), Some(Ordering::Equal));
        assert_eq!(Q8::zeta().real_sign(), None);
    }

    #[test]
    fn horner_matches_pow() {
        let x = Q8::x_crit();
        let direct = Q8::one() + x.pow(4) * Q8::from_int(3) - x.pow(7);
        assert_eq!(poly_in_x(&[1, 0, 0, 0, 3, 0, 0, -1]), direct);
        assert_eq!(poly_in_x(&[1, 0, 0, 0, 1]), Q8::from_ints([18, -12, 0, 12]));
    }

    #[test]
    fn json_round_trip() {
        let a = Q8::new(q(1), BigRational::new((-3).into(), 7.into()), q(0), q(5));
        let j = serde_json::to_string(&a).unwrap();
        assert!(j.contains("\"-3/7\""));
        let b: Q8 = serde_json::from_str(&j).unwrap();
        assert_eq!(a, b);
    }

    fn small() -> impl Strategy<Value = Q8> {
        proptest::array::uniform4(-20i64..20).prop_map(Q8::from_ints)
    }

    proptest! {
        #[test]
        fn conj_is_multiplicative(a in small(), b in small()) {
            prop_assert_eq!((&a * &b).conj(), a.conj() * b.conj());
            prop_assert_eq!(a.conj().conj(), a.clone());
        }

        #[test]
        fn norm_sq_is_nonneg_real(a in small()) {
            let n = &a * &a.conj();
            prop_assert!(n.im().is_zero());
            prop_assert!(n.to_c64().re >= 0.0);
            prop_assert!(n.real_sign() != Some(Ordering::Less));
        }

        #[test]
        fn inverse(a in small()) {
            prop_assume!(!a.is_zero());
            prop_assert_eq!(&a * &a.inv().unwrap(), Q8::one());
        }

        #[test]
        fn float_image_tracks_exact(a in small(), b in small(), c in small()) {
            let e = &(&a * &b) + &(&c * &a.conj());
            let f = a.to_c64() * b.to_c64() + c.to_c64() * a.to_c64().conj();
            let scale = f.norm().max(1.0);
            prop_assert!((e.to_c64() - f).norm() / scale < 1e-12);
        }

        #[test]
        fn real_sign_matches_float(p in -50i64..50, r in -50i64..50) {
            let a = Q8::from_sqrt2_parts(q(p), q(r));
            let f = p as f64 + r as f64 * std::f64::consts::SQRT_2;
            let s = a.real_sign().unwrap();
            let fs = if f > 0.0 { Ordering::Greater } else if f < 0.0 { Ordering::Less } else { Ordering::Equal };
            prop_assert_eq!(s, fs);
        }
    }
}
