//! Minimal binary floating point with a configurable mantissa width.
//!
//! A value is `(-1)^neg * mag * 2^exp` with `mag` rounded to at most `prec`
//! bits after every operation. Only what the reference evaluations need is
//! here: the four operations, integer powers, `exp` and `ln`.

use std::cmp::Ordering;

use num_bigint::BigUint;
use num_traits::{Float, One, ToPrimitive, Zero};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BigFloat {
    neg: bool,
    mag: BigUint,
    exp: i64,
    prec: u32,
}

impl BigFloat {
    pub fn zero(prec: u32) -> Self {
        Self {
            neg: false,
            mag: BigUint::zero(),
            exp: 0,
            prec,
        }
    }

    pub fn one(prec: u32) -> Self {
        Self::from_biguint(BigUint::one(), prec)
    }

    pub fn from_biguint(n: BigUint, prec: u32) -> Self {
        Self {
            neg: false,
            mag: n,
            exp: 0,
            prec,
        }
        .rounded()
    }

    pub fn from_u64(n: u64, prec: u32) -> Self {
        Self::from_biguint(BigUint::from(n), prec)
    }

    /// Exact conversion (every finite double is a dyadic rational).
    pub fn from_f64(x: f64, prec: u32) -> Self {
        assert!(
            x.is_finite(),
            "BigFloat::from_f64 needs a finite value, got {x}"
        );
        let (m, e, s) = x.integer_decode();
        Self {
            neg: s < 0 && m != 0,
            mag: BigUint::from(m),
            exp: e as i64,
            prec,
        }
        .rounded()
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    pub fn with_prec(&self, prec: u32) -> Self {
        Self {
            prec,
            ..self.clone()
        }
        .rounded()
    }

    pub fn is_zero(&self) -> bool {
        self.mag.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.neg && !self.is_zero()
    }

    pub fn abs(&self) -> Self {
        Self {
            neg: false,
            ..self.clone()
        }
    }

    pub fn neg(&self) -> Self {
        Self {
            neg: !self.neg && !self.is_zero(),
            ..self.clone()
        }
    }

    /// `floor(log2 |x|)`; `None` for zero.
    pub fn log2_floor(&self) -> Option<i64> {
        if self.is_zero() {
            None
        } else {
            Some(self.mag.bits() as i64 - 1 + self.exp)
        }
    }

    fn rounded(mut self) -> Self {
        if self.mag.is_zero() {
            self.neg = false;
            self.exp = 0;
            return self;
        }
        let bits = self.mag.bits();
        let prec = self.prec as u64;
        if bits > prec {
            let shift = bits - prec;
            let half = BigUint::one() << (shift - 1);
            self.mag = (&self.mag + half) >> shift;
            self.exp += shift as i64;
        }
        self
    }

    pub fn add(&self, other: &Self) -> Self {
        let prec = self.prec.max(other.prec);
        if other.is_zero() {
            return self.with_prec(prec);
        }
        if self.is_zero() {
            return other.with_prec(prec);
        }
        let (hi, lo) = if self.exp >= other.exp {
            (self, other)
        } else {
            (other, self)
        };
        let top_hi = hi.log2_floor().unwrap();
        let top_lo = lo.log2_floor().unwrap();
        if top_hi - top_lo > prec as i64 + 2 {
            return hi.with_prec(prec);
        }
        let shift = (hi.exp - lo.exp) as u64;
        let a = &hi.mag << shift;
        let (neg, mag) = if hi.neg == lo.neg {
            (hi.neg, a + &lo.mag)
        } else {
            match a.cmp(&lo.mag) {
                Ordering::Greater => (hi.neg, a - &lo.mag),
                Ordering::Less => (lo.neg, &lo.mag - a),
                Ordering::Equal => return Self::zero(prec),
            }
        };
        Self {
            neg,
            mag,
            exp: lo.exp,
            prec,
        }
        .rounded()
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let prec = self.prec.max(other.prec);
        Self {
            neg: self.neg != other.neg,
            mag: &self.mag * &other.mag,
            exp: self.exp + other.exp,
            prec,
        }
        .rounded()
    }

    pub fn div(&self, other: &Self) -> Self {
        assert!(!other.is_zero(), "BigFloat division by zero");
        let prec = self.prec.max(other.prec);
        if self.is_zero() {
            return Self::zero(prec);
        }
        let shift =
            (prec as i64 + 2 + other.mag.bits() as i64 - self.mag.bits() as i64).max(0) as u64;
        let num = &self.mag << shift;
        Self {
            neg: self.neg != other.neg,
            mag: num / &other.mag,
            exp: self.exp - shift as i64 - other.exp,
            prec,
        }
        .rounded()
    }

    /// Multiply by `2^k` (exact).
    pub fn mul_pow2(&self, k: i64) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        Self {
            exp: self.exp + k,
            ..self.clone()
        }
    }

    pub fn powi(&self, mut n: u64) -> Self {
        let mut base = self.clone();
        let mut acc = Self::one(self.prec);
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.mul(&base);
            }
            n >>= 1;
            if n > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    /// Nearest double.
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let bits = self.mag.bits();
        let (top, shift) = if bits > 64 {
            // keep a sticky bit so the final rounding to 53 bits is correct
            let shift = bits - 64;
            let mut top = (&self.mag >> shift).to_u64().unwrap();
            if self.mag.trailing_zeros().unwrap_or(0) < shift {
                top |= 1;
            }
            (top, shift as i64)
        } else {
            (self.mag.to_u64().unwrap(), 0)
        };
        let v = ldexp(top as f64, self.exp + shift);
        if self.neg {
            -v
        } else {
            v
        }
    }

    /// `ln 2` to `prec` bits.
    pub fn ln2(prec: u32) -> Self {
        let wp = prec + 32;
        let third = Self::one(wp).div(&Self::from_u64(3, wp));
        atanh_series(&third).mul_pow2(1).with_prec(prec)
    }

    pub fn exp(&self) -> Self {
        let prec = self.prec;
        if self.is_zero() {
            return Self::one(prec);
        }
        let halvings = (prec as f64).sqrt().ceil() as i64;
        let wp = prec + 32 + halvings as u32;
        let x = self.with_prec(wp);
        let k = (x.to_f64() / std::f64::consts::LN_2).round();
        assert!(k.abs() < 1e15, "BigFloat::exp argument out of range");
        let k = k as i64;
        let ln2 = Self::ln2(wp);
        let kf = Self::from_f64(k as f64, wp);
        let r = x.sub(&kf.mul(&ln2)).mul_pow2(-halvings);

        let mut sum = Self::one(wp);
        let mut term = Self::one(wp);
        let mut n = 1u64;
        loop {
            term = term.mul(&r).div(&Self::from_u64(n, wp));
            if term.is_zero() || term.log2_floor().unwrap() < -(wp as i64) - 2 {
                break;
            }
            sum = sum.add(&term);
            n += 1;
        }
        for _ in 0..halvings {
            sum = sum.mul(&sum);
        }
        sum.mul_pow2(k).with_prec(prec)
    }

    pub fn ln(&self) -> Self {
        assert!(
            !self.is_zero() && !self.neg,
            "BigFloat::ln needs a positive argument"
        );
        let prec = self.prec;
        let wp = prec + 32;
        // x = m 2^e with m in [1/√2, √2)
        let mut e = self.log2_floor().unwrap();
        let mut m = self.with_prec(wp).mul_pow2(-e);
        if m.to_f64() > std::f64::consts::SQRT_2 {
            m = m.mul_pow2(-1);
            e += 1;
        }
        let one = Self::one(wp);
        let y = m.sub(&one).div(&m.add(&one));
        let lm = atanh_series(&y).mul_pow2(1);
        let le = Self::from_f64(e as f64, wp).mul(&Self::ln2(wp));
        le.add(&lm).with_prec(prec)
    }

    /// `|self - other| / |other|` as a double.
    pub fn rel_diff(&self, other: &Self) -> f64 {
        let d = self.sub(other);
        if d.is_zero() {
            return 0.0;
        }
        d.div(other).abs().to_f64()
    }
}

/// `atanh y = Σ y^(2k+1)/(2k+1)` for small `|y|`.
fn atanh_series(y: &BigFloat) -> BigFloat {
    let wp = y.prec;
    let y2 = y.mul(y);
    let mut pow = y.clone();
    let mut sum = y.clone();
    let mut k = 1u64;
    loop {
        pow = pow.mul(&y2);
        let term = pow.div(&BigFloat::from_u64(2 * k + 1, wp));
        if term.is_zero()
            || term.log2_floor().unwrap() < sum.log2_floor().unwrap_or(0) - wp as i64 - 2
        {
            break;
        }
        sum = sum.add(&term);
        k += 1;
    }
    sum
}

/// `x * 2^e` without intermediate overflow of `2^e`.
fn ldexp(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
        if x.is_infinite() {
            return x;
        }
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
        if x == 0.0 {
            return x;
        }
    }
    x * 2f64.powi(e as i32)
}
