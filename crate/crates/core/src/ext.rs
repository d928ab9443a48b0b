//! Truncated Taylor jets with a shared binary exponent.
//!
//! Half-traces of high-level approximants overflow `f64` long before the
//! band structure stops being interesting, so the band finder carries
//! `value = 2^exp * (c_0 + c_1 h + ... + c_{N-1} h^{N-1})` and renormalises
//! after every operation. Scaling is by exact powers of two, so the
//! coefficients see no extra rounding.

use std::ops::{Add, Mul, Sub};

use crate::tracemap::TraceScalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct ExtJet<const N: usize> {
    c: [f64; N],
    exp: i32,
}

/// 2^k for k within the normal range.
fn pow2(k: i32) -> f64 {
    if k < -1022 {
        // Split so the intermediate stays normal; the product may go subnormal.
        return pow2(-1022) * pow2((k + 1022).max(-1022));
    }
    if k > 1023 {
        return f64::INFINITY;
    }
    f64::from_bits(((k + 1023) as u64) << 52)
}

/// Binary exponent e with 2^e <= |m| < 2^(e+1), for finite nonzero m.
fn ilogb(m: f64) -> i32 {
    let bits = m.abs().to_bits();
    let raw = ((bits >> 52) & 0x7ff) as i32;
    if raw == 0 {
        // subnormal
        let lz = (bits << 12).leading_zeros() as i32;
        -1023 - lz
    } else {
        raw - 1023
    }
}

impl<const N: usize> ExtJet<N> {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = v;
        ExtJet { c, exp: 0 }.normalized()
    }

    /// The independent variable `v + h`.
    pub fn variable(v: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = v;
        if N > 1 {
            c[1] = 1.0;
        }
        ExtJet { c, exp: 0 }.normalized()
    }

    fn normalized(mut self) -> Self {
        let m = self.c.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if m == 0.0 || !m.is_finite() {
            if m == 0.0 {
                self.exp = 0;
            }
            return self;
        }
        let e = ilogb(m);
        if e != 0 {
            let s = pow2(-e);
            for v in &mut self.c {
                *v *= s;
            }
            self.exp += e;
        }
        self
    }

    /// Coefficient `i` as an f64, saturating to ±inf or 0.
    pub fn coeff(&self, i: usize) -> f64 {
        self.c[i] * pow2(self.exp.clamp(-1100, 1100))
    }

    /// Sign of the value (coefficient 0).
    pub fn signum(&self) -> f64 {
        if self.c[0] == 0.0 {
            0.0
        } else {
            self.c[0].signum()
        }
    }

    /// Ratio `c_i / c_j` of two coefficients, independent of the exponent.
    #[cfg(test)]
    pub fn ratio(&self, i: usize, j: usize) -> f64 {
        self.c[i] / self.c[j]
    }

    pub fn raw(&self, i: usize) -> f64 {
        self.c[i]
    }

    #[cfg(test)]
    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.is_finite())
    }
}

impl<const N: usize> Add for ExtJet<N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let (big, small) = if self.exp >= rhs.exp {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let shift = small.exp - big.exp;
        if shift < -1100 {
            return big;
        }
        let s = pow2(shift);
        let mut c = big.c;
        for (a, b) in c.iter_mut().zip(small.c) {
            *a += b * s;
        }
        ExtJet { c, exp: big.exp }.normalized()
    }
}

impl<const N: usize> Sub for ExtJet<N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + rhs.scale(-1.0)
    }
}

impl<const N: usize> Mul for ExtJet<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut c = [0.0; N];
        for i in 0..N {
            for j in 0..N - i {
                c[i + j] += self.c[i] * rhs.c[j];
            }
        }
        ExtJet {
            c,
            exp: self.exp + rhs.exp,
        }
        .normalized()
    }
}

impl<const N: usize> TraceScalar for ExtJet<N> {
    fn from_f64(v: f64) -> Self {
        ExtJet::constant(v)
    }

    fn scale(mut self, s: f64) -> Self {
        for v in &mut self.c {
            *v *= s;
        }
        self.normalized()
    }
}
