//! Eventually periodic continued fractions `[0; a_1..a_m, (a_{m+1}..a_{m+n})]`.
//!
//! Values are computed from the quadratic equation satisfied by the periodic
//! tail, carried in double-double precision, so rotation sequences can be
//! generated far beyond the reach of naive `n * alpha` in `f64`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dd::Dd;
use crate::error::{Error, Result};

/// Eventually periodic continued fraction with leading integer 0.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContinuedFraction {
    preperiod: Vec<u64>,
    period: Vec<u64>,
}

/// A convergent `p_k / q_k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Approximant {
    pub index: usize,
    pub p: u128,
    pub q: u128,
}

impl Approximant {
    pub fn value(&self) -> f64 {
        self.p as f64 / self.q as f64
    }
}

impl ContinuedFraction {
    pub fn new(preperiod: Vec<u64>, period: Vec<u64>) -> Result<Self> {
        if period.is_empty() {
            return Err(Error::MissingPeriod);
        }
        if let Some(pos) = preperiod.iter().chain(&period).position(|&a| a == 0) {
            return Err(Error::ZeroQuotient { position: pos + 1 });
        }
        Ok(ContinuedFraction { preperiod, period })
    }

    /// `[0; (1)]`, the inverse golden mean.
    pub fn golden() -> Self {
        ContinuedFraction::new(vec![], vec![1]).unwrap()
    }

    /// `[0; (a)]`, the inverse of the a-th metallic mean.
    pub fn metallic(a: u64) -> Result<Self> {
        ContinuedFraction::new(vec![], vec![a])
    }

    pub fn preperiod(&self) -> &[u64] {
        &self.preperiod
    }

    pub fn period(&self) -> &[u64] {
        &self.period
    }

    /// Partial quotient `a_i`, 1-based. `a_0` is the leading 0.
    pub fn quotient(&self, i: usize) -> u64 {
        if i == 0 {
            return 0;
        }
        let m = self.preperiod.len();
        if i <= m {
            self.preperiod[i - 1]
        } else {
            self.period[(i - m - 1) % self.period.len()]
        }
    }

    /// `a_1, a_2, ...` without end.
    pub fn quotients(&self) -> impl Iterator<Item = u64> + '_ {
        self.preperiod
            .iter()
            .copied()
            .chain(self.period.iter().copied().cycle())
    }

    /// The same number with the shortest preperiod and period.
    pub fn normalized(&self) -> Self {
        let (preperiod, period) = normalize_expansion(&self.preperiod, &self.period);
        ContinuedFraction { preperiod, period }
    }

    pub(crate) fn value_dd(&self) -> Dd {
        expansion_value(&self.preperiod, &self.period)
    }

    /// The angle α in (0, 1).
    pub fn value(&self) -> f64 {
        self.value_dd().to_f64()
    }

    /// Convergents `p_k/q_k` for `k = 1..=kmax`.
    pub fn approximants(&self, kmax: usize) -> Result<Vec<Approximant>> {
        if kmax == 0 {
            return Err(Error::InvalidParameter("kmax must be at least 1".into()));
        }
        let mut out = Vec::with_capacity(kmax);
        let mut it = ApproximantIter::new(self);
        it.next(); // k = 0
        for _ in 0..kmax {
            out.push(it.next().unwrap()?);
        }
        Ok(out)
    }

    /// Convergent of index `k`, including `k = 0` (p_0 = 0, q_0 = 1).
    pub fn approximant(&self, k: usize) -> Result<Approximant> {
        ApproximantIter::new(self).nth(k).unwrap()
    }

    /// Iterator over `(p_k, q_k)` from `k = 0`; yields an overflow error once
    /// the 128-bit range is exceeded and keeps yielding it.
    pub fn approximant_iter(&self) -> ApproximantIter<'_> {
        ApproximantIter::new(self)
    }
}

/// Shortest preperiod and primitive period describing the same tail.
pub(crate) fn normalize_expansion(pre: &[u64], period: &[u64]) -> (Vec<u64>, Vec<u64>) {
    let mut period = minimal_period(period);
    let mut pre = pre.to_vec();
    // [..., c, (d_1..d_n)] with c == d_n equals [..., (c, d_1..d_{n-1})].
    while let Some(&last) = pre.last() {
        if last != *period.last().unwrap() {
            break;
        }
        pre.pop();
        period.rotate_right(1);
    }
    (pre, period)
}

/// Value of the purely periodic `[0; (a_1..a_n)]`.
fn periodic_value(period: &[u64]) -> Dd {
    // t = (P_n + P_{n-1} t) / (Q_n + Q_{n-1} t) with P/Q the convergents of
    // the period, i.e. Q_{n-1} t^2 + (Q_n - P_{n-1}) t - P_n = 0.
    let (mut p_prev, mut p) = (1u128, 0u128);
    let (mut q_prev, mut q) = (0u128, 1u128);
    for &a in period {
        let a = a as u128;
        (p_prev, p) = (p, a * p + p_prev);
        (q_prev, q) = (q, a * q + q_prev);
    }
    let b = q as i128 - p_prev as i128;
    let disc = b * b + 4 * (q_prev as i128) * (p as i128);
    // Rationalised root avoids cancellation: t = 2 P_n / (b + sqrt(disc)).
    let root = Dd::from_i128(disc).sqrt();
    Dd::from_i128(2 * p as i128) / (Dd::from_i128(b) + root)
}

/// Value of `[0; pre, (period)]`.
pub(crate) fn expansion_value(pre: &[u64], period: &[u64]) -> Dd {
    let mut v = periodic_value(period);
    for &a in pre.iter().rev() {
        v = (Dd::from_u128(a as u128) + v).recip();
    }
    v
}

fn minimal_period(period: &[u64]) -> Vec<u64> {
    let n = period.len();
    for d in 1..=n {
        if n % d == 0 && (0..n).all(|i| period[i] == period[i % d]) {
            return period[..d].to_vec();
        }
    }
    period.to_vec()
}

pub struct ApproximantIter<'a> {
    cf: &'a ContinuedFraction,
    k: usize,
    // (p_{k-1}, q_{k-1}), (p_k, q_k) once k >= 0; seeds p_{-1} = 1, q_{-1} = 0.
    prev: (u128, u128),
    cur: (u128, u128),
    failed: Option<Error>,
}

impl<'a> ApproximantIter<'a> {
    fn new(cf: &'a ContinuedFraction) -> Self {
        ApproximantIter {
            cf,
            k: 0,
            prev: (1, 0),
            cur: (0, 1),
            failed: None,
        }
    }
}

impl Iterator for ApproximantIter<'_> {
    type Item = Result<Approximant>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Some(e) = &self.failed {
            return Some(Err(e.clone()));
        }
        if self.k > 0 {
            let a = self.cf.quotient(self.k) as u128;
            let step = |x: u128, x_prev: u128| a.checked_mul(x).and_then(|v| v.checked_add(x_prev));
            match (step(self.cur.0, self.prev.0), step(self.cur.1, self.prev.1)) {
                (Some(p), Some(q)) => {
                    self.prev = self.cur;
                    self.cur = (p, q);
                }
                _ => {
                    let bits = ((a as f64).log2() + (self.cur.1 as f64).log2()).ceil() as u32 + 1;
                    let e = Error::Overflow {
                        index: self.k,
                        bits_required: bits,
                    };
                    self.failed = Some(e.clone());
                    return Some(Err(e));
                }
            }
        }
        let item = Approximant {
            index: self.k,
            p: self.cur.0,
            q: self.cur.1,
        };
        self.k += 1;
        Some(Ok(item))
    }
}

impl fmt::Display for ContinuedFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expansion(f, 0, &self.preperiod, &self.period)
    }
}

pub(crate) fn write_expansion(
    f: &mut fmt::Formatter<'_>,
    leading: u64,
    pre: &[u64],
    period: &[u64],
) -> fmt::Result {
    write!(f, "[{leading};")?;
    for a in pre {
        write!(f, "{a},")?;
    }
    write!(f, "(")?;
    for (i, a) in period.iter().enumerate() {
        if i > 0 {
            write!(f, ",")?;
        }
        write!(f, "{a}")?;
    }
    write!(f, ")]")
}

/// Parses `[b; a_1, ..., a_m, (a_{m+1}, ..., a_{m+n})]` into its leading
/// integer, preperiod and period. Whitespace is ignored.
pub(crate) fn parse_expansion(text: &str) -> Result<(u64, Vec<u64>, Vec<u64>)> {
    let bad = |reason: &str| Error::MalformedExpansion {
        text: text.to_string(),
        reason: reason.to_string(),
    };
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let body = s
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| bad("expected surrounding brackets"))?;
    let (lead, rest) = body.split_once(';').ok_or_else(|| bad("missing ';'"))?;
    let leading: u64 = lead.parse().map_err(|_| bad("leading integer"))?;

    let (pre_text, period_text) = match rest.find('(') {
        Some(open) => {
            let inner = rest[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| bad("unbalanced parenthesis"))?;
            if inner.contains('(') || inner.contains(')') {
                return Err(bad("unbalanced parenthesis"));
            }
            let pre = &rest[..open];
            let pre = match pre.strip_suffix(',') {
                Some("") => return Err(bad("empty partial quotient")),
                Some(p) => p,
                None if pre.is_empty() => pre,
                None => return Err(bad("expected ',' before period")),
            };
            (pre, Some(inner))
        }
        None => {
            if rest.contains(')') {
                return Err(bad("unbalanced parenthesis"));
            }
            (rest, None)
        }
    };
    let numbers = |t: &str| -> Result<Vec<u64>> {
        if t.is_empty() {
            return Ok(vec![]);
        }
        t.split(',')
            .map(|d| {
                if d.is_empty() || !d.bytes().all(|b| b.is_ascii_digit()) {
                    Err(bad("expected digits"))
                } else {
                    d.parse::<u64>().map_err(|_| bad("partial quotient out of range"))
                }
            })
            .collect()
    };
    let pre = numbers(pre_text)?;
    let period = match period_text {
        Some(p) => numbers(p)?,
        None => return Err(Error::MissingPeriod),
    };
    if period.is_empty() {
        return Err(Error::MissingPeriod);
    }
    Ok((leading, pre, period))
}

impl FromStr for ContinuedFraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (leading, pre, period) = parse_expansion(s)?;
        if leading != 0 {
            return Err(Error::MalformedExpansion {
                text: s.to_string(),
                reason: "angle must have leading integer 0".into(),
            });
        }
        ContinuedFraction::new(pre, period)
    }
}

pub fn parse_cf(text: &str) -> Result<ContinuedFraction> {
    text.parse()
}

pub fn format_cf(cf: &ContinuedFraction) -> String {
    cf.to_string()
}

pub fn cf_value(cf: &ContinuedFraction) -> f64 {
    cf.value()
}
