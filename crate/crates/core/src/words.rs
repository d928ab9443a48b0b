//! Binary words, substitutions and their abelianization matrices, rotation
//! and cutting sequences, and the classification of cutting sequences fixed
//! by a substitution.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::numberth::{
    expansion_value, normalize_expansion, parse_expansion, write_expansion, ContinuedFraction,
};

/// Finite word over {0, 1}, serialised as a string of `'0'`/`'1'`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Word(Vec<u8>);

impl Word {
    pub fn new() -> Self {
        Word(Vec::new())
    }

    /// Panics if a letter is not 0 or 1.
    pub fn from_letters(letters: Vec<u8>) -> Self {
        assert!(letters.iter().all(|&b| b <= 1), "letters must be 0 or 1");
        Word(letters)
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `|w|_a`
    pub fn count(&self, letter: u8) -> usize {
        self.0.iter().filter(|&&b| b == letter).count()
    }

    pub fn counts(&self) -> [u64; 2] {
        let ones = self.count(1) as u64;
        [self.len() as u64 - ones, ones]
    }

    pub fn push(&mut self, letter: u8) {
        assert!(letter <= 1);
        self.0.push(letter);
    }

    pub fn extend_from(&mut self, other: &Word) {
        self.0.extend_from_slice(&other.0);
    }

    pub fn truncate(&mut self, n: usize) {
        self.0.truncate(n);
    }

    pub fn prefix(&self, n: usize) -> Word {
        Word(self.0[..n.min(self.len())].to_vec())
    }

    pub fn repeat(&self, times: usize) -> Word {
        Word(self.0.repeat(times))
    }

    pub fn starts_with(&self, other: &Word) -> bool {
        self.0.starts_with(&other.0)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.0.iter().map(|&b| (b'0' + b) as char).collect();
        f.write_str(&s)
    }
}

impl FromStr for Word {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.bytes()
            .map(|b| match b {
                b'0' => Ok(0),
                b'1' => Ok(1),
                _ => Err(Error::InvalidWord(s.to_string())),
            })
            .collect::<Result<Vec<u8>>>()
            .map(Word)
    }
}

impl From<Word> for String {
    fn from(w: Word) -> String {
        w.to_string()
    }
}

impl TryFrom<String> for Word {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Letter substitution `0 ↦ image0, 1 ↦ image1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Substitution {
    image0: Word,
    image1: Word,
}

impl Substitution {
    pub fn new(image0: Word, image1: Word) -> Result<Self> {
        if image0.is_empty() || image1.is_empty() {
            return Err(Error::EmptyImage);
        }
        Ok(Substitution { image0, image1 })
    }

    fn from_strs(a: &str, b: &str) -> Self {
        Substitution::new(a.parse().unwrap(), b.parse().unwrap()).unwrap()
    }

    pub fn identity() -> Self {
        Self::from_strs("0", "1")
    }

    /// π: 0 ↦ 1, 1 ↦ 0
    pub fn pi() -> Self {
        Self::from_strs("1", "0")
    }

    /// σ: 0 ↦ 01, 1 ↦ 0
    pub fn sigma() -> Self {
        Self::from_strs("01", "0")
    }

    /// ρ: 0 ↦ 10, 1 ↦ 0
    pub fn rho() -> Self {
        Self::from_strs("10", "0")
    }

    pub fn image(&self, letter: u8) -> &Word {
        if letter == 0 {
            &self.image0
        } else {
            &self.image1
        }
    }

    pub fn apply(&self, w: &Word) -> Word {
        let mut out = Vec::with_capacity(w.count(0) * self.image0.len() + w.count(1) * self.image1.len());
        for &b in w.letters() {
            out.extend_from_slice(self.image(b).letters());
        }
        Word(out)
    }

    /// `self ∘ other`, i.e. apply `other` first.
    pub fn compose(&self, other: &Substitution) -> Substitution {
        Substitution {
            image0: self.apply(&other.image0),
            image1: self.apply(&other.image1),
        }
    }

    pub fn pow(&self, n: u32) -> Substitution {
        (0..n).fold(Substitution::identity(), |acc, _| acc.compose(self))
    }

    pub fn abelianization(&self) -> SubstitutionMatrix {
        let [a, b] = self.image0.counts();
        let [c, d] = self.image1.counts();
        SubstitutionMatrix([[a, c], [b, d]])
    }

    /// Letter `a` with `s(a)` starting with `a` and longer than one letter.
    pub fn prolongable_letter(&self) -> Option<u8> {
        (0..=1).find(|&a| self.is_prolongable_on(a))
    }

    pub fn is_prolongable_on(&self, a: u8) -> bool {
        let img = self.image(a);
        img.len() >= 2 && img.letters()[0] == a
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0->{}, 1->{}", self.image0, self.image1)
    }
}

pub fn apply_substitution(s: &Substitution, w: &Word) -> Word {
    s.apply(w)
}

pub fn abelianization(s: &Substitution) -> SubstitutionMatrix {
    s.abelianization()
}

/// Generators of the monoid of nonnegative unimodular matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Generator {
    H1,
    H2,
}

impl Generator {
    pub fn matrix(self) -> SubstitutionMatrix {
        match self {
            Generator::H1 => SubstitutionMatrix([[0, 1], [1, 0]]),
            Generator::H2 => SubstitutionMatrix([[1, 1], [1, 0]]),
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Generator::H1 => "h1",
            Generator::H2 => "h2",
        })
    }
}

/// Nonnegative integer 2×2 matrix, row-major. Column j holds the letter
/// counts of the image of letter j.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubstitutionMatrix(pub [[u64; 2]; 2]);

/// Power bound for the primitivity test.
pub const PRIMITIVITY_MAX_POWER: u32 = 8;

impl SubstitutionMatrix {
    pub const IDENTITY: SubstitutionMatrix = SubstitutionMatrix([[1, 0], [0, 1]]);

    pub fn det(&self) -> i128 {
        let m = self.0;
        m[0][0] as i128 * m[1][1] as i128 - m[0][1] as i128 * m[1][0] as i128
    }

    pub fn mul(&self, rhs: &SubstitutionMatrix) -> SubstitutionMatrix {
        let (a, b) = (self.0, rhs.0);
        let mut c = [[0u64; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        SubstitutionMatrix(c)
    }

    pub fn is_primitive(&self) -> bool {
        let mut p = *self;
        for _ in 0..PRIMITIVITY_MAX_POWER {
            if p.0.iter().flatten().all(|&v| v > 0) {
                return true;
            }
            p = p.mul(self);
        }
        false
    }

    /// Writes the matrix as a product of `h1`, `h2`. Empty for the identity.
    pub fn decompose_monoid(&self) -> Result<Vec<Generator>> {
        let det = self.det();
        if det != 1 && det != -1 {
            return Err(Error::NotInMonoid(format!("determinant {det}")));
        }
        let mut out = Vec::new();
        let mut m = self.0;
        loop {
            let [[p, q], [r, s]] = m;
            if m == Self::IDENTITY.0 {
                break;
            }
            if m == Generator::H1.matrix().0 {
                out.push(Generator::H1);
                break;
            }
            if p >= r && q >= s {
                // h2^{-1} M
                out.push(Generator::H2);
                m = [[r, s], [p - r, q - s]];
            } else if r >= p && s >= q {
                out.push(Generator::H1);
                m = [[r, s], [p, q]];
            } else {
                // Unreachable for unimodular nonnegative matrices.
                return Err(Error::NotInMonoid(format!("{:?}", self.0)));
            }
        }
        Ok(out)
    }

    /// Slope β of the Perron eigenvector (1, β).
    pub fn perron_slope(&self) -> f64 {
        let [[p, q], [r, s]] = self.0.map(|row| row.map(|v| v as f64));
        let tr = p + s;
        let det = self.det() as f64;
        let mu = 0.5 * (tr + (tr * tr - 4.0 * det).sqrt());
        if q != 0.0 {
            (mu - p) / q
        } else {
            r / (mu - s)
        }
    }
}

pub fn is_primitive(m: &SubstitutionMatrix) -> bool {
    m.is_primitive()
}

pub fn decompose_monoid(m: &SubstitutionMatrix) -> Result<Vec<Generator>> {
    m.decompose_monoid()
}

/// Eventually periodic expansion `[b; pre, (period)]` of a cutting-sequence
/// slope β > 0.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlopeExpansion {
    pub leading: u64,
    pub preperiod: Vec<u64>,
    pub period: Vec<u64>,
}

impl SlopeExpansion {
    pub fn new(leading: u64, preperiod: Vec<u64>, period: Vec<u64>) -> Result<Self> {
        if period.is_empty() {
            return Err(Error::MissingPeriod);
        }
        if let Some(pos) = preperiod.iter().chain(&period).position(|&a| a == 0) {
            return Err(Error::ZeroQuotient { position: pos + 1 });
        }
        Ok(SlopeExpansion {
            leading,
            preperiod,
            period,
        })
    }

    pub(crate) fn value_dd(&self) -> Dd {
        Dd::from_u128(self.leading as u128) + expansion_value(&self.preperiod, &self.period)
    }

    pub fn value(&self) -> f64 {
        self.value_dd().to_f64()
    }

    pub fn normalized(&self) -> Self {
        let (preperiod, period) = normalize_expansion(&self.preperiod, &self.period);
        SlopeExpansion {
            leading: self.leading,
            preperiod,
            period,
        }
    }
}

impl fmt::Display for SlopeExpansion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expansion(f, self.leading, &self.preperiod, &self.period)
    }
}

impl FromStr for SlopeExpansion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (b, pre, per) = parse_expansion(s)?;
        SlopeExpansion::new(b, pre, per)
    }
}

/// Drops the first `n` partial quotients of `[0; pre, (period)]`.
fn drop_quotients(pre: &[u64], period: &[u64], n: usize) -> (Vec<u64>, Vec<u64>) {
    let mut pre = pre.to_vec();
    let mut period = period.to_vec();
    for _ in 0..n {
        if pre.is_empty() {
            period.rotate_left(1);
        } else {
            pre.remove(0);
        }
    }
    (pre, period)
}

/// The slope β = α/(1−α) whose cutting sequence is the rotation sequence of α.
pub fn slope_for_rotation(alpha: &ContinuedFraction) -> SlopeExpansion {
    let a1 = alpha.quotient(1);
    if a1 >= 2 {
        let (mut pre, period) = drop_quotients(alpha.preperiod(), alpha.period(), 1);
        pre.insert(0, a1 - 1);
        SlopeExpansion {
            leading: 0,
            preperiod: pre,
            period,
        }
    } else {
        let a2 = alpha.quotient(2);
        let (pre, period) = drop_quotients(alpha.preperiod(), alpha.period(), 2);
        SlopeExpansion {
            leading: a2,
            preperiod: pre,
            period,
        }
    }
}

fn sigma_pi_pow(n: u64) -> Substitution {
    Substitution::sigma()
        .compose(&Substitution::pi())
        .pow(n as u32)
}

/// The primitive substitution fixing the cutting sequence of slope β, when
/// one exists (β = [b_0; (b_1..b_n)] with b_n ≥ b_0 ≥ 1, or
/// β = [0; b_0, (b_1..b_n)] with b_n ≥ b_0).
pub fn cmps_substitution(beta: &SlopeExpansion) -> Option<Substitution> {
    let beta = beta.normalized();
    let (b0, period, outer_pi) = if beta.leading >= 1 {
        if !beta.preperiod.is_empty() {
            return None;
        }
        (beta.leading, beta.period.clone(), true)
    } else {
        match beta.preperiod.len() {
            1 => (beta.preperiod[0], beta.period.clone(), false),
            0 => {
                let mut period = beta.period.clone();
                let b0 = period[0];
                period.rotate_left(1);
                (b0, period, false)
            }
            _ => return None,
        }
    };
    let bn = *period.last().unwrap();
    if bn < b0 {
        return None;
    }
    let pi = Substitution::pi();
    let mut exps = vec![b0];
    exps.extend_from_slice(&period[..period.len() - 1]);
    exps.push(bn - b0);

    let mut s = if outer_pi {
        pi.clone()
    } else {
        Substitution::identity()
    };
    for (i, &e) in exps.iter().enumerate() {
        if i > 0 {
            s = s.compose(&pi);
        }
        s = s.compose(&sigma_pi_pow(e));
    }
    if outer_pi {
        s = s.compose(&pi);
    }
    Some(s)
}

/// Substitution fixing the rotation sequence `R_α`, if any.
pub fn cmps_for_rotation(alpha: &ContinuedFraction) -> Option<Substitution> {
    cmps_substitution(&slope_for_rotation(alpha))
}

/// First `n` letters of the cutting sequence of `y = βx` from the origin:
/// 0 for each vertical grid line crossed, 1 for each horizontal one.
pub fn cutting_sequence(beta: &SlopeExpansion, n: usize) -> Word {
    let b = beta.value_dd();
    let mut out = Vec::with_capacity(n);
    let (mut i, mut j) = (1u64, 1u64);
    while out.len() < n {
        // vertical x = i versus horizontal x = j/β
        let d = b * Dd::from_f64(i as f64) - Dd::from_f64(j as f64);
        if d.is_sign_negative() {
            out.push(0);
            i += 1;
        } else {
            out.push(1);
            j += 1;
        }
    }
    Word(out)
}

/// First `n` letters of the fixed point of `s` starting from its
/// prolongable letter (0 preferred).
pub fn fixed_point(s: &Substitution, n: usize) -> Result<Word> {
    let a = s.prolongable_letter().ok_or(Error::NotProlongable)?;
    fixed_point_from(s, a, n)
}

pub fn fixed_point_from(s: &Substitution, a: u8, n: usize) -> Result<Word> {
    if !s.is_prolongable_on(a) {
        return Err(Error::NotProlongable);
    }
    let mut w = Word(vec![a]);
    while w.len() < n {
        w = s.apply(&w);
    }
    w.truncate(n);
    Ok(w)
}

/// `R_{α,ω}(n) = 1` iff `{nα + ω} ∈ [1−α, 1)`, for `n = 1..=len`.
pub fn rotation_sequence(alpha: &ContinuedFraction, omega: f64, len: usize) -> Word {
    let a = alpha.value_dd();
    let threshold = Dd::ONE - a;
    let w = Dd::from_f64(omega);
    let letters = (1..=len as u64)
        .map(|n| {
            let x = (a * Dd::from_f64(n as f64) + w).fract();
            u8::from(!(x - threshold).is_sign_negative())
        })
        .collect();
    Word(letters)
}

/// The word `w_k` with `w_0 = 0`, `w_1 = 0^{a_1−1} 1` and
/// `w_{k+1} = w_k^{a_{k+1}} w_{k−1}`; it is the length-`q_k` prefix of `R_α`.
pub fn sturmian_word_by_recursion(alpha: &ContinuedFraction, k: usize) -> Word {
    let mut prev = Word(vec![0]);
    if k == 0 {
        return prev;
    }
    let mut cur = Word(vec![0; alpha.quotient(1) as usize - 1]);
    cur.push(1);
    for i in 1..k {
        let mut next = cur.repeat(alpha.quotient(i + 1) as usize);
        next.extend_from(&prev);
        prev = std::mem::replace(&mut cur, next);
    }
    cur
}

/// Extra length demanded per unit of factor length so counts are saturated.
pub const COMPLEXITY_MARGIN: usize = 10;

/// Number of distinct factors of length `n`; requires `|w| ≥ 11n`.
pub fn complexity(w: &Word, n: usize) -> Result<usize> {
    let required = n + COMPLEXITY_MARGIN * n;
    if w.len() < required {
        return Err(Error::WordTooShort {
            n,
            len: w.len(),
            required,
        });
    }
    if n == 0 {
        return Ok(1);
    }
    Ok(w.0.windows(n).collect::<HashSet<_>>().len())
}

pub fn letter_frequency(w: &Word) -> Result<f64> {
    if w.is_empty() {
        return Err(Error::EmptyWord);
    }
    Ok(w.count(1) as f64 / w.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numberth::parse_cf;
    use proptest::prelude::*;

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    fn golden() -> ContinuedFraction {
        parse_cf("[0;(1)]").unwrap()
    }

    #[test]
    fn generator_images() {
        assert_eq!(Substitution::sigma().apply(&w("0")), w("01"));
        assert_eq!(Substitution::pi().apply(&w("0110")), w("1001"));
        assert_eq!(Substitution::rho().apply(&Word::new()), Word::new());
    }

    #[test]
    fn abelianization_examples() {
        let sp = Substitution::sigma().compose(&Substitution::pi());
        assert_eq!(sp.apply(&w("0")), w("0"));
        assert_eq!(sp.apply(&w("1")), w("01"));
        assert_eq!(sp.abelianization().0, [[1, 1], [0, 1]]);
        assert_eq!(Substitution::pi().abelianization(), Generator::H1.matrix());
        assert_eq!(Substitution::sigma().abelianization(), Generator::H2.matrix());
        assert_eq!(Substitution::rho().abelianization(), Generator::H2.matrix());
    }

    #[test]
    fn primitivity() {
        assert!(Generator::H2.matrix().is_primitive());
        assert!(!SubstitutionMatrix::IDENTITY.is_primitive());
        assert!(!SubstitutionMatrix([[1, 1], [0, 1]]).is_primitive());
        assert!(!Generator::H1.matrix().is_primitive());
    }

    fn product(gens: &[Generator]) -> SubstitutionMatrix {
        gens.iter()
            .fold(SubstitutionMatrix::IDENTITY, |acc, g| acc.mul(&g.matrix()))
    }

    #[test]
    fn decomposition_examples() {
        let m = product(&[Generator::H2, Generator::H1]);
        assert_eq!(m.0, [[1, 1], [0, 1]]);
        assert_eq!(m.decompose_monoid().unwrap(), vec![Generator::H2, Generator::H1]);
        assert!(SubstitutionMatrix::IDENTITY.decompose_monoid().unwrap().is_empty());
        let m = SubstitutionMatrix([[2, 1], [1, 1]]);
        assert_eq!(m.decompose_monoid().unwrap(), vec![Generator::H2, Generator::H2]);
        assert!(matches!(
            SubstitutionMatrix([[2, 1], [1, 2]]).decompose_monoid(),
            Err(Error::NotInMonoid(_))
        ));
    }

    #[test]
    fn fixed_points() {
        let fib = Substitution::sigma();
        assert_eq!(fixed_point(&fib, 13).unwrap(), w("0100101001001"));
        let s1 = Substitution::new(w("1"), w("10")).unwrap();
        assert_eq!(s1.prolongable_letter(), Some(1));
        assert_eq!(fixed_point(&s1, 9).unwrap(), w("101101011"));
        assert!(matches!(
            fixed_point(&Substitution::pi(), 5),
            Err(Error::NotProlongable)
        ));
        let long = fixed_point(&fib, 10_000).unwrap();
        assert_eq!(fib.apply(&long).prefix(10_000), long);
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rotation_sequence(&golden(), 0.0, 3), w("101"));
        let silver = parse_cf("[0;(2)]").unwrap();
        assert_eq!(rotation_sequence(&silver, 0.0, 1), w("0"));
    }

    /// floor(n p / q) with p/q a convergent far beyond the tested range.
    fn exact_rotation(alpha: &ContinuedFraction, len: usize) -> Word {
        let ap = alpha
            .approximant_iter()
            .map(|a| a.unwrap())
            .find(|a| a.q > 1u128 << 50)
            .unwrap();
        let fl = |n: u128| n * ap.p / ap.q;
        Word((1..=len as u128).map(|n| (fl(n + 1) - fl(n)) as u8).collect())
    }

    #[test]
    fn rotation_matches_exact_integer_arithmetic() {
        for text in ["[0;(1)]", "[0;(2)]", "[0;5,(1)]", "[0;3,(1,4)]", "[0;(7,2,1)]"] {
            let cf = parse_cf(text).unwrap();
            assert_eq!(rotation_sequence(&cf, 0.0, 10_000), exact_rotation(&cf, 10_000), "{text}");
        }
    }

    #[test]
    fn recursion_matches_rotation() {
        assert_eq!(sturmian_word_by_recursion(&golden(), 4), w("10110"));
        for text in ["[0;(1)]", "[0;(2)]", "[0;5,(1)]", "[0;2,3,(1,4)]", "[0;(3,1,2)]"] {
            let cf = parse_cf(text).unwrap();
            for k in 1.. {
                let ap = cf.approximant(k).unwrap();
                if ap.q > 10_000 {
                    break;
                }
                let wk = sturmian_word_by_recursion(&cf, k);
                assert_eq!(wk.len() as u128, ap.q);
                assert_eq!(wk, rotation_sequence(&cf, 0.0, wk.len()), "{text} k={k}");
                assert_eq!(wk.counts(), [(ap.q - ap.p) as u64, ap.p as u64]);
            }
        }
    }

    #[test]
    fn complexity_examples() {
        let fib = fixed_point(&Substitution::sigma(), 10_000).unwrap();
        assert_eq!(complexity(&fib, 5).unwrap(), 6);
        assert_eq!(complexity(&w("01").repeat(50), 2).unwrap(), 2);
        assert_eq!(complexity(&w("0"), 0).unwrap(), 1);
        assert!(matches!(
            complexity(&w("0101"), 2),
            Err(Error::WordTooShort { .. })
        ));
    }

    #[test]
    fn sturmian_complexity() {
        for text in ["[0;(1)]", "[0;(2)]", "[0;5,(1)]", "[0;(1,3)]"] {
            let r = rotation_sequence(&parse_cf(text).unwrap(), 0.0, 10_000);
            for n in 1..=30 {
                assert_eq!(complexity(&r, n).unwrap(), n + 1, "{text} n={n}");
            }
        }
    }

    #[test]
    fn frequencies() {
        let r = rotation_sequence(&golden(), 0.0, 100_000);
        assert!((letter_frequency(&r).unwrap() - 0.618).abs() < 1e-3);
        assert_eq!(letter_frequency(&w("0101")).unwrap(), 0.5);
        let fib = fixed_point(&Substitution::sigma(), 100_000).unwrap();
        assert!((letter_frequency(&fib).unwrap() - 0.382).abs() < 1e-3);
        assert!(matches!(letter_frequency(&Word::new()), Err(Error::EmptyWord)));
    }

    #[test]
    fn golden_slope_substitution() {
        let beta = slope_for_rotation(&golden());
        assert_eq!(beta.to_string(), "[1;(1)]");
        let s = cmps_substitution(&beta).unwrap();
        assert_eq!(s, Substitution::new(w("1"), w("10")).unwrap());
        let fp = fixed_point(&s, 10_000).unwrap();
        assert_eq!(s.apply(&fp).prefix(10_000), fp);
        assert_eq!(fp, rotation_sequence(&golden(), 0.0, 10_000));
        assert_eq!(fp, cutting_sequence(&beta, 10_000));

        let fib_slope: SlopeExpansion = "[0;1,(1)]".parse().unwrap();
        assert_eq!(cmps_substitution(&fib_slope).unwrap(), Substitution::sigma());
    }

    #[test]
    fn no_substitution_for_counterexample() {
        let alpha = parse_cf("[0;5,(1)]").unwrap();
        assert_eq!(slope_for_rotation(&alpha).to_string(), "[0;4,(1)]");
        assert!(cmps_for_rotation(&alpha).is_none());
        assert!(cmps_substitution(&"[3;(1,2)]".parse().unwrap()).is_none());
        assert!(cmps_substitution(&"[0;2,1,(3)]".parse().unwrap()).is_none());
    }

    #[test]
    fn slope_relation() {
        for text in ["[0;(1)]", "[0;5,(1)]", "[0;1,2,(3)]", "[0;(4,1)]"] {
            let alpha = parse_cf(text).unwrap();
            let a = alpha.value();
            let beta = slope_for_rotation(&alpha).value();
            assert!((beta - a / (1.0 - a)).abs() < 1e-13 * beta.max(1.0), "{text}");
            assert_eq!(
                cutting_sequence(&slope_for_rotation(&alpha), 3000),
                rotation_sequence(&alpha, 0.0, 3000),
                "{text}"
            );
        }
    }

    fn check_cmps(beta: &SlopeExpansion) {
        let s = cmps_substitution(beta).unwrap_or_else(|| panic!("no substitution for {beta}"));
        let cut = cutting_sequence(beta, 1000);
        let fp = fixed_point_from(&s, cut.letters()[0], 1000).unwrap();
        assert_eq!(fp, cut, "{beta}: {s}");
        let m = s.abelianization();
        assert!(m.is_primitive());
        assert!((m.perron_slope() - beta.value()).abs() < 1e-10, "{beta}");
    }

    #[test]
    fn cmps_fixed_points_match_cutting_sequences() {
        for text in [
            "[1;(1)]",
            "[2;(3)]",
            "[2;(2)]",
            "[1;(2,1)]",
            "[2;(1,3)]",
            "[3;(1,1,4)]",
            "[0;1,(1)]",
            "[0;2,(3)]",
            "[0;2,(1,2)]",
            "[0;(2,1)]",
            "[0;(3)]",
            "[0;1,(4,2,1)]",
        ] {
            check_cmps(&text.parse().unwrap());
        }
    }

    fn arb_word() -> impl Strategy<Value = Word> {
        prop::collection::vec(0u8..2, 0..100).prop_map(Word)
    }

    fn arb_subst() -> impl Strategy<Value = Substitution> {
        (
            prop::collection::vec(0u8..2, 1..6),
            prop::collection::vec(0u8..2, 1..6),
        )
            .prop_map(|(a, b)| Substitution::new(Word(a), Word(b)).unwrap())
    }

    proptest! {
        #[test]
        fn letter_counts_follow_matrix(s in arb_subst(), v in arb_word()) {
            let m = s.abelianization().0;
            let [n0, n1] = v.counts();
            let image = s.apply(&v).counts();
            prop_assert_eq!(image, [m[0][0] * n0 + m[0][1] * n1, m[1][0] * n0 + m[1][1] * n1]);
            prop_assert_eq!(s.apply(&v).len(), v.count(0) * s.image(0).len() + v.count(1) * s.image(1).len());
        }

        #[test]
        fn decomposition_multiplies_back(gens in prop::collection::vec(prop::bool::ANY, 0..=12)) {
            let gens: Vec<Generator> = gens.into_iter().map(|b| if b { Generator::H1 } else { Generator::H2 }).collect();
            let m = product(&gens);
            let dec = m.decompose_monoid().unwrap();
            prop_assert_eq!(product(&dec), m);
        }

        #[test]
        fn cmps_eigenvector_identity(b0 in 1u64..4, period in prop::collection::vec(1u64..5, 1..4), above in prop::bool::ANY) {
            let mut period = period;
            let last = period.len() - 1;
            period[last] = period[last].max(b0);
            let beta = if above {
                SlopeExpansion::new(b0, vec![], period).unwrap()
            } else {
                SlopeExpansion::new(0, vec![b0], period).unwrap()
            };
            let norm = beta.normalized();
            // Expansions whose normal form is shorter may change b_0; skip those.
            prop_assume!(norm.period.len() == beta.period.len() && norm.preperiod == beta.preperiod);
            let s = cmps_substitution(&beta).unwrap();
            let m = s.abelianization();
            prop_assert!((m.perron_slope() - beta.value()).abs() < 1e-10);
        }
    }
}
