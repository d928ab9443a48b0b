//! Periodic-approximant band sets `{E : |y_k(E)| ≤ 1}` and estimators built
//! on them.
//!
//! `y_k` is a polynomial of degree `q_k` in the energy whose level sets
//! `y_k = ±1` are real-rooted, so for `P ∈ {y_k − 1, y_k + 1, y_k'}`
//! the distance from `E` to the nearest root is at least
//! `((P'/P)² − P''/P)^{-1/2}`. Cells of an energy grid are certified
//! root-free or monotone with these radii from third-order Taylor jets, and
//! split otherwise.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext::ExtJet;
use crate::numberth::ContinuedFraction;
use crate::tracemap::{trace_step_generic, ModelParams, TraceScalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub level: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, e: f64) -> bool {
        self.lo <= e && e <= self.hi
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSet {
    pub level: usize,
    pub bands: Vec<Band>,
    pub total_measure: f64,
    /// Cells that could not be certified down to the minimum width; their
    /// edges come from plain sign changes.
    pub uncertified_cells: usize,
}

impl BandSet {
    /// Builds a band set from sorted, disjoint intervals.
    pub fn from_intervals(level: usize, intervals: &[(f64, f64)]) -> Result<Self> {
        for w in intervals.windows(2) {
            if w[1].0 <= w[0].1 {
                return Err(Error::InvalidParameter(
                    "intervals must be sorted and disjoint".into(),
                ));
            }
        }
        if intervals.iter().any(|&(lo, hi)| !(lo <= hi)) {
            return Err(Error::InvalidParameter("interval with lo > hi".into()));
        }
        let bands: Vec<Band> = intervals
            .iter()
            .map(|&(lo, hi)| Band { level, lo, hi })
            .collect();
        Ok(BandSet::from_bands(level, bands, 0))
    }

    fn from_bands(level: usize, bands: Vec<Band>, uncertified_cells: usize) -> Self {
        let total_measure = bands.iter().map(Band::width).sum();
        BandSet {
            level,
            bands,
            total_measure,
            uncertified_cells,
        }
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    /// Convex hull `[min, max]`.
    pub fn hull(&self) -> Option<(f64, f64)> {
        Some((self.bands.first()?.lo, self.bands.last()?.hi))
    }

    pub fn diameter(&self) -> f64 {
        self.hull().map_or(0.0, |(a, b)| b - a)
    }

    /// Distance from `e` to the set (0 inside).
    pub fn distance(&self, e: f64) -> f64 {
        let i = self.bands.partition_point(|b| b.hi < e);
        let mut d = f64::INFINITY;
        if let Some(b) = self.bands.get(i) {
            d = d.min(if b.lo <= e { 0.0 } else { b.lo - e });
        }
        if i > 0 {
            d = d.min(e - self.bands[i - 1].hi);
        }
        d
    }

    /// Number of bands lying entirely below `e`.
    pub fn count_below(&self, e: f64) -> usize {
        self.bands.partition_point(|b| b.hi < e)
    }

    /// Applies `E ↦ a E + b` (a > 0) to every endpoint.
    pub fn affine(&self, a: f64, b: f64) -> BandSet {
        let bands = self
            .bands
            .iter()
            .map(|band| Band {
                level: band.level,
                lo: a * band.lo + b,
                hi: a * band.hi + b,
            })
            .collect();
        BandSet::from_bands(self.level, bands, self.uncertified_cells)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub level: usize,
    pub lo: f64,
    pub hi: f64,
    pub label: Option<i64>,
    pub ids_value: Option<f64>,
}

impl Gap {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThicknessReport {
    pub tau: f64,
    pub theta: f64,
    pub dim_lower: f64,
    pub dim_upper: f64,
}

/// Tunables of the band finder.
#[derive(Clone, Debug, PartialEq)]
pub struct BandOptions {
    /// Search window is `[−2−λ−margin, 2+λ+margin]`.
    pub margin: f64,
    /// Initial grid cells per unit of `q_k`.
    pub grid_factor: usize,
    /// Grid doublings attempted when the band count is off.
    pub max_refinements: usize,
    /// Cells narrower than this are not split further.
    pub min_cell: f64,
    /// Largest admissible `q_k`.
    pub max_q: u128,
}

impl Default for BandOptions {
    fn default() -> Self {
        BandOptions {
            margin: 0.25,
            grid_factor: 8,
            max_refinements: 4,
            min_cell: 1e-13,
            max_q: 50_000,
        }
    }
}

/// Taylor jet order used for certification (value plus three derivatives).
type Jet = ExtJet<4>;

fn quotients(alpha: &ContinuedFraction, k: usize) -> Vec<u64> {
    alpha.quotients().take(k).collect()
}

fn y_generic<T: TraceScalar>(quots: &[u64], lambda: f64, e: T) -> T {
    let x = e.scale(0.5) - T::from_f64(0.5 * lambda);
    let mut p = (x, e.scale(0.5), T::from_f64(1.0));
    for &a in quots {
        p = trace_step_generic(a, p);
    }
    p.1
}

/// `y_k(E) = ½ tr A_k(E)`, saturating to ±∞ where it exceeds `f64`.
pub fn y_level(params: &ModelParams, k: usize, energy: f64) -> f64 {
    let q = quotients(&params.alpha, k);
    y_generic(&q, params.lambda, ExtJet::<1>::variable(energy)).coeff(0)
}

/// Lower bound on the distance to the nearest root of a real-rooted
/// polynomial from its value and first two Taylor coefficients.
fn root_free_radius(p0: f64, p1: f64, p2: f64) -> f64 {
    if p0 == 0.0 {
        return 0.0;
    }
    let r1 = p1 / p0;
    let s2 = r1 * r1 - 2.0 * p2 / p0;
    if s2 > 0.0 {
        1.0 / s2.sqrt()
    } else if s2 == 0.0 && p1 == 0.0 && p2 == 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Safety factor applied to computed radii to absorb rounding.
const RADIUS_SAFETY: f64 = 0.5;

/// Bands are computed as `{|y_k| ≤ 1 + LEVEL_SLACK}`. Where bands touch,
/// `y_k ∓ 1` has a double root that rounding would otherwise split into
/// spurious microscopic gaps; a root-free stretch of a real-rooted
/// polynomial is log-concave in absolute value, so certifying `y_k ∓ 1`
/// only where it exceeds the slack keeps the cell tests sound.
pub const LEVEL_SLACK: f64 = 1e-12;

#[derive(Clone, Copy)]
struct Sample {
    e: f64,
    jet: Jet,
}

impl Sample {
    /// Radius free of roots of `y − c`, or 0 where `|y − c|` is within the
    /// level slack and the value carries no reliable sign.
    fn level_radius(&self, c: f64) -> f64 {
        let shifted = self.jet - Jet::constant(c);
        if shifted.coeff(0).abs() <= LEVEL_SLACK {
            return 0.0;
        }
        let (p0, p1, p2) = (shifted.raw(0), shifted.raw(1), shifted.raw(2));
        RADIUS_SAFETY * root_free_radius(p0, p1, p2)
    }

    /// Radius free of roots of `y'`.
    fn slope_radius(&self) -> f64 {
        let (d0, d1, d2) = (self.jet.raw(1), 2.0 * self.jet.raw(2), 3.0 * self.jet.raw(3));
        RADIUS_SAFETY * root_free_radius(d0, d1, d2)
    }

    /// `y > 1 + slack`
    fn above(&self) -> bool {
        (self.jet - Jet::constant(1.0 + LEVEL_SLACK)).signum() > 0.0
    }

    /// `y < −1 − slack`
    fn below(&self) -> bool {
        (self.jet + Jet::constant(1.0 + LEVEL_SLACK)).signum() < 0.0
    }
}

struct Finder {
    quots: Vec<u64>,
    lambda: f64,
    min_cell: f64,
}

#[derive(Default)]
struct CellResult {
    edges: Vec<f64>,
    uncertified: usize,
}

impl Finder {
    fn sample(&self, e: f64) -> Sample {
        Sample {
            e,
            jet: y_generic(&self.quots, self.lambda, Jet::variable(e)),
        }
    }

    fn value(&self, e: f64) -> ExtJet<1> {
        y_generic(&self.quots, self.lambda, ExtJet::<1>::variable(e))
    }

    /// Edges of `{|y| ≤ 1}` in the cell `[a, b]`, increasing.
    fn cell(&self, a: Sample, b: Sample, out: &mut CellResult) {
        let width = b.e - a.e;
        let monotone = a.slope_radius() + b.slope_radius() > width;
        let quiet = |c: f64| a.level_radius(c) + b.level_radius(c) > width;
        if monotone || width <= self.min_cell {
            if !monotone {
                out.uncertified += 1;
            }
            let mut found = Vec::with_capacity(2);
            if a.above() != b.above() {
                found.push(self.bisect(a.e, b.e, 1.0, a.above()));
            }
            if a.below() != b.below() {
                found.push(self.bisect(a.e, b.e, -1.0, a.below()));
            }
            found.sort_by(f64::total_cmp);
            out.edges.extend(found);
            return;
        }
        if quiet(1.0) && quiet(-1.0) {
            return;
        }
        let mid = 0.5 * (a.e + b.e);
        let m = self.sample(mid);
        self.cell(a, m, out);
        self.cell(m, b, out);
    }

    /// Boundary of `{y > 1 + slack}` (c = 1) or `{y < −1 − slack}` (c = −1)
    /// in `(lo, hi)`, to adjacent floating-point numbers.
    fn bisect(&self, mut lo: f64, mut hi: f64, c: f64, lo_state: bool) -> f64 {
        let c = c * (1.0 + LEVEL_SLACK);
        let state = |e: f64| {
            let v = self.value(e) - ExtJet::constant(c);
            if c > 0.0 {
                v.signum() > 0.0
            } else {
                v.signum() < 0.0
            }
        };
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if state(mid) == lo_state {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let dev = |e: f64| (self.value(e) - ExtJet::constant(c)).coeff(0).abs();
        if dev(lo) <= dev(hi) {
            lo
        } else {
            hi
        }
    }

    fn run(&self, lo: f64, hi: f64, cells: usize) -> (Vec<f64>, usize) {
        let h = (hi - lo) / cells as f64;
        let samples: Vec<Sample> = (0..=cells)
            .into_par_iter()
            .map(|i| {
                let e = if i == cells { hi } else { lo + i as f64 * h };
                self.sample(e)
            })
            .collect();
        let results: Vec<CellResult> = samples
            .par_windows(2)
            .map(|w| {
                let mut r = CellResult::default();
                self.cell(w[0], w[1], &mut r);
                r
            })
            .collect();
        let mut edges = Vec::new();
        let mut uncertified = 0;
        for r in results {
            edges.extend(r.edges);
            uncertified += r.uncertified;
        }
        (edges, uncertified)
    }
}

fn level_q(params: &ModelParams, k: usize, max_q: u128) -> Result<u128> {
    if k == 0 {
        return Err(Error::InvalidParameter("level must be at least 1".into()));
    }
    let q = params.alpha.approximant(k)?.q;
    if q > max_q {
        return Err(Error::LevelTooLarge {
            level: k,
            q,
            max: max_q,
        });
    }
    Ok(q)
}

/// Bands of level `k` with default options.
pub fn bands(params: &ModelParams, k: usize) -> Result<BandSet> {
    bands_with(params, k, &BandOptions::default())
}

pub fn bands_with(params: &ModelParams, k: usize, opts: &BandOptions) -> Result<BandSet> {
    let q = level_q(params, k, opts.max_q)?;
    let finder = Finder {
        quots: quotients(&params.alpha, k),
        lambda: params.lambda,
        min_cell: opts.min_cell,
    };
    let reach = 2.0 + params.lambda + opts.margin;
    let mut cells = opts.grid_factor * q as usize;
    let mut found = 0;
    for _ in 0..=opts.max_refinements {
        let (edges, uncertified) = finder.run(-reach, reach, cells);
        let bands: Vec<Band> = edges
            .chunks(2)
            .filter(|c| c.len() == 2)
            .map(|c| Band {
                level: k,
                lo: c[0],
                hi: c[1],
            })
            .collect();
        found = bands.len();
        let consistent = edges.len() % 2 == 0;
        if consistent && (params.lambda == 0.0 || found as u128 == q) {
            return Ok(BandSet::from_bands(k, bands, uncertified));
        }
        cells *= 2;
    }
    Err(Error::BandCount {
        level: k,
        expected: q as usize,
        found,
    })
}

fn merge(level: usize, mut all: Vec<Band>) -> BandSet {
    all.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut merged: Vec<Band> = Vec::with_capacity(all.len());
    for b in all {
        match merged.last_mut() {
            Some(last) if b.lo <= last.hi => last.hi = last.hi.max(b.hi),
            _ => merged.push(Band { level, ..b }),
        }
    }
    BandSet::from_bands(level, merged, 0)
}

/// `B_k ∪ B_{k+1}`, coalesced.
pub fn spectrum_cover(params: &ModelParams, k: usize) -> Result<BandSet> {
    let (a, b) = rayon::join(|| bands(params, k), || bands(params, k + 1));
    let (a, b) = (a?, b?);
    let uncertified = a.uncertified_cells + b.uncertified_cells;
    let mut set = merge(k, a.bands.into_iter().chain(b.bands).collect());
    set.uncertified_cells = uncertified;
    Ok(set)
}

/// Bounded gaps of the band set, by position.
pub fn gaps_from_bands(bs: &BandSet) -> Vec<Gap> {
    bs.bands
        .windows(2)
        .filter(|w| w[1].lo > w[0].hi)
        .map(|w| Gap {
            level: bs.level,
            lo: w[0].hi,
            hi: w[1].lo,
            label: None,
            ids_value: None,
        })
        .collect()
}

/// Default box sizes: nine scales halving from `diameter/16` (eight octaves).
/// At level 12 the finest is still comparable to the narrowest bands.
pub fn default_scales(bs: &BandSet) -> Vec<f64> {
    let diam = bs.diameter();
    (4..=12).map(|j| diam * 0.5f64.powi(j)).collect()
}

/// Relative tolerance for endpoints that land on a box boundary up to rounding.
const BOX_SLACK: f64 = 1e-9;

/// Number of half-open boxes `[L + jε, L + (j+1)ε)` anchored at the left
/// edge that meet the band set.
pub fn box_count(bs: &BandSet, eps: f64) -> usize {
    let Some((left, _)) = bs.hull() else {
        return 0;
    };
    let mut count = 0usize;
    let mut last: Option<i64> = None;
    for b in &bs.bands {
        let first = ((b.lo - left) / eps + BOX_SLACK).floor() as i64;
        let end = if b.hi > b.lo {
            (((b.hi - left) / eps - BOX_SLACK).ceil() as i64 - 1).max(first)
        } else {
            first
        };
        let start = match last {
            Some(l) if l >= first => l + 1,
            _ => first,
        };
        if end >= start {
            count += (end - start + 1) as usize;
        }
        last = Some(last.map_or(end, |l| l.max(end)));
    }
    count
}

/// Least-squares slope of `log N(ε)` against `log(1/ε)`.
pub fn box_dimension(bs: &BandSet, scales: &[f64]) -> Result<f64> {
    if scales.len() < 4 {
        return Err(Error::DegenerateScales(format!(
            "need at least 4 scales, got {}",
            scales.len()
        )));
    }
    let (min, max) = scales
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &s| (a.min(s), b.max(s)));
    if !(min > 0.0) || max / min < 100.0 {
        return Err(Error::DegenerateScales(
            "scales must be positive and span at least two decades".into(),
        ));
    }
    if bs.is_empty() {
        return Err(Error::TooFewBands { needed: 1, got: 0 });
    }
    let pts: Vec<(f64, f64)> = scales
        .iter()
        .map(|&s| ((1.0 / s).ln(), (box_count(bs, s) as f64).ln()))
        .collect();
    Ok(least_squares_slope(&pts).0)
}

/// Slope and root-mean-square residual of a least-squares line.
pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = pts
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
        .sum();
    (slope, (rss / n).sqrt())
}

/// Bridge-to-gap ratios over the presentation ordering gaps by decreasing
/// length.
pub fn thickness_denseness(bs: &BandSet) -> Result<ThicknessReport> {
    if bs.len() < 2 {
        return Err(Error::TooFewBands {
            needed: 2,
            got: bs.len(),
        });
    }
    let gaps = gaps_from_bands(bs);
    if gaps.is_empty() {
        return Err(Error::TooFewBands { needed: 2, got: 1 });
    }
    let (hull_lo, hull_hi) = bs.hull().unwrap();
    let mut order: Vec<usize> = (0..gaps.len()).collect();
    order.sort_by(|&i, &j| gaps[j].width().total_cmp(&gaps[i].width()).then(i.cmp(&j)));

    let mut removed: BTreeSet<usize> = BTreeSet::new();
    let (mut tau, mut theta) = (f64::INFINITY, 0.0f64);
    for i in order {
        let g = &gaps[i];
        let left_end = removed.range(..i).next_back().map_or(hull_lo, |&j| gaps[j].hi);
        let right_end = removed.range(i + 1..).next().map_or(hull_hi, |&j| gaps[j].lo);
        for bridge in [g.lo - left_end, right_end - g.hi] {
            let r = bridge / g.width();
            tau = tau.min(r);
            theta = theta.max(r);
        }
        removed.insert(i);
    }
    let ln2 = 2f64.ln();
    Ok(ThicknessReport {
        tau,
        theta,
        dim_lower: ln2 / (2.0 + 1.0 / tau).ln(),
        dim_upper: ln2 / (2.0 + 1.0 / theta).ln(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapOpeningRow {
    pub lambda: f64,
    pub width: Option<f64>,
    pub ratio: Option<f64>,
    /// Integrated density of states `j/q_k` of the tracked gap.
    pub ids_value: Option<f64>,
    pub error: Option<String>,
}

/// Smallest gap width treated as resolved.
pub const GAP_RESOLUTION: f64 = 1e-12;

/// Width of the gap labelled `m` at level `k` for each coupling.
///
/// The gap is the one between the `j`-th and `(j+1)`-th band with
/// `j/q_k` closest to `{mα}` (within `1/(2q_k)`): the integrated density of
/// states of the periodic approximant takes exactly the value `j/q_k` there.
pub fn gap_opening_study(
    alpha: &ContinuedFraction,
    m: i64,
    lambdas: &[f64],
    level: usize,
) -> Vec<GapOpeningRow> {
    let target = (m as f64 * alpha.value()).rem_euclid(1.0);
    lambdas
        .par_iter()
        .map(|&lambda| {
            let row = |width: Option<f64>, ids: Option<f64>, error: Option<String>| GapOpeningRow {
                lambda,
                width,
                ratio: width.map(|w| w / lambda),
                ids_value: ids,
                error,
            };
            if !(lambda > 0.0) {
                return row(None, None, Some("lambda must be > 0".into()));
            }
            let params = match ModelParams::new(lambda, alpha.clone()) {
                Ok(p) => p,
                Err(e) => return row(None, None, Some(e.to_string())),
            };
            let bs = match bands(&params, level) {
                Ok(b) => b,
                Err(e) => return row(None, None, Some(e.to_string())),
            };
            // In the q_k-periodic approximant the gap labelled m sits after
            // band j = m·p_k mod q_k, with IDS j/q_k ≈ {mα}.
            let Ok(apx) = alpha.approximant(level) else {
                return row(None, None, Some(format!("level {level} overflows")));
            };
            let q = apx.q as i128;
            let j = (m as i128 * apx.p as i128).rem_euclid(q) as usize;
            if bs.len() as i128 != q
                || j == 0
                || (j as f64 / q as f64 - target).abs() > 0.5 / q as f64
            {
                return row(None, None, Some(format!("no gap with label {m} at level {level}")));
            }
            let width = bs.bands[j].lo - bs.bands[j - 1].hi;
            let ids = j as f64 / q as f64;
            if width <= GAP_RESOLUTION {
                return row(None, Some(ids), Some(format!("gap {m} not resolved (width {width:e})")));
            }
            row(Some(width), Some(ids), None)
        })
        .collect()
}
