//! Integrated density of states.
//!
//! `N(E)` is approximated by `(1/L)·#{eigenvalues of H^[1,L] below E}`,
//! counted exactly by Sturm inertia on the tridiagonal restriction. The
//! same counter certifies band sets against periodic approximants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numberth::ContinuedFraction;
use crate::spectrum::{least_squares_slope, Gap};
use crate::tracemap::ModelParams;
use crate::words::rotation_sequence;

/// Near-zero pivots of the Sturm recursion are replaced by this, signed.
const PIVOT_GUARD: f64 = 1e-300;

/// Largest `q_k` accepted for the periodic oracle.
const MAX_PERIOD: u128 = 100_000;

/// `λ·R_{α,ω}(n)` for `n = 1..=len`.
pub fn potential(params: &ModelParams, omega: f64, len: usize) -> Vec<f64> {
    rotation_sequence(&params.alpha, omega, len)
        .letters()
        .iter()
        .map(|&l| params.lambda * l as f64)
        .collect()
}

/// Symmetric tridiagonal matrix with unit off-diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DirichletOperator {
    pub diagonal: Vec<f64>,
}

impl DirichletOperator {
    pub fn new(diagonal: Vec<f64>) -> Self {
        DirichletOperator { diagonal }
    }

    /// `H^[1,L]` of the Sturmian operator.
    pub fn restriction(params: &ModelParams, omega: f64, len: usize) -> Self {
        DirichletOperator::new(potential(params, omega, len))
    }

    /// Restriction to `[1, 2q_k − 1]` of the `q_k`-periodic approximant
    /// potential. Its eigenvalues are the zeros of `(A_k)_{21}`, one in each
    /// gap closure (possibly on a band edge), together with the zeros of
    /// `y_k`, exactly one inside each band.
    pub fn periodic_approximant(params: &ModelParams, k: usize) -> Result<Self> {
        let q = params.alpha.approximant(k)?.q;
        if q > MAX_PERIOD {
            return Err(Error::LevelTooLarge {
                level: k,
                q,
                max: MAX_PERIOD,
            });
        }
        let q = q as usize;
        let period = potential(params, 0.0, q);
        Ok(DirichletOperator::new(
            (0..2 * q - 1).map(|n| period[n % q]).collect(),
        ))
    }

    pub fn len(&self) -> usize {
        self.diagonal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagonal.is_empty()
    }

    /// Number of eigenvalues strictly below `energy`.
    pub fn count_below(&self, energy: f64) -> usize {
        let mut count = 0;
        let mut d = 1.0f64;
        let mut first = true;
        for &v in &self.diagonal {
            d = if first { v - energy } else { v - energy - 1.0 / d };
            first = false;
            if d.abs() < PIVOT_GUARD {
                d = if d < 0.0 { -PIVOT_GUARD } else { PIVOT_GUARD };
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Number of eigenvalues in the closed interval `[lo, hi]`.
    pub fn count_in(&self, lo: f64, hi: f64) -> usize {
        self.count_below(hi.next_up()).saturating_sub(self.count_below(lo))
    }
}

/// `N_0(E) = (1/π) arccos(−E/2)` on `[−2, 2]`, clamped outside.
pub fn free_ids(energy: f64) -> f64 {
    if energy <= -2.0 {
        0.0
    } else if energy >= 2.0 {
        1.0
    } else {
        (-energy / 2.0).acos() / std::f64::consts::PI
    }
}

/// `n` equally spaced energies from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let h = (hi - lo) / (n - 1) as f64;
            (0..n).map(|i| if i + 1 == n { hi } else { lo + h * i as f64 }).collect()
        }
    }
}

/// `[−2−λ−0.1, 2+λ+0.1]`
pub fn default_window(lambda: f64) -> (f64, f64) {
    (-2.1 - lambda, 2.1 + lambda)
}

/// Sampled `N(E)` on a sorted grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdsTable {
    pub energies: Vec<f64>,
    pub values: Vec<f64>,
    pub size: usize,
}

impl IdsTable {
    /// Linear interpolation, constant outside the grid.
    pub fn value_at(&self, energy: f64) -> f64 {
        let e = &self.energies;
        if e.is_empty() {
            return f64::NAN;
        }
        let i = e.partition_point(|&x| x <= energy);
        if i == 0 {
            return self.values[0];
        }
        if i == e.len() {
            return self.values[e.len() - 1];
        }
        let (e0, e1) = (e[i - 1], e[i]);
        if energy == e0 {
            return self.values[i - 1];
        }
        let t = (energy - e0) / (e1 - e0);
        self.values[i - 1] + t * (self.values[i] - self.values[i - 1])
    }

    /// Largest spacing of the grid.
    pub fn spacing(&self) -> f64 {
        self.energies
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// First grid energy with `N ≥ u`.
    fn quantile(&self, u: f64) -> f64 {
        let i = self.values.partition_point(|&v| v < u);
        self.energies[i.min(self.energies.len() - 1)]
    }

    /// Energies between the last grid point with `N = 0` and the first with
    /// `N = 1`.
    pub fn support_diameter(&self) -> f64 {
        let lo = self.values.partition_point(|&v| v <= 0.0).saturating_sub(1);
        let hi = self.values.partition_point(|&v| v < 1.0).min(self.values.len() - 1);
        self.energies[hi] - self.energies[lo]
    }
}

/// `N(E) = count_below(E)/L` on `grid`, which must be sorted.
pub fn ids_curve(params: &ModelParams, omega: f64, size: usize, grid: &[f64]) -> Result<IdsTable> {
    if size == 0 {
        return Err(Error::InvalidParameter("size must be ≥ 1".into()));
    }
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter("grid must be nonempty and strictly increasing".into()));
    }
    let op = DirichletOperator::restriction(params, omega, size);
    let values = grid
        .par_iter()
        .map(|&e| op.count_below(e) as f64 / size as f64)
        .collect();
    Ok(IdsTable {
        energies: grid.to_vec(),
        values,
        size,
    })
}

/// `(m, {mα})` for each `m`.
pub fn gap_labels(alpha: &ContinuedFraction, ms: impl IntoIterator<Item = i64>) -> Vec<(i64, f64)> {
    let a = alpha.value_dd();
    ms.into_iter()
        .map(|m| (m, (a * crate::dd::Dd::from_i128(m as i128)).fract().to_f64()))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbiguousGap {
    pub gap: usize,
    pub labels: Vec<i64>,
}

/// Result of [`match_gaps_to_labels`]. Gap indices refer to `gaps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMatching {
    /// Input gaps with `ids_value = N(midpoint)` and the label, if unique.
    pub gaps: Vec<Gap>,
    pub unmatched_gaps: Vec<usize>,
    pub ambiguous: Vec<AmbiguousGap>,
    /// Labels realised by no gap.
    pub unmatched_labels: Vec<i64>,
}

/// Label each gap by the unique `m ≠ 0` with `|N(midpoint) − {mα}| < tol`.
/// The table should resolve each gap: either grid points inside it or its
/// midpoint on the grid.
pub fn match_gaps_to_labels(
    gaps: &[Gap],
    table: &IdsTable,
    labels: &[(i64, f64)],
    tol: f64,
) -> LabelMatching {
    let labels: Vec<_> = labels.iter().filter(|l| l.0 != 0).collect();
    let mut out = LabelMatching {
        gaps: Vec::with_capacity(gaps.len()),
        unmatched_gaps: vec![],
        ambiguous: vec![],
        unmatched_labels: vec![],
    };
    let mut realised = vec![false; labels.len()];
    for (i, g) in gaps.iter().enumerate() {
        let n = table.value_at(g.midpoint());
        let hits: Vec<usize> = (0..labels.len())
            .filter(|&j| (n - labels[j].1).abs() < tol)
            .collect();
        let mut gap = Gap {
            ids_value: Some(n),
            label: None,
            ..g.clone()
        };
        match hits.as_slice() {
            [] => out.unmatched_gaps.push(i),
            [j] => {
                gap.label = Some(labels[*j].0);
                realised[*j] = true;
            }
            _ => out.ambiguous.push(AmbiguousGap {
                gap: i,
                labels: hits.iter().map(|&j| labels[j].0).collect(),
            }),
        }
        out.gaps.push(gap);
    }
    out.unmatched_labels = labels
        .iter()
        .zip(&realised)
        .filter(|(_, &r)| !r)
        .map(|(l, _)| l.0)
        .collect();
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalSample {
    pub energy: f64,
    pub slope: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalDimensionEstimate {
    /// Median of the per-sample slopes.
    pub d_estimate: f64,
    pub samples: Vec<LocalSample>,
    pub epsilons: Vec<f64>,
    /// Draws rejected because some increment was zero.
    pub discarded: usize,
}

/// Eight radii from `10h` to `diam/10`, rounded to multiples of the grid
/// spacing `h`.
pub fn default_epsilons(table: &IdsTable) -> Vec<f64> {
    let h = table.spacing();
    let (lo, hi) = (10.0 * h, 0.1 * table.support_diameter());
    let mut out: Vec<f64> = (0..8)
        .map(|i| {
            let e = lo * (hi / lo).powf(i as f64 / 7.0);
            (e / h).round().max(1.0) * h
        })
        .collect();
    out.dedup_by(|a, b| (*a - *b).abs() < 0.5 * h);
    out
}

/// Local scaling exponent of `dN` at `E`-values drawn from `dN` itself
/// (inverse-CDF on the table): per sample, the least-squares slope of
/// `log(N(E+ε) − N(E−ε))` against `log ε`.
pub fn dos_local_dimension(
    table: &IdsTable,
    epsilons: &[f64],
    sample_count: usize,
    seed: u64,
) -> Result<LocalDimensionEstimate> {
    if epsilons.len() < 4 {
        return Err(Error::DegenerateScales(format!(
            "need at least 4 radii, got {}",
            epsilons.len()
        )));
    }
    let (emin, emax) = epsilons
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    if !(emin > 0.0) || emax / emin < 100.0 * (1.0 - 1e-9) {
        return Err(Error::DegenerateScales(
            "radii must be positive and span at least 2 decades".into(),
        ));
    }
    let h = table.spacing();
    if emin < 2.0 * h * (1.0 - 1e-9) {
        return Err(Error::DegenerateScales(format!(
            "smallest radius {emin:e} is below two grid spacings ({:e})",
            2.0 * h
        )));
    }
    if sample_count == 0 {
        return Err(Error::InvalidParameter("sample count must be ≥ 1".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_draws = 100 * sample_count;
    let mut samples = Vec::with_capacity(sample_count);
    let mut discarded = 0;
    for _ in 0..max_draws {
        if samples.len() == sample_count {
            break;
        }
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        let e = table.quantile(u);
        let pts: Option<Vec<(f64, f64)>> = epsilons
            .iter()
            .map(|&eps| {
                let dn = table.value_at(e + eps) - table.value_at(e - eps);
                (dn > 0.0).then(|| (eps.ln(), dn.ln()))
            })
            .collect();
        match pts {
            Some(pts) => {
                let (slope, residual) = least_squares_slope(&pts);
                samples.push(LocalSample {
                    energy: e,
                    slope,
                    residual,
                });
            }
            None => discarded += 1,
        }
    }
    if samples.len() < sample_count {
        return Err(Error::Sampling {
            wanted: sample_count,
            got: samples.len(),
        });
    }
    let mut slopes: Vec<f64> = samples.iter().map(|s| s.slope).collect();
    slopes.sort_by(f64::total_cmp);
    let n = slopes.len();
    let d_estimate = if n % 2 == 1 {
        slopes[n / 2]
    } else {
        0.5 * (slopes[n / 2 - 1] + slopes[n / 2])
    };
    Ok(LocalDimensionEstimate {
        d_estimate,
        samples,
        epsilons: epsilons.to_vec(),
        discarded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numberth::parse_cf;
    use crate::spectrum::{bands, gaps_from_bands, spectrum_cover};
    use proptest::prelude::*;

    fn params(lambda: f64, cf: &str) -> ModelParams {
        ModelParams::new(lambda, parse_cf(cf).unwrap()).unwrap()
    }

    #[test]
    fn potential_examples() {
        assert!(potential(&params(0.0, "[0;(1)]"), 0.3, 50).iter().all(|&v| v == 0.0));
        assert_eq!(potential(&params(2.0, "[0;(1)]"), 0.0, 3), vec![2.0, 0.0, 2.0]);
        let v = potential(&params(1.0, "[0;2,(1,3)]"), 0.41, 500);
        assert!(v.iter().all(|&x| x == 0.0 || x == 1.0));
    }

    #[test]
    fn count_below_examples() {
        // (2 − E)(E² − 2E − 2): eigenvalues 1 − √3, 2, 1 + √3
        let op = DirichletOperator::new(vec![2.0, 0.0, 2.0]);
        assert_eq!(op.count_below(1.0), 1);
        assert_eq!(op.count_below(2.0), 1);
        assert_eq!(op.count_below(2.5), 2);
        assert_eq!(op.count_below(3.0), 3);
        assert_eq!(op.count_in(2.0, 2.0), 1);

        let free = DirichletOperator::new(vec![0.0; 100]);
        assert_eq!(free.count_below(0.0), 50);
        assert_eq!(free.count_below(2.0), 100);
        assert_eq!(free.count_below(-2.0), 0);
        for j in 1..=100 {
            let ev = 2.0 * (j as f64 * std::f64::consts::PI / 101.0).cos();
            assert_eq!(free.count_below(ev + 1e-9), 101 - j);
        }
    }

    #[test]
    fn count_below_at_norm_bound() {
        let pr = params(1.5, "[0;(1)]");
        let op = DirichletOperator::restriction(&pr, 0.2, 1000);
        assert_eq!(op.count_below(-2.0 - 1e-9), 0);
        assert_eq!(op.count_below(3.5 + 1e-9), 1000);
    }

    #[test]
    fn free_ids_closed_form() {
        assert_eq!(free_ids(-2.0), 0.0);
        assert_eq!(free_ids(-3.0), 0.0);
        assert!((free_ids(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(free_ids(2.0), 1.0);
        assert!((free_ids(1.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn free_curve_matches_closed_form() {
        let pr = params(0.0, "[0;(1)]");
        let grid = uniform_grid(-2.0, 2.0, 2001);
        let t = ids_curve(&pr, 0.0, 10_000, &grid).unwrap();
        let dev = grid
            .iter()
            .zip(&t.values)
            .map(|(&e, &n)| (n - free_ids(e)).abs())
            .fold(0.0, f64::max);
        assert!(dev <= 2e-3, "{dev}");
        assert_eq!(t.value_at(0.0), 0.5);
    }

    #[test]
    fn curve_is_monotone_with_limits() {
        let pr = params(1.0, "[0;(2)]");
        let (lo, hi) = default_window(1.0);
        let t = ids_curve(&pr, 0.0, 3000, &uniform_grid(lo, hi, 801)).unwrap();
        assert!(t.values.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(t.values[0], 0.0);
        assert_eq!(*t.values.last().unwrap(), 1.0);
    }

    #[test]
    fn curve_is_nearly_phase_independent() {
        let pr = params(1.0, "[0;(1)]");
        let size = 10_000;
        let grid = uniform_grid(-3.0, 3.0, 1201);
        let curves: Vec<_> = [0.0, 0.3, 0.7]
            .iter()
            .map(|&w| ids_curve(&pr, w, size, &grid).unwrap())
            .collect();
        for c in &curves[1..] {
            // compare eigenvalue counts, exactly
            let d = c
                .values
                .iter()
                .zip(&curves[0].values)
                .map(|(a, b)| ((a - b) * size as f64).round().abs() as usize)
                .max()
                .unwrap();
            assert!(d <= 2, "{d}");
        }
    }

    #[test]
    fn periodic_oracle_one_eigenvalue_inside_each_band() {
        // golden λ=1 at k = 5, 8 has (A_k)_21 vanishing on band edges (E = −1, 1, 2)
        for (cf, lambda, k) in [("[0;(1)]", 1.0, 10), ("[0;(1)]", 1.0, 5), ("[0;(1)]", 1.0, 8), ("[0;(2)]", 0.5, 6), ("[0;3,(1,2)]", 2.0, 7)] {
            let pr = params(lambda, cf);
            let bs = bands(&pr, k).unwrap();
            let op = DirichletOperator::periodic_approximant(&pr, k).unwrap();
            assert_eq!(op.len(), 2 * bs.len() - 1);
            for b in &bs.bands {
                assert_eq!(op.count_in(b.lo + 1e-9, b.hi - 1e-9), 1, "{cf} {b:?}");
            }
        }
    }

    #[test]
    fn ids_constant_on_gaps() {
        let pr = params(1.0, "[0;(1)]");
        let size = 5000;
        let op = DirichletOperator::restriction(&pr, 0.0, size);
        for g in gaps_from_bands(&spectrum_cover(&pr, 10).unwrap()) {
            // at most one edge state per boundary of [1, L]
            let jump = op.count_below(g.hi) - op.count_below(g.lo.next_up());
            assert!(jump <= 2, "{g:?}: {jump}");
        }
    }

    #[test]
    fn gap_label_values() {
        let golden = parse_cf("[0;(1)]").unwrap();
        let l = gap_labels(&golden, [1, 2, 0, -1]);
        assert!((l[0].1 - 0.6180339887498949).abs() < 1e-15);
        assert!((l[1].1 - 0.2360679774997898).abs() < 1e-15);
        assert_eq!(l[2].1, 0.0);
        assert!((l[3].1 - 0.3819660112501051).abs() < 1e-15);
    }

    #[test]
    fn matching_degenerate_cases() {
        let golden = parse_cf("[0;(1)]").unwrap();
        let pr = ModelParams::new(1.0, golden.clone()).unwrap();
        let gaps = gaps_from_bands(&bands(&pr, 6).unwrap());
        let grid = uniform_grid(-3.0, 3.0, 3001);
        let t = ids_curve(&pr, 0.0, 2000, &grid).unwrap();
        let labels = gap_labels(&golden, -5..=5);
        let none = match_gaps_to_labels(&gaps, &t, &labels, 0.0);
        assert_eq!(none.unmatched_gaps.len(), gaps.len());
        assert_eq!(none.unmatched_labels.len(), 10);

        let free = ModelParams::new(0.0, golden).unwrap();
        let empty = gaps_from_bands(&bands(&free, 8).unwrap());
        assert!(empty.is_empty());
        let m = match_gaps_to_labels(&empty, &t, &labels, 1e-3);
        assert!(m.gaps.is_empty() && m.ambiguous.is_empty());
    }

    #[test]
    fn matching_reports_ambiguity() {
        let g = Gap { level: 0, lo: 0.0, hi: 1.0, label: None, ids_value: None };
        let t = IdsTable { energies: vec![0.0, 1.0], values: vec![0.5, 0.5], size: 2 };
        let m = match_gaps_to_labels(&[g], &t, &[(1, 0.49), (2, 0.51), (0, 0.5)], 0.05);
        assert_eq!(m.ambiguous, vec![AmbiguousGap { gap: 0, labels: vec![1, 2] }]);
        assert_eq!(m.gaps[0].label, None);
    }

    #[test]
    fn free_local_dimension_is_one() {
        let pr = params(0.0, "[0;(1)]");
        let (lo, hi) = default_window(0.0);
        let t = ids_curve(&pr, 0.0, 10_000, &uniform_grid(lo, hi, 20_001)).unwrap();
        let eps = default_epsilons(&t);
        let est = dos_local_dimension(&t, &eps, 200, 7).unwrap();
        assert!((est.d_estimate - 1.0).abs() < 0.05, "{}", est.d_estimate);
        let again = dos_local_dimension(&t, &eps, 200, 7).unwrap();
        assert_eq!(est, again);
    }

    #[test]
    fn local_dimension_validates_radii() {
        let t = IdsTable {
            energies: uniform_grid(0.0, 1.0, 101),
            values: uniform_grid(0.0, 1.0, 101),
            size: 100,
        };
        assert!(dos_local_dimension(&t, &[0.02, 0.04, 0.08], 5, 0).is_err());
        assert!(dos_local_dimension(&t, &[0.02, 0.04, 0.08, 0.16], 5, 0).is_err());
        assert!(dos_local_dimension(&t, &[0.001, 0.01, 0.1, 1.0], 5, 0).is_err());
    }

    proptest! {
        #[test]
        fn sturm_count_matches_eigenvalues(
            diag in proptest::collection::vec(-3.0f64..3.0, 1..40),
            e in -5.0f64..5.0,
        ) {
            let n = diag.len();
            let m = nalgebra::DMatrix::from_fn(n, n, |i, j| {
                if i == j { diag[i] } else if i.abs_diff(j) == 1 { 1.0 } else { 0.0 }
            });
            let ev = m.symmetric_eigenvalues();
            prop_assume!(ev.iter().all(|&x| (x - e).abs() > 1e-9));
            let want = ev.iter().filter(|&&x| x < e).count();
            prop_assert_eq!(DirichletOperator::new(diag).count_below(e), want);
        }

        #[test]
        fn count_below_is_monotone(lambda in 0.0f64..3.0, omega in 0.0f64..1.0, a in -6.0f64..6.0, b in -6.0f64..6.0) {
            let op = DirichletOperator::restriction(&params(lambda, "[0;(1)]"), omega, 300);
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(op.count_below(a) <= op.count_below(b));
        }
    }
}
