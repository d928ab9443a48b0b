//! Trace-map dynamics on half-trace triples.
//!
//! With `A(a) = [[E − λa, −1], [1, 0]]`, `A_{-1} = [[1, −λ], [0, 1]]`,
//! `A_0 = A(0)` and `A_{k+1} = A_{k−1} A_k^{a_{k+1}}`, the triples
//! `(½tr A_k A_{k−1}, ½tr A_k, ½tr A_{k−1})` obey
//! `T_a(x, y, z) = (xU_a(y) − zU_{a−1}(y), xU_{a−1}(y) − zU_{a−2}(y), y)`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numberth::ContinuedFraction;
use crate::words::rotation_sequence;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl TracePoint {
    pub const P1: TracePoint = TracePoint {
        x: 1.0,
        y: 1.0,
        z: 1.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        TracePoint { x, y, z }
    }

    pub fn max_norm(&self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        TracePoint::new(v[0], v[1], v[2])
    }
}

/// Scalars the trace recursion can run over: plain floats, or Taylor jets
/// in the energy for the band finder.
pub trait TraceScalar: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {
    fn from_f64(v: f64) -> Self;
    fn scale(self, s: f64) -> Self;
}

impl TraceScalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

/// `(U_a(y), U_{a−1}(y), U_{a−2}(y))` for `a ≥ 0`, with `U_{−2} = −1`.
pub fn chebyshev_triple<T: TraceScalar>(a: u64, y: T) -> (T, T, T) {
    let two_y = y.scale(2.0);
    let (mut u2, mut u1) = (T::from_f64(-1.0), T::from_f64(0.0));
    let mut u = T::from_f64(1.0);
    for _ in 0..a {
        let next = two_y * u - u1;
        u2 = u1;
        u1 = u;
        u = next;
    }
    (u, u1, u2)
}

/// Chebyshev polynomial of the second kind, `U_{−1} = 0`, `U_0 = 1`,
/// `U_{a+1} = 2xU_a − U_{a−1}`. Also accepts `a = −2` (value −1).
pub fn chebyshev_u(a: i64, x: f64) -> f64 {
    assert!(a >= -2, "chebyshev_u defined for a ≥ -2");
    match a {
        -2 => -1.0,
        -1 => 0.0,
        _ => chebyshev_triple(a as u64, x).0,
    }
}

/// `(U_j, U'_j)` for `j = a, a−1, a−2`.
fn chebyshev_with_derivative(a: u64, y: f64) -> [(f64, f64); 3] {
    let (mut u2, mut u1, mut u) = ((-1.0, 0.0), (0.0, 0.0), (1.0, 0.0));
    for _ in 0..a {
        let next = (2.0 * y * u.0 - u1.0, 2.0 * u.0 + 2.0 * y * u.1 - u1.1);
        u2 = u1;
        u1 = u;
        u = next;
    }
    [u, u1, u2]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix2(pub [[f64; 2]; 2]);

impl Matrix2 {
    pub const IDENTITY: Matrix2 = Matrix2([[1.0, 0.0], [0.0, 1.0]]);

    /// One-site transfer matrix `[[E − λa, −1], [1, 0]]`.
    pub fn transfer(lambda: f64, energy: f64, letter: u8) -> Self {
        Matrix2([[energy - lambda * letter as f64, -1.0], [1.0, 0.0]])
    }

    pub fn mul(&self, rhs: &Matrix2) -> Matrix2 {
        let (a, b) = (self.0, rhs.0);
        Matrix2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn lin_comb(&self, s: f64, t: f64, rhs: &Matrix2) -> Matrix2 {
        let mut m = [[0.0; 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = s * self.0[i][j] + t * rhs.0[i][j];
            }
        }
        Matrix2(m)
    }

    pub fn pow_naive(&self, n: u32) -> Matrix2 {
        (0..n).fold(Matrix2::IDENTITY, |acc, _| acc.mul(self))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix3(pub [[f64; 3]; 3]);

impl Matrix3 {
    pub fn mul_vec(&self, v: [f64; 3]) -> [f64; 3] {
        let m = self.0;
        [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
    }

    pub fn mul(&self, rhs: &Matrix3) -> Matrix3 {
        let mut c = [[0.0; 3]; 3];
        for (i, row) in c.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        Matrix3(c)
    }
}

/// `A^a = U_{a−1}(x) A − U_{a−2}(x) I` with `x = ½ tr A`.
pub fn matrix_power_via_chebyshev(m: &Matrix2, a: u32) -> Result<Matrix2> {
    let det = m.det();
    if (det - 1.0).abs() > 1e-12 {
        return Err(Error::NotUnimodular { det });
    }
    if a == 0 {
        return Ok(Matrix2::IDENTITY);
    }
    let (_, u1, u2) = chebyshev_triple(a as u64, 0.5 * m.trace());
    Ok(m.lin_comb(u1, -u2, &Matrix2::IDENTITY))
}

pub fn trace_step_generic<T: TraceScalar>(a: u64, (x, y, z): (T, T, T)) -> (T, T, T) {
    let (u, u1, u2) = chebyshev_triple(a, y);
    (x * u - z * u1, x * u1 - z * u2, y)
}

/// `T_a(x, y, z)`.
pub fn trace_step(a: u64, p: TracePoint) -> TracePoint {
    let (x, y, z) = trace_step_generic(a, (p.x, p.y, p.z));
    TracePoint::new(x, y, z)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuxMap {
    U,
    P,
}

/// `U(x, y, z) = (2xz − y, x, z)`
pub fn u_map(p: TracePoint) -> TracePoint {
    TracePoint::new(2.0 * p.x * p.z - p.y, p.x, p.z)
}

/// `P(x, y, z) = (x, z, y)`
pub fn p_map(p: TracePoint) -> TracePoint {
    TracePoint::new(p.x, p.z, p.y)
}

pub fn aux_map(which: AuxMap, p: TracePoint) -> TracePoint {
    match which {
        AuxMap::U => u_map(p),
        AuxMap::P => p_map(p),
    }
}

/// `I(x, y, z) = x² + y² + z² − 2xyz − 1`
pub fn fricke_vogt(p: TracePoint) -> f64 {
    p.x * p.x + p.y * p.y + p.z * p.z - 2.0 * p.x * p.y * p.z - 1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: f64,
    pub alpha: ContinuedFraction,
}

impl ModelParams {
    pub fn new(lambda: f64, alpha: ContinuedFraction) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter("lambda must be ≥ 0".into()));
        }
        Ok(ModelParams { lambda, alpha })
    }

    /// Level `λ²/4` of the invariant surface.
    pub fn surface_level(&self) -> f64 {
        0.25 * self.lambda * self.lambda
    }

    pub fn escape_radius(&self) -> f64 {
        (2.0 + self.lambda).max(4.0)
    }
}

/// `((E − λ)/2, E/2, 1)`
pub fn initial_point(params: &ModelParams, energy: f64) -> TracePoint {
    TracePoint::new(0.5 * (energy - params.lambda), 0.5 * energy, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum OrbitStatus {
    Escaped { step: usize, overflow: bool },
    Bounded { steps: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitResult {
    pub status: OrbitStatus,
    /// Points `0..=last step`, starting at the initial point.
    pub trajectory: Option<Vec<TracePoint>>,
    pub max_norm: f64,
    pub invariant_drift: f64,
}

impl OrbitResult {
    pub fn escaped(&self) -> bool {
        matches!(self.status, OrbitStatus::Escaped { .. })
    }
}

/// Consecutive norm increases above the escape radius that count as escape.
pub const ESCAPE_STREAK: usize = 3;

/// Iterates `T_{a_k}` from the initial point, stopping at escape.
pub fn trace_orbit(params: &ModelParams, energy: f64, kmax: usize) -> OrbitResult {
    let level = params.surface_level();
    let radius = params.escape_radius();
    let mut p = initial_point(params, energy);
    let mut traj = vec![p];
    let mut max_norm = p.max_norm();
    let mut drift = (fricke_vogt(p) - level).abs();
    let mut streak = 0;
    let mut status = OrbitStatus::Bounded { steps: kmax };
    for (k, a) in (1..=kmax).zip(params.alpha.quotients()) {
        let prev = p.max_norm();
        p = trace_step(a, p);
        if !p.is_finite() {
            status = OrbitStatus::Escaped {
                step: k,
                overflow: true,
            };
            break;
        }
        traj.push(p);
        let n = p.max_norm();
        max_norm = max_norm.max(n);
        drift = drift.max((fricke_vogt(p) - level).abs());
        streak = if n > radius && n > prev { streak + 1 } else { 0 };
        if streak >= ESCAPE_STREAK {
            status = OrbitStatus::Escaped {
                step: k,
                overflow: false,
            };
            break;
        }
    }
    OrbitResult {
        status,
        trajectory: Some(traj),
        max_norm,
        invariant_drift: drift,
    }
}

/// Points `0..=kmax` of the orbit together with their energy derivatives,
/// propagated through the Jacobians of the trace steps.
pub fn trace_orbit_with_derivative(
    params: &ModelParams,
    energy: f64,
    kmax: usize,
) -> Vec<(TracePoint, [f64; 3])> {
    let mut p = initial_point(params, energy);
    let mut d = [0.5, 0.5, 0.0];
    let mut out = vec![(p, d)];
    for a in params.alpha.quotients().take(kmax) {
        d = trace_jacobian(a, p).mul_vec(d);
        p = trace_step(a, p);
        out.push((p, d));
    }
    out
}

/// Closed-form Jacobian of `T_a` at `p`.
pub fn trace_jacobian(a: u64, p: TracePoint) -> Matrix3 {
    let [(u, du), (u1, du1), (u2, du2)] = chebyshev_with_derivative(a, p.y);
    let (x, z) = (p.x, p.z);
    Matrix3([
        [u, x * du - z * du1, -u1],
        [u1, x * du1 - z * du2, -u2],
        [0.0, 1.0, 0.0],
    ])
}

/// Eigenvalues of `DT_a(P_1)`: `a²/2 ± a√(a²+4)/2 + 1` and `−1`.
pub fn jacobian_eigenvalues_at_p1(a: u64) -> [f64; 3] {
    let a = a as f64;
    let r = a * (a * a + 4.0).sqrt() / 2.0;
    [a * a / 2.0 + r + 1.0, a * a / 2.0 - r + 1.0, -1.0]
}

/// `DU(P_1)`
pub const DU_P1: [[i64; 3]; 3] = [[2, -1, 2], [1, 0, 0], [0, 0, 1]];
/// `D(UP)(P_1) = DT_1(P_1)`
pub const DUP_P1: [[i64; 3]; 3] = [[2, 2, -1], [1, 0, 0], [0, 1, 0]];

/// Half-traces `(½tr A_k A_{k−1}, ½tr A_k, ½tr A_{k−1})` from explicit
/// products of one-site transfer matrices over the rotation sequence.
pub fn transfer_half_traces(params: &ModelParams, k: usize, energy: f64) -> Result<TracePoint> {
    const MAX_Q: u128 = 100_000;
    let lambda = params.lambda;
    let a_minus1 = Matrix2([[1.0, -lambda], [0.0, 1.0]]);
    let a0 = Matrix2::transfer(lambda, energy, 0);
    let (ak, ak1) = if k == 0 {
        (a0, a_minus1)
    } else {
        let q = params.alpha.approximant(k)?.q;
        if q > MAX_Q {
            return Err(Error::LevelTooLarge {
                level: k,
                q,
                max: MAX_Q,
            });
        }
        let q_prev = params.alpha.approximant(k - 1)?.q as usize;
        let word = rotation_sequence(&params.alpha, 0.0, q as usize);
        let mut m = Matrix2::IDENTITY;
        let mut prev = a0;
        for (n, &letter) in word.letters().iter().enumerate() {
            m = Matrix2::transfer(lambda, energy, letter).mul(&m);
            if k > 1 && n + 1 == q_prev {
                prev = m;
            }
        }
        (m, prev)
    };
    Ok(TracePoint::new(
        0.5 * ak.mul(&ak1).trace(),
        0.5 * ak.trace(),
        0.5 * ak1.trace(),
    ))
}

/// Semi-conjugacy `F(θ, φ) = (cos 2π(θ+φ), cos 2πθ, cos 2πφ)` onto `S_0`.
pub fn semiconjugacy_f(theta: f64, phi: f64) -> TracePoint {
    TracePoint::new(
        (2.0 * PI * (theta + phi)).cos(),
        (2.0 * PI * theta).cos(),
        (2.0 * PI * phi).cos(),
    )
}

/// `M_a(θ, φ) = (aθ + φ mod 1, θ mod 1)`
pub fn torus_step(a: u64, theta: f64, phi: f64) -> (f64, f64) {
    ((a as f64 * theta + phi).rem_euclid(1.0), theta.rem_euclid(1.0))
}

/// First row of `M_{a_j}···M_{a_1}`, i.e. `(q_j, p_j)`; its slope
/// (first over second coordinate) tends to `1/α`.
pub fn expanding_direction(alpha: &ContinuedFraction, j: usize) -> [f64; 2] {
    let mut m = Matrix2::IDENTITY;
    for a in alpha.quotients().take(j) {
        m = Matrix2([[a as f64, 1.0], [1.0, 0.0]]).mul(&m);
    }
    m.0[0]
}

/// `J'(x, y, z) = x² + y² + z² − 2(xy + xz + yz)`
pub fn j_prime(v: [i64; 3]) -> i64 {
    let [x, y, z] = v;
    x * x + y * y + z * z - 2 * (x * y + x * z + y * z)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QfReport {
    pub lattice_points: usize,
    pub du_preserves: bool,
    pub dup_preserves: bool,
    /// `DT_a(P_1)` for `a = 1..=8` also preserves `J'`.
    pub dt_a_preserves: bool,
    /// `16(x² + y² − z²) = J'(4x + 3y + 5z, z − y, 4y + 4z)` on the lattice.
    pub change_of_coordinates_exact: bool,
}

impl QfReport {
    pub fn all_passed(&self) -> bool {
        self.du_preserves && self.dup_preserves && self.dt_a_preserves && self.change_of_coordinates_exact
    }
}

fn apply_int(m: &[[i64; 3]; 3], v: [i64; 3]) -> [i64; 3] {
    [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

fn dt_a_p1_int(a: i64) -> [[i64; 3]; 3] {
    [[a + 1, a * a + a, -a], [a, a * a - a, 1 - a], [0, 1, 0]]
}

/// Exact integer check of the quadratic-form identities on `|coords| ≤ 10`.
pub fn qf_check() -> QfReport {
    const R: i64 = 10;
    let mut report = QfReport {
        lattice_points: 0,
        du_preserves: true,
        dup_preserves: true,
        dt_a_preserves: true,
        change_of_coordinates_exact: true,
    };
    let dts: Vec<_> = (1..=8).map(dt_a_p1_int).collect();
    for x in -R..=R {
        for y in -R..=R {
            for z in -R..=R {
                let v = [x, y, z];
                let j = j_prime(v);
                report.lattice_points += 1;
                report.du_preserves &= j_prime(apply_int(&DU_P1, v)) == j;
                report.dup_preserves &= j_prime(apply_int(&DUP_P1, v)) == j;
                report.dt_a_preserves &= dts.iter().all(|m| j_prime(apply_int(m, v)) == j);
                report.change_of_coordinates_exact &=
                    16 * (x * x + y * y - z * z) == j_prime([4 * x + 3 * y + 5 * z, z - y, 4 * y + 4 * z]);
            }
        }
    }
    report
}

/// `x² + y² − z²` evaluated through `J'` after the linear change of
/// coordinates, in floating point.
pub fn change_of_coordinates_q(x: f64, y: f64, z: f64) -> f64 {
    let (a, b, c) = (x + 0.75 * y + 1.25 * z, -0.25 * y + 0.25 * z, y + z);
    a * a + b * b + c * c - 2.0 * (a * b + a * c + b * c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numberth::parse_cf;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(lambda: f64, alpha: &str) -> ModelParams {
        ModelParams::new(lambda, parse_cf(alpha).unwrap()).unwrap()
    }

    fn close(p: TracePoint, q: TracePoint, tol: f64) -> bool {
        (p.x - q.x).abs() <= tol && (p.y - q.y).abs() <= tol && (p.z - q.z).abs() <= tol
    }

    #[test]
    fn chebyshev_examples() {
        assert_eq!(chebyshev_u(3, 1.0), 4.0);
        assert_abs_diff_eq!(chebyshev_u(1, 0.3), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(chebyshev_u(2, 0.5), 0.0, epsilon = 1e-15);
        assert_eq!(chebyshev_u(-1, 0.7), 0.0);
        assert_eq!(chebyshev_u(0, 0.7), 1.0);
    }

    #[test]
    fn chebyshev_powers() {
        assert_eq!(
            matrix_power_via_chebyshev(&Matrix2::IDENTITY, 7).unwrap(),
            Matrix2::IDENTITY
        );
        let a = Matrix2([[2.0, 3.0], [1.0, 2.0]]);
        let sq = matrix_power_via_chebyshev(&a, 2).unwrap();
        let want = a.lin_comb(a.trace(), -1.0, &Matrix2::IDENTITY);
        assert!(sq.lin_comb(1.0, -1.0, &want).max_abs() < 1e-14);
        assert!(matches!(
            matrix_power_via_chebyshev(&Matrix2([[2.0, 0.0], [0.0, 2.0]]), 3),
            Err(Error::NotUnimodular { .. })
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            // Random unimodular matrix with entries of moderate size.
            let (p, q, r) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(0.5..1.5));
            let m = Matrix2([[r, p], [q, (1.0 + p * q) / r]]);
            for a in 1..=30 {
                let fast = matrix_power_via_chebyshev(&m, a).unwrap();
                let slow = m.pow_naive(a);
                let err = fast.lin_comb(1.0, -1.0, &slow).max_abs();
                assert!(err <= 1e-10 * slow.max_abs().max(1.0), "a={a} err={err}");
            }
        }
    }

    #[test]
    fn trace_step_examples() {
        for a in 1..10 {
            assert_eq!(trace_step(a, TracePoint::P1), TracePoint::P1);
        }
        let p = TracePoint::new(0.0, 0.0, 1.0);
        assert_eq!(trace_step(1, p), TracePoint::new(-1.0, 0.0, 0.0));
        let mut q = p;
        let mut seen = vec![];
        for _ in 0..6 {
            q = trace_step(1, q);
            seen.push(q);
        }
        assert_eq!(q, p);
        assert!(seen[..5].iter().all(|&s| s != p));
    }

    #[test]
    fn auxiliary_maps_generate_trace_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let p = TracePoint::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            assert!(close(u_map(p_map(p)), trace_step(1, p), 1e-14));
            assert_eq!(p_map(p_map(p)), p);
            for a in 1..=8 {
                let mut q = aux_map(AuxMap::P, p);
                for _ in 0..a {
                    q = aux_map(AuxMap::U, q);
                }
                let t = trace_step(a, p);
                assert!(close(q, t, 1e-12 * (1.0 + t.max_norm())), "a={a}");
            }
        }
    }

    #[test]
    fn invariant_examples() {
        assert_eq!(fricke_vogt(TracePoint::P1), 0.0);
        let pr = params(1.0, "[0;(1)]");
        let p = initial_point(&pr, 0.0);
        assert_eq!(p, TracePoint::new(-0.5, 0.0, 1.0));
        assert_eq!(fricke_vogt(p), 0.25);
        let free = params(0.0, "[0;(1)]");
        assert_eq!(initial_point(&free, 2.0), TracePoint::P1);
        assert_eq!(initial_point(&free, 0.0), TracePoint::new(0.0, 0.0, 1.0));
        assert!(ModelParams::new(-1.0, ContinuedFraction::golden()).is_err());
    }

    #[test]
    fn orbits() {
        let free = params(0.0, "[0;(1)]");
        let r = trace_orbit(&free, 0.0, 60);
        assert_eq!(r.status, OrbitStatus::Bounded { steps: 60 });
        assert!(r.max_norm <= 1.0);
        assert!(trace_orbit(&free, 2.5, 60).escaped());
        assert!(trace_orbit(&params(1.0, "[0;(1)]"), -3.5, 60).escaped());
        // Deep escape overflows rather than looping forever.
        let r = trace_orbit(&params(1.0, "[0;(1)]"), 30.0, 200);
        assert!(r.escaped());
    }

    #[test]
    fn seed_level_matches_initial_point() {
        let pr = params(0.7, "[0;(1)]");
        for e in [-2.3, 0.0, 1.1] {
            let t = transfer_half_traces(&pr, 0, e).unwrap();
            assert!(close(t, initial_point(&pr, e), 1e-15));
        }
    }

    #[test]
    fn orbit_matches_transfer_matrices() {
        for alpha in ["[0;(1)]", "[0;(2)]", "[0;3,(1,2)]"] {
            let pr = params(1.0, alpha);
            for e in [-2.5, -1.0, 0.3, 1.7, 2.9] {
                let orbit = trace_orbit(&pr, e, 8).trajectory.unwrap();
                for (k, p) in orbit.iter().enumerate() {
                    let t = transfer_half_traces(&pr, k, e).unwrap();
                    assert!(close(*p, t, 1e-9 * (1.0 + t.max_norm())), "{alpha} E={e} k={k}");
                }
            }
        }
    }

    #[test]
    fn level_too_large() {
        let pr = params(1.0, "[0;(1)]");
        assert!(matches!(
            transfer_half_traces(&pr, 30, 0.0),
            Err(Error::LevelTooLarge { .. })
        ));
    }

    #[test]
    fn jacobian_closed_forms() {
        let j1 = trace_jacobian(1, TracePoint::P1);
        assert_eq!(j1.0, DUP_P1.map(|r| r.map(|v| v as f64)));
        for a in 1..=8u64 {
            let af = a as f64;
            let want = [[af + 1.0, af * af + af, -af], [af, af * af - af, 1.0 - af], [0.0, 1.0, 0.0]];
            assert_eq!(trace_jacobian(a, TracePoint::P1).0, want);
        }
        let ev = jacobian_eigenvalues_at_p1(1);
        assert_abs_diff_eq!(ev[0], (3.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ev[1], (3.0 - 5f64.sqrt()) / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn jacobian_eigenvalues_numerically() {
        for a in 1..=8 {
            let m = trace_jacobian(a, TracePoint::P1).0;
            let mat = nalgebra::Matrix3::from_fn(|i, j| m[i][j]);
            let mut got: Vec<f64> = mat.complex_eigenvalues().iter().map(|c| {
                assert!(c.im.abs() < 1e-9);
                c.re
            }).collect();
            let mut want = jacobian_eigenvalues_at_p1(a).to_vec();
            got.sort_by(f64::total_cmp);
            want.sort_by(f64::total_cmp);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-10 * w.abs().max(1.0), "a={a}: {got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..100 {
            let p = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
            let a = rng.gen_range(1..=6);
            let jac = trace_jacobian(a, TracePoint::from_array(p));
            for col in 0..3 {
                let mut plus = p;
                let mut minus = p;
                plus[col] += h;
                minus[col] -= h;
                let fp = trace_step(a, TracePoint::from_array(plus)).to_array();
                let fm = trace_step(a, TracePoint::from_array(minus)).to_array();
                for row in 0..3 {
                    let fd = (fp[row] - fm[row]) / (2.0 * h);
                    let scale = jac.0[row][col].abs().max(1.0);
                    assert!((fd - jac.0[row][col]).abs() < 1e-5 * scale, "a={a} ({row},{col})");
                }
            }
        }
    }

    #[test]
    fn derivative_orbit_matches_finite_differences() {
        let pr = params(1.0, "[0;(1)]");
        let h = 1e-7;
        for e in [-1.9, -0.4, 0.8, 2.2] {
            let d = trace_orbit_with_derivative(&pr, e, 8);
            let run = |e: f64| {
                let mut p = initial_point(&pr, e);
                let mut out = vec![p];
                for a in pr.alpha.quotients().take(8) {
                    p = trace_step(a, p);
                    out.push(p);
                }
                out
            };
            let (p, m) = (run(e + h), run(e - h));
            for k in 0..=8 {
                let fd = [0, 1, 2].map(|i| (p[k].to_array()[i] - m[k].to_array()[i]) / (2.0 * h));
                for i in 0..3 {
                    assert!((fd[i] - d[k].1[i]).abs() < 1e-4 * d[k].1[i].abs().max(1.0), "E={e} k={k}");
                }
            }
        }
    }

    #[test]
    fn semiconjugacy() {
        assert!(close(semiconjugacy_f(0.0, 0.0), TracePoint::P1, 0.0));
        assert_eq!(torus_step(1, 0.25, 0.0), (0.25, 0.25));
        let (t, f) = torus_step(1, 0.25, 0.0);
        let lhs = semiconjugacy_f(t, f);
        let rhs = trace_step(1, semiconjugacy_f(0.25, 0.0));
        assert!(close(lhs, TracePoint::new(-1.0, 0.0, 0.0), 1e-15));
        assert!(close(rhs, TracePoint::new(-1.0, 0.0, 0.0), 1e-15));

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (th, ph) = (rng.gen::<f64>(), rng.gen::<f64>());
            assert!(fricke_vogt(semiconjugacy_f(th, ph)).abs() < 1e-12);
            for a in 1..=6 {
                let (t, f) = torus_step(a, th, ph);
                assert!(close(semiconjugacy_f(t, f), trace_step(a, semiconjugacy_f(th, ph)), 1e-10));
            }
        }
    }

    #[test]
    fn expanding_direction_slope() {
        for text in ["[0;(1)]", "[0;(2)]", "[0;2,(1,3)]"] {
            let alpha = parse_cf(text).unwrap();
            let v = expanding_direction(&alpha, 30);
            let ap = alpha.approximant(30).unwrap();
            assert_eq!(v, [ap.q as f64, ap.p as f64]);
            assert!((v[0] / v[1] - 1.0 / alpha.value()).abs() < 1e-12, "{text}");
        }
    }

    #[test]
    fn quadratic_form_checks() {
        assert_eq!(j_prime([1, 0, 0]), 1);
        assert_eq!(apply_int(&DU_P1, [1, 0, 0]), [2, 1, 0]);
        assert_eq!(j_prime([2, 1, 0]), 1);
        assert_eq!(j_prime([0, 0, 0]), 0);
        assert_eq!(change_of_coordinates_q(1.0, 0.0, 0.0), 1.0);
        let report = qf_check();
        assert_eq!(report.lattice_points, 21 * 21 * 21);
        assert!(report.all_passed(), "{report:?}");
    }
}
