//! The invariant suite behind `sturmian check`.

use serde::Serialize;
use sturmian_core::ids::{free_ids, ids_curve, uniform_grid, DirichletOperator};
use sturmian_core::spectrum::{bands, gaps_from_bands, spectrum_cover};
use sturmian_core::tracemap::{
    fricke_vogt, initial_point, qf_check, semiconjugacy_f, torus_step, trace_step, transfer_half_traces,
    TracePoint,
};
use sturmian_core::words::{complexity, rotation_sequence};
use sturmian_core::{ContinuedFraction, ModelParams};

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub alpha: String,
    pub lambda: f64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

/// Deterministic low-discrepancy points in `[0, 1)`.
fn weyl(n: usize, dim: usize) -> Vec<f64> {
    const G: [f64; 3] = [0.819_172_513_396_164_4, 0.671_043_606_703_789_2, 0.549_700_477_901_970_1];
    (0..dim).map(|d| ((n + 1) as f64 * G[d % 3]).fract()).collect()
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

pub fn run(alpha: &ContinuedFraction, lambda: f64, level: usize) -> sturmian_core::Result<Report> {
    let params = ModelParams::new(lambda, alpha.clone())?;
    let mut checks = vec![];

    let mut drift = 0.0f64;
    for n in 0..1000 {
        let u = weyl(n, 3);
        let p = TracePoint::new(4.0 * u[0] - 2.0, 2.0 * u[1] - 1.0, 4.0 * u[2] - 2.0);
        for a in 1..=8 {
            let d = (fricke_vogt(trace_step(a, p)) - fricke_vogt(p)).abs() / (1.0 + p.norm().powi(3));
            drift = drift.max(d);
        }
    }
    checks.push(check("fricke_vogt_invariant", drift <= 1e-12, format!("max scaled drift {drift:e}")));

    let mut line = 0.0f64;
    for n in 0..100 {
        let e = 12.0 * weyl(n, 1)[0] - 6.0;
        line = line.max((fricke_vogt(initial_point(&params, e)) - params.surface_level()).abs());
    }
    checks.push(check("line_on_surface", line <= 1e-14, format!("max deviation {line:e}")));

    let mut oracle = 0.0f64;
    let kmax = (1..).take_while(|&k| alpha.approximant(k).map(|a| a.q <= 2000).unwrap_or(false)).last().unwrap_or(0);
    for e in [-1.3, -0.2, 0.45, 1.7] {
        let mut p = initial_point(&params, e);
        for k in 0..=kmax {
            if k > 0 {
                p = trace_step(alpha.quotient(k), p);
            }
            let t = transfer_half_traces(&params, k, e)?;
            if !p.is_finite() || !t.is_finite() || t.max_norm() > 1e100 {
                break;
            }
            let err = (p.x - t.x).abs().max((p.y - t.y).abs()).max((p.z - t.z).abs()) / t.max_norm().max(1.0);
            oracle = oracle.max(err);
        }
    }
    checks.push(check("transfer_matrix_oracle", oracle <= 1e-8, format!("levels 0..={kmax}, max relative error {oracle:e}")));

    let mut semi = 0.0f64;
    for n in 0..100 {
        let u = weyl(n, 2);
        for a in 1..=6 {
            let (t, f) = torus_step(a, u[0], u[1]);
            let l = semiconjugacy_f(t, f);
            let r = trace_step(a, semiconjugacy_f(u[0], u[1]));
            semi = semi.max((l.x - r.x).abs().max((l.y - r.y).abs()).max((l.z - r.z).abs()));
        }
    }
    checks.push(check("semiconjugacy", semi <= 1e-10, format!("max error {semi:e}")));

    let qf = qf_check();
    checks.push(check("quadratic_forms", qf.all_passed(), format!("{} lattice points", qf.lattice_points)));

    let bs = bands(&params, level)?;
    let q = alpha.approximant(level)?.q as usize;
    if lambda > 0.0 {
        checks.push(check("band_count", bs.len() == q, format!("{} bands, q_{level} = {q}", bs.len())));
        let op = DirichletOperator::periodic_approximant(&params, level)?;
        let good = bs.bands.iter().filter(|b| op.count_in(b.lo + 1e-9, b.hi - 1e-9) == 1).count();
        checks.push(check("periodic_oracle", good == bs.len(), format!("{good}/{} band interiors hold one eigenvalue", bs.len())));
        let next = bands(&params, level + 2)?;
        let cover = spectrum_cover(&params, level)?;
        let outside = next.bands.iter().filter(|b| cover.distance(b.lo) > 1e-8 || cover.distance(b.hi) > 1e-8).count();
        checks.push(check("nesting", outside == 0, format!("{outside} level-{} bands outside the cover", level + 2)));
        checks.push(check(
            "measure_decreasing",
            next.total_measure <= bs.total_measure + 1e-10,
            format!("{:e} -> {:e}", bs.total_measure, next.total_measure),
        ));
    } else {
        let cover = spectrum_cover(&params, level)?;
        let widest = gaps_from_bands(&cover).iter().map(|g| g.width()).fold(0.0, f64::max);
        checks.push(check("free_cover", widest < 1e-3, format!("widest gap {widest:e}")));
        let grid = uniform_grid(-2.0, 2.0, 401);
        let t = ids_curve(&params, 0.0, 4000, &grid)?;
        let dev = grid.iter().zip(&t.values).map(|(&e, &n)| (n - free_ids(e)).abs()).fold(0.0, f64::max);
        checks.push(check("free_ids", dev <= 2e-3, format!("max deviation {dev:e}")));
    }

    let w = rotation_sequence(alpha, 0.0, 10_000);
    let bad: Vec<usize> = (1..=30).filter(|&n| complexity(&w, n).ok() != Some(n + 1)).collect();
    let detail = if bad.is_empty() {
        "p(n) = n+1 for n ≤ 30".to_string()
    } else {
        format!("p(n) ≠ n+1 for n in {bad:?}")
    };
    checks.push(check("sturmian_complexity", bad.is_empty(), detail));

    Ok(Report {
        alpha: alpha.to_string(),
        lambda,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
