//! `sturmian`: spectra of Sturmian Schrödinger operators from the command line.

mod check;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use sturmian_core::ids::{
    default_epsilons, default_window, dos_local_dimension, gap_labels, ids_curve, match_gaps_to_labels,
    uniform_grid, LabelMatching,
};
use sturmian_core::numberth::parse_cf;
use sturmian_core::spectrum::{
    bands, box_dimension, default_scales, gap_opening_study, gaps_from_bands, spectrum_cover,
    thickness_denseness, GapOpeningRow,
};
use sturmian_core::tracemap::{fricke_vogt, trace_orbit, OrbitStatus};
use sturmian_core::words::{
    cmps_for_rotation, complexity, fixed_point, letter_frequency, rotation_sequence, sturmian_word_by_recursion,
};
use sturmian_core::{ContinuedFraction, ModelParams};

use output::{float, opt, opt_float, Format, Record};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Compute(#[from] sturmian_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Invalid(_) => "invalid_arguments",
            CliError::Compute(_) => "computation",
            CliError::Io(_) => "io",
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            _ => 1,
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "sturmian", version, about = "Spectra of Sturmian Schrödinger operators via trace maps")]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output file; relative paths are placed under --out-dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Default output directory. Without it and without --out, output goes to stdout.
    #[arg(long, global = true, env = "STURMIAN_OUT_DIR")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

fn parse_alpha(s: &str) -> Result<ContinuedFraction, String> {
    parse_cf(s).map_err(|e| e.to_string())
}

fn parse_lambda(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if !(v >= 0.0) || !v.is_finite() {
        return Err("lambda must be ≥ 0".into());
    }
    Ok(v)
}

fn parse_omega(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if !(0.0..1.0).contains(&v) {
        return Err("omega must lie in [0, 1)".into());
    }
    Ok(v)
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if !(v > 0.0) || !v.is_finite() {
        return Err("must be > 0".into());
    }
    Ok(v)
}

#[derive(Debug, Args)]
struct Model {
    /// Rotation angle as a continued fraction, e.g. "[0;(1)]" or "[0;2,(1,3)]".
    #[arg(long, default_value = "[0;(1)]", value_parser = parse_alpha)]
    alpha: ContinuedFraction,

    /// Coupling λ ≥ 0.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true, value_parser = parse_lambda)]
    lambda: f64,
}

impl Model {
    fn params(&self) -> CliResult<ModelParams> {
        Ok(ModelParams::new(self.lambda, self.alpha.clone())?)
    }
}

#[derive(Debug, Args)]
struct Table {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Args)]
struct IdsArgs {
    /// Phase ω ∈ [0, 1).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true, value_parser = parse_omega)]
    omega: f64,

    /// Dirichlet restriction size L.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    size: u64,

    /// Energy grid points over [−2−λ−0.1, 2+λ+0.1]. Defaults to 2001,
    /// or 40001 for dos-dimension, whose default radii need a fine grid.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    grid: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convergents p_k/q_k of α.
    Approximants {
        #[arg(long, default_value = "[0;(1)]", value_parser = parse_alpha)]
        alpha: ContinuedFraction,
        /// Emit p_k/q_k for k = 1..=count.
        #[arg(long, default_value_t = 15)]
        count: usize,
        #[command(flatten)]
        table: Table,
    },
    /// A Sturmian word with metadata, as JSON.
    Word {
        #[arg(long, default_value = "[0;(1)]", value_parser = parse_alpha)]
        alpha: ContinuedFraction,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true, value_parser = parse_omega)]
        omega: f64,
        /// Letters (rotation and substitution words).
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        length: u64,
        /// Level of the recursive word w_k.
        #[arg(long)]
        level: Option<usize>,
        #[arg(long, value_enum, default_value_t = WordKind::Rotation)]
        kind: WordKind,
    },
    /// Trace-map orbit of one energy: k, a_k, x, y, z, I-drift.
    TraceOrbit {
        #[command(flatten)]
        model: Model,
        #[arg(long, allow_hyphen_values = true)]
        energy: f64,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[command(flatten)]
        table: Table,
    },
    /// Band set of level k, or the cover B_k ∪ B_{k+1}.
    Spectrum {
        #[command(flatten)]
        model: Model,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        level: u64,
        #[arg(long)]
        cover: bool,
        #[command(flatten)]
        table: Table,
    },
    /// Gaps of the band set, optionally labelled by the IDS.
    Gaps {
        #[command(flatten)]
        model: Model,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        level: u64,
        #[arg(long)]
        cover: bool,
        /// Match gaps to labels {mα}, 0 < |m| ≤ --max-label.
        #[arg(long)]
        label: bool,
        #[arg(long, default_value_t = 20)]
        max_label: i64,
        /// Matching tolerance (default 3/L).
        #[arg(long, value_parser = parse_positive)]
        tol: Option<f64>,
        #[command(flatten)]
        ids: IdsArgs,
        #[command(flatten)]
        table: Table,
    },
    /// Box-counting dimension and thickness bounds, as JSON.
    Dimension {
        #[command(flatten)]
        model: Model,
        #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u64).range(1..))]
        level: u64,
        /// Comma-separated box sizes (default: diam·2^-j, j = 4..12).
        #[arg(long, value_delimiter = ',', value_parser = parse_positive)]
        scales: Option<Vec<f64>>,
    },
    /// Width of the gap labelled m as λ decreases.
    GapOpening {
        #[arg(long, default_value = "[0;(1)]", value_parser = parse_alpha)]
        alpha: ContinuedFraction,
        #[arg(long = "m", default_value_t = 1, allow_hyphen_values = true)]
        m: i64,
        /// Comma-separated, strictly decreasing couplings.
        #[arg(long, value_delimiter = ',', default_value = "0.4,0.2,0.1,0.05", value_parser = parse_positive)]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u64).range(1..))]
        level: u64,
        #[command(flatten)]
        table: Table,
    },
    /// Integrated density of states N(E) on a grid.
    Ids {
        #[command(flatten)]
        model: Model,
        #[command(flatten)]
        ids: IdsArgs,
        #[command(flatten)]
        table: Table,
    },
    /// Gap labels {mα} for 0 ≤ |m| ≤ --max-label.
    GapLabels {
        #[arg(long, default_value = "[0;(1)]", value_parser = parse_alpha)]
        alpha: ContinuedFraction,
        #[arg(long, default_value_t = 10)]
        max_label: i64,
        #[command(flatten)]
        table: Table,
    },
    /// Local dimension of the density of states, as JSON.
    DosDimension {
        #[command(flatten)]
        model: Model,
        #[command(flatten)]
        ids: IdsArgs,
        #[arg(long, default_value_t = 400, value_parser = clap::value_parser!(u64).range(1..))]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated radii (default: 8 from 10h to diam/10).
        #[arg(long, value_delimiter = ',', value_parser = parse_positive)]
        epsilons: Option<Vec<f64>>,
    },
    /// Run the invariant suite; exits 1 if any check fails.
    Check {
        #[command(flatten)]
        model: Model,
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
        level: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum WordKind {
    /// R_{α,ω}(1..=length)
    Rotation,
    /// w_k (needs --level)
    Recursion,
    /// fixed point of the substitution fixing R_α
    Substitution,
}

#[derive(Serialize)]
struct ApproximantRow {
    k: usize,
    a: u64,
    p: u128,
    q: u128,
    value: f64,
    error: f64,
}

impl Record for ApproximantRow {
    const HEADER: &'static [&'static str] = &["k", "a", "p", "q", "value", "error"];
    fn fields(&self) -> Vec<String> {
        vec![
            self.k.to_string(),
            self.a.to_string(),
            self.p.to_string(),
            self.q.to_string(),
            float(self.value),
            float(self.error),
        ]
    }
}

#[derive(Serialize)]
struct OrbitRow {
    k: usize,
    a: u64,
    x: f64,
    y: f64,
    z: f64,
    i_drift: f64,
}

impl Record for OrbitRow {
    const HEADER: &'static [&'static str] = &["k", "a_k", "x", "y", "z", "i_drift"];
    fn fields(&self) -> Vec<String> {
        vec![
            self.k.to_string(),
            self.a.to_string(),
            float(self.x),
            float(self.y),
            float(self.z),
            float(self.i_drift),
        ]
    }
}

#[derive(Serialize)]
struct BandRow {
    level: usize,
    lo: f64,
    hi: f64,
}

impl Record for BandRow {
    const HEADER: &'static [&'static str] = &["level", "lo", "hi"];
    fn fields(&self) -> Vec<String> {
        vec![self.level.to_string(), float(self.lo), float(self.hi)]
    }
}

impl Record for sturmian_core::spectrum::Gap {
    const HEADER: &'static [&'static str] = &["level", "lo", "hi", "label", "ids_value"];
    fn fields(&self) -> Vec<String> {
        vec![
            self.level.to_string(),
            float(self.lo),
            float(self.hi),
            opt(self.label),
            opt_float(self.ids_value),
        ]
    }
}

impl Record for GapOpeningRow {
    const HEADER: &'static [&'static str] = &["lambda", "width", "ratio", "ids_value", "error"];
    fn fields(&self) -> Vec<String> {
        vec![
            float(self.lambda),
            opt_float(self.width),
            opt_float(self.ratio),
            opt_float(self.ids_value),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

#[derive(Serialize)]
struct IdsRow {
    #[serde(rename = "E")]
    e: f64,
    #[serde(rename = "N")]
    n: f64,
}

impl Record for IdsRow {
    const HEADER: &'static [&'static str] = &["E", "N"];
    fn fields(&self) -> Vec<String> {
        vec![float(self.e), float(self.n)]
    }
}

#[derive(Serialize)]
struct LabelRow {
    m: i64,
    value: f64,
}

impl Record for LabelRow {
    const HEADER: &'static [&'static str] = &["m", "value"];
    fn fields(&self) -> Vec<String> {
        vec![self.m.to_string(), float(self.value)]
    }
}

#[derive(Serialize)]
struct WordReport {
    alpha: String,
    kind: WordKind,
    omega: Option<f64>,
    level: Option<usize>,
    substitution: Option<[String; 2]>,
    length: usize,
    ones: usize,
    frequency: f64,
    complexity: Vec<usize>,
    word: String,
}

#[derive(Serialize)]
struct DimensionReport {
    tau: f64,
    theta: f64,
    dim_lower: f64,
    dim_upper: f64,
    boxdim: f64,
    scales: Vec<f64>,
    level: usize,
    bands: usize,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
}

struct Sink {
    out: Option<PathBuf>,
    dir: Option<PathBuf>,
    name: &'static str,
}

impl Sink {
    fn path(&self, ext: &str) -> Option<PathBuf> {
        output::destination(self.out.as_deref(), self.dir.as_deref(), &format!("{}.{ext}", self.name))
    }

    fn records<R: Record>(&self, rows: &[R], format: Format) -> CliResult {
        let mut w = output::open(self.path(format.extension()).as_deref())?;
        Ok(output::records(rows, format, &mut *w)?)
    }

    fn json<T: Serialize>(&self, value: &T) -> CliResult {
        let mut w = output::open(self.path("json").as_deref())?;
        Ok(output::json(value, &mut *w)?)
    }
}

fn ids_grid(lambda: f64, n: Option<u64>, default: u64) -> Vec<f64> {
    let (lo, hi) = default_window(lambda);
    uniform_grid(lo, hi, n.unwrap_or(default) as usize)
}

fn level(k: u64) -> usize {
    k as usize
}

fn run(cmd: Command, sink: &Sink) -> CliResult<bool> {
    match cmd {
        Command::Approximants { alpha, count, table } => {
            let x = alpha.value();
            let rows: Vec<ApproximantRow> = alpha
                .approximants(count)?
                .into_iter()
                .map(|a| ApproximantRow {
                    k: a.index,
                    a: alpha.quotient(a.index),
                    p: a.p,
                    q: a.q,
                    value: a.value(),
                    error: (x - a.value()).abs(),
                })
                .collect();
            sink.records(&rows, table.format)?;
        }
        Command::Word { alpha, omega, length, level, kind } => {
            let mut substitution = None;
            let word = match kind {
                WordKind::Rotation => rotation_sequence(&alpha, omega, length as usize),
                WordKind::Recursion => {
                    let k = level.ok_or_else(|| CliError::Invalid("--kind recursion needs --level".into()))?;
                    let q = alpha.approximant(k)?.q;
                    if q > 10_000_000 {
                        return Err(CliError::Invalid(format!("w_{k} has {q} letters; pick a lower level")));
                    }
                    sturmian_word_by_recursion(&alpha, k)
                }
                WordKind::Substitution => {
                    let s = cmps_for_rotation(&alpha).ok_or_else(|| {
                        CliError::Invalid(format!("no substitution fixes the rotation sequence of {alpha}"))
                    })?;
                    substitution = Some([s.image(0).to_string(), s.image(1).to_string()]);
                    fixed_point(&s, length as usize)?
                }
            };
            let complexity = (1..=30).map_while(|n| complexity(&word, n).ok()).collect();
            let report = WordReport {
                alpha: alpha.to_string(),
                kind,
                omega: (kind == WordKind::Rotation).then_some(omega),
                level: if kind == WordKind::Recursion { level } else { None },
                substitution,
                length: word.len(),
                ones: word.count(1),
                frequency: letter_frequency(&word)?,
                complexity,
                word: word.to_string(),
            };
            sink.json(&report)?;
        }
        Command::TraceOrbit { model, energy, steps, table } => {
            let params = model.params()?;
            let r = trace_orbit(&params, energy, steps);
            let level = params.surface_level();
            let rows: Vec<OrbitRow> = r
                .trajectory
                .unwrap_or_default()
                .into_iter()
                .enumerate()
                .map(|(k, p)| OrbitRow {
                    k,
                    a: params.alpha.quotient(k),
                    x: p.x,
                    y: p.y,
                    z: p.z,
                    i_drift: fricke_vogt(p) - level,
                })
                .collect();
            sink.records(&rows, table.format)?;
            if let OrbitStatus::Escaped { step, .. } = r.status {
                eprintln!("escaped at step {step}");
            }
        }
        Command::Spectrum { model, level: k, cover, table } => {
            let params = model.params()?;
            let bs = if cover { spectrum_cover(&params, level(k))? } else { bands(&params, level(k))? };
            let rows: Vec<BandRow> = bs.bands.iter().map(|b| BandRow { level: bs.level, lo: b.lo, hi: b.hi }).collect();
            sink.records(&rows, table.format)?;
        }
        Command::Gaps { model, level: k, cover, label, max_label, tol, ids, table } => {
            let params = model.params()?;
            let bs = if cover { spectrum_cover(&params, level(k))? } else { bands(&params, level(k))? };
            let mut gaps = gaps_from_bands(&bs);
            if label {
                let mut grid = ids_grid(model.lambda, ids.grid, 2001);
                grid.extend(gaps.iter().map(|g| g.midpoint()));
                grid.sort_by(f64::total_cmp);
                grid.dedup();
                let t = ids_curve(&params, ids.omega, ids.size as usize, &grid)?;
                let labels = gap_labels(&model.alpha, -max_label.abs()..=max_label.abs());
                let tol = tol.unwrap_or(3.0 / ids.size as f64);
                let m: LabelMatching = match_gaps_to_labels(&gaps, &t, &labels, tol);
                if !m.ambiguous.is_empty() {
                    eprintln!("{} ambiguous gap(s) left unlabelled", m.ambiguous.len());
                }
                gaps = m.gaps;
            }
            sink.records(&gaps, table.format)?;
        }
        Command::Dimension { model, level: k, scales } => {
            let bs = bands(&model.params()?, level(k))?;
            let scales = scales.unwrap_or_else(|| default_scales(&bs));
            let boxdim = box_dimension(&bs, &scales)?;
            let t = thickness_denseness(&bs)?;
            sink.json(&DimensionReport {
                tau: t.tau,
                theta: t.theta,
                dim_lower: t.dim_lower,
                dim_upper: t.dim_upper,
                boxdim,
                scales,
                level: bs.level,
                bands: bs.len(),
            })?;
        }
        Command::GapOpening { alpha, m, lambdas, level: k, table } => {
            if lambdas.windows(2).any(|w| !(w[0] > w[1])) {
                return Err(CliError::Invalid("--lambdas must be strictly decreasing".into()));
            }
            let rows = gap_opening_study(&alpha, m, &lambdas, level(k));
            sink.records(&rows, table.format)?;
        }
        Command::Ids { model, ids, table } => {
            let grid = ids_grid(model.lambda, ids.grid, 2001);
            let t = ids_curve(&model.params()?, ids.omega, ids.size as usize, &grid)?;
            let rows: Vec<IdsRow> = t.energies.iter().zip(&t.values).map(|(&e, &n)| IdsRow { e, n }).collect();
            sink.records(&rows, table.format)?;
        }
        Command::GapLabels { alpha, max_label, table } => {
            let rows: Vec<LabelRow> = gap_labels(&alpha, -max_label.abs()..=max_label.abs())
                .into_iter()
                .map(|(m, value)| LabelRow { m, value })
                .collect();
            sink.records(&rows, table.format)?;
        }
        Command::DosDimension { model, ids, samples, seed, epsilons } => {
            let grid = ids_grid(model.lambda, ids.grid, 40_001);
            let t = ids_curve(&model.params()?, ids.omega, ids.size as usize, &grid)?;
            let eps = epsilons.unwrap_or_else(|| default_epsilons(&t));
            let est = dos_local_dimension(&t, &eps, samples as usize, seed)?;
            sink.json(&est)?;
        }
        Command::Check { model, level: k } => {
            let report = check::run(&model.alpha, model.lambda, level(k))?;
            sink.json(&report)?;
            return Ok(report.passed);
        }
    }
    Ok(true)
}

fn fail(err: &CliError) -> ExitCode {
    let report = ErrorReport { error: err.kind(), message: err.to_string() };
    eprintln!("{}", serde_json::to_string(&report).unwrap_or_else(|_| err.to_string()));
    ExitCode::from(err.code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::Invalid(e.render().to_string().trim_end().to_string())),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return fail(&CliError::Invalid("--threads must be ≥ 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(&CliError::Invalid(e.to_string()));
        }
    }
    let name = command_name(&cli.command);
    let sink = Sink { out: cli.out, dir: cli.out_dir, name };
    match run(cli.command, &sink) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => fail(&e),
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Approximants { .. } => "approximants",
        Command::Word { .. } => "word",
        Command::TraceOrbit { .. } => "trace-orbit",
        Command::Spectrum { .. } => "spectrum",
        Command::Gaps { .. } => "gaps",
        Command::Dimension { .. } => "dimension",
        Command::GapOpening { .. } => "gap-opening",
        Command::Ids { .. } => "ids",
        Command::GapLabels { .. } => "gap-labels",
        Command::DosDimension { .. } => "dos-dimension",
        Command::Check { .. } => "check",
    }
}
