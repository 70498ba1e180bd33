//! Size/power simulation harness.
//!
//! Each replication draws two independent error samples, shifts the second
//! by `a·t(1−t)` for every `a` on the grid, and records whether `U⁽¹⁾`
//! (Monte Carlo critical value) and `U⁽²⁾` (χ²(p) critical value) reject at
//! each nominal level. Replication `r` uses stream `r` of the base seed, and
//! the same error draws are reused across the `a` grid, so rows of the table
//! are directly comparable and the result is independent of the thread
//! schedule.

use std::fmt::{self, Write as _};
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fcurve::{FunctionalSample, Grid, DEFAULT_BASIS_COUNT, DEFAULT_GRID_LEN};
use crate::lrcov::{csv_err, format_float, Bandwidth, WeightKernel};
use crate::meantest::{analyze, mc_null_draws, mc_tail, pvalue_chisq, PChoice, TestConfig};
use crate::simgen::{add_alternative_mean, bridge_sample, far1_sample, Far1Config, RngSeed};

/// Monte Carlo null draws per replication for the `U⁽¹⁾` critical value.
pub const DEFAULT_BENCH_MC_REPS: usize = 2000;

/// Shift amplitudes `0.0, 0.1, ..., 1.3`.
pub fn table_a_grid() -> Vec<f64> {
    (0..=13).map(|i| i as f64 / 10.0).collect()
}

pub const DEFAULT_ALPHAS: [f64; 3] = [0.01, 0.05, 0.10];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorModel {
    IidBridge,
    Far1,
}

impl fmt::Display for ErrorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorModel::IidBridge => "bridge",
            ErrorModel::Far1 => "far1",
        })
    }
}

impl FromStr for ErrorModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bridge" | "iid_bridge" | "iid-bridge" => Ok(ErrorModel::IidBridge),
            "far1" => Ok(ErrorModel::Far1),
            other => Err(Error::InvalidArgument(format!("unknown error model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub n: usize,
    pub m: usize,
    pub error_model: ErrorModel,
    pub a_grid: Vec<f64>,
    pub alphas: Vec<f64>,
    pub reps: usize,
    pub grid_len: usize,
    pub p: PChoice,
    pub seed: u64,
    pub mc_reps: usize,
    pub basis_count: usize,
    pub threshold: f64,
    pub kernel: WeightKernel,
    pub bandwidth: Bandwidth,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            n: 100,
            m: 200,
            error_model: ErrorModel::IidBridge,
            a_grid: table_a_grid(),
            alphas: DEFAULT_ALPHAS.to_vec(),
            reps: 1000,
            grid_len: DEFAULT_GRID_LEN,
            p: PChoice::Auto,
            seed: 1,
            mc_reps: DEFAULT_BENCH_MC_REPS,
            basis_count: DEFAULT_BASIS_COUNT,
            threshold: 0.85,
            kernel: WeightKernel::FlatTop,
            bandwidth: Bandwidth::CubeRoot,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::InvalidArgument("reps must be >= 1".into()));
        }
        if self.n < 2 || self.m < 2 {
            return Err(Error::InvalidArgument("sample sizes must be >= 2".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::InvalidArgument(format!("alpha {a} outside (0, 1)")));
        }
        if self.a_grid.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument("non-finite shift amplitude".into()));
        }
        self.test_config(RngSeed::default()).validate()
    }

    fn test_config(&self, seed: RngSeed) -> TestConfig {
        TestConfig {
            p: self.p,
            threshold: self.threshold,
            kernel: self.kernel,
            bandwidth: self.bandwidth,
            dependent: true,
            mc_reps: self.mc_reps,
            seed,
            basis_count: self.basis_count,
            ..TestConfig::default()
        }
    }
}

/// Rejection percentages for one shift amplitude, indexed like `alphas`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub a: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerTable {
    pub alphas: Vec<f64>,
    pub reps: usize,
    pub rows: Vec<PowerRow>,
}

impl PowerTable {
    /// Monte Carlo standard error, in percentage points, of a rejection
    /// percentage.
    pub fn std_error(&self, pct: f64) -> f64 {
        let r = pct / 100.0;
        100.0 * (r * (1.0 - r) / self.reps as f64).sqrt()
    }

    pub fn row(&self, a: f64) -> Option<&PowerRow> {
        self.rows.iter().find(|r| (r.a - a).abs() < 1e-9)
    }

    pub fn alpha_index(&self, alpha: f64) -> Option<usize> {
        self.alphas.iter().position(|x| (x - alpha).abs() < 1e-12)
    }

    /// Rejection percentage for `U⁽¹⁾` (`stat = 1`) or `U⁽²⁾` (`stat = 2`).
    pub fn rate(&self, a: f64, alpha: f64, stat: u8) -> Option<f64> {
        let row = self.row(a)?;
        let j = self.alpha_index(alpha)?;
        match stat {
            1 => Some(row.u1[j]),
            2 => Some(row.u2[j]),
            _ => None,
        }
    }
}

/// Per-replication outcome, for post-hoc analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub a: f64,
    pub rep: usize,
    pub p: usize,
    pub u1: f64,
    pub u2: f64,
    pub pvalue_u1: f64,
    pub pvalue_u2: f64,
}

fn draw_errors(spec: &ExperimentSpec, grid: Grid, far: Option<&Far1Config>, n: usize, seed: RngSeed) -> Result<FunctionalSample> {
    match (spec.error_model, far) {
        (ErrorModel::Far1, Some(cfg)) => far1_sample(n, cfg, seed),
        _ => bridge_sample(grid, n, seed),
    }
}

/// `(1 − α)` empirical quantile of sorted draws.
fn upper_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let r = sorted.len();
    let k = ((1.0 - alpha) * r as f64).ceil() as usize;
    sorted[k.clamp(1, r) - 1]
}

struct RepOutcome {
    /// `[a][alpha]` rejection flags.
    u1: Vec<Vec<bool>>,
    u2: Vec<Vec<bool>>,
    records: Vec<ReplicationRecord>,
}

fn run_replication(
    spec: &ExperimentSpec,
    grid: Grid,
    far: Option<&Far1Config>,
    rep: usize,
) -> Result<RepOutcome> {
    let seed = RngSeed::new(spec.seed, rep as u64);
    let e1 = draw_errors(spec, grid, far, spec.n, seed.child(1))?;
    let e2 = draw_errors(spec, grid, far, spec.m, seed.child(2))?;
    let cfg = spec.test_config(seed.child(3));
    let base = analyze(&e1, &e2, &cfg)?;
    let p = base.resolve_p(cfg.p);
    let eigenvalues = &base.eig.eigenvalues[..p];
    let mut draws = mc_null_draws(eigenvalues, spec.mc_reps, cfg.seed)?;
    draws.sort_by(f64::total_cmp);
    let crit: Vec<f64> = spec.alphas.iter().map(|&al| upper_quantile(&draws, al)).collect();

    let mut out = RepOutcome {
        u1: Vec::with_capacity(spec.a_grid.len()),
        u2: Vec::with_capacity(spec.a_grid.len()),
        records: Vec::with_capacity(spec.a_grid.len()),
    };
    for &a in &spec.a_grid {
        let shifted = add_alternative_mean(&e2, a);
        let st = base.with_shifted_samples(&e1, &shifted)?.statistics(p)?;
        let pv2 = pvalue_chisq(st.u2, p)?;
        out.u1.push(crit.iter().map(|c| st.u1 > *c).collect());
        out.u2.push(spec.alphas.iter().map(|al| pv2 < *al).collect());
        out.records.push(ReplicationRecord {
            a,
            rep,
            p,
            u1: st.u1,
            u2: st.u2,
            pvalue_u1: mc_tail(st.u1, &draws),
            pvalue_u2: pv2,
        });
    }
    Ok(out)
}

/// Runs the experiment and returns the power table.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<PowerTable> {
    Ok(run_experiment_logged(spec)?.0)
}

/// Runs the experiment and also returns one record per `(a, replication)`.
pub fn run_experiment_logged(spec: &ExperimentSpec) -> Result<(PowerTable, Vec<ReplicationRecord>)> {
    spec.validate()?;
    let grid = Grid::new(spec.grid_len)?;
    let far = match spec.error_model {
        ErrorModel::Far1 => Some(Far1Config::gaussian(grid)),
        ErrorModel::IidBridge => None,
    };
    let outcomes: Vec<RepOutcome> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| run_replication(spec, grid, far.as_ref(), rep))
        .collect::<Result<_>>()?;

    let (na, nal) = (spec.a_grid.len(), spec.alphas.len());
    let mut c1 = vec![vec![0usize; nal]; na];
    let mut c2 = vec![vec![0usize; nal]; na];
    let mut records = Vec::with_capacity(spec.reps * na);
    for o in outcomes {
        for i in 0..na {
            for j in 0..nal {
                c1[i][j] += o.u1[i][j] as usize;
                c2[i][j] += o.u2[i][j] as usize;
            }
        }
        records.extend(o.records);
    }
    let pct = |c: usize| 100.0 * c as f64 / spec.reps as f64;
    let rows = spec
        .a_grid
        .iter()
        .enumerate()
        .map(|(i, &a)| PowerRow {
            a,
            u1: c1[i].iter().map(|&c| pct(c)).collect(),
            u2: c2[i].iter().map(|&c| pct(c)).collect(),
        })
        .collect();
    Ok((
        PowerTable {
            alphas: spec.alphas.clone(),
            reps: spec.reps,
            rows,
        },
        records,
    ))
}

fn csv_header(alphas: &[f64]) -> Vec<String> {
    let mut h = vec!["a".to_string()];
    for al in alphas {
        h.push(format!("U1@{}", format_float(*al)));
        h.push(format!("U2@{}", format_float(*al)));
    }
    h
}

/// Aligned plain-text rendering: one line per `a`, two columns (U1, U2)
/// per level.
pub fn format_table(t: &PowerTable) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:>5}", "a");
    for al in &t.alphas {
        let _ = write!(s, " | {:>16}", format!("alpha={al}"));
    }
    s.push('\n');
    let _ = write!(s, "{:>5}", "");
    for _ in &t.alphas {
        let _ = write!(s, " | {:>7} {:>8}", "U(1)", "U(2)");
    }
    s.push('\n');
    for row in &t.rows {
        let _ = write!(s, "{:>5.2}", row.a);
        for (x, y) in row.u1.iter().zip(&row.u2) {
            let _ = write!(s, " | {x:>7.1} {y:>8.1}");
        }
        s.push('\n');
    }
    s
}

/// CSV rendering: header `a,U1@α,U2@α,...`, then one row per `a`.
pub fn write_table_csv<W: Write>(t: &PowerTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(&t.alphas)).map_err(csv_err)?;
    for row in &t.rows {
        let mut rec = vec![format_float(row.a)];
        for (x, y) in row.u1.iter().zip(&row.u2) {
            rec.push(format_float(*x));
            rec.push(format_float(*y));
        }
        w.write_record(rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses [`write_table_csv`] output back into `(alphas, rows)`.
pub fn parse_table_csv(text: &str) -> Result<(Vec<f64>, Vec<PowerRow>)> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(csv_err)?.clone();
    let bad = |line: u64, msg: &str| Error::Parse { line, msg: msg.into() };
    if header.get(0) != Some("a") || header.len() % 2 != 1 {
        return Err(bad(1, "unexpected header"));
    }
    let mut alphas = Vec::new();
    for pair in header.iter().skip(1).collect::<Vec<_>>().chunks(2) {
        let al = pair[0]
            .strip_prefix("U1@")
            .and_then(|x| x.parse::<f64>().ok())
            .ok_or_else(|| bad(1, "unexpected header"))?;
        alphas.push(al);
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let vals: Vec<f64> = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad(line, "not a number")))
            .collect::<Result<_>>()?;
        if vals.len() != header.len() {
            return Err(bad(line, "wrong field count"));
        }
        rows.push(PowerRow {
            a: vals[0],
            u1: vals[1..].iter().step_by(2).copied().collect(),
            u2: vals[2..].iter().step_by(2).copied().collect(),
        });
    }
    Ok((alphas, rows))
}

/// Per-replication log as CSV.
pub fn write_records_csv<W: Write>(records: &[ReplicationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["a", "rep", "p", "U1", "U2", "pvalue_U1", "pvalue_U2"])
        .map_err(csv_err)?;
    for r in records {
        w.write_record([
            format_float(r.a),
            r.rep.to_string(),
            r.p.to_string(),
            format_float(r.u1),
            format_float(r.u2),
            format_float(r.pvalue_u1),
            format_float(r.pvalue_u2),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
