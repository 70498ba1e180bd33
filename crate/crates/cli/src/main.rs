//! `fmean`: two-sample mean tests for functional time series.
//!
//! Exit codes: 0 success, 2 input error, 3 incompatible inputs, 4 numeric
//! failure.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use fmean_core::csvio::{read_sample, write_sample, CurveFile};
use fmean_core::experiment::{run_experiment_logged, write_records_csv, write_table_csv, ErrorModel, ExperimentSpec};
use fmean_core::fcurve::{resample_sample, Grid};
use fmean_core::meantest::{format_p_range, write_reports_csv, PRule, TestReport};
use fmean_core::simgen::{add_alternative_mean, bridge_sample, far1_sample, Far1Config};
use fmean_core::{
    format_table, iid_cov, longrun_cov, run_p_range, run_two_sample_test, Bandwidth, Error, PChoice, RngSeed,
    TestConfig, WeightKernel,
};

#[derive(Parser, Debug)]
#[command(name = "fmean", version, about = "Mean-function tests for functional time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    /// key=value lines
    Kv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PRuleArg {
    PerSample,
    Pooled,
}

#[derive(clap::Args, Debug)]
struct EstimatorArgs {
    /// Lag-weight kernel: flat-top, bartlett or truncated.
    #[arg(long, default_value = "flat-top")]
    kernel: String,
    /// Bandwidth: cube-root (h = N^{1/3}) or a fixed positive value.
    #[arg(long, default_value = "cube-root")]
    bandwidth: String,
    /// Use the long-run (dependent) estimator; false uses the lag-0 covariance.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    dependent: bool,
}

impl EstimatorArgs {
    fn parse(&self) -> Result<(WeightKernel, Bandwidth), Error> {
        Ok((self.kernel.parse()?, self.bandwidth.parse()?))
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test equality of the mean functions of two curve samples.
    Test {
        sample1: PathBuf,
        sample2: PathBuf,
        #[command(flatten)]
        est: EstimatorArgs,
        /// Number of projections: auto or a positive integer.
        #[arg(long, default_value = "auto")]
        p: String,
        /// Report every p in a range, e.g. 1..9.
        #[arg(long)]
        p_range: Option<String>,
        #[arg(long, value_enum, default_value = "per-sample")]
        p_rule: PRuleArg,
        /// Cumulative variance fraction for automatic p.
        #[arg(long, default_value_t = 0.85)]
        threshold: f64,
        #[arg(long, default_value_t = 10_000)]
        mc_reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 49)]
        basis: usize,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a curve sample and write it as CSV.
    Simulate {
        /// bridge or far1
        #[arg(long, default_value = "bridge")]
        model: String,
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Grid points per curve.
        #[arg(long, default_value_t = 100)]
        t: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        stream: u64,
        /// Add a·t(1−t) to every curve.
        #[arg(long, default_value_t = 0.0)]
        shift: f64,
        #[arg(long, default_value_t = 50)]
        burn_in: usize,
        /// Write a `t:` grid row first.
        #[arg(long)]
        grid_header: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Size/power simulation study.
    Power {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        m: usize,
        /// bridge or far1
        #[arg(long, alias = "model", default_value = "bridge")]
        error_model: String,
        /// Comma-separated shift amplitudes.
        #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0,1.1,1.2,1.3")]
        a_grid: String,
        #[arg(long, default_value = "0.01,0.05,0.10")]
        alphas: String,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value_t = 100)]
        t: usize,
        #[arg(long, default_value = "auto")]
        p: String,
        #[arg(long, default_value_t = 0.85)]
        threshold: f64,
        #[arg(long, default_value_t = 2000)]
        mc_reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 49)]
        basis: usize,
        #[arg(long, default_value = "flat-top")]
        kernel: String,
        #[arg(long, default_value = "cube-root")]
        bandwidth: String,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write per-replication statistics to this CSV file.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Estimate the long-run covariance surface of a sample.
    Lrcov {
        sample: PathBuf,
        #[command(flatten)]
        est: EstimatorArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Error with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn input(msg: impl Into<String>) -> Self {
        Self { code: 2, msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::GridMismatch { .. } => 3,
            Error::NonFinite(_)
            | Error::DegenerateSpectrum
            | Error::DegenerateEigenvalue { .. }
            | Error::NonstationaryKernel { .. } => 4,
            _ => 2,
        };
        Self { code, msg: e.to_string() }
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load(path: &Path) -> Result<CurveFile, Failure> {
    let f = File::open(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    read_sample(f).map_err(|e| {
        let mut fail = Failure::from(e);
        fail.msg = format!("{}: {}", path.display(), fail.msg);
        fail
    })
}

fn parse_p(s: &str) -> Result<PChoice, Failure> {
    if s == "auto" {
        return Ok(PChoice::Auto);
    }
    match s.parse::<usize>() {
        Ok(p) if p >= 1 => Ok(PChoice::Fixed(p)),
        _ => Err(Failure::input(format!("--p must be auto or a positive integer, got {s:?}"))),
    }
}

fn parse_range(s: &str) -> Result<RangeInclusive<usize>, Failure> {
    let bad = || Failure::input(format!("--p-range must look like 1..9, got {s:?}"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a < 1 || b < a {
        return Err(bad());
    }
    Ok(a..=b)
}

fn parse_list(s: &str, flag: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Failure::input(format!("{flag}: bad number {x:?}")))
        })
        .collect()
}

fn render_report(r: &TestReport) -> String {
    let a = &r.audit;
    let mut s = String::new();
    s.push_str(&format!("U_full      {:.6}\n", r.u_full));
    s.push_str(&format!("U(1)        {:.6}   p-value {:.2}%\n", r.u1, 100.0 * r.pvalue_u1));
    s.push_str(&format!("U(2)        {:.6}   p-value {:.2}%\n", r.u2, 100.0 * r.pvalue_u2));
    let auto = match a.p_auto {
        Some((p1, p2)) => format!(" (auto: {p1}, {p2})"),
        None => String::new(),
    };
    s.push_str(&format!("p           {}{auto}\n", r.p_used));
    let eig: Vec<String> = r.eigenvalues_used.iter().map(|v| format!("{v:.6e}")).collect();
    s.push_str(&format!("eigenvalues {}\n", eig.join(" ")));
    s.push_str(&format!("N, M        {}, {}\n", a.n, a.m));
    s.push_str(&format!("theta       {:.6}\n", a.theta));
    if let Some((h1, h2)) = a.bandwidths {
        s.push_str(&format!("h, h*       {h1:.6}, {h2:.6}\n"));
    }
    s.push_str(&format!(
        "kernel      {} (dependent={})\nbasis       {}\ngrid        {}\n",
        a.kernel, a.dependent, a.basis_count, a.grid_len
    ));
    s
}

/// Brings both samples onto one grid. Differing sizes are only reconciled
/// when both files carry their abscissae.
fn common_grid(a: CurveFile, b: CurveFile) -> Result<(CurveFile, CurveFile), Failure> {
    let (ga, gb) = (a.sample.grid(), b.sample.grid());
    if ga == gb {
        return Ok((a, b));
    }
    if !(a.has_grid && b.has_grid) {
        return Err(Failure {
            code: 3,
            msg: format!(
                "samples have {} and {} grid points; add a `t:` grid row to both files to resample",
                ga.len(),
                gb.len()
            ),
        });
    }
    let target = Grid::new(ga.len().min(gb.len()))?;
    eprintln!("warning: resampling both samples to the coarser {}-point grid", target.len());
    let fix = |f: CurveFile| CurveFile {
        sample: resample_sample(&f.sample, target),
        resampled: true,
        ..f
    };
    Ok((fix(a), fix(b)))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Test {
            sample1,
            sample2,
            est,
            p,
            p_range,
            p_rule,
            threshold,
            mc_reps,
            seed,
            basis,
            format,
            out,
        } => {
            let (kernel, bandwidth) = est.parse()?;
            let cfg = TestConfig {
                p: parse_p(&p)?,
                p_rule: match p_rule {
                    PRuleArg::PerSample => PRule::PerSample,
                    PRuleArg::Pooled => PRule::Pooled,
                },
                threshold,
                kernel,
                bandwidth,
                dependent: est.dependent,
                mc_reps,
                seed: RngSeed::new(seed, 0),
                basis_count: basis,
            };
            cfg.validate()?;
            let range = p_range.as_deref().map(parse_range).transpose()?;
            let (a, b) = common_grid(load(&sample1)?, load(&sample2)?)?;
            let reports = match &range {
                Some(r) => run_p_range(&a.sample, &b.sample, &cfg, r.clone())?,
                None => vec![run_two_sample_test(&a.sample, &b.sample, &cfg)?],
            };
            let mut w = output(&out)?;
            let io = |e: io::Error| Failure::input(e.to_string());
            match format {
                Format::Csv => write_reports_csv(&reports, &mut w)?,
                Format::Kv => {
                    for r in &reports {
                        write!(w, "{}", r.to_key_value()).map_err(io)?;
                    }
                }
                Format::Text if range.is_some() => {
                    writeln!(w, "P-values (in percent)").map_err(io)?;
                    write!(w, "{}", format_p_range(&reports)).map_err(io)?;
                }
                Format::Text => write!(w, "{}", render_report(&reports[0])).map_err(io)?,
            }
            w.flush().map_err(io)?;
        }
        Command::Simulate {
            model,
            n,
            t,
            seed,
            stream,
            shift,
            burn_in,
            grid_header,
            out,
        } => {
            let model: ErrorModel = model.parse()?;
            let grid = Grid::new(t)?;
            let rng = RngSeed::new(seed, stream);
            let sample = match model {
                ErrorModel::IidBridge => bridge_sample(grid, n, rng)?,
                ErrorModel::Far1 => far1_sample(n, &Far1Config::gaussian(grid).with_burn_in(burn_in), rng)?,
            };
            let sample = if shift != 0.0 {
                add_alternative_mean(&sample, shift)
            } else {
                sample
            };
            let mut w = output(&out)?;
            write_sample(&sample, &mut w, grid_header)?;
        }
        Command::Power {
            n,
            m,
            error_model,
            a_grid,
            alphas,
            reps,
            t,
            p,
            threshold,
            mc_reps,
            seed,
            basis,
            kernel,
            bandwidth,
            format,
            out,
            log,
        } => {
            let spec = ExperimentSpec {
                n,
                m,
                error_model: error_model.parse()?,
                a_grid: parse_list(&a_grid, "--a-grid")?,
                alphas: parse_list(&alphas, "--alphas")?,
                reps,
                grid_len: t,
                p: parse_p(&p)?,
                seed,
                mc_reps,
                basis_count: basis,
                threshold,
                kernel: kernel.parse()?,
                bandwidth: bandwidth.parse()?,
            };
            let (table, records) = run_experiment_logged(&spec)?;
            let mut w = output(&out)?;
            let io = |e: io::Error| Failure::input(e.to_string());
            match format {
                Format::Csv => write_table_csv(&table, &mut w)?,
                Format::Text | Format::Kv => {
                    writeln!(
                        w,
                        "Rejection rates (%), N={n}, M={m}, {} errors, {reps} replications",
                        spec.error_model
                    )
                    .map_err(io)?;
                    write!(w, "{}", format_table(&table)).map_err(io)?;
                }
            }
            w.flush().map_err(io)?;
            if let Some(path) = log {
                let f = File::create(&path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
                write_records_csv(&records, BufWriter::new(f))?;
            }
        }
        Command::Lrcov { sample, est, out } => {
            let (kernel, bandwidth) = est.parse()?;
            let file = load(&sample)?;
            let surf = if est.dependent {
                longrun_cov(&file.sample, kernel, bandwidth)?
            } else {
                iid_cov(&file.sample)
            };
            let mut w = output(&out)?;
            surf.write_csv(&mut w)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
