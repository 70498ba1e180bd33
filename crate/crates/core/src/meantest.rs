//! Two-sample tests for equality of mean functions.
//!
//! Given samples `X_1..X_N` and `X*_1..X*_M`, the statistics are
//!
//! ```text
//! U      = NM/(N+M) ∫ (X̄_N − X̄*_M)²
//! U⁽¹⁾   = NM/(N+M) Σ_{i≤p} â_i²          (null: Σ λ̂_i N_i²)
//! U⁽²⁾   = NM/(N+M) Σ_{i≤p} â_i² / λ̂_i    (null: χ²(p))
//! ```
//!
//! where `â_i = ⟨X̄_N − X̄*_M, φ̂_i⟩` and `(λ̂_i, φ̂_i)` are eigenpairs of the
//! pooled long-run kernel `d̂_{N,M}`.

use std::fmt::Write as _;
use std::io::Write;
use std::ops::RangeInclusive;

use ndarray::{Array1, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::eigsolve::{project_surface, select_p, symmetric_eig, EigenSystem, DEFAULT_THRESHOLD};
use crate::error::{Error, Result, Stage};
use crate::fcurve::{fourier_basis, sample_mean, BasisSet, FunctionalSample, DEFAULT_BASIS_COUNT};
use crate::lrcov::{csv_err, format_float, iid_cov, pooled_longrun_audited, Bandwidth, WeightKernel};
use crate::simgen::RngSeed;
use crate::special::chi_square_sf;

/// Eigenvalues at or below this fraction of the largest one are treated as
/// numerically zero.
pub const EIGEN_FLOOR: f64 = 1e-12;

pub const DEFAULT_MC_REPS: usize = 10_000;
pub const MIN_MC_REPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PChoice {
    #[default]
    Auto,
    Fixed(usize),
}

/// Which spectrum the cumulative-variance rule is applied to when `p` is
/// chosen automatically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PRule {
    /// Each sample's lag-0 covariance spectrum separately; the larger `p`
    /// wins.
    #[default]
    PerSample,
    /// The spectrum of the pooled kernel `d̂`.
    Pooled,
}

#[derive(Debug, Clone)]
pub struct TestConfig {
    pub p: PChoice,
    pub p_rule: PRule,
    pub threshold: f64,
    pub kernel: WeightKernel,
    pub bandwidth: Bandwidth,
    pub dependent: bool,
    pub mc_reps: usize,
    pub seed: RngSeed,
    pub basis_count: usize,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            p: PChoice::Auto,
            p_rule: PRule::PerSample,
            threshold: DEFAULT_THRESHOLD,
            kernel: WeightKernel::FlatTop,
            bandwidth: Bandwidth::CubeRoot,
            dependent: true,
            mc_reps: DEFAULT_MC_REPS,
            seed: RngSeed::default(),
            basis_count: DEFAULT_BASIS_COUNT,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mc_reps < MIN_MC_REPS {
            return Err(Error::InvalidArgument(format!(
                "mc_reps must be >= {MIN_MC_REPS}, got {}",
                self.mc_reps
            )));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "threshold must lie in (0, 1], got {}",
                self.threshold
            )));
        }
        if self.basis_count < 1 {
            return Err(Error::InvalidArgument("basis_count must be >= 1".into()));
        }
        if let PChoice::Fixed(0) = self.p {
            return Err(Error::InvalidArgument("p must be >= 1".into()));
        }
        Ok(())
    }
}

/// Tuning values actually used by a test run.
#[derive(Debug, Clone, PartialEq)]
pub struct Audit {
    pub n: usize,
    pub m: usize,
    pub theta: f64,
    pub bandwidths: Option<(f64, f64)>,
    pub kernel: WeightKernel,
    pub dependent: bool,
    pub basis_count: usize,
    pub grid_len: usize,
    pub threshold: f64,
    /// Auto-selected `p` per sample (or pooled, repeated) when `p` is auto.
    pub p_auto: Option<(usize, usize)>,
    pub mc_reps: usize,
    pub seed: RngSeed,
    pub asymmetry: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub u_full: f64,
    pub u1: f64,
    pub u2: f64,
    pub p_used: usize,
    pub eigenvalues_used: Vec<f64>,
    pub pvalue_u1: f64,
    pub pvalue_u2: f64,
    pub ahat: Vec<f64>,
    pub audit: Audit,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format_float(*x)).collect::<Vec<_>>().join(";")
}

impl TestReport {
    /// Line-oriented `key=value` rendering.
    pub fn to_key_value(&self) -> String {
        let a = &self.audit;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("U_full", format_float(self.u_full));
        kv("U1", format_float(self.u1));
        kv("U2", format_float(self.u2));
        kv("p", self.p_used.to_string());
        kv("eigenvalues", join(&self.eigenvalues_used));
        kv("ahat", join(&self.ahat));
        kv("pvalue_U1", format_float(self.pvalue_u1));
        kv("pvalue_U2", format_float(self.pvalue_u2));
        kv("n", a.n.to_string());
        kv("m", a.m.to_string());
        kv("theta", format_float(a.theta));
        match a.bandwidths {
            Some((h1, h2)) => {
                kv("h", format_float(h1));
                kv("h_star", format_float(h2));
            }
            None => {
                kv("h", "none".into());
                kv("h_star", "none".into());
            }
        }
        kv("kernel", a.kernel.name().into());
        kv("dependent", a.dependent.to_string());
        kv("basis_count", a.basis_count.to_string());
        kv("grid_len", a.grid_len.to_string());
        kv("threshold", format_float(a.threshold));
        kv(
            "p_auto",
            a.p_auto.map_or("none".into(), |(x, y)| format!("{x};{y}")),
        );
        kv("mc_reps", a.mc_reps.to_string());
        kv("seed", a.seed.seed.to_string());
        kv("stream", a.seed.stream.to_string());
        kv("asymmetry", format_float(a.asymmetry));
        s
    }
}

pub const CSV_HEADER: [&str; 6] = ["p", "U_full", "U1", "U2", "pvalue_U1", "pvalue_U2"];

/// CSV with one row per report (one per tested `p`).
pub fn write_reports_csv<W: Write>(reports: &[TestReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in reports {
        w.write_record([
            r.p_used.to_string(),
            format_float(r.u_full),
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

/// P-values in percent across `p`, one column per `p`:
///
/// ```text
/// p     |      1      2 ...
/// U(1)  |  12.05  14.61 ...
/// U(2)  |  12.05  20.37 ...
/// ```
pub fn format_p_range(reports: &[TestReport]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<6}|", "p");
    for r in reports {
        let _ = write!(s, " {:>7}", r.p_used);
    }
    s.push('\n');
    for (label, f) in [
        ("U(1)", (|r: &TestReport| r.pvalue_u1) as fn(&TestReport) -> f64),
        ("U(2)", |r: &TestReport| r.pvalue_u2),
    ] {
        let _ = write!(s, "{label:<6}|");
        for r in reports {
            let _ = write!(s, " {:>7.2}", 100.0 * f(r));
        }
        s.push('\n');
    }
    s
}

fn nm_factor(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    n * m / (n + m)
}

/// `NM/(N+M) ∫ (X̄_N − X̄*_M)²`.
pub fn statistic_u(s1: &FunctionalSample, s2: &FunctionalSample) -> Result<f64> {
    s1.grid().check_same(&s2.grid())?;
    let diff = sample_mean(s1).into_values() - sample_mean(s2).into_values();
    let integral = s1.grid().integrate(diff.mapv(|v| v * v).view());
    Ok(nm_factor(s1.len(), s2.len()) * integral)
}

/// Basis coefficients of the mean difference,
/// `N⁻¹ Σ ⟨X_i, e_ℓ⟩ − M⁻¹ Σ ⟨X*_j, e_ℓ⟩`.
fn mean_difference_coefficients(
    s1: &FunctionalSample,
    s2: &FunctionalSample,
    basis: &BasisSet,
) -> Result<Array1<f64>> {
    s1.grid().check_same(&s2.grid())?;
    s1.grid().check_same(&basis.grid())?;
    let ew = basis.weighted();
    let c1 = s1.data().dot(&ew.t()).mean_axis(Axis(0)).expect("nonempty");
    let c2 = s2.data().dot(&ew.t()).mean_axis(Axis(0)).expect("nonempty");
    Ok(c1 - c2)
}

fn projections_from_coefficients(coef: &Array1<f64>, eig: &EigenSystem, p: usize) -> Result<Vec<f64>> {
    if p == 0 || p > eig.len() {
        return Err(Error::POutOfRange {
            p,
            available: eig.len(),
        });
    }
    Ok((0..p).map(|m| eig.eigenvectors.column(m).dot(coef)).collect())
}

/// `â_m = Σ_ℓ φ_{m,ℓ} (N⁻¹ Σ ⟨X_i, e_ℓ⟩ − M⁻¹ Σ ⟨X*_j, e_ℓ⟩)` for
/// `m = 1..p`.
pub fn projections(
    s1: &FunctionalSample,
    s2: &FunctionalSample,
    eig: &EigenSystem,
    p: usize,
) -> Result<Vec<f64>> {
    let coef = mean_difference_coefficients(s1, s2, &eig.basis)?;
    projections_from_coefficients(&coef, eig, p)
}

/// `NM/(N+M) Σ â_i²`.
pub fn statistic_u1(ahat: &[f64], n: usize, m: usize) -> f64 {
    nm_factor(n, m) * ahat.iter().map(|a| a * a).sum::<f64>()
}

/// `NM/(N+M) Σ â_i² / λ̂_i`. Fails if some `λ̂_i` is at or below
/// `EIGEN_FLOOR · λ̂_1`.
pub fn statistic_u2(ahat: &[f64], eigenvalues: &[f64], n: usize, m: usize) -> Result<f64> {
    if eigenvalues.len() < ahat.len() {
        return Err(Error::POutOfRange {
            p: ahat.len(),
            available: eigenvalues.len(),
        });
    }
    let floor = EIGEN_FLOOR * eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let mut acc = 0.0;
    for (i, (a, l)) in ahat.iter().zip(eigenvalues).enumerate() {
        if !(*l > floor) {
            return Err(Error::DegenerateEigenvalue {
                index: i + 1,
                value: *l,
                floor,
            });
        }
        acc += a * a / l;
    }
    Ok(nm_factor(n, m) * acc)
}

/// `P(χ²(p) > u2)`.
pub fn pvalue_chisq(u2: f64, p: usize) -> Result<f64> {
    if !(u2 >= 0.0) {
        return Err(Error::InvalidArgument(format!("statistic must be >= 0, got {u2}")));
    }
    if p == 0 {
        return Err(Error::InvalidArgument("degrees of freedom must be >= 1".into()));
    }
    Ok(chi_square_sf(u2, p))
}

/// `reps` draws of `Σ λ_i N_i²` with iid standard normal `N_i`.
pub fn mc_null_draws(eigenvalues: &[f64], reps: usize, seed: RngSeed) -> Result<Vec<f64>> {
    if eigenvalues.is_empty() {
        return Err(Error::InvalidArgument("empty eigenvalue list".into()));
    }
    if let Some(l) = eigenvalues.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidArgument(format!("eigenvalue {l} is not a finite nonnegative number")));
    }
    let mut rng = seed.rng();
    Ok((0..reps)
        .map(|_| {
            eigenvalues
                .iter()
                .map(|l| {
                    let z: f64 = rng.sample(StandardNormal);
                    l * z * z
                })
                .sum()
        })
        .collect())
}

/// Monte Carlo tail `(1 + #{draws ≥ u1}) / (reps + 1)`.
pub fn pvalue_mc(u1: f64, eigenvalues: &[f64], reps: usize, seed: RngSeed) -> Result<f64> {
    if reps < MIN_MC_REPS {
        return Err(Error::InvalidArgument(format!(
            "reps must be >= {MIN_MC_REPS}, got {reps}"
        )));
    }
    let draws = mc_null_draws(eigenvalues, reps, seed)?;
    Ok(mc_tail(u1, &draws))
}

pub(crate) fn mc_tail(u1: f64, draws: &[f64]) -> f64 {
    let exceed = draws.iter().filter(|d| **d >= u1).count();
    (1 + exceed) as f64 / (draws.len() + 1) as f64
}

/// Everything about a two-sample comparison that does not depend on `p`.
#[derive(Debug, Clone)]
pub struct TwoSampleAnalysis {
    pub eig: EigenSystem,
    /// Basis coefficients of `X̄_N − X̄*_M`.
    pub mean_diff: Array1<f64>,
    pub u_full: f64,
    /// Auto-selected `p`, when the configuration asks for it.
    pub p_auto: Option<usize>,
    pub audit: Audit,
}

/// Runs the `p`-independent part of the pipeline: pooled kernel,
/// projection, eigendecomposition, and automatic `p` selection.
pub fn analyze(s1: &FunctionalSample, s2: &FunctionalSample, cfg: &TestConfig) -> Result<TwoSampleAnalysis> {
    cfg.validate()?;
    let grid = s1.grid();
    grid.check_same(&s2.grid())?;
    let (n, m) = (s1.len(), s2.len());
    for len in [n, m] {
        if len < 2 {
            return Err(Error::InsufficientSample { needed: 2, got: len });
        }
    }

    let pooled = pooled_longrun_audited(s1, s2, cfg.kernel, cfg.bandwidth, cfg.dependent)
        .map_err(Error::at(Stage::Covariance))?;
    let basis = fourier_basis(grid, cfg.basis_count).map_err(Error::at(Stage::Projection))?;
    let op = project_surface(&pooled.surface, &basis).map_err(Error::at(Stage::Projection))?;
    let eig = symmetric_eig(&op).map_err(Error::at(Stage::Eigen))?;

    let per_sample = |s: &FunctionalSample| -> Result<usize> {
        let op = project_surface(&iid_cov(s), &basis)?;
        let e = symmetric_eig(&op)?;
        select_p(&e.eigenvalues, cfg.threshold)
    };
    let p_auto_pair = match (cfg.p, cfg.p_rule) {
        (PChoice::Fixed(_), _) => None,
        (PChoice::Auto, PRule::PerSample) => {
            let p1 = per_sample(s1).map_err(Error::at(Stage::SelectP))?;
            let p2 = per_sample(s2).map_err(Error::at(Stage::SelectP))?;
            Some((p1, p2))
        }
        (PChoice::Auto, PRule::Pooled) => {
            let p = select_p(&eig.eigenvalues, cfg.threshold).map_err(Error::at(Stage::SelectP))?;
            Some((p, p))
        }
    };

    let mean_diff = mean_difference_coefficients(s1, s2, &basis).map_err(Error::at(Stage::Statistics))?;
    let u_full = statistic_u(s1, s2).map_err(Error::at(Stage::Statistics))?;
    let audit = Audit {
        n,
        m,
        theta: pooled.theta,
        bandwidths: pooled.bandwidths,
        kernel: cfg.kernel,
        dependent: cfg.dependent,
        basis_count: cfg.basis_count,
        grid_len: grid.len(),
        threshold: cfg.threshold,
        p_auto: p_auto_pair,
        mc_reps: cfg.mc_reps,
        seed: cfg.seed,
        asymmetry: eig.asymmetry,
    };
    Ok(TwoSampleAnalysis {
        eig,
        mean_diff,
        u_full,
        p_auto: p_auto_pair.map(|(a, b)| a.max(b)),
        audit,
    })
}

/// Statistics at one `p`, without p-values.
#[derive(Debug, Clone, PartialEq)]
pub struct Statistics {
    pub p: usize,
    pub ahat: Vec<f64>,
    pub u1: f64,
    pub u2: f64,
}

impl TwoSampleAnalysis {
    /// `p` from the configuration: the fixed value or the auto-selected one.
    pub fn resolve_p(&self, choice: PChoice) -> usize {
        match choice {
            PChoice::Fixed(p) => p,
            PChoice::Auto => self.p_auto.expect("auto p computed by analyze"),
        }
    }

    /// Same analysis with the mean difference and `U` recomputed for new
    /// samples. Valid only when each new sample differs from the analyzed
    /// one by a fixed curve added to every observation: the pooled kernel,
    /// its eigenpairs and the automatic `p` are all invariant to such
    /// shifts.
    pub fn with_shifted_samples(&self, s1: &FunctionalSample, s2: &FunctionalSample) -> Result<TwoSampleAnalysis> {
        if (s1.len(), s2.len()) != (self.audit.n, self.audit.m) {
            return Err(Error::InvalidArgument("sample sizes differ from the analyzed samples".into()));
        }
        let mean_diff = mean_difference_coefficients(s1, s2, &self.eig.basis)?;
        let u_full = statistic_u(s1, s2)?;
        Ok(TwoSampleAnalysis {
            mean_diff,
            u_full,
            ..self.clone()
        })
    }

    pub fn statistics(&self, p: usize) -> Result<Statistics> {
        let ahat = projections_from_coefficients(&self.mean_diff, &self.eig, p)
            .map_err(Error::at(Stage::Statistics))?;
        let (n, m) = (self.audit.n, self.audit.m);
        let u1 = statistic_u1(&ahat, n, m);
        let u2 = statistic_u2(&ahat, &self.eig.eigenvalues[..p], n, m).map_err(Error::at(Stage::Statistics))?;
        Ok(Statistics { p, ahat, u1, u2 })
    }

    pub fn report(&self, p: usize, mc_reps: usize, seed: RngSeed) -> Result<TestReport> {
        let st = self.statistics(p)?;
        let eigenvalues_used = self.eig.eigenvalues[..p].to_vec();
        let pvalue_u1 = pvalue_mc(st.u1, &eigenvalues_used, mc_reps, seed).map_err(Error::at(Stage::PValue))?;
        let pvalue_u2 = pvalue_chisq(st.u2, p).map_err(Error::at(Stage::PValue))?;
        Ok(TestReport {
            u_full: self.u_full,
            u1: st.u1,
            u2: st.u2,
            p_used: p,
            eigenvalues_used,
            pvalue_u1,
            pvalue_u2,
            ahat: st.ahat,
            audit: self.audit.clone(),
        })
    }
}

/// Full test: pooled kernel, projection, eigendecomposition, `p`
/// selection, statistics and both p-values.
pub fn run_two_sample_test(s1: &FunctionalSample, s2: &FunctionalSample, cfg: &TestConfig) -> Result<TestReport> {
    let analysis = analyze(s1, s2, cfg)?;
    let p = analysis.resolve_p(cfg.p);
    analysis.report(p, cfg.mc_reps, cfg.seed)
}

/// One report per `p` in `ps`, sharing the eigendecomposition.
pub fn run_p_range(
    s1: &FunctionalSample,
    s2: &FunctionalSample,
    cfg: &TestConfig,
    ps: RangeInclusive<usize>,
) -> Result<Vec<TestReport>> {
    let analysis = analyze(s1, s2, cfg)?;
    ps.map(|p| analysis.report(p, cfg.mc_reps, cfg.seed)).collect()
}
