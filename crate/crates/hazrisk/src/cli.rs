//! The `hazrisk` command line tool.
//!
//! Every subcommand prints an aligned text table by default, writes JSON when
//! `--out` is given and tidy CSV when `--csv` is given.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hazrisk_core::bandwidth::{
    curvature_double_integral, curvature_single_integral, h_opt_group_diff, h_opt_relative_risk, BandwidthPiece, WeightFunction,
};
use hazrisk_core::grid::linspace;
use hazrisk_core::group_diff::{estimate_group_difference, estimate_group_difference_curve};
use hazrisk_core::local_fit::{fit_derivative_curve, integrate_derivative};
use hazrisk_core::relative_risk::{estimate_curve, estimate_relative_risk};
use hazrisk_core::{
    BandwidthPlan, GroupDiffConfig, GroupDiffEstimate, Kernel, RelRiskConfig, RelativeRiskEstimate, SurvivalDataset,
    VariableBandwidthRule,
};
use serde::Serialize;

use crate::design::{DesignId, DesignSpec};
use crate::io::{create, read_dataset_path, write_csv};
use crate::study::{run_study, with_threads, SimulationConfig, SimulationReport, TwoStepEstimators};
use crate::{HazriskError, Result};

/// Window censoring share above which group-difference estimates are
/// flagged as unreliable.
pub const CENSORING_WARNING: f64 = 0.8;

#[derive(Debug, Parser)]
#[command(name = "hazrisk", version, about = "Local partial likelihood estimation of relative risk in the Cox model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// First-step derivative curve and its integral.
    FitCurve(FitCurveArgs),
    /// Relative risk ψ(x2) − ψ(x1) at one pair or along an anchored curve.
    RelRisk(RelRiskArgs),
    /// Risk difference between two groups along the covariate.
    GroupDiff(GroupDiffArgs),
    /// Monte Carlo comparison on the simulation designs.
    Simulate(SimulateArgs),
    /// Asymptotically optimal constant bandwidth.
    Bandwidth(BandwidthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelArg {
    Epanechnikov,
    Uniform,
    Triangular,
}

impl From<KernelArg> for Kernel {
    fn from(k: KernelArg) -> Kernel {
        match k {
            KernelArg::Epanechnikov => Kernel::Epanechnikov,
            KernelArg::Uniform => Kernel::Uniform,
            KernelArg::Triangular => Kernel::Triangular,
        }
    }
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Write JSON here instead of printing a table.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the records as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EstimatorArgs {
    /// First-step bandwidth.
    #[arg(long)]
    h1: f64,
    /// Second-step bandwidth [default: 0.8·h1].
    #[arg(long)]
    h: Option<f64>,
    /// Degree of the second-step offsets.
    #[arg(long, default_value_t = 1)]
    p: usize,
    /// First-step degree; above `p` enables the bias correction.
    #[arg(long, default_value_t = 2)]
    p1: usize,
    #[arg(long, value_enum, default_value_t = KernelArg::Epanechnikov)]
    kernel: KernelArg,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
}

impl EstimatorArgs {
    fn validate(&self) -> Result<()> {
        positive("h1", self.h1)?;
        if let Some(h) = self.h {
            positive("h", h)?;
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(HazriskError::Argument(format!("ci-level must lie in (0, 1), got {}", self.ci_level)));
        }
        if self.p1 < self.p || self.p == 0 {
            return Err(HazriskError::Argument(format!("need 1 <= p <= p1, got p={} p1={}", self.p, self.p1)));
        }
        Ok(())
    }

    fn relative_risk(&self) -> Result<RelRiskConfig> {
        self.validate()?;
        let mut c = RelRiskConfig::new(self.h1);
        c.h = self.h.unwrap_or(c.h);
        c.p = self.p;
        c.p1 = self.p1;
        c.kernel = self.kernel.into();
        c.ci_level = self.ci_level;
        Ok(c)
    }

    fn group_diff(&self, smooth: bool) -> Result<GroupDiffConfig> {
        self.validate()?;
        let mut c = GroupDiffConfig::new(self.h1);
        c.h = self.h.unwrap_or(c.h);
        c.p = self.p;
        c.p1 = self.p1;
        c.kernel = self.kernel.into();
        c.ci_level = self.ci_level;
        c.smooth_bias = smooth;
        Ok(c)
    }
}

#[derive(Debug, Args)]
struct FitCurveArgs {
    /// CSV with columns x, time, status.
    input: PathBuf,
    /// `const:<h>` or `piecewise:<base>;<lo>:<hi>:<mult>[;...]`.
    #[arg(long)]
    h_rule: String,
    #[arg(long, default_value_t = 2)]
    degree: usize,
    /// `<lo>:<hi>:<points>` [default: data range, 51 points].
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Point where the integrated curve is zero [default: middle grid node].
    #[arg(long, allow_hyphen_values = true)]
    reference: Option<f64>,
    #[arg(long, value_enum, default_value_t = KernelArg::Epanechnikov)]
    kernel: KernelArg,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct RelRiskArgs {
    input: PathBuf,
    #[arg(long, requires = "x2", conflicts_with = "anchor", allow_hyphen_values = true)]
    x1: Option<f64>,
    #[arg(long, requires = "x1", allow_hyphen_values = true)]
    x2: Option<f64>,
    /// Estimate the curve ψ(x) − ψ(anchor) on the grid.
    #[arg(long, required_unless_present = "x1", allow_hyphen_values = true)]
    anchor: Option<f64>,
    #[arg(long, requires = "anchor", allow_hyphen_values = true)]
    grid: Option<String>,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct GroupDiffArgs {
    /// CSV with columns x, time, status, group.
    input: PathBuf,
    /// Reference group [default: smaller of the two labels].
    #[arg(long)]
    z1: Option<i64>,
    #[arg(long)]
    z2: Option<i64>,
    /// Single covariate value instead of a grid.
    #[arg(long, conflicts_with = "grid", allow_hyphen_values = true)]
    x: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Center intervals on the pointwise bias instead of the smoothed one.
    #[arg(long)]
    no_smooth_bias: bool,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3), required_unless_present = "table1")]
    design: Option<u8>,
    #[arg(long, default_value_t = 300)]
    n: usize,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    /// Target censoring proportion.
    #[arg(long, default_value_t = 0.0)]
    censoring: f64,
    #[arg(long, default_value_t = 0.25)]
    h0: f64,
    /// Drawn at random and printed when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads [default: HAZRISK_THREADS, else all cores].
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = KernelArg::Epanechnikov)]
    kernel: KernelArg,
    /// Also estimate interval coverage of ψ(x) − ψ(anchor) at this x.
    #[arg(long, allow_hyphen_values = true)]
    coverage_point: Option<f64>,
    /// Run all 3 designs × 3 bandwidths × 2 censoring levels.
    #[arg(long, conflicts_with_all = ["design", "h0", "censoring"])]
    table1: bool,
    /// Write the report (or the array of reports) as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-replication records as CSV.
    #[arg(long)]
    per_rep: Option<PathBuf>,
    /// Mean curves and pointwise MSE on the grid as CSV.
    #[arg(long)]
    curve_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Target {
    RelRisk,
    GroupDiff,
}

#[derive(Debug, Args)]
struct BandwidthArgs {
    #[arg(long, value_enum, default_value_t = Target::RelRisk)]
    target: Target,
    #[arg(long, default_value_t = 1)]
    p: usize,
    #[arg(long, value_enum, default_value_t = KernelArg::Epanechnikov)]
    kernel: KernelArg,
    /// Override the kernel constant C_{0,p}(K).
    #[arg(long)]
    c0p: Option<f64>,
    /// Sample size [default: rows of --input].
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    variance_integral: f64,
    /// Required unless a pilot estimate from --input is wanted.
    #[arg(long, required_unless_present = "input")]
    curvature_integral: Option<f64>,
    /// Data for a pilot estimate of the curvature integral.
    #[arg(long, requires = "pilot_h")]
    input: Option<PathBuf>,
    #[arg(long)]
    pilot_h: Option<f64>,
    /// Weight support `<lo>:<hi>` [default: data range].
    #[arg(long, allow_hyphen_values = true)]
    weight: Option<String>,
    #[arg(long, default_value_t = 1)]
    z1: i64,
    #[arg(long, default_value_t = 2)]
    z2: i64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::FitCurve(a) => fit_curve(a, out, err),
        Command::RelRisk(a) => rel_risk(a, out, err),
        Command::GroupDiff(a) => group_diff(a, out, err),
        Command::Simulate(a) => simulate(a, out, err),
        Command::Bandwidth(a) => bandwidth(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(HazriskError::Argument(format!("{name} must be positive, got {v}")))
    }
}

fn number(s: &str, what: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| HazriskError::Argument(format!("{what}: not a number: {s:?}")))
}

/// `<lo>:<hi>:<points>`.
fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        return Err(HazriskError::Argument(format!("grid must be <lo>:<hi>:<points>, got {spec:?}")));
    };
    let (lo, hi) = (number(lo, "grid")?, number(hi, "grid")?);
    let n: usize = n.trim().parse().map_err(|_| HazriskError::Argument(format!("grid point count {n:?}")))?;
    if !(lo < hi) || n < 2 {
        return Err(HazriskError::Argument(format!("grid needs lo < hi and at least 2 points, got {spec:?}")));
    }
    Ok(linspace(lo, hi, n))
}

fn grid_or_range(spec: Option<&str>, data: &SurvivalDataset) -> Result<Vec<f64>> {
    match spec {
        Some(s) => parse_grid(s),
        None => {
            let (lo, hi) = data.covariate_range();
            Ok(linspace(lo, hi, 51))
        }
    }
}

/// `const:<h>` or `piecewise:<base>;<lo>:<hi>:<mult>[;...]`.
fn parse_h_rule(spec: &str) -> Result<VariableBandwidthRule> {
    let bad =
        || HazriskError::Argument(format!("h-rule must be const:<h> or piecewise:<base>;<lo>:<hi>:<mult>..., got {spec:?}"));
    let rule = if let Some(h) = spec.strip_prefix("const:") {
        VariableBandwidthRule::constant(number(h, "h-rule")?)
    } else if let Some(rest) = spec.strip_prefix("piecewise:") {
        let mut items = rest.split(';');
        let base = number(items.next().ok_or_else(bad)?, "h-rule base")?;
        let mut pieces = Vec::new();
        for item in items.filter(|i| !i.trim().is_empty()) {
            let f: Vec<&str> = item.split(':').collect();
            let [lo, hi, m] = f[..] else { return Err(bad()) };
            pieces.push(BandwidthPiece {
                lo: number(lo, "h-rule")?,
                hi: number(hi, "h-rule")?,
                multiplier: number(m, "h-rule")?,
            });
        }
        VariableBandwidthRule::new(base, pieces)
    } else {
        return Err(bad());
    };
    rule.map_err(|e| HazriskError::Argument(e.to_string()))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let mut f = create(path)?;
    f.write_all(text.as_bytes()).map_err(|source| HazriskError::Io { path: path.to_path_buf(), source })
}

fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    write_csv(create(path)?, records)
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|source| HazriskError::Io { path: "<stdout>".into(), source })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

#[derive(Debug, Serialize)]
struct CurveRecord {
    x: f64,
    h: f64,
    slope: Option<f64>,
    estimate: Option<f64>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct FitCurveOutput<'a> {
    command: &'static str,
    n: usize,
    degree: usize,
    kernel: &'static str,
    reference: f64,
    records: &'a [CurveRecord],
}

fn fit_curve(a: FitCurveArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let rule = parse_h_rule(&a.h_rule)?;
    if a.degree == 0 {
        return Err(HazriskError::Argument("degree must be at least 1".into()));
    }
    let data = read_dataset_path(&a.input)?;
    let grid = grid_or_range(a.grid.as_deref(), &data)?;
    let reference = a.reference.unwrap_or(grid[grid.len() / 2]);
    let kernel: Kernel = a.kernel.into();
    let curve = fit_derivative_curve(&data, &grid, a.degree, &rule, kernel);
    let integrated = integrate_derivative(&curve, reference)
        .map_err(|source| HazriskError::EstimationAt { context: format!("reference {reference}"), source })?;
    let records: Vec<CurveRecord> = grid
        .iter()
        .zip(&curve.fits)
        .zip(&integrated.values)
        .map(|((&x, fit), v)| CurveRecord {
            x,
            h: rule.bandwidth_at(x),
            slope: fit.as_ref().ok().and_then(|f| f.derivative(1)),
            estimate: *v,
            error: fit.as_ref().err().map(|e| e.to_string()),
        })
        .collect();
    for r in &records {
        if let Some(e) = &r.error {
            let _ = writeln!(err, "warning: x={}: {e}", r.x);
        }
    }
    if records.iter().all(|r| r.estimate.is_none()) {
        return Err(HazriskError::EstimationAt {
            context: "fit-curve".into(),
            source: hazrisk_core::Error::EmptyWindow { x: reference },
        });
    }
    if let Some(path) = &a.output.csv {
        write_records(path, &records)?;
    }
    match &a.output.out {
        Some(path) => write_json(
            path,
            &FitCurveOutput {
                command: "fit-curve",
                n: data.len(),
                degree: a.degree,
                kernel: kernel.name(),
                reference,
                records: &records,
            },
        ),
        None => {
            let mut text = format!("{:>10} {:>8} {:>10} {:>10}\n", "x", "h", "slope", "psi-diff");
            for r in &records {
                text += &format!("{:>10.4} {:>8.4} {:>10} {:>10}\n", r.x, r.h, fmt_opt(r.slope), fmt_opt(r.estimate));
            }
            emit(out, &text)
        }
    }
}

#[derive(Debug, Serialize)]
struct RelRiskRecord {
    x1: f64,
    x2: f64,
    alpha: Option<f64>,
    bias: Option<f64>,
    se: Option<f64>,
    lo: Option<f64>,
    hi: Option<f64>,
    converged: bool,
    error: Option<String>,
}

impl RelRiskRecord {
    fn new(x1: f64, x2: f64, est: std::result::Result<&RelativeRiskEstimate, String>) -> Self {
        match est {
            Ok(e) => RelRiskRecord {
                x1,
                x2,
                alpha: Some(e.alpha_hat),
                bias: Some(e.bias_hat),
                se: Some(e.se_hat),
                lo: Some(e.ci.0),
                hi: Some(e.ci.1),
                converged: e.converged,
                error: None,
            },
            Err(error) => RelRiskRecord {
                x1,
                x2,
                alpha: None,
                bias: None,
                se: None,
                lo: None,
                hi: None,
                converged: false,
                error: Some(error),
            },
        }
    }
}

#[derive(Debug, Serialize)]
struct EstimatorSettings {
    p: usize,
    p1: usize,
    h: f64,
    h1: f64,
    kernel: &'static str,
    ci_level: f64,
}

#[derive(Debug, Serialize)]
struct RecordsOutput<'a, T> {
    command: &'static str,
    n: usize,
    settings: EstimatorSettings,
    records: &'a [T],
}

fn rel_risk(a: RelRiskArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let config = a.estimator.relative_risk()?;
    let data = read_dataset_path(&a.input)?;
    let records = match (a.x1, a.x2, a.anchor) {
        (Some(x1), Some(x2), _) => {
            let est = estimate_relative_risk(&data, x1, x2, &config)
                .map_err(|source| HazriskError::EstimationAt { context: format!("relative risk at x1={x1}, x2={x2}"), source })?;
            vec![RelRiskRecord::new(x1, x2, Ok(&est))]
        }
        (_, _, Some(anchor)) => {
            let grid = grid_or_range(a.grid.as_deref(), &data)?;
            let curve = estimate_curve(&data, anchor, &grid, &config)
                .map_err(|source| HazriskError::EstimationAt { context: format!("anchor {anchor}"), source })?;
            let records: Vec<RelRiskRecord> = curve
                .grid
                .iter()
                .zip(&curve.estimates)
                .map(|(&x, e)| RelRiskRecord::new(anchor, x, e.as_ref().map_err(|e| e.to_string())))
                .collect();
            for r in &records {
                if let Some(e) = &r.error {
                    let _ = writeln!(err, "warning: anchor {anchor}, x2={}: {e}", r.x2);
                }
            }
            if records.iter().all(|r| r.alpha.is_none()) {
                return Err(HazriskError::EstimationAt {
                    context: format!("anchor {anchor}: no grid point"),
                    source: hazrisk_core::Error::EmptyWindow { x: anchor },
                });
            }
            records
        }
        _ => return Err(HazriskError::Argument("give --x1 and --x2, or --anchor".into())),
    };
    if let Some(path) = &a.output.csv {
        write_records(path, &records)?;
    }
    let settings = EstimatorSettings {
        p: config.p,
        p1: config.p1,
        h: config.h,
        h1: config.h1,
        kernel: config.kernel.name(),
        ci_level: config.ci_level,
    };
    match &a.output.out {
        Some(path) => write_json(path, &RecordsOutput { command: "rel-risk", n: data.len(), settings, records: &records }),
        None => {
            let mut text =
                format!("{:>8} {:>8} {:>10} {:>10} {:>10} {:>10} {:>10}\n", "x1", "x2", "alpha", "bias", "se", "lo", "hi");
            for r in &records {
                text += &format!(
                    "{:>8.4} {:>8.4} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
                    r.x1,
                    r.x2,
                    fmt_opt(r.alpha),
                    fmt_opt(r.bias),
                    fmt_opt(r.se),
                    fmt_opt(r.lo),
                    fmt_opt(r.hi)
                );
            }
            emit(out, &text)
        }
    }
}

#[derive(Debug, Serialize)]
struct GroupRecord {
    x: f64,
    rho: Option<f64>,
    bias: Option<f64>,
    bias_smoothed: Option<f64>,
    se: Option<f64>,
    lo: Option<f64>,
    hi: Option<f64>,
    n1_eff: Option<usize>,
    n2_eff: Option<usize>,
    window_censoring: Option<f64>,
    converged: bool,
    error: Option<String>,
}

impl GroupRecord {
    fn new(x: f64, est: std::result::Result<&GroupDiffEstimate, String>) -> Self {
        match est {
            Ok(e) => GroupRecord {
                x,
                rho: Some(e.rho_hat),
                bias: Some(e.bias_hat),
                bias_smoothed: Some(e.bias_smoothed),
                se: Some(e.se_hat),
                lo: Some(e.ci.0),
                hi: Some(e.ci.1),
                n1_eff: Some(e.counts.0),
                n2_eff: Some(e.counts.1),
                window_censoring: Some(e.window_censoring),
                converged: e.converged,
                error: None,
            },
            Err(error) => GroupRecord {
                x,
                rho: None,
                bias: None,
                bias_smoothed: None,
                se: None,
                lo: None,
                hi: None,
                n1_eff: None,
                n2_eff: None,
                window_censoring: None,
                converged: false,
                error: Some(error),
            },
        }
    }
}

/// The two labels to compare; both must be present in the data.
fn group_labels(data: &SurvivalDataset, z1: Option<i64>, z2: Option<i64>) -> Result<(i64, i64)> {
    let labels = data.groups();
    if labels.is_empty() {
        return Err(HazriskError::Schema("group-diff needs a `group` column".into()));
    }
    let (z1, z2) = match (z1, z2) {
        (Some(a), Some(b)) => (a, b),
        _ if labels.len() == 2 => (z1.unwrap_or(labels[0]), z2.unwrap_or(labels[1])),
        _ => {
            return Err(HazriskError::Schema(format!(
                "found {} group labels {labels:?}; name the two to compare with --z1 and --z2",
                labels.len()
            )))
        }
    };
    if z1 == z2 {
        return Err(HazriskError::Argument(format!("--z1 and --z2 are both {z1}")));
    }
    for z in [z1, z2] {
        if !labels.contains(&z) {
            return Err(HazriskError::Schema(format!("group {z} does not occur in the data (labels {labels:?})")));
        }
    }
    Ok((z1, z2))
}

fn group_diff(a: GroupDiffArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let config = a.estimator.group_diff(!a.no_smooth_bias)?;
    let data = read_dataset_path(&a.input)?;
    let (z1, z2) = group_labels(&data, a.z1, a.z2)?;
    let records: Vec<GroupRecord> = match a.x {
        Some(x) => {
            let est = estimate_group_difference(&data, x, z1, z2, &config)
                .map_err(|source| HazriskError::EstimationAt { context: format!("group difference at x={x}"), source })?;
            vec![GroupRecord::new(x, Ok(&est))]
        }
        None => {
            let grid = grid_or_range(a.grid.as_deref(), &data)?;
            let curve = estimate_group_difference_curve(&data, &grid, z1, z2, &config)?;
            let records: Vec<GroupRecord> =
                grid.iter().zip(&curve).map(|(&x, e)| GroupRecord::new(x, e.as_ref().map_err(|e| e.to_string()))).collect();
            for r in &records {
                if let Some(e) = &r.error {
                    let _ = writeln!(err, "warning: x={}: {e}", r.x);
                }
            }
            if records.iter().all(|r| r.rho.is_none()) {
                return Err(HazriskError::EstimationAt {
                    context: "group difference: no grid point".into(),
                    source: hazrisk_core::Error::EmptyWindow { x: grid[0] },
                });
            }
            records
        }
    };
    for r in &records {
        if let Some(c) = r.window_censoring.filter(|&c| c > CENSORING_WARNING) {
            let _ =
                writeln!(err, "warning: x={}: {:.0}% of the window is censored; the estimate may be unreliable", r.x, 100.0 * c);
        }
    }
    if let Some(path) = &a.output.csv {
        write_records(path, &records)?;
    }
    let settings = EstimatorSettings {
        p: config.p,
        p1: config.p1,
        h: config.h,
        h1: config.h1,
        kernel: config.kernel.name(),
        ci_level: config.ci_level,
    };
    match &a.output.out {
        Some(path) => write_json(path, &RecordsOutput { command: "group-diff", n: data.len(), settings, records: &records }),
        None => {
            let mut text = format!(
                "groups {z1} -> {z2}\n{:>8} {:>10} {:>10} {:>10} {:>10} {:>10} {:>6} {:>6}\n",
                "x", "rho", "bias", "se", "lo", "hi", "n1", "n2"
            );
            for r in &records {
                let count = |c: Option<usize>| c.map_or_else(|| "-".into(), |c| c.to_string());
                text += &format!(
                    "{:>8.4} {:>10} {:>10} {:>10} {:>10} {:>10} {:>6} {:>6}\n",
                    r.x,
                    fmt_opt(r.rho),
                    fmt_opt(r.bias_smoothed),
                    fmt_opt(r.se),
                    fmt_opt(r.lo),
                    fmt_opt(r.hi),
                    count(r.n1_eff),
                    count(r.n2_eff)
                );
            }
            emit(out, &text)
        }
    }
}

/// `--threads`, then `HAZRISK_THREADS`, then the rayon default.
fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    let count = match flag {
        Some(t) => Some(t),
        None => match std::env::var("HAZRISK_THREADS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| HazriskError::Argument(format!("HAZRISK_THREADS={v:?} is not a count")))?),
            Err(_) => None,
        },
    };
    if count == Some(0) {
        return Err(HazriskError::Argument("thread count must be positive".into()));
    }
    Ok(count)
}

fn simulate(a: SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    positive("h0", a.h0)?;
    let threads = thread_count(a.threads)?;
    let seed = match a.seed {
        Some(s) => s,
        None => {
            let s = rand::random::<u64>();
            let _ = writeln!(err, "seed: {s}");
            s
        }
    };
    let configure = |id: DesignId, h0: f64, censoring: f64| {
        let mut c = SimulationConfig::new(DesignSpec::new(id), h0, censoring, seed);
        c.n = a.n;
        c.reps = a.reps;
        c.kernel = a.kernel.into();
        c.coverage_point = a.coverage_point;
        c
    };
    if a.table1 {
        let mut reports = Vec::new();
        for id in DesignId::ALL {
            for h0 in [0.15, 0.25, 0.35] {
                for censoring in [0.0, 0.3] {
                    let config = configure(id, h0, censoring);
                    reports.push(with_threads(threads, || run_study(&config, &TwoStepEstimators))??);
                }
            }
        }
        return match &a.out {
            Some(path) => write_json(path, &reports),
            None => emit(out, &render_table1(&reports)),
        };
    }
    let id =
        a.design.and_then(DesignId::from_number).ok_or_else(|| HazriskError::Argument("--design must be 1, 2 or 3".into()))?;
    let config = configure(id, a.h0, a.censoring);
    let report = with_threads(threads, || run_study(&config, &TwoStepEstimators))??;
    if let Some(path) = &a.per_rep {
        write_records(path, &report.replications)?;
    }
    if let Some(path) = &a.curve_csv {
        #[derive(Serialize)]
        struct Row {
            x: f64,
            truth: f64,
            mean_fgk: f64,
            mean_new: f64,
            mse_fgk: f64,
            mse_new: f64,
        }
        let rows: Vec<Row> = report
            .mean_curve
            .iter()
            .zip(&report.mse_curve)
            .map(|(m, e)| Row { x: m.x, truth: m.truth, mean_fgk: m.fgk, mean_new: m.new, mse_fgk: e.fgk, mse_new: e.new })
            .collect();
        write_records(path, &rows)?;
    }
    if report.rep_failures > 0 {
        let _ = writeln!(err, "warning: {} of {} replications dropped for failed grid points", report.rep_failures, report.reps);
    }
    match &a.out {
        Some(path) => write_json(path, &report),
        None => emit(out, &render_report(&report)),
    }
}

fn render_report(r: &SimulationReport) -> String {
    let mut text = format!(
        "design {}  n={}  reps={}  seed={}  h0={}  censoring target {:.2} (observed {:.3})\n",
        r.design.map_or_else(|| "custom".into(), |d| d.to_string()),
        r.n,
        r.reps,
        r.seed,
        r.h0,
        r.censoring_target,
        r.empirical_censoring
    );
    text += &format!("MISE  FGK {:.4} (se {:.4})  new {:.4} (se {:.4})\n", r.mise_fgk, r.mise_se_fgk, r.mise_new, r.mise_se_new);
    text += &format!("dropped replications: {}\n", r.rep_failures);
    if let Some(c) = r.coverage {
        text += &format!("interval coverage: {c:.3}\n");
    }
    text += &format!("{:>6} {:>10} {:>10}\n", "x", "MSE FGK", "MSE new");
    for p in &r.mse_by_point {
        text += &format!("{:>6.2} {:>10.4} {:>10.4}\n", p.x, p.fgk, p.new);
    }
    text
}

/// MISE by design and bandwidth (rows) and censoring level (columns), one
/// column per estimator.
fn render_table1(reports: &[SimulationReport]) -> String {
    let mut text = format!("{:<8} {:>5}   {:^19}   {:^19}\n", "", "", "0% censoring", "30% censoring");
    text += &format!("{:<8} {:>5}   {:>9} {:>9}   {:>9} {:>9}\n", "design", "h0", "FGK", "new", "FGK", "new");
    for pair in reports.chunks(2) {
        let r = &pair[0];
        let design = r.design.map_or_else(|| "custom".into(), |d| d.to_string());
        text += &format!("{:<8} {:>5.2}", design, r.h0);
        for cell in pair {
            text += &format!("   {:>9.3} {:>9.3}", cell.mise_fgk, cell.mise_new);
        }
        text.push('\n');
    }
    text
}

#[derive(Debug, Serialize)]
struct BandwidthOutput {
    command: &'static str,
    target: &'static str,
    p: usize,
    kernel: &'static str,
    c0p: f64,
    n: usize,
    variance_integral: f64,
    curvature_integral: f64,
    h_opt: f64,
}

fn bandwidth(a: BandwidthArgs, out: &mut dyn Write) -> Result<()> {
    let kernel: Kernel = a.kernel.into();
    let weight_support = a
        .weight
        .as_deref()
        .map(|w| {
            let f: Vec<&str> = w.split(':').collect();
            match f[..] {
                [lo, hi] => Ok((number(lo, "weight")?, number(hi, "weight")?)),
                _ => Err(HazriskError::Argument(format!("weight must be <lo>:<hi>, got {w:?}"))),
            }
        })
        .transpose()?;
    let data = a.input.as_deref().map(read_dataset_path).transpose()?;
    let n = match (a.n, &data) {
        (Some(n), _) => n,
        (None, Some(d)) => d.len(),
        (None, None) => return Err(HazriskError::Argument("--n is required without --input".into())),
    };
    let plan = match a.c0p {
        Some(c) => BandwidthPlan::with_constant(a.p, kernel, c, WeightFunction::Uniform { lo: -1.0, hi: 1.0 }),
        None => BandwidthPlan::new(a.p, kernel, WeightFunction::Uniform { lo: -1.0, hi: 1.0 }),
    }
    .map_err(|e| HazriskError::Argument(format!("kernel constant: {e}")))?;
    let curvature = match (a.curvature_integral, &data) {
        (Some(c), _) => c,
        (None, Some(d)) => {
            let pilot_h = a.pilot_h.ok_or_else(|| HazriskError::Argument("--pilot-h is required with --input".into()))?;
            positive("pilot-h", pilot_h)?;
            let (lo, hi) = weight_support.unwrap_or_else(|| d.covariate_range());
            pilot_curvature(d, a.target, a.p, pilot_h, kernel, (lo, hi), (a.z1, a.z2))?
        }
        (None, None) => return Err(HazriskError::Argument("give --curvature-integral or --input".into())),
    };
    let h_opt = match a.target {
        Target::RelRisk => h_opt_relative_risk(&plan, a.variance_integral, curvature, n),
        Target::GroupDiff => h_opt_group_diff(&plan, a.variance_integral, curvature, n),
    }?;
    let result = BandwidthOutput {
        command: "bandwidth",
        target: match a.target {
            Target::RelRisk => "rel-risk",
            Target::GroupDiff => "group-diff",
        },
        p: a.p,
        kernel: kernel.name(),
        c0p: plan.c0p,
        n,
        variance_integral: a.variance_integral,
        curvature_integral: curvature,
        h_opt,
    };
    match &a.out {
        Some(path) => write_json(path, &result),
        None => emit(
            out,
            &format!(
                "target {}  p={}  kernel {}  C0p={:.6}  n={}\nvariance integral {:.6}  curvature integral {:.6}\nh_opt {:.6}\n",
                result.target,
                result.p,
                result.kernel,
                result.c0p,
                result.n,
                result.variance_integral,
                result.curvature_integral,
                result.h_opt
            ),
        ),
    }
}

/// Curvature integral from pilot fits of degree `p + 1` on 101 nodes.
fn pilot_curvature(
    data: &SurvivalDataset,
    target: Target,
    p: usize,
    pilot_h: f64,
    kernel: Kernel,
    (lo, hi): (f64, f64),
    (z1, z2): (i64, i64),
) -> Result<f64> {
    if !(lo < hi) {
        return Err(HazriskError::Argument(format!("weight support [{lo}, {hi}] is empty")));
    }
    let weight = WeightFunction::Uniform { lo, hi };
    let rule = VariableBandwidthRule::constant(pilot_h)?;
    let grid = linspace(lo, hi, 101);
    let derivative = |d: &SurvivalDataset| -> Vec<Option<f64>> {
        fit_derivative_curve(d, &grid, p + 1, &rule, kernel)
            .fits
            .iter()
            .map(|f| f.as_ref().ok().and_then(|f| f.derivative(p + 1)))
            .collect()
    };
    let pairs: Vec<(f64, f64)> = match target {
        Target::RelRisk => grid.iter().zip(derivative(data)).filter_map(|(&x, d)| d.map(|d| (x, d))).collect(),
        Target::GroupDiff => {
            let labels = group_labels(data, Some(z1), Some(z2))?;
            let first = derivative(&data.group_subset(labels.0)?);
            let second = derivative(&data.group_subset(labels.1)?);
            grid.iter().zip(first.iter().zip(&second)).filter_map(|(&x, (a, b))| Some((x, (*b)? - (*a)?))).collect()
        }
    };
    if pairs.len() < 2 {
        return Err(HazriskError::EstimationAt {
            context: "pilot curvature".into(),
            source: hazrisk_core::Error::EmptyWindow { x: lo },
        });
    }
    let (xs, ds): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(match target {
        Target::RelRisk => curvature_double_integral(&xs, &ds, &weight),
        Target::GroupDiff => curvature_single_integral(&xs, &ds, &weight),
    })
}
