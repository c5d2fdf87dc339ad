//! Command-line front end.
//!
//! Exit codes: 0 success, 2 bad config or input, 3 empty parameter domain,
//! 4 failed certificate, 1 anything else (I/O).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::charroots::{count_rhp_roots, rightmost_root, CountError, RhpRootCount};
use crate::config::{parse_config_draft, parse_history_spec, Config, ConfigDraft};
use crate::dde_sim::{classify_asymptotics_default, integrate, AsymptoticVerdict};
use crate::error::Error;
use crate::hayes::{
    classify, crossing_bound, g_of_r, hopf_boundary_r, legacy_boundary, stability_switches, StabilityVerdict, Status,
};
use crate::lyapunov::{critical_delay, verify_critical_stability};
use crate::model::{b_sign_region, equilibria, reduced_coeffs, EquilibriumTag, ParamName, Parameters, ReducedCoeffs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_EMPTY_DOMAIN: i32 = 3;
pub const EXIT_CERTIFICATE: i32 = 4;

pub const SWEEP_HEADER: [&str; 11] = [
    "param",
    "x2",
    "A",
    "B",
    "p",
    "q",
    "verdict",
    "case",
    "margin",
    "omega0",
    "rhp_count",
];

#[derive(Debug, Parser)]
#[command(
    name = "cml-stability",
    version,
    about = "Stability analysis of a delayed cell-population model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Equilibria, coefficients and verdicts at one parameter point.
    Analyze {
        #[command(flatten)]
        params: ParamArgs,
        /// Count right-half-plane roots and locate the rightmost root.
        #[arg(long)]
        verify: bool,
    },
    /// Grid of verdicts for x2 over one or two parameters, as CSV.
    Sweep(SweepArgs),
    /// Integrate the delay equation and certify the run.
    Simulate(SimulateArgs),
    /// Compare the correct delay bound with the legacy closed form along r.
    LegacyDiff(LegacyArgs),
    /// Check the Lyapunov functional for x1 on the critical set k beta0 = delta + beta0.
    Lyapunov(LyapunovArgs),
}

#[derive(Debug, Args)]
pub struct ParamArgs {
    /// key=value file with beta0, n, delta, gamma, r and optionally marginal_band.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub beta0: Option<f64>,
    #[arg(long)]
    pub n: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub marginal_band: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub param: ParamName,
    #[arg(long, allow_negative_numbers = true)]
    pub from: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub to: f64,
    #[arg(long)]
    pub steps: usize,
    /// Second swept parameter for a 2-D grid.
    #[arg(long, requires_all = ["from2", "to2", "steps2"])]
    pub param2: Option<ParamName>,
    #[arg(long, allow_negative_numbers = true)]
    pub from2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub to2: Option<f64>,
    #[arg(long)]
    pub steps2: Option<usize>,
    #[arg(long)]
    pub verify: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// const:LEVEL, perturb:{x1|x2}:AMP or file:PATH (CSV with header s,x).
    #[arg(long)]
    pub history: String,
    /// Defaults to 60 r.
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    /// Must divide r; defaults to r/100.
    #[arg(long)]
    pub h: Option<f64>,
    /// Trajectory CSV; summary goes to stderr when omitted and the CSV to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Resample the trajectory at this spacing instead of writing nodes.
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LegacyArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Defaults to a small fraction of r_max.
    #[arg(long, allow_negative_numbers = true)]
    pub from: Option<f64>,
    /// Defaults to just below r_max.
    #[arg(long, allow_negative_numbers = true)]
    pub to: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LyapunovArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Replace r by the delay that puts the parameters on the critical set.
    #[arg(long)]
    pub solve_r: bool,
    #[arg(long, default_value_t = 50)]
    pub draws: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn config(e: impl std::fmt::Display) -> Self {
        Self::new(EXIT_CONFIG, e.to_string())
    }

    fn io(e: impl std::fmt::Display) -> Self {
        Self::new(EXIT_IO, e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return EXIT_CONFIG;
            }
            let _ = write!(stdout, "{e}");
            return EXIT_OK;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Analyze { params, verify } => {
            let config = load_config(&params)?;
            let report = cmd_analyze(&config, verify).map_err(CliError::config)?;
            stdout.write_all(report.as_bytes()).map_err(CliError::io)
        }
        Command::Sweep(args) => {
            let config = load_config(&args.params)?;
            let spec = sweep_spec(&args)?;
            let text = cmd_sweep(&config, &spec)?;
            emit(&args.out, stdout, &text)
        }
        Command::Simulate(args) => cmd_simulate(&args, stdout, stderr),
        Command::LegacyDiff(args) => {
            let config = load_config(&args.params)?;
            let text = cmd_legacy_diff(&config, args.from, args.to, args.steps)?;
            emit(&args.out, stdout, &text)
        }
        Command::Lyapunov(args) => cmd_lyapunov(&args, stdout),
    }
}

fn emit(out: &Option<PathBuf>, stdout: &mut dyn Write, text: &str) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(format!("writing {}: {e}", path.display()))),
        None => stdout.write_all(text.as_bytes()).map_err(CliError::io),
    }
}

/// Config file (if any) overlaid with per-parameter flags.
pub fn load_config(args: &ParamArgs) -> CliResult<Config> {
    let mut draft = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("reading {}: {e}", path.display())))?;
            parse_config_draft(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        }
        None => ConfigDraft::default(),
    };
    let flags = [
        (ParamName::Beta0, args.beta0),
        (ParamName::N, args.n),
        (ParamName::Delta, args.delta),
        (ParamName::Gamma, args.gamma),
        (ParamName::R, args.r),
    ];
    for (name, value) in flags {
        if let Some(v) = value {
            draft.set(name, v);
        }
    }
    if args.marginal_band.is_some() {
        draft.marginal_band = args.marginal_band;
    }
    draft.finish().map_err(CliError::config)
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Verdict for `x2` at one parameter point; the unit shared by `analyze` and `sweep`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub param: f64,
    pub param2: Option<f64>,
    pub x2: Option<f64>,
    pub a: f64,
    pub coeffs: Option<ReducedCoeffs>,
    /// `None` when `x2` does not exist.
    pub verdict: Option<StabilityVerdict>,
    pub rhp_count: Option<Result<RhpRootCount, CountError>>,
    pub hopf_r: Option<f64>,
    pub g_value: Option<f64>,
}

impl SweepRecord {
    pub fn status_label(&self) -> String {
        self.verdict
            .map_or_else(|| "NoX2".to_string(), |v| v.status.to_string())
    }

    fn rhp_label(&self) -> String {
        match &self.rhp_count {
            None => String::new(),
            Some(Ok(c)) => c.count.to_string(),
            Some(Err(CountError::MarginalAtAxis { .. })) => "on_axis".into(),
            Some(Err(CountError::Unresolved { .. })) => "unresolved".into(),
        }
    }

    /// Stable with roots in the right half plane, or unstable without; marginal
    /// verdicts and failed counts never disagree.
    pub fn oracle_disagrees(&self) -> bool {
        match (&self.verdict, &self.rhp_count) {
            (Some(v), Some(Ok(c))) => match v.status {
                Status::Stable => c.count != 0,
                Status::Unstable => c.count == 0,
                Status::Marginal => false,
            },
            _ => false,
        }
    }

    pub fn csv_fields(&self) -> Vec<String> {
        let mut f = vec![num(self.param)];
        if let Some(p2) = self.param2 {
            f.push(num(p2));
        }
        f.push(opt(self.x2));
        f.push(num(self.a));
        f.push(opt(self.coeffs.map(|c| c.b)));
        f.push(opt(self.coeffs.map(|c| c.p)));
        f.push(opt(self.coeffs.map(|c| c.q)));
        f.push(self.status_label());
        f.push(self.verdict.map(|v| v.case_tag.to_string()).unwrap_or_default());
        f.push(opt(self.verdict.map(|v| v.margin)));
        f.push(opt(self.verdict.and_then(|v| v.omega0)));
        f.push(self.rhp_label());
        f
    }
}

pub fn analyze_point(
    params: &Parameters,
    param: f64,
    param2: Option<f64>,
    band: f64,
    verify: bool,
) -> crate::Result<SweepRecord> {
    let eq = equilibria(params);
    let a = params.a_ratio();
    let mut record = SweepRecord {
        param,
        param2,
        x2: eq.x2,
        a,
        coeffs: None,
        verdict: None,
        rhp_count: None,
        hopf_r: None,
        g_value: None,
    };
    if eq.x2.is_none() {
        return Ok(record);
    }
    let c = reduced_coeffs(params, EquilibriumTag::X2)?;
    let verdict = classify(c.p, c.q, params.r, band)?;
    record.coeffs = Some(c);
    record.verdict = Some(verdict);
    record.hopf_r = hopf_boundary_r(c.p, c.q).map(|h| h.r_star);
    record.g_value = g_of_r(params, params.r).ok();
    if verify {
        record.rhp_count = Some(count_rhp_roots(c.p, c.q, params.r));
    }
    Ok(record)
}

fn csv_line(fields: &[String]) -> String {
    let mut line = fields.join(",");
    line.push('\n');
    line
}

fn sweep_header(param2: bool) -> Vec<String> {
    let mut h: Vec<String> = SWEEP_HEADER.iter().map(|s| s.to_string()).collect();
    if param2 {
        h.insert(1, "param2".into());
    }
    h
}

/// Human-readable report for one parameter point, ending with the sweep CSV row
/// for the same point.
pub fn cmd_analyze(config: &Config, verify: bool) -> crate::Result<String> {
    let p = &config.params;
    let band = config.marginal_band;
    let mut s = String::new();
    let eq = equilibria(p);
    let region = b_sign_region(p);
    let _ = writeln!(
        s,
        "parameters: beta0={} n={} delta={} gamma={} r={}",
        p.beta0, p.n, p.delta, p.gamma, p.r
    );
    let _ = writeln!(s, "k = {}", num(p.k()));
    let _ = writeln!(s, "A = (beta0/delta)(k-1) = {}", num(p.a_ratio()));
    let _ = writeln!(s, "x1 = 0");
    let _ = writeln!(s, "x2 = {}", eq.x2.map_or("absent".to_string(), num));
    let _ = writeln!(s, "r_max = {}", opt(region.r_max));
    let _ = writeln!(s, "r_n = {}", opt(region.r_n));
    let _ = writeln!(s, "B-sign region = {:?}", region.region);

    // x1: eigenvalue 0 crosses when A = 1
    let c1 = reduced_coeffs(p, EquilibriumTag::X1)?;
    let _ = writeln!(s, "[x1] B={} p={} q={}", num(c1.b), num(c1.p), num(c1.q));
    let a_gap = 1.0 - p.a_ratio();
    let x1_status = if a_gap.abs() <= band {
        Status::Marginal
    } else if a_gap > 0.0 {
        Status::Stable
    } else {
        Status::Unstable
    };
    let _ = writeln!(s, "[x1] verdict by A < 1: {x1_status}");
    if p.r > 0.0 {
        let v1 = classify(c1.p, c1.q, p.r, band)?;
        let _ = writeln!(
            s,
            "[x1] characteristic verdict: {} ({}, margin {})",
            v1.status,
            v1.case_tag,
            num(v1.margin)
        );
    }
    if x1_status == Status::Marginal {
        let _ = writeln!(
            s,
            "[x1] note: lambda = 0 is a root at A = 1; run `cml-stability lyapunov --solve-r` to check the Lyapunov functional"
        );
    }
    if verify && p.r > 0.0 {
        write_roots(&mut s, "x1", &c1, p.r);
    }

    match eq.x2 {
        None => {
            let _ = writeln!(s, "[x2] absent");
        }
        Some(_) if p.r <= 0.0 => {
            let _ = writeln!(s, "[x2] r = 0: no delay to classify");
        }
        Some(_) => {
            let rec = analyze_point(p, p.r, None, band, verify)?;
            let c = rec.coeffs.expect("x2 present");
            let v = rec.verdict.expect("x2 present");
            let _ = writeln!(s, "[x2] B={} p={} q={}", num(c.b), num(c.p), num(c.q));
            let _ = writeln!(
                s,
                "[x2] verdict: {} ({}, margin {}, omega0 {})",
                v.status,
                v.case_tag,
                num(v.margin),
                opt(v.omega0)
            );
            let _ = writeln!(s, "[x2] hopf r* = {}", opt(rec.hopf_r));
            let _ = writeln!(s, "[x2] g(r) = {}", opt(rec.g_value));
            if verify {
                write_roots(&mut s, "x2", &c, p.r);
            }
        }
    }
    if p.r > 0.0 {
        let rec = analyze_point(p, p.r, None, band, verify)?;
        let _ = writeln!(s, "sweep record (param = r):");
        s.push_str(&csv_line(&sweep_header(false)));
        s.push_str(&csv_line(&rec.csv_fields()));
    }
    Ok(s)
}

fn write_roots(s: &mut String, tag: &str, c: &ReducedCoeffs, r: f64) {
    match count_rhp_roots(c.p, c.q, r) {
        Ok(count) => {
            let _ = writeln!(s, "[{tag}] rhp_count = {}", count.count);
        }
        Err(e) => {
            let _ = writeln!(s, "[{tag}] rhp_count unavailable: {e}");
        }
    }
    match rightmost_root(c.p, c.q, r) {
        Some(root) => {
            let _ = writeln!(
                s,
                "[{tag}] rightmost root = {} + {}i (residual {:e}, consistent with count: {})",
                num(root.root.mu),
                num(root.root.omega),
                root.root.residual,
                root.validated
            );
        }
        None => {
            let _ = writeln!(s, "[{tag}] rightmost root not found");
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: ParamName,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl Axis {
    /// Evenly spaced values including both ends; one step gives `from`.
    pub fn values(&self) -> Vec<f64> {
        match self.steps {
            0 => Vec::new(),
            1 => vec![self.from],
            n => (0..n)
                .map(|i| {
                    if i == n - 1 {
                        self.to
                    } else {
                        self.from + (self.to - self.from) * i as f64 / (n - 1) as f64
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub first: Axis,
    pub second: Option<Axis>,
    pub verify: bool,
}

fn sweep_spec(args: &SweepArgs) -> CliResult<SweepSpec> {
    let second = match args.param2 {
        Some(name) => {
            if name == args.param {
                return Err(CliError::config("--param2 must differ from --param"));
            }
            Some(Axis {
                name,
                from: args.from2.expect("required by clap"),
                to: args.to2.expect("required by clap"),
                steps: args.steps2.expect("required by clap"),
            })
        }
        None => None,
    };
    Ok(SweepSpec {
        first: Axis {
            name: args.param,
            from: args.from,
            to: args.to,
            steps: args.steps,
        },
        second,
        verify: args.verify,
    })
}

/// Sweep CSV followed by a `#` summary block.
pub fn cmd_sweep(config: &Config, spec: &SweepSpec) -> CliResult<String> {
    let mut points: Vec<(f64, Option<f64>)> = Vec::new();
    let firsts = spec.first.values();
    match &spec.second {
        None => points.extend(firsts.iter().map(|&v| (v, None))),
        Some(axis) => {
            let seconds = axis.values();
            for &a in &firsts {
                points.extend(seconds.iter().map(|&b| (a, Some(b))));
            }
        }
    }
    let base = &config.params;
    let at = |a: f64, b: Option<f64>| -> Option<Parameters> {
        let mut p = base.with_param(spec.first.name, a).ok()?;
        if let (Some(axis), Some(b)) = (&spec.second, b) {
            p = p.with_param(axis.name, b).ok()?;
        }
        (p.r > 0.0).then_some(p)
    };
    let records: Vec<SweepRecord> = points
        .par_iter()
        .filter_map(|&(a, b)| {
            let p = at(a, b)?;
            analyze_point(&p, a, b, config.marginal_band, spec.verify).ok()
        })
        .collect();
    if records.is_empty() {
        return Err(CliError::new(
            EXIT_EMPTY_DOMAIN,
            format!(
                "no admissible grid point for {} in [{}, {}]",
                spec.first.name, spec.first.from, spec.first.to
            ),
        ));
    }

    let mut out = csv_line(&sweep_header(spec.second.is_some()));
    for rec in &records {
        out.push_str(&csv_line(&rec.csv_fields()));
    }

    let _ = writeln!(out, "# points: {}", records.len());
    for status in ["Stable", "Unstable", "Marginal", "NoX2"] {
        let n = records.iter().filter(|r| r.status_label() == status).count();
        let _ = writeln!(out, "# {status}: {n}");
    }
    if spec.second.is_none() {
        for w in records.windows(2) {
            let (a, b) = (w[0].status_label(), w[1].status_label());
            if a != b {
                let _ = writeln!(
                    out,
                    "# verdict change: {a} -> {b} between {}={} and {}",
                    spec.first.name,
                    num(w[0].param),
                    num(w[1].param)
                );
            }
        }
        if spec.first.name == ParamName::R {
            let lo = spec.first.from.min(spec.first.to).max(f64::MIN_POSITIVE);
            let hi = spec.first.from.max(spec.first.to);
            for r in stability_switches(base, lo, hi) {
                let _ = writeln!(out, "# switch (g = 0): r = {}", num(r));
            }
        }
    }
    if spec.verify {
        let bad: Vec<&SweepRecord> = records.iter().filter(|r| r.oracle_disagrees()).collect();
        let _ = writeln!(out, "# oracle disagreements: {}", bad.len());
        for rec in bad {
            let _ = writeln!(out, "# disagreement at {}", rec.csv_fields().join(","));
        }
    }
    Ok(out)
}

pub const LEGACY_HEADER: [&str; 13] = [
    "r",
    "kind",
    "B",
    "p",
    "q",
    "correct",
    "legacy",
    "gap",
    "verdict",
    "legacy_verdict",
    "rhp_count",
    "true_verdict",
    "flag",
];

/// One row of the legacy comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct LegacyRow {
    pub r: f64,
    pub hopf: bool,
    pub coeffs: ReducedCoeffs,
    pub correct: Option<f64>,
    pub legacy: Option<f64>,
    /// `|correct - legacy| / max(|correct|, |legacy|)`.
    pub gap: Option<f64>,
    pub verdict: Status,
    /// Stable iff `p >= |q|` or `r` below the legacy bound; only where `q < 0 < p`.
    pub legacy_verdict: Option<Status>,
    pub rhp_count: Option<usize>,
    /// Stable iff no roots in the right half plane.
    pub true_verdict: Option<Status>,
}

impl LegacyRow {
    /// True verdict known and contradicted by the closed-form classification.
    pub fn verdict_mismatch(&self) -> bool {
        matches!((self.true_verdict, self.verdict), (Some(t), v) if v != Status::Marginal && t != v)
    }

    /// Legacy bound says stable while the roots say unstable, or the reverse.
    pub fn legacy_wrong(&self) -> bool {
        matches!((self.true_verdict, self.legacy_verdict), (Some(t), Some(l)) if t != l)
    }

    fn fields(&self) -> Vec<String> {
        let label = |s: Option<Status>| s.map(|s| s.to_string()).unwrap_or_default();
        let mut flags = Vec::new();
        if self.legacy_wrong() {
            flags.push("legacy_wrong");
        }
        if self.verdict_mismatch() {
            flags.push("verdict_mismatch");
        }
        vec![
            num(self.r),
            if self.hopf { "hopf" } else { "grid" }.into(),
            num(self.coeffs.b),
            num(self.coeffs.p),
            num(self.coeffs.q),
            opt(self.correct),
            opt(self.legacy),
            opt(self.gap),
            self.verdict.to_string(),
            label(self.legacy_verdict),
            self.rhp_count.map(|c| c.to_string()).unwrap_or_default(),
            label(self.true_verdict),
            flags.join(";"),
        ]
    }
}

pub fn legacy_row(params: &Parameters, r: f64, band: f64, hopf: bool) -> crate::Result<Option<LegacyRow>> {
    let at = params.with_r(r)?;
    let Ok(c) = reduced_coeffs(&at, EquilibriumTag::X2) else {
        return Ok(None);
    };
    let v = classify(c.p, c.q, r, band)?;
    let correct = crossing_bound(c.p, c.q, r);
    let legacy = legacy_boundary(c.p, c.q);
    let gap = match (correct, legacy) {
        (Some(a), Some(b)) if a.abs().max(b.abs()) > 0.0 => Some((a - b).abs() / a.abs().max(b.abs())),
        _ => None,
    };
    let legacy_verdict = (c.q < 0.0 && c.p > 0.0).then(|| {
        if c.p >= -c.q || legacy.is_some_and(|bound| r < bound) {
            Status::Stable
        } else {
            Status::Unstable
        }
    });
    let count = count_rhp_roots(c.p, c.q, r).ok().map(|n| n.count);
    let true_verdict = count.map(|n| if n == 0 { Status::Stable } else { Status::Unstable });
    Ok(Some(LegacyRow {
        r,
        hopf,
        coeffs: c,
        correct,
        legacy,
        gap,
        verdict: v.status,
        legacy_verdict,
        rhp_count: count,
        true_verdict,
    }))
}

/// Grid rows over `[from, to]` plus rows at every stability switch in the range.
pub fn legacy_rows(config: &Config, from: Option<f64>, to: Option<f64>, steps: usize) -> CliResult<Vec<LegacyRow>> {
    let p = &config.params;
    let r_max = crate::model::r_max(p).filter(|&r| r > 0.0);
    let lo = from.or(r_max.map(|m| 1e-3 * m));
    let hi = to.or(r_max.map(|m| m * (1.0 - 1e-6)));
    let (Some(lo), Some(hi)) = (lo, hi) else {
        return Err(CliError::new(
            EXIT_EMPTY_DOMAIN,
            "x2 exists for no delay; give --from and --to",
        ));
    };
    if !(lo > 0.0 && hi >= lo && steps > 0) {
        return Err(CliError::new(
            EXIT_EMPTY_DOMAIN,
            format!("empty delay range [{lo}, {hi}]"),
        ));
    }
    let axis = Axis {
        name: ParamName::R,
        from: lo,
        to: hi,
        steps,
    };
    let mut tasks: Vec<(f64, bool)> = axis.values().into_iter().map(|r| (r, false)).collect();
    tasks.extend(stability_switches(p, lo, hi).into_iter().map(|r| (r, true)));
    tasks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rows: Vec<LegacyRow> = tasks
        .par_iter()
        .filter_map(|&(r, hopf)| legacy_row(p, r, config.marginal_band, hopf).ok().flatten())
        .collect();
    if rows.is_empty() {
        return Err(CliError::new(EXIT_EMPTY_DOMAIN, "x2 exists at no scanned delay"));
    }
    Ok(rows)
}

pub fn cmd_legacy_diff(config: &Config, from: Option<f64>, to: Option<f64>, steps: usize) -> CliResult<String> {
    let rows = legacy_rows(config, from, to, steps)?;
    let mut out = csv_line(&LEGACY_HEADER.map(String::from));
    for row in &rows {
        out.push_str(&csv_line(&row.fields()));
    }
    let grid_gap = rows
        .iter()
        .filter(|r| !r.hopf)
        .filter_map(|r| r.gap.map(|g| (g, r.r)))
        .max_by(|a, b| a.0.total_cmp(&b.0));
    match grid_gap {
        Some((g, r)) => {
            let _ = writeln!(out, "# max gap: {} at r = {}", num(g), num(r));
        }
        None => {
            let _ = writeln!(out, "# max gap: none (legacy bound undefined at every scanned r)");
        }
    }
    let hopf_gap = rows
        .iter()
        .filter(|r| r.hopf)
        .filter_map(|r| r.gap)
        .fold(None, |m: Option<f64>, g| Some(m.map_or(g, |m| m.max(g))));
    let _ = writeln!(out, "# max gap at switches: {}", opt(hopf_gap));
    let _ = writeln!(
        out,
        "# legacy verdict wrong: {}",
        rows.iter().filter(|r| r.legacy_wrong()).count()
    );
    let _ = writeln!(
        out,
        "# verdict mismatches: {}",
        rows.iter().filter(|r| r.verdict_mismatch()).count()
    );
    Ok(out)
}

fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let config = load_config(&args.params)?;
    let p = config.params;
    if p.r <= 0.0 {
        return Err(CliError::config("simulation needs r > 0"));
    }
    let spec = parse_history_spec(&args.history).map_err(CliError::config)?;
    let history = spec.load().map_err(CliError::config)?;
    let resolved = history.resolve(&p).map_err(CliError::config)?;
    if let Some((s, value)) = resolved.first_negative() {
        return Err(CliError::config(Error::NegativeHistory { s, value }));
    }
    let t_end = args.t_end.unwrap_or(60.0 * p.r);
    let h = args.h.unwrap_or(p.r / 100.0);
    let traj = integrate(&p, &history, t_end, h).map_err(CliError::config)?;

    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "steps: {} of h = {} ({} per delay)",
        traj.len() - 1,
        num(traj.step),
        traj.steps_per_delay
    );
    let mut failed = false;
    if let Some(f) = &traj.failure {
        failed = true;
        let _ = writeln!(summary, "run truncated: {f}");
    }
    match &traj.positivity {
        Some(c) => {
            failed |= !c.passed;
            let _ = writeln!(
                summary,
                "positivity: {} (min {} at t = {})",
                if c.passed { "pass" } else { "FAIL" },
                num(c.min_value),
                num(c.at_time)
            );
        }
        None => failed = true,
    }
    if let Some(c) = &traj.boundedness {
        let status = match (c.passed, c.hypothesis_holds) {
            (true, _) => "pass",
            (false, true) => {
                failed = true;
                "FAIL"
            }
            (false, false) => "not applicable (y^2/(1+y^n) exceeds 1 on this run)",
        };
        let _ = writeln!(
            summary,
            "boundedness (epsilon = {}, eta = {}): {status} (max scaled violation {} at t = {})",
            num(c.epsilon),
            num(c.eta),
            num(c.max_violation),
            num(c.at_time)
        );
    }
    let report = classify_asymptotics_default(&traj);
    let verdict = match report.verdict {
        AsymptoticVerdict::ConvergedTo { which, final_gap } => {
            format!("converged to {which} (final gap {})", num(final_gap))
        }
        AsymptoticVerdict::SustainedOscillation { amplitude, period } => {
            format!(
                "sustained oscillation (amplitude {}, period {})",
                num(amplitude),
                num(period)
            )
        }
        AsymptoticVerdict::GrowingOrUndecided => "growing or undecided".into(),
    };
    let _ = writeln!(
        summary,
        "asymptotics after t = {}: {verdict}",
        num(report.transient_cut)
    );

    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
            traj.write_csv(std::io::BufWriter::new(file), args.dt)
                .map_err(CliError::io)?;
            stdout.write_all(summary.as_bytes()).map_err(CliError::io)?;
        }
        None => {
            traj.write_csv(&mut *stdout, args.dt).map_err(CliError::io)?;
            stderr.write_all(summary.as_bytes()).map_err(CliError::io)?;
        }
    }
    if failed {
        return Err(CliError::new(EXIT_CERTIFICATE, "certificate failed"));
    }
    Ok(())
}

fn cmd_lyapunov(args: &LyapunovArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let mut config = load_config(&args.params)?;
    if args.solve_r {
        config.params.r = critical_delay(&config.params)
            .ok_or_else(|| CliError::new(EXIT_EMPTY_DOMAIN, "no positive delay reaches k beta0 = delta + beta0"))?;
    }
    let report = verify_critical_stability(&config.params, args.draws, args.seed).map_err(CliError::config)?;
    let mut s = String::new();
    let _ = writeln!(s, "r = {}", num(config.params.r));
    let _ = writeln!(
        s,
        "draws: {}, steps per delay: {}, t_end: {}",
        report.draws.len(),
        report.steps_per_delay,
        num(report.t_end)
    );
    let worst = report
        .draws
        .iter()
        .map(|d| d.max_drift)
        .fold(f64::NEG_INFINITY, f64::max);
    let _ = writeln!(s, "largest per-step increase of V: {}", num(worst));
    for d in report.failures() {
        let _ = writeln!(
            s,
            "FAIL: drift {} state bound {} history {:?}",
            num(d.max_drift),
            d.state_bound_holds,
            d.history.values()
        );
    }
    let _ = writeln!(s, "{}", if report.passed() { "pass" } else { "FAIL" });
    stdout.write_all(s.as_bytes()).map_err(CliError::io)?;
    if !report.passed() {
        return Err(CliError::new(EXIT_CERTIFICATE, "Lyapunov functional increased"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("cml-stability").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    const OSCILLATING: [&str; 10] = [
        "--beta0", "1.77", "--n", "3", "--delta", "0.05", "--gamma", "0.2", "--r", "1",
    ];

    #[test]
    fn analyze_reports_x1_verdict() {
        let (code, out, _) = run_args(&[
            "analyze", "--beta0", "1", "--n", "2", "--delta", "1", "--gamma", "0.1", "--r", "1",
        ]);
        assert_eq!(code, 0);
        assert!(out.contains("[x1] verdict by A < 1: Stable"));
        assert!(out.contains("[x2] absent"));
        let args = [&["analyze"][..], &OSCILLATING[..]].concat();
        let (code, out, _) = run_args(&args);
        assert_eq!(code, 0);
        assert!(out.contains("[x1] verdict by A < 1: Unstable"));
        assert!(out.contains("[x2] verdict: Stable"));
    }

    #[test]
    fn analyze_marginal_x1_points_to_lyapunov() {
        let r = (4.0f64 / 3.0).ln() / 0.1;
        let r = r.to_string();
        let (code, out, _) = run_args(&[
            "analyze", "--beta0", "1", "--n", "2", "--delta", "0.5", "--gamma", "0.1", "--r", &r,
        ]);
        assert_eq!(code, 0);
        assert!(out.contains("verdict by A < 1: Marginal"), "{out}");
        assert!(out.contains("lyapunov --solve-r"));
    }

    #[test]
    fn missing_parameters_are_config_errors() {
        let (code, _, err) = run_args(&["analyze", "--beta0", "1"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("missing keys"));
    }

    #[test]
    fn sweep_empty_domain() {
        let args = [
            &["sweep", "--param", "r", "--from", "-2", "--to", "-1", "--steps", "3"][..],
            &OSCILLATING[..],
        ]
        .concat();
        let (code, _, _) = run_args(&args);
        assert_eq!(code, EXIT_EMPTY_DOMAIN);
    }

    #[test]
    fn axis_values() {
        let axis = Axis {
            name: ParamName::R,
            from: 1.0,
            to: 2.0,
            steps: 3,
        };
        assert_eq!(axis.values(), vec![1.0, 1.5, 2.0]);
        assert_eq!(
            Axis {
                steps: 1,
                ..axis.clone()
            }
            .values(),
            vec![1.0]
        );
        assert!(Axis { steps: 0, ..axis }.values().is_empty());
    }
}
