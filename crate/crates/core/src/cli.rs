//! `fran` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 no feasible delivery
//! scheme, 3 a statistical or structural check failed.
//!
//! Parameters come from flags, from a `--experiment` file, or both (flags win).
//! An experiment file holds one `key = value` pair per line; `#` starts a comment.
//! Keys are the long flag names with `-` or `_`: `kt`, `kr`, `n`, `mt`,
//! `mr`, `r`, `mode`, `axis`, `grid`, `file-size`, `trials`, `seed`,
//! `scheme`, `format`, `out`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::invariants::{check_config, default_grid, run_suite};
use crate::model::{DemandVector, NetworkConfig, NetworkParams};
use crate::montecarlo::{
    convergence_study, default_file_sizes, run_trials_against, summary, MonteCarloError, PlacedNetwork,
};
use crate::ndt::{self, cloud_crossover, sweep, Axis, Mode, NdtBreakdown, NdtError, Scheme, Technique};
use crate::placement::dump::write_placement;
use crate::rational::{self, decimal_string, exact_string, from_usize, Rational};
use crate::scheduler::{
    build_schedule, export_schedule, validate_block, ExportFormat, LabelCaches, PlacedCaches, ScheduleError, Sizes,
};

/// Directory for outputs when `--out` is not given.
pub const OUT_DIR_ENV: &str = "FRAN_OUT_DIR";
const SIG: usize = 12;

#[derive(Debug, Parser)]
#[command(name = "fran", version, about = "Delivery-time engine for cache-aided fog radio access networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Best achievable NDT of one configuration.
    Ndt(NdtArgs),
    /// NDT over a grid of one parameter, as CSV.
    Sweep(SweepArgs),
    /// Monte Carlo check of cache placement statistics and bit-level delivery time.
    Simulate(SimulateArgs),
    /// Export the transmission schedule of a scheme.
    Schedule(ScheduleArgs),
    /// Run the invariant suite over a built-in grid (and the given config).
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Serial,
    Pipelined,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Serial => Mode::Serial,
            ModeArg::Pipelined => Mode::Pipelined,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Auto,
    Edge,
    Cloud,
    Hybrid,
}

fn parse_rational(s: &str) -> Result<Rational, String> {
    rational::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Default, Args)]
struct NetArgs {
    /// Key-value experiment file; flags override its entries.
    #[arg(long)]
    experiment: Option<PathBuf>,
    /// Number of edge nodes.
    #[arg(long)]
    kt: Option<usize>,
    /// Number of users.
    #[arg(long)]
    kr: Option<usize>,
    /// Number of files.
    #[arg(long)]
    n: Option<usize>,
    /// EN cache size in files.
    #[arg(long, value_parser = parse_rational)]
    mt: Option<Rational>,
    /// User cache size in files.
    #[arg(long, value_parser = parse_rational)]
    mr: Option<Rational>,
    /// Fronthaul multiplexing gain.
    #[arg(long, value_parser = parse_rational)]
    r: Option<Rational>,
    /// Output file (default: stdout, or $FRAN_OUT_DIR/<command>.<ext>).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Debug, Args)]
struct NdtArgs {
    #[command(flatten)]
    net: NetArgs,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    net: NetArgs,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Swept parameter: mt, mr or r.
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated values, or `start:end:count` for an even grid.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    net: NetArgs,
    /// Bits per file.
    #[arg(long)]
    file_size: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also fit the error decay over F = 2^12 .. 2^22.
    #[arg(long)]
    convergence: bool,
    /// Replace the expected class fractions (comma-separated, one per class).
    #[arg(long, hide = true)]
    expected_fractions: Option<String>,
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    #[command(flatten)]
    net: NetArgs,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Schedule the bits of a placement of this many bits per file.
    #[arg(long)]
    file_size: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the placement behind a bit-level schedule to this file.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    net: NetArgs,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Infeasible(String),
    Failed(String),
    Io(io::Error),
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Infeasible(_) => 2,
            CliError::Failed(_) => 3,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => format!("error: {m}"),
            CliError::Infeasible(m) => format!("infeasible: {m}"),
            CliError::Failed(m) => format!("check failed: {m}"),
            CliError::Io(e) => format!("error: {e}"),
        }
    }
}

fn infeasible(cfg: &NetworkConfig, e: &NdtError) -> CliError {
    CliError::Infeasible(format!(
        "{e}; with t_T = {} < 1 and r = {} the uncached part cannot reach the ENs, \
         so no scheme is feasible when t_T < 1 and r = 0 ({cfg})",
        exact_string(&cfg.t_t()),
        exact_string(cfg.r())
    ))
}

/// Flat `key = value` file; later keys override earlier ones.
pub fn parse_experiment_file(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        let key = k.trim().replace('_', "-").to_ascii_lowercase();
        if key.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

struct Experiment {
    entries: BTreeMap<String, String>,
}

impl Experiment {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let entries = match path {
            None => BTreeMap::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("--experiment {}: {e}", p.display())))?;
                parse_experiment_file(&text).map_err(|e| CliError::Usage(format!("--experiment {}: {e}", p.display())))?
            }
        };
        Ok(Experiment { entries })
    }

    fn get<T>(&self, flag: Option<T>, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.entries
            .get(key)
            .map(|v| parse(v).map_err(|e| CliError::Usage(format!("--{key}: {e}"))))
            .transpose()
    }

    fn require<T>(&self, flag: Option<T>, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<T, CliError> {
        self.get(flag, key, parse)?
            .ok_or_else(|| CliError::Usage(format!("missing required --{key}")))
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<(), CliError> {
        match self.entries.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(CliError::Usage(format!("unknown experiment key `{k}`"))),
            None => Ok(()),
        }
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| format!("{s:?}: {e}"))
}

fn value_enum<T: ValueEnum>(s: &str) -> Result<T, String> {
    T::from_str(s, true)
}

const NET_KEYS: [&str; 8] = ["kt", "kr", "n", "mt", "mr", "r", "out", "format"];

fn config(net: &NetArgs, exp: &Experiment) -> Result<NetworkConfig, CliError> {
    let params = NetworkParams {
        kt: exp.require(net.kt, "kt", parse_num)?,
        kr: exp.require(net.kr, "kr", parse_num)?,
        n: exp.require(net.n, "n", parse_num)?,
        mt: exp.require(net.mt.clone(), "mt", parse_rational)?,
        mr: exp.require(net.mr.clone(), "mr", parse_rational)?,
        r: exp.require(net.r.clone(), "r", parse_rational)?,
    };
    crate::model::validate_config(params).map_err(|e| CliError::Usage(e.to_string()))
}

fn has_config(net: &NetArgs, exp: &Experiment) -> bool {
    net.kt.is_some() || net.kr.is_some() || net.n.is_some() || exp.entries.keys().any(|k| NET_KEYS[..6].contains(&k.as_str()))
}

fn mode(flag: Option<ModeArg>, exp: &Experiment) -> Result<Mode, CliError> {
    Ok(exp.get(flag, "mode", value_enum::<ModeArg>)?.map(Mode::from).unwrap_or(Mode::Serial))
}

fn format(net: &NetArgs, exp: &Experiment, default: FormatArg) -> Result<FormatArg, CliError> {
    Ok(exp.get(net.format, "format", value_enum::<FormatArg>)?.unwrap_or(default))
}

/// Resolved output: an explicit path, `$FRAN_OUT_DIR/<command>.<ext>`, or stdout.
fn output_path(net: &NetArgs, exp: &Experiment, command: &str, fmt: FormatArg) -> Result<Option<PathBuf>, CliError> {
    if let Some(p) = exp.get(net.out.clone(), "out", |s| Ok(PathBuf::from(s)))? {
        return Ok(Some(p));
    }
    Ok(std::env::var_os(OUT_DIR_ENV).filter(|d| !d.is_empty()).map(|d| {
        let ext = match fmt {
            FormatArg::Csv => "csv",
            FormatArg::Text => "txt",
        };
        PathBuf::from(d).join(format!("{command}.{ext}"))
    }))
}

fn emit(path: Option<PathBuf>, out: &mut dyn Write, body: &[u8]) -> Result<(), CliError> {
    match path {
        None => out.write_all(body)?,
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let mut w = BufWriter::new(File::create(&p).map_err(|e| CliError::Usage(format!("--out {}: {e}", p.display())))?);
            w.write_all(body)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn both(q: &Rational) -> String {
    format!("{} ({})", exact_string(q), decimal_string(q, SIG))
}

fn ndt_text(cfg: &NetworkConfig, b: &NdtBreakdown) -> String {
    let mut s = String::new();
    s.push_str(&format!("config: {cfg}\n"));
    s.push_str(&format!("t_T: {}\n", exact_string(&cfg.t_t())));
    s.push_str(&format!("mode: {}\n", b.mode));
    s.push_str(&format!("scheme: {}\n", b.scheme));
    s.push_str(&format!("delta_f: {}\n", both(&b.delta_f)));
    s.push_str(&format!("delta_e: {}\n", both(&b.delta_e)));
    s.push_str(&format!("delta_total: {}\n", both(&b.delta_total)));
    s.push_str("candidates:\n");
    for c in &b.candidates {
        s.push_str(&format!(
            "  {:<10} delta_f={} delta_e={} total={}\n",
            c.scheme.name(),
            c.delta_f,
            c.delta_e,
            c.total
        ));
    }
    s.push_str("per_class:\n");
    s.push_str(&format!(
        "  {:>3} {:>20} {:>20} {:>20}\n",
        "j",
        Technique::IaIc,
        Technique::ZfIc,
        Technique::SoftTransfer
    ));
    for pc in &b.per_class {
        s.push_str(&format!(
            "  {:>3} {:>20} {:>20} {:>20}\n",
            pc.j,
            exact_string(&pc.ia_ic),
            exact_string(&pc.zf_ic),
            exact_string(&pc.soft_transfer)
        ));
    }
    for n in &b.notes {
        s.push_str(&format!("note: {n}\n"));
    }
    s
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(io::Error::from)?;
    for r in rows {
        w.write_record(r).map_err(io::Error::from)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}

fn cmd_ndt(a: NdtArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let exp = Experiment::load(a.net.experiment.as_deref())?;
    exp.check_keys(&[&NET_KEYS[..], &["mode"]].concat())?;
    let cfg = config(&a.net, &exp)?;
    let mode = mode(a.mode, &exp)?;
    let fmt = format(&a.net, &exp, FormatArg::Text)?;
    let b = ndt::delta(&cfg, mode).map_err(|e| infeasible(&cfg, &e))?;
    let body = match fmt {
        FormatArg::Text => ndt_text(&cfg, &b).into_bytes(),
        FormatArg::Csv => {
            let header = ["scheme", "mode", "delta_f", "delta_e", "delta_total", "delta_f_exact", "delta_e_exact", "delta_total_exact"]
                .map(String::from);
            let row = vec![
                b.scheme.to_string(),
                b.mode.to_string(),
                decimal_string(&b.delta_f, SIG),
                decimal_string(&b.delta_e, SIG),
                decimal_string(&b.delta_total, SIG),
                exact_string(&b.delta_f),
                exact_string(&b.delta_e),
                exact_string(&b.delta_total),
            ];
            csv_bytes(&header, &[row])?
        }
    };
    emit(output_path(&a.net, &exp, "ndt", fmt)?, out, &body)
}

/// Comma list or `start:end:count` (inclusive, evenly spaced, exact).
pub fn parse_grid(s: &str) -> Result<Vec<Rational>, String> {
    let grid = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let [start, end, count] = parts[..] else {
            return Err(format!("range {s:?} is not start:end:count"));
        };
        let (start, end) = (parse_rational(start)?, parse_rational(end)?);
        let count: usize = parse_num(count)?;
        match count {
            0 => Vec::new(),
            1 => vec![start],
            _ => {
                let step = (&end - &start) / from_usize(count - 1);
                (0..count).map(|i| &start + &step * from_usize(i)).collect()
            }
        }
    } else {
        s.split(',').map(|v| parse_rational(v.trim())).collect::<Result<_, _>>()?
    };
    if grid.is_empty() {
        return Err("grid is empty".into());
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err("grid must be strictly increasing".into());
    }
    Ok(grid)
}

/// Header of the sweep CSV for `axis`.
pub fn sweep_header(axis: Axis) -> Vec<String> {
    let a = axis.name();
    vec![
        a.to_string(),
        "delta_f".into(),
        "delta_e".into(),
        "delta_total".into(),
        "scheme".into(),
        "mode".into(),
        format!("{a}_exact"),
        "delta_f_exact".into(),
        "delta_e_exact".into(),
        "delta_total_exact".into(),
    ]
}

fn cmd_sweep(a: SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let exp = Experiment::load(a.net.experiment.as_deref())?;
    exp.check_keys(&[&NET_KEYS[..], &["mode", "axis", "grid"]].concat())?;
    let axis: Axis = exp.require(a.axis.clone(), "axis", |s| Ok(s.to_string()))?.parse().map_err(CliError::Usage)?;
    let grid = parse_grid(&exp.require(a.grid.clone(), "grid", |s| Ok(s.to_string()))?).map_err(|e| CliError::Usage(format!("--grid: {e}")))?;

    // the swept parameter may be omitted from the base config
    let mut net = a.net.clone();
    match axis {
        Axis::Mt if net.mt.is_none() && !exp.entries.contains_key("mt") => net.mt = Some(grid[0].clone()),
        Axis::Mr if net.mr.is_none() && !exp.entries.contains_key("mr") => net.mr = Some(grid[0].clone()),
        Axis::R if net.r.is_none() && !exp.entries.contains_key("r") => net.r = Some(grid[0].clone()),
        _ => {}
    }
    let template = config(&net, &exp)?;
    let mode = mode(a.mode, &exp)?;
    let fmt = format(&a.net, &exp, FormatArg::Csv)?;
    let points = sweep(&template, axis, &grid, mode).map_err(|e| CliError::Usage(format!("--grid: {e}")))?;

    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| match &p.outcome {
            Ok(b) => vec![
                decimal_string(&p.x, SIG),
                decimal_string(&b.delta_f, SIG),
                decimal_string(&b.delta_e, SIG),
                decimal_string(&b.delta_total, SIG),
                b.scheme.to_string(),
                mode.to_string(),
                exact_string(&p.x),
                exact_string(&b.delta_f),
                exact_string(&b.delta_e),
                exact_string(&b.delta_total),
            ],
            Err(_) => vec![
                decimal_string(&p.x, SIG),
                String::new(),
                String::new(),
                String::new(),
                "INFEASIBLE".into(),
                mode.to_string(),
                exact_string(&p.x),
                String::new(),
                String::new(),
                String::new(),
            ],
        })
        .collect();
    let body = match fmt {
        FormatArg::Csv => csv_bytes(&sweep_header(axis), &rows)?,
        FormatArg::Text => {
            let mut s = format!("# {}\n", sweep_header(axis).join(" "));
            for r in &rows {
                s.push_str(&r.join(" "));
                s.push('\n');
            }
            s.into_bytes()
        }
    };
    emit(output_path(&a.net, &exp, "sweep", fmt)?, out, &body)?;
    if let Some(c) = cloud_crossover(&points) {
        writeln!(
            err,
            "crossover: CloudOnly up to {}={}, {} from {}={}",
            axis.name(),
            exact_string(&c.before),
            c.to,
            axis.name(),
            exact_string(&c.at)
        )?;
    }
    if points.iter().all(|p| p.outcome.is_err()) {
        let e = points[0].outcome.as_ref().unwrap_err();
        return Err(infeasible(&template, e));
    }
    Ok(())
}

fn mc_error(e: MonteCarloError) -> CliError {
    match e {
        MonteCarloError::Schedule(ScheduleError::ReconcileFailure { .. }) => CliError::Failed(e.to_string()),
        other => CliError::Usage(other.to_string()),
    }
}

fn cmd_simulate(a: SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let exp = Experiment::load(a.net.experiment.as_deref())?;
    exp.check_keys(&[&NET_KEYS[..], &["file-size", "trials", "seed"]].concat())?;
    let cfg = config(&a.net, &exp)?;
    let file_size = exp.get(a.file_size, "file-size", parse_num)?.unwrap_or(1 << 20);
    let trials = exp.get(a.trials, "trials", parse_num)?.unwrap_or(32);
    let seed = exp.get(a.seed, "seed", parse_num)?.unwrap_or(0);
    let expected = a
        .expected_fractions
        .as_deref()
        .map(|s| s.split(',').map(|v| parse_rational(v.trim())).collect::<Result<Vec<_>, _>>())
        .transpose()
        .map_err(|e| CliError::Usage(format!("--expected-fractions: {e}")))?;
    let fmt = format(&a.net, &exp, FormatArg::Text)?;
    if fmt == FormatArg::Csv {
        return Err(CliError::Usage("--format csv is not available for simulate".into()));
    }

    let report = run_trials_against(&cfg, file_size, trials, seed, expected.as_deref()).map_err(mc_error)?;
    let study = if a.convergence {
        Some(convergence_study(&cfg, &default_file_sizes(), 8, seed).map_err(mc_error)?)
    } else {
        None
    };
    emit(output_path(&a.net, &exp, "simulate", fmt)?, out, summary(&report, study.as_ref()).as_bytes())?;
    if !report.passed() {
        return Err(CliError::Failed(format!("a class deviates by more than {} sigma", crate::montecarlo::Z_LIMIT)));
    }
    if let Some(s) = study {
        if !(-0.65..=-0.35).contains(&s.slope) {
            return Err(CliError::Failed(format!("error decay slope {:.3} outside -0.5 +/- 0.15", s.slope)));
        }
    }
    Ok(())
}

fn cmd_schedule(a: ScheduleArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let exp = Experiment::load(a.net.experiment.as_deref())?;
    exp.check_keys(&[&NET_KEYS[..], &["mode", "scheme", "file-size", "seed"]].concat())?;
    let cfg = config(&a.net, &exp)?;
    let mode = mode(a.mode, &exp)?;
    let fmt = format(&a.net, &exp, FormatArg::Csv)?;
    let scheme = match exp.get(a.scheme, "scheme", value_enum::<SchemeArg>)?.unwrap_or(SchemeArg::Auto) {
        SchemeArg::Auto => ndt::delta(&cfg, mode).map_err(|e| infeasible(&cfg, &e))?.scheme,
        SchemeArg::Edge => Scheme::EdgeOnly,
        SchemeArg::Cloud => Scheme::CloudOnly,
        SchemeArg::Hybrid => Scheme::Hybrid,
    };
    ndt::evaluate_scheme(&cfg, scheme, mode).map_err(|e| infeasible(&cfg, &e))?;
    let demand = DemandVector::worst_case(&cfg);
    let file_size = exp.get(a.file_size, "file-size", parse_num)?;
    let seed = exp.get(a.seed, "seed", parse_num)?.unwrap_or(0);

    let sched_err = |e: ScheduleError| match e {
        ScheduleError::Infeasible(n) => infeasible(&cfg, &n),
        other => CliError::Failed(other.to_string()),
    };
    let (schedule, validation) = match file_size {
        None => {
            let s = build_schedule(&cfg, Sizes::Analytic, &LabelCaches, &demand, scheme, mode).map_err(sched_err)?;
            let v: Vec<_> = s.blocks.iter().map(|b| validate_block(b, &LabelCaches, cfg.kt(), cfg.kr())).collect();
            (s, v)
        }
        Some(f) => {
            if f == 0 {
                return Err(CliError::Usage("--file-size must be positive".into()));
            }
            let placed = PlacedNetwork::new(&cfg, f, seed).map_err(mc_error)?;
            if let Some(path) = &a.dump {
                let mut w = BufWriter::new(File::create(path)?);
                write_placement(&mut w, &cfg, &placed.en, &placed.users)?;
                w.flush()?;
            }
            let caches = PlacedCaches::new(&placed.en, &placed.users);
            let s = build_schedule(&cfg, Sizes::Empirical(&placed.profile), &caches, &demand, scheme, mode)
                .map_err(sched_err)?;
            let v: Vec<_> = s.blocks.iter().map(|b| validate_block(b, &caches, cfg.kt(), cfg.kr())).collect();
            (s, v)
        }
    };
    let mut body = Vec::new();
    let export = match fmt {
        FormatArg::Csv => ExportFormat::Csv,
        FormatArg::Text => ExportFormat::Text,
    };
    export_schedule(&schedule, &validation, export, &mut body)?;
    emit(output_path(&a.net, &exp, "schedule", fmt)?, out, &body)?;
    if validation.iter().any(Result::is_err) {
        return Err(CliError::Failed("a block failed validation".into()));
    }
    Ok(())
}

fn cmd_validate(a: ValidateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let exp = Experiment::load(a.net.experiment.as_deref())?;
    exp.check_keys(&NET_KEYS)?;
    let grid = default_grid();
    let mut text = format!("grid: {} configurations\n", grid.len());
    let mut results = run_suite(&grid);
    if has_config(&a.net, &exp) {
        let cfg = config(&a.net, &exp)?;
        text.push_str(&format!("config: {cfg}\n"));
        results.extend(check_config(&cfg).into_iter().map(|mut r| {
            r.detail = if r.passed { "given config".into() } else { format!("given config: {}", r.detail) };
            r
        }));
    }
    for r in &results {
        text.push_str(&format!("{r}\n"));
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    text.push_str(&format!("passed {}/{}\n", results.len() - failed, results.len()));
    let fmt = format(&a.net, &exp, FormatArg::Text)?;
    emit(output_path(&a.net, &exp, "validate", fmt)?, out, text.as_bytes())?;
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} invariant check(s) failed")));
    }
    Ok(())
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return 0;
            }
            let _ = write!(err, "{}", e.render());
            return 1;
        }
    };
    let result = match cli.command {
        Command::Ndt(a) => cmd_ndt(a, out),
        Command::Sweep(a) => cmd_sweep(a, out, err),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Schedule(a) => cmd_schedule(a, out),
        Command::Validate(a) => cmd_validate(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.message());
            e.code()
        }
    }
}
