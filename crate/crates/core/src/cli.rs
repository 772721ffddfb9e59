//! Command-line front end: `construct`, `verify`, `report`, `envelope` and
//! `extremal`.
//!
//! Every table is written as CSV with the run manifest on a leading
//! `# {...}` line, or as a single JSON document with `--format json`.
//! Exit codes: 0 pass, 1 certification failure, 2 invalid configuration,
//! 3 numeric failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::envelope::{envelope_table, DEFAULT_RHO};
use crate::error::Error;
use crate::extremal::{extremal_table, integrate_transformed, MIN_STEPS};
use crate::function::{GridFunction, PiecewiseC1Function, SegmentKind};
use crate::oscillator::{build_oscillator, OscillatorConfig, DEFAULT_GRID_DENSITY};
use crate::par::Execution;
use crate::reparam::{blowup_time, ReparamResult};
use crate::verifier::{
    oscillation_certificate_with, residual_log_trajectory, residual_original, residual_transformed, PUSHFORWARD_SLACK,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CERTIFICATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

const AUDIT_TOL: f64 = 1e-10;
const EXTREMAL_SLACK: f64 = 1e-6;
const MAX_GRID_DENSITY: usize = 1 << 16;

#[derive(Debug, Parser)]
#[command(
    name = "blowup-lab",
    version,
    about = "Oscillating blow-up trajectories: construction, certification and envelopes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Build X = M·Y and write its knot table.
    Construct,
    /// Check the differential inequality pointwise on a grid.
    Verify,
    /// Pushforward, extremal and envelope tables in one directory.
    Report,
    /// Lower-bound envelopes at T* - t = e^(-L).
    Envelope,
    /// Equality-case trajectory and blow-up ratio.
    Extremal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Source {
    Oscillator,
    Extremal,
    Grid,
}

/// Raw flags. Unset flags fall back to the config file, then to defaults.
#[derive(Debug, Default, clap::Args)]
pub struct Flags {
    /// Amplitude M > 0.
    #[arg(long = "M", global = true)]
    pub m: Option<f64>,
    /// Oscillator depth N.
    #[arg(long = "n-max", global = true)]
    pub n_max: Option<u32>,
    /// Grid points per unit of τ.
    #[arg(long = "grid-density", global = true)]
    pub grid_density: Option<usize>,
    #[arg(long = "tau-max", global = true)]
    pub tau_max: Option<f64>,
    /// Derivative orders for the higher envelopes.
    #[arg(long = "k", global = true, value_delimiter = ',')]
    pub k: Option<Vec<u32>>,
    #[arg(long = "rho", global = true)]
    pub rho: Option<f64>,
    #[arg(long = "C", global = true)]
    pub c: Option<f64>,
    #[arg(long = "t-star", global = true)]
    pub t_star: Option<f64>,
    /// Values of L = ln(1/(T* - t)).
    #[arg(long = "L", global = true, value_delimiter = ',')]
    pub l: Option<Vec<f64>>,
    /// Trajectory checked by `verify`.
    #[arg(long, global = true, value_enum)]
    pub source: Option<Source>,
    /// Sampled trajectory for `verify --source grid`: columns t, x, xdot, tau.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// File of `key = value` lines using the flag names.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Evaluate on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub m: f64,
    pub n_max: u32,
    pub grid_density: usize,
    pub tau_max: f64,
    pub k: Vec<u32>,
    pub rho: f64,
    pub c: f64,
    pub t_star: f64,
    pub l: Vec<f64>,
    pub source: Source,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub exec: Execution,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Certification(Value),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain { .. } | Error::InvalidConfig(_) | Error::MissingChannel(_) => Failure::Config(e.to_string()),
            Error::Construction { .. } | Error::Numeric(_) | Error::Range { .. } | Error::Accuracy { .. } => {
                Failure::Numeric(e.to_string())
            }
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
        }
    };
    let result = resolve(cli.command, &cli.opts).and_then(|cfg| dispatch(&cfg));
    match result {
        Ok(()) => EXIT_PASS,
        Err(Failure::Config(msg)) => {
            eprintln!("{}", json!({ "error": "invalid_config", "detail": msg }));
            EXIT_CONFIG
        }
        Err(Failure::Certification(verdict)) => {
            eprintln!("{verdict}");
            EXIT_CERTIFICATION
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("{}", json!({ "error": "numeric", "detail": msg }));
            EXIT_NUMERIC
        }
    }
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> std::result::Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected `key = value`", i + 1))?;
        let key = k.trim().trim_start_matches("--").to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(format!("config line {}: unknown key `{key}`", i + 1));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

const KNOWN_KEYS: &[&str] = &[
    "M",
    "n-max",
    "grid-density",
    "tau-max",
    "k",
    "rho",
    "C",
    "t-star",
    "L",
    "source",
    "input",
    "out",
    "format",
];

fn pick<T: std::str::FromStr>(flag: Option<T>, file: &BTreeMap<String, String>, key: &str, default: T) -> Outcome<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match file.get(key) {
        Some(s) => s
            .parse()
            .map_err(|_| Failure::Config(format!("config value `{s}` for `{key}` does not parse"))),
        None => Ok(default),
    }
}

fn pick_list<T: std::str::FromStr>(
    flag: Option<Vec<T>>,
    file: &BTreeMap<String, String>,
    key: &str,
    default: Vec<T>,
) -> Outcome<Vec<T>> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match file.get(key) {
        Some(s) => s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| Failure::Config(format!("config value `{p}` for `{key}` does not parse")))
            })
            .collect(),
        None => Ok(default),
    }
}

fn pick_enum<T: ValueEnum>(flag: Option<T>, file: &BTreeMap<String, String>, key: &str, default: T) -> Outcome<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match file.get(key) {
        Some(s) => T::from_str(s, true)
            .map_err(|_| Failure::Config(format!("config value `{s}` for `{key}` is not recognised"))),
        None => Ok(default),
    }
}

fn resolve(command: Command, f: &Flags) -> Outcome<RunConfig> {
    let file = match &f.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", p.display())))?;
            parse_config(&text).map_err(Failure::Config)?
        }
        None => BTreeMap::new(),
    };
    let cfg = RunConfig {
        command,
        m: pick(f.m, &file, "M", 1.0)?,
        n_max: pick(f.n_max, &file, "n-max", 8)?,
        grid_density: pick(f.grid_density, &file, "grid-density", DEFAULT_GRID_DENSITY)?,
        tau_max: pick(f.tau_max, &file, "tau-max", 12.0)?,
        k: pick_list(f.k.clone(), &file, "k", vec![2, 3, 4])?,
        rho: pick(f.rho, &file, "rho", DEFAULT_RHO)?,
        c: pick(f.c, &file, "C", 1.0)?,
        t_star: pick(f.t_star, &file, "t-star", 1.0)?,
        l: pick_list(
            f.l.clone(),
            &file,
            "L",
            vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0],
        )?,
        source: pick_enum(f.source, &file, "source", Source::Oscillator)?,
        input: f.input.clone().or_else(|| file.get("input").map(PathBuf::from)),
        out: f.out.clone().or_else(|| file.get("out").map(PathBuf::from)),
        format: pick_enum(f.format, &file, "format", Format::Csv)?,
        exec: if f.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Outcome<()> {
    OscillatorConfig::new(cfg.m, cfg.n_max).validate()?;
    if !(1..=MAX_GRID_DENSITY).contains(&cfg.grid_density) {
        return Err(Failure::Config(format!(
            "grid-density must lie in 1..={MAX_GRID_DENSITY}"
        )));
    }
    if !(cfg.tau_max > 0.0 && cfg.tau_max <= crate::extremal::MAX_TAU) {
        return Err(Failure::Config(format!(
            "tau-max = {} must lie in (0, {}]",
            cfg.tau_max,
            crate::extremal::MAX_TAU
        )));
    }
    if let Some(&k) = cfg.k.iter().find(|&&k| k < 2) {
        return Err(Failure::Config(format!("k = {k}: higher envelopes need k >= 2")));
    }
    if !cfg.rho.is_finite() {
        return Err(Failure::Config("rho must be finite".into()));
    }
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(Failure::Config(format!("C = {} must be positive", cfg.c)));
    }
    if !(cfg.t_star > 0.0 && cfg.t_star.is_finite()) {
        return Err(Failure::Config(format!("t-star = {} must be positive", cfg.t_star)));
    }
    if cfg.l.is_empty() || cfg.l.iter().any(|l| !l.is_finite()) {
        return Err(Failure::Config("L must be a non-empty list of finite values".into()));
    }
    if cfg.source == Source::Grid && cfg.command == Command::Verify && cfg.input.is_none() {
        return Err(Failure::Config("--source grid needs --input".into()));
    }
    Ok(())
}

fn dispatch(cfg: &RunConfig) -> Outcome<()> {
    match cfg.command {
        Command::Construct => cmd_construct(cfg),
        Command::Verify => cmd_verify(cfg),
        Command::Report => cmd_report(cfg),
        Command::Envelope => cmd_envelope(cfg),
        Command::Extremal => cmd_extremal(cfg),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Num(f64),
    Int(i64),
    Text(&'static str),
    Empty,
}

impl Cell {
    fn csv(&self, out: &mut String) {
        match self {
            Cell::Num(v) => write!(out, "{v:.16e}"),
            Cell::Int(v) => write!(out, "{v}"),
            Cell::Text(s) => write!(out, "{s}"),
            Cell::Empty => Ok(()),
        }
        .expect("writing to a String cannot fail");
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) if v.is_finite() => json!(v),
            Cell::Num(v) => json!(v.to_string()),
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Empty => Value::Null,
        }
    }
}

#[derive(Debug, Clone)]
struct Table {
    manifest: Value,
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => {
                let mut s = format!("# {}\n", self.manifest);
                s.push_str(&self.columns.join(","));
                s.push('\n');
                for row in &self.rows {
                    for (i, c) in row.iter().enumerate() {
                        if i > 0 {
                            s.push(',');
                        }
                        c.csv(&mut s);
                    }
                    s.push('\n');
                }
                s
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| Value::Array(r.iter().map(Cell::json).collect()))
                    .collect();
                let doc = json!({ "manifest": self.manifest, "columns": self.columns, "rows": rows });
                let mut s = serde_json::to_string_pretty(&doc).expect("JSON values always serialise");
                s.push('\n');
                s
            }
        }
    }
}

fn write_text(path: &Path, text: &str) -> Outcome<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Numeric(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| Failure::Numeric(format!("cannot write {}: {e}", path.display())))
}

/// Writes the table to `--out` (printing the verdict) or to stdout.
fn emit(cfg: &RunConfig, table: &Table, verdict: &Value) -> Outcome<()> {
    match &cfg.out {
        Some(p) => {
            write_text(p, &table.render(cfg.format))?;
            println!("{verdict}");
        }
        None => print!("{}", table.render(cfg.format)),
    }
    Ok(())
}

fn oscillator(cfg: &RunConfig) -> Outcome<PiecewiseC1Function> {
    let mut oc = OscillatorConfig::new(cfg.m, cfg.n_max);
    oc.certify_grid_density = cfg.grid_density;
    Ok(build_oscillator(&oc)?)
}

fn num(v: f64) -> Cell {
    Cell::Num(v)
}

fn cmd_construct(cfg: &RunConfig) -> Outcome<()> {
    let x = oscillator(cfg)?;
    let audit = x.continuity_audit(AUDIT_TOL);
    let knots = x.knots();
    let segs = x.segments();
    let mut rows = Vec::with_capacity(knots.len());
    for (i, &k) in knots.iter().enumerate() {
        let (kind, (v, d), coeffs) = match segs.get(i) {
            Some(s) => {
                let coeffs = match &s.kind {
                    SegmentKind::SplinePiece(sp) => Some((sp.a, sp.b)),
                    SegmentKind::ExpBranch { .. } => None,
                };
                (s.kind_name(), (x.scale() * s.value(k), x.scale() * s.slope(k)), coeffs)
            }
            None => ("end", x.left_limit(i), None),
        };
        let (a, b) = coeffs.map_or((Cell::Empty, Cell::Empty), |(a, b)| (num(a), num(b)));
        rows.push(vec![
            Cell::Int(i as i64),
            num(k),
            Cell::Text(kind),
            num(v),
            num(d),
            a,
            b,
        ]);
    }
    let pass = audit.is_empty();
    let manifest = json!({
        "command": "construct",
        "M": cfg.m,
        "n_max": cfg.n_max,
        "segments": segs.len(),
        "knots": knots.len(),
        "x0": x.eval(0.0)?,
        "audit": { "tol": AUDIT_TOL, "gaps": audit, "pass": pass },
    });
    let table = Table {
        manifest: manifest.clone(),
        columns: cols(&["knot_index", "tau", "kind", "value", "slope", "a", "b"]),
        rows,
    };
    emit(
        cfg,
        &table,
        &json!({ "command": "construct", "pass": pass, "segments": segs.len() }),
    )?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Certification(manifest))
    }
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn cmd_verify(cfg: &RunConfig) -> Outcome<()> {
    let (table, verdict, pass) = match cfg.source {
        Source::Oscillator => verify_oscillator(cfg)?,
        Source::Extremal => verify_extremal(cfg)?,
        Source::Grid => verify_grid(cfg)?,
    };
    emit(cfg, &table, &verdict)?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Certification(verdict))
    }
}

fn verify_oscillator(cfg: &RunConfig) -> Outcome<(Table, Value, bool)> {
    let x = oscillator(cfg)?;
    let grid = x.segment_grid(cfg.grid_density);
    let rep = residual_transformed(&x, &grid, 0.0, cfg.exec)?;
    let r = blowup_time(&x, cfg.n_max)?;
    let cert = oscillation_certificate_with(&x, &r, cfg.m, cfg.n_max, cfg.grid_density, cfg.exec)?;
    let mut rows = Vec::with_capacity(grid.len());
    for (&tau, &res) in grid.iter().zip(&rep.residuals) {
        let (v, d) = x.eval_with_derivative(tau)?;
        rows.push(vec![num(tau), num(v), num(d), num(1.0 + v * tau.exp()), num(res)]);
    }
    let pass = rep.pass && cert.pass;
    let verdict = json!({
        "command": "verify",
        "source": "oscillator",
        "M": cfg.m,
        "n_max": cfg.n_max,
        "grid_density": cfg.grid_density,
        "pass": pass,
        "residual": rep.summary(),
        "certificate": cert.checks,
        "t_star": r.t_star,
        "t_star_error_bound": r.t_star_error_bound,
    });
    let table = Table {
        manifest: verdict.clone(),
        columns: cols(&["tau", "X", "Xprime", "rhs", "residual"]),
        rows,
    };
    Ok((table, verdict, pass))
}

fn extremal_steps(cfg: &RunConfig) -> usize {
    ((cfg.tau_max * cfg.grid_density as f64).round() as usize).max(MIN_STEPS)
}

fn verify_extremal(cfg: &RunConfig) -> Outcome<(Table, Value, bool)> {
    let traj = integrate_transformed(cfg.m, cfg.tau_max, extremal_steps(cfg))?;
    let rep = residual_log_trajectory(&traj, EXTREMAL_SLACK)?;
    let pass = rep.max_abs_residual <= EXTREMAL_SLACK;
    let rows = traj
        .abscissae
        .iter()
        .zip(&traj.log_values)
        .zip(&rep.residuals)
        .map(|((&tau, &y), &res)| vec![num(tau), num(y), num((-y).exp() + tau.exp()), num(res)])
        .collect();
    let verdict = json!({
        "command": "verify",
        "source": "extremal",
        "M": cfg.m,
        "tau_max": cfg.tau_max,
        "steps": traj.len() - 1,
        "pass": pass,
        "residual": rep.summary(),
        "tolerance": EXTREMAL_SLACK,
    });
    let table = Table {
        manifest: verdict.clone(),
        columns: cols(&["tau", "logX", "rhs", "relative_residual"]),
        rows,
    };
    Ok((table, verdict, pass))
}

/// Reads a `t,x,xdot,tau` CSV; `#` lines and a non-numeric header are skipped.
fn read_grid(path: &Path) -> Outcome<GridFunction> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cols: [Vec<f64>; 4] = Default::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse().ok()).collect();
        match parsed {
            Some(v) if v.len() == 4 => {
                for (c, x) in cols.iter_mut().zip(v) {
                    c.push(x);
                }
            }
            None if cols[0].is_empty() => continue,
            _ => {
                return Err(Failure::Config(format!(
                    "{} line {}: expected t,x,xdot,tau",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    let [t, x, d, acc] = cols;
    Ok(GridFunction::new(t, x)?.with_derivatives(d)?.with_accumulation(acc)?)
}

fn verify_grid(cfg: &RunConfig) -> Outcome<(Table, Value, bool)> {
    let path = cfg.input.as_ref().expect("validated");
    let g = read_grid(path)?;
    let rep = residual_original(&g, PUSHFORWARD_SLACK, cfg.exec)?;
    let d = g.derivatives.as_ref().expect("read_grid sets derivatives");
    let acc = g.accumulation.as_ref().expect("read_grid sets accumulation");
    let rows = (0..g.len())
        .map(|i| {
            let v = g.value(i);
            vec![
                num(g.abscissae[i]),
                num(v),
                num(d[i]),
                num(v + v * v * acc[i].exp()),
                num(rep.residuals[i]),
            ]
        })
        .collect();
    let verdict = json!({
        "command": "verify",
        "source": "grid",
        "input": path.display().to_string(),
        "pass": rep.pass,
        "residual": rep.summary(),
    });
    let table = Table {
        manifest: verdict.clone(),
        columns: cols(&["t", "x", "xdot", "rhs", "residual"]),
        rows,
    };
    Ok((table, verdict, rep.pass))
}

fn pushforward_table(cfg: &RunConfig, x: &PiecewiseC1Function, r: &ReparamResult) -> Outcome<Table> {
    let end = f64::from(cfg.n_max + 1);
    let taus: Vec<f64> = x
        .segment_grid(cfg.grid_density)
        .into_iter()
        .filter(|&t| t < end)
        .collect();
    let ts = crate::par::try_map(cfg.exec, &taus, |&tau| r.time_of(x, tau))?;
    let mut rows = Vec::with_capacity(taus.len());
    for (&tau, &t) in taus.iter().zip(&ts) {
        rows.push(vec![num(tau), num(t), num(x.eval(tau)?)]);
    }
    let manifest = json!({
        "table": "pushforward",
        "M": cfg.m,
        "n_max": cfg.n_max,
        "t_star": r.t_star,
        "t_star_error_bound": r.t_star_error_bound,
        "tail_bound": r.tail_bound,
        "t_star_times_M": r.t_star * cfg.m,
    });
    Ok(Table {
        manifest,
        columns: cols(&["tau", "t", "x"]),
        rows,
    })
}

fn extremal_rows(cfg: &RunConfig) -> Outcome<Table> {
    let steps = extremal_steps(cfg);
    let stride = (cfg.grid_density / 2).max(1);
    let rows = extremal_table(cfg.m, cfg.tau_max, steps, stride, cfg.exec)?
        .into_iter()
        .map(|r| vec![num(r.tau), num(r.log_x_closed), num(r.log_x_integrated), num(r.ratio)])
        .collect();
    let manifest = json!({
        "table": "extremal",
        "M": cfg.m,
        "tau_max": cfg.tau_max,
        "steps": steps,
        "stride": stride,
    });
    Ok(Table {
        manifest,
        columns: cols(&["tau", "logX_closed", "logX_rk4", "ratio"]),
        rows,
    })
}

fn envelope_rows(cfg: &RunConfig, t_star: f64) -> Outcome<Table> {
    let rows = envelope_table(t_star, cfg.c, cfg.rho, &cfg.k, &cfg.l)?
        .into_iter()
        .map(|r| {
            let mut row = vec![num(r.big_l), num(r.gap), num(r.t), num(r.ln_first)];
            row.extend(r.ln_higher.iter().map(|&(_, v)| num(v)));
            row.push(num(r.optimal_p));
            row
        })
        .collect();
    let mut columns = cols(&["L", "gap", "t", "ln_envelope_first"]);
    columns.extend(cfg.k.iter().map(|k| format!("ln_envelope_k{k}")));
    columns.push("optimal_p".into());
    let manifest = json!({
        "table": "envelope",
        "t_star": t_star,
        "C": cfg.c,
        "rho": cfg.rho,
        "k": cfg.k,
    });
    Ok(Table {
        manifest,
        columns,
        rows,
    })
}

fn cmd_report(cfg: &RunConfig) -> Outcome<()> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("report"));
    let x = oscillator(cfg)?;
    let r = blowup_time(&x, cfg.n_max)?;
    let ext = match cfg.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let tables = [
        ("pushforward", pushforward_table(cfg, &x, &r)?),
        ("extremal", extremal_rows(cfg)?),
        ("envelope", envelope_rows(cfg, r.t_star)?),
    ];
    let mut files = Vec::new();
    for (name, t) in &tables {
        let file = format!("{name}.{ext}");
        write_text(&dir.join(&file), &t.render(cfg.format))?;
        files.push(file);
    }
    let manifest = json!({
        "command": "report",
        "M": cfg.m,
        "n_max": cfg.n_max,
        "t_star": r.t_star,
        "t_star_error_bound": r.t_star_error_bound,
        "t_star_times_M": r.t_star * cfg.m,
        "files": files,
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("JSON values always serialise");
    text.push('\n');
    write_text(&dir.join("manifest.json"), &text)?;
    println!("{manifest}");
    Ok(())
}

fn cmd_envelope(cfg: &RunConfig) -> Outcome<()> {
    let table = envelope_rows(cfg, cfg.t_star)?;
    emit(cfg, &table, &json!({ "command": "envelope", "rows": table.rows.len() }))
}

fn cmd_extremal(cfg: &RunConfig) -> Outcome<()> {
    let table = extremal_rows(cfg)?;
    emit(cfg, &table, &json!({ "command": "extremal", "rows": table.rows.len() }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve_args(args: &[&str]) -> Outcome<RunConfig> {
        let cli = Cli::try_parse_from(args).expect("parses");
        resolve(cli.command, &cli.opts)
    }

    #[test]
    fn config_lines() {
        let m = parse_config("# comment\nM = 2.5\n\n n-max=4 # trailing\nk = 2,5\n").unwrap();
        assert_eq!(m["M"], "2.5");
        assert_eq!(m["n-max"], "4");
        assert_eq!(m["k"], "2,5");
        assert!(parse_config("bogus = 1").is_err());
        assert!(parse_config("M 1").is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "M = 3\nn-max = 5\nformat = json\nk = 2,7\n").unwrap();
        let p = path.to_str().unwrap();
        let cfg = resolve_args(&["blowup-lab", "construct", "--config", p, "--M", "0.5"]).unwrap();
        assert_eq!(cfg.m, 0.5);
        assert_eq!(cfg.n_max, 5);
        assert_eq!(cfg.format, Format::Json);
        assert_eq!(cfg.k, vec![2, 7]);
        assert_eq!(cfg.grid_density, DEFAULT_GRID_DENSITY);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for args in [
            &["blowup-lab", "construct", "--M", "0"][..],
            &["blowup-lab", "construct", "--n-max", "0"],
            &["blowup-lab", "envelope", "--k", "1"],
            &["blowup-lab", "extremal", "--tau-max", "20"],
            &["blowup-lab", "verify", "--source", "grid"],
        ] {
            assert!(matches!(resolve_args(args), Err(Failure::Config(_))), "{args:?}");
        }
    }

    #[test]
    fn csv_numbers_round_trip() {
        let mut s = String::new();
        let v = 0.1 + 0.2;
        Cell::Num(v).csv(&mut s);
        assert_eq!(s.parse::<f64>().unwrap(), v);
        assert_eq!(s, "3.0000000000000004e-1");
    }

    #[test]
    fn construct_table_layout() {
        let cfg = resolve_args(&["blowup-lab", "construct", "--n-max", "3"]).unwrap();
        let x = oscillator(&cfg).unwrap();
        assert_eq!(x.segments().len(), 8);
        assert_eq!(x.knots().len(), 9);
    }
}
