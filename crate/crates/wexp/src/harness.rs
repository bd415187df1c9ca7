//! Command-line orchestration: configuration resolution, run manifests, CSV
//! emission and the subcommand runners behind the `wexp` binary.
//!
//! A value is resolved from the command-line flag first, then from the
//! `--config` file (`key = value` lines, `#` comments), then from the
//! built-in default. Every resolved key is echoed in the manifest comment
//! that ends each CSV file.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::chaos::{
    coeff3, coeff3_top, coeff_table, eval_linearization, eval_multiple_integral, linearize_product,
};
use crate::error::{Error, Result};
use crate::estimators::{quadratic_error, variation};
use crate::expansion::{
    approx_samples, assemble, compare_distributions, expansion_density, linspace, target_samples,
    ApproxSample, ExpansionConfig, ExpansionReport, TestFunction, MONOMIALS,
};
use crate::exponent::{
    exponent, multilinear_bound, project_d, project_un, ChaosForm, ExponentValue, Rational,
};
use crate::paths::{contaminate, sample_jumps, sample_wiener, solve, CoefFn, JumpSize, Scheme};
use crate::rates::{dyadic_grid, measure_form_rate, RateForm, ACCEPTANCE_FORMS};
use crate::rng::{seed_stream, Purpose};
use crate::stats::{normal_pdf, Kahan};
use crate::symbols::{full_symbol_with_variance, SymbolTarget};
use crate::volatility::{
    error_expansion_terms, robust_rv, robust_rv_with, simulate_robust, summarize_robust,
    window_bounds, Derivative, Filter, FilterSpec, RobustVolConfig,
};
use crate::weights::{FamilyKind, WeightFamily, WeightFn};

pub const TOOL: &str = "wexp";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Floats are written with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Flag, file and default values merged into one flat key-value set.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

fn normalize_key(k: &str) -> String {
    k.trim().replace('_', "-")
}

impl Settings {
    /// Parse a `key = value` file body.
    pub fn parse(text: &str) -> Result<Self> {
        let mut file = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidParameter(format!("config line {}: expected key = value", i + 1))
            })?;
            file.insert(normalize_key(k), v.trim().to_string());
        }
        Ok(Self {
            file,
            resolved: BTreeMap::new(),
        })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::parse(&fs::read_to_string(p)?),
            None => Ok(Self::default()),
        }
    }

    fn raw(&mut self, key: &str, flag: Option<String>) -> Option<String> {
        let from_file = self.file.remove(key);
        let v = flag.or(from_file)?;
        self.resolved.insert(key.to_string(), v.clone());
        Some(v)
    }

    /// Resolve `key`, falling back to `default`.
    pub fn get<T>(&mut self, key: &str, flag: Option<impl Display>, default: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        let v = self
            .raw(key, flag.map(|f| f.to_string()))
            .unwrap_or_else(|| {
                self.resolved.insert(key.to_string(), default.to_string());
                default.to_string()
            });
        parse_value(key, &v)
    }

    /// Resolve `key` with no default.
    pub fn get_opt<T>(&mut self, key: &str, flag: Option<impl Display>) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.raw(key, flag.map(|f| f.to_string())) {
            Some(v) => parse_value(key, &v).map(Some),
            None => Ok(None),
        }
    }

    /// The resolved configuration; fails if the file named a key that no
    /// option consumed.
    pub fn finish(self) -> Result<BTreeMap<String, String>> {
        if let Some(k) = self.file.keys().next() {
            return Err(Error::InvalidParameter(format!("unknown config key '{k}'")));
        }
        Ok(self.resolved)
    }
}

fn parse_value<T>(key: &str, v: &str) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    v.parse::<T>()
        .map_err(|e| Error::InvalidParameter(format!("--{key} '{v}': {e}")))
}

/// Comma-separated list of values.
pub fn parse_csv_list<T>(key: &str, s: &str) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: Display,
{
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| parse_value(key, p.trim()))
        .collect()
}

/// `lo:hi:steps`.
pub fn parse_zgrid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidParameter(format!(
            "--zgrid '{s}': expected lo:hi:steps"
        )));
    }
    let lo: f64 = parse_value("zgrid", parts[0])?;
    let hi: f64 = parse_value("zgrid", parts[1])?;
    let steps: usize = parse_value("zgrid", parts[2])?;
    if !(lo < hi) || steps == 0 {
        return Err(Error::InvalidParameter(format!(
            "--zgrid '{s}': need lo < hi and steps > 0"
        )));
    }
    Ok(linspace(lo, hi, steps))
}

/// The manifest object echoed at the end of every CSV.
pub fn manifest(command: &str, config: &BTreeMap<String, String>) -> Value {
    json!({
        "tool": TOOL,
        "version": VERSION,
        "command": command,
        "config": config,
    })
}

/// A CSV table with a trailing manifest line.
#[derive(Debug, Clone)]
pub struct Table {
    header: String,
    body: String,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            header: columns.join(","),
            body: String::new(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }

    pub fn render(&self, manifest: &Value) -> String {
        format!("{}\n{}# manifest: {}\n", self.header, self.body, manifest)
    }

    /// Write to `path`, or to stdout when `path` is `None`.
    pub fn emit(&self, path: Option<&Path>, manifest: &Value) -> Result<()> {
        let text = self.render(manifest);
        match path {
            Some(p) => fs::write(p, text)?,
            None => print!("{text}"),
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "wexp",
    version,
    about = "Weighted Wiener variations: simulation and asymptotic expansions"
)]
pub struct Cli {
    /// Plain-text `key = value` file; command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Destination of the main CSV (default: stdout).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Table of three-factor product coefficients.
    Coeff(CoeffArgs),
    /// Exponent and projection bounds of a multilinear form.
    Exponent(ExponentArgs),
    /// Measured L^p rate of a catalog functional.
    Rates(RatesArgs),
    /// Per-replication weighted variations.
    Simulate(SimulateArgs),
    /// Expansion of one expectation.
    Expand(ExpandArgs),
    /// Expansion accuracy across an n grid.
    Compare(CompareArgs),
    /// Jump-robust realized volatility experiment.
    Robustvol(RobustvolArgs),
    /// Property checks and small deterministic artifacts.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct CoeffArgs {
    #[arg(long)]
    pub max_q: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ExponentArgs {
    /// Scale exponent as an integer or `a/b`.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<String>,
    /// Chaos orders, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    pub orders: Option<String>,
    /// Order set for the projection bounds (default: the form's orders ≥ 2).
    #[arg(long)]
    pub qset: Option<String>,
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    #[arg(long)]
    pub form: Option<String>,
    #[arg(long)]
    pub n_min: Option<usize>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long)]
    pub p: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub weight: Option<String>,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub qset: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub refine: Option<usize>,
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `bm` or `sde`.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub drift: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub jump_rate: Option<f64>,
    /// Jump sizes are N(0, jump_size / n).
    #[arg(long)]
    pub jump_size: Option<f64>,
    /// Write the first replication's path as `t,w[,x]`.
    #[arg(long)]
    pub dump_path: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExpansionArgs {
    #[arg(long)]
    pub weight: Option<String>,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub qset: Option<String>,
    #[arg(long)]
    pub reps: Option<u64>,
    /// Target path refinement.
    #[arg(long)]
    pub refine: Option<usize>,
    #[arg(long)]
    pub approx_reps: Option<u64>,
    #[arg(long)]
    pub approx_n: Option<usize>,
    #[arg(long)]
    pub approx_refine: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    #[command(flatten)]
    pub common: ExpansionArgs,
    #[arg(long = "f")]
    pub function: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Density grid `lo:hi:steps`, written to `--density-out`.
    #[arg(long, allow_hyphen_values = true)]
    pub zgrid: Option<String>,
    #[arg(long)]
    pub density_out: Option<PathBuf>,
    /// Write the approximation symbols as `rep,a,b,coef`.
    #[arg(long)]
    pub dump_symbols: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: ExpansionArgs,
    /// Test functions, comma-separated.
    #[arg(long = "f")]
    pub functions: Option<String>,
    /// Sample sizes, comma-separated; at least three.
    #[arg(long)]
    pub n_grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct RobustvolArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub drift: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub phi: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub refine: Option<usize>,
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long)]
    pub jump_rate: Option<f64>,
    /// Jump sizes are N(0, jump_size / n).
    #[arg(long)]
    pub jump_size: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative tolerance of the clean-data pass rate.
    #[arg(long)]
    pub pass_band: Option<f64>,
    /// Summary JSON destination (default: stderr).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for the artifacts.
    #[arg(long, default_value = "selftest-out")]
    pub out_dir: PathBuf,
}

/// Run the parsed command line and return the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let mut s = Settings::load(cli.config.as_deref())?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::Coeff(a) => run_coeff(&mut s, a, out),
        Command::Exponent(a) => run_exponent(&mut s, a, out),
        Command::Rates(a) => run_rates(&mut s, a, out),
        Command::Simulate(a) => run_simulate(&mut s, a, out),
        Command::Expand(a) => run_expand(&mut s, a, out),
        Command::Compare(a) => run_compare(&mut s, a, out),
        Command::Robustvol(a) => run_robustvol(&mut s, a, out),
        Command::Selftest(a) => run_selftest(&mut s, a),
    }
}

fn finish(s: &mut Settings, command: &str) -> Result<Value> {
    Ok(manifest(command, &std::mem::take(s).finish()?))
}

pub fn coeff_csv(max_q: u32) -> Result<Table> {
    let mut t = Table::new(&["q1", "q2", "q3", "nu", "c"]);
    for r in coeff_table(max_q)? {
        t.row(&[
            r.q1.to_string(),
            r.q2.to_string(),
            r.q3.to_string(),
            r.nu.to_string(),
            r.c.to_string(),
        ]);
    }
    Ok(t)
}

fn run_coeff(s: &mut Settings, a: CoeffArgs, out: Option<&Path>) -> Result<i32> {
    let max_q: u32 = s.get("max-q", a.max_q, "6")?;
    let m = finish(s, "coeff")?;
    coeff_csv(max_q)?.emit(out, &m)?;
    Ok(0)
}

fn exp_cells(e: ExponentValue) -> [String; 2] {
    [e.to_string(), fmt_f64(e.to_f64())]
}

fn run_exponent(s: &mut Settings, a: ExponentArgs, out: Option<&Path>) -> Result<i32> {
    let alpha: Rational = s.get("alpha", a.alpha, "0")?;
    let orders_raw: String = s.get("orders", a.orders, "2")?;
    let orders: Vec<i64> = parse_csv_list("orders", &orders_raw)?;
    let qset: Option<String> = s.get_opt("qset", a.qset)?;
    let form = ChaosForm::new(alpha, orders.clone(), "cli")?;
    let qset: Vec<i64> = match qset {
        Some(q) => parse_csv_list("qset", &q)?,
        None => {
            let mut q: Vec<i64> = orders.iter().copied().filter(|&q| q >= 2).collect();
            q.sort_unstable();
            q.dedup();
            q
        }
    };
    let m = finish(s, "exponent")?;
    let mut t = Table::new(&["quantity", "value", "decimal"]);
    let mut push =
        |name: String, cells: [String; 2]| t.row(&[name, cells[0].clone(), cells[1].clone()]);
    push("exponent".into(), exp_cells(exponent(&form)));
    for &q in &qset {
        push(
            format!("project_un:q={q}"),
            exp_cells(project_un(&form, q, &qset, false)?),
        );
        push(
            format!("project_un_refined:q={q}"),
            exp_cells(project_un(&form, q, &qset, true)?),
        );
    }
    for i in 1..=2 {
        push(format!("project_d:i={i}"), exp_cells(project_d(&form, i)));
    }
    match multilinear_bound(1, &form) {
        Ok(r) => push(
            "multilinear_bound".into(),
            exp_cells(ExponentValue::Finite(r)),
        ),
        Err(Error::NonPositiveOrder) => {}
        Err(e) => return Err(e),
    }
    t.emit(out, &m)?;
    Ok(0)
}

pub fn rates_table(
    form: RateForm,
    n_grid: &[usize],
    reps: u64,
    p: u32,
    seed: u64,
) -> Result<(Table, Value)> {
    let est = measure_form_rate(form, n_grid, reps, p, seed)?;
    let mut t = Table::new(&["n", "norm", "se"]);
    for pt in &est.points {
        t.row(&[pt.n.to_string(), fmt_f64(pt.norm), fmt_f64(pt.se)]);
    }
    let summary = json!({
        "form": form.to_string(),
        "exponent": form.exponent().to_string(),
        "slope": est.slope,
        "slope_se": est.slope_se,
        "warnings": est.warnings,
    });
    Ok((t, summary))
}

fn run_rates(s: &mut Settings, a: RatesArgs, out: Option<&Path>) -> Result<i32> {
    let form: RateForm = s.get("form", a.form, "vn")?;
    let n_min: usize = s.get("n-min", a.n_min, "64")?;
    let n_max: usize = s.get("n-max", a.n_max, "4096")?;
    let reps: u64 = s.get("reps", a.reps, "10000")?;
    let p: u32 = s.get("p", a.p, "2")?;
    let seed: u64 = s.get("seed", a.seed, "1")?;
    if n_min < 2 || n_max < n_min {
        return Err(Error::InvalidParameter(format!(
            "need 2 <= n-min <= n-max, got {n_min}, {n_max}"
        )));
    }
    let m = finish(s, "rates")?;
    let (t, summary) = rates_table(form, &dyadic_grid(n_min, n_max), reps, p, seed)?;
    t.emit(out, &m)?;
    eprintln!("{summary}");
    Ok(0)
}

fn build_family(kind: &str, qset: &str, weight: &WeightFn) -> Result<WeightFamily> {
    let kind: FamilyKind = kind.parse()?;
    let orders: Vec<u32> = parse_csv_list("qset", qset)?;
    WeightFamily::new(
        kind,
        orders.into_iter().map(|q| (q, weight.clone())).collect(),
    )
}

/// Resolved `simulate` settings.
#[derive(Debug, Clone)]
pub struct SimulateSpec {
    pub model: Model,
    pub n: usize,
    pub refine: usize,
    pub reps: u64,
    pub seed: u64,
}

/// Path model of `simulate`.
#[derive(Debug, Clone)]
pub enum Model {
    /// Weighted variations of Brownian motion.
    Brownian(WeightFamily),
    /// Realized variance of a diffusion.
    Diffusion(SdeSpec),
}

#[derive(Debug, Clone)]
pub struct SdeSpec {
    pub sigma: CoefFn,
    pub drift: CoefFn,
    pub x0: f64,
    pub jump_rate: f64,
    pub jump_size: f64,
}

/// `rep, n, v_n, m_n, n_n, z_n, G_inf, w1` for one replication.
///
/// On Brownian paths the statistic is the weighted variation, or its centred
/// error for anticipative `Q = {2}` families. Under the diffusion model it is
/// the realized variance of the observed (possibly jump-contaminated)
/// increments against `∫σ²`, with `M_n = √n Σ σ²(X_{t_{j−1}})((Δw)² − h)`.
pub fn simulate_row(spec: &SimulateSpec, rep: u64) -> Result<[f64; 7]> {
    let grid = sample_wiener(spec.n, spec.refine, spec.seed, rep)?;
    let w1 = grid.terminal();
    match &spec.model {
        Model::Brownian(family) => {
            let sample = if family.is_quadratic_anticipative() {
                quadratic_error(family, &grid)?.sample
            } else {
                variation(family, &grid)?
            };
            let g = family.g_infinity(&grid);
            Ok([sample.v_n, sample.m_n, sample.n_n, sample.z_n, g, w1, 0.0])
        }
        Model::Diffusion(sde) => {
            let n = spec.n;
            let path = solve(grid, &sde.sigma, &sde.drift, sde.x0, Scheme::Euler)?;
            let sd = (sde.jump_size / n as f64).sqrt();
            let overlay = sample_jumps(
                sde.jump_rate,
                JumpSize::Normal { sd },
                seed_stream(spec.seed, rep, Purpose::Jumps),
            )?;
            let observed = contaminate(&path, &overlay);
            let filt = FilterSpec::new(Filter::One, 0.5)?;
            let rv = robust_rv_with(&path, &observed, &filt)?;
            let dw = path.grid.coarse_increments();
            let h = 1.0 / n as f64;
            let mut mart = Kahan::new();
            for j in 1..=n {
                let b = sde.sigma.value(path.at_coarse(j - 1)).powi(2);
                mart.add(b * (dw[j - 1] * dw[j - 1] - h));
            }
            let rn = (n as f64).sqrt();
            let m_n = rn * mart.value();
            Ok([rv.u_n, m_n, rn * (rv.z_n - m_n), rv.z_n, rv.g_inf, w1, 0.0])
        }
    }
}

pub fn simulate_table(spec: &SimulateSpec) -> Result<Table> {
    let rows = crate::parallel::try_par_map(spec.reps, |rep| simulate_row(spec, rep))?;
    let mut t = Table::new(&["rep", "n", "v_n", "m_n", "n_n", "z_n", "G_inf", "w1"]);
    for (rep, r) in rows.iter().enumerate() {
        let mut cells = vec![rep.to_string(), spec.n.to_string()];
        cells.extend(r[..6].iter().map(|&v| fmt_f64(v)));
        t.row(&cells);
    }
    Ok(t)
}

fn path_dump(spec: &SimulateSpec) -> Result<Table> {
    let grid = sample_wiener(spec.n, spec.refine, spec.seed, 0)?;
    let dt = grid.dt();
    match &spec.model {
        Model::Brownian(_) => {
            let mut t = Table::new(&["t", "w"]);
            for (k, w) in grid.values.iter().enumerate() {
                t.row(&[fmt_f64(k as f64 * dt), fmt_f64(*w)]);
            }
            Ok(t)
        }
        Model::Diffusion(sde) => {
            let path = solve(grid, &sde.sigma, &sde.drift, sde.x0, Scheme::Euler)?;
            let mut t = Table::new(&["t", "w", "x"]);
            for (k, (w, x)) in path.grid.values.iter().zip(&path.x).enumerate() {
                t.row(&[fmt_f64(k as f64 * dt), fmt_f64(*w), fmt_f64(*x)]);
            }
            Ok(t)
        }
    }
}

fn run_simulate(s: &mut Settings, a: SimulateArgs, out: Option<&Path>) -> Result<i32> {
    let n: usize = s.get("n", a.n, "256")?;
    let refine: usize = s.get("refine", a.refine, "1")?;
    let reps: u64 = s.get("reps", a.reps, "1000")?;
    let seed: u64 = s.get("seed", a.seed, "1")?;
    let model: String = s.get("model", a.model, "bm")?;
    let model = match model.as_str() {
        "bm" => {
            let weight: WeightFn = s.get("weight", a.weight, "sin2")?;
            let kind: String = s.get("family", a.family, "anticipative")?;
            let qset: String = s.get("qset", a.qset, "2")?;
            let rate: f64 = s.get("jump-rate", a.jump_rate, "0")?;
            if rate != 0.0 {
                return Err(Error::InvalidParameter("jumps need --model sde".into()));
            }
            Model::Brownian(build_family(&kind, &qset, &weight)?)
        }
        "sde" => Model::Diffusion(SdeSpec {
            sigma: s.get("sigma", a.sigma, "const:1")?,
            drift: s.get("drift", a.drift, "const:0")?,
            x0: s.get("x0", a.x0, "0")?,
            jump_rate: s.get("jump-rate", a.jump_rate, "0")?,
            jump_size: s.get("jump-size", a.jump_size, "10")?,
        }),
        other => {
            return Err(Error::UnknownName {
                kind: "model",
                name: other.to_string(),
                catalog: "bm, sde",
            })
        }
    };
    if reps == 0 {
        return Err(Error::InvalidParameter("reps must be positive".into()));
    }
    let spec = SimulateSpec {
        model,
        n,
        refine,
        reps,
        seed,
    };
    let m = finish(s, "simulate")?;
    simulate_table(&spec)?.emit(out, &m)?;
    if let Some(p) = a.dump_path.as_deref() {
        path_dump(&spec)?.emit(Some(p), &m)?;
    }
    Ok(0)
}

fn expansion_setup(s: &mut Settings, a: &ExpansionArgs) -> Result<(WeightFamily, ExpansionConfig)> {
    let weight: WeightFn = s.get("weight", a.weight.as_ref(), "sin2")?;
    let kind: String = s.get("family", a.family.as_ref(), "anticipative")?;
    let qset: String = s.get("qset", a.qset.as_ref(), "2")?;
    let d = ExpansionConfig::default();
    let cfg = ExpansionConfig {
        reps: s.get("reps", a.reps, "10000")?,
        target_refine: s.get("refine", a.refine, &d.target_refine.to_string())?,
        approx_reps: s.get("approx-reps", a.approx_reps, "10000")?,
        approx_n: s.get("approx-n", a.approx_n, &d.approx_n.to_string())?,
        approx_refine: s.get(
            "approx-refine",
            a.approx_refine,
            &d.approx_refine.to_string(),
        )?,
        seed: s.get("seed", a.seed, "1")?,
    };
    if cfg.reps < 2 || cfg.approx_reps < 2 {
        return Err(Error::InvalidParameter(
            "replication counts must be at least 2".into(),
        ));
    }
    Ok((build_family(&kind, &qset, &weight)?, cfg))
}

const REPORT_COLUMNS: [&str; 8] = [
    "n", "f", "target", "se_t", "zeroth", "first", "err0", "err1",
];

fn report_cells(r: &ExpansionReport) -> Vec<String> {
    vec![
        r.n.to_string(),
        r.function.clone(),
        fmt_f64(r.target),
        fmt_f64(r.se_target),
        fmt_f64(r.zeroth),
        fmt_f64(r.first),
        fmt_f64(r.err0),
        fmt_f64(r.err1),
    ]
}

pub fn symbol_dump(approx: &[ApproxSample]) -> Table {
    let mut t = Table::new(&["rep", "a", "b", "coef"]);
    for (rep, sample) in approx.iter().enumerate() {
        for (c, (a, b)) in sample.coefs.iter().zip(MONOMIALS) {
            if *c != 0.0 {
                t.row(&[rep.to_string(), a.to_string(), b.to_string(), fmt_f64(*c)]);
            }
        }
    }
    t
}

pub fn density_table(approx: &[ApproxSample], n: usize, zgrid: &[f64]) -> Table {
    let mut t = Table::new(&["z", "p0", "p1"]);
    for (z, p0, p1) in expansion_density(approx, n, zgrid) {
        t.row(&[fmt_f64(z), fmt_f64(p0), fmt_f64(p1)]);
    }
    t
}

fn run_expand(s: &mut Settings, a: ExpandArgs, out: Option<&Path>) -> Result<i32> {
    let (fam, cfg) = expansion_setup(s, &a.common)?;
    let f: TestFunction = s.get("f", a.function, "z3")?;
    let n: usize = s.get("n", a.n, "256")?;
    let zgrid = match s.get_opt::<String>("zgrid", a.zgrid)? {
        Some(z) => Some(parse_zgrid(&z)?),
        None => None,
    };
    if zgrid.is_some() != a.density_out.is_some() {
        return Err(Error::InvalidParameter(
            "--zgrid and --density-out go together".into(),
        ));
    }
    let m = finish(s, "expand")?;
    let approx = approx_samples(&fam, &cfg)?;
    let targets = target_samples(&fam, n, &cfg)?;
    let report = assemble(&f, n, &targets, &approx)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let mut t = Table::new(&REPORT_COLUMNS);
    t.row(&report_cells(&report));
    t.emit(out, &m)?;
    if let (Some(z), Some(p)) = (zgrid, a.density_out.as_deref()) {
        density_table(&approx, n, &z).emit(Some(p), &m)?;
    }
    if let Some(p) = a.dump_symbols.as_deref() {
        symbol_dump(&approx).emit(Some(p), &m)?;
    }
    Ok(0)
}

fn run_compare(s: &mut Settings, a: CompareArgs, out: Option<&Path>) -> Result<i32> {
    let (fam, cfg) = expansion_setup(s, &a.common)?;
    let fs_raw: String = s.get("f", a.functions, "z2,z3,sinz,zx")?;
    let grid_raw: String = s.get("n-grid", a.n_grid, "64,256,1024")?;
    let functions: Vec<TestFunction> = fs_raw
        .split(',')
        .map(|p| p.trim().parse::<TestFunction>())
        .collect::<Result<_>>()?;
    let n_grid: Vec<usize> = parse_csv_list("n-grid", &grid_raw)?;
    let m = finish(s, "compare")?;
    let reports = compare_distributions(&fam, &n_grid, &functions, &cfg)?;
    let mut cols = REPORT_COLUMNS.to_vec();
    cols.extend(["se_err0", "se_err1", "scaled_err0", "scaled_err1"]);
    let mut t = Table::new(&cols);
    for r in &reports {
        let mut cells = report_cells(r);
        cells.extend([r.se_err0, r.se_err1, r.scaled_err0(), r.scaled_err1()].map(fmt_f64));
        t.row(&cells);
    }
    t.emit(out, &m)?;
    Ok(0)
}

pub fn robustvol_table(cfg: &RobustVolConfig, pass_band: f64) -> Result<(Table, Value)> {
    let rows = simulate_robust(cfg)?;
    let mut t = Table::new(&["rep", "u_n", "v_robust", "v_target", "z_n", "g_inf"]);
    for r in &rows {
        t.row(&[
            r.rep.to_string(),
            fmt_f64(r.u_n),
            fmt_f64(r.v_robust),
            fmt_f64(r.v_target),
            fmt_f64(r.z_n),
            fmt_f64(r.g_inf),
        ]);
    }
    let sm = summarize_robust(&rows, pass_band);
    let summary = json!({
        "reps": sm.reps,
        "bias_u_n": sm.bias_u,
        "se_bias_u_n": sm.se_bias_u,
        "bias_v_robust": sm.bias_v,
        "se_bias_v_robust": sm.se_bias_v,
        "rmse_u_n": sm.rmse_u,
        "rmse_v_robust": sm.rmse_v,
        "clean_pass_rate": sm.pass_rate,
        "pass_band": sm.pass_band,
    });
    Ok((t, summary))
}

fn run_robustvol(s: &mut Settings, a: RobustvolArgs, out: Option<&Path>) -> Result<i32> {
    let d = RobustVolConfig::default();
    let phi: Filter = s.get("phi", a.phi, &d.filter.phi.to_string())?;
    let lambda: f64 = s.get("lambda", a.lambda, &d.filter.lambda.to_string())?;
    let cfg = RobustVolConfig {
        sigma: s.get("sigma", a.sigma, "const:1")?,
        drift: s.get("drift", a.drift, "const:0")?,
        x0: s.get("x0", a.x0, "0")?,
        filter: FilterSpec::new(phi, lambda)?,
        n: s.get("n", a.n, &d.n.to_string())?,
        refine: s.get("refine", a.refine, &d.refine.to_string())?,
        reps: s.get("reps", a.reps, &d.reps.to_string())?,
        jump_rate: s.get("jump-rate", a.jump_rate, "0")?,
        jump_scale: s.get("jump-size", a.jump_size, &d.jump_scale.to_string())?,
        seed: s.get("seed", a.seed, "1")?,
    };
    let pass_band: f64 = s.get("pass-band", a.pass_band, "0.01")?;
    if !cfg.filter.phi.is_smooth() {
        eprintln!(
            "warning: filter '{}' is outside the smooth class",
            cfg.filter.phi
        );
    }
    let m = finish(s, "robustvol")?;
    let (t, summary) = robustvol_table(&cfg, pass_band)?;
    t.emit(out, &m)?;
    let text = serde_json::to_string_pretty(&json!({ "manifest": m, "summary": summary }))
        .map_err(|e| Error::Io(e.to_string()))?;
    match a.summary.as_deref() {
        Some(p) => fs::write(p, text + "\n")?,
        None => eprintln!("{text}"),
    }
    Ok(0)
}

/// Outcome of one self-test property.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((pass, detail)) => Check { name, pass, detail },
        Err(e) => Check {
            name,
            pass: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Fast deterministic property checks covering every module.
pub fn property_checks(seed: u64) -> Vec<Check> {
    vec![
        check("coeff3_vs_linearization", || {
            let mut worst = 0usize;
            for q1 in 0..=6u32 {
                for q2 in 0..=6 {
                    for q3 in 0..=6 {
                        let lin = linearize_product(&[q1, q2, q3])?;
                        let qbar = q1 + q2 + q3;
                        for nu in 0..=qbar / 2 {
                            let c = coeff3(q1, q2, q3, nu)?;
                            let l = lin.get(&(qbar - 2 * nu)).map_or(0, |t| t.coef);
                            worst += usize::from(c != l);
                        }
                        let top = if qbar % 2 == 0 {
                            coeff3(q1, q2, q3, qbar / 2)?
                        } else {
                            0
                        };
                        worst += usize::from(coeff3_top(q1, q2, q3)? != top);
                    }
                }
            }
            Ok((worst == 0, format!("{worst} mismatches")))
        }),
        check("product_formula_pointwise", || {
            let mut worst = 0.0_f64;
            for (k, d) in [-0.31, 0.07, 0.22, 0.5].iter().enumerate() {
                let orders = [1 + k as u32, 2, 3];
                let h = 1.0 / 16.0;
                let direct: f64 = orders
                    .iter()
                    .map(|&q| eval_multiple_integral(q as i32, *d, h))
                    .product::<Result<f64>>()?;
                let lin = eval_linearization(&linearize_product(&orders)?, *d, h)?;
                worst = worst.max((direct - lin).abs());
            }
            Ok((worst < 1e-12, format!("max abs diff {worst:.3e}")))
        }),
        check("catalog_exponents", || {
            let got: Vec<String> = ACCEPTANCE_FORMS
                .iter()
                .map(|f| f.exponent().to_string())
                .collect();
            Ok((got == ["0", "-1/2", "-1", "-3/2"], got.join(" ")))
        }),
        check("window_count_identity", || {
            let mut bad = 0;
            for n in [16usize, 37, 100, 256] {
                for m in 2..=n / 2 {
                    let total: usize = (1..=n)
                        .map(|j| {
                            let (lo, hi) = window_bounds(n, m, j);
                            hi + 1 - lo
                        })
                        .sum();
                    bad += usize::from(total != (2 * m - 1) * n - m * (m - 1));
                }
            }
            Ok((bad == 0, format!("{bad} mismatches")))
        }),
        check("filter_partials", || {
            for f in [
                "one",
                "const:0.5",
                "linear",
                "smoothcut:3,0.5",
                "smoothcut:1.5",
            ] {
                f.parse::<Filter>()?.check_partials()?;
            }
            Ok((true, "finite differences agree".into()))
        }),
        check("weight_catalog_derivatives", || {
            for w in ["const:2", "linear", "sin2", "poly:1,0.5,0.25"] {
                WeightFamily::new(FamilyKind::Anticipative, vec![(2, w.parse()?)])?;
            }
            Ok((true, "closed-form derivatives verified".into()))
        }),
        check("unit_weight_symbol", || {
            let fam = WeightFamily::new(FamilyKind::Constant, vec![(2, WeightFn::Const(1.0))])?;
            let grid = sample_wiener(16, 4, seed, 0)?;
            let (sym, g) = full_symbol_with_variance(&fam, &grid, SymbolTarget::Variation)?;
            let c = sym.coef(3, 0);
            let others = sym
                .terms()
                .filter(|((a, b), v)| *b == 0 && *a != 3 && *v != 0.0)
                .count();
            let ok = (c - 4.0 / 3.0).abs() < 1e-12 && (g - 2.0).abs() < 1e-12 && others == 0;
            Ok((ok, format!("c30 = {c}, G = {g}")))
        }),
        check("edgeworth_density_identity", || {
            let n = 256usize;
            let zs = linspace(-6.0, 6.0, 48);
            let mut worst = 0.0_f64;
            for (z, _, p1) in expansion_density(&[unit_weight_sample()], n, &zs) {
                let u = z / std::f64::consts::SQRT_2;
                let he3 = u * u * u - 3.0 * u;
                let base = normal_pdf(u) / std::f64::consts::SQRT_2;
                let want = base * (1.0 + (4.0 / 3.0) * 2f64.powf(-1.5) * he3 / (n as f64).sqrt());
                worst = worst.max((p1 - want).abs());
            }
            Ok((worst < 1e-10, format!("max abs diff {worst:.3e}")))
        }),
        check("seed_streams", || {
            let a = sample_wiener(8, 2, seed, 3)?;
            let b = sample_wiener(8, 2, seed, 3)?;
            let c = sample_wiener(8, 2, seed, 4)?;
            let key = |p| seed_stream(seed, 3, p).rng();
            use rand::Rng;
            let (x, y): (u64, u64) = (key(Purpose::Path).random(), key(Purpose::Zeta).random());
            Ok((
                a == b && a.dw != c.dw && x != y,
                "same key repeats, distinct keys differ".into(),
            ))
        }),
        check("quadratic_error_decomposition", || {
            let fam = WeightFamily::anticipative_quadratic(WeightFn::Sin2)?;
            let grid = sample_wiener(64, 8, seed, 1)?;
            let q = quadratic_error(&fam, &grid)?;
            let s = q.sample;
            let gap = (s.z_n - s.m_n - s.n_n / 8.0).abs();
            Ok((gap < 1e-10, format!("|z - m - n/sqrt(n)| = {gap:.3e}")))
        }),
        check("identity_filter_collapse", || {
            let grid = sample_wiener(128, 2, seed, 2)?;
            let path = solve(
                grid,
                &CoefFn::Tanh {
                    base: 1.0,
                    amp: 0.1,
                },
                &CoefFn::Const(0.0),
                0.0,
                Scheme::Euler,
            )?;
            let rv = robust_rv(&path, &FilterSpec::new(Filter::One, 0.05)?)?;
            Ok((
                rv.v_robust == rv.u_n,
                format!("v = {}, u = {}", rv.v_robust, rv.u_n),
            ))
        }),
        check("tangent_vs_bump_derivative", || {
            let grid = sample_wiener(32, 4, seed, 5)?;
            let sigma = CoefFn::Tanh {
                base: 1.0,
                amp: 0.3,
            };
            let path = solve(
                grid,
                &sigma,
                &CoefFn::Linear(0.1, -0.2),
                0.2,
                Scheme::Milstein,
            )?;
            let filt = FilterSpec::new(Filter::Linear, 0.1)?;
            let t = error_expansion_terms(&path, &filt, Derivative::Tangent)?;
            let b = error_expansion_terms(&path, &filt, Derivative::Bump { eps: 1e-4 })?;
            let gap = t
                .d_theta_beta
                .iter()
                .zip(&b.d_theta_beta)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            Ok((gap < 1e-6, format!("max abs diff {gap:.3e}")))
        }),
        check("unit_coefficient_expansion", || {
            let grid = sample_wiener(64, 4, seed, 6)?;
            let path = solve(
                grid,
                &CoefFn::Const(1.0),
                &CoefFn::Const(0.0),
                0.0,
                Scheme::Euler,
            )?;
            let t = error_expansion_terms(
                &path,
                &FilterSpec::new(Filter::One, 0.1)?,
                Derivative::Tangent,
            )?;
            Ok((
                t.residual.abs() < 1e-12 && t.n_x == 0.0,
                format!("residual {:.3e}", t.residual),
            ))
        }),
    ]
}

/// Single-path approximation sample with the unit-weight symbol.
fn unit_weight_sample() -> ApproxSample {
    ApproxSample {
        g: 2.0,
        x: 0.0,
        coefs: [0.0, 0.0, 0.0, 4.0 / 3.0, 0.0, 0.0],
    }
}

fn run_selftest(s: &mut Settings, a: SelftestArgs) -> Result<i32> {
    let seed: u64 = s.get("seed", a.seed, "1")?;
    let config = std::mem::take(s).finish()?;
    let code = selftest(seed, &config, &a.out_dir)?;
    Ok(code)
}

/// Run the property checks and write the artifacts into `dir`. Returns 0
/// when every check passes and 3 otherwise.
pub fn selftest(seed: u64, config: &BTreeMap<String, String>, dir: &Path) -> Result<i32> {
    fs::create_dir_all(dir)?;
    let checks = property_checks(seed);
    let mut t = Table::new(&["check", "status", "detail"]);
    for c in &checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        eprintln!("{status} {}: {}", c.name, c.detail);
        t.row(&[
            c.name.to_string(),
            status.to_string(),
            c.detail.replace(',', ";"),
        ]);
    }
    t.emit(Some(&dir.join("checks.csv")), &manifest("selftest", config))?;

    let sub = |name: &str, extra: &[(&str, String)]| {
        let mut cfg = config.clone();
        for (k, v) in extra {
            cfg.insert((*k).to_string(), v.clone());
        }
        manifest(&format!("selftest/{name}"), &cfg)
    };

    coeff_csv(4)?.emit(
        Some(&dir.join("coeff.csv")),
        &sub("coeff", &[("max-q", "4".into())]),
    )?;

    let (rt, _) = rates_table(RateForm::SecondChaos, &[16, 32, 64], 200, 2, seed)?;
    rt.emit(
        Some(&dir.join("rates.csv")),
        &sub(
            "rates",
            &[
                ("form", "chaos2".into()),
                ("n-grid", "16,32,64".into()),
                ("reps", "200".into()),
                ("p", "2".into()),
            ],
        ),
    )?;

    let fam = WeightFamily::anticipative_quadratic(WeightFn::Sin2)?;
    let spec = SimulateSpec {
        model: Model::Brownian(fam.clone()),
        n: 64,
        refine: 2,
        reps: 200,
        seed,
    };
    simulate_table(&spec)?.emit(
        Some(&dir.join("simulate.csv")),
        &sub(
            "simulate",
            &[
                ("weight", "sin2".into()),
                ("family", "anticipative".into()),
                ("qset", "2".into()),
                ("n", "64".into()),
                ("refine", "2".into()),
                ("reps", "200".into()),
            ],
        ),
    )?;

    let cfg = ExpansionConfig {
        reps: 400,
        target_refine: 4,
        approx_reps: 200,
        approx_n: 16,
        approx_refine: 4,
        seed,
    };
    let approx = approx_samples(&fam, &cfg)?;
    let targets = target_samples(&fam, 64, &cfg)?;
    let mut et = Table::new(&REPORT_COLUMNS);
    for f in [
        TestFunction::Z2,
        TestFunction::Z3,
        TestFunction::SinZ,
        TestFunction::ZX,
    ] {
        et.row(&report_cells(&assemble(&f, 64, &targets, &approx)?));
    }
    let em = sub(
        "expand",
        &[
            ("weight", "sin2".into()),
            ("f", "z2,z3,sinz,zx".into()),
            ("n", "64".into()),
            ("reps", "400".into()),
            ("refine", "4".into()),
            ("approx-reps", "200".into()),
            ("approx-n", "16".into()),
            ("approx-refine", "4".into()),
            ("zgrid", "-4:4:32".into()),
        ],
    );
    et.emit(Some(&dir.join("expand.csv")), &em)?;
    density_table(&approx, 64, &linspace(-4.0, 4.0, 32))
        .emit(Some(&dir.join("density.csv")), &em)?;
    symbol_dump(&approx).emit(Some(&dir.join("symbols.csv")), &em)?;

    let rcfg = RobustVolConfig {
        sigma: CoefFn::Tanh {
            base: 1.0,
            amp: 0.1,
        },
        filter: FilterSpec::new(Filter::SmoothCut { c: 3.0, c0: 0.5 }, 0.02)?,
        n: 256,
        refine: 2,
        reps: 100,
        jump_rate: 5.0,
        seed,
        ..RobustVolConfig::default()
    };
    let (vt, _) = robustvol_table(&rcfg, 0.01)?;
    vt.emit(
        Some(&dir.join("robustvol.csv")),
        &sub(
            "robustvol",
            &[
                ("sigma", "tanh:1,0.1".into()),
                ("phi", rcfg.filter.phi.to_string()),
                ("lambda", "0.02".into()),
                ("n", "256".into()),
                ("refine", "2".into()),
                ("reps", "100".into()),
                ("jump-rate", "5".into()),
                ("jump-size", rcfg.jump_scale.to_string()),
                ("pass-band", "0.01".into()),
            ],
        ),
    )?;

    let failed = checks.iter().filter(|c| !c.pass).count();
    eprintln!(
        "{} of {} checks passed",
        checks.len() - failed,
        checks.len()
    );
    Ok(if failed == 0 { 0 } else { 3 })
}
