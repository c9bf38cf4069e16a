//! Command-line front end.
//!
//! Every command reads an optional JSON config (`--config`), runs, and writes
//! one JSON document to `--out` (stdout when absent) that embeds the resolved
//! config and seed. Exit codes: 0 success, 1 estimation failure, 2 config error.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::estimator::{alpha_covariance, estimate, Backend, BcdConfig, MiqpForm};
use crate::inference::{bootstrap_lr, linearity_test, BootstrapConfig, FactorMode, FactorSource, HypothesisSpec, LinearityConfig};
use crate::io::{read_matrix, read_vector, write_lines, write_matrix};
use crate::model::{with_constant, Dataset, SearchSpace, DEFAULT_EPS, DEFAULT_GAMMA_BOUND, DEFAULT_TAU1, DEFAULT_TAU2};
use crate::optim::SolverConfig;
use crate::pca::{estimate_factors, threshold_covariance, FactorEstimate};
use crate::selection::{select_factors, SelectionConfig};
use crate::simulate::{drift_function, generate_dgp, run_monte_carlo, run_test_study, DgpConfig, DriftConfig, McConfig, Scenario, TestStudy};

pub const THREADS_ENV: &str = "TWOREGIME_THREADS";

#[derive(Debug, Parser)]
#[command(name = "tworegime", version, about = "Factor-driven two-regime regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON config for the command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 gives bit-identical reruns.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// Result file (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Draw one data set and write it as CSV files.
    Simulate,
    /// Least-squares fit of the two-regime model.
    Estimate,
    /// Bootstrap LR test of a linear hypothesis on the threshold index.
    Bootstrap,
    /// Sup-Q bootstrap test of no threshold effect.
    TestLinearity,
    /// Penalised selection of threshold factors.
    SelectFactors,
    /// Monte Carlo study.
    Montecarlo,
    /// Drift function curve.
    Drift,
}

/// Where the data come from. Regressor files hold the non-constant columns
/// (the intercept is added); factor files hold the factors without the
/// trailing constant (the `−1` column is added).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub y: PathBuf,
    #[serde(default)]
    pub x: Option<PathBuf>,
    #[serde(default)]
    pub factors: Option<PathBuf>,
    /// `T×N` panel for PCA factors, used when `factors` is absent.
    #[serde(default)]
    pub panel: Option<PathBuf>,
    /// Number of PCA factors.
    #[serde(default)]
    pub k: Option<usize>,
    /// Threshold constant for the residual covariance.
    #[serde(default = "default_c_thresh")]
    pub c_thresh: f64,
}

fn default_c_thresh() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpaceSpec {
    pub tau1: f64,
    pub tau2: f64,
    /// Symmetric bound on every free threshold coefficient.
    pub gamma_bound: f64,
    pub gamma_lo: Option<Vec<f64>>,
    pub gamma_hi: Option<Vec<f64>>,
    /// Symmetric bound on every regression coefficient; `None` scales with the OLS fit.
    pub alpha_bound: Option<f64>,
    pub eps: f64,
}

impl Default for SpaceSpec {
    fn default() -> Self {
        Self { tau1: DEFAULT_TAU1, tau2: DEFAULT_TAU2, gamma_bound: DEFAULT_GAMMA_BOUND, gamma_lo: None, gamma_hi: None, alpha_bound: None, eps: DEFAULT_EPS }
    }
}

impl SpaceSpec {
    pub fn build(&self, ds: &Dataset, df: usize) -> Result<SearchSpace> {
        let mut s = SearchSpace::default_for(ds, df)?;
        s.tau1 = self.tau1;
        s.tau2 = self.tau2;
        s.eps_strict = self.eps;
        s.gamma2_lo = self.gamma_lo.clone().unwrap_or_else(|| vec![-self.gamma_bound; df - 1]);
        s.gamma2_hi = self.gamma_hi.clone().unwrap_or_else(|| vec![self.gamma_bound; df - 1]);
        if s.gamma2_lo.len() != df - 1 || s.gamma2_hi.len() != df - 1 {
            return Err(cfg_err("space.gamma_lo", format!("need {} entries, one per free threshold coefficient", df - 1)));
        }
        if let Some(b) = self.alpha_bound {
            s.alpha_lo = vec![-b; 2 * ds.dx()];
            s.alpha_hi = vec![b; 2 * ds.dx()];
        }
        s.validate().map_err(|e| cfg_err("space", e.to_string()))?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateCmd {
    pub data: DataSpec,
    #[serde(default)]
    pub space: SpaceSpec,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default)]
    pub form: MiqpForm,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub bcd: BcdConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapCmd {
    pub data: DataSpec,
    #[serde(default)]
    pub space: SpaceSpec,
    /// Defaults to a zero coefficient on the second factor column.
    #[serde(default)]
    pub hypothesis: Option<HypothesisSpec>,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    /// One LR* per line.
    #[serde(default)]
    pub draws_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearityCmd {
    pub data: DataSpec,
    #[serde(default)]
    pub space: SpaceSpec,
    #[serde(default)]
    pub linearity: LinearityConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub draws_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectCmd {
    pub data: DataSpec,
    #[serde(default)]
    pub space: SpaceSpec,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateCmd {
    pub dgp: DgpConfig,
    /// Replication stream to draw.
    pub rep: usize,
    /// Directory for `y.csv`, `x.csv`, `factors.csv`, `panel.csv` and `d_true.csv`.
    pub dir: PathBuf,
}

impl Default for SimulateCmd {
    fn default() -> Self {
        Self { dgp: DgpConfig::baseline(), rep: 0, dir: PathBuf::from("sim") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloCmd {
    pub mc: McConfig,
    /// Estimation study; exactly one of `scenario` and `study` is set.
    pub scenario: Option<Scenario>,
    /// Test-size or power study.
    pub study: Option<TestStudy>,
    pub bootstrap: BootstrapConfig,
    pub linearity: LinearityConfig,
    pub solver: SolverConfig,
    /// Per-replication errors as CSV.
    pub records_csv: Option<PathBuf>,
}

impl Default for MonteCarloCmd {
    fn default() -> Self {
        Self {
            mc: McConfig::default(),
            scenario: Some(Scenario::Oracle),
            study: None,
            bootstrap: BootstrapConfig::default(),
            linearity: LinearityConfig::default(),
            solver: SolverConfig::default(),
            records_csv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftCmd {
    pub drift: DriftConfig,
    /// Columns `g,a,se`.
    pub curve_csv: Option<PathBuf>,
}

impl Default for DriftCmd {
    fn default() -> Self {
        Self { drift: DriftConfig::default(), curve_csv: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum RunConfig {
    Simulate(SimulateCmd),
    Estimate(EstimateCmd),
    Bootstrap(BootstrapCmd),
    TestLinearity(LinearityCmd),
    SelectFactors(SelectCmd),
    Montecarlo(MonteCarloCmd),
    Drift(DriftCmd),
}

fn cfg_err(path: &str, msg: impl Into<String>) -> Error {
    Error::Config { path: path.into(), msg: msg.into() }
}

fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        cfg_err(if path.is_empty() { "." } else { &path }, e.into_inner().to_string())
    })
}

fn check_file(path: &Path, field: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(cfg_err(field, format!("file {} does not exist", path.display())))
    }
}

fn check_data(d: &DataSpec) -> Result<()> {
    check_file(&d.y, "data.y")?;
    for (p, name) in [(&d.x, "data.x"), (&d.factors, "data.factors"), (&d.panel, "data.panel")] {
        if let Some(p) = p {
            check_file(p, name)?;
        }
    }
    match (&d.factors, &d.panel, d.k) {
        (None, None, _) => Err(cfg_err("data", "either `factors` or `panel` is required")),
        (None, Some(_), None) => Err(cfg_err("data.k", "a panel needs the number of factors `k`")),
        (None, Some(_), Some(0)) => Err(cfg_err("data.k", "k must be positive")),
        _ => Ok(()),
    }
}

fn ranged(r: Result<()>, field: &str) -> Result<()> {
    r.map_err(|e| cfg_err(field, e.to_string()))
}

/// Parses and validates the config for `command`; `None` gives the defaults.
pub fn parse_config(command: Command, text: Option<&str>) -> Result<RunConfig> {
    let need = || text.ok_or_else(|| cfg_err(".", "this command needs --config"));
    let text_or_empty = text.unwrap_or("{}");
    let cfg = match command {
        Command::Simulate => RunConfig::Simulate(from_json(text_or_empty)?),
        Command::Estimate => RunConfig::Estimate(from_json(need()?)?),
        Command::Bootstrap => RunConfig::Bootstrap(from_json(need()?)?),
        Command::TestLinearity => RunConfig::TestLinearity(from_json(need()?)?),
        Command::SelectFactors => RunConfig::SelectFactors(from_json(need()?)?),
        Command::Montecarlo => RunConfig::Montecarlo(from_json(text_or_empty)?),
        Command::Drift => RunConfig::Drift(from_json(text_or_empty)?),
    };
    match &cfg {
        RunConfig::Simulate(c) => ranged(c.dgp.validate(), "dgp")?,
        RunConfig::Estimate(c) => {
            check_data(&c.data)?;
            ranged(c.solver.validate(), "solver")?;
            ranged(c.bcd.validate(), "bcd")?;
        }
        RunConfig::Bootstrap(c) => {
            check_data(&c.data)?;
            ranged(c.bootstrap.validate(), "bootstrap")?;
            ranged(c.solver.validate(), "solver")?;
            if c.bootstrap.factor_mode != FactorMode::Known && c.data.factors.is_some() {
                return Err(cfg_err("bootstrap.factor_mode", "factor re-estimation needs a panel instead of observed factors"));
            }
        }
        RunConfig::TestLinearity(c) => {
            check_data(&c.data)?;
            ranged(c.solver.validate(), "solver")?;
            if c.linearity.b == 0 {
                return Err(cfg_err("linearity.b", "need at least one bootstrap replication"));
            }
        }
        RunConfig::SelectFactors(c) => {
            check_data(&c.data)?;
            ranged(c.solver.validate(), "solver")?;
        }
        RunConfig::Montecarlo(c) => {
            ranged(c.mc.dgp.validate(), "mc.dgp")?;
            if c.mc.reps == 0 {
                return Err(cfg_err("mc.reps", "must be positive"));
            }
            if c.scenario.is_some() == c.study.is_some() {
                return Err(cfg_err("scenario", "set exactly one of `scenario` and `study`"));
            }
            if c.study.is_some() {
                ranged(c.bootstrap.validate(), "bootstrap")?;
            }
        }
        RunConfig::Drift(c) => {
            if !(c.drift.omega >= 0.0) || c.drift.mc_draws == 0 || !(c.drift.sigma_h > 0.0) {
                return Err(cfg_err("drift", "need omega >= 0, mc_draws >= 1 and sigma_h > 0"));
            }
        }
    }
    Ok(cfg)
}

/// Applies `--seed` to every seed field and returns the seed in effect.
fn apply_seed(cfg: &mut RunConfig, seed: Option<u64>) -> u64 {
    let slot: &mut u64 = match cfg {
        RunConfig::Simulate(c) => &mut c.dgp.seed,
        RunConfig::Bootstrap(c) => &mut c.bootstrap.seed,
        RunConfig::TestLinearity(c) => &mut c.linearity.seed,
        RunConfig::Montecarlo(c) => {
            if let Some(s) = seed {
                c.bootstrap.seed = s;
                c.linearity.seed = s;
            }
            &mut c.mc.dgp.seed
        }
        RunConfig::Drift(c) => &mut c.drift.seed,
        RunConfig::Estimate(_) | RunConfig::SelectFactors(_) => return seed.unwrap_or(0),
    };
    if let Some(s) = seed {
        *slot = s;
    }
    *slot
}

struct Loaded {
    ds: Dataset,
    factors: DMatrix<f64>,
    fe: Option<FactorEstimate>,
    sigma_e: Option<DMatrix<f64>>,
}

fn load(d: &DataSpec, need_sigma: bool) -> Result<Loaded> {
    let y = read_vector(&d.y)?;
    let t = y.len();
    let x = match &d.x {
        Some(p) => {
            let raw = read_matrix(p)?;
            if raw.nrows() != t {
                return Err(cfg_err("data.x", format!("{} rows, y has {t}", raw.nrows())));
            }
            DMatrix::from_fn(t, raw.ncols() + 1, |r, c| if c == 0 { 1.0 } else { raw[(r, c - 1)] })
        }
        None => DMatrix::from_element(t, 1, 1.0),
    };
    let panel = d.panel.as_ref().map(|p| read_matrix(p)).transpose()?;
    let (factors, fe) = match (&d.factors, &panel) {
        (Some(p), _) => (with_constant(&read_matrix(p)?), None),
        (None, Some(pm)) => {
            let fe = estimate_factors(pm, d.k.unwrap_or(1))?;
            (fe.f_full.clone(), Some(fe))
        }
        (None, None) => return Err(cfg_err("data", "either `factors` or `panel` is required")),
    };
    let sigma_e = match (&fe, need_sigma) {
        (Some(fe), true) => Some(threshold_covariance(&fe.e, d.c_thresh)?),
        _ => None,
    };
    let ds = Dataset::new(y, x, Some(factors.clone()), panel)?;
    Ok(Loaded { ds, factors, fe, sigma_e })
}

fn standard_errors(ds: &Dataset, f: &DMatrix<f64>, r: &crate::model::EstimationResult) -> Option<Vec<f64>> {
    alpha_covariance(ds, f, r).ok().map(|v| (0..v.nrows()).map(|i| v[(i, i)].max(0.0).sqrt()).collect())
}

fn dispatch(cfg: &RunConfig) -> Result<Value> {
    match cfg {
        RunConfig::Simulate(c) => {
            let dgp = c.dgp.resolve()?;
            let sim = generate_dgp(&dgp, &mut crate::inference::replication_rng(c.dgp.seed, c.rep))?;
            std::fs::create_dir_all(&c.dir)?;
            let ds = &sim.data;
            let (t, dx) = (ds.t(), ds.dx());
            write_lines(&c.dir.join("y.csv"), ds.y.as_slice())?;
            if dx > 1 {
                write_matrix(&c.dir.join("x.csv"), &ds.x.columns(1, dx - 1).into_owned(), None)?;
            }
            write_matrix(&c.dir.join("factors.csv"), &sim.g_true, None)?;
            if let Some(p) = &ds.panel {
                write_matrix(&c.dir.join("panel.csv"), p, None)?;
            }
            let d: Vec<f64> = sim.d_true.iter().map(|&v| v as f64).collect();
            write_lines(&c.dir.join("d_true.csv"), &d)?;
            Ok(json!({ "t": t, "dir": c.dir, "d_true": sim.d_true, "params_true": sim.params_true, "rho_g": dgp.rho_g }))
        }
        RunConfig::Estimate(c) => {
            let l = load(&c.data, false)?;
            let space = c.space.build(&l.ds, l.factors.ncols())?;
            let r = estimate(&l.ds, &l.factors, &space, c.backend, c.form, &c.solver, &c.bcd)?;
            let se = standard_errors(&l.ds, &l.factors, &r);
            Ok(json!({ "result": r, "alpha_se": se }))
        }
        RunConfig::Bootstrap(c) => {
            let l = load(&c.data, c.bootstrap.factor_mode != FactorMode::Known)?;
            let space = c.space.build(&l.ds, l.factors.ncols())?;
            let h = c.hypothesis.clone().unwrap_or_else(|| HypothesisSpec::zero(l.factors.ncols(), 0));
            let source = match (&l.fe, &l.sigma_e) {
                (Some(fe), Some(s)) => FactorSource::Estimated { fe, sigma_e: s },
                _ => FactorSource::Observed(&l.factors),
            };
            let out = bootstrap_lr(&l.ds, source, &space, &h, &c.bootstrap, &c.solver)?;
            if let Some(p) = &c.draws_csv {
                write_lines(p, &out.draws)?;
            }
            Ok(json!({ "hypothesis": h, "result": out }))
        }
        RunConfig::TestLinearity(c) => {
            let l = load(&c.data, false)?;
            let space = c.space.build(&l.ds, l.factors.ncols())?;
            let out = linearity_test(&l.ds, &l.factors, &space, &c.linearity, &c.solver)?;
            if let Some(p) = &c.draws_csv {
                write_lines(p, &out.draws)?;
            }
            Ok(json!({ "result": out }))
        }
        RunConfig::SelectFactors(c) => {
            let l = load(&c.data, false)?;
            let space = c.space.build(&l.ds, l.factors.ncols())?;
            let out = select_factors(&l.ds, &l.factors, &space, &c.selection, &c.solver)?;
            Ok(json!({ "result": out }))
        }
        RunConfig::Montecarlo(c) => {
            let rep = match (c.scenario, c.study) {
                (Some(s), _) => run_monte_carlo(s, &c.mc, &c.solver)?,
                (None, Some(st)) => run_test_study(st, &c.mc, &c.bootstrap, &c.linearity, &c.solver)?,
                (None, None) => return Err(cfg_err("scenario", "set exactly one of `scenario` and `study`")),
            };
            if let Some(p) = &c.records_csv {
                write_records(p, &rep)?;
            }
            Ok(json!({ "report": rep }))
        }
        RunConfig::Drift(c) => {
            let curve = drift_function(&c.drift)?;
            if let Some(p) = &c.curve_csv {
                let m = DMatrix::from_fn(curve.g.len(), 3, |i, j| [curve.g[i], curve.a[i], curve.se[i]][j]);
                write_matrix(p, &m, Some(&["g".into(), "a".into(), "se".into()]))?;
            }
            Ok(json!({ "curve": curve }))
        }
    }
}

fn write_records(path: &Path, rep: &crate::simulate::McReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let names = rep.records.first().map(|r| r.names.clone()).unwrap_or_default();
    let mut header = vec!["rep".to_string()];
    header.extend(names.iter().map(|n| format!("err_{n}")));
    header.extend(["accuracy", "selected_correct", "reject", "p_value"].map(String::from));
    w.write_record(&header)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for (i, r) in rep.records.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(r.errors.iter().map(|e| format!("{e:.17e}")));
        row.push(opt(r.accuracy.map(|v| v.to_string())));
        row.push(opt(r.selected_correct.map(|v| v.to_string())));
        row.push(opt(r.reject.map(|v| v.to_string())));
        row.push(opt(r.p_value.map(|v| v.to_string())));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn status_of(e: &Error) -> &'static str {
    match e {
        Error::Infeasible(_) => "Infeasible",
        Error::Solver(_) => "SolverFailure",
        _ => "Error",
    }
}

fn emit(out: Option<&Path>, doc: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(doc)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let text = match &cli.config {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => Some(t),
            Err(e) => {
                eprintln!("error: {}", cfg_err("--config", format!("cannot read {}: {e}", p.display())));
                return 2;
            }
        },
        None => None,
    };
    let mut cfg = match parse_config(cli.command, text.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let seed = apply_seed(&mut cfg, cli.seed);
    let threads = cli.threads.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}", cfg_err("--threads", e.to_string()));
            return 2;
        }
    };
    let outcome = pool.install(|| dispatch(&cfg));
    let mut doc = json!({ "command": cli.command, "seed": seed, "threads": pool.current_num_threads(), "config": cfg });
    let code = match outcome {
        Ok(v) => {
            doc["status"] = json!("Ok");
            if let Value::Object(m) = v {
                for (k, val) in m {
                    doc[k] = val;
                }
            }
            0
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            return 2;
        }
        Err(e) => {
            eprintln!("error: {e}");
            doc["status"] = json!(status_of(&e));
            doc["error"] = json!(e.to_string());
            1
        }
    };
    if let Err(e) = emit(cli.out.as_deref(), &doc) {
        eprintln!("error: cannot write result: {e}");
        return 1;
    }
    code
}

pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            code
        }
    }
}

/// Reads the `d` vector back from a result document.
pub fn regimes_from_result(doc: &Value) -> Option<Vec<u8>> {
    let d = doc.get("result")?.get("d")?.as_array()?;
    d.iter().map(|v| v.as_u64().map(|x| x as u8)).collect()
}
