//! Subcommand configs, runs and artifact writing.
//!
//! Every run computes its results before touching the output directory, so a
//! rejected config or an exceeded cap leaves no artifacts behind.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use critbbm::bbm_engine::{self, EngineLimits, ReplicaRow};
use critbbm::extremal_sampler::{self, DecorationParams, SampleManifest, ShiftLaw};
use critbbm::fkpp::{self, ConstantReport, Grid, Initial, CF_SCHEDULE};
use critbbm::invariance_lab::{self, BasinFamily, InvarianceOptions, SamplerSpec, PASS_FRACTION};
use critbbm::point_process::{Sidecar, StepFunction};
use critbbm::seeds;
use critbbm::verify::{self, Context, CriterionOutcome, VerifyOptions};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Common, InitialKind};

#[derive(Debug)]
pub enum CliError {
    Schema(String),
    Run(critbbm::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Run(e) => run_code(e),
        }
    }
}

fn run_code(e: &critbbm::Error) -> u8 {
    match e {
        critbbm::Error::InvalidParameter(_) => 2,
        critbbm::Error::ResourceCap(_) => 3,
        critbbm::Error::Sampler { source, .. } => run_code(source),
        _ => 4,
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Schema(m) => write!(f, "config: {m}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<critbbm::Error> for CliError {
    fn from(e: critbbm::Error) -> Self {
        CliError::Run(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Whether the run's checks passed.
pub struct Status(bool);

impl From<Status> for ExitCode {
    fn from(s: Status) -> Self {
        if s.0 {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(1)
        }
    }
}

fn load<T: DeserializeOwned>(path: Option<&Path>) -> Result<T> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::Schema(format!("{}: {e}", p.display())))?,
        None => "{}".to_string(),
    };
    serde_json::from_str(&text).map_err(|e| CliError::Schema(e.to_string()))
}

fn check_out(out: &Path) -> Result<()> {
    if out.exists() && fs::read_dir(out).map_or(true, |mut d| d.next().is_some()) {
        return Err(CliError::Schema(format!("output directory {} is not empty", out.display())));
    }
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    subcommand: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a C,
    artifacts: Vec<String>,
}

/// Output directory collecting artifact names for the manifest.
struct Outputs {
    dir: PathBuf,
    names: Vec<String>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs { dir: dir.to_path_buf(), names: Vec::new() })
    }

    fn path(&mut self, name: impl Into<String>) -> PathBuf {
        let name = name.into();
        let p = self.dir.join(&name);
        self.names.push(name);
        p
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(critbbm::Error::from)?;
        fs::write(self.path(name), text)?;
        Ok(())
    }

    fn finish<C: Serialize>(mut self, subcommand: &str, seed: u64, config: &C) -> Result<()> {
        let artifacts = std::mem::take(&mut self.names);
        let m = Manifest { subcommand, version: env!("CARGO_PKG_VERSION"), seed, config, artifacts };
        self.json("manifest.json", &m)
    }
}

fn default_replicas() -> usize {
    1000
}

fn default_barrier() -> Option<f64> {
    Some(bbm_engine::DEFAULT_BARRIER)
}

fn yes() -> bool {
    true
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    t: f64,
    #[serde(default = "default_replicas")]
    replicas: usize,
    #[serde(default)]
    start: f64,
    #[serde(default = "yes")]
    drift: bool,
    /// `null` disables pruning.
    #[serde(default = "default_barrier")]
    barrier_depth: Option<f64>,
    #[serde(default)]
    limits: EngineLimits,
}

pub fn simulate(c: &Common) -> Result<Status> {
    let cfg: SimulateConfig = load(c.config.as_deref())?;
    check_out(&c.out)?;
    let depth = cfg.barrier_depth.unwrap_or(f64::INFINITY);
    let rows = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|i| {
            let seed = seeds::derive(c.seed, &[i]);
            let s = bbm_engine::evolve_single_with(cfg.start, cfg.t, cfg.drift, depth, seed, &cfg.limits)?;
            Ok(ReplicaRow::new(seed, cfg.t, &s))
        })
        .collect::<critbbm::Result<Vec<_>>>()?;
    let mut out = Outputs::create(&c.out)?;
    bbm_engine::write_replicas(&rows, &out.path("replicas.csv"))?;
    out.finish("simulate", c.seed, &cfg)?;
    Ok(Status(true))
}

fn default_horizon() -> f64 {
    40.0
}

fn default_schedule() -> Vec<f64> {
    CF_SCHEDULE.to_vec()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FkppConfig {
    #[serde(default = "step")]
    initial: Initial,
    #[serde(rename = "T", default = "default_horizon")]
    horizon: f64,
    /// Extra times at which the field is written.
    #[serde(default)]
    checkpoints: Vec<f64>,
    #[serde(default)]
    grid: Option<Grid>,
    /// `r` values of the `C(f)` table for non-step data.
    #[serde(default = "default_schedule")]
    r_schedule: Vec<f64>,
}

fn step() -> Initial {
    Initial::Step
}

pub fn fkpp(c: &Common, initial: Option<InitialKind>, horizon: Option<f64>) -> Result<Status> {
    let mut cfg: FkppConfig = load(c.config.as_deref())?;
    if let Some(InitialKind::Step) = initial {
        cfg.initial = Initial::Step;
    }
    if let Some(t) = horizon {
        cfg.horizon = t;
    }
    check_out(&c.out)?;
    let grid = cfg.grid.unwrap_or_else(|| Grid::for_horizon(cfg.horizon));
    cfg.grid = Some(grid);
    let with_cf = matches!(cfg.initial, Initial::FromStepFunction { .. });
    let mut times = cfg.checkpoints.clone();
    times.push(cfg.horizon);
    if with_cf {
        times.extend(&cfg.r_schedule);
    }
    let field = fkpp::solve(&cfg.initial, &times, grid)?;
    let wave = (cfg.horizon >= 8.0).then(|| fkpp::wave_profile(&field, cfg.horizon)).transpose()?;
    let constant = match &cfg.initial {
        Initial::Step if cfg.horizon >= 40.0 => {
            let cm = fkpp::estimate_cm(&field, cfg.horizon)?;
            Some(ConstantReport { value: cm.value, per_r: Vec::new(), flatness: Some(cm.flatness), grid })
        }
        Initial::FromStepFunction { .. } => {
            let cf = fkpp::estimate_cf_from_field(&field, &cfg.r_schedule)?;
            Some(ConstantReport { value: cf.value, per_r: cf.per_r, flatness: None, grid })
        }
        _ => None,
    };
    let mut out = Outputs::create(&c.out)?;
    let mut written = cfg.checkpoints.clone();
    written.push(cfg.horizon);
    written.sort_by(f64::total_cmp);
    written.dedup();
    for t in written {
        field.write_csv(t, &out.path(format!("field_t{t}.csv")))?;
    }
    if let Some(w) = &wave {
        out.json("wave_profile.json", w)?;
    }
    if let Some(k) = &constant {
        k.write(&out.path("constant.json"))?;
    }
    out.finish("fkpp", c.seed, &cfg)?;
    Ok(Status(true))
}

fn default_floor() -> f64 {
    -5.0
}

fn one() -> usize {
    1
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleConfig {
    #[serde(rename = "L", default = "default_floor")]
    floor: f64,
    #[serde(default)]
    decoration: DecorationParams,
    #[serde(default = "one")]
    replicas: usize,
    #[serde(default)]
    shift: Option<ShiftLaw>,
}

pub fn sample_extremal(c: &Common) -> Result<Status> {
    let cfg: SampleConfig = load(c.config.as_deref())?;
    check_out(&c.out)?;
    if let Some(law) = &cfg.shift {
        law.validate()?;
    }
    let pool = extremal_sampler::pool_for(&cfg.decoration)?;
    let samples = (0..cfg.replicas as u64)
        .map(|i| {
            let seed = seeds::derive(c.seed, &[i]);
            let s = extremal_sampler::sample_bar_e_with(cfg.floor, &pool, seed)?;
            let s = match &cfg.shift {
                Some(law) => extremal_sampler::apply_random_shift(s, law, seed)?,
                None => s,
            };
            Ok((seed, s))
        })
        .collect::<critbbm::Result<Vec<_>>>()?;
    let mut out = Outputs::create(&c.out)?;
    for (i, (seed, s)) in samples.iter().enumerate() {
        s.config.write_csv(&out.path(format!("sample_{i:04}.csv")))?;
        let sidecar = Sidecar { floor: s.config.floor(), seed: Some(*seed), sampler: "bar_e".into() };
        sidecar.write(&out.path(format!("sample_{i:04}.json")))?;
    }
    let d = &cfg.decoration;
    let manifest = SampleManifest {
        l: cfg.floor,
        t_dec: d.t,
        k: d.k,
        delta: d.delta,
        seed: c.seed,
        acceptance_rate: pool.acceptance_rate(),
    };
    manifest.write(&out.path("sampler.json"))?;
    out.finish("sample-extremal", c.seed, &cfg)?;
    Ok(Status(true))
}

fn bar_e() -> SamplerSpec {
    SamplerSpec::bar_e()
}

fn unit_time() -> f64 {
    1.0
}

fn invariance_replicas() -> usize {
    2000
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InvarianceConfig {
    #[serde(default = "bar_e")]
    sampler: SamplerSpec,
    #[serde(default = "unit_time")]
    t: f64,
    #[serde(default = "invariance_lab::default_bank")]
    bank: Vec<StepFunction>,
    #[serde(default = "invariance_replicas")]
    replicas: usize,
    #[serde(default)]
    options: InvarianceOptions,
}

pub fn invariance(c: &Common) -> Result<Status> {
    let cfg: InvarianceConfig = load(c.config.as_deref())?;
    check_out(&c.out)?;
    let report =
        invariance_lab::invariance_test_with(&cfg.sampler, cfg.t, &cfg.bank, cfg.replicas, c.seed, &cfg.options)?;
    let mut out = Outputs::create(&c.out)?;
    report.write_json(&out.path("invariance.json"))?;
    report.write_csv(&out.path("invariance.csv"))?;
    out.finish("invariance", c.seed, &cfg)?;
    let passed = report.pass_fraction >= PASS_FRACTION;
    println!("pass fraction {:.3}, max |z| = {:.2}", report.pass_fraction, report.max_abs_z());
    if !passed {
        eprintln!("invariance check failed: pass fraction {:.3} < {PASS_FRACTION}", report.pass_fraction);
    }
    Ok(Status(passed))
}

fn default_t_grid() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0]
}

fn default_window() -> (f64, f64) {
    (-3.0, 3.0)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BasinConfig {
    family: BasinFamily,
    #[serde(default = "default_t_grid")]
    t_grid: Vec<f64>,
    #[serde(default = "default_window")]
    window: (f64, f64),
    #[serde(default = "default_replicas")]
    replicas: usize,
}

pub fn basin(c: &Common) -> Result<Status> {
    let cfg: BasinConfig = load(c.config.as_deref())?;
    check_out(&c.out)?;
    let rows = invariance_lab::basin_run(&cfg.family, &cfg.t_grid, cfg.window, cfg.replicas, c.seed)?;
    let mut out = Outputs::create(&c.out)?;
    invariance_lab::write_decay_csv(&rows, &out.path("decay.csv"))?;
    out.finish("basin", c.seed, &cfg)?;
    Ok(Status(true))
}

fn all_criteria() -> Vec<u8> {
    (1..=13).collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyConfig {
    #[serde(default = "all_criteria")]
    criteria: Vec<u8>,
    #[serde(default)]
    quick: bool,
}

/// Outcome without wall-clock time, so the summary is reproducible.
#[derive(Serialize)]
struct SummaryRow<'a> {
    id: u8,
    title: &'a str,
    passed: bool,
    known_failure: bool,
    detail: &'a str,
}

pub fn verify(c: &Common, quick: bool) -> Result<Status> {
    let mut cfg: VerifyConfig = load(c.config.as_deref())?;
    cfg.quick |= quick;
    if let Some(bad) = cfg.criteria.iter().find(|id| !(1..=13).contains(*id)) {
        return Err(CliError::Schema(format!("no criterion {bad}")));
    }
    check_out(&c.out)?;
    let opts = VerifyOptions { quick: cfg.quick, seed: c.seed };
    let ctx = Context::default();
    let outcomes: Vec<CriterionOutcome> = cfg
        .criteria
        .iter()
        .map(|&id| {
            let o = verify::run_criterion(id, &opts, &ctx);
            println!("{o}");
            o
        })
        .collect();
    let rows: Vec<SummaryRow> = outcomes
        .iter()
        .map(|o| SummaryRow {
            id: o.id,
            title: &o.title,
            passed: o.passed,
            known_failure: o.known_failure(),
            detail: &o.detail,
        })
        .collect();
    let mut out = Outputs::create(&c.out)?;
    out.json("verify.json", &rows)?;
    out.finish("verify", c.seed, &cfg)?;
    let failed: Vec<String> =
        outcomes.iter().filter(|o| !o.passed).map(|o| format!("{} ({})", o.id, o.title)).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {}", failed.join(", "));
    }
    Ok(Status(failed.is_empty()))
}
