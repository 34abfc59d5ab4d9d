//! Statistical experiments on candidate fixed points of the critical-drift flow.
//!
//! Equality in law is probed through Laplace functionals `E[e^{−⟨f,θ⟩}]` over a
//! finite bank of step functions. Arms at time 0 and time `t` use independent
//! samples, so the two-sample z-score has the usual calibration.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbm_engine::{self, EngineLimits};
use crate::error::{invalid, Error, Result};
use crate::extremal_sampler::{self, DecorationParams, DecorationPool, ShiftLaw};
use crate::fkpp::FkppField;
use crate::point_process::{self, IntensityDescriptor, IntensityKind, PointConfig, StepFunction};
use crate::stats::{self, McEstimate, Moments};
use crate::{seeds, SQRT2};

pub const Z_THRESHOLD: f64 = 3.0;
pub const PASS_FRACTION: f64 = 0.9;
pub const MIN_REPLICAS: usize = 100;
/// Lowest admissible bank support floor.
pub const BANK_FLOOR_MIN: f64 = -5.0;
/// Largest admissible expected atom count of a sampled configuration.
pub const MAX_EXPECTED_ATOMS: f64 = 1.0e6;

/// Configuration sampler, as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerSpec {
    Empty,
    Deterministic {
        atoms: Vec<f64>,
    },
    Ppp {
        intensity: IntensityDescriptor,
    },
    /// `𝓔̄∞` (superposed `copies` times, then shifted by `S`).
    BarE {
        #[serde(default)]
        floor: Option<f64>,
        #[serde(default)]
        decoration: DecorationParams,
        #[serde(default)]
        shift: Option<ShiftLaw>,
        #[serde(default = "one")]
        copies: usize,
    },
}

fn one() -> usize {
    1
}

impl SamplerSpec {
    pub fn bar_e() -> Self {
        SamplerSpec::BarE { floor: None, decoration: DecorationParams::default(), shift: None, copies: 1 }
    }

    pub fn label(&self) -> String {
        match self {
            SamplerSpec::Empty => "empty".into(),
            SamplerSpec::Deterministic { atoms } => format!("deterministic{atoms:?}"),
            SamplerSpec::Ppp { intensity } => format!("ppp:{}", intensity.label()),
            SamplerSpec::BarE { copies, shift, .. } => {
                let mut s = format!("bar_e(copies={copies})");
                if let Some(law) = shift {
                    s.push_str(&format!("+shift{law:?}"));
                }
                s
            }
        }
    }

    /// Resolves defaults; `floor` is used when the sampler leaves the window open.
    pub fn resolve(&self, floor: f64) -> Result<Sampler> {
        Ok(match self {
            SamplerSpec::Empty => Sampler::Fixed(PointConfig::empty()),
            SamplerSpec::Deterministic { atoms } => Sampler::Fixed(PointConfig::new(atoms.clone(), None)?),
            SamplerSpec::Ppp { intensity } => {
                let mass = intensity.mass();
                if mass > MAX_EXPECTED_ATOMS {
                    return Err(Error::ResourceCap(format!("PPP window carries {mass:.3e} expected atoms")));
                }
                Sampler::Ppp(*intensity)
            }
            SamplerSpec::BarE { floor: l, decoration, shift, copies } => {
                if *copies == 0 {
                    return Err(invalid("copies must be positive"));
                }
                if let Some(law) = shift {
                    law.validate()?;
                }
                Sampler::BarE {
                    floor: l.unwrap_or(floor),
                    pool: extremal_sampler::pool_for(decoration)?,
                    shift: *shift,
                    copies: *copies,
                }
            }
        })
    }
}

/// A ready-to-draw configuration sampler.
#[derive(Debug, Clone)]
pub enum Sampler {
    Fixed(PointConfig),
    Ppp(IntensityDescriptor),
    BarE { floor: f64, pool: Arc<DecorationPool>, shift: Option<ShiftLaw>, copies: usize },
}

impl Sampler {
    pub fn sample(&self, seed: u64) -> Result<PointConfig> {
        match self {
            Sampler::Fixed(c) => Ok(c.clone()),
            Sampler::Ppp(i) => Ok(point_process::sample_ppp(i, seed)),
            Sampler::BarE { floor, pool, shift, copies } => {
                let mut config = PointConfig::empty();
                for c in 0..*copies as u64 {
                    let s = extremal_sampler::sample_bar_e_with(*floor, pool, seeds::derive(seed, &[0xC0, c]))?;
                    config = if c == 0 { s.config } else { point_process::superpose(&config, &s.config) };
                }
                match shift {
                    Some(law) => point_process::shift(&config, law.draw(&mut seeds::stream(seed, &[0x5417]))),
                    None => Ok(config),
                }
            }
        }
    }

    pub fn sample_tagged(&self, seed: u64) -> Result<PointConfig> {
        self.sample(seed).map_err(|e| Error::Sampler { seed, source: Box::new(e) })
    }
}

/// Window floor for `𝓔̄∞` samples feeding functions supported above `bank_floor`
/// at horizon `t`: atoms further down reach the bank with negligible probability.
pub fn relevance_floor(bank_floor: f64, t: f64) -> f64 {
    (bank_floor - 4.0 * t.sqrt()).min(-5.0)
}

fn laplace(config: &PointConfig, f: &StepFunction) -> f64 {
    (-point_process::integrate(config, f)).exp()
}

/// Mean and SE of `e^{−⟨f,θ⟩}` over `n` draws.
pub fn laplace_estimate(sampler: &SamplerSpec, f: &StepFunction, n: usize, seed: u64) -> Result<McEstimate> {
    if n < MIN_REPLICAS {
        return Err(invalid(format!("need at least {MIN_REPLICAS} replicas, got {n}")));
    }
    let s = sampler.resolve(relevance_floor(f.support_floor(), 0.0))?;
    let vals = (0..n as u64)
        .into_par_iter()
        .map(|i| s.sample_tagged(seeds::derive(seed, &[0x1A, i])).map(|c| laplace(&c, f)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(McEstimate::from_moments(&vals.into_iter().collect(), seed))
}

/// Bank-wide estimates of `E[e^{−⟨f,θ⟩}]` sharing the same `n` draws.
pub fn laplace_bank(sampler: &SamplerSpec, bank: &[StepFunction], n: usize, seed: u64) -> Result<Vec<McEstimate>> {
    if n < MIN_REPLICAS {
        return Err(invalid(format!("need at least {MIN_REPLICAS} replicas, got {n}")));
    }
    let s = sampler.resolve(relevance_floor(bank_floor(bank)?, 0.0))?;
    let rows = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let c = s.sample_tagged(seeds::derive(seed, &[0x1B, i]))?;
            Ok(bank.iter().map(|f| laplace(&c, f)).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(moments_by_column(rows, bank.len()).iter().map(|m| McEstimate::from_moments(m, seed)).collect())
}

fn moments_by_column(rows: Vec<Vec<f64>>, width: usize) -> Vec<Moments> {
    let mut m = vec![Moments::default(); width];
    for row in rows {
        for (mj, v) in m.iter_mut().zip(row) {
            mj.push(v);
        }
    }
    m
}

/// Default bank: `c·1{x > b}` for `b ∈ {−1, −½, 0, 1, 2}` and `c ∈ {0.25, 0.5, 1, 2}`.
pub fn default_bank() -> Vec<StepFunction> {
    let mut bank = Vec::new();
    for b in [-1.0, -0.5, 0.0, 1.0, 2.0] {
        for c in [0.25, 0.5, 1.0, 2.0] {
            bank.push(StepFunction::indicator(c, b).expect("valid bank entry"));
        }
    }
    bank
}

fn bank_floor(bank: &[StepFunction]) -> Result<f64> {
    if bank.is_empty() {
        return Err(invalid("bank is empty"));
    }
    let floor = bank.iter().map(StepFunction::support_floor).fold(f64::INFINITY, f64::min);
    if floor < BANK_FLOOR_MIN {
        return Err(invalid(format!("bank support floor {floor} below {BANK_FLOOR_MIN}")));
    }
    Ok(floor)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionRecord {
    pub f_id: String,
    pub laplace_t0: McEstimate,
    pub laplace_t: McEstimate,
    pub z_score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub sampler: String,
    pub bank: Vec<StepFunction>,
    pub t: f64,
    pub replicas: usize,
    pub seed: u64,
    pub window_floor: f64,
    pub z_threshold: f64,
    pub per_function: Vec<FunctionRecord>,
    pub pass_fraction: f64,
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    f_id: &'a str,
    t: f64,
    mean0: f64,
    se0: f64,
    #[serde(rename = "meanT")]
    mean_t: f64,
    #[serde(rename = "seT")]
    se_t: f64,
    z: f64,
}

impl InvarianceReport {
    pub fn max_abs_z(&self) -> f64 {
        self.per_function.iter().map(|r| r.z_score.abs()).fold(0.0, f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.per_function {
            w.serialize(CsvRow {
                f_id: &r.f_id,
                t: self.t,
                mean0: r.laplace_t0.mean,
                se0: r.laplace_t0.std_error,
                mean_t: r.laplace_t.mean,
                se_t: r.laplace_t.std_error,
                z: r.z_score,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Knobs of `invariance_test` beyond its core arguments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvarianceOptions {
    pub barrier_depth: f64,
    pub z_threshold: f64,
    pub limits: EngineLimits,
}

impl Default for InvarianceOptions {
    fn default() -> Self {
        InvarianceOptions {
            barrier_depth: bbm_engine::DEFAULT_BARRIER,
            z_threshold: Z_THRESHOLD,
            limits: EngineLimits::default(),
        }
    }
}

pub fn invariance_test(
    sampler: &SamplerSpec,
    t: f64,
    bank: &[StepFunction],
    n: usize,
    seed: u64,
) -> Result<InvarianceReport> {
    invariance_test_with(sampler, t, bank, n, seed, &InvarianceOptions::default())
}

/// Compares the bank's Laplace functionals of `θ` and `θ_t`.
///
/// At `t = 0` both arms share seeds, since the flow is the identity.
pub fn invariance_test_with(
    sampler: &SamplerSpec,
    t: f64,
    bank: &[StepFunction],
    n: usize,
    seed: u64,
    opts: &InvarianceOptions,
) -> Result<InvarianceReport> {
    if n < MIN_REPLICAS {
        return Err(invalid(format!("need at least {MIN_REPLICAS} replicas, got {n}")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid(format!("time {t} must be finite and non-negative")));
    }
    if t > opts.limits.horizon_cap {
        return Err(Error::ResourceCap(format!("t = {t} exceeds the horizon cap {}", opts.limits.horizon_cap)));
    }
    let floor = relevance_floor(bank_floor(bank)?, t);
    let s = sampler.resolve(floor)?;
    let arm = |tag: u64, evolve: bool| -> Result<Vec<Moments>> {
        let rows = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut c = s.sample_tagged(seeds::derive(seed, &[tag, i]))?;
                if evolve && t > 0.0 && !c.is_empty() {
                    let key = seeds::derive(seed, &[0xE7, i]);
                    c = bbm_engine::evolve_config_with(&c, t, opts.barrier_depth, key, &opts.limits)?;
                }
                Ok(bank.iter().map(|f| laplace(&c, f)).collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(moments_by_column(rows, bank.len()))
    };
    let m0 = arm(0x70, false)?;
    let mt = arm(if t == 0.0 { 0x70 } else { 0x71 }, true)?;
    let per_function: Vec<FunctionRecord> = m0
        .iter()
        .zip(&mt)
        .enumerate()
        .map(|(j, (a, b))| {
            let a = McEstimate::from_moments(a, seed);
            let b = McEstimate::from_moments(b, seed);
            FunctionRecord {
                f_id: format!("f{j:02}"),
                z_score: stats::two_sample_z(&a, &b),
                laplace_t0: a,
                laplace_t: b,
            }
        })
        .collect();
    let passed = per_function.iter().filter(|r| r.z_score.abs() <= opts.z_threshold).count();
    Ok(InvarianceReport {
        sampler: sampler.label(),
        bank: bank.to_vec(),
        t,
        replicas: n,
        seed,
        window_floor: floor,
        z_threshold: opts.z_threshold,
        pass_fraction: passed as f64 / bank.len() as f64,
        per_function,
    })
}

/// `Z_t^θ` for one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZTheta {
    pub value: f64,
    /// Atoms beyond the grid, evaluated with the first-moment bound.
    pub surrogate_atoms: usize,
    pub flagged: bool,
}

/// First-moment bound `P(M_t ≥ x) ≤ e^t·P(N(0,t) ≥ x)`, capped at 1.
pub fn first_moment_bound(t: f64, x: f64) -> f64 {
    (t.exp() * stats::normal_sf(x / t.sqrt())).min(1.0)
}

/// `(1/Ĉ_M)·Σ_{x ≤ 0} u_M(t, √2t − x)` with `u_M` read from a step-datum field.
pub fn z_theta(config: &PointConfig, t: f64, field: &FkppField, c_m: f64) -> Result<ZTheta> {
    if field.initial != crate::fkpp::Initial::Step {
        return Err(invalid("z_theta needs the step-datum field"));
    }
    if !(c_m > 0.0) {
        return Err(invalid(format!("C_M estimate {c_m} must be positive")));
    }
    let mut sum = 0.0;
    let mut surrogate = 0;
    for &x in config.atoms().iter().filter(|&&x| x <= 0.0) {
        match field.try_value(t, -x) {
            Ok(u) => sum += u,
            Err(Error::OutOfGrid(_)) => {
                surrogate += 1;
                sum += first_moment_bound(t, SQRT2 * t - x);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ZTheta { value: sum / c_m, surrogate_atoms: surrogate, flagged: surrogate > 0 })
}

/// Mean `Z_t^θ` of `𝓔̄∞` on `[L, ∞)`: atoms above `cut` are sampled, the
/// stratum `[L, cut)` enters through its expectation given the pool.
pub fn z_theta_stratified(
    t: f64,
    field: &FkppField,
    c_m: f64,
    window: (f64, f64),
    replicas: usize,
    pool: &DecorationPool,
    seed: u64,
) -> Result<McEstimate> {
    let (l, cut) = window;
    if !(l < cut && cut <= 0.0) {
        return Err(invalid(format!("need L < cut ≤ 0, got L = {l}, cut = {cut}")));
    }
    field.try_value(t, -l)?;
    let deep = extremal_sampler::deep_stratum(l, cut, pool, |y| field.value(t, -y).unwrap_or(0.0)) / c_m;
    let vals = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let s = extremal_sampler::sample_bar_e_with(cut, pool, seeds::derive(seed, &[0x2E, i]))?;
            Ok(z_theta(&s.config, t, field, c_m)?.value + deep)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(McEstimate::from_moments(&vals.into_iter().collect(), seed))
}

/// Starting families of the basin-of-attraction experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasinFamily {
    /// `Σ_{i ∈ ℕ} δ_{−i}`.
    Lattice,
    /// `PPP(1_{(−∞,0]} dx)`.
    UniformPpp,
    /// `PPP(e^{−λx} dx)` with `0 < λ ≤ √2`.
    ExpPpp { lambda: f64 },
}

impl BasinFamily {
    /// Intensity truncated to `[floor, ∞)`.
    pub fn intensity(&self, floor: f64) -> Result<IntensityDescriptor> {
        match *self {
            BasinFamily::Lattice => IntensityDescriptor::new(IntensityKind::Lattice { spacing: 1.0 }, floor, 0.0),
            BasinFamily::UniformPpp => IntensityDescriptor::new(IntensityKind::Uniform { level: 1.0 }, floor, 0.0),
            BasinFamily::ExpPpp { lambda } => {
                if !(lambda > 0.0 && lambda <= SQRT2) {
                    return Err(invalid(format!("lambda {lambda} outside (0, √2]")));
                }
                // mass above the cap is e^{−40}/λ
                IntensityDescriptor::new(IntensityKind::Exponential { lambda, scale: 1.0 }, floor, 40.0 / lambda)
            }
        }
    }
}

/// Default truncation floor of a horizon-`t` run.
pub fn default_floor(t: f64) -> f64 {
    -(4.0 * t.sqrt()).max(20.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub t: f64,
    pub mean: f64,
    pub se: f64,
    /// Fraction of replicas with an empty window.
    pub empty_fraction: f64,
}

/// `E[count(θ_t, window)]` by the many-to-one formula, for the floor used by `basin_run`.
pub fn basin_first_moment(family: &BasinFamily, t: f64, window: (f64, f64), floor: f64) -> Result<f64> {
    let intensity = family.intensity(floor)?;
    let hit = |x: f64| -> f64 {
        if t == 0.0 {
            return f64::from(u8::from(x >= window.0 && x <= window.1));
        }
        let s = t.sqrt();
        let lo = (window.0 - x + SQRT2 * t) / s;
        let hi = (window.1 - x + SQRT2 * t) / s;
        t.exp() * (stats::normal_sf(lo) - stats::normal_sf(hi))
    };
    let (a, b) = intensity.window;
    Ok(match intensity.kind {
        IntensityKind::Lattice { spacing } => {
            let (kmin, kmax) = ((a / spacing).ceil() as i64, (b / spacing).floor() as i64);
            (kmin..=kmax).map(|k| hit(k as f64 * spacing)).sum()
        }
        kind => {
            let density = |x: f64| match kind {
                IntensityKind::Exponential { lambda, scale } => scale * (-lambda * x).exp(),
                IntensityKind::Uniform { level } => level,
                IntensityKind::Lattice { .. } => unreachable!(),
            };
            let n = ((((b - a) / 1e-3).ceil() as usize).max(2)) | 1;
            let h = (b - a) / (n - 1) as f64;
            let vals: Vec<f64> = (0..n).map(|i| a + i as f64 * h).map(|x| density(x) * hit(x)).collect();
            stats::simpson(&vals, h)
        }
    })
}

/// Window-count estimates of `θ_t` along `t_grid`.
pub fn basin_run(
    family: &BasinFamily,
    t_grid: &[f64],
    window: (f64, f64),
    n: usize,
    seed: u64,
) -> Result<Vec<DecayRow>> {
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(invalid("t_grid must be a non-empty list of non-negative times"));
    }
    if !(window.0.is_finite() && window.1.is_finite() && window.0 < window.1) {
        return Err(invalid(format!("window {window:?} must be bounded")));
    }
    if n == 0 {
        return Err(invalid("need at least one replica"));
    }
    let t_max = t_grid.iter().copied().fold(0.0, f64::max);
    let limits = EngineLimits::default();
    if t_max > limits.horizon_cap {
        return Err(Error::ResourceCap(format!("t = {t_max} exceeds the horizon cap {}", limits.horizon_cap)));
    }
    let intensity = family.intensity(default_floor(t_max))?;
    let sampler = SamplerSpec::Ppp { intensity }.resolve(intensity.window.0)?;
    t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let counts = (0..n as u64)
                .into_par_iter()
                .map(|i| {
                    let mut c = sampler.sample_tagged(seeds::derive(seed, &[0xBA, k as u64, i]))?;
                    if t > 0.0 && !c.is_empty() {
                        let key = seeds::derive(seed, &[0xBB, k as u64, i]);
                        c = bbm_engine::evolve_config(&c, t, bbm_engine::DEFAULT_BARRIER, key)?;
                    }
                    Ok(point_process::count(&c, window.0, window.1)? as f64)
                })
                .collect::<Result<Vec<f64>>>()?;
            let empty = counts.iter().filter(|&&c| c == 0.0).count() as f64 / n as f64;
            let m: Moments = counts.into_iter().collect();
            Ok(DecayRow { t, mean: m.mean(), se: m.std_error(), empty_fraction: empty })
        })
        .collect()
}

pub fn write_decay_csv(rows: &[DecayRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Chebyshev bound and empirical violation rate for a sum of Bernoullis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    pub bound: f64,
    pub violation_rate: Option<f64>,
}

/// `1/(ε²Σp_i)`, a bound on `P(|X − E X| ≥ εE X)`.
pub fn bernoulli_concentration(p_list: &[f64], eps: f64) -> Result<f64> {
    if p_list.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(invalid("probabilities must lie in [0, 1]"));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(invalid(format!("eps {eps} outside (0, 1]")));
    }
    let total: f64 = p_list.iter().sum();
    if total <= 0.0 {
        return Err(invalid("probabilities sum to zero"));
    }
    Ok(1.0 / (eps * eps * total))
}

/// Fraction of `n` simulated sums with `|X − E X| ≥ εE X`.
pub fn bernoulli_violation_rate(p_list: &[f64], eps: f64, n: usize, seed: u64) -> Result<Concentration> {
    let bound = bernoulli_concentration(p_list, eps)?;
    let mean: f64 = p_list.iter().sum();
    let mut rng = seeds::stream(seed, &[0xBE]);
    let hits = (0..n)
        .filter(|_| {
            let x: f64 = p_list.iter().map(|&p| f64::from(u8::from(rng.random_bool(p)))).sum();
            (x - mean).abs() >= eps * mean
        })
        .count();
    Ok(Concentration { bound, violation_rate: Some(hits as f64 / n.max(1) as f64) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_laplace_is_exact() {
        let f = StepFunction::indicator(1.0, -1.0).unwrap();
        let e = laplace_estimate(&SamplerSpec::Deterministic { atoms: vec![0.0] }, &f, 100, 1).unwrap();
        assert!((e.mean - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(e.std_error, 0.0);
        let e = laplace_estimate(&SamplerSpec::Empty, &f, 100, 1).unwrap();
        assert_eq!((e.mean, e.std_error), (1.0, 0.0));
        assert!(laplace_estimate(&SamplerSpec::Empty, &f, 99, 1).is_err());
    }

    #[test]
    fn concentration_bound_formula() {
        assert!((bernoulli_concentration(&[0.5; 100], 0.5).unwrap() - 0.08).abs() < 1e-15);
        assert!((bernoulli_concentration(&[0.25; 8], 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(bernoulli_concentration(&[0.0; 4], 0.5).is_err());
        let c = bernoulli_violation_rate(&[1.0; 10], 0.1, 1000, 3).unwrap();
        assert_eq!(c.violation_rate, Some(0.0));
    }

    #[test]
    fn z_theta_ignores_positive_atoms() {
        let field = crate::fkpp::solve(&crate::fkpp::Initial::Step, &[1.0], crate::fkpp::Grid::default()).unwrap();
        let c = PointConfig::new(vec![0.5, 2.0], None).unwrap();
        assert_eq!(z_theta(&c, 1.0, &field, 0.5).unwrap().value, 0.0);
        assert_eq!(z_theta(&PointConfig::empty(), 1.0, &field, 0.5).unwrap().value, 0.0);
        let deep = PointConfig::new(vec![0.0, -200.0], None).unwrap();
        let z = z_theta(&deep, 1.0, &field, 0.5).unwrap();
        assert!(z.flagged && z.surrogate_atoms == 1 && z.value > 0.0);
    }

    #[test]
    fn default_bank_is_admissible() {
        let bank = default_bank();
        assert_eq!(bank.len(), 20);
        assert_eq!(bank_floor(&bank).unwrap(), -1.0);
        assert_eq!(relevance_floor(-1.0, 1.0), -5.0);
        assert_eq!(relevance_floor(-2.0, 1.0), -6.0);
        assert_eq!(relevance_floor(-1.0, 0.0), -5.0);
    }

    #[test]
    fn basin_rejects_bad_inputs() {
        assert!(basin_run(&BasinFamily::Lattice, &[], (-3.0, 3.0), 10, 0).is_err());
        assert!(basin_run(&BasinFamily::Lattice, &[1.0], (3.0, -3.0), 10, 0).is_err());
        assert!(matches!(basin_run(&BasinFamily::Lattice, &[20.0], (-3.0, 3.0), 10, 0), Err(Error::ResourceCap(_))));
        assert!(BasinFamily::ExpPpp { lambda: 2.0 }.intensity(-20.0).is_err());
    }

    #[test]
    fn basin_at_time_zero_counts_initial_window() {
        let rows = basin_run(&BasinFamily::Lattice, &[0.0], (-3.0, 3.0), 5, 0).unwrap();
        assert_eq!((rows[0].mean, rows[0].se), (4.0, 0.0));
        let m = basin_first_moment(&BasinFamily::Lattice, 0.0, (-3.0, 3.0), default_floor(0.0)).unwrap();
        assert_eq!(m, 4.0);
        let u = basin_first_moment(&BasinFamily::UniformPpp, 0.0, (-3.0, 3.0), default_floor(0.0)).unwrap();
        assert!((u - 3.0).abs() < 1e-3);
    }
}
