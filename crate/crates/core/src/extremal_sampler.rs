//! Samplers for the decoration process and the decorated fixed point `𝓔̄∞`.
//!
//! Decorations are drawn as `𝒟_t` of a critical-drift BBM started at
//! `x = −δ√t` and conditioned on `x + M̄_t ≥ −K` by rejection. Selection runs a
//! cheap shallow-barrier system; accepted lineages are replayed with a deeper
//! barrier, which reproduces the same trajectories plus deeper particles.
//!
//! `𝓔̄∞` is a PPP of leaders with intensity `√2e^{−√2x}` on `[L, ∞)`, each
//! carrying an independent decoration. Decorations come from a pool built once
//! per parameter set; given the pool, leaders draw i.i.d. from its empirical law.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbm_engine::{self, EngineLimits};
use crate::error::{invalid, Error, Result};
use crate::point_process::{self, PointConfig};
use crate::{seeds, stats, SQRT2};

pub const DEFAULT_T_DEC: f64 = 16.0;
pub const DEFAULT_DELTA: f64 = 0.4;
pub const DEFAULT_K: f64 = 1.0;
pub const DEFAULT_MAX_ATTEMPTS: u64 = 200_000;
/// Barrier of the selection pass.
pub const SELECTION_BARRIER: f64 = 6.0;
/// Barrier of the replay pass; decorations reach this depth below their max.
pub const DECORATION_DEPTH: f64 = 10.0;
pub const DEFAULT_POOL_SIZE: usize = 256;
pub const DEFAULT_POOL_SEED: u64 = 0x5EED_DEC0;
/// Largest admissible expected leader count `e^{−√2L}`.
pub const MAX_EXPECTED_LEADERS: f64 = 1.0e6;

/// Parameters of the conditioned decoration sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecorationParams {
    pub t: f64,
    pub delta: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub max_attempts: u64,
}

impl Default for DecorationParams {
    fn default() -> Self {
        DecorationParams { t: DEFAULT_T_DEC, delta: DEFAULT_DELTA, k: DEFAULT_K, max_attempts: DEFAULT_MAX_ATTEMPTS }
    }
}

impl DecorationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t >= 9.0 && self.t.is_finite()) {
            return Err(invalid(format!("decoration horizon {} must be ≥ 9", self.t)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(invalid(format!("delta {} outside (0, 1]", self.delta)));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(invalid(format!("K = {} must be positive", self.k)));
        }
        if self.max_attempts == 0 {
            return Err(invalid("max_attempts must be positive"));
        }
        Ok(())
    }

    /// Conditioning start `x = −δ√t`.
    pub fn start(&self) -> f64 {
        -self.delta * self.t.sqrt()
    }

    fn limits(&self) -> EngineLimits {
        EngineLimits { horizon_cap: self.t.max(bbm_engine::DEFAULT_HORIZON_CAP), ..Default::default() }
    }

    fn key(&self) -> [u64; 4] {
        [self.t.to_bits(), self.delta.to_bits(), self.k.to_bits(), self.max_attempts]
    }
}

/// One conditioned decoration `𝒟_t = Σ δ_{χ_k − M_t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecorationSample {
    pub config: PointConfig,
    pub source_t: f64,
    pub source_x: f64,
    /// Accepted samples over attempts of this call.
    pub acceptance_rate: f64,
    pub attempts: u64,
    /// `x + M̄_t` of the accepted run.
    pub top: f64,
}

fn attempt_key(seed: u64, attempt: u64) -> u64 {
    seeds::derive(seed, &[0xDEC, attempt])
}

fn selection_max(p: &DecorationParams, key: u64, limits: &EngineLimits) -> Result<f64> {
    let sys = bbm_engine::run(&[(p.start(), key)], p.t, true, SELECTION_BARRIER, limits)?;
    Ok(sys.max().unwrap_or(f64::NEG_INFINITY))
}

pub fn sample_decoration(t: f64, delta: f64, k: f64, max_attempts: u64, seed: u64) -> Result<DecorationSample> {
    sample_decoration_with(&DecorationParams { t, delta, k, max_attempts }, seed)
}

pub fn sample_decoration_with(p: &DecorationParams, seed: u64) -> Result<DecorationSample> {
    p.validate()?;
    let limits = p.limits();
    for attempt in 0..p.max_attempts {
        let key = attempt_key(seed, attempt);
        if selection_max(p, key, &limits)? < -p.k {
            continue;
        }
        let sys = bbm_engine::run(&[(p.start(), key)], p.t, true, DECORATION_DEPTH, &limits)?;
        let top = sys.max().expect("replay keeps the selected maximum");
        let mut atoms: Vec<f64> = sys.positions().map(|x| x - top).collect();
        atoms.sort_by(|a, b| b.total_cmp(a));
        let attempts = attempt + 1;
        return Ok(DecorationSample {
            config: PointConfig::from_sorted_unchecked(atoms, Some(-DECORATION_DEPTH)),
            source_t: p.t,
            source_x: p.start(),
            acceptance_rate: 1.0 / attempts as f64,
            attempts,
            top,
        });
    }
    Err(Error::RejectionBudget { attempts: p.max_attempts, rate: 0.0, leader: None })
}

/// Fraction of `attempts` selection runs with `x + M̄_t ≥ −K`.
pub fn selection_rate(p: &DecorationParams, attempts: u64, seed: u64) -> Result<f64> {
    p.validate()?;
    let limits = p.limits();
    let hits = (0..attempts)
        .into_par_iter()
        .map(|a| selection_max(p, attempt_key(seed, a), &limits).map(|m| u64::from(m >= -p.k)))
        .collect::<Result<Vec<u64>>>()?;
    Ok(hits.iter().sum::<u64>() as f64 / attempts as f64)
}

/// Decorations drawn once; leaders sample uniformly from them.
#[derive(Debug, Clone)]
pub struct DecorationPool {
    pub params: DecorationParams,
    pub seed: u64,
    pub attempts: u64,
    decorations: Vec<PointConfig>,
    /// `x + M̄_t` of each accepted run.
    tops: Vec<f64>,
}

impl DecorationPool {
    pub fn build(size: usize, params: DecorationParams, seed: u64) -> Result<Self> {
        if size == 0 {
            return Err(invalid("decoration pool needs at least one sample"));
        }
        let samples = (0..size as u64)
            .into_par_iter()
            .map(|i| {
                let s = seeds::derive(seed, &[0x9001, i]);
                sample_decoration_with(&params, s).map_err(|e| Error::Sampler { seed: s, source: Box::new(e) })
            })
            .collect::<Result<Vec<_>>>()?;
        let attempts = samples.iter().map(|s| s.attempts).sum();
        let tops = samples.iter().map(|s| s.top).collect();
        Ok(DecorationPool {
            params,
            seed,
            attempts,
            decorations: samples.into_iter().map(|s| s.config).collect(),
            tops,
        })
    }

    /// Pool from given decorations; overshoots are recorded as `−K`.
    pub fn from_decorations(params: DecorationParams, decorations: Vec<PointConfig>) -> Result<Self> {
        if decorations.is_empty() || decorations.iter().any(|d| d.max() != Some(0.0)) {
            return Err(invalid("pool decorations must be non-empty with maximum 0"));
        }
        let attempts = decorations.len() as u64;
        let tops = vec![-params.k; decorations.len()];
        Ok(DecorationPool { params, seed: 0, attempts, decorations, tops })
    }

    pub fn decorations(&self) -> &[PointConfig] {
        &self.decorations
    }

    pub fn tops(&self) -> &[f64] {
        &self.tops
    }

    pub fn len(&self) -> usize {
        self.decorations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decorations.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.decorations.len() as f64 / self.attempts as f64
    }

    /// Pool average of `Σ_d g(d)`.
    pub fn mean_sum(&self, g: impl Fn(f64) -> f64 + Sync) -> f64 {
        let total: f64 = self.decorations.iter().map(|d| d.atoms().iter().map(|&x| g(x)).sum::<f64>()).sum();
        total / self.len() as f64
    }
}

type PoolCache = Mutex<HashMap<[u64; 4], Arc<DecorationPool>>>;

/// Shared pool of `DEFAULT_POOL_SIZE` decorations for `params`.
pub fn pool_for(params: &DecorationParams) -> Result<Arc<DecorationPool>> {
    static CACHE: OnceLock<PoolCache> = OnceLock::new();
    params.validate()?;
    let cache = CACHE.get_or_init(Default::default);
    let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(pool) = map.get(&params.key()) {
        return Ok(pool.clone());
    }
    let pool = Arc::new(DecorationPool::build(DEFAULT_POOL_SIZE, *params, DEFAULT_POOL_SEED)?);
    map.insert(params.key(), pool.clone());
    Ok(pool)
}

pub fn default_pool() -> Result<Arc<DecorationPool>> {
    pool_for(&DecorationParams::default())
}

/// A sample of `𝓔̄∞` restricted to `[L, ∞)`, possibly shifted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSample {
    pub config: PointConfig,
    pub shift_s: f64,
    pub skeleton_count: usize,
    pub window_floor: f64,
    /// Atoms are complete above this level (decorations stop at a finite depth).
    pub complete_above: f64,
    pub leader_max: Option<f64>,
}

fn check_floor(l: f64) -> Result<f64> {
    if !(l.is_finite() && l <= 0.0) {
        return Err(invalid(format!("window floor {l} must be finite and ≤ 0")));
    }
    let mass = (-SQRT2 * l).exp();
    if mass > MAX_EXPECTED_LEADERS {
        return Err(Error::ResourceCap(format!("window floor {l} implies {mass:.3e} expected leaders")));
    }
    Ok(mass)
}

/// `𝓔̄∞` on `[L, ∞)` with decorations from the shared pool for `(t_dec, K)`.
#[allow(non_snake_case)]
pub fn sample_bar_E(window_floor: f64, t_dec: f64, k: f64, seed: u64) -> Result<FixedPointSample> {
    let params = DecorationParams { t: t_dec, k, ..Default::default() };
    let pool = pool_for(&params)?;
    sample_bar_e_with(window_floor, &pool, seed)
}

/// Leaders `p_i` of the PPP on `[L, ∞)` in sampling order, with their pool indices.
///
/// Positions and pool indices come from disjoint seed streams.
pub fn leaders(l: f64, pool: &DecorationPool, seed: u64) -> Result<Vec<(f64, usize)>> {
    let mass = check_floor(l)?;
    let mut leader_rng = seeds::stream(seed, &[0x1EAD]);
    let mut pick_rng = seeds::stream(seed, &[0xD1C7]);
    let n = point_process::poisson(mass, &mut leader_rng) as usize;
    Ok((0..n)
        .map(|_| {
            let u: f64 = leader_rng.random();
            (l - (1.0 - u).ln() / SQRT2, pick_rng.random_range(0..pool.len()))
        })
        .collect())
}

pub fn sample_bar_e_with(l: f64, pool: &DecorationPool, seed: u64) -> Result<FixedPointSample> {
    let lead = leaders(l, pool, seed)?;
    let mut atoms = Vec::new();
    for &(p, k) in &lead {
        let d = pool.decorations[k].atoms();
        atoms.extend(d[..d.partition_point(|&z| z >= l - p)].iter().map(|&z| p + z));
    }
    atoms.sort_by(|a, b| b.total_cmp(a));
    let leader_max = lead.iter().map(|x| x.0).reduce(f64::max);
    Ok(FixedPointSample {
        config: PointConfig::from_sorted_unchecked(atoms, Some(l)),
        shift_s: 0.0,
        skeleton_count: lead.len(),
        window_floor: l,
        complete_above: leader_max.map_or(l, |m| l.max(m - DECORATION_DEPTH)),
        leader_max,
    })
}

/// Law of the random shift `S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShiftLaw {
    Point { s: f64 },
    Gaussian { mu: f64, sigma: f64 },
    Exponential { rate: f64 },
}

impl ShiftLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ShiftLaw::Point { s } => s.is_finite(),
            ShiftLaw::Gaussian { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma >= 0.0,
            ShiftLaw::Exponential { rate } => rate.is_finite() && rate > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid shift law {self:?}")))
        }
    }

    pub fn draw<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ShiftLaw::Point { s } => s,
            ShiftLaw::Gaussian { mu, sigma } => Normal::new(mu, sigma).expect("validated").sample(rng),
            ShiftLaw::Exponential { rate } => Exp::new(rate).expect("validated").sample(rng),
        }
    }
}

/// Translates the whole sample by an independent draw of `S`.
pub fn apply_random_shift(sample: FixedPointSample, law: &ShiftLaw, seed: u64) -> Result<FixedPointSample> {
    law.validate()?;
    let s = law.draw(&mut seeds::stream(seed, &[0x5417]));
    Ok(FixedPointSample {
        config: point_process::shift(&sample.config, s)?,
        shift_s: sample.shift_s + s,
        skeleton_count: sample.skeleton_count,
        window_floor: sample.window_floor + s,
        complete_above: sample.complete_above + s,
        leader_max: sample.leader_max.map(|m| m + s),
    })
}

/// `∫_a^b √2e^{−√2y} w(y) dy` by composite Simpson.
fn weighted_leader_mass(a: f64, b: f64, w: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = (((b - a) / 1e-3).ceil() as usize).max(2) | 1;
    let h = (b - a) / (n - 1) as f64;
    let vals: Vec<f64> = (0..n)
        .map(|i| {
            let y = a + i as f64 * h;
            SQRT2 * (-SQRT2 * y).exp() * w(y)
        })
        .collect();
    stats::simpson(&vals, h)
}

/// `E[Σ_{atoms y ∈ [L, cut)} w(y)]` for `𝓔̄∞` given the pool.
pub fn deep_stratum(l: f64, cut: f64, pool: &DecorationPool, w: impl Fn(f64) -> f64) -> f64 {
    // Leaders at p contribute e^{−√2p}·Σ_d e^{√2d}·w(p + d) per unit mass, so the
    // stratum factorizes after substituting y = p + d.
    pool.mean_sum(|d| (SQRT2 * d).exp()) * weighted_leader_mass(l, cut, w)
}

/// Default level separating sampled atoms from the integrated deep stratum.
pub const M32_CUT: f64 = -6.0;

/// Mean `m32_score` of `𝓔̄∞` on `[L, ∞)`: atoms above `cut` are sampled, the
/// stratum `[L, cut)` enters through its expectation given the pool.
pub fn m32_stratified(
    l: f64,
    beta: f64,
    cut: f64,
    replicas: usize,
    pool: &DecorationPool,
    seed: u64,
) -> Result<stats::McEstimate> {
    if !(l < cut && cut <= 0.0) {
        return Err(invalid(format!("need L < cut ≤ 0, got L = {l}, cut = {cut}")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid(format!("beta {beta} outside (0, 1)")));
    }
    let deep = deep_stratum(l, cut, pool, |y| point_process::m32_weight(y, beta));
    let scores = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let s = sample_bar_e_with(cut, pool, seeds::derive(seed, &[0x3232, i]))?;
            Ok(point_process::m32_score(&s.config, beta)?.score)
        })
        .collect::<Result<Vec<f64>>>()?;
    let m: stats::Moments = scores.into_iter().map(|x| x + deep).collect();
    Ok(stats::McEstimate::from_moments(&m, seed))
}

/// Pool-based Monte Carlo of `C_M ∫ √2 E[1 − e^{−∫f(y+z)𝒟(dz)}] e^{−√2y} dy`.
///
/// Per decoration the integrand is piecewise constant in `y`, so the integral
/// is exact between atoms; the expectation averages over the pool.
pub fn decoration_cf(f: &point_process::StepFunction, c_m: f64, pool: &DecorationPool) -> stats::McEstimate {
    let m: stats::Moments = pool.decorations().iter().map(|d| c_m * decoration_integral(f, d)).collect();
    stats::McEstimate::from_moments(&m, pool.seed)
}

/// `∫ √2 (1 − e^{−⟨f(y+·), d⟩}) e^{−√2y} dy` for one decoration.
pub fn decoration_integral(f: &point_process::StepFunction, d: &PointConfig) -> f64 {
    // Atom z enters step (c, b) once y > b − z; the pairing is constant between jumps.
    let mut jumps: Vec<(f64, f64)> =
        f.steps().iter().flat_map(|s| d.atoms().iter().map(move |&z| (s.b - z, s.c))).collect();
    jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut pairing = 0.0;
    let mut total = 0.0;
    for (i, &(y, c)) in jumps.iter().enumerate() {
        pairing += c;
        let next = jumps.get(i + 1).map_or(f64::INFINITY, |j| j.0);
        total += (1.0 - (-pairing).exp()) * ((-SQRT2 * y).exp() - (-SQRT2 * next).exp());
    }
    total
}

/// JSON manifest written next to sampled configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleManifest {
    #[serde(rename = "L")]
    pub l: f64,
    pub t_dec: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub delta: f64,
    pub seed: u64,
    pub acceptance_rate: f64,
}

impl SampleManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point_process::StepFunction;

    fn toy_pool() -> DecorationPool {
        let d = |v: Vec<f64>| PointConfig::new(v, Some(-DECORATION_DEPTH)).unwrap();
        DecorationPool::from_decorations(
            DecorationParams::default(),
            vec![d(vec![0.0]), d(vec![0.0, -0.5, -2.0]), d(vec![0.0, -1.0])],
        )
        .unwrap()
    }

    #[test]
    fn accepted_decoration_is_normalized() {
        let s = sample_decoration(9.0, 0.4, 2.0, 100_000, 3).unwrap();
        assert_eq!(s.config.max(), Some(0.0));
        assert!(s.config.atoms().iter().all(|&z| (-DECORATION_DEPTH..=0.0).contains(&z)));
        assert!(s.top >= -2.0);
        assert!(s.acceptance_rate > 0.0 && s.acceptance_rate <= 1.0);
        assert_eq!(s, sample_decoration(9.0, 0.4, 2.0, 100_000, 3).unwrap());
    }

    #[test]
    fn exhausted_budget_reports_rate() {
        match sample_decoration(9.0, 0.4, 1e-9, 1, 0) {
            Err(Error::RejectionBudget { attempts: 1, .. }) | Ok(_) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_horizon_rejected() {
        assert!(sample_decoration(4.0, 0.4, 1.0, 10, 0).is_err());
        assert!(sample_decoration(16.0, 1.5, 1.0, 10, 0).is_err());
        assert!(sample_decoration(16.0, 0.0, 1.0, 10, 0).is_err());
    }

    #[test]
    fn bar_e_max_is_leader_max() {
        let pool = toy_pool();
        for seed in 0..50 {
            let s = sample_bar_e_with(-2.0, &pool, seed).unwrap();
            assert!(s.config.atoms().iter().all(|&x| x >= -2.0));
            assert_eq!(s.config.max(), s.leader_max);
            assert!(s.config.len() >= s.skeleton_count);
        }
    }

    #[test]
    fn deep_floor_hits_resource_cap() {
        assert!(matches!(sample_bar_e_with(-15.0, &toy_pool(), 0), Err(Error::ResourceCap(_))));
        assert!(sample_bar_e_with(1.0, &toy_pool(), 0).is_err());
    }

    #[test]
    fn point_shift_translates() {
        let s = sample_bar_e_with(-2.0, &toy_pool(), 4).unwrap();
        let same = apply_random_shift(s.clone(), &ShiftLaw::Point { s: 0.0 }, 1).unwrap();
        assert_eq!(same.config, s.config);
        assert_eq!(same.shift_s, 0.0);
        let up = apply_random_shift(s.clone(), &ShiftLaw::Point { s: 3.0 }, 1).unwrap();
        assert_eq!(up.config.max().unwrap(), s.config.max().unwrap() + 3.0);
        assert_eq!(up.shift_s, 3.0);
        assert!(ShiftLaw::Exponential { rate: 0.0 }.validate().is_err());
    }

    #[test]
    fn single_atom_decoration_integral_is_closed_form() {
        // d = {0}, f = c·1{x>b}: (1 − e^{−c})·∫_b^∞ √2e^{−√2y} dy.
        let d = PointConfig::new(vec![0.0], None).unwrap();
        let f = StepFunction::indicator(0.7, 0.5).unwrap();
        let want = (1.0 - (-0.7f64).exp()) * (-SQRT2 * 0.5).exp();
        assert!((decoration_integral(&f, &d) - want).abs() < 1e-12);
    }

    #[test]
    fn two_atom_decoration_integral() {
        // d = {0, −1}, f = 1{x>0}: one atom counts for y ∈ (0, 1], two for y > 1.
        let d = PointConfig::new(vec![0.0, -1.0], None).unwrap();
        let f = StepFunction::indicator(1.0, 0.0).unwrap();
        let e = |y: f64| (-SQRT2 * y).exp();
        let want = (1.0 - (-1f64).exp()) * (e(0.0) - e(1.0)) + (1.0 - (-2f64).exp()) * e(1.0);
        assert!((decoration_integral(&f, &d) - want).abs() < 1e-12);
    }

    #[test]
    fn leader_mass_quadrature() {
        let got = weighted_leader_mass(-3.0, -1.0, |_| 1.0);
        let want = (SQRT2 * 3.0).exp() - SQRT2.exp();
        assert!((got / want - 1.0).abs() < 1e-9);
    }
}
