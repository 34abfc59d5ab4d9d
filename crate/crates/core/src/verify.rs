//! The thirteen acceptance criteria as runnable checks.
//!
//! Each check returns a `CriterionOutcome`; failures to compute (engine or
//! solver errors) count as failed criteria. Deterministic per seed.

use std::fmt;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbm_engine;
use crate::error::Result;
use crate::extremal_sampler::{self, DecorationParams, DecorationPool, ShiftLaw};
use crate::fkpp::{self, CmEstimate, FkppField, Grid, Initial};
use crate::invariance_lab::{self, BasinFamily, SamplerSpec};
use crate::point_process::StepFunction;
use crate::stats::{self, McEstimate, Moments};
use crate::{seeds, SQRT2};

/// Criteria whose failure is documented and expected with this implementation.
pub const KNOWN_FAILURES: &[u8] = &[5, 11];

pub const TITLES: [&str; 13] = [
    "many-to-one first moments",
    "derivative martingale mean",
    "FKPP wave convergence",
    "omega_M tail plateau",
    "psi sandwich",
    "tail-bound band",
    "PDE vs Monte Carlo max tail",
    "fixed-point invariance",
    "negative control",
    "superposition identity",
    "basin decay",
    "C(f) decoration cross-check",
    "M_3/2 floor stability",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub quick: bool,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { quick: false, seed: 20_240_601 }
    }
}

impl VerifyOptions {
    /// `full` replicas, or `quick` in quick mode.
    fn n(&self, full: usize, quick: usize) -> usize {
        if self.quick {
            quick
        } else {
            full
        }
    }

    fn seed(&self, id: u8) -> u64 {
        seeds::derive(self.seed, &[0xACC, u64::from(id)])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionOutcome {
    pub fn known_failure(&self) -> bool {
        KNOWN_FAILURES.contains(&self.id)
    }
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match (self.passed, self.known_failure()) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (known)",
        };
        write!(f, "criterion {:>2} {status}: {} [{:.1}s] {}", self.id, self.title, self.seconds, self.detail)
    }
}

/// Shared solver and sampler state, computed on first use.
#[derive(Default)]
pub struct Context {
    step: OnceLock<FkppField>,
    cm: OnceLock<CmEstimate>,
}

impl Context {
    /// Step-datum field with checkpoints 20, 40 and 80.
    pub fn step_field(&self) -> Result<&FkppField> {
        if let Some(f) = self.step.get() {
            return Ok(f);
        }
        let f = fkpp::solve(&Initial::Step, &[20.0, 40.0, 80.0], Grid::default())?;
        Ok(self.step.get_or_init(|| f))
    }

    pub fn cm(&self) -> Result<&CmEstimate> {
        if let Some(c) = self.cm.get() {
            return Ok(c);
        }
        let c = fkpp::estimate_cm(self.step_field()?, 40.0)?;
        Ok(self.cm.get_or_init(|| c))
    }

    pub fn pool(&self) -> Result<Arc<DecorationPool>> {
        extremal_sampler::default_pool()
    }
}

pub fn run_criterion(id: u8, opts: &VerifyOptions, ctx: &Context) -> CriterionOutcome {
    let start = Instant::now();
    let result = match id {
        1 => many_to_one(opts),
        2 => martingale(opts),
        3 => wave_convergence(ctx, start),
        4 => tail_plateau(ctx),
        5 => psi_sandwich(),
        6 => tail_band(ctx),
        7 => pde_vs_mc(opts),
        8 => invariance(opts, start),
        9 => negative_control(opts),
        10 => superposition(opts),
        11 => basin(opts),
        12 => cf_cross_check(ctx),
        13 => m32_stability(opts, ctx),
        _ => Ok((false, format!("no criterion {id}"))),
    };
    let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionOutcome {
        id,
        title: TITLES.get(usize::from(id).wrapping_sub(1)).copied().unwrap_or("unknown").to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_all(opts: &VerifyOptions) -> Vec<CriterionOutcome> {
    let ctx = Context::default();
    (1..=13).map(|id| run_criterion(id, opts, &ctx)).collect()
}

type Check = Result<(bool, String)>;

const M2O_TIMES: [f64; 3] = [1.0, 2.0, 4.0];
const M2O_LEVELS: [f64; 4] = [-1.0, 0.0, 1.0, 2.0];

/// Driftless, unpruned summaries for `n` seeds.
fn free_runs(t: f64, n: usize, seed: u64) -> Result<Vec<bbm_engine::BbmSummary>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| bbm_engine::evolve_single(0.0, t, false, f64::INFINITY, seeds::derive(seed, &[i])))
        .collect()
}

fn many_to_one(opts: &VerifyOptions) -> Check {
    let start = Instant::now();
    let n = opts.n(10_000, 2_500);
    let mut worst: f64 = 0.0;
    for (k, &t) in M2O_TIMES.iter().enumerate() {
        let runs = free_runs(t, n, seeds::derive(opts.seed(1), &[k as u64]))?;
        for &a in &M2O_LEVELS {
            let m: Moments = runs
                .iter()
                .map(|s| s.decoration.atoms().iter().filter(|&&d| s.max_shifted + d >= a).count() as f64)
                .collect();
            let want = t.exp() * stats::normal_sf(a / t.sqrt());
            worst = worst.max(McEstimate::from_moments(&m, 0).z_against(want).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((worst <= 4.0 && secs < 120.0, format!("max |z| = {worst:.2} over 12 cells, N = {n}, {secs:.1}s < 120s")))
}

fn martingale(opts: &VerifyOptions) -> Check {
    let n = opts.n(10_000, 2_500);
    let mut parts = Vec::new();
    let mut ok = true;
    for (k, &t) in M2O_TIMES.iter().enumerate() {
        let runs = free_runs(t, n, seeds::derive(opts.seed(2), &[k as u64]))?;
        let m: Moments = runs.iter().map(|s| s.derivative_martingale).collect();
        let z = McEstimate::from_moments(&m, 0).z_against(0.0);
        ok &= z.abs() <= 4.0;
        parts.push(format!("t={t}: z={z:.2}"));
    }
    Ok((ok, format!("{}, N = {n}", parts.join(", "))))
}

fn wave_convergence(ctx: &Context, start: Instant) -> Check {
    let field = ctx.step_field()?;
    let w20 = fkpp::wave_profile(field, 20.0)?;
    let w40 = fkpp::wave_profile(field, 40.0)?;
    let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let diff = sup(&w20.profile, &w40.profile);
    let raw_diff = sup(&w20.raw, &w40.raw);
    let secs = start.elapsed().as_secs_f64();
    let ok = diff < 0.01 && w40.residual_norm < 1e-3 && w40.fit_gap <= 0.01 && secs < 60.0;
    Ok((
        ok,
        format!(
            "sup diff = {diff:.4} (raw {raw_diff:.4}), residual = {:.2e} (raw {:.2e}), fit gap = {:.4}, {secs:.1}s < 60s",
            w40.residual_norm, w40.raw_residual_norm, w40.fit_gap
        ),
    ))
}

fn tail_plateau(ctx: &Context) -> Check {
    let cm = ctx.cm()?;
    Ok((
        cm.flatness <= 1.10,
        format!("flatness = {:.4} (raw {:.4}), C_M = {:.4}", cm.flatness, cm.raw_flatness, cm.value),
    ))
}

const PSI_X: [f64; 3] = [10.0, 20.0, 40.0];

/// `u_M(t, √2t + X)/ψ(r, t, √2t + X)` for `X` in `PSI_X`.
pub fn psi_ratios(r: f64, t: f64) -> Result<Vec<f64>> {
    let field = fkpp::solve(&Initial::Step, &[r, t], Grid::for_horizon(t))?;
    PSI_X.iter().map(|&x| Ok(field.value(t, x)? / fkpp::psi(&field, r, t, x)?.value)).collect()
}

fn psi_sandwich() -> Check {
    let r8 = psi_ratios(8.0, 64.0)?;
    let r16 = psi_ratios(16.0, 128.0)?;
    let spread = |v: &[f64]| v.iter().map(|x| x.ln().abs()).fold(0.0, f64::max);
    let inside = r8.iter().all(|&q| (2.0 / 3.0..=1.5).contains(&q));
    let shrinks = spread(&r16) <= spread(&r8);
    Ok((
        inside && shrinks,
        format!(
            "r=8 ratios {:.4?} (in [2/3, 3/2]: {inside}), max|log| r=8 {:.4} vs r=16 {:.4} {:.4?}",
            r8,
            spread(&r8),
            spread(&r16),
            r16
        ),
    ))
}

fn tail_band(ctx: &Context) -> Check {
    let field = ctx.step_field()?;
    let band = |t: f64| -> Result<fkpp::TailReport> {
        let n = ((t.sqrt() - 1.0) / 0.05).floor() as usize;
        let xs: Vec<f64> = (0..=n).map(|i| 1.0 + 0.05 * i as f64).collect();
        fkpp::tail_bound_check(field, t, &xs)
    };
    let (a, b) = (band(40.0)?, band(80.0)?);
    let overlap = a.min <= b.max && b.min <= a.max;
    Ok((
        a.pass && overlap,
        format!(
            "t=40 band [{:.4}, {:.4}] max/min {:.3}; t=80 band [{:.4}, {:.4}]; overlap {overlap}",
            a.min,
            a.max,
            a.max / a.min,
            b.min,
            b.max
        ),
    ))
}

fn pde_vs_mc(opts: &VerifyOptions) -> Check {
    let n = opts.n(100_000, 20_000);
    let field = fkpp::solve(&Initial::Step, &[2.0], Grid::default())?;
    let pde = field.u(2.0, SQRT2 * 2.0 + 1.0)?;
    let seed = opts.seed(7);
    let hits = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            bbm_engine::evolve_single(0.0, 2.0, true, f64::INFINITY, seeds::derive(seed, &[i]))
                .map(|s| f64::from(u8::from(s.max_shifted >= 1.0)))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mc = McEstimate::from_moments(&hits.into_iter().collect(), seed);
    let z = mc.z_against(pde);
    Ok((z.abs() <= 4.0, format!("u_M = {pde:.5}, MC = {:.5} ± {:.5}, z = {z:.2}, N = {n}", mc.mean, mc.std_error)))
}

fn invariance(opts: &VerifyOptions, start: Instant) -> Check {
    let n = opts.n(2000, 500);
    let r =
        invariance_lab::invariance_test(&SamplerSpec::bar_e(), 1.0, &invariance_lab::default_bank(), n, opts.seed(8))?;
    let secs = start.elapsed().as_secs_f64();
    Ok((
        r.pass_fraction >= invariance_lab::PASS_FRACTION && secs < 900.0,
        format!("pass fraction {:.2}, max |z| = {:.2}, N = {n}, {secs:.0}s < 900s", r.pass_fraction, r.max_abs_z()),
    ))
}

fn negative_control(opts: &VerifyOptions) -> Check {
    let n = opts.n(2000, 500);
    let reps = 20u64;
    let bank = invariance_lab::default_bank();
    let sampler = SamplerSpec::Deterministic { atoms: vec![0.0] };
    let mut rejected = 0;
    for k in 0..reps {
        let r = invariance_lab::invariance_test(&sampler, 2.0, &bank, n, seeds::derive(opts.seed(9), &[k]))?;
        rejected += usize::from(r.max_abs_z() > invariance_lab::Z_THRESHOLD);
    }
    let frac = rejected as f64 / reps as f64;
    Ok((frac >= 0.95, format!("rejected in {rejected}/{reps} repetitions, N = {n}")))
}

fn superposition(opts: &VerifyOptions) -> Check {
    let n = opts.n(2000, 500);
    let bank = invariance_lab::default_bank();
    let two = SamplerSpec::BarE { floor: None, decoration: DecorationParams::default(), shift: None, copies: 2 };
    let shifted = SamplerSpec::BarE {
        floor: None,
        decoration: DecorationParams::default(),
        shift: Some(ShiftLaw::Point { s: std::f64::consts::LN_2 / SQRT2 }),
        copies: 1,
    };
    let a = invariance_lab::laplace_bank(&two, &bank, n, seeds::derive(opts.seed(10), &[0]))?;
    let b = invariance_lab::laplace_bank(&shifted, &bank, n, seeds::derive(opts.seed(10), &[1]))?;
    let worst = a.iter().zip(&b).map(|(x, y)| stats::two_sample_z(x, y).abs()).fold(0.0, f64::max);
    Ok((worst <= 3.0, format!("max |z| = {worst:.2} over {} functions, N = {n}", bank.len())))
}

const BASIN_TIMES: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

fn basin(opts: &VerifyOptions) -> Check {
    let n = opts.n(1000, 400);
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, family) in [BasinFamily::UniformPpp, BasinFamily::Lattice].iter().enumerate() {
        let rows =
            invariance_lab::basin_run(family, &BASIN_TIMES, (-3.0, 3.0), n, seeds::derive(opts.seed(11), &[k as u64]))?;
        let (first, last) = (rows[0], rows[rows.len() - 1]);
        let sep = (first.mean - last.mean) / first.se.hypot(last.se);
        ok &= sep >= 3.0;
        let floor = invariance_lab::default_floor(last.t);
        let exact = |t| invariance_lab::basin_first_moment(family, t, (-3.0, 3.0), floor);
        parts.push(format!(
            "{family:?}: mean {:.3} -> {:.3} ({sep:.1} SE; first moment {:.3} -> {:.3}), empty fraction {:.2} -> {:.2}",
            first.mean,
            last.mean,
            exact(first.t)?,
            exact(last.t)?,
            first.empty_fraction,
            last.empty_fraction
        ));
    }
    Ok((ok, format!("{}, N = {n}", parts.join("; "))))
}

fn cf_cross_check(ctx: &Context) -> Check {
    let f = StepFunction::indicator(1.0, 0.0)?;
    let pde = fkpp::estimate_cf(&f, &fkpp::CF_SCHEDULE, None)?;
    let pool = ctx.pool()?;
    let mc = extremal_sampler::decoration_cf(&f, ctx.cm()?.value, &pool);
    let rel = (mc.mean / pde.value - 1.0).abs();
    Ok((
        rel <= 0.10,
        format!(
            "C(f) = {:.4}, decoration MC = {:.4} ± {:.4}, rel diff {:.2}%",
            pde.value,
            mc.mean,
            mc.std_error,
            100.0 * rel
        ),
    ))
}

fn m32_stability(opts: &VerifyOptions, ctx: &Context) -> Check {
    let n = opts.n(200, 50);
    let pool = ctx.pool()?;
    let seed = opts.seed(13);
    let shallow = extremal_sampler::m32_stratified(-15.0, 0.5, extremal_sampler::M32_CUT, n, &pool, seed)?;
    let deep = extremal_sampler::m32_stratified(-25.0, 0.5, extremal_sampler::M32_CUT, n, &pool, seed)?;
    let rel = (deep.mean / shallow.mean - 1.0).abs();
    Ok((
        rel < 0.01,
        format!(
            "mean score {:.4} (L=-15) vs {:.4} (L=-25), change {:.4}%, N = {n}",
            shallow.mean,
            deep.mean,
            100.0 * rel
        ),
    ))
}
