//! FKPP solver in the √2-traveling frame and the constants derived from it.
//!
//! With `y = x − √2t` the equation `∂_t u = ½∂_x²u + u − u²` reads
//! `∂_t u = ½∂_y²u + √2∂_y u + u − u²`. Solutions started from
//! `φ(x) = 1 − e^{−f(−x)}` give Laplace functionals of BBM; the step
//! `φ = 1{x ≤ 0}` gives `u_M(t, x) = P(M_t ≥ x)`.
//!
//! The linear part is implicit (one tridiagonal solve per step), the reaction
//! explicit. The advection coefficient is tuned by `O(h², dt)` so that the
//! discrete linearized front is exactly at rest in the frame; see
//! [`calibrated_advection`].

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::point_process::StepFunction;
use crate::stats::simpson;
use crate::{m_of_t, SQRT2};

/// `3/(2√2)`, the coefficient of the logarithmic front delay.
pub const LOG_DELAY: f64 = 1.5 / SQRT2;

const RANGE_TOL: f64 = 1e-12;
const BOUNDARY_CELLS: usize = 5;
const BOUNDARY_TOL: f64 = 1e-8;

/// Spatial window `[y_min, y_max]`, spacing `h` and time step `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub y_min: f64,
    pub y_max: f64,
    pub h: f64,
    pub dt: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Grid { y_min: -60.0, y_max: 60.0, h: 0.02, dt: 0.01 }
    }
}

impl Grid {
    pub fn nodes(&self) -> usize {
        ((self.y_max - self.y_min) / self.h).round() as usize + 1
    }

    pub fn y(&self, i: usize) -> f64 {
        self.y_min + i as f64 * self.h
    }

    /// Default window widened so the leading edge of a horizon-`t` run stays resolved.
    pub fn for_horizon(t: f64) -> Self {
        let mut g = Grid::default();
        g.y_max = g.y_max.max((4.0 * t.sqrt() + 10.0).ceil());
        g
    }

    fn validate(&self, horizon: f64) -> Result<()> {
        if !(self.h > 0.0 && self.h <= 0.05) {
            return Err(invalid(format!("h = {} must lie in (0, 0.05]", self.h)));
        }
        if !(self.dt > 0.0 && self.dt < 1.0) {
            return Err(invalid(format!("dt = {} violates dt·max|1−2u| < 1", self.dt)));
        }
        let need_max = 50f64.max(4.0 * horizon.sqrt());
        if self.y_min > -50.0 || self.y_max < need_max {
            return Err(invalid(format!(
                "window [{}, {}] must contain [-50, {need_max:.1}] for horizon {horizon}",
                self.y_min, self.y_max
            )));
        }
        let cells = (self.y_max - self.y_min) / self.h;
        if (cells - cells.round()).abs() > 1e-6 {
            return Err(invalid("window length must be a multiple of h"));
        }
        Ok(())
    }
}

/// Initial datum `φ` in original coordinates (equal to frame coordinates at `t = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Initial {
    /// `φ = 1{x ≤ 0}`.
    Step,
    /// `φ(x) = 1 − e^{−f(−x)}`.
    FromStepFunction { f: StepFunction },
    /// `φ = ε·1{x ≤ 0}`.
    ScaledStep { eps: f64 },
    /// `φ ≡ c`.
    Constant { c: f64 },
}

impl Initial {
    /// Cell-average value at `x`: the mean of the one-sided limits.
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Initial::Step => step_value(x, 1.0),
            Initial::ScaledStep { eps } => step_value(x, *eps),
            Initial::Constant { c } => *c,
            Initial::FromStepFunction { f } => {
                let (mut left, mut right) = (0.0, 0.0);
                for s in f.steps() {
                    if x <= -s.b {
                        left += s.c;
                    }
                    if x < -s.b {
                        right += s.c;
                    }
                }
                0.5 * ((1.0 - (-left).exp()) + (1.0 - (-right).exp()))
            }
        }
    }

    /// Limits of `φ` at `−∞` and `+∞`.
    fn far_field(&self) -> (f64, f64) {
        match self {
            Initial::Step => (1.0, 0.0),
            Initial::ScaledStep { eps } => (*eps, 0.0),
            Initial::Constant { c } => (*c, *c),
            Initial::FromStepFunction { f } => (1.0 - (-f.total_weight()).exp(), 0.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Initial::ScaledStep { eps } => (0.0..=1.0).contains(eps),
            Initial::Constant { c } => (0.0..=1.0).contains(c),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("initial datum {self:?} leaves [0, 1]")))
        }
    }
}

fn step_value(x: f64, level: f64) -> f64 {
    if x < 0.0 {
        level
    } else if x == 0.0 {
        0.5 * level
    } else {
        0.0
    }
}

/// One step of the scheme on a spatially constant state.
fn reaction_step(u: f64, dt: f64) -> f64 {
    u + dt * u * (1.0 - u)
}

/// Discrete growth rate of the mode `e^{−qy}` per unit time.
fn discrete_rate(q: f64, a: f64, h: f64, dt: f64) -> f64 {
    let d2 = (2.0 * (q * h).cosh() - 2.0) / (h * h);
    let d1 = -(q * h).sinh() / h;
    let denom = 1.0 - dt * (0.5 * d2 + a * d1);
    ((1.0 + dt).ln() - denom.ln()) / dt
}

/// Advection coefficient making the minimal discrete front speed zero.
///
/// The continuous value is √2; the correction is `O(h², dt)`.
pub fn calibrated_advection(h: f64, dt: f64) -> f64 {
    let min_speed = |a: f64| {
        let (mut lo, mut hi) = (0.5, 3.0);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if discrete_rate(m1, a, h, dt) / m1 < discrete_rate(m2, a, h, dt) / m2 {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let q = 0.5 * (lo + hi);
        discrete_rate(q, a, h, dt) / q
    };
    let (mut lo, mut hi) = (SQRT2 - 0.2, SQRT2 + 0.2);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if min_speed(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Space-time FKPP solution in the traveling frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FkppField {
    pub grid: Grid,
    pub initial: Initial,
    pub advection: f64,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

/// Solves up to `max(checkpoints)`, storing the field at every checkpoint.
pub fn solve(initial: &Initial, checkpoints: &[f64], grid: Grid) -> Result<FkppField> {
    initial.validate()?;
    if checkpoints.is_empty() || checkpoints.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(invalid("checkpoints must be non-empty, finite and non-negative"));
    }
    let mut times = checkpoints.to_vec();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let horizon = *times.last().unwrap();
    grid.validate(horizon)?;
    let steps_at: Vec<usize> = times
        .iter()
        .map(|&t| {
            let k = (t / grid.dt).round();
            if (k * grid.dt - t).abs() > 1e-9 * t.max(1.0) {
                Err(invalid(format!("checkpoint {t} is not a multiple of dt = {}", grid.dt)))
            } else {
                Ok(k as usize)
            }
        })
        .collect::<Result<_>>()?;

    let n = grid.nodes();
    let a = calibrated_advection(grid.h, grid.dt);
    let (h, dt) = (grid.h, grid.dt);
    let lower = -dt * (0.5 / (h * h) - a / (2.0 * h));
    let diag = 1.0 + dt / (h * h);
    let upper = -dt * (0.5 / (h * h) + a / (2.0 * h));

    // Thomas factorization of the constant interior matrix
    let m = n - 2;
    let mut cp = vec![0.0; m];
    let mut inv = vec![0.0; m];
    for i in 0..m {
        let d = if i == 0 { diag } else { diag - lower * cp[i - 1] };
        inv[i] = 1.0 / d;
        cp[i] = upper * inv[i];
    }

    let mut u: Vec<f64> = (0..n).map(|i| initial.value(grid.y(i))).collect();
    let (mut ul, mut ur) = initial.far_field();
    u[0] = ul;
    u[n - 1] = ur;
    let mut rhs = vec![0.0; m];
    let mut values = Vec::with_capacity(times.len());
    let mut next = 0;
    while next < times.len() && steps_at[next] == 0 {
        values.push(u.clone());
        next += 1;
    }
    let last_step = *steps_at.last().unwrap();
    for step in 1..=last_step {
        let t = step as f64 * dt;
        // boundaries follow the scheme's own constant-state dynamics
        ul = reaction_step(ul, dt);
        ur = reaction_step(ur, dt);
        for i in 0..m {
            let v = u[i + 1];
            rhs[i] = v + dt * v * (1.0 - v);
        }
        rhs[0] -= lower * ul;
        rhs[m - 1] -= upper * ur;
        // forward sweep then back substitution
        rhs[0] *= inv[0];
        for i in 1..m {
            rhs[i] = (rhs[i] - lower * rhs[i - 1]) * inv[i];
        }
        for i in (0..m - 1).rev() {
            rhs[i] -= cp[i] * rhs[i + 1];
        }
        u[0] = ul;
        u[n - 1] = ur;
        for i in 0..m {
            let v = rhs[i];
            if !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(&v) {
                return Err(Error::Numerical(format!("u = {v:e} left [0, 1] at t = {t}, y = {}", grid.y(i + 1))));
            }
            u[i + 1] = v.clamp(0.0, 1.0);
        }
        if step == steps_at[next] {
            check_boundaries(&u, ul, ur, t)?;
            values.push(u.clone());
            next += 1;
        }
    }
    Ok(FkppField { grid, initial: initial.clone(), advection: a, times, values })
}

fn check_boundaries(u: &[f64], ul: f64, ur: f64, t: f64) -> Result<()> {
    let n = u.len();
    let dl = (u[BOUNDARY_CELLS] - ul).abs();
    let dr = (u[n - 1 - BOUNDARY_CELLS] - ur).abs();
    if dl > BOUNDARY_TOL || dr > BOUNDARY_TOL {
        return Err(Error::Numerical(format!(
            "wave within {BOUNDARY_CELLS} cells of the boundary at t = {t} (deviation left {dl:e}, right {dr:e})"
        )));
    }
    Ok(())
}

impl FkppField {
    fn checkpoint(&self, t: f64) -> Result<&[f64]> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * t.max(1.0))
            .map(|k| self.values[k].as_slice())
            .ok_or_else(|| Error::OutOfGrid(format!("no checkpoint at t = {t} (have {:?})", self.times)))
    }

    pub fn has_time(&self, t: f64) -> bool {
        self.checkpoint(t).is_ok()
    }

    pub fn profile(&self, t: f64) -> Result<&[f64]> {
        self.checkpoint(t)
    }

    /// Frame value at `(t, y)` by linear interpolation; errors outside the window.
    pub fn try_value(&self, t: f64, y: f64) -> Result<f64> {
        let u = self.checkpoint(t)?;
        let g = &self.grid;
        if !(y >= g.y_min && y <= g.y_max) {
            return Err(Error::OutOfGrid(format!("y = {y} outside [{}, {}]", g.y_min, g.y_max)));
        }
        Ok(interp(u, g, y))
    }

    /// Frame value, extended beyond the window by the boundary values.
    pub fn value(&self, t: f64, y: f64) -> Result<f64> {
        let u = self.checkpoint(t)?;
        let g = &self.grid;
        Ok(if y <= g.y_min {
            u[0]
        } else if y >= g.y_max {
            u[u.len() - 1]
        } else {
            interp(u, g, y)
        })
    }

    /// `u(t, x)` in original coordinates. For the step datum this is `P(M_t ≥ x)`.
    pub fn u(&self, t: f64, x: f64) -> Result<f64> {
        self.value(t, x - SQRT2 * t)
    }

    /// Writes `(y, u)` rows for checkpoint `t`.
    pub fn write_csv(&self, t: f64, path: &Path) -> Result<()> {
        let u = self.checkpoint(t)?;
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        w.write_record(["y", "u"])?;
        for (i, v) in u.iter().enumerate() {
            w.write_record([format!("{:.6}", self.grid.y(i)), format!("{v:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn interp(u: &[f64], g: &Grid, y: f64) -> f64 {
    let s = (y - g.y_min) / g.h;
    let i = (s.floor() as usize).min(u.len() - 2);
    let w = s - i as f64;
    u[i] * (1.0 - w) + u[i + 1] * w
}

/// Solution of the traveling-wave ODE `½ω'' + √2ω' + ω − ω² = 0`, normalized by `ω(0) = ½`.
#[derive(Debug, Clone)]
pub struct TravelingWave {
    x0: f64,
    dx: f64,
    w: Vec<f64>,
    dw: Vec<f64>,
    /// Tail `ω(x) ≈ (c·x + d)·e^{−√2x}`.
    pub tail_c: f64,
    pub tail_d: f64,
}

const WAVE_DX: f64 = 1e-3;
const WAVE_LEFT: f64 = -40.0;
const WAVE_RIGHT: f64 = 45.0;

impl TravelingWave {
    /// Shared instance.
    pub fn get() -> &'static TravelingWave {
        static WAVE: OnceLock<TravelingWave> = OnceLock::new();
        WAVE.get_or_init(TravelingWave::compute)
    }

    fn compute() -> TravelingWave {
        // unstable manifold of ω = 1: 1 − ω ∝ e^{(2−√2)x}
        let r = 2.0 - SQRT2;
        let rhs = |w: f64, p: f64| -> (f64, f64) { (p, -2.0 * (SQRT2 * p + w - w * w)) };
        let run = |eps: f64| -> (Vec<f64>, Vec<f64>) {
            let n = ((WAVE_RIGHT - WAVE_LEFT) / WAVE_DX).round() as usize + 1;
            let mut w = Vec::with_capacity(n);
            let mut p = Vec::with_capacity(n);
            let (mut a, mut b) = (1.0 - eps, -r * eps);
            for _ in 0..n {
                w.push(a);
                p.push(b);
                let (k1a, k1b) = rhs(a, b);
                let (k2a, k2b) = rhs(a + 0.5 * WAVE_DX * k1a, b + 0.5 * WAVE_DX * k1b);
                let (k3a, k3b) = rhs(a + 0.5 * WAVE_DX * k2a, b + 0.5 * WAVE_DX * k2b);
                let (k4a, k4b) = rhs(a + WAVE_DX * k3a, b + WAVE_DX * k3b);
                a += WAVE_DX / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
                b += WAVE_DX / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
            }
            (w, p)
        };
        // start deep enough that the linearization is exact to double precision
        let (w, dw) = run(1e-12);
        let half = w.iter().position(|&v| v < 0.5).expect("wave crosses 1/2");
        let frac = (w[half - 1] - 0.5) / (w[half - 1] - w[half]);
        let x_half = WAVE_LEFT + (half as f64 - 1.0 + frac) * WAVE_DX;
        let x0 = WAVE_LEFT - x_half;
        // least squares of ω·e^{√2x} = c·x + d on the far tail
        let (mut sx, mut sy, mut sxx, mut sxy, mut cnt) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (i, &v) in w.iter().enumerate() {
            let x = x0 + i as f64 * WAVE_DX;
            if (20.0..=30.0).contains(&x) {
                let yv = v * (SQRT2 * x).exp();
                sx += x;
                sy += yv;
                sxx += x * x;
                sxy += x * yv;
                cnt += 1.0;
            }
        }
        let tail_c = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
        let tail_d = (sy - tail_c * sx) / cnt;
        TravelingWave { x0, dx: WAVE_DX, w, dw, tail_c, tail_d }
    }

    /// `ω(x)` by cubic Hermite interpolation; asymptotic forms outside the table.
    pub fn eval(&self, x: f64) -> f64 {
        let s = (x - self.x0) / self.dx;
        if s < 0.0 {
            let r = 2.0 - SQRT2;
            return 1.0 - (1.0 - self.w[0]) * (r * (x - self.x0)).exp();
        }
        let i = s.floor() as usize;
        if i + 1 >= self.w.len() || x > 28.0 {
            return (self.tail_c * x + self.tail_d) * (-SQRT2 * x).exp();
        }
        let t = s - i as f64;
        let (p0, p1) = (self.w[i], self.w[i + 1]);
        let (m0, m1) = (self.dw[i] * self.dx, self.dw[i + 1] * self.dx);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * p0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * p1 + (t3 - t2) * m1
    }
}

/// Estimate of the limiting wave `x ↦ lim u(t, m(t) + x)` from a finite-time field.
///
/// `profile` is the traveling-wave ODE solution translated by `recentering` so
/// that it crosses ½ where the finite-time slice does; `raw` is the slice itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveEstimate {
    pub t: f64,
    pub x: Vec<f64>,
    pub profile: Vec<f64>,
    pub raw: Vec<f64>,
    pub recentering: f64,
    pub residual_norm: f64,
    pub raw_residual_norm: f64,
    /// `sup |raw − profile|` over the window.
    pub fit_gap: f64,
}

/// Profile window `[−10, 15]`.
pub const WAVE_WINDOW: (f64, f64) = (-10.0, 15.0);

/// `sup |½ω'' + √2ω' + ω − ω²|` over interior nodes, by centered differences.
pub fn ode_residual(w: &[f64], h: f64) -> f64 {
    (1..w.len().saturating_sub(1))
        .map(|i| {
            let d2 = (w[i + 1] - 2.0 * w[i] + w[i - 1]) / (h * h);
            let d1 = (w[i + 1] - w[i - 1]) / (2.0 * h);
            (0.5 * d2 + SQRT2 * d1 + w[i] - w[i] * w[i]).abs()
        })
        .fold(0.0, f64::max)
}

pub fn wave_profile(field: &FkppField, t: f64) -> Result<WaveEstimate> {
    if t < 8.0 {
        return Err(invalid(format!("wave_profile needs t ≥ 8, got {t}")));
    }
    let g = &field.grid;
    let offset = m_of_t(t) - SQRT2 * t;
    let (lo, hi) = WAVE_WINDOW;
    if offset + lo < g.y_min || offset + hi > g.y_max {
        return Err(Error::OutOfGrid(format!("profile window at t = {t} leaves the grid")));
    }
    let h = g.h;
    let n = ((hi - lo) / h).round() as usize + 1;
    let x: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
    let raw: Vec<f64> = x.iter().map(|&xi| field.try_value(t, offset + xi)).collect::<Result<_>>()?;
    let x_half = level_crossing(&x, &raw, 0.5)
        .ok_or_else(|| Error::Numerical(format!("profile at t = {t} does not cross 1/2 inside the window")))?;
    let wave = TravelingWave::get();
    let profile: Vec<f64> = x.iter().map(|&xi| wave.eval(xi - x_half)).collect();
    let fit_gap = raw.iter().zip(&profile).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(WaveEstimate {
        t,
        residual_norm: ode_residual(&profile, h),
        raw_residual_norm: ode_residual(&raw, h),
        x,
        profile,
        raw,
        recentering: x_half,
        fit_gap,
    })
}

fn level_crossing(x: &[f64], u: &[f64], level: f64) -> Option<f64> {
    let i = u.iter().position(|&v| v < level)?;
    if i == 0 {
        return None;
    }
    let frac = (u[i - 1] - level) / (u[i - 1] - u[i]);
    Some(x[i - 1] + frac * (x[i] - x[i - 1]))
}

/// Tail constant from `ω_M(x)/(x e^{−√2x})` over `x ∈ [5, 10]`.
///
/// The ratio behaves like `C_M·(1 + a/x)`; `value` is the intercept of the
/// least-squares fit `C + D/x`, `plateau_mean` the raw window average.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CmEstimate {
    pub value: f64,
    pub plateau_mean: f64,
    pub flatness: f64,
    pub raw_flatness: f64,
    pub t: f64,
    pub recentering: f64,
    pub flagged: bool,
}

pub const CM_WINDOW: (f64, f64) = (5.0, 10.0);
pub const CM_FLAG: f64 = 1.25;

/// Plateau statistics of `w(x)/(x e^{−√2x})` on the fit window.
#[derive(Debug, Clone, Copy)]
pub struct Plateau {
    pub intercept: f64,
    pub mean: f64,
    pub flatness: f64,
}

pub fn plateau(x: &[f64], w: &[f64]) -> Plateau {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(w)
        .filter(|(xi, _)| (CM_WINDOW.0..=CM_WINDOW.1).contains(*xi))
        .map(|(&xi, &wi)| (1.0 / xi, wi / (xi * (-SQRT2 * xi).exp())))
        .collect();
    let n = pts.len() as f64;
    let mean = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - mean)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let max = pts.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    let min = pts.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    Plateau { intercept: mean - slope * mx, mean, flatness: max / min }
}

/// `C_M` from the step-datum field at time `t ≥ 40`.
pub fn estimate_cm(field: &FkppField, t: f64) -> Result<CmEstimate> {
    if field.initial != Initial::Step {
        return Err(invalid("estimate_cm needs the step initial datum"));
    }
    if t < 40.0 {
        return Err(invalid(format!("estimate_cm needs t ≥ 40, got {t}")));
    }
    let w = wave_profile(field, t)?;
    let p = plateau(&w.x, &w.profile);
    let raw = plateau(&w.x, &w.raw);
    Ok(CmEstimate {
        value: p.intercept,
        plateau_mean: p.mean,
        flatness: p.flatness,
        raw_flatness: raw.flatness,
        t,
        recentering: w.recentering,
        flagged: p.flatness > CM_FLAG,
    })
}

/// Checkpoints of the default `C_M` field.
pub const CM_TIMES: [f64; 2] = [20.0, 40.0];

/// Solves the step datum on the default grid and estimates `C_M` at `t = 40`.
pub fn estimate_cm_default() -> Result<CmEstimate> {
    let field = solve(&Initial::Step, &CM_TIMES, Grid::default())?;
    estimate_cm(&field, 40.0)
}

/// One row of the `C(f)` convergence table.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CfRow {
    pub r: f64,
    pub integral: f64,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CfEstimate {
    pub value: f64,
    pub per_r: Vec<CfRow>,
    pub flagged: bool,
    pub grid: Grid,
}

/// Default `r` schedule; it ends at the horizon used for `C_M`.
pub const CF_SCHEDULE: [f64; 3] = [10.0, 20.0, 40.0];

/// `√(2/π)∫₀^∞ u(r, y)·y·e^{√2y} dy` in frame coordinates, plus a tail estimate.
pub fn cf_integral(field: &FkppField, r: f64) -> Result<CfRow> {
    let u = field.profile(r)?;
    let g = &field.grid;
    let i0 = ((0.0 - g.y_min) / g.h).round() as usize;
    let i1 = g.nodes() - 1 - BOUNDARY_CELLS;
    let vals: Vec<f64> = (i0..=i1)
        .map(|i| {
            let y = g.y(i);
            u[i] * y * (SQRT2 * y).exp()
        })
        .collect();
    let coef = (2.0 / PI).sqrt();
    let integral = coef * simpson(&vals, g.h);
    // the integrand decays at least like e^{−y²/2r} beyond the window
    let y_end = g.y(i1);
    let tail_bound = coef * vals.last().copied().unwrap_or(0.0) * r / y_end.max(1.0);
    Ok(CfRow { r, integral, tail_bound })
}

/// Richardson extrapolation in `1/√r` through the last two rows.
pub fn richardson_sqrt(rows: &[CfRow]) -> f64 {
    match rows {
        [] => f64::NAN,
        [only] => only.integral,
        [.., a, b] => {
            let (sa, sb) = (a.r.sqrt(), b.r.sqrt());
            (sb * b.integral - sa * a.integral) / (sb - sa)
        }
    }
}

pub fn estimate_cf_from_field(field: &FkppField, r_schedule: &[f64]) -> Result<CfEstimate> {
    let per_r: Vec<CfRow> = r_schedule.iter().map(|&r| cf_integral(field, r)).collect::<Result<_>>()?;
    let flagged = per_r.windows(2).any(|w| (w[1].integral - w[0].integral).abs() > 0.05 * w[1].integral.abs());
    Ok(CfEstimate { value: richardson_sqrt(&per_r), per_r, flagged, grid: field.grid })
}

/// `C(f)` for the datum `φ(x) = 1 − e^{−f(−x)}`.
pub fn estimate_cf(f: &StepFunction, r_schedule: &[f64], grid: Option<Grid>) -> Result<CfEstimate> {
    check_schedule(r_schedule)?;
    let r_max = *r_schedule.last().unwrap();
    let grid = grid.unwrap_or_else(|| Grid::for_horizon(r_max));
    if grid.y_max < (3.0 * r_max.sqrt()).max(40.0) {
        return Err(invalid(format!("y_max = {} below max(3√r, 40) for r = {r_max}", grid.y_max)));
    }
    let field = solve(&Initial::FromStepFunction { f: f.clone() }, r_schedule, grid)?;
    estimate_cf_from_field(&field, r_schedule)
}

fn check_schedule(r: &[f64]) -> Result<()> {
    if r.is_empty() || r.windows(2).any(|w| w[1] <= w[0]) || r[0] <= 0.0 {
        return Err(invalid("r_schedule must be positive and strictly increasing"));
    }
    Ok(())
}

/// Value of Bramson's ψ with the quadrature truncation reported.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PsiValue {
    pub value: f64,
    pub tail_bound: f64,
}

/// `ψ(r, t, √2t + X)` from the field's checkpoint at `r`.
///
/// Requires `t ≥ 8r` and `X + (3/(2√2))·log t > 0`.
pub fn psi(field: &FkppField, r: f64, t: f64, x_big: f64) -> Result<PsiValue> {
    if !(r > 0.0 && t >= 8.0 * r) {
        return Err(invalid(format!("psi needs t ≥ 8r (r = {r}, t = {t})")));
    }
    let shift = x_big + LOG_DELAY * t.ln();
    if !(shift > 0.0) {
        return Err(invalid(format!("psi needs X + (3/(2√2))log t > 0 (X = {x_big}, t = {t})")));
    }
    let u = field.profile(r)?;
    let g = &field.grid;
    let tau = t - r;
    let i0 = ((0.0 - g.y_min) / g.h).round() as usize;
    let i1 = g.nodes() - 1 - BOUNDARY_CELLS;
    // work with e^{√2y − √2X − (y−X)²/2τ} to keep the exponent bounded
    let vals: Vec<f64> = (i0..=i1)
        .map(|i| {
            let y = g.y(i);
            let expo = SQRT2 * (y - x_big) - (y - x_big).powi(2) / (2.0 * tau);
            u[i] * expo.exp() * (-(-2.0 * y * shift / tau).exp_m1())
        })
        .collect();
    let norm = 1.0 / (2.0 * PI * tau).sqrt();
    let value = norm * simpson(&vals, g.h);
    let y_end = g.y(i1);
    let tail_bound = norm * vals.last().copied().unwrap_or(0.0) * tau / (y_end - x_big).max(1.0);
    Ok(PsiValue { value, tail_bound })
}

/// Normalized ratios `P(M_t ≥ √2t+X)·t^{3/2}e^{√2X+X²/2t}/(X + log t)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailReport {
    pub t: f64,
    pub x: Vec<f64>,
    pub ratios: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub pass: bool,
}

pub fn tail_bound_check(field: &FkppField, t: f64, x_grid: &[f64]) -> Result<TailReport> {
    let mut ratios = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let p = field.value(t, x)?;
        ratios.push(p * t.powf(1.5) * (SQRT2 * x + x * x / (2.0 * t)).exp() / (x + t.ln()));
    }
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pass = !ratios.is_empty() && min > 0.0 && max.is_finite() && max / min <= 10.0;
    Ok(TailReport { t, x: x_grid.to_vec(), ratios, min, max, pass })
}

/// JSON report for a constant estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantReport {
    pub value: f64,
    pub per_r: Vec<CfRow>,
    pub flatness: Option<f64>,
    pub grid: Grid,
}

impl ConstantReport {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut f, self)?;
        f.flush()?;
        Ok(())
    }
}
