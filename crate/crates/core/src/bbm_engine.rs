//! Event-driven binary branching Brownian motion with barrier pruning.
//!
//! Every particle carries an exponential branching clock and moves by exact
//! Gaussian increments between events, so there is no time-discretization
//! error. The population is synchronized only at pruning sweeps (every
//! `sweep` time units) and at the final time; at each sweep particles more than
//! `barrier_depth` below the current maximum are removed.
//!
//! Randomness is keyed by lineage: a particle's clock, increments and its
//! children's keys are drawn from its own SplitMix64 stream. Runs that differ
//! only in the barrier therefore share every surviving trajectory.

use std::path::Path;

use rand::{Rng, RngCore};
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::point_process::PointConfig;
use crate::{m_of_t, seeds, SQRT2};

/// Smallest admissible finite barrier depth.
pub const MIN_BARRIER: f64 = 6.0;
pub const DEFAULT_BARRIER: f64 = 10.0;
pub const DEFAULT_SWEEP: f64 = 0.25;
pub const DEFAULT_HORIZON_CAP: f64 = 16.0;
pub const DEFAULT_PARTICLE_CAP: usize = 20_000_000;

/// Engine limits and sweep schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineLimits {
    pub horizon_cap: f64,
    pub sweep: f64,
    pub particle_cap: usize,
}

impl Default for EngineLimits {
    fn default() -> Self {
        EngineLimits { horizon_cap: DEFAULT_HORIZON_CAP, sweep: DEFAULT_SWEEP, particle_cap: DEFAULT_PARTICLE_CAP }
    }
}

#[derive(Debug, Clone, Copy)]
struct Particle {
    /// Frame position at `time`.
    pos: f64,
    time: f64,
    /// Absolute time of the next branching event.
    death: f64,
    state: u64,
}

impl Particle {
    fn born(pos: f64, time: f64, key: u64) -> Self {
        let mut rng = seeds::lineage(key);
        let clock: f64 = rng.sample(Exp1);
        Particle { pos, time, death: time + clock, state: rng.next_u64() }
    }
}

/// Live population at a synchronization time.
#[derive(Debug, Clone)]
pub struct ParticleSystem {
    pub time: f64,
    pub drift_on: bool,
    /// `f64::INFINITY` disables pruning.
    pub barrier_depth: f64,
    pub pruned_count: u64,
    /// `Σ (−y)e^{√2y}` over pruned particles at their removal time (frame `y`).
    pub pruned_z: f64,
    /// `Σ |y|e^{√2y}` over pruned particles: a bound on the omitted `Z_t` mass.
    pub pruned_z_abs: f64,
    pub origin: f64,
    particles: Vec<Particle>,
}

impl ParticleSystem {
    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        self.particles.iter().map(|p| p.pos)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn max(&self) -> Option<f64> {
        self.particles.iter().map(|p| p.pos).reduce(f64::max)
    }
}

/// Frame offset `y − χ`: positions are stored as `χ − √2t` when the drift is on.
fn frame_offset(drift_on: bool, t: f64) -> f64 {
    if drift_on {
        0.0
    } else {
        -SQRT2 * t
    }
}

/// Evolves independent BBMs from `roots = (position, lineage key)` up to time `t`.
pub fn run(
    roots: &[(f64, u64)],
    t: f64,
    drift_on: bool,
    barrier_depth: f64,
    limits: &EngineLimits,
) -> Result<ParticleSystem> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid(format!("time {t} must be finite and non-negative")));
    }
    if t > limits.horizon_cap {
        return Err(Error::ResourceCap(format!("t = {t} exceeds the horizon cap {}", limits.horizon_cap)));
    }
    if !(barrier_depth >= MIN_BARRIER) {
        return Err(invalid(format!("barrier depth {barrier_depth} below {MIN_BARRIER}")));
    }
    if !(limits.sweep > 0.0) {
        return Err(invalid("sweep interval must be positive"));
    }
    let drift = if drift_on { SQRT2 } else { 0.0 };
    let mut particles: Vec<Particle> = roots.iter().map(|&(x, k)| Particle::born(x, 0.0, k)).collect();
    let mut sys = ParticleSystem {
        time: 0.0,
        drift_on,
        barrier_depth,
        pruned_count: 0,
        pruned_z: 0.0,
        pruned_z_abs: 0.0,
        origin: roots.first().map_or(0.0, |r| r.0),
        particles: Vec::new(),
    };
    let mut stack: Vec<Particle> = Vec::new();
    let mut next_live: Vec<Particle> = Vec::with_capacity(particles.len());
    let mut k = 0u64;
    while sys.time < t {
        k += 1;
        let next = (k as f64 * limits.sweep).min(t);
        stack.append(&mut particles);
        while let Some(mut p) = stack.pop() {
            let mut rng = seeds::lineage(p.state);
            if p.death < next {
                let dt = p.death - p.time;
                let z: f64 = rng.sample(StandardNormal);
                let pos = p.pos + dt.sqrt() * z - drift * dt;
                stack.push(Particle::born(pos, p.death, rng.next_u64()));
                stack.push(Particle::born(pos, p.death, rng.next_u64()));
            } else {
                let dt = next - p.time;
                let z: f64 = rng.sample(StandardNormal);
                p.pos += dt.sqrt() * z - drift * dt;
                p.time = next;
                p.state = rng.next_u64();
                next_live.push(p);
            }
            if stack.len() + next_live.len() > limits.particle_cap {
                return Err(Error::ResourceCap(format!(
                    "population exceeded {} particles at t ≈ {next}",
                    limits.particle_cap
                )));
            }
        }
        sys.time = next;
        if barrier_depth.is_finite() && !next_live.is_empty() {
            let max = next_live.iter().map(|p| p.pos).fold(f64::NEG_INFINITY, f64::max);
            let cut = max - barrier_depth;
            let off = frame_offset(drift_on, next);
            next_live.retain(|p| {
                if p.pos >= cut {
                    true
                } else {
                    let y = p.pos + off;
                    let z = -y * (SQRT2 * y).exp();
                    sys.pruned_count += 1;
                    sys.pruned_z += z;
                    sys.pruned_z_abs += z.abs();
                    false
                }
            });
        }
        std::mem::swap(&mut particles, &mut next_live);
    }
    sys.particles = particles;
    Ok(sys)
}

/// Summary of a single-particle run at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BbmSummary {
    /// `M_t − √2t` with the drift on, `M_t` otherwise.
    pub max_shifted: f64,
    pub count: u64,
    /// `Z_t = Σ_k (√2t − χ_k)e^{−√2(√2t − χ_k)}` over live particles.
    pub derivative_martingale: f64,
    /// `Σ_k δ_{χ_k − M_t}`.
    pub decoration: PointConfig,
    pub pruned_count: u64,
    /// Bound on the `Z_t` mass carried by pruned particles.
    pub pruned_z_bound: f64,
    /// Set when no particle is alive.
    pub empty: bool,
}

impl BbmSummary {
    pub fn from_system(sys: &ParticleSystem) -> Self {
        let t = sys.time;
        let off = frame_offset(sys.drift_on, t);
        let Some(max) = sys.max() else {
            return BbmSummary {
                max_shifted: f64::NEG_INFINITY,
                count: 0,
                derivative_martingale: 0.0,
                decoration: PointConfig::empty(),
                pruned_count: sys.pruned_count,
                pruned_z_bound: sys.pruned_z_abs,
                empty: true,
            };
        };
        let z: f64 = sys
            .positions()
            .map(|x| {
                let y = x + off;
                -y * (SQRT2 * y).exp()
            })
            .sum();
        let mut d: Vec<f64> = sys.positions().map(|x| x - max).collect();
        d.sort_by(|a, b| b.total_cmp(a));
        let floor = sys.barrier_depth.is_finite().then_some(-sys.barrier_depth);
        BbmSummary {
            max_shifted: max,
            count: sys.len() as u64,
            derivative_martingale: z,
            decoration: PointConfig::from_sorted_unchecked(d, floor),
            pruned_count: sys.pruned_count,
            pruned_z_bound: sys.pruned_z_abs,
            empty: false,
        }
    }
}

/// Root lineage key of atom `index` for `seed`.
pub fn root_key(seed: u64, index: u64) -> u64 {
    seeds::derive(seed, &[0xBB, index])
}

/// One BBM from `start`; pass `f64::INFINITY` as `barrier_depth` to disable pruning.
pub fn evolve_single(start: f64, t: f64, drift_on: bool, barrier_depth: f64, seed: u64) -> Result<BbmSummary> {
    evolve_single_with(start, t, drift_on, barrier_depth, seed, &EngineLimits::default())
}

pub fn evolve_single_with(
    start: f64,
    t: f64,
    drift_on: bool,
    barrier_depth: f64,
    seed: u64,
    limits: &EngineLimits,
) -> Result<BbmSummary> {
    if !start.is_finite() {
        return Err(invalid(format!("start {start} is not finite")));
    }
    let sys = run(&[(start, root_key(seed, 0))], t, drift_on, barrier_depth, limits)?;
    Ok(BbmSummary::from_system(&sys))
}

/// `θ_t`: every atom runs an independent critical-drift BBM; clusters are superposed.
///
/// The result's floor is `max − barrier_depth` when pruning is on.
pub fn evolve_config(initial: &PointConfig, t: f64, barrier_depth: f64, seed: u64) -> Result<PointConfig> {
    evolve_config_with(initial, t, barrier_depth, seed, &EngineLimits::default())
}

pub fn evolve_config_with(
    initial: &PointConfig,
    t: f64,
    barrier_depth: f64,
    seed: u64,
    limits: &EngineLimits,
) -> Result<PointConfig> {
    if initial.is_empty() {
        return Err(invalid("evolve_config needs a non-empty configuration"));
    }
    let roots: Vec<(f64, u64)> =
        initial.atoms().iter().enumerate().map(|(i, &x)| (x, root_key(seed, i as u64))).collect();
    let sys = run(&roots, t, true, barrier_depth, limits)?;
    let mut atoms: Vec<f64> = sys.positions().collect();
    atoms.sort_by(|a, b| b.total_cmp(a));
    let floor = if barrier_depth.is_finite() { atoms.first().map(|m| m - barrier_depth) } else { initial.floor() };
    Ok(PointConfig::from_sorted_unchecked(atoms, floor))
}

/// `𝓔_t = Σ δ_{χ_k(t) − m(t)}` from a driftless BBM started at 0.
pub fn extremal_snapshot(t: f64, seed: u64) -> Result<PointConfig> {
    if t < 1.0 {
        return Err(invalid(format!("extremal_snapshot needs t ≥ 1, got {t}")));
    }
    let sys = run(&[(0.0, root_key(seed, 0))], t, false, DEFAULT_BARRIER, &EngineLimits::default())?;
    let m = m_of_t(t);
    let mut atoms: Vec<f64> = sys.positions().map(|x| x - m).collect();
    atoms.sort_by(|a, b| b.total_cmp(a));
    let floor = atoms.first().map(|x| x - DEFAULT_BARRIER);
    Ok(PointConfig::from_sorted_unchecked(atoms, floor))
}

/// Per-replica CSV row `seed,t,count,max_shifted,Z_t,pruned`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicaRow {
    pub seed: u64,
    pub t: f64,
    pub count: u64,
    pub max_shifted: f64,
    #[serde(rename = "Z_t")]
    pub z_t: f64,
    pub pruned: u64,
}

impl ReplicaRow {
    pub fn new(seed: u64, t: f64, s: &BbmSummary) -> Self {
        ReplicaRow {
            seed,
            t,
            count: s.count,
            max_shifted: s.max_shifted,
            z_t: s.derivative_martingale,
            pruned: s.pruned_count,
        }
    }
}

pub fn write_replicas(rows: &[ReplicaRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_time_keeps_single_particle() {
        let s = evolve_single(0.0, 1e-9, true, f64::INFINITY, 3).unwrap();
        assert_eq!(s.count, 1);
        assert!(s.max_shifted.abs() < 1e-3);
        assert!(s.derivative_martingale.abs() < 1e-3);
        let s0 = evolve_single(0.0, 0.0, true, f64::INFINITY, 3).unwrap();
        assert_eq!((s0.count, s0.max_shifted, s0.derivative_martingale), (1, 0.0, 0.0));
    }

    #[test]
    fn horizon_cap_is_a_resource_error() {
        let err = evolve_single(0.0, 16.5, true, 10.0, 1).unwrap_err();
        assert!(matches!(err, Error::ResourceCap(_)));
        let lim = EngineLimits { horizon_cap: 20.0, ..Default::default() };
        assert!(evolve_single_with(0.0, 0.5, true, 10.0, 1, &lim).is_ok());
    }

    #[test]
    fn shallow_barrier_is_rejected() {
        assert!(matches!(evolve_single(0.0, 1.0, true, 5.0, 1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn decoration_is_normalized() {
        for seed in 0..20 {
            let s = evolve_single(0.0, 3.0, true, 8.0, seed).unwrap();
            assert_eq!(s.decoration.max(), Some(0.0));
            assert!(s.decoration.atoms().iter().all(|d| (-8.0..=0.0).contains(d)));
            assert_eq!(s.decoration.len() as u64, s.count);
        }
    }

    #[test]
    fn seeds_are_reproducible() {
        let a = evolve_single(0.5, 4.0, true, 8.0, 42).unwrap();
        let b = evolve_single(0.5, 4.0, true, 8.0, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, evolve_single(0.5, 4.0, true, 8.0, 43).unwrap());
    }

    #[test]
    fn deeper_barrier_keeps_shallow_trajectories() {
        for seed in 0..10 {
            let shallow = evolve_single(0.0, 6.0, true, 6.0, seed).unwrap();
            let deep = evolve_single(0.0, 6.0, true, 12.0, seed).unwrap();
            assert!(deep.max_shifted >= shallow.max_shifted);
            assert!(deep.count >= shallow.count);
        }
    }

    #[test]
    fn drift_only_changes_frame() {
        let on = evolve_single(0.0, 2.0, true, f64::INFINITY, 9).unwrap();
        let off = evolve_single(0.0, 2.0, false, f64::INFINITY, 9).unwrap();
        assert_eq!(on.count, off.count);
        assert!((off.max_shifted - SQRT2 * 2.0 - on.max_shifted).abs() < 1e-9);
        assert!((on.derivative_martingale - off.derivative_martingale).abs() < 1e-9);
    }

    #[test]
    fn config_evolution_is_shift_equivariant() {
        let c = PointConfig::new(vec![0.3, -1.0, -2.5], None).unwrap();
        let u = 1.75;
        let a = evolve_config(&crate::point_process::shift(&c, u).unwrap(), 2.0, 10.0, 5).unwrap();
        let b = crate::point_process::shift(&evolve_config(&c, 2.0, 10.0, 5).unwrap(), u).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.atoms().iter().zip(b.atoms()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn snapshot_requires_unit_time() {
        assert!(extremal_snapshot(0.5, 1).is_err());
        let s = extremal_snapshot(2.0, 1).unwrap();
        assert!(!s.is_empty());
    }

    #[test]
    fn empty_config_rejected() {
        assert!(evolve_config(&PointConfig::empty(), 1.0, 10.0, 0).is_err());
    }
}
