//! Truncated point configurations, step-function test functions and reference
//! Poisson samplers.
//!
//! A [`PointConfig`] is a finite, descending list of atoms plus an optional
//! truncation floor recording where a larger configuration was cut. Test
//! functions are step functions `f(x) = Σ c_k·1{x > b_k}`; their integrals
//! against configurations drive every Laplace-functional experiment.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::seeds;

/// Finite configuration of atoms sorted non-increasing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointConfig {
    atoms: Vec<f64>,
    floor: Option<f64>,
}

impl PointConfig {
    /// Sorts `atoms` descending (stable). Rejects non-finite atoms and atoms below `floor`.
    pub fn new(mut atoms: Vec<f64>, floor: Option<f64>) -> Result<Self> {
        if let Some(x) = atoms.iter().find(|x| !x.is_finite()) {
            return Err(invalid(format!("non-finite atom {x}")));
        }
        if let Some(fl) = floor {
            if fl.is_nan() {
                return Err(invalid("NaN floor"));
            }
            if let Some(x) = atoms.iter().find(|&&x| x < fl) {
                return Err(invalid(format!("atom {x} below floor {fl}")));
            }
        }
        sort_desc(&mut atoms);
        Ok(PointConfig { atoms, floor })
    }

    /// Keeps only atoms `≥ floor` and records the floor.
    pub fn truncated(mut atoms: Vec<f64>, floor: f64) -> Result<Self> {
        atoms.retain(|&x| x >= floor);
        PointConfig::new(atoms, Some(floor))
    }

    pub fn empty() -> Self {
        PointConfig::default()
    }

    /// Caller guarantees descending order and the floor bound.
    pub(crate) fn from_sorted_unchecked(atoms: Vec<f64>, floor: Option<f64>) -> Self {
        debug_assert!(atoms.windows(2).all(|w| w[0] >= w[1]));
        PointConfig { atoms, floor }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn into_atoms(self) -> Vec<f64> {
        self.atoms
    }

    pub fn floor(&self) -> Option<f64> {
        self.floor
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn max(&self) -> Option<f64> {
        self.atoms.first().copied()
    }

    /// Raises the floor, discarding atoms below it.
    pub fn cut_below(mut self, floor: f64) -> Self {
        let keep = self.atoms.partition_point(|&x| x >= floor);
        self.atoms.truncate(keep);
        self.floor = Some(self.floor.map_or(floor, |f| f.max(floor)));
        self
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        w.write_record(["x"])?;
        for x in &self.atoms {
            w.write_record([format!("{x:?}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, floor: Option<f64>) -> Result<Self> {
        let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
        let header = r.headers()?.clone();
        if header.len() != 1 || &header[0] != "x" {
            return Err(invalid(format!("{}: expected single column 'x'", path.display())));
        }
        let mut atoms = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let x: f64 = rec[0]
                .trim()
                .parse()
                .map_err(|e| invalid(format!("{}: bad atom '{}': {e}", path.display(), &rec[0])))?;
            atoms.push(x);
        }
        PointConfig::new(atoms, floor)
    }
}

/// Provenance written next to a configuration CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub floor: Option<f64>,
    pub seed: Option<u64>,
    pub sampler: String,
}

impl Sidecar {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut f, self)?;
        f.flush()?;
        Ok(())
    }
}

fn sort_desc(atoms: &mut [f64]) {
    atoms.sort_by(|a, b| b.total_cmp(a));
}

/// One step `c·1{x > b}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub c: f64,
    pub b: f64,
}

/// `f(x) = Σ_k c_k·1{x > b_k}` with every `c_k > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Step>", into = "Vec<Step>")]
pub struct StepFunction {
    steps: Vec<Step>,
}

impl TryFrom<Vec<Step>> for StepFunction {
    type Error = crate::Error;

    fn try_from(steps: Vec<Step>) -> Result<Self> {
        StepFunction::new(steps)
    }
}

impl From<StepFunction> for Vec<Step> {
    fn from(f: StepFunction) -> Self {
        f.steps
    }
}

impl StepFunction {
    pub fn new(steps: Vec<Step>) -> Result<Self> {
        if steps.is_empty() {
            return Err(invalid("step function needs at least one step"));
        }
        for s in &steps {
            if !(s.c.is_finite() && s.c > 0.0) {
                return Err(invalid(format!("step weight {} must be positive and finite", s.c)));
            }
            if !s.b.is_finite() {
                return Err(invalid(format!("step threshold {} must be finite", s.b)));
            }
        }
        Ok(StepFunction { steps })
    }

    /// `c·1{x > b}`.
    pub fn indicator(c: f64, b: f64) -> Result<Self> {
        StepFunction::new(vec![Step { c, b }])
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// `min_k b_k`; `f` vanishes at and below it.
    pub fn support_floor(&self) -> f64 {
        self.steps.iter().map(|s| s.b).fold(f64::INFINITY, f64::min)
    }

    pub fn total_weight(&self) -> f64 {
        self.steps.iter().map(|s| s.c).sum()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.steps.iter().filter(|s| x > s.b).map(|s| s.c).sum()
    }

    /// `x ↦ f(x − u)`: thresholds move to `b_k + u`.
    pub fn shifted(&self, u: f64) -> Self {
        StepFunction { steps: self.steps.iter().map(|s| Step { c: s.c, b: s.b + u }).collect() }
    }

    /// Breakpoints ascending with the value of `f` on each interval above them.
    ///
    /// Returns `(b_j, f on (b_j, b_{j+1}])` pairs; `f = 0` below the first breakpoint.
    pub fn pieces(&self) -> Vec<(f64, f64)> {
        let mut s = self.steps.clone();
        s.sort_by(|a, b| a.b.total_cmp(&b.b));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(s.len());
        let mut acc = 0.0;
        for st in s {
            acc += st.c;
            match out.last_mut() {
                Some(last) if last.0 == st.b => last.1 = acc,
                _ => out.push((st.b, acc)),
            }
        }
        out
    }

    /// Loads a bank: a JSON array whose entries are lists of `{c, b}` steps.
    pub fn load_bank(path: &Path) -> Result<Vec<StepFunction>> {
        let text = std::fs::read_to_string(path)?;
        StepFunction::parse_bank(&text)
    }

    pub fn parse_bank(text: &str) -> Result<Vec<StepFunction>> {
        Ok(serde_json::from_str::<Vec<StepFunction>>(text)?)
    }
}

/// `⟨f, θ⟩ = Σ_atoms f(x)`.
pub fn integrate(config: &PointConfig, f: &StepFunction) -> f64 {
    // atoms are descending, so each step contributes c·#{x > b}
    f.steps.iter().map(|s| s.c * config.atoms.partition_point(|&x| x > s.b) as f64).sum()
}

/// Translates every atom and the floor by `u`.
pub fn shift(config: &PointConfig, u: f64) -> Result<PointConfig> {
    if !u.is_finite() {
        return Err(invalid(format!("shift {u} is not finite")));
    }
    Ok(PointConfig { atoms: config.atoms.iter().map(|x| x + u).collect(), floor: config.floor.map(|f| f + u) })
}

/// Multiset union; the floor is the larger of the two.
pub fn superpose(a: &PointConfig, b: &PointConfig) -> PointConfig {
    let mut atoms = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.atoms.len() && j < b.atoms.len() {
        if a.atoms[i] >= b.atoms[j] {
            atoms.push(a.atoms[i]);
            i += 1;
        } else {
            atoms.push(b.atoms[j]);
            j += 1;
        }
    }
    atoms.extend_from_slice(&a.atoms[i..]);
    atoms.extend_from_slice(&b.atoms[j..]);
    let floor = match (a.floor, b.floor) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, y) => x.or(y),
    };
    PointConfig { atoms, floor }
}

/// Number of atoms in the closed interval `[lo, hi]`.
pub fn count(config: &PointConfig, lo: f64, hi: f64) -> Result<usize> {
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(invalid(format!("interval [{lo}, {hi}] is not ordered")));
    }
    let above_hi = config.atoms.partition_point(|&x| x > hi);
    let at_least_lo = config.atoms.partition_point(|&x| x >= lo);
    Ok(at_least_lo - above_hi)
}

/// `Σ e^{−β|x|^{3/2}}` together with the floor it was computed above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct M32Score {
    pub score: f64,
    pub floor: Option<f64>,
}

pub fn m32_score(config: &PointConfig, beta: f64) -> Result<M32Score> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid(format!("beta {beta} outside (0, 1)")));
    }
    Ok(M32Score { score: config.atoms.iter().map(|&x| m32_weight(x, beta)).sum(), floor: config.floor })
}

pub fn m32_weight(x: f64, beta: f64) -> f64 {
    (-beta * x.abs().powf(1.5)).exp()
}

/// Shape of a reference intensity measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntensityKind {
    /// Density `scale·e^{−λx}`.
    Exponential { lambda: f64, scale: f64 },
    /// Density `level`.
    Uniform { level: f64 },
    /// Unit atoms at every multiple of `spacing`.
    Lattice { spacing: f64 },
}

/// Intensity restricted to a bounded window `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensityDescriptor {
    pub kind: IntensityKind,
    pub window: (f64, f64),
}

impl IntensityDescriptor {
    pub fn new(kind: IntensityKind, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid(format!("window [{lo}, {hi}] must be bounded with lo < hi")));
        }
        let ok = match kind {
            IntensityKind::Exponential { lambda, scale } => {
                lambda.is_finite() && lambda > 0.0 && scale.is_finite() && scale > 0.0
            }
            IntensityKind::Uniform { level } => level.is_finite() && level > 0.0,
            IntensityKind::Lattice { spacing } => spacing.is_finite() && spacing > 0.0,
        };
        if !ok {
            return Err(invalid(format!("intensity parameters must be positive: {kind:?}")));
        }
        Ok(IntensityDescriptor { kind, window: (lo, hi) })
    }

    /// Mass of `[a, b] ∩ window`.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let lo = a.max(self.window.0);
        let hi = b.min(self.window.1);
        if lo > hi {
            return 0.0;
        }
        match self.kind {
            IntensityKind::Exponential { lambda, scale } => {
                scale / lambda * ((-lambda * lo).exp() - (-lambda * hi).exp())
            }
            IntensityKind::Uniform { level } => level * (hi - lo),
            IntensityKind::Lattice { spacing } => {
                let kmin = (lo / spacing).ceil();
                let kmax = (hi / spacing).floor();
                (kmax - kmin + 1.0).max(0.0)
            }
        }
    }

    pub fn mass(&self) -> f64 {
        self.mass_between(self.window.0, self.window.1)
    }

    /// `∫ (1 − e^{−f}) dμ` over the window, in closed form.
    pub fn laplace_exponent(&self, f: &StepFunction) -> f64 {
        let pieces = f.pieces();
        let mut total = 0.0;
        for (j, &(b, v)) in pieces.iter().enumerate() {
            let next = pieces.get(j + 1).map_or(f64::INFINITY, |p| p.0);
            let mass = match self.kind {
                // f is constant on (b, next]; lattice atoms at b itself are excluded
                IntensityKind::Lattice { .. } => self.mass_between(b, next) - self.mass_between(b, b),
                _ => self.mass_between(b, next),
            };
            total += (1.0 - (-v).exp()) * mass;
        }
        total
    }

    pub fn label(&self) -> String {
        let (lo, hi) = self.window;
        match self.kind {
            IntensityKind::Exponential { lambda, scale } => {
                format!("exponential(lambda={lambda},scale={scale})[{lo},{hi}]")
            }
            IntensityKind::Uniform { level } => format!("uniform(level={level})[{lo},{hi}]"),
            IntensityKind::Lattice { spacing } => format!("lattice(spacing={spacing})[{lo},{hi}]"),
        }
    }
}

/// Poisson sample of the intensity; lattices are deterministic.
pub fn sample_ppp(intensity: &IntensityDescriptor, seed: u64) -> PointConfig {
    let mut rng = seeds::stream(seed, &[0x5050]);
    sample_ppp_with(intensity, &mut rng)
}

pub fn sample_ppp_with<R: Rng + ?Sized>(intensity: &IntensityDescriptor, rng: &mut R) -> PointConfig {
    let (lo, hi) = intensity.window;
    let floor = Some(lo);
    if let IntensityKind::Lattice { spacing } = intensity.kind {
        let kmin = (lo / spacing).ceil() as i64;
        let kmax = (hi / spacing).floor() as i64;
        let atoms = (kmin..=kmax).rev().map(|k| k as f64 * spacing).collect();
        return PointConfig::from_sorted_unchecked(atoms, floor);
    }
    let mass = intensity.mass();
    if mass <= 0.0 {
        return PointConfig { atoms: Vec::new(), floor };
    }
    let n = poisson(mass, rng);
    let mut atoms: Vec<f64> = match intensity.kind {
        IntensityKind::Exponential { lambda, .. } => {
            // inverse CDF of the truncated exponential, written in e^{−λ(x−lo)} form
            let span = (-lambda * (hi - lo)).exp();
            (0..n)
                .map(|_| {
                    let u: f64 = rng.random();
                    let x = lo - (1.0 - u * (1.0 - span)).ln() / lambda;
                    x.clamp(lo, hi)
                })
                .collect()
        }
        IntensityKind::Uniform { .. } => (0..n).map(|_| rng.random_range(lo..=hi)).collect(),
        IntensityKind::Lattice { .. } => unreachable!(),
    };
    sort_desc(&mut atoms);
    PointConfig { atoms, floor }
}

pub(crate) fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite Poisson mean");
    d.sample(rng) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(a: &[f64]) -> PointConfig {
        PointConfig::new(a.to_vec(), None).unwrap()
    }

    fn f2(steps: &[(f64, f64)]) -> StepFunction {
        StepFunction::new(steps.iter().map(|&(c, b)| Step { c, b }).collect()).unwrap()
    }

    #[test]
    fn integrate_examples() {
        assert_eq!(integrate(&cfg(&[0.0, -2.0]), &f2(&[(1.0, -1.0)])), 1.0);
        assert_eq!(integrate(&PointConfig::empty(), &f2(&[(3.0, -9.0)])), 0.0);
        assert_eq!(integrate(&cfg(&[1.0, 1.0, -3.0]), &f2(&[(2.0, 0.0), (1.0, -4.0)])), 7.0);
    }

    #[test]
    fn integrate_uses_strict_threshold() {
        assert_eq!(integrate(&cfg(&[0.0]), &f2(&[(1.0, 0.0)])), 0.0);
        assert_eq!(f2(&[(1.0, 0.0)]).eval(0.0), 0.0);
    }

    #[test]
    fn shift_examples() {
        assert_eq!(shift(&cfg(&[0.0, -1.0]), 0.0).unwrap(), cfg(&[0.0, -1.0]));
        assert_eq!(shift(&cfg(&[0.0, -1.0]), 2.5).unwrap().atoms(), &[2.5, 1.5]);
        let c = cfg(&[3.0, 0.0, -7.0]);
        assert_eq!(shift(&shift(&c, 1.25).unwrap(), -1.25).unwrap(), c);
        assert!(shift(&c, f64::NAN).is_err());
        assert!(shift(&c, f64::INFINITY).is_err());
    }

    #[test]
    fn shift_moves_floor() {
        let c = PointConfig::new(vec![1.0], Some(-2.0)).unwrap();
        assert_eq!(shift(&c, 3.0).unwrap().floor(), Some(1.0));
    }

    #[test]
    fn superpose_examples() {
        assert_eq!(superpose(&cfg(&[0.0]), &PointConfig::empty()), cfg(&[0.0]));
        assert_eq!(superpose(&cfg(&[1.0, -1.0]), &cfg(&[0.0])).atoms(), &[1.0, 0.0, -1.0]);
        let s = superpose(&cfg(&[2.0, -2.0]), &cfg(&[0.0]));
        assert_eq!(count(&s, -1.0, 3.0).unwrap(), 2);
        let a = PointConfig::new(vec![0.0], Some(-3.0)).unwrap();
        let b = PointConfig::new(vec![0.0], Some(-1.0)).unwrap();
        assert_eq!(superpose(&a, &b).floor(), Some(-1.0));
    }

    #[test]
    fn count_examples() {
        assert_eq!(count(&cfg(&[0.0, -2.0]), -1.0, 1.0).unwrap(), 1);
        assert_eq!(count(&cfg(&[0.0, 0.0]), 0.0, 0.0).unwrap(), 2);
        assert_eq!(count(&cfg(&[5.0, -5.0]), -4.0, 4.0).unwrap(), 0);
        assert!(count(&cfg(&[0.0]), 1.0, -1.0).is_err());
    }

    #[test]
    fn m32_examples() {
        assert_eq!(m32_score(&cfg(&[0.0]), 0.3).unwrap().score, 1.0);
        assert!((m32_score(&cfg(&[-1.0]), 0.5).unwrap().score - 0.60653).abs() < 1e-5);
        assert!((m32_score(&cfg(&[0.0, -4.0]), 0.25).unwrap().score - 1.13534).abs() < 1e-5);
        assert!(m32_score(&cfg(&[0.0]), 1.0).is_err());
        assert!(m32_score(&cfg(&[0.0]), 0.0).is_err());
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(PointConfig::new(vec![f64::NAN], None).is_err());
        assert!(PointConfig::new(vec![-5.0], Some(-4.0)).is_err());
        assert!(StepFunction::new(vec![]).is_err());
        assert!(StepFunction::indicator(0.0, 1.0).is_err());
        assert!(StepFunction::indicator(-1.0, 1.0).is_err());
    }

    #[test]
    fn sorting_is_descending() {
        assert_eq!(cfg(&[-1.0, 3.0, 0.5]).atoms(), &[3.0, 0.5, -1.0]);
    }

    #[test]
    fn cut_below_keeps_floor_monotone() {
        let c = PointConfig::new(vec![2.0, 0.0, -3.0], Some(-5.0)).unwrap().cut_below(-1.0);
        assert_eq!(c.atoms(), &[2.0, 0.0]);
        assert_eq!(c.floor(), Some(-1.0));
    }

    #[test]
    fn lattice_is_deterministic() {
        let mu = IntensityDescriptor::new(IntensityKind::Lattice { spacing: 1.0 }, -5.0, 0.0).unwrap();
        let c = sample_ppp(&mu, 1);
        assert_eq!(c.atoms(), &[0.0, -1.0, -2.0, -3.0, -4.0, -5.0]);
        assert_eq!(sample_ppp(&mu, 99), c);
        assert_eq!(mu.mass(), 6.0);
    }

    #[test]
    fn ppp_respects_window_and_seed() {
        let mu = IntensityDescriptor::new(IntensityKind::Uniform { level: 2.0 }, -3.0, 1.0).unwrap();
        let a = sample_ppp(&mu, 5);
        assert_eq!(a, sample_ppp(&mu, 5));
        assert!(a.atoms().iter().all(|&x| (-3.0..=1.0).contains(&x)));
    }

    #[test]
    fn window_mass_closed_forms() {
        let s2 = crate::SQRT2;
        let e = IntensityDescriptor::new(IntensityKind::Exponential { lambda: s2, scale: s2 }, 0.0, 30.0).unwrap();
        assert!((e.mass() - 1.0).abs() < 1e-12);
        let u = IntensityDescriptor::new(IntensityKind::Uniform { level: 1.0 }, -10.0, 0.0).unwrap();
        assert_eq!(u.mass(), 10.0);
        assert!(IntensityDescriptor::new(IntensityKind::Uniform { level: 1.0 }, 0.0, 0.0).is_err());
    }

    #[test]
    fn pieces_accumulate() {
        let f = f2(&[(1.0, 2.0), (0.5, -1.0), (0.25, 2.0)]);
        assert_eq!(f.pieces(), vec![(-1.0, 0.5), (2.0, 1.75)]);
        assert_eq!(f.support_floor(), -1.0);
    }

    #[test]
    fn bank_json_roundtrip() {
        let bank = StepFunction::parse_bank(r#"[[{"c":1,"b":0}],[{"c":0.5,"b":-1},{"c":2,"b":1}]]"#).unwrap();
        assert_eq!(bank.len(), 2);
        assert_eq!(bank[1].eval(2.0), 2.5);
        let text = serde_json::to_string(&bank).unwrap();
        assert_eq!(StepFunction::parse_bank(&text).unwrap(), bank);
        assert!(StepFunction::parse_bank(r#"[[{"c":-1,"b":0}]]"#).is_err());
        assert!(StepFunction::parse_bank(r#"[[{"c":1,"b":0,"d":2}]]"#).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let c = PointConfig::new(vec![0.1, -2.75, 1e-17], Some(-3.0)).unwrap();
        c.write_csv(&p).unwrap();
        assert_eq!(PointConfig::read_csv(&p, Some(-3.0)).unwrap(), c);
    }
}
