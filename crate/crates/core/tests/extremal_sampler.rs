use critbbm::extremal_sampler::{self, DecorationParams, DecorationPool};
use critbbm::fkpp::{self, Grid, Initial};
use critbbm::point_process::{count, StepFunction};
use critbbm::stats::{self, McEstimate, Moments};
use critbbm::{seeds, SQRT2};

fn estimate(v: impl IntoIterator<Item = f64>) -> McEstimate {
    let m: Moments = v.into_iter().collect();
    McEstimate::from_moments(&m, 0)
}

/// `1 − e^{−⟨f(top + ·), 𝒟⟩}` per pool decoration.
fn conditional_functional(pool: &DecorationPool, f: &StepFunction) -> McEstimate {
    estimate(pool.decorations().iter().zip(pool.tops()).map(|(d, &top)| {
        let pairing: f64 = d.atoms().iter().map(|&z| f.eval(top + z)).sum();
        1.0 - (-pairing).exp()
    }))
}

#[test]
fn selection_rate_matches_pde_tail() {
    let p = DecorationParams { t: 16.0, delta: 1.0, k: 2.0, ..Default::default() };
    let field = fkpp::solve(&Initial::Step, &[16.0], Grid::default()).unwrap();
    // P(x + M̄_t ≥ −K) = u_M(t, √2t − x − K), frame coordinate −x − K
    let predicted = field.value(16.0, -p.start() - p.k).unwrap();
    let rate = extremal_sampler::selection_rate(&p, 10_000, 3).unwrap();
    assert!(rate > 0.0 && (rate / predicted).max(predicted / rate) < 2.0, "{rate} vs {predicted}");
}

#[test]
fn pool_matches_pde_conditional_law() {
    let pool = extremal_sampler::default_pool().unwrap();
    let p = DecorationParams::default();
    let x = p.start();
    let step = fkpp::solve(&Initial::Step, &[p.t], Grid::default()).unwrap();
    let denom = step.value(p.t, -x - p.k).unwrap();
    for c in [0.5, 1.0, 2.0] {
        let f = StepFunction::indicator(c, -p.k).unwrap();
        let field = fkpp::solve(&Initial::FromStepFunction { f: f.clone() }, &[p.t], Grid::default()).unwrap();
        let want = field.value(p.t, -x).unwrap() / denom;
        let got = conditional_functional(&pool, &f);
        assert!(got.z_against(want).abs() < 3.0, "c = {c}: {} ± {} vs {want}", got.mean, got.std_error);
    }
}

#[test]
fn decoration_law_stabilizes_in_t() {
    let f = StepFunction::indicator(1.0, -1.0).unwrap();
    let early = conditional_functional(&extremal_sampler::default_pool().unwrap(), &f);
    let params = DecorationParams { t: 25.0, ..Default::default() };
    let late = conditional_functional(&DecorationPool::build(64, params, 25).unwrap(), &f);
    let z = stats::two_sample_z(&early, &late);
    assert!(z.abs() < 3.0, "t=16 {} vs t=25 {} (z = {z})", early.mean, late.mean);
}

#[test]
fn leader_count_matches_intensity_mass() {
    let want = (2.0 * SQRT2).exp();
    assert!((want - 16.9188).abs() < 1e-4);
    let samples: Vec<_> = (0..1000).map(|i| extremal_sampler::sample_bar_E(-2.0, 16.0, 1.0, i).unwrap()).collect();
    for s in &samples {
        assert_eq!(s.config.max(), s.leader_max);
        assert!(s.config.atoms().iter().all(|&x| x >= -2.0));
    }
    let est = estimate(samples.iter().map(|s| s.skeleton_count as f64));
    assert!(est.z_against(want).abs() < 4.0, "{}", est.mean);
}

/// `count(config, [−x, ∞))` of a sample on `[L, ∞)`, assembled from its leaders.
fn count_above(l: f64, x: f64, pool: &DecorationPool, seed: u64) -> f64 {
    extremal_sampler::leaders(l, pool, seed)
        .unwrap()
        .into_iter()
        .filter(|&(p, _)| p >= -x)
        .map(|(p, k)| pool.decorations()[k].atoms().partition_point(|&z| p + z >= -x) as f64)
        .sum()
}

#[test]
fn leader_counts_agree_with_assembled_samples() {
    let pool = extremal_sampler::default_pool().unwrap();
    for seed in 0..20 {
        let s = extremal_sampler::sample_bar_e_with(-5.0, &pool, seed).unwrap();
        for x in [1.0, 3.0, 5.0] {
            assert_eq!(count(&s.config, -x, f64::INFINITY).unwrap() as f64, count_above(-5.0, x, &pool, seed));
        }
    }
}

#[test]
fn tail_count_log_slope_is_sqrt2() {
    let pool = extremal_sampler::default_pool().unwrap();
    let xs: Vec<f64> = (0..=11).map(|k| 4.0 + 0.5 * k as f64).collect();
    let mut sums = vec![0.0; xs.len()];
    for seed in 0..100 {
        for (s, &x) in sums.iter_mut().zip(&xs) {
            *s += count_above(-9.5, x, &pool, seeds::derive(11, &[seed]));
        }
    }
    let ys: Vec<f64> = sums.iter().map(|s| (s / 100.0).ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    assert!((slope - SQRT2).abs() < 0.15, "slope {slope}");
}

#[test]
fn leader_decorations_are_exchangeable() {
    let pool = extremal_sampler::default_pool().unwrap();
    let gap = |k: usize| pool.decorations()[k].atoms().get(1).map_or(f64::INFINITY, |z| -z);
    let (mut first, mut second) = (Vec::new(), Vec::new());
    for seed in 0..1000 {
        let lead = extremal_sampler::leaders(-2.0, &pool, seed).unwrap();
        if lead.len() >= 2 {
            first.push(gap(lead[0].1));
            second.push(gap(lead[1].1));
        }
    }
    let (_, p) = stats::ks_two_sample(&first, &second);
    assert!(p > 0.01, "KS p = {p}");
}
