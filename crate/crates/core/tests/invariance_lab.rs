use critbbm::bbm_engine::{self, MIN_BARRIER};
use critbbm::extremal_sampler;
use critbbm::fkpp::{self, Grid, Initial};
use critbbm::invariance_lab::{self, BasinFamily, SamplerSpec};
use critbbm::point_process::{IntensityDescriptor, IntensityKind, PointConfig, StepFunction};
use critbbm::stats::{self, McEstimate, Moments};
use critbbm::{seeds, SQRT2};

fn ppp(scale: f64, lo: f64) -> SamplerSpec {
    let intensity =
        IntensityDescriptor::new(IntensityKind::Exponential { lambda: SQRT2, scale: scale * SQRT2 }, lo, 30.0).unwrap();
    SamplerSpec::Ppp { intensity }
}

#[test]
fn ppp_laplace_example() {
    let f = StepFunction::indicator(2f64.ln(), 0.0).unwrap();
    let est = invariance_lab::laplace_estimate(&ppp(1.0, 0.0), &f, 10_000, 1).unwrap();
    assert!(est.z_against((-0.5f64).exp()).abs() < 4.0, "{}", est.mean);
}

#[test]
fn single_point_is_not_invariant() {
    let f = StepFunction::indicator(1.0, -2.0).unwrap();
    let report =
        invariance_lab::invariance_test(&SamplerSpec::Deterministic { atoms: vec![0.0] }, 2.0, &[f], 2000, 3).unwrap();
    assert!(report.per_function[0].z_score.abs() > 3.0, "z = {}", report.per_function[0].z_score);
}

#[test]
fn zero_time_always_passes() {
    let report =
        invariance_lab::invariance_test(&ppp(1.0, -5.0), 0.0, &invariance_lab::default_bank(), 500, 4).unwrap();
    assert_eq!(report.pass_fraction, 1.0);
    assert_eq!(report.max_abs_z(), 0.0);
}

#[test]
fn bank_detects_scaled_intensity() {
    let bank = invariance_lab::default_bank();
    let reps = 20;
    let rejected = (0..reps)
        .filter(|&r| {
            let a = invariance_lab::laplace_bank(&ppp(1.0, -5.0), &bank, 2000, seeds::derive(5, &[r, 0])).unwrap();
            let b = invariance_lab::laplace_bank(&ppp(1.2, -5.0), &bank, 2000, seeds::derive(5, &[r, 1])).unwrap();
            a.iter().zip(&b).any(|(x, y)| stats::two_sample_z(x, y).abs() > 3.0)
        })
        .count();
    assert!(rejected as f64 >= 0.9 * reps as f64, "power {rejected}/{reps}");
}

#[test]
fn z_theta_single_atom_matches_simulation() {
    let t = 16.0;
    let field = fkpp::solve(&Initial::Step, &[t], Grid::default()).unwrap();
    let cm = fkpp::estimate_cm_default().unwrap().value;
    let z = invariance_lab::z_theta(&PointConfig::new(vec![0.0], None).unwrap(), t, &field, cm).unwrap();
    assert!(!z.flagged && z.value > 0.0);
    let m: Moments = (0..10_000)
        .map(|i| {
            let s = bbm_engine::evolve_single(0.0, t, true, MIN_BARRIER, seeds::derive(6, &[i])).unwrap();
            f64::from(u8::from(s.max_shifted >= 0.0)) / cm
        })
        .collect();
    let mc = McEstimate::from_moments(&m, 0);
    assert!(mc.z_against(z.value).abs() < 4.0, "{} vs {}", mc.mean, z.value);
}

fn z_theta_means(seeds: [u64; 2]) -> (McEstimate, McEstimate) {
    let field = fkpp::solve(&Initial::Step, &[16.0, 25.0], Grid::default()).unwrap();
    let cm = fkpp::estimate_cm_default().unwrap().value;
    let pool = extremal_sampler::default_pool().unwrap();
    let mean = |t: f64, seed: u64| {
        let window = (invariance_lab::default_floor(t), extremal_sampler::M32_CUT);
        invariance_lab::z_theta_stratified(t, &field, cm, window, 400, &pool, seed).unwrap()
    };
    (mean(16.0, seeds[0]), mean(25.0, seeds[1]))
}

#[test]
#[ignore = "finite-depth decorations lack the linear factor of the fixed-point intensity, so the mean decays like t^{-1/2}"]
fn z_theta_mean_is_stable_on_the_fixed_point() {
    let (early, late) = z_theta_means([7, 8]);
    let z = stats::two_sample_z(&early, &late);
    assert!(z.abs() < 3.0, "{} vs {} (z = {z})", early.mean, late.mean);
}

#[test]
fn z_theta_mean_decays_like_inverse_sqrt_t() {
    let (early, late) = z_theta_means([7, 8]);
    let ratio = late.mean / early.mean;
    let se = ratio * ((early.std_error / early.mean).powi(2) + (late.std_error / late.mean).powi(2)).sqrt();
    assert!(((ratio - 0.8) / se).abs() < 3.0, "ratio {ratio} ± {se}");
}

#[test]
fn chebyshev_bound_holds_empirically() {
    let p = vec![0.5; 100];
    let c = invariance_lab::bernoulli_violation_rate(&p, 0.5, 100_000, 9).unwrap();
    assert!((c.bound - 0.08).abs() < 1e-12);
    assert!(c.violation_rate.unwrap() <= c.bound);
}

#[test]
fn basin_at_time_zero_counts_the_initial_window() {
    let rows = invariance_lab::basin_run(&BasinFamily::UniformPpp, &[0.0], (-3.0, 3.0), 2000, 10).unwrap();
    let est = McEstimate { replicas: 2000, mean: rows[0].mean, std_error: rows[0].se, seed_base: 0 };
    assert!(est.z_against(3.0).abs() < 4.0, "{}", rows[0].mean);
}

#[test]
fn basin_means_follow_the_first_moment() {
    let window = (-3.0, 3.0);
    for family in [BasinFamily::Lattice, BasinFamily::UniformPpp] {
        let grid = [1.0, 4.0];
        let rows = invariance_lab::basin_run(&family, &grid, window, 1000, 11).unwrap();
        let floor = invariance_lab::default_floor(4.0);
        for row in rows {
            let want = invariance_lab::basin_first_moment(&family, row.t, window, floor).unwrap();
            assert!(((row.mean - want) / row.se).abs() < 4.0, "{family:?} t = {}: {} vs {want}", row.t, row.mean);
        }
    }
}
