use critbbm::fkpp::{self, Grid, Initial, CF_SCHEDULE};
use critbbm::point_process::{Step, StepFunction};
use critbbm::{m_of_t, SQRT2};
use proptest::prelude::*;

fn step_field(times: &[f64], grid: Grid) -> fkpp::FkppField {
    fkpp::solve(&Initial::Step, times, grid).unwrap()
}

fn datum(f: &StepFunction) -> Initial {
    Initial::FromStepFunction { f: f.clone() }
}

#[test]
fn refining_the_grid_moves_u_m_little() {
    let coarse = step_field(&[8.0], Grid::default());
    let fine = step_field(&[8.0], Grid { h: 0.01, dt: 0.005, ..Grid::default() });
    for k in 0..=30 {
        let x = m_of_t(8.0) - 5.0 + 0.5 * k as f64;
        let (a, b) = (coarse.u(8.0, x).unwrap(), fine.u(8.0, x).unwrap());
        assert!((a - b).abs() < 1e-3, "x = {x}: {a} vs {b}");
    }
}

#[test]
fn far_field_limits() {
    let field = step_field(&[5.0, 20.0], Grid::default());
    for t in [5.0, 20.0] {
        assert!((field.u(t, -1e6).unwrap() - 1.0).abs() < 1e-9);
        assert!(field.u(t, 1e6).unwrap().abs() < 1e-9);
    }
}

fn random_pair() -> impl Strategy<Value = (StepFunction, StepFunction)> {
    let steps = || prop::collection::vec((0.05..2.0f64, -3.0..3.0f64), 1..4);
    (steps(), steps()).prop_map(|(a, extra)| {
        let lo: Vec<Step> = a.into_iter().map(|(c, b)| Step { c, b }).collect();
        let mut hi = lo.clone();
        hi.extend(extra.into_iter().map(|(c, b)| Step { c, b }));
        (StepFunction::new(lo).unwrap(), StepFunction::new(hi).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(5))]

    #[test]
    fn larger_data_give_larger_solutions((lo, hi) in random_pair()) {
        let a = fkpp::solve(&datum(&lo), &[1.0, 4.0], Grid::default()).unwrap();
        let b = fkpp::solve(&datum(&hi), &[1.0, 4.0], Grid::default()).unwrap();
        for t in [1.0, 4.0] {
            let (pa, pb) = (a.profile(t).unwrap(), b.profile(t).unwrap());
            prop_assert!(pa.iter().zip(pb).all(|(x, y)| *x <= *y + 1e-12));
        }
    }
}

#[test]
fn cf_is_monotone() {
    let small = StepFunction::indicator(0.5, 0.0).unwrap();
    let large = StepFunction::new(vec![Step { c: 0.5, b: 0.0 }, Step { c: 0.5, b: -1.0 }]).unwrap();
    let a = fkpp::estimate_cf(&small, &CF_SCHEDULE, None).unwrap().value;
    let b = fkpp::estimate_cf(&large, &CF_SCHEDULE, None).unwrap().value;
    assert!(0.0 < a && a < b, "{a} vs {b}");
}

#[test]
fn cf_is_shift_covariant() {
    let schedule = [160.0, 320.0];
    let f = StepFunction::indicator(1.0, 0.0).unwrap();
    let base = fkpp::estimate_cf(&f, &schedule, None).unwrap().value;
    for u in [-1.0, 1.0] {
        let moved = fkpp::estimate_cf(&f.shifted(u), &schedule, None).unwrap().value;
        let ratio = moved / (base * (-SQRT2 * u).exp());
        assert!((ratio - 1.0).abs() < 0.02, "u = {u}: ratio {ratio}");
    }
}

#[test]
fn steep_indicator_recovers_c_m() {
    let cm = fkpp::estimate_cm_default().unwrap().value;
    let cf = fkpp::estimate_cf(&StepFunction::indicator(50.0, 0.0).unwrap(), &CF_SCHEDULE, None).unwrap().value;
    assert!((cf / cm - 1.0).abs() < 0.05, "{cf} vs {cm}");
}

#[test]
fn ratio_law_in_the_window() {
    let t = 40.0;
    let f = StepFunction::indicator(1.0, 0.0).unwrap();
    let u_m = step_field(&[t], Grid::default());
    let u_f = fkpp::solve(&datum(&f), &[t], Grid::default()).unwrap();
    let cm = fkpp::estimate_cm_default().unwrap().value;
    let cf = fkpp::estimate_cf(&f, &CF_SCHEDULE, None).unwrap().value;
    let ratios: Vec<f64> = (0..=20)
        .map(|k| {
            let x = -2.0 * t.sqrt() + k as f64 * 1.5 * t.sqrt() / 20.0;
            u_f.value(t, -x).unwrap() / u_m.value(t, -x).unwrap()
        })
        .collect();
    let max = ratios.iter().copied().fold(f64::MIN, f64::max);
    let min = ratios.iter().copied().fold(f64::MAX, f64::min);
    assert!(max / min < 1.05, "{ratios:?}");
    for r in &ratios {
        assert!((r / (cf / cm) - 1.0).abs() < 0.05, "{r} vs {}", cf / cm);
    }
}

#[test]
fn early_time_ratio_grows_as_delta_shrinks() {
    let t = 2500.0;
    let k = 1.0;
    let grid = Grid { h: 0.05, dt: 0.05, ..Grid::for_horizon(t) };
    let field = step_field(&[100.0, 400.0, t], grid);
    let min_ratio = |delta: f64| {
        let s = delta * delta * t;
        (0..=50)
            .map(|j| {
                let x = -delta * t.sqrt() * j as f64 / 50.0;
                field.value(s, -x - k).unwrap() / field.value(t, -x - k).unwrap()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let (r2, r4) = (min_ratio(0.2), min_ratio(0.4));
    assert!(r2 >= 4.0 * r4, "{r2} vs {r4}");
}

#[test]
fn psi_is_positive() {
    let field = step_field(&[4.0], Grid::for_horizon(64.0));
    for x in [5.0, 10.0, 20.0] {
        for t in [32.0, 64.0] {
            assert!(fkpp::psi(&field, 4.0, t, x).unwrap().value > 0.0);
        }
    }
}
