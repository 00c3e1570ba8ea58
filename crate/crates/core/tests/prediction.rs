use gridtrack::geometry::Point2;
use gridtrack::prediction::{evaluate_series, fit_ar, predict_next, rollout, rows_rmse, ArModel, UniformSeries};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::ar2_with_robot;

#[test]
fn recovers_ar2_with_robot_terms() {
    let (z, r, a, b, c) = ar2_with_robot(3, 120);
    let m = fit_ar(&z, Some(&r), 2).unwrap();
    let close = |x: f64, y: f64| (x - y).abs() < 1e-6;
    assert!(close(m.intercept[0], c[0]) && close(m.intercept[1], c[1]), "{:?}", m.intercept);
    for i in 0..2 {
        for (got, want) in [(&m.evacuee[i], &a[i]), (&m.robot[i], &b[i])] {
            for rr in 0..2 {
                for cc in 0..2 {
                    assert!(close(got[rr][cc], want[rr][cc]), "lag {i}: {got:?} vs {want:?}");
                }
            }
        }
    }
    assert!(m.fit_rmse_m < 1e-9);
}

#[test]
fn constant_velocity_rollout() {
    let v = Point2::new(0.3, -0.1);
    let z: Vec<Point2> = (0..60).map(|k| Point2::new(1.0 + v.x * k as f64, 4.0 + v.y * k as f64)).collect();
    let m = fit_ar(&z, None, 4).unwrap();
    let window = &z[..20];
    let steps = rollout(&m, window, None, 12).unwrap();
    let err: f64 = steps
        .iter()
        .enumerate()
        .map(|(k, p)| p.distance(&z[20 + k]).powi(2))
        .sum::<f64>()
        / steps.len() as f64;
    assert!(err.sqrt() < 1e-9, "{}", err.sqrt());
    assert_eq!(steps[0], predict_next(&m, window, None).unwrap());
}

#[test]
fn one_step_evaluation_of_an_exact_model_has_no_error() {
    let (z, r, ..) = ar2_with_robot(9, 100);
    let m = fit_ar(&z, Some(&r), 2).unwrap();
    let series = UniformSeries {
        t0_us: 0,
        dt_s: 0.25,
        positions: z.clone(),
    };
    let rows = evaluate_series(&m, &series, Some(&r)).unwrap();
    assert_eq!(rows.len(), z.len() - 2);
    assert_eq!(rows[1].ts_us, 750_000);
    assert!(rows_rmse(&rows) < 1e-6);
}

#[test]
fn robot_model_needs_a_robot_window() {
    let (z, r, ..) = ar2_with_robot(1, 60);
    let m = fit_ar(&z, Some(&r), 2).unwrap();
    assert!(m.uses_robot());
    assert!(predict_next(&m, &z[..5], None).is_err());
    assert!(predict_next(&m, &z[..5], Some(&r[..1])).is_err());
    assert!(fit_ar(&z, Some(&r[1..]), 2).is_err());
}

#[test]
fn model_file_round_trip() {
    let (z, r, ..) = ar2_with_robot(2, 60);
    let m = fit_ar(&z, Some(&r), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    m.save(&path).unwrap();
    assert_eq!(ArModel::load(&path).unwrap(), m);
}

fn lerp(a: Point2, b: Point2, t: f64) -> Point2 {
    Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
}

fn noisy_walk(seed: u64, n: usize) -> Vec<Point2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Point2::new(2.0, 2.0);
    (0..n)
        .map(|_| {
            p = Point2::new(p.x + rng.random_range(-0.3..0.3), p.y + rng.random_range(-0.3..0.3));
            p
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn prediction_is_translation_equivariant(seed in any::<u64>(), dx in -20.0f64..20.0, dy in -20.0f64..20.0) {
        let z = noisy_walk(seed, 60);
        let shift = Point2::new(dx, dy);
        let zs: Vec<Point2> = z.iter().map(|&p| p + shift).collect();
        let m = fit_ar(&z, None, 3).unwrap();
        let ms = fit_ar(&zs, None, 3).unwrap();
        let a = predict_next(&m, &z[40..50], None).unwrap();
        let b = predict_next(&ms, &zs[40..50], None).unwrap();
        prop_assert!((b - shift).distance(&a) < 1e-7, "{a:?} vs {b:?}");
        prop_assert!((m.fit_rmse_m - ms.fit_rmse_m).abs() < 1e-9);
    }

    #[test]
    fn prediction_is_affine_in_the_window(seed in any::<u64>(), t in 0.0f64..1.0) {
        let z = noisy_walk(seed, 60);
        let m = fit_ar(&z, None, 4).unwrap();
        let w1 = &z[10..14];
        let w2 = &z[30..34];
        let mix: Vec<Point2> = w1.iter().zip(w2).map(|(&a, &b)| lerp(a, b, t)).collect();
        let p1 = predict_next(&m, w1, None).unwrap();
        let p2 = predict_next(&m, w2, None).unwrap();
        let pm = predict_next(&m, &mix, None).unwrap();
        prop_assert!(pm.distance(&lerp(p1, p2, t)) < 1e-9);
    }

    #[test]
    fn constant_windows_are_fixed_points(x in -10.0f64..10.0, y in -10.0f64..10.0) {
        let z = vec![Point2::new(x, y); 30];
        let m = fit_ar(&z, None, 2).unwrap();
        let next = predict_next(&m, &z[..2], None).unwrap();
        prop_assert!(next.distance(&z[0]) < 1e-9);
    }
}
