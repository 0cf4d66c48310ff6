//! Oracle checks for the local polynomial machinery: an independent
//! brute-force weighted least-squares solver, direct pinball-loss scans,
//! and hand-enumerated percentile and kernel values.

use meritdml::local_poly::{
    adaptive_bandwidth, expand_features, fit_grid, fit_local_mean, fit_local_quantile,
    fit_weighted_quantile, tricube_weight, FittingGrid, GridKind, Obs, QuantileFitOptions,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Brute-force WLS: explicit normal equations (Z'WZ) b = Z'Wp assembled by
/// direct summation and solved by Gauss-Jordan elimination with partial
/// pivoting. Intentionally shares no code with the library's QR path.
fn brute_force_wls(rows: &[[f64; 6]], weights: &[f64], values: &[f64]) -> [f64; 6] {
    let mut a = [[0.0f64; 6]; 6];
    let mut b = [0.0f64; 6];
    for ((z, &w), &y) in rows.iter().zip(weights).zip(values) {
        for i in 0..6 {
            for j in 0..6 {
                a[i][j] += w * z[i] * z[j];
            }
            b[i] += w * z[i] * y;
        }
    }
    // Gauss-Jordan with partial pivoting
    let mut m = [[0.0f64; 7]; 6];
    for i in 0..6 {
        m[i][..6].copy_from_slice(&a[i]);
        m[i][6] = b[i];
    }
    for col in 0..6 {
        let pivot = (col..6)
            .max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let scale = m[col][col];
        assert!(scale.abs() > 1e-300, "singular oracle system");
        for j in 0..7 {
            m[col][j] /= scale;
        }
        for row in 0..6 {
            if row != col {
                let factor = m[row][col];
                for j in 0..7 {
                    m[row][j] -= factor * m[col][j];
                }
            }
        }
    }
    let mut beta = [0.0; 6];
    for i in 0..6 {
        beta[i] = m[i][6];
    }
    beta
}

fn random_instance(seed: u64, n: usize) -> (Vec<Obs>, [f64; 2]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let data = (0..n)
        .map(|_| {
            let r: f64 = rng.random();
            let h: f64 = rng.random();
            let value = 20.0 + 6.0 * r - 3.0 * h + 4.0 * r * h + noise.sample(&mut rng);
            Obs { r, h, value }
        })
        .collect();
    let center = [0.2 + 0.6 * rng.random::<f64>(), 0.2 + 0.6 * rng.random::<f64>()];
    (data, center)
}

#[test]
fn wls_matches_brute_force_oracle_on_random_instances() {
    for seed in 0..100u64 {
        let n = 20 + (seed as usize * 7) % 181; // up to 200 rows
        let (data, center) = random_instance(seed, n);
        let model = match fit_local_mean(center, &data) {
            Ok(m) => m,
            Err(e) => panic!("seed {seed}: fit failed: {e}"),
        };
        // oracle recomputes tri-cube weights from scratch
        let weights: Vec<f64> = data
            .iter()
            .map(|o| {
                let d = ((o.r - center[0]).powi(2) + (o.h - center[1]).powi(2)).sqrt();
                tricube_weight(d / model.bandwidth)
            })
            .collect();
        let rows: Vec<[f64; 6]> = data.iter().map(|o| expand_features(o.r, o.h)).collect();
        let values: Vec<f64> = data.iter().map(|o| o.value).collect();
        let expect = brute_force_wls(&rows, &weights, &values);
        for (a, b) in model.beta.iter().zip(expect) {
            let scale = b.abs().max(1.0);
            assert!(
                (a - b).abs() <= 1e-8 * scale,
                "seed {seed}: beta {a} vs oracle {b}"
            );
        }
    }
}

#[test]
fn bandwidth_matches_brute_force_percentile_of_decile_distances() {
    // ten points at each decile distance 0.1, 0.2, ..., 1.0
    let mut data = Vec::new();
    for k in 1..=10 {
        let dist = k as f64 / 10.0;
        for i in 0..10 {
            let angle = i as f64 * std::f64::consts::TAU / 10.0;
            data.push(Obs {
                r: dist * angle.cos(),
                h: dist * angle.sin(),
                value: 0.0,
            });
        }
    }
    // oracle: sort the explicit multiset, interpolate at rank 0.3 * (n - 1)
    let mut dists: Vec<f64> = data
        .iter()
        .map(|o| (o.r * o.r + o.h * o.h).sqrt())
        .collect();
    dists.sort_by(f64::total_cmp);
    let rank = 0.3 * (dists.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let expect = dists[lo] + (rank - lo as f64) * (dists[lo + 1] - dists[lo]);

    let got = adaptive_bandwidth([0.0, 0.0], &data).unwrap();
    assert!((got - expect).abs() < 1e-12, "{got} vs oracle {expect}");
}

#[test]
fn quantile_intercept_matches_brute_force_scan() {
    // the pinball objective over {1..99} scanned directly on a fine grid
    let y: Vec<f64> = (1..=99).map(|i| i as f64).collect();
    let scan_best = |q: f64| -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        let mut c = 0.0;
        while c <= 100.0 {
            let loss: f64 = y
                .iter()
                .map(|yi| {
                    let e = yi - c;
                    e * (q - if e < 0.0 { 1.0 } else { 0.0 })
                })
                .sum();
            if loss < best.0 {
                best = (loss, c);
            }
            c += 0.01;
        }
        best.1
    };

    let design = vec![vec![1.0]; y.len()];
    let w = vec![1.0; y.len()];
    for q in [0.5, 0.9] {
        let oracle = scan_best(q);
        let fitted =
            fit_weighted_quantile(&design, &y, &w, q, QuantileFitOptions::default()).unwrap();
        assert!(
            (fitted[0] - oracle).abs() <= 1.0,
            "q={q}: fit {} vs scan {oracle}",
            fitted[0]
        );
    }
    // frozen values from the scan: the q-quantile of 1..99
    assert!((scan_best(0.5) - 50.0).abs() <= 0.02);
    assert!((scan_best(0.9) - 90.0).abs() <= 1.0);
}

#[test]
fn quantile_median_agrees_with_mean_under_symmetric_noise() {
    // Monte Carlo: symmetric noise makes the conditional median equal the
    // conditional mean; the two fits must agree within a few standard
    // errors at the fitting point.
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let noise = Normal::new(0.0, 2.0).unwrap();
    let n = 6_000;
    let data: Vec<Obs> = (0..n)
        .map(|_| {
            let r: f64 = rng.random();
            let h: f64 = rng.random();
            Obs {
                r,
                h,
                value: 30.0 - 8.0 * r + 2.0 * h + noise.sample(&mut rng),
            }
        })
        .collect();
    let center = [0.5, 0.5];
    let mean_fit = fit_local_mean(center, &data).unwrap();
    let median_fit = fit_local_quantile(center, &data, 0.5).unwrap();
    // effective n is in the thousands; 3 SEs of the local mean is roughly
    // 3 * sd / sqrt(n_eff)
    let tol = 3.0 * 2.0 / (mean_fit.effective_n as f64).sqrt() * 2.0;
    let diff = (mean_fit.predict_at_center() - median_fit.predict_at_center()).abs();
    assert!(diff < tol, "mean vs median gap {diff} exceeds {tol}");
}

#[test]
fn quantile_coverage_converges_to_nominal() {
    // known conditional law: value = plane + N(0,1); the fraction of
    // observations under the fitted q-surface must approach q
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let n = 50_000;
    let data: Vec<Obs> = (0..n)
        .map(|_| {
            let r: f64 = rng.random();
            let h: f64 = rng.random();
            Obs {
                r,
                h,
                value: 10.0 + 5.0 * r - 2.0 * h + noise.sample(&mut rng),
            }
        })
        .collect();

    let grid = FittingGrid::regular(4, 4).unwrap();
    for q in [0.1, 0.9] {
        // fit models over the grid, then evaluate each observation under
        // its nearest fitting point's local model
        let models: Vec<_> = grid
            .points
            .iter()
            .map(|&c| fit_local_quantile(c, &data, q).unwrap())
            .collect();
        let step = 1.0 / 3.0;
        let mut below = 0usize;
        for o in &data {
            let ri = (o.r / step).round().clamp(0.0, 3.0) as usize;
            let hi = (o.h / step).round().clamp(0.0, 3.0) as usize;
            let model = &models[hi * 4 + ri];
            if o.value <= model.predict(o.r, o.h) {
                below += 1;
            }
        }
        let frac = below as f64 / n as f64;
        assert!(
            (frac - q).abs() <= 0.02,
            "q={q}: empirical coverage {frac}"
        );
    }
}

#[test]
fn grid_predictions_invariant_to_affine_rescaling_of_inputs() {
    use chrono::{TimeZone, Utc};
    use indexmap::IndexMap;
    use meritdml::data::{MarketTable, Provenance};

    let n = 800;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let levels: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 40.0).collect();
    let hours: Vec<f64> = (0..n).map(|i| ((i / 2) % 24) as f64).collect();
    let values: Vec<f64> = levels
        .iter()
        .zip(&hours)
        .map(|(l, h)| 12.0 + 0.8 * l - 0.4 * h + (l * 0.3).sin())
        .collect();

    let build = |level_scale: f64, level_shift: f64| {
        let t0 = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let timestamps = (0..n)
            .map(|i| t0 + chrono::Duration::minutes(30 * i as i64))
            .collect();
        let mut cols = IndexMap::new();
        cols.insert(
            "level".to_string(),
            levels
                .iter()
                .map(|&l| Some(l * level_scale + level_shift))
                .collect(),
        );
        cols.insert(
            "hour".to_string(),
            hours.iter().map(|&h| Some(h)).collect::<Vec<_>>(),
        );
        cols.insert(
            "price".to_string(),
            values.iter().map(|&v| Some(v)).collect::<Vec<_>>(),
        );
        MarketTable::new(timestamps, cols, Provenance::default()).unwrap()
    };

    let grid = FittingGrid::regular(5, 5).unwrap();
    let base = fit_grid(&build(1.0, 0.0), "price", "level", GridKind::Mean, &grid).unwrap();
    let scaled = fit_grid(&build(7.5, -13.0), "price", "level", GridKind::Mean, &grid).unwrap();
    for (a, b) in base.predictions().iter().zip(scaled.predictions()) {
        match (a, b) {
            (Some(a), Some(b)) => assert!((a - b).abs() < 1e-9, "{a} vs {b}"),
            (a, b) => assert_eq!(a.is_some(), b.is_some()),
        }
    }
}

proptest! {
    #[test]
    fn tricube_kernel_properties(d1 in 0.0f64..5.0, d2 in 0.0f64..5.0) {
        let w1 = tricube_weight(d1);
        prop_assert!((0.0..=1.0).contains(&w1));
        // non-increasing
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(tricube_weight(lo) >= tricube_weight(hi));
        // compact support
        if d1 >= 1.0 {
            prop_assert_eq!(w1, 0.0);
        }
    }

    #[test]
    fn feature_expansion_consistency(r in -2.0f64..2.0, h in -2.0f64..2.0) {
        let z = expand_features(r, h);
        prop_assert_eq!(z[0], 1.0);
        prop_assert_eq!(z[3], r * r);
        prop_assert_eq!(z[4], r * h);
        prop_assert_eq!(z[5], h * h);
    }
}
