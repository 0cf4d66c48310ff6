//! Small numeric helpers shared across modules: moments, percentiles,
//! the inverse normal CDF, and deterministic seed derivation.

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance (n-1 denominator). Returns 0.0 for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

pub fn sample_sd(values: &[f64]) -> f64 {
    sample_variance(values).sqrt()
}

/// Linear-interpolation percentile (inclusive convention): for sorted input
/// the value at fractional rank `q * (n - 1)`.
///
/// `q` is a fraction in [0, 1]. The input does not need to be sorted.
pub fn percentile_linear(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty slice");
    assert!((0.0..=1.0).contains(&q), "percentile fraction out of range");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in percentile"));
    interp_rank(&sorted, q * (sorted.len() - 1) as f64)
}

/// Lower bootstrap percentile bound at tail mass `alpha`.
///
/// Uses linear interpolation of the empirical CDF, i.e. fractional rank
/// `alpha * n - 1` (clamped to [0, n-1]). With this convention at most
/// `ceil(alpha * n) - 1` of the `n` estimates lie strictly below the bound,
/// for every `n`.
pub fn bootstrap_lower(sorted: &[f64], alpha: f64) -> f64 {
    interp_rank(sorted, alpha * sorted.len() as f64 - 1.0)
}

/// Upper bootstrap percentile bound at tail mass `alpha` (mirror of
/// [`bootstrap_lower`]): fractional rank `(1 - alpha) * n`.
pub fn bootstrap_upper(sorted: &[f64], alpha: f64) -> f64 {
    interp_rank(sorted, (1.0 - alpha) * sorted.len() as f64)
}

fn interp_rank(sorted: &[f64], rank: f64) -> f64 {
    let n = sorted.len();
    let rank = rank.clamp(0.0, (n - 1) as f64);
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if frac == 0.0 || lo + 1 >= n {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Inverse CDF of the standard normal distribution (Acklam's rational
/// approximation, relative error below 1.2e-9).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability must be in (0, 1)");

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Simple OLS slope of `y` on `t` with an intercept: cov(t, y) / var(t).
/// Returns `None` when the treatment variance is (numerically) zero.
pub fn ols_slope_with_intercept(t: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(t.len(), y.len());
    let n = t.len();
    if n < 2 {
        return None;
    }
    let tm = mean(t);
    let ym = mean(y);
    let mut stt = 0.0;
    let mut sty = 0.0;
    for i in 0..n {
        let dt = t[i] - tm;
        stt += dt * dt;
        sty += dt * (y[i] - ym);
    }
    if stt < 1e-12 {
        None
    } else {
        Some(sty / stt)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a base seed and two stream
/// indices. Used to give every (window, replicate) pair its own RNG so
/// parallel schedules cannot change results.
pub fn derive_stream_seed(base: u64, a: u64, b: u64) -> u64 {
    splitmix64(base ^ splitmix64(a.wrapping_add(1)) ^ splitmix64(b.wrapping_add(0x517C_C1B7_2722_0A95)))
}
