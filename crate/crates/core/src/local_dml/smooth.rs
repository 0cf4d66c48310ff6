//! One-dimensional Gaussian smoothing with a reflected boundary.

use serde::{Deserialize, Serialize};

use crate::stats::sample_sd;

/// How the Gaussian-filter width is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SigmaSpec {
    /// Sigma given directly in window-index units.
    Index { sigma: f64 },
    /// Compatibility mode: sigma is `factor` times the standard deviation
    /// of the raw estimates, plugged in as index units (clamped to the
    /// sequence length). This mixes value units with index units on
    /// purpose, mirroring a common way such filters get configured in
    /// practice; prefer `Index` for new work.
    EstimateSdScaled { factor: f64 },
}

impl Default for SigmaSpec {
    fn default() -> Self {
        SigmaSpec::Index { sigma: 2.0 }
    }
}

impl SigmaSpec {
    /// Resolves to a concrete sigma in index units for a raw estimate
    /// sequence.
    pub fn resolve(&self, raw: &[f64]) -> f64 {
        match *self {
            SigmaSpec::Index { sigma } => sigma.max(0.0),
            SigmaSpec::EstimateSdScaled { factor } => {
                if raw.is_empty() {
                    0.0
                } else {
                    (factor.max(0.0) * sample_sd(raw)).min(raw.len() as f64)
                }
            }
        }
    }
}

/// Discrete Gaussian convolution with half-sample symmetric ("reflect")
/// boundary handling, which preserves the sequence mean exactly.
/// `sigma <= 0` returns the input unchanged.
pub fn gaussian_smooth(values: &[f64], sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 || values.len() < 2 {
        return values.to_vec();
    }
    let n = values.len() as isize;
    let radius = (4.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
    for j in -radius..=radius {
        kernel.push((-(j * j) as f64 * inv_two_sigma_sq).exp());
    }
    let total: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= total;
    }

    let reflect = |mut idx: isize| -> usize {
        loop {
            if idx < 0 {
                idx = -idx - 1;
            } else if idx >= n {
                idx = 2 * n - 1 - idx;
            } else {
                return idx as usize;
            }
        }
    };

    (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * values[reflect(i + k as isize - radius)])
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sequence_is_unchanged() {
        let v = vec![3.5; 40];
        let s = gaussian_smooth(&v, 2.0);
        for x in s {
            assert!((x - 3.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_sigma_is_identity() {
        let v: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
        assert_eq!(gaussian_smooth(&v, 0.0), v);
    }

    #[test]
    fn impulse_response_is_a_unit_mass_bell() {
        let mut v = vec![0.0; 41];
        v[20] = 1.0;
        let s = gaussian_smooth(&v, 1.0);
        let mass: f64 = s.iter().sum();
        assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
        // symmetric around the impulse
        for k in 1..=4 {
            assert!((s[20 - k] - s[20 + k]).abs() < 1e-12);
        }
        // peaked at the impulse
        assert!(s[20] > s[19] && s[19] > s[18]);
    }

    #[test]
    fn linear_ramp_interior_unchanged() {
        let v: Vec<f64> = (0..60).map(|i| 0.5 * i as f64 - 3.0).collect();
        let sigma = 1.5;
        let s = gaussian_smooth(&v, sigma);
        let radius = (4.0 * sigma).ceil() as usize;
        for i in radius..60 - radius {
            assert!(
                (s[i] - v[i]).abs() < 1e-9,
                "interior point {i} moved: {} vs {}",
                s[i],
                v[i]
            );
        }
    }

    #[test]
    fn mean_is_preserved_under_reflection() {
        let v: Vec<f64> = (0..37)
            .map(|i| ((i * 2654435761_usize) % 1000) as f64 / 100.0)
            .collect();
        for sigma in [0.5, 1.0, 2.0, 5.0] {
            let s = gaussian_smooth(&v, sigma);
            let m0: f64 = v.iter().sum::<f64>() / v.len() as f64;
            let m1: f64 = s.iter().sum::<f64>() / s.len() as f64;
            assert!((m0 - m1).abs() < 1e-9, "sigma {sigma}: {m0} vs {m1}");
        }
    }

    #[test]
    fn smoothing_is_linear() {
        let x: Vec<f64> = (0..25).map(|i| (i as f64 * 0.7).sin()).collect();
        let y: Vec<f64> = (0..25).map(|i| (i as f64 * 0.3).cos() * 2.0).collect();
        let (a, b) = (1.7, -0.4);
        let combined: Vec<f64> = x.iter().zip(&y).map(|(x, y)| a * x + b * y).collect();
        let lhs = gaussian_smooth(&combined, 1.5);
        let sx = gaussian_smooth(&x, 1.5);
        let sy = gaussian_smooth(&y, 1.5);
        for i in 0..25 {
            assert!((lhs[i] - (a * sx[i] + b * sy[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn sigma_spec_resolution() {
        let raw = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(SigmaSpec::Index { sigma: 2.0 }.resolve(&raw), 2.0);
        let sd = sample_sd(&raw);
        let resolved = SigmaSpec::EstimateSdScaled { factor: 1.5 }.resolve(&raw);
        assert!((resolved - 1.5 * sd).abs() < 1e-12);
        // clamped to the sequence length
        let wide = SigmaSpec::EstimateSdScaled { factor: 1e9 }.resolve(&raw);
        assert_eq!(wide, 5.0);
    }
}
