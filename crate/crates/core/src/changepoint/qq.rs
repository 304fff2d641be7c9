//! Normal QQ diagnostics for the residual stream.

use statrs::distribution::{ContinuousCDF, Normal};

/// `(theoretical, sample)` pairs: sorted residuals against standard normal
/// quantiles at Blom positions `(i − 3/8)/(n + 1/4)`.
pub fn normal_qq(residuals: &[f64]) -> Vec<(f64, f64)> {
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut sorted: Vec<f64> = residuals.iter().copied().filter(|x| x.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            let p = (i as f64 + 1.0 - 0.375) / (n + 0.25);
            (std_normal.inverse_cdf(p), x)
        })
        .collect()
}

/// Pearson correlation of the QQ points; 1 for an exactly normal shape.
pub fn qq_correlation(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return f64::NAN;
    }
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x / n, b + y / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Exp1, StandardNormal};

    use super::*;

    #[test]
    fn gaussian_sample_lies_on_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z: Vec<f64> = (0..2000).map(|_| 2.0 + 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
        let qq = normal_qq(&z);
        assert!(qq.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
        assert!(qq_correlation(&qq) > 0.998);
    }

    #[test]
    fn skewed_sample_bends() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z: Vec<f64> = (0..2000).map(|_| rng.sample::<f64, _>(Exp1).powi(3)).collect();
        assert!(qq_correlation(&normal_qq(&z)) < 0.9);
    }

    #[test]
    fn quantiles_are_symmetric() {
        let qq = normal_qq(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!((qq[0].0 + qq[4].0).abs() < 1e-12);
        assert!(qq[2].0.abs() < 1e-12);
    }
}
