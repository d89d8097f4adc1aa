//! Equal-weight one-dimensional Gaussian mixtures with a common variance.
//!
//! This is the density of the received signal `y = √P·x(m) + n` when the
//! message `m` is uniform: one component per (joint) constellation point.

use std::f64::consts::PI;

use crate::constellation::UserConstellation;
use crate::error::{Error, Result};

/// Components further than this (in squared standard deviations, beyond the
/// nearest one) are below `e^-50` relative to the dominant term and skipped.
const WINDOW_EXPONENT: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    /// Sorted ascending; the density is invariant to component order.
    means: Vec<f64>,
    noise_variance: f64,
    sigma: f64,
}

impl GaussianMixture {
    pub fn new(mut means: Vec<f64>, noise_variance: f64) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::EmptyConstellation);
        }
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(Error::InvalidNoiseVariance(noise_variance));
        }
        if let Some(&bad) = means.iter().find(|m| !m.is_finite()) {
            return Err(Error::NonFiniteMean(bad));
        }
        means.sort_by(f64::total_cmp);
        Ok(GaussianMixture {
            means,
            noise_variance,
            sigma: noise_variance.sqrt(),
        })
    }

    /// Mixture of the received signal for amplitudes `points` at power `power`.
    pub fn from_points(points: &[f64], power: f64, noise_variance: f64) -> Result<Self> {
        if !(power >= 0.0 && power.is_finite()) {
            return Err(Error::InvalidPower(power));
        }
        let gain = power.sqrt();
        Self::new(points.iter().map(|x| gain * x).collect(), noise_variance)
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn components(&self) -> usize {
        self.means.len()
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mean(&self) -> f64 {
        self.means.iter().sum::<f64>() / self.means.len() as f64
    }

    /// Variance of the mixture: spread of the means plus the noise variance.
    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        let spread =
            self.means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / self.means.len() as f64;
        spread + self.noise_variance
    }

    /// Natural log of the density, via log-sum-exp over nearby components.
    pub fn log_pdf(&self, y: f64) -> f64 {
        let means = &self.means;
        let idx = means.partition_point(|&m| m < y);
        let nearest = [idx.checked_sub(1), (idx < means.len()).then_some(idx)]
            .into_iter()
            .flatten()
            .map(|i| (y - means[i]).powi(2))
            .fold(f64::INFINITY, f64::min);
        let half_width = (nearest + WINDOW_EXPONENT * self.noise_variance).sqrt();
        let lo = means.partition_point(|&m| m < y - half_width);
        let hi = means.partition_point(|&m| m <= y + half_width);

        let inv_two_var = 0.5 / self.noise_variance;
        let max_exp = -nearest * inv_two_var;
        let sum: f64 = means[lo..hi]
            .iter()
            .map(|m| (-(y - m).powi(2) * inv_two_var - max_exp).exp())
            .sum();
        max_exp + sum.ln()
            - (means.len() as f64).ln()
            - 0.5 * (2.0 * PI * self.noise_variance).ln()
    }

    pub fn pdf(&self, y: f64) -> f64 {
        self.log_pdf(y).exp()
    }

    /// The same mixture with every mean shifted by `offset`.
    pub fn shifted(&self, offset: f64) -> Self {
        GaussianMixture {
            means: self.means.iter().map(|m| m + offset).collect(),
            ..self.clone()
        }
    }
}

/// `(1/N) Σ_m N(y; mean_m, σ²)`.
pub fn mixture_pdf(mix: &GaussianMixture, y: f64) -> f64 {
    mix.pdf(y)
}

/// Density of `y` given user `k`'s constellation: an `M`-term mixture over the
/// user's own points at power `power`.
pub fn conditional_pdf(
    user: &UserConstellation,
    power: f64,
    noise_variance: f64,
    y: f64,
) -> Result<f64> {
    Ok(GaussianMixture::from_points(user.amplitudes(), power, noise_variance)?.pdf(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::superpose;

    fn gaussian(y: f64, mean: f64, var: f64) -> f64 {
        (-(y - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
    }

    #[test]
    fn standard_normal_peak() {
        let mix = GaussianMixture::new(vec![0.0], 1.0).unwrap();
        assert!((mixture_pdf(&mix, 0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn sign_and_order_symmetry() {
        let a = GaussianMixture::new(vec![-1.3, 1.3], 1.0).unwrap();
        let b = GaussianMixture::new(vec![1.3, -1.3], 1.0).unwrap();
        for y in [-2.0, -0.4, 0.0, 0.7, 3.1] {
            assert_eq!(a.pdf(y), b.pdf(y));
            assert!((a.pdf(y) - a.pdf(-y)).abs() < 1e-16);
        }
    }

    #[test]
    fn joint_mixture_matches_direct_sum() {
        let u1 = UserConstellation::new(vec![0.4, -1.1], 0).unwrap();
        let u2 = UserConstellation::new(vec![0.9, 0.2], 0).unwrap();
        let joint = superpose(&[u1.clone(), u2.clone()]).unwrap();
        let var = 0.1;
        let mix = GaussianMixture::new(joint.points().to_vec(), var).unwrap();
        for i in 0..=100 {
            let y = -3.0 + 6.0 * i as f64 / 100.0;
            let mut direct = 0.0;
            for a in u1.amplitudes() {
                for b in u2.amplitudes() {
                    direct += gaussian(y, a + b, var) / 4.0;
                }
            }
            let got = mixture_pdf(&mix, y);
            assert!((got - direct).abs() <= 1e-13 * direct.max(1e-300), "y={y}");
        }
    }

    #[test]
    fn tails_do_not_underflow() {
        let mix = GaussianMixture::new(vec![0.0, 1.0], 1.0).unwrap();
        assert!(mix.pdf(38.9) > 0.0);
        // far beyond f64 range the log density is still finite
        let lp = mix.log_pdf(1e4);
        assert!(lp.is_finite());
        assert!((lp - (-(1e4 - 1.0_f64).powi(2) / 2.0 - 2f64.ln() - 0.5 * (2.0 * PI).ln())).abs() < 1e-6);
    }

    #[test]
    fn windowing_matches_full_sum() {
        let means: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin() * 40.0).collect();
        let mix = GaussianMixture::new(means.clone(), 0.7).unwrap();
        for i in 0..200 {
            let y = -50.0 + i as f64 * 0.5;
            let direct: f64 = means.iter().map(|&m| gaussian(y, m, 0.7)).sum::<f64>() / 200.0;
            if direct > 1e-250 {
                assert!((mix.pdf(y) / direct - 1.0).abs() < 1e-12, "y={y}");
            }
        }
    }

    #[test]
    fn conditional_single_point_peak() {
        let user = UserConstellation::new(vec![0.8], 0).unwrap();
        let p: f64 = 9.0;
        let y = p.sqrt() * 0.8;
        let got = conditional_pdf(&user, p, 2.0, y).unwrap();
        assert!((got - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn conditional_zero_power_is_noise() {
        let user = UserConstellation::new(vec![0.8, -2.0], 0).unwrap();
        for y in [-1.0, 0.0, 2.5] {
            let got = conditional_pdf(&user, 0.0, 1.5, y).unwrap();
            assert!((got - gaussian(y, 0.0, 1.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn conditional_matches_scaled_mixture() {
        let user = UserConstellation::new(vec![0.3, -0.7, 1.9, -1.4], 5).unwrap();
        let p = 4.0;
        let mix = GaussianMixture::new(user.amplitudes().iter().map(|a| 2.0 * a).collect(), 0.5)
            .unwrap();
        for y in [-4.0, -1.0, 0.0, 0.5, 3.3] {
            let got = conditional_pdf(&user, p, 0.5, y).unwrap();
            let direct: f64 = user
                .amplitudes()
                .iter()
                .map(|a| gaussian(y, 2.0 * a, 0.5))
                .sum::<f64>()
                / 4.0;
            assert!((got - mix.pdf(y)).abs() < 1e-15);
            assert!((got - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_invalid() {
        assert_eq!(
            GaussianMixture::new(vec![0.0], 0.0),
            Err(Error::InvalidNoiseVariance(0.0))
        );
        assert_eq!(GaussianMixture::new(vec![], 1.0), Err(Error::EmptyConstellation));
        assert!(GaussianMixture::new(vec![f64::NAN], 1.0).is_err());
        assert_eq!(
            GaussianMixture::from_points(&[1.0], -1.0, 1.0),
            Err(Error::InvalidPower(-1.0))
        );
    }
}
