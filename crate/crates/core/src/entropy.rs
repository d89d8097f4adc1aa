//! Differential entropy (in bits) of Gaussian mixtures.
//!
//! Three routes are provided: a Monte Carlo estimator, a deterministic
//! adaptive quadrature used as the small-scale oracle, and analytic bounds
//! that sandwich the true value.

use std::f64::consts::{E, LN_2, PI};
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;
use crate::seed::{derive_seed, rng_from_seed};

pub const MIN_MC_SAMPLES: usize = 1_000;
pub const DEFAULT_MC_SAMPLES: usize = 100_000;
pub const DEFAULT_QUADRATURE_TOLERANCE: f64 = 1e-6;
pub const MAX_QUADRATURE_COMPONENTS: usize = 4096;

/// Integration support extends this many standard deviations past each mean.
const SUPPORT_SIGMAS: f64 = 10.0;
const GAUSS_LEGENDRE_ORDER: usize = 10;
const MAX_REFINEMENTS: u32 = 16;
const MC_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntropyMethod {
    MonteCarlo,
    Quadrature,
    LowerBound,
    UpperBound,
}

impl EntropyMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            EntropyMethod::MonteCarlo => "monte_carlo",
            EntropyMethod::Quadrature => "quadrature",
            EntropyMethod::LowerBound => "lower_bound",
            EntropyMethod::UpperBound => "upper_bound",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyEstimate {
    /// Bits.
    pub value: f64,
    /// Bits; zero for deterministic methods.
    pub std_error: f64,
    pub method: EntropyMethod,
}

impl EntropyEstimate {
    fn exact(value: f64, method: EntropyMethod) -> Self {
        EntropyEstimate {
            value,
            std_error: 0.0,
            method,
        }
    }
}

fn gaussian_entropy_bits(variance: f64) -> f64 {
    0.5 * (2.0 * PI * E * variance).log2()
}

/// `½ log2(2πeσ²)`, the entropy of the additive noise.
pub fn noise_entropy(noise_variance: f64) -> Result<f64> {
    if !(noise_variance > 0.0 && noise_variance.is_finite()) {
        return Err(Error::InvalidNoiseVariance(noise_variance));
    }
    Ok(gaussian_entropy_bits(noise_variance))
}

/// Running mean and sum of squared deviations (Welford), mergeable across
/// chunks with Chan's update.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0.0 {
            return other;
        }
        if other.n == 0.0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + delta * other.n / n,
            m2: self.m2 + other.m2 + delta * delta * self.n * other.n / n,
        }
    }

    fn sample_variance(&self) -> f64 {
        if self.n > 1.0 {
            self.m2 / (self.n - 1.0)
        } else {
            0.0
        }
    }
}

/// Monte Carlo estimate `-(1/n) Σ log2 f(y_i)` with `y_i` drawn from the
/// mixture. Work is split into fixed chunks with derived seeds, so the result
/// depends only on `seed`, not on the thread count.
pub fn mc_entropy(mix: &GaussianMixture, n_samples: usize, seed: u64) -> Result<EntropyEstimate> {
    if n_samples < MIN_MC_SAMPLES {
        return Err(Error::TooFewSamples {
            n: n_samples,
            min: MIN_MC_SAMPLES,
        });
    }
    let chunks = n_samples.div_ceil(MC_CHUNK);
    let partial: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let len = MC_CHUNK.min(n_samples - chunk * MC_CHUNK);
            let mut rng = rng_from_seed(derive_seed(seed, &[chunk as u64]));
            let mut moments = Moments::default();
            let means = mix.means();
            for _ in 0..len {
                let component = means[rng.random_range(0..means.len())];
                let z: f64 = StandardNormal.sample(&mut rng);
                let y = component + mix.sigma() * z;
                moments.push(-mix.log_pdf(y) / LN_2);
            }
            moments
        })
        .collect();
    let total = partial.into_iter().fold(Moments::default(), Moments::merge);
    Ok(EntropyEstimate {
        value: total.mean,
        std_error: (total.sample_variance() / total.n).sqrt(),
        method: EntropyMethod::MonteCarlo,
    })
}

/// Nodes and weights of the Gauss-Legendre rule on [-1, 1].
fn gauss_legendre() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GAUSS_LEGENDRE_ORDER;
        let mut rule = Vec::with_capacity(n);
        for i in 0..n {
            // Newton iteration from the Chebyshev-like initial guess
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        rule
    })
}

/// Disjoint intervals covering every `[mean - 10σ, mean + 10σ]`.
fn support(mix: &GaussianMixture) -> Vec<(f64, f64)> {
    let reach = SUPPORT_SIGMAS * mix.sigma();
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for &m in mix.means() {
        match intervals.last_mut() {
            Some(last) if m - reach <= last.1 => last.1 = m + reach,
            _ => intervals.push((m - reach, m + reach)),
        }
    }
    intervals
}

/// `-∫ f log2 f` over `intervals`, with panels of width at most `panel`.
fn integrate(mix: &GaussianMixture, intervals: &[(f64, f64)], panel: f64) -> (f64, usize) {
    let rule = gauss_legendre();
    let mut total = 0.0;
    let mut panels = 0;
    for &(a, b) in intervals {
        let n = ((b - a) / panel).ceil().max(1.0) as usize;
        let h = (b - a) / n as f64;
        panels += n;
        for p in 0..n {
            let mid = a + (p as f64 + 0.5) * h;
            let mut acc = 0.0;
            for &(x, w) in rule {
                let lf = mix.log_pdf(mid + 0.5 * h * x);
                acc += w * lf.exp() * lf;
            }
            total -= 0.5 * h * acc;
        }
    }
    (total / LN_2, panels)
}

/// Composite Gauss-Legendre integration of `-f log2 f`, halving the panel
/// width until successive estimates agree within `tolerance` bits.
pub fn quadrature_entropy_with_tolerance(
    mix: &GaussianMixture,
    tolerance: f64,
) -> Result<EntropyEstimate> {
    if mix.components() > MAX_QUADRATURE_COMPONENTS {
        return Err(Error::TooManyComponents {
            n: mix.components(),
            max: MAX_QUADRATURE_COMPONENTS,
        });
    }
    let intervals = support(mix);
    let mut panel = mix.sigma();
    let (mut previous, _) = integrate(mix, &intervals, panel);
    let mut last_delta = f64::INFINITY;
    let mut panels = 0;
    for _ in 0..MAX_REFINEMENTS {
        panel *= 0.5;
        let (current, n) = integrate(mix, &intervals, panel);
        last_delta = (current - previous).abs();
        panels = n;
        if last_delta < tolerance {
            return Ok(EntropyEstimate::exact(current, EntropyMethod::Quadrature));
        }
        previous = current;
    }
    Err(Error::QuadratureDiverged { panels, last_delta })
}

pub fn quadrature_entropy(mix: &GaussianMixture) -> Result<EntropyEstimate> {
    quadrature_entropy_with_tolerance(mix, DEFAULT_QUADRATURE_TOLERANCE)
}

/// `-(1/N) Σ_i log2[(1/N) Σ_j exp(-(μ_i - μ_j)² / scale)]`.
fn pairwise_term(means: &[f64], scale: f64) -> f64 {
    let n = means.len() as f64;
    let per_point = |mi: f64| -> f64 {
        let s: f64 = means.iter().map(|mj| (-(mi - mj).powi(2) / scale).exp()).sum();
        -(s / n).log2()
    };
    let sum: f64 = if means.len() >= 512 {
        means.par_iter().map(|&mi| per_point(mi)).sum()
    } else {
        means.iter().map(|&mi| per_point(mi)).sum()
    };
    sum / n
}

/// Analytic lower and upper bounds on the mixture entropy.
///
/// The lower bound is the largest of the conditioning bound `h(n)`, the
/// Gaussian-kernel bound with variance `2σ²`, and the Bhattacharyya pairwise
/// bound `h(n) + pairwise(8σ²)`. The upper bound is the smaller of the
/// Gaussian maximum-entropy bound and `log2 N + h(n)`.
pub fn entropy_bounds(mix: &GaussianMixture) -> (EntropyEstimate, EntropyEstimate) {
    let var = mix.noise_variance();
    let h_noise = gaussian_entropy_bits(var);
    let means = mix.means();

    // kernel bound: -E log2 Σ_j N(μ_i - μ_j; 0, 2σ²)/N
    let kernel = pairwise_term(means, 4.0 * var) + 0.5 * (4.0 * PI * var).log2();
    let bhattacharyya = h_noise + pairwise_term(means, 8.0 * var);
    let lower = h_noise.max(kernel).max(bhattacharyya);

    let max_entropy = gaussian_entropy_bits(mix.variance());
    let discrete = (means.len() as f64).log2() + h_noise;
    let upper = max_entropy.min(discrete);

    (
        EntropyEstimate::exact(lower, EntropyMethod::LowerBound),
        EntropyEstimate::exact(upper, EntropyMethod::UpperBound),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const H_UNIT: f64 = 2.047_095_585_180_641_8;

    fn mix(means: &[f64], var: f64) -> GaussianMixture {
        GaussianMixture::new(means.to_vec(), var).unwrap()
    }

    #[test]
    fn noise_entropy_values() {
        assert!(noise_entropy(1.0 / (2.0 * PI * E)).unwrap().abs() < 1e-15);
        assert!((noise_entropy(1.0).unwrap() - H_UNIT).abs() < 1e-15);
        let diff = noise_entropy(4.0).unwrap() - noise_entropy(1.0).unwrap();
        assert!((diff - 1.0).abs() < 1e-15);
        assert_eq!(noise_entropy(0.0), Err(Error::InvalidNoiseVariance(0.0)));
        assert!(noise_entropy(-1.0).is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre();
        let weight_sum: f64 = rule.iter().map(|(_, w)| w).sum();
        assert!((weight_sum - 2.0).abs() < 1e-14);
        // exact for degree 2n-1
        let x18: f64 = rule.iter().map(|(x, w)| w * x.powi(18)).sum();
        assert!((x18 - 2.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn quadrature_single_gaussian() {
        let h = quadrature_entropy(&mix(&[0.0], 1.0)).unwrap();
        assert!((h.value - H_UNIT).abs() < 1e-5);
        assert_eq!(h.std_error, 0.0);
        assert_eq!(h.method, EntropyMethod::Quadrature);
    }

    #[test]
    fn quadrature_separated_pair() {
        let h = quadrature_entropy(&mix(&[-10.0, 10.0], 1.0)).unwrap();
        assert!((h.value - (1.0 + H_UNIT)).abs() < 1e-4);
    }

    #[test]
    fn quadrature_rejects_huge_mixture() {
        let m = mix(&vec![0.0; MAX_QUADRATURE_COMPONENTS + 1], 1.0);
        assert!(matches!(
            quadrature_entropy(&m),
            Err(Error::TooManyComponents { .. })
        ));
    }

    #[test]
    fn quadrature_reports_divergence() {
        let m = mix(&[0.0, 1.0, 5.0], 1.0);
        assert!(matches!(
            quadrature_entropy_with_tolerance(&m, 0.0),
            Err(Error::QuadratureDiverged { .. })
        ));
    }

    #[test]
    fn mc_single_gaussian() {
        let h = mc_entropy(&mix(&[0.0], 1.0), 100_000, 3).unwrap();
        assert!((h.value - H_UNIT).abs() < 3.0 * h.std_error, "{h:?}");
        assert!(h.std_error > 0.0);
    }

    #[test]
    fn mc_separated_pair() {
        let h = mc_entropy(&mix(&[-10.0, 10.0], 1.0), 100_000, 5).unwrap();
        assert!((h.value - (1.0 + H_UNIT)).abs() < 3.0 * h.std_error, "{h:?}");
    }

    #[test]
    fn mc_is_deterministic_and_guards_sample_count() {
        let m = mix(&[-1.0, 0.5, 2.0], 0.5);
        assert_eq!(mc_entropy(&m, 5000, 9).unwrap(), mc_entropy(&m, 5000, 9).unwrap());
        assert_ne!(mc_entropy(&m, 5000, 9).unwrap(), mc_entropy(&m, 5000, 10).unwrap());
        assert_eq!(
            mc_entropy(&m, 999, 1),
            Err(Error::TooFewSamples { n: 999, min: 1000 })
        );
    }

    #[test]
    fn mc_large_constellation_below_saturation() {
        use crate::constellation::{sample_constellation, CovarianceMatrix};
        let x = sample_constellation(&CovarianceMatrix::identity(256), 21).unwrap();
        let m = GaussianMixture::from_points(x.amplitudes(), 1e3, 1.0).unwrap();
        let q = quadrature_entropy(&m).unwrap();
        let mc = mc_entropy(&m, 100_000, 4).unwrap();
        assert!(q.value <= 8.0 + H_UNIT);
        assert!(mc.value <= 8.0 + H_UNIT + 4.0 * mc.std_error);
        assert!((mc.value - q.value).abs() < 4.0 * mc.std_error);
        // more separation moves the entropy toward log2 M + h(n)
        let wider = GaussianMixture::from_points(x.amplitudes(), 1e7, 1.0).unwrap();
        let qw = quadrature_entropy(&wider).unwrap();
        assert!(qw.value > q.value);
        assert!(qw.value <= 8.0 + H_UNIT + 1e-6);
    }

    #[test]
    fn bounds_collapse_for_single_gaussian() {
        let (lo, hi) = entropy_bounds(&mix(&[0.0], 1.0));
        assert!((lo.value - H_UNIT).abs() < 1e-12);
        assert!((hi.value - H_UNIT).abs() < 1e-12);
        assert_eq!(lo.method, EntropyMethod::LowerBound);
        assert_eq!(hi.method, EntropyMethod::UpperBound);
    }

    #[test]
    fn bounds_for_separated_pair() {
        let (lo, hi) = entropy_bounds(&mix(&[-10.0, 10.0], 1.0));
        // exp(-400/8) is negligible: lower = h(n) - log2(1/2)
        assert!((hi.value - (1.0 + H_UNIT)).abs() < 1e-12);
        assert!((lo.value - (1.0 + H_UNIT)).abs() < 0.01);
    }

    #[test]
    fn bounds_collapse_at_zero_power() {
        let m = GaussianMixture::from_points(&[0.3, -1.0, 2.2, 0.9], 0.0, 2.0).unwrap();
        let (lo, hi) = entropy_bounds(&m);
        let h = noise_entropy(2.0).unwrap();
        assert_eq!(lo.value, h);
        assert_eq!(hi.value, h);
    }

    #[test]
    fn bounds_sandwich_quadrature() {
        let m = mix(&[-1.0, -0.2, 0.4, 3.0, 3.5], 0.3);
        let (lo, hi) = entropy_bounds(&m);
        let q = quadrature_entropy(&m).unwrap();
        assert!(lo.value <= q.value + 1e-6 && q.value <= hi.value + 1e-6);
        assert!(lo.value < hi.value);
    }

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37 % 101) as f64).sqrt()).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let merged = xs
            .chunks(77)
            .map(|c| {
                let mut m = Moments::default();
                c.iter().for_each(|&x| m.push(x));
                m
            })
            .fold(Moments::default(), Moments::merge);
        assert!((whole.mean - merged.mean).abs() < 1e-12);
        assert!((whole.sample_variance() - merged.sample_variance()).abs() < 1e-10);
    }
}
