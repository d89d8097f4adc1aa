//! Achievable rates: single-user links, `K`-user MAC subset constraints,
//! AWGN baselines and ergodic averages over constellation draws.
//!
//! Conditioning on the messages of the users outside a subset `S` only
//! shifts the output mixture, and mixture entropy is shift invariant, so
//! `I(x_S; y | x_{S^c}) = h(mixture over superpose(S)) - h(n)`.

use rayon::prelude::*;

use crate::constellation::{
    build_user_covariance, superpose_capped, ConstellationSampler, CorrelationModel,
    UserConstellation, DEFAULT_DIMENSION_CAP,
};
use crate::entropy::{
    entropy_bounds, mc_entropy, noise_entropy, quadrature_entropy, DEFAULT_MC_SAMPLES,
};
use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;
use crate::seed::derive_seed;

pub const DEFAULT_REALIZATIONS: usize = 200;

/// Linear transmit power for an SNR in dB: `σ² · 10^(dB/10)`.
pub fn power_from_snr_db(snr_db: f64, noise_variance: f64) -> f64 {
    noise_variance * 10f64.powf(snr_db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    MonteCarlo { samples: usize },
    Quadrature,
}

impl Estimator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Estimator::MonteCarlo { .. } => "monte_carlo",
            Estimator::Quadrature => "quadrature",
        }
    }
}

impl Default for Estimator {
    fn default() -> Self {
        Estimator::MonteCarlo {
            samples: DEFAULT_MC_SAMPLES,
        }
    }
}

/// Parameters of a (multi-user) MBM link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub users: usize,
    /// Points per user, `M = 2^N_P`.
    pub points: usize,
    /// Per-user transmit power (linear).
    pub power: f64,
    pub noise_variance: f64,
    /// One model per user.
    pub correlation: Vec<CorrelationModel>,
    pub realizations: usize,
    pub estimator: Estimator,
    /// Largest joint mixture built for any subset.
    pub dimension_cap: usize,
}

impl LinkConfig {
    /// Uncorrelated users, unit noise variance, quadrature estimator.
    pub fn new(users: usize, points: usize, power: f64) -> Self {
        LinkConfig {
            users,
            points,
            power,
            noise_variance: 1.0,
            correlation: vec![CorrelationModel::Uncorrelated; users],
            realizations: DEFAULT_REALIZATIONS,
            estimator: Estimator::Quadrature,
            dimension_cap: DEFAULT_DIMENSION_CAP,
        }
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.power = power_from_snr_db(snr_db, self.noise_variance);
        self
    }

    /// Same model for every user.
    pub fn with_correlation(mut self, model: CorrelationModel) -> Self {
        self.correlation = vec![model; self.users];
        self
    }

    pub fn with_realizations(mut self, realizations: usize) -> Self {
        self.realizations = realizations;
        self
    }

    pub fn with_estimator(mut self, estimator: Estimator) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn snr(&self) -> f64 {
        self.power / self.noise_variance
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(Error::NoUsers);
        }
        if self.points == 0 {
            return Err(Error::EmptyConstellation);
        }
        if !(self.power >= 0.0 && self.power.is_finite()) {
            return Err(Error::InvalidPower(self.power));
        }
        noise_entropy(self.noise_variance)?;
        if self.correlation.len() != self.users {
            return Err(Error::CorrelationCount {
                users: self.users,
                found: self.correlation.len(),
            });
        }
        for model in &self.correlation {
            model.validate()?;
        }
        if self.realizations == 0 {
            return Err(Error::NoRealizations);
        }
        Ok(())
    }
}

/// Nonempty subset of users `{1..K}`, stored as a bit mask (bit `k-1` for user `k`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UserSubset(u32);

impl UserSubset {
    pub fn new(mask: u32, users: usize) -> Result<Self> {
        if mask == 0 || users >= 32 || mask >> users != 0 {
            return Err(Error::InvalidSubset { mask, users });
        }
        Ok(UserSubset(mask))
    }

    pub fn full(users: usize) -> Self {
        UserSubset((1u32 << users) - 1)
    }

    /// Single user `k` (one-based).
    pub fn single(user: usize) -> Self {
        UserSubset(1 << (user - 1))
    }

    /// All `2^K - 1` nonempty subsets in mask order.
    pub fn all(users: usize) -> impl Iterator<Item = UserSubset> {
        (1u32..(1u32 << users)).map(UserSubset)
    }

    pub fn mask(&self) -> u32 {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    /// Zero-based user indices in ascending order.
    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..32).filter(move |k| self.0 & (1 << k) != 0)
    }

    pub fn contains(&self, other: UserSubset) -> bool {
        self.0 & other.0 == other.0
    }

    /// One-based members joined by `+`, e.g. `1+2`.
    pub fn label(&self) -> String {
        self.members()
            .map(|k| (k + 1).to_string())
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// One constraint `R_S < I(x_S; y | x_{S^c})` with its entropy-bound envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetRate {
    pub subset: UserSubset,
    pub rate_bits: f64,
    pub std_error_bits: f64,
    pub lower_bound_bits: f64,
    pub upper_bound_bits: f64,
}

/// The `2^K - 1` subset constraints of a MAC, plus pentagon corners when `K = 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRegion {
    pub users: usize,
    pub constraints: Vec<SubsetRate>,
}

impl RateRegion {
    pub fn constraint(&self, subset: UserSubset) -> Option<&SubsetRate> {
        self.constraints.iter().find(|c| c.subset == subset)
    }

    pub fn sum_rate(&self) -> Option<&SubsetRate> {
        self.constraint(UserSubset::full(self.users))
    }

    /// The two non-trivial vertices of the 2-user pentagon:
    /// `(I(x1;y|x2), sum - I(x1;y|x2))` and `(sum - I(x2;y|x1), I(x2;y|x1))`.
    pub fn corner_points(&self) -> Option<[(f64, f64); 2]> {
        if self.users != 2 {
            return None;
        }
        let r1 = self.constraint(UserSubset::single(1))?.rate_bits;
        let r2 = self.constraint(UserSubset::single(2))?.rate_bits;
        let sum = self.sum_rate()?.rate_bits;
        Some([
            (r1, (sum - r1).clamp(0.0, r2)),
            ((sum - r2).clamp(0.0, r1), r2),
        ])
    }
}

fn mixture_for(config: &LinkConfig, users: &[UserConstellation], subset: UserSubset) -> Result<GaussianMixture> {
    let selected: Vec<UserConstellation> = subset.members().map(|k| users[k].clone()).collect();
    let joint = superpose_capped(&selected, config.dimension_cap)?;
    GaussianMixture::from_points(joint.points(), config.power, config.noise_variance)
}

fn subset_seed(users: &[UserConstellation], subset: UserSubset) -> u64 {
    let path: Vec<u64> = std::iter::once(subset.mask() as u64)
        .chain(users.iter().map(|u| u.seed()))
        .collect();
    derive_seed(0x6d62_6d5f_7261_7465, &path)
}

/// `I(x_S; y | x_{S^c})` for one realization of the user constellations.
///
/// Monte Carlo draws are seeded from the constellation seeds and the subset,
/// so the result is deterministic.
pub fn subset_rate(
    config: &LinkConfig,
    users: &[UserConstellation],
    subset: UserSubset,
) -> Result<SubsetRate> {
    if users.len() != config.users {
        return Err(Error::MismatchedPoints {
            expected: config.users,
            found: users.len(),
        });
    }
    let subset = UserSubset::new(subset.mask(), config.users)?;
    let h_noise = noise_entropy(config.noise_variance)?;
    let mix = mixture_for(config, users, subset)?;
    let estimate = match config.estimator {
        Estimator::Quadrature => quadrature_entropy(&mix)?,
        Estimator::MonteCarlo { samples } => {
            mc_entropy(&mix, samples, subset_seed(users, subset))?
        }
    };
    let (lower, upper) = entropy_bounds(&mix);
    Ok(SubsetRate {
        subset,
        rate_bits: (estimate.value - h_noise).max(0.0),
        std_error_bits: estimate.std_error,
        lower_bound_bits: (lower.value - h_noise).max(0.0),
        upper_bound_bits: (upper.value - h_noise).max(0.0),
    })
}

/// `I(x(m); y) = h(y) - h(n)` for a single-user link.
pub fn single_user_rate(config: &LinkConfig, constellation: &UserConstellation) -> Result<SubsetRate> {
    if config.users != 1 {
        return Err(Error::MismatchedPoints {
            expected: 1,
            found: config.users,
        });
    }
    subset_rate(config, std::slice::from_ref(constellation), UserSubset::full(1))
}

/// Every subset constraint for one realization.
pub fn mac_region(config: &LinkConfig, users: &[UserConstellation]) -> Result<RateRegion> {
    let constraints = UserSubset::all(config.users)
        .map(|s| subset_rate(config, users, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(RateRegion {
        users: config.users,
        constraints,
    })
}

/// Real-channel Gaussian-codebook capacity `½ log2(1 + P/σ²)`.
pub fn awgn_capacity(power: f64, noise_variance: f64) -> f64 {
    0.5 * (1.0 + power / noise_variance).log2()
}

/// Complex-channel Gaussian-codebook capacity `log2(1 + P/σ²)`.
pub fn awgn_capacity_complex(power: f64, noise_variance: f64) -> f64 {
    (1.0 + power / noise_variance).log2()
}

/// Gaussian-codebook MAC region with equal per-user power: subset `S` is
/// bounded by `½ log2(1 + |S| P/σ²)`.
pub fn awgn_mac_region(users: usize, power: f64, noise_variance: f64) -> RateRegion {
    let constraints = UserSubset::all(users)
        .map(|subset| {
            let c = awgn_capacity(subset.len() as f64 * power, noise_variance);
            SubsetRate {
                subset,
                rate_bits: c,
                std_error_bits: 0.0,
                lower_bound_bits: c,
                upper_bound_bits: c,
            }
        })
        .collect();
    RateRegion { users, constraints }
}

/// Ergodic mean of one subset constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragedRate {
    pub subset: UserSubset,
    pub mean_bits: f64,
    /// Standard error of the mean across realizations.
    pub std_error_bits: f64,
    pub lower_bound_bits: f64,
    pub upper_bound_bits: f64,
}

impl AveragedRate {
    /// Normal-approximation 95% confidence interval.
    pub fn ci95(&self) -> (f64, f64) {
        let half = 1.96 * self.std_error_bits;
        (self.mean_bits - half, self.mean_bits + half)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicRegion {
    pub users: usize,
    pub realizations: usize,
    pub constraints: Vec<AveragedRate>,
    /// Per-realization regions in draw order.
    pub samples: Vec<RateRegion>,
}

impl ErgodicRegion {
    pub fn constraint(&self, subset: UserSubset) -> Option<&AveragedRate> {
        self.constraints.iter().find(|c| c.subset == subset)
    }

    pub fn sum_rate(&self) -> Option<&AveragedRate> {
        self.constraint(UserSubset::full(self.users))
    }

    /// Region built from the mean constraints.
    pub fn mean_region(&self) -> RateRegion {
        RateRegion {
            users: self.users,
            constraints: self
                .constraints
                .iter()
                .map(|c| SubsetRate {
                    subset: c.subset,
                    rate_bits: c.mean_bits,
                    std_error_bits: c.std_error_bits,
                    lower_bound_bits: c.lower_bound_bits,
                    upper_bound_bits: c.upper_bound_bits,
                })
                .collect(),
        }
    }
}

/// Draw the users' constellations for realization `index`.
///
/// User `k` of realization `r` uses seed `derive_seed(master, [r, k])`, so two
/// configurations that differ only in correlation share their underlying
/// standard-normal draws.
pub fn draw_users(
    samplers: &[ConstellationSampler],
    master_seed: u64,
    index: usize,
) -> Vec<UserConstellation> {
    samplers
        .iter()
        .enumerate()
        .map(|(k, s)| s.sample(derive_seed(master_seed, &[index as u64, k as u64])))
        .collect()
}

pub fn samplers_for(config: &LinkConfig) -> Result<Vec<ConstellationSampler>> {
    config
        .correlation
        .iter()
        .map(|&model| ConstellationSampler::new(&build_user_covariance(config.points, model)?))
        .collect()
}

/// Mean and standard error of every subset constraint over
/// `config.realizations` independent constellation draws.
pub fn ergodic_average(config: &LinkConfig, master_seed: u64) -> Result<ErgodicRegion> {
    config.validate()?;
    let samplers = samplers_for(config)?;
    let samples = (0..config.realizations)
        .into_par_iter()
        .map(|r| mac_region(config, &draw_users(&samplers, master_seed, r)))
        .collect::<Result<Vec<_>>>()?;

    let n = samples.len() as f64;
    let constraints = UserSubset::all(config.users)
        .enumerate()
        .map(|(i, subset)| {
            let rates: Vec<&SubsetRate> = samples.iter().map(|s| &s.constraints[i]).collect();
            let mean = rates.iter().map(|r| r.rate_bits).sum::<f64>() / n;
            let std_error = if samples.len() > 1 {
                let var = rates.iter().map(|r| (r.rate_bits - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                rates[0].std_error_bits
            };
            AveragedRate {
                subset,
                mean_bits: mean,
                std_error_bits: std_error,
                lower_bound_bits: rates.iter().map(|r| r.lower_bound_bits).sum::<f64>() / n,
                upper_bound_bits: rates.iter().map(|r| r.upper_bound_bits).sum::<f64>() / n,
            }
        })
        .collect();

    Ok(ErgodicRegion {
        users: config.users,
        realizations: config.realizations,
        constraints,
        samples,
    })
}
