//! Achievable rates of media-based modulation links.
//!
//! Single-user and `K`-user multiple-access links whose constellation
//! points are Gaussian channel realizations. The crate builds (correlated)
//! constellations and their superposition, evaluates the resulting
//! Gaussian-mixture output entropies, assembles MAC rate regions, and runs
//! SNR-sweep experiments that write CSV datasets.

pub mod constellation;
pub mod entropy;
pub mod error;
pub mod experiment;
pub mod mixture;
pub mod rates;
pub mod seed;
pub mod spectrum;

pub use constellation::{
    build_user_covariance, joint_covariance, sample_constellation, superpose, ConstellationSampler,
    CorrelationModel, CovarianceMatrix, JointConstellation, UserConstellation,
};
pub use entropy::{
    entropy_bounds, mc_entropy, noise_entropy, quadrature_entropy, EntropyEstimate, EntropyMethod,
};
pub use error::{Error, Result};
pub use mixture::{conditional_pdf, mixture_pdf, GaussianMixture};
pub use spectrum::{eigen_spectrum, lemma1_spectrum, majorizes, Spectrum};
