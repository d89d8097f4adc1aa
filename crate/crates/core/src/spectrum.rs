//! Eigen-spectra of covariance matrices and the majorization order on them.

use nalgebra::SymmetricEigen;

use crate::constellation::{check_symmetric, CovarianceMatrix};
use crate::error::{Error, Result};

/// Tolerance on partial sums and (relative) totals in [`majorizes`].
pub const MAJORIZATION_TOLERANCE: f64 = 1e-9;

/// Eigenvalues sorted in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
}

impl Spectrum {
    /// Build from arbitrary values; they are sorted descending.
    pub fn new(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Spectrum { eigenvalues }
    }

    /// Constant spectrum of `len` entries with the given total.
    pub fn flat(len: usize, total: f64) -> Self {
        Spectrum {
            eigenvalues: vec![total / len as f64; len],
        }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn largest(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Number of eigenvalues with magnitude at most `rel_tol · λ_max`.
    pub fn zero_count(&self, rel_tol: f64) -> usize {
        let threshold = rel_tol * self.largest().abs();
        self.eigenvalues
            .iter()
            .filter(|v| v.abs() <= threshold)
            .count()
    }
}

/// Numeric spectrum of a symmetric matrix.
pub fn eigen_spectrum(cov: &CovarianceMatrix) -> Result<Spectrum> {
    let matrix = cov.as_matrix();
    check_symmetric(matrix)?;
    let eig = SymmetricEigen::new(matrix.clone());
    Ok(Spectrum::new(eig.eigenvalues.iter().copied().collect()))
}

/// Closed-form spectrum of the uncorrelated `K`-user joint covariance:
/// one eigenvalue `K·M^(K-1)`, `K(M-1)` eigenvalues `M^(K-1)`, zeros for the rest.
pub fn lemma1_spectrum(users: usize, points: usize) -> Result<Spectrum> {
    if users == 0 {
        return Err(Error::NoUsers);
    }
    if points == 0 {
        return Err(Error::EmptyConstellation);
    }
    let k = u32::try_from(users).map_err(|_| Error::DimensionCap {
        dim: usize::MAX,
        cap: u32::MAX as usize,
    })?;
    let dim = points.checked_pow(k).ok_or(Error::DimensionCap {
        dim: usize::MAX,
        cap: usize::MAX,
    })?;
    let base = (points as f64).powi(users as i32 - 1);
    let repeated = users * (points - 1);
    let mut eigenvalues = Vec::with_capacity(dim);
    eigenvalues.push(users as f64 * base);
    eigenvalues.extend(std::iter::repeat_n(base, repeated));
    eigenvalues.resize(dim, 0.0);
    Ok(Spectrum { eigenvalues })
}

/// Number of zero eigenvalues predicted for the uncorrelated joint covariance.
pub fn lemma1_zero_count(users: usize, points: usize) -> usize {
    let dim = points.pow(users as u32);
    dim - 1 - users * (points - 1)
}

/// Whether `a` majorizes `b`: every partial sum of `a` dominates the one of
/// `b` and the totals agree.
///
/// Unequal totals yield [`Error::NotComparable`], which is distinct from
/// `Ok(false)`.
pub fn majorizes(a: &Spectrum, b: &Spectrum) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let sorted = |s: &Spectrum| s.eigenvalues.windows(2).all(|w| w[0] >= w[1]);
    if !sorted(a) || !sorted(b) {
        return Err(Error::UnsortedSpectrum);
    }
    let (total_a, total_b) = (a.total(), b.total());
    let scale = total_a.abs().max(total_b.abs()).max(1.0);
    if (total_a - total_b).abs() > MAJORIZATION_TOLERANCE * scale {
        return Err(Error::NotComparable { total_a, total_b });
    }
    let mut sum_a = 0.0;
    let mut sum_b = 0.0;
    for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
        sum_a += x;
        sum_b += y;
        if sum_a < sum_b - MAJORIZATION_TOLERANCE * scale {
            return Ok(false);
        }
    }
    Ok(true)
}
