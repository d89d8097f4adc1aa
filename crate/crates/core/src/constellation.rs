//! Per-user constellation diagrams, their superposition at a multiple-access
//! receiver, and the covariance matrices that govern both.
//!
//! A user's constellation is a vector of `M` real amplitudes drawn from
//! `N(0, Σ)`. With `K` users the receiver observes one of `M^K` superposed
//! points, indexed by the message tuple `(m_1, …, m_K)` in row-major order
//! (`m_1` varies slowest).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Largest joint dimension built as a dense matrix unless the caller raises it.
pub const DEFAULT_DIMENSION_CAP: usize = 4096;

/// Absolute tolerance for the symmetry check on covariance matrices.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Eigenvalues down to `-PSD_RELATIVE_TOLERANCE * λ_max` are treated as zero.
pub const PSD_RELATIVE_TOLERANCE: f64 = 1e-9;

/// How the entries of one user's constellation are correlated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrelationModel {
    Uncorrelated,
    /// Every off-diagonal entry equals `rho`.
    Uniform { rho: f64 },
    /// Entry `(n, l)` equals `rho^|n - l|`.
    Exponential { rho: f64 },
}

impl CorrelationModel {
    pub fn rho(&self) -> f64 {
        match *self {
            CorrelationModel::Uncorrelated => 0.0,
            CorrelationModel::Uniform { rho } | CorrelationModel::Exponential { rho } => rho,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rho = self.rho();
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidCorrelation { rho });
        }
        Ok(())
    }

    /// Correlation between entries `n` and `l` of one user's constellation.
    pub fn coefficient(&self, n: usize, l: usize) -> f64 {
        if n == l {
            return 1.0;
        }
        match *self {
            CorrelationModel::Uncorrelated => 0.0,
            CorrelationModel::Uniform { rho } => rho,
            CorrelationModel::Exponential { rho } => rho.powi(n.abs_diff(l) as i32),
        }
    }

    /// Short label used in result tables, e.g. `exponential(0.9)`.
    pub fn label(&self) -> String {
        match *self {
            CorrelationModel::Uncorrelated => "uncorrelated".to_string(),
            CorrelationModel::Uniform { rho } => format!("uniform({rho})"),
            CorrelationModel::Exponential { rho } => format!("exponential({rho})"),
        }
    }
}

/// Symmetric positive-semidefinite covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    entries: DMatrix<f64>,
}

impl CovarianceMatrix {
    /// Wrap a matrix after checking that it is square and symmetric.
    ///
    /// Positive semidefiniteness is checked lazily by the consumers that need
    /// it (see [`CovarianceMatrix::check_psd`]) since it costs an
    /// eigendecomposition.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&entries)?;
        Ok(CovarianceMatrix { entries })
    }

    pub fn from_row_slice(dim: usize, values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(dim, dim, values))
    }

    pub fn identity(dim: usize) -> Self {
        CovarianceMatrix {
            entries: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[(row, col)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|r| (0..n).all(|c| r == c || self.entries[(r, c)] == 0.0))
    }

    /// Verify all eigenvalues are at least `-1e-9 · λ_max`.
    pub fn check_psd(&self) -> Result<()> {
        let eig = SymmetricEigen::new(self.entries.clone());
        psd_check(eig.eigenvalues.as_slice()).map(|_| ())
    }
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    for r in 0..rows {
        for c in (r + 1)..cols {
            let asymmetry = (m[(r, c)] - m[(c, r)]).abs();
            if asymmetry > SYMMETRY_TOLERANCE || asymmetry.is_nan() {
                return Err(Error::NotSymmetric {
                    row: r,
                    col: c,
                    asymmetry,
                });
            }
        }
    }
    Ok(())
}

/// Returns the largest eigenvalue if the spectrum passes the PSD tolerance.
fn psd_check(eigenvalues: &[f64]) -> Result<f64> {
    let max = eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let min = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let tolerance = PSD_RELATIVE_TOLERANCE * max;
    if min < -tolerance {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min,
            tolerance,
        });
    }
    Ok(max)
}

/// Unit-diagonal covariance of one user's `M` constellation entries.
pub fn build_user_covariance(points: usize, model: CorrelationModel) -> Result<CovarianceMatrix> {
    if points == 0 {
        return Err(Error::EmptyConstellation);
    }
    model.validate()?;
    let entries = DMatrix::from_fn(points, points, |n, l| model.coefficient(n, l));
    Ok(CovarianceMatrix { entries })
}

/// The `M` real amplitudes one user's channel perturbations produce.
#[derive(Debug, Clone, PartialEq)]
pub struct UserConstellation {
    amplitudes: Vec<f64>,
    seed: u64,
}

impl UserConstellation {
    pub fn new(amplitudes: Vec<f64>, seed: u64) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::EmptyConstellation);
        }
        Ok(UserConstellation { amplitudes, seed })
    }

    pub fn points(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Multiply every amplitude by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        UserConstellation {
            amplitudes: self.amplitudes.iter().map(|a| a * factor).collect(),
            seed: self.seed,
        }
    }
}

/// Draws constellations from `N(0, Σ)` using a precomputed factor `L` with
/// `L Lᵀ = Σ`.
///
/// The factor comes from the eigendecomposition with slightly negative
/// eigenvalues clipped to zero, so rank-deficient covariances are accepted.
#[derive(Debug, Clone)]
pub struct ConstellationSampler {
    factor: Factor,
}

#[derive(Debug, Clone)]
enum Factor {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl ConstellationSampler {
    pub fn new(cov: &CovarianceMatrix) -> Result<Self> {
        if cov.dim() == 0 {
            return Err(Error::EmptyConstellation);
        }
        if cov.is_diagonal() {
            let diag: Vec<f64> = cov.entries.diagonal().iter().copied().collect();
            psd_check(&diag)?;
            let sd = diag.iter().map(|v| v.max(0.0).sqrt()).collect();
            return Ok(ConstellationSampler {
                factor: Factor::Diagonal(sd),
            });
        }
        let eig = SymmetricEigen::new(cov.entries.clone());
        psd_check(eig.eigenvalues.as_slice())?;
        let mut factor = eig.eigenvectors;
        for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
            let s = lambda.max(0.0).sqrt();
            factor.column_mut(j).scale_mut(s);
        }
        Ok(ConstellationSampler {
            factor: Factor::Dense(factor),
        })
    }

    pub fn points(&self) -> usize {
        match &self.factor {
            Factor::Diagonal(sd) => sd.len(),
            Factor::Dense(m) => m.nrows(),
        }
    }

    /// Deterministic draw for a given seed.
    pub fn sample(&self, seed: u64) -> UserConstellation {
        let mut rng = rng_from_seed(seed);
        let n = self.points();
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let amplitudes = match &self.factor {
            Factor::Diagonal(sd) => z.iter().zip(sd).map(|(z, s)| z * s).collect(),
            Factor::Dense(l) => (l * DVector::from_vec(z)).as_slice().to_vec(),
        };
        UserConstellation { amplitudes, seed }
    }
}

/// Draw one constellation from `N(0, cov)`.
pub fn sample_constellation(cov: &CovarianceMatrix, seed: u64) -> Result<UserConstellation> {
    Ok(ConstellationSampler::new(cov)?.sample(seed))
}

/// The `M^K` superposed points of a `K`-user multiple-access channel.
#[derive(Debug, Clone, PartialEq)]
pub struct JointConstellation {
    users: usize,
    points_per_user: usize,
    points: Vec<f64>,
}

impl JointConstellation {
    pub fn users(&self) -> usize {
        self.users
    }

    pub fn points_per_user(&self) -> usize {
        self.points_per_user
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Point for the message tuple `messages` (zero-based, `m_1` first).
    pub fn point(&self, messages: &[usize]) -> f64 {
        self.points[tuple_index(messages, self.points_per_user)]
    }
}

pub(crate) fn tuple_index(messages: &[usize], points: usize) -> usize {
    messages.iter().fold(0, |acc, &m| acc * points + m)
}

/// Row-major digits of `index` in base `points`, `users` digits long.
pub(crate) fn tuple_digits(mut index: usize, points: usize, users: usize) -> Vec<usize> {
    let mut digits = vec![0; users];
    for d in digits.iter_mut().rev() {
        *d = index % points;
        index /= points;
    }
    digits
}

fn checked_pow(points: usize, users: usize, cap: usize) -> Result<usize> {
    let dim = u32::try_from(users)
        .ok()
        .and_then(|k| points.checked_pow(k))
        .unwrap_or(usize::MAX);
    if dim > cap {
        return Err(Error::DimensionCap { dim, cap });
    }
    Ok(dim)
}

/// Sum every combination of user points, `m_1` varying slowest.
pub fn superpose(users: &[UserConstellation]) -> Result<JointConstellation> {
    superpose_capped(users, usize::MAX)
}

/// [`superpose`] with a guard on the number of joint points.
pub fn superpose_capped(users: &[UserConstellation], cap: usize) -> Result<JointConstellation> {
    let first = users.first().ok_or(Error::NoUsers)?;
    let m = first.points();
    if let Some(bad) = users.iter().find(|u| u.points() != m) {
        return Err(Error::MismatchedPoints {
            expected: m,
            found: bad.points(),
        });
    }
    checked_pow(m, users.len(), cap)?;
    let mut points = first.amplitudes.clone();
    for user in &users[1..] {
        points = points
            .iter()
            .flat_map(|&acc| user.amplitudes.iter().map(move |&a| acc + a))
            .collect();
    }
    Ok(JointConstellation {
        users: users.len(),
        points_per_user: m,
        points,
    })
}

/// Covariance of the joint constellation: entry `((m), (m'))` equals
/// `Σ_k ρ_k(m_k, m'_k)`. Users are mutually independent.
pub fn joint_covariance(
    users: usize,
    points: usize,
    models: &[CorrelationModel],
) -> Result<CovarianceMatrix> {
    joint_covariance_capped(users, points, models, DEFAULT_DIMENSION_CAP)
}

pub fn joint_covariance_capped(
    users: usize,
    points: usize,
    models: &[CorrelationModel],
    cap: usize,
) -> Result<CovarianceMatrix> {
    if users == 0 {
        return Err(Error::NoUsers);
    }
    if points == 0 {
        return Err(Error::EmptyConstellation);
    }
    if models.len() != users {
        return Err(Error::CorrelationCount {
            users,
            found: models.len(),
        });
    }
    for model in models {
        model.validate()?;
    }
    let dim = checked_pow(points, users, cap)?;
    let digits: Vec<Vec<usize>> = (0..dim).map(|i| tuple_digits(i, points, users)).collect();
    let entries = DMatrix::from_fn(dim, dim, |r, c| {
        models
            .iter()
            .zip(digits[r].iter().zip(&digits[c]))
            .map(|(model, (&n, &l))| model.coefficient(n, l))
            .sum()
    });
    Ok(CovarianceMatrix { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncorrelated_is_identity() {
        let cov = build_user_covariance(3, CorrelationModel::Uncorrelated).unwrap();
        assert_eq!(cov, CovarianceMatrix::identity(3));
    }

    #[test]
    fn uniform_two_by_two() {
        let cov = build_user_covariance(2, CorrelationModel::Uniform { rho: 0.9 }).unwrap();
        assert_eq!(cov.as_matrix().as_slice(), &[1.0, 0.9, 0.9, 1.0]);
        // eigenvalues of [[1,ρ],[ρ,1]] are 1 ± ρ
        let eig = SymmetricEigen::new(cov.as_matrix().clone());
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        assert!((ev[0] - 1.9).abs() < 1e-12);
        assert!((ev[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn exponential_three_by_three() {
        let cov = build_user_covariance(3, CorrelationModel::Exponential { rho: 0.5 }).unwrap();
        assert_eq!(cov.get(0, 1), 0.5);
        assert_eq!(cov.get(1, 2), 0.5);
        assert_eq!(cov.get(0, 2), 0.25);
        cov.check_psd().unwrap();
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(
            build_user_covariance(0, CorrelationModel::Uncorrelated),
            Err(Error::EmptyConstellation)
        );
        assert!(matches!(
            build_user_covariance(4, CorrelationModel::Uniform { rho: 1.0 }),
            Err(Error::InvalidCorrelation { .. })
        ));
        assert!(matches!(
            build_user_covariance(4, CorrelationModel::Exponential { rho: -0.1 }),
            Err(Error::InvalidCorrelation { .. })
        ));
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        let err = CovarianceMatrix::from_row_slice(2, &[1.0, 0.5, 0.4, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NotSymmetric { row: 0, col: 1, .. }));
    }

    #[test]
    fn sampler_rejects_indefinite_matrix() {
        let cov = CovarianceMatrix::from_row_slice(2, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(
            ConstellationSampler::new(&cov),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
        let diag = CovarianceMatrix::from_row_slice(2, &[1.0, 0.0, 0.0, -1.0]).unwrap();
        assert!(ConstellationSampler::new(&diag).is_err());
    }

    #[test]
    fn identity_sampling_is_deterministic() {
        let cov = CovarianceMatrix::identity(4);
        let a = sample_constellation(&cov, 11).unwrap();
        let b = sample_constellation(&cov, 11).unwrap();
        let c = sample_constellation(&cov, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.points(), 4);
        assert_eq!(a.seed(), 11);
    }

    #[test]
    fn rank_one_covariance_gives_equal_amplitudes() {
        let cov = CovarianceMatrix::from_row_slice(2, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        for seed in 0..20 {
            let x = sample_constellation(&cov, seed).unwrap();
            let a = x.amplitudes();
            assert!((a[0] - a[1]).abs() <= 1e-12 * a[0].abs().max(1.0));
        }
    }

    #[test]
    fn superpose_two_users_row_major() {
        let u1 = UserConstellation::new(vec![1.0, 10.0], 0).unwrap();
        let u2 = UserConstellation::new(vec![100.0, 1000.0], 0).unwrap();
        let joint = superpose(&[u1, u2]).unwrap();
        assert_eq!(joint.points(), &[101.0, 1001.0, 110.0, 1010.0]);
        assert_eq!(joint.point(&[1, 0]), 110.0);
    }

    #[test]
    fn superpose_single_user_is_identity() {
        let u = UserConstellation::new(vec![0.3, -1.2, 2.5], 3).unwrap();
        let joint = superpose(std::slice::from_ref(&u)).unwrap();
        assert_eq!(joint.points(), u.amplitudes());
    }

    #[test]
    fn superpose_rejects_mismatch_and_empty() {
        let u1 = UserConstellation::new(vec![1.0, 2.0], 0).unwrap();
        let u2 = UserConstellation::new(vec![1.0, 2.0, 3.0], 0).unwrap();
        assert_eq!(
            superpose(&[u1.clone(), u2]),
            Err(Error::MismatchedPoints {
                expected: 2,
                found: 3
            })
        );
        assert_eq!(superpose(&[]), Err(Error::NoUsers));
        assert!(matches!(
            superpose_capped(&[u1.clone(), u1.clone(), u1], 4),
            Err(Error::DimensionCap { dim: 8, cap: 4 })
        ));
    }

    #[test]
    fn two_user_block_pattern() {
        let cov = joint_covariance(2, 2, &[CorrelationModel::Uncorrelated; 2]).unwrap();
        #[rustfmt::skip]
        let expected = [
            2.0, 1.0, 1.0, 0.0,
            1.0, 2.0, 0.0, 1.0,
            1.0, 0.0, 2.0, 1.0,
            0.0, 1.0, 1.0, 2.0,
        ];
        assert_eq!(cov, CovarianceMatrix::from_row_slice(4, &expected).unwrap());
    }

    #[test]
    fn two_user_blocks_for_larger_m() {
        // D blocks (2 on the diagonal, 1 elsewhere) on the block diagonal, I off it
        let m = 4;
        let cov = joint_covariance(2, m, &[CorrelationModel::Uncorrelated; 2]).unwrap();
        for r in 0..m * m {
            for c in 0..m * m {
                let (br, bc) = (r / m, c / m);
                let (ir, ic) = (r % m, c % m);
                let expected = match (br == bc, ir == ic) {
                    (true, true) => 2.0,
                    (true, false) => 1.0,
                    (false, true) => 1.0,
                    (false, false) => 0.0,
                };
                assert_eq!(cov.get(r, c), expected, "entry ({r},{c})");
            }
        }
    }

    #[test]
    fn single_user_joint_covariance_is_identity() {
        let cov = joint_covariance(1, 3, &[CorrelationModel::Uncorrelated]).unwrap();
        assert_eq!(cov, CovarianceMatrix::identity(3));
    }

    #[test]
    fn joint_covariance_guards() {
        let models = [CorrelationModel::Uncorrelated; 3];
        assert!(matches!(
            joint_covariance(3, 17, &models),
            Err(Error::DimensionCap { dim: 4913, cap: 4096 })
        ));
        assert!(matches!(
            joint_covariance(2, 3, &models),
            Err(Error::CorrelationCount { users: 2, found: 3 })
        ));
        assert_eq!(joint_covariance(0, 3, &[]), Err(Error::NoUsers));
    }

    #[test]
    fn joint_diagonal_equals_user_count() {
        let models = [
            CorrelationModel::Uniform { rho: 0.3 },
            CorrelationModel::Exponential { rho: 0.7 },
            CorrelationModel::Uncorrelated,
        ];
        let cov = joint_covariance(3, 3, &models).unwrap();
        for i in 0..27 {
            assert_eq!(cov.get(i, i), 3.0);
        }
        // tuple (0,0,0) vs (1,2,0): 0.3 + 0.7^2 + 1
        let a = tuple_index(&[0, 0, 0], 3);
        let b = tuple_index(&[1, 2, 0], 3);
        assert!((cov.get(a, b) - (0.3 + 0.49 + 1.0)).abs() < 1e-15);
        cov.check_psd().unwrap();
    }

    #[test]
    fn tuple_digits_roundtrip() {
        for i in 0..64 {
            let d = tuple_digits(i, 4, 3);
            assert_eq!(tuple_index(&d, 4), i);
        }
    }
}
