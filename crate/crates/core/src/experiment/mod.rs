//! Configuration-driven experiments that sweep SNR and write CSV datasets.

mod config;
mod run;

use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

pub use config::{
    parse_lines, parse_spec, validate, ExperimentSpec, LinkSpec, Violation, DEFAULT_MASTER_SEED,
    FIG1_POINTS, HEAVY_CORRELATION,
};
pub use run::{run, write_outputs, Manifest, RunOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentKind {
    /// 2-user sum rate for per-user sizes {2, 4, 16}.
    Fig1MacSumrate,
    /// Single-user rate, uncorrelated vs heavily correlated.
    Fig2SingleUser,
    /// 2-user rate region against the AWGN pentagon.
    Fig3MacRegion,
    /// Numeric vs closed-form joint covariance spectrum.
    Lemma1Check,
    /// Monte Carlo and quadrature estimates against the entropy bounds.
    BoundsCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Fig1MacSumrate,
        ExperimentKind::Fig2SingleUser,
        ExperimentKind::Fig3MacRegion,
        ExperimentKind::Lemma1Check,
        ExperimentKind::BoundsCheck,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Fig1MacSumrate => "fig1_mac_sumrate",
            ExperimentKind::Fig2SingleUser => "fig2_single_user",
            ExperimentKind::Fig3MacRegion => "fig3_mac_region",
            ExperimentKind::Lemma1Check => "lemma1_check",
            ExperimentKind::BoundsCheck => "bounds_check",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == name)
    }

    pub fn description(&self) -> &'static str {
        match self {
            ExperimentKind::Fig1MacSumrate => {
                "2-user MAC sum rate vs SNR for per-user sizes 2, 4, 16 (joint 4, 16, 256)"
            }
            ExperimentKind::Fig2SingleUser => {
                "single-user rate vs SNR, uncorrelated vs heavily correlated, with bounds"
            }
            ExperimentKind::Fig3MacRegion => "2-user rate region and corner points vs AWGN pentagon",
            ExperimentKind::Lemma1Check => "numeric vs closed-form joint covariance spectrum",
            ExperimentKind::BoundsCheck => "Monte Carlo and quadrature rates inside the entropy bounds",
        }
    }

    /// Whether the experiment sweeps an SNR grid.
    pub fn is_sweep(&self) -> bool {
        !matches!(self, ExperimentKind::Lemma1Check)
    }
}

/// One line of an experiment CSV.
///
/// For `lemma1_check` rows, `rate_bits` carries the eigenvalue and `subset`
/// its rank (`ev01`, `ev02`, …).
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: ExperimentKind,
    pub series: String,
    pub snr_db: Option<f64>,
    pub subset: String,
    pub estimator: String,
    pub rate_bits: f64,
    pub std_error_bits: Option<f64>,
    pub lower_bound_bits: Option<f64>,
    pub upper_bound_bits: Option<f64>,
    pub realizations: Option<usize>,
    pub seed: Option<u64>,
}

/// CSV columns, in order.
pub const CSV_COLUMNS: [&str; 11] = [
    "experiment",
    "series",
    "snr_db",
    "subset",
    "estimator",
    "rate_bits",
    "std_error_bits",
    "lower_bound_bits",
    "upper_bound_bits",
    "realizations",
    "seed",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ResultRow {
    fn sort_key(&self) -> (ExperimentKind, &str, f64, &str, &str) {
        (
            self.experiment,
            &self.series,
            self.snr_db.unwrap_or(f64::NEG_INFINITY),
            &self.subset,
            &self.estimator,
        )
    }

    fn csv_line(&self) -> String {
        [
            self.experiment.as_str().to_string(),
            self.series.clone(),
            opt(self.snr_db),
            self.subset.clone(),
            self.estimator.clone(),
            self.rate_bits.to_string(),
            opt(self.std_error_bits),
            opt(self.lower_bound_bits),
            opt(self.upper_bound_bits),
            opt(self.realizations),
            opt(self.seed),
        ]
        .join(",")
    }
}

/// Sort rows by (experiment, series, snr, subset, estimator).
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        let (ka, kb) = (a.sort_key(), b.sort_key());
        ka.0.cmp(&kb.0)
            .then_with(|| ka.1.cmp(kb.1))
            .then_with(|| ka.2.total_cmp(&kb.2))
            .then_with(|| ka.3.cmp(kb.3))
            .then_with(|| ka.4.cmp(kb.4))
    });
}

/// Header plus one line per row; `,` separated, `.` decimals, LF endings.
pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.csv_line());
    }
    out
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid spec: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Compute(#[from] crate::error::Error),
}
