use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::constellation::{joint_covariance_capped, CorrelationModel};
use crate::rates::{
    awgn_mac_region, ergodic_average, power_from_snr_db, ErgodicRegion, Estimator, LinkConfig,
    RateRegion, UserSubset,
};
use crate::spectrum::{eigen_spectrum, lemma1_spectrum, Spectrum};

use super::{sort_rows, to_csv, validate, ExperimentError, ExperimentKind, ExperimentSpec, ResultRow};

/// Rows, rendered CSV and manifest of one run. Nothing touches the disk
/// until [`write_outputs`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub csv: String,
    pub manifest: Manifest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub experiment: ExperimentKind,
    pub spec_hash: String,
    pub master_seed: u64,
    pub rows: usize,
    pub csv_sha256: String,
    pub csv_file: String,
}

impl Manifest {
    /// Flat `key = value` text.
    pub fn to_text(&self) -> String {
        format!(
            "format = mbm-manifest/1\n\
             experiment = {}\n\
             spec_hash = sha256:{}\n\
             master_seed = {}\n\
             rows = {}\n\
             csv_file = {}\n\
             csv_sha256 = {}\n\
             csv_columns = {}\n\
             package = {} {}\n",
            self.experiment.as_str(),
            self.spec_hash,
            self.master_seed,
            self.rows,
            self.csv_file,
            self.csv_sha256,
            super::CSV_COLUMNS.join(","),
            env!("CARGO_PKG_NAME"),
            env!("CARGO_PKG_VERSION"),
        )
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn models_label(models: &[CorrelationModel]) -> String {
    if models.windows(2).all(|w| w[0] == w[1]) {
        models[0].label()
    } else {
        models.iter().map(|m| m.label()).collect::<Vec<_>>().join("|")
    }
}

enum Task {
    /// Ergodic constraints for one link at one SNR.
    Link {
        series: String,
        snr_db: f64,
        config: LinkConfig,
        /// Only these constraints are emitted, relabelled with the given name.
        subsets: Vec<(UserSubset, String)>,
        corners: bool,
    },
    Awgn {
        snr_db: f64,
        users: usize,
        subsets: Vec<UserSubset>,
        corners: bool,
    },
    Spectrum {
        series: &'static str,
    },
}

fn link_config(spec: &ExperimentSpec, users: usize, points: usize, snr_db: f64) -> LinkConfig {
    let link = &spec.link;
    LinkConfig {
        users,
        points,
        power: power_from_snr_db(snr_db, link.noise_variance),
        noise_variance: link.noise_variance,
        correlation: vec![CorrelationModel::Uncorrelated; users],
        realizations: link.realizations,
        estimator: link.estimator,
        dimension_cap: link.dimension_cap,
    }
}

fn all_subsets(users: usize) -> Vec<(UserSubset, String)> {
    UserSubset::all(users).map(|s| (s, s.label())).collect()
}

fn plan(spec: &ExperimentSpec) -> Vec<Task> {
    use ExperimentKind::*;
    let link = &spec.link;
    let models = link.models();
    let correlated = models.iter().any(|m| *m != CorrelationModel::Uncorrelated);
    let mut tasks = Vec::new();
    match spec.experiment {
        Fig1MacSumrate => {
            let sum = UserSubset::full(2);
            for &m in &spec.fig1_points {
                for &snr in &spec.snr_grid_db {
                    let base = link_config(spec, 2, m, snr);
                    let sum_only = vec![(sum, sum.label())];
                    tasks.push(Task::Link {
                        series: format!("m{m}_uncorrelated"),
                        snr_db: snr,
                        config: base.clone(),
                        subsets: sum_only.clone(),
                        corners: false,
                    });
                    if correlated {
                        tasks.push(Task::Link {
                            series: format!("m{m}_{}", models_label(&models)),
                            snr_db: snr,
                            config: LinkConfig {
                                correlation: models.clone(),
                                ..base.clone()
                            },
                            subsets: sum_only.clone(),
                            corners: false,
                        });
                    }
                    // i.i.d. joint diagram of the same size and per-point power
                    let mut iid = link_config(spec, 1, m * m, snr);
                    iid.power *= 2.0;
                    tasks.push(Task::Link {
                        series: format!("m{m}_iid_joint"),
                        snr_db: snr,
                        config: iid,
                        subsets: vec![(UserSubset::full(1), sum.label())],
                        corners: false,
                    });
                }
            }
            for &snr in &spec.snr_grid_db {
                tasks.push(Task::Awgn {
                    snr_db: snr,
                    users: 2,
                    subsets: vec![sum],
                    corners: false,
                });
            }
        }
        Fig2SingleUser => {
            for &snr in &spec.snr_grid_db {
                let base = link_config(spec, 1, link.points, snr);
                tasks.push(Task::Link {
                    series: "uncorrelated".into(),
                    snr_db: snr,
                    config: base.clone(),
                    subsets: all_subsets(1),
                    corners: false,
                });
                if correlated {
                    tasks.push(Task::Link {
                        series: models_label(&models),
                        snr_db: snr,
                        config: LinkConfig {
                            correlation: models.clone(),
                            ..base
                        },
                        subsets: all_subsets(1),
                        corners: false,
                    });
                }
                tasks.push(Task::Awgn {
                    snr_db: snr,
                    users: 1,
                    subsets: vec![UserSubset::full(1)],
                    corners: false,
                });
            }
        }
        Fig3MacRegion | BoundsCheck => {
            let users = link.users;
            for &snr in &spec.snr_grid_db {
                let config = LinkConfig {
                    correlation: models.clone(),
                    ..link_config(spec, users, link.points, snr)
                };
                if spec.experiment == Fig3MacRegion {
                    tasks.push(Task::Link {
                        series: "mbm".into(),
                        snr_db: snr,
                        config,
                        subsets: all_subsets(users),
                        corners: users == 2,
                    });
                    tasks.push(Task::Awgn {
                        snr_db: snr,
                        users,
                        subsets: UserSubset::all(users).collect(),
                        corners: users == 2,
                    });
                } else {
                    let full = UserSubset::full(users);
                    for estimator in [
                        Estimator::Quadrature,
                        Estimator::MonteCarlo {
                            samples: spec.mc_samples,
                        },
                    ] {
                        tasks.push(Task::Link {
                            series: models_label(&models),
                            snr_db: snr,
                            config: LinkConfig {
                                estimator,
                                ..config.clone()
                            },
                            subsets: vec![(full, full.label())],
                            corners: false,
                        });
                    }
                }
            }
        }
        Lemma1Check => {
            let fits = u32::try_from(link.users)
                .ok()
                .and_then(|k| link.points.checked_pow(k))
                .is_some_and(|d| d <= link.dimension_cap);
            if fits {
                tasks.push(Task::Spectrum { series: "numeric" });
            }
            tasks.push(Task::Spectrum { series: "lemma1" });
        }
    }
    tasks
}

fn corner_rows(region: &RateRegion, template: &ResultRow) -> Vec<ResultRow> {
    let Some(corners) = region.corner_points() else {
        return Vec::new();
    };
    let mut rows = Vec::new();
    for (i, (r1, r2)) in corners.iter().enumerate() {
        for (user, rate) in [(1, r1), (2, r2)] {
            rows.push(ResultRow {
                subset: format!("corner{}:{user}", i + 1),
                rate_bits: *rate,
                std_error_bits: None,
                lower_bound_bits: None,
                upper_bound_bits: None,
                ..template.clone()
            });
        }
    }
    rows
}

fn link_rows(
    spec: &ExperimentSpec,
    series: &str,
    snr_db: f64,
    config: &LinkConfig,
    region: &ErgodicRegion,
    subsets: &[(UserSubset, String)],
    corners: bool,
) -> Vec<ResultRow> {
    let template = ResultRow {
        experiment: spec.experiment,
        series: series.to_string(),
        snr_db: Some(snr_db),
        subset: String::new(),
        estimator: config.estimator.as_str().to_string(),
        rate_bits: 0.0,
        std_error_bits: None,
        lower_bound_bits: None,
        upper_bound_bits: None,
        realizations: Some(region.realizations),
        seed: Some(spec.master_seed),
    };
    let mut rows: Vec<ResultRow> = subsets
        .iter()
        .filter_map(|(subset, label)| {
            let c = region.constraint(*subset)?;
            Some(ResultRow {
                subset: label.clone(),
                rate_bits: c.mean_bits,
                std_error_bits: Some(c.std_error_bits),
                lower_bound_bits: Some(c.lower_bound_bits),
                upper_bound_bits: Some(c.upper_bound_bits),
                ..template.clone()
            })
        })
        .collect();
    if corners {
        rows.extend(corner_rows(&region.mean_region(), &template));
    }
    rows
}

fn spectrum_rows(spec: &ExperimentSpec, series: &str, spectrum: &Spectrum) -> Vec<ResultRow> {
    let width = spectrum.len().to_string().len().max(2);
    spectrum
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(i, &value)| ResultRow {
            experiment: spec.experiment,
            series: series.to_string(),
            snr_db: None,
            subset: format!("ev{:0width$}", i + 1),
            estimator: "eigen".into(),
            rate_bits: value,
            std_error_bits: None,
            lower_bound_bits: None,
            upper_bound_bits: None,
            realizations: None,
            seed: None,
        })
        .collect()
}

fn execute(spec: &ExperimentSpec, task: &Task) -> Result<Vec<ResultRow>, ExperimentError> {
    match task {
        Task::Link {
            series,
            snr_db,
            config,
            subsets,
            corners,
        } => {
            let region = ergodic_average(config, spec.master_seed)?;
            Ok(link_rows(spec, series, *snr_db, config, &region, subsets, *corners))
        }
        Task::Awgn {
            snr_db,
            users,
            subsets,
            corners,
        } => {
            let power = power_from_snr_db(*snr_db, spec.link.noise_variance);
            let region = awgn_mac_region(*users, power, spec.link.noise_variance);
            let template = ResultRow {
                experiment: spec.experiment,
                series: "awgn".into(),
                snr_db: Some(*snr_db),
                subset: String::new(),
                estimator: "awgn".into(),
                rate_bits: 0.0,
                std_error_bits: Some(0.0),
                lower_bound_bits: None,
                upper_bound_bits: None,
                realizations: None,
                seed: None,
            };
            let mut rows: Vec<ResultRow> = subsets
                .iter()
                .filter_map(|s| region.constraint(*s))
                .map(|c| ResultRow {
                    subset: c.subset.label(),
                    rate_bits: c.rate_bits,
                    ..template.clone()
                })
                .collect();
            if *corners {
                rows.extend(corner_rows(&region, &template));
            }
            Ok(rows)
        }
        Task::Spectrum { series } => {
            let (users, points) = (spec.link.users, spec.link.points);
            let spectrum = if *series == "numeric" {
                let models = vec![CorrelationModel::Uncorrelated; users];
                let cov = joint_covariance_capped(users, points, &models, spec.link.dimension_cap)?;
                eigen_spectrum(&cov)?
            } else {
                lemma1_spectrum(users, points)?
            };
            Ok(spectrum_rows(spec, series, &spectrum))
        }
    }
}

/// Run an experiment. Deterministic given the spec (including its seed):
/// tasks are independent, and rows are sorted before rendering, so the
/// thread count never changes the output.
pub fn run(spec: &ExperimentSpec) -> Result<RunOutput, ExperimentError> {
    let violations = validate(spec);
    if !violations.is_empty() {
        return Err(ExperimentError::Invalid(violations));
    }
    let tasks = plan(spec);
    let chunks = tasks
        .par_iter()
        .map(|t| execute(spec, t))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows: Vec<ResultRow> = chunks.into_iter().flatten().collect();
    sort_rows(&mut rows);
    let csv = to_csv(&rows);
    let manifest = Manifest {
        experiment: spec.experiment,
        spec_hash: sha256_hex(spec.to_config_string().as_bytes()),
        master_seed: spec.master_seed,
        rows: rows.len(),
        csv_sha256: sha256_hex(csv.as_bytes()),
        csv_file: spec
            .output_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    Ok(RunOutput {
        rows,
        csv,
        manifest,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(contents.as_bytes())?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_err(path))
}

/// Write the CSV to `csv_path` and the manifest next to it
/// (`<stem>.manifest`), each via temp file and rename.
pub fn write_outputs(output: &RunOutput, csv_path: &Path) -> Result<(PathBuf, PathBuf), ExperimentError> {
    let manifest_path = csv_path.with_extension("manifest");
    write_atomic(csv_path, &output.csv)?;
    write_atomic(&manifest_path, &output.manifest.to_text())?;
    Ok((csv_path.to_path_buf(), manifest_path))
}
