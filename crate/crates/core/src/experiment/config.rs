//! Experiment spec files: flat `key = value` lines with dotted sections.
//!
//! ```text
//! # comment
//! experiment = fig2_single_user
//! master_seed = 7
//! output_path = results/fig2.csv
//! snr_grid_db = -5:5:30          # start:step:stop, or a list: 0, 10, 20
//! link.points = 256              # or link.perturbations = 8
//! link.realizations = 200
//! link.estimator = quadrature    # or monte_carlo
//! link.correlation.kind = exponential
//! link.correlation.rho = 0.9
//! link.user2.correlation.kind = uniform   # per-user override
//! ```
//!
//! Keys are lowercase ASCII letters, digits, `_` and `.`. Everything after
//! `#` is ignored. Each key may appear once.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use crate::constellation::{CorrelationModel, DEFAULT_DIMENSION_CAP};
use crate::entropy::{DEFAULT_MC_SAMPLES, MIN_MC_SAMPLES};
use crate::rates::{Estimator, DEFAULT_REALIZATIONS};

use super::ExperimentKind;

/// A problem with a spec, tied to the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Link parameters as written in a spec file.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub users: usize,
    pub points: usize,
    pub noise_variance: f64,
    pub realizations: usize,
    pub estimator: Estimator,
    /// Model applied to every user unless overridden.
    pub correlation: CorrelationModel,
    /// One-based user index → model.
    pub user_correlation: BTreeMap<usize, CorrelationModel>,
    pub dimension_cap: usize,
}

impl LinkSpec {
    pub fn correlation_for(&self, user: usize) -> CorrelationModel {
        self.user_correlation
            .get(&user)
            .copied()
            .unwrap_or(self.correlation)
    }

    pub fn models(&self) -> Vec<CorrelationModel> {
        (1..=self.users).map(|k| self.correlation_for(k)).collect()
    }

    pub fn mc_samples(&self) -> usize {
        match self.estimator {
            Estimator::MonteCarlo { samples } => samples,
            Estimator::Quadrature => DEFAULT_MC_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    pub snr_grid_db: Vec<f64>,
    pub link: LinkSpec,
    /// Per-user constellation sizes swept by `fig1_mac_sumrate`.
    pub fig1_points: Vec<usize>,
    /// Monte Carlo sample count used by `bounds_check` alongside quadrature.
    pub mc_samples: usize,
    pub output_path: PathBuf,
    pub master_seed: u64,
}

pub const DEFAULT_MASTER_SEED: u64 = 1;
pub const FIG1_POINTS: [usize; 3] = [2, 4, 16];
pub const HEAVY_CORRELATION: CorrelationModel = CorrelationModel::Exponential { rho: 0.9 };

impl ExperimentSpec {
    /// Spec with every field at the experiment's default.
    pub fn defaults(experiment: ExperimentKind) -> Self {
        use ExperimentKind::*;
        let (users, points, grid, correlation): (usize, usize, Vec<f64>, CorrelationModel) =
            match experiment {
                Fig1MacSumrate => (2, 2, sweep(-5.0, 5.0, 30.0), HEAVY_CORRELATION),
                Fig2SingleUser => (1, 256, sweep(-5.0, 5.0, 30.0), HEAVY_CORRELATION),
                Fig3MacRegion => (2, 8, vec![20.0], CorrelationModel::Uncorrelated),
                Lemma1Check => (3, 3, Vec::new(), CorrelationModel::Uncorrelated),
                BoundsCheck => (1, 16, sweep(-5.0, 5.0, 30.0), CorrelationModel::Uncorrelated),
            };
        ExperimentSpec {
            experiment,
            snr_grid_db: grid,
            link: LinkSpec {
                users,
                points,
                noise_variance: 1.0,
                realizations: DEFAULT_REALIZATIONS,
                estimator: Estimator::Quadrature,
                correlation,
                user_correlation: BTreeMap::new(),
                dimension_cap: DEFAULT_DIMENSION_CAP,
            },
            fig1_points: FIG1_POINTS.to_vec(),
            mc_samples: DEFAULT_MC_SAMPLES,
            output_path: PathBuf::from(format!("{}.csv", experiment.as_str())),
            master_seed: DEFAULT_MASTER_SEED,
        }
    }

    /// Canonical `key = value` rendering; parsing it yields the same spec.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        put("experiment", self.experiment.as_str().to_string());
        put("master_seed", self.master_seed.to_string());
        put("output_path", self.output_path.display().to_string());
        put("snr_grid_db", join(&self.snr_grid_db));
        put("fig1.points", join(&self.fig1_points));
        put("bounds.mc_samples", self.mc_samples.to_string());
        let link = &self.link;
        put("link.users", link.users.to_string());
        put("link.points", link.points.to_string());
        put("link.noise_variance", link.noise_variance.to_string());
        put("link.realizations", link.realizations.to_string());
        put("link.estimator", link.estimator.as_str().to_string());
        put("link.mc_samples", link.mc_samples().to_string());
        put("link.dimension_cap", link.dimension_cap.to_string());
        put("link.correlation.kind", kind_name(&link.correlation).to_string());
        put("link.correlation.rho", link.correlation.rho().to_string());
        for (user, model) in &link.user_correlation {
            put(&format!("link.user{user}.correlation.kind"), kind_name(model).to_string());
            put(&format!("link.user{user}.correlation.rho"), model.rho().to_string());
        }
        out
    }
}

fn join<T: ToString>(values: &[T]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn kind_name(model: &CorrelationModel) -> &'static str {
    match model {
        CorrelationModel::Uncorrelated => "uncorrelated",
        CorrelationModel::Uniform { .. } => "uniform",
        CorrelationModel::Exponential { .. } => "exponential",
    }
}

/// `start, start + step, …` up to and including `stop` (within rounding).
fn sweep(start: f64, step: f64, stop: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}

/// Split a spec file into `key → (value, line number)`.
pub fn parse_lines(text: &str) -> Result<BTreeMap<String, (String, usize)>, Vec<Violation>> {
    let mut entries = BTreeMap::new();
    let mut violations = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            violations.push(Violation::new(
                format!("line {line_no}"),
                "expected `key = value`",
            ));
            continue;
        };
        let key = key.trim();
        let valid_key = !key.is_empty()
            && key
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'.');
        if !valid_key {
            violations.push(Violation::new(
                format!("line {line_no}"),
                format!("invalid key `{key}`"),
            ));
            continue;
        }
        if entries
            .insert(key.to_string(), (value.trim().to_string(), line_no))
            .is_some()
        {
            violations.push(Violation::new(key, format!("duplicate key on line {line_no}")));
        }
    }
    if violations.is_empty() {
        Ok(entries)
    } else {
        Err(violations)
    }
}

struct Reader {
    entries: BTreeMap<String, (String, usize)>,
    violations: Vec<Violation>,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(v, _)| v)
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let raw = self.take(key)?;
        match raw.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                self.violations
                    .push(Violation::new(key, format!("expected {what}, got `{raw}`")));
                None
            }
        }
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Option<Vec<T>> {
        let raw = self.take(key)?;
        if raw.is_empty() {
            return Some(Vec::new());
        }
        let mut out = Vec::new();
        for item in raw.split(',') {
            match item.trim().parse() {
                Ok(v) => out.push(v),
                Err(_) => {
                    self.violations.push(Violation::new(
                        key,
                        format!("expected a list of {what}, got `{raw}`"),
                    ));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn grid(&mut self, key: &str) -> Option<Vec<f64>> {
        let raw = self.entries.get(key)?.0.clone();
        let parts: Vec<&str> = raw.split(':').collect();
        if parts.len() != 3 {
            return self.list(key, "numbers");
        }
        self.take(key);
        let nums: Option<Vec<f64>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
        match nums.as_deref() {
            Some(&[start, step, stop]) if step > 0.0 && stop >= start => Some(sweep(start, step, stop)),
            _ => {
                self.violations.push(Violation::new(
                    key,
                    format!("expected `start:step:stop` with positive step, got `{raw}`"),
                ));
                None
            }
        }
    }

    fn correlation(&mut self, prefix: &str, base: CorrelationModel) -> Option<CorrelationModel> {
        let kind_key = format!("{prefix}.kind");
        let rho_key = format!("{prefix}.rho");
        let kind = self.take(&kind_key);
        let rho: Option<f64> = self.parsed(&rho_key, "a number");
        if kind.is_none() && rho.is_none() {
            return None;
        }
        let rho = rho.unwrap_or_else(|| base.rho());
        let kind = kind.unwrap_or_else(|| kind_name(&base).to_string());
        match kind.as_str() {
            "uncorrelated" => Some(CorrelationModel::Uncorrelated),
            "uniform" => Some(CorrelationModel::Uniform { rho }),
            "exponential" => Some(CorrelationModel::Exponential { rho }),
            other => {
                self.violations.push(Violation::new(
                    kind_key,
                    format!("unknown correlation kind `{other}` (uncorrelated, uniform, exponential)"),
                ));
                None
            }
        }
    }
}

/// Parse spec-file text into an [`ExperimentSpec`]. Only syntax and types are
/// checked here; see [`validate`] for the semantic checks.
pub fn parse_spec(text: &str) -> Result<ExperimentSpec, Vec<Violation>> {
    let entries = parse_lines(text)?;
    let mut r = Reader {
        entries,
        violations: Vec::new(),
    };

    let experiment = match r.take("experiment") {
        None => return Err(vec![Violation::new("experiment", "missing required key")]),
        Some(name) => match ExperimentKind::from_name(&name) {
            Some(kind) => kind,
            None => {
                return Err(vec![Violation::new(
                    "experiment",
                    format!("unknown experiment `{name}`"),
                )])
            }
        },
    };
    let mut spec = ExperimentSpec::defaults(experiment);

    if let Some(seed) = r.parsed("master_seed", "an unsigned integer") {
        spec.master_seed = seed;
    }
    if let Some(path) = r.take("output_path") {
        spec.output_path = PathBuf::from(path);
    }
    if let Some(grid) = r.grid("snr_grid_db") {
        spec.snr_grid_db = grid;
    }
    if let Some(points) = r.list("fig1.points", "positive integers") {
        spec.fig1_points = points;
    }
    if let Some(n) = r.parsed("bounds.mc_samples", "an unsigned integer") {
        spec.mc_samples = n;
    }

    let link = &mut spec.link;
    if let Some(users) = r.parsed("link.users", "an unsigned integer") {
        link.users = users;
    }
    let points: Option<usize> = r.parsed("link.points", "an unsigned integer");
    let perturbations: Option<u32> = r.parsed("link.perturbations", "an unsigned integer");
    match (points, perturbations) {
        (Some(m), Some(np)) if 2usize.checked_pow(np) != Some(m) => r.violations.push(Violation::new(
            "link.perturbations",
            format!("2^{np} does not match link.points = {m}"),
        )),
        (Some(m), _) => link.points = m,
        (None, Some(np)) => match 2usize.checked_pow(np) {
            Some(m) => link.points = m,
            None => r
                .violations
                .push(Violation::new("link.perturbations", "too many perturbations")),
        },
        (None, None) => {}
    }
    if let Some(v) = r.parsed("link.noise_variance", "a number") {
        link.noise_variance = v;
    }
    if let Some(v) = r.parsed("link.realizations", "an unsigned integer") {
        link.realizations = v;
    }
    if let Some(v) = r.parsed("link.dimension_cap", "an unsigned integer") {
        link.dimension_cap = v;
    }
    let mc_samples: Option<usize> = r.parsed("link.mc_samples", "an unsigned integer");
    let estimator = r.take("link.estimator");
    match estimator.as_deref() {
        None | Some("quadrature") => {
            if estimator.is_some() {
                link.estimator = Estimator::Quadrature;
            }
        }
        Some("monte_carlo") => {
            link.estimator = Estimator::MonteCarlo {
                samples: mc_samples.unwrap_or(DEFAULT_MC_SAMPLES),
            }
        }
        Some(other) => r.violations.push(Violation::new(
            "link.estimator",
            format!("unknown estimator `{other}` (quadrature, monte_carlo)"),
        )),
    }
    if let Some(model) = r.correlation("link.correlation", spec.link.correlation) {
        spec.link.correlation = model;
    }

    let user_keys: Vec<usize> = r
        .entries
        .keys()
        .filter_map(|k| {
            k.strip_prefix("link.user")?
                .split_once('.')
                .filter(|(_, rest)| rest.starts_with("correlation."))
                .and_then(|(n, _)| n.parse().ok())
        })
        .collect();
    for user in user_keys {
        let base = spec.link.correlation;
        if let Some(model) = r.correlation(&format!("link.user{user}.correlation"), base) {
            spec.link.user_correlation.insert(user, model);
        }
    }

    for key in r.entries.keys() {
        r.violations.push(Violation::new(key.clone(), "unknown key"));
    }
    if r.violations.is_empty() {
        Ok(spec)
    } else {
        Err(r.violations)
    }
}

/// Exhaustive semantic checks. An empty list means the spec is runnable.
pub fn validate(spec: &ExperimentSpec) -> Vec<Violation> {
    use ExperimentKind::*;
    let mut v = Vec::new();
    let link = &spec.link;

    if !(link.noise_variance > 0.0 && link.noise_variance.is_finite()) {
        v.push(Violation::new(
            "link.noise_variance",
            "noise_variance must be positive",
        ));
    }
    if link.users == 0 {
        v.push(Violation::new("link.users", "at least one user is required"));
    }
    if link.points == 0 {
        v.push(Violation::new("link.points", "points must be at least 1"));
    }
    if link.realizations == 0 {
        v.push(Violation::new("link.realizations", "realizations must be at least 1"));
    }
    if let Estimator::MonteCarlo { samples } = link.estimator {
        if samples < MIN_MC_SAMPLES {
            v.push(Violation::new(
                "link.mc_samples",
                format!("at least {MIN_MC_SAMPLES} Monte Carlo samples are required"),
            ));
        }
    }
    let mut check_model = |field: String, model: &CorrelationModel| {
        if model.validate().is_err() {
            v.push(Violation::new(field, "rho must lie in [0, 1)"));
        }
    };
    check_model("link.correlation.rho".into(), &link.correlation);
    for (user, model) in &link.user_correlation {
        check_model(format!("link.user{user}.correlation.rho"), model);
    }
    for user in link.user_correlation.keys() {
        if *user == 0 || *user > link.users {
            v.push(Violation::new(
                format!("link.user{user}.correlation"),
                format!("user index outside 1..={}", link.users),
            ));
        }
    }

    if spec.experiment.is_sweep() {
        if spec.snr_grid_db.is_empty() {
            v.push(Violation::new("snr_grid_db", "SNR grid must not be empty"));
        }
        if spec.snr_grid_db.iter().any(|s| !s.is_finite()) {
            v.push(Violation::new("snr_grid_db", "SNR values must be finite"));
        }
    }
    if spec.output_path.as_os_str().is_empty() || spec.output_path.file_name().is_none() {
        v.push(Violation::new("output_path", "output path must name a file"));
    }

    let joint_fits = |points: usize, users: usize| {
        u32::try_from(users)
            .ok()
            .and_then(|k| points.checked_pow(k))
            .is_some_and(|d| d <= link.dimension_cap)
    };
    match spec.experiment {
        Fig1MacSumrate => {
            if link.users != 2 {
                v.push(Violation::new("link.users", "fig1_mac_sumrate is a 2-user experiment"));
            }
            if spec.fig1_points.is_empty() || spec.fig1_points.contains(&0) {
                v.push(Violation::new("fig1.points", "need one or more positive sizes"));
            }
            if let Some(&m) = spec.fig1_points.iter().find(|&&m| !joint_fits(m, 2)) {
                v.push(Violation::new(
                    "fig1.points",
                    format!("{m}^2 joint points exceed link.dimension_cap"),
                ));
            }
        }
        Fig2SingleUser => {
            if link.users != 1 {
                v.push(Violation::new("link.users", "fig2_single_user is a single-user experiment"));
            }
        }
        Fig3MacRegion => {
            if link.users != 2 {
                v.push(Violation::new("link.users", "fig3_mac_region is a 2-user experiment"));
            }
        }
        BoundsCheck => {
            if spec.mc_samples < MIN_MC_SAMPLES {
                v.push(Violation::new(
                    "bounds.mc_samples",
                    format!("at least {MIN_MC_SAMPLES} Monte Carlo samples are required"),
                ));
            }
        }
        Lemma1Check => {}
    }
    if matches!(spec.experiment, Fig2SingleUser | Fig3MacRegion | BoundsCheck)
        && link.users > 0
        && !joint_fits(link.points, link.users)
    {
        v.push(Violation::new(
            "link.points",
            "points^users exceeds link.dimension_cap",
        ));
    }
    v
}
