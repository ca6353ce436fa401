//! Configured runs: solve the limit, simulate, measure, write files.
//!
//! A run writes `density.csv`, `support.json` and `report.json` into the
//! output directory (and per-trial spectra under `samples/` on request). The
//! `payload` of `report.json` is a pure function of the configuration minus
//! `output` and `workers`; wall-clock data lives under `metadata`.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::ensemble::{
    eigendecompose, map_trials, principal_minor, refined_eigenvalues, removed_column, sample_spectrum, sample_wigner, write_sample_csv,
    EnsembleError, EnsembleSpec, HermitianMatrix, SpectralSample,
};
use crate::measure::{AtomicMeasure, DiagonalRealization, EntryDistribution, EntryKind, MeasureError};
use crate::rng::{CounterRng, Fnv};
use crate::spectral_stats::{self as st, params, Check, StatsError, StatsReport, TestRecord};
use crate::stieltjes::{self, BulkIndexSet, DensityProfile, StieltjesError, SupportProfile, SUPPORT_THRESHOLD};

/// Environment variable consulted when `workers` is not configured.
pub const WORKERS_ENV: &str = "DWIG_WORKERS";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("solver: {0}")]
    Solver(#[from] StieltjesError),
    #[error("eigensolver backend: {0}")]
    Backend(#[from] EnsembleError),
    #[error("statistics: {0}")]
    Stats(#[from] StatsError),
    #[error("i/o on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl From<MeasureError> for RunError {
    fn from(e: MeasureError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl RunError {
    /// Process exit status; 1 is reserved for failed tests.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Solver(_) | RunError::Stats(_) => 3,
            RunError::Backend(_) => 4,
            RunError::Io { .. } => 5,
        }
    }
}

/// An entry law with an optional diagonal variance (default 1 for complex
/// kinds, 2 for real kinds, the GUE/GOE conventions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawConfig {
    pub law: EntryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagonal_variance: Option<f64>,
}

impl LawConfig {
    pub fn new(law: EntryKind) -> Self {
        Self { law, diagonal_variance: None }
    }

    pub fn distribution(&self) -> Result<EntryDistribution, MeasureError> {
        let var = self.diagonal_variance.unwrap_or(if self.law.is_complex() { 1.0 } else { 2.0 });
        EntryDistribution::new(self.law.clone(), var)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    /// Defaults to `min aᵢ − 3` and `max aᵢ + 3`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    pub points: usize,
    pub eta_floor: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { lo: None, hi: None, points: 2001, eta_floor: 1e-6 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestSelection {
    pub concentration: bool,
    pub residual: bool,
    pub delocalization: bool,
    pub gaps: bool,
    pub universality: bool,
    pub correlation: bool,
    pub interlacing: bool,
}

impl TestSelection {
    pub fn all() -> Self {
        Self {
            concentration: true,
            residual: true,
            delocalization: true,
            gaps: true,
            universality: true,
            correlation: true,
            interlacing: true,
        }
    }

    pub fn any(&self) -> bool {
        self.concentration
            || self.residual
            || self.delocalization
            || self.gaps
            || self.universality
            || self.correlation
            || self.interlacing
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConcentrationConfig {
    pub intervals: usize,
    pub length: f64,
    /// Minimum distance from the probes to a support edge.
    pub margin: f64,
    pub tolerance: f64,
    /// Bound on the fraction of eigenvalues in `[−w, w]` when 0 is in a gap.
    pub gap_half_width: f64,
    pub gap_fraction: f64,
}

impl Default for ConcentrationConfig {
    fn default() -> Self {
        Self { intervals: 10, length: 0.1, margin: 0.1, tolerance: 0.05, gap_half_width: 0.1, gap_fraction: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResidualConfig {
    pub imag: f64,
    pub points: usize,
    pub bound: f64,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self { imag: 0.05, points: 41, bound: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelocalizationConfig {
    /// Bound on the median of `max ‖uᵢ‖_∞ · √n / ln² n`.
    pub bound: f64,
    pub slope_range: (f64, f64),
    pub control: bool,
}

impl Default for DelocalizationConfig {
    fn default() -> Self {
        Self { bound: 10.0, slope_range: (-0.55, -0.40), control: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GapConfig {
    pub c0: f64,
    pub max_frequency: f64,
    pub control: bool,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self { c0: 1.0, max_frequency: 0.01, control: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawPair {
    pub a: LawConfig,
    pub b: LawConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UniversalityConfig {
    pub pairs: Vec<LawPair>,
    /// A law outside C0 compared against the main law; must be detected.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control: Option<LawConfig>,
    /// Per side; defaults to the run's trial count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    pub shuffles: usize,
    pub alpha: f64,
}

impl Default for UniversalityConfig {
    fn default() -> Self {
        Self { pairs: Vec::new(), control: None, trials: None, shuffles: 1000, alpha: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrelationConfig {
    /// Defaults to the midpoint of the last support interval.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    pub window: f64,
    /// Support radius of the bump `g`.
    pub radius: f64,
    /// Support of the near-diagonal factor `h(u − v)`.
    pub repulsion_width: f64,
    pub tolerance: f64,
    pub spacing_tolerance: f64,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self { x0: None, window: 20.0, radius: 8.0, repulsion_width: 0.1, tolerance: 0.1, spacing_tolerance: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterlacingConfig {
    pub samples: u64,
    pub dim: usize,
    pub tolerance: f64,
}

impl Default for InterlacingConfig {
    fn default() -> Self {
        Self { samples: 100, dim: 50, tolerance: 1e-6 }
    }
}

/// A complete run description. TOML and JSON forms are interchangeable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub atoms: AtomicMeasure,
    #[serde(flatten)]
    pub law: LawConfig,
    /// The `n`-sweep; single-`n` tests use the largest.
    pub n: Vec<usize>,
    pub trials: u64,
    pub seed: u64,
    #[serde(default)]
    pub truncate: bool,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub save_samples: bool,
    #[serde(default)]
    pub tests: TestSelection,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub concentration: ConcentrationConfig,
    #[serde(default)]
    pub residual: ResidualConfig,
    #[serde(default)]
    pub delocalization: DelocalizationConfig,
    #[serde(default)]
    pub gaps: GapConfig,
    #[serde(default)]
    pub universality: UniversalityConfig,
    #[serde(default)]
    pub correlation: CorrelationConfig,
    #[serde(default)]
    pub interlacing: InterlacingConfig,
}

fn default_epsilon() -> f64 {
    0.05
}

impl ExperimentConfig {
    pub fn new(atoms: AtomicMeasure, law: EntryKind, n: Vec<usize>, trials: u64, seed: u64) -> Self {
        Self {
            atoms,
            law: LawConfig::new(law),
            n,
            trials,
            seed,
            truncate: false,
            epsilon: default_epsilon(),
            output: None,
            workers: None,
            save_samples: false,
            tests: TestSelection::default(),
            grid: GridConfig::default(),
            concentration: ConcentrationConfig::default(),
            residual: ResidualConfig::default(),
            delocalization: DelocalizationConfig::default(),
            gaps: GapConfig::default(),
            universality: UniversalityConfig::default(),
            correlation: CorrelationConfig::default(),
            interlacing: InterlacingConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        let c: Self = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json(text: &str) -> Result<Self, RunError> {
        let c: Self = serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads `.json` as JSON and anything else as TOML.
    pub fn from_path(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes to JSON")
    }

    pub fn n_max(&self) -> usize {
        self.n.iter().copied().max().unwrap_or(0)
    }

    pub fn distribution(&self) -> Result<EntryDistribution, RunError> {
        Ok(self.law.distribution()?)
    }

    /// The configuration without the fields that may differ between
    /// otherwise identical runs.
    pub fn canonical(&self) -> Self {
        Self { output: None, workers: None, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        self.law.distribution()?;
        if self.n.is_empty() {
            return bad("n must list at least one dimension".into());
        }
        if let Some(&n) = self.n.iter().find(|&&n| n < self.atoms.len().max(2)) {
            return bad(format!("n = {n} is smaller than the number of atoms"));
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return bad(format!("epsilon {} must lie in (0, 1/2)", self.epsilon));
        }
        if self.grid.points < 2 || !(self.grid.eta_floor > 0.0 && self.grid.eta_floor <= 1e-3) {
            return bad("grid needs at least 2 points and eta_floor in (0, 1e-3]".into());
        }
        if let (Some(lo), Some(hi)) = (self.grid.lo, self.grid.hi) {
            if !(lo < hi) {
                return bad(format!("grid lo {lo} must be below hi {hi}"));
            }
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        let t = &self.tests;
        if t.universality {
            if self.universality.pairs.is_empty() && self.universality.control.is_none() {
                return bad("universality needs at least one pair or a control law".into());
            }
            for p in &self.universality.pairs {
                p.a.distribution()?;
                p.b.distribution()?;
            }
            if let Some(c) = &self.universality.control {
                c.distribution()?;
            }
            let per_side = self.universality.trials.unwrap_or(self.trials);
            if (per_side as usize) < st::MIN_TWO_SAMPLE {
                return bad(format!("universality needs at least {} trials per side", st::MIN_TWO_SAMPLE));
            }
            if self.universality.shuffles < st::MIN_SHUFFLES {
                return bad(format!("universality needs at least {} shuffles", st::MIN_SHUFFLES));
            }
        }
        if t.correlation && !(self.correlation.radius > 0.0 && self.correlation.radius <= self.correlation.window) {
            return bad("correlation radius must lie in (0, window]".into());
        }
        if t.interlacing && self.interlacing.dim < self.atoms.len().max(2) {
            return bad("interlacing dimension is smaller than the number of atoms".into());
        }
        if t.concentration && !(self.concentration.length > 0.0) {
            return bad("concentration interval length must be positive".into());
        }
        Ok(())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> RunError {
    RunError::Io { path: path.to_path_buf(), message: e.to_string() }
}

/// A seed for a labelled sub-experiment, independent of the main stream.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Fnv::new();
    h.write_str(label);
    CounterRng::keyed(&[seed, h.finish()]).key()
}

/// Spectra of one ensemble plus, when `bulk` is given, the bulk sup-norms
/// of each trial's eigenvectors (which are then dropped).
pub struct SampleSet {
    pub samples: Vec<SpectralSample>,
    pub sup_norms: Option<Vec<Vec<f64>>>,
}

pub fn simulate_set(
    template: &EnsembleSpec,
    diag: &DiagonalRealization,
    trials: u64,
    bulk: Option<&BulkIndexSet>,
) -> Result<SampleSet, EnsembleError> {
    let ids: Vec<u64> = (0..trials).collect();
    let out = map_trials(&ids, |t| -> Result<(SpectralSample, Option<Vec<f64>>), EnsembleError> {
        let mut s = sample_spectrum(&template.with_trial(t), diag, bulk.is_some())?;
        let norms = bulk.map(|b| st::bulk_sup_norms(&s, b).expect("vectors requested"));
        s.eigenvectors = None;
        Ok((s, norms))
    });
    let mut samples = Vec::with_capacity(out.len());
    let mut norms = Vec::new();
    for r in out {
        let (s, n) = r?;
        samples.push(s);
        norms.extend(n);
    }
    Ok(SampleSet { samples, sup_norms: bulk.map(|_| norms) })
}

/// `D`-only spectrum (the `M = 0` control).
pub fn noiseless_sample(diag: &DiagonalRealization, want_vectors: bool) -> Result<SpectralSample, EnsembleError> {
    let mut s = eigendecompose(&HermitianMatrix::from_diagonal(&diag.entries), want_vectors)?;
    s.provenance.diagonal_digest = Some(diag.digest());
    Ok(s)
}

/// 1-based index at the mid-quantile of the last support interval.
pub fn universality_index(support: &SupportProfile, n: usize) -> usize {
    let q = support.quantiles.len();
    let mid = 0.5 * (support.quantiles[q - 2] + support.quantiles[q - 1]);
    ((mid * n as f64).round() as usize).clamp(1, n - 1)
}

/// `A_n`-scale gap `n(λᵢ₊₁ − λᵢ)` at 1-based `i`.
pub fn gap_at(sample: &SpectralSample, i: usize) -> f64 {
    sample.n() as f64 * (sample.eigenvalues[i] - sample.eigenvalues[i - 1])
}

/// The smooth bump `(1 − (u/r)²)³` on `|u| < r`.
pub fn bump(u: f64, r: f64) -> f64 {
    let t = u / r;
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - t * t).powi(3)
    }
}

/// Solved limit for a measure: density on the grid, support, realized data.
#[derive(Debug, Clone)]
pub struct Limit {
    pub density: DensityProfile,
    pub support: SupportProfile,
}

pub fn solve_limit(measure: &AtomicMeasure, grid: &GridConfig) -> Result<Limit, StieltjesError> {
    let lo = grid.lo.unwrap_or(measure.atoms()[0].location - 3.0);
    let hi = grid.hi.unwrap_or(measure.atoms()[measure.len() - 1].location + 3.0);
    let density = stieltjes::density(measure, &stieltjes::linspace(lo, hi, grid.points), grid.eta_floor)?;
    let support = stieltjes::support_intervals(measure, &density, SUPPORT_THRESHOLD)?;
    Ok(Limit { density, support })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPayload {
    pub config: ExperimentConfig,
    pub support: SupportProfile,
    pub report: StatsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub created_unix: u64,
    pub elapsed_seconds: f64,
    pub workers: usize,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub payload: RunPayload,
    pub metadata: RunMetadata,
}

impl ReportFile {
    pub fn payload_json(&self) -> String {
        serde_json::to_string_pretty(&self.payload).expect("payload serializes")
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub file: ReportFile,
    pub density: DensityProfile,
    pub written: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn report(&self) -> &StatsReport {
        &self.file.payload.report
    }

    /// 0 when every selected test passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.report().all_pass() {
            0
        } else {
            1
        }
    }
}

pub fn configured_workers(config: &ExperimentConfig) -> usize {
    config
        .workers
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok()).filter(|&w| w > 0))
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Executes the configured pipeline and writes its files when `output` is set.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome, RunError> {
    config.validate()?;
    let workers = configured_workers(config);
    let started = std::time::Instant::now();
    let (limit, report) = with_workers(workers, || pipeline(config))?;
    let file = ReportFile {
        schema_version: st::SCHEMA_VERSION,
        payload: RunPayload { config: config.canonical(), support: limit.support.clone(), report },
        metadata: RunMetadata {
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            elapsed_seconds: started.elapsed().as_secs_f64(),
            workers,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    };
    let mut written = Vec::new();
    if let Some(dir) = &config.output {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let mut put = |name: &str, body: String| -> Result<(), RunError> {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| io_error(&p, e))?;
            written.push(p);
            Ok(())
        };
        put("density.csv", limit.density.to_csv())?;
        put("support.json", limit.support.to_json())?;
        put("report.json", serde_json::to_string_pretty(&file).expect("report serializes"))?;
        if config.save_samples {
            let sdir = dir.join("samples");
            std::fs::create_dir_all(&sdir).map_err(|e| io_error(&sdir, e))?;
            let law = config.distribution()?;
            for &n in &config.n {
                let diag = config.atoms.realize(n)?;
                let template = template_for(config, n, law.clone(), config.seed);
                for t in 0..config.trials {
                    let s = sample_spectrum(&template.with_trial(t), &diag, false)?;
                    let p = sdir.join(format!("n{n}_trial{t}.csv"));
                    std::fs::write(&p, write_sample_csv(&s, false)).map_err(|e| io_error(&p, e))?;
                    written.push(p);
                }
            }
        }
    }
    Ok(RunOutcome { file, density: limit.density, written })
}

#[cfg(feature = "parallel")]
/// Runs `f` inside a pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
/// Runs `f` on the calling thread; there is no pool without `parallel`.
pub fn with_workers<T>(_workers: usize, f: impl FnOnce() -> T) -> T {
    f()
}

fn template_for(config: &ExperimentConfig, n: usize, law: EntryDistribution, seed: u64) -> EnsembleSpec {
    let mut t = EnsembleSpec::new(n, law, seed);
    t.truncate = config.truncate;
    t
}

fn pipeline(config: &ExperimentConfig) -> Result<(Limit, StatsReport), RunError> {
    let limit = solve_limit(&config.atoms, &config.grid)?;
    let mut report = StatsReport::default();
    let tests = &config.tests;
    let law = config.distribution()?;
    let n_max = config.n_max();
    let needs_main = tests.concentration || tests.residual || tests.delocalization || tests.gaps || tests.correlation;

    let mut sets: Vec<(usize, SampleSet, DiagonalRealization, BulkIndexSet)> = Vec::new();
    if needs_main {
        for &n in &config.n {
            if !tests.residual && !tests.delocalization && n != n_max {
                continue;
            }
            let diag = config.atoms.realize(n)?;
            let bulk = stieltjes::bulk_indices(&limit.support, config.epsilon, n)?;
            let set = simulate_set(
                &template_for(config, n, law.clone(), config.seed),
                &diag,
                config.trials,
                tests.delocalization.then_some(&bulk),
            )?;
            sets.push((n, set, diag, bulk));
        }
    }
    let main = sets.iter().find(|s| s.0 == n_max);

    if tests.concentration {
        let (_, set, _, _) = main.expect("largest n simulated");
        concentration_records(config, &limit, &set.samples, &mut report)?;
    }
    if tests.residual {
        residual_records(config, &limit, &sets, &mut report)?;
    }
    if tests.delocalization {
        delocalization_records(config, &sets, &mut report)?;
    }
    if tests.gaps {
        let (_, set, diag, bulk) = main.expect("largest n simulated");
        gap_records(config, set, diag, bulk, &mut report)?;
    }
    if tests.correlation {
        let (_, set, _, _) = main.expect("largest n simulated");
        correlation_records(config, &limit, &set.samples, &mut report)?;
    }
    if tests.universality {
        universality_records(config, &limit, &mut report)?;
    }
    if tests.interlacing {
        interlacing_records(config, &law, &mut report)?;
    }
    Ok((limit, report))
}

fn concentration_records(
    config: &ExperimentConfig,
    limit: &Limit,
    samples: &[SpectralSample],
    report: &mut StatsReport,
) -> Result<(), RunError> {
    let c = &config.concentration;
    let n = samples[0].n();
    let intervals = st::bulk_probe_intervals(&limit.support, c.intervals, c.length, c.margin);
    let stats = st::concentration_report(samples, &limit.density, &intervals)?;
    report.push(
        TestRecord::new(
            "concentration",
            params(&[("n", json!(n)), ("trials", json!(samples.len())), ("intervals", json!(intervals))]),
            stats.mean_relative_error,
            Check::AtMost { bound: c.tolerance },
        )
        .with_provenance(&[samples])
        .with_details(&stats),
    );
    if limit.support.q() > 1 && !limit.support.contains(0.0) {
        let w = c.gap_half_width;
        let fractions: Vec<f64> =
            samples.iter().map(|s| st::count_interval(&s.eigenvalues, -w, w) as f64 / n as f64).collect();
        let worst = fractions.iter().copied().fold(0.0, f64::max);
        report.push(
            TestRecord::new(
                "concentration_gap",
                params(&[("n", json!(n)), ("trials", json!(samples.len())), ("interval", json!([-w, w]))]),
                worst,
                Check::AtMost { bound: c.gap_fraction },
            )
            .with_provenance(&[samples]),
        );
    }
    Ok(())
}

fn residual_records(
    config: &ExperimentConfig,
    limit: &Limit,
    sets: &[(usize, SampleSet, DiagonalRealization, BulkIndexSet)],
    report: &mut StatsReport,
) -> Result<(), RunError> {
    let r = &config.residual;
    let lo = limit.support.intervals[0].0 - 0.5;
    let hi = limit.support.intervals[limit.support.q() - 1].1 + 0.5;
    let zs: Vec<Complex64> = stieltjes::linspace(lo, hi, r.points).into_iter().map(|x| Complex64::new(x, r.imag)).collect();
    let mut medians = Vec::new();
    for (n, set, diag, _) in sets {
        let stats = st::pastur_residual_stats(&set.samples, &diag.empirical_measure(), &zs)?;
        medians.push((*n, stats.median));
        report.push(
            TestRecord::new(
                "pastur_residual",
                params(&[("n", json!(n)), ("trials", json!(set.samples.len())), ("imag", json!(r.imag))]),
                stats.median,
                Check::AtMost { bound: r.bound },
            )
            .with_provenance(&[&set.samples])
            .with_details(&stats),
        );
    }
    if medians.len() >= 2 {
        medians.sort_by_key(|m| m.0);
        let (first, last) = (medians[0].1, medians[medians.len() - 1].1);
        report.push(
            TestRecord::new(
                "pastur_residual_scaling",
                params(&[("n", json!(medians.iter().map(|m| m.0).collect::<Vec<_>>()))]),
                last / first,
                Check::AtMost { bound: 1.0 },
            )
            .with_details(&medians),
        );
    }
    Ok(())
}

fn delocalization_records(
    config: &ExperimentConfig,
    sets: &[(usize, SampleSet, DiagonalRealization, BulkIndexSet)],
    report: &mut StatsReport,
) -> Result<(), RunError> {
    let d = &config.delocalization;
    let mut ns = Vec::new();
    let mut medians = Vec::new();
    let mut control = Vec::new();
    for (n, set, diag, bulk) in sets {
        let norms = set.sup_norms.as_ref().expect("vectors requested");
        let stats = st::DelocalizationStats::from_norms(*n, norms);
        ns.push(*n as f64);
        medians.push(stats.median_sup_norm);
        report.push(
            TestRecord::new(
                "delocalization",
                params(&[("n", json!(n)), ("trials", json!(norms.len())), ("epsilon", json!(config.epsilon))]),
                stats.median_statistic,
                Check::AtMost { bound: d.bound },
            )
            .with_provenance(&[&set.samples])
            .with_details(&stats),
        );
        if d.control {
            let s = noiseless_sample(diag, true)?;
            let norms = st::bulk_sup_norms(&s, bulk).expect("vectors requested");
            control.push(st::median(&norms));
        }
    }
    if ns.len() >= 2 {
        let (lo, hi) = d.slope_range;
        report.push(
            TestRecord::new(
                "delocalization_slope",
                params(&[("n", json!(ns))]),
                st::loglog_slope(&ns, &medians),
                Check::InRange { lo, hi },
            )
            .with_details(&medians),
        );
        if d.control {
            report.push(
                TestRecord::control(
                    "delocalization_slope_control",
                    params(&[("n", json!(ns)), ("matrix", json!("D only"))]),
                    st::loglog_slope(&ns, &control),
                    Check::InRange { lo, hi },
                )
                .with_details(&control),
            );
        }
    }
    Ok(())
}

fn gap_records(
    config: &ExperimentConfig,
    set: &SampleSet,
    diag: &DiagonalRealization,
    bulk: &BulkIndexSet,
    report: &mut StatsReport,
) -> Result<(), RunError> {
    let g = &config.gaps;
    let stats = st::gap_stats(&set.samples, bulk, g.c0)?;
    let n = stats.n;
    report.push(
        TestRecord::new(
            "gaps",
            params(&[("n", json!(n)), ("trials", json!(set.samples.len())), ("c0", json!(g.c0))]),
            stats.frequency,
            Check::AtMost { bound: g.max_frequency },
        )
        .with_provenance(&[&set.samples])
        .with_details(&stats),
    );
    if g.control {
        let s = noiseless_sample(diag, false)?;
        let c = st::gap_stats(std::slice::from_ref(&s), bulk, g.c0)?;
        report.push(TestRecord::control(
            "gaps_control",
            params(&[("n", json!(n)), ("matrix", json!("D only")), ("c0", json!(g.c0))]),
            c.frequency,
            Check::AtMost { bound: g.max_frequency },
        ));
    }
    Ok(())
}

/// `k = 1`, pair and repulsion statistics for rescaled clouds, with their
/// sine-process references.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSummary {
    pub x0: f64,
    pub mean_spacing: f64,
    pub one_point: st::CorrelationEstimate,
    pub one_point_reference: f64,
    pub pair: st::CorrelationEstimate,
    pub pair_reference: f64,
    pub repulsion: st::CorrelationEstimate,
    pub repulsion_sine_reference: f64,
    pub repulsion_poisson_reference: f64,
}

pub fn correlation_summary(
    samples: &[SpectralSample],
    density: &DensityProfile,
    x0: f64,
    c: &CorrelationConfig,
) -> Result<CorrelationSummary, StatsError> {
    let clouds = samples
        .iter()
        .map(|s| st::rescale_at(s, x0, density, c.window))
        .collect::<Result<Vec<_>, _>>()?;
    let spacings: Vec<f64> = clouds.iter().filter_map(|c| c.mean_spacing()).collect();
    let r = c.radius;
    let delta = c.repulsion_width;
    let g = move |u: f64| bump(u, r);
    let pair = move |u: f64, v: f64| bump(u, r) * bump(v, r);
    let near = move |u: f64, v: f64| bump(u, r) * bump(v, r) * bump(u - v, delta);
    let panels = (4.0 * r).ceil() as usize;
    Ok(CorrelationSummary {
        x0,
        mean_spacing: st::mean(&spacings),
        one_point: st::correlation_statistic(&clouds, &st::TestFunction::One { f: &g, radius: r })?,
        one_point_reference: st::one_point_reference(&g, r, panels),
        pair: st::correlation_statistic(&clouds, &st::TestFunction::Two { f: &pair, radius: r })?,
        pair_reference: st::pair_reference_banded(&pair, r, 2.0 * r, panels, false),
        repulsion: st::correlation_statistic(&clouds, &st::TestFunction::Two { f: &near, radius: r })?,
        repulsion_sine_reference: st::pair_reference_banded(&near, r, delta, panels, false),
        repulsion_poisson_reference: st::pair_reference_banded(&near, r, delta, panels, true),
    })
}

fn correlation_records(
    config: &ExperimentConfig,
    limit: &Limit,
    samples: &[SpectralSample],
    report: &mut StatsReport,
) -> Result<(), RunError> {
    let c = &config.correlation;
    let x0 = c.x0.unwrap_or_else(|| *limit.support.midpoints().last().expect("non-empty support"));
    let s = correlation_summary(samples, &limit.density, x0, c)?;
    let p = |name: &str| {
        params(&[
            ("n", json!(samples[0].n())),
            ("trials", json!(samples.len())),
            ("x0", json!(x0)),
            ("window", json!(c.window)),
            ("radius", json!(c.radius)),
            ("statistic", json!(name)),
        ])
    };
    let rel = |est: f64, reference: f64| (est - reference).abs() / reference.abs();
    report.push(
        TestRecord::new("rescaled_spacing", p("mean spacing"), s.mean_spacing, Check::Within {
            reference: 1.0,
            tolerance: c.spacing_tolerance,
        })
        .with_provenance(&[samples]),
    );
    report.push(
        TestRecord::new(
            "correlation_k1",
            p("separable bump"),
            rel(s.one_point.mean, s.one_point_reference),
            Check::AtMost { bound: c.tolerance },
        )
        .with_provenance(&[samples])
        .with_details(&s),
    );
    report.push(
        TestRecord::new(
            "correlation_k2",
            p("separable bump pair"),
            rel(s.pair.mean, s.pair_reference),
            Check::AtMost { bound: c.tolerance },
        )
        .with_provenance(&[samples]),
    );
    report.push(
        TestRecord::new(
            "correlation_repulsion",
            p("near-diagonal pair / Poisson"),
            s.repulsion.mean / s.repulsion_poisson_reference,
            Check::AtMost { bound: c.tolerance },
        )
        .with_provenance(&[samples]),
    );
    Ok(())
}

/// Bulk-gap statistic for one law at the largest `n`.
pub fn gap_statistic_samples(
    config: &ExperimentConfig,
    support: &SupportProfile,
    law: &LawConfig,
    label: &str,
) -> Result<(Vec<f64>, Vec<SpectralSample>), RunError> {
    let n = config.n_max();
    let diag = config.atoms.realize(n)?;
    let trials = config.universality.trials.unwrap_or(config.trials);
    let template = template_for(config, n, law.distribution()?, derive_seed(config.seed, label));
    let set = simulate_set(&template, &diag, trials, None)?;
    let i = universality_index(support, n);
    Ok((set.samples.iter().map(|s| gap_at(s, i)).collect(), set.samples))
}

fn universality_records(config: &ExperimentConfig, limit: &Limit, report: &mut StatsReport) -> Result<(), RunError> {
    let u = &config.universality;
    let n = config.n_max();
    let i = universality_index(&limit.support, n);
    let test_seed = derive_seed(config.seed, "permutation");
    for (k, pair) in u.pairs.iter().enumerate() {
        let (a, sa) = gap_statistic_samples(config, &limit.support, &pair.a, &format!("pair{k}-a"))?;
        let (b, sb) = gap_statistic_samples(config, &limit.support, &pair.b, &format!("pair{k}-b"))?;
        let res = st::two_sample_distance(&a, &b, u.shuffles, test_seed)?;
        let (da, db) = (pair.a.distribution()?, pair.b.distribution()?);
        report.push(
            TestRecord::new(
                "universality",
                params(&[
                    ("n", json!(n)),
                    ("index", json!(i)),
                    ("law_a", json!(pair.a)),
                    ("law_b", json!(pair.b)),
                    ("match_order", json!(crate::measure::match_order(&da, &db))),
                    ("diagonal_match_order", json!(crate::measure::diagonal_match_order(&da, &db))),
                ]),
                res.p_value,
                Check::AtLeast { bound: u.alpha },
            )
            .with_provenance(&[&sa, &sb])
            .with_details(&res),
        );
    }
    if let Some(control) = &u.control {
        let (a, sa) = gap_statistic_samples(config, &limit.support, &config.law, "control-a")?;
        let (b, sb) = gap_statistic_samples(config, &limit.support, control, "control-b")?;
        let res = st::two_sample_distance(&a, &b, u.shuffles, test_seed)?;
        report.push(
            TestRecord::control(
                "universality_control",
                params(&[("n", json!(n)), ("index", json!(i)), ("law_a", json!(config.law)), ("law_b", json!(control))]),
                res.p_value,
                Check::AtLeast { bound: u.alpha },
            )
            .with_provenance(&[&sa, &sb])
            .with_details(&res),
        );
    }
    Ok(())
}

/// Worst interlacing-identity residual over `samples` random matrices of
/// dimension `dim`, and how many violated eigenvalue ordering.
pub fn interlacing_sweep(
    atoms: &AtomicMeasure,
    law: &EntryDistribution,
    dim: usize,
    samples: u64,
    seed: u64,
) -> Result<(f64, usize), RunError> {
    let diag = atoms.realize(dim)?;
    let ids: Vec<u64> = (0..samples).collect();
    let results = map_trials(&ids, |t| -> Result<(f64, bool), RunError> {
        let spec = EnsembleSpec::new(dim, law.clone(), seed).with_trial(t);
        let w = sample_wigner(&spec)?.scaled_plus_diagonal(1.0 / (dim as f64).sqrt(), &diag.entries)?;
        let full = eigendecompose(&w, true)?;
        let a = principal_minor(&w, dim)?;
        let minor = eigendecompose(&a, true)?;
        let (x, corner) = removed_column(&w, dim)?;
        let ordered = st::interlacing_check(&full.eigenvalues, &minor.eigenvalues)?;
        let (lam, mu) = (refined_eigenvalues(&w, &full)?, refined_eigenvalues(&a, &minor)?);
        Ok((st::interlacing_identity_residual_refined(&lam, &mu, &minor, &x, corner)?, ordered))
    });
    let mut worst = 0.0f64;
    let mut violations = 0;
    for r in results {
        let (res, ok) = r?;
        worst = worst.max(res);
        violations += usize::from(!ok);
    }
    Ok((worst, violations))
}

fn interlacing_records(config: &ExperimentConfig, law: &EntryDistribution, report: &mut StatsReport) -> Result<(), RunError> {
    let c = &config.interlacing;
    let (worst, violations) =
        interlacing_sweep(&config.atoms, law, c.dim, c.samples, derive_seed(config.seed, "interlacing"))?;
    let p = params(&[("dim", json!(c.dim)), ("samples", json!(c.samples))]);
    report.push(TestRecord::new("interlacing_identity", p.clone(), worst, Check::AtMost { bound: c.tolerance }));
    report.push(TestRecord::new("interlacing_order", p, violations as f64, Check::AtMost { bound: 0.0 }));
    Ok(())
}
