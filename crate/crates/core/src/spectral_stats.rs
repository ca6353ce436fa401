//! Empirical statistics of simulated spectra and the records that report them.
//!
//! Eigenvalue indices follow the 1-based convention of [`BulkIndexSet`]:
//! index `i` refers to `sample.eigenvalues[i - 1]`.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::compensated::{Accumulator, Dd};
use crate::bk::sine_correlation;
use crate::ensemble::SpectralSample;
use crate::measure::AtomicMeasure;
use crate::rng::{CounterRng, Fnv};
use crate::stieltjes::{BulkIndexSet, DensityProfile, SupportProfile, SUPPORT_THRESHOLD};

pub const SCHEMA_VERSION: u32 = 1;
/// Slack for eigenvalue ordering in [`interlacing_check`].
pub const INTERLACING_TOL: f64 = 1e-10;
pub const MIN_TWO_SAMPLE: usize = 100;
pub const MIN_SHUFFLES: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sample {0} has no eigenvectors")]
    NoVectors(usize),
    #[error("density {rho:e} at x0 = {x0} is below the support threshold")]
    OutsideSupport { x0: f64, rho: f64 },
    #[error("window {window} is smaller than the test function support {support}")]
    WindowTooSmall { window: f64, support: f64 },
    #[error("need at least {needed} samples per side, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("need at least {MIN_SHUFFLES} shuffles, got {0}")]
    TooFewShuffles(usize),
    #[error("dimension mismatch: full {full}, minor {minor}")]
    DimensionMismatch { full: usize, minor: usize },
    #[error("no samples")]
    Empty,
}

/// How an observed value is judged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Check {
    AtMost { bound: f64 },
    AtLeast { bound: f64 },
    Within { reference: f64, tolerance: f64 },
    InRange { lo: f64, hi: f64 },
}

impl Check {
    pub fn passes(&self, observed: f64) -> bool {
        match *self {
            Check::AtMost { bound } => observed <= bound,
            Check::AtLeast { bound } => observed >= bound,
            Check::Within { reference, tolerance } => (observed - reference).abs() <= tolerance,
            Check::InRange { lo, hi } => lo <= observed && observed <= hi,
        }
    }

    fn reference_and_tolerance(&self) -> (f64, f64) {
        match *self {
            Check::AtMost { bound } | Check::AtLeast { bound } => (bound, 0.0),
            Check::Within { reference, tolerance } => (reference, tolerance),
            Check::InRange { lo, hi } => (0.5 * (lo + hi), 0.5 * (hi - lo)),
        }
    }
}

/// Seeds and digests behind a set of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleProvenance {
    pub seed: Option<u64>,
    pub trials: Vec<u64>,
    pub n: usize,
    pub law: Option<String>,
    pub spec_digest: Option<String>,
    pub diagonal_digest: Option<String>,
    /// FNV of the per-sample matrix digests, in order.
    pub matrices_digest: String,
}

impl SampleProvenance {
    pub fn of(samples: &[SpectralSample]) -> Self {
        let first = samples.first().and_then(|s| s.provenance.spec.clone());
        let mut h = Fnv::new();
        for s in samples {
            h.write_u64(s.provenance.matrix_digest);
        }
        Self {
            seed: first.as_ref().map(|s| s.seed),
            trials: samples.iter().filter_map(|s| s.provenance.spec.as_ref().map(|p| p.trial_index)).collect(),
            n: samples.first().map_or(0, SpectralSample::n),
            law: first.as_ref().map(|s| s.law.kind.name()),
            spec_digest: first.as_ref().map(|s| format!("{:016x}", s.with_trial(0).digest())),
            diagonal_digest: samples.first().and_then(|s| s.provenance.diagonal_digest).map(|d| format!("{d:016x}")),
            matrices_digest: format!("{:016x}", h.finish()),
        }
    }
}

/// One line of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub test: String,
    pub params: Value,
    pub observed: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub check: Check,
    pub pass: bool,
    /// A control is expected to violate the bound; `pass` then means it did.
    #[serde(default)]
    pub control: bool,
    pub provenance: Vec<SampleProvenance>,
    #[serde(default)]
    pub details: Value,
}

impl TestRecord {
    pub fn new(test: &str, params: Value, observed: f64, check: Check) -> Self {
        let (reference, tolerance) = check.reference_and_tolerance();
        Self {
            test: test.to_string(),
            params,
            observed,
            reference,
            tolerance,
            check,
            pass: check.passes(observed),
            control: false,
            provenance: Vec::new(),
            details: Value::Null,
        }
    }

    /// A record whose bound must be violated.
    pub fn control(test: &str, params: Value, observed: f64, check: Check) -> Self {
        let mut r = Self::new(test, params, observed, check);
        r.control = true;
        r.pass = !check.passes(observed);
        r
    }

    pub fn with_provenance(mut self, samples: &[&[SpectralSample]]) -> Self {
        self.provenance = samples.iter().map(|s| SampleProvenance::of(s)).collect();
        self
    }

    pub fn with_details<T: Serialize>(mut self, details: &T) -> Self {
        self.details = serde_json::to_value(details).expect("details serialize");
        self
    }
}

/// The reproducible part of a run's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub schema_version: u32,
    pub records: Vec<TestRecord>,
}

impl Default for StatsReport {
    fn default() -> Self {
        Self { schema_version: SCHEMA_VERSION, records: Vec::new() }
    }
}

impl StatsReport {
    pub fn push(&mut self, r: TestRecord) {
        self.records.push(r);
    }

    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

/// Eigenvalues in the closed interval `[lo, hi]`.
pub fn count_interval(eigenvalues: &[f64], lo: f64, hi: f64) -> usize {
    if !(lo <= hi) {
        return 0;
    }
    let start = eigenvalues.partition_point(|&v| v < lo);
    let end = eigenvalues.partition_point(|&v| v <= hi);
    end.saturating_sub(start)
}

/// `(1/n) Σ 1/(λᵢ − z)`.
pub fn empirical_stieltjes(eigenvalues: &[f64], z: Complex64) -> Complex64 {
    let s: Complex64 = eigenvalues.iter().map(|&l| 1.0 / (l - z)).sum();
    s / eigenvalues.len() as f64
}

/// `count` intervals of length `length`, centred at evenly spaced points at
/// least `margin` inside the support intervals (longer intervals get more).
pub fn bulk_probe_intervals(support: &SupportProfile, count: usize, length: f64, margin: f64) -> Vec<(f64, f64)> {
    let usable: Vec<(f64, f64)> = support
        .intervals
        .iter()
        .map(|&(a, b)| (a + margin + 0.5 * length, b - margin - 0.5 * length))
        .filter(|(a, b)| b > a)
        .collect();
    let total: f64 = usable.iter().map(|(a, b)| b - a).sum();
    if usable.is_empty() || count == 0 {
        return Vec::new();
    }
    // Centres at (k + ½)/count of the concatenated usable length.
    (0..count)
        .filter_map(|k| {
            let mut t = (k as f64 + 0.5) / count as f64 * total;
            for &(a, b) in &usable {
                if t <= b - a {
                    let c = a + t;
                    return Some((c - 0.5 * length, c + 0.5 * length));
                }
                t -= b - a;
            }
            None
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalConcentration {
    pub interval: (f64, f64),
    /// `n ∫_I ρ`.
    pub expected: f64,
    pub mean_count: f64,
    /// Mean and max over trials of `|N_I − n∫_I ρ| / (n|I|)`.
    pub mean_relative_error: f64,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationStats {
    pub intervals: Vec<IntervalConcentration>,
    /// Averages of the per-interval values.
    pub mean_relative_error: f64,
    pub max_relative_error: f64,
}

/// Compares `N_I` with `n ∫_I ρ` on each interval.
pub fn concentration_report(
    samples: &[SpectralSample],
    density: &DensityProfile,
    intervals: &[(f64, f64)],
) -> Result<ConcentrationStats, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    let rows: Vec<IntervalConcentration> = intervals
        .iter()
        .map(|&(lo, hi)| {
            let n = samples[0].n() as f64;
            let expected = n * density.integral(lo, hi);
            let errs: Vec<f64> = samples
                .iter()
                .map(|s| (count_interval(&s.eigenvalues, lo, hi) as f64 - expected).abs() / (n * (hi - lo)))
                .collect();
            let counts: Vec<f64> = samples.iter().map(|s| count_interval(&s.eigenvalues, lo, hi) as f64).collect();
            IntervalConcentration {
                interval: (lo, hi),
                expected,
                mean_count: mean(&counts),
                mean_relative_error: mean(&errs),
                max_relative_error: errs.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect();
    let mean_err: Vec<f64> = rows.iter().map(|r| r.mean_relative_error).collect();
    Ok(ConcentrationStats {
        mean_relative_error: mean(&mean_err),
        max_relative_error: rows.iter().map(|r| r.max_relative_error).fold(0.0, f64::max),
        intervals: rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualStats {
    /// Per trial, `max_z |m_n(z) − g(z + m_n(z))|`.
    pub per_trial: Vec<f64>,
    pub median: f64,
    pub max: f64,
    /// `median · ln n`, the constant in a `c / log n` bound.
    pub fitted_c: f64,
}

/// The self-consistent residual of the empirical Stieltjes transform, with
/// `g` the transform of `measure` (normally the realized `μ_{D_n}`).
pub fn pastur_residual_stats(
    samples: &[SpectralSample],
    measure: &AtomicMeasure,
    zs: &[Complex64],
) -> Result<ResidualStats, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    let per_trial: Vec<f64> = samples
        .iter()
        .map(|s| {
            zs.iter()
                .map(|&z| {
                    let m = empirical_stieltjes(&s.eigenvalues, z);
                    let g: Complex64 = measure.atoms().iter().map(|a| a.weight / (a.location - z - m)).sum();
                    (m - g).norm()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let med = median(&per_trial);
    Ok(ResidualStats {
        median: med,
        max: per_trial.iter().copied().fold(0.0, f64::max),
        fitted_c: med * (samples[0].n() as f64).ln(),
        per_trial,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelocalizationStats {
    pub n: usize,
    /// Per trial, `max_{i ∈ bulk} ‖uᵢ‖_∞`.
    pub max_sup_norm: Vec<f64>,
    /// Median over trials and bulk vectors of `‖uᵢ‖_∞`.
    pub median_sup_norm: f64,
    /// Per-trial maxima scaled by `√n / ln² n`.
    pub median_statistic: f64,
    pub max_statistic: f64,
}

/// `‖uᵢ‖_∞` for every bulk index `i`.
pub fn bulk_sup_norms(sample: &SpectralSample, bulk: &BulkIndexSet) -> Option<Vec<f64>> {
    let v = sample.eigenvectors.as_ref()?;
    Some(bulk.indices().map(|i| v.sup_norm(i - 1)).collect())
}

impl DelocalizationStats {
    /// From per-trial lists of bulk sup-norms.
    pub fn from_norms(n: usize, per_trial: &[Vec<f64>]) -> Self {
        let maxima: Vec<f64> = per_trial.iter().map(|v| v.iter().copied().fold(0.0, f64::max)).collect();
        let all: Vec<f64> = per_trial.iter().flatten().copied().collect();
        let scale = (n as f64).sqrt() / (n as f64).ln().powi(2);
        let stats: Vec<f64> = maxima.iter().map(|m| m * scale).collect();
        Self {
            n,
            median_sup_norm: median(&all),
            median_statistic: median(&stats),
            max_statistic: stats.iter().copied().fold(0.0, f64::max),
            max_sup_norm: maxima,
        }
    }
}

pub fn delocalization_stats(samples: &[SpectralSample], bulk: &BulkIndexSet) -> Result<DelocalizationStats, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    let norms = samples
        .iter()
        .enumerate()
        .map(|(k, s)| bulk_sup_norms(s, bulk).ok_or(StatsError::NoVectors(k)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DelocalizationStats::from_norms(samples[0].n(), &norms))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapStats {
    pub n: usize,
    pub c0: f64,
    /// `n^{−c0}`.
    pub threshold: f64,
    pub gaps_examined: usize,
    pub small_gaps: usize,
    pub frequency: f64,
    /// Smallest `A_n`-scale bulk gap of each trial.
    pub min_gaps: Vec<f64>,
    pub median_min_gap: f64,
}

/// `A_n`-scale gaps `n(λᵢ₊₁ − λᵢ)` with `i, i + 1` in the same bulk range.
pub fn bulk_gaps(sample: &SpectralSample, bulk: &BulkIndexSet) -> Vec<f64> {
    let n = sample.n() as f64;
    let e = &sample.eigenvalues;
    bulk.ranges
        .iter()
        .flatten()
        .flat_map(|&(lo, hi)| (lo..hi).map(move |i| n * (e[i] - e[i - 1])))
        .collect()
}

pub fn gap_stats(samples: &[SpectralSample], bulk: &BulkIndexSet, c0: f64) -> Result<GapStats, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = samples[0].n();
    let threshold = (n as f64).powf(-c0);
    let (mut examined, mut small) = (0, 0);
    let mut min_gaps = Vec::new();
    for s in samples {
        let gaps = bulk_gaps(s, bulk);
        examined += gaps.len();
        small += gaps.iter().filter(|&&g| g <= threshold).count();
        min_gaps.push(gaps.iter().copied().fold(f64::INFINITY, f64::min));
    }
    Ok(GapStats {
        n,
        c0,
        threshold,
        gaps_examined: examined,
        small_gaps: small,
        frequency: small as f64 / examined.max(1) as f64,
        median_min_gap: median(&min_gaps),
        min_gaps,
    })
}

/// Eigenvalues near `x0` in units of the local mean spacing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RescaledCloud {
    pub center: f64,
    /// `n ρ(x0)`.
    pub scale: f64,
    pub window: f64,
    /// Sorted `(λ − x0) n ρ(x0)` with `|u| ≤ window`.
    pub points: Vec<f64>,
}

impl RescaledCloud {
    /// Mean gap between consecutive points.
    pub fn mean_spacing(&self) -> Option<f64> {
        (self.points.len() >= 2).then(|| {
            (self.points[self.points.len() - 1] - self.points[0]) / (self.points.len() - 1) as f64
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("u\n");
        for p in &self.points {
            s.push_str(&format!("{p}\n"));
        }
        s
    }
}

pub fn rescale_at(sample: &SpectralSample, x0: f64, density: &DensityProfile, window: f64) -> Result<RescaledCloud, StatsError> {
    let rho = density.interpolate(x0);
    if !(rho > SUPPORT_THRESHOLD) {
        return Err(StatsError::OutsideSupport { x0, rho });
    }
    let scale = sample.n() as f64 * rho;
    let points = sample
        .eigenvalues
        .iter()
        .map(|&l| (l - x0) * scale)
        .filter(|u| u.abs() <= window)
        .collect();
    Ok(RescaledCloud { center: x0, scale, window, points })
}

/// A test function for [`correlation_statistic`], supported in `[−r, r]^k`.
pub enum TestFunction<'a> {
    One { f: &'a (dyn Fn(f64) -> f64 + Sync), radius: f64 },
    Two { f: &'a (dyn Fn(f64, f64) -> f64 + Sync), radius: f64 },
}

impl TestFunction<'_> {
    pub fn radius(&self) -> f64 {
        match self {
            TestFunction::One { radius, .. } | TestFunction::Two { radius, .. } => *radius,
        }
    }

    pub fn k(&self) -> usize {
        match self {
            TestFunction::One { .. } => 1,
            TestFunction::Two { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationEstimate {
    pub k: usize,
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

/// Monte Carlo average of `Σ_{distinct i₁..i_k} f(u_{i₁}, …, u_{i_k})`.
pub fn correlation_statistic(clouds: &[RescaledCloud], f: &TestFunction<'_>) -> Result<CorrelationEstimate, StatsError> {
    if clouds.is_empty() {
        return Err(StatsError::Empty);
    }
    for c in clouds {
        if c.window < f.radius() {
            return Err(StatsError::WindowTooSmall { window: c.window, support: f.radius() });
        }
    }
    let values: Vec<f64> = clouds
        .iter()
        .map(|c| match f {
            TestFunction::One { f, .. } => c.points.iter().map(|&u| f(u)).sum(),
            TestFunction::Two { f, .. } => {
                let mut s = 0.0;
                for (i, &u) in c.points.iter().enumerate() {
                    for (j, &v) in c.points.iter().enumerate() {
                        if i != j {
                            s += f(u, v);
                        }
                    }
                }
                s
            }
        })
        .collect();
    Ok(CorrelationEstimate { k: f.k(), mean: mean(&values), std_error: std_error(&values), trials: values.len() })
}

/// Gauss–Legendre nodes and weights on `[−1, 1]` (10 points).
const GL_NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_4,
    0.219_086_362_515_982,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

fn gauss_panels(lo: f64, hi: f64, panels: usize) -> Vec<(f64, f64)> {
    let h = (hi - lo) / panels as f64;
    let mut out = Vec::with_capacity(panels * 10);
    for p in 0..panels {
        let c = lo + (p as f64 + 0.5) * h;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            out.push((c - 0.5 * h * x, 0.5 * h * w));
            out.push((c + 0.5 * h * x, 0.5 * h * w));
        }
    }
    out
}

/// `∫ f(u) du` over `[−r, r]`, the sine-process value of the `k = 1` statistic.
pub fn one_point_reference(f: &dyn Fn(f64) -> f64, radius: f64, panels: usize) -> f64 {
    gauss_panels(-radius, radius, panels).iter().map(|&(u, w)| w * f(u)).sum()
}

/// `∫∫ f(u, v) det[K(uᵢ, uⱼ)] du dv` over `[−r, r]²`; `poisson = true`
/// replaces the determinant by 1.
pub fn pair_reference(f: &dyn Fn(f64, f64) -> f64, radius: f64, panels: usize, poisson: bool) -> f64 {
    let q = gauss_panels(-radius, radius, panels);
    let mut total = 0.0;
    for &(u, wu) in &q {
        for &(v, wv) in &q {
            let fv = f(u, v);
            if fv != 0.0 {
                let weight = if poisson { 1.0 } else { sine_correlation(&[u, v]) };
                total += wu * wv * fv * weight;
            }
        }
    }
    total
}

/// `∫∫ f(u, v) ρ₂(v − u) du dv` in the coordinates `(u, d = v − u)` over
/// `|u| ≤ r`, `|d| ≤ band`, with `ρ₂` the sine pair density (or 1 when
/// `poisson`). `f` must vanish outside that region; narrow bands around the
/// diagonal are resolved without a fine square grid.
pub fn pair_reference_banded(f: &dyn Fn(f64, f64) -> f64, radius: f64, band: f64, panels: usize, poisson: bool) -> f64 {
    let qu = gauss_panels(-radius, radius, panels);
    let d_panels = ((panels as f64 * band / radius).ceil() as usize).max(4);
    let qd = gauss_panels(-band, band, d_panels);
    let mut total = 0.0;
    for &(d, wd) in &qd {
        let rho2 = if poisson { 1.0 } else { sine_correlation(&[0.0, d]) };
        let inner: f64 = qu.iter().map(|&(u, wu)| wu * f(u, u + d)).sum();
        total += wd * rho2 * inner;
    }
    total
}

/// Kolmogorov–Smirnov distance between empirical distributions.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoSampleResult {
    pub ks: f64,
    /// `(1 + #{shuffled KS ≥ observed}) / (1 + shuffles)`.
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub shuffles: usize,
    pub seed: u64,
}

/// KS distance and its permutation p-value; shuffle `s` uses the stream
/// keyed by `(seed, s)`.
pub fn two_sample_distance(a: &[f64], b: &[f64], shuffles: usize, seed: u64) -> Result<TwoSampleResult, StatsError> {
    let got = a.len().min(b.len());
    if got < MIN_TWO_SAMPLE {
        return Err(StatsError::TooFewSamples { needed: MIN_TWO_SAMPLE, got });
    }
    if shuffles < MIN_SHUFFLES {
        return Err(StatsError::TooFewShuffles(shuffles));
    }
    let ks = ks_distance(a, b);
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let exceed = (0..shuffles)
        .filter(|&s| {
            let mut p = pooled.clone();
            p.shuffle(&mut CounterRng::keyed(&[seed, s as u64]));
            ks_distance(&p[..a.len()], &p[a.len()..]) >= ks - 1e-12
        })
        .count();
    Ok(TwoSampleResult {
        ks,
        p_value: (1 + exceed) as f64 / (1 + shuffles) as f64,
        n_a: a.len(),
        n_b: b.len(),
        shuffles,
        seed,
    })
}

/// `λᵢ(A_n) ≤ λᵢ(A_{n−1}) ≤ λᵢ₊₁(A_n)` for every `i`, within [`INTERLACING_TOL`].
pub fn interlacing_check(full: &[f64], minor: &[f64]) -> Result<bool, StatsError> {
    if minor.len() + 1 != full.len() {
        return Err(StatsError::DimensionMismatch { full: full.len(), minor: minor.len() });
    }
    Ok(minor
        .iter()
        .enumerate()
        .all(|(i, &m)| full[i] - INTERLACING_TOL <= m && m <= full[i + 1] + INTERLACING_TOL))
}

/// Worst relative residual over `i` of
/// `Σⱼ |uⱼ*X|² / (λⱼ(A_{n−1}) − λᵢ(A_n)) = a_nn − λᵢ(A_n)`,
/// measured against `|a_nn − λᵢ| + Σⱼ |termⱼ|`.
pub fn interlacing_identity_residual(
    full: &[f64],
    minor: &SpectralSample,
    column: &[Complex64],
    corner: f64,
) -> Result<f64, StatsError> {
    let lift = |v: &[f64]| v.iter().map(|&x| Dd::new(x)).collect::<Vec<_>>();
    interlacing_identity_residual_refined(&lift(full), &lift(&minor.eigenvalues), minor, column, corner)
}

/// As [`interlacing_identity_residual`], with both spectra supplied in
/// extended precision (see [`crate::ensemble::refined_eigenvalues`]) and the
/// overlaps `uⱼ*X` accumulated with compensation. Pole distances `μⱼ − λᵢ`
/// are then exact to far below double rounding, which matters when `X` is
/// nearly orthogonal to some `uⱼ` and `λᵢ` sits next to `μⱼ`.
pub fn interlacing_identity_residual_refined(
    full: &[Dd],
    minor_values: &[Dd],
    minor: &SpectralSample,
    column: &[Complex64],
    corner: f64,
) -> Result<f64, StatsError> {
    let m = minor.n();
    if m + 1 != full.len() || column.len() != m || minor_values.len() != m {
        return Err(StatsError::DimensionMismatch { full: full.len(), minor: m });
    }
    let v = minor.eigenvectors.as_ref().ok_or(StatsError::NoVectors(0))?;
    let weights: Vec<f64> = (0..m)
        .map(|j| {
            let (mut re, mut im) = (Accumulator::default(), Accumulator::default());
            for (r, x) in column.iter().enumerate() {
                let u = v.get(r, j);
                re.add_prod(u.re, x.re);
                re.add_prod(u.im, x.im);
                im.add_prod(u.re, x.im);
                im.add_prod(-u.im, x.re);
            }
            let (re, im) = (re.value().to_f64(), im.value().to_f64());
            re * re + im * im
        })
        .collect();
    let mut worst = 0.0f64;
    for l in full {
        let terms: Vec<f64> = weights.iter().zip(minor_values).map(|(w, mu)| w / mu.diff(*l)).collect();
        let lhs: f64 = terms.iter().sum();
        let rhs = Dd::new(corner).diff(*l);
        let scale = rhs.abs() + terms.iter().map(|t| t.abs()).sum::<f64>();
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    Ok(worst)
}

/// Compact parameter objects for records.
pub fn params(pairs: &[(&str, Value)]) -> Value {
    Value::Object(pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect())
}

pub fn interval_json(intervals: &[(f64, f64)]) -> Value {
    json!(intervals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{eigendecompose, principal_minor, removed_column, HermitianMatrix, Provenance};

    fn bare(eigenvalues: Vec<f64>) -> SpectralSample {
        SpectralSample {
            eigenvalues,
            eigenvectors: None,
            provenance: Provenance { spec: None, diagonal_digest: None, matrix_digest: 0 },
        }
    }

    #[test]
    fn counting_examples() {
        let e = [-1.0, 0.0, 0.5, 2.0];
        assert_eq!(count_interval(&e, 0.0, 1.0), 2);
        assert_eq!(count_interval(&e, f64::NEG_INFINITY, f64::INFINITY), 4);
        assert_eq!(count_interval(&e, 1.0, 0.0), 0);
        assert_eq!(count_interval(&e, 2.0, 2.0), 1);
        assert_eq!(count_interval(&[1.0, 1.0, 1.0], 1.0, 1.0), 3);
    }

    #[test]
    fn stieltjes_examples() {
        let i = Complex64::new(0.0, 1.0);
        assert!((empirical_stieltjes(&[0.0], i) - i).norm() < 1e-15);
        assert!((empirical_stieltjes(&[-1.0, 1.0], i) - i * 0.5).norm() < 1e-15);
        let z = Complex64::new(3.0, 1e6);
        let e = [-2.0, 0.1, 5.0];
        assert!((empirical_stieltjes(&e, z) + 1.0 / z).norm() < 1e-5 / z.norm());
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(ks_distance(&[0.0, 1.0], &[5.0, 6.0]), 1.0);
        assert!((ks_distance(&[0.0, 2.0], &[1.0, 3.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn permutation_test_same_and_different() {
        let draw = |key: u64, shift: f64| -> Vec<f64> {
            (0..150).map(|k| CounterRng::keyed(&[key, k]).uniform() + shift).collect()
        };
        let same = two_sample_distance(&draw(1, 0.0), &draw(2, 0.0), 1000, 42).unwrap();
        assert!(same.p_value > 0.05, "{same:?}");
        let diff = two_sample_distance(&draw(1, 0.0), &draw(2, 0.3), 1000, 42).unwrap();
        assert!(diff.p_value < 0.01, "{diff:?}");
        assert!(two_sample_distance(&draw(1, 0.0)[..50], &draw(2, 0.0), 1000, 1).is_err());
        assert!(two_sample_distance(&draw(1, 0.0), &draw(2, 0.0), 10, 1).is_err());
    }

    #[test]
    fn interlacing_examples() {
        assert!(interlacing_check(&[1.0, 2.0, 3.0], &[1.0, 3.0]).unwrap());
        assert!(!interlacing_check(&[1.0, 2.0, 3.0], &[3.0, 1.0]).unwrap());
        assert!(interlacing_check(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn interlacing_identity_on_random_hermitian() {
        use faer::Mat;
        let n = 5;
        let mut a = Mat::<Complex64>::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let mut r = CounterRng::keyed(&[3, i as u64, j as u64]);
                let v = if i == j {
                    Complex64::new(r.uniform() - 0.5, 0.0)
                } else {
                    Complex64::new(r.uniform() - 0.5, r.uniform() - 0.5)
                };
                a[(i, j)] = v;
                a[(j, i)] = v.conj();
            }
        }
        let w = HermitianMatrix::Complex(a);
        let full = eigendecompose(&w, false).unwrap().eigenvalues;
        let minor = eigendecompose(&principal_minor(&w, n).unwrap(), true).unwrap();
        assert!(interlacing_check(&full, &minor.eigenvalues).unwrap());
        let (x, corner) = removed_column(&w, n).unwrap();
        assert!(interlacing_identity_residual(&full, &minor, &x, corner).unwrap() < 1e-10);
        // Any other corner value breaks the identity.
        assert!(interlacing_identity_residual(&full, &minor, &x, corner + 0.1).unwrap() > 1e-3);
    }

    #[test]
    fn gap_and_delocalization_controls() {
        let d: Vec<f64> = (0..200).map(|i| if i < 100 { -2.0 } else { 2.0 }).collect();
        let s = eigendecompose(&HermitianMatrix::from_diagonal(&d), true).unwrap();
        let bulk = BulkIndexSet { n: 200, epsilon: 0.05, ranges: vec![Some((10, 90)), Some((110, 190))], warning: None };
        let g = gap_stats(std::slice::from_ref(&s), &bulk, 1.0).unwrap();
        assert_eq!(g.frequency, 1.0);
        let loc = delocalization_stats(std::slice::from_ref(&s), &bulk).unwrap();
        assert_eq!(loc.median_sup_norm, 1.0);
        assert!(delocalization_stats(&[bare(d.clone())], &bulk).is_err());
    }

    #[test]
    fn rescaling_and_correlation() {
        let profile = DensityProfile { grid: vec![-1.0, 1.0], values: vec![0.25, 0.25], eta_schedule: [4e-6, 2e-6, 1e-6] };
        // Points on a lattice of unit spacing after rescaling by n ρ = 8 · 0.25.
        let s = bare(vec![-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 2.5]);
        let c = rescale_at(&s, 0.0, &profile, 2.5).unwrap();
        assert_eq!(c.points, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert_eq!(c.mean_spacing(), Some(1.0));
        assert!(rescale_at(&s, 0.0, &profile, 0.0).unwrap().points.len() == 1);
        assert!(rescale_at(&s, 5.0, &profile, 1.0).is_err());
        let one = |u: f64| if u.abs() <= 1.5 { 1.0 } else { 0.0 };
        let est = correlation_statistic(std::slice::from_ref(&c), &TestFunction::One { f: &one, radius: 1.5 }).unwrap();
        assert_eq!(est.mean, 3.0);
        let near = |u: f64, v: f64| if (u - v).abs() < 1e-3 { 1.0 } else { 0.0 };
        let est = correlation_statistic(std::slice::from_ref(&c), &TestFunction::Two { f: &near, radius: 2.5 }).unwrap();
        assert_eq!(est.mean, 0.0);
        assert!(correlation_statistic(&[c], &TestFunction::One { f: &one, radius: 5.0 }).is_err());
    }

    #[test]
    fn pair_reference_examples() {
        // ∫∫ over [−r, r]² of 1 − K² against the Poisson value 4r².
        let r = 3.0;
        let one = |_: f64, _: f64| 1.0;
        let poisson = pair_reference(&one, r, 24, true);
        assert!((poisson - 4.0 * r * r).abs() < 1e-10);
        let sine = pair_reference(&one, r, 24, false);
        // Direct: 4r² − ∫∫ K² = 4r² − ∫_{−2r}^{2r} (2r − |d|) K(d)² dd.
        let k2 = |d: f64| crate::bk::sine_kernel(d, 0.0).powi(2) * (2.0 * r - d.abs());
        let direct = 4.0 * r * r - one_point_reference(&k2, 2.0 * r, 200);
        assert!((sine - direct).abs() < 1e-6, "{sine} vs {direct}");
        let g = |u: f64| (1.0 - (u / r).powi(2)).max(0.0).powi(3);
        let sep = |u: f64, v: f64| g(u) * g(v);
        let banded = pair_reference_banded(&sep, r, 2.0 * r, 24, false);
        let square = pair_reference(&sep, r, 24, false);
        assert!((banded - square).abs() < 1e-6 * square, "{banded} vs {square}");
        // Poisson value of a separable function is the square of its mass.
        let mass = one_point_reference(&g, r, 24);
        assert!((pair_reference_banded(&sep, r, 2.0 * r, 24, true) - mass * mass).abs() < 1e-6 * mass * mass);
    }

    #[test]
    fn records_and_checks() {
        let r = TestRecord::new("t", params(&[("n", json!(10))]), 0.5, Check::AtMost { bound: 1.0 });
        assert!(r.pass);
        let c = TestRecord::control("c", Value::Null, 0.5, Check::AtMost { bound: 1.0 });
        assert!(!c.pass && c.control);
        assert!(Check::InRange { lo: -0.55, hi: -0.40 }.passes(-0.5));
        let mut rep = StatsReport::default();
        rep.push(r);
        let back: StatsReport = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn probe_intervals_stay_inside() {
        let sp = SupportProfile {
            intervals: vec![(-3.0, -1.0), (1.0, 3.0)],
            quantiles: vec![0.0, 0.5, 1.0],
            condition_a: true,
            warnings: vec![],
        };
        let iv = bulk_probe_intervals(&sp, 10, 0.1, 0.2);
        assert_eq!(iv.len(), 10);
        for (a, b) in iv {
            assert!(((b - a) - 0.1).abs() < 1e-12);
            assert!(sp.edge_distance(a) >= 0.2 - 1e-12 && sp.contains(a) && sp.contains(b));
        }
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn counts_are_additive(mut e in proptest::collection::vec(-5.0f64..5.0, 1..60), cut in -5.0f64..5.0) {
            e.sort_by(f64::total_cmp);
            let left = count_interval(&e, f64::NEG_INFINITY, cut);
            let right = e.iter().filter(|&&v| v > cut).count();
            prop_assert_eq!(left + right, e.len());
        }

        #[test]
        fn empirical_stieltjes_is_herglotz(e in proptest::collection::vec(-5.0f64..5.0, 1..40), re in -10.0f64..10.0, im in 1e-6f64..10.0) {
            prop_assert!(empirical_stieltjes(&e, Complex64::new(re, im)).im > 0.0);
        }

        #[test]
        fn one_point_statistic_is_label_invariant(mut pts in proptest::collection::vec(-4.0f64..4.0, 1..30)) {
            let bump = |u: f64| (1.0 - (u / 4.0).powi(2)).max(0.0);
            let c1 = RescaledCloud { center: 0.0, scale: 1.0, window: 4.0, points: pts.clone() };
            pts.reverse();
            let c2 = RescaledCloud { center: 0.0, scale: 1.0, window: 4.0, points: pts };
            let f = TestFunction::One { f: &bump, radius: 4.0 };
            let a = correlation_statistic(&[c1], &f).unwrap().mean;
            let b = correlation_statistic(&[c2], &f).unwrap().mean;
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
