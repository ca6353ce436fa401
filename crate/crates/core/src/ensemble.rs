//! Sampling `W = M/√n + D` and the dense Hermitian eigendecomposition.
//!
//! Entry `(i, j)` of trial `t` is drawn from its own [`CounterRng`] stream
//! keyed by `(seed, t, i, j)`, so a matrix is a pure function of its spec.

use std::fmt::Write as _;

use faer::{Mat, Side};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compensated::{Accumulator, Dd};
use crate::measure::{DiagonalRealization, EntryDistribution, EntryKind};
use crate::rng::{CounterRng, Fnv};

/// Elementwise tolerance for `W = W*` on input to [`eigendecompose`].
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix {digest:016x} is not Hermitian (max |W - W*| = {error:e})")]
    NotHermitian { error: f64, digest: u64 },
    #[error("eigensolver failed on matrix {digest:016x}: {message}")]
    Backend { digest: u64, message: String },
    #[error("index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("invalid ensemble: {0}")]
    Invalid(String),
    #[error("sample file: {0}")]
    Parse(String),
}

/// Everything needed to regenerate one Wigner matrix `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n: usize,
    pub law: EntryDistribution,
    /// Clip entries at `ln(n)^(C+1)` and re-centre.
    #[serde(default)]
    pub truncate: bool,
    #[serde(default = "default_truncation_c")]
    pub truncation_c: f64,
    pub seed: u64,
    #[serde(default)]
    pub trial_index: u64,
}

fn default_truncation_c() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Symmetry {
    RealSymmetric,
    Hermitian,
}

impl EnsembleSpec {
    pub fn new(n: usize, law: EntryDistribution, seed: u64) -> Self {
        Self { n, law, truncate: false, truncation_c: 1.0, seed, trial_index: 0 }
    }

    pub fn with_trial(&self, trial_index: u64) -> Self {
        Self { trial_index, ..self.clone() }
    }

    pub fn symmetry(&self) -> Symmetry {
        if self.law.is_complex() {
            Symmetry::Hermitian
        } else {
            Symmetry::RealSymmetric
        }
    }

    pub fn truncation_level(&self) -> f64 {
        (self.n as f64).ln().powf(self.truncation_c + 1.0)
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.n == 0 {
            return Err(EnsembleError::Invalid("n must be positive".into()));
        }
        if self.truncate {
            if !self.law.satisfies_c0() {
                return Err(EnsembleError::Invalid("truncation is defined for C0 laws only".into()));
            }
            if !(self.truncation_level() >= 1.0) {
                return Err(EnsembleError::Invalid(format!(
                    "truncation level ln({})^{} = {} is below 1",
                    self.n,
                    self.truncation_c + 1.0,
                    self.truncation_level()
                )));
            }
        }
        Ok(())
    }

    pub fn digest(&self) -> u64 {
        let mut h = Fnv::new();
        h.write_str(&serde_json::to_string(self).expect("spec serializes"));
        h.finish()
    }
}

/// A dense Hermitian matrix, stored real when the entries are real.
#[derive(Debug, Clone, PartialEq)]
pub enum HermitianMatrix {
    Real(Mat<f64>),
    Complex(Mat<Complex64>),
}

impl HermitianMatrix {
    pub fn from_diagonal(entries: &[f64]) -> Self {
        let n = entries.len();
        Self::Real(Mat::from_fn(n, n, |i, j| if i == j { entries[i] } else { 0.0 }))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Real(m) => m.nrows(),
            Self::Complex(m) => m.nrows(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        match self {
            Self::Real(m) => Complex64::new(m[(i, j)], 0.0),
            Self::Complex(m) => m[(i, j)],
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.get(i, i).re).sum()
    }

    /// `max |Wᵢⱼ − conj(Wⱼᵢ)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in j..n {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Frobenius norm, an upper bound for the spectral norm.
    pub fn frobenius(&self) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                s += self.get(i, j).norm_sqr();
            }
        }
        s.sqrt()
    }

    /// `c·self + diag(d)`.
    pub fn scaled_plus_diagonal(&self, c: f64, d: &[f64]) -> Result<Self, EnsembleError> {
        let n = self.dim();
        if d.len() != n {
            return Err(EnsembleError::DimensionMismatch { expected: n, got: d.len() });
        }
        Ok(match self {
            Self::Real(m) => Self::Real(Mat::from_fn(n, n, |i, j| c * m[(i, j)] + if i == j { d[i] } else { 0.0 })),
            Self::Complex(m) => Self::Complex(Mat::from_fn(n, n, |i, j| {
                m[(i, j)] * c + if i == j { Complex64::new(d[i], 0.0) } else { Complex64::new(0.0, 0.0) }
            })),
        })
    }

    /// Row-major hash of the entries' bit patterns.
    pub fn digest(&self) -> u64 {
        let n = self.dim();
        let mut h = Fnv::new();
        h.write_u64(n as u64);
        h.write_u64(matches!(self, Self::Complex(_)) as u64);
        for i in 0..n {
            for j in 0..n {
                let v = self.get(i, j);
                h.write_u64(v.re.to_bits());
                h.write_u64(v.im.to_bits());
            }
        }
        h.finish()
    }
}

/// The analytic mean of `ζ·1{|ζ| ≤ L}`, real part only (all C0 kinds are real
/// or symmetric).
fn clipped_mean(kind: &EntryKind, level: f64) -> f64 {
    match kind {
        EntryKind::Discrete { points, probabilities } => points
            .iter()
            .zip(probabilities)
            .filter(|(x, _)| x.abs() <= level)
            .map(|(x, p)| x * p)
            .sum(),
        _ => 0.0,
    }
}

fn real_draw(kind: &EntryKind, rng: &mut CounterRng) -> f64 {
    match kind {
        EntryKind::GaussianReal => rng.sample(StandardNormal),
        EntryKind::Rademacher => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
        EntryKind::Matched4Real => {
            let u = rng.uniform();
            if u < 1.0 / 6.0 {
                -3f64.sqrt()
            } else if u < 1.0 / 3.0 {
                3f64.sqrt()
            } else {
                0.0
            }
        }
        EntryKind::Discrete { points, probabilities } => {
            let u = rng.uniform();
            let mut acc = 0.0;
            for (x, p) in points.iter().zip(probabilities) {
                acc += p;
                if u < acc {
                    return *x;
                }
            }
            *points.last().expect("validated non-empty")
        }
        _ => unreachable!("complex kinds are drawn by off_diagonal"),
    }
}

fn off_diagonal(kind: &EntryKind, rng: &mut CounterRng) -> Complex64 {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    match kind {
        EntryKind::GaussianComplex => {
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = rng.sample(StandardNormal);
            Complex64::new(x * h, y * h)
        }
        EntryKind::Matched4Complex => {
            let x = real_draw(&EntryKind::Matched4Real, rng);
            let y = real_draw(&EntryKind::Matched4Real, rng);
            Complex64::new(x * h, y * h)
        }
        EntryKind::ShiftedComplex { mean } => {
            let s = (1.0 - mean * mean).sqrt() * h;
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = rng.sample(StandardNormal);
            Complex64::new(mean + s * x, s * y)
        }
        real => Complex64::new(real_draw(real, rng), 0.0),
    }
}

fn diagonal_kind(kind: &EntryKind) -> EntryKind {
    match kind {
        EntryKind::GaussianReal | EntryKind::GaussianComplex | EntryKind::ShiftedComplex { .. } => EntryKind::GaussianReal,
        EntryKind::Matched4Complex => EntryKind::Matched4Real,
        other => other.clone(),
    }
}

/// The unscaled Wigner matrix `M` for `spec`.
pub fn sample_wigner(spec: &EnsembleSpec) -> Result<HermitianMatrix, EnsembleError> {
    spec.validate()?;
    let n = spec.n;
    let kind = &spec.law.kind;
    let dkind = diagonal_kind(kind);
    let dscale = spec.law.diagonal_variance.sqrt();
    let level = spec.truncate.then(|| spec.truncation_level());
    let clip = |v: Complex64, k: &EntryKind| match level {
        Some(l) => {
            let kept = if v.norm() <= l { v } else { Complex64::new(0.0, 0.0) };
            kept - clipped_mean(k, l)
        }
        None => v,
    };
    let diag_entry = |rng: &mut CounterRng| clip(Complex64::new(real_draw(&dkind, rng), 0.0), &dkind).re * dscale;
    if spec.law.is_complex() {
        let mut m = Mat::<Complex64>::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let mut rng = CounterRng::for_entry(spec.seed, spec.trial_index, i, j);
                let v = if i == j {
                    Complex64::new(diag_entry(&mut rng), 0.0)
                } else {
                    clip(off_diagonal(kind, &mut rng), kind)
                };
                m[(i, j)] = v;
                m[(j, i)] = v.conj();
            }
        }
        Ok(HermitianMatrix::Complex(m))
    } else {
        let mut m = Mat::<f64>::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let mut rng = CounterRng::for_entry(spec.seed, spec.trial_index, i, j);
                let v = if i == j { diag_entry(&mut rng) } else { clip(off_diagonal(kind, &mut rng), kind).re };
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(HermitianMatrix::Real(m))
    }
}

/// `W = M/√n + D`.
pub fn assemble(spec: &EnsembleSpec, diag: &DiagonalRealization) -> Result<HermitianMatrix, EnsembleError> {
    if diag.n != spec.n {
        return Err(EnsembleError::DimensionMismatch { expected: spec.n, got: diag.n });
    }
    let m = sample_wigner(spec)?;
    m.scaled_plus_diagonal(1.0 / (spec.n as f64).sqrt(), &diag.entries)
}

/// Orthonormal eigenvectors as columns.
#[derive(Debug, Clone, PartialEq)]
pub enum EigenVectors {
    Real(Mat<f64>),
    Complex(Mat<Complex64>),
}

impl EigenVectors {
    pub fn dim(&self) -> usize {
        match self {
            Self::Real(m) => m.nrows(),
            Self::Complex(m) => m.nrows(),
        }
    }

    /// Coordinate `row` of eigenvector `col`.
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        match self {
            Self::Real(m) => Complex64::new(m[(row, col)], 0.0),
            Self::Complex(m) => m[(row, col)],
        }
    }

    pub fn column(&self, col: usize) -> Vec<Complex64> {
        (0..self.dim()).map(|r| self.get(r, col)).collect()
    }

    /// `‖uᵢ‖_∞`.
    pub fn sup_norm(&self, col: usize) -> f64 {
        (0..self.dim()).map(|r| self.get(r, col).norm()).fold(0.0, f64::max)
    }

    /// `uᵢ* x`.
    pub fn overlap(&self, col: usize, x: &[Complex64]) -> Complex64 {
        x.iter().enumerate().map(|(r, v)| self.get(r, col).conj() * v).sum()
    }
}

/// Where a sample came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec: Option<EnsembleSpec>,
    pub diagonal_digest: Option<u64>,
    pub matrix_digest: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSample {
    /// Nondecreasing.
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Option<EigenVectors>,
    pub provenance: Provenance,
}

impl SpectralSample {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `max |⟨uᵢ, uⱼ⟩ − δᵢⱼ|`, if vectors are present.
    pub fn gram_error(&self) -> Option<f64> {
        let v = self.eigenvectors.as_ref()?;
        let n = self.n();
        let cols: Vec<Vec<Complex64>> = (0..n).map(|c| v.column(c)).collect();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                let dot = v.overlap(i, &cols[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - want).norm());
            }
        }
        Some(worst)
    }

    /// `max ‖Wuᵢ − λᵢuᵢ‖`, if vectors are present.
    pub fn residual(&self, w: &HermitianMatrix) -> Option<f64> {
        let v = self.eigenvectors.as_ref()?;
        let n = self.n();
        let mut worst = 0.0f64;
        for c in 0..n {
            let u = v.column(c);
            let mut r2 = 0.0;
            for i in 0..n {
                let wu: Complex64 = (0..n).map(|j| w.get(i, j) * u[j]).sum();
                r2 += (wu - u[i] * self.eigenvalues[c]).norm_sqr();
            }
            worst = worst.max(r2.sqrt());
        }
        Some(worst)
    }
}

/// Eigenvalues (ascending) and optionally eigenvectors of `w`.
pub fn eigendecompose(w: &HermitianMatrix, want_vectors: bool) -> Result<SpectralSample, EnsembleError> {
    let digest = w.digest();
    let err = w.hermiticity_error();
    if !(err <= HERMITIAN_TOL) {
        return Err(EnsembleError::NotHermitian { error: err, digest });
    }
    let backend = |e: faer::linalg::evd::EvdError| EnsembleError::Backend { digest, message: format!("{e:?}") };
    let (eigenvalues, eigenvectors) = if w.dim() == 0 {
        (Vec::new(), want_vectors.then(|| EigenVectors::Real(Mat::zeros(0, 0))))
    } else {
        match (w, want_vectors) {
            (HermitianMatrix::Real(m), false) => (m.self_adjoint_eigenvalues(Side::Lower).map_err(backend)?, None),
            (HermitianMatrix::Complex(m), false) => (m.self_adjoint_eigenvalues(Side::Lower).map_err(backend)?, None),
            (HermitianMatrix::Real(m), true) => {
                let e = m.self_adjoint_eigen(Side::Lower).map_err(backend)?;
                let vals = e.S().column_vector().iter().copied().collect();
                (vals, Some(EigenVectors::Real(e.U().to_owned())))
            }
            (HermitianMatrix::Complex(m), true) => {
                let e = m.self_adjoint_eigen(Side::Lower).map_err(backend)?;
                let vals = e.S().column_vector().iter().map(|c| c.re).collect();
                (vals, Some(EigenVectors::Complex(e.U().to_owned())))
            }
        }
    };
    if eigenvalues.iter().any(|v: &f64| !v.is_finite()) || eigenvalues.windows(2).any(|p| p[0] > p[1]) {
        return Err(EnsembleError::Backend { digest, message: "unsorted or non-finite eigenvalues".into() });
    }
    Ok(SpectralSample {
        eigenvalues,
        eigenvectors,
        provenance: Provenance { spec: None, diagonal_digest: None, matrix_digest: digest },
    })
}

/// Assemble and decompose one trial, recording its provenance.
pub fn sample_spectrum(
    spec: &EnsembleSpec,
    diag: &DiagonalRealization,
    want_vectors: bool,
) -> Result<SpectralSample, EnsembleError> {
    let w = assemble(spec, diag)?;
    let mut s = eigendecompose(&w, want_vectors)?;
    s.provenance.spec = Some(spec.clone());
    s.provenance.diagonal_digest = Some(diag.digest());
    Ok(s)
}

/// Applies `f` to every trial index; parallel under the `parallel` feature,
/// with results in input order either way.
pub fn map_trials<T, F>(trials: &[u64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        trials.par_iter().map(|&t| f(t)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        trials.iter().map(|&t| f(t)).collect()
    }
}

/// Spectra for trials `first..first + count` of `template`.
pub fn simulate(
    template: &EnsembleSpec,
    diag: &DiagonalRealization,
    first: u64,
    count: u64,
    want_vectors: bool,
) -> Result<Vec<SpectralSample>, EnsembleError> {
    let trials: Vec<u64> = (first..first + count).collect();
    map_trials(&trials, |t| sample_spectrum(&template.with_trial(t), diag, want_vectors)).into_iter().collect()
}

/// `W` with row and column `drop_index` (1-based) removed.
pub fn principal_minor(w: &HermitianMatrix, drop_index: usize) -> Result<HermitianMatrix, EnsembleError> {
    let n = w.dim();
    if drop_index < 1 || drop_index > n {
        return Err(EnsembleError::IndexOutOfRange { index: drop_index, n });
    }
    let k = drop_index - 1;
    let map = |i: usize| if i < k { i } else { i + 1 };
    Ok(match w {
        HermitianMatrix::Real(m) => HermitianMatrix::Real(Mat::from_fn(n - 1, n - 1, |i, j| m[(map(i), map(j))])),
        HermitianMatrix::Complex(m) => {
            HermitianMatrix::Complex(Mat::from_fn(n - 1, n - 1, |i, j| m[(map(i), map(j))]))
        }
    })
}

/// Eigenvalues of `w` refined by the Rayleigh quotient of each computed
/// eigenvector, evaluated in compensated arithmetic. The quotient's error is
/// quadratic in the eigenvector error, so nearly coincident eigenvalues of
/// different matrices can be compared far below `ε‖w‖`.
pub fn refined_eigenvalues(w: &HermitianMatrix, sample: &SpectralSample) -> Result<Vec<Dd>, EnsembleError> {
    let v = sample
        .eigenvectors
        .as_ref()
        .ok_or_else(|| EnsembleError::Invalid("refinement needs eigenvectors".into()))?;
    let n = w.dim();
    if v.dim() != n {
        return Err(EnsembleError::DimensionMismatch { expected: n, got: v.dim() });
    }
    Ok((0..n)
        .map(|k| {
            let u = v.column(k);
            let wu: Vec<(Dd, Dd)> = (0..n)
                .map(|i| {
                    let (mut re, mut im) = (Accumulator::default(), Accumulator::default());
                    for (j, uj) in u.iter().enumerate() {
                        let a = w.get(i, j);
                        re.add_prod(a.re, uj.re);
                        re.add_prod(-a.im, uj.im);
                        im.add_prod(a.re, uj.im);
                        im.add_prod(a.im, uj.re);
                    }
                    (re.value(), im.value())
                })
                .collect();
            let (mut num, mut den) = (Accumulator::default(), Accumulator::default());
            for (ui, (re, im)) in u.iter().zip(&wu) {
                num.add_dd_prod(ui.re, *re);
                num.add_dd_prod(ui.im, *im);
                den.add_prod(ui.re, ui.re);
                den.add_prod(ui.im, ui.im);
            }
            num.value().quotient(den.value())
        })
        .collect())
}

/// Column `drop_index` (1-based) without its diagonal entry, and that entry.
pub fn removed_column(w: &HermitianMatrix, drop_index: usize) -> Result<(Vec<Complex64>, f64), EnsembleError> {
    let n = w.dim();
    if drop_index < 1 || drop_index > n {
        return Err(EnsembleError::IndexOutOfRange { index: drop_index, n });
    }
    let k = drop_index - 1;
    let col = (0..n).filter(|&i| i != k).map(|i| w.get(i, k)).collect();
    Ok((col, w.get(k, k).re))
}

/// CSV with a `#`-prefixed provenance header, then `index,eigenvalue` rows,
/// then (optionally) `vector,row,re,im` rows.
pub fn write_sample_csv(sample: &SpectralSample, with_vectors: bool) -> String {
    let mut out = String::new();
    let prov = serde_json::to_string(&sample.provenance).expect("provenance serializes");
    writeln!(out, "# provenance={prov}").unwrap();
    writeln!(out, "index,eigenvalue").unwrap();
    for (i, v) in sample.eigenvalues.iter().enumerate() {
        writeln!(out, "{i},{v:?}").unwrap();
    }
    if let (true, Some(vecs)) = (with_vectors, &sample.eigenvectors) {
        let complex = matches!(vecs, EigenVectors::Complex(_));
        writeln!(out, "# vectors={}", if complex { "complex" } else { "real" }).unwrap();
        writeln!(out, "vector,row,re,im").unwrap();
        for c in 0..vecs.dim() {
            for r in 0..vecs.dim() {
                let z = vecs.get(r, c);
                writeln!(out, "{c},{r},{:?},{:?}", z.re, z.im).unwrap();
            }
        }
    }
    out
}

/// Inverse of [`write_sample_csv`].
pub fn read_sample_csv(text: &str) -> Result<SpectralSample, EnsembleError> {
    let bad = |m: &str| EnsembleError::Parse(m.to_string());
    let mut provenance = None;
    let mut eigenvalues = Vec::new();
    let mut vectors: Option<(bool, Vec<(usize, usize, Complex64)>)> = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line == "index,eigenvalue" || line == "vector,row,re,im" {
            continue;
        }
        if let Some(p) = line.strip_prefix("# provenance=") {
            provenance = Some(serde_json::from_str::<Provenance>(p).map_err(|e| bad(&e.to_string()))?);
            continue;
        }
        if let Some(kind) = line.strip_prefix("# vectors=") {
            vectors = Some((kind == "complex", Vec::new()));
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        match (&mut vectors, fields.len()) {
            (None, 2) => {
                let v: f64 = fields[1].parse().map_err(|_| bad(line))?;
                eigenvalues.push(v);
            }
            (Some((_, rows)), 4) => {
                let c: usize = fields[0].parse().map_err(|_| bad(line))?;
                let r: usize = fields[1].parse().map_err(|_| bad(line))?;
                let re: f64 = fields[2].parse().map_err(|_| bad(line))?;
                let im: f64 = fields[3].parse().map_err(|_| bad(line))?;
                rows.push((c, r, Complex64::new(re, im)));
            }
            _ => return Err(bad(line)),
        }
    }
    let provenance = provenance.ok_or_else(|| bad("missing provenance header"))?;
    let n = eigenvalues.len();
    let eigenvectors = match vectors {
        None => None,
        Some((complex, rows)) => {
            if rows.len() != n * n || rows.iter().any(|&(c, r, _)| c >= n || r >= n) {
                return Err(bad("vector block does not match eigenvalue count"));
            }
            if complex {
                let mut m = Mat::<Complex64>::zeros(n, n);
                rows.iter().for_each(|&(c, r, z)| m[(r, c)] = z);
                Some(EigenVectors::Complex(m))
            } else {
                let mut m = Mat::<f64>::zeros(n, n);
                rows.iter().for_each(|&(c, r, z)| m[(r, c)] = z.re);
                Some(EigenVectors::Real(m))
            }
        }
    };
    Ok(SpectralSample { eigenvalues, eigenvectors, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::AtomicMeasure;

    fn spec(n: usize, law: EntryDistribution, seed: u64) -> EnsembleSpec {
        EnsembleSpec::new(n, law, seed)
    }

    #[test]
    fn refinement_reaches_double_double() {
        // Eigenvalues of [[1, 1], [1, 0]] solve λ² = λ + 1.
        let m = HermitianMatrix::Real(Mat::from_fn(2, 2, |i, j| if i + j == 2 { 0.0 } else { 1.0 }));
        let s = eigendecompose(&m, true).unwrap();
        let refined = refined_eigenvalues(&m, &s).unwrap();
        for l in refined {
            let mut sq = Accumulator::default();
            sq.add_dd_prod(l.hi, l);
            sq.add_dd_prod(l.lo, l);
            let mut lin = Accumulator::default();
            lin.add(l.hi);
            lin.add(l.lo);
            lin.add(1.0);
            assert!(sq.value().diff(lin.value()).abs() < 1e-28, "{l:?}");
        }
        assert!(refined_eigenvalues(&m, &eigendecompose(&m, false).unwrap()).is_err());
    }

    #[test]
    fn gue_off_diagonal_moments() {
        let trials = 100_000u64;
        let (mut re, mut im, mut abs2) = (0.0, 0.0, 0.0);
        for t in 0..trials {
            let m = sample_wigner(&spec(2, EntryDistribution::gue(), 1).with_trial(t)).unwrap();
            let z = m.get(0, 1);
            re += z.re;
            im += z.im;
            abs2 += z.norm_sqr();
        }
        let n = trials as f64;
        let three_sigma = 3.0 * (0.5 / n).sqrt();
        assert!((re / n).abs() < three_sigma && (im / n).abs() < three_sigma);
        assert!((abs2 / n - 1.0).abs() < 0.02, "{}", abs2 / n);
    }

    #[test]
    fn goe_diagonal_variance() {
        let trials = 100_000u64;
        let mut s2 = 0.0;
        for t in 0..trials {
            let m = sample_wigner(&spec(2, EntryDistribution::goe(), 2).with_trial(t)).unwrap();
            s2 += m.get(0, 0).re.powi(2);
        }
        assert!((s2 / trials as f64 - 2.0).abs() < 0.04);
    }

    #[test]
    fn rademacher_entries() {
        let law = EntryDistribution::new(EntryKind::Rademacher, 1.0).unwrap();
        let m = sample_wigner(&spec(30, law, 3)).unwrap();
        assert!(matches!(m, HermitianMatrix::Real(_)));
        for i in 0..30 {
            for j in 0..30 {
                assert_eq!(m.get(i, j).re.abs(), 1.0);
                assert_eq!(m.get(i, j), m.get(j, i).conj());
            }
        }
        assert_eq!(m.hermiticity_error(), 0.0);
    }

    #[test]
    fn truncation_recentres_asymmetric_law() {
        // Mean 0, variance 1; at n = 3, C = 1 the level ln(3)² ≈ 1.21 removes the atom at 2.
        let kind: EntryKind = "discrete:-0.5:0.8,2:0.2".parse().unwrap();
        let law = EntryDistribution::new(kind, 1.0).unwrap();
        let mut sp = spec(3, law, 4);
        sp.truncate = true;
        let mut total = 0.0;
        let trials = 20_000;
        for t in 0..trials {
            let v = sample_wigner(&sp.with_trial(t)).unwrap().get(0, 1).re;
            assert!((v + 0.1).abs() < 1e-12 || (v - 0.4).abs() < 1e-12, "{v}");
            total += v;
        }
        assert!((total / trials as f64).abs() < 0.01);
        let shifted = EntryDistribution::new(EntryKind::ShiftedComplex { mean: 0.5 }, 1.0).unwrap();
        let mut bad = spec(10, shifted, 1);
        bad.truncate = true;
        assert!(sample_wigner(&bad).is_err());
    }

    #[test]
    fn assemble_degenerate_cases() {
        let n = 40;
        let sp = spec(n, EntryDistribution::gue(), 5);
        let zero = AtomicMeasure::dirac(0.0).realize(n).unwrap();
        let w = assemble(&sp, &zero).unwrap();
        let m = sample_wigner(&sp).unwrap();
        let s = 1.0 / (n as f64).sqrt();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(w.get(i, j), m.get(i, j) * s);
            }
        }
        let d = [3.0, -1.0, 2.0, -1.0];
        let vals = eigendecompose(&HermitianMatrix::from_diagonal(&d), false).unwrap().eigenvalues;
        assert_eq!(vals, vec![-1.0, -1.0, 2.0, 3.0]);
        let wrong = AtomicMeasure::dirac(0.0).realize(n + 1).unwrap();
        assert!(matches!(assemble(&sp, &wrong), Err(EnsembleError::DimensionMismatch { .. })));
    }

    #[test]
    fn eigendecompose_examples() {
        let s = eigendecompose(&HermitianMatrix::from_diagonal(&[1.0, 2.0, 3.0]), true).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 2.0, 3.0]);
        let v = s.eigenvectors.as_ref().unwrap();
        for c in 0..3 {
            assert!((v.get(c, c).norm() - 1.0).abs() < 1e-15);
        }
        let flip = HermitianMatrix::Real(Mat::from_fn(2, 2, |i, j| if i == j { 0.0 } else { 1.0 }));
        let s = eigendecompose(&flip, false).unwrap();
        assert!((s.eigenvalues[0] + 1.0).abs() < 1e-15 && (s.eigenvalues[1] - 1.0).abs() < 1e-15);
        let skew = HermitianMatrix::Real(Mat::from_fn(2, 2, |i, j| (i as f64) - (j as f64)));
        assert!(matches!(eigendecompose(&skew, false), Err(EnsembleError::NotHermitian { .. })));
    }

    #[test]
    fn decomposition_contract_on_random_samples() {
        let diag = AtomicMeasure::symmetric_pair(2.0).unwrap().realize(60).unwrap();
        for law in [EntryDistribution::gue(), EntryDistribution::goe()] {
            for t in 0..3 {
                let sp = spec(60, law.clone(), 9).with_trial(t);
                let w = assemble(&sp, &diag).unwrap();
                let s = eigendecompose(&w, true).unwrap();
                let norm = w.frobenius();
                assert!(s.gram_error().unwrap() < 1e-8);
                assert!(s.residual(&w).unwrap() < 1e-8 * norm);
                let sum: f64 = s.eigenvalues.iter().sum();
                assert!((sum - w.trace()).abs() < 1e-9 * 60.0);
                let vals = eigendecompose(&w, false).unwrap().eigenvalues;
                for (a, b) in vals.iter().zip(&s.eigenvalues) {
                    assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn minors() {
        let w = HermitianMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        let m = principal_minor(&w, 2).unwrap();
        assert_eq!(m, HermitianMatrix::from_diagonal(&[1.0, 3.0]));
        let one = HermitianMatrix::from_diagonal(&[5.0]);
        assert_eq!(principal_minor(&one, 1).unwrap().dim(), 0);
        assert!(principal_minor(&w, 0).is_err());
        assert!(principal_minor(&w, 4).is_err());
        let (col, diag) = removed_column(&w, 3).unwrap();
        assert_eq!(diag, 3.0);
        assert_eq!(col, vec![Complex64::new(0.0, 0.0); 2]);
    }

    #[test]
    fn reproducible_and_schedule_independent() {
        let diag = AtomicMeasure::symmetric_pair(2.0).unwrap().realize(50).unwrap();
        let template = spec(50, EntryDistribution::gue(), 77);
        let a = simulate(&template, &diag, 0, 6, false).unwrap();
        let b: Vec<SpectralSample> =
            (0..6).map(|t| sample_spectrum(&template.with_trial(t), &diag, false).unwrap()).collect();
        assert_eq!(a, b);
        assert_ne!(a[0].provenance.matrix_digest, a[1].provenance.matrix_digest);
        let other = simulate(&spec(50, EntryDistribution::gue(), 78), &diag, 0, 1, false).unwrap();
        assert_ne!(a[0].eigenvalues, other[0].eigenvalues);
    }

    #[test]
    fn gue_two_by_two_spacing_matches_closed_form() {
        let zero = AtomicMeasure::dirac(0.0).realize(2).unwrap();
        let trials = 100_000u64;
        let (mut numeric, mut closed) = (0.0, 0.0);
        for t in 0..trials {
            let sp = spec(2, EntryDistribution::gue(), 11).with_trial(t);
            let w = assemble(&sp, &zero).unwrap();
            let s = eigendecompose(&w, false).unwrap();
            numeric += s.eigenvalues[1] - s.eigenvalues[0];
            let (a, d, b) = (w.get(0, 0).re, w.get(1, 1).re, w.get(0, 1));
            closed += ((a - d).powi(2) + 4.0 * b.norm_sqr()).sqrt();
        }
        assert!((numeric / closed - 1.0).abs() < 0.01);
    }

    #[test]
    fn sample_csv_round_trip() {
        let diag = AtomicMeasure::dirac(0.0).realize(5).unwrap();
        for law in [EntryDistribution::gue(), EntryDistribution::goe()] {
            let s = sample_spectrum(&spec(5, law, 3), &diag, true).unwrap();
            let back = read_sample_csv(&write_sample_csv(&s, true)).unwrap();
            assert_eq!(back, s);
            let bare = read_sample_csv(&write_sample_csv(&s, false)).unwrap();
            assert_eq!(bare.eigenvalues, s.eigenvalues);
            assert!(bare.eigenvectors.is_none());
        }
        assert!(read_sample_csv("index,eigenvalue\n0,1.0\n").is_err());
    }
}
