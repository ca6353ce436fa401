//! External-source measures and entry laws.
//!
//! An [`AtomicMeasure`] is the limiting law `Σ pᵢ δ_{aᵢ}` of the deterministic
//! diagonal; [`DiagonalRealization`] is its size-`n` rounding. An
//! [`EntryDistribution`] describes the law of the Wigner entries together with
//! its mixed moments, which is what moment matching compares.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the total weight accepted by [`AtomicMeasure::new`].
pub const WEIGHT_SUM_TOL: f64 = 1e-9;
/// Two moments are considered equal when they differ by less than this.
pub const MOMENT_TOL: f64 = 1e-10;
/// Highest moment order tracked by [`match_order`].
pub const MAX_MOMENT_ORDER: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("measure has no atoms")]
    Empty,
    #[error("non-finite atom ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("duplicate atom location {0}")]
    DuplicateLocation(f64),
    #[error("atom at {location} has nonpositive weight {weight}")]
    NonPositiveWeight { location: f64, weight: f64 },
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("cannot realize {atoms} atoms on a diagonal of size {n}")]
    TooSmall { n: usize, atoms: usize },
    #[error("malformed atom list {input:?}: {reason}")]
    Parse { input: String, reason: String },
    #[error("stieltjes transform needs Im z > 0, got {0}")]
    OffUpperHalfPlane(Complex64),
    #[error("invalid entry law: {0}")]
    InvalidLaw(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

/// A finitely supported probability measure with atoms in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
}

impl AtomicMeasure {
    /// Validates and sorts `(location, weight)` pairs.
    pub fn new(pairs: &[(f64, f64)]) -> Result<Self, MeasureError> {
        if pairs.is_empty() {
            return Err(MeasureError::Empty);
        }
        let mut atoms = Vec::with_capacity(pairs.len());
        for &(location, weight) in pairs {
            if !location.is_finite() || !weight.is_finite() {
                return Err(MeasureError::NonFinite(location, weight));
            }
            if weight <= 0.0 {
                return Err(MeasureError::NonPositiveWeight { location, weight });
            }
            atoms.push(Atom { location, weight });
        }
        atoms.sort_by(|a, b| a.location.total_cmp(&b.location));
        if let Some(w) = atoms.windows(2).find(|w| w[0].location == w[1].location) {
            return Err(MeasureError::DuplicateLocation(w[0].location));
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(MeasureError::WeightSum(total));
        }
        Ok(Self { atoms })
    }

    /// The point mass at zero; the undeformed Wigner case.
    pub fn dirac(location: f64) -> Self {
        Self { atoms: vec![Atom { location, weight: 1.0 }] }
    }

    /// `½δ_{−a} + ½δ_{a}`.
    pub fn symmetric_pair(a: f64) -> Result<Self, MeasureError> {
        Self::new(&[(-a, 0.5), (a, 0.5)])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn max_abs_location(&self) -> f64 {
        self.atoms.iter().map(|a| a.location.abs()).fold(0.0, f64::max)
    }

    /// Stieltjes transform `Σ pᵢ / (aᵢ − z)` on the upper half-plane.
    pub fn stieltjes(&self, z: Complex64) -> Result<Complex64, MeasureError> {
        if !(z.im > 0.0) {
            return Err(MeasureError::OffUpperHalfPlane(z));
        }
        Ok(self.stieltjes_unchecked(z))
    }

    pub(crate) fn stieltjes_unchecked(&self, z: Complex64) -> Complex64 {
        self.atoms.iter().map(|a| a.weight / (a.location - z)).sum()
    }

    /// `Σ pᵢ / (aᵢ − z)²`, the derivative of the transform.
    pub(crate) fn stieltjes_derivative(&self, z: Complex64) -> Complex64 {
        self.atoms
            .iter()
            .map(|a| {
                let d = a.location - z;
                a.weight / (d * d)
            })
            .sum()
    }

    /// Rounds `n·pᵢ` to multiplicities with the largest-remainder method.
    /// Ties go to the atom with the smaller location.
    pub fn realize(&self, n: usize) -> Result<DiagonalRealization, MeasureError> {
        let l = self.atoms.len();
        if n < l {
            return Err(MeasureError::TooSmall { n, atoms: l });
        }
        let scaled: Vec<f64> = self.atoms.iter().map(|a| a.weight * n as f64).collect();
        let mut counts: Vec<usize> = scaled.iter().map(|s| s.floor() as usize).collect();
        let assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..l).collect();
        // Stable sort keeps index order (= location order) among equal remainders.
        order.sort_by(|&i, &j| {
            let ri = scaled[i] - scaled[i].floor();
            let rj = scaled[j] - scaled[j].floor();
            if (ri - rj).abs() <= 1e-12 {
                std::cmp::Ordering::Equal
            } else {
                rj.total_cmp(&ri)
            }
        });
        for &i in order.iter().take(n.saturating_sub(assigned)) {
            counts[i] += 1;
        }
        let mut entries = Vec::with_capacity(n);
        for (atom, &c) in self.atoms.iter().zip(&counts) {
            entries.extend(std::iter::repeat_n(atom.location, c));
        }
        let realized_weights = counts.iter().map(|&c| c as f64 / n as f64).collect();
        Ok(DiagonalRealization {
            n,
            entries,
            locations: self.atoms.iter().map(|a| a.location).collect(),
            multiplicities: counts,
            realized_weights,
        })
    }

    /// True when the measure is invariant under `x ↦ −x`.
    pub fn is_symmetric(&self) -> bool {
        let l = self.atoms.len();
        (0..l).all(|i| {
            let a = self.atoms[i];
            let b = self.atoms[l - 1 - i];
            (a.location + b.location).abs() < 1e-12 && (a.weight - b.weight).abs() < 1e-12
        })
    }
}

impl FromStr for AtomicMeasure {
    type Err = MeasureError;

    /// Parses `"loc:weight,loc:weight"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_err = |reason: &str| MeasureError::Parse {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let mut pairs = Vec::new();
        for item in s.split(',') {
            let item = item.trim();
            let (loc, w) = item.split_once(':').ok_or_else(|| parse_err("expected loc:weight"))?;
            let loc: f64 = loc.trim().parse().map_err(|_| parse_err("bad location"))?;
            let w: f64 = w.trim().parse().map_err(|_| parse_err("bad weight"))?;
            pairs.push((loc, w));
        }
        Self::new(&pairs)
    }
}

impl fmt::Display for AtomicMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", a.location, a.weight)?;
        }
        Ok(())
    }
}

impl Serialize for AtomicMeasure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for AtomicMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The diagonal `D_n`: `n` entries drawn from the atom locations, sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalRealization {
    pub n: usize,
    pub entries: Vec<f64>,
    pub locations: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub realized_weights: Vec<f64>,
}

impl DiagonalRealization {
    /// The empirical measure `μ_{D_n}`, atoms with zero multiplicity dropped.
    pub fn empirical_measure(&self) -> AtomicMeasure {
        let atoms = self
            .locations
            .iter()
            .zip(&self.multiplicities)
            .filter(|(_, &c)| c > 0)
            .map(|(&location, &c)| Atom { location, weight: c as f64 / self.n as f64 })
            .collect();
        AtomicMeasure { atoms }
    }

    pub fn max_weight_error(&self, measure: &AtomicMeasure) -> f64 {
        measure
            .atoms()
            .iter()
            .zip(&self.realized_weights)
            .map(|(a, p)| (a.weight - p).abs())
            .fold(0.0, f64::max)
    }

    pub fn digest(&self) -> u64 {
        let mut h = crate::rng::Fnv::new();
        h.write_u64(self.n as u64);
        for e in &self.entries {
            h.write_u64(e.to_bits());
        }
        h.finish()
    }
}

/// Shape of an entry law. Every kind except [`EntryKind::ShiftedComplex`] has
/// mean zero and unit off-diagonal variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum EntryKind {
    GaussianReal,
    GaussianComplex,
    Rademacher,
    /// `±√3` with probability 1/6 each, `0` with probability 2/3.
    Matched4Real,
    /// `(X + iY)/√2` with `X, Y` independent [`EntryKind::Matched4Real`].
    Matched4Complex,
    /// Finite real law; must be centred with unit variance.
    Discrete { points: Vec<f64>, probabilities: Vec<f64> },
    /// Control law outside condition C0: `μ + √(1−μ²)·(X + iY)/√2` with
    /// Gaussian `X, Y`, so `E|ζ|² = 1` but the mean is `μ ≠ 0`.
    ShiftedComplex { mean: f64 },
}

impl EntryKind {
    pub fn is_complex(&self) -> bool {
        matches!(self, Self::GaussianComplex | Self::Matched4Complex | Self::ShiftedComplex { .. })
    }

    pub fn name(&self) -> String {
        match self {
            Self::GaussianReal => "gaussian-real".into(),
            Self::GaussianComplex => "gaussian-complex".into(),
            Self::Rademacher => "rademacher".into(),
            Self::Matched4Real => "matched4-real".into(),
            Self::Matched4Complex => "matched4-complex".into(),
            Self::Discrete { points, probabilities } => {
                let body: Vec<String> =
                    points.iter().zip(probabilities).map(|(x, p)| format!("{x}:{p}")).collect();
                format!("discrete:{}", body.join(","))
            }
            Self::ShiftedComplex { mean } => format!("shifted-complex:{mean}"),
        }
    }

    fn validate(&self) -> Result<(), MeasureError> {
        match self {
            Self::Discrete { points, probabilities } => {
                if points.is_empty() || points.len() != probabilities.len() {
                    return Err(MeasureError::InvalidLaw("discrete law needs matching points/probabilities".into()));
                }
                if points.iter().chain(probabilities).any(|v| !v.is_finite())
                    || probabilities.iter().any(|&p| p <= 0.0)
                {
                    return Err(MeasureError::InvalidLaw("discrete law needs finite points and positive probabilities".into()));
                }
                let total: f64 = probabilities.iter().sum();
                let mean: f64 = points.iter().zip(probabilities).map(|(x, p)| x * p).sum();
                let second: f64 = points.iter().zip(probabilities).map(|(x, p)| x * x * p).sum();
                if (total - 1.0).abs() > WEIGHT_SUM_TOL || mean.abs() > 1e-9 || (second - 1.0).abs() > 1e-9 {
                    return Err(MeasureError::InvalidLaw(format!(
                        "discrete law must have total 1, mean 0, variance 1 (got {total}, {mean}, {second})"
                    )));
                }
                Ok(())
            }
            Self::ShiftedComplex { mean } => {
                if !(mean.abs() < 1.0) {
                    return Err(MeasureError::InvalidLaw("shifted-complex mean must lie in (-1, 1)".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

impl From<EntryKind> for String {
    fn from(k: EntryKind) -> String {
        k.name()
    }
}

impl TryFrom<String> for EntryKind {
    type Error = MeasureError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for EntryKind {
    type Err = MeasureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = |reason: &str| MeasureError::InvalidLaw(format!("{s:?}: {reason}"));
        let kind = match s {
            "gaussian-real" | "goe" => Self::GaussianReal,
            "gaussian-complex" | "gue" => Self::GaussianComplex,
            "rademacher" => Self::Rademacher,
            "matched4-real" => Self::Matched4Real,
            "matched4-complex" => Self::Matched4Complex,
            _ => {
                if let Some(rest) = s.strip_prefix("shifted-complex:") {
                    let mean = rest.trim().parse().map_err(|_| bad("bad mean"))?;
                    Self::ShiftedComplex { mean }
                } else if let Some(rest) = s.strip_prefix("discrete:") {
                    let mut points = Vec::new();
                    let mut probabilities = Vec::new();
                    for item in rest.split(',') {
                        let (x, p) = item.split_once(':').ok_or_else(|| bad("expected point:prob"))?;
                        points.push(x.trim().parse().map_err(|_| bad("bad point"))?);
                        probabilities.push(p.trim().parse().map_err(|_| bad("bad probability"))?);
                    }
                    Self::Discrete { points, probabilities }
                } else {
                    return Err(bad("unknown entry law"));
                }
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// An entry law for a Wigner matrix: off-diagonal kind plus diagonal variance.
///
/// Diagonal entries use the real counterpart of the kind scaled to variance
/// `diagonal_variance` (Gaussian for Gaussian-type kinds, `matched4-real` for
/// `matched4-complex`, the kind itself for real kinds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryDistribution {
    pub kind: EntryKind,
    pub diagonal_variance: f64,
}

impl EntryDistribution {
    pub fn new(kind: EntryKind, diagonal_variance: f64) -> Result<Self, MeasureError> {
        kind.validate()?;
        if !(diagonal_variance > 0.0 && diagonal_variance.is_finite()) {
            return Err(MeasureError::InvalidLaw(format!("diagonal variance {diagonal_variance} must be positive")));
        }
        Ok(Self { kind, diagonal_variance })
    }

    /// GUE entries: complex Gaussian off-diagonal, `N(0, 1)` diagonal.
    pub fn gue() -> Self {
        Self { kind: EntryKind::GaussianComplex, diagonal_variance: 1.0 }
    }

    /// GOE entries: real Gaussian off-diagonal, `N(0, 2)` diagonal.
    pub fn goe() -> Self {
        Self { kind: EntryKind::GaussianReal, diagonal_variance: 2.0 }
    }

    pub fn is_complex(&self) -> bool {
        self.kind.is_complex()
    }

    /// Mean zero and unit off-diagonal variance, with tails that satisfy C0.
    pub fn satisfies_c0(&self) -> bool {
        !matches!(self.kind, EntryKind::ShiftedComplex { .. })
    }

    /// Mixed off-diagonal moments `E[Re(ζ)^m Im(ζ)^l]` for `m + l ≤ k`.
    pub fn moments(&self, k: usize) -> MixedMoments {
        let k = k.min(MAX_MOMENT_ORDER);
        let mut values = Vec::new();
        for total in 0..=k {
            for m in (0..=total).rev() {
                let l = total - m;
                values.push(((m, l), self.mixed_moment(m, l)));
            }
        }
        MixedMoments { order: k, values }
    }

    /// Moments `E[ζᵢᵢ^m]` of the (real) diagonal law, `m ≤ k`.
    pub fn diagonal_moments(&self, k: usize) -> MixedMoments {
        let k = k.min(MAX_MOMENT_ORDER);
        let scale = self.diagonal_variance.sqrt();
        let base = match &self.kind {
            EntryKind::GaussianReal | EntryKind::GaussianComplex | EntryKind::ShiftedComplex { .. } => {
                EntryKind::GaussianReal
            }
            EntryKind::Matched4Complex => EntryKind::Matched4Real,
            other => other.clone(),
        };
        let values = (0..=k)
            .map(|m| ((m, 0), scale.powi(m as i32) * real_moment(&base, m)))
            .collect();
        MixedMoments { order: k, values }
    }

    fn mixed_moment(&self, m: usize, l: usize) -> f64 {
        match &self.kind {
            EntryKind::GaussianComplex => complex_moment(&EntryKind::GaussianReal, m, l),
            EntryKind::Matched4Complex => complex_moment(&EntryKind::Matched4Real, m, l),
            EntryKind::ShiftedComplex { mean } => {
                let s = (1.0 - mean * mean).sqrt() / std::f64::consts::SQRT_2;
                let re: f64 = (0..=m)
                    .map(|j| binomial(m, j) * mean.powi((m - j) as i32) * s.powi(j as i32) * gaussian_moment(j))
                    .sum();
                re * s.powi(l as i32) * gaussian_moment(l)
            }
            real => {
                if l == 0 {
                    real_moment(real, m)
                } else {
                    0.0
                }
            }
        }
    }
}

/// A table of mixed moments indexed by `(m, l)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixedMoments {
    pub order: usize,
    pub values: Vec<((usize, usize), f64)>,
}

impl MixedMoments {
    pub fn get(&self, m: usize, l: usize) -> Option<f64> {
        self.values.iter().find(|(key, _)| *key == (m, l)).map(|(_, v)| *v)
    }
}

fn gaussian_moment(j: usize) -> f64 {
    if j % 2 == 1 {
        0.0
    } else {
        // (j − 1)!!
        (1..j).step_by(2).map(|v| v as f64).product()
    }
}

fn real_moment(kind: &EntryKind, j: usize) -> f64 {
    match kind {
        EntryKind::GaussianReal => gaussian_moment(j),
        EntryKind::Rademacher => {
            if j.is_multiple_of(2) {
                1.0
            } else {
                0.0
            }
        }
        EntryKind::Matched4Real => match j {
            0 => 1.0,
            _ if j % 2 == 1 => 0.0,
            _ => 3f64.powi(j as i32 / 2) / 3.0,
        },
        EntryKind::Discrete { points, probabilities } => {
            points.iter().zip(probabilities).map(|(x, p)| p * x.powi(j as i32)).sum()
        }
        _ => unreachable!("complex kinds have no real moment sequence"),
    }
}

fn complex_moment(part: &EntryKind, m: usize, l: usize) -> f64 {
    real_moment(part, m) * real_moment(part, l) / 2f64.powi((m + l) as i32).sqrt()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn moments_equal(a: &MixedMoments, b: &MixedMoments, order: usize) -> bool {
    a.values
        .iter()
        .zip(&b.values)
        .filter(|(((m, l), _), _)| m + l == order)
        .all(|((_, x), (_, y))| (x - y).abs() <= MOMENT_TOL * x.abs().max(y.abs()).max(1.0))
}

fn common_order(a: &MixedMoments, b: &MixedMoments) -> usize {
    let mut k = 0;
    while k < MAX_MOMENT_ORDER && moments_equal(a, b, k + 1) {
        k += 1;
    }
    k
}

/// Largest `k ≤ 8` such that the off-diagonal laws agree in every mixed moment
/// of total order at most `k`.
pub fn match_order(d1: &EntryDistribution, d2: &EntryDistribution) -> usize {
    common_order(&d1.moments(MAX_MOMENT_ORDER), &d2.moments(MAX_MOMENT_ORDER))
}

/// Same as [`match_order`] for the diagonal laws.
pub fn diagonal_match_order(d1: &EntryDistribution, d2: &EntryDistribution) -> usize {
    common_order(&d1.diagonal_moments(MAX_MOMENT_ORDER), &d2.diagonal_moments(MAX_MOMENT_ORDER))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(a: f64) -> AtomicMeasure {
        AtomicMeasure::symmetric_pair(a).unwrap()
    }

    #[test]
    fn dirac_measure() {
        let m = AtomicMeasure::new(&[(0.0, 1.0)]).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m, AtomicMeasure::dirac(0.0));
    }

    #[test]
    fn rejects_bad_measures() {
        assert_eq!(
            AtomicMeasure::new(&[(1.0, 0.3), (1.0, 0.7)]),
            Err(MeasureError::DuplicateLocation(1.0))
        );
        assert!(matches!(AtomicMeasure::new(&[(0.0, 0.5)]), Err(MeasureError::WeightSum(_))));
        assert!(matches!(
            AtomicMeasure::new(&[(0.0, 1.5), (1.0, -0.5)]),
            Err(MeasureError::NonPositiveWeight { .. })
        ));
        assert_eq!(AtomicMeasure::new(&[]), Err(MeasureError::Empty));
    }

    #[test]
    fn parses_atom_strings() {
        let m: AtomicMeasure = "2:0.5, -2:0.5".parse().unwrap();
        assert_eq!(m, pair(2.0));
        assert_eq!(m.to_string(), "-2:0.5,2:0.5");
        assert!(matches!("2:".parse::<AtomicMeasure>(), Err(MeasureError::Parse { .. })));
        assert!("".parse::<AtomicMeasure>().is_err());
    }

    #[test]
    fn realize_dirac() {
        let d = AtomicMeasure::dirac(0.0).realize(5).unwrap();
        assert_eq!(d.entries, vec![0.0; 5]);
        assert_eq!(d.realized_weights, vec![1.0]);
    }

    #[test]
    fn realize_exact_and_tied_splits() {
        let d = pair(2.0).realize(4).unwrap();
        assert_eq!(d.entries, vec![-2.0, -2.0, 2.0, 2.0]);
        assert_eq!(d.realized_weights, vec![0.5, 0.5]);

        let d = pair(2.0).realize(5).unwrap();
        assert_eq!(d.multiplicities, vec![3, 2]);
        assert!((d.max_weight_error(&pair(2.0)) - 0.1).abs() < 1e-15);
        assert!(matches!(pair(2.0).realize(1), Err(MeasureError::TooSmall { .. })));
    }

    #[test]
    fn realized_weights_converge_at_rate_one_over_n() {
        let m = AtomicMeasure::new(&[(-1.0, 0.2), (0.0, 0.3), (2.0, 0.5)]).unwrap();
        let awkward = AtomicMeasure::new(&[(-1.0, 1.0 / 3.0), (0.5, 1.0 / 7.0), (3.0, 11.0 / 21.0)]).unwrap();
        for measure in [&m, &awkward] {
            let l = measure.len() as f64;
            for n in (measure.len()..100_000).step_by(997).chain([3, 4, 7, 99_999]) {
                let d = measure.realize(n).unwrap();
                assert_eq!(d.entries.len(), n);
                assert!(d.entries.windows(2).all(|w| w[0] <= w[1]));
                assert!(d.max_weight_error(measure) <= l / n as f64);
                assert!(d.max_weight_error(measure) <= 1.0 / n as f64 + 1e-15);
                assert_eq!(measure.realize(n).unwrap(), d);
            }
        }
    }

    #[test]
    fn stieltjes_examples() {
        let i = Complex64::i();
        assert!((AtomicMeasure::dirac(0.0).stieltjes(i).unwrap() - i).norm() < 1e-15);

        let r2 = 2f64.sqrt();
        let m = pair(r2);
        for z in [Complex64::new(0.3, 0.7), Complex64::new(-1.1, 0.01), Complex64::new(4.0, 2.0)] {
            let closed = z / (2.0 - z * z);
            assert!((m.stieltjes(z).unwrap() - closed).norm() < 1e-13);
        }

        let z = Complex64::new(0.0, 2.0);
        let by_hand = 0.5 / (Complex64::new(-2.0, -2.0)) + 0.5 / Complex64::new(2.0, -2.0);
        let got = pair(2.0).stieltjes(z).unwrap();
        assert!((got - by_hand).norm() < 1e-15);
        assert!((got - Complex64::new(0.0, 0.25)).norm() < 1e-15);
        assert!(pair(2.0).stieltjes(Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn stieltjes_symmetry_for_symmetric_measure() {
        let m = pair(2.0);
        assert!(m.is_symmetric());
        for z in [Complex64::new(0.4, 0.2), Complex64::new(-3.0, 1e-3)] {
            let lhs = m.stieltjes(-z.conj()).unwrap();
            let rhs = -m.stieltjes(z).unwrap().conj();
            assert!((lhs - rhs).norm() < 1e-14);
            assert!(m.stieltjes(z).unwrap().im > 0.0);
        }
    }

    #[test]
    fn moment_examples() {
        let g = EntryDistribution::goe().moments(4);
        assert_eq!(g.get(2, 0), Some(1.0));
        assert_eq!(g.get(3, 0), Some(0.0));
        assert_eq!(g.get(4, 0), Some(3.0));
        assert_eq!(g.get(2, 2), Some(0.0));

        let r = EntryDistribution::new(EntryKind::Rademacher, 1.0).unwrap().moments(4);
        assert_eq!((r.get(2, 0), r.get(3, 0), r.get(4, 0)), (Some(1.0), Some(0.0), Some(1.0)));

        let m4 = EntryDistribution::new(EntryKind::Matched4Real, 1.0).unwrap().moments(6);
        assert!((m4.get(2, 0).unwrap() - 1.0).abs() < 1e-15);
        assert!((m4.get(4, 0).unwrap() - 3.0).abs() < 1e-15);
        assert!((m4.get(6, 0).unwrap() - 9.0).abs() < 1e-14);
    }

    /// Enumeration oracle over the atoms of a discrete complex law.
    fn enumerate_moment(atoms: &[(Complex64, f64)], m: usize, l: usize) -> f64 {
        atoms.iter().map(|(z, p)| p * z.re.powi(m as i32) * z.im.powi(l as i32)).sum()
    }

    #[test]
    fn matched4_complex_moments_match_enumeration() {
        let s3 = 3f64.sqrt();
        let real = [(-s3, 1.0 / 6.0), (0.0, 2.0 / 3.0), (s3, 1.0 / 6.0)];
        let mut atoms = Vec::new();
        for (x, px) in real {
            for (y, py) in real {
                atoms.push((Complex64::new(x, y) / 2f64.sqrt(), px * py));
            }
        }
        let d = EntryDistribution::new(EntryKind::Matched4Complex, 1.0).unwrap();
        for ((m, l), v) in d.moments(8).values {
            assert!((v - enumerate_moment(&atoms, m, l)).abs() < 1e-12, "({m},{l})");
        }
    }

    #[test]
    fn discrete_law_moments_by_enumeration() {
        let kind: EntryKind = "discrete:-1:0.5,1:0.5".parse().unwrap();
        let d = EntryDistribution::new(kind, 1.0).unwrap();
        let r = EntryDistribution::new(EntryKind::Rademacher, 1.0).unwrap();
        assert_eq!(match_order(&d, &r), MAX_MOMENT_ORDER);
        assert!("discrete:0:0.5,1:0.5".parse::<EntryKind>().is_err());
    }

    #[test]
    fn match_order_examples() {
        let goe = EntryDistribution::goe();
        let gue = EntryDistribution::gue();
        let rad = EntryDistribution::new(EntryKind::Rademacher, 2.0).unwrap();
        let m4 = EntryDistribution::new(EntryKind::Matched4Real, 1.0).unwrap();
        let m4c = EntryDistribution::new(EntryKind::Matched4Complex, 1.0).unwrap();
        assert_eq!(match_order(&goe, &goe), 8);
        assert_eq!(match_order(&rad, &goe), 3);
        // Fifth moments vanish for both; sixth are 9 versus 15.
        assert_eq!(match_order(&m4, &goe), 5);
        assert_eq!(match_order(&m4c, &gue), 5);
        assert_eq!(diagonal_match_order(&rad, &goe), 3);
        assert_eq!(diagonal_match_order(&m4c, &gue), 5);
        let shifted = EntryDistribution::new(EntryKind::ShiftedComplex { mean: 0.8 }, 1.0).unwrap();
        assert_eq!(match_order(&shifted, &gue), 0);
        assert!(!shifted.satisfies_c0());
    }

    #[test]
    fn kind_names_round_trip() {
        for name in ["gaussian-real", "gaussian-complex", "rademacher", "matched4-real", "matched4-complex", "shifted-complex:0.5"] {
            let k: EntryKind = name.parse().unwrap();
            assert_eq!(k.name(), name);
        }
        assert!("cauchy".parse::<EntryKind>().is_err());
        assert!("shifted-complex:1.5".parse::<EntryKind>().is_err());
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn match_order_is_symmetric(i in 0usize..6, j in 0usize..6) {
            let laws = [
                EntryDistribution::goe(),
                EntryDistribution::gue(),
                EntryDistribution::new(EntryKind::Rademacher, 2.0).unwrap(),
                EntryDistribution::new(EntryKind::Matched4Real, 1.0).unwrap(),
                EntryDistribution::new(EntryKind::Matched4Complex, 1.0).unwrap(),
                EntryDistribution::new(EntryKind::ShiftedComplex { mean: 0.3 }, 1.0).unwrap(),
            ];
            prop_assert_eq!(match_order(&laws[i], &laws[j]), match_order(&laws[j], &laws[i]));
            prop_assert_eq!(match_order(&laws[i], &laws[j]) == 8, laws[i].moments(8) == laws[j].moments(8));
        }

        #[test]
        fn stieltjes_is_herglotz(re in -10.0f64..10.0, im in 1e-6f64..1e3, a in 0.1f64..5.0, p in 0.05f64..0.95) {
            let m = AtomicMeasure::new(&[(-a, p), (a * 0.5, 1.0 - p)]).unwrap();
            prop_assert!(m.stieltjes(Complex64::new(re, im)).unwrap().im > 0.0);
        }
    }
}
