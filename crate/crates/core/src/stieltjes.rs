//! The self-consistent equation for the deformed semicircle law.
//!
//! For an atomic source `μ_D = Σ pᵢ δ_{aᵢ}` the Stieltjes transform `m` of the
//! limiting spectral measure solves
//!
//! ```text
//! m = Σ pᵢ / (aᵢ − z − m),   Im z > 0,
//! ```
//!
//! and the density is recovered as `ρ(x) = lim_{η↓0} Im m(x + iη) / π`.
//!
//! Two solvers are provided and cross-checked in tests:
//!
//! * [`Strategy::Newton`]: damped Newton on the fixed-point residual, continued
//!   along `z = x + iη` with `η` halving from a height where `m ≈ −1/z`.
//! * [`Strategy::Polynomial`]: clears denominators into a degree `l + 1`
//!   polynomial in `m`, takes every root from the companion matrix and keeps
//!   the one that continues the previous value.
//!
//! [`Strategy::Auto`] runs Newton and falls back to polynomial tracking when
//! Newton fails to converge, leaves the upper half-plane or jumps branch.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measure::AtomicMeasure;
use crate::poly::{nearest_root, Poly};

/// Residual bound every returned solution satisfies.
pub const RESIDUAL_TOL: f64 = 1e-12;
/// Density below this value counts as outside the support.
pub const SUPPORT_THRESHOLD: f64 = 1e-7;
/// Bisection bracket width for support edges.
pub const EDGE_TOL: f64 = 1e-8;
/// Half-width of the band around each edge where the quantile grid is refined.
pub const EDGE_BAND: f64 = 0.05;

const CONTINUATION_RATIO: f64 = 0.5;
const JUMP_FACTOR: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StieltjesError {
    #[error("Im z must be positive, got {0}")]
    OffUpperHalfPlane(Complex64),
    #[error("no convergence at z = {z}: last residual {residual:e}")]
    NonConvergence { z: Complex64, residual: f64 },
    #[error("branch jump at z = {z}: |Δm| = {jump:e} exceeds {allowed:e}")]
    BranchJump { z: Complex64, jump: f64, allowed: f64 },
    #[error("solver failed at grid point {index} (x = {x}): {source}")]
    GridPoint {
        index: usize,
        x: f64,
        #[source]
        source: Box<StieltjesError>,
    },
    #[error("grid must be strictly increasing with at least two points")]
    InvalidGrid,
    #[error("eta floor {0} outside (0, 1e-3]")]
    InvalidEta(f64),
    #[error("density vanishes on the whole grid")]
    EmptySupport,
    #[error("support touches the grid boundary at x = {0}; widen the grid")]
    SupportNotBracketed(f64),
    #[error("epsilon {0} outside (0, 1/2) or n = 0")]
    InvalidBulk(f64),
}

/// How [`solve_pastur_with`] follows the branch from `Im z = ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Newton,
    Polynomial,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StieltjesSolution {
    pub z: Complex64,
    pub m: Complex64,
    pub residual: f64,
    /// Rank of the selected root by decreasing imaginary part when the
    /// polynomial tracker produced the value; `None` for the Newton path.
    pub branch_id: Option<usize>,
}

/// Stieltjes transform of the semicircle law: the root of `m² + zm + 1 = 0`
/// in the upper half-plane.
pub fn semicircle_st(z: Complex64) -> Complex64 {
    let disc = (z * z - 4.0).sqrt();
    // Pick the sign without cancellation, then use m₁m₂ = 1.
    let big = if (-z + disc).norm() >= (-z - disc).norm() { (-z + disc) / 2.0 } else { (-z - disc) / 2.0 };
    let small = 1.0 / big;
    if small.im >= big.im {
        small
    } else {
        big
    }
}

/// `|m − Σ pᵢ/(aᵢ − z − m)|`.
pub fn pastur_residual(measure: &AtomicMeasure, z: Complex64, m: Complex64) -> f64 {
    (m - measure.stieltjes_unchecked(z + m)).norm()
}

/// `dm/dz` implied by the equation at `(z, m)`.
fn implied_derivative(measure: &AtomicMeasure, z: Complex64, m: Complex64) -> Complex64 {
    let gp = measure.stieltjes_derivative(z + m);
    gp / (1.0 - gp)
}

/// Damped Newton on `F(m) = m − Σ pᵢ/(aᵢ − z − m)` from `m0`.
pub fn newton_from(measure: &AtomicMeasure, z: Complex64, m0: Complex64) -> Result<StieltjesSolution, StieltjesError> {
    let f = |m: Complex64| m - measure.stieltjes_unchecked(z + m);
    let mut m = m0;
    let mut fm = f(m);
    for _ in 0..100 {
        let r = fm.norm();
        if r <= 1e-16 * m.norm().max(1.0) || !r.is_finite() {
            break;
        }
        let dfm = 1.0 - measure.stieltjes_derivative(z + m);
        if dfm.norm() == 0.0 {
            break;
        }
        let step = fm / dfm;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = m - step * t;
            let fc = f(cand);
            if fc.norm() < r {
                m = cand;
                fm = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let residual = fm.norm();
    if residual <= RESIDUAL_TOL && m.re.is_finite() && m.im.is_finite() {
        Ok(StieltjesSolution { z, m, residual, branch_id: None })
    } else {
        Err(StieltjesError::NonConvergence { z, residual })
    }
}

/// Starting height of the continuation path.
fn start_height(measure: &AtomicMeasure, z: Complex64) -> f64 {
    2.0 * (1.0 + measure.max_abs_location() + z.norm())
}

/// Heights from the start down to the last checkpoint, halving each step and
/// passing through every checkpoint. Checkpoints must be decreasing.
fn continuation_heights(start: f64, checkpoints: &[f64]) -> Vec<(f64, Option<usize>)> {
    let mut out = Vec::new();
    let mut eta = start;
    for (k, &target) in checkpoints.iter().enumerate() {
        while eta * CONTINUATION_RATIO > target {
            eta *= CONTINUATION_RATIO;
            out.push((eta, None));
        }
        eta = target;
        out.push((target, Some(k)));
    }
    out
}

fn newton_path(measure: &AtomicMeasure, x: f64, checkpoints: &[f64], start: f64) -> Result<Vec<StieltjesSolution>, StieltjesError> {
    let mut out = Vec::with_capacity(checkpoints.len());
    let z0 = Complex64::new(x, start.max(checkpoints[0]));
    let mut prev = newton_from(measure, z0, -1.0 / z0)?;
    if prev.m.im < 0.0 {
        return Err(StieltjesError::NonConvergence { z: z0, residual: prev.residual });
    }
    for (eta, checkpoint) in continuation_heights(z0.im, checkpoints) {
        let z = Complex64::new(x, eta);
        let sol = if eta == prev.z.im { prev } else { newton_from(measure, z, prev.m)? };
        if sol.m.im < -1e-14 {
            return Err(StieltjesError::BranchJump { z, jump: (sol.m - prev.m).norm(), allowed: 0.0 });
        }
        let step = prev.z.im - eta;
        if step > 0.0 {
            let slope = implied_derivative(measure, prev.z, prev.m)
                .norm()
                .max(implied_derivative(measure, z, sol.m).norm())
                .max(1.0);
            let allowed = JUMP_FACTOR * step * slope;
            let jump = (sol.m - prev.m).norm();
            if jump > allowed {
                return Err(StieltjesError::BranchJump { z, jump, allowed });
            }
        }
        if checkpoint.is_some() {
            out.push(sol);
        }
        prev = sol;
    }
    Ok(out)
}

/// `m·Π(aᵢ − z − m) − Σ pᵢ Π_{k≠i}(a_k − z − m)`.
pub fn pastur_polynomial(measure: &AtomicMeasure, z: Complex64) -> Poly {
    let one = Complex64::new(1.0, 0.0);
    let factors: Vec<Poly> = measure
        .atoms()
        .iter()
        .map(|a| Poly::linear(a.location - z, -one))
        .collect();
    let all = factors.iter().fold(Poly::constant(one), |acc, f| acc.mul(f));
    let mut p = Poly::linear(Complex64::new(0.0, 0.0), one).mul(&all);
    for (i, atom) in measure.atoms().iter().enumerate() {
        let others = factors
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i)
            .fold(Poly::constant(one), |acc, (_, f)| acc.mul(f));
        p = p.add(&others.scale(Complex64::new(-atom.weight, 0.0)));
    }
    p
}

/// Roots of [`pastur_polynomial`] sorted by decreasing imaginary part.
pub fn pastur_roots(measure: &AtomicMeasure, z: Complex64) -> Option<Vec<Complex64>> {
    let mut roots = pastur_polynomial(measure, z).roots()?;
    roots.sort_by(|a, b| b.im.total_cmp(&a.im).then(a.re.total_cmp(&b.re)));
    Some(roots)
}

fn polish(measure: &AtomicMeasure, z: Complex64, m: Complex64) -> Complex64 {
    match newton_from(measure, z, m) {
        Ok(sol) if (sol.m - m).norm() <= 1e-6 * m.norm().max(1.0) => sol.m,
        _ => m,
    }
}

fn polynomial_path(measure: &AtomicMeasure, x: f64, checkpoints: &[f64], start: f64) -> Result<Vec<StieltjesSolution>, StieltjesError> {
    let mut out = Vec::with_capacity(checkpoints.len());
    let top = start.max(checkpoints[0]);
    let mut prev = -1.0 / Complex64::new(x, top);
    let mut heights = vec![(top, None)];
    heights.extend(continuation_heights(top, checkpoints));
    for (eta, checkpoint) in heights {
        let z = Complex64::new(x, eta);
        let roots = pastur_roots(measure, z).ok_or(StieltjesError::NonConvergence { z, residual: f64::NAN })?;
        let admissible: Vec<Complex64> = roots.iter().copied().filter(|r| r.im >= -1e-10).collect();
        let pool = if admissible.is_empty() { &roots } else { &admissible };
        let (idx, _) = nearest_root(pool, prev).ok_or(StieltjesError::NonConvergence { z, residual: f64::NAN })?;
        let m = polish(measure, z, pool[idx]);
        prev = m;
        if checkpoint.is_some() {
            let branch_id = roots.iter().position(|r| *r == pool[idx]);
            let residual = pastur_residual(measure, z, m);
            out.push(StieltjesSolution { z, m, residual, branch_id });
        }
    }
    Ok(out)
}

/// Solves at `x + iη` for every `η` in `etas` (strictly decreasing), following
/// one continuation path from the top.
pub fn solve_path(measure: &AtomicMeasure, x: f64, etas: &[f64], strategy: Strategy) -> Result<Vec<StieltjesSolution>, StieltjesError> {
    let Some(&first) = etas.first() else {
        return Ok(Vec::new());
    };
    if let Some(&bad) = etas.iter().find(|e| !(**e > 0.0)) {
        return Err(StieltjesError::OffUpperHalfPlane(Complex64::new(x, bad)));
    }
    let start = start_height(measure, Complex64::new(x, first));
    let sols = match strategy {
        Strategy::Newton => newton_path(measure, x, etas, start)?,
        Strategy::Polynomial => polynomial_path(measure, x, etas, start)?,
        Strategy::Auto => newton_path(measure, x, etas, start).or_else(|_| polynomial_path(measure, x, etas, start))?,
    };
    for s in &sols {
        if !(s.residual <= RESIDUAL_TOL) || s.m.im < -1e-14 {
            return Err(StieltjesError::NonConvergence { z: s.z, residual: s.residual });
        }
    }
    Ok(sols)
}

/// Solves the equation at `z`, choosing the branch that continues from
/// `Im z = ∞`.
pub fn solve_pastur(measure: &AtomicMeasure, z: Complex64) -> Result<StieltjesSolution, StieltjesError> {
    solve_pastur_with(measure, z, Strategy::Auto)
}

pub fn solve_pastur_with(measure: &AtomicMeasure, z: Complex64, strategy: Strategy) -> Result<StieltjesSolution, StieltjesError> {
    if !(z.im > 0.0) {
        return Err(StieltjesError::OffUpperHalfPlane(z));
    }
    let mut sols = solve_path(measure, z.re, &[z.im], strategy)?;
    Ok(sols.pop().expect("one checkpoint"))
}

/// Second-order Richardson extrapolation to `η = 0` from values at
/// `η, 2η, 4η`, assuming a smooth expansion in `η`.
fn richardson(f1: f64, f2: f64, f4: f64) -> f64 {
    (8.0 * f1 - 6.0 * f2 + f4) / 3.0
}

/// Density at one point with the inversion schedule `{4η, 2η, η}`.
pub fn density_at(measure: &AtomicMeasure, x: f64, eta_floor: f64) -> Result<f64, StieltjesError> {
    let sols = solve_path(measure, x, &[4.0 * eta_floor, 2.0 * eta_floor, eta_floor], Strategy::Auto)?;
    let rho = richardson(sols[2].m.im, sols[1].m.im, sols[0].m.im) / std::f64::consts::PI;
    Ok(rho.max(0.0))
}

/// A sampled limiting density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub eta_schedule: [f64; 3],
}

impl DensityProfile {
    pub fn eta_floor(&self) -> f64 {
        self.eta_schedule[2]
    }

    /// Trapezoid integral over the whole grid.
    pub fn total_mass(&self) -> f64 {
        trapezoid(&self.grid, &self.values)
    }

    /// Linear interpolation; zero outside the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x < g[0] || x > g[g.len() - 1] {
            return 0.0;
        }
        let k = g.partition_point(|&v| v <= x).clamp(1, g.len() - 1);
        let t = (x - g[k - 1]) / (g[k] - g[k - 1]);
        self.values[k - 1] * (1.0 - t) + self.values[k] * t
    }

    /// Trapezoid integral of the interpolant over `[lo, hi]`.
    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let mut xs = vec![lo];
        xs.extend(self.grid.iter().copied().filter(|&x| x > lo && x < hi));
        xs.push(hi);
        let ys: Vec<f64> = xs.iter().map(|&x| self.interpolate(x)).collect();
        trapezoid(&xs, &ys)
    }

    /// CSV with header `x,rho`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,rho\n");
        for (x, r) in self.grid.iter().zip(&self.values) {
            s.push_str(&format!("{x},{r}\n"));
        }
        s
    }
}

pub(crate) fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(feature = "parallel")]
fn map_points<T: Send, F: Fn(usize, f64) -> T + Sync + Send>(xs: &[f64], f: F) -> Vec<T> {
    use rayon::prelude::*;
    xs.par_iter().enumerate().map(|(i, &x)| f(i, x)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_points<T, F: Fn(usize, f64) -> T>(xs: &[f64], f: F) -> Vec<T> {
    xs.iter().enumerate().map(|(i, &x)| f(i, x)).collect()
}

/// Samples `ρ` on `grid` by Stieltjes inversion.
pub fn density(measure: &AtomicMeasure, grid: &[f64], eta_floor: f64) -> Result<DensityProfile, StieltjesError> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(StieltjesError::InvalidGrid);
    }
    if !(eta_floor > 0.0 && eta_floor <= 1e-3) {
        return Err(StieltjesError::InvalidEta(eta_floor));
    }
    let values = map_points(grid, |index, x| {
        density_at(measure, x, eta_floor).map_err(|e| StieltjesError::GridPoint { index, x, source: Box::new(e) })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    Ok(DensityProfile {
        grid: grid.to_vec(),
        values,
        eta_schedule: [4.0 * eta_floor, 2.0 * eta_floor, eta_floor],
    })
}

/// Support intervals `[αⱼ, βⱼ]` and quantiles `sⱼ = ∫_{−∞}^{βⱼ} ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportProfile {
    pub intervals: Vec<(f64, f64)>,
    /// `s₀ = 0, s₁, …, s_q`.
    pub quantiles: Vec<f64>,
    /// False when the density vanishes at an interior point.
    pub condition_a: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SupportProfile {
    pub fn q(&self) -> usize {
        self.intervals.len()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.intervals.iter().map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a <= x && x <= b)
    }

    /// Distance from `x` to the nearest edge.
    pub fn edge_distance(&self, x: f64) -> f64 {
        self.intervals
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .map(|e| (x - e).abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "intervals": self.intervals,
            "quantiles": self.quantiles,
        }))
        .expect("plain numbers serialize")
    }
}

fn bisect_edge(measure: &AtomicMeasure, mut outside: f64, mut inside: f64, eta: f64, threshold: f64) -> Result<f64, StieltjesError> {
    while (inside - outside).abs() > EDGE_TOL {
        let mid = 0.5 * (inside + outside);
        if density_at(measure, mid, eta)? > threshold {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    Ok(0.5 * (inside + outside))
}

/// Looks for a point inside the grid run `i0..=i1` where the density tends to
/// zero. Deep local minima of the profile are refined by golden-section search
/// and declared zeros when `Im m(x + iη)` keeps shrinking as `η` drops from
/// 1e-8 to 1e-11; a positive density would leave it unchanged.
fn interior_zero(measure: &AtomicMeasure, profile: &DensityProfile, i0: usize, i1: usize) -> Result<Option<f64>, StieltjesError> {
    let g = &profile.grid;
    let v = &profile.values;
    let peak = v[i0..=i1].iter().copied().fold(0.0, f64::max);
    let im_at = |x: f64, eta: f64| -> Result<f64, StieltjesError> { Ok(solve_pastur(measure, Complex64::new(x, eta))?.m.im) };
    for k in (i0 + 1)..i1 {
        if !(v[k] <= v[k - 1] && v[k] <= v[k + 1] && v[k] < 0.25 * peak) {
            continue;
        }
        let (mut a, mut b) = (g[k - 1], g[k + 1]);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let (mut fc, mut fd) = (im_at(c, 1e-12)?, im_at(d, 1e-12)?);
        while b - a > 1e-13 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = im_at(c, 1e-12)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = im_at(d, 1e-12)?;
            }
        }
        let x = 0.5 * (a + b);
        if im_at(x, 1e-11)? < 0.5 * im_at(x, 1e-8)? {
            return Ok(Some(x));
        }
    }
    Ok(None)
}

/// Extracts the support of `profile` and its quantiles. Edges are bracketed by
/// the grid and then bisected on the inverted density at a height 10³ times
/// below the profile's floor.
pub fn support_intervals(measure: &AtomicMeasure, profile: &DensityProfile, threshold: f64) -> Result<SupportProfile, StieltjesError> {
    let g = &profile.grid;
    let v = &profile.values;
    let mut runs = Vec::new();
    let mut start = None;
    for i in 0..g.len() {
        match (v[i] > threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, g.len() - 1));
    }
    if runs.is_empty() {
        return Err(StieltjesError::EmptySupport);
    }
    let refine_eta = profile.eta_floor() * 1e-3;
    let mut intervals = Vec::with_capacity(runs.len());
    for &(i0, i1) in &runs {
        if i0 == 0 {
            return Err(StieltjesError::SupportNotBracketed(g[0]));
        }
        if i1 == g.len() - 1 {
            return Err(StieltjesError::SupportNotBracketed(g[i1]));
        }
        let left = bisect_edge(measure, g[i0 - 1], g[i0], refine_eta, threshold)?;
        let right = bisect_edge(measure, g[i1 + 1], g[i1], refine_eta, threshold)?;
        intervals.push((left, right));
    }

    let mut warnings = Vec::new();
    let mut condition_a = true;
    for w in intervals.windows(2) {
        if w[1].0 - w[0].1 < 1e-6 {
            condition_a = false;
            warnings.push(format!("condition (A) violated: density vanishes inside the support near {}", w[0].1));
        }
    }
    for &(i0, i1) in &runs {
        if let Some(x) = interior_zero(measure, profile, i0, i1)? {
            condition_a = false;
            warnings.push(format!("condition (A) violated: density vanishes inside the support near {x}"));
        }
    }

    let eta = profile.eta_floor();
    let mut quantiles = vec![0.0];
    let mut cumulative = 0.0;
    for &(a, b) in &intervals {
        let mut xs = vec![a];
        xs.extend(g.iter().copied().filter(|&x| x > a && x < b));
        xs.push(b);
        let mut nodes = Vec::with_capacity(xs.len() * 2);
        for w in xs.windows(2) {
            nodes.push(w[0]);
            let mid = 0.5 * (w[0] + w[1]);
            if mid - a < EDGE_BAND || b - mid < EDGE_BAND {
                nodes.push(mid);
            }
        }
        nodes.push(b);
        let ys = nodes
            .iter()
            .map(|&x| {
                if x == a || x == b {
                    Ok(0.0)
                } else if let Ok(k) = g.binary_search_by(|p| p.total_cmp(&x)) {
                    Ok(v[k])
                } else {
                    density_at(measure, x, eta)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        cumulative += trapezoid(&nodes, &ys);
        quantiles.push(cumulative);
    }
    if (cumulative - 1.0).abs() > 2e-3 {
        warnings.push(format!("total mass {cumulative} differs from 1 by more than 2e-3"));
    }
    Ok(SupportProfile { intervals, quantiles, condition_a, warnings })
}

/// Index ranges of the `(ε, n)`-bulk, one per support interval, 1-based and
/// inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulkIndexSet {
    pub n: usize,
    pub epsilon: f64,
    pub ranges: Vec<Option<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl BulkIndexSet {
    pub fn is_empty(&self) -> bool {
        self.ranges.iter().all(Option::is_none)
    }

    /// All bulk indices in increasing order.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.ranges.iter().flatten().flat_map(|&(lo, hi)| lo..=hi)
    }

    pub fn len(&self) -> usize {
        self.ranges.iter().flatten().map(|&(lo, hi)| hi - lo + 1).sum()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.ranges.iter().flatten().any(|&(lo, hi)| lo <= i && i <= hi)
    }
}

/// Indices `i` with `(s_{j−1} + ε)n ≤ i ≤ (sⱼ − ε)n`, rounded inward.
pub fn bulk_indices(support: &SupportProfile, epsilon: f64, n: usize) -> Result<BulkIndexSet, StieltjesError> {
    if !(epsilon > 0.0 && epsilon < 0.5) || n == 0 {
        return Err(StieltjesError::InvalidBulk(epsilon));
    }
    let nf = n as f64;
    let ranges: Vec<Option<(usize, usize)>> = support
        .quantiles
        .windows(2)
        .map(|s| {
            if epsilon >= 0.5 * (s[1] - s[0]) {
                return None;
            }
            let lo = (((s[0] + epsilon) * nf) - 1e-9).ceil().max(1.0) as usize;
            let hi = (((s[1] - epsilon) * nf) + 1e-9).floor().min(nf) as usize;
            (lo <= hi).then_some((lo, hi))
        })
        .collect();
    let warning = ranges
        .iter()
        .all(Option::is_none)
        .then(|| format!("(ε = {epsilon}, n = {n})-bulk is empty"));
    Ok(BulkIndexSet { n, epsilon, ranges, warning })
}

/// Result of a Hölder-continuity probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderFit {
    /// Least-squares slope of `log max|m(z) − m(z′)|` against `log |z − z′|`.
    pub exponent: f64,
    /// Smallest `C` with `|m(z) − m(z′)| ≤ C |z − z′|^{1/3}` over the sample.
    pub constant: f64,
}

/// Probes `|m(z) − m(z′)|` over pairs `z′ = z + δe^{iθ}` for every base point,
/// scale `δ` and four directions, keeping pairs with `Im ≥ min_im` and
/// `|z′| ≤ radius`.
pub fn holder_fit(measure: &AtomicMeasure, base: &[Complex64], scales: &[f64], min_im: f64, radius: f64) -> Result<HolderFit, StieltjesError> {
    let dirs = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(-1.0, 0.0), Complex64::new(0.0, -1.0)];
    let mut logs = Vec::new();
    let mut constant: f64 = 0.0;
    for &delta in scales {
        let mut worst: f64 = 0.0;
        for &z in base {
            let mz = solve_pastur(measure, z)?.m;
            for d in dirs {
                let w = z + d * delta;
                if w.im < min_im || w.norm() > radius {
                    continue;
                }
                let diff = (solve_pastur(measure, w)?.m - mz).norm();
                worst = worst.max(diff);
                constant = constant.max(diff / delta.powf(1.0 / 3.0));
            }
        }
        if worst > 0.0 {
            logs.push((delta.ln(), worst.ln()));
        }
    }
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(HolderFit { exponent: sxy / sxx, constant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::Strategy;
    use crate::rng::CounterRng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Quadratic-formula oracle for the semicircle transform.
    fn quadratic_oracle(z: Complex64) -> Complex64 {
        let s = (z * z - 4.0).sqrt();
        let r1 = (-z + s) / 2.0;
        let r2 = (-z - s) / 2.0;
        if r1.im > 0.0 {
            r1
        } else {
            r2
        }
    }

    #[test]
    fn semicircle_examples() {
        let m = semicircle_st(c(0.0, 2.0));
        assert!((m - c(0.0, 2f64.sqrt() - 1.0)).norm() < 1e-15);
        assert!((m - quadratic_oracle(c(0.0, 2.0))).norm() < 1e-15);
        assert!((m + 1.0 / (c(0.0, 2.0) + m)).norm() < 1e-14);

        assert!((semicircle_st(c(0.0, 1e-14)) - Complex64::i()).norm() < 1e-12);
        let z = c(1e6, 1.0);
        assert!((semicircle_st(z) + 1.0 / z).norm() < 1e-11 * (1.0 / z).norm() + 1e-17);
        let z = c(0.0, 1e6);
        assert!((semicircle_st(z) + 1.0 / z).norm() < 1e-11);
    }

    #[test]
    fn semicircle_matches_quadratic_oracle() {
        let mut rng = CounterRng::keyed(&[1]);
        for _ in 0..500 {
            let z = c(10.0 * rng.uniform() - 5.0, 10f64.powf(6.0 * rng.uniform() - 5.0));
            let m = semicircle_st(z);
            assert!(m.im > 0.0);
            assert!((m + 1.0 / (z + m)).norm() < 1e-12, "{z}");
        }
    }

    #[test]
    fn dirac_source_reduces_to_semicircle() {
        let d = AtomicMeasure::dirac(0.0);
        for z in [c(0.3, 1.0), c(-1.9, 1e-5), c(2.5, 1e-3), c(0.0, 1e-6), c(100.0, 50.0)] {
            let s = solve_pastur(&d, z).unwrap();
            assert!(s.residual <= RESIDUAL_TOL);
            assert!((s.m - semicircle_st(z)).norm() < 1e-10, "{z}: {} vs {}", s.m, semicircle_st(z));
        }
    }

    #[test]
    fn triple_root_measure_near_zero() {
        let m = AtomicMeasure::symmetric_pair(2f64.sqrt()).unwrap();
        let s = solve_pastur(&m, c(0.0, 1e-6)).unwrap();
        assert!(s.m.im >= 0.0);
        assert!(s.residual <= 1e-10);
        // Gap at the origin: m(iη) ≈ iη.
        assert!(s.m.norm() < 1e-5, "{}", s.m);
        // The three real roots 0, ±1 at z = 0.
        let roots = pastur_roots(&m, c(0.0, 0.0)).unwrap();
        let mut re: Vec<f64> = roots.iter().map(|r| r.re).collect();
        re.sort_by(f64::total_cmp);
        for (g, w) in re.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn large_z_asymptotics() {
        let m = AtomicMeasure::symmetric_pair(2.0).unwrap();
        for z in [c(0.0, 1e6), c(1e5, 1.0), c(-2e5, 3e5)] {
            let s = solve_pastur(&m, z).unwrap();
            assert!((s.m + 1.0 / z).norm() < 1e-10);
            assert!(s.m.im > 0.0);
        }
    }

    #[test]
    fn strategies_agree() {
        let measures = [
            AtomicMeasure::dirac(0.0),
            AtomicMeasure::symmetric_pair(2.0).unwrap(),
            AtomicMeasure::new(&[(-1.0, 0.2), (0.0, 0.3), (2.0, 0.5)]).unwrap(),
        ];
        let mut rng = CounterRng::keyed(&[2]);
        for m in &measures {
            for _ in 0..100 {
                let z = c(8.0 * rng.uniform() - 4.0, 10f64.powf(5.0 * rng.uniform() - 4.0));
                let a = solve_pastur_with(m, z, Strategy::Polynomial).unwrap();
                assert!(a.residual <= RESIDUAL_TOL);
                assert!(a.branch_id.is_some());
                if let Ok(b) = solve_pastur_with(m, z, Strategy::Newton) {
                    assert!((a.m - b.m).norm() < 1e-9, "{z}: {} vs {}", a.m, b.m);
                }
            }
        }
    }

    #[test]
    fn uniqueness_probe_from_random_starts() {
        let m = AtomicMeasure::new(&[(-1.0, 0.2), (0.0, 0.3), (2.0, 0.5)]).unwrap();
        let mut rng = CounterRng::keyed(&[3]);
        for _ in 0..10 {
            let z = c(6.0 * rng.uniform() - 3.0, 1.0 + 4.0 * rng.uniform());
            let reference = solve_pastur(&m, z).unwrap().m;
            for _ in 0..16 {
                let start = c(4.0 * rng.uniform() - 2.0, 2.0 * rng.uniform() + 1e-3);
                let sol = newton_from(&m, z, start).unwrap();
                assert!((sol.m - reference).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn continuation_is_lipschitz_away_from_edges() {
        // x = 2 is interior to the right interval of the ±2 source.
        let m = AtomicMeasure::symmetric_pair(2.0).unwrap();
        let etas: Vec<f64> = (0..30).map(|k| 10.0 * 0.5f64.powi(k)).collect();
        let sols = solve_path(&m, 2.0, &etas, Strategy::Newton).unwrap();
        for w in sols.windows(2) {
            let step = w[0].z.im - w[1].z.im;
            assert!((w[1].m - w[0].m).norm() <= 10.0 * step, "{} -> {}", w[0].z, w[1].z);
        }
    }

    #[test]
    fn rejects_real_axis() {
        let m = AtomicMeasure::dirac(0.0);
        assert!(matches!(solve_pastur(&m, c(1.0, 0.0)), Err(StieltjesError::OffUpperHalfPlane(_))));
    }

    #[test]
    fn semicircle_density_values() {
        let d = AtomicMeasure::dirac(0.0);
        let p = density(&d, &[-3.0, -1.0, 0.0, 1.5, 3.0], 1e-6).unwrap();
        assert!((p.values[2] - 1.0 / std::f64::consts::PI).abs() < 1e-6);
        assert!(p.values[0].abs() < 1e-8 && p.values[4].abs() < 1e-8);
        let sc = |x: f64| (4.0 - x * x).sqrt() / (2.0 * std::f64::consts::PI);
        assert!((p.values[1] - sc(-1.0)).abs() < 1e-6);
        assert!((p.values[3] - sc(1.5)).abs() < 1e-6);
    }

    #[test]
    fn density_input_validation() {
        let d = AtomicMeasure::dirac(0.0);
        assert_eq!(density(&d, &[0.0, 0.0], 1e-6), Err(StieltjesError::InvalidGrid));
        assert_eq!(density(&d, &[0.0, 1.0], 1e-2), Err(StieltjesError::InvalidEta(1e-2)));
    }

    #[test]
    fn semicircle_support_and_mass() {
        let d = AtomicMeasure::dirac(0.0);
        let p = density(&d, &linspace(-3.0, 3.0, 601), 1e-6).unwrap();
        assert!((p.total_mass() - 1.0).abs() < 2e-3);
        let s = support_intervals(&d, &p, SUPPORT_THRESHOLD).unwrap();
        assert_eq!(s.q(), 1);
        assert!((s.intervals[0].0 + 2.0).abs() < 1e-4 && (s.intervals[0].1 - 2.0).abs() < 1e-4, "{:?}", s.intervals);
        assert!((s.quantiles[1] - 1.0).abs() < 2e-3);
        assert!(s.condition_a);
    }

    #[test]
    fn two_and_one_interval_regimes() {
        let two = AtomicMeasure::symmetric_pair(2.0).unwrap();
        let p = density(&two, &linspace(-5.0, 5.0, 801), 1e-6).unwrap();
        let s = support_intervals(&two, &p, SUPPORT_THRESHOLD).unwrap();
        assert_eq!(s.q(), 2);
        assert!((s.intervals[0].0 + s.intervals[1].1).abs() < 1e-6);
        assert!((s.intervals[0].1 + s.intervals[1].0).abs() < 1e-6);
        assert!((s.quantiles[1] - 0.5).abs() < 1e-3);
        assert_eq!(s.quantiles[0], 0.0);
        assert!(s.quantiles.windows(2).all(|w| w[1] > w[0]));

        let one = AtomicMeasure::symmetric_pair(0.5).unwrap();
        let p = density(&one, &linspace(-4.0, 4.0, 401), 1e-6).unwrap();
        let s = support_intervals(&one, &p, SUPPORT_THRESHOLD).unwrap();
        assert_eq!(s.q(), 1);
        assert!(s.condition_a);
    }

    #[test]
    fn support_errors() {
        let d = AtomicMeasure::dirac(0.0);
        let p = density(&d, &linspace(-1.0, 1.0, 11), 1e-6).unwrap();
        assert!(matches!(support_intervals(&d, &p, SUPPORT_THRESHOLD), Err(StieltjesError::SupportNotBracketed(_))));
        let p = density(&d, &linspace(3.0, 4.0, 11), 1e-6).unwrap();
        assert_eq!(support_intervals(&d, &p, SUPPORT_THRESHOLD), Err(StieltjesError::EmptySupport));
    }

    #[test]
    fn critical_case_flags_condition_a() {
        let crit = AtomicMeasure::symmetric_pair(1.0).unwrap();
        let p = density(&crit, &linspace(-3.0, 3.0, 300), 1e-6).unwrap();
        let s = support_intervals(&crit, &p, SUPPORT_THRESHOLD).unwrap();
        assert!(!s.condition_a, "{s:?}");
        assert!(!s.warnings.is_empty());
    }

    fn support(quantiles: Vec<f64>) -> SupportProfile {
        let q = quantiles.len() - 1;
        SupportProfile { intervals: vec![(0.0, 1.0); q], quantiles, condition_a: true, warnings: vec![] }
    }

    #[test]
    fn bulk_index_examples() {
        let b = bulk_indices(&support(vec![0.0, 1.0]), 0.1, 100).unwrap();
        assert_eq!(b.ranges, vec![Some((10, 90))]);
        assert_eq!(b.len(), 81);
        let b = bulk_indices(&support(vec![0.0, 0.5, 1.0]), 0.05, 1000).unwrap();
        assert_eq!(b.ranges, vec![Some((50, 450)), Some((550, 950))]);
        assert!(b.contains(450) && !b.contains(451));
        let b = bulk_indices(&support(vec![0.0, 1.0]), 0.49, 100).unwrap();
        assert_eq!(b.ranges, vec![Some((49, 51))]);
        assert!(bulk_indices(&support(vec![0.0, 1.0]), 0.6, 100).is_err());
        let b = bulk_indices(&support(vec![0.0, 0.1, 1.0]), 0.06, 100).unwrap();
        assert_eq!(b.ranges[0], None);
        let b = bulk_indices(&support(vec![0.0, 0.1, 0.2]), 0.1, 100).unwrap();
        assert!(b.is_empty() && b.warning.is_some());
    }

    #[test]
    fn profile_integral_and_csv() {
        let p = DensityProfile { grid: vec![0.0, 1.0, 2.0], values: vec![0.0, 1.0, 0.0], eta_schedule: [4e-6, 2e-6, 1e-6] };
        assert!((p.total_mass() - 1.0).abs() < 1e-15);
        assert!((p.integral(0.5, 1.5) - 0.75).abs() < 1e-15);
        assert_eq!(p.interpolate(0.25), 0.25);
        assert_eq!(p.interpolate(-1.0), 0.0);
        assert!(p.to_csv().starts_with("x,rho\n0,0\n1,1\n"));
    }

    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn solutions_are_herglotz_with_small_residual(re in -5.0f64..5.0, log_im in -6.0f64..3.0, a in 0.2f64..3.0, p in 0.1f64..0.9) {
            let m = AtomicMeasure::new(&[(-a, p), (a, 1.0 - p)]).unwrap();
            let z = Complex64::new(re, 10f64.powf(log_im));
            let s = solve_pastur(&m, z).unwrap();
            prop_assert!(s.residual <= RESIDUAL_TOL);
            prop_assert!(s.m.im >= 0.0);
        }
    }
}
