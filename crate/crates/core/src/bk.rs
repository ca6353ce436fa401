//! Closed-form oracles for the symmetric two-atom source and the sine kernel.
//!
//! For `D` with eigenvalues `±a` in equal proportion (`a > 1`) the limiting
//! density is `ρ(x) = Im ξ₁₊(x) / π`, where `ξ₁` inverts
//!
//! ```text
//! z = (ξ³ − (a² − 1)ξ) / (ξ² − a²),   ξ₁(z) ~ z as z → ∞.
//! ```
//!
//! `ξ₁` is tracked down from `z = x + iT` with the cubic's roots taken from a
//! companion matrix. This route never touches the fixed-point solver in
//! [`crate::stieltjes`], which makes it an independent check on it.

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{nearest_root, Poly};

/// Height at which real arguments are evaluated.
pub const REAL_AXIS_OFFSET: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BkError {
    #[error("a = {0}: the two-interval regime needs a > 1")]
    SingleInterval(f64),
    #[error("a = 1 is the critical case")]
    Critical,
    #[error("branch tracking failed at z = {0}")]
    Branch(Complex64),
}

/// Support edges of the two-atom density: `[−α, −β] ∪ [β, α]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BkParameters {
    pub a: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl BkParameters {
    pub fn contains(&self, x: f64) -> bool {
        let ax = x.abs();
        self.beta <= ax && ax <= self.alpha
    }

    /// The two intervals, left first.
    pub fn intervals(&self) -> [(f64, f64); 2] {
        [(-self.alpha, -self.beta), (self.beta, self.alpha)]
    }
}

fn check_a(a: f64) -> Result<(), BkError> {
    if a == 1.0 {
        Err(BkError::Critical)
    } else if !(a > 1.0) {
        Err(BkError::SingleInterval(a))
    } else {
        Ok(())
    }
}

/// `ξ³ − zξ² − (a² − 1)ξ + a²z`.
fn cubic(z: Complex64, a: f64) -> Poly {
    let a2 = a * a;
    Poly(vec![z * a2, Complex64::new(1.0 - a2, 0.0), -z, Complex64::new(1.0, 0.0)])
}

fn map_z(xi: f64, a: f64) -> f64 {
    (xi.powi(3) - (a * a - 1.0) * xi) / (xi * xi - a * a)
}

/// Edges without verification; `a > 1` assumed.
fn edges(a: f64) -> (f64, f64) {
    // z′(ξ) = 0  ⇔  ξ⁴ − (2a² + 1)ξ² + a²(a² − 1) = 0.
    let b = 2.0 * a * a + 1.0;
    let root = (8.0 * a * a + 1.0).sqrt();
    let t_hi = 0.5 * (b + root);
    // t_lo = a²(a²−1)/t_hi avoids cancellation as a → 1.
    let t_lo = a * a * (a * a - 1.0) / t_hi;
    let e1 = map_z(t_hi.sqrt(), a).abs();
    let e2 = map_z(t_lo.sqrt(), a).abs();
    (e1.max(e2), e1.min(e2))
}

/// The branch `ξ₁` at `z`, continued from `Re z + iT` with `T = 10³(1 + a)`.
/// Real `z` is evaluated at `z + i·10⁻⁸`.
pub fn bk_xi1(z: Complex64, a: f64) -> Result<Complex64, BkError> {
    check_a(a)?;
    let target = if z.im > 0.0 { z.im } else { REAL_AXIS_OFFSET };
    let top = 1e3 * (1.0 + a);
    let mut heights = vec![top.max(target)];
    while heights.last().copied().unwrap() * 0.5 > target {
        let next = heights.last().unwrap() * 0.5;
        heights.push(next);
    }
    if *heights.last().unwrap() != target {
        heights.push(target);
    }
    let mut prev = Complex64::new(z.re, heights[0]);
    for &eta in &heights {
        let zz = Complex64::new(z.re, eta);
        let roots = cubic(zz, a).roots().ok_or(BkError::Branch(zz))?;
        let (idx, clear) = nearest_root(&roots, prev).ok_or(BkError::Branch(zz))?;
        if !clear {
            return Err(BkError::Branch(zz));
        }
        prev = roots[idx];
    }
    Ok(prev)
}

/// `ρ(x) = Im ξ₁₊(x) / π`, zero off the support.
pub fn bk_density(x: f64, a: f64) -> Result<f64, BkError> {
    check_a(a)?;
    let (alpha, beta) = edges(a);
    let ax = x.abs();
    if ax <= beta || ax >= alpha {
        return Ok(0.0);
    }
    let xi = bk_xi1(Complex64::new(x, 0.0), a)?;
    Ok((xi.im / std::f64::consts::PI).max(0.0))
}

/// Edges `α > β > 0`, the images of the real critical points of `z(ξ)`.
pub fn bk_support(a: f64) -> Result<BkParameters, BkError> {
    check_a(a)?;
    let (alpha, beta) = edges(a);
    let mid = 0.5 * (alpha + beta);
    if !(bk_density(mid, a)? > 0.0) {
        return Err(BkError::Branch(Complex64::new(mid, REAL_AXIS_OFFSET)));
    }
    Ok(BkParameters { a, alpha, beta })
}

/// `sin π(u − v) / (π(u − v))`, equal to 1 on the diagonal.
pub fn sine_kernel(u: f64, v: f64) -> f64 {
    let t = std::f64::consts::PI * (u - v);
    if t.abs() < 1e-8 {
        1.0 - t * t / 6.0
    } else {
        t.sin() / t
    }
}

/// `det (K(uᵢ, uⱼ))`, the `k`-point correlation of the sine process.
pub fn sine_correlation(points: &[f64]) -> f64 {
    let k = points.len();
    if k == 0 {
        return 1.0;
    }
    let m = Mat::<f64>::from_fn(k, k, |i, j| sine_kernel(points[i], points[j]));
    m.determinant().max(0.0)
}
