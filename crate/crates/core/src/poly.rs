//! Dense complex polynomials and companion-matrix root finding.

use faer::Mat;
use num_complex::Complex64;

/// Coefficients in increasing degree: `c[0] + c[1] x + ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<Complex64>);

impl Poly {
    pub fn constant(c: Complex64) -> Self {
        Poly(vec![c])
    }

    /// `c0 + c1 x`.
    pub fn linear(c0: Complex64, c1: Complex64) -> Self {
        Poly(vec![c0, c1])
    }

    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|c| *c != Complex64::new(0.0, 0.0)).unwrap_or(0)
    }

    pub fn eval(&self, x: Complex64) -> Complex64 {
        self.0.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
    }

    /// Value and first derivative by Horner's scheme.
    pub fn eval_with_derivative(&self, x: Complex64) -> (Complex64, Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        self.0.iter().rev().fold((zero, zero), |(p, dp), &c| (p * x + c, dp * x + p))
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![Complex64::new(0.0, 0.0); self.0.len() + other.0.len() - 1];
        for (i, &a) in self.0.iter().enumerate() {
            for (j, &b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let len = self.0.len().max(other.0.len());
        let zero = Complex64::new(0.0, 0.0);
        Poly(
            (0..len)
                .map(|i| *self.0.get(i).unwrap_or(&zero) + *other.0.get(i).unwrap_or(&zero))
                .collect(),
        )
    }

    pub fn scale(&self, s: Complex64) -> Poly {
        Poly(self.0.iter().map(|c| c * s).collect())
    }

    /// All roots, from the eigenvalues of the companion matrix, each refined
    /// by a few Newton steps on the polynomial itself.
    pub fn roots(&self) -> Option<Vec<Complex64>> {
        let d = self.degree();
        if d == 0 {
            return Some(Vec::new());
        }
        let lead = self.0[d];
        if d == 1 {
            return Some(vec![-self.0[0] / lead]);
        }
        let mut companion = Mat::<Complex64>::zeros(d, d);
        for i in 1..d {
            companion[(i, i - 1)] = Complex64::new(1.0, 0.0);
        }
        for i in 0..d {
            companion[(i, d - 1)] = -self.0[i] / lead;
        }
        let mut roots = companion.eigenvalues().ok()?;
        if roots.iter().any(|r| !r.re.is_finite() || !r.im.is_finite()) {
            return None;
        }
        for r in roots.iter_mut() {
            *r = self.polish(*r);
        }
        Some(roots)
    }

    /// Newton refinement that only accepts steps which reduce `|p|`.
    pub fn polish(&self, mut x: Complex64) -> Complex64 {
        let mut px = self.eval(x).norm();
        for _ in 0..8 {
            let (p, dp) = self.eval_with_derivative(x);
            if dp.norm() == 0.0 || px == 0.0 {
                break;
            }
            let candidate = x - p / dp;
            let pc = self.eval(candidate).norm();
            if pc < px {
                x = candidate;
                px = pc;
            } else {
                break;
            }
        }
        x
    }
}

/// Index of the root closest to `target`, and whether the choice is
/// unambiguous (the runner-up is clearly farther or numerically the same root).
pub fn nearest_root(roots: &[Complex64], target: Complex64) -> Option<(usize, bool)> {
    let mut order: Vec<usize> = (0..roots.len()).collect();
    order.sort_by(|&a, &b| (roots[a] - target).norm().total_cmp(&(roots[b] - target).norm()));
    let best = *order.first()?;
    let clear = match order.get(1) {
        None => true,
        Some(&second) => {
            let d1 = (roots[best] - target).norm();
            let d2 = (roots[second] - target).norm();
            d2 > 1.001 * d1 || (roots[best] - roots[second]).norm() < 1e-9
        }
    };
    Some((best, clear))
}
