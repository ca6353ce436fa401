//! Error-free transformations and a compensated accumulator, enough to carry
//! eigenvalues and dot products to roughly twice double precision.

/// `a + b = s + e` exactly.
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn split(a: f64) -> (f64, f64) {
    let t = 134_217_729.0 * a;
    let hi = t - (t - a);
    (hi, a - hi)
}

/// `a · b = p + e` exactly (barring overflow). Dekker's splitting rather
/// than `mul_add`, which is a slow library call on targets without FMA.
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let ((ah, al), (bh, bl)) = (split(a), split(b));
    (p, ((ah * bh - p) + ah * bl + al * bh) + al * bl)
}

/// A value `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub fn new(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let (hi, lo) = two_sum(hi, lo);
        Self { hi, lo }
    }

    /// `self − other`, rounded to a double after the exact leading difference.
    pub fn diff(self, other: Dd) -> f64 {
        let (s, e) = two_sum(self.hi, -other.hi);
        s + (e + (self.lo - other.lo))
    }

    pub fn quotient(self, den: Dd) -> Dd {
        let q1 = self.hi / den.hi;
        let (p, pe) = two_prod(q1, den.hi);
        let r = ((self.hi - p) - pe) + self.lo - q1 * den.lo;
        Self::renorm(q1, r / den.hi)
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// Sum of doubles and exact products, compensated (Ogita–Rump–Oishi `Dot2`).
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    s: f64,
    c: f64,
}

impl Accumulator {
    pub fn add(&mut self, x: f64) {
        let (s, e) = two_sum(self.s, x);
        self.s = s;
        self.c += e;
    }

    pub fn add_prod(&mut self, a: f64, b: f64) {
        let (p, e) = two_prod(a, b);
        self.add(p);
        self.c += e;
    }

    pub fn add_dd_prod(&mut self, a: f64, b: Dd) {
        self.add_prod(a, b.hi);
        self.add_prod(a, b.lo);
    }

    pub fn value(self) -> Dd {
        Dd::renorm(self.s, self.c)
    }
}
