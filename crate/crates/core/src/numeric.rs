//! Compensated accumulation and small dense helpers shared by the numeric modules.

use crate::C64;

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another partial sum in, keeping both carries.
    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.carry);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Compensated sum of complex numbers, real and imaginary parts kept separately.
#[derive(Debug, Clone, Copy, Default)]
pub struct ComplexSum {
    re: CompensatedSum,
    im: CompensatedSum,
}

impl ComplexSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: C64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn merge(&mut self, other: &ComplexSum) {
        self.re.merge(&other.re);
        self.im.merge(&other.im);
    }

    pub fn value(&self) -> C64 {
        C64::new(self.re.value(), self.im.value())
    }
}

/// `⌊n·x⌋` computed exactly for `|n| < 2^53` and finite `x`.
pub fn floor_mul(n: i64, x: f64) -> i64 {
    let nf = n as f64;
    let p = nf * x;
    let err = nf.mul_add(x, -p);
    let f = p.floor();
    if p == f && err < 0.0 {
        f as i64 - 1
    } else {
        f as i64
    }
}

/// Singular values of a 2×2 complex matrix `[[a, b], [c, d]]`, largest first.
pub fn singular_values_2x2(a: C64, b: C64, c: C64, d: C64) -> (f64, f64) {
    // eigenvalues of the Hermitian matrix M^H M
    let p = a.norm_sqr() + c.norm_sqr();
    let q = b.norm_sqr() + d.norm_sqr();
    let r = a.conj() * b + c.conj() * d;
    let tr = p + q;
    let det = (a * d - b * c).norm_sqr();
    let disc = ((p - q) * (p - q) + 4.0 * r.norm_sqr()).sqrt();
    let big = 0.5 * (tr + disc);
    // det = s1^2 s2^2 avoids cancellation in (tr - disc)
    let small = if big > 0.0 { det / big } else { 0.0 };
    (big.sqrt(), small.max(0.0).sqrt())
}

/// Solves `[[a, b], [c, d]] x = rhs`; `None` when the matrix is numerically singular.
pub fn solve_2x2(a: C64, b: C64, c: C64, d: C64, rhs: [C64; 2]) -> Option<[C64; 2]> {
    let det = a * d - b * c;
    let scale = a.norm().max(b.norm()).max(c.norm()).max(d.norm());
    if scale == 0.0 || det.norm() <= 1e-14 * scale * scale {
        return None;
    }
    Some([(d * rhs[0] - b * rhs[1]) / det, (a * rhs[1] - c * rhs[0]) / det])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_mul_is_exact_at_boundaries() {
        // 3 · fl(1/3) rounds to 1.0 but the exact product is just below 1
        let third = 1.0 / 3.0;
        assert!(3.0 * third == 1.0 && (3.0f64).mul_add(third, -1.0) < 0.0);
        assert_eq!(floor_mul(3, third), 0);
        assert_eq!(floor_mul(-3, third), -1);
        assert_eq!(floor_mul(2, 0.5), 1);
        assert_eq!(floor_mul(-2, 0.5), -1);
        assert_eq!(floor_mul(7, 0.0), 0);
    }

    #[test]
    fn compensated_beats_naive() {
        let mut s = CompensatedSum::new();
        let mut naive = 0.0;
        for x in [1e16, 1.0, -1e16, 1.0] {
            s.add(x);
            naive += x;
        }
        assert_eq!(s.value(), 2.0);
        assert_ne!(naive, 2.0);
    }

    #[test]
    fn singular_values_diag_and_rank_one() {
        let z = C64::new(0.0, 0.0);
        let (s1, s2) = singular_values_2x2(C64::new(3.0, 0.0), z, z, C64::new(0.0, -2.0));
        assert!((s1 - 3.0).abs() < 1e-14 && (s2 - 2.0).abs() < 1e-14);
        let u = C64::new(1.0, 2.0);
        let v = C64::new(-0.5, 0.25);
        let (_, s2) = singular_values_2x2(u, v, u * 2.0, v * 2.0);
        assert!(s2 < 1e-14);
    }

    #[test]
    fn solve_2x2_roundtrip() {
        let (a, b, c, d) = (C64::new(1.0, 1.0), C64::new(2.0, 0.0), C64::new(0.0, -1.0), C64::new(3.0, 0.5));
        let x = [C64::new(0.3, -0.7), C64::new(1.1, 0.2)];
        let rhs = [a * x[0] + b * x[1], c * x[0] + d * x[1]];
        let y = solve_2x2(a, b, c, d, rhs).unwrap();
        assert!((y[0] - x[0]).norm() < 1e-14 && (y[1] - x[1]).norm() < 1e-14);
    }
}
