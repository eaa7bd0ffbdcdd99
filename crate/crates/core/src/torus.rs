//! Complex tori `ℂ^g / (ℤ^g + Ω ℤ^g)` in lattice coordinates.
//!
//! A point of the torus is stored by its coefficients `a ∈ [0,1)^{2g}` in the
//! lattice basis `e_1..e_{2g}`: the first `g` basis vectors are the columns of
//! the identity and the last `g` are the columns of `Ω`. The ambient lift of
//! `a` is `z = a[..g] + Ω a[g..]`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use num_integer::Integer;
use num_rational::Ratio;
use num_traits::Zero;
use thiserror::Error;

use crate::C64;

/// Entrywise symmetry tolerance for `Ω`.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Lower bound on the smallest eigenvalue of `Im Ω`.
pub const POSITIVITY_TOL: f64 = 1e-10;
/// Allowed defect of `MJ - JM` for a general endomorphism.
pub const LINEARITY_TOL: f64 = 1e-9;
/// Eigenvalue window of `Im Ω` inside which the theta engine is well conditioned.
pub const CONDITIONING_WINDOW: (f64, f64) = (0.3, 30.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TorusError {
    #[error("period matrix must be square and non-empty, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("period matrix is not symmetric: |Ω[{i}][{j}] - Ω[{j}][{i}]| = {gap:e}")]
    NonSymmetric { i: usize, j: usize, gap: f64 },
    #[error("Im Ω is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate {index} = {value} lies outside [0, 1)")]
    OutsideDomain { index: usize, value: f64 },
    #[error("integer matrix does not commute with the complex structure (defect {defect:e})")]
    NotComplexLinear { defect: f64 },
    #[error("invalid fraction {0:?}")]
    BadFraction(String),
}

/// A symmetric `g×g` complex matrix with positive definite imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodMatrix {
    g: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl PeriodMatrix {
    /// Builds a period matrix from row-major entries, validating both invariants.
    pub fn new(g: usize, entries: &[C64]) -> Result<Self, TorusError> {
        if g == 0 || entries.len() != g * g {
            return Err(TorusError::NotSquare { rows: g, cols: entries.len().checked_div(g).unwrap_or(0) });
        }
        for i in 0..g {
            for j in (i + 1)..g {
                let gap = (entries[i * g + j] - entries[j * g + i]).norm();
                if gap > SYMMETRY_TOL {
                    return Err(TorusError::NonSymmetric { i, j, gap });
                }
            }
        }
        let re = entries.iter().map(|c| c.re).collect();
        let im: Vec<f64> = entries.iter().map(|c| c.im).collect();
        let min_eigenvalue = eigen_range(g, &im).0;
        if min_eigenvalue.is_nan() || min_eigenvalue <= POSITIVITY_TOL {
            return Err(TorusError::NotPositiveDefinite { min_eigenvalue });
        }
        Ok(Self { g, re, im })
    }

    /// Builds a period matrix from a list of rows.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self, TorusError> {
        let g = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != g) {
            return Err(TorusError::NotSquare { rows: g, cols: bad.len() });
        }
        let flat: Vec<C64> = rows.iter().flatten().copied().collect();
        Self::new(g, &flat)
    }

    /// `i·s·I_g`.
    pub fn scaled_identity(g: usize, s: f64) -> Result<Self, TorusError> {
        let mut entries = vec![C64::new(0.0, 0.0); g * g];
        for i in 0..g {
            entries[i * g + i] = C64::new(0.0, s);
        }
        Self::new(g, &entries)
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        C64::new(self.re[i * self.g + j], self.im[i * self.g + j])
    }

    /// Row-major real part.
    pub fn re(&self) -> &[f64] {
        &self.re
    }

    /// Row-major imaginary part.
    pub fn im(&self) -> &[f64] {
        &self.im
    }

    /// Row-major entries.
    pub fn entries(&self) -> Vec<C64> {
        self.re.iter().zip(&self.im).map(|(&r, &i)| C64::new(r, i)).collect()
    }
}

fn eigen_range(g: usize, sym: &[f64]) -> (f64, f64) {
    let m = DMatrix::from_row_slice(g, g, sym);
    // symmetrize so tiny asymmetries from user input do not leak into the solver
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m).eigenvalues;
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// A validated complex torus with its real period basis `Π = [Re; Im](I | Ω)`.
#[derive(Debug, Clone)]
pub struct AbelianTorus {
    period: PeriodMatrix,
    basis: DMatrix<f64>,
    basis_inv: DMatrix<f64>,
    im_inv: Vec<f64>,
    im_eigen: (f64, f64),
    complex_structure: DMatrix<f64>,
}

/// Validates row-major `omega` and precomputes the coordinate transforms.
pub fn make_torus(g: usize, omega: &[C64]) -> Result<AbelianTorus, TorusError> {
    AbelianTorus::from_entries(g, omega)
}

impl AbelianTorus {
    pub fn new(period: PeriodMatrix) -> Self {
        let g = period.g;
        let n = 2 * g;
        let mut basis = DMatrix::<f64>::zeros(n, n);
        for i in 0..g {
            basis[(i, i)] = 1.0;
            for j in 0..g {
                basis[(i, g + j)] = period.re[i * g + j];
                basis[(g + i, g + j)] = period.im[i * g + j];
            }
        }
        let basis_inv = basis.clone().try_inverse().expect("Im Ω is invertible");
        let im = DMatrix::from_row_slice(g, g, &period.im);
        let im_inv_m = im.try_inverse().expect("Im Ω is invertible");
        let im_inv = (0..g * g).map(|k| im_inv_m[(k / g, k % g)]).collect();
        let im_eigen = eigen_range(g, &period.im);
        // multiplication by i on ambient coordinates (Re z; Im z)
        let mut j0 = DMatrix::<f64>::zeros(n, n);
        for i in 0..g {
            j0[(i, g + i)] = -1.0;
            j0[(g + i, i)] = 1.0;
        }
        let complex_structure = &basis_inv * j0 * &basis;
        Self { period, basis, basis_inv, im_inv, im_eigen, complex_structure }
    }

    /// Convenience constructor from row-major entries.
    pub fn from_entries(g: usize, entries: &[C64]) -> Result<Self, TorusError> {
        Ok(Self::new(PeriodMatrix::new(g, entries)?))
    }

    pub fn g(&self) -> usize {
        self.period.g
    }

    /// Real dimension `2g`.
    pub fn real_dim(&self) -> usize {
        2 * self.period.g
    }

    pub fn period(&self) -> &PeriodMatrix {
        &self.period
    }

    /// The real `2g×2g` basis matrix `Π`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn basis_inverse(&self) -> &DMatrix<f64> {
        &self.basis_inv
    }

    /// Row-major `(Im Ω)^{-1}`.
    pub fn im_inverse(&self) -> &[f64] {
        &self.im_inv
    }

    /// Smallest and largest eigenvalue of `Im Ω`.
    pub fn im_eigen_range(&self) -> (f64, f64) {
        self.im_eigen
    }

    /// Whether `Im Ω` lies in the window where no reduction of `Ω` is needed.
    pub fn is_well_conditioned(&self) -> bool {
        let (lo, hi) = self.im_eigen;
        lo >= CONDITIONING_WINDOW.0 && hi <= CONDITIONING_WINDOW.1
    }

    /// The complex structure `J` acting on lattice coordinates.
    pub fn complex_structure(&self) -> &DMatrix<f64> {
        &self.complex_structure
    }

    /// Real ambient coordinates `Π a` of lattice coordinates `a`.
    pub fn ambient(&self, coords: &[f64]) -> Vec<f64> {
        let n = self.real_dim();
        (0..n).map(|i| (0..n).map(|j| self.basis[(i, j)] * coords[j]).sum()).collect()
    }

    /// Complex ambient lift `z = a[..g] + Ω a[g..]`.
    pub fn lift_coords(&self, coords: &[f64]) -> Vec<C64> {
        let g = self.g();
        (0..g)
            .map(|i| {
                let mut z = C64::new(coords[i], 0.0);
                for j in 0..g {
                    z += self.period.entry(i, j) * coords[g + j];
                }
                z
            })
            .collect()
    }

    pub fn lift(&self, p: &TorusPoint) -> Vec<C64> {
        self.lift_coords(&p.coords)
    }

    /// Lattice coordinates of an ambient complex vector (not reduced).
    pub fn coords_of(&self, z: &[C64]) -> Vec<f64> {
        let g = self.g();
        let mut a = vec![0.0; 2 * g];
        for i in 0..g {
            let mut s = 0.0;
            for j in 0..g {
                s += self.im_inv[i * g + j] * z[j].im;
            }
            a[g + i] = s;
        }
        for i in 0..g {
            let mut s = z[i].re;
            for j in 0..g {
                s -= self.period.re[i * g + j] * a[g + j];
            }
            a[i] = s;
        }
        a
    }

    /// Translate of `z` by the lattice vector that brings its coordinates into `[-1/2, 1/2)`.
    pub fn reduce_ambient(&self, z: &[C64]) -> Vec<C64> {
        let a: Vec<f64> = self.coords_of(z).into_iter().map(|x| x - (x + 0.5).floor()).collect();
        self.lift_coords(&a)
    }

    /// The torus point represented by an ambient vector.
    pub fn project(&self, z: &[C64]) -> TorusPoint {
        reduce_mod_lattice(&self.coords_of(z))
    }

    /// Distance between `p` and `q` in the ambient Euclidean metric, minimised
    /// over the `3^{2g}` lattice translates nearest to the centred difference.
    pub fn distance(&self, p: &TorusPoint, q: &TorusPoint) -> f64 {
        self.nearest_offset(&p.coords, &q.coords).0
    }

    /// Returns `(d, k)` where `k` is the integer vector for which the lift of
    /// `target + k` is closest to the lift of `anchor`, and `d` that distance.
    pub fn nearest_offset(&self, anchor: &[f64], target: &[f64]) -> (f64, Vec<i64>) {
        let n = self.real_dim();
        let mut base = vec![0i64; n];
        let mut diff = vec![0.0; n];
        for i in 0..n {
            let d = target[i] - anchor[i];
            let r = d.round();
            base[i] = -(r as i64);
            diff[i] = d - r;
        }
        let mut best = f64::INFINITY;
        let mut best_k = base.clone();
        let mut shift = vec![-1i64; n];
        let mut v = vec![0.0; n];
        loop {
            for i in 0..n {
                v[i] = diff[i] + shift[i] as f64;
            }
            let mut d2 = 0.0;
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..n {
                    s += self.basis[(i, j)] * v[j];
                }
                d2 += s * s;
            }
            if d2 < best {
                best = d2;
                for i in 0..n {
                    best_k[i] = base[i] + shift[i];
                }
            }
            // odometer over {-1, 0, 1}^{2g}
            let mut i = 0;
            loop {
                if i == n {
                    return (best.sqrt(), best_k);
                }
                shift[i] += 1;
                if shift[i] <= 1 {
                    break;
                }
                shift[i] = -1;
                i += 1;
            }
        }
    }

    /// Largest possible distance from a point to the nearest vertex of a
    /// lattice-aligned box with the given side lengths (in lattice units).
    pub fn box_half_diagonal(&self, sides: &[f64]) -> f64 {
        let n = self.real_dim();
        let mut best: f64 = 0.0;
        for mask in 0..(1usize << n) {
            let v: Vec<f64> = (0..n)
                .map(|i| if mask >> i & 1 == 1 { 0.5 * sides[i] } else { -0.5 * sides[i] })
                .collect();
            let amb = self.ambient(&v);
            best = best.max(amb.iter().map(|x| x * x).sum::<f64>().sqrt());
        }
        best
    }

    /// Diameter bound of the fundamental parallelogram.
    pub fn domain_diameter(&self) -> f64 {
        2.0 * self.box_half_diagonal(&vec![1.0; self.real_dim()])
    }
}

/// A point of the fundamental parallelogram, `coords ∈ [0,1)^{2g}`.
#[derive(Debug, Clone, PartialEq, PartialOrd, serde::Serialize)]
#[serde(transparent)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self, TorusError> {
        for (index, &value) in coords.iter().enumerate() {
            if !(0.0..1.0).contains(&value) {
                return Err(TorusError::OutsideDomain { index, value });
            }
        }
        Ok(Self { coords })
    }

    pub fn origin(real_dim: usize) -> Self {
        Self { coords: vec![0.0; real_dim] }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// `[n]` applied to this point.
    pub fn multiply(&self, n: i64) -> TorusPoint {
        let scaled: Vec<f64> = self.coords.iter().map(|&c| mul_frac(n, c)).collect();
        TorusPoint { coords: scaled }
    }
}

/// Fractional part of `n·c`, with the rounding error of the product recovered by FMA.
fn mul_frac(n: i64, c: f64) -> f64 {
    let nf = n as f64;
    let p = nf * c;
    let err = nf.mul_add(c, -p);
    frac(frac(p) + err)
}

/// Fractional part in `[0, 1)`.
pub fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// Componentwise fractional parts; the result differs from `v` by an integer vector.
pub fn reduce_mod_lattice(v: &[f64]) -> TorusPoint {
    TorusPoint { coords: v.iter().map(|&x| frac(x)).collect() }
}

pub fn torus_distance(torus: &AbelianTorus, p: &TorusPoint, q: &TorusPoint) -> f64 {
    torus.distance(p, q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndomorphismKind {
    Scalar(i64),
    General,
}

/// An integer `2g×2g` matrix acting on lattice coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endomorphism {
    dim: usize,
    matrix: Vec<i64>,
    kind: EndomorphismKind,
}

impl Endomorphism {
    /// `[n]`, multiplication by `n`.
    pub fn scalar(real_dim: usize, n: i64) -> Self {
        let mut matrix = vec![0; real_dim * real_dim];
        for i in 0..real_dim {
            matrix[i * real_dim + i] = n;
        }
        Self { dim: real_dim, matrix, kind: EndomorphismKind::Scalar(n) }
    }

    /// A general endomorphism; rejected unless it commutes with the complex structure.
    pub fn general(torus: &AbelianTorus, matrix: Vec<i64>) -> Result<Self, TorusError> {
        let n = torus.real_dim();
        if matrix.len() != n * n {
            return Err(TorusError::DimensionMismatch { expected: n * n, got: matrix.len() });
        }
        let m = DMatrix::from_row_slice(n, n, &matrix.iter().map(|&x| x as f64).collect::<Vec<_>>());
        let j = torus.complex_structure();
        let defect = (&m * j - j * &m).amax();
        if defect > LINEARITY_TOL {
            return Err(TorusError::NotComplexLinear { defect });
        }
        Ok(Self { dim: n, matrix, kind: EndomorphismKind::General })
    }

    pub fn kind(&self) -> EndomorphismKind {
        self.kind
    }

    pub fn matrix(&self) -> &[i64] {
        &self.matrix
    }

    pub fn apply(&self, p: &TorusPoint) -> TorusPoint {
        if let EndomorphismKind::Scalar(n) = self.kind {
            return p.multiply(n);
        }
        let n = self.dim;
        let out: Vec<f64> = (0..n)
            .map(|i| {
                let s: f64 = (0..n).map(|j| mul_frac(self.matrix[i * n + j], p.coords[j])).sum();
                frac(s)
            })
            .collect();
        TorusPoint { coords: out }
    }
}

pub fn apply_endomorphism(phi: &Endomorphism, p: &TorusPoint) -> TorusPoint {
    phi.apply(p)
}

pub type Fraction = Ratio<i64>;

/// A torsion point with exact rational coordinates in `[0,1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TorsionPoint {
    coords: Vec<Fraction>,
}

impl TorsionPoint {
    /// Reduces every coordinate into `[0,1)`.
    pub fn new(coords: Vec<Fraction>) -> Self {
        Self { coords: coords.into_iter().map(reduce_fraction).collect() }
    }

    pub fn origin(real_dim: usize) -> Self {
        Self { coords: vec![Fraction::zero(); real_dim] }
    }

    pub fn coords(&self) -> &[Fraction] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// `n·t`, exactly.
    pub fn multiply(&self, n: i64) -> TorsionPoint {
        Self::new(self.coords.iter().map(|c| c * n).collect())
    }

    pub fn is_origin(&self) -> bool {
        self.coords.iter().all(Zero::is_zero)
    }

    /// Floating point image in the fundamental parallelogram.
    pub fn to_point(&self) -> TorusPoint {
        reduce_mod_lattice(&self.coords.iter().map(|c| *c.numer() as f64 / *c.denom() as f64).collect::<Vec<_>>())
    }
}

fn reduce_fraction(c: Fraction) -> Fraction {
    let fl = c.floor();
    c - fl
}

impl fmt::Display for TorsionPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Parses `"p/q"` or an integer string into a fraction.
pub fn parse_fraction(s: &str) -> Result<Fraction, TorusError> {
    let bad = || TorusError::BadFraction(s.to_string());
    let t = s.trim();
    match t.split_once('/') {
        Some((p, q)) => {
            let p = i64::from_str(p.trim()).map_err(|_| bad())?;
            let q = i64::from_str(q.trim()).map_err(|_| bad())?;
            if q <= 0 {
                return Err(bad());
            }
            Ok(Fraction::new(p, q))
        }
        None => Ok(Fraction::from_integer(i64::from_str(t).map_err(|_| bad())?)),
    }
}

/// Order of `t`: the lcm of its reduced denominators.
pub fn torsion_order(t: &TorsionPoint) -> i64 {
    t.coords.iter().fold(1i64, |acc, c| acc.lcm(c.denom()))
}

/// `true` when every coordinate of `t` is an integer multiple of `1/k`, i.e. `k·t = 0`.
pub fn annihilates(k: i64, t: &TorsionPoint) -> bool {
    t.coords.iter().all(|c| (c * k).is_integer())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn make_torus_examples() {
        let t = AbelianTorus::new(PeriodMatrix::scaled_identity(2, 1.0).unwrap());
        assert_eq!(t.g(), 2);
        PeriodMatrix::new(2, &[c(0.0, 1.0), c(0.5, 0.0), c(0.5, 0.0), c(0.0, 2.0)]).unwrap();
        let err = PeriodMatrix::new(2, &[c(0.0, 1.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)]).unwrap_err();
        assert!(matches!(err, TorusError::NonSymmetric { .. }));
        let err = PeriodMatrix::new(2, &[c(0.0, 1.0), c(0.0, 2.0), c(0.0, 2.0), c(0.0, 1.0)]).unwrap_err();
        assert!(matches!(err, TorusError::NotPositiveDefinite { .. }));
        assert!(matches!(PeriodMatrix::new(2, &[c(0.0, 1.0)]), Err(TorusError::NotSquare { .. })));
    }

    #[test]
    fn basis_roundtrip() {
        let t = AbelianTorus::from_entries(2, &[c(0.1, 1.1), c(0.3, 0.2), c(0.3, 0.2), c(-0.2, 0.9)]).unwrap();
        let a = [0.1, 0.7, 0.35, 0.55];
        let z = t.lift_coords(&a);
        assert!(close(&t.coords_of(&z), &a, 1e-14));
        let amb = t.ambient(&a);
        for i in 0..2 {
            assert!((amb[i] - z[i].re).abs() < 1e-14 && (amb[2 + i] - z[i].im).abs() < 1e-14);
        }
    }

    #[test]
    fn reduce_examples() {
        assert_eq!(reduce_mod_lattice(&[3.0, -2.0]).coords(), &[0.0, 0.0]);
        assert_eq!(reduce_mod_lattice(&[0.25, 0.75]).coords(), &[0.25, 0.75]);
        assert!(close(reduce_mod_lattice(&[1.3, -0.2]).coords(), &[0.3, 0.8], 1e-15));
        assert_eq!(reduce_mod_lattice(&[-1e-18]).coords(), &[0.0]);
    }

    #[test]
    fn endomorphism_examples() {
        let p = TorusPoint::new(vec![0.3, 0.9, 0.1, 0.5]).unwrap();
        assert_eq!(Endomorphism::scalar(4, 1).apply(&p), p);
        let q = TorusPoint::new(vec![1.0 / 3.0, 2.0 / 3.0, 0.0, 0.0]).unwrap();
        let r = Endomorphism::scalar(4, 3).apply(&q);
        let origin_dist = r.coords().iter().map(|&x| x.min(1.0 - x)).fold(0.0, f64::max);
        assert!(origin_dist < 1e-15);
        assert!(close(Endomorphism::scalar(4, 2).apply(&p).coords(), &[0.6, 0.8, 0.2, 0.0], 1e-15));
    }

    #[test]
    fn general_endomorphism_linearity_check() {
        // Ω = iI: multiplication by i is a lattice endomorphism (a1, a2) -> (-a2, a1)
        let t = AbelianTorus::new(PeriodMatrix::scaled_identity(1, 1.0).unwrap());
        let phi = Endomorphism::general(&t, vec![0, -1, 1, 0]).unwrap();
        let p = TorusPoint::new(vec![0.25, 0.5]).unwrap();
        assert!(close(phi.apply(&p).coords(), &[0.5, 0.25], 1e-15));
        // complex conjugation is not ℂ-linear
        let err = Endomorphism::general(&t, vec![1, 0, 0, -1]).unwrap_err();
        assert!(matches!(err, TorusError::NotComplexLinear { .. }));
    }

    #[test]
    fn torsion_order_examples() {
        let f = |p, q| Fraction::new(p, q);
        assert_eq!(torsion_order(&TorsionPoint::origin(4)), 1);
        assert_eq!(torsion_order(&TorsionPoint::new(vec![f(1, 2), f(0, 1), f(1, 3), f(0, 1)])), 6);
        assert_eq!(torsion_order(&TorsionPoint::new(vec![f(3, 7), f(2, 7), f(0, 1), f(5, 7)])), 7);
        let t = TorsionPoint::new(vec![f(-1, 3), f(7, 2)]);
        assert_eq!(t.coords(), &[f(2, 3), f(1, 2)]);
    }

    #[test]
    fn parse_fraction_cases() {
        assert_eq!(parse_fraction("3/5").unwrap(), Fraction::new(3, 5));
        assert_eq!(parse_fraction(" 2 ").unwrap(), Fraction::from_integer(2));
        assert!(parse_fraction("1/0").is_err());
        assert!(parse_fraction("x/2").is_err());
    }

    #[test]
    fn distance_examples() {
        let t = AbelianTorus::new(PeriodMatrix::scaled_identity(1, 1.0).unwrap());
        let p = TorusPoint::new(vec![0.0, 0.0]).unwrap();
        let q = TorusPoint::new(vec![0.0, 0.9]).unwrap();
        assert!((t.distance(&p, &q) - 0.1).abs() < 1e-12);
        assert_eq!(t.distance(&q, &q), 0.0);
    }

    fn test_torus() -> AbelianTorus {
        AbelianTorus::from_entries(2, &[c(0.13, 1.07), c(0.31, 0.27), c(0.31, 0.27), c(-0.22, 1.19)]).unwrap()
    }

    fn brute_distance(t: &AbelianTorus, p: &[f64], q: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for idx in 0..5usize.pow(4) {
            let m: Vec<f64> = (0..4).map(|i| ((idx / 5usize.pow(i as u32)) % 5) as f64 - 2.0).collect();
            let v: Vec<f64> = (0..4).map(|i| q[i] + m[i] - p[i]).collect();
            best = best.min(t.ambient(&v).iter().map(|x| x * x).sum::<f64>().sqrt());
        }
        best
    }

    fn unit4() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0..1.0f64, 4)
    }

    proptest! {
        #[test]
        fn reduce_ignores_integer_shifts(v in proptest::collection::vec(-50.0..50.0f64, 4),
                                         m in proptest::collection::vec(-20i64..20, 4)) {
            let shifted: Vec<f64> = v.iter().zip(&m).map(|(x, k)| x + *k as f64).collect();
            let a = reduce_mod_lattice(&v);
            let b = reduce_mod_lattice(&shifted);
            for (x, y) in a.coords().iter().zip(b.coords()) {
                let d = (x - y).abs();
                prop_assert!(d.min(1.0 - d) < 1e-12);
            }
        }

        #[test]
        fn scalar_composition(p in unit4(), a in -10i64..=10, b in -10i64..=10) {
            let p = TorusPoint::new(p).unwrap();
            let lhs = Endomorphism::scalar(4, a).apply(&Endomorphism::scalar(4, b).apply(&p));
            let rhs = Endomorphism::scalar(4, a * b).apply(&p);
            for (x, y) in lhs.coords().iter().zip(rhs.coords()) {
                let d = (x - y).abs();
                prop_assert!(d.min(1.0 - d) < 1e-12);
            }
        }

        #[test]
        fn distance_matches_brute_force(p in unit4(), q in unit4()) {
            let t = test_torus();
            let d = t.distance(&TorusPoint::new(p.clone()).unwrap(), &TorusPoint::new(q.clone()).unwrap());
            prop_assert!((d - brute_distance(&t, &p, &q)).abs() < 1e-12);
        }

        #[test]
        fn triangle_inequality(p in unit4(), q in unit4(), r in unit4()) {
            let t = test_torus();
            let (p, q, r) = (TorusPoint::new(p).unwrap(), TorusPoint::new(q).unwrap(), TorusPoint::new(r).unwrap());
            prop_assert!(t.distance(&p, &r) <= t.distance(&p, &q) + t.distance(&q, &r) + 1e-12);
            prop_assert!((t.distance(&p, &q) - t.distance(&q, &p)).abs() < 1e-12);
        }

        #[test]
        fn torsion_order_annihilates(nums in proptest::collection::vec(0i64..60, 4),
                                     dens in proptest::collection::vec(1i64..60, 4)) {
            let t = TorsionPoint::new(nums.iter().zip(&dens).map(|(&p, &q)| Fraction::new(p, q)).collect());
            let k = torsion_order(&t);
            prop_assert!(t.multiply(k).is_origin());
            for d in 1..k {
                if k % d == 0 {
                    prop_assert!(!t.multiply(d).is_origin());
                }
            }
            prop_assert!(annihilates(k, &t));
        }
    }
}
