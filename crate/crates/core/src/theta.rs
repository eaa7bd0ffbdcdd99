//! Riemann theta functions with rational characteristics.
//!
//! ```text
//! θ[α,β](z; Ω) = Σ_{m ∈ ℤ^g} exp(πi (m+α)ᵀΩ(m+α) + 2πi (m+α)ᵀ(z+β))
//! ```
//!
//! Writing `Y = Im Ω` and `c = Y⁻¹ Im z`, every summand has modulus
//! `exp(π cᵀYc) · exp(-π (m+α+c)ᵀY(m+α+c))`. The engine factors out the real
//! scale `exp(π cᵀYc)` and sums the bounded remainder over a Y-ellipsoid
//! centred at `-(α+c)`. The scaled modulus is invariant under lattice
//! translation of `z`, which makes it the natural quantity for membership
//! tests; [`ThetaEngine::eval`] re-applies the scale for absolute-error work.
//!
//! Truncation uses an isotropic Gaussian tail bound based on the smallest
//! eigenvalue `λ` of `Y`. With `A = 2 + sqrt(2/λ)`,
//!
//! ```text
//! Σ_{‖x‖_Y > R} exp(-π‖x‖_Y²)             ≤ A^g exp(-πR²/2)
//! Σ_{‖x‖_Y > R} 2π‖x‖ exp(-π‖x‖_Y²)        ≤ (2π·0.4840/√λ) A^g exp(-πR²/4)
//! ```
//!
//! over any shifted lattice `ℤ^g + s`.

use std::f64::consts::PI;

use num_traits::Zero;
use thiserror::Error;

use crate::numeric::ComplexSum;
use crate::torus::{AbelianTorus, Fraction};
use crate::C64;

/// `max_t t·exp(-πt²/4) = sqrt(2/(πe))`, rounded up.
const TAIL_PEAK: f64 = 0.4840;
/// Scaled-centre norm the cached lattice list is sized for.
const CACHED_CENTRE_NORM: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThetaError {
    #[error("tolerance {0:e} must lie in (0, 1)")]
    TolOutOfRange(f64),
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A rational characteristic `[α, β]` with entries reduced to `[0,1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ThetaCharacteristic {
    alpha: Vec<Fraction>,
    beta: Vec<Fraction>,
}

impl ThetaCharacteristic {
    pub fn new(alpha: Vec<Fraction>, beta: Vec<Fraction>) -> Result<Self, ThetaError> {
        if alpha.len() != beta.len() {
            return Err(ThetaError::DimensionMismatch { expected: alpha.len(), got: beta.len() });
        }
        let red = |v: Vec<Fraction>| v.into_iter().map(|c| c - c.floor()).collect();
        Ok(Self { alpha: red(alpha), beta: red(beta) })
    }

    pub fn zero(g: usize) -> Self {
        Self { alpha: vec![Fraction::zero(); g], beta: vec![Fraction::zero(); g] }
    }

    /// Half-integer characteristic from bit vectors: `α = a/2`, `β = b/2`.
    pub fn half(a: &[u8], b: &[u8]) -> Self {
        let f = |v: &[u8]| v.iter().map(|&x| Fraction::new(x as i64 % 2, 2)).collect();
        Self { alpha: f(a), beta: f(b) }
    }

    pub fn g(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[Fraction] {
        &self.alpha
    }

    pub fn beta(&self) -> &[Fraction] {
        &self.beta
    }

    pub fn is_zero(&self) -> bool {
        self.alpha.iter().chain(&self.beta).all(Zero::is_zero)
    }

    /// Parity `4αᵀβ mod 2` for half-integer characteristics; `None` otherwise.
    pub fn half_integer_parity(&self) -> Option<u8> {
        let two = Fraction::from_integer(2);
        let mut dot = 0i64;
        for (a, b) in self.alpha.iter().zip(&self.beta) {
            let (a2, b2) = (a * two, b * two);
            if !a2.is_integer() || !b2.is_integer() {
                return None;
            }
            dot += a2.to_integer() * b2.to_integer();
        }
        Some((dot.rem_euclid(2)) as u8)
    }

    pub(crate) fn to_f64(&self) -> (Vec<f64>, Vec<f64>) {
        let f = |v: &[Fraction]| v.iter().map(|c| *c.numer() as f64 / *c.denom() as f64).collect();
        (f(&self.alpha), f(&self.beta))
    }
}

/// Theta value with optional gradient and the certified truncation error.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaValue {
    pub value: C64,
    pub gradient: Option<Vec<C64>>,
    pub claimed_abs_error: f64,
}

/// `θ = exp(log_scale) · value`, `∇θ = exp(log_scale) · gradient`.
///
/// `value` and `gradient` are certified to `claimed_abs_error` absolutely.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledTheta {
    pub log_scale: f64,
    pub value: C64,
    pub gradient: Option<Vec<C64>>,
    pub claimed_abs_error: f64,
}

impl ScaledTheta {
    /// `|θ| exp(-π Im(z)ᵀ Y⁻¹ Im(z))`, invariant under lattice translation of `z`.
    pub fn modulus(&self) -> f64 {
        self.value.norm()
    }

    pub fn to_raw(&self) -> ThetaValue {
        let s = self.log_scale.exp();
        ThetaValue {
            value: self.value * s,
            gradient: self.gradient.as_ref().map(|g| g.iter().map(|w| w * s).collect()),
            claimed_abs_error: self.claimed_abs_error * s,
        }
    }
}

fn tail_base(g: usize, lambda_min: f64) -> f64 {
    (2.0 + (2.0 / lambda_min).sqrt()).powi(g as i32)
}

/// Radius `R` (in the `‖·‖_Y` norm) beyond which the theta tail is below `tol`.
pub fn value_radius(g: usize, lambda_min: f64, tol: f64) -> f64 {
    let r2 = (2.0 / PI) * (tail_base(g, lambda_min).ln() - tol.ln());
    r2.max(0.0).sqrt()
}

/// Radius for the gradient tail given the norm of the scaled centre `c`.
pub fn gradient_radius(g: usize, lambda_min: f64, tol: f64, centre_norm: f64) -> f64 {
    let base = tail_base(g, lambda_min);
    // split tol evenly between the |c| part and the |x| part of |k| ≤ |x| + |c|
    let half = 0.5 * tol;
    let r_centre = if centre_norm > 0.0 {
        ((2.0 / PI) * ((2.0 * PI * centre_norm * base).ln() - half.ln())).max(0.0).sqrt()
    } else {
        0.0
    };
    let coeff = 2.0 * PI * TAIL_PEAK / lambda_min.sqrt() * base;
    let r_x = ((4.0 / PI) * (coeff.ln() - half.ln())).max(0.0).sqrt();
    r_centre.max(r_x)
}

fn value_tail(g: usize, lambda_min: f64, r: f64) -> f64 {
    tail_base(g, lambda_min) * (-PI * r * r / 2.0).exp()
}

fn gradient_tail(g: usize, lambda_min: f64, r: f64, centre_norm: f64) -> f64 {
    let base = tail_base(g, lambda_min);
    2.0 * PI * centre_norm * base * (-PI * r * r / 2.0).exp()
        + 2.0 * PI * TAIL_PEAK / lambda_min.sqrt() * base * (-PI * r * r / 4.0).exp()
}

/// Truncation radius for the theta series of `torus` at absolute tolerance `tol`.
///
/// Lattice points `m` with `(m+s)ᵀ Y (m+s) ≤ R²` are summed; the remainder is
/// provably below `tol` for the scaled series.
pub fn truncation_radius(torus: &AbelianTorus, tol: f64) -> Result<f64, ThetaError> {
    check_tol(tol)?;
    Ok(value_radius(torus.g(), torus.im_eigen_range().0, tol))
}

fn check_tol(tol: f64) -> Result<(), ThetaError> {
    if tol.is_finite() && tol > 0.0 && tol < 1.0 {
        Ok(())
    } else {
        Err(ThetaError::TolOutOfRange(tol))
    }
}

/// Integer points `m` with `‖m‖_Y ≤ radius`, sorted by decreasing `‖m‖_Y`.
pub fn ellipsoid_points(g: usize, im: &[f64], im_inv: &[f64], radius: f64) -> Vec<Vec<i32>> {
    let bounds: Vec<i32> = (0..g).map(|i| (radius * im_inv[i * g + i].sqrt()).floor() as i32).collect();
    let mut out: Vec<(f64, Vec<i32>)> = Vec::new();
    let mut m: Vec<i32> = bounds.iter().map(|b| -b).collect();
    let r2 = radius * radius;
    loop {
        let q = quad_form_i(g, im, &m);
        if q <= r2 {
            out.push((q, m.clone()));
        }
        let mut i = 0;
        loop {
            if i == g {
                out.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
                return out.into_iter().map(|(_, m)| m).collect();
            }
            m[i] += 1;
            if m[i] <= bounds[i] {
                break;
            }
            m[i] = -bounds[i];
            i += 1;
        }
    }
}

fn quad_form_i(g: usize, a: &[f64], m: &[i32]) -> f64 {
    let mut q = 0.0;
    for i in 0..g {
        for j in 0..g {
            q += a[i * g + j] * m[i] as f64 * m[j] as f64;
        }
    }
    q
}

/// Precomputed evaluator for one torus and one tolerance.
#[derive(Debug, Clone)]
pub struct ThetaEngine {
    g: usize,
    re: Vec<f64>,
    im: Vec<f64>,
    im_inv: Vec<f64>,
    lambda_min: f64,
    tol: f64,
    value_r: f64,
    shift_slack: f64,
    points: Vec<Vec<i32>>,
    /// `‖m‖_Y` of `points`, decreasing.
    norms: Vec<f64>,
    points_radius: f64,
}

impl ThetaEngine {
    pub fn new(torus: &AbelianTorus, tol: f64) -> Result<Self, ThetaError> {
        check_tol(tol)?;
        let g = torus.g();
        let im = torus.period().im().to_vec();
        let lambda_min = torus.im_eigen_range().0;
        let value_r = value_radius(g, lambda_min, tol);
        let grad_r = gradient_radius(g, lambda_min, tol, CACHED_CENTRE_NORM);
        // the residual shift s' lies in [-1/2, 1/2]^g; ‖s'‖_Y is maximal at a corner
        let mut shift_slack: f64 = 0.0;
        for mask in 0..(1usize << g) {
            let s: Vec<f64> = (0..g).map(|i| if mask >> i & 1 == 1 { 0.5 } else { -0.5 }).collect();
            let mut q = 0.0;
            for i in 0..g {
                for j in 0..g {
                    q += im[i * g + j] * s[i] * s[j];
                }
            }
            shift_slack = shift_slack.max(q.sqrt());
        }
        let points_radius = value_r.max(grad_r) + shift_slack;
        let im_inv = torus.im_inverse().to_vec();
        let points = ellipsoid_points(g, &im, &im_inv, points_radius);
        let norms = points.iter().map(|m| quad_form_i(g, &im, m).sqrt()).collect();
        Ok(Self {
            g,
            re: torus.period().re().to_vec(),
            im,
            im_inv,
            lambda_min,
            tol,
            value_r,
            shift_slack,
            points,
            norms,
            points_radius,
        })
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Number of lattice summands in the cached list.
    pub fn summand_count(&self) -> usize {
        self.points.len()
    }

    /// Truncation radius of the value series.
    pub fn radius(&self) -> f64 {
        self.value_r
    }

    /// Scaled evaluation, see [`ScaledTheta`].
    pub fn eval_scaled(&self, z: &[C64], ch: &ThetaCharacteristic, want_gradient: bool) -> ScaledTheta {
        let (alpha, beta) = ch.to_f64();
        self.eval_scaled_f64(z, &alpha, &beta, want_gradient)
    }

    /// As [`eval_scaled`](Self::eval_scaled) with the characteristic already in floating point.
    pub fn eval_scaled_f64(&self, z: &[C64], alpha: &[f64], beta: &[f64], want_gradient: bool) -> ScaledTheta {
        self.eval_with_tol(z, alpha, beta, want_gradient, self.tol)
    }

    fn eval_with_tol(&self, z: &[C64], alpha: &[f64], beta: &[f64], want_gradient: bool, tol: f64) -> ScaledTheta {
        let g = self.g;
        assert_eq!(z.len(), g, "theta argument has the wrong dimension");
        let mut c = vec![0.0; g];
        for i in 0..g {
            for j in 0..g {
                c[i] += self.im_inv[i * g + j] * z[j].im;
            }
        }
        let mut log_scale = 0.0;
        for i in 0..g {
            log_scale += c[i] * z[i].im;
        }
        log_scale *= PI;
        let centre_norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();

        let mut need = value_radius(g, self.lambda_min, tol);
        if want_gradient {
            need = need.max(gradient_radius(g, self.lambda_min, tol, centre_norm));
        }
        let owned;
        let points: &[Vec<i32>] = if need + self.shift_slack <= self.points_radius {
            let skip = self.norms.partition_point(|&q| q > need + self.shift_slack);
            &self.points[skip..]
        } else {
            owned = ellipsoid_points(g, &self.im, &self.im_inv, need + self.shift_slack);
            &owned
        };

        // x = m + s' with s = α + c = round(s) + s'; k = x - c
        let mut shift_int = vec![0.0; g];
        let mut shift_res = vec![0.0; g];
        for i in 0..g {
            let s = alpha[i] + c[i];
            shift_int[i] = s.round();
            shift_res[i] = s - shift_int[i];
        }
        let xre: Vec<f64> = (0..g).map(|i| z[i].re + beta[i]).collect();

        let mut value = ComplexSum::new();
        let mut grads = vec![ComplexSum::new(); if want_gradient { g } else { 0 }];
        let mut x = vec![0.0; g];
        let mut k = vec![0.0; g];
        for m in points {
            for i in 0..g {
                x[i] = m[i] as f64 + shift_res[i];
                k[i] = x[i] - c[i];
            }
            let mut q = 0.0;
            let mut phase = 0.0;
            for i in 0..g {
                let mut yx = 0.0;
                let mut rk = 0.0;
                for j in 0..g {
                    yx += self.im[i * g + j] * x[j];
                    rk += self.re[i * g + j] * k[j];
                }
                q += x[i] * yx;
                phase += k[i] * (0.5 * rk + xre[i]);
            }
            let modulus = (-PI * q).exp();
            let (s, co) = (2.0 * PI * phase).sin_cos();
            let term = C64::new(modulus * co, modulus * s);
            value.add(term);
            if want_gradient {
                let it = C64::new(-term.im, term.re) * (2.0 * PI);
                for i in 0..g {
                    grads[i].add(it * k[i]);
                }
            }
        }
        let claimed = if want_gradient {
            value_tail(g, self.lambda_min, need).max(gradient_tail(g, self.lambda_min, need, centre_norm))
        } else {
            value_tail(g, self.lambda_min, need)
        };
        ScaledTheta {
            log_scale,
            value: value.value(),
            gradient: want_gradient.then(|| grads.iter().map(ComplexSum::value).collect()),
            claimed_abs_error: claimed.min(tol),
        }
    }

    /// Unscaled evaluation to absolute error `tol` (the engine tolerance).
    pub fn eval(&self, z: &[C64], ch: &ThetaCharacteristic, want_gradient: bool) -> ThetaValue {
        let (alpha, beta) = ch.to_f64();
        let probe = self.eval_with_tol(z, &alpha, &beta, false, self.tol);
        let tol = if probe.log_scale > 0.0 { (self.tol * (-probe.log_scale).exp()).max(1e-300) } else { self.tol };
        let scaled = if tol < self.tol || want_gradient {
            self.eval_with_tol(z, &alpha, &beta, want_gradient, tol)
        } else {
            probe
        };
        let mut raw = scaled.to_raw();
        raw.claimed_abs_error = raw.claimed_abs_error.min(self.tol);
        raw
    }
}

/// `θ[char](z; Ω)` to absolute error `tol`.
pub fn theta(z: &[C64], torus: &AbelianTorus, ch: &ThetaCharacteristic, tol: f64) -> Result<ThetaValue, ThetaError> {
    check_dims(torus, z, ch)?;
    Ok(ThetaEngine::new(torus, tol)?.eval(z, ch, false))
}

/// Gradient `∂θ/∂z_j` of the theta function, each component to absolute error `tol`.
pub fn theta_gradient(z: &[C64], torus: &AbelianTorus, ch: &ThetaCharacteristic, tol: f64) -> Result<Vec<C64>, ThetaError> {
    check_dims(torus, z, ch)?;
    let v = ThetaEngine::new(torus, tol)?.eval(z, ch, true);
    Ok(v.gradient.expect("gradient requested"))
}

fn check_dims(torus: &AbelianTorus, z: &[C64], ch: &ThetaCharacteristic) -> Result<(), ThetaError> {
    let g = torus.g();
    if z.len() != g {
        return Err(ThetaError::DimensionMismatch { expected: g, got: z.len() });
    }
    if ch.g() != g {
        return Err(ThetaError::DimensionMismatch { expected: g, got: ch.g() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::PeriodMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn identity_torus() -> AbelianTorus {
        AbelianTorus::new(PeriodMatrix::scaled_identity(2, 1.0).unwrap())
    }

    fn generic_torus() -> AbelianTorus {
        AbelianTorus::from_entries(2, &[c(0.13, 1.07), c(0.31, 0.27), c(0.31, 0.27), c(-0.22, 1.19)]).unwrap()
    }

    /// Direct sum over the box |m_i| ≤ r, no truncation logic shared with the engine.
    fn brute_theta(torus: &AbelianTorus, z: &[C64], alpha: &[f64], beta: &[f64], r: i32) -> (C64, Vec<C64>) {
        let g = torus.g();
        let om = torus.period();
        let mut v = c(0.0, 0.0);
        let mut grad = vec![c(0.0, 0.0); g];
        let side = (2 * r + 1) as usize;
        for idx in 0..side.pow(g as u32) {
            let k: Vec<f64> =
                (0..g).map(|i| ((idx / side.pow(i as u32)) % side) as f64 - r as f64 + alpha[i]).collect();
            let mut e = c(0.0, 0.0);
            for i in 0..g {
                for j in 0..g {
                    e += om.entry(i, j) * k[i] * k[j] * 0.5;
                }
                e += (z[i] + beta[i]) * k[i];
            }
            let t = (e * c(0.0, 2.0 * PI)).exp();
            v += t;
            for i in 0..g {
                grad[i] += t * c(0.0, 2.0 * PI * k[i]);
            }
        }
        (v, grad)
    }

    #[test]
    fn tol_range_is_checked() {
        let t = identity_torus();
        assert_eq!(truncation_radius(&t, 0.0), Err(ThetaError::TolOutOfRange(0.0)));
        assert_eq!(truncation_radius(&t, 1.5), Err(ThetaError::TolOutOfRange(1.5)));
        assert!(ThetaEngine::new(&t, f64::NAN).is_err());
    }

    #[test]
    fn radius_monotone_in_tol_and_decay() {
        let t = identity_torus();
        let r1 = truncation_radius(&t, 1e-6).unwrap();
        let r2 = truncation_radius(&t, 1e-12).unwrap();
        assert!(r2 >= r1);
        let t4 = AbelianTorus::new(PeriodMatrix::scaled_identity(2, 4.0).unwrap());
        assert!(truncation_radius(&t4, 1e-6).unwrap() <= r1);
    }

    #[test]
    fn summand_count_is_small() {
        let t = identity_torus();
        let r = truncation_radius(&t, 1e-10).unwrap();
        let pts = ellipsoid_points(2, t.period().im(), t.im_inverse(), r);
        assert!(pts.len() <= 10_000, "{} summands", pts.len());
        assert!(ThetaEngine::new(&t, 1e-10).unwrap().summand_count() <= 10_000);
    }

    #[test]
    fn theta_null_of_identity() {
        // θ(0; iI₂) = (Σ e^{-πn²})² = (π^{1/4} / Γ(3/4))²
        let t = identity_torus();
        let v = theta(&[c(0.0, 0.0), c(0.0, 0.0)], &t, &ThetaCharacteristic::zero(2), 1e-10).unwrap();
        let one_d: f64 = (-30..=30).map(|n: i32| (-PI * (n * n) as f64).exp()).sum();
        let gamma_34 = statrs::function::gamma::gamma(0.75);
        let closed = (PI.powf(0.25) / gamma_34).powi(2);
        assert!((one_d * one_d - closed).abs() < 1e-14);
        assert!((v.value.re - closed).abs() <= 1e-9 && v.value.im.abs() <= 1e-12);
        assert!((v.value.re - 1.1803405990).abs() < 1e-10);
        assert!(v.claimed_abs_error <= 1e-10);
    }

    #[test]
    fn odd_characteristic_vanishes_at_origin() {
        let t = generic_torus();
        let ch = ThetaCharacteristic::half(&[1, 0], &[1, 0]);
        assert_eq!(ch.half_integer_parity(), Some(1));
        let v = theta(&[c(0.0, 0.0), c(0.0, 0.0)], &t, &ch, 1e-12).unwrap();
        assert!(v.value.norm() <= 1e-12, "{}", v.value);
        assert_eq!(ThetaCharacteristic::zero(2).half_integer_parity(), Some(0));
    }

    #[test]
    fn matches_brute_force_with_characteristic() {
        let t = generic_torus();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = ThetaCharacteristic::new(
            vec![Fraction::new(1, 3), Fraction::new(2, 5)],
            vec![Fraction::new(1, 7), Fraction::new(0, 1)],
        )
        .unwrap();
        let (alpha, beta) = ch.to_f64();
        for _ in 0..20 {
            let z: Vec<C64> = (0..2).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.5..1.5))).collect();
            let v = theta(&z, &t, &ch, 1e-11).unwrap();
            let g = theta_gradient(&z, &t, &ch, 1e-11).unwrap();
            let (bv, bg) = brute_theta(&t, &z, &alpha, &beta, 12);
            assert!((v.value - bv).norm() <= 1e-11 + 1e-12 * bv.norm(), "{} vs {}", v.value, bv);
            for i in 0..2 {
                assert!((g[i] - bg[i]).norm() <= 1e-11 + 1e-12 * bg[i].norm(), "{} vs {}", g[i], bg[i]);
            }
        }
    }

    #[test]
    fn even_theta_is_symmetric_and_gradient_vanishes_at_origin() {
        let t = generic_torus();
        let eng = ThetaEngine::new(&t, 1e-10).unwrap();
        let ch = ThetaCharacteristic::zero(2);
        let g0 = eng.eval(&[c(0.0, 0.0), c(0.0, 0.0)], &ch, true).gradient.unwrap();
        assert!(g0.iter().all(|w| w.norm() <= 1e-10));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let z: Vec<C64> = (0..2).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let mz: Vec<C64> = z.iter().map(|w| -w).collect();
            let a = eng.eval(&z, &ch, false).value;
            let b = eng.eval(&mz, &ch, false).value;
            assert!((a - b).norm() <= 2e-10);
        }
    }

    #[test]
    fn convergence_improves_with_tol() {
        let t = generic_torus();
        let ch = ThetaCharacteristic::zero(2);
        let z = [c(0.21, 0.4), c(-0.33, 0.12)];
        let (bv, _) = brute_theta(&t, &z, &[0.0, 0.0], &[0.0, 0.0], 12);
        let mut prev = f64::INFINITY;
        let mut tol = 1e-2;
        while tol > 1e-13 {
            let err = (theta(&z, &t, &ch, tol).unwrap().value - bv).norm();
            assert!(err <= tol);
            assert!(err <= prev + 1e-15);
            prev = err;
            tol *= 0.5;
        }
    }

    #[test]
    fn scaled_modulus_is_lattice_invariant() {
        let t = generic_torus();
        let eng = ThetaEngine::new(&t, 1e-12).unwrap();
        let ch = ThetaCharacteristic::half(&[1, 1], &[0, 1]);
        let z = [c(0.3, 0.2), c(0.1, -0.4)];
        let a = eng.eval_scaled(&z, &ch, false).modulus();
        let shifted = t.lift_coords(&[2.0, -1.0, 1.0, -2.0]);
        let w: Vec<C64> = z.iter().zip(&shifted).map(|(a, b)| a + b).collect();
        let b = eng.eval_scaled(&w, &ch, false).modulus();
        assert!((a - b).abs() < 1e-11);
    }
}
