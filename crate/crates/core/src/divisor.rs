//! Translated, pulled-back theta divisors `D = {z : θ[char](m·z + c) = 0}`.
//!
//! Membership and residuals use the scaled modulus `|θ| exp(-π Im(w)ᵀY⁻¹Im(w))`
//! at `w = m·z + c`. Unlike `|θ|` itself it does not depend on which lattice
//! translate of a point is used.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::par;
use crate::rng::{task_rng, Stream};
use crate::theta::{ScaledTheta, ThetaCharacteristic, ThetaEngine, ThetaError};
use crate::torus::{AbelianTorus, TorusPoint};
use crate::C64;

/// Default membership tolerance carried by every report.
pub const MEMBERSHIP_EPS: f64 = 1e-8;
/// Gradient norm below which a point counts as singular.
pub const SMOOTH_THRESHOLD: f64 = 1e-6;
/// Residual every sampled point is polished to.
pub const SAMPLE_RESIDUAL: f64 = 1e-9;
/// Minimal separation of sampled points.
pub const SAMPLE_SEPARATION: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DivisorError {
    #[error("divisor multiplier must be nonzero")]
    ZeroMultiplier,
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Theta(#[from] ThetaError),
    #[error("found only {found} of {requested} divisor points within the line budget")]
    SamplingExhausted { found: usize, requested: usize },
    #[error("gradient norm {gradient_norm:e} is below the smooth-point threshold")]
    SingularPoint { gradient_norm: f64 },
    #[error("point is not on the divisor (residual {residual:e})")]
    NotOnDivisor { residual: f64 },
    #[error("tangent lines are only defined for g = 2, got g = {0}")]
    UnsupportedDimension(usize),
    #[error("tolerance must be positive, got {0}")]
    BadEpsilon(f64),
}

/// `{z : θ[char](multiplier·z + translate) = 0}`; dimension `g - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaDivisor {
    characteristic: ThetaCharacteristic,
    translate: Vec<C64>,
    multiplier: i64,
}

impl ThetaDivisor {
    pub fn new(characteristic: ThetaCharacteristic, translate: Vec<C64>, multiplier: i64) -> Result<Self, DivisorError> {
        if multiplier == 0 {
            return Err(DivisorError::ZeroMultiplier);
        }
        if translate.len() != characteristic.g() {
            return Err(DivisorError::DimensionMismatch { expected: characteristic.g(), got: translate.len() });
        }
        Ok(Self { characteristic, translate, multiplier })
    }

    /// The symmetric theta divisor `Θ`.
    pub fn principal(g: usize) -> Self {
        Self { characteristic: ThetaCharacteristic::zero(g), translate: vec![C64::new(0.0, 0.0); g], multiplier: 1 }
    }

    /// `Θ` translated by `-c`, i.e. the zero set of `θ(z + c)`.
    pub fn translated(translate: Vec<C64>) -> Self {
        let g = translate.len();
        Self { characteristic: ThetaCharacteristic::zero(g), translate, multiplier: 1 }
    }

    pub fn characteristic(&self) -> &ThetaCharacteristic {
        &self.characteristic
    }

    pub fn translate(&self) -> &[C64] {
        &self.translate
    }

    pub fn multiplier(&self) -> i64 {
        self.multiplier
    }

    pub fn g(&self) -> usize {
        self.translate.len()
    }

    pub fn dimension(&self) -> usize {
        self.g() - 1
    }

    /// `multiplier·z + translate`.
    pub fn argument(&self, z: &[C64]) -> Vec<C64> {
        z.iter().zip(&self.translate).map(|(zi, ci)| zi * self.multiplier as f64 + ci).collect()
    }

    /// Binds the divisor to an engine for repeated evaluation.
    pub fn bind<'a>(&'a self, torus: &'a AbelianTorus, engine: &'a ThetaEngine) -> BoundDivisor<'a> {
        let (alpha, beta) = self.characteristic.to_f64();
        BoundDivisor { torus, engine, divisor: self, alpha, beta }
    }
}

/// A point on a divisor with its scaled residual.
#[derive(Debug, Clone, PartialEq)]
pub struct DivisorPoint {
    pub point: TorusPoint,
    pub residual: f64,
}

/// A divisor together with the torus and theta engine it is evaluated on.
#[derive(Debug, Clone)]
pub struct BoundDivisor<'a> {
    torus: &'a AbelianTorus,
    engine: &'a ThetaEngine,
    divisor: &'a ThetaDivisor,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl<'a> BoundDivisor<'a> {
    pub fn torus(&self) -> &'a AbelianTorus {
        self.torus
    }

    pub fn engine(&self) -> &'a ThetaEngine {
        self.engine
    }

    pub fn divisor(&self) -> &'a ThetaDivisor {
        self.divisor
    }

    /// Scaled value of `z ↦ θ(m·z + c)` at the ambient point `z`; the gradient
    /// is taken with respect to `z` and so carries the factor `m`.
    pub fn scaled_at(&self, z: &[C64], want_gradient: bool) -> ScaledTheta {
        let w = self.divisor.argument(z);
        let mut s = self.engine.eval_scaled_f64(&w, &self.alpha, &self.beta, want_gradient);
        if let Some(g) = s.gradient.as_mut() {
            let m = self.divisor.multiplier as f64;
            g.iter_mut().for_each(|x| *x *= m);
        }
        s
    }

    pub fn scaled(&self, p: &TorusPoint, want_gradient: bool) -> ScaledTheta {
        self.scaled_at(&self.torus.lift(p), want_gradient)
    }

    /// Lattice-invariant residual at `p`.
    pub fn residual(&self, p: &TorusPoint) -> f64 {
        self.scaled(p, false).modulus()
    }

    pub fn residual_at(&self, z: &[C64]) -> f64 {
        self.scaled_at(z, false).modulus()
    }

    /// As [`scaled_at`](Self::scaled_at), with the theta argument first moved
    /// into the fundamental domain. The value differs from `scaled_at` by a
    /// unimodular factor that is constant near `z`, so this is a holomorphic
    /// local model of the same divisor with the same scaled modulus.
    pub fn local_at(&self, z: &[C64], want_gradient: bool) -> ScaledTheta {
        let w = self.torus.reduce_ambient(&self.divisor.argument(z));
        let mut s = self.engine.eval_scaled_f64(&w, &self.alpha, &self.beta, want_gradient);
        if let Some(g) = s.gradient.as_mut() {
            let m = self.divisor.multiplier as f64;
            g.iter_mut().for_each(|x| *x *= m);
        }
        s
    }

    /// Scaled value at `z` and its derivatives along `Re z_j` then `Im z_j`, for the
    /// same local model as [`Self::local_at`].
    pub fn local_jet(&self, z: &[C64]) -> (C64, Vec<C64>) {
        let w = self.torus.reduce_ambient(&self.divisor.argument(z));
        let (v, mut cols) = self.jet_at(&w);
        let m = self.divisor.multiplier as f64;
        cols.iter_mut().for_each(|x| *x *= m);
        (v, cols)
    }

    fn jet_at(&self, w: &[C64]) -> (C64, Vec<C64>) {
        let g = self.torus.g();
        let im_inv = self.torus.im_inverse();
        let s = self.engine.eval_scaled_f64(w, &self.alpha, &self.beta, true);
        let grad = s.gradient.expect("gradient requested");
        let mut cols = grad.clone();
        for j in 0..g {
            let c: f64 = (0..g).map(|k| im_inv[j * g + k] * w[k].im).sum();
            cols.push(C64::i() * grad[j] - s.value * (2.0 * PI * c));
        }
        (s.value, cols)
    }

    /// Estimated bound on the second derivative of the scaled value in the
    /// ambient Euclidean metric, over the reduced domain the local model uses.
    /// Central differences of the jet on a `6^{2g}` sample, times a safety factor 2.
    pub fn value_curvature(&self) -> f64 {
        const SIDE: usize = 6;
        const H: f64 = 1e-5;
        let g = self.torus.g();
        let total = SIDE.pow(2 * g as u32);
        let norms = par::map_range(total, |idx| {
            let mut r = idx;
            let a: Vec<f64> = (0..2 * g)
                .map(|_| {
                    let d = r % SIDE;
                    r /= SIDE;
                    -0.6 + 1.2 * d as f64 / (SIDE - 1) as f64
                })
                .collect();
            let w = self.torus.lift_coords(&a);
            let mut f2 = 0.0;
            for k in 0..2 * g {
                let mut step = vec![C64::new(0.0, 0.0); g];
                step[k % g] = if k < g { C64::new(H, 0.0) } else { C64::new(0.0, H) };
                let plus: Vec<C64> = w.iter().zip(&step).map(|(a, b)| a + b).collect();
                let minus: Vec<C64> = w.iter().zip(&step).map(|(a, b)| a - b).collect();
                let (_, cp) = self.jet_at(&plus);
                let (_, cm) = self.jet_at(&minus);
                f2 += cp.iter().zip(&cm).map(|(p, m)| ((p - m) / (2.0 * H)).norm_sqr()).sum::<f64>();
            }
            f2.sqrt()
        });
        let max = norms.into_iter().fold(0.0, f64::max);
        let m = self.divisor.multiplier as f64;
        2.0 * max * m * m
    }

    /// Estimated Lipschitz constant of the scaled modulus `z ↦ |θ(m·z + c)| e^{-u}`
    /// in the ambient Euclidean metric: the largest real gradient norm over a
    /// `6^{2g}` sample of the fundamental domain, times a safety factor 1.5.
    pub fn modulus_lipschitz(&self) -> f64 {
        const SIDE: usize = 6;
        let g = self.torus.g();
        let total = SIDE.pow(2 * g as u32);
        let im_inv = self.torus.im_inverse();
        let norms = par::map_range(total, |idx| {
            let mut r = idx;
            let a: Vec<f64> = (0..2 * g)
                .map(|_| {
                    let d = r % SIDE;
                    r /= SIDE;
                    (d as f64 + 0.5) / SIDE as f64
                })
                .collect();
            let w = self.torus.lift_coords(&a);
            let s = self.engine.eval_scaled_f64(&w, &self.alpha, &self.beta, true);
            let grad = s.gradient.expect("gradient requested");
            let modulus = s.value.norm();
            let unit = if modulus > 0.0 { s.value.conj() / modulus } else { C64::new(1.0, 0.0) };
            let mut n2 = 0.0;
            for j in 0..g {
                let c: f64 = (0..g).map(|k| im_inv[j * g + k] * w[k].im).sum();
                let p = unit * grad[j];
                // ∂/∂Re w_j and ∂/∂Im w_j of |θ| e^{-u}, with ∂u/∂Im w_j = 2π c_j
                let dx = p.re;
                let dy = -p.im - 2.0 * PI * modulus * c;
                n2 += dx * dx + dy * dy;
            }
            n2.sqrt()
        });
        let max = norms.into_iter().fold(0.0, f64::max);
        1.5 * max * self.divisor.multiplier.unsigned_abs() as f64
    }

    /// Raw theta value `θ[char](m·z(p) + c)` at the lift of `p` in the fundamental domain.
    pub fn evaluate(&self, p: &TorusPoint) -> C64 {
        let w = self.divisor.argument(&self.torus.lift(p));
        self.engine.eval(&w, &self.divisor.characteristic, false).value
    }

    pub fn contains(&self, p: &TorusPoint, eps: f64) -> bool {
        self.residual(p) <= eps
    }

    /// Newton projection onto the divisor along the gradient direction.
    pub fn polish_at(&self, z: &[C64], max_iter: usize) -> (Vec<C64>, f64) {
        let mut z = z.to_vec();
        let mut res = f64::INFINITY;
        for _ in 0..max_iter {
            let s = self.scaled_at(&z, true);
            res = s.modulus();
            if res <= 1e-14 {
                break;
            }
            let grad = s.gradient.expect("gradient requested");
            let g2: f64 = grad.iter().map(|w| w.norm_sqr()).sum();
            if g2 == 0.0 {
                break;
            }
            // minimal-norm step for the single equation f(z) = 0
            let coef = s.value / g2;
            let step: Vec<C64> = grad.iter().map(|w| w.conj() * coef).collect();
            let step_norm: f64 = step.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
            let scale = if step_norm > 0.25 { 0.25 / step_norm } else { 1.0 };
            for (zi, si) in z.iter_mut().zip(&step) {
                *zi -= si * scale;
            }
        }
        let res_final = self.residual_at(&z);
        (z, res_final.min(res.max(res_final)))
    }

    pub fn polish(&self, p: &TorusPoint) -> DivisorPoint {
        let (z, residual) = self.polish_at(&self.torus.lift(p), 60);
        DivisorPoint { point: self.torus.project(&z), residual }
    }

    /// Unit tangent vector of the curve `D` at `p` (g = 2).
    pub fn tangent_direction(&self, p: &TorusPoint) -> Result<Vec<C64>, DivisorError> {
        let g = self.torus.g();
        if g != 2 {
            return Err(DivisorError::UnsupportedDimension(g));
        }
        let s = self.scaled(p, true);
        if s.modulus() > MEMBERSHIP_EPS {
            return Err(DivisorError::NotOnDivisor { residual: s.modulus() });
        }
        let grad = s.gradient.expect("gradient requested");
        let norm = (grad[0].norm_sqr() + grad[1].norm_sqr()).sqrt();
        if norm < SMOOTH_THRESHOLD {
            return Err(DivisorError::SingularPoint { gradient_norm: norm });
        }
        let mut v = [-grad[1] / norm, grad[0] / norm];
        let lead = if v[0].norm() > 1e-12 { v[0] } else { v[1] };
        let phase = lead.conj() / lead.norm();
        v.iter_mut().for_each(|x| *x *= phase);
        Ok(v.to_vec())
    }

    /// Roots of `θ_D` on the complex line `z0 + s·v`, `s` in `[-half, half]²`.
    fn roots_on_line(&self, z0: &[C64], v: &[C64], half: f64, cells: usize) -> Vec<(Vec<C64>, f64)> {
        let step = 2.0 * half / cells as f64;
        let verts = cells + 1;
        let at = |s: C64| -> Vec<C64> { z0.iter().zip(v).map(|(a, b)| a + b * s).collect() };
        let mut phase = vec![0.0; verts * verts];
        for j in 0..verts {
            for i in 0..verts {
                let s = C64::new(-half + i as f64 * step, -half + j as f64 * step);
                phase[j * verts + i] = self.scaled_at(&at(s), false).value.arg();
            }
        }
        let wrap = |d: f64| {
            let mut d = d;
            while d > PI {
                d -= 2.0 * PI;
            }
            while d <= -PI {
                d += 2.0 * PI;
            }
            d
        };
        let mut out: Vec<(Vec<C64>, f64)> = Vec::new();
        for j in 0..cells {
            for i in 0..cells {
                let corners = [j * verts + i, j * verts + i + 1, (j + 1) * verts + i + 1, (j + 1) * verts + i];
                let mut total = 0.0;
                for k in 0..4 {
                    total += wrap(phase[corners[(k + 1) % 4]] - phase[corners[k]]);
                }
                if (total / (2.0 * PI)).round() == 0.0 {
                    continue;
                }
                let mut s = C64::new(-half + (i as f64 + 0.5) * step, -half + (j as f64 + 0.5) * step);
                let mut res = f64::INFINITY;
                for _ in 0..40 {
                    let z = at(s);
                    let sv = self.scaled_at(&z, true);
                    res = sv.modulus();
                    if res <= 1e-15 {
                        break;
                    }
                    let grad = sv.gradient.expect("gradient requested");
                    let deriv: C64 = grad.iter().zip(v).map(|(a, b)| a * b).sum();
                    if deriv.norm() == 0.0 {
                        break;
                    }
                    let mut ds = sv.value / deriv;
                    if ds.norm() > step {
                        ds *= step / ds.norm();
                    }
                    s -= ds;
                }
                if s.re.abs() <= half + step && s.im.abs() <= half + step {
                    let z = at(s);
                    res = res.min(self.residual_at(&z));
                    out.push((z, res));
                }
            }
        }
        out
    }

    /// Deterministic sample of `count` distinct points of the divisor.
    ///
    /// Random complex lines through the fundamental domain are scanned for
    /// winding of `arg θ` around small cells; each winding cell is polished by
    /// Newton's method along its line. Lines are processed in fixed-size batches
    /// so the output does not depend on the number of worker threads.
    pub fn sample_points(&self, count: usize, seed: u64) -> Result<Vec<DivisorPoint>, DivisorError> {
        let budget = 10 * count.max(1);
        let g = self.torus.g();
        let cells = 24 * self.divisor.multiplier.unsigned_abs() as usize;
        let batch = count.clamp(1, 64);
        let mut kept: Vec<DivisorPoint> = Vec::with_capacity(count);
        let mut line = 0usize;
        while kept.len() < count && line < budget {
            let end = (line + batch).min(budget);
            let found = par::map_range(end - line, |off| {
                let idx = (line + off) as u64;
                let mut rng = task_rng(seed, Stream::DivisorSampling, idx);
                let a: Vec<f64> = (0..2 * g).map(|_| rng.gen::<f64>()).collect();
                let z0 = self.torus.lift_coords(&a);
                let mut v: Vec<C64> = (0..g)
                    .map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
                    .collect();
                let norm: f64 = v.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
                v.iter_mut().for_each(|w| *w /= norm);
                self.roots_on_line(&z0, &v, 0.5, cells)
            });
            for roots in found {
                for (z, residual) in roots {
                    if residual > SAMPLE_RESIDUAL || kept.len() >= count {
                        continue;
                    }
                    let point = self.torus.project(&z);
                    if kept.iter().all(|q| self.torus.distance(&q.point, &point) > SAMPLE_SEPARATION) {
                        kept.push(DivisorPoint { point, residual });
                    }
                }
            }
            line = end;
        }
        if kept.len() < count {
            return Err(DivisorError::SamplingExhausted { found: kept.len(), requested: count });
        }
        Ok(kept)
    }
}

/// `θ[char](m·z(p) + c)` at the fundamental-domain lift of `p`.
pub fn evaluate(d: &ThetaDivisor, torus: &AbelianTorus, p: &TorusPoint, tol: f64) -> Result<C64, DivisorError> {
    check_dim(d, torus, p)?;
    let engine = ThetaEngine::new(torus, tol)?;
    Ok(d.bind(torus, &engine).evaluate(p))
}

/// Membership test on the lattice-invariant residual.
pub fn contains(d: &ThetaDivisor, torus: &AbelianTorus, p: &TorusPoint, eps: f64) -> Result<bool, DivisorError> {
    if !(eps > 0.0) {
        return Err(DivisorError::BadEpsilon(eps));
    }
    check_dim(d, torus, p)?;
    let engine = ThetaEngine::new(torus, (eps * 1e-3).min(1e-12))?;
    Ok(d.bind(torus, &engine).contains(p, eps))
}

pub fn sample_points(d: &ThetaDivisor, torus: &AbelianTorus, count: usize, seed: u64) -> Result<Vec<DivisorPoint>, DivisorError> {
    let engine = ThetaEngine::new(torus, 1e-13)?;
    d.bind(torus, &engine).sample_points(count, seed)
}

pub fn tangent_direction(d: &ThetaDivisor, torus: &AbelianTorus, p: &TorusPoint) -> Result<Vec<C64>, DivisorError> {
    check_dim(d, torus, p)?;
    let engine = ThetaEngine::new(torus, 1e-13)?;
    d.bind(torus, &engine).tangent_direction(p)
}

fn check_dim(d: &ThetaDivisor, torus: &AbelianTorus, p: &TorusPoint) -> Result<(), DivisorError> {
    if d.g() != torus.g() {
        return Err(DivisorError::DimensionMismatch { expected: torus.g(), got: d.g() });
    }
    if p.dim() != torus.real_dim() {
        return Err(DivisorError::DimensionMismatch { expected: torus.real_dim(), got: p.dim() });
    }
    Ok(())
}

/// Automorphy factor of `θ[α,β]` for the lattice vector `Ω a + b`:
/// `θ[α,β](w + Ωa + b) = factor · θ[α,β](w)`.
pub fn quasi_periodicity_factor(torus: &AbelianTorus, ch: &ThetaCharacteristic, w: &[C64], a: &[i64], b: &[i64]) -> C64 {
    let g = torus.g();
    let (alpha, beta) = ch.to_f64();
    let mut e = C64::new(0.0, 0.0);
    for i in 0..g {
        e += C64::new(alpha[i] * b[i] as f64 - a[i] as f64 * beta[i], 0.0) * 2.0;
        e -= w[i] * (2.0 * a[i] as f64);
        for j in 0..g {
            e -= torus.period().entry(i, j) * (a[i] * a[j]) as f64;
        }
    }
    (e * C64::new(0.0, PI)).exp()
}
