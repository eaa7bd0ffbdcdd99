//! Equidistribution diagnostics for orbits `{n·y}` on the torus.

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::numeric::{floor_mul, ComplexSum};
use crate::par;
use crate::torus::{frac, AbelianTorus, TorusPoint};
use crate::C64;

/// Largest number of anchored boxes a discrepancy estimate may visit.
pub const MAX_BOXES: u64 = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquidistError {
    #[error("frequency vector must be nonzero")]
    ZeroFrequency,
    #[error("the sequence of multipliers is empty")]
    EmptySequence,
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("grid must be at least 2, got {0}")]
    GridTooSmall(u32),
    #[error("grid^{dim} = {grid}^{dim} exceeds the box budget")]
    GridOverflow { grid: u32, dim: usize },
    #[error("no points given")]
    NoPoints,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeylReport {
    pub k: Vec<i64>,
    pub n: usize,
    pub magnitude: f64,
}

/// `|(1/N) Σ_j exp(2πi k·(n_j y))|`.
pub fn weyl_sum(y: &TorusPoint, n_list: &[i64], k: &[i64]) -> Result<WeylReport, EquidistError> {
    if k.iter().all(|&x| x == 0) {
        return Err(EquidistError::ZeroFrequency);
    }
    if n_list.is_empty() {
        return Err(EquidistError::EmptySequence);
    }
    if k.len() != y.dim() {
        return Err(EquidistError::DimensionMismatch { expected: y.dim(), got: k.len() });
    }
    const BLOCK: usize = 4096;
    let blocks = n_list.len().div_ceil(BLOCK);
    let partial = par::map_range(blocks, |b| {
        let mut s = ComplexSum::new();
        for &n in &n_list[b * BLOCK..((b + 1) * BLOCK).min(n_list.len())] {
            let ny = y.multiply(n);
            // k·(n y) mod 1, reduced termwise to keep the argument small
            let phase = frac(ny.coords().iter().zip(k).map(|(&c, &ki)| frac(ki as f64 * c)).sum::<f64>());
            let (s_, c_) = (2.0 * PI * phase).sin_cos();
            s.add(C64::new(c_, s_));
        }
        s
    });
    let mut total = ComplexSum::new();
    for p in &partial {
        total.merge(p);
    }
    let magnitude = (total.value().norm() / n_list.len() as f64).min(1.0);
    Ok(WeylReport { k: k.to_vec(), n: n_list.len(), magnitude })
}

/// Largest deviation `|#{p ∈ B}/N - vol(B)|` over the anchored boxes
/// `B = Π [0, j_i/grid)` with `j_i ∈ {1, …, grid}`.
///
/// Every box of a grid is also a box of any multiple of it, so refining the
/// grid never lowers the estimate.
pub fn discrepancy_estimate(points: &[TorusPoint], grid: u32) -> Result<f64, EquidistError> {
    if grid < 2 {
        return Err(EquidistError::GridTooSmall(grid));
    }
    let first = points.first().ok_or(EquidistError::NoPoints)?;
    let d = first.dim();
    let cells = (grid as u64).checked_pow(d as u32).filter(|&c| c <= MAX_BOXES);
    let cells = cells.ok_or(EquidistError::GridOverflow { grid, dim: d })? as usize;
    let gsz = grid as usize;
    let mut hist = vec![0u32; cells];
    for p in points {
        if p.dim() != d {
            return Err(EquidistError::DimensionMismatch { expected: d, got: p.dim() });
        }
        let mut idx = 0usize;
        for &c in p.coords().iter().rev() {
            let cell = (floor_mul(grid as i64, c).clamp(0, grid as i64 - 1)) as usize;
            idx = idx * gsz + cell;
        }
        hist[idx] += 1;
    }
    // inclusive prefix sums along each axis in turn
    let mut stride = 1usize;
    for _ in 0..d {
        for i in 0..cells {
            if (i / stride) % gsz != 0 {
                hist[i] += hist[i - stride];
            }
        }
        stride *= gsz;
    }
    let n = points.len() as f64;
    let g = grid as f64;
    let worst = par::map_range(cells.div_ceil(1 << 16), |b| {
        let lo = b << 16;
        let hi = (lo + (1 << 16)).min(cells);
        let mut worst: f64 = 0.0;
        for (i, &count) in hist.iter().enumerate().take(hi).skip(lo) {
            let mut vol = 1.0;
            let mut r = i;
            for _ in 0..d {
                vol *= ((r % gsz) + 1) as f64 / g;
                r /= gsz;
            }
            worst = worst.max((count as f64 / n - vol).abs());
        }
        worst
    });
    Ok(worst.into_iter().fold(0.0, f64::max))
}

/// `{n·y : 1 ≤ n ≤ N}`.
pub fn orbit(y: &TorusPoint, n_max: u64) -> Vec<TorusPoint> {
    par::map_range(n_max as usize, |i| y.multiply(i as i64 + 1))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproximationStep {
    pub n: i64,
    /// Integer vector with `n·y + a` (unreduced) closest to `x`.
    pub a: Vec<i64>,
    pub dist: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproximationTrace {
    pub steps: Vec<ApproximationStep>,
}

impl ApproximationTrace {
    pub fn best(&self) -> Option<&ApproximationStep> {
        self.steps.last()
    }
}

/// The record-setting `n ≤ n_max` for the distance from `n·y` to `x`.
pub fn approximating_translates(torus: &AbelianTorus, y: &TorusPoint, x: &TorusPoint, n_max: u64) -> ApproximationTrace {
    const BLOCK: usize = 2048;
    let total = n_max as usize;
    // per block, only the steps that improve on the block's own running best can
    // be global records, so blocks can be scanned independently
    let per_block = par::map_range(total.div_ceil(BLOCK), |b| {
        let mut best = f64::INFINITY;
        let mut out = Vec::new();
        for n in (b * BLOCK + 1)..=((b + 1) * BLOCK).min(total) {
            let n = n as i64;
            let ny = y.multiply(n);
            let (dist, k) = torus.nearest_offset(x.coords(), ny.coords());
            if dist < best {
                best = dist;
                let a = y.coords().iter().zip(&k).map(|(&c, &ki)| ki - floor_mul(n, c)).collect();
                out.push(ApproximationStep { n, a, dist });
            }
        }
        out
    });
    let mut best = f64::INFINITY;
    let mut steps = Vec::new();
    for s in per_block.into_iter().flatten() {
        if s.dist < best {
            best = s.dist;
            steps.push(s);
        }
    }
    ApproximationTrace { steps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::PeriodMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn golden() -> TorusPoint {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        TorusPoint::new(vec![phi - 1.0, 2f64.sqrt() - 1.0, 0.3, 0.7]).unwrap()
    }

    /// Independent irrationals, so the orbit is dense in the whole torus.
    fn irrational() -> TorusPoint {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        TorusPoint::new(vec![phi - 1.0, 2f64.sqrt() - 1.0, 3f64.sqrt() - 1.0, std::f64::consts::E - 2.0]).unwrap()
    }

    fn standard() -> AbelianTorus {
        let c = C64::new;
        AbelianTorus::from_entries(2, &[c(0.13, 1.07), c(0.31, 0.27), c(0.31, 0.27), c(-0.22, 1.19)]).unwrap()
    }

    #[test]
    fn weyl_trivial_cases() {
        let o = TorusPoint::origin(4);
        let ns: Vec<i64> = (1..=50).collect();
        assert_eq!(weyl_sum(&o, &ns, &[1, 2, 0, 0]).unwrap().magnitude, 1.0);
        let y = TorusPoint::new(vec![1.0 / 7.0, 3.0 / 7.0, 0.0, 2.0 / 7.0]).unwrap();
        let ns: Vec<i64> = (1..=700).collect();
        assert!(weyl_sum(&y, &ns, &[1, 0, 0, 0]).unwrap().magnitude <= 1e-12);
        assert_eq!(weyl_sum(&y, &ns, &[0, 0, 0, 0]), Err(EquidistError::ZeroFrequency));
        assert_eq!(weyl_sum(&y, &[], &[1, 0, 0, 0]), Err(EquidistError::EmptySequence));
    }

    #[test]
    fn weyl_decays_for_golden_point() {
        let y = golden();
        let short: Vec<i64> = (1..=100).collect();
        let long: Vec<i64> = (1..=10_000).collect();
        let ks = [[1, 0, 0, 0], [0, 1, 0, 0], [1, 1, 0, 0], [2, -1, 0, 0], [1, 2, 0, 0]];
        for k in ks {
            let a = weyl_sum(&y, &short, &k).unwrap().magnitude;
            let b = weyl_sum(&y, &long, &k).unwrap().magnitude;
            assert!(b < a && b <= 0.02, "k = {k:?}: {a} -> {b}");
        }
    }

    #[test]
    fn discrepancy_basic() {
        let m = 4u32;
        let mut pts = Vec::new();
        for i in 0..m.pow(4) {
            let c: Vec<f64> = (0..4).map(|j| ((i / m.pow(j)) % m) as f64 / m as f64).collect();
            pts.push(TorusPoint::new(c).unwrap());
        }
        let d = discrepancy_estimate(&pts, m).unwrap();
        assert!(d <= 8.0 / m as f64 + 1e-12, "{d}");
        let single = discrepancy_estimate(&pts[..1], 5).unwrap();
        assert!(single >= 1.0 - 1.0 / 625.0 - 1e-12);
        assert!(matches!(discrepancy_estimate(&pts, 101), Err(EquidistError::GridOverflow { .. })));
    }

    #[test]
    fn discrepancy_refinement_and_decay() {
        let y = golden();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<TorusPoint> = (0..300).map(|_| TorusPoint::new((0..4).map(|_| rng.gen::<f64>()).collect()).unwrap()).collect();
        for grid in [2, 3, 4, 5] {
            let a = discrepancy_estimate(&pts, grid).unwrap();
            let b = discrepancy_estimate(&pts, 2 * grid).unwrap();
            assert!(b >= a && (0.0..=1.0).contains(&b));
        }
        let ds: Vec<f64> = [100, 1000, 10_000].iter().map(|&n| discrepancy_estimate(&orbit(&y, n), 8).unwrap()).collect();
        assert!(ds[0] >= ds[1] && ds[1] >= ds[2], "{ds:?}");
    }

    #[test]
    fn approximation_trace() {
        let t = AbelianTorus::new(PeriodMatrix::scaled_identity(2, 1.0).unwrap());
        let y = golden();
        let tr = approximating_translates(&t, &y, &y, 10);
        assert_eq!(tr.steps[0].n, 1);
        assert!(tr.steps[0].dist < 1e-15 && tr.steps[0].a.iter().all(|&a| a == 0));
        let st = standard();
        let y = irrational();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let x = TorusPoint::new((0..4).map(|_| rng.gen::<f64>()).collect()).unwrap();
            let tr = approximating_translates(&st, &y, &x, 10_000);
            assert!(tr.steps.windows(2).all(|w| w[1].dist < w[0].dist));
            worst = worst.max(tr.best().unwrap().dist);
        }
        assert!(worst <= 0.1, "{worst}");
        let x = TorusPoint::new(vec![0.2, 0.9, 0.45, 0.05]).unwrap();
        let tr = approximating_translates(&st, &y, &x, 10_000);
        let last = tr.best().unwrap();
        // the offset realises the distance
        let lifted: Vec<f64> = (0..4).map(|i| last.n as f64 * y.coords()[i] + last.a[i] as f64 - x.coords()[i]).collect();
        let amb = st.ambient(&lifted);
        assert!((amb.iter().map(|v| v * v).sum::<f64>().sqrt() - last.dist).abs() < 1e-8);
    }
}
