//! Intersections `X ∩ [n]Y` of theta divisors on an abelian surface.
//!
//! The intersection is computed on the graph of `[n]`: solutions are the
//! `y ∈ Y` with `n·y ∈ X`, i.e. the zeros of
//!
//! ```text
//! F(y) = (θ_Y(m_Y y + c_Y), θ_X(m_X n y + c_X))
//! ```
//!
//! and each is projected to `x = n·y`. Candidates come from a hierarchical
//! scan of a `grid_res^4` grid in lattice coordinates: a block survives only
//! if neither scaled modulus exceeds the Lipschitz bound times the block
//! radius, nor the second-order bound built from the Jacobian at the centre
//! and a curvature estimate. Both constants are pilot estimates with a safety
//! factor. Local minima of the surviving cells seed a damped Newton
//! iteration on the two complex equations.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::divisor::{BoundDivisor, DivisorError, ThetaDivisor};
use crate::numeric::singular_values_2x2;
use crate::par;
use crate::theta::{ThetaEngine, ThetaError};
use crate::torus::{AbelianTorus, TorusPoint};
use crate::C64;

/// Roots closer than this (ambient metric) are the same root.
pub const DEDUP_RADIUS: f64 = 1e-6;
/// Jacobians with a smaller singular value are treated as singular.
pub const SINGULAR_SV: f64 = 1e-6;
/// Singular roots within this distance of a better singular root are merged.
/// Newton converges only linearly at a multiple root and leaves a small cloud
/// of distinct approximations around it.
pub const SINGULAR_MERGE_RADIUS: f64 = 1e-3;
pub const PROBE_STEPS: usize = 10;
pub const PROBE_STEP: f64 = 1e-3;
/// Record counts above this multiple of the expected count trigger the cluster test.
pub const CLUSTER_FACTOR: u64 = 4;
/// Grid resolution per real dimension for `|n| ≤ 5`.
pub const BASE_GRID: u32 = 128;
pub const MIN_GRID: u32 = 16;
/// Default residual tolerance for accepted roots.
pub const ROOT_TOL: f64 = 1e-8;
/// Default absolute tolerance of the theta series.
pub const THETA_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntersectionError {
    #[error("the graph solver needs g = 2, got g = {0}")]
    UnsupportedDimension(usize),
    #[error("grid resolution {0} is outside [{MIN_GRID}, 65535]")]
    BadGrid(u32),
    #[error("multiplier n must be nonzero")]
    ZeroMultiplier,
    #[error("divisor and torus dimensions differ")]
    DimensionMismatch,
    #[error("tolerance {0:e} must be positive and below 1")]
    BadTolerance(f64),
    #[error("no intersection points to measure against")]
    NoPoints,
    #[error(transparent)]
    Theta(#[from] ThetaError),
    #[error(transparent)]
    Divisor(#[from] DivisorError),
}

/// `dim X + dim Y - dim A`, or empty when negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum ExpectedDimension {
    Empty,
    Dim(u32),
}

impl fmt::Display for ExpectedDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExpectedDimension::Empty => write!(f, "-inf"),
            ExpectedDimension::Dim(d) => write!(f, "{d}"),
        }
    }
}

pub fn expected_dimension(dim_x: u32, dim_y: u32, dim_a: u32) -> ExpectedDimension {
    assert!(dim_x <= dim_a && dim_y <= dim_a, "subvarieties cannot exceed the ambient dimension");
    match (dim_x + dim_y).checked_sub(dim_a) {
        Some(d) => ExpectedDimension::Dim(d),
        None => ExpectedDimension::Empty,
    }
}

/// `Y · [n]^*X = 2 n² m_X² m_Y²` on a principally polarized surface.
pub fn expected_count(x: &ThetaDivisor, y: &ThetaDivisor, n: i64) -> u64 {
    let mx = x.multiplier().unsigned_abs();
    let my = y.multiplier().unsigned_abs();
    let n = n.unsigned_abs();
    2 * n * n * mx * mx * my * my
}

/// Default grid resolution: [`BASE_GRID`] up to `|n| = 5`, then linear in `|n|`.
pub fn default_grid(n: i64) -> u32 {
    let a = n.unsigned_abs() as u32;
    if a <= 5 {
        BASE_GRID
    } else {
        (BASE_GRID * a).div_ceil(5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Classification {
    ExpectedIsolated,
    UnexpectedPositiveDim,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntersectionRecord {
    pub y_solution: TorusPoint,
    /// `n·y_solution` reduced to the fundamental parallelogram.
    pub x_point: TorusPoint,
    pub residual: f64,
    pub n: i64,
    pub jacobian_min_sv: f64,
    /// Number of raw Newton limits represented by this record.
    pub merged: usize,
    pub classification: Classification,
}

impl IntersectionRecord {
    /// Singular Jacobian at a root that was not classified as positive-dimensional.
    pub fn is_tangential(&self) -> bool {
        self.classification == Classification::ExpectedIsolated && self.jacobian_min_sv < SINGULAR_SV
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SolveWarning {
    GridTooCoarse { n: i64, found: u64, expected: u64 },
    /// Isolated roots with a singular Jacobian; they are counted once each.
    TangentialRoots { n: i64, count: u64 },
}

impl fmt::Display for SolveWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveWarning::GridTooCoarse { n, found, expected } => {
                write!(f, "n = {n}: found {found} isolated roots, expected {expected}; grid too coarse")
            }
            SolveWarning::TangentialRoots { n, count } => {
                write!(f, "n = {n}: {count} isolated roots are tangential and counted once")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveParams {
    pub grid_res: u32,
    /// Largest accepted residual (scaled modulus of either equation).
    pub tol: f64,
    pub theta_tol: f64,
}

impl SolveParams {
    pub fn for_n(n: i64) -> Self {
        Self { grid_res: default_grid(n), tol: ROOT_TOL, theta_tol: THETA_TOL }
    }

    fn validate(&self) -> Result<(), IntersectionError> {
        if !(MIN_GRID..=65535).contains(&self.grid_res) {
            return Err(IntersectionError::BadGrid(self.grid_res));
        }
        for t in [self.tol, self.theta_tol] {
            if !(t > 0.0 && t < 1.0) {
                return Err(IntersectionError::BadTolerance(t));
            }
        }
        Ok(())
    }
}

/// Work counters of one solve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ScanStats {
    pub blocks_visited: u64,
    pub leaf_cells: u64,
    pub seeds: u64,
    pub converged: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphSolution {
    pub n: i64,
    pub records: Vec<IntersectionRecord>,
    pub expected: u64,
    pub warnings: Vec<SolveWarning>,
    pub stats: ScanStats,
}

impl GraphSolution {
    pub fn isolated_count(&self) -> u64 {
        self.records.iter().filter(|r| r.classification == Classification::ExpectedIsolated).count() as u64
    }

    pub fn is_proper(&self) -> bool {
        self.records.iter().all(|r| r.classification == Classification::ExpectedIsolated)
    }

    /// Number of distinct `x`-points (projections may collide).
    pub fn distinct_x_count(&self, torus: &AbelianTorus) -> usize {
        dedup_points(torus, self.records.iter().map(|r| r.x_point.clone()).collect(), DEDUP_RADIUS).len()
    }
}

/// The two equations of the graph system, bound to one torus and engine.
struct GraphSystem<'a> {
    y: BoundDivisor<'a>,
    x: BoundDivisor<'a>,
    n: i64,
}

type Jacobian = [[C64; 2]; 2];

impl<'a> GraphSystem<'a> {
    fn n_times(&self, z: &[C64]) -> Vec<C64> {
        z.iter().map(|w| w * self.n as f64).collect()
    }

    /// Scaled moduli of both equations.
    fn moduli(&self, z: &[C64]) -> [f64; 2] {
        [self.y.local_at(z, false).modulus(), self.x.local_at(&self.n_times(z), false).modulus()]
    }

    fn residual(&self, z: &[C64]) -> f64 {
        let [a, b] = self.moduli(z);
        a.max(b)
    }

    /// Values and Jacobian of a holomorphic local model of `F` near `z`.
    fn eval(&self, z: &[C64]) -> ([C64; 2], Jacobian) {
        let sy = self.y.local_at(z, true);
        let sx = self.x.local_at(&self.n_times(z), true);
        let gy = sy.gradient.expect("gradient requested");
        let gx = sx.gradient.expect("gradient requested");
        let nf = self.n as f64;
        ([sy.value, sx.value], [[gy[0], gy[1]], [gx[0] * nf, gx[1] * nf]])
    }

    fn min_sv(&self, z: &[C64]) -> f64 {
        let (_, j) = self.eval(z);
        singular_values_2x2(j[0][0], j[0][1], j[1][0], j[1][1]).1
    }

    /// Damped Gauss–Newton with a tiny Levenberg–Marquardt shift, so that
    /// rank-deficient Jacobians still give a minimal-norm step.
    fn newton(&self, z0: &[C64], max_iter: usize) -> (Vec<C64>, f64) {
        let mut z = z0.to_vec();
        let mut res = self.residual(&z);
        for _ in 0..max_iter {
            if res <= 1e-15 {
                break;
            }
            let (f, j) = self.eval(&z);
            let step = lm_step(&j, &f, 1e-14);
            let norm = (step[0].norm_sqr() + step[1].norm_sqr()).sqrt();
            if !norm.is_finite() || norm == 0.0 {
                break;
            }
            let cap = if norm > 0.1 { 0.1 / norm } else { 1.0 };
            let mut t = cap;
            let mut moved = false;
            for _ in 0..12 {
                let cand = vec![z[0] - step[0] * t, z[1] - step[1] * t];
                let r = self.residual(&cand);
                if r < res {
                    z = cand;
                    res = r;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        (z, res)
    }

    /// Follows the Jacobian null direction for [`PROBE_STEPS`] steps, correcting
    /// back onto both divisors after each. True when every corrected point
    /// stays within `tol` and keeps moving away from the previous one.
    fn traces_curve(&self, z0: &[C64], tol: f64) -> bool {
        let mut z = z0.to_vec();
        let mut prev: Option<[C64; 2]> = None;
        for _ in 0..PROBE_STEPS {
            let (_, j) = self.eval(&z);
            let mut dir = null_direction(&j);
            if let Some(p) = prev {
                let ip = p[0].conj() * dir[0] + p[1].conj() * dir[1];
                if ip.norm() > 0.0 {
                    let phase = ip.conj() / ip.norm();
                    dir = [dir[0] * phase, dir[1] * phase];
                }
            }
            let pred = vec![z[0] + dir[0] * PROBE_STEP, z[1] + dir[1] * PROBE_STEP];
            let mut w = pred;
            for _ in 0..12 {
                let (f, jw) = self.eval(&w);
                if f[0].norm().max(f[1].norm()) <= 1e-14 {
                    break;
                }
                let s = lm_step(&jw, &f, 1e-10);
                w = vec![w[0] - s[0], w[1] - s[1]];
            }
            let moved = ((w[0] - z[0]).norm_sqr() + (w[1] - z[1]).norm_sqr()).sqrt();
            if self.residual(&w) > tol || moved < 0.5 * PROBE_STEP {
                return false;
            }
            prev = Some(dir);
            z = w;
        }
        true
    }
}

/// Solves `(JᴴJ + μ‖J‖²I) s = Jᴴf`.
fn lm_step(j: &Jacobian, f: &[C64; 2], mu_rel: f64) -> [C64; 2] {
    let scale = j.iter().flatten().map(|w| w.norm_sqr()).sum::<f64>();
    let mu = mu_rel * scale.max(1e-300);
    let a = j[0][0].norm_sqr() + j[1][0].norm_sqr() + mu;
    let d = j[0][1].norm_sqr() + j[1][1].norm_sqr() + mu;
    let b = j[0][0].conj() * j[0][1] + j[1][0].conj() * j[1][1];
    let r0 = j[0][0].conj() * f[0] + j[1][0].conj() * f[1];
    let r1 = j[0][1].conj() * f[0] + j[1][1].conj() * f[1];
    // Hermitian [[a, b], [b̄, d]]
    let det = a * d - b.norm_sqr();
    [(r0 * d - b * r1) / det, (r1 * a - b.conj() * r0) / det]
}

/// Unit vector spanning (approximately) the kernel of `J`.
fn null_direction(j: &Jacobian) -> [C64; 2] {
    let p = j[0][0].norm_sqr() + j[1][0].norm_sqr();
    let q = j[0][1].norm_sqr() + j[1][1].norm_sqr();
    let r = j[0][0].conj() * j[0][1] + j[1][0].conj() * j[1][1];
    let lam = 0.5 * (p + q - ((p - q) * (p - q) + 4.0 * r.norm_sqr()).sqrt());
    // eigenvector of [[p, r], [r̄, q]] for the smallest eigenvalue
    let v1 = [r, C64::new(lam - p, 0.0)];
    let v2 = [C64::new(lam - q, 0.0), r.conj()];
    let n1 = v1[0].norm_sqr() + v1[1].norm_sqr();
    let n2 = v2[0].norm_sqr() + v2[1].norm_sqr();
    let (v, nn) = if n1 >= n2 { (v1, n1) } else { (v2, n2) };
    if nn == 0.0 {
        return [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    }
    let s = nn.sqrt();
    [v[0] / s, v[1] / s]
}

#[derive(Debug, Clone, Copy)]
struct Block {
    lo: [u32; 4],
    size: [u32; 4],
}

impl Block {
    fn is_leaf(&self) -> bool {
        self.size.iter().all(|&s| s == 1)
    }

    fn children(&self) -> Vec<Block> {
        let mut out = vec![*self];
        for d in 0..4 {
            if self.size[d] < 2 {
                continue;
            }
            let half = self.size[d] / 2;
            out = out
                .into_iter()
                .flat_map(|b| {
                    let mut left = b;
                    left.size[d] = half;
                    let mut right = b;
                    right.lo[d] += half;
                    right.size[d] = b.size[d] - half;
                    [left, right]
                })
                .collect();
        }
        out
    }

    fn centre(&self, res: u32) -> [f64; 4] {
        let mut c = [0.0; 4];
        for d in 0..4 {
            c[d] = (self.lo[d] as f64 + 0.5 * self.size[d] as f64) / res as f64;
        }
        c
    }
}

/// Operator norm of the real `2×k` matrix whose columns are the given complex numbers.
fn real_op_norm(cols: &[C64]) -> f64 {
    let a: f64 = cols.iter().map(|c| c.re * c.re).sum();
    let b: f64 = cols.iter().map(|c| c.re * c.im).sum();
    let d: f64 = cols.iter().map(|c| c.im * c.im).sum();
    (0.5 * (a + d) + (0.25 * (a - d) * (a - d) + b * b).sqrt()).sqrt()
}

fn pack(idx: [u32; 4]) -> u64 {
    idx.iter().fold(0u64, |acc, &i| (acc << 16) | i as u64)
}

/// Drops points within `radius` of an earlier point; order is preserved.
fn dedup_points(torus: &AbelianTorus, points: Vec<TorusPoint>, radius: f64) -> Vec<TorusPoint> {
    let mut kept: Vec<TorusPoint> = Vec::new();
    let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let reach = radius * torus.basis_inverse().norm();
    let width = reach.max(1e-9) * 2.0;
    let nb = (1.0 / width).floor().max(1.0) as i64;
    let key = |p: &TorusPoint| -> Vec<i64> { p.coords().iter().map(|&c| ((c * nb as f64) as i64).min(nb - 1)).collect() };
    for p in points {
        let k = key(&p);
        let mut dup = false;
        'outer: for off in 0..3usize.pow(k.len() as u32) {
            let mut o = off;
            let nk: Vec<i64> = k
                .iter()
                .map(|&ki| {
                    let d = (o % 3) as i64 - 1;
                    o /= 3;
                    (ki + d).rem_euclid(nb)
                })
                .collect();
            if let Some(list) = buckets.get(&nk) {
                for &i in list {
                    if torus.distance(&kept[i], &p) <= radius {
                        dup = true;
                        break 'outer;
                    }
                }
            }
        }
        if !dup {
            buckets.entry(k).or_default().push(kept.len());
            kept.push(p);
        }
    }
    kept
}

/// A lab bound to one torus and one theta tolerance.
#[derive(Debug, Clone)]
pub struct IntersectionLab {
    torus: AbelianTorus,
    engine: ThetaEngine,
}

impl IntersectionLab {
    pub fn new(torus: AbelianTorus, theta_tol: f64) -> Result<Self, IntersectionError> {
        if torus.g() != 2 {
            return Err(IntersectionError::UnsupportedDimension(torus.g()));
        }
        let engine = ThetaEngine::new(&torus, theta_tol)?;
        Ok(Self { torus, engine })
    }

    pub fn torus(&self) -> &AbelianTorus {
        &self.torus
    }

    pub fn engine(&self) -> &ThetaEngine {
        &self.engine
    }

    fn system<'a>(&'a self, y: &'a ThetaDivisor, x: &'a ThetaDivisor, n: i64) -> Result<GraphSystem<'a>, IntersectionError> {
        if n == 0 {
            return Err(IntersectionError::ZeroMultiplier);
        }
        if y.g() != 2 || x.g() != 2 {
            return Err(IntersectionError::DimensionMismatch);
        }
        Ok(GraphSystem { y: y.bind(&self.torus, &self.engine), x: x.bind(&self.torus, &self.engine), n })
    }

    /// Located roots of the graph system, deduplicated and sorted by
    /// coordinates, before classification.
    pub fn solve_graph_system(
        &self,
        y: &ThetaDivisor,
        x: &ThetaDivisor,
        n: i64,
        params: &SolveParams,
    ) -> Result<GraphSolution, IntersectionError> {
        params.validate()?;
        let sys = self.system(y, x, n)?;
        let res = params.grid_res;
        let ly = sys.y.modulus_lipschitz();
        let lx = sys.x.modulus_lipschitz() * n.unsigned_abs() as f64;
        let cy = sys.y.value_curvature();
        let cx = sys.x.value_curvature() * (n * n) as f64;
        let slack = 4.0 * self.engine.tol();
        let mut stats = ScanStats::default();

        // hierarchical pruning down to single cells
        let mut frontier = vec![Block { lo: [0; 4], size: [res; 4] }];
        let mut leaves: Vec<(u64, [u32; 4], f64)> = Vec::new();
        while !frontier.is_empty() {
            stats.blocks_visited += frontier.len() as u64;
            let verdicts = par::map_slice(&frontier, |b| {
                let side: Vec<f64> = b.size.iter().map(|&s| s as f64 / res as f64).collect();
                let r = self.torus.box_half_diagonal(&side);
                let z = self.torus.lift_coords(&b.centre(res));
                let [ny, nx] = sys.moduli(&z);
                if ny > ly * r + slack || nx > lx * r + slack {
                    return None;
                }
                // second-order Taylor bound around the centre
                let gy = real_op_norm(&sys.y.local_jet(&z).1);
                let gx = real_op_norm(&sys.x.local_jet(&sys.n_times(&z)).1) * n.unsigned_abs() as f64;
                if ny > gy * r + 0.5 * cy * r * r + slack || nx > gx * r + 0.5 * cx * r * r + slack {
                    return None;
                }
                Some(ny / (ly * r) + nx / (lx * r))
            });
            let mut next = Vec::new();
            for (b, v) in frontier.iter().zip(verdicts) {
                let Some(merit) = v else { continue };
                if b.is_leaf() {
                    leaves.push((pack(b.lo), b.lo, merit));
                } else {
                    next.extend(b.children());
                }
            }
            frontier = next;
        }
        stats.leaf_cells = leaves.len() as u64;

        // local minima of the merit among surviving neighbours
        let merit: HashMap<u64, f64> = leaves.iter().map(|&(k, _, m)| (k, m)).collect();
        let mut seeds: Vec<[u32; 4]> = par::map_slice(&leaves, |&(key, idx, m)| {
            for off in 0..81u32 {
                if off == 40 {
                    continue;
                }
                let mut o = off;
                let mut nb = [0u32; 4];
                for d in 0..4 {
                    let delta = (o % 3) as i64 - 1;
                    o /= 3;
                    nb[d] = (idx[d] as i64 + delta).rem_euclid(res as i64) as u32;
                }
                let nk = pack(nb);
                if let Some(&mn) = merit.get(&nk) {
                    if mn < m || (mn == m && nk < key) {
                        return None;
                    }
                }
            }
            Some(idx)
        })
        .into_iter()
        .flatten()
        .collect();
        seeds.sort_unstable();
        stats.seeds = seeds.len() as u64;

        let roots = par::map_slice(&seeds, |idx| {
            let c: Vec<f64> = idx.iter().map(|&i| (i as f64 + 0.5) / res as f64).collect();
            let (z, r) = sys.newton(&self.torus.lift_coords(&c), 60);
            (r <= params.tol).then(|| self.torus.project(&z))
        });
        let mut found: Vec<TorusPoint> = roots.into_iter().flatten().collect();
        stats.converged = found.len() as u64;

        // best residual first, so each cluster is represented by its most accurate root
        let residuals = par::map_slice(&found, |p| sys.residual(&self.torus.lift(p)));
        let mut order: Vec<usize> = (0..found.len()).collect();
        order.sort_by(|&a, &b| residuals[a].total_cmp(&residuals[b]).then_with(|| found[a].partial_cmp(&found[b]).unwrap()));
        found = order.into_iter().map(|i| found[i].clone()).collect();
        let mut unique = dedup_points(&self.torus, found, DEDUP_RADIUS);
        unique.sort_by(|a, b| a.partial_cmp(b).unwrap());

        let raw = par::map_slice(&unique, |p| {
            let z = self.torus.lift(p);
            (sys.residual(&z), sys.min_sv(&z))
        });
        let records = self.consolidate_singular(&sys, unique, raw);
        let expected = expected_count(x, y, n);
        Ok(GraphSolution { n, records, expected, warnings: Vec::new(), stats })
    }

    /// Greedily merges singular roots within [`SINGULAR_MERGE_RADIUS`] of the
    /// best remaining one; the merged record sits at the centroid of its group
    /// when that lowers the residual. Nonsingular roots pass through unchanged.
    fn consolidate_singular(&self, sys: &GraphSystem<'_>, pts: Vec<TorusPoint>, raw: Vec<(f64, f64)>) -> Vec<IntersectionRecord> {
        let n = sys.n;
        let record = |p: TorusPoint, residual: f64, sv: f64, merged: usize| IntersectionRecord {
            x_point: p.multiply(n),
            y_solution: p,
            residual,
            n,
            jacobian_min_sv: sv,
            merged,
            classification: Classification::ExpectedIsolated,
        };
        let mut out = Vec::new();
        let mut singular: Vec<usize> = Vec::new();
        for (i, &(_, sv)) in raw.iter().enumerate() {
            if sv < SINGULAR_SV {
                singular.push(i);
            } else {
                out.push(record(pts[i].clone(), raw[i].0, sv, 1));
            }
        }
        singular.sort_by(|&a, &b| raw[a].0.total_cmp(&raw[b].0).then(a.cmp(&b)));
        let reach = SINGULAR_MERGE_RADIUS * self.torus.basis_inverse().norm();
        let near = |a: &TorusPoint, b: &TorusPoint| {
            a.coords().iter().zip(b.coords()).all(|(x, y)| {
                let d = x - y;
                (d - d.round()).abs() <= reach
            }) && self.torus.distance(a, b) <= SINGULAR_MERGE_RADIUS
        };
        let mut taken = vec![false; pts.len()];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for &i in &singular {
            if taken[i] {
                continue;
            }
            let group: Vec<usize> = singular
                .iter()
                .copied()
                .filter(|&j| !taken[j] && near(&pts[i], &pts[j]))
                .collect();
            group.iter().for_each(|&j| taken[j] = true);
            groups.push(group);
        }
        let merged = par::map_slice(&groups, |group| {
            let lead = &pts[group[0]];
            let mut mean = vec![0.0; lead.dim()];
            for &j in group {
                let (_, k) = self.torus.nearest_offset(lead.coords(), pts[j].coords());
                for (m, (c, ki)) in mean.iter_mut().zip(pts[j].coords().iter().zip(&k)) {
                    *m += (c + *ki as f64) / group.len() as f64;
                }
            }
            let centre = crate::torus::reduce_mod_lattice(&mean);
            let zc = self.torus.lift(&centre);
            let rc = sys.residual(&zc);
            if rc <= raw[group[0]].0 {
                record(centre, rc, sys.min_sv(&zc), group.len())
            } else {
                record(lead.clone(), raw[group[0]].0, raw[group[0]].1, group.len())
            }
        });
        out.extend(merged);
        out.sort_by(|a, b| a.y_solution.partial_cmp(&b.y_solution).unwrap());
        out
    }

    /// Flags records lying on positive-dimensional components.
    ///
    /// A record is flagged when its Jacobian is singular and a short curve
    /// trace stays on both divisors, or when the record count exceeds
    /// [`CLUSTER_FACTOR`] times the expected count and the record belongs to a
    /// chain of at least three mutually nearby roots.
    pub fn classify_components(
        &self,
        records: &[IntersectionRecord],
        y: &ThetaDivisor,
        x: &ThetaDivisor,
        n: i64,
        grid_res: u32,
        tol: f64,
    ) -> Result<Vec<IntersectionRecord>, IntersectionError> {
        let sys = self.system(y, x, n)?;
        let expected = expected_count(x, y, n);
        let traced = par::map_slice(records, |r| {
            r.jacobian_min_sv < SINGULAR_SV && sys.traces_curve(&self.torus.lift(&r.y_solution), tol)
        });
        let clustered = if records.len() as u64 > CLUSTER_FACTOR * expected {
            self.chain_members(records, grid_res)
        } else {
            vec![false; records.len()]
        };
        Ok(records
            .iter()
            .zip(traced.iter().zip(&clustered))
            .map(|(r, (&t, &c))| {
                let mut r = r.clone();
                r.classification = if t || c { Classification::UnexpectedPositiveDim } else { Classification::ExpectedIsolated };
                r
            })
            .collect())
    }

    /// Members of link components of size ≥ 3, linking records closer than a
    /// few grid cells.
    fn chain_members(&self, records: &[IntersectionRecord], grid_res: u32) -> Vec<bool> {
        let cell = self.torus.box_half_diagonal(&[1.0 / grid_res as f64; 4]);
        let link = 6.0 * cell;
        let pts: Vec<TorusPoint> = records.iter().map(|r| r.y_solution.clone()).collect();
        let reach = link * self.torus.basis_inverse().norm();
        let nb = (1.0 / reach).floor().max(1.0) as i64;
        let key = |p: &TorusPoint| -> Vec<i64> { p.coords().iter().map(|&c| ((c * nb as f64) as i64).min(nb - 1)).collect() };
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in pts.iter().enumerate() {
            buckets.entry(key(p)).or_default().push(i);
        }
        let mut parent: Vec<usize> = (0..pts.len()).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for (i, p) in pts.iter().enumerate() {
            let k = key(p);
            for off in 0..81usize {
                let mut o = off;
                let nk: Vec<i64> = k
                    .iter()
                    .map(|&ki| {
                        let d = (o % 3) as i64 - 1;
                        o /= 3;
                        (ki + d).rem_euclid(nb)
                    })
                    .collect();
                let Some(list) = buckets.get(&nk) else { continue };
                for &j in list {
                    if j > i && self.torus.distance(p, &pts[j]) <= link {
                        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                        if a != b {
                            parent[a.max(b)] = a.min(b);
                        }
                    }
                }
            }
        }
        let roots: Vec<usize> = (0..pts.len()).map(|i| find(&mut parent, i)).collect();
        let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
        for &r in &roots {
            *sizes.entry(r).or_default() += 1;
        }
        roots.iter().map(|r| sizes[r] >= 3).collect()
    }

    /// Solves and classifies in one call, adding the coarse-grid warning.
    pub fn intersect(&self, y: &ThetaDivisor, x: &ThetaDivisor, n: i64, params: &SolveParams) -> Result<GraphSolution, IntersectionError> {
        let mut sol = self.solve_graph_system(y, x, n, params)?;
        sol.records = self.classify_components(&sol.records, y, x, n, params.grid_res, params.tol)?;
        let tangential = sol.records.iter().filter(|r| r.is_tangential()).count() as u64;
        if tangential > 0 {
            sol.warnings.push(SolveWarning::TangentialRoots { n, count: tangential });
        }
        if sol.is_proper() && tangential == 0 && sol.isolated_count() < sol.expected {
            sol.warnings.push(SolveWarning::GridTooCoarse { n, found: sol.isolated_count(), expected: sol.expected });
        }
        Ok(sol)
    }

    /// Runs [`intersect`](Self::intersect) for every nonzero `n` in the range.
    pub fn properness_scan(
        &self,
        x: &ThetaDivisor,
        y: &ThetaDivisor,
        n_min: i64,
        n_max: i64,
        grid_res: Option<u32>,
        tol: f64,
    ) -> Result<ScanReport, IntersectionError> {
        let mut report = ScanReport { n_range: (n_min, n_max), ..ScanReport::default() };
        for n in (n_min..=n_max).filter(|&n| n != 0) {
            let mut params = SolveParams::for_n(n);
            params.tol = tol;
            if let Some(g) = grid_res {
                params.grid_res = g;
            }
            let sol = self.intersect(y, x, n, &params)?;
            if !sol.is_proper() {
                report.improper_n.push(n);
            }
            let found = if sol.is_proper() { sol.isolated_count() } else { sol.records.len() as u64 };
            report.counts_per_n.insert(n, (found, sol.expected));
            report.warnings.extend(sol.warnings.iter().copied());
            report.solutions.insert(n, sol);
        }
        Ok(report)
    }

    /// Largest distance from a probe point of `X` to the nearest given point.
    pub fn coverage_metric(&self, x: &ThetaDivisor, points: &[TorusPoint], probe_count: usize, seed: u64) -> Result<f64, IntersectionError> {
        if points.is_empty() {
            return Err(IntersectionError::NoPoints);
        }
        let probes = x.bind(&self.torus, &self.engine).sample_points(probe_count, seed)?;
        let probe_pts: Vec<TorusPoint> = probes.into_iter().map(|p| p.point).collect();
        Ok(covering_radius(&self.torus, &probe_pts, points))
    }
}

/// `max_p min_q d(p, q)` over probes `p` and targets `q`.
pub fn covering_radius(torus: &AbelianTorus, probes: &[TorusPoint], targets: &[TorusPoint]) -> f64 {
    // ‖Π v‖ ≥ σ_min ‖v‖ for the centred coordinate difference v gives a cheap lower bound
    let sigma_min = torus.basis().clone().svd(false, false).singular_values.min();
    let nearest = par::map_slice(probes, |p| {
        let mut best = f64::INFINITY;
        for q in targets {
            let lower2: f64 = p.coords().iter().zip(q.coords()).map(|(a, b)| {
                let d = a - b;
                let d = d - d.round();
                d * d
            }).sum();
            if sigma_min * lower2.sqrt() >= best {
                continue;
            }
            best = best.min(torus.distance(p, q));
        }
        best
    });
    nearest.into_iter().fold(0.0, f64::max)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScanReport {
    pub n_range: (i64, i64),
    pub improper_n: Vec<i64>,
    /// `n → (found, expected)`; for improper `n`, found counts all records.
    pub counts_per_n: BTreeMap<i64, (u64, u64)>,
    pub coverage_radius_per_n: BTreeMap<i64, f64>,
    pub warnings: Vec<SolveWarning>,
    #[serde(skip)]
    pub solutions: BTreeMap<i64, GraphSolution>,
}

/// Solves on a fresh engine; see [`IntersectionLab::intersect`].
pub fn solve_graph_system(
    torus: &AbelianTorus,
    y: &ThetaDivisor,
    x: &ThetaDivisor,
    n: i64,
    params: &SolveParams,
) -> Result<GraphSolution, IntersectionError> {
    IntersectionLab::new(torus.clone(), params.theta_tol)?.intersect(y, x, n, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::{task_rng, Stream};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn torus() -> AbelianTorus {
        AbelianTorus::from_entries(2, &[c(0.13, 1.07), c(0.31, 0.27), c(0.31, 0.27), c(-0.22, 1.19)]).unwrap()
    }

    fn generic_translate() -> ThetaDivisor {
        ThetaDivisor::translated(vec![c(0.137, 0.291), c(-0.213, 0.177)])
    }

    #[test]
    fn expected_dimension_cases() {
        assert_eq!(expected_dimension(1, 1, 2), ExpectedDimension::Dim(0));
        assert_eq!(expected_dimension(2, 1, 2), ExpectedDimension::Dim(1));
        assert_eq!(expected_dimension(1, 1, 3), ExpectedDimension::Empty);
        assert_eq!(expected_dimension(0, 0, 2).to_string(), "-inf");
    }

    #[test]
    fn expected_count_cases() {
        let theta = ThetaDivisor::principal(2);
        assert_eq!(expected_count(&theta, &theta, 1), 2);
        assert_eq!(expected_count(&theta, &theta, -3), 18);
        let doubled = ThetaDivisor::new(theta.characteristic().clone(), vec![c(0.0, 0.0); 2], 2).unwrap();
        assert_eq!(expected_count(&doubled, &theta, 1), 8);
    }

    #[test]
    fn default_grid_grows_past_five() {
        assert_eq!(default_grid(-5), BASE_GRID);
        assert_eq!(default_grid(10), 2 * BASE_GRID);
        assert!(default_grid(7) > BASE_GRID);
    }

    #[test]
    fn bad_parameters_are_rejected() {
        let lab = IntersectionLab::new(torus(), THETA_TOL).unwrap();
        let d = generic_translate();
        let mut p = SolveParams::for_n(1);
        assert!(matches!(lab.solve_graph_system(&d, &d, 0, &p), Err(IntersectionError::ZeroMultiplier)));
        p.grid_res = 8;
        assert!(matches!(lab.solve_graph_system(&d, &d, 1, &p), Err(IntersectionError::BadGrid(8))));
        p.grid_res = 32;
        p.tol = 0.0;
        assert!(matches!(lab.solve_graph_system(&d, &d, 1, &p), Err(IntersectionError::BadTolerance(_))));
    }

    #[test]
    fn generic_counts_for_small_n() {
        let t = torus();
        let lab = IntersectionLab::new(t.clone(), THETA_TOL).unwrap();
        let x = ThetaDivisor::principal(2);
        let y = generic_translate();
        for n in [1, 2, -2] {
            let sol = lab.intersect(&y, &x, n, &SolveParams::for_n(n)).unwrap();
            assert_eq!(sol.isolated_count(), 2 * (n * n) as u64, "n = {n}");
            assert!(sol.warnings.is_empty());
            for r in &sol.records {
                assert!(r.residual <= ROOT_TOL);
                assert!(r.jacobian_min_sv > 1e-4);
                assert!(t.distance(&r.x_point, &r.y_solution.multiply(n)) < 1e-12);
                assert!(y.bind(&t, lab.engine()).residual(&r.y_solution) <= ROOT_TOL);
                assert!(x.bind(&t, lab.engine()).residual(&r.x_point) <= ROOT_TOL);
            }
        }
    }

    #[test]
    fn self_intersection_at_one_is_improper() {
        let lab = IntersectionLab::new(torus(), THETA_TOL).unwrap();
        let d = generic_translate();
        let mut p = SolveParams::for_n(1);
        p.grid_res = 32;
        let sol = lab.intersect(&d, &d, 1, &p).unwrap();
        assert!(!sol.is_proper());
        assert!(sol.records.iter().any(|r| r.classification == Classification::UnexpectedPositiveDim));
    }

    #[test]
    fn second_order_bound_holds_on_random_pairs() {
        let t = torus();
        let lab = IntersectionLab::new(t.clone(), THETA_TOL).unwrap();
        let d = generic_translate();
        let bound = d.bind(&t, lab.engine());
        let curvature = bound.value_curvature();
        let mut rng = task_rng(11, Stream::Coverage, 0);
        for _ in 0..300 {
            let a: Vec<f64> = (0..4).map(|_| rng.gen::<f64>()).collect();
            let centre = t.lift_coords(&a);
            let r = 0.05 * rng.gen::<f64>();
            let dir: Vec<f64> = (0..4).map(|_| rng.gen::<f64>() - 0.5).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let p: Vec<C64> = (0..2).map(|j| centre[j] + c(dir[j], dir[j + 2]) * (r / norm)).collect();
            let (v, cols) = bound.local_jet(&centre);
            let lower = v.norm() - real_op_norm(&cols) * r - 0.5 * curvature * r * r;
            assert!(bound.local_at(&p, false).modulus() >= lower - 1e-12);
        }
    }

    #[test]
    fn real_op_norm_matches_svd() {
        let cols = [c(1.0, 2.0), c(-0.5, 0.3), c(0.0, -1.5), c(2.0, 0.1)];
        let m = nalgebra::DMatrix::from_fn(2, 4, |i, j| if i == 0 { cols[j].re } else { cols[j].im });
        let s = m.svd(false, false).singular_values.max();
        assert!((real_op_norm(&cols) - s).abs() < 1e-12);
    }

    #[test]
    fn covering_radius_basics() {
        let t = torus();
        let pts: Vec<TorusPoint> = [[0.1, 0.2, 0.3, 0.4], [0.9, 0.5, 0.0, 0.7]]
            .iter()
            .map(|a| TorusPoint::new(a.to_vec()).unwrap())
            .collect();
        assert_eq!(covering_radius(&t, &pts, &pts), 0.0);
        let single = vec![pts[0].clone()];
        assert!((covering_radius(&t, &pts, &single) - t.distance(&pts[1], &pts[0])).abs() < 1e-15);
    }
}
