//! Congruence conditions forced by torsion pairs and the density of their union.
//!
//! A pair `(t, t')` of torsion points can lie on the graph of `[n]` only when
//! `t' ∈ ⟨t⟩`, and then exactly for `n ≡ e (mod k)` with `k` the order of `t`
//! and `e` the least exponent with `e·t = t'`. The set of `n` satisfying at
//! least one such condition has a rational natural density.

use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::par;
use crate::torus::{torsion_order, AbelianTorus, TorsionPoint, TorusPoint};

/// Largest modulus handled by residue enumeration.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;
/// Largest number of conditions handled by inclusion–exclusion.
pub const INCLUSION_EXCLUSION_LIMIT: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DensityError {
    #[error("modulus of {count} conditions exceeds the exact-arithmetic budget")]
    ModulusOverflow { count: usize },
    #[error("condition needs 0 <= e < k, got e = {e}, k = {k}")]
    BadCondition { e: u64, k: u64 },
}

/// `n ≡ e (mod k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CongruenceCondition {
    e: u64,
    k: u64,
}

impl CongruenceCondition {
    pub fn new(e: u64, k: u64) -> Result<Self, DensityError> {
        if k == 0 || e >= k {
            return Err(DensityError::BadCondition { e, k });
        }
        Ok(Self { e, k })
    }

    pub fn e(&self) -> u64 {
        self.e
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn holds(&self, n: u64) -> bool {
        n % self.k == self.e
    }
}

impl fmt::Display for CongruenceCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n ≡ {} (mod {})", self.e, self.k)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DensityResult {
    pub delta: Ratio<u128>,
    pub conditions: Vec<CongruenceCondition>,
    /// lcm of the moduli; `delta · modulus` is an integer.
    pub modulus: u128,
}

impl DensityResult {
    pub fn delta_f64(&self) -> f64 {
        self.delta.to_f64().unwrap_or(f64::NAN)
    }
}

/// Solves `x ≡ r1 (mod m1)`, `x ≡ r2 (mod m2)`; returns `(x, lcm)` with `0 ≤ x < lcm`.
fn crt_pair(r1: u128, m1: u128, r2: u128, m2: u128) -> Option<Option<(u128, u128)>> {
    let g = m1.gcd(&m2);
    let (r1i, r2i) = (r1 as i128, r2 as i128);
    if (r2i - r1i).rem_euclid(g as i128) != 0 {
        return Some(None);
    }
    let l = match (m1 / g).checked_mul(m2) {
        Some(l) if l <= i128::MAX as u128 => l,
        _ => return None,
    };
    // x = r1 + m1 · ((r2 - r1)/g · inv(m1/g mod m2/g))
    let m2g = (m2 / g) as i128;
    let inv = mod_inverse((m1 / g) as i128, m2g);
    let t = (((r2i - r1i) / g as i128).rem_euclid(m2g) * inv).rem_euclid(m2g);
    let x = (r1i + (m1 as i128).checked_mul(t)?).rem_euclid(l as i128);
    Some(Some((x as u128, l)))
}

fn mod_inverse(a: i128, m: i128) -> i128 {
    if m == 1 {
        return 0;
    }
    let ext = a.rem_euclid(m).extended_gcd(&m);
    debug_assert_eq!(ext.gcd, 1);
    ext.x.rem_euclid(m)
}

/// Least `e ∈ [0, k)` with `e·t = t'`, where `k` is the order of `t`.
///
/// Each coordinate `p/q` of `t` gives `e·p/q ≡ p'/q' (mod 1)`, solvable iff
/// `q' | q`, with unique solution `e ≡ p⁻¹ p' (q/q') (mod q)`. The coordinate
/// solutions are merged by the Chinese remainder theorem.
pub fn solve_discrete_log(t: &TorsionPoint, t_prime: &TorsionPoint) -> Option<CongruenceCondition> {
    if t.dim() != t_prime.dim() {
        return None;
    }
    let (mut r, mut m) = (0u128, 1u128);
    for (c, cp) in t.coords().iter().zip(t_prime.coords()) {
        let (p, q) = (*c.numer() as i128, *c.denom() as i128);
        let (pp, qp) = (*cp.numer() as i128, *cp.denom() as i128);
        if q % qp != 0 {
            return None;
        }
        let target = (pp * (q / qp)).rem_euclid(q);
        let e = (mod_inverse(p, q) * target).rem_euclid(q);
        let (x, l) = crt_pair(r, m, e as u128, q as u128)??;
        r = x;
        m = l;
    }
    let k = torsion_order(t) as u64;
    debug_assert_eq!(m, k as u128);
    CongruenceCondition::new(r as u64, k).ok()
}

/// A matched torsion pair with its congruence condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TorsionPair {
    pub t: TorsionPoint,
    pub t_prime: TorsionPoint,
    pub condition: CongruenceCondition,
}

/// All pairs `(t, t')` with `t ∈ ys`, `t' ∈ xs` and `t' ∈ ⟨t⟩`, in input order.
pub fn find_torsion_pairs(ys: &[TorsionPoint], xs: &[TorsionPoint]) -> Vec<TorsionPair> {
    let mut out = Vec::new();
    for t in ys {
        for tp in xs {
            if let Some(condition) = solve_discrete_log(t, tp) {
                out.push(TorsionPair { t: t.clone(), t_prime: tp.clone(), condition });
            }
        }
    }
    out
}

/// The matched points `t'`, without repetition, in first-seen order.
pub fn exceptional_set(pairs: &[TorsionPair]) -> Vec<TorsionPoint> {
    let mut v: Vec<TorsionPoint> = Vec::new();
    for p in pairs {
        if !v.contains(&p.t_prime) {
            v.push(p.t_prime.clone());
        }
    }
    v
}

fn checked_lcm(conditions: &[CongruenceCondition]) -> Option<u128> {
    conditions.iter().try_fold(1u128, |acc, c| {
        let k = c.k as u128;
        (acc / acc.gcd(&k)).checked_mul(k).filter(|&l| l <= i128::MAX as u128)
    })
}

fn canonical(conditions: &[CongruenceCondition]) -> Vec<CongruenceCondition> {
    let mut v = conditions.to_vec();
    v.sort();
    v.dedup();
    v
}

/// Density by counting residues modulo the lcm; `None` if the lcm exceeds `limit`.
pub fn density_by_enumeration(conditions: &[CongruenceCondition], limit: u64) -> Option<DensityResult> {
    let l = checked_lcm(conditions)?;
    if l > limit as u128 {
        return None;
    }
    let l = l as u64;
    let conds = canonical(conditions);
    const BLOCK: u64 = 1 << 14;
    let blocks = l.div_ceil(BLOCK) as usize;
    let counts = par::map_range(blocks, |b| {
        let lo = b as u64 * BLOCK;
        let hi = (lo + BLOCK).min(l);
        (lo..hi).filter(|&r| conds.iter().any(|c| c.holds(r))).count() as u128
    });
    let hits: u128 = counts.into_iter().sum();
    Some(DensityResult { delta: Ratio::new(hits, l as u128), conditions: conditions.to_vec(), modulus: l as u128 })
}

/// Density by inclusion–exclusion over consistent subsets.
pub fn density_by_inclusion_exclusion(conditions: &[CongruenceCondition]) -> Result<DensityResult, DensityError> {
    let overflow = DensityError::ModulusOverflow { count: conditions.len() };
    let conds = canonical(conditions);
    if conds.len() > INCLUSION_EXCLUSION_LIMIT {
        return Err(overflow);
    }
    let l = checked_lcm(&conds).ok_or(overflow.clone())?;
    // Σ_S (-1)^{|S|+1} [S consistent] · L / lcm(S); inconsistent S prunes all supersets
    fn walk(conds: &[CongruenceCondition], start: usize, r: u128, m: u128, size: usize, l: u128, acc: &mut i128) -> Option<()> {
        for i in start..conds.len() {
            let c = conds[i];
            if let Some((r2, m2)) = crt_pair(r, m, c.e as u128, c.k as u128)? {
                let term = (l / m2) as i128;
                *acc = if size % 2 == 0 { acc.checked_add(term)? } else { acc.checked_sub(term)? };
                walk(conds, i + 1, r2, m2, size + 1, l, acc)?;
            }
        }
        Some(())
    }
    let mut acc = 0i128;
    walk(&conds, 0, 0, 1, 0, l, &mut acc).ok_or(overflow)?;
    debug_assert!(acc >= 0);
    Ok(DensityResult { delta: Ratio::new(acc as u128, l), conditions: conditions.to_vec(), modulus: l })
}

/// Density of `{n : n ≡ e_i (mod k_i) for some i}`.
pub fn density_of_union(conditions: &[CongruenceCondition]) -> Result<DensityResult, DensityError> {
    match density_by_enumeration(conditions, ENUMERATION_LIMIT) {
        Some(d) => Ok(d),
        None => density_by_inclusion_exclusion(conditions),
    }
}

/// Fraction of `n ∈ [1, N]` for which some `n·y` (with `y ∈ ys`) comes within
/// `eps` of some `x ∈ xs` lying farther than `eps` from every point of `v`.
pub fn empirical_bad_fraction_sets(
    torus: &AbelianTorus,
    xs: &[TorusPoint],
    ys: &[TorusPoint],
    n_max: u64,
    eps: f64,
    v: &[TorusPoint],
) -> f64 {
    if n_max == 0 {
        return 0.0;
    }
    let live: Vec<&TorusPoint> = xs.iter().filter(|x| v.iter().all(|p| torus.distance(x, p) >= eps)).collect();
    if live.is_empty() {
        return 0.0;
    }
    bad_indices(torus, &live, ys, n_max, eps).len() as f64 / n_max as f64
}

/// The `n ∈ [1, N]` for which some `n·y` is within `eps` of some point of `xs`.
pub(crate) fn bad_indices(torus: &AbelianTorus, xs: &[&TorusPoint], ys: &[TorusPoint], n_max: u64, eps: f64) -> Vec<u64> {
    const BLOCK: u64 = 1024;
    let blocks = n_max.div_ceil(BLOCK) as usize;
    par::flat_map_range(blocks, |b| {
        let lo = b as u64 * BLOCK + 1;
        let hi = (lo + BLOCK - 1).min(n_max);
        (lo..=hi)
            .filter(|&n| {
                ys.iter().any(|y| {
                    let ny = y.multiply(n as i64);
                    xs.iter().any(|x| torus.distance(x, &ny) < eps)
                })
            })
            .collect()
    })
}

/// Single-pair form of [`empirical_bad_fraction_sets`].
pub fn empirical_bad_fraction(torus: &AbelianTorus, x: &TorusPoint, y: &TorusPoint, n_max: u64, eps: f64, v: &[TorusPoint]) -> f64 {
    empirical_bad_fraction_sets(torus, std::slice::from_ref(x), std::slice::from_ref(y), n_max, eps, v)
}

/// Exact fraction string such as `"2/3"`, or `"0"`.
pub fn format_delta(delta: &Ratio<u128>) -> String {
    if delta.is_zero() {
        "0".to_string()
    } else if delta.is_integer() {
        delta.numer().to_string()
    } else {
        format!("{}/{}", delta.numer(), delta.denom())
    }
}
