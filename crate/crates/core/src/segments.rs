//! Lifts of the graph of `[n]` over the fundamental parallelogram.
//!
//! The graph `{(x, n·x)}` of multiplication by `n` lifts to the affine
//! subspaces `L_{n,a} = {(x, n·x + a)}` with `a ∈ ℤ^{2g}`. A segment is one
//! such lift restricted to `[0,1)^{2g} × [0,1)^{2g}`; coordinatewise it is the
//! set of `x_i ∈ [0,1)` with `n·x_i + a_i ∈ [0,1)`.
//!
//! For `n > 0` the feasible offsets are `a_i ∈ {-(n-1), …, 0}`. For `n < 0`
//! they are `a_i ∈ {0, …, |n|}`; the offset `a_i = 0` is feasible only at
//! `x_i = 0`, so those segments are degenerate in that coordinate.

use std::fmt;

use num_rational::Ratio;
use serde::Serialize;

use crate::divisor::ThetaDivisor;
use crate::intersection::{Classification, IntersectionError, IntersectionLab, SolveParams};
use crate::numeric::floor_mul;
use crate::torsion::bad_indices;
use crate::torus::{AbelianTorus, TorusPoint};

/// A real interval with exact rational endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interval {
    pub lo: Ratio<i64>,
    pub hi: Ratio<i64>,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    pub fn contains_ratio(&self, x: Ratio<i64>) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }

    pub fn length(&self) -> Ratio<i64> {
        if self.is_empty() {
            Ratio::from_integer(0)
        } else {
            self.hi - self.lo
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = if self.lo_closed { '[' } else { '(' };
        let r = if self.hi_closed { ']' } else { ')' };
        write!(f, "{l}{}, {}{r}", self.lo, self.hi)
    }
}

/// Feasible `x ∈ [0,1)` with `n·x + a ∈ [0,1)`, or `None` if there are none.
pub fn coordinate_interval(n: i64, a: i64) -> Option<Interval> {
    assert!(n != 0, "multiplier must be nonzero");
    // n > 0: x ∈ [-a/n, (1-a)/n);  n < 0: x ∈ ((a-1)/|n|, a/|n|]
    let mut iv = if n > 0 {
        Interval { lo: Ratio::new(-a, n), hi: Ratio::new(1 - a, n), lo_closed: true, hi_closed: false }
    } else {
        Interval { lo: Ratio::new(a - 1, -n), hi: Ratio::new(a, -n), lo_closed: false, hi_closed: true }
    };
    let zero = Ratio::from_integer(0);
    let one = Ratio::from_integer(1);
    if iv.lo < zero {
        iv.lo = zero;
        iv.lo_closed = true;
    }
    if iv.hi >= one {
        iv.hi = one;
        iv.hi_closed = false;
    }
    (!iv.is_empty()).then_some(iv)
}

/// Offsets `a_i` with a nonempty coordinate interval, in increasing order.
pub fn feasible_offsets(n: i64) -> std::ops::RangeInclusive<i64> {
    assert!(n != 0, "multiplier must be nonzero");
    if n > 0 {
        -(n - 1)..=0
    } else {
        0..=-n
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SegmentDescriptor {
    n: i64,
    a: Vec<i64>,
    intervals: Vec<Interval>,
}

impl SegmentDescriptor {
    /// The segment with offset `a`, or `None` when it misses the parallelogram.
    pub fn new(n: i64, a: Vec<i64>) -> Option<Self> {
        let intervals = a.iter().map(|&ai| coordinate_interval(n, ai)).collect::<Option<Vec<_>>>()?;
        Some(Self { n, a, intervals })
    }

    pub fn n(&self) -> i64 {
        self.n
    }

    pub fn offset(&self) -> &[i64] {
        &self.a
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    /// Naive height `max(|n|, max |a_i|)`.
    pub fn height(&self) -> u64 {
        self.a.iter().map(|x| x.unsigned_abs()).fold(self.n.unsigned_abs(), u64::max)
    }

    /// Whether `y` lies over this segment, decided exactly.
    pub fn contains(&self, y: &TorusPoint) -> bool {
        y.coords().len() == self.a.len()
            && y.coords().iter().zip(&self.a).all(|(&x, &a)| floor_mul(self.n, x) == -a)
    }

    /// True when some coordinate interval is a single point.
    pub fn is_degenerate(&self) -> bool {
        self.intervals.iter().any(|iv| iv.lo == iv.hi)
    }
}

/// Flat record of a segment: offsets and intervals joined by spaces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SegmentRow {
    pub n: i64,
    pub offset: String,
    pub height: u64,
    pub intervals: String,
}

impl SegmentDescriptor {
    pub fn to_row(&self) -> SegmentRow {
        let join = |v: Vec<String>| v.join(" ");
        SegmentRow {
            n: self.n,
            offset: join(self.a.iter().map(i64::to_string).collect()),
            height: self.height(),
            intervals: join(self.intervals.iter().map(Interval::to_string).collect()),
        }
    }
}

/// Number of segments, `|n|^{2g}` for `n > 0` and `(|n|+1)^{2g}` for `n < 0`.
pub fn segment_count(n: i64, g: usize) -> u128 {
    assert!(n != 0, "multiplier must be nonzero");
    let per = if n > 0 { n as u128 } else { n.unsigned_abs() as u128 + 1 };
    per.checked_pow(2 * g as u32).expect("segment count exceeds u128")
}

/// Lazy odometer over all segments of `[n]` on a `g`-dimensional torus.
#[derive(Debug, Clone)]
pub struct Segments {
    n: i64,
    lo: i64,
    hi: i64,
    digits: Vec<i64>,
    remaining: u128,
}

pub fn enumerate_segments(n: i64, g: usize) -> Segments {
    let r = feasible_offsets(n);
    let (lo, hi) = (*r.start(), *r.end());
    Segments { n, lo, hi, digits: vec![lo; 2 * g], remaining: segment_count(n, g) }
}

impl Iterator for Segments {
    type Item = SegmentDescriptor;

    fn next(&mut self) -> Option<SegmentDescriptor> {
        if self.remaining == 0 {
            return None;
        }
        let out = SegmentDescriptor::new(self.n, self.digits.clone()).expect("feasible offsets");
        self.remaining -= 1;
        for d in self.digits.iter_mut() {
            if *d < self.hi {
                *d += 1;
                break;
            }
            *d = self.lo;
        }
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = usize::try_from(self.remaining).unwrap_or(usize::MAX);
        (r, usize::try_from(self.remaining).ok())
    }
}

/// The segment whose lift carries `y`: `a_i = frac(n·y_i) - n·y_i = -⌊n·y_i⌋`.
pub fn attribute_solution(y: &TorusPoint, n: i64) -> SegmentDescriptor {
    let a = y.coords().iter().map(|&x| -floor_mul(n, x)).collect();
    SegmentDescriptor::new(n, a).expect("every point lies over some segment")
}

/// Summary line for one multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SegmentSummary {
    pub n: i64,
    pub count: u128,
    pub max_height: u64,
}

/// Count and maximal height, by enumeration when `count ≤ limit`.
pub fn summarize(n: i64, g: usize, limit: u128) -> SegmentSummary {
    let count = segment_count(n, g);
    let max_height = if count <= limit {
        enumerate_segments(n, g).map(|s| s.height()).max().unwrap_or(0)
    } else {
        // the offsets range over a box whose extreme corner has height |n|
        n.unsigned_abs()
    };
    SegmentSummary { n, count, max_height }
}

/// Which setting a census was run in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CensusRegime {
    /// `X = {x}`, `Y = {y}`: `dim X + dim Y < dim A`, the setting of the growth bound.
    PointPair,
    /// Two divisors on a surface: intersections avoiding balls around `V`,
    /// a structural analogue only.
    DivisorPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CensusRow {
    pub n: i64,
    pub bad_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensusReport {
    pub regime: CensusRegime,
    pub eps: f64,
    pub rows: Vec<CensusRow>,
    /// Number of `n` with a nonzero count.
    pub bad_n: u64,
    /// Multipliers whose intersection had positive-dimensional components.
    pub improper_n: Vec<i64>,
    /// Least-squares slope of `log(cumulative bad n)` against `log n`.
    pub fitted_exponent: Option<f64>,
}

impl CensusReport {
    fn new(regime: CensusRegime, eps: f64, rows: Vec<CensusRow>, improper_n: Vec<i64>) -> Self {
        let bad_n = rows.iter().filter(|r| r.bad_count > 0).count() as u64;
        let fitted_exponent = fit_growth_exponent(&rows);
        Self { regime, eps, rows, bad_n, improper_n, fitted_exponent }
    }

    pub fn bad_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            self.bad_n as f64 / self.rows.len() as f64
        }
    }
}

fn fit_growth_exponent(rows: &[CensusRow]) -> Option<f64> {
    let mut cumulative = 0u64;
    let mut pts = Vec::new();
    for r in rows {
        if r.bad_count > 0 {
            cumulative += 1;
        }
        if cumulative > 0 && r.n > 1 {
            pts.push(((r.n as f64).ln(), (cumulative as f64).ln()));
        }
    }
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn outside_balls(torus: &AbelianTorus, p: &TorusPoint, v: &[TorusPoint], eps: f64) -> bool {
    v.iter().all(|q| torus.distance(p, q) >= eps)
}

/// Point-pair census: `n ≤ n_max` is bad when `n·y` lies within `eps` of `x`
/// and `x` is at least `eps` from every point of `v`.
pub fn point_census(torus: &AbelianTorus, x: &TorusPoint, y: &TorusPoint, n_max: u64, eps: f64, v: &[TorusPoint]) -> CensusReport {
    let bad = if outside_balls(torus, x, v, eps) {
        bad_indices(torus, &[x], std::slice::from_ref(y), n_max, eps)
    } else {
        Vec::new()
    };
    let mut rows: Vec<CensusRow> = (1..=n_max as i64).map(|n| CensusRow { n, bad_count: 0 }).collect();
    for n in bad {
        rows[n as usize - 1].bad_count = 1;
    }
    CensusReport::new(CensusRegime::PointPair, eps, rows, Vec::new())
}

/// Divisor census: for each `1 ≤ n ≤ n_max`, the isolated points of `X ∩ [n]Y`
/// at distance at least `eps` from every point of `v`. Improper `n` count 0 and
/// are listed separately.
pub fn bad_n_census(
    lab: &IntersectionLab,
    x: &ThetaDivisor,
    y: &ThetaDivisor,
    n_max: i64,
    v: &[TorusPoint],
    eps: f64,
    grid_res: Option<u32>,
) -> Result<CensusReport, IntersectionError> {
    let torus = lab.torus();
    let mut rows = Vec::new();
    let mut improper = Vec::new();
    for n in 1..=n_max {
        let mut params = SolveParams::for_n(n);
        if let Some(g) = grid_res {
            params.grid_res = g;
        }
        let sol = lab.intersect(y, x, n, &params)?;
        if !sol.is_proper() {
            improper.push(n);
        }
        let bad_count = sol
            .records
            .iter()
            .filter(|r| r.classification == Classification::ExpectedIsolated && outside_balls(torus, &r.x_point, v, eps))
            .count() as u64;
        rows.push(CensusRow { n, bad_count: if sol.is_proper() { bad_count } else { 0 } });
    }
    Ok(CensusReport::new(CensusRegime::DivisorPair, eps, rows, improper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_integer::Integer;
    use proptest::prelude::*;

    fn common_denominator(ivs: &[Interval]) -> i64 {
        ivs.iter().fold(1i64, |acc, iv| acc.lcm(iv.lo.denom()).lcm(iv.hi.denom()))
    }

    /// Feasibility by testing the points j/(2|n|), j = 0..2|n|, in integer arithmetic.
    fn brute_feasible(n: i64, a: i64) -> bool {
        let m = 2 * n.abs();
        (0..m).any(|j| {
            let v = n * j + a * m;
            (0..m).contains(&v)
        })
    }

    #[test]
    fn small_cases() {
        assert_eq!(enumerate_segments(1, 3).count(), 1);
        assert_eq!(enumerate_segments(1, 1).next().unwrap().offset(), &[0, 0]);
        let two: Vec<Vec<i64>> = enumerate_segments(2, 1).map(|s| s.offset().to_vec()).collect();
        assert_eq!(two.len(), 4);
        for a in [[-1, -1], [-1, 0], [0, -1], [0, 0]] {
            assert!(two.contains(&a.to_vec()));
        }
        assert_eq!(enumerate_segments(3, 2).count(), 81);
        assert_eq!(segment_count(2, 2), 16);
        assert_eq!(segment_count(50, 3), 15_625_000_000);
    }

    #[test]
    fn counts_match_closed_form() {
        for g in 1..=3 {
            for n in 1..=12i64 {
                if segment_count(n, g) > 3_000_000 {
                    continue;
                }
                assert_eq!(enumerate_segments(n, g).count() as u128, segment_count(n, g));
            }
        }
    }

    #[test]
    fn brute_force_feasibility_agrees() {
        for n in (-6..=6i64).filter(|&n| n != 0) {
            let feasible: Vec<i64> = (-4 * n.abs()..=4 * n.abs()).filter(|&a| brute_feasible(n, a)).collect();
            let ours: Vec<i64> = feasible_offsets(n).collect();
            assert_eq!(feasible, ours, "n = {n}");
            for a in -4 * n.abs()..=4 * n.abs() {
                assert_eq!(coordinate_interval(n, a).is_some(), brute_feasible(n, a), "n = {n}, a = {a}");
            }
        }
    }

    #[test]
    fn heights_bounded_by_n() {
        for n in (-8..=8i64).filter(|&n| n != 0) {
            assert!(enumerate_segments(n, 2).all(|s| s.height() <= n.unsigned_abs()));
        }
    }

    #[test]
    fn intervals_tile_unit_interval() {
        for n in (-12..=12i64).filter(|&n| n != 0) {
            let mut ivs: Vec<Interval> = feasible_offsets(n).filter_map(|a| coordinate_interval(n, a)).collect();
            ivs.sort_by(|x, y| x.lo.cmp(&y.lo).then(x.hi.cmp(&y.hi)));
            let total: Ratio<i64> = ivs.iter().map(Interval::length).sum();
            assert_eq!(total, Ratio::from_integer(1));
            // every probe point of a fine common grid lies in exactly one interval
            let d = 4 * common_denominator(&ivs);
            for j in 0..d {
                let x = Ratio::new(j, d);
                assert_eq!(ivs.iter().filter(|iv| iv.contains_ratio(x)).count(), 1, "n = {n}, x = {x}");
            }
        }
    }

    #[test]
    fn attribution_examples() {
        let y = TorusPoint::new(vec![0.6, 0.1]).unwrap();
        assert_eq!(attribute_solution(&y, 2).offset(), &[-1, 0]);
        let o = TorusPoint::origin(4);
        for n in [-3, 1, 5] {
            assert!(attribute_solution(&o, n).offset().iter().all(|&a| a == 0));
        }
    }

    #[test]
    fn negative_multiplier_has_degenerate_corner() {
        let s = SegmentDescriptor::new(-2, vec![0]).unwrap();
        assert!(s.is_degenerate());
        assert!(s.contains(&TorusPoint::new(vec![0.0]).unwrap()));
        assert_eq!(segment_count(-2, 1), 9);
    }

    fn test_torus() -> AbelianTorus {
        let c = crate::C64::new;
        AbelianTorus::from_entries(2, &[c(0.13, 1.07), c(0.31, 0.27), c(0.31, 0.27), c(-0.22, 1.19)]).unwrap()
    }

    #[test]
    fn point_census_on_torsion_orbit() {
        let t = test_torus();
        let x = TorusPoint::origin(4);
        let y = TorusPoint::new(vec![0.2, 0.4, 0.6, 0.8]).unwrap();
        let r = point_census(&t, &x, &y, 100, 1e-6, &[]);
        assert_eq!(r.regime, CensusRegime::PointPair);
        assert_eq!(r.bad_n, 20);
        assert!(r.rows.iter().all(|row| (row.bad_count == 1) == (row.n % 5 == 0)));
        let fit = r.fitted_exponent.unwrap();
        assert!((fit - 1.0).abs() < 0.2, "fit {fit}");
        let shielded = point_census(&t, &x, &y, 100, 1e-6, &[TorusPoint::origin(4)]);
        assert_eq!(shielded.bad_n, 0);
    }

    #[test]
    fn point_census_is_monotone_in_eps() {
        let t = test_torus();
        let x = TorusPoint::new(vec![0.31, 0.77, 0.05, 0.52]).unwrap();
        let y = TorusPoint::new(vec![0.618_033_988_749_894_8, 0.414_213_562_373_095, 0.732_050_807_568_877_2, 0.718_281_828_459_045]).unwrap();
        let wide = point_census(&t, &x, &y, 5000, 0.2, &[]);
        let narrow = point_census(&t, &x, &y, 5000, 0.1, &[]);
        assert!(wide.bad_n > 0);
        assert!(narrow.bad_n <= wide.bad_n);
        for (a, b) in narrow.rows.iter().zip(&wide.rows) {
            assert!(a.bad_count <= b.bad_count);
        }
    }

    #[test]
    fn divisor_census_and_attribution() {
        let t = test_torus();
        let lab = IntersectionLab::new(t.clone(), 1e-12).unwrap();
        let c = crate::C64::new;
        let x = ThetaDivisor::principal(2);
        let y = ThetaDivisor::translated(vec![c(0.137, 0.291), c(-0.213, 0.177)]);
        let open = bad_n_census(&lab, &x, &y, 2, &[], 1e-6, None).unwrap();
        assert_eq!(open.regime, CensusRegime::DivisorPair);
        assert_eq!(open.rows.iter().map(|r| r.bad_count).collect::<Vec<_>>(), vec![2, 8]);

        let sol = lab.intersect(&y, &x, 1, &SolveParams::for_n(1)).unwrap();
        let v: Vec<TorusPoint> = sol.records.iter().map(|r| r.x_point.clone()).collect();
        let shielded = bad_n_census(&lab, &x, &y, 1, &v, 1e-6, None).unwrap();
        assert_eq!(shielded.rows[0].bad_count, 0);

        let sol = lab.intersect(&y, &x, 2, &SolveParams::for_n(2)).unwrap();
        let all: Vec<SegmentDescriptor> = enumerate_segments(2, 2).collect();
        for r in &sol.records {
            let s = attribute_solution(&r.y_solution, 2);
            assert!(all.contains(&s));
            assert!(s.contains(&r.y_solution));
        }
    }

    proptest! {
        #[test]
        fn attribution_is_sound(n in -12i64..=12, ys in proptest::collection::vec(0.0f64..1.0, 4)) {
            prop_assume!(n != 0);
            let y = TorusPoint::new(ys).unwrap();
            let s = attribute_solution(&y, n);
            prop_assert!(s.contains(&y));
            prop_assert!(feasible_offsets(n).contains(&s.offset()[0]));
            let ny = y.multiply(n);
            for i in 0..4 {
                let lifted = n as f64 * y.coords()[i] + s.offset()[i] as f64;
                prop_assert!((lifted - ny.coords()[i]).abs() < 1e-9 || (lifted - ny.coords()[i]).abs() > 1.0 - 1e-9);
            }
        }
    }
}
