//! Scenario files, report writing and run orchestration.
//!
//! One JSON scenario file describes one run. Parsing materializes every
//! default, so the serialized [`Scenario`] is a complete record of what ran and
//! its SHA-256 is the scenario hash in the manifest. All outputs go to one
//! directory; every file is written to a temporary name and renamed into place.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::divisor::{DivisorError, ThetaDivisor};
use crate::equidist::{approximating_translates, discrepancy_estimate, orbit, weyl_sum, EquidistError};
use crate::intersection::{covering_radius, IntersectionError, IntersectionLab};
use crate::segments::{attribute_solution, bad_n_census, enumerate_segments, point_census, segment_count, summarize, CensusReport};
use crate::theta::{ThetaCharacteristic, ThetaError};
use crate::torsion::{
    density_of_union, exceptional_set, find_torsion_pairs, format_delta, CongruenceCondition, DensityError,
};
use crate::torus::{parse_fraction, AbelianTorus, Fraction, TorsionPoint, TorusError, TorusPoint};
use crate::C64;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

const MAX_SCAN_N: i64 = 1000;
const MAX_N_LIMIT: u64 = 100_000_000;
const MAX_PROBES: usize = 100_000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("numerical budget exhausted: {0}")]
    Budget(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Parse { .. } | HarnessError::Validation(_) => 2,
            HarnessError::Budget(_) => 3,
            HarnessError::Internal(_) => 4,
        }
    }
}

fn invalid(msg: impl Display) -> HarnessError {
    HarnessError::Validation(msg.to_string())
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Internal(e.to_string())
    }
}

impl From<TorusError> for HarnessError {
    fn from(e: TorusError) -> Self {
        invalid(e)
    }
}

impl From<ThetaError> for HarnessError {
    fn from(e: ThetaError) -> Self {
        invalid(e)
    }
}

impl From<DivisorError> for HarnessError {
    fn from(e: DivisorError) -> Self {
        match e {
            DivisorError::SamplingExhausted { .. } => HarnessError::Budget(e.to_string()),
            DivisorError::ZeroMultiplier | DivisorError::DimensionMismatch { .. } | DivisorError::BadEpsilon(_) => invalid(e),
            _ => HarnessError::Internal(e.to_string()),
        }
    }
}

impl From<IntersectionError> for HarnessError {
    fn from(e: IntersectionError) -> Self {
        match e {
            IntersectionError::Theta(t) => t.into(),
            IntersectionError::Divisor(d) => d.into(),
            IntersectionError::NoPoints => HarnessError::Internal(e.to_string()),
            _ => invalid(e),
        }
    }
}

impl From<DensityError> for HarnessError {
    fn from(e: DensityError) -> Self {
        match e {
            DensityError::ModulusOverflow { .. } => HarnessError::Budget(e.to_string()),
            DensityError::BadCondition { .. } => invalid(e),
        }
    }
}

impl From<EquidistError> for HarnessError {
    fn from(e: EquidistError) -> Self {
        match e {
            EquidistError::GridOverflow { .. } => HarnessError::Budget(e.to_string()),
            _ => invalid(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    IntersectScan,
    Density,
    Segments,
    Equidist,
    TorsionDelta,
    Census,
}

impl RunKind {
    pub fn name(&self) -> &'static str {
        match self {
            RunKind::IntersectScan => "intersect-scan",
            RunKind::Density => "density",
            RunKind::Segments => "segments",
            RunKind::Equidist => "equidist",
            RunKind::TorsionDelta => "torsion-delta",
            RunKind::Census => "census",
        }
    }
}

/// A coordinate given as a number or as a `"p/q"` string.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CoordSpec {
    Number(f64),
    Text(String),
}

impl CoordSpec {
    fn value(&self) -> Result<f64, HarnessError> {
        match self {
            CoordSpec::Number(x) => Ok(*x),
            CoordSpec::Text(s) => {
                let f = parse_fraction(s)?;
                Ok(*f.numer() as f64 / *f.denom() as f64)
            }
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivisorFile {
    pub alpha: Option<Vec<String>>,
    pub beta: Option<Vec<String>>,
    pub translate: Option<Vec<[f64; 2]>>,
    pub multiplier: Option<i64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub n_min: Option<i64>,
    pub n_max: Option<i64>,
    pub g: Option<usize>,
    pub grid_res: Option<u32>,
    pub tol: Option<f64>,
    pub theta_tol: Option<f64>,
    pub eps: Option<f64>,
    pub eps_halvings: Option<u32>,
    pub probe_count: Option<usize>,
    pub seed: Option<u64>,
    pub n_limit: Option<u64>,
    pub point_x: Option<Vec<CoordSpec>>,
    pub point_y: Option<Vec<CoordSpec>>,
    pub torsion_x: Option<Vec<Vec<String>>>,
    pub torsion_y: Option<Vec<Vec<String>>>,
    pub torsion_v: Option<Vec<Vec<String>>>,
    pub conditions: Option<Vec<[u64; 2]>>,
    pub frequencies: Option<Vec<Vec<i64>>>,
    pub discrepancy_grid: Option<u32>,
    pub materialize_limit: Option<u64>,
}

/// The scenario file as written by the user.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub kind: Option<RunKind>,
    /// Row-major `g×g` entries as `[re, im]`.
    pub omega: Option<Vec<[f64; 2]>>,
    pub x: Option<DivisorFile>,
    pub y: Option<DivisorFile>,
    #[serde(default)]
    pub params: ParamsFile,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivisorSpec {
    pub alpha: Vec<String>,
    pub beta: Vec<String>,
    pub translate: Vec<[f64; 2]>,
    pub multiplier: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Params {
    pub n_min: i64,
    pub n_max: i64,
    pub g: usize,
    /// `None` selects the per-`n` default grid.
    pub grid_res: Option<u32>,
    pub tol: f64,
    pub theta_tol: f64,
    pub eps: f64,
    pub eps_halvings: u32,
    pub probe_count: usize,
    pub seed: u64,
    pub n_limit: u64,
    pub point_x: Option<Vec<f64>>,
    pub point_y: Option<Vec<f64>>,
    pub torsion_x: Vec<Vec<String>>,
    pub torsion_y: Vec<Vec<String>>,
    pub torsion_v: Vec<Vec<String>>,
    pub conditions: Vec<[u64; 2]>,
    pub frequencies: Vec<Vec<i64>>,
    pub discrepancy_grid: u32,
    pub materialize_limit: u64,
}

/// A fully validated scenario with every default written out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub kind: RunKind,
    pub omega: Vec<[f64; 2]>,
    pub x: DivisorSpec,
    pub y: DivisorSpec,
    pub params: Params,
}

pub fn parse_scenario(path: &Path, kind: Option<RunKind>, overrides: Overrides) -> Result<Scenario, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario_str(&text, &path.display().to_string(), kind, overrides)
}

pub fn parse_scenario_str(text: &str, origin: &str, kind: Option<RunKind>, overrides: Overrides) -> Result<Scenario, HarnessError> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| HarnessError::Parse {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Scenario::materialize(file, kind, overrides)
}

fn default_frequencies(dim: usize) -> Vec<Vec<i64>> {
    let unit = |i: usize| (0..dim).map(|j| i64::from(j == i)).collect::<Vec<_>>();
    let mut out = vec![unit(0)];
    if dim > 1 {
        out.push(unit(1));
        out.push((0..dim).map(|j| i64::from(j < 2)).collect());
        out.push((0..dim).map(|j| [2, -1].get(j).copied().unwrap_or(0)).collect());
        out.push((0..dim).map(|j| [1, 2].get(j).copied().unwrap_or(0)).collect());
    }
    out
}

impl Scenario {
    fn materialize(file: ScenarioFile, kind: Option<RunKind>, overrides: Overrides) -> Result<Self, HarnessError> {
        let kind = match (file.kind, kind) {
            (Some(a), Some(b)) if a != b => {
                return Err(invalid(format!("file declares run kind {} but {} was requested", a.name(), b.name())))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(invalid("no run kind given")),
        };
        let omega = file.omega.unwrap_or_else(|| vec![[0.0, 1.0], [0.0, 0.0], [0.0, 0.0], [0.0, 1.0]]);
        let g = (omega.len() as f64).sqrt().round() as usize;
        if g == 0 || g * g != omega.len() {
            return Err(invalid(format!("omega needs g*g entries, got {}", omega.len())));
        }
        let divisor = |d: Option<DivisorFile>| -> DivisorSpec {
            let d = d.unwrap_or_default();
            DivisorSpec {
                alpha: d.alpha.unwrap_or_else(|| vec!["0".into(); g]),
                beta: d.beta.unwrap_or_else(|| vec!["0".into(); g]),
                translate: d.translate.unwrap_or_else(|| vec![[0.0, 0.0]; g]),
                multiplier: d.multiplier.unwrap_or(1),
            }
        };
        let p = file.params;
        let (n_min_default, n_max_default) = match kind {
            RunKind::IntersectScan => (1, 5),
            RunKind::Census => (1, 10),
            _ => (1, 3),
        };
        let coords = |v: Option<Vec<CoordSpec>>| -> Result<Option<Vec<f64>>, HarnessError> {
            v.map(|v| v.iter().map(CoordSpec::value).collect()).transpose()
        };
        let params = Params {
            n_min: p.n_min.unwrap_or(n_min_default),
            n_max: p.n_max.unwrap_or(n_max_default),
            g: p.g.unwrap_or(g),
            grid_res: p.grid_res,
            tol: overrides.tol.or(p.tol).unwrap_or(crate::intersection::ROOT_TOL),
            theta_tol: p.theta_tol.unwrap_or(crate::intersection::THETA_TOL),
            eps: p.eps.unwrap_or(1e-3),
            eps_halvings: p.eps_halvings.unwrap_or(2),
            probe_count: p.probe_count.unwrap_or(200),
            seed: overrides.seed.or(p.seed).unwrap_or(0),
            n_limit: p.n_limit.unwrap_or(10_000),
            point_x: coords(p.point_x)?,
            point_y: coords(p.point_y)?,
            torsion_x: p.torsion_x.unwrap_or_default(),
            torsion_y: p.torsion_y.unwrap_or_default(),
            torsion_v: p.torsion_v.unwrap_or_default(),
            conditions: p.conditions.unwrap_or_default(),
            frequencies: p.frequencies.unwrap_or_else(|| default_frequencies(2 * g)),
            discrepancy_grid: p.discrepancy_grid.unwrap_or(8),
            materialize_limit: p.materialize_limit.unwrap_or(1_000_000),
        };
        let s = Scenario { kind, omega, x: divisor(file.x), y: divisor(file.y), params };
        s.validate()?;
        Ok(s)
    }

    pub fn g(&self) -> usize {
        (self.omega.len() as f64).sqrt().round() as usize
    }

    pub fn torus(&self) -> Result<AbelianTorus, HarnessError> {
        let entries: Vec<C64> = self.omega.iter().map(|&[re, im]| C64::new(re, im)).collect();
        Ok(AbelianTorus::from_entries(self.g(), &entries)?)
    }

    fn divisor(&self, d: &DivisorSpec) -> Result<ThetaDivisor, HarnessError> {
        let fracs = |v: &[String]| v.iter().map(|s| parse_fraction(s)).collect::<Result<Vec<Fraction>, _>>();
        let ch = ThetaCharacteristic::new(fracs(&d.alpha)?, fracs(&d.beta)?)?;
        let translate = d.translate.iter().map(|&[re, im]| C64::new(re, im)).collect();
        Ok(ThetaDivisor::new(ch, translate, d.multiplier)?)
    }

    pub fn divisor_x(&self) -> Result<ThetaDivisor, HarnessError> {
        self.divisor(&self.x)
    }

    pub fn divisor_y(&self) -> Result<ThetaDivisor, HarnessError> {
        self.divisor(&self.y)
    }

    fn point(&self, v: &Option<Vec<f64>>, name: &str) -> Result<Option<TorusPoint>, HarnessError> {
        v.as_ref()
            .map(|c| {
                if c.len() != 2 * self.g() {
                    return Err(invalid(format!("{name} needs {} coordinates, got {}", 2 * self.g(), c.len())));
                }
                TorusPoint::new(c.clone()).map_err(|e| invalid(format!("{name}: {e}")))
            })
            .transpose()
    }

    fn torsion_list(&self, v: &[Vec<String>], name: &str) -> Result<Vec<TorsionPoint>, HarnessError> {
        v.iter()
            .map(|c| {
                if c.len() != 2 * self.g() {
                    return Err(invalid(format!("{name} entries need {} coordinates, got {}", 2 * self.g(), c.len())));
                }
                let coords = c.iter().map(|s| parse_fraction(s)).collect::<Result<Vec<_>, _>>()?;
                Ok(TorsionPoint::new(coords))
            })
            .collect()
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let p = &self.params;
        let torus = self.torus()?;
        self.divisor_x()?;
        self.divisor_y()?;
        if !(p.tol > 0.0 && p.tol < 1.0) {
            return Err(invalid(format!("tol = {} must lie in (0, 1)", p.tol)));
        }
        crate::theta::ThetaEngine::new(&torus, p.theta_tol)?;
        if !(p.eps > 0.0 && p.eps < 1.0) {
            return Err(invalid(format!("eps = {} must lie in (0, 1) (eps > 0 required)", p.eps)));
        }
        if p.eps_halvings > 30 {
            return Err(invalid("eps_halvings must be at most 30"));
        }
        if p.n_min > p.n_max {
            return Err(invalid(format!("n_min = {} exceeds n_max = {}", p.n_min, p.n_max)));
        }
        if !(1..=MAX_N_LIMIT).contains(&p.n_limit) {
            return Err(invalid(format!("n_limit must lie in [1, {MAX_N_LIMIT}]")));
        }
        if p.probe_count > MAX_PROBES {
            return Err(invalid(format!("probe_count must be at most {MAX_PROBES}")));
        }
        if let Some(r) = p.grid_res {
            if !(crate::intersection::MIN_GRID..=4096).contains(&r) {
                return Err(invalid(format!("grid_res = {r} must lie in [{}, 4096]", crate::intersection::MIN_GRID)));
            }
        }
        if p.discrepancy_grid < 2 {
            return Err(invalid("discrepancy_grid must be at least 2"));
        }
        for f in &p.frequencies {
            if f.len() != 2 * self.g() || f.iter().all(|&k| k == 0) {
                return Err(invalid(format!("frequency {f:?} must be a nonzero vector of length {}", 2 * self.g())));
            }
        }
        for &[e, k] in &p.conditions {
            CongruenceCondition::new(e, k)?;
        }
        self.point(&p.point_x, "point_x")?;
        self.point(&p.point_y, "point_y")?;
        self.torsion_list(&p.torsion_x, "torsion_x")?;
        self.torsion_list(&p.torsion_y, "torsion_y")?;
        self.torsion_list(&p.torsion_v, "torsion_v")?;

        let divisor_run = matches!(self.kind, RunKind::IntersectScan)
            || (self.kind == RunKind::Census && (p.point_x.is_none() || p.point_y.is_none()));
        if divisor_run {
            if self.g() != 2 {
                return Err(invalid(format!("the intersection solver needs g = 2, got g = {}", self.g())));
            }
            if p.n_min.abs() > MAX_SCAN_N || p.n_max.abs() > MAX_SCAN_N {
                return Err(invalid(format!("|n| must be at most {MAX_SCAN_N}")));
            }
        }
        match self.kind {
            RunKind::Census if divisor_run && p.n_max < 1 => Err(invalid("census needs n_max >= 1")),
            RunKind::Segments => {
                if p.g == 0 || p.g > 8 {
                    return Err(invalid("segments need 1 <= g <= 8"));
                }
                let widest = p.n_min.unsigned_abs().max(p.n_max.unsigned_abs()) as u128 + 1;
                if widest.checked_pow(2 * p.g as u32).is_none() {
                    return Err(invalid("segment counts for this n range and g overflow 128 bits"));
                }
                Ok(())
            }
            RunKind::Equidist if p.point_y.is_none() => Err(invalid("equidist needs point_y")),
            RunKind::Density if p.point_x.is_none() || p.point_y.is_none() => Err(invalid("density needs point_x and point_y")),
            _ => Ok(()),
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("scenario serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn tolerances(&self) -> Value {
        json!({
            "theta_tol": self.params.theta_tol,
            "root_tol": self.params.tol,
            "eps": self.params.eps,
            "dedup_radius": crate::intersection::DEDUP_RADIUS,
            "singular_sv": crate::intersection::SINGULAR_SV,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub kind: RunKind,
    pub scenario_hash: String,
    pub scenario: Scenario,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub parallel: bool,
    pub threads: usize,
    pub tolerances: Value,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, HarnessError> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &target)?;
    Ok(target)
}

/// Collects outputs in memory, then writes them all at the end.
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
    warnings: Vec<String>,
}

impl Outputs {
    fn new() -> Self {
        Self { files: Vec::new(), warnings: Vec::new() }
    }

    fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), HarnessError>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator,
        R::Item: AsRef<[u8]>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(|e| HarnessError::Internal(e.to_string()))?;
        for r in rows {
            w.write_record(r).map_err(|e| HarnessError::Internal(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Internal(e.to_string()))?;
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<(), HarnessError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| HarnessError::Internal(e.to_string()))?;
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
        Ok(())
    }
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn coords_of(p: &TorusPoint) -> Vec<String> {
    p.coords().iter().map(|c| c.to_string()).collect()
}

/// `10, 100, …` up to `limit`, then `limit` itself.
fn checkpoints(limit: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut c = 10u64;
    while c < limit {
        out.push(c);
        c *= 10;
    }
    out.push(limit);
    out
}

/// Runs `f` on a pool of `threads` workers (0: one per core). Without the
/// `parallel` feature the closure runs directly.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R, HarnessError> {
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| HarnessError::Internal(e.to_string()))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(f())
    }
}

/// Runs the scenario and writes its outputs and `manifest.json` into `out`.
pub fn run(scenario: &Scenario, out: &Path, threads: usize) -> Result<RunManifest, HarnessError> {
    let started_unix = unix_now();
    fs::create_dir_all(out)?;
    let mut outputs = with_threads(threads, || dispatch(scenario))??;
    if !scenario.torus()?.is_well_conditioned() {
        outputs.warnings.push("eigenvalues of Im omega lie outside [0.3, 30]; theta truncation may be slow".into());
    }
    let mut names = Vec::new();
    for (name, bytes) in &outputs.files {
        write_atomic(out, name, bytes)?;
        names.push(name.clone());
    }
    let manifest = RunManifest {
        tool: "torlab".into(),
        version: TOOL_VERSION.into(),
        kind: scenario.kind,
        scenario_hash: scenario.hash(),
        scenario: scenario.clone(),
        started_unix,
        finished_unix: unix_now(),
        parallel: crate::par::is_parallel(),
        threads,
        tolerances: scenario.tolerances(),
        warnings: outputs.warnings,
        outputs: names,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| HarnessError::Internal(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(out, "manifest.json", &bytes)?;
    Ok(manifest)
}

fn dispatch(s: &Scenario) -> Result<Outputs, HarnessError> {
    match s.kind {
        RunKind::IntersectScan => run_intersect_scan(s),
        RunKind::Density => run_density(s),
        RunKind::Segments => run_segments(s),
        RunKind::Equidist => run_equidist(s),
        RunKind::TorsionDelta => run_torsion_delta(s),
        RunKind::Census => run_census(s),
    }
}

fn run_intersect_scan(s: &Scenario) -> Result<Outputs, HarnessError> {
    let p = &s.params;
    let torus = s.torus()?;
    let (x, y) = (s.divisor_x()?, s.divisor_y()?);
    let lab = IntersectionLab::new(torus.clone(), p.theta_tol)?;
    let mut report = lab.properness_scan(&x, &y, p.n_min, p.n_max, p.grid_res, p.tol)?;

    let probes: Vec<TorusPoint> = if p.probe_count > 0 {
        x.bind(&torus, lab.engine()).sample_points(p.probe_count, p.seed)?.into_iter().map(|d| d.point).collect()
    } else {
        Vec::new()
    };
    let mut union: Vec<TorusPoint> = Vec::new();
    let mut coverage_rows = Vec::new();
    for (&n, sol) in &report.solutions {
        if sol.is_proper() {
            union.extend(sol.records.iter().map(|r| r.x_point.clone()));
        }
        if !probes.is_empty() && !union.is_empty() {
            let r = covering_radius(&torus, &probes, &union);
            report.coverage_radius_per_n.insert(n, r);
            coverage_rows.push(vec![n.to_string(), union.len().to_string(), r.to_string()]);
        }
    }

    let mut out = Outputs::new();
    out.warnings.extend(report.warnings.iter().map(|w| w.to_string()));
    out.csv(
        "summary.csv",
        &["n", "found", "expected", "proper", "distinct_x"],
        report.solutions.iter().map(|(n, sol)| {
            let (found, expected) = report.counts_per_n[n];
            vec![n.to_string(), found.to_string(), expected.to_string(), sol.is_proper().to_string(), sol.distinct_x_count(&torus).to_string()]
        }),
    )?;
    let mut header = vec!["n".to_string()];
    header.extend((0..4).map(|i| format!("y{i}")));
    header.extend((0..4).map(|i| format!("x{i}")));
    header.extend(["residual", "min_sv", "merged", "classification", "segment_offset"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    for (n, sol) in &report.solutions {
        for r in &sol.records {
            let mut row = vec![n.to_string()];
            row.extend(coords_of(&r.y_solution));
            row.extend(coords_of(&r.x_point));
            row.push(r.residual.to_string());
            row.push(r.jacobian_min_sv.to_string());
            row.push(r.merged.to_string());
            row.push(format!("{:?}", r.classification));
            row.push(join(attribute_solution(&r.y_solution, *n).offset()));
            rows.push(row);
        }
    }
    out.csv("records.csv", &header, rows)?;
    out.csv("coverage.csv", &["n", "points", "radius"], coverage_rows)?;
    let solutions: Vec<Value> = report
        .solutions
        .values()
        .map(|sol| json!({ "n": sol.n, "expected": sol.expected, "proper": sol.is_proper(), "stats": sol.stats, "records": sol.records }))
        .collect();
    out.json(
        "report.json",
        &json!({
            "kind": s.kind,
            "tolerances": s.tolerances(),
            "n_range": report.n_range,
            "improper_n": report.improper_n,
            "counts_per_n": report.counts_per_n,
            "coverage_radius_per_n": report.coverage_radius_per_n,
            "probe_count": p.probe_count,
            "warnings": out.warnings,
            "solutions": solutions,
        }),
    )?;
    Ok(out)
}

fn run_density(s: &Scenario) -> Result<Outputs, HarnessError> {
    let p = &s.params;
    let torus = s.torus()?;
    let x = s.point(&p.point_x, "point_x")?.expect("validated");
    let y = s.point(&p.point_y, "point_y")?.expect("validated");
    let pairs = find_torsion_pairs(&s.torsion_list(&p.torsion_y, "torsion_y")?, &s.torsion_list(&p.torsion_x, "torsion_x")?);
    let v: Vec<TorusPoint> = if p.torsion_v.is_empty() {
        exceptional_set(&pairs).iter().map(TorsionPoint::to_point).collect()
    } else {
        s.torsion_list(&p.torsion_v, "torsion_v")?.iter().map(TorsionPoint::to_point).collect()
    };
    let marks = checkpoints(p.n_limit);
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for j in 0..=p.eps_halvings {
        let eps = p.eps / f64::powi(2.0, j as i32);
        let census = point_census(&torus, &x, &y, p.n_limit, eps, &v);
        let mut cum = 0u64;
        let mut next = 0;
        let mut curve = Vec::new();
        for row in &census.rows {
            cum += row.bad_count;
            if next < marks.len() && row.n as u64 == marks[next] {
                let frac = cum as f64 / row.n as f64;
                rows.push(vec![eps.to_string(), row.n.to_string(), cum.to_string(), frac.to_string()]);
                curve.push(json!({ "n": row.n, "bad": cum, "fraction": frac }));
                next += 1;
            }
        }
        curves.push(json!({ "eps": eps, "points": curve }));
    }
    let mut out = Outputs::new();
    out.csv("density.csv", &["eps", "n", "bad_count", "fraction"], rows)?;
    let conditions: Vec<CongruenceCondition> = pairs.iter().map(|q| q.condition).collect();
    let delta = density_of_union(&conditions)?;
    out.json(
        "report.json",
        &json!({
            "kind": s.kind,
            "tolerances": s.tolerances(),
            "v_model": "eps-balls around the points of V",
            "v": v,
            "delta": format_delta(&delta.delta),
            "delta_decimal": delta.delta_f64(),
            "curves": curves,
        }),
    )?;
    Ok(out)
}

fn run_segments(s: &Scenario) -> Result<Outputs, HarnessError> {
    let p = &s.params;
    let mut summary = Vec::new();
    let mut rows = Vec::new();
    for n in (p.n_min..=p.n_max).filter(|&n| n != 0) {
        let sm = summarize(n, p.g, u128::from(p.materialize_limit));
        summary.push(vec![n.to_string(), sm.count.to_string(), sm.max_height.to_string()]);
        if segment_count(n, p.g) <= u128::from(p.materialize_limit) {
            for seg in enumerate_segments(n, p.g) {
                let r = seg.to_row();
                rows.push(vec![r.n.to_string(), r.offset, r.height.to_string(), r.intervals]);
            }
        }
    }
    let mut out = Outputs::new();
    out.csv("segments.csv", &["n", "offset", "height", "intervals"], rows)?;
    out.csv("segment_summary.csv", &["n", "count", "max_height"], summary)?;
    Ok(out)
}

fn run_equidist(s: &Scenario) -> Result<Outputs, HarnessError> {
    let p = &s.params;
    let torus = s.torus()?;
    let y = s.point(&p.point_y, "point_y")?.expect("validated");
    let marks = checkpoints(p.n_limit);
    let mut weyl_rows = Vec::new();
    let mut disc_rows = Vec::new();
    let all = orbit(&y, p.n_limit);
    for &m in &marks {
        let n_list: Vec<i64> = (1..=m as i64).collect();
        for k in &p.frequencies {
            let w = weyl_sum(&y, &n_list, k)?;
            weyl_rows.push(vec![m.to_string(), join(k), w.magnitude.to_string()]);
        }
        let d = discrepancy_estimate(&all[..m as usize], p.discrepancy_grid)?;
        disc_rows.push(vec![m.to_string(), d.to_string()]);
    }
    let mut out = Outputs::new();
    out.csv("weyl.csv", &["n", "k", "magnitude"], weyl_rows)?;
    out.csv("discrepancy.csv", &["n", "discrepancy"], disc_rows)?;
    let mut report = json!({ "kind": s.kind, "tolerances": s.tolerances(), "discrepancy_grid": p.discrepancy_grid });
    if let Some(x) = s.point(&p.point_x, "point_x")? {
        let trace = approximating_translates(&torus, &y, &x, p.n_limit);
        out.csv(
            "approximation.csv",
            &["n", "a", "dist"],
            trace.steps.iter().map(|st| vec![st.n.to_string(), join(&st.a), st.dist.to_string()]),
        )?;
        report["best_distance"] = json!(trace.best().map(|b| b.dist));
    }
    out.json("report.json", &report)?;
    Ok(out)
}

fn run_torsion_delta(s: &Scenario) -> Result<Outputs, HarnessError> {
    let p = &s.params;
    let pairs = find_torsion_pairs(&s.torsion_list(&p.torsion_y, "torsion_y")?, &s.torsion_list(&p.torsion_x, "torsion_x")?);
    let mut conditions = Vec::new();
    let mut rows = Vec::new();
    for &[e, k] in &p.conditions {
        conditions.push(CongruenceCondition::new(e, k)?);
        rows.push(vec![e.to_string(), k.to_string(), "config".into(), String::new(), String::new()]);
    }
    for q in &pairs {
        conditions.push(q.condition);
        rows.push(vec![q.condition.e().to_string(), q.condition.k().to_string(), "pair".into(), q.t.to_string(), q.t_prime.to_string()]);
    }
    let result = density_of_union(&conditions)?;
    let mut out = Outputs::new();
    out.csv("conditions.csv", &["e", "k", "source", "t", "t_prime"], rows)?;
    let v: Vec<String> = exceptional_set(&pairs).iter().map(|t| t.to_string()).collect();
    out.json(
        "report.json",
        &json!({
            "kind": s.kind,
            "delta": format_delta(&result.delta),
            "delta_decimal": result.delta_f64(),
            "modulus": result.modulus.to_string(),
            "conditions": result.conditions.iter().map(|c| [c.e(), c.k()]).collect::<Vec<_>>(),
            "v": v,
        }),
    )?;
    Ok(out)
}

fn run_census(s: &Scenario) -> Result<Outputs, HarnessError> {
    let p = &s.params;
    let torus = s.torus()?;
    let v: Vec<TorusPoint> = s.torsion_list(&p.torsion_v, "torsion_v")?.iter().map(TorsionPoint::to_point).collect();
    let report: CensusReport = match (s.point(&p.point_x, "point_x")?, s.point(&p.point_y, "point_y")?) {
        (Some(x), Some(y)) => point_census(&torus, &x, &y, p.n_limit, p.eps, &v),
        _ => {
            let lab = IntersectionLab::new(torus.clone(), p.theta_tol)?;
            bad_n_census(&lab, &s.divisor_x()?, &s.divisor_y()?, p.n_max, &v, p.eps, p.grid_res)?
        }
    };
    let mut out = Outputs::new();
    out.csv("census.csv", &["n", "bad_count"], report.rows.iter().map(|r| [r.n.to_string(), r.bad_count.to_string()]))?;
    out.json(
        "report.json",
        &json!({
            "kind": s.kind,
            "tolerances": s.tolerances(),
            "regime": report.regime,
            "eps": report.eps,
            "bad_n": report.bad_n,
            "bad_fraction": report.bad_fraction(),
            "improper_n": report.improper_n,
            "fitted_exponent": report.fitted_exponent,
        }),
    )?;
    Ok(out)
}
