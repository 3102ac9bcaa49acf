//! TOML scenario files: a measure space, a driving system, named operators,
//! the cocycle table, and analysis parameters. Every random quantity takes
//! an explicit seed.
//!
//! ```toml
//! [space]
//! n = 64                      # or weights = [...]
//!
//! [driving]
//! kind = "finite_rotation"    # finite_permutation | bernoulli_shift | trivial
//! q = 2
//!
//! [operators.D]
//! map = "doubling"
//! method = "ulam"
//! samples = 10000
//! seed = 11
//!
//! [cocycle]
//! table = ["D", "D"]
//!
//! [analysis]
//! horizon = 40
//! tol = 1e-6
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::cocycle::{CocycleFamily, InvariantDensityMap};
use crate::driving::{Cylinder, DrivingSystem, EnvPoint};
use crate::error::{Error, Result};
use crate::measure::{Density, FiniteMeasureSpace, MarkovMatrix, Representation, Space};
use crate::skewprod::{EnvPart, MonteCarlo, ProductSet, SkewSet};
use crate::transfer::{block_cycle, contiguous_blocks, pf_exact, pf_ulam, MapSpec, PiecewiseLinear};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    space: RawSpace,
    driving: Option<RawDriving>,
    operators: BTreeMap<String, RawOperator>,
    cocycle: RawCocycle,
    #[serde(default)]
    analysis: RawAnalysis,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    n: Option<usize>,
    weights: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDriving {
    kind: String,
    q: Option<usize>,
    shift: Option<usize>,
    sigma: Option<Vec<usize>>,
    p: Option<Vec<f64>>,
    seed: Option<u64>,
    half_width: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOperator {
    map: String,
    #[serde(default = "exact_method")]
    method: String,
    samples: Option<usize>,
    seed: Option<u64>,
    value: Option<f64>,
    k: Option<u32>,
    blocks: Option<usize>,
    targets: Option<Vec<usize>>,
    breakpoints: Option<Vec<f64>>,
    slopes: Option<Vec<f64>>,
    intercepts: Option<Vec<f64>>,
    rows: Option<Vec<Vec<f64>>>,
}

fn exact_method() -> String {
    "exact".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCocycle {
    table: Vec<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    horizon: Option<usize>,
    tol: Option<f64>,
    samples: Option<usize>,
    seed: Option<u64>,
    burn_in: Option<usize>,
    r_max: Option<usize>,
    pullback_tol: Option<f64>,
    pullback_k_max: Option<usize>,
    support_floor: Option<f64>,
    eps_grid: Option<Vec<f64>>,
    qc_max_cells: Option<usize>,
    mc_samples: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

/// Analysis parameters with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub horizon: usize,
    pub tol: f64,
    /// Environment points sampled by the estimators.
    pub samples: usize,
    pub seed: u64,
    pub burn_in: Option<usize>,
    pub r_max: usize,
    pub pullback_tol: f64,
    pub pullback_k_max: usize,
    pub support_floor: f64,
    pub eps_grid: Vec<f64>,
    pub qc_max_cells: usize,
    pub mc_samples: usize,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub space: Space,
    pub cocycle: CocycleFamily,
    /// Operator name per driving feature.
    pub table: Vec<String>,
    pub analysis: Analysis,
    pub output_dir: Option<PathBuf>,
}

fn need<T>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| Error::Parse(format!("missing field {what}")))
}

fn build_driving(raw: Option<&RawDriving>) -> Result<DrivingSystem> {
    let Some(d) = raw else {
        return Ok(DrivingSystem::trivial());
    };
    match d.kind.as_str() {
        "trivial" => Ok(DrivingSystem::trivial()),
        "finite_rotation" => DrivingSystem::rotation(need(d.q, "driving.q")?, d.shift.unwrap_or(1)),
        "finite_permutation" => {
            let sigma = need(d.sigma.clone(), "driving.sigma")?;
            let p = d
                .p
                .clone()
                .unwrap_or_else(|| vec![1.0 / sigma.len().max(1) as f64; sigma.len()]);
            DrivingSystem::permutation(sigma, p)
        }
        "bernoulli_shift" => DrivingSystem::bernoulli(
            d.p.clone().unwrap_or_else(|| vec![0.5, 0.5]),
            d.half_width.unwrap_or(64),
            need(d.seed, "driving.seed")?,
        ),
        other => Err(Error::Parse(format!("unknown driving kind {other:?}"))),
    }
}

fn build_operator(name: &str, op: &RawOperator, space: &Space) -> Result<MarkovMatrix> {
    let ctx = |e: Error| match e {
        Error::Parse(m) => Error::Parse(format!("operator {name}: {m}")),
        other => other,
    };
    let spec = match op.map.as_str() {
        "identity" => Some(MapSpec::Identity),
        "doubling" => Some(MapSpec::Doubling),
        "tent" => Some(MapSpec::Tent),
        "constant" => Some(MapSpec::Constant(need(op.value, "value").map_err(ctx)?)),
        "baker_cyclic" => Some(MapSpec::baker_cyclic(need(op.k, "k").map_err(ctx)?)?),
        "piecewise_linear" => Some(MapSpec::PiecewiseLinear(PiecewiseLinear::new(
            need(op.breakpoints.clone(), "breakpoints").map_err(ctx)?,
            need(op.slopes.clone(), "slopes").map_err(ctx)?,
            need(op.intercepts.clone(), "intercepts").map_err(ctx)?,
        )?)),
        "block_cycle" | "kernel" => None,
        other => return Err(Error::Parse(format!("operator {name}: unknown map {other:?}"))),
    };
    match (spec, op.map.as_str()) {
        (Some(spec), _) => match op.method.as_str() {
            "exact" => pf_exact(&spec, space),
            "ulam" => pf_ulam(
                &spec,
                space,
                need(op.samples, "samples").map_err(ctx)?,
                need(op.seed, "seed").map_err(ctx)?,
            ),
            other => Err(Error::Parse(format!("operator {name}: unknown method {other:?}"))),
        },
        (None, "block_cycle") => {
            let r = need(op.blocks, "blocks").map_err(ctx)?;
            let targets = need(op.targets.clone(), "targets").map_err(ctx)?;
            block_cycle(space, &contiguous_blocks(space.len(), r)?, &targets)
        }
        (None, _) => MarkovMatrix::from_dense(
            space,
            &need(op.rows.clone(), "rows").map_err(ctx)?,
            Representation::Approximate,
        ),
    }
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
        Self::parse(&text, &stem)
    }

    /// Parses and validates eagerly: every operator is built and checked.
    pub fn parse(text: &str, default_name: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let space = match (&raw.space.weights, raw.space.n) {
            (Some(w), n) => {
                if n.is_some_and(|n| n != w.len()) {
                    return Err(Error::Parse("space.n disagrees with the length of space.weights".into()));
                }
                FiniteMeasureSpace::new(w.clone())?
            }
            (None, Some(n)) => FiniteMeasureSpace::uniform(n)?,
            (None, None) => return Err(Error::Parse("space needs n or weights".into())),
        };
        let driving = build_driving(raw.driving.as_ref())?;
        for id in &raw.cocycle.table {
            if !raw.operators.contains_key(id) {
                return Err(Error::UnresolvedReference(format!("operator {id:?} is not defined")));
            }
        }
        let mut built: BTreeMap<&str, MarkovMatrix> = BTreeMap::new();
        for (name, op) in &raw.operators {
            built.insert(name, build_operator(name, op, &space)?);
        }
        let table: Vec<MarkovMatrix> = raw.cocycle.table.iter().map(|id| built[id.as_str()].clone()).collect();
        let table = if table.len() == 1 && driving.feature_count() > 1 {
            vec![table[0].clone(); driving.feature_count()]
        } else {
            table
        };
        let names = if raw.cocycle.table.len() == 1 {
            vec![raw.cocycle.table[0].clone(); table.len()]
        } else {
            raw.cocycle.table.clone()
        };
        let cocycle = CocycleFamily::new(driving, table)?;
        let a = raw.analysis;
        let analysis = Analysis {
            horizon: a.horizon.unwrap_or(40),
            tol: a.tol.unwrap_or(1e-6),
            samples: a.samples.unwrap_or(64),
            seed: a.seed.unwrap_or(0),
            burn_in: a.burn_in,
            r_max: a.r_max.unwrap_or(4),
            pullback_tol: a.pullback_tol.unwrap_or(1e-12),
            pullback_k_max: a.pullback_k_max.unwrap_or(400),
            support_floor: a.support_floor.unwrap_or(crate::cocycle::DEFAULT_SUPPORT_FLOOR),
            eps_grid: a.eps_grid.unwrap_or_else(|| vec![0.5, 0.25, 0.1]),
            qc_max_cells: a.qc_max_cells.unwrap_or(8),
            mc_samples: a.mc_samples.unwrap_or(256),
        };
        if analysis.samples == 0 {
            return Err(Error::Parse("analysis.samples must be at least 1".into()));
        }
        Ok(Scenario {
            name: raw.name.unwrap_or_else(|| default_name.to_string()),
            space,
            cocycle,
            table: names,
            analysis,
            output_dir: raw.output.and_then(|o| o.dir),
        })
    }

    /// Environment points visited by the estimators.
    pub fn env_points(&self) -> Result<Vec<EnvPoint>> {
        self.cocycle.driving().sample_env(self.analysis.samples, self.analysis.seed)
    }

    /// Invariant density map pulled back from the uniform density.
    pub fn invariant_density(&self) -> Result<InvariantDensityMap> {
        let samples = match self.cocycle.driving() {
            DrivingSystem::Bernoulli(_) => self
                .cocycle
                .driving()
                .sample_env(self.analysis.samples.min(8), self.analysis.seed)?,
            DrivingSystem::Finite(_) => Vec::new(),
        };
        InvariantDensityMap::build(
            &self.cocycle,
            &Density::uniform(&self.space),
            self.analysis.pullback_tol,
            self.analysis.pullback_k_max,
            &samples,
        )
    }

    pub fn monte_carlo(&self) -> MonteCarlo {
        MonteCarlo {
            samples: self.analysis.mc_samples,
            seed: self.analysis.seed,
        }
    }
}

/// Reparses `text` with every seed replaced by `seed`, including the seeds
/// of Ulam operators, the Bernoulli driving and the analysis block.
pub fn parse_with_seed(text: &str, default_name: &str, seed: u64) -> Result<Scenario> {
    let mut value: toml::Table = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let seed_value = toml::Value::Integer(seed as i64);
    let set = |t: &mut toml::Table| {
        t.insert("seed".into(), seed_value.clone());
    };
    if let Some(toml::Value::Table(ops)) = value.get_mut("operators") {
        for (_, op) in ops.iter_mut() {
            if let toml::Value::Table(t) = op {
                if t.get("method").and_then(|m| m.as_str()) == Some("ulam") {
                    set(t);
                }
            }
        }
    }
    if let Some(toml::Value::Table(d)) = value.get_mut("driving") {
        if d.get("kind").and_then(|k| k.as_str()) == Some("bernoulli_shift") {
            set(d);
        }
    }
    match value.get_mut("analysis") {
        Some(toml::Value::Table(a)) => set(a),
        _ => {
            let mut a = toml::Table::new();
            set(&mut a);
            value.insert("analysis".into(), toml::Value::Table(a));
        }
    }
    Scenario::parse(&toml::to_string(&value).map_err(|e| Error::Parse(e.to_string()))?, default_name)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSets {
    pairs: Vec<RawPair>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPair {
    id: String,
    a: Vec<RawPiece>,
    b: Vec<RawPiece>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPiece {
    points: Option<Vec<usize>>,
    cylinder: Option<Vec<u8>>,
    #[serde(default)]
    cylinder_start: i64,
    /// Half-open cell range `[lo, hi)`.
    cells: Option<[usize; 2]>,
    cell_list: Option<Vec<usize>>,
}

/// A named pair `(A, B)` of skew-product sets.
#[derive(Debug, Clone)]
pub struct SetPair {
    pub id: String,
    pub a: SkewSet,
    pub b: SkewSet,
}

fn build_piece(c: &CocycleFamily, p: &RawPiece) -> Result<ProductSet> {
    let env = match (&p.points, &p.cylinder) {
        (Some(_), Some(_)) => return Err(Error::Parse("a piece takes points or cylinder, not both".into())),
        (Some(pts), None) => EnvPart::Points(pts.clone()),
        (None, Some(sym)) => EnvPart::Cylinder(Cylinder::new(p.cylinder_start, sym.clone())),
        (None, None) => EnvPart::All,
    };
    let cells = match (&p.cells, &p.cell_list) {
        (Some(_), Some(_)) => return Err(Error::Parse("a piece takes cells or cell_list, not both".into())),
        (Some([lo, hi]), None) => (*lo..*hi).collect(),
        (None, Some(l)) => l.clone(),
        (None, None) => (0..c.space().len()).collect(),
    };
    Ok(ProductSet::new(env, cells))
}

/// Loads `[[pairs]]` of product-set unions for the skew-product command.
pub fn parse_sets(text: &str, c: &CocycleFamily) -> Result<Vec<SetPair>> {
    let raw: RawSets = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    raw.pairs
        .iter()
        .map(|p| {
            let side = |pieces: &[RawPiece]| -> Result<SkewSet> {
                SkewSet::new(c, pieces.iter().map(|x| build_piece(c, x)).collect::<Result<_>>()?)
            };
            Ok(SetPair {
                id: p.id.clone(),
                a: side(&p.a)?,
                b: side(&p.b)?,
            })
        })
        .collect()
}
