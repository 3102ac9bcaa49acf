//! Exactness: L¹ collapse of zero-mean densities, the dual-ball criterion,
//! and tail-partition triviality for cocycles built from cell maps.
//!
//! All three tests walk the composed kernels `K⁽ⁿ⁾_ω` once. Row `i` of
//! `K⁽ⁿ⁾` is the mass image of the unit point mass on cell `i`; column `j`
//! is `P*⁽ⁿ⁾ 1_{cell j}`.

use rayon::prelude::*;

use crate::cocycle::CocycleFamily;
use crate::driving::EnvPoint;
use crate::error::{Error, Result};
use crate::measure::{check_same, Density, MarkovMatrix};
use crate::mixing::tail_start;

/// `{0,1}`-valuedness tolerance for the tail-partition test.
pub const INDICATOR_TOL: f64 = 1e-9;

/// At most this many basis elements (and cell indicators) enter the
/// step-by-step duality check.
const DUALITY_SAMPLE: usize = 48;

#[derive(Debug, Clone, PartialEq)]
pub struct NormCurves {
    /// `curves[b][n] = ‖P⁽ⁿ⁾_ω f_b‖_{L¹}`
    pub curves: Vec<Vec<f64>>,
    /// Largest `|‖P⁽ⁿ⁾f‖ − ∫ f · P*⁽ⁿ⁾ sgn(P⁽ⁿ⁾f) dm|`.
    pub witness_gap: f64,
    /// Every curve non-increasing up to rounding.
    pub monotone: bool,
}

impl NormCurves {
    /// Largest value in any tail window.
    pub fn tail_max(&self) -> f64 {
        let Some(first) = self.curves.first() else {
            return 0.0;
        };
        let start = tail_start(first.len() - 1);
        self.curves
            .iter()
            .flat_map(|c| c[start..].iter())
            .fold(0.0, |a, v| a.max(*v))
    }

    pub fn decayed(&self, tol: f64) -> bool {
        self.tail_max() < tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualBallCurve {
    /// Diameter of `{±P*⁽ⁿ⁾ 1_{cell j}}` in `L^∞` modulo constants, which
    /// equals the largest oscillation `max − min` of a column.
    pub diameter: Vec<f64>,
    /// Largest sup-norm distance of a column from its `m`-weighted mean.
    pub mean_distance: Vec<f64>,
}

impl DualBallCurve {
    pub fn tail_max(&self) -> f64 {
        let start = tail_start(self.diameter.len() - 1);
        self.diameter[start..].iter().fold(0.0, |a, v| a.max(*v))
    }

    pub fn trivial(&self, tol: f64) -> bool {
        self.tail_max() < tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailPartition {
    /// Positive-measure atoms of `(Tⁿ_ω)⁻¹𝒜` for `n = 0..=horizon`.
    pub atoms: Vec<usize>,
    pub first_trivial: Option<usize>,
}

impl TailPartition {
    pub fn trivial(&self) -> bool {
        self.atoms.last() == Some(&1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointExactness {
    pub omega_id: usize,
    pub norms: NormCurves,
    pub dual: DualBallCurve,
    /// `None` when the cocycle is not map-derived at this resolution.
    pub tail: Option<TailPartition>,
    /// Largest `|∫ P⁽ⁿ⁾f · g − ∫ f · P*⁽ⁿ⁾g|` over the sampled pairs, with
    /// `P⁽ⁿ⁾f` pushed step by step and `P*⁽ⁿ⁾g` read from the composed kernel.
    pub duality_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactnessReport {
    pub horizon: usize,
    pub tol: f64,
    pub points: Vec<PointExactness>,
    /// Norm-collapse verdict over every sampled point.
    pub exact: bool,
    /// Dual-ball verdict over every sampled point.
    pub lin_trivial: bool,
    pub tail_trivial: Option<bool>,
    pub agreement: bool,
}

/// Sparse combination `Σ_i mass_i · row_i(K)` into a dense scratch buffer.
struct Scratch {
    acc: Vec<f64>,
    mark: Vec<bool>,
    touched: Vec<usize>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            acc: vec![0.0; n],
            mark: vec![false; n],
            touched: Vec::new(),
        }
    }

    /// Returns `(‖Σ‖₁, Σ_i mass_i Σ_j K_ij sgn_j)`.
    fn norm_and_witness(&mut self, k: &MarkovMatrix, support: &[(usize, f64)]) -> (f64, f64) {
        for &(i, m) in support {
            let (cols, vals) = k.row(i);
            for (j, v) in cols.iter().zip(vals) {
                if !self.mark[*j] {
                    self.mark[*j] = true;
                    self.touched.push(*j);
                }
                self.acc[*j] += m * v;
            }
        }
        let norm: f64 = self.touched.iter().map(|j| self.acc[*j].abs()).sum();
        let mut witness = 0.0;
        for &(i, m) in support {
            let (cols, vals) = k.row(i);
            let pulled: f64 = cols
                .iter()
                .zip(vals)
                .map(|(j, v)| v * sign(self.acc[*j]))
                .sum();
            witness += m * pulled;
        }
        for j in self.touched.drain(..) {
            self.acc[j] = 0.0;
            self.mark[j] = false;
        }
        (norm, witness)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn sparse_support(f: &Density) -> Vec<(usize, f64)> {
    f.masses()
        .into_iter()
        .enumerate()
        .filter(|(_, m)| *m != 0.0)
        .collect()
}

/// Per column: `(max, min, m-weighted mean)` of `K⁽ⁿ⁾`, counting absent
/// entries as zero.
fn column_stats(k: &MarkovMatrix) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = k.len();
    let w = k.space().weights();
    let mut max = vec![f64::NEG_INFINITY; n];
    let mut min = vec![f64::INFINITY; n];
    let mut mean = vec![0.0; n];
    let mut count = vec![0usize; n];
    for i in 0..n {
        let (cols, vals) = k.row(i);
        for (j, v) in cols.iter().zip(vals) {
            max[*j] = max[*j].max(*v);
            min[*j] = min[*j].min(*v);
            mean[*j] += w[i] * v;
            count[*j] += 1;
        }
    }
    for j in 0..n {
        if count[j] < n {
            max[j] = max[j].max(0.0);
            min[j] = min[j].min(0.0);
        }
    }
    (max, min, mean)
}

fn dual_step(k: &MarkovMatrix) -> (f64, f64) {
    let (max, min, mean) = column_stats(k);
    let mut diam = 0.0f64;
    let mut dist = 0.0f64;
    for j in 0..max.len() {
        diam = diam.max(max[j] - min[j]);
        dist = dist.max((max[j] - mean[j]).max(mean[j] - min[j]));
    }
    (diam, dist)
}

fn atoms_of(k: &MarkovMatrix) -> Result<usize> {
    let targets = k.as_cell_map(INDICATOR_TOL).ok_or_else(|| {
        Error::Precondition(
            "composed kernel is not {0,1}-valued; the cocycle is not map-derived at this resolution".into(),
        )
    })?;
    let mut hit = vec![false; k.len()];
    for t in targets {
        hit[t] = true;
    }
    Ok(hit.into_iter().filter(|h| *h).count())
}

struct Walk {
    norms: Option<NormCurves>,
    dual: Option<DualBallCurve>,
    tail: Option<TailPartition>,
}

type Support = Vec<(usize, f64)>;

/// Mass supports `δ_i − δ_{i+1}` of the difference basis, built sparsely.
fn difference_supports(cells: usize) -> Vec<Support> {
    (0..cells.saturating_sub(1))
        .map(|i| vec![(i, 1.0), (i + 1, -1.0)])
        .collect()
}

fn walk(
    c: &CocycleFamily,
    w: &EnvPoint,
    supports: Option<&[Support]>,
    want_dual: bool,
    want_tail: bool,
    horizon: usize,
) -> Result<Walk> {
    let nb = supports.map_or(0, |s| s.len());
    let mut curves = vec![Vec::with_capacity(horizon + 1); nb];
    let mut witness_gap = 0.0f64;
    let mut diameter = Vec::new();
    let mut mean_distance = Vec::new();
    let mut atoms = Vec::new();
    let cells = c.space().len();
    for k in c.composed(w).take(horizon + 1) {
        if let Some(supports) = supports {
            let row: Vec<(f64, f64)> = supports
                .par_iter()
                .map_init(|| Scratch::new(cells), |s, sup| s.norm_and_witness(&k, sup))
                .collect();
            for (b, (norm, wit)) in row.into_iter().enumerate() {
                witness_gap = witness_gap.max((norm - wit).abs());
                curves[b].push(norm);
            }
        }
        if want_dual {
            let (d, m) = dual_step(&k);
            diameter.push(d);
            mean_distance.push(m);
        }
        if want_tail {
            atoms.push(atoms_of(&k)?);
        }
    }
    let norms = supports.map(|_| {
        let monotone = curves.iter().all(|c| {
            c.windows(2)
                .all(|p| p[1] <= p[0] + 1e-12 * p[0].max(1.0))
        });
        NormCurves {
            curves,
            witness_gap,
            monotone,
        }
    });
    let tail = want_tail.then(|| TailPartition {
        first_trivial: atoms.iter().position(|a| *a == 1),
        atoms,
    });
    Ok(Walk {
        norms,
        dual: want_dual.then_some(DualBallCurve {
            diameter,
            mean_distance,
        }),
        tail,
    })
}

fn check_basis(c: &CocycleFamily, f_basis: &[Density]) -> Result<()> {
    for f in f_basis {
        f.require_zero_mean()?;
        check_same(c.space(), f.space())?;
    }
    Ok(())
}

/// `n ↦ ‖P⁽ⁿ⁾_ω f‖_{L¹}` for each basis element, `n = 0..=horizon`.
pub fn exactness_norms(
    c: &CocycleFamily,
    w: &EnvPoint,
    f_basis: &[Density],
    horizon: usize,
) -> Result<NormCurves> {
    check_basis(c, f_basis)?;
    let supports: Vec<Support> = f_basis.iter().map(sparse_support).collect();
    Ok(walk(c, w, Some(&supports), false, false, horizon)?
        .norms
        .expect("requested"))
}

/// Diameter modulo constants of the dual images of `{±1_{cell j}}`.
pub fn lin_dual_ball(c: &CocycleFamily, w: &EnvPoint, horizon: usize) -> Result<DualBallCurve> {
    Ok(walk(c, w, None, true, false, horizon)?.dual.expect("requested"))
}

/// Atom counts of the pulled-back cell partition.
pub fn tail_partition_trivial(c: &CocycleFamily, w: &EnvPoint, horizon: usize) -> Result<TailPartition> {
    if !c.is_map_derived(INDICATOR_TOL) {
        return Err(Error::Precondition(
            "tail-partition test needs a cocycle of cell maps".into(),
        ));
    }
    Ok(walk(c, w, None, false, true, horizon)?.tail.expect("requested"))
}

fn duality_gap(c: &CocycleFamily, w: &EnvPoint, basis: &[Support], horizon: usize) -> f64 {
    let pick = |len: usize| -> Vec<usize> {
        let stride = len.div_ceil(DUALITY_SAMPLE).max(1);
        (0..len).step_by(stride).collect()
    };
    let cells = c.space().len();
    let fs = pick(basis.len());
    let gs = pick(cells);
    let supports: Vec<&Support> = fs.iter().map(|b| &basis[*b]).collect();
    let mut masses: Vec<Vec<f64>> = supports
        .iter()
        .map(|s| {
            let mut m = vec![0.0; cells];
            for (i, v) in s.iter() {
                m[*i] += v;
            }
            m
        })
        .collect();
    let mut cur = w.clone();
    let mut gap = 0.0f64;
    for (n, k) in c.composed(w).take(horizon + 1).enumerate() {
        if n > 0 {
            let p = c.operator_at(&cur);
            masses.par_iter_mut().for_each(|m| *m = p.push_mass(m));
            cur = c.advance(&cur, 1);
        }
        for (mass, support) in masses.iter().zip(&supports) {
            for &j in &gs {
                let rhs: f64 = support.iter().map(|(i, m)| m * k.entry(*i, j)).sum();
                gap = gap.max((mass[j] - rhs).abs());
            }
        }
    }
    gap
}

/// Runs all applicable tests at each sampled point with the difference basis.
pub fn exactness_report(
    c: &CocycleFamily,
    omega_samples: &[EnvPoint],
    horizon: usize,
    tol: f64,
) -> Result<ExactnessReport> {
    report_on(c, omega_samples, &difference_supports(c.space().len()), horizon, tol)
}

pub fn exactness_report_with(
    c: &CocycleFamily,
    omega_samples: &[EnvPoint],
    f_basis: &[Density],
    horizon: usize,
    tol: f64,
) -> Result<ExactnessReport> {
    if omega_samples.is_empty() {
        return Err(Error::EmptyBasis("environment samples"));
    }
    check_basis(c, f_basis)?;
    let supports: Vec<Support> = f_basis.iter().map(sparse_support).collect();
    report_on(c, omega_samples, &supports, horizon, tol)
}

fn report_on(
    c: &CocycleFamily,
    omega_samples: &[EnvPoint],
    supports: &[Support],
    horizon: usize,
    tol: f64,
) -> Result<ExactnessReport> {
    if supports.is_empty() {
        return Err(Error::EmptyBasis("density basis"));
    }
    let map_derived = c.is_map_derived(INDICATOR_TOL);
    let mut points = Vec::with_capacity(omega_samples.len());
    for (id, w) in omega_samples.iter().enumerate() {
        let walked = walk(c, w, Some(supports), true, map_derived, horizon)?;
        points.push(PointExactness {
            omega_id: id,
            norms: walked.norms.expect("requested"),
            dual: walked.dual.expect("requested"),
            tail: walked.tail,
            duality_gap: duality_gap(c, w, supports, horizon),
        });
    }
    let exact = points.iter().all(|p| p.norms.decayed(tol));
    let lin_trivial = points.iter().all(|p| p.dual.trivial(tol));
    let tail_trivial = map_derived.then(|| points.iter().all(|p| p.tail.as_ref().is_some_and(|t| t.trivial())));
    let agreement = exact == lin_trivial && tail_trivial.map_or(true, |t| t == lin_trivial);
    Ok(ExactnessReport {
        horizon,
        tol,
        points,
        exact,
        lin_trivial,
        tail_trivial,
        agreement,
    })
}
