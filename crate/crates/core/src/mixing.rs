//! Correlation functionals for homogeneous and inhomogeneous observables,
//! the prior/posterior mixing estimators, geometric rate fitting, and the
//! cyclic-baker construction that is mixing for homogeneous observables but
//! not for inhomogeneous ones.
//!
//! "Limit zero" is certified up to a horizon `H`: a curve has decayed when
//! every value in its tail window (the last 10% of the indices `0..=H`) is
//! below the tolerance. Prior and posterior estimators differ only in where
//! the decay threshold index is shared: per environment point across the
//! whole basis (prior), or per observable pair (posterior).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::cocycle::CocycleFamily;
use crate::driving::{DrivingSystem, EnvPoint};
use crate::error::{Error, Result};
use crate::measure::{check_same, Density, FiniteMeasureSpace, Observable, Space};
use crate::transfer::{pf_exact, MapSpec};

/// Values at or below this magnitude are treated as numerically zero by the
/// rate fit.
pub const RATE_FLOOR: f64 = 1e-14;

/// An environment-dependent observable `ω ↦ g_ω`.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservableMap {
    /// `g_ω ≡ g` (homogeneous).
    Constant(Observable),
    /// `g_ω` selected by the finite feature of `ω`.
    Step(Vec<Observable>),
    /// `g` defined along the orbit of one point only: `g_{σⁿω₀} = schedule[n]`.
    OrbitSchedule {
        origin: EnvPoint,
        schedule: Vec<Observable>,
    },
}

impl ObservableMap {
    /// `g` at `σⁿω`.
    pub fn at<'a>(&'a self, c: &CocycleFamily, w: &EnvPoint, n: usize) -> Result<&'a Observable> {
        match self {
            ObservableMap::Constant(g) => Ok(g),
            ObservableMap::Step(table) => {
                let feat = c.driving().feature(&c.advance(w, n as i64));
                table.get(feat).ok_or(Error::Dimension {
                    expected: c.driving().feature_count(),
                    found: table.len(),
                })
            }
            ObservableMap::OrbitSchedule { origin, schedule } => {
                if w != origin {
                    return Err(Error::Schedule(
                        "orbit-schedule observable queried from a point other than its origin".into(),
                    ));
                }
                schedule.get(n).ok_or_else(|| {
                    Error::Schedule(format!(
                        "orbit schedule covers n < {}, queried n = {n}",
                        schedule.len()
                    ))
                })
            }
        }
    }

    /// Step maps depend on one coordinate (a clopen partition of `Ω`) and so
    /// belong to the continuous class; orbit schedules are only measurable.
    pub fn is_continuous(&self) -> bool {
        !matches!(self, ObservableMap::OrbitSchedule { .. })
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self, ObservableMap::Constant(_))
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            ObservableMap::Constant(g) => g.sup_norm(),
            ObservableMap::Step(t) | ObservableMap::OrbitSchedule { schedule: t, .. } => {
                t.iter().fold(0.0, |a, g| a.max(g.sup_norm()))
            }
        }
    }

    fn space(&self) -> Option<&Space> {
        match self {
            ObservableMap::Constant(g) => Some(g.space()),
            ObservableMap::Step(t) | ObservableMap::OrbitSchedule { schedule: t, .. } => {
                t.first().map(|g| g.space())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    Prior,
    Posterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObservableClass {
    Homogeneous,
    /// bounded measurable maps `Ω → L^∞`
    InhomogeneousB,
    /// continuous maps `Ω → L^∞`
    InhomogeneousC,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Notion {
    pub order: Order,
    pub class: ObservableClass,
}

impl Notion {
    pub const PRIOR_HOM: Notion = Notion {
        order: Order::Prior,
        class: ObservableClass::Homogeneous,
    };
    pub const POST_HOM: Notion = Notion {
        order: Order::Posterior,
        class: ObservableClass::Homogeneous,
    };
    pub const PRIOR_INHOM: Notion = Notion {
        order: Order::Prior,
        class: ObservableClass::InhomogeneousB,
    };
    pub const POST_INHOM: Notion = Notion {
        order: Order::Posterior,
        class: ObservableClass::InhomogeneousB,
    };

    /// The four estimators compared by the equivalence cross-check.
    pub const FOUR: [Notion; 4] = [
        Notion::PRIOR_HOM,
        Notion::POST_HOM,
        Notion::PRIOR_INHOM,
        Notion::POST_INHOM,
    ];

    pub fn is_homogeneous(&self) -> bool {
        self.class == ObservableClass::Homogeneous
    }
}

impl fmt::Display for Notion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let order = match self.order {
            Order::Prior => "prior",
            Order::Posterior => "post",
        };
        let class = match self.class {
            ObservableClass::Homogeneous => "hom",
            ObservableClass::InhomogeneousB => "inhom",
            ObservableClass::InhomogeneousC => "inhom-c",
        };
        write!(f, "{order}-{class}")
    }
}

impl FromStr for Notion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (order, class) = s
            .split_once('-')
            .ok_or_else(|| Error::Parse(format!("unknown notion {s:?}")))?;
        let order = match order {
            "prior" => Order::Prior,
            "post" | "posterior" => Order::Posterior,
            _ => return Err(Error::Parse(format!("unknown notion {s:?}"))),
        };
        let class = match class {
            "hom" => ObservableClass::Homogeneous,
            "inhom" | "inhom-b" => ObservableClass::InhomogeneousB,
            "inhom-c" => ObservableClass::InhomogeneousC,
            _ => return Err(Error::Parse(format!("unknown notion {s:?}"))),
        };
        Ok(Notion { order, class })
    }
}

/// `∫ P⁽ⁿ⁾_ω f · g dm` for `f ∈ L¹₀`.
pub fn correlation_hom(
    c: &CocycleFamily,
    w: &EnvPoint,
    f: &Density,
    g: &Observable,
    n: usize,
) -> Result<f64> {
    f.require_zero_mean()?;
    check_same(c.space(), f.space())?;
    check_same(c.space(), g.space())?;
    Ok(crate::measure::dot(&c.push_mass(w, &f.masses(), n), g.values()))
}

/// `∫ P⁽ⁿ⁾_ω f · g_{σⁿω} dm` for `f ∈ L¹₀`.
pub fn correlation_inhom(
    c: &CocycleFamily,
    w: &EnvPoint,
    f: &Density,
    g: &ObservableMap,
    n: usize,
) -> Result<f64> {
    f.require_zero_mean()?;
    check_same(c.space(), f.space())?;
    let gn = g.at(c, w, n)?;
    check_same(c.space(), gn.space())?;
    Ok(crate::measure::dot(&c.push_mass(w, &f.masses(), n), gn.values()))
}

/// `n ↦ ∫ P⁽ⁿ⁾_ω f · g_{σⁿω} dm` for `n = 0..=horizon`.
pub fn correlation_curve(
    c: &CocycleFamily,
    w: &EnvPoint,
    f: &Density,
    g: &ObservableMap,
    horizon: usize,
) -> Result<Vec<f64>> {
    f.require_zero_mean()?;
    check_same(c.space(), f.space())?;
    let orbit = c.mass_orbit(w, &f.masses(), horizon);
    orbit
        .iter()
        .enumerate()
        .map(|(n, m)| Ok(crate::measure::dot(m, g.at(c, w, n)?.values())))
        .collect()
}

/// `δ_i − δ_{i+1}` with `δ_i` the unit point mass on cell `i`; spans `L¹₀`.
pub fn difference_basis(space: &Space) -> Vec<Density> {
    (0..space.len().saturating_sub(1))
        .map(|i| {
            Density::cell(space, i)
                .combine(1.0, &Density::cell(space, i + 1), -1.0)
                .expect("same space")
        })
        .collect()
}

/// Cell indicators; span `L^∞` on the grid.
pub fn indicator_basis(space: &Space) -> Vec<Observable> {
    (0..space.len())
        .map(|j| Observable::indicator(space, &[j]).expect("in range"))
        .collect()
}

/// The indicator basis as homogeneous maps.
pub fn homogeneous_basis(space: &Space) -> Vec<ObservableMap> {
    indicator_basis(space)
        .into_iter()
        .map(ObservableMap::Constant)
        .collect()
}

/// Step maps `ω ↦ 1_{feature(ω) = v} · 1_{cell j}`: a basis of the step maps
/// over the driving's feature partition.
pub fn step_basis(driving: &DrivingSystem, space: &Space) -> Vec<ObservableMap> {
    let q = driving.feature_count();
    let zero = Observable::constant(space, 0.0);
    let mut out = Vec::with_capacity(q * space.len());
    for v in 0..q {
        for g in indicator_basis(space) {
            let mut table = vec![zero.clone(); q];
            table[v] = g;
            out.push(ObservableMap::Step(table));
        }
    }
    out
}

/// Least-squares fit of `log|v_n| ≈ log C + n log λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub lambda: f64,
    pub log_c: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fits the decaying tail of a curve: the second half of the indices that
/// are above [`RATE_FLOOR`]. Returns `None` for curves that collapse to
/// zero before the end, are too small to fit, or have fewer than three
/// points in the window.
pub fn fit_rate(values: &[f64]) -> Option<RateFit> {
    let peak = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if peak <= 1e3 * RATE_FLOOR {
        return None;
    }
    let last = values.iter().rposition(|v| v.abs() > RATE_FLOOR)?;
    if last + 1 < values.len() {
        return None;
    }
    let start = (last / 2).max(1);
    let pts: Vec<(f64, f64)> = (start..=last)
        .map(|n| (n as f64, values[n].abs().ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(RateFit {
        lambda: slope.exp(),
        log_c: my - slope * mx,
        r_squared,
        points: pts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingOptions {
    pub horizon: usize,
    pub tol: f64,
    /// Keep every correlation curve in the report (needed for CSV output).
    pub keep_curves: bool,
}

impl MixingOptions {
    pub fn new(horizon: usize, tol: f64) -> Self {
        MixingOptions {
            horizon,
            tol,
            keep_curves: false,
        }
    }

    pub fn tail_start(&self) -> usize {
        tail_start(self.horizon)
    }
}

/// First index of the tail window: the last 10% of `0..=horizon`, at least
/// one index.
pub fn tail_start(horizon: usize) -> usize {
    let len = horizon + 1;
    let tail = (len as f64 * 0.1).ceil().max(1.0) as usize;
    len - tail
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub omega_id: usize,
    pub f_id: usize,
    pub g_id: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingReport {
    pub notion: Notion,
    pub horizon: usize,
    pub tol: f64,
    pub tail_start: usize,
    pub decayed: bool,
    /// Largest `|correlation|` in any tail window.
    pub tail_max: f64,
    /// Prior: the shared threshold index `N(ω)` per sampled point.
    /// Posterior: the threshold index per `(f, g)` pair, maximized over `ω`.
    pub thresholds: Vec<usize>,
    /// `n ↦ max_{m ≥ n} max_curves |value(m)|`
    pub envelope: Vec<f64>,
    /// Worst fitted geometric rate over curves that admit a fit; `Some(0.0)`
    /// when every curve collapses to zero within the horizon.
    pub rate: Option<f64>,
    pub min_r_squared: Option<f64>,
    pub curve_count: usize,
    pub curves: Vec<Curve>,
}

/// First index from which `|v| < tol` holds through the end of the curve.
fn threshold_index(values: &[f64], tol: f64) -> usize {
    match values.iter().rposition(|v| v.abs() >= tol) {
        Some(i) => i + 1,
        None => 0,
    }
}

struct CurveSummary {
    threshold: usize,
    abs: Vec<f64>,
    fit: Option<RateFit>,
    collapsed: bool,
    values: Option<Vec<f64>>,
}

/// Runs one mixing estimator over the given bases and environment samples.
pub fn estimate_mixing(
    c: &CocycleFamily,
    notion: Notion,
    f_basis: &[Density],
    g_basis: &[ObservableMap],
    omega_samples: &[EnvPoint],
    opts: &MixingOptions,
) -> Result<MixingReport> {
    if f_basis.is_empty() {
        return Err(Error::EmptyBasis("f basis"));
    }
    if g_basis.is_empty() {
        return Err(Error::EmptyBasis("g basis"));
    }
    if omega_samples.is_empty() {
        return Err(Error::EmptyBasis("environment samples"));
    }
    for f in f_basis {
        f.require_zero_mean()?;
        check_same(c.space(), f.space())?;
    }
    for g in g_basis {
        if let Some(s) = g.space() {
            check_same(c.space(), s)?;
        }
        if notion.is_homogeneous() && !g.is_homogeneous() {
            return Err(Error::Precondition(
                "homogeneous notion needs ω-constant observables".into(),
            ));
        }
        if notion.class == ObservableClass::InhomogeneousC && !g.is_continuous() {
            return Err(Error::Precondition(
                "continuous-class notion given a merely measurable observable map".into(),
            ));
        }
    }
    let h = opts.horizon;
    let tail_start = opts.tail_start();

    let jobs: Vec<(usize, usize)> = (0..omega_samples.len())
        .flat_map(|a| (0..f_basis.len()).map(move |b| (a, b)))
        .collect();
    let per_job: Result<Vec<Vec<CurveSummary>>> = jobs
        .par_iter()
        .map(|&(a, b)| {
            let w = &omega_samples[a];
            let orbit = c.mass_orbit(w, &f_basis[b].masses(), h);
            g_basis
                .iter()
                .map(|g| {
                    let values: Vec<f64> = orbit
                        .iter()
                        .enumerate()
                        .map(|(n, m)| Ok(crate::measure::dot(m, g.at(c, w, n)?.values())))
                        .collect::<Result<_>>()?;
                    let collapsed = values.last().map_or(true, |v| v.abs() <= RATE_FLOOR);
                    Ok(CurveSummary {
                        threshold: threshold_index(&values, opts.tol),
                        abs: values.iter().map(|v| v.abs()).collect(),
                        fit: fit_rate(&values),
                        collapsed,
                        values: opts.keep_curves.then_some(values),
                    })
                })
                .collect()
        })
        .collect();
    let per_job = per_job?;

    let ng = g_basis.len();
    let nf = f_basis.len();
    let mut envelope = vec![0.0f64; h + 1];
    let mut tail_max = 0.0f64;
    let mut prior = vec![0usize; omega_samples.len()];
    let mut posterior = vec![0usize; nf * ng];
    let mut rate: Option<f64> = None;
    let mut min_r2: Option<f64> = None;
    let mut all_collapsed = true;
    let mut curves = Vec::new();
    for (&(a, b), summaries) in jobs.iter().zip(per_job) {
        for (gi, s) in summaries.into_iter().enumerate() {
            for (n, v) in s.abs.iter().enumerate() {
                envelope[n] = envelope[n].max(*v);
                if n >= tail_start {
                    tail_max = tail_max.max(*v);
                }
            }
            prior[a] = prior[a].max(s.threshold);
            let pair = b * ng + gi;
            posterior[pair] = posterior[pair].max(s.threshold);
            if !s.collapsed {
                all_collapsed = false;
            }
            if let Some(fit) = s.fit {
                rate = Some(rate.map_or(fit.lambda, |r| r.max(fit.lambda)));
                min_r2 = Some(min_r2.map_or(fit.r_squared, |r| r.min(fit.r_squared)));
            }
            if let Some(values) = s.values {
                curves.push(Curve {
                    omega_id: a,
                    f_id: b,
                    g_id: gi,
                    values,
                });
            }
        }
    }
    for n in (0..h).rev() {
        envelope[n] = envelope[n].max(envelope[n + 1]);
    }
    if rate.is_none() && all_collapsed {
        rate = Some(0.0);
    }
    let thresholds = match notion.order {
        Order::Prior => prior,
        Order::Posterior => posterior,
    };
    let decayed = thresholds.iter().all(|t| *t <= tail_start);
    debug_assert_eq!(decayed, tail_max < opts.tol);
    Ok(MixingReport {
        notion,
        horizon: h,
        tol: opts.tol,
        tail_start,
        decayed,
        tail_max,
        thresholds,
        envelope,
        rate,
        min_r_squared: min_r2,
        curve_count: jobs.len() * ng,
        curves,
    })
}

/// The four estimator verdicts with the default bases: difference densities,
/// cell indicators (homogeneous) and feature-step indicators (inhomogeneous).
pub fn four_verdicts(
    c: &CocycleFamily,
    omega_samples: &[EnvPoint],
    opts: &MixingOptions,
) -> Result<Vec<MixingReport>> {
    let f_basis = difference_basis(c.space());
    let hom = homogeneous_basis(c.space());
    let inhom = step_basis(c.driving(), c.space());
    Notion::FOUR
        .iter()
        .map(|notion| {
            let g = if notion.is_homogeneous() { &hom } else { &inhom };
            estimate_mixing(c, *notion, &f_basis, g, omega_samples, opts)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleRow {
    pub n: usize,
    /// `∫ P⁽ⁿ⁾_ω f · g_{σⁿω} dm`
    pub inhom: f64,
    /// `∫ (Lⁿ 1_A)² dm`
    pub square_integral: f64,
    /// `m(supp Lⁿ1_A ∩ supp Lⁿ1_{X∖A})`
    pub overlap_measure: f64,
    /// `max |Lⁿ1_A · Lⁿ1_{X∖A}|`, exactly 0 for a bijection
    pub product_max: f64,
    /// `max_j |∫ P⁽ⁿ⁾_ω f · 1_{cell j} dm|`
    pub hom_max_abs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleReport {
    pub k: usize,
    pub cells: usize,
    /// `σⁿω` distinct for `n ≤ n_max`, so the schedule is a function of `ω̃`.
    pub orbit_distinct: bool,
    pub rows: Vec<CounterexampleRow>,
    pub passed: bool,
}

/// The cyclic-shift baker operator on `2^{2k}` cells as a constant cocycle,
/// `A = {b₁ = 0}`, `f = 1_A − 1_{X∖A}`, and the orbit schedule
/// `g_{σⁿω} = Lⁿ 1_A`. Rows cover `n = 0..=n_max`.
pub fn baker_counterexample(k: usize, n_max: usize) -> Result<CounterexampleReport> {
    if k < 2 {
        return Err(Error::Precondition(format!("k must be at least 2, got {k}")));
    }
    if k > 12 {
        return Err(Error::Precondition(format!("k = {k} needs 2^{} cells; at most 12 supported", 2 * k)));
    }
    if n_max > 2 * k {
        return Err(Error::Horizon(format!(
            "the cyclic baker model has period {}; horizon {n_max} exceeds it",
            2 * k
        )));
    }
    let cells = 1usize << (2 * k);
    let space = FiniteMeasureSpace::uniform(cells)?;
    let l = pf_exact(&MapSpec::baker_cyclic(k as u32)?, &space)?;
    let q = n_max + 1;
    let c = CocycleFamily::constant_over(DrivingSystem::rotation(q, 1)?, l.clone());
    let w = EnvPoint::Finite(0);
    let orbit_distinct = {
        let mut seen: Vec<EnvPoint> = (0..=n_max).map(|n| c.advance(&w, n as i64)).collect();
        seen.sort_by_key(|p| c.driving().feature(p));
        seen.dedup();
        seen.len() == n_max + 1
    };

    let a: Vec<usize> = (0..cells / 2).collect();
    let ac: Vec<usize> = (cells / 2..cells).collect();
    let one_a = Density::indicator(&space, &a)?;
    let one_ac = Density::indicator(&space, &ac)?;
    let f = one_a.combine(1.0, &one_ac, -1.0)?;

    let mut pushed_a = Vec::with_capacity(n_max + 1);
    let mut pushed_ac = Vec::with_capacity(n_max + 1);
    let (mut ia, mut iac) = (one_a, one_ac);
    for _ in 0..=n_max {
        pushed_a.push(ia.clone());
        pushed_ac.push(iac.clone());
        ia = l.apply(&ia)?;
        iac = l.apply(&iac)?;
    }
    let schedule: Vec<Observable> = pushed_a.iter().map(Observable::from_density).collect();
    let g = ObservableMap::OrbitSchedule {
        origin: w.clone(),
        schedule,
    };

    let curve = correlation_curve(&c, &w, &f, &g, n_max)?;
    let mut rows = Vec::with_capacity(n_max + 1);
    let mut passed = orbit_distinct;
    for n in 0..=n_max {
        let la = &pushed_a[n];
        let lac = &pushed_ac[n];
        let mut product_max = 0.0f64;
        let mut overlap = 0.0;
        for i in 0..cells {
            let p = la.values()[i] * lac.values()[i];
            product_max = product_max.max(p.abs());
            if la.values()[i] != 0.0 && lac.values()[i] != 0.0 {
                overlap += space.weight(i);
            }
        }
        let square_integral =
            crate::measure::integrate(la, &Observable::from_density(la))?;
        let pushed_f = c.push_mass(&w, &f.masses(), n);
        let hom_max_abs = pushed_f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if (curve[n] - 0.5).abs() > 1e-12 || product_max != 0.0 || overlap != 0.0 {
            passed = false;
        }
        rows.push(CounterexampleRow {
            n,
            inhom: curve[n],
            square_integral,
            overlap_measure: overlap,
            product_max,
            hom_max_abs,
        });
    }
    Ok(CounterexampleReport {
        k,
        cells,
        orbit_distinct,
        rows,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::MarkovMatrix;
    use crate::transfer::pf_ulam;

    fn doubling_cocycle(n: usize) -> CocycleFamily {
        CocycleFamily::constant(pf_exact(&MapSpec::Doubling, &FiniteMeasureSpace::uniform(n).unwrap()).unwrap())
    }

    #[test]
    fn constant_observable_gives_zero() {
        let c = doubling_cocycle(8);
        let s = c.space().clone();
        let f = Density::new(&s, vec![1.0, -1.0, 2.0, -2.0, 0.5, -0.5, 0.0, 0.0]).unwrap();
        for n in 0..6 {
            let v = correlation_hom(&c, &EnvPoint::Finite(0), &f, &Observable::constant(&s, 3.0), n).unwrap();
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn doubling_correlation_hand_values() {
        let c = doubling_cocycle(4);
        let s = c.space().clone();
        let f = Density::from_masses(&s, &[1.0, -1.0, 0.0, 0.0]).unwrap();
        let g = Observable::indicator(&s, &[0]).unwrap();
        let w = EnvPoint::Finite(0);
        assert_eq!(correlation_hom(&c, &w, &f, &g, 0).unwrap(), 1.0);
        // masses after one step: (½, ½, −½, −½)
        assert_eq!(correlation_hom(&c, &w, &f, &g, 1).unwrap(), 0.5);
        assert_eq!(correlation_hom(&c, &w, &f, &g, 2).unwrap(), 0.0);
    }

    #[test]
    fn correlation_requires_zero_mean() {
        let c = doubling_cocycle(4);
        let s = c.space().clone();
        let err = correlation_hom(&c, &EnvPoint::Finite(0), &Density::uniform(&s), &Observable::constant(&s, 1.0), 1)
            .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn inhom_reduces_to_hom() {
        let s = FiniteMeasureSpace::uniform(8).unwrap();
        let p0 = pf_exact(&MapSpec::Doubling, &s).unwrap();
        let p1 = pf_exact(&MapSpec::Tent, &s).unwrap();
        let c = CocycleFamily::new(DrivingSystem::rotation(2, 1).unwrap(), vec![p0, p1]).unwrap();
        let f = difference_basis(&s)[3].clone();
        let g = Observable::new(&s, (0..8).map(|i| (i as f64 * 0.7).cos()).collect()).unwrap();
        let map = ObservableMap::Constant(g.clone());
        for w in 0..2 {
            let w = EnvPoint::Finite(w);
            for n in 0..5 {
                assert_eq!(
                    correlation_inhom(&c, &w, &f, &map, n).unwrap(),
                    correlation_hom(&c, &w, &f, &g, n).unwrap()
                );
            }
        }
        let zero = ObservableMap::Step(vec![Observable::constant(&s, 0.0); 2]);
        assert_eq!(correlation_inhom(&c, &EnvPoint::Finite(1), &f, &zero, 3).unwrap(), 0.0);
    }

    #[test]
    fn orbit_schedule_rejects_foreign_queries() {
        let c = CocycleFamily::constant_over(
            DrivingSystem::rotation(3, 1).unwrap(),
            MarkovMatrix::identity(&FiniteMeasureSpace::uniform(2).unwrap()),
        );
        let s = c.space().clone();
        let g = ObservableMap::OrbitSchedule {
            origin: EnvPoint::Finite(0),
            schedule: vec![Observable::constant(&s, 1.0); 2],
        };
        let f = difference_basis(&s)[0].clone();
        assert!(matches!(correlation_inhom(&c, &EnvPoint::Finite(1), &f, &g, 0), Err(Error::Schedule(_))));
        assert!(matches!(correlation_inhom(&c, &EnvPoint::Finite(0), &f, &g, 2), Err(Error::Schedule(_))));
        assert!(correlation_inhom(&c, &EnvPoint::Finite(0), &f, &g, 1).is_ok());
    }

    #[test]
    fn notion_round_trip() {
        for n in Notion::FOUR {
            assert_eq!(n.to_string().parse::<Notion>().unwrap(), n);
        }
        assert!("sideways-hom".parse::<Notion>().is_err());
    }

    #[test]
    fn tail_window_is_last_tenth() {
        assert_eq!(MixingOptions::new(40, 1e-6).tail_start(), 36);
        assert_eq!(MixingOptions::new(30, 1e-6).tail_start(), 27);
        assert_eq!(MixingOptions::new(0, 1e-6).tail_start(), 0);
    }

    #[test]
    fn ulam_doubling_is_mixing_with_fast_rate() {
        let s = FiniteMeasureSpace::uniform(64).unwrap();
        let p = pf_ulam(&MapSpec::Doubling, &s, 10_000, 7).unwrap();
        let c = CocycleFamily::constant(p);
        let rep = estimate_mixing(
            &c,
            Notion::PRIOR_HOM,
            &difference_basis(&s),
            &homogeneous_basis(&s),
            &[EnvPoint::Finite(0)],
            &MixingOptions::new(30, 1e-6),
        )
        .unwrap();
        assert!(rep.decayed, "tail max {}", rep.tail_max);
        assert!(rep.rate.unwrap() <= 0.6, "rate {:?}", rep.rate);
    }

    #[test]
    fn baker_and_identity_do_not_decay() {
        let s = FiniteMeasureSpace::uniform(16).unwrap();
        let baker = CocycleFamily::constant(pf_exact(&MapSpec::baker_cyclic(2).unwrap(), &s).unwrap());
        let id = CocycleFamily::constant(MarkovMatrix::identity(&s));
        for c in [baker, id] {
            for rep in four_verdicts(&c, &[EnvPoint::Finite(0)], &MixingOptions::new(20, 1e-6)).unwrap() {
                assert!(!rep.decayed, "{}", rep.notion);
            }
        }
    }

    #[test]
    fn empty_basis_is_rejected() {
        let c = doubling_cocycle(4);
        let s = c.space().clone();
        let err = estimate_mixing(&c, Notion::PRIOR_HOM, &[], &homogeneous_basis(&s), &[EnvPoint::Finite(0)], &MixingOptions::new(5, 1e-6))
            .unwrap_err();
        assert!(matches!(err, Error::EmptyBasis(_)));
    }

    #[test]
    fn homogeneous_notion_rejects_step_maps() {
        let c = doubling_cocycle(4);
        let s = c.space().clone();
        let err = estimate_mixing(
            &c,
            Notion::POST_HOM,
            &difference_basis(&s),
            &step_basis(c.driving(), &s),
            &[EnvPoint::Finite(0)],
            &MixingOptions::new(5, 1e-6),
        );
        // the trivial driving has one feature, so step maps are constant in ω
        // but still typed as step maps
        assert!(err.is_err());
    }

    #[test]
    fn rate_fit_recovers_geometric_decay() {
        let v: Vec<f64> = (0..30).map(|n| 3.0 * 0.45f64.powi(n)).collect();
        let fit = fit_rate(&v).unwrap();
        assert!((fit.lambda - 0.45).abs() < 1e-12);
        assert!((fit.log_c - 3.0f64.ln()).abs() < 1e-9);
        let collapsed = [1.0, 0.5, 0.0, 0.0];
        assert!(fit_rate(&collapsed).is_none());
    }

    #[test]
    fn counterexample_small() {
        let rep = baker_counterexample(2, 4).unwrap();
        assert!(rep.passed);
        assert!(rep.orbit_distinct);
        for r in &rep.rows {
            assert_eq!(r.inhom, 0.5);
            assert_eq!(r.square_integral, 0.5);
            assert_eq!(r.product_max, 0.0);
        }
        assert!(matches!(baker_counterexample(2, 5), Err(Error::Horizon(_))));
        assert!(matches!(baker_counterexample(1, 2), Err(Error::Precondition(_))));
    }
}
