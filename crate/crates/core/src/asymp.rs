//! Asymptotic periodicity: detection of `(r, g_i^ω, λ_i^ω, ρ_ω)` by
//! clustering the rows of burned-in kernels, asymptotic stability, the
//! restricted-power exactness check and quasi-constrictivity probing.
//!
//! Components at `ω` are read from `K⁽ᴮ⁾_{σ⁻ᴮω}`, whose rows are the images
//! at `ω` of the cell point masses started `B` steps earlier. Rows within
//! `merge_tol` (L¹) are one profile; rows at least `split_tol` apart are
//! distinct; anything between is reported as indeterminate. Profiles whose
//! support contains no other profile's support are the components; the
//! rest are mixtures and only feed `λ`.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::cocycle::CocycleFamily;
use crate::driving::{DrivingSystem, EnvPoint};
use crate::error::{Error, Result};
use crate::exactness::{exactness_report_with, ExactnessReport};
use crate::measure::{check_same, Density, FiniteMeasureSpace, MarkovMatrix, Observable};
use crate::mixing::{difference_basis, tail_start};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicityOptions {
    pub burn_in: usize,
    pub horizon: usize,
    pub r_max: usize,
    pub merge_tol: f64,
    pub split_tol: f64,
    /// Largest `‖P_ω g_i^ω − g_j^{σω}‖` accepted when reading off `ρ_ω`.
    pub match_tol: f64,
    /// Relative floor defining the support of a profile.
    pub support_floor: f64,
    /// Largest residual for which a decomposition is returned.
    pub residual_tol: f64,
}

impl PeriodicityOptions {
    /// Burn-in `2·log₂N` capped at `horizon/2`.
    pub fn new(cells: usize, horizon: usize, r_max: usize) -> Self {
        PeriodicityOptions {
            burn_in: default_burn_in(cells, horizon),
            horizon,
            r_max,
            merge_tol: 1e-8,
            split_tol: 1e-3,
            match_tol: 1e-6,
            support_floor: crate::cocycle::DEFAULT_SUPPORT_FLOOR,
            residual_tol: 1e-8,
        }
    }
}

pub fn default_burn_in(cells: usize, horizon: usize) -> usize {
    let log = (cells.max(2) as f64).log2().ceil() as usize;
    (2 * log).min(horizon / 2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicDecomposition {
    pub r: usize,
    pub points: Vec<EnvPoint>,
    /// `g_i^ω` per sampled point, ordered by the smallest cell of the support.
    pub components: Vec<Vec<Density>>,
    /// `g_i^{σω}` per sampled point.
    pub next_components: Vec<Vec<Density>>,
    /// `ρ_ω(i)` per sampled point.
    pub rho: Vec<Vec<usize>>,
    /// `λ_i^ω` as observables: `λ_i^ω(f) = ∫ f · lambda[ω][i] dm`.
    pub lambda: Vec<Vec<Observable>>,
    pub residual: f64,
    /// `max ‖P_ω g_i^ω − g_{ρ_ω(i)}^{σω}‖_{L¹}`
    pub invariance_defect: f64,
    /// `max_f |Σ_i λ_i^ω(f) − 1|` over the cell densities.
    pub lambda_sum_defect: f64,
    /// `ρ` read off step by step over the burn-in agrees with the direct
    /// `B`-step reading at every sampled point.
    pub rho_consistent: bool,
    pub options: PeriodicityOptions,
}

impl PeriodicDecomposition {
    pub fn rho_constant(&self) -> bool {
        self.rho.windows(2).all(|w| w[0] == w[1])
    }

    /// Order of `ρ` when it is the same at every sampled point.
    pub fn rho_order(&self) -> Option<usize> {
        if !self.rho_constant() {
            return None;
        }
        let rho = self.rho.first()?;
        let mut cur: Vec<usize> = (0..self.r).collect();
        for k in 1..=self.r.max(1) * self.r.max(1) + 1 {
            cur = cur.iter().map(|i| rho[*i]).collect();
            if cur.iter().enumerate().all(|(i, v)| i == *v) {
                return Some(k);
            }
        }
        None
    }

    pub fn omega_index(&self, w: &EnvPoint) -> Option<usize> {
        self.points.iter().position(|p| p == w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PeriodicityOutcome {
    Found(PeriodicDecomposition),
    /// No decomposition with at most `r_max` components absorbs the basis.
    NoneFound {
        components: usize,
        best_residual: f64,
    },
    Indeterminate {
        omega_id: usize,
        detail: String,
    },
}

impl PeriodicityOutcome {
    pub fn decomposition(&self) -> Option<&PeriodicDecomposition> {
        match self {
            PeriodicityOutcome::Found(d) => Some(d),
            _ => None,
        }
    }
}

/// Components at one point: normalized profiles plus the support of each.
#[derive(Debug, Clone)]
struct Components {
    densities: Vec<Density>,
    supports: Vec<Vec<bool>>,
}

enum Clustered {
    Ok(Components),
    Indeterminate(String),
}

fn profile_distance(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut d) = (0, 0, 0.0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x.0 == y.0 => {
                d += (x.1 - y.1).abs();
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x.0 < y.0 => {
                d += x.1.abs();
                i += 1;
            }
            (Some(_), Some(y)) => {
                d += y.1.abs();
                j += 1;
            }
            (Some(x), None) => {
                d += x.1.abs();
                i += 1;
            }
            (None, Some(y)) => {
                d += y.1.abs();
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    d
}

fn row_profile(k: &MarkovMatrix, i: usize) -> Vec<(usize, f64)> {
    let (cols, vals) = k.row(i);
    cols.iter().copied().zip(vals.iter().copied()).collect()
}

fn cluster(k: &MarkovMatrix, opts: &PeriodicityOptions) -> Clustered {
    let n = k.len();
    let space = k.space();
    let mut reps: Vec<Vec<(usize, f64)>> = Vec::new();
    for i in 0..n {
        let row = row_profile(k, i);
        let mut home = None;
        for (c, rep) in reps.iter().enumerate() {
            let d = profile_distance(&row, rep);
            if d <= opts.merge_tol {
                home = Some(c);
                break;
            }
            if d < opts.split_tol {
                return Clustered::Indeterminate(format!(
                    "row {i} is {d:e} from profile {c}: neither merged nor distinct"
                ));
            }
        }
        if home.is_none() {
            reps.push(row);
        }
    }
    let supports: Vec<Vec<bool>> = reps
        .iter()
        .map(|rep| {
            let max = rep.iter().fold(0.0f64, |a, (_, v)| a.max(*v));
            let mut s = vec![false; n];
            for (j, v) in rep {
                if *v > opts.support_floor * max {
                    s[*j] = true;
                }
            }
            s
        })
        .collect();
    let subset = |a: &[bool], b: &[bool]| a.iter().zip(b).all(|(x, y)| !*x || *y);
    let pure: Vec<usize> = (0..reps.len())
        .filter(|&c| {
            !(0..reps.len()).any(|o| o != c && subset(&supports[o], &supports[c]) && supports[o] != supports[c])
        })
        .collect();
    for (a, &p) in pure.iter().enumerate() {
        for &q in &pure[a + 1..] {
            let overlap: f64 = (0..n)
                .filter(|j| supports[p][*j] && supports[q][*j])
                .map(|j| space.weight(j))
                .sum();
            if overlap > 0.0 {
                return Clustered::Indeterminate(format!(
                    "profiles {p} and {q} overlap on measure {overlap:e}"
                ));
            }
        }
    }
    let mut comps: Vec<(usize, Density, Vec<bool>)> = pure
        .into_iter()
        .map(|c| {
            let mut mass = vec![0.0; n];
            for (j, v) in &reps[c] {
                mass[*j] = *v;
            }
            let total: f64 = mass.iter().sum();
            mass.iter_mut().for_each(|m| *m /= total);
            let first = supports[c].iter().position(|s| *s).unwrap_or(n);
            let d = Density::from_masses(space, &mass).expect("same space");
            (first, d, supports[c].clone())
        })
        .collect();
    comps.sort_by_key(|c| c.0);
    Clustered::Ok(Components {
        densities: comps.iter().map(|c| c.1.clone()).collect(),
        supports: comps.into_iter().map(|c| c.2).collect(),
    })
}

struct Detector<'a> {
    c: &'a CocycleFamily,
    opts: PeriodicityOptions,
    cache: HashMap<EnvPoint, Components>,
}

impl<'a> Detector<'a> {
    fn components(&mut self, w: &EnvPoint) -> std::result::Result<Components, String> {
        if let Some(c) = self.cache.get(w) {
            return Ok(c.clone());
        }
        let start = self.c.advance(w, -(self.opts.burn_in as i64));
        let k = self.c.compose(&start, self.opts.burn_in);
        match cluster(&k, &self.opts) {
            Clustered::Ok(comp) => {
                self.cache.insert(w.clone(), comp.clone());
                Ok(comp)
            }
            Clustered::Indeterminate(d) => Err(d),
        }
    }

    /// Index of the component at `target` that `mass` matches.
    fn locate(&self, mass: &[f64], target: &Components) -> Option<usize> {
        let w = self.c.space().weights();
        target
            .densities
            .iter()
            .map(|g| {
                g.values()
                    .iter()
                    .zip(w)
                    .zip(mass)
                    .map(|((v, w), m)| (v * w - m).abs())
                    .sum::<f64>()
            })
            .enumerate()
            .filter(|(_, d)| *d <= self.opts.match_tol)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    /// `ρ` over `steps` steps, read directly from pushed components.
    fn rho_over(&mut self, w: &EnvPoint, from: &Components, steps: usize) -> std::result::Result<Vec<usize>, String> {
        let to = self.components(&self.c.advance(w, steps as i64))?;
        from.densities
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let pushed = self.c.push_mass(w, &g.masses(), steps);
                self.locate(&pushed, &to)
                    .ok_or_else(|| format!("component {i} does not land on a component after {steps} steps"))
            })
            .collect()
    }
}

fn decomposition_residual(
    c: &CocycleFamily,
    w: &EnvPoint,
    lambda: &[Vec<f64>],
    comps: &[Density],
    horizon: usize,
) -> f64 {
    let k = c.compose(w, horizon);
    let pushed: Vec<Vec<f64>> = comps.iter().map(|g| k.push_mass(&g.masses())).collect();
    let n = k.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut v = vec![0.0; n];
            let (cols, vals) = k.row(i);
            for (j, x) in cols.iter().zip(vals) {
                v[*j] += x;
            }
            for (g, lam) in pushed.iter().zip(lambda) {
                for j in 0..n {
                    v[j] -= lam[i] * g[j];
                }
            }
            v.iter().map(|x| x.abs()).sum::<f64>()
        })
        .reduce(|| 0.0, f64::max)
}

/// Absorbed mass of each cell point mass in each component after `steps`.
fn absorbed(c: &CocycleFamily, w: &EnvPoint, target: &Components, rho: &[usize], steps: usize) -> Vec<Vec<f64>> {
    let k = c.compose(w, steps);
    let n = k.len();
    let mut lambda = vec![vec![0.0; n]; rho.len()];
    for i in 0..n {
        let (cols, vals) = k.row(i);
        for (comp, &image) in rho.iter().enumerate() {
            let s = &target.supports[image];
            lambda[comp][i] = cols.iter().zip(vals).filter(|(j, _)| s[**j]).map(|(_, v)| v).sum();
        }
    }
    lambda
}

/// Searches for an asymptotically periodic decomposition.
pub fn detect_periodicity(
    c: &CocycleFamily,
    omega_samples: &[EnvPoint],
    opts: &PeriodicityOptions,
) -> Result<PeriodicityOutcome> {
    if opts.r_max == 0 {
        return Err(Error::Precondition("r_max must be at least 1".into()));
    }
    if omega_samples.is_empty() {
        return Err(Error::EmptyBasis("environment samples"));
    }
    if opts.burn_in > opts.horizon {
        return Err(Error::Horizon(format!(
            "burn-in {} exceeds horizon {}",
            opts.burn_in, opts.horizon
        )));
    }
    let mut det = Detector {
        c,
        opts: *opts,
        cache: HashMap::new(),
    };
    let b = opts.burn_in;
    let mut r = None;
    let mut out = PeriodicDecomposition {
        r: 0,
        points: omega_samples.to_vec(),
        components: Vec::new(),
        next_components: Vec::new(),
        rho: Vec::new(),
        lambda: Vec::new(),
        residual: 0.0,
        invariance_defect: 0.0,
        lambda_sum_defect: 0.0,
        rho_consistent: true,
        options: *opts,
    };
    let space = c.space();
    for (id, w) in omega_samples.iter().enumerate() {
        let indeterminate = |detail: String| Ok(PeriodicityOutcome::Indeterminate { omega_id: id, detail });
        let here = match det.components(w) {
            Ok(x) => x,
            Err(d) => return indeterminate(d),
        };
        let count = here.densities.len();
        match r {
            None => r = Some(count),
            Some(r0) if r0 != count => {
                return indeterminate(format!("{count} components here, {r0} at the first sampled point"));
            }
            _ => {}
        }
        if count > opts.r_max {
            let lambda: Vec<Vec<f64>> = grouped_lambda(c, w, &here, opts.r_max);
            let grouped = group_components(&here, opts.r_max);
            let best = decomposition_residual(c, w, &lambda, &grouped, opts.horizon);
            return Ok(PeriodicityOutcome::NoneFound {
                components: count,
                best_residual: best,
            });
        }
        let rho = match det.rho_over(w, &here, 1) {
            Ok(x) => x,
            Err(d) => return indeterminate(d),
        };
        let mut sorted = rho.clone();
        sorted.sort_unstable();
        if sorted != (0..count).collect::<Vec<_>>() {
            return indeterminate(format!("component images {rho:?} are not a permutation"));
        }
        let rho_b = match det.rho_over(w, &here, b) {
            Ok(x) => x,
            Err(d) => return indeterminate(d),
        };
        let mut stepwise: Vec<usize> = (0..count).collect();
        let mut cur = w.clone();
        for _ in 0..b {
            let comp = match det.components(&cur) {
                Ok(x) => x,
                Err(d) => return indeterminate(d),
            };
            let step = match det.rho_over(&cur, &comp, 1) {
                Ok(x) => x,
                Err(d) => return indeterminate(d),
            };
            stepwise = stepwise.iter().map(|i| step[*i]).collect();
            cur = c.advance(&cur, 1);
        }
        if stepwise != rho_b {
            out.rho_consistent = false;
        }
        let target = match det.components(&c.advance(w, b as i64)) {
            Ok(x) => x,
            Err(d) => return indeterminate(d),
        };
        let lambda = absorbed(c, w, &target, &rho_b, b);
        for i in 0..space.len() {
            let s: f64 = lambda.iter().map(|l| l[i]).sum();
            out.lambda_sum_defect = out.lambda_sum_defect.max((s - 1.0).abs());
        }
        let next = match det.components(&c.advance(w, 1)) {
            Ok(x) => x,
            Err(d) => return indeterminate(d),
        };
        for (i, g) in here.densities.iter().enumerate() {
            let pushed = c.operator_at(w).push_mass(&g.masses());
            let d: f64 = next.densities[rho[i]]
                .masses()
                .iter()
                .zip(&pushed)
                .map(|(a, b)| (a - b).abs())
                .sum();
            out.invariance_defect = out.invariance_defect.max(d);
        }
        let residual = decomposition_residual(c, w, &lambda, &here.densities, opts.horizon);
        out.residual = out.residual.max(residual);
        out.components.push(here.densities.clone());
        out.next_components.push(next.densities.clone());
        out.rho.push(rho);
        out.lambda.push(
            lambda
                .iter()
                .map(|l| {
                    // λ(e_i) with e_i the unit point mass; as an observable
                    // paired against densities this is the same vector.
                    Observable::new(space, l.clone()).expect("same space")
                })
                .collect(),
        );
    }
    out.r = r.unwrap_or(0);
    if out.residual > opts.residual_tol {
        return Ok(PeriodicityOutcome::NoneFound {
            components: out.r,
            best_residual: out.residual,
        });
    }
    Ok(PeriodicityOutcome::Found(out))
}

fn group_of(i: usize, count: usize, groups: usize) -> usize {
    i * groups / count
}

fn group_components(comp: &Components, groups: usize) -> Vec<Density> {
    let count = comp.densities.len();
    let space = comp.densities[0].space().clone();
    let mut masses = vec![vec![0.0; space.len()]; groups];
    let mut members = vec![0usize; groups];
    for (i, g) in comp.densities.iter().enumerate() {
        let k = group_of(i, count, groups);
        members[k] += 1;
        for (a, m) in masses[k].iter_mut().zip(g.masses()) {
            *a += m;
        }
    }
    masses
        .iter()
        .zip(members)
        .map(|(m, c)| {
            let scaled: Vec<f64> = m.iter().map(|x| x / c as f64).collect();
            Density::from_masses(&space, &scaled).expect("same space")
        })
        .collect()
}

fn grouped_lambda(c: &CocycleFamily, w: &EnvPoint, comp: &Components, groups: usize) -> Vec<Vec<f64>> {
    let count = comp.densities.len();
    let ident: Vec<usize> = (0..count).collect();
    // Cells are credited to the group of the component holding their mass
    // at ω itself, which is the best a coarser partition can do.
    let per = absorbed(c, w, comp, &ident, 0);
    let mut out = vec![vec![0.0; c.space().len()]; groups];
    for (i, l) in per.iter().enumerate() {
        for (a, v) in out[group_of(i, count, groups)].iter_mut().zip(l) {
            *a += v;
        }
    }
    out
}

/// `r = 1`.
pub fn stability_check(d: &PeriodicDecomposition) -> bool {
    d.r == 1
}

/// `h_ω = (1/r) Σ_i g_i^ω`, checked against `P_ω h_ω = h_{σω}`.
pub fn invariant_density_from_decomposition(
    c: &CocycleFamily,
    d: &PeriodicDecomposition,
    w: &EnvPoint,
) -> Result<Density> {
    let k = d
        .omega_index(w)
        .ok_or_else(|| Error::Precondition("point was not sampled by the decomposition".into()))?;
    let avg = |gs: &[Density]| -> Result<Density> {
        let mut acc = Density::zero(c.space());
        for g in gs {
            acc = acc.combine(1.0, g, 1.0 / gs.len() as f64)?;
        }
        Ok(acc)
    };
    let h = avg(&d.components[k])?;
    let next = avg(&d.next_components[k])?;
    let defect = c.operator_at(w).apply(&h)?.l1_distance(&next)?;
    if defect > 1e-8 {
        return Err(Error::invariant(
            "invariant density",
            format!("‖P_ω h_ω − h_σω‖ = {defect:e}"),
        ));
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedCheck {
    pub component: usize,
    pub cells: Vec<usize>,
    pub leak: f64,
    pub report: ExactnessReport,
    /// Largest `‖P̃⁽¹⁾ f‖` over the restricted difference basis.
    pub norm_after_one: f64,
}

/// For constant `ρ` of order `k`: `P⁽ᵏ⁾` restricted to each `supp g_i`
/// over `σᵏ`, tested for exactness. Requires a finite driving and supports
/// that do not depend on `ω`.
pub fn restricted_power_exactness(
    c: &CocycleFamily,
    d: &PeriodicDecomposition,
    horizon: usize,
    tol: f64,
) -> Result<Vec<RestrictedCheck>> {
    let fin = c
        .driving()
        .as_finite()
        .ok_or_else(|| Error::Unsupported("restricted cocycles need a finite driving".into()))?;
    let k = d
        .rho_order()
        .ok_or_else(|| Error::Precondition("ρ is not constant over the sampled points".into()))?;
    let points: Vec<EnvPoint> = (0..fin.len()).map(EnvPoint::Finite).collect();
    let mut det = Detector {
        c,
        opts: d.options,
        cache: HashMap::new(),
    };
    let all: Vec<Components> = points
        .iter()
        .map(|w| det.components(w).map_err(Error::Precondition))
        .collect::<Result<_>>()?;
    if all.iter().any(|a| a.supports != all[0].supports) {
        return Err(Error::Unsupported("component supports vary with ω".into()));
    }
    let driving = DrivingSystem::Finite(fin.power(k)?);
    let mut out = Vec::new();
    for (i, support) in all[0].supports.iter().enumerate() {
        let cells: Vec<usize> = (0..support.len()).filter(|j| support[*j]).collect();
        let total = c.space().measure_of(&cells);
        let sub = FiniteMeasureSpace::new(cells.iter().map(|j| c.space().weight(*j) / total).collect())?;
        let mut leak = 0.0f64;
        let mut table = Vec::with_capacity(points.len());
        for w in &points {
            let (p, l) = c.compose(w, k).restrict(&cells, &sub)?;
            leak = leak.max(l);
            table.push(p);
        }
        if leak > 1e-9 {
            return Err(Error::invariant(
                "restricted cocycle",
                format!("component {i} leaks {leak:e} of its mass under P^({k})"),
            ));
        }
        let rc = CocycleFamily::new(driving.clone(), table)?;
        let basis = difference_basis(&sub);
        let report = if basis.is_empty() {
            None
        } else {
            Some(exactness_report_with(&rc, &points, &basis, horizon, tol)?)
        };
        let report = match report {
            Some(r) => r,
            None => ExactnessReport {
                horizon,
                tol,
                points: Vec::new(),
                exact: true,
                lin_trivial: true,
                tail_trivial: None,
                agreement: true,
            },
        };
        let norm_after_one = report
            .points
            .iter()
            .flat_map(|p| p.norms.curves.iter().map(|c| c.get(1).copied().unwrap_or(0.0)))
            .fold(0.0, f64::max);
        out.push(RestrictedCheck {
            component: i,
            cells,
            leak,
            report,
            norm_after_one,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonRow {
    pub eps: f64,
    /// Measure of the smallest failing set, or `None` when every set passes.
    pub delta: Option<f64>,
    pub passed: bool,
    /// A failing set of smallest measure with its tail-sup mass.
    pub witness: Option<(Vec<usize>, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasiConstrictiveReport {
    pub rows: Vec<EpsilonRow>,
    pub samples: usize,
    pub quasi_constrictive: bool,
    /// `(m(E), tail-sup of ∫_E P⁽ⁿ⁾f dm)` per family member.
    pub set_values: Vec<(f64, f64)>,
}

/// Contiguous runs of `2^k` cells starting at every cell, for every
/// `2^k ≤ max_cells`.
pub fn dyadic_runs(cells: usize, max_cells: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut len = 1;
    while len <= max_cells.min(cells) {
        for start in 0..=cells - len {
            out.push((start..start + len).collect());
        }
        len *= 2;
    }
    out
}

/// Cell point-mass densities: the extreme points of `D` on the grid.
pub fn cell_density_basis(c: &CocycleFamily) -> Vec<Density> {
    (0..c.space().len()).map(|i| Density::cell(c.space(), i)).collect()
}

/// For each `ε`, the smallest-measure family member whose tail-sup mass
/// reaches `ε`. The probe passes at `ε` when the smallest member passes.
pub fn quasi_constrictive_probe(
    c: &CocycleFamily,
    eps_grid: &[f64],
    family: &[Vec<usize>],
    f_basis: &[Density],
    omega_samples: &[EnvPoint],
    horizon: usize,
) -> Result<QuasiConstrictiveReport> {
    if family.is_empty() {
        return Err(Error::EmptyBasis("set family"));
    }
    if f_basis.is_empty() {
        return Err(Error::EmptyBasis("density basis"));
    }
    if omega_samples.is_empty() {
        return Err(Error::EmptyBasis("environment samples"));
    }
    for f in f_basis {
        f.require_probability()?;
        check_same(c.space(), f.space())?;
    }
    let n = c.space().len();
    for e in family {
        if e.iter().any(|j| *j >= n) {
            return Err(Error::Precondition("set family references a cell out of range".into()));
        }
    }
    let start = tail_start(horizon);
    let jobs: Vec<(usize, usize)> = (0..omega_samples.len())
        .flat_map(|a| (0..f_basis.len()).map(move |b| (a, b)))
        .collect();
    let sup = jobs
        .par_iter()
        .map(|&(a, b)| {
            let orbit = c.mass_orbit(&omega_samples[a], &f_basis[b].masses(), horizon);
            family
                .iter()
                .map(|e| {
                    orbit[start..]
                        .iter()
                        .map(|m| e.iter().map(|j| m[*j]).sum::<f64>())
                        .fold(0.0, f64::max)
                })
                .collect::<Vec<f64>>()
        })
        .reduce(
            || vec![0.0; family.len()],
            |a, b| a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect(),
        );
    let set_values: Vec<(f64, f64)> = family
        .iter()
        .zip(&sup)
        .map(|(e, s)| (c.space().measure_of(e), *s))
        .collect();
    let smallest = set_values.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let rows: Vec<EpsilonRow> = eps_grid
        .iter()
        .map(|&eps| {
            let fail = set_values
                .iter()
                .enumerate()
                .filter(|(_, v)| v.1 >= eps)
                .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0));
            let delta = fail.map(|(_, v)| v.0);
            EpsilonRow {
                eps,
                delta,
                passed: delta.map_or(true, |d| d > smallest),
                witness: fail.map(|(i, v)| (family[i].clone(), v.1)),
            }
        })
        .collect();
    Ok(QuasiConstrictiveReport {
        quasi_constrictive: rows.iter().all(|r| r.passed),
        rows,
        samples: omega_samples.len(),
        set_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::{block_cycle, contiguous_blocks, pf_exact, MapSpec};

    fn swap4() -> CocycleFamily {
        let s = FiniteMeasureSpace::uniform(4).unwrap();
        CocycleFamily::constant(block_cycle(&s, &contiguous_blocks(4, 2).unwrap(), &[1, 0]).unwrap())
    }

    fn exact(map: MapSpec, n: usize) -> CocycleFamily {
        CocycleFamily::constant(pf_exact(&map, &FiniteMeasureSpace::uniform(n).unwrap()).unwrap())
    }

    #[test]
    fn block_swap_decomposes() {
        let c = swap4();
        let out = detect_periodicity(&c, &[EnvPoint::Finite(0)], &PeriodicityOptions::new(4, 20, 4)).unwrap();
        let d = out.decomposition().expect("found");
        assert_eq!(d.r, 2);
        assert_eq!(d.rho[0], vec![1, 0]);
        assert_eq!(d.components[0][0].values(), &[2.0, 2.0, 0.0, 0.0]);
        assert_eq!(d.components[0][1].values(), &[0.0, 0.0, 2.0, 2.0]);
        assert_eq!(d.lambda[0][0].values(), &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(d.residual, 0.0);
        assert!(d.rho_consistent);
        assert_eq!(d.rho_order(), Some(2));
        assert!(!stability_check(d));
        let h = invariant_density_from_decomposition(&c, d, &EnvPoint::Finite(0)).unwrap();
        assert_eq!(h.values(), &[1.0; 4]);
    }

    #[test]
    fn doubling_is_stable() {
        let c = exact(MapSpec::Doubling, 16);
        let out = detect_periodicity(&c, &[EnvPoint::Finite(0)], &PeriodicityOptions::new(16, 20, 4)).unwrap();
        let d = out.decomposition().expect("found");
        assert!(stability_check(d));
        assert_eq!(d.components[0][0], Density::uniform(c.space()));
    }

    #[test]
    fn identity_finds_nothing() {
        let c = exact(MapSpec::Identity, 8);
        let out = detect_periodicity(&c, &[EnvPoint::Finite(0)], &PeriodicityOptions::new(8, 20, 4)).unwrap();
        match out {
            PeriodicityOutcome::NoneFound { components, best_residual } => {
                assert_eq!(components, 8);
                assert!(best_residual > 0.5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn restricted_block_swap_is_exact_in_one_step() {
        let c = swap4();
        let d = detect_periodicity(&c, &[EnvPoint::Finite(0)], &PeriodicityOptions::new(4, 20, 4)).unwrap();
        let checks = restricted_power_exactness(&c, d.decomposition().unwrap(), 10, 1e-8).unwrap();
        assert_eq!(checks.len(), 2);
        for ch in checks {
            assert!(ch.report.exact);
            assert_eq!(ch.norm_after_one, 0.0);
            assert_eq!(ch.leak, 0.0);
        }
    }

    #[test]
    fn qc_examples() {
        let swap = swap4();
        let fam = dyadic_runs(4, 2);
        let basis = cell_density_basis(&swap);
        let eps = [0.9, 0.6];
        let rep = quasi_constrictive_probe(&swap, &eps, &fam, &basis, &[EnvPoint::Finite(0)], 10).unwrap();
        // iterates are bounded by 2, so a single cell carries mass ½
        assert!(rep.set_values.iter().all(|(m, s)| *s <= 2.0 * m + 1e-15));
        assert!(rep.quasi_constrictive);

        let id = exact(MapSpec::Identity, 8);
        let rep = quasi_constrictive_probe(&id, &[0.5], &dyadic_runs(8, 1), &cell_density_basis(&id), &[EnvPoint::Finite(0)], 10)
            .unwrap();
        assert!(!rep.quasi_constrictive);
        assert_eq!(rep.rows[0].delta, Some(0.125));
    }

    #[test]
    fn burn_in_default() {
        assert_eq!(default_burn_in(64, 40), 12);
        assert_eq!(default_burn_in(1024, 40), 20);
        assert_eq!(default_burn_in(1024, 10), 5);
    }
}
