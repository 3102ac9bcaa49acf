//! Markov operator cocycles `P⁽ⁿ⁾_ω = P_{σⁿ⁻¹ω} ∘ ⋯ ∘ P_ω`, invariant density
//! maps `ω ↦ h_ω` with `P_ω h_ω = h_{σω}`, and the normalized cocycle.

use crate::driving::{DrivingSystem, EnvPoint};
use crate::error::{Error, Result};
use crate::measure::{check_same, Density, MarkovMatrix, Observable, Space};

/// Relative support floor: a cell is in the support of `f` when
/// `f_i > floor * max f`.
pub const DEFAULT_SUPPORT_FLOOR: f64 = 1e-9;

/// The assignment `ω ↦ P_ω`, keyed by the finite feature of `ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct CocycleFamily {
    driving: DrivingSystem,
    table: Vec<MarkovMatrix>,
    space: Space,
}

impl CocycleFamily {
    pub fn new(driving: DrivingSystem, table: Vec<MarkovMatrix>) -> Result<Self> {
        let first = table
            .first()
            .ok_or_else(|| Error::Precondition("operator table is empty".into()))?;
        if table.len() != driving.feature_count() {
            return Err(Error::Dimension {
                expected: driving.feature_count(),
                found: table.len(),
            });
        }
        let space = first.space().clone();
        for (k, p) in table.iter().enumerate() {
            check_same(&space, p.space())?;
            let r = p.markov_check();
            if !r.passed {
                return Err(Error::invariant(
                    "markov",
                    format!("table entry {k}: row-sum deviation {:e}, min entry {:e}", r.max_row_deviation, r.min_entry),
                ));
            }
        }
        Ok(CocycleFamily {
            driving,
            table,
            space,
        })
    }

    /// `P_ω ≡ P` over the one-point environment.
    pub fn constant(p: MarkovMatrix) -> Self {
        Self::constant_over(DrivingSystem::trivial(), p)
    }

    /// `P_ω ≡ P` over an arbitrary driving system.
    pub fn constant_over(driving: DrivingSystem, p: MarkovMatrix) -> Self {
        let table = vec![p; driving.feature_count()];
        Self::new(driving, table).expect("valid constant cocycle")
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn driving(&self) -> &DrivingSystem {
        &self.driving
    }

    pub fn table(&self) -> &[MarkovMatrix] {
        &self.table
    }

    pub fn operator_at(&self, w: &EnvPoint) -> &MarkovMatrix {
        &self.table[self.driving.feature(w)]
    }

    /// Whether every table entry is the same kernel.
    pub fn is_constant(&self) -> bool {
        self.table.windows(2).all(|w| w[0] == w[1])
    }

    /// Whether every `P_ω` maps cell indicators to indicators under its dual,
    /// i.e. is the transfer operator of a cell map at this resolution.
    pub fn is_map_derived(&self, tol: f64) -> bool {
        self.table.iter().all(|p| p.is_indicator_preserving(tol))
    }

    pub fn advance(&self, w: &EnvPoint, n: i64) -> EnvPoint {
        self.driving.advance(w, n)
    }

    /// The kernel of `P⁽ⁿ⁾_ω`.
    pub fn compose(&self, w: &EnvPoint, n: usize) -> MarkovMatrix {
        let mut out = MarkovMatrix::identity(&self.space);
        let mut cur = w.clone();
        for _ in 0..n {
            out = out.then(self.operator_at(&cur)).expect("shared space");
            cur = self.driving.advance(&cur, 1);
        }
        out
    }

    /// Yields `P⁽⁰⁾_ω, P⁽¹⁾_ω, …` without recomputing prefixes.
    pub fn composed(&self, w: &EnvPoint) -> Composed<'_> {
        Composed {
            cocycle: self,
            point: w.clone(),
            current: None,
        }
    }

    /// Mass vector after `n` steps from `ω`.
    pub fn push_mass(&self, w: &EnvPoint, mass: &[f64], n: usize) -> Vec<f64> {
        let mut m = mass.to_vec();
        let mut cur = w.clone();
        for _ in 0..n {
            m = self.operator_at(&cur).push_mass(&m);
            cur = self.driving.advance(&cur, 1);
        }
        m
    }

    /// Mass vectors at `n = 0..=horizon`.
    pub fn mass_orbit(&self, w: &EnvPoint, mass: &[f64], horizon: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(horizon + 1);
        out.push(mass.to_vec());
        let mut cur = w.clone();
        for _ in 0..horizon {
            let next = self.operator_at(&cur).push_mass(out.last().unwrap());
            out.push(next);
            cur = self.driving.advance(&cur, 1);
        }
        out
    }

    /// `P⁽ⁿ⁾_ω f`.
    pub fn apply_n(&self, w: &EnvPoint, f: &Density, n: usize) -> Result<Density> {
        check_same(&self.space, f.space())?;
        Density::from_masses(&self.space, &self.push_mass(w, &f.masses(), n))
    }

    /// `P*⁽ⁿ⁾_ω g = P*_ω ∘ P*_{σω} ∘ ⋯ ∘ P*_{σⁿ⁻¹ω} g`.
    pub fn dual_apply_n(&self, w: &EnvPoint, g: &Observable, n: usize) -> Result<Observable> {
        check_same(&self.space, g.space())?;
        let mut v = g.values().to_vec();
        for k in (0..n).rev() {
            let at = self.driving.advance(w, k as i64);
            v = self.operator_at(&at).pull_values(&v);
        }
        Observable::new(&self.space, v)
    }
}

/// Iterator over composed kernels along one orbit.
pub struct Composed<'a> {
    cocycle: &'a CocycleFamily,
    point: EnvPoint,
    current: Option<MarkovMatrix>,
}

impl Iterator for Composed<'_> {
    type Item = MarkovMatrix;

    fn next(&mut self) -> Option<MarkovMatrix> {
        let next = match self.current.take() {
            None => MarkovMatrix::identity(&self.cocycle.space),
            Some(k) => {
                let step = self.cocycle.operator_at(&self.point);
                self.point = self.cocycle.driving.advance(&self.point, 1);
                k.then(step).expect("shared space")
            }
        };
        self.current = Some(next.clone());
        Some(next)
    }
}

/// `P⁽ⁿ⁾_ω` as a kernel.
pub fn compose(c: &CocycleFamily, w: &EnvPoint, n: usize) -> MarkovMatrix {
    c.compose(w, n)
}

/// Result of pulling `f0` back along the past of `ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pullback {
    pub density: Density,
    /// `‖P⁽ᴷ⁾_{σ⁻ᴷω} f0 − P⁽ᴷ⁻¹⁾_{σ⁻ᴷ⁺¹ω} f0‖_{L¹}`
    pub increment: f64,
    pub k: usize,
}

/// `P⁽ᴷ⁾_{σ⁻ᴷω} f0` together with its Cauchy increment.
pub fn invariant_density_pullback(
    c: &CocycleFamily,
    w: &EnvPoint,
    k: usize,
    f0: &Density,
) -> Result<Pullback> {
    if k == 0 {
        return Err(Error::Precondition("pullback horizon K must be at least 1".into()));
    }
    f0.require_probability()?;
    check_same(c.space(), f0.space())?;
    let far = c.advance(w, -(k as i64));
    let near = c.advance(w, -(k as i64) + 1);
    let hk = c.apply_n(&far, f0, k)?;
    let hk1 = c.apply_n(&near, f0, k - 1)?;
    let increment = hk.l1_distance(&hk1)?;
    Ok(Pullback {
        density: hk,
        increment,
        k,
    })
}

/// Smallest `K ≤ k_max` whose Cauchy increment is below `tol`.
pub fn converged_pullback(
    c: &CocycleFamily,
    w: &EnvPoint,
    f0: &Density,
    tol: f64,
    k_max: usize,
) -> Result<Pullback> {
    f0.require_probability()?;
    if c.is_constant() {
        // P⁽ᴷ⁾_{σ⁻ᴷω} = Pᴷ for every ω: iterate once
        let p = &c.table()[0];
        let mut prev = f0.clone();
        for k in 1..=k_max {
            let next = p.apply(&prev)?;
            let increment = next.l1_distance(&prev)?;
            if increment < tol {
                return Ok(Pullback {
                    density: next,
                    increment,
                    k,
                });
            }
            prev = next;
        }
        let last = p.apply(&prev)?.l1_distance(&prev)?;
        return Err(Error::NotConverged {
            k_max,
            increment: last,
        });
    }
    let mut last = f64::INFINITY;
    for k in 1..=k_max {
        let pb = invariant_density_pullback(c, w, k, f0)?;
        if pb.increment < tol {
            return Ok(pb);
        }
        last = pb.increment;
    }
    Err(Error::NotConverged {
        k_max,
        increment: last,
    })
}

#[derive(Debug, Clone, PartialEq)]
enum DensityTable {
    /// One density for every `ω` (constant cocycles).
    Constant(Density),
    /// Indexed by point of a finite `Ω`.
    Finite(Vec<Density>),
    /// Computed per point by pulling `f0` back `k` steps.
    OnDemand { f0: Density, k: usize },
}

/// An invariant density map `ω ↦ h_ω` with its invariance residual.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantDensityMap {
    table: DensityTable,
    horizon: usize,
    residual: f64,
}

impl InvariantDensityMap {
    /// Builds `h` by converged pullback of `f0`. For finite `Ω` every point is
    /// tabulated; for the Bernoulli shift the horizon is fixed from the
    /// sample points and densities are computed on demand.
    pub fn build(
        c: &CocycleFamily,
        f0: &Density,
        tol: f64,
        k_max: usize,
        samples: &[EnvPoint],
    ) -> Result<Self> {
        let (table, horizon) = if c.is_constant() {
            let any = match c.driving() {
                DrivingSystem::Finite(_) => EnvPoint::Finite(0),
                DrivingSystem::Bernoulli(b) => EnvPoint::Bernoulli(b.point(0)),
            };
            let pb = converged_pullback(c, &any, f0, tol, k_max)?;
            (DensityTable::Constant(pb.density), pb.k)
        } else {
            match c.driving() {
                DrivingSystem::Finite(f) => {
                    let mut out = Vec::with_capacity(f.len());
                    let mut horizon = 0;
                    for i in 0..f.len() {
                        let pb = converged_pullback(c, &EnvPoint::Finite(i), f0, tol, k_max)?;
                        horizon = horizon.max(pb.k);
                        out.push(pb.density);
                    }
                    (DensityTable::Finite(out), horizon)
                }
                DrivingSystem::Bernoulli(_) => {
                    if samples.is_empty() {
                        return Err(Error::EmptyBasis("environment samples"));
                    }
                    let mut horizon = 1;
                    for w in samples {
                        horizon = horizon.max(converged_pullback(c, w, f0, tol, k_max)?.k);
                    }
                    (
                        DensityTable::OnDemand {
                            f0: f0.clone(),
                            k: horizon,
                        },
                        horizon,
                    )
                }
            }
        };
        let mut map = InvariantDensityMap {
            table,
            horizon,
            residual: 0.0,
        };
        map.residual = map.measure_residual(c, samples)?;
        Ok(map)
    }

    /// `h_ω ≡ h`.
    pub fn constant(c: &CocycleFamily, h: Density) -> Result<Self> {
        h.require_probability()?;
        check_same(c.space(), h.space())?;
        let mut map = InvariantDensityMap {
            table: DensityTable::Constant(h),
            horizon: 0,
            residual: 0.0,
        };
        let pts = Self::residual_points(c);
        map.residual = map.measure_residual(c, &pts)?;
        Ok(map)
    }

    /// Explicit `h` on a finite `Ω`, one density per point.
    pub fn from_table(c: &CocycleFamily, densities: Vec<Density>) -> Result<Self> {
        let f = c
            .driving()
            .as_finite()
            .ok_or_else(|| Error::Unsupported("tabulated densities need a finite driving".into()))?;
        if densities.len() != f.len() {
            return Err(Error::Dimension {
                expected: f.len(),
                found: densities.len(),
            });
        }
        for h in &densities {
            h.require_probability()?;
            check_same(c.space(), h.space())?;
        }
        let mut map = InvariantDensityMap {
            table: DensityTable::Finite(densities),
            horizon: 0,
            residual: 0.0,
        };
        let pts = Self::residual_points(c);
        map.residual = map.measure_residual(c, &pts)?;
        Ok(map)
    }

    fn residual_points(c: &CocycleFamily) -> Vec<EnvPoint> {
        match c.driving() {
            DrivingSystem::Finite(f) => (0..f.len()).map(EnvPoint::Finite).collect(),
            DrivingSystem::Bernoulli(b) => vec![EnvPoint::Bernoulli(b.point(0))],
        }
    }

    fn measure_residual(&self, c: &CocycleFamily, samples: &[EnvPoint]) -> Result<f64> {
        let pts: Vec<EnvPoint> = match (&self.table, c.driving()) {
            (DensityTable::Finite(t), _) => (0..t.len()).map(EnvPoint::Finite).collect(),
            _ if samples.is_empty() => Self::residual_points(c),
            _ => samples.to_vec(),
        };
        let mut worst: f64 = 0.0;
        for w in &pts {
            let h = self.density_at(c, w)?;
            let next = self.density_at(c, &c.advance(w, 1))?;
            worst = worst.max(c.operator_at(w).apply(&h)?.l1_distance(&next)?);
        }
        Ok(worst)
    }

    pub fn density_at(&self, c: &CocycleFamily, w: &EnvPoint) -> Result<Density> {
        match (&self.table, w) {
            (DensityTable::Constant(h), _) => Ok(h.clone()),
            (DensityTable::Finite(t), EnvPoint::Finite(i)) => Ok(t[*i].clone()),
            (DensityTable::OnDemand { f0, k }, _) => {
                Ok(invariant_density_pullback(c, w, *k, f0)?.density)
            }
            _ => Err(Error::Precondition("environment point does not match the density map".into())),
        }
    }

    /// Pullback horizon used to build the map (0 when supplied explicitly).
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `max_ω ‖P_ω h_ω − h_{σω}‖_{L¹}` over the points checked at build time.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.table, DensityTable::Constant(_))
    }

    /// Fails when the residual exceeds `tol`.
    pub fn certify(&self, tol: f64) -> Result<()> {
        if self.residual <= tol {
            Ok(())
        } else {
            Err(Error::invariant(
                "invariant density residual",
                format!("{:e} exceeds {tol:e}", self.residual),
            ))
        }
    }
}

/// `P̂_ω f = P_ω(f h_ω) / h_{σω}` on `supp h_{σω}`, 0 elsewhere.
#[derive(Debug, Clone)]
pub struct NormalizedCocycle {
    base: CocycleFamily,
    densities: InvariantDensityMap,
    floor: f64,
}

/// Output of [`NormalizedCocycle::apply`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedOutput {
    pub density: Density,
    /// Cells outside `supp h_{σω}` that received mass, which was dropped.
    pub excluded: Vec<usize>,
}

impl NormalizedCocycle {
    pub fn new(base: CocycleFamily, densities: InvariantDensityMap) -> Self {
        NormalizedCocycle {
            base,
            densities,
            floor: DEFAULT_SUPPORT_FLOOR,
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    pub fn base(&self) -> &CocycleFamily {
        &self.base
    }

    pub fn densities(&self) -> &InvariantDensityMap {
        &self.densities
    }

    /// `X^ω = supp h_ω`.
    pub fn support_at(&self, w: &EnvPoint) -> Result<Vec<bool>> {
        Ok(self.densities.density_at(&self.base, w)?.support(self.floor))
    }

    pub fn apply(&self, w: &EnvPoint, f: &Density) -> Result<NormalizedOutput> {
        let h = self.densities.density_at(&self.base, w)?;
        let h_next = self.densities.density_at(&self.base, &self.base.advance(w, 1))?;
        let weighted = Density::new(
            self.base.space(),
            f.values().iter().zip(h.values()).map(|(a, b)| a * b).collect(),
        )?;
        let pushed = self.base.operator_at(w).apply(&weighted)?;
        let support = h_next.support(self.floor);
        let mut excluded = Vec::new();
        let values = pushed
            .values()
            .iter()
            .zip(h_next.values())
            .zip(&support)
            .enumerate()
            .map(|(i, ((p, hn), inside))| {
                if *inside {
                    p / hn
                } else {
                    if *p != 0.0 {
                        excluded.push(i);
                    }
                    0.0
                }
            })
            .collect();
        Ok(NormalizedOutput {
            density: Density::new(self.base.space(), values)?,
            excluded,
        })
    }

    /// `P̂⁽ⁿ⁾_ω f`.
    pub fn apply_n(&self, w: &EnvPoint, f: &Density, n: usize) -> Result<NormalizedOutput> {
        let mut out = NormalizedOutput {
            density: f.clone(),
            excluded: Vec::new(),
        };
        let mut cur = w.clone();
        for _ in 0..n {
            let step = self.apply(&cur, &out.density)?;
            out.density = step.density;
            out.excluded.extend(step.excluded);
            cur = self.base.advance(&cur, 1);
        }
        out.excluded.sort_unstable();
        out.excluded.dedup();
        Ok(out)
    }

    /// `∫ f dμ_ω = Σ f_i h_ω,i m_i`.
    pub fn weighted_mass(&self, w: &EnvPoint, f: &Density) -> Result<f64> {
        let h = self.densities.density_at(&self.base, w)?;
        crate::measure::integrate(f, &Observable::from_density(&h))
    }
}

/// `P̂_ω f`.
pub fn normalized_apply(nc: &NormalizedCocycle, w: &EnvPoint, f: &Density) -> Result<NormalizedOutput> {
    nc.apply(w, f)
}

/// `m(supp P⁽ⁿ⁾_ω 1_X ∖ supp P⁽ⁿ⁾_ω h_ω)` with supports taken at
/// `floor * max`.
pub fn support_defect(
    c: &CocycleFamily,
    h: &InvariantDensityMap,
    w: &EnvPoint,
    n: usize,
    floor: f64,
) -> Result<f64> {
    let one = c.apply_n(w, &Density::uniform(c.space()), n)?;
    let hn = c.apply_n(w, &h.density_at(c, w)?, n)?;
    let s1 = one.support(floor);
    let sh = hn.support(floor);
    Ok(s1
        .iter()
        .zip(&sh)
        .enumerate()
        .filter(|(_, (a, b))| **a && !**b)
        .map(|(i, _)| c.space().weight(i))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{FiniteMeasureSpace, Representation};
    use crate::transfer::{pf_exact, MapSpec};

    fn doubling(n: usize) -> MarkovMatrix {
        pf_exact(&MapSpec::Doubling, &FiniteMeasureSpace::uniform(n).unwrap()).unwrap()
    }

    #[test]
    fn compose_zero_is_identity() {
        let c = CocycleFamily::constant(doubling(8));
        assert_eq!(c.compose(&EnvPoint::Finite(0), 0), MarkovMatrix::identity(c.space()));
    }

    #[test]
    fn constant_cocycle_composes_to_power() {
        let p = doubling(8);
        let c = CocycleFamily::constant(p.clone());
        assert_eq!(c.compose(&EnvPoint::Finite(0), 3), p.power(3));
    }

    #[test]
    fn rotation_cocycle_composes_in_operator_order() {
        let s = FiniteMeasureSpace::uniform(4).unwrap();
        let p0 = pf_exact(&MapSpec::Doubling, &s).unwrap();
        let p1 = MarkovMatrix::cell_map(&s, &[1, 2, 3, 0]).unwrap();
        let c = CocycleFamily::new(DrivingSystem::rotation(2, 1).unwrap(), vec![p0.clone(), p1.clone()]).unwrap();
        let k = c.compose(&EnvPoint::Finite(0), 2);
        // P₁ ∘ P₀: mass vector goes through K₀ then K₁
        // row 0 of K₀ = {0: ½, 1: ½}; shifted by one cell
        assert_eq!(k.row(0), (&[1usize, 2][..], &[0.5, 0.5][..]));
        assert_eq!(k, p0.then(&p1).unwrap());
        let composed: Vec<_> = c.composed(&EnvPoint::Finite(0)).take(3).collect();
        assert_eq!(composed[2], k);
    }

    #[test]
    fn table_must_match_driving() {
        let p = doubling(4);
        assert!(CocycleFamily::new(DrivingSystem::rotation(3, 1).unwrap(), vec![p.clone(), p]).is_err());
    }

    #[test]
    fn doubling_pullback_reaches_uniform() {
        let c = CocycleFamily::constant(doubling(16));
        let s = c.space().clone();
        let f0 = Density::cell(&s, 3);
        let pb = invariant_density_pullback(&c, &EnvPoint::Finite(0), 4, &f0).unwrap();
        assert_eq!(pb.density, Density::uniform(&s));
        let pb = invariant_density_pullback(&c, &EnvPoint::Finite(0), 5, &f0).unwrap();
        assert_eq!(pb.increment, 0.0);
    }

    #[test]
    fn identity_pullback_keeps_f0() {
        let s = FiniteMeasureSpace::uniform(5).unwrap();
        let c = CocycleFamily::constant(MarkovMatrix::identity(&s));
        let f0 = Density::cell(&s, 2);
        let pb = invariant_density_pullback(&c, &EnvPoint::Finite(0), 3, &f0).unwrap();
        assert_eq!(pb.density, f0);
        assert_eq!(pb.increment, 0.0);
    }

    #[test]
    fn shared_fixed_density_is_recovered() {
        let s = FiniteMeasureSpace::uniform(4).unwrap();
        let p0 = pf_exact(&MapSpec::Doubling, &s).unwrap();
        let p1 = pf_exact(&MapSpec::Tent, &s).unwrap();
        let c = CocycleFamily::new(DrivingSystem::rotation(2, 1).unwrap(), vec![p0, p1]).unwrap();
        let u = Density::uniform(&s);
        for k in 1..5 {
            for w in 0..2 {
                let pb = invariant_density_pullback(&c, &EnvPoint::Finite(w), k, &u).unwrap();
                assert_eq!(pb.density, u);
            }
        }
    }

    #[test]
    fn pullback_requires_probability_density() {
        let c = CocycleFamily::constant(doubling(4));
        let f0 = Density::new(c.space(), vec![1.0, -1.0, 0.0, 0.0]).unwrap();
        assert!(invariant_density_pullback(&c, &EnvPoint::Finite(0), 2, &f0).is_err());
        assert!(invariant_density_pullback(&c, &EnvPoint::Finite(0), 0, &Density::uniform(c.space())).is_err());
    }

    #[test]
    fn non_convergence_is_reported() {
        // swap of two cells never settles from a point mass
        let s = FiniteMeasureSpace::uniform(2).unwrap();
        let c = CocycleFamily::constant(MarkovMatrix::cell_map(&s, &[1, 0]).unwrap());
        let err = converged_pullback(&c, &EnvPoint::Finite(0), &Density::cell(&s, 0), 1e-10, 20).unwrap_err();
        assert!(matches!(err, Error::NotConverged { k_max: 20, .. }));
    }

    /// A kernel with planted fixed density `u`: `K[i][j] = u_j m_j` makes
    /// every density go to `u` in one step.
    fn planted(s: &Space, u: &[f64]) -> MarkovMatrix {
        let row: Vec<f64> = u.iter().zip(s.weights()).map(|(a, w)| a * w).collect();
        MarkovMatrix::from_dense(s, &vec![row; s.len()], Representation::Approximate).unwrap()
    }

    #[test]
    fn normalized_cocycle_maps_one_to_one() {
        let s = FiniteMeasureSpace::uniform(4).unwrap();
        let u = vec![0.5, 1.5, 1.0, 1.0];
        let c = CocycleFamily::constant(planted(&s, &u));
        let h = InvariantDensityMap::constant(&c, Density::new(&s, u).unwrap()).unwrap();
        assert!(h.residual() < 1e-15);
        let nc = NormalizedCocycle::new(c, h);
        let out = normalized_apply(&nc, &EnvPoint::Finite(0), &Density::uniform(&s)).unwrap();
        for v in out.density.values() {
            assert!((v - 1.0).abs() < 1e-14);
        }
        assert!(out.excluded.is_empty());
    }

    #[test]
    fn normalized_equals_base_for_uniform_h() {
        let c = CocycleFamily::constant(doubling(8));
        let s = c.space().clone();
        let h = InvariantDensityMap::constant(&c, Density::uniform(&s)).unwrap();
        let nc = NormalizedCocycle::new(c.clone(), h);
        let f = Density::new(&s, (0..8).map(|i| i as f64).collect()).unwrap();
        let w = EnvPoint::Finite(0);
        assert_eq!(nc.apply(&w, &f).unwrap().density, c.operator_at(&w).apply(&f).unwrap());
    }

    #[test]
    fn normalized_preserves_weighted_mass() {
        let s = FiniteMeasureSpace::uniform(4).unwrap();
        let u = vec![0.25, 1.75, 1.0, 1.0];
        let c = CocycleFamily::constant(planted(&s, &u));
        let h = InvariantDensityMap::constant(&c, Density::new(&s, u).unwrap()).unwrap();
        let nc = NormalizedCocycle::new(c, h);
        let f = Density::new(&s, vec![3.0, -1.0, 0.5, 2.0]).unwrap();
        let w = EnvPoint::Finite(0);
        let out = nc.apply(&w, &f).unwrap();
        let before = nc.weighted_mass(&w, &f).unwrap();
        let after = nc.weighted_mass(&w, &out.density).unwrap();
        assert!((before - after).abs() < 1e-10);
    }

    #[test]
    fn support_defect_examples() {
        let c = CocycleFamily::constant(doubling(8));
        let s = c.space().clone();
        let h = InvariantDensityMap::constant(&c, Density::uniform(&s)).unwrap();
        for n in 0..5 {
            assert_eq!(support_defect(&c, &h, &EnvPoint::Finite(0), n, DEFAULT_SUPPORT_FLOOR).unwrap(), 0.0);
        }
    }

    #[test]
    fn support_defect_half_supported_h() {
        // first half is invariant under P; second half spreads over everything
        let s = FiniteMeasureSpace::uniform(4).unwrap();
        let p = MarkovMatrix::from_dense(
            &s,
            &[
                vec![0.5, 0.5, 0.0, 0.0],
                vec![0.5, 0.5, 0.0, 0.0],
                vec![0.25, 0.25, 0.25, 0.25],
                vec![0.25, 0.25, 0.25, 0.25],
            ],
            Representation::Exact,
        )
        .unwrap();
        let c = CocycleFamily::constant(p);
        let h = InvariantDensityMap::constant(&c, Density::normalized_indicator(&s, &[0, 1]).unwrap()).unwrap();
        assert_eq!(h.residual(), 0.0);
        let w = EnvPoint::Finite(0);
        // enumerated by hand: P⁽ⁿ⁾1 keeps mass 2^-(n+2) on cells 2 and 3 while P⁽ⁿ⁾h stays on {0,1}
        let expect = [0.5, 0.5, 0.5, 0.5];
        for (n, e) in expect.iter().enumerate() {
            assert_eq!(support_defect(&c, &h, &w, n, DEFAULT_SUPPORT_FLOOR).unwrap(), *e);
        }
    }

    #[test]
    fn cocycle_law_on_random_driving() {
        let s = FiniteMeasureSpace::uniform(8).unwrap();
        let p0 = pf_exact(&MapSpec::Doubling, &s).unwrap();
        let p1 = pf_exact(&MapSpec::Tent, &s).unwrap();
        let p2 = MarkovMatrix::cell_map(&s, &[3, 1, 4, 1, 5, 0, 2, 6]).unwrap();
        let c = CocycleFamily::new(
            DrivingSystem::permutation(vec![2, 0, 1], vec![1.0 / 3.0; 3]).unwrap(),
            vec![p0, p1, p2],
        )
        .unwrap();
        for w in 0..3 {
            let w = EnvPoint::Finite(w);
            for n in 0..5 {
                for m in 0..5 {
                    let lhs = c.compose(&w, n + m).to_dense();
                    let rhs = c.compose(&w, m).then(&c.compose(&c.advance(&w, m as i64), n)).unwrap().to_dense();
                    for (a, b) in lhs.iter().flatten().zip(rhs.iter().flatten()) {
                        assert!((a - b).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn dual_cocycle_order() {
        let s = FiniteMeasureSpace::uniform(4).unwrap();
        let p0 = pf_exact(&MapSpec::Doubling, &s).unwrap();
        let p1 = MarkovMatrix::cell_map(&s, &[1, 2, 3, 0]).unwrap();
        let c = CocycleFamily::new(DrivingSystem::rotation(2, 1).unwrap(), vec![p0, p1]).unwrap();
        let w = EnvPoint::Finite(0);
        let f = Density::new(&s, vec![1.0, -2.0, 0.5, 0.5]).unwrap();
        let g = Observable::new(&s, vec![0.3, -0.7, 1.0, 0.1]).unwrap();
        for n in 0..4 {
            let lhs = crate::measure::integrate(&c.apply_n(&w, &f, n).unwrap(), &g).unwrap();
            let rhs = crate::measure::integrate(&f, &c.dual_apply_n(&w, &g, n).unwrap()).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
