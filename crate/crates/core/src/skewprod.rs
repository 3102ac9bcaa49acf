//! The skew product `Θ(ω, x) = (σω, T_ω x)` with `ν = ∫ μ_ω dℙ`,
//! `μ_ω = h_ω m`, and its mixing curve `n ↦ ν(Θ⁻ⁿA ∩ B) − ν(A)ν(B)`.
//!
//! The joint term is computed in the operator picture
//! `∫ ⟨P⁽ⁿ⁾_ω(1_{B_ω} h_ω), 1_{A_{σⁿω}}⟩ dℙ(ω)`. It is exact for a finite
//! driving and for a constant cocycle over the Bernoulli shift; other
//! Bernoulli cocycles fall back to Monte-Carlo over sampled points.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;

use crate::cocycle::{CocycleFamily, InvariantDensityMap};
use crate::driving::{BernoulliShift, Cylinder, DrivingSystem, EnvPoint};
use crate::error::{Error, Result};
use crate::measure::{Density, Observable};
use crate::mixing::tail_start;

/// Largest cylinder width accepted in a product set.
pub const MAX_CYLINDER_WIDTH: usize = 16;

/// Largest number of free coordinates enumerated by the sections path.
const MAX_ENUMERATED: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnvPart {
    All,
    /// Points of a finite `Ω`.
    Points(Vec<usize>),
    Cylinder(Cylinder),
}

/// `F × A` with `A` a union of cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductSet {
    pub env: EnvPart,
    pub cells: Vec<usize>,
}

impl ProductSet {
    pub fn new(env: EnvPart, cells: Vec<usize>) -> Self {
        ProductSet { env, cells }
    }

    pub fn everything(cells: usize) -> Self {
        ProductSet {
            env: EnvPart::All,
            cells: (0..cells).collect(),
        }
    }
}

/// A finite disjoint union of product sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkewSet {
    pieces: Vec<ProductSet>,
}

fn env_disjoint(a: &EnvPart, b: &EnvPart) -> bool {
    match (a, b) {
        (EnvPart::Points(x), EnvPart::Points(y)) => !x.iter().any(|p| y.contains(p)),
        (EnvPart::Cylinder(x), EnvPart::Cylinder(y)) => x.intersect(y).is_none(),
        _ => false,
    }
}

impl SkewSet {
    pub fn new(c: &CocycleFamily, pieces: Vec<ProductSet>) -> Result<Self> {
        let n = c.space().len();
        for p in &pieces {
            if let Some(j) = p.cells.iter().find(|j| **j >= n) {
                return Err(Error::Precondition(format!("cell {j} is out of range")));
            }
            match (&p.env, c.driving()) {
                (EnvPart::All, _) => {}
                (EnvPart::Points(pts), DrivingSystem::Finite(f)) => {
                    if let Some(q) = pts.iter().find(|q| **q >= f.len()) {
                        return Err(Error::Precondition(format!("environment point {q} is out of range")));
                    }
                }
                (EnvPart::Cylinder(cy), DrivingSystem::Bernoulli(b)) => {
                    if cy.width() > MAX_CYLINDER_WIDTH {
                        return Err(Error::Precondition(format!(
                            "cylinder width {} exceeds {MAX_CYLINDER_WIDTH}",
                            cy.width()
                        )));
                    }
                    if cy.symbols.iter().any(|s| *s as usize >= b.alphabet()) {
                        return Err(Error::Precondition("cylinder symbol outside the alphabet".into()));
                    }
                }
                _ => {
                    return Err(Error::Precondition(
                        "environment part does not match the driving kind".into(),
                    ))
                }
            }
        }
        for (i, a) in pieces.iter().enumerate() {
            for b in &pieces[i + 1..] {
                if !env_disjoint(&a.env, &b.env) && a.cells.iter().any(|j| b.cells.contains(j)) {
                    return Err(Error::Precondition("product pieces overlap".into()));
                }
            }
        }
        Ok(SkewSet { pieces })
    }

    pub fn product(c: &CocycleFamily, env: EnvPart, cells: Vec<usize>) -> Result<Self> {
        Self::new(c, vec![ProductSet::new(env, cells)])
    }

    pub fn pieces(&self) -> &[ProductSet] {
        &self.pieces
    }

    /// `A_ω` as a cell mask.
    pub fn section(&self, c: &CocycleFamily, w: &EnvPoint) -> Vec<bool> {
        let mut mask = vec![false; c.space().len()];
        for p in &self.pieces {
            let inside = match (&p.env, w, c.driving()) {
                (EnvPart::All, _, _) => true,
                (EnvPart::Points(pts), EnvPoint::Finite(i), _) => pts.contains(i),
                (EnvPart::Cylinder(cy), EnvPoint::Bernoulli(bp), DrivingSystem::Bernoulli(b)) => cy.contains(b, bp),
                _ => false,
            };
            if inside {
                for j in &p.cells {
                    mask[*j] = true;
                }
            }
        }
        mask
    }

    /// Section given an assignment of the constrained coordinates, with
    /// cylinder coordinates shifted by `shift`.
    fn section_assigned(&self, cells: usize, assign: &HashMap<i64, u8>, shift: i64) -> Vec<bool> {
        let mut mask = vec![false; cells];
        for p in &self.pieces {
            let inside = match &p.env {
                EnvPart::All => true,
                EnvPart::Cylinder(cy) => cy.constraints().all(|(k, s)| assign[&(k + shift)] == s),
                EnvPart::Points(_) => false,
            };
            if inside {
                for j in &p.cells {
                    mask[*j] = true;
                }
            }
        }
        mask
    }

    fn coordinates(&self, shift: i64) -> BTreeSet<i64> {
        self.pieces
            .iter()
            .filter_map(|p| match &p.env {
                EnvPart::Cylinder(cy) => Some(cy.constraints().map(move |(k, _)| k + shift)),
                _ => None,
            })
            .flatten()
            .collect()
    }
}

/// A value of `ν`, exact or estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuValue {
    pub value: f64,
    /// 0 for exact values.
    pub std_error: f64,
    pub exact: bool,
}

impl NuValue {
    fn exact(value: f64) -> Self {
        NuValue {
            value,
            std_error: 0.0,
            exact: true,
        }
    }

    fn estimate(samples: &[f64]) -> Self {
        let m = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / m;
        let var = if samples.len() > 1 {
            samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        NuValue {
            value: mean,
            std_error: (var / m).sqrt(),
            exact: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarlo {
    pub samples: usize,
    pub seed: u64,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        MonteCarlo {
            samples: 256,
            seed: 0,
        }
    }
}

fn masked_mass(h: &Density, mask: &[bool]) -> Vec<f64> {
    h.masses()
        .into_iter()
        .zip(mask)
        .map(|(m, b)| if *b { m } else { 0.0 })
        .collect()
}

fn masked_sum(v: &[f64], mask: &[bool]) -> f64 {
    v.iter().zip(mask).filter(|(_, b)| **b).map(|(x, _)| x).sum()
}

/// How the driving and cocycle let `ν` be evaluated.
enum Regime<'a> {
    Finite(Vec<(EnvPoint, f64)>),
    /// Constant cocycle and constant `h` over the Bernoulli shift.
    Factorized(&'a BernoulliShift, Density),
    Sampled(Vec<EnvPoint>),
}

fn regime<'a>(c: &'a CocycleFamily, h: &InvariantDensityMap, mc: &MonteCarlo) -> Result<Regime<'a>> {
    match c.driving() {
        DrivingSystem::Finite(_) => Ok(Regime::Finite(
            c.driving()
                .finite_points()
                .expect("finite")
                .into_iter()
                .filter(|p| p.1 > 0.0)
                .collect(),
        )),
        DrivingSystem::Bernoulli(b) => {
            if c.is_constant() && h.is_constant() {
                let any = EnvPoint::Bernoulli(b.point(0));
                Ok(Regime::Factorized(b, h.density_at(c, &any)?))
            } else {
                Ok(Regime::Sampled(c.driving().sample_env(mc.samples, mc.seed)?))
            }
        }
    }
}

/// `ν(A) = ∫ μ_ω(A_ω) dℙ(ω)`.
pub fn nu_measure(c: &CocycleFamily, h: &InvariantDensityMap, a: &SkewSet, mc: &MonteCarlo) -> Result<NuValue> {
    match regime(c, h, mc)? {
        Regime::Finite(points) => {
            let mut total = 0.0;
            for (w, p) in &points {
                let hw = h.density_at(c, w)?;
                total += p * masked_sum(&hw.masses(), &a.section(c, w));
            }
            Ok(NuValue::exact(total))
        }
        Regime::Factorized(b, hd) => {
            let masses = hd.masses();
            let mut total = 0.0;
            for piece in a.pieces() {
                let pf = match &piece.env {
                    EnvPart::All => 1.0,
                    EnvPart::Cylinder(cy) => cy.probability(b.probs()),
                    EnvPart::Points(_) => 0.0,
                };
                total += pf * piece.cells.iter().map(|j| masses[*j]).sum::<f64>();
            }
            Ok(NuValue::exact(total))
        }
        Regime::Sampled(points) => {
            let vals: Vec<f64> = points
                .par_iter()
                .map(|w| Ok(masked_sum(&h.density_at(c, w)?.masses(), &a.section(c, w))))
                .collect::<Result<_>>()?;
            Ok(NuValue::estimate(&vals))
        }
    }
}

/// Which side of the duality evaluates the state factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Picture {
    /// `⟨P⁽ⁿ⁾(1_B h), 1_A⟩`
    Operator,
    /// `⟨1_B h, P*⁽ⁿ⁾ 1_A⟩`: the measure of `T⁻ⁿA ∩ B` for cell maps.
    Koopman,
}

/// `n ↦ ⟨P⁽ⁿ⁾_ω(1_B h), 1_{A_n}⟩` for `n = 0..=horizon`.
fn state_curve(
    c: &CocycleFamily,
    w: &EnvPoint,
    h: &Density,
    b: &[bool],
    a_at: impl Fn(usize) -> Vec<bool>,
    horizon: usize,
    picture: Picture,
) -> Result<Vec<f64>> {
    match picture {
        Picture::Operator => {
            let orbit = c.mass_orbit(w, &masked_mass(h, b), horizon);
            Ok(orbit.iter().enumerate().map(|(n, m)| masked_sum(m, &a_at(n))).collect())
        }
        Picture::Koopman => {
            let mb = masked_mass(h, b);
            (0..=horizon)
                .map(|n| {
                    let ind: Vec<f64> = a_at(n).iter().map(|x| if *x { 1.0 } else { 0.0 }).collect();
                    let pulled = c.dual_apply_n(w, &Observable::new(c.space(), ind)?, n)?;
                    Ok(crate::measure::dot(&mb, pulled.values()))
                })
                .collect()
        }
    }
}

/// `n ↦ ν(Θ⁻ⁿA ∩ B)` by sections: exact for a finite driving, by
/// enumerating constrained coordinates for the factorized Bernoulli case,
/// otherwise estimated.
pub fn joint_curve(
    c: &CocycleFamily,
    h: &InvariantDensityMap,
    a: &SkewSet,
    b: &SkewSet,
    horizon: usize,
    picture: Picture,
    mc: &MonteCarlo,
) -> Result<Vec<NuValue>> {
    match regime(c, h, mc)? {
        Regime::Finite(points) => {
            let mut total = vec![0.0; horizon + 1];
            for (w, p) in &points {
                let hw = h.density_at(c, w)?;
                let curve = state_curve(c, w, &hw, &b.section(c, w), |n| a.section(c, &c.advance(w, n as i64)), horizon, picture)?;
                for (t, v) in total.iter_mut().zip(curve) {
                    *t += p * v;
                }
            }
            Ok(total.into_iter().map(NuValue::exact).collect())
        }
        Regime::Factorized(shift, hd) => {
            let cells = c.space().len();
            let any = EnvPoint::Bernoulli(shift.point(0));
            let mut cache: HashMap<(Vec<bool>, Vec<bool>), Vec<f64>> = HashMap::new();
            let mut out = Vec::with_capacity(horizon + 1);
            for n in 0..=horizon {
                let mut coords = b.coordinates(0);
                coords.extend(a.coordinates(n as i64));
                if coords.len() > MAX_ENUMERATED {
                    return Err(Error::Unsupported(format!(
                        "{} constrained coordinates exceed the enumeration limit {MAX_ENUMERATED}",
                        coords.len()
                    )));
                }
                let coords: Vec<i64> = coords.into_iter().collect();
                let q = shift.alphabet();
                let mut total = 0.0;
                let combos = q.pow(coords.len() as u32);
                for code in 0..combos {
                    let mut rest = code;
                    let mut assign = HashMap::with_capacity(coords.len());
                    let mut prob = 1.0;
                    for k in &coords {
                        let s = (rest % q) as u8;
                        rest /= q;
                        prob *= shift.probs()[s as usize];
                        assign.insert(*k, s);
                    }
                    if prob == 0.0 {
                        continue;
                    }
                    let bs = b.section_assigned(cells, &assign, 0);
                    let as_ = a.section_assigned(cells, &assign, n as i64);
                    if !bs.iter().any(|x| *x) || !as_.iter().any(|x| *x) {
                        continue;
                    }
                    let key = (bs.clone(), as_.clone());
                    if !cache.contains_key(&key) {
                        let curve = state_curve(c, &any, &hd, &bs, |_| as_.clone(), horizon, picture)?;
                        cache.insert(key.clone(), curve);
                    }
                    total += prob * cache[&key][n];
                }
                out.push(NuValue::exact(total));
            }
            Ok(out)
        }
        Regime::Sampled(points) => {
            let per: Vec<Vec<f64>> = points
                .par_iter()
                .map(|w| {
                    let hw = h.density_at(c, w)?;
                    state_curve(c, w, &hw, &b.section(c, w), |n| a.section(c, &c.advance(w, n as i64)), horizon, picture)
                })
                .collect::<Result<_>>()?;
            Ok((0..=horizon)
                .map(|n| NuValue::estimate(&per.iter().map(|v| v[n]).collect::<Vec<_>>()))
                .collect())
        }
    }
}

/// `n ↦ Σ_{pieces} ℙ(F_B ∩ σ⁻ⁿF_A) · ⟨Pⁿ(1_{A_B} h), 1_{A_A}⟩`, the
/// rectangle formula. Exact for a finite driving and the factorized
/// Bernoulli case; `None` otherwise.
pub fn product_formula_curve(
    c: &CocycleFamily,
    h: &InvariantDensityMap,
    a: &SkewSet,
    b: &SkewSet,
    horizon: usize,
) -> Result<Option<Vec<f64>>> {
    let cells = c.space().len();
    let mask = |p: &ProductSet| {
        let mut m = vec![false; cells];
        for j in &p.cells {
            m[*j] = true;
        }
        m
    };
    let mut total = vec![0.0; horizon + 1];
    match regime(c, h, &MonteCarlo::default())? {
        Regime::Finite(points) => {
            let env_in = |e: &EnvPart, w: &EnvPoint| match (e, w) {
                (EnvPart::All, _) => true,
                (EnvPart::Points(p), EnvPoint::Finite(i)) => p.contains(i),
                _ => false,
            };
            for pb in b.pieces() {
                for pa in a.pieces() {
                    let ma = mask(pa);
                    for (w, p) in &points {
                        if !env_in(&pb.env, w) {
                            continue;
                        }
                        let hw = h.density_at(c, w)?;
                        let orbit = c.mass_orbit(w, &masked_mass(&hw, &mask(pb)), horizon);
                        for n in 0..=horizon {
                            if env_in(&pa.env, &c.advance(w, n as i64)) {
                                total[n] += p * masked_sum(&orbit[n], &ma);
                            }
                        }
                    }
                }
            }
        }
        Regime::Factorized(shift, hd) => {
            let any = EnvPoint::Bernoulli(shift.point(0));
            for pb in b.pieces() {
                let orbit = c.mass_orbit(&any, &masked_mass(&hd, &mask(pb)), horizon);
                for pa in a.pieces() {
                    let ma = mask(pa);
                    for n in 0..=horizon {
                        let env = env_probability(shift, &pb.env, &pa.env, n);
                        total[n] += env * masked_sum(&orbit[n], &ma);
                    }
                }
            }
        }
        Regime::Sampled(_) => return Ok(None),
    }
    Ok(Some(total))
}

/// `ℙ(F_B ∩ σ⁻ⁿ F_A)` for Bernoulli environment parts.
pub fn env_probability(shift: &BernoulliShift, fb: &EnvPart, fa: &EnvPart, n: usize) -> f64 {
    let probs = shift.probs();
    match (fb, fa) {
        (EnvPart::Cylinder(x), EnvPart::Cylinder(y)) => x.intersection_probability(&y.pullback(n as i64), probs),
        (EnvPart::Cylinder(x), EnvPart::All) | (EnvPart::All, EnvPart::Cylinder(x)) => x.probability(probs),
        (EnvPart::All, EnvPart::All) => 1.0,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkewRow {
    pub n: usize,
    pub nu_joint: f64,
    pub nu_product: f64,
    pub discrepancy: f64,
    pub std_error: f64,
    /// `ℙ(F_B ∩ σ⁻ⁿF_A)` and `ℙ(F_A)ℙ(F_B)` for single Bernoulli rectangles.
    pub env_joint: Option<f64>,
    pub env_product: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkewCurve {
    pub rows: Vec<SkewRow>,
    pub nu_a: NuValue,
    pub nu_b: NuValue,
    pub exact: bool,
    pub tail_max: f64,
    /// Set when the driving is not a mixing system; non-decay then says
    /// nothing about the cocycle.
    pub flag: Option<String>,
}

impl SkewCurve {
    pub fn decayed(&self, tol: f64) -> bool {
        self.tail_max < tol
    }
}

pub const NOT_MIXING_FLAG: &str = "driving not mixing; theorem hypotheses unmet";

/// `n ↦ ν(Θ⁻ⁿA ∩ B) − ν(A)ν(B)` for `n = 0..=horizon`.
pub fn skew_mixing_curve(
    c: &CocycleFamily,
    h: &InvariantDensityMap,
    a: &SkewSet,
    b: &SkewSet,
    horizon: usize,
    mc: &MonteCarlo,
) -> Result<SkewCurve> {
    let nu_a = nu_measure(c, h, a, mc)?;
    let nu_b = nu_measure(c, h, b, mc)?;
    let joint = match product_formula_curve(c, h, a, b, horizon)? {
        Some(v) => v.into_iter().map(NuValue::exact).collect(),
        None => joint_curve(c, h, a, b, horizon, Picture::Operator, mc)?,
    };
    let single_env = match (c.driving(), a.pieces(), b.pieces()) {
        (DrivingSystem::Bernoulli(s), [pa], [pb]) => Some((s, pa.env.clone(), pb.env.clone())),
        _ => None,
    };
    let product = nu_a.value * nu_b.value;
    let rows: Vec<SkewRow> = joint
        .iter()
        .enumerate()
        .map(|(n, j)| {
            let (env_joint, env_product) = match &single_env {
                Some((s, fa, fb)) => (
                    Some(env_probability(s, fb, fa, n)),
                    Some(env_probability(s, fa, &EnvPart::All, 0) * env_probability(s, fb, &EnvPart::All, 0)),
                ),
                None => (None, None),
            };
            SkewRow {
                n,
                nu_joint: j.value,
                nu_product: product,
                discrepancy: j.value - product,
                std_error: (j.std_error.powi(2) + (nu_a.std_error * nu_b.value).powi(2) + (nu_b.std_error * nu_a.value).powi(2)).sqrt(),
                env_joint,
                env_product,
            }
        })
        .collect();
    let start = tail_start(horizon);
    let tail_max = rows[start..].iter().fold(0.0f64, |m, r| m.max(r.discrepancy.abs()));
    Ok(SkewCurve {
        exact: nu_a.exact && nu_b.exact && joint.iter().all(|j| j.exact),
        rows,
        nu_a,
        nu_b,
        tail_max,
        flag: c.driving().is_finite().then(|| NOT_MIXING_FLAG.to_string()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkewCrossChecks {
    /// `max(|ν(Θ⁻¹A) − ν(A)|, |ν(Θ⁻¹B) − ν(B)|)`
    pub theta_invariance: f64,
    /// Largest gap between the sections path and the rectangle formula.
    pub rectangle_gap: Option<f64>,
    /// Largest gap between the Koopman and operator pictures; only for
    /// cocycles of cell maps.
    pub koopman_gap: Option<f64>,
}

pub fn skew_cross_checks(
    c: &CocycleFamily,
    h: &InvariantDensityMap,
    a: &SkewSet,
    b: &SkewSet,
    horizon: usize,
    mc: &MonteCarlo,
) -> Result<SkewCrossChecks> {
    let all = SkewSet::new(c, vec![ProductSet::everything(c.space().len())])?;
    let mut theta = 0.0f64;
    for s in [a, b] {
        let nu = nu_measure(c, h, s, mc)?.value;
        let pulled = joint_curve(c, h, s, &all, 1, Picture::Operator, mc)?[1].value;
        theta = theta.max((pulled - nu).abs());
    }
    let sections = joint_curve(c, h, a, b, horizon, Picture::Operator, mc)?;
    let exact = sections.iter().all(|v| v.exact);
    let rectangle_gap = match product_formula_curve(c, h, a, b, horizon)? {
        Some(p) if exact => Some(
            p.iter()
                .zip(&sections)
                .fold(0.0f64, |m, (x, y)| m.max((x - y.value).abs())),
        ),
        _ => None,
    };
    let koopman_gap = if c.is_map_derived(crate::exactness::INDICATOR_TOL) && exact {
        let k = joint_curve(c, h, a, b, horizon, Picture::Koopman, mc)?;
        Some(
            k.iter()
                .zip(&sections)
                .fold(0.0f64, |m, (x, y)| m.max((x.value - y.value).abs())),
        )
    } else {
        None
    };
    Ok(SkewCrossChecks {
        theta_invariance: theta,
        rectangle_gap,
        koopman_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{FiniteMeasureSpace, MarkovMatrix};
    use crate::transfer::{pf_exact, MapSpec};

    fn bernoulli_const(map: MapSpec, n: usize) -> (CocycleFamily, InvariantDensityMap) {
        let s = FiniteMeasureSpace::uniform(n).unwrap();
        let c = CocycleFamily::constant_over(
            DrivingSystem::bernoulli(vec![0.5, 0.5], 8, 3).unwrap(),
            pf_exact(&map, &s).unwrap(),
        );
        let h = InvariantDensityMap::constant(&c, Density::uniform(&s)).unwrap();
        (c, h)
    }

    #[test]
    fn nu_examples() {
        let (c, h) = bernoulli_const(MapSpec::Doubling, 8);
        let mc = MonteCarlo::default();
        let all = SkewSet::new(&c, vec![ProductSet::everything(8)]).unwrap();
        assert_eq!(nu_measure(&c, &h, &all, &mc).unwrap().value, 1.0);
        let half = SkewSet::product(&c, EnvPart::All, (0..4).collect()).unwrap();
        assert_eq!(nu_measure(&c, &h, &half, &mc).unwrap().value, 0.5);

        let s = FiniteMeasureSpace::uniform(4).unwrap();
        let rot = CocycleFamily::constant_over(DrivingSystem::rotation(2, 1).unwrap(), MarkovMatrix::identity(&s));
        let hr = InvariantDensityMap::constant(&rot, Density::uniform(&s)).unwrap();
        let f0 = SkewSet::product(&rot, EnvPart::Points(vec![0]), (0..4).collect()).unwrap();
        assert_eq!(nu_measure(&rot, &hr, &f0, &mc).unwrap().value, 0.5);
    }

    #[test]
    fn doubling_over_coin_factorizes() {
        let (c, h) = bernoulli_const(MapSpec::Doubling, 64);
        let a = SkewSet::product(&c, EnvPart::Cylinder(Cylinder::new(0, vec![0])), (0..32).collect()).unwrap();
        let b = SkewSet::product(&c, EnvPart::Cylinder(Cylinder::new(0, vec![1])), (0..32).collect()).unwrap();
        let curve = skew_mixing_curve(&c, &h, &a, &b, 12, &MonteCarlo::default()).unwrap();
        assert!(curve.exact && curve.flag.is_none());
        assert_eq!(curve.rows[0].nu_joint, 0.0);
        for r in &curve.rows[1..] {
            assert_eq!(r.env_joint, r.env_product);
        }
        assert!(curve.decayed(1e-12));
        let checks = skew_cross_checks(&c, &h, &a, &b, 12, &MonteCarlo::default()).unwrap();
        assert!(checks.theta_invariance < 1e-15);
        assert!(checks.rectangle_gap.unwrap() < 1e-15);
        assert!(checks.koopman_gap.is_none());
    }

    #[test]
    fn baker_does_not_decay_and_pictures_agree() {
        let (c, h) = bernoulli_const(MapSpec::baker_cyclic(2).unwrap(), 16);
        let a = SkewSet::product(&c, EnvPart::Cylinder(Cylinder::new(0, vec![0])), (0..8).collect()).unwrap();
        let b = SkewSet::product(&c, EnvPart::All, vec![0, 1, 2, 3, 12]).unwrap();
        let curve = skew_mixing_curve(&c, &h, &a, &b, 12, &MonteCarlo::default()).unwrap();
        assert!(!curve.decayed(1e-6));
        let checks = skew_cross_checks(&c, &h, &a, &b, 12, &MonteCarlo::default()).unwrap();
        assert!(checks.koopman_gap.unwrap() < 1e-12);
        assert!(checks.rectangle_gap.unwrap() < 1e-15);
    }

    #[test]
    fn empty_state_part_gives_zero_curve() {
        let (c, h) = bernoulli_const(MapSpec::Doubling, 8);
        let a = SkewSet::product(&c, EnvPart::All, vec![]).unwrap();
        let b = SkewSet::product(&c, EnvPart::All, vec![0, 1]).unwrap();
        let curve = skew_mixing_curve(&c, &h, &a, &b, 5, &MonteCarlo::default()).unwrap();
        assert!(curve.rows.iter().all(|r| r.discrepancy == 0.0));
    }

    #[test]
    fn finite_driving_is_flagged() {
        let s = FiniteMeasureSpace::uniform(8).unwrap();
        let c = CocycleFamily::constant_over(DrivingSystem::rotation(3, 1).unwrap(), pf_exact(&MapSpec::Doubling, &s).unwrap());
        let h = InvariantDensityMap::constant(&c, Density::uniform(&s)).unwrap();
        let a = SkewSet::product(&c, EnvPart::Points(vec![0]), vec![0, 1, 2]).unwrap();
        let b = SkewSet::product(&c, EnvPart::Points(vec![1, 2]), vec![5]).unwrap();
        let curve = skew_mixing_curve(&c, &h, &a, &b, 9, &MonteCarlo::default()).unwrap();
        assert_eq!(curve.flag.as_deref(), Some(NOT_MIXING_FLAG));
        let checks = skew_cross_checks(&c, &h, &a, &b, 9, &MonteCarlo::default()).unwrap();
        assert!(checks.theta_invariance < 1e-15);
        assert!(checks.rectangle_gap.unwrap() < 1e-15);
    }

    #[test]
    fn overlapping_pieces_rejected() {
        let (c, _) = bernoulli_const(MapSpec::Doubling, 8);
        let err = SkewSet::new(
            &c,
            vec![
                ProductSet::new(EnvPart::Cylinder(Cylinder::new(0, vec![0])), vec![1, 2]),
                ProductSet::new(EnvPart::All, vec![2]),
            ],
        );
        assert!(err.is_err());
        let ok = SkewSet::new(
            &c,
            vec![
                ProductSet::new(EnvPart::Cylinder(Cylinder::new(0, vec![0])), vec![1, 2]),
                ProductSet::new(EnvPart::Cylinder(Cylinder::new(0, vec![1])), vec![2]),
            ],
        );
        assert!(ok.is_ok());
    }
}
