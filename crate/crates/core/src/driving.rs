//! The environment `(Ω, ℙ, σ)`: finite measure-preserving permutations and
//! a lazily sampled two-sided Bernoulli shift.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::measure::EXACT_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiniteKind {
    Permutation,
    Rotation,
}

/// A finite `Ω = {0, …, q-1}` with an invertible `ℙ`-preserving `σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDriving {
    kind: FiniteKind,
    probs: Vec<f64>,
    perm: Vec<usize>,
    inverse: Vec<usize>,
}

impl FiniteDriving {
    pub fn permutation(perm: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        Self::build(FiniteKind::Permutation, perm, probs)
    }

    /// `σ(i) = i + shift mod q` with uniform `ℙ`.
    pub fn rotation(q: usize, shift: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::invariant("driving.q", "need at least one point"));
        }
        let perm = (0..q).map(|i| (i + shift) % q).collect();
        Self::build(FiniteKind::Rotation, perm, vec![1.0 / q as f64; q])
    }

    fn build(kind: FiniteKind, perm: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let q = perm.len();
        if q == 0 {
            return Err(Error::invariant("driving.q", "need at least one point"));
        }
        if probs.len() != q {
            return Err(Error::Dimension {
                expected: q,
                found: probs.len(),
            });
        }
        let mut inverse = vec![usize::MAX; q];
        for (i, &t) in perm.iter().enumerate() {
            if t >= q || inverse[t] != usize::MAX {
                return Err(Error::invariant(
                    "driving.sigma bijective",
                    format!("sigma is not a bijection on 0..{q}"),
                ));
            }
            inverse[t] = i;
        }
        if probs.iter().any(|p| *p < 0.0) || (probs.iter().sum::<f64>() - 1.0).abs() > EXACT_TOL {
            return Err(Error::invariant(
                "driving.p",
                "probabilities must be nonnegative and sum to 1",
            ));
        }
        // ℙ(σ⁻¹{j}) = ℙ(j) on singletons
        for j in 0..q {
            if (probs[inverse[j]] - probs[j]).abs() > EXACT_TOL {
                return Err(Error::invariant(
                    "driving.p invariant",
                    format!("P(sigma^-1 {{{j}}}) = {} but P({{{j}}}) = {}", probs[inverse[j]], probs[j]),
                ));
            }
        }
        Ok(FiniteDriving {
            kind,
            probs,
            perm,
            inverse,
        })
    }

    pub fn kind(&self) -> FiniteKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sigma(&self) -> &[usize] {
        &self.perm
    }

    pub fn step(&self, i: usize, n: i64) -> usize {
        let mut i = i;
        if n >= 0 {
            for _ in 0..n {
                i = self.perm[i];
            }
        } else {
            for _ in 0..(-n) {
                i = self.inverse[i];
            }
        }
        i
    }

    /// The driving `σ^k` on the same points.
    pub fn power(&self, k: usize) -> Result<Self> {
        let perm = (0..self.len()).map(|i| self.step(i, k as i64)).collect();
        Self::build(FiniteKind::Permutation, perm, self.probs.clone())
    }

    /// `ℙ` pushed forward by `σ`.
    pub fn pushed_probs(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (i, p) in self.probs.iter().enumerate() {
            out[self.perm[i]] += p;
        }
        out
    }
}

/// The two-sided shift on `A^ℤ` with product measure.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliShift {
    probs: Vec<f64>,
    cdf: Vec<f64>,
    half_width: usize,
    seed: u64,
}

impl BernoulliShift {
    pub fn new(probs: Vec<f64>, half_width: usize, seed: u64) -> Result<Self> {
        if probs.is_empty() || probs.len() > u8::MAX as usize {
            return Err(Error::invariant("driving.p", "alphabet size must be in 1..=255"));
        }
        if probs.iter().any(|p| *p < 0.0) || (probs.iter().sum::<f64>() - 1.0).abs() > EXACT_TOL {
            return Err(Error::invariant(
                "driving.p",
                "symbol probabilities must be nonnegative and sum to 1",
            ));
        }
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cdf.push(acc);
        }
        Ok(BernoulliShift {
            probs,
            cdf,
            half_width,
            seed,
        })
    }

    pub fn fair_coin(half_width: usize, seed: u64) -> Self {
        Self::new(vec![0.5, 0.5], half_width, seed).expect("valid coin")
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn alphabet(&self) -> usize {
        self.probs.len()
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn draw(&self, path_seed: u64, abs: i64) -> u8 {
        let mut rng = ChaCha8Rng::seed_from_u64(path_seed);
        // zig-zag so negative coordinates get their own streams
        rng.set_stream(((abs << 1) ^ (abs >> 63)) as u64);
        let u: f64 = rng.gen();
        let k = self.cdf.partition_point(|c| *c <= u);
        k.min(self.probs.len() - 1) as u8
    }

    /// Symbol at coordinate `k` of the point (coordinate 0 is the present).
    pub fn symbol(&self, p: &BernoulliPoint, k: i64) -> u8 {
        let abs = p.offset + k;
        if abs >= p.lo && abs < p.lo + p.window.len() as i64 {
            p.window[(abs - p.lo) as usize]
        } else {
            self.draw(p.path_seed, abs)
        }
    }

    /// A point whose coordinates `[-h, h]` are pinned to `symbols`
    /// (`symbols.len() == 2h + 1`); other coordinates come from `path_seed`.
    pub fn point_from_window(&self, path_seed: u64, symbols: &[u8]) -> Result<BernoulliPoint> {
        if symbols.len() % 2 != 1 {
            return Err(Error::Precondition("window length must be odd".into()));
        }
        if symbols.iter().any(|s| *s as usize >= self.alphabet()) {
            return Err(Error::Precondition("symbol outside alphabet".into()));
        }
        Ok(BernoulliPoint {
            path_seed,
            offset: 0,
            lo: -((symbols.len() / 2) as i64),
            window: symbols.to_vec(),
        })
    }

    /// A fresh point with coordinates `[-H, H]` resolved.
    pub fn point(&self, path_seed: u64) -> BernoulliPoint {
        let h = self.half_width as i64;
        let window = (-h..=h).map(|k| self.draw(path_seed, k)).collect();
        BernoulliPoint {
            path_seed,
            offset: 0,
            lo: -h,
            window,
        }
    }

    /// Resolve further coordinates so that `[lo, hi]` (relative to the
    /// point's present) is cached. Already-resolved symbols are kept.
    pub fn extend(&self, p: &BernoulliPoint, lo: i64, hi: i64) -> BernoulliPoint {
        let abs_lo = (p.offset + lo).min(p.lo);
        let abs_hi = (p.offset + hi).max(p.lo + p.window.len() as i64 - 1);
        let probe = BernoulliPoint {
            offset: 0,
            ..p.clone()
        };
        let window = (abs_lo..=abs_hi).map(|a| self.symbol(&probe, a)).collect();
        BernoulliPoint {
            path_seed: p.path_seed,
            offset: p.offset,
            lo: abs_lo,
            window,
        }
    }
}

/// A point of the two-sided shift: a seed path plus a cached window of
/// resolved coordinates. `offset` counts applications of `σ`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BernoulliPoint {
    path_seed: u64,
    offset: i64,
    lo: i64,
    window: Vec<u8>,
}

impl BernoulliPoint {
    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn path_seed(&self) -> u64 {
        self.path_seed
    }

    /// The cached coordinates relative to the present, as `(first, symbols)`.
    pub fn resolved(&self) -> (i64, &[u8]) {
        (self.lo - self.offset, &self.window)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EnvPoint {
    Finite(usize),
    Bernoulli(BernoulliPoint),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DrivingSystem {
    Finite(FiniteDriving),
    Bernoulli(BernoulliShift),
}

impl DrivingSystem {
    pub fn rotation(q: usize, shift: usize) -> Result<Self> {
        Ok(DrivingSystem::Finite(FiniteDriving::rotation(q, shift)?))
    }

    pub fn permutation(perm: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        Ok(DrivingSystem::Finite(FiniteDriving::permutation(perm, probs)?))
    }

    /// The one-point environment, for autonomous (constant) cocycles.
    pub fn trivial() -> Self {
        DrivingSystem::Finite(FiniteDriving::rotation(1, 0).expect("one point"))
    }

    pub fn bernoulli(probs: Vec<f64>, half_width: usize, seed: u64) -> Result<Self> {
        Ok(DrivingSystem::Bernoulli(BernoulliShift::new(
            probs, half_width, seed,
        )?))
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, DrivingSystem::Finite(_))
    }

    pub fn as_finite(&self) -> Option<&FiniteDriving> {
        match self {
            DrivingSystem::Finite(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_bernoulli(&self) -> Option<&BernoulliShift> {
        match self {
            DrivingSystem::Bernoulli(b) => Some(b),
            _ => None,
        }
    }

    /// Number of distinct values of the finite feature of `ω` that selects
    /// `P_ω`: the point count, or the alphabet size.
    pub fn feature_count(&self) -> usize {
        match self {
            DrivingSystem::Finite(f) => f.len(),
            DrivingSystem::Bernoulli(b) => b.alphabet(),
        }
    }

    /// The point index, or the symbol at coordinate 0.
    pub fn feature(&self, w: &EnvPoint) -> usize {
        match (self, w) {
            (DrivingSystem::Finite(_), EnvPoint::Finite(i)) => *i,
            (DrivingSystem::Bernoulli(b), EnvPoint::Bernoulli(p)) => b.symbol(p, 0) as usize,
            _ => panic!("environment point does not belong to this driving system"),
        }
    }

    /// `σⁿω`; negative `n` applies `σ⁻¹`.
    pub fn advance(&self, w: &EnvPoint, n: i64) -> EnvPoint {
        match (self, w) {
            (DrivingSystem::Finite(f), EnvPoint::Finite(i)) => EnvPoint::Finite(f.step(*i, n)),
            (DrivingSystem::Bernoulli(_), EnvPoint::Bernoulli(p)) => {
                EnvPoint::Bernoulli(BernoulliPoint {
                    offset: p.offset + n,
                    ..p.clone()
                })
            }
            _ => panic!("environment point does not belong to this driving system"),
        }
    }

    /// `count` i.i.d. draws from `ℙ`, deterministic in `seed`.
    pub fn sample_env(&self, count: usize, seed: u64) -> Result<Vec<EnvPoint>> {
        if count == 0 {
            return Err(Error::Precondition("sample count must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            DrivingSystem::Finite(f) => {
                let dist = WeightedIndex::new(f.probs())
                    .map_err(|e| Error::Precondition(e.to_string()))?;
                Ok((0..count)
                    .map(|_| EnvPoint::Finite(dist.sample(&mut rng)))
                    .collect())
            }
            DrivingSystem::Bernoulli(b) => Ok((0..count)
                .map(|_| EnvPoint::Bernoulli(b.point(rng.gen())))
                .collect()),
        }
    }

    /// Every point of a finite `Ω` with its probability.
    pub fn finite_points(&self) -> Option<Vec<(EnvPoint, f64)>> {
        self.as_finite().map(|f| {
            f.probs()
                .iter()
                .enumerate()
                .map(|(i, p)| (EnvPoint::Finite(i), *p))
                .collect()
        })
    }

    /// Points the estimators should visit: all positive-probability points of
    /// a finite `Ω`, otherwise `count` samples.
    pub fn default_points(&self, count: usize, seed: u64) -> Result<Vec<EnvPoint>> {
        match self {
            DrivingSystem::Finite(f) => Ok((0..f.len())
                .filter(|i| f.probs()[*i] > 0.0)
                .map(EnvPoint::Finite)
                .collect()),
            DrivingSystem::Bernoulli(_) => self.sample_env(count, seed),
        }
    }
}

/// A cylinder set `{ω : ω_{start+i} = symbols[i]}` of the Bernoulli shift.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cylinder {
    pub start: i64,
    pub symbols: Vec<u8>,
}

impl Cylinder {
    pub fn new(start: i64, symbols: Vec<u8>) -> Self {
        Cylinder { start, symbols }
    }

    /// Number of constrained coordinates.
    pub fn width(&self) -> usize {
        self.symbols.len()
    }

    pub fn contains(&self, shift: &BernoulliShift, p: &BernoulliPoint) -> bool {
        self.symbols
            .iter()
            .enumerate()
            .all(|(i, s)| shift.symbol(p, self.start + i as i64) == *s)
    }

    /// `σ⁻ⁿ C`: the points whose `n`-th image lies in `C`.
    pub fn pullback(&self, n: i64) -> Cylinder {
        Cylinder {
            start: self.start + n,
            symbols: self.symbols.clone(),
        }
    }

    pub fn probability(&self, probs: &[f64]) -> f64 {
        self.symbols.iter().map(|s| probs[*s as usize]).product()
    }

    /// `ℙ(self ∩ other)`, exact for the product measure.
    pub fn intersection_probability(&self, other: &Cylinder, probs: &[f64]) -> f64 {
        match self.intersect(other) {
            Some(c) => c.constraints().map(|(_, s)| probs[s as usize]).product(),
            None => 0.0,
        }
    }

    /// `(coordinate, symbol)` pairs.
    pub fn constraints(&self) -> impl Iterator<Item = (i64, u8)> + '_ {
        self.symbols
            .iter()
            .enumerate()
            .map(move |(i, s)| (self.start + i as i64, *s))
    }

    /// The intersection as a sorted list of constraints, or `None` when the
    /// two cylinders disagree on a shared coordinate.
    pub fn intersect(&self, other: &Cylinder) -> Option<Constraints> {
        let mut all: Vec<(i64, u8)> = self.constraints().chain(other.constraints()).collect();
        all.sort();
        let mut out: Vec<(i64, u8)> = Vec::with_capacity(all.len());
        for (k, s) in all {
            match out.last() {
                Some((k0, s0)) if *k0 == k => {
                    if *s0 != s {
                        return None;
                    }
                }
                _ => out.push((k, s)),
            }
        }
        Some(Constraints(out))
    }
}

/// Coordinate constraints produced by intersecting cylinders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraints(pub Vec<(i64, u8)>);

impl Constraints {
    pub fn constraints(&self) -> impl Iterator<Item = (i64, u8)> + '_ {
        self.0.iter().cloned()
    }
}
