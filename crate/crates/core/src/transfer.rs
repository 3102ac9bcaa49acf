//! Builders of concrete Markov operators: exact Perron–Frobenius kernels on
//! dyadic partitions, the symbolic cyclic-shift baker model, Monte-Carlo
//! Ulam discretization, and the duality diagnostic.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::{integrate, Density, MarkovMatrix, Observable, Representation, Space};

/// A pointwise interval map used by [`MapSpec::Custom`].
#[derive(Clone)]
pub struct CustomMap {
    pub name: String,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for CustomMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomMap({})", self.name)
    }
}

/// `T(x) = a_i + s_i (x - b_i) mod 1` on `[b_i, b_{i+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    intercepts: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<f64>, intercepts: Vec<f64>) -> Result<Self> {
        let k = slopes.len();
        if k == 0 || breakpoints.len() != k + 1 || intercepts.len() != k {
            return Err(Error::Precondition(
                "piecewise_linear needs k+1 breakpoints, k slopes and k intercepts".into(),
            ));
        }
        if breakpoints[0] != 0.0 || breakpoints[k] != 1.0 {
            return Err(Error::Precondition(
                "piecewise_linear breakpoints must start at 0 and end at 1".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Precondition(
                "piecewise_linear breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(PiecewiseLinear {
            breakpoints,
            slopes,
            intercepts,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.breakpoints.partition_point(|b| *b <= x).saturating_sub(1);
        let i = i.min(self.slopes.len() - 1);
        (self.intercepts[i] + self.slopes[i] * (x - self.breakpoints[i])).rem_euclid(1.0)
    }
}

#[derive(Debug, Clone)]
pub enum MapSpec {
    Identity,
    /// `2x mod 1`
    Doubling,
    /// `1 - |1 - 2x|`
    Tent,
    /// Every point goes to `c`.
    Constant(f64),
    PiecewiseLinear(PiecewiseLinear),
    /// Cyclic left shift of `bits`-bit strings: cell `b1 b2 … bn` goes to
    /// `b2 … bn b1`, with `b1` the most significant bit of the cell index.
    BakerCyclic { bits: u32 },
    /// `(x, y) ↦ (2x mod 1, (y + ⌊2x⌋)/2)` on an `nx × ny` grid, cell
    /// index `iy * nx + ix`.
    BakerPlanar { nx: usize, ny: usize },
    Custom(CustomMap),
}

impl MapSpec {
    pub fn baker_cyclic(k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::Precondition("baker_cyclic needs k >= 1".into()));
        }
        Ok(MapSpec::BakerCyclic { bits: 2 * k })
    }

    pub fn custom(name: &str, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        MapSpec::Custom(CustomMap {
            name: name.to_string(),
            f: Arc::new(f),
        })
    }

    pub fn dimension(&self) -> usize {
        match self {
            MapSpec::BakerPlanar { .. } => 2,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MapSpec::BakerCyclic { bits } if *bits < 2 || bits % 2 != 0 || *bits > 30 => Err(
                Error::Precondition(format!("baker_cyclic bit count must be even, 2..=30; got {bits}")),
            ),
            MapSpec::BakerPlanar { nx, ny } if *nx == 0 || *ny == 0 => {
                Err(Error::Precondition("baker_planar grid must be nonempty".into()))
            }
            MapSpec::Constant(c) if !(0.0..1.0).contains(c) => {
                Err(Error::Precondition(format!("constant map value {c} outside [0, 1)")))
            }
            _ => Ok(()),
        }
    }

    /// Evaluates a one-dimensional map. Images outside `[0, 1)` are a domain
    /// error.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let y = match self {
            MapSpec::Identity => x,
            MapSpec::Doubling => (2.0 * x).fract(),
            // the fold point ½ ↦ 1 is a null set; keep it inside [0, 1)
            MapSpec::Tent => (1.0 - (1.0 - 2.0 * x).abs()).min(1.0f64.next_down()),
            MapSpec::Constant(c) => *c,
            MapSpec::PiecewiseLinear(p) => p.eval(x),
            MapSpec::BakerCyclic { bits } => {
                let n = (1u64 << bits) as f64;
                let scaled = x * n;
                let i = scaled.floor();
                let t = scaled - i;
                (baker_shift(i as usize, *bits) as f64 + t) / n
            }
            MapSpec::Custom(c) => (c.f)(x),
            MapSpec::BakerPlanar { .. } => {
                return Err(Error::Unsupported("planar map needs eval_planar".into()))
            }
        };
        if !(0.0..1.0).contains(&y) {
            return Err(Error::Domain { x, image: y });
        }
        Ok(y)
    }

    pub fn eval_planar(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        match self {
            MapSpec::BakerPlanar { .. } => {
                let d = (2.0 * x).floor();
                Ok((2.0 * x - d, (y + d) / 2.0))
            }
            _ => Err(Error::Unsupported("not a planar map".into())),
        }
    }
}

/// Cyclic left shift of a `bits`-bit index.
pub fn baker_shift(i: usize, bits: u32) -> usize {
    let mask = (1usize << bits) - 1;
    ((i << 1) | (i >> (bits - 1))) & mask
}

fn dyadic_exponent(space: &Space) -> Option<u32> {
    let n = space.len();
    if n.is_power_of_two() && space.is_uniform() {
        Some(n.trailing_zeros())
    } else {
        None
    }
}

/// The exact Perron–Frobenius kernel of `spec` on `space`, when the
/// partition is Markov for the map.
pub fn pf_exact(spec: &MapSpec, space: &Space) -> Result<MarkovMatrix> {
    spec.validate()?;
    let n = space.len();
    match spec {
        MapSpec::Identity => Ok(MarkovMatrix::identity(space)),
        MapSpec::Constant(c) => {
            let t = space.cell_of(*c).expect("validated");
            MarkovMatrix::cell_map(space, &vec![t; n])
        }
        MapSpec::Doubling | MapSpec::Tent => {
            dyadic_exponent(space).ok_or_else(|| {
                Error::Resolution(format!(
                    "exact {spec:?} kernel needs 2^p uniform cells, got {n} cells"
                ))
            })?;
            if n == 1 {
                return Ok(MarkovMatrix::identity(space));
            }
            let rows = (0..n)
                .map(|i| {
                    // the image of cell i is two adjacent cells, each hit by half its mass
                    let first = match spec {
                        MapSpec::Doubling => (2 * i) % n,
                        _ if i < n / 2 => 2 * i,
                        _ => 2 * n - 2 * i - 2,
                    };
                    vec![(first, 0.5), (first + 1, 0.5)]
                })
                .collect();
            MarkovMatrix::from_rows(space, rows, Representation::Exact)
        }
        MapSpec::BakerCyclic { bits } => {
            if dyadic_exponent(space) != Some(*bits) {
                return Err(Error::Resolution(format!(
                    "baker_cyclic with {bits} bits needs 2^{bits} uniform cells, got {n}"
                )));
            }
            let targets: Vec<usize> = (0..n).map(|i| baker_shift(i, *bits)).collect();
            MarkovMatrix::cell_map(space, &targets)
        }
        _ => Err(Error::Resolution(format!(
            "no exact kernel for {spec:?}; use the Ulam builder"
        ))),
    }
}

/// Monte-Carlo Ulam kernel: row `i` estimates `m(cell_i ∩ T⁻¹ cell_j) / m(cell_i)`
/// from stratified samples, then is renormalized to sum to one.
pub fn pf_ulam(
    spec: &MapSpec,
    space: &Space,
    samples_per_cell: usize,
    seed: u64,
) -> Result<MarkovMatrix> {
    spec.validate()?;
    if samples_per_cell == 0 {
        return Err(Error::Precondition("samples_per_cell must be at least 1".into()));
    }
    let n = space.len();
    if let MapSpec::BakerPlanar { nx, ny } = spec {
        if nx * ny != n || !space.is_uniform() {
            return Err(Error::Resolution(format!(
                "planar grid {nx}x{ny} needs {} uniform cells, got {n}",
                nx * ny
            )));
        }
    }
    let rows: Result<Vec<Vec<(usize, f64)>>> = (0..n)
        .into_par_iter()
        .map(|i| ulam_row(spec, space, i, samples_per_cell, seed))
        .collect();
    MarkovMatrix::from_rows(space, rows?, Representation::Approximate)
}

fn ulam_row(
    spec: &MapSpec,
    space: &Space,
    i: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    let mut hits: Vec<(usize, f64)> = Vec::new();
    let mut count = |j: usize| match hits.iter_mut().find(|(c, _)| *c == j) {
        Some(e) => e.1 += 1.0,
        None => hits.push((j, 1.0)),
    };
    match spec {
        MapSpec::BakerPlanar { nx, ny } => {
            let (nx, ny) = (*nx, *ny);
            let (ix, iy) = (i % nx, i / nx);
            let k = (samples as f64).sqrt().ceil() as usize;
            for a in 0..k {
                for b in 0..k {
                    let x = (ix as f64 + (a as f64 + rng.gen::<f64>()) / k as f64) / nx as f64;
                    let y = (iy as f64 + (b as f64 + rng.gen::<f64>()) / k as f64) / ny as f64;
                    let (tx, ty) = spec.eval_planar(x.min(1f64.next_down()), y.min(1f64.next_down()))?;
                    let jx = ((tx * nx as f64) as usize).min(nx - 1);
                    let jy = ((ty * ny as f64) as usize).min(ny - 1);
                    count(jy * nx + jx);
                }
            }
        }
        _ => {
            let (lo, hi) = space.cell_bounds(i);
            let top = hi.next_down();
            for s in 0..samples {
                let u: f64 = rng.gen();
                let x = (lo + (s as f64 + u) / samples as f64 * (hi - lo)).clamp(lo, top);
                let y = spec.eval(x)?;
                count(space.cell_of(y).ok_or(Error::Domain { x, image: y })?);
            }
        }
    }
    let total: f64 = hits.iter().map(|(_, c)| c).sum();
    for h in &mut hits {
        h.1 /= total;
    }
    Ok(hits)
}

/// `|∫ (P f) g dm − ∫ f (g∘T) dm|`, the second integral by midpoint
/// quadrature with `refinement` points per cell (per axis for planar maps).
pub fn duality_residual(
    p: &MarkovMatrix,
    spec: &MapSpec,
    f: &Density,
    g: &Observable,
    refinement: usize,
) -> Result<f64> {
    let lhs = integrate(&p.apply(f)?, g)?;
    let space = p.space();
    let r = refinement.max(1);
    let gv = g.values();
    let mut rhs = 0.0;
    match spec {
        MapSpec::BakerPlanar { nx, ny } => {
            let (nx, ny) = (*nx, *ny);
            for i in 0..space.len() {
                let (ix, iy) = (i % nx, i / nx);
                let mut acc = 0.0;
                for a in 0..r {
                    for b in 0..r {
                        let x = (ix as f64 + (a as f64 + 0.5) / r as f64) / nx as f64;
                        let y = (iy as f64 + (b as f64 + 0.5) / r as f64) / ny as f64;
                        let (tx, ty) = spec.eval_planar(x, y)?;
                        let jx = ((tx * nx as f64) as usize).min(nx - 1);
                        let jy = ((ty * ny as f64) as usize).min(ny - 1);
                        acc += gv[jy * nx + jx];
                    }
                }
                rhs += f.values()[i] * space.weight(i) * acc / (r * r) as f64;
            }
        }
        _ => {
            for i in 0..space.len() {
                let (lo, hi) = space.cell_bounds(i);
                let mut acc = 0.0;
                for a in 0..r {
                    let x = lo + (a as f64 + 0.5) / r as f64 * (hi - lo);
                    let y = spec.eval(x)?;
                    acc += gv[space.cell_of(y).ok_or(Error::Domain { x, image: y })?];
                }
                rhs += f.values()[i] * space.weight(i) * acc / r as f64;
            }
        }
    }
    Ok((lhs - rhs).abs())
}

/// Planted block-cycle operator: the mass of every cell in block `b` is
/// spread over block `targets[b]` in proportion to cell weight. Blocks must
/// partition the cells.
pub fn block_cycle(space: &Space, blocks: &[Vec<usize>], targets: &[usize]) -> Result<MarkovMatrix> {
    if blocks.len() != targets.len() || blocks.is_empty() {
        return Err(Error::Precondition("one target per block required".into()));
    }
    let mut owner = vec![usize::MAX; space.len()];
    for (b, cells) in blocks.iter().enumerate() {
        if cells.is_empty() {
            return Err(Error::Precondition(format!("block {b} is empty")));
        }
        for &c in cells {
            if c >= space.len() || owner[c] != usize::MAX {
                return Err(Error::Precondition(format!(
                    "cell {c} is out of range or in two blocks"
                )));
            }
            owner[c] = b;
        }
    }
    if let Some(c) = owner.iter().position(|o| *o == usize::MAX) {
        return Err(Error::Precondition(format!("cell {c} belongs to no block")));
    }
    if let Some(t) = targets.iter().find(|t| **t >= blocks.len()) {
        return Err(Error::Precondition(format!("target block {t} does not exist")));
    }
    let spread: Vec<Vec<(usize, f64)>> = blocks
        .iter()
        .map(|cells| {
            let m = space.measure_of(cells);
            cells.iter().map(|&c| (c, space.weight(c) / m)).collect()
        })
        .collect();
    let rows = owner.iter().map(|&b| spread[targets[b]].clone()).collect();
    let repr = if space.is_uniform() && blocks.iter().all(|b| b.len().is_power_of_two()) {
        Representation::Exact
    } else {
        Representation::Approximate
    };
    MarkovMatrix::from_rows(space, rows, repr)
}

/// Splits `0..n` into `r` contiguous blocks whose sizes differ by at most
/// one, larger blocks first.
pub fn contiguous_blocks(n: usize, r: usize) -> Result<Vec<Vec<usize>>> {
    if r == 0 || r > n {
        return Err(Error::Precondition(format!("{n} cells do not split into {r} nonempty blocks")));
    }
    let (size, extra) = (n / r, n % r);
    let mut start = 0;
    Ok((0..r)
        .map(|b| {
            let len = size + usize::from(b < extra);
            start += len;
            (start - len..start).collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::FiniteMeasureSpace;

    #[test]
    fn exact_doubling_rows() {
        let s = FiniteMeasureSpace::uniform(4).unwrap();
        let p = pf_exact(&MapSpec::Doubling, &s).unwrap();
        let expect = [[0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.5]];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(p.entry(i, j), expect[i % 2][j]);
            }
        }
        let u = p.apply(&Density::uniform(&s)).unwrap();
        assert_eq!(u, Density::uniform(&s));
    }

    #[test]
    fn doubling_rows_repeat_with_half_period() {
        let s = FiniteMeasureSpace::uniform(64).unwrap();
        let p = pf_exact(&MapSpec::Doubling, &s).unwrap();
        for i in 0..32 {
            assert_eq!(p.row(i), p.row(i + 32));
        }
    }

    #[test]
    fn baker_k1_permutation() {
        let s = FiniteMeasureSpace::uniform(4).unwrap();
        let p = pf_exact(&MapSpec::baker_cyclic(1).unwrap(), &s).unwrap();
        // 00→00, 01→10, 10→01, 11→11
        assert_eq!(p.as_cell_map(0.0), Some(vec![0, 2, 1, 3]));
    }

    #[test]
    fn baker_is_doubly_stochastic_and_dual_inverts() {
        let s = FiniteMeasureSpace::uniform(256).unwrap();
        let p = pf_exact(&MapSpec::baker_cyclic(4).unwrap(), &s).unwrap();
        let d = p.to_dense();
        for j in 0..256 {
            let col: f64 = d.iter().map(|r| r[j]).sum();
            assert_eq!(col, 1.0);
        }
        // P* P = id on observables: the dual undoes the push
        let g = Observable::new(&s, (0..256).map(|i| i as f64).collect()).unwrap();
        let pushed = Observable::from_density(&p.apply(&Density::new(&s, g.values().to_vec()).unwrap()).unwrap());
        assert_eq!(p.dual_apply(&pushed).unwrap(), g);
    }

    #[test]
    fn baker_pushes_sets_to_images() {
        let s = FiniteMeasureSpace::uniform(16).unwrap();
        let spec = MapSpec::baker_cyclic(2).unwrap();
        let p = pf_exact(&spec, &s).unwrap();
        let b = [1usize, 5, 6, 12];
        let mut set: Vec<usize> = b.to_vec();
        let mut f = Density::indicator(&s, &b).unwrap();
        for _ in 0..6 {
            f = p.apply(&f).unwrap();
            set = set.iter().map(|&i| baker_shift(i, 4)).collect();
            assert_eq!(f, Density::indicator(&s, &set).unwrap());
        }
    }

    #[test]
    fn exact_needs_dyadic_partition() {
        let s = FiniteMeasureSpace::uniform(6).unwrap();
        assert!(matches!(pf_exact(&MapSpec::Doubling, &s), Err(Error::Resolution(_))));
        let s = FiniteMeasureSpace::uniform(8).unwrap();
        assert!(matches!(
            pf_exact(&MapSpec::baker_cyclic(2).unwrap(), &s),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn ulam_identity_is_exact() {
        for n in [1, 3, 10, 64] {
            let s = FiniteMeasureSpace::uniform(n).unwrap();
            let p = pf_ulam(&MapSpec::Identity, &s, 100, 3).unwrap();
            assert_eq!(p.to_dense(), MarkovMatrix::identity(&s).to_dense());
        }
    }

    #[test]
    fn ulam_doubling_close_to_exact() {
        let s = FiniteMeasureSpace::uniform(64).unwrap();
        let exact = pf_exact(&MapSpec::Doubling, &s).unwrap().to_dense();
        let ulam = pf_ulam(&MapSpec::Doubling, &s, 10_000, 11).unwrap();
        assert!(ulam.markov_check().passed);
        let ud = ulam.to_dense();
        for i in 0..64 {
            for j in 0..64 {
                assert!((ud[i][j] - exact[i][j]).abs() < 0.02);
            }
        }
    }

    #[test]
    fn ulam_is_seed_deterministic() {
        let s = FiniteMeasureSpace::uniform(32).unwrap();
        let a = pf_ulam(&MapSpec::Tent, &s, 500, 5).unwrap();
        let b = pf_ulam(&MapSpec::Tent, &s, 500, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ulam_rejects_escaping_map() {
        let s = FiniteMeasureSpace::uniform(8).unwrap();
        let spec = MapSpec::custom("escape", |x| x + 0.5);
        assert!(matches!(pf_ulam(&spec, &s, 10, 0), Err(Error::Domain { .. })));
    }

    #[test]
    fn duality_residual_identity_zero() {
        let s = FiniteMeasureSpace::uniform(16).unwrap();
        let p = MarkovMatrix::identity(&s);
        let f = Density::new(&s, (0..16).map(|i| (i as f64).sin()).collect()).unwrap();
        let g = Observable::new(&s, (0..16).map(|i| (i as f64).cos()).collect()).unwrap();
        assert_eq!(duality_residual(&p, &MapSpec::Identity, &f, &g, 4).unwrap(), 0.0);
    }

    #[test]
    fn block_swap_kernel() {
        let s = FiniteMeasureSpace::uniform(4).unwrap();
        let p = block_cycle(&s, &contiguous_blocks(4, 2).unwrap(), &[1, 0]).unwrap();
        assert_eq!(contiguous_blocks(8, 3).unwrap(), vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7]]);
        assert!(contiguous_blocks(2, 3).is_err());
        assert_eq!(p.row(0), (&[2usize, 3][..], &[0.5, 0.5][..]));
        assert_eq!(p.row(3), (&[0usize, 1][..], &[0.5, 0.5][..]));
        assert!(block_cycle(&s, &[vec![0, 1], vec![1, 2, 3]], &[1, 0]).is_err());
    }

    #[test]
    fn piecewise_linear_reproduces_doubling() {
        let pl = PiecewiseLinear::new(vec![0.0, 0.5, 1.0], vec![2.0, 2.0], vec![0.0, 0.0]).unwrap();
        for k in 0..100 {
            let x = k as f64 / 100.0;
            assert_eq!(pl.eval(x), MapSpec::Doubling.eval(x).unwrap());
        }
        assert!(PiecewiseLinear::new(vec![0.0, 0.6, 0.5, 1.0], vec![1.0; 3], vec![0.0; 3]).is_err());
    }
}
