//! Finite measure spaces, cell-constant densities and observables, and
//! Markov operators stored as row-stochastic mass kernels.
//!
//! A kernel entry `K[i][j]` is the fraction of the mass sitting in cell `i`
//! that is sent to cell `j`. Densities are acted on through their mass
//! vectors `mu_i = f_i * m_i`, so conservation is a row-sum check and the
//! dual (Koopman) action is the plain matrix-vector product `K g`.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Tolerance used by every exact model.
pub const EXACT_TOL: f64 = 1e-12;

/// The discretized probability space: `N` cells with positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMeasureSpace {
    weights: Vec<f64>,
    edges: Vec<f64>,
}

/// Shared handle; every density, observable and kernel points at one of these.
pub type Space = Arc<FiniteMeasureSpace>;

impl FiniteMeasureSpace {
    pub fn new(weights: Vec<f64>) -> Result<Space> {
        if weights.is_empty() {
            return Err(Error::invariant("cell count", "space needs at least one cell"));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w > 0.0)) {
            return Err(Error::invariant(
                "weights positive",
                format!("cell {i} has weight {w}"),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > EXACT_TOL {
            return Err(Error::invariant(
                "weights sum",
                format!("weights sum to {total}, expected 1"),
            ));
        }
        let mut edges = Vec::with_capacity(weights.len() + 1);
        let mut acc = 0.0;
        edges.push(0.0);
        for w in &weights {
            acc += w;
            edges.push(acc);
        }
        // pin the right end so cell lookup covers all of [0, 1)
        *edges.last_mut().unwrap() = 1.0;
        Ok(Arc::new(FiniteMeasureSpace { weights, edges }))
    }

    /// `n` cells of weight `1/n`.
    pub fn uniform(n: usize) -> Result<Space> {
        if n == 0 {
            return Err(Error::invariant("cell count", "space needs at least one cell"));
        }
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Whether all cells carry the same weight.
    pub fn is_uniform(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|w| (w - w0).abs() <= EXACT_TOL * w0)
    }

    /// Left endpoint and right endpoint of cell `i` when the cells are laid
    /// out on `[0, 1)` in index order.
    pub fn cell_bounds(&self, i: usize) -> (f64, f64) {
        (self.edges[i], self.edges[i + 1])
    }

    /// Index of the cell containing `x`, for `x` in `[0, 1)`.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        if !(0.0..1.0).contains(&x) {
            return None;
        }
        let idx = self.edges.partition_point(|e| *e <= x);
        Some(idx.saturating_sub(1).min(self.len() - 1))
    }

    pub fn measure_of(&self, cells: &[usize]) -> f64 {
        cells.iter().map(|&i| self.weights[i]).sum()
    }
}

pub(crate) fn check_same(a: &Space, b: &Space) -> Result<()> {
    if Arc::ptr_eq(a, b) || a == b {
        Ok(())
    } else if a.len() != b.len() {
        Err(Error::Dimension {
            expected: a.len(),
            found: b.len(),
        })
    } else {
        Err(Error::SpaceMismatch)
    }
}

/// A cell-constant density `f`; its mass vector is `f_i * m_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    space: Space,
    values: Vec<f64>,
}

impl Density {
    pub fn new(space: &Space, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::Dimension {
                expected: space.len(),
                found: values.len(),
            });
        }
        Ok(Density {
            space: space.clone(),
            values,
        })
    }

    pub fn from_masses(space: &Space, masses: &[f64]) -> Result<Self> {
        if masses.len() != space.len() {
            return Err(Error::Dimension {
                expected: space.len(),
                found: masses.len(),
            });
        }
        let values = masses
            .iter()
            .zip(space.weights())
            .map(|(mu, w)| mu / w)
            .collect();
        Ok(Density {
            space: space.clone(),
            values,
        })
    }

    /// The constant density `1`.
    pub fn uniform(space: &Space) -> Self {
        Density {
            space: space.clone(),
            values: vec![1.0; space.len()],
        }
    }

    pub fn zero(space: &Space) -> Self {
        Density {
            space: space.clone(),
            values: vec![0.0; space.len()],
        }
    }

    /// The (unnormalized) indicator function `1_B`.
    pub fn indicator(space: &Space, cells: &[usize]) -> Result<Self> {
        let mut values = vec![0.0; space.len()];
        for &c in cells {
            *values.get_mut(c).ok_or(Error::Dimension {
                expected: space.len(),
                found: c + 1,
            })? = 1.0;
        }
        Ok(Density {
            space: space.clone(),
            values,
        })
    }

    /// `1_B / m(B)`, a member of `D(X, m)`.
    pub fn normalized_indicator(space: &Space, cells: &[usize]) -> Result<Self> {
        let ind = Self::indicator(space, cells)?;
        let mass = ind.total_mass();
        if mass <= 0.0 {
            return Err(Error::Precondition("indicator of an empty set".into()));
        }
        Ok(ind.scaled(1.0 / mass))
    }

    /// Unit mass concentrated on cell `i`.
    pub fn cell(space: &Space, i: usize) -> Self {
        let mut values = vec![0.0; space.len()];
        values[i] = 1.0 / space.weight(i);
        Density {
            space: space.clone(),
            values,
        }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(self.space.weights())
            .map(|(f, w)| f * w)
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.values
            .iter()
            .zip(self.space.weights())
            .map(|(f, w)| f * w)
            .sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values
            .iter()
            .zip(self.space.weights())
            .map(|(f, w)| f.abs() * w)
            .sum()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_probability(&self, tol: f64) -> bool {
        self.values.iter().all(|v| *v >= -tol) && (self.total_mass() - 1.0).abs() <= tol
    }

    pub fn is_zero_mean(&self, tol: f64) -> bool {
        self.total_mass().abs() <= tol * self.l1_norm().max(1.0)
    }

    /// Fails unless the density is a member of `D(X, m)`.
    pub fn require_probability(&self) -> Result<()> {
        if self.is_probability(EXACT_TOL) {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "density is not in D(X,m): mass {}, min value {}",
                self.total_mass(),
                self.values.iter().cloned().fold(f64::INFINITY, f64::min)
            )))
        }
    }

    /// Fails unless the density has zero total mass.
    pub fn require_zero_mean(&self) -> Result<()> {
        if self.is_zero_mean(EXACT_TOL) {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "density is not in L1_0: total mass {:e}",
                self.total_mass()
            )))
        }
    }

    /// Cells where the value exceeds `rel_floor * max value`.
    pub fn support(&self, rel_floor: f64) -> Vec<bool> {
        let floor = rel_floor * self.max_value().max(0.0);
        self.values.iter().map(|v| *v > floor).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Density {
            space: self.space.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Density, b: f64) -> Result<Self> {
        check_same(&self.space, &other.space)?;
        Ok(Density {
            space: self.space.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    pub fn l1_distance(&self, other: &Density) -> Result<f64> {
        Ok(self.combine(1.0, other, -1.0)?.l1_norm())
    }

    /// Pointwise product with an observable, still a density.
    pub fn weighted_by(&self, g: &Observable) -> Result<Self> {
        check_same(&self.space, &g.space)?;
        Ok(Density {
            space: self.space.clone(),
            values: self
                .values
                .iter()
                .zip(&g.values)
                .map(|(f, g)| f * g)
                .collect(),
        })
    }
}

/// A cell-constant bounded observable `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    space: Space,
    values: Vec<f64>,
}

impl Observable {
    pub fn new(space: &Space, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::Dimension {
                expected: space.len(),
                found: values.len(),
            });
        }
        Ok(Observable {
            space: space.clone(),
            values,
        })
    }

    pub fn constant(space: &Space, c: f64) -> Self {
        Observable {
            space: space.clone(),
            values: vec![c; space.len()],
        }
    }

    pub fn indicator(space: &Space, cells: &[usize]) -> Result<Self> {
        let d = Density::indicator(space, cells)?;
        Ok(Observable {
            space: space.clone(),
            values: d.values,
        })
    }

    /// Reinterpret a density's values as an observable (both are cell-constant).
    pub fn from_density(f: &Density) -> Self {
        Observable {
            space: f.space.clone(),
            values: f.values.clone(),
        }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn in_unit_ball(&self) -> bool {
        self.sup_norm() <= 1.0 + EXACT_TOL
    }

    /// m-weighted mean.
    pub fn mean(&self) -> f64 {
        self.values
            .iter()
            .zip(self.space.weights())
            .map(|(g, w)| g * w)
            .sum()
    }

    /// Sup-norm distance from the constant equal to the m-weighted mean.
    pub fn distance_from_constants(&self) -> f64 {
        let mean = self.mean();
        self.values.iter().fold(0.0, |a, v| a.max((v - mean).abs()))
    }

    /// Pointwise sign, with `sgn(0) = 0`.
    pub fn sign_of(f: &Density) -> Self {
        Observable {
            space: f.space.clone(),
            values: f
                .values
                .iter()
                .map(|v| if *v > 0.0 { 1.0 } else if *v < 0.0 { -1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Observable {
            space: self.space.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn combine(&self, a: f64, other: &Observable, b: f64) -> Result<Self> {
        check_same(&self.space, &other.space)?;
        Ok(Observable {
            space: self.space.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }
}

/// `sum_i f_i g_i m_i`.
pub fn integrate(f: &Density, g: &Observable) -> Result<f64> {
    check_same(&f.space, &g.space)?;
    Ok(pair_values(&f.values, &g.values, f.space.weights()))
}

pub(crate) fn pair_values(f: &[f64], g: &[f64], w: &[f64]) -> f64 {
    f.iter().zip(g).zip(w).map(|((f, g), w)| f * g * w).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Whether kernel entries are dyadic rationals reproduced exactly in binary
/// floating point, or estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Exact,
    Approximate,
}

/// Outcome of [`markov_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovReport {
    pub max_row_deviation: f64,
    pub min_entry: f64,
    pub passed: bool,
}

/// A Markov operator on a finite measure space, stored as a sparse
/// row-stochastic mass kernel in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovMatrix {
    space: Space,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    repr: Representation,
}

impl MarkovMatrix {
    /// Builds a kernel from sparse rows and runs [`markov_check`].
    pub fn from_rows(
        space: &Space,
        rows: Vec<Vec<(usize, f64)>>,
        repr: Representation,
    ) -> Result<Self> {
        let m = Self::from_rows_unchecked(space, rows, repr)?;
        let report = m.markov_check();
        if !report.passed {
            return Err(Error::invariant(
                "markov",
                format!(
                    "max row-sum deviation {:e}, min entry {:e}",
                    report.max_row_deviation, report.min_entry
                ),
            ));
        }
        Ok(m)
    }

    /// Builds a kernel without checking stochasticity. Duplicate columns in
    /// a row are summed and exact zeros dropped.
    pub fn from_rows_unchecked(
        space: &Space,
        rows: Vec<Vec<(usize, f64)>>,
        repr: Representation,
    ) -> Result<Self> {
        let n = space.len();
        if rows.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: rows.len(),
            });
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|(j, _)| *j);
            let start = cols.len();
            for (j, v) in row {
                if j >= n {
                    return Err(Error::Dimension {
                        expected: n,
                        found: j + 1,
                    });
                }
                if cols.len() > start && *cols.last().unwrap() == j {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(j);
                    vals.push(v);
                }
            }
            // drop exact zeros left by cancellation or input
            let mut w = start;
            for r in start..cols.len() {
                if vals[r] != 0.0 {
                    cols[w] = cols[r];
                    vals[w] = vals[r];
                    w += 1;
                }
            }
            cols.truncate(w);
            vals.truncate(w);
            row_ptr.push(cols.len());
        }
        Ok(MarkovMatrix {
            space: space.clone(),
            row_ptr,
            cols,
            vals,
            repr,
        })
    }

    pub fn from_dense(space: &Space, rows: &[Vec<f64>], repr: Representation) -> Result<Self> {
        let sparse = dense_to_sparse(space, rows)?;
        Self::from_rows(space, sparse, repr)
    }

    pub fn from_dense_unchecked(
        space: &Space,
        rows: &[Vec<f64>],
        repr: Representation,
    ) -> Result<Self> {
        let sparse = dense_to_sparse(space, rows)?;
        Self::from_rows_unchecked(space, sparse, repr)
    }

    pub fn identity(space: &Space) -> Self {
        let n = space.len();
        MarkovMatrix {
            space: space.clone(),
            row_ptr: (0..=n).collect(),
            cols: (0..n).collect(),
            vals: vec![1.0; n],
            repr: Representation::Exact,
        }
    }

    /// The kernel of a cell map: all of cell `i` goes to cell `targets[i]`.
    pub fn cell_map(space: &Space, targets: &[usize]) -> Result<Self> {
        let rows = targets.iter().map(|&t| vec![(t, 1.0)]).collect();
        Self::from_rows(space, rows, Representation::Exact)
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut row = vec![0.0; n];
                let (cols, vals) = self.row(i);
                for (j, v) in cols.iter().zip(vals) {
                    row[*j] = *v;
                }
                row
            })
            .collect()
    }

    /// Mass vector times kernel.
    pub fn push_mass(&self, mass: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (i, mu) in mass.iter().enumerate() {
            if *mu == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (j, k) in cols.iter().zip(vals) {
                out[*j] += mu * k;
            }
        }
        out
    }

    /// Kernel times observable values: the dual action.
    pub fn pull_values(&self, g: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(j, k)| k * g[*j]).sum()
            })
            .collect()
    }

    pub fn apply(&self, f: &Density) -> Result<Density> {
        check_same(&self.space, f.space())?;
        Density::from_masses(&self.space, &self.push_mass(&f.masses()))
    }

    pub fn dual_apply(&self, g: &Observable) -> Result<Observable> {
        check_same(&self.space, g.space())?;
        Observable::new(&self.space, self.pull_values(g.values()))
    }

    /// The operator `next ∘ self`: apply `self` first. In kernel terms this
    /// is the row-convention product `K_self · K_next`.
    pub fn then(&self, next: &MarkovMatrix) -> Result<MarkovMatrix> {
        check_same(&self.space, &next.space)?;
        let n = self.len();
        let mut acc = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(self.nnz());
        let mut vals = Vec::with_capacity(self.nnz());
        row_ptr.push(0);
        for i in 0..n {
            let (c1, v1) = self.row(i);
            for (k, a) in c1.iter().zip(v1) {
                let (c2, v2) = next.row(*k);
                for (j, b) in c2.iter().zip(v2) {
                    if acc[*j] == 0.0 {
                        touched.push(*j);
                    }
                    acc[*j] += a * b;
                }
            }
            touched.sort_unstable();
            touched.dedup();
            for &j in &touched {
                if acc[j] != 0.0 {
                    cols.push(j);
                    vals.push(acc[j]);
                }
                acc[j] = 0.0;
            }
            touched.clear();
            row_ptr.push(cols.len());
        }
        let repr = if self.repr == Representation::Exact && next.repr == Representation::Exact {
            Representation::Exact
        } else {
            Representation::Approximate
        };
        Ok(MarkovMatrix {
            space: self.space.clone(),
            row_ptr,
            cols,
            vals,
            repr,
        })
    }

    /// `K^n` as an operator power.
    pub fn power(&self, n: usize) -> MarkovMatrix {
        let mut out = MarkovMatrix::identity(&self.space);
        for _ in 0..n {
            out = out.then(self).expect("same space");
        }
        out
    }

    pub fn markov_check(&self) -> MarkovReport {
        let mut max_dev: f64 = 0.0;
        let mut min_entry = f64::INFINITY;
        for i in 0..self.len() {
            let (_, vals) = self.row(i);
            let s: f64 = vals.iter().sum();
            max_dev = max_dev.max((s - 1.0).abs());
            for v in vals {
                min_entry = min_entry.min(*v);
            }
        }
        if self.vals.len() < self.len() * self.len() {
            // implicit zeros
            min_entry = min_entry.min(0.0);
        }
        if !min_entry.is_finite() {
            min_entry = 0.0;
        }
        MarkovReport {
            max_row_deviation: max_dev,
            min_entry,
            passed: max_dev <= EXACT_TOL && min_entry >= 0.0,
        }
    }

    /// If every row is a single unit entry within `tol`, the cell map it
    /// encodes.
    pub fn as_cell_map(&self, tol: f64) -> Option<Vec<usize>> {
        let mut targets = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let (cols, vals) = self.row(i);
            let mut target = None;
            for (j, v) in cols.iter().zip(vals) {
                if (v - 1.0).abs() <= tol {
                    if target.is_some() {
                        return None;
                    }
                    target = Some(*j);
                } else if v.abs() > tol {
                    return None;
                }
            }
            targets.push(target?);
        }
        Some(targets)
    }

    /// Whether every dual image of a cell indicator is `{0,1}`-valued within `tol`.
    pub fn is_indicator_preserving(&self, tol: f64) -> bool {
        self.vals
            .iter()
            .all(|v| v.abs() <= tol || (v - 1.0).abs() <= tol)
    }

    /// The kernel restricted to `cells`, on the renormalized subspace.
    /// Returns the restricted kernel and the largest mass fraction any row
    /// lost to cells outside the set.
    pub fn restrict(&self, cells: &[usize], sub: &Space) -> Result<(MarkovMatrix, f64)> {
        if sub.len() != cells.len() {
            return Err(Error::Dimension {
                expected: cells.len(),
                found: sub.len(),
            });
        }
        let mut index = vec![usize::MAX; self.len()];
        for (k, &c) in cells.iter().enumerate() {
            index[c] = k;
        }
        let mut leak: f64 = 0.0;
        let mut rows = Vec::with_capacity(cells.len());
        for &c in cells {
            let (cols, vals) = self.row(c);
            let mut row = Vec::new();
            let mut kept = 0.0;
            for (j, v) in cols.iter().zip(vals) {
                if index[*j] != usize::MAX {
                    row.push((index[*j], *v));
                    kept += v;
                }
            }
            leak = leak.max(1.0 - kept);
            if kept > 0.0 {
                for e in &mut row {
                    e.1 /= kept;
                }
            }
            rows.push(row);
        }
        let restricted = MarkovMatrix::from_rows_unchecked(sub, rows, self.repr)?;
        Ok((restricted, leak))
    }
}

fn dense_to_sparse(space: &Space, rows: &[Vec<f64>]) -> Result<Vec<Vec<(usize, f64)>>> {
    rows.iter()
        .map(|r| {
            if r.len() != space.len() {
                return Err(Error::Dimension {
                    expected: space.len(),
                    found: r.len(),
                });
            }
            Ok(r.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, v)| (j, *v))
                .collect())
        })
        .collect()
}

/// `P f`.
pub fn apply(p: &MarkovMatrix, f: &Density) -> Result<Density> {
    p.apply(f)
}

/// `P* g`.
pub fn dual_apply(p: &MarkovMatrix, g: &Observable) -> Result<Observable> {
    p.dual_apply(g)
}

pub fn markov_check(p: &MarkovMatrix) -> MarkovReport {
    p.markov_check()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doubling4() -> MarkovMatrix {
        let s = FiniteMeasureSpace::uniform(4).unwrap();
        MarkovMatrix::from_rows(
            &s,
            vec![
                vec![(0, 0.5), (1, 0.5)],
                vec![(2, 0.5), (3, 0.5)],
                vec![(0, 0.5), (1, 0.5)],
                vec![(2, 0.5), (3, 0.5)],
            ],
            Representation::Exact,
        )
        .unwrap()
    }

    #[test]
    fn weights_must_sum_to_one() {
        let err = FiniteMeasureSpace::new(vec![0.3, 0.6]).unwrap_err();
        assert!(matches!(err, Error::Invariant { ref check, .. } if check == "weights sum"));
        assert!(FiniteMeasureSpace::new(vec![0.5, 0.5, 0.0]).is_err());
        assert!(FiniteMeasureSpace::new(vec![0.25; 4]).is_ok());
    }

    #[test]
    fn integrate_examples() {
        let s = FiniteMeasureSpace::uniform(4).unwrap();
        let one = Density::uniform(&s);
        assert_eq!(integrate(&one, &Observable::constant(&s, 1.0)).unwrap(), 1.0);

        let f = Density::new(&s, vec![2.0, -1.0, -1.0, 0.0]).unwrap();
        assert!(f.is_zero_mean(EXACT_TOL));
        assert_eq!(integrate(&f, &Observable::constant(&s, 3.7)).unwrap(), 0.0);

        let f = Density::new(&s, vec![4.0, 0.0, 0.0, 0.0]).unwrap();
        let g = Observable::indicator(&s, &[1]).unwrap();
        assert_eq!(integrate(&f, &g).unwrap(), 0.0);
    }

    #[test]
    fn integrate_rejects_mismatched_spaces() {
        let a = FiniteMeasureSpace::uniform(4).unwrap();
        let b = FiniteMeasureSpace::uniform(8).unwrap();
        let err = integrate(&Density::uniform(&a), &Observable::constant(&b, 1.0)).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn doubling_kernel_pushes_mass() {
        let p = doubling4();
        let s = p.space().clone();
        let f = Density::from_masses(&s, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let f1 = apply(&p, &f).unwrap();
        assert_eq!(f1.masses(), vec![0.5, 0.5, 0.0, 0.0]);
        let f2 = apply(&p, &f1).unwrap();
        assert_eq!(f2.masses(), vec![0.25; 4]);
    }

    #[test]
    fn identity_apply_is_noop() {
        let s = FiniteMeasureSpace::new(vec![0.5, 0.25, 0.125, 0.125]).unwrap();
        let f = Density::new(&s, vec![0.3, -2.0, 1.5, 4.0]).unwrap();
        assert_eq!(apply(&MarkovMatrix::identity(&s), &f).unwrap(), f);
    }

    #[test]
    fn dual_examples() {
        let p = doubling4();
        let s = p.space().clone();
        let c = dual_apply(&p, &Observable::constant(&s, 2.5)).unwrap();
        assert_eq!(c.values(), &[2.5; 4]);
        let g = dual_apply(&p, &Observable::indicator(&s, &[0]).unwrap()).unwrap();
        assert_eq!(g.values(), &[0.5, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn markov_check_flags_short_row() {
        let s = FiniteMeasureSpace::uniform(2).unwrap();
        let id = MarkovMatrix::identity(&s);
        let r = markov_check(&id);
        assert!(r.passed);
        assert_eq!(r.max_row_deviation, 0.0);

        let bad = MarkovMatrix::from_dense_unchecked(
            &s,
            &[vec![0.5, 0.4], vec![0.0, 1.0]],
            Representation::Approximate,
        )
        .unwrap();
        let r = markov_check(&bad);
        assert!(!r.passed);
        assert!((r.max_row_deviation - 0.1).abs() < 1e-15);
        assert!(MarkovMatrix::from_dense(&s, &[vec![0.5, 0.4], vec![0.0, 1.0]], Representation::Approximate).is_err());
    }

    #[test]
    fn negative_entries_fail_check() {
        let s = FiniteMeasureSpace::uniform(2).unwrap();
        let bad = MarkovMatrix::from_dense_unchecked(
            &s,
            &[vec![1.5, -0.5], vec![0.0, 1.0]],
            Representation::Approximate,
        )
        .unwrap();
        let r = bad.markov_check();
        assert!(!r.passed);
        assert_eq!(r.min_entry, -0.5);
    }

    #[test]
    fn composition_is_row_product() {
        let p = doubling4();
        let p2 = p.then(&p).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(p2.entry(i, j), 0.25);
            }
        }
        assert_eq!(p.power(2), p2);
    }

    #[test]
    fn cell_map_detection() {
        let s = FiniteMeasureSpace::uniform(4).unwrap();
        let m = MarkovMatrix::cell_map(&s, &[0, 2, 1, 3]).unwrap();
        assert_eq!(m.as_cell_map(1e-9), Some(vec![0, 2, 1, 3]));
        assert_eq!(doubling4().as_cell_map(1e-9), None);
        assert!(m.is_indicator_preserving(1e-9));
        assert!(!doubling4().is_indicator_preserving(1e-9));
    }

    #[test]
    fn cell_lookup_on_nonuniform_space() {
        let s = FiniteMeasureSpace::new(vec![0.5, 0.25, 0.25]).unwrap();
        assert_eq!(s.cell_of(0.0), Some(0));
        assert_eq!(s.cell_of(0.49), Some(0));
        assert_eq!(s.cell_of(0.5), Some(1));
        assert_eq!(s.cell_of(0.999), Some(2));
        assert_eq!(s.cell_of(1.0), None);
    }

    #[test]
    fn restriction_reports_leak() {
        let p = doubling4();
        let sub = FiniteMeasureSpace::uniform(2).unwrap();
        let (r, leak) = p.restrict(&[0, 1], &sub).unwrap();
        // cell 1 sends everything to cells 2 and 3
        assert_eq!(leak, 1.0);
        assert_eq!(r.row(0).1, &[0.5, 0.5]);
        let (r, leak) = p.power(2).restrict(&[0, 1], &sub).unwrap();
        assert_eq!(leak, 0.5);
        assert!(r.markov_check().passed);
    }
}
