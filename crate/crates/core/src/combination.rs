//! Combination policies, left-stochastic checks and Perron vectors.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::network::NetworkModel;
use crate::{Error, Result};

/// Sparse `N x N` matrix of weights `a_{lk}` stored by column: column `k`
/// holds the weights agent `k` assigns to each neighbor `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrix {
    columns: Vec<Vec<(usize, f64)>>,
}

impl CombinationMatrix {
    /// Builds from per-column `(l, a_lk)` lists. Entries are sorted by row;
    /// zero weights are kept so an explicit zero diagonal is visible to
    /// validation.
    pub fn from_columns(mut columns: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = columns.len();
        for col in &mut columns {
            col.sort_by_key(|&(l, _)| l);
            if col.iter().any(|&(l, _)| l >= n) {
                return Err(Error::DimensionMismatch("row index out of range".into()));
            }
            if col.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::DimensionMismatch("duplicate entry in column".into()));
            }
        }
        Ok(CombinationMatrix { columns })
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch("combination matrix must be square".into()));
        }
        let n = a.ncols();
        let columns = (0..n)
            .map(|k| {
                (0..n)
                    .filter(|&l| a[(l, k)] != 0.0 || l == k)
                    .map(|l| (l, a[(l, k)]))
                    .collect()
            })
            .collect();
        Ok(CombinationMatrix { columns })
    }

    pub fn size(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, k: usize) -> &[(usize, f64)] {
        &self.columns[k]
    }

    pub fn get(&self, l: usize, k: usize) -> f64 {
        let col = &self.columns[k];
        col.binary_search_by_key(&l, |&(r, _)| r)
            .map(|i| col[i].1)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut a = DMatrix::zeros(n, n);
        for (k, col) in self.columns.iter().enumerate() {
            for &(l, v) in col {
                a[(l, k)] = v;
            }
        }
        a
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| c.iter().map(|&(_, v)| v).sum())
            .collect()
    }

    /// Dense sub-matrix on the index range `r`.
    pub fn block(&self, r: std::ops::Range<usize>) -> DMatrix<f64> {
        let n = r.len();
        let mut a = DMatrix::zeros(n, n);
        for k in r.clone() {
            for &(l, v) in &self.columns[k] {
                if r.contains(&l) {
                    a[(l - r.start, k - r.start)] = v;
                }
            }
        }
        a
    }

    /// CSV with header `l,k,a`, one row per stored entry.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("l,k,a\n");
        for (k, col) in self.columns.iter().enumerate() {
            for &(l, v) in col {
                let _ = writeln!(out, "{l},{k},{v:.16e}");
            }
        }
        out
    }
}

/// Writes column `k` of the Metropolis matrix over `sets` into `out`.
/// Sets are assumed valid (owner included, symmetric).
pub(crate) fn metropolis_column(k: usize, sets: &[Vec<usize>], out: &mut Vec<(usize, f64)>) {
    out.clear();
    let nk = sets[k].len();
    let mut off = 0.0;
    for &l in &sets[k] {
        if l != k {
            let a = 1.0 / nk.max(sets[l].len()) as f64;
            off += a;
            out.push((l, a));
        }
    }
    out.push((k, 1.0 - off));
}

/// Metropolis weights `a_lk = 1 / max(|set_l|, |set_k|)` for `l != k`, with
/// the diagonal absorbing the remainder.
pub fn metropolis_weights(sets: &[Vec<usize>]) -> Result<CombinationMatrix> {
    let n = sets.len();
    let sorted: Vec<Vec<usize>> = sets
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect();
    for (k, set) in sorted.iter().enumerate() {
        if set.binary_search(&k).is_err() {
            return Err(Error::MissingSelfLoop(k));
        }
        for &l in set {
            if l >= n {
                return Err(Error::DimensionMismatch(format!("agent {l} out of range")));
            }
            if sorted[l].binary_search(&k).is_err() {
                return Err(Error::AsymmetricNeighborhoods { k, l });
            }
        }
    }
    let mut columns = Vec::with_capacity(n);
    let mut buf = Vec::new();
    for k in 0..n {
        metropolis_column(k, &sorted, &mut buf);
        columns.push(buf.clone());
    }
    CombinationMatrix::from_columns(columns)
}

/// Metropolis weights on `N_k ∩ G_m`, block diagonal over groups.
pub fn static_group_weights(model: &NetworkModel) -> CombinationMatrix {
    let sets: Vec<Vec<usize>> = (0..model.n_agents())
        .map(|k| model.group_neighbors(k))
        .collect();
    metropolis_weights(&sets).expect("group neighborhoods are symmetric and contain the owner")
}

pub const PERRON_TOL: f64 = 1e-12;
pub const PERRON_MAX_ITERS: usize = 100_000;

/// Right eigenvector of a left-stochastic `A` for eigenvalue 1, normalized to
/// sum to 1, by power iteration.
pub fn perron_vector(a: &DMatrix<f64>, tol: f64, max_iters: usize) -> Result<DVector<f64>> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::DimensionMismatch("Perron vector needs a square matrix".into()));
    }
    let n = a.nrows();
    let mut p = DVector::from_element(n, 1.0 / n as f64);
    let mut next = DVector::zeros(n);
    let mut residual = f64::INFINITY;
    for _ in 0..=max_iters {
        a.mul_to(&p, &mut next);
        let s = next.sum();
        if !(s.is_finite() && s > 0.0) {
            break;
        }
        next /= s;
        residual = (&next - &p).amax();
        if residual <= tol {
            return Ok(next);
        }
        std::mem::swap(&mut p, &mut next);
    }
    Err(Error::NoConvergence { iters: max_iters, residual })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerronVector {
    pub per_group: Vec<DVector<f64>>,
    /// Group vectors concatenated in agent order.
    pub stacked: DVector<f64>,
}

/// Perron vectors of every group block of a static combination matrix.
pub fn group_perron_vectors(a: &CombinationMatrix, model: &NetworkModel) -> Result<PerronVector> {
    let mut per_group = Vec::with_capacity(model.n_groups());
    let mut stacked = DVector::zeros(model.n_agents());
    for m in 0..model.n_groups() {
        let r = model.group_members(m);
        let p = perron_vector(&a.block(r.clone()), PERRON_TOL, PERRON_MAX_ITERS)?;
        stacked.rows_mut(r.start, r.len()).copy_from(&p);
        per_group.push(p);
    }
    Ok(PerronVector { per_group, stacked })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinationDiagnostics {
    pub column_sums: Vec<f64>,
    /// Columns whose sum differs from 1 by more than `1e-12`.
    pub not_stochastic: Vec<usize>,
    pub negative_entries: Vec<(usize, usize)>,
    /// Positive weights `a_lk` with `l` outside `N_k ∩ G_m`.
    pub support_violations: Vec<(usize, usize)>,
    /// Agents with `a_kk = 0` (primitivity warning).
    pub zero_diagonal: Vec<usize>,
    /// Groups whose positive-weight graph is disconnected (primitivity warning).
    pub reducible_groups: Vec<usize>,
    pub pass: bool,
}

impl CombinationDiagnostics {
    pub fn has_warnings(&self) -> bool {
        !self.zero_diagonal.is_empty() || !self.reducible_groups.is_empty()
    }
}

/// Checks a static combination matrix against the model's group structure.
/// Failures (non-stochastic columns, negative weights, support violations)
/// clear `pass`; primitivity problems are reported as warnings.
pub fn validate_combination(a: &CombinationMatrix, model: &NetworkModel) -> CombinationDiagnostics {
    let n = model.n_agents();
    let column_sums = a.column_sums();
    let mut diag = CombinationDiagnostics {
        not_stochastic: column_sums
            .iter()
            .enumerate()
            .filter(|(_, s)| (*s - 1.0).abs() > 1e-12)
            .map(|(k, _)| k)
            .collect(),
        column_sums,
        negative_entries: Vec::new(),
        support_violations: Vec::new(),
        zero_diagonal: Vec::new(),
        reducible_groups: Vec::new(),
        pass: false,
    };
    if a.size() != n {
        diag.not_stochastic = (0..a.size()).collect();
        return diag;
    }
    for k in 0..n {
        for &(l, v) in a.column(k) {
            if v < 0.0 {
                diag.negative_entries.push((l, k));
            }
            if v > 0.0 && l != k && (!model.has_edge(k, l) || model.group_of(l) != model.group_of(k))
            {
                diag.support_violations.push((l, k));
            }
        }
        if a.get(k, k) <= 0.0 {
            diag.zero_diagonal.push(k);
        }
    }
    for m in 0..model.n_groups() {
        let r = model.group_members(m);
        let block = a.block(r.clone());
        let size = r.len();
        let mut seen = vec![false; size];
        seen[0] = true;
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            for j in 0..size {
                if !seen[j] && (block[(i, j)] > 0.0 || block[(j, i)] > 0.0) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            diag.reducible_groups.push(m);
        }
    }
    diag.pass = diag.not_stochastic.is_empty()
        && diag.negative_entries.is_empty()
        && diag.support_violations.is_empty();
    diag
}
