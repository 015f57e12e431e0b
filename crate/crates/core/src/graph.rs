//! Directed communication structure of the two networks.
//!
//! Edge convention: `w[i][s] > 0` means node `s` sends its state to node `i`,
//! so row `i` of a weight matrix lists the in-neighbours of `i`.

use std::collections::VecDeque;

use thiserror::Error;

/// Tolerance on row sums of a row-stochastic matrix.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Default residual tolerance for [`perron_left_eigenvector`].
pub const PERRON_TOL: f64 = 1e-12;
/// Iteration cap for the power iteration.
pub const PERRON_MAX_ITER: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("weight matrix is empty")]
    Empty,
    #[error("row {row} has {len} entries, expected {expected}")]
    NotSquare {
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("entry ({row}, {col}) = {value} is negative")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}, not 1")]
    RowSumNotOne { row: usize, sum: f64 },
    #[error("diagonal entry {row} is not strictly positive")]
    ZeroDiagonal { row: usize },
    #[error("power iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("self weight {value} at node {index} must lie in (0, 1)")]
    BadWeight { index: usize, value: f64 },
    #[error("ring needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("expected {expected} self weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("cross-weight row {row} has no positive entry")]
    EmptyCrossRow { row: usize },
    #[error("cross weights are {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    CrossShape {
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("network {0} is not strongly connected")]
    NotStronglyConnected(usize),
}

/// A validated square row-stochastic weight matrix with positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct RowStochasticMatrix {
    m: usize,
    // row-major
    w: Vec<f64>,
}

impl RowStochasticMatrix {
    /// Number of nodes.
    pub fn size(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, s: usize) -> f64 {
        self.w[i * self.m + s]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.m..(i + 1) * self.m]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.m).map(|i| self.row(i).to_vec()).collect()
    }

    /// Weighted in-neighbour average `sum_s w[i][s] * vectors[s]`.
    pub fn mix_row(&self, i: usize, vectors: &[Vec<f64>]) -> Vec<f64> {
        debug_assert_eq!(vectors.len(), self.m);
        let dim = vectors.first().map_or(0, Vec::len);
        let mut out = vec![0.0; dim];
        for (weight, v) in self.row(i).iter().zip(vectors) {
            if *weight == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(v) {
                *o += weight * x;
            }
        }
        out
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.m];
        for i in 0..self.m {
            for (s, w) in self.row(i).iter().enumerate() {
                sums[s] += w;
            }
        }
        sums
    }

    /// True when some column sum differs from 1 by more than `tol`.
    pub fn is_unbalanced(&self, tol: f64) -> bool {
        self.column_sums().iter().any(|c| (c - 1.0).abs() > tol)
    }

    /// Row vector times matrix: `(v^T W)_s = sum_i v_i w[i][s]`.
    pub fn left_multiply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (i, vi) in v.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.row(i)) {
                *o += vi * w;
            }
        }
        out
    }
}

/// Validates a dense weight matrix as row-stochastic with positive diagonal.
pub fn validate_row_stochastic(w: &[Vec<f64>]) -> Result<RowStochasticMatrix, GraphError> {
    let m = w.len();
    if m == 0 {
        return Err(GraphError::Empty);
    }
    let mut flat = Vec::with_capacity(m * m);
    for (i, row) in w.iter().enumerate() {
        if row.len() != m {
            return Err(GraphError::NotSquare {
                row: i,
                len: row.len(),
                expected: m,
            });
        }
        for (s, &value) in row.iter().enumerate() {
            if !value.is_finite() {
                return Err(GraphError::NonFinite { row: i, col: s });
            }
            if value < 0.0 {
                return Err(GraphError::NegativeEntry {
                    row: i,
                    col: s,
                    value,
                });
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(GraphError::RowSumNotOne { row: i, sum });
        }
        if row[i] <= 0.0 {
            return Err(GraphError::ZeroDiagonal { row: i });
        }
        flat.extend_from_slice(row);
    }
    Ok(RowStochasticMatrix { m, w: flat })
}

/// Breadth-first reachability from `start`; `forward` follows s -> i edges.
fn reachable(w: &RowStochasticMatrix, start: usize, forward: bool) -> Vec<bool> {
    let m = w.size();
    let mut seen = vec![false; m];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(node) = queue.pop_front() {
        for next in 0..m {
            let weight = if forward {
                w.get(next, node)
            } else {
                w.get(node, next)
            };
            if weight > 0.0 && !seen[next] {
                seen[next] = true;
                queue.push_back(next);
            }
        }
    }
    seen
}

/// Every node reaches every other node along directed edges.
pub fn is_strongly_connected(w: &RowStochasticMatrix) -> bool {
    reachable(w, 0, true).into_iter().all(|r| r) && reachable(w, 0, false).into_iter().all(|r| r)
}

/// Positive left eigenvector `rho` of `w` for eigenvalue 1 with `sum(rho) = 1`.
///
/// Power iteration on the transpose, renormalised every step. Stops once
/// `max_s |(rho^T W)_s - rho_s| <= tol`.
pub fn perron_left_eigenvector(w: &RowStochasticMatrix, tol: f64) -> Result<Vec<f64>, GraphError> {
    perron_with_cap(w, tol, PERRON_MAX_ITER)
}

pub(crate) fn perron_with_cap(
    w: &RowStochasticMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, GraphError> {
    let m = w.size();
    let mut rho = vec![1.0 / m as f64; m];
    for _ in 0..max_iter {
        let mut next = w.left_multiply(&rho);
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|r| *r /= total);
        let residual = next
            .iter()
            .zip(&rho)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        rho = next;
        if residual <= tol {
            let check = w.left_multiply(&rho);
            let err = check
                .iter()
                .zip(&rho)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if err <= tol {
                return Ok(rho);
            }
        }
    }
    Err(GraphError::NoConvergence {
        iterations: max_iter,
    })
}

/// Self weights `0.3 + 0.4 * i / m`, strictly increasing so the ring is unbalanced.
pub fn default_ring_self_weights(m: usize) -> Vec<f64> {
    (0..m).map(|i| 0.3 + 0.4 * i as f64 / m as f64).collect()
}

/// Directed ring with self-loops: node `i` listens to itself and to `i - 1 (mod m)`.
pub fn make_ring_topology(
    m: usize,
    self_weights: &[f64],
) -> Result<RowStochasticMatrix, GraphError> {
    if m < 2 {
        return Err(GraphError::TooFewNodes(m));
    }
    if self_weights.len() != m {
        return Err(GraphError::WeightCount {
            expected: m,
            got: self_weights.len(),
        });
    }
    let mut rows = vec![vec![0.0; m]; m];
    for (i, &wi) in self_weights.iter().enumerate() {
        if !(wi > 0.0 && wi < 1.0) {
            return Err(GraphError::BadWeight {
                index: i,
                value: wi,
            });
        }
        let pred = (i + m - 1) % m;
        rows[i][i] = wi;
        rows[i][pred] += 1.0 - wi;
    }
    validate_row_stochastic(&rows)
}

/// Nonnegative cross-network link weights; every row has a positive entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossWeights {
    rows: usize,
    cols: usize,
    b: Vec<f64>,
}

impl CrossWeights {
    pub fn new(b: &[Vec<f64>]) -> Result<Self, GraphError> {
        let rows = b.len();
        if rows == 0 {
            return Err(GraphError::Empty);
        }
        let cols = b[0].len();
        let mut flat = Vec::with_capacity(rows * cols);
        for (i, row) in b.iter().enumerate() {
            if row.len() != cols {
                return Err(GraphError::NotSquare {
                    row: i,
                    len: row.len(),
                    expected: cols,
                });
            }
            for (s, &value) in row.iter().enumerate() {
                if !value.is_finite() {
                    return Err(GraphError::NonFinite { row: i, col: s });
                }
                if value < 0.0 {
                    return Err(GraphError::NegativeEntry {
                        row: i,
                        col: s,
                        value,
                    });
                }
            }
            if !row.iter().any(|&v| v > 0.0) {
                return Err(GraphError::EmptyCrossRow { row: i });
            }
            flat.extend_from_slice(row);
        }
        Ok(Self {
            rows,
            cols,
            b: flat,
        })
    }

    /// Builds weights without the positive-row check. Rows without a cross
    /// neighbour are rejected later, when an estimate is requested.
    pub fn new_unchecked(b: &[Vec<f64>]) -> Self {
        let rows = b.len();
        let cols = b.first().map_or(0, Vec::len);
        Self {
            rows,
            cols,
            b: b.iter().flatten().copied().collect(),
        }
    }

    /// Node `i` of one network linked to node `i mod cols` of the other, weight 1.
    pub fn one_to_one(rows: usize, cols: usize) -> Self {
        let b: Vec<Vec<f64>> = (0..rows)
            .map(|i| {
                let mut row = vec![0.0; cols];
                row[i % cols] = 1.0;
                row
            })
            .collect();
        Self::new_unchecked(&b)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.b[i * self.cols..(i + 1) * self.cols]
    }
}

/// Both intra-network matrices plus the two directions of cross links.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub a1: RowStochasticMatrix,
    pub a2: RowStochasticMatrix,
    /// Weights node `i` of network 1 puts on network-2 nodes (m1 x m2).
    pub b1: CrossWeights,
    /// Weights node `j` of network 2 puts on network-1 nodes (m2 x m1).
    pub b2: CrossWeights,
}

impl NetworkTopology {
    pub fn new(
        a1: RowStochasticMatrix,
        a2: RowStochasticMatrix,
        b1: CrossWeights,
        b2: CrossWeights,
    ) -> Result<Self, GraphError> {
        let (m1, m2) = (a1.size(), a2.size());
        for (cross, er, ec) in [(&b1, m1, m2), (&b2, m2, m1)] {
            if cross.rows() != er || cross.cols() != ec {
                return Err(GraphError::CrossShape {
                    rows: cross.rows(),
                    cols: cross.cols(),
                    expected_rows: er,
                    expected_cols: ec,
                });
            }
            if let Some(row) = (0..cross.rows()).find(|&i| !cross.row(i).iter().any(|&v| v > 0.0)) {
                return Err(GraphError::EmptyCrossRow { row });
            }
        }
        if !is_strongly_connected(&a1) {
            return Err(GraphError::NotStronglyConnected(1));
        }
        if !is_strongly_connected(&a2) {
            return Err(GraphError::NotStronglyConnected(2));
        }
        Ok(Self { a1, a2, b1, b2 })
    }

    /// Two unbalanced rings with default self weights and one-to-one cross links.
    pub fn default_rings(m1: usize, m2: usize) -> Result<Self, GraphError> {
        let a1 = make_ring_topology(m1, &default_ring_self_weights(m1))?;
        let a2 = make_ring_topology(m2, &default_ring_self_weights(m2))?;
        Self::new(
            a1,
            a2,
            CrossWeights::one_to_one(m1, m2),
            CrossWeights::one_to_one(m2, m1),
        )
    }

    pub fn m1(&self) -> usize {
        self.a1.size()
    }

    pub fn m2(&self) -> usize {
        self.a2.size()
    }
}
