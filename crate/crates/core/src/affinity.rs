//! Latent state buffers and the self-expressive affinity built from them.
//!
//! For a window of `L` states stacked as rows of `S`, the similarity is the
//! plain dot product `phi(S_i, S_j) = S_i . S_j`. Two row normalizations are
//! offered:
//!
//! * `Softmax`: `C_ij = softmax_j(phi_ij / temperature)`, always convex.
//! * `RawSum`: `C_ij = phi_ij / sum_m phi_im`, which is undefined when a row's
//!   similarities cancel out. That case is reported, never patched over.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw-sum rows whose similarity sum is smaller than this are degenerate.
pub const DEGENERATE_ROW_TOL: f64 = 1e-12;
/// Row sums must be within this of one.
pub const ROW_SUM_TOL: f64 = 1e-9;
const RESIDUAL_EPS: f64 = 1e-12;

/// One flattened latent state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(DVector<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::from_vector(DVector::from_vec(values))
    }

    pub fn from_vector(values: DVector<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("state vector is empty".into()));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("state vector"));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    /// Euclidean distance to another state of the same dimension.
    pub fn distance(&self, other: &StateVector) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok((&self.0 - &other.0).norm())
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// FIFO buffer of the most recent states, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct StateWindow {
    states: VecDeque<StateVector>,
    capacity: usize,
}

impl StateWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter(
                "window capacity must be >= 1".into(),
            ));
        }
        Ok(Self {
            states: VecDeque::with_capacity(capacity),
            capacity,
        })
    }

    /// Builds a full window from `states` (oldest first), capacity = length.
    pub fn from_states(states: Vec<StateVector>) -> Result<Self> {
        let mut w = Self::new(states.len().max(1))?;
        for s in states {
            w.push(s)?;
        }
        Ok(w)
    }

    /// Appends a state, returning the evicted oldest one when full.
    pub fn push(&mut self, state: StateVector) -> Result<Option<StateVector>> {
        if let Some(d) = self.dim() {
            check_dim(d, state.dim())?;
        }
        let evicted = if self.states.len() == self.capacity {
            self.states.pop_front()
        } else {
            None
        };
        self.states.push_back(state);
        Ok(evicted)
    }

    /// Undoes the most recent `push`.
    pub(crate) fn pop_newest(&mut self, evicted: Option<StateVector>) {
        self.states.pop_back();
        if let Some(old) = evicted {
            self.states.push_front(old);
        }
    }

    pub(crate) fn replace_newest(&mut self, state: StateVector) {
        if let Some(last) = self.states.back_mut() {
            *last = state;
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> Option<usize> {
        self.states.front().map(StateVector::dim)
    }

    pub fn get(&self, i: usize) -> Option<&StateVector> {
        self.states.get(i)
    }

    pub fn newest(&self) -> Option<&StateVector> {
        self.states.back()
    }

    pub fn iter(&self) -> impl Iterator<Item = &StateVector> {
        self.states.iter()
    }

    /// The `L x d` matrix with one state per row.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let d = self.dim().unwrap_or(0);
        DMatrix::from_fn(self.len(), d, |i, j| self.states[i].0[j])
    }
}

/// Row normalization applied to the similarity matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AffinityMode {
    Softmax,
    RawSum,
}

impl fmt::Display for AffinityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AffinityMode::Softmax => "softmax",
            AffinityMode::RawSum => "raw-sum",
        })
    }
}

impl FromStr for AffinityMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "softmax" => Ok(AffinityMode::Softmax),
            "raw-sum" => Ok(AffinityMode::RawSum),
            other => Err(format!(
                "unknown affinity mode `{other}` (softmax | raw-sum)"
            )),
        }
    }
}

/// Row-normalized `L x L` affinity of a state window.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    entries: DMatrix<f64>,
    mode: AffinityMode,
    temperature: Option<f64>,
}

impl AffinityMatrix {
    /// Wraps explicit coefficients, checking the invariants of `mode`.
    pub fn from_entries(
        entries: DMatrix<f64>,
        mode: AffinityMode,
        temperature: Option<f64>,
    ) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::InvalidParameter(format!(
                "affinity must be square and nonempty, got {} x {}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("affinity entries"));
        }
        if mode == AffinityMode::Softmax && entries.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidParameter(
                "softmax affinity has a negative entry".into(),
            ));
        }
        for (i, row) in entries.row_iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidParameter(format!(
                    "affinity row {i} sums to {sum}"
                )));
            }
        }
        Ok(Self {
            entries,
            mode,
            temperature,
        })
    }

    pub fn identity(len: usize) -> Self {
        Self {
            entries: DMatrix::identity(len, len),
            mode: AffinityMode::Softmax,
            temperature: None,
        }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }

    pub fn mode(&self) -> AffinityMode {
        self.mode
    }

    pub fn temperature(&self) -> Option<f64> {
        self.temperature
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }
}

/// `sum_k a_k b_k`, accumulated left to right.
fn similarity(a: &StateVector, b: &StateVector) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .sum()
}

/// Dot-product similarity of every pair of window states.
pub fn similarity_matrix(w: &StateWindow) -> DMatrix<f64> {
    let l = w.len();
    let mut phi = DMatrix::zeros(l, l);
    for i in 0..l {
        for j in i..l {
            let v = similarity(&w.states[i], &w.states[j]);
            phi[(i, j)] = v;
            phi[(j, i)] = v;
        }
    }
    phi
}

/// Affinity of a window under `mode`. `temperature` is used by softmax only.
pub fn compute_affinity(
    w: &StateWindow,
    mode: AffinityMode,
    temperature: f64,
) -> Result<AffinityMatrix> {
    if w.is_empty() {
        return Err(Error::InvalidParameter(
            "affinity of an empty window".into(),
        ));
    }
    let mut c = similarity_matrix(w);
    match mode {
        AffinityMode::Softmax => {
            if !(temperature > 0.0 && temperature.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "softmax temperature must be positive and finite, got {temperature}"
                )));
            }
            for mut row in c.row_iter_mut() {
                let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                let mut total = 0.0;
                for x in row.iter_mut() {
                    *x = ((*x - max) / temperature).exp();
                    total += *x;
                }
                row /= total;
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("softmax affinity"));
            }
            Ok(AffinityMatrix {
                entries: c,
                mode,
                temperature: Some(temperature),
            })
        }
        AffinityMode::RawSum => {
            for (i, mut row) in c.row_iter_mut().enumerate() {
                let sum: f64 = row.iter().sum();
                if sum.is_nan() || sum.abs() < DEGENERATE_ROW_TOL {
                    return Err(Error::DegenerateRow { row: i, sum });
                }
                row /= sum;
                // A tiny denominator relative to the entries leaves a row that
                // no longer sums to one in floating point.
                let check: f64 = row.iter().sum();
                if check.is_nan() || (check - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::DegenerateRow { row: i, sum });
                }
            }
            Ok(AffinityMatrix {
                entries: c,
                mode,
                temperature: None,
            })
        }
    }
}

/// `||S - C S||_F / max(||S||_F, eps)`.
pub fn self_expressive_residual(w: &StateWindow, c: &AffinityMatrix) -> Result<f64> {
    check_dim(w.len(), c.len())?;
    let s = w.to_matrix();
    let residual = &s - c.entries() * &s;
    Ok(residual.norm() / s.norm().max(RESIDUAL_EPS))
}

/// Row-major dump of an affinity matrix for plotting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

impl Heatmap {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

pub fn affinity_to_heatmap(c: &AffinityMatrix) -> Heatmap {
    let e = c.entries();
    let values: Vec<f64> = e
        .row_iter()
        .flat_map(|r| r.iter().copied().collect::<Vec<_>>())
        .collect();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Heatmap {
        rows: e.nrows(),
        cols: e.ncols(),
        values,
        min,
        max,
    }
}
