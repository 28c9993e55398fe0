//! Factorization results, real-valued pattern parameters and fitting
//! configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::BinaryMatrix;

/// Dense row-major real matrix. Used for `beta`, where entry `(k, d)` is the
/// probability that pattern `k` does *not* contain permission `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ProbMatrix {
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        ProbMatrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        ProbMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("probability matrix has no rows"))?;
        let cols = first.len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged probability matrix".into()));
        }
        if rows.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("probability outside [0, 1]".into()));
        }
        Ok(ProbMatrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    /// `beta` that encodes a Boolean pattern matrix exactly: 0 where the
    /// pattern holds the permission, 1 elsewhere.
    pub fn from_patterns(u: &BinaryMatrix) -> Self {
        Self::from_fn(u.rows(), u.cols(), |k, d| if u.get(k, d) { 0.0 } else { 1.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn select_rows(&self, order: &[usize]) -> Self {
        Self::from_fn(order.len(), self.cols, |i, j| self.get(order[i], j))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Annealing schedule and stopping rules for [`crate::engine::fit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub initial_temperature: f64,
    /// Multiplicative factor applied to the temperature after each level.
    pub cooling: f64,
    pub final_temperature: f64,
    /// Relative change of the tempered objective that ends a level.
    pub tolerance: f64,
    pub max_inner_iterations: usize,
    pub seed: u64,
    /// Independent annealing runs from derived seeds; the run with the
    /// highest final likelihood wins.
    pub restarts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            initial_temperature: 2.0,
            cooling: 0.95,
            final_temperature: 0.05,
            tolerance: 1e-5,
            max_inner_iterations: 50,
            seed: 0,
            restarts: 1,
        }
    }
}

impl FitConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.initial_temperature > 0.0 && self.initial_temperature.is_finite()) {
            return bad("initial temperature must be positive");
        }
        if !(self.final_temperature > 0.0) {
            return bad("final temperature must be positive");
        }
        if self.final_temperature >= self.initial_temperature {
            return bad("final temperature must be below the initial temperature");
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return bad("cooling factor must lie in (0, 1)");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if self.max_inner_iterations == 0 {
            return bad("max inner iterations must be at least 1");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        Ok(())
    }
}

/// Output of a fit: Boolean patterns `u` (K x D), assignments `z` (N x K),
/// the annealed `beta` they were rounded from, and the noise parameters.
#[derive(Clone, Debug)]
pub struct Factorization {
    pub z: BinaryMatrix,
    pub u: BinaryMatrix,
    pub beta: ProbMatrix,
    /// Probability that a noise entry is a request.
    pub r: f64,
    /// Probability that an entry comes from the noise process.
    pub epsilon: f64,
    /// Log-likelihood of the data under `(z, u, r, epsilon)`.
    pub log_likelihood: f64,
    pub seed: u64,
}

impl Factorization {
    pub fn k(&self) -> usize {
        self.u.rows()
    }

    /// Number of applications assigned to each pattern.
    pub fn pattern_counts(&self) -> Vec<usize> {
        self.z.column_counts()
    }

    /// Pattern order by descending assignment count, ties by index.
    pub fn frequency_order(&self) -> Vec<usize> {
        let counts = self.pattern_counts();
        let mut order: Vec<usize> = (0..self.k()).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        order
    }

    /// Same factorization with patterns relabeled by `order` (new pattern
    /// `j` is old pattern `order[j]`).
    pub fn permuted(&self, order: &[usize]) -> Factorization {
        Factorization {
            z: self.z.select_cols(order),
            u: self.u.select_rows(order),
            beta: self.beta.select_rows(order),
            ..self.clone()
        }
    }

    /// Relabels patterns so that pattern 0 is the most frequently assigned.
    pub fn sorted_by_frequency(&self) -> Factorization {
        self.permuted(&self.frequency_order())
    }

    pub fn to_document(&self) -> FactorizationDocument {
        let sorted = self.sorted_by_frequency();
        FactorizationDocument {
            k: sorted.k(),
            u: sorted.u.to_u8_rows(),
            z_counts: sorted.pattern_counts(),
            beta: sorted.beta.to_rows(),
            r: sorted.r,
            epsilon: sorted.epsilon,
            log_likelihood: sorted.log_likelihood,
            seed: sorted.seed,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }
}

/// JSON form of a [`Factorization`]. Patterns appear in descending order of
/// assignment frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationDocument {
    #[serde(rename = "K")]
    pub k: usize,
    pub u: Vec<Vec<u8>>,
    pub z_counts: Vec<usize>,
    pub beta: Vec<Vec<f64>>,
    pub r: f64,
    pub epsilon: f64,
    pub log_likelihood: f64,
    pub seed: u64,
}

impl FactorizationDocument {
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(s)?;
        if doc.u.len() != doc.k || doc.beta.len() != doc.k || doc.z_counts.len() != doc.k {
            return Err(Error::Dimension(format!(
                "document declares K = {} but lists {} patterns",
                doc.k,
                doc.u.len()
            )));
        }
        Ok(doc)
    }

    pub fn patterns(&self) -> Result<BinaryMatrix> {
        let rows: Vec<Vec<bool>> = self
            .u
            .iter()
            .map(|r| r.iter().map(|&v| v != 0).collect())
            .collect();
        BinaryMatrix::from_rows(&rows)
    }
}
