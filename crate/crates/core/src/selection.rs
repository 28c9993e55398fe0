//! Choosing the number of patterns by clustering instability.
//!
//! The data is split into two random halves, each half is factorized, the
//! first model is transferred to the second half with a
//! [`PatternClassifier`], and the two assignments of the second half are
//! compared after aligning pattern labels. The fraction of applications
//! whose assignment vectors disagree anywhere, scaled by `2^K / (2^K - 1)`,
//! is the instability. A random labeling scores 1 for every `K`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::derive_seed;
use crate::engine::{fit, PatternClassifier};
use crate::error::{Error, Result};
use crate::matrix::{row_hamming, BinaryMatrix};
use crate::model::FitConfig;

/// Largest `K` for which exhaustive permutation search is offered.
pub const MAX_EXHAUSTIVE_K: usize = 8;

pub const DEFAULT_REPETITIONS: usize = 5;

/// Row indices of the two halves: rows are shuffled with the seeded
/// generator and the first half takes the extra row when `n` is odd.
pub fn split_indices(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::Config(format!("cannot split {n} rows into two halves")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let second = idx.split_off(n.div_ceil(2));
    Ok((idx, second))
}

pub fn split_dataset(x: &BinaryMatrix, seed: u64) -> Result<(BinaryMatrix, BinaryMatrix)> {
    let (a, b) = split_indices(x.rows(), seed)?;
    Ok((x.select_rows(&a), x.select_rows(&b)))
}

/// Dense Hungarian algorithm (shortest augmenting paths with potentials)
/// for a square cost matrix. Returns `assignment[row] = column`.
fn hungarian(costs: &[Vec<i64>]) -> Vec<usize> {
    let n = costs.len();
    if n == 0 {
        return Vec::new();
    }
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = costs[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

fn assignment_cost(costs: &[Vec<i64>], perm: &[usize]) -> i64 {
    perm.iter().enumerate().map(|(i, &j)| costs[i][j]).sum()
}

/// Minimum cost of assigning `rows` to `cols` (equal lengths).
fn sub_assignment_min(costs: &[Vec<i64>], rows: &[usize], cols: &[usize]) -> i64 {
    let sub: Vec<Vec<i64>> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| costs[r][c]).collect())
        .collect();
    assignment_cost(&sub, &hungarian(&sub))
}

/// Lexicographically smallest permutation among those of minimum total
/// cost.
fn lexicographic_optimal_assignment(costs: &[Vec<i64>]) -> Vec<usize> {
    let n = costs.len();
    let optimum = assignment_cost(costs, &hungarian(costs));
    let mut perm = Vec::with_capacity(n);
    let mut free: Vec<usize> = (0..n).collect();
    let mut fixed_cost = 0i64;
    for row in 0..n {
        let rest_rows: Vec<usize> = (row + 1..n).collect();
        let pick = free
            .iter()
            .copied()
            .find(|&col| {
                let rest_cols: Vec<usize> = free.iter().copied().filter(|&c| c != col).collect();
                fixed_cost + costs[row][col] + sub_assignment_min(costs, &rest_rows, &rest_cols)
                    == optimum
            })
            .expect("some column completes an optimal assignment");
        fixed_cost += costs[row][pick];
        perm.push(pick);
        free.retain(|&c| c != pick);
    }
    perm
}

fn hamming_costs(u1: &BinaryMatrix, u2: &BinaryMatrix) -> Vec<Vec<i64>> {
    (0..u1.rows())
        .map(|a| {
            (0..u2.rows())
                .map(|b| row_hamming(u1, a, u2, b) as i64)
                .collect()
        })
        .collect()
}

/// Permutation `pi` aligning pattern `k` of `u1` with pattern `pi[k]` of
/// `u2`, minimizing the summed Hamming distance between aligned patterns.
/// Among optimal permutations the lexicographically smallest is returned.
pub fn match_patterns(u1: &BinaryMatrix, u2: &BinaryMatrix) -> Result<Vec<usize>> {
    u1.ensure_same_shape(u2, "pattern matching")?;
    Ok(lexicographic_optimal_assignment(&hamming_costs(u1, u2)))
}

/// Summed Hamming distance between `u1[k]` and `u2[perm[k]]`.
pub fn matching_cost(u1: &BinaryMatrix, u2: &BinaryMatrix, perm: &[usize]) -> Result<usize> {
    u1.ensure_same_shape(u2, "pattern matching")?;
    if perm.len() != u1.rows() {
        return Err(Error::Dimension("permutation length differs from K".into()));
    }
    Ok(perm
        .iter()
        .enumerate()
        .map(|(a, &b)| row_hamming(u1, a, u2, b))
        .sum())
}

/// All permutations of `0..k` in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        // Next lexicographic permutation.
        let Some(i) = (1..k).rev().find(|&i| cur[i - 1] < cur[i]) else {
            break;
        };
        let j = (i..k).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
    out
}

/// Scale that makes uniformly random assignment vectors score 1:
/// `|L| / (|L| - 1)` with `|L| = 2^K`.
pub fn normalization(k: usize) -> f64 {
    1.0 / (1.0 - 0.5f64.powi(k as i32))
}

fn mismatched_rows(z_transfer: &BinaryMatrix, z_own: &BinaryMatrix, perm: &[usize]) -> usize {
    (0..z_own.rows())
        .filter(|&i| (0..perm.len()).any(|k| z_transfer.get(i, k) != z_own.get(i, perm[k])))
        .count()
}

/// Instability of two assignments of the same applications, after mapping
/// pattern `k` of `z_transfer` to pattern `perm[k]` of `z_own`.
pub fn instability_score(
    z_transfer: &BinaryMatrix,
    z_own: &BinaryMatrix,
    perm: &[usize],
) -> Result<f64> {
    z_transfer.ensure_same_shape(z_own, "instability")?;
    if perm.len() != z_own.cols() {
        return Err(Error::Dimension("permutation length differs from K".into()));
    }
    if z_own.rows() == 0 {
        return Err(Error::Empty("no applications to compare"));
    }
    let frac = mismatched_rows(z_transfer, z_own, perm) as f64 / z_own.rows() as f64;
    Ok(normalization(z_own.cols()) * frac)
}

/// Instability minimized over every permutation of the row-disagreement
/// count itself. Only for `K <= MAX_EXHAUSTIVE_K`.
pub fn exhaustive_instability(
    z_transfer: &BinaryMatrix,
    z_own: &BinaryMatrix,
) -> Result<(f64, Vec<usize>)> {
    let k = z_own.cols();
    if k > MAX_EXHAUSTIVE_K {
        return Err(Error::Config(format!(
            "exhaustive matching supports K <= {MAX_EXHAUSTIVE_K}, got {k}"
        )));
    }
    z_transfer.ensure_same_shape(z_own, "instability")?;
    let mut best: Option<(usize, Vec<usize>)> = None;
    for perm in permutations(k) {
        let m = mismatched_rows(z_transfer, z_own, &perm);
        if best.as_ref().is_none_or(|(b, _)| m < *b) {
            best = Some((m, perm));
        }
    }
    let (m, perm) = best.expect("at least one permutation");
    Ok((normalization(k) * m as f64 / z_own.rows().max(1) as f64, perm))
}

/// How pattern labels of the two halves are aligned.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum MatchMode {
    /// Optimal assignment on the pattern Hamming cost ([`match_patterns`]).
    #[default]
    Patterns,
    /// Exhaustive search over the row-disagreement count (`K <= 8`).
    Exhaustive,
}

/// Instability values for one `K`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstabilityRow {
    pub k: usize,
    /// One value per repetition.
    pub values: Vec<f64>,
    /// Split seed of each repetition.
    pub seeds: Vec<u64>,
    pub median: f64,
    pub std: f64,
}

impl InstabilityRow {
    pub fn new(k: usize, values: Vec<f64>, seeds: Vec<u64>) -> Self {
        let median = median(&values);
        let std = sample_std(&values);
        InstabilityRow {
            k,
            values,
            seeds,
            median,
            std,
        }
    }
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// One repetition: split with `split_seed`, fit both halves, transfer and
/// compare.
pub fn instability_once(
    x: &BinaryMatrix,
    k: usize,
    split_seed: u64,
    config: &FitConfig,
    mode: MatchMode,
) -> Result<f64> {
    let (x1, x2) = split_dataset(x, split_seed)?;
    let first = fit(&x1, k, &config.clone().with_seed(derive_seed(split_seed, 1)))?;
    let second = fit(&x2, k, &config.clone().with_seed(derive_seed(split_seed, 2)))?;
    let transferred = PatternClassifier::from_factorization(&first).assign_all(&x2)?;
    match mode {
        MatchMode::Patterns => {
            let perm = match_patterns(&first.u, &second.u)?;
            instability_score(&transferred, &second.z, &perm)
        }
        MatchMode::Exhaustive => Ok(exhaustive_instability(&transferred, &second.z)?.0),
    }
}

/// Instability of `K` over `repetitions` random splits; repetition `i`
/// uses split seed `config.seed + i`.
pub fn instability(
    x: &BinaryMatrix,
    k: usize,
    repetitions: usize,
    config: &FitConfig,
) -> Result<InstabilityRow> {
    instability_with(x, k, repetitions, config, MatchMode::Patterns)
}

pub fn instability_with(
    x: &BinaryMatrix,
    k: usize,
    repetitions: usize,
    config: &FitConfig,
    mode: MatchMode,
) -> Result<InstabilityRow> {
    if repetitions == 0 {
        return Err(Error::Config("at least one repetition is required".into()));
    }
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..repetitions as u64)
        .map(|i| config.seed.wrapping_add(i))
        .collect();
    let values = seeds
        .par_iter()
        .map(|&s| instability_once(x, k, s, config, mode))
        .collect::<Result<Vec<f64>>>()?;
    Ok(InstabilityRow::new(k, values, seeds))
}

/// Instability sweep over several `K` and the chosen `K*`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstabilityReport {
    pub rows: Vec<InstabilityRow>,
    pub selected_k: usize,
}

impl InstabilityReport {
    /// Selects the `K` with the smallest median instability; ties go to the
    /// smaller `K`.
    pub fn from_rows(mut rows: Vec<InstabilityRow>) -> Result<Self> {
        rows.sort_by_key(|r| r.k);
        let best = rows
            .iter()
            .filter(|r| !r.median.is_nan())
            .min_by(|a, b| a.median.total_cmp(&b.median).then(a.k.cmp(&b.k)))
            .ok_or(Error::Empty("no instability values to select from"))?;
        let selected_k = best.k;
        Ok(InstabilityReport { rows, selected_k })
    }

    pub fn row(&self, k: usize) -> Option<&InstabilityRow> {
        self.rows.iter().find(|r| r.k == k)
    }

    /// One line per `(K, repetition)`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["K", "repetition", "seed", "s", "median_s", "std_s", "selected"])?;
        for row in &self.rows {
            for (rep, (s, seed)) in row.values.iter().zip(&row.seeds).enumerate() {
                w.write_record([
                    row.k.to_string(),
                    rep.to_string(),
                    seed.to_string(),
                    format!("{s:.6}"),
                    format!("{:.6}", row.median),
                    format!("{:.6}", row.std),
                    ((row.k == self.selected_k) as u8).to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Numeric(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Runs [`instability`] for every `K` in `k_range`.
pub fn select_k(
    x: &BinaryMatrix,
    k_range: &[usize],
    repetitions: usize,
    config: &FitConfig,
) -> Result<InstabilityReport> {
    if k_range.is_empty() {
        return Err(Error::Empty("K range is empty"));
    }
    let rows = k_range
        .par_iter()
        .map(|&k| instability(x, k, repetitions, config))
        .collect::<Result<Vec<_>>>()?;
    InstabilityReport::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(rows: usize, cols: usize, p: f64, g: &mut ChaCha8Rng) -> BinaryMatrix {
        BinaryMatrix::from_fn(rows, cols, |_, _| g.gen_bool(p))
    }

    #[test]
    fn split_sizes_and_determinism() {
        let x = BinaryMatrix::from_fn(2, 3, |i, _| i == 0);
        let (a, b) = split_dataset(&x, 1).unwrap();
        assert_eq!((a.rows(), b.rows()), (1, 1));

        let (a, b) = split_indices(101, 5).unwrap();
        assert_eq!((a.len(), b.len()), (51, 50));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        assert_eq!(split_indices(101, 5).unwrap(), (a, b));
        assert!(split_indices(1, 0).is_err());
    }

    #[test]
    fn hungarian_solves_small_problem() {
        let c = vec![vec![4, 1, 3], vec![2, 0, 5], vec![3, 2, 2]];
        let p = hungarian(&c);
        assert_eq!(assignment_cost(&c, &p), 5);
    }

    #[test]
    fn permutations_are_lexicographic() {
        let p = permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![0, 1, 2]);
        assert_eq!(p[1], vec![0, 2, 1]);
        assert_eq!(p[5], vec![2, 1, 0]);
        assert_eq!(permutations(0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn match_identity_and_reversal() {
        let mut g = ChaCha8Rng::seed_from_u64(1);
        let u = random(5, 12, 0.5, &mut g);
        assert_eq!(match_patterns(&u, &u).unwrap(), vec![0, 1, 2, 3, 4]);
        let rev = u.select_rows(&[4, 3, 2, 1, 0]);
        assert_eq!(match_patterns(&u, &rev).unwrap(), vec![4, 3, 2, 1, 0]);
        assert!(match_patterns(&u, &random(4, 12, 0.5, &mut g)).is_err());
    }

    #[test]
    fn ties_resolve_to_identity() {
        let u = BinaryMatrix::zeros(4, 6);
        assert_eq!(match_patterns(&u, &u).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn match_cost_equals_exhaustive_minimum() {
        let mut g = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..30 {
            let u1 = random(5, 10, 0.4, &mut g);
            let u2 = random(5, 10, 0.4, &mut g);
            let perm = match_patterns(&u1, &u2).unwrap();
            let got = matching_cost(&u1, &u2, &perm).unwrap();
            let all = permutations(5);
            assert_eq!(all.len(), 120);
            let best_cost = all
                .iter()
                .map(|p| matching_cost(&u1, &u2, p).unwrap())
                .min()
                .unwrap();
            assert_eq!(got, best_cost);
            let lexi = all
                .iter()
                .find(|p| matching_cost(&u1, &u2, p).unwrap() == best_cost)
                .unwrap();
            assert_eq!(&perm, lexi);
        }
    }

    #[test]
    fn identical_assignments_score_zero() {
        let mut g = ChaCha8Rng::seed_from_u64(3);
        let z = random(30, 4, 0.5, &mut g);
        assert_eq!(instability_score(&z, &z, &[0, 1, 2, 3]).unwrap(), 0.0);
        let relabeled = z.select_cols(&[2, 0, 3, 1]);
        // z[:, k] equals relabeled[:, perm[k]].
        let perm = [1, 3, 0, 2];
        assert_eq!(instability_score(&z, &relabeled, &perm).unwrap(), 0.0);
        assert_eq!(exhaustive_instability(&z, &relabeled).unwrap().0, 0.0);
    }

    #[test]
    fn random_assignments_score_near_one() {
        let mut g = ChaCha8Rng::seed_from_u64(4);
        for k in [2, 5, 8] {
            let a = random(10_000, k, 0.5, &mut g);
            let b = random(10_000, k, 0.5, &mut g);
            let id: Vec<usize> = (0..k).collect();
            let s = instability_score(&a, &b, &id).unwrap();
            assert!((s - 1.0).abs() < 0.05, "K = {k}: {s}");
        }
    }

    #[test]
    fn score_is_bounded() {
        let a = BinaryMatrix::zeros(10, 3);
        let b = BinaryMatrix::from_fn(10, 3, |_, _| true);
        let s = instability_score(&a, &b, &[0, 1, 2]).unwrap();
        assert!((s - 8.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn selection_ties_prefer_smaller_k() {
        let rows = vec![
            InstabilityRow::new(4, vec![0.2, 0.1, 0.3], vec![0, 1, 2]),
            InstabilityRow::new(3, vec![0.2], vec![0]),
            InstabilityRow::new(5, vec![0.4], vec![0]),
        ];
        let r = InstabilityReport::from_rows(rows).unwrap();
        assert_eq!(r.selected_k, 3);
        assert_eq!(r.row(4).unwrap().median, 0.2);
        let csv = r.to_csv().unwrap();
        assert!(csv.starts_with("K,repetition,seed,s,median_s,std_s,selected\n"));
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.lines().nth(1).unwrap().ends_with(",1"));
    }

    #[test]
    fn median_and_std() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(sample_std(&[1.0]), 0.0);
        assert!((sample_std(&[1.0, 3.0]) - 2f64.sqrt()).abs() < 1e-15);
    }
}
