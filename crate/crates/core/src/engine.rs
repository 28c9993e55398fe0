//! Boolean matrix factorization under a signal/noise mixture.
//!
//! Every entry `x[i][d]` is drawn from the noise process with probability
//! `epsilon` (a `Bernoulli(r)` coin) and otherwise from the noisy-OR signal
//! process, where it is 0 with probability `q = prod_k beta[k][d]^z[i][k]`.
//!
//! Fitting is deterministic annealing EM. At temperature `T` the optimizer
//! ascends the tempered objective
//!
//! ```text
//! F_T = sum_{i,d} T * ln( (eps * p_N)^(1/T) + ((1 - eps) * p_S)^(1/T) )
//! ```
//!
//! which equals the log-likelihood at `T = 1`. Each [`em_step`] computes
//! tempered noise responsibilities, updates `epsilon` and `r` in closed form,
//! runs noisy-OR EM sweeps on each column of `beta`, and then improves every
//! row of `z` by single-bit flips. Each of those moves can only increase
//! `F_T`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::matrix::BinaryMatrix;
use crate::model::{Factorization, FitConfig, ProbMatrix};

/// Lower bound for `epsilon` and `r` while fitting (upper bound is
/// `1 - PARAM_FLOOR`), keeping every noise term finite.
pub const PARAM_FLOOR: f64 = 1e-6;

/// Noisy-OR EM sweeps over each `beta` column per [`em_step`].
const BETA_SWEEPS: usize = 2;

/// Hard refinement rounds after annealing.
const MAX_REFINE_STEPS: usize = 100;

fn clamp_param(p: f64) -> f64 {
    p.clamp(PARAM_FLOOR, 1.0 - PARAM_FLOOR)
}

/// `c[i][d] = OR_k (z[i][k] AND u[k][d])`.
pub fn boolean_product(z: &BinaryMatrix, u: &BinaryMatrix) -> Result<BinaryMatrix> {
    if z.cols() != u.rows() {
        return Err(Error::Dimension(format!(
            "boolean product of {}x{} and {}x{}",
            z.rows(),
            z.cols(),
            u.rows(),
            u.cols()
        )));
    }
    let rows = (0..z.rows())
        .map(|i| {
            let mut acc = vec![0u64; u.words_per_row()];
            for k in z.row_ones(i) {
                for (a, w) in acc.iter_mut().zip(u.row_words(k)) {
                    *a |= w;
                }
            }
            acc
        })
        .collect();
    Ok(BinaryMatrix::from_packed_rows(u.cols(), rows))
}

/// Probability that entry `d` is 0 under the signal model for an
/// application with pattern assignment `z_row`: the product of `beta[k][d]`
/// over assigned patterns (1 for an empty assignment).
pub fn signal_bernoulli_param(z_row: &[bool], beta: &ProbMatrix, d: usize) -> f64 {
    z_row
        .iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(k, _)| beta.get(k, d))
        .product()
}

/// `u[k][d] = 1` exactly when `beta[k][d] < 0.5`; a tie rounds to 0.
pub fn binarize(beta: &ProbMatrix) -> BinaryMatrix {
    BinaryMatrix::from_fn(beta.rows(), beta.cols(), |k, d| beta.get(k, d) < 0.5)
}

/// Per-entry tempered objective for fixed `(r, epsilon, T)`:
/// `T * ln((eps * p_N)^(1/T) + ((1 - eps) * p_S)^(1/T))`.
///
/// Evaluated in probability space, which needs one logarithm per entry,
/// unless a weight raised to `1/T` would underflow; then every entry falls
/// back to a log-space sum.
#[derive(Clone, Copy, Debug)]
struct Tempered {
    t: f64,
    inv_t: f64,
    /// `ln(eps * p_N(x))` indexed by `x`.
    ln_noise: [f64; 2],
    /// `ln(1 - eps)`.
    ln_signal_weight: f64,
    /// `(eps * p_N(x))^(1/T)` indexed by `x`.
    noise: [f64; 2],
    /// `(1 - eps)^(1/T)`.
    signal_weight: f64,
    log_space: bool,
}

/// Weights below this after tempering switch [`Tempered`] to log space.
/// Together with the partial-product range of [`Tempered::row_objective`]
/// this keeps every product of entry terms inside the normal `f64` range.
const UNDERFLOW_GUARD: f64 = 1e-150;

/// Partial products of entry terms are folded into a logarithm once they
/// leave `[1 / PRODUCT_RANGE, PRODUCT_RANGE]`.
const PRODUCT_RANGE: f64 = 1e100;

/// Beyond this gap (in units of `T`) the smaller term of a log-sum adds less
/// than `e^-40`, which is below `f64` resolution of any entry it joins.
const LSE_CUTOFF: f64 = 40.0;

impl Tempered {
    fn new(r: f64, epsilon: f64, t: f64) -> Self {
        let ln_noise = [(epsilon * (1.0 - r)).ln(), (epsilon * r).ln()];
        let ln_signal_weight = (1.0 - epsilon).ln();
        let inv_t = 1.0 / t;
        let noise = [(ln_noise[0] * inv_t).exp(), (ln_noise[1] * inv_t).exp()];
        let signal_weight = (ln_signal_weight * inv_t).exp();
        let log_space = [noise[0], noise[1], signal_weight]
            .iter()
            .any(|&v| !(v > UNDERFLOW_GUARD));
        Tempered {
            t,
            inv_t,
            ln_noise,
            ln_signal_weight,
            noise,
            signal_weight,
            log_space,
        }
    }

    /// `q^(1/T)`, the tempered probability of a signal 0.
    #[inline]
    fn scaled(&self, q: f64) -> f64 {
        if self.t == 1.0 {
            q
        } else {
            q.powf(self.inv_t)
        }
    }

    /// Tempered signal weight of the observed value, given `q` and
    /// `s = q^(1/T)`.
    #[inline]
    fn signal(&self, x: bool, q: f64, s: f64) -> f64 {
        let p = if !x {
            s
        } else if self.t == 1.0 {
            1.0 - q
        } else {
            ((-q).ln_1p() * self.inv_t).exp()
        };
        self.signal_weight * p
    }

    /// Sum of the entry objectives for `(x, q, s)` triples, taking one
    /// logarithm per partial product rather than one per entry.
    #[inline]
    fn row_objective(&self, entries: impl Iterator<Item = (bool, f64, f64)>) -> f64 {
        if self.log_space {
            return entries.map(|(x, q, _)| self.entry_log_space(x, q)).sum();
        }
        let mut acc = 0.0;
        let mut prod = 1.0;
        for (x, q, s) in entries {
            prod *= self.noise[x as usize] + self.signal(x, q, s);
            if !(1.0 / PRODUCT_RANGE..=PRODUCT_RANGE).contains(&prod) {
                acc += prod.ln();
                prod = 1.0;
            }
        }
        self.t * (acc + prod.ln())
    }

    fn entry_log_space(&self, x: bool, q: f64) -> f64 {
        let a = self.ln_noise[x as usize];
        let b = self.ln_signal_weight + if x { (-q).ln_1p() } else { q.ln() };
        let m = a.max(b);
        if m == f64::NEG_INFINITY {
            return m;
        }
        let gap = (a - b).abs() / self.t;
        if gap > LSE_CUTOFF {
            m
        } else {
            m + self.t * (-gap).exp().ln_1p()
        }
    }

    /// Tempered posterior probability that the entry came from noise.
    #[inline]
    fn noise_responsibility(&self, x: bool, q: f64, s: f64) -> f64 {
        if self.log_space {
            let a = self.ln_noise[x as usize] / self.t;
            let b = (self.ln_signal_weight + if x { (-q).ln_1p() } else { q.ln() }) / self.t;
            return if a == f64::NEG_INFINITY {
                0.0
            } else if b == f64::NEG_INFINITY {
                1.0
            } else {
                1.0 / (1.0 + (b - a).exp())
            };
        }
        let noise = self.noise[x as usize];
        noise / (noise + self.signal(x, q, s))
    }
}

/// Live optimizer state.
#[derive(Clone, Debug)]
pub struct FitState {
    pub beta: ProbMatrix,
    pub z: BinaryMatrix,
    pub r: f64,
    pub epsilon: f64,
    pub temperature: f64,
    /// Log-likelihood after the most recent update; `-inf` before any.
    pub log_likelihood: f64,
}

impl FitState {
    pub fn new(
        beta: ProbMatrix,
        z: BinaryMatrix,
        r: f64,
        epsilon: f64,
        temperature: f64,
    ) -> Result<Self> {
        if z.cols() != beta.rows() {
            return Err(Error::Dimension(format!(
                "z has {} patterns but beta has {}",
                z.cols(),
                beta.rows()
            )));
        }
        if beta.as_slice().iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::Config("beta entries must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&r) || !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Config("r and epsilon must lie in [0, 1]".into()));
        }
        if !(temperature > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        Ok(FitState {
            beta,
            z,
            r,
            epsilon,
            temperature,
            log_likelihood: f64::NEG_INFINITY,
        })
    }

    /// Random starting point: `beta ~ U[0.4, 0.6]`, assignment bits on with
    /// probability `min(0.5, 2/K)`, `r` at the data density.
    pub fn random(x: &BinaryMatrix, k: usize, temperature: f64, rng: &mut impl Rng) -> Self {
        let beta = ProbMatrix::from_fn(k, x.cols(), |_, _| rng.gen_range(0.4..=0.6));
        let p_on = (2.0 / k as f64).min(0.5);
        let z = BinaryMatrix::from_fn(x.rows(), k, |_, _| rng.gen_bool(p_on));
        let density = x.count_ones() as f64 / (x.rows() * x.cols()).max(1) as f64;
        FitState {
            beta,
            z,
            r: clamp_param(density),
            epsilon: 0.1,
            temperature,
            log_likelihood: f64::NEG_INFINITY,
        }
    }

    fn check_against(&self, x: &BinaryMatrix) -> Result<()> {
        if self.z.rows() != x.rows() || self.beta.cols() != x.cols() {
            return Err(Error::Dimension(format!(
                "state covers {}x{} but data is {}x{}",
                self.z.rows(),
                self.beta.cols(),
                x.rows(),
                x.cols()
            )));
        }
        Ok(())
    }
}

/// Row-major `N x D` matrix of signal parameters `q`.
fn signal_q(z: &BinaryMatrix, beta: &ProbMatrix) -> Vec<f64> {
    let d = beta.cols();
    let mut q = vec![1.0; z.rows() * d];
    q.par_chunks_mut(d.max(1)).enumerate().for_each(|(i, row)| {
        for k in z.row_ones(i) {
            for (qv, b) in row.iter_mut().zip(beta.row(k)) {
                *qv *= b;
            }
        }
    });
    q
}

/// `beta` raised elementwise to `1/T`.
fn scaled_beta(beta: &ProbMatrix, ev: &Tempered) -> ProbMatrix {
    ProbMatrix::from_fn(beta.rows(), beta.cols(), |p, j| ev.scaled(beta.get(p, j)))
}

/// Signal parameters `q` and their tempered powers `q^(1/T)`.
fn signal_qs(z: &BinaryMatrix, beta: &ProbMatrix, ev: &Tempered) -> (Vec<f64>, Vec<f64>) {
    let q = signal_q(z, beta);
    let s = if ev.t == 1.0 || ev.log_space {
        q.clone()
    } else {
        signal_q(z, &scaled_beta(beta, ev))
    };
    (q, s)
}

fn sum_entries(x: &BinaryMatrix, q: &[f64], s: &[f64], ev: &Tempered) -> f64 {
    let d = x.cols();
    let per_row: Vec<f64> = (0..x.rows())
        .into_par_iter()
        .map(|i| {
            let base = i * d;
            ev.row_objective((0..d).map(|j| (x.get(i, j), q[base + j], s[base + j])))
        })
        .collect();
    per_row.iter().sum()
}

/// Log-likelihood of `x` under the mixture, summed in log space. Entries
/// with zero mixture probability make the result `-inf`.
pub fn log_likelihood(x: &BinaryMatrix, state: &FitState) -> Result<f64> {
    state.check_against(x)?;
    let q = signal_q(&state.z, &state.beta);
    Ok(sum_entries(x, &q, &q, &Tempered::new(state.r, state.epsilon, 1.0)))
}

/// Tempered objective `F_T` at the state's temperature; equals
/// [`log_likelihood`] at `T = 1`.
pub fn tempered_log_likelihood(x: &BinaryMatrix, state: &FitState) -> Result<f64> {
    state.check_against(x)?;
    let ev = Tempered::new(state.r, state.epsilon, state.temperature);
    let (q, s) = signal_qs(&state.z, &state.beta, &ev);
    Ok(sum_entries(x, &q, &s, &ev))
}

/// One tempered E/M sweep at the state's temperature. `epsilon` and `r`
/// come back clamped to `[PARAM_FLOOR, 1 - PARAM_FLOOR]`.
pub fn em_step(x: &BinaryMatrix, state: &FitState) -> Result<FitState> {
    state.check_against(x)?;
    Ok(step(x, state).0)
}

/// [`em_step`] that also returns the tempered objective of the new state.
fn step(x: &BinaryMatrix, state: &FitState) -> (FitState, f64) {
    let (n, d, k) = (x.rows(), x.cols(), state.beta.rows());
    let t = state.temperature;
    let r0 = clamp_param(state.r);
    let eps0 = clamp_param(state.epsilon);
    let ev = Tempered::new(r0, eps0, t);
    let (q, s) = signal_qs(&state.z, &state.beta, &ev);
    let assigned: Vec<Vec<usize>> = (0..n).map(|i| state.z.row_ones(i)).collect();

    // E-step: tempered noise responsibilities.
    let mut rho = vec![0.0; n * d];
    rho.par_chunks_mut(d.max(1)).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = ev.noise_responsibility(x.get(i, j), q[i * d + j], s[i * d + j]);
        }
    });

    // M-step for the noise parameters. The bound is concave and separable in
    // each, so clamping the maximizer into the interval keeps the ascent.
    let mut sum_rho = 0.0;
    let mut sum_rho_x = 0.0;
    for i in 0..n {
        for j in 0..d {
            let v = rho[i * d + j];
            sum_rho += v;
            if x.get(i, j) {
                sum_rho_x += v;
            }
        }
    }
    let epsilon = clamp_param(sum_rho / (n * d) as f64);
    let r = if sum_rho > 0.0 {
        clamp_param(sum_rho_x / sum_rho)
    } else {
        r0
    };

    // M-step for beta, column by column, with signal weights 1 - rho held
    // fixed across sweeps.
    let columns: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|j| {
            let mut col: Vec<f64> = (0..k).map(|p| state.beta.get(p, j)).collect();
            let mut num = vec![0.0; k];
            let mut den = vec![0.0; k];
            for _ in 0..BETA_SWEEPS {
                num.iter_mut().for_each(|v| *v = 0.0);
                den.iter_mut().for_each(|v| *v = 0.0);
                for (i, ones) in assigned.iter().enumerate() {
                    if ones.is_empty() {
                        continue;
                    }
                    let w = 1.0 - rho[i * d + j];
                    if w <= 0.0 {
                        continue;
                    }
                    if !x.get(i, j) {
                        for &p in ones {
                            num[p] += w;
                            den[p] += w;
                        }
                        continue;
                    }
                    let qi: f64 = ones.iter().map(|&p| col[p]).product();
                    if qi >= 1.0 {
                        continue;
                    }
                    for &p in ones {
                        let b = col[p];
                        let off = if b <= 0.0 {
                            0.0
                        } else {
                            let rest: f64 = ones
                                .iter()
                                .filter(|&&o| o != p)
                                .map(|&o| col[o])
                                .product();
                            (b * (1.0 - rest) / (1.0 - qi)).clamp(0.0, 1.0)
                        };
                        num[p] += w * off;
                        den[p] += w;
                    }
                }
                for p in 0..k {
                    if den[p] > 0.0 {
                        col[p] = (num[p] / den[p]).clamp(0.0, 1.0);
                    }
                }
            }
            col
        })
        .collect();
    let beta = ProbMatrix::from_fn(k, d, |p, j| columns[j][p]);

    // Assignment update: greedy single-bit flips per row.
    let ev = Tempered::new(r, epsilon, t);
    let beta_scaled = scaled_beta(&beta, &ev);
    let rows: Vec<Vec<bool>> = (0..n)
        .into_par_iter()
        .map(|i| improve_assignment(x, i, state.z.row(i), &beta, &beta_scaled, &ev))
        .collect();
    let z = BinaryMatrix::from_rows(&rows).unwrap_or_else(|_| BinaryMatrix::zeros(n, k));

    let q = signal_q(&z, &beta);
    let log_likelihood = sum_entries(x, &q, &q, &Tempered::new(r, epsilon, 1.0));
    let objective = if t == 1.0 {
        log_likelihood
    } else if ev.log_space {
        sum_entries(x, &q, &q, &ev)
    } else {
        sum_entries(x, &q, &signal_q(&z, &beta_scaled), &ev)
    };
    let next = FitState {
        beta,
        z,
        r,
        epsilon,
        temperature: t,
        log_likelihood,
    };
    (next, objective)
}

/// One Gauss-Seidel sweep of single-bit flips over one row of `z`, accepting
/// only strict gains of the row's tempered objective. Tracks `q` and
/// `q^(1/T)` per column so a candidate flip costs a multiplication per
/// column instead of a product over patterns.
fn improve_assignment(
    x: &BinaryMatrix,
    i: usize,
    mut row: Vec<bool>,
    beta: &ProbMatrix,
    beta_scaled: &ProbMatrix,
    ev: &Tempered,
) -> Vec<bool> {
    let (k, d) = (beta.rows(), beta.cols());
    if k == 0 {
        return row;
    }
    let xs: Vec<bool> = (0..d).map(|j| x.get(i, j)).collect();
    let mut q = vec![1.0; d];
    let mut s = vec![1.0; d];
    for p in (0..k).filter(|&p| row[p]) {
        for j in 0..d {
            q[j] *= beta.get(p, j);
            s[j] *= beta_scaled.get(p, j);
        }
    }
    let mut current = ev.row_objective((0..d).map(|j| (xs[j], q[j], s[j])));
    let mut cand_q = vec![0.0; d];
    let mut cand_s = vec![0.0; d];
    for p in 0..k {
        let turning_on = !row[p];
        let (b, bs) = (beta.row(p), beta_scaled.row(p));
        for j in 0..d {
            if turning_on {
                cand_q[j] = q[j] * b[j];
                cand_s[j] = s[j] * bs[j];
            } else if b[j] > 1e-8 && bs[j] > UNDERFLOW_GUARD {
                cand_q[j] = (q[j] / b[j]).min(1.0);
                cand_s[j] = (s[j] / bs[j]).min(1.0);
            } else {
                let others = (0..k).filter(|&o| o != p && row[o]);
                cand_q[j] = others.clone().map(|o| beta.get(o, j)).product();
                cand_s[j] = others.map(|o| beta_scaled.get(o, j)).product();
            }
        }
        let value = ev.row_objective((0..d).map(|j| (xs[j], cand_q[j], cand_s[j])));
        if value - current > gain_threshold(current) {
            row[p] = !row[p];
            std::mem::swap(&mut q, &mut cand_q);
            std::mem::swap(&mut s, &mut cand_s);
            current = value;
        }
    }
    row
}

fn relative_change(prev: f64, cur: f64) -> f64 {
    if prev == cur {
        return 0.0;
    }
    (cur - prev).abs() / prev.abs().max(1e-300)
}

/// Fits `K` patterns to `x`.
///
/// Anneals from `config.initial_temperature` down to
/// `config.final_temperature`, running [`em_step`] at each level until the
/// tempered objective settles. A level that leaves every parameter unchanged
/// ends the schedule early. Afterwards `beta` is rounded with [`binarize`]
/// and `z`, `r`, `epsilon` are refined against the Boolean patterns at
/// `T = 1`, so the reported likelihood is that of `(z, u, r, epsilon)`.
/// Output is identical for a given `(x, K, config)` regardless of the thread
/// count.
pub fn fit(x: &BinaryMatrix, k: usize, config: &FitConfig) -> Result<Factorization> {
    config.validate()?;
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::Empty("cannot fit an empty matrix"));
    }
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if k > x.cols() {
        return Err(Error::Config(format!(
            "K = {k} exceeds the number of permissions D = {}",
            x.cols()
        )));
    }
    let mut best: Option<Factorization> = None;
    for restart in 0..config.restarts {
        let seed = if restart == 0 {
            config.seed
        } else {
            derive_seed(config.seed, restart as u64)
        };
        let candidate = anneal(x, k, config, seed)?;
        if best
            .as_ref()
            .is_none_or(|b| candidate.log_likelihood > b.log_likelihood)
        {
            best = Some(candidate);
        }
    }
    let mut out = best.expect("at least one restart");
    out.seed = config.seed;
    Ok(out)
}

fn anneal(x: &BinaryMatrix, k: usize, config: &FitConfig, seed: u64) -> Result<Factorization> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = FitState::random(x, k, config.initial_temperature, &mut rng);
    let mut t = config.initial_temperature;
    loop {
        state.temperature = t;
        let level_start = state.clone();
        let mut prev = tempered_log_likelihood(x, &state)?;
        for _ in 0..config.max_inner_iterations {
            let (next, cur) = step(x, &state);
            state = next;
            if cur.is_nan() {
                return Err(Error::Numeric(format!("objective became NaN at T = {t}")));
            }
            let settled = relative_change(prev, cur) < config.tolerance;
            prev = cur;
            if settled {
                break;
            }
        }
        let still = state.z == level_start.z
            && state.beta.max_abs_diff(&level_start.beta) < config.tolerance
            && (state.epsilon - level_start.epsilon).abs() < config.tolerance
            && (state.r - level_start.r).abs() < config.tolerance;
        if t <= config.final_temperature || still {
            break;
        }
        t = (t * config.cooling).max(config.final_temperature);
    }

    let soft_beta = state.beta.clone();
    let u = binarize(&soft_beta);
    let mut hard = FitState {
        beta: ProbMatrix::from_patterns(&u),
        temperature: 1.0,
        ..state
    };
    hard.log_likelihood = log_likelihood(x, &hard)?;
    for _ in 0..MAX_REFINE_STEPS {
        let next = em_step(x, &hard)?;
        let done = next.z == hard.z
            && relative_change(hard.log_likelihood, next.log_likelihood) < config.tolerance * 1e-3;
        hard = next;
        if done {
            break;
        }
    }
    if hard.log_likelihood.is_nan() {
        return Err(Error::Numeric("log-likelihood is NaN after refinement".into()));
    }
    Ok(Factorization {
        z: hard.z,
        u,
        beta: soft_beta,
        r: hard.r,
        epsilon: hard.epsilon,
        log_likelihood: hard.log_likelihood,
        seed,
    })
}

/// Maximum-likelihood pattern assignment for new rows against fixed Boolean
/// patterns. Used to transfer a model to held-out applications.
#[derive(Clone, Debug)]
pub struct PatternClassifier {
    u: BinaryMatrix,
    /// Per-entry log probabilities indexed `[covered][x]`.
    ln_terms: [[f64; 2]; 2],
}

impl PatternClassifier {
    /// `r` and `epsilon` are clamped to `[PARAM_FLOOR, 1 - PARAM_FLOOR]`.
    pub fn new(u: &BinaryMatrix, r: f64, epsilon: f64) -> Self {
        let (r, eps) = (clamp_param(r), clamp_param(epsilon));
        PatternClassifier {
            u: u.clone(),
            ln_terms: [
                [(eps * (1.0 - r) + (1.0 - eps)).ln(), (eps * r).ln()],
                [(eps * (1.0 - r)).ln(), (eps * r + (1.0 - eps)).ln()],
            ],
        }
    }

    pub fn from_factorization(f: &Factorization) -> Self {
        Self::new(&f.u, f.r, f.epsilon)
    }

    pub fn patterns(&self) -> &BinaryMatrix {
        &self.u
    }

    fn coverage_log_likelihood(&self, x_words: &[u64], cover: &[u64]) -> f64 {
        let mut n11 = 0usize;
        let mut n_cover = 0usize;
        let mut n_x = 0usize;
        for (c, xw) in cover.iter().zip(x_words) {
            n11 += (c & xw).count_ones() as usize;
            n_cover += c.count_ones() as usize;
            n_x += xw.count_ones() as usize;
        }
        let n10 = n_cover - n11;
        let n01 = n_x - n11;
        let n00 = self.u.cols() - n11 - n10 - n01;
        let t = &self.ln_terms;
        n11 as f64 * t[1][1] + n10 as f64 * t[1][0] + n01 as f64 * t[0][1] + n00 as f64 * t[0][0]
    }

    fn coverage(&self, assigned: &[bool], skip: Option<usize>) -> Vec<u64> {
        let mut acc = vec![0u64; self.u.words_per_row()];
        for (p, _) in assigned.iter().enumerate().filter(|(_, &on)| on) {
            if Some(p) == skip {
                continue;
            }
            for (a, w) in acc.iter_mut().zip(self.u.row_words(p)) {
                *a |= w;
            }
        }
        acc
    }

    /// Mixture log-likelihood of one packed row given an assignment.
    pub fn row_log_likelihood(&self, x_words: &[u64], assigned: &[bool]) -> f64 {
        self.coverage_log_likelihood(x_words, &self.coverage(assigned, None))
    }

    /// Greedy assignment of one packed row: add the best pattern while that
    /// helps, then drop patterns while that helps. Ties go to the lowest
    /// pattern index.
    pub fn assign_words(&self, x_words: &[u64]) -> Vec<bool> {
        let k = self.u.rows();
        let mut assigned = vec![false; k];
        let mut cover = vec![0u64; self.u.words_per_row()];
        let mut current = self.coverage_log_likelihood(x_words, &cover);
        let mut trial = cover.clone();
        loop {
            let mut best: Option<(usize, f64)> = None;
            for p in (0..k).filter(|&p| !assigned[p]) {
                for ((t, c), w) in trial.iter_mut().zip(&cover).zip(self.u.row_words(p)) {
                    *t = c | w;
                }
                let value = self.coverage_log_likelihood(x_words, &trial);
                if value > current + gain_threshold(current)
                    && best.is_none_or(|(_, v)| value > v)
                {
                    best = Some((p, value));
                }
            }
            let Some((p, value)) = best else { break };
            assigned[p] = true;
            for (c, w) in cover.iter_mut().zip(self.u.row_words(p)) {
                *c |= w;
            }
            current = value;
        }
        loop {
            let mut best: Option<(usize, f64)> = None;
            for p in (0..k).filter(|&p| assigned[p]) {
                let value = self.coverage_log_likelihood(x_words, &self.coverage(&assigned, Some(p)));
                if value > current + gain_threshold(current)
                    && best.is_none_or(|(_, v)| value > v)
                {
                    best = Some((p, value));
                }
            }
            let Some((p, value)) = best else { break };
            assigned[p] = false;
            current = value;
        }
        assigned
    }

    /// Assigns every row of `x`.
    pub fn assign_all(&self, x: &BinaryMatrix) -> Result<BinaryMatrix> {
        if x.cols() != self.u.cols() {
            return Err(Error::Dimension(format!(
                "rows have {} permissions but patterns have {}",
                x.cols(),
                self.u.cols()
            )));
        }
        let rows: Vec<Vec<bool>> = (0..x.rows())
            .into_par_iter()
            .map(|i| self.assign_words(x.row_words(i)))
            .collect();
        if rows.is_empty() {
            return Ok(BinaryMatrix::zeros(0, self.u.rows()));
        }
        BinaryMatrix::from_rows(&rows)
    }
}

fn gain_threshold(current: f64) -> f64 {
    1e-12 * current.abs().max(1.0)
}

/// Greedy maximum-likelihood assignment of a single application's
/// permission vector to the patterns `u`.
pub fn assign_patterns(
    x_row: &[bool],
    u: &BinaryMatrix,
    r: f64,
    epsilon: f64,
) -> Result<Vec<bool>> {
    if x_row.len() != u.cols() {
        return Err(Error::Dimension(format!(
            "row has {} permissions but patterns have {}",
            x_row.len(),
            u.cols()
        )));
    }
    let row = BinaryMatrix::from_rows(&[x_row])?;
    Ok(PatternClassifier::new(u, r, epsilon).assign_words(row.row_words(0)))
}
