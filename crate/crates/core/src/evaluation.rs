//! Evaluation quantities for a dataset and its factorization: reconstruction
//! residuals, pairwise conditional probabilities (PCP), pattern frequencies
//! and category divergence.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::engine::boolean_product;
use crate::error::{Error, Result};
use crate::matrix::BinaryMatrix;

/// Default additive smoothing for category counts.
pub const DEFAULT_KL_SMOOTHING: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub t: usize,
    pub fraction_fn_gt_t: f64,
    pub fraction_fp_gt_t: f64,
}

/// Per-application residual counts against the reconstruction `z ⊗ u`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRates {
    /// Requested permissions the assigned patterns do not cover.
    pub false_negatives: Vec<usize>,
    /// Permissions implied by assigned patterns but not requested.
    pub false_positives: Vec<usize>,
    pub mean_fn: f64,
    pub mean_fp: f64,
    /// Fraction of applications with more than `t` residuals of each kind,
    /// for `t = 0..=max`.
    pub curve: Vec<CurvePoint>,
}

impl ErrorRates {
    pub fn len(&self) -> usize {
        self.false_negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.false_negatives.is_empty()
    }

    pub fn total(&self) -> usize {
        self.false_negatives.iter().sum::<usize>() + self.false_positives.iter().sum::<usize>()
    }

    /// Mean residual count per application, `f_n + f_p`.
    pub fn mean_total(&self) -> f64 {
        self.mean_fn + self.mean_fp
    }
}

/// Residuals of `x` against `z ⊗ u`.
pub fn error_rates(x: &BinaryMatrix, z: &BinaryMatrix, u: &BinaryMatrix) -> Result<ErrorRates> {
    let recon = boolean_product(z, u)?;
    error_rates_against(x, &recon)
}

/// Residuals of `x` against an explicit reconstruction.
pub fn error_rates_against(x: &BinaryMatrix, recon: &BinaryMatrix) -> Result<ErrorRates> {
    x.ensure_same_shape(recon, "error rates")?;
    let n = x.rows();
    let mut fns = Vec::with_capacity(n);
    let mut fps = Vec::with_capacity(n);
    for i in 0..n {
        let (mut f_n, mut f_p) = (0, 0);
        for (a, b) in x.row_words(i).iter().zip(recon.row_words(i)) {
            f_n += (a & !b).count_ones() as usize;
            f_p += (!a & b).count_ones() as usize;
        }
        fns.push(f_n);
        fps.push(f_p);
    }
    let mean = |v: &[usize]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<usize>() as f64 / v.len() as f64
        }
    };
    let max = fns.iter().chain(&fps).copied().max().unwrap_or(0);
    let frac_gt = |v: &[usize], t: usize| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().filter(|&&c| c > t).count() as f64 / v.len() as f64
        }
    };
    let curve = (0..=max)
        .map(|t| CurvePoint {
            t,
            fraction_fn_gt_t: frac_gt(&fns, t),
            fraction_fp_gt_t: frac_gt(&fps, t),
        })
        .collect();
    Ok(ErrorRates {
        mean_fn: mean(&fns),
        mean_fp: mean(&fps),
        false_negatives: fns,
        false_positives: fps,
        curve,
    })
}

/// Pairwise conditional probabilities `p[s][t] = P(s requested | t requested)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PcpMatrix {
    pub values: Vec<Vec<f64>>,
    /// Permissions never requested; their columns are all zero.
    pub undefined: Vec<usize>,
}

impl PcpMatrix {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_defined(&self, t: usize) -> bool {
        self.undefined.binary_search(&t).is_err()
    }
}

/// Empirical PCP from co-request counts.
pub fn pcp_matrix(x: &BinaryMatrix) -> PcpMatrix {
    let d = x.cols();
    let mut co = vec![0usize; d * d];
    for i in 0..x.rows() {
        let ones = x.row_ones(i);
        for &s in &ones {
            for &t in &ones {
                co[s * d + t] += 1;
            }
        }
    }
    let undefined: Vec<usize> = (0..d).filter(|&t| co[t * d + t] == 0).collect();
    let values = (0..d)
        .map(|s| {
            (0..d)
                .map(|t| {
                    let n_t = co[t * d + t];
                    if n_t == 0 {
                        0.0
                    } else {
                        co[s * d + t] as f64 / n_t as f64
                    }
                })
                .collect()
        })
        .collect();
    PcpMatrix { values, undefined }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AveragePcp {
    pub value: f64,
    /// Ordered pairs `s != t` with both permissions requested at least once.
    pub pairs: usize,
    /// No defined pair exists; `value` is reported as 0.
    pub degenerate: bool,
}

/// Mean PCP over ordered pairs of distinct permissions that are both
/// requested at least once.
pub fn average_pcp(pcp: &PcpMatrix) -> AveragePcp {
    let d = pcp.dim();
    let defined: Vec<usize> = (0..d).filter(|&t| pcp.is_defined(t)).collect();
    let mut sum = 0.0;
    let mut pairs = 0;
    for &s in &defined {
        for &t in &defined {
            if s != t {
                sum += pcp.values[s][t];
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        return AveragePcp {
            value: 0.0,
            pairs,
            degenerate: true,
        };
    }
    AveragePcp {
        value: sum / pairs as f64,
        pairs,
        degenerate: false,
    }
}

/// Fraction of applications assigned to each pattern, sorted descending.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PatternFrequencies {
    pub frequencies: Vec<f64>,
    /// `order[j]` is the original index of the `j`-th most frequent pattern.
    pub order: Vec<usize>,
}

/// Column means of `z`. Patterns overlap, so these need not sum to 1.
pub fn pattern_frequencies(z: &BinaryMatrix) -> PatternFrequencies {
    let n = z.rows().max(1) as f64;
    let raw: Vec<f64> = z.column_counts().into_iter().map(|c| c as f64 / n).collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]).then(a.cmp(&b)));
    PatternFrequencies {
        frequencies: order.iter().map(|&k| raw[k]).collect(),
        order,
    }
}

/// `KL(p_g || p_k)` in bits, where `p_g` is the category distribution over
/// all applications and `p_k` the distribution over applications assigned
/// pattern `k`. Every category count of both gets `smoothing` added before
/// normalizing. With zero smoothing a category missing from `p_k` gives an
/// infinite divergence.
pub fn category_divergence(
    z: &BinaryMatrix,
    categories: &[String],
    k: usize,
    smoothing: f64,
) -> Result<f64> {
    if categories.len() != z.rows() {
        return Err(Error::Dimension(format!(
            "{} category labels for {} applications",
            categories.len(),
            z.rows()
        )));
    }
    if k >= z.cols() {
        return Err(Error::Dimension(format!(
            "pattern {k} out of range for K = {}",
            z.cols()
        )));
    }
    if !(smoothing >= 0.0) {
        return Err(Error::Config("smoothing must be non-negative".into()));
    }
    let mut global: BTreeMap<&str, f64> = BTreeMap::new();
    let mut local: BTreeMap<&str, f64> = BTreeMap::new();
    let mut assigned = 0usize;
    for (i, c) in categories.iter().enumerate() {
        *global.entry(c).or_default() += 1.0;
        let slot = local.entry(c).or_default();
        if z.get(i, k) {
            *slot += 1.0;
            assigned += 1;
        }
    }
    if assigned == 0 {
        return Err(Error::UndefinedDivergence(k));
    }
    let g_total: f64 = global.values().map(|v| v + smoothing).sum();
    let l_total: f64 = local.values().map(|v| v + smoothing).sum();
    let mut kl = 0.0;
    for (cat, g) in &global {
        let pg = (g + smoothing) / g_total;
        if pg == 0.0 {
            continue;
        }
        let pk = (local[cat] + smoothing) / l_total;
        kl += pg * (pg / pk).log2();
    }
    Ok(kl.max(0.0))
}

/// One row of the pattern summary table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PatternSummary {
    pub pattern: usize,
    pub frequency: f64,
    /// `None` when no application uses the pattern or no categories exist.
    pub kl_bits: Option<f64>,
    pub permissions: Vec<String>,
}

/// Summary rows for every pattern in descending frequency order.
pub fn pattern_summary(
    z: &BinaryMatrix,
    u: &BinaryMatrix,
    permission_names: &[String],
    categories: Option<&[String]>,
    smoothing: f64,
) -> Result<Vec<PatternSummary>> {
    if u.cols() != permission_names.len() {
        return Err(Error::Dimension(format!(
            "{} permission names for {} permissions",
            permission_names.len(),
            u.cols()
        )));
    }
    let freq = pattern_frequencies(z);
    freq.order
        .iter()
        .zip(&freq.frequencies)
        .enumerate()
        .map(|(rank, (&k, &f))| {
            let kl_bits = match categories {
                Some(c) => match category_divergence(z, c, k, smoothing) {
                    Ok(v) => Some(v),
                    Err(Error::UndefinedDivergence(_)) => None,
                    Err(e) => return Err(e),
                },
                None => None,
            };
            Ok(PatternSummary {
                pattern: rank,
                frequency: f,
                kl_bits,
                permissions: u.row_ones(k).into_iter().map(|d| permission_names[d].clone()).collect(),
            })
        })
        .collect()
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Cumulative residual curves for several tagged sets in one table.
pub fn error_curves_csv(sets: &[(&str, &ErrorRates)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dataset", "t", "fraction_fn_gt_t", "fraction_fp_gt_t"])?;
    for (tag, rates) in sets {
        for p in &rates.curve {
            w.write_record([
                tag.to_string(),
                p.t.to_string(),
                format!("{:.6}", p.fraction_fn_gt_t),
                format!("{:.6}", p.fraction_fp_gt_t),
            ])?;
        }
    }
    finish_csv(w)
}

/// PCP matrix with permission names; row `s`, column `t` holds `p[s][t]`.
pub fn pcp_csv(pcp: &PcpMatrix, names: &[String]) -> Result<String> {
    if names.len() != pcp.dim() {
        return Err(Error::Dimension("permission names do not match PCP size".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["permission".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (s, row) in pcp.values.iter().enumerate() {
        let mut rec = vec![names[s].clone()];
        rec.extend(row.iter().map(|v| format!("{v:.6}")));
        w.write_record(&rec)?;
    }
    finish_csv(w)
}

pub fn pattern_summary_csv(rows: &[PatternSummary]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["pattern", "frequency", "kl_bits", "permissions"])?;
    for r in rows {
        w.write_record([
            r.pattern.to_string(),
            format!("{:.6}", r.frequency),
            r.kl_bits.map(|v| format!("{v:.6}")).unwrap_or_default(),
            r.permissions.join(";"),
        ])?;
    }
    finish_csv(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::hamming_distance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, p: f64, g: &mut ChaCha8Rng) -> BinaryMatrix {
        BinaryMatrix::from_fn(rows, cols, |_, _| g.gen_bool(p))
    }

    #[test]
    fn exact_reconstruction_has_no_residuals() {
        let mut g = ChaCha8Rng::seed_from_u64(1);
        let z = random(20, 3, 0.4, &mut g);
        let u = random(3, 9, 0.4, &mut g);
        let x = boolean_product(&z, &u).unwrap();
        let e = error_rates(&x, &z, &u).unwrap();
        assert_eq!((e.mean_fn, e.mean_fp), (0.0, 0.0));
        assert_eq!(e.curve.len(), 1);
    }

    #[test]
    fn all_ones_against_empty_reconstruction() {
        let x = BinaryMatrix::from_fn(4, 7, |_, _| true);
        let recon = BinaryMatrix::zeros(4, 7);
        let e = error_rates_against(&x, &recon).unwrap();
        assert_eq!(e.mean_fn, 7.0);
        assert_eq!(e.mean_fp, 0.0);
        assert_eq!(e.curve[6].fraction_fn_gt_t, 1.0);
        assert_eq!(e.curve[7].fraction_fn_gt_t, 0.0);
    }

    #[test]
    fn residuals_match_counting_oracle_and_hamming() {
        let mut g = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x = random(15, 11, 0.3, &mut g);
            let z = random(15, 4, 0.3, &mut g);
            let u = random(4, 11, 0.3, &mut g);
            let recon = boolean_product(&z, &u).unwrap();
            let e = error_rates(&x, &z, &u).unwrap();
            for i in 0..15 {
                let (mut f_n, mut f_p) = (0, 0);
                for d in 0..11 {
                    match (x.get(i, d), recon.get(i, d)) {
                        (true, false) => f_n += 1,
                        (false, true) => f_p += 1,
                        _ => {}
                    }
                }
                assert_eq!(e.false_negatives[i], f_n);
                assert_eq!(e.false_positives[i], f_p);
            }
            assert_eq!(e.total(), hamming_distance(&x, &recon).unwrap());
        }
    }

    #[test]
    fn residuals_invariant_under_column_permutation() {
        let mut g = ChaCha8Rng::seed_from_u64(3);
        let x = random(12, 8, 0.3, &mut g);
        let z = random(12, 3, 0.4, &mut g);
        let u = random(3, 8, 0.3, &mut g);
        let perm = [3, 0, 7, 5, 1, 6, 2, 4];
        let a = error_rates(&x, &z, &u).unwrap();
        let b = error_rates(&x.select_cols(&perm), &z, &u.select_cols(&perm)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pcp_constructed_cases() {
        // s = 0 requested everywhere, t = 1 by half, 2 and 3 always together.
        let x = BinaryMatrix::from_rows(&[
            vec![true, true, true, true, false],
            vec![true, true, false, false, false],
            vec![true, false, true, true, false],
            vec![true, false, false, false, false],
        ])
        .unwrap();
        let p = pcp_matrix(&x);
        assert_eq!(p.values[0][1], 1.0);
        assert_eq!(p.values[1][0], 0.5);
        assert_eq!(p.values[2][3], 1.0);
        assert_eq!(p.values[3][2], 1.0);
        assert_eq!(p.undefined, vec![4]);
        assert!((0..4).all(|t| p.values[t][t] == 1.0));
        assert!((0..5).all(|s| p.values[s][4] == 0.0));
    }

    #[test]
    fn pcp_matches_double_loop() {
        let mut g = ChaCha8Rng::seed_from_u64(4);
        let x = random(50, 10, 0.3, &mut g);
        let p = pcp_matrix(&x);
        for s in 0..10 {
            for t in 0..10 {
                let (mut num, mut den) = (0.0, 0.0);
                for i in 0..50 {
                    if x.get(i, t) {
                        den += 1.0;
                        if x.get(i, s) {
                            num += 1.0;
                        }
                    }
                }
                let want = if den > 0.0 { num / den } else { 0.0 };
                assert!((p.values[s][t] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn average_pcp_cases() {
        let all = BinaryMatrix::from_fn(5, 4, |_, _| true);
        assert_eq!(average_pcp(&pcp_matrix(&all)).value, 1.0);

        let single = BinaryMatrix::from_fn(5, 4, |_, d| d == 2);
        let a = average_pcp(&pcp_matrix(&single));
        assert!(a.degenerate);
        assert_eq!((a.value, a.pairs), (0.0, 0));

        let mut g = ChaCha8Rng::seed_from_u64(5);
        let x = random(40, 6, 0.3, &mut g);
        let p = pcp_matrix(&x);
        let mut sum = 0.0;
        let mut n = 0;
        for s in 0..6 {
            for t in 0..6 {
                if s != t && p.is_defined(s) && p.is_defined(t) {
                    sum += p.values[s][t];
                    n += 1;
                }
            }
        }
        assert!((average_pcp(&p).value - sum / n as f64).abs() < 1e-12);
    }

    #[test]
    fn pattern_frequency_cases() {
        let eye = BinaryMatrix::from_fn(3, 3, |i, j| i == j);
        let f = pattern_frequencies(&eye);
        assert!(f.frequencies.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(f.order, vec![0, 1, 2]);

        let ones = BinaryMatrix::from_fn(3, 3, |_, _| true);
        let f = pattern_frequencies(&ones);
        assert_eq!(f.frequencies.iter().sum::<f64>(), 3.0);

        let z = BinaryMatrix::from_rows(&[vec![false, true], vec![false, true], vec![true, false]])
            .unwrap();
        let f = pattern_frequencies(&z);
        assert_eq!(f.order, vec![1, 0]);
        assert!((f.frequencies[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn divergence_zero_when_distributions_match() {
        let cats = labels(&["a", "b", "a", "b"]);
        let z = BinaryMatrix::from_fn(4, 1, |_, _| true);
        assert!(category_divergence(&z, &cats, 0, 0.5).unwrap().abs() < 1e-15);
        let none = BinaryMatrix::zeros(4, 1);
        assert!(matches!(
            category_divergence(&none, &cats, 0, 0.5),
            Err(Error::UndefinedDivergence(0))
        ));
    }

    #[test]
    fn divergence_matches_direct_summation() {
        // C equally sized categories, pattern only in the first.
        let c = 4;
        let per = 25;
        let cats: Vec<String> = (0..c * per).map(|i| format!("c{}", i / per)).collect();
        let z = BinaryMatrix::from_fn(c * per, 1, |i, _| i < per);
        let s = 0.5;
        let g_tot = (c * per) as f64 + c as f64 * s;
        let l_tot = per as f64 + c as f64 * s;
        let mut want = 0.0;
        for j in 0..c {
            let pg = (per as f64 + s) / g_tot;
            let pk = (if j == 0 { per as f64 } else { 0.0 } + s) / l_tot;
            want += pg * (pg / pk).log2();
        }
        let got = category_divergence(&z, &cats, 0, s).unwrap();
        assert!((got - want).abs() < 1e-12);
        assert!(category_divergence(&z, &cats, 0, 0.0).unwrap().is_infinite());
    }

    #[test]
    fn summary_and_csv_shapes() {
        let z = BinaryMatrix::from_rows(&[vec![true, false], vec![true, true], vec![false, true]])
            .unwrap();
        let u = BinaryMatrix::from_rows(&[vec![true, false, true], vec![false, true, false]])
            .unwrap();
        let names = labels(&["net", "gps", "sms"]);
        let cats = labels(&["x", "y", "x"]);
        let rows = pattern_summary(&z, &u, &names, Some(&cats), 0.5).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].permissions, labels(&["net", "sms"]));
        let csv = pattern_summary_csv(&rows).unwrap();
        assert!(csv.starts_with("pattern,frequency,kl_bits,permissions\n"));
        assert!(csv.contains("net;sms"));

        let p = pcp_matrix(&boolean_product(&z, &u).unwrap());
        let text = pcp_csv(&p, &names).unwrap();
        assert_eq!(text.lines().count(), 4);
        let e = error_rates_against(&BinaryMatrix::zeros(3, 3), &BinaryMatrix::zeros(3, 3)).unwrap();
        let curves = error_curves_csv(&[("train", &e), ("test_high", &e)]).unwrap();
        assert_eq!(curves.lines().count(), 3);
    }
}
