//! Synthetic permission data: independent-request null models and planted
//! factorizations, plus the log-binned PCP histogram used to compare them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::engine::boolean_product;
use crate::error::{Error, Result};
use crate::matrix::BinaryMatrix;

/// PCP values below this land in the lowest histogram bin.
pub const PCP_UNDERFLOW: f64 = 0.001;

pub const DEFAULT_BINS: usize = 20;

/// Fraction of applications requesting each permission.
pub fn marginal_probs(x: &BinaryMatrix) -> Result<Vec<f64>> {
    if x.rows() == 0 {
        return Err(Error::Empty("marginals need at least one application"));
    }
    let n = x.rows() as f64;
    Ok(x.column_counts().into_iter().map(|c| c as f64 / n).collect())
}

/// `n` applications requesting each permission `d` independently with
/// probability `p[d]`.
pub fn simulate_independent(p: &[f64], n: usize, seed: u64) -> Result<BinaryMatrix> {
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Config(format!("request probability {bad} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(BinaryMatrix::from_fn(n, p.len(), |_, d| rng.gen_bool(p[d])))
}

/// Parameters of a planted factorization.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlantSpec {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    /// Probability that a pattern contains a permission.
    pub pattern_density: f64,
    /// Probability that an application uses a pattern.
    pub assign_density: f64,
    pub epsilon: f64,
    pub r: f64,
}

impl PlantSpec {
    /// The recovery benchmark family: N = 2000, D = 50, K = 5.
    pub fn benchmark() -> Self {
        PlantSpec {
            n: 2000,
            d: 50,
            k: 5,
            pattern_density: 0.2,
            assign_density: 0.3,
            epsilon: 0.05,
            r: 0.5,
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.epsilon = 0.0;
        self
    }
}

/// Data generated from known patterns.
#[derive(Clone, Debug)]
pub struct Planted {
    pub x: BinaryMatrix,
    pub z: BinaryMatrix,
    pub u: BinaryMatrix,
    /// `z ⊗ u` before noise.
    pub clean: BinaryMatrix,
}

/// Draws `u ~ Bernoulli(pattern_density)`, `z ~ Bernoulli(assign_density)`
/// and `x = z ⊗ u`, then resamples each entry from `Bernoulli(r)` with
/// probability `epsilon`. Resampling, not flipping: a resampled entry keeps
/// its value with probability `r` or `1 - r`.
pub fn plant_factorization(spec: &PlantSpec, seed: u64) -> Result<Planted> {
    for (name, v) in [
        ("pattern density", spec.pattern_density),
        ("assignment density", spec.assign_density),
        ("epsilon", spec.epsilon),
        ("r", spec.r),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = BinaryMatrix::from_fn(spec.k, spec.d, |_, _| rng.gen_bool(spec.pattern_density));
    let z = BinaryMatrix::from_fn(spec.n, spec.k, |_, _| rng.gen_bool(spec.assign_density));
    let clean = boolean_product(&z, &u)?;
    let x = BinaryMatrix::from_fn(spec.n, spec.d, |i, d| {
        if rng.gen_bool(spec.epsilon) {
            rng.gen_bool(spec.r)
        } else {
            clean.get(i, d)
        }
    });
    Ok(Planted { x, z, u, clean })
}

/// Counts of ordered permission pairs by PCP value, for a real and a
/// simulated dataset, over logarithmically spaced bins.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PcpHistogram {
    /// Geometric bin centers, ascending.
    pub bin_centers: Vec<f64>,
    pub counts_real: Vec<usize>,
    pub counts_sim: Vec<usize>,
    pub underflow_threshold: f64,
}

impl PcpHistogram {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["bin_center", "count_real", "count_sim"])?;
        for ((c, a), b) in self
            .bin_centers
            .iter()
            .zip(&self.counts_real)
            .zip(&self.counts_sim)
        {
            w.write_record([format!("{c:.6e}"), a.to_string(), b.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numeric(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn bin_index(value: f64, bins: usize) -> usize {
    if value < PCP_UNDERFLOW {
        return 0;
    }
    let lo = PCP_UNDERFLOW.log10();
    let pos = (value.log10() - lo) / (0.0 - lo) * bins as f64;
    (pos.floor().max(0.0) as usize).min(bins - 1)
}

/// Histogram of off-diagonal PCP values. Bin edges are equally spaced in
/// `log10` over `[0.001, 1]`; smaller values (including the zeros of
/// never-requested permissions) count in the lowest bin, so both datasets
/// always contribute `D * (D - 1)` pairs.
pub fn pcp_histogram(pcp_real: &[Vec<f64>], pcp_sim: &[Vec<f64>], bins: usize) -> Result<PcpHistogram> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let d = pcp_real.len();
    if pcp_sim.len() != d
        || pcp_real.iter().any(|r| r.len() != d)
        || pcp_sim.iter().any(|r| r.len() != d)
    {
        return Err(Error::Dimension("PCP matrices must be square and equal-sized".into()));
    }
    let lo = PCP_UNDERFLOW.log10();
    let width = -lo / bins as f64;
    let bin_centers = (0..bins)
        .map(|b| 10f64.powf(lo + (b as f64 + 0.5) * width))
        .collect();
    let count = |m: &[Vec<f64>]| {
        let mut c = vec![0usize; bins];
        for (s, row) in m.iter().enumerate() {
            for (t, &v) in row.iter().enumerate() {
                if s != t {
                    c[bin_index(v, bins)] += 1;
                }
            }
        }
        c
    };
    Ok(PcpHistogram {
        bin_centers,
        counts_real: count(pcp_real),
        counts_sim: count(pcp_sim),
        underflow_threshold: PCP_UNDERFLOW,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{average_pcp, pcp_matrix};

    #[test]
    fn marginals_of_simple_columns() {
        let x = BinaryMatrix::from_rows(&[
            vec![true, true],
            vec![true, false],
            vec![true, true],
            vec![true, false],
        ])
        .unwrap();
        assert_eq!(marginal_probs(&x).unwrap(), vec![1.0, 0.5]);
        assert!(marginal_probs(&BinaryMatrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn degenerate_request_probabilities() {
        let x = simulate_independent(&[0.0, 1.0], 500, 3).unwrap();
        let cc = x.column_counts();
        assert_eq!(cc, vec![0, 500]);
        assert!(simulate_independent(&[1.5], 1, 0).is_err());
    }

    #[test]
    fn simulation_is_seeded() {
        let p = [0.2, 0.7, 0.4];
        assert_eq!(
            simulate_independent(&p, 100, 11).unwrap(),
            simulate_independent(&p, 100, 11).unwrap()
        );
        assert_ne!(
            simulate_independent(&p, 100, 11).unwrap(),
            simulate_independent(&p, 100, 12).unwrap()
        );
    }

    #[test]
    fn column_means_within_three_sigma() {
        let p = [0.3, 0.05, 0.9];
        let n = 100_000;
        let m = marginal_probs(&simulate_independent(&p, n, 5).unwrap()).unwrap();
        for (got, want) in m.iter().zip(p) {
            let sigma = (want * (1.0 - want) / n as f64).sqrt();
            assert!((got - want).abs() < 3.0 * sigma, "{got} vs {want}");
        }
        assert!((m[0] - 0.3).abs() < 0.01);
    }

    #[test]
    fn noiseless_plant_equals_product() {
        let spec = PlantSpec {
            n: 300,
            d: 20,
            k: 4,
            pattern_density: 0.25,
            assign_density: 0.3,
            epsilon: 0.0,
            r: 0.5,
        };
        let p = plant_factorization(&spec, 1).unwrap();
        assert_eq!(p.x, boolean_product(&p.z, &p.u).unwrap());
        assert_eq!(p.x, p.clean);
    }

    #[test]
    fn pure_noise_plant_has_column_means_near_r() {
        let spec = PlantSpec {
            n: 20_000,
            d: 10,
            k: 3,
            pattern_density: 0.5,
            assign_density: 0.5,
            epsilon: 1.0,
            r: 0.2,
        };
        let p = plant_factorization(&spec, 2).unwrap();
        for m in marginal_probs(&p.x).unwrap() {
            assert!((m - 0.2).abs() < 0.015);
        }
    }

    #[test]
    fn noisy_plant_differs_from_product_at_half_epsilon() {
        // Each entry is resampled w.p. eps and then disagrees w.p. 1/2.
        let spec = PlantSpec::benchmark();
        let p = plant_factorization(&spec, 3).unwrap();
        let diff = crate::matrix::hamming_distance(&p.x, &p.clean).unwrap();
        let frac = diff as f64 / (spec.n * spec.d) as f64;
        assert!((frac - 0.025).abs() < 0.005, "{frac}");
    }

    #[test]
    fn histogram_edge_cases() {
        let zero = vec![vec![0.0; 4]; 4];
        let h = pcp_histogram(&zero, &zero, 20).unwrap();
        assert_eq!(h.counts_real[0], 12);
        assert_eq!(h.counts_real.iter().sum::<usize>(), 12);
        assert_eq!(h.counts_real, h.counts_sim);
        assert_eq!(h.bin_centers.len(), 20);
        assert!(h.bin_centers.windows(2).all(|w| w[0] < w[1]));
        assert!(h.bin_centers[0] > 0.001 && *h.bin_centers.last().unwrap() < 1.0);

        let ones = vec![vec![1.0; 3]; 3];
        let h = pcp_histogram(&ones, &zero[..3].iter().map(|r| r[..3].to_vec()).collect::<Vec<_>>(), 5)
            .unwrap();
        assert_eq!(h.counts_real[4], 6);
        assert_eq!(h.counts_sim[0], 6);
        assert!(pcp_histogram(&ones, &zero, 5).is_err());
        assert!(pcp_histogram(&ones, &ones, 0).is_err());
    }

    #[test]
    fn histogram_bins_are_log_spaced() {
        assert_eq!(bin_index(0.0005, 3), 0);
        assert_eq!(bin_index(0.001, 3), 0);
        assert_eq!(bin_index(0.011, 3), 1);
        assert_eq!(bin_index(0.5, 3), 2);
        assert_eq!(bin_index(1.0, 3), 2);
    }

    #[test]
    fn structured_data_has_higher_average_pcp_than_its_null_model() {
        let p = plant_factorization(&PlantSpec::benchmark(), 4).unwrap();
        let marg = marginal_probs(&p.x).unwrap();
        let sim = simulate_independent(&marg, p.x.rows(), 5).unwrap();
        let real = average_pcp(&pcp_matrix(&p.x)).value;
        let null = average_pcp(&pcp_matrix(&sim)).value;
        assert!(real > null, "{real} <= {null}");
    }
}
