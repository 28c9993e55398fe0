//! Are permission requests structured, or would independent requests look
//! the same? Compares the pairwise conditional probabilities of a planted
//! dataset with a simulation that keeps each permission's request rate but
//! draws requests independently.
//!
//! ```text
//! cargo run --release --example pcp_simulation -- [seed]
//! ```

use permission_patterns::evaluation::{average_pcp, pcp_matrix};
use permission_patterns::simulator::{
    marginal_probs, pcp_histogram, plant_factorization, simulate_independent, PlantSpec,
    DEFAULT_BINS,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let planted = plant_factorization(&PlantSpec::benchmark(), seed)?;
    let x = &planted.x;

    let p = marginal_probs(x)?;
    let sim = simulate_independent(&p, x.rows(), seed.wrapping_add(1))?;
    let real_pcp = pcp_matrix(x);
    let sim_pcp = pcp_matrix(&sim);
    let real = average_pcp(&real_pcp);
    let simulated = average_pcp(&sim_pcp);
    println!(
        "average PCP over {} ordered pairs: planted data {:.4}, independent simulation {:.4}",
        real.pairs, real.value, simulated.value
    );

    let hist = pcp_histogram(&real_pcp.values, &sim_pcp.values, DEFAULT_BINS)?;
    println!("\n  bin center      real  simulated");
    for ((c, r), s) in hist.bin_centers.iter().zip(&hist.counts_real).zip(&hist.counts_sim) {
        println!("  {c:>10.4}  {r:>8}  {s:>9}");
    }
    println!(
        "(pairs below {} are counted in the lowest bin)",
        hist.underflow_threshold
    );
    Ok(())
}
