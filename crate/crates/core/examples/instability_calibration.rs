//! Checks the scale of the instability measure: two identical assignments
//! score 0, and uniformly random assignment vectors score about 1 for every
//! K, which is what makes values comparable across K.
//!
//! ```text
//! cargo run --release --example instability_calibration -- [n] [seed]
//! ```

use permission_patterns::selection::{instability_score, match_patterns, normalization};
use permission_patterns::BinaryMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10_000);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    println!("   K   scale   identical   random");
    for k in [1, 2, 3, 5, 8, 12] {
        let z = BinaryMatrix::from_fn(n, k, |_, _| rng.gen_bool(0.5));
        let random = BinaryMatrix::from_fn(n, k, |_, _| rng.gen_bool(0.5));
        let identity: Vec<usize> = (0..k).collect();
        println!(
            "{k:>4}  {:>6.4}  {:>10.4}  {:>7.4}",
            normalization(k),
            instability_score(&z, &z, &identity)?,
            instability_score(&random, &z, &identity)?
        );
    }

    // Relabeling the patterns of one solution does not change the score
    // once the labels are aligned.
    let u = BinaryMatrix::from_fn(5, 20, |_, _| rng.gen_bool(0.3));
    let order = [3, 0, 4, 1, 2];
    let relabeled = BinaryMatrix::from_fn(5, 20, |k, d| u.get(order[k], d));
    let perm = match_patterns(&u, &relabeled)?;
    println!("\npatterns relabeled by {order:?}; recovered alignment {perm:?}");
    Ok(())
}
