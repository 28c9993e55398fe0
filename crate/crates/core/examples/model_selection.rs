//! Picks the number of patterns by instability: for each K the data is
//! split in halves several times, both halves are factorized, and the
//! fraction of applications whose pattern assignments fail to reproduce is
//! recorded. The K with the lowest median instability wins.
//!
//! The default is a quick run on a small planted dataset with three
//! patterns. Pass `benchmark` for the full 2000 x 50, K = 5 family swept
//! over K = 2..10 (several minutes on one core).
//!
//! ```text
//! cargo run --release --example model_selection -- [quick|benchmark] [seed]
//! ```

use std::time::Instant;

use permission_patterns::selection::select_k;
use permission_patterns::simulator::{plant_factorization, PlantSpec};
use permission_patterns::FitConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let mode = args.next().unwrap_or_else(|| "quick".into());
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2);
    let (spec, ks) = match mode.as_str() {
        "quick" => (
            PlantSpec {
                n: 600,
                d: 30,
                k: 3,
                ..PlantSpec::benchmark()
            },
            (1..=6).collect::<Vec<_>>(),
        ),
        "benchmark" => (PlantSpec::benchmark(), (2..=10).collect()),
        other => return Err(format!("unknown mode `{other}`; use quick or benchmark").into()),
    };

    let planted = plant_factorization(&spec, seed)?;
    println!("planted K = {} in {} x {} (seed {seed})", spec.k, spec.n, spec.d);
    let started = Instant::now();
    let report = select_k(&planted.x, &ks, 5, &FitConfig::default().with_seed(seed))?;

    println!("\n   K  median s   std s  per split");
    for row in &report.rows {
        let values: Vec<String> = row.values.iter().map(|v| format!("{v:.3}")).collect();
        let mark = if row.k == report.selected_k { " <" } else { "" };
        println!(
            "{:>4}  {:>8.4}  {:>6.4}  {}{mark}",
            row.k,
            row.median,
            row.std,
            values.join(" ")
        );
    }
    println!("\nselected K = {} in {:.1?}", report.selected_k, started.elapsed());
    Ok(())
}
