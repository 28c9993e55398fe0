//! Loads an application table and prints the descriptive statistics: the
//! most requested permissions, the cumulative price curve and the rating
//! histograms.
//!
//! ```text
//! cargo run --example descriptive_stats -- [apps.csv|apps.json] [top_n]
//! ```

use std::path::PathBuf;

use permission_patterns::ingest::{load_dataset, summary_stats, Format};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/sample_apps.csv"))
    });
    let top_n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10);

    let format = Format::from_path(&path).unwrap_or(Format::Csv);
    let ds = load_dataset(&path, format)?;
    let stats = summary_stats(&ds, top_n);
    println!(
        "{} applications, {} distinct permissions, {} without a rating count",
        stats.applications,
        stats.permissions,
        stats.missing_ratings
    );

    println!("\nmost requested permissions:");
    for (rank, f) in stats.top_permissions.iter().enumerate() {
        println!(
            "  {:>2}. {:<28} {:>5} apps  {:>6.2}%",
            rank + 1,
            f.permission,
            f.count,
            100.0 * f.fraction
        );
    }

    println!("\nprice curve (fraction of apps at or below each price):");
    for p in &stats.price_curve {
        println!("  {:>7.2}  {:.3}", p.price, p.cumulative_fraction);
    }

    println!("\naverage rating histogram:");
    for bin in &stats.rating_histogram {
        println!("  [{:.1}, {:.1})  {}", bin.lower, bin.upper, "#".repeat(bin.count));
    }
    println!("\nrating count histogram:");
    for bin in &stats.count_histogram {
        println!("  [{}, {})  {}", bin.lower, bin.upper, "#".repeat(bin.count));
    }
    Ok(())
}
