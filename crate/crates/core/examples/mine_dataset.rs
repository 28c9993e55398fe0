//! The full mining workflow on an application table: split by reputation,
//! fit patterns on the high-reputation training applications, transfer
//! them to the held-out and low-reputation applications, and compare how
//! well each set is explained.
//!
//! ```text
//! cargo run --release --example mine_dataset -- [apps.csv] [K] [reputation.toml]
//! ```

use std::path::PathBuf;

use permission_patterns::evaluation::{error_rates, pattern_summary, DEFAULT_KL_SMOOTHING};
use permission_patterns::ingest::{filter_reputation, load_dataset, Format, ReputationCriteria};
use permission_patterns::{fit, FitConfig, PatternClassifier};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data").join(name)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| data("sample_apps.csv"));
    let k: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);
    let criteria_path = args.next().map(PathBuf::from).unwrap_or_else(|| data("reputation.toml"));

    let ds = load_dataset(&path, Format::from_path(&path).unwrap_or(Format::Csv))?;
    let criteria = ReputationCriteria::load(&criteria_path)?;
    let split = filter_reputation(&ds, &criteria)?;
    println!(
        "{} applications: {} high-reputation for training, {} held out, {} low-reputation",
        ds.len(),
        split.train.len(),
        split.test_high.len(),
        split.test_low.len()
    );

    let train = split.train.matrix();
    let model = fit(&train, k, &FitConfig::default())?.sorted_by_frequency();
    println!(
        "fitted K = {k}: noise fraction {:.3}, noise request rate {:.3}",
        model.epsilon, model.r
    );

    let categories = split.train.categories();
    let summary = pattern_summary(
        &model.z,
        &model.u,
        ds.vocabulary(),
        Some(&categories),
        DEFAULT_KL_SMOOTHING,
    )?;
    println!("\npattern  apps    KL bits  permissions");
    for row in &summary {
        let kl = row.kl_bits.map_or("-".to_string(), |v| format!("{v:.2}"));
        println!(
            "  {:>5}  {:>5.1}%  {:>7}  {}",
            row.pattern,
            100.0 * row.frequency,
            kl,
            row.permissions.join(", ")
        );
    }

    let classifier = PatternClassifier::from_factorization(&model);
    println!("\nset          apps  mean f_n  mean f_p");
    for (name, x, z) in [
        ("train", &train, model.z.clone()),
        ("test high", &split.test_high.matrix(), classifier.assign_all(&split.test_high.matrix())?),
        ("test low", &split.test_low.matrix(), classifier.assign_all(&split.test_low.matrix())?),
    ] {
        let rates = error_rates(x, &z, &model.u)?;
        println!("{name:<10} {:>6}  {:>8.3}  {:>8.3}", rates.len(), rates.mean_fn, rates.mean_fp);
    }
    Ok(())
}
