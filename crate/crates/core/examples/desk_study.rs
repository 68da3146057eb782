//! Coverage and length of every method at desk scale.
//!
//! `cargo run --release -p exact-selective --example desk_study -- [reps] [selected|full]`

use std::time::Instant;

use exact_selective::conditioning::ModelKind;
use exact_selective::study::{run_study, SimConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let reps = args
        .next()
        .map_or(100, |s| s.parse().expect("reps must be an integer"));
    let model: ModelKind = args
        .next()
        .map_or(ModelKind::Selected, |s| s.parse().expect("model"));
    let cfg = SimConfig {
        n_reps: reps,
        signal_fraction: 0.75,
        model,
        ..SimConfig::default()
    };
    let start = Instant::now();
    let report = run_study(&cfg).expect("study failed");
    println!(
        "{reps} replicates, {model} model, {:.1}s",
        start.elapsed().as_secs_f64()
    );
    for s in &report.summary.methods {
        println!(
            "{:<10} coverage {:.3} ± {:.3}  length {:.3} ± {:.3}  F1 {:.3}  |E| {:.2}  failed {}  clipped {}/{}",
            s.method.as_str(),
            s.coverage.mean,
            s.coverage.se,
            s.length.mean,
            s.length.se,
            s.f1.mean,
            s.selected_size.mean,
            s.failed_replicates,
            s.clipped_intervals,
            s.intervals
        );
    }
}
