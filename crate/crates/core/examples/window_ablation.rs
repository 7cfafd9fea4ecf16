// How the SSR window size trades noise averaging against lag.

use ssrlab::harness::{ablate, ExperimentConfig};
use ssrlab::synth::TrajectoryConfig;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig {
        scenario: TrajectoryConfig {
            ambient_dim: 32,
            rank: 4,
            length: 128,
            ..TrajectoryConfig::default()
        },
        trials: 10,
        ..ExperimentConfig::default()
    };
    let rows = ablate(&cfg, &[2, 4, 8, 16, 32], None)?;
    println!("{:>4} {:>12} {:>10}", "k", "improvement", "std");
    for r in rows {
        println!(
            "{:>4} {:>12.4} {:>10.4}",
            r.k, r.mean_improvement_ratio, r.std
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().expect("window ablation");
}
