// Random-walk drift: raw error grows like sqrt(t), SSR follows it.

use ssrlab::harness::{run_experiment, ExperimentConfig, Method};
use ssrlab::synth::{NoiseModel, TrajectoryConfig};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig {
        scenario: TrajectoryConfig {
            ambient_dim: 32,
            rank: 3,
            length: 400,
            ..TrajectoryConfig::default()
        },
        noise: NoiseModel::drift(0.05),
        methods: vec![Method::Passthrough, Method::Ssr],
        trials: 20,
        ..ExperimentConfig::default()
    };
    let bundle = run_experiment(&cfg, None)?;
    let pass = bundle.method(Method::Passthrough).expect("configured");
    let mean_at = |t: usize| {
        pass.trials
            .iter()
            .map(|tr| tr.records[t - 1].raw_error)
            .sum::<f64>()
            / pass.trials.len() as f64
    };
    for t in [25, 100, 400] {
        println!(
            "t={t:>3}  mean raw error {:.4}  / sqrt(t) = {:.4}",
            mean_at(t),
            mean_at(t) / (t as f64).sqrt()
        );
    }
    println!(
        "error(400) / error(100) = {:.3}",
        mean_at(400) / mean_at(100)
    );
    println!("{}", bundle.provenance.noise_label);
    print!("{}", ssrlab::harness::summary_table(&bundle));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().expect("drift scenario");
}
