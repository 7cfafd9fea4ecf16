// SSR against EMA and passthrough on one noisy stream.

use ssrlab::metrics::{drive_stream, score_run};
use ssrlab::regularizer::{EmaFilter, Passthrough, SsrConfig, SsrState, StreamCorrector};
use ssrlab::synth::{generate_scenario, NoiseModel, TrajectoryConfig};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = TrajectoryConfig {
        ambient_dim: 32,
        rank: 3,
        length: 128,
        speed: 0.3,
        ..TrajectoryConfig::default()
    };
    let frames = generate_scenario(&scenario, &NoiseModel::gaussian(0.1))?;

    let mut ssr = SsrState::new(SsrConfig::default())?;
    let mut ema = EmaFilter::new(0.5)?;
    let correctors: [(&str, &mut dyn StreamCorrector); 3] = [
        ("passthrough", &mut Passthrough),
        ("ema", &mut ema),
        ("ssr", &mut ssr),
    ];

    println!(
        "{:<12} {:>10} {:>10} {:>10}",
        "method", "raw", "corrected", "improve"
    );
    for (name, c) in correctors {
        let out = drive_stream(&frames, c)?;
        let corrected: Vec<_> = out.into_iter().map(|c| c.corrected).collect();
        let (_, s) = score_run(&frames, &corrected, None)?;
        println!(
            "{name:<12} {:>10.4} {:>10.4} {:>10.4}",
            s.mean_raw_error, s.mean_corrected_error, s.improvement_ratio
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().expect("streaming correction");
}
