// Config text in, CSV / JSON / heatmap bundle out.

use ssrlab::harness::{parse_csv, run_experiment, summary_table, write_bundle, ExperimentConfig};

const CONFIG: &str = "\
scenario.n = 24
scenario.r = 2
scenario.length = 96
scenario.speed = 0.5
noise.kind = burst
noise.sigma = 0.05
noise.burst_prob = 0.1
noise.burst_scale = 6
ssr.window_k = 6
run.methods = ssr, ema, passthrough
run.trials = 4
run.emit_heatmaps = true
run.heatmap_frames = 0, 48, 95
";

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::parse(CONFIG)?;
    let bundle = run_experiment(&cfg, Some(2))?;
    print!("{}", summary_table(&bundle));

    let dir = tempfile::tempdir()?;
    for p in write_bundle(&bundle, dir.path())? {
        println!(
            "wrote {}",
            p.file_name().unwrap_or_default().to_string_lossy()
        );
    }
    let rows = parse_csv(&std::fs::read_to_string(dir.path().join("results.csv"))?)?;
    println!("{} per-frame rows", rows.len());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().expect("run experiment");
}
