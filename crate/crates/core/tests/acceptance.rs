//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.
//!
//! Frozen regression values live in `tests/fixtures/`. Run with
//! `SSRLAB_BLESS=1` to rewrite them after a verified change.

#![allow(clippy::needless_range_loop)] // the oracles are index loops on purpose

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssrlab::affinity::{compute_affinity, AffinityMode, StateVector, StateWindow};
use ssrlab::error::Error;
use ssrlab::grassmann::{
    orthonormalize, principal_angles, projection_distance, random_orthogonal, random_subspace,
    span_membership_residual, SubspacePoint,
};
use ssrlab::harness::{
    ablate, run_experiment, ExperimentConfig, Method, RESULTS_CSV, SUMMARY_JSON,
};
use ssrlab::metrics::{tail_len, AblationRow};
use ssrlab::regularizer::{ema_fuse, SsrConfig, SsrState};
use ssrlab::synth::{NoiseModel, TrajectoryConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn blessing() -> bool {
    std::env::var_os("SSRLAB_BLESS").is_some()
}

fn uniform_window(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> (StateWindow, Vec<Vec<f64>>) {
    let rows: Vec<Vec<f64>> = (0..len)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let states = rows
        .iter()
        .map(|r| StateVector::new(r.clone()).unwrap())
        .collect();
    (StateWindow::from_states(states).unwrap(), rows)
}

fn row_convexity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut negative = 0usize;
    for _ in 0..10_000 {
        let d = rng.random_range(2..=64);
        let l = rng.random_range(1..=65);
        let (w, _) = uniform_window(&mut rng, l, d);
        let c = compute_affinity(&w, AffinityMode::Softmax, (d as f64).sqrt())
            .map_err(|e| e.to_string())?;
        for i in 0..l {
            let mut s = 0.0;
            for j in 0..l {
                let x = c.get(i, j);
                if x.is_nan() || x < 0.0 {
                    negative += 1;
                }
                s += x;
            }
            worst = worst.max((s - 1.0).abs());
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-9 && negative == 0 && elapsed < Duration::from_secs(5),
        format!("worst |row sum - 1| = {worst:.2e}, negative entries = {negative}, {elapsed:.2?}"),
    )
}

/// Straight double loops; shares nothing with the library.
fn naive_affinity(rows: &[Vec<f64>], mode: AffinityMode, tau: f64) -> Option<Vec<Vec<f64>>> {
    let l = rows.len();
    let mut out = vec![vec![0.0; l]; l];
    for i in 0..l {
        let mut phi = vec![0.0; l];
        for j in 0..l {
            let mut s = 0.0;
            for k in 0..rows[i].len() {
                s += rows[i][k] * rows[j][k];
            }
            phi[j] = s;
        }
        match mode {
            AffinityMode::Softmax => {
                let mut m = f64::NEG_INFINITY;
                for &p in &phi {
                    m = m.max(p);
                }
                let mut z = 0.0;
                for j in 0..l {
                    out[i][j] = ((phi[j] - m) / tau).exp();
                    z += out[i][j];
                }
                for j in 0..l {
                    out[i][j] /= z;
                }
            }
            AffinityMode::RawSum => {
                let mut z = 0.0;
                for &p in &phi {
                    z += p;
                }
                if z.abs() < 1e-12 {
                    return None;
                }
                for j in 0..l {
                    out[i][j] = phi[j] / z;
                }
            }
        }
    }
    Some(out)
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut compared = [0usize; 2];
    let mut skipped = 0usize;
    for _ in 0..1000 {
        let l = rng.random_range(1..=5);
        let d = rng.random_range(1..=4);
        let (w, rows) = uniform_window(&mut rng, l, d);
        let tau = rng.random_range(0.25..4.0);
        for (mi, mode) in [AffinityMode::Softmax, AffinityMode::RawSum]
            .into_iter()
            .enumerate()
        {
            let lib = compute_affinity(&w, mode, tau);
            let naive = naive_affinity(&rows, mode, tau);
            match (lib, naive) {
                (Ok(c), Some(n)) => {
                    for i in 0..l {
                        for j in 0..l {
                            worst = worst.max((c.get(i, j) - n[i][j]).abs());
                        }
                    }
                    compared[mi] += 1;
                }
                (Err(Error::DegenerateRow { .. }), _) if mode == AffinityMode::RawSum => {
                    skipped += 1
                }
                (Ok(_), None) => return Err("library accepted a row the oracle rejects".into()),
                (Err(e), _) => return Err(format!("{mode}: {e}")),
            }
        }
    }
    check(
        worst <= 1e-12 && compared[0] == 1000,
        format!(
            "worst deviation {worst:.2e} over {} softmax + {} raw-sum windows ({skipped} degenerate skipped)",
            compared[0], compared[1]
        ),
    )
}

fn span_containment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut steps = 0usize;
    while steps < 1000 {
        let k = rng.random_range(1..=8);
        let d = rng.random_range(k + 2..=24);
        let mode = if rng.random_bool(0.5) {
            AffinityMode::Softmax
        } else {
            AffinityMode::RawSum
        };
        let mut ssr = SsrState::new(SsrConfig {
            window_k: k,
            mode,
            ..SsrConfig::default()
        })
        .unwrap();
        for _ in 0..25 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
            let out = match ssr.step(StateVector::new(x).unwrap()) {
                Ok(o) => o,
                Err(Error::DegenerateRow { .. }) => continue,
                Err(e) => return Err(e.to_string()),
            };
            let w = ssr.window().to_matrix().transpose();
            let span = orthonormalize(&w).map_err(|e| e.to_string())?;
            worst = worst.max(span_membership_residual(out.corrected.as_vector(), &span).unwrap());
            steps += 1;
        }
    }
    check(
        worst < 1e-9,
        format!("worst residual {worst:.2e} over {steps} steps"),
    )
}

fn identity_calibrations() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut single_ok = true;
    let mut fixed: f64 = 0.0;
    let mut ema_ok = true;
    for trial in 0..200 {
        let d = rng.random_range(1..=32);
        let x = StateVector::new((0..d).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
        let mode = if trial % 2 == 0 {
            AffinityMode::Softmax
        } else {
            AffinityMode::RawSum
        };
        let cfg = SsrConfig {
            window_k: rng.random_range(1..=16),
            mode,
            ..SsrConfig::default()
        };
        let mut ssr = SsrState::new(cfg).unwrap();
        let first = ssr.step(x.clone()).unwrap();
        single_ok &= first.corrected.as_slice() == x.as_slice();
        for _ in 0..40 {
            let out = ssr.step(x.clone()).unwrap();
            fixed = fixed.max(out.corrected.distance(&x).unwrap());
        }
        let y = StateVector::new((0..d).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
        ema_ok &= ema_fuse(&x, &y, 1.0).unwrap().as_slice() == x.as_slice();
        ema_ok &= ema_fuse(&x, &y, 0.0).unwrap().as_slice() == y.as_slice();
    }
    check(
        single_ok && fixed <= 1e-10 && ema_ok,
        format!("single-frame bitwise = {single_ok}, constant-stream drift {fixed:.2e}, ema endpoints exact = {ema_ok}"),
    )
}

fn metric_axioms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut asym = 0usize;
    let mut triangle: f64 = 0.0;
    let mut sines: f64 = 0.0;
    for _ in 0..10_000 {
        let n = rng.random_range(2..=12);
        let r = rng.random_range(1..n);
        let a = random_subspace(&mut rng, n, r).unwrap();
        let b = random_subspace(&mut rng, n, r).unwrap();
        let c = random_subspace(&mut rng, n, r).unwrap();
        let ab = projection_distance(&a, &b).unwrap();
        if ab != projection_distance(&b, &a).unwrap() {
            asym += 1;
        }
        let excess =
            projection_distance(&a, &c).unwrap() - ab - projection_distance(&b, &c).unwrap();
        triangle = triangle.max(excess);
        let theta = principal_angles(&a, &b).unwrap();
        let s2: f64 = theta.angles().iter().map(|t| t.sin().powi(2)).sum();
        sines = sines.max((ab * ab - s2).abs());
    }
    let mut invariance: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=16);
        let r = rng.random_range(1..n);
        let u = random_subspace(&mut rng, n, r).unwrap();
        let q: DMatrix<f64> = random_orthogonal(&mut rng, r);
        let ur = SubspacePoint::from_orthonormal(u.basis() * q).unwrap();
        invariance = invariance.max(projection_distance(&u, &ur).unwrap());
    }
    check(
        asym == 0 && triangle <= 1e-9 && invariance < 1e-10 && sines <= 1e-9,
        format!(
            "asymmetric pairs {asym}, triangle excess {triangle:.2e}, d(U,UR) {invariance:.2e}, |d^2 - sum sin^2| {sines:.2e}"
        ),
    )
}

fn static_gaussian_config(trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        scenario: TrajectoryConfig {
            ambient_dim: 64,
            rank: 4,
            length: 256,
            speed: 0.0,
            ..TrajectoryConfig::default()
        },
        noise: NoiseModel::gaussian(0.1),
        methods: vec![Method::Ssr, Method::Passthrough],
        ssr: SsrConfig {
            window_k: 8,
            mode: AffinityMode::Softmax,
            ..SsrConfig::default()
        },
        trials,
        ..ExperimentConfig::default()
    }
}

/// Compares against a frozen value, or writes it when blessing.
fn frozen(name: &str, text: &str) -> Result<Option<String>, String> {
    let path = fixtures().join(name);
    if blessing() {
        std::fs::write(&path, text).map_err(|e| e.to_string())?;
        return Ok(None);
    }
    std::fs::read_to_string(&path).map(Some).map_err(|e| {
        format!(
            "missing fixture {}: {e} (run with SSRLAB_BLESS=1)",
            path.display()
        )
    })
}

fn parse_floats(text: &str) -> Vec<f64> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter_map(|t| t.parse().ok())
        .collect()
}

fn denoising_direction() -> Outcome {
    let start = Instant::now();
    let bundle = run_experiment(&static_gaussian_config(100), None).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let ssr = bundle.method(Method::Ssr).unwrap();
    let pass = bundle.method(Method::Passthrough).unwrap();
    let wins = ssr
        .trials
        .iter()
        .zip(&pass.trials)
        .filter(|(s, p)| s.summary.mean_corrected_error < p.summary.mean_corrected_error)
        .count();
    let ratio = ssr.aggregate.mean.improvement_ratio;
    let regression = match frozen(
        "static_gaussian_improvement.txt",
        &format!("{ratio:.17e}\n"),
    )? {
        None => "fixture written".to_string(),
        Some(text) => {
            let want = parse_floats(&text)[0];
            if (ratio - want).abs() > 1e-12 {
                return Err(format!(
                    "improvement ratio {ratio:.15} drifted from frozen {want:.15}"
                ));
            }
            format!("matches frozen {want:.12}")
        }
    };
    check(
        wins >= 95 && elapsed < Duration::from_secs(30),
        format!("ssr wins {wins}/100, improvement ratio {ratio:.6} ({regression}), {elapsed:.2?}"),
    )
}

fn ablation_shape() -> Outcome {
    let start = Instant::now();
    let sizes = [2, 4, 8, 16, 32, 64];
    let rows = ablate(&static_gaussian_config(100), &sizes, None).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let at = |k: usize| -> AblationRow { *rows.iter().find(|r| r.k == k).unwrap() };
    let (r2, r4, r8, r16, r64) = (at(2), at(4), at(8), at(16), at(64));
    let gains = r4.mean_improvement_ratio > r2.mean_improvement_ratio
        && r8.mean_improvement_ratio > r4.mean_improvement_ratio;
    let pooled = ((r16.std.powi(2) + r64.std.powi(2)) / 2.0).sqrt();
    let saturates = r64.mean_improvement_ratio <= r16.mean_improvement_ratio + pooled;

    let table: String = rows
        .iter()
        .map(|r| format!("{},{:.17e},{:.17e}\n", r.k, r.mean_improvement_ratio, r.std))
        .collect();
    if let Some(text) = frozen("window_ablation.csv", &table)? {
        let want = parse_floats(&text);
        let got = parse_floats(&table);
        if want.len() != got.len() || want.iter().zip(&got).any(|(a, b)| (a - b).abs() > 1e-12) {
            return Err("ablation table drifted from the frozen fixture".into());
        }
    }
    let shown: Vec<String> = rows
        .iter()
        .map(|r| format!("k={}:{:.4}", r.k, r.mean_improvement_ratio))
        .collect();
    check(
        gains && saturates && elapsed < Duration::from_secs(180),
        format!(
            "{} (pooled std 16/64 {pooled:.4}), {elapsed:.2?}",
            shown.join(" ")
        ),
    )
}

fn drift_scaling() -> Outcome {
    let cfg = ExperimentConfig {
        scenario: TrajectoryConfig {
            length: 400,
            ..static_gaussian_config(1).scenario
        },
        noise: NoiseModel::drift(0.05),
        trials: 200,
        ..static_gaussian_config(200)
    };
    let bundle = run_experiment(&cfg, None).map_err(|e| e.to_string())?;
    let ssr = bundle.method(Method::Ssr).unwrap();
    let pass = bundle.method(Method::Passthrough).unwrap();
    let mean_at = |t: usize| {
        pass.trials
            .iter()
            .map(|tr| tr.records[t - 1].raw_error)
            .sum::<f64>()
            / pass.trials.len() as f64
    };
    let ratio = mean_at(400) / mean_at(100);
    let wins = ssr
        .trials
        .iter()
        .zip(&pass.trials)
        .filter(|(s, p)| s.summary.tail_error_mean < p.summary.tail_error_mean)
        .count();
    check(
        (ratio / 2.0 - 1.0).abs() <= 0.15 && wins * 10 >= 9 * 200,
        format!(
            "error(400)/error(100) = {ratio:.4}, ssr tail below passthrough in {wins}/200 seeds (tail = last {} frames)",
            tail_len(400)
        ),
    )
}

fn run_cli(args: &[&str], threads: Option<&str>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ssrlab"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("SSRLAB_THREADS", t),
        None => cmd.env_remove("SSRLAB_THREADS"),
    };
    cmd.output().expect("spawn ssrlab")
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(
        &cfg_path,
        "scenario.n = 32\nscenario.r = 3\nscenario.length = 120\nscenario.speed = 0.5\n\
         noise.kind = burst\nnoise.burst_prob = 0.05\nnoise.burst_scale = 5\n\
         run.methods = ssr,ema,passthrough\nrun.trials = 8\n\
         run.emit_heatmaps = true\nrun.heatmap_frames = 0,60,119\n",
    )
    .map_err(|e| e.to_string())?;
    let mut payloads = Vec::new();
    for (i, threads) in ["1", "4"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let o = run_cli(
            &[
                "simulate",
                "--config",
                cfg_path.to_str().unwrap(),
                "--output-dir",
                out.to_str().unwrap(),
            ],
            Some(threads),
        );
        if !o.status.success() {
            return Err(format!(
                "simulate failed: {}",
                String::from_utf8_lossy(&o.stderr)
            ));
        }
        let read = |f: &str| std::fs::read(out.join(f)).unwrap_or_default();
        payloads.push((
            read(RESULTS_CSV),
            read(SUMMARY_JSON),
            read("affinity_f00060.csv"),
        ));
    }
    let (a, b) = (&payloads[0], &payloads[1]);
    let nonempty = !a.0.is_empty() && !a.1.is_empty() && !a.2.is_empty();
    check(
        nonempty && a == b,
        format!(
            "SSRLAB_THREADS=1 vs 4: csv {} bytes identical = {}, json {} bytes identical = {}, heatmap identical = {}",
            a.0.len(),
            a.0 == b.0,
            a.1.len(),
            a.1 == b.1,
            a.2 == b.2
        ),
    )
}

fn degeneracy_handling() -> Outcome {
    // r = 1 and a half-turn per frame flip the clean state's sign each frame,
    // so the second frame's similarity row sums to exactly zero
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg_path = dir.path().join("degenerate.cfg");
    std::fs::write(
        &cfg_path,
        "scenario.n = 2\nscenario.r = 1\nscenario.length = 8\nscenario.coeff_speed = 3.141592653589793\n\
         noise.sigma = 0\nssr.mode = raw-sum\nssr.window_k = 2\nrun.methods = passthrough,ssr\n",
    )
    .map_err(|e| e.to_string())?;
    let out = dir.path().join("out");
    let o = run_cli(
        &[
            "simulate",
            "--config",
            cfg_path.to_str().unwrap(),
            "--output-dir",
            out.to_str().unwrap(),
        ],
        None,
    );
    let stderr = String::from_utf8_lossy(&o.stderr);
    let code = o.status.code();
    let named = stderr.contains("method=ssr trial=0 frame=1");
    check(
        code == Some(3) && named && stderr.contains("degenerate"),
        format!("exit code {code:?}, stderr: {}", stderr.trim()),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("affinity row convexity", row_convexity),
        ("oracle equivalence", oracle_equivalence),
        ("span containment", span_containment),
        ("identity calibrations", identity_calibrations),
        ("projection metric axioms", metric_axioms),
        ("denoising direction", denoising_direction),
        ("window ablation shape", ablation_shape),
        ("drift scaling", drift_scaling),
        ("determinism across thread counts", determinism),
        ("degeneracy handling", degeneracy_handling),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} [{tag}] {name}: {detail}", i + 1);
    }
    println!(
        "acceptance: {}/{} passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
