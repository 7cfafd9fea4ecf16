//! Brute-force oracles and sampled metric axioms, runnable from the CLI.
//!
//! Each check compares the library against a deliberately naive loop
//! implementation on seeded random inputs and reports the worst deviation.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::affinity::{compute_affinity, AffinityMode, StateVector, StateWindow};
use crate::error::Result;
use crate::grassmann::{
    geodesic, principal_angles, projection_distance, random_subspace, SubspacePoint,
};
use crate::regularizer::{SsrConfig, SsrState};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.worst.is_finite() && self.worst <= self.tolerance
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:<36} worst={:.3e} tol={:.1e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfcheckReport {
    pub checks: Vec<CheckOutcome>,
}

impl SelfcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::passed)
    }
}

impl fmt::Display for SelfcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

fn random_window(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> Result<StateWindow> {
    let states = (0..len)
        .map(|_| StateVector::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect::<Result<Vec<_>>>()?;
    StateWindow::from_states(states)
}

#[allow(clippy::needless_range_loop)]
fn naive_affinity(rows: &[Vec<f64>], mode: AffinityMode, tau: f64) -> Vec<Vec<f64>> {
    let l = rows.len();
    let mut phi = vec![vec![0.0; l]; l];
    for i in 0..l {
        for j in 0..l {
            let mut s = 0.0;
            for k in 0..rows[i].len() {
                s += rows[i][k] * rows[j][k];
            }
            phi[i][j] = s;
        }
    }
    phi.into_iter()
        .map(|row| match mode {
            AffinityMode::Softmax => {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = row.iter().map(|x| ((x - m) / tau).exp()).collect();
                let z: f64 = e.iter().sum();
                e.into_iter().map(|x| x / z).collect()
            }
            AffinityMode::RawSum => {
                let z: f64 = row.iter().sum();
                row.into_iter().map(|x| x / z).collect()
            }
        })
        .collect()
}

fn affinity_oracle(rng: &mut ChaCha8Rng, mode: AffinityMode, cases: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < cases {
        let len = rng.random_range(1..=12);
        let dim = rng.random_range(2..=24);
        let w = random_window(rng, len, dim)?;
        let rows: Vec<Vec<f64>> = w.iter().map(|s| s.as_slice().to_vec()).collect();
        let tau = (dim as f64).sqrt();
        let c = match compute_affinity(&w, mode, tau) {
            Ok(c) => c,
            // near-zero raw sums are rejected by design; draw another window
            Err(_) if mode == AffinityMode::RawSum => continue,
            Err(e) => return Err(e),
        };
        let naive = naive_affinity(&rows, mode, tau);
        for (i, row) in naive.iter().enumerate() {
            // raw-sum entries are only as accurate as the row sum is well conditioned
            let scale = match mode {
                AffinityMode::Softmax => 1.0,
                AffinityMode::RawSum => row.iter().map(|x| x.abs()).sum::<f64>().max(1.0),
            };
            for (j, x) in row.iter().enumerate() {
                worst = worst.max((c.get(i, j) - x).abs() / scale);
            }
        }
        done += 1;
    }
    Ok(worst)
}

fn row_convexity(rng: &mut ChaCha8Rng, cases: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let len = rng.random_range(1..=32);
        let dim = rng.random_range(2..=64);
        let w = random_window(rng, len, dim)?;
        let c = compute_affinity(&w, AffinityMode::Softmax, (dim as f64).sqrt())?;
        for i in 0..len {
            let mut s = 0.0;
            for j in 0..len {
                let x = c.get(i, j);
                if x.is_nan() || x < 0.0 {
                    return Ok(f64::INFINITY);
                }
                s += x;
            }
            worst = worst.max((s - 1.0).abs());
        }
    }
    Ok(worst)
}

fn ssr_oracle(rng: &mut ChaCha8Rng, streams: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..streams {
        let k = rng.random_range(1..=6);
        let dim = rng.random_range(2..=10);
        let mut ssr = SsrState::new(SsrConfig {
            window_k: k,
            ..SsrConfig::default()
        })?;
        let mut history: Vec<Vec<f64>> = Vec::new();
        for _ in 0..20 {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            history.push(x.clone());
            let out = ssr.step(StateVector::new(x)?)?;
            let start = history.len().saturating_sub(k + 1);
            let window = &history[start..];
            let c = naive_affinity(window, AffinityMode::Softmax, (dim as f64).sqrt());
            let last = c.last().expect("window is never empty");
            for d in 0..dim {
                let mut y = 0.0;
                for (j, row) in window.iter().enumerate() {
                    y += last[j] * row[d];
                }
                worst = worst.max((out.corrected.as_slice()[d] - y).abs());
            }
        }
    }
    Ok(worst)
}

fn naive_projection_distance(a: &SubspacePoint, b: &SubspacePoint) -> f64 {
    let (pa, pb) = (a.projector(), b.projector());
    let n = pa.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = pa[(i, j)] - pb[(i, j)];
            s += d * d;
        }
    }
    (s / 2.0).sqrt()
}

fn subspace_pairs(rng: &mut ChaCha8Rng, cases: usize) -> Result<Vec<[SubspacePoint; 3]>> {
    (0..cases)
        .map(|_| {
            let n = rng.random_range(3..=16);
            let r = rng.random_range(1..n);
            Ok([
                random_subspace(rng, n, r)?,
                random_subspace(rng, n, r)?,
                random_subspace(rng, n, r)?,
            ])
        })
        .collect()
}

fn distance_oracle(triples: &[[SubspacePoint; 3]]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for [a, b, _] in triples {
        let d = projection_distance(a, b)?;
        worst = worst.max((d - naive_projection_distance(a, b)).abs());
        worst = worst.max((d - principal_angles(a, b)?.chordal_norm()).abs());
    }
    Ok(worst)
}

/// Worst violation among the sampled metric axioms.
fn metric_axioms(rng: &mut ChaCha8Rng, triples: &[[SubspacePoint; 3]]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for [a, b, c] in triples {
        let r = a.rank();
        let q = crate::grassmann::random_orthogonal(rng, r);
        let rebased = SubspacePoint::from_orthonormal(a.basis() * &q)?;
        worst = worst.max(projection_distance(a, &rebased)?);
        worst = worst.max((projection_distance(a, b)? - projection_distance(b, a)?).abs());
        let excess =
            projection_distance(a, c)? - projection_distance(a, b)? - projection_distance(b, c)?;
        worst = worst.max(excess.max(0.0));
    }
    Ok(worst)
}

/// Geodesic endpoints and constant-speed angle growth.
fn geodesic_check(rng: &mut ChaCha8Rng, cases: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < cases {
        let n = rng.random_range(4..=12);
        let r = rng.random_range(1..=n / 2);
        let a = random_subspace(rng, n, r)?;
        let b = random_subspace(rng, n, r)?;
        let theta = principal_angles(&a, &b)?;
        if theta.largest() > std::f64::consts::FRAC_PI_2 - 1e-3 {
            continue;
        }
        worst = worst.max(projection_distance(&geodesic(&a, &b, 0.0)?, &a)?);
        worst = worst.max(projection_distance(&geodesic(&a, &b, 1.0)?, &b)?);
        let s = rng.random_range(0.0..1.0);
        let mid = geodesic(&a, &b, s)?;
        let partial = principal_angles(&a, &mid)?;
        let want: Vec<f64> = theta.angles().iter().map(|t| s * t).collect();
        for (g, w) in partial.angles().iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
        let gram: DMatrix<f64> = mid.basis().transpose() * mid.basis();
        worst = worst.max((gram - DMatrix::identity(r, r)).abs().max());
        done += 1;
    }
    Ok(worst)
}

/// Runs every check from a fixed seed.
pub fn run(seed: u64) -> Result<SelfcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let triples = subspace_pairs(&mut rng, 200)?;
    let checks = vec![
        CheckOutcome {
            name: "softmax affinity vs naive loops",
            worst: affinity_oracle(&mut rng, AffinityMode::Softmax, 300)?,
            tolerance: 1e-12,
        },
        CheckOutcome {
            name: "raw-sum affinity vs naive loops",
            worst: affinity_oracle(&mut rng, AffinityMode::RawSum, 300)?,
            tolerance: 1e-12,
        },
        CheckOutcome {
            name: "softmax row convexity",
            worst: row_convexity(&mut rng, 500)?,
            tolerance: 1e-9,
        },
        CheckOutcome {
            name: "ssr step vs naive window product",
            worst: ssr_oracle(&mut rng, 30)?,
            tolerance: 1e-12,
        },
        CheckOutcome {
            name: "projection distance vs projectors",
            worst: distance_oracle(&triples)?,
            tolerance: 1e-10,
        },
        CheckOutcome {
            name: "metric axioms (sampled)",
            worst: metric_axioms(&mut rng, &triples)?,
            tolerance: 1e-10,
        },
        CheckOutcome {
            name: "geodesic endpoints and speed",
            worst: geodesic_check(&mut rng, 100)?,
            tolerance: 1e-8,
        },
    ];
    Ok(SelfcheckReport { checks })
}
