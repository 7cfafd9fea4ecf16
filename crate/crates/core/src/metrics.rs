//! Scoring a corrected stream against its clean ground truth.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affinity::{StateVector, StateWindow};
use crate::error::{Error, Result};
use crate::grassmann::span_membership_residual;
use crate::parallel::map_indexed;
use crate::regularizer::{Correction, SsrConfig, SsrState, StreamCorrector};
use crate::synth::{derive_seed, generate_scenario, NoiseModel, ScenarioFrame, TrajectoryConfig};

const RATIO_EPS: f64 = 1e-12;
/// Share of the stream, counted from the end, that `tail_error_mean` covers.
pub const TAIL_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub frame: usize,
    /// `||noisy - clean||`
    pub raw_error: f64,
    /// `||corrected - clean||`
    pub corrected_error: f64,
    /// Relative distance of the corrected state from the truth subspace.
    pub subspace_residual: f64,
    pub se_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mean_raw_error: f64,
    pub mean_corrected_error: f64,
    pub improvement_ratio: f64,
    pub tail_error_mean: f64,
    pub win_fraction: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Number of trailing frames averaged by `tail_error_mean`.
pub fn tail_len(frames: usize) -> usize {
    if frames == 0 {
        0
    } else {
        ((frames as f64 * TAIL_FRACTION).ceil() as usize).max(1)
    }
}

/// Aggregates per-frame records into a summary.
///
/// `improvement_ratio = (mean_raw - mean_corrected) / max(mean_raw, 1e-12)`,
/// which is `1 - mean_corrected / mean_raw` whenever there is raw error to
/// remove and exactly zero whenever the corrector changed nothing.
pub fn summarize(records: &[StepRecord]) -> RunSummary {
    let mean_raw_error = mean(records.iter().map(|r| r.raw_error));
    let mean_corrected_error = mean(records.iter().map(|r| r.corrected_error));
    let improvement_ratio = (mean_raw_error - mean_corrected_error) / mean_raw_error.max(RATIO_EPS);
    let tail = &records[records.len() - tail_len(records.len())..];
    let tail_error_mean = mean(tail.iter().map(|r| r.corrected_error));
    let wins = records
        .iter()
        .filter(|r| r.corrected_error < r.raw_error)
        .count();
    let win_fraction = if records.is_empty() {
        0.0
    } else {
        wins as f64 / records.len() as f64
    };
    RunSummary {
        mean_raw_error,
        mean_corrected_error,
        improvement_ratio,
        tail_error_mean,
        win_fraction,
    }
}

/// Per-frame records and their summary. `se_residuals`, when given, is copied
/// into the records; otherwise they are zero.
pub fn score_run(
    frames: &[ScenarioFrame],
    corrected: &[StateVector],
    se_residuals: Option<&[f64]>,
) -> Result<(Vec<StepRecord>, RunSummary)> {
    if frames.len() != corrected.len() {
        return Err(Error::LengthMismatch {
            left: frames.len(),
            right: corrected.len(),
        });
    }
    if let Some(se) = se_residuals {
        if se.len() != frames.len() {
            return Err(Error::LengthMismatch {
                left: frames.len(),
                right: se.len(),
            });
        }
    }
    let records = frames
        .iter()
        .zip(corrected)
        .enumerate()
        .map(|(t, (f, c))| {
            Ok(StepRecord {
                frame: t,
                raw_error: f.noisy_state.distance(&f.clean_state)?,
                corrected_error: c.distance(&f.clean_state)?,
                subspace_residual: span_membership_residual(c.as_vector(), &f.truth_subspace)?,
                se_residual: se_residuals.map_or(0.0, |s| s[t]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&records);
    Ok((records, summary))
}

/// Share of the window's energy outside its top `r` singular directions.
pub fn singular_tail_energy(w: &StateWindow, r: usize) -> Result<f64> {
    let m: DMatrix<f64> = w.to_matrix();
    let limit = m.nrows().min(m.ncols());
    if r == 0 || r >= limit {
        return Err(Error::RankParamInvalid { r, limit });
    }
    let mut energies: Vec<f64> = m.singular_values().iter().map(|s| s * s).collect();
    energies.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = energies.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let tail: f64 = energies[r..].iter().sum();
    Ok((tail / total).clamp(0.0, 1.0))
}

/// A failure while streaming, tagged with the frame that raised it.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("frame {frame}: {source}")]
pub struct StreamError {
    pub frame: usize,
    #[source]
    pub source: Error,
}

/// Feeds every noisy state through `corrector` in arrival order.
pub fn drive_stream<C: StreamCorrector + ?Sized>(
    frames: &[ScenarioFrame],
    corrector: &mut C,
) -> std::result::Result<Vec<Correction>, StreamError> {
    frames
        .iter()
        .enumerate()
        .map(|(t, f)| {
            corrector
                .correct(f.noisy_state.clone())
                .map_err(|source| StreamError { frame: t, source })
        })
        .collect()
}

/// Shared setup of a window-size sweep; only `ssr.window_k` varies.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationBase {
    pub scenario: TrajectoryConfig,
    pub noise: NoiseModel,
    pub ssr: SsrConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub k: usize,
    pub mean_improvement_ratio: f64,
    /// Sample standard deviation across trials (zero for a single trial).
    pub std: f64,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let m = mean(values.iter().copied());
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    (m, var.sqrt())
}

fn ssr_trial(base: &AblationBase, k: usize, trial: usize) -> Result<RunSummary> {
    let scenario = TrajectoryConfig {
        seed: derive_seed(base.scenario.seed, trial as u64),
        ..base.scenario.clone()
    };
    let frames = generate_scenario(&scenario, &base.noise)?;
    let mut ssr = SsrState::new(SsrConfig {
        window_k: k,
        ..base.ssr.clone()
    })?;
    let out = drive_stream(&frames, &mut ssr).map_err(|e| e.source)?;
    let corrected: Vec<StateVector> = out.into_iter().map(|c| c.corrected).collect();
    Ok(score_run(&frames, &corrected, None)?.1)
}

/// One row per window size, each averaging `trials` seeded runs.
///
/// Trial `i` uses the scenario seed `derive_seed(base seed, i)` for every
/// window size, so rows differ only in `k`.
pub fn ablate_window(
    sizes: &[usize],
    base: &AblationBase,
    trials: usize,
    threads: Option<usize>,
) -> Result<Vec<AblationRow>> {
    if sizes.is_empty() {
        return Err(Error::InvalidParameter("no window sizes given".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    sizes
        .iter()
        .map(|&k| {
            let ratios = map_indexed(trials, threads, |i| {
                ssr_trial(base, k, i).map(|s| s.improvement_ratio)
            })?
            .into_iter()
            .collect::<Result<Vec<f64>>>()?;
            let (m, s) = mean_std(&ratios);
            Ok(AblationRow {
                k,
                mean_improvement_ratio: m,
                std: s,
            })
        })
        .collect()
}
