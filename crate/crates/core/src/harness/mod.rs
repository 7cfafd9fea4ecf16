//! Experiment runner: scenario x method x trial grids with deterministic
//! output.
//!
//! Trials are independent and may run on a worker pool; results are always
//! assembled by `(method, trial)` so thread count never changes the payload.

mod config;
mod output;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

pub use config::{parse_list, ExperimentConfig, Method};
pub use output::{
    csv_text, dump_ablation_csv, dump_csv, dump_heatmaps, dump_summary_json, heatmap_file_name,
    parse_csv, parse_heatmap_csv, summary_json, write_bundle, CsvRow, CSV_HEADER, RESULTS_CSV,
    RUN_META_JSON, SUMMARY_JSON,
};

use crate::affinity::{affinity_to_heatmap, Heatmap, StateVector};
use crate::error::Error;
use crate::metrics::{
    ablate_window, drive_stream, mean_std, score_run, summarize, AblationBase, AblationRow,
    RunSummary, StepRecord, StreamError,
};
use crate::parallel::map_indexed;
use crate::regularizer::{Correction, EmaFilter, Passthrough, SsrState};
use crate::synth::{derive_seed, generate_scenario, NoiseKind, ScenarioFrame, TrajectoryConfig};

/// Environment variable capping trial-level parallelism.
pub const THREADS_ENV: &str = "SSRLAB_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(
        "numeric error in method={method} trial={} frame={}: {source}",
        opt(trial),
        opt(frame)
    )]
    Numeric {
        method: String,
        trial: Option<usize>,
        frame: Option<usize>,
        #[source]
        source: Error,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn opt(v: &Option<usize>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

impl HarnessError {
    /// Process exit code: 2 config, 3 numeric degeneracy, 4 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } => 2,
            HarnessError::Numeric { .. } => 3,
            HarnessError::Io { .. } => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Reads `SSRLAB_THREADS`. Absent means sequential.
pub fn threads_from_env() -> Result<Option<usize>, HarnessError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(HarnessError::Config {
                path: THREADS_ENV.into(),
                message: format!("expected a positive integer, got `{v}`"),
            }),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub records: Vec<StepRecord>,
    pub summary: RunSummary,
}

/// Field-wise mean and sample standard deviation of trial summaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateSummary {
    pub mean: RunSummary,
    pub std: RunSummary,
}

impl AggregateSummary {
    pub fn from_trials(summaries: &[RunSummary]) -> Self {
        let field =
            |f: fn(&RunSummary) -> f64| mean_std(&summaries.iter().map(f).collect::<Vec<_>>());
        let (mr, smr) = field(|s| s.mean_raw_error);
        let (mc, smc) = field(|s| s.mean_corrected_error);
        let (ir, sir) = field(|s| s.improvement_ratio);
        let (te, ste) = field(|s| s.tail_error_mean);
        let (wf, swf) = field(|s| s.win_fraction);
        Self {
            mean: RunSummary {
                mean_raw_error: mr,
                mean_corrected_error: mc,
                improvement_ratio: ir,
                tail_error_mean: te,
                win_fraction: wf,
            },
            std: RunSummary {
                mean_raw_error: smr,
                mean_corrected_error: smc,
                improvement_ratio: sir,
                tail_error_mean: ste,
                win_fraction: swf,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodResult {
    pub method: Method,
    pub trials: Vec<TrialResult>,
    pub aggregate: AggregateSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub noise_label: String,
}

impl Provenance {
    fn for_config(cfg: &ExperimentConfig) -> Self {
        let noise_label = match cfg.noise.kind {
            NoiseKind::DriftRandomWalk => {
                "drift-random-walk (synthetic proxy for recurrent state drift)".to_string()
            }
            k => k.to_string(),
        };
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.scenario.seed,
            noise_label,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultBundle {
    pub config: ExperimentConfig,
    /// One entry per configured method, sorted by method name.
    pub methods: Vec<MethodResult>,
    /// SSR affinity of trial 0 at the requested frames.
    pub heatmaps: BTreeMap<usize, Heatmap>,
    pub provenance: Provenance,
}

impl ResultBundle {
    pub fn method(&self, m: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }
}

fn trial_scenario(cfg: &ExperimentConfig, trial: usize) -> TrajectoryConfig {
    TrajectoryConfig {
        seed: derive_seed(cfg.scenario.seed, trial as u64),
        ..cfg.scenario.clone()
    }
}

fn numeric(method: &str, trial: usize, frame: Option<usize>, source: Error) -> HarnessError {
    HarnessError::Numeric {
        method: method.to_string(),
        trial: Some(trial),
        frame,
        source,
    }
}

fn trial_frames(
    cfg: &ExperimentConfig,
    trial: usize,
) -> Result<(u64, Vec<ScenarioFrame>), HarnessError> {
    let scenario = trial_scenario(cfg, trial);
    let frames = generate_scenario(&scenario, &cfg.noise)
        .map_err(|e| numeric("scenario", trial, None, e))?;
    Ok((scenario.seed, frames))
}

fn run_method(
    cfg: &ExperimentConfig,
    method: Method,
    frames: &[ScenarioFrame],
) -> Result<Vec<Correction>, StreamError> {
    let setup = |e: Error| StreamError {
        frame: 0,
        source: e,
    };
    match method {
        Method::Ssr => drive_stream(frames, &mut SsrState::new(cfg.ssr.clone()).map_err(setup)?),
        Method::Ema => drive_stream(frames, &mut EmaFilter::new(cfg.ema_alpha).map_err(setup)?),
        Method::Passthrough => drive_stream(frames, &mut Passthrough),
    }
}

fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<TrialResult>, HarnessError> {
    let (seed, frames) = trial_frames(cfg, trial)?;
    cfg.sorted_methods()
        .into_iter()
        .map(|method| {
            let out = run_method(cfg, method, &frames)
                .map_err(|e| numeric(method.name(), trial, Some(e.frame), e.source))?;
            let se: Vec<f64> = out.iter().map(|c| c.se_residual).collect();
            let corrected: Vec<StateVector> = out.into_iter().map(|c| c.corrected).collect();
            let (records, summary) = score_run(&frames, &corrected, Some(&se))
                .map_err(|e| numeric(method.name(), trial, None, e))?;
            Ok(TrialResult {
                trial,
                seed,
                records,
                summary,
            })
        })
        .collect()
}

/// Streams every trial's scenario through every configured method and scores
/// the result. Nothing is written to disk; see [`write_bundle`].
pub fn run_experiment(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<ResultBundle, HarnessError> {
    cfg.validate()?;
    let per_trial = map_indexed(cfg.trials, threads, |t| run_trial(cfg, t))
        .map_err(|e| HarnessError::Config {
            path: THREADS_ENV.into(),
            message: e.to_string(),
        })?
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let methods = cfg
        .sorted_methods()
        .into_iter()
        .enumerate()
        .map(|(mi, method)| {
            let trials: Vec<TrialResult> = per_trial.iter().map(|t| t[mi].clone()).collect();
            let summaries: Vec<RunSummary> = trials.iter().map(|t| t.summary).collect();
            MethodResult {
                method,
                aggregate: AggregateSummary::from_trials(&summaries),
                trials,
            }
        })
        .collect();

    let heatmaps = if cfg.emit_heatmaps {
        collect_heatmaps(cfg, &cfg.heatmap_frames)?
    } else {
        BTreeMap::new()
    };

    Ok(ResultBundle {
        config: cfg.clone(),
        methods,
        heatmaps,
        provenance: Provenance::for_config(cfg),
    })
}

/// SSR affinity matrices of trial 0 at `frames`.
pub fn collect_heatmaps(
    cfg: &ExperimentConfig,
    frames: &[usize],
) -> Result<BTreeMap<usize, Heatmap>, HarnessError> {
    cfg.check_frames("frames", frames)?;
    let mut out = BTreeMap::new();
    let Some(&last) = frames.iter().max() else {
        return Ok(out);
    };
    let (_, scenario) = trial_frames(cfg, 0)?;
    let mut ssr = SsrState::new(cfg.ssr.clone()).map_err(|e| numeric("ssr", 0, None, e))?;
    for (t, f) in scenario.iter().enumerate().take(last + 1) {
        let step = ssr
            .step(f.noisy_state.clone())
            .map_err(|e| numeric("ssr", 0, Some(t), e))?;
        if frames.contains(&t) {
            out.insert(t, affinity_to_heatmap(&step.affinity));
        }
    }
    Ok(out)
}

/// Window-size ablation of the SSR method on the configured scenario.
pub fn ablate(
    cfg: &ExperimentConfig,
    sizes: &[usize],
    threads: Option<usize>,
) -> Result<Vec<AblationRow>, HarnessError> {
    cfg.validate()?;
    if sizes.is_empty() {
        return Err(HarnessError::Config {
            path: "sizes".into(),
            message: "no window sizes given".into(),
        });
    }
    if let Some(&k) = sizes.iter().find(|&&k| k == 0) {
        return Err(HarnessError::Config {
            path: "sizes".into(),
            message: format!("window size {k} must be >= 1"),
        });
    }
    let base = AblationBase {
        scenario: cfg.scenario.clone(),
        noise: cfg.noise.clone(),
        ssr: cfg.ssr.clone(),
    };
    ablate_window(sizes, &base, cfg.trials, threads).map_err(|source| HarnessError::Numeric {
        method: Method::Ssr.name().into(),
        trial: None,
        frame: None,
        source,
    })
}

/// Summary recomputed from per-frame rows, grouped the same way as a bundle.
pub fn summaries_from_rows(rows: &[CsvRow]) -> BTreeMap<String, AggregateSummary> {
    let mut grouped: BTreeMap<String, BTreeMap<usize, Vec<StepRecord>>> = BTreeMap::new();
    for r in rows {
        grouped
            .entry(r.method.clone())
            .or_default()
            .entry(r.trial)
            .or_default()
            .push(r.record);
    }
    grouped
        .into_iter()
        .map(|(m, trials)| {
            let summaries: Vec<RunSummary> = trials
                .values()
                .map(|recs| {
                    let mut recs = recs.clone();
                    recs.sort_by_key(|r| r.frame);
                    summarize(&recs)
                })
                .collect();
            (m, AggregateSummary::from_trials(&summaries))
        })
        .collect()
}

/// Fixed-width table of per-method means for the terminal.
pub fn summary_table(bundle: &ResultBundle) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:>12} {:>12} {:>12} {:>12} {:>8}",
        "method", "raw_err", "corr_err", "improve", "tail_err", "wins"
    );
    for m in &bundle.methods {
        let a = &m.aggregate.mean;
        let _ = writeln!(
            s,
            "{:<12} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>8.3}",
            m.method.name(),
            a.mean_raw_error,
            a.mean_corrected_error,
            a.improvement_ratio,
            a.tail_error_mean,
            a.win_fraction
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::NoiseModel;

    fn small(methods: Vec<Method>) -> ExperimentConfig {
        ExperimentConfig {
            scenario: TrajectoryConfig {
                ambient_dim: 12,
                rank: 2,
                length: 30,
                ..TrajectoryConfig::default()
            },
            methods,
            trials: 3,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn passthrough_summary_is_zero() {
        let b = run_experiment(&small(vec![Method::Passthrough]), None).unwrap();
        let p = b.method(Method::Passthrough).unwrap();
        assert_eq!(p.aggregate.mean.improvement_ratio, 0.0);
        assert!(p.trials.iter().all(|t| t.summary.improvement_ratio == 0.0));
    }

    #[test]
    fn static_noiseless_stream_is_reproduced() {
        let mut cfg = small(vec![Method::Ssr]);
        cfg.noise = NoiseModel::gaussian(0.0);
        cfg.scenario.speed = 0.0;
        cfg.scenario.coeff_speed = 0.0;
        let b = run_experiment(&cfg, None).unwrap();
        assert!(
            b.method(Method::Ssr)
                .unwrap()
                .aggregate
                .mean
                .mean_corrected_error
                < 1e-9
        );
    }

    #[test]
    fn methods_come_out_sorted_once_each() {
        let b = run_experiment(
            &small(vec![Method::Ssr, Method::Passthrough, Method::Ema]),
            None,
        )
        .unwrap();
        let names: Vec<&str> = b.methods.iter().map(|m| m.method.name()).collect();
        assert_eq!(names, ["ema", "passthrough", "ssr"]);
        assert!(b.methods.iter().all(|m| m.trials.len() == 3));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let cfg = small(vec![Method::Ssr, Method::Ema]);
        let a = run_experiment(&cfg, None).unwrap();
        let b = run_experiment(&cfg, Some(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_row_is_tagged_with_its_frame() {
        let mut cfg = small(vec![Method::Ssr, Method::Passthrough]);
        cfg.scenario = TrajectoryConfig {
            ambient_dim: 2,
            rank: 1,
            length: 4,
            coeff_speed: std::f64::consts::PI,
            ..TrajectoryConfig::default()
        };
        cfg.noise = NoiseModel::gaussian(0.0);
        cfg.ssr.mode = crate::affinity::AffinityMode::RawSum;
        let err = run_experiment(&cfg, None).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        match err {
            HarnessError::Numeric {
                method,
                trial,
                frame,
                source,
            } => {
                assert_eq!((method.as_str(), trial, frame), ("ssr", Some(0), Some(1)));
                assert!(matches!(source, Error::DegenerateRow { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn heatmaps_follow_the_requested_frames() {
        let mut cfg = small(vec![Method::Ssr]);
        cfg.emit_heatmaps = true;
        cfg.heatmap_frames = vec![0, 5, 29];
        let b = run_experiment(&cfg, None).unwrap();
        assert_eq!(
            b.heatmaps.keys().copied().collect::<Vec<_>>(),
            vec![0, 5, 29]
        );
        assert_eq!(b.heatmaps[&0].rows, 1);
        assert_eq!(b.heatmaps[&5].rows, 6);
        assert_eq!(b.heatmaps[&29].rows, 9);
        assert!(collect_heatmaps(&cfg, &[30]).is_err());
    }

    #[test]
    fn table_lists_each_method() {
        let b = run_experiment(&small(vec![Method::Ssr, Method::Passthrough]), None).unwrap();
        let t = summary_table(&b);
        assert_eq!(t.lines().count(), 3);
        assert!(t.contains("passthrough"));
    }
}
