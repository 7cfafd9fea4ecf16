//! Flat `section.key = value` experiment configuration.
//!
//! ```text
//! # static subspace, gaussian noise
//! scenario.n = 64
//! scenario.r = 4
//! noise.kind = gaussian-iid
//! noise.sigma = 0.1
//! ssr.window_k = 8
//! ssr.mode = softmax
//! run.methods = ssr,passthrough
//! ```
//!
//! Blank lines and `#` comments are ignored. Unknown or repeated keys are
//! errors that name the key.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::regularizer::SsrConfig;
use crate::synth::{NoiseModel, TrajectoryConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    // declaration order is the lexicographic order of the names
    Ema,
    Passthrough,
    Ssr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ema => "ema",
            Method::Passthrough => "passthrough",
            Method::Ssr => "ssr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ssr" => Ok(Method::Ssr),
            "ema" => Ok(Method::Ema),
            "passthrough" => Ok(Method::Passthrough),
            other => Err(format!(
                "unknown method `{other}` (ssr | ema | passthrough)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: TrajectoryConfig,
    pub noise: NoiseModel,
    pub methods: Vec<Method>,
    pub ssr: SsrConfig,
    pub ema_alpha: f64,
    pub trials: usize,
    pub output_dir: PathBuf,
    pub emit_heatmaps: bool,
    /// Frames whose SSR affinity (trial 0) is dumped when heatmaps are on.
    pub heatmap_frames: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: TrajectoryConfig::default(),
            noise: NoiseModel::default(),
            methods: vec![Method::Passthrough, Method::Ssr],
            ssr: SsrConfig::default(),
            ema_alpha: 0.5,
            trials: 1,
            output_dir: PathBuf::from("ssrlab-out"),
            emit_heatmaps: false,
            heatmap_frames: vec![0],
        }
    }
}

fn invalid(path: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, HarnessError>
where
    T::Err: fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| invalid(key, format!("cannot parse `{raw}`: {e}")))
}

/// Parses a comma-separated list such as `2,4,8`.
pub fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>, HarnessError>
where
    T::Err: fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

impl ExperimentConfig {
    /// Parses the flat key/value text, starting from the defaults.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(invalid(
                    &format!("line {}", lineno + 1),
                    format!("expected `key = value`, got `{line}`"),
                ));
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(invalid(key, "key given more than once"));
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), HarnessError> {
        match key {
            "scenario.n" => self.scenario.ambient_dim = parse_value(key, v)?,
            "scenario.r" => self.scenario.rank = parse_value(key, v)?,
            "scenario.length" => self.scenario.length = parse_value(key, v)?,
            "scenario.seed" => self.scenario.seed = parse_value(key, v)?,
            "scenario.speed" => self.scenario.speed = parse_value(key, v)?,
            "scenario.waypoints" => self.scenario.waypoint_count = parse_value(key, v)?,
            "scenario.coeff_speed" => self.scenario.coeff_speed = parse_value(key, v)?,
            "noise.kind" => self.noise.kind = parse_value(key, v)?,
            "noise.sigma" => self.noise.sigma = parse_value(key, v)?,
            "noise.burst_prob" => self.noise.burst_prob = parse_value(key, v)?,
            "noise.burst_scale" => self.noise.burst_scale = parse_value(key, v)?,
            "ssr.window_k" => self.ssr.window_k = parse_value(key, v)?,
            "ssr.mode" => self.ssr.mode = parse_value(key, v)?,
            "ssr.temperature" => {
                self.ssr.temperature = match v {
                    "auto" => None,
                    _ => Some(parse_value(key, v)?),
                }
            }
            "ssr.buffer_policy" => self.ssr.buffer_policy = parse_value(key, v)?,
            "ema.alpha" => self.ema_alpha = parse_value(key, v)?,
            "run.methods" => self.methods = parse_list(key, v)?,
            "run.trials" => self.trials = parse_value(key, v)?,
            "run.output_dir" => self.output_dir = PathBuf::from(v),
            "run.emit_heatmaps" => self.emit_heatmaps = parse_value(key, v)?,
            "run.heatmap_frames" => self.heatmap_frames = parse_list(key, v)?,
            other => return Err(invalid(other, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.scenario
            .validate()
            .map_err(|e| invalid("scenario", e.to_string()))?;
        self.noise
            .validate()
            .map_err(|e| invalid("noise", e.to_string()))?;
        self.ssr
            .validate()
            .map_err(|e| invalid("ssr", e.to_string()))?;
        if self.methods.is_empty() {
            return Err(invalid("run.methods", "at least one method is required"));
        }
        let unique: BTreeSet<_> = self.methods.iter().collect();
        if unique.len() != self.methods.len() {
            return Err(invalid("run.methods", "a method is listed more than once"));
        }
        if !(0.0..=1.0).contains(&self.ema_alpha) {
            return Err(invalid(
                "ema.alpha",
                format!("{} is outside [0, 1]", self.ema_alpha),
            ));
        }
        if self.trials == 0 {
            return Err(invalid("run.trials", "must be >= 1"));
        }
        if self.emit_heatmaps && !self.methods.contains(&Method::Ssr) {
            return Err(invalid(
                "run.emit_heatmaps",
                "heatmaps need `ssr` in run.methods",
            ));
        }
        self.check_frames("run.heatmap_frames", &self.heatmap_frames)
    }

    pub(crate) fn check_frames(&self, key: &str, frames: &[usize]) -> Result<(), HarnessError> {
        if let Some(&f) = frames.iter().find(|&&f| f >= self.scenario.length) {
            return Err(invalid(
                key,
                format!(
                    "frame {f} is past the end of a {}-frame scenario",
                    self.scenario.length
                ),
            ));
        }
        Ok(())
    }

    /// Methods in output order (sorted by name).
    pub fn sorted_methods(&self) -> Vec<Method> {
        let mut m = self.methods.clone();
        m.sort();
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::AffinityMode;
    use crate::regularizer::BufferPolicy;
    use crate::synth::NoiseKind;

    #[test]
    fn parses_every_key() {
        let text = "\
# comment
scenario.n = 16
scenario.r = 3
scenario.length = 50
scenario.seed = 99
scenario.speed = 0.5
scenario.waypoints = 4
scenario.coeff_speed = 0.1

noise.kind = burst
noise.sigma = 0.2
noise.burst_prob = 0.1
noise.burst_scale = 4
ssr.window_k = 5
ssr.mode = raw-sum
ssr.temperature = 2.5
ssr.buffer_policy = store-corrected
ema.alpha = 0.3
run.methods = ssr, ema ,passthrough
run.trials = 7
run.output_dir = /tmp/x
run.emit_heatmaps = true
run.heatmap_frames = 0,10,49
";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.scenario.ambient_dim, 16);
        assert_eq!(c.scenario.rank, 3);
        assert_eq!(c.scenario.length, 50);
        assert_eq!(c.scenario.seed, 99);
        assert_eq!(c.scenario.waypoint_count, 4);
        assert_eq!(c.noise.kind, NoiseKind::Burst);
        assert_eq!(c.ssr.mode, AffinityMode::RawSum);
        assert_eq!(c.ssr.temperature, Some(2.5));
        assert_eq!(c.ssr.buffer_policy, BufferPolicy::StoreCorrected);
        assert_eq!(
            c.methods,
            vec![Method::Ssr, Method::Ema, Method::Passthrough]
        );
        assert_eq!(
            c.sorted_methods(),
            vec![Method::Ema, Method::Passthrough, Method::Ssr]
        );
        assert_eq!(c.heatmap_frames, vec![0, 10, 49]);
        assert!(c.emit_heatmaps);
    }

    fn err_path(text: &str) -> String {
        match ExperimentConfig::parse(text) {
            Err(HarnessError::Config { path, .. }) => path,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_offending_key() {
        assert_eq!(err_path("scenario.bogus = 1"), "scenario.bogus");
        assert_eq!(err_path("ssr.window_k = many"), "ssr.window_k");
        assert_eq!(
            err_path("ssr.window_k = 2\nssr.window_k = 3"),
            "ssr.window_k"
        );
        assert_eq!(err_path("just words"), "line 1");
        assert_eq!(err_path("run.methods = ssr,ssr"), "run.methods");
        assert_eq!(err_path("run.methods = "), "run.methods");
        assert_eq!(err_path("ema.alpha = 2"), "ema.alpha");
        assert_eq!(err_path("ssr.window_k = 0"), "ssr");
        assert_eq!(err_path("scenario.r = 64"), "scenario");
        assert_eq!(err_path("run.heatmap_frames = 300"), "run.heatmap_frames");
        assert_eq!(
            err_path("run.methods = passthrough\nrun.emit_heatmaps = true"),
            "run.emit_heatmaps"
        );
    }

    #[test]
    fn auto_temperature() {
        let c = ExperimentConfig::parse("ssr.temperature = auto").unwrap();
        assert_eq!(c.ssr.temperature, None);
    }
}
