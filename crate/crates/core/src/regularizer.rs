//! Streaming correctors: the sliding-window self-expressive regularizer and
//! the two baselines it is compared against.
//!
//! Each SSR step appends the incoming state to a FIFO window of at most
//! `k + 1` states, builds the window affinity `C`, and emits
//! `sum_j C[L-1, j] * S_j`, the last row of `C S`. Only the current state is
//! corrected; earlier emissions are never revisited.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::affinity::{
    check_dim, compute_affinity, self_expressive_residual, AffinityMatrix, AffinityMode,
    StateVector, StateWindow,
};
use crate::error::{Error, Result};

/// What the window keeps for the current frame once it has been corrected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BufferPolicy {
    StoreRaw,
    StoreCorrected,
}

impl fmt::Display for BufferPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BufferPolicy::StoreRaw => "store-raw",
            BufferPolicy::StoreCorrected => "store-corrected",
        })
    }
}

impl FromStr for BufferPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "store-raw" => Ok(BufferPolicy::StoreRaw),
            "store-corrected" => Ok(BufferPolicy::StoreCorrected),
            other => Err(format!(
                "unknown buffer policy `{other}` (store-raw | store-corrected)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsrConfig {
    /// History length; the window holds up to `window_k + 1` states.
    pub window_k: usize,
    pub mode: AffinityMode,
    /// Softmax temperature. `None` means `sqrt(d)` for state dimension `d`.
    pub temperature: Option<f64>,
    pub buffer_policy: BufferPolicy,
}

impl Default for SsrConfig {
    fn default() -> Self {
        Self {
            window_k: 8,
            mode: AffinityMode::Softmax,
            temperature: None,
            buffer_policy: BufferPolicy::StoreRaw,
        }
    }
}

impl SsrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_k == 0 {
            return Err(Error::InvalidParameter("window_k must be >= 1".into()));
        }
        if let Some(t) = self.temperature {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "temperature must be positive and finite, got {t}"
                )));
            }
        }
        Ok(())
    }

    pub fn temperature_for(&self, dim: usize) -> f64 {
        self.temperature.unwrap_or_else(|| (dim as f64).sqrt())
    }
}

/// Result of one SSR step.
#[derive(Debug, Clone, PartialEq)]
pub struct SsrOutput {
    pub corrected: StateVector,
    pub affinity: AffinityMatrix,
    /// `||S - C S||_F / ||S||_F` on the window the affinity was built from.
    pub se_residual: f64,
}

/// Single-owner streaming regularizer state.
#[derive(Debug, Clone)]
pub struct SsrState {
    config: SsrConfig,
    window: StateWindow,
    frames_seen: usize,
}

impl SsrState {
    pub fn new(config: SsrConfig) -> Result<Self> {
        config.validate()?;
        let window = StateWindow::new(config.window_k + 1)?;
        Ok(Self {
            config,
            window,
            frames_seen: 0,
        })
    }

    pub fn config(&self) -> &SsrConfig {
        &self.config
    }

    pub fn window(&self) -> &StateWindow {
        &self.window
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    /// Pushes `incoming` and returns its corrected value.
    ///
    /// On error the state is left exactly as it was before the call.
    pub fn step(&mut self, incoming: StateVector) -> Result<SsrOutput> {
        if let Some(d) = self.window.dim() {
            check_dim(d, incoming.dim())?;
        }
        let temperature = self.config.temperature_for(incoming.dim());
        let evicted = self.window.push(incoming)?;
        let affinity = match compute_affinity(&self.window, self.config.mode, temperature) {
            Ok(c) => c,
            Err(e) => {
                self.window.pop_newest(evicted);
                return Err(e);
            }
        };
        let se_residual = self_expressive_residual(&self.window, &affinity)?;

        let last = affinity.len() - 1;
        let mut states = self.window.iter().enumerate();
        let (_, first) = states.next().expect("window holds the incoming state");
        let mut acc: DVector<f64> = first.as_vector() * affinity.get(last, 0);
        for (j, s) in states {
            acc.axpy(affinity.get(last, j), s.as_vector(), 1.0);
        }
        let corrected = StateVector::from_vector(acc)?;

        if self.config.buffer_policy == BufferPolicy::StoreCorrected {
            self.window.replace_newest(corrected.clone());
        }
        self.frames_seen += 1;
        Ok(SsrOutput {
            corrected,
            affinity,
            se_residual,
        })
    }
}

/// Two-frame blend `alpha * current + (1 - alpha) * previous`.
pub fn ema_fuse(current: &StateVector, previous: &StateVector, alpha: f64) -> Result<StateVector> {
    check_dim(current.dim(), previous.dim())?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    if alpha == 1.0 {
        return Ok(current.clone());
    }
    if alpha == 0.0 {
        return Ok(previous.clone());
    }
    let blended = current.as_vector() * alpha + previous.as_vector() * (1.0 - alpha);
    StateVector::from_vector(blended)
}

/// The unregularized baseline.
pub fn passthrough_step(incoming: &StateVector) -> StateVector {
    incoming.clone()
}

/// Streaming form of [`ema_fuse`]: blends each frame with the previous raw
/// frame. The first frame has no predecessor and passes through.
#[derive(Debug, Clone)]
pub struct EmaFilter {
    alpha: f64,
    previous: Option<StateVector>,
}

impl EmaFilter {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::AlphaOutOfRange(alpha));
        }
        Ok(Self {
            alpha,
            previous: None,
        })
    }

    pub fn step(&mut self, incoming: StateVector) -> Result<StateVector> {
        let out = match &self.previous {
            Some(prev) => ema_fuse(&incoming, prev, self.alpha)?,
            None => incoming.clone(),
        };
        self.previous = Some(incoming);
        Ok(out)
    }
}

/// One emitted state plus what the harness records about it.
#[derive(Debug, Clone)]
pub struct Correction {
    pub corrected: StateVector,
    pub se_residual: f64,
    pub affinity: Option<AffinityMatrix>,
}

/// A corrector consumes states in arrival order, one owner at a time.
pub trait StreamCorrector {
    fn correct(&mut self, incoming: StateVector) -> Result<Correction>;
}

impl StreamCorrector for SsrState {
    fn correct(&mut self, incoming: StateVector) -> Result<Correction> {
        let out = self.step(incoming)?;
        Ok(Correction {
            corrected: out.corrected,
            se_residual: out.se_residual,
            affinity: Some(out.affinity),
        })
    }
}

impl StreamCorrector for EmaFilter {
    fn correct(&mut self, incoming: StateVector) -> Result<Correction> {
        Ok(Correction {
            corrected: self.step(incoming)?,
            se_residual: 0.0,
            affinity: None,
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Passthrough;

impl StreamCorrector for Passthrough {
    fn correct(&mut self, incoming: StateVector) -> Result<Correction> {
        Ok(Correction {
            corrected: passthrough_step(&incoming),
            se_residual: 0.0,
            affinity: None,
        })
    }
}
