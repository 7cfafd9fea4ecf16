//! Seeded synthetic streams with a known ground truth.
//!
//! The truth subspace moves along piecewise geodesics through random
//! waypoints on G(n, r). Inside it, the clean state rotates at a constant
//! angular rate along a great circle of the subspace's unit sphere, so
//! consecutive clean states stay close. Noise is added on top.
//!
//! All randomness comes from ChaCha streams keyed by `(seed, purpose, index)`.
//! Frame `t` only ever reads the streams indexed by `t`, so a longer scenario
//! shares its prefix with a shorter one bit for bit.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::affinity::StateVector;
use crate::error::{Error, Result};
use crate::grassmann::{projection_distance, random_subspace, Geodesic, SubspacePoint};

/// How many waypoint sets are drawn before giving up on a degenerate one.
pub const WAYPOINT_ATTEMPTS: u64 = 8;

const STREAM_WAYPOINT: u64 = 1;
const STREAM_COEFF: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_BURST: u64 = 4;

fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 56) | (index & ((1 << 56) - 1)));
    rng
}

/// Independent child seed for trial `index` of a run seeded with `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    /// Ambient dimension `n`, which is also the state dimension.
    pub ambient_dim: usize,
    pub rank: usize,
    /// Number of frames `T`.
    pub length: usize,
    pub seed: u64,
    /// Fraction of the waypoint diameter travelled over the whole stream:
    /// each frame advances `speed * D / T` in arc length, where `D` is the
    /// largest projection distance between any two waypoints.
    pub speed: f64,
    pub waypoint_count: usize,
    /// Angle (radians per frame) the clean state turns inside the subspace.
    pub coeff_speed: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            ambient_dim: 64,
            rank: 4,
            length: 256,
            seed: 7,
            speed: 0.0,
            waypoint_count: 2,
            coeff_speed: 0.02,
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.rank == 0 || self.ambient_dim <= self.rank {
            return bad(format!(
                "need n > r >= 1, got n={} r={}",
                self.ambient_dim, self.rank
            ));
        }
        if self.length == 0 {
            return bad("length must be >= 1".into());
        }
        if self.waypoint_count < 2 {
            return bad("waypoint_count must be >= 2".into());
        }
        if !(0.0..=1.0).contains(&self.speed) {
            return bad(format!("speed must lie in [0, 1], got {}", self.speed));
        }
        if !self.coeff_speed.is_finite() || self.coeff_speed < 0.0 {
            return bad(format!(
                "coeff_speed must be >= 0, got {}",
                self.coeff_speed
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    GaussianIid,
    DriftRandomWalk,
    Burst,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::GaussianIid => "gaussian-iid",
            NoiseKind::DriftRandomWalk => "drift-random-walk",
            NoiseKind::Burst => "burst",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "gaussian-iid" => Ok(NoiseKind::GaussianIid),
            "drift-random-walk" => Ok(NoiseKind::DriftRandomWalk),
            "burst" => Ok(NoiseKind::Burst),
            other => Err(format!(
                "unknown noise kind `{other}` (gaussian-iid | drift-random-walk | burst)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Per-coordinate standard deviation.
    pub sigma: f64,
    pub burst_prob: f64,
    pub burst_scale: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            kind: NoiseKind::GaussianIid,
            sigma: 0.1,
            burst_prob: 0.0,
            burst_scale: 1.0,
        }
    }
}

impl NoiseModel {
    pub fn gaussian(sigma: f64) -> Self {
        Self {
            sigma,
            ..Self::default()
        }
    }

    pub fn drift(sigma: f64) -> Self {
        Self {
            kind: NoiseKind::DriftRandomWalk,
            sigma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.burst_prob) {
            return Err(Error::InvalidParameter(format!(
                "burst_prob must lie in [0, 1], got {}",
                self.burst_prob
            )));
        }
        if !(self.burst_scale >= 0.0 && self.burst_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "burst_scale must be >= 0, got {}",
                self.burst_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFrame {
    pub clean_state: StateVector,
    pub noisy_state: StateVector,
    pub truth_subspace: SubspacePoint,
}

/// Piecewise-geodesic path through the waypoints, parametrized by arc length.
struct WaypointPath {
    waypoints: Vec<SubspacePoint>,
    segments: Vec<Geodesic>,
    /// Arc length at the start of each segment, plus the total at the end.
    offsets: Vec<f64>,
    diameter: f64,
}

impl WaypointPath {
    fn draw(tc: &TrajectoryConfig) -> Result<Self> {
        let mut last_err = None;
        for attempt in 0..WAYPOINT_ATTEMPTS {
            let waypoints = (0..tc.waypoint_count)
                .map(|w| {
                    let mut rng = stream(tc.seed, STREAM_WAYPOINT, (attempt << 32) | w as u64);
                    random_subspace(&mut rng, tc.ambient_dim, tc.rank)
                })
                .collect::<Result<Vec<_>>>()?;
            if tc.speed == 0.0 {
                return Ok(Self {
                    waypoints,
                    segments: Vec::new(),
                    offsets: vec![0.0],
                    diameter: 0.0,
                });
            }
            match Self::connect(waypoints) {
                Ok(path) => return Ok(path),
                Err(e @ Error::DegenerateGeodesic { .. }) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("at least one attempt"))
    }

    fn connect(waypoints: Vec<SubspacePoint>) -> Result<Self> {
        let segments = waypoints
            .windows(2)
            .map(|p| Geodesic::new(&p[0], &p[1]))
            .collect::<Result<Vec<_>>>()?;
        let mut offsets = vec![0.0];
        for g in &segments {
            offsets.push(offsets.last().unwrap() + g.length());
        }
        let mut diameter: f64 = 0.0;
        for i in 0..waypoints.len() {
            for j in i + 1..waypoints.len() {
                diameter = diameter.max(projection_distance(&waypoints[i], &waypoints[j])?);
            }
        }
        Ok(Self {
            waypoints,
            segments,
            offsets,
            diameter,
        })
    }

    fn point_at(&self, arc: f64) -> Result<SubspacePoint> {
        if arc <= 0.0 || self.segments.is_empty() {
            return Ok(self.waypoints[0].clone());
        }
        let total = *self.offsets.last().unwrap();
        if arc >= total {
            return Ok(self.waypoints.last().unwrap().clone());
        }
        let seg = self.offsets.partition_point(|&o| o <= arc) - 1;
        let len = self.offsets[seg + 1] - self.offsets[seg];
        if len <= 0.0 {
            return Ok(self.waypoints[seg + 1].clone());
        }
        self.segments[seg].at((arc - self.offsets[seg]) / len)
    }
}

/// Fixed ambient directions whose projections give the in-subspace frame.
struct CoefficientCircle {
    first: DVector<f64>,
    second: DVector<f64>,
    rate: f64,
}

impl CoefficientCircle {
    fn draw(tc: &TrajectoryConfig) -> Self {
        let mut rng = stream(tc.seed, STREAM_COEFF, 0);
        let n = tc.ambient_dim;
        let first = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let second = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        Self {
            first,
            second,
            rate: tc.coeff_speed,
        }
    }

    /// Unit vector in `span(u)` at frame `t`.
    fn clean_state(&self, u: &SubspacePoint, t: usize) -> Result<StateVector> {
        let project = |v: &DVector<f64>| u.basis() * u.basis().tr_mul(v);
        let a = project(&self.first);
        let a_norm = a.norm();
        if a_norm < 1e-9 {
            return Err(Error::InvalidParameter(
                "coefficient direction is orthogonal to the truth subspace".into(),
            ));
        }
        let a = a / a_norm;
        let angle = self.rate * t as f64;
        let v = if u.rank() == 1 {
            if angle.cos() >= 0.0 {
                a
            } else {
                -a
            }
        } else {
            let b = project(&self.second);
            let b = &b - &a * a.dot(&b);
            let b_norm = b.norm();
            if b_norm < 1e-9 {
                return Err(Error::InvalidParameter(
                    "coefficient directions are parallel inside the truth subspace".into(),
                ));
            }
            let (sin, cos) = angle.sin_cos();
            let v = a * cos + b * (sin / b_norm);
            let norm = v.norm();
            v / norm
        };
        StateVector::from_vector(v)
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// The `T` frames of a scenario. Pure function of its arguments.
pub fn generate_scenario(tc: &TrajectoryConfig, nm: &NoiseModel) -> Result<Vec<ScenarioFrame>> {
    tc.validate()?;
    nm.validate()?;
    let path = WaypointPath::draw(tc)?;
    let circle = CoefficientCircle::draw(tc);
    let step = tc.speed * path.diameter / tc.length as f64;

    let mut frames = Vec::with_capacity(tc.length);
    for t in 0..tc.length {
        let truth = path.point_at(step * t as f64)?;
        let clean = circle.clean_state(&truth, t)?;
        let noisy = match nm.kind {
            NoiseKind::GaussianIid | NoiseKind::Burst => {
                let mut scale = nm.sigma;
                if nm.kind == NoiseKind::Burst {
                    let mut coin = stream(tc.seed, STREAM_BURST, t as u64);
                    if coin.random::<f64>() < nm.burst_prob {
                        scale *= nm.burst_scale;
                    }
                }
                if scale == 0.0 {
                    clean.clone()
                } else {
                    let z = gaussian(&mut stream(tc.seed, STREAM_NOISE, t as u64), tc.ambient_dim);
                    StateVector::from_vector(clean.as_vector() + z * scale)?
                }
            }
            // filled in by drift_walk below
            NoiseKind::DriftRandomWalk => clean.clone(),
        };
        frames.push(ScenarioFrame {
            clean_state: clean,
            noisy_state: noisy,
            truth_subspace: truth,
        });
    }
    if nm.kind == NoiseKind::DriftRandomWalk {
        frames = drift_walk(&frames, nm.sigma, tc.seed);
    }
    Ok(frames)
}

/// Replaces each noisy state with `clean_t + sum_{i <= t} sigma * z_i`.
///
/// The accumulated error is a Gaussian random walk, so its norm grows like
/// `sqrt(t)`.
pub fn drift_walk(frames: &[ScenarioFrame], sigma: f64, seed: u64) -> Vec<ScenarioFrame> {
    let Some(first) = frames.first() else {
        return Vec::new();
    };
    let d = first.clean_state.dim();
    let mut walk = DVector::zeros(d);
    frames
        .iter()
        .enumerate()
        .map(|(t, f)| {
            if sigma != 0.0 {
                let z = gaussian(&mut stream(seed, STREAM_NOISE, t as u64), d);
                walk.axpy(sigma, &z, 1.0);
            }
            let noisy = if sigma == 0.0 {
                f.clean_state.clone()
            } else {
                StateVector::from_vector(f.clean_state.as_vector() + &walk).expect("finite walk")
            };
            ScenarioFrame {
                clean_state: f.clean_state.clone(),
                noisy_state: noisy,
                truth_subspace: f.truth_subspace.clone(),
            }
        })
        .collect()
}

/// Waypoint basis matrices, exposed for diagnostics and tests.
pub fn waypoints(tc: &TrajectoryConfig) -> Result<Vec<SubspacePoint>> {
    tc.validate()?;
    Ok(WaypointPath::draw(tc)?.waypoints)
}

/// Largest projection distance between any two waypoints of `tc`.
pub fn waypoint_diameter(tc: &TrajectoryConfig) -> Result<f64> {
    let pts = waypoints(tc)?;
    let mut d: f64 = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d = d.max(projection_distance(&pts[i], &pts[j])?);
        }
    }
    Ok(d)
}
