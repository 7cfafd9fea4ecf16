pub mod affinity;
pub mod error;
pub mod grassmann;
pub mod harness;
pub mod metrics;
pub mod parallel;
pub mod regularizer;
pub mod selfcheck;
pub mod synth;
