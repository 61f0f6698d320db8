//! NB-IoT NPRACH uplink synchronization for low-earth-orbit channels.
//!
//! The crate synthesizes NPRACH preambles, passes them through a satellite
//! channel model (delay, CFO, Doppler rate, fading, noise), and estimates
//! time of arrival and carrier frequency offset from the wrapped phase of the
//! dechirped signal. Two reference estimators are included for comparison,
//! together with a Monte Carlo harness.

pub mod error;
pub mod estimator;
pub mod harness;
pub mod iq;
pub mod phase;
pub mod tire;
pub mod baselines;
pub mod channel;
pub mod waveform;

pub use error::{Error, Result};
pub use iq::IqBuffer;
