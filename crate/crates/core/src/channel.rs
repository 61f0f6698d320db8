//! Satellite uplink channel: delay, CFO, Doppler rate, block fading and noise.
//!
//! The received sample at absolute index `n` is
//! `h * exp(j2pi[f (m - D) + alpha (m - D)^2 / 2]) * x(n - D) + w(n)` where `m`
//! counts from the first transmitted sample, `f` and `alpha` are normalized by
//! the sample rate, and `D` is the delay in samples.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iq::IqBuffer;
use crate::waveform::DEFAULT_SAMPLE_RATE;

/// Half-width of the fractional-delay interpolator (taps = 2 * half).
const INTERP_HALF: i64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    Awgn,
    TdlC,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TapFading {
    Rayleigh,
    /// Deterministic unit phasor.
    LoS,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub delay_samples: usize,
    pub avg_power: f64,
    pub fading: TapFading,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdlCProfile {
    pub taps: Vec<Tap>,
}

impl Default for TdlCProfile {
    fn default() -> Self {
        let tap = |d, p, fading| Tap { delay_samples: d, avg_power: p, fading };
        Self {
            taps: vec![
                tap(0, 0.65, TapFading::LoS),
                tap(2, 0.25, TapFading::Rayleigh),
                tap(5, 0.10, TapFading::Rayleigh),
            ],
        }
    }
}

impl TdlCProfile {
    pub fn validate(&self) -> Result<()> {
        if self.taps.is_empty() {
            return Err(Error::InvalidConfig("TDL profile has no taps".into()));
        }
        if self.taps.iter().any(|t| !(t.avg_power.is_finite() && t.avg_power >= 0.0)) {
            return Err(Error::InvalidConfig("tap powers must be finite and non-negative".into()));
        }
        let total: f64 = self.taps.iter().map(|t| t.avg_power).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("tap powers sum to {total}, expected 1")));
        }
        Ok(())
    }

    pub fn delay_spread(&self) -> usize {
        self.taps.iter().map(|t| t.delay_samples).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImpairmentConfig {
    /// Delay `D` in sample periods, possibly fractional.
    pub toa_samples: f64,
    pub cfo_hz: f64,
    pub doppler_rate_hz_per_s: f64,
    /// Per-sample Es/N0 with unit signal power; `None` disables noise.
    pub snr_db: Option<f64>,
    pub channel: ChannelKind,
    pub seed: u64,
    /// Largest admissible delay; also sets the output padding.
    pub max_toa_samples: f64,
    /// Transmitted samples per fading block (one symbol group by default).
    pub fading_block_len: usize,
    pub sample_rate: f64,
}

impl Default for ImpairmentConfig {
    fn default() -> Self {
        Self {
            toa_samples: 0.0,
            cfo_hz: 0.0,
            doppler_rate_hz_per_s: 0.0,
            snr_db: None,
            channel: ChannelKind::Awgn,
            seed: 0,
            // 700 us at 1.92 Msps, rounded up
            max_toa_samples: 1344.0,
            fading_block_len: 3072,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

impl ImpairmentConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.toa_samples, self.cfo_hz, self.doppler_rate_hz_per_s, self.max_toa_samples];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("impairment parameters must be finite".into()));
        }
        if self.max_toa_samples < 0.0 {
            return Err(Error::InvalidConfig("max_toa_samples must be non-negative".into()));
        }
        if self.toa_samples < 0.0 || self.toa_samples > self.max_toa_samples {
            return Err(Error::DelayOutOfRange { toa: self.toa_samples, max: self.max_toa_samples });
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::InvalidConfig("sample_rate must be positive".into()));
        }
        if self.cfo_hz.abs() >= self.sample_rate / 2.0 {
            return Err(Error::InvalidConfig("cfo exceeds the Nyquist band".into()));
        }
        if matches!(self.snr_db, Some(s) if s.is_nan()) {
            return Err(Error::InvalidConfig("snr_db is NaN".into()));
        }
        if self.fading_block_len == 0 {
            return Err(Error::InvalidConfig("fading_block_len must be positive".into()));
        }
        Ok(())
    }

    pub fn noise_variance(&self) -> f64 {
        match self.snr_db {
            Some(snr) => 10f64.powf(-snr / 10.0),
            None => 0.0,
        }
    }
}

/// Lagrange weights for evaluating at `INTERP_HALF - 1 + frac` from nodes `0..2*INTERP_HALF`.
fn lagrange_weights(frac: f64) -> [f64; 2 * INTERP_HALF as usize] {
    let mut w = [1.0; 2 * INTERP_HALF as usize];
    let t = (INTERP_HALF - 1) as f64 + frac;
    for (j, wj) in w.iter_mut().enumerate() {
        for m in 0..2 * INTERP_HALF as usize {
            if m != j {
                *wj *= (t - m as f64) / (j as f64 - m as f64);
            }
        }
    }
    w
}

/// `x` delayed by a non-negative real number of samples, on relative output indices.
fn delayed(x: &[Complex64], delay: f64, out_len: usize) -> Vec<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    let whole = delay.floor();
    let frac = delay - whole;
    let shift = whole as i64;
    let get = |i: i64| if i >= 0 && (i as usize) < x.len() { x[i as usize] } else { zero };
    if frac == 0.0 {
        return (0..out_len as i64).map(|n| get(n - shift)).collect();
    }
    // x(n - whole - frac): interpolate between x[n - whole - 1] and x[n - whole].
    let w = lagrange_weights(1.0 - frac);
    (0..out_len as i64)
        .map(|n| {
            let first = n - shift - 1 - (INTERP_HALF - 1);
            w.iter().enumerate().map(|(j, &wj)| get(first + j as i64) * wj).sum()
        })
        .collect()
}

fn complex_gaussian(rng: &mut ChaCha8Rng, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Number of output samples produced for an input of `len` samples.
pub fn output_len(len: usize, imp: &ImpairmentConfig, profile: Option<&TdlCProfile>) -> usize {
    let spread = match imp.channel {
        ChannelKind::TdlC => profile.map_or(0, TdlCProfile::delay_spread),
        ChannelKind::Awgn => 0,
    };
    len + imp.max_toa_samples.ceil() as usize + spread
}

/// Received signal for transmitted `x`; the output starts at `x.base_index`.
pub fn apply_impairments(
    x: &IqBuffer,
    imp: &ImpairmentConfig,
    profile: Option<&TdlCProfile>,
) -> Result<IqBuffer> {
    imp.validate()?;
    if x.is_empty() {
        return Err(Error::InvalidConfig("transmitted buffer is empty".into()));
    }
    let profile = match (imp.channel, profile) {
        (ChannelKind::Awgn, None) => None,
        (ChannelKind::TdlC, Some(p)) => {
            p.validate()?;
            Some(p)
        }
        (ChannelKind::Awgn, Some(_)) => {
            return Err(Error::InvalidConfig("AWGN channel takes no TDL profile".into()))
        }
        (ChannelKind::TdlC, None) => {
            return Err(Error::InvalidConfig("TDL-C channel requires a profile".into()))
        }
    };
    let out_len = output_len(x.len(), imp, profile);
    let d = imp.toa_samples;

    let mut fade_rng = ChaCha8Rng::seed_from_u64(imp.seed);
    fade_rng.set_stream(1);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(imp.seed);
    noise_rng.set_stream(2);

    let mut y = match profile {
        None => delayed(&x.samples, d, out_len),
        Some(p) => {
            let n_blocks = x.len().div_ceil(imp.fading_block_len);
            let mut y = vec![Complex64::new(0.0, 0.0); out_len];
            for tap in &p.taps {
                let amp = tap.avg_power.sqrt();
                let gains: Vec<Complex64> = (0..n_blocks)
                    .map(|_| match tap.fading {
                        TapFading::LoS => Complex64::new(amp, 0.0),
                        TapFading::Rayleigh => complex_gaussian(&mut fade_rng, tap.avg_power),
                    })
                    .collect();
                let tap_delay = d + tap.delay_samples as f64;
                let env = delayed(&x.samples, tap_delay, out_len);
                for (n, (yn, e)) in y.iter_mut().zip(env).enumerate() {
                    let src = (n as f64 - tap_delay).floor();
                    let block = (src.max(0.0) as usize / imp.fading_block_len).min(n_blocks - 1);
                    *yn += gains[block] * e;
                }
            }
            y
        }
    };

    let f = imp.cfo_hz / imp.sample_rate;
    let alpha = imp.doppler_rate_hz_per_s / (imp.sample_rate * imp.sample_rate);
    if f != 0.0 || alpha != 0.0 {
        for (n, yn) in y.iter_mut().enumerate() {
            let t = n as f64 - d;
            *yn *= Complex64::from_polar(1.0, 2.0 * PI * (f * t + 0.5 * alpha * t * t));
        }
    }

    let var = imp.noise_variance();
    if var > 0.0 {
        for yn in y.iter_mut() {
            *yn += complex_gaussian(&mut noise_rng, var);
        }
    }
    Ok(IqBuffer::new(y, x.base_index))
}

/// Empirical SNR in dB of `noisy` against `clean`; `+inf` when they coincide.
pub fn measure_snr(clean: &IqBuffer, noisy: &IqBuffer) -> Result<f64> {
    if clean.len() != noisy.len() || clean.base_index != noisy.base_index {
        return Err(Error::LengthMismatch { left: clean.len(), right: noisy.len() });
    }
    let p_sig = clean.mean_power();
    let p_noise = clean
        .samples
        .iter()
        .zip(&noisy.samples)
        .map(|(c, n)| (n - c).norm_sqr())
        .sum::<f64>()
        / clean.len().max(1) as f64;
    if p_noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (p_sig / p_noise).log10())
}
