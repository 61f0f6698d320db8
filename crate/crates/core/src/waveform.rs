//! NPRACH preamble synthesis.
//!
//! A preamble is `4 * n_rep` symbol groups. Each symbol group is a cyclic
//! prefix followed by `symbols_per_sg` identical symbols of a single tone on
//! one subcarrier, so in the time domain a whole symbol group is one
//! uninterrupted complex exponential. Subcarriers hop between groups
//! according to [`build_schedule`].

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iq::IqBuffer;

pub const DEFAULT_SAMPLE_RATE: f64 = 1.92e6;
pub const DEFAULT_FFT_LEN: usize = 512;

/// Within-unit hop sequence applied to the first subcarrier of a unit.
const UNIT_HOPS: [i64; 3] = [1, 6, -1];
/// Subcarrier advance between consecutive units.
const UNIT_STRIDE: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    /// Cyclic prefix is a quarter symbol.
    Format0,
    /// Cyclic prefix is one full symbol.
    Format1,
}

impl Format {
    pub fn cp_len(self, fft_len: usize) -> usize {
        match self {
            Format::Format0 => fft_len / 4,
            Format::Format1 => fft_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreambleConfig {
    pub format: Format,
    /// Number of 4-symbol-group units.
    pub n_rep: usize,
    /// Absolute sample index at which transmission starts.
    pub n_start: i64,
    /// Subcarrier of the first symbol group.
    pub n_off: usize,
    /// Number of subcarriers available for hopping.
    pub n_sc_total: usize,
    pub fft_len: usize,
    pub cp_len: usize,
    pub symbols_per_sg: usize,
    pub sample_rate: f64,
}

impl Default for PreambleConfig {
    fn default() -> Self {
        Self::new(Format::Format1, 8)
    }
}

impl PreambleConfig {
    pub fn new(format: Format, n_rep: usize) -> Self {
        Self {
            format,
            n_rep,
            n_start: 0,
            n_off: 0,
            n_sc_total: 12,
            fft_len: DEFAULT_FFT_LEN,
            cp_len: format.cp_len(DEFAULT_FFT_LEN),
            symbols_per_sg: 5,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_rep == 0 {
            return bad("n_rep must be positive".into());
        }
        if self.fft_len == 0 || self.symbols_per_sg == 0 {
            return bad("fft_len and symbols_per_sg must be positive".into());
        }
        if self.cp_len != self.format.cp_len(self.fft_len) {
            return bad(format!(
                "cp_len {} inconsistent with {:?} (expected {})",
                self.cp_len,
                self.format,
                self.format.cp_len(self.fft_len)
            ));
        }
        // Hops of +-1 and +-6 always have a legal direction only from 12 subcarriers up.
        if self.n_sc_total < 12 || self.n_sc_total > self.fft_len {
            return bad(format!("n_sc_total {} outside [12, fft_len]", self.n_sc_total));
        }
        if self.n_off >= self.n_sc_total {
            return bad(format!("n_off {} outside [0, {})", self.n_off, self.n_sc_total));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return bad("sample_rate must be positive".into());
        }
        Ok(())
    }

    /// Samples per symbol group, cyclic prefix included.
    pub fn sg_len(&self) -> usize {
        self.cp_len + self.symbols_per_sg * self.fft_len
    }

    /// Number of symbol groups.
    pub fn n_sym(&self) -> usize {
        4 * self.n_rep
    }

    pub fn preamble_len(&self) -> usize {
        self.n_sym() * self.sg_len()
    }

    pub fn subcarrier_spacing(&self) -> f64 {
        self.sample_rate / self.fft_len as f64
    }

    /// Absolute index of the first sample of symbol group `m`.
    pub fn sg_start(&self, m: usize) -> i64 {
        self.n_start + (m * self.sg_len()) as i64
    }

    pub fn samples_to_us(&self, samples: f64) -> f64 {
        samples / self.sample_rate * 1e6
    }

    pub fn us_to_samples(&self, us: f64) -> f64 {
        us * 1e-6 * self.sample_rate
    }
}

/// Subcarrier index of every symbol group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubcarrierSchedule {
    pub indices: Vec<usize>,
}

impl SubcarrierSchedule {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Deterministic hopping schedule shared by transmitter and receiver.
///
/// Unit `u` starts on `(n_off + 7u) mod n_sc_total`; inside a unit the hops
/// `+1, +6, -1` are applied, and whenever a hop would leave the band the hop
/// direction is reversed for it and for the rest of the unit.
pub fn build_schedule(cfg: &PreambleConfig) -> SubcarrierSchedule {
    let n_sc = cfg.n_sc_total as i64;
    let mut indices = Vec::with_capacity(cfg.n_sym());
    for u in 0..cfg.n_rep {
        let mut k = ((cfg.n_off + UNIT_STRIDE * u) % cfg.n_sc_total) as i64;
        let mut dir = 1i64;
        indices.push(k as usize);
        for hop in UNIT_HOPS {
            let next = k + dir * hop;
            if next < 0 || next >= n_sc {
                dir = -dir;
            }
            k += dir * hop;
            debug_assert!((0..n_sc).contains(&k));
            indices.push(k as usize);
        }
    }
    SubcarrierSchedule { indices }
}

/// Tone value at sample `q` (counted from the symbol-group start, CP included).
///
/// The tone is referenced to the first sample after the cyclic prefix, which
/// makes the CP an exact cyclic copy of the symbol tail.
pub fn sg_tone(cfg: &PreambleConfig, subcarrier: usize, q: f64) -> Complex64 {
    let arg = 2.0 * PI * subcarrier as f64 * (q - cfg.cp_len as f64) / cfg.fft_len as f64;
    Complex64::from_polar(1.0, arg)
}

/// Time-domain preamble starting at `cfg.n_start`.
pub fn gen_preamble(cfg: &PreambleConfig, sched: &SubcarrierSchedule) -> Result<IqBuffer> {
    cfg.validate()?;
    if sched.len() != cfg.n_sym() {
        return Err(Error::InvalidConfig(format!(
            "schedule has {} entries, expected {}",
            sched.len(),
            cfg.n_sym()
        )));
    }
    let sg_len = cfg.sg_len();
    let mut samples = Vec::with_capacity(cfg.preamble_len());
    for &k in &sched.indices {
        if k >= cfg.n_sc_total {
            return Err(Error::InvalidConfig(format!("subcarrier {k} out of band")));
        }
        // The tone has period fft_len, so one period is enough to index from.
        let period: Vec<Complex64> = (0..cfg.fft_len)
            .map(|j| sg_tone(cfg, k, (j + cfg.cp_len) as f64))
            .collect();
        let shift = cfg.fft_len - cfg.cp_len % cfg.fft_len;
        samples.extend((0..sg_len).map(|q| period[(q + shift) % cfg.fft_len]));
    }
    Ok(IqBuffer::new(samples, cfg.n_start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::FftPlanner;

    fn cfg(n_off: usize, n_rep: usize) -> PreambleConfig {
        PreambleConfig { n_off, ..PreambleConfig::new(Format::Format1, n_rep) }
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(build_schedule(&cfg(0, 1)).indices, vec![0, 1, 7, 6]);
        assert_eq!(build_schedule(&cfg(11, 1)).indices, vec![11, 10, 4, 5]);
        assert_eq!(build_schedule(&cfg(0, 2)).indices, vec![0, 1, 7, 6, 7, 8, 2, 3]);
    }

    /// Hand re-implementation of the hopping rule used as an oracle.
    fn oracle_schedule(n_off: usize, n_rep: usize, n_sc: usize) -> Vec<usize> {
        let mut out = vec![];
        for u in 0..n_rep {
            let start = (n_off + 7 * u) % n_sc;
            let mut seq = vec![start as i64];
            let mut sign = 1;
            for h in [1i64, 6, -1] {
                let cand = seq.last().unwrap() + sign * h;
                if cand < 0 || cand >= n_sc as i64 {
                    sign = -sign;
                }
                let v = seq.last().unwrap() + sign * h;
                seq.push(v);
            }
            out.extend(seq.into_iter().map(|v| v as usize));
        }
        out
    }

    #[test]
    fn schedule_matches_oracle_for_every_start() {
        for n_off in 0..12 {
            for n_rep in [1, 3, 8, 32] {
                let s = build_schedule(&cfg(n_off, n_rep));
                assert_eq!(s.indices, oracle_schedule(n_off, n_rep, 12));
                assert_eq!(s.len(), 4 * n_rep);
                assert!(s.indices.iter().all(|&k| k < 12));
            }
        }
    }

    #[test]
    fn format1_length_and_unit_modulus() {
        let c = cfg(0, 1);
        let x = gen_preamble(&c, &build_schedule(&c)).unwrap();
        assert_eq!(x.len(), 12288);
        let worst = x.samples.iter().map(|s| (s.norm() - 1.0).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-12);
        // subcarrier 0 in the first group is the all-ones sequence
        assert!(x.samples[..c.sg_len()].iter().all(|s| (s - Complex64::new(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn cyclic_prefix_copies_the_symbol_tail() {
        for format in [Format::Format0, Format::Format1] {
            let c = PreambleConfig { n_off: 5, ..PreambleConfig::new(format, 2) };
            let x = gen_preamble(&c, &build_schedule(&c)).unwrap();
            let l_n = c.symbols_per_sg * c.fft_len;
            for m in 0..c.n_sym() {
                let s0 = m * c.sg_len();
                for p in 0..c.cp_len {
                    let cp = x.samples[s0 + p];
                    let tail = x.samples[s0 + l_n + p];
                    assert!((cp - tail).norm() < 1e-12, "{format:?} sg {m} p {p}");
                }
            }
        }
    }

    #[test]
    fn every_symbol_is_spectrally_pure() {
        let c = PreambleConfig { n_off: 3, ..PreambleConfig::new(Format::Format0, 2) };
        let sched = build_schedule(&c);
        let x = gen_preamble(&c, &sched).unwrap();
        let fft = FftPlanner::new().plan_fft_forward(c.fft_len);
        for (m, &k) in sched.indices.iter().enumerate() {
            for p in 0..c.symbols_per_sg {
                let start = m * c.sg_len() + c.cp_len + p * c.fft_len;
                let mut buf = x.samples[start..start + c.fft_len].to_vec();
                fft.process(&mut buf);
                let total: f64 = buf.iter().map(|v| v.norm_sqr()).sum();
                assert!(buf[k].norm_sqr() / total > 1.0 - 1e-9);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let c = cfg(4, 4);
        let s = build_schedule(&c);
        assert_eq!(gen_preamble(&c, &s).unwrap(), gen_preamble(&c, &s).unwrap());
    }

    #[test]
    fn rejects_inconsistent_config() {
        let mut c = cfg(0, 1);
        c.cp_len = 128;
        assert!(c.validate().is_err());
        let c = cfg(12, 1);
        assert!(c.validate().is_err());
        let c = cfg(0, 1);
        let short = SubcarrierSchedule { indices: vec![0, 1] };
        assert!(gen_preamble(&c, &short).is_err());
    }

    #[test]
    fn subcarrier_spacing_is_derived() {
        assert!((PreambleConfig::default().subcarrier_spacing() - 3750.0).abs() < 1e-9);
    }
}
