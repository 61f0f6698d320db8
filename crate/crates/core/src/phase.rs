//! Dechirping and wrapped-phase extraction.
//!
//! Multiplying the received signal by the conjugate replica leaves a residual
//! tone per symbol group whose wrapped phase is a sawtooth. Its period is the
//! inverse of the CFO and its wrap positions carry the delay.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::iq::IqBuffer;
use crate::waveform::PreambleConfig;

/// Default moving-average length. Odd, so the average is centred.
pub const DEFAULT_SMOOTH_WINDOW: usize = 255;

/// Re-sum the running window from scratch this often to stop drift.
const RESUM_EVERY: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSeries {
    /// Wrapped phase in `[-pi, pi)`.
    pub phase: Vec<f64>,
    pub base_index: i64,
    pub sg_len: usize,
}

impl PhaseSeries {
    pub fn len(&self) -> usize {
        self.phase.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phase.is_empty()
    }

    pub fn end_index(&self) -> i64 {
        self.base_index + self.phase.len() as i64
    }

    /// Sub-series covering `[start, end)` clipped to the available samples.
    pub fn slice(&self, start: i64, end: i64) -> PhaseSeries {
        let s = start.clamp(self.base_index, self.end_index());
        let e = end.clamp(s, self.end_index());
        let lo = (s - self.base_index) as usize;
        let hi = (e - self.base_index) as usize;
        PhaseSeries { phase: self.phase[lo..hi].to_vec(), base_index: s, sg_len: self.sg_len }
    }

    /// `sample_index,phase` rows with a header line.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["sample_index", "phase"])?;
        for (i, p) in self.phase.iter().enumerate() {
            wtr.write_record([(self.base_index + i as i64).to_string(), format!("{p:.9}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Wrap an angle into `[-pi, pi)`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y >= PI {
        -PI
    } else {
        y
    }
}

/// Sample-by-sample product of `rx` with the conjugate replica over their overlap.
pub fn dechirp(rx: &IqBuffer, replica: &IqBuffer) -> Result<IqBuffer> {
    let start = rx.base_index.max(replica.base_index);
    let end = rx.end_index().min(replica.end_index());
    if end <= start {
        return Err(Error::EmptyOverlap);
    }
    let a = (start - rx.base_index) as usize;
    let b = (start - replica.base_index) as usize;
    let n = (end - start) as usize;
    let samples = rx.samples[a..a + n]
        .iter()
        .zip(&replica.samples[b..b + n])
        .map(|(r, s)| r * s.conj())
        .collect();
    Ok(IqBuffer::new(samples, start))
}

/// Complex moving average over `w` samples, centred (w odd).
pub fn moving_average(x: &[Complex64], w: usize) -> Vec<Complex64> {
    if w == 0 || x.len() < w {
        return Vec::new();
    }
    let scale = 1.0 / w as f64;
    let mut out = Vec::with_capacity(x.len() - w + 1);
    let mut acc: Complex64 = x[..w].iter().sum();
    out.push(acc * scale);
    for i in 1..=x.len() - w {
        if i % RESUM_EVERY == 0 {
            acc = x[i..i + w].iter().sum();
        } else {
            acc += x[i + w - 1] - x[i - 1];
        }
        out.push(acc * scale);
    }
    out
}

/// Smoothed wrapped phase of a dechirped buffer.
///
/// The output is shorter by `window - 1` samples and starts `(window - 1) / 2`
/// samples after the input, so every value sits at the centre of its window.
pub fn extract_phase(r: &IqBuffer, smooth_window: usize, sg_len: usize) -> Result<PhaseSeries> {
    if smooth_window == 0 || smooth_window % 2 == 0 {
        return Err(Error::InvalidConfig(format!(
            "smoothing window must be odd and positive, got {smooth_window}"
        )));
    }
    if r.len() < smooth_window {
        return Err(Error::SeriesTooShort { len: r.len(), need: smooth_window });
    }
    let phase = moving_average(&r.samples, smooth_window)
        .into_iter()
        .map(|z| wrap_phase(z.arg()))
        .collect();
    Ok(PhaseSeries {
        phase,
        base_index: r.base_index + (smooth_window as i64 - 1) / 2,
        sg_len,
    })
}

/// One segment per symbol group of `cfg`, trimmed by `guard` samples at each end.
///
/// Segments that fall outside the series are returned empty so that the
/// result always has one entry per symbol group.
pub fn segment_by_sg(ps: &PhaseSeries, cfg: &PreambleConfig, guard: usize) -> Vec<PhaseSeries> {
    let sg_len = cfg.sg_len() as i64;
    let g = guard as i64;
    (0..cfg.n_sym())
        .map(|m| {
            let s = cfg.sg_start(m);
            ps.slice(s + g, (s + sg_len - g).max(s + g))
        })
        .collect()
}

/// Indices (relative to the series) where the wrapped phase jumps by more than pi.
pub fn wrap_indices(phase: &[f64]) -> Vec<usize> {
    phase
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[1] - w[0]).abs() > PI)
        .map(|(i, _)| i + 1)
        .collect()
}

/// Undo 2pi jumps.
pub fn unwrap(phase: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phase.len());
    let mut offset = 0.0;
    for (i, &p) in phase.iter().enumerate() {
        if i > 0 {
            let d = p - phase[i - 1];
            if d > PI {
                offset -= 2.0 * PI;
            } else if d < -PI {
                offset += 2.0 * PI;
            }
        }
        out.push(p + offset);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_impairments, ImpairmentConfig};
    use crate::waveform::{build_schedule, gen_preamble, Format, SubcarrierSchedule};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cfg1() -> PreambleConfig {
        PreambleConfig::new(Format::Format1, 1)
    }

    fn replica(cfg: &PreambleConfig) -> IqBuffer {
        gen_preamble(cfg, &build_schedule(cfg)).unwrap()
    }

    #[test]
    fn dechirp_of_replica_is_unity() {
        let x = replica(&cfg1());
        let r = dechirp(&x, &x).unwrap();
        assert!(r.samples.iter().all(|s| (s - Complex64::new(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn dechirp_exposes_cfo_tone() {
        let cfg = cfg1();
        let x = replica(&cfg);
        let imp = ImpairmentConfig { cfo_hz: 1500.0, max_toa_samples: 0.0, ..Default::default() };
        let rx = apply_impairments(&x, &imp, None).unwrap();
        let r = dechirp(&rx, &x).unwrap();
        for (n, s) in r.samples.iter().enumerate() {
            let want = Complex64::from_polar(1.0, 2.0 * PI * 1500.0 / 1.92e6 * n as f64);
            assert!((s - want).norm() < 1e-9);
        }
    }

    #[test]
    fn dechirp_without_overlap_fails() {
        let x = replica(&cfg1());
        let far = x.rebased(1_000_000);
        assert!(matches!(dechirp(&x, &far), Err(Error::EmptyOverlap)));
    }

    #[test]
    fn noise_only_angles_are_uniform() {
        // Kuiper test at the 1% level
        let cfg = cfg1();
        let x = replica(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise: Vec<Complex64> = (0..x.len())
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im)
            })
            .collect();
        let r = dechirp(&IqBuffer::new(noise, 0), &x).unwrap();
        let mut u: Vec<f64> = r.samples.iter().map(|s| (s.arg() + PI) / (2.0 * PI)).collect();
        u.sort_by(f64::total_cmp);
        let n = u.len() as f64;
        let (mut d_plus, mut d_minus) = (0.0f64, 0.0f64);
        for (i, v) in u.iter().enumerate() {
            d_plus = d_plus.max((i + 1) as f64 / n - v);
            d_minus = d_minus.max(v - i as f64 / n);
        }
        let v = (d_plus + d_minus) * (n.sqrt() + 0.155 + 0.24 / n.sqrt());
        assert!(v < 2.001, "Kuiper statistic {v}");
    }

    #[test]
    fn constant_phasor_keeps_its_angle() {
        let theta = 0.7;
        let r = IqBuffer::new(vec![Complex64::from_polar(2.0, theta); 500], 10);
        for w in [1, 3, 17, 255] {
            let ps = extract_phase(&r, w, 3072).unwrap();
            assert_eq!(ps.len(), 500 - w + 1);
            assert_eq!(ps.base_index, 10 + (w as i64 - 1) / 2);
            assert!(ps.phase.iter().all(|p| (p - theta).abs() < 1e-12));
        }
    }

    #[test]
    fn window_must_be_odd_and_fit() {
        let r = IqBuffer::new(vec![Complex64::new(1.0, 0.0); 10], 0);
        assert!(extract_phase(&r, 4, 3072).is_err());
        assert!(extract_phase(&r, 11, 3072).is_err());
    }

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(PI), -PI);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_phase(-7.0) - (-7.0 + 2.0 * PI)).abs() < 1e-12);
    }

    fn fig3_phase(sched: SubcarrierSchedule, window: usize) -> (PreambleConfig, PhaseSeries) {
        let cfg = cfg1();
        let x = gen_preamble(&cfg, &sched).unwrap();
        let imp = ImpairmentConfig { toa_samples: 200.0, cfo_hz: 1500.0, ..Default::default() };
        let rx = apply_impairments(&x, &imp, None).unwrap();
        let r = dechirp(&rx, &x).unwrap();
        (cfg, extract_phase(&r, window, 3072).unwrap())
    }

    #[test]
    fn fig3_wraps_every_1280_samples() {
        let (_, ps) = fig3_phase(build_schedule(&cfg1()), 1);
        let f = 1500.0 / 1.92e6;
        // clean region of symbol group 0
        let seg = ps.slice(200, 3072);
        for (i, p) in seg.phase.iter().enumerate() {
            let n = (200 + i) as f64;
            assert!((p - wrap_phase(2.0 * PI * f * (n - 200.0))).abs() < 1e-9);
        }
        let wraps: Vec<i64> = wrap_indices(&seg.phase).iter().map(|&i| seg.base_index + i as i64).collect();
        assert_eq!(wraps.len(), 2);
        assert!((wraps[0] - 840).abs() <= 1 && wraps[1] - wraps[0] == 1280, "{wraps:?}");
    }

    #[test]
    fn subcarrier_intercept_shifts_the_phase() {
        let sched = SubcarrierSchedule { indices: vec![6, 7, 1, 0] };
        let (_, ps) = fig3_phase(sched, 1);
        let f = 1500.0 / 1.92e6;
        let intercept = -2.0 * PI * 6.0 / 512.0 * 200.0;
        assert!((intercept + 14.726_215_563_702_155).abs() < 1e-9);
        let seg = ps.slice(200, 3072);
        for (i, p) in seg.phase.iter().enumerate() {
            let n = (200 + i) as f64;
            let want = wrap_phase(2.0 * PI * f * (n - 200.0) + intercept);
            let diff = wrap_phase(p - want);
            assert!(diff.abs() < 1e-9, "n={n}");
        }
    }

    #[test]
    fn smoothing_keeps_wrap_positions() {
        let (_, raw) = fig3_phase(build_schedule(&cfg1()), 1);
        let raw_wraps = wrap_indices(&raw.slice(300, 2900).phase);
        for w in [3, 15, 33, 65] {
            let (_, ps) = fig3_phase(build_schedule(&cfg1()), w);
            let wraps = wrap_indices(&ps.slice(300, 2900).phase);
            assert_eq!(wraps.len(), raw_wraps.len());
            for (a, b) in wraps.iter().zip(&raw_wraps) {
                assert!((*a as f64 - *b as f64).abs() < w as f64 / 2.0);
            }
        }
    }

    #[test]
    fn segmentation_counts_and_lengths() {
        let cfg = cfg1();
        let ps = PhaseSeries { phase: vec![0.0; cfg.preamble_len()], base_index: 0, sg_len: 3072 };
        let segs = segment_by_sg(&ps, &cfg, 0);
        assert_eq!(segs.len(), 4);
        assert!(segs.iter().all(|s| s.len() == 3072));
        let segs = segment_by_sg(&ps, &cfg, 192);
        assert!(segs.iter().all(|s| s.len() == 2688));
        assert_eq!(segs[1].base_index, 3072 + 192);
        let cfg8 = PreambleConfig::new(Format::Format1, 8);
        let ps8 = PhaseSeries { phase: vec![0.0; cfg8.preamble_len()], base_index: 0, sg_len: 3072 };
        assert_eq!(segment_by_sg(&ps8, &cfg8, 0).len(), 32);
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let ps = PhaseSeries { phase: vec![0.5, -1.0], base_index: 7, sg_len: 3072 };
        let mut out = Vec::new();
        ps.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "sample_index,phase\n7,0.500000000\n8,-1.000000000\n");
    }

    #[test]
    fn unwrap_restores_a_ramp() {
        let ramp: Vec<f64> = (0..1000).map(|n| 0.01 * n as f64).collect();
        let wrapped: Vec<f64> = ramp.iter().map(|&p| wrap_phase(p)).collect();
        let un = unwrap(&wrapped);
        for (a, b) in un.iter().zip(&ramp) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
