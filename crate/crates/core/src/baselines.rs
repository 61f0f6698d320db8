//! Reference ToA estimators: differential correlation, and an undecimated
//! Haar wavelet envelope followed by a Gaussian mean-change CUSUM.

use std::f64::consts::SQRT_2;
use std::ops::Range;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iq::IqBuffer;

/// Parameters of the Gaussian mean-change hypothesis pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CusumConfig {
    pub theta0: f64,
    pub theta1: f64,
    pub sigma: f64,
    /// Wavelet depth used by [`dwt_cusum_toa`].
    pub levels: usize,
}

impl CusumConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig("sigma must be positive".into()));
        }
        if self.theta0 == self.theta1 || !self.theta0.is_finite() || !self.theta1.is_finite() {
            return Err(Error::InvalidConfig("theta0 and theta1 must be finite and distinct".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DwtCusumConfig {
    pub levels: usize,
    /// Samples after the replica start that are analysed; `None` uses the whole overlap.
    pub span: Option<usize>,
    /// Hypothesis parameters; estimated from the leading and trailing tenth when absent.
    pub cusum: Option<CusumConfig>,
    /// Passes that re-estimate the estimated levels around the previous change point.
    pub refine_passes: usize,
}

impl Default for DwtCusumConfig {
    fn default() -> Self {
        // twice the default delay window: noise leads, signal trails
        Self { levels: 8, span: Some(2688), cusum: None, refine_passes: 5 }
    }
}

/// Delay hypothesis maximizing the magnitude of the lag-`lag` differential correlation.
///
/// For delay `d` the statistic is
/// `sum_n rx(n+d) conj(rep(n)) conj(rx(n+d+lag) conj(rep(n+lag)))`; the
/// constant CFO phase factors out of the magnitude.
pub fn diff_corr_toa(rx: &IqBuffer, replica: &IqBuffer, lag: usize, search: Range<i64>) -> Result<i64> {
    if search.is_empty() {
        return Err(Error::InvalidConfig("empty delay search range".into()));
    }
    if lag == 0 || replica.len() <= lag || rx.len() <= lag {
        return Err(Error::InvalidConfig(format!("lag {lag} does not fit the buffers")));
    }
    let a: Vec<Complex64> = (0..rx.len() - lag).map(|i| rx.samples[i] * rx.samples[i + lag].conj()).collect();
    let b: Vec<Complex64> = (0..replica.len() - lag)
        .map(|i| replica.samples[i].conj() * replica.samples[i + lag])
        .collect();
    // C(d) = sum_i a[i + k] b[i] with k = d + replica.base - rx.base
    let off = replica.base_index - rx.base_index;
    let m = (a.len() + b.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut fa = a;
    fa.resize(m, Complex64::new(0.0, 0.0));
    let mut fb: Vec<Complex64> = b;
    fb.resize(m, Complex64::new(0.0, 0.0));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    let mut c: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y.conj()).collect();
    inv.process(&mut c);
    let mut best = (search.start, f64::MIN);
    for d in search {
        let k = d + off;
        if k.unsigned_abs() as usize >= m {
            continue;
        }
        let v = c[k.rem_euclid(m as i64) as usize].norm();
        if v > best.1 {
            best = (d, v);
        }
    }
    Ok(best.0)
}

/// Undecimated Haar decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Sdwt {
    /// `details[j]` holds level `j + 1`.
    pub details: Vec<Vec<f64>>,
    /// Approximation at the deepest level.
    pub approx: Vec<f64>,
}

/// Causal a-trous Haar transform with orthonormal filters and clamped left edge.
///
/// Level `j` combines samples `2^(j-1)` apart, so every level keeps the input
/// length and white noise keeps its variance at every level.
pub fn sdwt(x: &[f64], levels: usize) -> Result<Sdwt> {
    if levels == 0 {
        return Err(Error::InvalidConfig("levels must be positive".into()));
    }
    let need = 1usize << levels;
    if x.len() < need {
        return Err(Error::SeriesTooShort { len: x.len(), need });
    }
    let mut approx = x.to_vec();
    let mut details = Vec::with_capacity(levels);
    for j in 0..levels {
        let step = 1usize << j;
        let prev = |n: usize| approx[n.saturating_sub(step)];
        let d: Vec<f64> = (0..approx.len()).map(|n| (approx[n] - prev(n)) / SQRT_2).collect();
        let a: Vec<f64> = (0..approx.len()).map(|n| (approx[n] + prev(n)) / SQRT_2).collect();
        details.push(d);
        approx = a;
    }
    Ok(Sdwt { details, approx })
}

/// Most likely change point of a Gaussian mean shift.
///
/// With `S_k` the cumulative log-likelihood ratio of the first `k` samples,
/// the change is placed after the minimum of `S`; the returned `tau` is the
/// index of the first post-change sample and `llr_peak = S_N - min S`.
pub fn cusum_detect(x: &[f64], cfg: &CusumConfig) -> Result<(usize, f64)> {
    cfg.validate()?;
    let gain = (cfg.theta1 - cfg.theta0) / (cfg.sigma * cfg.sigma);
    let mid = 0.5 * (cfg.theta0 + cfg.theta1);
    let mut s = 0.0;
    let mut min = (0usize, 0.0);
    for (i, v) in x.iter().enumerate() {
        s += gain * (v - mid);
        if s < min.1 {
            min = (i + 1, s);
        }
    }
    Ok((min.0, s - min.1))
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len().max(1) as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// ToA in samples (relative to the replica start) from the envelope step.
pub fn dwt_cusum_toa(rx: &IqBuffer, replica: &IqBuffer, cfg: &DwtCusumConfig) -> Result<f64> {
    let start = rx.base_index.max(replica.base_index);
    let end = rx.end_index().min(replica.end_index());
    if end <= start {
        return Err(Error::EmptyOverlap);
    }
    let mut len = (end - start) as usize;
    if let Some(span) = cfg.span {
        len = len.min(span);
    }
    // |rx conj(rep)| = |rx| for a unit-modulus replica
    let env: Vec<f64> = (0..len)
        .map(|i| (rx.at(start + i as i64).unwrap_or_default() * replica.at(start + i as i64).unwrap_or_default().conj()).norm())
        .collect();
    let dec = sdwt(&env, cfg.levels)?;
    // the approximation is a causal moving sum over 2^L samples
    let width = (1usize << cfg.levels) as f64;
    let smooth: Vec<f64> = dec.approx.iter().map(|v| v / width.sqrt()).collect();
    let params = match &cfg.cusum {
        Some(c) => c.clone(),
        None => {
            let tenth = (smooth.len() / 10).max(1);
            let (t0, s0) = mean_std(&smooth[..tenth]);
            let (t1, s1) = mean_std(&smooth[smooth.len() - tenth..]);
            let sigma = (0.5 * (s0 * s0 + s1 * s1)).sqrt().max(1e-12);
            CusumConfig { theta0: t0, theta1: t1, sigma, levels: cfg.levels }
        }
    };
    if params.theta0 == params.theta1 {
        return Err(Error::Degenerate("envelope shows no level change".into()));
    }
    let (mut tau, _) = cusum_detect(&smooth, &params)?;
    if cfg.cusum.is_none() {
        // re-estimate both levels from the split the previous pass found
        for _ in 0..cfg.refine_passes {
            if tau < 2 || tau + 2 > smooth.len() {
                break;
            }
            let (t0, s0) = mean_std(&smooth[..tau]);
            let (t1, s1) = mean_std(&smooth[tau..]);
            if t0 == t1 {
                break;
            }
            let sigma = (0.5 * (s0 * s0 + s1 * s1)).sqrt().max(1e-12);
            let next = cusum_detect(&smooth, &CusumConfig { theta0: t0, theta1: t1, sigma, levels: cfg.levels })?.0;
            if next == tau {
                break;
            }
            tau = next;
        }
    }
    let group_delay = (width - 1.0) / 2.0;
    // centre of the step inside the moving sum, then back to the first signal sample
    Ok(tau as f64 - group_delay - 0.5 + (start - replica.base_index) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_impairments, ImpairmentConfig};
    use crate::waveform::{build_schedule, gen_preamble, Format, PreambleConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn replica(n_rep: usize) -> IqBuffer {
        let cfg = PreambleConfig::new(Format::Format1, n_rep);
        gen_preamble(&cfg, &build_schedule(&cfg)).unwrap()
    }

    /// Direct evaluation of the correlation statistic.
    fn brute_corr(rx: &IqBuffer, rep: &IqBuffer, lag: usize, d: i64) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..rep.len() - lag {
            let n = rep.base_index + i as i64;
            let r0 = rx.at(n + d).unwrap_or_default();
            let r1 = rx.at(n + d + lag as i64).unwrap_or_default();
            acc += r0 * rep.samples[i].conj() * (r1 * rep.samples[i + lag].conj()).conj();
        }
        acc.norm()
    }

    #[test]
    fn diff_corr_zero_delay() {
        let x = replica(1);
        let imp = ImpairmentConfig { max_toa_samples: 400.0, ..Default::default() };
        let rx = apply_impairments(&x, &imp, None).unwrap();
        assert_eq!(diff_corr_toa(&rx, &x, 512, 0..400).unwrap(), 0);
    }

    #[test]
    fn diff_corr_matches_brute_force_and_truth() {
        let x = replica(1);
        let imp = ImpairmentConfig { toa_samples: 200.0, cfo_hz: 1500.0, max_toa_samples: 400.0, ..Default::default() };
        let rx = apply_impairments(&x, &imp, None).unwrap();
        let got = diff_corr_toa(&rx, &x, 512, 0..400).unwrap();
        let oracle = (0..400)
            .max_by(|&a, &b| brute_corr(&rx, &x, 512, a).total_cmp(&brute_corr(&rx, &x, 512, b)))
            .unwrap();
        assert_eq!(got, oracle);
        assert_eq!(got, 200);
    }

    #[test]
    fn diff_corr_exact_over_cfo_range() {
        let x = replica(1);
        for (d, cfo) in [(0.0, -1600.0), (37.0, 1600.0), (511.0, -250.0), (1200.0, 999.0)] {
            let imp = ImpairmentConfig { toa_samples: d, cfo_hz: cfo, ..Default::default() };
            let rx = apply_impairments(&x, &imp, None).unwrap();
            assert_eq!(diff_corr_toa(&rx, &x, 512, 0..1345).unwrap(), d as i64);
        }
    }

    #[test]
    fn diff_corr_rejects_empty_search() {
        let x = replica(1);
        assert!(diff_corr_toa(&x, &x, 512, 5..5).is_err());
    }

    #[test]
    fn sdwt_constant_has_zero_details() {
        let dec = sdwt(&[2.5; 1024], 8).unwrap();
        assert_eq!(dec.details.len(), 8);
        assert!(dec.details.iter().all(|d| d.len() == 1024 && d.iter().all(|v| v.abs() < 1e-12)));
    }

    #[test]
    fn sdwt_step_is_local_at_level_one() {
        let c = 300;
        let x: Vec<f64> = (0..1024).map(|n| if n < c { 0.0 } else { 1.0 }).collect();
        let d1 = &sdwt(&x, 3).unwrap().details[0];
        for (n, v) in d1.iter().enumerate() {
            if n == c {
                assert!((v - 1.0 / SQRT_2).abs() < 1e-12);
            } else {
                assert_eq!(*v, 0.0, "n={n}");
            }
        }
    }

    #[test]
    fn sdwt_white_noise_gain() {
        // equivalent filters are orthonormal: squared taps sum to one at every level
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let levels = 8;
        let dec = sdwt(&x, levels).unwrap();
        for (j, d) in dec.details.iter().enumerate() {
            let tail = &d[1 << levels..];
            let (_, s) = mean_std(tail);
            let gain = 1.0;
            assert!((s * s - gain).abs() < 0.05 * gain, "level {} variance {}", j + 1, s * s);
        }
    }

    #[test]
    fn sdwt_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x: Vec<f64> = (0..600).map(|_| StandardNormal.sample(&mut rng)).collect();
        let k = 37;
        let mut y = vec![x[0]; k];
        y.extend_from_slice(&x);
        let a = sdwt(&x, 5).unwrap();
        let b = sdwt(&y, 5).unwrap();
        for (da, db) in a.details.iter().zip(&b.details) {
            for n in 0..x.len() {
                assert!((da[n] - db[n + k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sdwt_rejects_short_input() {
        assert!(sdwt(&[0.0; 100], 8).is_err());
    }

    #[test]
    fn cusum_noiseless_step() {
        let x: Vec<f64> = (0..1000).map(|n| if n < 500 { 0.0 } else { 1.0 }).collect();
        let cfg = CusumConfig { theta0: 0.0, theta1: 1.0, sigma: 1.0, levels: 8 };
        let (tau, peak) = cusum_detect(&x, &cfg).unwrap();
        assert_eq!(tau, 500);
        assert!((peak - 250.0).abs() < 1e-9);
    }

    #[test]
    fn cusum_null_has_no_confident_change() {
        let cfg = CusumConfig { theta0: 0.0, theta1: 1.0, sigma: 1.0, levels: 8 };
        let (_, peak) = cusum_detect(&[0.0; 1000], &cfg).unwrap();
        assert!(peak <= 0.0);
    }

    #[test]
    fn cusum_noisy_step() {
        let cfg = CusumConfig { theta0: 0.0, theta1: 1.0, sigma: 1.0, levels: 8 };
        let mut hits = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..1000)
                .map(|n| if n < 500 { 0.0 } else { 1.0 } + { let z: f64 = StandardNormal.sample(&mut rng); z })
                .collect();
            let (tau, _) = cusum_detect(&x, &cfg).unwrap();
            if (tau as i64 - 500).abs() <= 10 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "{hits} of 100 within 10 samples");
    }

    #[test]
    fn cusum_invariant_to_affine_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..800)
            .map(|n| if n < 300 { 0.2 } else { 0.9 } + 0.5 * { let z: f64 = StandardNormal.sample(&mut rng); z })
            .collect();
        let cfg = CusumConfig { theta0: 0.2, theta1: 0.9, sigma: 0.5, levels: 8 };
        let (a, _) = cusum_detect(&x, &cfg).unwrap();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let cfg2 = CusumConfig { theta0: -0.4, theta1: 1.7, sigma: 1.5, levels: 8 };
        let (b, _) = cusum_detect(&y, &cfg2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cusum_rejects_equal_means() {
        let cfg = CusumConfig { theta0: 1.0, theta1: 1.0, sigma: 1.0, levels: 8 };
        assert!(cusum_detect(&[0.0], &cfg).is_err());
    }

    #[test]
    fn dwt_cusum_noiseless_onset() {
        let x = replica(2);
        let imp = ImpairmentConfig { toa_samples: 384.0, cfo_hz: 700.0, ..Default::default() };
        let rx = apply_impairments(&x, &imp, None).unwrap();
        let cfg = DwtCusumConfig::default();
        let toa = dwt_cusum_toa(&rx, &x, &cfg).unwrap();
        assert!((toa - 384.0).abs() <= 8.0, "estimated {toa}");
    }
}
