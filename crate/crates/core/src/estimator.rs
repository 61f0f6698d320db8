//! Two-stage ToA/CFO estimation from wrap positions of the dechirped phase.
//!
//! After a known offset `df` is mixed in at the receiver, symbol group `m`
//! (subcarrier `k_m`) dechirps to the phase
//! `2pi F (n - n_start) - 2pi (F - df + k_m / N) D` with `F` the total
//! normalized frequency. The sawtooth wraps wherever that phase crosses
//! `pi`, so each wrap position `c` satisfies
//! `F (c - n_start) - (F - df + k_m / N) D + k_m s / N - 1/2 = integer`,
//! where `s` is the integer shift already applied to the replica. The coarse
//! stage locates `D` to within the residual window from detector output; the
//! fine stage refines wraps at sample level and solves the wrap equations.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iq::IqBuffer;
use crate::phase::{dechirp, extract_phase, segment_by_sg, wrap_phase, PhaseSeries, DEFAULT_SMOOTH_WINDOW};
use crate::tire::{detect_with_model, train_tire, ChangePoint, ChangePointSet, TireConfig, TireModel};
use crate::waveform::{build_schedule, gen_preamble, PreambleConfig, SubcarrierSchedule};

/// Doppler rate as a function of ToA, from satellite geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DopplerMap {
    /// `(toa_us, rate_hz_per_s)`, strictly increasing in ToA.
    pub anchors: Vec<(f64, f64)>,
}

impl Default for DopplerMap {
    fn default() -> Self {
        Self { anchors: vec![(104.7, -297.0), (371.3, -252.0), (638.0, -215.0)] }
    }
}

impl DopplerMap {
    pub fn new(anchors: Vec<(f64, f64)>) -> Result<Self> {
        let map = Self { anchors };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchors.len() < 2 {
            return Err(Error::InvalidConfig("Doppler map needs at least two anchors".into()));
        }
        if self.anchors.iter().any(|(t, r)| !t.is_finite() || !r.is_finite()) {
            return Err(Error::InvalidConfig("Doppler map anchors must be finite".into()));
        }
        if self.anchors.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidConfig("Doppler map ToA must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Linear interpolation between anchors, linear extrapolation outside.
    pub fn rate_at(&self, toa_us: f64) -> f64 {
        let a = &self.anchors;
        let i = match a.iter().position(|(t, _)| *t > toa_us) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => a.len() - 2,
        }
        .min(a.len() - 2);
        let (t0, r0) = a[i];
        let (t1, r1) = a[i + 1];
        r0 + (r1 - r0) * (toa_us - t0) / (t1 - t0)
    }

    /// Index of the candidate whose implied rate is closest to `measured`.
    pub fn pick(&self, candidates_us: &[f64], measured: f64) -> Option<usize> {
        candidates_us
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = (self.rate_at(*a.1) - measured).abs();
                let db = (self.rate_at(*b.1) - measured).abs();
                da.total_cmp(&db).then(a.0.cmp(&b.0))
            })
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignHypothesis {
    Pos,
    Neg,
}

impl SignHypothesis {
    pub fn sign(self) -> f64 {
        match self {
            SignHypothesis::Pos => 1.0,
            SignHypothesis::Neg => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Magnitude of the offset mixed in before analysis.
    pub injected_offset_hz: f64,
    pub smooth_window: usize,
    /// Largest ToA searched.
    pub d_max_us: f64,
    /// Bound on the ToA left after coarse compensation.
    pub residual_us: f64,
    /// Admissible `|F|` band for wrap spacings, in Hz.
    pub min_abs_freq_hz: f64,
    pub max_abs_freq_hz: f64,
    /// Half-width of the sample-level wrap fit.
    pub refine_half_width: usize,
    /// Minimum `|sum r| / sum |r|` for a refined wrap to be kept.
    pub min_coherence: f64,
    /// Threshold of the paired test that decides whether two candidates tie.
    pub tie_z: f64,
    /// Accuracy of the measured Doppler rate; zero disables the residual-rate fit.
    pub rate_sigma_hz_per_s: f64,
    pub tire: TireConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            injected_offset_hz: 1000.0,
            smooth_window: DEFAULT_SMOOTH_WINDOW,
            d_max_us: 700.0,
            residual_us: 100.0,
            min_abs_freq_hz: 900.0,
            max_abs_freq_hz: 1700.0,
            refine_half_width: 256,
            min_coherence: 0.3,
            tie_z: 3.0,
            rate_sigma_hz_per_s: 10.0,
            tire: TireConfig::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.tire.validate()?;
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.injected_offset_hz > 0.0) {
            return bad("injected_offset_hz must be positive");
        }
        if self.smooth_window % 2 == 0 {
            return bad("smooth_window must be odd");
        }
        if !(self.d_max_us > 0.0 && self.residual_us > 0.0) {
            return bad("d_max_us and residual_us must be positive");
        }
        if !(self.min_abs_freq_hz > 0.0 && self.max_abs_freq_hz > self.min_abs_freq_hz) {
            return bad("frequency band must satisfy 0 < min < max");
        }
        if self.refine_half_width < 8 {
            return bad("refine_half_width >= 8 required");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub toa_us: f64,
    pub implied_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub coarse_cfo_hz: f64,
    /// Output of the three-sigma period average, before the joint fit.
    pub fine_cfo_hz: f64,
    pub coarse_points: usize,
    /// Variance of the pooled wrap spacings, in squared samples.
    pub coarse_distance_var: f64,
    pub fine_wraps: usize,
    pub coarse_rms_cycles: f64,
    pub fine_rms_cycles: f64,
    /// Alias candidates of the coarse stage and the index picked.
    pub coarse_candidates: Vec<Candidate>,
    pub coarse_chosen: usize,
    pub doppler_tiebreak: bool,
    /// Set when no in-segment spacing survived and the coarse slope was used.
    pub fine_cfo_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncEstimate {
    pub coarse_toa_us: f64,
    pub fine_toa_us: f64,
    /// CFO with the injected offset removed.
    pub cfo_hz: f64,
    pub t_ph_samples: f64,
    /// Absolute index of the refined wrap that anchors the candidates.
    pub first_wrap_index: f64,
    pub candidates: Vec<Candidate>,
    pub chosen: usize,
    pub sign_hypothesis: SignHypothesis,
    pub diagnostics: Diagnostics,
}

impl SyncEstimate {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Mixes `exp(j 2pi offset (n - n_ref) / fs)` into `rx`.
pub fn inject_offset_at(rx: &IqBuffer, offset_hz: f64, n_ref: i64, sample_rate: f64) -> IqBuffer {
    let f = offset_hz / sample_rate;
    let samples = rx
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let m = (rx.base_index + i as i64 - n_ref) as f64;
            s * Complex64::from_polar(1.0, 2.0 * PI * f * m)
        })
        .collect();
    IqBuffer::new(samples, rx.base_index)
}

/// Adds `+1000 Hz` or `-1000 Hz`, referenced to the first sample of `rx`.
pub fn inject_offset(rx: &IqBuffer, hypothesis: SignHypothesis, sample_rate: f64) -> IqBuffer {
    inject_offset_at(rx, hypothesis.sign() * 1000.0, rx.base_index, sample_rate)
}

/// Re-labels `rx` so that a preamble delayed by `round(coarse)` lines up with the nominal replica.
pub fn compensate_delay(rx: &IqBuffer, coarse_toa_us: f64, sample_rate: f64) -> IqBuffer {
    let shift = (coarse_toa_us * 1e-6 * sample_rate).round() as i64;
    rx.rebased(rx.base_index - shift)
}

/// Iterative mean +- 3 std rejection until nothing changes.
pub fn three_sigma(values: &[f64]) -> Vec<f64> {
    let mut kept = values.to_vec();
    loop {
        if kept.len() < 2 {
            return kept;
        }
        let n = kept.len() as f64;
        let mean = kept.iter().sum::<f64>() / n;
        let std = (kept.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let next: Vec<f64> = kept.iter().copied().filter(|v| (v - mean).abs() <= 3.0 * std).collect();
        if next.len() == kept.len() {
            return kept;
        }
        kept = next;
    }
}

/// Consecutive in-segment distances, optionally restricted to `[lo, hi]`.
fn pooled_distances(segments: &[ChangePointSet], band: Option<(f64, f64)>) -> Vec<f64> {
    segments
        .iter()
        .flat_map(|s| s.points.windows(2).map(|w| w[1].index - w[0].index))
        .filter(|d| band.is_none_or(|(lo, hi)| *d >= lo && *d <= hi))
        .collect()
}

/// Period-averaged CFO magnitude in Hz from per-segment change points.
pub fn fine_cfo(segments: &[ChangePointSet], sample_rate: f64) -> Result<f64> {
    fine_cfo_in(segments, sample_rate, None)
}

/// As [`fine_cfo`], discarding spacings outside `band` (samples) first.
pub fn fine_cfo_in(segments: &[ChangePointSet], sample_rate: f64, band: Option<(f64, f64)>) -> Result<f64> {
    let d = three_sigma(&pooled_distances(segments, band));
    if d.is_empty() {
        return Err(Error::EstimationFailed("no usable change-point distances".into()));
    }
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    if mean <= 0.0 {
        return Err(Error::EstimationFailed("non-positive mean period".into()));
    }
    Ok(sample_rate / mean)
}

/// Terms of the wrap equation beyond the plain single-group case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrapModel {
    /// Total normalized frequency seen in the phase.
    pub f_total: f64,
    /// Normalized offset that was mixed in at the receiver.
    pub injected: f64,
    pub n_sc: usize,
    /// Integer shift already applied to the replica.
    pub replica_shift: i64,
}

/// All delays in `[lo, hi]` samples consistent with a wrap at `n_l`.
pub fn solve_toa_candidates_in(n_l: f64, model: &WrapModel, cfg: &PreambleConfig, lo: f64, hi: f64) -> Result<Vec<f64>> {
    let f = model.f_total;
    if f == 0.0 || !f.is_finite() {
        return Err(Error::Degenerate("zero frequency gives no wraps".into()));
    }
    let kn = model.n_sc as f64 / cfg.fft_len as f64;
    let den = f - model.injected + kn;
    if den.abs() < 1e-12 {
        return Err(Error::Degenerate("wrap positions do not depend on the delay".into()));
    }
    let sigma = f.signum();
    let num0 = f * (n_l - cfg.n_start as f64) + kn * model.replica_shift as f64 - sigma / 2.0;
    // D = (num0 + k) / den for integer k
    let (a, b) = ((lo * den - num0), (hi * den - num0));
    let (kmin, kmax) = (a.min(b).ceil() as i64, a.max(b).floor() as i64);
    let mut out: Vec<f64> = (kmin..=kmax).map(|k| (num0 + k as f64) / den).collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Candidate ToAs in microseconds for a wrap at absolute index `n_l`.
///
/// Solves `f (n_l - D) - (n_sc0 / N) D = sign(f) / 2 - k` for integer `k`.
pub fn solve_toa_candidates(n_l: f64, f_off_norm: f64, n_sc0: usize, cfg: &PreambleConfig, d_max_us: f64) -> Result<Vec<f64>> {
    let model = WrapModel { f_total: f_off_norm, injected: 0.0, n_sc: n_sc0, replica_shift: 0 };
    let hi = d_max_us * 1e-6 * cfg.sample_rate;
    Ok(solve_toa_candidates_in(n_l, &model, cfg, 0.0, hi)?
        .into_iter()
        .map(|d| cfg.samples_to_us(d))
        .collect())
}

/// One observed wrap.
#[derive(Debug, Clone, Copy, PartialEq)]
struct WrapObs {
    index: f64,
    sg: usize,
    k: usize,
    shift: i64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Fit {
    f: f64,
    d: f64,
    alpha: f64,
}

struct Geometry<'a> {
    cfg: &'a PreambleConfig,
    injected: f64,
}

impl Geometry<'_> {
    /// Wrap equation in cycles; zero mod 1 at a true wrap.
    fn cycles(&self, o: &WrapObs, fit: &Fit) -> f64 {
        let kn = o.k as f64 / self.cfg.fft_len as f64;
        let t = o.index - self.cfg.n_start as f64;
        fit.f * t - (fit.f - self.injected + kn) * fit.d + kn * o.shift as f64 - 0.5
            + 0.5 * fit.alpha * (t - fit.d).powi(2)
    }

    fn residual(&self, o: &WrapObs, fit: &Fit) -> f64 {
        let c = self.cycles(o, fit);
        c - c.round()
    }

    /// Whether `o` lies in the part of its symbol group free of neighbours for delay `d`.
    fn in_clean_zone(&self, o: &WrapObs, d: f64, margin: f64) -> bool {
        let s = self.cfg.sg_start(o.sg) as f64 + d;
        o.index >= s + margin && o.index <= s + self.cfg.sg_len() as f64 - margin
    }

    /// Gauss-Newton on the wrap equations.
    ///
    /// Integer parts are fixed from the starting point during each solve and
    /// re-rounded between solves while that lowers the residual.
    /// `alpha_prior` is the weight of a zero-mean penalty on the residual rate;
    /// `None` keeps the rate at its initial value.
    fn fit(&self, obs: &[WrapObs], init: Fit, alpha_prior: Option<f64>) -> Option<(Fit, Vec<f64>)> {
        if obs.len() < 3 {
            return None;
        }
        let msr = |fit: &Fit| obs.iter().map(|o| self.residual(o, fit).powi(2)).sum::<f64>() / obs.len() as f64;
        let mut best = init;
        let mut best_msr = msr(&init);
        for _ in 0..4 {
            let ints: Vec<f64> = obs.iter().map(|o| self.cycles(o, &best).round()).collect();
            let fit = self.solve(obs, &ints, best, alpha_prior)?;
            let m = msr(&fit);
            if m >= best_msr * (1.0 - 1e-9) {
                if m <= best_msr {
                    best = fit;
                }
                break;
            }
            best = fit;
            best_msr = m;
        }
        let res = obs.iter().map(|o| self.residual(o, &best)).collect();
        Some((best, res))
    }

    fn solve(&self, obs: &[WrapObs], ints: &[f64], init: Fit, alpha_prior: Option<f64>) -> Option<Fit> {
        let mut fit = init;
        let with_alpha = alpha_prior.is_some();
        // column scales keep the normal equations well conditioned
        let span = obs.iter().map(|o| (o.index - self.cfg.n_start as f64).abs()).fold(1.0, f64::max);
        let scale = Vector3::new(1.0 / span, 1.0, 1.0 / (span * span));
        for _ in 0..10 {
            let mut jtj = Matrix3::<f64>::zeros();
            let mut jtr = Vector3::<f64>::zeros();
            for (o, n) in obs.iter().zip(ints) {
                let r = self.cycles(o, &fit) - n;
                let kn = o.k as f64 / self.cfg.fft_len as f64;
                let t = o.index - self.cfg.n_start as f64;
                let j = Vector3::new(
                    (t - fit.d) / scale[0],
                    (-(fit.f - self.injected + kn) - fit.alpha * (t - fit.d)) / scale[1],
                    if with_alpha { 0.5 * (t - fit.d).powi(2) / scale[2] } else { 0.0 },
                );
                jtj += j * j.transpose();
                jtr += j * r;
            }
            match alpha_prior {
                Some(w) => {
                    jtj[(2, 2)] += w / (scale[2] * scale[2]);
                    jtr[2] += w * fit.alpha / scale[2];
                }
                None => jtj[(2, 2)] = 1.0,
            }
            let step = jtj.try_inverse()? * jtr;
            fit.f -= step[0] / scale[0];
            fit.d -= step[1] / scale[1];
            if with_alpha {
                fit.alpha -= step[2] / scale[2];
            }
            if !(fit.f.is_finite() && fit.d.is_finite() && fit.alpha.is_finite()) {
                return None;
            }
            if (step[1] / scale[1]).abs() < 1e-9 && (step[0] / scale[0]).abs() < 1e-15 {
                break;
            }
        }
        Some(fit)
    }
}

/// Mean squared residual of each symbol group that has observations.
fn per_sg_msr(obs: &[WrapObs], res: &[f64], n_sg: usize) -> Vec<Option<f64>> {
    let mut acc = vec![(0.0, 0usize); n_sg];
    for (o, r) in obs.iter().zip(res) {
        acc[o.sg].0 += r * r;
        acc[o.sg].1 += 1;
    }
    acc.into_iter().map(|(s, n)| (n > 0).then(|| s / n as f64)).collect()
}

/// Whether `alt` fits as well as `best` within `z` standard errors, pairing by symbol group.
fn ties(best: &[Option<f64>], alt: &[Option<f64>], z: f64) -> bool {
    let diffs: Vec<f64> = best
        .iter()
        .zip(alt)
        .filter_map(|(b, a)| Some((*a)? - (*b)?))
        .collect();
    if diffs.len() < 2 {
        return true;
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd == 0.0 {
        return mean <= 0.0;
    }
    mean / (sd / n.sqrt()) < z
}

/// Sample-level wrap position near `c` from a local circular fit of slope `f`.
fn refine_wrap(raw: &IqBuffer, c: f64, f: f64, half: usize, lo: i64, hi: i64) -> Option<(f64, f64)> {
    let start = (c.round() as i64 - half as i64).max(lo).max(raw.base_index);
    let end = (c.round() as i64 + half as i64 + 1).min(hi).min(raw.end_index());
    if end - start < half as i64 {
        return None;
    }
    let mut acc = Complex64::new(0.0, 0.0);
    let mut mag = 0.0;
    for n in start..end {
        let r = raw.samples[(n - raw.base_index) as usize];
        acc += r * Complex64::from_polar(1.0, -2.0 * PI * f * (n as f64 - c));
        mag += r.norm();
    }
    if mag == 0.0 {
        return None;
    }
    let coherence = acc.norm() / mag;
    let delta = wrap_phase(PI - acc.arg());
    Some((c + delta / (2.0 * PI * f), coherence))
}

/// Values within `keep` (relative) of the densest `tol`-neighbourhood.
fn mode_filter(values: &[f64], tol: f64, keep: f64) -> Vec<f64> {
    let near = |c: f64, r: f64| values.iter().copied().filter(move |v| (v - c).abs() <= r * c);
    let Some(&centre) = values.iter().max_by_key(|&&c| near(c, tol).count()) else {
        return Vec::new();
    };
    let local: Vec<f64> = near(centre, tol).collect();
    let centre = local.iter().sum::<f64>() / local.len() as f64;
    near(centre, keep).collect()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len().max(1) as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len().max(1) as f64).sqrt()
}

struct Coarse {
    fit: Fit,
    distance_var: f64,
    points: usize,
    candidates: Vec<Candidate>,
    chosen: usize,
    tiebreak: bool,
    rms: f64,
}

struct Fine {
    fit: Fit,
    fine_cfo_hz: f64,
    t_ph: f64,
    n_l: f64,
    candidates: Vec<Candidate>,
    chosen: usize,
    wraps: usize,
    fallback: bool,
    rms: f64,
}

struct Pipeline<'a> {
    cfg: &'a PreambleConfig,
    est: &'a EstimatorConfig,
    map: &'a DopplerMap,
    measured_rate: f64,
    sched: SubcarrierSchedule,
    replica: IqBuffer,
    model: Option<&'a TireModel>,
}

impl Pipeline<'_> {
    fn fs(&self) -> f64 {
        self.cfg.sample_rate
    }

    fn d_max(&self) -> f64 {
        self.cfg.us_to_samples(self.est.d_max_us)
    }

    fn band(&self) -> (f64, f64) {
        (self.fs() / self.est.max_abs_freq_hz, self.fs() / self.est.min_abs_freq_hz)
    }

    fn geometry(&self, injected: f64) -> Geometry<'_> {
        Geometry { cfg: self.cfg, injected }
    }

    fn tone(&self, k: usize, n: i64, sg_start: i64) -> Complex64 {
        let q = (n - sg_start - self.cfg.cp_len as i64) as f64;
        Complex64::from_polar(1.0, 2.0 * PI * k as f64 * q / self.cfg.fft_len as f64)
    }

    /// Picks among tied candidates by residual likelihood plus the Doppler-rate prior.
    ///
    /// `stats` holds the mean squared residual and observation count of each candidate.
    fn tiebreak(&self, stats: &[(f64, usize)], toas_us: &[f64]) -> usize {
        // wrap positions are never resolved below a hundredth of a cycle
        const FLOOR: f64 = 1e-4;
        let n = stats.iter().map(|s| s.1).min().unwrap_or(0) as f64;
        let sigma = self.est.rate_sigma_hz_per_s;
        if sigma <= 0.0 {
            return self.map.pick(toas_us, self.measured_rate).unwrap_or(0);
        }
        let cost = |i: usize| {
            let dr = self.map.rate_at(toas_us[i]) - self.measured_rate;
            0.5 * n * (stats[i].0 + FLOOR).ln() + dr * dr / (2.0 * sigma * sigma)
        };
        (0..stats.len()).min_by(|&a, &b| cost(a).total_cmp(&cost(b))).unwrap_or(0)
    }

    /// Offset injection and removal of the measured Doppler ramp.
    fn prepare(&self, rx: &IqBuffer, hyp: SignHypothesis) -> IqBuffer {
        let df = hyp.sign() * self.est.injected_offset_hz / self.fs();
        let a = self.measured_rate / (self.fs() * self.fs());
        let samples = rx
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let m = (rx.base_index + i as i64 - self.cfg.n_start) as f64;
                s * Complex64::from_polar(1.0, 2.0 * PI * (df * m - 0.5 * a * m * m))
            })
            .collect();
        IqBuffer::new(samples, rx.base_index)
    }

    fn model_for(&self, ps: &PhaseSeries) -> Result<TireModel> {
        match self.model {
            Some(m) => Ok(m.clone()),
            None => train_tire(ps, &self.est.tire),
        }
    }

    fn coarse(&self, z: &IqBuffer, hyp: SignHypothesis, model: &mut Option<TireModel>) -> Result<Coarse> {
        let cfg = self.cfg;
        let w = self.est.smooth_window;
        let g = cfg.sg_len() as i64;
        let d_max = self.d_max();
        let ext = g + d_max.ceil() as i64;
        let injected = hyp.sign() * self.est.injected_offset_hz / self.fs();
        let geo = self.geometry(injected);

        let mut obs = Vec::new();
        let mut sets = Vec::new();
        for m in 0..cfg.n_sym() {
            let s = cfg.sg_start(m);
            let k = self.sched.indices[m];
            let end = (s + ext).min(z.end_index());
            if end - s < (4 * self.est.tire.window_len + w) as i64 {
                continue;
            }
            // the symbol-group tone extended over the whole delay window
            let raw = IqBuffer::new(
                (s..end)
                    .map(|n| z.at(n).unwrap_or_default() * self.tone(k, n, s).conj())
                    .collect(),
                s,
            );
            let ps = extract_phase(&raw, w, cfg.sg_len())?;
            if model.is_none() {
                *model = Some(self.model_for(&ps)?);
            }
            let cps = detect_with_model(model.as_ref().expect("model set above"), &ps, &self.est.tire);
            obs.extend(cps.points.iter().map(|p| WrapObs { index: p.index, sg: m, k, shift: 0 }));
            sets.push(cps);
        }
        let dist = three_sigma(&mode_filter(&pooled_distances(&sets, Some(self.band())), 0.02, 0.05));
        // a wrong sign leaves only scattered spacings in band
        if dist.len() < (cfg.n_sym() / 4).max(2) {
            return Err(Error::PreambleNotFound);
        }
        let (t_mean, distance_var) = mean_var(&dist);
        let f0 = hyp.sign() / t_mean;

        // joint grid over delay and a narrow band of slopes around f0, scored on
        // every symbol group so per-group fading phases average out
        let margin = (self.est.tire.window_len + (w - 1) / 2) as f64;
        let extent = obs.iter().map(|o| o.index - cfg.n_start as f64).fold(1.0, f64::max);
        let f_step = 0.1 / extent;
        let f_sd = f0.abs() * (distance_var / dist.len() as f64).sqrt() / t_mean;
        let n_f = ((4.0 * f_sd / f_step).ceil() as i64).clamp(1, 40);
        let score = |f: f64, d: f64| -> f64 {
            let fit = Fit { f, d, alpha: 0.0 };
            obs.iter()
                .filter(|o| geo.in_clean_zone(o, d, margin))
                .map(|o| (2.0 * PI * geo.residual(o, &fit)).cos())
                .sum()
        };
        let n_grid = d_max.floor() as i64;
        let rows: Vec<(f64, Vec<f64>)> = (-n_f..=n_f)
            .map(|i| {
                let f = f0 + i as f64 * f_step;
                (f, (0..=n_grid).map(|d| score(f, d as f64)).collect())
            })
            .collect();
        let peak = |lo: i64, hi: i64| -> (f64, i64, f64) {
            let mut top = (f0, lo, f64::MIN);
            for (f, row) in &rows {
                for d in lo..=hi {
                    if row[d as usize] > top.2 {
                        top = (*f, d, row[d as usize]);
                    }
                }
            }
            top
        };
        let (_, best, _) = peak(0, n_grid);

        // aliases one FFT length apart share every subcarrier term
        let alias = cfg.fft_len as i64;
        let mut fits = Vec::new();
        for j in -(n_grid / alias + 1)..=(n_grid / alias + 1) {
            let centre = best + j * alias;
            let (lo, hi) = ((centre - 8).max(0), (centre + 8).min(n_grid));
            if lo > hi {
                continue;
            }
            let (f_a, d0, top) = peak(lo, hi);
            if top <= 0.0 {
                continue;
            }
            let start = Fit { f: f_a, d: d0 as f64, alpha: 0.0 };
            let clean: Vec<WrapObs> =
                obs.iter().copied().filter(|o| geo.in_clean_zone(o, start.d, margin)).collect();
            // the refined point must stay at least as consistent as the grid point
            let fit = match geo.fit(&clean, start, None) {
                Some((f, _)) if score(f.f, f.d) >= top => f,
                _ => start,
            };
            let clean: Vec<WrapObs> =
                obs.iter().copied().filter(|o| geo.in_clean_zone(o, fit.d, margin)).collect();
            let res: Vec<f64> = clean.iter().map(|o| geo.residual(o, &fit)).collect();
            if clean.len() >= 3 && fit.d >= -0.5 * alias as f64 && fit.d <= d_max + 0.5 * alias as f64 {
                fits.push((fit, clean, res));
            }
        }
        if fits.is_empty() {
            return Err(Error::PreambleNotFound);
        }
        let n_max = fits.iter().map(|f| f.1.len()).max().unwrap_or(0);
        let msr = |res: &[f64]| res.iter().map(|r| r * r).sum::<f64>() / res.len().max(1) as f64;
        let best_i = (0..fits.len())
            .filter(|&i| 2 * fits[i].1.len() >= n_max)
            .min_by(|&a, &b| msr(&fits[a].2).total_cmp(&msr(&fits[b].2)))
            .unwrap_or(0);
        let best_sg = per_sg_msr(&fits[best_i].1, &fits[best_i].2, cfg.n_sym());
        let tied: Vec<usize> = (0..fits.len())
            .filter(|&i| {
                i == best_i
                    || (2 * fits[i].1.len() >= n_max
                        && ties(&best_sg, &per_sg_msr(&fits[i].1, &fits[i].2, cfg.n_sym()), self.est.tie_z))
            })
            .collect();
        let candidates: Vec<Candidate> = fits
            .iter()
            .map(|(f, _, _)| {
                let toa_us = cfg.samples_to_us(f.d);
                Candidate { toa_us, implied_rate: self.map.rate_at(toa_us) }
            })
            .collect();
        let chosen = if tied.len() > 1 {
            let stats: Vec<(f64, usize)> = tied.iter().map(|&i| (msr(&fits[i].2), fits[i].1.len())).collect();
            tied[self.tiebreak(&stats, &tied.iter().map(|&i| candidates[i].toa_us).collect::<Vec<_>>())]
        } else {
            best_i
        };
        Ok(Coarse {
            fit: fits[chosen].0,
            distance_var,
            points: obs.len(),
            candidates,
            chosen,
            tiebreak: tied.len() > 1,
            rms: rms(&fits[chosen].2),
        })
    }

    fn fine(&self, z: &IqBuffer, hyp: SignHypothesis, coarse: &Coarse, model: &TireModel) -> Result<Fine> {
        let cfg = self.cfg;
        let w = self.est.smooth_window;
        let injected = hyp.sign() * self.est.injected_offset_hz / self.fs();
        let geo = self.geometry(injected);
        let coarse_us = cfg.samples_to_us(coarse.fit.d);
        let shift = (coarse.fit.d).round() as i64;
        let d_r = self.cfg.us_to_samples(self.est.residual_us);
        let guard = d_r.ceil() as usize + (w - 1) / 2;

        let aligned = compensate_delay(z, coarse_us, self.fs());
        let raw = dechirp(&aligned, &self.replica)?;
        let ps = extract_phase(&raw, w, cfg.sg_len())?;
        let segments = segment_by_sg(&ps, cfg, guard);

        let mut refined_sets = Vec::new();
        let mut obs = Vec::new();
        let f_ref = coarse.fit.f;
        for (m, seg) in segments.iter().enumerate() {
            if seg.len() < 2 * self.est.tire.window_len + 3 * self.est.tire.stride {
                refined_sets.push(ChangePointSet::default());
                continue;
            }
            let cps = detect_with_model(model, seg, &self.est.tire);
            let s = cfg.sg_start(m);
            let (lo, hi) = (s + d_r.ceil() as i64, s + cfg.sg_len() as i64 - d_r.ceil() as i64);
            let mut pts = Vec::new();
            for p in &cps.points {
                if let Some((c, coh)) = refine_wrap(&raw, p.index, f_ref, self.est.refine_half_width, lo, hi) {
                    if coh >= self.est.min_coherence && c >= lo as f64 && c < hi as f64 {
                        pts.push(ChangePoint { index: c, prominence: p.prominence });
                    }
                }
            }
            pts.sort_by(|a, b| a.index.total_cmp(&b.index));
            pts.dedup_by(|a, b| (a.index - b.index).abs() < 0.25 * self.band().0);
            for p in &pts {
                obs.push(WrapObs {
                    index: p.index + shift as f64,
                    sg: m,
                    k: self.sched.indices[m],
                    shift,
                });
            }
            refined_sets.push(ChangePointSet { points: pts, ..Default::default() });
        }
        if obs.is_empty() {
            return Err(Error::EstimationFailed("no wraps in the fine segments".into()));
        }
        let band = self.band();
        // wraps can repeat at the same offset in every segment and leave no spacing to average
        let (fine_abs, fallback) = match fine_cfo_in(&refined_sets, self.fs(), Some(band)) {
            Ok(v) => (v, false),
            Err(_) => (f_ref.abs() * self.fs(), true),
        };
        let f_fine = hyp.sign() * fine_abs / self.fs();
        let t_ph = self.fs() / fine_abs;

        // the earliest wrap whose position still moves with the delay anchors the candidate set
        let coef = |o: &WrapObs| (f_fine - injected + o.k as f64 / cfg.fft_len as f64).abs();
        let earliest = |v: &mut dyn Iterator<Item = &WrapObs>| v.min_by(|a, b| a.index.total_cmp(&b.index)).copied();
        let first = earliest(&mut obs.iter().filter(|o| coef(o) >= 0.25 / d_r))
            .or_else(|| obs.iter().max_by(|a, b| coef(a).total_cmp(&coef(b))).copied())
            .expect("obs is non-empty");
        let wm = WrapModel { f_total: f_fine, injected, n_sc: first.k, replica_shift: shift };
        let mut cand_d =
            solve_toa_candidates_in(first.index, &wm, cfg, shift as f64 - d_r, shift as f64 + d_r)?;
        if cand_d.is_empty() {
            cand_d.push(coarse.fit.d);
        }
        // each candidate owns the delays closer to it than to its neighbours; the
        // most consistent delay in that basin seeds a delay-only fit at the coarse slope
        let base = Fit { f: f_ref, d: 0.0, alpha: coarse.fit.alpha };
        let consistency = |d: f64| -> f64 {
            obs.iter().map(|o| (2.0 * PI * geo.residual(o, &Fit { d, ..base })).cos()).sum()
        };
        let spacing = 1.0 / (f_fine - injected + first.k as f64 / cfg.fft_len as f64).abs();
        let (lo, hi) = (shift as f64 - d_r, shift as f64 + d_r);
        let mut scored: Vec<(f64, Vec<f64>)> = Vec::new();
        for &c in &cand_d {
            let (a, b) = ((c - 0.5 * spacing).max(lo), (c + 0.5 * spacing).min(hi));
            let steps = ((b - a) / 0.25).ceil().max(0.0) as usize;
            let d0 = (0..=steps)
                .map(|i| a + (b - a) * i as f64 / steps.max(1) as f64)
                .max_by(|x, y| consistency(*x).total_cmp(&consistency(*y)))
                .unwrap_or(c);
            let at = Fit { d: d0, ..base };
            let (mut num, mut den) = (0.0, 0.0);
            for o in &obs {
                let a = o.k as f64 / cfg.fft_len as f64 + f_ref - injected;
                num += a * geo.residual(o, &at);
                den += a * a;
            }
            let d1 = if den > 0.0 { d0 + num / den } else { d0 };
            let res: Vec<f64> = obs.iter().map(|o| geo.residual(o, &Fit { d: d1, ..base })).collect();
            scored.push((d1, res));
        }
        let msr = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>() / r.len().max(1) as f64;
        let best = (0..scored.len()).min_by(|&a, &b| msr(&scored[a].1).total_cmp(&msr(&scored[b].1))).unwrap();
        let best_sg = per_sg_msr(&obs, &scored[best].1, cfg.n_sym());
        let tied: Vec<usize> = (0..scored.len())
            .filter(|&i| i == best || ties(&best_sg, &per_sg_msr(&obs, &scored[i].1, cfg.n_sym()), self.est.tie_z))
            .collect();
        let candidates: Vec<Candidate> = scored
            .iter()
            .map(|(d, _)| {
                let toa_us = cfg.samples_to_us(*d);
                Candidate { toa_us, implied_rate: self.map.rate_at(toa_us) }
            })
            .collect();
        let chosen = if tied.len() > 1 {
            let stats: Vec<(f64, usize)> = tied.iter().map(|&i| (msr(&scored[i].1), obs.len())).collect();
            tied[self.tiebreak(&stats, &tied.iter().map(|&i| candidates[i].toa_us).collect::<Vec<_>>())]
        } else {
            best
        };

        let init = Fit { d: scored[chosen].0, alpha: 0.0, ..base };
        let (fit0, res0) = geo
            .fit(&obs, init, None)
            .ok_or_else(|| Error::EstimationFailed("joint wrap fit did not converge".into()))?;
        // rate residual is fitted against a prior as wide as the rate side information
        let sigma_a = self.est.rate_sigma_hz_per_s / (self.fs() * self.fs());
        let prior = (sigma_a > 0.0).then(|| msr(&res0).max(1e-12) / (sigma_a * sigma_a));
        let (mut fit, mut res) = match prior {
            Some(_) => geo.fit(&obs, fit0, prior).unwrap_or((fit0, res0)),
            None => (fit0, res0),
        };
        // second pass with wrap positions re-fitted at the refined slope
        let obs2 = self.rerefine(&raw, &obs, fit.f, shift, d_r);
        if let Some((f2, r2)) = geo.fit(&obs2, fit, prior) {
            (fit, res) = (f2, r2);
        }
        Ok(Fine {
            fit,
            fine_cfo_hz: fine_abs * hyp.sign(),
            t_ph,
            n_l: first.index,
            candidates,
            chosen,
            wraps: obs.len(),
            fallback,
            rms: rms(&res),
        })
    }

    /// Re-runs the local wrap fit at slope `f` for every observation.
    fn rerefine(&self, raw: &IqBuffer, obs: &[WrapObs], f: f64, shift: i64, d_r: f64) -> Vec<WrapObs> {
        obs.iter()
            .filter_map(|o| {
                let s = self.cfg.sg_start(o.sg);
                let (lo, hi) = (s + d_r.ceil() as i64, s + self.cfg.sg_len() as i64 - d_r.ceil() as i64);
                let c = o.index - shift as f64;
                let (c2, coh) = refine_wrap(raw, c, f, self.est.refine_half_width, lo, hi)?;
                (coh >= self.est.min_coherence).then_some(WrapObs { index: c2 + shift as f64, ..*o })
            })
            .collect()
    }
}

/// Full two-stage estimate with per-call detector training.
pub fn estimate(
    rx: &IqBuffer,
    cfg: &PreambleConfig,
    map: &DopplerMap,
    measured_rate: f64,
    est: &EstimatorConfig,
) -> Result<SyncEstimate> {
    estimate_with_model(rx, cfg, map, measured_rate, est, None)
}

/// As [`estimate`], reusing a pre-trained detector when given.
pub fn estimate_with_model(
    rx: &IqBuffer,
    cfg: &PreambleConfig,
    map: &DopplerMap,
    measured_rate: f64,
    est: &EstimatorConfig,
    model: Option<&TireModel>,
) -> Result<SyncEstimate> {
    cfg.validate()?;
    est.validate()?;
    map.validate()?;
    if !measured_rate.is_finite() {
        return Err(Error::InvalidConfig("measured rate must be finite".into()));
    }
    let sched = build_schedule(cfg);
    let replica = gen_preamble(cfg, &sched)?;
    let pipe = Pipeline { cfg, est, map, measured_rate, sched, replica, model };

    let mut coarse_runs = Vec::new();
    for hyp in [SignHypothesis::Pos, SignHypothesis::Neg] {
        let z = pipe.prepare(rx, hyp);
        let mut m = model.cloned();
        if let Ok(c) = pipe.coarse(&z, hyp, &mut m) {
            if let Some(m) = m {
                coarse_runs.push((hyp, z, c, m));
            }
        }
    }
    if coarse_runs.is_empty() {
        return Err(Error::PreambleNotFound);
    }
    // spacing variance is noisy when one sign yields few spacings; the wrap-model
    // residual of the coarse fit separates the hypotheses far more clearly
    coarse_runs.sort_by(|a, b| a.2.rms.total_cmp(&b.2.rms).then(a.2.distance_var.total_cmp(&b.2.distance_var)));
    let mut last_err = Error::PreambleNotFound;
    for (hyp, z, coarse, m) in &coarse_runs {
        match pipe.fine(z, *hyp, coarse, m) {
            Ok(fine) => {
                let injected_hz = hyp.sign() * est.injected_offset_hz;
                let mut candidates = fine.candidates.clone();
                let fine_toa_us = cfg.samples_to_us(fine.fit.d);
                candidates[fine.chosen].toa_us = fine_toa_us;
                return Ok(SyncEstimate {
                    coarse_toa_us: cfg.samples_to_us(coarse.fit.d),
                    fine_toa_us,
                    cfo_hz: fine.fit.f * cfg.sample_rate - injected_hz,
                    t_ph_samples: fine.t_ph,
                    first_wrap_index: fine.n_l,
                    candidates,
                    chosen: fine.chosen,
                    sign_hypothesis: *hyp,
                    diagnostics: Diagnostics {
                        coarse_cfo_hz: coarse.fit.f * cfg.sample_rate - injected_hz,
                        fine_cfo_hz: fine.fine_cfo_hz - injected_hz,
                        coarse_points: coarse.points,
                        coarse_distance_var: coarse.distance_var,
                        fine_wraps: fine.wraps,
                        coarse_rms_cycles: coarse.rms,
                        fine_rms_cycles: fine.rms,
                        coarse_candidates: coarse.candidates.clone(),
                        coarse_chosen: coarse.chosen,
                        doppler_tiebreak: coarse.tiebreak,
                        fine_cfo_fallback: fine.fallback,
                    },
                });
            }
            Err(e) => {
                last_err = e
            }
        }
    }
    Err(last_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_impairments, ImpairmentConfig};
    use crate::phase::wrap_indices;
    use crate::waveform::Format;

    #[test]
    fn doppler_map_interpolates_and_extrapolates() {
        let map = DopplerMap::default();
        assert!((map.rate_at(104.7) + 297.0).abs() < 1e-12);
        assert!((map.rate_at(371.3) + 252.0).abs() < 1e-12);
        let mid = map.rate_at(0.5 * (104.7 + 371.3));
        assert!((mid + 274.5).abs() < 1e-9);
        let left = map.rate_at(0.0);
        assert!((left - (-297.0 - 45.0 / 266.6 * 104.7)).abs() < 1e-9);
        let right = map.rate_at(700.0);
        assert!((right - (-215.0 + 37.0 / 266.7 * 62.0)).abs() < 1e-9);
    }

    #[test]
    fn doppler_map_rejects_bad_anchors() {
        assert!(DopplerMap::new(vec![(1.0, 0.0)]).is_err());
        assert!(DopplerMap::new(vec![(1.0, 0.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn worked_disambiguation_example() {
        let map = DopplerMap::default();
        let cands = [104.7, 371.3, 638.0];
        let rates: Vec<f64> = cands.iter().map(|&c| map.rate_at(c)).collect();
        assert_eq!(rates, vec![-297.0, -252.0, -215.0]);
        assert_eq!(map.pick(&cands, -240.0), Some(1));
    }

    #[test]
    fn injection_sets_effective_frequency() {
        let fs = 1.92e6;
        let x = IqBuffer::new(vec![Complex64::new(1.0, 0.0); 8000], 0);
        for (cfo, hyp, want_hz) in [
            (0.0, SignHypothesis::Pos, 1000.0),
            (600.0, SignHypothesis::Pos, 1600.0),
            (-600.0, SignHypothesis::Neg, -1600.0),
        ] {
            let imp = ImpairmentConfig { cfo_hz: cfo, max_toa_samples: 0.0, ..Default::default() };
            let rx = apply_impairments(&x, &imp, None).unwrap();
            let y = inject_offset(&rx, hyp, fs);
            let inc = (y.samples[11] * y.samples[10].conj()).arg();
            assert!((inc - 2.0 * PI * want_hz / fs).abs() < 1e-12);
            let period = fs / want_hz.abs();
            let wraps = wrap_indices(&y.samples.iter().map(|s| s.arg()).collect::<Vec<_>>());
            let d = (wraps[1] - wraps[0]) as f64;
            assert!((d - period).abs() <= 1.0);
        }
    }

    #[test]
    fn compensation_shifts_by_rounded_delay() {
        let x = IqBuffer::new(vec![Complex64::new(1.0, 0.0); 10], 500);
        assert_eq!(compensate_delay(&x, 0.0, 1.92e6), x);
        assert_eq!(compensate_delay(&x, 100.0, 1.92e6).base_index, 500 - 192);
    }

    fn set(idx: &[f64]) -> ChangePointSet {
        ChangePointSet {
            points: idx.iter().map(|&i| ChangePoint { index: i, prominence: 1.0 }).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn fine_cfo_exact_spacing() {
        let segs: Vec<ChangePointSet> =
            (0..4).map(|s| set(&[s as f64 * 5000.0, s as f64 * 5000.0 + 1280.0, s as f64 * 5000.0 + 2560.0])).collect();
        assert!((fine_cfo(&segs, 1.92e6).unwrap() - 1500.0).abs() < 1e-9);
    }

    #[test]
    fn fine_cfo_rejects_outlier() {
        // twenty spacings of 1280 and one of 10000
        let mut segs: Vec<ChangePointSet> = (0..20).map(|_| set(&[0.0, 1280.0])).collect();
        segs.push(set(&[0.0, 10_000.0]));
        assert!((fine_cfo(&segs, 1.92e6).unwrap() - 1500.0).abs() < 1e-9);
        assert!(fine_cfo(&[set(&[3.0])], 1.92e6).is_err());
    }

    #[test]
    fn three_sigma_is_idempotent() {
        let v: Vec<f64> = (0..50).map(|i| 1000.0 + (i % 7) as f64).chain([5000.0, -3000.0]).collect();
        let once = three_sigma(&v);
        assert_eq!(three_sigma(&once), once);
        assert!(once.iter().all(|&x| x > 999.0 && x < 1010.0));
    }

    #[test]
    fn zero_delay_is_a_candidate() {
        let cfg = PreambleConfig::new(Format::Format1, 1);
        let f = 1500.0 / 1.92e6;
        // first wrap of a zero-delay series on subcarrier 0
        let n_l = 0.5 / f;
        let c = solve_toa_candidates(n_l, f, 0, &cfg, 700.0).unwrap();
        assert!(c.iter().any(|d| d.abs() < 1e-9), "{c:?}");
    }

    #[test]
    fn candidates_spaced_by_inverse_total_frequency() {
        let cfg = PreambleConfig::new(Format::Format1, 1);
        let f = 1200.0 / 1.92e6;
        let c = solve_toa_candidates(1000.0, f, 6, &cfg, 700.0).unwrap();
        let spacing = 1.0 / (f + 6.0 / 512.0) / 1.92;
        for w in c.windows(2) {
            assert!((w[1] - w[0] - spacing).abs() < 1e-9);
        }
        assert!(c.iter().all(|&d| (0.0..=700.0).contains(&d)));
        assert!(solve_toa_candidates(1000.0, 0.0, 6, &cfg, 700.0).is_err());
    }

    #[test]
    fn receiver_offset_candidates_reduce_to_plain_form() {
        let cfg = PreambleConfig::new(Format::Format1, 1);
        let f = 1300.0 / 1.92e6;
        let plain = solve_toa_candidates(2000.0, f, 3, &cfg, 700.0).unwrap();
        let wm = WrapModel { f_total: f, injected: 0.0, n_sc: 3, replica_shift: 0 };
        let general: Vec<f64> = solve_toa_candidates_in(2000.0, &wm, &cfg, 0.0, 1344.0)
            .unwrap()
            .into_iter()
            .map(|d| cfg.samples_to_us(d))
            .collect();
        assert_eq!(plain, general);
    }

    #[test]
    fn noiseless_end_to_end() {
        let cfg = PreambleConfig::new(Format::Format1, 8);
        let x = gen_preamble(&cfg, &build_schedule(&cfg)).unwrap();
        let d_us = 104.7;
        let map = DopplerMap::default();
        let rate = map.rate_at(d_us);
        let imp = ImpairmentConfig {
            toa_samples: cfg.us_to_samples(d_us),
            cfo_hz: 300.0,
            doppler_rate_hz_per_s: rate,
            ..Default::default()
        };
        let rx = apply_impairments(&x, &imp, None).unwrap();
        let est = estimate(&rx, &cfg, &map, rate, &EstimatorConfig::default()).unwrap();
        assert!((est.fine_toa_us - d_us).abs() < 1.0, "{est:?}");
        assert!((est.cfo_hz - 300.0).abs() < 0.5, "{est:?}");
        assert_eq!(est.candidates[est.chosen].toa_us, est.fine_toa_us);
        let json = est.to_json().unwrap();
        assert!(json.contains("\"fine_toa_us\""));
    }
}
