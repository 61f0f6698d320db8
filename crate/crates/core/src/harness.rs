//! Monte Carlo campaigns over SNR, repetition count and channel.
//!
//! Every trial derives its random draws from `(master_seed, trial_id)` and its
//! channel realization from the grid point as well, so records do not depend
//! on scheduling and methods compared on the same seed see the same draws.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{diff_corr_toa, dwt_cusum_toa, DwtCusumConfig};
use crate::channel::{apply_impairments, ChannelKind, ImpairmentConfig, TdlCProfile};
use crate::error::{Error, Result};
use crate::estimator::{estimate, DopplerMap, EstimatorConfig};
use crate::waveform::{build_schedule, gen_preamble, Format, PreambleConfig};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "NTNSYNC_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    Proposed,
    DiffCorr,
    DwtCusum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    NotFound,
    Failed,
}

/// Scenario geometry carried as metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Geometry {
    pub altitude_km: f64,
    pub beam_diameter_km: f64,
    pub elevation_deg: f64,
    pub carrier_hz: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self { altitude_km: 600.0, beam_diameter_km: 90.0, elevation_deg: 90.0, carrier_hz: 2.0e9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// `null` entries run without noise.
    pub snr_db_list: Vec<Option<f64>>,
    pub n_rep_list: Vec<usize>,
    pub channels: Vec<ChannelKind>,
    pub trials_per_point: usize,
    pub toa_prior_us: [f64; 2],
    pub cfo_prior_hz: [f64; 2],
    pub method: Method,
    pub master_seed: u64,
    pub output_dir: Option<PathBuf>,
    pub format: Format,
    /// Standard deviation of the Doppler-rate side information.
    pub rate_sigma_hz_per_s: f64,
    pub doppler_map: DopplerMap,
    pub estimator: EstimatorConfig,
    pub dwt_cusum: DwtCusumConfig,
    pub diff_corr_lag: usize,
    pub tdl_c: TdlCProfile,
    pub geometry: Geometry,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            snr_db_list: vec![Some(3.0), Some(0.0), Some(-3.0)],
            n_rep_list: vec![8],
            channels: vec![ChannelKind::Awgn],
            trials_per_point: 200,
            toa_prior_us: [0.0, 700.0],
            cfo_prior_hz: [-600.0, 600.0],
            method: Method::Proposed,
            master_seed: 1,
            output_dir: None,
            format: Format::Format1,
            rate_sigma_hz_per_s: 10.0,
            doppler_map: DopplerMap::default(),
            estimator: EstimatorConfig::default(),
            dwt_cusum: DwtCusumConfig::default(),
            diff_corr_lag: 512,
            tdl_c: TdlCProfile::default(),
            geometry: Geometry::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.trials_per_point == 0 {
            return bad("trials_per_point must be at least 1");
        }
        if self.snr_db_list.is_empty() || self.n_rep_list.is_empty() || self.channels.is_empty() {
            return bad("snr_db_list, n_rep_list and channels must be non-empty");
        }
        if self.snr_db_list.iter().flatten().any(|s| !s.is_finite()) {
            return bad("SNR values must be finite");
        }
        let [t0, t1] = self.toa_prior_us;
        if !(t0 >= 0.0 && t1 >= t0 && t1 <= self.estimator.d_max_us) {
            return bad("toa_prior_us must lie within [0, d_max_us]");
        }
        let [c0, c1] = self.cfo_prior_hz;
        let lim = self.estimator.injected_offset_hz;
        if !(c0.is_finite() && c1 >= c0 && c0.abs() < lim && c1.abs() < lim) {
            return bad("cfo_prior_hz must be ordered and smaller than the injected offset");
        }
        if !(self.rate_sigma_hz_per_s >= 0.0) {
            return bad("rate_sigma_hz_per_s must be non-negative");
        }
        for &n in &self.n_rep_list {
            PreambleConfig::new(self.format, n).validate()?;
        }
        self.doppler_map.validate()?;
        self.estimator.validate()?;
        self.tdl_c.validate()?;
        Ok(())
    }

    pub fn grid(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &channel in &self.channels {
            for &snr_db in &self.snr_db_list {
                for &n_rep in &self.n_rep_list {
                    out.push(GridPoint { snr_db, n_rep, channel });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub snr_db: Option<f64>,
    pub n_rep: usize,
    pub channel: ChannelKind,
}

/// Random quantities of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub toa_us: f64,
    pub cfo_hz: f64,
    pub rate_hz_per_s: f64,
    pub measured_rate_hz_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub method: Method,
    pub snr_db: Option<f64>,
    pub n_rep: usize,
    pub channel: ChannelKind,
    pub true_toa_us: f64,
    pub true_cfo_hz: f64,
    pub true_rate_hz_per_s: f64,
    pub measured_rate_hz_per_s: f64,
    pub coarse_toa_us: Option<f64>,
    pub est_toa_us: Option<f64>,
    pub est_cfo_hz: Option<f64>,
    pub status: Status,
    /// Kept out of the trial CSV, which must be reproducible byte for byte.
    #[serde(skip)]
    pub wall_ms: f64,
}

impl TrialRecord {
    pub fn toa_error_us(&self) -> Option<f64> {
        (self.status == Status::Ok).then(|| self.est_toa_us.map(|e| (e - self.true_toa_us).abs())).flatten()
    }

    pub fn coarse_error_us(&self) -> Option<f64> {
        (self.status == Status::Ok).then(|| self.coarse_toa_us.map(|e| (e - self.true_toa_us).abs())).flatten()
    }

    pub fn cfo_error_hz(&self) -> Option<f64> {
        (self.status == Status::Ok).then(|| self.est_cfo_hz.map(|e| (e - self.true_cfo_hz).abs())).flatten()
    }

    fn sort_key(&self) -> (Method, ChannelKind, u64, usize, usize) {
        let snr = self.snr_db.map_or(u64::MAX, |s| s.to_bits());
        (self.method, self.channel, snr, self.n_rep, self.trial_id)
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of the per-trial draws.
pub fn trial_seed(master_seed: u64, trial_id: usize) -> u64 {
    splitmix(splitmix(master_seed) ^ trial_id as u64)
}

fn point_seed(trial: u64, p: &GridPoint) -> u64 {
    let snr = p.snr_db.map_or(u64::MAX, f64::to_bits);
    let ch = match p.channel {
        ChannelKind::Awgn => 1,
        ChannelKind::TdlC => 2,
    };
    splitmix(splitmix(splitmix(trial ^ snr) ^ p.n_rep as u64) ^ ch)
}

pub fn draw_trial(cfg: &ExperimentConfig, trial_id: usize) -> Draw {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.master_seed, trial_id));
    let [t0, t1] = cfg.toa_prior_us;
    let [c0, c1] = cfg.cfo_prior_hz;
    let toa_us = if t1 > t0 { rng.random_range(t0..t1) } else { t0 };
    let cfo_hz = if c1 > c0 { rng.random_range(c0..c1) } else { c0 };
    let rate = cfg.doppler_map.rate_at(toa_us);
    let err: f64 = Normal::new(0.0, cfg.rate_sigma_hz_per_s).map_or(0.0, |n| n.sample(&mut rng));
    Draw { toa_us, cfo_hz, rate_hz_per_s: rate, measured_rate_hz_per_s: rate + err }
}

/// Generates, impairs and estimates one trial.
pub fn run_trial(cfg: &ExperimentConfig, point: &GridPoint, trial_id: usize, draw: &Draw) -> Result<TrialRecord> {
    let start = Instant::now();
    let pre = PreambleConfig::new(cfg.format, point.n_rep);
    let x = gen_preamble(&pre, &build_schedule(&pre))?;
    let imp = ImpairmentConfig {
        toa_samples: pre.us_to_samples(draw.toa_us),
        cfo_hz: draw.cfo_hz,
        doppler_rate_hz_per_s: draw.rate_hz_per_s,
        snr_db: point.snr_db,
        channel: point.channel,
        seed: point_seed(trial_seed(cfg.master_seed, trial_id), point),
        max_toa_samples: pre.us_to_samples(cfg.estimator.d_max_us).ceil(),
        sample_rate: pre.sample_rate,
        ..Default::default()
    };
    let profile = (point.channel == ChannelKind::TdlC).then_some(&cfg.tdl_c);
    let rx = apply_impairments(&x, &imp, profile)?;

    let mut rec = TrialRecord {
        trial_id,
        method: cfg.method,
        snr_db: point.snr_db,
        n_rep: point.n_rep,
        channel: point.channel,
        true_toa_us: draw.toa_us,
        true_cfo_hz: draw.cfo_hz,
        true_rate_hz_per_s: draw.rate_hz_per_s,
        measured_rate_hz_per_s: draw.measured_rate_hz_per_s,
        coarse_toa_us: None,
        est_toa_us: None,
        est_cfo_hz: None,
        status: Status::Ok,
        wall_ms: 0.0,
    };
    let outcome: Result<()> = match cfg.method {
        Method::Proposed => {
            estimate(&rx, &pre, &cfg.doppler_map, draw.measured_rate_hz_per_s, &cfg.estimator).map(|e| {
                rec.coarse_toa_us = Some(e.coarse_toa_us);
                rec.est_toa_us = Some(e.fine_toa_us);
                rec.est_cfo_hz = Some(e.cfo_hz);
            })
        }
        Method::DiffCorr => {
            let hi = imp.max_toa_samples as i64;
            diff_corr_toa(&rx, &x, cfg.diff_corr_lag, 0..hi + 1).map(|d| {
                rec.est_toa_us = Some(pre.samples_to_us(d as f64));
            })
        }
        Method::DwtCusum => dwt_cusum_toa(&rx, &x, &cfg.dwt_cusum).map(|d| {
            rec.est_toa_us = Some(pre.samples_to_us(d));
        }),
    };
    match outcome {
        Ok(()) => {}
        Err(Error::PreambleNotFound) => rec.status = Status::NotFound,
        Err(e @ (Error::InvalidConfig(_) | Error::Io(_))) => return Err(e),
        Err(_) => rec.status = Status::Failed,
    }
    rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(rec)
}

/// Worker count from [`THREADS_ENV`], or rayon's default.
pub fn worker_count() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

/// Runs every grid point; the result is sorted by group then trial id.
pub fn run_campaign(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    run_campaign_with_threads(cfg, worker_count())
}

pub fn run_campaign_with_threads(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let draws: Vec<Draw> = (0..cfg.trials_per_point).map(|t| draw_trial(cfg, t)).collect();
    let jobs: Vec<(GridPoint, usize)> =
        cfg.grid().into_iter().flat_map(|p| (0..cfg.trials_per_point).map(move |t| (p, t))).collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let mut records = pool.install(|| {
        jobs.par_iter()
            .map(|(p, t)| run_trial(cfg, p, *t, &draws[*t]))
            .collect::<Result<Vec<_>>>()
    })?;
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(records)
}

/// Summary statistics of one `(method, channel, snr, n_rep)` group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub method: Method,
    pub channel: ChannelKind,
    pub snr_db: Option<f64>,
    pub n_rep: usize,
    pub trials: usize,
    pub ok: usize,
    pub not_found: usize,
    pub failed: usize,
    pub mean_toa_error_us: Option<f64>,
    pub max_toa_error_us: Option<f64>,
    pub mean_coarse_error_us: Option<f64>,
    pub max_coarse_error_us: Option<f64>,
    pub mean_cfo_error_hz: Option<f64>,
    pub max_cfo_error_hz: Option<f64>,
    /// `(percentile, |CFO error|)` pairs.
    pub cfo_percentiles: Vec<(f64, f64)>,
    pub toa_percentiles: Vec<(f64, f64)>,
    /// Empirical CDF: sorted `|ToA error|` against `rank / (n + 1)`.
    pub toa_cdf: Vec<(f64, f64)>,
    pub cfo_cdf: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub groups: Vec<GroupSummary>,
    pub sample_rate_hz: f64,
    pub symbol_duration_us: f64,
}

pub const PERCENTILES: [f64; 5] = [50.0, 90.0, 95.0, 99.0, 100.0];

/// Nearest-rank percentile of sorted data.
pub fn percentile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

pub fn empirical_cdf(errors: &[f64]) -> Vec<(f64, f64)> {
    let mut e = errors.to_vec();
    e.sort_by(f64::total_cmp);
    let n = e.len() as f64;
    let mut cdf: Vec<(f64, f64)> = e.iter().enumerate().map(|(i, &x)| (x, (i + 1) as f64 / (n + 1.0))).collect();
    if let Some(&(last, _)) = cdf.last() {
        cdf.push((last, 1.0));
    }
    cdf
}

fn stats(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    (Some(v.iter().sum::<f64>() / v.len() as f64), v.iter().copied().reduce(f64::max))
}

pub fn summarize(records: &[TrialRecord]) -> Summary {
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let mut groups = Vec::new();
    let group = |r: &TrialRecord| {
        let (m, c, s, n, _) = r.sort_key();
        (m, c, s, n)
    };
    for chunk in sorted.chunk_by(|a, b| group(a) == group(b)) {
        let first = chunk[0];
        let count = |s: Status| chunk.iter().filter(|r| r.status == s).count();
        let sorted_errs = |f: fn(&TrialRecord) -> Option<f64>| {
            let mut v: Vec<f64> = chunk.iter().filter_map(|r| f(r)).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let toa = sorted_errs(TrialRecord::toa_error_us);
        let coarse = sorted_errs(TrialRecord::coarse_error_us);
        let cfo = sorted_errs(TrialRecord::cfo_error_hz);
        let (mean_toa, max_toa) = stats(&toa);
        let (mean_coarse, max_coarse) = stats(&coarse);
        let (mean_cfo, max_cfo) = stats(&cfo);
        let pct = |v: &[f64]| PERCENTILES.iter().filter_map(|&p| Some((p, percentile(v, p)?))).collect();
        groups.push(GroupSummary {
            method: first.method,
            channel: first.channel,
            snr_db: first.snr_db,
            n_rep: first.n_rep,
            trials: chunk.len(),
            ok: count(Status::Ok),
            not_found: count(Status::NotFound),
            failed: count(Status::Failed),
            mean_toa_error_us: mean_toa,
            max_toa_error_us: max_toa,
            mean_coarse_error_us: mean_coarse,
            max_coarse_error_us: max_coarse,
            mean_cfo_error_hz: mean_cfo,
            max_cfo_error_hz: max_cfo,
            cfo_percentiles: pct(&cfo),
            toa_percentiles: pct(&toa),
            toa_cdf: empirical_cdf(&toa),
            cfo_cdf: empirical_cdf(&cfo),
        });
    }
    let pre = PreambleConfig::default();
    Summary {
        groups,
        sample_rate_hz: pre.sample_rate,
        symbol_duration_us: pre.samples_to_us(pre.fft_len as f64),
    }
}

pub fn write_records_csv<W: Write>(records: &[TrialRecord], w: W) -> Result<()> {
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let mut wtr = csv::Writer::from_writer(w);
    for r in sorted {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_records_csv<R: std::io::Read>(r: R) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<TrialRecord>, _>>()?)
}

/// Per-trial wall time, kept apart from the reproducible trial table.
pub fn write_timing_csv<W: Write>(records: &[TrialRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["method", "channel", "snr_db", "n_rep", "trial_id", "wall_ms"])?;
    for r in records {
        wtr.write_record([
            format!("{:?}", r.method),
            format!("{:?}", r.channel),
            r.snr_db.map(|s| s.to_string()).unwrap_or_default(),
            r.n_rep.to_string(),
            r.trial_id.to_string(),
            format!("{:.3}", r.wall_ms),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Whitespace-separated CDF blocks, one per group, separated by two blank lines.
pub fn write_cdf_dat<W: Write>(summary: &Summary, mut w: W) -> Result<()> {
    for g in &summary.groups {
        let snr = g.snr_db.map_or("inf".to_string(), |s| s.to_string());
        writeln!(w, "# {:?} {:?} snr_db={} n_rep={}", g.method, g.channel, snr, g.n_rep)?;
        writeln!(w, "# toa_error_us cdf")?;
        for (x, p) in &g.toa_cdf {
            writeln!(w, "{x:.6} {p:.6}")?;
        }
        writeln!(w, "\n")?;
    }
    Ok(())
}

/// Writes `trials.csv`, `timing.csv`, `summary.json` and `toa_cdf.dat` into `dir`.
pub fn write_outputs(records: &[TrialRecord], dir: &Path) -> Result<Summary> {
    std::fs::create_dir_all(dir)?;
    write_records_csv(records, BufWriter::new(File::create(dir.join("trials.csv"))?))?;
    write_timing_csv(records, BufWriter::new(File::create(dir.join("timing.csv"))?))?;
    let summary = summarize(records);
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("summary.json"))?), &summary)?;
    write_cdf_dat(&summary, BufWriter::new(File::create(dir.join("toa_cdf.dat"))?))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(trial_id: usize, err: f64) -> TrialRecord {
        TrialRecord {
            trial_id,
            method: Method::Proposed,
            snr_db: Some(0.0),
            n_rep: 8,
            channel: ChannelKind::Awgn,
            true_toa_us: 100.0,
            true_cfo_hz: 10.0,
            true_rate_hz_per_s: -250.0,
            measured_rate_hz_per_s: -250.0,
            coarse_toa_us: Some(100.0 + err),
            est_toa_us: Some(100.0 + err),
            est_cfo_hz: Some(10.0),
            status: Status::Ok,
            wall_ms: 1.0,
        }
    }

    #[test]
    fn single_record_summary() {
        let s = summarize(&[record(0, 5.0)]);
        let g = &s.groups[0];
        assert!((g.mean_toa_error_us.unwrap() - 5.0).abs() < 1e-12);
        assert!((g.max_toa_error_us.unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_error_cdf_steps_at_zero() {
        let cdf = empirical_cdf(&[0.0; 4]);
        assert!(cdf.iter().all(|(x, _)| *x == 0.0));
        assert_eq!(cdf.last().unwrap().1, 1.0);
        assert!(cdf.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn empty_group_is_reported() {
        let mut r = record(0, 1.0);
        r.status = Status::Failed;
        let s = summarize(&[r]);
        assert_eq!(s.groups.len(), 1);
        assert_eq!(s.groups[0].failed, 1);
        assert_eq!(s.groups[0].mean_toa_error_us, None);
    }

    #[test]
    fn summary_is_order_independent() {
        let recs: Vec<TrialRecord> = (0..6).map(|i| record(i, i as f64)).collect();
        let mut rev = recs.clone();
        rev.reverse();
        assert_eq!(summarize(&recs), summarize(&rev));
    }

    #[test]
    fn csv_round_trip_drops_timing() {
        let recs = vec![record(1, 2.0), record(0, 1.0)];
        let mut buf = Vec::new();
        write_records_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(!text.contains("wall_ms"));
        let back = read_records_csv(buf.as_slice()).unwrap();
        assert_eq!(back[0].trial_id, 0);
        assert_eq!(back.len(), 2);
    }

    #[test]
    fn draws_depend_only_on_seed_and_trial() {
        let cfg = ExperimentConfig::default();
        assert_eq!(draw_trial(&cfg, 7), draw_trial(&cfg, 7));
        assert_ne!(draw_trial(&cfg, 7), draw_trial(&cfg, 8));
        let d = draw_trial(&cfg, 3);
        assert!((0.0..700.0).contains(&d.toa_us) && (-600.0..600.0).contains(&d.cfo_hz));
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig { trials_per_point: 0, ..Default::default() }.validate().is_err());
        assert!(ExperimentConfig { toa_prior_us: [0.0, 900.0], ..Default::default() }.validate().is_err());
        assert!(ExperimentConfig::from_json("{\"snr_db_list\": [null, 3.0]}").is_ok());
        assert!(ExperimentConfig::from_json("{\"bogus\": ").is_err());
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 99.0), Some(99.0));
        assert_eq!(percentile(&v, 100.0), Some(100.0));
        assert_eq!(percentile(&[], 50.0), None);
    }
}
