//! Change-point detection with a time-invariant autoencoder representation.
//!
//! Consecutive windows of the phase series are encoded by a one-hidden-layer
//! tanh autoencoder. The first `n_invariant` hidden units form the invariant
//! feature `s`, trained to vary slowly between neighbouring windows. The
//! dissimilarity `D_n = |s(n) - s(n + N)|` compares the windows either side of
//! position `n + N`; peaks of its smoothed version whose topographic
//! prominence clears `mean + k * std` are reported as change points.
//!
//! Model blob layout (little endian):
//! `b"TIRE"`, `u32` version, `u32` window_len, `u32` n_invariant,
//! `u32` n_instant, then `f32` weights `w1 (H x N)`, `b1 (H)`, `w2 (N x H)`,
//! `b2 (N)`, all row-major with `H = n_invariant + n_instant`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::PhaseSeries;

const MAGIC: &[u8; 4] = b"TIRE";
const BLOB_VERSION: u32 = 1;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Target standard deviation of the hidden pre-activations after PCA start.
const INIT_PREACT_STD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TireConfig {
    pub window_len: usize,
    pub stride: usize,
    pub n_invariant: usize,
    pub n_instant: usize,
    pub hidden_act: Activation,
    /// Weight of the time-invariance penalty.
    pub consistency_weight: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Cap on the number of window pairs used for training.
    pub max_train_pairs: usize,
    pub prominence_k: f64,
    pub seed: u64,
}

impl Default for TireConfig {
    fn default() -> Self {
        Self {
            window_len: 64,
            stride: 4,
            n_invariant: 1,
            n_instant: 3,
            hidden_act: Activation::Tanh,
            consistency_weight: 0.01,
            epochs: 50,
            lr: 1e-3,
            batch_size: 32,
            max_train_pairs: 512,
            prominence_k: 2.0,
            seed: 0,
        }
    }
}

impl TireConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_invariant == 0 {
            return bad("n_invariant must be at least 1");
        }
        if self.window_len < 8 {
            return bad("window_len must be at least 8");
        }
        if self.stride == 0 || self.stride > self.window_len {
            return bad("stride must be in [1, window_len]");
        }
        if self.window_len % self.stride != 0 {
            return bad("window_len must be a multiple of stride");
        }
        if self.batch_size == 0 || self.max_train_pairs == 0 {
            return bad("batch_size and max_train_pairs must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.consistency_weight >= 0.0) {
            return bad("lr must be positive and consistency_weight non-negative");
        }
        if !self.prominence_k.is_finite() {
            return bad("prominence_k must be finite");
        }
        Ok(())
    }

    pub fn hidden(&self) -> usize {
        self.n_invariant + self.n_instant
    }
}

/// Trained encoder/decoder weights. Immutable after training.
#[derive(Debug, Clone, PartialEq)]
pub struct TireModel {
    pub window_len: usize,
    pub n_invariant: usize,
    pub n_instant: usize,
    pub w1: Vec<f32>,
    pub b1: Vec<f32>,
    pub w2: Vec<f32>,
    pub b2: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangePoint {
    /// Absolute sample index, refined to sub-stride resolution.
    pub index: f64,
    pub prominence: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChangePointSet {
    pub points: Vec<ChangePoint>,
    /// Raw `(index, D_n)` pairs.
    pub dissimilarity: Vec<(i64, f64)>,
    /// Smoothed dissimilarity the peaks were picked from, same indices.
    pub score: Vec<f64>,
    pub threshold: f64,
}

impl ChangePointSet {
    pub fn indices(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.index).collect()
    }
}

/// Series scaled to unit standard deviation; constant series map to zeros.
fn normalize(x: &[f64]) -> Vec<f64> {
    let n = x.len().max(1) as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 1e-24 { 1.0 / var.sqrt() } else { 0.0 };
    x.iter().map(|v| (v - mean) * scale).collect()
}

/// Mean-removed window of `x` starting at `start`.
fn window(x: &[f64], start: usize, len: usize) -> Vec<f64> {
    let w = &x[start..start + len];
    let mean = w.iter().sum::<f64>() / len as f64;
    w.iter().map(|v| v - mean).collect()
}

fn window_starts(len: usize, cfg_len: usize, stride: usize) -> Vec<usize> {
    if len < cfg_len {
        return Vec::new();
    }
    (0..=(len - cfg_len) / stride).map(|j| j * stride).collect()
}

/// Working copy of the parameters in double precision.
struct Params {
    n: usize,
    h: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl Params {
    fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn encode(&self, x: &[f64], hid: &mut [f64]) {
        for (i, hi) in hid.iter_mut().enumerate() {
            let row = &self.w1[i * self.n..(i + 1) * self.n];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[i];
            *hi = z.tanh();
        }
    }

    fn decode(&self, hid: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.w2[j * self.h..(j + 1) * self.h];
            *o = row.iter().zip(hid).map(|(w, v)| w * v).sum::<f64>() + self.b2[j];
        }
    }

    fn flat_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

/// Encoder rows from the leading principal components, decoder as their inverse.
fn pca_init(windows: &[Vec<f64>], n: usize, h: usize) -> Params {
    let mut mean = vec![0.0; n];
    for w in windows {
        for (m, v) in mean.iter_mut().zip(w) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= windows.len().max(1) as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for w in windows {
        let d: Vec<f64> = w.iter().zip(&mean).map(|(a, b)| a - b).collect();
        for i in 0..n {
            for j in i..n {
                cov[(i, j)] += d[i] * d[j];
            }
        }
    }
    for i in 0..n {
        for j in i..n {
            let v = cov[(i, j)] / windows.len().max(1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut p = Params {
        n,
        h,
        w1: vec![0.0; h * n],
        b1: vec![0.0; h],
        w2: vec![0.0; n * h],
        b2: mean.clone(),
    };
    for (i, &k) in order.iter().take(h).enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        // fix the sign so that the largest-magnitude entry is positive
        let lead = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let lambda = eig.eigenvalues[k].max(0.0);
        let a = if lambda > 1e-12 { INIT_PREACT_STD / lambda.sqrt() } else { 1.0 };
        for j in 0..n {
            p.w1[i * n + j] = a * v[j];
            p.w2[j * h + i] = v[j] / a;
        }
        p.b1[i] = -a * v.iter().zip(&mean).map(|(x, m)| x * m).sum::<f64>();
    }
    p
}

/// Trains the autoencoder on consecutive window pairs of `ps`.
pub fn train_tire(ps: &PhaseSeries, cfg: &TireConfig) -> Result<TireModel> {
    cfg.validate()?;
    let need = 4 * cfg.window_len;
    if ps.len() < need {
        return Err(Error::SeriesTooShort { len: ps.len(), need });
    }
    let x = normalize(&ps.phase);
    let n = cfg.window_len;
    let h = cfg.hidden();
    let starts = window_starts(x.len(), n, cfg.stride);
    let n_pairs = starts.len() - 1;
    // evenly spread subset of pairs, first index of each pair
    let take = n_pairs.min(cfg.max_train_pairs);
    let pair_idx: Vec<usize> = (0..take).map(|i| i * n_pairs / take).collect();
    let mut needed: Vec<usize> = pair_idx.iter().flat_map(|&i| [i, i + 1]).collect();
    needed.dedup();
    let windows: Vec<Vec<f64>> = starts.iter().map(|&s| window(&x, s, n)).collect();
    let train_windows: Vec<Vec<f64>> = needed.iter().map(|&i| windows[i].clone()).collect();

    let mut p = pca_init(&train_windows, n, h);
    let mut m1 = vec![0.0; p.len()];
    let mut m2 = vec![0.0; p.len()];
    let mut step = 0i32;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = pair_idx.clone();
    let n_inv = cfg.n_invariant;
    let lambda = cfg.consistency_weight;

    let mut grad = Params {
        n,
        h,
        w1: vec![0.0; h * n],
        b1: vec![0.0; h],
        w2: vec![0.0; n * h],
        b2: vec![0.0; n],
    };
    let mut hid = [vec![0.0; h], vec![0.0; h]];
    let mut out = vec![0.0; n];
    let mut dh = [vec![0.0; h], vec![0.0; h]];

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            for g in grad.flat_mut() {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            let bscale = 1.0 / batch.len() as f64;
            for &pi in batch {
                let pair = [&windows[pi], &windows[pi + 1]];
                for side in 0..2 {
                    p.encode(pair[side], &mut hid[side]);
                    p.decode(&hid[side], &mut out);
                    dh[side].iter_mut().for_each(|v| *v = 0.0);
                    // reconstruction term: mean squared error averaged over the pair
                    let c = 2.0 / (2.0 * n as f64) * bscale;
                    for j in 0..n {
                        let g = c * (out[j] - pair[side][j]);
                        grad.b2[j] += g;
                        for i in 0..h {
                            grad.w2[j * h + i] += g * hid[side][i];
                            dh[side][i] += g * p.w2[j * h + i];
                        }
                    }
                }
                for i in 0..n_inv {
                    let d = 2.0 * lambda * (hid[0][i] - hid[1][i]) * bscale;
                    dh[0][i] += d;
                    dh[1][i] -= d;
                }
                for side in 0..2 {
                    for i in 0..h {
                        let dz = dh[side][i] * (1.0 - hid[side][i] * hid[side][i]);
                        grad.b1[i] += dz;
                        let row = &mut grad.w1[i * n..(i + 1) * n];
                        for (gw, xv) in row.iter_mut().zip(pair[side]) {
                            *gw += dz * xv;
                        }
                    }
                }
            }
            step += 1;
            let bc1 = 1.0 - ADAM_BETA1.powi(step);
            let bc2 = 1.0 - ADAM_BETA2.powi(step);
            let mut k = 0;
            let grads = [&grad.w1, &grad.b1, &grad.w2, &grad.b2];
            for (param, g) in p.flat_mut().into_iter().zip(grads) {
                for (w, gv) in param.iter_mut().zip(g.iter()) {
                    m1[k] = ADAM_BETA1 * m1[k] + (1.0 - ADAM_BETA1) * gv;
                    m2[k] = ADAM_BETA2 * m2[k] + (1.0 - ADAM_BETA2) * gv * gv;
                    *w -= cfg.lr * (m1[k] / bc1) / ((m2[k] / bc2).sqrt() + ADAM_EPS);
                    k += 1;
                }
            }
        }
    }

    let to32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
    Ok(TireModel {
        window_len: n,
        n_invariant: cfg.n_invariant,
        n_instant: cfg.n_instant,
        w1: to32(&p.w1),
        b1: to32(&p.b1),
        w2: to32(&p.w2),
        b2: to32(&p.b2),
    })
}

impl TireModel {
    pub fn hidden(&self) -> usize {
        self.n_invariant + self.n_instant
    }

    fn params(&self) -> Params {
        let to64 = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<f64>>();
        Params {
            n: self.window_len,
            h: self.hidden(),
            w1: to64(&self.w1),
            b1: to64(&self.b1),
            w2: to64(&self.w2),
            b2: to64(&self.b2),
        }
    }

    fn check(&self) -> Result<()> {
        let (n, h) = (self.window_len, self.hidden());
        if self.n_invariant == 0
            || self.w1.len() != h * n
            || self.b1.len() != h
            || self.w2.len() != n * h
            || self.b2.len() != n
        {
            return Err(Error::BadModel("inconsistent dimensions".into()));
        }
        Ok(())
    }

    /// Invariant features of every stride-spaced window of an already normalized series.
    fn invariant_features(&self, x: &[f64], stride: usize) -> (Vec<usize>, Vec<Vec<f64>>) {
        let p = self.params();
        let starts = window_starts(x.len(), self.window_len, stride);
        let mut hid = vec![0.0; p.h];
        let feats = starts
            .iter()
            .map(|&s| {
                p.encode(&window(x, s, self.window_len), &mut hid);
                hid[..self.n_invariant].to_vec()
            })
            .collect();
        (starts, feats)
    }

    /// Invariant feature of each stride-spaced window, keyed by absolute window start.
    pub fn features(&self, ps: &PhaseSeries, stride: usize) -> Vec<(i64, Vec<f64>)> {
        let x = normalize(&ps.phase);
        let (starts, feats) = self.invariant_features(&x, stride);
        starts.into_iter().map(|s| ps.base_index + s as i64).zip(feats).collect()
    }

    /// Mean squared reconstruction error over all stride-spaced windows.
    pub fn reconstruction_error(&self, ps: &PhaseSeries, stride: usize) -> f64 {
        let p = self.params();
        let x = normalize(&ps.phase);
        let starts = window_starts(x.len(), self.window_len, stride);
        let mut hid = vec![0.0; p.h];
        let mut out = vec![0.0; p.n];
        let mut total = 0.0;
        for &s in &starts {
            let w = window(&x, s, self.window_len);
            p.encode(&w, &mut hid);
            p.decode(&hid, &mut out);
            total += out.iter().zip(&w).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.n as f64;
        }
        total / starts.len().max(1) as f64
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        self.check()?;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        for v in [BLOB_VERSION, self.window_len as u32, self.n_invariant as u32, self.n_instant as u32] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for arr in [&self.w1, &self.b1, &self.w2, &self.b2] {
            for v in arr.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<TireModel> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() < 20 || &bytes[..4] != MAGIC {
            return Err(Error::BadModel("missing magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
        if word(4) != BLOB_VERSION {
            return Err(Error::BadModel(format!("unsupported version {}", word(4))));
        }
        let (n, n_inv, n_inst) = (word(8) as usize, word(12) as usize, word(16) as usize);
        let h = n_inv + n_inst;
        let count = 2 * h * n + h + n;
        if n == 0 || n_inv == 0 || bytes.len() != 20 + 4 * count {
            return Err(Error::BadModel("length does not match dimensions".into()));
        }
        let floats: Vec<f32> = bytes[20..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let (w1, rest) = floats.split_at(h * n);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(n * h);
        let model = TireModel {
            window_len: n,
            n_invariant: n_inv,
            n_instant: n_inst,
            w1: w1.to_vec(),
            b1: b1.to_vec(),
            w2: w2.to_vec(),
            b2: b2.to_vec(),
        };
        if floats.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadModel("non-finite weight".into()));
        }
        Ok(model)
    }
}

/// `(index, D_n)` with `D_n = |s(n) - s(n + N)|` reported at `n + N`.
pub fn dissimilarity(model: &TireModel, ps: &PhaseSeries, cfg: &TireConfig) -> Vec<(i64, f64)> {
    let x = normalize(&ps.phase);
    let (starts, feats) = model.invariant_features(&x, cfg.stride);
    let lag = model.window_len / cfg.stride;
    (0..starts.len().saturating_sub(lag))
        .map(|j| {
            let d = feats[j]
                .iter()
                .zip(&feats[j + lag])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            (ps.base_index + (starts[j] + model.window_len) as i64, d)
        })
        .collect()
}

/// Hann-weighted moving average with `half` points each side, renormalized at the edges.
pub fn smooth(values: &[f64], half: usize) -> Vec<f64> {
    if half == 0 {
        return values.to_vec();
    }
    let kernel: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let x = (i as f64 - half as f64) / (half as f64 + 1.0);
            0.5 * (1.0 + (std::f64::consts::PI * x).cos())
        })
        .collect();
    (0..values.len())
        .map(|i| {
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (k, w) in kernel.iter().enumerate() {
                let j = i as i64 + k as i64 - half as i64;
                if j >= 0 && (j as usize) < values.len() {
                    acc += w * values[j as usize];
                    wsum += w;
                }
            }
            acc / wsum
        })
        .collect()
}

/// Local maxima as `(position, prominence)`; a flat top is located at its midpoint.
pub fn peak_prominences(y: &[f64]) -> Vec<(f64, f64)> {
    let n = y.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i - 1] < y[i] {
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                let peak = y[i];
                let mut left_min = peak;
                let mut k = i;
                while k > 0 {
                    k -= 1;
                    if y[k] > peak {
                        break;
                    }
                    left_min = left_min.min(y[k]);
                }
                let mut right_min = peak;
                let mut k = j;
                while k + 1 < n {
                    k += 1;
                    if y[k] > peak {
                        break;
                    }
                    right_min = right_min.min(y[k]);
                }
                out.push(((i + j) as f64 / 2.0, peak - left_min.max(right_min)));
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len().max(1) as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Change points of `ps` under an existing model.
pub fn detect_with_model(model: &TireModel, ps: &PhaseSeries, cfg: &TireConfig) -> ChangePointSet {
    let dis = dissimilarity(model, ps, cfg);
    if dis.len() < 3 {
        return ChangePointSet { dissimilarity: dis, ..Default::default() };
    }
    let raw: Vec<f64> = dis.iter().map(|d| d.1).collect();
    // A jump inside a window yields twin lobes at +-N/2; the smoother merges them.
    let score = smooth(&raw, 2 * model.window_len / cfg.stride);
    let (mean, std) = mean_std(&score);
    let threshold = mean + cfg.prominence_k * std;
    let stride = cfg.stride as f64;
    let mut points: Vec<ChangePoint> = peak_prominences(&score)
        .into_iter()
        .filter(|&(_, prom)| prom >= threshold && prom > 0.0)
        .map(|(pos, prom)| {
            let mut offset = 0.0;
            if pos.fract() == 0.0 {
                let i = pos as usize;
                let (a, b, c) = (score[i - 1], score[i], score[i + 1]);
                let den = a - 2.0 * b + c;
                if den < 0.0 {
                    offset = (0.5 * (a - c) / den).clamp(-0.5, 0.5);
                }
            }
            ChangePoint { index: dis[0].0 as f64 + (pos + offset) * stride, prominence: prom }
        })
        .collect();
    points.sort_by(|a, b| a.index.total_cmp(&b.index));
    ChangePointSet { points, dissimilarity: dis, score, threshold }
}

/// Trains on `ps` itself, then detects.
pub fn detect(ps: &PhaseSeries, cfg: &TireConfig) -> Result<ChangePointSet> {
    let model = train_tire(ps, cfg)?;
    Ok(detect_with_model(&model, ps, cfg))
}
