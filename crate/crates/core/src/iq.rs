//! Complex baseband sample buffers and the raw IQ dump format.
//!
//! The dump format is header-less: interleaved little-endian `f32` pairs
//! `I0 Q0 I1 Q1 ...`. The absolute index of the first sample is not stored.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex samples together with the absolute sample index of the first one.
#[derive(Debug, Clone, PartialEq)]
pub struct IqBuffer {
    pub samples: Vec<Complex64>,
    pub base_index: i64,
}

impl IqBuffer {
    pub fn new(samples: Vec<Complex64>, base_index: i64) -> Self {
        Self { samples, base_index }
    }

    pub fn zeros(len: usize, base_index: i64) -> Self {
        Self::new(vec![Complex64::new(0.0, 0.0); len], base_index)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// One past the absolute index of the last sample.
    pub fn end_index(&self) -> i64 {
        self.base_index + self.samples.len() as i64
    }

    /// Sample at an absolute index, if it lies inside the buffer.
    pub fn at(&self, index: i64) -> Option<Complex64> {
        let rel = index - self.base_index;
        if rel < 0 {
            return None;
        }
        self.samples.get(rel as usize).copied()
    }

    /// Copy of the samples in `[start, end)` (absolute), zero outside the buffer.
    pub fn window(&self, start: i64, end: i64) -> IqBuffer {
        let len = (end - start).max(0) as usize;
        let samples = (0..len)
            .map(|i| self.at(start + i as i64).unwrap_or_default())
            .collect();
        IqBuffer::new(samples, start)
    }

    /// Same samples, re-labelled so that the first one sits at `base_index`.
    pub fn rebased(&self, base_index: i64) -> IqBuffer {
        IqBuffer::new(self.samples.clone(), base_index)
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|s| s.re.is_finite() && s.im.is_finite())
    }

    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    pub fn write_raw<W: Write>(&self, mut w: W) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.samples.len() * 8);
        for s in &self.samples {
            bytes.extend_from_slice(&(s.re as f32).to_le_bytes());
            bytes.extend_from_slice(&(s.im as f32).to_le_bytes());
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_raw<R: Read>(mut r: R, base_index: i64) -> Result<IqBuffer> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() % 8 != 0 {
            return Err(Error::InvalidConfig(format!(
                "raw IQ stream length {} is not a multiple of 8 bytes",
                bytes.len()
            )));
        }
        let samples = bytes
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
                Complex64::new(re as f64, im as f64)
            })
            .collect();
        Ok(IqBuffer::new(samples, base_index))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_dump_layout_is_interleaved_le_f32() {
        let buf = IqBuffer::new(vec![Complex64::new(1.0, -2.0), Complex64::new(0.5, 0.25)], 7);
        let mut out = Vec::new();
        buf.write_raw(&mut out).unwrap();
        assert_eq!(out.len(), 16);
        assert_eq!(&out[0..4], &1.0f32.to_le_bytes());
        assert_eq!(&out[4..8], &(-2.0f32).to_le_bytes());
        assert_eq!(&out[12..16], &0.25f32.to_le_bytes());
        let back = IqBuffer::read_raw(&out[..], 7).unwrap();
        assert_eq!(back, buf);
    }

    #[test]
    fn truncated_raw_stream_is_rejected() {
        assert!(IqBuffer::read_raw(&[0u8; 12][..], 0).is_err());
    }

    #[test]
    fn window_pads_outside_with_zeros() {
        let buf = IqBuffer::new(vec![Complex64::new(1.0, 0.0); 3], 10);
        let w = buf.window(8, 14);
        assert_eq!(w.base_index, 8);
        assert_eq!(w.len(), 6);
        assert_eq!(w.samples[0], Complex64::new(0.0, 0.0));
        assert_eq!(w.samples[2], Complex64::new(1.0, 0.0));
        assert_eq!(w.samples[5], Complex64::new(0.0, 0.0));
    }
}
