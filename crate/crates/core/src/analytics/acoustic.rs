//! Frame-level loudness (short-time energy) and frequency (zero-crossing rate).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcousticError {
    #[error("signal is empty")]
    EmptySignal,
    #[error("frame length {frame_len} and hop {hop} must be positive (frame length at least {min})")]
    BadFraming { frame_len: usize, hop: usize, min: usize },
    #[error("baseline mean is zero")]
    ZeroBaseline,
    #[error("baseline fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcousticFrame {
    /// Mean square amplitude of the frame.
    pub energy: f64,
    /// Sign changes per adjacent sample pair.
    pub zcr: f64,
    /// Frame center in seconds.
    pub t_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Framing {
    pub frame_s: f64,
    pub hop_s: f64,
}

impl Default for Framing {
    fn default() -> Self {
        Framing { frame_s: 0.05, hop_s: 0.025 }
    }
}

impl Framing {
    pub fn in_samples(&self, sample_rate: u32) -> (usize, usize) {
        let sr = f64::from(sample_rate);
        (((self.frame_s * sr).round() as usize).max(1), ((self.hop_s * sr).round() as usize).max(1))
    }
}

/// Start offsets of full frames; a signal shorter than one frame is a single frame.
fn frames(len: usize, frame_len: usize, hop: usize) -> Vec<(usize, usize)> {
    if len <= frame_len {
        return vec![(0, len)];
    }
    (0..=(len - frame_len)).step_by(hop).map(|s| (s, s + frame_len)).collect()
}

fn check(samples: &[f64], frame_len: usize, hop: usize, min: usize) -> Result<(), AcousticError> {
    if samples.is_empty() {
        return Err(AcousticError::EmptySignal);
    }
    if frame_len < min || hop == 0 {
        return Err(AcousticError::BadFraming { frame_len, hop, min });
    }
    Ok(())
}

fn energy(frame: &[f64]) -> f64 {
    frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64
}

fn zcr(frame: &[f64]) -> f64 {
    if frame.len() < 2 {
        return 0.0;
    }
    let crossings = frame.windows(2).filter(|p| (p[0] >= 0.0) != (p[1] >= 0.0)).count();
    crossings as f64 / (frame.len() - 1) as f64
}

/// Mean of squared samples per frame.
pub fn short_time_energy(samples: &[f64], frame_len: usize, hop: usize) -> Result<Vec<f64>, AcousticError> {
    check(samples, frame_len, hop, 1)?;
    Ok(frames(samples.len(), frame_len, hop).into_iter().map(|(a, b)| energy(&samples[a..b])).collect())
}

/// Sign changes between consecutive samples over `frame_len - 1`; zero counts as positive.
pub fn zero_crossing_rate(samples: &[f64], frame_len: usize, hop: usize) -> Result<Vec<f64>, AcousticError> {
    check(samples, frame_len, hop, 2)?;
    Ok(frames(samples.len(), frame_len, hop).into_iter().map(|(a, b)| zcr(&samples[a..b])).collect())
}

/// Both features per frame, timestamped at frame centers.
pub fn analyze_signal(samples: &[f64], sample_rate: u32, framing: &Framing) -> Result<Vec<AcousticFrame>, AcousticError> {
    let (frame_len, hop) = framing.in_samples(sample_rate);
    check(samples, frame_len, hop, 2)?;
    let sr = f64::from(sample_rate);
    Ok(frames(samples.len(), frame_len, hop)
        .into_iter()
        .map(|(a, b)| AcousticFrame {
            energy: energy(&samples[a..b]),
            zcr: zcr(&samples[a..b]),
            t_s: (a + b) as f64 / 2.0 / sr,
        })
        .collect())
}

/// Divides the series by the mean of its first `fraction` (at least one value).
pub fn baseline_normalize(series: &[f64], fraction: f64) -> Result<Vec<f64>, AcousticError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(AcousticError::BadFraction(fraction));
    }
    if series.is_empty() {
        return Err(AcousticError::EmptySignal);
    }
    let n = ((series.len() as f64 * fraction).floor() as usize).max(1);
    let base = series[..n].iter().sum::<f64>() / n as f64;
    if base == 0.0 || !base.is_finite() {
        return Err(AcousticError::ZeroBaseline);
    }
    Ok(series.iter().map(|x| x / base).collect())
}

pub const DEFAULT_BASELINE_FRACTION: f64 = 0.25;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_examples() {
        assert!(short_time_energy(&[0.0; 100], 10, 5).unwrap().iter().all(|&e| e == 0.0));
        assert!(short_time_energy(&[0.5; 100], 10, 5).unwrap().iter().all(|&e| e == 0.25));
        assert_eq!(short_time_energy(&[], 10, 5), Err(AcousticError::EmptySignal));
    }

    #[test]
    fn zcr_examples() {
        assert!(zero_crossing_rate(&[0.3; 64], 16, 8).unwrap().iter().all(|&z| z == 0.0));
        let alt: Vec<f64> = (0..64).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(zero_crossing_rate(&alt, 16, 8).unwrap().iter().all(|&z| z == 1.0));
        // Zeros count as positive: 0 -> -1 crosses, -1 -> 0 crosses, 0 -> 1 does not.
        assert_eq!(zero_crossing_rate(&[0.0, -1.0, 0.0, 1.0], 4, 1).unwrap(), vec![2.0 / 3.0]);
    }

    #[test]
    fn baseline_examples() {
        assert_eq!(baseline_normalize(&[3.0; 8], 0.25).unwrap(), vec![1.0; 8]);
        assert_eq!(
            baseline_normalize(&[1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0], 0.5).unwrap(),
            vec![1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]
        );
        assert_eq!(baseline_normalize(&[2.0, 2.0, 3.0, 5.0], 0.5).unwrap(), vec![1.0, 1.0, 1.5, 2.5]);
        assert_eq!(baseline_normalize(&[0.0, 0.0, 3.0, 5.0], 0.5), Err(AcousticError::ZeroBaseline));
    }

    #[test]
    fn frames_have_centers() {
        let sig: Vec<f64> = (0..16000).map(|i| (i as f64 * 0.1).sin()).collect();
        let f = analyze_signal(&sig, 16000, &Framing::default()).unwrap();
        // 800-sample frames every 400 samples over 16000 samples.
        assert_eq!(f.len(), 39);
        assert!((f[0].t_s - 0.025).abs() < 1e-12);
    }
}
