use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{FeatureSequence, Waveform, NUM_CEPS};
use crate::numcore::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct MfccConfig {
    pub window_ms: f64,
    pub shift_ms: f64,
    pub num_mel_filters: usize,
    pub num_ceps: usize,
    pub pre_emphasis: f64,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            window_ms: 25.0,
            shift_ms: 10.0,
            num_mel_filters: 23,
            num_ceps: NUM_CEPS,
            pre_emphasis: 0.97,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.shift_ms > 0.0 && self.window_ms > self.shift_ms) {
            return Err(Error::Config(format!(
                "mfcc window {} ms must exceed shift {} ms, both positive",
                self.window_ms, self.shift_ms
            )));
        }
        if self.num_ceps > self.num_mel_filters {
            return Err(Error::Config(format!(
                "num_ceps {} exceeds mel filter count {}",
                self.num_ceps, self.num_mel_filters
            )));
        }
        Ok(())
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank as a dense (num_filters, num_bins) weight
/// matrix over the one-sided spectrum of an `nfft`-point FFT.
pub fn mel_filterbank(num_filters: usize, nfft: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let nyquist = sample_rate as f64 / 2.0;
    let num_bins = nfft / 2 + 1;
    let mel_lo = hz_to_mel(0.0);
    let mel_hi = hz_to_mel(nyquist);
    let points: Vec<f64> = (0..num_filters + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (num_filters + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / nfft as f64;
    let mut bank = vec![vec![0.0; num_bins]; num_filters];
    for (k, filt) in bank.iter_mut().enumerate() {
        let (lo, mid, hi) = (points[k], points[k + 1], points[k + 2]);
        for (b, w) in filt.iter_mut().enumerate() {
            let f = b as f64 * bin_hz;
            if f > lo && f < hi {
                *w = if f <= mid {
                    (f - lo) / (mid - lo)
                } else {
                    (hi - f) / (hi - mid)
                };
            }
        }
    }
    bank
}

/// Orthonormal DCT-II of `xs`, keeping the first `num_ceps` coefficients.
pub fn dct_ortho(xs: &[f64], num_ceps: usize) -> Vec<f64> {
    let m = xs.len();
    let mut out = vec![0.0; num_ceps];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            acc += x * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * m) as f64).cos();
        }
        let scale = if k == 0 {
            (1.0 / m as f64).sqrt()
        } else {
            (2.0 / m as f64).sqrt()
        };
        *o = acc * scale;
    }
    out
}

/// Mel-filter log energies for one pre-windowed frame, via FFT. Exposed so
/// tests can compare against a direct DFT.
pub fn frame_mel_energies(windowed: &[f64], nfft: usize, bank: &[Vec<f64>], log_floor: f64) -> Vec<f64> {
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(nfft);
    let mut buf: Vec<Complex<f64>> = windowed
        .iter()
        .map(|&x| Complex::new(x, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(nfft)
        .collect();
    fft.process(&mut buf);
    let num_bins = nfft / 2 + 1;
    let mags: Vec<f64> = buf[..num_bins].iter().map(|c| c.norm()).collect();
    bank.iter()
        .map(|filt| {
            let e: f64 = filt.iter().zip(mags.iter()).map(|(w, m)| w * m).sum();
            e.max(log_floor).ln()
        })
        .collect()
}

/// Standard MFCC pipeline: pre-emphasis, framing, Hamming window, magnitude
/// FFT, mel filterbank, floored log, orthonormal DCT-II, first 13
/// coefficients. Frame count is 1 + floor((N - window) / shift).
pub fn compute_mfcc(
    w: &Waveform,
    cfg: &MfccConfig,
    utterance_id: &str,
    speaker_id: &str,
) -> Result<FeatureSequence> {
    cfg.validate()?;
    if w.samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::Invalid(format!(
            "utterance {}: non-finite samples",
            utterance_id
        )));
    }
    let sr = w.sample_rate as f64;
    let window = (cfg.window_ms * sr / 1000.0).round() as usize;
    let shift = (cfg.shift_ms * sr / 1000.0).round() as usize;
    let n = w.samples.len();
    if n < window {
        return Err(Error::Invalid(format!(
            "utterance {}: {} samples shorter than one {}-sample window",
            utterance_id, n, window
        )));
    }
    let num_frames = 1 + (n - window) / shift;

    let mut emphasized = Vec::with_capacity(n);
    emphasized.push(w.samples[0]);
    for t in 1..n {
        emphasized.push(w.samples[t] - cfg.pre_emphasis * w.samples[t - 1]);
    }

    let hamming: Vec<f64> = (0..window)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (window - 1) as f64).cos())
        .collect();

    let nfft = window.next_power_of_two();
    let bank = mel_filterbank(cfg.num_mel_filters, nfft, w.sample_rate);

    let mut data = Vec::with_capacity(num_frames * cfg.num_ceps);
    let mut windowed = vec![0.0; window];
    for f in 0..num_frames {
        let start = f * shift;
        for i in 0..window {
            windowed[i] = emphasized[start + i] * hamming[i];
        }
        let log_mel = frame_mel_energies(&windowed, nfft, &bank, cfg.log_floor);
        let ceps = dct_ortho(&log_mel, cfg.num_ceps);
        data.extend(ceps.iter().map(|&c| c as f32));
    }

    let fs = FeatureSequence {
        utterance_id: utterance_id.to_string(),
        speaker_id: speaker_id.to_string(),
        frames: Tensor::matrix(num_frames, cfg.num_ceps, data),
        frame_shift_ms: cfg.shift_ms,
        duration_seconds: n as f64 / sr,
    };
    fs.validate()?;
    Ok(fs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, seconds: f64, sr: u32) -> Waveform {
        let n = (seconds * sr as f64) as usize;
        let samples = (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * freq * t as f64 / sr as f64).sin() * 0.5)
            .collect();
        Waveform::new(samples, sr).unwrap()
    }

    #[test]
    fn one_second_at_16khz_gives_98_frames() {
        let w = tone(440.0, 1.0, 16000);
        let f = compute_mfcc(&w, &MfccConfig::default(), "u1", "s1").unwrap();
        assert_eq!(f.num_frames(), 98);
        assert_eq!(f.frames.shape[1], 13);
    }

    #[test]
    fn frame_count_follows_closed_form_when_doubled() {
        let w1 = tone(300.0, 0.5, 16000);
        let mut samples = w1.samples.clone();
        samples.extend_from_slice(&w1.samples);
        let w2 = Waveform::new(samples, 16000).unwrap();
        let f2 = compute_mfcc(&w2, &MfccConfig::default(), "u", "s").unwrap();
        let n = w2.samples.len();
        assert_eq!(f2.num_frames(), 1 + (n - 400) / 160);
    }

    #[test]
    fn silence_yields_identical_frames() {
        let w = Waveform::new(vec![0.0; 4000], 16000).unwrap();
        let f = compute_mfcc(&w, &MfccConfig::default(), "u", "s").unwrap();
        let first = f.frames.row(0).to_vec();
        for r in 1..f.num_frames() {
            assert_eq!(f.frames.row(r), &first[..]);
        }
        assert!(f.frames.all_finite());
    }

    #[test]
    fn too_short_waveform_rejected() {
        let w = Waveform::new(vec![0.1; 100], 16000).unwrap();
        assert!(compute_mfcc(&w, &MfccConfig::default(), "u", "s").is_err());
    }

    #[test]
    fn non_finite_samples_rejected() {
        let w = Waveform::new(vec![f64::NAN; 1000], 16000).unwrap();
        assert!(compute_mfcc(&w, &MfccConfig::default(), "u", "s").is_err());
    }

    #[test]
    fn tone_energy_concentrates_at_matching_filter_and_fft_matches_direct_dft() {
        let sr = 16000u32;
        let w = tone(1000.0, 0.1, sr);
        let cfg = MfccConfig::default();
        let window = 400;
        let nfft = 512;

        let mut emphasized = vec![w.samples[0]];
        for t in 1..w.samples.len() {
            emphasized.push(w.samples[t] - cfg.pre_emphasis * w.samples[t - 1]);
        }
        let hamming: Vec<f64> = (0..window)
            .map(|i| {
                0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (window - 1) as f64).cos()
            })
            .collect();
        let windowed: Vec<f64> = (0..window).map(|i| emphasized[i] * hamming[i]).collect();
        let bank = mel_filterbank(cfg.num_mel_filters, nfft, sr);

        let fast = frame_mel_energies(&windowed, nfft, &bank, cfg.log_floor);

        // Direct O(n^2) DFT oracle over the same zero-padded frame.
        let num_bins = nfft / 2 + 1;
        let mut mags = vec![0.0f64; num_bins];
        for (b, m) in mags.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for (i, &x) in windowed.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * b as f64 * i as f64 / nfft as f64;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            *m = (re * re + im * im).sqrt();
        }
        let slow: Vec<f64> = bank
            .iter()
            .map(|filt| {
                let e: f64 = filt.iter().zip(mags.iter()).map(|(w, m)| w * m).sum();
                e.max(cfg.log_floor).ln()
            })
            .collect();

        for (f, s) in fast.iter().zip(slow.iter()) {
            assert!((f - s).abs() < 1e-6, "fft {} vs dft {}", f, s);
        }

        // The strongest filter covers 1 kHz.
        let best = fast
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let nyquist = sr as f64 / 2.0;
        let mel_hi = hz_to_mel(nyquist);
        let center = mel_to_hz(mel_hi * (best + 1) as f64 / (cfg.num_mel_filters + 1) as f64);
        assert!(
            (center - 1000.0).abs() < 250.0,
            "peak filter {} centered at {} Hz",
            best,
            center
        );
    }

    #[test]
    fn dct_is_orthonormal_on_a_known_case() {
        // DCT of a constant vector keeps only coefficient 0: sqrt(M) * value.
        let xs = vec![2.0; 8];
        let c = dct_ortho(&xs, 8);
        assert!((c[0] - 2.0 * 8f64.sqrt()).abs() < 1e-12);
        for &v in &c[1..] {
            assert!(v.abs() < 1e-12);
        }
    }
}
