use super::FeatureSequence;
use crate::numcore::RngStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AugmentConfig {
    pub noise_std: f64,
    pub frame_drop_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            noise_std: 0.25,
            frame_drop_prob: 0.10,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.noise_std < 0.0 {
            return Err(Error::Config(format!("noise_std {} negative", self.noise_std)));
        }
        if !(0.0..=1.0).contains(&self.frame_drop_prob) {
            return Err(Error::Config(format!(
                "frame_drop_prob {} outside [0, 1]",
                self.frame_drop_prob
            )));
        }
        Ok(())
    }
}

/// Training-time feature augmentation: Gaussian noise on every coefficient,
/// then whole frames zero-masked with probability frame_drop_prob. Masking
/// rather than deleting keeps time alignment and the convolution output
/// length unchanged.
pub fn augment(f: &FeatureSequence, cfg: &AugmentConfig, rng: &mut RngStream) -> FeatureSequence {
    let mut out = f.clone();
    if cfg.noise_std > 0.0 {
        for v in out.frames.data.iter_mut() {
            *v += rng.normal(0.0, cfg.noise_std) as f32;
        }
    }
    if cfg.frame_drop_prob > 0.0 {
        for r in 0..out.num_frames() {
            if rng.flip(cfg.frame_drop_prob) {
                for v in out.frames.row_mut(r) {
                    *v = 0.0;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audiofeat::NUM_CEPS;
    use crate::numcore::Tensor;

    fn seq(t: usize) -> FeatureSequence {
        FeatureSequence {
            utterance_id: "u".to_string(),
            speaker_id: "s".to_string(),
            frames: Tensor::matrix(t, NUM_CEPS, vec![0.5; t * NUM_CEPS]),
            frame_shift_ms: 10.0,
            duration_seconds: 1.0,
        }
    }

    #[test]
    fn zero_config_is_identity() {
        let f = seq(10);
        let cfg = AugmentConfig {
            noise_std: 0.0,
            frame_drop_prob: 0.0,
        };
        let mut rng = RngStream::new(1, "augment");
        let out = augment(&f, &cfg, &mut rng);
        assert_eq!(out.frames.data, f.frames.data);
    }

    #[test]
    fn drop_prob_one_zeroes_everything_but_keeps_length() {
        let f = seq(12);
        let cfg = AugmentConfig {
            noise_std: 0.0,
            frame_drop_prob: 1.0,
        };
        let mut rng = RngStream::new(1, "augment");
        let out = augment(&f, &cfg, &mut rng);
        assert_eq!(out.num_frames(), 12);
        assert!(out.frames.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noise_std_matches_configured_value() {
        let t = 80_000;
        let f = FeatureSequence {
            utterance_id: "u".to_string(),
            speaker_id: "s".to_string(),
            frames: Tensor::matrix(t, NUM_CEPS, vec![0.0; t * NUM_CEPS]),
            frame_shift_ms: 10.0,
            duration_seconds: 1.0,
        };
        let cfg = AugmentConfig {
            noise_std: 0.25,
            frame_drop_prob: 0.0,
        };
        let mut rng = RngStream::new(7, "augment");
        let out = augment(&f, &cfg, &mut rng);
        let n = out.frames.data.len() as f64;
        let mean: f64 = out.frames.data.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var: f64 = out
            .frames
            .data
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        assert!((std - 0.25).abs() / 0.25 < 0.01, "std {}", std);
        assert!(out.frames.all_finite());
    }

    #[test]
    fn fixed_seed_reproduces() {
        let f = seq(20);
        let cfg = AugmentConfig::default();
        let mut r1 = RngStream::new(9, "augment");
        let mut r2 = RngStream::new(9, "augment");
        assert_eq!(
            augment(&f, &cfg, &mut r1).frames.data,
            augment(&f, &cfg, &mut r2).frames.data
        );
    }
}
