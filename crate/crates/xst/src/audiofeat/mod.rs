//! Audio front end: MFCC extraction, speaker-level normalization, and
//! training-time augmentation, plus a binary archive format so precomputed
//! features can be ingested directly.

pub mod augment;
pub mod features;
pub mod mfcc;
pub mod normalize;

use crate::numcore::Tensor;
use crate::{Error, Result};

pub use augment::{augment, AugmentConfig};
pub use features::{read_features, write_features};
pub use mfcc::{compute_mfcc, MfccConfig};
pub use normalize::{apply_normalization, compute_speaker_stats, speaker_normalize, SpeakerStats};

pub const NUM_CEPS: usize = 13;

/// Raw mono audio. Samples are expected in [-1, 1].
#[derive(Debug, Clone)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Invalid("sample_rate must be positive".to_string()));
        }
        if samples.is_empty() {
            return Err(Error::Invalid("empty waveform".to_string()));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }
}

/// One utterance's MFCC frames: a (T, 13) matrix plus identity and timing
/// metadata.
#[derive(Debug, Clone)]
pub struct FeatureSequence {
    pub utterance_id: String,
    pub speaker_id: String,
    pub frames: Tensor<f32>,
    pub frame_shift_ms: f64,
    pub duration_seconds: f64,
}

impl FeatureSequence {
    pub fn num_frames(&self) -> usize {
        self.frames.shape[0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.rank() != 2 || self.frames.shape[1] != NUM_CEPS {
            return Err(Error::Invalid(format!(
                "utterance {}: frames must be (T, {}), got {:?}",
                self.utterance_id, NUM_CEPS, self.frames.shape
            )));
        }
        if self.frames.shape[0] == 0 {
            return Err(Error::Invalid(format!(
                "utterance {}: no frames",
                self.utterance_id
            )));
        }
        if !self.frames.all_finite() {
            return Err(Error::Invalid(format!(
                "utterance {}: non-finite feature values",
                self.utterance_id
            )));
        }
        Ok(())
    }
}
