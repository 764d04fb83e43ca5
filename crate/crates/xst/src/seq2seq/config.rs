use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Encoder architecture: a stack of strided 1-D convolutions over the
/// feature frames followed by a bidirectional LSTM stack. Defaults follow
/// the reference setup; desk-scale runs shrink the same fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub cnn_filters: Vec<usize>,
    pub cnn_width: usize,
    pub cnn_stride: usize,
    pub lstm_layers: usize,
    /// Hidden size per direction; the layer output concatenates both
    /// directions to twice this width.
    pub lstm_hidden: usize,
}

impl EncoderConfig {
    pub fn reference() -> EncoderConfig {
        EncoderConfig {
            input_dim: 13,
            cnn_filters: vec![128, 512],
            cnn_width: 9,
            cnn_stride: 2,
            lstm_layers: 3,
            lstm_hidden: 512,
        }
    }

    /// Interpret a hidden size as the total over both directions instead of
    /// per direction; must be even.
    pub fn set_total_hidden(&mut self, total: usize) -> Result<()> {
        if total == 0 || total % 2 != 0 {
            return Err(Error::Config(format!(
                "total bidirectional hidden size must be positive and even, got {}",
                total
            )));
        }
        self.lstm_hidden = total / 2;
        Ok(())
    }

    /// Width of each encoder output row: both directions concatenated.
    pub fn output_dim(&self) -> usize {
        2 * self.lstm_hidden
    }

    /// Number of encoder output rows for t input frames: one ceil-division
    /// per strided convolution layer.
    pub fn output_len(&self, t: usize) -> usize {
        self.cnn_filters
            .iter()
            .fold(t, |n, _| n.div_ceil(self.cnn_stride))
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("encoder input_dim must be positive".to_string()));
        }
        if self.cnn_filters.is_empty() || self.cnn_filters.iter().any(|&f| f == 0) {
            return Err(Error::Config(
                "cnn_filters must be non-empty and positive".to_string(),
            ));
        }
        if self.cnn_width == 0 {
            return Err(Error::Config("cnn_width must be positive".to_string()));
        }
        if self.cnn_stride == 0 {
            return Err(Error::Config("cnn_stride must be >= 1".to_string()));
        }
        if self.lstm_layers == 0 || self.lstm_hidden == 0 {
            return Err(Error::Config(
                "encoder lstm_layers and lstm_hidden must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// Decoder architecture: token embedding with input feeding, a unidirectional
/// LSTM stack, general-score attention and a softmax output layer sized by
/// the vocabulary. The attentional vector shares the decoder hidden width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
}

impl DecoderConfig {
    pub fn reference(vocab_size: usize) -> DecoderConfig {
        DecoderConfig {
            vocab_size,
            embed_dim: 128,
            lstm_layers: 3,
            lstm_hidden: 256,
        }
    }

    /// Width of the attentional vector fed to the output layer and back into
    /// the next step's input.
    pub fn att_dim(&self) -> usize {
        self.lstm_hidden
    }

    pub fn validate(&self) -> Result<()> {
        // Vocabulary always contains PAD, BOS and EOS.
        if self.vocab_size < 3 {
            return Err(Error::Config(format!(
                "vocab_size must be at least 3, got {}",
                self.vocab_size
            )));
        }
        if self.embed_dim == 0 || self.lstm_layers == 0 || self.lstm_hidden == 0 {
            return Err(Error::Config(
                "decoder dims must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
}

impl ModelConfig {
    pub fn reference(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig::reference(),
            decoder: DecoderConfig::reference(vocab_size),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()
    }
}

/// Knobs of one training epoch: scheduled sampling, late-epoch input
/// corruption, variational dropout and L2 weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    /// Probability of feeding the model's own argmax prediction instead of
    /// the teacher token at each decoder position.
    pub sample_prob: f64,
    /// Probability of replacing a teacher input token with a uniformly
    /// random vocabulary token, active once the epoch exceeds
    /// `corrupt_start_epoch`.
    pub corrupt_prob: f64,
    pub corrupt_start_epoch: usize,
    pub dropout: f64,
    pub weight_decay: f64,
}

impl TrainSchedule {
    pub fn reference() -> TrainSchedule {
        TrainSchedule {
            sample_prob: 0.2,
            corrupt_prob: 0.3,
            corrupt_start_epoch: 20,
            dropout: 0.3,
            weight_decay: 1e-4,
        }
    }

    /// Plain teacher forcing: no sampling, corruption or dropout.
    pub fn plain() -> TrainSchedule {
        TrainSchedule {
            sample_prob: 0.0,
            corrupt_prob: 0.0,
            corrupt_start_epoch: usize::MAX,
            dropout: 0.0,
            weight_decay: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("sample_prob", self.sample_prob),
            ("corrupt_prob", self.corrupt_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{} {} outside [0, 1]", name, p)));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be >= 0".to_string()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let cfg = ModelConfig::reference(1000);
        assert_eq!(cfg.encoder.cnn_filters, vec![128, 512]);
        assert_eq!(cfg.encoder.cnn_width, 9);
        assert_eq!(cfg.encoder.cnn_stride, 2);
        assert_eq!(cfg.encoder.lstm_layers, 3);
        assert_eq!(cfg.encoder.lstm_hidden, 512);
        assert_eq!(cfg.encoder.input_dim, 13);
        assert_eq!(cfg.decoder.embed_dim, 128);
        assert_eq!(cfg.decoder.lstm_layers, 3);
        assert_eq!(cfg.decoder.lstm_hidden, 256);
        cfg.validate().unwrap();

        let s = TrainSchedule::reference();
        assert_eq!(s.sample_prob, 0.2);
        assert_eq!(s.corrupt_prob, 0.3);
        assert_eq!(s.corrupt_start_epoch, 20);
        assert_eq!(s.dropout, 0.3);
        assert_eq!(s.weight_decay, 1e-4);
        s.validate().unwrap();
    }

    #[test]
    fn output_len_stacks_ceil_divisions() {
        let cfg = EncoderConfig::reference();
        assert_eq!(cfg.output_len(16), 4);
        assert_eq!(cfg.output_len(1), 1);
        assert_eq!(cfg.output_len(15), 4);
        assert_eq!(cfg.output_len(17), 5);
    }

    #[test]
    fn both_hidden_conventions() {
        let mut cfg = EncoderConfig::reference();
        cfg.set_total_hidden(1024).unwrap();
        assert_eq!(cfg.lstm_hidden, 512);
        assert_eq!(cfg.output_dim(), 1024);
        assert!(cfg.set_total_hidden(511).is_err());
        assert!(cfg.set_total_hidden(0).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = ModelConfig::reference(100);
        cfg.encoder.cnn_width = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::reference(100);
        cfg.encoder.cnn_filters.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::reference(100);
        cfg.decoder.vocab_size = 2;
        assert!(cfg.validate().is_err());
        let mut s = TrainSchedule::reference();
        s.dropout = 1.0;
        assert!(s.validate().is_err());
        s.dropout = 0.3;
        s.sample_prob = -0.1;
        assert!(s.validate().is_err());
    }

    #[test]
    fn config_serde_round_trip() {
        let cfg = ModelConfig::reference(321);
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ModelConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }
}
