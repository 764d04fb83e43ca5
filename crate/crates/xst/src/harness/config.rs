use crate::seq2seq::{ModelConfig, TrainSchedule};
use crate::{Error, Result};

/// Everything one training run needs besides the data: architecture,
/// schedule, optimizer step size, seed and stopping policy. Defaults are the
/// reference setup; desk-scale runs override dims through the config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub sched: TrainSchedule,
    pub learning_rate: f64,
    pub seed: u64,
    pub max_epochs: usize,
    /// No stopping rule fires before this many epochs have run.
    pub min_epochs: usize,
    pub batch_size: usize,
    /// Early-stop patience in epochs on dev BLEU; 0 disables (the default,
    /// matching fixed-epoch training).
    pub patience: usize,
    /// Stop once dev teacher-forced token accuracy reaches this level
    /// (checked after min_epochs). Used by the synthetic experiments.
    pub stop_at_dev_accuracy: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            // Vocab size is a placeholder: training replaces it with the
            // actual vocabulary before building the model.
            model: ModelConfig::reference(3),
            sched: TrainSchedule::reference(),
            learning_rate: 0.001,
            seed: 1,
            max_epochs: 30,
            min_epochs: 1,
            batch_size: 8,
            patience: 0,
            stop_at_dev_accuracy: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.sched.validate()?;
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.min_epochs == 0 {
            return Err(Error::Config("min_epochs must be at least 1".into()));
        }
        if let Some(a) = self.stop_at_dev_accuracy {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!(
                    "stop_at_dev_accuracy {} outside [0, 1]",
                    a
                )));
            }
        }
        Ok(())
    }

    /// Parses a flat key-value config file: one `key value` pair per line,
    /// '#' comments, blank lines ignored. Unset keys keep their defaults;
    /// unknown keys are errors.
    pub fn from_file(path: &str) -> Result<ExperimentConfig> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = ExperimentConfig::default();
        for (ln, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once(char::is_whitespace).ok_or_else(|| {
                Error::format(path, format!("line {}: expected 'key value'", ln + 1))
            })?;
            cfg.set(key, value.trim())
                .map_err(|e| Error::format(path, format!("line {}: {}", ln + 1, e)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one key. Shared by the file parser and CLI overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value '{}' for {}", value, key)))
        }
        match key {
            "seed" => self.seed = num(key, value)?,
            "max_epochs" => self.max_epochs = num(key, value)?,
            "min_epochs" => self.min_epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "stop_at_dev_accuracy" => self.stop_at_dev_accuracy = Some(num(key, value)?),
            "learning_rate" => self.learning_rate = num(key, value)?,
            "weight_decay" => self.sched.weight_decay = num(key, value)?,
            "dropout" => self.sched.dropout = num(key, value)?,
            "sample_prob" => self.sched.sample_prob = num(key, value)?,
            "corrupt_prob" => self.sched.corrupt_prob = num(key, value)?,
            "corrupt_start_epoch" => self.sched.corrupt_start_epoch = num(key, value)?,
            "input_dim" => self.model.encoder.input_dim = num(key, value)?,
            "cnn_filters" => {
                let filters: Result<Vec<usize>> =
                    value.split(',').map(|v| num(key, v.trim())).collect();
                self.model.encoder.cnn_filters = filters?;
            }
            "cnn_width" => self.model.encoder.cnn_width = num(key, value)?,
            "cnn_stride" => self.model.encoder.cnn_stride = num(key, value)?,
            "lstm_layers" => self.model.encoder.lstm_layers = num(key, value)?,
            "lstm_hidden" => self.model.encoder.lstm_hidden = num(key, value)?,
            "embed_dim" => self.model.decoder.embed_dim = num(key, value)?,
            "dec_layers" => self.model.decoder.lstm_layers = num(key, value)?,
            "dec_hidden" => self.model.decoder.lstm_hidden = num(key, value)?,
            other => {
                return Err(Error::Config(format!("unknown config key '{}'", other)));
            }
        }
        Ok(())
    }

    /// The full key set in file syntax, every value resolved. Parsing this
    /// back yields an identical config, which is what makes an experiment
    /// directory self-describing.
    pub fn resolved(&self) -> String {
        let filters: Vec<String> = self
            .model
            .encoder
            .cnn_filters
            .iter()
            .map(|f| f.to_string())
            .collect();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push(' ');
            out.push_str(&v);
            out.push('\n');
        };
        kv("seed", self.seed.to_string());
        kv("max_epochs", self.max_epochs.to_string());
        kv("min_epochs", self.min_epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("patience", self.patience.to_string());
        if let Some(a) = self.stop_at_dev_accuracy {
            kv("stop_at_dev_accuracy", a.to_string());
        }
        kv("learning_rate", self.learning_rate.to_string());
        kv("weight_decay", self.sched.weight_decay.to_string());
        kv("dropout", self.sched.dropout.to_string());
        kv("sample_prob", self.sched.sample_prob.to_string());
        kv("corrupt_prob", self.sched.corrupt_prob.to_string());
        kv("corrupt_start_epoch", self.sched.corrupt_start_epoch.to_string());
        kv("input_dim", self.model.encoder.input_dim.to_string());
        kv("cnn_filters", filters.join(","));
        kv("cnn_width", self.model.encoder.cnn_width.to_string());
        kv("cnn_stride", self.model.encoder.cnn_stride.to_string());
        kv("lstm_layers", self.model.encoder.lstm_layers.to_string());
        kv("lstm_hidden", self.model.encoder.lstm_hidden.to_string());
        kv("embed_dim", self.model.decoder.embed_dim.to_string());
        kv("dec_layers", self.model.decoder.lstm_layers.to_string());
        kv("dec_hidden", self.model.decoder.lstm_hidden.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq2seq::{DecoderConfig, EncoderConfig};

    #[test]
    fn defaults_are_the_reference_setup() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.model.encoder, EncoderConfig::reference());
        assert_eq!(cfg.model.decoder.embed_dim, DecoderConfig::reference(3).embed_dim);
        assert_eq!(cfg.sched, TrainSchedule::reference());
        assert_eq!(cfg.learning_rate, 0.001);
        assert_eq!(cfg.patience, 0);
        cfg.validate().unwrap();
    }

    #[test]
    fn file_overrides_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.conf");
        std::fs::write(
            &path,
            "# tiny run\nseed 42\ncnn_filters 8, 16\nlstm_hidden 16\ndropout 0.1\nmax_epochs 5\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::from_file(path.to_str().unwrap()).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.model.encoder.cnn_filters, vec![8, 16]);
        assert_eq!(cfg.model.encoder.lstm_hidden, 16);
        assert_eq!(cfg.sched.dropout, 0.1);
        assert_eq!(cfg.max_epochs, 5);
        // Untouched keys keep defaults.
        assert_eq!(cfg.model.encoder.cnn_width, 9);

        std::fs::write(&path, "seeed 42\n").unwrap();
        let err = ExperimentConfig::from_file(path.to_str().unwrap())
            .unwrap_err()
            .to_string();
        assert!(err.contains("unknown config key 'seeed'"), "{}", err);
    }

    #[test]
    fn resolved_snapshot_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.set("seed", "99").unwrap();
        cfg.set("cnn_filters", "4,6").unwrap();
        cfg.set("stop_at_dev_accuracy", "0.8").unwrap();
        cfg.set("dec_hidden", "12").unwrap();
        let path = dir.path().join("resolved.conf");
        std::fs::write(&path, cfg.resolved()).unwrap();
        let back = ExperimentConfig::from_file(path.to_str().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_values_rejected() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.set("seed", "many").is_err());
        assert!(cfg.set("dropout", "1.5").is_ok());
        assert!(cfg.validate().is_err());
        cfg.sched.dropout = 0.2;
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
    }
}
