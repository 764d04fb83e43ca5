//! The shared recognition/translation model: strided-CNN + BiLSTM encoder,
//! attention LSTM decoder with input feeding, training-step logic (scheduled
//! sampling, late-epoch input corruption, variational dropout) and the
//! frozen-parameter scorer used for decoding.

pub mod config;
pub mod decoder;
pub mod encoder;
pub mod model;
pub mod scorer;
pub mod train;

pub use config::{DecoderConfig, EncoderConfig, ModelConfig, TrainSchedule};
pub use decoder::{attend, decode_step, DecMasks, DecState, DecStepOut};
pub use encoder::{encode_batch_train, encode_eval};
pub use model::{build_params, BnScratch, Model};
pub use scorer::{InferenceScorer, ScorerState};
pub use train::{
    build_training_loss, teacher_forced_loss, token_accuracy, training_step, GRAD_CLIP,
};
