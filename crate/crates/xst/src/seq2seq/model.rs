use crate::numcore::{init_param, Group, InitScheme, ParamSet, RngStream, Scalar, Tensor};
use crate::Result;

use super::config::ModelConfig;

/// A model is an architecture plus its named parameters. Parameter names are
/// stable and group-tagged, which is what makes checkpoints transferable a
/// group at a time.
pub struct Model<S: Scalar> {
    pub cfg: ModelConfig,
    pub params: ParamSet<S>,
}

impl<S: Scalar> Model<S> {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Model<S>> {
        cfg.validate()?;
        let params = build_params(&cfg, seed)?;
        Ok(Model { cfg, params })
    }
}

/// Freshly initialized parameters for `cfg`. Every tensor draws from its own
/// named stream, so the result is independent of insertion order and two
/// models built from the same seed are identical.
///
/// Initialization: He normal for convolution and recurrent weights, uniform
/// +-1/sqrt(fan_in) for embedding, attention and output projections; biases
/// and batch-norm shifts start at zero, batch-norm scales at one.
pub fn build_params<S: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<ParamSet<S>> {
    cfg.validate()?;
    let enc = &cfg.encoder;
    let dec = &cfg.decoder;
    let mut p = ParamSet::new();

    let draw = |name: &str, shape: &[usize], scheme: InitScheme, fan_in: usize| {
        let mut rng = RngStream::new(seed, name);
        init_param::<S>(shape, scheme, fan_in, &mut rng)
    };

    let mut c_in = enc.input_dim;
    for (i, &c_out) in enc.cnn_filters.iter().enumerate() {
        let base = format!("encoder.cnn.{}", i);
        let fan = enc.cnn_width * c_in;
        let w = draw(&format!("{}.weight", base), &[c_out, fan], InitScheme::HeNormal, fan)?;
        p.insert(&format!("{}.weight", base), Group::Cnn, w)?;
        p.insert(&format!("{}.bias", base), Group::Cnn, Tensor::zeros(&[c_out]))?;
        p.insert(&format!("{}.bn.gamma", base), Group::Cnn, Tensor::full(&[c_out], S::one()))?;
        p.insert(&format!("{}.bn.beta", base), Group::Cnn, Tensor::zeros(&[c_out]))?;
        p.insert_buffer(
            &format!("{}.bn.running_mean", base),
            Group::Cnn,
            Tensor::zeros(&[c_out]),
        )?;
        p.insert_buffer(
            &format!("{}.bn.running_var", base),
            Group::Cnn,
            Tensor::full(&[c_out], S::one()),
        )?;
        c_in = c_out;
    }

    let h = enc.lstm_hidden;
    let mut d_in = *enc.cnn_filters.last().expect("validated non-empty");
    for l in 0..enc.lstm_layers {
        for dir in ["fwd", "bwd"] {
            let base = format!("encoder.lstm.{}.{}", l, dir);
            let wx = draw(&format!("{}.w_x", base), &[4 * h, d_in], InitScheme::HeNormal, d_in)?;
            p.insert(&format!("{}.w_x", base), Group::EncoderLstm, wx)?;
            let wh = draw(&format!("{}.w_h", base), &[4 * h, h], InitScheme::HeNormal, h)?;
            p.insert(&format!("{}.w_h", base), Group::EncoderLstm, wh)?;
            p.insert(&format!("{}.b", base), Group::EncoderLstm, Tensor::zeros(&[4 * h]))?;
        }
        d_in = 2 * h;
    }

    let enc_out = enc.output_dim();
    let dh = dec.lstm_hidden;
    let att = dec.att_dim();
    let wa = draw("attention.w_a", &[dh, enc_out], InitScheme::DefaultUniform, dh)?;
    p.insert("attention.w_a", Group::Attention, wa)?;
    let wc_in = enc_out + dh;
    let wc = draw("attention.w_c", &[att, wc_in], InitScheme::DefaultUniform, wc_in)?;
    p.insert("attention.w_c", Group::Attention, wc)?;

    let emb = draw(
        "decoder.embedding",
        &[dec.vocab_size, dec.embed_dim],
        InitScheme::DefaultUniform,
        dec.embed_dim,
    )?;
    p.insert("decoder.embedding", Group::Decoder, emb)?;
    let mut d_in = dec.embed_dim + att;
    for l in 0..dec.lstm_layers {
        let base = format!("decoder.lstm.{}", l);
        let wx = draw(&format!("{}.w_x", base), &[4 * dh, d_in], InitScheme::HeNormal, d_in)?;
        p.insert(&format!("{}.w_x", base), Group::Decoder, wx)?;
        let wh = draw(&format!("{}.w_h", base), &[4 * dh, dh], InitScheme::HeNormal, dh)?;
        p.insert(&format!("{}.w_h", base), Group::Decoder, wh)?;
        p.insert(&format!("{}.b", base), Group::Decoder, Tensor::zeros(&[4 * dh]))?;
        d_in = dh;
    }

    let wo = draw(
        "output.weight",
        &[dec.vocab_size, att],
        InitScheme::DefaultUniform,
        att,
    )?;
    p.insert("output.weight", Group::Output, wo)?;
    p.insert("output.bias", Group::Output, Tensor::zeros(&[dec.vocab_size]))?;

    Ok(p)
}

/// Working copies of the batch-norm running statistics. Forward passes in
/// training mode update these copies as nodes are recorded; the training step
/// writes them back into the ParamSet once the step commits. Inference reads
/// them without writing.
pub struct BnScratch<S: Scalar> {
    pub stats: Vec<(Tensor<S>, Tensor<S>)>,
}

impl<S: Scalar> BnScratch<S> {
    pub fn load(params: &ParamSet<S>, n_conv_layers: usize) -> Result<BnScratch<S>> {
        let mut stats = Vec::with_capacity(n_conv_layers);
        for i in 0..n_conv_layers {
            let mean = params
                .get(&format!("encoder.cnn.{}.bn.running_mean", i))?
                .value
                .clone();
            let var = params
                .get(&format!("encoder.cnn.{}.bn.running_var", i))?
                .value
                .clone();
            stats.push((mean, var));
        }
        Ok(BnScratch { stats })
    }

    pub fn store(&self, params: &mut ParamSet<S>) -> Result<()> {
        for (i, (mean, var)) in self.stats.iter().enumerate() {
            params
                .get_mut(&format!("encoder.cnn.{}.bn.running_mean", i))?
                .value = mean.clone();
            params
                .get_mut(&format!("encoder.cnn.{}.bn.running_var", i))?
                .value = var.clone();
        }
        Ok(())
    }
}

/// Small architecture used across this module's tests: full stack, toy dims.
#[cfg(test)]
pub(crate) fn tiny_config(vocab: usize) -> ModelConfig {
    use super::config::{DecoderConfig, EncoderConfig};
    ModelConfig {
        encoder: EncoderConfig {
            input_dim: 4,
            cnn_filters: vec![3, 5],
            cnn_width: 3,
            cnn_stride: 2,
            lstm_layers: 2,
            lstm_hidden: 4,
        },
        decoder: DecoderConfig {
            vocab_size: vocab,
            embed_dim: 5,
            lstm_layers: 2,
            lstm_hidden: 6,
        },
    }
}
