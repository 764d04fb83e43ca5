use std::time::Instant;

use super::config::ExperimentConfig;
use super::data::{epoch_batches, load_dataset, Utterance};
use super::manifest::Manifest;
use crate::decode::{greedy_decode, BeamConfig};
use crate::evalmetrics::{evaluate_corpus, MatchResource};
use crate::numcore::{AdamConfig, AdamState, ParamSet, RngStream, Tensor};
use crate::seq2seq::{token_accuracy, training_step, InferenceScorer, Model};
use crate::textproc::{BpeModel, Vocab};
use crate::transfer::{
    restore_frozen, save_checkpoint, transfer_parameters, CheckpointMeta, TransferSpec,
};
use crate::{Error, Result};

/// One epoch's line in the training curve. `seconds` is wall-clock time
/// since training started, the only non-deterministic field.
#[derive(Debug, Clone)]
pub struct CurveRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_bleu: f64,
    pub dev_precision: f64,
    pub dev_recall: f64,
    pub seconds: f64,
}

pub const CURVE_HEADER: &str = "epoch,train_loss,dev_bleu,dev_precision,dev_recall,seconds";

pub fn write_curves(rows: &[CurveRow], path: &str) -> Result<()> {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.3}\n",
            r.epoch, r.train_loss, r.dev_bleu, r.dev_precision, r.dev_recall, r.seconds
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug)]
pub struct TrainOutput {
    pub curves: Vec<CurveRow>,
    /// Dev teacher-forced token accuracy per epoch, parallel to `curves`.
    pub dev_token_accuracy: Vec<f64>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_dev_bleu: f64,
    pub best_path: String,
    pub final_path: String,
    pub curves_path: String,
}

struct DevEval {
    bleu: f64,
    precision: f64,
    recall: f64,
    accuracy: f64,
}

fn eval_dev(model: &Model<f32>, dev: &[Utterance], vocab: &Vocab) -> Result<DevEval> {
    if dev.is_empty() {
        return Ok(DevEval {
            bleu: 0.0,
            precision: 0.0,
            recall: 0.0,
            accuracy: 0.0,
        });
    }
    let pairs: Vec<(&Tensor<f32>, &[u32])> =
        dev.iter().map(|u| (&u.feat, u.target.as_slice())).collect();
    let accuracy = token_accuracy(model, &pairs)?;
    let mut hyps = Vec::with_capacity(dev.len());
    let mut refs = Vec::with_capacity(dev.len());
    for u in dev {
        let mut scorer = InferenceScorer::new(model, &u.feat)?;
        let max_len = BeamConfig::default_for(scorer.encoder_len()).max_len;
        let hyp = greedy_decode(&mut scorer, max_len)?;
        hyps.push(vocab.decode(&hyp.tokens)?);
        refs.push(vocab.decode(&u.target)?);
    }
    let report = evaluate_corpus(&hyps, &refs, &MatchResource::exact_only(), false)?;
    Ok(DevEval {
        bleu: report.bleu,
        precision: report.precision,
        recall: report.recall,
        accuracy,
    })
}

fn checkpoint_meta(manifest: &Manifest, epochs: usize, dev_metric: Option<f64>) -> CheckpointMeta {
    CheckpointMeta {
        task: format!(
            "{}:{}-{}",
            manifest.task, manifest.source_lang, manifest.target_lang
        ),
        epochs: epochs as u64,
        dev_metric,
    }
}

/// Runs the full training loop and leaves a self-describing experiment
/// directory behind: resolved config (seed included), curves CSV, best and
/// final checkpoints.
///
/// Per epoch: shuffle and bucket the training set, take one optimizer step
/// per batch, then greedy-decode the dev set for the curve row. The best
/// checkpoint tracks dev BLEU. A non-finite training loss aborts with
/// `Error::Diverged`; the last epoch's parameters stay on disk as final.xstc.
///
/// With `init`, donor checkpoints are applied to the fresh parameters before
/// epoch 1, and groups frozen by the spec are pinned to their post-transfer
/// values across optimizer steps. The optimizer itself always starts fresh.
pub fn train(
    cfg: &ExperimentConfig,
    train_manifest: &Manifest,
    dev_manifest: &Manifest,
    bpe: &BpeModel,
    vocab: &Vocab,
    init: Option<&TransferSpec>,
    out_dir: &str,
) -> Result<TrainOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let join = |name: &str| format!("{}/{}", out_dir.trim_end_matches('/'), name);

    let data = load_dataset(train_manifest, bpe, vocab)?;
    let dev = load_dataset(dev_manifest, bpe, vocab)?;
    let mut model_cfg = cfg.model.clone();
    model_cfg.decoder.vocab_size = vocab.len();
    if let Some(u) = data.first() {
        if u.feat.shape[1] != model_cfg.encoder.input_dim {
            return Err(Error::Config(format!(
                "features are {}-dimensional but the encoder expects {}",
                u.feat.shape[1], model_cfg.encoder.input_dim
            )));
        }
    }

    let mut resolved = ExperimentConfig {
        model: model_cfg.clone(),
        ..cfg.clone()
    };
    resolved.model.decoder.vocab_size = model_cfg.decoder.vocab_size;
    std::fs::write(join("config.resolved"), resolved.resolved())
        .map_err(|e| Error::io(join("config.resolved"), e))?;

    let mut model: Model<f32> = Model::new(model_cfg.clone(), cfg.seed)?;
    let mut frozen_reference: Option<ParamSet<f32>> = None;
    if let Some(spec) = init {
        let outcome = transfer_parameters(model.params, spec, &vocab.fingerprint)?;
        model = Model {
            cfg: model_cfg.clone(),
            params: outcome.params,
        };
        if !spec.frozen.is_empty() {
            frozen_reference = Some(model.params.clone());
        }
    }

    let best_path = join("best.xstc");
    let final_path = join("final.xstc");
    let curves_path = join("curves.csv");

    let fp = Some(vocab.fingerprint.as_str());
    let mut adam = AdamState::new(AdamConfig {
        alpha: cfg.learning_rate,
        weight_decay: cfg.sched.weight_decay,
        ..AdamConfig::default()
    })?;

    let mut curves: Vec<CurveRow> = Vec::new();
    let mut dev_acc: Vec<f64> = Vec::new();
    let mut best_bleu = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let started = Instant::now();
    write_curves(&curves, &curves_path)?;

    if cfg.max_epochs == 0 {
        let meta = checkpoint_meta(train_manifest, 0, None);
        save_checkpoint(&model.params, &model.cfg, fp, &meta, &best_path)?;
        save_checkpoint(&model.params, &model.cfg, fp, &meta, &final_path)?;
        return Ok(TrainOutput {
            curves,
            dev_token_accuracy: dev_acc,
            epochs_run: 0,
            best_epoch: 0,
            best_dev_bleu: 0.0,
            best_path,
            final_path,
            curves_path,
        });
    }

    let lengths: Vec<usize> = data.iter().map(|u| u.feat.shape[0]).collect();
    let mut epochs_run = 0;
    // A non-finite loss means the optimizer already applied garbage
    // gradients, so divergence recovery rolls back to the previous epoch.
    let mut last_good = model.params.clone();
    for epoch in 1..=cfg.max_epochs {
        let mut shuffle_rng = RngStream::new(cfg.seed, &format!("epoch{}.batches", epoch));
        let mut step_rng = RngStream::new(cfg.seed, &format!("epoch{}.steps", epoch));
        let batches = epoch_batches(&lengths, cfg.batch_size, &mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut n_utts = 0usize;
        for batch in &batches {
            let pairs: Vec<(&Tensor<f32>, &[u32])> = batch
                .iter()
                .map(|&i| (&data[i].feat, data[i].target.as_slice()))
                .collect();
            // The tensor engine refuses to build non-finite nodes, so a
            // blown-up step surfaces as NonFinite from inside the forward or
            // backward pass rather than as a NaN loss value.
            let loss = match training_step(&mut model, &pairs, epoch, &cfg.sched, &mut adam, &mut step_rng) {
                Ok(l) => l,
                Err(Error::NonFinite { .. }) => f64::NAN,
                Err(e) => return Err(e),
            };
            if let Some(reference) = &frozen_reference {
                restore_frozen(&mut model.params, reference, &init.unwrap().frozen)?;
            }
            if !loss.is_finite() {
                let meta = checkpoint_meta(train_manifest, epoch - 1, None);
                save_checkpoint(&last_good, &model.cfg, fp, &meta, &final_path)?;
                write_curves(&curves, &curves_path)?;
                return Err(Error::Diverged { epoch, loss });
            }
            loss_sum += loss * batch.len() as f64;
            n_utts += batch.len();
        }
        let train_loss = loss_sum / n_utts.max(1) as f64;
        epochs_run = epoch;
        last_good = model.params.clone();

        let d = eval_dev(&model, &dev, vocab)?;
        dev_acc.push(d.accuracy);
        curves.push(CurveRow {
            epoch,
            train_loss,
            dev_bleu: d.bleu,
            dev_precision: d.precision,
            dev_recall: d.recall,
            seconds: started.elapsed().as_secs_f64(),
        });
        write_curves(&curves, &curves_path)?;

        if d.bleu > best_bleu {
            best_bleu = d.bleu;
            best_epoch = epoch;
            let meta = checkpoint_meta(train_manifest, epoch, Some(d.bleu));
            save_checkpoint(&model.params, &model.cfg, fp, &meta, &best_path)?;
        }

        if epoch >= cfg.min_epochs {
            if let Some(th) = cfg.stop_at_dev_accuracy {
                if d.accuracy >= th {
                    break;
                }
            }
            if cfg.patience > 0 && epoch - best_epoch >= cfg.patience {
                break;
            }
        }
    }

    let meta = checkpoint_meta(train_manifest, epochs_run, curves.last().map(|r| r.dev_bleu));
    save_checkpoint(&model.params, &model.cfg, fp, &meta, &final_path)?;
    Ok(TrainOutput {
        curves,
        dev_token_accuracy: dev_acc,
        epochs_run,
        best_epoch,
        best_dev_bleu: best_bleu.max(0.0),
        best_path,
        final_path,
        curves_path,
    })
}
