use std::collections::BTreeSet;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use xst::harness::{
    dump_attention, evaluate_files, generate, prepare_features, sample_subset, train, translate,
    ExperimentConfig, Manifest, PrepareConfig, SyntheticSpec,
};
use xst::numcore::{Group, RngStream};
use xst::textproc::{apply_bpe, build_vocab, learn_bpe, BpeModel, Vocab};
use xst::transfer::{
    load_checkpoint, preset_groups, save_checkpoint, transfer_parameters, CheckpointMeta,
    TransferSource, TransferSpec,
};

#[derive(Parser)]
#[command(name = "xst", version, about = "Speech-to-text translation toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Convert a manifest of raw mono f32 LE PCM files into an MFCC feature
    /// archive plus a manifest pointing at it.
    PrepareFeatures {
        #[arg(long)]
        manifest: String,
        #[arg(long)]
        out: String,
        #[arg(long, default_value_t = 16_000)]
        sample_rate: u32,
        /// Skip per-speaker mean/variance normalization.
        #[arg(long)]
        no_normalize: bool,
    },
    /// Learn a subword model from text and save it with its vocabulary.
    LearnBpe {
        #[arg(long)]
        input: String,
        #[arg(long)]
        merges: usize,
        #[arg(long)]
        model_out: String,
        #[arg(long)]
        vocab_out: String,
    },
    /// Segment text with a learned subword model, one line per input line.
    ApplyBpe {
        #[arg(long)]
        model: String,
        #[arg(long)]
        input: String,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<String>,
    },
    /// Draw a duration-budgeted random subset of a manifest.
    SampleSubset {
        #[arg(long)]
        manifest: String,
        #[arg(long)]
        hours: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: String,
    },
    /// Train a model, optionally starting from transferred parameters.
    Train {
        /// Flat key-value experiment config; defaults when omitted.
        #[arg(long)]
        config: Option<String>,
        #[arg(long)]
        train: String,
        #[arg(long)]
        dev: String,
        #[arg(long)]
        bpe: String,
        #[arg(long)]
        vocab: String,
        #[arg(long)]
        out: String,
        /// Donor checkpoint for parameter transfer.
        #[arg(long, requires = "groups")]
        from: Option<String>,
        /// Groups to take from --from (names or presets, comma separated).
        #[arg(long)]
        groups: Option<String>,
        /// Second donor checkpoint.
        #[arg(long, requires = "groups2", requires = "from")]
        from2: Option<String>,
        #[arg(long)]
        groups2: Option<String>,
        /// Transferred groups to keep fixed during fine-tuning.
        #[arg(long)]
        frozen: Option<String>,
    },
    /// Copy parameter groups out of checkpoints into a freshly initialized
    /// model and save the result as a new checkpoint.
    Transfer {
        #[arg(long)]
        config: Option<String>,
        #[arg(long)]
        vocab: String,
        #[arg(long)]
        from: String,
        #[arg(long)]
        groups: String,
        #[arg(long, requires = "groups2")]
        from2: Option<String>,
        #[arg(long)]
        groups2: Option<String>,
        #[arg(long)]
        out: String,
    },
    /// Beam-decode a manifest into a hypotheses file.
    Translate {
        #[arg(long)]
        checkpoint: String,
        #[arg(long)]
        manifest: String,
        #[arg(long)]
        vocab: String,
        #[arg(long, default_value_t = 5)]
        beam: usize,
        #[arg(long, default_value_t = 0.6)]
        alpha: f64,
        #[arg(long)]
        out: String,
    },
    /// Score a hypotheses file against references; prints a JSON report.
    Evaluate {
        #[arg(long)]
        hyp: String,
        #[arg(long)]
        refs: String,
        /// Training text for the naive frequent-word baseline comparison.
        #[arg(long)]
        baseline: Option<String>,
        /// Synonym table for relaxed unigram matching.
        #[arg(long)]
        synonyms: Option<String>,
        #[arg(long)]
        wer: bool,
        #[arg(long)]
        out: Option<String>,
    },
    /// Dump one utterance's attention weights as a CSV matrix.
    DumpAttention {
        #[arg(long)]
        checkpoint: String,
        #[arg(long)]
        manifest: String,
        #[arg(long)]
        vocab: String,
        #[arg(long)]
        utt: String,
        #[arg(long)]
        out: String,
    },
    /// Generate the synthetic four-task transfer benchmark.
    GenSynthetic {
        #[arg(long)]
        out: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        types: usize,
        #[arg(long, default_value_t = 5000)]
        train_a: usize,
        #[arg(long, default_value_t = 100)]
        dev_a: usize,
        #[arg(long, default_value_t = 200)]
        train_b: usize,
        #[arg(long, default_value_t = 50)]
        dev_b: usize,
        #[arg(long, default_value_t = 0.15)]
        noise: f64,
    },
}

fn read_lines(path: &str) -> Result<Vec<String>> {
    let raw =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path))?;
    Ok(raw.lines().map(str::to_string).collect())
}

/// Comma-separated group names; preset names (cnn, enc, dec, all) expand to
/// their group sets.
fn parse_groups(spec: &str) -> Result<BTreeSet<Group>> {
    let mut out = BTreeSet::new();
    for token in spec.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        match Group::parse(token) {
            Ok(g) => {
                out.insert(g);
            }
            Err(_) => out.extend(
                preset_groups(token)
                    .with_context(|| format!("unknown group or preset '{}'", token))?,
            ),
        }
    }
    if out.is_empty() {
        anyhow::bail!("empty group list");
    }
    Ok(out)
}

fn transfer_spec(
    from: &str,
    groups: &str,
    from2: Option<&str>,
    groups2: Option<&str>,
    frozen: Option<&str>,
) -> Result<TransferSpec> {
    let mut sources = vec![TransferSource {
        checkpoint: load_checkpoint(from)?,
        groups: parse_groups(groups)?,
    }];
    if let Some(path) = from2 {
        sources.push(TransferSource {
            checkpoint: load_checkpoint(path)?,
            groups: parse_groups(groups2.expect("clap enforces groups2 with from2"))?,
        });
    }
    let mut spec = TransferSpec::new(sources);
    if let Some(f) = frozen {
        spec.frozen = parse_groups(f)?;
    }
    spec.validate()?;
    Ok(spec)
}

fn load_config(path: Option<&str>) -> Result<ExperimentConfig> {
    Ok(match path {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    })
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::PrepareFeatures {
            manifest,
            out,
            sample_rate,
            no_normalize,
        } => {
            let m = Manifest::load(&manifest)?;
            let cfg = PrepareConfig {
                sample_rate,
                normalize: !no_normalize,
                ..PrepareConfig::default()
            };
            let prepared = prepare_features(&m, &cfg, &out)?;
            println!(
                "prepared {} utterances -> {}/manifest.tsv",
                prepared.rows.len(),
                out.trim_end_matches('/')
            );
        }
        Cmd::LearnBpe {
            input,
            merges,
            model_out,
            vocab_out,
        } => {
            let lines = read_lines(&input)?;
            let model = learn_bpe(&lines, merges)?;
            model.save(&model_out)?;
            let vocab = build_vocab(&model, &lines)?;
            vocab.save(&vocab_out)?;
            println!(
                "learned {} merges, vocab of {} tokens (fingerprint {})",
                merges,
                vocab.len(),
                &vocab.fingerprint[..12.min(vocab.fingerprint.len())]
            );
        }
        Cmd::ApplyBpe { model, input, out } => {
            let model = BpeModel::load(&model)?;
            let mut buf = String::new();
            for line in read_lines(&input)? {
                buf.push_str(&apply_bpe(&model, &line).join(" "));
                buf.push('\n');
            }
            match out {
                Some(path) => {
                    std::fs::write(&path, buf).with_context(|| format!("writing {}", path))?
                }
                None => print!("{}", buf),
            }
        }
        Cmd::SampleSubset {
            manifest,
            hours,
            seed,
            out,
        } => {
            let m = Manifest::load(&manifest)?;
            let mut rng = RngStream::new(seed, "subset");
            let subset = sample_subset(&m, hours, &mut rng)?;
            let total: f64 = subset.rows.iter().map(|r| r.duration_seconds).sum();
            subset.save(&out)?;
            println!(
                "sampled {} of {} utterances ({:.3} h) -> {}",
                subset.rows.len(),
                m.rows.len(),
                total / 3600.0,
                out
            );
        }
        Cmd::Train {
            config,
            train: train_path,
            dev,
            bpe,
            vocab,
            out,
            from,
            groups,
            from2,
            groups2,
            frozen,
        } => {
            let cfg = load_config(config.as_deref())?;
            let train_m = Manifest::load(&train_path)?;
            let dev_m = Manifest::load(&dev)?;
            let bpe = BpeModel::load(&bpe)?;
            let vocab = Vocab::load(&vocab)?;
            let spec = match from {
                Some(f) => Some(transfer_spec(
                    &f,
                    groups.as_deref().expect("clap enforces groups with from"),
                    from2.as_deref(),
                    groups2.as_deref(),
                    frozen.as_deref(),
                )?),
                None => None,
            };
            let result = train(&cfg, &train_m, &dev_m, &bpe, &vocab, spec.as_ref(), &out)?;
            println!(
                "trained {} epochs; best dev BLEU {:.2} at epoch {}; final -> {}",
                result.epochs_run, result.best_dev_bleu, result.best_epoch, result.final_path
            );
        }
        Cmd::Transfer {
            config,
            vocab,
            from,
            groups,
            from2,
            groups2,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let vocab = Vocab::load(&vocab)?;
            let spec = transfer_spec(&from, &groups, from2.as_deref(), groups2.as_deref(), None)?;
            let mut model_cfg = cfg.model.clone();
            model_cfg.decoder.vocab_size = vocab.len();
            let fresh = xst::seq2seq::Model::<f32>::new(model_cfg.clone(), cfg.seed)?;
            let outcome = transfer_parameters(fresh.params, &spec, &vocab.fingerprint)?;
            let meta = CheckpointMeta {
                task: "transfer".to_string(),
                epochs: 0,
                dev_metric: None,
            };
            save_checkpoint(
                &outcome.params,
                &model_cfg,
                Some(&vocab.fingerprint),
                &meta,
                &out,
            )?;
            for (group, source) in &outcome.provenance {
                println!("{}: {}", group.as_str(), source);
            }
            println!("wrote {}", out);
        }
        Cmd::Translate {
            checkpoint,
            manifest,
            vocab,
            beam,
            alpha,
            out,
        } => {
            let ck = load_checkpoint(&checkpoint)?;
            let m = Manifest::load(&manifest)?;
            let vocab = Vocab::load(&vocab)?;
            translate(&ck, &m, &vocab, beam, alpha, &out)?;
            println!("decoded {} utterances -> {}", m.rows.len(), out);
        }
        Cmd::Evaluate {
            hyp,
            refs,
            baseline,
            synonyms,
            wer,
            out,
        } => {
            let summary = evaluate_files(
                &hyp,
                &refs,
                baseline.as_deref(),
                synonyms.as_deref(),
                wer,
            )?;
            let json = serde_json::to_string_pretty(&summary)?;
            if let Some(path) = &out {
                std::fs::write(path, &json).with_context(|| format!("writing {}", path))?;
            }
            println!("{}", json);
        }
        Cmd::DumpAttention {
            checkpoint,
            manifest,
            vocab,
            utt,
            out,
        } => {
            let ck = load_checkpoint(&checkpoint)?;
            let m = Manifest::load(&manifest)?;
            let vocab = Vocab::load(&vocab)?;
            dump_attention(&ck, &m, &vocab, &utt, &out)?;
            println!("wrote {}", out);
        }
        Cmd::GenSynthetic {
            out,
            seed,
            types,
            train_a,
            dev_a,
            train_b,
            dev_b,
            noise,
        } => {
            let spec = SyntheticSpec {
                seed,
                n_types: types,
                train_a,
                dev_a,
                train_b,
                dev_b,
                noise,
                ..SyntheticSpec::default()
            };
            let tasks = generate(&spec, &out)?;
            for task in [&tasks.a, &tasks.a_alt, &tasks.b_shared, &tasks.b_distinct] {
                println!(
                    "{}: {} train / {} dev",
                    task.dir,
                    task.train.rows.len(),
                    task.dev.rows.len()
                );
            }
        }
    }
    Ok(())
}
