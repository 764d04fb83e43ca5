use std::collections::HashMap;

use super::manifest::Manifest;
use crate::audiofeat::read_features;
use crate::numcore::{RngStream, Tensor};
use crate::textproc::{BpeModel, Vocab};
use crate::{Error, Result};

/// One training example: features on the encoder side, BOS..EOS token ids on
/// the decoder side.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub feat: Tensor<f32>,
    pub target: Vec<u32>,
}

/// Reads the feature frames for every manifest row, loading each referenced
/// archive exactly once. Output order matches manifest order.
pub fn load_features_only(manifest: &Manifest) -> Result<Vec<(String, Tensor<f32>)>> {
    manifest.validate_paths()?;
    let mut archives: HashMap<&str, HashMap<String, Tensor<f32>>> = HashMap::new();
    for row in &manifest.rows {
        if !archives.contains_key(row.path.as_str()) {
            if !row.path.ends_with(".xstf") {
                return Err(Error::Invalid(format!(
                    "utterance '{}': path '{}' is not a feature archive; run feature \
                     preparation first",
                    row.utterance_id, row.path
                )));
            }
            let feats = read_features(&row.path)?;
            let by_id = feats
                .into_iter()
                .map(|f| (f.utterance_id.clone(), f.frames))
                .collect();
            archives.insert(row.path.as_str(), by_id);
        }
    }
    let mut out = Vec::with_capacity(manifest.rows.len());
    for row in &manifest.rows {
        let feat = archives[row.path.as_str()]
            .get(&row.utterance_id)
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "utterance '{}' not found in archive '{}'",
                    row.utterance_id, row.path
                ))
            })?
            .clone();
        out.push((row.utterance_id.clone(), feat));
    }
    Ok(out)
}

/// Materializes a manifest for training: features plus encoded target lines,
/// in manifest order.
pub fn load_dataset(manifest: &Manifest, bpe: &BpeModel, vocab: &Vocab) -> Result<Vec<Utterance>> {
    let feats = load_features_only(manifest)?;
    let mut out = Vec::with_capacity(manifest.rows.len());
    for (row, (id, feat)) in manifest.rows.iter().zip(feats) {
        let target = vocab.encode(bpe, &row.utterance_id, &row.text)?.ids;
        out.push(Utterance { id, feat, target });
    }
    Ok(out)
}

/// One epoch's batch plan: shuffle example indices, stable-sort by feature
/// length so each batch holds similar lengths (the shuffle decides order
/// within a length), chunk, then shuffle the chunk order. Deterministic
/// given the rng.
pub fn epoch_batches(lengths: &[usize], batch_size: usize, rng: &mut RngStream) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    rng.shuffle(&mut order);
    order.sort_by_key(|&i| lengths[i]);
    let mut batches: Vec<Vec<usize>> = order
        .chunks(batch_size.max(1))
        .map(|c| c.to_vec())
        .collect();
    rng.shuffle(&mut batches);
    batches
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audiofeat::{write_features, FeatureSequence, NUM_CEPS};
    use crate::harness::manifest::{ManifestRow, TaskKind};
    use crate::textproc::{build_vocab, learn_bpe};

    #[test]
    fn loads_features_and_targets_in_manifest_order() {
        let dir = tempfile::tempdir().unwrap();
        let arc = dir.path().join("f.xstf");
        let arc = arc.to_str().unwrap();
        let feats: Vec<FeatureSequence> = (0..3)
            .map(|i| FeatureSequence {
                utterance_id: format!("u{}", i),
                speaker_id: "s".into(),
                frames: Tensor::matrix(
                    2 + i,
                    NUM_CEPS,
                    vec![i as f32; (2 + i) * NUM_CEPS],
                ),
                frame_shift_ms: 10.0,
                duration_seconds: 0.025 + 0.010 * (1 + i) as f64,
            })
            .collect();
        write_features(arc, &feats).unwrap();

        let corpus: Vec<String> = vec!["ba do".into(), "do ba".into(), "ba ba".into()];
        let bpe = learn_bpe(&corpus, 10).unwrap();
        let vocab = build_vocab(&bpe, &corpus).unwrap();

        let mut m = Manifest::new(TaskKind::St, "x", "y");
        for (i, text) in ["do ba", "ba ba", "ba do"].iter().enumerate() {
            m.rows.push(ManifestRow {
                utterance_id: format!("u{}", i),
                path: arc.to_string(),
                speaker_id: "s".into(),
                text: text.to_string(),
                duration_seconds: 0.1,
            });
        }
        let data = load_dataset(&m, &bpe, &vocab).unwrap();
        assert_eq!(data.len(), 3);
        assert_eq!(data[0].id, "u0");
        assert_eq!(data[1].feat.shape, vec![3, NUM_CEPS]);
        // Targets are BOS .. EOS.
        for u in &data {
            assert_eq!(u.target[0], crate::textproc::BOS_ID);
            assert_eq!(*u.target.last().unwrap(), crate::textproc::EOS_ID);
        }
        // u0 and u2 have permuted words, so permuted inner tokens.
        let inner = |u: &Utterance| u.target[1..u.target.len() - 1].to_vec();
        let mut a = inner(&data[0]);
        let mut b = inner(&data[2]);
        assert_ne!(a, b);
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);

        // Unknown utterance id in the archive is an error.
        m.rows[0].utterance_id = "zzz".into();
        assert!(load_dataset(&m, &bpe, &vocab).is_err());
    }

    #[test]
    fn batches_partition_and_bucket() {
        let lengths: Vec<usize> = (0..37).map(|i| (i * 7) % 23).collect();
        let mut rng = RngStream::new(3, "batch");
        let batches = epoch_batches(&lengths, 4, &mut rng);
        let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..37).collect::<Vec<_>>());
        // Buckets hold contiguous length ranges.
        for b in &batches {
            let ls: Vec<usize> = b.iter().map(|&i| lengths[i]).collect();
            let spread = ls.iter().max().unwrap() - ls.iter().min().unwrap();
            assert!(spread <= 22);
            assert!(b.len() <= 4);
        }
        let mut rng2 = RngStream::new(3, "batch");
        assert_eq!(batches, epoch_batches(&lengths, 4, &mut rng2));
    }
}
