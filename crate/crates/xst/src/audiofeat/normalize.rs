use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};

use serde::{Deserialize, Serialize};

use super::{FeatureSequence, NUM_CEPS};
use crate::{Error, Result};

const VAR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeakerStat {
    pub speaker_id: String,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub frame_count: u64,
}

/// Per-speaker feature moments, used to normalize each coefficient to zero
/// mean and unit variance within a speaker.
#[derive(Debug, Clone, Default)]
pub struct SpeakerStats {
    pub speakers: BTreeMap<String, SpeakerStat>,
}

impl SpeakerStats {
    pub fn get(&self, speaker_id: &str) -> Option<&SpeakerStat> {
        self.speakers.get(speaker_id)
    }

    /// Pooled statistics over all speakers, used as a fallback for unseen
    /// speakers when enabled.
    pub fn global(&self) -> Result<SpeakerStat> {
        if self.speakers.is_empty() {
            return Err(Error::Invalid("no speaker statistics collected".to_string()));
        }
        let mut sum = vec![0.0; NUM_CEPS];
        let mut sumsq = vec![0.0; NUM_CEPS];
        let mut n = 0u64;
        for s in self.speakers.values() {
            for d in 0..NUM_CEPS {
                sum[d] += s.mean[d] * s.frame_count as f64;
                sumsq[d] += (s.var[d] + s.mean[d] * s.mean[d]) * s.frame_count as f64;
            }
            n += s.frame_count;
        }
        let mean: Vec<f64> = sum.iter().map(|v| v / n as f64).collect();
        let var: Vec<f64> = sumsq
            .iter()
            .zip(mean.iter())
            .map(|(sq, m)| sq / n as f64 - m * m)
            .collect();
        Ok(SpeakerStat {
            speaker_id: "<global>".to_string(),
            mean,
            var,
            frame_count: n,
        })
    }

    /// One JSON object per line, one line per speaker.
    pub fn save(&self, path: &str) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        for s in self.speakers.values() {
            let line = serde_json::to_string(s)
                .map_err(|e| Error::format(path, format!("serialize: {}", e)))?;
            writeln!(w, "{}", line).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn load(path: &str) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut speakers = BTreeMap::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let s: SpeakerStat = serde_json::from_str(&line)
                .map_err(|e| Error::format(path, format!("bad speaker record: {}", e)))?;
            if s.mean.len() != NUM_CEPS || s.var.len() != NUM_CEPS {
                return Err(Error::format(
                    path,
                    format!("speaker {} has wrong stat dims", s.speaker_id),
                ));
            }
            speakers.insert(s.speaker_id.clone(), s);
        }
        Ok(SpeakerStats { speakers })
    }
}

/// Accumulate per-speaker mean and variance over every frame of every
/// utterance grouped by speaker_id.
pub fn compute_speaker_stats(feats: &[FeatureSequence]) -> Result<SpeakerStats> {
    let mut sums: BTreeMap<String, (Vec<f64>, Vec<f64>, u64)> = BTreeMap::new();
    for f in feats {
        f.validate()?;
        if f.speaker_id.is_empty() {
            return Err(Error::Invalid(format!(
                "utterance {} has no speaker_id",
                f.utterance_id
            )));
        }
        let entry = sums
            .entry(f.speaker_id.clone())
            .or_insert_with(|| (vec![0.0; NUM_CEPS], vec![0.0; NUM_CEPS], 0));
        for r in 0..f.num_frames() {
            let row = f.frames.row(r);
            for d in 0..NUM_CEPS {
                let v = row[d] as f64;
                entry.0[d] += v;
                entry.1[d] += v * v;
            }
        }
        entry.2 += f.num_frames() as u64;
    }
    let mut out = SpeakerStats::default();
    for (id, (sum, sumsq, n)) in sums {
        let mean: Vec<f64> = sum.iter().map(|v| v / n as f64).collect();
        let var: Vec<f64> = sumsq
            .iter()
            .zip(mean.iter())
            .map(|(sq, m)| (sq / n as f64 - m * m).max(0.0))
            .collect();
        out.speakers.insert(
            id.clone(),
            SpeakerStat {
                speaker_id: id,
                mean,
                var,
                frame_count: n,
            },
        );
    }
    Ok(out)
}

/// Normalize one utterance in place using its speaker's statistics. Unknown
/// speakers are an error unless `global_fallback` is set.
pub fn apply_normalization(
    f: &mut FeatureSequence,
    stats: &SpeakerStats,
    global_fallback: bool,
) -> Result<()> {
    let stat = match stats.get(&f.speaker_id) {
        Some(s) => s.clone(),
        None if global_fallback => stats.global()?,
        None => {
            return Err(Error::Invalid(format!(
                "no statistics for speaker {} (utterance {})",
                f.speaker_id, f.utterance_id
            )))
        }
    };
    let inv_std: Vec<f32> = stat
        .var
        .iter()
        .map(|&v| (1.0 / v.max(VAR_FLOOR).sqrt()) as f32)
        .collect();
    let mean: Vec<f32> = stat.mean.iter().map(|&m| m as f32).collect();
    for r in 0..f.num_frames() {
        let row = f.frames.row_mut(r);
        for d in 0..NUM_CEPS {
            row[d] = (row[d] - mean[d]) * inv_std[d];
        }
    }
    Ok(())
}

/// Compute stats over the given utterances and normalize them all in place.
pub fn speaker_normalize(feats: &mut [FeatureSequence]) -> Result<SpeakerStats> {
    let stats = compute_speaker_stats(feats)?;
    for f in feats.iter_mut() {
        apply_normalization(f, &stats, false)?;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tensor;

    fn seq(utt: &str, spk: &str, rows: Vec<Vec<f32>>) -> FeatureSequence {
        let t = rows.len();
        let data: Vec<f32> = rows.into_iter().flatten().collect();
        FeatureSequence {
            utterance_id: utt.to_string(),
            speaker_id: spk.to_string(),
            frames: Tensor::matrix(t, NUM_CEPS, data),
            frame_shift_ms: 10.0,
            duration_seconds: 0.025 + 0.010 * (t as f64 - 1.0),
        }
    }

    fn rand_rows(n: usize, scale: f32, offset: f32) -> Vec<Vec<f32>> {
        let mut state = 12345u64;
        (0..n)
            .map(|_| {
                (0..NUM_CEPS)
                    .map(|_| {
                        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        offset + scale * ((state >> 33) as f32 / (1u64 << 31) as f32 - 0.5)
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn normalized_features_have_zero_mean_unit_var() {
        let mut feats = vec![
            seq("u1", "spk-a", rand_rows(40, 3.0, 1.5)),
            seq("u2", "spk-a", rand_rows(25, 3.0, 1.5)),
            seq("u3", "spk-b", rand_rows(30, 0.5, -2.0)),
        ];
        speaker_normalize(&mut feats).unwrap();
        for spk in ["spk-a", "spk-b"] {
            for d in 0..NUM_CEPS {
                let vals: Vec<f64> = feats
                    .iter()
                    .filter(|f| f.speaker_id == spk)
                    .flat_map(|f| (0..f.num_frames()).map(|r| f.frames.at2(r, d) as f64))
                    .collect();
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                assert!(mean.abs() < 1e-5, "{} dim {} mean {}", spk, d, mean);
                assert!((var - 1.0).abs() < 1e-4, "{} dim {} var {}", spk, d, var);
            }
        }
    }

    #[test]
    fn normalization_is_idempotent() {
        let mut feats = vec![seq("u1", "a", rand_rows(50, 2.0, 0.7))];
        speaker_normalize(&mut feats).unwrap();
        let once = feats[0].frames.clone();
        speaker_normalize(&mut feats).unwrap();
        for (a, b) in once.data.iter().zip(feats[0].frames.data.iter()) {
            assert!((a - b).abs() < 1e-5, "{} vs {}", a, b);
        }
    }

    #[test]
    fn single_frame_speaker_stays_finite() {
        let mut feats = vec![seq("u1", "solo", rand_rows(1, 1.0, 5.0))];
        speaker_normalize(&mut feats).unwrap();
        assert!(feats[0].frames.all_finite());
    }

    #[test]
    fn unknown_speaker_needs_fallback() {
        let feats = vec![seq("u1", "a", rand_rows(5, 1.0, 0.0))];
        let stats = compute_speaker_stats(&feats).unwrap();
        let mut other = seq("u2", "b", rand_rows(5, 1.0, 0.0));
        assert!(apply_normalization(&mut other, &stats, false).is_err());
        apply_normalization(&mut other, &stats, true).unwrap();
        assert!(other.frames.all_finite());
    }

    #[test]
    fn stats_roundtrip_through_file_bit_exactly() {
        let mut feats = vec![
            seq("u1", "a", rand_rows(20, 2.0, 0.3)),
            seq("u2", "b", rand_rows(15, 1.0, -0.8)),
        ];
        let stats = compute_speaker_stats(&feats).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.jsonl");
        stats.save(path.to_str().unwrap()).unwrap();
        let loaded = SpeakerStats::load(path.to_str().unwrap()).unwrap();

        let mut a = feats.clone();
        for f in a.iter_mut() {
            apply_normalization(f, &stats, false).unwrap();
        }
        for f in feats.iter_mut() {
            apply_normalization(f, &loaded, false).unwrap();
        }
        for (x, y) in a.iter().zip(feats.iter()) {
            assert_eq!(x.frames.data, y.frames.data);
        }
    }
}
