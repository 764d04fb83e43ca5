use super::manifest::{Manifest, ManifestRow};
use crate::audiofeat::{
    compute_mfcc, speaker_normalize, write_features, FeatureSequence, MfccConfig, Waveform,
};
use crate::{Error, Result};

/// Feature preparation settings. Audio rows are raw mono PCM, little-endian
/// 32-bit floats at `sample_rate`; rows already pointing at .xstf archives
/// pass through untouched.
#[derive(Debug, Clone)]
pub struct PrepareConfig {
    pub sample_rate: u32,
    pub mfcc: MfccConfig,
    /// Per-speaker mean/variance normalization over the whole split.
    pub normalize: bool,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            sample_rate: 16_000,
            mfcc: MfccConfig::default(),
            normalize: true,
        }
    }
}

fn read_pcm(path: &str) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::format(path, "raw PCM length is not a multiple of 4"));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect())
}

/// Extracts MFCCs for every audio row of a manifest, writes one feature
/// archive plus a manifest pointing at it (durations taken from the source
/// audio), and returns the new manifest. Deterministic: same audio in, same
/// bytes out.
pub fn prepare_features(
    manifest: &Manifest,
    cfg: &PrepareConfig,
    out_dir: &str,
) -> Result<Manifest> {
    manifest.validate_paths()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let archive_rel = "features.xstf";
    let archive = format!("{}/{}", out_dir.trim_end_matches('/'), archive_rel);

    let mut feats: Vec<FeatureSequence> = Vec::with_capacity(manifest.rows.len());
    for row in &manifest.rows {
        if row.path.ends_with(".xstf") {
            return Err(Error::Invalid(format!(
                "utterance '{}' already points at a feature archive",
                row.utterance_id
            )));
        }
        let samples = read_pcm(&row.path)?;
        let wave = Waveform::new(samples, cfg.sample_rate)?;
        feats.push(compute_mfcc(
            &wave,
            &cfg.mfcc,
            &row.utterance_id,
            &row.speaker_id,
        )?);
    }
    if cfg.normalize && !feats.is_empty() {
        speaker_normalize(&mut feats)?;
    }
    write_features(&archive, &feats)?;

    let mut out = Manifest::new(manifest.task, &manifest.source_lang, &manifest.target_lang);
    for (row, f) in manifest.rows.iter().zip(&feats) {
        out.rows.push(ManifestRow {
            utterance_id: row.utterance_id.clone(),
            path: archive_rel.to_string(),
            speaker_id: row.speaker_id.clone(),
            text: row.text.clone(),
            duration_seconds: f.duration_seconds,
        });
    }
    let manifest_path = format!("{}/{}", out_dir.trim_end_matches('/'), "manifest.tsv");
    out.save(&manifest_path)?;
    // Reload so row paths resolve against the output directory.
    Manifest::load(&manifest_path)
}
