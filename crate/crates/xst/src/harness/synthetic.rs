use super::manifest::{Manifest, ManifestRow, TaskKind};
use crate::audiofeat::{write_features, FeatureSequence, NUM_CEPS};
use crate::numcore::{RngStream, Tensor};
use crate::{Error, Result};

/// Shape of the generated benchmark family. One shared set of acoustic word
/// prototypes underlies every task; tasks differ only in how words are
/// written down, which is exactly the structure that makes encoder transfer
/// useful and decoder transfer vocabulary-bound.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub seed: u64,
    /// Word types per language.
    pub n_types: usize,
    pub words_min: usize,
    pub words_max: usize,
    /// Frames per word prototype.
    pub proto_min: usize,
    pub proto_max: usize,
    /// Stddev of the Gaussian noise added to every feature cell.
    pub noise: f64,
    pub train_a: usize,
    pub dev_a: usize,
    pub train_b: usize,
    pub dev_b: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 1,
            n_types: 30,
            words_min: 3,
            words_max: 8,
            proto_min: 4,
            proto_max: 8,
            noise: 0.15,
            train_a: 5000,
            dev_a: 100,
            train_b: 200,
            dev_b: 50,
        }
    }
}

/// One generated task on disk: its split manifests plus the training text
/// (one target line per utterance) for subword learning and the baseline.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub dir: String,
    pub train: Manifest,
    pub dev: Manifest,
    pub text_path: String,
}

/// The four tasks the transfer experiments need:
/// - `a`: recognition with the primary written forms (the pretraining task)
/// - `a_alt`: recognition with foreign written forms (mismatched-vocabulary
///   pretraining)
/// - `b_shared`: translation whose target reuses `a`'s written forms, so
///   full transfer from `a` is legal
/// - `b_distinct`: the same translation data written in novel forms, so only
///   encoder transfer from `a` or `a_alt` is legal
#[derive(Debug, Clone)]
pub struct SyntheticTasks {
    pub a: SyntheticTask,
    pub a_alt: SyntheticTask,
    pub b_shared: SyntheticTask,
    pub b_distinct: SyntheticTask,
}

/// All distinct CV syllables, deterministically ordered. 90 forms cover the
/// three disjoint 30-word languages.
fn syllables() -> Vec<String> {
    let mut out = Vec::new();
    for c in "bdfghjklmnprstvwyz".chars() {
        for v in "aeiou".chars() {
            out.push(format!("{}{}", c, v));
        }
    }
    out
}

struct Prototypes {
    frames: Vec<Vec<f64>>,
    offsets: Vec<usize>,
}

impl Prototypes {
    fn draw(spec: &SyntheticSpec, rng: &mut RngStream) -> Prototypes {
        let mut frames = Vec::new();
        let mut offsets = vec![0usize];
        for _ in 0..spec.n_types {
            let len = spec.proto_min + rng.below(spec.proto_max - spec.proto_min + 1);
            for _ in 0..len {
                frames.push((0..NUM_CEPS).map(|_| rng.uniform(-1.0, 1.0)).collect());
            }
            offsets.push(frames.len());
        }
        Prototypes { frames, offsets }
    }

    fn word_frames(&self, w: usize) -> &[Vec<f64>] {
        &self.frames[self.offsets[w]..self.offsets[w + 1]]
    }
}

struct Split {
    word_seqs: Vec<Vec<usize>>,
    feats: Vec<FeatureSequence>,
}

fn draw_split(
    spec: &SyntheticSpec,
    protos: &Prototypes,
    n: usize,
    id_prefix: &str,
    rng: &mut RngStream,
) -> Split {
    let mut word_seqs = Vec::with_capacity(n);
    let mut feats = Vec::with_capacity(n);
    for i in 0..n {
        let n_words = spec.words_min + rng.below(spec.words_max - spec.words_min + 1);
        let words: Vec<usize> = (0..n_words).map(|_| rng.below(spec.n_types)).collect();
        let mut data: Vec<f32> = Vec::new();
        for &w in &words {
            for frame in protos.word_frames(w) {
                for &v in frame {
                    data.push((v + rng.normal(0.0, spec.noise)) as f32);
                }
            }
        }
        let t = data.len() / NUM_CEPS;
        feats.push(FeatureSequence {
            utterance_id: format!("{}-{:05}", id_prefix, i),
            speaker_id: format!("spk{}", i % 5),
            frames: Tensor::matrix(t, NUM_CEPS, data),
            frame_shift_ms: 10.0,
            duration_seconds: 0.025 + 0.010 * (t - 1) as f64,
        });
        word_seqs.push(words);
    }
    Split { word_seqs, feats }
}

fn write_task(
    dir: &str,
    task: TaskKind,
    langs: (&str, &str),
    train: &Split,
    dev: &Split,
    render: &dyn Fn(&[usize]) -> String,
) -> Result<SyntheticTask> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let join = |name: &str| format!("{}/{}", dir.trim_end_matches('/'), name);
    let mut text = String::new();
    for (split, name) in [(train, "train"), (dev, "dev")] {
        write_features(&join(&format!("{}.xstf", name)), &split.feats)?;
        let mut m = Manifest::new(task, langs.0, langs.1);
        for (f, words) in split.feats.iter().zip(&split.word_seqs) {
            let line = render(words);
            if name == "train" {
                text.push_str(&line);
                text.push('\n');
            }
            m.rows.push(ManifestRow {
                utterance_id: f.utterance_id.clone(),
                path: format!("{}.xstf", name),
                speaker_id: f.speaker_id.clone(),
                text: line,
                duration_seconds: f.duration_seconds,
            });
        }
        m.save(&join(&format!("{}.tsv", name)))?;
    }
    let text_path = join("text.txt");
    std::fs::write(&text_path, text).map_err(|e| Error::io(&text_path, e))?;
    Ok(SyntheticTask {
        dir: dir.to_string(),
        train: Manifest::load(&join("train.tsv"))?,
        dev: Manifest::load(&join("dev.tsv"))?,
        text_path,
    })
}

/// Generates the four-task benchmark under `out_dir`. Deterministic given
/// the spec: running twice writes byte-identical files.
pub fn generate(spec: &SyntheticSpec, out_dir: &str) -> Result<SyntheticTasks> {
    if spec.n_types == 0 || spec.n_types * 3 > syllables().len() {
        return Err(Error::Invalid(format!(
            "n_types {} outside 1..=30",
            spec.n_types
        )));
    }
    if spec.words_min == 0 || spec.words_min > spec.words_max {
        return Err(Error::Invalid("bad words_min..words_max range".into()));
    }
    if spec.proto_min == 0 || spec.proto_min > spec.proto_max {
        return Err(Error::Invalid("bad proto_min..proto_max range".into()));
    }
    let forms = syllables();
    let forms_a = &forms[..spec.n_types];
    let forms_alt = &forms[spec.n_types..2 * spec.n_types];
    let forms_b = &forms[2 * spec.n_types..3 * spec.n_types];

    let protos = Prototypes::draw(spec, &mut RngStream::new(spec.seed, "prototypes"));
    // The word-to-word translation mapping shared by both b variants.
    let mut mapping: Vec<usize> = (0..spec.n_types).collect();
    RngStream::new(spec.seed, "mapping").shuffle(&mut mapping);

    let a_train = draw_split(spec, &protos, spec.train_a, "a-train", &mut RngStream::new(spec.seed, "a.train"));
    let a_dev = draw_split(spec, &protos, spec.dev_a, "a-dev", &mut RngStream::new(spec.seed, "a.dev"));
    let alt_train = draw_split(spec, &protos, spec.train_a, "aa-train", &mut RngStream::new(spec.seed, "a_alt.train"));
    let alt_dev = draw_split(spec, &protos, spec.dev_a, "aa-dev", &mut RngStream::new(spec.seed, "a_alt.dev"));
    let b_train = draw_split(spec, &protos, spec.train_b, "b-train", &mut RngStream::new(spec.seed, "b.train"));
    let b_dev = draw_split(spec, &protos, spec.dev_b, "b-dev", &mut RngStream::new(spec.seed, "b.dev"));

    let render_with = |forms: Vec<String>, map: Option<Vec<usize>>| {
        move |words: &[usize]| {
            let rendered: Vec<&str> = words
                .iter()
                .map(|&w| forms[map.as_ref().map_or(w, |m| m[w])].as_str())
                .collect();
            rendered.join(" ")
        }
    };
    let own = |f: &[String]| f.to_vec();

    let base = out_dir.trim_end_matches('/');
    let a = write_task(
        &format!("{}/a", base),
        TaskKind::Asr,
        ("syn", "syn"),
        &a_train,
        &a_dev,
        &render_with(own(forms_a), None),
    )?;
    let a_alt = write_task(
        &format!("{}/a_alt", base),
        TaskKind::Asr,
        ("syn", "synx"),
        &alt_train,
        &alt_dev,
        &render_with(own(forms_alt), None),
    )?;
    let b_shared = write_task(
        &format!("{}/b_shared", base),
        TaskKind::St,
        ("syn", "syna"),
        &b_train,
        &b_dev,
        &render_with(own(forms_a), Some(mapping.clone())),
    )?;
    let b_distinct = write_task(
        &format!("{}/b_distinct", base),
        TaskKind::St,
        ("syn", "synb"),
        &b_train,
        &b_dev,
        &render_with(own(forms_b), Some(mapping)),
    )?;
    Ok(SyntheticTasks {
        a,
        a_alt,
        b_shared,
        b_distinct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> SyntheticSpec {
        SyntheticSpec {
            seed: 9,
            n_types: 6,
            words_min: 2,
            words_max: 4,
            proto_min: 3,
            proto_max: 5,
            noise: 0.1,
            train_a: 12,
            dev_a: 4,
            train_b: 8,
            dev_b: 3,
        }
    }

    #[test]
    fn generates_four_coherent_tasks() {
        let dir = tempfile::tempdir().unwrap();
        let tasks = generate(&tiny_spec(), dir.path().to_str().unwrap()).unwrap();
        assert_eq!(tasks.a.train.rows.len(), 12);
        assert_eq!(tasks.a.dev.rows.len(), 4);
        assert_eq!(tasks.b_shared.train.rows.len(), 8);
        assert_eq!(tasks.b_distinct.dev.rows.len(), 3);
        assert_eq!(tasks.a.train.task, TaskKind::Asr);
        assert_eq!(tasks.b_shared.train.task, TaskKind::St);

        // The two b variants describe the same utterances in different
        // words: same ids and features, different text.
        let feats_s = crate::audiofeat::read_features(&tasks.b_shared.train.rows[0].path).unwrap();
        let feats_d =
            crate::audiofeat::read_features(&tasks.b_distinct.train.rows[0].path).unwrap();
        assert_eq!(feats_s.len(), feats_d.len());
        for (s, d) in feats_s.iter().zip(feats_d.iter()) {
            assert_eq!(s.utterance_id, d.utterance_id);
            assert_eq!(s.frames.data, d.frames.data);
        }
        for (s, d) in tasks
            .b_shared
            .train
            .rows
            .iter()
            .zip(tasks.b_distinct.train.rows.iter())
        {
            assert_ne!(s.text, d.text);
            assert_eq!(s.text.split(' ').count(), d.text.split(' ').count());
        }

        // Shared-vocab variant writes words from task a's inventory.
        let a_words: std::collections::BTreeSet<&str> = tasks
            .a
            .train
            .rows
            .iter()
            .flat_map(|r| r.text.split(' '))
            .collect();
        for r in &tasks.b_shared.train.rows {
            for w in r.text.split(' ') {
                assert!(a_words.contains(w), "unknown word {}", w);
            }
        }
        // Distinct variant does not.
        let b_words: std::collections::BTreeSet<&str> = tasks
            .b_distinct
            .train
            .rows
            .iter()
            .flat_map(|r| r.text.split(' '))
            .collect();
        assert!(a_words.is_disjoint(&b_words));

        // 13-dim features, plausible frame counts.
        assert_eq!(feats_s[0].frames.shape[1], NUM_CEPS);
        let t = feats_s[0].frames.shape[0];
        assert!((2 * 3..=4 * 5).contains(&t), "{} frames", t);
    }

    #[test]
    fn generation_is_deterministic() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate(&tiny_spec(), d1.path().to_str().unwrap()).unwrap();
        generate(&tiny_spec(), d2.path().to_str().unwrap()).unwrap();
        for rel in [
            "a/train.xstf",
            "a/text.txt",
            "b_shared/train.tsv",
            "b_distinct/train.xstf",
            "a_alt/dev.xstf",
        ] {
            let x = std::fs::read(d1.path().join(rel)).unwrap();
            let y = std::fs::read(d2.path().join(rel)).unwrap();
            assert_eq!(x, y, "{} differs", rel);
        }
    }
}
