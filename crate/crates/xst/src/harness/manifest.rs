use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use crate::numcore::RngStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Asr,
    St,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Asr => "asr",
            TaskKind::St => "st",
        }
    }

    pub fn parse(s: &str) -> Result<TaskKind> {
        match s {
            "asr" => Ok(TaskKind::Asr),
            "st" => Ok(TaskKind::St),
            other => Err(Error::Invalid(format!(
                "unknown task label '{}' (expected asr or st)",
                other
            ))),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub utterance_id: String,
    pub path: String,
    pub speaker_id: String,
    pub text: String,
    pub duration_seconds: f64,
}

/// A dataset split: one row per utterance pointing at its feature (or raw
/// audio) file, plus task-level labels. Serialized as UTF-8 TSV: '#'-prefixed
/// task/language lines, a column header, then the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub task: TaskKind,
    pub source_lang: String,
    pub target_lang: String,
    pub rows: Vec<ManifestRow>,
}

const COLUMNS: &str = "utterance_id\tpath\tspeaker_id\ttext\tduration_seconds";

impl Manifest {
    pub fn new(task: TaskKind, source_lang: &str, target_lang: &str) -> Manifest {
        Manifest {
            task,
            source_lang: source_lang.to_string(),
            target_lang: target_lang.to_string(),
            rows: Vec::new(),
        }
    }

    pub fn total_duration(&self) -> f64 {
        self.rows.iter().map(|r| r.duration_seconds).sum()
    }

    /// Structural checks: unique ids, positive durations, no embedded tabs or
    /// newlines. Path existence is checked separately because a manifest can
    /// be composed in memory before its files are written.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for row in &self.rows {
            if row.utterance_id.is_empty() {
                return Err(Error::Invalid("empty utterance id".into()));
            }
            if !seen.insert(row.utterance_id.as_str()) {
                return Err(Error::Invalid(format!(
                    "duplicate utterance id '{}'",
                    row.utterance_id
                )));
            }
            if !(row.duration_seconds > 0.0) {
                return Err(Error::Invalid(format!(
                    "utterance '{}': duration {} is not positive",
                    row.utterance_id, row.duration_seconds
                )));
            }
            for (field, v) in [
                ("utterance_id", &row.utterance_id),
                ("path", &row.path),
                ("speaker_id", &row.speaker_id),
                ("text", &row.text),
            ] {
                if v.contains('\t') || v.contains('\n') {
                    return Err(Error::Invalid(format!(
                        "utterance '{}': {} contains a tab or newline",
                        row.utterance_id, field
                    )));
                }
            }
        }
        Ok(())
    }

    /// validate() plus an existence check on every referenced path.
    pub fn validate_paths(&self) -> Result<()> {
        self.validate()?;
        for row in &self.rows {
            if !Path::new(&row.path).exists() {
                return Err(Error::Invalid(format!(
                    "utterance '{}': path '{}' does not exist",
                    row.utterance_id, row.path
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &str) -> Result<()> {
        self.validate()?;
        let mut out = String::new();
        out.push_str(&format!("#task\t{}\n", self.task));
        out.push_str(&format!("#source_lang\t{}\n", self.source_lang));
        out.push_str(&format!("#target_lang\t{}\n", self.target_lang));
        out.push_str(COLUMNS);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.utterance_id, r.path, r.speaker_id, r.text, r.duration_seconds
            ));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Loads and validates a manifest. Relative row paths are resolved
    /// against the manifest's own directory so experiment trees stay
    /// relocatable.
    pub fn load(path: &str) -> Result<Manifest> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = Path::new(path).parent().unwrap_or_else(|| Path::new("."));
        let mut task = None;
        let mut source_lang = None;
        let mut target_lang = None;
        let mut rows = Vec::new();
        let mut saw_header = false;
        for (ln, line) in raw.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let (key, value) = rest.split_once('\t').ok_or_else(|| {
                    Error::format(path, format!("line {}: malformed '#' line", ln + 1))
                })?;
                match key {
                    "task" => task = Some(TaskKind::parse(value)?),
                    "source_lang" => source_lang = Some(value.to_string()),
                    "target_lang" => target_lang = Some(value.to_string()),
                    other => {
                        return Err(Error::format(
                            path,
                            format!("line {}: unknown manifest attribute '{}'", ln + 1, other),
                        ))
                    }
                }
                continue;
            }
            if !saw_header {
                if line != COLUMNS {
                    return Err(Error::format(
                        path,
                        format!("line {}: expected column header '{}'", ln + 1, COLUMNS),
                    ));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(Error::format(
                    path,
                    format!("line {}: expected 5 columns, found {}", ln + 1, fields.len()),
                ));
            }
            let duration_seconds: f64 = fields[4].parse().map_err(|_| {
                Error::format(path, format!("line {}: bad duration '{}'", ln + 1, fields[4]))
            })?;
            let p = Path::new(fields[1]);
            let resolved = if p.is_absolute() {
                fields[1].to_string()
            } else {
                base.join(p).to_string_lossy().into_owned()
            };
            rows.push(ManifestRow {
                utterance_id: fields[0].to_string(),
                path: resolved,
                speaker_id: fields[2].to_string(),
                text: fields[3].to_string(),
                duration_seconds,
            });
        }
        let m = Manifest {
            task: task.ok_or_else(|| Error::format(path, "missing #task line"))?,
            source_lang: source_lang.ok_or_else(|| Error::format(path, "missing #source_lang"))?,
            target_lang: target_lang.ok_or_else(|| Error::format(path, "missing #target_lang"))?,
            rows,
        };
        m.validate()?;
        Ok(m)
    }
}

/// Duration-budgeted random subset: shuffle uniformly, take the longest
/// prefix whose total stays within the budget, then take one more utterance
/// if the shortfall still exceeds an average utterance's duration. The
/// result's total therefore lands within about one utterance of the budget
/// on either side.
pub fn sample_subset(manifest: &Manifest, hours: f64, rng: &mut RngStream) -> Result<Manifest> {
    if hours < 0.0 || !hours.is_finite() {
        return Err(Error::Invalid(format!("duration budget {} hours", hours)));
    }
    manifest.validate()?;
    let budget = hours * 3600.0;
    let mut order: Vec<usize> = (0..manifest.rows.len()).collect();
    rng.shuffle(&mut order);

    let mean = if manifest.rows.is_empty() {
        0.0
    } else {
        manifest.total_duration() / manifest.rows.len() as f64
    };
    let mut rows = Vec::new();
    let mut total = 0.0;
    let mut next = None;
    for &i in &order {
        let d = manifest.rows[i].duration_seconds;
        if total + d <= budget {
            total += d;
            rows.push(manifest.rows[i].clone());
        } else {
            next = Some(i);
            break;
        }
    }
    if let Some(i) = next {
        if budget - total > mean {
            rows.push(manifest.rows[i].clone());
        }
    }
    Ok(Manifest {
        task: manifest.task,
        source_lang: manifest.source_lang.clone(),
        target_lang: manifest.target_lang.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(durations: &[f64]) -> Manifest {
        let mut m = Manifest::new(TaskKind::St, "xx", "yy");
        for (i, &d) in durations.iter().enumerate() {
            m.rows.push(ManifestRow {
                utterance_id: format!("u{:04}", i),
                path: format!("feats/{:04}.xstf", i),
                speaker_id: format!("s{}", i % 7),
                text: format!("word{} word{}", i % 5, (i + 3) % 5),
                duration_seconds: d,
            });
        }
        m
    }

    #[test]
    fn tsv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(&[1.5, 2.25, 0.75]);
        let path = dir.path().join("m.tsv");
        m.save(path.to_str().unwrap()).unwrap();
        let back = Manifest::load(path.to_str().unwrap()).unwrap();
        assert_eq!(back.task, TaskKind::St);
        assert_eq!(back.rows.len(), 3);
        assert_eq!(back.rows[1].text, m.rows[1].text);
        assert_eq!(back.rows[1].duration_seconds, 2.25);
        // Relative paths resolve against the manifest directory.
        assert!(back.rows[0].path.starts_with(dir.path().to_str().unwrap()));
    }

    #[test]
    fn duplicate_ids_and_bad_durations_rejected() {
        let mut m = manifest(&[1.0, 1.0]);
        m.rows[1].utterance_id = m.rows[0].utterance_id.clone();
        assert!(m.validate().is_err());

        let mut m = manifest(&[1.0, 1.0]);
        m.rows[0].duration_seconds = 0.0;
        assert!(m.validate().is_err());

        let mut m = manifest(&[1.0]);
        m.rows[0].text = "has\ttab".into();
        assert!(m.validate().is_err());
    }

    #[test]
    fn unknown_attribute_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        std::fs::write(
            &path,
            format!("#task\tst\n#source_lang\tx\n#target_lang\ty\n#color\tblue\n{}\n", COLUMNS),
        )
        .unwrap();
        assert!(Manifest::load(path.to_str().unwrap()).is_err());
    }

    #[test]
    fn subset_hits_the_worked_example() {
        // 100 utterances of 36 s each with a 0.5 h budget: 1800 / 36 = 50,
        // exactly on budget, so the add-one rule must not fire.
        let m = manifest(&vec![36.0; 100]);
        let mut rng = RngStream::new(5, "subset");
        let s = sample_subset(&m, 0.5, &mut rng).unwrap();
        assert_eq!(s.rows.len(), 50);
        assert!((s.total_duration() - 1800.0).abs() < 1e-9);
    }

    #[test]
    fn subset_edge_budgets() {
        let m = manifest(&[10.0, 20.0, 30.0, 40.0]);
        let mut rng = RngStream::new(6, "subset");
        assert!(sample_subset(&m, -0.1, &mut rng).is_err());
        assert_eq!(sample_subset(&m, 0.0, &mut rng).unwrap().rows.len(), 0);
        // Budget beyond the total keeps everything, order shuffled.
        let all = sample_subset(&m, 1.0, &mut rng).unwrap();
        assert_eq!(all.rows.len(), 4);
        let mut ids: Vec<&str> = all.rows.iter().map(|r| r.utterance_id.as_str()).collect();
        ids.sort_unstable();
        assert_eq!(ids, ["u0000", "u0001", "u0002", "u0003"]);
    }

    #[test]
    fn subset_is_deterministic_and_near_budget() {
        let durations: Vec<f64> = (0..200).map(|i| 2.0 + (i % 13) as f64).collect();
        let m = manifest(&durations);
        let mean = m.total_duration() / 200.0;
        for hours in [0.05, 0.1, 0.2] {
            let mut r1 = RngStream::new(17, "subset");
            let mut r2 = RngStream::new(17, "subset");
            let a = sample_subset(&m, hours, &mut r1).unwrap();
            let b = sample_subset(&m, hours, &mut r2).unwrap();
            assert_eq!(a, b);
            let budget = hours * 3600.0;
            let total = a.total_duration();
            // Short by at most an average utterance, over by less than the
            // largest single utterance.
            assert!(total <= budget + 14.0, "total {} budget {}", total, budget);
            assert!(budget - total <= mean + 1e-9, "total {} budget {}", total, budget);
        }
    }

    #[test]
    fn add_one_rule_fires_when_a_long_utterance_blocks() {
        // One long utterance first in shuffle order can leave a gap larger
        // than the mean; the rule then includes it despite overshooting.
        let m = manifest(&[5.0, 5.0, 5.0, 5.0, 100.0]);
        for seed in 0..50 {
            let mut rng = RngStream::new(seed, "subset");
            let s = sample_subset(&m, 30.0 / 3600.0, &mut rng).unwrap();
            let total = s.total_duration();
            let mean = 24.0;
            // Whatever the shuffle, the invariant holds: shortfall <= mean.
            assert!(30.0 - total <= mean + 1e-9, "seed {} total {}", seed, total);
        }
    }
}
