use std::collections::{BTreeMap, BTreeSet};

use super::checkpoint::Checkpoint;
use crate::numcore::{Group, ParamSet};
use crate::{Error, Result};

/// One donor checkpoint and the parameter groups it contributes.
pub struct TransferSource {
    pub checkpoint: Checkpoint,
    pub groups: BTreeSet<Group>,
}

/// A selective-transfer plan. Sources claim disjoint group sets; groups not
/// claimed by any source keep the target's fresh initialization. `frozen`
/// lists groups the fine-tuning loop must leave untouched (empty by default:
/// fine-tuning updates everything).
pub struct TransferSpec {
    pub sources: Vec<TransferSource>,
    pub frozen: BTreeSet<Group>,
}

impl TransferSpec {
    pub fn new(sources: Vec<TransferSource>) -> Self {
        TransferSpec {
            sources,
            frozen: BTreeSet::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen: BTreeSet<Group> = BTreeSet::new();
        for (i, src) in self.sources.iter().enumerate() {
            if src.groups.is_empty() {
                return Err(Error::Invalid(format!("source {} selects no groups", i)));
            }
            for g in &src.groups {
                if !seen.insert(*g) {
                    return Err(Error::Invalid(format!(
                        "group '{}' is claimed by more than one source",
                        g.as_str()
                    )));
                }
            }
        }
        if seen.is_empty() {
            return Err(Error::Invalid("transfer spec selects no groups".into()));
        }
        Ok(())
    }

    /// Union of all claimed groups.
    pub fn selected(&self) -> BTreeSet<Group> {
        self.sources
            .iter()
            .flat_map(|s| s.groups.iter().copied())
            .collect()
    }

    pub fn is_frozen(&self, g: Group) -> bool {
        self.frozen.contains(&g)
    }
}

/// Named shorthands for the studied transfer conditions: "cnn" copies the
/// convolutional front end alone, "enc" the whole encoder stack, "dec" the
/// decoder LSTM/embedding plus the output projection, "all" every group.
/// "dec" deliberately leaves the attention group fresh; the attention maps
/// live in their own group so they can ride with either side explicitly.
pub fn preset_groups(name: &str) -> Result<BTreeSet<Group>> {
    let groups: &[Group] = match name {
        "cnn" => &[Group::Cnn],
        "enc" => &[Group::Cnn, Group::EncoderLstm],
        "dec" => &[Group::Decoder, Group::Output],
        "all" => &Group::ALL,
        other => {
            return Err(Error::Invalid(format!(
                "unknown transfer preset '{}' (expected cnn, enc, dec or all)",
                other
            )))
        }
    };
    Ok(groups.iter().copied().collect())
}

/// Where each parameter group of a transferred model came from: the donor's
/// task label for claimed groups, nothing for groups left at fresh init.
#[derive(Debug)]
pub struct TransferOutcome {
    pub params: ParamSet<f32>,
    pub provenance: BTreeMap<Group, String>,
}

/// Copies the claimed groups verbatim from their donors into a freshly
/// initialized parameter set. Decoder and output groups are indexed by the
/// vocabulary, so they only move between matching vocab fingerprints; encoder
/// groups move freely across vocabularies.
pub fn transfer_parameters(
    fresh: ParamSet<f32>,
    spec: &TransferSpec,
    target_fingerprint: &str,
) -> Result<TransferOutcome> {
    spec.validate()?;
    let mut params = fresh;
    let mut provenance = BTreeMap::new();
    for src in &spec.sources {
        let vocab_gated = src
            .groups
            .iter()
            .any(|g| matches!(g, Group::Decoder | Group::Output));
        if vocab_gated && src.checkpoint.vocab_fingerprint.as_deref() != Some(target_fingerprint) {
            return Err(Error::VocabMismatch(format!(
                "checkpoint '{}' indexes a different vocabulary; decoder/output dimensions are \
                 indexed by the vocab, so only encoder-side parameters transfer across vocabularies",
                src.checkpoint.meta.task
            )));
        }
        for g in &src.groups {
            copy_group(&mut params, src, *g)?;
            provenance.insert(*g, src.checkpoint.meta.task.clone());
        }
    }
    Ok(TransferOutcome { params, provenance })
}

fn copy_group(target: &mut ParamSet<f32>, src: &TransferSource, g: Group) -> Result<()> {
    let names: Vec<String> = target
        .entries
        .iter()
        .filter(|(_, e)| e.group == g)
        .map(|(n, _)| n.clone())
        .collect();
    if names.is_empty() {
        return Err(Error::Invalid(format!(
            "target model has no parameters in group '{}'",
            g.as_str()
        )));
    }
    for (n, e) in &src.checkpoint.params.entries {
        if e.group == g && !target.entries.contains_key(n) {
            return Err(Error::Invalid(format!(
                "donor tensor '{}' (group '{}') has no counterpart in the target model",
                n,
                g.as_str()
            )));
        }
    }
    for n in &names {
        let se = src
            .checkpoint
            .params
            .get(n)
            .map_err(|_| Error::MissingParam(n.clone()))?;
        let te = target.get_mut(n)?;
        if se.value.shape != te.value.shape {
            return Err(Error::shape(
                "transfer",
                format!(
                    "'{}': donor {:?} vs target {:?}",
                    n, se.value.shape, te.value.shape
                ),
            ));
        }
        if se.kind != te.kind {
            return Err(Error::Invalid(format!(
                "'{}' is a buffer on one side and trainable on the other",
                n
            )));
        }
        te.value = se.value.clone();
    }
    Ok(())
}

/// Per-group verdicts from comparing a transfer result against its donors and
/// the pre-transfer snapshot.
#[derive(Debug, Clone)]
pub struct GroupCheck {
    pub group: Group,
    pub transferred: bool,
    pub source: Option<String>,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct TransferReport {
    pub groups: Vec<GroupCheck>,
    pub pass: bool,
}

impl std::fmt::Display for TransferReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.groups {
            writeln!(
                f,
                "{:<14} {:<22} {}",
                c.group.as_str(),
                match &c.source {
                    Some(s) => format!("from {}", s),
                    None => "fresh".to_string(),
                },
                if c.pass { "ok" } else { "MISMATCH" }
            )?;
        }
        write!(f, "transfer {}", if self.pass { "verified" } else { "FAILED" })
    }
}

/// Checks, group by group, that claimed groups are bit-equal to their donor
/// and unclaimed groups are bit-equal to the fresh snapshot. Never errors;
/// the report carries one verdict per group.
pub fn verify_transfer(
    result: &ParamSet<f32>,
    spec: &TransferSpec,
    fresh_snapshot: &ParamSet<f32>,
) -> TransferReport {
    let mut groups = Vec::new();
    let mut pass = true;
    for g in Group::ALL {
        let donor = spec.sources.iter().find(|s| s.groups.contains(&g));
        let (transferred, source, ok) = match donor {
            Some(s) => (
                true,
                Some(s.checkpoint.meta.task.clone()),
                group_equal(result, &s.checkpoint.params, g),
            ),
            None => (false, None, group_equal(result, fresh_snapshot, g)),
        };
        pass &= ok;
        groups.push(GroupCheck {
            group: g,
            transferred,
            source,
            pass: ok,
        });
    }
    TransferReport { groups, pass }
}

/// Bitwise equality of every tensor in group `g`, including name coverage in
/// both directions.
pub fn group_equal(a: &ParamSet<f32>, b: &ParamSet<f32>, g: Group) -> bool {
    let in_g = |set: &ParamSet<f32>| {
        set.entries
            .iter()
            .filter(|(_, e)| e.group == g)
            .map(|(n, _)| n.clone())
            .collect::<BTreeSet<String>>()
    };
    let names = in_g(a);
    if names != in_g(b) {
        return false;
    }
    names.iter().all(|n| {
        let (ea, eb) = (a.get(n).unwrap(), b.get(n).unwrap());
        ea.value.shape == eb.value.shape
            && ea
                .value
                .data
                .iter()
                .zip(eb.value.data.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits())
    })
}

/// Writes the frozen groups' values from `reference` back into `params`. The
/// fine-tuning loop calls this after every optimizer step, which freezes a
/// group without teaching the optimizer about masks.
pub fn restore_frozen(
    params: &mut ParamSet<f32>,
    reference: &ParamSet<f32>,
    frozen: &BTreeSet<Group>,
) -> Result<()> {
    if frozen.is_empty() {
        return Ok(());
    }
    let names: Vec<String> = params
        .entries
        .iter()
        .filter(|(_, e)| frozen.contains(&e.group))
        .map(|(n, _)| n.clone())
        .collect();
    for n in &names {
        let r = reference.get(n)?;
        let value = r.value.clone();
        params.get_mut(n)?.value = value;
    }
    Ok(())
}
