use std::collections::BTreeMap;

use super::tape::{NodeId, Tape};
use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

/// Parameter group tags. These are the units of selective transfer: a
/// pretrained checkpoint can donate any subset of them to a new model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    Cnn,
    EncoderLstm,
    Attention,
    Decoder,
    Output,
}

impl Group {
    pub const ALL: [Group; 5] = [
        Group::Cnn,
        Group::EncoderLstm,
        Group::Attention,
        Group::Decoder,
        Group::Output,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Cnn => "cnn",
            Group::EncoderLstm => "encoder_lstm",
            Group::Attention => "attention",
            Group::Decoder => "decoder",
            Group::Output => "output",
        }
    }

    pub fn parse(s: &str) -> Result<Group> {
        match s {
            "cnn" => Ok(Group::Cnn),
            "encoder_lstm" => Ok(Group::EncoderLstm),
            "attention" => Ok(Group::Attention),
            "decoder" => Ok(Group::Decoder),
            "output" => Ok(Group::Output),
            other => Err(Error::Invalid(format!("unknown parameter group '{}'", other))),
        }
    }
}

/// Buffers (batch-norm running statistics) ride along with the trainable
/// parameters: they are saved, restored and transferred, but never receive
/// gradients or optimizer updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Trainable,
    Buffer,
}

#[derive(Debug, Clone)]
pub struct ParamEntry<S: Scalar> {
    pub value: Tensor<S>,
    pub grad: Tensor<S>,
    pub group: Group,
    pub kind: ParamKind,
}

/// Named model parameters with gradients, ordered by name so that every
/// iteration over the set is deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamSet<S: Scalar> {
    pub entries: BTreeMap<String, ParamEntry<S>>,
}

/// Tape handles for one binding of a ParamSet, created once per step.
pub struct Bound {
    pub ids: BTreeMap<String, NodeId>,
}

impl Bound {
    pub fn id(&self, name: &str) -> Result<NodeId> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        ParamSet {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, group: Group, value: Tensor<S>) -> Result<()> {
        self.insert_kind(name, group, value, ParamKind::Trainable)
    }

    pub fn insert_buffer(&mut self, name: &str, group: Group, value: Tensor<S>) -> Result<()> {
        self.insert_kind(name, group, value, ParamKind::Buffer)
    }

    fn insert_kind(&mut self, name: &str, group: Group, value: Tensor<S>, kind: ParamKind) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::Invalid(format!("duplicate parameter name '{}'", name)));
        }
        let grad = Tensor::zeros(&value.shape);
        self.entries.insert(
            name.to_string(),
            ParamEntry {
                value,
                grad,
                group,
                kind,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&ParamEntry<S>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut ParamEntry<S>> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values across trainable entries.
    pub fn num_trainable_values(&self) -> usize {
        self.entries
            .values()
            .filter(|e| e.kind == ParamKind::Trainable)
            .map(|e| e.value.len())
            .sum()
    }

    pub fn zero_grads(&mut self) {
        for e in self.entries.values_mut() {
            for g in e.grad.data.iter_mut() {
                *g = S::zero();
            }
        }
    }

    /// Record every trainable entry as a leaf on the tape. Values are copied,
    /// so the set can be mutated afterwards (running-stat buffers) without
    /// disturbing the recorded graph.
    pub fn bind(&self, tape: &mut Tape<S>) -> Bound {
        let mut ids = BTreeMap::new();
        for (name, e) in &self.entries {
            if e.kind == ParamKind::Trainable {
                ids.insert(name.clone(), tape.leaf(e.value.clone()));
            }
        }
        Bound { ids }
    }

    /// Add the tape gradients of one bound graph into the stored gradients.
    pub fn harvest(&mut self, tape: &Tape<S>, bound: &Bound) {
        for (name, id) in &bound.ids {
            if let Some(g) = tape.grad(*id) {
                let e = self.entries.get_mut(name).expect("bound name in set");
                for (dst, &src) in e.grad.data.iter_mut().zip(g.data.iter()) {
                    *dst += src;
                }
            }
        }
    }

    /// L2 norm over all trainable gradients.
    pub fn grad_norm(&self) -> f64 {
        let mut acc = 0.0;
        for e in self.entries.values() {
            if e.kind == ParamKind::Trainable {
                for &g in &e.grad.data {
                    let v = g.to_f64();
                    acc += v * v;
                }
            }
        }
        acc.sqrt()
    }

    pub fn cast<T: Scalar>(&self) -> ParamSet<T> {
        let mut out = ParamSet::new();
        for (name, e) in &self.entries {
            out.entries.insert(
                name.clone(),
                ParamEntry {
                    value: Tensor::map_from(&e.value),
                    grad: Tensor::map_from(&e.grad),
                    group: e.group,
                    kind: e.kind,
                },
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ParamSet::<f32>::new();
        p.insert("a.w", Group::Cnn, Tensor::zeros(&[2])).unwrap();
        assert!(p.insert("a.w", Group::Cnn, Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn group_tags_roundtrip() {
        for g in Group::ALL {
            assert_eq!(Group::parse(g.as_str()).unwrap(), g);
        }
        assert!(Group::parse("embedding").is_err());
    }

    #[test]
    fn harvest_accumulates() {
        let mut p = ParamSet::<f64>::new();
        p.insert("w", Group::Output, Tensor::vector(vec![1.0, 2.0])).unwrap();
        for _ in 0..2 {
            let mut tape = Tape::new();
            let b = p.bind(&mut tape);
            let w = b.id("w").unwrap();
            let loss = tape.sum_all(w).unwrap();
            tape.backward(loss).unwrap();
            p.harvest(&tape, &b);
        }
        assert_eq!(p.get("w").unwrap().grad.data, vec![2.0, 2.0]);
    }
}
