//! Checkpointing and selective parameter transfer: a model pretrained on
//! recognition donates any subset of its parameter groups to a fresh
//! translation model. Encoder groups move across vocabularies; decoder and
//! output groups are indexed by the vocab and only move between matching
//! fingerprints.

pub mod apply;
pub mod checkpoint;

pub use apply::{
    group_equal, preset_groups, restore_frozen, transfer_parameters, verify_transfer, GroupCheck,
    TransferOutcome, TransferReport, TransferSource, TransferSpec,
};
pub use checkpoint::{
    load_checkpoint, read_checkpoint_info, save_checkpoint, Checkpoint, CheckpointInfo,
    CheckpointMeta,
};
