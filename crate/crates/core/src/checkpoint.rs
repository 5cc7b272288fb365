//! Checkpoints, their validity rules and the OP_RETURN wire codec.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::config::{majority, quorum};
use crate::crypto::{byte_len, Bitmap, Digest, Registry, Signature, ValidatorId};
use crate::pos::{Header, PosBlock};

pub const TAG: &[u8; 4] = b"BBNT";
pub const AGG_SIG_LEN: usize = 48;
pub const MAX_PAYLOAD: usize = 80;
/// Body bytes carried by the first payload.
pub const FIRST_PART: usize = MAX_PAYLOAD - TAG.len() - 1;

/// Epoch, block hash and aggregated signer set, as posted to Bitcoin.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Checkpoint {
    pub epoch: u64,
    pub block_hash: Digest,
    /// Opaque stand-in for a BLS aggregate; only its size is meaningful.
    pub agg_sig: [u8; AGG_SIG_LEN],
    pub bitmap: Bitmap,
}

/// Same layout as a checkpoint; the hash names a bundle and the epoch is
/// the last PoS epoch before the rollup.
pub type BundleCheckpoint = Checkpoint;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("only {got} signers, {need} required")]
    Quorum { got: usize, need: usize },
    #[error("{0} is not in the active set")]
    Membership(ValidatorId),
    #[error("signature is not over the checkpointed block")]
    WrongMessage,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("missing BBNT tag")]
    Tag,
    #[error("bad framing")]
    Framing,
    #[error("checkpoint for {0} validators does not fit in two payloads")]
    Capacity(usize),
}

fn synthetic_agg_sig(block_hash: &Digest, bitmap: &Bitmap) -> [u8; AGG_SIG_LEN] {
    let mut seed = block_hash.as_bytes().to_vec();
    seed.extend_from_slice(bitmap.as_bytes());
    let a = Digest::of(&seed);
    let b = Digest::of(a.as_bytes());
    let mut out = [0u8; AGG_SIG_LEN];
    out[..32].copy_from_slice(a.as_bytes());
    out[32..].copy_from_slice(&b.as_bytes()[..16]);
    out
}

impl Checkpoint {
    pub fn new(epoch: u64, block_hash: Digest, bitmap: Bitmap) -> Self {
        let agg_sig = synthetic_agg_sig(&block_hash, &bitmap);
        Checkpoint { epoch, block_hash, agg_sig, bitmap }
    }

    pub fn signers(&self, active_set: &[ValidatorId]) -> BTreeSet<ValidatorId> {
        self.bitmap.members(active_set)
    }
}

/// Aggregates pre-commits on `block` into a checkpoint. Needs more than two
/// thirds of `active_set`.
pub fn make_checkpoint(
    block: &PosBlock,
    precommits: &[Signature],
    active_set: &[ValidatorId],
) -> Result<Checkpoint, CheckpointError> {
    build(block.epoch, block.hash, precommits, active_set, quorum(active_set.len()))
}

/// Aggregates bundle signatures. Needs more than half of `active_set`.
pub fn make_bundle_checkpoint(
    bundle: &PosBlock,
    sigs: &[Signature],
    active_set: &[ValidatorId],
) -> Result<BundleCheckpoint, CheckpointError> {
    build(bundle.epoch, bundle.hash, sigs, active_set, majority(active_set.len()))
}

fn build(
    epoch: u64,
    hash: Digest,
    sigs: &[Signature],
    active_set: &[ValidatorId],
    need: usize,
) -> Result<Checkpoint, CheckpointError> {
    let mut signers = BTreeSet::new();
    for s in sigs {
        if s.message != hash {
            return Err(CheckpointError::WrongMessage);
        }
        if !active_set.contains(&s.signer) {
            return Err(CheckpointError::Membership(s.signer));
        }
        signers.insert(s.signer);
    }
    if signers.len() < need {
        return Err(CheckpointError::Quorum { got: signers.len(), need });
    }
    let bitmap = Bitmap::from_members(signers, active_set).map_err(|_| CheckpointError::WrongMessage)?;
    Ok(Checkpoint::new(epoch, hash, bitmap))
}

/// The epoch the next checkpoint must carry, given the last checkpointed
/// block: one past its epoch when it closes that epoch.
pub fn expected_epoch(tip: &Header, epoch_len: u64) -> u64 {
    if tip.is_epoch_final(epoch_len) {
        tip.epoch + 1
    } else {
        tip.epoch
    }
}

/// Signers that count toward validity: bitmapped members of the active set
/// with a registered signature on the hash, minus excluded validators.
pub fn effective_signers(
    cp: &Checkpoint,
    active_set: &[ValidatorId],
    excluded: &BTreeSet<ValidatorId>,
    registry: &Registry,
) -> usize {
    if cp.bitmap.len() != active_set.len() {
        return 0;
    }
    cp.bitmap
        .ones()
        .map(|i| active_set[i])
        .filter(|v| !excluded.contains(v) && registry.has_signature(*v, cp.block_hash))
        .count()
}

pub fn checkpoint_valid(
    cp: &Checkpoint,
    expected: u64,
    active_set: &[ValidatorId],
    excluded: &BTreeSet<ValidatorId>,
    registry: &Registry,
) -> bool {
    cp.epoch == expected && effective_signers(cp, active_set, excluded, registry) >= quorum(active_set.len())
}

pub fn bundle_checkpoint_valid(
    bcp: &BundleCheckpoint,
    expected: u64,
    active_set: &[ValidatorId],
    excluded: &BTreeSet<ValidatorId>,
    registry: &Registry,
) -> bool {
    bcp.epoch == expected && effective_signers(bcp, active_set, excluded, registry) >= majority(active_set.len())
}

pub fn body_len(n: usize) -> usize {
    8 + 32 + AGG_SIG_LEN + byte_len(n)
}

/// Splits a checkpoint into two tagged payloads:
/// `BBNT ‖ 0x00 ‖ body[..75]` and `BBNT ‖ 0x01 ‖ body[75..]`.
pub fn encode_op_return(cp: &Checkpoint) -> Result<(Vec<u8>, Vec<u8>), CodecError> {
    let n = cp.bitmap.len();
    let mut body = Vec::with_capacity(body_len(n));
    body.extend_from_slice(&cp.epoch.to_be_bytes());
    body.extend_from_slice(cp.block_hash.as_bytes());
    body.extend_from_slice(&cp.agg_sig);
    body.extend_from_slice(cp.bitmap.as_bytes());
    if body.len() - FIRST_PART + TAG.len() + 1 > MAX_PAYLOAD {
        return Err(CodecError::Capacity(n));
    }
    let part = |idx: u8, bytes: &[u8]| {
        let mut p = TAG.to_vec();
        p.push(idx);
        p.extend_from_slice(bytes);
        p
    };
    Ok((part(0, &body[..FIRST_PART]), part(1, &body[FIRST_PART..])))
}

/// Inverse of [`encode_op_return`] for an active set of `n` validators.
pub fn decode_op_return(p1: &[u8], p2: &[u8], n: usize) -> Result<Checkpoint, CodecError> {
    for p in [p1, p2] {
        if p.len() < TAG.len() + 1 || &p[..4] != TAG {
            return Err(CodecError::Tag);
        }
    }
    if p1[4] != 0 || p2[4] != 1 || p1.len() != MAX_PAYLOAD {
        return Err(CodecError::Framing);
    }
    let mut body = p1[5..].to_vec();
    body.extend_from_slice(&p2[5..]);
    if body.len() != body_len(n) {
        return Err(CodecError::Framing);
    }
    let epoch = u64::from_be_bytes(body[0..8].try_into().unwrap());
    let block_hash = Digest(body[8..40].try_into().unwrap());
    let agg_sig: [u8; AGG_SIG_LEN] = body[40..88].try_into().unwrap();
    let bitmap = Bitmap::from_bytes(body[88..].to_vec(), n).ok_or(CodecError::Framing)?;
    Ok(Checkpoint { epoch, block_hash, agg_sig, bitmap })
}
