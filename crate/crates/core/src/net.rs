//! Synchronous network with adversarial scheduling inside the Δ bound.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Slot;
use crate::crypto::{Digest, PartyId, Signature};

pub type MsgId = u64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    /// A block proposal for `round` at the block's height.
    Proposal { block: Digest, round: u32 },
    /// A pre-commit. Honest validators attach the block they vote for so the
    /// data spreads with the vote.
    Vote { sig: Signature, with_block: bool },
    /// A rollup bundle.
    Bundle { bundle: Digest },
    BundleVote { sig: Signature },
    /// Block data without a vote (relay or adversarial reveal).
    Blocks { blocks: Vec<Digest> },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Proposal { .. } => "proposal",
            Payload::Vote { .. } => "vote",
            Payload::Bundle { .. } => "bundle",
            Payload::BundleVote { .. } => "bundle_vote",
            Payload::Blocks { .. } => "blocks",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Message {
    pub id: MsgId,
    pub payload: Payload,
    pub sender: PartyId,
    pub sent_at: Slot,
    /// Sent by an honest party, so the Δ bound applies.
    pub honest: bool,
}

/// How the adversary schedules honest broadcasts within the Δ bound.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum NetworkPolicy {
    Zero,
    #[default]
    Uniform,
    MaxDelay,
    /// Parties in `late` receive after Δ, everyone else immediately.
    Split { late: Vec<String> },
}

impl NetworkPolicy {
    pub fn split(late: impl IntoIterator<Item = PartyId>) -> Self {
        NetworkPolicy::Split { late: late.into_iter().map(|p| p.to_string()).collect() }
    }

    fn late_set(&self) -> BTreeSet<PartyId> {
        match self {
            NetworkPolicy::Split { late } => late.iter().filter_map(|s| PartyId::parse(s)).collect(),
            _ => BTreeSet::new(),
        }
    }
}

/// Chooses a delivery slot in `[sent_at, sent_at + delta]` for every
/// recipient.
pub fn schedule_broadcast(
    sent_at: Slot,
    recipients: &[PartyId],
    delta: u64,
    policy: &NetworkPolicy,
    rng: &mut ChaCha8Rng,
) -> Vec<(PartyId, Slot)> {
    let late = policy.late_set();
    recipients
        .iter()
        .map(|&p| {
            let d = match policy {
                NetworkPolicy::Zero => 0,
                NetworkPolicy::Uniform => rng.gen_range(0..=delta),
                NetworkPolicy::MaxDelay => delta,
                NetworkPolicy::Split { .. } => {
                    if late.contains(&p) {
                        delta
                    } else {
                        0
                    }
                }
            };
            (p, sent_at + d)
        })
        .collect()
}

/// Messages a party joining at `slot` must be handed: every honest broadcast
/// sent before `slot - delta`. Honest messages from the last Δ slots are
/// included only when `include_recent` is set.
pub fn late_join(slot: Slot, delta: u64, log: &[Message], include_recent: bool) -> Vec<&Message> {
    let cutoff = slot.saturating_sub(delta);
    log.iter()
        .filter(|m| m.honest && (m.sent_at < cutoff || (include_recent && m.sent_at < slot)))
        .collect()
}

/// Independent random stream for one party. Streams depend only on the run
/// seed, the party and a purpose tag, so adding parties leaves others intact.
pub fn party_rng(seed: u64, party: PartyId, purpose: &str) -> ChaCha8Rng {
    let mut bytes = Vec::with_capacity(24 + purpose.len());
    bytes.extend_from_slice(&seed.to_be_bytes());
    bytes.extend_from_slice(&party.stream_id().to_be_bytes());
    bytes.extend_from_slice(purpose.as_bytes());
    ChaCha8Rng::from_seed(*Digest::of(&bytes).as_bytes())
}
