//! Simulated Bitcoin: a fixed-cadence canonical chain with adversarial
//! inclusion delay bounded by the liveness contract, and lagged k-deep views.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Slot;
use crate::crypto::{Digest, PartyId};

pub type BtcTxId = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BtcTxKind {
    Checkpoint,
    BundleCheckpoint,
    FraudProof,
    Liveness,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BtcTx {
    pub id: BtcTxId,
    pub kind: BtcTxKind,
    pub payloads: Vec<Vec<u8>>,
    pub submitter: PartyId,
    pub submitted_at: Slot,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BtcBlock {
    pub height: u64,
    pub txs: Vec<BtcTx>,
    pub produced_at: Slot,
}

/// Confirmed prefix of the canonical chain as seen by one party.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BtcView {
    pub owner: PartyId,
    /// Number of confirmed blocks, genesis included.
    pub len: u64,
    pub as_of: Slot,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BtcError {
    #[error("payload of {0} bytes exceeds 80")]
    PayloadTooLarge(usize),
}

/// How the adversary places transactions, always within the deadline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InclusionPolicy {
    /// Next block, first come first served.
    #[default]
    Neutral,
    /// Latest block that still meets the confirmation deadline.
    MaxDelay,
    /// Random delay within the deadline, never reordering submissions.
    RandomMonotone,
    /// Next block, but transactions submitted in the same slot are reversed.
    ReverseSameSlot,
}

pub const LIVENESS_TAG: &[u8; 4] = b"BBNL";

pub fn liveness_payload(tx: &Digest) -> Vec<u8> {
    let mut p = LIVENESS_TAG.to_vec();
    p.extend_from_slice(tx.as_bytes());
    p
}

pub fn parse_liveness(p: &[u8]) -> Option<Digest> {
    if p.len() != 36 || &p[..4] != LIVENESS_TAG {
        return None;
    }
    Some(Digest(p[4..].try_into().ok()?))
}

#[derive(Clone, Debug)]
struct Pending {
    tx: BtcTx,
    target: u64,
    seq: u64,
}

#[derive(Debug)]
pub struct BtcLedger {
    pub interval: u64,
    pub k: u64,
    pub delta: u64,
    pub policy: InclusionPolicy,
    blocks: Vec<BtcBlock>,
    mempool: Vec<Pending>,
    next_id: BtcTxId,
    last_target: u64,
    location: HashMap<BtcTxId, (u64, usize)>,
    rng: ChaCha8Rng,
}

impl BtcLedger {
    pub fn new(interval: u64, k: u64, delta: u64, policy: InclusionPolicy, rng: ChaCha8Rng) -> Self {
        BtcLedger {
            interval,
            k,
            delta,
            policy,
            blocks: vec![BtcBlock { height: 0, txs: Vec::new(), produced_at: 0 }],
            mempool: Vec::new(),
            next_id: 0,
            last_target: 0,
            location: HashMap::new(),
            rng,
        }
    }

    pub fn r_fin(&self) -> u64 {
        (self.k + 2) * self.interval + self.delta
    }

    pub fn blocks(&self) -> &[BtcBlock] {
        &self.blocks
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn location(&self, id: BtcTxId) -> Option<(u64, usize)> {
        self.location.get(&id).copied()
    }

    /// Latest block height that still confirms a slot-`s` submission in
    /// every view by `s + r_fin`.
    pub fn deadline_height(&self, s: Slot) -> u64 {
        s / self.interval + 2
    }

    pub fn submit(
        &mut self,
        kind: BtcTxKind,
        payloads: Vec<Vec<u8>>,
        submitter: PartyId,
        slot: Slot,
    ) -> Result<BtcTxId, BtcError> {
        if let Some(p) = payloads.iter().find(|p| p.len() > 80) {
            return Err(BtcError::PayloadTooLarge(p.len()));
        }
        let id = self.next_id;
        self.next_id += 1;
        let next = self.blocks.len() as u64;
        let latest = self.deadline_height(slot);
        let target = match self.policy {
            InclusionPolicy::Neutral | InclusionPolicy::ReverseSameSlot => next,
            InclusionPolicy::MaxDelay => latest,
            InclusionPolicy::RandomMonotone => {
                let lo = next.max(self.last_target);
                if lo >= latest {
                    latest
                } else {
                    self.rng.gen_range(lo..=latest)
                }
            }
        };
        self.last_target = self.last_target.max(target);
        let tx = BtcTx { id, kind, payloads, submitter, submitted_at: slot };
        self.mempool.push(Pending { tx, target, seq: id });
        Ok(id)
    }

    /// Appends the block due at `slot`, if any. Blocks come exactly every
    /// `interval` slots.
    pub fn produce_block(&mut self, slot: Slot) -> Option<&BtcBlock> {
        if slot == 0 || !slot.is_multiple_of(self.interval) {
            return None;
        }
        let height = slot / self.interval;
        debug_assert_eq!(height, self.blocks.len() as u64);
        let (mut due, rest): (Vec<_>, Vec<_>) = self.mempool.drain(..).partition(|p| p.target <= height);
        self.mempool = rest;
        match self.policy {
            InclusionPolicy::ReverseSameSlot => {
                due.sort_by_key(|p| (p.tx.submitted_at, std::cmp::Reverse(p.seq)))
            }
            _ => due.sort_by_key(|p| (p.tx.submitted_at, p.seq)),
        }
        let txs: Vec<BtcTx> = due.into_iter().map(|p| p.tx).collect();
        for (i, tx) in txs.iter().enumerate() {
            self.location.insert(tx.id, (height, i));
        }
        self.blocks.push(BtcBlock { height, txs, produced_at: slot });
        self.blocks.last()
    }

    /// Tip visible at `slot` to a party lagging `lag` slots.
    pub fn visible_tip(&self, slot: Slot, lag: u64) -> u64 {
        let t = slot.saturating_sub(lag) / self.interval;
        t.min(self.height())
    }

    /// Number of blocks in the k-deep prefix seen at `slot` with `lag`.
    pub fn confirmed_len(&self, slot: Slot, lag: u64) -> u64 {
        let tip = self.visible_tip(slot, lag);
        if tip >= self.k {
            tip - self.k + 1
        } else {
            1
        }
    }

    pub fn confirmed_view(&self, owner: PartyId, lag: u64, slot: Slot) -> BtcView {
        BtcView { owner, len: self.confirmed_len(slot, lag), as_of: slot }
    }
}

/// First slot at which block `height` is confirmed for a party with `lag`.
pub fn confirmation_slot(height: u64, k: u64, interval: u64, lag: u64) -> Slot {
    (height + k) * interval + lag
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::party_rng;

    fn ledger(interval: u64, k: u64, delta: u64, policy: InclusionPolicy) -> BtcLedger {
        BtcLedger::new(interval, k, delta, policy, party_rng(3, PartyId::Environment, "btc"))
    }

    fn run_until(l: &mut BtcLedger, slot: Slot) {
        for s in 1..=slot {
            l.produce_block(s);
        }
    }

    #[test]
    fn neutral_includes_in_next_block() {
        let mut l = ledger(2, 1, 1, InclusionPolicy::Neutral);
        run_until(&mut l, 4);
        let id = l.submit(BtcTxKind::Checkpoint, vec![vec![1]], PartyId::Environment, 5).unwrap();
        run_until_from(&mut l, 5, 6);
        assert_eq!(l.location(id), Some((3, 0)));
    }

    fn run_until_from(l: &mut BtcLedger, from: Slot, to: Slot) {
        for s in from..=to {
            l.produce_block(s);
        }
    }

    #[test]
    fn empty_blocks_keep_cadence() {
        let mut l = ledger(3, 1, 1, InclusionPolicy::Neutral);
        run_until(&mut l, 30);
        assert_eq!(l.height(), 10);
        assert!(l.blocks().iter().all(|b| b.produced_at == b.height * 3 && b.txs.is_empty()));
    }

    #[test]
    fn max_delay_meets_deadline_for_every_lag() {
        for (interval, k, delta) in [(1, 1, 1), (2, 3, 2), (5, 2, 4)] {
            let mut l = ledger(interval, k, delta, InclusionPolicy::MaxDelay);
            for s in 0..40 {
                if s > 0 {
                    l.produce_block(s);
                }
                if s == 7 {
                    l.submit(BtcTxKind::Liveness, vec![], PartyId::Environment, s).unwrap();
                }
            }
            let end = 7 + l.r_fin() + 1;
            run_until_from(&mut l, 40, end);
            let (h, _) = l.location(0).unwrap();
            for lag in 0..=delta {
                let c = confirmation_slot(h, k, interval, lag);
                assert!(c <= 7 + l.r_fin(), "confirmed at {c}");
                assert!(l.confirmed_len(c, lag) > h);
                assert!(l.confirmed_len(c - 1, lag) <= h);
            }
            assert_eq!(h, 7 / interval + 2);
        }
    }

    #[test]
    fn example_tx_at_zero_with_unit_interval() {
        let mut l = ledger(1, 1, 2, InclusionPolicy::MaxDelay);
        l.submit(BtcTxKind::Checkpoint, vec![], PartyId::Environment, 0).unwrap();
        run_until(&mut l, 10);
        let (h, _) = l.location(0).unwrap();
        assert_eq!(l.r_fin(), 3 + 2);
        assert!(l.confirmed_len(3 + 2, 2) > h);
    }

    #[test]
    fn same_slot_reversal_keeps_deadline() {
        let mut l = ledger(2, 1, 1, InclusionPolicy::ReverseSameSlot);
        let a = l.submit(BtcTxKind::Checkpoint, vec![], PartyId::Environment, 3).unwrap();
        let b = l.submit(BtcTxKind::Checkpoint, vec![], PartyId::Environment, 3).unwrap();
        run_until(&mut l, 10);
        let (ha, ia) = l.location(a).unwrap();
        let (hb, ib) = l.location(b).unwrap();
        assert_eq!(ha, hb);
        assert!(ib < ia);
        assert!(confirmation_slot(ha, 1, 2, 1) <= 3 + l.r_fin());
    }

    #[test]
    fn random_policy_preserves_submission_order() {
        let mut l = ledger(2, 2, 2, InclusionPolicy::RandomMonotone);
        let mut ids = Vec::new();
        for s in 0..60u64 {
            if s > 0 {
                l.produce_block(s);
            }
            if s % 3 == 0 {
                ids.push(l.submit(BtcTxKind::Checkpoint, vec![], PartyId::Environment, s).unwrap());
            }
        }
        run_until_from(&mut l, 60, 80);
        let locs: Vec<_> = ids.iter().map(|&i| l.location(i).unwrap()).collect();
        assert!(locs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn oversize_payload_rejected() {
        let mut l = ledger(1, 1, 1, InclusionPolicy::Neutral);
        assert_eq!(
            l.submit(BtcTxKind::Checkpoint, vec![vec![0; 81]], PartyId::Environment, 0),
            Err(BtcError::PayloadTooLarge(81))
        );
        assert!(l.submit(BtcTxKind::Checkpoint, vec![vec![0; 80]], PartyId::Environment, 0).is_ok());
    }

    #[test]
    fn views_are_prefix_comparable_and_monotone() {
        let mut l = ledger(2, 2, 3, InclusionPolicy::Neutral);
        assert_eq!(l.confirmed_len(0, 0), 1);
        run_until(&mut l, 50);
        for r in 0..50 {
            for lag in 0..=3 {
                assert!(l.confirmed_len(r, lag) <= l.confirmed_len(r + 1, lag));
                assert!(l.confirmed_len(r, lag) <= l.confirmed_len(r, 0));
            }
        }
    }

    #[test]
    fn liveness_payload_round_trip() {
        let d = Digest::of(b"tx");
        let p = liveness_payload(&d);
        assert_eq!(p.len(), 36);
        assert_eq!(parse_liveness(&p), Some(d));
        assert_eq!(parse_liveness(&p[1..]), None);
    }
}
