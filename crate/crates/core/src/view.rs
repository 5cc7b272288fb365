//! One party's knowledge of the block tree: which blocks it has data for,
//! which pre-commits it has seen and which blocks it considers finalized.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::config::{quorum, Slot};
use crate::crypto::{Digest, Signature, ValidatorId};
use crate::pos::{BlockKind, BlockStore, QuorumCertificate};

#[derive(Clone, Debug)]
pub struct View {
    known: HashSet<Digest>,
    votes: HashMap<Digest, BTreeSet<ValidatorId>>,
    qc: HashMap<Digest, Slot>,
    final_at: HashMap<Digest, Slot>,
    children: HashMap<Digest, Vec<Digest>>,
    qc_children: HashMap<Digest, Vec<Digest>>,
    conflicts: Vec<(Digest, Digest)>,
    /// Set on every change; owners clear it after recomputing.
    pub changed: bool,
}

impl View {
    pub fn new(genesis: Digest) -> Self {
        let mut v = View {
            known: HashSet::new(),
            votes: HashMap::new(),
            qc: HashMap::new(),
            final_at: HashMap::new(),
            children: HashMap::new(),
            qc_children: HashMap::new(),
            conflicts: Vec::new(),
            changed: true,
        };
        v.known.insert(genesis);
        v.qc.insert(genesis, 0);
        v.final_at.insert(genesis, 0);
        v
    }

    pub fn knows(&self, h: &Digest) -> bool {
        self.known.contains(h)
    }

    pub fn has_qc(&self, h: &Digest) -> bool {
        self.qc.contains_key(h)
    }

    pub fn is_final(&self, h: &Digest) -> bool {
        self.final_at.contains_key(h)
    }

    pub fn final_slot(&self, h: &Digest) -> Option<Slot> {
        self.final_at.get(h).copied()
    }

    /// Finalized children in the order they were finalized.
    pub fn final_children(&self, h: &Digest) -> &[Digest] {
        self.children.get(h).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn voters(&self, h: &Digest) -> BTreeSet<ValidatorId> {
        self.votes.get(h).cloned().unwrap_or_default()
    }

    pub fn has_vote(&self, signer: ValidatorId, h: &Digest) -> bool {
        self.votes.get(h).is_some_and(|s| s.contains(&signer))
    }

    /// Certified sibling pairs found since the last call.
    pub fn take_conflicts(&mut self) -> Vec<(Digest, Digest)> {
        std::mem::take(&mut self.conflicts)
    }

    pub fn learn(&mut self, store: &BlockStore, h: Digest, slot: Slot) {
        if self.known.insert(h) {
            self.changed = true;
            self.check_qc(store, h, slot);
        }
    }

    pub fn add_vote(&mut self, store: &BlockStore, signer: ValidatorId, h: Digest, slot: Slot) {
        if self.votes.entry(h).or_default().insert(signer) && self.known.contains(&h) {
            self.check_qc(store, h, slot);
        }
    }

    /// Treats `h` as final without a quorum of pre-commits, e.g. a block or
    /// bundle the Bitcoin-derived chain vouches for.
    pub fn mark_final(&mut self, store: &BlockStore, h: Digest, slot: Slot) {
        self.known.insert(h);
        if self.final_at.contains_key(&h) {
            return;
        }
        self.qc.entry(h).or_insert(slot);
        let parent = store.block(&h).parent;
        if self.final_at.contains_key(&parent) {
            self.finalize(h, parent, slot);
        } else {
            self.final_at.insert(h, slot);
            self.changed = true;
        }
    }

    fn signers_in_set(&self, store: &BlockStore, h: &Digest) -> (usize, usize) {
        let eff = store.state(h).effective();
        let n = self.votes.get(h).map_or(0, |s| eff.iter().filter(|v| s.contains(v)).count());
        (n, eff.len())
    }

    fn check_qc(&mut self, store: &BlockStore, h: Digest, slot: Slot) {
        if self.qc.contains_key(&h) {
            return;
        }
        let b = store.block(&h);
        if b.kind != BlockKind::Pos {
            return;
        }
        let (got, n) = self.signers_in_set(store, &h);
        if got < quorum(n) {
            return;
        }
        self.qc.insert(h, slot);
        self.changed = true;
        let sibs = self.qc_children.entry(b.parent).or_default();
        for s in sibs.iter() {
            self.conflicts.push((*s, h));
        }
        sibs.push(h);
        if self.final_at.contains_key(&b.parent) {
            self.finalize(h, b.parent, slot);
        }
    }

    fn finalize(&mut self, h: Digest, parent: Digest, slot: Slot) {
        let mut stack = vec![(h, parent)];
        while let Some((h, parent)) = stack.pop() {
            if self.final_at.contains_key(&h) {
                continue;
            }
            self.final_at.insert(h, slot);
            self.children.entry(parent).or_default().push(h);
            self.changed = true;
            if let Some(kids) = self.qc_children.get(&h) {
                stack.extend(kids.iter().rev().map(|k| (*k, h)));
            }
        }
    }

    /// Certificate assembled from the pre-commits this party has seen.
    pub fn qc(&self, store: &BlockStore, h: &Digest) -> Option<QuorumCertificate> {
        if !self.has_qc(h) {
            return None;
        }
        let b = store.block(h);
        let eff = store.state(h).effective();
        let voters = self.voters(h);
        let signers: BTreeSet<_> = eff.iter().copied().filter(|v| voters.contains(v)).collect();
        let sigs = signers.iter().map(|&v| Signature { signer: v, message: *h }).collect();
        Some(QuorumCertificate { block: *h, epoch: b.epoch, signers, sigs })
    }

    pub fn signatures(&self, h: &Digest) -> Vec<Signature> {
        self.voters(h).into_iter().map(|v| Signature { signer: v, message: *h }).collect()
    }
}
