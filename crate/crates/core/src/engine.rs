//! Validator engine: a Tendermint-style height/round loop abstracted to one
//! proposal per round and one pre-commit per height, plus the Bitcoin-side
//! duties (checkpoints, liveness transactions, bundles) of honest nodes.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::btc::{liveness_payload, BtcTxKind};
use crate::checkpoint::{encode_op_return, make_bundle_checkpoint};
use crate::client::{Client, Mode};
use crate::config::{majority, Slot};
use crate::crypto::{Digest, PartyId, ValidatorId};
use crate::net::Payload;
use crate::pos::{proposer_for, BlockKind, PosBlock, PosTx};
use crate::view::View;
use crate::world::Core;

/// How a validator slot is driven this step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Behavior {
    Honest,
    /// Adversarial, but runs the honest rules.
    Follow,
    Silent,
    /// Never includes or pre-commits blocks carrying these user transactions.
    Censor(BTreeSet<u64>),
    /// Follows until its first proposal at or above `height`, where it
    /// proposes two blocks to two halves of the network.
    Equivocate { height: u64 },
}

impl Behavior {
    fn censors(&self, tx: &PosTx) -> bool {
        match (self, tx) {
            (Behavior::Censor(t), PosTx::User(x)) => t.contains(x),
            _ => false,
        }
    }

    fn honest(&self) -> bool {
        *self == Behavior::Honest
    }
}

fn has_leak(b: &PosBlock) -> bool {
    b.txs.iter().any(|t| matches!(t, PosTx::Leak(_)))
}

enum Verdict {
    Accept,
    Defer,
    Reject,
}

#[derive(Clone, Debug)]
struct Leader {
    last: Digest,
    posted: bool,
    next_at: Slot,
}

#[derive(Debug)]
pub struct Validator {
    pub id: ValidatorId,
    pub view: View,
    pub client: Client,
    pub tip: Digest,
    height_start: Slot,
    voted: Option<Digest>,
    proposed_round: Option<u32>,
    proposals: Vec<Digest>,
    deferred: Vec<(Digest, Slot)>,
    pending: Vec<(PosTx, Slot)>,
    bundles: Vec<Digest>,
    bundle_signed: HashSet<Digest>,
    bundle_votes: HashMap<Digest, BTreeSet<ValidatorId>>,
    leader: Option<Leader>,
    liveness_posted: HashMap<PosTx, Slot>,
    last_mode: Mode,
}

impl Validator {
    pub fn new(id: ValidatorId, view: View, client: Client) -> Self {
        let tip = client.cp_tip();
        Validator {
            id,
            view,
            client,
            tip,
            height_start: 0,
            voted: None,
            proposed_round: None,
            proposals: Vec::new(),
            deferred: Vec::new(),
            pending: Vec::new(),
            bundles: Vec::new(),
            bundle_signed: HashSet::new(),
            bundle_votes: HashMap::new(),
            leader: None,
            liveness_posted: HashMap::new(),
            last_mode: Mode::Normal,
        }
    }

    pub fn party(&self) -> PartyId {
        PartyId::Validator(self.id)
    }

    pub fn on_proposal(&mut self, b: Digest) {
        self.proposals.push(b);
    }

    pub fn on_bundle(&mut self, b: Digest) {
        self.bundles.push(b);
    }

    pub fn on_bundle_vote(&mut self, signer: ValidatorId, b: Digest) {
        self.bundle_votes.entry(b).or_default().insert(signer);
    }

    pub fn on_inject(&mut self, tx: PosTx, slot: Slot) {
        self.pending.push((tx, slot));
    }

    /// Next height, and the set that signs it.
    pub fn next_height(&self, core: &Core) -> (u64, Vec<ValidatorId>) {
        let b = core.store.block(&self.tip);
        let epoch = if b.is_epoch_final(core.cfg.epoch_len) { b.epoch + 1 } else { b.epoch };
        (b.height + 1, core.store.child_set(&self.tip, epoch))
    }

    /// The current height has stalled long enough to penalize non-voters.
    fn leak_stall(&self, core: &Core) -> bool {
        core.leak_after.is_some_and(|after| core.slot >= self.height_start + after)
    }

    fn holder(&self, core: &Core) -> PartyId {
        if core.adversaries.contains(&self.id) {
            PartyId::Adversary
        } else {
            self.party()
        }
    }
}

impl Validator {
    /// One slot of work after this slot's deliveries.
    pub fn step(&mut self, core: &mut Core, beh: &Behavior) {
        if *beh == Behavior::Silent {
            return;
        }
        self.sync_tip(core, beh);
        let mode = self.client.mode();
        let entered_freeze = mode == Mode::Frozen && self.last_mode != Mode::Frozen;
        self.last_mode = mode;
        match mode {
            Mode::Rollup => return self.rollup_step(core, beh),
            Mode::Frozen => {
                if entered_freeze && beh.honest() {
                    self.post_tip(core);
                }
                return;
            }
            Mode::Normal => {
                self.leader = None;
                self.bundles.clear();
            }
        }
        let (h, set) = self.next_height(core);
        if !set.contains(&self.id) {
            return;
        }
        if beh.honest() && core.designated(&set) == Some(self.id) {
            self.liveness_duties(core);
        }
        if let Some(b) = self.voted {
            if beh.honest() && self.leak_stall(core) && !self.view.has_qc(&b) && !has_leak(core.store.block(&b)) {
                self.voted = None;
                self.proposed_round = None;
            }
        }
        let round = ((core.slot - self.height_start) / core.cfg.round_timeout()) as u32;
        if proposer_for(&set, h, round) == self.id && self.proposed_round != Some(round) {
            self.proposed_round = Some(round);
            if let Behavior::Equivocate { height } = beh {
                if h >= *height && !core.equivocated {
                    core.equivocate(self.id, self.tip);
                    return;
                }
            }
            let b = match self.voted {
                Some(b) => b,
                None => self.build(core, beh, h, &set),
            };
            core.broadcast(self.party(), Payload::Proposal { block: b, round }, beh.honest());
            self.view.learn(&core.store, b, core.slot);
            if self.voted.is_none() && !self.proposals.contains(&b) {
                self.proposals.push(b);
            }
        }
        self.vote_pass(core, beh);
    }

    /// Moves the tip forward along finalized children, or back onto the
    /// checkpointed chain when that chain no longer contains it.
    fn sync_tip(&mut self, core: &mut Core, beh: &Behavior) {
        let old = self.tip;
        let cpt = self.client.cp_tip();
        let mut tip = old;
        if !core.store.is_ancestor(&cpt, &tip) {
            tip = cpt;
        }
        while let Some(k) = self.view.final_children(&tip).first() {
            tip = *k;
        }
        if tip == old {
            return;
        }
        let anc = core.store.common_ancestor(&old, &tip).expect("shared genesis");
        let seg = core.store.segment(&anc, &tip);
        if beh.honest() {
            for b in &seg {
                core.on_honest_final(*b, self.id, &self.view);
            }
        }
        if anc == old {
            let added: HashSet<PosTx> =
                seg.iter().flat_map(|b| core.store.block(b).txs.iter().copied()).collect();
            self.pending.retain(|(tx, _)| !added.contains(tx));
        } else {
            self.pending = core
                .injected
                .iter()
                .filter(|(tx, _)| !core.in_chain(tx, &tip))
                .copied()
                .collect();
        }
        self.tip = tip;
        self.height_start = core.slot;
        self.voted = None;
        self.proposed_round = None;
        self.deferred.clear();
        let height = core.store.block(&tip).height;
        self.proposals.retain(|p| core.store.block(p).height > height);
    }

    fn build(&mut self, core: &mut Core, beh: &Behavior, h: u64, set: &[ValidatorId]) -> Digest {
        let st = core.store.state(&self.tip).clone();
        let mut txs: Vec<PosTx> = self
            .pending
            .iter()
            .map(|(tx, _)| *tx)
            .filter(|tx| !beh.censors(tx))
            .collect();
        if beh.honest() {
            let accused: BTreeSet<ValidatorId> =
                self.client.slashable().iter().chain(self.client.excluded()).copied().collect();
            for v in accused {
                if !st.slashed.contains(&v) && !st.withdrawn.contains(&v) {
                    txs.push(PosTx::Slash(v));
                }
            }
            for &v in self.client.granted() {
                if st.requested.contains_key(&v) && !st.withdrawn.contains(&v) && !st.slashed.contains(&v) {
                    txs.push(PosTx::Withdraw(v));
                }
            }
            {
                if self.leak_stall(core) {
                    let voted: BTreeSet<ValidatorId> =
                        self.proposals.iter().flat_map(|p| self.view.voters(p)).collect();
                    for &v in set {
                        if v != self.id && !voted.contains(&v) && !st.leaked.contains(&v) {
                            txs.push(PosTx::Leak(v));
                        }
                    }
                }
            }
        }
        let parent = core.store.block(&self.tip).clone();
        debug_assert_eq!(parent.height + 1, h);
        let nonce = core.next_nonce();
        core.insert_block(PosBlock::child(&parent, core.cfg.epoch_len, txs, self.id, nonce))
    }

    fn judge(&self, core: &Core, beh: &Behavior, b: &PosBlock, deferred: bool) -> Verdict {
        if b.txs.iter().any(|tx| beh.censors(tx)) {
            return Verdict::Reject;
        }
        if !beh.honest() {
            return Verdict::Accept;
        }
        if self.leak_stall(core) && !has_leak(b) {
            return Verdict::Reject;
        }
        let mut defer = false;
        for tx in &b.txs {
            match *tx {
                PosTx::Withdraw(v) => {
                    if !deferred {
                        defer = true;
                    } else if !self.client.granted().contains(&v) {
                        return Verdict::Reject;
                    }
                }
                PosTx::Slash(v) if !self.client.slashable().contains(&v) && !self.client.excluded().contains(&v) => {
                    return Verdict::Reject;
                }
                PosTx::Leak(_) if core.leak_after.is_none() => return Verdict::Reject,
                _ => {}
            }
        }
        if defer {
            Verdict::Defer
        } else {
            Verdict::Accept
        }
    }

    fn vote_pass(&mut self, core: &mut Core, beh: &Behavior) {
        if self.voted.is_some() {
            return;
        }
        let due: Vec<Digest> =
            self.deferred.iter().filter(|(_, at)| *at <= core.slot).map(|(b, _)| *b).collect();
        for b in due {
            self.deferred.retain(|(d, _)| *d != b);
            let blk = core.store.block(&b).clone();
            if let Verdict::Accept = self.judge(core, beh, &blk, true) {
                return self.vote(core, beh, b);
            }
        }
        for p in self.proposals.clone() {
            let blk = core.store.block(&p).clone();
            if blk.parent != self.tip || self.deferred.iter().any(|(d, _)| *d == p) {
                continue;
            }
            match self.judge(core, beh, &blk, false) {
                Verdict::Accept => return self.vote(core, beh, p),
                Verdict::Defer => self.deferred.push((p, core.slot + core.cfg.delta)),
                Verdict::Reject => {}
            }
            self.proposals.retain(|x| *x != p);
        }
    }

    fn vote(&mut self, core: &mut Core, beh: &Behavior, b: Digest) {
        let holder = self.holder(core);
        if let Some(sig) = core.sign(holder, self.id, b) {
            self.view.add_vote(&core.store, self.id, b, core.slot);
            core.broadcast(self.party(), Payload::Vote { sig, with_block: true }, beh.honest());
            self.voted = Some(b);
        }
    }
}

impl Validator {
    /// Posts a checkpoint of the current tip unless it is already on the
    /// checkpointed chain.
    fn post_tip(&mut self, core: &mut Core) {
        let tip = self.tip;
        let b = core.store.block(&tip);
        if b.height == 0 || b.kind != BlockKind::Pos || self.client.cp().contains(&tip) {
            return;
        }
        core.post_checkpoint(tip, &self.view, self.party());
    }

    fn liveness_duties(&mut self, core: &mut Core) {
        let retry = core.cfg.t_tm() + core.cfg.r_fin() + 2 * core.cfg.k * core.cfg.btc_interval;
        let mut posted = false;
        for (tx, r) in self.pending.clone() {
            if core.slot < r + core.cfg.t_tm() {
                continue;
            }
            if let Some(&last) = self.liveness_posted.get(&tx) {
                if core.slot < last + retry {
                    continue;
                }
            }
            core.submit_btc(BtcTxKind::Liveness, vec![liveness_payload(&tx.digest())], self.party());
            core.trace.push(core.slot, self.party(), "liveness_posted", serde_json::json!({ "tx": tx }));
            self.liveness_posted.insert(tx, core.slot);
            posted = true;
        }
        if posted {
            self.post_tip(core);
        }
    }

    fn rollup_step(&mut self, core: &mut Core, beh: &Behavior) {
        let Some((epoch, set)) = self.client.rollup_set().map(|(e, s)| (e, s.to_vec())) else { return };
        if !set.contains(&self.id) {
            return;
        }
        let cpt = self.client.cp_tip();
        for b in self.bundles.clone() {
            if self.bundle_signed.contains(&b) {
                continue;
            }
            let blk = core.store.block(&b).clone();
            let parent_ok = blk.parent == cpt || self.bundle_signed.contains(&blk.parent);
            if blk.epoch != epoch || !parent_ok || blk.txs.iter().any(|tx| beh.censors(tx)) {
                continue;
            }
            self.sign_bundle(core, beh, b);
        }
        if !beh.honest() {
            return;
        }
        let excluded = self.client.excluded().clone();
        let leader = set.iter().copied().filter(|v| !excluded.contains(v) && core.is_honest(*v)).min();
        if leader != Some(self.id) {
            return;
        }
        if let Some(l) = self.leader.clone() {
            if !l.posted {
                let votes: Vec<_> = self
                    .bundle_votes
                    .get(&l.last)
                    .map(|s| s.iter().copied().filter(|v| set.contains(v) && !excluded.contains(v)).collect())
                    .unwrap_or_default();
                if votes.len() < majority(set.len()) {
                    return;
                }
                let sigs: Vec<_> = votes.iter().map(|&v| crate::crypto::Signature { signer: v, message: l.last }).collect();
                let bundle = core.store.block(&l.last).clone();
                if let Ok(cp) = make_bundle_checkpoint(&bundle, &sigs, &set) {
                    if let Ok((p1, p2)) = encode_op_return(&cp) {
                        core.submit_btc(BtcTxKind::BundleCheckpoint, vec![p1, p2], self.party());
                    }
                }
                self.leader = Some(Leader { posted: true, next_at: core.slot + core.cfg.btc_interval, ..l });
                return;
            }
            if core.slot < l.next_at {
                return;
            }
        }
        let parent = match &self.leader {
            Some(l) if core.store.is_ancestor(&cpt, &l.last) => l.last,
            _ => cpt,
        };
        let st = core.store.state(&parent).clone();
        let mut txs: Vec<PosTx> = core
            .injected
            .iter()
            .filter(|(tx, r)| *r <= core.slot && !core.in_chain(tx, &parent))
            .map(|(tx, _)| *tx)
            .collect();
        for &v in self.client.slashable().iter().chain(excluded.iter()) {
            let tx = PosTx::Slash(v);
            if !st.slashed.contains(&v) && !st.withdrawn.contains(&v) && !txs.contains(&tx) {
                txs.push(tx);
            }
        }
        for &v in self.client.granted() {
            if st.requested.contains_key(&v) && !st.withdrawn.contains(&v) && !st.slashed.contains(&v) {
                txs.push(PosTx::Withdraw(v));
            }
        }
        if txs.is_empty() {
            return;
        }
        let pb = core.store.block(&parent).clone();
        let nonce = core.next_nonce();
        let b = core.insert_block(PosBlock::bundle(&pb, epoch, txs, self.id, nonce));
        core.broadcast(self.party(), Payload::Bundle { bundle: b }, true);
        self.view.learn(&core.store, b, core.slot);
        self.sign_bundle(core, beh, b);
        self.leader = Some(Leader { last: b, posted: false, next_at: core.slot + core.cfg.btc_interval });
    }

    fn sign_bundle(&mut self, core: &mut Core, beh: &Behavior, b: Digest) {
        let holder = self.holder(core);
        if let Some(sig) = core.sign(holder, self.id, b) {
            self.bundle_signed.insert(b);
            self.bundle_votes.entry(b).or_default().insert(self.id);
            core.broadcast(self.party(), Payload::BundleVote { sig }, beh.honest());
        }
    }
}
