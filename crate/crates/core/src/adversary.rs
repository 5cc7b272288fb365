//! Coordinated adversary actions that go beyond per-validator behaviour:
//! equivocation, private forks and long-range attacks on late joiners.

use serde_json::json;

use crate::btc::BtcTxKind;
use crate::checkpoint::{encode_op_return, make_checkpoint};
use crate::config::Slot;
use crate::crypto::{Digest, PartyId, Signature, ValidatorId};
use crate::net::Payload;
use crate::pos::{PosBlock, PosTx};
use crate::scenario::Strategy;
use crate::world::{Core, World};

#[derive(Debug, Default)]
pub struct AttackState {
    fork: Vec<Digest>,
    sigs: Vec<Signature>,
    built: bool,
    revealed: bool,
}

impl Core {
    /// Signs `b` with every adversary-held key of its effective set.
    fn adversary_sign(&mut self, b: Digest) -> Vec<Signature> {
        let set = self.store.state(&b).effective();
        let held: Vec<ValidatorId> =
            set.into_iter().filter(|v| self.registry.holder(*v) == Some(PartyId::Adversary)).collect();
        held.into_iter().filter_map(|v| self.sign(PartyId::Adversary, v, b)).collect()
    }

    fn adversary_checkpoint(&mut self, b: Digest, sigs: &[Signature]) {
        let set = self.store.signing_set(&b).to_vec();
        let mine: Vec<Signature> = sigs.iter().copied().filter(|s| s.message == b && set.contains(&s.signer)).collect();
        let blk = self.store.block(&b).clone();
        if let Ok(cp) = make_checkpoint(&blk, &mine, &set) {
            if let Ok((p1, p2)) = encode_op_return(&cp) {
                self.submit_btc(BtcTxKind::Checkpoint, vec![p1, p2], PartyId::Adversary);
            }
        }
    }

    /// Proposes two children of `tip` to two halves of the honest parties
    /// and pre-commits both with every adversarial key.
    pub fn equivocate(&mut self, proposer: ValidatorId, tip: Digest) {
        let parent = self.store.block(&tip).clone();
        let epoch_len = self.cfg.epoch_len;
        let na = self.next_nonce();
        let a = self.insert_block(PosBlock::child(&parent, epoch_len, vec![], proposer, na));
        let nb = self.next_nonce();
        let b = self.insert_block(PosBlock::child(&parent, epoch_len, vec![], proposer, nb));
        let set = self.store.signing_set(&a).to_vec();
        let honest: Vec<PartyId> = self
            .recipients
            .iter()
            .copied()
            .filter(|p| match p {
                PartyId::Validator(v) => set.contains(v) && self.is_honest(*v),
                _ => false,
            })
            .collect();
        let half = honest.len().div_ceil(2);
        let clients: Vec<PartyId> =
            self.recipients.iter().copied().filter(|p| matches!(p, PartyId::Client(_))).collect();
        let chalf = clients.len().div_ceil(2);
        let mut to_a: Vec<PartyId> = honest[..half].to_vec();
        to_a.extend_from_slice(&clients[..chalf]);
        let mut to_b: Vec<PartyId> = honest[half..].to_vec();
        to_b.extend_from_slice(&clients[chalf..]);
        let others: Vec<PartyId> = self
            .recipients
            .iter()
            .copied()
            .filter(|p| !to_a.contains(p) && !to_b.contains(p))
            .collect();
        to_a.extend(others);
        let now = self.slot;
        let plan_a: Vec<_> = to_a.iter().map(|p| (*p, now + 1)).collect();
        let plan_b: Vec<_> = to_b.iter().map(|p| (*p, now + 1)).collect();
        self.send(PartyId::Adversary, Payload::Proposal { block: a, round: 0 }, &plan_a);
        self.send(PartyId::Adversary, Payload::Proposal { block: b, round: 0 }, &plan_b);
        let everyone: Vec<_> = self.recipients.iter().map(|p| (*p, now + 2)).collect();
        for h in [a, b] {
            for sig in self.adversary_sign(h) {
                self.send(PartyId::Adversary, Payload::Vote { sig, with_block: true }, &everyone);
            }
        }
        self.equivocated = true;
        self.trace.push(now, PartyId::Adversary, "equivocation", json!({ "a": a.to_hex(), "b": b.to_hex() }));
    }

    /// Builds a chain of `len` blocks on `from`, signing each with the
    /// adversary's keys.
    fn build_chain(&mut self, from: Digest, len: u64, mut txs_at: impl FnMut(u64) -> Vec<PosTx>) -> (Vec<Digest>, Vec<Signature>) {
        let mut cur = from;
        let mut chain = Vec::new();
        let mut sigs = Vec::new();
        for _ in 0..len {
            let p = self.store.block(&cur).clone();
            let epoch = if p.is_epoch_final(self.cfg.epoch_len) { p.epoch + 1 } else { p.epoch };
            let set = self.store.child_set(&cur, epoch);
            let proposer = set[((p.height) as usize) % set.len()];
            let nonce = self.next_nonce();
            let txs = txs_at(p.height + 1);
            let b = self.insert_block(PosBlock::child(&p, self.cfg.epoch_len, txs, proposer, nonce));
            sigs.extend(self.adversary_sign(b));
            chain.push(b);
            cur = b;
        }
        (chain, sigs)
    }

    /// Delivers a chain and its pre-commits to `to` at `at`.
    fn reveal(&mut self, chain: &[Digest], sigs: &[Signature], to: &[PartyId], at: Slot) {
        let plan: Vec<_> = to.iter().map(|p| (*p, at)).collect();
        self.send(PartyId::Adversary, Payload::Blocks { blocks: chain.to_vec() }, &plan);
        for sig in sigs {
            self.send(PartyId::Adversary, Payload::Vote { sig: *sig, with_block: false }, &plan);
        }
    }
}

impl World {
    pub(crate) fn adversary_step(&mut self) {
        match self.scenario.strategy.clone() {
            Strategy::PrivateFork { epoch, reveal_at } => self.private_fork(epoch, reveal_at),
            Strategy::PosteriorCorruption { victim } => self.long_range(victim, false),
            Strategy::LeakAttack { victim } => self.long_range(victim, true),
            _ => {}
        }
    }

    fn canonical_height(&self) -> u64 {
        self.validators.values().map(|v| self.core.store.block(&v.tip).height).max().unwrap_or(0)
    }

    fn private_fork(&mut self, epoch: u64, reveal_at: Slot) {
        let slot = self.core.slot;
        if !self.attack.built {
            let epoch_len = self.core.cfg.epoch_len;
            let base = self
                .validators
                .values()
                .filter(|v| self.core.adversaries.contains(&v.id))
                .map(|v| v.tip)
                .find(|t| {
                    let b = self.core.store.block(t);
                    b.is_epoch_final(epoch_len) && b.epoch + 1 == epoch
                });
            let Some(base) = base else { return };
            if self.core.store.block(&base).height > 0 && !self.core.checkpoint_posted(&base) {
                return;
            }
            let (chain, sigs) = self.core.build_chain(base, epoch_len, |h| vec![PosTx::User(1 << 32 | h)]);
            let last = *chain.last().expect("epoch_len >= 1");
            self.core.adversary_checkpoint(last, &sigs);
            self.core.trace.push(slot, PartyId::Adversary, "private_fork", json!({ "base": base.to_hex(), "tip": last.to_hex() }));
            self.attack = AttackState { fork: chain, sigs, built: true, revealed: false };
        }
        if self.attack.built && !self.attack.revealed && slot >= reveal_at {
            let to = self.core.recipients.clone();
            let (chain, sigs) = (self.attack.fork.clone(), self.attack.sigs.clone());
            self.core.reveal(&chain, &sigs, &to, slot + 1);
            self.attack.revealed = true;
        }
    }

    /// Shows the victim a chain from genesis when it joins. Without `leak`
    /// the chain replaces the initial set by adversary-held stake and is
    /// longer than the canonical one; with `leak` it leaks the honest
    /// validators and has the same length.
    fn long_range(&mut self, victim: u32, leak: bool) {
        let Some(node) = self.clients.get(victim as usize) else { return };
        let join = node.spec.join;
        if self.attack.built || join == 0 || self.core.slot + 1 != join {
            return;
        }
        self.attack.built = true;
        let slot = self.core.slot;
        let initial = self.core.cfg.initial_set();
        let g = self.core.store.genesis;
        let epoch_len = self.core.cfg.epoch_len;
        let (chain, sigs) = if leak {
            let honest: Vec<ValidatorId> = initial.iter().copied().filter(|v| !self.core.adversaries.contains(v)).collect();
            let len = self.canonical_height();
            self.core.build_chain(g, len, |h| if h == 1 { honest.iter().map(|v| PosTx::Leak(*v)).collect() } else { vec![] })
        } else {
            let held = initial.iter().all(|v| self.core.registry.holder(*v) == Some(PartyId::Adversary));
            if !held {
                self.core.trace.push(slot, PartyId::Adversary, "attack_skipped", json!({ "reason": "keys not held" }));
                return;
            }
            let stake = self.scenario.attackers.clone();
            let len = self.canonical_height() + 3;
            self.core.build_chain(g, len, |h| {
                if h == 1 {
                    stake.iter().map(|v| PosTx::Stake(*v)).chain(initial.iter().map(|v| PosTx::WithdrawalRequest(*v))).collect()
                } else if h == epoch_len + 1 {
                    initial.iter().map(|v| PosTx::Withdraw(*v)).collect()
                } else {
                    vec![]
                }
            })
        };
        if !self.core.baseline {
            for b in &chain {
                if self.core.store.block(b).is_epoch_final(epoch_len) {
                    self.core.adversary_checkpoint(*b, &sigs);
                }
            }
        }
        let tip = *chain.last().unwrap_or(&g);
        self.core.trace.push(slot, PartyId::Adversary, "long_range", json!({ "victim": victim, "tip": tip.to_hex(), "len": chain.len() }));
        self.core.reveal(&chain, &sigs, &[PartyId::Client(victim)], join);
    }
}
