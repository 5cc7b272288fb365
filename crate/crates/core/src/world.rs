//! The run loop. `Core` holds everything parties share (block store, key
//! registry, Bitcoin, network log, trace); `World` owns the parties and
//! drives the slot phases.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::btc::{BtcLedger, BtcTxId, BtcTxKind};
use crate::checkpoint::{encode_op_return, make_checkpoint};
use crate::config::{accountability_threshold, ConfigError, SimConfig, Slot};
use crate::crypto::{Digest, PartyId, Registry, Signature, ValidatorId};
use crate::net::{late_join, party_rng, schedule_broadcast, Message, MsgId, NetworkPolicy, Payload};
use crate::pos::{forensic_identify, BlockStore, FraudEvidence, PosBlock, PosTx};
use crate::trace::Trace;
use crate::view::View;

pub struct Core {
    pub cfg: SimConfig,
    pub slot: Slot,
    pub baseline: bool,
    pub leak_after: Option<u64>,
    pub store: BlockStore,
    pub registry: Registry,
    pub btc: BtcLedger,
    pub trace: Trace,
    /// Injected transactions by digest.
    pub txs: HashMap<Digest, PosTx>,
    pub injected: Vec<(PosTx, Slot)>,
    /// Validators the adversary controls from the start.
    pub adversaries: BTreeSet<ValidatorId>,
    pub equivocated: bool,
    pub(crate) msgs: Vec<Message>,
    pub(crate) inbox: BTreeMap<Slot, Vec<(PartyId, MsgId)>>,
    pub(crate) recipients: Vec<PartyId>,
    tx_blocks: HashMap<PosTx, Vec<Digest>>,
    policy: NetworkPolicy,
    net_rng: ChaCha8Rng,
    nonce: u64,
    posted_cps: HashSet<Digest>,
    posted_fraud: HashSet<(Digest, Digest)>,
    honest_final: HashSet<Digest>,
    /// Validator to the epoch-final block whose finalization handed its key
    /// to the adversary.
    transferred_by: HashMap<ValidatorId, Digest>,
}

impl Core {
    pub(crate) fn new(cfg: SimConfig, baseline: bool, leak_after: Option<u64>, store: BlockStore, registry: Registry, btc: BtcLedger, policy: NetworkPolicy) -> Self {
        let net_rng = party_rng(cfg.seed, PartyId::Environment, "network");
        Core {
            adversaries: cfg.adversaries(),
            cfg,
            slot: 0,
            baseline,
            leak_after,
            store,
            registry,
            btc,
            trace: Trace::new(),
            txs: HashMap::new(),
            injected: Vec::new(),
            equivocated: false,
            msgs: Vec::new(),
            inbox: BTreeMap::new(),
            recipients: Vec::new(),
            tx_blocks: HashMap::new(),
            policy,
            net_rng,
            nonce: 0,
            posted_cps: HashSet::new(),
            posted_fraud: HashSet::new(),
            honest_final: HashSet::new(),
            transferred_by: HashMap::new(),
        }
    }

    pub fn next_nonce(&mut self) -> u64 {
        self.nonce += 1;
        self.nonce
    }

    /// Honest and still holding its own key.
    pub fn is_honest(&self, v: ValidatorId) -> bool {
        !self.adversaries.contains(&v) && self.registry.holder(v) == Some(PartyId::Validator(v))
    }

    /// Lowest-id honest member of `set`; it carries out shared duties.
    pub fn designated(&self, set: &[ValidatorId]) -> Option<ValidatorId> {
        set.iter().copied().filter(|v| self.is_honest(*v)).min()
    }

    pub fn sign(&mut self, holder: PartyId, v: ValidatorId, msg: Digest) -> Option<Signature> {
        let sig = self.registry.sign(holder, v, msg).ok()?;
        self.trace.push(
            self.slot,
            holder,
            "sign",
            json!({ "signer": v, "msg": msg.to_hex(), "holder": holder.to_string() }),
        );
        Some(sig)
    }

    fn log(&mut self, sender: PartyId, payload: Payload, honest: bool) -> MsgId {
        let id = self.msgs.len() as MsgId;
        self.trace.push(
            self.slot,
            sender,
            "msg",
            json!({ "id": id, "kind": payload.kind(), "honest": honest, "sent_at": self.slot }),
        );
        self.msgs.push(Message { id, payload, sender, sent_at: self.slot, honest });
        id
    }

    /// Sends to every party but the sender within Δ, scheduled by the
    /// network policy. Sends happen after the slot's delivery phase, so the
    /// earliest delivery is the next slot.
    pub fn broadcast(&mut self, sender: PartyId, payload: Payload, honest: bool) -> MsgId {
        let id = self.log(sender, payload, honest);
        let to: Vec<PartyId> = self.recipients.iter().copied().filter(|p| *p != sender).collect();
        let plan = schedule_broadcast(self.slot, &to, self.cfg.delta, &self.policy, &mut self.net_rng);
        for (p, at) in plan {
            self.inbox.entry(at.max(self.slot + 1)).or_default().push((p, id));
        }
        id
    }

    /// Adversarial point-to-point delivery at chosen slots.
    pub fn send(&mut self, sender: PartyId, payload: Payload, plan: &[(PartyId, Slot)]) -> MsgId {
        let id = self.log(sender, payload, false);
        for &(p, at) in plan {
            self.inbox.entry(at.max(self.slot + 1)).or_default().push((p, id));
        }
        id
    }

    pub fn insert_block(&mut self, b: PosBlock) -> Digest {
        let detail = json!({
            "hash": b.hash.to_hex(),
            "parent": b.parent.to_hex(),
            "height": b.height,
            "epoch": b.epoch,
            "pos": b.epoch_pos,
            "kind": b.kind,
            "proposer": b.proposer,
            "txs": b.txs,
        });
        let h = self.store.insert(b).expect("blocks are built on stored parents");
        for tx in &self.store.block(&h).txs {
            self.tx_blocks.entry(*tx).or_default().push(h);
        }
        self.trace.push(self.slot, "env", "block", detail);
        h
    }

    pub fn in_chain(&self, tx: &PosTx, tip: &Digest) -> bool {
        self.tx_blocks.get(tx).is_some_and(|bs| bs.iter().any(|b| self.store.is_ancestor(b, tip)))
    }

    pub fn submit_btc(&mut self, kind: BtcTxKind, payloads: Vec<Vec<u8>>, submitter: PartyId) -> Option<BtcTxId> {
        if self.baseline {
            return None;
        }
        let id = self.btc.submit(kind, payloads, submitter, self.slot).ok()?;
        self.trace.push(self.slot, submitter, "btc_submit", json!({ "id": id, "kind": kind }));
        Some(id)
    }

    /// Aggregates the pre-commits `view` holds on `b` into a checkpoint and
    /// submits it, once per block.
    pub fn post_checkpoint(&mut self, b: Digest, view: &View, submitter: PartyId) -> bool {
        if self.baseline || self.posted_cps.contains(&b) {
            return false;
        }
        let set = self.store.signing_set(&b).to_vec();
        let sigs: Vec<Signature> = view.signatures(&b).into_iter().filter(|s| set.contains(&s.signer)).collect();
        let blk = self.store.block(&b).clone();
        let Ok(cp) = make_checkpoint(&blk, &sigs, &set) else { return false };
        let Ok((p1, p2)) = encode_op_return(&cp) else { return false };
        self.posted_cps.insert(b);
        self.submit_btc(BtcTxKind::Checkpoint, vec![p1, p2], submitter);
        true
    }

    pub fn checkpoint_posted(&self, b: &Digest) -> bool {
        self.posted_cps.contains(b)
    }

    /// Submits a fraud proof for two certified conflicting blocks, once per
    /// pair.
    pub fn post_fraud(&mut self, a: Digest, b: Digest, view: &View, submitter: PartyId) {
        if self.baseline {
            return;
        }
        let key = if a < b { (a, b) } else { (b, a) };
        if self.posted_fraud.contains(&key) {
            return;
        }
        let (Some(qa), Some(qb)) = (view.qc(&self.store, &a), view.qc(&self.store, &b)) else { return };
        let Ok(proof) = forensic_identify(&self.store, &qa, &qb) else { return };
        if proof.violators.len() < accountability_threshold(self.store.signing_set(&a).len()) {
            return;
        }
        let Some(ev) = FraudEvidence::from_proof(&self.store, &proof) else { return };
        self.posted_fraud.insert(key);
        self.submit_btc(BtcTxKind::FraudProof, ev.to_payloads(), submitter);
        self.trace.push(
            self.slot,
            submitter,
            "fraud_proof_posted",
            json!({ "a": a.to_hex(), "b": b.to_hex(), "violators": proof.violators }),
        );
    }

    fn honest_for(&self, v: ValidatorId, b: &Digest) -> bool {
        self.is_honest(v) || (!self.adversaries.contains(&v) && self.transferred_by.get(&v) == Some(b))
    }

    /// Hooks run when honest validator `who` first finalizes `b` on its tip.
    pub fn on_honest_final(&mut self, b: Digest, who: ValidatorId, view: &View) {
        let blk = self.store.block(&b).clone();
        let epoch_len = self.cfg.epoch_len;
        if self.honest_final.insert(b) {
            for tx in &blk.txs {
                if let PosTx::Withdraw(v) = tx {
                    self.trace.push(self.slot, PartyId::Validator(who), "withdrawn", json!({ "validator": v, "block": b.to_hex() }));
                }
            }
            if blk.height > 0 && blk.is_epoch_final(epoch_len) {
                let next = self.store.child_set(&b, blk.epoch + 1);
                let leaving: Vec<ValidatorId> =
                    self.store.signing_set(&b).iter().copied().filter(|v| !next.contains(v)).collect();
                for v in leaving {
                    if self.registry.holder(v) == Some(PartyId::Validator(v)) {
                        self.registry.transfer_key(v, PartyId::Adversary, blk.epoch + 1);
                        self.transferred_by.insert(v, b);
                        self.trace.push(self.slot, "adv", "key_transfer", json!({ "validator": v, "epoch": blk.epoch + 1 }));
                    }
                }
            }
        }
        if self.baseline || blk.height == 0 || blk.is_bundle() || !blk.is_epoch_final(epoch_len) {
            return;
        }
        let poster = self.store.signing_set(&b).iter().copied().filter(|v| self.honest_for(*v, &b)).min();
        if poster == Some(who) {
            self.post_checkpoint(b, view, PartyId::Validator(who));
        }
    }
}

use crate::adversary::AttackState;
use crate::client::{Action, Client, Ctx, Finality};
use crate::engine::{Behavior, Validator};
use crate::scenario::{ClientSpec, Scenario, Strategy};

pub struct ClientNode {
    pub spec: ClientSpec,
    pub view: View,
    pub client: Client,
}

pub struct World {
    pub core: Core,
    pub validators: BTreeMap<ValidatorId, Validator>,
    pub clients: Vec<ClientNode>,
    pub scenario: Scenario,
    injections: BTreeMap<Slot, Vec<PosTx>>,
    scheduled: Vec<(Slot, PartyId, Digest)>,
    pub(crate) attack: AttackState,
}

impl World {
    pub fn new(sc: &Scenario) -> Result<Self, ConfigError> {
        sc.cfg.validate()?;
        let cfg = sc.cfg.clone();
        let initial = cfg.initial_set();
        let queue = cfg.queue_ids();
        let store = BlockStore::new(cfg.epoch_len, initial.clone(), queue.clone());
        let g = store.genesis;
        let mut registry = Registry::new(cfg.keys_erased);
        let honest_pool: Vec<ValidatorId> =
            initial.iter().chain(&queue).chain(&sc.extra_honest).copied().collect();
        for &v in &honest_pool {
            let holder = if cfg.is_adversary(v) { PartyId::Adversary } else { PartyId::Validator(v) };
            registry.register_key(v, holder, 0);
        }
        for &a in &sc.attackers {
            if honest_pool.contains(&a) {
                return Err(ConfigError::Invalid(format!("attacker {a} is also a regular validator")));
            }
            registry.register_key(a, PartyId::Adversary, 0);
        }
        let btc_rng = party_rng(cfg.seed, PartyId::Environment, "bitcoin");
        let btc = BtcLedger::new(cfg.btc_interval, cfg.k, cfg.delta, sc.inclusion, btc_rng);
        let mut core = Core::new(cfg.clone(), sc.baseline, sc.leak_after, store, registry, btc, sc.network.clone());
        core.adversaries.extend(sc.attackers.iter().copied());
        let mut validators = BTreeMap::new();
        for &v in &honest_pool {
            let client = Client::new(PartyId::Validator(v), g, 0, Finality::Fast, 0, sc.baseline, cfg.seed);
            validators.insert(v, Validator::new(v, View::new(g), client));
            core.recipients.push(PartyId::Validator(v));
        }
        let mut clients = Vec::new();
        for (i, spec) in sc.clients.iter().enumerate() {
            let p = PartyId::Client(i as u32);
            let client = Client::new(p, g, spec.lag, spec.finality, spec.join, sc.baseline, cfg.seed);
            clients.push(ClientNode { spec: spec.clone(), view: View::new(g), client });
            core.recipients.push(p);
        }
        let mut injections: BTreeMap<Slot, Vec<PosTx>> = BTreeMap::new();
        for inj in &sc.injections {
            injections.entry(inj.slot).or_default().push(inj.tx);
        }
        core.trace.push(
            0,
            "env",
            "config",
            json!({
                "scenario": sc.name,
                "cfg": cfg,
                "horizon": sc.horizon,
                "baseline": sc.baseline,
                "strategy": sc.strategy,
                "adversaries": core.adversaries,
                "clients": sc.clients,
                "r_fin": cfg.r_fin(),
                "t_tm": cfg.t_tm(),
                "t_btc": cfg.t_btc(),
                "t_fin_budget": cfg.t_fin_budget(),
                "rollup_bound": cfg.rollup_liveness_bound(),
                "slow_bound": cfg.slow_liveness_bound(),
                "epoch_bound": cfg.epoch_duration_bound(),
                "genesis": g.to_hex(),
            }),
        );
        Ok(World {
            core,
            validators,
            clients,
            scenario: sc.clone(),
            injections,
            scheduled: Vec::new(),
            attack: AttackState::default(),
        })
    }

    pub fn run(mut self) -> Trace {
        while self.core.slot <= self.scenario.horizon {
            self.step();
        }
        self.core.trace
    }

    fn behavior(&self, v: ValidatorId) -> Behavior {
        if !self.core.adversaries.contains(&v) {
            return Behavior::Honest;
        }
        match &self.scenario.strategy {
            Strategy::Follow | Strategy::PrivateFork { .. } => Behavior::Follow,
            Strategy::Silent | Strategy::LeakAttack { .. } | Strategy::PosteriorCorruption { .. } => Behavior::Silent,
            Strategy::Censor { targets } => Behavior::Censor(targets.iter().copied().collect()),
            Strategy::Equivocate { height } => {
                if self.core.equivocated {
                    Behavior::Silent
                } else {
                    Behavior::Equivocate { height: *height }
                }
            }
        }
    }

    pub fn step(&mut self) {
        let slot = self.core.slot;
        self.deliver(slot);
        if let Some(txs) = self.injections.remove(&slot) {
            for tx in txs {
                let d = tx.digest();
                self.core.txs.insert(d, tx);
                self.core.injected.push((tx, slot));
                for v in self.validators.values_mut() {
                    v.on_inject(tx, slot);
                }
                self.core.trace.push(slot, "env", "tx_injected", json!({ "tx": tx, "digest": d.to_hex() }));
            }
        }
        self.adversary_step();
        let ids: Vec<ValidatorId> = self.validators.keys().copied().collect();
        for id in ids {
            let beh = self.behavior(id);
            let v = self.validators.get_mut(&id).expect("listed");
            v.step(&mut self.core, &beh);
        }
        self.run_scheduled(slot);
        if !self.core.baseline {
            if let Some(b) = self.core.btc.produce_block(slot) {
                let txs: Vec<_> = b.txs.iter().map(|t| json!({ "id": t.id, "kind": t.kind })).collect();
                let detail = json!({ "height": b.height, "txs": txs });
                self.core.trace.push(slot, "btc", "btc_block", detail);
            }
        }
        self.client_phase(slot);
        self.core.slot += 1;
    }
}

enum Side {
    Proposal(Digest),
    Bundle(Digest),
    BundleVote(ValidatorId, Digest),
}

/// Updates `view` with a delivered payload and returns what a validator
/// additionally records.
fn apply(view: &mut View, store: &BlockStore, registry: &Registry, payload: &Payload, slot: Slot) -> Option<Side> {
    match payload {
        Payload::Proposal { block, .. } => {
            view.learn(store, *block, slot);
            Some(Side::Proposal(*block))
        }
        Payload::Vote { sig, with_block } => {
            if registry.verify(sig) {
                if *with_block {
                    view.learn(store, sig.message, slot);
                }
                view.add_vote(store, sig.signer, sig.message, slot);
            }
            None
        }
        Payload::Bundle { bundle } => {
            view.learn(store, *bundle, slot);
            Some(Side::Bundle(*bundle))
        }
        Payload::BundleVote { sig } => registry.verify(sig).then_some(Side::BundleVote(sig.signer, sig.message)),
        Payload::Blocks { blocks } => {
            for b in blocks {
                view.learn(store, *b, slot);
            }
            None
        }
    }
}

impl World {
    fn deliver_to(&mut self, p: PartyId, ids: &[MsgId], slot: Slot) {
        let core = &self.core;
        for &id in ids {
            let payload = &core.msgs[id as usize].payload;
            match p {
                PartyId::Validator(v) => {
                    if let Some(val) = self.validators.get_mut(&v) {
                        match apply(&mut val.view, &core.store, &core.registry, payload, slot) {
                            Some(Side::Proposal(b)) => val.on_proposal(b),
                            Some(Side::Bundle(b)) => val.on_bundle(b),
                            Some(Side::BundleVote(s, b)) => val.on_bundle_vote(s, b),
                            None => {}
                        }
                    }
                }
                PartyId::Client(c) => {
                    if let Some(node) = self.clients.get_mut(c as usize) {
                        apply(&mut node.view, &core.store, &core.registry, payload, slot);
                    }
                }
                _ => {}
            }
        }
    }

    fn deliver(&mut self, slot: Slot) {
        let due = self.core.inbox.remove(&slot).unwrap_or_default();
        let mut grouped: BTreeMap<PartyId, Vec<MsgId>> = BTreeMap::new();
        for (p, id) in due {
            if let PartyId::Client(c) = p {
                if self.clients.get(c as usize).is_none_or(|n| n.spec.join > slot) {
                    continue;
                }
            }
            grouped.entry(p).or_default().push(id);
        }
        for (p, ids) in grouped {
            self.deliver_to(p, &ids, slot);
            self.core.trace.push(slot, p, "deliver", json!({ "ids": ids, "late_join": false }));
        }
        for c in 0..self.clients.len() {
            if slot == 0 || self.clients[c].spec.join != slot {
                continue;
            }
            let ids: Vec<MsgId> =
                late_join(slot, self.core.cfg.delta, &self.core.msgs, true).iter().map(|m| m.id).collect();
            let p = PartyId::Client(c as u32);
            self.deliver_to(p, &ids, slot);
            self.core.trace.push(slot, p, "deliver", json!({ "ids": ids, "late_join": true }));
        }
    }

    fn run_scheduled(&mut self, slot: Slot) {
        let (due, rest): (Vec<_>, Vec<_>) = self.scheduled.drain(..).partition(|(at, _, _)| *at <= slot);
        self.scheduled = rest;
        for (_, p, b) in due {
            let view = match p {
                PartyId::Validator(v) => self.validators.get(&v).map(|x| &x.view),
                PartyId::Client(c) => self.clients.get(c as usize).map(|n| &n.view),
                _ => None,
            };
            if let Some(view) = view {
                if self.core.store.block(&b).height > 0 {
                    self.core.post_checkpoint(b, view, p);
                }
            }
        }
    }

    fn client_phase(&mut self, slot: Slot) {
        let core = &mut self.core;
        for (id, val) in self.validators.iter_mut() {
            let honest = core.is_honest(*id);
            let conflicts = val.view.take_conflicts();
            if honest {
                for &(a, b) in &conflicts {
                    core.post_fraud(a, b, &val.view, val.party());
                }
            }
            let before = val.client.mode();
            {
                let ctx = Ctx { cfg: &core.cfg, store: &core.store, registry: &core.registry, btc: &core.btc, txs: &core.txs, slot };
                val.client.step(&mut val.view, &ctx, &conflicts);
            }
            val.client.take_notes();
            if honest && val.client.mode() != before {
                core.trace.push(slot, val.party(), "mode_change", json!({ "mode": val.client.mode() }));
            }
            for a in val.client.take_actions() {
                let Action::PostCheckpoint { block, at } = a;
                if honest {
                    self.scheduled.push((at, val.party(), block));
                }
            }
        }
        for (i, node) in self.clients.iter_mut().enumerate() {
            if node.spec.join > slot {
                continue;
            }
            let p = PartyId::Client(i as u32);
            let conflicts = node.view.take_conflicts();
            for &(a, b) in &conflicts {
                core.post_fraud(a, b, &node.view, p);
            }
            {
                let ctx = Ctx { cfg: &core.cfg, store: &core.store, registry: &core.registry, btc: &core.btc, txs: &core.txs, slot };
                node.client.step(&mut node.view, &ctx, &conflicts);
            }
            for (kind, detail) in node.client.take_notes() {
                core.trace.push(slot, p, kind, detail);
            }
            for a in node.client.take_actions() {
                let Action::PostCheckpoint { block, at } = a;
                self.scheduled.push((at, p, block));
            }
        }
    }
}

/// Runs a scenario to its horizon and returns the trace.
pub fn run(sc: &Scenario) -> Result<Trace, ConfigError> {
    Ok(World::new(sc)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{self, Params};

    fn honest() -> Scenario {
        scenario::build("honest", &Params { seed: 2, ..Default::default() }).unwrap()
    }

    #[test]
    fn trace_opens_with_config_and_is_slot_ordered() {
        let sc = honest();
        let t = run(&sc).unwrap();
        let first = &t.events[0];
        assert_eq!((first.slot, first.kind.as_str()), (0, "config"));
        assert_eq!(first.detail["scenario"], "honest");
        assert_eq!(first.detail["r_fin"], sc.cfg.r_fin());
        assert!(t.events.windows(2).all(|w| w[0].slot <= w[1].slot));
        assert!(t.events.iter().all(|e| e.slot <= sc.horizon));
    }

    #[test]
    fn runs_are_deterministic_per_seed() {
        let sc = honest();
        assert_eq!(run(&sc).unwrap().to_ndjson(), run(&sc).unwrap().to_ndjson());
        let mut other = sc.clone();
        other.cfg.seed = 3;
        assert_ne!(run(&sc).unwrap().to_ndjson(), run(&other).unwrap().to_ndjson());
    }

    #[test]
    fn attacker_overlapping_validator_is_rejected() {
        let mut sc = honest();
        sc.attackers = vec![ValidatorId(0)];
        assert!(matches!(World::new(&sc), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut sc = honest();
        sc.cfg.n = 0;
        assert!(run(&sc).is_err());
    }

    #[test]
    fn baseline_never_touches_bitcoin() {
        let mut sc = honest();
        sc.baseline = true;
        let t = run(&sc).unwrap();
        assert_eq!(t.of_kind("btc_submit").count(), 0);
        assert!(t.of_kind("l_out").count() > 0);
    }
}
