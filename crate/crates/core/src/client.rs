//! Client state machine: reads the confirmed Bitcoin chain, maintains the
//! checkpointed chain CP and the output chain L, switches between normal,
//! frozen and rollup modes, and tracks slashable validators and withdrawal
//! grants. With `baseline` set it runs plain accountable BFT instead.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::btc::{parse_liveness, BtcLedger, BtcTx, BtcTxKind};
use crate::checkpoint::{bundle_checkpoint_valid, checkpoint_valid, decode_op_return, expected_epoch, Checkpoint};
use crate::config::{accountability_threshold, quorum, SimConfig, Slot};
use crate::crypto::{Digest, PartyId, Registry, ValidatorId};
use crate::pos::{forensic_identify, same_active_set, BlockKind, BlockStore, FraudEvidence, PosTx};
use crate::view::View;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Normal,
    Frozen,
    Rollup,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Finality {
    Fast,
    Slow,
}

/// Shared, read-only world data a client consults in one step.
pub struct Ctx<'a> {
    pub cfg: &'a SimConfig,
    pub store: &'a BlockStore,
    pub registry: &'a Registry,
    pub btc: &'a BtcLedger,
    /// Transactions referenced by liveness payloads, by digest.
    pub txs: &'a HashMap<Digest, PosTx>,
    pub slot: Slot,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    /// Post a checkpoint for `block` at slot `at`.
    PostCheckpoint { block: Digest, at: Slot },
}

#[derive(Clone, Debug)]
struct LivenessItem {
    tx: Digest,
    b: u64,
    done: bool,
}

#[derive(Clone, Debug)]
struct CpRecord {
    cp: Checkpoint,
}

#[derive(Clone, Debug)]
struct Rollup {
    b: u64,
    epoch: u64,
    set: Vec<ValidatorId>,
}

enum Flow {
    Next,
    Wait,
    Stall(Digest),
}

enum Path {
    Extends(Vec<Digest>),
    Conflicts,
    Unknown,
}

#[derive(Clone, Debug)]
pub struct Client {
    pub party: PartyId,
    pub lag: u64,
    pub finality: Finality,
    pub join: Slot,
    pub baseline: bool,
    c_len: u64,
    confirmed_at: Vec<Slot>,
    cursor: (u64, usize),
    recorded: Option<(u64, usize)>,
    /// Next transaction to scan for evidence once stalled.
    scan: (u64, usize),
    seq: usize,
    stalled: bool,
    l_locked: bool,
    cp: Vec<Digest>,
    /// (height of the CP tip after an extension, Bitcoin height of the
    /// checkpoint that caused it)
    anchors: Vec<(u64, u64)>,
    excluded: BTreeSet<ValidatorId>,
    accused: BTreeSet<ValidatorId>,
    implicated: BTreeSet<ValidatorId>,
    slashable: BTreeSet<ValidatorId>,
    cps: Vec<CpRecord>,
    open_pairs: Vec<(usize, usize)>,
    liveness: Vec<LivenessItem>,
    frozen: BTreeSet<usize>,
    mode: Mode,
    rollup: Option<Rollup>,
    l: Digest,
    granted: BTreeSet<ValidatorId>,
    judged: HashSet<(Digest, Digest)>,
    notes: Vec<(&'static str, Value)>,
    actions: Vec<Action>,
    seed: u64,
}

impl Client {
    pub fn new(party: PartyId, genesis: Digest, lag: u64, finality: Finality, join: Slot, baseline: bool, seed: u64) -> Self {
        Client {
            party,
            lag,
            finality,
            join,
            baseline,
            c_len: 0,
            confirmed_at: Vec::new(),
            cursor: (0, 0),
            recorded: None,
            scan: (0, 0),
            seq: 0,
            stalled: false,
            l_locked: false,
            cp: vec![genesis],
            anchors: Vec::new(),
            excluded: BTreeSet::new(),
            accused: BTreeSet::new(),
            implicated: BTreeSet::new(),
            slashable: BTreeSet::new(),
            cps: Vec::new(),
            open_pairs: Vec::new(),
            liveness: Vec::new(),
            frozen: BTreeSet::new(),
            mode: Mode::Normal,
            rollup: None,
            l: genesis,
            granted: BTreeSet::new(),
            judged: HashSet::new(),
            notes: Vec::new(),
            actions: Vec::new(),
            seed,
        }
    }

    pub fn cp_tip(&self) -> Digest {
        *self.cp.last().expect("CP holds genesis")
    }

    pub fn cp(&self) -> &[Digest] {
        &self.cp
    }

    pub fn l_tip(&self) -> Digest {
        self.l
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn stalled(&self) -> bool {
        self.stalled
    }

    pub fn slashable(&self) -> &BTreeSet<ValidatorId> {
        &self.slashable
    }

    /// Fraud-proof violators; their signatures no longer count.
    pub fn excluded(&self) -> &BTreeSet<ValidatorId> {
        &self.excluded
    }

    pub fn granted(&self) -> &BTreeSet<ValidatorId> {
        &self.granted
    }

    pub fn confirmed_len(&self) -> u64 {
        self.c_len
    }

    /// Epoch and signing set for bundles while in rollup mode.
    pub fn rollup_set(&self) -> Option<(u64, &[ValidatorId])> {
        self.rollup.as_ref().map(|r| (r.epoch, r.set.as_slice()))
    }

    pub fn take_notes(&mut self) -> Vec<(&'static str, Value)> {
        std::mem::take(&mut self.notes)
    }

    pub fn take_actions(&mut self) -> Vec<Action> {
        std::mem::take(&mut self.actions)
    }

    /// Validators whose withdrawal has finalized on this client's output.
    pub fn withdrawn(&self, store: &BlockStore) -> BTreeSet<ValidatorId> {
        store.state(&self.l).withdrawn.clone()
    }

    /// One step at `ctx.slot`. `conflicts` are certified sibling pairs the
    /// owner's view reported this slot.
    pub fn step(&mut self, view: &mut View, ctx: &Ctx, conflicts: &[(Digest, Digest)]) {
        if ctx.slot < self.join {
            return;
        }
        let len = ctx.btc.confirmed_len(ctx.slot, self.lag);
        let grew = len > self.c_len;
        if grew {
            self.confirmed_at.resize(len as usize, ctx.slot);
            self.c_len = len;
            self.notes.push(("btc_view", json!({ "len": len })));
        }
        if self.baseline {
            self.update_l_baseline(view, ctx);
            self.local_forensics(view, ctx, conflicts);
            self.update_grants_baseline(view, ctx);
            view.changed = false;
            return;
        }
        if !grew && !view.changed && self.open_pairs.is_empty() && !self.waiting() {
            return;
        }
        if self.stalled {
            self.scan_evidence(ctx);
        } else {
            self.process(view, ctx);
        }
        self.judge_pairs(view, ctx);
        self.update_l(view, ctx);
        self.update_grants(ctx);
        view.changed = false;
    }

    fn waiting(&self) -> bool {
        !self.stalled && self.cursor.0 < self.c_len
    }

    fn process(&mut self, view: &mut View, ctx: &Ctx) {
        let blocks = ctx.btc.blocks();
        while self.cursor.0 < self.c_len {
            let h = self.cursor.0;
            let txs = &blocks[h as usize].txs;
            while self.cursor.1 < txs.len() {
                match self.handle(&txs[self.cursor.1], h, view, ctx) {
                    Flow::Next => self.cursor.1 += 1,
                    Flow::Wait => return,
                    Flow::Stall(target) => {
                        self.emergency_break(target, ctx);
                        return;
                    }
                }
            }
            self.depth_triggers(h, ctx);
            self.cursor = (h + 1, 0);
        }
    }

    /// A stalled client no longer extends CP but still collects fraud proofs
    /// and checkpoints as evidence.
    fn scan_evidence(&mut self, ctx: &Ctx) {
        let blocks = ctx.btc.blocks();
        while self.scan.0 < self.c_len {
            let txs = &blocks[self.scan.0 as usize].txs;
            for tx in txs.iter().skip(self.scan.1) {
                match tx.kind {
                    BtcTxKind::Checkpoint => {
                        if let Some(cp) = decode(tx, ctx.cfg.n) {
                            self.record(cp);
                        }
                    }
                    BtcTxKind::FraudProof => self.fraud_proof(tx, ctx),
                    _ => {}
                }
            }
            self.scan = (self.scan.0 + 1, 0);
        }
    }

    fn handle(&mut self, tx: &BtcTx, h: u64, view: &mut View, ctx: &Ctx) -> Flow {
        let first = self.recorded != Some((h, self.cursor.1));
        self.recorded = Some((h, self.cursor.1));
        match tx.kind {
            BtcTxKind::Checkpoint => {
                let Some(cp) = decode(tx, ctx.cfg.n) else { return Flow::Next };
                if first {
                    self.seq += 1;
                    self.record(cp.clone());
                }
                if self.mode == Mode::Rollup {
                    return Flow::Next;
                }
                self.normal_checkpoint(&cp, h, view, ctx)
            }
            BtcTxKind::BundleCheckpoint => {
                if self.mode != Mode::Rollup {
                    return Flow::Next;
                }
                let Some(cp) = decode(tx, ctx.cfg.n) else { return Flow::Next };
                self.bundle_checkpoint(&cp, h, view, ctx)
            }
            BtcTxKind::FraudProof => {
                if first {
                    self.fraud_proof(tx, ctx);
                }
                Flow::Next
            }
            BtcTxKind::Liveness => {
                if first {
                    if let Some(d) = tx.payloads.first().and_then(|p| parse_liveness(p)) {
                        self.liveness.push(LivenessItem { tx: d, b: h, done: false });
                    }
                }
                Flow::Next
            }
        }
    }
}

fn decode(tx: &BtcTx, n: usize) -> Option<Checkpoint> {
    match tx.payloads.as_slice() {
        [p1, p2] => decode_op_return(p1, p2, n).ok(),
        _ => None,
    }
}

impl Client {
    /// Active set that signs the next CP block, and the epoch it must carry.
    fn next_set(&self, store: &BlockStore) -> (u64, Vec<ValidatorId>) {
        let tip = self.cp_tip();
        let b = store.block(&tip);
        let e = expected_epoch(&b.header(), store.epoch_len);
        let set = if b.is_epoch_final(store.epoch_len) {
            store.child_set(&tip, e)
        } else {
            store.signing_set(&tip).to_vec()
        };
        (e, set)
    }

    fn path(&self, view: &View, store: &BlockStore, target: Digest) -> Path {
        let tip = self.cp_tip();
        let stop = store.block(&tip).height;
        let mut cur = target;
        let mut out = Vec::new();
        loop {
            if !view.knows(&cur) {
                return Path::Unknown;
            }
            let b = store.block(&cur);
            if b.height <= stop {
                break;
            }
            out.push(cur);
            cur = b.parent;
        }
        if cur == tip && !out.is_empty() {
            out.reverse();
            Path::Extends(out)
        } else {
            Path::Conflicts
        }
    }

    fn normal_checkpoint(&mut self, cp: &Checkpoint, h: u64, view: &mut View, ctx: &Ctx) -> Flow {
        let (e, set) = self.next_set(ctx.store);
        if !checkpoint_valid(cp, e, &set, &self.excluded, ctx.registry) {
            return Flow::Next;
        }
        let target = cp.block_hash;
        let unavailable = match self.path(view, ctx.store, target) {
            Path::Conflicts => return Flow::Next,
            Path::Unknown => true,
            Path::Extends(path) => {
                let last = ctx.store.block(&target);
                if last.epoch != e || last.kind != BlockKind::Pos {
                    return Flow::Next;
                }
                // the checkpoint's own signatures certify the target
                if path[..path.len() - 1].iter().all(|b| view.has_qc(b)) {
                    self.extend(path, h, view, ctx);
                    return Flow::Next;
                }
                true
            }
        };
        debug_assert!(unavailable);
        if ctx.slot >= self.confirmed_at[h as usize] + ctx.cfg.delta {
            Flow::Stall(target)
        } else {
            Flow::Wait
        }
    }

    fn extend(&mut self, path: Vec<Digest>, h: u64, view: &mut View, ctx: &Ctx) {
        for b in path {
            view.mark_final(ctx.store, b, ctx.slot);
            self.cp.push(b);
        }
        let tip = self.cp_tip();
        let height = ctx.store.block(&tip).height;
        self.anchors.push((height, h));
        self.notes.push(("cp", json!({ "tip": tip.to_hex(), "height": height, "btc_height": h })));
        let resolved: Vec<usize> = self
            .frozen
            .iter()
            .copied()
            .filter(|&i| self.in_cp(&self.liveness[i].tx, ctx))
            .collect();
        for i in resolved {
            self.frozen.remove(&i);
            self.liveness[i].done = true;
        }
        if self.mode == Mode::Frozen && self.frozen.is_empty() {
            self.set_mode(Mode::Normal, h);
        }
    }

    fn in_cp(&self, tx: &Digest, ctx: &Ctx) -> bool {
        match ctx.txs.get(tx) {
            Some(t) => ctx.store.chain_contains_tx(&self.cp_tip(), t),
            None => false,
        }
    }

    fn set_mode(&mut self, mode: Mode, btc_height: u64) {
        if self.mode != mode {
            self.mode = mode;
            self.notes.push(("mode_change", json!({ "mode": mode, "btc_height": btc_height })));
        }
    }

    fn emergency_break(&mut self, target: Digest, ctx: &Ctx) {
        self.stalled = true;
        self.scan = (self.cursor.0, self.cursor.1 + 1);
        let tip = self.cp_tip();
        self.set_l(tip, ctx.store);
        self.l_locked = true;
        self.notes.push((
            "emergency_break",
            json!({ "index": self.seq, "block": target.to_hex(), "cp_tip": tip.to_hex(), "l_tip": self.l.to_hex() }),
        ));
        self.actions.push(Action::PostCheckpoint { block: self.l, at: ctx.slot + 2 * ctx.cfg.delta });
    }

    fn bundle_checkpoint(&mut self, cp: &Checkpoint, h: u64, view: &mut View, ctx: &Ctx) -> Flow {
        let Some(r) = &self.rollup else { return Flow::Next };
        if !bundle_checkpoint_valid(cp, r.epoch, &r.set, &self.excluded, ctx.registry) {
            return Flow::Next;
        }
        let target = cp.block_hash;
        if !view.knows(&target) {
            return Flow::Wait;
        }
        let b = ctx.store.block(&target);
        if b.kind == BlockKind::Bundle && b.parent == self.cp_tip() && b.epoch == r.epoch {
            self.notes.push(("bundle_appended", json!({ "bundle": target.to_hex(), "btc_height": h })));
            self.extend(vec![target], h, view, ctx);
        }
        Flow::Next
    }

    fn fraud_proof(&mut self, tx: &BtcTx, ctx: &Ctx) {
        let Some(ev) = FraudEvidence::from_payloads(&tx.payloads) else { return };
        let Some(violators) = ev.verify(ctx.cfg.n, ctx.cfg.epoch_len, ctx.registry) else { return };
        self.excluded.extend(violators.iter().copied());
        self.accused.extend(violators.iter().copied());
        self.add_slashable(violators, "fraud_proof", ctx.store);
    }

    fn add_slashable(&mut self, vs: BTreeSet<ValidatorId>, source: &str, store: &BlockStore) {
        let withdrawn = self.withdrawn(store);
        let new: Vec<ValidatorId> = vs
            .into_iter()
            .filter(|v| !withdrawn.contains(v) && !self.slashable.contains(v))
            .collect();
        if new.is_empty() {
            return;
        }
        self.slashable.extend(new.iter().copied());
        self.notes.push(("slashable_added", json!({ "validators": new, "source": source })));
    }

    fn record(&mut self, cp: Checkpoint) {
        let i = self.cps.len();
        for (j, r) in self.cps.iter().enumerate() {
            if r.cp.epoch == cp.epoch && r.cp.block_hash != cp.block_hash {
                self.open_pairs.push((j, i));
            }
        }
        self.cps.push(CpRecord { cp });
    }

    fn certified_signers(&self, cp: &Checkpoint, store: &BlockStore, registry: &Registry) -> BTreeSet<ValidatorId> {
        let set = store.signing_set(&cp.block_hash);
        if cp.bitmap.len() != set.len() {
            return BTreeSet::new();
        }
        cp.bitmap
            .members(set)
            .into_iter()
            .filter(|v| registry.has_signature(*v, cp.block_hash))
            .collect()
    }

    /// Decides checkpoint pairs of one epoch once both blocks are known.
    /// Undecided pairs still implicate their common signers for withdrawal.
    fn judge_pairs(&mut self, view: &View, ctx: &Ctx) {
        let mut implicated = BTreeSet::new();
        let mut still_open = Vec::new();
        let pairs = std::mem::take(&mut self.open_pairs);
        for (i, j) in pairs {
            let (a, b) = (&self.cps[i].cp, &self.cps[j].cp);
            let (ka, kb) = (view.knows(&a.block_hash), view.knows(&b.block_hash));
            if ka && kb {
                if let Some(vs) = self.conflicting_checkpoints(a, b, ctx) {
                    self.accused.extend(vs.iter().copied());
                    self.add_slashable(vs, "conflicting_checkpoints", ctx.store);
                }
                continue;
            }
            let known = if ka { Some(a.block_hash) } else if kb { Some(b.block_hash) } else { None };
            if let Some(k) = known {
                let set = ctx.store.signing_set(&k);
                if a.bitmap.len() == set.len() && b.bitmap.len() == set.len() {
                    let sa = a.bitmap.members(set);
                    implicated.extend(sa.intersection(&b.bitmap.members(set)).copied());
                }
            }
            still_open.push((i, j));
        }
        self.open_pairs = still_open;
        self.implicated = implicated;
    }

    fn conflicting_checkpoints(&self, a: &Checkpoint, b: &Checkpoint, ctx: &Ctx) -> Option<BTreeSet<ValidatorId>> {
        let store = ctx.store;
        let (x, y) = (store.block(&a.block_hash), store.block(&b.block_hash));
        if !store.conflicting(&x.hash, &y.hash) {
            return None;
        }
        let anc = store.common_ancestor(&x.hash, &y.hash)?;
        if !same_active_set(&x.header(), &y.header(), &store.block(&anc).header(), store.epoch_len) {
            return None;
        }
        let q = quorum(ctx.cfg.n);
        let sa = self.certified_signers(a, store, ctx.registry);
        let sb = self.certified_signers(b, store, ctx.registry);
        if sa.len() < q || sb.len() < q {
            return None;
        }
        let inter: BTreeSet<_> = sa.intersection(&sb).copied().collect();
        (inter.len() >= accountability_threshold(ctx.cfg.n)).then_some(inter)
    }

    fn depth_triggers(&mut self, h: u64, ctx: &Ctx) {
        let k = ctx.cfg.k;
        for i in 0..self.liveness.len() {
            let it = &self.liveness[i];
            if it.done || (h != it.b + k && h != it.b + 2 * k) {
                continue;
            }
            if self.rollup.is_some() {
                if h == it.b + 2 * k {
                    self.liveness[i].done = true;
                }
                continue;
            }
            if self.in_cp(&it.tx, ctx) {
                self.liveness[i].done = true;
                self.frozen.remove(&i);
                continue;
            }
            if h == it.b + k {
                self.frozen.insert(i);
                if self.mode == Mode::Normal {
                    self.set_mode(Mode::Frozen, h);
                }
            } else {
                self.liveness[i].done = true;
                let b = self.liveness[i].b;
                self.enter_rollup(b, h, ctx);
            }
        }
        if let Some(r) = &self.rollup {
            if h == r.b + ctx.cfg.t_btc() {
                self.rollup = None;
                self.frozen.clear();
                self.set_mode(Mode::Normal, h);
            }
        }
        if self.mode == Mode::Frozen && self.frozen.is_empty() {
            self.set_mode(Mode::Normal, h);
        }
    }

    fn enter_rollup(&mut self, b: u64, h: u64, ctx: &Ctx) {
        let (epoch, set) = self.next_set(ctx.store);
        self.rollup = Some(Rollup { b, epoch, set });
        self.frozen.clear();
        self.set_mode(Mode::Rollup, h);
    }
}

impl Client {
    fn set_l(&mut self, cand: Digest, store: &BlockStore) {
        if cand == self.l || store.is_ancestor(&cand, &self.l) {
            return;
        }
        if !store.is_ancestor(&self.l, &cand) {
            self.notes.push(("self_conflict", json!({ "old": self.l.to_hex(), "new": cand.to_hex() })));
        }
        self.l = cand;
        let b = store.block(&cand);
        self.notes.push(("l_out", json!({ "tip": cand.to_hex(), "height": b.height })));
    }

    fn update_l(&mut self, view: &View, ctx: &Ctx) {
        if self.l_locked {
            return;
        }
        let mut cur = self.cp_tip();
        if self.finality == Finality::Fast && self.mode == Mode::Normal && !self.stalled {
            while let [only] = view.final_children(&cur) {
                cur = *only;
            }
        }
        self.set_l(cur, ctx.store);
    }

    /// All three withdrawal conditions for `v` in this client's current view.
    pub fn grant_holds(&self, v: ValidatorId, store: &BlockStore, k: u64) -> bool {
        let st = store.state(&self.cp_tip());
        let Some(req) = st.requested.get(&v) else { return false };
        let rh = store.block(req).height;
        let Some(&(_, bh)) = self.anchors.iter().find(|(th, _)| *th >= rh) else { return false };
        bh + k < self.c_len && !self.accused.contains(&v) && !self.implicated.contains(&v)
    }

    fn update_grants(&mut self, ctx: &Ctx) {
        let st = ctx.store.state(&self.cp_tip());
        let waiting: Vec<ValidatorId> =
            st.requested.keys().copied().filter(|v| !self.granted.contains(v)).collect();
        for v in waiting {
            if self.grant_holds(v, ctx.store, ctx.cfg.k) {
                self.granted.insert(v);
                self.notes.push(("withdrawal_granted", json!({ "validator": v })));
            }
        }
    }

    /// Baseline grant: the request has been final for the unbonding delay
    /// and the validator is not locally known to have violated safety.
    pub fn grant_holds_baseline(&self, v: ValidatorId, view: &View, store: &BlockStore, delay: u64, slot: Slot) -> bool {
        let st = store.state(&self.l);
        let Some(req) = st.requested.get(&v) else { return false };
        let Some(f) = view.final_slot(req) else { return false };
        slot >= f + delay && !self.slashable.contains(&v)
    }

    fn update_grants_baseline(&mut self, view: &View, ctx: &Ctx) {
        let st = ctx.store.state(&self.l);
        let waiting: Vec<ValidatorId> =
            st.requested.keys().copied().filter(|v| !self.granted.contains(v)).collect();
        for v in waiting {
            if self.grant_holds_baseline(v, view, ctx.store, ctx.cfg.unbonding_delay, ctx.slot) {
                self.granted.insert(v);
                self.notes.push(("withdrawal_granted", json!({ "validator": v })));
            }
        }
    }

    fn local_forensics(&mut self, view: &View, ctx: &Ctx, conflicts: &[(Digest, Digest)]) {
        for &(a, b) in conflicts {
            if !self.judged.insert((a, b)) {
                continue;
            }
            let (Some(qa), Some(qb)) = (view.qc(ctx.store, &a), view.qc(ctx.store, &b)) else { continue };
            if let Ok(p) = forensic_identify(ctx.store, &qa, &qb) {
                if p.violators.len() >= accountability_threshold(ctx.cfg.n) {
                    self.accused.extend(p.violators.iter().copied());
                    self.add_slashable(p.violators, "forensics", ctx.store);
                }
            }
        }
    }

    /// Baseline output rule: from the current tip follow finalized children,
    /// preferring the earliest finalized, then the deeper subtree, then a
    /// seeded hash.
    fn update_l_baseline(&mut self, view: &View, ctx: &Ctx) {
        if !view.changed {
            return;
        }
        let mut cur = self.l;
        loop {
            let kids = view.final_children(&cur);
            let best = match kids {
                [] => break,
                [only] => *only,
                _ => *kids
                    .iter()
                    .min_by_key(|h| {
                        (
                            view.final_slot(h).unwrap_or(Slot::MAX),
                            std::cmp::Reverse(subtree_height(view, ctx.store, h)),
                            seeded(self.seed, h),
                        )
                    })
                    .expect("non-empty"),
            };
            cur = best;
        }
        self.set_l(cur, ctx.store);
    }
}

fn subtree_height(view: &View, store: &BlockStore, h: &Digest) -> u64 {
    let mut best = store.block(h).height;
    let mut stack = vec![*h];
    while let Some(x) = stack.pop() {
        best = best.max(store.block(&x).height);
        stack.extend_from_slice(view.final_children(&x));
    }
    best
}

fn seeded(seed: u64, h: &Digest) -> Digest {
    let mut b = seed.to_be_bytes().to_vec();
    b.extend_from_slice(h.as_bytes());
    Digest::of(&b)
}
