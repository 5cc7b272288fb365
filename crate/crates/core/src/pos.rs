//! Proof-of-stake engine data: blocks, validator-set bookkeeping, quorum
//! certificates and forensics.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{accountability_threshold, quorum};
use crate::crypto::{Digest, Registry, Signature, ValidatorId};

/// PoS transactions. Only the ones that touch validator bookkeeping carry
/// semantics; `User` stands for everything else.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosTx {
    User(u64),
    WithdrawalRequest(ValidatorId),
    Withdraw(ValidatorId),
    Stake(ValidatorId),
    Slash(ValidatorId),
    /// Inactivity-leak penalty removing a non-voter from the effective set.
    Leak(ValidatorId),
}

impl PosTx {
    pub fn to_bytes(&self) -> [u8; 9] {
        let (tag, val) = match *self {
            PosTx::User(x) => (0u8, x),
            PosTx::WithdrawalRequest(v) => (1, v.0 as u64),
            PosTx::Withdraw(v) => (2, v.0 as u64),
            PosTx::Stake(v) => (3, v.0 as u64),
            PosTx::Slash(v) => (4, v.0 as u64),
            PosTx::Leak(v) => (5, v.0 as u64),
        };
        let mut out = [0u8; 9];
        out[0] = tag;
        out[1..].copy_from_slice(&val.to_be_bytes());
        out
    }

    /// Stable digest used to reference a transaction from Bitcoin.
    pub fn digest(&self) -> Digest {
        Digest::of(&self.to_bytes())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Pos,
    Bundle,
}

/// A PoS block or a rollup bundle. Bundles live in the same tree so that
/// post-rollup blocks can use them as parents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PosBlock {
    pub hash: Digest,
    pub parent: Digest,
    pub height: u64,
    pub epoch: u64,
    /// 1-based position inside the epoch. Genesis is 0.
    pub epoch_pos: u64,
    pub kind: BlockKind,
    pub txs: Vec<PosTx>,
    pub proposer: ValidatorId,
    /// Lets a proposer produce distinct blocks with equal content.
    pub nonce: u64,
}

pub const HEADER_LEN: usize = 32 + 8 + 8 + 8 + 1 + 32 + 4 + 8;

/// Block header as it appears on the wire: the body is replaced by its root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Header {
    pub parent: Digest,
    pub height: u64,
    pub epoch: u64,
    pub epoch_pos: u64,
    pub kind: BlockKind,
    pub txs_root: Digest,
    pub proposer: ValidatorId,
    pub nonce: u64,
}

impl Header {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..32].copy_from_slice(self.parent.as_bytes());
        b[32..40].copy_from_slice(&self.height.to_be_bytes());
        b[40..48].copy_from_slice(&self.epoch.to_be_bytes());
        b[48..56].copy_from_slice(&self.epoch_pos.to_be_bytes());
        b[56] = match self.kind {
            BlockKind::Pos => 0,
            BlockKind::Bundle => 1,
        };
        b[57..89].copy_from_slice(self.txs_root.as_bytes());
        b[89..93].copy_from_slice(&self.proposer.0.to_be_bytes());
        b[93..101].copy_from_slice(&self.nonce.to_be_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Option<Self> {
        if b.len() != HEADER_LEN {
            return None;
        }
        let u64_at = |i: usize| u64::from_be_bytes(b[i..i + 8].try_into().unwrap());
        Some(Header {
            parent: Digest(b[0..32].try_into().unwrap()),
            height: u64_at(32),
            epoch: u64_at(40),
            epoch_pos: u64_at(48),
            kind: match b[56] {
                0 => BlockKind::Pos,
                1 => BlockKind::Bundle,
                _ => return None,
            },
            txs_root: Digest(b[57..89].try_into().unwrap()),
            proposer: ValidatorId(u32::from_be_bytes(b[89..93].try_into().unwrap())),
            nonce: u64_at(93),
        })
    }

    pub fn hash(&self) -> Digest {
        Digest::of(&self.to_bytes())
    }

    pub fn is_epoch_final(&self, epoch_len: u64) -> bool {
        self.kind == BlockKind::Bundle || self.height == 0 || self.epoch_pos == epoch_len
    }
}

pub fn txs_root(txs: &[PosTx]) -> Digest {
    let mut bytes = Vec::with_capacity(txs.len() * 9);
    for tx in txs {
        bytes.extend_from_slice(&tx.to_bytes());
    }
    Digest::of(&bytes)
}

impl PosBlock {
    pub fn genesis() -> Self {
        let mut b = PosBlock {
            hash: Digest::ZERO,
            parent: Digest::ZERO,
            height: 0,
            epoch: 0,
            epoch_pos: 0,
            kind: BlockKind::Pos,
            txs: Vec::new(),
            proposer: ValidatorId(0),
            nonce: 0,
        };
        b.hash = b.header().hash();
        b
    }

    /// Builds a PoS child of `parent`, deriving epoch and position.
    pub fn child(
        parent: &PosBlock,
        epoch_len: u64,
        txs: Vec<PosTx>,
        proposer: ValidatorId,
        nonce: u64,
    ) -> Self {
        let (epoch, epoch_pos) = if parent.is_epoch_final(epoch_len) {
            (parent.epoch + 1, 1)
        } else {
            (parent.epoch, parent.epoch_pos + 1)
        };
        Self::build(parent, epoch, epoch_pos, BlockKind::Pos, txs, proposer, nonce)
    }

    /// Builds a rollup bundle extending `parent` and carrying `epoch`.
    pub fn bundle(parent: &PosBlock, epoch: u64, txs: Vec<PosTx>, leader: ValidatorId, nonce: u64) -> Self {
        Self::build(parent, epoch, 0, BlockKind::Bundle, txs, leader, nonce)
    }

    fn build(
        parent: &PosBlock,
        epoch: u64,
        epoch_pos: u64,
        kind: BlockKind,
        txs: Vec<PosTx>,
        proposer: ValidatorId,
        nonce: u64,
    ) -> Self {
        let mut b = PosBlock {
            hash: Digest::ZERO,
            parent: parent.hash,
            height: parent.height + 1,
            epoch,
            epoch_pos,
            kind,
            txs,
            proposer,
            nonce,
        };
        b.hash = b.header().hash();
        b
    }

    pub fn header(&self) -> Header {
        Header {
            parent: self.parent,
            height: self.height,
            epoch: self.epoch,
            epoch_pos: self.epoch_pos,
            kind: self.kind,
            txs_root: txs_root(&self.txs),
            proposer: self.proposer,
            nonce: self.nonce,
        }
    }

    pub fn is_epoch_final(&self, epoch_len: u64) -> bool {
        self.kind == BlockKind::Bundle || self.height == 0 || self.epoch_pos == epoch_len
    }

    pub fn is_bundle(&self) -> bool {
        self.kind == BlockKind::Bundle
    }
}

/// Epoch of a height on a chain without bundles.
pub fn epoch_of_height(height: u64, epoch_len: u64) -> u64 {
    height.div_ceil(epoch_len)
}

/// Round-robin proposer. Round `r` shifts the schedule by `r`.
pub fn proposer_for(active_set: &[ValidatorId], height: u64, round: u32) -> ValidatorId {
    assert!(!active_set.is_empty());
    let idx = (height.saturating_sub(1) + round as u64) % active_set.len() as u64;
    active_set[idx as usize]
}

/// Replaces every exiting validator, in place, by the next node from the
/// staking queue. Validators that cannot be replaced stay active.
pub fn rotate_validators(
    active: &[ValidatorId],
    exiting: &BTreeSet<ValidatorId>,
    queue: &mut Vec<ValidatorId>,
) -> (Vec<ValidatorId>, BTreeSet<ValidatorId>) {
    let mut next = active.to_vec();
    let mut removed = BTreeSet::new();
    for slot in next.iter_mut() {
        if exiting.contains(slot) && !queue.is_empty() {
            removed.insert(*slot);
            *slot = queue.remove(0);
        }
    }
    (next, removed)
}

/// Per-epoch validator sets of one chain.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidatorSetLedger {
    pub sets: BTreeMap<u64, Vec<ValidatorId>>,
    pub staking_queue: Vec<ValidatorId>,
    /// Validator to the height of the block that included its request.
    pub withdrawal_requests: BTreeMap<ValidatorId, u64>,
}

impl ValidatorSetLedger {
    pub fn new(initial: Vec<ValidatorId>, queue: Vec<ValidatorId>) -> Self {
        let mut sets = BTreeMap::new();
        sets.insert(1, initial);
        ValidatorSetLedger { sets, staking_queue: queue, withdrawal_requests: BTreeMap::new() }
    }

    pub fn record_request(&mut self, v: ValidatorId, height: u64) {
        self.withdrawal_requests.entry(v).or_insert(height);
    }

    /// Derives the set of `epoch_completed + 1` from requests included in
    /// `epoch_completed`.
    pub fn rotate(&mut self, epoch_completed: u64, epoch_len: u64) {
        let current = self.sets.get(&epoch_completed).cloned().unwrap_or_default();
        let exiting: BTreeSet<_> = self
            .withdrawal_requests
            .iter()
            .filter(|(_, &h)| epoch_of_height(h, epoch_len) == epoch_completed)
            .map(|(&v, _)| v)
            .collect();
        let (next, _) = rotate_validators(&current, &exiting, &mut self.staking_queue);
        self.sets.insert(epoch_completed + 1, next);
    }
}

/// Validator bookkeeping after applying a block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainState {
    /// Set that signs this block's epoch.
    pub active: Vec<ValidatorId>,
    pub queue: Vec<ValidatorId>,
    /// Requests not yet processed by a rotation.
    pub pending_exit: BTreeSet<ValidatorId>,
    /// Validator to the block that included its withdrawal request.
    pub requested: BTreeMap<ValidatorId, Digest>,
    pub withdrawn: BTreeSet<ValidatorId>,
    pub slashed: BTreeSet<ValidatorId>,
    pub leaked: BTreeSet<ValidatorId>,
    /// Validators that left the active set on this chain.
    pub exited: BTreeSet<ValidatorId>,
}

impl ChainState {
    pub fn genesis(initial: Vec<ValidatorId>, queue: Vec<ValidatorId>) -> Self {
        ChainState {
            active: initial,
            queue,
            pending_exit: BTreeSet::new(),
            requested: BTreeMap::new(),
            withdrawn: BTreeSet::new(),
            slashed: BTreeSet::new(),
            leaked: BTreeSet::new(),
            exited: BTreeSet::new(),
        }
    }

    /// Active set minus leaked validators; quorums are counted over it.
    pub fn effective(&self) -> Vec<ValidatorId> {
        self.active.iter().copied().filter(|v| !self.leaked.contains(v)).collect()
    }

    pub fn quorum(&self) -> usize {
        quorum(self.effective().len())
    }

    /// State for a child block of `child_epoch`, before its transactions.
    fn enter_epoch(&self, parent_epoch: u64, child_epoch: u64) -> ChainState {
        let mut s = self.clone();
        if child_epoch != parent_epoch && parent_epoch != 0 {
            let (next, removed) = rotate_validators(&s.active, &s.pending_exit, &mut s.queue);
            s.active = next;
            s.pending_exit.retain(|v| !removed.contains(v));
            s.exited.extend(removed);
        }
        s
    }

    fn apply(&mut self, block: &PosBlock) {
        for tx in &block.txs {
            match *tx {
                PosTx::User(_) => {}
                PosTx::WithdrawalRequest(v) => {
                    if self.active.contains(&v) && !self.requested.contains_key(&v) {
                        self.requested.insert(v, block.hash);
                        self.pending_exit.insert(v);
                    }
                }
                PosTx::Withdraw(v) => {
                    if !self.slashed.contains(&v) {
                        self.withdrawn.insert(v);
                    }
                }
                PosTx::Stake(v) => {
                    if !self.active.contains(&v) && !self.queue.contains(&v) && !self.exited.contains(&v) {
                        self.queue.push(v);
                    }
                }
                PosTx::Slash(v) => {
                    if !self.withdrawn.contains(&v) {
                        self.slashed.insert(v);
                        if self.active.contains(&v) {
                            self.pending_exit.insert(v);
                        }
                    }
                }
                PosTx::Leak(v) => {
                    self.leaked.insert(v);
                }
            }
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("unknown parent {0:?}")]
    UnknownParent(Digest),
    #[error("block {0:?} does not follow its parent")]
    BadLinkage(Digest),
}

/// Every block created during a run, with its chain state. Parties keep
/// their own availability sets on top of it.
#[derive(Debug)]
pub struct BlockStore {
    pub epoch_len: u64,
    pub genesis: Digest,
    blocks: HashMap<Digest, PosBlock>,
    states: HashMap<Digest, ChainState>,
}

impl BlockStore {
    pub fn new(epoch_len: u64, initial: Vec<ValidatorId>, queue: Vec<ValidatorId>) -> Self {
        let g = PosBlock::genesis();
        let mut blocks = HashMap::new();
        let mut states = HashMap::new();
        states.insert(g.hash, ChainState::genesis(initial, queue));
        let genesis = g.hash;
        blocks.insert(g.hash, g);
        BlockStore { epoch_len, genesis, blocks, states }
    }

    pub fn insert(&mut self, block: PosBlock) -> Result<Digest, StoreError> {
        if self.blocks.contains_key(&block.hash) {
            return Ok(block.hash);
        }
        let parent = self.blocks.get(&block.parent).ok_or(StoreError::UnknownParent(block.parent))?;
        if block.height != parent.height + 1 || block.hash != block.header().hash() {
            return Err(StoreError::BadLinkage(block.hash));
        }
        let mut state = self.states[&block.parent].enter_epoch(parent.epoch, block.epoch);
        state.apply(&block);
        let h = block.hash;
        self.states.insert(h, state);
        self.blocks.insert(h, block);
        Ok(h)
    }

    pub fn get(&self, h: &Digest) -> Option<&PosBlock> {
        self.blocks.get(h)
    }

    pub fn block(&self, h: &Digest) -> &PosBlock {
        &self.blocks[h]
    }

    pub fn contains(&self, h: &Digest) -> bool {
        self.blocks.contains_key(h)
    }

    pub fn state(&self, h: &Digest) -> &ChainState {
        &self.states[h]
    }

    /// Active set that signs `h` itself.
    pub fn signing_set(&self, h: &Digest) -> &[ValidatorId] {
        &self.states[h].active
    }

    /// Set that would sign a child of `parent` in `child_epoch`.
    pub fn child_set(&self, parent: &Digest, child_epoch: u64) -> Vec<ValidatorId> {
        let p = &self.blocks[parent];
        self.states[parent].enter_epoch(p.epoch, child_epoch).active
    }

    /// Ancestor of `h` at `height`, if `h` is at least that high.
    pub fn ancestor_at(&self, h: &Digest, height: u64) -> Option<Digest> {
        let mut cur = self.blocks.get(h)?;
        if cur.height < height {
            return None;
        }
        while cur.height > height {
            cur = self.blocks.get(&cur.parent)?;
        }
        Some(cur.hash)
    }

    /// `a` is an ancestor of (or equal to) `b`.
    pub fn is_ancestor(&self, a: &Digest, b: &Digest) -> bool {
        match self.blocks.get(a) {
            Some(ab) => self.ancestor_at(b, ab.height) == Some(*a),
            None => false,
        }
    }

    pub fn conflicting(&self, a: &Digest, b: &Digest) -> bool {
        !self.is_ancestor(a, b) && !self.is_ancestor(b, a)
    }

    pub fn common_ancestor(&self, a: &Digest, b: &Digest) -> Option<Digest> {
        let (mut x, mut y) = (self.blocks.get(a)?, self.blocks.get(b)?);
        while x.height > y.height {
            x = self.blocks.get(&x.parent)?;
        }
        while y.height > x.height {
            y = self.blocks.get(&y.parent)?;
        }
        while x.hash != y.hash {
            x = self.blocks.get(&x.parent)?;
            y = self.blocks.get(&y.parent)?;
        }
        Some(x.hash)
    }

    /// Blocks from genesis to `tip`, inclusive.
    pub fn chain(&self, tip: &Digest) -> Vec<Digest> {
        let mut out = Vec::new();
        let mut cur = *tip;
        loop {
            out.push(cur);
            let b = &self.blocks[&cur];
            if b.height == 0 {
                break;
            }
            cur = b.parent;
        }
        out.reverse();
        out
    }

    /// Blocks strictly after `from` up to `to`, oldest first. `from` must be
    /// an ancestor of `to`.
    pub fn segment(&self, from: &Digest, to: &Digest) -> Vec<Digest> {
        let stop = self.blocks[from].height;
        let mut out = Vec::new();
        let mut cur = *to;
        while self.blocks[&cur].height > stop {
            out.push(cur);
            cur = self.blocks[&cur].parent;
        }
        out.reverse();
        out
    }

    /// Transaction included in the chain ending at `tip`.
    pub fn chain_contains_tx(&self, tip: &Digest, tx: &PosTx) -> bool {
        let mut cur = self.blocks.get(tip);
        while let Some(b) = cur {
            if b.txs.contains(tx) {
                return true;
            }
            if b.height == 0 {
                break;
            }
            cur = self.blocks.get(&b.parent);
        }
        false
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Validator sets of the chain ending at `tip`, keyed by epoch.
    pub fn ledger(&self, tip: &Digest) -> ValidatorSetLedger {
        let mut ledger = ValidatorSetLedger::default();
        for h in self.chain(tip) {
            let b = &self.blocks[&h];
            let s = &self.states[&h];
            if b.height > 0 {
                ledger.sets.entry(b.epoch).or_insert_with(|| s.active.clone());
            }
            for tx in &b.txs {
                if let PosTx::WithdrawalRequest(v) = tx {
                    if s.requested.get(v) == Some(&h) {
                        ledger.record_request(*v, b.height);
                    }
                }
            }
            ledger.staking_queue = s.queue.clone();
        }
        ledger
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuorumCertificate {
    pub block: Digest,
    pub epoch: u64,
    pub signers: BTreeSet<ValidatorId>,
    pub sigs: Vec<Signature>,
}

/// Returns a certificate once enough distinct members of `active_set` have
/// valid pre-commits on the block. Foreign or unregistered signatures are
/// ignored.
pub fn try_finalize(
    block: &PosBlock,
    precommits: &[Signature],
    active_set: &[ValidatorId],
    registry: &Registry,
) -> Option<QuorumCertificate> {
    let mut signers = BTreeSet::new();
    let mut sigs = Vec::new();
    for s in precommits {
        if s.message == block.hash
            && active_set.contains(&s.signer)
            && registry.verify(s)
            && signers.insert(s.signer)
        {
            sigs.push(*s);
        }
    }
    (signers.len() >= quorum(active_set.len())).then_some(QuorumCertificate {
        block: block.hash,
        epoch: block.epoch,
        signers,
        sigs,
    })
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ForensicError {
    #[error("the certified blocks do not conflict")]
    NotAViolation,
    #[error("the certificates were issued by different active sets")]
    EpochMismatch,
    #[error("unknown block")]
    UnknownBlock,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FraudProof {
    pub qc_a: QuorumCertificate,
    pub qc_b: QuorumCertificate,
    pub violators: BTreeSet<ValidatorId>,
}

/// Two blocks are judged by the same active set when they carry the same
/// epoch and their fork point lies inside that epoch or closes the previous
/// one, so both sets derive from the same prefix.
pub fn same_active_set(a: &Header, b: &Header, ancestor: &Header, epoch_len: u64) -> bool {
    a.kind == BlockKind::Pos
        && b.kind == BlockKind::Pos
        && a.epoch == b.epoch
        && (ancestor.epoch == a.epoch
            || (ancestor.epoch + 1 == a.epoch && ancestor.is_epoch_final(epoch_len)))
}

/// Names the validators that certified both of two conflicting blocks.
pub fn forensic_identify(
    store: &BlockStore,
    qc_a: &QuorumCertificate,
    qc_b: &QuorumCertificate,
) -> Result<FraudProof, ForensicError> {
    let (a, b) = match (store.get(&qc_a.block), store.get(&qc_b.block)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(ForensicError::UnknownBlock),
    };
    if !store.conflicting(&a.hash, &b.hash) {
        return Err(ForensicError::NotAViolation);
    }
    let anc = store.common_ancestor(&a.hash, &b.hash).ok_or(ForensicError::UnknownBlock)?;
    let anc = store.block(&anc);
    if !same_active_set(&a.header(), &b.header(), &anc.header(), store.epoch_len)
        || store.state(&a.hash).effective() != store.state(&b.hash).effective()
    {
        return Err(ForensicError::EpochMismatch);
    }
    let violators = qc_a.signers.intersection(&qc_b.signers).copied().collect();
    Ok(FraudProof { qc_a: qc_a.clone(), qc_b: qc_b.clone(), violators })
}

/// Self-contained fraud proof as posted to Bitcoin: both header chains down
/// to the fork point plus the two signer sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FraudEvidence {
    /// Headers from the first block down to, excluding, the fork point.
    pub chain_a: Vec<Header>,
    pub chain_b: Vec<Header>,
    pub ancestor: Header,
    pub signers_a: BTreeSet<ValidatorId>,
    pub signers_b: BTreeSet<ValidatorId>,
}

pub const FRAUD_TAG: &[u8; 4] = b"BBNF";
const FRAUD_CHUNK: usize = 80 - 4 - 2;

impl FraudEvidence {
    pub fn from_proof(store: &BlockStore, proof: &FraudProof) -> Option<Self> {
        let anc = store.common_ancestor(&proof.qc_a.block, &proof.qc_b.block)?;
        let headers = |tip: &Digest| -> Vec<Header> {
            let mut seg = store.segment(&anc, tip);
            seg.reverse();
            seg.iter().map(|h| store.block(h).header()).collect()
        };
        Some(FraudEvidence {
            chain_a: headers(&proof.qc_a.block),
            chain_b: headers(&proof.qc_b.block),
            ancestor: store.block(&anc).header(),
            signers_a: proof.qc_a.signers.clone(),
            signers_b: proof.qc_b.signers.clone(),
        })
    }

    pub fn block_a(&self) -> Digest {
        self.chain_a[0].hash()
    }

    pub fn block_b(&self) -> Digest {
        self.chain_b[0].hash()
    }

    /// Checks the evidence on its own: linked headers meeting at the fork
    /// point, a shared active set, registered pre-commits from a quorum on
    /// each side, and an overlap above n/3. Returns the violators.
    pub fn verify(&self, n: usize, epoch_len: u64, registry: &Registry) -> Option<BTreeSet<ValidatorId>> {
        let anc = self.ancestor.hash();
        for chain in [&self.chain_a, &self.chain_b] {
            if chain.is_empty() {
                return None;
            }
            for w in chain.windows(2) {
                if w[0].parent != w[1].hash() || w[0].height != w[1].height + 1 {
                    return None;
                }
            }
            let last = chain.last().unwrap();
            if last.parent != anc || last.height != self.ancestor.height + 1 {
                return None;
            }
        }
        // distinct first steps after the fork point make the tips conflict
        if self.chain_a.last().unwrap().hash() == self.chain_b.last().unwrap().hash() {
            return None;
        }
        let (a, b) = (&self.chain_a[0], &self.chain_b[0]);
        if !same_active_set(a, b, &self.ancestor, epoch_len) {
            return None;
        }
        let q = quorum(n);
        for (hdr, signers) in [(a, &self.signers_a), (b, &self.signers_b)] {
            let h = hdr.hash();
            if signers.len() < q || !signers.iter().all(|v| registry.has_signature(*v, h)) {
                return None;
            }
        }
        let violators: BTreeSet<_> = self.signers_a.intersection(&self.signers_b).copied().collect();
        (violators.len() >= accountability_threshold(n)).then_some(violators)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for chain in [&self.chain_a, &self.chain_b] {
            out.extend_from_slice(&(chain.len() as u16).to_be_bytes());
            for h in chain {
                out.extend_from_slice(&h.to_bytes());
            }
        }
        out.extend_from_slice(&self.ancestor.to_bytes());
        for set in [&self.signers_a, &self.signers_b] {
            out.extend_from_slice(&(set.len() as u16).to_be_bytes());
            for v in set {
                out.extend_from_slice(&v.0.to_be_bytes());
            }
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Option<Self> {
        let mut pos = 0usize;
        let mut take = |len: usize| -> Option<&[u8]> {
            let s = b.get(pos..pos + len)?;
            pos += len;
            Some(s)
        };
        let mut chains = Vec::new();
        for _ in 0..2 {
            let cnt = u16::from_be_bytes(take(2)?.try_into().ok()?) as usize;
            let mut c = Vec::with_capacity(cnt);
            for _ in 0..cnt {
                c.push(Header::from_bytes(take(HEADER_LEN)?)?);
            }
            chains.push(c);
        }
        let ancestor = Header::from_bytes(take(HEADER_LEN)?)?;
        let mut sets = Vec::new();
        for _ in 0..2 {
            let cnt = u16::from_be_bytes(take(2)?.try_into().ok()?) as usize;
            let mut s = BTreeSet::new();
            for _ in 0..cnt {
                s.insert(ValidatorId(u32::from_be_bytes(take(4)?.try_into().ok()?)));
            }
            sets.push(s);
        }
        if pos != b.len() {
            return None;
        }
        let signers_b = sets.pop()?;
        let signers_a = sets.pop()?;
        let chain_b = chains.pop()?;
        let chain_a = chains.pop()?;
        Some(FraudEvidence { chain_a, chain_b, ancestor, signers_a, signers_b })
    }

    /// Splits the evidence into tagged OP_RETURN-sized payloads:
    /// tag, part index, part count, chunk.
    pub fn to_payloads(&self) -> Vec<Vec<u8>> {
        let bytes = self.to_bytes();
        let chunks: Vec<_> = bytes.chunks(FRAUD_CHUNK).collect();
        let total = chunks.len();
        assert!(total <= 255, "fraud proof too long to post");
        chunks
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut p = FRAUD_TAG.to_vec();
                p.push(i as u8);
                p.push(total as u8);
                p.extend_from_slice(c);
                p
            })
            .collect()
    }

    pub fn from_payloads(payloads: &[Vec<u8>]) -> Option<Self> {
        let mut bytes = Vec::new();
        for (i, p) in payloads.iter().enumerate() {
            if p.len() < 6 || &p[..4] != FRAUD_TAG || p[4] as usize != i || p[5] as usize != payloads.len() {
                return None;
            }
            bytes.extend_from_slice(&p[6..]);
        }
        Self::from_bytes(&bytes)
    }
}

/// Lifecycle of one validator's stake.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WithdrawalStatus {
    Active,
    Requested,
    Granted,
    Withdrawn,
    Slashed,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("illegal withdrawal transition {from:?} -> {to:?}")]
pub struct TransitionError {
    pub from: WithdrawalStatus,
    pub to: WithdrawalStatus,
}

#[derive(Clone, Debug, Default)]
pub struct WithdrawalState {
    status: BTreeMap<ValidatorId, (WithdrawalStatus, Option<u64>)>,
}

impl WithdrawalState {
    pub fn status(&self, v: ValidatorId) -> WithdrawalStatus {
        self.status.get(&v).map(|s| s.0).unwrap_or(WithdrawalStatus::Active)
    }

    pub fn grant_slot(&self, v: ValidatorId) -> Option<u64> {
        self.status.get(&v).and_then(|s| s.1)
    }

    pub fn advance(&mut self, v: ValidatorId, to: WithdrawalStatus, slot: u64) -> Result<(), TransitionError> {
        use WithdrawalStatus::*;
        let from = self.status(v);
        let ok = matches!(
            (from, to),
            (Active, Requested) | (Requested, Granted) | (Granted, Withdrawn) | (Active | Requested | Granted, Slashed)
        );
        if !ok {
            return Err(TransitionError { from, to });
        }
        let grant = if to == Granted { Some(slot) } else { self.grant_slot(v) };
        self.status.insert(v, (to, grant));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::PartyId;

    fn vs(ids: &[u32]) -> Vec<ValidatorId> {
        ids.iter().map(|&i| ValidatorId(i)).collect()
    }

    fn registry(n: u32) -> Registry {
        let mut r = Registry::new(false);
        for i in 0..n {
            r.register_key(ValidatorId(i), PartyId::Validator(ValidatorId(i)), 1);
        }
        r
    }

    fn sign_all(reg: &mut Registry, ids: &[u32], h: Digest) -> Vec<Signature> {
        ids.iter()
            .map(|&i| reg.sign(PartyId::Validator(ValidatorId(i)), ValidatorId(i), h).unwrap())
            .collect()
    }

    fn store(n: u32, epoch_len: u64) -> BlockStore {
        BlockStore::new(epoch_len, vs(&(0..n).collect::<Vec<_>>()), vs(&[7, 8, 9]))
    }

    fn extend(s: &mut BlockStore, parent: Digest, txs: Vec<PosTx>, nonce: u64) -> Digest {
        let b = PosBlock::child(s.block(&parent), s.epoch_len, txs, ValidatorId(0), nonce);
        s.insert(b).unwrap()
    }

    #[test]
    fn round_robin_proposers() {
        let set = vs(&[0, 1, 2, 3]);
        let got: Vec<_> = (1..=4).map(|h| proposer_for(&set, h, 0).0).collect();
        assert_eq!(got, vec![0, 1, 2, 3]);
        let rotated = vs(&[0, 1, 7, 3]);
        assert_eq!(proposer_for(&rotated, 5, 0), rotated[(5 - 1) % 4]);
        assert_eq!(proposer_for(&vs(&[0]), 9, 3), ValidatorId(0));
    }

    #[test]
    fn finalize_thresholds() {
        let mut reg = registry(4);
        let s = store(4, 4);
        let b = PosBlock::child(s.block(&s.genesis), 4, vec![], ValidatorId(0), 0);
        let sigs = sign_all(&mut reg, &[0, 1, 2], b.hash);
        assert!(try_finalize(&b, &sigs, &vs(&[0, 1, 2, 3]), &reg).is_some());
        assert!(try_finalize(&b, &sigs[..2], &vs(&[0, 1, 2, 3]), &reg).is_none());
        let three = vs(&[0, 1, 2]);
        assert!(try_finalize(&b, &sigs, &three, &reg).is_some());
        assert!(try_finalize(&b, &sigs[..2], &three, &reg).is_none());
    }

    #[test]
    fn finalize_ignores_foreign_signers() {
        let mut reg = registry(6);
        let s = store(4, 4);
        let b = PosBlock::child(s.block(&s.genesis), 4, vec![], ValidatorId(0), 0);
        let sigs = sign_all(&mut reg, &[0, 1, 5], b.hash);
        assert!(try_finalize(&b, &sigs, &vs(&[0, 1, 2, 3]), &reg).is_none());
    }

    #[test]
    fn epochs_follow_heights() {
        let mut s = store(4, 3);
        let mut tip = s.genesis;
        for h in 1..=10u64 {
            tip = extend(&mut s, tip, vec![], 0);
            let b = s.block(&tip);
            assert_eq!(b.epoch, epoch_of_height(h, 3));
            assert_eq!(b.is_epoch_final(3), h % 3 == 0);
        }
    }

    #[test]
    fn forensics_name_the_overlap() {
        let mut reg = registry(4);
        let mut s = store(4, 4);
        let g = s.genesis;
        let a = extend(&mut s, g, vec![PosTx::User(1)], 0);
        let b = extend(&mut s, g, vec![PosTx::User(2)], 0);
        let set = vs(&[0, 1, 2, 3]);
        let qa = try_finalize(s.block(&a), &sign_all(&mut reg, &[0, 1, 2], a), &set, &reg).unwrap();
        let qb = try_finalize(s.block(&b), &sign_all(&mut reg, &[1, 2, 3], b), &set, &reg).unwrap();
        let fp = forensic_identify(&s, &qa, &qb).unwrap();
        assert_eq!(fp.violators, vs(&[1, 2]).into_iter().collect());
        assert_eq!(forensic_identify(&s, &qa, &qa), Err(ForensicError::NotAViolation));
    }

    #[test]
    fn forensics_full_overlap() {
        let mut reg = registry(3);
        let mut s = store(3, 4);
        let g = s.genesis;
        let a = extend(&mut s, g, vec![PosTx::User(1)], 0);
        let b = extend(&mut s, g, vec![PosTx::User(2)], 0);
        let set = vs(&[0, 1, 2]);
        let qa = try_finalize(s.block(&a), &sign_all(&mut reg, &[0, 1, 2], a), &set, &reg).unwrap();
        let qb = try_finalize(s.block(&b), &sign_all(&mut reg, &[0, 1, 2], b), &set, &reg).unwrap();
        assert_eq!(forensic_identify(&s, &qa, &qb).unwrap().violators.len(), 3);
    }

    #[test]
    fn forensics_reject_cross_epoch_pairs() {
        let mut reg = registry(4);
        let mut s = store(4, 2);
        let g = s.genesis;
        let a1 = extend(&mut s, g, vec![], 0);
        let a2 = extend(&mut s, a1, vec![], 0);
        let a3 = extend(&mut s, a2, vec![], 0);
        let b1 = extend(&mut s, g, vec![PosTx::User(9)], 0);
        let set = vs(&[0, 1, 2, 3]);
        let qa = try_finalize(s.block(&a3), &sign_all(&mut reg, &[0, 1, 2], a3), &set, &reg).unwrap();
        let qb = try_finalize(s.block(&b1), &sign_all(&mut reg, &[0, 1, 2], b1), &set, &reg).unwrap();
        assert_eq!(forensic_identify(&s, &qa, &qb), Err(ForensicError::EpochMismatch));
    }

    #[test]
    fn fraud_evidence_round_trips_and_verifies() {
        let mut reg = registry(4);
        let mut s = store(4, 4);
        let g = s.genesis;
        let root = extend(&mut s, g, vec![], 0);
        let a = extend(&mut s, root, vec![PosTx::User(1)], 0);
        let a2 = extend(&mut s, a, vec![], 0);
        let b = extend(&mut s, root, vec![PosTx::User(2)], 0);
        let set = vs(&[0, 1, 2, 3]);
        let qa = try_finalize(s.block(&a2), &sign_all(&mut reg, &[0, 1, 2], a2), &set, &reg).unwrap();
        let qb = try_finalize(s.block(&b), &sign_all(&mut reg, &[1, 2, 3], b), &set, &reg).unwrap();
        let fp = forensic_identify(&s, &qa, &qb).unwrap();
        let ev = FraudEvidence::from_proof(&s, &fp).unwrap();
        let payloads = ev.to_payloads();
        assert!(payloads.iter().all(|p| p.len() <= 80 && p.starts_with(b"BBNF")));
        let back = FraudEvidence::from_payloads(&payloads).unwrap();
        assert_eq!(back, ev);
        assert_eq!(back.verify(4, 4, &reg), Some(fp.violators.clone()));
        let mut swapped = payloads.clone();
        swapped.swap(0, 1);
        assert!(FraudEvidence::from_payloads(&swapped).is_none());
    }

    #[test]
    fn fraud_evidence_rejects_unsigned_claims() {
        let mut reg = registry(4);
        let mut s = store(4, 4);
        let g = s.genesis;
        let a = extend(&mut s, g, vec![PosTx::User(1)], 0);
        let b = extend(&mut s, g, vec![PosTx::User(2)], 0);
        sign_all(&mut reg, &[0, 1, 2], a);
        sign_all(&mut reg, &[1, 2], b);
        let ev = FraudEvidence {
            chain_a: vec![s.block(&a).header()],
            chain_b: vec![s.block(&b).header()],
            ancestor: s.block(&g).header(),
            signers_a: vs(&[0, 1, 2]).into_iter().collect(),
            signers_b: vs(&[1, 2, 3]).into_iter().collect(),
        };
        assert_eq!(ev.verify(4, 4, &reg), None);
    }

    #[test]
    fn rotation_replaces_in_place() {
        let mut q = vs(&[7, 8]);
        let (next, removed) = rotate_validators(&vs(&[0, 1, 2, 3]), &vs(&[2]).into_iter().collect(), &mut q);
        assert_eq!(next, vs(&[0, 1, 7, 3]));
        assert_eq!(removed, vs(&[2]).into_iter().collect());
        assert_eq!(q, vs(&[8]));
        let (same, _) = rotate_validators(&next, &BTreeSet::new(), &mut q);
        assert_eq!(same, next);
    }

    #[test]
    fn ledger_rotation_two_requests() {
        let mut l = ValidatorSetLedger::new(vs(&[0, 1, 2, 3]), vs(&[7, 8, 9]));
        l.record_request(ValidatorId(1), 2);
        l.record_request(ValidatorId(3), 3);
        l.rotate(1, 4);
        assert_eq!(l.sets[&2], vs(&[0, 7, 2, 8]));
        assert_eq!(l.staking_queue, vs(&[9]));
    }

    #[test]
    fn chain_state_rotates_at_epoch_boundary() {
        let mut s = store(4, 2);
        let g = s.genesis;
        let b1 = extend(&mut s, g, vec![PosTx::WithdrawalRequest(ValidatorId(2))], 0);
        let b2 = extend(&mut s, b1, vec![], 0);
        assert_eq!(s.signing_set(&b2), &vs(&[0, 1, 2, 3])[..]);
        let b3 = extend(&mut s, b2, vec![], 0);
        assert_eq!(s.signing_set(&b3), &vs(&[0, 1, 7, 3])[..]);
        assert!(s.state(&b3).exited.contains(&ValidatorId(2)));
        let l = s.ledger(&b3);
        assert_eq!(l.sets[&2], vs(&[0, 1, 7, 3]));
        assert_eq!(l.withdrawal_requests[&ValidatorId(2)], 1);
    }

    #[test]
    fn withdrawal_transitions() {
        use WithdrawalStatus::*;
        let mut w = WithdrawalState::default();
        let v = ValidatorId(1);
        assert!(w.advance(v, Granted, 0).is_err());
        w.advance(v, Requested, 1).unwrap();
        w.advance(v, Granted, 5).unwrap();
        assert_eq!(w.grant_slot(v), Some(5));
        w.advance(v, Withdrawn, 9).unwrap();
        assert!(w.advance(v, Slashed, 10).is_err());
        let u = ValidatorId(2);
        w.advance(u, Requested, 1).unwrap();
        w.advance(u, Slashed, 2).unwrap();
        assert_eq!(w.status(u), Slashed);
    }

    #[test]
    fn header_round_trip() {
        let s = store(4, 4);
        let b = PosBlock::child(s.block(&s.genesis), 4, vec![PosTx::User(3)], ValidatorId(2), 11);
        let h = b.header();
        assert_eq!(Header::from_bytes(&h.to_bytes()), Some(h.clone()));
        assert_eq!(h.hash(), b.hash);
    }
}
