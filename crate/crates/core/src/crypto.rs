//! Simulated cryptography.
//!
//! Digests are SHA-256 over canonical byte serializations, and every interned
//! object is kept in a per-run registry so that a digest collision is detected
//! rather than silently accepted. Signatures carry no key material: a
//! signature by validator `v` over message `m` exists exactly when some party
//! holding `v`'s key asked the registry to produce it. Key custody is explicit,
//! which is what makes posterior corruption expressible as a holder transfer.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// A 32-byte content digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn of(bytes: &[u8]) -> Self {
        let mut out = [0u8; 32];
        out.copy_from_slice(&Sha256::digest(bytes));
        Digest(out)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(Digest(arr))
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.short())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Stable validator identity. Initial validators are `0..n`, staking-queue
/// nodes take the ids after them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValidatorId(pub u32);

impl fmt::Display for ValidatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Anyone that can act in a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PartyId {
    Validator(ValidatorId),
    Client(u32),
    Adversary,
    Environment,
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Validator(v) => write!(f, "{v}"),
            PartyId::Client(c) => write!(f, "c{c}"),
            PartyId::Adversary => f.write_str("adv"),
            PartyId::Environment => f.write_str("env"),
        }
    }
}

impl PartyId {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "adv" => Some(PartyId::Adversary),
            "env" => Some(PartyId::Environment),
            _ => {
                if let Some(rest) = s.strip_prefix('v') {
                    rest.parse().ok().map(|v| PartyId::Validator(ValidatorId(v)))
                } else if let Some(rest) = s.strip_prefix('c') {
                    rest.parse().ok().map(PartyId::Client)
                } else {
                    None
                }
            }
        }
    }

    /// Stable integer used to fork per-party random streams.
    pub fn stream_id(&self) -> u64 {
        match self {
            PartyId::Validator(v) => 1 << 32 | v.0 as u64,
            PartyId::Client(c) => 2 << 32 | *c as u64,
            PartyId::Adversary => 3 << 32,
            PartyId::Environment => 4 << 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyHandle {
    pub validator: ValidatorId,
    pub epoch_acquired: u64,
    pub holder: PartyId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature {
    pub signer: ValidatorId,
    pub message: Digest,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("{holder} attempted to sign with the key of {validator} it does not hold")]
    Forgery { holder: PartyId, validator: ValidatorId },
    #[error("key of {0} was erased on exit and can no longer sign")]
    KeyErased(ValidatorId),
    #[error("no key registered for {0}")]
    UnknownKey(ValidatorId),
    #[error("digest collision between distinct objects")]
    Collision,
    #[error("signatures over different messages cannot be aggregated")]
    MixedMessages,
    #[error("{0} is not a member of the active set")]
    NotMember(ValidatorId),
}

/// Signer bitmap over an ordered active set. Bit `i` refers to the `i`-th
/// member; bits are packed big-endian, so index 0 is the high bit of byte 0.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Bitmap {
    bytes: Vec<u8>,
    len: usize,
}

impl Bitmap {
    pub fn new(len: usize) -> Self {
        Bitmap { bytes: vec![0; byte_len(len)], len }
    }

    pub fn from_bytes(bytes: Vec<u8>, len: usize) -> Option<Self> {
        if bytes.len() != byte_len(len) {
            return None;
        }
        let bm = Bitmap { bytes, len };
        // padding bits past `len` must be clear
        if (len..bm.bytes.len() * 8).any(|i| bm.raw_get(i)) {
            return None;
        }
        Some(bm)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bitmap index {i} out of range {}", self.len);
        self.bytes[i / 8] |= 0x80 >> (i % 8);
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.len && self.raw_get(i)
    }

    fn raw_get(&self, i: usize) -> bool {
        self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| self.raw_get(i))
    }

    /// Members of `active_set` whose bit is set.
    pub fn members(&self, active_set: &[ValidatorId]) -> BTreeSet<ValidatorId> {
        self.ones().filter_map(|i| active_set.get(i).copied()).collect()
    }

    pub fn from_members(
        members: impl IntoIterator<Item = ValidatorId>,
        active_set: &[ValidatorId],
    ) -> Result<Self, CryptoError> {
        let mut bm = Bitmap::new(active_set.len());
        for m in members {
            let idx = active_set.iter().position(|v| *v == m).ok_or(CryptoError::NotMember(m))?;
            bm.set(idx);
        }
        Ok(bm)
    }
}

pub fn byte_len(bits: usize) -> usize {
    bits.div_ceil(8)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AggSignature {
    pub message: Digest,
    pub bitmap: Bitmap,
}

/// Aggregates signatures over one message into a signer bitmap.
pub fn aggregate(sigs: &[Signature], active_set: &[ValidatorId]) -> Result<AggSignature, CryptoError> {
    let message = sigs.first().map(|s| s.message).unwrap_or(Digest::ZERO);
    if sigs.iter().any(|s| s.message != message) {
        return Err(CryptoError::MixedMessages);
    }
    let bitmap = Bitmap::from_members(sigs.iter().map(|s| s.signer), active_set)?;
    Ok(AggSignature { message, bitmap })
}

/// Per-run registry of interned objects, key custody and produced signatures.
#[derive(Default, Debug)]
pub struct Registry {
    objects: HashMap<Digest, Vec<u8>>,
    keys: BTreeMap<ValidatorId, KeyHandle>,
    signatures: HashSet<(ValidatorId, Digest)>,
    erased: BTreeSet<ValidatorId>,
    keys_erased_on_exit: bool,
}

impl Registry {
    pub fn new(keys_erased_on_exit: bool) -> Self {
        Registry { keys_erased_on_exit, ..Default::default() }
    }

    /// Interns canonical bytes and returns their digest. A second distinct
    /// byte string with the same digest is rejected.
    pub fn intern(&mut self, bytes: Vec<u8>) -> Result<Digest, CryptoError> {
        let d = Digest::of(&bytes);
        match self.objects.get(&d) {
            Some(existing) if *existing != bytes => Err(CryptoError::Collision),
            Some(_) => Ok(d),
            None => {
                self.objects.insert(d, bytes);
                Ok(d)
            }
        }
    }

    pub fn lookup(&self, d: &Digest) -> Option<&[u8]> {
        self.objects.get(d).map(Vec::as_slice)
    }

    pub fn register_key(&mut self, validator: ValidatorId, holder: PartyId, epoch: u64) {
        self.keys.insert(validator, KeyHandle { validator, epoch_acquired: epoch, holder });
    }

    /// Moves custody of a key. Used when a validator leaves the active set.
    pub fn transfer_key(&mut self, validator: ValidatorId, holder: PartyId, epoch: u64) {
        if self.keys_erased_on_exit && holder == PartyId::Adversary {
            self.erased.insert(validator);
        }
        self.register_key(validator, holder, epoch);
    }

    pub fn key(&self, validator: ValidatorId) -> Option<&KeyHandle> {
        self.keys.get(&validator)
    }

    pub fn holder(&self, validator: ValidatorId) -> Option<PartyId> {
        self.keys.get(&validator).map(|k| k.holder)
    }

    pub fn sign(
        &mut self,
        holder: PartyId,
        validator: ValidatorId,
        message: Digest,
    ) -> Result<Signature, CryptoError> {
        let key = self.keys.get(&validator).ok_or(CryptoError::UnknownKey(validator))?;
        if key.holder != holder {
            return Err(CryptoError::Forgery { holder, validator });
        }
        if self.erased.contains(&validator) {
            return Err(CryptoError::KeyErased(validator));
        }
        self.signatures.insert((validator, message));
        Ok(Signature { signer: validator, message })
    }

    pub fn sign_bytes(
        &mut self,
        holder: PartyId,
        validator: ValidatorId,
        bytes: &[u8],
    ) -> Result<Signature, CryptoError> {
        self.sign(holder, validator, Digest::of(bytes))
    }

    pub fn verify(&self, sig: &Signature) -> bool {
        self.signatures.contains(&(sig.signer, sig.message))
    }

    pub fn has_signature(&self, signer: ValidatorId, message: Digest) -> bool {
        self.signatures.contains(&(signer, message))
    }

    /// Re-checks every bitmapped signer of an aggregate.
    pub fn verify_aggregate(&self, agg: &AggSignature, active_set: &[ValidatorId]) -> bool {
        agg.bitmap.len() == active_set.len()
            && agg.bitmap.ones().all(|i| self.has_signature(active_set[i], agg.message))
    }
}
