//! Drives the Bitcoin ledger directly: submissions, inclusion and
//! k-deep confirmation as seen with and without view lag.

use babylon_sim::btc::{liveness_payload, BtcLedger, BtcTxKind, InclusionPolicy};
use babylon_sim::crypto::{Digest, PartyId};
use rand::SeedableRng;

fn main() {
    let (interval, k, delta) = (3, 2, 1);
    let rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut btc = BtcLedger::new(interval, k, delta, InclusionPolicy::MaxDelay, rng);
    println!("R_fin = {}", btc.r_fin());
    let mut ids = Vec::new();
    for slot in 0..40u64 {
        if slot % 5 == 1 {
            let d = Digest::of(&slot.to_le_bytes());
            let id = btc.submit(BtcTxKind::Liveness, vec![liveness_payload(&d)], PartyId::Environment, slot).unwrap();
            ids.push((id, slot));
        }
        btc.produce_block(slot);
    }
    for (id, slot) in ids {
        let at = btc.location(id).map_or("pending".to_string(), |(h, _)| format!("block {h}"));
        println!("tx {id} submitted at {slot}: {at}, deadline {}", btc.deadline_height(slot));
    }
    for lag in [0, delta] {
        println!("lag {lag}: confirmed length at slot 39 = {}", btc.confirmed_len(39, lag));
    }
}
