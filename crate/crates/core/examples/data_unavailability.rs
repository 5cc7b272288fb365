//! The adversary checkpoints a block it never shows to anyone. Clients that
//! cannot fetch it stop at the same Bitcoin index and freeze their output.

use babylon_sim::harness::run_named;
use babylon_sim::scenario::Params;

fn main() {
    let (trace, report) = run_named("data_unavailability", &Params::default(), &[]).unwrap();
    for (_, e) in trace.of_kind("emergency_break") {
        println!("slot {:>3} {} break at btc index {}", e.slot, e.party, e.detail["index"]);
    }
    for (_, e) in trace.of_kind("withdrawal_granted") {
        println!("slot {:>3} {} granted {}", e.slot, e.party, e.detail);
    }
    for v in &report.verdicts {
        println!("{:<24} {}", v.check, v.result);
    }
}
