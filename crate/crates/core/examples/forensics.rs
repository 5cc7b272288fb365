//! A coalition above one third equivocates and finalizes two conflicting
//! blocks. Clients identify the slashable validators from the conflicting
//! checkpoints and fraud proofs on Bitcoin.

use babylon_sim::harness::run_named;
use babylon_sim::scenario::Params;

fn main() {
    let (trace, report) = run_named("safety_violation_recovery", &Params::default(), &[]).unwrap();
    if let Some((_, e)) = trace.of_kind("equivocation").next() {
        println!("slot {:>3} equivocation {}", e.slot, e.detail);
    }
    for (_, e) in trace.of_kind("slashable_added") {
        println!("slot {:>3} {} slashable {} via {}", e.slot, e.party, e.detail["validators"], e.detail["source"]);
    }
    for v in &report.verdicts {
        println!("{:<24} {:<5} {}", v.check, v.result, v.note);
    }
}
