//! Runs the honest scenario and prints each check and every client's final
//! output height.

use std::collections::BTreeMap;

use babylon_sim::harness::run_named;
use babylon_sim::scenario::Params;

fn main() {
    let (trace, report) = run_named("honest", &Params { seed: 1, ..Default::default() }, &[]).unwrap();
    for v in &report.verdicts {
        println!("{:<24} {:<5} {}", v.check, v.result, v.note);
    }
    let mut heights = BTreeMap::new();
    for (_, e) in trace.of_kind("l_out") {
        heights.insert(e.party.clone(), e.detail["height"].as_u64().unwrap());
    }
    println!("final L heights: {heights:?}");
    println!("{} events, as expected: {}", trace.len(), report.ok());
}
