//! Keys of validators that already withdrew are bought and used to build a
//! long-range fork for a late-joining client. Without Bitcoin the victim
//! adopts the fork; with checkpoints it does not.

use babylon_sim::harness::run_named;
use babylon_sim::scenario::Params;

fn main() {
    for baseline in [true, false] {
        let p = Params { seed: 1, baseline, ..Default::default() };
        let (trace, report) = run_named("posterior_corruption", &p, &[]).unwrap();
        println!("baseline = {baseline}");
        for (_, e) in trace.of_kind("long_range") {
            println!("  slot {:>3} fork of {} blocks shown to c{}", e.slot, e.detail["len"], e.detail["victim"]);
        }
        for name in ["thm2_slashable_safety", "prop2_cp_safety", "cor1_slow_safety"] {
            println!("  {name}: {}", report.verdict(name).unwrap().result);
        }
    }
}
