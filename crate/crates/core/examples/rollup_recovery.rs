//! A censoring minority keeps user transactions out of PoS blocks. A liveness
//! transaction on Bitcoin freezes the chain and then switches clients to the
//! Bitcoin-hosted rollup until the censored transactions are included.

use babylon_sim::harness::run_named;
use babylon_sim::scenario::Params;

fn main() {
    let (trace, report) = run_named("censorship", &Params::default(), &[]).unwrap();
    for (_, e) in trace.of_kind("mode_change").filter(|(_, e)| e.party == "c0") {
        println!("slot {:>3} c0 -> {} (btc height {})", e.slot, e.detail["mode"], e.detail["btc_height"]);
    }
    let bundles = trace.of_kind("block").filter(|(_, e)| e.detail["kind"] == "bundle").count();
    println!("{bundles} rollup bundles");
    for name in ["thm3_liveness", "thm6_liveness_bound"] {
        let v = report.verdict(name).unwrap();
        println!("{name}: {} ({})", v.result, v.note);
    }
}
