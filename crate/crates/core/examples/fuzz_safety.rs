//! Random committees, adversaries, networks and Bitcoin inclusion policies.
//! Safety checks must hold on every run; liveness may fail when the
//! adversary is too large.

use std::collections::BTreeMap;

use babylon_sim::checks::Outcome;
use babylon_sim::harness::run_named;
use babylon_sim::scenario::Params;

fn main() {
    let runs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100u64);
    let mut tally: BTreeMap<String, [usize; 3]> = BTreeMap::new();
    for seed in 0..runs {
        let (_, report) = run_named("fuzz", &Params { seed, ..Default::default() }, &[]).unwrap();
        for v in report.verdicts {
            let slot = match v.result {
                Outcome::Pass => 0,
                Outcome::Fail => 1,
                Outcome::NotApplicable => 2,
            };
            tally.entry(v.check).or_default()[slot] += 1;
        }
    }
    println!("{:<24} {:>5} {:>5} {:>5}", "check", "pass", "fail", "n/a");
    for (check, [p, f, na]) in tally {
        println!("{check:<24} {p:>5} {f:>5} {na:>5}");
    }
}
