//! Half the validators go silent. Without Bitcoin an inactivity leak lets a
//! late client be shown a different chain; with Bitcoin the chain waits, and
//! liveness bounds fail once 2f >= n but hold for a smaller silent set.

use babylon_sim::harness::run_named;
use babylon_sim::scenario::Params;

fn main() {
    let runs = [("baseline n=4 f=2", true, None, None), ("babylon n=4 f=2", false, None, None), ("babylon n=7 f=2", false, Some(7), Some(2))];
    for (label, baseline, n, f) in runs {
        let p = Params { n, f, baseline, ..Default::default() };
        let (_, report) = run_named("half_split", &p, &[]).unwrap();
        println!("{label} (as expected: {})", report.ok());
        for v in &report.verdicts {
            println!("  {:<24} {}", v.check, v.result);
        }
    }
}
