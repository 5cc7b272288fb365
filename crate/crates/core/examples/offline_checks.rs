//! Checks are a pure function of the trace: write a run to NDJSON, read it
//! back and re-check it without the simulator.

use std::fs::File;
use std::io::BufReader;

use babylon_sim::checks::run_checks;
use babylon_sim::harness::{run_named, write_trace};
use babylon_sim::scenario::Params;
use babylon_sim::trace::Trace;

fn main() {
    let (trace, report) = run_named("honest", &Params { seed: 7, ..Default::default() }, &[]).unwrap();
    let path = std::env::temp_dir().join("babylon-offline.ndjson");
    write_trace(&path, &trace).unwrap();
    let back = Trace::read_ndjson(BufReader::new(File::open(&path).unwrap())).unwrap();
    let again = run_checks(&back, &[]);
    assert_eq!(again, report.verdicts);
    println!("{} events re-read from {}", back.len(), path.display());
    for v in again {
        println!("{:<24} {}", v.check, v.result);
    }
}
