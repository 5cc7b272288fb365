//! Runs a scenario over many seeds in parallel and writes traces and a
//! summary to a directory (default: a fresh temp dir).

use std::path::PathBuf;

use babylon_sim::harness::{run_batch, summary};
use babylon_sim::scenario::Params;

fn main() {
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("babylon-batch"), PathBuf::from);
    std::fs::create_dir_all(&out).unwrap();
    let seeds: Vec<u64> = (0..16).collect();
    let reports = run_batch("censorship", &Params::default(), &seeds, &[], Some(&out)).unwrap();
    print!("{}", summary(&reports));
    println!("traces in {}", out.display());
}
