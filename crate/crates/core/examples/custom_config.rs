//! Loads timing parameters from TOML and runs a named scenario with them.

use babylon_sim::config::SimConfig;
use babylon_sim::harness::run_named;
use babylon_sim::scenario::Params;

fn main() {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/slow_bitcoin.toml").into());
    let cfg = SimConfig::load(path.as_ref()).unwrap();
    println!("R_fin = {}, rollup bound = {}, slow bound = {}", cfg.r_fin(), cfg.rollup_liveness_bound(), cfg.slow_liveness_bound());
    let p = Params { cfg: Some(cfg), ..Default::default() };
    let (_, report) = run_named("honest", &p, &[]).unwrap();
    for v in &report.verdicts {
        println!("{:<24} {:<5} {}", v.check, v.result, v.note);
    }
}
