//! Deterministic slot-based simulator of a proof-of-stake chain that
//! checkpoints onto a simulated Bitcoin ledger and falls back to a
//! Bitcoin-hosted rollup when the validators stall.

pub mod adversary;
pub mod btc;
pub mod checkpoint;
pub mod checks;
pub mod client;
pub mod config;
pub mod crypto;
pub mod engine;
pub mod harness;
pub mod net;
pub mod pos;
pub mod scenario;
pub mod trace;
pub mod view;
pub mod world;
