//! Run configuration.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::ValidatorId;

pub type Slot = u64;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("unknown party {0}")]
    UnknownParty(String),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
}

/// Protocol and environment parameters. Times are in slots unless noted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Active validators per epoch.
    pub n: usize,
    /// Network delay bound.
    pub delta: u64,
    /// Blocks per epoch.
    pub epoch_len: u64,
    /// Bitcoin confirmation depth.
    pub k: u64,
    /// Slots between Bitcoin blocks.
    pub btc_interval: u64,
    /// Censorship timeout before a liveness transaction is posted.
    pub t_tm: Option<u64>,
    /// Rollup duration, in Bitcoin blocks.
    pub t_btc: Option<u64>,
    /// Liveness deadline used by the checkers.
    pub t_fin_budget: Option<u64>,
    pub seed: u64,
    pub adversary_ids: Vec<u32>,
    /// Nodes waiting in the staking queue at genesis.
    pub staking_queue: usize,
    /// Old keys cannot sign once their validator has left the active set.
    pub keys_erased: bool,
    /// Withdrawal delay used when Bitcoin checkpointing is disabled.
    pub unbonding_delay: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 4,
            delta: 1,
            epoch_len: 4,
            k: 2,
            btc_interval: 4,
            t_tm: None,
            t_btc: None,
            t_fin_budget: None,
            seed: 1,
            adversary_ids: Vec::new(),
            staking_queue: 8,
            keys_erased: false,
            unbonding_delay: 40,
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.n == 0 {
            return bad("n must be at least 1");
        }
        if self.delta == 0 {
            return bad("delta must be at least 1");
        }
        if self.epoch_len == 0 || self.k == 0 || self.btc_interval == 0 {
            return bad("epoch_len, k and btc_interval must be at least 1");
        }
        if self.t_btc() <= 2 * self.k {
            return bad("t_btc must exceed 2k");
        }
        for &a in &self.adversary_ids {
            if a as usize >= self.n {
                return Err(ConfigError::UnknownParty(format!("v{a}")));
            }
        }
        let distinct: BTreeSet<_> = self.adversary_ids.iter().collect();
        if distinct.len() != self.adversary_ids.len() {
            return bad("adversary_ids contains duplicates");
        }
        Ok(())
    }

    pub fn adversaries(&self) -> BTreeSet<ValidatorId> {
        self.adversary_ids.iter().map(|&a| ValidatorId(a)).collect()
    }

    pub fn is_adversary(&self, v: ValidatorId) -> bool {
        self.adversary_ids.contains(&v.0)
    }

    pub fn initial_set(&self) -> Vec<ValidatorId> {
        (0..self.n as u32).map(ValidatorId).collect()
    }

    pub fn queue_ids(&self) -> Vec<ValidatorId> {
        (self.n as u32..(self.n + self.staking_queue) as u32).map(ValidatorId).collect()
    }

    /// floor(2n/3)+1
    pub fn quorum(&self) -> usize {
        quorum(self.n)
    }

    /// Bitcoin liveness bound: an adversary may delay inclusion by one full
    /// block beyond the next, then confirmation needs k more.
    pub fn r_fin(&self) -> u64 {
        (self.k + 2) * self.btc_interval + self.delta
    }

    /// Slots an honest round may take before the next proposer takes over.
    pub fn round_timeout(&self) -> u64 {
        3 * self.delta + 2
    }

    /// Upper bound on the time to finalize one height when the only faults
    /// are crashed proposers.
    pub fn block_time_bound(&self) -> u64 {
        self.adversary_ids.len() as u64 * self.round_timeout() + 2 * self.delta + 2
    }

    /// Upper bound on the duration of one epoch.
    pub fn epoch_duration_bound(&self) -> u64 {
        self.epoch_len * self.block_time_bound()
    }

    pub fn t_fin_budget(&self) -> u64 {
        self.t_fin_budget
            .unwrap_or(3 * self.block_time_bound() + 3 * self.delta + 4)
    }

    pub fn t_tm(&self) -> u64 {
        self.t_tm.unwrap_or_else(|| self.t_fin_budget())
    }

    pub fn t_btc(&self) -> u64 {
        self.t_btc.unwrap_or(4 * self.k + 4)
    }

    /// Delivery bound when liveness is recovered through the rollup mode.
    pub fn rollup_liveness_bound(&self) -> u64 {
        3 * self.delta + 4 * self.r_fin() + self.t_tm()
    }

    /// Delivery bound for clients that only output checkpointed blocks.
    pub fn slow_liveness_bound(&self) -> u64 {
        self.epoch_duration_bound() + self.r_fin() + 2 * self.t_fin_budget()
    }
}

pub fn quorum(n: usize) -> usize {
    2 * n / 3 + 1
}

/// floor(n/2)+1
pub fn majority(n: usize) -> usize {
    n / 2 + 1
}

/// floor(n/3)+1
pub fn accountability_threshold(n: usize) -> usize {
    n / 3 + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quorum_is_strictly_more_than_two_thirds() {
        for n in 1..=30usize {
            let q = quorum(n);
            assert!(3 * q > 2 * n);
            assert!(3 * (q - 1) <= 2 * n);
        }
        assert_eq!(quorum(4), 3);
        assert_eq!(quorum(3), 3);
        assert_eq!(quorum(100), 67);
    }

    #[test]
    fn r_fin_matches_formula() {
        let cfg = SimConfig { k: 1, btc_interval: 1, delta: 2, ..Default::default() };
        assert_eq!(cfg.r_fin(), 3 + 2);
    }

    #[test]
    fn rejects_short_rollup() {
        let cfg = SimConfig { k: 3, t_btc: Some(6), ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = SimConfig { k: 3, t_btc: Some(7), ..Default::default() };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn rejects_unknown_adversary() {
        let cfg = SimConfig { n: 4, adversary_ids: vec![4], ..Default::default() };
        assert!(matches!(cfg.validate(), Err(ConfigError::UnknownParty(_))));
    }

    #[test]
    fn parses_toml() {
        let cfg = SimConfig::from_toml_str("n = 7\ndelta = 2\nadversary_ids = [0, 1]\n").unwrap();
        assert_eq!(cfg.n, 7);
        assert_eq!(cfg.delta, 2);
        assert_eq!(cfg.adversaries().len(), 2);
        assert!(SimConfig::from_toml_str("bogus = 1").is_err());
    }
}
