//! Scenario scripts: configuration, adversary strategy, environment inputs
//! and the verdict each check is expected to reach.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::btc::InclusionPolicy;
use crate::client::Finality;
use crate::config::{SimConfig, Slot};
use crate::crypto::ValidatorId;
use crate::net::NetworkPolicy;
use crate::pos::PosTx;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "strategy")]
pub enum Strategy {
    Follow,
    Silent,
    Censor { targets: Vec<u64> },
    Equivocate { height: u64 },
    /// Builds a private chain for `epoch` off the previous epoch's last
    /// block, checkpoints it at once and reveals the blocks at `reveal_at`.
    PrivateFork { epoch: u64, reveal_at: Slot },
    /// Waits for the keys of the initial set, then shows client `victim` a
    /// longer chain from genesis when it joins.
    PosteriorCorruption { victim: u32 },
    /// Silent; shows client `victim` an equally long chain from genesis that
    /// leaks every honest validator.
    LeakAttack { victim: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientSpec {
    pub finality: Finality,
    pub join: Slot,
    pub lag: u64,
}

impl ClientSpec {
    pub fn new(finality: Finality, join: Slot, lag: u64) -> Self {
        ClientSpec { finality, join, lag }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injection {
    pub slot: Slot,
    pub tx: PosTx,
}

/// What a check should report for this scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expect {
    Pass,
    Fail,
    Na,
    Any,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub cfg: SimConfig,
    pub horizon: Slot,
    pub strategy: Strategy,
    pub network: NetworkPolicy,
    pub inclusion: InclusionPolicy,
    pub clients: Vec<ClientSpec>,
    pub injections: Vec<Injection>,
    /// Plain accountable BFT: no Bitcoin interaction at all.
    pub baseline: bool,
    /// Stall length after which honest proposers leak non-voters.
    pub leak_after: Option<u64>,
    /// Honest validators beyond the initial set and staking queue.
    pub extra_honest: Vec<ValidatorId>,
    /// Keys the adversary holds from the start for validators outside every
    /// honest chain.
    pub attackers: Vec<ValidatorId>,
    pub expect: BTreeMap<String, Expect>,
}

pub const NAMES: &[&str] = &[
    "honest",
    "posterior_corruption",
    "data_unavailability",
    "censorship",
    "safety_violation_recovery",
    "half_split",
];

/// Knobs a caller may override when building a named scenario.
#[derive(Clone, Debug, Default)]
pub struct Params {
    /// Timing parameters (Δ, epoch length, k, Bitcoin interval, timeouts).
    /// Scenarios set their own committee size and adversary unless `n` or
    /// `f` are given.
    pub cfg: Option<SimConfig>,
    pub n: Option<usize>,
    pub f: Option<usize>,
    pub seed: u64,
    pub baseline: bool,
    pub finality: Option<Finality>,
}

fn user_txs(from: Slot, every: u64, until: Slot, first_id: u64) -> Vec<Injection> {
    (0..)
        .map(|i| (from + i * every, first_id + i))
        .take_while(|(s, _)| *s < until)
        .map(|(slot, id)| Injection { slot, tx: PosTx::User(id) })
        .collect()
}

fn ids(r: std::ops::Range<u32>) -> Vec<u32> {
    r.collect()
}

impl Scenario {
    fn base(name: &str, p: &Params, n: usize, adversaries: Vec<u32>, horizon: Slot) -> Self {
        let mut cfg = p.cfg.clone().unwrap_or_default();
        cfg.n = n;
        cfg.adversary_ids = adversaries;
        cfg.seed = p.seed;
        Scenario {
            name: name.to_string(),
            cfg,
            horizon,
            strategy: Strategy::Follow,
            network: NetworkPolicy::Uniform,
            inclusion: InclusionPolicy::Neutral,
            clients: Vec::new(),
            injections: Vec::new(),
            baseline: p.baseline,
            leak_after: None,
            extra_honest: Vec::new(),
            attackers: Vec::new(),
            expect: BTreeMap::new(),
        }
    }

    fn clients_for(&mut self, p: &Params, late: Option<Slot>) {
        let both = [Finality::Fast, Finality::Slow];
        let rules: Vec<Finality> = match p.finality {
            Some(f) => vec![f, f],
            None => both.to_vec(),
        };
        for (i, f) in rules.into_iter().enumerate() {
            self.clients.push(ClientSpec::new(f, 0, i as u64));
        }
        if let Some(j) = late {
            self.clients.push(ClientSpec::new(p.finality.unwrap_or(Finality::Fast), j, 0));
        }
    }

    fn expect(mut self, pairs: &[(&str, Expect)]) -> Self {
        for (k, v) in pairs {
            self.expect.insert(k.to_string(), *v);
        }
        self
    }

    /// Liveness bound that matters for this scenario's deadlines.
    fn tx_window(&self) -> Slot {
        self.horizon.saturating_sub(self.cfg.rollup_liveness_bound().max(self.cfg.slow_liveness_bound()))
    }
}

/// Builds a named scenario.
pub fn build(name: &str, p: &Params) -> Option<Scenario> {
    let sc = match name {
        "honest" => honest(p),
        "posterior_corruption" => posterior_corruption(p),
        "data_unavailability" => data_unavailability(p),
        "censorship" => censorship(p),
        "safety_violation_recovery" => safety_violation_recovery(p),
        "half_split" => half_split(p),
        "fuzz" => {
            let mut sc = fuzz(p.seed);
            sc.baseline = p.baseline;
            sc
        }
        _ => return None,
    };
    Some(sc)
}

pub fn honest(p: &Params) -> Scenario {
    let n = p.n.unwrap_or(4);
    let mut sc = Scenario::base("honest", p, n, vec![], 300);
    sc.clients_for(p, Some(60));
    let until = sc.tx_window().max(40);
    sc.injections = user_txs(3, 6, until, 0);
    sc.injections.push(Injection { slot: 20, tx: PosTx::WithdrawalRequest(ValidatorId(n as u32 - 1)) });
    sc
}

pub fn censorship(p: &Params) -> Scenario {
    let n = p.n.unwrap_or(7);
    let f = p.f.unwrap_or(n.div_ceil(3));
    let mut sc = Scenario::base("censorship", p, n, ids(0..f as u32), 700);
    sc.clients_for(p, None);
    let until = sc.tx_window().max(40);
    sc.injections = user_txs(5, 7, until, 0);
    let targets: Vec<u64> = sc
        .injections
        .iter()
        .filter_map(|i| match i.tx {
            PosTx::User(x) if x % 3 == 0 => Some(x),
            _ => None,
        })
        .collect();
    sc.strategy = Strategy::Censor { targets };
    sc
}

pub fn safety_violation_recovery(p: &Params) -> Scenario {
    let n = p.n.unwrap_or(7);
    let f = p.f.unwrap_or(n.div_ceil(3));
    let mut sc = Scenario::base("safety_violation_recovery", p, n, ids(0..f as u32), 700);
    sc.clients_for(p, None);
    sc.strategy = Strategy::Equivocate { height: 6 };
    let until = sc.tx_window().max(40);
    sc.injections = user_txs(5, 9, until, 0);
    sc
}

pub fn data_unavailability(p: &Params) -> Scenario {
    let n = p.n.unwrap_or(7);
    let f = p.f.unwrap_or(2 * n / 3 + 1).min(n - 1);
    let mut sc = Scenario::base("data_unavailability", p, n, ids(0..f as u32), 400);
    sc.clients_for(p, None);
    let epoch = 3;
    sc.strategy = Strategy::PrivateFork { epoch, reveal_at: 150 };
    sc.injections = user_txs(5, 9, 120, 0);
    sc.injections.push(Injection { slot: 22, tx: PosTx::WithdrawalRequest(ValidatorId(0)) });
    sc.expect(&[
        ("thm3_liveness", Expect::Any),
        ("thm6_liveness_bound", Expect::Any),
        ("cor2_slow_liveness", Expect::Any),
    ])
}

pub fn posterior_corruption(p: &Params) -> Scenario {
    let n = p.n.unwrap_or(4);
    let mut sc = Scenario::base("posterior_corruption", p, n, vec![], 320);
    sc.cfg.staking_queue = 0;
    let n32 = n as u32;
    sc.extra_honest = (n32..2 * n32).map(ValidatorId).collect();
    sc.attackers = (2 * n32..3 * n32).map(ValidatorId).collect();
    sc.clients.push(ClientSpec::new(Finality::Fast, 0, 0));
    sc.clients.push(ClientSpec::new(Finality::Slow, 0, 0));
    sc.clients.push(ClientSpec::new(p.finality.unwrap_or(Finality::Fast), 250, 0));
    sc.strategy = Strategy::PosteriorCorruption { victim: 2 };
    sc.injections = sc.extra_honest.iter().map(|v| Injection { slot: 2, tx: PosTx::Stake(*v) }).collect();
    for v in 0..n32 {
        sc.injections.push(Injection { slot: 3, tx: PosTx::WithdrawalRequest(ValidatorId(v)) });
    }
    sc.injections.extend(user_txs(5, 11, 150, 0));
    if p.baseline {
        sc.expect(&[("thm2_slashable_safety", Expect::Fail)])
    } else {
        sc
    }
}

pub fn half_split(p: &Params) -> Scenario {
    if p.baseline {
        let n = p.n.unwrap_or(4);
        let f = p.f.unwrap_or(n / 2);
        let mut sc = Scenario::base("half_split", p, n, ids(0..f as u32), 260);
        sc.clients.push(ClientSpec::new(Finality::Fast, 0, 0));
        sc.clients.push(ClientSpec::new(Finality::Fast, 200, 0));
        sc.strategy = Strategy::LeakAttack { victim: 1 };
        sc.leak_after = Some(30);
        sc.injections = user_txs(5, 9, 150, 0);
        return sc.expect(&[
            ("thm2_slashable_safety", Expect::Any),
            ("thm3_liveness", Expect::Any),
        ]);
    }
    let n = p.n.unwrap_or(4);
    let f = p.f.unwrap_or(n.div_ceil(2));
    let mut sc = Scenario::base("half_split", p, n, ids(0..f as u32), 500);
    sc.clients_for(p, None);
    sc.strategy = Strategy::Silent;
    let until = sc.tx_window().max(40);
    sc.injections = user_txs(5, 9, until, 0);
    if 2 * f >= n {
        sc.expect(&[
            ("thm6_liveness_bound", Expect::Fail),
            ("cor2_slow_liveness", Expect::Fail),
        ])
    } else {
        sc
    }
}

/// A randomized scenario for safety fuzzing: committee size, adversary
/// size and behavior, network and Bitcoin inclusion policies and timing
/// parameters are all drawn from `seed`.
pub fn fuzz(seed: u64) -> Scenario {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f022);
    let n = rng.gen_range(3..=9usize);
    let f = rng.gen_range(0..n);
    let cfg = SimConfig {
        delta: rng.gen_range(1..=2),
        epoch_len: rng.gen_range(2..=5),
        k: rng.gen_range(1..=4),
        btc_interval: rng.gen_range(2..=5),
        ..SimConfig::default()
    };
    let p = Params { cfg: Some(cfg), seed, ..Default::default() };
    let mut adversaries: Vec<u32> = (0..n as u32).collect();
    for i in (1..adversaries.len()).rev() {
        adversaries.swap(i, rng.gen_range(0..=i));
    }
    adversaries.truncate(f);
    adversaries.sort_unstable();
    let mut sc = Scenario::base("fuzz", &p, n, adversaries, 160);
    sc.clients_for(&p, rng.gen_bool(0.5).then(|| rng.gen_range(20..120)));
    sc.network = match rng.gen_range(0..4) {
        0 => NetworkPolicy::Zero,
        1 => NetworkPolicy::Uniform,
        2 => NetworkPolicy::MaxDelay,
        _ => NetworkPolicy::Split { late: (0..n).filter(|_| rng.gen_bool(0.5)).map(|v| format!("v{v}")).collect() },
    };
    sc.inclusion = match rng.gen_range(0..4) {
        0 => InclusionPolicy::Neutral,
        1 => InclusionPolicy::MaxDelay,
        2 => InclusionPolicy::RandomMonotone,
        _ => InclusionPolicy::ReverseSameSlot,
    };
    sc.strategy = if f == 0 {
        Strategy::Follow
    } else {
        match rng.gen_range(0..5) {
            0 => Strategy::Follow,
            1 => Strategy::Silent,
            2 => Strategy::Censor { targets: (0..20).filter(|_| rng.gen_bool(0.5)).collect() },
            3 => Strategy::Equivocate { height: rng.gen_range(2..12) },
            _ => Strategy::PrivateFork { epoch: rng.gen_range(2..5), reveal_at: rng.gen_range(40..140) },
        }
    };
    sc.injections = user_txs(3, rng.gen_range(3..12), 120, 0);
    sc
}
