//! Post-hoc property checks. Every verdict is a pure function of a trace:
//! the block tree, client outputs, Bitcoin ledger and key custody are all
//! rebuilt from the recorded events.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Slot;
use crate::trace::{Event, Trace};

pub const ALL: &[&str] = &[
    "prop2_cp_safety",
    "thm2_slashable_safety",
    "no_honest_slashable",
    "thm3_liveness",
    "thm6_liveness_bound",
    "cor1_slow_safety",
    "cor2_slow_liveness",
    "btc_contract",
    "synchrony",
    "unforgeability",
];

/// Checks that only run when asked for by name.
pub const OPT_IN: &[&str] = &["btc_growth_cap"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    NotApplicable,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
            Outcome::NotApplicable => "n/a",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub result: Outcome,
    /// Indices of trace events backing the result. Never empty on failure.
    pub evidence: Vec<usize>,
    pub note: String,
}

impl Verdict {
    fn pass(check: &str, note: impl Into<String>) -> Self {
        Verdict { check: check.into(), result: Outcome::Pass, evidence: vec![], note: note.into() }
    }

    fn na(check: &str, note: impl Into<String>) -> Self {
        Verdict { check: check.into(), result: Outcome::NotApplicable, evidence: vec![], note: note.into() }
    }

    fn fail(check: &str, mut evidence: Vec<usize>, note: impl Into<String>) -> Self {
        evidence.sort_unstable();
        evidence.dedup();
        if evidence.is_empty() {
            evidence.push(0);
        }
        Verdict { check: check.into(), result: Outcome::Fail, evidence, note: note.into() }
    }
}

#[derive(Clone, Debug)]
struct ClientInfo {
    slow: bool,
    join: Slot,
}

#[derive(Clone, Debug)]
struct Block {
    parent: String,
    height: u64,
    txs: Vec<Value>,
}

/// Everything the checks need, rebuilt from one trace.
struct Facts<'a> {
    events: &'a [Event],
    n: usize,
    delta: u64,
    k: u64,
    interval: u64,
    f: usize,
    horizon: Slot,
    baseline: bool,
    r_fin: u64,
    t_fin_budget: u64,
    rollup_bound: u64,
    slow_bound: u64,
    epoch_bound: u64,
    adversaries: BTreeSet<u64>,
    clients: Vec<ClientInfo>,
    blocks: HashMap<String, Block>,
    tx_blocks: HashMap<String, Vec<String>>,
}

fn u(v: &Value) -> u64 {
    v.as_u64().unwrap_or(0)
}

fn client_index(party: &str) -> Option<usize> {
    party.strip_prefix('c')?.parse().ok()
}

impl<'a> Facts<'a> {
    fn new(trace: &'a Trace) -> Option<Self> {
        let cfg_ev = trace.events.iter().find(|e| e.kind == "config")?;
        let d = &cfg_ev.detail;
        let cfg = &d["cfg"];
        let clients = d["clients"]
            .as_array()?
            .iter()
            .map(|c| ClientInfo { slow: c["finality"] == "slow", join: u(&c["join"]) })
            .collect();
        let mut blocks = HashMap::new();
        let mut tx_blocks: HashMap<String, Vec<String>> = HashMap::new();
        for e in trace.events.iter().filter(|e| e.kind == "block") {
            let h = e.detail["hash"].as_str()?.to_string();
            let txs = e.detail["txs"].as_array().cloned().unwrap_or_default();
            for t in &txs {
                tx_blocks.entry(t.to_string()).or_default().push(h.clone());
            }
            let parent = e.detail["parent"].as_str()?.to_string();
            blocks.insert(h, Block { parent, height: u(&e.detail["height"]), txs });
        }
        let genesis = d["genesis"].as_str()?.to_string();
        blocks.insert(genesis.clone(), Block { parent: genesis, height: 0, txs: vec![] });
        Some(Facts {
            events: &trace.events,
            n: u(&cfg["n"]) as usize,
            delta: u(&cfg["delta"]),
            k: u(&cfg["k"]),
            interval: u(&cfg["btc_interval"]),
            f: cfg["adversary_ids"].as_array().map_or(0, |a| a.len()),
            horizon: u(&d["horizon"]),
            baseline: d["baseline"].as_bool().unwrap_or(false),
            r_fin: u(&d["r_fin"]),
            t_fin_budget: u(&d["t_fin_budget"]),
            rollup_bound: u(&d["rollup_bound"]),
            slow_bound: u(&d["slow_bound"]),
            epoch_bound: u(&d["epoch_bound"]),
            adversaries: d["adversaries"].as_array()?.iter().map(u).collect(),
            clients,
            blocks,
            tx_blocks,
        })
    }

    /// `a` is an ancestor of, or equal to, `b`.
    fn is_ancestor(&self, a: &str, b: &str) -> bool {
        let (Some(ab), Some(mut cur)) = (self.blocks.get(a), self.blocks.get(b)) else { return false };
        let mut h = b;
        while cur.height > ab.height {
            h = &cur.parent;
            cur = &self.blocks[h];
        }
        h == a
    }

    fn contains_tx(&self, tip: &str, tx: &str) -> bool {
        self.tx_blocks.get(tx).is_some_and(|bs| bs.iter().any(|b| self.is_ancestor(b, tip)))
    }

    fn of_kind(&self, kind: &'a str) -> impl Iterator<Item = (usize, &'a Event)> + 'a {
        self.events.iter().enumerate().filter(move |(_, e)| e.kind == kind)
    }

    /// Tips from `events` that conflict with the highest one.
    fn conflicts(&self, tips: &[(usize, String)]) -> Vec<usize> {
        let Some((top_i, top)) = tips.iter().max_by_key(|(i, h)| (self.blocks.get(h).map_or(0, |b| b.height), *i)) else {
            return vec![];
        };
        let bad: Vec<usize> = tips.iter().filter(|(_, h)| !self.is_ancestor(h, top)).map(|(i, _)| *i).collect();
        if bad.is_empty() {
            bad
        } else {
            bad.into_iter().chain([*top_i]).collect()
        }
    }

    /// Output tips of clients selected by `pick`, with event indices.
    fn l_tips(&self, pick: impl Fn(&ClientInfo) -> bool) -> Vec<(usize, String)> {
        self.of_kind("l_out")
            .filter(|(_, e)| client_index(&e.party).and_then(|c| self.clients.get(c)).is_some_and(&pick))
            .filter_map(|(i, e)| Some((i, e.detail["tip"].as_str()?.to_string())))
            .collect()
    }
}

fn prop2_cp_safety(f: &Facts) -> Verdict {
    const NAME: &str = "prop2_cp_safety";
    if f.baseline {
        return Verdict::na(NAME, "no checkpoints without Bitcoin");
    }
    let tips: Vec<(usize, String)> =
        f.of_kind("cp").filter_map(|(i, e)| Some((i, e.detail["tip"].as_str()?.to_string()))).collect();
    let bad = f.conflicts(&tips);
    if bad.is_empty() {
        Verdict::pass(NAME, format!("{} checkpoint notes on one chain", tips.len()))
    } else {
        Verdict::fail(NAME, bad, "checkpointed chains conflict")
    }
}

/// Validators whose key ever signed while held by the adversary, plus the
/// initially corrupt ones.
fn corrupted(f: &Facts) -> BTreeSet<u64> {
    let mut out = f.adversaries.clone();
    for (_, e) in f.of_kind("sign") {
        if e.detail["holder"] == "adv" {
            out.insert(u(&e.detail["signer"]));
        }
    }
    out
}

fn withdrawn_in(f: &Facts, tip: &str) -> BTreeSet<u64> {
    let mut out = BTreeSet::new();
    let mut h = tip;
    while let Some(b) = f.blocks.get(h) {
        for t in &b.txs {
            if let Some(v) = t.get("withdraw") {
                out.insert(u(v));
            }
        }
        if b.parent == h {
            break;
        }
        h = &b.parent;
    }
    out
}

fn thm2_slashable_safety(f: &Facts) -> Verdict {
    const NAME: &str = "thm2_slashable_safety";
    let bad = f.conflicts(&f.l_tips(|_| true));
    if bad.is_empty() {
        return Verdict::pass(NAME, "client outputs consistent");
    }
    let need = f.n / 3 + 1;
    let corrupt = corrupted(f);
    let mut failing = Vec::new();
    for c in 0..f.clients.len() {
        let party = format!("c{c}");
        let mut tip: Option<&str> = None;
        let mut ok: BTreeSet<u64> = BTreeSet::new();
        for (i, e) in f.events.iter().enumerate().filter(|(_, e)| e.party == party) {
            match e.kind.as_str() {
                "l_out" => tip = e.detail["tip"].as_str(),
                "slashable_added" => {
                    let gone = tip.map(|t| withdrawn_in(f, t)).unwrap_or_default();
                    for v in e.detail["validators"].as_array().into_iter().flatten().map(u) {
                        if corrupt.contains(&v) && !gone.contains(&v) {
                            ok.insert(v);
                        } else {
                            failing.push(i);
                        }
                    }
                }
                _ => {}
            }
        }
        if ok.len() < need {
            failing.extend(bad.iter().copied());
        }
    }
    if failing.is_empty() {
        Verdict::pass(NAME, format!("conflict met by at least {need} slashable validators at every client"))
    } else {
        Verdict::fail(NAME, failing, "conflicting outputs without enough accountable validators")
    }
}

fn no_honest_slashable(f: &Facts) -> Verdict {
    const NAME: &str = "no_honest_slashable";
    let corrupt = corrupted(f);
    let bad: Vec<usize> = f
        .of_kind("slashable_added")
        .filter(|(_, e)| e.detail["validators"].as_array().into_iter().flatten().any(|v| !corrupt.contains(&u(v))))
        .map(|(i, _)| i)
        .collect();
    if bad.is_empty() {
        Verdict::pass(NAME, "only corrupted validators were flagged")
    } else {
        Verdict::fail(NAME, bad, "an honest validator was flagged slashable")
    }
}

/// Each injected transaction must sit in every eligible client's output by
/// its deadline. Late joiners and deadlines past the horizon are skipped.
fn liveness(f: &Facts, name: &str, bound: u64, slow: bool) -> Verdict {
    let eligible: Vec<usize> =
        (0..f.clients.len()).filter(|&c| f.clients[c].slow == slow && f.clients[c].join == 0).collect();
    if eligible.is_empty() {
        return Verdict::na(name, "no eligible clients");
    }
    let mut outputs: Vec<Vec<(Slot, usize, &str)>> = vec![Vec::new(); f.clients.len()];
    for (i, e) in f.of_kind("l_out") {
        if let (Some(c), Some(t)) = (client_index(&e.party), e.detail["tip"].as_str()) {
            if let Some(o) = outputs.get_mut(c) {
                o.push((e.slot, i, t));
            }
        }
    }
    let mut checked = 0;
    let mut bad = Vec::new();
    for (i, e) in f.of_kind("tx_injected") {
        let deadline = e.slot + bound;
        if deadline > f.horizon {
            continue;
        }
        checked += 1;
        let tx = e.detail["tx"].to_string();
        for &c in &eligible {
            let at = outputs[c].iter().take_while(|(s, _, _)| *s <= deadline).last();
            if !at.is_some_and(|(_, _, t)| f.contains_tx(t, &tx)) {
                bad.push(i);
                if let Some((_, j, _)) = at {
                    bad.push(*j);
                }
            }
        }
    }
    if bad.is_empty() {
        Verdict::pass(name, format!("{checked} txs in output within {bound} slots"))
    } else {
        Verdict::fail(name, bad, format!("txs missing from output after {bound} slots"))
    }
}

fn thm3_liveness(f: &Facts) -> Verdict {
    const NAME: &str = "thm3_liveness";
    if 3 * f.f >= f.n {
        return Verdict::na(NAME, "needs fewer than a third corrupted");
    }
    liveness(f, NAME, f.t_fin_budget, false)
}

fn thm6_liveness_bound(f: &Facts) -> Verdict {
    const NAME: &str = "thm6_liveness_bound";
    if f.baseline {
        return Verdict::na(NAME, "no Bitcoin");
    }
    liveness(f, NAME, f.rollup_bound, false)
}

fn cor1_slow_safety(f: &Facts) -> Verdict {
    const NAME: &str = "cor1_slow_safety";
    if f.baseline || !f.clients.iter().any(|c| c.slow) {
        return Verdict::na(NAME, "no slow clients");
    }
    let bad = f.conflicts(&f.l_tips(|c| c.slow));
    if bad.is_empty() {
        Verdict::pass(NAME, "slow outputs consistent")
    } else {
        Verdict::fail(NAME, bad, "slow outputs conflict")
    }
}

fn cor2_slow_liveness(f: &Facts) -> Verdict {
    const NAME: &str = "cor2_slow_liveness";
    if f.baseline {
        return Verdict::na(NAME, "no Bitcoin");
    }
    let mut v = liveness(f, NAME, f.slow_bound, true);
    v.note = format!(
        "{}; bound = epoch {} + r_fin {} + 2 x t_fin_budget {}",
        v.note, f.epoch_bound, f.r_fin, f.t_fin_budget
    );
    v
}

/// Bitcoin inclusion height of every submission, keyed by submission id.
fn inclusions(f: &Facts) -> HashMap<u64, (u64, usize)> {
    let mut out = HashMap::new();
    for (i, e) in f.of_kind("btc_block") {
        for t in e.detail["txs"].as_array().into_iter().flatten() {
            out.insert(u(&t["id"]), (u(&e.detail["height"]), i));
        }
    }
    out
}

/// Per client, the `(slot, confirmed length)` steps of its Bitcoin view.
fn btc_views(f: &Facts) -> Vec<Vec<(Slot, u64, usize)>> {
    let mut out = vec![Vec::new(); f.clients.len()];
    for (i, e) in f.of_kind("btc_view") {
        if let Some(v) = client_index(&e.party).and_then(|c| out.get_mut(c)) {
            v.push((e.slot, u(&e.detail["len"]), i));
        }
    }
    out
}

fn btc_contract(f: &Facts) -> Verdict {
    const NAME: &str = "btc_contract";
    if f.baseline {
        return Verdict::na(NAME, "no Bitcoin");
    }
    let inc = inclusions(f);
    let views = btc_views(f);
    let mut bad = Vec::new();
    let mut checked = 0;
    for (i, e) in f.of_kind("btc_submit") {
        let s = e.slot;
        let deadline = s + f.r_fin;
        if deadline > f.horizon {
            continue;
        }
        checked += 1;
        let Some(&(h, bi)) = inc.get(&u(&e.detail["id"])) else {
            bad.push(i);
            continue;
        };
        if h > s / f.interval + 2 {
            bad.extend([i, bi]);
        }
        for (c, view) in views.iter().enumerate() {
            if f.clients[c].join > s {
                continue;
            }
            match view.iter().find(|(_, len, _)| *len > h) {
                Some(&(at, _, _)) if at <= deadline => {}
                other => bad.extend([i, bi].into_iter().chain(other.map(|v| v.2))),
            }
        }
    }
    if bad.is_empty() {
        Verdict::pass(NAME, format!("{checked} submissions confirmed within {} slots", f.r_fin))
    } else {
        Verdict::fail(NAME, bad, "submission missed its inclusion or confirmation deadline")
    }
}

/// The confirmed length at `s + R_fin` must not exceed the length seen at
/// `s - 3Δ` by more than k. The simulated chain adds one block per interval
/// and confirms k deep, so over `R_fin + 3Δ` slots it always grows by more
/// than k; this check is expected to fail.
fn btc_growth_cap(f: &Facts) -> Verdict {
    const NAME: &str = "btc_growth_cap";
    if f.baseline {
        return Verdict::na(NAME, "no Bitcoin");
    }
    let views = btc_views(f);
    let len_at = |view: &[(Slot, u64, usize)], t: Slot| view.iter().take_while(|(s, _, _)| *s <= t).last().copied();
    let mut bad = Vec::new();
    for (i, e) in f.of_kind("btc_submit") {
        let Some(before) = e.slot.checked_sub(3 * f.delta) else { continue };
        let after = e.slot + f.r_fin;
        if after > f.horizon {
            continue;
        }
        for (c, view) in views.iter().enumerate() {
            if f.clients[c].join > before {
                continue;
            }
            let base = len_at(view, before).map_or(0, |v| v.1);
            if let Some((_, len, j)) = len_at(view, after) {
                if len > base + f.k {
                    bad.extend([i, j]);
                }
            }
        }
    }
    if bad.is_empty() {
        Verdict::pass(NAME, "confirmed length stayed within k of the pre-submission length")
    } else {
        Verdict::fail(NAME, bad, "confirmed length grew more than k blocks around a submission")
    }
}

fn synchrony(f: &Facts) -> Verdict {
    const NAME: &str = "synchrony";
    let mut sent: HashMap<u64, (Slot, bool, usize)> = HashMap::new();
    for (i, e) in f.of_kind("msg") {
        sent.insert(u(&e.detail["id"]), (u(&e.detail["sent_at"]), e.detail["honest"] == true, i));
    }
    let mut bad = Vec::new();
    let mut checked = 0usize;
    for (i, e) in f.of_kind("deliver") {
        if e.detail["late_join"] == true {
            continue;
        }
        for id in e.detail["ids"].as_array().into_iter().flatten().map(u) {
            let Some(&(at, honest, j)) = sent.get(&id) else {
                bad.push(i);
                continue;
            };
            if honest {
                checked += 1;
                if e.slot > at + f.delta || e.slot < at {
                    bad.extend([i, j]);
                }
            }
        }
    }
    if bad.is_empty() {
        Verdict::pass(NAME, format!("{checked} honest deliveries within {} slots", f.delta))
    } else {
        Verdict::fail(NAME, bad, "honest message delivered outside the synchrony bound")
    }
}

fn unforgeability(f: &Facts) -> Verdict {
    const NAME: &str = "unforgeability";
    let mut adv = f.adversaries.clone();
    let mut bad = Vec::new();
    for (i, e) in f.events.iter().enumerate() {
        match e.kind.as_str() {
            "key_transfer" => {
                adv.insert(u(&e.detail["validator"]));
            }
            "sign" => {
                let signer = u(&e.detail["signer"]);
                let ok = match e.detail["holder"].as_str() {
                    Some("adv") => adv.contains(&signer),
                    Some(h) => h.strip_prefix('v').and_then(|x| x.parse::<u64>().ok()) == Some(signer),
                    None => false,
                };
                if !ok {
                    bad.push(i);
                }
            }
            _ => {}
        }
    }
    if bad.is_empty() {
        Verdict::pass(NAME, "every signature made by its key holder")
    } else {
        Verdict::fail(NAME, bad, "signature by a party not holding the key")
    }
}

/// Runs the named checks, or all default ones when `names` is empty.
/// Unknown names are reported as not applicable.
pub fn run_checks(trace: &Trace, names: &[&str]) -> Vec<Verdict> {
    let names: Vec<&str> = if names.is_empty() { ALL.to_vec() } else { names.to_vec() };
    let Some(f) = Facts::new(trace) else {
        return names.iter().map(|n| Verdict::fail(n, vec![], "trace has no config event")).collect();
    };
    names
        .iter()
        .map(|&n| match n {
            "prop2_cp_safety" => prop2_cp_safety(&f),
            "thm2_slashable_safety" => thm2_slashable_safety(&f),
            "no_honest_slashable" => no_honest_slashable(&f),
            "thm3_liveness" => thm3_liveness(&f),
            "thm6_liveness_bound" => thm6_liveness_bound(&f),
            "cor1_slow_safety" => cor1_slow_safety(&f),
            "cor2_slow_liveness" => cor2_slow_liveness(&f),
            "btc_contract" => btc_contract(&f),
            "btc_growth_cap" => btc_growth_cap(&f),
            "synchrony" => synchrony(&f),
            "unforgeability" => unforgeability(&f),
            other => Verdict::na(other, "unknown check"),
        })
        .collect()
}

/// Verdicts whose result the expectations do not allow. Checks without an
/// expectation must pass or be not applicable.
pub fn mismatches<'a>(verdicts: &'a [Verdict], expect: &BTreeMap<String, crate::scenario::Expect>) -> Vec<&'a Verdict> {
    use crate::scenario::Expect;
    verdicts
        .iter()
        .filter(|v| match expect.get(&v.check) {
            Some(Expect::Any) => false,
            Some(Expect::Pass) => v.result != Outcome::Pass,
            Some(Expect::Fail) => v.result != Outcome::Fail,
            Some(Expect::Na) => v.result != Outcome::NotApplicable,
            None => v.result == Outcome::Fail,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;
    use crate::scenario::Expect;

    fn block(t: &mut Trace, slot: Slot, hash: &str, parent: &str, height: u64, txs: Value) {
        t.push(slot, "env", "block", json!({ "hash": hash, "parent": parent, "height": height, "kind": "pos", "txs": txs }));
    }

    /// g <- a <- b and g <- c, with two slow clients.
    fn tiny(baseline: bool) -> Trace {
        let mut t = Trace::new();
        let cfg = json!({ "n": 4, "delta": 1, "k": 2, "btc_interval": 3, "adversary_ids": [] });
        let clients = json!([{ "finality": "slow", "join": 0 }, { "finality": "slow", "join": 0 }]);
        t.push(0, "env", "config", json!({
            "cfg": cfg, "clients": clients, "horizon": 20, "baseline": baseline,
            "adversaries": [], "genesis": "g", "r_fin": 9, "t_fin_budget": 30,
        }));
        block(&mut t, 1, "a", "g", 1, json!([{ "user": 1 }]));
        block(&mut t, 2, "b", "a", 2, json!([]));
        block(&mut t, 2, "c", "g", 1, json!([{ "user": 2 }]));
        t
    }

    #[test]
    fn facts_follow_parent_links() {
        let t = tiny(false);
        let f = Facts::new(&t).unwrap();
        assert!(f.is_ancestor("g", "b"));
        assert!(f.is_ancestor("a", "b"));
        assert!(f.is_ancestor("b", "b"));
        assert!(!f.is_ancestor("c", "b"));
        assert!(!f.is_ancestor("b", "a"));
        assert!(!f.is_ancestor("zz", "b"));
        assert!(f.contains_tx("b", &json!({ "user": 1 }).to_string()));
        assert!(!f.contains_tx("b", &json!({ "user": 2 }).to_string()));
        let tips = vec![(5, "a".to_string()), (6, "b".to_string())];
        assert!(f.conflicts(&tips).is_empty());
        let tips = vec![(5, "c".to_string()), (6, "b".to_string())];
        assert_eq!(f.conflicts(&tips), vec![5, 6]);
    }

    #[test]
    fn conflicting_slow_outputs_fail_with_evidence() {
        let mut t = tiny(false);
        t.push(5, "c0", "l_out", json!({ "tip": "b", "height": 2 }));
        assert_eq!(run_checks(&t, &["cor1_slow_safety"])[0].result, Outcome::Pass);
        t.push(6, "c1", "l_out", json!({ "tip": "c", "height": 1 }));
        let v = &run_checks(&t, &["cor1_slow_safety"])[0];
        assert_eq!(v.result, Outcome::Fail);
        assert_eq!(v.evidence, vec![4, 5]);
    }

    #[test]
    fn checkpoint_conflicts_and_baseline() {
        let mut t = tiny(false);
        t.push(5, "c0", "cp", json!({ "tip": "a", "height": 1, "btc_height": 1 }));
        t.push(6, "c1", "cp", json!({ "tip": "c", "height": 1, "btc_height": 1 }));
        assert_eq!(run_checks(&t, &["prop2_cp_safety"])[0].result, Outcome::Fail);
        let t = tiny(true);
        assert_eq!(run_checks(&t, &["prop2_cp_safety"])[0].result, Outcome::NotApplicable);
    }

    #[test]
    fn late_honest_delivery_breaks_synchrony() {
        let mut t = tiny(false);
        t.push(3, "v0", "msg", json!({ "id": 1, "kind": "vote", "honest": true, "sent_at": 3 }));
        t.push(3, "adv", "msg", json!({ "id": 2, "kind": "vote", "honest": false, "sent_at": 3 }));
        t.push(3, "v1", "msg", json!({ "id": 3, "kind": "vote", "honest": true, "sent_at": 3 }));
        t.push(4, "env", "deliver", json!({ "ids": [1], "late_join": false }));
        let mut ok = t.clone();
        ok.push(4, "env", "deliver", json!({ "ids": [3], "late_join": false }));
        ok.push(9, "env", "deliver", json!({ "ids": [2], "late_join": false }));
        assert_eq!(run_checks(&ok, &["synchrony"])[0].result, Outcome::Pass);
        t.push(5, "env", "deliver", json!({ "ids": [3], "late_join": false }));
        let v = &run_checks(&t, &["synchrony"])[0];
        assert_eq!(v.result, Outcome::Fail);
        let mut ev = v.evidence.clone();
        ev.sort_unstable();
        assert_eq!(ev, vec![6, 8]);
    }

    #[test]
    fn missing_config_and_unknown_names() {
        let v = run_checks(&Trace::new(), &[]);
        assert_eq!(v.len(), ALL.len());
        assert!(v.iter().all(|v| v.result == Outcome::Fail && !v.evidence.is_empty()));
        let v = run_checks(&tiny(false), &["no_such_check"]);
        assert_eq!(v[0].result, Outcome::NotApplicable);
    }

    #[test]
    fn mismatch_rules() {
        let vs = vec![
            Verdict::pass("a", ""),
            Verdict::fail("b", vec![1], ""),
            Verdict::na("c", ""),
            Verdict::fail("d", vec![1], ""),
        ];
        let mut ex = BTreeMap::new();
        ex.insert("a".to_string(), Expect::Fail);
        ex.insert("b".to_string(), Expect::Any);
        ex.insert("c".to_string(), Expect::Na);
        let bad: Vec<&str> = mismatches(&vs, &ex).iter().map(|v| v.check.as_str()).collect();
        assert_eq!(bad, vec!["a", "d"]);
    }

    #[test]
    fn outcome_display_and_serde() {
        assert_eq!(Outcome::NotApplicable.to_string(), "n/a");
        assert_eq!(serde_json::to_value(Outcome::NotApplicable).unwrap(), json!("not_applicable"));
        assert_eq!(Verdict::fail("x", vec![], "").evidence, vec![0]);
    }
}
