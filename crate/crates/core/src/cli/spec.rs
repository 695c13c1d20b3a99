// SPDX-License-Identifier: Apache-2.0

//! JSON topology description consumed by the simulator.
//!
//! ```json
//! {
//!   "params": { "m": 256, "k": 5, "defaults": { "delay_ms": 1.0 } },
//!   "nodes": [ { "name": "tm", "kind": "tm" }, { "name": "s1", "kind": "switch" } ],
//!   "links": [ { "a": "tm", "b": "s1", "delay_ms": 0.5, "capacity_mbps": 1000 } ],
//!   "seed": 42
//! }
//! ```
//!
//! The machine-readable schema lives in `schema/topology.schema.json`.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fid::{FidParams, DEFAULT_MAX_GEN_RETRIES};
use crate::protocol::fsm::Timers;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> SpecError {
    SpecError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecKind {
    Tm,
    Switch,
    Host,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub kind: SpecKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_mbps: Option<f64>,
}

/// Model parameters; every field may be omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Defaults {
    pub delay_ms: f64,
    pub capacity_mbps: f64,
    pub discovery_wait_ms: f64,
    pub request_timeout_ms: f64,
    pub max_retries: u32,
    pub tm_service_ms: f64,
    pub tm_per_lid_ms: f64,
    pub ctrl_delay_ms: f64,
    pub tm_if_delay_ms: f64,
    pub hop_limit: u8,
    /// Zero disables statistics reporting.
    pub stats_period_ms: f64,
    pub limit_ms: f64,
}

impl Default for Defaults {
    fn default() -> Self {
        Defaults {
            delay_ms: 1.0,
            capacity_mbps: 1000.0,
            discovery_wait_ms: 100.0,
            request_timeout_ms: 2000.0,
            max_retries: 3,
            tm_service_ms: 1.0,
            tm_per_lid_ms: 0.1,
            ctrl_delay_ms: 0.5,
            tm_if_delay_ms: 0.5,
            hop_limit: 64,
            stats_period_ms: 0.0,
            limit_ms: 3_600_000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_gen_retries")]
    pub max_gen_retries: u32,
    #[serde(default)]
    pub defaults: Defaults,
}

fn default_m() -> usize {
    crate::fid::DEFAULT_WIDTH
}

fn default_k() -> usize {
    crate::fid::DEFAULT_BITS_PER_LID
}

fn default_gen_retries() -> u32 {
    DEFAULT_MAX_GEN_RETRIES
}

impl Default for Params {
    fn default() -> Self {
        Params {
            m: default_m(),
            k: default_k(),
            max_gen_retries: default_gen_retries(),
            defaults: Defaults::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    #[serde(default)]
    pub params: Params,
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub seed: u64,
}

/// Converts milliseconds to whole microseconds.
pub fn ms_to_us(ms: f64) -> u64 {
    (ms * 1000.0).round() as u64
}

/// Simulator settings derived from [`Defaults`], in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub timers: Timers,
    pub tm_service_us: u64,
    pub tm_per_lid_us: u64,
    pub ctrl_delay_us: u64,
    pub tm_if_delay_us: u64,
    pub hop_limit: u8,
    pub stats_period_us: u64,
    pub limit_us: u64,
}

/// A link with endpoints resolved to node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolvedLink {
    pub a: usize,
    pub b: usize,
    pub delay_us: u64,
    pub capacity_bps: u64,
}

impl TopologySpec {
    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let spec: TopologySpec = serde_json::from_str(text).map_err(|e| SpecError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("specs always serialize");
        s.push('\n');
        s
    }

    pub fn fid_params(&self) -> FidParams {
        FidParams {
            m: self.params.m,
            k: self.params.k,
            max_gen_retries: self.params.max_gen_retries,
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        let d = &self.params.defaults;
        SimConfig {
            timers: Timers {
                discovery_wait_us: ms_to_us(d.discovery_wait_ms),
                request_timeout_us: ms_to_us(d.request_timeout_ms),
                max_retries: d.max_retries,
            },
            tm_service_us: ms_to_us(d.tm_service_ms),
            tm_per_lid_us: ms_to_us(d.tm_per_lid_ms),
            ctrl_delay_us: ms_to_us(d.ctrl_delay_ms),
            tm_if_delay_us: ms_to_us(d.tm_if_delay_ms),
            hop_limit: d.hop_limit,
            stats_period_us: ms_to_us(d.stats_period_ms),
            limit_us: ms_to_us(d.limit_ms),
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn resolved_links(&self) -> Vec<ResolvedLink> {
        let d = &self.params.defaults;
        self.links
            .iter()
            .map(|l| ResolvedLink {
                a: self.index_of(&l.a).expect("validated"),
                b: self.index_of(&l.b).expect("validated"),
                delay_us: ms_to_us(l.delay_ms.unwrap_or(d.delay_ms)),
                capacity_bps: (l.capacity_mbps.unwrap_or(d.capacity_mbps) * 1e6).round() as u64,
            })
            .collect()
    }

    /// Checks every structural rule; the error names the offending field.
    pub fn validate(&self) -> Result<(), SpecError> {
        self.fid_params()
            .validate()
            .map_err(|e| invalid("params", e.to_string()))?;
        self.check_defaults()?;

        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.name.is_empty() {
                return Err(invalid(format!("nodes[{i}].name"), "must not be empty"));
            }
            if index.insert(&n.name, i).is_some() {
                return Err(invalid(format!("nodes[{i}].name"), format!("duplicate name {:?}", n.name)));
            }
        }
        let tms: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].kind == SpecKind::Tm)
            .collect();
        if tms.len() != 1 {
            return Err(invalid("nodes", format!("exactly one tm node required, found {}", tms.len())));
        }

        let mut adj = vec![Vec::new(); self.nodes.len()];
        let mut seen = BTreeSet::new();
        for (i, l) in self.links.iter().enumerate() {
            let a = *index
                .get(l.a.as_str())
                .ok_or_else(|| invalid(format!("links[{i}].a"), format!("unknown node {:?}", l.a)))?;
            let b = *index
                .get(l.b.as_str())
                .ok_or_else(|| invalid(format!("links[{i}].b"), format!("unknown node {:?}", l.b)))?;
            if a == b {
                return Err(invalid(format!("links[{i}]"), "self-loop"));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(invalid(format!("links[{i}]"), "duplicate link"));
            }
            let (ka, kb) = (self.nodes[a].kind, self.nodes[b].kind);
            if ka == SpecKind::Host && kb == SpecKind::Host {
                return Err(invalid(format!("links[{i}]"), "hosts may only link to switches or the tm"));
            }
            for (field, v) in [("delay_ms", l.delay_ms), ("capacity_mbps", l.capacity_mbps)] {
                if let Some(v) = v {
                    if !v.is_finite() || v < 0.0 || (field == "capacity_mbps" && v == 0.0) {
                        return Err(invalid(format!("links[{i}].{field}"), "must be a finite positive number"));
                    }
                }
            }
            adj[a].push(b);
            adj[b].push(a);
        }

        // Everything must be reachable from the TM without relaying through hosts.
        let tm = tms[0];
        let has_switch = self.nodes.iter().any(|n| n.kind == SpecKind::Switch);
        if has_switch && !adj[tm].iter().any(|&n| self.nodes[n].kind == SpecKind::Switch) {
            return Err(invalid("links", "the tm must link to at least one switch"));
        }
        let mut reached = vec![false; self.nodes.len()];
        reached[tm] = true;
        let mut queue = VecDeque::from([tm]);
        while let Some(v) = queue.pop_front() {
            if self.nodes[v].kind == SpecKind::Host {
                continue;
            }
            for &n in &adj[v] {
                if !reached[n] {
                    reached[n] = true;
                    queue.push_back(n);
                }
            }
        }
        if let Some(i) = reached.iter().position(|r| !r) {
            return Err(invalid(
                format!("nodes[{i}]"),
                format!("{:?} is not connected to the tm", self.nodes[i].name),
            ));
        }
        Ok(())
    }

    fn check_defaults(&self) -> Result<(), SpecError> {
        let d = &self.params.defaults;
        let fields = [
            ("delay_ms", d.delay_ms, false),
            ("capacity_mbps", d.capacity_mbps, true),
            ("discovery_wait_ms", d.discovery_wait_ms, true),
            ("request_timeout_ms", d.request_timeout_ms, true),
            ("tm_service_ms", d.tm_service_ms, false),
            ("tm_per_lid_ms", d.tm_per_lid_ms, false),
            ("ctrl_delay_ms", d.ctrl_delay_ms, false),
            ("tm_if_delay_ms", d.tm_if_delay_ms, false),
            ("stats_period_ms", d.stats_period_ms, false),
            ("limit_ms", d.limit_ms, true),
        ];
        for (name, v, positive) in fields {
            if !v.is_finite() || v < 0.0 || (positive && v == 0.0) {
                let need = if positive { "positive" } else { "non-negative" };
                return Err(invalid(format!("params.defaults.{name}"), format!("must be finite and {need}")));
            }
        }
        if d.max_retries == 0 {
            return Err(invalid("params.defaults.max_retries", "must be positive"));
        }
        Ok(())
    }
}
