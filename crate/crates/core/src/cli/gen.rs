// SPDX-License-Identifier: Apache-2.0

//! Random topology generation.
//!
//! `links` counts switch-to-switch links. The switches form a random
//! spanning tree (each switch, in shuffled order, joins a uniformly chosen
//! earlier one) plus extra links drawn uniformly from the missing pairs. The
//! TM is linked to `s0` only and hosts attach to uniformly chosen switches.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cli::spec::{LinkSpec, NodeSpec, Params, SpecKind, TopologySpec};

/// Sub-stream of the seed reserved for topology generation.
pub const STREAM_TOPOLOGY: u64 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("at least one switch is required")]
    NoSwitches,
    #[error("{links} links cannot connect {switches} switches (need at least {min})")]
    TooFewLinks { switches: usize, links: usize, min: usize },
    #[error("{links} links exceed the {max} possible between {switches} switches")]
    TooManyLinks { switches: usize, links: usize, max: usize },
}

fn link(a: &str, b: &str) -> LinkSpec {
    LinkSpec {
        a: a.to_string(),
        b: b.to_string(),
        delay_ms: None,
        capacity_mbps: None,
    }
}

pub fn generate(switches: usize, links: usize, hosts: usize, seed: u64) -> Result<TopologySpec, GenError> {
    if switches == 0 {
        return Err(GenError::NoSwitches);
    }
    let min = switches - 1;
    let max = switches * (switches - 1) / 2;
    if links < min {
        return Err(GenError::TooFewLinks { switches, links, min });
    }
    if links > max {
        return Err(GenError::TooManyLinks { switches, links, max });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_TOPOLOGY);

    let sw = |i: usize| format!("s{i}");
    let mut nodes = vec![NodeSpec { name: "tm".into(), kind: SpecKind::Tm }];
    nodes.extend((0..switches).map(|i| NodeSpec { name: sw(i), kind: SpecKind::Switch }));
    nodes.extend((0..hosts).map(|i| NodeSpec { name: format!("h{i}"), kind: SpecKind::Host }));

    let mut adj = vec![vec![false; switches]; switches];
    let mut edges = Vec::with_capacity(links);
    let mut order: Vec<usize> = (0..switches).collect();
    order.shuffle(&mut rng);
    for i in 1..switches {
        let parent = order[rng.random_range(0..i)];
        let (a, b) = (order[i].min(parent), order[i].max(parent));
        adj[a][b] = true;
        edges.push((a, b));
    }
    let mut missing: Vec<(usize, usize)> = (0..switches)
        .flat_map(|a| (a + 1..switches).map(move |b| (a, b)))
        .filter(|&(a, b)| !adj[a][b])
        .collect();
    let extra = links - min;
    let (chosen, _) = missing.partial_shuffle(&mut rng, extra);
    edges.extend_from_slice(chosen);

    let mut spec_links = vec![link("tm", &sw(0))];
    spec_links.extend(edges.iter().map(|&(a, b)| link(&sw(a), &sw(b))));
    for h in 0..hosts {
        let s = rng.random_range(0..switches);
        spec_links.push(link(&sw(s), &format!("h{h}")));
    }
    Ok(TopologySpec {
        params: Params::default(),
        nodes,
        links: spec_links,
        seed,
    })
}
