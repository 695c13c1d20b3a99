// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;

use icnsim::cli::gen::generate;
use icnsim::cli::spec::{LinkSpec, NodeSpec, Params, SpecKind, TopologySpec};
use icnsim::fabric::FlowTable;
use icnsim::simnet::world::World;

fn chain(switches: usize) -> TopologySpec {
    let mut nodes = vec![NodeSpec { name: "tm".into(), kind: SpecKind::Tm }];
    let mut links = Vec::new();
    let mut prev = "tm".to_string();
    for i in 1..=switches {
        let name = format!("s{i}");
        nodes.push(NodeSpec { name: name.clone(), kind: SpecKind::Switch });
        links.push(LinkSpec { a: prev, b: name.clone(), delay_ms: None, capacity_mbps: None });
        prev = name;
    }
    TopologySpec { params: Params::default(), nodes, links, seed: 11 }
}

fn tables(w: &World, spec: &TopologySpec) -> Vec<(String, FlowTable)> {
    spec.nodes
        .iter()
        .filter(|n| n.kind == SpecKind::Switch)
        .map(|n| (n.name.clone(), w.table(&n.name).unwrap().clone()))
        .collect()
}

#[test]
fn chain_installs_two_attach_rules_per_joining_switch() {
    for s in 1..=8 {
        let mut w = World::new(&chain(s)).unwrap();
        w.run().unwrap();
        w.check_complete().unwrap();
        assert_eq!(w.controller().attach_rules(), 2 * (s as u64 - 1), "chain of {s}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn link_down_then_up_restores_tables(seed in any::<u64>(), switches in 2..8usize, extra in 0..6usize, hosts in 0..4usize, pick in any::<prop::sample::Index>()) {
        let max = switches * (switches - 1) / 2;
        let spec = generate(switches, (switches - 1 + extra).min(max), hosts, seed).unwrap();
        let mut w = World::new(&spec).unwrap();
        w.run().unwrap();
        w.check_complete().unwrap();
        let before = tables(&w, &spec);
        let graph_before = w.tm().graph().dump();

        let switch_links: Vec<&LinkSpec> = spec
            .links
            .iter()
            .filter(|l| l.a.starts_with('s') && l.b.starts_with('s'))
            .collect();
        let link = switch_links[pick.index(switch_links.len())];
        let t = w.now() + 1_000;
        w.schedule_link_state(t, &link.a, &link.b, false).unwrap();
        w.run().unwrap();
        prop_assert_eq!(w.tm().graph().validate(), Ok(()));
        let t = w.now() + 1_000;
        w.schedule_link_state(t, &link.a, &link.b, true).unwrap();
        w.run().unwrap();

        prop_assert_eq!(tables(&w, &spec), before);
        prop_assert_eq!(w.tm().graph().dump(), graph_before);
        prop_assert_eq!(w.tm().graph().validate(), Ok(()));
    }
}
