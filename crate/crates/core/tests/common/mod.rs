//! Networks shared by the integration tests.
#![allow(dead_code)]

use eflow_core::oracle::feasibility_check;
use eflow_core::topology::{
    build_network, min_feasible_energy, DataLinkSpec, EnergyLinkSpec, FlowVector, Network,
    NetworkDescription,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn data(id: u32, src: usize, dst: usize) -> DataLinkSpec {
    DataLinkSpec {
        id,
        src,
        dst,
        sigma: 0.1,
    }
}

fn energy(id: u32, src: usize, dst: usize, alpha: f64) -> EnergyLinkSpec {
    EnergyLinkSpec {
        id,
        src,
        dst,
        alpha,
    }
}

/// Five sources feeding node 6, energy links in the ring 1 -> 2 -> ... -> 5 -> 1.
pub fn topology2() -> (Network, FlowVector, Vec<f64>) {
    let net = build_network(&NetworkDescription {
        nodes: 6,
        data_links: (1..=5).map(|k| data(k, k as usize, 6)).collect(),
        energy_links: (1..=5)
            .map(|k| energy(k, k as usize, k as usize % 5 + 1, 0.5))
            .collect(),
        supply: None,
    })
    .unwrap();
    let t = FlowVector::new(vec![0.5, 2.0, 0.5, 0.5, 2.0]).unwrap();
    (net, t, vec![15.0; 6])
}

/// Five-node, two-slot example: source 1, sink 5.
pub fn topology1() -> (Network, FlowVector, Vec<Vec<f64>>) {
    let net = build_network(&NetworkDescription {
        nodes: 5,
        data_links: vec![
            data(1, 1, 2),
            data(2, 1, 3),
            data(3, 3, 4),
            data(4, 3, 2),
            data(5, 2, 5),
            data(6, 3, 5),
            data(7, 4, 5),
        ],
        energy_links: vec![
            energy(1, 1, 3, 0.6),
            energy(2, 3, 4, 0.5),
            energy(3, 4, 2, 0.5),
        ],
        supply: Some(vec![3.0, 0.0, 0.0, 0.0, -3.0]),
    })
    .unwrap();
    let t = FlowVector::new(vec![2.0, 1.0, 0.5, 0.125, 2.125, 0.375, 0.5]).unwrap();
    let harvest = vec![
        vec![15.0, 10.0],
        vec![8.0, 6.0],
        vec![5.0, 9.0],
        vec![1.0, 6.0],
        vec![0.0, 0.0],
    ];
    (net, t, harvest)
}

/// Two disjoint two-hop paths 1 -> {2, 3} -> 4 carrying 2 units; node 1 can
/// feed both relays.
pub fn diamond(with_energy_links: bool) -> (Network, Vec<f64>) {
    let net = build_network(&NetworkDescription {
        nodes: 4,
        data_links: vec![data(1, 1, 2), data(2, 1, 3), data(3, 2, 4), data(4, 3, 4)],
        energy_links: if with_energy_links {
            vec![energy(1, 1, 2, 0.8), energy(2, 1, 3, 0.8)]
        } else {
            vec![]
        },
        supply: Some(vec![2.0, 0.0, 0.0, -2.0]),
    })
    .unwrap();
    (net, vec![2.0, 0.5, 1.5, 0.0])
}

/// A feasible single-slot instance on 3 or 4 nodes: forward data links
/// towards the last node, random energy links, and harvests that leave some
/// nodes short so that transfers matter.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (Network, FlowVector, Vec<f64>) {
    loop {
        let nodes = rng.gen_range(3..=4);
        let mut data_links = Vec::new();
        for src in 1..nodes {
            let first = rng.gen_range(src + 1..=nodes);
            data_links.push((src, first));
            for dst in src + 1..=nodes {
                if dst != first && rng.gen_bool(0.4) {
                    data_links.push((src, dst));
                }
            }
        }
        let mut energy_links = Vec::new();
        for src in 1..=nodes {
            for dst in 1..=nodes {
                if src != dst && rng.gen_bool(0.35) {
                    energy_links.push((src, dst, rng.gen_range(0.3..=1.0)));
                }
            }
        }
        let net = build_network(&NetworkDescription {
            nodes,
            data_links: data_links
                .iter()
                .enumerate()
                .map(|(k, &(s, d))| DataLinkSpec {
                    id: k as u32 + 1,
                    src: s,
                    dst: d,
                    sigma: rng.gen_range(0.05..0.5),
                })
                .collect(),
            energy_links: energy_links
                .iter()
                .enumerate()
                .map(|(k, &(s, d, a))| energy(k as u32 + 1, s, d, a))
                .collect(),
            supply: None,
        })
        .unwrap();
        let t =
            FlowVector::new(data_links.iter().map(|_| rng.gen_range(0.1..1.5)).collect()).unwrap();
        let floors = min_feasible_energy(&net, &t).unwrap();
        let e: Vec<f64> = floors
            .iter()
            .map(|f| f * rng.gen_range(0.5..3.0) + rng.gen_range(0.0..2.0))
            .collect();
        if feasibility_check(&net, &t, &e).unwrap().feasible {
            return (net, t, e);
        }
    }
}
