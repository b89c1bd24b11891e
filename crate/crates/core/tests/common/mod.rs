#![allow(dead_code)]

use convoy_core::convoy_graph::{ConvoyGraph, Edge};
use convoy_core::fleet_sim::{FleetState, Scenario, VirtualLeader};

pub fn reference_graph() -> ConvoyGraph {
    ConvoyGraph::new(
        4,
        vec![
            Edge::new(0, 1, 1.0, 5.0, [-2.0, -4.0]),
            Edge::new(0, 3, 1.0, 5.0, [2.0, -4.0]),
            Edge::new(1, 2, 1.0, 5.0, [2.0, -4.0]),
        ],
    )
    .unwrap()
}

pub fn reference_scenario(q3: [f64; 2], q4: [f64; 2]) -> Scenario {
    Scenario {
        graph: reference_graph(),
        initial: FleetState::new(vec![[1.0, 5.0], [1.0, 0.0], q3, q4], vec![[0.0, 2.0]; 4])
            .unwrap(),
        r: vec![1.0; 3],
        t_f: 0.3,
        tau: 0.1,
        t_total: 10.0,
        virtual_leader: None,
    }
}

pub fn acquisition() -> Scenario {
    reference_scenario([5.0, 0.0], [3.0, 0.0])
}

pub fn lane_keeping() -> Scenario {
    let mut s = acquisition();
    s.virtual_leader = Some(VirtualLeader {
        attach_to: 0,
        offset: [1.0, -4.0],
        velocity: [0.0, 2.0],
        boundary: 2.0,
        mu: 1.0,
        omega: 5.0,
        r: 1.0,
    });
    s
}
