//! Invariants of the travel time models, the unit conversions, and the
//! solver, checked over randomized inputs.

use proptest::prelude::*;

use walkflow::assign::{solve, SolverConfig, SolverMode};
use walkflow::fixtures;
use walkflow::network::{
    build_network, DemandEntry, DemandTable, Link, LinkId, LinkKind, Node, NodeId, NodeKind,
};
use walkflow::pvdf::{
    eval_asym_components, eval_det_symmetric, fenton_wilkinson, sigma, AsymmetricParams,
    LogNormalSpec, PvdfConfig, SigmaParams, SymmetricParams,
};

const TAU: f64 = 0.685;
const CAP: f64 = 4847.0;

proptest! {
    #[test]
    fn symmetric_time_ignores_direction_labels(
        x in 0.0..12_000.0f64,
        xc in 0.0..12_000.0f64,
    ) {
        let p = SymmetricParams::default();
        let a = eval_det_symmetric(x, xc, TAU, CAP, &p).unwrap();
        let b = eval_det_symmetric(xc, x, TAU, CAP, &p).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn symmetric_time_rises_with_flow(
        x in 0.0..12_000.0f64,
        xc in 0.0..12_000.0f64,
        dx in 0.01..3_000.0f64,
    ) {
        let p = SymmetricParams::default();
        let t0 = eval_det_symmetric(x, xc, TAU, CAP, &p).unwrap();
        let t1 = eval_det_symmetric(x + dx, xc, TAU, CAP, &p).unwrap();
        prop_assert!(t1 > t0, "time fell from {t0} to {t1} when flow rose by {dx}");
    }

    #[test]
    fn spread_stays_between_zero_and_its_peak(
        x in 0.0..20_000.0f64,
        xc in 0.0..20_000.0f64,
    ) {
        let p = SigmaParams::default();
        let s = sigma(x, xc, TAU, CAP, &p).unwrap();
        prop_assert!(s > 0.0);
        prop_assert!(s <= TAU * p.phi * (1.0 + 1e-12), "spread {s} above peak");
    }

    #[test]
    fn interaction_term_is_bounded_by_mu(
        x in 0.0..20_000.0f64,
        xc in 0.0..20_000.0f64,
    ) {
        let p = AsymmetricParams::default();
        let (congestion, interaction) = eval_asym_components(x, xc, TAU, CAP, &p).unwrap();
        prop_assert!(congestion >= TAU);
        prop_assert!(
            interaction.abs() <= TAU * p.mu.abs() * (1.0 + 1e-12),
            "interaction {interaction} outside its envelope"
        );
    }

    #[test]
    fn volume_flow_conversion_round_trips(
        vols in prop::collection::vec(0.0..500.0f64, 8),
        scale in 0.01..20.0f64,
        period in 10.0..7_200.0f64,
    ) {
        let demand = fixtures::toy_demand_case1();
        let (nodes, links) = fixtures::toy_nodes_links();
        let net = build_network(nodes, links, &demand)
            .unwrap()
            .with_flow_scale(scale)
            .unwrap();
        let flows = net.volumes_to_flows(&vols, period).unwrap();
        let back = net.flows_to_volumes(&flows, period).unwrap();
        for (a, b) in vols.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{a} came back as {b}");
        }
    }

    #[test]
    fn folding_one_link_changes_nothing(
        mean in 0.1..100.0f64,
        std_ratio in 0.0..1.0f64,
    ) {
        let spec = LogNormalSpec::new(mean, mean * std_ratio).unwrap();
        let folded = fenton_wilkinson(&[spec]).unwrap();
        prop_assert_eq!(folded.mean_time(), spec.mean_time());
        prop_assert!((folded.std_time() - spec.std_time()).abs() <= 1e-12 * mean);
    }

    #[test]
    fn lognormal_moments_match_the_spec(
        mean in 0.1..100.0f64,
        std_ratio in 0.0..1.0f64,
    ) {
        let std = mean * std_ratio;
        let spec = LogNormalSpec::new(mean, std).unwrap();
        let m = (spec.log_mean() + spec.log_var() / 2.0).exp();
        let v = (spec.log_var().exp() - 1.0) * (2.0 * spec.log_mean() + spec.log_var()).exp();
        prop_assert!((m - mean).abs() <= 1e-9 * mean);
        prop_assert!((v.sqrt() - std).abs() <= 1e-9 * mean);
    }

    #[test]
    fn sampling_is_monotone_in_the_draw(
        mean in 0.1..100.0f64,
        std_ratio in 1e-6..1.0f64,
        z1 in -6.0..6.0f64,
        dz in 1e-6..6.0f64,
    ) {
        let spec = LogNormalSpec::new(mean, mean * std_ratio).unwrap();
        prop_assert!(spec.sample(z1 + dz) > spec.sample(z1));
    }

    #[test]
    fn solver_conserves_demand_and_decomposes_volumes(
        d1 in 0.5..40.0f64,
        d2 in 0.1..40.0f64,
        stochastic in any::<bool>(),
        seed in 0u64..1000,
    ) {
        let entries = vec![
            DemandEntry { origin: NodeId(2), destination: NodeId(1), demand_ped: d1 },
            DemandEntry { origin: NodeId(1), destination: NodeId(0), demand_ped: d2 },
        ];
        let demand = DemandTable::new(entries, fixtures::TOY_PERIOD_S).unwrap();
        let (nodes, links) = fixtures::toy_nodes_links();
        let net = build_network(nodes, links, &demand)
            .unwrap()
            .with_flow_scale(fixtures::TOY_FLOW_SCALE)
            .unwrap();
        let cfg = SolverConfig {
            max_iterations: 37,
            gap_tolerance: 0.0,
            mode: if stochastic { SolverMode::Stochastic } else { SolverMode::Deterministic },
            seed,
            ..SolverConfig::default()
        };
        let family = if stochastic {
            walkflow::pvdf::PvdfFamily::StochSymmetric
        } else {
            walkflow::pvdf::PvdfFamily::DetSymmetric
        };
        let result = solve(&net, &demand, &PvdfConfig::new(family), &cfg).unwrap();

        for entry in demand.entries() {
            let routed: f64 = result
                .paths
                .iter()
                .filter(|p| p.origin == entry.origin && p.destination == entry.destination)
                .map(|p| p.flow_ped)
                .sum();
            prop_assert!(
                (routed - entry.demand_ped).abs() <= 1e-9 * entry.demand_ped,
                "OD ({}, {}) routed {routed} of {}",
                entry.origin, entry.destination, entry.demand_ped
            );
        }

        let mut rebuilt = vec![0.0; result.volumes.len()];
        for path in &result.paths {
            for link in &path.links {
                rebuilt[net.link_position(*link).unwrap()] += path.flow_ped;
            }
        }
        let total = d1 + d2;
        for (got, want) in result.volumes.iter().zip(&rebuilt) {
            prop_assert!((got - want).abs() <= 1e-9 * total);
            prop_assert!(*got >= 0.0 && *got <= total * (1.0 + 1e-12));
        }

        for (pos, link) in net.links().iter().enumerate() {
            prop_assert!(result.times[pos] >= link.free_flow_time_s * (1.0 - 1e-12));
        }
    }
}

/// Paths may start or end at a centroid but never cut through one, even
/// when the centroid offers a much shorter connection.
#[test]
fn routing_never_passes_through_a_centroid() {
    let node = |id: u64, x: f64, kind: NodeKind| Node { id: NodeId(id), x, y: 0.0, kind };
    let nodes = vec![
        node(0, 0.0, NodeKind::ExternalCentroid),   // Y
        node(1, 1.0, NodeKind::Intersection),       // A
        node(2, 101.0, NodeKind::Intersection),     // B
        node(3, 102.0, NodeKind::ExternalCentroid), // Z
        node(4, 51.0, NodeKind::BlockCentroid),     // X, tempting shortcut
    ];
    let link = |id: u64, from: u64, to: u64, len: f64, kind: LinkKind, mirror: u64| Link {
        id: LinkId(id),
        from: NodeId(from),
        to: NodeId(to),
        length_m: len,
        width_m: 2.0,
        capacity: CAP,
        free_flow_time_s: len / 1.46,
        kind,
        mirror: Some(LinkId(mirror)),
    };
    let links = vec![
        link(0, 0, 1, 1.0, LinkKind::Connector, 1),
        link(1, 1, 0, 1.0, LinkKind::Connector, 0),
        link(2, 1, 2, 100.0, LinkKind::Footpath, 3),
        link(3, 2, 1, 100.0, LinkKind::Footpath, 2),
        link(4, 2, 3, 1.0, LinkKind::Connector, 5),
        link(5, 3, 2, 1.0, LinkKind::Connector, 4),
        link(6, 1, 4, 1.0, LinkKind::Connector, 7),
        link(7, 4, 1, 1.0, LinkKind::Connector, 6),
        link(8, 4, 2, 1.0, LinkKind::Connector, 9),
        link(9, 2, 4, 1.0, LinkKind::Connector, 8),
    ];
    let demand = DemandTable::new(
        vec![DemandEntry {
            origin: NodeId(0),
            destination: NodeId(3),
            demand_ped: 5.0,
        }],
        3600.0,
    )
    .unwrap();
    let net = build_network(nodes, links, &demand).unwrap();
    let result = solve(
        &net,
        &demand,
        &PvdfConfig::default(),
        &SolverConfig::default(),
    )
    .unwrap();

    assert_eq!(result.paths.len(), 1);
    assert_eq!(
        result.paths[0].links,
        vec![LinkId(0), LinkId(2), LinkId(4)],
        "route must stay on the long footpath instead of cutting the block"
    );
    assert_eq!(result.volume_of(LinkId(6)), Some(0.0));
    assert_eq!(result.volume_of(LinkId(8)), Some(0.0));
}
