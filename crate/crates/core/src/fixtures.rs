//! Small built-in example inputs used throughout the documentation and test
//! suites: a four-node ring network with hand-checkable equilibria, a plus
//! intersection, and rectangular road grids.

use crate::netgen::Centerline;
use crate::network::{DemandEntry, DemandTable, Link, LinkId, LinkKind, Node, NodeId, NodeKind};

/// Demand-to-flow scale for the toy fixture. Its demand table spans a 60 s
/// period but describes a denser pulse; a scale of 3 (a 20 s effective
/// period) yields the reference congestion levels the fixture's expected
/// values were computed at.
pub const TOY_FLOW_SCALE: f64 = 3.0;

/// Demand period of the toy fixture in seconds.
pub const TOY_PERIOD_S: f64 = 60.0;

pub const TOY_A: NodeId = NodeId(0);
pub const TOY_B: NodeId = NodeId(1);
pub const TOY_C: NodeId = NodeId(2);
pub const TOY_D: NodeId = NodeId(3);

/// Four nodes on a ring, eight directed links in four streams:
/// A-B, A-C, B-D, C-D and their mirrors. Every footpath is 12 m long,
/// 1 m wide, capacity 4847 ped/m/hr, walked at 1.46 m/s.
///
/// Node letters map to ids A=0, B=1, C=2, D=3. Link ids: A-B=0, B-A=1,
/// A-C=2, C-A=3, B-D=4, D-B=5, C-D=6, D-C=7.
pub fn toy_nodes_links() -> (Vec<Node>, Vec<Link>) {
    let node = |id: u64, x: f64, y: f64| Node {
        id: NodeId(id),
        x,
        y,
        kind: NodeKind::Intersection,
    };
    let nodes = vec![
        node(0, 0.0, 12.0),  // A
        node(1, 12.0, 12.0), // B
        node(2, 0.0, 0.0),   // C
        node(3, 12.0, 0.0),  // D
    ];
    let link = |id: u64, from: u64, to: u64, mirror: u64| Link {
        id: LinkId(id),
        from: NodeId(from),
        to: NodeId(to),
        length_m: 12.0,
        width_m: 1.0,
        capacity: 4847.0,
        free_flow_time_s: 12.0 / 1.46,
        kind: LinkKind::Footpath,
        mirror: Some(LinkId(mirror)),
    };
    let links = vec![
        link(0, 0, 1, 1), // A-B
        link(1, 1, 0, 0), // B-A
        link(2, 0, 2, 3), // A-C
        link(3, 2, 0, 2), // C-A
        link(4, 1, 3, 5), // B-D
        link(5, 3, 1, 4), // D-B
        link(6, 2, 3, 7), // C-D
        link(7, 3, 2, 6), // D-C
    ];
    (nodes, links)
}

/// Ten pedestrians from C to B over 60 s. The two routes C-A-B and C-D-B
/// are symmetric, so equilibrium splits them 5/5.
pub fn toy_demand_case1() -> DemandTable {
    DemandTable::new(
        vec![DemandEntry {
            origin: TOY_C,
            destination: TOY_B,
            demand_ped: 10.0,
        }],
        TOY_PERIOD_S,
    )
    .unwrap()
}

/// Case 1 plus eight pedestrians from B to A, whose only reasonable route
/// is the direct B-A link. The counterflow on B-A makes route C-A-B costlier
/// through the A-B stream, pushing C-to-B demand toward C-D-B.
pub fn toy_demand_case2() -> DemandTable {
    DemandTable::new(
        vec![
            DemandEntry {
                origin: TOY_C,
                destination: TOY_B,
                demand_ped: 10.0,
            },
            DemandEntry {
                origin: TOY_B,
                destination: TOY_A,
                demand_ped: 8.0,
            },
        ],
        TOY_PERIOD_S,
    )
    .unwrap()
}

/// Two 100 m roads crossing at the origin: the smallest input that makes
/// the generator produce a four-corner junction with crossings.
pub fn plus_centerlines() -> Vec<Centerline> {
    vec![
        Centerline {
            id: 1,
            points: vec![(-50.0, 0.0), (50.0, 0.0)],
            road_class: "residential".into(),
        },
        Centerline {
            id: 2,
            points: vec![(0.0, -50.0), (0.0, 50.0)],
            road_class: "residential".into(),
        },
    ]
}

/// A rectangular road grid: `rows` horizontal and `cols` vertical
/// centerlines spaced `spacing_m` apart, each extended `margin_m` beyond the
/// outermost junction so terminal arms exist on all four sides.
pub fn grid_centerlines(rows: usize, cols: usize, spacing_m: f64, margin_m: f64) -> Vec<Centerline> {
    let mut lines = Vec::with_capacity(rows + cols);
    let width = (cols as f64 - 1.0) * spacing_m;
    let height = (rows as f64 - 1.0) * spacing_m;
    let mut id = 1;
    for r in 0..rows {
        let y = r as f64 * spacing_m;
        lines.push(Centerline {
            id,
            points: vec![(-margin_m, y), (width + margin_m, y)],
            road_class: "residential".into(),
        });
        id += 1;
    }
    for c in 0..cols {
        let x = c as f64 * spacing_m;
        lines.push(Centerline {
            id,
            points: vec![(x, -margin_m), (x, height + margin_m)],
            road_class: "residential".into(),
        });
        id += 1;
    }
    lines
}
