//! Network representation for bidirectional pedestrian assignment.
//!
//! A footpath network is a directed graph in which every link belongs to a
//! *stream*: a pair of directed links sharing the same physical footpath in
//! opposite directions. Streams are what couple the two travel directions in
//! the volume-delay functions, so the builder refuses any network in which a
//! link cannot be paired with a mirror of identical geometry and attributes.
//!
//! Demand is expressed as pedestrians per origin-destination pair over a
//! fixed period. Link *volumes* (pedestrians over the period) convert to link
//! *flows* (pedestrians per metre of width per hour) via [`Network::volumes_to_flows`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NodeKind {
    Intersection,
    Midblock,
    BlockCentroid,
    ExternalCentroid,
    Connector,
}

impl NodeKind {
    /// Centroids are demand loading points; paths may start or end at a
    /// centroid but never pass through one.
    pub fn is_centroid(self) -> bool {
        matches!(self, NodeKind::BlockCentroid | NodeKind::ExternalCentroid)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NodeKind::Intersection => "intersection",
            NodeKind::Midblock => "midblock",
            NodeKind::BlockCentroid => "block_centroid",
            NodeKind::ExternalCentroid => "external_centroid",
            NodeKind::Connector => "connector",
        };
        f.write_str(s)
    }
}

impl FromStr for NodeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intersection" => Ok(NodeKind::Intersection),
            "midblock" => Ok(NodeKind::Midblock),
            "block_centroid" => Ok(NodeKind::BlockCentroid),
            "external_centroid" => Ok(NodeKind::ExternalCentroid),
            "connector" => Ok(NodeKind::Connector),
            other => Err(Error::InvalidInput(format!("unknown node kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LinkKind {
    Footpath,
    Crossing,
    Connector,
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LinkKind::Footpath => "footpath",
            LinkKind::Crossing => "crossing",
            LinkKind::Connector => "connector",
        };
        f.write_str(s)
    }
}

impl FromStr for LinkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "footpath" => Ok(LinkKind::Footpath),
            "crossing" => Ok(LinkKind::Crossing),
            "connector" => Ok(LinkKind::Connector),
            other => Err(Error::InvalidInput(format!("unknown link kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    pub kind: NodeKind,
}

/// A directed link. `capacity` is in pedestrians per metre of width per
/// hour; `free_flow_time_s` is the unloaded traversal time.
///
/// `mirror` may be left `None` on input, in which case the builder pairs the
/// link with the unique unpaired link running between the same two nodes in
/// the opposite direction with identical attributes. After
/// [`build_network`] every link's mirror is resolved.
#[derive(Debug, Clone)]
pub struct Link {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    pub length_m: f64,
    pub width_m: f64,
    pub capacity: f64,
    pub free_flow_time_s: f64,
    pub kind: LinkKind,
    pub mirror: Option<LinkId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandEntry {
    pub origin: NodeId,
    pub destination: NodeId,
    pub demand_ped: f64,
}

/// Origin-destination demand in pedestrians over `period_s` seconds.
#[derive(Debug, Clone)]
pub struct DemandTable {
    entries: Vec<DemandEntry>,
    period_s: f64,
}

impl DemandTable {
    pub fn new(entries: Vec<DemandEntry>, period_s: f64) -> Result<Self> {
        if !(period_s > 0.0) || !period_s.is_finite() {
            return Err(Error::NonPositivePeriod(period_s));
        }
        let mut seen = BTreeMap::new();
        for e in &entries {
            if e.origin == e.destination {
                return Err(Error::InvalidInput(format!(
                    "demand entry with origin == destination ({})",
                    e.origin
                )));
            }
            if !(e.demand_ped > 0.0) || !e.demand_ped.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "demand for ({}, {}) must be positive and finite, got {}",
                    e.origin, e.destination, e.demand_ped
                )));
            }
            if seen.insert((e.origin, e.destination), ()).is_some() {
                return Err(Error::DuplicateOD {
                    origin: e.origin.0,
                    destination: e.destination.0,
                });
            }
        }
        Ok(DemandTable { entries, period_s })
    }

    pub fn empty(period_s: f64) -> Result<Self> {
        Self::new(Vec::new(), period_s)
    }

    pub fn entries(&self) -> &[DemandEntry] {
        &self.entries
    }

    pub fn period_s(&self) -> f64 {
        self.period_s
    }

    pub fn total_demand(&self) -> f64 {
        self.entries.iter().map(|e| e.demand_ped).sum()
    }
}

/// Link flows in pedestrians per metre per hour, aligned with
/// [`Network::links`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowVector {
    values: Vec<f64>,
}

impl FlowVector {
    pub fn new(values: Vec<f64>) -> Self {
        FlowVector { values }
    }

    pub fn zeros(n: usize) -> Self {
        FlowVector {
            values: vec![0.0; n],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, pos: usize) -> f64 {
        self.values[pos]
    }
}

/// A used route: the ordered links from origin to destination and the
/// demand currently assigned to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub origin: NodeId,
    pub destination: NodeId,
    pub links: Vec<LinkId>,
    pub flow_ped: f64,
}

/// A validated, immutable footpath network with resolved streams and dense
/// adjacency for the solver.
#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<Node>,
    links: Vec<Link>,
    node_pos: BTreeMap<NodeId, usize>,
    link_pos: BTreeMap<LinkId, usize>,
    /// Outgoing link positions per node position, ordered by link id.
    out_links: Vec<Vec<usize>>,
    /// Mirror link position per link position.
    mirror: Vec<usize>,
    /// Stream list as (position, mirror position), lower link id first,
    /// ordered by that id.
    streams: Vec<(usize, usize)>,
    has_centroids: bool,
    flow_scale: f64,
}

/// Validates nodes, links, and demand and assembles a [`Network`].
///
/// Checks performed: unique ids, links reference existing distinct nodes,
/// strictly positive length/width/capacity/free-flow time, every link paired
/// into a stream (explicit `mirror` ids are verified, missing ones resolved
/// by matching reversed endpoints and identical attributes), and the demand
/// table references existing nodes. On networks that contain centroid nodes,
/// demand must start and end at centroids.
pub fn build_network(nodes: Vec<Node>, links: Vec<Link>, demand: &DemandTable) -> Result<Network> {
    let mut node_pos = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate() {
        if node_pos.insert(n.id, i).is_some() {
            return Err(Error::InvalidInput(format!("duplicate node id {}", n.id)));
        }
        if !n.x.is_finite() || !n.y.is_finite() {
            return Err(Error::InvalidInput(format!(
                "node {} has non-finite coordinates",
                n.id
            )));
        }
    }

    let mut link_pos = BTreeMap::new();
    for (i, l) in links.iter().enumerate() {
        if link_pos.insert(l.id, i).is_some() {
            return Err(Error::InvalidInput(format!("duplicate link id {}", l.id)));
        }
    }

    for l in &links {
        for (node, role) in [(l.from, "from"), (l.to, "to")] {
            if !node_pos.contains_key(&node) {
                return Err(Error::DanglingReference {
                    entity: "link",
                    id: l.id.0,
                    target: role,
                    missing: node.0,
                });
            }
        }
        if l.from == l.to {
            return Err(Error::InvalidInput(format!(
                "link {} is a self-loop at node {}",
                l.id, l.from
            )));
        }
        for (value, attribute) in [
            (l.length_m, "length"),
            (l.width_m, "width"),
            (l.capacity, "capacity"),
            (l.free_flow_time_s, "free_flow_time"),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositiveAttribute {
                    entity: "link",
                    id: l.id.0,
                    attribute,
                    value,
                });
            }
        }
    }

    let mirror = resolve_mirrors(&links, &link_pos)?;

    let mut links = links;
    for (i, &m) in mirror.iter().enumerate() {
        links[i].mirror = Some(links[m].id);
    }

    let mut streams = Vec::new();
    for (i, &m) in mirror.iter().enumerate() {
        if links[i].id < links[m].id {
            streams.push((i, m));
        }
    }
    streams.sort_by_key(|&(i, _)| links[i].id);

    let mut out_links = vec![Vec::new(); nodes.len()];
    let mut order: Vec<usize> = (0..links.len()).collect();
    order.sort_by_key(|&i| links[i].id);
    for &i in &order {
        out_links[node_pos[&links[i].from]].push(i);
    }

    let has_centroids = nodes.iter().any(|n| n.kind.is_centroid());

    let net = Network {
        nodes,
        links,
        node_pos,
        link_pos,
        out_links,
        mirror,
        streams,
        has_centroids,
        flow_scale: 1.0,
    };
    net.validate_demand(demand)?;
    Ok(net)
}

fn resolve_mirrors(links: &[Link], link_pos: &BTreeMap<LinkId, usize>) -> Result<Vec<usize>> {
    let n = links.len();
    let mut mirror = vec![usize::MAX; n];

    let check_pair = |a: &Link, b: &Link| -> Result<()> {
        if b.from != a.to || b.to != a.from {
            return Err(Error::MirrorMismatch {
                link: a.id.0,
                mirror: b.id.0,
                attribute: "endpoints (mirror must run in the opposite direction)",
            });
        }
        for (equal, attribute) in [
            (a.length_m == b.length_m, "length"),
            (a.width_m == b.width_m, "width"),
            (a.capacity == b.capacity, "capacity"),
            (a.free_flow_time_s == b.free_flow_time_s, "free_flow_time"),
            (a.kind == b.kind, "kind"),
        ] {
            if !equal {
                return Err(Error::MirrorMismatch {
                    link: a.id.0,
                    mirror: b.id.0,
                    attribute,
                });
            }
        }
        Ok(())
    };

    for (i, l) in links.iter().enumerate() {
        let Some(mid) = l.mirror else { continue };
        let &j = link_pos
            .get(&mid)
            .ok_or(Error::DanglingReference {
                entity: "link",
                id: l.id.0,
                target: "mirror",
                missing: mid.0,
            })?;
        if j == i {
            return Err(Error::MirrorMismatch {
                link: l.id.0,
                mirror: mid.0,
                attribute: "identity (a link cannot mirror itself)",
            });
        }
        if let Some(back) = links[j].mirror {
            if back != l.id {
                return Err(Error::MirrorMismatch {
                    link: l.id.0,
                    mirror: mid.0,
                    attribute: "reciprocity",
                });
            }
        }
        check_pair(l, &links[j])?;
        if mirror[i] != usize::MAX && mirror[i] != j {
            return Err(Error::MirrorMismatch {
                link: l.id.0,
                mirror: mid.0,
                attribute: "reciprocity",
            });
        }
        mirror[i] = j;
        mirror[j] = i;
    }

    // Pair the rest by reversed endpoints + identical attributes. Candidates
    // are consumed in ascending id order so pairing is deterministic.
    let mut by_endpoints: BTreeMap<(NodeId, NodeId), Vec<usize>> = BTreeMap::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| links[i].id);
    for &i in &order {
        if mirror[i] == usize::MAX {
            by_endpoints
                .entry((links[i].from, links[i].to))
                .or_default()
                .push(i);
        }
    }
    for &i in &order {
        if mirror[i] != usize::MAX {
            continue;
        }
        let l = &links[i];
        let Some(cands) = by_endpoints.get(&(l.to, l.from)) else {
            return Err(Error::MissingMirror(l.id.0));
        };
        let found = cands.iter().copied().find(|&j| {
            mirror[j] == usize::MAX && check_pair(l, &links[j]).is_ok()
        });
        let Some(j) = found else {
            return Err(Error::MissingMirror(l.id.0));
        };
        mirror[i] = j;
        mirror[j] = i;
    }

    Ok(mirror)
}

impl Network {
    /// Returns a copy of the network with a different demand-to-flow scale.
    /// The scale multiplies every flow produced by [`volumes_to_flows`];
    /// it models demand tables that describe only a fraction of the period
    /// they nominally cover.
    ///
    /// [`volumes_to_flows`]: Network::volumes_to_flows
    pub fn with_flow_scale(mut self, flow_scale: f64) -> Result<Network> {
        if !(flow_scale > 0.0) || !flow_scale.is_finite() {
            return Err(Error::InvalidInput(format!(
                "flow_scale must be positive and finite, got {flow_scale}"
            )));
        }
        self.flow_scale = flow_scale;
        Ok(self)
    }

    pub fn flow_scale(&self) -> f64 {
        self.flow_scale
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Links in input order; all mirrors resolved to `Some`.
    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node_by_id(&self, id: NodeId) -> Option<&Node> {
        self.node_pos.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn link_by_id(&self, id: LinkId) -> Option<&Link> {
        self.link_pos.get(&id).map(|&i| &self.links[i])
    }

    /// Dense position of a link in [`links`](Network::links) order.
    pub fn link_position(&self, id: LinkId) -> Result<usize> {
        self.link_pos.get(&id).copied().ok_or(Error::UnknownLink(id.0))
    }

    pub fn node_position(&self, id: NodeId) -> Result<usize> {
        self.node_pos
            .get(&id)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("unknown node id {id}")))
    }

    pub fn mirror_of(&self, id: LinkId) -> Result<LinkId> {
        let pos = self.link_position(id)?;
        Ok(self.links[self.mirror[pos]].id)
    }

    /// The canonical stream of a link: `(link, mirror)` with the lower id
    /// first, so both members report the same pair.
    pub fn stream_of(&self, id: LinkId) -> Result<(LinkId, LinkId)> {
        let m = self.mirror_of(id)?;
        Ok(if id < m { (id, m) } else { (m, id) })
    }

    /// Streams as dense link position pairs, lower link id first, ordered by
    /// that id. Each link appears in exactly one stream.
    pub fn streams(&self) -> &[(usize, usize)] {
        &self.streams
    }

    pub(crate) fn mirror_positions(&self) -> &[usize] {
        &self.mirror
    }

    pub(crate) fn out_link_positions(&self) -> &[Vec<usize>] {
        &self.out_links
    }

    pub fn has_centroids(&self) -> bool {
        self.has_centroids
    }

    /// Checks a demand table against this network: endpoints must exist and,
    /// on networks with centroid nodes, must be centroids.
    pub fn validate_demand(&self, demand: &DemandTable) -> Result<()> {
        for (idx, e) in demand.entries().iter().enumerate() {
            for node in [e.origin, e.destination] {
                let Some(&pos) = self.node_pos.get(&node) else {
                    return Err(Error::DanglingReference {
                        entity: "demand entry",
                        id: idx as u64,
                        target: "node",
                        missing: node.0,
                    });
                };
                if self.has_centroids && !self.nodes[pos].kind.is_centroid() {
                    return Err(Error::InvalidInput(format!(
                        "demand endpoint {} is not a centroid (kind {})",
                        node, self.nodes[pos].kind
                    )));
                }
            }
        }
        Ok(())
    }

    /// Converts link volumes (pedestrians over `period_s`) to flows in
    /// pedestrians per metre per hour: `flow = volume / width / hours *
    /// flow_scale`.
    pub fn volumes_to_flows(&self, volumes: &[f64], period_s: f64) -> Result<FlowVector> {
        if !(period_s > 0.0) || !period_s.is_finite() {
            return Err(Error::NonPositivePeriod(period_s));
        }
        if volumes.len() != self.links.len() {
            return Err(Error::LengthMismatch {
                left: volumes.len(),
                right: self.links.len(),
            });
        }
        let hours = period_s / 3600.0;
        let mut values = Vec::with_capacity(volumes.len());
        for (v, l) in volumes.iter().zip(&self.links) {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::InvalidFlow(format!(
                    "volume on link {} must be finite and non-negative, got {v}",
                    l.id
                )));
            }
            values.push(v / (l.width_m * hours) * self.flow_scale);
        }
        Ok(FlowVector::new(values))
    }

    /// Inverse of [`volumes_to_flows`](Network::volumes_to_flows).
    pub fn flows_to_volumes(&self, flows: &FlowVector, period_s: f64) -> Result<Vec<f64>> {
        if !(period_s > 0.0) || !period_s.is_finite() {
            return Err(Error::NonPositivePeriod(period_s));
        }
        if flows.len() != self.links.len() {
            return Err(Error::LengthMismatch {
                left: flows.len(),
                right: self.links.len(),
            });
        }
        let hours = period_s / 3600.0;
        Ok(flows
            .as_slice()
            .iter()
            .zip(&self.links)
            .map(|(f, l)| f * l.width_m * hours / self.flow_scale)
            .collect())
    }
}
