//! User-equilibrium assignment by the method of successive averages (MSA).
//!
//! Each iteration routes all demand onto current shortest paths
//! (all-or-nothing) and blends that loading into the running volumes with
//! step 1/k. Convergence is measured by the relative gap
//! `(TSTT - SPTT) / TSTT`, where TSTT is total system travel time under
//! current volumes and SPTT is the cost of sending every trip down its
//! shortest path, both priced at *expected* travel times. At a user
//! equilibrium no traveller can do better, so the gap vanishes.
//!
//! In stochastic mode each iteration routes on travel times sampled once per
//! stream (both directions share the draw); expected times still drive the
//! gap, the reported link times, and the stopping rule. Runs are reproducible
//! via the seed, and ties between equal-cost paths break on the
//! lexicographically smaller link id sequence, so results are deterministic
//! for a given input and seed. Hitting the iteration budget is reported as
//! `converged: false` on the result rather than as an error.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::Error;
use crate::network::{DemandTable, FlowVector, LinkId, Network, NodeId, Path};
use crate::pvdf::{lognormal_spec, stream_correlated_sample, PvdfConfig};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    Deterministic,
    Stochastic,
}

/// MSA solver settings. The blending step is fixed at 1/k.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub gap_tolerance: f64,
    pub mode: SolverMode,
    /// Sampled cost views averaged per iteration in stochastic mode.
    pub samples_per_iteration: usize,
    pub seed: u64,
    /// Optional warm start, in [`Network::links`] order, treated as the
    /// iteration-1 loading (averaging then starts at k = 2). The reported
    /// path set only decomposes demand loaded during the run, so with a warm
    /// start the path flows no longer sum to the full demand.
    pub initial_volumes: Option<Vec<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 1000,
            gap_tolerance: 1e-4,
            mode: SolverMode::Deterministic,
            samples_per_iteration: 1,
            seed: 0,
            initial_volumes: None,
        }
    }
}

impl SolverConfig {
    fn validate(&self, n_links: usize) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be at least 1".into()));
        }
        if !(self.gap_tolerance >= 0.0) || !self.gap_tolerance.is_finite() {
            return Err(Error::InvalidInput(format!(
                "gap_tolerance must be non-negative, got {}",
                self.gap_tolerance
            )));
        }
        if self.samples_per_iteration == 0 {
            return Err(Error::InvalidInput(
                "samples_per_iteration must be at least 1".into(),
            ));
        }
        if let Some(init) = &self.initial_volumes {
            if init.len() != n_links {
                return Err(Error::LengthMismatch {
                    left: init.len(),
                    right: n_links,
                });
            }
            if init.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidFlow(
                    "initial volumes must be finite and non-negative".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Strictly positive per-link travel times in [`Network::links`] order,
/// the cost layer the routing functions work on.
#[derive(Debug, Clone, PartialEq)]
pub struct CostView {
    times: Vec<f64>,
}

impl CostView {
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        for t in &times {
            if !(t > &0.0) || !t.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "travel times must be positive and finite, got {t}"
                )));
            }
        }
        Ok(CostView { times })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, pos: usize) -> f64 {
        self.times[pos]
    }
}

/// Expected travel time on every link given the current flows. Each link is
/// priced with its own flow as the reference direction and its mirror's as
/// the counter flow.
pub fn link_costs(net: &Network, flows: &FlowVector, pvdf: &PvdfConfig) -> Result<CostView> {
    if flows.len() != net.links().len() {
        return Err(Error::LengthMismatch {
            left: flows.len(),
            right: net.links().len(),
        });
    }
    let mirror = net.mirror_positions();
    let mut times = Vec::with_capacity(net.links().len());
    for (pos, link) in net.links().iter().enumerate() {
        let t = pvdf.expected_time(
            flows.get(pos),
            flows.get(mirror[pos]),
            link.free_flow_time_s,
            link.capacity,
        )?;
        times.push(t);
    }
    CostView::from_times(times)
}

/// Sampled travel times for a stochastic family: one standard normal draw
/// per stream (in stream order), shared by both directions. Deterministic
/// families are rejected; use [`link_costs`].
pub fn sampled_link_costs<R: Rng>(
    net: &Network,
    flows: &FlowVector,
    pvdf: &PvdfConfig,
    rng: &mut R,
) -> Result<CostView> {
    if !pvdf.family.is_stochastic() {
        return Err(Error::InvalidInput(format!(
            "family {} is deterministic; sampled costs need a stochastic family",
            pvdf.family
        )));
    }
    if flows.len() != net.links().len() {
        return Err(Error::LengthMismatch {
            left: flows.len(),
            right: net.links().len(),
        });
    }
    let mut times = vec![0.0; net.links().len()];
    for &(i, j) in net.streams() {
        let (li, lj) = (&net.links()[i], &net.links()[j]);
        let spec_i = lognormal_spec(
            flows.get(i),
            flows.get(j),
            li.free_flow_time_s,
            li.capacity,
            pvdf,
        )?;
        let spec_j = lognormal_spec(
            flows.get(j),
            flows.get(i),
            lj.free_flow_time_s,
            lj.capacity,
            pvdf,
        )?;
        let z: f64 = rng.sample(StandardNormal);
        let (ti, tj) = stream_correlated_sample(&spec_i, &spec_j, z);
        times[i] = ti;
        times[j] = tj;
    }
    CostView::from_times(times)
}

/// Per-node cost and incoming link position (usize::MAX for none) of one
/// shortest-path tree.
type Tree = (Vec<f64>, Vec<usize>);

/// Shortest-path tree from `origin` under `costs`. Centroid nodes are never
/// expanded unless they are the origin, and equal-cost ties resolve to the
/// lexicographically smaller link id sequence.
fn shortest_tree(net: &Network, costs: &[f64], origin: usize, targets: &[usize]) -> Tree {
    use std::cmp::Ordering;
    use std::collections::BinaryHeap;

    #[derive(PartialEq)]
    struct Entry {
        cost: f64,
        node: usize,
    }
    impl Eq for Entry {}
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> Ordering {
            // Reversed: BinaryHeap is a max-heap, we want the cheapest first.
            other
                .cost
                .total_cmp(&self.cost)
                .then_with(|| other.node.cmp(&self.node))
        }
    }
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }

    let n = net.nodes().len();
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut settled = vec![false; n];
    let mut remaining = targets.iter().filter(|&&t| t != origin).count();
    let mut heap = BinaryHeap::new();
    let is_target = {
        let mut v = vec![false; n];
        for &t in targets {
            v[t] = true;
        }
        v
    };

    let path_back = |parent: &[usize], mut node: usize| -> Vec<LinkId> {
        let mut links = Vec::new();
        while parent[node] != usize::MAX {
            let pos = parent[node];
            links.push(net.links()[pos].id);
            node = net.node_position(net.links()[pos].from).unwrap();
        }
        links.reverse();
        links
    };

    dist[origin] = 0.0;
    heap.push(Entry {
        cost: 0.0,
        node: origin,
    });

    while let Some(Entry { cost, node }) = heap.pop() {
        if settled[node] {
            continue;
        }
        settled[node] = true;
        if is_target[node] && node != origin {
            remaining -= 1;
            if remaining == 0 {
                break;
            }
        }
        // Paths never travel through a centroid.
        if node != origin && net.nodes()[node].kind.is_centroid() {
            continue;
        }
        for &e in &net.out_link_positions()[node] {
            let to = net.node_position(net.links()[e].to).unwrap();
            if settled[to] {
                continue;
            }
            let nd = cost + costs[e];
            if nd < dist[to] {
                dist[to] = nd;
                parent[to] = e;
                heap.push(Entry { cost: nd, node: to });
            } else if nd == dist[to] && parent[to] != usize::MAX {
                let mut candidate = path_back(&parent, node);
                candidate.push(net.links()[e].id);
                let current = path_back(&parent, to);
                if candidate < current {
                    parent[to] = e;
                }
            }
        }
    }

    (dist, parent)
}

fn reconstruct(net: &Network, parent: &[usize], origin: usize, target: usize) -> Vec<LinkId> {
    let mut links = Vec::new();
    let mut node = target;
    while node != origin {
        let pos = parent[node];
        debug_assert_ne!(pos, usize::MAX);
        links.push(net.links()[pos].id);
        node = net.node_position(net.links()[pos].from).unwrap();
    }
    links.reverse();
    links
}

/// Cheapest path between one OD pair under fixed costs.
pub fn shortest_path(
    net: &Network,
    costs: &CostView,
    origin: NodeId,
    destination: NodeId,
) -> Result<Path> {
    let o = net.node_position(origin)?;
    let d = net.node_position(destination)?;
    let (dist, parent) = shortest_tree(net, costs.as_slice(), o, &[d]);
    if !dist[d].is_finite() {
        return Err(Error::Unreachable {
            origin: origin.0,
            destination: destination.0,
        });
    }
    Ok(Path {
        origin,
        destination,
        links: reconstruct(net, &parent, o, d),
        flow_ped: 0.0,
    })
}

/// One all-or-nothing loading: every OD's demand on its current shortest
/// path.
#[derive(Debug, Clone)]
pub struct AonLoading {
    /// Link volumes in [`Network::links`] order, pedestrians per period.
    pub volumes: Vec<f64>,
    /// One path per demand entry, in demand order, carrying that entry's
    /// demand.
    pub paths: Vec<Path>,
    /// Total demand-weighted shortest path cost under these costs.
    pub shortest_cost_total: f64,
}

struct OriginTrees {
    by_origin: BTreeMap<usize, Tree>,
}

fn origin_trees(net: &Network, costs: &[f64], demand: &DemandTable) -> Result<OriginTrees> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in demand.entries() {
        let o = net.node_position(e.origin)?;
        let d = net.node_position(e.destination)?;
        groups.entry(o).or_default().push(d);
    }
    let results: Vec<(usize, Tree)> = groups
        .par_iter()
        .map(|(&o, targets)| (o, shortest_tree(net, costs, o, targets)))
        .collect();
    Ok(OriginTrees {
        by_origin: results.into_iter().collect(),
    })
}

pub fn all_or_nothing(
    net: &Network,
    costs: &CostView,
    demand: &DemandTable,
) -> Result<AonLoading> {
    net.validate_demand(demand)?;
    let trees = origin_trees(net, costs.as_slice(), demand)?;
    let mut volumes = vec![0.0; net.links().len()];
    let mut paths = Vec::with_capacity(demand.entries().len());
    let mut shortest_cost_total = 0.0;
    for e in demand.entries() {
        let o = net.node_position(e.origin)?;
        let d = net.node_position(e.destination)?;
        let (dist, parent) = &trees.by_origin[&o];
        if !dist[d].is_finite() {
            return Err(Error::Unreachable {
                origin: e.origin.0,
                destination: e.destination.0,
            });
        }
        let links = reconstruct(net, parent, o, d);
        for id in &links {
            volumes[net.link_position(*id)?] += e.demand_ped;
        }
        shortest_cost_total += e.demand_ped * dist[d];
        paths.push(Path {
            origin: e.origin,
            destination: e.destination,
            links,
            flow_ped: e.demand_ped,
        });
    }
    Ok(AonLoading {
        volumes,
        paths,
        shortest_cost_total,
    })
}

/// Total system travel time: the volume-weighted sum of link times.
pub fn total_system_travel_time(volumes: &[f64], times: &[f64]) -> Result<f64> {
    if volumes.len() != times.len() {
        return Err(Error::LengthMismatch {
            left: volumes.len(),
            right: times.len(),
        });
    }
    Ok(volumes.iter().zip(times).map(|(v, t)| v * t).sum())
}

/// Relative user-equilibrium gap `(TSTT - SPTT) / TSTT` under the given
/// expected costs. Zero TSTT (no volume anywhere) is an error; the solver
/// itself treats that state as a sentinel gap of 1 on its first iteration.
pub fn relative_gap(
    net: &Network,
    volumes: &[f64],
    demand: &DemandTable,
    expected_costs: &CostView,
) -> Result<f64> {
    let tstt = total_system_travel_time(volumes, expected_costs.as_slice())?;
    if tstt <= 0.0 {
        return Err(Error::ZeroTSTT);
    }
    let trees = origin_trees(net, expected_costs.as_slice(), demand)?;
    let mut sptt = 0.0;
    for e in demand.entries() {
        let o = net.node_position(e.origin)?;
        let d = net.node_position(e.destination)?;
        let dist = &trees.by_origin[&o].0;
        if !dist[d].is_finite() {
            return Err(Error::Unreachable {
                origin: e.origin.0,
                destination: e.destination.0,
            });
        }
        sptt += e.demand_ped * dist[d];
    }
    Ok((tstt - sptt) / tstt)
}

/// Equilibrium assignment result. Vectors align with `links`.
#[derive(Debug, Clone)]
pub struct AssignmentResult {
    pub links: Vec<LinkId>,
    /// Pedestrians per period.
    pub volumes: Vec<f64>,
    /// Pedestrians per metre per hour.
    pub flows: FlowVector,
    /// Expected travel times in seconds at the final volumes.
    pub times: Vec<f64>,
    /// Used paths with their flows, ordered by (origin, destination, links).
    pub paths: Vec<Path>,
    /// Relative gap measured at the start of every iteration.
    pub gap_history: Vec<f64>,
    /// Total system travel time in pedestrian-seconds.
    pub tstt: f64,
    pub iterations: usize,
    pub converged: bool,
    pub total_demand_ped: f64,
}

impl AssignmentResult {
    fn position(&self, id: LinkId) -> Option<usize> {
        self.links.iter().position(|&l| l == id)
    }

    pub fn volume_of(&self, id: LinkId) -> Option<f64> {
        self.position(id).map(|i| self.volumes[i])
    }

    pub fn time_of(&self, id: LinkId) -> Option<f64> {
        self.position(id).map(|i| self.times[i])
    }

    pub fn final_gap(&self) -> f64 {
        self.gap_history.last().copied().unwrap_or(0.0)
    }

    pub fn summary(&self) -> RunSummary {
        let used: Vec<&Path> = self.paths.iter().filter(|p| p.flow_ped > 1e-9).collect();
        let total_paths = used.len();
        let path_volume: f64 = used.iter().map(|p| p.flow_ped).sum();
        let empty_links = self.volumes.iter().filter(|v| **v <= 1e-9).count();
        let n = self.links.len().max(1);
        RunSummary {
            tstt_s: self.tstt,
            total_demand_ped: self.total_demand_ped,
            avg_link_volume: self.volumes.iter().sum::<f64>() / n as f64,
            total_paths,
            avg_path_volume: if total_paths > 0 {
                path_volume / total_paths as f64
            } else {
                0.0
            },
            avg_trip_time_s: if self.total_demand_ped > 0.0 {
                self.tstt / self.total_demand_ped
            } else {
                0.0
            },
            empty_links,
            iterations: self.iterations,
            final_gap: self.final_gap(),
            converged: self.converged,
        }
    }
}

/// The run statistics reported next to every assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub tstt_s: f64,
    pub total_demand_ped: f64,
    pub avg_link_volume: f64,
    pub total_paths: usize,
    pub avg_path_volume: f64,
    pub avg_trip_time_s: f64,
    pub empty_links: usize,
    pub iterations: usize,
    pub final_gap: f64,
    pub converged: bool,
}

/// Solves for user equilibrium. See the module docs for the iteration
/// scheme; `iterations` on the result counts gap evaluations, and the final
/// entry of `gap_history` always describes the returned volumes.
pub fn solve(
    net: &Network,
    demand: &DemandTable,
    pvdf: &PvdfConfig,
    config: &SolverConfig,
) -> Result<AssignmentResult> {
    let n = net.links().len();
    config.validate(n)?;
    net.validate_demand(demand)?;
    let period = demand.period_s();
    let stochastic = config.mode == SolverMode::Stochastic && pvdf.family.is_stochastic();

    if demand.entries().is_empty() {
        let flows = net.volumes_to_flows(&vec![0.0; n], period)?;
        let times = link_costs(net, &flows, pvdf)?;
        return Ok(AssignmentResult {
            links: net.links().iter().map(|l| l.id).collect(),
            volumes: vec![0.0; n],
            flows,
            times: times.as_slice().to_vec(),
            paths: Vec::new(),
            gap_history: vec![0.0],
            tstt: 0.0,
            iterations: 0,
            converged: true,
            total_demand_ped: 0.0,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut volumes;
    let start_k;
    match &config.initial_volumes {
        Some(init) => {
            volumes = init.clone();
            start_k = 2;
        }
        None => {
            volumes = vec![0.0; n];
            start_k = 1;
        }
    }

    let mut path_flows: BTreeMap<(NodeId, NodeId, Vec<LinkId>), f64> = BTreeMap::new();
    let mut gap_history = Vec::new();
    let mut converged = false;
    let mut final_expected: Option<CostView> = None;

    for pass in 1..=config.max_iterations {
        let k = start_k + pass - 1;
        let flows = net.volumes_to_flows(&volumes, period)?;
        let expected = link_costs(net, &flows, pvdf)?;

        let routing = if stochastic {
            let m = config.samples_per_iteration;
            let mut acc = vec![0.0; n];
            for _ in 0..m {
                let sampled = sampled_link_costs(net, &flows, pvdf, &mut rng)?;
                for (a, t) in acc.iter_mut().zip(sampled.as_slice()) {
                    *a += t;
                }
            }
            for a in &mut acc {
                *a /= m as f64;
            }
            CostView::from_times(acc)?
        } else {
            expected.clone()
        };

        let aon = all_or_nothing(net, &routing, demand)?;

        let tstt = total_system_travel_time(&volumes, expected.as_slice())?;
        let gap = if tstt > 0.0 {
            let sptt = if stochastic {
                // Expected costs drive the gap even when routing is sampled.
                let trees = origin_trees(net, expected.as_slice(), demand)?;
                let mut s = 0.0;
                for e in demand.entries() {
                    let o = net.node_position(e.origin)?;
                    let d = net.node_position(e.destination)?;
                    s += e.demand_ped * trees.by_origin[&o].0[d];
                }
                s
            } else {
                aon.shortest_cost_total
            };
            (tstt - sptt) / tstt
        } else {
            1.0
        };
        gap_history.push(gap);

        if gap <= config.gap_tolerance {
            converged = true;
            final_expected = Some(expected);
            break;
        }
        if pass == config.max_iterations {
            final_expected = Some(expected);
            break;
        }

        let step = 1.0 / k as f64;
        for (v, a) in volumes.iter_mut().zip(&aon.volumes) {
            *v += step * (a - *v);
        }
        for f in path_flows.values_mut() {
            *f *= 1.0 - step;
        }
        for p in &aon.paths {
            *path_flows
                .entry((p.origin, p.destination, p.links.clone()))
                .or_insert(0.0) += step * p.flow_ped;
        }
    }

    let expected = final_expected.expect("loop runs at least once");
    let flows = net.volumes_to_flows(&volumes, period)?;
    let tstt = total_system_travel_time(&volumes, expected.as_slice())?;

    let paths = path_flows
        .into_iter()
        .filter(|(_, f)| *f > 1e-12)
        .map(|((origin, destination, links), flow_ped)| Path {
            origin,
            destination,
            links,
            flow_ped,
        })
        .collect();

    let iterations = gap_history.len();
    Ok(AssignmentResult {
        links: net.links().iter().map(|l| l.id).collect(),
        volumes,
        flows,
        times: expected.as_slice().to_vec(),
        paths,
        gap_history,
        tstt,
        iterations,
        converged,
        total_demand_ped: demand.total_demand(),
    })
}
