//! Footpath network generation from road centerlines.
//!
//! The pipeline turns street centerlines into a walkable graph: sidewalks
//! are offset to both sides of every road, trimmed back at junctions into
//! corner nodes joined by crossing links, split at midblock points, wrapped
//! around enclosed blocks with a centroid and connector links, and finally
//! mirrored into directed streams. Node and link ids depend only on sorted
//! geometry, so identical input and config always produce byte-identical
//! networks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geom::{self, v, Vec2};
use crate::network::{
    build_network, DemandTable, Link, LinkId, LinkKind, Network, Node, NodeId, NodeKind,
};
use crate::{Error, Result};

/// An open sequence of `(x, y)` vertices in projected planar metres.
pub type Polyline = Vec<(f64, f64)>;

/// A road centerline in projected planar coordinates (metres).
#[derive(Debug, Clone)]
pub struct Centerline {
    pub id: u64,
    pub points: Polyline,
    pub road_class: String,
}

impl Centerline {
    fn pts(&self) -> Vec<Vec2> {
        self.points.iter().map(|&(x, y)| v(x, y)).collect()
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.points.len() < 2 {
            return Err("fewer than two vertices".into());
        }
        if self.points.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err("non-finite vertex".into());
        }
        for w in self.points.windows(2) {
            if v(w[0].0, w[0].1).dist(v(w[1].0, w[1].1)) <= 1e-9 {
                return Err("zero-length segment".into());
            }
        }
        Ok(())
    }
}

/// Generation parameters. Footpaths run `offset_distance` metres to each
/// side of a centerline; crossings get `crossing_speed` to stand in for
/// signal delay; footpath links longer than `midblock_min_length` receive a
/// midblock node at their midpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub offset_distance: f64,
    pub footpath_width: f64,
    pub default_capacity: f64,
    pub default_speed: f64,
    pub crossing_speed: f64,
    pub midblock_min_length: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            offset_distance: 5.0,
            footpath_width: 2.0,
            default_capacity: 4847.0,
            default_speed: 1.46,
            crossing_speed: 1.2,
            midblock_min_length: 12.0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        for (value, name) in [
            (self.offset_distance, "offset_distance"),
            (self.footpath_width, "footpath_width"),
            (self.default_capacity, "default_capacity"),
            (self.default_speed, "default_speed"),
            (self.crossing_speed, "crossing_speed"),
            (self.midblock_min_length, "midblock_min_length"),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        if self.crossing_speed > self.default_speed {
            return Err(Error::InvalidInput(format!(
                "crossing_speed ({}) must not exceed default_speed ({})",
                self.crossing_speed, self.default_speed
            )));
        }
        Ok(())
    }
}

/// An input feature the generator could not use, and why.
#[derive(Debug, Clone)]
pub struct DroppedFeature {
    pub centerline_id: u64,
    pub reason: String,
}

/// What the generator produced: node and link counts by kind, junction and
/// block tallies, dropped features, and free-form notes.
#[derive(Debug, Clone, Default)]
pub struct GenReport {
    pub nodes_by_kind: BTreeMap<String, usize>,
    pub links_by_kind: BTreeMap<String, usize>,
    pub junctions: usize,
    pub blocks: usize,
    pub dropped: Vec<DroppedFeature>,
    pub notes: Vec<String>,
}

impl fmt::Display for GenReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let total_nodes: usize = self.nodes_by_kind.values().sum();
        let total_links: usize = self.links_by_kind.values().sum();
        writeln!(f, "nodes.total = {total_nodes}")?;
        for (kind, n) in &self.nodes_by_kind {
            writeln!(f, "nodes.{kind} = {n}")?;
        }
        writeln!(f, "links.total = {total_links}")?;
        for (kind, n) in &self.links_by_kind {
            writeln!(f, "links.{kind} = {n}")?;
        }
        writeln!(f, "junctions = {}", self.junctions)?;
        writeln!(f, "blocks = {}", self.blocks)?;
        writeln!(f, "dropped = {}", self.dropped.len())?;
        for d in &self.dropped {
            writeln!(f, "dropped.centerline.{} = {}", d.centerline_id, d.reason)?;
        }
        for n in &self.notes {
            writeln!(f, "note = {n}")?;
        }
        Ok(())
    }
}

/// A generated network plus its report and one polyline per directed link
/// (aligned with the network's link order) for map output.
#[derive(Debug, Clone)]
pub struct Generated {
    pub network: Network,
    pub report: GenReport,
    pub link_geometry: Vec<Polyline>,
}

type Key = (i64, i64);

fn qkey(p: Vec2) -> Key {
    ((p.x * 1e6).round() as i64, (p.y * 1e6).round() as i64)
}

/// Looks a point up in the coordinate registry at micrometre resolution,
/// returning its key and the exact coordinates first seen for that key so
/// nearly-coincident endpoints collapse onto one node.
fn snap(canon: &mut BTreeMap<Key, Vec2>, p: Vec2) -> (Key, Vec2) {
    let key = qkey(p);
    let pt = *canon.entry(key).or_insert(p);
    (key, pt)
}

/// Offsets a centerline into its (left, right) sidewalk polylines.
pub fn offset(line: &Centerline, distance: f64) -> Result<(Polyline, Polyline)> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::InvalidInput(format!(
            "offset distance must be positive, got {distance}"
        )));
    }
    line.check()
        .map_err(|reason| Error::InvalidInput(format!("centerline {}: {reason}", line.id)))?;
    let pts = line.pts();
    let both = geom::offset_polyline(&pts, distance).and_then(|left| {
        geom::offset_polyline(&pts, -distance).map(|right| (left, right))
    });
    both.map(|(l, r)| {
        (
            l.into_iter().map(|p| (p.x, p.y)).collect(),
            r.into_iter().map(|p| (p.x, p.y)).collect(),
        )
    })
    .map_err(|reason| Error::DegenerateOffset { id: line.id, reason })
}

/// Cleans raw centerlines: invalid geometry is dropped with a reason, only
/// the largest connected component is kept, same-class lines continuing
/// collinearly through a plain degree-2 joint are merged, and collinear
/// interior vertices are collapsed. Running it twice changes nothing.
pub fn simplify(lines: Vec<Centerline>) -> Result<(Vec<Centerline>, Vec<DroppedFeature>)> {
    if lines.is_empty() {
        return Err(Error::EmptyInput("no centerlines".into()));
    }
    let mut dropped = Vec::new();
    let mut kept: Vec<Centerline> = Vec::new();
    for line in lines {
        match line.check() {
            Ok(()) => kept.push(line),
            Err(reason) => dropped.push(DroppedFeature {
                centerline_id: line.id,
                reason,
            }),
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyInput("no valid centerlines".into()));
    }

    let pts: Vec<Vec<Vec2>> = kept.iter().map(|l| l.pts()).collect();
    let n = kept.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if touches(&pts[i], &pts[j]) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    // Largest component by line count, then total length, then smallest id.
    let mut score: BTreeMap<usize, (usize, f64, u64)> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        let e = score.entry(root).or_insert((0, 0.0, u64::MAX));
        e.0 += 1;
        e.1 += geom::polyline_length(&pts[i]);
        e.2 = e.2.min(kept[i].id);
    }
    let &best = score
        .iter()
        .max_by(|a, b| {
            (a.1 .0, a.1 .1)
                .partial_cmp(&(b.1 .0, b.1 .1))
                .unwrap()
                .then(b.1 .2.cmp(&a.1 .2))
        })
        .map(|(root, _)| root)
        .unwrap();
    let in_best: Vec<bool> = (0..n).map(|i| find(&mut parent, i) == best).collect();
    let mut survivors = Vec::new();
    for (i, line) in kept.into_iter().enumerate() {
        if in_best[i] {
            survivors.push(line);
        } else {
            dropped.push(DroppedFeature {
                centerline_id: line.id,
                reason: "not in the largest connected component".into(),
            });
        }
    }
    let mut kept = survivors;

    // Merge same-class lines continuing collinearly through an end-to-end
    // joint where nothing else ends. Lines meeting at an angle stay apart;
    // their joint is a real junction, not a digitization seam.
    loop {
        let mut ends: BTreeMap<Key, Vec<(usize, bool)>> = BTreeMap::new();
        for (i, l) in kept.iter().enumerate() {
            let p = l.pts();
            ends.entry(qkey(p[0])).or_default().push((i, true));
            ends.entry(qkey(*p.last().unwrap())).or_default().push((i, false));
        }
        let continues = |(i, i_start): (usize, bool), (j, j_start): (usize, bool)| {
            let a = kept[i].pts();
            let b = kept[j].pts();
            let din = if i_start {
                a[0].sub(a[1])
            } else {
                a[a.len() - 1].sub(a[a.len() - 2])
            };
            let dout = if j_start {
                b[1].sub(b[0])
            } else {
                b[b.len() - 2].sub(b[b.len() - 1])
            };
            din.cross(dout).abs() <= 1e-9 * din.norm() * dout.norm() && din.dot(dout) > 0.0
        };
        let mut fuse = None;
        for inc in ends.values() {
            if inc.len() == 2
                && inc[0].0 != inc[1].0
                && kept[inc[0].0].road_class == kept[inc[1].0].road_class
                && continues(inc[0], inc[1])
            {
                fuse = Some((inc[0], inc[1]));
                break;
            }
        }
        let Some(((i, i_start), (j, j_start))) = fuse else { break };
        let mut a = kept[i].points.clone();
        if i_start {
            a.reverse();
        }
        let mut b = kept[j].points.clone();
        if !j_start {
            b.reverse();
        }
        a.extend_from_slice(&b[1..]);
        let merged = Centerline {
            id: kept[i].id.min(kept[j].id),
            points: a,
            road_class: kept[i].road_class.clone(),
        };
        let (lo, hi) = (i.min(j), i.max(j));
        kept.remove(hi);
        kept[lo] = merged;
    }

    for line in &mut kept {
        line.points = collapse_collinear(&line.points);
    }
    Ok((kept, dropped))
}

fn touches(a: &[Vec2], b: &[Vec2]) -> bool {
    if !geom::polyline_intersections(a, b).is_empty() {
        return true;
    }
    // Collinear end-to-end contacts have no transversal intersection.
    let ends = |p: &[Vec2]| [p[0], *p.last().unwrap()];
    ends(a).iter().any(|&e| geom::point_polyline_dist(e, b) <= 1e-6)
        || ends(b).iter().any(|&e| geom::point_polyline_dist(e, a) <= 1e-6)
}

fn collapse_collinear(points: &[(f64, f64)]) -> Polyline {
    let mut out: Polyline = Vec::with_capacity(points.len());
    for &p in points {
        if let Some(&last) = out.last() {
            if v(p.0, p.1).dist(v(last.0, last.1)) <= 1e-9 {
                continue;
            }
        }
        while out.len() >= 2 {
            let a = v(out[out.len() - 2].0, out[out.len() - 2].1);
            let b = v(out[out.len() - 1].0, out[out.len() - 1].1);
            let c = v(p.0, p.1);
            let ab = b.sub(a);
            let bc = c.sub(b);
            if ab.cross(bc).abs() <= 1e-9 * ab.norm() * bc.norm() && ab.dot(bc) > 0.0 {
                out.pop();
            } else {
                break;
            }
        }
        out.push(p);
    }
    out
}

struct Arm {
    line_id: u64,
    pts: Vec<Vec2>,
}

struct Sides {
    left: Vec<Vec2>,
    right: Vec<Vec2>,
    llen: f64,
    rlen: f64,
    lcut: Cut,
    rcut: Cut,
}

struct Cut {
    from: f64,
    to: f64,
    splits: Vec<f64>,
}

#[derive(Clone)]
struct EdgeGeom {
    a: Key,
    b: Key,
    pts: Vec<Vec2>,
    kind: LinkKind,
}

/// Runs the whole generation pipeline on raw centerlines.
pub fn build_footpath_graph(lines: Vec<Centerline>, cfg: &GenConfig) -> Result<Generated> {
    cfg.validate()?;
    let (kept, mut dropped) = simplify(lines)?;
    let bbox = geom::bounds(kept.iter().flat_map(|l| l.pts())).unwrap();

    // Split every centerline at its crossings with the others; the spans
    // between consecutive split stations become junction arms.
    let line_pts: Vec<Vec<Vec2>> = kept.iter().map(|l| l.pts()).collect();
    let mut stations: Vec<Vec<f64>> = line_pts
        .iter()
        .map(|p| vec![0.0, geom::polyline_length(p)])
        .collect();
    for i in 0..kept.len() {
        for j in i + 1..kept.len() {
            for (si, sj, _) in geom::polyline_intersections(&line_pts[i], &line_pts[j]) {
                stations[i].push(si);
                stations[j].push(sj);
            }
        }
    }

    let mut canon: BTreeMap<Key, Vec2> = BTreeMap::new();

    let mut arms: Vec<Arm> = Vec::new();
    for (li, line) in kept.iter().enumerate() {
        let mut st = stations[li].clone();
        st.sort_by(f64::total_cmp);
        st.dedup_by(|a, b| (*a - *b).abs() <= 1e-6);
        for w in st.windows(2) {
            if w[1] - w[0] <= 1e-6 {
                continue;
            }
            let mut pts = geom::substring(&line_pts[li], w[0], w[1]);
            let (_, p0) = snap(&mut canon, pts[0]);
            let (_, p1) = snap(&mut canon, *pts.last().unwrap());
            pts[0] = p0;
            *pts.last_mut().unwrap() = p1;
            arms.push(Arm {
                line_id: line.id,
                pts,
            });
        }
    }

    // Junctions are points where at least two arm ends meet.
    let mut incidences: BTreeMap<Key, Vec<(usize, bool)>> = BTreeMap::new();
    for (ai, arm) in arms.iter().enumerate() {
        incidences.entry(qkey(arm.pts[0])).or_default().push((ai, true));
        incidences
            .entry(qkey(*arm.pts.last().unwrap()))
            .or_default()
            .push((ai, false));
    }

    let mut sides: Vec<Option<Sides>> = Vec::with_capacity(arms.len());
    for arm in &arms {
        match geom::offset_polyline(&arm.pts, cfg.offset_distance).and_then(|left| {
            geom::offset_polyline(&arm.pts, -cfg.offset_distance).map(|right| (left, right))
        }) {
            Ok((left, right)) => {
                let (llen, rlen) = (geom::polyline_length(&left), geom::polyline_length(&right));
                sides.push(Some(Sides {
                    left,
                    right,
                    llen,
                    rlen,
                    lcut: Cut { from: 0.0, to: llen, splits: vec![] },
                    rcut: Cut { from: 0.0, to: rlen, splits: vec![] },
                }));
            }
            Err(reason) => {
                dropped.push(DroppedFeature {
                    centerline_id: arm.line_id,
                    reason: format!("offset failed: {reason}"),
                });
                sides.push(None);
            }
        }
    }

    // Pass 1 over junctions: pure geometry. Each arm end is viewed pointing
    // away from the junction; each of its two sidewalk sides is trimmed back
    // to its furthest near-junction intersection with the other arms' sides,
    // and the crossing sits at the larger of the two trims.
    struct EndPlan {
        arm: usize,
        is_start: bool,
        trim_l: f64,
        trim_r: f64,
        s_star: f64,
    }
    let away_view = |s: &Sides, is_start: bool| -> (Vec<Vec2>, Vec<Vec2>) {
        if is_start {
            (s.left.clone(), s.right.clone())
        } else {
            let rev = |p: &[Vec2]| p.iter().rev().copied().collect::<Vec<_>>();
            (rev(&s.right), rev(&s.left))
        }
    };
    let cap = 10.0 * cfg.offset_distance;
    let mut plans: BTreeMap<Key, Vec<EndPlan>> = BTreeMap::new();
    let mut swallowed: BTreeSet<usize> = BTreeSet::new();
    for (&key, inc) in &incidences {
        let alive: Vec<(usize, bool)> = inc
            .iter()
            .copied()
            .filter(|&(ai, _)| sides[ai].is_some())
            .collect();
        if alive.len() < 2 {
            continue;
        }
        let mut plan = Vec::new();
        for &(ai, is_start) in &alive {
            let s = sides[ai].as_ref().unwrap();
            let (away_l, away_r) = away_view(s, is_start);
            let mut trims = [0.0f64; 2];
            for (ti, mine) in [&away_l, &away_r].into_iter().enumerate() {
                for &(bi, _) in alive.iter().filter(|&&(bi, _)| bi != ai) {
                    let o = sides[bi].as_ref().unwrap();
                    for other in [&o.left, &o.right] {
                        for (s_mine, _, _) in geom::polyline_intersections(mine, other) {
                            if s_mine <= cap {
                                trims[ti] = trims[ti].max(s_mine);
                            }
                        }
                    }
                }
            }
            let s_star = trims[0].max(trims[1]);
            let reach = geom::polyline_length(&away_l).min(geom::polyline_length(&away_r));
            if s_star >= reach - 1e-6 {
                swallowed.insert(ai);
                dropped.push(DroppedFeature {
                    centerline_id: arms[ai].line_id,
                    reason: "junction footprint consumes the arm".into(),
                });
            }
            plan.push(EndPlan {
                arm: ai,
                is_start,
                trim_l: trims[0],
                trim_r: trims[1],
                s_star,
            });
        }
        plans.insert(key, plan);
    }

    // Pass 2: place corner nodes and crossings, record the cuts.
    let mut registry: BTreeMap<Key, NodeKind> = BTreeMap::new();
    let mut crossings: Vec<EdgeGeom> = Vec::new();
    let mut junctions = 0usize;
    for plan in plans.values() {
        let live: Vec<&EndPlan> = plan.iter().filter(|p| !swallowed.contains(&p.arm)).collect();
        if live.len() < 2 {
            continue;
        }
        junctions += 1;
        for p in live {
            let s = sides[p.arm].as_mut().unwrap();
            let (away_l, away_r) = if p.is_start {
                (s.left.clone(), s.right.clone())
            } else {
                let rev = |q: &[Vec2]| q.iter().rev().copied().collect::<Vec<_>>();
                (rev(&s.right), rev(&s.left))
            };
            let (lk, lp) = snap(&mut canon, geom::point_at_station(&away_l, p.s_star));
            let (rk, rp) = snap(&mut canon, geom::point_at_station(&away_r, p.s_star));
            registry.entry(lk).or_insert(NodeKind::Intersection);
            registry.entry(rk).or_insert(NodeKind::Intersection);
            if lk != rk {
                crossings.push(EdgeGeom {
                    a: lk,
                    b: rk,
                    pts: vec![lp, rp],
                    kind: LinkKind::Crossing,
                });
            }
            // Map away-view stations back onto the canonical sides.
            if p.is_start {
                s.lcut.from = s.lcut.from.max(p.trim_l);
                if p.s_star > p.trim_l + 1e-6 {
                    s.lcut.splits.push(p.s_star);
                }
                s.rcut.from = s.rcut.from.max(p.trim_r);
                if p.s_star > p.trim_r + 1e-6 {
                    s.rcut.splits.push(p.s_star);
                }
            } else {
                s.rcut.to = s.rcut.to.min(s.rlen - p.trim_l);
                if p.s_star > p.trim_l + 1e-6 {
                    s.rcut.splits.push(s.rlen - p.s_star);
                }
                s.lcut.to = s.lcut.to.min(s.llen - p.trim_r);
                if p.s_star > p.trim_r + 1e-6 {
                    s.lcut.splits.push(s.llen - p.s_star);
                }
            }
        }
    }

    // Cut each sidewalk into pieces along its kept span.
    let mut pieces: Vec<EdgeGeom> = Vec::new();
    for (ai, s) in sides.iter().enumerate() {
        let Some(s) = s else { continue };
        if swallowed.contains(&ai) {
            continue;
        }
        for (side_pts, cut) in [(&s.left, &s.lcut), (&s.right, &s.rcut)] {
            if cut.to - cut.from <= 1e-6 {
                continue;
            }
            let mut bounds = vec![cut.from];
            let mut splits: Vec<f64> = cut
                .splits
                .iter()
                .copied()
                .filter(|&x| x > cut.from + 1e-6 && x < cut.to - 1e-6)
                .collect();
            splits.sort_by(f64::total_cmp);
            splits.dedup_by(|a, b| (*a - *b).abs() <= 1e-6);
            bounds.extend(splits);
            bounds.push(cut.to);
            for w in bounds.windows(2) {
                if w[1] - w[0] <= 1e-6 {
                    continue;
                }
                let mut pts = geom::substring(side_pts, w[0], w[1]);
                let (ka, pa) = snap(&mut canon, pts[0]);
                let (kb, pb) = snap(&mut canon, *pts.last().unwrap());
                pts[0] = pa;
                *pts.last_mut().unwrap() = pb;
                pieces.push(EdgeGeom {
                    a: ka,
                    b: kb,
                    pts,
                    kind: LinkKind::Footpath,
                });
            }
        }
    }

    // Fuse sidewalk pieces that continue through a plain degree-2 seam.
    loop {
        let mut incident: BTreeMap<Key, Vec<(usize, bool)>> = BTreeMap::new();
        for (i, p) in pieces.iter().enumerate() {
            incident.entry(p.a).or_default().push((i, true));
            incident.entry(p.b).or_default().push((i, false));
        }
        let mut fuse = None;
        for (k, inc) in &incident {
            if registry.contains_key(k) || inc.len() != 2 || inc[0].0 == inc[1].0 {
                continue;
            }
            fuse = Some((inc[0], inc[1]));
            break;
        }
        let Some(((i, i_start), (j, j_start))) = fuse else { break };
        let orient = |piece: &EdgeGeom, reverse: bool| -> EdgeGeom {
            if !reverse {
                piece.clone()
            } else {
                EdgeGeom {
                    a: piece.b,
                    b: piece.a,
                    pts: piece.pts.iter().rev().copied().collect(),
                    kind: piece.kind,
                }
            }
        };
        let first = orient(&pieces[i], i_start); // ends at the seam
        let second = orient(&pieces[j], !j_start); // starts at the seam
        let mut pts = first.pts;
        pts.extend_from_slice(&second.pts[1..]);
        let merged = EdgeGeom {
            a: first.a,
            b: second.b,
            pts,
            kind: LinkKind::Footpath,
        };
        let (lo, hi) = (i.min(j), i.max(j));
        pieces.remove(hi);
        pieces[lo] = merged;
    }

    // A side that closes on itself (a ring road) would become a self-loop
    // link; split it in two and pin both seam nodes.
    let mut normalized = Vec::with_capacity(pieces.len());
    for p in pieces {
        if p.a != p.b {
            normalized.push(p);
            continue;
        }
        registry.entry(p.a).or_insert(NodeKind::Connector);
        let len = geom::polyline_length(&p.pts);
        let mut first = geom::substring(&p.pts, 0.0, len / 2.0);
        let mut second = geom::substring(&p.pts, len / 2.0, len);
        let (mk, mp) = snap(&mut canon, *first.last().unwrap());
        registry.entry(mk).or_insert(NodeKind::Connector);
        *first.last_mut().unwrap() = mp;
        second[0] = mp;
        normalized.push(EdgeGeom { a: p.a, b: mk, pts: first, kind: p.kind });
        normalized.push(EdgeGeom { a: mk, b: p.b, pts: second, kind: p.kind });
    }
    let mut pieces = normalized;

    // Remaining unregistered endpoints are sidewalk terminals: external
    // centroids on the boundary of the input extent, plain connector nodes
    // inland.
    {
        let mut degree: BTreeMap<Key, usize> = BTreeMap::new();
        for e in pieces.iter().chain(&crossings) {
            *degree.entry(e.a).or_default() += 1;
            *degree.entry(e.b).or_default() += 1;
        }
        for &k in degree.keys() {
            if registry.contains_key(&k) {
                continue;
            }
            let kind = if geom::rect_perimeter_dist(canon[&k], bbox.0, bbox.1)
                <= cfg.offset_distance
            {
                NodeKind::ExternalCentroid
            } else {
                NodeKind::Connector
            };
            registry.insert(k, kind);
        }
    }

    // Midblock node at the midpoint of long footpath pieces.
    let mut with_midblocks = Vec::with_capacity(pieces.len());
    for p in pieces.drain(..) {
        let len = geom::polyline_length(&p.pts);
        if p.kind != LinkKind::Footpath || len <= cfg.midblock_min_length {
            with_midblocks.push(p);
            continue;
        }
        let mut first = geom::substring(&p.pts, 0.0, len / 2.0);
        let mut second = geom::substring(&p.pts, len / 2.0, len);
        let (mk, mp) = snap(&mut canon, *first.last().unwrap());
        if registry.contains_key(&mk) {
            with_midblocks.push(EdgeGeom { pts: p.pts, ..p });
            continue;
        }
        registry.insert(mk, NodeKind::Midblock);
        *first.last_mut().unwrap() = mp;
        second[0] = mp;
        with_midblocks.push(EdgeGeom { a: p.a, b: mk, pts: first, kind: p.kind });
        with_midblocks.push(EdgeGeom { a: mk, b: p.b, pts: second, kind: p.kind });
    }
    let pieces = with_midblocks;

    // Enclosed blocks: bounded faces of the sidewalk arrangement that contain
    // no road and touch at least one midblock node get a centroid, tied in by
    // a connector to the nearest midblock node in each azimuth quadrant.
    let mut report = GenReport {
        junctions,
        ..GenReport::default()
    };
    let mut connectors: Vec<EdgeGeom> = Vec::new();
    {
        let face_edges: Vec<&EdgeGeom> = pieces.iter().chain(&crossings).collect();
        let faces = walk_faces(&face_edges);
        let samples: Vec<Vec2> = arms
            .iter()
            .flat_map(|a| {
                let mids = a.pts.windows(2).map(|w| w[0].add(w[1].sub(w[0]).scale(0.5)));
                a.pts.iter().copied().chain(mids).collect::<Vec<_>>()
            })
            .collect();
        for face in &faces {
            if face.area <= 1e-6 {
                continue;
            }
            let mids: Vec<Key> = face
                .keys
                .iter()
                .copied()
                .filter(|k| registry.get(k) == Some(&NodeKind::Midblock))
                .collect();
            if mids.is_empty() {
                continue;
            }
            let Some((lo, hi)) = geom::bounds(face.polygon.iter().copied()) else {
                continue;
            };
            let blocked = samples.iter().any(|&s| {
                s.x >= lo.x && s.x <= hi.x && s.y >= lo.y && s.y <= hi.y
                    && geom::point_in_polygon(&face.polygon, s)
            });
            if blocked {
                continue;
            }
            let c = geom::polygon_centroid(&face.polygon);
            let (ck, cp) = snap(&mut canon, c);
            if registry.contains_key(&ck) {
                report
                    .notes
                    .push(format!("block centroid at ({:.3}, {:.3}) collides with an existing node; block skipped", c.x, c.y));
                continue;
            }
            registry.insert(ck, NodeKind::BlockCentroid);
            report.blocks += 1;
            // Quadrants: top, right, bottom, left by azimuth from centroid.
            let mut nearest: [Option<(f64, Key)>; 4] = [None; 4];
            for &mk in &mids {
                let az = geom::azimuth_deg(cp, canon[&mk]);
                let q = if (45.0..135.0).contains(&az) {
                    1
                } else if (135.0..225.0).contains(&az) {
                    2
                } else if (225.0..315.0).contains(&az) {
                    3
                } else {
                    0
                };
                let d = cp.dist(canon[&mk]);
                let better = match nearest[q] {
                    None => true,
                    Some((bd, bk)) => d < bd - 1e-12 || ((d - bd).abs() <= 1e-12 && mk < bk),
                };
                if better {
                    nearest[q] = Some((d, mk));
                }
            }
            let found = nearest.iter().flatten().count();
            if found < 4 {
                report.notes.push(format!(
                    "block at ({:.3}, {:.3}) has midblock nodes in only {found} of 4 quadrants",
                    cp.x, cp.y
                ));
            }
            for hit in nearest.into_iter().flatten() {
                let (_, mk) = hit;
                connectors.push(EdgeGeom {
                    a: ck,
                    b: mk,
                    pts: vec![cp, canon[&mk]],
                    kind: LinkKind::Connector,
                });
            }
        }
    }

    // Assemble: stable ids from sorted geometry, then mirror every link.
    let all_edges: Vec<EdgeGeom> = pieces.into_iter().chain(crossings).chain(connectors).collect();
    let mut used: BTreeSet<Key> = BTreeSet::new();
    for e in &all_edges {
        used.insert(e.a);
        used.insert(e.b);
    }
    let mut node_ids: BTreeMap<Key, NodeId> = BTreeMap::new();
    let mut nodes = Vec::with_capacity(used.len());
    for (i, &k) in used.iter().enumerate() {
        let id = NodeId(i as u64);
        node_ids.insert(k, id);
        let p = canon[&k];
        let kind = registry[&k];
        nodes.push(Node { id, x: p.x, y: p.y, kind });
        *report.nodes_by_kind.entry(kind.to_string()).or_default() += 1;
    }

    struct Undirected {
        lo: NodeId,
        hi: NodeId,
        kind: LinkKind,
        length: f64,
        pts: Vec<Vec2>,
    }
    let mut undirected: Vec<Undirected> = Vec::with_capacity(all_edges.len());
    for e in all_edges {
        let (ia, ib) = (node_ids[&e.a], node_ids[&e.b]);
        let length = geom::polyline_length(&e.pts);
        if length <= 1e-9 {
            report.notes.push(format!(
                "zero-length {} edge between nodes {ia} and {ib} skipped",
                e.kind
            ));
            continue;
        }
        let (lo, hi, pts) = if ia <= ib {
            (ia, ib, e.pts)
        } else {
            (ib, ia, e.pts.into_iter().rev().collect())
        };
        undirected.push(Undirected { lo, hi, kind: e.kind, length, pts });
    }
    undirected.sort_by(|a, b| {
        (a.lo, a.hi, a.kind)
            .cmp(&(b.lo, b.hi, b.kind))
            .then(a.length.total_cmp(&b.length))
    });

    let mut links = Vec::with_capacity(undirected.len() * 2);
    let mut link_geometry = Vec::with_capacity(undirected.len() * 2);
    for (i, u) in undirected.iter().enumerate() {
        let speed = match u.kind {
            LinkKind::Crossing => cfg.crossing_speed,
            _ => cfg.default_speed,
        };
        let fwd = LinkId(2 * i as u64);
        let bwd = LinkId(2 * i as u64 + 1);
        let forward = Link {
            id: fwd,
            from: u.lo,
            to: u.hi,
            length_m: u.length,
            width_m: cfg.footpath_width,
            capacity: cfg.default_capacity,
            free_flow_time_s: u.length / speed,
            kind: u.kind,
            mirror: Some(bwd),
        };
        let backward = Link {
            id: bwd,
            from: u.hi,
            to: u.lo,
            mirror: Some(fwd),
            ..forward.clone()
        };
        links.push(forward);
        links.push(backward);
        link_geometry.push(u.pts.iter().map(|p| (p.x, p.y)).collect::<Vec<_>>());
        link_geometry.push(u.pts.iter().rev().map(|p| (p.x, p.y)).collect::<Vec<_>>());
        *report.links_by_kind.entry(u.kind.to_string()).or_default() += 2;
    }
    report.dropped = dropped;

    let network = build_network(nodes, links, &DemandTable::empty(3600.0)?)?;
    Ok(Generated {
        network,
        report,
        link_geometry,
    })
}

struct Face {
    polygon: Vec<Vec2>,
    area: f64,
    keys: BTreeSet<Key>,
}

/// Traces the faces of the planar sidewalk arrangement. Bounded faces come
/// out counterclockwise with positive area.
fn walk_faces(edges: &[&EdgeGeom]) -> Vec<Face> {
    let mut vert_ids: BTreeMap<Key, usize> = BTreeMap::new();
    for e in edges {
        let n = vert_ids.len();
        vert_ids.entry(e.a).or_insert(n);
        let n = vert_ids.len();
        vert_ids.entry(e.b).or_insert(n);
    }
    let nv = vert_ids.len();
    // Half-edge 2e runs a->b, 2e+1 runs b->a.
    let origin = |h: usize| -> Key {
        let e = edges[h / 2];
        if h.is_multiple_of(2) {
            e.a
        } else {
            e.b
        }
    };
    let first_dir = |h: usize| -> Vec2 {
        let e = edges[h / 2];
        if h.is_multiple_of(2) {
            e.pts[1].sub(e.pts[0])
        } else {
            e.pts[e.pts.len() - 2].sub(e.pts[e.pts.len() - 1])
        }
    };
    let mut rot: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for h in 0..edges.len() * 2 {
        rot[vert_ids[&origin(h)]].push(h);
    }
    for list in &mut rot {
        list.sort_by(|&a, &b| {
            let da = first_dir(a);
            let db = first_dir(b);
            da.y.atan2(da.x).total_cmp(&db.y.atan2(db.x)).then(a.cmp(&b))
        });
    }
    let mut rot_pos = vec![0usize; edges.len() * 2];
    for list in &rot {
        for (i, &h) in list.iter().enumerate() {
            rot_pos[h] = i;
        }
    }
    // The face successor of h: the clockwise neighbor of h's twin around
    // h's head vertex. Interior faces come out counterclockwise.
    let next = |h: usize| -> usize {
        let twin = h ^ 1;
        let list = &rot[vert_ids[&origin(twin)]];
        list[(rot_pos[twin] + list.len() - 1) % list.len()]
    };

    let mut visited = vec![false; edges.len() * 2];
    let mut faces = Vec::new();
    for start in 0..edges.len() * 2 {
        if visited[start] {
            continue;
        }
        let mut polygon: Vec<Vec2> = Vec::new();
        let mut keys = BTreeSet::new();
        let mut h = start;
        loop {
            visited[h] = true;
            keys.insert(origin(h));
            let e = edges[h / 2];
            if h.is_multiple_of(2) {
                polygon.extend(&e.pts[..e.pts.len() - 1]);
            } else {
                polygon.extend(e.pts.iter().rev().take(e.pts.len() - 1).copied());
            }
            h = next(h);
            if h == start {
                break;
            }
        }
        let area = geom::polygon_signed_area(&polygon);
        faces.push(Face { polygon, area, keys });
    }
    faces
}

/// Removes the listed links and their mirrors, returning the reduced network
/// and a warning for each stream whose two directions were not both listed.
/// Nodes left without any link are dropped unless they are centroids, which
/// stay so their demand resolves to Unreachable rather than a missing node.
pub fn close_links(net: &Network, ids: &[LinkId]) -> Result<(Network, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut closed: BTreeSet<LinkId> = BTreeSet::new();
    for &id in ids {
        let mirror = net.mirror_of(id)?;
        closed.insert(id);
        if !ids.contains(&mirror) && closed.insert(mirror) {
            warnings.push(format!(
                "link {id} listed without its mirror {mirror}; closing the whole stream"
            ));
        }
    }
    let links: Vec<Link> = net
        .links()
        .iter()
        .filter(|l| !closed.contains(&l.id))
        .cloned()
        .collect();
    let used: BTreeSet<NodeId> = links.iter().flat_map(|l| [l.from, l.to]).collect();
    let nodes: Vec<Node> = net
        .nodes()
        .iter()
        .filter(|n| used.contains(&n.id) || n.kind.is_centroid())
        .cloned()
        .collect();
    let rebuilt = build_network(nodes, links, &DemandTable::empty(3600.0)?)?
        .with_flow_scale(net.flow_scale())?;
    Ok((rebuilt, warnings))
}
