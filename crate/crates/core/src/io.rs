//! File formats: CSV for networks, demand, observations and results,
//! GeoJSON and WKT for geometry, TOML for run configuration.
//!
//! Columns are fixed and headers mandatory. Links are stored with a
//! `free_flow_speed_m_s` column; free-flow time is reconstructed as
//! `length_m / speed` on read and the speed as `length_m / time` on write.
//! An empty `mirror_id` field means the link has no mirror. All writers
//! format numbers with Rust's shortest round-trip notation, so identical
//! data produces byte-identical files.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::assign::{AssignmentResult, RunSummary, SolverConfig, SolverMode};
use crate::calibrate::Observation;
use crate::netgen::{Centerline, GenConfig, Polyline};
use crate::network::{
    DemandEntry, DemandTable, Link, LinkId, LinkKind, Node, NodeId, NodeKind,
};
use crate::pvdf::PvdfConfig;
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct NodeRow {
    id: u64,
    x: f64,
    y: f64,
    kind: String,
}

pub fn read_nodes_csv(path: impl AsRef<Path>) -> Result<Vec<Node>> {
    let mut rdr = reader(path.as_ref())?;
    let mut nodes = Vec::new();
    for row in rdr.deserialize() {
        let row: NodeRow = row?;
        nodes.push(Node {
            id: NodeId(row.id),
            x: row.x,
            y: row.y,
            kind: NodeKind::from_str(&row.kind)?,
        });
    }
    Ok(nodes)
}

pub fn write_nodes_csv(path: impl AsRef<Path>, nodes: &[Node]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path.as_ref())?;
    for n in nodes {
        wtr.serialize(NodeRow {
            id: n.id.0,
            x: n.x,
            y: n.y,
            kind: n.kind.to_string(),
        })?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct LinkRow {
    id: u64,
    #[serde(rename = "from")]
    from_node: u64,
    #[serde(rename = "to")]
    to_node: u64,
    length_m: f64,
    width_m: f64,
    capacity_ped_per_m_hr: f64,
    free_flow_speed_m_s: f64,
    kind: String,
    mirror_id: Option<u64>,
}

pub fn read_links_csv(path: impl AsRef<Path>) -> Result<Vec<Link>> {
    let mut rdr = reader(path.as_ref())?;
    let mut links = Vec::new();
    for row in rdr.deserialize() {
        let row: LinkRow = row?;
        if !(row.free_flow_speed_m_s > 0.0) || !row.free_flow_speed_m_s.is_finite() {
            return Err(Error::NonPositiveAttribute {
                entity: "link",
                id: row.id,
                attribute: "free_flow_speed_m_s",
                value: row.free_flow_speed_m_s,
            });
        }
        links.push(Link {
            id: LinkId(row.id),
            from: NodeId(row.from_node),
            to: NodeId(row.to_node),
            length_m: row.length_m,
            width_m: row.width_m,
            capacity: row.capacity_ped_per_m_hr,
            free_flow_time_s: row.length_m / row.free_flow_speed_m_s,
            kind: LinkKind::from_str(&row.kind)?,
            mirror: row.mirror_id.map(LinkId),
        });
    }
    Ok(links)
}

pub fn write_links_csv(path: impl AsRef<Path>, links: &[Link]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path.as_ref())?;
    for l in links {
        wtr.serialize(LinkRow {
            id: l.id.0,
            from_node: l.from.0,
            to_node: l.to.0,
            length_m: l.length_m,
            width_m: l.width_m,
            capacity_ped_per_m_hr: l.capacity,
            free_flow_speed_m_s: l.length_m / l.free_flow_time_s,
            kind: l.kind.to_string(),
            mirror_id: l.mirror.map(|m| m.0),
        })?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct DemandRow {
    origin: u64,
    destination: u64,
    demand_ped: f64,
}

/// Reads a demand table; the analysis period is configuration, not data, so
/// it is passed in rather than stored in the file.
pub fn read_demand_csv(path: impl AsRef<Path>, period_s: f64) -> Result<DemandTable> {
    let mut rdr = reader(path.as_ref())?;
    let mut entries = Vec::new();
    for row in rdr.deserialize() {
        let row: DemandRow = row?;
        entries.push(DemandEntry {
            origin: NodeId(row.origin),
            destination: NodeId(row.destination),
            demand_ped: row.demand_ped,
        });
    }
    DemandTable::new(entries, period_s)
}

pub fn write_demand_csv(path: impl AsRef<Path>, demand: &DemandTable) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path.as_ref())?;
    for e in demand.entries() {
        wtr.serialize(DemandRow {
            origin: e.origin.0,
            destination: e.destination.0,
            demand_ped: e.demand_ped,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ObservationRow {
    density_ped_m2: f64,
    speed_m_s: f64,
    travel_time_s: f64,
    ref_flow: Option<f64>,
    counter_flow: Option<f64>,
}

/// Reads calibration observations. The directional flow columns may be
/// empty or missing entirely when only density and speed were measured.
pub fn read_observations_csv(path: impl AsRef<Path>) -> Result<Vec<Observation>> {
    let mut rdr = reader(path.as_ref())?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: ObservationRow = row?;
        let obs = Observation {
            density: row.density_ped_m2,
            speed: row.speed_m_s,
            travel_time: row.travel_time_s,
            ref_flow: row.ref_flow,
            counter_flow: row.counter_flow,
        };
        obs.validate()?;
        out.push(obs);
    }
    Ok(out)
}

/// One row of a per-link result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkResult {
    pub link_id: u64,
    pub volume_ped: f64,
    pub flow_ped_per_m_hr: f64,
    pub travel_time_s: f64,
}

pub fn write_link_results_csv(path: impl AsRef<Path>, result: &AssignmentResult) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path.as_ref())?;
    for (i, id) in result.links.iter().enumerate() {
        wtr.serialize(LinkResult {
            link_id: id.0,
            volume_ped: result.volumes[i],
            flow_ped_per_m_hr: result.flows.get(i),
            travel_time_s: result.times[i],
        })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_link_results_csv(path: impl AsRef<Path>) -> Result<Vec<LinkResult>> {
    let mut rdr = reader(path.as_ref())?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct PathRow<'a> {
    origin: u64,
    destination: u64,
    path_rank: usize,
    link_sequence: &'a str,
    flow_ped: f64,
    cost_s: f64,
}

/// Writes the used paths with their flows and costs at the final travel
/// times. `link_sequence` joins link ids with `|`; `path_rank` numbers the
/// paths of each origin-destination pair from 1 in result order.
pub fn write_paths_csv(path: impl AsRef<Path>, result: &AssignmentResult) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path.as_ref())?;
    let mut rank = 1usize;
    let mut last_od = None;
    for p in &result.paths {
        let od = (p.origin, p.destination);
        if last_od == Some(od) {
            rank += 1;
        } else {
            rank = 1;
            last_od = Some(od);
        }
        let cost: f64 = p
            .links
            .iter()
            .map(|id| result.time_of(*id).unwrap_or(0.0))
            .sum();
        let seq = p
            .links
            .iter()
            .map(|id| id.0.to_string())
            .collect::<Vec<_>>()
            .join("|");
        wtr.serialize(PathRow {
            origin: p.origin.0,
            destination: p.destination.0,
            path_rank: rank,
            link_sequence: &seq,
            flow_ped: p.flow_ped,
            cost_s: cost,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

/// One row of a scenario comparison: base and scenario volumes on a link
/// and their difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub link_id: u64,
    pub volume_base: f64,
    pub volume_scenario: f64,
    pub delta: f64,
}

pub fn write_delta_csv(path: impl AsRef<Path>, rows: &[DeltaRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path.as_ref())?;
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct GapRow {
    iteration: usize,
    relative_gap: f64,
}

/// Writes the relative gap per iteration, numbered from 1.
pub fn write_gap_history_csv(path: impl AsRef<Path>, gaps: &[f64]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path.as_ref())?;
    for (i, g) in gaps.iter().enumerate() {
        wtr.serialize(GapRow {
            iteration: i + 1,
            relative_gap: *g,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn summary_text(summary: &RunSummary) -> String {
    format!(
        "tstt_s = {}\n\
         total_demand_ped = {}\n\
         avg_link_volume = {}\n\
         total_paths = {}\n\
         avg_path_volume = {}\n\
         avg_trip_time_s = {}\n\
         empty_links = {}\n\
         iterations = {}\n\
         final_gap = {}\n\
         converged = {}\n",
        summary.tstt_s,
        summary.total_demand_ped,
        summary.avg_link_volume,
        summary.total_paths,
        summary.avg_path_volume,
        summary.avg_trip_time_s,
        summary.empty_links,
        summary.iterations,
        summary.final_gap,
        summary.converged,
    )
}

pub fn write_summary(path: impl AsRef<Path>, summary: &RunSummary) -> Result<()> {
    fs::write(path.as_ref(), summary_text(summary))?;
    Ok(())
}

/// Reads road centerlines, choosing the format by file extension:
/// `.geojson`/`.json` for GeoJSON, `.csv`/`.wkt` for a WKT table.
pub fn read_centerlines(path: impl AsRef<Path>) -> Result<Vec<Centerline>> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "geojson" | "json" => parse_centerlines_geojson(&fs::read_to_string(path)?),
        "csv" | "wkt" => read_centerlines_wkt_csv(path),
        other => Err(Error::InvalidInput(format!(
            "unsupported geometry format '.{other}' (expected .geojson, .json, .csv or .wkt)"
        ))),
    }
}

/// Parses a GeoJSON FeatureCollection of LineString features. The id comes
/// from `properties.id`, then the feature-level `id`, then a fresh integer;
/// `properties.road_class` defaults to `unclassified`.
pub fn parse_centerlines_geojson(text: &str) -> Result<Vec<Centerline>> {
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| Error::InvalidInput(format!("invalid GeoJSON: {e}")))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::InvalidInput(
            "expected a GeoJSON FeatureCollection".into(),
        ));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::InvalidInput("FeatureCollection has no features array".into()))?;

    let mut parsed: Vec<(Option<u64>, Polyline, String)> = Vec::new();
    for (i, feature) in features.iter().enumerate() {
        let geometry = feature
            .get("geometry")
            .ok_or_else(|| Error::InvalidInput(format!("feature {i} has no geometry")))?;
        let gtype = geometry.get("type").and_then(Value::as_str).unwrap_or("");
        if gtype != "LineString" {
            return Err(Error::InvalidInput(format!(
                "feature {i} has geometry type '{gtype}', only LineString is supported"
            )));
        }
        let coords = geometry
            .get("coordinates")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::InvalidInput(format!("feature {i} has no coordinates")))?;
        let mut points = Vec::with_capacity(coords.len());
        for c in coords {
            let pair = c.as_array().filter(|a| a.len() >= 2);
            let (x, y) = match pair {
                Some(a) => (a[0].as_f64(), a[1].as_f64()),
                None => (None, None),
            };
            match (x, y) {
                (Some(x), Some(y)) => points.push((x, y)),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "feature {i} has a malformed coordinate"
                    )))
                }
            }
        }
        let props = feature.get("properties");
        let id = value_to_id(props.and_then(|p| p.get("id")))
            .or_else(|| value_to_id(feature.get("id")));
        let road_class = props
            .and_then(|p| p.get("road_class"))
            .and_then(Value::as_str)
            .unwrap_or("unclassified")
            .to_string();
        parsed.push((id, points, road_class));
    }

    let used: std::collections::BTreeSet<u64> =
        parsed.iter().filter_map(|(id, _, _)| *id).collect();
    let mut next = 1u64;
    let mut out = Vec::with_capacity(parsed.len());
    for (id, points, road_class) in parsed {
        let id = id.unwrap_or_else(|| {
            while used.contains(&next) {
                next += 1;
            }
            let fresh = next;
            next += 1;
            fresh
        });
        out.push(Centerline {
            id,
            points,
            road_class,
        });
    }
    Ok(out)
}

fn value_to_id(v: Option<&Value>) -> Option<u64> {
    match v {
        Some(Value::Number(n)) => n.as_u64(),
        Some(Value::String(s)) => s.parse().ok(),
        _ => None,
    }
}

/// Reads centerlines from a CSV with columns `id,wkt_linestring,road_class`.
pub fn read_centerlines_wkt_csv(path: impl AsRef<Path>) -> Result<Vec<Centerline>> {
    #[derive(Deserialize)]
    struct WktRow {
        id: u64,
        wkt_linestring: String,
        road_class: Option<String>,
    }
    let mut rdr = reader(path.as_ref())?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: WktRow = row?;
        out.push(Centerline {
            id: row.id,
            points: parse_wkt_linestring(&row.wkt_linestring)?,
            road_class: row.road_class.unwrap_or_else(|| "unclassified".into()),
        });
    }
    Ok(out)
}

/// Parses `LINESTRING (x y, x y, ...)`, case-insensitively.
pub fn parse_wkt_linestring(text: &str) -> Result<Polyline> {
    let trimmed = text.trim();
    let upper = trimmed.to_ascii_uppercase();
    if !upper.starts_with("LINESTRING") {
        return Err(Error::InvalidInput(format!(
            "expected a LINESTRING, got '{trimmed}'"
        )));
    }
    let rest = trimmed["LINESTRING".len()..].trim_start();
    if !rest.starts_with('(') || !rest.ends_with(')') {
        return Err(Error::InvalidInput(format!(
            "malformed LINESTRING '{trimmed}'"
        )));
    }
    let body = &rest[1..rest.len() - 1];
    let mut points = Vec::new();
    for pair in body.split(',') {
        let mut nums = pair.split_whitespace();
        let x = nums.next().and_then(|s| s.parse::<f64>().ok());
        let y = nums.next().and_then(|s| s.parse::<f64>().ok());
        match (x, y, nums.next()) {
            (Some(x), Some(y), None) => points.push((x, y)),
            _ => {
                return Err(Error::InvalidInput(format!(
                    "malformed coordinate pair '{}' in LINESTRING",
                    pair.trim()
                )))
            }
        }
    }
    Ok(points)
}

/// Writes links as a GeoJSON FeatureCollection of LineStrings. `geometry`
/// must align with `links`; the generator returns it that way.
pub fn write_links_geojson(
    path: impl AsRef<Path>,
    links: &[Link],
    geometry: &[Polyline],
) -> Result<()> {
    if links.len() != geometry.len() {
        return Err(Error::LengthMismatch {
            left: links.len(),
            right: geometry.len(),
        });
    }
    let features: Vec<Value> = links
        .iter()
        .zip(geometry)
        .map(|(l, pts)| {
            let coords: Vec<Value> = pts.iter().map(|&(x, y)| json!([x, y])).collect();
            json!({
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": coords},
                "properties": {
                    "id": l.id.0,
                    "from": l.from.0,
                    "to": l.to.0,
                    "kind": l.kind.to_string(),
                    "length_m": l.length_m,
                    "width_m": l.width_m,
                    "capacity_ped_per_m_hr": l.capacity,
                    "free_flow_speed_m_s": l.length_m / l.free_flow_time_s,
                    "mirror_id": l.mirror.map(|m| m.0),
                },
            })
        })
        .collect();
    let doc = json!({"type": "FeatureCollection", "features": features});
    let mut text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::InvalidInput(format!("GeoJSON serialization failed: {e}")))?;
    text.push('\n');
    fs::write(path.as_ref(), text)?;
    Ok(())
}

/// The `[network]` section of a run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub period_s: f64,
    pub flow_scale: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            period_s: 3600.0,
            flow_scale: 1.0,
        }
    }
}

/// The `[solver]` section of a run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub max_iterations: usize,
    pub gap_tolerance: f64,
    pub samples_per_iteration: usize,
    pub seed: u64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            max_iterations: 1000,
            gap_tolerance: 1e-4,
            samples_per_iteration: 1,
            seed: 0,
        }
    }
}

/// The `[calibration]` section of a run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub sigma_bins: usize,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection { sigma_bins: 20 }
    }
}

/// Everything a run can be configured with, in one TOML file. Every field
/// has a default, so an empty file is a valid configuration; unknown keys
/// are rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkSection,
    pub pvdf: PvdfConfig,
    pub solver: SolverSection,
    pub netgen: GenConfig,
    pub calibration: CalibrationSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("invalid configuration: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path.as_ref())?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::InvalidInput(format!("configuration serialization failed: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path.as_ref(), self.to_toml_string()?)?;
        Ok(())
    }

    /// Solver settings with the mode implied by the pVDF family.
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            max_iterations: self.solver.max_iterations,
            gap_tolerance: self.solver.gap_tolerance,
            mode: if self.pvdf.family.is_stochastic() {
                SolverMode::Stochastic
            } else {
                SolverMode::Deterministic
            },
            samples_per_iteration: self.solver.samples_per_iteration,
            seed: self.solver.seed,
            initial_volumes: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.network.period_s > 0.0) || !self.network.period_s.is_finite() {
            return Err(Error::NonPositivePeriod(self.network.period_s));
        }
        if !(self.network.flow_scale > 0.0) || !self.network.flow_scale.is_finite() {
            return Err(Error::InvalidInput(format!(
                "flow_scale must be positive, got {}",
                self.network.flow_scale
            )));
        }
        if self.solver.max_iterations == 0 {
            return Err(Error::InvalidInput(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.solver.samples_per_iteration == 0 {
            return Err(Error::InvalidInput(
                "samples_per_iteration must be at least 1".into(),
            ));
        }
        if !(self.solver.gap_tolerance > 0.0) || !self.solver.gap_tolerance.is_finite() {
            return Err(Error::InvalidInput(format!(
                "gap_tolerance must be positive, got {}",
                self.solver.gap_tolerance
            )));
        }
        if self.calibration.sigma_bins == 0 {
            return Err(Error::InvalidInput("sigma_bins must be at least 1".into()));
        }
        self.pvdf.validate()?;
        self.netgen.validate()?;
        Ok(())
    }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::pvdf::PvdfFamily;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().expect("tempdir")
    }

    #[test]
    fn node_and_link_csv_round_trip() {
        let dir = tmp();
        let (nodes, links) = fixtures::toy_nodes_links();
        let np = dir.path().join("nodes.csv");
        let lp = dir.path().join("links.csv");
        write_nodes_csv(&np, &nodes).unwrap();
        write_links_csv(&lp, &links).unwrap();

        let rn = read_nodes_csv(&np).unwrap();
        assert_eq!(rn.len(), nodes.len());
        for (a, b) in rn.iter().zip(&nodes) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.x, b.x);
            assert_eq!(a.y, b.y);
            assert_eq!(a.kind, b.kind);
        }

        let rl = read_links_csv(&lp).unwrap();
        assert_eq!(rl.len(), links.len());
        for (a, b) in rl.iter().zip(&links) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.from, b.from);
            assert_eq!(a.to, b.to);
            assert_eq!(a.length_m, b.length_m);
            assert_eq!(a.width_m, b.width_m);
            assert_eq!(a.capacity, b.capacity);
            assert_eq!(a.kind, b.kind);
            assert_eq!(a.mirror, b.mirror);
            assert!((a.free_flow_time_s - b.free_flow_time_s).abs() < 1e-9);
        }
    }

    #[test]
    fn link_csv_rejects_non_positive_speed() {
        let dir = tmp();
        let lp = dir.path().join("links.csv");
        fs::write(
            &lp,
            "id,from,to,length_m,width_m,capacity_ped_per_m_hr,free_flow_speed_m_s,kind,mirror_id\n\
             0,0,1,12,1,4847,0,footpath,1\n",
        )
        .unwrap();
        assert!(matches!(
            read_links_csv(&lp),
            Err(Error::NonPositiveAttribute { attribute: "free_flow_speed_m_s", .. })
        ));
    }

    #[test]
    fn demand_csv_round_trip() {
        let dir = tmp();
        let dp = dir.path().join("demand.csv");
        let demand = fixtures::toy_demand_case2();
        write_demand_csv(&dp, &demand).unwrap();
        let rd = read_demand_csv(&dp, demand.period_s()).unwrap();
        assert_eq!(rd.entries().len(), 2);
        assert_eq!(rd.entries()[0].origin, demand.entries()[0].origin);
        assert_eq!(rd.total_demand(), demand.total_demand());
        assert_eq!(rd.period_s(), 60.0);
    }

    #[test]
    fn observation_csv_reads_optional_flow_columns() {
        let dir = tmp();
        let full = dir.path().join("full.csv");
        fs::write(
            &full,
            "density_ped_m2,speed_m_s,travel_time_s,ref_flow,counter_flow\n\
             0.5,1.2,10.0,1200,800\n\
             0.7,1.0,12.0,,\n",
        )
        .unwrap();
        let obs = read_observations_csv(&full).unwrap();
        assert_eq!(obs.len(), 2);
        assert_eq!(obs[0].ref_flow, Some(1200.0));
        assert_eq!(obs[1].ref_flow, None);

        let bare = dir.path().join("bare.csv");
        fs::write(
            &bare,
            "density_ped_m2,speed_m_s,travel_time_s\n0.5,1.2,10.0\n",
        )
        .unwrap();
        let obs = read_observations_csv(&bare).unwrap();
        assert_eq!(obs[0].counter_flow, None);
        assert_eq!(obs[0].density, 0.5);
    }

    #[test]
    fn link_result_and_delta_round_trip() {
        let dir = tmp();
        let rows = vec![
            LinkResult {
                link_id: 0,
                volume_ped: 5.0,
                flow_ped_per_m_hr: 900.0,
                travel_time_s: 8.5,
            },
            LinkResult {
                link_id: 1,
                volume_ped: 0.0,
                flow_ped_per_m_hr: 0.0,
                travel_time_s: 8.2,
            },
        ];
        let rp = dir.path().join("links_out.csv");
        {
            let mut wtr = csv::Writer::from_path(&rp).unwrap();
            for r in &rows {
                wtr.serialize(r).unwrap();
            }
            wtr.flush().unwrap();
        }
        assert_eq!(read_link_results_csv(&rp).unwrap(), rows);

        let dp = dir.path().join("delta.csv");
        let deltas = vec![DeltaRow {
            link_id: 2,
            volume_base: 5.0,
            volume_scenario: 0.0,
            delta: -5.0,
        }];
        write_delta_csv(&dp, &deltas).unwrap();
        let text = fs::read_to_string(&dp).unwrap();
        assert_eq!(
            text,
            "link_id,volume_base,volume_scenario,delta\n2,5.0,0.0,-5.0\n"
        );
    }

    #[test]
    fn gap_history_numbers_iterations_from_one() {
        let dir = tmp();
        let gp = dir.path().join("gaps.csv");
        write_gap_history_csv(&gp, &[1.0, 0.25, 0.0]).unwrap();
        let text = fs::read_to_string(&gp).unwrap();
        assert_eq!(
            text,
            "iteration,relative_gap\n1,1.0\n2,0.25\n3,0.0\n"
        );
    }

    #[test]
    fn geojson_parses_ids_and_road_class() {
        let text = r#"{
            "type": "FeatureCollection",
            "features": [
                {"type": "Feature", "properties": {"id": 7, "road_class": "primary"},
                 "geometry": {"type": "LineString", "coordinates": [[0, 0], [100, 0]]}},
                {"type": "Feature", "properties": {},
                 "geometry": {"type": "LineString", "coordinates": [[0, 0], [0, 100]]}},
                {"type": "Feature", "id": "3", "properties": null,
                 "geometry": {"type": "LineString", "coordinates": [[5, 5], [5, 50]]}}
            ]
        }"#;
        let lines = parse_centerlines_geojson(text).unwrap();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].id, 7);
        assert_eq!(lines[0].road_class, "primary");
        assert_eq!(lines[1].id, 1);
        assert_eq!(lines[1].road_class, "unclassified");
        assert_eq!(lines[2].id, 3);
        assert_eq!(lines[1].points, vec![(0.0, 0.0), (0.0, 100.0)]);
    }

    #[test]
    fn geojson_rejects_unsupported_geometry() {
        let text = r#"{
            "type": "FeatureCollection",
            "features": [
                {"type": "Feature", "properties": {},
                 "geometry": {"type": "Point", "coordinates": [0, 0]}}
            ]
        }"#;
        let err = parse_centerlines_geojson(text).unwrap_err();
        assert!(err.to_string().contains("Point"));
    }

    #[test]
    fn wkt_parser_accepts_any_case_and_rejects_garbage() {
        assert_eq!(
            parse_wkt_linestring("LINESTRING (0 0, 100 0)").unwrap(),
            vec![(0.0, 0.0), (100.0, 0.0)]
        );
        assert_eq!(
            parse_wkt_linestring("linestring(1.5 -2.5, 3 4, 5 6)").unwrap(),
            vec![(1.5, -2.5), (3.0, 4.0), (5.0, 6.0)]
        );
        assert!(parse_wkt_linestring("POINT (0 0)").is_err());
        assert!(parse_wkt_linestring("LINESTRING 0 0, 1 1").is_err());
        assert!(parse_wkt_linestring("LINESTRING (0 0 0, 1 1 1)").is_err());
    }

    #[test]
    fn wkt_csv_reads_road_class_with_default() {
        let dir = tmp();
        let wp = dir.path().join("roads.csv");
        fs::write(
            &wp,
            "id,wkt_linestring,road_class\n\
             1,\"LINESTRING (0 0, 100 0)\",residential\n\
             2,\"LINESTRING (0 -50, 0 50)\",\n",
        )
        .unwrap();
        let lines = read_centerlines_wkt_csv(&wp).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].road_class, "residential");
        assert_eq!(lines[1].road_class, "unclassified");
        assert_eq!(lines[1].points.len(), 2);
    }

    #[test]
    fn links_geojson_writer_is_self_consistent() {
        let dir = tmp();
        let (_, links) = fixtures::toy_nodes_links();
        let geometry: Vec<Vec<(f64, f64)>> =
            links.iter().map(|_| vec![(0.0, 0.0), (1.0, 1.0)]).collect();
        let gp = dir.path().join("links.geojson");
        write_links_geojson(&gp, &links, &geometry).unwrap();
        let doc: Value = serde_json::from_str(&fs::read_to_string(&gp).unwrap()).unwrap();
        let features = doc["features"].as_array().unwrap();
        assert_eq!(features.len(), links.len());
        assert_eq!(features[0]["properties"]["id"], json!(0));
        assert_eq!(features[1]["properties"]["mirror_id"], json!(0));

        assert!(matches!(
            write_links_geojson(dir.path().join("bad.geojson"), &links, &geometry[..1]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn empty_config_gives_defaults() {
        let config = RunConfig::from_toml_str("").unwrap();
        assert_eq!(config.network.period_s, 3600.0);
        assert_eq!(config.network.flow_scale, 1.0);
        assert_eq!(config.pvdf.family, PvdfFamily::DetSymmetric);
        assert_eq!(config.pvdf.symmetric.alpha, 0.949);
        assert_eq!(config.solver.max_iterations, 1000);
        assert_eq!(config.solver.gap_tolerance, 1e-4);
        assert_eq!(config.netgen.offset_distance, 5.0);
        assert_eq!(config.calibration.sigma_bins, 20);
    }

    #[test]
    fn config_parses_sections_and_maps_solver_mode() {
        let config = RunConfig::from_toml_str(
            "[network]\nperiod_s = 60.0\nflow_scale = 3.0\n\
             [pvdf]\nfamily = \"stoch_asymmetric\"\n\
             [pvdf.sigma]\nphi = 0.5\n\
             [solver]\nseed = 42\n",
        )
        .unwrap();
        assert_eq!(config.network.flow_scale, 3.0);
        assert_eq!(config.pvdf.family, PvdfFamily::StochAsymmetric);
        assert_eq!(config.pvdf.sigma.phi, 0.5);
        assert_eq!(config.pvdf.sigma.gamma, 1.439);
        let solver = config.solver_config();
        assert_eq!(solver.mode, SolverMode::Stochastic);
        assert_eq!(solver.seed, 42);

        let det = RunConfig::default().solver_config();
        assert_eq!(det.mode, SolverMode::Deterministic);
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml_str("[solver]\nstep_size = 0.5\n").is_err());
        assert!(RunConfig::from_toml_str("[pvdf]\nfamily = \"bpr\"\n").is_err());
        assert!(RunConfig::from_toml_str("[network]\nperiod_s = 0.0\n").is_err());
        assert!(RunConfig::from_toml_str("[pvdf.symmetric]\nalpha = -1.0\n").is_err());
        assert!(RunConfig::from_toml_str("[netgen]\ncrossing_speed = 99.0\n").is_err());
    }

    #[test]
    fn config_toml_round_trip() {
        let dir = tmp();
        let mut config = RunConfig::default();
        config.pvdf.family = PvdfFamily::DetAsymmetric;
        config.solver.seed = 7;
        let cp = dir.path().join("config.toml");
        config.save(&cp).unwrap();
        let loaded = RunConfig::load(&cp).unwrap();
        assert_eq!(loaded.pvdf.family, PvdfFamily::DetAsymmetric);
        assert_eq!(loaded.solver.seed, 7);
        assert_eq!(loaded.pvdf.asymmetric.mu, -0.836);
    }

    #[test]
    fn summary_text_is_key_value_lines() {
        let s = RunSummary {
            tstt_s: 120.5,
            total_demand_ped: 10.0,
            avg_link_volume: 2.5,
            total_paths: 2,
            avg_path_volume: 5.0,
            avg_trip_time_s: 12.05,
            empty_links: 4,
            iterations: 3,
            final_gap: 0.0,
            converged: true,
        };
        let text = summary_text(&s);
        assert!(text.starts_with("tstt_s = 120.5\n"));
        assert!(text.contains("\nconverged = true\n"));
        assert_eq!(text.lines().count(), 10);
    }
}
