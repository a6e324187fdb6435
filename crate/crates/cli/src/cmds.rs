//! The five commands. Each one reads its inputs, does its work through the
//! library, writes data files plus a manifest into the output directory, and
//! returns a process exit code. Diagnostics go to stderr only; stdout is
//! reserved for `report`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Deserialize;

use walkflow::assign::{shortest_path, AssignmentResult, CostView};
use walkflow::calibrate::{
    calibrate_chain, capacity, critical_density, fit_speed_law, FitReport, FittedPvdf,
    StreetCalibration,
};
use walkflow::io::{self, DeltaRow, RunConfig};
use walkflow::netgen;
use walkflow::network::{build_network, DemandEntry, DemandTable, LinkId, Network};
use walkflow::pvdf::PvdfFamily;
use walkflow::{Error, Result};

use crate::manifest::{self, file_digest, InputDigest, Manifest};

pub struct Ctx {
    pub config: RunConfig,
    pub config_path: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub strict: bool,
    pub started: Instant,
}

impl Ctx {
    fn out_dir(&self) -> Result<&Path> {
        let dir = self
            .out
            .as_deref()
            .ok_or_else(|| Error::InvalidInput("--out is required for this command".into()))?;
        fs::create_dir_all(dir)?;
        Ok(dir)
    }

    fn finish(&self, command: &str, inputs: BTreeMap<String, InputDigest>) -> Result<()> {
        let dir = self.out_dir()?;
        manifest::write(
            dir,
            &Manifest {
                command: command.into(),
                inputs,
                config: manifest::config_value(&self.config)?,
                seed: self.config.solver.seed,
                versions: manifest::versions(),
                duration_s: self.started.elapsed().as_secs_f64(),
            },
        )
    }

    fn input_digests(&self, named: &[(&str, &Path)]) -> Result<BTreeMap<String, InputDigest>> {
        let mut map = BTreeMap::new();
        for (name, path) in named {
            map.insert((*name).to_string(), file_digest(path)?);
        }
        if let Some(ref cp) = self.config_path {
            map.insert("config".into(), file_digest(cp)?);
        }
        Ok(map)
    }
}

pub fn generate(ctx: &Ctx, geometry: &Path) -> Result<i32> {
    let out = ctx.out_dir()?;
    let lines = io::read_centerlines(geometry)?;
    let gen = netgen::build_footpath_graph(lines, &ctx.config.netgen)?;
    for d in &gen.report.dropped {
        eprintln!("dropped centerline {}: {}", d.centerline_id, d.reason);
    }
    for note in &gen.report.notes {
        eprintln!("note: {note}");
    }
    io::write_nodes_csv(out.join("nodes.csv"), gen.network.nodes())?;
    io::write_links_csv(out.join("links.csv"), gen.network.links())?;
    io::write_links_geojson(
        out.join("links.geojson"),
        gen.network.links(),
        &gen.link_geometry,
    )?;
    fs::write(out.join("gen_report.txt"), gen.report.to_string())?;
    ctx.finish("generate", ctx.input_digests(&[("geometry", geometry)])?)?;
    Ok(if ctx.strict && !gen.report.dropped.is_empty() {
        1
    } else {
        0
    })
}

pub fn assign(ctx: &Ctx, nodes: &Path, links: &Path, demand: &Path) -> Result<i32> {
    let node_list = io::read_nodes_csv(nodes)?;
    let link_list = io::read_links_csv(links)?;
    let table = io::read_demand_csv(demand, ctx.config.network.period_s)?;
    let net = build_network(node_list, link_list, &table)?
        .with_flow_scale(ctx.config.network.flow_scale)?;
    let result = solve_reporting_unreachable(&net, &table, &ctx.config)?;
    write_assignment(ctx, &result)?;
    ctx.finish(
        "assign",
        ctx.input_digests(&[("nodes", nodes), ("links", links), ("demand", demand)])?,
    )?;
    Ok(0)
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ScenarioSpec {
    base_network: Option<String>,
    closed_links: Vec<u64>,
    demand_override: Vec<DemandOverride>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemandOverride {
    origin: u64,
    destination: u64,
    multiplier: Option<f64>,
    demand_ped: Option<f64>,
}

pub fn scenario(ctx: &mut Ctx, base_run: &Path, spec_path: &Path) -> Result<i32> {
    let base = manifest::read(base_run)?;
    if base.command != "assign" && base.command != "scenario" {
        return Err(Error::InvalidInput(format!(
            "base run was '{}'; scenarios need an assign or scenario run",
            base.command
        )));
    }

    let spec: ScenarioSpec = toml::from_str(&fs::read_to_string(spec_path)?)
        .map_err(|e| Error::InvalidInput(format!("invalid scenario spec: {e}")))?;
    if let Some(ref referenced) = spec.base_network {
        let same = fs::canonicalize(referenced).ok() == fs::canonicalize(base_run).ok();
        if !same {
            return Err(Error::InvalidInput(format!(
                "scenario references base network '{referenced}' but --base-run is '{}'",
                base_run.display()
            )));
        }
    }

    // The scenario re-reads the base run's inputs, so they must not have
    // changed underneath it.
    let mut paths = BTreeMap::new();
    for name in ["nodes", "links", "demand"] {
        let recorded = base.inputs.get(name).ok_or_else(|| {
            Error::InvalidInput(format!("base manifest records no '{name}' input"))
        })?;
        let fresh = file_digest(Path::new(&recorded.path))?;
        if fresh.sha256 != recorded.sha256 {
            return Err(Error::InvalidInput(format!(
                "{} changed since the base run (digest mismatch)",
                recorded.path
            )));
        }
        paths.insert(name, PathBuf::from(&recorded.path));
    }

    // The base run's resolved config is the starting point; flags already
    // applied to ctx.config were layered on top by the caller.
    let node_list = io::read_nodes_csv(&paths["nodes"])?;
    let link_list = io::read_links_csv(&paths["links"])?;
    let table = io::read_demand_csv(&paths["demand"], ctx.config.network.period_s)?;
    let net = build_network(node_list, link_list, &table)?
        .with_flow_scale(ctx.config.network.flow_scale)?;

    let ids: Vec<LinkId> = spec.closed_links.iter().map(|&id| LinkId(id)).collect();
    let (closed, warnings) = netgen::close_links(&net, &ids)?;
    for w in &warnings {
        eprintln!("{w}");
    }
    let table = apply_demand_overrides(&table, &spec.demand_override)?;

    let result = solve_reporting_unreachable(&closed, &table, &ctx.config)?;

    let base_rows = io::read_link_results_csv(base_run.join("link_results.csv"))?;
    let scen: BTreeMap<u64, f64> = result
        .links
        .iter()
        .zip(&result.volumes)
        .map(|(id, v)| (id.0, *v))
        .collect();
    let mut deltas: Vec<DeltaRow> = base_rows
        .iter()
        .map(|r| {
            let volume_scenario = scen.get(&r.link_id).copied().unwrap_or(0.0);
            DeltaRow {
                link_id: r.link_id,
                volume_base: r.volume_ped,
                volume_scenario,
                delta: volume_scenario - r.volume_ped,
            }
        })
        .collect();
    deltas.sort_by_key(|r| r.link_id);

    write_assignment(ctx, &result)?;
    io::write_delta_csv(ctx.out_dir()?.join("delta.csv"), &deltas)?;

    let mut inputs = ctx.input_digests(&[
        ("nodes", paths["nodes"].as_path()),
        ("links", paths["links"].as_path()),
        ("demand", paths["demand"].as_path()),
        ("scenario", spec_path),
    ])?;
    inputs.insert(
        "base_link_results".into(),
        file_digest(&base_run.join("link_results.csv"))?,
    );
    ctx.finish("scenario", inputs)?;
    Ok(0)
}

fn apply_demand_overrides(
    table: &DemandTable,
    overrides: &[DemandOverride],
) -> Result<DemandTable> {
    let mut entries: Vec<DemandEntry> = table.entries().to_vec();
    for o in overrides {
        let value = match (o.multiplier, o.demand_ped) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::InvalidInput(format!(
                    "override for {} -> {} must set exactly one of multiplier and demand_ped",
                    o.origin, o.destination
                )))
            }
            (Some(m), None) if m.is_finite() && m >= 0.0 => {
                let entry = entries
                    .iter()
                    .find(|e| e.origin.0 == o.origin && e.destination.0 == o.destination)
                    .ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "multiplier override for {} -> {} matches no demand entry",
                            o.origin, o.destination
                        ))
                    })?;
                entry.demand_ped * m
            }
            (None, Some(d)) if d.is_finite() && d >= 0.0 => d,
            _ => {
                return Err(Error::InvalidInput(format!(
                    "override for {} -> {} must be finite and non-negative",
                    o.origin, o.destination
                )))
            }
        };
        entries.retain(|e| !(e.origin.0 == o.origin && e.destination.0 == o.destination));
        if value > 0.0 {
            entries.push(DemandEntry {
                origin: walkflow::network::NodeId(o.origin),
                destination: walkflow::network::NodeId(o.destination),
                demand_ped: value,
            });
        }
    }
    DemandTable::new(entries, table.period_s())
}

pub fn calibrate(ctx: &Ctx, observations: &Path) -> Result<i32> {
    let out = ctx.out_dir()?;
    let obs = io::read_observations_csv(observations)?;
    let bins = ctx.config.calibration.sigma_bins;

    // The speed law alone decides capacity and tau; fitting it up front
    // keeps those in the report even when a pVDF fit later diverges.
    let speed = fit_speed_law(&obs)?;
    let k_c = critical_density(&speed.params);
    let cap = capacity(&speed.params);
    let tau = 1.0 / speed.params.u_f;

    let mut diverged = false;
    let mut take = |chain: Result<StreetCalibration>, name: &str| match chain {
        Ok(c) => Some(c),
        Err(Error::FitDiverged(msg)) => {
            eprintln!("{name} fit diverged: {msg}");
            diverged = true;
            None
        }
        Err(e) => {
            eprintln!("{name} fit failed: {e}");
            None
        }
    };
    let sym_chain = calibrate_chain(&obs, PvdfFamily::DetSymmetric, bins);
    let asym_chain = calibrate_chain(&obs, PvdfFamily::DetAsymmetric, bins);
    // Anything other than divergence (too little data, bad values) is an
    // input problem and fails the command outright.
    for chain in [&sym_chain, &asym_chain] {
        if let Err(e) = chain {
            if !matches!(e, Error::FitDiverged(_)) {
                return Err(clone_error(e));
            }
        }
    }
    let sym = take(sym_chain, "det_symmetric");
    let asym = take(asym_chain, "det_asymmetric");

    let mut text = String::new();
    text.push_str(&format!("speed_law.u_f = {}\n", speed.params.u_f));
    text.push_str(&format!("speed_law.theta = {}\n", speed.params.theta));
    text.push_str(&format!("speed_law.gamma = {}\n", speed.params.gamma));
    text.push_str(&fit_quality("speed_law", &speed));
    text.push_str(&format!("critical_density = {k_c}\n"));
    text.push_str(&format!("capacity = {cap}\n"));
    text.push_str(&format!("tau = {tau}\n"));
    for (name, chain) in [("det_symmetric", &sym), ("det_asymmetric", &asym)] {
        match chain {
            Some(c) => {
                match c.pvdf.params {
                    FittedPvdf::Symmetric(p) => {
                        text.push_str(&format!("{name}.alpha = {}\n", p.alpha));
                        text.push_str(&format!("{name}.beta = {}\n", p.beta));
                    }
                    FittedPvdf::Asymmetric(p) => {
                        text.push_str(&format!("{name}.alpha = {}\n", p.alpha));
                        text.push_str(&format!("{name}.beta = {}\n", p.beta));
                        text.push_str(&format!("{name}.mu = {}\n", p.mu));
                        text.push_str(&format!("{name}.eta_r = {}\n", p.eta_r));
                        text.push_str(&format!("{name}.eta_c = {}\n", p.eta_c));
                        text.push_str(&format!("{name}.lambda_r = {}\n", p.lambda_r));
                        text.push_str(&format!("{name}.lambda_c = {}\n", p.lambda_c));
                    }
                }
                text.push_str(&fit_quality(name, &c.pvdf));
            }
            None => text.push_str(&format!("{name} = fit diverged\n")),
        }
    }
    let sigma = sym
        .as_ref()
        .and_then(|c| c.sigma.clone())
        .or_else(|| asym.as_ref().and_then(|c| c.sigma.clone()));
    match &sigma {
        Some(s) => {
            text.push_str(&format!("sigma.phi = {}\n", s.params.phi));
            text.push_str(&format!("sigma.gamma = {}\n", s.params.gamma));
            text.push_str(&format!("sigma.lambda_t = {}\n", s.params.lambda_t));
            text.push_str(&fit_quality("sigma", s));
        }
        None => text.push_str("sigma = not fitted\n"),
    }
    // Both chains preprocess the same observations, so report the warnings
    // of whichever fitted first rather than printing every one twice.
    if let Some(c) = [&sym, &asym].into_iter().flatten().next() {
        for w in &c.warnings {
            text.push_str(&format!("warning = {w}\n"));
            eprintln!("{w}");
        }
    }
    fs::write(out.join("calibration.txt"), &text)?;

    if let (Some(sym), Some(asym)) = (&sym, &asym) {
        let mut params = ctx.config.clone();
        if let FittedPvdf::Symmetric(p) = sym.pvdf.params {
            params.pvdf.symmetric = p;
        }
        if let FittedPvdf::Asymmetric(p) = asym.pvdf.params {
            params.pvdf.asymmetric = p;
        }
        if let Some(ref s) = sigma {
            params.pvdf.sigma = s.params;
        }
        params.save(out.join("params.toml"))?;
    } else {
        eprintln!("params.toml not written: not every family was fitted");
    }

    ctx.finish(
        "calibrate",
        ctx.input_digests(&[("observations", observations)])?,
    )?;
    Ok(if diverged { 4 } else { 0 })
}

fn fit_quality<P>(name: &str, report: &FitReport<P>) -> String {
    format!(
        "{name}.rmse = {}\n{name}.rmse_mean = {}\n{name}.r_squared = {}\n\
         {name}.iterations = {}\n{name}.converged = {}\n",
        report.rmse, report.rmse_mean, report.r_squared, report.iterations, report.converged
    )
}

fn clone_error(e: &Error) -> Error {
    Error::InvalidInput(e.to_string())
}

pub fn report(run: &Path) -> Result<i32> {
    let m = manifest::read(run)?;
    println!("command = {}", m.command);
    println!("seed = {}", m.seed);
    println!("duration_s = {}", m.duration_s);
    for (name, d) in &m.inputs {
        println!("input.{name} = {} sha256:{}", d.path, d.sha256);
    }
    for (name, version) in &m.versions {
        println!("version.{name} = {version}");
    }
    for file in ["summary.txt", "gen_report.txt", "calibration.txt"] {
        let path = run.join(file);
        if let Ok(text) = fs::read_to_string(&path) {
            println!("\n[{file}]");
            print!("{text}");
        }
    }
    Ok(0)
}

fn solve_reporting_unreachable(
    net: &Network,
    demand: &DemandTable,
    config: &RunConfig,
) -> Result<AssignmentResult> {
    match walkflow::assign::solve(net, demand, &config.pvdf, &config.solver_config()) {
        Err(e @ Error::Unreachable { .. }) => {
            for (o, d) in unreachable_pairs(net, demand) {
                eprintln!("unreachable: {o} -> {d}");
            }
            Err(e)
        }
        other => other,
    }
}

/// Every demand pair with no connecting path, judged at free-flow times
/// (reachability does not depend on costs).
fn unreachable_pairs(net: &Network, demand: &DemandTable) -> Vec<(u64, u64)> {
    let times: Vec<f64> = net.links().iter().map(|l| l.free_flow_time_s).collect();
    let Ok(costs) = CostView::from_times(times) else {
        return Vec::new();
    };
    demand
        .entries()
        .iter()
        .filter(|e| shortest_path(net, &costs, e.origin, e.destination).is_err())
        .map(|e| (e.origin.0, e.destination.0))
        .collect()
}

fn write_assignment(ctx: &Ctx, result: &AssignmentResult) -> Result<()> {
    let out = ctx.out_dir()?;
    io::write_link_results_csv(out.join("link_results.csv"), result)?;
    io::write_paths_csv(out.join("path_results.csv"), result)?;
    io::write_gap_history_csv(out.join("gap_history.csv"), &result.gap_history)?;
    io::write_summary(out.join("summary.txt"), &result.summary())?;
    if !result.converged {
        eprintln!(
            "did not converge: relative gap {} after {} iterations",
            result.final_gap(),
            result.iterations
        );
    }
    Ok(())
}
