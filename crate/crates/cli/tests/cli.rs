//! Black-box tests of the command line binary: every command end to end,
//! exit codes, output files, and rerun determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_walkflow"))
}

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assign_toy(out_dir: &Path, extra: &[&str]) -> Output {
    let config = fixture("toy/config.toml");
    let nodes = fixture("toy/nodes.csv");
    let links = fixture("toy/links.csv");
    let demand = fixture("toy/demand_case1.csv");
    let mut args = vec![
        "assign",
        "--config",
        config.to_str().unwrap(),
        "--nodes",
        nodes.to_str().unwrap(),
        "--links",
        links.to_str().unwrap(),
        "--demand",
        demand.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

fn read_volumes(dir: &Path) -> Vec<(u64, f64, f64)> {
    let mut rdr = csv::Reader::from_path(dir.join("link_results.csv")).unwrap();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            (
                r[0].parse().unwrap(),
                r[1].parse().unwrap(),
                r[3].parse().unwrap(),
            )
        })
        .collect()
}

#[test]
fn assign_solves_the_balanced_toy_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = assign_toy(dir.path(), &[]);
    assert!(out.status.success(), "{}", stderr_of(&out));

    let rows = read_volumes(dir.path());
    assert_eq!(rows.len(), 8);
    for (id, volume, time) in &rows {
        let want = match id {
            0 | 3 | 5 | 6 => 5.0,
            _ => 0.0,
        };
        assert!((volume - want).abs() <= 1e-6, "link {id}: volume {volume}");
        assert!((time - 8.474427897376204).abs() <= 1e-9, "link {id}: time {time}");
    }

    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("tstt_s = 169.48855794752407"), "{summary}");
    assert!(summary.contains("converged = true"), "{summary}");
    for name in ["path_results.csv", "gap_history.csv", "manifest.json"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
}

#[test]
fn assign_reruns_are_byte_identical_apart_from_timing() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(assign_toy(a.path(), &["--seed", "7"]).status.success());
    assert!(assign_toy(b.path(), &["--seed", "7"]).status.success());

    for name in [
        "link_results.csv",
        "path_results.csv",
        "gap_history.csv",
        "summary.txt",
    ] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name} differs between reruns"
        );
    }

    let normalize = |dir: &Path| -> Value {
        let mut v: Value =
            serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        v["duration_s"] = Value::from(0.0);
        v
    };
    assert_eq!(normalize(a.path()), normalize(b.path()));
}

#[test]
fn assign_reports_unconverged_runs_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let out = assign_toy(dir.path(), &["--max-iters", "2"]);
    assert!(out.status.success());
    assert!(
        stderr_of(&out).contains("did not converge"),
        "{}",
        stderr_of(&out)
    );
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("converged = false"));
}

#[test]
fn assign_with_the_asymmetric_family_shifts_the_split() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture("toy/config.toml");
    let demand = fixture("toy/demand_case2.csv");
    let out = run(&[
        "assign",
        "--config",
        config.to_str().unwrap(),
        "--nodes",
        fixture("toy/nodes.csv").to_str().unwrap(),
        "--links",
        fixture("toy/links.csv").to_str().unwrap(),
        "--demand",
        demand.to_str().unwrap(),
        "--family",
        "det_asymmetric",
        "--max-iters",
        "50000",
        "--gap-tol",
        "1e-10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let rows = read_volumes(dir.path());
    let via_a = rows.iter().find(|r| r.0 == 3).unwrap().1;
    assert!(via_a > 2.5 && via_a < 5.0, "C-A volume {via_a}");
}

#[test]
fn missing_inputs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "assign",
        "--nodes",
        "no_such_nodes.csv",
        "--links",
        fixture("toy/links.csv").to_str().unwrap(),
        "--demand",
        fixture("toy/demand_case1.csv").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
}

#[test]
fn generate_builds_the_plus_network_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run(&[
            "generate",
            "--geometry",
            fixture("plus.geojson").to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr_of(&out));
    }

    let report = fs::read_to_string(a.path().join("gen_report.txt")).unwrap();
    assert!(report.contains("nodes.total = 20"), "{report}");
    assert!(report.contains("links.total = 40"), "{report}");
    assert!(report.contains("junctions = 1"), "{report}");

    for name in ["nodes.csv", "links.csv", "links.geojson", "gen_report.txt"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name} differs between reruns"
        );
    }
}

#[test]
fn generate_rejects_geometry_without_usable_features() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.geojson");
    fs::write(&empty, r#"{"type": "FeatureCollection", "features": []}"#).unwrap();
    let out = run(&[
        "generate",
        "--geometry",
        empty.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
}

#[test]
fn strict_generate_fails_when_features_are_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let geometry = dir.path().join("hairpin.geojson");
    // One clean road plus a connected hairpin whose sidewalk offset
    // degenerates; the hairpin is dropped with a reason.
    fs::write(
        &geometry,
        r#"{"type": "FeatureCollection", "features": [
            {"type": "Feature", "properties": {"id": 1, "road_class": "residential"},
             "geometry": {"type": "LineString", "coordinates": [[-60.0, 0.0], [0.0, 0.0]]}},
            {"type": "Feature", "properties": {"id": 2, "road_class": "residential"},
             "geometry": {"type": "LineString", "coordinates": [[0.0, 0.0], [0.0, 30.0], [0.2, 0.0]]}}
        ]}"#,
    )
    .unwrap();

    let relaxed = run(&[
        "generate",
        "--geometry",
        geometry.to_str().unwrap(),
        "--out",
        dir.path().join("relaxed").to_str().unwrap(),
    ]);
    assert!(relaxed.status.success(), "{}", stderr_of(&relaxed));
    let report =
        fs::read_to_string(dir.path().join("relaxed").join("gen_report.txt")).unwrap();
    assert!(report.contains("dropped = 1"), "{report}");

    let strict = run(&[
        "generate",
        "--geometry",
        geometry.to_str().unwrap(),
        "--strict",
        "--out",
        dir.path().join("strict").to_str().unwrap(),
    ]);
    assert_eq!(strict.status.code(), Some(1), "{}", stderr_of(&strict));
}

#[test]
fn scenario_closure_writes_the_expected_deltas() {
    let base = tempfile::tempdir().unwrap();
    assert!(assign_toy(base.path(), &[]).status.success());

    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "scenario",
        "--base-run",
        base.path().to_str().unwrap(),
        "--scenario",
        fixture("toy/close_ca.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));

    let mut rdr = csv::Reader::from_path(dir.path().join("delta.csv")).unwrap();
    let mut deltas = Vec::new();
    for r in rdr.records() {
        let r = r.unwrap();
        deltas.push((r[0].parse::<u64>().unwrap(), r[3].parse::<f64>().unwrap()));
    }
    assert_eq!(deltas.len(), 8);
    for (id, delta) in deltas {
        let want = match id {
            0 | 3 => -5.0,
            5 | 6 => 5.0,
            _ => 0.0,
        };
        assert!((delta - want).abs() <= 1e-9, "link {id}: delta {delta}");
    }
}

#[test]
fn an_empty_scenario_changes_nothing() {
    let base = tempfile::tempdir().unwrap();
    assert!(assign_toy(base.path(), &[]).status.success());

    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("noop.toml");
    fs::write(&spec, "").unwrap();
    let out = run(&[
        "scenario",
        "--base-run",
        base.path().to_str().unwrap(),
        "--scenario",
        spec.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));

    let mut rdr = csv::Reader::from_path(dir.path().join("out").join("delta.csv")).unwrap();
    for r in rdr.records() {
        let r = r.unwrap();
        let delta: f64 = r[3].parse().unwrap();
        assert_eq!(delta, 0.0, "link {}: delta {delta}", &r[0]);
    }
}

#[test]
fn scenario_severing_an_origin_exits_with_code_three() {
    let base = tempfile::tempdir().unwrap();
    assert!(assign_toy(base.path(), &[]).status.success());

    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("sever.toml");
    // Closing the A-B and C-D streams cuts every route from C to B while
    // leaving all four corners attached.
    fs::write(&spec, "closed_links = [0, 1, 6, 7]\n").unwrap();
    let out = run(&[
        "scenario",
        "--base-run",
        base.path().to_str().unwrap(),
        "--scenario",
        spec.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
    assert!(
        stderr_of(&out).contains("unreachable: 2 -> 1"),
        "{}",
        stderr_of(&out)
    );
}

fn write_observations(path: &Path) {
    // Noiseless synthetic street: speed law u = 1.5 exp(-(k/2)^2), symmetric
    // congestion alpha = 0.9, beta = 2 on the implied capacity, directional
    // splits cycling through five ratios.
    let u_f = 1.5_f64;
    let theta = 2.0_f64;
    let gamma = 2.0_f64;
    let k_c = theta * gamma.powf(-1.0 / gamma);
    let cap = u_f * (-1.0 / gamma).exp() * k_c * 3600.0;
    let tau = 1.0 / u_f;
    let splits = [0.2, 0.35, 0.5, 0.65, 0.8];

    let mut rows = String::from("density_ped_m2,speed_m_s,travel_time_s,ref_flow,counter_flow\n");
    for i in 0..40 {
        let k = 0.08 * (i + 1) as f64;
        let u = u_f * (-(k / theta).powf(gamma)).exp();
        let total = cap * k / k_c;
        let x = total * splits[i % splits.len()];
        let xc = total - x;
        let t = tau * (1.0 + 0.9 * ((x + xc) / cap).powi(2));
        rows.push_str(&format!("{k},{u},{t},{x},{xc}\n"));
    }
    fs::write(path, rows).unwrap();
}

#[test]
fn calibrate_fits_the_synthetic_street_and_feeds_assign() {
    let dir = tempfile::tempdir().unwrap();
    let obs = dir.path().join("observations.csv");
    write_observations(&obs);

    let out = run(&[
        "calibrate",
        "--observations",
        obs.to_str().unwrap(),
        "--out",
        dir.path().join("fit").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));

    let report = fs::read_to_string(dir.path().join("fit").join("calibration.txt")).unwrap();
    assert!(report.contains("sigma = not fitted"), "{report}");
    let value_of = |key: &str| -> f64 {
        report
            .lines()
            .find(|l| l.starts_with(key))
            .unwrap_or_else(|| panic!("{key} missing from {report}"))
            .split('=')
            .nth(1)
            .unwrap()
            .trim()
            .parse()
            .unwrap()
    };
    assert!((value_of("speed_law.u_f") - 1.5).abs() <= 1e-6);
    assert!((value_of("det_symmetric.alpha") - 0.9).abs() <= 1e-3);
    assert!((value_of("det_symmetric.beta") - 2.0).abs() <= 1e-3);

    let params = dir.path().join("fit").join("params.toml");
    assert!(params.exists());
    let run_dir = dir.path().join("run");
    let out2 = run(&[
        "assign",
        "--config",
        params.to_str().unwrap(),
        "--nodes",
        fixture("toy/nodes.csv").to_str().unwrap(),
        "--links",
        fixture("toy/links.csv").to_str().unwrap(),
        "--demand",
        fixture("toy/demand_case1.csv").to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert!(out2.status.success(), "{}", stderr_of(&out2));
}

#[test]
fn calibrate_with_too_few_observations_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let obs = dir.path().join("thin.csv");
    fs::write(
        &obs,
        "density_ped_m2,speed_m_s,travel_time_s\n0.5,1.2,8.0\n1.0,1.0,10.0\n1.5,0.8,12.0\n",
    )
    .unwrap();
    let out = run(&[
        "calibrate",
        "--observations",
        obs.to_str().unwrap(),
        "--out",
        dir.path().join("fit").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
}

#[test]
fn report_prints_the_run_digest() {
    let base = tempfile::tempdir().unwrap();
    assert!(assign_toy(base.path(), &["--seed", "11"]).status.success());

    let out = run(&["report", "--run", base.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("command = assign"), "{stdout}");
    assert!(stdout.contains("seed = 11"), "{stdout}");
    assert!(stdout.contains("input.nodes"), "{stdout}");
    assert!(stdout.contains("tstt_s"), "{stdout}");
}

#[test]
fn bad_flags_exit_with_code_two() {
    let out = run(&["assign", "--nodes"]);
    assert_eq!(out.status.code(), Some(2));
}
