use std::path::Path;
use std::process::{Command, Output};

use gge_core::ion::{simulate_preparation, IonSystemParams};
use serde_json::{json, Value};
use tempfile::TempDir;

/// Cheap settings: four sites, block-diagonal route only.
const SMALL: &str = r#"
[model]
n = 4

[ensembles]
routes = ["bd"]
bd_sizes = [4]
tgge_sizes = [4]
n_c = 1

[figure1]
gamma = { values = [0.0, 0.5, 1.0] }

[figure2]
anisotropy = { values = [0.1, 0.8] }
sizes = [4]

[figure3]
field = { values = [0.5, 1.0] }
gammas = [0.6]
sizes = [4]

[figure4]
anisotropy = { values = [0.1] }
sizes = [4]

[ion_sim]
t_max = 10.0
samples = 5
"#;

fn gge(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_gge"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn header(dir: &Path, name: &str) -> String {
    read(dir, name).lines().next().unwrap().to_string()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "{}\n{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
}

#[test]
fn csv_headers_are_stable() {
    let d = TempDir::new().unwrap();
    for cmd in ["figure1", "figure2", "figure3", "figure4", "ion-sim"] {
        ok(&gge(d.path(), SMALL, &[cmd]));
    }
    ok(&gge(d.path(), SMALL, &["charges", "dump", "--n", "6", "--count", "2"]));
    assert_eq!(header(d.path(), "figure1_bd.csv"), "gamma,route,N,e_density,c4_density,error");
    assert_eq!(
        header(d.path(), "figure2.csv"),
        "anisotropy,gamma,route,N,eta_c4,eta_kind,c4_density,c4_thermal,beta,error"
    );
    assert_eq!(header(d.path(), "figure3.csv"), "h,gamma,route,N,eta_c4,eta_kind,c4_density,c4_thermal,beta,error");
    assert_eq!(
        header(d.path(), "figure4.csv"),
        "anisotropy,gamma,route,N,yyx,yxy,yyx_thermal,yxy_thermal,beta,error"
    );
    assert_eq!(header(d.path(), "ion_sim.csv"), "t,P_00,P_10,P_psi_e,P_1e,P_phonon_top");
    assert_eq!(header(d.path(), "charges_check.csv"), "charge,max_support,terms,hermiticity_defect,comm_h0,N");
}

#[test]
fn figure1_rows_follow_the_grid() {
    let d = TempDir::new().unwrap();
    ok(&gge(d.path(), SMALL, &["figure1"]));
    let text = read(d.path(), "figure1_bd.csv");
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), ["0", "0.5", "1.0"]);
    for r in &rows {
        assert_eq!((r[1], r[2], r[5]), ("bd", "4", ""));
        r[3].parse::<f64>().unwrap();
    }
    assert!(read(d.path(), "figure1.svg").starts_with("<svg"));
}

#[test]
fn output_is_independent_of_thread_count() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    ok(&gge(a.path(), SMALL, &["--threads", "1", "figure2"]));
    ok(&gge(b.path(), SMALL, &["--threads", "3", "figure2"]));
    assert_eq!(read(a.path(), "figure2.csv"), read(b.path(), "figure2.csv"));
    ok(&gge(a.path(), SMALL, &["--threads", "2", "figure2"]));
    assert_eq!(read(a.path(), "figure2.csv"), read(b.path(), "figure2.csv"));
}

#[test]
fn empty_grid_is_a_config_error_before_any_work() {
    let d = TempDir::new().unwrap();
    let cfg = format!("{SMALL}\n[effops]\nomega = {{ values = [] }}\n");
    let o = gge(d.path(), &cfg, &["figure1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid is empty"));
    assert!(!d.path().join("out").join("figure1_bd.csv").exists());

    let range = SMALL.replace("gamma = { values = [0.0, 0.5, 1.0] }", "gamma = { start = 0.0, stop = 1.0, steps = 0 }");
    assert_eq!(gge(d.path(), &range, &["figure1"]).status.code(), Some(2));
}

#[test]
fn malformed_configs_exit_with_config_code() {
    let d = TempDir::new().unwrap();
    for bad in [
        "[model]\nsites = 4\n",
        "[model]\nn = 5\n",
        "[figure2]\nanisotropy = { values = [0.5, 0.2, 0.3] }\n",
        "[ensembles]\nroutes = [\"magic\"]\n",
        "[figure2]\nanisotropy = { start = 0.1, stop = 0.5, steps = 3, extra = 1 }\n",
    ] {
        let o = gge(d.path(), bad, &["figure2"]);
        assert_eq!(o.status.code(), Some(2), "{bad}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(gge(d.path(), SMALL, &["figure1", "--n", "3"]).status.code(), Some(2));
}

#[test]
fn failed_points_stay_in_the_table_and_set_the_exit_code() {
    let d = TempDir::new().unwrap();
    // Four charges do not fit on four sites.
    let cfg = SMALL.replace("n_c = 1", "n_c = 4").replace("routes = [\"bd\"]", "routes = [\"bd\", \"tgge\"]");
    let o = gge(d.path(), &cfg, &["figure1"]);
    assert_eq!(o.status.code(), Some(3));
    let text = read(d.path(), "figure1_tgge.csv");
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.contains("does not fit")), "{text}");
    let m: Value = serde_json::from_str(&read(d.path(), "figure1_manifest.json")).unwrap();
    assert!(m["failed_points"].as_u64().unwrap() >= 3);
}

#[test]
fn manifest_records_the_resolved_run() {
    let d = TempDir::new().unwrap();
    ok(&gge(d.path(), SMALL, &["--threads", "2", "figure1", "--route", "bd"]));
    let m: Value = serde_json::from_str(&read(d.path(), "figure1_manifest.json")).unwrap();
    assert_eq!(m["command"], "figure1");
    assert_eq!(m["threads"], 2);
    assert_eq!(m["config"]["model"]["n"], 4);
    assert_eq!(m["config"]["model"]["jz"], 0.1);
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert!(m["tolerances"]["tgge_tol"].is_number());
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(outputs, ["figure1_bd.csv", "figure1.svg"]);
    assert_eq!(m["extra"]["route_override"], json!(["bd"]));
}

#[test]
fn stored_optimum_replays_deterministically() {
    let d = TempDir::new().unwrap();
    let p = IonSystemParams {
        omega: 0.08,
        gamma_e1: 0.48,
        ..IonSystemParams::default()
    };
    let f = simulate_preparation(&p, 30.0).unwrap().fidelity;
    let manifest = json!({ "extra": { "results": [{ "t_opt": 30.0, "f_opt": f, "params_opt": p }] } });
    let stored = d.path().join("stored.json");
    std::fs::write(&stored, manifest.to_string()).unwrap();
    ok(&gge(d.path(), SMALL, &["ion-opt", "--params-from", stored.to_str().unwrap()]));
    let text = read(d.path(), "ion_replay.csv");
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "30.0");
    assert_eq!(row[2].parse::<f64>().unwrap(), f);
    assert_eq!(row[6], "true");

    let garbage = d.path().join("garbage.json");
    std::fs::write(&garbage, "{\"nothing\": 1}").unwrap();
    let o = gge(d.path(), SMALL, &["ion-opt", "--params-from", garbage.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn charge_dump_round_trips_and_commutes() {
    let d = TempDir::new().unwrap();
    ok(&gge(d.path(), SMALL, &["charges", "dump", "--n", "8", "--count", "3"]));
    let text = read(d.path(), "charges.txt");
    let blocks: Vec<&str> = text.split("# C").skip(1).collect();
    assert_eq!(blocks.len(), 3);
    for b in blocks {
        let body: String = b.lines().skip(1).map(|l| format!("{l}\n")).collect();
        gge_core::OperatorPolynomial::from_text(&body).unwrap();
    }
    let check = read(d.path(), "charges_check.csv");
    for line in check.lines().skip(1) {
        let comm: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!(comm <= 1e-12, "{line}");
    }
}
