use serde_json::Value;
use srb_core::orbit_io::{free_recurrence_violations, read_orbit};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn default_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml")
}

fn srb(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srb"))
        .args(args)
        .arg("--config")
        .arg(default_config())
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn srb")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn green_kubo_reports_predicted_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gk");
    let o = srb(&["green-kubo", "--set", "estimator.t=5000", "--set", "model.n=1", "--threads", "2"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let js = read_json(&out.join("green_kubo.json"));
    let c2 = js["predicted_c2"].as_f64().unwrap();
    assert!((c2 + 0.12732).abs() < 5e-6, "{c2}");
    assert_eq!(js["inputs"]["eps"].as_array().unwrap().len(), 4);
    assert!(js["fit"]["c2_err"].as_f64().unwrap() > 0.0);
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["status"], "ok");
    assert_eq!(m["config_hash"], js["config_hash"]);
    assert_eq!(m["threads"], 2);
    assert!(m["wall_time_s"].as_f64().is_some() && m["versions"]["srb-core"].is_string());
}

#[test]
fn simulate_at_zero_coupling_follows_the_cat_map() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = srb(&["simulate", "--set", "model.eps=0", "--set", "estimator.t=200", "--seed", "9"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let orbit = read_orbit(std::fs::File::open(out.join("orbit.srbl")).unwrap()).unwrap();
    assert_eq!(orbit.len(), 200);
    assert_eq!(orbit.header.eps, 0.0);
    assert!(free_recurrence_violations(&orbit).is_empty());
    for t in 0..orbit.len() - 1 {
        for (a, b) in orbit.frames[t].iter().zip(&orbit.frames[t + 1]) {
            let tau = std::f64::consts::TAU;
            let x = (a[0] + a[1]).rem_euclid(tau);
            let y = (a[0] + 2.0 * a[1]).rem_euclid(tau);
            assert!(srb_core::lattice::torus_dist([x, y], *b) < 1e-9);
        }
    }
    assert_eq!(read_json(&out.join("manifest.json"))["seed"], 9);
}

#[test]
fn invalid_key_exits_2_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad");
    let o = srb(&["conjugate", "--set", "model.colour=3"], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[model]\nd = 1\n\n[extras]\nx = 1\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_srb")).args(["encode", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    let o = srb(&["encode", "--set", "model.d=4"], &out);
    assert_eq!(o.status.code(), Some(2));
    let o = srb(&["ldp", "--set", "estimator.t0=[51]"], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn runtime_error_exits_1_with_name_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rt");
    let o = srb(&["green-kubo", "--set", "model.eps_list=[0.02, 0.04]", "--set", "estimator.t=100"], &out);
    assert_eq!(o.status.code(), Some(1));
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["status"], "error");
    assert_eq!(m["error"]["name"], "insufficient-eps-points");
    assert!(!out.join("green_kubo.json").exists());
}

#[test]
fn artifacts_are_reproducible_and_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["conjugate", "--set", "expansion.states=2", "--set", "model.n=1", "--set", "expansion.k_max=2"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(srb(&args, &a).status.success());
    assert!(srb(&args, &b).status.success());
    let ta = std::fs::read(a.join("conjugate.csv")).unwrap();
    assert_eq!(ta, std::fs::read(b.join("conjugate.csv")).unwrap());
    let text = String::from_utf8(ta).unwrap();
    assert!(!text.contains('\r'));
    let hash = read_json(&a.join("manifest.json"))["config_hash"].as_str().unwrap().to_string();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "config_hash,K,eps,max_residual,mean_residual,slope");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2 * 4);
    assert!(rows.iter().all(|r| r.starts_with(&hash)));
    let c = dir.path().join("c");
    assert!(srb(&[&args[..], &["--seed", "2"]].concat(), &c).status.success());
    assert_ne!(read_json(&c.join("manifest.json"))["config_hash"].as_str().unwrap(), hash);
}

#[test]
fn remaining_subcommands_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str], &[&str]); 5] = [
        ("spectrum", &["--set", "model.n=1", "--set", "expansion.steps=20", "--set", "model.eps_list=[0.02]"], &["spectrum.csv"]),
        ("encode", &["--set", "symbolic.points=20"], &["partition.txt", "encode.csv"]),
        ("potentials", &["--set", "model.n=1", "--set", "expansion.j_max=4", "--set", "expansion.k=1", "--set", "expansion.samples=2"], &["potentials.jsonl", "decay.json"]),
        ("pressure", &[], &["pressure.json"]),
        ("ldp", &["--set", "model.n=1", "--set", "estimator.t=20000"], &["generating_function.csv", "rate_function.csv", "ldp.json"]),
    ];
    for (cmd, extra, files) in cases {
        let out = dir.path().join(cmd);
        let o = srb(&[&[cmd][..], extra].concat(), &out);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        for f in files {
            let p = out.join(f);
            assert!(p.exists() && std::fs::metadata(&p).unwrap().len() > 0, "{cmd}: {f}");
        }
        let m = read_json(&out.join("manifest.json"));
        assert_eq!(m["subcommand"], cmd);
        assert_eq!(m["artifacts"].as_array().unwrap().len(), files.len());
    }
    let sp = std::fs::read_to_string(dir.path().join("spectrum/spectrum.csv")).unwrap();
    for row in sp.lines().skip(1) {
        let diff: f64 = row.split(',').last().unwrap().parse().unwrap();
        assert!(diff < 1e-3, "{row}");
    }
    let p = read_json(&dir.path().join("pressure/pressure.json"));
    let free = p["report"]["free"].as_f64().unwrap();
    assert!((p["report"]["pressure"].as_f64().unwrap() - free).abs() < 1e-2);
    let ldp = read_json(&dir.path().join("ldp/ldp.json"));
    assert_eq!(ldp["windows"].as_array().unwrap().len(), 2);
}
