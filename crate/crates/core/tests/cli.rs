//! Exit-code contract and container outputs of the `conetomo` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use conetomo::cli::{read_w, write_w};
use conetomo::container::read_c64;

const SMALL_GRIDS: &str = r#"{"a_max":1,"n_a":17,"p_max":4,"n_p":64,"sigma_max":16,"n_sigma":64}"#;

fn planar_config(amplitude: f64, extra: &str) -> String {
    format!(
        r#"{{"geometry":"planar","n":2,"k":0,"phantom":[{{"center":[0,0.6],"radius":0.25,"amplitude":{amplitude}}}],
            "compton":{{"planar":{{"grids":{SMALL_GRIDS}}}}},"planar":{{"recon_points":9}}{extra}}}"#
    )
}

fn conetomo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conetomo"))
        .args(args)
        .env_remove("CONETOMO_THREADS")
        .output()
        .expect("binary runs")
}

fn with_config(dir: &Path, text: &str, cmd: &str) -> Output {
    let cfg = dir.join("run.json");
    fs::write(&cfg, text).unwrap();
    conetomo(&["--config", cfg.to_str().unwrap(), "--out", dir.join("out").to_str().unwrap(), cmd])
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_demo_is_a_usage_error() {
    let o = conetomo(&["demo", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("corruption-sweep"));
}

#[test]
fn missing_or_invalid_config_exits_2_and_names_the_field() {
    assert_eq!(conetomo(&["project"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = planar_config(1.0, "").replace(r#""k":0"#, r#""k":7"#);
    let o = with_config(dir.path(), &bad, "project");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`k`"), "{}", stderr(&o));
    let unknown = planar_config(1.0, r#","colour":"red""#);
    let o = with_config(dir.path(), &unknown, "project");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"));
    assert_eq!(conetomo(&["--tol-scale", "x", "demo", "convex-crt"]).status.code(), Some(2));
}

#[test]
fn zero_phantom_gives_zero_containers_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let text = planar_config(0.0, "");
    assert_eq!(with_config(dir.path(), &text, "project").status.code(), Some(0));
    let out = dir.path().join("out");
    let w = read_w(&out.join("w")).unwrap();
    assert!(w.values.iter().all(|v| *v == 0.0));
    let (_, h) = read_c64(&out.join("h")).unwrap();
    assert!(h.iter().all(|z| z.norm() == 0.0));
    assert_eq!(with_config(dir.path(), &text, "check").status.code(), Some(0));
    assert_eq!(with_config(dir.path(), &text, "reconstruct").status.code(), Some(0));
    let (_, f) = conetomo::container::read_f64(&out.join("f")).unwrap();
    assert!(f.iter().all(|v| *v == 0.0));
    for name in ["manifest.json", "config.json", "report.json", "report.csv", "metrics.json"] {
        assert!(out.join(name).is_file(), "{name}");
    }
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = planar_config(1.0, r#","corruption":{"kind":"additive","amplitude":0.01},"seed":5"#);
    assert_eq!(with_config(dir.path(), &text, "project").status.code(), Some(0));
    let out = dir.path().join("out");
    let first: Vec<Vec<u8>> = ["w", "W", "H", "h"].iter().map(|c| fs::read(out.join(c).join("data.bin")).unwrap()).collect();
    assert_eq!(with_config(dir.path(), &text, "project").status.code(), Some(0));
    for (c, bytes) in ["w", "W", "H", "h"].iter().zip(&first) {
        assert_eq!(&fs::read(out.join(c).join("data.bin")).unwrap(), bytes, "{c}");
    }
    // the seed is part of the data
    let cfg = dir.path().join("run.json");
    let o = conetomo(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "6", "project"]);
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(fs::read(out.join("w/data.bin")).unwrap(), first[0]);
}

#[test]
fn corrupted_data_exits_1_and_names_the_check() {
    let dir = tempfile::tempdir().unwrap();
    let text = planar_config(1.0, "");
    assert_eq!(with_config(dir.path(), &text, "project").status.code(), Some(0));
    let out = dir.path().join("out");
    let mut w = read_w(&out.join("w")).unwrap();
    let g = w.grids;
    for (i, a) in g.a_axis().iter().enumerate() {
        for v in &mut w.values[i * g.n_p..(i + 1) * g.n_p] {
            *v *= 1.0 + 0.05 * (3.0 * a).sin();
        }
    }
    write_w(&out.join("w"), &w).unwrap();
    fs::remove_dir_all(out.join("h")).unwrap();
    let o = with_config(dir.path(), &text, "check");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("failed: planar.moment"), "{}", stderr(&o));
    // a looser tolerance scale is honoured
    let cfg = dir.path().join("run.json");
    let o = conetomo(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--tol-scale", "1e9", "check"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn geometry_mismatch_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(with_config(dir.path(), &planar_config(1.0, ""), "project").status.code(), Some(0));
    let convex = r#"{"geometry":"convex","n":2,"k":0,"phantom":[{"center":[0,0],"radius":0.5}]}"#;
    let o = with_config(dir.path(), convex, "check");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("schema"), "{}", stderr(&o));
    fs::write(dir.path().join("out/w/data.bin"), [0u8; 24]).unwrap();
    let o = with_config(dir.path(), &planar_config(1.0, ""), "check");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_demo_writes_a_monotone_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = conetomo(&["--out", dir.path().to_str().unwrap(), "demo", "corruption-sweep"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let eps: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(eps, ["0", "0.01", "0.02", "0.05", "0.1"]);
}
