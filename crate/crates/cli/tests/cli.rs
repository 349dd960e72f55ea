use std::path::Path;
use std::process::Command as Proc;

use qtm_cli::{run, Command, Log, RunConfig};
use serde_json::Value;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_qtm-nlie")
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn lines(text: &str) -> Vec<Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

const BASE: &str = r#"
[model]
j = 1.0
zeta = 1.3
h = 2.0
t = 0.1
"#;

#[test]
fn dressed_reports_fermi_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BASE);
    let out = dir.path().join("dressed.json");
    let st = Proc::new(bin()).args(["dressed", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let recs = lines(&std::fs::read_to_string(&out).unwrap());
    assert_eq!(recs.len(), 1);
    for k in ["q", "vF", "tau", "det_segment"] {
        assert!(recs[0][k].is_f64(), "missing {k}");
    }
    assert!(dir.path().join("dressed.json.log").exists());
}

#[test]
fn out_of_regime_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &BASE.replace("zeta = 1.3", "zeta = 2.0"));
    let st = Proc::new(bin()).args(["dressed", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[model]\nj = \"one\"\n");
    let st = Proc::new(bin()).args(["dressed", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn solver_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{BASE}\n[numerics]\nmax_iter = 1\ntol = 1e-15\n"));
    let st = Proc::new(bin()).args(["solve-nlie", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(3));
}

#[test]
fn cft_check_upsilon_column() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{BASE}\n[sweep]\ntemperatures = [0.05, 0.025]\n\n[[excitations]]\ns = 0\np_r = [0]\nh_r = [0]\n");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("cft.csv");
    let st = Proc::new(bin())
        .args(["cft-check", "--format", "csv", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "upsilon_plus").unwrap();
    let rows: Vec<_> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert_eq!(r[col].parse::<f64>().unwrap(), 1.0);
    }
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BASE);
    let mut outs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}.json"));
        let st = Proc::new(bin()).args(["solve-nlie", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
        assert_eq!(st.code(), Some(0));
        outs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn overrides_take_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BASE);
    let out = Proc::new(bin())
        .args(["solve-nlie", "--print-config", "--temperature", "0.05", "--quad-order", "32", "--tol", "1e-9", "--trotter-n", "64"])
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    let c = RunConfig::parse(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(c.model.t, 0.05);
    assert_eq!(c.model.trotter_n, Some(64));
    assert_eq!(c.numerics.quad_order, 32);
    assert_eq!(c.numerics.tol, 1e-9);
    assert_eq!(c.command, Some(Command::SolveNlie));
}

#[test]
fn sweep_is_concatenation_of_points() {
    let mut cfg = RunConfig::parse(&format!("{BASE}\n[sweep]\ntemperatures = [0.1, 0.05]\n")).unwrap();
    cfg.command = Some(Command::Sweep);
    let swept = run(&cfg, &Log::discard()).unwrap();
    let mut single = String::new();
    for t in [0.1, 0.05] {
        let mut c = RunConfig::parse(BASE).unwrap();
        c.command = Some(Command::SolveNlie);
        c.model.t = t;
        single.push_str(&run(&c, &Log::discard()).unwrap());
    }
    assert_eq!(swept, single);
}

#[test]
fn bethe_check_certificate() {
    let cfg = RunConfig::parse(&BASE.replace("t = 0.1", "t = 0.5\ntrotter_n = 16")).unwrap();
    let mut cfg = cfg;
    cfg.command = Some(Command::BetheCheck);
    let recs = lines(&run(&cfg, &Log::discard()).unwrap());
    assert_eq!(recs[0]["n_roots"], 16);
    assert!(recs[0]["max_bae_residual"].as_f64().unwrap() < 1e-7);
    assert!(recs[0]["gaudin"]["factorisation_residual"].as_f64().unwrap() < 1e-5);
}

#[test]
fn contour_csv_schema() {
    let mut cfg = RunConfig::parse(BASE).unwrap();
    cfg.command = Some(Command::Contour);
    cfg.output.format = qtm_cli::Format::Csv;
    let text = run(&cfg, &Log::discard()).unwrap();
    assert!(text.starts_with("curve_id,idx,re,im\n"));
    for id in ["fermi_R", "fermi_L", "reference", "nlie:s0"] {
        assert!(text.lines().any(|l| l.starts_with(id)), "{id}");
    }
}
