use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "\
seed = 3
[geometry]
nx_heart = 6
nx_torso = 6
ny = 6
[spectral]
m = 6
levels = [2, 4]
reference = 8
[time]
t1 = 0.1
dt = 0.005
samples = 32
";

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bidomain"));
    cmd.env_remove("BIDOMAIN_CONFIG");
    cmd
}

fn workspace_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let path = dir.path().join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_lists_every_subcommand() {
    let o = bin().arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["eigen", "ivp", "converge", "periodic", "check-conditions", "export-forms"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let o = bin().arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_value_reports_line_and_exits_2() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "[spectral]\nm = 4\nalpha0 = 1.5\n");
    let o = run(&["eigen"], &config, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("run.toml:3") && err.contains("spectral.alpha0"), "{err}");
}

#[test]
fn malformed_toml_exits_2() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "[geometry\nnx_heart = 4\n");
    let o = run(&["eigen"], &config, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn level_above_heart_nodes_is_config_error() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, SMALL);
    let o = run(&["eigen", "--m", "500"], &config, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("spectral.m"), "{}", stderr(&o));
}

#[test]
fn eigen_writes_basis_and_manifest() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, SMALL);
    let out = dir.path().join("eigen");
    let o = run(&["eigen"], &config, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let basis = fs::read_to_string(out.join("eigenbasis.csv")).unwrap();
    let lines: Vec<&str> = basis.lines().collect();
    let lambdas: Vec<f64> = lines[0].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(lambdas.len(), 7);
    assert_eq!(lambdas[0], 0.0);
    assert!(lambdas.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(lines.len() - 1, 7 * 6);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 7));
    let m = manifest(&out);
    assert_eq!(m["subcommand"], "eigen");
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert!(m["versions"]["core"].is_string());
    assert!(m["summary"]["scaled_residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn export_forms_writes_triplets() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, SMALL);
    let out = dir.path().join("forms");
    let o = run(&["export-forms"], &config, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("a_form.csv")).unwrap();
    assert!(text.starts_with("row,col,value\n"));
    let mut sum = 0.0;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert!(f[0].parse::<usize>().unwrap() < 42 && f[1].parse::<usize>().unwrap() < 42);
        sum += f[2].parse::<f64>().unwrap();
    }
    // Constants lie in the kernel of the a-form.
    assert!(sum.abs() < 1e-9, "{sum}");
}

#[test]
fn ivp_is_reproducible_across_policies_and_env_config() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = run(&["ivp"], &config, &a);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = bin()
        .env("BIDOMAIN_CONFIG", &config)
        .args(["ivp", "--sequential", "--out"])
        .arg(&b)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ta = fs::read(a.join("trajectory.csv")).unwrap();
    assert_eq!(ta, fs::read(b.join("trajectory.csv")).unwrap());
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    assert_eq!(ma["summary"], mb["summary"]);
    let text = String::from_utf8(ta).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + 2 * 7);
    assert_eq!((header[0], header[1], header[8]), ("t", "u0", "w0"));
    assert_eq!(text.lines().count(), 1 + 21);
    assert!(ma["summary"]["mild_residual"].as_f64().unwrap() < 1e-3);
}

#[test]
fn manifest_hash_tracks_config() {
    let dir = TempDir::new().unwrap();
    let c1 = write_config(&dir, SMALL);
    let o = run(&["eigen"], &c1, &dir.path().join("h1"));
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["eigen"], &c1, &dir.path().join("h2"));
    assert_eq!(o.status.code(), Some(0));
    let o = bin()
        .args(["eigen", "--m", "5", "--config"])
        .arg(&c1)
        .arg("--out")
        .arg(dir.path().join("h3"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let h = |d: &str| manifest(&dir.path().join(d))["config_hash"].clone();
    assert_ne!(h("h1"), h("h3"));
    assert_eq!(h("h1"), h("h2"));
    for name in ["eigenbasis.csv", "lambdas.csv", "nodes.csv"] {
        assert_eq!(
            fs::read(dir.path().join("h1").join(name)).unwrap(),
            fs::read(dir.path().join("h2").join(name)).unwrap()
        );
    }
}

#[test]
fn converge_report_for_affine_model() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, SMALL);
    let out = dir.path().join("conv");
    let o = run(&["converge", "--model", "linear-test", "--levels", "2,4", "--reference", "8", "--t1", "0.05"], &config, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("report.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "m,n,gap,bound,certified");
    assert_eq!(lines.len(), 3);
    for line in &lines[1..] {
        let f: Vec<&str> = line.split(',').collect();
        let (gap, bound): (f64, f64) = (f[2].parse().unwrap(), f[3].parse().unwrap());
        assert!(gap <= bound, "{line}");
        assert_eq!(f[4], "true");
    }
    assert_eq!(manifest(&out)["summary"]["premise_holds"], true);
}

#[test]
fn converge_without_premise_leaves_bounds_empty() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, SMALL);
    let out = dir.path().join("conv");
    let o = run(&["converge"], &config, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("premise"));
    let text = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(3) == Some("")));
}

#[test]
fn periodic_converges_in_contracting_regime() {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(workspace_config("periodic.toml")).unwrap();
    let config = write_config(&dir, &text.replace("m = 16", "m = 8").replace("= 12", "= 8"));
    let out = dir.path().join("per");
    let o = run(&["periodic", "--tol", "1e-10", "--max-iter", "50"], &config, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "iter,update_norm,ratio,periodic_defect");
    let last: f64 = lines.last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(last <= 1e-10);
    let s = &manifest(&out)["summary"];
    assert_eq!(s["converged"], true);
    assert!(s["mild_residual"].as_f64().unwrap() < 1e-8);
    assert!(s["max_ratio"].as_f64().unwrap() < s["contraction_factor"].as_f64().unwrap());
}

#[test]
fn periodic_failure_exits_1() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, SMALL);
    let out = dir.path().join("per");
    let o = run(&["periodic", "--max-iter", "2"], &config, &out);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["status"], "failed");
    assert_eq!(m["summary"]["converged"], false);
}

#[test]
fn check_conditions_prints_three_values() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, SMALL);
    let out = dir.path().join("cc");
    let o = run(&["check-conditions"], &config, &out);
    let stdout = String::from_utf8_lossy(&o.stdout);
    for name in ["invariance:", "contraction:", "premise:"] {
        assert!(stdout.contains(name), "{stdout}");
    }
    // κ > 1/2 for a_1 = 1, T = 1, so the premise fails.
    assert_eq!(o.status.code(), Some(1));
    let m = manifest(&out);
    assert!((m["summary"]["kappa"].as_f64().unwrap() - 8.909883).abs() < 1e-5);
    assert_eq!(m["summary"]["contraction"]["passes"], true);
    let probe = fs::read_to_string(out.join("lipschitz_probe.csv")).unwrap();
    assert_eq!(probe.lines().count(), 1 + 8);
}

#[test]
fn scope_error_names_module_and_exits_1() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, &format!("{SMALL}[periodic]\nr0 = 1e-9\n[forcing]\namplitude = 1.0\n"));
    let o = run(&["periodic"], &config, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("periodic:"), "{}", stderr(&o));
}
