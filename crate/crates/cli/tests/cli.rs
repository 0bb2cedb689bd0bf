use std::path::Path;
use std::process::{Command, Output};

fn rglasso(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rglasso"));
    cmd.args(args);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.arg("--out").arg(out).output().unwrap()
}

fn config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn solve_recovers_the_paper_precision() {
    let tmp = tempfile::tempdir().unwrap();
    let c = config(tmp.path(), "task = \"solve\"\n[model]\npreset = \"paper-toeplitz\"\n[penalty]\nlambda = 0.0\n");
    let out = rglasso(&["solve"], Some(&c), tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("solve.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("row,col,omega,in_support"));
    let omega: Vec<f64> = lines.map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    let want = [4.0 / 3.0, -2.0 / 3.0, 0.0, -2.0 / 3.0, 5.0 / 3.0, -2.0 / 3.0, 0.0, -2.0 / 3.0, 4.0 / 3.0];
    for (g, w) in omega.iter().zip(want) {
        assert!((g - w).abs() < 1e-12);
    }
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("solve.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["psd_repair_norm"], "frobenius");
    assert_eq!(manifest["csv_schema_version"], 1);
    assert!(manifest["config"].as_str().unwrap().contains("paper-toeplitz"));
}

#[test]
fn classical_if_surface_has_the_figure_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let c = config(
        tmp.path(),
        "[model]\npreset = \"paper-toeplitz\"\n[penalty]\nlambda = 8e-4\n[grid]\naxes = [1, 2]\nmin = -6.0\nmax = 6.0\nstep = 0.25\n",
    );
    let out = rglasso(&["if-surface", "--threads", "1"], Some(&c), tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("if-surface.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("z1,z2,z3,norm,plugin_norm,stable,if_1_1"));
    assert_eq!(csv.lines().count(), 2402);
    // the (1,3) entry is off the support everywhere
    let col = header.split(',').position(|h| h == "if_1_3").unwrap();
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(col).unwrap().parse::<f64>().unwrap() == 0.0));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let c = config(tmp.path(), "[model]\npreset = \"paper-toeplitz\"\n[penalty]\n");
    let out = rglasso(&["solve"], Some(&c), tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda"));

    let c = config(tmp.path(), "[model]\npreset = \"paper-toeplitz\"\n[penalty]\nlambda = 0.0\n[asv]\nquadrature = \"gauss-hermite\"\norder = 200\n");
    let out = rglasso(&["asv"], Some(&c), tmp.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));

    // a constant column gives a singular covariance at zero penalty
    let c = config(tmp.path(), "data = \"x.csv\"\n[model]\np = 2\nsigma = [1.0, 0.0, 0.0, 1.0]\n[penalty]\nlambda = 0.0\n");
    std::fs::write(tmp.path().join("x.csv"), "a,b\n1,2\n2,2\n3,2\n4,2\n5,2\n").unwrap();
    let out = rglasso(&["solve"], Some(&c), tmp.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn dry_run_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let c = config(tmp.path(), "[model]\npreset = \"paper-toeplitz\"\n[penalty]\nlambda = 8e-4\n[grid]\npoints = [[3.0, -3.0, 0.0]]\n");
    let out_dir = tmp.path().join("out");
    let out = rglasso(&["sc-surface", "--dry-run", "--seed", "4"], Some(&c), &out_dir);
    assert!(out.status.success());
    let plan: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(plan["work"]["replications"], 50);
    assert!(plan["config"].as_str().unwrap().contains("seed = 4"));
    assert!(!out_dir.exists());
}

#[test]
fn seed_changes_monte_carlo_output_only_through_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "[model]\npreset = \"paper-toeplitz\"\n[penalty]\nlambda = 8e-4\n[plugin]\nkind = \"kendall\"\n[sc]\nn = 100\nreplications = 4\n[grid]\npoints = [[3.0, -3.0, 0.0]]\n";
    let c = config(tmp.path(), body);
    let read = |d: &str| std::fs::read(tmp.path().join(d).join("sc-surface.csv")).unwrap();
    assert!(rglasso(&["sc-surface", "--seed", "1"], Some(&c), &tmp.path().join("a")).status.success());
    assert!(rglasso(&["sc-surface", "--seed", "1", "--threads", "2"], Some(&c), &tmp.path().join("b")).status.success());
    assert!(rglasso(&["sc-surface", "--seed", "2"], Some(&c), &tmp.path().join("c")).status.success());
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}
