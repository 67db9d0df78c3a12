use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use orbopt_core::fock::{Sector, SectorBasis};
use orbopt_core::integrals::{hubbard_ring, HubbardSpec};
use orbopt_core::oracle::ground_energy;
use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .canonicalize()
        .unwrap()
}

fn fixture(name: &str) -> String {
    fixtures().join(name).display().to_string()
}

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_orbopt"))
        .arg("--config")
        .arg(&path)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn summary(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("summary.json")).unwrap()).unwrap()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect()
}

fn h2_vmc(steps: usize) -> String {
    format!(
        r#"
command = "vmc"
output = "out"
seed = 3
[system]
fcidump = "{}"
[ansatz]
family = "nn-backflow"
[optimizer]
eta = 0.05
steps = {steps}
window = 0
"#,
        fixture("h2_0.735.fcidump")
    )
}

#[test]
fn exact_hubbard_matches_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
command = "exact"
output = "out"
[system]
hubbard = { sites = 6, t = 1.0, u = 4.0, periodic = true }
n_up = 3
n_down = 3
"#;
    ok(&run(dir.path(), cfg, &[]));
    let s = summary(&dir.path().join("out"));
    let ints = hubbard_ring(&HubbardSpec::new(6, 1.0, 4.0, true).unwrap());
    let e0 = ground_energy(&ints, &SectorBasis::new(Sector::new(6, 3, 3).unwrap()).unwrap()).unwrap();
    assert!((num(&s["exact_energy"]) - e0).abs() < 1e-10);
    assert_eq!(s["dimension"], 400);
    let rows = csv_rows(&dir.path().join("out/ground_state.csv"));
    assert_eq!(rows.len(), 400);
    let provenance = &s["provenance"];
    assert_eq!(provenance["config_sha256"].as_str().unwrap().len(), 64);
    assert!(provenance["code_version"].as_str().unwrap().starts_with("orbopt "));
}

#[test]
fn malformed_config_names_the_key_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (h2_vmc(5).replace("eta = 0.05", "etta = 0.05"), "optimizer.etta"),
        (h2_vmc(5).replace("steps = 5", "steps = -5"), "optimizer.steps"),
        (h2_vmc(5).replace("nn-backflow", "transformer"), "ansatz.family"),
        (h2_vmc(5).replace("h2_0.735", "missing"), "system.fcidump"),
        (h2_vmc(5).replace("command = \"vmc\"", "command = \"fit\""), "command"),
    ];
    for (cfg, key) in cases {
        let out = run(dir.path(), &cfg, &[]);
        assert_eq!(out.status.code(), Some(2), "{key}");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains(key), "{key} not in {stderr}");
        assert!(!dir.path().join("out").exists(), "{key} left outputs");
    }
}

#[test]
fn vmc_on_h2_reaches_the_exact_energy_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = h2_vmc(150);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&run(dir.path(), &cfg, &["--output", a.to_str().unwrap()]));
    ok(&run(dir.path(), &cfg, &["--output", b.to_str().unwrap(), "--threads", "2"]));
    for name in ["summary.json", "trajectory.csv", "orbitals.csv", "checkpoint.toml"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between reruns");
    }
    let s = summary(&a);
    assert!(num(&s["error"]).abs() < 1e-6, "error {}", s["error"]);
    assert_eq!(csv_rows(&a.join("trajectory.csv")).len(), 150);
    assert_eq!(csv_rows(&a.join("orbitals.csv")).len(), 4);
}

#[test]
fn empty_trajectory_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), &h2_vmc(0), &[]));
    let text = std::fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    assert_eq!(
        text,
        "step,energy,energy_error,variance,force_theta_norm,force_kappa_norm,acceptance,eta\n"
    );
}

#[test]
fn resume_continues_from_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), &h2_vmc(40), &[]));
    let first = num(&summary(&dir.path().join("out"))["final_energy"]);
    let cfg = h2_vmc(40).replace("window = 0", "window = 0\nresume = \"out/checkpoint.toml\"");
    ok(&run(dir.path(), &cfg, &["--output", dir.path().join("next").to_str().unwrap()]));
    let s = summary(&dir.path().join("next"));
    assert!(num(&s["final_energy"]) <= first + 1e-12);
    assert_eq!(s["provenance"]["inputs"].as_object().unwrap().len(), 2);
}

#[test]
fn restart_study_has_one_row_per_init_and_threads_do_not_change_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"
command = "restart-study"
output = "one"
[system]
fcidump = "{}"
[optimizer]
rule = "lbfgs"
eta = 0.1
steps = 60
window = 0
[vqe]
layers = 1
n_inits = 3
thresholds = [1e-3, 1e-2]
"#,
        fixture("h2_0.735.fcidump")
    );
    ok(&run(dir.path(), &cfg, &[]));
    ok(&run(dir.path(), &cfg, &["--threads", "3", "--output", dir.path().join("three").to_str().unwrap()]));
    let one = dir.path().join("one");
    assert_eq!(csv_rows(&one.join("restarts.csv")).len(), 3);
    assert_eq!(csv_rows(&one.join("cumulative.csv")).len(), 2);
    for name in ["summary.json", "restarts.csv", "cumulative.csv"] {
        assert_eq!(
            std::fs::read(one.join(name)).unwrap(),
            std::fs::read(dir.path().join("three").join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn vqe_reports_the_best_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"
command = "vqe"
output = "out"
[system]
fcidump = "{}"
[optimizer]
rule = "lbfgs"
eta = 0.1
steps = 200
window = 0
[vqe]
layers = 2
restarts = 2
"#,
        fixture("h2_0.735.fcidump")
    );
    ok(&run(dir.path(), &cfg, &[]));
    let out = dir.path().join("out");
    let s = summary(&out);
    assert!(num(&s["error"]) < 1e-6, "error {}", s["error"]);
    let rows = csv_rows(&out.join("restarts.csv"));
    assert_eq!(rows.len(), 2);
    let best: f64 = rows
        .iter()
        .map(|r| r[2].parse::<f64>().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(best, num(&s["final_energy"]));
    let text = std::fs::read_to_string(out.join("checkpoint.toml")).unwrap();
    assert!(text.starts_with("kind = \"vqe\""));
}

#[test]
fn rotate_preserves_the_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"
command = "rotate"
output = "out"
seed = 11
[system]
fcidump = "{}"
[rotate]
scale = 1.0
"#,
        fixture("h4_g025.fcidump")
    );
    ok(&run(dir.path(), &cfg, &[]));
    let out = dir.path().join("out");
    let s = summary(&out);
    assert!(num(&s["energy_difference"]).abs() < 1e-9);
    let dump = orbopt::fcidump::read(&out.join("rotated.fcidump")).unwrap();
    let e = ground_energy(
        &dump.integrals,
        &SectorBasis::new(dump.header.sector().unwrap()).unwrap(),
    )
    .unwrap();
    assert!((e - num(&s["exact_energy"])).abs() < 1e-9);
}

#[test]
fn exact_scan_has_one_row_per_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let files: Vec<String> = ["h4_g080", "h4_g090", "h4_g100"]
        .iter()
        .map(|n| format!("\"{}\"", fixture(&format!("{n}.fcidump"))))
        .collect();
    let cfg = format!(
        "command = \"scan\"\noutput = \"out\"\n[system]\nscan = [{}]\n[scan]\nmethod = \"exact\"\n",
        files.join(", ")
    );
    ok(&run(dir.path(), &cfg, &["--threads", "2"]));
    let out = dir.path().join("out");
    let rows = csv_rows(&out.join("scan.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(&rows[1][0], "h4_g090");
    assert_eq!(summary(&out)["maximum_at"], "h4_g090");
}

#[test]
fn diagnostics_report_chains_and_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"
command = "diagnostics"
output = "out"
[system]
fcidump = "{}"
[ansatz]
family = "rbm"
[optimizer]
steps = 0
[sampler]
n_sweeps = 400
n_chains = 2
"#,
        fixture("h4_g025.fcidump")
    );
    ok(&run(dir.path(), &cfg, &[]));
    let out = dir.path().join("out");
    assert_eq!(csv_rows(&out.join("chains.csv")).len(), 2);
    assert_eq!(csv_rows(&out.join("distribution.csv")).len(), 36);
    assert_eq!(csv_rows(&out.join("samples.csv")).len(), 2 * 360);
    let s = summary(&out);
    assert!(num(&s["sampled_energy_error"]) > 0.0);
    assert!(num(&s["chi_square_dof"]) >= 1.0);
}

#[test]
fn capacity_and_convergence_have_their_own_codes() {
    let dir = tempfile::tempdir().unwrap();
    let big = r#"
command = "exact"
output = "out"
[system]
hubbard = { sites = 16, u = 4.0 }
n_up = 8
n_down = 8
"#;
    let out = run(dir.path(), big, &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!dir.path().join("out").exists());

    let cfg = h2_vmc(2).replace("window = 0", "window = 50\nrequire_convergence = true");
    let out = run(dir.path(), &cfg, &[]);
    assert_eq!(out.status.code(), Some(4));
    assert!(dir.path().join("out/summary.json").exists());
}
