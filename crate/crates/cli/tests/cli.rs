//! End-to-end tests of the `mrfsig` binary: formats, exit codes, round
//! trips, and seeded determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mrfsig"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Two-group synthetic peak file: one strong discriminating site per side
/// plus shared noise sites, shaped like a small acquisition run.
fn write_peaks(path: &Path, n_plus: usize, n_minus: usize, seed: u64) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let noise_mz: Vec<f64> = (0..30).map(|k| 900.0 + 41.0 * k as f64).collect();
    let mut lines = String::new();
    for (group, n, strong, weak) in [("CAS", n_plus, 1200.0, 2500.0), ("CTL", n_minus, 2500.0, 1200.0)]
    {
        for i in 0..n {
            let mut peaks: Vec<f64> = Vec::new();
            if rng.random::<f64>() < 0.8 {
                peaks.push(strong * (1.0 + rng.random_range(-0.002..0.002)));
            }
            if rng.random::<f64>() < 0.3 {
                peaks.push(weak * (1.0 + rng.random_range(-0.002..0.002)));
            }
            for &mz in &noise_mz {
                if rng.random::<f64>() < 0.5 {
                    peaks.push(mz * (1.0 + rng.random_range(-0.002..0.002)));
                }
            }
            peaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let peaks_json: Vec<String> = peaks.iter().map(|p| format!("{p}")).collect();
            lines.push_str(&format!(
                "{{\"id\":\"{group}{i}\",\"group\":\"{group}\",\"peaks\":[{}]}}\n",
                peaks_json.join(",")
            ));
        }
    }
    std::fs::write(path, lines).unwrap();
}

struct Workspace {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        Workspace { _tmp: tmp, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }
}

#[test]
fn binarize_empty_input_writes_header_only_csv() {
    let ws = Workspace::new();
    std::fs::write(ws.path("empty.jsonl"), "").unwrap();
    let out = run(&["binarize", &ws.arg("empty.jsonl"), "--out", &ws.arg("out")]);
    assert_exit(&out, 0);
    let csv = std::fs::read_to_string(ws.path("out/matrix.csv")).unwrap();
    assert_eq!(csv, "id,group\n");
}

#[test]
fn binarize_wide_mass_range_yields_842_columns() {
    // peaks spanning [800, ~9930] at rho = 0.003 need exactly 842 sites
    let ws = Workspace::new();
    let mut lines = String::from("{\"id\":\"a\",\"group\":\"G\",\"peaks\":[800.0, 1302.4, 4000.2]}\n");
    lines.push_str("{\"id\":\"b\",\"group\":\"G\",\"peaks\":[930.0, 9930.0]}\n");
    std::fs::write(ws.path("p.jsonl"), lines).unwrap();
    let out = run(&[
        "binarize",
        &ws.arg("p.jsonl"),
        "--rho",
        "0.003",
        "--b1",
        "800",
        "--out",
        &ws.arg("out"),
    ]);
    assert_exit(&out, 0);
    let csv = std::fs::read_to_string(ws.path("out/matrix.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 2 + 842);
}

#[test]
fn binarize_round_trips_bit_exactly() {
    let ws = Workspace::new();
    write_peaks(&ws.path("p.jsonl"), 10, 8, 3);
    let out = run(&["binarize", &ws.arg("p.jsonl"), "--out", &ws.arg("out")]);
    assert_exit(&out, 0);
    let first = std::fs::read(ws.path("out/matrix.csv")).unwrap();
    // read back and rewrite through the library
    let matrix = mrfsig::io::PeakMatrix::read_csv(first.as_slice()).unwrap();
    let mut again = Vec::new();
    matrix.write_csv(&mut again).unwrap();
    assert_eq!(first, again);
}

#[test]
fn binarize_rejects_malformed_peaks() {
    let ws = Workspace::new();
    std::fs::write(ws.path("bad.jsonl"), "{\"id\":\"x\"}\n").unwrap();
    let out = run(&["binarize", &ws.arg("bad.jsonl"), "--out", &ws.arg("out")]);
    assert_exit(&out, 2);
    assert!(!ws.path("out/matrix.csv").exists());
}

fn discover_workspace() -> Workspace {
    let ws = Workspace::new();
    write_peaks(&ws.path("p.jsonl"), 45, 40, 11);
    let out = run(&["binarize", &ws.arg("p.jsonl"), "--out", &ws.arg("bin")]);
    assert_exit(&out, 0);
    ws
}

#[test]
fn discover_classify_fitcheck_chain() {
    let ws = discover_workspace();
    let out = run(&[
        "discover",
        &ws.arg("bin/matrix.csv"),
        "CAS",
        "CTL",
        "--H",
        "2",
        "--seed",
        "7",
        "--replicas",
        "60",
        "--kl-scan",
        "--out",
        &ws.arg("disc"),
    ]);
    assert_exit(&out, 0);
    for name in [
        "signature.json",
        "separator.json",
        "performance.json",
        "model_plus.json",
        "model_minus.json",
        "fit_quality_plus.json",
        "fit_quality_minus.json",
        "fit_quality_plus_histogram.csv",
        "grid_stage1.csv",
        "grid_loo.csv",
        "kl_scan.csv",
    ] {
        assert!(ws.path("disc").join(name).exists(), "missing {name}");
    }
    let sig: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("disc/signature.json")).unwrap())
            .unwrap();
    assert_eq!(sig["group_plus"], "CAS");
    assert!(sig["perf"]["perf"].as_f64().unwrap() > 0.6);
    assert_eq!(sig["perf"]["method"], "leave-one-out");
    // the strong planted site (m/z ~1200) should carry a positive score
    let found = sig["biomarkers"]
        .as_array()
        .unwrap()
        .iter()
        .any(|b| (b["mz"].as_f64().unwrap() - 1200.0).abs() < 10.0);
    assert!(found, "planted + biomarker missing: {sig}");

    // classify the training peaks: labels must match the signature decision
    let out = run(&[
        "classify",
        &ws.arg("disc/signature.json"),
        &ws.arg("p.jsonl"),
        "--out",
        &ws.arg("cls"),
    ]);
    assert_exit(&out, 0);
    let table = std::fs::read_to_string(ws.path("cls/classified.csv")).unwrap();
    let mut rows = 0;
    for line in table.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let tsco: f64 = fields[1].parse().unwrap();
        let label = fields[2];
        assert_eq!(label == "CAS", tsco > 0.0);
        rows += 1;
    }
    assert_eq!(rows, 85);

    // fit quality from the signature's minus side
    let out = run(&[
        "fitcheck",
        &ws.arg("bin/matrix.csv"),
        "CTL",
        "--signature",
        &ws.arg("disc/signature.json"),
        "--side",
        "minus",
        "--replicas",
        "50",
        "--seed",
        "3",
        "--out",
        &ws.arg("fit"),
    ]);
    assert_exit(&out, 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("fit/fit_quality.json")).unwrap())
            .unwrap();
    let q = report["quantile_q"].as_f64().unwrap();
    assert!(q > 0.0 && q <= 1.0);
    let hist = std::fs::read_to_string(ws.path("fit/fit_histogram.csv")).unwrap();
    assert!(hist.starts_with("# ll_observed="));
}

#[test]
fn discover_with_pinned_dim_skips_the_grid() {
    let ws = discover_workspace();
    let out = run(&[
        "discover",
        &ws.arg("bin/matrix.csv"),
        "CAS",
        "CTL",
        "--dim",
        "1,0,1,0",
        "--no-loo",
        "--replicas",
        "40",
        "--seed",
        "5",
        "--out",
        &ws.arg("disc"),
    ]);
    assert_exit(&out, 0);
    assert!(!ws.path("disc/grid_stage1.csv").exists());
    let sig: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("disc/signature.json")).unwrap())
            .unwrap();
    assert_eq!(sig["dim"], serde_json::json!([1, 0, 1, 0]));
    assert_eq!(sig["perf"]["method"], "training");
}

#[test]
fn discover_is_byte_identical_under_a_fixed_seed() {
    let ws = discover_workspace();
    for dir in ["run1", "run2"] {
        let out = run(&[
            "discover",
            &ws.arg("bin/matrix.csv"),
            "CAS",
            "CTL",
            "--H",
            "2",
            "--seed",
            "99",
            "--replicas",
            "30",
            "--out",
            &ws.arg(dir),
        ]);
        assert_exit(&out, 0);
    }
    for name in [
        "signature.json",
        "separator.json",
        "performance.json",
        "model_plus.json",
        "model_minus.json",
        "fit_quality_plus.json",
        "grid_stage1.csv",
        "grid_loo.csv",
    ] {
        let a = std::fs::read(ws.path("run1").join(name)).unwrap();
        let b = std::fs::read(ws.path("run2").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn discover_unknown_label_exits_2() {
    let ws = discover_workspace();
    let out = run(&[
        "discover",
        &ws.arg("bin/matrix.csv"),
        "CAS",
        "NOPE",
        "--out",
        &ws.arg("disc"),
    ]);
    assert_exit(&out, 2);
}

#[test]
fn classify_empty_spectrum_scores_the_intercept() {
    let ws = discover_workspace();
    let out = run(&[
        "discover",
        &ws.arg("bin/matrix.csv"),
        "CAS",
        "CTL",
        "--dim",
        "1,0,1,0",
        "--no-loo",
        "--replicas",
        "20",
        "--out",
        &ws.arg("disc"),
    ]);
    assert_exit(&out, 0);
    std::fs::write(
        ws.path("empty.jsonl"),
        "{\"id\":\"nothing\",\"group\":\"?\",\"peaks\":[]}\n",
    )
    .unwrap();
    let out = run(&[
        "classify",
        &ws.arg("disc/signature.json"),
        &ws.arg("empty.jsonl"),
        "--out",
        &ws.arg("cls"),
    ]);
    assert_exit(&out, 0);
    let sig: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("disc/signature.json")).unwrap())
            .unwrap();
    let table = std::fs::read_to_string(ws.path("cls/classified.csv")).unwrap();
    let row = table.lines().nth(1).unwrap();
    let tsco: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((tsco - sig["intercept"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn classify_malformed_signature_exits_2() {
    let ws = Workspace::new();
    std::fs::write(ws.path("sig.json"), "{not json").unwrap();
    std::fs::write(ws.path("p.jsonl"), "").unwrap();
    let out = run(&[
        "classify",
        &ws.arg("sig.json"),
        &ws.arg("p.jsonl"),
        "--out",
        &ws.arg("cls"),
    ]);
    assert_exit(&out, 2);
}

#[test]
fn config_file_flags_and_overrides() {
    let ws = discover_workspace();
    std::fs::write(ws.path("cfg.toml"), "thr = 0.25\nseed = 4\n[mple]\nmax_iter = 150\n").unwrap();
    let out = run(&[
        "discover",
        &ws.arg("bin/matrix.csv"),
        "CAS",
        "CTL",
        "--config",
        &ws.arg("cfg.toml"),
        "--H",
        "2",
        "--no-loo",
        "--replicas",
        "20",
        "--out",
        &ws.arg("disc"),
    ]);
    assert_exit(&out, 0);
    // invalid config key is a usage error
    std::fs::write(ws.path("bad.toml"), "bogus_key = 1\n").unwrap();
    let out = run(&[
        "discover",
        &ws.arg("bin/matrix.csv"),
        "CAS",
        "CTL",
        "--config",
        &ws.arg("bad.toml"),
        "--out",
        &ws.arg("disc2"),
    ]);
    assert_exit(&out, 2);
}
