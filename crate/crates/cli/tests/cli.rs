//! End-to-end checks of the qpfk binary: determinism, output schemas, and
//! machine-readable errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_qpfk")
}

fn bundled_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.conf")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qpfk-test-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn parse_f64(v: &serde_json::Value) -> f64 {
    v.as_str().unwrap().parse().unwrap()
}

#[test]
fn lindstedt_is_deterministic() {
    let root = scratch("determinism");
    let out1 = root.join("a");
    let out2 = root.join("b");
    let s1 = run(&bundled_config(), &out1, &["lindstedt"]);
    assert!(
        s1.status.success(),
        "{}",
        String::from_utf8_lossy(&s1.stderr)
    );
    let s2 = run(&bundled_config(), &out2, &["lindstedt"]);
    assert!(s2.status.success());

    let a = fs::read(out1.join("lindstedt.json")).unwrap();
    let b = fs::read(out2.join("lindstedt.json")).unwrap();
    assert_eq!(a, b, "solution files must be byte-identical");

    // manifests agree except for the timestamp
    let mut ma: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out1.join("manifest.json")).unwrap()).unwrap();
    let mut mb: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out2.join("manifest.json")).unwrap()).unwrap();
    ma.as_object_mut().unwrap().remove("created_unix");
    mb.as_object_mut().unwrap().remove("created_unix");
    assert_eq!(ma, mb);

    let _ = fs::remove_dir_all(&root);
}

#[test]
fn lindstedt_roundtrips_through_the_library() {
    let root = scratch("roundtrip");
    let status = run(&bundled_config(), &root, &["--order", "2", "lindstedt"]);
    assert!(status.status.success());
    let text = fs::read_to_string(root.join("lindstedt.json")).unwrap();
    let sol = qpfk::LindstedtSolution::from_json_str(&text).unwrap();
    assert_eq!(sol.order(), 2);
    assert_eq!(sol.to_json_string(), text);
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn auxiliary_reports_the_two_zeros() {
    let root = scratch("auxiliary");
    let status = run(&bundled_config(), &root, &["auxiliary"]);
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("auxiliary.json")).unwrap()).unwrap();
    let zeros = doc["zeros"].as_array().unwrap();
    assert_eq!(zeros.len(), 2);
    assert!(parse_f64(&zeros[0]["eta"]).abs() < 1e-10);
    assert!((parse_f64(&zeros[1]["eta"]) - 0.5).abs() < 1e-10);
    assert!(parse_f64(&zeros[0]["slope"]) > 0.0);
    assert!(parse_f64(&zeros[1]["slope"]) < 0.0);
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn simulate_free_rotation_has_tiny_exponents() {
    let root = scratch("simulate");
    let config = root.join("run.conf");
    fs::write(
        &config,
        "alpha = 1.0 1.4142135623730951\n\
         k = 1 1\n\
         m = 1\n\
         mode = 1 0 0.05 0.0\n\
         mode = 1 1 0.05 0.0\n\
         eps = 0.0\n\
         n_steps = 20000\n\
         record_every = 5000\n",
    )
    .unwrap();
    let status = run(&config, &root, &["--seed", "7", "simulate"]);
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );

    let lyap = fs::read_to_string(root.join("lyapunov.csv")).unwrap();
    let mut lines = lyap.lines();
    assert_eq!(lines.next().unwrap(), "index,exponent");
    let mut count = 0;
    for line in lines {
        let chi: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        // finite-time estimates of the integrable shear decay like ln(n)/n
        assert!(chi.abs() < 1e-3, "exponent {chi}");
        count += 1;
    }
    assert_eq!(count, 3);

    let orbit = fs::read_to_string(root.join("orbit.csv")).unwrap();
    assert_eq!(orbit.lines().count(), 1 + 20000 / 5000);

    // deterministic under the same seed
    let again = scratch("simulate-again");
    let status = run(&config, &again, &["--seed", "7", "simulate"]);
    assert!(status.status.success());
    assert_eq!(
        fs::read(root.join("orbit.csv")).unwrap(),
        fs::read(again.join("orbit.csv")).unwrap()
    );
    let _ = fs::remove_dir_all(&root);
    let _ = fs::remove_dir_all(&again);
}

#[test]
fn resonance_output_matches_the_reduction() {
    let root = scratch("resonance");
    let status = run(&bundled_config(), &root, &["resonance"]);
    assert!(status.status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("resonance.json")).unwrap()).unwrap();
    assert_eq!(doc["b"], serde_json::json!([[1, 0], [1, 1]]));
    assert_eq!(doc["l"], serde_json::json!([0, 1]));
    let omega = parse_f64(&doc["omega"]);
    assert!((omega - (std::f64::consts::SQRT_2 - 1.0)).abs() < 1e-14);
    assert!(!doc["subexponential"].as_array().unwrap().is_empty());
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn verify_reports_the_expected_slope() {
    let root = scratch("verify");
    let status = run(&bundled_config(), &root, &["--order", "1", "verify"]);
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let csv = fs::read_to_string(root.join("verify.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert!(row.split(',').nth(1).unwrap() == "true");
    }
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("verify.json")).unwrap()).unwrap();
    let slope = parse_f64(&doc["v_slope"]);
    assert!((slope - 2.0).abs() < 0.3, "slope {slope}");
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn phonon_emits_decreasing_gaps() {
    let root = scratch("phonon");
    let status = run(&bundled_config(), &root, &["--eps", "0.05", "phonon"]);
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let csv = fs::read_to_string(root.join("phonon.csv")).unwrap();
    let gaps: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(gaps.len(), 4);
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn errors_are_machine_readable() {
    let root = scratch("errors");
    let config = root.join("bad.conf");
    fs::write(
        &config,
        "alpha = 1.0 0.5\nk = 1 1\nm = 1\nmode = 1 0 1.0 0.0\n",
    )
    .unwrap();
    let out = run(&config, &root, &["lindstedt"]);
    assert!(!out.status.success());
    let err: serde_json::Value =
        serde_json::from_slice(&out.stderr).expect("stderr is a JSON document");
    assert_eq!(err["error"]["module"], "resonance");
    assert!(err["error"]["message"]
        .as_str()
        .unwrap()
        .contains("resonant"));

    // unknown keys are rejected too
    fs::write(&config, "alpha = 1.0 1.4142135623730951\nfrobnicate = 1\n").unwrap();
    let out = run(&config, &root, &["lindstedt"]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["module"], "config");
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn potential_file_records_are_accepted() {
    let root = scratch("potfile");
    let pot = root.join("modes.txt");
    fs::write(
        &pot,
        "# k1 k2 amplitude phase\n1 0 0.05 0.0\n1 1 0.05 0.0\n",
    )
    .unwrap();
    let config = root.join("run.conf");
    fs::write(
        &config,
        "alpha = 1.0 1.4142135623730951\nk = 1 1\nm = 1\npotential_file = modes.txt\norder = 1\n",
    )
    .unwrap();
    let status = run(&config, &root, &["lindstedt"]);
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    // same series as the inline bundled model at order 1
    let inline = scratch("potfile-inline");
    let status2 = run(&bundled_config(), &inline, &["--order", "1", "lindstedt"]);
    assert!(status2.status.success());
    let a = fs::read_to_string(root.join("lindstedt.json")).unwrap();
    let b = fs::read_to_string(inline.join("lindstedt.json")).unwrap();
    let sa = qpfk::LindstedtSolution::from_json_str(&a).unwrap();
    let sb = qpfk::LindstedtSolution::from_json_str(&b).unwrap();
    for (k, c) in sa.v_jet.term(1).iter() {
        assert!((sb.v_jet.term(1).coeff(k) - c).norm() < 1e-15);
    }
    let _ = fs::remove_dir_all(&root);
    let _ = fs::remove_dir_all(&inline);
}
