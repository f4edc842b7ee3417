use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn dkernel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dkernel"))
        .args(args)
        .env("DEFORMATION_KERNEL_THREADS", "2")
        .output()
        .expect("run dkernel")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    assert_eq!(text.trim_end().lines().count(), 1, "stderr must be one line: {text}");
    serde_json::from_str(text.trim_end()).expect("stderr is JSON")
}

fn write(dir: &TempDir, name: &str, contents: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, contents).unwrap();
    path.to_str().unwrap().to_string()
}

fn unit_atom(dir: &TempDir) -> String {
    write(dir, "atom.json", r#"{"kind":"discrete","atoms":[{"weight":[1.0,0.0],"xi":[[1.0,0.0]]}]}"#)
}

fn gaussian(dir: &TempDir) -> String {
    write(dir, "gauss.json", r#"{"kind":"gaussian","gamma":1.0,"nu":1}"#)
}

#[test]
fn exact_free_kernel() {
    let out = dkernel(&["kernel", "--exact", "free", "--nu", "1", "--t", "1,0", "--x", "0", "--y", "0"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["schema"], 1);
    let re = v["value"][0].as_f64().unwrap();
    assert!((re - 0.2820947918).abs() < 1e-10, "{re}");
    assert_eq!(v["value"][1].as_f64().unwrap(), 0.0);
}

#[test]
fn exact_harmonic_kernel_csv() {
    let out = dkernel(&[
        "kernel", "--exact", "harm", "--lambda", "-1", "--t", "0.5,0", "--x", "0.3", "--y", "-0.2", "--format", "csv",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("re,im"));
    let re: f64 = lines.next().unwrap().split(',').next().unwrap().parse().unwrap();
    // Mehler kernel of ∂² − x² at t = 1/2
    let (s, c) = (1f64.sinh(), 1f64.cosh());
    let (x, y) = (0.3f64, -0.2f64);
    let expected = (2.0 * std::f64::consts::PI * s).powf(-0.5) * (-((x * x + y * y) * c - 2.0 * x * y) / (2.0 * s)).exp();
    assert!((re - expected).abs() < 1e-12, "{re} vs {expected}");
}

#[test]
fn gaussian_domain_is_slit_plane() {
    let dir = TempDir::new().unwrap();
    let out = dkernel(&["domains", "--potential", &gaussian(&dir)]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["validity_half_angle"], "< π (Case 2)");
}

#[test]
fn discrete_domain_membership() {
    let dir = TempDir::new().unwrap();
    let p = unit_atom(&dir);
    let inside = stdout_json(&dkernel(&["domains", "--potential", &p, "--t", "1,pi/2"]));
    assert_eq!(inside["validity_half_angle"], "π/2 (Case 1)");
    assert_eq!(inside["contains"], true);
    let outside = stdout_json(&dkernel(&["domains", "--potential", &p, "--t", "1,3pi/4"]));
    assert_eq!(outside["contains"], false);
}

#[test]
fn series_then_borel() {
    let dir = TempDir::new().unwrap();
    let p = unit_atom(&dir);
    let series_path = dir.path().join("series.json");
    let out = dkernel(&[
        "series", "--potential", &p, "--x", "0", "--y", "0", "--order", "12", "--out", series_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let series: Value = serde_json::from_str(&std::fs::read_to_string(&series_path).unwrap()).unwrap();
    assert_eq!(series["exact"], true);
    let a = series["coefficients"].as_array().unwrap();
    assert_eq!(a.len(), 13);
    assert!((a[1][0].as_f64().unwrap() - 1.0).abs() < 1e-15);
    assert!((a[2][0].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);

    let kernel = stdout_json(&dkernel(&["kernel", "--potential", &p, "--t", "0.1,0", "--x", "0", "--y", "0", "--order", "12"]));
    let free = (4.0 * std::f64::consts::PI * 0.1f64).powf(-0.5);
    let pconj = kernel["value"][0].as_f64().unwrap() / free;

    for extra in [&[][..], &["--no-pade"][..], &["--pade", "4", "4"][..]] {
        let mut args = vec!["borel", series_path.to_str().unwrap(), "--t", "0.1,0"];
        args.extend_from_slice(extra);
        let out = dkernel(&args);
        assert!(out.status.success(), "{extra:?}: {}", String::from_utf8_lossy(&out.stderr));
        let v = stdout_json(&out);
        assert_eq!(v["domain_ok"], true);
        let sum = v["borel_sum"][0].as_f64().unwrap();
        assert!((sum - pconj).abs() < 1e-8, "{extra:?}: {sum} vs {pconj}");
    }
}

#[test]
fn borel_rejects_undamped_ray() {
    let dir = TempDir::new().unwrap();
    let series = write(&dir, "s.json", r#"{"x":[[0.0,0.0]],"y":[[0.0,0.0]],"coefficients":[[1.0,0.0],[1.0,0.0]],"exact":false}"#);
    let out = dkernel(&["borel", &series, "--t", "0.1,0", "--direction", "pi", "--no-pade"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "divergence");
}

#[test]
fn monte_carlo_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let p = gaussian(&dir);
    let run = |seed: &str| {
        let out = dkernel(&[
            "kernel", "--potential", &p, "--method", "mc", "--samples", "4096", "--seed", seed, "--t", "0.2,0", "--x",
            "0.1", "--y", "-0.3",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let a = run("7");
    assert_eq!(a, run("7"));
    assert_ne!(a, run("8"));
}

#[test]
fn domain_error_exit_code() {
    let dir = TempDir::new().unwrap();
    let out = dkernel(&["kernel", "--potential", &unit_atom(&dir), "--t", "0.1,pi", "--x", "0", "--y", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert_eq!(stderr_json(&out)["error"], "domain");
}

#[test]
fn truncation_exit_code() {
    let dir = TempDir::new().unwrap();
    let out = dkernel(&["kernel", "--potential", &unit_atom(&dir), "--t", "5,0", "--x", "0", "--y", "0", "--order", "3"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stdout_json(&out)["report"]["converged"], false);
    assert_eq!(stderr_json(&out)["error"], "truncation");
}

#[test]
fn usage_errors() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.json");
    let cases: Vec<Vec<&str>> = vec![
        vec!["frobnicate"],
        vec!["kernel", "--t", "1,0"],
        vec!["kernel", "--exact", "free", "--t", "1", "--x", "0", "--y", "0"],
        vec!["kernel", "--exact", "free", "--t", "1,0", "--x", "a", "--y", "0"],
        vec!["verify", "--experiment", "nope"],
        vec!["kernel", "--exact", "free", "--t", "1,0", "--x", "0", "--y", "0", "--format", "xml"],
    ];
    for args in cases {
        let out = dkernel(&args);
        assert_eq!(out.status.code(), Some(64), "{args:?}");
        assert_eq!(stderr_json(&out)["error"], "usage", "{args:?}");
    }
    let out = dkernel(&["domains", "--potential", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "io");
}

#[test]
fn verify_harmonic_cross() {
    let out = dkernel(&["verify", "--experiment", "harmonic-cross"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["experiment"], "harmonic-cross");
    assert_eq!(v["pass"], true);
    assert!(v["max_rel_error"].as_f64().unwrap() < v["tolerance"].as_f64().unwrap());
}

#[test]
fn output_file_matches_stdout() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("k.json");
    let args = ["kernel", "--exact", "free", "--nu", "2", "--t", "0.5,pi/4", "--x", "0.1;0.2,0.1", "--y", "0;0"];
    let direct = dkernel(&args).stdout;
    let mut with_out = args.to_vec();
    with_out.extend_from_slice(&["--out", path.to_str().unwrap()]);
    assert!(dkernel(&with_out).status.success());
    assert_eq!(std::fs::read(Path::new(&path)).unwrap(), direct);
}
