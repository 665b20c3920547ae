use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gossip-clt"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn gossip-clt")
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const CLT: &str =
    "d = 1\nsystem_size = 200.0\nalpha = 0.5\nu_values = [-1.0, 1.0]\nreplicates = 6\n\
                   exact_d1 = true\nmaster_seed = 5\n";

#[test]
fn clt_is_byte_identical_across_reruns_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write(p, "c.toml", CLT);
    let a = bin(
        &["clt", "--config", "c.toml", "--out", "run1", "--seed", "42"],
        p,
    );
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = bin(
        &["clt", "--config", "c.toml", "--out", "run2", "--seed", "42"],
        p,
    );
    assert!(b.status.success());
    let c = bin(
        &[
            "clt",
            "--config",
            "c.toml",
            "--out",
            "run3",
            "--seed",
            "42",
            "--threads",
            "3",
        ],
        p,
    );
    assert!(c.status.success());
    let csv1 = std::fs::read(p.join("run1/results.csv")).unwrap();
    assert_eq!(csv1, std::fs::read(p.join("run2/results.csv")).unwrap());
    assert_eq!(csv1, std::fs::read(p.join("run3/results.csv")).unwrap());

    let text = String::from_utf8(csv1).unwrap();
    assert!(text
        .starts_with("replicate,u,coverage,what_v,ell_target,residual,sigma2_target,probe_se\n"));
    assert_eq!(text.lines().count(), 1 + 6 * 2);

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(p.join("run1/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 42);
    assert_eq!(manifest["command"], "clt");

    let other = bin(
        &["clt", "--config", "c.toml", "--out", "run4", "--seed", "43"],
        p,
    );
    assert!(other.status.success());
    assert_ne!(
        text.as_bytes(),
        std::fs::read(p.join("run4/results.csv")).unwrap()
    );
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = bin(&["clt", "--config", "missing.toml", "--out", "o"], p);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.toml"));

    assert_eq!(bin(&["clt", "--frobnicate"], p).status.code(), Some(1));
    assert_eq!(bin(&["no-such-command"], p).status.code(), Some(1));
    assert_eq!(bin(&["--help"], p).status.code(), Some(0));

    write(p, "alpha.toml", &CLT.replace("alpha = 0.5", "alpha = 0.7"));
    assert_eq!(
        bin(&["clt", "--config", "alpha.toml", "--out", "o"], p)
            .status
            .code(),
        Some(1)
    );
    write(p, "typo.toml", &format!("{CLT}replicats = 3\n"));
    assert_eq!(
        bin(&["clt", "--config", "typo.toml", "--out", "o"], p)
            .status
            .code(),
        Some(1)
    );
    write(p, "exact.toml", &CLT.replace("d = 1", "d = 2"));
    assert_eq!(
        bin(&["clt", "--config", "exact.toml", "--out", "o"], p)
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn phi_cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write(p, "phi.toml", "d = 1\n");
    let out = bin(
        &[
            "phi-solve",
            "--config",
            "phi.toml",
            "--out",
            "phi",
            "--check",
        ],
        p,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let cache = std::fs::read(p.join("phi/phi_d1.txt")).unwrap();
    assert!(cache.starts_with(b"# gossip-clt phi-grid v1"));

    write(
        p,
        "c.toml",
        &format!("{CLT}phi_cache = \"phi/phi_d1.txt\"\n"),
    );
    assert!(bin(&["clt", "--config", "c.toml", "--out", "cached"], p)
        .status
        .success());
    assert!(bin(&["clt", "--config", "c.toml", "--out", "cached2"], p)
        .status
        .success());
    write(p, "fresh.toml", CLT);
    assert!(bin(&["clt", "--config", "fresh.toml", "--out", "fresh"], p)
        .status
        .success());

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(p.join("cached/manifest.json")).unwrap()).unwrap();
    let hash = manifest["phi_cache_sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    let phi_manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(p.join("phi/manifest.json")).unwrap()).unwrap();
    assert_eq!(phi_manifest["phi_cache_sha256"].as_str().unwrap(), hash);
    let fresh: serde_json::Value =
        serde_json::from_slice(&std::fs::read(p.join("fresh/manifest.json")).unwrap()).unwrap();
    assert!(fresh["phi_cache_sha256"].is_null());

    // The cache holds the solved grid exactly, so results match a fresh solve.
    let cached = std::fs::read(p.join("cached/results.csv")).unwrap();
    assert_eq!(
        cached,
        std::fs::read(p.join("cached2/results.csv")).unwrap()
    );
    assert_eq!(cached, std::fs::read(p.join("fresh/results.csv")).unwrap());

    write(
        p,
        "wrong_d.toml",
        &format!(
            "{}phi_cache = \"phi/phi_d1.txt\"\n",
            CLT.replace("d = 1", "d = 2")
                .replace("exact_d1 = true\n", "probes = 100\n")
        ),
    );
    assert_eq!(
        bin(&["clt", "--config", "wrong_d.toml", "--out", "o"], p)
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn failed_checks_exit_with_three_only_under_check() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    // Two replicates cannot support the distributional thresholds.
    write(
        p,
        "c.toml",
        &CLT.replace("replicates = 6", "replicates = 2"),
    );
    let plain = bin(&["clt", "--config", "c.toml", "--out", "a"], p);
    assert_eq!(plain.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&plain.stdout);
    assert!(stdout.contains("FAIL"), "{stdout}");
    assert_eq!(
        bin(&["clt", "--config", "c.toml", "--out", "b", "--check"], p)
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn samplers_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write(
        p,
        "w.toml",
        "d = 2\nsamples = 50\nhorizon = 8.0\nmaster_seed = 1\n",
    );
    assert!(bin(
        &[
            "cmj-sample",
            "--config",
            "w.toml",
            "--out",
            "w",
            "--threads",
            "2"
        ],
        p
    )
    .status
    .success());
    let csv = std::fs::read_to_string(p.join("w/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51);
    assert!(csv
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap() >= 0.0));

    write(
        p,
        "g.toml",
        "d = 2\nsystem_size = 500.0\nu_values = [0.0, -2.0]\nprobes = 500\nmaster_seed = 3\nsnapshot = true\n",
    );
    assert!(bin(&["gossip-run", "--config", "g.toml", "--out", "g"], p)
        .status
        .success());
    let csv = std::fs::read_to_string(p.join("g/results.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("-2.0"));
    let snap = std::fs::read(p.join("g/snapshot.gsnp")).unwrap();
    assert_eq!(&snap[..4], b"GSNP");

    write(
        p,
        "far.toml",
        "d = 2\nsystem_size = 500.0\nu_values = [40.0]\nmaster_seed = 3\n",
    );
    assert_eq!(
        bin(&["gossip-run", "--config", "far.toml", "--out", "f"], p)
            .status
            .code(),
        Some(1)
    );
}
