use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use splatfix_core::io::read_tensor;
use splatfix_core::VideoTensor;

fn splatfix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splatfix"))
        .args(args)
        .output()
        .unwrap()
}

fn json(args: &[&str]) -> Value {
    let out = splatfix(args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn render_writes_every_modality() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let v = json(&[
        "render",
        "--seed",
        "1",
        "--size",
        "16",
        "--splats",
        "20",
        "--frames",
        "3",
        "--png",
        "--json",
        "--out",
        s(&out),
    ]);
    assert_eq!(v["frames"], 3);
    assert_eq!(v["width"], 16);
    for f in ["color", "alpha", "depth", "normal", "uncert"] {
        assert!(out.join(format!("{f}.gpbt")).is_file(), "{f}");
    }
    assert!(out.join("scene.ply").is_file());
    assert!(out.join("preview/color_0002.png").is_file());

    // re-render the written scene along the written cameras; the PLY stores f32
    let again = dir.path().join("r2");
    json(&[
        "render",
        "--scene",
        s(&out.join("scene.ply")),
        "--cameras",
        s(&out.join("cameras.json")),
        "--json",
        "--out",
        s(&again),
    ]);
    for f in ["color", "depth"] {
        let a: VideoTensor<f64> = read_tensor(out.join(format!("{f}.gpbt"))).unwrap();
        let b: VideoTensor<f64> = read_tensor(again.join(format!("{f}.gpbt"))).unwrap();
        assert_eq!(a.dims(), b.dims());
        let diff = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-4, "{f}: {diff}");
    }
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"samples_per_segment": 2, "seed": 4}"#).unwrap();
    let out = dir.path().join("t");
    let v = json(&[
        "traject",
        "--samples-per-segment",
        "9",
        "--seed",
        "1",
        "--config",
        s(&cfg),
        "--json",
        "--out",
        s(&out),
    ]);
    let keys = v["keys"].as_u64().unwrap();
    assert_eq!(v["path"].as_u64().unwrap(), (keys - 1) * 2 + 1);

    let direct = dir.path().join("d");
    json(&[
        "traject",
        "--samples-per-segment",
        "2",
        "--seed",
        "4",
        "--json",
        "--out",
        s(&direct),
    ]);
    assert_eq!(
        std::fs::read(out.join("path.json")).unwrap(),
        std::fs::read(direct.join("path.json")).unwrap()
    );
}

#[test]
fn bad_config_keys_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"samples_per_segment": "many"}"#).unwrap();
    let out = splatfix(&[
        "traject",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("t")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("c.json"));

    std::fs::write(&cfg, "[1, 2]").unwrap();
    let out = splatfix(&[
        "traject",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("t")),
    ]);
    assert!(!out.status.success());
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = splatfix(&["eval", "--cloud", s(&dir.path().join("missing.ply"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: "), "{err}");
    assert!(err.contains("missing.ply"), "{err}");

    let out = splatfix(&[
        "render",
        "--threads",
        "0",
        "--out",
        s(&dir.path().join("r")),
    ]);
    assert!(!out.status.success());
    let out = splatfix(&[
        "simulate",
        "--init-mode",
        "nonsense",
        "--out",
        s(&dir.path().join("s")),
    ]);
    assert!(!out.status.success());
}

#[test]
fn plain_output_is_key_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = splatfix(&["traject", "--seed", "2", "--out", s(&dir.path().join("t"))]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("command=traject"), "{text}");
    assert!(text.contains(" path="), "{text}");
}
