use dlt_cli::PipelineConfig;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn manifest_dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

fn fixture(name: &str) -> PathBuf {
    manifest_dir().join("tests/fixtures").join(name)
}

fn dltrng(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dltrng"))
        .args(args)
        .env_remove("DLTRNG_CONFIG_PATH")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn toml_files(dir: &Path, out: &mut Vec<PathBuf>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            toml_files(&path, out);
        } else if path.extension().is_some_and(|e| e == "toml") {
            out.push(path);
        }
    }
}

#[test]
fn shipped_configs_validate() {
    let mut files = vec![fixture("tiny.toml")];
    toml_files(&manifest_dir().join("../../configs"), &mut files);
    assert!(files.len() >= 9, "{files:?}");
    for f in files {
        let cfg = PipelineConfig::load(&f).unwrap_or_else(|e| panic!("{}: {e:#}", f.display()));
        cfg.validate()
            .unwrap_or_else(|e| panic!("{}: {e}", f.display()));
        cfg.build_device().unwrap();
    }
}

#[test]
fn zero_bits_is_a_validation_error_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("stream.bin");
    let o = dltrng(&[
        "--config",
        s(&fixture("tiny.toml")),
        "generate",
        "--enrollment",
        s(&fixture("golden-enrollment.db")),
        "--bits",
        "0",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn missing_config_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dltrng(&["measure", "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("DLTRNG_CONFIG_PATH"));
}

#[test]
fn invalid_config_lists_every_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("tiny.toml"))
        .unwrap()
        .replace("rows = 4", "rows = 0")
        .replace("seed = 42", "seed = 42\nt_rp_fraction = 1.5");
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, text).unwrap();
    let o = dltrng(&[
        "--config",
        s(&cfg),
        "measure",
        "--out",
        s(&tmp.path().join("d")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("device: geometry field `rows_per_bank`"),
        "{err}"
    );
    assert!(err.contains("device.t_rp_fraction"), "{err}");
}

#[test]
fn config_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::copy(fixture("tiny.toml"), tmp.path().join("dltrng.toml")).unwrap();
    let dumps = tmp.path().join("dumps");
    let o = Command::new(env!("CARGO_BIN_EXE_dltrng"))
        .args(["measure", "--out", s(&dumps)])
        .env("DLTRNG_CONFIG_PATH", tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(dumps.join("dump-0007-paa.dlt")).unwrap(),
        std::fs::read(fixture("golden-dump.dlt")).unwrap()
    );
}

#[test]
fn test_refuses_foreign_enrollment_and_tampered_streams() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = fixture("tiny.toml");
    let stream = dir.join("stream.bin");
    let ok = |o: Output| assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    ok(dltrng(&[
        "--config",
        s(&cfg),
        "generate",
        "--enrollment",
        s(&fixture("golden-enrollment.db")),
        "--out",
        s(&stream),
    ]));
    ok(dltrng(&[
        "--config",
        s(&cfg),
        "measure",
        "--out",
        s(&dir.join("dumps")),
    ]));
    ok(dltrng(&[
        "characterize",
        "--dumps",
        s(&dir.join("dumps")),
        "--out",
        s(&dir.join("char")),
    ]));
    let other = dir.join("wide.db");
    ok(dltrng(&[
        "enroll",
        "--charmap",
        s(&dir.join("char/charmap.dlc")),
        "--window",
        "0.3,0.7",
        "--out",
        s(&other),
    ]));

    let report = dir.join("report");
    let o = dltrng(&[
        "--config",
        s(&cfg),
        "test",
        "--stream",
        s(&stream),
        "--enrollment",
        s(&other),
        "--out",
        s(&report),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("different enrollment"));

    let mut bytes = std::fs::read(&stream).unwrap();
    bytes[0] ^= 1;
    std::fs::write(&stream, bytes).unwrap();
    let o = dltrng(&[
        "--config",
        s(&cfg),
        "test",
        "--stream",
        s(&stream),
        "--out",
        s(&report),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not match"));
}
