use std::path::Path;
use std::process::{Command, Output};

use anyhow::{ensure, Result};
use ntnsync::harness::read_records_csv;
use ntnsync::tire::TireModel;
use ntnsync::waveform::PreambleConfig;
use ntnsync::IqBuffer;

fn ntnsync(args: &[&str]) -> Result<Output> {
    Ok(Command::new(env!("CARGO_BIN_EXE_ntnsync")).args(args).env("NTNSYNC_THREADS", "1").output()?)
}

fn code(out: &Output) -> Option<i32> {
    out.status.code()
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

const SMALL: &str = r#"{"snr_db_list": [null, 3.0], "n_rep_list": [1], "trials_per_point": 2, "master_seed": 9}"#;

#[test]
fn help_and_version_exit_zero() -> Result<()> {
    assert_eq!(code(&ntnsync(&["--help"])?), Some(0));
    assert_eq!(code(&ntnsync(&["--version"])?), Some(0));
    Ok(())
}

#[test]
fn usage_errors_exit_one() -> Result<()> {
    assert_eq!(code(&ntnsync(&[])?), Some(1));
    assert_eq!(code(&ntnsync(&["frobnicate"])?), Some(1));
    assert_eq!(code(&ntnsync(&["run"])?), Some(1));
    Ok(())
}

#[test]
fn config_errors_exit_one() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let out = dir.path().join("out");
    assert_eq!(code(&ntnsync(&["run", "--config", "/nonexistent/cfg.json", "--out", p(&out)])?), Some(1));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json")?;
    assert_eq!(code(&ntnsync(&["run", "--config", p(&bad), "--out", p(&out)])?), Some(1));

    let invalid = dir.path().join("invalid.json");
    std::fs::write(&invalid, r#"{"trials_per_point": 0}"#)?;
    let o = ntnsync(&["run", "--config", p(&invalid), "--out", p(&out)])?;
    assert_eq!(code(&o), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config"));

    let no_out = dir.path().join("small.json");
    std::fs::write(&no_out, SMALL)?;
    assert_eq!(code(&ntnsync(&["run", "--config", p(&no_out)])?), Some(1));
    Ok(())
}

#[test]
fn unwritable_output_is_a_runtime_failure() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let cfg = dir.path().join("small.json");
    std::fs::write(&cfg, SMALL)?;
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "")?;
    let out = blocker.join("sub");
    assert_eq!(code(&ntnsync(&["run", "--config", p(&cfg), "--out", p(&out)])?), Some(2));
    Ok(())
}

#[test]
fn run_writes_outputs_and_summarize_reads_them() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let cfg = dir.path().join("small.json");
    std::fs::write(&cfg, SMALL)?;
    let out = dir.path().join("out");
    let o = ntnsync(&["run", "--config", p(&cfg), "--out", p(&out)])?;
    ensure!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trials.csv", "timing.csv", "summary.json", "toa_cdf.dat"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let records = read_records_csv(std::fs::File::open(out.join("trials.csv"))?)?;
    assert_eq!(records.len(), 4);
    let header = std::fs::read_to_string(out.join("trials.csv"))?;
    assert!(!header.lines().next().unwrap_or_default().contains("wall_ms"));

    let s = ntnsync(&["summarize", p(&out.join("trials.csv"))])?;
    ensure!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&s.stdout)?;
    assert_eq!(summary["groups"].as_array().map(Vec::len), Some(2));

    // a second run over the same config reproduces the trial table byte for byte
    let again = dir.path().join("again");
    assert!(ntnsync(&["run", "--config", p(&cfg), "--out", p(&again)])?.status.success());
    assert_eq!(std::fs::read(out.join("trials.csv"))?, std::fs::read(again.join("trials.csv"))?);
    Ok(())
}

#[test]
fn gen_writes_the_preamble() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let iq = dir.path().join("x.iq");
    assert!(ntnsync(&["gen", "--iq", p(&iq)])?.status.success());
    let x = IqBuffer::read_raw(std::fs::File::open(&iq)?, 0)?;
    assert_eq!(x.len(), PreambleConfig::default().preamble_len());
    assert!(x.samples.iter().all(|s| (s.norm() - 1.0).abs() < 1e-6));

    let pre = dir.path().join("pre.json");
    std::fs::write(&pre, r#"{"n_rep": 1}"#)?;
    assert!(ntnsync(&["gen", "--preamble", p(&pre), "--iq", p(&iq)])?.status.success());
    assert_eq!(std::fs::metadata(&iq)?.len(), 4 * 3072 * 8);

    std::fs::write(&pre, r#"{"n_rep": 0}"#)?;
    assert_eq!(code(&ntnsync(&["gen", "--preamble", p(&pre), "--iq", p(&iq)])?), Some(1));
    Ok(())
}

#[test]
fn demo_phase_emits_the_wrapped_trace() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let csv = dir.path().join("fig3.csv");
    assert!(ntnsync(&["demo-phase", "--scenario", "fig3", "--csv", p(&csv)])?.status.success());
    let text = std::fs::read_to_string(&csv)?;
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split(',').map(|v| v.trim().parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    assert!(rows.len() > 20_000);
    // values are printed with nine decimals
    assert!(rows.iter().all(|&(_, ph)| ph.abs() <= std::f64::consts::PI + 1e-8));
    assert!(rows.windows(2).all(|w| w[1].0 == w[0].0 + 1.0));
    Ok(())
}

#[test]
fn train_tire_writes_a_loadable_blob() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let blob = dir.path().join("model.bin");
    assert!(ntnsync(&["train-tire", "--out", p(&blob), "--seed", "3"])?.status.success());
    let model = TireModel::load(std::fs::File::open(&blob)?)?;
    assert_eq!(model.hidden(), 4);
    Ok(())
}
