use std::path::Path;
use std::process::Command;

use prefalign::report::CurveTable;

const TINY: &str = r#"
seed = 4
[pretrain]
steps = 40
[align]
epochs = 1
batch_size = 128
[eval]
prompts = 8
"#;

fn prefalign(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_prefalign"))
        .args(args)
        .args(["--config", dir.join("run.toml").to_str().unwrap()])
        .args(["--out", dir.join("out").to_str().unwrap()])
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = prefalign(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), TINY).unwrap();
    ok(d, &["taxonomy"]);
    ok(d, &["forge"]);
    ok(d, &["pretrain"]);
    ok(d, &["align", "--variant", "cross_val"]);
    ok(d, &["align", "--variant", "retain_discarded"]);
    ok(d, &["eval", "--export-png"]);
    let out = d.join("out");
    for f in [
        "taxonomy.json",
        "pairs.json",
        "dataset.json",
        "pretrain_loss.csv",
        "checkpoints/origin.ckpt",
        "checkpoints/cross_val.ckpt",
        "checkpoints/retain_discarded.ckpt",
        "report.csv",
        "wins.csv",
        "curves.csv",
        "plots/metrics.png",
        "plots/wins.png",
        "plots/curves_retain_discarded.png",
        "samples/origin.png",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let names: Vec<&str> = report.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["origin", "cross_val", "retain_discarded"]);
    let curves = CurveTable::load(&out.join("curves.csv")).unwrap();
    assert_eq!(curves.variants(), ["cross_val", "retain_discarded"]);
    assert_eq!(curves.components, ["image_contrast", "text_contrast"]);

    // eval is idempotent
    let before = std::fs::read(out.join("report.csv")).unwrap();
    ok(d, &["eval"]);
    assert_eq!(before, std::fs::read(out.join("report.csv")).unwrap());
}

#[test]
fn ablate_writes_one_row_per_arm_plus_origin() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), TINY).unwrap();
    ok(d, &["ablate"]);
    let table = std::fs::read_to_string(d.join("out/ablation.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 6);
    for arm in ["origin", "cross_val", "diffusion_dpo", "sft", "retain_discarded", "random_select"] {
        assert!(table.lines().any(|l| l.split(',').nth(1) == Some(arm)), "no row for {arm}");
    }
}

#[test]
fn usage_and_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), TINY).unwrap();
    let out = prefalign(d, &["align", "--variant", "ppo"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown variant"));
    // forge before taxonomy
    let out = prefalign(d, &["forge"]);
    assert_eq!(out.status.code(), Some(1));
    std::fs::write(d.join("run.toml"), "[align]\nbta = 1\n").unwrap();
    assert_eq!(prefalign(d, &["taxonomy"]).status.code(), Some(1));
}
