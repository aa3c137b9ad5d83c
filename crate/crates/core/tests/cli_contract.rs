use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kang(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kang"))
        .args(args)
        .env("KANG_OUT", out)
        .output()
        .expect("binary runs")
}

const SMALL: [&str; 6] = [
    "--set",
    "sbm_n_per_block=20",
    "--set",
    "hidden=8",
    "--set",
    "max_epochs=6",
];

fn with_small<'a>(head: &[&'a str]) -> Vec<&'a str> {
    let mut v = head.to_vec();
    v.extend_from_slice(&SMALL);
    v
}

#[test]
fn train_writes_three_files_and_honours_kang_out() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"knots": 5}"#).unwrap();
    let out = kang(
        &with_small(&["train", "--config", cfg.to_str().unwrap(), "--seed", "0"]),
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["history.csv", "checkpoint.json", "resolved-config.json"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let history = fs::read_to_string(dir.path().join("history.csv")).unwrap();
    let mut lines = history.lines();
    assert_eq!(lines.next(), Some("epoch,train_loss,val_metric,epoch_time_s"));
    assert!(lines.count() <= 6);
    let resolved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("resolved-config.json")).unwrap()).unwrap();
    assert_eq!(resolved["knots"], 5);
    assert_eq!(resolved["seed"], 0);
    assert_eq!(resolved["lr"], 0.001);

    let eval = kang(
        &with_small(&[
            "eval",
            "--config",
            dir.path().join("resolved-config.json").to_str().unwrap(),
        ]),
        dir.path(),
    );
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    assert!(String::from_utf8_lossy(&eval.stdout).contains("test"));
}

#[test]
fn ablate_init_writes_one_row_per_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let out = kang(&with_small(&["ablate-init", "--seeds", "2"]), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("ablate-init.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "setting,mean,std,n_seeds");
    let settings: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(settings, ["ET", "E!T", "G!T", "GT"]);
    assert!(lines[1..].iter().all(|l| l.ends_with(",2")));
}

#[test]
fn export_splines_writes_a_csv_per_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = kang(
        &with_small(&["export-splines", "--every", "3", "--steps", "5"]),
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut files: Vec<_> = fs::read_dir(dir.path().join("splines"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(files, ["epoch_00000.csv", "epoch_00003.csv", "epoch_00006.csv"]);
    let text = fs::read_to_string(dir.path().join("splines/epoch_00003.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epoch,t,value");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("3,-3,"));
    assert!(lines[5].starts_with("3,3,"));
}

#[test]
fn sweeps_and_studies_write_fixed_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&[&str], &str, &str); 5] = [
        (
            &["ablate-basis", "--seeds", "1"],
            "ablate-basis.csv",
            "setting,mean,std,n_seeds",
        ),
        (
            &["sweep-knots", "--seeds", "1", "--knots", "2,3"],
            "sweep-knots.csv",
            "setting,mean,std,n_seeds",
        ),
        (
            &["sweep-grid", "--seeds", "1", "--grids", "-2:2,-15:20"],
            "sweep-grid.csv",
            "setting,mean,std,n_seeds",
        ),
        (
            &["oversmooth", "--seeds", "1", "--depths", "1,3"],
            "oversmooth.csv",
            "depth,residual,dirichlet_energy,test_metric,n_seeds",
        ),
        (
            &["scale", "--ratios", "1.0,0.5", "--repeats", "2"],
            "scale.csv",
            "ratio,nodes,mean_epoch_time_s,std_epoch_time_s,repeats",
        ),
    ];
    for (args, file, header) in cases {
        let out = kang(&with_small(args), dir.path());
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let text = fs::read_to_string(dir.path().join(file)).unwrap();
        assert_eq!(text.lines().next(), Some(header), "{file}");
    }
    let text = fs::read_to_string(dir.path().join("oversmooth.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 4);
    let text = fs::read_to_string(dir.path().join("sweep-grid.csv")).unwrap();
    assert!(text.contains("grid=[-2,2]"));
}

#[test]
fn describe_reports_the_parameter_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = kang(&["describe"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text.lines().last().unwrap();
    let n: usize = line.rsplit(' ').next().unwrap().parse().unwrap();
    let model = kang::train::build_model(
        &kang::train::TrainConfig::preset(kang::model::Task::NodeCls),
        &kang::train::load_data(&kang::train::TrainConfig::preset(kang::model::Task::NodeCls)).unwrap(),
    )
    .unwrap();
    assert_eq!(n, model.count_parameters());
}

#[test]
fn errors_exit_nonzero_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = kang(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = kang(&["train", "--set", "lr=abc"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim().lines().count(), 1);
    assert!(err.contains("`lr`"), "{err}");

    let out = kang(&["train", "--set", "learning_rate=0.1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("valid keys"));

    let out = kang(&["train", "--config", "/nonexistent/c.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn in_process_entry_point_matches_binary_codes() {
    assert_eq!(kang::cli::run_command(["kang", "nope"]), 2);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(kang::cli::run_command(["kang", "describe", "--out", out]), 0);
    assert!(dir.path().join("resolved-config.json").exists());
}
