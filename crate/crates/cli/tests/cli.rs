use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = "
[experiment]
id = small
kind = adversarial
horizon = 200
seeds = 0
log_every = 10

[problem]
period = 11

[defaults]
beta1 = 0

[optimizer.adam]
";

fn bamsprod(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bamsprod"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--parallel")
        .arg("2")
        .env_remove("BAMSPROD_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_manifest(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

/// Rows of a CSV file as maps from header name to field.
fn read_csv(path: &Path) -> Vec<std::collections::HashMap<String, String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines
        .map(|l| header.iter().map(|h| h.to_string()).zip(l.split(',').map(str::to_string)).collect())
        .collect()
}

#[test]
fn minimal_manifest_writes_one_run_and_a_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let m = write_manifest(tmp.path(), "small.manifest", SMALL);
    let out = bamsprod(&tmp.path().join("out"), &["run", m.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out/small");
    assert_eq!(csv_files(&dir), ["adam_seed0.csv", "summary.csv"]);
    let run = fs::read_to_string(dir.join("adam_seed0.csv")).unwrap();
    assert!(run.starts_with("step,w,loss,regret,avg_regret,gamma,lr_min,lr_max\n"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["cells"][0]["cell"], "adam_seed0");
}

#[test]
fn reruns_are_bitwise_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let m = write_manifest(tmp.path(), "small.manifest", SMALL);
    let read_all = |dir: &Path| -> Vec<(String, Vec<u8>)> {
        csv_files(dir).into_iter().map(|n| (n.clone(), fs::read(dir.join(&n)).unwrap())).collect()
    };
    assert!(bamsprod(&tmp.path().join("a"), &["run", m.to_str().unwrap()]).status.success());
    let first = read_all(&tmp.path().join("a/small"));
    assert!(bamsprod(&tmp.path().join("a"), &["run", m.to_str().unwrap()]).status.success());
    assert_eq!(first, read_all(&tmp.path().join("a/small")));
}

#[test]
fn errors_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let code = |args: &[&str]| bamsprod(&out_dir, args).status.code();

    let missing = tmp.path().join("absent.manifest");
    assert_eq!(code(&["run", missing.to_str().unwrap()]), Some(5));

    let malformed = write_manifest(tmp.path(), "bad.manifest", "[experiment\nkind = adversarial\n");
    assert_eq!(code(&["run", malformed.to_str().unwrap()]), Some(3));

    let unknown = write_manifest(tmp.path(), "unknown.manifest", &SMALL.replace("optimizer.adam", "optimizer.nadam"));
    let out = bamsprod(&out_dir, &["run", unknown.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nadam"));
    // rejected before any run: nothing was written
    assert!(!out_dir.join("unknown").exists());

    let boom = write_manifest(
        tmp.path(),
        "boom.manifest",
        "[experiment]\nkind = autoencoder\nepochs = 3\nseeds = 0\n\
         [problem]\nsamples = 64\ninput_dim = 8\nhidden_dim = 4\nparam_bound = 1e300\n\
         [optimizer.sgdm]\neta = 1e300\neta_schedule = constant\n",
    );
    assert_eq!(code(&["run", boom.to_str().unwrap()]), Some(4));
    let summary = read_csv(&out_dir.join("boom/summary.csv"));
    assert_eq!(summary[0]["status"], "diverged");

    assert_eq!(code(&["repro", "theorem2"]), Some(2));
    assert_eq!(code(&["sweep", "x.manifest", "--grid", "beta1"]), Some(2));
    assert_eq!(code(&["frobnicate"]), Some(2));
}

#[test]
fn sweep_expands_the_grid_in_lexicographic_order() {
    let tmp = tempfile::tempdir().unwrap();
    let m = write_manifest(tmp.path(), "small.manifest", SMALL);
    let out = bamsprod(
        &tmp.path().join("out"),
        &[
            "sweep",
            m.to_str().unwrap(),
            "--grid",
            "beta2=0.99,0.999,0.99",
            "--grid",
            "eta=0.1,0.05",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&tmp.path().join("out/small/summary.csv"));
    let cells: Vec<&str> = rows.iter().map(|r| r["cell"].as_str()).collect();
    assert_eq!(
        cells,
        [
            "adam_beta2-0.99_eta-0.1_seed0",
            "adam_beta2-0.99_eta-0.05_seed0",
            "adam_beta2-0.999_eta-0.1_seed0",
            "adam_beta2-0.999_eta-0.05_seed0"
        ]
    );
}

#[test]
fn empty_grid_runs_the_base_manifest_only() {
    let tmp = tempfile::tempdir().unwrap();
    let m = write_manifest(tmp.path(), "small.manifest", SMALL);
    assert!(bamsprod(&tmp.path().join("out"), &["sweep", m.to_str().unwrap()]).status.success());
    assert_eq!(read_csv(&tmp.path().join("out/small/summary.csv")).len(), 1);
}

#[test]
fn seed_offset_shifts_every_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let m = write_manifest(tmp.path(), "small.manifest", &SMALL.replace("seeds = 0", "seeds = 0, 1"));
    let out = bamsprod(&tmp.path().join("out"), &["run", m.to_str().unwrap(), "--seed-offset", "5"]);
    assert!(out.status.success());
    assert_eq!(
        csv_files(&tmp.path().join("out/small")),
        ["adam_seed5.csv", "adam_seed6.csv", "summary.csv"]
    );
}

#[test]
fn output_directory_defaults_to_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let m = write_manifest(tmp.path(), "small.manifest", SMALL);
    let status = Command::new(env!("CARGO_BIN_EXE_bamsprod"))
        .args(["run", m.to_str().unwrap()])
        .env("BAMSPROD_OUT_DIR", tmp.path().join("env_out"))
        .status()
        .unwrap();
    assert!(status.success());
    assert!(tmp.path().join("env_out/small/summary.csv").exists());
}

#[test]
fn summary_metrics_match_the_run_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let manifests = [
        SMALL.replace("[optimizer.adam]", "[optimizer.adam]\n[optimizer.bamsprod]\n[optimizer.sgdm]"),
        "[experiment]\nid = shub\nkind = shubert\nhorizon = 50\nseeds = 0..3\nlog_every = 7\n\
         [optimizer.adam]\n[optimizer.bamsprod]\n"
            .to_string(),
        "[experiment]\nid = ae\nkind = autoencoder\nepochs = 4\nseeds = 0, 1\n\
         [problem]\nsamples = 64\ninput_dim = 8\nhidden_dim = 4\n[optimizer.adam]\neta = 0.01\n"
            .to_string(),
    ];
    for (i, text) in manifests.iter().enumerate() {
        let m = write_manifest(tmp.path(), &format!("m{i}.manifest"), text);
        let out = bamsprod(&tmp.path().join("out"), &["run", m.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for (id, column) in [("small", "avg_regret"), ("shub", "loss"), ("ae", "train_loss")] {
        let dir = tmp.path().join("out").join(id);
        for row in read_csv(&dir.join("summary.csv")) {
            let log = read_csv(&dir.join(format!("{}.csv", row["cell"])));
            assert_eq!(log.last().unwrap()[column], row["value"], "{id} {}", row["cell"]);
        }
    }
}

#[test]
fn bound_checks_are_written_next_to_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let m = write_manifest(
        tmp.path(),
        "q.manifest",
        "[experiment]\nkind = quadratic\nhorizon = 300\nseeds = 3\nlog_every = 50\n\
         [problem]\ndim = 3\nbound_checkpoints = 10, 100, 300\n[optimizer.bamsprod]\n",
    );
    assert!(bamsprod(&tmp.path().join("out"), &["run", m.to_str().unwrap()]).status.success());
    let rows = read_csv(&tmp.path().join("out/q/bamsprod_seed3_bound.csv"));
    let t: Vec<&str> = rows.iter().map(|r| r["t"].as_str()).collect();
    assert_eq!(t, ["10", "100", "300"]);
    for r in &rows {
        let (regret, bound): (f64, f64) = (r["regret"].parse().unwrap(), r["bound"].parse().unwrap());
        assert_eq!(r["holds"], (regret <= bound).to_string());
    }
}

#[test]
fn shipped_manifests_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("manifests");
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let mut m = bamsprod_cli::load_manifest(&path).unwrap();
        // keep the check quick
        m.experiment.set("horizon", "500");
        let settings = bamsprod_cli::Settings {
            out: tmp.path().to_path_buf(),
            ..bamsprod_cli::Settings::default()
        };
        let report = bamsprod_cli::execute(&m, &settings).unwrap();
        assert!(!report.outcomes.is_empty(), "{}", path.display());
    }
}
