use std::path::Path;
use std::process::{Command, Output};

fn voxbench(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxbench"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const RUN_TOML: &str = r#"
out = "run"
bootstrap_resamples = 100
folds = 3
feature_sets = ["embedding"]
algorithms = ["logreg", "svm"]
variants = ["voice", "voice+demo"]

[dataset]
manifest = "data/synthetic.csv"
label_map = "data/labels.txt"
symptoms = "data/synthetic.symptoms.txt"
embeddings = "data/synthetic.embeddings.csv"

[grid.svm]
C = [1.0]
kernel = ["linear"]
gamma = ["scale"]
degree = [3]

[grid.logreg]
C = [1.0]
penalty = ["l2"]
solver = ["lbfgs"]
max_iter = [100]
l1_ratio = [0.5]
"#;

fn synth(dir: &Path) {
    let o = voxbench(
        dir,
        &["--out", "data", "--seed", "5", "synth", "--n", "60", "--prevalence", "0.25", "--duration", "1"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn benchmark_report_and_timing_flow() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    std::fs::write(dir.join("run.toml"), RUN_TOML).unwrap();

    let o = voxbench(dir, &["--config", "run.toml", "benchmark"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.join("run/run.json").is_file());
    assert!(dir.join("run/report.md").is_file());

    let bundle = "run/cells/logreg__embedding__voice/bundle.vxb";
    let o = voxbench(
        dir,
        &["--config", "run.toml", "--out", "run", "timing", "--bundle", bundle, "--repeats", "2", "--limit", "2"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.join("run/timing/logreg__embedding__voice.csv")).unwrap();
    assert!(csv.starts_with("model_id,file_id,stage,seconds\n"));
    assert!(csv.contains(",load_pool,"));

    let o = voxbench(dir, &["report", "--run", "run"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let md = std::fs::read_to_string(dir.join("run/report.md")).unwrap();
    assert!(md.contains("## Held-out results: embedding"));
    assert!(md.contains("## Inference time per file"));

    let o = voxbench(
        dir,
        &[
            "evaluate",
            "--bundle",
            bundle,
            "--manifest",
            "run/split/test.csv",
            "--labels",
            "data/labels.txt",
            "--embeddings",
            "data/synthetic.embeddings.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("balanced_accuracy"));
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("bad.toml"), "sed = 1\n[dataset]\nmanifest = \"m.csv\"\n").unwrap();
    let o = voxbench(dir, &["--config", "bad.toml", "benchmark"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("sed"));

    let o = voxbench(dir, &["benchmark"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn failed_cells_exit_with_1() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    std::fs::create_dir_all(dir.join("empty")).unwrap();
    let toml = RUN_TOML.replace("feature_sets = [\"embedding\"]", "feature_sets = [\"embedding\", \"acoustic\"]\naudio_root = \"empty\"");
    std::fs::write(dir.join("run.toml"), toml).unwrap();
    let o = voxbench(dir, &["--config", "run.toml", "benchmark"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let md = std::fs::read_to_string(dir.join("run/report.md")).unwrap();
    assert!(md.contains("## Failed cells"));
    assert!(md.contains("## Held-out results: embedding"));
}
