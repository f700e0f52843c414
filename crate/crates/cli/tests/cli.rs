use std::path::Path;
use std::process::{Command, Output};

fn normda(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_normda"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SYNTH: &str = r#"{"n_subjects": 3, "n_sessions": 2, "samples_per_class_per_domain": 10,
    "dim": 3, "domain_shift_scale": 2.0, "noise_std": 1.0, "seed": 4}"#;

fn experiment(protocol: &str, sessions: usize) -> String {
    format!(
        r#"{{"dataset": {{"synthetic": {{"n_subjects": 3, "n_sessions": {sessions},
            "samples_per_class_per_domain": 15, "dim": 3, "domain_shift_scale": 4.0, "noise_std": 1.0}}}},
          "protocol": "{protocol}", "strategies": ["noNorm", "Z2"],
          "methods": [{{"kind": "noDA-SVM"}}, {{"kind": "TCA-SVM"}}], "seed": 3}}"#
    )
}

#[test]
fn synth_writes_expected_rows() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.json"), SYNTH).unwrap();
    let o = normda(&["synth", "--config", "s.json", "--out", "d.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("n = 120, m = 3, domains = 6"), "{}", stdout(&o));
    let text = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert_eq!(text.lines().count(), 121);
}

#[test]
fn synth_rejects_negative_noise() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.json"),
        SYNTH.replace("\"noise_std\": 1.0", "\"noise_std\": -1.0"),
    )
    .unwrap();
    let o = normda(&["synth", "--config", "s.json", "--out", "d.csv"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("noise_std"), "{}", stderr(&o));
}

#[test]
fn synth_reports_unwritable_path() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.json"), SYNTH).unwrap();
    let o = normda(
        &["synth", "--config", "s.json", "--out", "missing/dir/d.csv"],
        dir.path(),
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let o = normda(&["synth", "--config", "nope.json", "--out", "d.csv"], dir.path());
    assert_eq!(code(&o), 3);
}

#[test]
fn run_writes_report_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("e.json"), experiment("loso", 1)).unwrap();
    let o = normda(&["run", "--config", "e.json", "--out", "a", "--jobs", "2"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.starts_with("| Normalization | noDA-SVM | TCA-SVM |"), "{table}");
    let md = std::fs::read_to_string(dir.path().join("a/report.md")).unwrap();
    for row in ["| noNorm |", "| Z2 |"] {
        let line = md.lines().find(|l| l.starts_with(row)).unwrap();
        assert_eq!(line.matches(" (").count(), 2, "{line}");
    }
    for f in [
        "report.csv",
        "folds.csv",
        "config.json",
        "projection_Z2_test-subject-1.csv",
    ] {
        assert!(dir.path().join("a").join(f).is_file(), "{f}");
    }
    let o = normda(&["run", "--config", "e.json", "--out", "b", "--jobs", "1"], dir.path());
    assert_eq!(code(&o), 0);
    let a = std::fs::read(dir.path().join("a/report.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/report.csv")).unwrap();
    assert_eq!(a, b);
    let o = normda(&["run", "--config", "e.json", "--out", "c", "--seed", "99"], dir.path());
    assert_eq!(code(&o), 0);
    let echoed = std::fs::read_to_string(dir.path().join("c/config.json")).unwrap();
    assert!(echoed.contains("\"seed\": 99"));
}

#[test]
fn run_rejects_hlso_on_single_session_data() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("e.json"), experiment("hlso", 1)).unwrap();
    let o = normda(&["run", "--config", "e.json"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("HLSO"), "{}", stderr(&o));
    std::fs::write(dir.path().join("e.json"), experiment("hlso", 2)).unwrap();
    let o = normda(&["run", "--config", "e.json", "--out", "r"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn strict_run_fails_on_failed_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment("loso", 1).replace("{\"kind\": \"TCA-SVM\"}", "{\"kind\": \"TCA-SVM\", \"dim\": [100000]}");
    std::fs::write(dir.path().join("e.json"), cfg).unwrap();
    let o = normda(&["run", "--config", "e.json", "--out", "r"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("FAIL"));
    let o = normda(&["run", "--config", "e.json", "--out", "r", "--strict"], dir.path());
    assert_eq!(code(&o), 4);
}

#[test]
fn run_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("e.json"),
        experiment("loso", 1).replace("\"seed\"", "\"seeed\""),
    )
    .unwrap();
    assert_eq!(code(&normda(&["run", "--config", "e.json"], dir.path())), 2);
    std::fs::write(dir.path().join("e.json"), "{ not json").unwrap();
    assert_eq!(code(&normda(&["run", "--config", "e.json"], dir.path())), 2);
}

#[test]
fn table_and_project() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("e.json"), experiment("loso", 1)).unwrap();
    let o = normda(&["run", "--config", "e.json", "--out", "r"], dir.path());
    assert_eq!(code(&o), 0);
    let t = normda(&["table", "--report", "r/report.csv"], dir.path());
    assert_eq!(code(&t), 0);
    let printed = stdout(&o);
    assert!(printed.starts_with(&stdout(&t)), "{printed}\n---\n{}", stdout(&t));

    let p = normda(
        &[
            "project",
            "--config",
            "e.json",
            "--strategy",
            "Z2",
            "--fold",
            "test-subject-2",
            "--out",
            "p.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&p), 0, "{}", stderr(&p));
    let text = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x,y,subject,session,split,label");
    assert_eq!(text.lines().count(), 1 + 90);
    let p = normda(
        &[
            "project",
            "--config",
            "e.json",
            "--strategy",
            "Z2",
            "--fold",
            "nope",
            "--out",
            "p.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&p), 2);
}

#[test]
fn validate_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.json"), SYNTH).unwrap();
    assert_eq!(
        code(&normda(&["synth", "--config", "s.json", "--out", "d.csv"], dir.path())),
        0
    );
    let o = normda(&["validate", "--data", "d.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(
        stdout(&o).contains("120 rows, 3 features, 2 classes, 3 subjects, 6 domains"),
        "{}",
        stdout(&o)
    );

    std::fs::write(dir.path().join("nosession.csv"), "subject,label,f0\n1,0,0.5\n1,1,0.7\n").unwrap();
    let o = normda(&["validate", "--data", "nosession.csv"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("session"));

    std::fs::write(
        dir.path().join("single.csv"),
        "subject,session,label,f0,f1\n1,1,0,0.5,1\n1,1,1,0.7,1\n2,1,0,0.1,1\n",
    )
    .unwrap();
    let o = normda(&["validate", "--data", "single.csv"], dir.path());
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("Z2 and Z3"), "{out}");
    assert!(out.contains("column `f1` is constant"), "{out}");

    std::fs::write(
        dir.path().join("bad.csv"),
        "subject,session,label,f0\n1,1,0,0.5\n1,1,1,abc\n",
    )
    .unwrap();
    let o = normda(&["validate", "--data", "bad.csv"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("row 2"), "{}", stderr(&o));
}
