use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn afat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_afat")).args(args).output().expect("binary runs")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}\n{}\n{}", o.status.code(), stdout(&o), String::from_utf8_lossy(&o.stderr));
    o
}

/// Ten 100-frame sequences; `extra` may override the seed.
fn gen(dir: &Path, name: &str, extra: &[&str]) -> String {
    let out = path(dir, name);
    let mut args = vec!["gen-data", "--out", &out, "--sequences", "10", "--frames-per-seq", "100"];
    if !extra.contains(&"--seed") {
        args.extend(["--seed", "3"]);
    }
    args.extend_from_slice(extra);
    ok(afat(&args));
    out
}

/// Value of a `key: value` line.
fn field(text: &str, key: &str) -> f64 {
    let prefix = format!("{key}: ");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no {key} in\n{text}"))
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn gen_data_is_deterministic_and_counts_every_frame() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.bin", &[]);
    let b = gen(dir.path(), "b.bin", &[]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let mut rdr = csv::Reader::from_path(format!("{a}.stats.csv")).unwrap();
    let total: u64 = rdr.records().map(|r| r.unwrap()[1].parse::<u64>().unwrap()).sum();
    assert_eq!(total, 1000);
}

#[test]
fn train_eval_and_simulate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "train.bin", &["--set", "challenge_rate=0.01"]);
    let val = gen(dir.path(), "val.bin", &["--seed", "4", "--set", "challenge_rate=0.01"]);
    let before: Vec<Vec<u8>> = [&data, &val].iter().map(|p| std::fs::read(p).unwrap()).collect();
    let model = path(dir.path(), "m.qpn");
    let o = ok(afat(&["train", "--data", &data, "--val", &val, "--out", &model, "--epochs", "1"]));
    assert!(stdout(&o).contains("best epoch: 1"));
    let rows = csv::Reader::from_path(format!("{model}.metrics.csv")).unwrap().records().count();
    assert_eq!(rows, 1);

    let o = ok(afat(&["eval", "--model", &model, "--data", &val]));
    let text = stdout(&o);
    let samples = field(&text, "samples") as usize;
    let counts: usize = text
        .lines()
        .filter_map(|l| {
            let mut cells = l.split_whitespace();
            matches!(cells.next(), Some("success" | "lost"))
                .then(|| cells.map(|n| n.parse::<usize>().ok()).sum::<Option<usize>>())
                .flatten()
        })
        .sum();
    assert_eq!(counts, samples);
    assert!(samples > 0);

    let sim = |name: &str| {
        let out = path(dir.path(), name);
        let o = ok(afat(&["simulate", "--model", &model, "--sequences", "2", "--frames-per-seq", "60", "--seed", "8", "--out", &out]));
        (stdout(&o), std::fs::read(&out).unwrap())
    };
    let (s1, c1) = sim("r1.csv");
    let (s2, c2) = sim("r2.csv");
    assert_eq!((&s1, &c1), (&s2, &c2));
    assert_eq!(field(&s1, "frames"), 120.0);
    let header = String::from_utf8_lossy(&c1).lines().next().unwrap().to_string();
    assert_eq!(header, "sequence,frame,base_iou,afat_iou,verdict");

    let after: Vec<Vec<u8>> = [&data, &val].iter().map(|p| std::fs::read(p).unwrap()).collect();
    assert_eq!(before, after);
}

#[test]
fn missing_validation_set_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.bin", &[]);
    let o = afat(&["train", "--data", &data, "--out", &path(dir.path(), "m.qpn")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn window_mismatch_is_a_contract_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.bin", &[]);
    let short = gen(dir.path(), "k10.bin", &["--window", "10"]);
    let model = path(dir.path(), "m.qpn");
    ok(afat(&["train", "--data", &data, "--val", &data, "--out", &model, "--epochs", "1"]));
    let o = afat(&["eval", "--model", &model, "--data", &short]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn oracle_simulation_never_trails_the_base_tracker() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "r.csv");
    let o = ok(afat(&["simulate", "--oracle-qpn", "--sequences", "10", "--seed", "5", "--out", &out]));
    let text = stdout(&o);
    for key in ["sequences", "frames", "mean_base_iou", "mean_afat_iou", "base_success_auc", "afat_success_auc", "detections", "detection_rate"] {
        field(&text, key);
    }
    assert!(field(&text, "afat_success_auc") >= field(&text, "base_success_auc"));
}

#[test]
fn grad_check_reports_every_group_and_catches_a_fault() {
    let o = ok(afat(&["grad-check", "--probes", "3"]));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    let rows = &lines[1..lines.len() - 1];
    assert!(rows.len() > 10);
    assert!(rows.iter().all(|l| l.ends_with(" ok")), "{text}");
    assert!(text.contains("grad-check: passed"));

    let o = afat(&["grad-check", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(7));
}

#[test]
fn unreadable_inputs_map_to_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.bin", &[]);
    let missing: PathBuf = dir.path().join("nope.qpn");
    let o = afat(&["eval", "--model", &missing.to_string_lossy(), "--data", &data]);
    assert_eq!(o.status.code(), Some(3));
    let o = afat(&["eval", "--model", &data, "--data", &data]);
    assert_eq!(o.status.code(), Some(4));
}
