use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tinyintent"));
    c.env("RUST_LOG", "warn").env("TINYINTENT_THREADS", "1");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn tinyintent")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const FLIGHT: [&str; 6] = [
    "show me flights from boston to denver",
    "i want to fly to dallas tomorrow",
    "list flights from denver to atlanta",
    "what flights leave boston in the morning",
    "find a flight to seattle",
    "flights from dallas to boston please",
];
const FARE: [&str; 6] = [
    "how much is a ticket to denver",
    "what is the cheapest fare to boston",
    "fare from dallas to seattle",
    "show me the price of a ticket",
    "how expensive is the fare to atlanta",
    "cheapest ticket from boston",
];
const GROUND: [&str; 6] = [
    "ground transportation in denver",
    "is there a taxi at the boston airport",
    "rental cars in dallas",
    "how do i get downtown from the airport",
    "limousine service in atlanta",
    "train to the city from seattle airport",
];

fn write_split(dir: &Path, rows: &[(&str, &str)]) {
    fs::create_dir_all(dir).unwrap();
    let text: String = rows.iter().map(|(t, _)| format!("{t}\n")).collect();
    let labels: String = rows.iter().map(|(_, l)| format!("{l}\n")).collect();
    fs::write(dir.join("seq.in"), text).unwrap();
    fs::write(dir.join("label"), labels).unwrap();
}

fn dataset(root: &Path) -> PathBuf {
    let data = root.join("data");
    let mut all = Vec::new();
    for (group, label) in [(FLIGHT, "flight"), (FARE, "airfare"), (GROUND, "ground_service")] {
        all.extend(group.iter().map(|t| (*t, label)));
    }
    write_split(&data.join("train"), &all);
    let held: Vec<_> = all.iter().step_by(3).copied().collect();
    write_split(&data.join("valid"), &held);
    write_split(&data.join("test"), &held);
    data
}

const SMALL: [&str; 10] = [
    "--config",
    "epochs=3",
    "--config",
    "lstm_hidden=16",
    "--config",
    "word_emb_dim=8",
    "--config",
    "filter_counts=4,4,4",
    "--config",
    "char_emb_dim=5",
];

fn train(tmp: &Path, data: &Path, name: &str, extra: &[&str]) -> (PathBuf, Output) {
    let model = tmp.join(name);
    let mut args = vec![
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--seed",
        "3",
    ];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    let out = run(&args);
    (model, out)
}

fn golden_keys(name: &str) -> Vec<String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    let mut keys: Vec<String> = fs::read_to_string(path).unwrap().lines().map(str::to_owned).collect();
    keys.sort();
    keys
}

fn keys(v: &Value) -> Vec<String> {
    let mut k: Vec<String> = v.as_object().expect("JSON object").keys().cloned().collect();
    k.sort();
    k
}

#[test]
fn train_quantize_eval_infer_bench() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(tmp.path());
    let (model, out) = train(tmp.path(), &data, "m.odic", &["--runs", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(model.exists());

    let summary = fs::read_to_string(tmp.path().join("m.odic.summary.jsonl")).unwrap();
    let lines: Vec<Value> = summary.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    for run in &lines[..2] {
        assert_eq!(keys(run), golden_keys("train_run.keys"));
    }
    assert_eq!(keys(&lines[2]), golden_keys("train_summary.keys"));
    assert_eq!(lines[2]["runs"], 2);
    assert_eq!(lines[0]["seed"], 3);
    assert_eq!(lines[1]["seed"], 4);
    let mean = lines[2]["mean_percent"].as_str().unwrap();
    assert_eq!(mean.split('.').nth(1).map(str::len), Some(2), "{mean}");

    let qmodel = tmp.path().join("m.q.odic");
    let out = run(&[
        "quantize",
        "--in",
        model.to_str().unwrap(),
        "--out",
        qmodel.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(fs::metadata(&qmodel).unwrap().len() < fs::metadata(&model).unwrap().len());

    for m in [&model, &qmodel] {
        let out = run(&[
            "eval",
            "--model",
            m.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--split",
            "test",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let s = stdout(&out);
        let pct = s.split("accuracy: ").nth(1).unwrap().split('%').next().unwrap();
        assert_eq!(pct.split('.').nth(1).unwrap().len(), 2, "{s}");
        let pct: f64 = pct.parse().unwrap();
        assert!((0.0..=100.0).contains(&pct));
    }

    let args = [
        "infer",
        "--model",
        qmodel.to_str().unwrap(),
        "--text",
        "cheapest fare to denver",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&b));
    let table: Vec<f64> = stdout(&a)
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().last().unwrap().parse().unwrap())
        .collect();
    assert_eq!(table.len(), 3);
    assert!((table.iter().sum::<f64>() - 1.0).abs() < 2e-3);

    let jsonl = tmp.path().join("bench.jsonl");
    let out = run(&[
        "bench",
        "--model",
        qmodel.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--warmup",
        "5",
        "--repeat",
        "2",
        "--json",
        jsonl.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_str(fs::read_to_string(&jsonl).unwrap().trim()).unwrap();
    assert_eq!(keys(&report), golden_keys("bench.keys"));
    assert_eq!(report["n_inferences"], 12);
    assert!(report["peak_alloc_bytes"].as_u64().unwrap() > 0);
    assert!(stdout(&out).contains("Inference time"));
}

#[test]
fn training_is_deterministic_for_a_seed() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(tmp.path());
    let (a, oa) = train(tmp.path(), &data, "a.odic", &[]);
    let (b, ob) = train(tmp.path(), &data, "b.odic", &[]);
    assert!(oa.status.success() && ob.status.success());
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn user_errors_exit_with_2() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(tmp.path());
    let missing = tmp.path().join("nowhere");

    let (_, out) = train(tmp.path(), &missing, "x.odic", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nowhere"), "{}", stderr(&out));

    let (_, out) = train(tmp.path(), &data, "x.odic", &["--config", "lstm_units=3"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let (_, out) = train(tmp.path(), &data, "x.odic", &["--config", "epochs"]);
    assert_eq!(out.status.code(), Some(2));

    let (model, out) = train(tmp.path(), &data, "ok.odic", &[]);
    assert!(out.status.success());
    let out = run(&[
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--split",
        "dev",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["infer", "--model", model.to_str().unwrap(), "--text", "  "]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&[
        "infer",
        "--model",
        data.join("train/label").to_str().unwrap(),
        "--text",
        "hi",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["infer", "--model", model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}
