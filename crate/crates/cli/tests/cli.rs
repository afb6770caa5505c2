//! Drives the `hopeml` binary: stats, augment, run, predict and serve.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

const HOPE: [&str; 6] = ["hope", "strong", "together", "proud", "believe", "courage"];
const OTHER: [&str; 6] = ["boring", "video", "random", "game", "price", "phone"];
const SHARED: [&str; 5] = ["the", "so", "for", "her", "im"];

fn doc(i: usize, hope: bool) -> String {
    let own = if hope { &HOPE } else { &OTHER };
    let mut words = [own[i % 6], SHARED[i % 5], own[(i / 6 + 1) % 6], SHARED[(i / 5 + 2) % 5], own[(i * 7 + 3) % 6]];
    words.rotate_left(i % 5);
    words.join(" ")
}

fn write_split(path: &Path, n: usize, offset: usize) {
    let text: String = (0..n)
        .map(|i| {
            let hope = i % 3 == 0;
            format!("{}\t{}\n", doc(i + offset, hope), if hope { "Hope_speech" } else { "Non_hope_speech" })
        })
        .collect();
    std::fs::write(path, text).unwrap();
}

fn hopeml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hopeml")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Trains a tfidf + gnb model and returns its run directory.
fn trained(dir: &Path) -> PathBuf {
    write_split(&dir.join("train.tsv"), 90, 0);
    write_split(&dir.join("dev.tsv"), 30, 1000);
    write_split(&dir.join("test.tsv"), 30, 2000);
    let cfg = r#"{
        "task_mode": "two_way",
        "data": {"train": "train.tsv", "dev": "dev.tsv", "test": "test.tsv"},
        "featurizer": "tfidf",
        "model": "gnb",
        "grid": {"var_smoothing": [1e-9, 1e-3]},
        "seed": 3,
        "output_dir": "runs"
    }"#;
    std::fs::write(dir.join("exp.json"), cfg).unwrap();
    let out = hopeml(&["run", "--config", dir.join("exp.json").to_str().unwrap(), "--workers", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("macro"), "{}", stdout(&out));
    dir.join("runs/tfidf-no-pca/gnb")
}

#[test]
fn stats_prints_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("d.tsv");
    std::fs::write(&p, "a b\tHope_speech\nc\tNon_hope_speech\nd\tNon_hope_speech\nxx\tnot-English\n").unwrap();
    let out = hopeml(&["stats", "--data", p.to_str().unwrap(), "--task", "three_way"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v, serde_json::json!({"HopeSpeech": 1, "NonHopeSpeech": 2, "NonEnglish": 1}));
    let two = hopeml(&["stats", "--data", p.to_str().unwrap(), "--task", "two_way"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&two)).unwrap();
    assert_eq!(v, serde_json::json!({"HopeSpeech": 1, "NonHopeSpeech": 2}));
}

#[test]
fn augment_writes_targets() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("train.tsv");
    write_split(&data, 30, 0);
    let out_path = tmp.path().join("aug.tsv");
    let run = || {
        hopeml(&[
            "augment",
            "--data",
            data.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
            "--seed",
            "9",
            "--alpha",
            "0.2",
            "--target",
            "HopeSpeech=25",
        ])
    };
    assert!(run().status.success());
    let first = std::fs::read(&out_path).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(text.lines().filter(|l| l.ends_with("\tHope_speech")).count(), 25);
    assert_eq!(text.lines().filter(|l| l.ends_with("\tNon_hope_speech")).count(), 20);
    assert!(run().status.success());
    assert_eq!(std::fs::read(&out_path).unwrap(), first);
}

#[test]
fn errors_are_stage_tagged() {
    let out = hopeml(&["stats", "--data", "/nonexistent/file.tsv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error [stats]:"));
    let out = hopeml(&["run"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error [run]"));
}

fn predict_with_stdin(model: &Path, input: &str, extra: &[&str]) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_hopeml"))
        .args(["predict", "--model", model.to_str().unwrap()])
        .args(extra)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let input = input.to_owned();
    let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()).unwrap());
    let out = child.wait_with_output().unwrap();
    writer.join().unwrap();
    out
}

#[test]
fn predict_streams_one_label_per_line() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = trained(tmp.path());
    let model = run_dir.join("model.json");

    let empty = predict_with_stdin(&model, "", &[]);
    assert!(empty.status.success());
    assert!(empty.stdout.is_empty());
    assert!(String::from_utf8_lossy(&empty.stderr).contains("docs/s"));

    let lines: String = (0..10_000).map(|i| format!("{}\n", doc(i * 31 + 7, i % 2 == 0))).collect();
    let out = predict_with_stdin(&model, &lines, &[]);
    assert!(out.status.success());
    let labels: Vec<String> = stdout(&out).lines().map(str::to_owned).collect();
    assert_eq!(labels.len(), 10_000);
    assert!(labels.iter().all(|l| l == "HopeSpeech" || l == "NonHopeSpeech"));

    let out = predict_with_stdin(&model, "im so proud for her\n", &["--proba"]);
    let line = stdout(&out);
    let (label, scores) = line.trim_end().split_once('\t').unwrap();
    assert!(label == "HopeSpeech" || label == "NonHopeSpeech");
    let scores: Vec<f64> = serde_json::from_str(scores).unwrap();
    assert_eq!(scores.len(), 2);
    assert!((scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);

    let input = tmp.path().join("in.txt");
    std::fs::write(&input, "we believe together\r\nboring video game\n").unwrap();
    let out = hopeml(&["predict", "--model", model.to_str().unwrap(), "--input", input.to_str().unwrap()]);
    assert_eq!(stdout(&out), "HopeSpeech\nNonHopeSpeech\n");
}

#[test]
fn predict_rejects_mismatched_featurizer() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = trained(tmp.path());
    let feat: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("featurizer.json")).unwrap()).unwrap();
    let mut broken = feat.clone();
    broken["vocabulary"]["tokens"] = serde_json::json!(["only"]);
    broken["vocabulary"]["document_frequency"] = serde_json::json!([1]);
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, broken.to_string()).unwrap();
    let out = hopeml(&[
        "predict",
        "--model",
        run_dir.join("model.json").to_str().unwrap(),
        "--featurizer",
        bad.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error [predict]"));
}

struct Server {
    child: Child,
    base: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start_server(model: &Path, max_batch: usize) -> Server {
    let mut child = Command::new(env!("CARGO_BIN_EXE_hopeml"))
        .args(["serve", "--model", model.to_str().unwrap(), "--bind", "127.0.0.1:0", "--max-batch"])
        .arg(max_batch.to_string())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect("address line").to_string();
    Server { child, base: format!("http://{addr}") }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn serve_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = trained(tmp.path());
    let server = start_server(&run_dir.join("model.json"), 8);
    let client = reqwest::Client::new();

    let health = client.get(format!("{}/health", server.base)).send().await.unwrap();
    assert_eq!(health.status(), 200);

    let ok = client
        .post(format!("{}/predict", server.base))
        .json(&serde_json::json!({"texts": ["im so proud for her"]}))
        .send()
        .await
        .unwrap();
    assert_eq!(ok.status(), 200);
    let body: serde_json::Value = ok.json().await.unwrap();
    assert_eq!(body["labels"].as_array().unwrap().len(), 1);
    let row: Vec<f64> = serde_json::from_value(body["scores"][0].clone()).unwrap();
    assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);

    let bad = client.post(format!("{}/predict", server.base)).body("{not json").send().await.unwrap();
    assert_eq!(bad.status(), 400);
    let msg: serde_json::Value = bad.json().await.unwrap();
    assert!(msg["error"].as_str().unwrap().contains("malformed"));
    let wrong_shape = client.post(format!("{}/predict", server.base)).body(r#"{"text": "x"}"#).send().await.unwrap();
    assert_eq!(wrong_shape.status(), 400);

    let big = client
        .post(format!("{}/predict", server.base))
        .json(&serde_json::json!({"texts": vec!["hope"; 9]}))
        .send()
        .await
        .unwrap();
    assert_eq!(big.status(), 413);

    let empty: serde_json::Value = client
        .post(format!("{}/predict", server.base))
        .json(&serde_json::json!({"texts": []}))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(empty, serde_json::json!({"labels": [], "scores": []}));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 8)]
async fn serve_parallel_requests() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = trained(tmp.path());
    let server = start_server(&run_dir.join("model.json"), 4);
    let client = reqwest::Client::new();
    // Hope and non-hope texts alternate so crossed responses would show.
    let tasks: Vec<_> = (0..100)
        .map(|i| {
            let (client, url) = (client.clone(), format!("{}/predict", server.base));
            let text = if i % 2 == 0 { "we believe together hope" } else { "boring video game price" };
            tokio::spawn(async move {
                let r = client.post(url).json(&serde_json::json!({"texts": [text]})).send().await.unwrap();
                assert_eq!(r.status(), 200);
                (i, r.json::<serde_json::Value>().await.unwrap())
            })
        })
        .collect();
    for t in tasks {
        let (i, body) = t.await.unwrap();
        let labels = body["labels"].as_array().unwrap();
        assert_eq!(labels.len(), 1);
        assert_eq!(body["scores"].as_array().unwrap().len(), 1);
        let want = if i % 2 == 0 { "HopeSpeech" } else { "NonHopeSpeech" };
        assert_eq!(labels[0], want, "request {i}");
    }
}
