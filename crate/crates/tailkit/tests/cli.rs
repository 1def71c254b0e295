use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tailkit::core::data::EmbeddingSet;
use tailkit::core::math::Matrix;
use tailkit::embeddings::save_embeddings_binary;

fn tailkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tailkit")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = tailkit(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn manifest(output: &Path) -> Value {
    let mut m = output.as_os_str().to_owned();
    m.push(".manifest.json");
    read_json(Path::new(&m))
}

fn csv_row(p: &Path, row: usize) -> Vec<String> {
    let text = fs::read_to_string(p).unwrap();
    text.lines().nth(row).unwrap().split(',').map(String::from).collect()
}

#[test]
fn help_on_every_subcommand() {
    for sub in [
        "preprocess",
        "weights",
        "sample",
        "train",
        "predict",
        "merge-tta",
        "ensemble",
        "gate",
        "zeroshot",
        "eval",
        "demo",
    ] {
        let out = tailkit(&[sub, "--help"]);
        assert_eq!(code(&out), 0, "{sub}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{sub}");
    }
}

#[test]
fn usage_errors_exit_one() {
    let out = tailkit(&["gate", "--bogus"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&tailkit(&["frobnicate"])), 1);
    assert_eq!(code(&tailkit(&[])), 1);
}

#[test]
fn missing_input_exits_two_and_bad_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    assert_eq!(
        code(&tailkit(&[
            "eval",
            "--scores",
            "/nonexistent.csv",
            "--labels",
            "/nonexistent.csv",
            "--out",
            s(&out)
        ])),
        2
    );

    let y = write(dir.path(), "y.csv", "id,a\nx0,2\n");
    let out = tailkit(&["weights", "--labels", s(&y), "--out", s(&dir.path().join("w.csv"))]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-binary label"));
}

#[test]
fn gate_halves_abnormal_scores() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "p.csv",
        "id,Normal,Effusion,Nodule\nx1,0.75,0.8,0.3\nx2,0,0.5,1\n",
    );
    let out = dir.path().join("g.csv");
    ok(&["gate", "--in", s(&p), "--alpha-ng", "0.5", "--out", s(&out)]);
    assert_eq!(csv_row(&out, 0), ["id", "Normal", "Effusion", "Nodule"]);
    assert_eq!(csv_row(&out, 1), ["x1", "0.75", "0.4", "0.15"]);
    assert_eq!(csv_row(&out, 2), ["x2", "0", "0.5", "1"]);
    let m = manifest(&out);
    assert_eq!(m["subcommand"], "gate");
    assert_eq!(m["config"]["alpha_ng"], 0.5);
    assert_eq!(m["config"]["normal_class"], "Normal");
    assert_eq!(m["input_digests"].as_object().unwrap().len(), 1);

    let out = tailkit(&[
        "gate",
        "--in",
        s(&p),
        "--normal-class",
        "Healthy",
        "--out",
        s(&dir.path().join("h.csv")),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn eval_writes_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let scores = write(
        dir.path(),
        "s.csv",
        "id,a,b\nx1,0.9,0.2\nx2,0.8,0.6\nx3,0.7,0.1\nx4,0.6,0.4\n",
    );
    // Rows in a different order: evaluation matches by id.
    let labels = write(dir.path(), "y.csv", "id,a,b\nx4,0,0\nx3,1,0\nx2,0,0\nx1,1,0\n");
    let out = dir.path().join("report.json");
    ok(&["eval", "--scores", s(&scores), "--labels", s(&labels), "--out", s(&out)]);
    let r = read_json(&out);
    let ap = r["per_class"][0]["ap"].as_f64().unwrap();
    assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    assert!(r["per_class"][1]["ap"].is_null());
    assert!(!r["skipped_classes"].as_array().unwrap().is_empty());
    assert!((r["macro"]["map"].as_f64().unwrap() - ap).abs() < 1e-12);
    assert_eq!(manifest(&out)["config"]["ece_bins"], 15);
}

#[test]
fn weights_table() {
    let dir = tempfile::tempdir().unwrap();
    let y = write(dir.path(), "y.csv", "id,head,tail\nx0,1,0\nx1,1,1\nx2,1,0\nx3,0,0\n");
    let out = dir.path().join("w.csv");
    ok(&["weights", "--labels", s(&y), "--out", s(&out)]);
    assert_eq!(csv_row(&out, 0), ["id", "n_c", "f_c", "eff_c", "w_c", "m_c"]);
    let head = csv_row(&out, 1);
    let tail = csv_row(&out, 2);
    assert_eq!((head[1].as_str(), head[2].as_str()), ("3", "0.75"));
    assert_eq!(tail[1], "1");
    assert!((tail[5].parse::<f64>().unwrap() - 0.1 * 3f64.ln()).abs() < 1e-15);
    assert_eq!(head[5], "0");
    let (wh, wt): (f64, f64) = (head[4].parse().unwrap(), tail[4].parse().unwrap());
    assert!(wt > wh && ((wh + wt) / 2.0 - 1.0).abs() < 1e-12);

    let margins = write(dir.path(), "m.csv", "class,margin\nhead,0.25\ntail,0.5\n");
    let out2 = dir.path().join("w2.csv");
    ok(&[
        "weights",
        "--labels",
        s(&y),
        "--margins",
        s(&margins),
        "--out",
        s(&out2),
    ]);
    assert_eq!(csv_row(&out2, 2)[5], "0.5");

    let empty = write(dir.path(), "e.csv", "id,a,b\nx0,1,0\n");
    assert_eq!(code(&tailkit(&["weights", "--labels", s(&empty), "--out", s(&out)])), 1);
}

#[test]
fn sample_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = String::from("id,common,rare,never\n");
    for i in 0..2000 {
        body.push_str(&format!("x{i},1,{},0\n", u8::from(i == 0)));
    }
    let y = write(dir.path(), "y.csv", &body);
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = ok(&[
            "sample",
            "--labels",
            s(&y),
            "--seed",
            seed,
            "--epochs",
            "3",
            "--out",
            s(&out),
        ]);
        (
            fs::read_to_string(&out).unwrap(),
            String::from_utf8_lossy(&o.stderr).into_owned(),
            out,
        )
    };
    let (a, log, out) = run("5", "a.jsonl");
    let (b, _, _) = run("5", "b.jsonl");
    let (c, _, _) = run("6", "c.jsonl");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(log.contains("never"), "{log}");
    let lines: Vec<Value> = a.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    for l in &lines {
        let idx = l["indices"].as_array().unwrap();
        assert_eq!(l["epoch_len"].as_u64().unwrap() as usize, idx.len());
        // The rare sample has r = min(10, sqrt(0.001 / 0.0005)) = sqrt(2).
        let rare = idx.iter().filter(|v| v.as_u64() == Some(0)).count();
        assert!(rare == 1 || rare == 2);
    }
    assert_eq!(manifest(&out)["config"]["empty_classes"][0], "never");
}

#[test]
fn train_predict_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "spec.json",
        r#"{"n_samples": 300, "n_classes": 6, "feature_dim": 8, "seed": 3}"#,
    );
    let model = dir.path().join("model.json");
    let data = dir.path().join("data");
    ok(&[
        "train",
        "--synth-spec",
        s(&spec),
        "--epochs",
        "3",
        "--model-out",
        s(&model),
        "--data-dir",
        s(&data),
    ]);
    let m = read_json(&model);
    assert_eq!(m["class_names"].as_array().unwrap().len(), 6);
    assert_eq!(manifest(&model)["config"]["loss_trace"].as_array().unwrap().len(), 3);

    let probs = dir.path().join("p.csv");
    ok(&[
        "predict",
        "--model",
        s(&model),
        "--features",
        s(&data.join("heldout_features.csv")),
        "--kind",
        "probabilities",
        "--out",
        s(&probs),
    ]);
    let logits = dir.path().join("z.csv");
    ok(&[
        "predict",
        "--model",
        s(&model),
        "--features",
        s(&data.join("heldout_features.csv")),
        "--out",
        s(&logits),
    ]);
    let merged = dir.path().join("merged.csv");
    ok(&["merge-tta", "--in", s(&logits), "--out", s(&merged)]);
    assert_eq!(fs::read(&merged).unwrap(), fs::read(&probs).unwrap());

    let report = dir.path().join("r.json");
    ok(&[
        "eval",
        "--scores",
        s(&probs),
        "--labels",
        s(&data.join("heldout_labels.csv")),
        "--out",
        s(&report),
    ]);
    let map = read_json(&report)["macro"]["map"].as_f64().unwrap();
    assert!(map > 0.0 && map <= 1.0);
}

#[test]
fn merge_and_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let v1 = write(dir.path(), "v1.csv", "id,a\nx1,0\n");
    let v2 = write(dir.path(), "v2.csv", &format!("id,a\nx1,{}\n", 3f64.ln()));
    let merged = dir.path().join("m.csv");
    ok(&["merge-tta", "--in", s(&v1), s(&v2), "--out", s(&merged)]);
    let p: f64 = csv_row(&merged, 1)[1].parse().unwrap();
    assert!((p - 0.625).abs() < 1e-12);

    let a = write(dir.path(), "a.csv", "id,c\nx1,0.2\nx2,1\n");
    let b = write(dir.path(), "b.csv", "id,c\nx2,0\nx1,0.7\n");
    let out = dir.path().join("e.csv");
    ok(&["ensemble", "--in", s(&a), s(&b), "--out", s(&out)]);
    let e1: f64 = csv_row(&out, 1)[1].parse().unwrap();
    let e2: f64 = csv_row(&out, 2)[1].parse().unwrap();
    assert!((e1 - 0.5).abs() < 1e-12 && (e2 - 0.4).abs() < 1e-12);
    assert_eq!(manifest(&out)["config"]["normalized_weights"][1], 0.6);
    assert_eq!(
        code(&tailkit(&[
            "ensemble",
            "--in",
            s(&a),
            s(&b),
            "--weights",
            "1",
            "--out",
            s(&out)
        ])),
        1
    );
}

#[test]
fn zeroshot_from_prompt_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let set = |rows: Vec<Vec<f64>>| {
        let n = rows.len();
        EmbeddingSet::new(
            (0..n).map(|i| format!("r{i}")).collect(),
            Matrix::from_rows(&rows).unwrap(),
        )
        .unwrap()
    };
    save_embeddings_binary(dir.path().join("bulla.emb"), &set(vec![vec![2.0, 0.0], vec![0.0, 3.0]])).unwrap();
    save_embeddings_binary(dir.path().join("goiter.emb"), &set(vec![vec![-1.0, 0.0]])).unwrap();
    write(
        dir.path(),
        "manifest.json",
        r#"{"classes": [{"name": "Bulla", "embeddings": "bulla.emb"}, {"name": "Goiter", "prompts": ["g"], "embeddings": "goiter.emb"}]}"#,
    );
    let images = dir.path().join("img.emb");
    let img = EmbeddingSet::new(vec!["scan".into()], Matrix::from_rows(&[vec![5.0, 0.0]]).unwrap()).unwrap();
    save_embeddings_binary(&images, &img).unwrap();
    let out = dir.path().join("zs.csv");
    ok(&[
        "zeroshot",
        "--images",
        s(&images),
        "--prompts",
        s(dir.path()),
        "--out",
        s(&out),
    ]);
    assert_eq!(csv_row(&out, 0), ["id", "Bulla", "Goiter"]);
    let row = csv_row(&out, 1);
    assert_eq!(row[0], "scan");
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let bulla: f64 = row[1].parse().unwrap();
    let goiter: f64 = row[2].parse().unwrap();
    assert!((bulla - sig(2.5)).abs() < 1e-12);
    assert!((goiter - sig(-5.0)).abs() < 1e-12);
    assert_eq!(manifest(&out)["input_digests"].as_object().unwrap().len(), 4);
}

#[test]
fn preprocess_writes_one_tensor_per_view() {
    let dir = tempfile::tempdir().unwrap();
    let mut pgm = b"P5\n6 4\n65535\n".to_vec();
    for i in 0..24u16 {
        pgm.extend_from_slice(&(i * 2000).to_be_bytes());
    }
    let input = dir.path().join("cxr.pgm");
    fs::write(&input, pgm).unwrap();
    let out = dir.path().join("views");
    ok(&[
        "preprocess",
        "--input",
        s(&input),
        "--task",
        "1",
        "--size",
        "8",
        "--out-dir",
        s(&out),
    ]);
    for t in ["identity", "hflip", "rot+5", "rot-5", "zoom1.1", "zoom0.9"] {
        let data = fs::read(out.join(format!("cxr.{t}.f32"))).unwrap();
        assert_eq!(data.len(), 3 * 8 * 8 * 4, "{t}");
        let side = read_json(&out.join(format!("cxr.{t}.json")));
        assert_eq!(side["shape"], serde_json::json!([3, 8, 8]));
    }
    let m = read_json(&out.join("cxr.manifest.json"));
    assert_eq!(m["config"]["size"], 8);

    let out2 = dir.path().join("zs");
    ok(&[
        "preprocess",
        "--input",
        s(&input),
        "--task",
        "2",
        "--size",
        "4",
        "--out-dir",
        s(&out2),
    ]);
    let names: Vec<_> = fs::read_dir(&out2).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 3, "{names:?}");

    let bad = write(dir.path(), "bad.pgm", "P2\n2 2\n1023\n0 0 0 0\n");
    let o = tailkit(&["preprocess", "--input", s(&bad), "--out-dir", s(&out2)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unsupported maxval"));
}

#[test]
fn json_logs_are_json() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "p.csv", "id,Normal,a\nx1,0.5,0.5\n");
    let out = ok(&[
        "--json-logs",
        "gate",
        "--in",
        s(&p),
        "--out",
        s(&dir.path().join("g.csv")),
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line: Value = serde_json::from_str(stderr.lines().next().unwrap()).unwrap();
    assert_eq!(line["level"], "info");
}

#[test]
fn identical_runs_give_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "spec.json",
        r#"{"n_samples": 200, "n_classes": 4, "feature_dim": 5}"#,
    );
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        ok(&[
            "train",
            "--synth-spec",
            s(&spec),
            "--sampler",
            "uniform",
            "--loss",
            "bce",
            "--epochs",
            "2",
            "--seed",
            "4",
            "--model-out",
            s(out),
        ]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}
