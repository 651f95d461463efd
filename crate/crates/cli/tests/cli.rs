use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bitext_core::EmbeddingMatrix;
use tempfile::TempDir;

fn bitext(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bitext")).args(args).output().expect("spawn bitext")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_emb(dir: &TempDir, name: &str, dim: usize, rows: &[Vec<f32>]) -> PathBuf {
    let path = dir.path().join(name);
    EmbeddingMatrix::from_rows(dim, rows).unwrap().save(&path).unwrap();
    path
}

fn grid(n: usize) -> Vec<Vec<f32>> {
    (0..n).map(|i| vec![(i as f32 * 0.7).cos(), (i as f32 * 0.7).sin(), 0.1 * i as f32]).collect()
}

#[test]
fn xsim_self_alignment_reports_zero() {
    let dir = TempDir::new().unwrap();
    let a = write_emb(&dir, "a.emb", 3, &grid(8));
    let out = bitext(&["xsim", "--src", p(&a), "--tgt", p(&a), "--quiet"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("0.00%"), "{stdout}");
}

#[test]
fn missing_flag_is_a_usage_error() {
    let out = bitext(&["xsim", "--src", "a.emb"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn dimension_mismatch_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let a = write_emb(&dir, "a.emb", 3, &grid(4));
    let b = write_emb(&dir, "b.emb", 2, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
    let out = bitext(&["--json-errors", "xsim", "--src", p(&a), "--tgt", p(&b)]);
    assert_eq!(out.status.code(), Some(2));
    let line = String::from_utf8(out.stderr).unwrap();
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(v["error"], "DimMismatch");
}

#[test]
fn bad_magic_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.emb");
    fs::write(&a, b"NOPE0000000000000000").unwrap();
    let out = bitext(&["--json-errors", "xsim", "--src", p(&a), "--tgt", p(&a)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("BadMagic"));
}

#[test]
fn preprocess_writes_kept_lines_report_and_manifest() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.txt");
    fs::write(&input, "hello world\nhello world\n12345 !!\nплохо\nanother line\n").unwrap();
    let out_path = dir.path().join("out.txt");
    let report = dir.path().join("report.json");
    let out = bitext(&[
        "preprocess",
        "--in",
        p(&input),
        "--out",
        p(&out_path),
        "--scripts",
        "Latn",
        "--report",
        p(&report),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(&out_path).unwrap(), "hello world\nanother line\n");
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["input_count"], 5);
    assert_eq!(r["kept_count"], 2);
    assert_eq!(r["rejected_by_rule"]["dedup"], 1);
    assert_eq!(r["rejected_by_rule"]["ratio"], 1);
    assert_eq!(r["rejected_by_rule"]["script"], 1);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out.txt.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "preprocess");
    let digest = manifest["inputs"][p(&input)].as_str().unwrap().to_string();
    assert_eq!(digest.len(), 64);

    // The digest follows the input contents.
    fs::write(&input, "changed\n").unwrap();
    bitext(&["preprocess", "--in", p(&input), "--out", p(&out_path), "--quiet"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out.txt.manifest.json")).unwrap()).unwrap();
    assert_ne!(manifest["inputs"][p(&input)].as_str().unwrap(), digest);
}

#[test]
fn invalid_preprocess_config_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.txt");
    fs::write(&input, "x\n").unwrap();
    let out = bitext(&["preprocess", "--in", p(&input), "--out", p(&dir.path().join("o")), "--max-ratio", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn index_emits_ranked_tsv() {
    let dir = TempDir::new().unwrap();
    let a = write_emb(&dir, "a.emb", 2, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
    let b = write_emb(&dir, "b.emb", 2, &[vec![0.0, 2.0], vec![3.0, 0.1], vec![1.0, 1.0]]);
    let ids = dir.path().join("ids.txt");
    fs::write(&ids, "q0\nq1\n").unwrap();
    let out = bitext(&["index", "--src", p(&a), "--tgt", p(&b), "--k", "2", "--src-ids", p(&ids), "--quiet"]);
    assert_eq!(out.status.code(), Some(0));
    let lines: Vec<String> = String::from_utf8(out.stdout).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("q0\t1\t1\t"));
    assert!(lines[1].starts_with("q0\t2\t2\t"));
    assert!(lines[2].starts_with("q1\t1\t0\t1.000000"));
}

#[test]
fn mining_is_reproducible_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let rows = grid(30);
    let a = write_emb(&dir, "a.emb", 3, &rows);
    let shifted: Vec<Vec<f32>> = rows.iter().map(|r| r.iter().map(|v| v + 0.01).collect()).collect();
    let b = write_emb(&dir, "b.emb", 3, &shifted);
    let text: String = (0..30).map(|i| format!("sentence {i}\n")).collect();
    let ta = dir.path().join("a.txt");
    let tb = dir.path().join("b.txt");
    fs::write(&ta, &text).unwrap();
    fs::write(&tb, &text).unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out_path = dir.path().join(format!("pairs{threads}.tsv"));
        let out = bitext(&[
            "--threads",
            threads,
            "--quiet",
            "mine",
            "--src",
            p(&a),
            "--tgt",
            p(&b),
            "--src-text",
            p(&ta),
            "--tgt-text",
            p(&tb),
            "--margin",
            "ratio",
            "--out",
            p(&out_path),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(fs::read(&out_path).unwrap());
        let side: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(format!("pairs{threads}.tsv.json"))).unwrap()).unwrap();
        assert_eq!(side["config"]["threshold"], 1.06);
        assert!(side["union_count"].as_u64().unwrap() >= side["forward_count"].as_u64().unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let pairs = bitext_core::mine::read_pairs(&outputs[0][..]).unwrap();
    assert!(!pairs.is_empty());
    assert!(pairs.iter().all(|l| l.src == l.tgt));
}

#[test]
fn train_then_embed_round_trip() {
    let dir = TempDir::new().unwrap();
    let parallel = dir.path().join("pairs.tsv");
    let lines: String = (0..20)
        .map(|i| format!("lo{} ka{} mi\tw{} w{} end\n", i % 5, i % 7, i % 5, i % 7))
        .collect();
    fs::write(&parallel, &lines).unwrap();
    let mono = dir.path().join("mono.txt");
    fs::write(&mono, "lo1 ka2 mi\nlo3 ka4 mi\n").unwrap();
    let mut metrics = Vec::new();
    for run in 0..2 {
        let model = dir.path().join(format!("s{run}.model"));
        let m = dir.path().join(format!("m{run}.jsonl"));
        let out = bitext(&[
            "--seed", "4", "--quiet", "train", "--parallel", p(&parallel), "--mono", p(&mono), "--teacher", "synthetic",
            "--vocab-size", "60", "--width", "8", "--heads", "2", "--steps", "5", "--batch-size", "4", "--curriculum", "0.5",
            "--out", p(&model), "--metrics", p(&m),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        metrics.push(fs::read_to_string(&m).unwrap());
    }
    assert_eq!(metrics[0], metrics[1]);
    let first: serde_json::Value = serde_json::from_str(metrics[0].lines().next().unwrap()).unwrap();
    for key in ["step", "cosine_loss", "mlm_loss", "total"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    assert_eq!(metrics[0].lines().count(), 5);

    let text = dir.path().join("text.txt");
    fs::write(&text, "lo1 ka2 mi\nlo4 ka6 mi\nlo0 ka0 mi\n").unwrap();
    let emb = dir.path().join("text.emb");
    let out = bitext(&["embed-toy", "--model", p(&dir.path().join("s0.model")), "--in", p(&text), "--out", p(&emb), "--normalize"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = EmbeddingMatrix::load_headered(&emb).unwrap();
    assert_eq!((m.count(), m.dim()), (3, 8));
    assert!(m.is_normalized());
}

#[test]
fn train_rejects_malformed_teacher_spec() {
    let dir = TempDir::new().unwrap();
    let parallel = dir.path().join("pairs.tsv");
    fs::write(&parallel, "a\tb\n").unwrap();
    let out = bitext(&["train", "--parallel", p(&parallel), "--teacher", "nonsense", "--out", p(&dir.path().join("m"))]);
    assert_eq!(out.status.code(), Some(1));
}
