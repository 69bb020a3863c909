//! End-to-end checks of the command-line interface: exit codes, file
//! outputs, determinism, and the documented examples.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gptm"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

// small 12-document corpus over 6 words, three loose clusters
fn write_demo_corpus(dir: &Path) -> PathBuf {
    let path = dir.join("docword.txt");
    let mut entries = Vec::new();
    for doc in 0..12 {
        let base = (doc / 4) * 2; // words {0,1}, {2,3}, {4,5} per cluster
        entries.push((doc + 1, base + 1, 3 + doc % 2));
        entries.push((doc + 1, base + 2, 2));
        entries.push((doc + 1, (base + 3) % 6 + 1, 1));
    }
    let mut text = format!("12\n6\n{}\n", entries.len());
    for (d, w, c) in entries {
        text.push_str(&format!("{d} {w} {c}\n"));
    }
    fs::write(&path, text).unwrap();
    path
}

fn write_labels(dir: &Path) -> PathBuf {
    let path = dir.join("labels.txt");
    let labels: Vec<String> = (0..12).map(|i| (i / 4).to_string()).collect();
    fs::write(&path, labels.join("\n") + "\n").unwrap();
    path
}

#[test]
fn kernel_nn_writes_pd_kernel_and_prints_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let docword = write_demo_corpus(dir.path());
    let out_csv = dir.path().join("kernel.csv");
    let out = run(&[
        "kernel",
        "--nn",
        "-k",
        "3",
        "--gamma",
        "1",
        "--sigma2",
        "1",
        docword.to_str().unwrap(),
        out_csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(out_csv.exists());
    let text = stdout(&out);
    assert!(text.contains("chosen c:"), "{text}");
    assert!(text.contains("smallest eigenvalue estimate:"), "{text}");
}

#[test]
fn kernel_ml_missing_constraints_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let docword = write_demo_corpus(dir.path());
    let out = run(&[
        "kernel",
        "--ml",
        "--constraints",
        dir.path().join("none.txt").to_str().unwrap(),
        docword.to_str().unwrap(),
        dir.path().join("out.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
}

#[test]
fn kernel_nn_oversized_k_exits_1_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let docword = write_demo_corpus(dir.path());
    let out = run(&[
        "kernel",
        "--nn",
        "-k",
        "500",
        docword.to_str().unwrap(),
        dir.path().join("out.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("k must be < D"), "{}", stderr(&out));
}

#[test]
fn train_is_byte_identical_across_reruns_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let docword = write_demo_corpus(dir.path());
    let files = ["beta.csv", "sigma.csv", "F.csv", "lambda.csv", "nu2.csv", "elbo_trace.csv"];
    let mut snapshots: Vec<Vec<Vec<u8>>> = Vec::new();
    for (run_idx, threads) in ["1", "1", "4"].iter().enumerate() {
        let out_dir = dir.path().join(format!("ckpt{run_idx}"));
        let out = run(&[
            "train",
            docword.to_str().unwrap(),
            "--kernel",
            "identity",
            "--topics",
            "2",
            "--seed",
            "7",
            "--max-iters",
            "4",
            "--threads",
            threads,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
        snapshots.push(files.iter().map(|f| fs::read(out_dir.join(f)).unwrap()).collect());
    }
    assert_eq!(snapshots[0], snapshots[1], "same seed must be byte-identical");
    assert_eq!(snapshots[0], snapshots[2], "thread count must not change outputs");
}

#[test]
fn train_variant_siki_recorded_in_meta() {
    let dir = tempfile::tempdir().unwrap();
    let docword = write_demo_corpus(dir.path());
    let out_dir = dir.path().join("ckpt");
    let out = run(&[
        "train",
        docword.to_str().unwrap(),
        "--kernel",
        "identity",
        "--topics",
        "2",
        "--variant",
        "siki",
        "--max-iters",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let meta = fs::read_to_string(out_dir.join("meta.json")).unwrap();
    assert!(meta.contains("\"variant\": \"siki\""), "{meta}");
    // Σ stays the identity
    let sigma = fs::read_to_string(out_dir.join("sigma.csv")).unwrap();
    assert_eq!(sigma.trim(), "1,0\n0,1");
}

#[test]
fn train_dimension_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let docword = write_demo_corpus(dir.path());
    let kernel = dir.path().join("k.csv");
    fs::write(&kernel, "1,0\n0,1\n").unwrap(); // 2x2 vs 12 docs
    let out = run(&[
        "train",
        docword.to_str().unwrap(),
        "--kernel",
        kernel.to_str().unwrap(),
        "--topics",
        "2",
        "--out",
        dir.path().join("ckpt").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
}

fn write_uniform_single_topic_checkpoint(dir: &Path, v: usize, d: usize) {
    fs::create_dir_all(dir).unwrap();
    let beta: Vec<String> = (0..v).map(|_| (1.0 / v as f64).to_string()).collect();
    fs::write(dir.join("beta.csv"), beta.join(",") + "\n").unwrap();
    fs::write(dir.join("sigma.csv"), "1\n").unwrap();
    let zeros: Vec<String> = (0..d).map(|_| "0".to_string()).collect();
    fs::write(dir.join("F.csv"), zeros.join(",") + "\n").unwrap();
    let lam: String = (0..d).map(|_| "0\n").collect();
    fs::write(dir.join("lambda.csv"), &lam).unwrap();
    let nu: String = (0..d).map(|_| "1\n").collect();
    fs::write(dir.join("nu2.csv"), &nu).unwrap();
    let meta = format!(
        r#"{{
  "n_topics": 1,
  "vocab_size": {v},
  "num_docs": {d},
  "variant": "full",
  "seed": 0,
  "final_elbo": 0.0,
  "iterations": 0,
  "line_search_failures": 0,
  "config": {{ "max_em_iters": 50, "em_rel_tol": 1e-6, "estep_max_iters": 100, "estep_tol": 1e-8 }}
}}
"#
    );
    fs::write(dir.join("meta.json"), meta).unwrap();
}

#[test]
fn eval_uniform_single_topic_reports_perplexity_v() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("ckpt");
    write_uniform_single_topic_checkpoint(&ckpt, 6, 12);
    let test = write_demo_corpus(dir.path());
    let report = dir.path().join("report.txt");
    let embed = dir.path().join("embedding.csv");
    let out = run(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--test",
        test.to_str().unwrap(),
        "--kernel",
        "identity",
        "--report",
        report.to_str().unwrap(),
        "--embed",
        embed.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = fs::read_to_string(&report).unwrap();
    let perp: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("perplexity_conditional="))
        .expect("report has perplexity_conditional")
        .parse()
        .unwrap();
    assert!((perp - 6.0).abs() <= 1e-9 * 6.0, "perplexity {perp} != V=6");
    // one embedding row per test document
    let rows = fs::read_to_string(&embed).unwrap().lines().count();
    assert_eq!(rows, 12);
}

#[test]
fn eval_missing_checkpoint_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let test = write_demo_corpus(dir.path());
    let out = run(&[
        "eval",
        "--checkpoint",
        dir.path().join("nope").to_str().unwrap(),
        "--test",
        test.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn split_writes_partition_and_kernel_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let docword = write_demo_corpus(dir.path());
    let labels = write_labels(dir.path());
    // full-corpus ML kernel from labels
    let kernel_csv = dir.path().join("kernel.csv");
    let out = run(&[
        "kernel",
        "--ml",
        "--labels",
        labels.to_str().unwrap(),
        "--gamma",
        "0.5",
        "--c",
        "1.0",
        docword.to_str().unwrap(),
        kernel_csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let out_dir = dir.path().join("split");
    let out = run(&[
        "split",
        docword.to_str().unwrap(),
        "--fraction",
        "0.25",
        "--seed",
        "7",
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--labels",
        labels.to_str().unwrap(),
        "--kernel",
        kernel_csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    for f in [
        "train_docword.txt",
        "test_docword.txt",
        "train_indices.txt",
        "test_indices.txt",
        "train_labels.txt",
        "test_labels.txt",
        "kff.csv",
        "kstarf.csv",
        "kstarstar.csv",
    ] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    // rerun reproduces the same partition
    let out_dir2 = dir.path().join("split2");
    let out = run(&[
        "split",
        docword.to_str().unwrap(),
        "--fraction",
        "0.25",
        "--seed",
        "7",
        "--out-dir",
        out_dir2.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        fs::read(out_dir.join("test_indices.txt")).unwrap(),
        fs::read(out_dir2.join("test_indices.txt")).unwrap()
    );
}

#[test]
fn split_then_eval_with_carved_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let docword = write_demo_corpus(dir.path());
    let labels = write_labels(dir.path());
    let kernel_csv = dir.path().join("kernel.csv");
    assert_eq!(
        code(&run(&[
            "kernel",
            "--ml",
            "--labels",
            labels.to_str().unwrap(),
            "--gamma",
            "0.5",
            "--c",
            "1.0",
            docword.to_str().unwrap(),
            kernel_csv.to_str().unwrap(),
        ])),
        0
    );
    let out_dir = dir.path().join("split");
    assert_eq!(
        code(&run(&[
            "split",
            docword.to_str().unwrap(),
            "--fraction",
            "0.25",
            "--seed",
            "3",
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--kernel",
            kernel_csv.to_str().unwrap(),
        ])),
        0
    );
    let ckpt = dir.path().join("ckpt");
    assert_eq!(
        code(&run(&[
            "train",
            out_dir.join("train_docword.txt").to_str().unwrap(),
            "--kernel",
            out_dir.join("kff.csv").to_str().unwrap(),
            "--topics",
            "3",
            "--seed",
            "1",
            "--max-iters",
            "5",
            "--out",
            ckpt.to_str().unwrap(),
        ])),
        0
    );
    let out = run(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--test",
        out_dir.join("test_docword.txt").to_str().unwrap(),
        "--kff",
        out_dir.join("kff.csv").to_str().unwrap(),
        "--kstarf",
        out_dir.join("kstarf.csv").to_str().unwrap(),
        "--kstarstar",
        out_dir.join("kstarstar.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("perplexity_conditional="), "{text}");
    assert!(text.contains("perplexity_joint="), "{text}");
}

#[test]
fn tune_single_cell_grid_runs() {
    let dir = tempfile::tempdir().unwrap();
    let docword = write_demo_corpus(dir.path());
    let out = run(&[
        "tune",
        docword.to_str().unwrap(),
        "--kind",
        "nn",
        "--topics",
        "2",
        "--folds",
        "3",
        "--gammas",
        "1.0",
        "--sigma2s",
        "1.0",
        "--neighbors",
        "2",
        "--max-iters",
        "2",
        "--seed",
        "5",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("mean_perplexity="), "{text}");
    assert!(text.contains("best: ["), "{text}");
}

#[test]
fn tune_reports_invalid_cells_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let docword = write_demo_corpus(dir.path());
    let out = run(&[
        "tune",
        docword.to_str().unwrap(),
        "--kind",
        "nn",
        "--topics",
        "2",
        "--folds",
        "2",
        "--gammas",
        "1.0",
        "--sigma2s",
        "1.0",
        "--neighbors",
        "99,2",
        "--max-iters",
        "2",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("invalid:"), "{text}");
    assert!(text.contains("best: ["), "{text}");
}

#[test]
fn config_file_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let docword = write_demo_corpus(dir.path());
    let config = dir.path().join("run.conf");
    fs::write(&config, "# experiment defaults\ntopics=2\nseed=9\nmax-iters=2\n").unwrap();
    // config supplies topics; flag overrides seed
    let out_dir = dir.path().join("ckpt");
    let out = run(&[
        "train",
        docword.to_str().unwrap(),
        "--kernel",
        "identity",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "31",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let meta = fs::read_to_string(out_dir.join("meta.json")).unwrap();
    assert!(meta.contains("\"seed\": 31"), "flag must beat config: {meta}");
    assert!(meta.contains("\"n_topics\": 2"), "{meta}");
}

#[test]
fn usage_error_from_clap_exits_2() {
    let out = run(&["train"]); // missing required --out and positional
    assert_eq!(code(&out), 2);
}
