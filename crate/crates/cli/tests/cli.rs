use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DMatrix;
use vendi_cli::matrix_file::{encode_binary, encode_csv};

fn vendi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vendi")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, contents: &[u8]) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, contents).unwrap();
    p
}

/// `(q, score)` pairs from a CSV whose first two columns are q and score.
fn scores(csv: &str) -> Vec<(String, f64)> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let mut f = l.split(',');
            (f.next().unwrap().to_string(), f.next().unwrap().parse().unwrap())
        })
        .collect()
}

fn block_kernel(sizes: &[usize]) -> DMatrix<f64> {
    let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(i, &m)| std::iter::repeat_n(i, m)).collect();
    DMatrix::from_fn(labels.len(), labels.len(), |a, b| if labels[a] == labels[b] { 1.0 } else { 0.0 })
}

/// Deterministic unit-norm rows.
fn unit_embeddings(n: usize, d: usize) -> DMatrix<f64> {
    let mut e = DMatrix::from_fn(n, d, |i, j| {
        let t = ((i as f64 + 1.0) * 12.9898 + (j as f64 + 1.0) * 78.233).sin() * 43758.5453;
        t - t.floor() - 0.5
    });
    for mut row in e.row_iter_mut() {
        let norm = row.norm();
        row /= norm;
    }
    e
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn score_abundance_infinite_order() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "p.csv", b"0.5,0.25,0.25\n");
    let o = vendi(&["score", "--input", path_str(&f), "--kind", "abundance", "--q", "inf"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "q,score,support_count,method\ninf,2,3,exact\n");
}

#[test]
fn score_identity_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "k.bin", &encode_binary(&DMatrix::identity(5, 5)));
    let o = vendi(&["score", "--input", path_str(&f), "--kind", "kernel", "--q", "1"]);
    assert!(o.status.success());
    let s = scores(&stdout(&o));
    assert!((s[0].1 - 5.0).abs() < 1e-12);
}

#[test]
fn projected_embeddings_match_full_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let e = unit_embeddings(50, 8);
    let f = write(dir.path(), "e.bin", &encode_binary(&e));
    let full = vendi(&["score", "--input", path_str(&f), "--q", "1"]);
    let projected = vendi(&["score", "--input", path_str(&f), "--q", "1", "--m", "8"]);
    assert!(full.status.success() && projected.status.success(), "{}{}", String::from_utf8_lossy(&full.stderr), String::from_utf8_lossy(&projected.stderr));
    let (a, b) = (scores(&stdout(&full))[0].1, scores(&stdout(&projected))[0].1);
    assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    assert!(stdout(&projected).contains("projected(8)"));
}

#[test]
fn json_report() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "k.csv", encode_csv(&block_kernel(&[3, 1]), None).as_bytes());
    let out = dir.path().join("r.json");
    let o = vendi(&[
        "score", "--input", path_str(&f), "--kind", "kernel", "--q", "0,inf", "--format", "json", "--out",
        path_str(&out),
    ]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v[0]["q"], 0.0);
    assert_eq!(v[0]["uninformative"], true);
    assert_eq!(v[1]["q"], "inf");
    assert!((v[1]["score"].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-12);
    assert_eq!(v[1]["support_count"], 2);
}

#[test]
fn sweep_block_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "k.csv", encode_csv(&block_kernel(&[3, 1]), None).as_bytes());
    let o = vendi(&["sweep", "--input", path_str(&f), "--kind", "kernel", "--q-grid", "inf,2,1,0.5"]);
    assert!(o.status.success());
    let s = scores(&stdout(&o));
    // Hill numbers of (3/4, 1/4).
    let p: [f64; 2] = [0.75, 0.25];
    let expected = [
        p.iter().map(|x| x.sqrt()).sum::<f64>().powi(2),
        (-p.iter().map(|x| x * x.ln()).sum::<f64>()).exp(),
        1.0 / p.iter().map(|x| x * x).sum::<f64>(),
        1.0 / 0.75,
    ];
    let labels: Vec<&str> = s.iter().map(|x| x.0.as_str()).collect();
    assert_eq!(labels, ["0.5", "1", "2", "inf"]);
    for ((_, got), (want, printed)) in s.iter().zip(expected.iter().zip([1.8660, 1.7548, 1.6, 1.3333])) {
        assert!((got - want).abs() < 1e-12);
        assert!((got - printed).abs() < 5e-5);
    }
}

#[test]
fn sweep_uniform_spectrum_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "k.bin", &encode_binary(&DMatrix::identity(6, 6)));
    let o = vendi(&["sweep", "--input", path_str(&f), "--kind", "kernel", "--q-grid", "0:3:7,inf"]);
    assert!(o.status.success());
    let s = scores(&stdout(&o));
    assert_eq!(s.len(), 8);
    assert!(s.iter().all(|(_, v)| (v - 6.0).abs() < 1e-12));
}

#[test]
fn sweep_column_is_non_increasing() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "e.csv", encode_csv(&unit_embeddings(30, 4), None).as_bytes());
    for kernel in ["linear", "rbf:0.7", "cosine"] {
        let o = vendi(&["sweep", "--input", path_str(&f), "--kernel", kernel, "--q-grid", "0:4:21,inf"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let s = scores(&stdout(&o));
        assert!(s.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-10), "{kernel}: {s:?}");
    }
}

#[test]
fn csv_and_binary_inputs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let e = unit_embeddings(12, 3);
    let mut header = String::from("a,b,c\n");
    header.push_str(&encode_csv(&e, None));
    let c = write(dir.path(), "e.csv", header.as_bytes());
    let b = write(dir.path(), "e.bin", &encode_binary(&e));
    let args = |p: &Path| vendi(&["score", "--input", path_str(p), "--kernel", "rbf:2", "--q", "0.5,1,inf"]);
    assert_eq!(stdout(&args(&c)), stdout(&args(&b)));
}

#[test]
fn subsampling_is_deterministic_under_seed() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "e.bin", &encode_binary(&unit_embeddings(40, 5)));
    let run = |seed: &str| vendi(&["score", "--input", path_str(&f), "--kernel", "rbf", "--m", "10", "--seed", seed]);
    assert_eq!(stdout(&run("3")), stdout(&run("3")));
    assert!(stdout(&run("3")).contains("subsampled(10)"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ragged = write(d, "ragged.csv", b"1,2\n3\n");
    let truncated = write(d, "t.bin", &encode_binary(&DMatrix::identity(3, 3))[..40]);
    let asym = write(d, "asym.csv", b"1,0.5\n0.2,1\n");
    let indefinite = write(d, "ind.csv", b"1,0.9,0.9\n0.9,1,-0.9\n0.9,-0.9,1\n");
    let unnormalized = write(d, "p.csv", b"0.5,0.6\n");
    let ok = write(d, "k.csv", b"1,0\n0,1\n");
    let metrics = write(d, "m.csv", b"a,flat,c\n1,2,3\n2,2,1\n3,2,2\n");
    let missing = d.join("missing.csv");

    let cases: Vec<(Vec<&str>, i32)> = vec![
        (vec!["score", "--input", path_str(&ragged), "--kind", "kernel"], 2),
        (vec!["score", "--input", path_str(&truncated), "--kind", "kernel"], 2),
        (vec!["score", "--input", path_str(&asym), "--kind", "kernel"], 2),
        (vec!["score", "--input", path_str(&missing)], 2),
        (vec!["score", "--input", path_str(&unnormalized), "--kind", "abundance"], 2),
        (vec!["score", "--input", path_str(&indefinite), "--kind", "kernel"], 3),
        (vec!["score", "--input", path_str(&ok), "--kind", "kernel", "--q", "-1"], 4),
        (vec!["score", "--input", path_str(&ok), "--kind", "matrix"], 4),
        (vec!["score", "--input", path_str(&ok), "--kernel", "gaussian"], 4),
        (vec!["score", "--input", path_str(&ok), "--kind", "kernel", "--m", "5"], 4),
        (vec!["sweep", "--input", path_str(&ok), "--kind", "kernel", "--q-grid", "2:1:3"], 4),
        (vec!["scenario", "--panel", "F"], 4),
        (vec!["frobnicate"], 4),
        (vec![], 4),
        (vec!["correlate", "--input", path_str(&metrics)], 6),
        (vec!["--help"], 0),
        (vec!["--version"], 0),
    ];
    for (args, code) in cases {
        let o = vendi(&args);
        assert_eq!(o.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        if code > 0 {
            assert!(!o.stderr.is_empty());
        }
    }
    let o = vendi(&["correlate", "--input", path_str(&metrics)]);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("'flat'") && err.lines().count() == 1, "{err}");
}

#[test]
fn thread_count_variable() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "k.csv", b"1,0\n0,1\n");
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_vendi"))
            .args(["score", "--input", path_str(&f), "--kind", "kernel"])
            .env("VENDI_THREADS", threads)
            .output()
            .unwrap()
    };
    assert!(run("2").status.success());
    assert_eq!(run("zero").status.code(), Some(4));
}

#[test]
fn scenario_tables() {
    let o = vendi(&["scenario", "--panel", "A", "--q", "0.1,1,inf"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 7 * 3);
    for r in &rows {
        let k: f64 = r[1].trim_start_matches("K=").parse().unwrap();
        assert!((r[4].parse::<f64>().unwrap() - k).abs() < 1e-8);
    }

    let o = vendi(&["scenario", "--panel", "b", "--q", "0.1,0.5,1"]);
    let text = stdout(&o);
    let last: Vec<f64> =
        text.lines().filter(|l| l.starts_with("B,20+20+1+1,")).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(last.len(), 3);
    assert!(last[0] >= last[1] && last[1] >= last[2]);
    assert!(last[0] - last[2] > 0.5);

    assert_eq!(stdout(&vendi(&["scenario", "--panel", "E", "--seed", "5"])), stdout(&vendi(&["scenario", "--panel", "E", "--seed", "5"])));
}

#[test]
fn correlate_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "m.csv", b"x,neg,other\n1,-1,3\n2,-2,1\n3,-3,4\n4,-4,1\n");
    let o = vendi(&["correlate", "--input", path_str(&f)]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "metric,x,neg,other");
    let row: Vec<f64> = lines[1].split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[0], 1.0);
    assert!((row[1] + 1.0).abs() < 1e-15);
    assert!(row[2].abs() <= 1.0);
}

fn sample(dir: &Path, config: &str) -> Output {
    let cfg = write(dir, "run.json", config.as_bytes());
    let out = dir.join("out");
    vendi(&["sample-dw", "--config", path_str(&cfg), "--out-dir", path_str(&out)])
}

const OUTPUTS: [&str; 4] = ["trajectory.csv", "transitions.csv", "free_energy.csv", "oracle.txt"];

#[test]
fn sample_dw_zero_steps_records_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let o = sample(dir.path(), r#"{"seed": 1, "total_steps": 0}"#);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 16);
    assert!(traj.lines().skip(1).all(|l| l.starts_with("0,100,")));
    let fe = fs::read_to_string(out.join("free_energy.csv")).unwrap();
    assert!(fe.lines().nth(1).unwrap().starts_with("no-unbiased-samples,"));
    let oracle: f64 = fs::read_to_string(out.join("oracle.txt")).unwrap().trim().parse().unwrap();
    assert!(oracle > 0.0);
}

#[test]
fn sample_dw_is_byte_deterministic() {
    let config = r#"{"seed": 2, "total_steps": 3000, "anneal_rate": 0.001, "record_stride": 50}"#;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(sample(a.path(), config).status.success());
    assert!(sample(b.path(), config).status.success());
    for name in OUTPUTS {
        assert_eq!(fs::read(a.path().join("out").join(name)).unwrap(), fs::read(b.path().join("out").join(name)).unwrap(), "{name}");
    }
    let fe = fs::read_to_string(a.path().join("out/free_energy.csv")).unwrap();
    let fields: Vec<&str> = fe.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(fields[0], "ok");
    assert_eq!(fields[1], "1050");
    let oracle: f64 = fields[8].parse().unwrap();
    let from_file: f64 = fs::read_to_string(a.path().join("out/oracle.txt")).unwrap().trim().parse().unwrap();
    assert_eq!(oracle, from_file);
}

#[test]
fn sample_dw_desk_protocol_completes() {
    let dir = tempfile::tempdir().unwrap();
    let o = sample(dir.path(), r#"{"seed": 0}"#);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let transitions = fs::read_to_string(dir.path().join("out/transitions.csv")).unwrap();
    let counts: Vec<u64> = transitions.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(counts.len(), 2001);
    assert!(counts.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn sample_dw_divergence_aborts_without_output() {
    // The untuned full-length schedule keeps the force near its maximum for
    // 10^5 steps; with this seed a replica is ejected within 600 steps.
    let dir = tempfile::tempdir().unwrap();
    let o = sample(dir.path(), r#"{"seed": 0, "anneal_rate": 0.00001}"#);
    assert_eq!(o.status.code(), Some(5));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("diverged") && err.lines().count() == 1, "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn sample_dw_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sample(dir.path(), r#"{"seed": 0, "steps": 10}"#).status.code(), Some(2));
    assert_eq!(sample(dir.path(), r#"{"replicas": 0}"#).status.code(), Some(4));
    assert_eq!(sample(dir.path(), r#"{"total_steps": 100, "analysis_start": 0}"#).status.code(), Some(4));
}
