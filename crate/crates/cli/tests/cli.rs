use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn cml(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cml"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn manifest(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_writes_ascii_bits_with_sidecars() {
    let dir = TempDir::new().unwrap();
    let out = cml(dir.path(), &["gen", "--map", "logistic", "--mu", "4", "--rows", "8", "--cols", "8",
        "--epsilon", "0.1", "--z", "64", "--bits", "80000", "--format", "ascii", "--out", "bits.txt"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let bits = fs::read(dir.path().join("bits.txt")).unwrap();
    assert_eq!(bits.len(), 80_000);
    assert!(bits.iter().all(|&c| c == b'0' || c == b'1'));

    let provenance = fs::read_to_string(dir.path().join("bits.txt.provenance")).unwrap();
    assert!(provenance.contains("b.init=seed:1+0.001"));
    let m = manifest(&dir.path().join("bits.txt.manifest.json"));
    assert_eq!(m["command"], "gen");
    assert_eq!(m["params"]["bits"], 80000);
    assert_eq!(m["seeds"], serde_json::json!([1]));
    assert!(m["duration_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn gen_is_deterministic_and_formats_agree() {
    let dir = TempDir::new().unwrap();
    let base = ["gen", "--bits", "10000", "--seed-a", "5", "--seed-b", "9"];
    for (format, name) in [("ascii", "a1"), ("ascii", "a2"), ("raw", "r")] {
        let mut args = base.to_vec();
        args.extend(["--format", format, "--out", name]);
        assert!(cml(dir.path(), &args).status.success());
    }
    let a1 = fs::read(dir.path().join("a1")).unwrap();
    assert_eq!(a1, fs::read(dir.path().join("a2")).unwrap());
    let raw = fs::read(dir.path().join("r")).unwrap();
    assert_eq!(raw.len(), 1250);
    let unpacked: Vec<u8> = (0..10_000).map(|i| b'0' + ((raw[i / 8] >> (7 - i % 8)) & 1)).collect();
    assert_eq!(unpacked, a1);
}

#[test]
fn replay_reproduces_output() {
    let dir = TempDir::new().unwrap();
    let out = cml(dir.path(), &["gen", "--map", "tent", "--bits", "5000", "--perturb", "0.002", "--out", "first"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = cml(dir.path(), &["replay", "first.manifest.json", "--out", "second"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        fs::read(dir.path().join("first")).unwrap(),
        fs::read(dir.path().join("second")).unwrap()
    );
    assert!(dir.path().join("second.manifest.json").exists());
}

#[test]
fn multiple_streams_are_distinct() {
    let dir = TempDir::new().unwrap();
    let out = cml(dir.path(), &["gen", "--bits", "2048", "--streams", "3", "--jobs", "2", "--out", "s"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let streams: Vec<Vec<u8>> = (0..3).map(|i| fs::read(dir.path().join(format!("s.{i}"))).unwrap()).collect();
    assert_ne!(streams[0], streams[1]);
    assert_ne!(streams[1], streams[2]);
    assert_eq!(manifest(&dir.path().join("s.manifest.json"))["seeds"], serde_json::json!([1, 2, 3]));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let bad_epsilon = cml(dir.path(), &["gen", "--epsilon", "1.5", "--out", "x"]);
    assert_eq!(bad_epsilon.status.code(), Some(1));
    assert!(stderr(&bad_epsilon).contains("epsilon"));
    assert_eq!(cml(dir.path(), &["gen", "--map", "cubic", "--out", "x"]).status.code(), Some(1));
    assert_eq!(cml(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(cml(dir.path(), &["--help"]).status.code(), Some(0));

    let same_seeds = cml(dir.path(), &["gen", "--seed-a", "4", "--seed-b", "4", "--out", "x"]);
    assert_eq!(same_seeds.status.code(), Some(2));
    assert!(stderr(&same_seeds).contains("16 windows"));

    let calm = cml(dir.path(), &["le", "--mu", "2"]);
    assert_eq!(calm.status.code(), Some(2));

    let missing_dir = cml(dir.path(), &["gen", "--bits", "64", "--out", "no/such/dir/x"]);
    assert_eq!(missing_dir.status.code(), Some(3));
    assert_eq!(cml(dir.path(), &["replay", "missing.json"]).status.code(), Some(3));
}

#[test]
fn le_default_spectrum() {
    let dir = TempDir::new().unwrap();
    let out = cml(dir.path(), &["le", "--local-iterations", "200000", "--out", "le.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("le.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "r,l,lambda,le");
    assert_eq!(lines.len(), 65);
    let m = manifest(&dir.path().join("le.csv.manifest.json"));
    let first_le: f64 = lines[1].split(',').nth(3).unwrap().parse().unwrap();
    assert_eq!(first_le, m["results"]["le_f"].as_f64().unwrap());
    assert!((first_le - std::f64::consts::LN_2).abs() < 0.01);
}

#[test]
fn le_single_node_and_numeric() {
    let dir = TempDir::new().unwrap();
    let out = cml(dir.path(), &["le", "--rows", "1", "--cols", "1", "--out", "one.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("one.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);

    let out = cml(dir.path(), &["le", "--map", "tent", "--rows", "4", "--cols", "4", "--numeric",
        "--iterations", "20000", "--out", "tent.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("tent.csv")).unwrap();
    assert!(csv.starts_with("r,l,lambda,le,le_numeric\n"));
    assert_eq!(csv.lines().count(), 17);
    let m = manifest(&dir.path().join("tent.csv.manifest.json"));
    assert!(m["results"]["max_deviation"].as_f64().unwrap() <= 0.05);
}

#[test]
fn bifurcation_size_contract() {
    let dir = TempDir::new().unwrap();
    let out = cml(dir.path(), &["bifurcation", "--mu-min", "2.5", "--mu-max", "4.0", "--steps", "300",
        "--points", "4", "--discard", "100", "--out", "bif.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("bif.csv")).unwrap();
    assert!(csv.starts_with("mu,value\n"));
    assert_eq!(csv.lines().count(), 1 + 300 * 4);

    let bad = cml(dir.path(), &["bifurcation", "--map", "tent", "--mu-min", "1", "--mu-max", "3"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn hist_of_constant_input_and_orbit() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("values.txt"), "0.42\n0.42\n0.42\n\n0.42\n").unwrap();
    let out = cml(dir.path(), &["hist", "--input", "values.txt", "--bins", "10", "--out", "h.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("h.csv")).unwrap();
    let counts: Vec<u64> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(counts.iter().filter(|&&c| c > 0).count(), 1);
    assert_eq!(counts[4], 4);

    let out = cml(dir.path(), &["hist", "--points", "20000", "--bins", "10", "--out", "orbit.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("orbit.csv")).unwrap();
    assert!(csv.starts_with("bin_lo,bin_hi,count\n"));
    let total: u64 = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, 20_000);

    fs::write(dir.path().join("bad.txt"), "0.5\nhalf\n").unwrap();
    assert_eq!(cml(dir.path(), &["hist", "--input", "bad.txt"]).status.code(), Some(1));
}

#[test]
fn test_command_writes_table() {
    let dir = TempDir::new().unwrap();
    let out = cml(dir.path(), &["test", "--sequences", "100", "--length", "20000", "--out", "table.csv",
        "--details", "per_sequence.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = fs::read_to_string(dir.path().join("table.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "sub_test,p_value,pass_rate,p_value_t,pass");
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["frequency", "block_frequency", "runs", "serial_1", "serial_2"]);
    let details = fs::read_to_string(dir.path().join("per_sequence.csv")).unwrap();
    assert_eq!(details.lines().count(), 1 + 5 * 100);
    let m = manifest(&dir.path().join("table.csv.manifest.json"));
    assert_eq!(m["results"]["sequences"], 100);
    assert_eq!(m["seeds"].as_array().unwrap().len(), 100);
}

#[test]
fn test_command_reads_ascii_and_skips_short_sub_tests() {
    let dir = TempDir::new().unwrap();
    assert!(cml(dir.path(), &["gen", "--bits", "12000", "--format", "ascii", "--out", "bits.txt"]).status.success());
    let out = cml(dir.path(), &["test", "--input", "bits.txt", "--sequences", "100", "--length", "120",
        "--block-len", "128", "--out", "t.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("skipping block_frequency"));
    let table = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 4);

    let too_few = cml(dir.path(), &["test", "--input", "bits.txt", "--sequences", "100", "--length", "1000"]);
    assert_eq!(too_few.status.code(), Some(1));
}

#[test]
fn bench_single_repeat() {
    let dir = TempDir::new().unwrap();
    let out = cml(dir.path(), &["bench", "--bytes", "4096", "--repeats", "1", "--out", "bench.json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = manifest(&dir.path().join("bench.json"));
    assert_eq!(report["min_ms"], report["max_ms"]);
    assert_eq!(report["min_ms"], report["mean_ms"]);
    assert!(report["bits_per_second"].as_f64().unwrap() > 0.0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("bits/s"));
    assert!(dir.path().join("bench.json.manifest.json").exists());
}

#[test]
fn stdout_output_gets_default_manifest() {
    let dir = TempDir::new().unwrap();
    let out = cml(dir.path(), &["le", "--rows", "2", "--cols", "2", "--local-iterations", "20000"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("r,l,lambda,le\n"));
    assert!(dir.path().join("le.manifest.json").exists());

    let out = cml(dir.path(), &["le", "--rows", "2", "--cols", "2", "--manifest", "custom.json"]);
    assert!(out.status.success());
    assert!(dir.path().join("custom.json").exists());
}
