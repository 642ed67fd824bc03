use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use portcycle::dataset::{write_predictions, DatasetReader};

fn portcycle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_portcycle"))
        .args(args)
        .env("PORTCYCLE_THREADS", "1")
        .output()
        .expect("binary runs")
}

const SMALL: [&str; 12] = [
    "--n-x", "4", "--n-y", "2", "--o1", "2", "--o2", "2", "--subcarriers", "6", "--beams", "2",
];

fn generate(dir: &Path, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["generate", "--samples", "12", "--snr-list", "inf,0,-5", "--rx", "2", "--out", out];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    portcycle(&args)
}

fn rows(csv_text: &str) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    r.records().map(|x| x.unwrap()).collect()
}

#[test]
fn generate_then_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("ds");
    let out = generate(&data, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("manifest.json"));

    let reader = DatasetReader::open(&data).unwrap();
    assert_eq!(reader.len(), 12);
    assert_eq!(reader.manifest().header.antenna.n_t(), 16);

    let out = portcycle(&["evaluate", "--dataset", data.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let base = rows(&text);
    assert_eq!(base.len(), 3 * 2);

    // the labels themselves as predictions
    let labels: Vec<_> = (0..reader.len())
        .map(|i| (i as u64, reader.read_label(i).unwrap()))
        .collect();
    let pred = tmp.path().join("pred.json");
    write_predictions(&pred, 2, &labels).unwrap();
    let csv_out = tmp.path().join("eval.csv");
    let out = portcycle(&[
        "evaluate",
        "--dataset",
        data.to_str().unwrap(),
        "--predictions",
        pred.to_str().unwrap(),
        "--out",
        csv_out.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&fs::read_to_string(&csv_out).unwrap());
    assert_eq!(table.len(), 3 * 3);
    let get = |source: &str, snr: &str| {
        table
            .iter()
            .find(|r| &r[0] == source && &r[1] == snr)
            .unwrap_or_else(|| panic!("row {source} {snr}"))
            .clone()
    };
    for snr in ["inf", "0", "-5"] {
        let p = get("predicted", snr);
        assert_eq!(&p[2], "4");
        for col in 7..13 {
            assert_eq!(p[col].parse::<f64>().unwrap(), 1.0, "column {col}");
        }
    }
    // noiseless full-port CSI at the label time reproduces the label
    let full = get("baseline-full", "inf");
    let p = get("predicted", "inf");
    assert_eq!(&full[3], &p[3]);
    assert_eq!(full[9].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn thread_count_does_not_change_output() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(generate(&a, &[]).status.success());
    assert!(generate(&b, &["--threads", "3"]).status.success());
    for f in ["manifest.json", "measurements.f32", "labels.i32"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();

    let bad = tmp.path().join("bad");
    let out = generate(&bad, &["--rho-x", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert!(!bad.exists());

    let out = portcycle(&["generate", "--samples", "2", "--beams", "5", "--out", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!bad.exists());

    let missing = tmp.path().join("nothing-here");
    let out = portcycle(&["evaluate", "--dataset", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    let data = tmp.path().join("ds");
    assert!(generate(&data, &[]).status.success());
    let pred = tmp.path().join("pred.json");
    fs::write(&pred, "[]").unwrap();
    let out = portcycle(&[
        "evaluate",
        "--dataset",
        data.to_str().unwrap(),
        "--predictions",
        pred.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));

    let out = portcycle(&["generate", "--samples"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn variation_table() {
    let tmp = tempfile::tempdir().unwrap();
    let csv_out = tmp.path().join("var.csv");
    let mut args = vec![
        "variation",
        "--snr-list",
        "-10,inf",
        "--samples",
        "5",
        "--rx",
        "2",
        "--clusters",
        "1",
        "--speed-kmh",
        "0",
        "--out",
        csv_out.to_str().unwrap(),
    ];
    args.extend_from_slice(&SMALL);
    let out = portcycle(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&fs::read_to_string(&csv_out).unwrap());
    assert_eq!(table.len(), 2);
    let clean = table.iter().find(|r| &r[0] == "inf").unwrap();
    assert_eq!(&clean[1], "beamset");
    assert_eq!(&clean[3], "5");
    assert_eq!(clean[4].parse::<f64>().unwrap(), 0.0);

    let out = portcycle(&["variation", "--rho-x", "1", "--rho-y", "1", "--samples", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_table() {
    let out = portcycle(&["bench", "--sizes", "16,32", "--repeats", "1", "--latent-dim", "8"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(table.len(), 2);
    assert_eq!(&table[0][0], "16");
    assert!(table.iter().all(|r| r[1].parse::<f64>().unwrap() > 0.0 && r[2].parse::<f64>().unwrap() > 0.0));
}
