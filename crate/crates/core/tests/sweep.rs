use std::fs;

use learned_hash::harness::{run_sweep, runs_dir, Method, SweepConfig, TeacherSpec};
use learned_hash::synth::{generate, SynthConfig};

fn data() -> learned_hash::synth::SynthDataset {
    let cfg = SynthConfig {
        vocab_sizes: vec![800, 600, 400],
        group_counts: vec![8, 8, 8],
        samples_per_day: 1500,
        seed: 21,
        ..Default::default()
    };
    generate(&cfg).unwrap().0
}

fn config() -> SweepConfig {
    SweepConfig {
        teachers: vec![TeacherSpec {
            dim: 2,
            ..Default::default()
        }],
        methods: vec![
            Method::Learned,
            Method::Modulo,
            Method::Qr,
            Method::Fdh(0.01),
            Method::Full,
        ],
        fractions: vec![0.1],
        seeds: vec![0, 1],
        cutoff_rows: 500,
        ..Default::default()
    }
}

#[test]
fn resume_after_partial_loss_is_identical() {
    let ds = data();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let first = run_sweep(&config(), &ds, &out).unwrap();
    assert_eq!(first.rows.len(), 10);
    assert!(first.rows.iter().all(|r| r.is_ok()));
    let csv = fs::read(&out).unwrap();

    let mut artifacts: Vec<_> = fs::read_dir(runs_dir(&out))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    artifacts.sort();
    for p in artifacts.iter().step_by(2) {
        fs::remove_file(p).unwrap();
    }
    fs::remove_file(&out).unwrap();
    let second = run_sweep(&config(), &ds, &out).unwrap();
    assert_eq!(second.executed, 5);
    assert_eq!(second.resumed, 5);
    assert_eq!(fs::read(&out).unwrap(), csv);
}

#[test]
fn thread_count_does_not_change_results() {
    let ds = data();
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    run_sweep(
        &SweepConfig {
            threads: Some(1),
            ..config()
        },
        &ds,
        &a,
    )
    .unwrap();
    run_sweep(
        &SweepConfig {
            threads: Some(3),
            ..config()
        },
        &ds,
        &b,
    )
    .unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn small_vocabularies_fall_back_to_identity() {
    let ds = data();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let rows = run_sweep(&config(), &ds, &out).unwrap().rows;
    let full = rows.iter().find(|r| r.method == "full").unwrap();
    let modulo = rows.iter().find(|r| r.method == "modulo").unwrap();
    // the 400-id feature sits below the cutoff and keeps all its rows
    assert_eq!(modulo.rows_total, 80 + 60 + 400);
    assert_eq!(full.rows_total, 1800);
    assert_eq!(full.frac, 1.0);
}
