//! The trace CSV files are consumed by the plotting scripts, so their layout
//! is checked here end to end through the CLI.

use std::fs;
use std::path::Path;

use vilab::cli::{main_with_args, EXIT_OK};
use vilab::trace::{read_csv, CSV_HEADER};

fn run_cli(args: &[&str]) -> i32 {
    let mut sink = Vec::new();
    let argv = std::iter::once("vilab").chain(args.iter().copied());
    main_with_args(argv, &mut sink)
}

fn csv_files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    files
}

#[test]
fn header_and_columns_match_the_contract() {
    assert_eq!(CSV_HEADER, "iter,fevals,alpha,grad_norm,min_grad_norm_sq,gap,dist,wall_ms");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let code = run_cli(&[
        "compare",
        "--problem",
        "matrix-game",
        "--d",
        "8",
        "--solver",
        "graal,agraal,eg",
        "--iters",
        "50",
        "--record-every",
        "10",
        "--out",
        out,
    ]);
    assert_eq!(code, EXIT_OK);
    let files = csv_files(dir.path());
    assert_eq!(files.len(), 3);
    for f in &files {
        let text = fs::read_to_string(f).unwrap();
        assert_eq!(text.lines().next(), Some(CSV_HEADER));
        let rows = read_csv(&text).unwrap();
        let iters: Vec<usize> = rows.iter().map(|r| r.iter).collect();
        assert_eq!(iters, vec![0, 10, 20, 30, 40, 50], "{}", f.display());
        for w in rows.windows(2) {
            assert!(w[1].fevals > w[0].fevals);
            assert!(w[1].min_grad_norm_sq <= w[0].min_grad_norm_sq);
        }
        // Matrix games carry an exact gap but no known solution. The
        // ergodic average is empty at iteration 0, so its gap is blank.
        assert!(rows[0].gap.is_none());
        assert!(rows[1..].iter().all(|r| r.gap.is_some()));
        assert!(rows.iter().all(|r| r.dist.is_none()));
    }
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn optional_columns_are_left_empty() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let code = run_cli(&["run", "--problem", "polar", "--solver", "agraal", "--iters", "20", "--no-gap", "--out", out]);
    assert_eq!(code, EXIT_OK);
    let file = &csv_files(dir.path())[0];
    let text = fs::read_to_string(file).unwrap();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 8);
        assert_eq!(fields[5], "", "gap column should be empty: {line}");
        assert!(!fields[6].is_empty(), "the polar game has a known solution");
    }
}

#[test]
fn values_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        run_cli(&["run", "--problem", "qp", "--d", "6", "--solver", "graal", "--iters", "30", "--out", out]),
        EXIT_OK
    );
    let text = fs::read_to_string(&csv_files(dir.path())[0]).unwrap();
    let rows = read_csv(&text).unwrap();
    let rewritten: String =
        std::iter::once(CSV_HEADER.to_string()).chain(rows.iter().map(|r| r.to_csv_line())).map(|l| l + "\n").collect();
    assert_eq!(rewritten, text);
}

#[test]
fn malformed_files_are_rejected() {
    assert!(read_csv("iter,alpha\n0,1\n").is_err());
    assert!(read_csv(&format!("{CSV_HEADER}\n0,1,0.1\n")).is_err());
    assert!(read_csv(&format!("{CSV_HEADER}\n0,1,x,1,1,,,0\n")).is_err());
}
