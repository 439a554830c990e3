use std::path::Path;
use std::process::{Command, Output};

use robust_bcs::io;

fn bcs(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bcs")).args(args).current_dir(dir).output().expect("spawn bcs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_sparse_signal(dir: &Path, seed: &str) {
    let o = bcs(&["generate", "--spec", "sparse:20", "--n", "512", "--seed", seed, "--out", "signal.txt"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn compress_reports_compression_ratio() {
    let dir = tempfile::tempdir().unwrap();
    write_sparse_signal(dir.path(), "1");
    let o = bcs(
        &["compress", "--signal", "signal.txt", "--k", "256", "--seed", "5", "--out-y", "y.bin", "--out-phi", "phi.bin"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("K=256 N=512 CR=2"), "{}", stdout(&o));
    assert_eq!(io::read_vector(&dir.path().join("y.bin")).unwrap().len(), 256);
    assert_eq!(io::read_matrix(&dir.path().join("phi.bin")).unwrap().shape(), (256, 512));
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = bcs(
        &["compress", "--signal", "no-such-file.txt", "--k", "8", "--seed", "1", "--out-y", "y", "--out-phi", "p"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no-such-file.txt"), "{}", stderr(&o));
}

#[test]
fn compress_then_reconstruct_recovers_sparse_segment() {
    let dir = tempfile::tempdir().unwrap();
    write_sparse_signal(dir.path(), "3");
    let o = bcs(
        &["compress", "--signal", "signal.txt", "--k", "150", "--seed", "8", "--out-y", "y.bin", "--out-phi", "phi.bin"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for extra in [&["--algorithm", "ipe"][..], &["--algorithm", "mpe", "--outer-tolerance", "1e-3"][..]] {
        let mut args = vec!["reconstruct", "--y", "y.bin", "--phi", "phi.bin", "--truth", "signal.txt", "--out", "r.txt"];
        args.extend_from_slice(extra);
        let o = bcs(&args, dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        let text = std::fs::read_to_string(dir.path().join("r.txt")).unwrap();
        let re: f64 = text
            .lines()
            .find_map(|l| l.strip_prefix("strict_re,"))
            .expect("strict_re row")
            .parse()
            .unwrap();
        assert!(re < 1e-3, "{extra:?}: RE {re}");
        let signal = io::parse_result_section(&text, "MEAN_SIGNAL").unwrap();
        assert_eq!(signal.len(), 512);
    }
}

#[test]
fn unknown_algorithm_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bcs(&["reconstruct", "--y", "y", "--phi", "p", "--out", "r", "--algorithm", "omp"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn mismatched_inputs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_sparse_signal(dir.path(), "4");
    let compress = |k: &str, y: &str, phi: &str| {
        bcs(&["compress", "--signal", "signal.txt", "--k", k, "--seed", "2", "--out-y", y, "--out-phi", phi], dir.path())
    };
    assert!(compress("40", "y40.bin", "p40.bin").status.success());
    assert!(compress("50", "y50.bin", "p50.bin").status.success());
    let o = bcs(&["reconstruct", "--y", "y40.bin", "--phi", "p50.bin", "--out", "r.txt"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    // A vector file is not a matrix file.
    let o = bcs(&["reconstruct", "--y", "y40.bin", "--phi", "y40.bin", "--out", "r.txt"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn sweep_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str, exec: &str| {
        let o = bcs(
            &[
                "sweep-cr", "--synthetic", "sparse:6", "--n", "64", "--segments", "6", "--seed", "17",
                "--k-list", "24,32", "--execution", exec, "--out", out,
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(dir.path().join(out)).unwrap()
    };
    let a = run("a.csv", "parallel");
    let b = run("b.csv", "parallel");
    let c = run("c.csv", "sequential");
    assert_eq!(a, b);
    assert_eq!(a, c);
    let text = String::from_utf8(a).unwrap();
    assert!(text.contains("# columns="));
    assert!(text.contains("# k_list=24;32"), "{text}");
}

#[test]
fn loss_sweep_runs_from_a_signal_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = bcs(&["generate", "--spec", "sparse:4", "--n", "64", "--segments", "3", "--seed", "2", "--out", "s.txt"], dir.path());
    assert!(o.status.success());
    let o = bcs(
        &[
            "sweep-loss", "--signal", "s.txt", "--n", "64", "--segments", "3", "--seed", "9", "--losses", "1,4",
            "--runs", "3", "--out", "loss.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    assert!(text.contains("# loss_list=1;4"), "{text}");
}

#[test]
fn oracle_check_passes_and_detects_faults() {
    let dir = tempfile::tempdir().unwrap();
    let o = bcs(&["oracle-check", "--sizes", "8x16", "--seeds", "1", "--instances", "4", "--actions", "10"], dir.path());
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("oracle check passed"));
    let o = bcs(
        &["oracle-check", "--sizes", "8x16", "--seeds", "1", "--instances", "2", "--actions", "10", "--inject-fault"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL sparseness cache"), "{}", stdout(&o));
    let o = bcs(&["oracle-check", "--sizes", "", "--seeds", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
