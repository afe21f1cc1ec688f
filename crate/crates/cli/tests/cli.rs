use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eprcam_core::encode_hits;

fn eprcam(dir: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_eprcam"));
    for (k, _) in std::env::vars() {
        if k.starts_with("EPRCAM_") {
            c.env_remove(k);
        }
    }
    c.current_dir(dir);
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    eprcam(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

/// Value of `key` in a report or sidecar of `key = value` lines.
fn kv(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| {
            l.split_once('=')
                .filter(|(k, _)| k.trim() == key)
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| panic!("no key {key}"))
}

#[test]
fn help_and_version_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let h = run(dir.path(), &["--help"]);
    assert_eq!(code(&h), 0);
    let text = stdout(&h);
    for key in [
        "pairing.window_ps",
        "detector.quantum_efficiency",
        "analysis.n_trials",
        "EPRCAM_",
    ] {
        assert!(text.contains(key), "help lacks {key}");
    }
    assert_eq!(code(&run(dir.path(), &["--version"])), 0);
    assert_eq!(code(&run(dir.path(), &["simulate", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(d, &[])), 1);
    assert_eq!(code(&run(d, &["simulate", "--bogus"])), 1);
    assert_eq!(code(&run(d, &["--basis", "xx", "simulate", "--out", "o"])), 1);
    assert_eq!(code(&run(d, &["--window-ns", "-1", "simulate", "--out", "o"])), 1);
    std::fs::write(d.join("bad.cfg"), "no.such.key = 1\n").unwrap();
    let o = run(d, &["--config", "bad.cfg", "simulate", "--out", "o"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no.such.key"));
    std::fs::write(d.join("bad.cfg"), "detector.quantum_efficiency = 2\n").unwrap();
    assert_eq!(code(&run(d, &["--config", "bad.cfg", "simulate", "--out", "o"])), 1);
    let o = run(d, &["analyze", "--nf", "x.csv", "--out", "o"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("missing --ff"), "{}", stderr(&o));
    let o = run(d, &["analyze", "--out", "o"]);
    assert!(stderr(&o).contains("missing --nf and --ff"), "{}", stderr(&o));
}

#[test]
fn bad_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut bytes = encode_hits(&[], 1_000_000).unwrap();
    bytes[8] = 3; // claim three records
    std::fs::write(d.join("short.phl1"), &bytes).unwrap();
    let o = run(d, &["process", "short.phl1", "--out", "o"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("byte offset 24"), "{}", stderr(&o));
    std::fs::write(d.join("junk.phl1"), b"not a hit list at all").unwrap();
    assert_eq!(code(&run(d, &["process", "junk.phl1", "--out", "o"])), 2);
    assert_eq!(code(&run(d, &["process", "missing.phl1", "--out", "o"])), 2);
    assert_eq!(code(&run(d, &["report", "missing.kv"])), 2);
    std::fs::write(d.join("jpd.csv"), "px1,py1,px2,py2,count\n1,2,3\n").unwrap();
    std::fs::write(d.join("jpd.csv.meta"), "basis = nf\n").unwrap();
    assert_eq!(
        code(&run(
            d,
            &["analyze", "--nf", "jpd.csv", "--ff", "jpd.csv", "--out", "o"]
        )),
        2
    );
}

#[test]
fn empty_hit_file_gives_empty_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("empty.phl1"), encode_hits(&[], 2_000_000_000_000).unwrap()).unwrap();
    let o = run(d, &["--basis", "nf", "process", "empty.phl1", "--out", "o"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let meta = std::fs::read_to_string(d.join("o/jpd.csv.meta")).unwrap();
    assert_eq!(kv(&meta, "total_pairs"), "0");
    assert_eq!(kv(&meta, "basis"), "nf");
    assert_eq!(kv(&meta, "acquisition_s").parse::<f64>().unwrap(), 2.0);
    assert_eq!(
        std::fs::read_to_string(d.join("o/jpd.csv")).unwrap(),
        "px1,py1,px2,py2,count\n"
    );
    assert_eq!(
        std::fs::read_to_string(d.join("o/pairs.csv")).unwrap(),
        "cx1,cy1,t1_ps,cx2,cy2,t2_ps,dt_ps\n"
    );
}

#[test]
fn injected_table_matches_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(d, &["analyze", "--inject-table1", "--out", "t1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let kv_text = std::fs::read_to_string(d.join("t1/report.kv")).unwrap();
    assert_eq!(kv_text, std::fs::read_to_string(data("table1_report.kv")).unwrap());
    let shown = run(d, &["report", "t1/report.kv"]);
    assert_eq!(code(&shown), 0);
    assert_eq!(
        stdout(&shown),
        std::fs::read_to_string(data("table1_report.txt")).unwrap()
    );
    assert_eq!(stdout(&o), stdout(&shown));
}

#[test]
fn unknown_report_keys_only_warn() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut text = std::fs::read_to_string(data("table1_report.kv")).unwrap();
    text.push_str("future.key = 42\n");
    std::fs::write(d.join("r.kv"), text).unwrap();
    let o = run(d, &["report", "r.kv"]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("future.key"), "{}", stderr(&o));
    assert_eq!(stdout(&o), std::fs::read_to_string(data("table1_report.txt")).unwrap());
}

fn config_hash(dir: &Path, env: &[(&str, &str)], args: &[&str]) -> String {
    let mut c = eprcam(dir);
    for (k, v) in env {
        c.env(k, v);
    }
    let o = c
        .args(args)
        .args(["analyze", "--inject-table1", "--out", "h"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    kv(
        &std::fs::read_to_string(dir.join("h/report.kv")).unwrap(),
        "provenance.config_hash",
    )
}

#[test]
fn flags_beat_file_beat_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("seed7.cfg"), "seed = 7\n").unwrap();
    let default = config_hash(d, &[], &[]);
    let env5 = config_hash(d, &[("EPRCAM_SEED", "5")], &[]);
    let flag5 = config_hash(d, &[], &["--seed", "5"]);
    let file7 = config_hash(d, &[], &["--config", "seed7.cfg"]);
    assert_ne!(default, env5);
    assert_eq!(env5, flag5);
    assert_eq!(
        config_hash(d, &[("EPRCAM_SEED", "5")], &["--config", "seed7.cfg"]),
        file7
    );
    assert_eq!(config_hash(d, &[], &["--config", "seed7.cfg", "--seed", "5"]), flag5);
    let w = config_hash(d, &[], &["--window-ns", "4"]);
    assert_eq!(w, config_hash(d, &[("EPRCAM_PAIRING__WINDOW_PS", "4000")], &[]));
}

const SHORT_RUN: &str = "sim.duration_s = 1\nanalysis.n_trials = 4\nanalysis.min_counts = 20\n";

/// simulate, process and analyze both bases inside `dir` with relative paths.
fn chain(dir: &Path, config: &str, seed: &str) -> Output {
    std::fs::write(dir.join("run.cfg"), config).unwrap();
    for basis in ["nf", "ff"] {
        let base = ["--config", "run.cfg", "--seed", seed, "--basis", basis];
        let o = run(dir, &[&base[..], &["simulate", "--out", basis]].concat());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let hits = format!("{basis}/hits.phl1");
        let o = run(dir, &[&base[..], &["process", &hits, "--out", basis]].concat());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    run(
        dir,
        &[
            "--config",
            "run.cfg",
            "--seed",
            seed,
            "analyze",
            "--nf",
            "nf/jpd.csv",
            "--ff",
            "ff/jpd.csv",
            "--out",
            "rep",
        ],
    )
}

#[test]
fn end_to_end_is_deterministic_and_certifies() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let o = chain(d, SHORT_RUN, "11");
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let files = [
        "nf/hits.phl1",
        "nf/truth.csv",
        "nf/pairs.csv",
        "nf/jpd.csv",
        "nf/jpd.csv.meta",
        "ff/hits.phl1",
        "ff/truth.csv",
        "ff/jpd.csv",
        "rep/report.kv",
        "rep/report.txt",
        "rep/nf_minus.txt",
        "rep/ff_sum.pgm",
        "rep/ff_conditional.txt",
        "rep/nf_marginal_right.pgm",
    ];
    for f in files {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
    let report = std::fs::read_to_string(a.path().join("rep/report.kv")).unwrap();
    assert_eq!(kv(&report, "x.epr_violated"), "true");
    assert_eq!(kv(&report, "y.epr_violated"), "true");
    assert_eq!(kv(&report, "source"), "measured");
    assert_eq!(kv(&report, "provenance.input.0"), "nf/jpd.csv");

    // Another seed changes the data.
    std::fs::write(b.path().join("run.cfg"), SHORT_RUN).unwrap();
    let o = run(
        b.path(),
        &[
            "--config", "run.cfg", "--seed", "12", "--basis", "nf", "simulate", "--out", "other",
        ],
    );
    assert_eq!(code(&o), 0);
    assert_ne!(
        std::fs::read(b.path().join("other/hits.phl1")).unwrap(),
        std::fs::read(a.path().join("nf/hits.phl1")).unwrap()
    );
}

#[test]
fn separable_source_is_not_certified() {
    let dir = tempfile::tempdir().unwrap();
    let o = chain(dir.path(), &format!("{SHORT_RUN}source.separable = true\n"), "3");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = std::fs::read_to_string(dir.path().join("rep/report.kv")).unwrap();
    assert_eq!(kv(&report, "x.epr_violated"), "false");
    assert_eq!(kv(&report, "y.epr_violated"), "false");
    assert_eq!(kv(&report, "x.entanglement_certified"), "false");
    assert_eq!(kv(&report, "y.entanglement_certified"), "false");
}

#[test]
fn simulate_summary_and_truth_links() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.cfg"), "sim.duration_s = 0.05\noutput.truth_links = true\n").unwrap();
    let o = run(d, &["--config", "c.cfg", "simulate", "--out", "s"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = stdout(&o);
    let hits: usize = summary
        .lines()
        .find_map(|l| l.strip_prefix("hits_written"))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    let links = std::fs::read_to_string(d.join("s/truth_links.csv")).unwrap();
    assert_eq!(links.lines().count(), hits + 1);
    let pairs: usize = summary
        .lines()
        .find_map(|l| l.strip_prefix("pairs_emitted"))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    let truth = std::fs::read_to_string(d.join("s/truth.csv")).unwrap();
    assert_eq!(truth.lines().count(), 2 * pairs + 1);
    assert!(pairs > 0);
}
