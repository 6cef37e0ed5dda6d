use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use optrlsvi::mdp::{read_mdp, LowRankMdp};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_optrlsvi"));
    cmd.env_remove("OPTRLSVI_OUTPUT_ROOT");
    cmd
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const RUN: &str = r#"
seed = 3
episodes = 40

[mdp]
generator = "chain"
length = 4
horizon = 6
seed = 1

[agent]
kind = "opt_rlsvi"
practical_scale = 0.00001
"#;

#[test]
fn generate_mixture_round_trips_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(
        dir.path(),
        &["generate", "--kind", "mixture", "--S", "20", "--A", "4", "--H", "8", "--d", "3", "--seed", "1", "--out", "m.mdp"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mdp: LowRankMdp<f64> = read_mdp(dir.path().join("m.mdp")).unwrap();
    assert_eq!((mdp.num_states(), mdp.num_actions(), mdp.horizon(), mdp.dim()), (20, 4, 8, 3));
    let report = fs::read_to_string(dir.path().join("m.mdp.validation.txt")).unwrap();
    assert!(report.contains("violations = 0"), "{report}");
    assert_eq!(run_in(dir.path(), &["validate", "m.mdp"]).status.code(), Some(0));
}

#[test]
fn generate_chain_records_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["generate", "--kind", "chain", "--N", "5", "--H", "8", "--seed", "1", "--out", "c.mdp"]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("c.mdp")).unwrap();
    assert!(text.lines().any(|l| l.trim() == "dim = 12"));
}

#[test]
fn generate_rejects_d_above_s() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(
        dir.path(),
        &["generate", "--kind", "mixture", "--S", "10", "--A", "2", "--H", "3", "--d", "50", "--out", "x.mdp"],
    );
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("d <= S"), "{}", stderr(&o));
    assert!(!dir.path().join("x.mdp").exists());
}

#[test]
fn corrupted_mdp_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), &["generate", "--kind", "chain", "--N", "3", "--H", "4", "--out", "c.mdp"]);
    let path = dir.path().join("c.mdp");
    let text = fs::read_to_string(&path).unwrap();
    // Flip the first probability-one transition entry into 1.5.
    let broken = text.replacen("1.0,", "1.5,", 1);
    assert_ne!(broken, text);
    fs::write(&path, broken).unwrap();
    let o = run_in(dir.path(), &["validate", "c.mdp"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn identical_runs_write_identical_csvs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), RUN).unwrap();
    let mut contents = Vec::new();
    for out in ["a", "b"] {
        let o = run_in(dir.path(), &["run", "run.toml", "--out-dir", out]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert!(stdout.contains("cumulative_regret = "));
        assert!(stdout.contains("optimism_rate = "));
        assert!(stdout.contains("warmup_total = "));
        let mut files: Vec<_> = fs::read_dir(dir.path().join(out)).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        assert_eq!(files.len(), 2);
        contents.push(files.iter().map(|f| fs::read(f).unwrap()).collect::<Vec<_>>());
    }
    assert_eq!(contents[0], contents[1]);
    let header = String::from_utf8_lossy(&contents[0][0]).lines().next().unwrap().to_string();
    assert!(header.starts_with("# schema=run-v1 digest="), "{header}");
    assert!(header.contains("version="));
}

#[test]
fn output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), RUN).unwrap();
    let o = bin()
        .current_dir(dir.path())
        .env("OPTRLSVI_OUTPUT_ROOT", "envroot")
        .args(["run", "run.toml"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read_dir(dir.path().join("envroot")).unwrap().count(), 2);
}

#[test]
fn large_delta_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), RUN.replace("practical_scale", "delta = 0.5\npractical_scale")).unwrap();
    let o = run_in(dir.path(), &["run", "run.toml", "--out-dir", "out"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("0.1587"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn missing_mdp_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RUN.replace(
        "generator = \"chain\"\nlength = 4\nhorizon = 6\nseed = 1",
        "generator = \"file\"\npath = \"absent.mdp\"",
    );
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let o = run_in(dir.path(), &["run", "run.toml", "--out-dir", "out"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("absent.mdp"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn usage_errors_exit_one() {
    let o = bin().args(["frobnicate"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = bin().args(["generate", "--kind", "mixture", "--H", "3"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

fn sweep_toml(grid: &str, seeds: usize) -> String {
    let base = RUN.replace("[mdp]", "[base.mdp]").replace("[agent]", "[base.agent]");
    let base = base.replacen("seed = 3\nepisodes = 40", "[base]\nseed = 3\nepisodes = 40", 1);
    format!("seeds = {seeds}\n{base}\n[grid]\n{grid}\n")
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    rdr.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

fn only_file(dir: &Path, prefix: &str, suffix: &str) -> std::path::PathBuf {
    let mut hits: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let name = p.file_name().unwrap().to_string_lossy();
            name.starts_with(prefix) && name.ends_with(suffix)
        })
        .collect();
    assert_eq!(hits.len(), 1, "{hits:?}");
    hits.pop().unwrap()
}

#[test]
fn scale_grid_gives_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sweep.toml"), sweep_toml("practical_scale = [0.02, 0.05, 0.1]", 2)).unwrap();
    let o = run_in(dir.path(), &["sweep", "sweep.toml", "--out-dir", "out", "--threads", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = data_rows(&only_file(&dir.path().join("out"), "sweep-", ".csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][0], "practical_scale=0.02");
    // Every finished run left its own CSV pair behind.
    let runs = fs::read_dir(dir.path().join("out")).unwrap().count() - 1;
    assert_eq!(runs, 3 * 2 * 2);
}

#[test]
fn single_point_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), RUN).unwrap();
    fs::write(dir.path().join("sweep.toml"), sweep_toml("", 1)).unwrap();
    assert_eq!(run_in(dir.path(), &["run", "run.toml", "--out-dir", "r"]).status.code(), Some(0));
    assert_eq!(run_in(dir.path(), &["sweep", "sweep.toml", "--out-dir", "s"]).status.code(), Some(0));
    let run_summary = data_rows(&only_file(&dir.path().join("r"), "run-", ".summary.csv"));
    let sweep = data_rows(&only_file(&dir.path().join("s"), "sweep-", ".csv"));
    // summary: cumulative_regret is column 3, warmup_total column 7.
    // sweep: regret_mean column 3, warmup_mean column 7.
    assert_eq!(run_summary[0][3].parse::<f64>().unwrap(), sweep[0][3].parse::<f64>().unwrap());
    assert_eq!(run_summary[0][7].parse::<f64>().unwrap(), sweep[0][7].parse::<f64>().unwrap());
    // The per-run CSV written by the sweep is byte-identical to the run's.
    let a = fs::read(only_file(&dir.path().join("r"), "run-", "3.csv")).unwrap();
    let b = fs::read(only_file(&dir.path().join("s"), "run-", "3.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn diagnose_reads_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), &["generate", "--kind", "chain", "--N", "4", "--H", "6", "--seed", "1", "--out", "c.mdp"]);
    let cfg = RUN.replace(
        "generator = \"chain\"\nlength = 4\nhorizon = 6\nseed = 1",
        "generator = \"file\"\npath = \"c.mdp\"",
    );
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let o = run_in(dir.path(), &["run", "run.toml", "--out-dir", "out", "--checkpoint", "ck.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = run_in(dir.path(), &["diagnose", "--checkpoint", "ck.toml", "--mdp", "c.mdp"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("episode = 41"));
    // Deterministic chain: every eta norm is exactly zero.
    let rows: Vec<&str> = stdout.lines().skip_while(|l| !l.starts_with("t,")).skip(1).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.split(',').nth(1) == Some("0e0")));
}
