use std::path::Path;
use std::process::{Command, Output};

use carfollow::synthetic::{write_ngsim_text, NgsimTextSpec};

fn carfollow(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carfollow")).args(args).current_dir(cwd).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn selftest_passes_and_logs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = carfollow(&["selftest", "--seed", "7"], dir.path());
    let b = carfollow(&["selftest", "--seed", "7"], dir.path());
    assert_eq!(code(&a), 0, "{}", stdout(&a));
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).contains("selftest ok (6 checks)"));
}

#[test]
fn corrupted_library_fails_selftest_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = carfollow(&["selftest", "--corrupt-library"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("round_trip_recovery"));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = carfollow(&["ingest", "--input", "nope.txt", "-o", "c.bin"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.txt"));
}

#[test]
fn unparseable_input_is_a_format_error_naming_the_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.txt"), "garbage\n1 2 3\n").unwrap();
    let o = carfollow(&["ingest", "--input", "bad.txt", "-o", "c.bin"], dir.path());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "[extract]\nmin_durration_s = 3\n").unwrap();
    let o = carfollow(&["run", "--synthetic", "--config", "run.toml"], dir.path());
    assert_eq!(code(&o), 4);
    assert!(!dir.path().join("report").exists());
}

#[test]
fn bad_library_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("lib.csv"), "id,what\n1,2\n").unwrap();
    let o = carfollow(&["run", "--synthetic", "--library", "lib.csv"], dir.path());
    assert_eq!(code(&o), 3);
}

#[test]
fn ingest_cache_then_run_matches_running_on_text() {
    let dir = tempfile::tempdir().unwrap();
    let spec = NgsimTextSpec { vehicles: 60, frames_per_vehicle: 400, ..Default::default() };
    let file = std::fs::File::create(dir.path().join("t.txt")).unwrap();
    write_ngsim_text(&spec, file).unwrap();

    let ingest = carfollow(&["ingest", "--input", "t.txt", "-o", "t.cache"], dir.path());
    assert_eq!(code(&ingest), 0, "{}", String::from_utf8_lossy(&ingest.stderr));
    assert!(stdout(&ingest).contains("60 vehicles"));

    let from_text = carfollow(&["run", "--input", "t.txt", "-o", "a"], dir.path());
    let from_cache = carfollow(&["run", "--input", "t.cache", "-o", "b"], dir.path());
    assert_eq!(code(&from_text), 0, "{}", String::from_utf8_lossy(&from_text.stderr));
    assert_eq!(code(&from_cache), 0);
    for table in ["episodes.csv", "pair_summary.csv", "fit_results.csv"] {
        let a = std::fs::read(dir.path().join("a").join(table)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(table)).unwrap();
        assert_eq!(a, b, "{table}");
    }
}

#[test]
fn run_refuses_to_replace_a_foreign_directory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("keep")).unwrap();
    std::fs::write(dir.path().join("keep/notes.txt"), "mine").unwrap();
    let o = carfollow(&["run", "--synthetic", "-o", "keep"], dir.path());
    assert_eq!(code(&o), 2);
    assert_eq!(std::fs::read_to_string(dir.path().join("keep/notes.txt")).unwrap(), "mine");
}

#[test]
fn fit_then_report_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "[synthetic]\nenabled = true\npairs = 20\n").unwrap();
    assert_eq!(code(&carfollow(&["run", "--config", "run.toml", "-o", "direct"], dir.path())), 0);
    assert_eq!(code(&carfollow(&["fit", "--config", "run.toml", "-o", "fit.json"], dir.path())), 0);
    let report = carfollow(&["report", "fit.json", "--config", "run.toml", "-o", "staged"], dir.path());
    assert_eq!(code(&report), 0);
    assert!(String::from_utf8_lossy(&report.stderr).is_empty());
    for entry in std::fs::read_dir(dir.path().join("direct")).unwrap() {
        let name = entry.unwrap().file_name();
        let a = std::fs::read(dir.path().join("direct").join(&name)).unwrap();
        let b = std::fs::read(dir.path().join("staged").join(&name)).unwrap();
        assert_eq!(a, b, "{name:?}");
    }
}
