//! End-to-end runs of the binary against golden output.
//!
//! Set `UPDATE_GOLDEN=1` to rewrite the golden files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ci-lab"));
    c.current_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests"));
    c.env_remove("CI_LAB_MAX_CELLS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn ci-lab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn golden(name: &str, actual: &str) {
    let path: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "golden mismatch for {name}");
}

#[test]
fn verify_paper_text() {
    let o = run(&["verify-paper"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.matches("verdict: ClaimRefuted").count(), 3);
    golden("verify_paper.txt", &out);
}

#[test]
fn verify_paper_json() {
    let o = run(&["verify-paper", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["all_refuted"], true);
    assert_eq!(v["instances"][1]["report"]["verdict"], "ClaimRefuted");
    golden("verify_paper.json", &stdout(&o));
}

#[test]
fn check_ce1_text_and_json() {
    let args = [
        "check",
        "--table",
        "data/ce1.json",
        "--ci",
        "A1 _||_ W |",
        "--ci",
        "A1,A2 _||_ W | Z",
        "--mutual",
        "A1;A2",
        "--given",
        "Z",
    ];
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("A1 _||_ W |: true\n"));
    golden("check_ce1.txt", &stdout(&o));
    let mut json_args = args.to_vec();
    json_args.push("--json");
    let o = run(&json_args);
    assert_eq!(o.status.code(), Some(0));
    golden("check_ce1.json", &stdout(&o));
}

#[test]
fn check_accepts_claim_files() {
    let o = run(&["check", "--table", "data/ce2_claim.json", "--ci", "A1 _||_ A2 |"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "A1 _||_ A2 |: false\n");
}

#[test]
fn deconf_table_exact() {
    let o = run(&["deconf", "--dgp", "ce1", "--target", "A1=0,A2=0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("exact.gap: -1/2\n"));
    golden("deconf_ce1.txt", &stdout(&o));
    let o = run(&["deconf", "--dgp", "ce1", "--target", "A1=0,A2=0", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["exact"]["gap"], "-1/2");
    assert_eq!(v["seed"], 0);
    golden("deconf_ce1.json", &stdout(&o));
}

#[test]
fn deconf_from_file_matches_builtin() {
    let a = run(&["deconf", "--dgp", "ce2", "--target", "A1=0,A2=0"]);
    let b = run(&["deconf", "--dgp", "data/ce2_claim.json", "--target", "A1=0,A2=0"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0), "{}", stderr(&b));
    let tail = |o: &Output| stdout(o).lines().skip(2).collect::<Vec<_>>().join("\n");
    assert_eq!(tail(&a), tail(&b));
}

#[test]
fn deconf_fitted_is_reproducible() {
    let args = ["deconf", "--dgp", "ce2", "--n", "2000", "--k", "2", "--seed", "7", "--target", "A1=0,A2=0"];
    let a = run(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&run(&args)));
    let out = stdout(&a);
    assert!(out.starts_with("seed: 7\n"));
    assert!(out.contains("fitted.psi: undefined\n"));
    assert!(out.contains("exact.gap: -1/2\n"));
}

#[test]
fn search_finds_and_echoes_seed() {
    let o = run(&["search", "--query", "data/deconfounder_query.json", "--seed", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("counterexample: true\n"));
    golden("search_deconfounder.txt", &stdout(&o));
    let o = run(&["search", "--query", "data/deconfounder_query.json", "--mode", "structured", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["verification"]["counterexample"], true);
    assert_eq!(v["config"]["seed"], 0);
    assert_eq!(v["config"]["mode"], "structured");
    golden("search_structured.json", &stdout(&o));
}

#[test]
fn search_budget_exhausted_is_exit_3() {
    let o = run(&[
        "search",
        "--query",
        "data/decomposition_query.json",
        "--mode",
        "exhaustive_grid",
        "--denominator",
        "4",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).is_empty());
    assert!(stderr(&o).contains("seed 0"));
}

#[test]
fn max_cells_env_override() {
    let o = bin()
        .args(["search", "--query", "data/deconfounder_query.json"])
        .env("CI_LAB_MAX_CELLS", "8")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bound is 8"));
}

#[test]
fn exit_codes_for_bad_input() {
    let cases: &[(&[&str], i32)] = &[
        (&["bogus"], 1),
        (&[], 1),
        (&["check", "--table", "data/ce1.json"], 1),
        (&["check", "--table", "data/ce1.json", "--ci", "A1 _||_ A1 | Z"], 1),
        (&["check", "--table", "data/ce1.json", "--ci", "A1 _|_ W"], 1),
        (&["check", "--table", "data/ce1.json", "--ci", "A1 _||_ Q |"], 1),
        (&["check", "--table", "data/missing.json", "--ci", "A1 _||_ W |"], 2),
        (&["check", "--table", "data/bad_sum.json", "--ci", "A _||_ A |"], 2),
        (&["check", "--table", "data/bad_sum.json", "--mutual", "A;A"], 2),
        (&["search", "--query", "data/ce1.json"], 2),
        (&["search", "--query", "data/deconfounder_query.json", "--mode", "annealing"], 1),
        (&["search", "--query", "data/deconfounder_query.json", "--denominator", "1"], 1),
        (&["deconf", "--dgp", "ce1", "--target", "A1=0"], 1),
        (&["deconf", "--dgp", "ce1", "--target", "A1"], 1),
        (&["deconf", "--dgp", "data/missing.json", "--target", "A1=0,A2=0"], 2),
    ];
    for (args, code) in cases {
        let o = run(args);
        assert_eq!(o.status.code(), Some(*code), "{args:?}: {}", stderr(&o));
        assert!(o.stdout.is_empty(), "{args:?} wrote to stdout");
        assert!(!o.stderr.is_empty(), "{args:?} wrote nothing to stderr");
    }
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["search", "--help"]).status.code(), Some(0));
}
