//! `ci-lab`: verify the built-in counterexamples, check CI statements on a table,
//! search for counterexamples, and run the deconfounder pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 file or format error, 3 search
//! budget exhausted.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use cilab::claims::{build_ce1, build_ce2, build_overlap_variant, claim_from_json, evaluate, ClaimInstance, ClaimReport, Verdict};
use cilab::format::{table_from_json, table_to_json};
use cilab::independence::{is_ci, is_mutually_independent};
use cilab::pipeline::{run_deconfounder, AdjustmentReport, DeconfConfig, EmConfig};
use cilab::search::{find_counterexample, query_from_json, SearchConfig, SearchMode, WitnessJson, DEFAULT_MAX_CELLS};
use cilab::{Assignment, CIStatement, Error, JointTable, MutualStatement, NameSet};

const MAX_CELLS_ENV: &str = "CI_LAB_MAX_CELLS";

#[derive(Parser, Debug)]
#[command(name = "ci-lab", version, about = "Exact conditional-independence lab")]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate the claim on both counterexamples and the overlap variant.
    VerifyPaper,
    /// Evaluate CI or mutual-independence statements on a table file.
    Check {
        /// Table JSON, or a claim instance JSON (its roles are ignored).
        #[arg(long)]
        table: PathBuf,
        /// Statement `X1,X2 _||_ Y | Z`; repeatable.
        #[arg(long)]
        ci: Vec<String>,
        /// Groups for a mutual-independence check, e.g. `A1;A2;A3` or `A1,A2;W`.
        #[arg(long)]
        mutual: Option<String>,
        /// Conditioning set for `--mutual`, comma separated.
        #[arg(long, requires = "mutual")]
        given: Option<String>,
    },
    /// Search for a table satisfying every premise and violating the conclusion.
    Search {
        #[arg(long)]
        query: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// heuristic, exhaustive_grid or structured.
        #[arg(long, default_value = "heuristic")]
        mode: String,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Snapping grid (heuristic) or grid denominator (exhaustive_grid).
        #[arg(long)]
        denominator: Option<u64>,
        #[arg(long)]
        penalty: Option<f64>,
    },
    /// Exact adjustment on a known table, plus a fitted substitute when `--n > 0`.
    Deconf {
        /// `ce1`, `ce2`, or a claim instance JSON file.
        #[arg(long)]
        dgp: String,
        /// Sample size; 0 runs on the table alone.
        #[arg(long, default_value_t = 0)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cause assignment, e.g. `A1=0,A2=0`.
        #[arg(long)]
        target: String,
        #[arg(long)]
        restarts: Option<usize>,
    },
}

enum Failure {
    Usage(String),
    Format(String),
    Budget(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Format(_) => 2,
            Failure::Budget(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Format(m) | Failure::Budget(m) => m,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn format_err(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| Failure::Format(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Format(format!("{}: {e}", path.display())))
}

/// Parses `X _||_ Y | Z`; names are resolved only at evaluation.
fn parse_ci_statement(text: &str) -> Result<CIStatement, Failure> {
    text.parse().map_err(|e| usage(format!("`{text}`: {e}")))
}

fn parse_names(text: &str) -> NameSet {
    text.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect()
}

fn load_table(path: &Path) -> Result<JointTable, Failure> {
    let text = read(path)?;
    match table_from_json(&text) {
        Ok(t) => Ok(t),
        Err(table_err) => match claim_from_json(&text) {
            Ok(inst) => Ok(inst.table().clone()),
            Err(_) => Err(format_err(path)(table_err)),
        },
    }
}

fn max_cells() -> Result<u128, Failure> {
    match std::env::var(MAX_CELLS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{MAX_CELLS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(DEFAULT_MAX_CELLS),
    }
}

fn bools(v: &[bool]) -> String {
    v.iter().map(bool::to_string).collect::<Vec<_>>().join(",")
}

fn claim_text(out: &mut String, name: &str, r: &ClaimReport) {
    let _ = writeln!(out, "instance {name}");
    let _ = writeln!(out, "  causes: {}", r.causes.join(","));
    let _ = writeln!(out, "  premise_1i: {}", bools(&r.premise_1i));
    let _ = writeln!(out, "  premise_1ii: {}", bools(&r.premise_1ii));
    let _ = writeln!(out, "  premise_iii: {}", r.premise_iii);
    let _ = writeln!(out, "  premise_2: {}", r.premise_2);
    let _ = writeln!(out, "  conclusion_3: {}", r.conclusion_3);
    let _ = writeln!(out, "  verdict: {}", r.verdict);
}

fn verify_paper(json_out: bool) -> Result<(String, bool), Failure> {
    let overlap = build_overlap_variant(1).map_err(usage)?;
    let instances = [("ce1", build_ce1()), ("ce2", build_ce2()), ("overlap", overlap)];
    let mut reports = Vec::new();
    for (name, inst) in &instances {
        reports.push((*name, evaluate(inst).map_err(usage)?));
    }
    let all = reports.iter().all(|(_, r)| r.verdict == Verdict::ClaimRefuted);
    let out = if json_out {
        let list: Vec<Value> = reports
            .iter()
            .map(|(n, r)| json!({"instance": n, "report": r}))
            .collect();
        json_line(&json!({"instances": list, "all_refuted": all}))
    } else {
        let mut s = String::new();
        for (n, r) in &reports {
            claim_text(&mut s, n, r);
        }
        let _ = writeln!(s, "all_refuted: {all}");
        s
    };
    Ok((out, all))
}

fn check(
    json_out: bool,
    table: &Path,
    cis: &[String],
    mutual: Option<&str>,
    given: Option<&str>,
) -> Result<String, Failure> {
    if cis.is_empty() && mutual.is_none() {
        return Err(usage("nothing to check: pass --ci and/or --mutual"));
    }
    let statements = cis.iter().map(|s| parse_ci_statement(s)).collect::<Result<Vec<_>, _>>()?;
    let t = load_table(table)?;
    let mut results: Vec<(String, bool)> = Vec::new();
    for s in &statements {
        results.push((s.to_string(), is_ci(&t, s).map_err(usage)?));
    }
    if let Some(groups) = mutual {
        let m = MutualStatement {
            groups: groups.split(';').map(parse_names).collect(),
            given: given.map(parse_names).unwrap_or_default(),
        };
        results.push((m.to_string(), is_mutually_independent(&t, &m).map_err(usage)?));
    }
    Ok(if json_out {
        let list: Vec<Value> = results
            .iter()
            .map(|(s, b)| json!({"statement": s, "holds": b}))
            .collect();
        json_line(&json!({ "results": list }))
    } else {
        results.iter().map(|(s, b)| format!("{s}: {b}\n")).collect()
    })
}

#[allow(clippy::too_many_arguments)]
fn search(
    json_out: bool,
    query: &Path,
    seed: u64,
    mode: &str,
    restarts: Option<usize>,
    max_iterations: Option<usize>,
    denominator: Option<u64>,
    penalty: Option<f64>,
) -> Result<String, Failure> {
    let mode: SearchMode = mode.parse().map_err(usage)?;
    let defaults = SearchConfig::default();
    let cfg = SearchConfig {
        seed,
        mode,
        restarts: restarts.unwrap_or(defaults.restarts),
        max_iterations: max_iterations.unwrap_or(defaults.max_iterations),
        snap_denominator: denominator.unwrap_or(if mode == SearchMode::ExhaustiveGrid { 8 } else { defaults.snap_denominator }),
        premise_penalty_weight: penalty.unwrap_or(defaults.premise_penalty_weight),
        max_cells: max_cells()?,
        ..defaults
    };
    cfg.validate().map_err(usage)?;
    let q = query_from_json(&read(query)?).map_err(format_err(query))?;
    let found = find_counterexample(&q, &cfg).map_err(|e| match e {
        Error::SchemaTooLarge { .. } | Error::GridTooLarge { .. } => usage(e),
        other => Failure::Format(other.to_string()),
    })?;
    let Some(w) = found else {
        let msg = format!("seed {seed}: no counterexample found ({mode} mode, budget exhausted)");
        return Err(Failure::Budget(msg));
    };
    Ok(if json_out {
        json_line(&serde_json::to_value(WitnessJson::from(&w)).expect("witness json"))
    } else {
        let mut s = String::new();
        let _ = writeln!(s, "seed: {seed}");
        let _ = writeln!(s, "mode: {mode}");
        match w.source_index {
            Some(i) => {
                let _ = writeln!(s, "source_index: {i}");
            }
            None => {
                let _ = writeln!(s, "grid_denominator: {}", cfg.snap_denominator);
            }
        }
        for p in &w.verification.premises {
            let _ = writeln!(s, "premise {}: {}", p.statement, p.holds);
        }
        let c = &w.verification.conclusion;
        let _ = writeln!(s, "conclusion {}: {}", c.statement, c.holds);
        let _ = writeln!(s, "counterexample: {}", w.verification.counterexample);
        let _ = writeln!(s, "table: {}", table_to_json(&w.table));
        s
    })
}

fn adjustment_text(out: &mut String, label: &str, z: &str, r: &AdjustmentReport) {
    let show = |v: &Option<cilab::Rational>| v.as_ref().map_or("undefined".to_string(), |x| x.to_string());
    let _ = writeln!(out, "{label}.psi: {}", show(&r.psi));
    let _ = writeln!(out, "{label}.baseline: {}", r.baseline);
    let _ = writeln!(out, "{label}.gap: {}", show(&r.gap));
    for t in &r.terms {
        let _ = writeln!(
            out,
            "{label}.stratum {z}={}: p_z={} p_a_z={} e_w={}",
            t.z,
            t.p_z,
            t.p_a_z,
            show(&t.e_w)
        );
    }
    let deg = if r.degenerate_strata.is_empty() {
        "none".to_string()
    } else {
        r.degenerate_strata.join(",")
    };
    let _ = writeln!(out, "{label}.degenerate_strata: {deg}");
}

fn deconf(
    json_out: bool,
    dgp: &str,
    n: usize,
    k: usize,
    seed: u64,
    target: &str,
    restarts: Option<usize>,
) -> Result<String, Failure> {
    let inst: ClaimInstance = match dgp {
        "ce1" => build_ce1(),
        "ce2" => build_ce2(),
        path => {
            let p = Path::new(path);
            claim_from_json(&read(p)?).map_err(format_err(p))?
        }
    };
    let a: Assignment = target.parse().map_err(|e| usage(format!("--target: {e}")))?;
    let mut em = EmConfig::default();
    if let Some(r) = restarts {
        em.restarts = r;
    }
    let cfg = DeconfConfig { n, k, seed, em };
    let rep = run_deconfounder(&inst, &a, &cfg).map_err(usage)?;
    Ok(if json_out {
        let mut v = serde_json::to_value(&rep).expect("report json");
        v["dgp"] = json!(dgp);
        json_line(&v)
    } else {
        let mut s = String::new();
        let _ = writeln!(s, "seed: {seed}");
        let _ = writeln!(s, "dgp: {dgp}");
        let _ = writeln!(s, "n: {n}");
        let _ = writeln!(s, "k: {k}");
        let _ = writeln!(s, "target: {a}");
        adjustment_text(&mut s, "exact", &inst.roles().z, &rep.exact);
        if let Some(f) = &rep.fitted {
            let _ = writeln!(s, "fitted.log_likelihood: {}", f.log_likelihood);
            let _ = writeln!(s, "fitted.true_log_likelihood: {}", f.true_log_likelihood);
            let _ = writeln!(s, "fitted.converged: {}", f.converged);
            let _ = writeln!(s, "fitted.best_restart: {}", f.best_restart);
            let _ = writeln!(s, "fitted.weights: {}", f.model.weights.join(","));
            adjustment_text(&mut s, "fitted", &f.zhat, &f.adjustment);
        }
        s
    })
}

fn json_line(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json");
    s.push('\n');
    s
}

fn run(cli: Cli) -> Result<(String, bool), Failure> {
    let j = cli.json;
    match cli.command {
        Command::VerifyPaper => verify_paper(j),
        Command::Check {
            table,
            ci,
            mutual,
            given,
        } => check(j, &table, &ci, mutual.as_deref(), given.as_deref()).map(|s| (s, true)),
        Command::Search {
            query,
            seed,
            mode,
            restarts,
            max_iterations,
            denominator,
            penalty,
        } => search(j, &query, seed, &mode, restarts, max_iterations, denominator, penalty).map(|s| (s, true)),
        Command::Deconf {
            dgp,
            n,
            k,
            seed,
            target,
            restarts,
        } => deconf(j, &dgp, n, k, seed, &target, restarts).map(|s| (s, true)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok((out, ok)) => {
            print!("{out}");
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
