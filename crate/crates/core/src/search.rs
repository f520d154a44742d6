//! Counterexample search for conditional-independence implication queries.
//!
//! A query asks whether a list of premises implies a conclusion over a fixed
//! finite schema. A witness is an exact table on which every premise holds and
//! the conclusion fails. Whatever the mode, a table is only returned after the
//! exact checks in [`crate::independence`] accept it.
//!
//! Modes:
//! - `heuristic`: randomized hill climbing on a float surrogate, snapped to a
//!   rational grid and re-verified.
//! - `structured`: XOR and copy gadgets over chosen variables, product-extended
//!   with point masses or uniform variables.
//! - `exhaustive_grid`: every table whose entries are multiples of `1/D`, in
//!   lexicographic order.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{schema_from_json, schema_to_json, OrderedLabels, TableJson, VariableJson};
use crate::independence::{is_ci, is_mutually_independent, Strata};
use crate::rational::Rational;
use crate::statement::{CIStatement, MutualStatement, Statement};
use crate::table::{Assignment, JointTable, Schema};

pub const DEFAULT_MAX_CELLS: u128 = 4096;
pub const DEFAULT_GRID_BOUND: u128 = 20_000_000;
const MAX_TEMPLATES: usize = 1 << 16;

/// Premises, a conclusion, and the schema they range over.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImplicationQuery {
    schema: Schema,
    premises: Vec<Statement>,
    conclusion: CIStatement,
    /// Restricts candidate tables to these cells (index keys), when present.
    support: Option<Vec<Vec<usize>>>,
}

impl ImplicationQuery {
    pub fn new(schema: Schema, premises: Vec<Statement>, conclusion: CIStatement) -> Result<Self> {
        for p in &premises {
            p.validate(&schema)?;
        }
        conclusion.validate(&schema)?;
        Ok(ImplicationQuery {
            schema,
            premises,
            conclusion,
            support: None,
        })
    }

    /// Only tables supported on `cells` are considered.
    pub fn with_support(mut self, cells: &[Assignment]) -> Result<Self> {
        let mut keys = Vec::with_capacity(cells.len());
        for a in cells {
            let resolved = self.schema.resolve(a)?;
            if resolved.len() != self.schema.len() {
                return Err(Error::IncompleteAssignment(a.to_string()));
            }
            let mut key = vec![0; self.schema.len()];
            for (v, l) in resolved {
                key[v] = l;
            }
            keys.push(key);
        }
        keys.sort();
        keys.dedup();
        if keys.is_empty() {
            return Err(Error::Config("empty support restriction".into()));
        }
        self.support = Some(keys);
        Ok(self)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn premises(&self) -> &[Statement] {
        &self.premises
    }

    pub fn conclusion(&self) -> &CIStatement {
        &self.conclusion
    }

    /// Candidate cells in canonical order.
    fn cells(&self) -> Vec<Vec<usize>> {
        match &self.support {
            Some(s) => s.clone(),
            None => self.schema.cells().collect(),
        }
    }

    /// The conclusion restates a CI premise (up to symmetry); no witness can exist.
    pub fn conclusion_among_premises(&self) -> bool {
        self.premises.iter().any(|p| match p {
            Statement::Ci(s) => s.equivalent(&self.conclusion),
            Statement::Mutual(m) => {
                m.groups.len() == 2
                    && m.given == self.conclusion.given
                    && CIStatement {
                        x: m.groups[0].clone(),
                        y: m.groups[1].clone(),
                        given: m.given.clone(),
                    }
                    .equivalent(&self.conclusion)
            }
        })
    }
}

/// The two-cause deconfounder query over binary `A1, A2, W, Z`:
/// `A1 ⫫ W`, `A2 ⫫ W`, `A1 ⫫ A2`, `A1 ⫫ A2 | Z`  ⟹  `A1,A2 ⫫ W | Z`.
pub fn two_cause_deconfounder_query() -> ImplicationQuery {
    let premises = ["A1 _||_ W |", "A2 _||_ W |", "A1 _||_ A2 |", "A1 _||_ A2 | Z"]
        .iter()
        .map(|s| Statement::Ci(s.parse().expect("fixed statement")))
        .collect();
    ImplicationQuery::new(
        Schema::binary(&["A1", "A2", "W", "Z"]),
        premises,
        "A1,A2 _||_ W | Z".parse().expect("fixed statement"),
    )
    .expect("fixed query")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Heuristic,
    ExhaustiveGrid,
    Structured,
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchMode::Heuristic => "heuristic",
            SearchMode::ExhaustiveGrid => "exhaustive_grid",
            SearchMode::Structured => "structured",
        })
    }
}

impl FromStr for SearchMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heuristic" => Ok(SearchMode::Heuristic),
            "exhaustive_grid" | "exhaustive-grid" | "grid" => Ok(SearchMode::ExhaustiveGrid),
            "structured" => Ok(SearchMode::Structured),
            other => Err(Error::Config(format!("unknown search mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub seed: u64,
    pub restarts: usize,
    pub max_iterations: usize,
    /// Heuristic snapping grid; in exhaustive mode, the grid denominator `D`.
    pub snap_denominator: u64,
    pub premise_penalty_weight: f64,
    pub mode: SearchMode,
    pub max_cells: u128,
    pub grid_bound: u128,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            seed: 0,
            restarts: 256,
            max_iterations: 2000,
            snap_denominator: 64,
            premise_penalty_weight: 16.0,
            mode: SearchMode::Heuristic,
            max_cells: DEFAULT_MAX_CELLS,
            grid_bound: DEFAULT_GRID_BOUND,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snap_denominator < 2 {
            return Err(Error::Config("snap_denominator must be at least 2".into()));
        }
        if self.restarts == 0 || self.max_iterations == 0 {
            return Err(Error::Config("restarts and max_iterations must be at least 1".into()));
        }
        if !(self.premise_penalty_weight > 0.0) {
            return Err(Error::Config("premise_penalty_weight must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementCheck {
    pub statement: String,
    pub holds: bool,
}

/// Exact re-verification of a candidate table against a query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verification {
    pub premises: Vec<StatementCheck>,
    pub conclusion: StatementCheck,
    /// All premises hold and the conclusion fails.
    pub counterexample: bool,
}

/// Checks a table against a query with the exact independence module.
pub fn verify(q: &ImplicationQuery, table: &JointTable) -> Result<Verification> {
    let premises = q
        .premises
        .iter()
        .map(|p| {
            let holds = match p {
                Statement::Ci(s) => is_ci(table, s)?,
                Statement::Mutual(m) => is_mutually_independent(table, m)?,
            };
            Ok(StatementCheck {
                statement: p.to_string(),
                holds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let conclusion = StatementCheck {
        statement: q.conclusion.to_string(),
        holds: is_ci(table, &q.conclusion)?,
    };
    let counterexample = premises.iter().all(|c| c.holds) && !conclusion.holds;
    Ok(Verification {
        premises,
        conclusion,
        counterexample,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub table: JointTable,
    pub verification: Verification,
    /// Restart (heuristic) or template (structured) index that produced the table.
    pub source_index: Option<usize>,
    pub config: SearchConfig,
}

/// `max |P(x,y,z)·P(z) − P(x,z)·P(y,z)|` over positive strata; zero iff the statement holds.
pub fn violation_score(table: &JointTable, s: &CIStatement) -> Result<Rational> {
    let strata = Strata::build(table, s)?;
    let mut worst = Rational::zero();
    strata.for_each_cell(|lhs, rhs| {
        let d = (lhs - rhs).abs();
        if d > worst {
            worst = d;
        }
        true
    });
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Compiled statements over a fixed cell list

enum Compiled {
    Ci {
        x: Vec<usize>,
        y: Vec<usize>,
        z: Vec<usize>,
        nx: usize,
        ny: usize,
        nz: usize,
    },
    Mutual {
        /// Per group, the group index of every cell.
        groups: Vec<Vec<usize>>,
        sizes: Vec<usize>,
        /// Mixed-radix joint index of every cell.
        joint: Vec<usize>,
        z: Vec<usize>,
        nz: usize,
    },
}

fn radix_index(schema: &Schema, vars: &[usize], cells: &[Vec<usize>]) -> (Vec<usize>, usize) {
    let sizes: Vec<usize> = vars.iter().map(|&v| schema.variables()[v].support.len()).collect();
    let n = sizes.iter().product::<usize>();
    let idx = cells
        .iter()
        .map(|c| vars.iter().zip(&sizes).fold(0, |acc, (&v, &s)| acc * s + c[v]))
        .collect();
    (idx, n)
}

impl Compiled {
    fn ci(schema: &Schema, s: &CIStatement, cells: &[Vec<usize>]) -> Result<Compiled> {
        let (x, nx) = radix_index(schema, &schema.indices(&s.x)?, cells);
        let (y, ny) = radix_index(schema, &schema.indices(&s.y)?, cells);
        let (z, nz) = radix_index(schema, &schema.indices(&s.given)?, cells);
        Ok(Compiled::Ci { x, y, z, nx, ny, nz })
    }

    fn mutual(schema: &Schema, m: &MutualStatement, cells: &[Vec<usize>]) -> Result<Compiled> {
        let mut groups = Vec::new();
        let mut sizes = Vec::new();
        for g in &m.groups {
            let (gi, n) = radix_index(schema, &schema.indices(g)?, cells);
            groups.push(gi);
            sizes.push(n);
        }
        let joint = (0..cells.len())
            .map(|c| groups.iter().zip(&sizes).fold(0, |acc, (g, &s)| acc * s + g[c]))
            .collect();
        let (z, nz) = radix_index(schema, &schema.indices(&m.given)?, cells);
        Ok(Compiled::Mutual {
            groups,
            sizes,
            joint,
            z,
            nz,
        })
    }

    fn statement(schema: &Schema, s: &Statement, cells: &[Vec<usize>]) -> Result<Compiled> {
        match s {
            Statement::Ci(c) => Compiled::ci(schema, c, cells),
            Statement::Mutual(m) => Compiled::mutual(schema, m, cells),
        }
    }

    /// Float violation score (same form as [`violation_score`]).
    fn score(&self, p: &[f64]) -> f64 {
        match self {
            Compiled::Ci { x, y, z, nx, ny, nz } => {
                let (nx, ny, nz) = (*nx, *ny, *nz);
                let mut pz = vec![0.0; nz];
                let mut pxz = vec![0.0; nz * nx];
                let mut pyz = vec![0.0; nz * ny];
                let mut pxyz = vec![0.0; nz * nx * ny];
                for (c, &pc) in p.iter().enumerate() {
                    if pc == 0.0 {
                        continue;
                    }
                    pz[z[c]] += pc;
                    pxz[z[c] * nx + x[c]] += pc;
                    pyz[z[c] * ny + y[c]] += pc;
                    pxyz[(z[c] * nx + x[c]) * ny + y[c]] += pc;
                }
                let mut worst: f64 = 0.0;
                for zi in 0..nz {
                    if pz[zi] <= 0.0 {
                        continue;
                    }
                    for xi in 0..nx {
                        let px = pxz[zi * nx + xi];
                        for yi in 0..ny {
                            let d = pxyz[(zi * nx + xi) * ny + yi] * pz[zi] - px * pyz[zi * ny + yi];
                            worst = worst.max(d.abs());
                        }
                    }
                }
                worst
            }
            Compiled::Mutual {
                groups,
                sizes,
                joint,
                z,
                nz,
            } => {
                let nj: usize = sizes.iter().product();
                let mut pz = vec![0.0; *nz];
                let mut pg: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; nz * s]).collect();
                let mut pj = vec![0.0; nz * nj];
                for (c, &pc) in p.iter().enumerate() {
                    if pc == 0.0 {
                        continue;
                    }
                    pz[z[c]] += pc;
                    for (g, margin) in pg.iter_mut().enumerate() {
                        margin[z[c] * sizes[g] + groups[g][c]] += pc;
                    }
                    pj[z[c] * nj + joint[c]] += pc;
                }
                let m = sizes.len() as i32;
                let mut worst: f64 = 0.0;
                for zi in 0..*nz {
                    if pz[zi] <= 0.0 {
                        continue;
                    }
                    let scale = pz[zi].powi(m - 1);
                    for j in 0..nj {
                        let mut rest = j;
                        let mut prod = 1.0;
                        for g in (0..sizes.len()).rev() {
                            prod *= pg[g][zi * sizes[g] + rest % sizes[g]];
                            rest /= sizes[g];
                        }
                        worst = worst.max((pj[zi * nj + j] * scale - prod).abs());
                    }
                }
                worst
            }
        }
    }

    /// Exact check on integer cell counts. `None` on arithmetic overflow.
    fn holds_counts(&self, n: &[u64]) -> Option<bool> {
        match self {
            Compiled::Ci { x, y, z, nx, ny, nz } => {
                let (nx, ny, nz) = (*nx, *ny, *nz);
                let mut cz = vec![0u128; nz];
                let mut cxz = vec![0u128; nz * nx];
                let mut cyz = vec![0u128; nz * ny];
                let mut cxyz = vec![0u128; nz * nx * ny];
                for (c, &k) in n.iter().enumerate() {
                    if k == 0 {
                        continue;
                    }
                    let k = k as u128;
                    cz[z[c]] += k;
                    cxz[z[c] * nx + x[c]] += k;
                    cyz[z[c] * ny + y[c]] += k;
                    cxyz[(z[c] * nx + x[c]) * ny + y[c]] += k;
                }
                for zi in 0..nz {
                    if cz[zi] == 0 {
                        continue;
                    }
                    for xi in 0..nx {
                        let a = cxz[zi * nx + xi];
                        if a == 0 {
                            continue;
                        }
                        for yi in 0..ny {
                            let lhs = cxyz[(zi * nx + xi) * ny + yi].checked_mul(cz[zi])?;
                            let rhs = a.checked_mul(cyz[zi * ny + yi])?;
                            if lhs != rhs {
                                return Some(false);
                            }
                        }
                    }
                }
                Some(true)
            }
            Compiled::Mutual {
                groups,
                sizes,
                joint,
                z,
                nz,
            } => {
                let nj: usize = sizes.iter().product();
                let mut cz = vec![0u128; *nz];
                let mut cg: Vec<Vec<u128>> = sizes.iter().map(|&s| vec![0; nz * s]).collect();
                let mut cj = vec![0u128; nz * nj];
                for (c, &k) in n.iter().enumerate() {
                    if k == 0 {
                        continue;
                    }
                    let k = k as u128;
                    cz[z[c]] += k;
                    for (g, margin) in cg.iter_mut().enumerate() {
                        margin[z[c] * sizes[g] + groups[g][c]] += k;
                    }
                    cj[z[c] * nj + joint[c]] += k;
                }
                let m = sizes.len() as u32;
                for zi in 0..*nz {
                    if cz[zi] == 0 {
                        continue;
                    }
                    let scale = cz[zi].checked_pow(m - 1)?;
                    for j in 0..nj {
                        let mut rest = j;
                        let mut prod: u128 = 1;
                        for g in (0..sizes.len()).rev() {
                            prod = prod.checked_mul(cg[g][zi * sizes[g] + rest % sizes[g]])?;
                            rest /= sizes[g];
                        }
                        if cj[zi * nj + j].checked_mul(scale)? != prod {
                            return Some(false);
                        }
                    }
                }
                Some(true)
            }
        }
    }
}

struct Engine<'q> {
    query: &'q ImplicationQuery,
    cells: Vec<Vec<usize>>,
    premises: Vec<Compiled>,
    conclusion: Compiled,
}

impl<'q> Engine<'q> {
    fn new(query: &'q ImplicationQuery, max_cells: u128) -> Result<Self> {
        let total = query.schema.cell_count();
        if total > max_cells {
            return Err(Error::SchemaTooLarge {
                cells: total,
                bound: max_cells,
            });
        }
        let cells = query.cells();
        let premises = query
            .premises
            .iter()
            .map(|p| Compiled::statement(&query.schema, p, &cells))
            .collect::<Result<Vec<_>>>()?;
        let conclusion = Compiled::ci(&query.schema, &query.conclusion, &cells)?;
        Ok(Engine {
            query,
            cells,
            premises,
            conclusion,
        })
    }

    fn objective(&self, p: &[f64], weight: f64) -> f64 {
        let penalty: f64 = self.premises.iter().map(|c| c.score(p)).sum();
        self.conclusion.score(p) - weight * penalty
    }

    /// Fast integer pre-check; `None` when it cannot decide.
    fn counts_counterexample(&self, n: &[u64]) -> Option<bool> {
        for p in &self.premises {
            if !p.holds_counts(n)? {
                return Some(false);
            }
        }
        Some(!self.conclusion.holds_counts(n)?)
    }

    fn table_from_counts(&self, n: &[u64], denom: u64) -> Result<JointTable> {
        let entries: BTreeMap<Vec<usize>, Rational> = self
            .cells
            .iter()
            .zip(n)
            .filter(|(_, &k)| k > 0)
            .map(|(c, &k)| (c.clone(), Rational::from_counts(k, denom)))
            .collect();
        JointTable::from_indexed(self.query.schema.clone(), entries)
    }

    /// Verifies exactly; returns the table only if it is a counterexample.
    fn accept_counts(&self, n: &[u64], denom: u64) -> Result<Option<(JointTable, Verification)>> {
        if self.counts_counterexample(n) == Some(false) {
            return Ok(None);
        }
        let table = self.table_from_counts(n, denom)?;
        let v = verify(self.query, &table)?;
        Ok(v.counterexample.then_some((table, v)))
    }
}

/// Largest-remainder rounding of `p` to integer counts summing to `denom`.
fn snap(p: &[f64], denom: u64) -> Vec<u64> {
    let total: f64 = p.iter().sum();
    let scaled: Vec<f64> = p.iter().map(|&v| v / total * denom as f64).collect();
    let mut counts: Vec<u64> = scaled.iter().map(|v| v.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = scaled[a] - scaled[a].floor();
        let rb = scaled[b] - scaled[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(denom.saturating_sub(assigned) as usize) {
        counts[i] += 1;
    }
    counts
}

/// `denom`, then repeated halvings while even, down to 2.
fn snap_grids(denom: u64) -> Vec<u64> {
    let mut out = vec![denom];
    let mut d = denom;
    while d % 2 == 0 && d / 2 >= 2 {
        d /= 2;
        out.push(d);
    }
    out
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

fn initial_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // sparse starts: each cell kept with probability 1/2, exponential weights
    loop {
        let p: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    -(1.0 - rng.gen::<f64>()).ln()
                } else {
                    0.0
                }
            })
            .collect();
        let total: f64 = p.iter().sum();
        if total > 0.0 {
            return p.into_iter().map(|v| v / total).collect();
        }
    }
}

fn heuristic_restart(engine: &Engine, cfg: &SearchConfig, restart: usize) -> Result<Option<(JointTable, Verification)>> {
    let n = engine.cells.len();
    let mut rng = restart_rng(cfg.seed, restart);
    let mut p = initial_point(&mut rng, n);
    let grids = snap_grids(cfg.snap_denominator);
    let iters = cfg.max_iterations;
    let ramp = (iters / 2).max(1);
    let checkpoints = 4.min(iters);
    let mut step = 0.25;
    let weight_at = |t: usize| cfg.premise_penalty_weight * ((t + 1) as f64 / ramp as f64).min(1.0);
    let mut w = weight_at(0);
    let mut obj = engine.objective(&p, w);
    for t in 0..iters {
        let w_t = weight_at(t);
        if w_t != w {
            w = w_t;
            obj = engine.objective(&p, w);
        }
        if n >= 2 {
            let from = rng.gen_range(0..n);
            let mut to = rng.gen_range(0..n - 1);
            if to >= from {
                to += 1;
            }
            if p[from] > 0.0 {
                let amount = if rng.gen_bool(0.2) {
                    p[from]
                } else {
                    (p[from] * rng.gen::<f64>() * step * 4.0).min(p[from])
                };
                let (old_from, old_to) = (p[from], p[to]);
                p[from] -= amount;
                p[to] += amount;
                let cand = engine.objective(&p, w);
                if cand >= obj {
                    obj = cand;
                } else {
                    p[from] = old_from;
                    p[to] = old_to;
                    step = (step * 0.999).max(1e-3);
                }
            }
        }
        if (t + 1) % (iters / checkpoints).max(1) == 0 || t + 1 == iters {
            for &d in &grids {
                let counts = snap(&p, d);
                if let Some(hit) = engine.accept_counts(&counts, d)? {
                    return Ok(Some(hit));
                }
            }
        }
    }
    Ok(None)
}

fn heuristic_search(engine: &Engine, cfg: &SearchConfig) -> Result<Option<(JointTable, Verification, usize)>> {
    let chunk = rayon::current_num_threads().max(1) * 4;
    let mut start = 0;
    while start < cfg.restarts {
        let end = (start + chunk).min(cfg.restarts);
        let results: Vec<Result<Option<(JointTable, Verification)>>> = (start..end)
            .into_par_iter()
            .map(|r| heuristic_restart(engine, cfg, r))
            .collect();
        for (offset, res) in results.into_iter().enumerate() {
            if let Some((t, v)) = res? {
                return Ok(Some((t, v, start + offset)));
            }
        }
        start = end;
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Structured templates

#[derive(Clone, Copy, Debug)]
enum Filler {
    /// Point mass on the first label.
    Point,
    /// Uniform over the full support.
    Uniform,
}

enum Gadget {
    /// `c = a XOR b` on the first two labels of each, `(a, b)` fair coins.
    Xor([usize; 3]),
    /// Every listed variable equals one fair coin on its first two labels.
    Copy(Vec<usize>),
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn gadget_table(schema: &Schema, gadget: &Gadget, fillers: &[Filler]) -> Option<JointTable> {
    let vars = schema.variables();
    let members: Vec<usize> = match gadget {
        Gadget::Xor(t) => t.to_vec(),
        Gadget::Copy(s) => s.clone(),
    };
    if members.iter().any(|&v| vars[v].support.len() < 2) {
        return None;
    }
    // rows over the gadget members: (member labels, weight numerator) with common denominator
    let gadget_rows: Vec<(Vec<usize>, u64)> = match gadget {
        Gadget::Xor(_) => vec![(vec![0, 0, 0], 1), (vec![0, 1, 1], 1), (vec![1, 0, 1], 1), (vec![1, 1, 0], 1)],
        Gadget::Copy(s) => vec![(vec![0; s.len()], 1), (vec![1; s.len()], 1)],
    };
    let gadget_den: u64 = gadget_rows.iter().map(|r| r.1).sum();
    let others: Vec<usize> = (0..vars.len()).filter(|v| !members.contains(v)).collect();
    let mut entries: BTreeMap<Vec<usize>, Rational> = BTreeMap::new();
    let choices: Vec<Vec<usize>> = others
        .iter()
        .zip(fillers)
        .map(|(&v, f)| match f {
            Filler::Point => vec![0],
            Filler::Uniform => (0..vars[v].support.len()).collect(),
        })
        .collect();
    let filler_den: u64 = choices.iter().map(|c| c.len() as u64).product();
    let mut pos = vec![0usize; choices.len()];
    loop {
        for (labels, w) in &gadget_rows {
            let mut key = vec![0usize; vars.len()];
            for (&m, &l) in members.iter().zip(labels) {
                key[m] = l;
            }
            for (i, &v) in others.iter().enumerate() {
                key[v] = choices[i][pos[i]];
            }
            entries.insert(key, Rational::from_counts(*w, gadget_den * filler_den));
        }
        let mut i = pos.len();
        let mut done = true;
        while i > 0 {
            i -= 1;
            pos[i] += 1;
            if pos[i] < choices[i].len() {
                done = false;
                break;
            }
            pos[i] = 0;
        }
        if done {
            break;
        }
    }
    JointTable::from_indexed(schema.clone(), entries).ok()
}

fn structured_search(q: &ImplicationQuery) -> Result<Option<(JointTable, Verification, usize)>> {
    let schema = &q.schema;
    let n = schema.len();
    let mut gadgets: Vec<Gadget> = subsets(n, 3)
        .into_iter()
        .map(|s| Gadget::Xor([s[0], s[1], s[2]]))
        .collect();
    for k in 2..=n {
        gadgets.extend(subsets(n, k).into_iter().map(Gadget::Copy));
    }
    let allowed: Option<std::collections::BTreeSet<&Vec<usize>>> = q.support.as_ref().map(|s| s.iter().collect());
    let mut index = 0usize;
    for gadget in &gadgets {
        let members = match gadget {
            Gadget::Xor(_) => 3,
            Gadget::Copy(s) => s.len(),
        };
        let free = n - members;
        for mask in 0..(1usize << free) {
            if index >= MAX_TEMPLATES {
                return Ok(None);
            }
            let fillers: Vec<Filler> = (0..free)
                .map(|i| if mask >> i & 1 == 1 { Filler::Uniform } else { Filler::Point })
                .collect();
            let current = index;
            index += 1;
            let Some(table) = gadget_table(schema, gadget, &fillers) else {
                continue;
            };
            if let Some(allowed) = &allowed {
                if table.entries().any(|(k, _)| !allowed.contains(&k.to_vec())) {
                    continue;
                }
            }
            let v = verify(q, &table)?;
            if v.counterexample {
                return Ok(Some((table, v, current)));
            }
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Exhaustive grid

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Number of tables with entries in `{0, 1/D, …, 1}` over `cells` cells.
pub fn grid_size(cells: usize, denom: u64) -> u128 {
    if cells == 0 {
        return 0;
    }
    binomial(denom as u128 + cells as u128 - 1, cells as u128 - 1)
}

/// Lexicographically first table on the `1/denom` grid that is an exact
/// counterexample, or `None` if none exists at that resolution.
pub fn exhaustive_grid_search(q: &ImplicationQuery, denom: u64) -> Result<Option<JointTable>> {
    exhaustive_grid_search_bounded(q, denom, DEFAULT_MAX_CELLS, DEFAULT_GRID_BOUND)
}

pub fn exhaustive_grid_search_bounded(
    q: &ImplicationQuery,
    denom: u64,
    max_cells: u128,
    grid_bound: u128,
) -> Result<Option<JointTable>> {
    Ok(exhaustive_witness(q, denom, max_cells, grid_bound)?.map(|(t, _)| t))
}

fn exhaustive_witness(
    q: &ImplicationQuery,
    denom: u64,
    max_cells: u128,
    grid_bound: u128,
) -> Result<Option<(JointTable, Verification)>> {
    if denom == 0 {
        return Err(Error::Config("grid denominator must be positive".into()));
    }
    let engine = Engine::new(q, max_cells)?;
    let m = engine.cells.len();
    let tables = grid_size(m, denom);
    if tables > grid_bound {
        return Err(Error::GridTooLarge {
            tables,
            bound: grid_bound,
        });
    }
    let mut counts = vec![0u64; m];
    counts[m - 1] = denom;
    loop {
        if let Some(hit) = engine.accept_counts(&counts, denom)? {
            return Ok(Some(hit));
        }
        // next composition in lexicographic order
        let Some(i) = (0..m - 1).rev().find(|&i| counts[i + 1..].iter().any(|&c| c > 0)) else {
            return Ok(None);
        };
        counts[i] += 1;
        let used: u64 = counts[..=i].iter().sum();
        for c in counts[i + 1..].iter_mut() {
            *c = 0;
        }
        counts[m - 1] = denom - used;
    }
}

/// Runs the configured search. `Ok(None)` means the budget ran out without
/// an exactly verified witness.
pub fn find_counterexample(q: &ImplicationQuery, cfg: &SearchConfig) -> Result<Option<Witness>> {
    cfg.validate()?;
    let engine = Engine::new(q, cfg.max_cells)?;
    if q.conclusion_among_premises() {
        return Ok(None);
    }
    let found = match cfg.mode {
        SearchMode::Heuristic => heuristic_search(&engine, cfg)?.map(|(t, v, i)| (t, v, Some(i))),
        SearchMode::Structured => structured_search(q)?.map(|(t, v, i)| (t, v, Some(i))),
        SearchMode::ExhaustiveGrid => {
            exhaustive_witness(q, cfg.snap_denominator, cfg.max_cells, cfg.grid_bound)?.map(|(t, v)| (t, v, None))
        }
    };
    Ok(found.map(|(table, verification, source_index)| Witness {
        table,
        verification,
        source_index,
        config: cfg.clone(),
    }))
}

// ---------------------------------------------------------------------------
// Query file format

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryJson {
    pub variables: Vec<VariableJson>,
    pub premises: Vec<Statement>,
    pub conclusion: CIStatement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<OrderedLabels>>,
}

impl QueryJson {
    pub fn into_query(self) -> Result<ImplicationQuery> {
        let q = ImplicationQuery::new(schema_from_json(&self.variables)?, self.premises, self.conclusion)?;
        match self.support {
            Some(cells) => q.with_support(&cells.iter().map(Assignment::from).collect::<Vec<_>>()),
            None => Ok(q),
        }
    }
}

impl From<&ImplicationQuery> for QueryJson {
    fn from(q: &ImplicationQuery) -> Self {
        let vars = q.schema.variables();
        QueryJson {
            variables: schema_to_json(&q.schema),
            premises: q.premises.clone(),
            conclusion: q.conclusion.clone(),
            support: q.support.as_ref().map(|cells| {
                cells
                    .iter()
                    .map(|k| {
                        OrderedLabels(
                            k.iter()
                                .zip(vars)
                                .map(|(&l, v)| (v.name.clone(), v.support[l].clone()))
                                .collect(),
                        )
                    })
                    .collect()
            }),
        }
    }
}

pub fn query_from_json(s: &str) -> Result<ImplicationQuery> {
    let raw: QueryJson = serde_json::from_str(s)?;
    raw.into_query()
}

/// Search output: witness table, verification record and config echo.
#[derive(Debug, Clone, Serialize)]
pub struct WitnessJson {
    pub table: TableJson,
    pub verification: Verification,
    pub source_index: Option<usize>,
    pub config: SearchConfig,
}

impl From<&Witness> for WitnessJson {
    fn from(w: &Witness) -> Self {
        WitnessJson {
            table: TableJson::from(&w.table),
            verification: w.verification.clone(),
            source_index: w.source_index,
            config: w.config.clone(),
        }
    }
}
