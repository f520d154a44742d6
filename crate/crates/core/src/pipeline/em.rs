//! Latent class model (mixture of independent categoricals) fitted by EM.
//!
//! The M-step adds a pseudo-count `smoothing` to every categorical cell, so
//! EM ascends the smoothed objective
//! `loglik + smoothing · Σ log θ` (a Dirichlet MAP). That objective is the
//! quantity checked for monotonicity on every iteration.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{schema_from_json, schema_to_json, VariableJson};
use crate::rational::Rational;
use crate::table::{Assignment, JointTable, Schema};

use super::sampling::Dataset;

/// Relative slack for the per-iteration monotonicity check (float rounding only).
pub const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct LatentClassModel {
    causes: Schema,
    weights: Vec<f64>,
    /// `[class][cause][label]`.
    categoricals: Vec<Vec<Vec<f64>>>,
    fitted: bool,
    smoothing: f64,
}

impl LatentClassModel {
    pub fn new(
        causes: Schema,
        weights: Vec<f64>,
        categoricals: Vec<Vec<Vec<f64>>>,
        fitted: bool,
        smoothing: f64,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 || categoricals.len() != k {
            return Err(Error::Config("class count mismatch".into()));
        }
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        let close = |s: f64| (s - 1.0).abs() <= 1e-9;
        if weights.iter().any(|w| !(*w >= 0.0)) || !close(weights.iter().sum()) {
            return bad("class weights must be non-negative and sum to 1");
        }
        for per_cause in &categoricals {
            if per_cause.len() != causes.len() {
                return bad("categorical count does not match the causes");
            }
            for (dist, v) in per_cause.iter().zip(causes.variables()) {
                if dist.len() != v.support.len() || dist.iter().any(|p| !(*p >= 0.0)) || !close(dist.iter().sum()) {
                    return bad(&format!("invalid categorical for `{}`", v.name));
                }
            }
        }
        Ok(LatentClassModel {
            causes,
            weights,
            categoricals,
            fitted,
            smoothing,
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn causes(&self) -> &Schema {
        &self.causes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn categorical(&self, class: usize, cause: usize) -> &[f64] {
        &self.categoricals[class][cause]
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    fn class_log_joint(&self, row: &[usize]) -> Vec<f64> {
        (0..self.k())
            .map(|c| {
                let mut lp = self.weights[c].ln();
                for (j, &l) in row.iter().enumerate() {
                    lp += self.categoricals[c][j][l].ln();
                }
                lp
            })
            .collect()
    }

    /// Total log-likelihood of the rows under the mixture.
    pub fn log_likelihood(&self, data: &Dataset) -> f64 {
        data.pattern_counts()
            .iter()
            .map(|(row, &n)| n as f64 * log_sum_exp(&self.class_log_joint(row)))
            .sum()
    }

    fn row_of(&self, a: &Assignment) -> Result<Vec<usize>> {
        self.causes
            .variables()
            .iter()
            .map(|v| {
                let label = a.get(&v.name).ok_or_else(|| Error::IncompleteAssignment(v.name.clone()))?;
                v.label_index(label).ok_or_else(|| Error::UnknownOutcome {
                    var: v.name.clone(),
                    label: label.to_string(),
                })
            })
            .collect()
    }

    /// Posterior over classes for a full cause assignment.
    pub fn substitute_confounder(&self, a: &Assignment) -> Result<SubstituteConfounder<f64>> {
        Ok(self.posterior_row(&self.row_of(a)?))
    }

    pub(crate) fn posterior_row(&self, row: &[usize]) -> SubstituteConfounder<f64> {
        let lj = self.class_log_joint(row);
        let lse = log_sum_exp(&lj);
        if lse == f64::NEG_INFINITY {
            let k = self.k();
            return SubstituteConfounder {
                posterior: vec![1.0 / k as f64; k],
                map_class: 0,
                zero_likelihood: true,
            };
        }
        let posterior: Vec<f64> = lj.iter().map(|l| (l - lse).exp()).collect();
        let map_class = argmax_first(&posterior);
        SubstituteConfounder {
            posterior,
            map_class,
            zero_likelihood: false,
        }
    }

    /// MAP class index for every row of `data`.
    pub fn map_classes(&self, data: &Dataset) -> Vec<usize> {
        let mut cache: BTreeMap<&Vec<usize>, usize> = BTreeMap::new();
        data.rows()
            .iter()
            .map(|r| *cache.entry(r).or_insert_with(|| self.posterior_row(r).map_class))
            .collect()
    }

    /// Sum over causes of the total-variation distance between two classes' categoricals.
    pub fn class_distance(&self, c: usize, other: &LatentClassModel, d: usize) -> f64 {
        self.categoricals[c]
            .iter()
            .zip(&other.categoricals[d])
            .map(|(p, q)| 0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .sum()
    }

    /// Same model with classes reordered: new class `i` is old class `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> LatentClassModel {
        LatentClassModel {
            causes: self.causes.clone(),
            weights: order.iter().map(|&c| self.weights[c]).collect(),
            categoricals: order.iter().map(|&c| self.categoricals[c].clone()).collect(),
            fitted: self.fitted,
            smoothing: self.smoothing,
        }
    }
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Posterior over latent classes and its MAP class (ties go to the lowest index).
#[derive(Clone, Debug, PartialEq)]
pub struct SubstituteConfounder<T> {
    pub posterior: Vec<T>,
    pub map_class: usize,
    /// The assignment has zero likelihood under every class; the posterior is uniform.
    pub zero_likelihood: bool,
}

/// Latent class model with exact parameters, e.g. read off a known table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactLatentClassModel {
    causes: Schema,
    /// Label of each class in the source variable.
    class_labels: Vec<String>,
    weights: Vec<Rational>,
    categoricals: Vec<Vec<Vec<Rational>>>,
}

impl ExactLatentClassModel {
    /// Classes are the positive-probability values of `z`; class `c` has weight
    /// `P(z = c)` and categoricals `P(cause | z = c)`.
    pub fn from_table(table: &JointTable, causes: &[String], z: &str) -> Result<Self> {
        let schema = table.schema();
        let zi = schema.require(z)?;
        let ci = causes.iter().map(|c| schema.require(c)).collect::<Result<Vec<_>>>()?;
        let cause_schema = Schema::new(ci.iter().map(|&i| schema.variables()[i].clone()).collect())?;
        let zvar = &schema.variables()[zi];
        let mut class_labels = Vec::new();
        let mut weights = Vec::new();
        let mut categoricals = Vec::new();
        for (li, label) in zvar.support.iter().enumerate() {
            let mut per_cause: Vec<Vec<Rational>> = ci
                .iter()
                .map(|&i| vec![Rational::zero(); schema.variables()[i].support.len()])
                .collect();
            let mut pz = Rational::zero();
            for (k, p) in table.entries() {
                if k[zi] != li {
                    continue;
                }
                pz += p;
                for (j, &i) in ci.iter().enumerate() {
                    per_cause[j][k[i]] += p;
                }
            }
            if pz.is_zero() {
                continue;
            }
            for dist in per_cause.iter_mut() {
                for q in dist.iter_mut() {
                    *q = &*q / &pz;
                }
            }
            class_labels.push(label.clone());
            weights.push(pz);
            categoricals.push(per_cause);
        }
        Ok(ExactLatentClassModel {
            causes: cause_schema,
            class_labels,
            weights,
            categoricals,
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    /// Exact posterior; sums to exactly 1 unless the assignment has zero likelihood.
    pub fn substitute_confounder(&self, a: &Assignment) -> Result<SubstituteConfounder<Rational>> {
        let row = self.to_model().row_of(a)?;
        let joint: Vec<Rational> = (0..self.k())
            .map(|c| {
                row.iter()
                    .enumerate()
                    .fold(self.weights[c].clone(), |acc, (j, &l)| acc * &self.categoricals[c][j][l])
            })
            .collect();
        let total: Rational = joint.iter().sum();
        if total.is_zero() {
            let u = Rational::from_counts(1, self.k() as u64);
            return Ok(SubstituteConfounder {
                posterior: vec![u; self.k()],
                map_class: 0,
                zero_likelihood: true,
            });
        }
        let posterior: Vec<Rational> = joint.iter().map(|p| p / &total).collect();
        let mut map_class = 0;
        for (i, p) in posterior.iter().enumerate() {
            if *p > posterior[map_class] {
                map_class = i;
            }
        }
        Ok(SubstituteConfounder {
            posterior,
            map_class,
            zero_likelihood: false,
        })
    }

    /// Float copy, flagged as not fitted.
    pub fn to_model(&self) -> LatentClassModel {
        LatentClassModel {
            causes: self.causes.clone(),
            weights: self.weights.iter().map(Rational::to_f64).collect(),
            categoricals: self
                .categoricals
                .iter()
                .map(|pc| pc.iter().map(|d| d.iter().map(Rational::to_f64).collect()).collect())
                .collect(),
            fitted: false,
            smoothing: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Relative change of the objective below which a run counts as converged.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub smoothing: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iter: 500,
            tol: 1e-10,
            restarts: 8,
            seed: 0,
            smoothing: 1e-6,
        }
    }
}

/// One EM run from one initialization.
#[derive(Clone, Debug, PartialEq)]
pub struct EmRun {
    pub restart: usize,
    pub log_likelihood: f64,
    /// Smoothed objective after every iteration.
    pub objective_trace: Vec<f64>,
    /// Plain log-likelihood after every iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Iterations where the objective dropped by more than [`MONOTONE_SLACK`].
    pub monotone_violations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmFit {
    pub model: LatentClassModel,
    pub log_likelihood: f64,
    pub converged: bool,
    /// Index into `runs` of the selected run.
    pub best_restart: usize,
    pub runs: Vec<EmRun>,
    /// Posterior class probabilities per data row.
    pub responsibilities: Vec<Vec<f64>>,
}

struct Patterns {
    rows: Vec<Vec<usize>>,
    counts: Vec<f64>,
    sizes: Vec<usize>,
}

fn m_step(p: &Patterns, resp: &[Vec<f64>], k: usize, smoothing: f64) -> (Vec<f64>, Vec<Vec<Vec<f64>>>) {
    let total: f64 = p.counts.iter().sum();
    let mut nk = vec![0.0; k];
    let mut cells: Vec<Vec<Vec<f64>>> = (0..k)
        .map(|_| p.sizes.iter().map(|&s| vec![smoothing; s]).collect())
        .collect();
    for (i, row) in p.rows.iter().enumerate() {
        for c in 0..k {
            let w = p.counts[i] * resp[i][c];
            nk[c] += w;
            for (j, &l) in row.iter().enumerate() {
                cells[c][j][l] += w;
            }
        }
    }
    let weights = nk.iter().map(|n| n / total).collect();
    for per_cause in cells.iter_mut() {
        for dist in per_cause.iter_mut() {
            let s: f64 = dist.iter().sum();
            if s > 0.0 {
                dist.iter_mut().for_each(|v| *v /= s);
            } else {
                let u = 1.0 / dist.len() as f64;
                dist.iter_mut().for_each(|v| *v = u);
            }
        }
    }
    (weights, cells)
}

/// E-step; returns responsibilities, log-likelihood and smoothed objective.
fn e_step(p: &Patterns, weights: &[f64], cats: &[Vec<Vec<f64>>], smoothing: f64) -> (Vec<Vec<f64>>, f64, f64) {
    let k = weights.len();
    let mut resp = Vec::with_capacity(p.rows.len());
    let mut ll = 0.0;
    for (i, row) in p.rows.iter().enumerate() {
        let lj: Vec<f64> = (0..k)
            .map(|c| {
                if weights[c] == 0.0 {
                    return f64::NEG_INFINITY;
                }
                row.iter()
                    .enumerate()
                    .fold(weights[c].ln(), |acc, (j, &l)| acc + cats[c][j][l].ln())
            })
            .collect();
        let lse = log_sum_exp(&lj);
        ll += p.counts[i] * lse;
        resp.push(lj.iter().map(|l| (l - lse).exp()).collect());
    }
    let prior: f64 = if smoothing > 0.0 {
        cats.iter()
            .zip(weights)
            .filter(|(_, &w)| w > 0.0)
            .flat_map(|(pc, _)| pc.iter().flatten())
            .map(|v| smoothing * v.ln())
            .sum()
    } else {
        0.0
    };
    (resp, ll, ll + prior)
}

fn run_once(p: &Patterns, k: usize, cfg: &EmConfig, restart: usize) -> (EmRun, Vec<f64>, Vec<Vec<Vec<f64>>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart as u64);
    let init: Vec<Vec<f64>> = p
        .rows
        .iter()
        .map(|_| {
            let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        })
        .collect();
    let (mut weights, mut cats) = m_step(p, &init, k, cfg.smoothing);
    let mut objective_trace = Vec::new();
    let mut loglik_trace = Vec::new();
    let mut converged = false;
    let mut violations = 0;
    let mut ll = f64::NEG_INFINITY;
    for _ in 0..cfg.max_iter {
        let (resp, l, obj) = e_step(p, &weights, &cats, cfg.smoothing);
        ll = l;
        if let Some(&prev) = objective_trace.last() {
            let prev: f64 = prev;
            if obj < prev - MONOTONE_SLACK * prev.abs().max(1.0) {
                violations += 1;
            }
            debug_assert!(
                obj >= prev - MONOTONE_SLACK * prev.abs().max(1.0),
                "EM objective decreased: {prev} -> {obj}"
            );
            objective_trace.push(obj);
            loglik_trace.push(l);
            if (obj - prev).abs() <= cfg.tol * prev.abs().max(1.0) {
                converged = true;
                break;
            }
        } else {
            objective_trace.push(obj);
            loglik_trace.push(l);
        }
        (weights, cats) = m_step(p, &resp, k, cfg.smoothing);
    }
    let run = EmRun {
        restart,
        log_likelihood: ll,
        iterations: objective_trace.len(),
        objective_trace,
        loglik_trace,
        converged,
        monotone_violations: violations,
    };
    (run, weights, cats)
}

/// Fits a `k`-class latent class model; the run with the highest
/// log-likelihood wins (ties go to the lowest restart index).
pub fn fit_latent_class_em(data: &Dataset, k: usize, cfg: &EmConfig) -> Result<EmFit> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if cfg.restarts == 0 || cfg.max_iter == 0 || !(cfg.smoothing >= 0.0) {
        return Err(Error::Config("invalid EM configuration".into()));
    }
    let counts = data.pattern_counts();
    let patterns = Patterns {
        rows: counts.keys().cloned().collect(),
        counts: counts.values().map(|&n| n as f64).collect(),
        sizes: data.schema().variables().iter().map(|v| v.support.len()).collect(),
    };
    let (runs, params): (Vec<EmRun>, Vec<(Vec<f64>, Vec<Vec<Vec<f64>>>)>) = if k == 1 {
        // one class: the smoothed empirical marginals, no iteration
        let resp = vec![vec![1.0]; patterns.rows.len()];
        let (w, c) = m_step(&patterns, &resp, 1, cfg.smoothing);
        let (_, ll, obj) = e_step(&patterns, &w, &c, cfg.smoothing);
        let run = EmRun {
            restart: 0,
            log_likelihood: ll,
            objective_trace: vec![obj],
            loglik_trace: vec![ll],
            iterations: 0,
            converged: true,
            monotone_violations: 0,
        };
        (vec![run], vec![(w, c)])
    } else {
        (0..cfg.restarts)
            .into_par_iter()
            .map(|r| {
                let (run, w, c) = run_once(&patterns, k, cfg, r);
                (run, (w, c))
            })
            .collect::<Vec<_>>()
            .into_iter()
            .unzip()
    };
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.log_likelihood > runs[best].log_likelihood {
            best = i;
        }
    }
    let (weights, cats) = params[best].clone();
    let model = LatentClassModel {
        causes: data.schema().clone(),
        weights,
        categoricals: cats,
        fitted: true,
        smoothing: cfg.smoothing,
    };
    let responsibilities = data.rows().iter().map(|r| model.posterior_row(r).posterior).collect();
    Ok(EmFit {
        log_likelihood: runs[best].log_likelihood,
        converged: runs[best].converged,
        best_restart: best,
        model,
        runs,
        responsibilities,
    })
}

/// Permutation `order` with fitted class `order[i]` matched to true class `i`,
/// minimizing total class distance. Exhaustive for `k ≤ 5`, greedy beyond.
pub fn align_classes(fitted: &LatentClassModel, truth: &LatentClassModel) -> Vec<usize> {
    let k = truth.k().min(fitted.k());
    let cost = |t: usize, f: usize| fitted.class_distance(f, truth, t);
    if fitted.k() <= 5 {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let classes: Vec<usize> = (0..fitted.k()).collect();
        for perm in permutations(&classes) {
            let c: f64 = (0..k).map(|t| cost(t, perm[t])).sum();
            if best.as_ref().is_none_or(|(b, _)| c < *b) {
                best = Some((c, perm));
            }
        }
        best.map(|(_, p)| p).unwrap_or_default()
    } else {
        let mut used = vec![false; fitted.k()];
        let mut order = Vec::with_capacity(fitted.k());
        for t in 0..k {
            let f = (0..fitted.k())
                .filter(|&f| !used[f])
                .min_by(|&a, &b| cost(t, a).total_cmp(&cost(t, b)))
                .expect("unused class");
            used[f] = true;
            order.push(f);
        }
        order.extend((0..fitted.k()).filter(|&f| !used[f]));
        order
    }
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelJson {
    pub k: usize,
    pub causes: Vec<VariableJson>,
    pub weights: Vec<String>,
    /// One map per class: cause name to probabilities in support order.
    pub categoricals: Vec<BTreeMap<String, Vec<String>>>,
    pub fitted: bool,
    pub smoothing: String,
}

impl From<&LatentClassModel> for ModelJson {
    fn from(m: &LatentClassModel) -> Self {
        let dec = |v: &f64| format!("{v}");
        ModelJson {
            k: m.k(),
            causes: schema_to_json(&m.causes),
            weights: m.weights.iter().map(dec).collect(),
            categoricals: m
                .categoricals
                .iter()
                .map(|pc| {
                    m.causes
                        .variables()
                        .iter()
                        .zip(pc)
                        .map(|(v, d)| (v.name.clone(), d.iter().map(dec).collect()))
                        .collect()
                })
                .collect(),
            fitted: m.fitted,
            smoothing: dec(&m.smoothing),
        }
    }
}

impl ModelJson {
    pub fn into_model(self) -> Result<LatentClassModel> {
        let num = |s: &String| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("invalid decimal `{s}`")))
        };
        let causes = schema_from_json(&self.causes)?;
        if self.k != self.weights.len() || self.k != self.categoricals.len() {
            return Err(Error::Config("k does not match the parameter lists".into()));
        }
        let weights = self.weights.iter().map(num).collect::<Result<Vec<_>>>()?;
        let categoricals = self
            .categoricals
            .iter()
            .map(|pc| {
                causes
                    .variables()
                    .iter()
                    .map(|v| {
                        pc.get(&v.name)
                            .ok_or_else(|| Error::UnknownVariable(v.name.clone()))?
                            .iter()
                            .map(num)
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        LatentClassModel::new(causes, weights, categoricals, self.fitted, num(&self.smoothing)?)
    }
}
