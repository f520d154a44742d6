//! Named finite-support variables and exact joint probability tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rational::Rational;

/// A named variable with an ordered, finite support of opaque outcome labels.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Variable {
    pub name: String,
    pub support: Vec<String>,
}

impl Variable {
    pub fn new<S: Into<String>>(name: impl Into<String>, support: impl IntoIterator<Item = S>) -> Self {
        Variable {
            name: name.into(),
            support: support.into_iter().map(Into::into).collect(),
        }
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.support.iter().position(|l| l == label)
    }
}

/// Ordered list of variables; the order fixes the canonical entry order of tables.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Schema {
    vars: Vec<Variable>,
}

impl Schema {
    pub fn new(vars: Vec<Variable>) -> Result<Self> {
        let mut names = BTreeSet::new();
        for v in &vars {
            if !names.insert(v.name.as_str()) {
                return Err(Error::DuplicateVariable(v.name.clone()));
            }
            if v.support.is_empty() {
                return Err(Error::InvalidSupport {
                    var: v.name.clone(),
                    reason: "empty support".into(),
                });
            }
            let mut seen = BTreeSet::new();
            for l in &v.support {
                if !seen.insert(l.as_str()) {
                    return Err(Error::InvalidSupport {
                        var: v.name.clone(),
                        reason: format!("label `{l}` repeated"),
                    });
                }
            }
        }
        Ok(Schema { vars })
    }

    /// Variables that all share the support `{"0","1"}`.
    pub fn binary(names: &[&str]) -> Self {
        Schema::new(names.iter().map(|n| Variable::new(*n, ["0", "1"])).collect())
            .expect("binary schema with duplicate names")
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.iter().map(|v| v.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn variable(&self, name: &str) -> Result<&Variable> {
        Ok(&self.vars[self.require(name)?])
    }

    /// Number of full assignments (product of support sizes).
    pub fn cell_count(&self) -> u128 {
        self.vars
            .iter()
            .fold(1u128, |acc, v| acc.saturating_mul(v.support.len() as u128))
    }

    pub(crate) fn sub_schema(&self, indices: &[usize]) -> Schema {
        Schema {
            vars: indices.iter().map(|&i| self.vars[i].clone()).collect(),
        }
    }

    pub(crate) fn resolve(&self, a: &Assignment) -> Result<Vec<(usize, usize)>> {
        a.iter()
            .map(|(name, label)| {
                let vi = self.require(name)?;
                let li = self.vars[vi]
                    .label_index(label)
                    .ok_or_else(|| Error::UnknownOutcome {
                        var: name.to_string(),
                        label: label.to_string(),
                    })?;
                Ok((vi, li))
            })
            .collect()
    }

    /// Sorted, deduplicated schema indices for a set of names.
    pub(crate) fn indices<I, S>(&self, names: I) -> Result<Vec<usize>>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out = names
            .into_iter()
            .map(|n| self.require(n.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Iterate every full assignment in canonical (odometer) order.
    pub(crate) fn cells(&self) -> CellIter {
        CellIter {
            sizes: self.vars.iter().map(|v| v.support.len()).collect(),
            next: Some(vec![0; self.vars.len()]),
        }
    }
}

pub(crate) struct CellIter {
    sizes: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for CellIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut i = succ.len();
        loop {
            if i == 0 {
                self.next = None;
                break;
            }
            i -= 1;
            succ[i] += 1;
            if succ[i] < self.sizes[i] {
                self.next = Some(succ);
                break;
            }
            succ[i] = 0;
        }
        Some(current)
    }
}

/// A (possibly partial) map from variable name to outcome label.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Assignment(BTreeMap<String, String>);

impl Assignment {
    pub fn new() -> Self {
        Assignment(BTreeMap::new())
    }

    pub fn from_pairs<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Self {
        Assignment(pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }

    pub fn with(mut self, name: impl Into<String>, label: impl Into<String>) -> Self {
        self.0.insert(name.into(), label.into());
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, label: impl Into<String>) -> Option<String> {
        self.0.insert(name.into(), label.into())
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, v) in &self.0 {
            if !first {
                f.write_str(",")?;
            }
            first = false;
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Parses `A1=0,A2=1`; the empty string is the empty assignment.
impl FromStr for Assignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut out = Assignment::new();
        let mut pos = 0;
        for part in s.split(',') {
            let trimmed = part.trim();
            if trimmed.is_empty() {
                if s.trim().is_empty() {
                    break;
                }
                return Err(Error::Parse {
                    pos,
                    msg: "empty assignment item".into(),
                });
            }
            let (k, v) = trimmed.split_once('=').ok_or_else(|| Error::Parse {
                pos,
                msg: format!("expected name=label, got `{trimmed}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(Error::Parse {
                    pos,
                    msg: format!("expected name=label, got `{trimmed}`"),
                });
            }
            if out.insert(k, v).is_some() {
                return Err(Error::Parse {
                    pos,
                    msg: format!("`{k}` assigned twice"),
                });
            }
            pos += part.len() + 1;
        }
        Ok(out)
    }
}

/// Exact joint distribution over the full assignments of a [`Schema`].
///
/// Only positive-probability cells are stored; an absent cell has probability
/// zero. Keys are per-variable support indices in schema order, so the map
/// order is the canonical entry order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointTable {
    schema: Schema,
    entries: BTreeMap<Vec<usize>, Rational>,
}

impl JointTable {
    /// Validating constructor. Omitted assignments have probability zero.
    pub fn new(schema: Schema, entries: Vec<(Assignment, Rational)>) -> Result<Self> {
        let mut map: BTreeMap<Vec<usize>, Rational> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        let mut total = Rational::zero();
        for (assignment, p) in entries {
            let key = full_key(&schema, &assignment)?;
            if p.is_negative() {
                return Err(Error::NegativeProbability { value: p });
            }
            if !seen.insert(key.clone()) {
                return Err(Error::DuplicateAssignment(assignment.to_string()));
            }
            total += &p;
            if !p.is_zero() {
                map.insert(key, p);
            }
        }
        if !total.is_one() {
            return Err(Error::SumNotOne { sum: total });
        }
        Ok(JointTable { schema, entries: map })
    }

    /// Builds from index keys without re-checking labels; normalization is still enforced.
    pub(crate) fn from_indexed(schema: Schema, entries: BTreeMap<Vec<usize>, Rational>) -> Result<Self> {
        let total: Rational = entries.values().sum();
        if !total.is_one() {
            return Err(Error::SumNotOne { sum: total });
        }
        let entries = entries.into_iter().filter(|(_, p)| !p.is_zero()).collect();
        Ok(JointTable { schema, entries })
    }

    /// A single variable with the given distribution over its support.
    pub fn single(var: Variable, dist: &[Rational]) -> Result<Self> {
        if dist.len() != var.support.len() {
            return Err(Error::InvalidSupport {
                var: var.name.clone(),
                reason: format!("{} probabilities for {} outcomes", dist.len(), var.support.len()),
            });
        }
        let schema = Schema::new(vec![var])?;
        let entries = check_dist(dist)?
            .iter()
            .enumerate()
            .map(|(i, p)| (vec![i], p.clone()))
            .collect();
        JointTable::from_indexed(schema, entries)
    }

    /// Uniform distribution over the listed full assignments.
    pub fn uniform_over(schema: Schema, rows: &[Assignment]) -> Result<Self> {
        let p = Rational::from_counts(1, rows.len() as u64);
        JointTable::new(schema, rows.iter().map(|a| (a.clone(), p.clone())).collect())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// Positive-probability cells in canonical order.
    pub fn entries(&self) -> impl Iterator<Item = (&[usize], &Rational)> {
        self.entries.iter().map(|(k, v)| (k.as_slice(), v))
    }

    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    /// Labels for an index key.
    pub fn assignment_of(&self, key: &[usize]) -> Assignment {
        Assignment(
            key.iter()
                .enumerate()
                .map(|(v, &l)| {
                    let var = &self.schema.vars[v];
                    (var.name.clone(), var.support[l].clone())
                })
                .collect(),
        )
    }

    /// Probability of a (possibly partial) assignment.
    pub fn prob(&self, event: &Assignment) -> Result<Rational> {
        let fixed = self.schema.resolve(event)?;
        Ok(self
            .entries
            .iter()
            .filter(|(k, _)| fixed.iter().all(|&(v, l)| k[v] == l))
            .map(|(_, p)| p)
            .sum())
    }

    /// Sum over index-projected keys. `indices` must be sorted.
    pub(crate) fn project(&self, indices: &[usize]) -> BTreeMap<Vec<usize>, Rational> {
        let mut out: BTreeMap<Vec<usize>, Rational> = BTreeMap::new();
        for (k, p) in &self.entries {
            let key: Vec<usize> = indices.iter().map(|&i| k[i]).collect();
            *out.entry(key).or_insert_with(Rational::zero) += p;
        }
        out
    }

    /// Exact marginal over `vars`; the result keeps the original schema order.
    pub fn marginal<I, S>(&self, vars: I) -> Result<JointTable>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let idx = self.schema.indices(vars)?;
        if idx.is_empty() {
            return Err(Error::MalformedStatement("marginal over no variables".into()));
        }
        Ok(JointTable {
            schema: self.schema.sub_schema(&idx),
            entries: self.project(&idx),
        })
    }

    /// Exact conditional distribution over the variables not fixed by `on`.
    ///
    /// Fails with [`Error::ZeroProbabilityEvent`] when `P(on) = 0`; the
    /// conditional is then undefined and no fallback is substituted.
    pub fn condition(&self, on: &Assignment) -> Result<JointTable> {
        let fixed = self.schema.resolve(on)?;
        let fixed_vars: BTreeSet<usize> = fixed.iter().map(|&(v, _)| v).collect();
        let keep: Vec<usize> = (0..self.schema.len()).filter(|i| !fixed_vars.contains(i)).collect();
        let mut kept: BTreeMap<Vec<usize>, Rational> = BTreeMap::new();
        let mut mass = Rational::zero();
        for (k, p) in &self.entries {
            if fixed.iter().all(|&(v, l)| k[v] == l) {
                mass += p;
                let key: Vec<usize> = keep.iter().map(|&i| k[i]).collect();
                *kept.entry(key).or_insert_with(Rational::zero) += p;
            }
        }
        if mass.is_zero() {
            return Err(Error::ZeroProbabilityEvent(on.to_string()));
        }
        let entries = kept.into_iter().map(|(k, p)| (k, p / &mass)).collect();
        Ok(JointTable {
            schema: self.schema.sub_schema(&keep),
            entries,
        })
    }

    /// `Σ_x value(x) · P(var = x)`.
    pub fn expectation(&self, var: &str, values: &BTreeMap<String, Rational>) -> Result<Rational> {
        let vi = self.schema.require(var)?;
        let variable = &self.schema.vars[vi];
        let per_label = variable
            .support
            .iter()
            .map(|l| {
                values.get(l).cloned().ok_or_else(|| Error::MissingValue {
                    var: var.to_string(),
                    label: l.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.entries.iter().map(|(k, p)| p * &per_label[k[vi]]).sum())
    }

    /// Appends a variable independent of all existing ones.
    pub fn extend_independent(&self, var: Variable, dist: &[Rational]) -> Result<JointTable> {
        if self.schema.index_of(&var.name).is_some() {
            return Err(Error::DuplicateVariable(var.name));
        }
        let coin = JointTable::single(var, dist)?;
        Ok(self.product(&coin))
    }

    /// Product joint of two tables over disjoint variables.
    pub(crate) fn product(&self, other: &JointTable) -> JointTable {
        let mut vars = self.schema.vars.clone();
        vars.extend(other.schema.vars.iter().cloned());
        let mut entries = BTreeMap::new();
        for (k1, p1) in &self.entries {
            for (k2, p2) in &other.entries {
                let mut key = k1.clone();
                key.extend_from_slice(k2);
                entries.insert(key, p1 * p2);
            }
        }
        JointTable {
            schema: Schema { vars },
            entries,
        }
    }

    /// Appends `name = f(existing variables)`, evaluated on every
    /// positive-probability assignment. The new support lists the produced
    /// labels in order of first appearance in canonical entry order.
    pub fn push_forward_deterministic<F>(&self, name: &str, f: F) -> Result<JointTable>
    where
        F: Fn(&Assignment) -> String,
    {
        if self.schema.index_of(name).is_some() {
            return Err(Error::DuplicateVariable(name.to_string()));
        }
        let mut support: Vec<String> = Vec::new();
        let mut entries = BTreeMap::new();
        for (k, p) in &self.entries {
            let label = f(&self.assignment_of(k));
            let li = match support.iter().position(|l| *l == label) {
                Some(i) => i,
                None => {
                    support.push(label);
                    support.len() - 1
                }
            };
            let mut key = k.clone();
            key.push(li);
            entries.insert(key, p.clone());
        }
        let mut vars = self.schema.vars.clone();
        vars.push(Variable {
            name: name.to_string(),
            support,
        });
        Ok(JointTable {
            schema: Schema::new(vars)?,
            entries,
        })
    }

    /// Renames variables; names not in `map` are kept.
    pub fn rename(&self, map: &BTreeMap<String, String>) -> Result<JointTable> {
        let vars = self
            .schema
            .vars
            .iter()
            .map(|v| Variable {
                name: map.get(&v.name).cloned().unwrap_or_else(|| v.name.clone()),
                support: v.support.clone(),
            })
            .collect();
        Ok(JointTable {
            schema: Schema::new(vars)?,
            entries: self.entries.clone(),
        })
    }

    /// Replaces the outcome labels of `var`; `labels[i]` renames support entry `i`.
    pub fn relabel(&self, var: &str, labels: Vec<String>) -> Result<JointTable> {
        let vi = self.schema.require(var)?;
        let mut vars = self.schema.vars.clone();
        if labels.len() != vars[vi].support.len() {
            return Err(Error::InvalidSupport {
                var: var.to_string(),
                reason: "relabeling must keep the support size".into(),
            });
        }
        vars[vi].support = labels;
        Ok(JointTable {
            schema: Schema::new(vars)?,
            entries: self.entries.clone(),
        })
    }
}

fn check_dist(dist: &[Rational]) -> Result<&[Rational]> {
    if let Some(p) = dist.iter().find(|p| p.is_negative()) {
        return Err(Error::NegativeProbability { value: p.clone() });
    }
    let total: Rational = dist.iter().sum();
    if !total.is_one() {
        return Err(Error::SumNotOne { sum: total });
    }
    Ok(dist)
}

fn full_key(schema: &Schema, a: &Assignment) -> Result<Vec<usize>> {
    let resolved = schema.resolve(a)?;
    let mut key = vec![usize::MAX; schema.len()];
    for (v, l) in resolved {
        key[v] = l;
    }
    if let Some(missing) = key.iter().position(|&l| l == usize::MAX) {
        return Err(Error::IncompleteAssignment(schema.vars[missing].name.clone()));
    }
    Ok(key)
}

/// Identity value map: each label parsed as a rational number.
pub fn numeric_values(var: &Variable) -> Result<BTreeMap<String, Rational>> {
    var.support
        .iter()
        .map(|l| {
            l.parse::<Rational>()
                .map(|r| (l.clone(), r))
                .map_err(|_| Error::MissingValue {
                    var: var.name.clone(),
                    label: l.clone(),
                })
        })
        .collect()
}
