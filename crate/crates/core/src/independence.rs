//! Exact conditional-independence checks.
//!
//! All checks compare exact rationals stratum by stratum. Conditioning
//! strata with probability zero impose no constraint.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rational::Rational;
use crate::statement::{check_disjoint, CIStatement, MutualStatement, NameSet};
use crate::table::{JointTable, Schema, Variable};

/// Default bound on the number of positive-probability outcomes of `u` for
/// the coarsening enumeration (Bell(8) = 4140 partitions).
pub const DEFAULT_PARTITION_SUPPORT_BOUND: usize = 8;

type Key = Vec<usize>;

/// Per-stratum margins for `x ⫫ y | z`, keyed by projected index tuples.
pub(crate) struct Strata {
    pub pz: BTreeMap<Key, Rational>,
    pub pxz: BTreeMap<Key, BTreeMap<Key, Rational>>,
    pub pyz: BTreeMap<Key, BTreeMap<Key, Rational>>,
    pub pxyz: BTreeMap<(Key, Key, Key), Rational>,
}

impl Strata {
    pub fn build(table: &JointTable, s: &CIStatement) -> Result<Strata> {
        s.validate(table.schema())?;
        let schema = table.schema();
        let xi = schema.indices(&s.x)?;
        let yi = schema.indices(&s.y)?;
        let zi = schema.indices(&s.given)?;
        let proj = |k: &[usize], idx: &[usize]| idx.iter().map(|&i| k[i]).collect::<Key>();
        let mut out = Strata {
            pz: BTreeMap::new(),
            pxz: BTreeMap::new(),
            pyz: BTreeMap::new(),
            pxyz: BTreeMap::new(),
        };
        for (k, p) in table.entries() {
            let (kx, ky, kz) = (proj(k, &xi), proj(k, &yi), proj(k, &zi));
            *out.pz.entry(kz.clone()).or_insert_with(Rational::zero) += p;
            *out.pxz
                .entry(kz.clone())
                .or_default()
                .entry(kx.clone())
                .or_insert_with(Rational::zero) += p;
            *out.pyz
                .entry(kz.clone())
                .or_default()
                .entry(ky.clone())
                .or_insert_with(Rational::zero) += p;
            *out.pxyz.entry((kx, ky, kz)).or_insert_with(Rational::zero) += p;
        }
        Ok(out)
    }

    /// Calls `f(P(x,y,z)·P(z), P(x,z)·P(y,z))` for every positive stratum and
    /// every (x, y) with positive stratum margins; stops when `f` returns false.
    pub fn for_each_cell(&self, mut f: impl FnMut(&Rational, &Rational) -> bool) {
        let zero = Rational::zero();
        for (kz, pz) in &self.pz {
            let (Some(xs), Some(ys)) = (self.pxz.get(kz), self.pyz.get(kz)) else {
                continue;
            };
            for (kx, px) in xs {
                for (ky, py) in ys {
                    let pxyz = self
                        .pxyz
                        .get(&(kx.clone(), ky.clone(), kz.clone()))
                        .unwrap_or(&zero);
                    if !f(&(pxyz * pz), &(px * py)) {
                        return;
                    }
                }
            }
        }
    }
}

/// `true` iff `P(x,y|z) = P(x|z)·P(y|z)` exactly for every `z` with `P(z) > 0`.
pub fn is_ci(table: &JointTable, s: &CIStatement) -> Result<bool> {
    let strata = Strata::build(table, s)?;
    let mut holds = true;
    strata.for_each_cell(|lhs, rhs| {
        holds = lhs == rhs;
        holds
    });
    Ok(holds)
}

/// `true` iff, in every positive stratum of `given`, the conditional joint of
/// the groups is the product of the group conditionals (full factorization).
pub fn is_mutually_independent(table: &JointTable, m: &MutualStatement) -> Result<bool> {
    m.validate(table.schema())?;
    let schema = table.schema();
    let zi = schema.indices(&m.given)?;
    let gi = m
        .groups
        .iter()
        .map(|g| schema.indices(g))
        .collect::<Result<Vec<_>>>()?;
    let proj = |k: &[usize], idx: &[usize]| idx.iter().map(|&i| k[i]).collect::<Key>();

    let mut pz: BTreeMap<Key, Rational> = BTreeMap::new();
    let mut pg: BTreeMap<Key, Vec<BTreeMap<Key, Rational>>> = BTreeMap::new();
    let mut joint: BTreeMap<(Key, Vec<Key>), Rational> = BTreeMap::new();
    for (k, p) in table.entries() {
        let kz = proj(k, &zi);
        *pz.entry(kz.clone()).or_insert_with(Rational::zero) += p;
        let margins = pg
            .entry(kz.clone())
            .or_insert_with(|| vec![BTreeMap::new(); gi.len()]);
        let kg: Vec<Key> = gi.iter().map(|idx| proj(k, idx)).collect();
        for (margin, key) in margins.iter_mut().zip(&kg) {
            *margin.entry(key.clone()).or_insert_with(Rational::zero) += p;
        }
        *joint.entry((kz, kg)).or_insert_with(Rational::zero) += p;
    }

    let zero = Rational::zero();
    let extra = (gi.len() - 1) as u32;
    for (kz, margins) in &pg {
        let scale = pz[kz].pow(extra);
        let lists: Vec<Vec<(&Key, &Rational)>> = margins.iter().map(|m| m.iter().collect()).collect();
        let mut pos = vec![0usize; lists.len()];
        loop {
            let keys: Vec<Key> = pos.iter().zip(&lists).map(|(&i, l)| l[i].0.clone()).collect();
            let product = pos
                .iter()
                .zip(&lists)
                .fold(Rational::one(), |acc, (&i, l)| acc * l[i].1);
            let pj = joint.get(&(kz.clone(), keys)).unwrap_or(&zero);
            if pj * &scale != product {
                return Ok(false);
            }
            if !advance(&mut pos, &lists) {
                break;
            }
        }
    }
    Ok(true)
}

fn advance<T>(pos: &mut [usize], lists: &[Vec<T>]) -> bool {
    for i in (0..pos.len()).rev() {
        pos[i] += 1;
        if pos[i] < lists[i].len() {
            return true;
        }
        pos[i] = 0;
    }
    false
}

/// Pairwise versus joint diagnostics for a set of groups against a target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairwiseJointReport {
    /// `group ⫫ target | given`, one per group.
    pub per_group: Vec<(NameSet, bool)>,
    /// `∪ groups ⫫ target | given`.
    pub joint: bool,
    /// The groups are mutually independent given `given`.
    pub mutual: bool,
    /// Every per-group check holds but the joint one fails.
    pub gap: bool,
}

pub fn pairwise_joint_report(
    table: &JointTable,
    groups: &[NameSet],
    target: &NameSet,
    given: &NameSet,
) -> Result<PairwiseJointReport> {
    let mut sets: Vec<&NameSet> = groups.iter().collect();
    sets.push(target);
    sets.push(given);
    check_disjoint(&sets)?;
    let per_group = groups
        .iter()
        .map(|g| {
            let s = CIStatement {
                x: g.clone(),
                y: target.clone(),
                given: given.clone(),
            };
            Ok((g.clone(), is_ci(table, &s)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let union: NameSet = groups.iter().flatten().cloned().collect();
    let joint = is_ci(
        table,
        &CIStatement {
            x: union,
            y: target.clone(),
            given: given.clone(),
        },
    )?;
    let mutual = if groups.len() >= 2 {
        is_mutually_independent(
            table,
            &MutualStatement {
                groups: groups.to_vec(),
                given: given.clone(),
            },
        )?
    } else {
        true
    };
    let gap = per_group.iter().all(|(_, b)| *b) && !joint;
    Ok(PairwiseJointReport {
        per_group,
        joint,
        mutual,
        gap,
    })
}

/// A coarsening of a variable's support into disjoint, non-empty blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub blocks: Vec<Vec<String>>,
}

impl Partition {
    pub fn new(blocks: Vec<Vec<String>>) -> Self {
        Partition { blocks }
    }
}

/// Replaces `var` by the block index of its outcome (labels `"b0"`, `"b1"`, …).
///
/// Outcomes with positive probability must be covered by some block.
pub fn coarsen(table: &JointTable, var: &str, partition: &Partition) -> Result<JointTable> {
    let schema = table.schema();
    let vi = schema.require(var)?;
    let variable = schema.variable(var)?;
    let mut block_of = vec![None; variable.support.len()];
    for (b, block) in partition.blocks.iter().enumerate() {
        if block.is_empty() {
            return Err(Error::InvalidSupport {
                var: var.to_string(),
                reason: "empty block".into(),
            });
        }
        for label in block {
            let li = variable.label_index(label).ok_or_else(|| Error::UnknownOutcome {
                var: var.to_string(),
                label: label.clone(),
            })?;
            if block_of[li].replace(b).is_some() {
                return Err(Error::InvalidSupport {
                    var: var.to_string(),
                    reason: format!("`{label}` in two blocks"),
                });
            }
        }
    }
    let mut entries: BTreeMap<Key, Rational> = BTreeMap::new();
    for (k, p) in table.entries() {
        let b = block_of[k[vi]].ok_or_else(|| Error::InvalidSupport {
            var: var.to_string(),
            reason: format!("`{}` not covered by the partition", variable.support[k[vi]]),
        })?;
        let mut key = k.to_vec();
        key[vi] = b;
        *entries.entry(key).or_insert_with(Rational::zero) += p;
    }
    let mut vars = schema.variables().to_vec();
    vars[vi] = Variable::new(var, (0..partition.blocks.len()).map(|b| format!("b{b}")));
    JointTable::from_indexed(Schema::new(vars)?, entries)
}

/// All set partitions of `items` in restricted-growth-string order.
pub fn set_partitions<T: Clone>(items: &[T]) -> Vec<Vec<Vec<T>>> {
    let n = items.len();
    let mut out = Vec::new();
    if n == 0 {
        out.push(Vec::new());
        return out;
    }
    let mut rgs = vec![0usize; n];
    loop {
        let blocks = rgs.iter().copied().max().unwrap_or(0) + 1;
        let mut p = vec![Vec::new(); blocks];
        for (i, &b) in rgs.iter().enumerate() {
            p[b].push(items[i].clone());
        }
        out.push(p);
        // next restricted growth string
        let mut i = n - 1;
        loop {
            if i == 0 {
                return out;
            }
            let prefix_max = rgs[..i].iter().copied().max().unwrap_or(0);
            if rgs[i] <= prefix_max {
                rgs[i] += 1;
                for r in rgs.iter_mut().skip(i + 1) {
                    *r = 0;
                }
                break;
            }
            i -= 1;
        }
    }
}

/// Returns a proper coarsening of `u` under which the groups are already
/// mutually independent, if one exists.
pub fn minimality_witness(
    table: &JointTable,
    u: &str,
    groups: &[NameSet],
    bound: usize,
) -> Result<Option<Partition>> {
    let schema = table.schema();
    let ui = schema.require(u)?;
    for g in groups {
        if g.contains(u) {
            return Err(Error::OverlappingSets(u.to_string()));
        }
    }
    let variable = schema.variable(u)?;
    let mut positive: Vec<usize> = table.entries().map(|(k, _)| k[ui]).collect();
    positive.sort_unstable();
    positive.dedup();
    if positive.len() > bound {
        return Err(Error::SupportTooLarge {
            var: u.to_string(),
            size: positive.len(),
            bound,
        });
    }
    let labels: Vec<String> = positive.iter().map(|&i| variable.support[i].clone()).collect();
    let given: NameSet = [u.to_string()].into();
    for blocks in set_partitions(&labels) {
        if blocks.len() == labels.len() {
            continue;
        }
        let partition = Partition::new(blocks);
        let coarse = coarsen(table, u, &partition)?;
        let m = MutualStatement {
            groups: groups.to_vec(),
            given: given.clone(),
        };
        if is_mutually_independent(&coarse, &m)? {
            return Ok(Some(partition));
        }
    }
    Ok(None)
}

/// `true` iff no proper coarsening of `u` makes the groups mutually independent.
pub fn minimality_check(table: &JointTable, u: &str, groups: &[NameSet]) -> Result<bool> {
    minimality_check_bounded(table, u, groups, DEFAULT_PARTITION_SUPPORT_BOUND)
}

pub fn minimality_check_bounded(table: &JointTable, u: &str, groups: &[NameSet], bound: usize) -> Result<bool> {
    Ok(minimality_witness(table, u, groups, bound)?.is_none())
}
