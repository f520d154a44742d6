//! Test-only helpers: a brute-force CI oracle written straight from the
//! definition, and random table generators.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use cilab::{Assignment, CIStatement, JointTable, Rational, Schema, Variable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every full outcome tuple of `schema`, as label vectors.
pub fn all_cells(schema: &Schema) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = vec![vec![]];
    for v in schema.variables() {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                v.support.iter().map(move |l| {
                    let mut p = prefix.clone();
                    p.push(l.clone());
                    p
                })
            })
            .collect();
    }
    out
}

/// Dense copy of a table: full label tuple -> probability, zeros included.
pub fn dense(t: &JointTable) -> Vec<(Vec<String>, Rational)> {
    let names: Vec<String> = t.schema().names().map(str::to_string).collect();
    let mut stored: BTreeMap<Vec<String>, Rational> = BTreeMap::new();
    for (k, p) in t.entries() {
        let a = t.assignment_of(k);
        let labels = names.iter().map(|n| a.get(n).unwrap().to_string()).collect();
        stored.insert(labels, p.clone());
    }
    all_cells(t.schema())
        .into_iter()
        .map(|c| {
            let p = stored.get(&c).cloned().unwrap_or_else(Rational::zero);
            (c, p)
        })
        .collect()
}

fn project(names: &[String], cell: &[String], keep: &BTreeSet<String>) -> Vec<String> {
    names
        .iter()
        .zip(cell)
        .filter(|(n, _)| keep.contains(*n))
        .map(|(_, l)| l.clone())
        .collect()
}

fn marginal_sums(
    names: &[String],
    cells: &[(Vec<String>, Rational)],
    keep: &BTreeSet<String>,
) -> BTreeMap<Vec<String>, Rational> {
    let mut m = BTreeMap::new();
    for (c, p) in cells {
        *m.entry(project(names, c, keep)).or_insert_with(Rational::zero) += p;
    }
    m
}

/// `X ⫫ Y | Z` by definition: for every `z` with `P(z) > 0` and every `x, y`,
/// `P(x, y | z) = P(x | z) · P(y | z)`, with every probability summed from
/// the dense table.
pub fn oracle_ci(t: &JointTable, s: &CIStatement) -> bool {
    let names: Vec<String> = t.schema().names().map(str::to_string).collect();
    let cells = dense(t);
    let xz: BTreeSet<String> = s.x.union(&s.given).cloned().collect();
    let yz: BTreeSet<String> = s.y.union(&s.given).cloned().collect();
    let xyz: BTreeSet<String> = xz.union(&s.y).cloned().collect();
    let p_z = marginal_sums(&names, &cells, &s.given);
    let p_xz = marginal_sums(&names, &cells, &xz);
    let p_yz = marginal_sums(&names, &cells, &yz);
    let p_xyz = marginal_sums(&names, &cells, &xyz);
    for (c, _) in &cells {
        let z = project(&names, c, &s.given);
        let pz = &p_z[&z];
        if pz.is_zero() {
            continue;
        }
        let joint = &p_xyz[&project(&names, c, &xyz)] / pz;
        let px = &p_xz[&project(&names, c, &xz)] / pz;
        let py = &p_yz[&project(&names, c, &yz)] / pz;
        if joint != px * py {
            return false;
        }
    }
    true
}

/// Random table from a random Bayesian network over `n` variables with the
/// given support sizes. Conditional tables use small integer weights (zeros
/// included), so both independences and zero strata show up often.
pub fn random_table(rng: &mut impl Rng, sizes: &[usize]) -> JointTable {
    let n = sizes.len();
    let vars: Vec<Variable> = (0..n)
        .map(|i| Variable::new(format!("V{i}"), (0..sizes[i]).map(|l| l.to_string())))
        .collect();
    let schema = Schema::new(vars.clone()).unwrap();
    let parents: Vec<Vec<usize>> = (0..n).map(|i| (0..i).filter(|_| rng.gen_bool(0.4)).collect()).collect();
    // cpts[i][parent labels] = integer weights over the support of variable i
    let mut cpts: Vec<BTreeMap<Vec<usize>, Vec<u64>>> = vec![BTreeMap::new(); n];
    let mut entries = Vec::new();
    for cell in all_cells(&schema) {
        let k: Vec<usize> = cell.iter().map(|l| l.parse().unwrap()).collect();
        let mut p = Rational::one();
        for i in 0..n {
            let key: Vec<usize> = parents[i].iter().map(|&q| k[q]).collect();
            let row = cpts[i].entry(key).or_insert_with(|| {
                let mut w: Vec<u64> = (0..sizes[i]).map(|_| rng.gen_range(0..4)).collect();
                if w.iter().all(|&x| x == 0) {
                    w[rng.gen_range(0..sizes[i])] = 1;
                }
                w
            });
            p = p * Rational::from_counts(row[k[i]], row.iter().sum());
        }
        let a = Assignment::from_pairs(vars.iter().zip(&cell).map(|(v, l)| (v.name.clone(), l.clone())));
        entries.push((a, p));
    }
    JointTable::new(schema, entries).unwrap()
}

pub fn random_binary_table(rng: &mut impl Rng, n: usize) -> JointTable {
    random_table(rng, &vec![2; n])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every CI statement over `names` with disjoint, non-empty `x` and `y`.
pub fn all_statements(names: &[String]) -> Vec<CIStatement> {
    let n = names.len();
    let mut out = Vec::new();
    // 0 = unused, 1 = x, 2 = y, 3 = given
    let total = 4usize.pow(n as u32);
    for code in 0..total {
        let mut parts = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        let mut c = code;
        for name in names {
            parts[c % 4].push(name.as_str());
            c /= 4;
        }
        if parts[1].is_empty() || parts[2].is_empty() {
            continue;
        }
        out.push(CIStatement::new(parts[1].clone(), parts[2].clone(), parts[3].clone()));
    }
    out
}

pub fn r(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}
