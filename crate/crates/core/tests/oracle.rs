mod common;

use std::collections::{BTreeMap, BTreeSet};

use cilab::claims::build_ce1;
use cilab::independence::{is_ci, is_mutually_independent};
use cilab::search::violation_score;
use cilab::{CIStatement, JointTable, MutualStatement, NameSet, Rational};
use common::*;
use rand::Rng;

fn names_of(t: &JointTable) -> Vec<String> {
    t.schema().names().map(str::to_string).collect()
}

fn sums(t: &JointTable, keep: &BTreeSet<String>) -> BTreeMap<Vec<String>, Rational> {
    let names = names_of(t);
    let mut m = BTreeMap::new();
    for (c, p) in dense(t) {
        let key: Vec<String> = names
            .iter()
            .zip(&c)
            .filter(|(n, _)| keep.contains(*n))
            .map(|(_, l)| l.clone())
            .collect();
        *m.entry(key).or_insert_with(Rational::zero) += &p;
    }
    m
}

fn restrict(names: &[String], cell: &[String], keep: &BTreeSet<String>) -> Vec<String> {
    names
        .iter()
        .zip(cell)
        .filter(|(n, _)| keep.contains(*n))
        .map(|(_, l)| l.clone())
        .collect()
}

/// `P(g1, …, gm | z) = Π P(gi | z)` on every positive stratum.
fn oracle_mutual(t: &JointTable, m: &MutualStatement) -> bool {
    let names = names_of(t);
    let all: BTreeSet<String> = m.groups.iter().flatten().chain(&m.given).cloned().collect();
    let p_z = sums(t, &m.given);
    let p_all = sums(t, &all);
    let per_group: Vec<(BTreeSet<String>, BTreeMap<Vec<String>, Rational>)> = m
        .groups
        .iter()
        .map(|g| {
            let s: BTreeSet<String> = g.union(&m.given).cloned().collect();
            let sm = sums(t, &s);
            (s, sm)
        })
        .collect();
    for (c, _) in dense(t) {
        let pz = &p_z[&restrict(&names, &c, &m.given)];
        if pz.is_zero() {
            continue;
        }
        let lhs = &p_all[&restrict(&names, &c, &all)] / pz;
        let rhs = per_group
            .iter()
            .fold(Rational::one(), |acc, (s, sm)| acc * (&sm[&restrict(&names, &c, s)] / pz));
        if lhs != rhs {
            return false;
        }
    }
    true
}

/// `max |P(xyz)·P(z) − P(xz)·P(yz)|` from the dense table.
fn oracle_violation(t: &JointTable, s: &CIStatement) -> Rational {
    let names = names_of(t);
    let xz: BTreeSet<String> = s.x.union(&s.given).cloned().collect();
    let yz: BTreeSet<String> = s.y.union(&s.given).cloned().collect();
    let xyz: BTreeSet<String> = xz.union(&s.y).cloned().collect();
    let (p_z, p_xz, p_yz, p_xyz) = (sums(t, &s.given), sums(t, &xz), sums(t, &yz), sums(t, &xyz));
    let mut worst = Rational::zero();
    for (c, _) in dense(t) {
        let pz = &p_z[&restrict(&names, &c, &s.given)];
        if pz.is_zero() {
            continue;
        }
        let d = (&p_xyz[&restrict(&names, &c, &xyz)] * pz
            - &p_xz[&restrict(&names, &c, &xz)] * &p_yz[&restrict(&names, &c, &yz)])
            .abs();
        if d > worst {
            worst = d;
        }
    }
    worst
}

#[test]
fn is_ci_matches_oracle_on_random_binary_tables() {
    let mut g = rng(7);
    let (mut agree_true, mut agree_false) = (0, 0);
    for _ in 0..300 {
        let n = g.gen_range(2..=4);
        let t = random_binary_table(&mut g, n);
        for s in all_statements(&names_of(&t)) {
            let expected = oracle_ci(&t, &s);
            assert_eq!(is_ci(&t, &s).unwrap(), expected, "{s} on {}", cilab::format::table_to_json(&t));
            if expected {
                agree_true += 1;
            } else {
                agree_false += 1;
            }
        }
    }
    // both outcomes must actually be exercised
    assert!(agree_true > 1000 && agree_false > 1000, "{agree_true} / {agree_false}");
}

#[test]
fn is_ci_matches_oracle_on_mixed_supports() {
    let mut g = rng(11);
    for _ in 0..100 {
        let sizes: Vec<usize> = (0..g.gen_range(2..=3)).map(|_| g.gen_range(1..=3)).collect();
        let t = random_table(&mut g, &sizes);
        for s in all_statements(&names_of(&t)) {
            assert_eq!(is_ci(&t, &s).unwrap(), oracle_ci(&t, &s), "{s}");
        }
    }
}

#[test]
fn mutual_independence_matches_oracle() {
    let mut g = rng(12);
    let mut hits = 0;
    for _ in 0..300 {
        let t = random_binary_table(&mut g, 4);
        let names = names_of(&t);
        for given in [vec![], vec![names[3].clone()]] {
            let m = MutualStatement::singletons(&names[..3], &given[..]);
            let expected = oracle_mutual(&t, &m);
            hits += expected as usize;
            assert_eq!(is_mutually_independent(&t, &m).unwrap(), expected);
        }
        let grouped = MutualStatement {
            groups: vec![
                NameSet::from([names[0].clone(), names[1].clone()]),
                NameSet::from([names[2].clone()]),
                NameSet::from([names[3].clone()]),
            ],
            given: NameSet::new(),
        };
        assert_eq!(is_mutually_independent(&t, &grouped).unwrap(), oracle_mutual(&t, &grouped));
    }
    assert!(hits > 20, "{hits}");
}

#[test]
fn violation_score_matches_oracle() {
    let mut g = rng(13);
    for _ in 0..150 {
        let n = g.gen_range(2..=4);
        let t = random_binary_table(&mut g, n);
        for s in all_statements(&names_of(&t)) {
            assert_eq!(violation_score(&t, &s).unwrap(), oracle_violation(&t, &s));
        }
    }
}

#[test]
fn ce1_joint_violation_is_one_thirty_second() {
    let ce1 = build_ce1();
    let s: CIStatement = "A1,A2 _||_ W | Z".parse().unwrap();
    let expected = oracle_violation(ce1.table(), &s);
    assert_eq!(expected, r(1, 32));
    assert_eq!(violation_score(ce1.table(), &s).unwrap(), expected);
}
