//! Property tests over random tables drawn from random Bayesian networks.

mod common;

use std::collections::BTreeMap;

use cilab::claims::{build_ce1, check_premises, evaluate, ClaimInstance, Roles};
use cilab::format::{table_from_json, table_to_json};
use cilab::independence::{is_ci, is_mutually_independent};
use cilab::pipeline::{adjustment_functional, check_deterministic, ExactLatentClassModel};
use cilab::search::violation_score;
use cilab::table::numeric_values;
use cilab::{Assignment, CIStatement, JointTable, MutualStatement, Rational, Variable};
use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn table_from_seed(seed: u64, n: usize) -> JointTable {
    random_binary_table(&mut rng(seed), n)
}

fn names(t: &JointTable) -> Vec<String> {
    t.schema().names().map(str::to_string).collect()
}

fn statements(t: &JointTable) -> Vec<CIStatement> {
    all_statements(&names(t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ci_is_symmetric(seed in any::<u64>(), n in 2usize..=4) {
        let t = table_from_seed(seed, n);
        for s in statements(&t) {
            prop_assert_eq!(is_ci(&t, &s).unwrap(), is_ci(&t, &s.swapped()).unwrap());
        }
    }

    #[test]
    fn ci_is_invariant_under_renaming_and_relabeling(seed in any::<u64>(), n in 2usize..=4) {
        let t = table_from_seed(seed, n);
        let map: BTreeMap<String, String> = names(&t).into_iter().map(|v| (v.clone(), format!("r_{v}"))).collect();
        let mut u = t.rename(&map).unwrap();
        for v in map.values() {
            u = u.relabel(v, vec!["hi".into(), "lo".into()]).unwrap();
        }
        for s in statements(&t) {
            let rn = |set: &cilab::NameSet| set.iter().map(|v| map[v].clone()).collect::<Vec<_>>();
            let s2 = CIStatement::new(rn(&s.x), rn(&s.y), rn(&s.given));
            prop_assert_eq!(is_ci(&t, &s).unwrap(), is_ci(&u, &s2).unwrap());
        }
    }

    #[test]
    fn decomposition(seed in any::<u64>()) {
        let t = table_from_seed(seed, 4);
        for s in statements(&t).into_iter().filter(|s| s.y.len() >= 2) {
            if is_ci(&t, &s).unwrap() {
                for y in &s.y {
                    let part = CIStatement { x: s.x.clone(), y: [y.clone()].into(), given: s.given.clone() };
                    prop_assert!(is_ci(&t, &part).unwrap(), "{} but not {}", s, part);
                }
            }
        }
    }

    #[test]
    fn mutual_implies_pairwise(seed in any::<u64>()) {
        let t = table_from_seed(seed, 4);
        let ns = names(&t);
        for given in [vec![], vec![ns[3].clone()]] {
            let m = MutualStatement::singletons(&ns[..3], &given[..]);
            if is_mutually_independent(&t, &m).unwrap() {
                for i in 0..3 {
                    for j in (i + 1)..3 {
                        let s = CIStatement::new([&ns[i]], [&ns[j]], &given);
                        prop_assert!(is_ci(&t, &s).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn marginals_compose(seed in any::<u64>()) {
        let t = table_from_seed(seed, 4);
        let ns = names(&t);
        let outer = t.marginal(&ns[..3]).unwrap();
        prop_assert_eq!(outer.marginal(&ns[..2]).unwrap(), t.marginal(&ns[..2]).unwrap());
        prop_assert_eq!(outer.marginal([&ns[2], &ns[0]]).unwrap(), t.marginal([&ns[0], &ns[2]]).unwrap());
    }

    #[test]
    fn condition_commutes_with_marginal(seed in any::<u64>(), label in 0usize..2) {
        let t = table_from_seed(seed, 4);
        let ns = names(&t);
        let a = Assignment::new().with(ns[0].as_str(), label.to_string());
        if t.prob(&a).unwrap().is_positive() {
            let left = t.marginal(&ns[..3]).unwrap().condition(&a).unwrap();
            let right = t.condition(&a).unwrap().marginal(&ns[1..3]).unwrap();
            prop_assert_eq!(left, right);
        } else {
            prop_assert!(t.condition(&a).is_err());
        }
    }

    #[test]
    fn extend_independent_is_recoverable(seed in any::<u64>(), n in 1usize..=3, w in 1u64..5) {
        let t = table_from_seed(seed, n);
        let dist = [Rational::from_counts(w, w + 1), Rational::from_counts(1, w + 1)];
        let e = t.extend_independent(Variable::new("E", ["x", "y"]), &dist).unwrap();
        prop_assert_eq!(e.marginal(names(&t)).unwrap(), t.clone());
        let s = CIStatement::new(vec!["E".to_string()], names(&t), vec![]);
        prop_assert!(is_ci(&e, &s).unwrap());
    }

    #[test]
    fn push_forward_is_deterministic(seed in any::<u64>(), n in 1usize..=3) {
        let t = table_from_seed(seed, n);
        let ns = names(&t);
        let f = |a: &Assignment| ns.iter().filter(|v| a.get(v) == Some("1")).count().to_string();
        let p = t.push_forward_deterministic("S", f).unwrap();
        prop_assert!(check_deterministic(&p, &ns, "S").is_ok());
        prop_assert_eq!(p.marginal(&ns).unwrap(), t.clone());
        for (k, _) in p.entries() {
            let a = p.assignment_of(k);
            prop_assert_eq!(a.get("S").unwrap(), f(&a));
        }
    }

    #[test]
    fn serialization_round_trips(seed in any::<u64>(), n in 1usize..=4) {
        let t = table_from_seed(seed, n);
        let text = table_to_json(&t);
        let back = table_from_json(&text).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(table_to_json(&back), text);
    }

    #[test]
    fn zero_violation_iff_ci(seed in any::<u64>(), n in 2usize..=4) {
        let t = table_from_seed(seed, n);
        for s in statements(&t) {
            prop_assert_eq!(violation_score(&t, &s).unwrap().is_zero(), is_ci(&t, &s).unwrap());
        }
    }

    #[test]
    fn claim_verdict_is_consistent(seed in any::<u64>(), with_u in any::<bool>()) {
        let t = table_from_seed(seed, 4);
        let roles = Roles {
            causes: vec!["V0".into(), "V1".into()],
            w: "V2".into(),
            u: with_u.then(|| "V3".into()),
            z: "V3".into(),
        };
        let inst = ClaimInstance::new(t, roles).unwrap();
        let report = evaluate(&inst).unwrap();
        prop_assert_eq!(report.verdict, report.recomputed_verdict());
        prop_assert_eq!(report.premises(), check_premises(&inst).unwrap());
    }

    #[test]
    fn claim_report_is_invariant_under_renaming(seed in any::<u64>()) {
        let t = table_from_seed(seed, 4);
        let roles = Roles { causes: vec!["V0".into(), "V1".into()], w: "V2".into(), u: None, z: "V3".into() };
        let inst = ClaimInstance::new(t, roles).unwrap();
        let map: BTreeMap<String, String> =
            [("V0", "B"), ("V1", "A"), ("V2", "Out"), ("V3", "C")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        let renamed = inst.rename(&map).unwrap();
        let (a, b) = (evaluate(&inst).unwrap(), evaluate(&renamed).unwrap());
        prop_assert_eq!(a.verdict, b.verdict);
        prop_assert_eq!(a.premise_1i, b.premise_1i);
        prop_assert_eq!(a.conclusion_3, b.conclusion_3);
    }

    /// W drawn from Z alone gives causes ⫫ W | Z, so the gap vanishes
    /// wherever ψ is defined.
    #[test]
    fn ignorability_gives_zero_gap(seed in any::<u64>()) {
        let mut g = rng(seed);
        let base = random_binary_table(&mut g, 3); // V0, V1 causes, V2 plays Z
        let table = base.rename(&[("V2".to_string(), "Z".to_string())].into()).unwrap();
        let q = Rational::from_counts(g.gen_range(0..=4), 4);
        let rows: Vec<(Assignment, Rational)> = table
            .entries()
            .flat_map(|(k, p)| {
                let a = table.assignment_of(k);
                let pw1 = if a.get("Z") == Some("1") { q.clone() } else { Rational::one() - &q };
                [("0", Rational::one() - &pw1), ("1", pw1)].map(|(w, pw)| (a.clone().with("W", w), p * &pw))
            })
            .collect();
        let mut schema_vars = table.schema().variables().to_vec();
        schema_vars.push(Variable::new("W", ["0", "1"]));
        let t = JointTable::new(cilab::Schema::new(schema_vars).unwrap(), rows).unwrap();
        let causes = vec!["V0".to_string(), "V1".to_string()];
        prop_assert!(is_ci(&t, &CIStatement::new(["V0", "V1"], ["W"], ["Z"])).unwrap());
        let values = numeric_values(t.schema().variable("W").unwrap()).unwrap();
        for a0 in ["0", "1"] {
            for a1 in ["0", "1"] {
                let a = Assignment::new().with("V0", a0).with("V1", a1);
                let rep = adjustment_functional(&t, &causes, "W", "Z", &a, &values).unwrap();
                if rep.degenerate_strata.is_empty() {
                    prop_assert_eq!(rep.gap, Some(Rational::zero()));
                } else {
                    prop_assert!(rep.psi.is_none());
                }
            }
        }
    }

    #[test]
    fn exact_posteriors_sum_to_one(seed in any::<u64>()) {
        let t = table_from_seed(seed, 3);
        let causes = vec!["V0".to_string(), "V1".to_string()];
        let m = ExactLatentClassModel::from_table(&t, &causes, "V2").unwrap();
        let mut labels = vec!["0", "1"];
        labels.shuffle(&mut rng(seed));
        for a0 in &labels {
            for a1 in ["0", "1"] {
                let a = Assignment::new().with("V0", *a0).with("V1", a1);
                let s = m.substitute_confounder(&a).unwrap();
                let total: Rational = s.posterior.iter().sum();
                prop_assert!(total.is_one());
                prop_assert!(s.posterior.iter().all(|p| *p <= s.posterior[s.map_class]));
            }
        }
    }
}

#[test]
fn ce1_premises_survive_every_renaming_of_roles() {
    let ce1 = build_ce1();
    let swapped: BTreeMap<String, String> = [("A1", "A2"), ("A2", "A1")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    let r = evaluate(&ce1.rename(&swapped).unwrap()).unwrap();
    assert_eq!(r.verdict, evaluate(&ce1).unwrap().verdict);
}
