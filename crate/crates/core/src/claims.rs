//! The Deconfounder Claim as a checkable object, and the fixtures that refute it.
//!
//! Roles: causes `A1..Am`, an outcome stand-in `W`, an optional conditioner
//! `U` (absent means a constant), and the candidate substitute `Z`. `U` may
//! be the same variable as `Z`.
//!
//! Premises:
//! - (1)(i)   `Aj ⫫ W | U` for every cause,
//! - (1)(ii)  `Aj ⫫ (all other causes) | U` for every cause,
//! - (iii)    no proper coarsening of `U` already satisfies (ii) jointly,
//! - (2)      the causes are mutually independent given `Z`.
//!
//! Conclusion (3): `(A1..Am) ⫫ W | Z`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{schema_to_json, EntryJson, TableJson, VariableJson};
use crate::independence::{is_ci, is_mutually_independent, minimality_check};
use crate::rational::Rational;
use crate::statement::{names, CIStatement, MutualStatement, NameSet};
use crate::table::{Assignment, JointTable, Schema, Variable};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roles {
    pub causes: Vec<String>,
    pub w: String,
    #[serde(default)]
    pub u: Option<String>,
    pub z: String,
}

/// A joint table with the roles of the claim assigned to its variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClaimInstance {
    table: JointTable,
    roles: Roles,
}

impl ClaimInstance {
    pub fn new(table: JointTable, roles: Roles) -> Result<Self> {
        if roles.causes.is_empty() {
            return Err(Error::Role("at least one cause is required".into()));
        }
        let mut all: Vec<&str> = roles.causes.iter().map(String::as_str).collect();
        all.push(&roles.w);
        all.push(&roles.z);
        for (i, name) in all.iter().enumerate() {
            table.schema().require(name)?;
            if all[..i].contains(name) {
                return Err(Error::Role(format!("`{name}` plays two roles")));
            }
        }
        // u may coincide with z, but not with a cause or w
        if let Some(u) = &roles.u {
            table.schema().require(u)?;
            if *u == roles.w || roles.causes.contains(u) {
                return Err(Error::Role(format!("`{u}` cannot be both u and a cause or w")));
            }
        }
        Ok(ClaimInstance { table, roles })
    }

    pub fn table(&self) -> &JointTable {
        &self.table
    }

    pub fn roles(&self) -> &Roles {
        &self.roles
    }

    pub fn causes(&self) -> &[String] {
        &self.roles.causes
    }

    fn u_set(&self) -> NameSet {
        self.roles.u.iter().cloned().collect()
    }

    /// Renames variables in both the table and the roles.
    pub fn rename(&self, map: &BTreeMap<String, String>) -> Result<ClaimInstance> {
        let f = |n: &String| map.get(n).cloned().unwrap_or_else(|| n.clone());
        let roles = Roles {
            causes: self.roles.causes.iter().map(f).collect(),
            w: f(&self.roles.w),
            u: self.roles.u.as_ref().map(f),
            z: f(&self.roles.z),
        };
        ClaimInstance::new(self.table.rename(map)?, roles)
    }

    /// Same instance with `u` replaced (validated again).
    pub fn with_u(&self, u: Option<&str>) -> Result<ClaimInstance> {
        let mut roles = self.roles.clone();
        roles.u = u.map(str::to_string);
        ClaimInstance::new(self.table.clone(), roles)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// All premises hold and the conclusion fails.
    ClaimRefuted,
    /// All premises hold and so does the conclusion.
    ClaimInstanceConsistent,
    /// Some premise fails; the instance says nothing about the claim.
    PremisesFail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::ClaimRefuted => "ClaimRefuted",
            Verdict::ClaimInstanceConsistent => "ClaimInstanceConsistent",
            Verdict::PremisesFail => "PremisesFail",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Premises {
    pub premise_1i: Vec<bool>,
    pub premise_1ii: Vec<bool>,
    pub premise_iii: bool,
    pub premise_2: bool,
}

impl Premises {
    pub fn all_hold(&self) -> bool {
        self.premise_1i.iter().all(|b| *b) && self.premise_1ii.iter().all(|b| *b) && self.premise_iii && self.premise_2
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimReport {
    pub causes: Vec<String>,
    pub premise_1i: Vec<bool>,
    pub premise_1ii: Vec<bool>,
    pub premise_iii: bool,
    pub premise_2: bool,
    pub conclusion_3: bool,
    pub verdict: Verdict,
}

impl ClaimReport {
    pub fn premises(&self) -> Premises {
        Premises {
            premise_1i: self.premise_1i.clone(),
            premise_1ii: self.premise_1ii.clone(),
            premise_iii: self.premise_iii,
            premise_2: self.premise_2,
        }
    }

    /// The verdict implied by the boolean fields.
    pub fn recomputed_verdict(&self) -> Verdict {
        verdict_for(&self.premises(), self.conclusion_3)
    }
}

pub fn verdict_for(premises: &Premises, conclusion: bool) -> Verdict {
    match (premises.all_hold(), conclusion) {
        (false, _) => Verdict::PremisesFail,
        (true, false) => Verdict::ClaimRefuted,
        (true, true) => Verdict::ClaimInstanceConsistent,
    }
}

pub fn check_premises(inst: &ClaimInstance) -> Result<Premises> {
    let t = &inst.table;
    let causes = inst.causes();
    let u = inst.u_set();
    let mut premise_1i = Vec::with_capacity(causes.len());
    let mut premise_1ii = Vec::with_capacity(causes.len());
    for (j, a) in causes.iter().enumerate() {
        premise_1i.push(is_ci(
            t,
            &CIStatement {
                x: names([a]),
                y: names([&inst.roles.w]),
                given: u.clone(),
            },
        )?);
        let others: NameSet = causes
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != j)
            .map(|(_, c)| c.clone())
            .collect();
        premise_1ii.push(if others.is_empty() {
            true
        } else {
            is_ci(
                t,
                &CIStatement {
                    x: names([a]),
                    y: others,
                    given: u.clone(),
                },
            )?
        });
    }
    let singletons: Vec<NameSet> = causes.iter().map(|c| names([c])).collect();
    let premise_iii = match &inst.roles.u {
        None => true,
        Some(u) if causes.len() >= 2 => minimality_check(t, u, &singletons)?,
        Some(_) => true,
    };
    let premise_2 = if causes.len() >= 2 {
        is_mutually_independent(
            t,
            &MutualStatement {
                groups: singletons,
                given: names([&inst.roles.z]),
            },
        )?
    } else {
        true
    };
    Ok(Premises {
        premise_1i,
        premise_1ii,
        premise_iii,
        premise_2,
    })
}

pub fn check_conclusion(inst: &ClaimInstance) -> Result<bool> {
    is_ci(
        &inst.table,
        &CIStatement {
            x: names(inst.causes()),
            y: names([&inst.roles.w]),
            given: names([&inst.roles.z]),
        },
    )
}

pub fn evaluate(inst: &ClaimInstance) -> Result<ClaimReport> {
    let p = check_premises(inst)?;
    let conclusion_3 = check_conclusion(inst)?;
    let verdict = verdict_for(&p, conclusion_3);
    Ok(ClaimReport {
        causes: inst.causes().to_vec(),
        premise_1i: p.premise_1i,
        premise_1ii: p.premise_1ii,
        premise_iii: p.premise_iii,
        premise_2: p.premise_2,
        conclusion_3,
        verdict,
    })
}

const XOR_ROWS: [[&str; 3]; 4] = [["0", "0", "0"], ["0", "1", "1"], ["1", "0", "1"], ["1", "1", "0"]];

/// `(A1, A2, W)` uniform on the four even-parity triples.
pub fn xor_triple() -> JointTable {
    let rows: Vec<Assignment> = XOR_ROWS
        .iter()
        .map(|[a1, a2, w]| Assignment::from_pairs([("A1", *a1), ("A2", *a2), ("W", *w)]))
        .collect();
    JointTable::uniform_over(Schema::binary(&["A1", "A2", "W"]), &rows).expect("xor triple")
}

fn fair_coin(name: &str) -> (Variable, [Rational; 2]) {
    (Variable::new(name, ["0", "1"]), [Rational::new(1, 2), Rational::new(1, 2)])
}

/// XOR triple times an independent fair coin `Z`; `U` absent.
pub fn build_ce1() -> ClaimInstance {
    let (z, dist) = fair_coin("Z");
    let table = xor_triple().extend_independent(z, &dist).expect("ce1 table");
    ClaimInstance::new(
        table,
        Roles {
            causes: vec!["A1".into(), "A2".into()],
            w: "W".into(),
            u: None,
            z: "Z".into(),
        },
    )
    .expect("ce1 roles")
}

/// Fair coin `Z = U`; the XOR triple on `{0,1}` when `Z = 0` and on `{0,2}` when `Z = 1`.
pub fn build_ce2() -> ClaimInstance {
    let schema = Schema::new(vec![
        Variable::new("A1", ["0", "1", "2"]),
        Variable::new("A2", ["0", "1", "2"]),
        Variable::new("W", ["0", "1"]),
        Variable::new("Z", ["0", "1"]),
    ])
    .expect("ce2 schema");
    let mut rows = Vec::new();
    for (z, hi) in [("0", "1"), ("1", "2")] {
        for [a1, a2, w] in XOR_ROWS {
            let lift = |l: &str| if l == "1" { hi } else { "0" };
            rows.push(Assignment::from_pairs([("A1", lift(a1)), ("A2", lift(a2)), ("W", w), ("Z", z)]));
        }
    }
    let table = JointTable::uniform_over(schema, &rows).expect("ce2 table");
    ClaimInstance::new(
        table,
        Roles {
            causes: vec!["A1".into(), "A2".into()],
            w: "W".into(),
            u: Some("Z".into()),
            z: "Z".into(),
        },
    )
    .expect("ce2 roles")
}

/// XOR triple plus `extra` independent fair-coin causes `A3..`, with `Z` a
/// deterministic function of the extra causes: `Z = A3` when `extra = 1`,
/// otherwise the concatenated labels of `A3..A(2+extra)`.
pub fn build_overlap_variant(extra: usize) -> Result<ClaimInstance> {
    if extra == 0 {
        return Err(Error::Config("overlap variant needs at least one extra cause".into()));
    }
    let mut table = xor_triple();
    let mut causes = vec!["A1".to_string(), "A2".to_string()];
    for i in 0..extra {
        let name = format!("A{}", i + 3);
        let (v, dist) = fair_coin(&name);
        table = table.extend_independent(v, &dist)?;
        causes.push(name);
    }
    let extras: Vec<String> = causes[2..].to_vec();
    let table = table.push_forward_deterministic("Z", |a| {
        extras.iter().map(|c| a.get(c).expect("extra cause")).collect::<String>()
    })?;
    ClaimInstance::new(
        table,
        Roles {
            causes,
            w: "W".into(),
            u: None,
            z: "Z".into(),
        },
    )
}

/// Claim instance file: the table format plus a `roles` block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimJson {
    pub variables: Vec<VariableJson>,
    pub entries: Vec<EntryJson>,
    pub roles: Roles,
}

impl From<&ClaimInstance> for ClaimJson {
    fn from(inst: &ClaimInstance) -> Self {
        let t = TableJson::from(&inst.table);
        ClaimJson {
            variables: schema_to_json(inst.table.schema()),
            entries: t.entries,
            roles: inst.roles.clone(),
        }
    }
}

impl ClaimJson {
    pub fn into_instance(self) -> Result<ClaimInstance> {
        let table = TableJson {
            variables: self.variables,
            entries: self.entries,
        }
        .into_table()?;
        ClaimInstance::new(table, self.roles)
    }
}

pub fn claim_to_json(inst: &ClaimInstance) -> String {
    serde_json::to_string(&ClaimJson::from(inst)).expect("claim serialization is infallible")
}

pub fn claim_from_json(s: &str) -> Result<ClaimInstance> {
    let raw: ClaimJson = serde_json::from_str(s)?;
    raw.into_instance()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roles_must_be_distinct_and_known() {
        let ce1 = build_ce1();
        assert!(matches!(ce1.with_u(Some("W")), Err(Error::Role(_))));
        assert!(matches!(ce1.with_u(Some("Q")), Err(Error::UnknownVariable(_))));
        let bad = Roles {
            causes: vec![],
            w: "W".into(),
            u: None,
            z: "Z".into(),
        };
        assert!(ClaimInstance::new(ce1.table().clone(), bad).is_err());
    }

    #[test]
    fn single_cause_premises_are_vacuous_where_undefined() {
        let ce1 = build_ce1();
        let roles = Roles {
            causes: vec!["A1".into()],
            w: "W".into(),
            u: None,
            z: "Z".into(),
        };
        let inst = ClaimInstance::new(ce1.table().clone(), roles).unwrap();
        let r = evaluate(&inst).unwrap();
        assert_eq!(r.premise_1ii, [true]);
        assert!(r.premise_2);
        // A1 alone carries no information about W
        assert!(r.conclusion_3);
        assert_eq!(r.verdict, Verdict::ClaimInstanceConsistent);
    }

    #[test]
    fn overlap_variant_needs_an_extra_cause() {
        assert!(build_overlap_variant(0).is_err());
    }

    #[test]
    fn claim_json_round_trip() {
        let ce2 = build_ce2();
        let text = claim_to_json(&ce2);
        assert!(text.ends_with(r#""roles":{"causes":["A1","A2"],"w":"W","u":"Z","z":"Z"}}"#));
        assert_eq!(claim_from_json(&text).unwrap(), ce2);
        let ce1_text = claim_to_json(&build_ce1());
        assert!(ce1_text.contains(r#""u":null"#));
    }
}
