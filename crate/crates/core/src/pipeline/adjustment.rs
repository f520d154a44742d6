//! The adjustment functional `ψ(a) = Σ_z P(z) · E[W | A = a, Z = z]` and the
//! zero-probability conditioning diagnostics for deterministic substitutes.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::Rational;
use crate::table::{Assignment, JointTable};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StratumTerm {
    pub z: String,
    pub p_z: Rational,
    /// `P(A = a, Z = z)`.
    pub p_a_z: Rational,
    /// `E[W | A = a, Z = z]`; absent when the conditioning event is null.
    pub e_w: Option<Rational>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AdjustmentReport {
    pub target: String,
    /// Undefined when any positive stratum is degenerate.
    pub psi: Option<Rational>,
    pub baseline: Rational,
    pub gap: Option<Rational>,
    pub terms: Vec<StratumTerm>,
    /// Strata with `P(Z = z) > 0` but `P(A = a, Z = z) = 0`.
    pub degenerate_strata: Vec<String>,
}

fn check_roles(table: &JointTable, causes: &[String], w: &str, z: &str, a: &Assignment) -> Result<()> {
    let schema = table.schema();
    let mut names: Vec<&str> = causes.iter().map(String::as_str).collect();
    names.push(w);
    names.push(z);
    for (i, n) in names.iter().enumerate() {
        schema.require(n)?;
        if names[..i].contains(n) {
            return Err(Error::Role(format!("`{n}` plays two roles")));
        }
    }
    if a.len() != causes.len() || causes.iter().any(|c| a.get(c).is_none()) {
        return Err(Error::Role(format!("target `{a}` must assign exactly the causes {causes:?}")));
    }
    Ok(())
}

/// Evaluates `ψ(a)` exactly and compares it with `E[W]`.
///
/// Degenerate strata are reported, never imputed: if any positive-probability
/// stratum has `P(A = a, Z = z) = 0`, `ψ` and the gap are left undefined.
pub fn adjustment_functional(
    table: &JointTable,
    causes: &[String],
    w: &str,
    z: &str,
    a: &Assignment,
    values: &BTreeMap<String, Rational>,
) -> Result<AdjustmentReport> {
    check_roles(table, causes, w, z, a)?;
    let baseline = table.expectation(w, values)?;
    let zvar = table.schema().variable(z)?.clone();
    let mut terms = Vec::new();
    let mut degenerate = Vec::new();
    let mut psi = Rational::zero();
    for label in &zvar.support {
        let z_event = Assignment::new().with(z, label.as_str());
        let p_z = table.prob(&z_event)?;
        if p_z.is_zero() {
            continue;
        }
        let mut event = a.clone();
        event.insert(z, label.as_str());
        let p_a_z = table.prob(&event)?;
        let e_w = if p_a_z.is_zero() {
            degenerate.push(label.clone());
            None
        } else {
            let e = table.condition(&event)?.expectation(w, values)?;
            psi += &p_z * &e;
            Some(e)
        };
        terms.push(StratumTerm {
            z: label.clone(),
            p_z,
            p_a_z,
            e_w,
        });
    }
    let (psi, gap) = if degenerate.is_empty() {
        let gap = &psi - &baseline;
        (Some(psi), Some(gap))
    } else {
        (None, None)
    };
    Ok(AdjustmentReport {
        target: a.to_string(),
        psi,
        baseline,
        gap,
        terms,
        degenerate_strata: degenerate,
    })
}

/// Where the substitute comes from: an existing column, or a map applied to the causes.
pub enum ZSource<'a> {
    Column(&'a str),
    Map(&'a dyn Fn(&Assignment) -> String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ConditioningStatus {
    /// `P(A = a, Z = z) > 0`.
    WellDefined,
    /// `P(A = a) > 0` but `z ≠ f(a)`: the event is null.
    OffManifold,
    /// `P(A = a) = 0`; there is no feasible `z` at all.
    CauseEventNull,
}

impl fmt::Display for ConditioningStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditioningStatus::WellDefined => "WellDefined",
            ConditioningStatus::OffManifold => "OffManifold",
            ConditioningStatus::CauseEventNull => "CauseEventNull",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DegenerateReport {
    pub target: String,
    pub z_value: String,
    pub probability: Rational,
    pub status: ConditioningStatus,
    /// Values of `Z` with `P(A = a, Z = z) > 0`.
    pub feasible_z: Vec<String>,
}

/// Checks that `z` is a function of `causes` on the support of `table`.
pub fn check_deterministic(table: &JointTable, causes: &[String], z: &str) -> Result<()> {
    let schema = table.schema();
    let zi = schema.require(z)?;
    let ci = schema.indices(causes)?;
    let mut seen: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for (k, _) in table.entries() {
        let key: Vec<usize> = ci.iter().map(|&i| k[i]).collect();
        if let Some(prev) = seen.insert(key, k[zi]) {
            if prev != k[zi] {
                return Err(Error::NotDeterministic { z: z.to_string() });
            }
        }
    }
    Ok(())
}

/// Classifies the conditioning event `(A = a, Z = z_value)` for a
/// deterministic substitute `Z = f(A)`. `a` may fix any subset of the causes;
/// a `z_value` outside the support of `Z` is a null event, not an error.
pub fn degenerate_conditioning_report(
    table: &JointTable,
    causes: &[String],
    z: ZSource,
    a: &Assignment,
    z_value: &str,
) -> Result<DegenerateReport> {
    for name in a.names() {
        if !causes.iter().any(|c| c == name) {
            return Err(Error::Role(format!("`{name}` is not a cause")));
        }
    }
    let (table, z_name) = match z {
        ZSource::Column(name) => {
            if causes.iter().any(|c| c == name) {
                return Err(Error::Role(format!("`{name}` cannot be both a cause and the substitute")));
            }
            let mut keep: Vec<&str> = causes.iter().map(String::as_str).collect();
            keep.push(name);
            (table.marginal(keep)?, name.to_string())
        }
        ZSource::Map(f) => {
            let mut name = "Z".to_string();
            while causes.contains(&name) {
                name.push('\'');
            }
            (table.marginal(causes)?.push_forward_deterministic(&name, f)?, name)
        }
    };
    check_deterministic(&table, causes, &z_name)?;
    let zvar = table.schema().variable(&z_name)?.clone();
    let p_a = table.prob(a)?;
    let mut feasible = Vec::new();
    for label in &zvar.support {
        let mut ev = a.clone();
        ev.insert(z_name.as_str(), label.as_str());
        if table.prob(&ev)?.is_positive() {
            feasible.push(label.clone());
        }
    }
    let probability = if zvar.label_index(z_value).is_some() {
        let mut ev = a.clone();
        ev.insert(z_name.as_str(), z_value);
        table.prob(&ev)?
    } else {
        Rational::zero()
    };
    let status = if p_a.is_zero() {
        ConditioningStatus::CauseEventNull
    } else if probability.is_zero() {
        ConditioningStatus::OffManifold
    } else {
        ConditioningStatus::WellDefined
    };
    Ok(DegenerateReport {
        target: a.to_string(),
        z_value: z_value.to_string(),
        probability,
        status,
        feasible_z: feasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{numeric_values, Variable};

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn causes(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    /// A binary, Z a fair coin copied from A, W = Z.
    fn copy_chain() -> JointTable {
        JointTable::single(Variable::new("A", ["0", "1"]), &[r(1, 2), r(1, 2)])
            .unwrap()
            .push_forward_deterministic("Z", |a| a.get("A").unwrap().to_string())
            .unwrap()
            .push_forward_deterministic("W", |a| a.get("Z").unwrap().to_string())
            .unwrap()
    }

    #[test]
    fn degenerate_strata_leave_psi_undefined() {
        let t = copy_chain();
        let w = numeric_values(t.schema().variable("W").unwrap()).unwrap();
        let rep = adjustment_functional(&t, &causes(&["A"]), "W", "Z", &Assignment::new().with("A", "1"), &w).unwrap();
        assert_eq!(rep.degenerate_strata, ["0"]);
        assert_eq!(rep.psi, None);
        assert_eq!(rep.gap, None);
        assert_eq!(rep.baseline, r(1, 2));
        assert_eq!(rep.terms[1].e_w, Some(Rational::one()));
    }

    #[test]
    fn target_must_assign_exactly_the_causes() {
        let t = copy_chain();
        let w = numeric_values(t.schema().variable("W").unwrap()).unwrap();
        let bad = Assignment::new().with("A", "1").with("Z", "1");
        assert!(matches!(
            adjustment_functional(&t, &causes(&["A"]), "W", "Z", &bad, &w),
            Err(Error::Role(_))
        ));
        assert!(matches!(
            adjustment_functional(&t, &causes(&["A"]), "A", "Z", &Assignment::new().with("A", "1"), &w),
            Err(Error::Role(_))
        ));
    }

    #[test]
    fn non_deterministic_substitute_rejected() {
        let t = JointTable::single(Variable::new("A", ["0", "1"]), &[r(1, 2), r(1, 2)])
            .unwrap()
            .extend_independent(Variable::new("Z", ["0", "1"]), &[r(1, 2), r(1, 2)])
            .unwrap();
        let err = degenerate_conditioning_report(&t, &causes(&["A"]), ZSource::Column("Z"), &Assignment::new(), "0")
            .unwrap_err();
        assert!(matches!(err, Error::NotDeterministic { .. }));
    }

    #[test]
    fn null_cause_event_is_its_own_status() {
        let t = JointTable::single(Variable::new("A", ["0", "1"]), &[Rational::one(), Rational::zero()]).unwrap();
        let f = |a: &Assignment| a.get("A").unwrap().to_string();
        let rep =
            degenerate_conditioning_report(&t, &causes(&["A"]), ZSource::Map(&f), &Assignment::new().with("A", "1"), "1")
                .unwrap();
        assert_eq!(rep.status, ConditioningStatus::CauseEventNull);
        assert!(rep.feasible_z.is_empty());
    }
}
