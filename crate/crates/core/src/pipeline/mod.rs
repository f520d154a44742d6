//! Sampling, latent-class EM, substitute confounders and the adjustment functional.
//!
//! [`run_deconfounder`] strings them together on a known table: the exact
//! adjustment with the true `Z`, then (for `n > 0`) a fitted substitute
//! `Zhat = MAP class` pushed forward through the table and adjusted for in
//! the same way.

pub mod adjustment;
pub mod em;
pub mod sampling;

pub use adjustment::{
    adjustment_functional, check_deterministic, degenerate_conditioning_report, AdjustmentReport,
    ConditioningStatus, DegenerateReport, StratumTerm, ZSource,
};
pub use em::{
    align_classes, fit_latent_class_em, EmConfig, EmFit, EmRun, ExactLatentClassModel, LatentClassModel, ModelJson,
    SubstituteConfounder,
};
pub use sampling::{simulate_samples, Dataset};

use std::cell::RefCell;

use serde::Serialize;

use crate::claims::ClaimInstance;
use crate::error::Result;
use crate::table::{numeric_values, Assignment};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeconfConfig {
    /// Sample size; 0 skips sampling and fitting.
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub em: EmConfig,
}

impl Default for DeconfConfig {
    fn default() -> Self {
        DeconfConfig {
            n: 0,
            k: 2,
            seed: 0,
            em: EmConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FittedSubstitute {
    pub log_likelihood: f64,
    /// Log-likelihood of the same sample under the latent-class model read off the table.
    pub true_log_likelihood: f64,
    pub converged: bool,
    pub best_restart: usize,
    pub model: ModelJson,
    /// Substitute variable name added to the table.
    pub zhat: String,
    pub adjustment: AdjustmentReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeconfReport {
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub exact: AdjustmentReport,
    pub fitted: Option<FittedSubstitute>,
}

/// Runs the pipeline on `inst` for target cause assignment `a`. `W` labels
/// must parse as rationals.
pub fn run_deconfounder(inst: &ClaimInstance, a: &Assignment, cfg: &DeconfConfig) -> Result<DeconfReport> {
    let table = inst.table();
    let roles = inst.roles();
    let causes = inst.causes();
    let values = numeric_values(table.schema().variable(&roles.w)?)?;
    let exact = adjustment_functional(table, causes, &roles.w, &roles.z, a, &values)?;
    let fitted = if cfg.n == 0 {
        None
    } else {
        let data = simulate_samples(table, causes, cfg.n, cfg.seed)?;
        let em = EmConfig {
            seed: cfg.seed,
            ..cfg.em.clone()
        };
        let fit = fit_latent_class_em(&data, cfg.k, &em)?;
        let truth = ExactLatentClassModel::from_table(table, causes, &roles.z)?.to_model();
        let mut zhat = "Zhat".to_string();
        while table.schema().index_of(&zhat).is_some() {
            zhat.push('\'');
        }
        let model = fit.model.clone();
        let err = RefCell::new(None);
        let extended = table.push_forward_deterministic(&zhat, |row| match model.substitute_confounder(row) {
            Ok(s) => format!("c{}", s.map_class),
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                String::new()
            }
        })?;
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        let adjustment = adjustment_functional(&extended, causes, &roles.w, &zhat, a, &values)?;
        Some(FittedSubstitute {
            log_likelihood: fit.log_likelihood,
            true_log_likelihood: truth.log_likelihood(&data),
            converged: fit.converged,
            best_restart: fit.best_restart,
            model: ModelJson::from(&fit.model),
            zhat,
            adjustment,
        })
    };
    Ok(DeconfReport {
        seed: cfg.seed,
        n: cfg.n,
        k: cfg.k,
        exact,
        fitted,
    })
}
