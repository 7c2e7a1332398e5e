//! Full analysis of one observed dataset: point estimates, bias corrections,
//! standard errors, degrees of freedom and intervals for every estimator.

use crate::design::ExperimentData;
use crate::error::Result;
use crate::estimators::{point_estimates, EstimatorOptions, IBiasTerms, NiBiasTerms};
use crate::randomization::EstimatorKind;
use crate::variance::{
    variance_report, DfMode, FitContext, VarianceFlavor, VarianceOptions, VarianceReport,
};
use serde::{Deserialize, Serialize};

/// Version of the JSON layout of [`EstimateReport`].
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub estimator: EstimatorKind,
    pub estimate: f64,
    /// Amount subtracted from the OLS estimate (debiased estimators only).
    pub bias_correction: Option<f64>,
    pub variance: Vec<VarianceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub covariates: usize,
    pub level: f64,
    /// Recommended interval: BC-HC2 with Satterthwaite degrees of freedom.
    pub recommended_flavor: VarianceFlavor,
    pub recommended_mode: DfMode,
    pub estimators: Vec<EstimatorReport>,
    pub bias_terms_ni: NiBiasTerms,
    pub bias_terms_i: IBiasTerms,
}

impl EstimateReport {
    pub fn get(&self, kind: EstimatorKind) -> &EstimatorReport {
        self.estimators
            .iter()
            .find(|e| e.estimator == kind)
            .expect("every estimator is reported")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn estimate_report(
    data: &ExperimentData,
    flavors: &[VarianceFlavor],
    est_opts: EstimatorOptions,
    var_opts: &VarianceOptions,
) -> Result<EstimateReport> {
    let est = point_estimates(data, est_opts)?;
    let fits = [
        FitContext::for_data(data, EstimatorKind::Unadjusted.design(), var_opts.rel_tol)?,
        FitContext::for_data(data, EstimatorKind::OlsNi.design(), var_opts.rel_tol)?,
        FitContext::for_data(data, EstimatorKind::OlsI.design(), var_opts.rel_tol)?,
    ];
    let entries = [
        (EstimatorKind::Unadjusted, est.unadjusted, None, &fits[0]),
        (EstimatorKind::OlsNi, est.ols_ni, None, &fits[1]),
        (EstimatorKind::OlsI, est.ols_i, None, &fits[2]),
        (
            EstimatorKind::DebiasedNi,
            est.debiased_ni,
            Some(est.bias_ni.total),
            &fits[1],
        ),
        (
            EstimatorKind::DebiasedI,
            est.debiased_i,
            Some(est.bias_i.total),
            &fits[2],
        ),
    ];
    let estimators = entries
        .into_iter()
        .map(|(kind, estimate, bias_correction, ctx)| {
            let variance = flavors
                .iter()
                .map(|&f| variance_report(ctx, estimate, f, var_opts))
                .collect::<Result<Vec<_>>>()?;
            Ok(EstimatorReport {
                estimator: kind,
                estimate,
                bias_correction,
                variance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EstimateReport {
        schema_version: REPORT_SCHEMA_VERSION,
        n: data.n(),
        n_treated: data.n_treated(),
        n_control: data.n_control(),
        covariates: data.k(),
        level: var_opts.level,
        recommended_flavor: VarianceFlavor::BcHc2,
        recommended_mode: DfMode::Satterthwaite,
        estimators,
        bias_terms_ni: est.bias_ni,
        bias_terms_i: est.bias_i,
    })
}
