//! Full single-run analysis report.

use crate::error::{Error, Result};
use crate::pvalue::{pvalue_complete, pvalue_conventional, BetaForm, BiasParams};
use crate::trial::{aggregate, chsh_s, correlators, CellRow, ChshSummary, TrialSet};
use serde::{Deserialize, Serialize};

/// Identifies the run that produced a report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInfo {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub run: RunInfo,
    pub label: String,
    pub k: u64,
    pub n: u64,
    pub chsh: ChshSummary,
    pub correlators: Vec<CellRow>,
    pub bias: BiasParams,
    pub beta: f64,
    pub p_conventional: Option<f64>,
    pub p_complete: f64,
}

/// S, k, n, correlators and both P-values for one trial set.
pub fn analyze(
    set: &TrialSet,
    bias: BiasParams,
    form: BetaForm,
    run: RunInfo,
) -> Result<AnalysisReport> {
    let tally = aggregate(set);
    if tally.n == 0 {
        return Err(Error::domain("trial set has no heralded trials"));
    }
    let chsh = chsh_s(set)?;
    let beta = form.beta(bias);
    let p_complete = if beta >= 1.0 { 1.0 } else { pvalue_complete(tally.n, tally.k, beta)? };
    // a zero error bar (e.g. every trial won) has no Gaussian P-value
    let p_conventional = pvalue_conventional(chsh.s_weighted, chsh.sigma).ok();
    Ok(AnalysisReport {
        run,
        label: set.meta.label.clone(),
        k: tally.k,
        n: tally.n,
        chsh,
        correlators: correlators(set).rows(),
        bias,
        beta,
        p_conventional,
        p_complete,
    })
}
