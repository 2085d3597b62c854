//! P-value bounds for CHSH trial counts.
//!
//! The complete analysis bounds the per-trial winning probability of any
//! local-hidden-variable model by `β` and reports `Pr[Bin(n, β) >= k]`. With
//! imperfect random number generators `β` depends on two characterization
//! numbers, [`BiasParams`]: the probability `f` that a setting is produced
//! early enough to be signalled, and the mean bias `τ` of the generator.
//!
//! Two forms of `β(f, τ)` are provided. [`beta_win_lemma`] uses the
//! effective on-time bias `τ' = min((2τ + f) / (2(1 - f)), 1/2)` and is the
//! rigorous bound. [`beta_win_expanded`] is the closed polynomial
//! `3/4 + f/2 - f²/4 + τ - τ² - 2fτ + f²τ + 2fτ² - f²τ²`, which equals the
//! lemma form with `τ` in place of `τ'` and is therefore never larger. The
//! complete analysis uses the lemma form unless [`BetaForm::Expanded`] is
//! requested.

use crate::error::{Error, Result};
use crate::exec::{map_ordered, Exec};
use crate::special::{binomial_upper_tail, chi2_sf_even, normal_upper_tail};
use crate::trial::Tally;
use serde::{Deserialize, Serialize};

/// Caveat attached to combined reports.
pub const COMBINE_CAVEAT: &str = "Fisher combination treats the runs as fully independent tests; merging treats them as a single test. These are extreme interpretations and the resulting P-values should be read accordingly.";

/// Early-number probability `f` and mean RNG bias `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasParams {
    pub f: f64,
    pub tau: f64,
}

impl BiasParams {
    pub fn new(f: f64, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::domain(format!("f = {f} not in [0, 1]")));
        }
        if !(0.0..=0.5).contains(&tau) {
            return Err(Error::domain(format!("tau = {tau} not in [0, 1/2]")));
        }
        Ok(BiasParams { f, tau })
    }

    /// Perfect generators: `β = 3/4`.
    pub fn ideal() -> Self {
        BiasParams { f: 0.0, tau: 0.0 }
    }

    /// Effective bias of on-time numbers, `min((2τ + f) / (2(1 - f)), 1/2)`.
    pub fn tau_prime(&self) -> f64 {
        if self.f >= 1.0 {
            return 0.5;
        }
        ((2.0 * self.tau + self.f) / (2.0 * (1.0 - self.f))).min(0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaForm {
    #[default]
    Lemma,
    Expanded,
}

impl BetaForm {
    pub fn beta(self, params: BiasParams) -> f64 {
        match self {
            BetaForm::Lemma => beta_win_lemma(params),
            BetaForm::Expanded => beta_win_expanded(params),
        }
    }
}

/// `2f - f² + (1 - f)²(3/4 + τ' - τ'²)`.
pub fn beta_win_lemma(params: BiasParams) -> f64 {
    let f = params.f;
    if f >= 1.0 {
        return 1.0;
    }
    let tp = params.tau_prime();
    let on_time = 0.75 + tp - tp * tp;
    2.0 * f - f * f + (1.0 - f) * (1.0 - f) * on_time
}

pub fn beta_win_expanded(params: BiasParams) -> f64 {
    let BiasParams { f, tau: t } = params;
    0.75 + 0.5 * f - 0.25 * f * f + t - t * t - 2.0 * f * t + f * f * t + 2.0 * f * t * t
        - f * f * t * t
}

/// `Pr[Bin(n, β) >= k]`, the complete-analysis bound.
pub fn pvalue_complete(n: u64, k: u64, beta: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    if k > n {
        return Err(Error::domain(format!("k = {k} exceeds n = {n}")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::domain(format!("beta = {beta} not in (0, 1)")));
    }
    Ok(binomial_upper_tail(n, k, beta))
}

/// One-sided Gaussian tail of `(S - 2) / σ`.
pub fn pvalue_conventional(s: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !s.is_finite() {
        return Err(Error::domain(format!("sigma = {sigma} must be positive")));
    }
    Ok(normal_upper_tail((s - 2.0) / sigma))
}

/// Fisher's method: survival of χ² with `2m` degrees of freedom at `-2 Σ ln p`.
pub fn fisher_combine(pvalues: &[f64]) -> Result<f64> {
    if pvalues.is_empty() {
        return Err(Error::domain("no P-values to combine"));
    }
    if let Some(p) = pvalues.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::domain(format!("P-value {p} not in (0, 1]")));
    }
    let stat: f64 = -2.0 * pvalues.iter().map(|p| p.ln()).sum::<f64>();
    Ok(chi2_sf_even(stat, pvalues.len() as u64))
}

/// Complete-analysis P-value of the pooled tallies.
pub fn pvalue_merged(runs: &[Tally], beta: f64) -> Result<f64> {
    let total = runs.iter().copied().fold(Tally::default(), |a, b| a + b);
    pvalue_complete(total.n, total.k, beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub tau: f64,
    pub p: f64,
}

/// Complete-analysis P-value along a grid of mean biases at fixed `f`.
pub fn pvalue_vs_tau_curve(
    n: u64,
    k: u64,
    tau_grid: &[f64],
    f: f64,
    form: BetaForm,
    exec: Exec,
) -> Result<Vec<CurvePoint>> {
    let params = tau_grid
        .iter()
        .map(|&tau| BiasParams::new(f, tau))
        .collect::<Result<Vec<_>>>()?;
    map_ordered(exec, params, |bp| {
        // β = 1 (fully predictable) makes every outcome certain
        let beta = form.beta(bp);
        let p = if beta >= 1.0 {
            Ok(1.0)
        } else {
            pvalue_complete(n, k, beta)
        };
        p.map(|p| CurvePoint { tau: bp.tau, p })
    })
    .into_iter()
    .collect()
}

pub fn curve_to_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("tau,p\n");
    for pt in points {
        out.push_str(&format!("{},{}\n", pt.tau, pt.p));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Conventional,
    Complete,
    Fisher,
    Merged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReportInputs {
    Gaussian { s: f64, sigma: f64 },
    Counts { n: u64, k: u64, beta: f64 },
    Runs { runs: Vec<Tally>, beta: f64 },
    PValues { pvalues: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueReport {
    pub method: Method,
    pub p: f64,
    pub inputs: ReportInputs,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub caveat: Option<String>,
}

impl PValueReport {
    pub fn conventional(s: f64, sigma: f64) -> Result<Self> {
        Ok(PValueReport {
            method: Method::Conventional,
            p: pvalue_conventional(s, sigma)?,
            inputs: ReportInputs::Gaussian { s, sigma },
            caveat: None,
        })
    }

    pub fn complete(n: u64, k: u64, beta: f64) -> Result<Self> {
        Ok(PValueReport {
            method: Method::Complete,
            p: pvalue_complete(n, k, beta)?,
            inputs: ReportInputs::Counts { n, k, beta },
            caveat: None,
        })
    }

    pub fn fisher(pvalues: Vec<f64>) -> Result<Self> {
        Ok(PValueReport {
            method: Method::Fisher,
            p: fisher_combine(&pvalues)?,
            inputs: ReportInputs::PValues { pvalues },
            caveat: Some(COMBINE_CAVEAT.to_string()),
        })
    }

    pub fn merged(runs: Vec<Tally>, beta: f64) -> Result<Self> {
        Ok(PValueReport {
            method: Method::Merged,
            p: pvalue_merged(&runs, beta)?,
            inputs: ReportInputs::Runs { runs, beta },
            caveat: Some(COMBINE_CAVEAT.to_string()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bp(f: f64, tau: f64) -> BiasParams {
        BiasParams::new(f, tau).unwrap()
    }

    #[test]
    fn bias_params_validate() {
        assert!(BiasParams::new(-0.1, 0.0).is_err());
        assert!(BiasParams::new(1.1, 0.0).is_err());
        assert!(BiasParams::new(0.0, 0.51).is_err());
        assert!(BiasParams::new(1.0, 0.5).is_ok());
    }

    #[test]
    fn lemma_examples() {
        assert_eq!(beta_win_lemma(bp(0.0, 0.0)), 0.75);
        assert_eq!(beta_win_lemma(bp(0.0, 0.5)), 1.0);
        assert_eq!(beta_win_lemma(bp(1.0, 0.0)), 1.0);
        assert_eq!(bp(1.0, 0.0).tau_prime(), 0.5);
        let p = bp(0.001, 0.0);
        assert_relative_eq!(p.tau_prime(), 0.001 / (2.0 * 0.999), max_relative = 1e-15);
        // symbolic expansion at τ = 0
        assert!((beta_win_lemma(p) - (0.75 + 0.001 - 0.001 * 0.001)).abs() <= 1e-12);
    }

    #[test]
    fn expanded_examples() {
        assert_eq!(beta_win_expanded(bp(0.0, 0.0)), 0.75);
        assert!((beta_win_expanded(bp(0.2, 0.0)) - 0.84).abs() < 1e-15);
        assert!((beta_win_expanded(bp(0.0, 0.1)) - 0.84).abs() < 1e-15);
    }

    #[test]
    fn lemma_form_close_to_one_near_f_one() {
        let b = beta_win_lemma(bp(1.0 - 1e-12, 0.0));
        assert!(b <= 1.0 && b > 0.999_999);
    }

    #[test]
    fn complete_examples_and_errors() {
        assert_eq!(pvalue_complete(10, 0, 0.75).unwrap(), 1.0);
        assert_relative_eq!(pvalue_complete(2, 2, 0.75).unwrap(), 0.5625, max_relative = 1e-14);
        assert!(pvalue_complete(5, 6, 0.75).is_err());
        assert!(pvalue_complete(0, 0, 0.75).is_err());
        assert!(pvalue_complete(5, 3, 0.0).is_err());
        assert!(pvalue_complete(5, 3, 1.0).is_err());
    }

    #[test]
    fn conventional_examples() {
        assert_eq!(pvalue_conventional(2.0, 0.3).unwrap(), 0.5);
        assert!((pvalue_conventional(2.35, 0.18).unwrap() - 0.0259).abs() < 5e-5);
        assert!(pvalue_conventional(2.5, 0.0).is_err());
        assert!(pvalue_conventional(2.5, -1.0).is_err());
    }

    #[test]
    fn fisher_examples() {
        assert_eq!(fisher_combine(&[1.0, 1.0]).unwrap(), 1.0);
        assert_relative_eq!(fisher_combine(&[0.05]).unwrap(), 0.05, max_relative = 1e-12);
        assert!(fisher_combine(&[]).is_err());
        assert!(fisher_combine(&[0.5, 0.0]).is_err());
        assert!(fisher_combine(&[1.5]).is_err());
        for m in 1..50 {
            assert_eq!(fisher_combine(&vec![1.0; m]).unwrap(), 1.0);
        }
    }

    #[test]
    fn merged_sums_tallies() {
        let runs = [Tally { k: 196, n: 245 }, Tally { k: 237, n: 300 }];
        assert_eq!(
            pvalue_merged(&runs, 0.75).unwrap(),
            pvalue_complete(545, 433, 0.75).unwrap()
        );
    }

    #[test]
    fn curve_single_point_and_monotone() {
        let c = pvalue_vs_tau_curve(300, 237, &[0.0], 0.0, BetaForm::Lemma, Exec::Sequential)
            .unwrap();
        assert_eq!(c[0].p, pvalue_complete(300, 237, 0.75).unwrap());
        let grid = [0.0, 1e-4, 1e-3, 1e-2];
        let c = pvalue_vs_tau_curve(300, 237, &grid, 0.0, BetaForm::Lemma, Exec::Parallel)
            .unwrap();
        assert!((c[0].p - 0.061).abs() < 1e-3);
        assert!(c.windows(2).all(|w| w[1].p >= w[0].p));
        assert!(pvalue_vs_tau_curve(300, 237, &[0.6], 0.0, BetaForm::Lemma, Exec::Sequential)
            .is_err());
        let full = pvalue_vs_tau_curve(10, 10, &[0.5], 0.0, BetaForm::Lemma, Exec::Sequential)
            .unwrap();
        assert_eq!(full[0].p, 1.0);
    }

    #[test]
    fn curve_beta_matching() {
        // τ at f = 0 with the same β as (f = 1e-3, τ = 0): 3/4 + τ - τ² = β
        let beta = beta_win_lemma(bp(1e-3, 0.0));
        let tau = 0.5 - (1.0 - beta).sqrt();
        let a = pvalue_vs_tau_curve(300, 237, &[0.0], 1e-3, BetaForm::Lemma, Exec::Sequential)
            .unwrap();
        let b = pvalue_vs_tau_curve(300, 237, &[tau], 0.0, BetaForm::Lemma, Exec::Sequential)
            .unwrap();
        assert_relative_eq!(a[0].p, b[0].p, max_relative = 1e-9);
    }

    #[test]
    fn reports_serialize() {
        let r = PValueReport::merged(vec![Tally { k: 1, n: 1 }], 0.75).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["method"], "merged");
        assert!(v["caveat"].is_string());
        let csv = curve_to_csv(&[CurvePoint { tau: 0.0, p: 0.5 }]);
        assert_eq!(csv, "tau,p\n0,0.5\n");
    }
}
