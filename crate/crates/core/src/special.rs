//! Tail probabilities used by the P-value routines.

use statrs::function::beta::beta_reg;
use statrs::function::gamma::{gamma_ur, ln_gamma};

/// Above this trial count the binomial tail switches from term summation to
/// the regularized incomplete beta identity.
pub const BINOMIAL_SUM_MAX_N: u64 = 10_000;

/// Neumaier-compensated accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

pub fn ln_choose(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// ln of the Binomial(n, p) mass at `i`, for 0 < p < 1.
pub fn binomial_ln_pmf(n: u64, i: u64, p: f64) -> f64 {
    ln_choose(n, i) + i as f64 * p.ln() + (n - i) as f64 * (-p).ln_1p()
}

/// `Pr[X >= k]` for `X ~ Binomial(n, p)`.
pub fn binomial_upper_tail(n: u64, k: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    if n > BINOMIAL_SUM_MAX_N {
        return beta_reg(k as f64, (n - k + 1) as f64, p).clamp(0.0, 1.0);
    }
    let terms: Vec<f64> = (k..=n).map(|i| binomial_ln_pmf(n, i, p)).collect();
    let peak = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut acc = KahanSum::default();
    for lp in terms {
        acc.add((lp - peak).exp());
    }
    (peak.exp() * acc.total()).min(1.0)
}

/// Standard normal upper tail `Pr[Z >= z]`.
pub fn normal_upper_tail(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    let half = 0.5 * chi2_sf_1(z * z);
    if z >= 0.0 {
        half
    } else {
        1.0 - half
    }
}

/// Survival function of a chi-square variable with one degree of freedom.
pub fn chi2_sf_1(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        // statrs' erfc carries ~1e-10 relative error; the incomplete gamma does not
        gamma_ur(0.5, x / 2.0)
    }
}

/// Survival function of a chi-square variable with `2 * half_dof` degrees of
/// freedom: `exp(-x/2) * sum_{j < half_dof} (x/2)^j / j!`.
pub fn chi2_sf_even(x: f64, half_dof: u64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let h = x / 2.0;
    let ln_h = h.ln();
    let mut acc = KahanSum::default();
    for j in 0..half_dof {
        acc.add((-h + j as f64 * ln_h - ln_factorial(j)).exp());
    }
    acc.total().clamp(0.0, 1.0)
}
