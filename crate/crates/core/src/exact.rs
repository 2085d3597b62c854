//! Exact discrete tests shared by the settings audit and the randomness checks.
//!
//! Two-sided P-values use probability ordering: every outcome whose null
//! probability does not exceed the observed one counts as at least as extreme.
//! Probabilities are compared with a relative slack of `1e-7` so that ties
//! broken by rounding still count.

use crate::special::{binomial_ln_pmf, ln_choose, ln_factorial, KahanSum};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Relative slack for probability ties.
pub const TIE_SLACK: f64 = 1e-7;

fn ln_slack() -> f64 {
    TIE_SLACK.ln_1p()
}

/// Sums the masses at or below the observed mass, normalised by the total mass.
fn minlike_sum(ln_pmf: &[f64], observed: f64) -> f64 {
    let peak = ln_pmf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cut = observed + ln_slack();
    let mut total = KahanSum::default();
    let mut tail = KahanSum::default();
    for &lp in ln_pmf {
        let w = (lp - peak).exp();
        total.add(w);
        if lp <= cut {
            tail.add(w);
        }
    }
    (tail.total() / total.total()).min(1.0)
}

/// Two-sided Fisher exact test on `[[a, b], [c, d]]`. Tables with an empty
/// row or column have a single admissible arrangement and return 1.
pub fn fisher_exact_two_sided(table: [[u64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = table;
    let r1 = a + b;
    let r2 = c + d;
    let c1 = a + c;
    let c2 = b + d;
    if r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0 {
        return 1.0;
    }
    let n = r1 + r2;
    let lo = (r1 + c1).saturating_sub(n);
    let hi = r1.min(c1);
    let ln_pmf = |x: u64| ln_choose(r1, x) + ln_choose(n - r1, c1 - x) - ln_choose(n, c1);
    let all: Vec<f64> = (lo..=hi).map(ln_pmf).collect();
    minlike_sum(&all, ln_pmf(a))
}

/// Two-sided exact binomial test of `k` successes in `n` trials at success probability `p`.
pub fn binomial_two_sided(n: u64, k: u64, p: f64) -> f64 {
    assert!(k <= n && p > 0.0 && p < 1.0);
    let all: Vec<f64> = (0..=n).map(|i| binomial_ln_pmf(n, i, p)).collect();
    minlike_sum(&all, all[k as usize])
}

/// How a multinomial outcome is ranked against the observed one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ordering {
    /// At least as extreme means probability no larger than observed.
    #[default]
    Probability,
    /// At least as extreme means Pearson statistic no smaller than observed.
    ChiSquare,
}

/// `Σ (4 c_i - n)²`, sixteen times `n/4` times the Pearson statistic for
/// uniform cells; integer so orderings compare exactly.
pub fn uniform4_stat(counts: [u64; 4]) -> u64 {
    let n: u64 = counts.iter().sum();
    counts
        .iter()
        .map(|&c| {
            let d = 4 * c as i64 - n as i64;
            (d * d) as u64
        })
        .sum()
}

/// `ln Pr[counts]` under the uniform four-cell multinomial.
pub fn uniform4_ln_prob(counts: [u64; 4]) -> f64 {
    let n: u64 = counts.iter().sum();
    ln_factorial(n) - counts.iter().map(|&c| ln_factorial(c)).sum::<f64>()
        - n as f64 * 4f64.ln()
}

/// Largest `n` for which [`Uniform4Table`] enumerates outcomes exactly.
pub const UNIFORM4_EXACT_MAX_N: u64 = 600;

/// Exact null distribution of a uniform four-cell multinomial with fixed size,
/// tabulated over count partitions (outcomes equal up to cell permutation).
#[derive(Debug, Clone)]
pub struct Uniform4Table {
    n: u64,
    /// (ln prob, cumulative mass of all outcomes with ln prob <= this) ascending.
    by_prob: Vec<(f64, f64)>,
    /// (stat, mass of all outcomes with stat >= this) ascending by stat.
    by_stat: Vec<(u64, f64)>,
}

impl Uniform4Table {
    /// `None` when `n` exceeds [`UNIFORM4_EXACT_MAX_N`].
    pub fn new(n: u64) -> Option<Self> {
        if n > UNIFORM4_EXACT_MAX_N {
            return None;
        }
        let mut parts: Vec<(f64, u64, f64)> = Vec::new();
        for c1 in (n.div_ceil(4))..=n {
            let r1 = n - c1;
            for c2 in (r1.div_ceil(3))..=c1.min(r1) {
                let r2 = r1 - c2;
                for c3 in (r2.div_ceil(2))..=c2.min(r2) {
                    let c4 = r2 - c3;
                    let counts = [c1, c2, c3, c4];
                    let lp = uniform4_ln_prob(counts);
                    let mass = permutations(counts) as f64 * lp.exp();
                    parts.push((lp, uniform4_stat(counts), mass));
                }
            }
        }

        parts.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut acc = KahanSum::default();
        let by_prob = parts
            .iter()
            .map(|&(lp, _, m)| {
                acc.add(m);
                (lp, acc.total())
            })
            .collect();

        parts.sort_by_key(|x| std::cmp::Reverse(x.1));
        let mut acc = KahanSum::default();
        let mut by_stat: Vec<(u64, f64)> = Vec::with_capacity(parts.len());
        for &(_, s, m) in &parts {
            acc.add(m);
            match by_stat.last_mut() {
                Some(last) if last.0 == s => last.1 = acc.total(),
                _ => by_stat.push((s, acc.total())),
            }
        }
        by_stat.reverse();
        Some(Uniform4Table {
            n,
            by_prob,
            by_stat,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn p_value(&self, counts: [u64; 4], ordering: Ordering) -> f64 {
        debug_assert_eq!(counts.iter().sum::<u64>(), self.n);
        match ordering {
            Ordering::Probability => {
                let cut = uniform4_ln_prob(counts) + ln_slack();
                let idx = self.by_prob.partition_point(|&(lp, _)| lp <= cut);
                if idx == 0 {
                    0.0
                } else {
                    self.by_prob[idx - 1].1.min(1.0)
                }
            }
            Ordering::ChiSquare => {
                let s = uniform4_stat(counts);
                let idx = self.by_stat.partition_point(|&(st, _)| st < s);
                self.by_stat.get(idx).map_or(0.0, |&(_, m)| m.min(1.0))
            }
        }
    }
}

fn permutations(sorted_desc: [u64; 4]) -> u64 {
    let mut runs = 1u64;
    let mut denom = 1u64;
    for i in 1..4 {
        if sorted_desc[i] == sorted_desc[i - 1] {
            runs += 1;
            denom *= runs;
        } else {
            runs = 1;
        }
    }
    24 / denom
}

/// Uniformity P-value of four cell counts: exact when tabulated, otherwise
/// the asymptotic χ² (3 degrees of freedom) tail of the Pearson statistic.
pub fn uniform4_p_value(table: Option<&Uniform4Table>, counts: [u64; 4], ordering: Ordering) -> f64 {
    match table {
        Some(t) => t.p_value(counts, ordering),
        None => {
            let n: u64 = counts.iter().sum();
            let stat = uniform4_stat(counts) as f64 / (4.0 * n as f64);
            ChiSquared::new(3.0).expect("dof").sf(stat)
        }
    }
}
