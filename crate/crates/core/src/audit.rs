//! Uniformity audits of recorded setting choices and look-elsewhere
//! corrections for running several such audits at once.
//!
//! Four local tests are run on the 2×2 table of setting pairs:
//! 1. RNG A uniform (two-tailed exact binomial on A's marginal),
//! 2. RNG B uniform (same for B),
//! 3. A and B jointly uniform (four-cell multinomial),
//! 4. independence of A and B (Fisher exact below 5000 pairs, Pearson χ² above).
//!
//! The joint rejection probability of the four tests under uniform settings is
//! estimated by Monte Carlo. Every repetition's four P-values are kept as a
//! tape, so the joint rate at any threshold and the threshold for a target
//! joint rate are read off the same random numbers.

use crate::error::{Error, Result};
use crate::exact::{
    fisher_exact_two_sided, uniform4_p_value, uniform4_stat, Ordering,
    Uniform4Table, TIE_SLACK,
};
use crate::exec::{run_chunks, McConfig};
use crate::special::{binomial_ln_pmf, chi2_sf_1, ln_factorial, KahanSum};
use crate::trial::Trial;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::io::BufRead;

/// Below this many pairs test 4 is Fisher's exact test, otherwise Pearson's χ².
pub const FISHER_MAX_N: u64 = 5000;

/// Minimum MC repetitions accepted by the Monte Carlo audits.
pub const MIN_REPS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SettingCounts {
    pub n00: u64,
    pub n01: u64,
    pub n10: u64,
    pub n11: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    A,
    B,
}

impl SettingCounts {
    pub fn new(n00: u64, n01: u64, n10: u64, n11: u64) -> Self {
        SettingCounts { n00, n01, n10, n11 }
    }

    /// Tabulates setting pairs; with `heralded_only` unheralded attempts are skipped.
    pub fn from_trials<'a>(trials: impl IntoIterator<Item = &'a Trial>, heralded_only: bool) -> Self {
        let mut c = SettingCounts::default();
        for t in trials {
            if heralded_only && !t.tag.is_heralded() {
                continue;
            }
            c.add(t.setting_a, t.setting_b);
        }
        c
    }

    pub fn add(&mut self, a: u8, b: u8) {
        match (a, b) {
            (0, 0) => self.n00 += 1,
            (0, 1) => self.n01 += 1,
            (1, 0) => self.n10 += 1,
            _ => self.n11 += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.n00 + self.n01 + self.n10 + self.n11
    }

    pub fn cells(&self) -> [u64; 4] {
        [self.n00, self.n01, self.n10, self.n11]
    }

    pub fn table(&self) -> [[u64; 2]; 2] {
        [[self.n00, self.n01], [self.n10, self.n11]]
    }

    /// Number of trials in which the given side chose setting 1.
    pub fn ones(&self, side: Side) -> u64 {
        match side {
            Side::A => self.n10 + self.n11,
            Side::B => self.n01 + self.n11,
        }
    }
}

#[derive(Deserialize)]
struct SettingRecord {
    setting_a: u8,
    setting_b: u8,
    #[serde(default)]
    tag: Option<i64>,
}

/// Tabulates a JSON-lines stream of `{"setting_a", "setting_b"[, "tag"]}`
/// objects; other fields are ignored, so trial files are accepted too.
/// With `heralded_only`, lines tagged 0 are skipped and untagged lines kept.
pub fn read_settings_jsonl<R: BufRead>(reader: R, heralded_only: bool) -> Result<SettingCounts> {
    let mut c = SettingCounts::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: i + 1, message };
        let rec: SettingRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if rec.setting_a > 1 || rec.setting_b > 1 {
            return Err(parse_err("settings must be 0 or 1".into()));
        }
        if heralded_only && rec.tag == Some(0) {
            continue;
        }
        c.add(rec.setting_a, rec.setting_b);
    }
    Ok(c)
}

impl std::str::FromStr for SettingCounts {
    type Err = Error;

    /// Parses `n00,n01,n10,n11`.
    fn from_str(s: &str) -> Result<Self> {
        let v = s
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<u64>()
                    .map_err(|e| Error::domain(format!("bad count {x:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        match v[..] {
            [a, b, c, d] => Ok(SettingCounts::new(a, b, c, d)),
            _ => Err(Error::domain(format!("expected four counts, got {}", v.len()))),
        }
    }
}

/// Two-sided binomial P-values at success probability 1/2 for every count 0..=n.
pub fn binomial_half_table(n: u64) -> Vec<f64> {
    let lp: Vec<f64> = (0..=n).map(|i| binomial_ln_pmf(n, i, 0.5)).collect();
    let peak = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut order: Vec<usize> = (0..lp.len()).collect();
    order.sort_by(|&i, &j| lp[i].total_cmp(&lp[j]));
    let total: f64 = {
        let mut s = KahanSum::default();
        lp.iter().for_each(|&x| s.add((x - peak).exp()));
        s.total()
    };
    let mut cum = Vec::with_capacity(order.len());
    let mut acc = KahanSum::default();
    for &i in &order {
        acc.add((lp[i] - peak).exp());
        cum.push(acc.total());
    }
    let slack = TIE_SLACK.ln_1p();
    let sorted: Vec<f64> = order.iter().map(|&i| lp[i]).collect();
    lp.iter()
        .map(|&l| {
            let idx = sorted.partition_point(|&x| x <= l + slack);
            (cum[idx - 1] / total).min(1.0)
        })
        .collect()
}

/// Test 1 or 2: exact two-tailed binomial test that one side's RNG is uniform.
pub fn binom_uniform(counts: &SettingCounts, side: Side) -> Result<f64> {
    let n = counts.total();
    if n == 0 {
        return Err(Error::domain("no settings recorded"));
    }
    Ok(crate::exact::binomial_two_sided(n, counts.ones(side), 0.5))
}

/// Test 4 for small samples.
pub fn fisher_2x2(counts: &SettingCounts) -> Result<f64> {
    if counts.total() == 0 {
        return Err(Error::domain("no settings recorded"));
    }
    Ok(fisher_exact_two_sided(counts.table()))
}

/// Pearson χ² statistic (no continuity correction) of the 2×2 table.
pub fn pearson_statistic(counts: &SettingCounts) -> Result<f64> {
    let [[a, b], [c, d]] = counts.table().map(|r| r.map(|x| x as f64));
    let (r1, r2, c1, c2) = (a + b, c + d, a + c, b + d);
    if r1 == 0.0 || r2 == 0.0 || c1 == 0.0 || c2 == 0.0 {
        return Err(Error::domain("Pearson test needs all margins positive"));
    }
    let n = r1 + r2;
    let det = a * d - b * c;
    Ok(n * det * det / (r1 * r2 * c1 * c2))
}

/// Test 4 for large samples: Pearson χ² with one degree of freedom.
pub fn pearson_chi2(counts: &SettingCounts) -> Result<f64> {
    pearson_statistic(counts).map(chi2_sf_1)
}

/// Test 4 with the sample-size switch applied.
pub fn independence_p(counts: &SettingCounts) -> Result<f64> {
    if counts.total() < FISHER_MAX_N {
        fisher_2x2(counts)
    } else {
        pearson_chi2(counts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub p: f64,
    pub mc_error: f64,
    pub hits: u64,
    pub reps: u64,
    /// No simulated draw was as extreme: `p` is below `1/reps`.
    pub below_resolution: bool,
}

impl McEstimate {
    fn from_hits(hits: u64, reps: u64) -> Self {
        let p = hits as f64 / reps as f64;
        McEstimate {
            p,
            mc_error: (p * (1.0 - p) / reps as f64).sqrt(),
            hits,
            reps,
            below_resolution: hits == 0,
        }
    }
}

/// Draws `n` uniform setting pairs into `cells`.
fn draw_uniform_cells(rng: &mut impl RngCore, n: u64, cells: &mut [u64; 4]) {
    *cells = [0; 4];
    let mut left = n;
    while left > 0 {
        let mut word = rng.next_u64();
        for _ in 0..left.min(32) {
            cells[(word & 3) as usize] += 1;
            word >>= 2;
        }
        left = left.saturating_sub(32);
    }
}

/// Test 3 by Monte Carlo: fraction of uniform multinomial draws of the same
/// size that are at least as extreme as the observed counts.
pub fn multinomial_uniform_mc(
    counts: &SettingCounts,
    ordering: Ordering,
    cfg: &McConfig,
) -> Result<McEstimate> {
    if cfg.reps < MIN_REPS {
        return Err(Error::domain(format!("need at least {MIN_REPS} repetitions")));
    }
    let n = counts.total();
    if n == 0 {
        return Err(Error::domain("no settings recorded"));
    }
    let lnf: Vec<f64> = (0..=n).map(ln_factorial).collect();
    let obs = counts.cells();
    let obs_key = -obs.iter().map(|&c| lnf[c as usize]).sum::<f64>();
    let obs_stat = uniform4_stat(obs);
    let slack = TIE_SLACK.ln_1p();
    let hits: u64 = run_chunks(cfg, "multinomial-uniform", |rng, range| {
        let mut cells = [0u64; 4];
        let mut hits = 0u64;
        for _ in range {
            draw_uniform_cells(rng, n, &mut cells);
            let extreme = match ordering {
                Ordering::Probability => {
                    -cells.iter().map(|&c| lnf[c as usize]).sum::<f64>() <= obs_key + slack
                }
                Ordering::ChiSquare => uniform4_stat(cells) >= obs_stat,
            };
            hits += u64::from(extreme);
        }
        hits
    })
    .into_iter()
    .sum();
    Ok(McEstimate::from_hits(hits, cfg.reps as u64))
}

/// Exact test 3 (tabulated for `n <= 600`, asymptotic χ² beyond).
pub fn multinomial_uniform_exact(counts: &SettingCounts, ordering: Ordering) -> f64 {
    let table = Uniform4Table::new(counts.total());
    uniform4_p_value(table.as_ref(), counts.cells(), ordering)
}

/// Per-repetition local P-values of the four tests under uniform settings.
#[derive(Debug, Clone)]
pub struct LeeTapes {
    pub n: u64,
    /// `[rng A, rng B, joint uniform, independence]` per repetition.
    pub pvalues: Vec<[f64; 4]>,
    /// Per-repetition minimum, sorted ascending.
    sorted_min: Vec<f64>,
}

impl LeeTapes {
    pub fn simulate(n: u64, ordering: Ordering, cfg: &McConfig) -> Result<Self> {
        if cfg.reps < MIN_REPS {
            return Err(Error::domain(format!("need at least {MIN_REPS} repetitions")));
        }
        if n == 0 {
            return Err(Error::domain("n must be positive"));
        }
        let binom = binomial_half_table(n);
        let multinomial = Uniform4Table::new(n);
        let chunks = run_chunks(cfg, "lee", |rng, range| {
            let mut cells = [0u64; 4];
            range
                .map(|_| {
                    draw_uniform_cells(rng, n, &mut cells);
                    let c = SettingCounts::new(cells[0], cells[1], cells[2], cells[3]);
                    [
                        binom[c.ones(Side::A) as usize],
                        binom[c.ones(Side::B) as usize],
                        uniform4_p_value(multinomial.as_ref(), cells, ordering),
                        independence_p(&c).unwrap_or(1.0),
                    ]
                })
                .collect::<Vec<_>>()
        });
        let pvalues: Vec<[f64; 4]> = chunks.into_iter().flatten().collect();
        let mut sorted_min: Vec<f64> = pvalues
            .iter()
            .map(|p| p.iter().cloned().fold(f64::INFINITY, f64::min))
            .collect();
        sorted_min.sort_by(f64::total_cmp);
        Ok(LeeTapes {
            n,
            pvalues,
            sorted_min,
        })
    }

    pub fn reps(&self) -> usize {
        self.pvalues.len()
    }

    /// Repetitions in which at least one local P-value is below `alpha`.
    pub fn joint_count(&self, alpha: f64) -> usize {
        self.sorted_min.partition_point(|&p| p < alpha)
    }

    pub fn joint(&self, alpha: f64) -> McEstimate {
        McEstimate::from_hits(self.joint_count(alpha) as u64, self.reps() as u64)
    }

    /// Rejection rate of each single test at `alpha`.
    pub fn single_rates(&self, alpha: f64) -> [f64; 4] {
        let mut hits = [0usize; 4];
        for row in &self.pvalues {
            for (h, &p) in hits.iter_mut().zip(row) {
                *h += usize::from(p < alpha);
            }
        }
        hits.map(|h| h as f64 / self.reps() as f64)
    }

    /// Largest per-test threshold whose joint rate stays at or below `target`,
    /// by bisection over the breakpoints of the joint-rate step function.
    pub fn threshold(&self, target: f64) -> f64 {
        let reps = self.reps() as f64;
        if reps <= target * reps {
            return 1.0;
        }
        let ok = |t: f64| self.joint_count(t) as f64 / reps <= target;
        // the joint rate jumps just above each tape value, so the answer is
        // the last tape value that still satisfies the target
        let idx = self.sorted_min.partition_point(|&t| ok(t));
        self.sorted_min[idx.max(1) - 1]
    }
}

/// Probability that at least one of the four tests gives a local P-value below `alpha`.
pub fn lee_joint(n: u64, alpha: f64, ordering: Ordering, cfg: &McConfig) -> Result<McEstimate> {
    Ok(LeeTapes::simulate(n, ordering, cfg)?.joint(alpha))
}

pub fn lee_threshold(n: u64, target: f64, ordering: Ordering, cfg: &McConfig) -> Result<f64> {
    Ok(LeeTapes::simulate(n, ordering, cfg)?.threshold(target))
}

/// `1 - (1 - alpha)^m`, the joint rate of `m` independent tests.
pub fn independent_joint(alpha: f64, m: u32) -> f64 {
    1.0 - (1.0 - alpha).powi(m as i32)
}

/// One audit table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub dataset: String,
    pub n: u64,
    pub p_rng_a: f64,
    pub p_rng_b: f64,
    pub p_joint_uniform: f64,
    pub p_joint_uniform_mc_error: f64,
    pub p_fisher_or_pearson: f64,
    pub p_threshold: f64,
    pub p_joint: f64,
}

impl AuditRow {
    pub const CSV_HEADER: &'static str =
        "dataset,n,p_rng_a,p_rng_b,p_joint_uniform,p_joint_uniform_mc_error,p_fisher_or_pearson,p_threshold,p_joint";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.dataset,
            self.n,
            self.p_rng_a,
            self.p_rng_b,
            self.p_joint_uniform,
            self.p_joint_uniform_mc_error,
            self.p_fisher_or_pearson,
            self.p_threshold,
            self.p_joint
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub ordering: Ordering,
    pub multinomial: McConfig,
    pub lee: McConfig,
    pub alpha: f64,
    pub target: f64,
}

impl AuditConfig {
    pub fn new(seed: u64) -> Self {
        AuditConfig {
            ordering: Ordering::Probability,
            multinomial: McConfig::new(100_000, seed),
            lee: McConfig::new(10_000, seed ^ 0x5EED),
            alpha: 0.05,
            target: 0.05,
        }
    }
}

pub fn audit_row(label: &str, counts: &SettingCounts, cfg: &AuditConfig) -> Result<AuditRow> {
    let joint = multinomial_uniform_mc(counts, cfg.ordering, &cfg.multinomial)?;
    let tapes = LeeTapes::simulate(counts.total(), cfg.ordering, &cfg.lee)?;
    Ok(AuditRow {
        dataset: label.to_string(),
        n: counts.total(),
        p_rng_a: binom_uniform(counts, Side::A)?,
        p_rng_b: binom_uniform(counts, Side::B)?,
        p_joint_uniform: joint.p,
        p_joint_uniform_mc_error: joint.mc_error,
        p_fisher_or_pearson: independence_p(counts)?,
        p_threshold: tapes.threshold(cfg.target),
        p_joint: tapes.joint(cfg.alpha).p,
    })
}
