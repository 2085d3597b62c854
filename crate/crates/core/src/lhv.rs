//! Local-hidden-variable adversaries for event-ready CHSH tests.
//!
//! Each attempt proceeds in a fixed order:
//! 1. the strategy names the setting pair its biased generators lean towards,
//! 2. the strategy emits the herald tag,
//! 3. the strategy commits to a [`LocalRule`]: A's output per A-setting and
//!    B's output per B-setting,
//! 4. each generator independently draws a bias `b` and an early flag, then a
//!    setting equal to the leaned value with probability `1/2 + b`,
//! 5. outcomes are read from the rule; if either setting was early the
//!    attempt is scored as a win instead,
//! 6. the strategy observes the finished trial.
//!
//! Settings are drawn after the herald and the rule, so they are independent
//! of both given the strategy's state. A's output is a function of A's
//! setting only, so locality holds by construction.

use crate::error::{Error, Result};
use crate::exec::{derive_seed, map_ordered, mix64, stream_rng, Exec};
use crate::pvalue::{beta_win_lemma, pvalue_complete, BiasParams};
use crate::trial::{win_indicator, HeraldTag, Outcome, Trial, TrialMeta, TrialSet};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type SimRng = ChaCha8Rng;

/// Output table committed before settings are known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalRule {
    pub a: [u8; 2],
    pub b: [u8; 2],
}

impl LocalRule {
    pub fn outcome_a(&self, setting_a: u8) -> Outcome {
        Outcome::from_bit(self.a[setting_a as usize])
    }

    pub fn outcome_b(&self, setting_b: u8) -> Outcome {
        Outcome::from_bit(self.b[setting_b as usize])
    }

    /// Both outputs for a setting pair; each side reads only its own setting.
    pub fn respond(&self, setting_a: u8, setting_b: u8) -> (Outcome, Outcome) {
        (self.outcome_a(setting_a), self.outcome_b(setting_b))
    }
}

/// One of the sixteen deterministic local strategies: output bit `chi[x]` for
/// A-setting `x` and `gamma[y]` for B-setting `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeterministicStrategy {
    pub chi: [u8; 2],
    pub gamma: [u8; 2],
}

impl DeterministicStrategy {
    pub fn all() -> Vec<DeterministicStrategy> {
        (0u8..16)
            .map(|m| DeterministicStrategy {
                chi: [(m >> 3) & 1, (m >> 2) & 1],
                gamma: [(m >> 1) & 1, m & 1],
            })
            .collect()
    }

    pub fn rule(&self) -> LocalRule {
        LocalRule {
            a: self.chi,
            b: self.gamma,
        }
    }

    /// Exact ψ⁻ winning probability when settings are 0 with probability
    /// `1/2 + tau_a` at A and `1/2 + tau_b` at B. The game is won when the
    /// product of the settings equals the XOR of the outputs.
    pub fn win_probability(&self, tau_a: f64, tau_b: f64) -> f64 {
        let pa = [0.5 + tau_a, 0.5 - tau_a];
        let pb = [0.5 + tau_b, 0.5 - tau_b];
        let mut w = 0.0;
        for x in 0..2 {
            for y in 0..2 {
                if (x & y) as u8 == self.chi[x] ^ self.gamma[y] {
                    w += pa[x] * pb[y];
                }
            }
        }
        w
    }

    pub fn code(&self) -> String {
        format!("{}{}{}{}", self.chi[0], self.chi[1], self.gamma[0], self.gamma[1])
    }
}

/// Brute force over the sixteen deterministic strategies.
pub fn best_deterministic_winprob(tau_a: f64, tau_b: f64) -> Result<(f64, DeterministicStrategy)> {
    for t in [tau_a, tau_b] {
        if !(0.0..=0.5).contains(&t) {
            return Err(Error::domain(format!("bias {t} not in [0, 1/2]")));
        }
    }
    let mut best: Option<(f64, DeterministicStrategy)> = None;
    for s in DeterministicStrategy::all() {
        let w = s.win_probability(tau_a, tau_b);
        if best.is_none_or(|(bw, _)| w > bw) {
            best = Some((w, s));
        }
    }
    Ok(best.expect("sixteen strategies"))
}

/// Per-trial bias distribution of one generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "mean", rename_all = "kebab-case")]
pub enum BiasDist {
    /// `b = τ` every trial.
    Point(f64),
    /// `b = 1/2` with probability `2τ`, else 0.
    TwoPoint(f64),
    /// `b` uniform on `[0, 2τ]`; requires `τ <= 1/4`.
    Uniform(f64),
}

impl BiasDist {
    pub fn mean(&self) -> f64 {
        match *self {
            BiasDist::Point(t) | BiasDist::TwoPoint(t) | BiasDist::Uniform(t) => t,
        }
    }

    fn validate(&self) -> Result<()> {
        let t = self.mean();
        let max = if matches!(self, BiasDist::Uniform(_)) { 0.25 } else { 0.5 };
        if !(0.0..=max).contains(&t) {
            return Err(Error::domain(format!("{self:?}: mean bias must lie in [0, {max}]")));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut SimRng) -> f64 {
        match *self {
            BiasDist::Point(t) => t,
            BiasDist::TwoPoint(t) => {
                if rng.random::<f64>() < 2.0 * t {
                    0.5
                } else {
                    0.0
                }
            }
            BiasDist::Uniform(t) => 2.0 * t * rng.random::<f64>(),
        }
    }
}

/// Setting generators at A and B: bias distribution and early probability `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RngModel {
    pub bias: BiasDist,
    pub f: f64,
}

impl RngModel {
    pub fn new(bias: BiasDist, f: f64) -> Result<Self> {
        bias.validate()?;
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::domain(format!("early probability {f} not in [0, 1]")));
        }
        Ok(RngModel { bias, f })
    }

    pub fn ideal() -> Self {
        RngModel {
            bias: BiasDist::Point(0.0),
            f: 0.0,
        }
    }

    pub fn bias_params(&self) -> BiasParams {
        BiasParams {
            f: self.f,
            tau: self.bias.mean(),
        }
    }

    /// Draws (setting, early) for one side.
    fn draw(&self, lean: u8, rng: &mut SimRng) -> (u8, bool) {
        let b = self.bias.sample(rng);
        let early = rng.random::<f64>() < self.f;
        let setting = if rng.random::<f64>() < 0.5 + b { lean } else { lean ^ 1 };
        (setting, early)
    }
}

/// What a strategy may read: a digest of every prior attempt plus running counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct History {
    pub digest: u64,
    pub attempts: u64,
    pub heralded: u64,
    pub wins: u64,
    pub last: Option<Trial>,
}

impl History {
    fn record(&mut self, t: &Trial) {
        const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;
        let fields = [
            t.index,
            t.tag.value() as u64,
            u64::from(t.setting_a),
            u64::from(t.setting_b),
            u64::from(t.outcome_a.bit()),
            u64::from(t.outcome_b.bit()),
        ];
        let mut h = if self.attempts == 0 { 0xCBF2_9CE4_8422_2325 } else { self.digest };
        for f in fields {
            h = (h ^ f).wrapping_mul(FNV_PRIME);
        }
        self.digest = h;
        self.attempts += 1;
        self.heralded += u64::from(t.tag.is_heralded());
        self.wins += u64::from(t.win());
        self.last = Some(*t);
    }
}

/// An adversary. All hidden state lives in the implementing type.
pub trait Strategy: Send {
    fn name(&self) -> String;

    /// Setting pair the biased generators lean towards this attempt.
    fn lean(&mut self, _history: &History, _rng: &mut SimRng) -> (u8, u8) {
        (0, 0)
    }

    fn herald(&mut self, history: &History, rng: &mut SimRng) -> HeraldTag;

    fn rule(&mut self, history: &History, tag: HeraldTag, rng: &mut SimRng) -> LocalRule;

    fn observe(&mut self, _trial: &Trial) {}
}

/// Lean and rule that beat the bias best for `tag`: constant equal outputs,
/// leaning away from the setting pair that flips the win rule.
fn exploit_for(tag: HeraldTag) -> ((u8, u8), LocalRule) {
    let rule = LocalRule { a: [0, 0], b: [0, 0] };
    match tag {
        HeraldTag::PsiPlus => ((0, 1), rule),
        _ => ((0, 0), rule),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeraldMode {
    PsiMinus,
    PsiPlus,
    Alternate,
}

impl HeraldMode {
    fn tag(self, attempt: u64) -> HeraldTag {
        match self {
            HeraldMode::PsiMinus => HeraldTag::PsiMinus,
            HeraldMode::PsiPlus => HeraldTag::PsiPlus,
            HeraldMode::Alternate if attempt.is_multiple_of(2) => HeraldTag::PsiMinus,
            HeraldMode::Alternate => HeraldTag::PsiPlus,
        }
    }
}

/// Fixed deterministic rule, always heralding ψ⁻.
#[derive(Debug, Clone)]
pub struct Fixed(pub DeterministicStrategy);

impl Strategy for Fixed {
    fn name(&self) -> String {
        format!("deterministic:{}", self.0.code())
    }
    fn herald(&mut self, _: &History, _: &mut SimRng) -> HeraldTag {
        HeraldTag::PsiMinus
    }
    fn rule(&mut self, _: &History, _: HeraldTag, _: &mut SimRng) -> LocalRule {
        self.0.rule()
    }
}

/// Optimal bias exploitation for the heralded game.
#[derive(Debug, Clone)]
pub struct BiasExploit {
    pub mode: HeraldMode,
    next: HeraldTag,
}

impl BiasExploit {
    pub fn new(mode: HeraldMode) -> Self {
        BiasExploit {
            mode,
            next: HeraldTag::PsiMinus,
        }
    }
}

impl Strategy for BiasExploit {
    fn name(&self) -> String {
        match self.mode {
            HeraldMode::PsiMinus => "bias-exploit".into(),
            HeraldMode::PsiPlus => "bias-exploit-psi-plus".into(),
            HeraldMode::Alternate => "bias-exploit-alternate".into(),
        }
    }
    fn lean(&mut self, h: &History, _: &mut SimRng) -> (u8, u8) {
        self.next = self.mode.tag(h.attempts);
        exploit_for(self.next).0
    }
    fn herald(&mut self, _: &History, _: &mut SimRng) -> HeraldTag {
        self.next
    }
    fn rule(&mut self, _: &History, tag: HeraldTag, _: &mut SimRng) -> LocalRule {
        exploit_for(tag).1
    }
}

/// A fresh uniformly random deterministic rule each attempt.
#[derive(Debug, Clone, Default)]
pub struct RandomDeterministic;

impl Strategy for RandomDeterministic {
    fn name(&self) -> String {
        "random-deterministic".into()
    }
    fn herald(&mut self, _: &History, _: &mut SimRng) -> HeraldTag {
        HeraldTag::PsiMinus
    }
    fn rule(&mut self, _: &History, _: HeraldTag, rng: &mut SimRng) -> LocalRule {
        let m: u8 = rng.random_range(0..16);
        DeterministicStrategy::all()[m as usize].rule()
    }
}

/// Keeps its rule after a win; after a loss switches herald state and moves
/// to another optimal rule for the new state.
#[derive(Debug, Clone)]
pub struct WinStayLoseShift {
    state: HeraldTag,
    variant: usize,
}

impl Default for WinStayLoseShift {
    fn default() -> Self {
        WinStayLoseShift {
            state: HeraldTag::PsiMinus,
            variant: 0,
        }
    }
}

/// Deterministic rules winning three of four setting pairs for `tag`.
fn optimal_rules(tag: HeraldTag) -> Vec<LocalRule> {
    DeterministicStrategy::all()
        .into_iter()
        .map(|s| s.rule())
        .filter(|r| {
            let wins: u8 = (0..2)
                .flat_map(|a| (0..2).map(move |b| (a, b)))
                .map(|(a, b)| win_indicator(tag, a, b, r.outcome_a(a), r.outcome_b(b)))
                .sum();
            wins == 3
        })
        .collect()
}

impl Strategy for WinStayLoseShift {
    fn name(&self) -> String {
        "win-stay-lose-shift".into()
    }
    fn herald(&mut self, _: &History, _: &mut SimRng) -> HeraldTag {
        self.state
    }
    fn rule(&mut self, _: &History, tag: HeraldTag, _: &mut SimRng) -> LocalRule {
        let rules = optimal_rules(tag);
        rules[self.variant % rules.len()]
    }
    fn observe(&mut self, t: &Trial) {
        if t.tag.is_heralded() && t.win() == 0 {
            self.state = if self.state == HeraldTag::PsiMinus {
                HeraldTag::PsiPlus
            } else {
                HeraldTag::PsiMinus
            };
            self.variant += 1;
        }
    }
}

/// Doubles its heralding stake after every loss and resets it after a win,
/// withholding heralds (tag 0) while the stake is low.
#[derive(Debug, Clone)]
pub struct Doubling {
    stake: u32,
}

impl Default for Doubling {
    fn default() -> Self {
        Doubling { stake: 1 }
    }
}

impl Strategy for Doubling {
    fn name(&self) -> String {
        "doubling".into()
    }
    fn herald(&mut self, _: &History, rng: &mut SimRng) -> HeraldTag {
        if rng.random_range(0..8) < self.stake {
            HeraldTag::PsiMinus
        } else {
            HeraldTag::None
        }
    }
    fn rule(&mut self, _: &History, tag: HeraldTag, _: &mut SimRng) -> LocalRule {
        exploit_for(tag).1
    }
    fn observe(&mut self, t: &Trial) {
        if !t.tag.is_heralded() {
            return;
        }
        self.stake = if t.win() == 1 { 1 } else { (self.stake * 2).min(8) };
    }
}

/// Rule, lean and herald all keyed off the history digest.
#[derive(Debug, Clone, Default)]
pub struct HistoryHash;

impl Strategy for HistoryHash {
    fn name(&self) -> String {
        "history-hash".into()
    }
    fn lean(&mut self, h: &History, _: &mut SimRng) -> (u8, u8) {
        let d = mix64(h.digest);
        (((d >> 8) & 1) as u8, ((d >> 9) & 1) as u8)
    }
    fn herald(&mut self, h: &History, _: &mut SimRng) -> HeraldTag {
        match mix64(h.digest) % 3 {
            0 => HeraldTag::PsiMinus,
            1 => HeraldTag::PsiPlus,
            _ => HeraldTag::None,
        }
    }
    fn rule(&mut self, h: &History, _: HeraldTag, _: &mut SimRng) -> LocalRule {
        let m = (mix64(h.digest ^ 0xA5A5) % 16) as usize;
        DeterministicStrategy::all()[m].rule()
    }
}

/// Names accepted by [`strategy_by_name`], besides `deterministic:<χ₀χ₁γ₀γ₁>`.
pub const CATALOG: &[&str] = &[
    "bias-exploit",
    "bias-exploit-psi-plus",
    "bias-exploit-alternate",
    "random-deterministic",
    "win-stay-lose-shift",
    "doubling",
    "history-hash",
];

pub fn strategy_by_name(name: &str) -> Result<Box<dyn Strategy>> {
    if let Some(code) = name.strip_prefix("deterministic:") {
        let bits: Vec<u8> = code
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::domain(format!("bad deterministic code {code:?}"))),
            })
            .collect::<Result<_>>()?;
        if bits.len() != 4 {
            return Err(Error::domain(format!("deterministic code {code:?} needs 4 bits")));
        }
        return Ok(Box::new(Fixed(DeterministicStrategy {
            chi: [bits[0], bits[1]],
            gamma: [bits[2], bits[3]],
        })));
    }
    Ok(match name {
        "bias-exploit" => Box::new(BiasExploit::new(HeraldMode::PsiMinus)),
        "bias-exploit-psi-plus" => Box::new(BiasExploit::new(HeraldMode::PsiPlus)),
        "bias-exploit-alternate" => Box::new(BiasExploit::new(HeraldMode::Alternate)),
        "random-deterministic" => Box::new(RandomDeterministic),
        "win-stay-lose-shift" => Box::new(WinStayLoseShift::default()),
        "doubling" => Box::new(Doubling::default()),
        "history-hash" => Box::new(HistoryHash),
        _ => return Err(Error::domain(format!("unknown strategy {name:?}"))),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub attempts: u64,
    /// Stop early once this many attempts have been heralded.
    pub stop_after_heralds: Option<u64>,
    pub seed: u64,
}

/// Per-attempt diagnostics of a simulation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttemptTrace {
    pub early_a: bool,
    pub early_b: bool,
    pub rule: LocalRule,
}

#[derive(Debug, Clone)]
pub struct SimRun {
    pub trials: TrialSet,
    pub trace: Vec<AttemptTrace>,
}

/// Runs one strictly sequential experiment.
pub fn simulate(strategy: &mut dyn Strategy, model: &RngModel, cfg: &SimConfig) -> Result<SimRun> {
    if cfg.attempts == 0 {
        return Err(Error::domain("attempts must be at least 1"));
    }
    let mut rng = stream_rng(derive_seed(cfg.seed, "lhv-simulate"), 0);
    run_with(strategy, model, cfg, &mut rng)
}

fn run_with(
    strategy: &mut dyn Strategy,
    model: &RngModel,
    cfg: &SimConfig,
    rng: &mut SimRng,
) -> Result<SimRun> {
    let mut history = History::default();
    let mut trials = Vec::new();
    let mut trace = Vec::new();
    for index in 1..=cfg.attempts {
        let (lean_a, lean_b) = strategy.lean(&history, rng);
        let tag = strategy.herald(&history, rng);
        let rule = strategy.rule(&history, tag, rng);
        let (a, early_a) = model.draw(lean_a & 1, rng);
        let (b, early_b) = model.draw(lean_b & 1, rng);
        let (x, mut y) = rule.respond(a, b);
        if (early_a || early_b) && win_indicator(tag, a, b, x, y) == 0 && tag.is_heralded() {
            // signalling lets B match A's outcome to the winning relation
            y = y.flip();
        }
        let trial = Trial::new(index, tag, a, b, x, y)?;
        history.record(&trial);
        strategy.observe(&trial);
        trials.push(trial);
        trace.push(AttemptTrace {
            early_a,
            early_b,
            rule,
        });
        if cfg.stop_after_heralds.is_some_and(|n| history.heralded >= n) {
            break;
        }
    }
    let meta = TrialMeta {
        label: strategy.name(),
        seed: Some(cfg.seed),
        provenance: format!("lhv-sim {} f={} bias={:?}", strategy.name(), model.f, model.bias),
    };
    Ok(SimRun {
        trials: TrialSet::new(trials, meta)?,
        trace,
    })
}

/// Synthetic stand-in for quantum data: i.i.d. trials with uniform settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModel {
    pub win_psi_minus: Option<f64>,
    pub win_psi_plus: Option<f64>,
    pub herald_rate: f64,
    /// Share of heralds that are ψ⁺ when both states are enabled.
    pub psi_plus_fraction: f64,
}

impl ReferenceModel {
    pub fn psi_minus_only(win: f64, herald_rate: f64) -> Self {
        ReferenceModel {
            win_psi_minus: Some(win),
            win_psi_plus: None,
            herald_rate,
            psi_plus_fraction: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        for w in [self.win_psi_minus, self.win_psi_plus].into_iter().flatten() {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::domain(format!("win probability {w} not in [0, 1]")));
            }
        }
        if self.win_psi_minus.is_none() && self.win_psi_plus.is_none() {
            return Err(Error::domain("no herald state enabled"));
        }
        if !(self.herald_rate > 0.0 && self.herald_rate <= 1.0) {
            return Err(Error::domain(format!("herald rate {} not in (0, 1]", self.herald_rate)));
        }
        if !(0.0..=1.0).contains(&self.psi_plus_fraction) {
            return Err(Error::domain("psi+ fraction not in [0, 1]"));
        }
        Ok(())
    }
}

/// Outcome for B that makes the attempt a win (`win = true`) or a loss.
pub fn partner_outcome(tag: HeraldTag, a: u8, b: u8, x: Outcome, win: bool) -> Outcome {
    let wins_with_plus = win_indicator(tag, a, b, x, Outcome::Plus) == 1;
    if wins_with_plus == win {
        Outcome::Plus
    } else {
        Outcome::Minus
    }
}

pub fn simulate_reference(model: &ReferenceModel, attempts: u64, seed: u64) -> Result<TrialSet> {
    model.validate()?;
    let mut rng = stream_rng(derive_seed(seed, "reference"), 0);
    let mut trials = Vec::with_capacity(attempts as usize);
    for index in 1..=attempts {
        let tag = if rng.random::<f64>() < model.herald_rate {
            match (model.win_psi_minus, model.win_psi_plus) {
                (Some(_), Some(_)) if rng.random::<f64>() < model.psi_plus_fraction => {
                    HeraldTag::PsiPlus
                }
                (Some(_), _) => HeraldTag::PsiMinus,
                _ => HeraldTag::PsiPlus,
            }
        } else {
            HeraldTag::None
        };
        let a: u8 = rng.random_range(0..2);
        let b: u8 = rng.random_range(0..2);
        let x = Outcome::from_bit(rng.random_range(0..2));
        let w = match tag {
            HeraldTag::PsiMinus => model.win_psi_minus.unwrap_or(0.5),
            HeraldTag::PsiPlus => model.win_psi_plus.unwrap_or(0.5),
            HeraldTag::None => 0.5,
        };
        let win = rng.random::<f64>() < w;
        let y = partner_outcome(tag, a, b, x, win);
        trials.push(Trial::new(index, tag, a, b, x, y)?);
    }
    TrialSet::new(
        trials,
        TrialMeta {
            label: "reference".into(),
            seed: Some(seed),
            provenance: format!("reference model {model:?}"),
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyStat {
    pub name: String,
    pub runs: u64,
    pub rejections: u64,
    pub wins: u64,
    pub heralded: u64,
}

impl StrategyStat {
    pub fn win_rate(&self) -> f64 {
        self.wins as f64 / self.heralded.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryReport {
    pub n: u64,
    pub runs: u64,
    pub alpha: f64,
    pub beta: f64,
    /// Fraction of runs with complete-analysis P-value at or below `alpha`.
    pub rate: f64,
    pub mc_error: f64,
    pub per_strategy: Vec<StrategyStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    pub n: u64,
    pub runs: u64,
    pub alpha: f64,
    pub model: RngModel,
    pub strategies: Vec<String>,
    pub seed: u64,
    /// Attempts allowed per run, as a multiple of `n`.
    pub attempt_factor: u64,
    pub exec: Exec,
}

impl AdversaryConfig {
    pub fn new(n: u64, runs: u64, alpha: f64, seed: u64) -> Self {
        AdversaryConfig {
            n,
            runs,
            alpha,
            model: RngModel::ideal(),
            strategies: CATALOG.iter().map(|s| s.to_string()).collect(),
            seed,
            attempt_factor: 1000,
            exec: Exec::default(),
        }
    }
}

/// Runs the strategies round-robin, each run stopping after `n` heralded
/// trials, and counts how often the complete analysis rejects at `alpha`.
pub fn adversary_suite(cfg: &AdversaryConfig) -> Result<AdversaryReport> {
    if cfg.runs == 0 || cfg.n == 0 {
        return Err(Error::domain("runs and n must be at least 1"));
    }
    if cfg.strategies.is_empty() {
        return Err(Error::domain("empty strategy catalog"));
    }
    for name in &cfg.strategies {
        strategy_by_name(name)?;
    }
    let beta = beta_win_lemma(cfg.model.bias_params());
    let seed = derive_seed(cfg.seed, "adversary");
    let sim = SimConfig {
        attempts: cfg.n.saturating_mul(cfg.attempt_factor.max(1)),
        stop_after_heralds: Some(cfg.n),
        seed: cfg.seed,
    };
    let runs: Vec<u64> = (0..cfg.runs).collect();
    let outcomes = map_ordered(cfg.exec, runs, |run| -> Result<(usize, bool, u64, u64)> {
        let which = (run % cfg.strategies.len() as u64) as usize;
        let mut strategy = strategy_by_name(&cfg.strategies[which])?;
        let mut rng = stream_rng(seed, run);
        let out = run_with(strategy.as_mut(), &cfg.model, &sim, &mut rng)?;
        let tally = crate::trial::aggregate(&out.trials);
        let p = if tally.n == 0 || beta >= 1.0 {
            1.0
        } else {
            pvalue_complete(tally.n, tally.k, beta)?
        };
        Ok((which, p <= cfg.alpha, tally.k, tally.n))
    });
    let mut per_strategy: Vec<StrategyStat> = cfg
        .strategies
        .iter()
        .map(|name| StrategyStat {
            name: name.clone(),
            runs: 0,
            rejections: 0,
            wins: 0,
            heralded: 0,
        })
        .collect();
    for o in outcomes {
        let (which, rejected, k, n) = o?;
        let s = &mut per_strategy[which];
        s.runs += 1;
        s.rejections += u64::from(rejected);
        s.wins += k;
        s.heralded += n;
    }
    let rejections: u64 = per_strategy.iter().map(|s| s.rejections).sum();
    let rate = rejections as f64 / cfg.runs as f64;
    Ok(AdversaryReport {
        n: cfg.n,
        runs: cfg.runs,
        alpha: cfg.alpha,
        beta,
        rate,
        mc_error: (rate * (1.0 - rate) / cfg.runs as f64).sqrt(),
        per_strategy,
    })
}
