//! Event-ready CHSH trials and their scoring.
//!
//! Settings are bits `a, b ∈ {0,1}`; outcomes are signs `x, y ∈ {+1,-1}`. A
//! trial heralded as ψ⁻ is won when `(-1)^(a·b)·x·y = 1`, one heralded as ψ⁺
//! when `(-1)^(a·(b⊕1))·x·y = 1`. Unheralded attempts (tag 0) keep whatever was
//! recorded for them but never enter a statistic.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum HeraldTag {
    PsiMinus,
    None,
    PsiPlus,
}

impl HeraldTag {
    pub const HERALDED: [HeraldTag; 2] = [HeraldTag::PsiMinus, HeraldTag::PsiPlus];

    pub fn value(self) -> i8 {
        match self {
            HeraldTag::PsiMinus => -1,
            HeraldTag::None => 0,
            HeraldTag::PsiPlus => 1,
        }
    }

    pub fn from_value(v: i64) -> Result<Self> {
        match v {
            -1 => Ok(HeraldTag::PsiMinus),
            0 => Ok(HeraldTag::None),
            1 => Ok(HeraldTag::PsiPlus),
            _ => Err(Error::domain(format!("herald tag {v} not in {{-1,0,1}}"))),
        }
    }

    pub fn is_heralded(self) -> bool {
        self != HeraldTag::None
    }

    pub fn label(self) -> &'static str {
        match self {
            HeraldTag::PsiMinus => "psi-",
            HeraldTag::None => "none",
            HeraldTag::PsiPlus => "psi+",
        }
    }

    /// Sign of the `E(a,b)` term in this state's S: ψ⁻ flips (1,1), ψ⁺ flips (1,0).
    pub fn s_sign(self, a: u8, b: u8) -> f64 {
        match (self, a, b) {
            (HeraldTag::PsiMinus, 1, 1) | (HeraldTag::PsiPlus, 1, 0) => -1.0,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub fn value(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn from_value(v: i64) -> Result<Self> {
        match v {
            1 => Ok(Outcome::Plus),
            -1 => Ok(Outcome::Minus),
            _ => Err(Error::domain(format!("outcome {v} not in {{+1,-1}}"))),
        }
    }

    /// Maps an output bit to a sign, `o = (-1)^bit`.
    pub fn from_bit(bit: u8) -> Self {
        if bit & 1 == 0 {
            Outcome::Plus
        } else {
            Outcome::Minus
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Outcome::Plus => 0,
            Outcome::Minus => 1,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
        }
    }
}

/// Adapted CHSH score of one attempt: `|t|·((-1)^(a(b + (t+1)/2))·x·y + 1)/2`.
pub fn win_indicator(tag: HeraldTag, a: u8, b: u8, x: Outcome, y: Outcome) -> u8 {
    debug_assert!(a <= 1 && b <= 1);
    let t = i32::from(tag.value());
    if t == 0 {
        return 0;
    }
    let exponent = i32::from(a) * (i32::from(b) + (t + 1) / 2);
    let sign = if exponent % 2 == 0 { 1 } else { -1 };
    let product = sign * i32::from(x.value()) * i32::from(y.value());
    ((product + 1) / 2) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TrialRecord", into = "TrialRecord")]
pub struct Trial {
    pub index: u64,
    pub tag: HeraldTag,
    pub setting_a: u8,
    pub setting_b: u8,
    pub outcome_a: Outcome,
    pub outcome_b: Outcome,
}

impl Trial {
    pub fn new(
        index: u64,
        tag: HeraldTag,
        setting_a: u8,
        setting_b: u8,
        outcome_a: Outcome,
        outcome_b: Outcome,
    ) -> Result<Self> {
        if index == 0 {
            return Err(Error::domain("trial index must be positive"));
        }
        if setting_a > 1 || setting_b > 1 {
            return Err(Error::domain(format!(
                "settings ({setting_a},{setting_b}) not bits"
            )));
        }
        Ok(Trial {
            index,
            tag,
            setting_a,
            setting_b,
            outcome_a,
            outcome_b,
        })
    }

    pub fn win(&self) -> u8 {
        win_indicator(
            self.tag,
            self.setting_a,
            self.setting_b,
            self.outcome_a,
            self.outcome_b,
        )
    }

    /// `x·y` as ±1.
    pub fn product(&self) -> i8 {
        self.outcome_a.value() * self.outcome_b.value()
    }
}

impl TryFrom<i64> for HeraldTag {
    type Error = Error;

    fn try_from(v: i64) -> Result<Self> {
        HeraldTag::from_value(v)
    }
}

impl From<HeraldTag> for i64 {
    fn from(t: HeraldTag) -> i64 {
        t.value().into()
    }
}

/// On-disk form of a trial: plain integers, validated on conversion.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct TrialRecord {
    index: u64,
    tag: i64,
    setting_a: i64,
    setting_b: i64,
    outcome_a: i64,
    outcome_b: i64,
}

impl TryFrom<TrialRecord> for Trial {
    type Error = Error;

    fn try_from(r: TrialRecord) -> Result<Self> {
        let bit = |v: i64, name: &str| -> Result<u8> {
            match v {
                0 | 1 => Ok(v as u8),
                _ => Err(Error::domain(format!("{name} {v} not in {{0,1}}"))),
            }
        };
        Trial::new(
            r.index,
            HeraldTag::from_value(r.tag)?,
            bit(r.setting_a, "setting_a")?,
            bit(r.setting_b, "setting_b")?,
            Outcome::from_value(r.outcome_a)?,
            Outcome::from_value(r.outcome_b)?,
        )
    }
}

impl From<Trial> for TrialRecord {
    fn from(t: Trial) -> Self {
        TrialRecord {
            index: t.index,
            tag: t.tag.value().into(),
            setting_a: t.setting_a.into(),
            setting_b: t.setting_b.into(),
            outcome_a: t.outcome_a.value().into(),
            outcome_b: t.outcome_b.value().into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub label: String,
    pub seed: Option<u64>,
    pub provenance: String,
}

/// Trials in strictly increasing index order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    trials: Vec<Trial>,
    pub meta: TrialMeta,
}

impl TrialSet {
    pub fn new(trials: Vec<Trial>, meta: TrialMeta) -> Result<Self> {
        if let Some(w) = trials.windows(2).find(|w| w[1].index <= w[0].index) {
            return Err(Error::domain(format!(
                "trial indices not strictly increasing at {} -> {}",
                w[0].index, w[1].index
            )));
        }
        Ok(TrialSet { trials, meta })
    }

    /// Numbers trials 1..=len in the given order.
    pub fn from_sequence(
        parts: impl IntoIterator<Item = (HeraldTag, u8, u8, Outcome, Outcome)>,
        meta: TrialMeta,
    ) -> Result<Self> {
        let trials = parts
            .into_iter()
            .enumerate()
            .map(|(i, (t, a, b, x, y))| Trial::new(i as u64 + 1, t, a, b, x, y))
            .collect::<Result<Vec<_>>>()?;
        TrialSet::new(trials, meta)
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn heralded(&self) -> impl Iterator<Item = &Trial> {
        self.trials.iter().filter(|t| t.tag.is_heralded())
    }
}

/// Wins `k` and heralded trials `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub k: u64,
    pub n: u64,
}

impl std::ops::Add for Tally {
    type Output = Tally;
    fn add(self, o: Tally) -> Tally {
        Tally {
            k: self.k + o.k,
            n: self.n + o.n,
        }
    }
}

pub fn aggregate(set: &TrialSet) -> Tally {
    set.trials().iter().fold(Tally::default(), |acc, t| Tally {
        k: acc.k + u64::from(t.win()),
        n: acc.n + u64::from(t.tag.value().unsigned_abs()),
    })
}

/// Correlation statistics of one (state, a, b) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub e: f64,
    pub count: u64,
    pub stderr: f64,
    pub correlated: u64,
    pub anticorrelated: u64,
}

impl Cell {
    fn from_counts(correlated: u64, anticorrelated: u64) -> Option<Self> {
        let count = correlated + anticorrelated;
        if count == 0 {
            return None;
        }
        let e = (correlated as f64 - anticorrelated as f64) / count as f64;
        let var = if correlated == 0 || anticorrelated == 0 {
            0.0
        } else {
            ((1.0 - e * e) / count as f64).max(0.0)
        };
        Some(Cell {
            e,
            count,
            stderr: var.sqrt(),
            correlated,
            anticorrelated,
        })
    }
}

/// Per-state 2×2 grid of correlator cells indexed `[a][b]`; empty cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlators {
    pub psi_minus: [[Option<Cell>; 2]; 2],
    pub psi_plus: [[Option<Cell>; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub state: String,
    pub a: u8,
    pub b: u8,
    pub count: u64,
    pub e: Option<f64>,
    pub stderr: Option<f64>,
}

impl Correlators {
    pub fn state(&self, tag: HeraldTag) -> Option<&[[Option<Cell>; 2]; 2]> {
        match tag {
            HeraldTag::PsiMinus => Some(&self.psi_minus),
            HeraldTag::PsiPlus => Some(&self.psi_plus),
            HeraldTag::None => None,
        }
    }

    pub fn rows(&self) -> Vec<CellRow> {
        let mut rows = Vec::with_capacity(8);
        for tag in HeraldTag::HERALDED {
            let grid = self.state(tag).expect("heralded state");
            for a in 0..2u8 {
                for b in 0..2u8 {
                    let cell = grid[a as usize][b as usize];
                    rows.push(CellRow {
                        state: tag.label().to_string(),
                        a,
                        b,
                        count: cell.map_or(0, |c| c.count),
                        e: cell.map(|c| c.e),
                        stderr: cell.map(|c| c.stderr),
                    });
                }
            }
        }
        rows
    }
}

pub fn correlators(set: &TrialSet) -> Correlators {
    // [state][a][b][correlated?]
    let mut counts = [[[[0u64; 2]; 2]; 2]; 2];
    for t in set.heralded() {
        let s = usize::from(t.tag == HeraldTag::PsiPlus);
        let slot = usize::from(t.product() < 0);
        counts[s][t.setting_a as usize][t.setting_b as usize][slot] += 1;
    }
    let grid = |s: usize| {
        let mut g = [[None; 2]; 2];
        for (a, row) in g.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                let c = counts[s][a][b];
                *cell = Cell::from_counts(c[0], c[1]);
            }
        }
        g
    };
    Correlators {
        psi_minus: grid(0),
        psi_plus: grid(1),
    }
}

/// S for one herald state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateS {
    pub s: f64,
    pub sigma: f64,
    pub n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshSummary {
    pub psi_minus: Option<StateS>,
    pub psi_plus: Option<StateS>,
    /// Trial-count weighted average over the states present.
    pub s_weighted: f64,
    pub sigma: f64,
}

fn state_s(tag: HeraldTag, grid: &[[Option<Cell>; 2]; 2]) -> Result<Option<StateS>> {
    let n: u64 = grid.iter().flatten().flatten().map(|c| c.count).sum();
    if n == 0 {
        return Ok(None);
    }
    let mut s = 0.0;
    let mut var = 0.0;
    for a in 0..2u8 {
        for b in 0..2u8 {
            let cell = grid[a as usize][b as usize].ok_or(Error::MissingCell {
                state: tag.label(),
                a,
                b,
            })?;
            s += tag.s_sign(a, b) * cell.e;
            var += cell.stderr * cell.stderr;
        }
    }
    Ok(Some(StateS {
        s,
        sigma: var.sqrt(),
        n,
    }))
}

pub fn chsh_s(set: &TrialSet) -> Result<ChshSummary> {
    let corr = correlators(set);
    let psi_minus = state_s(HeraldTag::PsiMinus, &corr.psi_minus)?;
    let psi_plus = state_s(HeraldTag::PsiPlus, &corr.psi_plus)?;
    let present: Vec<StateS> = [psi_minus, psi_plus].into_iter().flatten().collect();
    let total: u64 = present.iter().map(|s| s.n).sum();
    if total == 0 {
        return Err(Error::domain("no heralded trials"));
    }
    let mut s_weighted = 0.0;
    let mut var = 0.0;
    for st in &present {
        let w = st.n as f64 / total as f64;
        s_weighted += w * st.s;
        var += (w * st.sigma).powi(2);
    }
    Ok(ChshSummary {
        psi_minus,
        psi_plus,
        s_weighted,
        sigma: var.sqrt(),
    })
}

/// Reads JSON-lines trials, skipping blank lines. Errors carry 1-based line numbers.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Trial>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let trial: Trial = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(trial);
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut w: W, trials: &[Trial]) -> Result<()> {
    for t in trials {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
