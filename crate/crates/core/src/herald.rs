//! Station-C heralding: window filters over time-tagged detections, a
//! phenomenological photon-stream generator and window-offset sweeps.

use crate::error::{Error, Result};
use crate::exec::{derive_seed, map_ordered, stream_rng, Exec};
use crate::lhv::partner_outcome;
use crate::pvalue::pvalue_complete;
use crate::trial::{aggregate, chsh_s, HeraldTag, Outcome, Trial, TrialMeta, TrialSet};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

/// One click at station C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub attempt_id: u64,
    pub channel: u8,
    pub time_ps: u64,
}

/// Two-round window filter. Round 1 on channel `c` accepts
/// `[start_c, start_c + len_first)`; round 2 accepts
/// `[start_c + sep, start_c + sep + len_second_c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub start_ch0_ps: i64,
    pub start_ch1_ps: i64,
    pub len_first_ps: i64,
    pub len_second_ch0_ps: i64,
    pub len_second_ch1_ps: i64,
    pub second_window_offset_ps: i64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            start_ch0_ps: 5_426_000,
            start_ch1_ps: 5_425_100,
            len_first_ps: 50_000,
            len_second_ch0_ps: 4_000,
            len_second_ch1_ps: 2_500,
            second_window_offset_ps: 250_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Round {
    First,
    Second,
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        let lens = [self.len_first_ps, self.len_second_ch0_ps, self.len_second_ch1_ps];
        if lens.iter().any(|&l| l <= 0) {
            return Err(Error::domain(format!("window lengths must be positive: {lens:?}")));
        }
        if self.second_window_offset_ps < self.len_first_ps {
            return Err(Error::domain("second round overlaps the first window"));
        }
        Ok(())
    }

    pub fn start(&self, channel: u8) -> i64 {
        if channel == 0 {
            self.start_ch0_ps
        } else {
            self.start_ch1_ps
        }
    }

    fn len_second(&self, channel: u8) -> i64 {
        if channel == 0 {
            self.len_second_ch0_ps
        } else {
            self.len_second_ch1_ps
        }
    }

    /// Moves every window start by `offset_ps` and keeps every window end
    /// fixed, so negative offsets widen the windows.
    pub fn shifted(&self, offset_ps: i64) -> Result<WindowConfig> {
        let w = WindowConfig {
            start_ch0_ps: self.start_ch0_ps + offset_ps,
            start_ch1_ps: self.start_ch1_ps + offset_ps,
            len_first_ps: self.len_first_ps - offset_ps,
            len_second_ch0_ps: self.len_second_ch0_ps - offset_ps,
            len_second_ch1_ps: self.len_second_ch1_ps - offset_ps,
            second_window_offset_ps: self.second_window_offset_ps,
        };
        // the shifted second window may not reach back into the first one
        if self.second_window_offset_ps + offset_ps < self.len_first_ps {
            return Err(Error::domain(format!("offset {offset_ps} ps merges the two rounds")));
        }
        w.validate()?;
        Ok(w)
    }

    fn round_of(&self, e: &DetectionEvent) -> Option<Round> {
        let t = e.time_ps as i64;
        let s = self.start(e.channel);
        if (s..s + self.len_first_ps).contains(&t) {
            return Some(Round::First);
        }
        let s2 = s + self.second_window_offset_ps;
        if (s2..s2 + self.len_second(e.channel)).contains(&t) {
            return Some(Round::Second);
        }
        None
    }
}

/// Herald tag for one attempt: exactly one in-window click per round,
/// different channels for ψ⁻ and the same channel for ψ⁺.
pub fn classify(events: &[DetectionEvent], windows: &WindowConfig) -> HeraldTag {
    let mut first = None;
    let mut second = None;
    let mut n_first = 0;
    let mut n_second = 0;
    for e in events {
        match windows.round_of(e) {
            Some(Round::First) => {
                n_first += 1;
                first = Some(e.channel);
            }
            Some(Round::Second) => {
                n_second += 1;
                second = Some(e.channel);
            }
            None => {}
        }
    }
    match (n_first, n_second, first, second) {
        (1, 1, Some(c1), Some(c2)) if c1 == c2 => HeraldTag::PsiPlus,
        (1, 1, Some(_), Some(_)) => HeraldTag::PsiMinus,
        _ => HeraldTag::None,
    }
}

/// Detections grouped by attempt id.
pub fn group_by_attempt(events: &[DetectionEvent]) -> BTreeMap<u64, Vec<DetectionEvent>> {
    let mut map: BTreeMap<u64, Vec<DetectionEvent>> = BTreeMap::new();
    for e in events {
        map.entry(e.attempt_id).or_default().push(*e);
    }
    for v in map.values_mut() {
        v.sort_by_key(|e| (e.time_ps, e.channel));
    }
    map
}

/// Replaces every trial's tag with the classification of its detections.
/// Attempts without detections become tag 0.
pub fn retag(
    records: &TrialSet,
    grouped: &BTreeMap<u64, Vec<DetectionEvent>>,
    windows: &WindowConfig,
) -> Result<TrialSet> {
    let trials = records
        .trials()
        .iter()
        .map(|t| {
            let tag = grouped
                .get(&t.index)
                .map_or(HeraldTag::None, |ev| classify(ev, windows));
            Trial { tag, ..*t }
        })
        .collect();
    TrialSet::new(trials, records.meta.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub offset_ps: i64,
    pub s: Option<f64>,
    pub sigma: Option<f64>,
    pub n: u64,
    pub k: u64,
    /// Complete-analysis P-value at this offset alone. Picking the best
    /// offset after the fact makes it a local, not a global, P-value.
    pub p_local: Option<f64>,
}

pub const SWEEP_CSV_HEADER: &str = "offset_ps,S,sigma,n,k,p_local";

impl SweepRow {
    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.offset_ps,
            opt(self.s),
            opt(self.sigma),
            self.n,
            self.k,
            opt(self.p_local)
        )
    }
}

/// Scores a retagged trial set. S is missing when no heralds are present or a
/// correlator cell of a present state is empty.
pub fn score(set: &TrialSet, offset_ps: i64, beta: f64) -> Result<SweepRow> {
    let tally = aggregate(set);
    let (s, sigma) = match chsh_s(set) {
        Ok(sum) => (Some(sum.s_weighted), Some(sum.sigma)),
        Err(Error::MissingCell { .. }) | Err(Error::Domain(_)) => (None, None),
        Err(e) => return Err(e),
    };
    let p_local = if tally.n == 0 {
        None
    } else if beta >= 1.0 {
        Some(1.0)
    } else {
        Some(pvalue_complete(tally.n, tally.k, beta)?)
    };
    Ok(SweepRow {
        offset_ps,
        s,
        sigma,
        n: tally.n,
        k: tally.k,
        p_local,
    })
}

/// Reclassifies and rescores the data for each window-start offset.
pub fn sweep(
    records: &TrialSet,
    detections: &[DetectionEvent],
    windows: &WindowConfig,
    offsets: &[i64],
    beta: f64,
    exec: Exec,
) -> Result<Vec<SweepRow>> {
    windows.validate()?;
    let grouped = group_by_attempt(detections);
    map_ordered(exec, offsets.to_vec(), |offset| {
        let w = windows.shifted(offset)?;
        score(&retag(records, &grouped, &w)?, offset, beta)
    })
    .into_iter()
    .collect()
}

/// Parses `start:stop:step` (inclusive stop) into a list of offsets.
pub fn parse_offsets(spec: &str) -> Result<Vec<i64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::domain(format!("offsets {spec:?} must be start:stop:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<i64> = parts
        .iter()
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if step == 0 || (stop - start).signum() * step.signum() < 0 {
        return Err(bad());
    }
    let count = (stop - start) / step;
    Ok((0..=count).map(|i| start + i * step).collect())
}

/// Parameters of the synthetic photon stream. Times are picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamParams {
    /// Mean NV emission lifetime.
    pub decay_ps: f64,
    /// Probability per round that an emitted photon is detected.
    pub signal_prob: f64,
    /// Probability per round of a laser-reflection click.
    pub reflection_amplitude: f64,
    /// Reflection pulse centre relative to the channel's window start.
    pub reflection_center_ps: f64,
    pub reflection_sigma_ps: f64,
    /// Probability that a round-1 click is followed by a round-2 afterpulse on the same channel.
    pub afterpulse_prob: f64,
    /// Probability per channel and round of a dark count, uniform over the round.
    pub dark_prob: f64,
    /// Span of each round over which dark counts are spread.
    pub round_span_ps: f64,
}

impl Default for StreamParams {
    fn default() -> Self {
        StreamParams {
            decay_ps: 12_000.0,
            signal_prob: 0.2,
            reflection_amplitude: 0.0,
            reflection_center_ps: -2_000.0,
            reflection_sigma_ps: 250.0,
            afterpulse_prob: 0.0,
            dark_prob: 0.0,
            round_span_ps: 100_000.0,
        }
    }
}

impl StreamParams {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("signal_prob", self.signal_prob),
            ("reflection_amplitude", self.reflection_amplitude),
            ("afterpulse_prob", self.afterpulse_prob),
            ("dark_prob", self.dark_prob),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::domain(format!("{name} = {p} not in [0, 1]")));
            }
        }
        if !(self.decay_ps > 0.0 && self.reflection_sigma_ps > 0.0 && self.round_span_ps > 0.0) {
            return Err(Error::domain("decay, reflection width and round span must be positive"));
        }
        Ok(())
    }
}

/// Where a synthetic click came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Signal,
    Reflection,
    Afterpulse,
    Dark,
}

/// Ground truth for one synthetic attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptTruth {
    pub attempt_id: u64,
    /// Bell state prepared when both rounds produced a signal photon.
    pub state: Option<HeraldTag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthStream {
    pub events: Vec<DetectionEvent>,
    pub sources: Vec<Source>,
    pub truth: Vec<AttemptTruth>,
}

fn clamp_time(t: f64) -> u64 {
    t.round().max(0.0) as u64
}

/// Generates detections for attempts `1..=attempts`, sorted by attempt then time.
pub fn synth_stream(
    params: &StreamParams,
    windows: &WindowConfig,
    attempts: u64,
    seed: u64,
) -> Result<SynthStream> {
    params.validate()?;
    windows.validate()?;
    let mut rng = stream_rng(derive_seed(seed, "herald-synth"), 0);
    let mut events = Vec::new();
    let mut sources = Vec::new();
    let mut truth = Vec::with_capacity(attempts as usize);
    for attempt_id in 1..=attempts {
        let mut clicks: Vec<(DetectionEvent, Source)> = Vec::new();
        let mut signal_channels = [None, None];
        for (round, base) in [(0usize, 0i64), (1, windows.second_window_offset_ps)] {
            let mut push = |channel: u8, t: f64, src| {
                clicks.push((
                    DetectionEvent {
                        attempt_id,
                        channel,
                        time_ps: clamp_time(t),
                    },
                    src,
                ))
            };
            if rng.random::<f64>() < params.signal_prob {
                let c: u8 = rng.random_range(0..2);
                let delay = -params.decay_ps * (1.0 - rng.random::<f64>()).ln();
                push(c, (windows.start(c) + base) as f64 + delay, Source::Signal);
                signal_channels[round] = Some(c);
            }
            if rng.random::<f64>() < params.reflection_amplitude {
                let c: u8 = rng.random_range(0..2);
                let z: f64 = rng.sample(StandardNormal);
                let t = (windows.start(c) + base) as f64
                    + params.reflection_center_ps
                    + params.reflection_sigma_ps * z;
                push(c, t, Source::Reflection);
            }
            for c in 0..2u8 {
                if rng.random::<f64>() < params.dark_prob {
                    let t = (windows.start(c) + base) as f64
                        + (rng.random::<f64>() - 0.5) * params.round_span_ps;
                    push(c, t, Source::Dark);
                }
            }
            if round == 0 {
                let round1: Vec<u8> = clicks.iter().map(|(e, _)| e.channel).collect();
                let base2 = windows.second_window_offset_ps;
                for c in round1 {
                    if rng.random::<f64>() < params.afterpulse_prob {
                        let t = (windows.start(c) + base2) as f64
                            + rng.random::<f64>() * windows.len_second(c) as f64;
                        clicks.push((
                            DetectionEvent {
                                attempt_id,
                                channel: c,
                                time_ps: clamp_time(t),
                            },
                            Source::Afterpulse,
                        ));
                    }
                }
            }
        }
        clicks.sort_by_key(|(e, _)| (e.time_ps, e.channel));
        for (e, s) in clicks {
            events.push(e);
            sources.push(s);
        }
        let state = match signal_channels {
            [Some(a), Some(b)] if a == b => Some(HeraldTag::PsiPlus),
            [Some(_), Some(_)] => Some(HeraldTag::PsiMinus),
            _ => None,
        };
        truth.push(AttemptTruth { attempt_id, state });
    }
    Ok(SynthStream {
        events,
        sources,
        truth,
    })
}

/// Settings and outcomes for every synthetic attempt: entangled attempts win
/// their own state's game with probability `win`, all others with 1/2. Tags
/// in the returned records are placeholders until [`retag`] runs.
pub fn synth_records(truth: &[AttemptTruth], win: f64, seed: u64) -> Result<TrialSet> {
    if !(0.0..=1.0).contains(&win) {
        return Err(Error::domain(format!("win probability {win} not in [0, 1]")));
    }
    let mut rng = stream_rng(derive_seed(seed, "herald-records"), 0);
    let trials = truth
        .iter()
        .map(|t| {
            let a: u8 = rng.random_range(0..2);
            let b: u8 = rng.random_range(0..2);
            let x = Outcome::from_bit(rng.random_range(0..2));
            let (state, w) = match t.state {
                Some(s) => (s, win),
                None => (HeraldTag::PsiMinus, 0.5),
            };
            let y = partner_outcome(state, a, b, x, rng.random::<f64>() < w);
            Trial::new(t.attempt_id, HeraldTag::None, a, b, x, y)
        })
        .collect::<Result<Vec<_>>>()?;
    TrialSet::new(
        trials,
        TrialMeta {
            label: "herald-synth".into(),
            seed: Some(seed),
            provenance: format!("synthetic herald records, win={win}"),
        },
    )
}

pub const DETECTIONS_CSV_HEADER: &str = "attempt_id,channel,time_ps";

/// Reads `attempt_id,channel,time_ps` rows. A header line and `#` comment
/// lines are skipped.
pub fn read_detections_csv<R: BufRead>(reader: R) -> Result<Vec<DetectionEvent>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with("attempt_id") {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, got {}", fields.len())));
        }
        let attempt_id = fields[0]
            .parse()
            .map_err(|e| parse_err(format!("attempt_id: {e}")))?;
        let channel: u8 = fields[1].parse().map_err(|e| parse_err(format!("channel: {e}")))?;
        if channel > 1 {
            return Err(parse_err(format!("channel {channel} not in {{0,1}}")));
        }
        let time_ps = fields[2].parse().map_err(|e| parse_err(format!("time_ps: {e}")))?;
        out.push(DetectionEvent {
            attempt_id,
            channel,
            time_ps,
        });
    }
    Ok(out)
}

pub fn write_detections_csv<W: Write>(mut w: W, events: &[DetectionEvent]) -> Result<()> {
    writeln!(w, "{DETECTIONS_CSV_HEADER}")?;
    for e in events {
        writeln!(w, "{},{},{}", e.attempt_id, e.channel, e.time_ps)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn click(channel: u8, time_ps: u64) -> DetectionEvent {
        DetectionEvent {
            attempt_id: 1,
            channel,
            time_ps,
        }
    }

    #[test]
    fn classify_examples() {
        let w = WindowConfig::default();
        let r1 = |c| click(c, (w.start(c) + 1_000) as u64);
        let r2 = |c| click(c, (w.start(c) + w.second_window_offset_ps + 1_000) as u64);
        assert_eq!(classify(&[r1(0), r2(1)], &w), HeraldTag::PsiMinus);
        assert_eq!(classify(&[r1(0), r2(0)], &w), HeraldTag::PsiPlus);
        assert_eq!(classify(&[], &w), HeraldTag::None);
        assert_eq!(classify(&[r1(0), r1(1), r2(1)], &w), HeraldTag::None);
        assert_eq!(classify(&[r1(0)], &w), HeraldTag::None);
        // clicks before the start or after the end of a window are ignored
        let early = click(0, (w.start(0) - 1) as u64);
        let late = click(1, (w.start(1) + w.second_window_offset_ps + w.len_second_ch1_ps) as u64);
        assert_eq!(classify(&[early, r1(0), r2(1), late], &w), HeraldTag::PsiMinus);
    }

    #[test]
    fn window_validation() {
        let w = WindowConfig {
            len_second_ch1_ps: 0,
            ..WindowConfig::default()
        };
        assert!(w.validate().is_err());
        assert!(WindowConfig::default().shifted(-300_000).is_err());
        assert!(WindowConfig::default().shifted(5_000).is_err());
        let s = WindowConfig::default().shifted(-1_000).unwrap();
        assert_eq!(s.start_ch0_ps + s.len_first_ps, 5_426_000 + 50_000);
    }

    #[test]
    fn offsets_parse() {
        assert_eq!(parse_offsets("-2000:0:500").unwrap(), vec![-2000, -1500, -1000, -500, 0]);
        assert_eq!(parse_offsets("0:-1000:-500").unwrap(), vec![0, -500, -1000]);
        assert!(parse_offsets("0:10").is_err());
        assert!(parse_offsets("0:10:0").is_err());
        assert!(parse_offsets("0:10:-1").is_err());
    }

    #[test]
    fn clean_stream_starts_in_window() {
        let w = WindowConfig::default();
        let s = synth_stream(&StreamParams::default(), &w, 5_000, 1).unwrap();
        for e in &s.events {
            let rel = e.time_ps as i64 - w.start(e.channel);
            assert!(rel >= 0, "{e:?}");
        }
    }

    #[test]
    fn no_afterpulses_no_spurious_psi_plus() {
        let w = WindowConfig::default();
        let s = synth_stream(&StreamParams::default(), &w, 20_000, 2).unwrap();
        let grouped = group_by_attempt(&s.events);
        for t in &s.truth {
            let tag = grouped.get(&t.attempt_id).map_or(HeraldTag::None, |ev| classify(ev, &w));
            if tag == HeraldTag::PsiPlus {
                assert_eq!(t.state, Some(HeraldTag::PsiPlus));
            }
        }
    }

    #[test]
    fn decay_constant_recovered() {
        let w = WindowConfig::default();
        let p = StreamParams {
            signal_prob: 1.0,
            ..StreamParams::default()
        };
        let s = synth_stream(&p, &w, 100_000, 3).unwrap();
        let (mut sum, mut n) = (0.0, 0.0);
        for e in &s.events {
            let rel = e.time_ps as i64 - w.start(e.channel);
            let rel = if rel >= w.second_window_offset_ps { rel - w.second_window_offset_ps } else { rel };
            sum += rel as f64;
            n += 1.0;
        }
        let rate = n / sum;
        assert!((rate * 12_000.0 - 1.0).abs() < 0.05, "{rate}");
    }

    #[test]
    fn detections_csv_roundtrip() {
        let s = synth_stream(&StreamParams::default(), &WindowConfig::default(), 200, 4).unwrap();
        let mut buf = Vec::new();
        write_detections_csv(&mut buf, &s.events).unwrap();
        assert_eq!(read_detections_csv(&buf[..]).unwrap(), s.events);
        let err = read_detections_csv("attempt_id,channel,time_ps\n1,2,5\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn sweep_offset_zero_matches_direct() {
        let w = WindowConfig::default();
        let p = StreamParams {
            reflection_amplitude: 0.3,
            dark_prob: 0.01,
            afterpulse_prob: 0.05,
            ..StreamParams::default()
        };
        let s = synth_stream(&p, &w, 20_000, 5).unwrap();
        let rec = synth_records(&s.truth, 0.8, 5).unwrap();
        let rows = sweep(&rec, &s.events, &w, &[0], 0.75, Exec::Sequential).unwrap();
        let direct = retag(&rec, &group_by_attempt(&s.events), &w).unwrap();
        assert_eq!(rows[0], score(&direct, 0, 0.75).unwrap());
    }

    #[test]
    fn empty_offset_row() {
        let w = WindowConfig::default();
        let rec = synth_records(&[AttemptTruth { attempt_id: 1, state: None }], 0.8, 1).unwrap();
        let rows = sweep(&rec, &[], &w, &[0, -100], 0.75, Exec::Sequential).unwrap();
        assert_eq!(rows[0].n, 0);
        assert!(rows[0].s.is_none() && rows[0].p_local.is_none());
        assert_eq!(rows[0].to_csv_line(), "0,,,0,0,");
    }
}
