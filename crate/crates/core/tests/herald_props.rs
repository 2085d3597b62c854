use bellcheck::herald::{
    classify, group_by_attempt, retag, score, sweep, synth_records, synth_stream, DetectionEvent,
    StreamParams, WindowConfig,
};
use bellcheck::{Exec, HeraldTag};
use proptest::prelude::*;

fn click(channel: u8, time_ps: i64) -> DetectionEvent {
    DetectionEvent {
        attempt_id: 1,
        channel,
        time_ps: time_ps as u64,
    }
}

/// A click at `frac` of the way through round `round`'s window on `channel`.
fn in_window(w: &WindowConfig, channel: u8, round: u8, frac: f64) -> DetectionEvent {
    let (start, len) = match (round, channel) {
        (0, c) => (w.start(c), w.len_first_ps),
        (_, 0) => (w.start(0) + w.second_window_offset_ps, w.len_second_ch0_ps),
        (_, _) => (w.start(1) + w.second_window_offset_ps, w.len_second_ch1_ps),
    };
    click(channel, start + ((len - 1) as f64 * frac) as i64)
}

/// A click outside every window: before round 1, between rounds, or after round 2.
fn out_of_window(w: &WindowConfig, channel: u8, region: u8, frac: f64) -> DetectionEvent {
    let s = w.start(channel);
    let r2_end = s + w.second_window_offset_ps
        + if channel == 0 { w.len_second_ch0_ps } else { w.len_second_ch1_ps };
    let t = match region {
        0 => s - 1 - (frac * 1e6) as i64,
        1 => s + w.len_first_ps + (frac * (w.second_window_offset_ps - w.len_first_ps - 1) as f64) as i64,
        _ => r2_end + (frac * 1e6) as i64,
    };
    click(channel, t)
}

fn sorted(mut v: Vec<DetectionEvent>) -> Vec<DetectionEvent> {
    v.sort_by_key(|e| (e.time_ps, e.channel));
    v
}

proptest! {
    #[test]
    fn out_of_window_clicks_are_ignored(
        inside in proptest::collection::vec((0u8..2, 0u8..2, 0.0f64..1.0), 0..4),
        outside in proptest::collection::vec((0u8..2, 0u8..3, 0.0f64..1.0), 0..6),
    ) {
        let w = WindowConfig::default();
        let base: Vec<_> = inside.iter().map(|&(c, r, f)| in_window(&w, c, r, f)).collect();
        let mut noisy = base.clone();
        noisy.extend(outside.iter().map(|&(c, r, f)| out_of_window(&w, c, r, f)));
        prop_assert_eq!(classify(&sorted(base), &w), classify(&sorted(noisy), &w));
    }

    #[test]
    fn widening_without_new_clicks_keeps_the_tag(
        inside in proptest::collection::vec((0u8..2, 0u8..2, 0.0f64..1.0), 0..4),
        widen in 1i64..10_000,
    ) {
        let w = WindowConfig::default();
        let events = sorted(inside.iter().map(|&(c, r, f)| in_window(&w, c, r, f)).collect());
        let wide = w.shifted(-widen).unwrap();
        prop_assert_eq!(classify(&events, &w), classify(&events, &wide));
    }

    #[test]
    fn exactly_one_click_per_round(c1 in 0u8..2, c2 in 0u8..2, f1 in 0.0f64..1.0, f2 in 0.0f64..1.0, extra in 0u8..2) {
        let w = WindowConfig::default();
        let mut ev = vec![in_window(&w, c1, 0, f1), in_window(&w, c2, 1, f2)];
        let expected = if c1 == c2 { HeraldTag::PsiPlus } else { HeraldTag::PsiMinus };
        prop_assert_eq!(classify(&sorted(ev.clone()), &w), expected);
        ev.push(in_window(&w, extra, 0, 1.0 - f1));
        prop_assert_eq!(classify(&sorted(ev), &w), HeraldTag::None);
    }
}

#[test]
fn sweep_at_zero_is_direct_classification() {
    let w = WindowConfig::default();
    let p = StreamParams {
        reflection_amplitude: 0.4,
        afterpulse_prob: 0.02,
        dark_prob: 0.01,
        ..StreamParams::default()
    };
    for seed in 0..4 {
        let s = synth_stream(&p, &w, 30_000, seed).unwrap();
        let rec = synth_records(&s.truth, 0.8, seed).unwrap();
        let row = sweep(&rec, &s.events, &w, &[0], 0.75, Exec::default()).unwrap()[0];
        let grouped = group_by_attempt(&s.events);
        let direct = retag(&rec, &grouped, &w).unwrap();
        for t in direct.trials() {
            let tag = grouped.get(&t.index).map_or(HeraldTag::None, |ev| classify(ev, &w));
            assert_eq!(t.tag, tag);
        }
        let expected = score(&direct, 0, 0.75).unwrap();
        assert_eq!(row.s.map(f64::to_bits), expected.s.map(f64::to_bits));
        assert_eq!(row.p_local.map(f64::to_bits), expected.p_local.map(f64::to_bits));
        assert_eq!((row.n, row.k), (expected.n, expected.k));
    }
}

#[test]
fn widening_over_empty_time_leaves_rows_unchanged() {
    let w = WindowConfig::default();
    let s = synth_stream(&StreamParams::default(), &w, 30_000, 11).unwrap();
    let rec = synth_records(&s.truth, 0.8, 11).unwrap();
    let offsets: Vec<i64> = (0..=10).map(|i| -200 * i).collect();
    let rows = sweep(&rec, &s.events, &w, &offsets, 0.75, Exec::default()).unwrap();
    for r in &rows {
        assert_eq!((r.s, r.sigma, r.n, r.k, r.p_local), (rows[0].s, rows[0].sigma, rows[0].n, rows[0].k, rows[0].p_local));
    }
}

#[test]
fn psi_plus_fraction_grows_with_afterpulsing() {
    let w = WindowConfig::default();
    let fractions: Vec<f64> = [0.0, 0.02, 0.05, 0.1]
        .iter()
        .map(|&ap| {
            let p = StreamParams {
                afterpulse_prob: ap,
                ..StreamParams::default()
            };
            let (mut plus, mut total) = (0usize, 0usize);
            for seed in 0..5 {
                let s = synth_stream(&p, &w, 20_000, seed).unwrap();
                for ev in group_by_attempt(&s.events).values() {
                    match classify(ev, &w) {
                        HeraldTag::PsiPlus => {
                            plus += 1;
                            total += 1;
                        }
                        HeraldTag::PsiMinus => total += 1,
                        HeraldTag::None => {}
                    }
                }
            }
            plus as f64 / total as f64
        })
        .collect();
    assert!(fractions.windows(2).all(|p| p[1] > p[0]), "{fractions:?}");
}
