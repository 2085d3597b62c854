use crate::args::{BiasArgs, BitFormatArg, Cli, Command, CombineMode, Format, HeraldCmd, RngCmd, SimulateCmd};
use crate::config::Settings;
use crate::error::{CliError, Result};
use crate::output::{opt, write_csv, write_to, Sink};
use bellcheck::audit::{audit_row, read_settings_jsonl, AuditConfig, AuditRow, SettingCounts};
use bellcheck::extract::{self, BitStream};
use bellcheck::herald::{self, DetectionEvent, Source, SweepRow};
use bellcheck::lhv::{self, AdversaryConfig, ReferenceModel, RngModel, SimConfig, CATALOG};
use bellcheck::pvalue::{self, beta_win_expanded, beta_win_lemma, CurvePoint, PValueReport};
use bellcheck::report::{analyze, AnalysisReport};
use bellcheck::trial::{read_jsonl, write_jsonl};
use bellcheck::{Exec, HeraldTag, Tally, Trial, TrialMeta, TrialSet};
use serde::Serialize;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

struct Ctx {
    settings: Settings,
    sink: Sink,
}

pub fn run(cli: &Cli) -> Result<()> {
    let settings = Settings::resolve(cli)?;
    let sink = Sink {
        out: settings.out.clone(),
        format: settings.format,
        run: settings.run.clone(),
    };
    let ctx = Ctx { settings, sink };
    match &cli.command {
        Command::Analyze { trials, bias } => analyze_cmd(&ctx, trials, bias),
        Command::Combine { mode } => combine_cmd(&ctx, mode),
        Command::Bound {
            bias,
            n,
            k,
            tau_max,
            tau_steps,
            curve_out,
        } => bound_cmd(&ctx, bias, n.zip(*k), *tau_max, *tau_steps, curve_out.as_deref()),
        Command::Simulate { what } => simulate_cmd(&ctx, what),
        Command::Herald { what } => herald_cmd(&ctx, what),
        Command::Rng { what } => rng_cmd(&ctx, what),
        Command::Audit {
            counts,
            counts_json,
            settings,
            all_attempts,
            label,
            ordering,
            lee_reps,
            alpha,
            target,
        } => {
            let counts = match (counts, counts_json, settings) {
                (Some(c), _, _) => c.parse::<SettingCounts>()?,
                (_, Some(path), _) => serde_json::from_reader(open(path)?)
                    .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?,
                (_, _, Some(path)) => {
                    read_settings_jsonl(open(path)?, !all_attempts).map_err(|e| in_file(path, e))?
                }
                _ => return Err(CliError::invalid("give --counts, --counts-json or --settings")),
            };
            let mut cfg = AuditConfig::new(ctx.settings.seed);
            if let Some(o) = ordering.or(ctx.settings.file.ordering) {
                cfg.ordering = o.into();
            }
            cfg.multinomial.reps = ctx.settings.reps.unwrap_or(cfg.multinomial.reps);
            cfg.lee.reps = *lee_reps;
            if let Some(chunk) = ctx.settings.file.chunk {
                cfg.multinomial = cfg.multinomial.with_chunk(chunk);
                cfg.lee = cfg.lee.with_chunk(chunk);
            }
            cfg.alpha = *alpha;
            cfg.target = *target;
            let row = audit_row(label, &counts, &cfg)?;
            ctx.sink.report(&row, AuditRow::CSV_HEADER, &[row.to_csv_line()])
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn read_trials(path: &Path) -> Result<Vec<Trial>> {
    read_jsonl(open(path)?).map_err(|e| in_file(path, e))
}

fn read_trial_set(path: &Path) -> Result<TrialSet> {
    let trials = read_trials(path)?;
    if trials.is_empty() {
        return Err(CliError::invalid(format!("{}: no trials", path.display())));
    }
    let meta = TrialMeta {
        label: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        seed: None,
        provenance: path.display().to_string(),
    };
    TrialSet::new(trials, meta).map_err(|e| in_file(path, e))
}

fn read_detections(path: &Path) -> Result<Vec<DetectionEvent>> {
    herald::read_detections_csv(open(path)?).map_err(|e| in_file(path, e))
}

fn read_bit_stream(path: &Path, format: BitFormatArg) -> Result<BitStream> {
    let bits = extract::read_bits(open(path)?, format.into()).map_err(|e| in_file(path, e))?;
    Ok(BitStream::new(bits, path.display().to_string())?)
}

/// Prefixes parse and domain errors with the offending file.
fn in_file(path: &Path, e: bellcheck::Error) -> CliError {
    if e.is_io() {
        CliError::Core(e)
    } else {
        CliError::invalid(format!("{}: {e}", path.display()))
    }
}

fn analyze_cmd(ctx: &Ctx, path: &Path, bias: &BiasArgs) -> Result<()> {
    let set = read_trial_set(path)?;
    let (params, form) = ctx.settings.bias(bias)?;
    let report = analyze(&set, params, form, ctx.sink.run.clone())?;
    match ctx.sink.format {
        Format::Json => ctx.sink.json_plain(&report),
        Format::Csv => ctx.sink.csv(&[], "quantity,value", &analysis_rows(&report)),
    }
}

fn analysis_rows(r: &AnalysisReport) -> Vec<String> {
    let mut rows = vec![
        format!("label,{}", r.label),
        format!("k,{}", r.k),
        format!("n,{}", r.n),
        format!("S,{}", r.chsh.s_weighted),
        format!("sigma,{}", r.chsh.sigma),
    ];
    for (name, state) in [("psi_minus", &r.chsh.psi_minus), ("psi_plus", &r.chsh.psi_plus)] {
        if let Some(st) = state {
            rows.push(format!("S_{name},{}", st.s));
            rows.push(format!("sigma_{name},{}", st.sigma));
            rows.push(format!("n_{name},{}", st.n));
        }
    }
    for c in &r.correlators {
        let key = format!("{}_{}{}", c.state, c.a, c.b);
        rows.push(format!("count_{key},{}", c.count));
        rows.push(format!("E_{key},{}", opt(c.e)));
        rows.push(format!("stderr_{key},{}", opt(c.stderr)));
    }
    rows.extend([
        format!("f,{}", r.bias.f),
        format!("tau,{}", r.bias.tau),
        format!("beta,{}", r.beta),
        format!("p_conventional,{}", opt(r.p_conventional)),
        format!("p_complete,{}", r.p_complete),
    ]);
    rows
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    serde_json::from_reader(open(path)?)
        .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

fn json_number(v: &serde_json::Value, path: &Path, keys: &[&[&str]]) -> Result<f64> {
    keys.iter()
        .find_map(|route| route.iter().try_fold(v, |node, k| node.get(k))?.as_f64())
        .ok_or_else(|| CliError::invalid(format!("{}: no {} field", path.display(), keys[0].join("."))))
}

fn pvalue_report_csv(ctx: &Ctx, report: &PValueReport) -> Result<()> {
    let notes: Vec<String> = report.caveat.iter().cloned().collect();
    let row = format!("{},{}", serde_json::to_value(report.method)?.as_str().unwrap_or_default(), report.p);
    ctx.sink.csv(&notes, "method,p", &[row])
}

fn emit_pvalue(ctx: &Ctx, report: &PValueReport) -> Result<()> {
    match ctx.sink.format {
        Format::Json => ctx.sink.json(report),
        Format::Csv => pvalue_report_csv(ctx, report),
    }
}

fn combine_cmd(ctx: &Ctx, mode: &CombineMode) -> Result<()> {
    match mode {
        CombineMode::Fisher { pvalues, reports } => {
            let mut ps = pvalues.clone();
            for path in reports {
                let v = read_json(path)?;
                ps.push(json_number(&v, path, &[&["p_complete"], &["result", "p"]])?);
            }
            if ps.len() < 2 {
                return Err(CliError::invalid("fisher combination needs at least two P-values"));
            }
            emit_pvalue(ctx, &PValueReport::fisher(ps)?)
        }
        CombineMode::Merge { runs, reports, bias } => {
            let mut tallies = runs.iter().map(|r| parse_run(r)).collect::<Result<Vec<_>>>()?;
            for path in reports {
                let v = read_json(path)?;
                let n = json_number(&v, path, &[&["n"]])?;
                let k = json_number(&v, path, &[&["k"]])?;
                tallies.push(Tally {
                    n: n as u64,
                    k: k as u64,
                });
            }
            if tallies.is_empty() {
                return Err(CliError::invalid("give at least one --run or --report"));
            }
            let (params, form) = ctx.settings.bias(bias)?;
            emit_pvalue(ctx, &PValueReport::merged(tallies, form.beta(params))?)
        }
    }
}

fn parse_run(s: &str) -> Result<Tally> {
    let bad = || CliError::invalid(format!("run {s:?} must be n,k"));
    let (n, k) = s.split_once(',').ok_or_else(bad)?;
    let n: u64 = n.trim().parse().map_err(|_| bad())?;
    let k: u64 = k.trim().parse().map_err(|_| bad())?;
    if k > n {
        return Err(CliError::invalid(format!("run {s:?} has more wins than trials")));
    }
    Ok(Tally { k, n })
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

#[derive(Serialize)]
struct BoundResult {
    f: f64,
    tau: f64,
    tau_prime: f64,
    beta_lemma: f64,
    beta_expanded: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_complete: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    curve: Option<Vec<CurvePoint>>,
}

fn bound_cmd(
    ctx: &Ctx,
    bias: &BiasArgs,
    counts: Option<(u64, u64)>,
    tau_max: f64,
    tau_steps: usize,
    curve_out: Option<&Path>,
) -> Result<()> {
    let (params, form) = ctx.settings.bias(bias)?;
    let mut result = BoundResult {
        f: params.f,
        tau: params.tau,
        tau_prime: params.tau_prime(),
        beta_lemma: beta_win_lemma(params),
        beta_expanded: beta_win_expanded(params),
        n: None,
        k: None,
        p_complete: None,
        curve: None,
    };
    if let Some((n, k)) = counts {
        if k > n {
            return Err(CliError::invalid("k exceeds n"));
        }
        if tau_steps == 0 || !(0.0..=0.5).contains(&tau_max) {
            return Err(CliError::invalid("need --tau-steps >= 1 and --tau-max in [0, 0.5]"));
        }
        let beta = form.beta(params);
        let p = if beta >= 1.0 { 1.0 } else { pvalue::pvalue_complete(n, k, beta)? };
        let grid: Vec<f64> = (0..=tau_steps).map(|i| tau_max * i as f64 / tau_steps as f64).collect();
        let curve = pvalue::pvalue_vs_tau_curve(n, k, &grid, params.f, form, Exec::default())?;
        if let Some(path) = curve_out {
            let rows: Vec<String> = curve.iter().map(|c| format!("{},{}", c.tau, c.p)).collect();
            write_to(Some(path), |w| write_csv(w, &ctx.sink.run, &[], "tau,p", &rows))?;
        }
        result.n = Some(n);
        result.k = Some(k);
        result.p_complete = Some(p);
        result.curve = Some(curve);
    }
    match (&ctx.sink.format, &result.curve) {
        (Format::Json, _) => ctx.sink.json(&result),
        (Format::Csv, Some(curve)) => {
            let rows: Vec<String> = curve.iter().map(|c| format!("{},{}", c.tau, c.p)).collect();
            ctx.sink.csv(&[], "tau,p", &rows)
        }
        (Format::Csv, None) => ctx.sink.csv(
            &[],
            "f,tau,tau_prime,beta_lemma,beta_expanded",
            &[format!(
                "{},{},{},{},{}",
                result.f, result.tau, result.tau_prime, result.beta_lemma, result.beta_expanded
            )],
        ),
    }
}

fn simulate_cmd(ctx: &Ctx, what: &SimulateCmd) -> Result<()> {
    let seed = ctx.settings.seed;
    match what {
        SimulateCmd::Lhv {
            strategy,
            attempts,
            stop_after_heralds,
            bias,
            bias_dist,
        } => {
            let (params, _) = ctx.settings.bias(bias)?;
            let model = RngModel::new(bias_dist.with_mean(params.tau), params.f)?;
            let mut strat = lhv::strategy_by_name(strategy)?;
            let cfg = SimConfig {
                attempts: *attempts,
                stop_after_heralds: *stop_after_heralds,
                seed,
            };
            let run = lhv::simulate(strat.as_mut(), &model, &cfg)?;
            ctx.sink.data(|w| write_jsonl(w, run.trials.trials()))
        }
        SimulateCmd::Reference {
            win_psi_minus,
            win_psi_plus,
            herald_rate,
            psi_plus_fraction,
            attempts,
        } => {
            let model = ReferenceModel {
                win_psi_minus: *win_psi_minus,
                win_psi_plus: *win_psi_plus,
                herald_rate: *herald_rate,
                psi_plus_fraction: *psi_plus_fraction,
            };
            let set = lhv::simulate_reference(&model, *attempts, seed)?;
            ctx.sink.data(|w| write_jsonl(w, set.trials()))
        }
        SimulateCmd::Adversary {
            n,
            alpha,
            strategies,
            bias,
            bias_dist,
        } => {
            let (params, _) = ctx.settings.bias(bias)?;
            let runs = ctx.settings.reps.unwrap_or(10_000) as u64;
            let mut cfg = AdversaryConfig::new(*n, runs, *alpha, seed);
            cfg.model = RngModel::new(bias_dist.with_mean(params.tau), params.f)?;
            if !strategies.is_empty() {
                cfg.strategies = strategies.clone();
            }
            for s in &cfg.strategies {
                if !CATALOG.contains(&s.as_str()) && !s.starts_with("deterministic:") {
                    return Err(CliError::invalid(format!("unknown strategy {s:?}")));
                }
            }
            let report = lhv::adversary_suite(&cfg)?;
            match ctx.sink.format {
                Format::Json => ctx.sink.json(&report),
                Format::Csv => {
                    let notes = [format!(
                        "n {} runs {} alpha {} beta {} rate {} mc_error {}",
                        report.n, report.runs, report.alpha, report.beta, report.rate, report.mc_error
                    )];
                    let rows: Vec<String> = report
                        .per_strategy
                        .iter()
                        .map(|s| {
                            format!(
                                "{},{},{},{},{},{}",
                                s.name,
                                s.runs,
                                s.rejections,
                                s.wins,
                                s.heralded,
                                s.win_rate()
                            )
                        })
                        .collect();
                    ctx.sink.csv(&notes, "strategy,runs,rejections,wins,heralded,win_rate", &rows)
                }
            }
        }
    }
}

#[derive(Serialize)]
struct SynthSummary {
    attempts: u64,
    detections: usize,
    signal: usize,
    reflection: usize,
    afterpulse: usize,
    dark: usize,
    psi_minus: usize,
    psi_plus: usize,
}

#[derive(Serialize)]
struct TagRow {
    attempt_id: u64,
    tag: HeraldTag,
}

#[derive(Serialize)]
struct SweepResult<'a> {
    beta: f64,
    note: &'static str,
    rows: &'a [SweepRow],
}

fn herald_cmd(ctx: &Ctx, what: &HeraldCmd) -> Result<()> {
    match what {
        HeraldCmd::Synth {
            attempts,
            window_config,
            stream_config,
            win,
            detections,
            trials,
        } => {
            let windows = ctx.settings.windows(window_config.as_deref())?;
            let params = ctx.settings.stream(stream_config.as_deref())?;
            let seed = ctx.settings.seed;
            let stream = herald::synth_stream(&params, &windows, *attempts, seed)?;
            let records = herald::synth_records(&stream.truth, *win, seed)?;
            write_to(Some(detections), |w| herald::write_detections_csv(w, &stream.events))?;
            write_to(Some(trials), |w| write_jsonl(w, records.trials()))?;
            let count = |s: Source| stream.sources.iter().filter(|&&x| x == s).count();
            let state = |t: HeraldTag| stream.truth.iter().filter(|a| a.state == Some(t)).count();
            let summary = SynthSummary {
                attempts: *attempts,
                detections: stream.events.len(),
                signal: count(Source::Signal),
                reflection: count(Source::Reflection),
                afterpulse: count(Source::Afterpulse),
                dark: count(Source::Dark),
                psi_minus: state(HeraldTag::PsiMinus),
                psi_plus: state(HeraldTag::PsiPlus),
            };
            let row = format!(
                "{},{},{},{},{},{},{},{}",
                summary.attempts,
                summary.detections,
                summary.signal,
                summary.reflection,
                summary.afterpulse,
                summary.dark,
                summary.psi_minus,
                summary.psi_plus
            );
            ctx.sink.report(
                &summary,
                "attempts,detections,signal,reflection,afterpulse,dark,psi_minus,psi_plus",
                &[row],
            )
        }
        HeraldCmd::Classify {
            detections,
            window_config,
            trials,
        } => {
            let windows = ctx.settings.windows(window_config.as_deref())?;
            let grouped = herald::group_by_attempt(&read_detections(detections)?);
            if let Some(path) = trials {
                let retagged = herald::retag(&read_trial_set(path)?, &grouped, &windows)?;
                return ctx.sink.data(|w| write_jsonl(w, retagged.trials()));
            }
            let tags: Vec<TagRow> = grouped
                .iter()
                .map(|(&attempt_id, ev)| TagRow {
                    attempt_id,
                    tag: herald::classify(ev, &windows),
                })
                .collect();
            let rows: Vec<String> = tags.iter().map(|t| format!("{},{}", t.attempt_id, t.tag.value())).collect();
            ctx.sink.report(&tags, "attempt_id,tag", &rows)
        }
        HeraldCmd::Sweep {
            detections,
            trials,
            window_config,
            offsets,
            bias,
        } => {
            let windows = ctx.settings.windows(window_config.as_deref())?;
            let (params, form) = ctx.settings.bias(bias)?;
            let beta = form.beta(params);
            let offsets = herald::parse_offsets(offsets)?;
            let records = read_trial_set(trials)?;
            let events = read_detections(detections)?;
            let rows = herald::sweep(&records, &events, &windows, &offsets, beta, Exec::default())?;
            let note = "p_local is a per-offset P-value with no correction for the number of offsets tried";
            match ctx.sink.format {
                Format::Json => ctx.sink.json(&SweepResult {
                    beta,
                    note,
                    rows: &rows,
                }),
                Format::Csv => {
                    let lines: Vec<String> = rows.iter().map(SweepRow::to_csv_line).collect();
                    ctx.sink.csv(&[note.to_string()], herald::SWEEP_CSV_HEADER, &lines)
                }
            }
        }
    }
}

#[derive(Serialize)]
struct IndependenceResult {
    n: usize,
    table: [[u64; 2]; 2],
    p: f64,
}

fn rng_cmd(ctx: &Ctx, what: &RngCmd) -> Result<()> {
    match what {
        RngCmd::Extract {
            messages,
            max_chars,
            bit_format,
        } => {
            let bits = extract::extract_lines(open(messages)?, Some(*max_chars)).map_err(|e| in_file(messages, e))?;
            ctx.sink.data(|w| extract::write_bits(w, &bits, (*bit_format).into()))
        }
        RngCmd::Bias {
            bits,
            block8,
            bit_format,
        } => {
            let mut stream = read_bit_stream(bits, *bit_format)?;
            if *block8 {
                stream = extract::block8(&stream)?;
            }
            let est = extract::estimate_bias(&stream)?;
            let row = format!("{},{},{}", est.n, est.bias, est.uncertainty);
            ctx.sink.report(&est, "n,bias,uncertainty", &[row])
        }
        RngCmd::Combine {
            classical,
            quantum,
            bit_format,
        } => {
            let c = read_bit_stream(classical, *bit_format)?;
            let q = read_bit_stream(quantum, *bit_format)?;
            let combined = extract::xor_combine_streams(&c, &q)?;
            ctx.sink.data(|w| extract::write_bits(w, &combined.bits, (*bit_format).into()))
        }
        RngCmd::Independence {
            a,
            b,
            truncate,
            bit_format,
        } => {
            let mut sa = read_bit_stream(a, *bit_format)?;
            let mut sb = read_bit_stream(b, *bit_format)?;
            if *truncate {
                let len = sa.len().min(sb.len());
                sa = sa.truncated(len);
                sb = sb.truncated(len);
            }
            let p = extract::independence_test(&sa, &sb)?;
            let result = IndependenceResult {
                n: sa.len(),
                table: extract::pair_table(&sa, &sb),
                p,
            };
            let t = result.table;
            let row = format!("{},{},{},{},{},{}", result.n, t[0][0], t[0][1], t[1][0], t[1][1], p);
            ctx.sink.report(&result, "n,n00,n01,n10,n11,p", &[row])
        }
    }
}

