use std::fmt::Write as _;
use std::fs::File;
use std::io::Write;
use std::time::Instant;

use accabet_core::backtest::{cumulative_gains, run_season, summarize, write_ledger_csv, Selector, StrategyCombo};
use accabet_core::domain::accumulator_totals;
use accabet_core::dominance::{apply_filter, reduction_stats, split_by_bookmaker, ReductionRow};
use accabet_core::solver::{enumerate_oracle, oracle_subset_count, sds_search, sds_search_traced, BookmakerPool, TraceRecord, ORACLE_LIMIT};
use accabet_core::staking::{kelly_fraction, variance_adjusted_stake};
use accabet_core::{Accumulator, BookmakerRef, CandidateBet, FilterMode, LedgerEntry, MatchRef, Outcome, SeasonSummary};
use accabet_service::api::{accumulator_view, RecommendResponse};
use accabet_service::AppState;
use anyhow::{anyhow, bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::input::{self, single_filter};
use crate::{BacktestArgs, Common, Format, OracleArgs, RecommendArgs, Status};

const BATCH_TIME: f64 = 600.0;
const ORACLE_RUN_TIME: f64 = 5.0;
/// Largest candidate count the oracle enumerates without --force.
const ORACLE_SOFT_LIMIT: usize = 24;
const ORACLE_MAX_LEGS: usize = 12;
const ORACLE_GAP: f64 = 0.05;

fn emit(common: &Common, text: &str) -> Result<()> {
    match &common.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}%", v * 100.0)
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

pub fn recommend(common: &Common, args: &RecommendArgs) -> Result<Status> {
    let dataset = input::load(common)?;
    let filter = single_filter(common)?;
    let params = input::params(common, filter, BATCH_TIME)?;
    let season = &dataset.season;
    let pool = season.pool(args.matchday).ok_or_else(|| {
        let last = season.pools.last().map_or(0, |p| p.matchday);
        anyhow!("no matchday {} in the season (matchdays 1..={last})", args.matchday)
    })?;
    let (efficient, _) = apply_filter(&pool.candidates, filter);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    if args.trace {
        eprintln!("iteration,bookmaker,best_exp,active_fraction");
    }
    let mut trace = |r: &TraceRecord| {
        if args.trace {
            let best = r.best_exp.map_or(String::new(), |e| e.to_string());
            eprintln!("{},{},{best},{}", r.iteration, r.bookmaker, r.active_fraction);
        }
    };
    let outcome = sds_search_traced(&split_by_bookmaker(&efficient), &params, &mut rng, &mut trace)?;
    if args.trace {
        eprintln!("stopped: {:?} after {} iterations in {:.3}s", outcome.reason, outcome.iterations, outcome.elapsed);
    }

    let Some((acc, totals)) = outcome.best else {
        let reason = format!("{:?}", outcome.reason);
        let text = match common.format {
            Format::Table => format!("No bet on matchday {}: {reason}\n", args.matchday),
            Format::Csv => {
                eprintln!("no bet on matchday {}: {reason}", args.matchday);
                format!("{LEG_HEADER}\n")
            }
            Format::Json => json(&RecommendResponse::NoBet { matchday: args.matchday, no_bet: reason })?,
        };
        emit(common, &text)?;
        return Ok(Status::NoBet);
    };
    let kelly = kelly_fraction(totals.prob, totals.odds);
    let va = variance_adjusted_stake(totals.prob, totals.odds);
    let text = match common.format {
        Format::Table => {
            let mut s = String::new();
            let bookmaker = acc.bookmaker().map_or("", BookmakerRef::code);
            writeln!(s, "Matchday {}, bookmaker {bookmaker}, {} legs", args.matchday, acc.len())?;
            writeln!(s, "{:<6} {:<24} {:<24} {:>7} {:>7} {:>8} {:>7}", "League", "Home", "Away", "Outcome", "Odds", "Prob", "Exp")?;
            for leg in acc.legs() {
                let m = leg.match_ref();
                writeln!(
                    s,
                    "{:<6} {:<24} {:<24} {:>7} {:>7.2} {:>8} {:>7.3}",
                    m.league,
                    m.home_team,
                    m.away_team,
                    leg.outcome().code(),
                    leg.odds(),
                    pct(leg.prob()),
                    leg.exp()
                )?;
            }
            writeln!(s, "Accumulator odds {:.2}, probability {}, expected value {:.3}", totals.odds, pct(totals.prob), totals.exp)?;
            writeln!(s, "Stake, conservative Kelly: {} of bankroll", pct(kelly))?;
            writeln!(s, "Stake, variance-adjusted:  {} of bankroll", pct(va))?;
            s
        }
        Format::Csv => legs_csv(&acc),
        Format::Json => json(&RecommendResponse::Bet {
            matchday: args.matchday,
            accumulator: accumulator_view(acc.legs()),
            totals: totals.into(),
            kelly_fraction: kelly,
            variance_adjusted: va,
        })?,
    };
    emit(common, &text)?;
    Ok(Status::Done)
}

const LEG_HEADER: &str = "league,matchday,home_team,away_team,bookmaker,outcome,odds,prob";

fn legs_csv(acc: &Accumulator) -> String {
    let mut s = format!("{LEG_HEADER}\n");
    for leg in acc.legs() {
        let m = leg.match_ref();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            m.league,
            m.matchday,
            m.home_team,
            m.away_team,
            leg.bookmaker(),
            leg.outcome().code(),
            leg.odds(),
            leg.prob()
        );
    }
    s
}

struct BacktestRow {
    combo: StrategyCombo,
    filter: FilterMode,
    ledger: Vec<LedgerEntry>,
    summary: SeasonSummary,
}

impl BacktestRow {
    fn preprocessing(&self) -> &'static str {
        match self.combo.selector {
            Selector::Singles => "N/A",
            Selector::Accumulator => self.filter.label(),
        }
    }
}

#[derive(Serialize)]
struct BacktestJson<'a> {
    combo: &'static str,
    model: &'static str,
    preprocessing: &'static str,
    summary: &'a SeasonSummary,
    final_bankroll: f64,
}

pub fn backtest(common: &Common, args: &BacktestArgs) -> Result<Status> {
    if !(args.initial.is_finite() && args.initial > 0.0) {
        bail!("--initial must be positive");
    }
    let dataset = input::load(common)?;
    let season = &dataset.season;
    let missing = season.missing_matchdays();
    if !missing.is_empty() {
        let list: Vec<String> = missing.iter().map(u32::to_string).collect();
        bail!("season has gaps, missing matchdays: {}", list.join(", "));
    }
    let combos = if args.combo.is_empty() { StrategyCombo::ALL.to_vec() } else { args.combo.clone() };
    let filters = if common.filter.is_empty() { vec![FilterMode::default()] } else { common.filter.clone() };
    let mut plan = Vec::new();
    for combo in combos {
        match combo.selector {
            Selector::Accumulator => plan.extend(filters.iter().map(|&f| (combo, f))),
            Selector::Singles => plan.push((combo, filters[0])),
        }
    }
    let params: Vec<_> = plan.iter().map(|&(_, f)| input::params(common, f, BATCH_TIME)).collect::<Result<_>>()?;

    // Rows share the immutable pools and run side by side.
    let rows: Vec<BacktestRow> = std::thread::scope(|scope| {
        let handles: Vec<_> = plan
            .iter()
            .zip(&params)
            .map(|(&(combo, filter), params)| {
                scope.spawn(move || -> Result<BacktestRow> {
                    let start = Instant::now();
                    let ledger = run_season(&season.pools, combo, params, args.initial)?;
                    eprintln!("{} ({}) finished in {:.1}s", combo.code(), filter, start.elapsed().as_secs_f64());
                    let summary = summarize(&ledger);
                    Ok(BacktestRow { combo, filter, ledger, summary })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("backtest thread panicked")).collect::<Result<_>>()
    })?;

    let opt = |v: Option<f64>, f: fn(f64) -> String| v.map_or("-".to_string(), f);
    let text = match common.format {
        Format::Table => {
            let mut s = String::new();
            writeln!(
                s,
                "{:<34} {:<16} {:>12} {:>19} {:>27} {:>11}",
                "Model", "Preprocessing", "Average odds", "Average probability", "Average stakes per matchday", "Total gains"
            )?;
            for r in &rows {
                let sm = &r.summary;
                writeln!(
                    s,
                    "{:<34} {:<16} {:>12} {:>19} {:>27} {:>11}",
                    r.combo.label(),
                    r.preprocessing(),
                    opt(sm.average_odds, |o| format!("{o:.2}")),
                    opt(sm.average_probability, pct),
                    opt(sm.average_stakes_per_matchday, pct),
                    pct(sm.total_gains)
                )?;
            }
            s
        }
        Format::Csv => {
            let mut s = String::from("model,preprocessing,average_odds,average_probability,average_stakes_per_matchday,average_stake_per_bet,total_gains,bets,winning_bets,matchdays_with_bets\n");
            let num = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
            for r in &rows {
                let sm = &r.summary;
                writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.combo.label(),
                    r.preprocessing(),
                    num(sm.average_odds),
                    num(sm.average_probability),
                    num(sm.average_stakes_per_matchday),
                    num(sm.average_stake_per_bet),
                    sm.total_gains,
                    sm.bet_count,
                    sm.winning_bet_count,
                    sm.matchdays_with_bets
                )?;
            }
            s
        }
        Format::Json => {
            let out: Vec<BacktestJson> = rows
                .iter()
                .map(|r| BacktestJson {
                    combo: r.combo.code(),
                    model: r.combo.label(),
                    preprocessing: r.preprocessing(),
                    summary: &r.summary,
                    final_bankroll: r.ledger.last().map_or(args.initial, |e| e.bankroll_after),
                })
                .collect();
            json(&out)?
        }
    };
    emit(common, &text)?;

    if let Some(path) = &args.gains {
        let mut s = String::from("model,preprocessing,matchday,cumulative_gain\n");
        for r in &rows {
            for (md, g) in cumulative_gains(&r.ledger) {
                writeln!(s, "{},{},{md},{g}", r.combo.label(), r.preprocessing())?;
            }
        }
        std::fs::write(path, s).with_context(|| format!("cannot write {}", path.display()))?;
    }
    if let Some(path) = &args.ledger {
        let mut file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
        for (i, r) in rows.iter().enumerate() {
            let mut buf = Vec::new();
            write_ledger_csv(&r.ledger, r.combo, &mut buf)?;
            // One header for the whole file.
            let body = if i == 0 { &buf[..] } else { &buf[buf.iter().position(|&b| b == b'\n').map_or(0, |p| p + 1)..] };
            file.write_all(body)?;
        }
    }
    Ok(Status::Done)
}

#[derive(Serialize)]
struct ModeAverage {
    mode: FilterMode,
    input_count: f64,
    kept_count: f64,
    reduction: f64,
}

fn averages(rows: &[ReductionRow], modes: &[FilterMode]) -> Vec<ModeAverage> {
    modes
        .iter()
        .map(|&mode| {
            let of_mode: Vec<&ReductionRow> = rows.iter().filter(|r| r.mode == mode).collect();
            let n = of_mode.len().max(1) as f64;
            ModeAverage {
                mode,
                input_count: of_mode.iter().map(|r| r.input_count as f64).sum::<f64>() / n,
                kept_count: of_mode.iter().map(|r| r.kept_count as f64).sum::<f64>() / n,
                reduction: of_mode.iter().map(|r| r.reduction()).sum::<f64>() / n,
            }
        })
        .collect()
}

pub fn filter_stats(common: &Common) -> Result<Status> {
    let dataset = input::load(common)?;
    let modes = if common.filter.is_empty() { FilterMode::ALL.to_vec() } else { common.filter.clone() };
    let rows = reduction_stats(&dataset.season.pools, &modes);
    let means = averages(&rows, &modes);
    let text = match common.format {
        Format::Table => {
            let mut s = format!("{:>8} {:<6} {:>6} {:>6} {:>10}\n", "Matchday", "Mode", "Input", "Kept", "Reduction");
            for r in &rows {
                writeln!(s, "{:>8} {:<6} {:>6} {:>6} {:>10}", r.matchday, r.mode, r.input_count, r.kept_count, pct(r.reduction()))?;
            }
            for m in &means {
                writeln!(s, "{:>8} {:<6} {:>6.1} {:>6.1} {:>10}", "mean", m.mode, m.input_count, m.kept_count, pct(m.reduction))?;
            }
            s
        }
        Format::Csv => {
            let mut s = String::from("matchday,mode,input_count,kept_count,reduction\n");
            for r in &rows {
                writeln!(s, "{},{},{},{},{}", r.matchday, r.mode, r.input_count, r.kept_count, r.reduction())?;
            }
            for m in &means {
                writeln!(s, "mean,{},{},{},{}", m.mode, m.input_count, m.kept_count, m.reduction)?;
            }
            s
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Out<'a> {
                rows: Vec<RowJson<'a>>,
                averages: &'a [ModeAverage],
            }
            #[derive(Serialize)]
            struct RowJson<'a> {
                #[serde(flatten)]
                row: &'a ReductionRow,
                reduction: f64,
            }
            json(&Out { rows: rows.iter().map(|row| RowJson { row, reduction: row.reduction() }).collect(), averages: &means })?
        }
    };
    emit(common, &text)?;
    Ok(Status::Done)
}

/// A single-bookmaker instance with roughly fair odds, three outcomes per match.
fn random_instance(candidates: usize, seed: u64) -> Vec<CandidateBet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(candidates);
    let mut m = 0;
    while out.len() < candidates {
        let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mr = MatchRef::new("R", 1, format!("Home {m}"), format!("Away {m}")).expect("distinct teams");
        for (o, r) in Outcome::ALL.into_iter().zip(raw) {
            if out.len() == candidates {
                break;
            }
            let p = r / total;
            let odds = (rng.random_range(0.8..1.3) / p).max(1.01);
            out.push(CandidateBet::new(mr.clone(), BookmakerRef::new("R"), o, odds, p).expect("valid candidate"));
        }
        m += 1;
    }
    out
}

fn season_instance(common: &Common, args: &OracleArgs) -> Result<(Vec<CandidateBet>, String)> {
    let matchday = args.matchday.context("oracle needs --candidates or --season with --matchday")?;
    let dataset = input::load(common)?;
    let pool = dataset.season.pool(matchday).with_context(|| format!("no matchday {matchday} in the season"))?;
    let filter = single_filter(common)?;
    let mut by_bookmaker = split_by_bookmaker(&apply_filter(&pool.candidates, filter).0);
    let bookmaker = match &args.bookmaker {
        Some(code) => BookmakerRef::new(code.clone()),
        // Most candidates first, then code order.
        None => by_bookmaker
            .iter()
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(a.0)))
            .map(|(b, _)| b.clone())
            .context("matchday has no candidates")?,
    };
    let cands = by_bookmaker.remove(&bookmaker).with_context(|| format!("bookmaker {bookmaker} has no candidates on matchday {matchday}"))?;
    Ok((cands, format!("matchday {matchday}, {bookmaker}, {filter} filter")))
}

#[derive(Serialize)]
struct OracleRun {
    seed: u64,
    exp: Option<f64>,
    gap: Option<f64>,
    met: bool,
}

pub fn oracle(common: &Common, args: &OracleArgs) -> Result<Status> {
    let (cands, source) = match args.candidates {
        Some(0) => bail!("--candidates must be positive"),
        Some(n) => (random_instance(n, args.instance_seed), format!("random instance, seed {}", args.instance_seed)),
        None => season_instance(common, args)?,
    };
    if cands.len() > ORACLE_SOFT_LIMIT && !args.force {
        bail!("oracle limit exceeded: {} candidates, soft limit {ORACLE_SOFT_LIMIT} (use --force to enumerate anyway)", cands.len());
    }
    let pool = BookmakerPool::new(cands.clone())?;
    let max_legs = common.max_legs.unwrap_or(ORACLE_MAX_LEGS).min(ORACLE_MAX_LEGS).min(pool.match_count());
    let subsets = oracle_subset_count(&pool, max_legs);
    if subsets > ORACLE_LIMIT {
        bail!("oracle limit exceeded: {subsets} leg sets, hard limit {ORACLE_LIMIT}");
    }
    let oracle = enumerate_oracle(&cands, common.p_min, max_legs)?;
    let header = format!(
        "{} candidates on {} matches ({source}), p_min {}, at most {max_legs} legs, {} leg sets enumerated",
        cands.len(),
        pool.match_count(),
        common.p_min,
        oracle.evaluated
    );
    let Some((best, opt)) = oracle.best else {
        let text = match common.format {
            Format::Json => json(&serde_json::json!({ "instance": header, "oracle": null }))?,
            _ => format!("{header}\nno accumulator reaches p_min; nothing to compare\n"),
        };
        emit(common, &text)?;
        return Ok(Status::NoBet);
    };
    debug_assert_eq!(accumulator_totals(&best).ok(), Some(opt));

    let filter = single_filter(common)?;
    let mut base = input::params(common, filter, ORACLE_RUN_TIME)?;
    base.min_exp = opt.exp;
    base.max_legs = Some(max_legs);
    let pools = split_by_bookmaker(&cands);
    let mut runs = Vec::new();
    for k in 0..args.runs {
        let seed = common.seed.wrapping_add(k);
        let params = accabet_core::SolverParams { seed, ..base.clone() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = sds_search(&pools, &params, &mut rng)?;
        let exp = out.incumbent.as_ref().map(|(_, t)| t.exp);
        runs.push(OracleRun { seed, exp, gap: exp.map(|e| ((opt.exp - e) / opt.exp).max(0.0)), met: out.best.is_some() });
    }
    let within = runs.iter().filter(|r| r.gap.is_some_and(|g| g <= ORACLE_GAP)).count();
    let gaps: Vec<f64> = runs.iter().map(|r| r.gap.unwrap_or(1.0)).collect();
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len().max(1) as f64;
    let worst_gap = gaps.iter().copied().fold(0.0, f64::max);

    let text = match common.format {
        Format::Table => {
            let mut s = format!("{header}\n");
            writeln!(
                s,
                "Oracle best: exp {:.4}, odds {:.2}, probability {}, {} legs; Pareto front of {} accumulators",
                opt.exp,
                opt.odds,
                pct(opt.prob),
                best.len(),
                oracle.front.len()
            )?;
            writeln!(s, "{:>6} {:>10} {:>8}", "Seed", "Exp", "Gap")?;
            for r in &runs {
                writeln!(s, "{:>6} {:>10} {:>8}", r.seed, r.exp.map_or("-".into(), |e| format!("{e:.4}")), r.gap.map_or("-".into(), pct))?;
            }
            writeln!(
                s,
                "Within {:.0}%: {within}/{} runs; mean gap {}; worst gap {}",
                ORACLE_GAP * 100.0,
                runs.len(),
                pct(mean_gap),
                pct(worst_gap)
            )?;
            s
        }
        Format::Csv => {
            let mut s = String::from("seed,exp,gap,met\n");
            for r in &runs {
                let num = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
                writeln!(s, "{},{},{},{}", r.seed, num(r.exp), num(r.gap), r.met)?;
            }
            s
        }
        Format::Json => json(&serde_json::json!({
            "instance": header,
            "oracle": { "exp": opt.exp, "odds": opt.odds, "prob": opt.prob, "legs": best.len(), "front": oracle.front.len() },
            "runs": runs,
            "within": within,
            "mean_gap": mean_gap,
            "worst_gap": worst_gap,
        }))?,
    };
    emit(common, &text)?;
    Ok(Status::Done)
}

pub fn serve(common: &Common, addr: &str) -> Result<Status> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_ansi(false).init();
    let state = if common.season.is_empty() { AppState::new() } else { AppState::with_dataset(input::load(common)?) };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(accabet_service::serve(addr, state)).with_context(|| format!("cannot serve on {addr}"))?;
    Ok(Status::Done)
}
