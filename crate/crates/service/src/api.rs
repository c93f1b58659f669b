//! Request and response bodies. Money travels as decimal strings with two
//! places; odds and probabilities as plain numbers.

use std::time::Duration;

use accabet_core::backtest::{LedgerEntry, SeasonSummary, Wager};
use accabet_core::domain::{AccumulatorTotals, BookmakerRef, CandidateBet, MatchRef, Outcome, Violation};
use accabet_core::dominance::FilterMode;
use accabet_core::solver::SolverParams;
use accabet_core::staking::BetMoments;
use serde::{Deserialize, Serialize};

/// Parses a nonnegative amount with at most two decimals into cents.
pub fn parse_money(raw: &str) -> Result<i64, String> {
    let bad = || format!("invalid amount {raw:?}: expected a nonnegative decimal with at most two places");
    let s = raw.trim();
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    if whole.is_empty() || !whole.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 2 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let whole: i64 = whole.parse().map_err(|_| bad())?;
    let frac: i64 = format!("{frac:0<2}").parse().map_err(|_| bad())?;
    whole.checked_mul(100).and_then(|w| w.checked_add(frac)).ok_or_else(bad)
}

pub fn format_cents(cents: i64) -> String {
    let sign = if cents < 0 { "-" } else { "" };
    let abs = cents.unsigned_abs();
    format!("{sign}{}.{:02}", abs / 100, abs % 100)
}

pub fn format_money(amount: f64) -> String {
    let s = format!("{amount:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// One accumulator leg, flattened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub league: String,
    pub matchday: u32,
    pub home_team: String,
    pub away_team: String,
    pub bookmaker: String,
    pub outcome: Outcome,
    pub odds: f64,
    pub prob: f64,
}

impl Leg {
    pub fn from_bet(bet: &CandidateBet<f64>) -> Self {
        let m = bet.match_ref();
        Self {
            league: m.league.clone(),
            matchday: m.matchday,
            home_team: m.home_team.clone(),
            away_team: m.away_team.clone(),
            bookmaker: bet.bookmaker().code().to_string(),
            outcome: bet.outcome(),
            odds: bet.odds(),
            prob: bet.prob(),
        }
    }

    pub fn to_bet(&self) -> Result<CandidateBet<f64>, String> {
        let m = MatchRef::new(self.league.clone(), self.matchday, self.home_team.clone(), self.away_team.clone())
            .map_err(|e| e.to_string())?;
        CandidateBet::new(m, BookmakerRef::new(self.bookmaker.clone()), self.outcome, self.odds, self.prob).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Totals {
    pub odds: f64,
    pub prob: f64,
    pub exp: f64,
}

impl From<AccumulatorTotals<f64>> for Totals {
    fn from(t: AccumulatorTotals<f64>) -> Self {
        Self { odds: t.odds, prob: t.prob, exp: t.exp }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub expected_return: f64,
    pub variance: f64,
}

impl From<BetMoments<f64>> for Moments {
    fn from(m: BetMoments<f64>) -> Self {
        Self { expected_return: m.expected_return, variance: m.variance }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadRequest {
    /// Season files or directories of season files.
    pub paths: Vec<String>,
    /// Optional external probability feed; inverse odds otherwise.
    #[serde(default)]
    pub probabilities: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct LoadResponse {
    pub leagues: Vec<String>,
    pub fixtures: usize,
    pub matchdays: usize,
    pub warning_count: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct KeptCounts {
    pub none: usize,
    pub intra: usize,
    pub inter: usize,
}

#[derive(Debug, Serialize)]
pub struct MatchdaySummary {
    pub matchday: u32,
    pub fixtures: usize,
    pub bookmakers: Vec<String>,
    pub candidates: usize,
    pub kept: KeptCounts,
}

#[derive(Debug, Serialize)]
pub struct CandidateView {
    #[serde(flatten)]
    pub leg: Leg,
    pub exp: f64,
    pub kept: bool,
    pub dominated_by: Option<Leg>,
}

#[derive(Debug, Serialize)]
pub struct CandidatesResponse {
    pub matchday: u32,
    pub filter: FilterMode,
    pub candidates: Vec<CandidateView>,
}

#[derive(Debug, Deserialize, Default)]
pub struct FilterQuery {
    pub filter: Option<FilterMode>,
}

/// Solver overrides; anything omitted keeps its default.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsBody {
    pub p_min: Option<f64>,
    pub min_exp: Option<f64>,
    /// Seconds.
    pub max_time: Option<f64>,
    pub population: Option<usize>,
    pub seed: Option<u64>,
    pub max_legs: Option<usize>,
    pub filter: Option<FilterMode>,
    pub max_iterations: Option<u64>,
    /// Set to false to keep searching until the clock runs out even when no
    /// accumulator can reach `min_exp`.
    pub prune_unreachable: Option<bool>,
}

impl ParamsBody {
    /// Builds validated parameters with `max_time` defaulting to and capped at `time_cap`.
    pub fn to_params(&self, default_time: f64, time_cap: f64) -> Result<SolverParams<f64>, String> {
        let d = SolverParams::<f64>::default();
        let secs = self.max_time.unwrap_or(default_time);
        if !(secs.is_finite() && secs > 0.0) {
            return Err("max_time must be a positive number of seconds".into());
        }
        let params = SolverParams {
            p_min: self.p_min.unwrap_or(d.p_min),
            min_exp: self.min_exp.unwrap_or(d.min_exp),
            max_time: Duration::from_secs_f64(secs.min(time_cap)),
            population: self.population.unwrap_or(d.population),
            seed: self.seed.unwrap_or(d.seed),
            max_legs: self.max_legs,
            filter_mode: self.filter.unwrap_or(d.filter_mode),
            max_iterations: self.max_iterations,
            prune_unreachable: self.prune_unreachable.unwrap_or(d.prune_unreachable),
            ..d
        };
        params.validate().map_err(|e| e.to_string())?;
        Ok(params)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    pub matchday: u32,
    #[serde(default)]
    pub params: ParamsBody,
}

#[derive(Debug, Serialize)]
pub struct AccumulatorView {
    pub bookmaker: String,
    pub legs: Vec<Leg>,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum RecommendResponse {
    Bet { matchday: u32, accumulator: AccumulatorView, totals: Totals, kelly_fraction: f64, variance_adjusted: f64 },
    NoBet { matchday: u32, no_bet: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    pub legs: Vec<Leg>,
    #[serde(default)]
    pub bankroll: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct MomentsPair {
    pub accumulator: Moments,
    pub split_singles: Moments,
}

#[derive(Debug, Serialize)]
pub struct WhatIfResponse {
    pub totals: Totals,
    pub kelly_fraction: f64,
    pub variance_adjusted: f64,
    pub moments: MomentsPair,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kelly_stake: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_adjusted_stake: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestRequest {
    pub combo: String,
    #[serde(default)]
    pub params: ParamsBody,
    #[serde(default)]
    pub initial_bankroll: Option<String>,
    /// Stream one JSON line per matchday, then the summary.
    #[serde(default)]
    pub stream: bool,
}

#[derive(Debug, Serialize)]
pub struct WagerView {
    pub accumulator: AccumulatorView,
    pub totals: Totals,
    pub fraction: f64,
    pub amount: String,
    pub won: bool,
    pub net_gain: String,
}

impl From<&Wager<f64>> for WagerView {
    fn from(w: &Wager<f64>) -> Self {
        Self {
            accumulator: accumulator_view(w.target.legs()),
            totals: w.totals.into(),
            fraction: w.fraction,
            amount: format_money(w.amount),
            won: w.won,
            net_gain: format_money(w.net_gain),
        }
    }
}

pub fn accumulator_view(legs: &[CandidateBet<f64>]) -> AccumulatorView {
    AccumulatorView {
        bookmaker: legs.first().map(|l| l.bookmaker().code().to_string()).unwrap_or_default(),
        legs: legs.iter().map(Leg::from_bet).collect(),
    }
}

#[derive(Debug, Serialize)]
pub struct LedgerView {
    pub matchday: u32,
    pub wagers: Vec<WagerView>,
    pub no_bet: Option<String>,
    pub net_gain: String,
    pub bankroll: String,
    pub staking_base: String,
    /// Gains so far as a share of the initial bankroll.
    pub cumulative_gains: f64,
}

impl LedgerView {
    pub fn new(e: &LedgerEntry<f64>, initial: f64) -> Self {
        Self {
            matchday: e.matchday,
            wagers: e.wagers.iter().map(WagerView::from).collect(),
            no_bet: e.no_bet.map(|r| format!("{r:?}")),
            net_gain: format_money(e.net_gain),
            bankroll: format_money(e.bankroll_after),
            staking_base: format_money(e.staking_base_after),
            cumulative_gains: (e.bankroll_after - initial) / initial,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SummaryView {
    pub average_odds: Option<f64>,
    pub average_probability: Option<f64>,
    pub average_stakes_per_matchday: Option<f64>,
    pub average_stake_per_bet: Option<f64>,
    pub total_gains: f64,
    pub winning_bet_count: usize,
    pub bet_count: usize,
    pub matchdays_with_bets: usize,
    pub final_bankroll: String,
}

impl SummaryView {
    pub fn new(s: &SeasonSummary<f64>, final_bankroll: f64) -> Self {
        Self {
            average_odds: s.average_odds,
            average_probability: s.average_probability,
            average_stakes_per_matchday: s.average_stakes_per_matchday,
            average_stake_per_bet: s.average_stake_per_bet,
            total_gains: s.total_gains,
            winning_bet_count: s.winning_bet_count,
            bet_count: s.bet_count,
            matchdays_with_bets: s.matchdays_with_bets,
            final_bankroll: format_money(final_bankroll),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct BacktestResponse {
    pub combo: String,
    pub summary: SummaryView,
    pub ledger: Vec<LedgerView>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewSessionRequest {
    pub bankroll: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordWagerRequest {
    pub legs: Vec<Leg>,
    pub amount: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionEntry {
    pub matchday: Option<u32>,
    pub legs: Vec<Leg>,
    pub amount: String,
    pub won: Option<bool>,
    pub net_gain: String,
    pub bankroll: String,
    pub staking_base: String,
}

#[derive(Debug, Serialize)]
pub struct SessionView {
    pub token: String,
    pub initial_bankroll: String,
    pub bankroll: String,
    pub staking_base: String,
    pub entries: Vec<SessionEntry>,
}
