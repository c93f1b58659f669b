//! Matchday-by-matchday season replay with settlement and a bankroll ledger.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Accumulator, AccumulatorTotals, MatchRef, Outcome};
use crate::dominance::{apply_filter, split_by_bookmaker};
use crate::ingest::MatchdayPool;
use crate::scalar::Real;
use crate::solver::{sds_search, SolverError, SolverParams, StopReason};
use crate::staking::{KellyVariant, StakePlan, StakingStrategy};

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("no result for match {0:?}")]
    MissingResult(MatchRef),
    #[error("unknown strategy combination {0:?} (expected acc-kelly, acc-va, singles-kelly or singles-va)")]
    UnknownCombo(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Selector {
    Accumulator,
    Singles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StrategyCombo {
    pub selector: Selector,
    pub sizing: StakingStrategy,
}

impl StrategyCombo {
    pub const ALL: [StrategyCombo; 4] = [
        StrategyCombo { selector: Selector::Accumulator, sizing: StakingStrategy::ConservativeKelly },
        StrategyCombo { selector: Selector::Accumulator, sizing: StakingStrategy::VarianceAdjusted },
        StrategyCombo { selector: Selector::Singles, sizing: StakingStrategy::ConservativeKelly },
        StrategyCombo { selector: Selector::Singles, sizing: StakingStrategy::VarianceAdjusted },
    ];

    pub fn code(self) -> &'static str {
        match (self.selector, self.sizing) {
            (Selector::Accumulator, StakingStrategy::ConservativeKelly) => "acc-kelly",
            (Selector::Accumulator, StakingStrategy::VarianceAdjusted) => "acc-va",
            (Selector::Singles, StakingStrategy::ConservativeKelly) => "singles-kelly",
            (Selector::Singles, StakingStrategy::VarianceAdjusted) => "singles-va",
        }
    }

    /// Human-readable model name for reports.
    pub fn label(self) -> &'static str {
        match (self.selector, self.sizing) {
            (Selector::Accumulator, StakingStrategy::ConservativeKelly) => "Accumulator + Kelly",
            (Selector::Accumulator, StakingStrategy::VarianceAdjusted) => "Accumulator + variance-adjusted",
            (Selector::Singles, StakingStrategy::ConservativeKelly) => "Singles + Kelly",
            (Selector::Singles, StakingStrategy::VarianceAdjusted) => "Singles + variance-adjusted",
        }
    }
}

impl fmt::Display for StrategyCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for StrategyCombo {
    type Err = BacktestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| BacktestError::UnknownCombo(s.to_string()))
    }
}

/// Net gain of staking `amount` on `acc`: `amount * (odds - 1)` if every leg won, else `-amount`.
pub fn settle<T: Real>(acc: &Accumulator<T>, results: &BTreeMap<MatchRef, Outcome>, amount: T) -> Result<T, BacktestError> {
    let won = legs_won(acc, results)?;
    if amount == T::zero() {
        return Ok(T::zero());
    }
    Ok(if won {
        let odds = acc.totals().map_err(SolverError::from)?.odds;
        amount * (odds - T::one())
    } else {
        -amount
    })
}

fn legs_won<T: Real>(acc: &Accumulator<T>, results: &BTreeMap<MatchRef, Outcome>) -> Result<bool, BacktestError> {
    let mut won = true;
    for leg in acc.legs() {
        let result = results.get(leg.match_ref()).ok_or_else(|| BacktestError::MissingResult(leg.match_ref().clone()))?;
        won &= *result == leg.outcome();
    }
    Ok(won)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Wager<T> {
    pub target: Accumulator<T>,
    pub totals: AccumulatorTotals<T>,
    /// Share of the staking base before the matchday.
    pub fraction: T,
    pub amount: T,
    pub won: bool,
    pub net_gain: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerEntry<T> {
    pub matchday: u32,
    pub wagers: Vec<Wager<T>>,
    /// Why the accumulator search placed no bet, when it did not.
    pub no_bet: Option<StopReason>,
    pub net_gain: T,
    pub bankroll_before: T,
    pub bankroll_after: T,
    pub staking_base_before: T,
    pub staking_base_after: T,
}

/// Season replay options beyond the solver parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BacktestOptions {
    pub kelly_variant: KellyVariant,
}

/// Replays the season with the default Kelly variant.
pub fn run_season<T: Real>(
    pools: &[MatchdayPool<T>],
    combo: StrategyCombo,
    params: &SolverParams<T>,
    initial_bankroll: T,
) -> Result<Vec<LedgerEntry<T>>, BacktestError> {
    run_season_with(pools, combo, params, initial_bankroll, BacktestOptions::default(), &mut |_| {})
}

/// Replays `pools` in order and reports each ledger entry as soon as it is settled.
///
/// Stakes are fractions of the staking base, which starts at the initial
/// bankroll and after every matchday becomes `min(base, bankroll)`, so gains
/// never raise it. Each matchday's search uses a generator derived from the
/// seed and the matchday number only.
pub fn run_season_with<T: Real>(
    pools: &[MatchdayPool<T>],
    combo: StrategyCombo,
    params: &SolverParams<T>,
    initial_bankroll: T,
    options: BacktestOptions,
    progress: &mut dyn FnMut(&LedgerEntry<T>),
) -> Result<Vec<LedgerEntry<T>>, BacktestError> {
    params.validate()?;
    let mut bankroll = initial_bankroll;
    let mut base = initial_bankroll;
    let mut ledger = Vec::with_capacity(pools.len());
    for pool in pools {
        let (efficient, _) = apply_filter(&pool.candidates, params.filter_mode);
        let mut no_bet = None;
        let targets = match combo.selector {
            Selector::Singles => efficient.into_iter().map(Accumulator::single).collect(),
            Selector::Accumulator => {
                let mut rng = matchday_rng(params.seed, pool.matchday);
                let outcome = sds_search(&split_by_bookmaker(&efficient), params, &mut rng)?;
                match outcome.best {
                    Some((acc, _)) => vec![acc],
                    None => {
                        no_bet = Some(outcome.reason);
                        Vec::new()
                    }
                }
            }
        };
        let plan = StakePlan::build(combo.sizing, options.kelly_variant, targets);
        let mut wagers = Vec::with_capacity(plan.stakes.len());
        let mut net = T::zero();
        for (target, fraction) in plan.stakes {
            let amount = fraction * base;
            let won = legs_won(&target, &pool.results)?;
            let net_gain = settle(&target, &pool.results, amount)?;
            let totals = target.totals().map_err(SolverError::from)?;
            net = net + net_gain;
            wagers.push(Wager { target, totals, fraction, amount, won, net_gain });
        }
        let entry = LedgerEntry {
            matchday: pool.matchday,
            wagers,
            no_bet,
            net_gain: net,
            bankroll_before: bankroll,
            bankroll_after: bankroll + net,
            staking_base_before: base,
            staking_base_after: base.min(bankroll + net),
        };
        bankroll = entry.bankroll_after;
        base = entry.staking_base_after;
        progress(&entry);
        ledger.push(entry);
    }
    Ok(ledger)
}

pub fn matchday_rng(seed: u64, matchday: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ u64::from(matchday).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Season statistics; averages are `None` when no bet was placed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeasonSummary<T> {
    /// Mean combined odds per wager.
    pub average_odds: Option<T>,
    pub average_probability: Option<T>,
    /// Mean over betting matchdays of the summed stake fractions.
    pub average_stakes_per_matchday: Option<T>,
    /// Mean stake fraction per wager.
    pub average_stake_per_bet: Option<T>,
    /// `(final - initial) / initial`.
    pub total_gains: T,
    pub winning_bet_count: usize,
    pub bet_count: usize,
    pub matchdays_with_bets: usize,
}

pub fn summarize<T: Real>(ledger: &[LedgerEntry<T>]) -> SeasonSummary<T> {
    let wagers: Vec<&Wager<T>> = ledger.iter().flat_map(|e| &e.wagers).collect();
    let betting_days: Vec<&LedgerEntry<T>> = ledger.iter().filter(|e| !e.wagers.is_empty()).collect();
    let mean = |values: Vec<T>| -> Option<T> {
        let n = T::from_usize(values.len())?;
        (!values.is_empty()).then(|| values.into_iter().fold(T::zero(), |a, b| a + b) / n)
    };
    let total_gains = match (ledger.first(), ledger.last()) {
        (Some(first), Some(last)) if first.bankroll_before != T::zero() => {
            (last.bankroll_after - first.bankroll_before) / first.bankroll_before
        }
        _ => T::zero(),
    };
    SeasonSummary {
        average_odds: mean(wagers.iter().map(|w| w.totals.odds).collect()),
        average_probability: mean(wagers.iter().map(|w| w.totals.prob).collect()),
        average_stakes_per_matchday: mean(
            betting_days.iter().map(|e| e.wagers.iter().fold(T::zero(), |s, w| s + w.fraction)).collect(),
        ),
        average_stake_per_bet: mean(wagers.iter().map(|w| w.fraction).collect()),
        total_gains,
        winning_bet_count: wagers.iter().filter(|w| w.won).count(),
        bet_count: wagers.len(),
        matchdays_with_bets: betting_days.len(),
    }
}

/// `(matchday, gains as a share of the initial bankroll)` after each matchday.
pub fn cumulative_gains<T: Real>(ledger: &[LedgerEntry<T>]) -> Vec<(u32, T)> {
    let Some(initial) = ledger.first().map(|e| e.bankroll_before) else {
        return Vec::new();
    };
    ledger.iter().map(|e| (e.matchday, (e.bankroll_after - initial) / initial)).collect()
}

/// Writes one row per wager, and one zero-stake row for matchdays without a bet.
pub fn write_ledger_csv<T: Real, W: Write>(ledger: &[LedgerEntry<T>], combo: StrategyCombo, out: W) -> Result<(), BacktestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["matchday", "strategy", "stake", "odds", "prob", "won", "net_gain", "bankroll"])?;
    for e in ledger {
        let md = e.matchday.to_string();
        let bankroll = e.bankroll_after.to_string();
        if e.wagers.is_empty() {
            w.write_record([md.as_str(), combo.code(), "0", "", "", "", "0", bankroll.as_str()])?;
        }
        for wager in &e.wagers {
            w.write_record([
                md.clone(),
                combo.code().to_string(),
                wager.amount.to_string(),
                wager.totals.odds.to_string(),
                wager.totals.prob.to_string(),
                wager.won.to_string(),
                wager.net_gain.to_string(),
                bankroll.clone(),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
