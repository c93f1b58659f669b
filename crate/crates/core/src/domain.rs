//! Matches, bookmakers, candidate bets and accumulators.
//!
//! A [`CandidateBet`] is one (match, bookmaker, outcome) wager, i.e. one binary
//! decision variable of the selection program. An [`Accumulator`] is a set of
//! candidate bets placed together; it is feasible when every leg is on a
//! different match and all legs share one bookmaker.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{log_product, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("empty accumulator")]
    EmptyAccumulator,
    #[error("odds must be greater than 1.0, got {0}")]
    InvalidOdds(f64),
    #[error("probability must lie strictly inside (0, 1), got {0}")]
    InvalidProbability(f64),
    #[error("a team cannot play itself: {0}")]
    SameTeams(String),
    #[error("matchday must be positive")]
    InvalidMatchday,
    #[error("unknown outcome {0:?}, expected H, D or A")]
    UnknownOutcome(String),
    #[error("infeasible accumulator: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Infeasible(Vec<Violation>),
}

/// Full-time result of a match. The ordering is only used for deterministic iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "H")]
    Home,
    #[serde(rename = "D")]
    Draw,
    #[serde(rename = "A")]
    Away,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::Home, Outcome::Draw, Outcome::Away];

    pub fn code(self) -> char {
        match self {
            Outcome::Home => 'H',
            Outcome::Draw => 'D',
            Outcome::Away => 'A',
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

impl FromStr for Outcome {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "H" | "h" | "1" => Ok(Outcome::Home),
            "D" | "d" | "X" | "x" => Ok(Outcome::Draw),
            "A" | "a" | "2" => Ok(Outcome::Away),
            other => Err(DomainError::UnknownOutcome(other.to_string())),
        }
    }
}

/// One fixture of a league round.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MatchRef {
    pub league: String,
    pub matchday: u32,
    pub home_team: String,
    pub away_team: String,
}

impl MatchRef {
    pub fn new(
        league: impl Into<String>,
        matchday: u32,
        home_team: impl Into<String>,
        away_team: impl Into<String>,
    ) -> Result<Self, DomainError> {
        let home_team = home_team.into();
        let away_team = away_team.into();
        if matchday == 0 {
            return Err(DomainError::InvalidMatchday);
        }
        if home_team == away_team {
            return Err(DomainError::SameTeams(home_team));
        }
        Ok(Self { league: league.into(), matchday, home_team, away_team })
    }
}

impl fmt::Display for MatchRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} md{} {} v {}", self.league, self.matchday, self.home_team, self.away_team)
    }
}

/// Bookmaker code as used in the odds column prefixes (B365, BW, ...).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BookmakerRef(pub String);

impl BookmakerRef {
    pub fn new(code: impl Into<String>) -> Self {
        Self(code.into())
    }

    pub fn code(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BookmakerRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A single wager on one outcome of one match at one bookmaker.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateBet<T> {
    #[serde(rename = "match")]
    match_ref: MatchRef,
    bookmaker: BookmakerRef,
    outcome: Outcome,
    odds: T,
    prob: T,
}

impl<T: Real> CandidateBet<T> {
    pub fn new(
        match_ref: MatchRef,
        bookmaker: BookmakerRef,
        outcome: Outcome,
        odds: T,
        prob: T,
    ) -> Result<Self, DomainError> {
        // `!(x > 1)` also rejects NaN.
        if !(odds > T::one()) || !odds.is_finite() {
            return Err(DomainError::InvalidOdds(odds.to_f64_lossy()));
        }
        if !(prob > T::zero() && prob < T::one()) {
            return Err(DomainError::InvalidProbability(prob.to_f64_lossy()));
        }
        Ok(Self { match_ref, bookmaker, outcome, odds, prob })
    }

    pub fn match_ref(&self) -> &MatchRef {
        &self.match_ref
    }

    pub fn bookmaker(&self) -> &BookmakerRef {
        &self.bookmaker
    }

    pub fn outcome(&self) -> Outcome {
        self.outcome
    }

    pub fn odds(&self) -> T {
        self.odds
    }

    pub fn prob(&self) -> T {
        self.prob
    }

    /// Expected return per unit staked.
    pub fn exp(&self) -> T {
        self.odds * self.prob
    }

    /// Identity of the decision variable: (bookmaker, match, outcome).
    pub fn key(&self) -> (&BookmakerRef, &MatchRef, Outcome) {
        (&self.bookmaker, &self.match_ref, self.outcome)
    }
}

impl<T: fmt::Display> fmt::Display for CandidateBet<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} @{} {} (p={})",
            self.match_ref, self.outcome, self.bookmaker, self.odds, self.prob
        )
    }
}

/// A breached constraint of the selection program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// No legs at all.
    Empty,
    /// More than one leg on the same match.
    ConflictingOutcomes { match_ref: MatchRef, outcomes: Vec<Outcome> },
    /// Legs spread over several bookmakers.
    MixedBookmakers { bookmakers: Vec<BookmakerRef> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => f.write_str("empty accumulator"),
            Violation::ConflictingOutcomes { match_ref, outcomes } => {
                let codes: String = outcomes.iter().map(|o| o.code()).collect();
                write!(f, "conflicting outcomes {codes} on {match_ref}")
            }
            Violation::MixedBookmakers { bookmakers } => {
                let codes: Vec<&str> = bookmakers.iter().map(BookmakerRef::code).collect();
                write!(f, "mixed bookmakers {}", codes.join(","))
            }
        }
    }
}

/// A set of legs meant to be wagered as one bet.
///
/// [`Accumulator::new`] only admits feasible leg sets; [`Accumulator::from_legs_unchecked`]
/// exists so that arbitrary selections can be inspected with [`validate_accumulator`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Accumulator<T> {
    legs: Vec<CandidateBet<T>>,
}

impl<T: Real> Accumulator<T> {
    pub fn new(legs: Vec<CandidateBet<T>>) -> Result<Self, DomainError> {
        let acc = Self { legs };
        let violations = validate_accumulator(&acc);
        if violations.is_empty() {
            Ok(acc)
        } else if violations == [Violation::Empty] {
            Err(DomainError::EmptyAccumulator)
        } else {
            Err(DomainError::Infeasible(violations))
        }
    }

    pub fn from_legs_unchecked(legs: Vec<CandidateBet<T>>) -> Self {
        Self { legs }
    }

    pub fn single(bet: CandidateBet<T>) -> Self {
        Self { legs: vec![bet] }
    }

    pub fn legs(&self) -> &[CandidateBet<T>] {
        &self.legs
    }

    pub fn len(&self) -> usize {
        self.legs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.legs.is_empty()
    }

    /// Bookmaker of the first leg; all legs share it when the accumulator is feasible.
    pub fn bookmaker(&self) -> Option<&BookmakerRef> {
        self.legs.first().map(CandidateBet::bookmaker)
    }

    pub fn totals(&self) -> Result<AccumulatorTotals<T>, DomainError> {
        accumulator_totals(self)
    }
}

/// Payout multiplier, win probability and expected value of an accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccumulatorTotals<T> {
    pub odds: T,
    pub prob: T,
    pub exp: T,
}

impl<T: Real> AccumulatorTotals<T> {
    /// `true` if `self` is no better than `other` on both odds and probability and
    /// strictly worse on at least one.
    pub fn dominated_by(&self, other: &Self) -> bool {
        self.odds <= other.odds
            && self.prob <= other.prob
            && (self.odds < other.odds || self.prob < other.prob)
    }
}

/// Product of leg odds and leg probabilities, evaluated in log space.
pub fn accumulator_totals<T: Real>(acc: &Accumulator<T>) -> Result<AccumulatorTotals<T>, DomainError> {
    if acc.is_empty() {
        return Err(DomainError::EmptyAccumulator);
    }
    Ok(totals_from_parts(
        acc.legs.iter().map(CandidateBet::odds),
        acc.legs.iter().map(CandidateBet::prob),
    ))
}

/// Shared by every route that evaluates a leg set so that equal sets give equal totals.
pub(crate) fn totals_from_parts<T: Real>(
    odds: impl IntoIterator<Item = T>,
    probs: impl IntoIterator<Item = T>,
) -> AccumulatorTotals<T> {
    let odds = log_product(odds);
    let prob = log_product(probs);
    AccumulatorTotals { odds, prob, exp: odds * prob }
}

/// Lists every breached constraint; an empty list means the accumulator is feasible.
pub fn validate_accumulator<T: Real>(acc: &Accumulator<T>) -> Vec<Violation> {
    if acc.legs.is_empty() {
        return vec![Violation::Empty];
    }
    let mut violations = Vec::new();

    let mut by_match: BTreeMap<&MatchRef, Vec<Outcome>> = BTreeMap::new();
    for leg in &acc.legs {
        by_match.entry(&leg.match_ref).or_default().push(leg.outcome);
    }
    for (match_ref, mut outcomes) in by_match {
        if outcomes.len() > 1 {
            outcomes.sort();
            violations.push(Violation::ConflictingOutcomes { match_ref: match_ref.clone(), outcomes });
        }
    }

    let mut bookmakers: Vec<BookmakerRef> = acc.legs.iter().map(|l| l.bookmaker.clone()).collect();
    bookmakers.sort();
    bookmakers.dedup();
    if bookmakers.len() > 1 {
        violations.push(Violation::MixedBookmakers { bookmakers });
    }
    violations
}
