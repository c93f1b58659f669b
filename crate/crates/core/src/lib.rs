//! Accumulator bet selection and season backtesting.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`, which is what the CLI and the HTTP
//! service use.

pub mod backtest;
pub mod domain;
pub mod dominance;
pub mod ingest;
pub mod scalar;
pub mod solver;
pub mod staking;

pub use domain::{BookmakerRef, DomainError, MatchRef, Outcome, Violation};
pub use dominance::FilterMode;
pub use scalar::Real;

pub type CandidateBet = domain::CandidateBet<f64>;
pub type Accumulator = domain::Accumulator<f64>;
pub type AccumulatorTotals = domain::AccumulatorTotals<f64>;
pub type FixtureRecord = ingest::FixtureRecord<f64>;
pub type ProbabilityTriple = ingest::ProbabilityTriple<f64>;
pub type MatchdayPool = ingest::MatchdayPool<f64>;
pub type Season = ingest::Season<f64>;
pub type ReductionReport = dominance::ReductionReport<f64>;
pub type SolverParams = solver::SolverParams<f64>;
pub type SearchOutcome = solver::SearchOutcome<f64>;
pub type BetMoments = staking::BetMoments<f64>;
pub type StakePlan = staking::StakePlan<f64>;
pub type LedgerEntry = backtest::LedgerEntry<f64>;
pub type SeasonSummary = backtest::SeasonSummary<f64>;
