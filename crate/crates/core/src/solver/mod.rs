//! Accumulator search: stochastic diffusion over per-bookmaker populations,
//! relaxation seeding and an exhaustive oracle for small instances.

mod oracle;
mod pool;
mod relax;
mod sds;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::domain::{Accumulator, AccumulatorTotals, BookmakerRef, CandidateBet, DomainError};
use crate::dominance::FilterMode;
use crate::scalar::Real;

pub use oracle::{enumerate_oracle, oracle_subset_count, OracleResult, ORACLE_LIMIT};
pub use pool::BookmakerPool;
pub use relax::{ln_exp_upper_bound, relaxed_initialization};
pub use sds::{diffusion_phase, judge, neighbor_legs, neighborhood_move, random_legs, test_phase, Agent, Status, REINIT_LEGS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),
    #[error("empty candidate pool")]
    EmptyPool,
    #[error("candidates from more than one bookmaker")]
    MixedBookmakers,
    #[error("accumulator leg is not in the candidate pool")]
    LegNotInPool,
    #[error("oracle limit exceeded")]
    OracleLimitExceeded,
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Search configuration. Defaults: `p_min` 0.25, `min_exp` 2, ten minutes, 50 agents.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams<T> {
    pub p_min: T,
    pub min_exp: T,
    pub max_time: Duration,
    pub population: usize,
    pub seed: u64,
    pub max_legs: Option<usize>,
    pub filter_mode: FilterMode,
    /// Optional cap on search rounds, for reproducible runs independent of wall time.
    pub max_iterations: Option<u64>,
    /// Worker threads for the per-bookmaker populations.
    pub threads: usize,
    /// Skip bookmakers whose candidates provably cannot reach `min_exp`.
    pub prune_unreachable: bool,
}

impl<T: Real> Default for SolverParams<T> {
    fn default() -> Self {
        Self {
            p_min: T::lit(0.25),
            min_exp: T::lit(2.0),
            max_time: Duration::from_secs(600),
            population: 50,
            seed: 0,
            max_legs: None,
            filter_mode: FilterMode::Intra,
            max_iterations: None,
            threads: 1,
            prune_unreachable: true,
        }
    }
}

impl<T: Real> SolverParams<T> {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: &str| Err(SolverError::InvalidParams(msg.to_string()));
        if !(self.p_min > T::zero() && self.p_min < T::one()) {
            return bad("p_min must lie strictly between 0 and 1");
        }
        if !(self.min_exp >= T::zero()) || !self.min_exp.is_finite() {
            return bad("min_exp must be a finite nonnegative number");
        }
        if self.max_time.is_zero() {
            return bad("max_time must be positive");
        }
        if self.population < 2 {
            return bad("population must be at least 2");
        }
        if self.max_legs == Some(0) {
            return bad("max_legs must be at least 1");
        }
        if self.threads == 0 {
            return bad("threads must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    MetThreshold,
    TimedOut,
    /// Every bookmaker's bound rules out reaching `min_exp` at `p_min`.
    Unreachable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome<T> {
    /// Present exactly when `reason` is `MetThreshold`.
    pub best: Option<(Accumulator<T>, AccumulatorTotals<T>)>,
    /// Highest expected value seen among hypotheses with `prob >= p_min`.
    pub incumbent: Option<(Accumulator<T>, AccumulatorTotals<T>)>,
    pub iterations: u64,
    pub elapsed: f64,
    pub reason: StopReason,
}

/// One line of the convergence trace, emitted per bookmaker and iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: u64,
    pub bookmaker: String,
    pub best_exp: Option<f64>,
    pub active_fraction: f64,
}

/// Iterations without a better incumbent before a population is reseeded.
const STAGNATION_LIMIT: u64 = 50;

struct PopulationSearch<T> {
    pool: BookmakerPool<T>,
    agents: Vec<Agent<T>>,
    rng: ChaCha8Rng,
    incumbent: Option<(Vec<usize>, AccumulatorTotals<T>)>,
    max_prob: T,
    /// Iterations since the incumbent last improved.
    stale: u64,
}

impl<T: Real> PopulationSearch<T> {
    fn new(pool: BookmakerPool<T>, seed: u64) -> Self {
        let max_prob = pool.candidates().iter().map(|c| c.prob()).fold(T::zero(), T::max);
        Self { pool, agents: Vec::new(), rng: ChaCha8Rng::seed_from_u64(seed), incumbent: None, max_prob, stale: 0 }
    }

    /// Probability bound drawn log-uniformly from `[p_min, max_prob]`.
    fn random_bound(&mut self, p_min: T) -> T {
        if self.max_prob <= p_min {
            return p_min;
        }
        let (lo, hi) = (p_min.ln().to_f64_lossy(), self.max_prob.ln().to_f64_lossy());
        T::lit(self.rng.random_range(lo..=hi).exp())
    }

    fn seed_population(&mut self, params: &SolverParams<T>, keep_first: bool) {
        let cap = params.max_legs.map_or(self.pool.match_count(), |c| c.min(self.pool.match_count()));
        let mut agents = Vec::with_capacity(params.population);
        for i in 0..params.population {
            let legs = if i == 0 && keep_first {
                relax::relaxed_legs(&self.pool, params.p_min, params.max_legs, &mut self.rng)
            } else if self.rng.random::<bool>() {
                let bound = self.random_bound(params.p_min);
                relax::relaxed_legs(&self.pool, bound, params.max_legs, &mut self.rng)
            } else {
                let k = self.rng.random_range(1..=cap);
                random_legs(&self.pool, k, &mut self.rng)
            };
            agents.push(Agent::new(&self.pool, legs));
        }
        self.agents = agents;
    }

    /// Returns whether the incumbent improved.
    fn record(&mut self, p_min: T) -> bool {
        let mut improved = false;
        for a in &self.agents {
            let t = *a.totals();
            let better = match &self.incumbent {
                None => true,
                Some((_, best)) => t.exp > best.exp,
            };
            if t.prob >= p_min && better {
                self.incumbent = Some((a.legs().to_vec(), t));
                improved = true;
            }
        }
        improved
    }

    fn step(&mut self, params: &SolverParams<T>, first: bool) {
        if first {
            self.seed_population(params, true);
        } else {
            test_phase(&mut self.agents, params.p_min, &mut self.rng);
            let changed = diffusion_phase(&mut self.agents, &self.pool, params.max_legs, &mut self.rng);
            if changed == 0 || self.stale >= STAGNATION_LIMIT {
                self.seed_population(params, false);
                self.stale = 0;
            }
        }
        if self.record(params.p_min) {
            self.stale = 0;
        } else {
            self.stale += 1;
        }
    }

    fn active_fraction(&self) -> f64 {
        let active = self.agents.iter().filter(|a| a.status == Status::Active).count();
        active as f64 / self.agents.len().max(1) as f64
    }

    fn met(&self, min_exp: T) -> bool {
        self.incumbent.as_ref().is_some_and(|(_, t)| t.exp >= min_exp)
    }
}

/// Runs [`sds_search_traced`] without a trace sink.
pub fn sds_search<T: Real, R: Rng + ?Sized>(
    pools: &BTreeMap<BookmakerRef, Vec<CandidateBet<T>>>,
    params: &SolverParams<T>,
    rng: &mut R,
) -> Result<SearchOutcome<T>, SolverError> {
    sds_search_traced(pools, params, rng, &mut |_| {})
}

/// Searches every bookmaker's candidates for an accumulator with `prob >= p_min`
/// and `exp >= min_exp`.
///
/// Populations are advanced round-robin, one iteration each per round, under a
/// shared wall clock. Candidate lists are used as given, so any dominance
/// filtering happens before the call. Each population draws from its own
/// generator seeded from `rng`, so results do not depend on `threads`.
pub fn sds_search_traced<T: Real, R: Rng + ?Sized>(
    pools: &BTreeMap<BookmakerRef, Vec<CandidateBet<T>>>,
    params: &SolverParams<T>,
    rng: &mut R,
    trace: &mut dyn FnMut(&TraceRecord),
) -> Result<SearchOutcome<T>, SolverError> {
    params.validate()?;
    let start = Instant::now();
    let mut searches = Vec::new();
    let mut any_pool = false;
    for cands in pools.values() {
        if cands.is_empty() {
            continue;
        }
        any_pool = true;
        let pool = BookmakerPool::new(cands.clone())?;
        let seed = rng.random::<u64>();
        if params.prune_unreachable && unreachable(&pool, params) {
            continue;
        }
        searches.push(PopulationSearch::new(pool, seed));
    }
    let finish = |searches: &[PopulationSearch<T>], iterations: u64, reason: StopReason| {
        let incumbent = searches
            .iter()
            .filter_map(|s| s.incumbent.as_ref().map(|(legs, t)| (s, legs, *t)))
            .reduce(|a, b| if b.2.exp > a.2.exp { b } else { a })
            .map(|(s, legs, t)| (s.pool.accumulator(legs), t));
        let best = match reason {
            StopReason::MetThreshold => incumbent.clone(),
            _ => None,
        };
        SearchOutcome { best, incumbent, iterations, elapsed: start.elapsed().as_secs_f64(), reason }
    };
    if !any_pool {
        return Ok(SearchOutcome { best: None, incumbent: None, iterations: 0, elapsed: 0.0, reason: StopReason::TimedOut });
    }
    if searches.is_empty() {
        return Ok(finish(&searches, 0, StopReason::Unreachable));
    }

    let workers = if params.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(params.threads)
                .build()
                .map_err(|e| SolverError::InvalidParams(e.to_string()))?,
        )
    } else {
        None
    };
    let mut iteration = 0u64;
    loop {
        let first = iteration == 0;
        iteration += 1;
        match &workers {
            Some(w) => w.install(|| searches.par_iter_mut().for_each(|s| s.step(params, first))),
            None => searches.iter_mut().for_each(|s| s.step(params, first)),
        }
        for s in &searches {
            trace(&TraceRecord {
                iteration,
                bookmaker: s.pool.bookmaker().code().to_string(),
                best_exp: s.incumbent.as_ref().map(|(_, t)| t.exp.to_f64_lossy()),
                active_fraction: s.active_fraction(),
            });
        }
        if searches.iter().any(|s| s.met(params.min_exp)) {
            let met: Vec<PopulationSearch<T>> = searches.into_iter().filter(|s| s.met(params.min_exp)).collect();
            return Ok(finish(&met, iteration, StopReason::MetThreshold));
        }
        let out_of_rounds = params.max_iterations.is_some_and(|n| iteration >= n);
        if out_of_rounds || start.elapsed() >= params.max_time {
            return Ok(finish(&searches, iteration, StopReason::TimedOut));
        }
    }
}

fn unreachable<T: Real>(pool: &BookmakerPool<T>, params: &SolverParams<T>) -> bool {
    let bound = ln_exp_upper_bound(pool, params.p_min);
    // Small slack so rounding in the bound never prunes a reachable target.
    bound == T::neg_infinity() || bound + T::lit(1e-9) < params.min_exp.ln()
}
