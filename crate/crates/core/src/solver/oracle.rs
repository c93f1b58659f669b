//! Exhaustive enumeration of accumulators for small single-bookmaker instances.

use crate::domain::{Accumulator, AccumulatorTotals, CandidateBet};
use crate::dominance::pareto_frontier;
use crate::scalar::Real;

use super::pool::BookmakerPool;
use super::SolverError;

/// Largest number of leg sets the oracle will enumerate.
pub const ORACLE_LIMIT: u128 = 1 << 24;

/// Largest accumulator size the oracle accepts.
pub const ORACLE_MAX_LEGS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<T> {
    /// Highest expected value with `prob >= p_min`; the first found wins ties.
    pub best: Option<(Accumulator<T>, AccumulatorTotals<T>)>,
    /// Every accumulator not dominated in (odds, prob), by descending odds.
    pub front: Vec<(Accumulator<T>, AccumulatorTotals<T>)>,
    pub evaluated: u64,
}

/// Number of nonempty leg sets with at most `max_legs` legs and one leg per match.
pub fn oracle_subset_count<T: Real>(pool: &BookmakerPool<T>, max_legs: usize) -> u128 {
    // ways[j]: sets of size j over the matches seen so far.
    let mut ways = vec![0u128; max_legs + 1];
    ways[0] = 1;
    for group in pool.by_match() {
        for j in (1..=max_legs).rev() {
            ways[j] = ways[j].saturating_add(ways[j - 1].saturating_mul(group.len() as u128));
        }
    }
    ways[1..].iter().fold(0u128, |a, &b| a.saturating_add(b))
}

struct Enumeration<'p, T> {
    pool: &'p BookmakerPool<T>,
    p_min: T,
    max_legs: usize,
    legs: Vec<usize>,
    best: Option<(Vec<usize>, AccumulatorTotals<T>)>,
    front: Vec<(Vec<usize>, AccumulatorTotals<T>)>,
    prune_at: usize,
    evaluated: u64,
}

impl<T: Real> Enumeration<'_, T> {
    fn visit(&mut self, next_match: usize) {
        for m in next_match..self.pool.match_count() {
            for &c in &self.pool.by_match()[m] {
                self.legs.push(c);
                self.evaluate();
                if self.legs.len() < self.max_legs {
                    self.visit(m + 1);
                }
                self.legs.pop();
            }
        }
    }

    fn evaluate(&mut self) {
        let mut legs = self.legs.clone();
        legs.sort_unstable();
        let t = self.pool.evaluate(&legs);
        self.evaluated += 1;
        if t.prob >= self.p_min && self.best.as_ref().is_none_or(|(_, b)| t.exp > b.exp) {
            self.best = Some((legs.clone(), t));
        }
        self.front.push((legs, t));
        if self.front.len() >= self.prune_at {
            self.prune();
            self.prune_at = (2 * self.front.len()).max(4096);
        }
    }

    fn prune(&mut self) {
        let points: Vec<(T, T)> = self.front.iter().map(|(_, t)| (t.odds, t.prob)).collect();
        let keep = pareto_frontier(&points);
        let mut k = keep.into_iter();
        self.front.retain(|_| k.next().unwrap_or(false));
    }
}

/// Enumerates every feasible accumulator over one bookmaker's candidates.
///
/// Leg sets are evaluated exactly as the search evaluates them, so totals
/// compare bit for bit. Fails with `OracleLimitExceeded` above [`ORACLE_LIMIT`] sets.
pub fn enumerate_oracle<T: Real>(
    candidates: &[CandidateBet<T>],
    p_min: T,
    max_legs: usize,
) -> Result<OracleResult<T>, SolverError> {
    if max_legs == 0 || max_legs > ORACLE_MAX_LEGS {
        return Err(SolverError::InvalidParams(format!("oracle max_legs must be in 1..={ORACLE_MAX_LEGS}")));
    }
    let pool = BookmakerPool::new(candidates.to_vec())?;
    if oracle_subset_count(&pool, max_legs) > ORACLE_LIMIT {
        return Err(SolverError::OracleLimitExceeded);
    }
    let mut e = Enumeration {
        pool: &pool,
        p_min,
        max_legs,
        legs: Vec::new(),
        best: None,
        front: Vec::new(),
        prune_at: 4096,
        evaluated: 0,
    };
    e.visit(0);
    e.prune();
    let mut front = std::mem::take(&mut e.front);
    front.sort_by(|a, b| {
        b.1.odds
            .partial_cmp(&a.1.odds)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.prob.partial_cmp(&b.1.prob).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.0.cmp(&b.0))
    });
    Ok(OracleResult {
        best: e.best.map(|(legs, t)| (pool.accumulator(&legs), t)),
        front: front.into_iter().map(|(legs, t)| (pool.accumulator(&legs), t)).collect(),
        evaluated: e.evaluated,
    })
}
