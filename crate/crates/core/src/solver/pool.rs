use std::collections::BTreeMap;

#[cfg(test)]
use crate::domain::totals_from_parts;
use crate::domain::{Accumulator, AccumulatorTotals, BookmakerRef, CandidateBet, MatchRef};
use crate::scalar::{sum_sorted, Real};

use super::SolverError;

/// Candidates of one bookmaker in index form, with logarithms precomputed.
///
/// Hypotheses are sorted vectors of candidate indices; the same leg set always
/// evaluates to the same totals as [`crate::domain::accumulator_totals`].
#[derive(Debug, Clone)]
pub struct BookmakerPool<T> {
    bookmaker: BookmakerRef,
    candidates: Vec<CandidateBet<T>>,
    match_of: Vec<usize>,
    by_match: Vec<Vec<usize>>,
    ln_odds: Vec<T>,
    ln_prob: Vec<T>,
}

impl<T: Real> BookmakerPool<T> {
    pub fn new(candidates: Vec<CandidateBet<T>>) -> Result<Self, SolverError> {
        let bookmaker = candidates.first().ok_or(SolverError::EmptyPool)?.bookmaker().clone();
        if candidates.iter().any(|c| *c.bookmaker() != bookmaker) {
            return Err(SolverError::MixedBookmakers);
        }
        let mut match_ids: BTreeMap<&MatchRef, usize> = BTreeMap::new();
        for c in &candidates {
            let next = match_ids.len();
            match_ids.entry(c.match_ref()).or_insert(next);
        }
        let match_of: Vec<usize> = candidates.iter().map(|c| match_ids[c.match_ref()]).collect();
        let mut by_match = vec![Vec::new(); match_ids.len()];
        for (i, &m) in match_of.iter().enumerate() {
            by_match[m].push(i);
        }
        let ln_odds = candidates.iter().map(|c| c.odds().ln()).collect();
        let ln_prob = candidates.iter().map(|c| c.prob().ln()).collect();
        Ok(Self { bookmaker, candidates, match_of, by_match, ln_odds, ln_prob })
    }

    pub fn bookmaker(&self) -> &BookmakerRef {
        &self.bookmaker
    }

    pub fn candidates(&self) -> &[CandidateBet<T>] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn match_count(&self) -> usize {
        self.by_match.len()
    }

    pub fn match_of(&self, candidate: usize) -> usize {
        self.match_of[candidate]
    }

    pub fn by_match(&self) -> &[Vec<usize>] {
        &self.by_match
    }

    pub(crate) fn ln_odds(&self, i: usize) -> T {
        self.ln_odds[i]
    }

    pub(crate) fn ln_prob(&self, i: usize) -> T {
        self.ln_prob[i]
    }

    pub fn evaluate(&self, legs: &[usize]) -> AccumulatorTotals<T> {
        let mut lo: Vec<T> = legs.iter().map(|&i| self.ln_odds[i]).collect();
        let mut lp: Vec<T> = legs.iter().map(|&i| self.ln_prob[i]).collect();
        let odds = sum_sorted(&mut lo).exp();
        let prob = sum_sorted(&mut lp).exp();
        AccumulatorTotals { odds, prob, exp: odds * prob }
    }

    /// Nonempty and at most one leg per match.
    pub fn is_feasible(&self, legs: &[usize]) -> bool {
        if legs.is_empty() {
            return false;
        }
        let mut seen = vec![false; self.by_match.len()];
        legs.iter().all(|&i| !std::mem::replace(&mut seen[self.match_of[i]], true))
    }

    pub fn accumulator(&self, legs: &[usize]) -> Accumulator<T> {
        Accumulator::from_legs_unchecked(legs.iter().map(|&i| self.candidates[i].clone()).collect())
    }

    /// Maps an accumulator back to candidate indices; `None` if a leg is not in the pool.
    pub fn indices_of(&self, acc: &Accumulator<T>) -> Option<Vec<usize>> {
        let mut legs: Vec<usize> = acc
            .legs()
            .iter()
            .map(|leg| self.candidates.iter().position(|c| c.key() == leg.key()))
            .collect::<Option<_>>()?;
        legs.sort_unstable();
        Some(legs)
    }

    #[cfg(test)]
    pub(crate) fn evaluate_naively(&self, legs: &[usize]) -> AccumulatorTotals<T> {
        totals_from_parts(
            legs.iter().map(|&i| self.candidates[i].odds()),
            legs.iter().map(|&i| self.candidates[i].prob()),
        )
    }
}
