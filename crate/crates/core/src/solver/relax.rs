//! Continuous relaxation used to seed agents, and a reachability bound.
//!
//! In log space the relaxed program is a fractional knapsack: maximise
//! `sum x_c ln(odds_c)` subject to `sum x_c (-ln prob_c) <= -ln bound` with
//! `0 <= x_c <= 1`. Filling items by descending value/weight ratio solves it
//! exactly; the fractional item is then rounded at 0.5.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::domain::{Accumulator, CandidateBet};
use crate::scalar::Real;

use super::pool::BookmakerPool;
use super::SolverError;

/// Fractional knapsack solution: the items taken in ratio order with their fill level.
pub(crate) fn fractional_fill<T: Real>(
    order: &[usize],
    weight: impl Fn(usize) -> T,
    capacity: T,
) -> Vec<(usize, T)> {
    let mut remaining = capacity;
    let mut filled = Vec::new();
    for &i in order {
        let w = weight(i);
        if w <= remaining {
            remaining = remaining - w;
            filled.push((i, T::one()));
        } else {
            if remaining > T::zero() {
                filled.push((i, remaining / w));
            }
            break;
        }
    }
    filled
}

/// Rounded relaxation for one probability bound, as sorted candidate indices.
pub(crate) fn relaxed_legs<T: Real, R: Rng + ?Sized>(
    pool: &BookmakerPool<T>,
    bound: T,
    max_legs: Option<usize>,
    rng: &mut R,
) -> Vec<usize> {
    let weight = |i: usize| -pool.ln_prob(i);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(rng);
    // Stable sort keeps the shuffled order among equal ratios.
    order.sort_by(|&a, &b| {
        let ra = pool.ln_odds(a) / weight(a);
        let rb = pool.ln_odds(b) / weight(b);
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });

    let half = T::lit(0.5);
    let rounded: Vec<usize> = fractional_fill(&order, weight, -bound.ln())
        .into_iter()
        .filter(|&(_, x)| x >= half)
        .map(|(i, _)| i)
        .collect();

    // One leg per match: keep the most probable outcome, then the higher odds.
    let mut chosen: Vec<Option<usize>> = vec![None; pool.match_count()];
    let mut rank = vec![usize::MAX; pool.len()];
    for (r, &i) in rounded.iter().enumerate() {
        rank[i] = r;
        let slot = &mut chosen[pool.match_of(i)];
        let better = match *slot {
            None => true,
            Some(j) => {
                let (ci, cj) = (&pool.candidates()[i], &pool.candidates()[j]);
                ci.prob() > cj.prob() || (ci.prob() == cj.prob() && ci.odds() > cj.odds())
            }
        };
        if better {
            *slot = Some(i);
        }
    }
    let mut legs: Vec<usize> = chosen.into_iter().flatten().collect();
    legs.sort_by_key(|&i| rank[i]);
    if let Some(cap) = max_legs {
        legs.truncate(cap);
    }

    if legs.is_empty() {
        let best = (0..pool.len())
            .max_by(|&a, &b| {
                let (ca, cb) = (&pool.candidates()[a], &pool.candidates()[b]);
                ca.exp().partial_cmp(&cb.exp()).unwrap_or(std::cmp::Ordering::Equal).then(b.cmp(&a))
            })
            .expect("pool is nonempty");
        legs.push(best);
    }
    legs.sort_unstable();
    legs
}

/// Seeds an accumulator from the rounded continuous relaxation at probability bound `p_min`.
///
/// Always returns a feasible accumulator; when rounding leaves nothing selected,
/// the single candidate with the highest expected value is used.
pub fn relaxed_initialization<T: Real, R: Rng + ?Sized>(
    candidates: &[CandidateBet<T>],
    p_min: T,
    rng: &mut R,
) -> Result<Accumulator<T>, SolverError> {
    let pool = BookmakerPool::new(candidates.to_vec())?;
    let legs = relaxed_legs(&pool, p_min, None, rng);
    Ok(pool.accumulator(&legs))
}

/// Upper bound on `ln Exp` over nonempty leg sets with win probability at least `p_min`.
///
/// Dropping the one-leg-per-match constraint only enlarges the feasible set,
/// so a fractional knapsack over the candidates with positive `ln(odds * prob)`
/// bounds every set that contains one of them; sets made only of the others
/// cannot beat their best single member. Returns `-inf` when no candidate
/// alone reaches `p_min`.
pub fn ln_exp_upper_bound<T: Real>(pool: &BookmakerPool<T>, p_min: T) -> T {
    let capacity = -p_min.ln();
    let value = |i: usize| pool.ln_odds(i) + pool.ln_prob(i);
    let weight = |i: usize| -pool.ln_prob(i);

    let mut bound = T::neg_infinity();
    for i in 0..pool.len() {
        if weight(i) <= capacity {
            bound = bound.max(value(i));
        }
    }
    let mut positive: Vec<usize> = (0..pool.len()).filter(|&i| value(i) > T::zero()).collect();
    if !positive.is_empty() && bound > T::neg_infinity() {
        positive.sort_by(|&a, &b| {
            (value(b) / weight(b)).partial_cmp(&(value(a) / weight(a))).unwrap_or(std::cmp::Ordering::Equal)
        });
        let knapsack = fractional_fill(&positive, weight, capacity)
            .into_iter()
            .fold(T::zero(), |acc, (i, x)| acc + x * value(i));
        bound = bound.max(knapsack);
    }
    bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::test_support::bet;
    use crate::domain::Outcome;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn greedy_trace_example() {
        let cands = vec![
            bet(0, "B365", Outcome::Home, 2.0, 0.8),
            bet(1, "B365", Outcome::Home, 3.0, 0.5),
            bet(2, "B365", Outcome::Home, 5.0, 0.3),
        ];
        let acc = relaxed_initialization(&cands, 0.25, &mut rng()).unwrap();
        assert_eq!(acc.legs(), &cands[..2]);
        let t = acc.totals().unwrap();
        assert!((t.prob - 0.4).abs() < 1e-12);

        // Independent LP check: the third item's fractional level.
        let budget = -(0.25f64).ln();
        let used = -(0.8f64).ln() - (0.5f64).ln();
        let x3 = (budget - used) / -(0.3f64).ln();
        assert!((x3 - 0.39).abs() < 0.005 && x3 < 0.5);
    }

    #[test]
    fn single_candidate() {
        let cands = vec![bet(0, "BW", Outcome::Draw, 2.0, 0.5)];
        let acc = relaxed_initialization(&cands, 0.25, &mut rng()).unwrap();
        assert_eq!(acc.legs(), &cands[..]);
    }

    #[test]
    fn conflicts_keep_the_more_probable_outcome() {
        let cands = vec![
            bet(0, "BW", Outcome::Home, 1.5, 0.6),
            bet(0, "BW", Outcome::Draw, 1.4, 0.7),
        ];
        // Both fit under a 0.4 bound when the match constraint is relaxed.
        let pool = BookmakerPool::new(cands.clone()).unwrap();
        let legs = relaxed_legs(&pool, 0.4, None, &mut rng());
        assert_eq!(legs, vec![1]);
    }

    #[test]
    fn empty_rounding_falls_back_to_best_single() {
        let cands = vec![
            bet(0, "LB", Outcome::Away, 9.0, 0.05),
            bet(1, "LB", Outcome::Away, 7.0, 0.06),
        ];
        let acc = relaxed_initialization(&cands, 0.25, &mut rng()).unwrap();
        assert_eq!(acc.legs(), &cands[..1]);
    }

    #[test]
    fn ties_are_broken_by_the_rng() {
        let cands: Vec<_> = (0..6).map(|m| bet(m, "GB", Outcome::Home, 2.0, 0.6)).collect();
        let pool = BookmakerPool::new(cands).unwrap();
        let mut seen = std::collections::HashSet::new();
        for seed in 0..40 {
            let legs = relaxed_legs(&pool, 0.25, None, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(legs.len(), 3);
            seen.insert(legs);
        }
        assert!(seen.len() > 1);
    }

    #[test]
    fn max_legs_caps_the_seed() {
        let cands: Vec<_> = (0..6).map(|m| bet(m, "GB", Outcome::Home, 1.2, 0.9)).collect();
        let pool = BookmakerPool::new(cands).unwrap();
        assert_eq!(relaxed_legs(&pool, 0.25, Some(2), &mut rng()).len(), 2);
    }

    #[test]
    fn upper_bound_dominates_every_subset() {
        let cands = vec![
            bet(0, "B365", Outcome::Home, 2.0, 0.8),
            bet(0, "B365", Outcome::Away, 6.0, 0.2),
            bet(1, "B365", Outcome::Home, 3.0, 0.5),
            bet(2, "B365", Outcome::Home, 5.0, 0.3),
            bet(3, "B365", Outcome::Draw, 1.6, 0.55),
        ];
        let pool = BookmakerPool::new(cands).unwrap();
        for p_min in [0.05, 0.25, 0.5, 0.79] {
            let ub = ln_exp_upper_bound(&pool, p_min);
            for mask in 1u32..(1 << pool.len()) {
                let legs: Vec<usize> = (0..pool.len()).filter(|i| mask & (1 << i) != 0).collect();
                let t = pool.evaluate(&legs);
                if t.prob >= p_min {
                    assert!(t.exp.ln() <= ub + 1e-12, "p_min {p_min} legs {legs:?}");
                }
            }
        }
        assert_eq!(ln_exp_upper_bound(&pool, 0.9), f64::NEG_INFINITY);
    }
}
