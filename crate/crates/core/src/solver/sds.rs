//! Agents and the test / diffusion phases of the stochastic diffusion search.

use rand::Rng;
use serde::Serialize;

use crate::domain::{Accumulator, AccumulatorTotals, CandidateBet};
use crate::scalar::Real;

use super::pool::BookmakerPool;
use super::SolverError;

/// Legs carried by a freshly reinitialised agent.
pub const REINIT_LEGS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Active,
    Inactive,
    Inefficient,
}

/// One search agent: a hypothesis (sorted candidate indices into its bookmaker pool)
/// together with its cached totals.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent<T> {
    legs: Vec<usize>,
    totals: AccumulatorTotals<T>,
    pub status: Status,
}

impl<T: Real> Agent<T> {
    pub fn new(pool: &BookmakerPool<T>, mut legs: Vec<usize>) -> Self {
        legs.sort_unstable();
        debug_assert!(pool.is_feasible(&legs), "infeasible hypothesis {legs:?}");
        let totals = pool.evaluate(&legs);
        Self { legs, totals, status: Status::Active }
    }

    /// Builds an agent directly from totals, for exercising the test phase in isolation.
    pub fn with_totals(legs: Vec<usize>, totals: AccumulatorTotals<T>) -> Self {
        Self { legs, totals, status: Status::Active }
    }

    pub fn legs(&self) -> &[usize] {
        &self.legs
    }

    pub fn totals(&self) -> &AccumulatorTotals<T> {
        &self.totals
    }

    pub fn hypothesis(&self, pool: &BookmakerPool<T>) -> Accumulator<T> {
        pool.accumulator(&self.legs)
    }
}

/// Status of an agent holding `own` after comparing it with a peer holding `peer`.
///
/// Hypotheses below the probability threshold lose against any hypothesis that
/// meets it; between hypotheses on the same side of the threshold the rule is
/// dominance first (inefficient), then expected value (inactive), else active.
pub fn judge<T: Real>(own: &AccumulatorTotals<T>, peer: &AccumulatorTotals<T>, p_min: T) -> Status {
    let own_ok = own.prob >= p_min;
    let peer_ok = peer.prob >= p_min;
    match (own_ok, peer_ok) {
        (true, false) => Status::Active,
        (false, true) => Status::Inactive,
        _ if own.dominated_by(peer) => Status::Inefficient,
        _ if own.exp < peer.exp => Status::Inactive,
        _ => Status::Active,
    }
}

fn other_index<R: Rng + ?Sized>(i: usize, n: usize, rng: &mut R) -> usize {
    let j = rng.random_range(0..n - 1);
    if j >= i {
        j + 1
    } else {
        j
    }
}

/// Compares every agent with a uniformly drawn other agent.
///
/// Statuses are computed against the totals held before the phase started.
pub fn test_phase<T: Real, R: Rng + ?Sized>(agents: &mut [Agent<T>], p_min: T, rng: &mut R) {
    let n = agents.len();
    assert!(n >= 2, "test phase needs at least two agents");
    let snapshot: Vec<AccumulatorTotals<T>> = agents.iter().map(|a| a.totals).collect();
    for (i, agent) in agents.iter_mut().enumerate() {
        let j = other_index(i, n, rng);
        agent.status = judge(&snapshot[i], &snapshot[j], p_min);
    }
}

/// Uniformly random set of `k` candidates on distinct matches (fewer if the pool
/// covers fewer matches).
///
/// A match set is drawn with probability proportional to the product of its
/// candidate counts, then one candidate per chosen match, which makes every
/// admissible leg set equally likely.
pub fn random_legs<T: Real, R: Rng + ?Sized>(pool: &BookmakerPool<T>, k: usize, rng: &mut R) -> Vec<usize> {
    let groups = pool.by_match();
    let m = groups.len();
    let k = k.min(m);
    // ways[i][j]: weighted number of j-subsets among matches i..m.
    let mut ways = vec![vec![0.0f64; k + 1]; m + 1];
    ways[m][0] = 1.0;
    for i in (0..m).rev() {
        ways[i][0] = 1.0;
        for j in 1..=k {
            ways[i][j] = ways[i + 1][j] + groups[i].len() as f64 * ways[i + 1][j - 1];
        }
    }
    let mut legs = Vec::with_capacity(k);
    let mut need = k;
    for i in 0..m {
        if need == 0 {
            break;
        }
        let take = groups[i].len() as f64 * ways[i + 1][need - 1];
        if rng.random::<f64>() * ways[i][need] < take {
            legs.push(groups[i][rng.random_range(0..groups[i].len())]);
            need -= 1;
        }
    }
    legs.sort_unstable();
    legs
}

/// Replaces one uniformly chosen leg with an unselected candidate on a match the
/// remaining legs do not cover. Returns the legs unchanged when no replacement exists.
pub fn neighbor_legs<T: Real, R: Rng + ?Sized>(pool: &BookmakerPool<T>, legs: &[usize], rng: &mut R) -> Vec<usize> {
    if legs.is_empty() {
        return Vec::new();
    }
    let drop = rng.random_range(0..legs.len());
    let mut covered = vec![false; pool.match_count()];
    for (pos, &l) in legs.iter().enumerate() {
        if pos != drop {
            covered[pool.match_of(l)] = true;
        }
    }
    let eligible: Vec<usize> = (0..pool.len())
        .filter(|c| !legs.contains(c) && !covered[pool.match_of(*c)])
        .collect();
    if eligible.is_empty() {
        return legs.to_vec();
    }
    let mut next = legs.to_vec();
    next[drop] = eligible[rng.random_range(0..eligible.len())];
    next.sort_unstable();
    next
}

/// Accumulator-level form of [`neighbor_legs`]; `pool` must be the candidate
/// list of the accumulator's bookmaker and contain every leg.
pub fn neighborhood_move<T: Real, R: Rng + ?Sized>(
    acc: &Accumulator<T>,
    pool: &[CandidateBet<T>],
    rng: &mut R,
) -> Result<Accumulator<T>, SolverError> {
    let pool = BookmakerPool::new(pool.to_vec())?;
    let legs = pool.indices_of(acc).ok_or(SolverError::LegNotInPool)?;
    Ok(pool.accumulator(&neighbor_legs(&pool, &legs, rng)))
}

/// Diffusion phase; returns how many agents changed hypothesis.
///
/// Inefficient agents are reinitialised. An inactive agent polls a random other
/// agent and moves into the neighbourhood of its hypothesis if that agent is
/// active, otherwise it is reinitialised. Active agents keep their hypothesis.
/// Polled hypotheses and statuses are those from before the phase.
pub fn diffusion_phase<T: Real, R: Rng + ?Sized>(
    agents: &mut [Agent<T>],
    pool: &BookmakerPool<T>,
    max_legs: Option<usize>,
    rng: &mut R,
) -> usize {
    let n = agents.len();
    let reinit_size = max_legs.map_or(REINIT_LEGS, |cap| cap.min(REINIT_LEGS));
    let snapshot: Vec<(Vec<usize>, Status)> = agents.iter().map(|a| (a.legs.clone(), a.status)).collect();
    let mut changed = 0;
    for i in 0..n {
        let next = match snapshot[i].1 {
            Status::Active => continue,
            Status::Inefficient => random_legs(pool, reinit_size, rng),
            Status::Inactive => {
                let j = other_index(i, n, rng);
                match snapshot[j].1 {
                    Status::Active => neighbor_legs(pool, &snapshot[j].0, rng),
                    _ => random_legs(pool, reinit_size, rng),
                }
            }
        };
        if next != agents[i].legs {
            changed += 1;
            agents[i] = Agent { status: agents[i].status, ..Agent::new(pool, next) };
        }
    }
    changed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::test_support::bet;
    use crate::domain::{validate_accumulator, Outcome};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::{BTreeMap, BTreeSet};

    fn totals(odds: f64, prob: f64) -> AccumulatorTotals<f64> {
        AccumulatorTotals { odds, prob, exp: odds * prob }
    }

    #[test]
    fn status_rules() {
        assert_eq!(judge(&totals(4.0, 0.5), &totals(5.0, 0.6), 0.1), Status::Inefficient);
        assert_eq!(judge(&totals(10.0, 0.2), &totals(4.0, 0.6), 0.1), Status::Inactive);
        assert_eq!(judge(&totals(3.0, 0.5), &totals(3.0, 0.5), 0.1), Status::Active);
        assert_eq!(judge(&totals(4.0, 0.6), &totals(10.0, 0.2), 0.1), Status::Active);
    }

    #[test]
    fn below_threshold_loses_to_any_qualifying_peer() {
        assert_eq!(judge(&totals(50.0, 0.1), &totals(2.0, 0.5), 0.25), Status::Inactive);
        assert_eq!(judge(&totals(2.0, 0.5), &totals(50.0, 0.1), 0.25), Status::Active);
    }

    #[test]
    fn test_phase_uses_a_different_peer() {
        let mut agents = vec![
            Agent::with_totals(vec![0], totals(4.0, 0.5)),
            Agent::with_totals(vec![1], totals(5.0, 0.6)),
        ];
        test_phase(&mut agents, 0.1, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(agents[0].status, Status::Inefficient);
        assert_eq!(agents[1].status, Status::Active);
    }

    fn pool_of(n_matches: usize, per_match: usize) -> BookmakerPool<f64> {
        let cands = (0..n_matches)
            .flat_map(|m| {
                Outcome::ALL[..per_match]
                    .iter()
                    .map(move |&o| bet(m, "B365", o, 1.5 + m as f64 + o.index() as f64, 0.2 + 0.05 * o.index() as f64))
            })
            .collect();
        BookmakerPool::new(cands).unwrap()
    }

    #[test]
    fn all_active_population_is_unchanged() {
        let pool = pool_of(5, 3);
        let mut agents: Vec<_> = [vec![0, 3], vec![6, 9, 12], vec![1]].into_iter().map(|l| Agent::new(&pool, l)).collect();
        let before = agents.clone();
        let changed = diffusion_phase(&mut agents, &pool, None, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(changed, 0);
        assert_eq!(agents, before);
    }

    #[test]
    fn inactive_polling_an_inefficient_agent_is_reinitialised_to_three_legs() {
        let pool = pool_of(6, 3);
        let mut agents = vec![Agent::new(&pool, vec![0]), Agent::new(&pool, vec![3])];
        agents[0].status = Status::Inactive;
        agents[1].status = Status::Inefficient;
        diffusion_phase(&mut agents, &pool, None, &mut ChaCha8Rng::seed_from_u64(5));
        for a in &agents {
            assert_eq!(a.legs().len(), 3);
            assert!(pool.is_feasible(a.legs()));
        }
    }

    #[test]
    fn inactive_polling_an_active_agent_moves_next_to_it() {
        let pool = pool_of(6, 3);
        let mut agents = vec![Agent::new(&pool, vec![0]), Agent::new(&pool, vec![3, 6, 9])];
        agents[0].status = Status::Inactive;
        diffusion_phase(&mut agents, &pool, None, &mut ChaCha8Rng::seed_from_u64(9));
        let got: BTreeSet<usize> = agents[0].legs().iter().copied().collect();
        let source: BTreeSet<usize> = [3, 6, 9].into();
        assert_eq!(got.len(), 3);
        assert_eq!(got.intersection(&source).count(), 2);
        assert!(pool.is_feasible(agents[0].legs()));
        assert_eq!(agents[1].legs(), &[3, 6, 9]);
    }

    #[test]
    fn neighbours_of_two_legs() {
        // a, b on matches 0 and 1, c on a fresh match 2.
        let cands = vec![
            bet(0, "BW", Outcome::Home, 2.0, 0.5),
            bet(1, "BW", Outcome::Home, 2.0, 0.5),
            bet(2, "BW", Outcome::Home, 2.0, 0.5),
        ];
        let pool = BookmakerPool::new(cands).unwrap();
        let mut reached = BTreeSet::new();
        for seed in 0..64 {
            reached.insert(neighbor_legs(&pool, &[0, 1], &mut ChaCha8Rng::seed_from_u64(seed)));
        }
        assert_eq!(reached, BTreeSet::from([vec![0, 2], vec![1, 2]]));
    }

    #[test]
    fn neighbour_without_candidates_is_identity() {
        let cands = vec![bet(0, "BW", Outcome::Home, 2.0, 0.5), bet(1, "BW", Outcome::Home, 2.0, 0.5)];
        let acc = Accumulator::new(cands.clone()).unwrap();
        let moved = neighborhood_move(&acc, &cands, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(moved, acc);
    }

    #[test]
    fn single_leg_may_swap_within_its_match() {
        let a = bet(0, "BW", Outcome::Home, 2.0, 0.5);
        let a2 = bet(0, "BW", Outcome::Draw, 3.3, 0.3);
        let acc = Accumulator::single(a.clone());
        let moved = neighborhood_move(&acc, &[a, a2.clone()], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(moved.legs(), &[a2]);
    }

    #[test]
    fn random_legs_handles_few_matches() {
        let pool = pool_of(2, 3);
        let legs = random_legs(&pool, 3, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(legs.len(), 2);
        assert!(pool.is_feasible(&legs));
    }

    #[test]
    fn random_legs_is_uniform_over_admissible_sets() {
        // Matches with 3, 1 and 2 candidates: 3*1 + 3*2 + 1*2 = 11 two-leg sets.
        let mut cands = Vec::new();
        for (m, count) in [(0, 3), (1, 1), (2, 2)] {
            for o in &Outcome::ALL[..count] {
                cands.push(bet(m, "IW", *o, 2.0, 0.4));
            }
        }
        let pool = BookmakerPool::new(cands).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 110_000;
        let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for _ in 0..draws {
            *counts.entry(random_legs(&pool, 2, &mut rng)).or_default() += 1;
        }
        assert_eq!(counts.len(), 11);
        let expected = draws as f64 / 11.0;
        let sd = (expected * (1.0 - 1.0 / 11.0)).sqrt();
        for (legs, &c) in &counts {
            assert!(pool.is_feasible(legs));
            assert!((c as f64 - expected).abs() < 5.0 * sd, "{legs:?}: {c}");
        }
    }

    proptest! {
        #[test]
        fn dominance_branch_is_antisymmetric(
            a in (1.01f64..50.0, 0.3f64..0.99), b in (1.01f64..50.0, 0.3f64..0.99),
        ) {
            let (ta, tb) = (totals(a.0, a.1), totals(b.0, b.1));
            prop_assert!(!(judge(&ta, &tb, 0.25) == Status::Inefficient && judge(&tb, &ta, 0.25) == Status::Inefficient));
        }

        #[test]
        fn hypotheses_stay_feasible(seed in 0u64..500, matches in 1usize..8, per in 1usize..4) {
            let pool = pool_of(matches, per);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut agents: Vec<_> = (0..6).map(|_| Agent::new(&pool, random_legs(&pool, 3, &mut rng))).collect();
            for _ in 0..20 {
                test_phase(&mut agents, 0.01, &mut rng);
                diffusion_phase(&mut agents, &pool, Some(2), &mut rng);
                for a in &agents {
                    prop_assert!(pool.is_feasible(a.legs()));
                    prop_assert!(validate_accumulator(&a.hypothesis(&pool)).is_empty());
                    prop_assert_eq!(*a.totals(), pool.evaluate(a.legs()));
                }
            }
        }
    }
}
