//! Stake sizing and return moments of accumulators versus split singles.

use serde::{Deserialize, Serialize};

use crate::domain::Accumulator;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KellyVariant {
    /// `f = p - (1 - p) / o`, with `o` the decimal odds.
    #[default]
    Gross,
    /// `f = p - (1 - p) / (o - 1)`, with the net odds.
    Net,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StakingStrategy {
    ConservativeKelly,
    VarianceAdjusted,
}

/// Kelly stake as a fraction of the staking base; zero means no bet.
pub fn kelly_fraction<T: Real>(p: T, o: T) -> T {
    kelly_fraction_with(p, o, KellyVariant::Gross)
}

pub fn kelly_fraction_with<T: Real>(p: T, o: T, variant: KellyVariant) -> T {
    let payout = match variant {
        KellyVariant::Gross => o,
        KellyVariant::Net => o - T::one(),
    };
    (p - (T::one() - p) / payout).max(T::zero())
}

/// Stake `1 / (2 o (1 - p))`, capped at the whole base.
pub fn variance_adjusted_stake<T: Real>(p: T, o: T) -> T {
    (T::one() / (T::lit(2.0) * o * (T::one() - p))).min(T::one())
}

/// Expected return and variance per unit staked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetMoments<T> {
    pub expected_return: T,
    pub variance: T,
}

/// Moments of one accumulator over independent legs given as `(odds, prob)`.
pub fn accumulator_moments<T: Real>(legs: &[(T, T)]) -> BetMoments<T> {
    let mut win = T::one();
    let mut second = T::one();
    let mut expected = T::one();
    for &(o, p) in legs {
        win = win * p;
        second = second * o * o * p;
        expected = expected * o * p;
    }
    BetMoments { expected_return: expected, variance: second * (T::one() - win) }
}

/// Moments of the same legs played as singles with the stake split evenly.
pub fn split_singles_moments<T: Real>(legs: &[(T, T)]) -> BetMoments<T> {
    let k = T::from_usize(legs.len()).expect("leg count fits the scalar");
    let (mut mean, mut var) = (T::zero(), T::zero());
    for &(o, p) in legs {
        mean = mean + o * p;
        var = var + o * o * p * (T::one() - p);
    }
    BetMoments { expected_return: mean / k, variance: var / (k * k) }
}

/// Fractions of the staking base to place on each target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StakePlan<T> {
    pub strategy: StakingStrategy,
    pub stakes: Vec<(Accumulator<T>, T)>,
}

impl<T: Real> StakePlan<T> {
    /// Sizes every target by its combined odds and probability. Zero-fraction
    /// targets are dropped, and fractions are scaled down proportionally when
    /// they add up to more than the whole base.
    pub fn build(strategy: StakingStrategy, variant: KellyVariant, targets: Vec<Accumulator<T>>) -> Self {
        let mut stakes: Vec<(Accumulator<T>, T)> = targets
            .into_iter()
            .filter_map(|acc| {
                let t = acc.totals().ok()?;
                let f = match strategy {
                    StakingStrategy::ConservativeKelly => kelly_fraction_with(t.prob, t.odds, variant),
                    StakingStrategy::VarianceAdjusted => variance_adjusted_stake(t.prob, t.odds),
                };
                (f > T::zero()).then_some((acc, f))
            })
            .collect();
        let total = stakes.iter().fold(T::zero(), |s, (_, f)| s + *f);
        if total > T::one() {
            for (_, f) in &mut stakes {
                *f = *f / total;
            }
        }
        Self { strategy, stakes }
    }

    pub fn total_fraction(&self) -> T {
        self.stakes.iter().fold(T::zero(), |s, (_, f)| s + *f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::test_support::bet;
    use crate::domain::Outcome;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kelly_examples() {
        assert!((kelly_fraction(0.36f64, 2.87) - 0.1370).abs() < 5e-5);
        assert!((kelly_fraction(0.047f64, 83.1) - 0.03553).abs() < 5e-6);
        assert_eq!(kelly_fraction(0.2f64, 3.0), 0.0);
        assert!((kelly_fraction_with(0.5f64, 3.0, KellyVariant::Net) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn variance_adjusted_examples() {
        assert!((variance_adjusted_stake(0.36f64, 2.87) - 0.2722).abs() < 1e-4);
        assert!((variance_adjusted_stake(0.047f64, 83.1) - 0.006314).abs() < 5e-7);
        assert!((variance_adjusted_stake(0.5f64, 1e6) - 1e-6).abs() < 1e-12);
        assert_eq!(variance_adjusted_stake(0.9f64, 1.01), 1.0);
    }

    #[test]
    fn moments_examples() {
        let acc = accumulator_moments(&[(2.0f64, 0.6), (2.0, 0.6)]);
        assert!((acc.expected_return - 1.44).abs() < 1e-12);
        assert!((acc.variance - 3.6864).abs() < 1e-9);
        let s = split_singles_moments(&[(2.0f64, 0.6), (2.0, 0.6)]);
        assert!((s.expected_return - 1.2).abs() < 1e-12);
        assert!((s.variance - 0.48).abs() < 1e-12);
        let one = [(3.0, 0.4)];
        assert_eq!(accumulator_moments(&one), split_singles_moments(&one));
        assert!(accumulator_moments(&[(1.0001, 0.999999)]).variance < 1e-5);
    }

    #[test]
    fn moments_agree_with_simulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let k = rng.random_range(1..=6);
            let legs: Vec<(f64, f64)> = (0..k).map(|_| (rng.random_range(1.1..4.0), rng.random_range(0.3..0.9))).collect();
            let trials = 200_000;
            let (mut sa, mut sa2, mut ss, mut ss2) = (0.0, 0.0, 0.0, 0.0);
            for _ in 0..trials {
                let wins: Vec<bool> = legs.iter().map(|&(_, p)| rng.random::<f64>() < p).collect();
                let a = if wins.iter().all(|&w| w) { legs.iter().map(|l| l.0).product() } else { 0.0 };
                let s: f64 = legs.iter().zip(&wins).filter(|(_, &w)| w).map(|(l, _)| l.0).sum::<f64>() / k as f64;
                sa += a;
                sa2 += a * a;
                ss += s;
                ss2 += s * s;
            }
            let n = trials as f64;
            for (m, sum, sum2) in [(accumulator_moments(&legs), sa, sa2), (split_singles_moments(&legs), ss, ss2)] {
                let mean = sum / n;
                let var = sum2 / n - mean * mean;
                assert!((mean - m.expected_return).abs() < 4.0 * (m.variance / n).sqrt() + 1e-12);
                assert!((var - m.variance).abs() < 0.05 * m.variance + 1e-9, "{var} vs {}", m.variance);
            }
        }
    }

    #[test]
    fn plan_normalizes_overcommitment() {
        let targets: Vec<_> = (0..5).map(|m| Accumulator::single(bet(m, "B365", Outcome::Home, 1.2, 0.7))).collect();
        let plan = StakePlan::build(StakingStrategy::VarianceAdjusted, KellyVariant::Gross, targets);
        assert_eq!(plan.stakes.len(), 5);
        assert!((plan.total_fraction() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plan_drops_unfavourable_kelly_targets() {
        let targets = vec![
            Accumulator::single(bet(0, "B365", Outcome::Home, 3.0, 0.2)),
            Accumulator::single(bet(1, "B365", Outcome::Home, 2.87, 0.36)),
        ];
        let plan = StakePlan::build(StakingStrategy::ConservativeKelly, KellyVariant::Gross, targets);
        assert_eq!(plan.stakes.len(), 1);
        assert!((plan.stakes[0].1 - 0.1370).abs() < 5e-5);
    }

    proptest! {
        #[test]
        fn kelly_monotone(p in 0.01f64..0.98, dp in 0.0f64..0.01, o in 1.01f64..50.0, d_o in 0.0f64..5.0) {
            prop_assert!(kelly_fraction(p + dp, o) >= kelly_fraction(p, o));
            prop_assert!(kelly_fraction(p, o + d_o) >= kelly_fraction(p, o));
            prop_assert_eq!(kelly_fraction(p, o) == 0.0, p <= (1.0 - p) / o);
        }

        #[test]
        fn variance_adjusted_monotone(p in 0.01f64..0.98, dp in 0.0f64..0.01, o in 1.01f64..50.0, d_o in 0.0f64..5.0) {
            prop_assert!(variance_adjusted_stake(p, o + d_o) <= variance_adjusted_stake(p, o));
            prop_assert!(variance_adjusted_stake(p + dp, o) >= variance_adjusted_stake(p, o));
        }

        #[test]
        fn accumulator_grows_faster(o in 1.01f64..20.0, p in 0.05f64..0.95, k in 2usize..=6) {
            prop_assume!(o * p > 1.0);
            let legs = vec![(o, p); k];
            let (a, s) = (accumulator_moments(&legs), split_singles_moments(&legs));
            prop_assert!(a.expected_return > s.expected_return);
            prop_assert!(a.variance > s.variance);
            prop_assert!(a.variance >= 0.0 && s.variance >= 0.0);
        }
    }
}
