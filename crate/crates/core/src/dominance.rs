//! Pareto dominance filters over (odds, probability) and per-bookmaker splitting.
//!
//! A candidate is dominated when another candidate in scope offers odds at
//! least as high and a probability at least as high, with one of the two
//! strictly higher. Candidates with identical (odds, prob) never eliminate
//! each other.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{BookmakerRef, CandidateBet};
use crate::ingest::MatchdayPool;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    None,
    /// Dominator must be offered by the same bookmaker.
    #[default]
    #[serde(alias = "intrabookmaker", alias = "intra_bookmaker")]
    Intra,
    /// Dominator may come from any bookmaker.
    #[serde(alias = "interbookmaker", alias = "inter_bookmaker")]
    Inter,
}

impl FilterMode {
    pub const ALL: [FilterMode; 3] = [FilterMode::None, FilterMode::Intra, FilterMode::Inter];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterMode::None => "none",
            FilterMode::Intra => "intra",
            FilterMode::Inter => "inter",
        }
    }

    /// Column label in season reports.
    pub fn label(self) -> &'static str {
        match self {
            FilterMode::None => "None",
            FilterMode::Intra => "Intra-bookmaker",
            FilterMode::Inter => "Inter-bookmaker",
        }
    }
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(FilterMode::None),
            "intra" | "intra-bookmaker" => Ok(FilterMode::Intra),
            "inter" | "inter-bookmaker" => Ok(FilterMode::Inter),
            other => Err(format!("unknown filter mode {other:?} (expected none, intra or inter)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionReport<T> {
    pub input_count: usize,
    pub kept_count: usize,
    /// Each eliminated candidate with one witness dominator.
    pub eliminated: Vec<(CandidateBet<T>, CandidateBet<T>)>,
}

impl<T: Real> ReductionReport<T> {
    pub fn reduction(&self) -> f64 {
        if self.input_count == 0 {
            0.0
        } else {
            (self.input_count - self.kept_count) as f64 / self.input_count as f64
        }
    }
}

/// `true` for every point on the (maximise, maximise) Pareto frontier.
///
/// Sort-and-sweep: points are visited by descending first coordinate; a point
/// is dominated if a strictly larger first coordinate already reached its
/// second coordinate, or if a point with equal first coordinate has a strictly
/// larger second coordinate.
pub fn pareto_frontier<T: Real>(points: &[(T, T)]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[b]
            .0
            .partial_cmp(&points[a].0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(points[b].1.partial_cmp(&points[a].1).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut keep = vec![false; points.len()];
    let mut best_above = T::neg_infinity();
    let mut start = 0;
    while start < order.len() {
        let first = points[order[start]].0;
        let mut end = start;
        while end < order.len() && points[order[end]].0 == first {
            end += 1;
        }
        // Sorted by descending second coordinate within the group.
        let group_max = points[order[start]].1;
        for &i in &order[start..end] {
            let p = points[i].1;
            keep[i] = !(best_above >= p || group_max > p);
        }
        best_above = best_above.max(group_max);
        start = end;
    }
    keep
}

fn dominates<T: Real>(a: &CandidateBet<T>, b: &CandidateBet<T>) -> bool {
    a.odds() >= b.odds() && a.prob() >= b.prob() && (a.odds() > b.odds() || a.prob() > b.prob())
}

/// Filters `scope` (indices into `candidates`) in place, recording witnesses.
fn filter_scope<T: Real>(
    candidates: &[CandidateBet<T>],
    scope: &[usize],
    keep: &mut [bool],
    witness: &mut [Option<usize>],
) {
    let points: Vec<(T, T)> = scope.iter().map(|&i| (candidates[i].odds(), candidates[i].prob())).collect();
    let frontier = pareto_frontier(&points);
    for (pos, &i) in scope.iter().enumerate() {
        keep[i] = frontier[pos];
        if !frontier[pos] {
            witness[i] = scope
                .iter()
                .copied()
                .filter(|&j| dominates(&candidates[j], &candidates[i]))
                .min_by(|&a, &b| candidates[a].key().cmp(&candidates[b].key()));
        }
    }
}

fn assemble<T: Real>(
    candidates: &[CandidateBet<T>],
    keep: &[bool],
    witness: &[Option<usize>],
) -> (Vec<CandidateBet<T>>, ReductionReport<T>) {
    let mut kept = Vec::new();
    let mut eliminated = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        if keep[i] {
            kept.push(c.clone());
        } else {
            let w = witness[i].expect("eliminated candidate has a dominator");
            eliminated.push((c.clone(), candidates[w].clone()));
        }
    }
    let report = ReductionReport { input_count: candidates.len(), kept_count: kept.len(), eliminated };
    (kept, report)
}

/// Keeps the per-bookmaker Pareto frontier.
pub fn intra_filter<T: Real>(candidates: &[CandidateBet<T>]) -> (Vec<CandidateBet<T>>, ReductionReport<T>) {
    let mut keep = vec![true; candidates.len()];
    let mut witness = vec![None; candidates.len()];
    let mut scopes: BTreeMap<&BookmakerRef, Vec<usize>> = BTreeMap::new();
    for (i, c) in candidates.iter().enumerate() {
        scopes.entry(c.bookmaker()).or_default().push(i);
    }
    for scope in scopes.values() {
        filter_scope(candidates, scope, &mut keep, &mut witness);
    }
    assemble(candidates, &keep, &witness)
}

/// Keeps the Pareto frontier across all bookmakers.
pub fn inter_filter<T: Real>(candidates: &[CandidateBet<T>]) -> (Vec<CandidateBet<T>>, ReductionReport<T>) {
    let mut keep = vec![true; candidates.len()];
    let mut witness = vec![None; candidates.len()];
    let scope: Vec<usize> = (0..candidates.len()).collect();
    filter_scope(candidates, &scope, &mut keep, &mut witness);
    assemble(candidates, &keep, &witness)
}

pub fn apply_filter<T: Real>(
    candidates: &[CandidateBet<T>],
    mode: FilterMode,
) -> (Vec<CandidateBet<T>>, ReductionReport<T>) {
    match mode {
        FilterMode::None => (
            candidates.to_vec(),
            ReductionReport { input_count: candidates.len(), kept_count: candidates.len(), eliminated: vec![] },
        ),
        FilterMode::Intra => intra_filter(candidates),
        FilterMode::Inter => inter_filter(candidates),
    }
}

pub fn split_by_bookmaker<T: Real>(candidates: &[CandidateBet<T>]) -> BTreeMap<BookmakerRef, Vec<CandidateBet<T>>> {
    let mut parts: BTreeMap<BookmakerRef, Vec<CandidateBet<T>>> = BTreeMap::new();
    for c in candidates {
        parts.entry(c.bookmaker().clone()).or_default().push(c.clone());
    }
    parts
}

/// One line of the per-matchday reduction statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionRow {
    pub matchday: u32,
    pub mode: FilterMode,
    pub input_count: usize,
    pub kept_count: usize,
    /// For the inter mode: share of the intra-kept candidates that the inter test removes as well.
    pub incremental_vs_intra: Option<f64>,
}

impl ReductionRow {
    pub fn reduction(&self) -> f64 {
        if self.input_count == 0 {
            0.0
        } else {
            1.0 - self.kept_count as f64 / self.input_count as f64
        }
    }
}

pub fn reduction_stats<T: Real>(pools: &[MatchdayPool<T>], modes: &[FilterMode]) -> Vec<ReductionRow> {
    let mut rows = Vec::new();
    for pool in pools {
        let intra_kept = intra_filter(&pool.candidates).1.kept_count;
        for &mode in modes {
            let report = apply_filter(&pool.candidates, mode).1;
            let incremental_vs_intra = (mode == FilterMode::Inter && intra_kept > 0)
                .then(|| 1.0 - report.kept_count as f64 / intra_kept as f64);
            rows.push(ReductionRow {
                matchday: pool.matchday,
                mode,
                input_count: report.input_count,
                kept_count: report.kept_count,
                incremental_vs_intra,
            });
        }
    }
    rows
}

/// Writes `matchday,mode,input_count,kept_count`.
pub fn write_reduction_csv<W: Write>(rows: &[ReductionRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["matchday", "mode", "input_count", "kept_count"])?;
    for r in rows {
        w.write_record([r.matchday.to_string(), r.mode.to_string(), r.input_count.to_string(), r.kept_count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::test_support::bet;
    use crate::domain::Outcome;
    use proptest::prelude::*;

    fn brute_force(candidates: &[CandidateBet<f64>], same_bookmaker: bool) -> Vec<bool> {
        candidates
            .iter()
            .map(|c| {
                !candidates.iter().any(|d| {
                    (!same_bookmaker || d.bookmaker() == c.bookmaker())
                        && d.odds() >= c.odds()
                        && d.prob() >= c.prob()
                        && (d.odds() > c.odds() || d.prob() > c.prob())
                })
            })
            .collect()
    }

    fn kept_mask(candidates: &[CandidateBet<f64>], kept: &[CandidateBet<f64>]) -> Vec<bool> {
        candidates.iter().map(|c| kept.iter().any(|k| k.key() == c.key())).collect()
    }

    #[test]
    fn intra_example() {
        let a = bet(0, "B365", Outcome::Home, 2.0, 0.5);
        let b = bet(1, "B365", Outcome::Home, 1.8, 0.45);
        let c = bet(2, "B365", Outcome::Home, 3.0, 0.3);
        let (kept, report) = intra_filter(&[a.clone(), b.clone(), c.clone()]);
        assert_eq!(kept, vec![a.clone(), c]);
        assert_eq!(report.eliminated, vec![(b, a)]);
        assert_eq!(report.kept_count + report.eliminated.len(), report.input_count);
    }

    #[test]
    fn trivial_inputs() {
        let a = bet(0, "B365", Outcome::Home, 2.0, 0.5);
        assert_eq!(intra_filter(std::slice::from_ref(&a)).0, vec![a.clone()]);
        let twin = bet(1, "B365", Outcome::Away, 2.0, 0.5);
        assert_eq!(intra_filter(&[a.clone(), twin.clone()]).0.len(), 2);
        assert_eq!(inter_filter(&[a, twin]).0.len(), 2);
        assert!(inter_filter::<f64>(&[]).0.is_empty());
        assert!(split_by_bookmaker::<f64>(&[]).is_empty());
    }

    #[test]
    fn inter_crosses_bookmakers() {
        let a = bet(0, "B365", Outcome::Home, 2.0, 0.5);
        let b = bet(0, "BW", Outcome::Home, 2.1, 0.5);
        assert_eq!(inter_filter(&[a.clone(), b.clone()]).0, vec![b.clone()]);
        assert_eq!(intra_filter(&[a, b]).0.len(), 2);
    }

    #[test]
    fn single_bookmaker_inter_equals_intra() {
        let cands: Vec<_> = (0..20)
            .map(|i| bet(i, "IW", Outcome::Draw, 1.5 + (i * 7 % 11) as f64, 0.05 + (i * 3 % 13) as f64 / 20.0))
            .collect();
        assert_eq!(inter_filter(&cands).0, intra_filter(&cands).0);
    }

    #[test]
    fn witness_is_smallest_dominator() {
        let victim = bet(5, "B365", Outcome::Home, 2.0, 0.3);
        let d1 = bet(9, "B365", Outcome::Home, 2.5, 0.4);
        let d2 = bet(1, "B365", Outcome::Away, 2.2, 0.45);
        let (_, report) = intra_filter(&[victim.clone(), d1, d2.clone()]);
        assert_eq!(report.eliminated, vec![(victim, d2)]);
    }

    #[test]
    fn split_partitions_by_bookmaker() {
        let cands: Vec<_> = ["B365", "BW"]
            .iter()
            .flat_map(|b| Outcome::ALL.map(|o| bet(0, b, o, 3.0, 0.3)))
            .collect();
        let parts = split_by_bookmaker(&cands);
        assert_eq!(parts.len(), 2);
        assert!(parts.values().all(|p| p.len() == 3));
        for (b, part) in &parts {
            assert!(part.iter().all(|c| c.bookmaker() == b));
        }
    }

    fn pool_strategy() -> impl Strategy<Value = Vec<CandidateBet<f64>>> {
        // Coarse grids force plenty of ties on either coordinate.
        prop::collection::vec((0usize..5, 0usize..12, 0usize..3, 1u32..40, 1u32..20), 0..120).prop_map(|raw| {
            let books = ["B365", "BW", "GB", "IW", "LB"];
            let mut seen = std::collections::HashSet::new();
            raw.into_iter()
                .filter(|(b, m, o, _, _)| seen.insert((*b, *m, *o)))
                .map(|(b, m, o, odds, prob)| {
                    bet(m, books[b], Outcome::ALL[o], 1.0 + odds as f64 / 4.0, prob as f64 / 20.5)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn filters_match_brute_force(cands in pool_strategy()) {
            let (intra, intra_report) = intra_filter(&cands);
            let (inter, inter_report) = inter_filter(&cands);
            prop_assert_eq!(kept_mask(&cands, &intra), brute_force(&cands, true));
            prop_assert_eq!(kept_mask(&cands, &inter), brute_force(&cands, false));
            for k in &inter {
                prop_assert!(intra.iter().any(|c| c.key() == k.key()));
            }
            prop_assert_eq!(intra_filter(&intra).0, intra.clone());
            prop_assert_eq!(inter_filter(&inter).0, inter.clone());
            for report in [&intra_report, &inter_report] {
                prop_assert_eq!(report.kept_count + report.eliminated.len(), report.input_count);
                for (victim, dom) in &report.eliminated {
                    prop_assert!(dominates(dom, victim));
                }
            }
            for (_, dom) in &intra_report.eliminated {
                let on_frontier = intra.iter().any(|k| k.key() == dom.key());
                let covered = intra.iter().any(|k| k.bookmaker() == dom.bookmaker() && dominates(k, dom));
                prop_assert!(on_frontier || covered);
            }
            let parts = split_by_bookmaker(&cands);
            prop_assert_eq!(parts.values().map(Vec::len).sum::<usize>(), cands.len());
        }
    }
}
