//! Season CSV ingestion in the football-data.co.uk layout.
//!
//! Parsing is header driven. `Div`, `Date`, `HomeTeam`, `AwayTeam` and `FTR`
//! are mandatory; odds are read for the bookmakers in [`BOOKMAKERS`] and every
//! other column is ignored. A bookmaker whose triple is incomplete or invalid
//! on a row is dropped for that row only.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{BookmakerRef, CandidateBet, DomainError, MatchRef, Outcome};
use crate::scalar::Real;

/// Bookmaker column prefixes read from season files.
pub const BOOKMAKERS: [&str; 5] = ["B365", "BW", "GB", "IW", "LB"];

const MANDATORY: [&str; 5] = ["Div", "Date", "HomeTeam", "AwayTeam", "FTR"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing mandatory column {0}")]
    MissingColumn(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("duplicate fixture: {team} plays twice in {league} on {date}")]
    DuplicateFixture { league: String, team: String, date: NaiveDate },
    #[error("no probability estimate for {0}")]
    MissingEstimate(String),
    #[error("fixture {0} has no complete odds triple")]
    NoOdds(String),
    #[error("invalid probability row {row}: {reason}")]
    InvalidEstimate { row: usize, reason: String },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Non-fatal problem found while reading a file; the affected row or triple is skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestWarning {
    pub source: String,
    /// 1-based line number in the file (the header is line 1).
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OddsTriple<T> {
    pub home: T,
    pub draw: T,
    pub away: T,
}

impl<T: Copy> OddsTriple<T> {
    pub fn get(&self, outcome: Outcome) -> T {
        match outcome {
            Outcome::Home => self.home,
            Outcome::Draw => self.draw,
            Outcome::Away => self.away,
        }
    }
}

/// One historical fixture with its result and the odds each bookmaker offered.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureRecord<T> {
    pub league: String,
    pub date: NaiveDate,
    pub home_team: String,
    pub away_team: String,
    pub full_time_result: Outcome,
    pub odds_by_bookmaker: BTreeMap<BookmakerRef, OddsTriple<T>>,
}

impl<T> FixtureRecord<T> {
    pub fn label(&self) -> String {
        format!("{} {} {} v {}", self.league, self.date, self.home_team, self.away_team)
    }
}

#[derive(Debug, Clone)]
pub struct ParsedSeason<T> {
    pub records: Vec<FixtureRecord<T>>,
    pub warnings: Vec<IngestWarning>,
}

/// Accepts `dd/mm/yy` and `dd/mm/yyyy`.
pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    let mut parts = raw.trim().split('/');
    let day: u32 = parts.next()?.trim().parse().ok()?;
    let month: u32 = parts.next()?.trim().parse().ok()?;
    let year_raw = parts.next()?.trim();
    if parts.next().is_some() {
        return None;
    }
    let year: i32 = year_raw.parse().ok()?;
    let year = match year_raw.len() {
        2 if year >= 70 => 1900 + year,
        2 => 2000 + year,
        4 => year,
        _ => return None,
    };
    NaiveDate::from_ymd_opt(year, month, day)
}

struct Columns {
    mandatory: [usize; 5],
    bookmakers: Vec<(BookmakerRef, [usize; 3])>,
}

fn locate_columns(headers: &csv::StringRecord) -> Result<Columns, IngestError> {
    let index: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().trim_start_matches('\u{feff}'), i))
        .collect();
    let mut mandatory = [0usize; 5];
    for (slot, name) in mandatory.iter_mut().zip(MANDATORY) {
        *slot = *index.get(name).ok_or_else(|| IngestError::MissingColumn(name.to_string()))?;
    }
    let bookmakers: Vec<_> = BOOKMAKERS
        .iter()
        .filter_map(|code| {
            let col = |suffix: &str| index.get(format!("{code}{suffix}").as_str()).copied();
            Some((BookmakerRef::new(*code), [col("H")?, col("D")?, col("A")?]))
        })
        .collect();
    if bookmakers.is_empty() {
        return Err(IngestError::MissingColumn(format!("{}H", BOOKMAKERS[0])));
    }
    Ok(Columns { mandatory, bookmakers })
}

/// Parses one season file. `league` becomes the league identifier of every record.
pub fn parse_season_csv<T: Real, R: Read>(raw: R, league: &str) -> Result<ParsedSeason<T>, IngestError> {
    parse_season_csv_named(raw, league, league)
}

fn parse_season_csv_named<T: Real, R: Read>(
    raw: R,
    league: &str,
    source: &str,
) -> Result<ParsedSeason<T>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(raw);
    let columns = locate_columns(reader.headers()?)?;
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut warn = |line: usize, message: String| {
        tracing::warn!(source, line, "{message}");
        warnings.push(IngestWarning { source: source.to_string(), line, message });
    };

    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(i + 2);
        if row.iter().all(str::is_empty) {
            continue;
        }
        let field = |idx: usize| row.get(idx).unwrap_or("");
        let [_, date_col, home_col, away_col, ftr_col] = columns.mandatory;

        let ftr = field(ftr_col);
        if ftr.is_empty() {
            warn(line, "missing FTR, row rejected".into());
            continue;
        }
        let Ok(result) = ftr.parse::<Outcome>() else {
            warn(line, format!("unrecognised FTR {ftr:?}, row rejected"));
            continue;
        };
        let Some(date) = parse_date(field(date_col)) else {
            warn(line, format!("unparseable date {:?}, row rejected", field(date_col)));
            continue;
        };
        let (home, away) = (field(home_col), field(away_col));
        if home.is_empty() || away.is_empty() || home == away {
            warn(line, format!("invalid teams {home:?} v {away:?}, row rejected"));
            continue;
        }

        let mut odds_by_bookmaker = BTreeMap::new();
        for (bookmaker, cols) in &columns.bookmakers {
            let cells = cols.map(field);
            if cells.iter().any(|c| c.is_empty()) {
                continue;
            }
            let parsed: Option<Vec<f64>> = cells.iter().map(|c| c.parse::<f64>().ok()).collect();
            match parsed {
                Some(v) if v.iter().all(|&o| o > 1.0 && o.is_finite()) => {
                    odds_by_bookmaker.insert(
                        bookmaker.clone(),
                        OddsTriple { home: T::lit(v[0]), draw: T::lit(v[1]), away: T::lit(v[2]) },
                    );
                }
                _ => warn(line, format!("invalid {bookmaker} odds {cells:?}, triple dropped")),
            }
        }
        if odds_by_bookmaker.is_empty() {
            warn(line, "no complete odds triple, row rejected".into());
            continue;
        }
        records.push(FixtureRecord {
            league: league.to_string(),
            date,
            home_team: home.to_string(),
            away_team: away.to_string(),
            full_time_result: result,
            odds_by_bookmaker,
        });
    }
    Ok(ParsedSeason { records, warnings })
}

/// Writes fixtures back out in the same column layout [`parse_season_csv`] reads.
pub fn write_season_csv<T: Real, W: Write>(fixtures: &[FixtureRecord<T>], out: W) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header: Vec<String> =
        ["Div", "Date", "HomeTeam", "AwayTeam", "FTHG", "FTAG", "FTR"].map(String::from).to_vec();
    for code in BOOKMAKERS {
        for suffix in ["H", "D", "A"] {
            header.push(format!("{code}{suffix}"));
        }
    }
    writer.write_record(&header)?;
    for f in fixtures {
        let (hg, ag) = match f.full_time_result {
            Outcome::Home => ("1", "0"),
            Outcome::Draw => ("0", "0"),
            Outcome::Away => ("0", "1"),
        };
        let mut row = vec![
            f.league.clone(),
            format!("{:02}/{:02}/{:04}", f.date.day(), f.date.month(), f.date.year()),
            f.home_team.clone(),
            f.away_team.clone(),
            hg.to_string(),
            ag.to_string(),
            f.full_time_result.code().to_string(),
        ];
        for code in BOOKMAKERS {
            match f.odds_by_bookmaker.get(&BookmakerRef::new(code)) {
                Some(t) => row.extend([t.home, t.draw, t.away].map(|o| o.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), 3)),
            }
        }
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|source| IngestError::Io { path: PathBuf::from("<output>"), source })?;
    Ok(())
}

/// Assigns each fixture to a league round using per-team round counters.
///
/// Fixtures are processed in date order within each league. A fixture's
/// matchday is one past the larger of its two teams' counters, and both
/// counters move to that matchday, so no team appears twice in a round.
/// Returns one [`MatchRef`] per input fixture, in input order.
pub fn infer_matchdays<T>(fixtures: &[FixtureRecord<T>]) -> Result<Vec<MatchRef>, IngestError> {
    let mut order: Vec<usize> = (0..fixtures.len()).collect();
    order.sort_by(|&a, &b| {
        (&fixtures[a].league, fixtures[a].date, a).cmp(&(&fixtures[b].league, fixtures[b].date, b))
    });

    let mut counters: HashMap<(&str, &str), u32> = HashMap::new();
    let mut seen_on_date: HashSet<(&str, NaiveDate, &str)> = HashSet::new();
    let mut assigned = vec![0u32; fixtures.len()];
    for idx in order {
        let f = &fixtures[idx];
        for team in [&f.home_team, &f.away_team] {
            if !seen_on_date.insert((&f.league, f.date, team)) {
                return Err(IngestError::DuplicateFixture {
                    league: f.league.clone(),
                    team: team.clone(),
                    date: f.date,
                });
            }
        }
        let home = counters.get(&(f.league.as_str(), f.home_team.as_str())).copied().unwrap_or(0);
        let away = counters.get(&(f.league.as_str(), f.away_team.as_str())).copied().unwrap_or(0);
        let matchday = home.max(away) + 1;
        counters.insert((&f.league, &f.home_team), matchday);
        counters.insert((&f.league, &f.away_team), matchday);
        assigned[idx] = matchday;
    }

    fixtures
        .iter()
        .zip(assigned)
        .map(|(f, md)| MatchRef::new(&f.league, md, &f.home_team, &f.away_team).map_err(Into::into))
        .collect()
}

/// Estimated outcome probabilities of one fixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityTriple<T> {
    pub home: T,
    pub draw: T,
    pub away: T,
}

impl<T: Real> ProbabilityTriple<T> {
    fn tolerance() -> T {
        T::lit(1e-9).max(T::epsilon() * T::lit(64.0))
    }

    pub fn new(home: T, draw: T, away: T) -> Result<Self, DomainError> {
        for p in [home, draw, away] {
            if !(p > T::zero() && p < T::one()) {
                return Err(DomainError::InvalidProbability(p.to_f64_lossy()));
            }
        }
        let sum = home + draw + away;
        if (sum - T::one()).abs() > Self::tolerance() {
            return Err(DomainError::InvalidProbability(sum.to_f64_lossy()));
        }
        Ok(Self { home, draw, away })
    }

    /// Rescales three positive weights so they sum to one.
    pub fn normalized(home: T, draw: T, away: T) -> Result<Self, DomainError> {
        for w in [home, draw, away] {
            if !(w > T::zero()) || !w.is_finite() {
                return Err(DomainError::InvalidProbability(w.to_f64_lossy()));
            }
        }
        let sum = home + draw + away;
        Self::new(home / sum, draw / sum, away / sum)
    }

    pub fn get(&self, outcome: Outcome) -> T {
        match outcome {
            Outcome::Home => self.home,
            Outcome::Draw => self.draw,
            Outcome::Away => self.away,
        }
    }
}

type FixtureKey = (String, NaiveDate, String, String);

/// Probabilities supplied by an external feed, keyed by (league, date, home, away).
#[derive(Debug, Clone, Default)]
pub struct ExternalProbabilities<T> {
    entries: HashMap<FixtureKey, ProbabilityTriple<T>>,
}

impl<T: Real> ExternalProbabilities<T> {
    /// Reads `League,Date,HomeTeam,AwayTeam,PH,PD,PA`; each row is renormalised to sum to one.
    pub fn from_csv<R: Read>(raw: R) -> Result<Self, IngestError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(raw);
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim_start_matches('\u{feff}') == name)
                .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
        };
        let cols = [col("League")?, col("Date")?, col("HomeTeam")?, col("AwayTeam")?, col("PH")?, col("PD")?, col("PA")?];
        let mut entries = HashMap::new();
        for (i, row) in reader.records().enumerate() {
            let row = row?;
            let line = i + 2;
            let get = |k: usize| row.get(cols[k]).unwrap_or("");
            let date = parse_date(get(1))
                .ok_or_else(|| IngestError::InvalidEstimate { row: line, reason: format!("bad date {:?}", get(1)) })?;
            let mut p = [T::zero(); 3];
            for (slot, k) in p.iter_mut().zip(4..7) {
                let v: f64 = get(k).parse().map_err(|_| IngestError::InvalidEstimate {
                    row: line,
                    reason: format!("bad probability {:?}", get(k)),
                })?;
                *slot = T::lit(v);
            }
            let triple = ProbabilityTriple::normalized(p[0], p[1], p[2])
                .map_err(|e| IngestError::InvalidEstimate { row: line, reason: e.to_string() })?;
            entries.insert((get(0).to_string(), date, get(2).to_string(), get(3).to_string()), triple);
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, league: &str, date: NaiveDate, home: &str, away: &str, p: ProbabilityTriple<T>) {
        self.entries.insert((league.to_string(), date, home.to_string(), away.to_string()), p);
    }

    pub fn get(&self, f: &FixtureRecord<T>) -> Option<ProbabilityTriple<T>> {
        self.entries
            .get(&(f.league.clone(), f.date, f.home_team.clone(), f.away_team.clone()))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Source of outcome probabilities.
#[derive(Debug, Clone, Default)]
pub enum Estimator<T> {
    /// Mean inverse odds over the available bookmakers, normalised to remove the overround.
    #[default]
    InverseOdds,
    External(ExternalProbabilities<T>),
}

pub fn estimate_probabilities<T: Real>(
    fixture: &FixtureRecord<T>,
    estimator: &Estimator<T>,
) -> Result<ProbabilityTriple<T>, IngestError> {
    match estimator {
        Estimator::InverseOdds => {
            if fixture.odds_by_bookmaker.is_empty() {
                return Err(IngestError::NoOdds(fixture.label()));
            }
            let n = T::from_usize(fixture.odds_by_bookmaker.len()).unwrap_or_else(T::one);
            let mean_inverse = |outcome| {
                fixture.odds_by_bookmaker.values().map(|t| t.get(outcome).recip()).sum::<T>() / n
            };
            Ok(ProbabilityTriple::normalized(
                mean_inverse(Outcome::Home),
                mean_inverse(Outcome::Draw),
                mean_inverse(Outcome::Away),
            )?)
        }
        Estimator::External(feed) => {
            feed.get(fixture).ok_or_else(|| IngestError::MissingEstimate(fixture.label()))
        }
    }
}

/// Candidate bets and results of one round across every loaded league.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchdayPool<T> {
    pub matchday: u32,
    /// Sorted by (bookmaker, match, outcome).
    pub candidates: Vec<CandidateBet<T>>,
    pub results: BTreeMap<MatchRef, Outcome>,
}

impl<T: Real> MatchdayPool<T> {
    pub fn fixture_count(&self) -> usize {
        self.results.len()
    }

    pub fn bookmakers(&self) -> Vec<BookmakerRef> {
        let mut b: Vec<_> = self.candidates.iter().map(|c| c.bookmaker().clone()).collect();
        b.dedup();
        b
    }
}

/// Emits one candidate per (fixture, complete bookmaker triple, outcome), grouped into rounds.
///
/// `probabilities` and `matchdays` are parallel to `fixtures`; fixtures without
/// a probability estimate are left out.
pub fn build_candidates<T: Real>(
    fixtures: &[FixtureRecord<T>],
    probabilities: &[Option<ProbabilityTriple<T>>],
    matchdays: &[MatchRef],
) -> Result<Vec<MatchdayPool<T>>, IngestError> {
    let mut pools: BTreeMap<u32, MatchdayPool<T>> = BTreeMap::new();
    for ((fixture, prob), match_ref) in fixtures.iter().zip(probabilities).zip(matchdays) {
        let Some(prob) = prob else { continue };
        let pool = pools.entry(match_ref.matchday).or_insert_with(|| MatchdayPool {
            matchday: match_ref.matchday,
            candidates: Vec::new(),
            results: BTreeMap::new(),
        });
        pool.results.insert(match_ref.clone(), fixture.full_time_result);
        for (bookmaker, odds) in &fixture.odds_by_bookmaker {
            for outcome in Outcome::ALL {
                pool.candidates.push(CandidateBet::new(
                    match_ref.clone(),
                    bookmaker.clone(),
                    outcome,
                    odds.get(outcome),
                    prob.get(outcome),
                )?);
            }
        }
    }
    let mut pools: Vec<_> = pools.into_values().collect();
    for pool in &mut pools {
        pool.candidates.sort_by(|a, b| a.key().cmp(&b.key()));
    }
    Ok(pools)
}

/// Everything loaded for a season: fixtures, their rounds and the per-round pools.
#[derive(Debug, Clone)]
pub struct Season<T> {
    pub fixtures: Vec<FixtureRecord<T>>,
    pub matches: Vec<MatchRef>,
    pub probabilities: Vec<Option<ProbabilityTriple<T>>>,
    pub pools: Vec<MatchdayPool<T>>,
    pub warnings: Vec<IngestWarning>,
}

impl<T: Real> Season<T> {
    /// Builds a season from already parsed fixtures (any number of leagues).
    pub fn from_fixtures(
        fixtures: Vec<FixtureRecord<T>>,
        estimator: &Estimator<T>,
        mut warnings: Vec<IngestWarning>,
    ) -> Result<Self, IngestError> {
        let matches = infer_matchdays(&fixtures)?;
        let probabilities: Vec<_> = fixtures
            .iter()
            .map(|f| match estimate_probabilities(f, estimator) {
                Ok(p) => Some(p),
                Err(e) => {
                    tracing::warn!("{e}; fixture excluded");
                    warnings.push(IngestWarning { source: f.league.clone(), line: 0, message: format!("{e}; fixture excluded") });
                    None
                }
            })
            .collect();
        let pools = build_candidates(&fixtures, &probabilities, &matches)?;
        Ok(Self { fixtures, matches, probabilities, pools, warnings })
    }

    /// Loads season files; each file's stem (e.g. `E0`) is used as its league identifier.
    pub fn load(paths: &[PathBuf], estimator: &Estimator<T>) -> Result<Self, IngestError> {
        let mut fixtures = Vec::new();
        let mut warnings = Vec::new();
        for path in paths {
            let league = league_from_path(path);
            let file = File::open(path).map_err(|source| IngestError::Io { path: path.clone(), source })?;
            let parsed = parse_season_csv_named(file, &league, &path.display().to_string())?;
            fixtures.extend(parsed.records);
            warnings.extend(parsed.warnings);
        }
        Self::from_fixtures(fixtures, estimator, warnings)
    }

    pub fn pool(&self, matchday: u32) -> Option<&MatchdayPool<T>> {
        self.pools.iter().find(|p| p.matchday == matchday)
    }

    /// Matchdays between 1 and the last loaded round that have no pool.
    pub fn missing_matchdays(&self) -> Vec<u32> {
        let last = self.pools.last().map_or(0, |p| p.matchday);
        let present: HashSet<u32> = self.pools.iter().map(|p| p.matchday).collect();
        (1..=last).filter(|md| !present.contains(md)).collect()
    }
}

pub fn league_from_path(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "league".into())
}
