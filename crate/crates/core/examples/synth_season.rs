//! Generates a synthetic four-league season in the football-data.co.uk layout.
//!
//! Each league is a double round robin. Match probabilities come from a simple
//! strength model; every bookmaker quotes the true probabilities with its own
//! noise and margin, and results are drawn from the true probabilities. The true
//! probabilities are written as an external estimate feed next to the odds.
//!
//! Usage: cargo run -p accabet-core --example synth_season -- <out-dir> [seed]

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::PathBuf;

use accabet_core::domain::{BookmakerRef, Outcome};
use accabet_core::ingest::{write_season_csv, OddsTriple, BOOKMAKERS};
use accabet_core::FixtureRecord;
use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const LEAGUES: [(&str, usize, (i32, u32, u32)); 4] =
    [("E0", 20, (2015, 8, 8)), ("SP1", 20, (2015, 8, 21)), ("I1", 20, (2015, 8, 22)), ("D1", 18, (2015, 8, 14))];

const HOME_ADVANTAGE: f64 = 0.3;
const DRAW_BAND: f64 = 0.6;
const QUOTE_NOISE: f64 = 0.06;
const MARGINS: [f64; 5] = [0.05, 0.07, 0.06, 0.08, 0.065];

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn true_probabilities(home_strength: f64, away_strength: f64) -> [f64; 3] {
    let d = home_strength - away_strength + HOME_ADVANTAGE;
    let home = logistic(d - DRAW_BAND);
    let away = logistic(-d - DRAW_BAND);
    [home, 1.0 - home - away, away]
}

fn quote(p: &[f64; 3], margin: f64, rng: &mut ChaCha8Rng) -> OddsTriple<f64> {
    let noise = Normal::new(0.0, QUOTE_NOISE).expect("valid deviation");
    let perceived: Vec<f64> = p.iter().map(|&x| x * f64::exp(noise.sample(rng))).collect();
    let total: f64 = perceived.iter().sum();
    let odds: Vec<f64> = perceived
        .iter()
        .map(|&x| {
            let o = 1.0 / (x / total * (1.0 + margin));
            ((o * 100.0).round() / 100.0).max(1.01)
        })
        .collect();
    OddsTriple { home: odds[0], draw: odds[1], away: odds[2] }
}

/// Circle-method pairings for a double round robin, one round per week.
fn schedule(teams: usize, start: NaiveDate) -> Vec<(NaiveDate, usize, usize)> {
    let rounds = teams - 1;
    let mut ring: Vec<usize> = (1..teams).collect();
    let mut out = Vec::new();
    for leg in 0..2 {
        for r in 0..rounds {
            let week = start + Duration::weeks((leg * rounds + r) as i64);
            let mut pairs = vec![(0, ring[0])];
            for k in 1..teams / 2 {
                pairs.push((ring[k], ring[teams - 1 - k]));
            }
            for (k, (a, b)) in pairs.into_iter().enumerate() {
                let (h, w) = if (r + k) % 2 == 0 { (a, b) } else { (b, a) };
                let (h, w) = if leg == 1 { (w, h) } else { (h, w) };
                // Spread each round over Saturday, Sunday and Monday.
                out.push((week + Duration::days((k % 3) as i64), h, w));
            }
            ring.rotate_right(1);
        }
    }
    out
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out_dir = PathBuf::from(args.next().unwrap_or_else(|| "data/synthetic-2015-16".into()));
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2015);
    fs::create_dir_all(&out_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strength = Normal::new(0.0, 0.45)?;

    let feed_path = out_dir.with_extension("probabilities.csv");
    let mut feed = csv::Writer::from_writer(File::create(&feed_path)?);
    feed.write_record(["League", "Date", "HomeTeam", "AwayTeam", "PH", "PD", "PA"])?;

    for (league, teams, (y, m, d)) in LEAGUES {
        let names: Vec<String> = (1..=teams).map(|t| format!("{league} Club {t:02}")).collect();
        let strengths: Vec<f64> = (0..teams).map(|_| strength.sample(&mut rng)).collect();
        let start = NaiveDate::from_ymd_opt(y, m, d).ok_or("bad start date")?;
        let mut fixtures = Vec::new();
        for (date, h, w) in schedule(teams, start) {
            let p = true_probabilities(strengths[h], strengths[w]);
            let u: f64 = rng.random();
            let result = if u < p[0] {
                Outcome::Home
            } else if u < p[0] + p[1] {
                Outcome::Draw
            } else {
                Outcome::Away
            };
            let mut odds = BTreeMap::new();
            for (code, margin) in BOOKMAKERS.iter().zip(MARGINS) {
                odds.insert(BookmakerRef::new(*code), quote(&p, margin, &mut rng));
            }
            feed.write_record([
                league.to_string(),
                format!("{:02}/{:02}/{}", date.day(), date.month(), date.year()),
                names[h].clone(),
                names[w].clone(),
                format!("{:.6}", p[0]),
                format!("{:.6}", p[1]),
                format!("{:.6}", p[2]),
            ])?;
            fixtures.push(FixtureRecord {
                league: league.to_string(),
                date,
                home_team: names[h].clone(),
                away_team: names[w].clone(),
                full_time_result: result,
                odds_by_bookmaker: odds,
            });
        }
        let path = out_dir.join(format!("{league}.csv"));
        write_season_csv(&fixtures, File::create(&path)?)?;
        println!("wrote {} ({} fixtures)", path.display(), fixtures.len());
    }
    feed.flush()?;
    println!("wrote {}", feed_path.display());
    Ok(())
}
