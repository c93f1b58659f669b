//! HTTP+JSON front end over a loaded season: matchday browsing, solver
//! recommendations, what-if evaluation, backtests and per-session ledgers.

pub mod api;

use std::collections::{BTreeMap, HashMap};
use std::convert::Infallible;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use accabet_core::backtest::{run_season_with, summarize, BacktestOptions, StrategyCombo};
use accabet_core::domain::{accumulator_totals, validate_accumulator, Accumulator, MatchRef, Outcome, Violation};
use accabet_core::dominance::{apply_filter, split_by_bookmaker, FilterMode};
use accabet_core::ingest::{Estimator, ExternalProbabilities, Season};
use accabet_core::solver::{sds_search, StopReason};
use accabet_core::staking::{accumulator_moments, kelly_fraction, split_singles_moments, variance_adjusted_stake};
use axum::body::Body;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::StreamExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use api::*;

/// Solver time budget for interactive calls, in seconds.
pub const INTERACTIVE_TIME_CAP: f64 = 30.0;
/// Default per-matchday budget for backtests started over HTTP, in seconds.
pub const BACKTEST_DEFAULT_TIME: f64 = 5.0;
pub const DEFAULT_BACKTEST_BANKROLL: &str = "1000.00";

/// A loaded season; never modified after loading.
pub struct Dataset {
    pub season: Season<f64>,
    pub sources: Vec<PathBuf>,
}

impl Dataset {
    pub fn load(files: &[PathBuf], probabilities: Option<&Path>) -> Result<Self, String> {
        if files.is_empty() {
            return Err("no season files given".into());
        }
        let estimator = match probabilities {
            Some(p) => {
                let file = std::fs::File::open(p).map_err(|e| format!("{}: {e}", p.display()))?;
                Estimator::External(ExternalProbabilities::from_csv(file).map_err(|e| format!("{}: {e}", p.display()))?)
            }
            None => Estimator::InverseOdds,
        };
        let season = Season::load(files, &estimator).map_err(|e| e.to_string())?;
        Ok(Self { season, sources: files.to_vec() })
    }
}

/// Expands directories into the `.csv` files they contain, sorted by name.
pub fn resolve_paths(inputs: &[String]) -> Result<Vec<PathBuf>, String> {
    let mut files = Vec::new();
    for input in inputs {
        let path = PathBuf::from(input);
        if path.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(&path)
                .map_err(|e| format!("{input}: {e}"))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
                .collect();
            found.sort();
            if found.is_empty() {
                return Err(format!("{input}: no .csv files"));
            }
            files.extend(found);
        } else if path.is_file() {
            files.push(path);
        } else {
            return Err(format!("{input}: no such file or directory"));
        }
    }
    Ok(files)
}

struct Session {
    initial_cents: i64,
    bankroll_cents: i64,
    base_cents: i64,
    entries: Vec<SessionEntry>,
}

#[derive(Default)]
struct Inner {
    dataset: RwLock<Option<Arc<Dataset>>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

#[derive(Clone, Default)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_dataset(dataset: Dataset) -> Self {
        let state = Self::default();
        state.set_dataset(dataset);
        state
    }

    pub fn set_dataset(&self, dataset: Dataset) {
        *self.inner.dataset.write().expect("dataset lock") = Some(Arc::new(dataset));
    }

    fn dataset(&self) -> Result<Arc<Dataset>, ApiError> {
        self.inner
            .dataset
            .read()
            .expect("dataset lock")
            .clone()
            .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no dataset loaded"))
    }

    fn session(&self, token: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.inner
            .sessions
            .lock()
            .expect("session table lock")
            .get(token)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {token}")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, msg: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { error: msg.into(), violations: Vec::new() } }
    }

    fn bad_request(msg: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, msg)
    }

    fn unprocessable(msg: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, msg)
    }

    fn infeasible(violations: Vec<Violation>) -> Self {
        let msg = violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
        Self { status: StatusCode::UNPROCESSABLE_ENTITY, body: ErrorBody { error: format!("infeasible accumulator: {msg}"), violations } }
    }

    fn internal(msg: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, msg)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/load", post(load))
        .route("/matchdays", get(matchdays))
        .route("/matchdays/{matchday}/candidates", get(candidates))
        .route("/recommend", post(recommend))
        .route("/whatif", post(whatif))
        .route("/backtest", post(backtest))
        .route("/sessions", post(new_session))
        .route("/sessions/{token}", get(get_session))
        .route("/sessions/{token}/wagers", post(record_wager))
        .with_state(state)
}

pub async fn serve(addr: &str, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))
}

async fn load(State(state): State<AppState>, Json(req): Json<LoadRequest>) -> Result<Json<LoadResponse>, ApiError> {
    let dataset = blocking(move || {
        let files = resolve_paths(&req.paths)?;
        Dataset::load(&files, req.probabilities.as_deref().map(Path::new))
    })
    .await?
    .map_err(ApiError::bad_request)?;
    let season = &dataset.season;
    let mut leagues: Vec<String> = season.fixtures.iter().map(|f| f.league.clone()).collect();
    leagues.sort();
    leagues.dedup();
    let response = LoadResponse {
        leagues,
        fixtures: season.fixtures.len(),
        matchdays: season.pools.len(),
        warning_count: season.warnings.len(),
        warnings: season.warnings.iter().take(20).map(|w| format!("{}:{}: {}", w.source, w.line, w.message)).collect(),
    };
    state.set_dataset(dataset);
    Ok(Json(response))
}

async fn matchdays(State(state): State<AppState>) -> Result<Json<Vec<MatchdaySummary>>, ApiError> {
    let dataset = state.dataset()?;
    let rows = blocking(move || {
        dataset
            .season
            .pools
            .iter()
            .map(|pool| MatchdaySummary {
                matchday: pool.matchday,
                fixtures: pool.fixture_count(),
                bookmakers: pool.bookmakers().iter().map(|b| b.code().to_string()).collect(),
                candidates: pool.candidates.len(),
                kept: KeptCounts {
                    none: pool.candidates.len(),
                    intra: apply_filter(&pool.candidates, FilterMode::Intra).1.kept_count,
                    inter: apply_filter(&pool.candidates, FilterMode::Inter).1.kept_count,
                },
            })
            .collect()
    })
    .await?;
    Ok(Json(rows))
}

async fn candidates(
    State(state): State<AppState>,
    UrlPath(matchday): UrlPath<u32>,
    Query(q): Query<FilterQuery>,
) -> Result<Json<CandidatesResponse>, ApiError> {
    let dataset = state.dataset()?;
    let pool = dataset
        .season
        .pool(matchday)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no matchday {matchday}")))?;
    let filter = q.filter.unwrap_or_default();
    let (_, report) = apply_filter(&pool.candidates, filter);
    let witnesses: BTreeMap<_, _> = report.eliminated.iter().map(|(bet, by)| (bet.key(), by)).collect();
    let candidates = pool
        .candidates
        .iter()
        .map(|c| {
            let by = witnesses.get(&c.key());
            CandidateView { leg: Leg::from_bet(c), exp: c.exp(), kept: by.is_none(), dominated_by: by.map(|b| Leg::from_bet(b)) }
        })
        .collect();
    Ok(Json(CandidatesResponse { matchday, filter, candidates }))
}

async fn recommend(State(state): State<AppState>, Json(req): Json<RecommendRequest>) -> Result<Json<RecommendResponse>, ApiError> {
    let params = req.params.to_params(INTERACTIVE_TIME_CAP, INTERACTIVE_TIME_CAP).map_err(ApiError::bad_request)?;
    let dataset = state.dataset()?;
    let matchday = req.matchday;
    if dataset.season.pool(matchday).is_none() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("no matchday {matchday}")));
    }
    let outcome = blocking(move || {
        let pool = dataset.season.pool(matchday).expect("checked above");
        let (efficient, _) = apply_filter(&pool.candidates, params.filter_mode);
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        sds_search(&split_by_bookmaker(&efficient), &params, &mut rng)
    })
    .await?
    .map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(match outcome.best {
        Some((acc, totals)) => RecommendResponse::Bet {
            matchday,
            accumulator: accumulator_view(acc.legs()),
            totals: totals.into(),
            kelly_fraction: kelly_fraction(totals.prob, totals.odds),
            variance_adjusted: variance_adjusted_stake(totals.prob, totals.odds),
        },
        None => RecommendResponse::NoBet { matchday, no_bet: stop_label(outcome.reason) },
    }))
}

fn stop_label(reason: StopReason) -> String {
    format!("{reason:?}")
}

fn parse_legs(legs: &[Leg]) -> Result<Accumulator<f64>, ApiError> {
    let bets = legs.iter().map(Leg::to_bet).collect::<Result<Vec<_>, _>>().map_err(ApiError::bad_request)?;
    let acc = Accumulator::from_legs_unchecked(bets);
    let violations = validate_accumulator(&acc);
    if violations.is_empty() {
        Ok(acc)
    } else {
        Err(ApiError::infeasible(violations))
    }
}

async fn whatif(Json(req): Json<WhatIfRequest>) -> Result<Json<WhatIfResponse>, ApiError> {
    let acc = parse_legs(&req.legs)?;
    let bankroll = req.bankroll.as_deref().map(parse_money).transpose().map_err(ApiError::bad_request)?;
    let totals = accumulator_totals(&acc).map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let pairs: Vec<(f64, f64)> = acc.legs().iter().map(|l| (l.odds(), l.prob())).collect();
    let kelly = kelly_fraction(totals.prob, totals.odds);
    let va = variance_adjusted_stake(totals.prob, totals.odds);
    let stake = |fraction: f64| bankroll.map(|cents| format_cents((cents as f64 * fraction).floor() as i64));
    Ok(Json(WhatIfResponse {
        totals: totals.into(),
        kelly_fraction: kelly,
        variance_adjusted: va,
        moments: MomentsPair { accumulator: accumulator_moments(&pairs).into(), split_singles: split_singles_moments(&pairs).into() },
        kelly_stake: stake(kelly),
        variance_adjusted_stake: stake(va),
    }))
}

async fn backtest(State(state): State<AppState>, Json(req): Json<BacktestRequest>) -> Result<Response, ApiError> {
    let combo: StrategyCombo = req.combo.parse().map_err(|e: accabet_core::backtest::BacktestError| ApiError::bad_request(e.to_string()))?;
    let params = req.params.to_params(BACKTEST_DEFAULT_TIME, INTERACTIVE_TIME_CAP).map_err(ApiError::bad_request)?;
    let initial_cents =
        parse_money(req.initial_bankroll.as_deref().unwrap_or(DEFAULT_BACKTEST_BANKROLL)).map_err(ApiError::bad_request)?;
    if initial_cents == 0 {
        return Err(ApiError::bad_request("initial_bankroll must be positive"));
    }
    let initial = initial_cents as f64 / 100.0;
    let dataset = state.dataset()?;

    if req.stream {
        let (tx, mut rx) = tokio::sync::mpsc::unbounded_channel::<String>();
        tokio::task::spawn_blocking(move || {
            let mut progress = |e: &accabet_core::backtest::LedgerEntry<f64>| {
                let line = serde_json::json!({ "event": "matchday", "entry": LedgerView::new(e, initial) });
                let _ = tx.send(format!("{line}\n"));
            };
            let result =
                run_season_with(&dataset.season.pools, combo, &params, initial, BacktestOptions::default(), &mut progress);
            let last = match result {
                Ok(ledger) => {
                    let final_bankroll = ledger.last().map_or(initial, |e| e.bankroll_after);
                    serde_json::json!({ "event": "summary", "combo": combo.code(), "summary": SummaryView::new(&summarize(&ledger), final_bankroll) })
                }
                Err(e) => serde_json::json!({ "event": "error", "error": e.to_string() }),
            };
            let _ = tx.send(format!("{last}\n"));
        });
        let stream = futures::stream::poll_fn(move |cx| rx.poll_recv(cx)).map(Ok::<_, Infallible>);
        return Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from_stream(stream)).into_response());
    }

    let ledger = blocking(move || {
        run_season_with(&dataset.season.pools, combo, &params, initial, BacktestOptions::default(), &mut |_| {})
    })
    .await?
    .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let final_bankroll = ledger.last().map_or(initial, |e| e.bankroll_after);
    Ok(Json(BacktestResponse {
        combo: combo.code().to_string(),
        summary: SummaryView::new(&summarize(&ledger), final_bankroll),
        ledger: ledger.iter().map(|e| LedgerView::new(e, initial)).collect(),
    })
    .into_response())
}

fn session_view(token: &str, s: &Session) -> SessionView {
    SessionView {
        token: token.to_string(),
        initial_bankroll: format_cents(s.initial_cents),
        bankroll: format_cents(s.bankroll_cents),
        staking_base: format_cents(s.base_cents),
        entries: s.entries.clone(),
    }
}

async fn new_session(State(state): State<AppState>, Json(req): Json<NewSessionRequest>) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let cents = parse_money(&req.bankroll).map_err(ApiError::bad_request)?;
    let token = uuid::Uuid::new_v4().simple().to_string();
    let session = Session { initial_cents: cents, bankroll_cents: cents, base_cents: cents, entries: Vec::new() };
    let view = session_view(&token, &session);
    state.inner.sessions.lock().expect("session table lock").insert(token, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(state): State<AppState>, UrlPath(token): UrlPath<String>) -> Result<Json<SessionView>, ApiError> {
    let session = state.session(&token)?;
    let guard = session.lock().expect("session lock");
    Ok(Json(session_view(&token, &guard)))
}

/// Records a wager and settles it at once against the loaded results.
async fn record_wager(
    State(state): State<AppState>,
    UrlPath(token): UrlPath<String>,
    Json(req): Json<RecordWagerRequest>,
) -> Result<Json<SessionView>, ApiError> {
    let session = state.session(&token)?;
    let amount = parse_money(&req.amount).map_err(ApiError::bad_request)?;
    let acc = parse_legs(&req.legs)?;
    let dataset = state.dataset()?;
    let mut results: BTreeMap<&MatchRef, Outcome> = BTreeMap::new();
    for leg in acc.legs() {
        let m = leg.match_ref();
        let result = dataset
            .season
            .pool(m.matchday)
            .and_then(|p| p.results.get(m))
            .ok_or_else(|| ApiError::unprocessable(format!("no result for {m}")))?;
        results.insert(m, *result);
    }
    let won = acc.legs().iter().all(|l| results[l.match_ref()] == l.outcome());
    let odds = accumulator_totals(&acc).map_err(|e| ApiError::unprocessable(e.to_string()))?.odds;

    let mut s = session.lock().expect("session lock");
    if amount > s.bankroll_cents {
        return Err(ApiError::unprocessable(format!(
            "amount {} exceeds bankroll {}",
            format_cents(amount),
            format_cents(s.bankroll_cents)
        )));
    }
    let net = if amount == 0 {
        0
    } else if won {
        (amount as f64 * (odds - 1.0)).round() as i64
    } else {
        -amount
    };
    s.bankroll_cents += net;
    s.base_cents = s.base_cents.min(s.bankroll_cents);
    let mut matchdays: Vec<u32> = acc.legs().iter().map(|l| l.match_ref().matchday).collect();
    matchdays.dedup();
    let entry = SessionEntry {
        matchday: (matchdays.len() == 1).then(|| matchdays[0]),
        legs: req.legs,
        amount: format_cents(amount),
        won: (amount > 0).then_some(won),
        net_gain: format_cents(net),
        bankroll: format_cents(s.bankroll_cents),
        staking_base: format_cents(s.base_cents),
    };
    s.entries.push(entry);
    Ok(Json(session_view(&token, &s)))
}
