use std::path::{Path, PathBuf};

use accabet_service::{router, AppState};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const BOOKMAKERS: [&str; 5] = ["B365", "BW", "GB", "IW", "LB"];

fn synthetic_e0() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic-2015-16/E0.csv").display().to_string()
}

/// One round of ten home-heavy fixtures; the probability feed makes every
/// home leg at B365 worth 0.8 * 3.0 = 2.4.
fn generous_round(dir: &Path) -> (PathBuf, PathBuf) {
    let mut season = String::from("Div,Date,HomeTeam,AwayTeam,FTHG,FTAG,FTR");
    for b in BOOKMAKERS {
        season.push_str(&format!(",{b}H,{b}D,{b}A"));
    }
    season.push('\n');
    let mut feed = String::from("League,Date,HomeTeam,AwayTeam,PH,PD,PA\n");
    for i in 0..10 {
        let (home, away) = (format!("Home {i}"), format!("Away {i}"));
        season.push_str(&format!("T1,08/08/2015,{home},{away},2,0,H"));
        for (k, _) in BOOKMAKERS.iter().enumerate() {
            let h = if k == 0 { 3.0 } else { 1.2 };
            season.push_str(&format!(",{h},6.0,12.0"));
        }
        season.push('\n');
        feed.push_str(&format!("T1,08/08/2015,{home},{away},0.8,0.12,0.08\n"));
    }
    let season_path = dir.join("T1.csv");
    let feed_path = dir.join("T1.probabilities.csv");
    std::fs::write(&season_path, season).unwrap();
    std::fs::write(&feed_path, feed).unwrap();
    (season_path, feed_path)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, value)
}

async fn loaded(paths: Vec<String>, probabilities: Option<String>) -> Router {
    let app = router(AppState::new());
    let (status, body) = call(&app, "POST", "/load", Some(json!({ "paths": paths, "probabilities": probabilities }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    app
}

async fn generous_app() -> (Router, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let (season, feed) = generous_round(dir.path());
    let app = loaded(vec![season.display().to_string()], Some(feed.display().to_string())).await;
    (app, dir)
}

fn leg(home: &str, away: &str, outcome: &str, odds: f64, prob: f64) -> Value {
    json!({
        "league": "T1", "matchday": 1, "home_team": home, "away_team": away,
        "bookmaker": "B365", "outcome": outcome, "odds": odds, "prob": prob
    })
}

#[tokio::test]
async fn endpoints_need_a_dataset() {
    let app = router(AppState::new());
    assert_eq!(call(&app, "GET", "/matchdays", None).await.0, StatusCode::CONFLICT);
    let (status, _) = call(&app, "POST", "/recommend", Some(json!({ "matchday": 1 }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(&app, "POST", "/backtest", Some(json!({ "combo": "singles-va" }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn load_reports_bad_paths() {
    let app = router(AppState::new());
    let (status, body) = call(&app, "POST", "/load", Some(json!({ "paths": ["/nonexistent/E0.csv"] }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("/nonexistent/E0.csv"));
}

#[tokio::test]
async fn matchday_summaries_cover_the_season() {
    let app = loaded(vec![synthetic_e0()], None).await;
    let (status, body) = call(&app, "GET", "/matchdays", None).await;
    assert_eq!(status, StatusCode::OK);
    let rows = body.as_array().unwrap();
    assert_eq!(rows.len(), 38);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row["matchday"], i as u64 + 1);
        assert_eq!(row["fixtures"], 10);
        assert_eq!(row["bookmakers"].as_array().unwrap().len(), 5);
        assert_eq!(row["candidates"], 150);
        let kept = &row["kept"];
        assert_eq!(kept["none"], 150);
        assert!(kept["inter"].as_u64().unwrap() <= kept["intra"].as_u64().unwrap());
        assert!(kept["intra"].as_u64().unwrap() <= 150);
    }
}

#[tokio::test]
async fn candidates_carry_dominance_witnesses() {
    let app = loaded(vec![synthetic_e0()], None).await;
    let (status, body) = call(&app, "GET", "/matchdays/1/candidates?filter=inter", None).await;
    assert_eq!(status, StatusCode::OK);
    let cands = body["candidates"].as_array().unwrap();
    assert_eq!(cands.len(), 150);
    for c in cands {
        match c["dominated_by"].as_object() {
            None => assert_eq!(c["kept"], true),
            Some(w) => {
                assert_eq!(c["kept"], false);
                let (wo, wp) = (w["odds"].as_f64().unwrap(), w["prob"].as_f64().unwrap());
                let (o, p) = (c["odds"].as_f64().unwrap(), c["prob"].as_f64().unwrap());
                assert!(wo >= o && wp >= p && (wo > o || wp > p));
            }
        }
    }
    assert_eq!(call(&app, "GET", "/matchdays/99/candidates", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn recommend_meets_threshold_on_a_rich_matchday() {
    let (app, _dir) = generous_app().await;
    let req = json!({ "matchday": 1, "params": { "p_min": 0.25, "min_exp": 2.0, "max_time": 5.0, "seed": 3 } });
    let (status, body) = call(&app, "POST", "/recommend", Some(req.clone())).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let totals = &body["totals"];
    assert!(totals["exp"].as_f64().unwrap() >= 2.0);
    assert!(totals["prob"].as_f64().unwrap() >= 0.25);
    let legs = body["accumulator"]["legs"].as_array().unwrap();
    assert!(!legs.is_empty());
    let (mut odds, mut prob) = (1.0, 1.0);
    for l in legs {
        odds *= l["odds"].as_f64().unwrap();
        prob *= l["prob"].as_f64().unwrap();
        assert_eq!(l["bookmaker"], "B365");
    }
    assert!((odds - totals["odds"].as_f64().unwrap()).abs() < 1e-9);
    assert!((prob - totals["prob"].as_f64().unwrap()).abs() < 1e-12);
    assert!(body["kelly_fraction"].is_number());

    let (_, again) = call(&app, "POST", "/recommend", Some(req)).await;
    assert_eq!(body, again);
}

#[tokio::test]
async fn recommend_rejects_bad_params_and_matchdays() {
    let app = loaded(vec![synthetic_e0()], None).await;
    let (status, body) = call(&app, "POST", "/recommend", Some(json!({ "matchday": 1, "params": { "p_min": 1.5 } }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("p_min"));
    let (status, _) = call(&app, "POST", "/recommend", Some(json!({ "matchday": 99 }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn unreachable_threshold_yields_no_bet() {
    let app = loaded(vec![synthetic_e0()], None).await;
    let params = json!({ "min_exp": 1e6, "max_time": 0.3, "prune_unreachable": false });
    let (status, body) = call(&app, "POST", "/recommend", Some(json!({ "matchday": 5, "params": params }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["no_bet"], "TimedOut");
    assert!(body.get("accumulator").is_none());

    let (_, body) = call(&app, "POST", "/recommend", Some(json!({ "matchday": 5, "params": { "min_exp": 1e6 } }))).await;
    assert_eq!(body["no_bet"], "Unreachable");
}

#[tokio::test]
async fn whatif_reports_totals_and_stakes() {
    let app = router(AppState::new());
    let legs = vec![leg("A", "B", "H", 2.0, 0.5), leg("C", "D", "D", 2.0, 0.5), leg("E", "F", "A", 2.0, 0.5)];
    let req = json!({ "legs": legs, "bankroll": "100.00" });
    let (status, body) = call(&app, "POST", "/whatif", Some(req.clone())).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    // Totals come from log sums, so allow a few ulps.
    let close = |v: &Value, want: f64| (v.as_f64().unwrap() - want).abs() <= 1e-12 * want;
    assert!(close(&body["totals"]["odds"], 8.0), "{body}");
    assert!(close(&body["totals"]["prob"], 0.125), "{body}");
    assert!(close(&body["totals"]["exp"], 1.0), "{body}");
    // 0.125 - 0.875 / 8
    assert!(close(&body["kelly_fraction"], 0.015625), "{body}");
    assert_eq!(body["kelly_stake"], "1.56");
    let acc = &body["moments"]["accumulator"];
    assert!((acc["expected_return"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(body["moments"]["split_singles"]["variance"].as_f64().unwrap() < acc["variance"].as_f64().unwrap());

    let (_, again) = call(&app, "POST", "/whatif", Some(req)).await;
    assert_eq!(body, again);
}

#[tokio::test]
async fn whatif_variance_adjusted_single() {
    let app = router(AppState::new());
    let (status, body) = call(&app, "POST", "/whatif", Some(json!({ "legs": [leg("A", "B", "H", 2.87, 0.36)] }))).await;
    assert_eq!(status, StatusCode::OK);
    assert!((body["variance_adjusted"].as_f64().unwrap() - 0.2722).abs() < 1e-4);
    assert!(body.get("kelly_stake").is_none());
}

#[tokio::test]
async fn whatif_rejects_infeasible_legs() {
    let app = router(AppState::new());
    let legs = vec![leg("A", "B", "H", 2.0, 0.5), leg("A", "B", "A", 3.0, 0.3)];
    let (status, body) = call(&app, "POST", "/whatif", Some(json!({ "legs": legs }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let v = &body["violations"][0];
    assert_eq!(v["kind"], "conflicting_outcomes");
    assert_eq!(v["match_ref"]["home_team"], "A");
    assert_eq!(v["match_ref"]["away_team"], "B");

    let mut mixed = leg("C", "D", "H", 2.0, 0.5);
    mixed["bookmaker"] = json!("BW");
    let (status, body) = call(&app, "POST", "/whatif", Some(json!({ "legs": [leg("A", "B", "H", 2.0, 0.5), mixed] }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["violations"][0]["kind"], "mixed_bookmakers");

    let (status, _) = call(&app, "POST", "/whatif", Some(json!({ "legs": [] }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "POST", "/whatif", Some(json!({ "legs": [leg("A", "B", "H", 0.5, 0.5)] }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn singles_backtest_populates_summary() {
    let app = loaded(vec![synthetic_e0()], None).await;
    let (status, body) = call(&app, "POST", "/backtest", Some(json!({ "combo": "singles-va" }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let s = &body["summary"];
    for field in ["average_odds", "average_probability", "average_stakes_per_matchday", "total_gains"] {
        assert!(s[field].is_number() || s[field].is_string(), "{field} missing in {s}");
    }
    assert!(s["average_odds"].as_f64().unwrap() > 1.0);
    assert_eq!(body["ledger"].as_array().unwrap().len(), 38);
}

#[tokio::test]
async fn accumulator_backtest_without_bets_gains_nothing() {
    let app = loaded(vec![synthetic_e0()], None).await;
    let req = json!({ "combo": "acc-kelly", "params": { "min_exp": 1e6, "max_iterations": 5 }, "initial_bankroll": "100" });
    let (status, body) = call(&app, "POST", "/backtest", Some(req)).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let s = &body["summary"];
    assert_eq!(s["bet_count"], 0);
    assert_eq!(s["final_bankroll"], "100.00");
    assert_eq!(s["total_gains"].as_f64().unwrap(), 0.0);
    for e in body["ledger"].as_array().unwrap() {
        assert!(e["wagers"].as_array().unwrap().is_empty());
        assert!(e["no_bet"].is_string());
    }
}

#[tokio::test]
async fn backtest_rejects_unknown_combo() {
    let app = loaded(vec![synthetic_e0()], None).await;
    let (status, _) = call(&app, "POST", "/backtest", Some(json!({ "combo": "parlay-martingale" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn backtest_streams_one_event_per_matchday() {
    let app = loaded(vec![synthetic_e0()], None).await;
    let req = json!({ "combo": "singles-kelly", "stream": true });
    let resp = app
        .oneshot(Request::post("/backtest").header("content-type", "application/json").body(Body::from(req.to_string())).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
    let text = String::from_utf8(resp.into_body().collect().await.unwrap().to_bytes().to_vec()).unwrap();
    let events: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(events.len(), 39);
    assert!(events[..38].iter().enumerate().all(|(i, e)| e["event"] == "matchday" && e["entry"]["matchday"] == i as u64 + 1));
    assert_eq!(events[38]["event"], "summary");
}

#[tokio::test]
async fn sessions_settle_wagers_and_track_the_staking_base() {
    let (app, _dir) = generous_app().await;
    let (status, created) = call(&app, "POST", "/sessions", Some(json!({ "bankroll": "100.00" }))).await;
    assert_eq!(status, StatusCode::CREATED);
    let token = created["token"].as_str().unwrap().to_string();
    let wagers = format!("/sessions/{token}/wagers");

    // Home legs win, so 10.00 at 3.0 returns a 20.00 gain; the base stays put.
    let win = json!({ "legs": [leg("Home 0", "Away 0", "H", 3.0, 0.8)], "amount": "10.00" });
    let (status, view) = call(&app, "POST", &wagers, Some(win)).await;
    assert_eq!(status, StatusCode::OK, "{view}");
    assert_eq!(view["bankroll"], "120.00");
    assert_eq!(view["staking_base"], "100.00");

    let loss = json!({ "legs": [leg("Home 1", "Away 1", "A", 12.0, 0.08), leg("Home 2", "Away 2", "H", 3.0, 0.8)], "amount": "50" });
    let (_, view) = call(&app, "POST", &wagers, Some(loss)).await;
    assert_eq!(view["bankroll"], "70.00");
    assert_eq!(view["staking_base"], "70.00");
    assert_eq!(view["entries"][1]["won"], false);
    assert_eq!(view["entries"][1]["net_gain"], "-50.00");

    let noop = json!({ "legs": [leg("Home 3", "Away 3", "H", 3.0, 0.8)], "amount": "0" });
    let (_, view) = call(&app, "POST", &wagers, Some(noop)).await;
    assert_eq!(view["bankroll"], "70.00");

    let too_much = json!({ "legs": [leg("Home 3", "Away 3", "H", 3.0, 0.8)], "amount": "70.01" });
    assert_eq!(call(&app, "POST", &wagers, Some(too_much)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let conflict = json!({ "legs": [leg("Home 3", "Away 3", "H", 3.0, 0.8), leg("Home 3", "Away 3", "D", 6.0, 0.12)], "amount": "1" });
    assert_eq!(call(&app, "POST", &wagers, Some(conflict)).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, view) = call(&app, "GET", &format!("/sessions/{token}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["entries"].as_array().unwrap().len(), 3);

    // Sessions are isolated from one another.
    let (_, other) = call(&app, "POST", "/sessions", Some(json!({ "bankroll": "5" }))).await;
    assert_ne!(other["token"], view["token"]);
    assert!(other["entries"].as_array().unwrap().is_empty());
    assert_eq!(call(&app, "GET", "/sessions/nope", None).await.0, StatusCode::NOT_FOUND);
}
