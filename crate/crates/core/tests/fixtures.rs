//! Recorded provider responses played back through the fixture transport.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::Value;
use stockcast::marketdata::{
    cache_store, load_cached, ApiConfig, ApiError, DataSource, FixtureTransport, MarketClient, OutputSize,
};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn client(mode: OutputSize) -> MarketClient {
    let mut cfg = ApiConfig::new("offline");
    cfg.mode = mode;
    MarketClient::new(cfg, Box::new(FixtureTransport::new(fixtures()))).with_sleeper(|_| {})
}

#[test]
fn full_fixture_matches_raw_json() {
    let result = client(OutputSize::Full).fetch_daily("IBM").unwrap();
    assert_eq!(result.source, DataSource::Fixture);
    let s = &result.series;
    assert!(s.len() > 2400, "{}", s.len());
    assert!(s.dates().windows(2).all(|w| w[0] < w[1]));

    let raw: Value = serde_json::from_str(&std::fs::read_to_string(fixtures().join("IBM_full.json")).unwrap()).unwrap();
    let days = raw["Time Series (Daily)"].as_object().unwrap();
    assert_eq!(days.len(), s.len());
    for rec in s.records() {
        let day = &days[&rec.date.format("%Y-%m-%d").to_string()];
        let num = |k: &str| day[k].as_str().unwrap().parse::<f64>().unwrap();
        assert_eq!(rec.open, Some(num("1. open")));
        assert_eq!(rec.high, Some(num("2. high")));
        assert_eq!(rec.low, Some(num("3. low")));
        assert_eq!(rec.close, Some(num("4. close")));
        assert_eq!(rec.volume, Some(day["5. volume"].as_str().unwrap().parse().unwrap()));
        assert!(rec.is_consistent());
    }
}

#[test]
fn compact_fixture_is_short() {
    let s = client(OutputSize::Compact).fetch_daily("IBM").unwrap().series;
    assert!(!s.is_empty() && s.len() <= 100);
}

#[test]
fn malformed_fixture_names_key() {
    match client(OutputSize::Full).fetch_daily("MALFORMED") {
        Err(ApiError::Parse { key, detail }) => {
            assert_eq!(key, "4. close");
            assert!(detail.contains("2023-12-29"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn bad_key_and_rate_limit_fixtures() {
    assert!(matches!(client(OutputSize::Full).fetch_daily("BADKEY"), Err(ApiError::Auth(_))));

    let waits = Arc::new(Mutex::new(Vec::new()));
    let w = waits.clone();
    let mut cfg = ApiConfig::new("offline");
    cfg.max_retries = 2;
    let c = MarketClient::new(cfg, Box::new(FixtureTransport::new(fixtures())))
        .with_sleeper(move |d| w.lock().unwrap().push(d));
    match c.fetch_daily("RATELIMIT") {
        Err(ApiError::RateLimit { delay }) => assert_eq!(delay, Duration::from_secs(60)),
        other => panic!("{other:?}"),
    }
    assert_eq!(waits.lock().unwrap().len(), 2);
}

#[test]
fn missing_fixture_is_not_retried() {
    assert!(matches!(
        client(OutputSize::Full).fetch_daily("NOPE"),
        Err(ApiError::Transport { attempts: 1, .. })
    ));
}

#[test]
fn fetch_cache_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let fetched = client(OutputSize::Full).fetch_daily("IBM").unwrap();
    let path = cache_store(&fetched, dir.path()).unwrap();
    assert!(!std::fs::read_to_string(&path).unwrap().contains("offline"));
    let cached = load_cached("IBM", dir.path(), None).unwrap().unwrap();
    assert_eq!(cached.series, fetched.series);
}
