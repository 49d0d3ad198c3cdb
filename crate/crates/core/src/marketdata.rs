//! Daily time-series client for a JSON market-data API.
//!
//! The wire format is a date-keyed object under `"Time Series (Daily)"`:
//!
//! ```json
//! {"Time Series (Daily)": {"2024-01-02": {"1. open": "161.0", "2. high": "162.5",
//!   "3. low": "160.1", "4. close": "161.9", "5. volume": "4021100"}}}
//! ```
//!
//! Network access goes through [`Transport`], so tests and offline runs use
//! [`FixtureTransport`] or a local stub server.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime};

use chrono::{DateTime, NaiveDate, Utc};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::datapipe::{read_csv_path, write_csv, DataError, OhlcRecord, OhlcSeries};

/// Environment variable holding the API key.
pub const API_KEY_ENV: &str = "ALPHAVANTAGE_API_KEY";
pub const DEFAULT_BASE_URL: &str = "https://www.alphavantage.co/query";
pub const SERIES_KEY: &str = "Time Series (Daily)";
const DEFAULT_RATE_LIMIT_DELAY: Duration = Duration::from_secs(60);
const BACKOFF_BASE: Duration = Duration::from_millis(500);

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("no API key: set {API_KEY_ENV}")]
    MissingKey,
    #[error("empty symbol")]
    EmptySymbol,
    #[error("invalid client config: {0}")]
    Config(String),
    #[error("API key rejected: {0}")]
    Auth(String),
    #[error("rate limited by provider; retry after {} s", .delay.as_secs())]
    RateLimit { delay: Duration },
    #[error("provider error: {0}")]
    Provider(String),
    #[error("HTTP status {0}")]
    Http(u16),
    #[error("unexpected response at `{key}`: {detail}")]
    Parse { key: String, detail: String },
    #[error("transport failed after {attempts} attempt(s): {detail}")]
    Transport { attempts: usize, detail: String },
    #[error("cache io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputSize {
    Compact,
    Full,
}

impl OutputSize {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputSize::Compact => "compact",
            OutputSize::Full => "full",
        }
    }
}

impl std::str::FromStr for OutputSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "compact" => Ok(OutputSize::Compact),
            "full" => Ok(OutputSize::Full),
            other => Err(format!("unknown output size `{other}` (expected compact or full)")),
        }
    }
}

#[derive(Clone)]
pub struct ApiConfig {
    pub base_url: String,
    pub api_key: String,
    pub mode: OutputSize,
    pub timeout: Duration,
    pub max_retries: usize,
}

impl fmt::Debug for ApiConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ApiConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &"<redacted>")
            .field("mode", &self.mode)
            .field("timeout", &self.timeout)
            .field("max_retries", &self.max_retries)
            .finish()
    }
}

impl ApiConfig {
    pub fn new(api_key: impl Into<String>) -> Self {
        ApiConfig {
            base_url: DEFAULT_BASE_URL.into(),
            api_key: api_key.into(),
            mode: OutputSize::Full,
            timeout: Duration::from_secs(30),
            max_retries: 3,
        }
    }

    /// Reads the key from [`API_KEY_ENV`].
    pub fn from_env() -> Result<Self, ApiError> {
        match std::env::var(API_KEY_ENV) {
            Ok(k) if !k.trim().is_empty() => Ok(Self::new(k.trim())),
            _ => Err(ApiError::MissingKey),
        }
    }

    fn validate(&self) -> Result<(), ApiError> {
        if self.api_key.is_empty() {
            return Err(ApiError::MissingKey);
        }
        if self.timeout.is_zero() {
            return Err(ApiError::Config("timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Network,
    Cache,
    Fixture,
}

impl DataSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DataSource::Network => "network",
            DataSource::Cache => "cache",
            DataSource::Fixture => "fixture",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FetchResult {
    pub series: OhlcSeries,
    pub source: DataSource,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub url: String,
    pub query: Vec<(String, String)>,
}

impl HttpRequest {
    pub fn param(&self, name: &str) -> Option<&str> {
        self.query.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    /// `Retry-After` in seconds, when sent.
    pub retry_after: Option<u64>,
    pub body: String,
}

/// Failure to obtain any response. `retryable` distinguishes transient
/// network faults from permanent ones such as a missing fixture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError {
    pub detail: String,
    pub retryable: bool,
}

pub trait Transport: Send + Sync {
    fn get(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;

    fn source(&self) -> DataSource {
        DataSource::Network
    }
}

/// Blocking HTTP(S) transport.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport { agent }
    }
}

impl Transport for HttpTransport {
    fn get(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let mut req = self.agent.get(&request.url);
        for (k, v) in &request.query {
            req = req.query(k, v);
        }
        let fail = |e: ureq::Error| TransportError {
            detail: e.to_string(),
            retryable: true,
        };
        let resp = req.call().map_err(fail)?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|s| s.trim().parse().ok());
        let body = resp.into_body().read_to_string().map_err(fail)?;
        Ok(HttpResponse {
            status,
            retry_after,
            body,
        })
    }
}

/// Serves recorded responses from `<dir>/<SYMBOL>_<outputsize>.json`,
/// falling back to `<dir>/<SYMBOL>.json`.
pub struct FixtureTransport {
    dir: PathBuf,
}

impl FixtureTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureTransport { dir: dir.into() }
    }
}

impl Transport for FixtureTransport {
    fn get(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let symbol = request.param("symbol").unwrap_or_default();
        let size = request.param("outputsize").unwrap_or("full");
        let candidates = [
            self.dir.join(format!("{symbol}_{size}.json")),
            self.dir.join(format!("{symbol}.json")),
        ];
        for path in &candidates {
            if let Ok(body) = fs::read_to_string(path) {
                return Ok(HttpResponse {
                    status: 200,
                    retry_after: None,
                    body,
                });
            }
        }
        Err(TransportError {
            detail: format!("no fixture for {symbol} in {}", self.dir.display()),
            retryable: false,
        })
    }

    fn source(&self) -> DataSource {
        DataSource::Fixture
    }
}

type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

pub struct MarketClient {
    config: ApiConfig,
    transport: Box<dyn Transport>,
    sleeper: Sleeper,
}

impl fmt::Debug for MarketClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MarketClient").field("config", &self.config).finish_non_exhaustive()
    }
}

impl MarketClient {
    pub fn new(config: ApiConfig, transport: Box<dyn Transport>) -> Self {
        MarketClient {
            config,
            transport,
            sleeper: Box::new(std::thread::sleep),
        }
    }

    pub fn http(config: ApiConfig) -> Self {
        let t = HttpTransport::new(config.timeout);
        Self::new(config, Box::new(t))
    }

    /// Replaces the function used to wait between retries.
    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Box::new(sleeper);
        self
    }

    pub fn config(&self) -> &ApiConfig {
        &self.config
    }

    fn redact(&self, text: &str) -> String {
        if self.config.api_key.is_empty() {
            text.to_string()
        } else {
            text.replace(&self.config.api_key, "<redacted>")
        }
    }

    /// Fetches the daily series for `symbol`. Transport faults are retried
    /// with exponential backoff and throttle responses after the advised
    /// delay, up to `max_retries` extra attempts in total.
    pub fn fetch_daily(&self, symbol: &str) -> Result<FetchResult, ApiError> {
        self.config.validate()?;
        let symbol = symbol.trim();
        if symbol.is_empty() {
            return Err(ApiError::EmptySymbol);
        }
        let request = HttpRequest {
            url: self.config.base_url.clone(),
            query: vec![
                ("function".into(), "TIME_SERIES_DAILY".into()),
                ("symbol".into(), symbol.into()),
                ("outputsize".into(), self.config.mode.as_str().into()),
                ("apikey".into(), self.config.api_key.clone()),
            ],
        };
        let mut attempt = 0;
        loop {
            attempt += 1;
            let outcome = match self.transport.get(&request) {
                Ok(resp) => self.interpret(symbol, resp),
                Err(e) if e.retryable => Err(ApiError::Transport {
                    attempts: attempt,
                    detail: self.redact(&e.detail),
                }),
                Err(e) => {
                    return Err(ApiError::Transport {
                        attempts: attempt,
                        detail: self.redact(&e.detail),
                    })
                }
            };
            let wait = match &outcome {
                Err(ApiError::Transport { .. }) => BACKOFF_BASE * 2u32.saturating_pow(attempt as u32 - 1),
                Err(ApiError::RateLimit { delay }) => *delay,
                _ => return outcome,
            };
            if attempt > self.config.max_retries {
                return outcome;
            }
            log::warn!("{symbol}: attempt {attempt} failed ({}); retrying in {wait:?}", outcome.unwrap_err());
            (self.sleeper)(wait);
        }
    }

    fn interpret(&self, symbol: &str, resp: HttpResponse) -> Result<FetchResult, ApiError> {
        match resp.status {
            200 => {}
            401 | 403 => return Err(ApiError::Auth(format!("HTTP {}", resp.status))),
            429 => {
                return Err(ApiError::RateLimit {
                    delay: resp.retry_after.map_or(DEFAULT_RATE_LIMIT_DELAY, Duration::from_secs),
                })
            }
            s => return Err(ApiError::Http(s)),
        }
        let series = parse_daily(symbol, &resp.body).map_err(|e| match e {
            ApiError::Auth(m) => ApiError::Auth(self.redact(&m)),
            ApiError::Provider(m) => ApiError::Provider(self.redact(&m)),
            other => other,
        })?;
        Ok(FetchResult {
            series,
            source: self.transport.source(),
            fetched_at: Utc::now(),
        })
    }
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, date: &str) -> Result<&'a str, ApiError> {
    obj.get(key).and_then(Value::as_str).ok_or_else(|| ApiError::Parse {
        key: key.into(),
        detail: format!("missing or non-string on {date}"),
    })
}

fn number(obj: &Map<String, Value>, key: &str, date: &str) -> Result<f64, ApiError> {
    let s = field(obj, key, date)?;
    s.trim().parse().map_err(|_| ApiError::Parse {
        key: key.into(),
        detail: format!("`{s}` on {date} is not a number"),
    })
}

/// Parses a provider response body into a date-ascending series.
pub fn parse_daily(symbol: &str, body: &str) -> Result<OhlcSeries, ApiError> {
    let root: Value = serde_json::from_str(body).map_err(|e| ApiError::Parse {
        key: "<body>".into(),
        detail: e.to_string(),
    })?;
    let root = root.as_object().ok_or_else(|| ApiError::Parse {
        key: "<body>".into(),
        detail: "not a JSON object".into(),
    })?;
    if let Some(msg) = root.get("Error Message").and_then(Value::as_str) {
        return Err(if msg.to_ascii_lowercase().contains("apikey") {
            ApiError::Auth(msg.into())
        } else {
            ApiError::Provider(msg.into())
        });
    }
    if root.contains_key("Note") || root.contains_key("Information") {
        return Err(ApiError::RateLimit {
            delay: DEFAULT_RATE_LIMIT_DELAY,
        });
    }
    let days = root.get(SERIES_KEY).and_then(Value::as_object).ok_or_else(|| ApiError::Parse {
        key: SERIES_KEY.into(),
        detail: "missing or not an object".into(),
    })?;
    let mut records = Vec::with_capacity(days.len());
    for (date, v) in days {
        let obj = v.as_object().ok_or_else(|| ApiError::Parse {
            key: date.clone(),
            detail: "entry is not an object".into(),
        })?;
        let parsed = NaiveDate::parse_from_str(date, "%Y-%m-%d").map_err(|_| ApiError::Parse {
            key: date.clone(),
            detail: "not a YYYY-MM-DD date".into(),
        })?;
        let vol = field(obj, "5. volume", date)?;
        let volume = vol
            .trim()
            .parse::<u64>()
            .ok()
            .or_else(|| vol.trim().parse::<f64>().ok().filter(|v| *v >= 0.0).map(|v| v.round() as u64))
            .ok_or_else(|| ApiError::Parse {
                key: "5. volume".into(),
                detail: format!("`{vol}` on {date} is not a count"),
            })?;
        records.push(OhlcRecord {
            date: parsed,
            open: Some(number(obj, "1. open", date)?),
            high: Some(number(obj, "2. high", date)?),
            low: Some(number(obj, "3. low", date)?),
            close: Some(number(obj, "4. close", date)?),
            volume: Some(volume),
        });
    }
    Ok(OhlcSeries::from_unsorted(symbol, records)?)
}

/// Cache file path for `symbol` under `dir`.
pub fn cache_path(symbol: &str, dir: &Path) -> PathBuf {
    dir.join(format!("{symbol}.csv"))
}

/// Writes `<dir>/<symbol>.csv` atomically and returns its path.
pub fn cache_store(result: &FetchResult, dir: &Path) -> Result<PathBuf, ApiError> {
    let path = cache_path(result.series.symbol(), dir);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    write_csv(&result.series, &mut tmp)?;
    tmp.flush()?;
    tmp.persist(&path).map_err(|e| ApiError::Io(e.error))?;
    Ok(path)
}

/// Reads a cached series if present and no older than `max_age`.
pub fn load_cached(symbol: &str, dir: &Path, max_age: Option<Duration>) -> Result<Option<FetchResult>, ApiError> {
    let path = cache_path(symbol, dir);
    let modified = match fs::metadata(&path) {
        Ok(m) => m.modified()?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    if let Some(max) = max_age {
        let age = SystemTime::now().duration_since(modified).unwrap_or_default();
        if age > max {
            return Ok(None);
        }
    }
    let import = read_csv_path(&path)?;
    Ok(Some(FetchResult {
        series: import.series,
        source: DataSource::Cache,
        fetched_at: modified.into(),
    }))
}
