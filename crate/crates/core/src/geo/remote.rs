//! Populated-place extraction from an Overpass-style HTTP endpoint.
//!
//! Results are cached as gazetteer CSV under a content-addressed file name, so
//! a region only has to be fetched once.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use super::{read_gazetteer, City, CityKey, GeoPoint, Gazetteer};
use crate::http;
use crate::util::sha256_hex;

pub const PLACES_URL_ENV: &str = "DISTRAG_PLACES_URL";
const DEFAULT_PLACES_URL: &str = "https://overpass-api.de/api/interpreter";

#[derive(Debug, thiserror::Error)]
pub enum RemoteError {
    #[error("place service request failed: {0}")]
    NetworkError(String),
    #[error("place service rate limited (retry after {0:?} s)")]
    RateLimited(Option<u64>),
    #[error("no populated places found for region `{0}`")]
    EmptyResult(String),
    #[error("place cache error: {0}")]
    Cache(String),
}

#[derive(Debug, Clone)]
pub struct PlaceService {
    pub base_url: String,
    pub timeout: Duration,
    pub cache_dir: PathBuf,
}

impl PlaceService {
    pub fn new(base_url: impl Into<String>, cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            base_url: base_url.into(),
            timeout: Duration::from_secs(60),
            cache_dir: cache_dir.into(),
        }
    }

    /// Base URL from `DISTRAG_PLACES_URL`, falling back to the public Overpass instance.
    pub fn from_env(cache_dir: impl Into<PathBuf>) -> Self {
        let url = std::env::var(PLACES_URL_ENV).unwrap_or_else(|_| DEFAULT_PLACES_URL.into());
        Self::new(url, cache_dir)
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn cache_path(&self, region: &str) -> PathBuf {
        let digest = sha256_hex(format!("{}\n{}", self.base_url, overpass_query(region)).as_bytes());
        self.cache_dir.join(format!("places-{}.csv", &digest[..16]))
    }
}

fn overpass_query(region: &str) -> String {
    let region = region.replace('"', "");
    format!(
        "[out:json][timeout:90];\n\
         area[\"name\"=\"{region}\"][\"boundary\"=\"administrative\"]->.searchArea;\n\
         node[\"place\"~\"^(city|town)$\"](area.searchArea);\n\
         out body;"
    )
}

#[derive(Deserialize)]
struct OverpassResponse {
    elements: Vec<OverpassElement>,
}

#[derive(Deserialize)]
struct OverpassElement {
    lat: Option<f64>,
    lon: Option<f64>,
    #[serde(default)]
    tags: HashMap<String, String>,
}

/// Fetch the cities and towns of `region`, using the on-disk cache when present.
pub fn fetch_places_remote(region: &str, client: &PlaceService) -> Result<Gazetteer, RemoteError> {
    let cache = client.cache_path(region);
    if cache.is_file() {
        return read_cache(&cache);
    }

    let agent = http::agent(client.timeout);
    let resp = http::post(
        &agent,
        &client.base_url,
        "text/plain; charset=utf-8",
        overpass_query(region),
        None,
    )
    .map_err(RemoteError::NetworkError)?;
    if resp.status == 429 {
        return Err(RemoteError::RateLimited(resp.retry_after));
    }
    if !resp.is_success() {
        return Err(RemoteError::NetworkError(format!("HTTP status {}", resp.status)));
    }
    let gazetteer = parse_overpass(&resp.body, region)?;

    std::fs::create_dir_all(&client.cache_dir).map_err(|e| RemoteError::Cache(e.to_string()))?;
    let file = std::fs::File::create(&cache).map_err(|e| RemoteError::Cache(e.to_string()))?;
    gazetteer
        .write_csv(file)
        .map_err(|e| RemoteError::Cache(e.to_string()))?;
    Ok(gazetteer)
}

fn read_cache(path: &Path) -> Result<Gazetteer, RemoteError> {
    let file = std::fs::File::open(path).map_err(|e| RemoteError::Cache(e.to_string()))?;
    read_gazetteer(file).map_err(|e| RemoteError::Cache(e.to_string()))
}

fn parse_overpass(body: &str, region: &str) -> Result<Gazetteer, RemoteError> {
    let parsed: OverpassResponse = serde_json::from_str(body)
        .map_err(|e| RemoteError::NetworkError(format!("malformed response body: {e}")))?;

    let mut best: HashMap<CityKey, City> = HashMap::new();
    for el in parsed.elements {
        let (Some(lat), Some(lon)) = (el.lat, el.lon) else {
            continue;
        };
        let Some(name) = el.tags.get("name").filter(|n| !n.trim().is_empty()) else {
            continue;
        };
        let Ok(point) = GeoPoint::new(lat, lon) else {
            continue;
        };
        let state = ["addr:state", "is_in:state_code", "is_in:state"]
            .iter()
            .find_map(|t| el.tags.get(*t))
            .map(String::as_str)
            .unwrap_or(region);
        let population = el
            .tags
            .get("population")
            .and_then(|p| p.replace(',', "").trim().parse().ok());
        let city = City::new(name, state, point, population);
        match best.get(&city.key) {
            Some(existing) if existing.population >= city.population => {}
            _ => {
                best.insert(city.key.clone(), city);
            }
        }
    }
    if best.is_empty() {
        return Err(RemoteError::EmptyResult(region.to_string()));
    }
    let mut cities: Vec<City> = best.into_values().collect();
    cities.sort_by(|a, b| b.population.cmp(&a.population).then_with(|| a.key.cmp(&b.key)));
    Gazetteer::from_cities(cities).map_err(|e| RemoteError::Cache(e.to_string()))
}
