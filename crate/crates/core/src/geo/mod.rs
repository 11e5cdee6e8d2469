//! Gazetteer ingestion, place-name geocoding and great-circle distances.
//!
//! A [`Gazetteer`] is loaded from a CSV file with the header
//! `name,region,lat,lon,population`. Every city gets a display name of the
//! form `"<name>, <region>"` and a [`CityKey`] derived from it, which is the
//! identity used by every other module.

mod remote;

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use remote::{fetch_places_remote, PlaceService, RemoteError, PLACES_URL_ENV};

/// Mean Earth radius in kilometres (IUGG).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Largest possible great-circle distance on the sphere.
pub const MAX_GEODESIC_KM: f64 = std::f64::consts::PI * EARTH_RADIUS_KM;

#[derive(Debug, thiserror::Error)]
pub enum GeoError {
    #[error("gazetteer file not found: {0}")]
    MissingFile(PathBuf),
    #[error("malformed gazetteer row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate city key `{0}`")]
    DuplicateCity(CityKey),
    #[error("gazetteer contains no cities")]
    EmptyGazetteer,
    #[error("invalid coordinate: lat {lat}, lon {lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("gazetteer I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// A point on the sphere in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        let ok = lat.is_finite()
            && lon.is_finite()
            && (-90.0..=90.0).contains(&lat)
            && (-180.0..=180.0).contains(&lon);
        if ok {
            Ok(Self { lat, lon })
        } else {
            Err(GeoError::InvalidCoordinate { lat, lon })
        }
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Normalized city identity: lowercased, trimmed, trailing periods removed,
/// runs of spaces/underscores collapsed to a single underscore.
///
/// `"Newcastle, NSW"`, `"newcastle,_nsw"` and `"Newcastle,  NSW."` all map to
/// `newcastle,_nsw`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CityKey(String);

impl CityKey {
    pub fn from_name(name: &str) -> Self {
        let trimmed = name.trim().trim_end_matches('.').to_lowercase();
        let words: Vec<&str> = trimmed
            .split(|c: char| c.is_whitespace() || c == '_')
            .filter(|w| !w.is_empty())
            .collect();
        CityKey(words.join("_"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The part before the region suffix (`newcastle` for `newcastle,_nsw`).
    pub fn place_part(&self) -> &str {
        match self.0.find(',') {
            Some(i) => self.0[..i].trim_end_matches('_'),
            None => &self.0,
        }
    }

    pub fn has_region(&self) -> bool {
        self.0.contains(',')
    }
}

impl fmt::Display for CityKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct City {
    /// Display name, e.g. `"Newcastle, NSW"`.
    pub name: String,
    pub place: String,
    pub region: String,
    pub key: CityKey,
    pub point: GeoPoint,
    pub population: Option<u64>,
}

impl City {
    pub fn new(place: &str, region: &str, point: GeoPoint, population: Option<u64>) -> Self {
        let place = place.trim();
        let region = region.trim();
        let name = if region.is_empty() {
            place.to_string()
        } else {
            format!("{place}, {region}")
        };
        let key = CityKey::from_name(&name);
        Self {
            name,
            place: place.to_string(),
            region: region.to_string(),
            key,
            point,
            population,
        }
    }
}

/// Ordered, immutable collection of cities with a key index.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    cities: Vec<City>,
    index: HashMap<CityKey, usize>,
}

impl Gazetteer {
    pub fn from_cities(cities: Vec<City>) -> Result<Self, GeoError> {
        if cities.is_empty() {
            return Err(GeoError::EmptyGazetteer);
        }
        let mut index = HashMap::with_capacity(cities.len());
        for (i, city) in cities.iter().enumerate() {
            if index.insert(city.key.clone(), i).is_some() {
                return Err(GeoError::DuplicateCity(city.key.clone()));
            }
        }
        Ok(Self { cities, index })
    }

    pub fn cities(&self) -> &[City] {
        &self.cities
    }

    pub fn len(&self) -> usize {
        self.cities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cities.is_empty()
    }

    pub fn get(&self, key: &CityKey) -> Option<&City> {
        self.index.get(key).map(|&i| &self.cities[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &City> {
        self.cities.iter()
    }

    /// Write the gazetteer in the same CSV format [`load_gazetteer`] reads.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), GeoError> {
        let mut w = csv::Writer::from_writer(out);
        let to_io = |e: csv::Error| GeoError::Io(std::io::Error::other(e));
        w.write_record(["name", "region", "lat", "lon", "population"])
            .map_err(to_io)?;
        for c in &self.cities {
            w.write_record([
                c.place.clone(),
                c.region.clone(),
                c.point.lat().to_string(),
                c.point.lon().to_string(),
                c.population.map(|p| p.to_string()).unwrap_or_default(),
            ])
            .map_err(to_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Load a gazetteer CSV file.
pub fn load_gazetteer(path: impl AsRef<Path>) -> Result<Gazetteer, GeoError> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(GeoError::MissingFile(path.to_path_buf()));
    }
    let file = std::fs::File::open(path)?;
    read_gazetteer(file)
}

pub(crate) fn read_gazetteer<R: std::io::Read>(input: R) -> Result<Gazetteer, GeoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let headers = rdr.headers().map_err(|e| GeoError::MalformedRow {
        line: 1,
        reason: e.to_string(),
    })?;
    let expected = ["name", "region", "lat", "lon", "population"];
    if headers.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(GeoError::MalformedRow {
            line: 1,
            reason: format!("expected header `{}`", expected.join(",")),
        });
    }

    let mut cities = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| GeoError::MalformedRow {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |reason: String| GeoError::MalformedRow { line, reason };
        if record.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", record.len())));
        }
        let place = record[0].trim();
        if place.is_empty() {
            return Err(bad("empty name".into()));
        }
        let lat: f64 = record[2]
            .trim()
            .parse()
            .map_err(|_| bad(format!("unparseable latitude `{}`", &record[2])))?;
        let lon: f64 = record[3]
            .trim()
            .parse()
            .map_err(|_| bad(format!("unparseable longitude `{}`", &record[3])))?;
        let point = GeoPoint::new(lat, lon).map_err(|e| bad(e.to_string()))?;
        let population = match record[4].trim() {
            "" => None,
            p => Some(
                p.parse()
                    .map_err(|_| bad(format!("unparseable population `{p}`")))?,
            ),
        };
        cities.push(City::new(place, &record[1], point, population));
    }
    Gazetteer::from_cities(cities)
}

/// Look a place name up in the gazetteer.
///
/// Spaces and underscores are interchangeable, case is ignored and a trailing
/// period is dropped. A name without a region suffix matches only when a
/// single gazetteer city carries that place name.
pub fn geocode<'g>(name: &str, g: &'g Gazetteer) -> Option<&'g City> {
    let key = CityKey::from_name(name);
    if key.is_empty() {
        return None;
    }
    if let Some(city) = g.get(&key) {
        return Some(city);
    }
    if key.has_region() {
        return None;
    }
    let mut hits = g.iter().filter(|c| c.key.place_part() == key.as_str());
    match (hits.next(), hits.next()) {
        (Some(city), None) => Some(city),
        _ => None,
    }
}

/// Great-circle distance in kilometres (haversine on the mean-radius sphere).
///
/// The differences are taken as absolute values so that swapping the
/// arguments yields a bitwise identical result.
pub fn geodesic_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let dlat = (a.lat - b.lat).abs().to_radians();
    let dlon = (a.lon - b.lon).abs().to_radians();
    let cos_product = a.lat.to_radians().cos() * b.lat.to_radians().cos();
    let h = (dlat / 2.0).sin().powi(2) + cos_product * (dlon / 2.0).sin().powi(2);
    let central = 2.0 * h.sqrt().min(1.0).asin();
    (EARTH_RADIUS_KM * central).min(MAX_GEODESIC_KM)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn gaz(csv: &str) -> Result<Gazetteer, GeoError> {
        read_gazetteer(csv.as_bytes())
    }

    const HEADER: &str = "name,region,lat,lon,population\n";

    #[test]
    fn loads_newcastle_row() {
        let g = gaz(&format!("{HEADER}Newcastle,NSW,-32.9283,151.7817,322278\n")).unwrap();
        let c = &g.cities()[0];
        assert_eq!(c.name, "Newcastle, NSW");
        assert_eq!(c.key.as_str(), "newcastle,_nsw");
        assert_eq!(c.population, Some(322278));
    }

    #[test]
    fn header_only_is_empty() {
        assert!(matches!(gaz(HEADER), Err(GeoError::EmptyGazetteer)));
    }

    #[test]
    fn duplicate_keys_rejected() {
        let csv = format!("{HEADER}Sydney,NSW,-33.8688,151.2093,\nsydney,nsw,-33.9,151.2,\n");
        match gaz(&csv) {
            Err(GeoError::DuplicateCity(k)) => assert_eq!(k.as_str(), "sydney,_nsw"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_coordinates_report_line() {
        let csv = format!("{HEADER}Sydney,NSW,-33.8688,151.2093,\nPerth,WA,north,115.86,\n");
        match gaz(&csv) {
            Err(GeoError::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let csv = format!("{HEADER}Perth,WA,-95.0,115.86,\n");
        assert!(matches!(gaz(&csv), Err(GeoError::MalformedRow { line: 2, .. })));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_gazetteer("/nonexistent/gazetteer.csv"),
            Err(GeoError::MissingFile(_))
        ));
    }

    #[test]
    fn geocode_normalization() {
        let g = gaz(&format!(
            "{HEADER}Mount Isa,QLD,-20.7256,139.4927,\nPerth,WA,-31.9523,115.8613,\n\
             Newcastle,NSW,-32.9283,151.7817,\nNewcastle,UK,54.97,-1.61,\n"
        ))
        .unwrap();
        assert_eq!(geocode("Mount_Isa, QLD", &g).unwrap().name, "Mount Isa, QLD");
        assert_eq!(geocode("  mount isa, qld. ", &g).unwrap().name, "Mount Isa, QLD");
        assert_eq!(geocode("Perth", &g).unwrap().name, "Perth, WA");
        assert_eq!(geocode("Mount_Isa", &g).unwrap().name, "Mount Isa, QLD");
        // ambiguous place name without region
        assert!(geocode("Newcastle", &g).is_none());
        assert!(geocode("", &g).is_none());
        assert!(geocode("Atlantis", &g).is_none());
        assert!(geocode("Perth, TAS", &g).is_none());
    }

    #[test]
    fn geodesic_identity_and_bound() {
        let a = pt(-34.9285, 138.6007);
        assert_eq!(geodesic_km(a, a), 0.0);
        let d = geodesic_km(pt(0.0, 0.0), pt(0.0, 180.0));
        assert!(d <= MAX_GEODESIC_KM);
        assert!((d - MAX_GEODESIC_KM).abs() < 1e-6);
    }
}
