//! Spatio-temporal correlation between events and causal direction.
//!
//! Two events are correlated when their start times are within `t_thresh`
//! and they are collocated: traffic/traffic pairs by great-circle distance,
//! any pair involving weather by sharing the reporting airport station.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EntityKind, GeospatialEntity, Location};

pub const DEFAULT_T_THRESH_SECS: i64 = 3600;
pub const DEFAULT_D_THRESH_KM: f64 = 10.0;
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingConfig {
    pub t_thresh: i64,
    pub d_thresh: f64,
    pub earth_radius_km: f64,
}

impl PairingConfig {
    pub fn new(t_thresh: i64, d_thresh: f64) -> Result<Self> {
        Self::with_radius(t_thresh, d_thresh, EARTH_RADIUS_KM)
    }

    pub fn with_radius(t_thresh: i64, d_thresh: f64, earth_radius_km: f64) -> Result<Self> {
        if t_thresh <= 0 {
            return Err(Error::InvalidConfig(format!("t_thresh must be > 0, got {t_thresh}")));
        }
        if !(d_thresh > 0.0) || !(earth_radius_km > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "d_thresh and earth_radius_km must be > 0, got {d_thresh} and {earth_radius_km}"
            )));
        }
        Ok(PairingConfig { t_thresh, d_thresh, earth_radius_km })
    }
}

impl Default for PairingConfig {
    fn default() -> Self {
        PairingConfig {
            t_thresh: DEFAULT_T_THRESH_SECS,
            d_thresh: DEFAULT_D_THRESH_KM,
            earth_radius_km: EARTH_RADIUS_KM,
        }
    }
}

/// Great-circle distance in kilometers on a sphere of radius `radius_km`.
pub fn haversine_km(a: &Location, b: &Location, radius_km: f64) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * radius_km * h.clamp(0.0, 1.0).sqrt().asin()
}

pub fn temporally_correlated(e1: &GeospatialEntity, e2: &GeospatialEntity, cfg: &PairingConfig) -> bool {
    (e1.time.start - e2.time.start).abs() <= cfg.t_thresh
}

/// Collocation test. A traffic entity without an airport code never matches a
/// weather entity; see [`fill_missing_airport_codes`].
pub fn spatially_correlated(e1: &GeospatialEntity, e2: &GeospatialEntity, cfg: &PairingConfig) -> Result<bool> {
    if e1.kind == EntityKind::Traffic && e2.kind == EntityKind::Traffic {
        return Ok(haversine_km(&e1.loc, &e2.loc, cfg.earth_radius_km) < cfg.d_thresh);
    }
    for e in [e1, e2] {
        if e.kind == EntityKind::Weather && e.loc.airport_code.is_none() {
            return Err(Error::ContractViolation(format!("weather entity `{}` has no airport code", e.id)));
        }
    }
    Ok(match (&e1.loc.airport_code, &e2.loc.airport_code) {
        (Some(a), Some(b)) => a == b,
        _ => false,
    })
}

/// Assign each traffic entity lacking an airport code the code of the nearest
/// weather station, using the weather entities' coordinates as station
/// positions. Returns how many entities were filled.
pub fn fill_missing_airport_codes(entities: &mut [GeospatialEntity], radius_km: f64) -> usize {
    let mut stations: BTreeMap<String, Location> = BTreeMap::new();
    for e in entities.iter().filter(|e| e.kind == EntityKind::Weather) {
        if let Some(code) = &e.loc.airport_code {
            stations.entry(code.clone()).or_insert_with(|| Location::at(e.loc.lat, e.loc.lon));
        }
    }
    if stations.is_empty() {
        return 0;
    }
    let mut filled = 0;
    for e in entities.iter_mut() {
        if e.kind != EntityKind::Traffic || e.loc.airport_code.is_some() {
            continue;
        }
        let nearest = stations
            .iter()
            .map(|(code, loc)| (haversine_km(&e.loc, loc, radius_km), code))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, code)| code.clone());
        e.loc.airport_code = nearest;
        filled += 1;
    }
    filled
}

type Cell = (i64, i64, i64);

/// Time-sorted entity indices per bucket.
struct Buckets<K> {
    map: HashMap<K, Vec<usize>>,
}

impl<K: std::hash::Hash + Eq> Buckets<K> {
    fn build(items: impl Iterator<Item = (K, usize)>, entities: &[GeospatialEntity]) -> Self {
        let mut map: HashMap<K, Vec<usize>> = HashMap::new();
        for (k, i) in items {
            map.entry(k).or_default().push(i);
        }
        for v in map.values_mut() {
            v.sort_by_key(|&i| (entities[i].time.start, i));
        }
        Buckets { map }
    }

    /// Members of bucket `k` whose start lies in `[lo, hi]`.
    fn window<'a>(&'a self, k: &K, lo: i64, hi: i64, entities: &'a [GeospatialEntity]) -> &'a [usize] {
        let Some(v) = self.map.get(k) else { return &[] };
        let a = v.partition_point(|&i| entities[i].time.start < lo);
        let b = v.partition_point(|&i| entities[i].time.start <= hi);
        &v[a..b]
    }
}

fn unit_cell(loc: &Location, cell: f64) -> Cell {
    let (lat, lon) = (loc.lat.to_radians(), loc.lon.to_radians());
    let p = [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()];
    ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64, (p[2] / cell).floor() as i64)
}

/// All unordered spatio-temporally correlated pairs, as `(smaller id, larger id)`
/// sorted ascending.
///
/// Candidates come from two indices: airport-code buckets for pairs that
/// involve weather, and a 3-D grid over unit-sphere positions for traffic
/// pairs (chord length bounds great-circle distance). Every candidate is then
/// checked with the exact predicates, so the result is the same set a full
/// double loop produces.
pub fn find_correlated_pairs(entities: &[GeospatialEntity], cfg: &PairingConfig) -> Result<Vec<(String, String)>> {
    if let Some(e) = entities
        .iter()
        .find(|e| e.kind == EntityKind::Weather && e.loc.airport_code.is_none())
    {
        return Err(Error::ContractViolation(format!("weather entity `{}` has no airport code", e.id)));
    }

    let t = cfg.t_thresh;

    // Pairs involving weather: same airport code.
    let by_code = Buckets::build(
        entities
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.loc.airport_code.clone().map(|c| (c, i))),
        entities,
    );
    let weather_pairs: Vec<(usize, usize)> = entities
        .par_iter()
        .enumerate()
        .filter(|(_, e)| e.kind == EntityKind::Weather)
        .flat_map_iter(|(i, e)| {
            let code = e.loc.airport_code.as_ref().expect("checked above");
            let start = e.time.start;
            by_code
                .window(code, start - t, start + t, entities)
                .iter()
                .copied()
                .filter(move |&j| j != i && (entities[j].kind == EntityKind::Traffic || j > i))
                .map(move |j| (i, j))
                .collect::<Vec<_>>()
        })
        .collect();

    // Traffic pairs: grid over unit vectors with cell edge >= chord threshold.
    let angle = cfg.d_thresh / cfg.earth_radius_km;
    let cell = if angle >= std::f64::consts::PI {
        4.0
    } else {
        (2.0 * (angle / 2.0).sin()) * (1.0 + 1e-9) + 1e-12
    };
    let traffic: Vec<usize> = (0..entities.len())
        .filter(|&i| entities[i].kind == EntityKind::Traffic)
        .collect();
    let cells: HashMap<usize, Cell> = traffic.iter().map(|&i| (i, unit_cell(&entities[i].loc, cell))).collect();
    let grid = Buckets::build(traffic.iter().map(|&i| (cells[&i], i)), entities);
    let traffic_pairs: Vec<(usize, usize)> = traffic
        .par_iter()
        .flat_map_iter(|&i| {
            let (cx, cy, cz) = cells[&i];
            let start = entities[i].time.start;
            let mut out = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        for &j in grid.window(&(cx + dx, cy + dy, cz + dz), start - t, start + t, entities) {
                            if j > i && haversine_km(&entities[i].loc, &entities[j].loc, cfg.earth_radius_km) < cfg.d_thresh {
                                out.push((i, j));
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();

    let mut pairs: Vec<(String, String)> = weather_pairs
        .into_iter()
        .chain(traffic_pairs)
        .map(|(i, j)| {
            let (a, b) = (&entities[i].id, &entities[j].id);
            if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) }
        })
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    Ok(pairs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CausalRule {
    #[serde(rename = "same-kind-earlier-first")]
    SameKindEarlierFirst,
    #[serde(rename = "weather-causes-traffic")]
    WeatherCausesTraffic,
}

impl CausalRule {
    pub fn as_str(self) -> &'static str {
        match self {
            CausalRule::SameKindEarlierFirst => "same-kind-earlier-first",
            CausalRule::WeatherCausesTraffic => "weather-causes-traffic",
        }
    }
}

impl fmt::Display for CausalRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CausalRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "same-kind-earlier-first" => Ok(CausalRule::SameKindEarlierFirst),
            "weather-causes-traffic" => Ok(CausalRule::WeatherCausesTraffic),
            other => Err(Error::Format(format!("unknown causal rule `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CausalLink {
    pub cause_id: String,
    pub effect_id: String,
    pub rule: CausalRule,
}

/// Direction of a correlated pair. Same-kind pairs: earlier start causes the
/// later one, equal starts resolved by the smaller id. Mixed pairs: only a
/// weather event that starts strictly earlier causes the traffic event.
pub fn assign_causality(a: &GeospatialEntity, b: &GeospatialEntity) -> Option<CausalLink> {
    if a.id == b.id {
        return None;
    }
    if a.kind == b.kind {
        let a_first = (a.time.start, &a.id) < (b.time.start, &b.id);
        let (cause, effect) = if a_first { (a, b) } else { (b, a) };
        return Some(CausalLink {
            cause_id: cause.id.clone(),
            effect_id: effect.id.clone(),
            rule: CausalRule::SameKindEarlierFirst,
        });
    }
    let (w, tr) = if a.kind == EntityKind::Weather { (a, b) } else { (b, a) };
    (w.time.start < tr.time.start).then(|| CausalLink {
        cause_id: w.id.clone(),
        effect_id: tr.id.clone(),
        rule: CausalRule::WeatherCausesTraffic,
    })
}

/// Directed links for a set of correlated pairs. Pairs naming unknown ids are
/// skipped. Output sorted by (cause, effect).
pub fn derive_links(entities: &[GeospatialEntity], pairs: &[(String, String)]) -> Vec<CausalLink> {
    let by_id: HashMap<&str, &GeospatialEntity> = entities.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut links: Vec<CausalLink> = pairs
        .iter()
        .filter_map(|(a, b)| {
            let (ea, eb) = (by_id.get(a.as_str())?, by_id.get(b.as_str())?);
            assign_causality(ea, eb)
        })
        .collect();
    links.sort();
    links
}

pub fn write_links<W: Write>(sink: W, links: &[CausalLink]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["cause_id", "effect_id", "rule"])?;
    for l in links {
        w.write_record([l.cause_id.as_str(), l.effect_id.as_str(), l.rule.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_links<R: Read>(source: R) -> Result<Vec<CausalLink>> {
    let mut r = csv::Reader::from_reader(source);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Format(format!("link row has {} fields, expected 3", rec.len())));
        }
        out.push(CausalLink {
            cause_id: rec[0].to_string(),
            effect_id: rec[1].to_string(),
            rule: rec[2].parse()?,
        });
    }
    Ok(out)
}
