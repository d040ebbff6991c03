//! Event records: parsing, validation, deduplication and severity handling.
//!
//! Weather and traffic logs share one tabular layout (with slightly different
//! column order). Each well-formed row becomes a [`GeospatialEntity`]; rows
//! that fail validation are kept in a rejects report instead of aborting the
//! whole file.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityKind {
    Weather,
    Traffic,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Weather => "weather",
            EntityKind::Traffic => "traffic",
        }
    }

    /// Required input columns, in canonical order for this kind.
    pub fn required_columns(self) -> &'static [&'static str] {
        match self {
            EntityKind::Traffic => &TRAFFIC_COLUMNS,
            EntityKind::Weather => &WEATHER_COLUMNS,
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const COL_ID: &str = "EventId";
pub const COL_TYPE: &str = "Type";
pub const COL_SEVERITY: &str = "Severity";
pub const COL_START: &str = "StartTime(UTC)";
pub const COL_END: &str = "EndTime(UTC)";
pub const COL_LAT: &str = "LocationLat";
pub const COL_LNG: &str = "LocationLng";
pub const COL_AIRPORT: &str = "AirportCode";
pub const COL_CITY: &str = "City";
pub const COL_STATE: &str = "State";
pub const COL_ZIP: &str = "ZipCode";
/// Optional columns, written on export so that re-parsing is lossless.
pub const COL_STREET: &str = "Street";
pub const COL_SEVERITY_CENTER: &str = "SeverityCenter";

const TRAFFIC_COLUMNS: [&str; 11] = [
    COL_ID, COL_TYPE, COL_SEVERITY, COL_START, COL_END, COL_LAT, COL_LNG, COL_AIRPORT, COL_CITY,
    COL_STATE, COL_ZIP,
];
const WEATHER_COLUMNS: [&str; 11] = [
    COL_ID, COL_TYPE, COL_SEVERITY, COL_START, COL_END, COL_AIRPORT, COL_LAT, COL_LNG, COL_CITY,
    COL_STATE, COL_ZIP,
];

/// Closed event taxonomy. The first seven variants are weather types, the
/// last seven traffic types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventType {
    SevereCold,
    Fog,
    Hail,
    Rain,
    Snow,
    /// Extremely windy conditions (wind speed of at least 60 km/h).
    Storm,
    Precipitation,
    Accident,
    BrokenVehicle,
    Congestion,
    Construction,
    Event,
    LaneBlocked,
    FlowIncident,
}

impl EventType {
    pub const WEATHER: [EventType; 7] = [
        EventType::SevereCold,
        EventType::Fog,
        EventType::Hail,
        EventType::Rain,
        EventType::Snow,
        EventType::Storm,
        EventType::Precipitation,
    ];

    pub const TRAFFIC: [EventType; 7] = [
        EventType::Accident,
        EventType::BrokenVehicle,
        EventType::Congestion,
        EventType::Construction,
        EventType::Event,
        EventType::LaneBlocked,
        EventType::FlowIncident,
    ];

    pub fn kind(self) -> EntityKind {
        if (self as usize) < 7 {
            EntityKind::Weather
        } else {
            EntityKind::Traffic
        }
    }

    /// Position inside its own kind's taxonomy (0..7).
    pub fn ordinal(self) -> usize {
        (self as usize) % 7
    }

    pub fn name(self) -> &'static str {
        match self {
            EventType::SevereCold => "SevereCold",
            EventType::Fog => "Fog",
            EventType::Hail => "Hail",
            EventType::Rain => "Rain",
            EventType::Snow => "Snow",
            EventType::Storm => "Storm",
            EventType::Precipitation => "Precipitation",
            EventType::Accident => "Accident",
            EventType::BrokenVehicle => "BrokenVehicle",
            EventType::Congestion => "Congestion",
            EventType::Construction => "Construction",
            EventType::Event => "Event",
            EventType::LaneBlocked => "LaneBlocked",
            EventType::FlowIncident => "FlowIncident",
        }
    }

    /// Parse a taxonomy label. Case, spaces, hyphens and underscores are
    /// ignored, so `Broken-Vehicle` and `brokenvehicle` are both accepted.
    pub fn parse(label: &str) -> Option<EventType> {
        let norm: String = label
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        let t = match norm.as_str() {
            "severecold" => EventType::SevereCold,
            "fog" => EventType::Fog,
            "hail" => EventType::Hail,
            "rain" => EventType::Rain,
            "snow" => EventType::Snow,
            "storm" | "wind" => EventType::Storm,
            "precipitation" => EventType::Precipitation,
            "accident" => EventType::Accident,
            "brokenvehicle" => EventType::BrokenVehicle,
            "congestion" => EventType::Congestion,
            "construction" => EventType::Construction,
            "event" => EventType::Event,
            "laneblocked" => EventType::LaneBlocked,
            "flowincident" => EventType::FlowIncident,
            _ => return None,
        };
        Some(t)
    }

    pub fn all() -> impl Iterator<Item = EventType> {
        Self::WEATHER.into_iter().chain(Self::TRAFFIC)
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SeverityLabel {
    Light,
    Moderate,
    Heavy,
    Severe,
    Other,
    #[serde(rename = "UNK")]
    Unk,
    /// Binary-mode marker: the event exists, its level has been discarded.
    Present,
}

impl SeverityLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SeverityLabel::Light => "Light",
            SeverityLabel::Moderate => "Moderate",
            SeverityLabel::Heavy => "Heavy",
            SeverityLabel::Severe => "Severe",
            SeverityLabel::Other => "Other",
            SeverityLabel::Unk => "UNK",
            SeverityLabel::Present => "Present",
        }
    }

    /// Labels outside the taxonomy map to `UNK`.
    pub fn parse(s: &str) -> SeverityLabel {
        match s.trim().to_ascii_lowercase().as_str() {
            "light" => SeverityLabel::Light,
            "moderate" => SeverityLabel::Moderate,
            "heavy" => SeverityLabel::Heavy,
            "severe" => SeverityLabel::Severe,
            "other" => SeverityLabel::Other,
            "present" => SeverityLabel::Present,
            _ => SeverityLabel::Unk,
        }
    }

    /// Ordinal intensity used to pick the strongest contributing event.
    pub fn rank(self) -> u8 {
        match self {
            SeverityLabel::Light => 1,
            SeverityLabel::Moderate => 2,
            SeverityLabel::Heavy => 3,
            SeverityLabel::Severe => 4,
            SeverityLabel::Other | SeverityLabel::Unk | SeverityLabel::Present => 0,
        }
    }
}

impl fmt::Display for SeverityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Minimum wind speed (km/h) for the extreme-wind variable.
pub const EXTREME_WIND_KMH: f64 = 60.0;

/// Published severity cluster centers per weather type: rain and snow in
/// millimeters, wind in km/h, temperature in degrees Celsius.
pub fn cluster_centers(event_type: EventType) -> &'static [(SeverityLabel, f64)] {
    use SeverityLabel::*;
    match event_type {
        EventType::Rain => &[(Light, 2.5), (Moderate, 7.1), (Heavy, 11.6)],
        EventType::Snow => &[(Light, 0.6), (Moderate, 1.7), (Heavy, 2.5)],
        EventType::Storm => &[(Light, 13.2), (Moderate, 36.2), (Severe, 60.0)],
        EventType::SevereCold => &[(Severe, -23.7)],
        _ => &[],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeverityLevel {
    pub label: SeverityLabel,
    pub numeric_center: Option<f64>,
}

impl SeverityLevel {
    /// Severity with the published center for `(event_type, label)`, if any.
    pub fn for_event(event_type: EventType, label: SeverityLabel) -> Self {
        let numeric_center = cluster_centers(event_type)
            .iter()
            .find(|(l, _)| *l == label)
            .map(|&(_, c)| c);
        SeverityLevel { label, numeric_center }
    }

    pub fn present() -> Self {
        SeverityLevel { label: SeverityLabel::Present, numeric_center: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub lat: f64,
    pub lon: f64,
    pub airport_code: Option<String>,
    pub street: Option<String>,
    pub zipcode: Option<String>,
    pub city: String,
    pub state: String,
}

impl Location {
    pub fn at(lat: f64, lon: f64) -> Self {
        Location {
            lat,
            lon,
            airport_code: None,
            street: None,
            zipcode: None,
            city: String::new(),
            state: String::new(),
        }
    }
}

/// UTC interval in whole seconds since the epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeInterval {
    pub start: i64,
    pub end: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeospatialEntity {
    pub id: String,
    pub kind: EntityKind,
    pub event_type: EventType,
    pub severity: SeverityLevel,
    pub loc: Location,
    pub time: TimeInterval,
}

impl GeospatialEntity {
    /// Checks every type invariant; returns the first violation.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("missing event id".into());
        }
        if self.event_type.kind() != self.kind {
            return Err(format!("event type `{}` is not a {} type", self.event_type, self.kind));
        }
        if self.time.start > self.time.end {
            return Err("inverted interval".into());
        }
        if !(-90.0..=90.0).contains(&self.loc.lat) || !(-180.0..=180.0).contains(&self.loc.lon) {
            return Err("coordinate out of range".into());
        }
        if self.kind == EntityKind::Weather && self.loc.airport_code.is_none() {
            return Err("weather event without airport code".into());
        }
        if let Some(c) = self.severity.numeric_center {
            if !cluster_centers(self.event_type).iter().any(|&(_, pc)| (pc - c).abs() < 1e-9) {
                return Err(format!("severity center {c} is not a published cluster center"));
            }
        }
        Ok(())
    }
}

/// Whether weather severity is kept or reduced to presence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Binary,
    Leveled,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Mode::Binary),
            "leveled" => Ok(Mode::Leveled),
            other => Err(Error::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

/// A row that failed validation, with its raw fields.
#[derive(Clone, Debug, PartialEq)]
pub struct RejectedRow {
    /// 1-based line number in the source (the header is line 1).
    pub row_number: u64,
    pub fields: Vec<String>,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct ParseOutcome {
    pub entities: Vec<GeospatialEntity>,
    pub header: Vec<String>,
    pub rejects: Vec<RejectedRow>,
}

struct ColumnMap {
    id: usize,
    ty: usize,
    severity: usize,
    start: usize,
    end: usize,
    lat: usize,
    lng: usize,
    airport: usize,
    city: usize,
    state: usize,
    zip: usize,
    street: Option<usize>,
    center: Option<usize>,
}

impl ColumnMap {
    fn from_header(header: &csv::StringRecord, kind: EntityKind) -> Result<Self> {
        let find = |name: &str| header.iter().position(|h| h.trim() == name);
        let need = |name: &str| {
            find(name).ok_or_else(|| Error::MissingColumn {
                column: name.to_string(),
                kind: kind.to_string(),
            })
        };
        // Report the first missing column in canonical order.
        for col in kind.required_columns() {
            need(col)?;
        }
        Ok(ColumnMap {
            id: need(COL_ID)?,
            ty: need(COL_TYPE)?,
            severity: need(COL_SEVERITY)?,
            start: need(COL_START)?,
            end: need(COL_END)?,
            lat: need(COL_LAT)?,
            lng: need(COL_LNG)?,
            airport: need(COL_AIRPORT)?,
            city: need(COL_CITY)?,
            state: need(COL_STATE)?,
            zip: need(COL_ZIP)?,
            street: find(COL_STREET),
            center: find(COL_SEVERITY_CENTER),
        })
    }
}

/// Parse a UTC-normalized timestamp. Accepts RFC 3339 with an explicit offset,
/// or a bare `YYYY-MM-DD HH:MM:SS` which is taken to be UTC already.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%:z", "%Y-%m-%d %H:%M:%S%#z"] {
        if let Ok(dt) = DateTime::parse_from_str(s, fmt) {
            return Some(dt.timestamp());
        }
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

pub fn format_timestamp(secs: i64) -> String {
    DateTime::<Utc>::from_timestamp(secs, 0)
        .map(|dt| dt.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| secs.to_string())
}

fn optional(s: &str) -> Option<String> {
    let s = s.trim();
    (!s.is_empty()).then(|| s.to_string())
}

fn parse_row(
    rec: &csv::StringRecord,
    cols: &ColumnMap,
    kind: EntityKind,
) -> std::result::Result<GeospatialEntity, String> {
    let get = |i: usize| rec.get(i).unwrap_or("").trim();

    let id = get(cols.id);
    if id.is_empty() {
        return Err("missing event id".into());
    }

    let raw_type = get(cols.ty);
    let mut label = SeverityLabel::parse(get(cols.severity));
    let event_type = if kind == EntityKind::Weather && raw_type.eq_ignore_ascii_case("cold") {
        // Only the severe-cold temperature level is part of the model.
        if label != SeverityLabel::Severe {
            return Err("temperature level below severe-cold".into());
        }
        EventType::SevereCold
    } else {
        EventType::parse(raw_type).ok_or_else(|| format!("unknown event type `{raw_type}`"))?
    };
    if event_type.kind() != kind {
        return Err(format!("event type `{event_type}` is not a {kind} type"));
    }
    if event_type == EventType::SevereCold && label == SeverityLabel::Unk {
        label = SeverityLabel::Severe;
    }

    let start = parse_timestamp(get(cols.start))
        .ok_or_else(|| format!("unparseable {COL_START} `{}`", get(cols.start)))?;
    let end = parse_timestamp(get(cols.end))
        .ok_or_else(|| format!("unparseable {COL_END} `{}`", get(cols.end)))?;
    if start > end {
        return Err("inverted interval".into());
    }

    let coord = |i: usize| {
        get(i)
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("unparseable coordinate `{}`", get(i)))
    };
    let lat = coord(cols.lat)?;
    let lon = coord(cols.lng)?;

    let mut severity = SeverityLevel::for_event(event_type, label);
    if let Some(ci) = cols.center {
        let raw = get(ci);
        if !raw.is_empty() {
            let c: f64 = raw.parse().map_err(|_| format!("unparseable severity center `{raw}`"))?;
            severity.numeric_center = Some(c);
        }
    }

    let entity = GeospatialEntity {
        id: id.to_string(),
        kind,
        event_type,
        severity,
        loc: Location {
            lat,
            lon,
            airport_code: optional(get(cols.airport)),
            street: cols.street.and_then(|i| optional(get(i))),
            zipcode: optional(get(cols.zip)),
            city: get(cols.city).to_string(),
            state: get(cols.state).to_string(),
        },
        time: TimeInterval { start, end },
    };
    entity.validate()?;
    Ok(entity)
}

/// Parse a comma-separated event log of the given kind.
///
/// A missing required column fails the whole call; any per-row problem lands
/// in [`ParseOutcome::rejects`]. Rows are validated in parallel, the output
/// keeps file order.
pub fn parse_events<R: Read>(source: R, kind: EntityKind) -> Result<ParseOutcome> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let header = reader.headers()?.clone();
    let cols = ColumnMap::from_header(&header, kind)?;

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        records.push((line, rec));
    }

    let parsed: Vec<_> = records
        .par_iter()
        .map(|(line, rec)| {
            let res = if rec.len() != header.len() {
                Err(format!("expected {} fields, found {}", header.len(), rec.len()))
            } else {
                parse_row(rec, &cols, kind)
            };
            res.map_err(|reason| RejectedRow {
                row_number: *line,
                fields: rec.iter().map(str::to_string).collect(),
                reason,
            })
        })
        .collect();

    let mut out = ParseOutcome {
        header: header.iter().map(str::to_string).collect(),
        ..Default::default()
    };
    for r in parsed {
        match r {
            Ok(e) => out.entities.push(e),
            Err(rej) => out.rejects.push(rej),
        }
    }
    Ok(out)
}

/// Write entities in the canonical column order for `kind`, followed by the
/// optional `Street` and `SeverityCenter` columns.
pub fn write_events<W: Write>(sink: W, entities: &[GeospatialEntity], kind: EntityKind) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header: Vec<&str> = kind.required_columns().to_vec();
    header.extend([COL_STREET, COL_SEVERITY_CENTER]);
    w.write_record(&header)?;
    for e in entities.iter().filter(|e| e.kind == kind) {
        let center = e.severity.numeric_center.map(|c| c.to_string()).unwrap_or_default();
        let row: Vec<String> = header
            .iter()
            .map(|&col| match col {
                COL_ID => e.id.clone(),
                COL_TYPE => e.event_type.name().to_string(),
                COL_SEVERITY => e.severity.label.as_str().to_string(),
                COL_START => format_timestamp(e.time.start),
                COL_END => format_timestamp(e.time.end),
                COL_LAT => e.loc.lat.to_string(),
                COL_LNG => e.loc.lon.to_string(),
                COL_AIRPORT => e.loc.airport_code.clone().unwrap_or_default(),
                COL_CITY => e.loc.city.clone(),
                COL_STATE => e.loc.state.clone(),
                COL_ZIP => e.loc.zipcode.clone().unwrap_or_default(),
                COL_STREET => e.loc.street.clone().unwrap_or_default(),
                _ => center.clone(),
            })
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Write a rejects report: the source header plus `RowNumber` and `RejectReason`.
pub fn write_rejects<W: Write>(sink: W, header: &[String], rejects: &[RejectedRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(sink);
    let mut h: Vec<&str> = header.iter().map(String::as_str).collect();
    h.extend(["RowNumber", "RejectReason"]);
    w.write_record(&h)?;
    for r in rejects {
        let mut row = r.fields.clone();
        row.resize(header.len(), String::new());
        row.push(r.row_number.to_string());
        row.push(r.reason.clone());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(PartialEq, Eq, Hash)]
struct ContentKey {
    event_type: EventType,
    time: TimeInterval,
    lat: u64,
    lon: u64,
}

impl ContentKey {
    fn of(e: &GeospatialEntity) -> Self {
        // +0.0 and -0.0 must collide.
        let bits = |v: f64| if v == 0.0 { 0 } else { v.to_bits() };
        ContentKey { event_type: e.event_type, time: e.time, lat: bits(e.loc.lat), lon: bits(e.loc.lon) }
    }
}

/// Drop exact duplicates: repeated ids, and distinct ids carrying the same
/// (type, interval, coordinates). First occurrence wins; order is preserved.
pub fn deduplicate(entities: Vec<GeospatialEntity>) -> Vec<GeospatialEntity> {
    let mut ids = HashSet::with_capacity(entities.len());
    let mut contents = HashSet::with_capacity(entities.len());
    entities
        .into_iter()
        .filter(|e| {
            if ids.contains(e.id.as_str()) {
                return false;
            }
            let key = ContentKey::of(e);
            if contents.contains(&key) {
                return false;
            }
            ids.insert(e.id.clone());
            contents.insert(key);
            true
        })
        .collect()
}

/// Reduce a weather entity to what the model consumes.
///
/// Binary mode replaces the severity by a presence marker. Storm entries whose
/// wind center is below [`EXTREME_WIND_KMH`] do not belong to the extreme-wind
/// variable and yield `None`. Leveled mode returns the entity unchanged.
pub fn collapse_severity(entity: &GeospatialEntity, mode: Mode) -> Result<Option<GeospatialEntity>> {
    if entity.kind != EntityKind::Weather {
        return Err(Error::ContractViolation(format!(
            "collapse_severity expects a weather entity, got {} `{}`",
            entity.event_type, entity.id
        )));
    }
    match mode {
        Mode::Leveled => Ok(Some(entity.clone())),
        Mode::Binary => {
            if entity.event_type == EventType::Storm {
                if let Some(c) = entity.severity.numeric_center {
                    if c < EXTREME_WIND_KMH {
                        return Ok(None);
                    }
                }
            }
            let mut out = entity.clone();
            out.severity = SeverityLevel::present();
            Ok(Some(out))
        }
    }
}
