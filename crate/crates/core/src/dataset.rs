//! The 28-variable two-slice binary dataset.
//!
//! Variables are laid out as `[former weather, former traffic, latter weather,
//! latter traffic]`, seven event types per group. Rows are built per anchor
//! event from its causes and results.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{collapse_severity, EntityKind, EventType, GeospatialEntity, Mode, SeverityLabel, SeverityLevel};
use crate::pairing::CausalLink;

pub const NUM_VARIABLES: usize = 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slice {
    Former,
    Latter,
}

/// One node of the two-slice network: an event type in the former (T) or
/// latter (T') slice. The weather/traffic group follows from the type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VariableId {
    pub slice: Slice,
    pub event_type: EventType,
}

impl VariableId {
    pub const fn new(slice: Slice, event_type: EventType) -> Self {
        VariableId { slice, event_type }
    }

    pub const fn former(event_type: EventType) -> Self {
        Self::new(Slice::Former, event_type)
    }

    pub const fn latter(event_type: EventType) -> Self {
        Self::new(Slice::Latter, event_type)
    }

    pub fn group(self) -> EntityKind {
        self.event_type.kind()
    }

    /// Column position in `[T_weather, T_traffic, T_weather', T_traffic']`.
    pub fn index(self) -> usize {
        let slice = match self.slice {
            Slice::Former => 0,
            Slice::Latter => 14,
        };
        slice + self.event_type as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        if i >= NUM_VARIABLES {
            return None;
        }
        let slice = if i < 14 { Slice::Former } else { Slice::Latter };
        let t = EventType::all().nth(i % 14)?;
        Some(VariableId::new(slice, t))
    }

    /// All 28 variables in column order.
    pub fn all() -> impl Iterator<Item = VariableId> {
        (0..NUM_VARIABLES).map(|i| VariableId::from_index(i).expect("in range"))
    }

    /// `<Type>` for the former slice, `<Type>_L` for the latter.
    pub fn name(self) -> String {
        match self.slice {
            Slice::Former => self.event_type.name().to_string(),
            Slice::Latter => format!("{}_L", self.event_type.name()),
        }
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for VariableId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (base, slice) = match s.strip_suffix("_L").or_else(|| s.strip_suffix('\'')) {
            Some(b) => (b, Slice::Latter),
            None => (s, Slice::Former),
        };
        EventType::parse(base)
            .map(|t| VariableId::new(slice, t))
            .ok_or_else(|| Error::UnknownVariable(s.to_string()))
    }
}

impl Serialize for VariableId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for VariableId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// YES/NO values of the 28 variables, bit `VariableId::index()` set for YES.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowBits(pub u32);

impl RowBits {
    pub fn get(self, v: VariableId) -> bool {
        self.0 >> v.index() & 1 == 1
    }

    pub fn set(&mut self, v: VariableId, yes: bool) {
        if yes {
            self.0 |= 1 << v.index();
        } else {
            self.0 &= !(1 << v.index());
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRow {
    pub values: RowBits,
    pub anchor_id: String,
    pub city: String,
    /// Strongest contributing severity per weather variable (leveled mode).
    pub severity: Option<BTreeMap<VariableId, SeverityLevel>>,
}

impl DatasetRow {
    pub fn new(values: RowBits, anchor_id: impl Into<String>, city: impl Into<String>) -> Self {
        DatasetRow { values, anchor_id: anchor_id.into(), city: city.into(), severity: None }
    }

    pub fn get(&self, v: VariableId) -> bool {
        self.values.get(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub rows: Vec<DatasetRow>,
    pub mode: Mode,
}

impl Dataset {
    pub fn new(rows: Vec<DatasetRow>, mode: Mode) -> Self {
        Dataset { rows, mode }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// (YES count, NO count) for `target`.
    pub fn class_counts(&self, target: VariableId) -> (usize, usize) {
        let yes = self.rows.iter().filter(|r| r.get(target)).count();
        (yes, self.rows.len() - yes)
    }

    fn subset(&self, idx: impl IntoIterator<Item = usize>) -> Dataset {
        Dataset { rows: idx.into_iter().map(|i| self.rows[i].clone()).collect(), mode: self.mode }
    }
}

/// Cause/result adjacency over a set of entities.
pub struct LinkIndex<'a> {
    by_id: HashMap<&'a str, &'a GeospatialEntity>,
    causes: HashMap<&'a str, Vec<&'a GeospatialEntity>>,
    results: HashMap<&'a str, Vec<&'a GeospatialEntity>>,
}

impl<'a> LinkIndex<'a> {
    /// Links that mention an id not present in `entities` are ignored.
    pub fn new(entities: &'a [GeospatialEntity], links: &'a [CausalLink]) -> Self {
        let by_id: HashMap<&str, &GeospatialEntity> = entities.iter().map(|e| (e.id.as_str(), e)).collect();
        let mut causes: HashMap<&str, Vec<&GeospatialEntity>> = HashMap::new();
        let mut results: HashMap<&str, Vec<&GeospatialEntity>> = HashMap::new();
        for l in links {
            let (Some(&c), Some(&e)) = (by_id.get(l.cause_id.as_str()), by_id.get(l.effect_id.as_str())) else {
                continue;
            };
            causes.entry(e.id.as_str()).or_default().push(c);
            results.entry(c.id.as_str()).or_default().push(e);
        }
        LinkIndex { by_id, causes, results }
    }

    pub fn entity(&self, id: &str) -> Option<&'a GeospatialEntity> {
        self.by_id.get(id).copied()
    }

    pub fn causes(&self, id: &str) -> &[&'a GeospatialEntity] {
        self.causes.get(id).map_or(&[], Vec::as_slice)
    }

    pub fn results(&self, id: &str) -> &[&'a GeospatialEntity] {
        self.results.get(id).map_or(&[], Vec::as_slice)
    }
}

struct RowBuilder {
    values: RowBits,
    severity: Option<BTreeMap<VariableId, SeverityLevel>>,
}

impl RowBuilder {
    fn mark(&mut self, slice: Slice, e: &GeospatialEntity) {
        let v = VariableId::new(slice, e.event_type);
        self.values.set(v, true);
        if let (Some(map), EntityKind::Weather) = (self.severity.as_mut(), e.kind) {
            let slot = map.entry(v).or_insert(e.severity);
            if e.severity.label.rank() > slot.label.rank() {
                *slot = e.severity;
            }
        }
    }
}

/// Build the row anchored at `anchor`.
///
/// Traffic anchor: itself in T_traffic', its weather causes in T_weather', its
/// traffic causes in T_traffic, and their weather causes in T_weather.
/// Weather anchor: itself in T_weather, its traffic results in T_traffic, and
/// their traffic results in T_traffic'.
pub fn build_row(anchor: &GeospatialEntity, links: &LinkIndex<'_>, mode: Mode) -> DatasetRow {
    let mut b = RowBuilder {
        values: RowBits::default(),
        severity: (mode == Mode::Leveled).then(BTreeMap::new),
    };
    match anchor.kind {
        EntityKind::Traffic => {
            b.mark(Slice::Latter, anchor);
            for c in links.causes(&anchor.id) {
                match c.kind {
                    EntityKind::Weather => b.mark(Slice::Latter, c),
                    EntityKind::Traffic => {
                        b.mark(Slice::Former, c);
                        for cc in links.causes(&c.id).iter().filter(|cc| cc.kind == EntityKind::Weather) {
                            b.mark(Slice::Former, cc);
                        }
                    }
                }
            }
        }
        EntityKind::Weather => {
            b.mark(Slice::Former, anchor);
            for r in links.results(&anchor.id).iter().filter(|r| r.kind == EntityKind::Traffic) {
                b.mark(Slice::Former, r);
                for rr in links.results(&r.id).iter().filter(|rr| rr.kind == EntityKind::Traffic) {
                    b.mark(Slice::Latter, rr);
                }
            }
        }
    }
    DatasetRow { values: b.values, anchor_id: anchor.id.clone(), city: anchor.loc.city.clone(), severity: b.severity }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub mode: Mode,
    pub include_weather_anchors: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { mode: Mode::Binary, include_weather_anchors: true }
    }
}

/// One row per anchor entity, ordered by anchor id.
///
/// In binary mode weather entities go through [`collapse_severity`] first;
/// those it drops (sub-extreme wind) neither anchor rows nor contribute.
pub fn build_dataset(entities: &[GeospatialEntity], links: &[CausalLink], opts: BuildOptions) -> Dataset {
    let kept: Vec<GeospatialEntity> = entities
        .iter()
        .filter_map(|e| match e.kind {
            EntityKind::Traffic => Some(e.clone()),
            EntityKind::Weather => collapse_severity(e, opts.mode).expect("weather entity"),
        })
        .collect();
    let index = LinkIndex::new(&kept, links);
    let mut anchors: Vec<&GeospatialEntity> = kept
        .iter()
        .filter(|e| opts.include_weather_anchors || e.kind == EntityKind::Traffic)
        .collect();
    anchors.sort_by(|a, b| a.id.cmp(&b.id));
    let rows = anchors.par_iter().map(|a| build_row(a, &index, opts.mode)).collect();
    Dataset { rows, mode: opts.mode }
}

pub fn partition_by_city(ds: &Dataset) -> BTreeMap<String, Dataset> {
    let mut out: BTreeMap<String, Dataset> = BTreeMap::new();
    for row in &ds.rows {
        out.entry(row.city.clone())
            .or_insert_with(|| Dataset::new(Vec::new(), ds.mode))
            .rows
            .push(row.clone());
    }
    out
}

fn class_indices(ds: &Dataset, target: VariableId) -> (Vec<usize>, Vec<usize>) {
    (0..ds.rows.len()).partition(|&i| ds.rows[i].get(target))
}

fn degenerate(target: VariableId, yes: usize, no: usize) -> Error {
    Error::DegenerateClasses { target: target.name(), yes, no }
}

/// Random undersampling of the majority class to exactly the minority count.
/// Surviving rows keep their input order.
pub fn balance(ds: &Dataset, target: VariableId, seed: u64) -> Result<Dataset> {
    let (yes, no) = class_indices(ds, target);
    if yes.is_empty() || no.is_empty() {
        return Err(degenerate(target, yes.len(), no.len()));
    }
    let (minority, mut majority) = if yes.len() <= no.len() { (yes, no) } else { (no, yes) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    majority.shuffle(&mut rng);
    majority.truncate(minority.len());
    let mut keep: Vec<usize> = minority.into_iter().chain(majority).collect();
    keep.sort_unstable();
    Ok(ds.subset(keep))
}

/// Hamming distance over all variables except `target`.
fn feature_distance(a: RowBits, b: RowBits, mask: u32) -> u32 {
    ((a.0 ^ b.0) & mask).count_ones()
}

/// Majority-class rows that form a Tomek link with some minority row: the two
/// rows are at distance `d` and no other row is strictly closer than `d` to
/// either of them. Distance is Hamming over the 27 non-target variables.
///
/// When both classes have equal size, NO is taken as the majority class.
pub fn tomek_links(ds: &Dataset, target: VariableId) -> Result<BTreeSet<usize>> {
    let (yes, no) = class_indices(ds, target);
    if yes.is_empty() || no.is_empty() {
        return Err(degenerate(target, yes.len(), no.len()));
    }
    let majority_is_yes = yes.len() > no.len();
    let mask = ((1u32 << NUM_VARIABLES) - 1) & !(1 << target.index());

    // Work on distinct feature patterns; rows sharing a pattern share distances.
    let mut patterns: BTreeMap<u32, [Vec<usize>; 2]> = BTreeMap::new();
    for (i, row) in ds.rows.iter().enumerate() {
        let class = usize::from(row.get(target) == majority_is_yes); // 1 = majority
        patterns.entry(row.values.0 & mask).or_default()[class].push(i);
    }
    let keys: Vec<u32> = patterns.keys().copied().collect();
    let counts: Vec<usize> = patterns.values().map(|c| c[0].len() + c[1].len()).collect();

    // Nearest-neighbor distance of any row with pattern k.
    let nn: Vec<u32> = (0..keys.len())
        .into_par_iter()
        .map(|a| {
            if counts[a] > 1 {
                return 0;
            }
            (0..keys.len())
                .filter(|&b| b != a)
                .map(|b| feature_distance(RowBits(keys[a]), RowBits(keys[b]), mask))
                .min()
                .unwrap_or(u32::MAX)
        })
        .collect();

    let classes: Vec<&[Vec<usize>; 2]> = patterns.values().collect();
    let flagged: Vec<usize> = (0..keys.len())
        .into_par_iter()
        .filter(|&a| !classes[a][1].is_empty())
        .filter(|&a| {
            (0..keys.len()).any(|b| {
                !classes[b][0].is_empty() && {
                    let d = feature_distance(RowBits(keys[a]), RowBits(keys[b]), mask);
                    d == nn[a] && d == nn[b]
                }
            })
        })
        .flat_map_iter(|a| classes[a][1].clone())
        .collect();
    Ok(flagged.into_iter().collect())
}

/// Balancing pipeline: optional Tomek-link removal of majority rows, then
/// random undersampling to exact class equality.
pub fn balance_with_tomek(ds: &Dataset, target: VariableId, seed: u64, tomek: bool) -> Result<Dataset> {
    if !tomek {
        return balance(ds, target, seed);
    }
    let flagged = tomek_links(ds, target)?;
    let cleaned = ds.subset((0..ds.rows.len()).filter(|i| !flagged.contains(i)));
    balance(&cleaned, target, seed)
}

const COL_ANCHOR: &str = "AnchorId";
const COL_CITY: &str = "City";
const COL_SEVERITIES: &str = "Severities";

/// Comma-separated dataset: 28 variable columns (YES/NO), `AnchorId`, `City`,
/// and in leveled mode a trailing `Severities` column (`Var=Label;...`).
pub fn write_dataset<W: Write>(sink: W, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header: Vec<String> = VariableId::all().map(VariableId::name).collect();
    header.extend([COL_ANCHOR.to_string(), COL_CITY.to_string()]);
    if ds.mode == Mode::Leveled {
        header.push(COL_SEVERITIES.to_string());
    }
    w.write_record(&header)?;
    for row in &ds.rows {
        let mut rec: Vec<String> = VariableId::all()
            .map(|v| if row.get(v) { "YES" } else { "NO" }.to_string())
            .collect();
        rec.push(row.anchor_id.clone());
        rec.push(row.city.clone());
        if ds.mode == Mode::Leveled {
            let sev = row
                .severity
                .iter()
                .flatten()
                .map(|(v, s)| format!("{}={}", v.name(), s.label))
                .collect::<Vec<_>>()
                .join(";");
            rec.push(sev);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(source: R) -> Result<Dataset> {
    let mut r = csv::Reader::from_reader(source);
    let header = r.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("dataset is missing column `{name}`")))
    };
    let var_cols: Vec<(VariableId, usize)> =
        VariableId::all().map(|v| col(&v.name()).map(|c| (v, c))).collect::<Result<_>>()?;
    let anchor = col(COL_ANCHOR)?;
    let city = col(COL_CITY)?;
    let sev = header.iter().position(|h| h == COL_SEVERITIES);
    let mode = if sev.is_some() { Mode::Leveled } else { Mode::Binary };

    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut values = RowBits::default();
        for &(v, c) in &var_cols {
            match rec.get(c) {
                Some("YES") => values.set(v, true),
                Some("NO") => {}
                other => {
                    return Err(Error::Format(format!("variable {v}: expected YES/NO, got {:?}", other.unwrap_or(""))))
                }
            }
        }
        let severity = match sev {
            None => None,
            Some(c) => {
                let mut map = BTreeMap::new();
                for item in rec.get(c).unwrap_or("").split(';').filter(|s| !s.is_empty()) {
                    let (v, l) = item
                        .split_once('=')
                        .ok_or_else(|| Error::Format(format!("bad severity annotation `{item}`")))?;
                    let v: VariableId = v.parse()?;
                    map.insert(v, SeverityLevel::for_event(v.event_type, SeverityLabel::parse(l)));
                }
                Some(map)
            }
        };
        rows.push(DatasetRow {
            values,
            anchor_id: rec.get(anchor).unwrap_or("").to_string(),
            city: rec.get(city).unwrap_or("").to_string(),
            severity,
        });
    }
    Ok(Dataset { rows, mode })
}
