//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use causenet::dataset::{Dataset, DatasetRow, RowBits, NUM_VARIABLES};
use causenet::events::{EntityKind, EventType, GeospatialEntity, Location, SeverityLabel, SeverityLevel, TimeInterval};
use causenet::learning::{Cpd, Estimator, NetworkModel};
use causenet::network::{Edge, NetworkSkeleton};
use causenet::pairing::PairingConfig;
use causenet::{Mode, VariableId};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn v(name: &str) -> VariableId {
    name.parse().unwrap()
}

pub fn entity(id: &str, ty: EventType, start: i64, lat: f64, lon: f64, airport: Option<&str>) -> GeospatialEntity {
    let kind = ty.kind();
    let severity = match kind {
        EntityKind::Weather => SeverityLevel::for_event(ty, SeverityLabel::Severe),
        EntityKind::Traffic => SeverityLevel { label: SeverityLabel::Other, numeric_center: None },
    };
    let mut loc = Location::at(lat, lon);
    loc.airport_code = airport.map(str::to_string);
    loc.city = "Testville".into();
    loc.state = "TX".into();
    GeospatialEntity { id: id.into(), kind, event_type: ty, severity, loc, time: TimeInterval { start, end: start + 1800 } }
}

/// Entities clustered around a few stations so that many pairs exist.
pub fn random_entities<R: Rng>(rng: &mut R, n: usize) -> Vec<GeospatialEntity> {
    let stations = [("KAUS", 30.27, -97.74), ("KDAL", 32.78, -96.80), ("KCLT", 35.23, -80.84), ("KLAX", 33.94, -118.41)];
    (0..n)
        .map(|i| {
            let (code, lat, lon) = stations[rng.gen_range(0..stations.len())];
            let weather = rng.gen_bool(0.3);
            let ty = if weather {
                *EventType::WEATHER.choose(rng).unwrap()
            } else {
                *EventType::TRAFFIC.choose(rng).unwrap()
            };
            let airport = if weather || rng.gen_bool(0.8) { Some(code) } else { None };
            let start = rng.gen_range(0..6 * 3600);
            entity(
                &format!("E{i:05}"),
                ty,
                start,
                lat + rng.gen_range(-0.15..0.15),
                lon + rng.gen_range(-0.15..0.15),
                airport,
            )
        })
        .collect()
}

/// Great-circle distance via the spherical law of cosines on unit vectors
/// (atan2 of cross and dot products), independent of the haversine form.
pub fn great_circle_km(a: &Location, b: &Location, r: f64) -> f64 {
    let unit = |l: &Location| {
        let (p, q) = (l.lat.to_radians(), l.lon.to_radians());
        [p.cos() * q.cos(), p.cos() * q.sin(), p.sin()]
    };
    let (x, y) = (unit(a), unit(b));
    let dot = x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
    let cross = [x[1] * y[2] - x[2] * y[1], x[2] * y[0] - x[0] * y[2], x[0] * y[1] - x[1] * y[0]];
    let cn = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    r * cn.atan2(dot)
}

/// Double loop over all unordered pairs with the pairing predicates written
/// out directly.
pub fn brute_force_pairs(entities: &[GeospatialEntity], cfg: &PairingConfig) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    for i in 0..entities.len() {
        for j in i + 1..entities.len() {
            let (a, b) = (&entities[i], &entities[j]);
            if (a.time.start - b.time.start).abs() > cfg.t_thresh {
                continue;
            }
            let close = if a.kind == EntityKind::Traffic && b.kind == EntityKind::Traffic {
                great_circle_km(&a.loc, &b.loc, cfg.earth_radius_km) < cfg.d_thresh
            } else {
                a.loc.airport_code.is_some() && a.loc.airport_code == b.loc.airport_code
            };
            if close {
                let (x, y) = if a.id <= b.id { (&a.id, &b.id) } else { (&b.id, &a.id) };
                out.insert((x.clone(), y.clone()));
            }
        }
    }
    out
}

pub fn row(yes: &[&str], anchor: &str) -> DatasetRow {
    let mut bits = RowBits::default();
    for n in yes {
        bits.set(v(n), true);
    }
    DatasetRow::new(bits, anchor, "Testville")
}

pub fn dataset(rows: Vec<DatasetRow>) -> Dataset {
    Dataset::new(rows, Mode::Binary)
}

/// Exhaustive Tomek-link computation: majority row `i` is flagged when some
/// minority row `j` is a nearest neighbor of `i` and `i` is a nearest
/// neighbor of `j` (Hamming over the non-target variables). NO is the
/// majority when the classes tie.
pub fn brute_force_tomek(ds: &Dataset, target: VariableId) -> BTreeSet<usize> {
    let (yes, no) = ds.class_counts(target);
    let majority = yes > no;
    let dist = |a: usize, b: usize| -> u32 {
        (0..NUM_VARIABLES)
            .filter(|&k| k != target.index())
            .filter(|&k| ((ds.rows[a].values.0 >> k) & 1) != ((ds.rows[b].values.0 >> k) & 1))
            .count() as u32
    };
    let n = ds.len();
    let nearest = |a: usize| (0..n).filter(|&k| k != a).map(|k| dist(a, k)).min().unwrap_or(u32::MAX);
    let mut out = BTreeSet::new();
    for i in 0..n {
        if ds.rows[i].get(target) != majority {
            continue;
        }
        for j in 0..n {
            if ds.rows[j].get(target) == majority {
                continue;
            }
            let d = dist(i, j);
            if d == nearest(i) && d == nearest(j) {
                out.insert(i);
            }
        }
    }
    out
}

pub fn closed_form_chi2(t: [[u64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = t.map(|r| r.map(|x| x as f64));
    let n = a + b + c + d;
    let den = (a + b) * (c + d) * (a + c) * (b + d);
    if den == 0.0 {
        0.0
    } else {
        n * (a * d - b * c).powi(2) / den
    }
}

/// A model kept as plain tables so the enumeration oracle does not go through
/// any library code. `p_yes[i][c]` is indexed like a CPD configuration: bit
/// `k` of `c` is the value of `parents[i][k]`.
#[derive(Clone, Debug)]
pub struct TableModel {
    pub nodes: Vec<VariableId>,
    pub parents: Vec<Vec<usize>>,
    pub p_yes: Vec<Vec<f64>>,
}

impl TableModel {
    pub fn to_model(&self) -> NetworkModel {
        let mut edges = Vec::new();
        for (i, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                edges.push(Edge::new(self.nodes[p], self.nodes[i]));
            }
        }
        let sk = NetworkSkeleton::new(self.nodes.clone(), edges).unwrap();
        let cpds = (0..self.nodes.len())
            .map(|i| {
                let parents = self.parents[i].iter().map(|&p| self.nodes[p]).collect();
                Cpd::from_table(self.nodes[i], parents, &self.p_yes[i]).unwrap()
            })
            .collect();
        NetworkModel::new(sk, cpds, Estimator::Mle).unwrap()
    }

    pub fn joint(&self, assignment: u64) -> f64 {
        (0..self.nodes.len())
            .map(|i| {
                let c = self.parents[i]
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (k, &p)| acc | ((((assignment >> p) & 1) as usize) << k));
                let p = self.p_yes[i][c];
                if (assignment >> i) & 1 == 1 { p } else { 1.0 - p }
            })
            .product()
    }

    /// `P(target = YES | evidence)` by summing the full joint; `None` when the
    /// evidence has zero probability.
    pub fn enumerate(&self, target: usize, evidence: &[(usize, bool)]) -> Option<f64> {
        let (mut yes, mut total) = (0.0, 0.0);
        for a in 0..1u64 << self.nodes.len() {
            if evidence.iter().any(|&(i, val)| ((a >> i) & 1 == 1) != val) {
                continue;
            }
            let p = self.joint(a);
            total += p;
            if (a >> target) & 1 == 1 {
                yes += p;
            }
        }
        (total > 0.0).then(|| yes / total)
    }

    pub fn index_of(&self, var: VariableId) -> usize {
        self.nodes.iter().position(|&n| n == var).unwrap()
    }
}

/// Random DAG over `n` distinct variables; each node draws up to three
/// parents among earlier nodes in a random order. Some CPD entries are
/// exactly 0 or 1.
pub fn random_table_model<R: Rng>(rng: &mut R, n: usize) -> TableModel {
    let mut all: Vec<VariableId> = VariableId::all().collect();
    all.shuffle(rng);
    let nodes: Vec<VariableId> = all[..n].to_vec();
    let mut parents = Vec::with_capacity(n);
    let mut p_yes = Vec::with_capacity(n);
    for i in 0..n {
        let mut cand: Vec<usize> = (0..i).collect();
        cand.shuffle(rng);
        let k = rng.gen_range(0..=cand.len().min(3));
        let ps: Vec<usize> = cand[..k].to_vec();
        let table = (0..1usize << k)
            .map(|_| match rng.gen_range(0..10) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.gen_range(0.02..0.98),
            })
            .collect();
        parents.push(ps);
        p_yes.push(table);
    }
    TableModel { nodes, parents, p_yes }
}

/// Dependencies of the hand-specified two-slice model, all of which lie on
/// the predefined skeleton.
pub const PLANTED_EDGES: [(&str, &str); 10] = [
    ("Snow", "Congestion"),
    ("Rain", "Rain_L"),
    ("Fog", "Fog_L"),
    ("Accident", "Accident_L"),
    ("Congestion", "Accident_L"),
    ("Rain_L", "Accident_L"),
    ("Congestion", "Congestion_L"),
    ("Snow_L", "Congestion_L"),
    ("Construction", "LaneBlocked_L"),
    ("Event", "Event_L"),
];

/// The 28-node generating model. Root events are balanced coin flips and
/// dependent events follow their parents closely, so every configuration is
/// either well supported or rare. Hail and Hail_L are isolated.
pub fn planted_tables() -> TableModel {
    let roots = [
        "SevereCold",
        "Fog",
        "Hail",
        "Rain",
        "Snow",
        "Storm",
        "Precipitation",
        "Accident",
        "BrokenVehicle",
        "Construction",
        "Event",
        "LaneBlocked",
        "FlowIncident",
        "SevereCold_L",
        "Hail_L",
        "Snow_L",
        "Storm_L",
        "Precipitation_L",
        "BrokenVehicle_L",
        "Construction_L",
        "FlowIncident_L",
    ]
    .map(|r| (r, 0.5));
    // Parents are listed in ascending variable index, matching how CPD
    // configurations are keyed.
    let children: [(&str, &[&str], &[f64]); 7] = [
        ("Congestion", &["Snow"], &[0.1, 0.9]),
        ("Rain_L", &["Rain"], &[0.1, 0.9]),
        ("Fog_L", &["Fog"], &[0.05, 0.85]),
        ("Accident_L", &["Accident", "Congestion", "Rain_L"], &[0.03, 0.1, 0.1, 0.9, 0.1, 0.9, 0.9, 0.97]),
        ("Congestion_L", &["Congestion", "Snow_L"], &[0.05, 0.8, 0.8, 0.95]),
        ("LaneBlocked_L", &["Construction"], &[0.1, 0.9]),
        ("Event_L", &["Event"], &[0.05, 0.9]),
    ];
    let nodes: Vec<VariableId> = VariableId::all().collect();
    let pos = |name: &str| nodes.iter().position(|&n| n == v(name)).unwrap();
    let mut parents = vec![Vec::new(); nodes.len()];
    let mut p_yes = vec![Vec::new(); nodes.len()];
    for (name, p) in &roots {
        p_yes[pos(name)] = vec![*p];
    }
    for (name, ps, table) in children {
        parents[pos(name)] = ps.iter().map(|p| pos(p)).collect();
        p_yes[pos(name)] = table.to_vec();
    }
    let model = TableModel { nodes, parents, p_yes };
    assert!(model.p_yes.iter().all(|t| !t.is_empty()), "every node has a CPD");
    model
}

/// Generating `P(YES)` for `node` under a configuration of a superset
/// parent list `learned` (projected onto the true parents).
pub fn generating_value(truth: &TableModel, node: VariableId, learned: &[VariableId], config: u64) -> f64 {
    let i = truth.index_of(node);
    let c = truth.parents[i].iter().enumerate().fold(0usize, |acc, (k, &p)| {
        let pos = learned.iter().position(|&l| l == truth.nodes[p]).expect("true parent retained");
        acc | ((((config >> pos) & 1) as usize) << k)
    });
    truth.p_yes[i][c]
}

/// Map from planted edge to its presence in `sk`.
pub fn planted_edge_presence(sk: &NetworkSkeleton) -> BTreeMap<(String, String), bool> {
    PLANTED_EDGES
        .iter()
        .map(|&(a, b)| ((a.to_string(), b.to_string()), sk.contains_edge(v(a), v(b))))
        .collect()
}

/// Ancestral sampling straight from the tables. Requires parents to precede
/// children in `nodes`.
pub fn sample_tables<R: Rng>(tm: &TableModel, n: usize, rng: &mut R) -> Dataset {
    assert!(tm.parents.iter().enumerate().all(|(i, ps)| ps.iter().all(|&p| p < i)));
    let rows = (0..n)
        .map(|r| {
            let mut bits = RowBits::default();
            let mut local = 0u64;
            for i in 0..tm.nodes.len() {
                let c = tm.parents[i]
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (k, &p)| acc | ((((local >> p) & 1) as usize) << k));
                let yes = rng.gen::<f64>() < tm.p_yes[i][c];
                if yes {
                    local |= 1 << i;
                    bits.set(tm.nodes[i], true);
                }
            }
            DatasetRow::new(bits, format!("r{r:06}"), "Planted")
        })
        .collect();
    Dataset::new(rows, Mode::Binary)
}
