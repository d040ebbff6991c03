//! Shared fixtures for the benchmarks.

use causenet::events::{EntityKind, EventType, GeospatialEntity, Location, SeverityLabel, SeverityLevel, TimeInterval};
use causenet::learning::{Cpd, Estimator, NetworkModel};
use causenet::network::{Edge, NetworkSkeleton};
use causenet::{Dataset, VariableId};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STATIONS: [(&str, f64, f64); 6] = [
    ("KAUS", 30.19, -97.67),
    ("KDAL", 32.85, -96.85),
    ("KIAH", 29.98, -95.34),
    ("KCLT", 35.21, -80.94),
    ("KATL", 33.64, -84.43),
    ("KLAX", 33.94, -118.41),
];

/// `n` events around six stations over one week, about a quarter weather.
pub fn entities(n: usize, seed: u64) -> Vec<GeospatialEntity> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (code, lat, lon) = STATIONS[rng.gen_range(0..STATIONS.len())];
            let weather = rng.gen_bool(0.25);
            let (kind, ty) = if weather {
                (EntityKind::Weather, *EventType::WEATHER.choose(&mut rng).unwrap())
            } else {
                (EntityKind::Traffic, *EventType::TRAFFIC.choose(&mut rng).unwrap())
            };
            let mut loc = Location::at(lat + rng.gen_range(-0.2..0.2), lon + rng.gen_range(-0.2..0.2));
            loc.airport_code = Some(code.to_string());
            let start = rng.gen_range(0..7 * 24 * 3600);
            GeospatialEntity {
                id: format!("E{i:07}"),
                kind,
                event_type: ty,
                severity: SeverityLevel { label: SeverityLabel::Other, numeric_center: None },
                loc,
                time: TimeInterval { start, end: start + 1800 },
            }
        })
        .collect()
}

/// A network over all 28 variables: each latter-slice node draws up to
/// `max_parents` parents among the former slice, with random tables.
pub fn model(max_parents: usize, seed: u64) -> NetworkModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<VariableId> = VariableId::all().collect();
    let (former, latter) = all.split_at(14);
    let mut edges = Vec::new();
    let mut cpds = Vec::new();
    for &v in former {
        cpds.push(Cpd::from_table(v, vec![], &[rng.gen_range(0.1..0.9)]).unwrap());
    }
    for &v in latter {
        let mut parents: Vec<VariableId> = former.choose_multiple(&mut rng, max_parents).copied().collect();
        parents.sort();
        edges.extend(parents.iter().map(|&p| Edge::new(p, v)));
        let table: Vec<f64> = (0..1 << parents.len()).map(|_| rng.gen_range(0.05..0.95)).collect();
        cpds.push(Cpd::from_table(v, parents, &table).unwrap());
    }
    let sk = NetworkSkeleton::new(all.clone(), edges).unwrap();
    NetworkModel::new(sk, cpds, Estimator::Mle).unwrap()
}

pub fn dataset(n: usize, seed: u64) -> Dataset {
    causenet::sampling::sample_dataset(&model(3, seed), n, seed, "Bench").unwrap()
}
