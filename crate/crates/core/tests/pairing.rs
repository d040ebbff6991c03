mod common;

use std::collections::{BTreeSet, HashMap};

use causenet::events::{EntityKind, EventType, Location};
use causenet::pairing::{
    derive_links, find_correlated_pairs, haversine_km, read_links, write_links, CausalRule, PairingConfig, EARTH_RADIUS_KM,
};
use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pair_set(pairs: Vec<(String, String)>) -> BTreeSet<(String, String)> {
    pairs.into_iter().map(|(a, b)| if a <= b { (a, b) } else { (b, a) }).collect()
}

#[test]
fn invalid_config_is_rejected() {
    assert!(PairingConfig::new(0, 10.0).is_err());
    assert!(PairingConfig::new(3600, 0.0).is_err());
    assert!(PairingConfig::new(3600, f64::NAN).is_err());
}

#[test]
fn two_hundred_events_match_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let es = random_entities(&mut rng, 200);
    let cfg = PairingConfig::default();
    let got = pair_set(find_correlated_pairs(&es, &cfg).unwrap());
    assert!(got.len() > 50, "fixture should produce many pairs, got {}", got.len());
    assert_eq!(got, brute_force_pairs(&es, &cfg));
}

#[test]
fn boundary_cases() {
    let cfg = PairingConfig::default();
    let a = entity("A", EventType::Accident, 0, 30.0, -97.0, None);
    let b = entity("B", EventType::Congestion, 3600, 30.0, -97.0, None);
    let c = entity("C", EventType::Congestion, 3601, 30.0, -97.0, None);
    let w = entity("W", EventType::Rain, 0, 10.0, 10.0, Some("KAUS"));
    let t = entity("T", EventType::Event, 10, 10.0, 10.0, None);
    let pairs = pair_set(find_correlated_pairs(&[a, b, c, w.clone(), t], &cfg).unwrap());
    assert!(pairs.contains(&("A".into(), "B".into())), "time gap equal to the threshold pairs");
    assert!(!pairs.contains(&("A".into(), "C".into())));
    assert!(!pairs.iter().any(|(x, y)| x == "T" || y == "T"), "no airport code, no weather pairing");

    let mut bad = w;
    bad.loc.airport_code = None;
    assert!(find_correlated_pairs(&[bad], &cfg).is_err());
}

#[test]
fn links_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let es = random_entities(&mut rng, 120);
    let links = derive_links(&es, &find_correlated_pairs(&es, &PairingConfig::default()).unwrap());
    let mut buf = Vec::new();
    write_links(&mut buf, &links).unwrap();
    assert_eq!(read_links(&buf[..]).unwrap(), links);
}

fn location() -> impl Strategy<Value = Location> {
    (-90.0f64..=90.0, -180.0f64..=180.0).prop_map(|(lat, lon)| Location::at(lat, lon))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn haversine_is_a_metric_on_the_sphere(a in location(), b in location()) {
        let d = haversine_km(&a, &b, EARTH_RADIUS_KM);
        prop_assert_eq!(d, haversine_km(&b, &a, EARTH_RADIUS_KM));
        prop_assert!(d >= 0.0 && d <= std::f64::consts::PI * EARTH_RADIUS_KM + 1e-9);
        prop_assert_eq!(haversine_km(&a, &a, EARTH_RADIUS_KM), 0.0);
        if a.lat != b.lat || (a.lon != b.lon && a.lat.abs() != 90.0) {
            prop_assert!(d > 0.0);
        }
        let reference = great_circle_km(&a, &b, EARTH_RADIUS_KM);
        prop_assert!((d - reference).abs() < 1e-6, "{d} vs {reference}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pairs_match_exhaustive_search(seed in any::<u64>(), n in 0usize..120, t in 60i64..7200, d in 0.5f64..40.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let es = random_entities(&mut rng, n);
        let cfg = PairingConfig::new(t, d).unwrap();
        prop_assert_eq!(pair_set(find_correlated_pairs(&es, &cfg).unwrap()), brute_force_pairs(&es, &cfg));
    }

    #[test]
    fn pairs_ignore_input_order(seed in any::<u64>(), n in 0usize..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let es = random_entities(&mut rng, n);
        let mut shuffled = es.clone();
        shuffled.shuffle(&mut rng);
        let cfg = PairingConfig::default();
        let a = find_correlated_pairs(&es, &cfg).unwrap();
        let b = find_correlated_pairs(&shuffled, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(derive_links(&es, &a), derive_links(&shuffled, &b));
    }

    #[test]
    fn links_point_forward_in_time(seed in any::<u64>(), n in 0usize..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let es = random_entities(&mut rng, n);
        let by_id: HashMap<_, _> = es.iter().map(|e| (e.id.clone(), e)).collect();
        let pairs = find_correlated_pairs(&es, &PairingConfig::default()).unwrap();
        let links = derive_links(&es, &pairs);
        prop_assert!(links.len() <= pairs.len());
        for l in &links {
            let (c, e) = (by_id[&l.cause_id], by_id[&l.effect_id]);
            prop_assert!(c.time.start <= e.time.start);
            prop_assert!(!(c.kind == EntityKind::Traffic && e.kind == EntityKind::Weather));
            let mixed = c.kind != e.kind;
            prop_assert_eq!(mixed, l.rule == CausalRule::WeatherCausesTraffic);
            if mixed {
                prop_assert!(c.time.start < e.time.start);
            }
        }
    }
}
