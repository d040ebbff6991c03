//! Acceptance suite. Prints one PASS/FAIL line per criterion. Run with
//! `cargo test -p causenet-core --test acceptance -- --nocapture`.
//!
//! Deterministic criteria fail the test. Statistical criteria (sampled data,
//! fixed seed) are reported but do not abort, since a correct implementation
//! misses them on some seeds. The README's acceptance section gives their
//! measured pass rates.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use causenet::dataset::{build_dataset, tomek_links, BuildOptions};
use causenet::evaluation::{evaluate, evaluate_model, split, RandomGuess, SplitSpec};
use causenet::events::EventType;
use causenet::inference::{influence, posterior};
use causenet::learning::{fit, fit_bayes, fit_mle};
use causenet::network::{chi2_test, prune, standard_skeleton, ContingencyTable2x2, Edge, NetworkSkeleton};
use causenet::pairing::{find_correlated_pairs, CausalLink, CausalRule, PairingConfig};
use causenet::{Error, Estimator, Evidence, EvidenceScope, VariableId};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let t0 = Instant::now();
    let o = f();
    let took = t0.elapsed();
    match limit {
        Some(l) if took > l => outcome(false, format!("{}; took {:.2?} (limit {:.0?})", o.detail, took, l)),
        Some(l) => outcome(o.pass, format!("{}; {:.2?} (limit {:.0?})", o.detail, took, l)),
        None => outcome(o.pass, format!("{}; {:.2?}", o.detail, took)),
    }
}

fn chi2_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let t = [[rng.gen_range(0..300), rng.gen_range(0..300)], [rng.gen_range(0..300), rng.gen_range(0..300)]];
        let got = chi2_test(&ContingencyTable2x2::new(t)).unwrap().chi2;
        worst = worst.max((got - closed_form_chi2(t)).abs());
    }
    // Hand-computed: E = 25 / 15 / 30 in every cell.
    let worked = [
        ([[25, 25], [25, 25]], 0.0, 1.0),
        ([[10, 20], [20, 10]], 20.0 / 3.0, 0.0098),
        ([[50, 10], [10, 50]], 160.0 / 3.0, 3e-13),
    ];
    let mut worked_ok = true;
    for (t, chi2, p) in worked {
        let r = chi2_test(&ContingencyTable2x2::new(t)).unwrap();
        worked_ok &= (r.chi2 - chi2).abs() <= 1e-3 && (r.p_value - p).abs() <= 1e-3;
    }
    outcome(worst <= 1e-9 && worked_ok, format!("max |sum - closed| = {worst:.2e} over 50 tables; worked tables ok = {worked_ok}"))
}

fn inference_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut worst, mut queries, mut impossible, mut mismatched_errors) = (0.0f64, 0, 0, 0);
    for _ in 0..100 {
        let n = rng.gen_range(2..=12);
        let tm = random_table_model(&mut rng, n);
        let model = tm.to_model();
        for _ in 0..10 {
            let target = rng.gen_range(0..n);
            let mut ev = Vec::new();
            let mut evidence = Evidence::new();
            for i in (0..n).filter(|&i| i != target) {
                if rng.gen_bool(0.4) {
                    let val = rng.gen_bool(0.5);
                    ev.push((i, val));
                    evidence = evidence.with(tm.nodes[i], val);
                }
            }
            queries += 1;
            match (tm.enumerate(target, &ev), posterior(&model, tm.nodes[target], &evidence)) {
                (Some(p), Ok(r)) => worst = worst.max((p - r.p_yes).abs()),
                (None, Err(Error::ImpossibleEvidence)) => impossible += 1,
                _ => mismatched_errors += 1,
            }
        }
    }
    outcome(
        worst <= 1e-9 && mismatched_errors == 0,
        format!("{queries} queries, max |VE - enumeration| = {worst:.2e}, {impossible} zero-probability evidence sets agreed, {mismatched_errors} disagreements"),
    )
}

fn estimators() -> Outcome {
    // 20 rows: Rain/Congestion counts YY=6, YN=2, NY=3, NN=9.
    let mut rows = Vec::new();
    for (rain, cong, count) in [(true, true, 6), (true, false, 2), (false, true, 3), (false, false, 9)] {
        for _ in 0..count {
            let mut yes = Vec::new();
            if rain {
                yes.push("Rain");
            }
            if cong {
                yes.push("Congestion");
            }
            rows.push(row(&yes, "x"));
        }
    }
    let ds = dataset(rows);
    let sk = NetworkSkeleton::new([v("Rain"), v("Congestion")], vec![Edge::new(v("Rain"), v("Congestion"))]).unwrap();
    let mle = fit_mle(&sk, &ds).unwrap();
    let bayes = fit_bayes(&sk, &ds, 1.0).unwrap();
    let tiny = fit_bayes(&sk, &ds, 1e-9).unwrap();
    let p = |m: &causenet::NetworkModel, node: &str, c: u64| m.cpd(v(node)).unwrap().row(c).p_yes;
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let mle_ok = close(p(&mle, "Rain", 0), 8.0 / 20.0)
        && close(p(&mle, "Congestion", 1), 6.0 / 8.0)
        && close(p(&mle, "Congestion", 0), 3.0 / 12.0);
    let bayes_ok = close(p(&bayes, "Rain", 0), 9.0 / 22.0)
        && close(p(&bayes, "Congestion", 1), 7.0 / 10.0)
        && close(p(&bayes, "Congestion", 0), 4.0 / 14.0);

    // N(A=Y, B=Y) = 30 of N(B=Y) = 40 gives 31/42 under pseudo_count 1.
    let mut rows = Vec::new();
    for (a, count) in [(true, 30), (false, 10)] {
        for _ in 0..count {
            rows.push(row(if a { &["Rain", "Rain_L"][..] } else { &["Rain"][..] }, "x"));
        }
    }
    let sk2 = NetworkSkeleton::new([v("Rain"), v("Rain_L")], vec![Edge::new(v("Rain"), v("Rain_L"))]).unwrap();
    let m2 = fit_bayes(&sk2, &dataset(rows), 1.0).unwrap();
    let dirichlet_ok = close(p(&m2, "Rain_L", 1), 31.0 / 42.0);

    let mut limit_diff = 0.0f64;
    for (a, b) in mle.cpds.iter().zip(&tiny.cpds) {
        for (c, r) in a.observed() {
            limit_diff = limit_diff.max((r.p_yes - b.row(c).p_yes).abs());
        }
    }
    outcome(
        mle_ok && bayes_ok && dirichlet_ok && limit_diff < 1e-6,
        format!("MLE ratios {mle_ok}, Bayes(1) closed form {bayes_ok}/{dirichlet_ok}, max |Bayes(1e-9) - MLE| = {limit_diff:.2e}"),
    )
}

fn pair_dataset(cells: [[usize; 2]; 2], rng: &mut ChaCha8Rng) -> causenet::Dataset {
    use rand::seq::SliceRandom;
    let mut rows = Vec::new();
    for (i, a) in [true, false].into_iter().enumerate() {
        for (j, b) in [true, false].into_iter().enumerate() {
            for _ in 0..cells[i][j] {
                let mut yes = Vec::new();
                if a {
                    yes.push("Rain");
                }
                if b {
                    yes.push("Congestion");
                }
                rows.push(row(&yes, "x"));
            }
        }
    }
    rows.shuffle(rng);
    dataset(rows)
}

fn pruning_calibration() -> Outcome {
    let sk = NetworkSkeleton::new([v("Rain"), v("Congestion")], vec![Edge::new(v("Rain"), v("Congestion"))]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 2000;
    let (mut removed, mut retained, mut pop_retained) = (0, 0, 0);
    for _ in 0..200 {
        // Independent pair.
        let mut cells = [[0usize; 2]; 2];
        for _ in 0..n {
            cells[usize::from(!rng.gen_bool(0.5))][usize::from(!rng.gen_bool(0.5))] += 1;
        }
        removed += usize::from(prune(&sk, &pair_dataset(cells, &mut rng), 0.05).unwrap().edges.is_empty());

        // Planted dependence with observed phi = 0.1 (up to integer rounding)
        // around random margins.
        let na = rng.gen_range(800..=1200) as f64;
        let nb = rng.gen_range(800..=1200) as f64;
        let nf = n as f64;
        let n11 = (na * nb / nf + 0.1 * (na * (nf - na) * nb * (nf - nb)).sqrt() / nf).round();
        let cells = [[n11, na - n11], [nb - n11, nf - na - nb + n11]].map(|r| r.map(|x| x as usize));
        retained += usize::from(!prune(&sk, &pair_dataset(cells, &mut rng), 0.05).unwrap().edges.is_empty());

        // Informational: phi = 0.1 in the population only.
        let mut cells = [[0usize; 2]; 2];
        for _ in 0..n {
            let a = rng.gen_bool(0.5);
            let b = rng.gen_bool(if a { 0.55 } else { 0.45 });
            cells[usize::from(!a)][usize::from(!b)] += 1;
        }
        pop_retained += usize::from(!prune(&sk, &pair_dataset(cells, &mut rng), 0.05).unwrap().edges.is_empty());
    }
    let removal = removed as f64 / 200.0;
    let retention = retained as f64 / 200.0;
    outcome(
        (0.90..=1.00).contains(&removal) && retention == 1.0,
        format!(
            "independent removal {removal:.3}, planted retention {retention:.3} (population-level phi retention {:.3}, informational)",
            pop_retained as f64 / 200.0
        ),
    )
}

fn planted_end_to_end() -> Outcome {
    let truth = planted_tables();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let train = sample_tables(&truth, 50_000, &mut rng);
    let target = v("Accident_L");
    // The balanced test set comes from a separate draw: carving it out of the
    // training rows by class would bias every CPD upstream of the target.
    let pool = sample_tables(&truth, 20_000, &mut rng);
    let (_, test) = split(&pool, target, SplitSpec { test_pos: 1000, test_neg: 1000, seed: 14 }).unwrap();
    let pruned = prune(&standard_skeleton(), &train, 0.05).unwrap();
    let missing: Vec<_> = planted_edge_presence(&pruned).into_iter().filter(|(_, ok)| !ok).map(|(e, _)| e).collect();
    let model = fit(&pruned, &train, Estimator::Mle).unwrap();

    let (mut checked, mut over, mut worst, mut worst_at) = (0, 0, 0.0f64, String::new());
    if missing.is_empty() {
        for cpd in &model.cpds {
            for (c, r) in cpd.observed().filter(|(_, r)| r.support >= 500) {
                let want = generating_value(&truth, cpd.node, &cpd.parents, c);
                checked += 1;
                let d = (r.p_yes - want).abs();
                over += usize::from(d > 0.02);
                if d > worst {
                    worst = d;
                    worst_at = format!("{} config {c:#b} support {}", cpd.node, r.support);
                }
            }
        }
    }
    let bn = evaluate_model(&model, &test, target, 0.5, EvidenceScope::All).unwrap().weighted_f1;
    let random = evaluate(&RandomGuess { seed: 14 }, &test, target).unwrap().weighted_f1;
    outcome(
        missing.is_empty() && worst <= 0.02 && bn >= random + 0.2,
        format!(
            "{} pruned edges, missing planted {:?}; {checked} CPD entries, {over} beyond 0.02, max error {worst:.4} ({worst_at}); W-F1 BN {bn:.3} vs random {random:.3}",
            pruned.edges.len(),
            missing
        ),
    )
}

fn pairing_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let entities = random_entities(&mut rng, 1000);
    let cfg = PairingConfig::default();
    let got: BTreeSet<(String, String)> = find_correlated_pairs(&entities, &cfg).unwrap().into_iter().collect();
    let want = brute_force_pairs(&entities, &cfg);
    outcome(got == want, format!("{} pairs indexed vs {} brute force", got.len(), want.len()))
}

pub fn tomek_fixtures() -> Vec<(&'static str, causenet::Dataset, BTreeSet<usize>)> {
    vec![
        (
            "eight-row",
            dataset(vec![
                row(&["Rain"], "0"),
                row(&["Rain", "Accident_L"], "1"),
                row(&["Snow", "Fog", "Hail"], "2"),
                row(&["Snow", "Fog"], "3"),
                row(&["Snow", "Fog", "Hail", "Storm", "Accident_L"], "4"),
                row(&["Congestion", "Construction", "Event", "LaneBlocked", "FlowIncident"], "5"),
                row(&["Congestion", "Construction", "Event", "LaneBlocked"], "6"),
                row(&["Accident", "Accident_L"], "7"),
            ]),
            BTreeSet::from([0, 2]),
        ),
        (
            "identical-pair",
            dataset(vec![row(&["Fog"], "0"), row(&["Hail", "Storm"], "1"), row(&["Fog", "Accident_L"], "2")]),
            BTreeSet::from([0]),
        ),
        (
            "far-majority",
            dataset(vec![
                row(&["Congestion", "Construction", "Event", "LaneBlocked", "FlowIncident"], "0"),
                row(&["Congestion", "Construction", "Event", "LaneBlocked"], "1"),
                row(&["Congestion", "Construction", "Event", "LaneBlocked", "FlowIncident", "BrokenVehicle"], "2"),
                row(&["Rain", "Accident_L"], "3"),
            ]),
            BTreeSet::new(),
        ),
    ]
}

fn tomek_oracle() -> Outcome {
    let target = v("Accident_L");
    let mut notes = Vec::new();
    let mut pass = true;
    for (name, ds, hand) in tomek_fixtures() {
        let got = tomek_links(&ds, target).unwrap();
        let oracle = brute_force_tomek(&ds, target);
        pass &= got == oracle && got == hand;
        notes.push(format!("{name} {got:?}"));
    }
    outcome(pass, notes.join(", "))
}

fn influence_coherence() -> Outcome {
    let model = planted_tables().to_model();
    let target = v("Accident_L");
    let p_t = posterior(&model, target, &Evidence::new()).unwrap().p_yes;
    let mut worst = 0.0f64;
    let mut count = 0;
    for factor in VariableId::all().filter(|&f| f != target) {
        let r = influence(&model, factor, target).unwrap();
        let p_o = posterior(&model, factor, &Evidence::new()).unwrap().p_yes;
        worst = worst.max((p_t - (r.p_given_yes * p_o + r.p_given_no * (1.0 - p_o))).abs());
        count += 1;
    }
    let hail = influence(&model, VariableId::former(EventType::Hail), target).unwrap().delta;
    outcome(
        count == 27 && worst <= 1e-9 && hail.abs() < 1e-9,
        format!("{count} factors, max total-probability gap {worst:.2e}, |delta(Hail)| = {:.2e}", hail.abs()),
    )
}

fn golden_row() -> Outcome {
    let entities = vec![
        entity("A1", EventType::Accident, 3000, 30.27, -97.74, Some("KAUS")),
        entity("C1", EventType::Congestion, 2000, 30.27, -97.74, Some("KAUS")),
        entity("R1", EventType::Rain, 1000, 30.27, -97.74, Some("KAUS")),
        entity("S1", EventType::Snow, 500, 30.27, -97.74, Some("KAUS")),
    ];
    let link = |c: &str, e: &str, rule| CausalLink { cause_id: c.into(), effect_id: e.into(), rule };
    let links = vec![
        link("R1", "A1", CausalRule::WeatherCausesTraffic),
        link("C1", "A1", CausalRule::SameKindEarlierFirst),
        link("S1", "C1", CausalRule::WeatherCausesTraffic),
    ];
    let ds = build_dataset(&entities, &links, BuildOptions::default());
    let r = ds.rows.iter().find(|r| r.anchor_id == "A1").unwrap();
    let yes: BTreeSet<String> = VariableId::all().filter(|&x| r.get(x)).map(VariableId::name).collect();
    let want: BTreeSet<String> = ["Accident_L", "Rain_L", "Congestion", "Snow"].map(String::from).into();
    outcome(yes == want, format!("YES = {yes:?}"))
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Deterministic,
    Statistical,
}

#[test]
fn acceptance() {
    use Kind::*;
    let criteria: Vec<(&str, Kind, Option<u64>, fn() -> Outcome)> = vec![
        ("chi-square oracle", Deterministic, Some(1), chi2_oracle),
        ("inference oracle", Deterministic, Some(30), inference_oracle),
        ("estimator correctness", Deterministic, None, estimators),
        ("pruning calibration", Statistical, Some(60), pruning_calibration),
        ("planted-model end-to-end", Statistical, Some(120), planted_end_to_end),
        ("pairing oracle", Deterministic, Some(10), pairing_oracle),
        ("tomek oracle", Deterministic, None, tomek_oracle),
        ("influence coherence", Deterministic, None, influence_coherence),
        ("worked accident-anchor row", Deterministic, None, golden_row),
    ];
    let (mut failed, mut red) = (Vec::new(), Vec::new());
    for (name, kind, limit, f) in criteria {
        let o = timed(limit.map(Duration::from_secs), f);
        let tag = if kind == Statistical { " [statistical]" } else { "" };
        println!("{} {name}{tag}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        match (o.pass, kind) {
            (true, _) => {}
            (false, Deterministic) => failed.push(name),
            (false, Statistical) => red.push(name),
        }
    }
    println!("SKIP full-data reproduction: needs the full source event logs; run the CLI evaluate command against them");
    if !red.is_empty() {
        println!("statistical criteria red at the fixed seed: {red:?}");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
