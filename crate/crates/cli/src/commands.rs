use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use causenet::dataset::{balance_with_tomek, build_dataset, partition_by_city, read_dataset, write_dataset, BuildOptions};
use causenet::evaluation::{
    compute_metrics, evaluate, evaluate_model, fit_knn, fit_logistic, format_table, split, MetricsRecord, RandomGuess,
    SplitSpec, DEFAULT_EPOCHS, DEFAULT_LR,
};
use causenet::events::{deduplicate, parse_events, write_events, write_rejects, ParseOutcome};
use causenet::inference::{influence, predict_rows_lenient};
use causenet::learning::{fit, Estimator, NetworkModel};
use causenet::network::{group_strengths, prune, standard_skeleton};
use causenet::pairing::{
    derive_links, fill_missing_airport_codes, find_correlated_pairs, read_links, write_links, PairingConfig,
    EARTH_RADIUS_KM,
};
use causenet::viz::{ancestor_subgraph, filter_strong, to_dot, AbbreviationMap};
use causenet::{Dataset, EntityKind, GeospatialEntity, VariableId};
use log::{info, warn};
use rayon::prelude::*;

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

const DATASET_FILE: &str = "dataset.csv";
const CITIES_DIR: &str = "cities";

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn require(path: &Path, stage: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::missing_artifact(path, stage))
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn entity_file(dir: &Path, kind: EntityKind) -> PathBuf {
    dir.join(format!("{}.csv", kind.as_str()))
}

/// City name as a file stem.
fn file_stem(city: &str) -> String {
    let s: String = city.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
    if s.is_empty() { "unknown".into() } else { s }
}

fn load_entities(dir: &Path, manifest: &mut Manifest) -> CliResult<Vec<GeospatialEntity>> {
    let mut all = Vec::new();
    for kind in [EntityKind::Weather, EntityKind::Traffic] {
        let path = entity_file(dir, kind);
        require(&path, "ingest")?;
        manifest.input(&path);
        let out = parse_events(open(&path)?, kind)?;
        if !out.rejects.is_empty() {
            warn!("{}: {} rows rejected", path.display(), out.rejects.len());
        }
        all.extend(out.entities);
    }
    Ok(all)
}

fn load_dataset(path: &Path, manifest: &mut Manifest) -> CliResult<Dataset> {
    require(path, "build-dataset")?;
    manifest.input(path);
    Ok(read_dataset(open(path)?)?)
}

fn load_model(path: &Path, manifest: &mut Manifest) -> CliResult<NetworkModel> {
    require(path, "learn")?;
    manifest.input(path);
    Ok(NetworkModel::load(open(path)?)?)
}

fn check_threshold(t: f64) -> CliResult<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(CliError::usage(format!("threshold must lie in [0, 1], got {t}")))
    }
}

fn check_node(model: &NetworkModel, v: VariableId) -> CliResult<()> {
    if model.node_position(v).is_some() {
        Ok(())
    } else {
        Err(causenet::Error::UnknownVariable(v.name()).into())
    }
}

pub fn ingest(a: &IngestArgs) -> CliResult<()> {
    let mut m = Manifest::new("ingest", a, None)?;
    let mut parsed = Vec::new();
    for (path, kind) in [(&a.weather, EntityKind::Weather), (&a.traffic, EntityKind::Traffic)] {
        m.input(path);
        let reader = open(path)?;
        let outcome = if fs::metadata(path)?.len() == 0 {
            ParseOutcome { header: kind.required_columns().iter().map(|c| c.to_string()).collect(), ..Default::default() }
        } else {
            parse_events(reader, kind)?
        };
        parsed.push((kind, outcome));
    }
    fs::create_dir_all(&a.out)?;
    for (kind, outcome) in parsed {
        let read = outcome.entities.len();
        let entities = deduplicate(outcome.entities);
        let path = entity_file(&a.out, kind);
        write_events(create(&path)?, &entities, kind)?;
        m.output(&path);
        let rejects = a.out.join(format!("{}_rejects.csv", kind.as_str()));
        write_rejects(create(&rejects)?, &outcome.header, &outcome.rejects)?;
        m.output(&rejects);
        println!(
            "{kind}: {} entities, {} rejected, {} duplicates dropped",
            entities.len(),
            outcome.rejects.len(),
            read - entities.len()
        );
        if entities.is_empty() {
            warn!("{kind}: no entities ingested");
        }
    }
    m.write(&a.out)?;
    Ok(())
}

pub fn pair(a: &PairArgs) -> CliResult<()> {
    let cfg = PairingConfig::new(a.t_thresh, a.d_thresh)?;
    let mut m = Manifest::new("pair", a, None)?;
    let mut entities = load_entities(&a.entities, &mut m)?;
    let filled = fill_missing_airport_codes(&mut entities, EARTH_RADIUS_KM);
    if filled > 0 {
        info!("assigned the nearest station to {filled} traffic events without an airport code");
    }
    let pairs = find_correlated_pairs(&entities, &cfg)?;
    let links = derive_links(&entities, &pairs);
    write_links(create(&a.out)?, &links)?;
    m.output(&a.out);
    println!("{} correlated pairs, {} causal links", pairs.len(), links.len());
    m.write(&a.out)?;
    Ok(())
}

pub fn build(a: &BuildDatasetArgs) -> CliResult<()> {
    let mut m = Manifest::new("build-dataset", a, Some(a.seed))?;
    require(&a.pairs, "pair")?;
    m.input(&a.pairs);
    let links = read_links(open(&a.pairs)?)?;
    let dir = a.entities.clone().unwrap_or_else(|| a.pairs.parent().unwrap_or(Path::new(".")).to_path_buf());
    let entities = load_entities(&dir, &mut m)?;
    let opts = BuildOptions { mode: a.mode.into(), ..BuildOptions::default() };
    let ds = build_dataset(&entities, &links, opts);
    if ds.is_empty() {
        warn!("dataset is empty");
    }

    let parts: BTreeMap<String, Dataset> =
        if a.by_city { partition_by_city(&ds) } else { BTreeMap::from([("all".to_string(), ds.clone())]) };
    let parts: BTreeMap<String, Dataset> = parts
        .into_iter()
        .map(|(city, part)| {
            if !a.balance {
                return (city, part);
            }
            match balance_with_tomek(&part, a.target, a.seed, a.tomek) {
                Ok(b) => (city, b),
                Err(e) => {
                    warn!("{city}: not balanced ({e})");
                    (city, part)
                }
            }
        })
        .collect();

    fs::create_dir_all(&a.out)?;
    let rows = parts.values().flat_map(|d| d.rows.iter().cloned()).collect();
    let all = Dataset::new(rows, ds.mode);
    let path = a.out.join(DATASET_FILE);
    write_dataset(create(&path)?, &all)?;
    m.output(&path);
    let (yes, no) = all.class_counts(a.target);
    println!("{} rows ({yes} {} YES / {no} NO)", all.len(), a.target);
    if a.by_city {
        for (city, part) in &parts {
            let path = a.out.join(CITIES_DIR).join(format!("{}.csv", file_stem(city)));
            write_dataset(create(&path)?, part)?;
            m.output(&path);
            let (yes, no) = part.class_counts(a.target);
            println!("  {city}: {} rows ({yes} YES / {no} NO)", part.len());
        }
    }
    m.write(&a.out)?;
    Ok(())
}

fn estimator(a: &LearnArgs) -> CliResult<Estimator> {
    Ok(match a.estimator {
        EstimatorArg::Mle => Estimator::Mle,
        EstimatorArg::Bayes => Estimator::bayes(a.pseudo_count)?,
    })
}

pub fn learn(a: &LearnArgs) -> CliResult<()> {
    let est = estimator(a)?;
    let mut m = Manifest::new("learn", a, None)?;
    let path = if a.dataset.is_dir() || a.dataset.extension().is_none() {
        a.dataset.join(DATASET_FILE)
    } else {
        a.dataset.clone()
    };
    let ds = load_dataset(&path, &mut m)?;
    let full = standard_skeleton();
    let mut sk = prune(&full, &ds, a.alpha)?;
    let classes = group_strengths(&mut sk, a.k)?;
    let mut model = fit(&sk, &ds, est)?;
    model.alpha = Some(a.alpha);
    model.save(create(&a.out)?)?;
    m.output(&a.out);
    println!(
        "{} rows, kept {} of {} edges at alpha = {}, {classes} strength classes",
        ds.len(),
        sk.edges.len(),
        full.edges.len(),
        a.alpha
    );
    m.write(&a.out)?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) { format!("\"{}\"", s.replace('"', "\"\"")) } else { s.to_string() }
}

pub fn predict(a: &PredictArgs) -> CliResult<()> {
    check_threshold(a.threshold)?;
    let mut m = Manifest::new("predict", a, None)?;
    let model = load_model(&a.model, &mut m)?;
    check_node(&model, a.target)?;
    let ds = load_dataset(&a.test, &mut m)?;
    let rows: Vec<_> = ds.rows.iter().map(|r| r.values).collect();
    let (preds, retried) = predict_rows_lenient(&model, &rows, a.target, a.threshold, a.scope.into())?;
    if retried > 0 {
        warn!("{retried} of {} rows had impossible evidence and were predicted with less of it", rows.len());
    }

    let mut text = String::from("AnchorId,City,P_YES,Predicted,Actual\n");
    for (r, p) in ds.rows.iter().zip(&preds) {
        let yn = |b: bool| if b { "YES" } else { "NO" };
        text.push_str(&format!(
            "{},{},{:.6},{},{}\n",
            csv_field(&r.anchor_id),
            csv_field(&r.city),
            p.p_yes,
            yn(p.label),
            yn(r.get(a.target))
        ));
    }
    match &a.out {
        Some(out) => {
            create(out)?.write_all(text.as_bytes())?;
            m.output(out);
            m.write(out)?;
        }
        None => print!("{text}"),
    }
    let pairs: Vec<(bool, bool)> = preds.iter().zip(&ds.rows).map(|(p, r)| (p.label, r.get(a.target))).collect();
    if !pairs.is_empty() {
        let mt = compute_metrics(&pairs);
        eprintln!(
            "{} rows: acc {:.3}, non-acc {:.3}, precision {:.3}, recall {:.3}, f1 {:.3}, weighted f1 {:.3}",
            pairs.len(),
            mt.acc_yes,
            mt.acc_no,
            mt.precision,
            mt.recall,
            mt.f1,
            mt.weighted_f1
        );
    }
    Ok(())
}

fn parse_spec(s: &str) -> CliResult<(usize, usize)> {
    let bad = || CliError::usage(format!("--spec expects YES,NO counts, got `{s}`"));
    let (y, n) = s.split_once(',').ok_or_else(bad)?;
    Ok((y.trim().parse().map_err(|_| bad())?, n.trim().parse().map_err(|_| bad())?))
}

/// `(city, file)` pairs to evaluate.
fn city_files(a: &EvaluateArgs) -> CliResult<Vec<(String, PathBuf)>> {
    if a.dataset.is_file() {
        let stem = a.dataset.file_stem().map_or("all".into(), |s| s.to_string_lossy().into_owned());
        return Ok(vec![(stem, a.dataset.clone())]);
    }
    let cities = a.dataset.join(CITIES_DIR);
    if let Some(names) = &a.cities {
        return names
            .iter()
            .map(|c| {
                let path = cities.join(format!("{}.csv", file_stem(c)));
                require(&path, "build-dataset --by-city")?;
                Ok((c.clone(), path))
            })
            .collect();
    }
    if cities.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(&cities)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        return Ok(files
            .into_iter()
            .map(|p| (p.file_stem().unwrap_or_default().to_string_lossy().into_owned(), p))
            .collect());
    }
    let all = a.dataset.join(DATASET_FILE);
    require(&all, "build-dataset")?;
    Ok(vec![("all".into(), all)])
}

fn evaluate_city(a: &EvaluateArgs, model: &NetworkModel, alpha: f64, city: &str, ds: &Dataset) -> CliResult<Vec<MetricsRecord>> {
    let (test_pos, test_neg) = parse_spec(&a.spec)?;
    let (train, test) = split(ds, a.target, SplitSpec { test_pos, test_neg, seed: a.seed })
        .map_err(|e| CliError::data(format!("{city}: {e}")))?;
    let sk = prune(&standard_skeleton(), &train, alpha)?;
    let bn = fit(&sk, &train, model.estimator)?;
    let record = |name: &str, metrics| MetricsRecord { model: name.into(), city: city.into(), metrics };
    let mut out = vec![record("BN", evaluate_model(&bn, &test, a.target, a.threshold, a.scope.into())?)];
    for b in &a.baselines {
        let metrics = match b {
            Baseline::Lr => evaluate(&fit_logistic(&train, a.target, DEFAULT_LR, DEFAULT_EPOCHS)?, &test, a.target)?,
            Baseline::Knn => evaluate(&fit_knn(&train, a.target, a.knn_k)?, &test, a.target)?,
            Baseline::Random => evaluate(&RandomGuess { seed: a.seed }, &test, a.target)?,
        };
        let name = match b {
            Baseline::Lr => "LR",
            Baseline::Knn => "KNN",
            Baseline::Random => "Random",
        };
        out.push(record(name, metrics));
    }
    Ok(out)
}

pub fn evaluate_cmd(a: &EvaluateArgs) -> CliResult<()> {
    check_threshold(a.threshold)?;
    parse_spec(&a.spec)?;
    let mut m = Manifest::new("evaluate", a, Some(a.seed))?;
    let model = load_model(&a.model, &mut m)?;
    let alpha = model.alpha.ok_or_else(|| CliError::usage("model carries no pruning alpha; re-run `learn`"))?;
    let mut data = Vec::new();
    for (city, path) in city_files(a)? {
        let ds = load_dataset(&path, &mut m)?;
        data.push((city, ds));
    }
    let per_city: Vec<Vec<MetricsRecord>> = data
        .par_iter()
        .map(|(city, ds)| evaluate_city(a, &model, alpha, city, ds))
        .collect::<CliResult<_>>()?;
    let records: Vec<MetricsRecord> = per_city.into_iter().flatten().collect();
    print!("{}", format_table(&records));
    if let Some(out) = &a.out {
        let mut text = serde_json::to_string_pretty(&records)?;
        text.push('\n');
        create(out)?.write_all(text.as_bytes())?;
        m.output(out);
        m.write(out)?;
    }
    Ok(())
}

pub fn analyze(a: &AnalyzeArgs) -> CliResult<()> {
    let mut m = Manifest::new("analyze", a, None)?;
    let model = load_model(&a.model, &mut m)?;
    check_node(&model, a.target)?;
    let factors = match &a.factors {
        Some(f) => f.clone(),
        None => {
            let mut n = model.skeleton.parents(a.target);
            n.extend(model.skeleton.children(a.target));
            n.sort();
            n.dedup();
            n
        }
    };
    if let Some(f) = factors.iter().find(|&&f| f == a.target) {
        return Err(CliError::usage(format!("factor {f} is the target itself")));
    }
    if factors.is_empty() {
        warn!("{} has no neighbors in the model; nothing to analyze", a.target);
    }
    let reports = factors.iter().map(|&f| influence(&model, f, a.target)).collect::<Result<Vec<_>, _>>()?;
    println!("{:<18}{:>12}{:>12}{:>10}", "Factor", "P(T|YES)", "P(T|NO)", "Delta");
    for r in &reports {
        println!("{:<18}{:>12.4}{:>12.4}{:>+10.4}", r.factor.name(), r.p_given_yes, r.p_given_no, r.delta);
    }
    if let Some(out) = &a.out {
        let mut text = serde_json::to_string_pretty(&reports)?;
        text.push('\n');
        create(out)?.write_all(text.as_bytes())?;
        m.output(out);
        m.write(out)?;
    }
    Ok(())
}

pub fn visualize(a: &VisualizeArgs) -> CliResult<()> {
    let mut m = Manifest::new("visualize", a, None)?;
    let model = load_model(&a.model, &mut m)?;
    let mut sk = model.skeleton.clone();
    if !sk.is_annotated() {
        return Err(causenet::Error::NotAnnotated.into());
    }
    group_strengths(&mut sk, a.k)?;
    let filter = a.filter.as_deref().or(a.min_chi2.map(|_| "strong"));
    let sk = match filter {
        None | Some("all") => sk,
        Some("strong") => {
            let min = a.min_chi2.unwrap_or_else(|| {
                let top = sk.edges.iter().filter_map(|e| e.strength_class).max();
                sk.edges
                    .iter()
                    .filter(|e| e.strength_class == top)
                    .filter_map(|e| e.chi2())
                    .fold(f64::INFINITY, f64::min)
            });
            filter_strong(&sk, min)?
        }
        Some(f) => match f.strip_prefix("to:") {
            Some(name) => {
                let sink: VariableId = name.parse().map_err(|e: causenet::Error| CliError::usage(e.to_string()))?;
                ancestor_subgraph(&sk, sink)?
            }
            None => return Err(CliError::usage(format!("unknown filter `{f}`; use strong, all or to:VAR"))),
        },
    };
    let labels = AbbreviationMap::default()
        .with_overrides(&a.labels.join("\n"))
        .map_err(|e| CliError::usage(e.to_string()))?;
    let dot = to_dot(&sk, &labels);
    match &a.out {
        Some(out) => {
            create(out)?.write_all(dot.as_bytes())?;
            m.output(out);
            m.write(out)?;
            println!("{} nodes, {} edges", sk.nodes.len(), sk.edges.len());
        }
        None => print!("{dot}"),
    }
    Ok(())
}
