//! CPD estimation over a fixed skeleton: maximum likelihood and Dirichlet
//! posterior mean.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, RowBits, VariableId};
use crate::error::{Error, Result};
use crate::network::NetworkSkeleton;

pub const DEFAULT_PSEUDO_COUNT: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Estimator {
    Mle,
    Bayes { pseudo_count: f64 },
}

impl Estimator {
    pub fn bayes(pseudo_count: f64) -> Result<Self> {
        if !(pseudo_count > 0.0) || !pseudo_count.is_finite() {
            return Err(Error::InvalidConfig(format!("pseudo_count must be > 0, got {pseudo_count}")));
        }
        Ok(Estimator::Bayes { pseudo_count })
    }

    /// `(P(YES), P(NO))` from `yes` of `total` observations.
    fn estimate(self, yes: u64, total: u64) -> (f64, f64) {
        match self {
            Estimator::Mle if total == 0 => (0.5, 0.5),
            Estimator::Mle => (yes as f64 / total as f64, (total - yes) as f64 / total as f64),
            Estimator::Bayes { pseudo_count: a } => {
                let denom = total as f64 + 2.0 * a;
                ((yes as f64 + a) / denom, ((total - yes) as f64 + a) / denom)
            }
        }
    }
}

impl Default for Estimator {
    fn default() -> Self {
        Estimator::Bayes { pseudo_count: DEFAULT_PSEUDO_COUNT }
    }
}

/// One row of a CPD.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CpdRow {
    pub p_yes: f64,
    pub p_no: f64,
    /// Number of training rows with this parent configuration.
    pub support: u64,
    /// True when the configuration was never observed and the row is the
    /// estimator's fallback (uniform for MLE, the prior mean for Bayes).
    pub fallback: bool,
}

impl CpdRow {
    pub fn prob(&self, yes: bool) -> f64 {
        if yes { self.p_yes } else { self.p_no }
    }
}

/// `P(node | parents)`, stored sparsely by parent configuration. A
/// configuration is a bitmask with bit `i` set when `parents[i]` is YES.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "wire::CpdWire", try_from = "wire::CpdWire")]
pub struct Cpd {
    pub node: VariableId,
    pub parents: Vec<VariableId>,
    rows: BTreeMap<u64, CpdRow>,
    fallback: (f64, f64),
}

impl Cpd {
    /// Dense CPD from `P(YES | config)` for each of the `2^|parents|`
    /// configurations. Support counts are zero.
    pub fn from_table(node: VariableId, parents: Vec<VariableId>, p_yes: &[f64]) -> Result<Self> {
        if p_yes.len() != 1usize << parents.len() {
            return Err(Error::ContractViolation(format!(
                "CPD for {node} needs {} rows, got {}",
                1usize << parents.len(),
                p_yes.len()
            )));
        }
        if let Some(p) = p_yes.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::ContractViolation(format!("probability {p} outside [0, 1] in CPD for {node}")));
        }
        let rows = p_yes
            .iter()
            .enumerate()
            .map(|(c, &p)| (c as u64, CpdRow { p_yes: p, p_no: 1.0 - p, support: 0, fallback: false }))
            .collect();
        Ok(Cpd { node, parents, rows, fallback: (0.5, 0.5) })
    }

    pub fn num_configurations(&self) -> u64 {
        1u64 << self.parents.len()
    }

    /// Parent configuration of a dataset row.
    pub fn configuration_of(&self, values: RowBits) -> u64 {
        self.parents
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &p)| acc | (u64::from(values.get(p)) << i))
    }

    pub fn row(&self, config: u64) -> CpdRow {
        self.rows.get(&config).copied().unwrap_or(CpdRow {
            p_yes: self.fallback.0,
            p_no: self.fallback.1,
            support: 0,
            fallback: true,
        })
    }

    /// Stored (observed or explicitly given) configurations.
    pub fn observed(&self) -> impl Iterator<Item = (u64, &CpdRow)> {
        self.rows.iter().map(|(&c, r)| (c, r))
    }

    /// `P(YES | config)` for every configuration, in configuration order.
    pub fn dense_p_yes(&self) -> Vec<f64> {
        (0..self.num_configurations()).map(|c| self.row(c).p_yes).collect()
    }
}

/// Counting pass for one node: per configuration, (YES count, total).
fn count_node(node: VariableId, parents: &[VariableId], ds: &Dataset) -> HashMap<u64, (u64, u64)> {
    let mut counts: HashMap<u64, (u64, u64)> = HashMap::new();
    for row in &ds.rows {
        let config = parents
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &p)| acc | (u64::from(row.values.get(p)) << i));
        let slot = counts.entry(config).or_default();
        slot.0 += u64::from(row.values.get(node));
        slot.1 += 1;
    }
    counts
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub skeleton: NetworkSkeleton,
    /// One CPD per node, in `skeleton.nodes` order.
    pub cpds: Vec<Cpd>,
    pub estimator: Estimator,
    /// Significance level used to prune the skeleton, if it was pruned.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl NetworkModel {
    /// Assemble a model; every CPD's parent list must equal the node's
    /// in-edges in the skeleton.
    pub fn new(skeleton: NetworkSkeleton, cpds: Vec<Cpd>, estimator: Estimator) -> Result<Self> {
        let mut by_node: BTreeMap<VariableId, Cpd> = BTreeMap::new();
        for c in cpds {
            let node = c.node;
            if by_node.insert(node, c).is_some() {
                return Err(Error::ContractViolation(format!("two CPDs for {node}")));
            }
        }
        let mut ordered = Vec::with_capacity(skeleton.nodes.len());
        for &v in &skeleton.nodes {
            let c = by_node.remove(&v).ok_or_else(|| Error::ContractViolation(format!("no CPD for {v}")))?;
            let mut expected = skeleton.parents(v);
            let mut got = c.parents.clone();
            expected.sort();
            got.sort();
            if expected != got {
                return Err(Error::ContractViolation(format!("CPD parents of {v} do not match the skeleton")));
            }
            ordered.push(c);
        }
        if let Some(v) = by_node.keys().next() {
            return Err(Error::UnknownVariable(v.name()));
        }
        Ok(NetworkModel { skeleton, cpds: ordered, estimator, alpha: None })
    }

    pub fn node_position(&self, v: VariableId) -> Option<usize> {
        self.skeleton.nodes.iter().position(|&n| n == v)
    }

    pub fn cpd(&self, v: VariableId) -> Option<&Cpd> {
        self.node_position(v).map(|i| &self.cpds[i])
    }

    pub fn save<W: Write>(&self, sink: W) -> Result<()> {
        serde_json::to_writer_pretty(sink, self)?;
        Ok(())
    }

    pub fn load<R: Read>(source: R) -> Result<Self> {
        let m: NetworkModel = serde_json::from_reader(source)?;
        m.skeleton.topological_order()?;
        Ok(m)
    }
}

/// Estimate one CPD per skeleton node from `ds`. Nodes are fitted in parallel.
pub fn fit(skeleton: &NetworkSkeleton, ds: &Dataset, estimator: Estimator) -> Result<NetworkModel> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Estimator::Bayes { pseudo_count } = estimator {
        Estimator::bayes(pseudo_count)?;
    }
    let fallback = estimator.estimate(0, 0);
    let cpds: Vec<Cpd> = skeleton
        .nodes
        .par_iter()
        .map(|&node| {
            let parents = skeleton.parents(node);
            let rows = count_node(node, &parents, ds)
                .into_iter()
                .map(|(config, (yes, total))| {
                    let (p_yes, p_no) = estimator.estimate(yes, total);
                    (config, CpdRow { p_yes, p_no, support: total, fallback: false })
                })
                .collect();
            Cpd { node, parents, rows, fallback }
        })
        .collect();
    Ok(NetworkModel { skeleton: skeleton.clone(), cpds, estimator, alpha: None })
}

pub fn fit_mle(skeleton: &NetworkSkeleton, ds: &Dataset) -> Result<NetworkModel> {
    fit(skeleton, ds, Estimator::Mle)
}

pub fn fit_bayes(skeleton: &NetworkSkeleton, ds: &Dataset, pseudo_count: f64) -> Result<NetworkModel> {
    fit(skeleton, ds, Estimator::bayes(pseudo_count)?)
}

mod wire {
    use super::*;

    #[derive(Serialize, Deserialize)]
    pub struct RowWire {
        /// Parent values in `parents` order, `Y`/`N` per parent.
        pub config: String,
        pub p_yes: f64,
        pub p_no: f64,
        pub support: u64,
    }

    #[derive(Serialize, Deserialize)]
    pub struct CpdWire {
        pub node: VariableId,
        pub parents: Vec<VariableId>,
        pub fallback: [f64; 2],
        pub rows: Vec<RowWire>,
    }

    impl From<Cpd> for CpdWire {
        fn from(c: Cpd) -> Self {
            let n = c.parents.len();
            CpdWire {
                node: c.node,
                fallback: [c.fallback.0, c.fallback.1],
                rows: c
                    .rows
                    .iter()
                    .map(|(&config, r)| RowWire {
                        config: (0..n).map(|i| if config >> i & 1 == 1 { 'Y' } else { 'N' }).collect(),
                        p_yes: r.p_yes,
                        p_no: r.p_no,
                        support: r.support,
                    })
                    .collect(),
                parents: c.parents,
            }
        }
    }

    impl TryFrom<CpdWire> for Cpd {
        type Error = String;
        fn try_from(w: CpdWire) -> std::result::Result<Self, String> {
            if w.parents.len() > 63 {
                return Err(format!("too many parents for {}", w.node));
            }
            let mut rows = BTreeMap::new();
            for r in w.rows {
                if r.config.len() != w.parents.len() {
                    return Err(format!("configuration `{}` does not match {} parents", r.config, w.parents.len()));
                }
                let mut config = 0u64;
                for (i, ch) in r.config.chars().enumerate() {
                    match ch {
                        'Y' => config |= 1 << i,
                        'N' => {}
                        _ => return Err(format!("bad configuration `{}`", r.config)),
                    }
                }
                if ((r.p_yes + r.p_no) - 1.0).abs() > 1e-9 {
                    return Err(format!("CPD row for {} does not sum to 1", w.node));
                }
                rows.insert(config, CpdRow { p_yes: r.p_yes, p_no: r.p_no, support: r.support, fallback: false });
            }
            Ok(Cpd { node: w.node, parents: w.parents, rows, fallback: (w.fallback[0], w.fallback[1]) })
        }
    }
}
