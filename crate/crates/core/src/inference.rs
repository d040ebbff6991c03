//! Exact inference on a [`NetworkModel`] by variable elimination.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{RowBits, VariableId};
use crate::error::{Error, Result};
use crate::learning::NetworkModel;

/// Observed values, YES = `true`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence(pub BTreeMap<VariableId, bool>);

impl Evidence {
    pub fn new() -> Self {
        Evidence(BTreeMap::new())
    }

    pub fn with(mut self, v: VariableId, yes: bool) -> Self {
        self.0.insert(v, yes);
        self
    }

    pub fn get(&self, v: VariableId) -> Option<bool> {
        self.0.get(&v).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Evidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, &yes) in &self.0 {
            if !first {
                f.write_str(";")?;
            }
            first = false;
            write!(f, "{}={}", v, if yes { "YES" } else { "NO" })?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorResult {
    pub target: VariableId,
    pub p_yes: f64,
    pub p_no: f64,
    pub evidence: Evidence,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: bool,
    pub p_yes: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub factor: VariableId,
    pub target: VariableId,
    pub p_given_yes: f64,
    pub p_given_no: f64,
    pub delta: f64,
}

/// Which test-row variables are observed when predicting a target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvidenceScope {
    /// Every model node except the target.
    #[default]
    All,
    /// Parents and children of the target only.
    Neighbors,
}

/// Table over binary variables. Bit `k` of a table index is the value of
/// `vars[k]` (1 = YES); `vars` is sorted ascending.
#[derive(Clone, Debug)]
struct Factor {
    vars: Vec<usize>,
    table: Vec<f64>,
}

/// Offsets that let a running index into a sub-table follow a counter over a
/// super-scope: when the counter's lowest set bit is `k`, add `delta[k]`.
fn carry_deltas(scope: &[usize], sub: &[usize]) -> Vec<isize> {
    let strides: Vec<isize> = scope
        .iter()
        .map(|v| sub.iter().position(|s| s == v).map_or(0, |p| 1isize << p))
        .collect();
    let mut below = 0isize;
    strides
        .iter()
        .map(|&s| {
            let d = s - below;
            below += s;
            d
        })
        .collect()
}

impl Factor {
    fn scalar(x: f64) -> Self {
        Factor { vars: Vec::new(), table: vec![x] }
    }

    fn product(&self, other: &Factor) -> Factor {
        let vars: Vec<usize> = self.vars.iter().chain(&other.vars).copied().collect::<BTreeSet<_>>().into_iter().collect();
        let da = carry_deltas(&vars, &self.vars);
        let db = carry_deltas(&vars, &other.vars);
        let size = 1usize << vars.len();
        let mut table = Vec::with_capacity(size);
        let (mut ia, mut ib) = (0isize, 0isize);
        for idx in 0..size {
            if idx > 0 {
                let k = idx.trailing_zeros() as usize;
                ia += da[k];
                ib += db[k];
            }
            table.push(self.table[ia as usize] * other.table[ib as usize]);
        }
        Factor { vars, table }
    }

    fn sum_out(&self, var: usize) -> Factor {
        let Some(p) = self.vars.iter().position(|&v| v == var) else { return self.clone() };
        let low = (1usize << p) - 1;
        let table = (0..self.table.len() / 2)
            .map(|j| {
                let i0 = (j & low) | ((j & !low) << 1);
                self.table[i0] + self.table[i0 | 1 << p]
            })
            .collect();
        let mut vars = self.vars.clone();
        vars.remove(p);
        Factor { vars, table }
    }

    fn reduce(&self, var: usize, yes: bool) -> Factor {
        let Some(p) = self.vars.iter().position(|&v| v == var) else { return self.clone() };
        let low = (1usize << p) - 1;
        let bit = usize::from(yes) << p;
        let table = (0..self.table.len() / 2)
            .map(|j| self.table[(j & low) | ((j & !low) << 1) | bit])
            .collect();
        let mut vars = self.vars.clone();
        vars.remove(p);
        Factor { vars, table }
    }
}

/// CPD of node `i` as a factor over `{node} ∪ parents`.
fn cpd_factor(model: &NetworkModel, i: usize) -> Result<Factor> {
    let cpd = &model.cpds[i];
    let parent_pos: Vec<usize> = cpd
        .parents
        .iter()
        .map(|&p| model.node_position(p).ok_or_else(|| Error::UnknownVariable(p.name())))
        .collect::<Result<_>>()?;
    let vars: Vec<usize> = std::iter::once(i).chain(parent_pos.iter().copied()).collect::<BTreeSet<_>>().into_iter().collect();
    let node_bit = vars.iter().position(|&v| v == i).expect("node in scope");
    let parent_bits: Vec<usize> = parent_pos.iter().map(|p| vars.iter().position(|v| v == p).expect("parent in scope")).collect();
    let table = (0..1usize << vars.len())
        .map(|idx| {
            let config = parent_bits
                .iter()
                .enumerate()
                .fold(0u64, |acc, (k, &b)| acc | (((idx >> b) & 1) as u64) << k);
            cpd.row(config).prob(idx >> node_bit & 1 == 1)
        })
        .collect();
    Ok(Factor { vars, table })
}

fn position(model: &NetworkModel, v: VariableId) -> Result<usize> {
    model.node_position(v).ok_or_else(|| Error::UnknownVariable(v.name()))
}

/// Product of the CPD entries selected by a complete assignment.
pub fn joint_probability(model: &NetworkModel, assignment: &BTreeMap<VariableId, bool>) -> Result<f64> {
    if let Some(v) = assignment.keys().find(|v| model.node_position(**v).is_none()) {
        return Err(Error::UnknownVariable(v.name()));
    }
    let mut values = RowBits::default();
    for &node in &model.skeleton.nodes {
        let val = assignment
            .get(&node)
            .ok_or_else(|| Error::ContractViolation(format!("assignment does not cover {node}")))?;
        values.set(node, *val);
    }
    Ok(model
        .cpds
        .iter()
        .map(|c| c.row(c.configuration_of(values)).prob(values.get(c.node)))
        .product())
}

/// Elimination order by minimum degree in the interaction graph of `factors`.
fn min_degree_order(factors: &[Factor], eliminate: &BTreeSet<usize>) -> Vec<usize> {
    let mut adj: BTreeMap<usize, BTreeSet<usize>> = eliminate.iter().map(|&v| (v, BTreeSet::new())).collect();
    for f in factors {
        for &a in &f.vars {
            for &b in &f.vars {
                if a != b {
                    adj.entry(a).or_default().insert(b);
                }
            }
        }
    }
    let mut remaining = eliminate.clone();
    let mut order = Vec::with_capacity(remaining.len());
    while let Some(&v) = remaining.iter().min_by_key(|&&v| (adj.get(&v).map_or(0, BTreeSet::len), v)) {
        remaining.remove(&v);
        order.push(v);
        let nbrs = adj.remove(&v).unwrap_or_default();
        for &a in &nbrs {
            if let Some(s) = adj.get_mut(&a) {
                s.remove(&v);
                s.extend(nbrs.iter().copied().filter(|&b| b != a));
            }
        }
    }
    order
}

/// Unnormalized distribution of `target` jointly with the evidence.
fn eliminate(model: &NetworkModel, target: usize, evidence: &[(usize, bool)]) -> Result<[f64; 2]> {
    // Only ancestors of the query and evidence matter; other nodes sum to one.
    let mut relevant: BTreeSet<usize> = BTreeSet::new();
    let mut stack: Vec<usize> = std::iter::once(target).chain(evidence.iter().map(|e| e.0)).collect();
    while let Some(i) = stack.pop() {
        if relevant.insert(i) {
            for p in &model.cpds[i].parents {
                stack.push(position(model, *p)?);
            }
        }
    }

    let mut factors: Vec<Factor> = Vec::with_capacity(relevant.len());
    for &i in &relevant {
        let mut f = cpd_factor(model, i)?;
        for &(v, val) in evidence {
            f = f.reduce(v, val);
        }
        factors.push(f);
    }

    let observed: BTreeSet<usize> = evidence.iter().map(|e| e.0).collect();
    let hidden: BTreeSet<usize> = relevant.iter().copied().filter(|v| *v != target && !observed.contains(v)).collect();
    for v in min_degree_order(&factors, &hidden) {
        let (with, without): (Vec<Factor>, Vec<Factor>) = factors.into_iter().partition(|f| f.vars.contains(&v));
        factors = without;
        if let Some(prod) = with.into_iter().reduce(|a, b| a.product(&b)) {
            factors.push(prod.sum_out(v));
        }
    }

    let result = factors.iter().fold(Factor::scalar(1.0), |acc, f| acc.product(f));
    debug_assert_eq!(result.vars, vec![target]);
    Ok([result.table[1], result.table[0]])
}

/// `P(target | evidence)`.
pub fn posterior(model: &NetworkModel, target: VariableId, evidence: &Evidence) -> Result<PosteriorResult> {
    let t = position(model, target)?;
    if evidence.0.contains_key(&target) {
        return Err(Error::ContractViolation(format!("target {target} is also observed")));
    }
    let ev: Vec<(usize, bool)> = evidence
        .0
        .iter()
        .map(|(&v, &val)| position(model, v).map(|i| (i, val)))
        .collect::<Result<_>>()?;
    let [yes, no] = eliminate(model, t, &ev)?;
    let z = yes + no;
    if !(z > 0.0) {
        return Err(Error::ImpossibleEvidence);
    }
    Ok(PosteriorResult { target, p_yes: yes / z, p_no: no / z, evidence: evidence.clone() })
}

/// YES when `p_yes >= threshold`.
pub fn predict(model: &NetworkModel, evidence: &Evidence, target: VariableId, threshold: f64) -> Result<Prediction> {
    let p = posterior(model, target, evidence)?;
    Ok(Prediction { label: p.p_yes >= threshold, p_yes: p.p_yes })
}

/// How the target's probability shifts when a single factor is observed
/// YES versus NO, every other variable marginalized.
pub fn influence(model: &NetworkModel, factor: VariableId, target: VariableId) -> Result<InfluenceReport> {
    if factor == target {
        return Err(Error::ContractViolation(format!("factor and target are both {target}")));
    }
    let given = |yes| posterior(model, target, &Evidence::new().with(factor, yes)).map(|p| p.p_yes);
    let (p_given_yes, p_given_no) = (given(true)?, given(false)?);
    Ok(InfluenceReport { factor, target, p_given_yes, p_given_no, delta: p_given_yes - p_given_no })
}

/// Evidence drawn from a dataset row for predicting `target`.
pub fn evidence_from_row(model: &NetworkModel, values: RowBits, target: VariableId, scope: EvidenceScope) -> Evidence {
    let vars: Vec<VariableId> = match scope {
        EvidenceScope::All => model.skeleton.nodes.iter().copied().filter(|&v| v != target).collect(),
        EvidenceScope::Neighbors => {
            let mut n = model.skeleton.parents(target);
            n.extend(model.skeleton.children(target));
            n
        }
    };
    Evidence(vars.into_iter().map(|v| (v, values.get(v))).collect())
}

/// Predict `target` for many rows in parallel; output is in input order.
pub fn predict_rows(
    model: &NetworkModel,
    rows: &[RowBits],
    target: VariableId,
    threshold: f64,
    scope: EvidenceScope,
) -> Result<Vec<Prediction>> {
    rows.par_iter()
        .map(|&r| predict(model, &evidence_from_row(model, r, target, scope), target, threshold))
        .collect()
}

/// Like [`predict_rows`], but a row whose evidence has probability zero is
/// retried with the target's neighbors only, then with no evidence at all.
/// Returns the predictions and the number of rows that needed a retry.
pub fn predict_rows_lenient(
    model: &NetworkModel,
    rows: &[RowBits],
    target: VariableId,
    threshold: f64,
    scope: EvidenceScope,
) -> Result<(Vec<Prediction>, usize)> {
    let out: Vec<(Prediction, bool)> = rows
        .par_iter()
        .map(|&r| {
            let first = predict(model, &evidence_from_row(model, r, target, scope), target, threshold);
            match first {
                Err(Error::ImpossibleEvidence) => {
                    let narrowed = match scope {
                        EvidenceScope::All => {
                            predict(model, &evidence_from_row(model, r, target, EvidenceScope::Neighbors), target, threshold)
                        }
                        EvidenceScope::Neighbors => Err(Error::ImpossibleEvidence),
                    };
                    match narrowed {
                        Err(Error::ImpossibleEvidence) => predict(model, &Evidence::new(), target, threshold),
                        other => other,
                    }
                    .map(|p| (p, true))
                }
                other => other.map(|p| (p, false)),
            }
        })
        .collect::<Result<_>>()?;
    let retried = out.iter().filter(|(_, r)| *r).count();
    Ok((out.into_iter().map(|(p, _)| p).collect(), retried))
}

/// One exported query result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub target: VariableId,
    pub evidence: Evidence,
    pub p_yes: f64,
    pub label: bool,
}

pub fn write_query_records<W: Write>(sink: W, records: &[QueryRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["target", "evidence", "p_yes", "label"])?;
    for r in records {
        w.write_record([
            r.target.name(),
            r.evidence.to_string(),
            r.p_yes.to_string(),
            if r.label { "YES" } else { "NO" }.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
