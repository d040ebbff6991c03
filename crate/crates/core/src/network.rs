//! Two-slice network skeleton and chi-square edge pruning.

use std::collections::{BTreeSet, HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, VariableId};
use crate::error::{Error, Result};
use crate::events::{EntityKind, EventType};
pub use crate::stats::chi2_sf_df1;

/// Result of a chi-square test of independence on a 2x2 table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub chi2: f64,
    pub p_value: f64,
    pub df: u32,
    /// A zero margin: no evidence either way, reported as chi2 = 0, p = 1.
    #[serde(default)]
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: VariableId,
    pub to: VariableId,
    /// Present once the edge has been tested.
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub test: Option<ChiSquare>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength_class: Option<u8>,
}

impl Edge {
    pub fn new(from: VariableId, to: VariableId) -> Self {
        Edge { from, to, test: None, strength_class: None }
    }

    pub fn chi2(&self) -> Option<f64> {
        self.test.map(|t| t.chi2)
    }

    pub fn p_value(&self) -> Option<f64> {
        self.test.map(|t| t.p_value)
    }
}

/// Nodes and directed edges, both kept sorted by variable index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSkeleton {
    pub nodes: Vec<VariableId>,
    pub edges: Vec<Edge>,
}

impl NetworkSkeleton {
    /// Validates that edges connect known nodes without duplicates or cycles.
    pub fn new(nodes: impl IntoIterator<Item = VariableId>, edges: Vec<Edge>) -> Result<Self> {
        let nodes: BTreeSet<VariableId> = nodes.into_iter().collect();
        let mut seen = BTreeSet::new();
        for e in &edges {
            for v in [e.from, e.to] {
                if !nodes.contains(&v) {
                    return Err(Error::UnknownVariable(v.name()));
                }
            }
            if e.from == e.to || !seen.insert((e.from, e.to)) {
                return Err(Error::ContractViolation(format!("duplicate or self edge {} -> {}", e.from, e.to)));
            }
        }
        let mut sk = NetworkSkeleton { nodes: nodes.into_iter().collect(), edges };
        sk.sort_edges();
        sk.topological_order()?;
        Ok(sk)
    }

    fn sort_edges(&mut self) {
        self.edges.sort_by_key(|e| (e.from.index(), e.to.index()));
    }

    pub fn contains_edge(&self, from: VariableId, to: VariableId) -> bool {
        self.edges.iter().any(|e| e.from == from && e.to == to)
    }

    pub fn edge(&self, from: VariableId, to: VariableId) -> Option<&Edge> {
        self.edges.iter().find(|e| e.from == from && e.to == to)
    }

    /// Parents of `v` in variable-index order.
    pub fn parents(&self, v: VariableId) -> Vec<VariableId> {
        let mut p: Vec<VariableId> = self.edges.iter().filter(|e| e.to == v).map(|e| e.from).collect();
        p.sort_by_key(|x| x.index());
        p
    }

    pub fn children(&self, v: VariableId) -> Vec<VariableId> {
        let mut c: Vec<VariableId> = self.edges.iter().filter(|e| e.from == v).map(|e| e.to).collect();
        c.sort_by_key(|x| x.index());
        c
    }

    /// Kahn's algorithm; ties broken by node order so the result is stable.
    pub fn topological_order(&self) -> Result<Vec<VariableId>> {
        let pos: HashMap<VariableId, usize> = self.nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut indeg = vec![0usize; self.nodes.len()];
        let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            indeg[pos[&e.to]] += 1;
            out_edges[pos[&e.from]].push(pos[&e.to]);
        }
        let mut ready: BTreeSet<usize> = (0..self.nodes.len()).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(i) = ready.pop_first() {
            order.push(self.nodes[i]);
            for &j in &out_edges[i] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.insert(j);
                }
            }
        }
        if order.len() != self.nodes.len() {
            return Err(Error::Cyclic);
        }
        Ok(order)
    }

    pub fn is_annotated(&self) -> bool {
        self.edges.iter().all(|e| e.test.is_some())
    }
}

/// The four subgroup relations, each realized as a full bipartite edge set:
/// T_weather -> T_traffic, T_weather' -> T_traffic', T_weather -> T_weather',
/// T_traffic -> T_traffic'.
pub fn predefined_skeleton(weather: &[EventType], traffic: &[EventType]) -> Result<NetworkSkeleton> {
    if weather.iter().any(|t| t.kind() != EntityKind::Weather) || traffic.iter().any(|t| t.kind() != EntityKind::Traffic) {
        return Err(Error::InvalidConfig("taxonomy lists mix weather and traffic types".into()));
    }
    let f = VariableId::former;
    let l = VariableId::latter;
    let mut nodes = Vec::new();
    for &t in weather.iter().chain(traffic) {
        nodes.push(f(t));
        nodes.push(l(t));
    }
    let mut edges = Vec::new();
    let mut relate = |from: &[EventType], fs: fn(EventType) -> VariableId, to: &[EventType], ts: fn(EventType) -> VariableId| {
        for &a in from {
            for &b in to {
                edges.push(Edge::new(fs(a), ts(b)));
            }
        }
    };
    relate(weather, f, traffic, f);
    relate(weather, l, traffic, l);
    relate(weather, f, weather, l);
    relate(traffic, f, traffic, l);
    NetworkSkeleton::new(nodes, edges)
}

/// The skeleton over the standard 7 + 7 taxonomy: 28 nodes, 196 edges.
pub fn standard_skeleton() -> NetworkSkeleton {
    predefined_skeleton(&EventType::WEATHER, &EventType::TRAFFIC).expect("standard taxonomy is valid")
}

/// Observed counts, indexed `[a][b]` with index 0 = YES, 1 = NO.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable2x2 {
    pub counts: [[u64; 2]; 2],
}

impl ContingencyTable2x2 {
    pub fn new(counts: [[u64; 2]; 2]) -> Self {
        ContingencyTable2x2 { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> [u64; 2] {
        [self.counts[0][0] + self.counts[0][1], self.counts[1][0] + self.counts[1][1]]
    }

    pub fn col_sums(&self) -> [u64; 2] {
        [self.counts[0][0] + self.counts[1][0], self.counts[0][1] + self.counts[1][1]]
    }
}

pub fn contingency(ds: &Dataset, a: VariableId, b: VariableId) -> Result<ContingencyTable2x2> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut counts = [[0u64; 2]; 2];
    for row in &ds.rows {
        counts[usize::from(!row.get(a))][usize::from(!row.get(b))] += 1;
    }
    Ok(ContingencyTable2x2 { counts })
}

/// Pearson chi-square test without continuity correction.
pub fn chi2_test(t: &ContingencyTable2x2) -> Result<ChiSquare> {
    let n = t.total();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let (rows, cols) = (t.row_sums(), t.col_sums());
    let n = n as f64;
    let mut chi2 = 0.0;
    let mut degenerate = false;
    for i in 0..2 {
        for j in 0..2 {
            let expected = rows[i] as f64 * cols[j] as f64 / n;
            if expected == 0.0 {
                degenerate = true;
                continue;
            }
            let d = t.counts[i][j] as f64 - expected;
            chi2 += d * d / expected;
        }
    }
    if degenerate {
        return Ok(ChiSquare { chi2: 0.0, p_value: 1.0, df: 1, degenerate });
    }
    Ok(ChiSquare { chi2, p_value: chi2_sf_df1(chi2), df: 1, degenerate })
}

/// Marginal (empty conditioning set) independence test on every edge. Edges
/// with `p > alpha` are dropped, as are degenerate tables; survivors carry
/// their statistics. The node set is unchanged.
pub fn prune(skeleton: &NetworkSkeleton, ds: &Dataset, alpha: f64) -> Result<NetworkSkeleton> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let tested: Vec<Option<Edge>> = skeleton
        .edges
        .par_iter()
        .map(|e| {
            let test = chi2_test(&contingency(ds, e.from, e.to)?)?;
            let keep = !test.degenerate && test.p_value <= alpha;
            Ok(keep.then(|| Edge { from: e.from, to: e.to, test: Some(test), strength_class: None }))
        })
        .collect::<Result<_>>()?;
    let mut out = NetworkSkeleton { nodes: skeleton.nodes.clone(), edges: tested.into_iter().flatten().collect() };
    out.sort_edges();
    Ok(out)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// One-dimensional centroid clustering of chi-square values.
///
/// Centroids start at `k` evenly spaced quantiles (minimum to maximum, the
/// median when `k = 1`) and are refined by nearest-centroid assignment until
/// stable. Labels are ranks of the non-empty clusters in ascending centroid
/// order. Returns the labels and the number of classes actually used.
pub fn cluster_1d(values: &[f64], k: usize) -> (Vec<u8>, usize) {
    if values.is_empty() || k == 0 {
        return (vec![0; values.len()], 0);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut centroids: Vec<f64> = if k == 1 {
        vec![quantile(&sorted, 0.5)]
    } else {
        (0..k).map(|i| quantile(&sorted, i as f64 / (k - 1) as f64)).collect()
    };
    let nearest = |c: &[f64], x: f64| {
        let mut best = 0;
        for (i, &ci) in c.iter().enumerate() {
            if (x - ci).abs() < (x - c[best]).abs() {
                best = i;
            }
        }
        best
    };
    let mut assign: Vec<usize> = values.iter().map(|&x| nearest(&centroids, x)).collect();
    for _ in 0..1000 {
        let mut sums = vec![(0.0, 0usize); k];
        for (&x, &a) in values.iter().zip(&assign) {
            sums[a].0 += x;
            sums[a].1 += 1;
        }
        for (c, &(s, n)) in centroids.iter_mut().zip(&sums) {
            if n > 0 {
                *c = s / n as f64;
            }
        }
        let next: Vec<usize> = values.iter().map(|&x| nearest(&centroids, x)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    let mut used: Vec<usize> = assign.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    used.sort_by(|&a, &b| centroids[a].total_cmp(&centroids[b]).then(a.cmp(&b)));
    let rank: HashMap<usize, u8> = used.iter().enumerate().map(|(r, &c)| (c, r as u8)).collect();
    (assign.iter().map(|a| rank[a]).collect(), used.len())
}

/// Label every edge with a chi-square strength class (0 = weakest). If there
/// are fewer edges than `k`, `k` is reduced to the edge count. Returns the
/// number of distinct classes assigned.
pub fn group_strengths(skeleton: &mut NetworkSkeleton, k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let values: Vec<f64> = skeleton.edges.iter().map(|e| e.chi2().ok_or(Error::NotAnnotated)).collect::<Result<_>>()?;
    let mut k = k;
    if values.len() < k {
        log::warn!("only {} edges for {} strength classes; reducing k", values.len(), k);
        k = values.len();
    }
    let (labels, used) = cluster_1d(&values, k);
    for (e, l) in skeleton.edges.iter_mut().zip(labels) {
        e.strength_class = Some(l);
    }
    Ok(used)
}

/// Nodes reachable backwards from `start` (excluding `start` itself).
pub(crate) fn ancestors(skeleton: &NetworkSkeleton, start: VariableId) -> BTreeSet<VariableId> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for p in skeleton.parents(v) {
            if seen.insert(p) {
                queue.push_back(p);
            }
        }
    }
    seen
}
