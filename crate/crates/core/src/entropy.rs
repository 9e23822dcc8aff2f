//! Exact entropy laboratory on tiny systems.
//!
//! A system is a small graph with a finite-support law on every edge. All
//! weight configurations are enumerated once into a [`ConfigTable`]; every
//! expectation below is then an exact (compensated) sum over that table, so
//! the inequalities can be certified to rounding error rather than sampled.
//!
//! Conditional expectations over an edge subset `S` use the mixed-radix
//! layout of configuration ids: a configuration splits into a *base* (all
//! digits on `S` zeroed) plus an offset enumerating the `S` digits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{graph_geodesics, Graph, TieRule};
use crate::lattice::{local_box, Edge, Site, Window};
use crate::stats::{ksum, mean_estimate, wilson_interval, KahanSum, Z95};
use crate::weights::Distribution;

/// Absolute slack allowed when certifying inequalities on exact tables.
pub const EXACT_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_CAP: u64 = 1 << 20;

pub const DEFAULT_LAMBDAS: [f64; 4] = [-1.0, -0.5, -0.1, -0.01];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntropyError {
    #[error("configuration count {count} exceeds the cap {cap}")]
    Cap { count: u128, cap: u64 },
    #[error("law `{0}` does not have finite support")]
    NotDiscrete(String),
    #[error("entropy needs nonnegative values, got {0}")]
    Negative(f64),
    #[error("lambda must be {0}")]
    Lambda(&'static str),
    #[error("invalid system: {0}")]
    Invalid(String),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
}

#[inline]
fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `Ent X = E[X log X] - E[X] log E[X]`, with `0 log 0 = 0`.
pub fn entropy(values: &[f64], probs: &[f64]) -> Result<f64, EntropyError> {
    if let Some(v) = values.iter().find(|v| **v < 0.0) {
        return Err(EntropyError::Negative(*v));
    }
    let mut support = values.iter().zip(probs).filter(|(_, p)| **p > 0.0).map(|(x, _)| *x);
    if let Some(first) = support.next() {
        if support.all(|x| x == first) {
            return Ok(0.0);
        }
    }
    let ex = ksum(values.iter().zip(probs).map(|(x, p)| p * x));
    let exlogx = ksum(values.iter().zip(probs).map(|(x, p)| p * xlogx(*x)));
    Ok((exlogx - xlogx(ex)).max(0.0))
}

/// A tiny graph with finite per-edge laws and two terminals.
#[derive(Debug, Clone)]
pub struct ExactSystem {
    graph: Graph,
    sites: Vec<Site>,
    edges: Vec<Edge>,
    laws: Vec<Vec<(f64, f64)>>,
    source: usize,
    target: usize,
    /// One box per system site, restricted to system edges, as edge ids.
    boxes: Vec<Vec<usize>>,
    rule: TieRule,
    pub lambdas: Vec<f64>,
    pub cap: u64,
}

impl ExactSystem {
    pub fn from_edges(edges: Vec<Edge>, law: &Distribution, source: &Site, target: &Site) -> Result<Self, EntropyError> {
        let atoms: Vec<(f64, f64)> = law
            .atoms()
            .ok_or_else(|| EntropyError::NotDiscrete(law.to_string()))?
            .into_iter()
            .filter(|(_, p)| *p > 0.0)
            .collect();
        let rule = if law.is_integer_valued() {
            TieRule::Exact
        } else {
            TieRule::CONTINUOUS
        };
        let laws = vec![atoms; edges.len()];
        Self::with_laws(edges, laws, source, target, rule)
    }

    fn with_laws(
        edges: Vec<Edge>,
        laws: Vec<Vec<(f64, f64)>>,
        source: &Site,
        target: &Site,
        rule: TieRule,
    ) -> Result<Self, EntropyError> {
        if edges.is_empty() {
            return Err(EntropyError::Invalid("no edges".into()));
        }
        if edges.len() > 64 {
            return Err(EntropyError::Invalid("at most 64 edges".into()));
        }
        let mut sites: Vec<Site> = edges.iter().flat_map(|e| [e.u().clone(), e.v().clone()]).collect();
        sites.sort();
        sites.dedup();
        let index = |s: &Site| sites.binary_search(s).ok();
        let pairs: Vec<(usize, usize)> = edges
            .iter()
            .map(|e| (index(e.u()).unwrap(), index(e.v()).unwrap()))
            .collect();
        let src = index(source).ok_or_else(|| EntropyError::Invalid(format!("source {source} not in system")))?;
        let tgt = index(target).ok_or_else(|| EntropyError::Invalid(format!("target {target} not in system")))?;
        let boxes = sites
            .iter()
            .map(|a| {
                let b = local_box(a).expect("dimension >= 2");
                edges
                    .iter()
                    .enumerate()
                    .filter(|(_, f)| b.contains_edge(f))
                    .map(|(j, _)| j)
                    .collect::<Vec<usize>>()
            })
            .filter(|b| !b.is_empty())
            .collect();
        Ok(ExactSystem {
            graph: Graph::new(sites.len(), pairs),
            sites,
            edges,
            laws,
            source: src,
            target: tgt,
            boxes,
            rule,
            lambdas: DEFAULT_LAMBDAS.to_vec(),
            cap: DEFAULT_CAP,
        })
    }

    /// All edges of a lattice window.
    pub fn window(window: &Window, law: &Distribution, source: &Site, target: &Site) -> Result<Self, EntropyError> {
        Self::from_edges(window.edges(), law, source, target)
    }

    /// The unit square `{0,1}^2` with terminals at opposite corners.
    pub fn square(law: &Distribution) -> Result<Self, EntropyError> {
        let s = |c: [i64; 2]| Site::new(c.to_vec()).unwrap();
        let edges = vec![
            Edge::new(s([0, 0]), s([1, 0])).unwrap(),
            Edge::new(s([0, 0]), s([0, 1])).unwrap(),
            Edge::new(s([1, 0]), s([1, 1])).unwrap(),
            Edge::new(s([0, 1]), s([1, 1])).unwrap(),
        ];
        Self::from_edges(edges, law, &s([0, 0]), &s([1, 1]))
    }

    pub fn single_edge(law: &Distribution) -> Result<Self, EntropyError> {
        let o = Site::origin(2);
        let x = Site::axis(2, 0, 1);
        Self::from_edges(vec![Edge::new(o.clone(), x.clone()).unwrap()], law, &o, &x)
    }

    /// All edges of the `k × k` site grid `{0..k-1}^2`, terminals at opposite corners.
    pub fn grid(k: usize, law: &Distribution) -> Result<Self, EntropyError> {
        if k < 2 {
            return Err(EntropyError::Invalid("grid needs k >= 2".into()));
        }
        let k = k as i64;
        let mut edges = Vec::new();
        for y in 0..k {
            for x in 0..k {
                let s = Site::new(vec![x, y]).unwrap();
                if x + 1 < k {
                    edges.push(Edge::from_lower(s.clone(), 0));
                }
                if y + 1 < k {
                    edges.push(Edge::from_lower(s, 1));
                }
            }
        }
        Self::from_edges(edges, law, &Site::origin(2), &Site::new(vec![k - 1, k - 1]).unwrap())
    }

    /// A straight path of `len` edges along the first axis.
    pub fn path(len: usize, law: &Distribution) -> Result<Self, EntropyError> {
        let edges = (0..len as i64).map(|i| Edge::from_lower(Site::axis(2, 0, i), 0)).collect();
        Self::from_edges(edges, law, &Site::origin(2), &Site::axis(2, 0, len as i64))
    }

    pub fn with_lambdas(mut self, lambdas: Vec<f64>) -> Self {
        self.lambdas = lambdas;
        self
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.cap = cap;
        self
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn boxes(&self) -> &[Vec<usize>] {
        &self.boxes
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn target(&self) -> usize {
        self.target
    }

    /// `|x - 0|_1` between the terminals.
    pub fn terminal_distance(&self) -> i64 {
        self.sites[self.source].l1_dist(&self.sites[self.target])
    }

    pub fn config_count(&self) -> u128 {
        self.laws.iter().map(|l| l.len() as u128).product()
    }

    fn radices(&self) -> Vec<usize> {
        self.laws.iter().map(|l| l.len()).collect()
    }

    fn weights_for(&self, strides: &[usize], id: usize) -> Vec<f64> {
        self.laws
            .iter()
            .zip(strides)
            .map(|(law, st)| law[(id / st) % law.len()].0)
            .collect()
    }
}

/// Every configuration of an [`ExactSystem`] with its probability, passage
/// time and pivotal edges.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigTable {
    pub radices: Vec<usize>,
    pub strides: Vec<usize>,
    pub prob: Vec<f64>,
    pub passage_time: Vec<f64>,
    /// Bit `e` set iff edge `e` is pivotal in that configuration.
    pub pivotal_mask: Vec<u64>,
    /// Per-edge atom masses, copied from the system.
    pub edge_probs: Vec<Vec<f64>>,
}

impl ConfigTable {
    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn pivotal_count(&self, c: usize) -> u32 {
        self.pivotal_mask[c].count_ones()
    }

    pub fn digit(&self, c: usize, e: usize) -> usize {
        (c / self.strides[e]) % self.radices[e]
    }

    pub fn total_probability(&self) -> f64 {
        ksum(self.prob.iter().copied())
    }

    pub fn expectation<F: Fn(usize) -> f64 + Sync>(&self, f: F) -> f64 {
        ksum((0..self.len()).map(|c| self.prob[c] * f(c)))
    }

    /// Offsets and masses of every assignment of the digits in `subset`.
    fn subset_offsets(&self, subset: &[usize]) -> Vec<(usize, f64)> {
        let mut out = vec![(0usize, 1.0f64)];
        for &e in subset {
            let mut next = Vec::with_capacity(out.len() * self.radices[e]);
            for &(off, p) in &out {
                for (k, q) in self.edge_probs[e].iter().enumerate() {
                    next.push((off + k * self.strides[e], p * q));
                }
            }
            out = next;
        }
        out
    }

    /// Configurations whose digits on `subset` are all zero.
    fn bases<'a>(&'a self, subset: &'a [usize]) -> impl Iterator<Item = usize> + 'a {
        (0..self.len()).filter(move |&c| subset.iter().all(|&e| self.digit(c, e) == 0))
    }

    /// Draw configuration ids according to their probabilities.
    pub fn sample_rows<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        let mut cdf = Vec::with_capacity(self.len());
        let mut acc = KahanSum::new();
        for p in &self.prob {
            acc.add(*p);
            cdf.push(acc.value());
        }
        let total = acc.value();
        (0..n)
            .map(|_| {
                let u = rng.random::<f64>() * total;
                cdf.partition_point(|&x| x <= u).min(self.len() - 1)
            })
            .collect()
    }
}

pub fn enumerate(system: &ExactSystem) -> Result<ConfigTable, EntropyError> {
    let count = system.config_count();
    if count > system.cap as u128 {
        return Err(EntropyError::Cap {
            count,
            cap: system.cap,
        });
    }
    let n = count as usize;
    let radices = system.radices();
    let mut strides = Vec::with_capacity(radices.len());
    let mut acc = 1usize;
    for r in &radices {
        strides.push(acc);
        acc *= r;
    }
    let rows: Vec<(f64, f64, u64)> = (0..n)
        .into_par_iter()
        .map(|c| {
            let w = system.weights_for(&strides, c);
            let p: f64 = system
                .laws
                .iter()
                .zip(&strides)
                .map(|(law, st)| law[(c / st) % law.len()].1)
                .product();
            let gs = graph_geodesics(&system.graph, &w, system.source, system.target, system.rule);
            let mask = gs.pivotal_edges().iter().fold(0u64, |m, &e| m | (1u64 << e));
            (p, gs.passage_time, mask)
        })
        .collect();
    Ok(ConfigTable {
        radices,
        strides,
        prob: rows.iter().map(|r| r.0).collect(),
        passage_time: rows.iter().map(|r| r.1).collect(),
        pivotal_mask: rows.iter().map(|r| r.2).collect(),
        edge_probs: system.laws.iter().map(|l| l.iter().map(|a| a.1).collect()).collect(),
    })
}

/// `E[Ent_S X]`: the expected entropy of `X` as a function of the edges in
/// `subset` only.
pub fn expected_subset_entropy(table: &ConfigTable, x: &[f64], subset: &[usize]) -> f64 {
    let offsets = table.subset_offsets(subset);
    let p_zero = offsets[0].1;
    let mut total = KahanSum::new();
    for base in table.bases(subset) {
        let p_rest = table.prob[base] / p_zero;
        let mut mean = KahanSum::new();
        let mut flog = KahanSum::new();
        for &(off, p) in &offsets {
            let v = x[base + off];
            mean.add(p * v);
            flog.add(p * xlogx(v));
        }
        total.add(p_rest * (flog.value() - xlogx(mean.value())));
    }
    total.value().max(0.0)
}

fn exp_lambda_t(table: &ConfigTable, lambda: f64) -> Vec<f64> {
    table.passage_time.iter().map(|t| (lambda * t).exp()).collect()
}

fn require_nonpositive(lambda: f64) -> Result<(), EntropyError> {
    if lambda <= 0.0 {
        Ok(())
    } else {
        Err(EntropyError::Lambda("<= 0"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorizationReport {
    pub lambda: f64,
    pub ent: f64,
    pub edge_sum: f64,
    pub box_sum: f64,
    pub pass: bool,
}

impl TensorizationReport {
    pub fn slack(&self) -> f64 {
        (self.edge_sum - self.ent).min(self.box_sum - self.edge_sum)
    }
}

/// `Ent e^{λT} <= Σ_e E Ent_e e^{λT} <= Σ_i E Ent_{S_i} e^{λT}`.
pub fn tensorization_check(system: &ExactSystem, table: &ConfigTable, lambda: f64) -> Result<TensorizationReport, EntropyError> {
    require_nonpositive(lambda)?;
    let x = exp_lambda_t(table, lambda);
    let ent = entropy(&x, &table.prob)?;
    let edge_sum = ksum((0..system.edges.len()).map(|e| expected_subset_entropy(table, &x, &[e])));
    let box_sum = ksum(system.boxes.iter().map(|b| expected_subset_entropy(table, &x, b)));
    Ok(TensorizationReport {
        lambda,
        ent,
        edge_sum,
        box_sum,
        pass: ent <= edge_sum + EXACT_TOLERANCE && edge_sum <= box_sum + EXACT_TOLERANCE,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlmReport {
    pub lambda: f64,
    pub box_index: usize,
    /// `E Ent_{S_i} e^{λT}`.
    pub lhs: f64,
    /// `λ² E E'_{S_i}[e^{λT} (T_i - T)_+^2]`.
    pub rhs: f64,
    /// Smallest conditional slack over all outside configurations.
    pub min_pointwise_slack: f64,
    pub pass: bool,
}

impl BlmReport {
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// The resampling entropy bound for one box, evaluated exactly. For each
/// fixed outside configuration the inner double average over the box
/// weights and their independent copies is computed on the distinct values
/// of `T`.
pub fn blm_resampling_check(system: &ExactSystem, table: &ConfigTable, lambda: f64, box_index: usize) -> Result<BlmReport, EntropyError> {
    require_nonpositive(lambda)?;
    let subset = system
        .boxes
        .get(box_index)
        .ok_or_else(|| EntropyError::Invalid(format!("no box {box_index}")))?;
    let offsets = table.subset_offsets(subset);
    let p_zero = offsets[0].1;
    let mut lhs = KahanSum::new();
    let mut rhs = KahanSum::new();
    let mut min_slack = f64::INFINITY;
    let mut vals: Vec<(f64, f64)> = Vec::with_capacity(offsets.len());
    for base in table.bases(subset) {
        let p_rest = table.prob[base] / p_zero;
        vals.clear();
        vals.extend(offsets.iter().map(|&(off, p)| (table.passage_time[base + off], p)));
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut distinct: Vec<(f64, f64)> = Vec::new();
        for &(t, p) in &vals {
            match distinct.last_mut() {
                Some(last) if last.0 == t => last.1 += p,
                _ => distinct.push((t, p)),
            }
        }
        let mut mean = KahanSum::new();
        let mut flog = KahanSum::new();
        let mut r = KahanSum::new();
        for (j, &(t, q)) in distinct.iter().enumerate() {
            let x = (lambda * t).exp();
            mean.add(q * x);
            flog.add(q * xlogx(x));
            let inner = ksum(distinct[j + 1..].iter().map(|&(t2, q2)| q2 * (t2 - t) * (t2 - t)));
            r.add(q * x * inner);
        }
        let l_b = (flog.value() - xlogx(mean.value())).max(0.0);
        let r_b = lambda * lambda * r.value();
        min_slack = min_slack.min(r_b - l_b);
        lhs.add(p_rest * l_b);
        rhs.add(p_rest * r_b);
    }
    let (lhs, rhs) = (lhs.value(), rhs.value());
    Ok(BlmReport {
        lambda,
        box_index,
        lhs,
        rhs,
        min_pointwise_slack: min_slack,
        pass: lhs <= rhs + EXACT_TOLERANCE && min_slack >= -EXACT_TOLERANCE,
    })
}

/// Right side of the resampling bound by literal enumeration of every
/// (configuration, independent box copy) pair.
pub fn blm_rhs_doubled(system: &ExactSystem, table: &ConfigTable, lambda: f64, box_index: usize) -> Result<f64, EntropyError> {
    let subset = &system.boxes[box_index];
    let offsets = table.subset_offsets(subset);
    let pairs = table.len() as u128 * offsets.len() as u128;
    if pairs > system.cap as u128 {
        return Err(EntropyError::Cap {
            count: pairs,
            cap: system.cap,
        });
    }
    let mut total = KahanSum::new();
    for c in 0..table.len() {
        let base = subset.iter().fold(c, |acc, &e| acc - table.digit(c, e) * table.strides[e]);
        let t = table.passage_time[c];
        let x = (lambda * t).exp();
        for &(off, p) in &offsets {
            let d = (table.passage_time[base + off] - t).max(0.0);
            total.add(table.prob[c] * p * x * d * d);
        }
    }
    Ok(lambda * lambda * total.value())
}

/// `Σ_{{u,v} ∈ S_i} T_i(u, v)` for every assignment of the box weights, in
/// the order of the box's digit offsets.
fn restricted_pair_sums(system: &ExactSystem, table: &ConfigTable, box_index: usize) -> Vec<(f64, f64)> {
    let subset = &system.boxes[box_index];
    let mut verts: Vec<usize> = subset
        .iter()
        .flat_map(|&e| {
            let (u, v) = system.graph.edges()[e];
            [u, v]
        })
        .collect();
    verts.sort_unstable();
    verts.dedup();
    let local = |v: usize| verts.binary_search(&v).unwrap();
    let k = verts.len();
    table
        .subset_offsets(subset)
        .into_iter()
        .map(|(off, p)| {
            // weights of the box edges in this assignment
            let mut d = vec![f64::INFINITY; k * k];
            for i in 0..k {
                d[i * k + i] = 0.0;
            }
            for &e in subset {
                let (u, v) = system.graph.edges()[e];
                let w = system.laws[e][(off / table.strides[e]) % table.radices[e]].0;
                let (a, b) = (local(u), local(v));
                if w < d[a * k + b] {
                    d[a * k + b] = w;
                    d[b * k + a] = w;
                }
            }
            for m in 0..k {
                for i in 0..k {
                    for j in 0..k {
                        let via = d[i * k + m] + d[m * k + j];
                        if via < d[i * k + j] {
                            d[i * k + j] = via;
                        }
                    }
                }
            }
            let s = ksum(subset.iter().map(|&e| {
                let (u, v) = system.graph.edges()[e];
                d[local(u) * k + local(v)]
            }));
            (s, p)
        })
        .collect()
}

/// Pathwise resampling facts over every (configuration, box copy) pair.
///
/// If some geodesic avoids the box, resampling the box cannot increase `T`;
/// the increase is always at most the sum of box-restricted times. The
/// weaker hypothesis "no pivotal edge in the box" does not suffice: two
/// edge-disjoint geodesics through the same box leave it free of pivotal
/// edges while every geodesic still uses it. Violations under that
/// hypothesis are counted in `pivotal_hypothesis_violations` but do not fail
/// the check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwiseReport {
    pub box_index: usize,
    pub pairs: u64,
    /// Pairs where a geodesic avoids the box but `T_i > T`.
    pub avoidance_violations: u64,
    /// Pairs where no pivotal edge lies in the box but `T_i > T`.
    pub pivotal_hypothesis_violations: u64,
    /// Pairs with `(T_i - T)_+` above the detour sum.
    pub detour_violations: u64,
    pub max_increase: f64,
}

impl PathwiseReport {
    pub fn pass(&self) -> bool {
        self.avoidance_violations == 0 && self.detour_violations == 0
    }
}

pub fn resampling_pathwise_check(system: &ExactSystem, table: &ConfigTable, box_index: usize) -> Result<PathwiseReport, EntropyError> {
    let subset = &system.boxes[box_index];
    let offsets = table.subset_offsets(subset);
    let pairs = table.len() as u128 * offsets.len() as u128;
    if pairs > system.cap as u128 {
        return Err(EntropyError::Cap {
            count: pairs,
            cap: system.cap,
        });
    }
    let sums = restricted_pair_sums(system, table, box_index);
    let box_mask = subset.iter().fold(0u64, |m, &e| m | (1 << e));
    // a geodesic avoids the box iff T is unchanged with the box removed
    let avoids: Vec<bool> = (0..table.len())
        .into_par_iter()
        .map(|c| {
            let mut w = system.weights_for(&table.strides, c);
            for &e in subset {
                w[e] = f64::INFINITY;
            }
            let t = table.passage_time[c];
            let (dist, _) = system.graph.dijkstra(&w, &[system.source]);
            dist[system.target] <= t + system.rule.tolerance(t)
        })
        .collect();
    let mut report = PathwiseReport {
        box_index,
        pairs: pairs as u64,
        avoidance_violations: 0,
        pivotal_hypothesis_violations: 0,
        detour_violations: 0,
        max_increase: 0.0,
    };
    for c in 0..table.len() {
        let base = subset.iter().fold(c, |acc, &e| acc - table.digit(c, e) * table.strides[e]);
        let t = table.passage_time[c];
        let untouched = table.pivotal_mask[c] & box_mask == 0;
        for (k, &(off, _)) in offsets.iter().enumerate() {
            let ti = table.passage_time[base + off];
            let inc = (ti - t).max(0.0);
            report.max_increase = report.max_increase.max(inc);
            if inc > EXACT_TOLERANCE {
                report.avoidance_violations += u64::from(avoids[c]);
                report.pivotal_hypothesis_violations += u64::from(untouched);
            }
            if inc > sums[k].0 + EXACT_TOLERANCE {
                report.detour_violations += 1;
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalReport {
    /// `E[X W]`.
    pub lhs: f64,
    /// `Ent X + E X log E e^W`.
    pub rhs: f64,
    pub holds: bool,
    /// `|E[X Z] - Ent X|` for `Z = log(X / E X)`; `None` if `X` has zeros.
    pub witness_gap: Option<f64>,
    /// `E e^Z - 1` for the same witness.
    pub witness_norm_gap: Option<f64>,
}

pub fn variational_check(probs: &[f64], x: &[f64], w: &[f64]) -> Result<VariationalReport, EntropyError> {
    let ent = entropy(x, probs)?;
    let ex = ksum(x.iter().zip(probs).map(|(a, p)| a * p));
    let lhs = ksum((0..x.len()).map(|i| probs[i] * x[i] * w[i]));
    let eew = ksum(w.iter().zip(probs).map(|(a, p)| p * a.exp()));
    let rhs = ent + ex * eew.ln();
    let (witness_gap, witness_norm_gap) = if ex > 0.0 && x.iter().all(|v| *v > 0.0) {
        let z: Vec<f64> = x.iter().map(|v| (v / ex).ln()).collect();
        let exz = ksum((0..x.len()).map(|i| probs[i] * x[i] * z[i]));
        let eez = ksum(z.iter().zip(probs).map(|(a, p)| p * a.exp()));
        (Some((exz - ent).abs()), Some(eez - 1.0))
    } else {
        (None, None)
    };
    Ok(VariationalReport {
        lhs,
        rhs,
        holds: lhs <= rhs + EXACT_TOLERANCE * (1.0 + rhs.abs()),
        witness_gap,
        witness_norm_gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationReport {
    pub lambda: f64,
    /// `E[e^{λT} T]`.
    pub lhs: f64,
    /// `E e^{λT} · E T`.
    pub rhs: f64,
    pub holds: bool,
}

/// Chebyshev association between the decreasing `e^{λT}` and increasing `T`.
pub fn association_check(table: &ConfigTable, lambda: f64) -> Result<AssociationReport, EntropyError> {
    require_nonpositive(lambda)?;
    let lhs = table.expectation(|c| (lambda * table.passage_time[c]).exp() * table.passage_time[c]);
    let rhs = table.expectation(|c| (lambda * table.passage_time[c]).exp()) * table.expectation(|c| table.passage_time[c]);
    Ok(AssociationReport {
        lambda,
        lhs,
        rhs,
        holds: lhs <= rhs + EXACT_TOLERANCE,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PivotalReport {
    pub lambda: f64,
    pub ent: f64,
    /// `E[e^{λT} #Piv]`.
    pub weighted_pivotal: f64,
    /// `Ent / (λ² E[e^{λT} #Piv])`; `None` when no configuration has a pivotal edge.
    pub ratio: Option<f64>,
    /// Constant obtained by chaining the box tensorization, the resampling
    /// bound and the detour bound on this system.
    pub chain_constant: f64,
    pub pass: bool,
}

/// `max_e #{i : e ∈ S_i} · max_i E[(Σ_{S_i} T_i(u,v))^2]`.
pub fn pivotal_chain_constant(system: &ExactSystem, table: &ConfigTable) -> f64 {
    let mut multiplicity = vec![0usize; system.edges.len()];
    for b in &system.boxes {
        for &e in b {
            multiplicity[e] += 1;
        }
    }
    let max_mult = multiplicity.into_iter().max().unwrap_or(0) as f64;
    let max_sq = (0..system.boxes.len())
        .map(|i| ksum(restricted_pair_sums(system, table, i).into_iter().map(|(s, p)| p * s * s)))
        .fold(0.0, f64::max);
    max_mult * max_sq
}

pub fn pivotal_entropy_check(system: &ExactSystem, table: &ConfigTable, lambda: f64) -> Result<PivotalReport, EntropyError> {
    if !(lambda < 0.0) {
        return Err(EntropyError::Lambda("< 0"));
    }
    let chain_constant = pivotal_chain_constant(system, table);
    pivotal_report_with(table, lambda, chain_constant)
}

fn pivotal_report_with(table: &ConfigTable, lambda: f64, chain_constant: f64) -> Result<PivotalReport, EntropyError> {
    let x = exp_lambda_t(table, lambda);
    let ent = entropy(&x, &table.prob)?;
    let weighted_pivotal = table.expectation(|c| x[c] * table.pivotal_count(c) as f64);
    let ratio = if weighted_pivotal > 0.0 {
        Some(ent / (lambda * lambda * weighted_pivotal))
    } else {
        None
    };
    let pass = match ratio {
        Some(r) => r.is_finite() && r <= chain_constant * (1.0 + 1e-9) + EXACT_TOLERANCE,
        None => ent <= EXACT_TOLERANCE,
    };
    Ok(PivotalReport {
        lambda,
        ent,
        weighted_pivotal,
        ratio,
        chain_constant,
        pass,
    })
}

/// The pivotal ratio over a λ grid; bounded iff every point passes.
pub fn pivotal_entropy_scan(system: &ExactSystem, table: &ConfigTable, lambdas: &[f64]) -> Result<Vec<PivotalReport>, EntropyError> {
    let chain_constant = pivotal_chain_constant(system, table);
    lambdas
        .iter()
        .map(|&l| {
            if !(l < 0.0) {
                return Err(EntropyError::Lambda("< 0"));
            }
            pivotal_report_with(table, l, chain_constant)
        })
        .collect()
}

/// `Ent e^{λT} / (λ² E e^{λT} |x|_1)`: the constant in the sub-Gaussian
/// entropy bound, measured on this system.
pub fn entropy_growth_ratio(system: &ExactSystem, table: &ConfigTable, lambda: f64) -> Result<Option<f64>, EntropyError> {
    require_nonpositive(lambda)?;
    if lambda == 0.0 {
        return Ok(None);
    }
    let x = exp_lambda_t(table, lambda);
    let ent = entropy(&x, &table.prob)?;
    let ex = table.expectation(|c| x[c]);
    let dist = system.terminal_distance().max(1) as f64;
    Ok(Some(ent / (lambda * lambda * ex * dist)))
}

/// Everything measured on one system at one λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub lambda: f64,
    pub ent: f64,
    pub edge_sum: f64,
    pub box_sum: f64,
    pub blm: Vec<BlmReport>,
    pub weighted_pivotal: f64,
    pub pivotal_ratio: Option<f64>,
    pub chain_constant: f64,
    pub growth_ratio: Option<f64>,
    pub association: AssociationReport,
    pub checks: Vec<InequalityCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub margin: f64,
    pub pass: bool,
}

impl EntropyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn entropy_report(system: &ExactSystem, table: &ConfigTable, lambda: f64) -> Result<EntropyReport, EntropyError> {
    let tens = tensorization_check(system, table, lambda)?;
    let blm: Vec<BlmReport> = (0..system.boxes.len())
        .map(|i| blm_resampling_check(system, table, lambda, i))
        .collect::<Result<_, _>>()?;
    let association = association_check(table, lambda)?;
    let chain_constant = pivotal_chain_constant(system, table);
    let piv = if lambda < 0.0 {
        Some(pivotal_report_with(table, lambda, chain_constant)?)
    } else {
        None
    };
    let growth_ratio = entropy_growth_ratio(system, table, lambda)?;
    let mut checks = vec![
        InequalityCheck {
            name: "tensorization-edges".into(),
            margin: tens.edge_sum - tens.ent,
            pass: tens.ent <= tens.edge_sum + EXACT_TOLERANCE,
        },
        InequalityCheck {
            name: "tensorization-boxes".into(),
            margin: tens.box_sum - tens.edge_sum,
            pass: tens.edge_sum <= tens.box_sum + EXACT_TOLERANCE,
        },
        InequalityCheck {
            name: "resampling-bound".into(),
            margin: blm.iter().map(|b| b.margin()).fold(f64::INFINITY, f64::min),
            pass: blm.iter().all(|b| b.pass),
        },
        InequalityCheck {
            name: "association".into(),
            margin: association.rhs - association.lhs,
            pass: association.holds,
        },
    ];
    if let Some(p) = &piv {
        checks.push(InequalityCheck {
            name: "pivotal-ratio".into(),
            margin: p.ratio.map(|r| p.chain_constant - r).unwrap_or(-p.ent),
            pass: p.pass,
        });
    }
    Ok(EntropyReport {
        lambda,
        ent: tens.ent,
        edge_sum: tens.edge_sum,
        box_sum: tens.box_sum,
        blm,
        weighted_pivotal: piv.as_ref().map(|p| p.weighted_pivotal).unwrap_or(0.0),
        pivotal_ratio: piv.as_ref().and_then(|p| p.ratio),
        chain_constant,
        growth_ratio,
        association,
        checks,
    })
}

/// Variational inequality against `count` random test functions `W`, each
/// entry uniform on `[-scale, scale]`.
pub fn variational_random_suite(probs: &[f64], x: &[f64], count: usize, scale: f64, seed: u64) -> Result<Vec<VariationalReport>, EntropyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let w: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-scale..=scale)).collect();
            variational_check(probs, x, &w)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub n: u64,
    pub p: f64,
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiEstimate {
    pub c: f64,
    pub alpha: f64,
    /// Empirical `E e^{α φ}`.
    pub mean: f64,
    pub stderr: f64,
    pub ci: (f64, f64),
    /// `P(φ >= n)` for `n = 1..=max φ`.
    pub tail: Vec<TailPoint>,
}

/// `φ = #Piv · 1{c T < #Piv}` over samples of `(T, #Piv)`.
pub fn phi_moment_estimate(samples: &[(f64, u64)], c: f64, alpha: f64) -> Result<PhiEstimate, EntropyError> {
    if !(c > 0.0 && alpha > 0.0) {
        return Err(EntropyError::Invalid("c and alpha must be positive".into()));
    }
    let phi: Vec<u64> = samples
        .iter()
        .map(|&(t, piv)| if c * t < piv as f64 { piv } else { 0 })
        .collect();
    let exps: Vec<f64> = phi.iter().map(|&p| (alpha * p as f64).exp()).collect();
    let m = mean_estimate(&exps);
    let max_phi = phi.iter().copied().max().unwrap_or(0);
    let tail = (1..=max_phi)
        .map(|n| {
            let k = phi.iter().filter(|&&p| p >= n).count();
            TailPoint {
                n,
                p: k as f64 / phi.len() as f64,
                ci: wilson_interval(k, phi.len(), Z95),
            }
        })
        .collect();
    Ok(PhiEstimate {
        c,
        alpha,
        mean: m.mean,
        stderr: m.stderr,
        ci: m.ci95(),
        tail,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEntropy {
    pub lambda: f64,
    pub value: f64,
    pub ci: (f64, f64),
    pub samples: usize,
}

pub const MIN_MC_SAMPLES: usize = 1000;

fn plug_in_entropy(lambda: f64, ts: &[f64], idx: Option<&[usize]>) -> f64 {
    let n = idx.map(|i| i.len()).unwrap_or(ts.len()) as f64;
    let mut m0 = KahanSum::new();
    let mut m1 = KahanSum::new();
    let mut push = |t: f64| {
        let e = (lambda * t).exp();
        m0.add(e);
        m1.add(lambda * t * e);
    };
    match idx {
        Some(ix) => ix.iter().for_each(|&i| push(ts[i])),
        None => ts.iter().for_each(|&t| push(t)),
    }
    let (a, b) = (m0.value() / n, m1.value() / n);
    (b - a * a.ln()).max(0.0)
}

/// Plug-in estimate of `Ent e^{λT}` with a percentile bootstrap interval.
pub fn mc_entropy(lambda: f64, samples: &[f64], resamples: usize, seed: u64) -> Result<McEntropy, EntropyError> {
    require_nonpositive(lambda)?;
    if samples.len() < MIN_MC_SAMPLES {
        return Err(EntropyError::TooFewSamples {
            need: MIN_MC_SAMPLES,
            got: samples.len(),
        });
    }
    let value = plug_in_entropy(lambda, samples, None);
    if lambda == 0.0 {
        return Ok(McEntropy {
            lambda,
            value: 0.0,
            ci: (0.0, 0.0),
            samples: samples.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = samples.len();
    let mut idx = vec![0usize; n];
    let mut boot: Vec<f64> = (0..resamples.max(1))
        .map(|_| {
            for i in idx.iter_mut() {
                *i = rng.random_range(0..n);
            }
            plug_in_entropy(lambda, samples, Some(&idx))
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    let q = |p: f64| boot[((p * (boot.len() - 1) as f64).round() as usize).min(boot.len() - 1)];
    Ok(McEntropy {
        lambda,
        value,
        ci: (q(0.025), q(0.975)),
        samples: n,
    })
}
