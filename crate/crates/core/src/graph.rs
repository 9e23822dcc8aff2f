//! Explicit weighted graphs and the geodesic-subgraph machinery shared by the
//! lattice windows and the tiny enumerable systems.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use num_bigint::BigUint;
use num_traits::{One, Zero};
use petgraph::algo::dominators;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::lattice::{Edge, Window};

/// Min-heap entry ordered by distance, then vertex.
#[derive(Copy, Clone, Debug)]
pub(crate) struct HeapItem {
    pub dist: f64,
    pub vertex: u32,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapItem {}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub const NO_PARENT: usize = usize::MAX;

/// Undirected graph with numbered edges.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<(usize, usize)>>,
}

impl Graph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for (id, &(u, v)) in edges.iter().enumerate() {
            assert!(u < n && v < n && u != v, "edge {id} out of range or a loop");
            adj[u].push((v, id));
            adj[v].push((u, id));
        }
        Graph { n, edges, adj }
    }

    /// The lattice window as a graph; vertex ids are window indices and the
    /// returned edges are in graph edge-id order.
    pub fn from_window(window: &Window) -> (Graph, Vec<Edge>) {
        let lattice_edges = window.edges();
        let edges = lattice_edges
            .iter()
            .map(|e| {
                (
                    window.index_of(e.u()).expect("edge inside window"),
                    window.index_of(e.v()).expect("edge inside window"),
                )
            })
            .collect();
        (Graph::new(window.site_count(), edges), lattice_edges)
    }

    /// Path graph `0 - 1 - ... - len`.
    pub fn path(len: usize) -> Graph {
        Graph::new(len + 1, (0..len).map(|i| (i, i + 1)).collect())
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adj[v]
    }

    /// Multi-source Dijkstra. Returns distances and the edge id used to reach
    /// each vertex (`NO_PARENT` for sources and unreachable vertices).
    pub fn dijkstra(&self, weights: &[f64], sources: &[usize]) -> (Vec<f64>, Vec<usize>) {
        debug_assert_eq!(weights.len(), self.edges.len());
        let mut dist = vec![f64::INFINITY; self.n];
        let mut parent = vec![NO_PARENT; self.n];
        let mut done = vec![false; self.n];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            dist[s] = 0.0;
            heap.push(HeapItem {
                dist: 0.0,
                vertex: s as u32,
            });
        }
        while let Some(HeapItem { dist: d, vertex }) = heap.pop() {
            let u = vertex as usize;
            if done[u] {
                continue;
            }
            done[u] = true;
            for &(v, id) in &self.adj[u] {
                let nd = d + weights[id];
                if nd < dist[v] {
                    dist[v] = nd;
                    parent[v] = id;
                    heap.push(HeapItem {
                        dist: nd,
                        vertex: v as u32,
                    });
                }
            }
        }
        (dist, parent)
    }

    pub fn passage_time(&self, weights: &[f64], s: usize, t: usize) -> f64 {
        self.dijkstra(weights, &[s]).0[t]
    }
}

/// How geodesic-membership equalities are tested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TieRule {
    /// Exact floating equality; sound when all weights are integers.
    Exact,
    /// `|lhs - T| <= rel · max(1, T)`.
    Relative(f64),
}

impl TieRule {
    pub const CONTINUOUS: TieRule = TieRule::Relative(1e-9);

    pub fn tolerance(&self, t: f64) -> f64 {
        match *self {
            TieRule::Exact => 0.0,
            TieRule::Relative(r) => r * t.max(1.0),
        }
    }
}

/// The subgraph of arcs lying on some geodesic from `source` to `target`.
#[derive(Debug, Clone)]
pub struct GeodesicStructure {
    pub vertex_count: usize,
    pub source: usize,
    pub target: usize,
    pub passage_time: f64,
    /// `(from, to, edge id)`, oriented by increasing distance from the source.
    pub arcs: Vec<(usize, usize, usize)>,
    /// Geodesic path counts into each vertex; `None` when zero-weight ties make
    /// the arc set cyclic (then there are infinitely many geodesic walks).
    pub forward_counts: Option<HashMap<usize, BigUint>>,
    pub backward_counts: Option<HashMap<usize, BigUint>>,
    pub total: Option<BigUint>,
    /// Arcs whose defect lies just above the tie tolerance.
    pub near_ties: usize,
}

impl GeodesicStructure {
    pub fn is_acyclic(&self) -> bool {
        self.total.is_some()
    }

    pub fn edge_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.arcs.iter().map(|a| a.2).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Edges lying on every geodesic.
    ///
    /// Acyclic case: arc `u -> v` is pivotal iff `fwd(u) · bwd(v) = N`.
    /// Cyclic case (zero-weight ties): an edge is pivotal iff its subdivision
    /// vertex dominates the target in the arc graph.
    pub fn pivotal_edges(&self) -> Vec<usize> {
        if self.source == self.target {
            return Vec::new();
        }
        let mut out = match (&self.forward_counts, &self.backward_counts, &self.total) {
            (Some(f), Some(b), Some(n)) => self
                .arcs
                .iter()
                .filter(|(u, v, _)| match (f.get(u), b.get(v)) {
                    (Some(a), Some(c)) => &(a * c) == n,
                    _ => false,
                })
                .map(|a| a.2)
                .collect(),
            _ => self.pivotal_by_dominators(),
        };
        out.sort_unstable();
        out.dedup();
        out
    }

    pub(crate) fn pivotal_by_dominators(&self) -> Vec<usize> {
        if self.arcs.is_empty() {
            return Vec::new();
        }
        let mut g: DiGraph<(), ()> = DiGraph::new();
        let mut node_of: HashMap<usize, NodeIndex> = HashMap::new();
        let mut node = |g: &mut DiGraph<(), ()>, v: usize| *node_of.entry(v).or_insert_with(|| g.add_node(()));
        let root = node(&mut g, self.source);
        let target = node(&mut g, self.target);
        let mut edge_node: HashMap<usize, NodeIndex> = HashMap::new();
        for &(u, v, id) in &self.arcs {
            let nu = node(&mut g, u);
            let nv = node(&mut g, v);
            let ne = *edge_node.entry(id).or_insert_with(|| g.add_node(()));
            g.add_edge(nu, ne, ());
            g.add_edge(ne, nv, ());
        }
        let doms = dominators::simple_fast(&g, root);
        let by_node: HashMap<NodeIndex, usize> = edge_node.iter().map(|(id, n)| (*n, *id)).collect();
        match doms.dominators(target) {
            Some(chain) => chain.filter_map(|n| by_node.get(&n).copied()).collect(),
            None => Vec::new(),
        }
    }
}

/// Collect geodesic arcs and count geodesics.
///
/// `dist_from` holds distances from the source, `dist_to` distances to the
/// target; `edges`/`weights` describe the (undirected) graph.
pub fn geodesic_structure(
    vertex_count: usize,
    edges: &[(usize, usize)],
    weights: &[f64],
    dist_from: &[f64],
    dist_to: &[f64],
    source: usize,
    target: usize,
    rule: TieRule,
) -> GeodesicStructure {
    let t = dist_from[target];
    let tol = rule.tolerance(t);
    let near = if tol > 0.0 { 1e3 * tol } else { 0.0 };
    let mut arcs = Vec::new();
    let mut near_ties = 0;
    for (id, &(a, b)) in edges.iter().enumerate() {
        let w = weights[id];
        for (u, v) in [(a, b), (b, a)] {
            let (du, dv) = (dist_from[u], dist_to[v]);
            if !du.is_finite() || !dv.is_finite() {
                continue;
            }
            let defect = (du + w + dv - t).abs();
            if defect <= tol {
                arcs.push((u, v, id));
            } else if defect <= near {
                near_ties += 1;
            }
        }
    }
    let counts = count_paths(&arcs, source, target);
    let (forward_counts, backward_counts, total) = match counts {
        Some((f, b)) => {
            let n = if source == target {
                BigUint::one()
            } else {
                f.get(&target).cloned().unwrap_or_else(BigUint::zero)
            };
            (Some(f), Some(b), Some(n))
        }
        None => (None, None, None),
    };
    GeodesicStructure {
        vertex_count,
        source,
        target,
        passage_time: t,
        arcs,
        forward_counts,
        backward_counts,
        total,
        near_ties,
    }
}

type Counts = HashMap<usize, BigUint>;

/// Kahn topological sweep; `None` if the arc set has a cycle.
fn count_paths(arcs: &[(usize, usize, usize)], source: usize, target: usize) -> Option<(Counts, Counts)> {
    let mut verts: Vec<usize> = arcs.iter().flat_map(|a| [a.0, a.1]).collect();
    verts.push(source);
    verts.push(target);
    verts.sort_unstable();
    verts.dedup();
    let local: HashMap<usize, usize> = verts.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let n = verts.len();
    let mut out_adj = vec![Vec::new(); n];
    let mut in_adj = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    for &(u, v, _) in arcs {
        let (lu, lv) = (local[&u], local[&v]);
        out_adj[lu].push(lv);
        in_adj[lv].push(lu);
        indeg[lv] += 1;
    }
    let mut order = Vec::with_capacity(n);
    let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    while let Some(u) = stack.pop() {
        order.push(u);
        for &v in &out_adj[u] {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                stack.push(v);
            }
        }
    }
    if order.len() != n {
        return None;
    }
    let mut fwd = vec![BigUint::zero(); n];
    fwd[local[&source]] = BigUint::one();
    for &u in &order {
        if fwd[u].is_zero() {
            continue;
        }
        let c = fwd[u].clone();
        for &v in &out_adj[u] {
            fwd[v] += &c;
        }
    }
    let mut bwd = vec![BigUint::zero(); n];
    bwd[local[&target]] = BigUint::one();
    for &v in order.iter().rev() {
        if bwd[v].is_zero() {
            continue;
        }
        let c = bwd[v].clone();
        for &u in &in_adj[v] {
            bwd[u] += &c;
        }
    }
    let f = verts.iter().copied().zip(fwd).collect();
    let b = verts.iter().copied().zip(bwd).collect();
    Some((f, b))
}

/// Geodesic structure between two vertices of an explicit graph.
pub fn graph_geodesics(graph: &Graph, weights: &[f64], s: usize, t: usize, rule: TieRule) -> GeodesicStructure {
    let (df, _) = graph.dijkstra(weights, &[s]);
    let (db, _) = graph.dijkstra(weights, &[t]);
    geodesic_structure(graph.vertex_count(), graph.edges(), weights, &df, &db, s, t, rule)
}
