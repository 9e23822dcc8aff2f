//! Passage times on lattice windows.
//!
//! Everything here works on a finite [`Window`]; the truncation is controlled
//! by the exit-cost certificate: any path that leaves the window must first
//! reach the boundary from one endpoint and later come back from the boundary
//! to the other, so if the in-window time is at most the sum of the two
//! cheapest boundary exits the window value is the lattice value.

use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};

use num_bigint::BigUint;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{geodesic_structure, Graph, GeodesicStructure, HeapItem, TieRule};
use crate::lattice::{Edge, LocalBox, MacroBox, Site, Window};
use crate::weights::{sample, Distribution, EdgeWeights};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PassageError {
    #[error("site {0} lies outside the window")]
    OutsideWindow(Site),
    #[error("site {0} lies outside the local box")]
    OutsideBox(Site),
    #[error("passage fields were computed on different windows")]
    WindowMismatch,
    #[error("not certified: {0}")]
    Uncertified(String),
    #[error("self-avoiding walk search exceeded its budget of {0} expansions")]
    Budget(u64),
    #[error("empty site set")]
    EmptySet,
    #[error("invalid argument: {0}")]
    Invalid(String),
}

const NONE: u32 = u32::MAX;

/// Window geometry plus a lazily filled cache of edge weights.
struct WindowEnv<'a, W: ?Sized> {
    window: &'a Window,
    weights: &'a W,
    d: usize,
    side: usize,
    strides: Vec<usize>,
    corner: Vec<i64>,
    cache: Vec<f64>,
    buf: Vec<i64>,
}

impl<'a, W: EdgeWeights + ?Sized> WindowEnv<'a, W> {
    fn new(window: &'a Window, weights: &'a W) -> Self {
        let d = window.dim();
        let r = window.radius() as i64;
        WindowEnv {
            window,
            weights,
            d,
            side: window.side(),
            strides: window.strides(),
            corner: window.center().coords().iter().map(|c| c - r).collect(),
            cache: vec![f64::NAN; window.site_count() * d],
            buf: vec![0; d],
        }
    }

    #[inline]
    fn local(&self, mut idx: usize, out: &mut [usize]) {
        for c in out.iter_mut() {
            *c = idx % self.side;
            idx /= self.side;
        }
    }

    /// Weight of the edge from window index `lower` along `+axis`.
    #[inline]
    fn edge_weight(&mut self, lower: usize, axis: usize) -> f64 {
        let slot = lower * self.d + axis;
        let w = self.cache[slot];
        if !w.is_nan() {
            return w;
        }
        let mut idx = lower;
        for a in 0..self.d {
            self.buf[a] = self.corner[a] + (idx % self.side) as i64;
            idx /= self.side;
        }
        let w = self.weights.weight_lower(&self.buf, axis);
        self.cache[slot] = w;
        w
    }
}

struct StopRule<'a> {
    targets: &'a [usize],
    need_boundary: bool,
}

struct SearchResult {
    dist: Vec<f64>,
    parent: Vec<u32>,
    boundary_min: f64,
    /// Whether every window site was settled.
    complete: bool,
}

fn search<W: EdgeWeights + ?Sized>(
    env: &mut WindowEnv<'_, W>,
    sources: &[usize],
    stop: Option<StopRule<'_>>,
) -> SearchResult {
    let n = env.window.site_count();
    let d = env.d;
    let last = env.side - 1;
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![NONE; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::with_capacity(1024);
    for &s in sources {
        dist[s] = 0.0;
        heap.push(HeapItem {
            dist: 0.0,
            vertex: s as u32,
        });
    }
    let mut boundary_min = f64::INFINITY;
    let mut remaining_targets = stop.as_ref().map(|s| {
        let set: HashSet<usize> = s.targets.iter().copied().collect();
        set
    });
    let mut local = vec![0usize; d];
    let mut settled = 0usize;
    while let Some(HeapItem { dist: du, vertex }) = heap.pop() {
        let u = vertex as usize;
        if done[u] {
            continue;
        }
        done[u] = true;
        settled += 1;
        env.local(u, &mut local);
        let on_boundary = local.iter().any(|&c| c == 0 || c == last);
        if on_boundary && boundary_min.is_infinite() {
            boundary_min = du;
        }
        if let (Some(rule), Some(rem)) = (stop.as_ref(), remaining_targets.as_mut()) {
            rem.remove(&u);
            if rem.is_empty() && (!rule.need_boundary || boundary_min.is_finite()) {
                break;
            }
        }
        for a in 0..d {
            let stride = env.strides[a];
            if local[a] < last {
                let v = u + stride;
                if !done[v] {
                    let nd = du + env.edge_weight(u, a);
                    if nd < dist[v] {
                        dist[v] = nd;
                        parent[v] = u as u32;
                        heap.push(HeapItem {
                            dist: nd,
                            vertex: v as u32,
                        });
                    }
                }
            }
            if local[a] > 0 {
                let v = u - stride;
                if !done[v] {
                    let nd = du + env.edge_weight(v, a);
                    if nd < dist[v] {
                        dist[v] = nd;
                        parent[v] = u as u32;
                        heap.push(HeapItem {
                            dist: nd,
                            vertex: v as u32,
                        });
                    }
                }
            }
        }
    }
    SearchResult {
        dist,
        parent,
        boundary_min,
        complete: settled == n,
    }
}

/// Single-source passage times over a whole window.
#[derive(Debug, Clone)]
pub struct PassageField {
    source: Site,
    window: Window,
    dist: Vec<f64>,
    parent: Vec<u32>,
    boundary_min: f64,
}

impl PassageField {
    pub fn source(&self) -> &Site {
        &self.source
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    /// Distances indexed by window index.
    pub fn distances(&self) -> &[f64] {
        &self.dist
    }

    pub fn dist(&self, s: &Site) -> Option<f64> {
        self.window.index_of(s).map(|i| self.dist[i])
    }

    /// Cheapest time from the source to the window boundary.
    pub fn boundary_min(&self) -> f64 {
        self.boundary_min
    }

    /// Sites along the recorded parent chain from the source to `s`.
    pub fn path_to(&self, s: &Site) -> Option<Vec<Site>> {
        let mut i = self.window.index_of(s)?;
        let mut out = vec![self.window.site_at(i)];
        while self.parent[i] != NONE {
            i = self.parent[i] as usize;
            out.push(self.window.site_at(i));
        }
        out.reverse();
        Some(out)
    }

    pub fn parent_index(&self, idx: usize) -> Option<usize> {
        match self.parent[idx] {
            NONE => None,
            p => Some(p as usize),
        }
    }
}

pub fn dijkstra<W: EdgeWeights + ?Sized>(
    weights: &W,
    source: &Site,
    window: &Window,
) -> Result<PassageField, PassageError> {
    let s = window
        .index_of(source)
        .ok_or_else(|| PassageError::OutsideWindow(source.clone()))?;
    let mut env = WindowEnv::new(window, weights);
    let r = search(&mut env, &[s], None);
    debug_assert!(r.complete);
    Ok(PassageField {
        source: source.clone(),
        window: window.clone(),
        dist: r.dist,
        parent: r.parent,
        boundary_min: r.boundary_min,
    })
}

/// Window growth schedule for certified passage times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    /// Slack beyond the smallest window containing both endpoints; `None`
    /// picks `0.6 · |x - y|_1 + 2`.
    pub initial_margin: Option<u32>,
    pub growth_factor: f64,
    pub max_radius: u32,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            initial_margin: None,
            growth_factor: 1.5,
            max_radius: 4096,
        }
    }
}

impl CertifyOptions {
    fn first_window(&self, a: &Site, b: &Site) -> Window {
        let margin = self
            .initial_margin
            .unwrap_or_else(|| (0.6 * a.l1_dist(b) as f64).ceil() as u32 + 2)
            .max(1);
        Window::enclosing(a, b, margin)
    }

    fn grow(&self, w: &Window) -> Option<Window> {
        if w.radius() >= self.max_radius {
            return None;
        }
        let next = ((w.radius() as f64 * self.growth_factor).ceil() as u32)
            .max(w.radius() + 1)
            .min(self.max_radius);
        Some(Window::new(w.center().clone(), next))
    }
}

/// Outcome of a certified passage-time computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageTime {
    /// In-window time; an upper bound on the lattice value when uncertified.
    pub value: f64,
    pub certified: bool,
    pub window: Window,
    /// Sum of the two cheapest boundary exits.
    pub exit_sum: f64,
}

/// `τ(a, b)` on Z^d, growing the window geometrically until certified.
pub fn exact_passage_time<W: EdgeWeights + ?Sized>(
    weights: &W,
    a: &Site,
    b: &Site,
    opts: &CertifyOptions,
) -> Result<PassageTime, PassageError> {
    if a.dim() != b.dim() {
        return Err(PassageError::Invalid("endpoint dimensions differ".into()));
    }
    if !(opts.growth_factor > 1.0) {
        return Err(PassageError::Invalid("growth factor must exceed 1".into()));
    }
    let mut window = opts.first_window(a, b);
    loop {
        let ia = window.index_of(a).expect("window encloses a");
        let ib = window.index_of(b).expect("window encloses b");
        let mut env = WindowEnv::new(&window, weights);
        let fwd = search(
            &mut env,
            &[ia],
            Some(StopRule {
                targets: &[ib],
                need_boundary: true,
            }),
        );
        let t = fwd.dist[ib];
        let bwd = search(
            &mut env,
            &[ib],
            Some(StopRule {
                targets: &[],
                need_boundary: true,
            }),
        );
        let exit_sum = fwd.boundary_min + bwd.boundary_min;
        if t <= exit_sum {
            return Ok(PassageTime {
                value: t,
                certified: true,
                window,
                exit_sum,
            });
        }
        match opts.grow(&window) {
            Some(w) => window = w,
            None => {
                return Ok(PassageTime {
                    value: t,
                    certified: false,
                    window,
                    exit_sum,
                })
            }
        }
    }
}

/// Full passage fields from both endpoints on a window whose geodesic set is
/// certified: every path leaving the window is strictly longer than `T`.
#[derive(Debug, Clone)]
pub struct CertifiedPair {
    pub forward: PassageField,
    pub backward: PassageField,
    pub passage_time: f64,
    pub certified: bool,
    /// `exit_sum - T`; positive when the geodesic set is certified.
    pub margin: f64,
}

pub fn certified_pair<W: EdgeWeights + ?Sized>(
    weights: &W,
    a: &Site,
    b: &Site,
    opts: &CertifyOptions,
    min_margin: f64,
) -> Result<CertifiedPair, PassageError> {
    let first = exact_passage_time(weights, a, b, opts)?;
    let mut window = first.window;
    loop {
        let fwd = dijkstra(weights, a, &window)?;
        let bwd = dijkstra(weights, b, &window)?;
        let t = fwd.dist(b).expect("b in window");
        let margin = fwd.boundary_min + bwd.boundary_min - t;
        if margin > min_margin {
            return Ok(CertifiedPair {
                forward: fwd,
                backward: bwd,
                passage_time: t,
                certified: true,
                margin,
            });
        }
        match opts.grow(&window) {
            Some(w) => window = w,
            None => {
                return Ok(CertifiedPair {
                    forward: fwd,
                    backward: bwd,
                    passage_time: t,
                    certified: false,
                    margin,
                })
            }
        }
    }
}

/// Union of all geodesic edges between two sites, oriented away from the source.
#[derive(Debug, Clone)]
pub struct GeodesicDag {
    pub source: Site,
    pub target: Site,
    pub passage_time: f64,
    window: Window,
    lattice_edges: Vec<Edge>,
    structure: GeodesicStructure,
}

/// A geodesic arc `from -> to` over a lattice edge.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicArc {
    pub from: Site,
    pub to: Site,
    pub edge: Edge,
}

impl GeodesicDag {
    pub fn arcs(&self) -> Vec<GeodesicArc> {
        self.structure
            .arcs
            .iter()
            .map(|&(u, v, id)| GeodesicArc {
                from: self.window.site_at(u),
                to: self.window.site_at(v),
                edge: self.lattice_edges[id].clone(),
            })
            .collect()
    }

    pub fn edges(&self) -> BTreeSet<Edge> {
        self.structure
            .arcs
            .iter()
            .map(|a| self.lattice_edges[a.2].clone())
            .collect()
    }

    /// Number of geodesics; `None` when zero-weight ties admit infinitely many.
    pub fn geodesic_count(&self) -> Option<&BigUint> {
        self.structure.total.as_ref()
    }

    pub fn forward_count(&self, s: &Site) -> Option<BigUint> {
        let i = self.window.index_of(s)?;
        self.structure.forward_counts.as_ref()?.get(&i).cloned()
    }

    pub fn backward_count(&self, s: &Site) -> Option<BigUint> {
        let i = self.window.index_of(s)?;
        self.structure.backward_counts.as_ref()?.get(&i).cloned()
    }

    pub fn is_acyclic(&self) -> bool {
        self.structure.is_acyclic()
    }

    /// Candidate arcs whose defect was within 1000× the tie tolerance but
    /// outside it; nonzero values mean the tolerance may be mis-sized.
    pub fn near_ties(&self) -> usize {
        self.structure.near_ties
    }

    pub fn structure(&self) -> &GeodesicStructure {
        &self.structure
    }
}

pub fn geodesic_dag<W: EdgeWeights + ?Sized>(
    forward: &PassageField,
    backward: &PassageField,
    weights: &W,
    rule: TieRule,
) -> Result<GeodesicDag, PassageError> {
    if forward.window != backward.window {
        return Err(PassageError::WindowMismatch);
    }
    let window = &forward.window;
    let s = window.index_of(&forward.source).expect("source in window");
    let t = window
        .index_of(&backward.source)
        .ok_or_else(|| PassageError::OutsideWindow(backward.source.clone()))?;
    let (graph, lattice_edges) = Graph::from_window(window);
    let w: Vec<f64> = lattice_edges.iter().map(|e| weights.weight(e)).collect();
    let structure = geodesic_structure(
        graph.vertex_count(),
        graph.edges(),
        &w,
        &forward.dist,
        &backward.dist,
        s,
        t,
        rule,
    );
    Ok(GeodesicDag {
        source: forward.source.clone(),
        target: backward.source.clone(),
        passage_time: forward.dist[t],
        window: window.clone(),
        lattice_edges,
        structure,
    })
}

/// Edges lying on every geodesic of the DAG.
pub fn pivotal_edges(dag: &GeodesicDag) -> BTreeSet<Edge> {
    dag.structure
        .pivotal_edges()
        .into_iter()
        .map(|id| dag.lattice_edges[id].clone())
        .collect()
}

/// Sublevel set `{x : τ(0, x) <= t}`, optionally read as a union of unit cubes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub t: f64,
    pub fattened: bool,
    sites: BTreeSet<Site>,
}

impl Ball {
    pub fn sites(&self) -> &BTreeSet<Site> {
        &self.sites
    }

    pub fn contains(&self, s: &Site) -> bool {
        self.sites.contains(s)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn is_subset(&self, other: &Ball) -> bool {
        self.sites.is_subset(&other.sites)
    }

    /// Membership of a real point in the union of closed unit cubes centred
    /// at ball sites.
    pub fn contains_point(&self, p: &[f64]) -> bool {
        // candidate sites: floor/ceil in each coordinate where p_i is half-integral
        let mut candidates: Vec<Vec<i64>> = vec![Vec::with_capacity(p.len())];
        for &x in p {
            let lo = (x - 0.5).ceil() as i64;
            let hi = (x + 0.5).floor() as i64;
            let mut next = Vec::new();
            for c in &candidates {
                for z in lo..=hi {
                    let mut c2 = c.clone();
                    c2.push(z);
                    next.push(c2);
                }
            }
            candidates = next;
        }
        candidates
            .into_iter()
            .any(|c| self.sites.contains(&Site::new(c).expect("dimension >= 2")))
    }
}

pub fn ball(field: &PassageField, t: f64, fattened: bool) -> Result<Ball, PassageError> {
    if !(field.boundary_min > t) {
        return Err(PassageError::Uncertified(format!(
            "boundary reached at time {} <= {t}",
            field.boundary_min
        )));
    }
    let sites = field
        .dist
        .iter()
        .enumerate()
        .filter(|(_, d)| **d <= t)
        .map(|(i, _)| field.window.site_at(i))
        .collect();
    Ok(Ball { t, fattened, sites })
}

fn indices(window: &Window, set: &[Site]) -> Result<Vec<usize>, PassageError> {
    if set.is_empty() {
        return Err(PassageError::EmptySet);
    }
    set.iter()
        .map(|s| {
            window
                .index_of(s)
                .ok_or_else(|| PassageError::OutsideWindow(s.clone()))
        })
        .collect()
}

/// `min_{a ∈ A, b ∈ B} τ(a, b)` within the window.
pub fn box_to_box_time<W: EdgeWeights + ?Sized>(
    weights: &W,
    from: &[Site],
    to: &[Site],
    window: &Window,
) -> Result<f64, PassageError> {
    let src = indices(window, from)?;
    let dst = indices(window, to)?;
    let mut env = WindowEnv::new(window, weights);
    let r = search(&mut env, &src, None);
    Ok(dst.iter().map(|&i| r.dist[i]).fold(f64::INFINITY, f64::min))
}

/// Certified `min_{a ∈ A, b ∈ B} τ(a, b)` on Z^d: the window around the two
/// sets grows until the in-window minimum is at most the sum of the cheapest
/// boundary exits from each set.
pub fn box_to_box_passage<W: EdgeWeights + ?Sized>(
    weights: &W,
    from: &[Site],
    to: &[Site],
    opts: &CertifyOptions,
) -> Result<PassageTime, PassageError> {
    let (a, b) = match (from.first(), to.first()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(PassageError::EmptySet),
    };
    let spread = from
        .iter()
        .map(|s| s.linf_dist(a))
        .chain(to.iter().map(|s| s.linf_dist(b)))
        .max()
        .unwrap_or(0) as u32;
    let margin = opts
        .initial_margin
        .unwrap_or_else(|| (0.6 * a.l1_dist(b) as f64).ceil() as u32 + 2)
        .max(1);
    let mut window = Window::enclosing(a, b, spread + margin);
    loop {
        let src = indices(&window, from)?;
        let dst = indices(&window, to)?;
        let mut env = WindowEnv::new(&window, weights);
        let fwd = search(
            &mut env,
            &src,
            Some(StopRule {
                targets: &dst,
                need_boundary: true,
            }),
        );
        let t = dst.iter().map(|&i| fwd.dist[i]).fold(f64::INFINITY, f64::min);
        let bwd = search(
            &mut env,
            &dst,
            Some(StopRule {
                targets: &[],
                need_boundary: true,
            }),
        );
        let exit_sum = fwd.boundary_min + bwd.boundary_min;
        if t <= exit_sum {
            return Ok(PassageTime {
                value: t,
                certified: true,
                window,
                exit_sum,
            });
        }
        match opts.grow(&window) {
            Some(w) => window = w,
            None => {
                return Ok(PassageTime {
                    value: t,
                    certified: false,
                    window,
                    exit_sum,
                })
            }
        }
    }
}

/// `max_{z1, z2 ∈ box} τ(z1, z2)`, certified against the window boundary.
pub fn box_diameter_time<W: EdgeWeights + ?Sized>(
    weights: &W,
    mbox: &MacroBox,
    window: &Window,
) -> Result<f64, PassageError> {
    box_diameter_of_sites(weights, &mbox.sites(), window)
}

pub(crate) fn box_diameter_of_sites<W: EdgeWeights + ?Sized>(
    weights: &W,
    sites: &[Site],
    window: &Window,
) -> Result<f64, PassageError> {
    let idx = indices(window, sites)?;
    let mut env = WindowEnv::new(window, weights);
    let mut best = 0.0f64;
    for &z in &idx {
        let r = search(
            &mut env,
            &[z],
            Some(StopRule {
                targets: &idx,
                need_boundary: true,
            }),
        );
        let far = idx.iter().map(|&i| r.dist[i]).fold(0.0, f64::max);
        if !(r.boundary_min >= far) {
            return Err(PassageError::Uncertified(format!(
                "window margin too small: boundary at {} < {far}",
                r.boundary_min
            )));
        }
        best = best.max(far);
    }
    Ok(best)
}

/// Shortest time between two box sites using only the box's internal edges.
pub fn restricted_time<W: EdgeWeights + ?Sized>(
    weights: &W,
    lbox: &LocalBox,
    u: &Site,
    v: &Site,
) -> Result<f64, PassageError> {
    for s in [u, v] {
        if !lbox.contains_site(s) {
            return Err(PassageError::OutsideBox(s.clone()));
        }
    }
    if u == v {
        return Ok(0.0);
    }
    let window = lbox.window();
    let (graph, edges) = Graph::from_window(&window);
    let w: Vec<f64> = edges.iter().map(|e| weights.weight(e)).collect();
    let iu = window.index_of(u).expect("u in box");
    let iv = window.index_of(v).expect("v in box");
    Ok(graph.passage_time(&w, iu, iv))
}

/// A weight environment that agrees with `base` except on a resampled region.
#[derive(Debug, Clone)]
pub struct Overlay<'a, W: ?Sized> {
    base: &'a W,
    fresh: Vec<(Edge, f64)>,
}

impl<'a, W: EdgeWeights + ?Sized> Overlay<'a, W> {
    pub fn new(base: &'a W, fresh: Vec<(Edge, f64)>) -> Self {
        Overlay { base, fresh }
    }

    pub fn fresh(&self) -> &[(Edge, f64)] {
        &self.fresh
    }

    pub fn region(&self) -> impl Iterator<Item = &Edge> {
        self.fresh.iter().map(|(e, _)| e)
    }
}

impl<W: EdgeWeights + ?Sized> EdgeWeights for Overlay<'_, W> {
    fn weight_lower(&self, lower: &[i64], axis: usize) -> f64 {
        for (e, w) in &self.fresh {
            if e.axis() == axis && e.u().coords() == lower {
                return *w;
            }
        }
        self.base.weight_lower(lower, axis)
    }
}

/// Replace the weights on `region` by fresh i.i.d. draws from `dist`.
pub fn resample_region<'a, W: EdgeWeights + ?Sized, R: RngCore + ?Sized>(
    base: &'a W,
    region: &[Edge],
    dist: &Distribution,
    rng: &mut R,
) -> Overlay<'a, W> {
    let mut seen = HashSet::new();
    let fresh = region
        .iter()
        .filter(|e| seen.insert((*e).clone()))
        .map(|e| (e.clone(), sample(dist, rng)))
        .collect();
    Overlay::new(base, fresh)
}

/// Minimal passage time over self-avoiding paths from `origin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SawMinimum {
    pub length: usize,
    pub value: f64,
    pub expansions: u64,
}

struct SawSearch<'a, 'w, W: ?Sized> {
    env: WindowEnv<'w, W>,
    visited: Vec<bool>,
    best: &'a mut [f64],
    /// `cap[l]` = max of incumbents for lengths >= l.
    expansions: u64,
    budget: u64,
    max_len: usize,
    exact_only: bool,
    local: Vec<usize>,
}

impl<W: EdgeWeights + ?Sized> SawSearch<'_, '_, W> {
    fn bound(&self, len: usize) -> f64 {
        if self.exact_only {
            self.best[self.max_len]
        } else {
            self.best[len..=self.max_len].iter().copied().fold(0.0, f64::max)
        }
    }

    fn dfs(&mut self, u: usize, len: usize, acc: f64) -> Result<(), PassageError> {
        self.expansions += 1;
        if self.expansions > self.budget {
            return Err(PassageError::Budget(self.budget));
        }
        if acc < self.best[len] {
            self.best[len] = acc;
        }
        if len == self.max_len {
            return Ok(());
        }
        let mut local = std::mem::take(&mut self.local);
        local.resize(self.env.d, 0);
        self.env.local(u, &mut local);
        let last = self.env.side - 1;
        let mut moves: [(f64, usize); 16] = [(0.0, 0); 16];
        let mut k = 0;
        for a in 0..self.env.d {
            let stride = self.env.strides[a];
            if local[a] < last {
                let v = u + stride;
                if !self.visited[v] {
                    moves[k] = (self.env.edge_weight(u, a), v);
                    k += 1;
                }
            }
            if local[a] > 0 {
                let v = u - stride;
                if !self.visited[v] {
                    moves[k] = (self.env.edge_weight(v, a), v);
                    k += 1;
                }
            }
        }
        self.local = local;
        let moves = &mut moves[..k];
        moves.sort_by(|x, y| x.0.total_cmp(&y.0));
        for &(w, v) in moves.iter() {
            let next = acc + w;
            if next >= self.bound(len + 1) {
                continue;
            }
            self.visited[v] = true;
            let r = self.dfs(v, len + 1, next);
            self.visited[v] = false;
            r?;
        }
        Ok(())
    }
}

fn saw_run<W: EdgeWeights + ?Sized>(
    weights: &W,
    origin: &Site,
    max_len: usize,
    budget: u64,
    exact_only: bool,
) -> Result<(Vec<f64>, u64), PassageError> {
    if max_len == 0 {
        return Err(PassageError::Invalid("path length must be positive".into()));
    }
    if origin.dim() > 8 {
        return Err(PassageError::Invalid("self-avoiding search supports d <= 8".into()));
    }
    let window = Window::new(origin.clone(), max_len as u32);
    let start = window.index_of(origin).expect("origin is the center");
    let mut best = vec![f64::INFINITY; max_len + 1];
    let mut s = SawSearch {
        env: WindowEnv::new(&window, weights),
        visited: vec![false; window.site_count()],
        best: &mut best,
        expansions: 0,
        budget,
        max_len,
        exact_only,
        local: Vec::new(),
    };
    s.visited[start] = true;
    s.dfs(start, 0, 0.0)?;
    let expansions = s.expansions;
    Ok((best, expansions))
}

pub const DEFAULT_SAW_BUDGET: u64 = 50_000_000;

/// Minimal passage time among self-avoiding paths from `origin` with exactly
/// `m` edges, by depth-first branch and bound.
pub fn min_saw_time<W: EdgeWeights + ?Sized>(
    weights: &W,
    origin: &Site,
    m: usize,
    budget: u64,
) -> Result<SawMinimum, PassageError> {
    let (best, expansions) = saw_run(weights, origin, m, budget, true)?;
    Ok(SawMinimum {
        length: m,
        value: best[m],
        expansions,
    })
}

/// Minimal self-avoiding path times for every length `1..=max_len` in one search.
pub fn saw_minima<W: EdgeWeights + ?Sized>(
    weights: &W,
    origin: &Site,
    max_len: usize,
    budget: u64,
) -> Result<Vec<SawMinimum>, PassageError> {
    let (best, expansions) = saw_run(weights, origin, max_len, budget, false)?;
    Ok((1..=max_len)
        .map(|m| SawMinimum {
            length: m,
            value: best[m],
            expansions,
        })
        .collect())
}

/// Whether some self-avoiding path from `origin` with at least `n` and at
/// most `max_len` edges has `τ(γ) < a · #γ`.
pub fn kesten_cumulative_event<W: EdgeWeights + ?Sized>(
    weights: &W,
    origin: &Site,
    a: f64,
    n: usize,
    max_len: usize,
    budget: u64,
) -> Result<bool, PassageError> {
    let mins = saw_minima(weights, origin, max_len, budget)?;
    Ok(mins
        .iter()
        .filter(|m| m.length >= n)
        .any(|m| m.value < a * m.length as f64))
}

/// Passage time along an explicit site sequence.
pub fn path_time<W: EdgeWeights + ?Sized>(weights: &W, path: &[Site]) -> Result<f64, PassageError> {
    let mut total = 0.0;
    for pair in path.windows(2) {
        let e = Edge::new(pair[0].clone(), pair[1].clone())
            .map_err(|e| PassageError::Invalid(e.to_string()))?;
        total += weights.weight(&e);
    }
    Ok(total)
}

/// Weights on a window materialised as a lookup table keyed by edge.
pub fn window_weights<W: EdgeWeights + ?Sized>(weights: &W, window: &Window) -> HashMap<Edge, f64> {
    window
        .edges()
        .into_iter()
        .map(|e| {
            let w = weights.weight(&e);
            (e, w)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::local_box;
    use crate::weights::{EdgeTable, WeightField};

    fn s(c: &[i64]) -> Site {
        Site::new(c.to_vec()).unwrap()
    }

    fn unit() -> WeightField {
        WeightField::new(Distribution::Constant { value: 1.0 }, 0)
    }

    #[test]
    fn unit_weights_give_l1_distance() {
        let w = Window::new(s(&[1, -1]), 4);
        let pf = dijkstra(&unit(), &s(&[0, 0]), &w).unwrap();
        for site in w.sites() {
            assert_eq!(pf.dist(&site).unwrap(), site.l1_norm() as f64);
        }
        assert_eq!(pf.dist(&s(&[0, 0])), Some(0.0));
        assert!(dijkstra(&unit(), &s(&[9, 9]), &w).is_err());
    }

    #[test]
    fn certified_unit_time() {
        let pt = exact_passage_time(&unit(), &Site::origin(2), &s(&[5, 0]), &CertifyOptions::default()).unwrap();
        assert!(pt.certified);
        assert_eq!(pt.value, 5.0);
        for margin in 6..10 {
            let opts = CertifyOptions {
                initial_margin: Some(margin),
                ..Default::default()
            };
            let pt = exact_passage_time(&unit(), &Site::origin(2), &s(&[5, 0]), &opts).unwrap();
            assert!(pt.certified && pt.value == 5.0);
        }
    }

    #[test]
    fn cap_reports_uncertified() {
        // cheap corridors lead away from each endpoint; the direct route is heavy
        let mut table = EdgeTable::new(10.0);
        for x in -100..0 {
            table.set(Edge::from_lower(s(&[x, 0]), 0), 0.01);
        }
        for x in 6..106 {
            table.set(Edge::from_lower(s(&[x, 0]), 0), 0.01);
        }
        let opts = CertifyOptions {
            initial_margin: Some(1),
            growth_factor: 1.5,
            max_radius: 12,
        };
        let pt = exact_passage_time(&table, &Site::origin(2), &s(&[6, 0]), &opts).unwrap();
        assert!(!pt.certified);
        assert_eq!(pt.window.radius(), 12);
        assert_eq!(pt.value, 60.0);
    }

    #[test]
    fn unit_dag_square() {
        let pair = certified_pair(&unit(), &Site::origin(2), &s(&[1, 1]), &CertifyOptions::default(), 0.0).unwrap();
        let dag = geodesic_dag(&pair.forward, &pair.backward, &unit(), TieRule::Exact).unwrap();
        assert_eq!(dag.edges().len(), 4);
        assert_eq!(dag.geodesic_count(), Some(&BigUint::from(2u32)));
        assert!(pivotal_edges(&dag).is_empty());

        let pair = certified_pair(&unit(), &Site::origin(2), &s(&[2, 0]), &CertifyOptions::default(), 0.0).unwrap();
        let dag = geodesic_dag(&pair.forward, &pair.backward, &unit(), TieRule::Exact).unwrap();
        assert_eq!(dag.geodesic_count(), Some(&BigUint::from(1u32)));
        let piv = pivotal_edges(&dag);
        assert_eq!(piv, dag.edges());
        assert_eq!(piv.len(), 2);
    }

    #[test]
    fn unit_ball_is_l1_ball() {
        let w = Window::new(Site::origin(2), 5);
        let pf = dijkstra(&unit(), &Site::origin(2), &w).unwrap();
        let b = ball(&pf, 2.5, false).unwrap();
        assert_eq!(b.len(), 13);
        assert!(b.sites().iter().all(|x| x.l1_norm() <= 2));
        assert!(ball(&pf, 5.0, false).is_err());
        assert!(b.contains_point(&[2.5, 0.0]));
        assert!(!b.contains_point(&[2.6, 0.0]));
        assert!(b.contains_point(&[1.5, 1.5]));
    }

    #[test]
    fn box_times() {
        let w = Window::new(Site::origin(2), 6);
        let a = vec![s(&[0, 0]), s(&[1, 0])];
        assert_eq!(box_to_box_time(&unit(), &a, &[s(&[1, 0])], &w).unwrap(), 0.0);
        assert_eq!(box_to_box_time(&unit(), &[s(&[0, 0])], &[s(&[3, 2])], &w).unwrap(), 5.0);
        let mb = crate::lattice::macro_box(&Site::origin(2), 2, 1.0).unwrap();
        assert_eq!(box_diameter_time(&unit(), &mb, &w).unwrap(), 4.0);
        let tight = Window::new(Site::origin(2), 1);
        assert!(box_diameter_time(&unit(), &mb, &tight).is_err());
    }

    #[test]
    fn restricted_unit() {
        let b = local_box(&Site::origin(2)).unwrap();
        assert_eq!(restricted_time(&unit(), &b, &s(&[1, 1]), &s(&[1, 1])).unwrap(), 0.0);
        assert_eq!(restricted_time(&unit(), &b, &s(&[0, 0]), &s(&[1, 0])).unwrap(), 1.0);
        assert!(restricted_time(&unit(), &b, &s(&[0, 0]), &s(&[2, 0])).is_err());
    }

    #[test]
    fn saw_unit_and_single_step() {
        for m in 1..=6 {
            assert_eq!(min_saw_time(&unit(), &Site::origin(2), m, DEFAULT_SAW_BUDGET).unwrap().value, m as f64);
        }
        let f = WeightField::new(Distribution::Exponential { rate: 1.0 }, 3);
        let o = Site::origin(2);
        let want = o
            .neighbors()
            .into_iter()
            .map(|n| f.weight(&Edge::new(o.clone(), n).unwrap()))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min_saw_time(&f, &o, 1, DEFAULT_SAW_BUDGET).unwrap().value, want);
        assert!(matches!(min_saw_time(&f, &o, 12, 10), Err(PassageError::Budget(10))));
    }

    #[test]
    fn overlay_only_changes_region() {
        let f = WeightField::new(Distribution::Exponential { rate: 1.0 }, 8);
        let b = local_box(&s(&[2, 2])).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        let o = resample_region(&f, b.edges(), &f.distribution, &mut rng);
        let w = Window::new(Site::origin(2), 5);
        for e in w.edges() {
            if !b.contains_edge(&e) {
                assert_eq!(o.weight(&e), f.weight(&e));
            }
        }
        assert!(b.edges().iter().any(|e| o.weight(e) != f.weight(e)));
    }
}
