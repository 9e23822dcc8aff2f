//! Geometry of the cubic lattice Z^d.
//!
//! Sites and nearest-neighbour edges, finite L∞ windows used to truncate the
//! lattice, the 3^d local boxes used for block tensorization, and the
//! polylog-radius macro boxes used for box-to-box passage times.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("dimension must be at least 2, got {0}")]
    Dimension(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sites {0} and {1} are not nearest neighbours")]
    NotAdjacent(Site, Site),
    #[error("macro box needs m >= 2, got {0}")]
    MacroScale(u64),
    #[error("macro box constant must be positive, got {0}")]
    MacroConstant(f64),
}

/// A vertex of Z^d.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Site(Vec<i64>);

impl Site {
    pub fn new(coords: Vec<i64>) -> Result<Self, LatticeError> {
        if coords.len() < 2 {
            return Err(LatticeError::Dimension(coords.len()));
        }
        Ok(Site(coords))
    }

    pub fn origin(d: usize) -> Self {
        assert!(d >= 2, "dimension must be at least 2");
        Site(vec![0; d])
    }

    /// `k · e_axis`.
    pub fn axis(d: usize, axis: usize, k: i64) -> Self {
        let mut s = Site::origin(d);
        s.0[axis] = k;
        s
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn l1_norm(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).sum()
    }

    pub fn linf_norm(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn l1_dist(&self, other: &Site) -> i64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }

    pub fn linf_dist(&self, other: &Site) -> i64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .max()
            .unwrap_or(0)
    }

    pub fn translate(&self, by: &Site) -> Site {
        Site(self.0.iter().zip(&by.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, k: i64) -> Site {
        Site(self.0.iter().map(|a| a * k).collect())
    }

    pub fn step(&self, axis: usize, delta: i64) -> Site {
        let mut s = self.clone();
        s.0[axis] += delta;
        s
    }

    /// The 2d nearest neighbours, ordered `+e_0, -e_0, +e_1, -e_1, ...`.
    pub fn neighbors(&self) -> Vec<Site> {
        (0..self.dim())
            .flat_map(|axis| [self.step(axis, 1), self.step(axis, -1)])
            .collect()
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

pub fn neighbors(s: &Site) -> Vec<Site> {
    s.neighbors()
}

/// A nearest-neighbour edge with its lexicographically smaller endpoint first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    u: Site,
    v: Site,
}

impl Edge {
    pub fn new(a: Site, b: Site) -> Result<Self, LatticeError> {
        if a.dim() != b.dim() {
            return Err(LatticeError::DimensionMismatch {
                expected: a.dim(),
                got: b.dim(),
            });
        }
        if a.l1_dist(&b) != 1 {
            return Err(LatticeError::NotAdjacent(a, b));
        }
        Ok(if a <= b { Edge { u: a, v: b } } else { Edge { u: b, v: a } })
    }

    /// The edge from `lower` to `lower + e_axis`.
    pub fn from_lower(lower: Site, axis: usize) -> Self {
        let v = lower.step(axis, 1);
        Edge { u: lower, v }
    }

    pub fn u(&self) -> &Site {
        &self.u
    }

    pub fn v(&self) -> &Site {
        &self.v
    }

    pub fn axis(&self) -> usize {
        self.u
            .coords()
            .iter()
            .zip(self.v.coords())
            .position(|(a, b)| a != b)
            .expect("edge endpoints differ")
    }

    pub fn contains(&self, s: &Site) -> bool {
        &self.u == s || &self.v == s
    }

    pub fn other(&self, s: &Site) -> Option<&Site> {
        if &self.u == s {
            Some(&self.v)
        } else if &self.v == s {
            Some(&self.u)
        } else {
            None
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.u, self.v)
    }
}

/// Finite L∞ ball `center + [-radius, radius]^d`.
///
/// Sites are indexed in row-major order with axis 0 varying fastest.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    center: Site,
    radius: u32,
}

impl Window {
    pub fn new(center: Site, radius: u32) -> Self {
        Window { center, radius }
    }

    /// Smallest window centred at the (floored) midpoint that contains both sites
    /// with at least `margin` sites of slack around each.
    pub fn enclosing(a: &Site, b: &Site, margin: u32) -> Self {
        let center = Site(
            a.coords()
                .iter()
                .zip(b.coords())
                .map(|(x, y)| (x + y).div_euclid(2))
                .collect(),
        );
        let half = a.linf_dist(&center).max(b.linf_dist(&center)) as u32;
        Window::new(center, half + margin)
    }

    pub fn center(&self) -> &Site {
        &self.center
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn side(&self) -> usize {
        2 * self.radius as usize + 1
    }

    pub fn site_count(&self) -> usize {
        self.side().pow(self.dim() as u32)
    }

    /// Index strides per axis.
    pub fn strides(&self) -> Vec<usize> {
        let side = self.side();
        (0..self.dim()).map(|a| side.pow(a as u32)).collect()
    }

    pub fn contains(&self, s: &Site) -> bool {
        s.dim() == self.dim() && s.linf_dist(&self.center) <= self.radius as i64
    }

    pub fn index_of(&self, s: &Site) -> Option<usize> {
        if !self.contains(s) {
            return None;
        }
        let side = self.side();
        let r = self.radius as i64;
        let mut idx = 0usize;
        for (a, (c, o)) in s.coords().iter().zip(self.center.coords()).enumerate() {
            idx += (c - o + r) as usize * side.pow(a as u32);
        }
        Some(idx)
    }

    /// Offsets of `idx` from the window corner, per axis, in `0..side`.
    pub fn local_coords(&self, mut idx: usize, out: &mut [i64]) {
        let side = self.side();
        for c in out.iter_mut() {
            *c = (idx % side) as i64;
            idx /= side;
        }
    }

    pub fn site_at(&self, idx: usize) -> Site {
        let mut local = vec![0i64; self.dim()];
        self.local_coords(idx, &mut local);
        let r = self.radius as i64;
        Site(
            local
                .iter()
                .zip(self.center.coords())
                .map(|(l, o)| l - r + o)
                .collect(),
        )
    }

    /// Sites at L∞ distance exactly `radius` from the center.
    pub fn is_boundary(&self, s: &Site) -> bool {
        s.linf_dist(&self.center) == self.radius as i64
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.site_count()).map(|i| self.site_at(i))
    }

    /// Every nearest-neighbour edge with both endpoints in the window.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        for s in self.sites() {
            for axis in 0..self.dim() {
                let t = s.step(axis, 1);
                if self.contains(&t) {
                    out.push(Edge { u: s.clone(), v: t });
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        let side = self.side();
        self.dim() * (side - 1) * side.pow(self.dim() as u32 - 1)
    }
}

/// The L∞ unit box around an anchor together with its internal edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalBox {
    anchor: Site,
    sites: Vec<Site>,
    edges: Vec<Edge>,
}

impl LocalBox {
    pub fn anchor(&self) -> &Site {
        &self.anchor
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains_site(&self, s: &Site) -> bool {
        s.dim() == self.anchor.dim() && s.linf_dist(&self.anchor) <= 1
    }

    pub fn contains_edge(&self, e: &Edge) -> bool {
        self.contains_site(e.u()) && self.contains_site(e.v())
    }

    pub fn window(&self) -> Window {
        Window::new(self.anchor.clone(), 1)
    }
}

pub fn local_box(anchor: &Site) -> Result<LocalBox, LatticeError> {
    if anchor.dim() < 2 {
        return Err(LatticeError::Dimension(anchor.dim()));
    }
    let w = Window::new(anchor.clone(), 1);
    Ok(LocalBox {
        anchor: anchor.clone(),
        sites: w.sites().collect(),
        edges: w.edges(),
    })
}

/// The box associated with an edge: anchored at its lexicographically smaller endpoint.
pub fn local_box_for_edge(e: &Edge) -> LocalBox {
    local_box(e.u()).expect("edge endpoints have dimension >= 2")
}

/// `v + [-r, r]^d` with `r = ceil(c7 · (ln m)^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroBox {
    center: Site,
    m: u64,
    c7: f64,
    radius: u32,
}

impl MacroBox {
    pub fn center(&self) -> &Site {
        &self.center
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn c7(&self) -> f64 {
        self.c7
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn window(&self) -> Window {
        Window::new(self.center.clone(), self.radius)
    }

    pub fn sites(&self) -> Vec<Site> {
        self.window().sites().collect()
    }
}

pub fn macro_box(center: &Site, m: u64, c7: f64) -> Result<MacroBox, LatticeError> {
    if m < 2 {
        return Err(LatticeError::MacroScale(m));
    }
    if !(c7 > 0.0) || !c7.is_finite() {
        return Err(LatticeError::MacroConstant(c7));
    }
    let l = (m as f64).ln();
    let radius = (c7 * l * l).ceil() as u32;
    Ok(MacroBox {
        center: center.clone(),
        m,
        c7,
        radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn s(c: &[i64]) -> Site {
        Site::new(c.to_vec()).unwrap()
    }

    #[test]
    fn neighbors_of_origin() {
        let got: HashSet<Site> = neighbors(&Site::origin(2)).into_iter().collect();
        let want: HashSet<Site> = [s(&[1, 0]), s(&[-1, 0]), s(&[0, 1]), s(&[0, -1])]
            .into_iter()
            .collect();
        assert_eq!(got, want);
        assert_eq!(neighbors(&Site::origin(3)).len(), 6);
    }

    #[test]
    fn neighbors_translate() {
        let base = s(&[2, -1]);
        let got: Vec<Site> = neighbors(&base);
        let want: Vec<Site> = neighbors(&Site::origin(2))
            .iter()
            .map(|n| n.translate(&base))
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn rejects_d1() {
        assert_eq!(Site::new(vec![3]), Err(LatticeError::Dimension(1)));
        assert!(local_box(&Site(vec![0])).is_err());
    }

    #[test]
    fn edge_canonical() {
        let a = s(&[1, 2]);
        let b = s(&[1, 3]);
        assert_eq!(Edge::new(a.clone(), b.clone()), Edge::new(b.clone(), a.clone()));
        let e = Edge::new(b, a.clone()).unwrap();
        assert_eq!(e.u(), &a);
        assert_eq!(e.axis(), 1);
        assert!(Edge::new(s(&[0, 0]), s(&[1, 1])).is_err());
    }

    fn enumerate_box_edges(d: usize) -> usize {
        // all unordered nearest-neighbour pairs in {-1,0,1}^d
        let sites: Vec<Site> = Window::new(Site::origin(d), 1).sites().collect();
        let mut count = 0;
        for i in 0..sites.len() {
            for j in i + 1..sites.len() {
                if sites[i].l1_dist(&sites[j]) == 1 {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn local_box_counts() {
        for d in 2..=4 {
            let b = local_box(&Site::origin(d)).unwrap();
            assert_eq!(b.sites().len(), 3usize.pow(d as u32));
            let formula = d * 2 * 3usize.pow(d as u32 - 1);
            assert_eq!(b.edges().len(), formula);
            assert_eq!(enumerate_box_edges(d), formula);
            assert!(b.edges().iter().all(|e| b.contains_edge(e)));
        }
        assert_eq!(local_box(&Site::origin(2)).unwrap().edges().len(), 12);
        assert_eq!(local_box(&Site::origin(3)).unwrap().edges().len(), 54);
    }

    #[test]
    fn macro_box_radius() {
        assert_eq!(macro_box(&Site::origin(2), 8, 1.0).unwrap().radius(), 5);
        assert_eq!(macro_box(&Site::origin(2), 2, 1.0).unwrap().radius(), 1);
        assert!(macro_box(&Site::origin(2), 1, 1.0).is_err());
        assert!(macro_box(&Site::origin(2), 5, 0.0).is_err());
        for m in 2..200u64 {
            let r1 = macro_box(&Site::origin(2), m, 0.7).unwrap().radius();
            let r2 = macro_box(&Site::origin(2), m, 1.4).unwrap().radius();
            assert!(r2 + 1 <= 2 * (r1 + 1));
        }
    }

    #[test]
    fn window_indexing_and_edges() {
        for r in 0..=4u32 {
            let w = Window::new(s(&[3, -2]), r);
            assert_eq!(w.site_count(), (2 * r as usize + 1).pow(2));
            for (i, site) in w.sites().enumerate() {
                assert_eq!(w.index_of(&site), Some(i));
            }
            let side = 2 * r as usize + 1;
            assert_eq!(w.edges().len(), 2 * side * (side - 1));
            assert_eq!(w.edge_count(), w.edges().len());
            assert!(w.contains(w.center()));
        }
        let w = Window::new(Site::origin(2), 2);
        assert!(w.is_boundary(&s(&[2, 0])));
        assert!(!w.is_boundary(&s(&[1, 1])));
    }

    #[test]
    fn enclosing_window_contains_both() {
        let a = s(&[0, 0]);
        let b = s(&[7, -3]);
        let w = Window::enclosing(&a, &b, 2);
        assert!(w.contains(&a) && w.contains(&b));
        assert!(!w.is_boundary(&a) && !w.is_boundary(&b));
    }
}
