//! Brute-force references shared by the oracle and acceptance targets.
#![allow(dead_code)]

use fpp_core::lattice::{Edge, Site};
use fpp_core::weights::EdgeWeights;

/// Every simple path from `s` to `t`, as lists of edge ids.
pub fn simple_paths(edges: &[Edge], sites: &[Site], s: usize, t: usize) -> Vec<Vec<usize>> {
    let n = sites.len();
    let mut adj = vec![Vec::new(); n];
    for (id, e) in edges.iter().enumerate() {
        let a = sites.iter().position(|x| x == e.u()).unwrap();
        let b = sites.iter().position(|x| x == e.v()).unwrap();
        adj[a].push((b, id));
        adj[b].push((a, id));
    }
    let mut out = Vec::new();
    let mut seen = vec![false; n];
    let mut stack = Vec::new();
    fn go(
        v: usize,
        t: usize,
        adj: &[Vec<(usize, usize)>],
        seen: &mut [bool],
        stack: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if v == t {
            out.push(stack.clone());
            return;
        }
        seen[v] = true;
        for &(w, id) in &adj[v] {
            if !seen[w] {
                stack.push(id);
                go(w, t, adj, seen, stack, out);
                stack.pop();
            }
        }
        seen[v] = false;
    }
    go(s, t, &adj, &mut seen, &mut stack, &mut out);
    out
}

pub fn weights_of(c: usize, strides: &[usize], radices: &[usize], values: &[f64]) -> Vec<f64> {
    strides.iter().zip(radices).map(|(s, r)| values[(c / s) % r]).collect()
}

/// Unpruned minimum over every self-avoiding walk of exactly `m` steps.
pub fn saw_brute<W: EdgeWeights>(w: &W, origin: &Site, m: usize) -> f64 {
    fn go<W: EdgeWeights>(w: &W, path: &mut Vec<Site>, left: usize, acc: f64, best: &mut f64) {
        if left == 0 {
            *best = best.min(acc);
            return;
        }
        let here = path.last().unwrap().clone();
        for next in here.neighbors() {
            if path.contains(&next) {
                continue;
            }
            let e = Edge::new(here.clone(), next.clone()).unwrap();
            let x = acc + w.weight(&e);
            path.push(next);
            go(w, path, left - 1, x, best);
            path.pop();
        }
    }
    let mut best = f64::INFINITY;
    go(w, &mut vec![origin.clone()], m, 0.0, &mut best);
    best
}
