//! Dense-index adjacency graph and a tie-breaking Dijkstra.
//!
//! Node indices follow increasing node id, so comparing index sequences
//! lexicographically is the same as comparing id sequences.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::{approx_eq, distance, LinkKey, Network, NodeId, Point};

#[derive(Debug, Clone)]
pub(crate) struct Graph {
    points: Vec<Point>,
    adj: Vec<Vec<(u32, f64)>>,
    edges: usize,
}

impl Graph {
    /// `points` must be sorted by id and unique.
    pub(crate) fn new(points: Vec<Point>) -> Self {
        debug_assert!(points.windows(2).all(|w| w[0].id < w[1].id));
        let n = points.len();
        Self {
            points,
            adj: vec![Vec::new(); n],
            edges: 0,
        }
    }

    pub(crate) fn from_network(net: &Network) -> Self {
        let mut g = Self::new(net.nodes().copied().collect());
        for link in net.links() {
            let a = g.index_of(link.key.0).expect("endpoint is a member");
            let b = g.index_of(link.key.1).expect("endpoint is a member");
            g.add_edge(a, b);
        }
        g
    }

    pub(crate) fn len(&self) -> usize {
        self.points.len()
    }

    pub(crate) fn points(&self) -> &[Point] {
        &self.points
    }

    pub(crate) fn id(&self, i: usize) -> NodeId {
        self.points[i].id
    }

    pub(crate) fn index_of(&self, id: NodeId) -> Option<usize> {
        self.points.binary_search_by_key(&id, |p| p.id).ok()
    }

    pub(crate) fn length(&self, a: usize, b: usize) -> f64 {
        distance(&self.points[a], &self.points[b])
    }

    pub(crate) fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].iter().any(|&(v, _)| v as usize == b)
    }

    pub(crate) fn add_edge(&mut self, a: usize, b: usize) -> bool {
        if a == b || self.has_edge(a, b) {
            return false;
        }
        let w = self.length(a, b);
        self.adj[a].push((b as u32, w));
        self.adj[b].push((a as u32, w));
        self.edges += 1;
        true
    }

    pub(crate) fn remove_edge(&mut self, a: usize, b: usize) -> bool {
        let Some(i) = self.adj[a].iter().position(|&(v, _)| v as usize == b) else {
            return false;
        };
        self.adj[a].remove(i);
        let j = self.adj[b]
            .iter()
            .position(|&(v, _)| v as usize == a)
            .expect("adjacency is symmetric");
        self.adj[b].remove(j);
        self.edges -= 1;
        true
    }

    pub(crate) fn neighbors(&self, a: usize) -> &[(u32, f64)] {
        &self.adj[a]
    }

    /// Edges as `(a, b)` index pairs with `a < b`.
    pub(crate) fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edges);
        for (a, list) in self.adj.iter().enumerate() {
            for &(b, _) in list {
                if a < b as usize {
                    out.push((a, b as usize));
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub(crate) fn key(&self, a: usize, b: usize) -> LinkKey {
        LinkKey::new(self.id(a), self.id(b))
    }

    pub(crate) fn to_network(&self) -> Network {
        let mut net = Network::with_nodes(self.points.iter().copied()).expect("unique nodes");
        for (a, b) in self.edges() {
            net.add_link(self.id(a), self.id(b)).expect("member endpoints");
        }
        net
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry(f64, u32);

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then index
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NONE: u32 = u32::MAX;

/// Restrictions applied to one search.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Restrict<'a> {
    pub blocked: Option<&'a [bool]>,
    pub skip_edge: Option<(usize, usize)>,
    pub target: Option<usize>,
    /// Nodes farther than this are never expanded.
    pub cutoff: Option<f64>,
    /// Goal-directed search toward `target`, using straight-line distance as
    /// the lower bound. Lengths are Euclidean, so the bound is consistent and
    /// the target's distance stays exact; labels of other nodes may not be final.
    pub directed: bool,
}

/// Reusable Dijkstra state. Labels are ordered by total length (relative
/// tolerance), then hop count, then the lexicographic node sequence from the
/// source.
#[derive(Debug, Clone, Default)]
pub(crate) struct Search {
    pub dist: Vec<f64>,
    pub hops: Vec<u32>,
    pub parent: Vec<u32>,
    settled: Vec<bool>,
    heap: BinaryHeap<HeapEntry>,
    source: usize,
    scratch_a: Vec<u32>,
    scratch_b: Vec<u32>,
}

impl Search {
    pub(crate) fn new() -> Self {
        Self::default()
    }

    fn reset(&mut self, n: usize) {
        self.dist.clear();
        self.dist.resize(n, f64::INFINITY);
        self.hops.clear();
        self.hops.resize(n, u32::MAX);
        self.parent.clear();
        self.parent.resize(n, NONE);
        self.settled.clear();
        self.settled.resize(n, false);
        self.heap.clear();
    }

    pub(crate) fn run(&mut self, g: &Graph, source: usize, r: Restrict<'_>) {
        self.reset(g.len());
        self.source = source;
        self.dist[source] = 0.0;
        self.hops[source] = 0;
        let goal = match (r.directed, r.target) {
            (true, Some(t)) => Some(g.points[t]),
            _ => None,
        };
        let bound = |v: usize| goal.map_or(0.0, |t| distance(&g.points[v], &t));
        self.heap.push(HeapEntry(bound(source), source as u32));
        while let Some(HeapEntry(key, w)) = self.heap.pop() {
            let w = w as usize;
            if self.settled[w] {
                continue;
            }
            let dw = self.dist[w];
            if let Some(c) = r.cutoff {
                if key > c {
                    break;
                }
            }
            self.settled[w] = true;
            if r.target == Some(w) {
                break;
            }
            let hw = self.hops[w] + 1;
            for &(v, len) in g.neighbors(w) {
                let v = v as usize;
                if self.settled[v] {
                    continue;
                }
                if let Some(b) = r.blocked {
                    if b[v] {
                        continue;
                    }
                }
                if let Some((x, y)) = r.skip_edge {
                    if (w == x && v == y) || (w == y && v == x) {
                        continue;
                    }
                }
                let cand = dw + len;
                if self.better(cand, hw, w, v) {
                    self.dist[v] = cand;
                    self.hops[v] = hw;
                    self.parent[v] = w as u32;
                    self.heap.push(HeapEntry(cand + bound(v), v as u32));
                }
            }
        }
    }

    fn better(&mut self, cand: f64, hops: u32, via: usize, v: usize) -> bool {
        let cur = self.dist[v];
        if cur.is_infinite() {
            return true;
        }
        if !approx_eq(cand, cur, 0.0) {
            return cand < cur;
        }
        if hops != self.hops[v] {
            return hops < self.hops[v];
        }
        let old = self.parent[v] as usize;
        if old == via {
            return false;
        }
        self.chain_into(via, true);
        self.chain_into(old, false);
        self.scratch_a < self.scratch_b
    }

    /// Source-to-`v` index sequence of the current label of `v`, into a scratch buffer.
    fn chain_into(&mut self, v: usize, first: bool) {
        let buf = if first {
            &mut self.scratch_a
        } else {
            &mut self.scratch_b
        };
        buf.clear();
        let mut cur = v as u32;
        while cur != NONE {
            buf.push(cur);
            cur = self.parent[cur as usize];
        }
        buf.reverse();
    }

    /// Path from the source to `v` as indices, if `v` was settled.
    pub(crate) fn path_to(&self, v: usize) -> Option<Vec<u32>> {
        if !self.settled.get(v).copied().unwrap_or(false) {
            return None;
        }
        let mut out = Vec::with_capacity(self.hops[v] as usize + 1);
        let mut cur = v as u32;
        while cur != NONE {
            out.push(cur);
            cur = self.parent[cur as usize];
        }
        out.reverse();
        debug_assert_eq!(out[0] as usize, self.source);
        Some(out)
    }
}
