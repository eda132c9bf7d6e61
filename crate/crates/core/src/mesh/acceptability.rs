//! Primary and secondary paths and the acceptability predicate.
//!
//! A network is acceptable when every node pair has a primary path (minimum
//! delay) and a secondary path (minimum delay after removing the primary's
//! interior nodes and its links), both no longer than the delay bound.

use serde::{Deserialize, Serialize};

use super::graph::{Graph, Restrict, Search};
use super::MeshError;
use crate::geometry::{distance, Network, NodeId, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub delay: f64,
}

impl Path {
    pub fn hops(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn interior(&self) -> &[NodeId] {
        if self.nodes.len() <= 2 {
            &[]
        } else {
            &self.nodes[1..self.nodes.len() - 1]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationReason {
    NoPrimary,
    NoSecondary,
    PrimaryDelay,
    SecondaryDelay,
}

impl std::fmt::Display for ViolationReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ViolationReason::NoPrimary => "no-primary",
            ViolationReason::NoSecondary => "no-secondary",
            ViolationReason::PrimaryDelay => "primary-delay",
            ViolationReason::SecondaryDelay => "secondary-delay",
        })
    }
}

/// First pair that breaks acceptability. `delay` is absent when the path does not exist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub pair: [NodeId; 2],
    pub reason: ViolationReason,
    pub delay: Option<f64>,
    pub bound: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "pair ({}, {}): {}", self.pair[0], self.pair[1], self.reason)?;
        if let Some(d) = self.delay {
            write!(f, " (delay {d:.3} > bound {:.3})", self.bound)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub acceptable: bool,
    pub violation: Option<Violation>,
}

fn to_ids(g: &Graph, path: &[u32]) -> Vec<NodeId> {
    path.iter().map(|&i| g.id(i as usize)).collect()
}

fn path_delay(g: &Graph, path: &[u32]) -> f64 {
    path.windows(2)
        .map(|w| g.length(w[0] as usize, w[1] as usize))
        .sum()
}

fn endpoints(g: &Graph, u: NodeId, v: NodeId) -> Result<(usize, usize), MeshError> {
    let a = g.index_of(u).ok_or(MeshError::UnknownNode(u))?;
    let b = g.index_of(v).ok_or(MeshError::UnknownNode(v))?;
    if a == b {
        return Err(MeshError::SameNode(u));
    }
    Ok((a, b))
}

/// Minimum-delay path from `u` to `v`. Ties go to fewer hops, then to the
/// lexicographically smallest node sequence starting at `u`.
pub fn primary_path(net: &Network, u: NodeId, v: NodeId) -> Result<Option<Path>, MeshError> {
    let g = Graph::from_network(net);
    let (a, b) = endpoints(&g, u, v)?;
    let mut s = Search::new();
    s.run(
        &g,
        a,
        Restrict {
            target: Some(b),
            ..Default::default()
        },
    );
    Ok(s.path_to(b).map(|p| Path {
        delay: path_delay(&g, &p),
        nodes: to_ids(&g, &p),
    }))
}

/// Shortest `u`-`v` path once the primary's interior nodes and its links are removed.
pub fn secondary_path(
    net: &Network,
    u: NodeId,
    v: NodeId,
    primary: &Path,
) -> Result<Option<Path>, MeshError> {
    let g = Graph::from_network(net);
    let (a, b) = endpoints(&g, u, v)?;
    let idx: Vec<u32> = primary
        .nodes
        .iter()
        .map(|&id| g.index_of(id).map(|i| i as u32).ok_or(MeshError::UnknownNode(id)))
        .collect::<Result<_, _>>()?;
    let mut blocked = vec![false; g.len()];
    let mut s = Search::new();
    Ok(secondary_search(&g, a, b, &idx, &mut blocked, &mut s, None).map(|p| Path {
        delay: path_delay(&g, &p),
        nodes: to_ids(&g, &p),
    }))
}

fn secondary_search(
    g: &Graph,
    a: usize,
    b: usize,
    primary: &[u32],
    blocked: &mut [bool],
    s: &mut Search,
    cutoff: Option<f64>,
) -> Option<Vec<u32>> {
    let interior = if primary.len() > 2 {
        &primary[1..primary.len() - 1]
    } else {
        &[][..]
    };
    for &w in interior {
        blocked[w as usize] = true;
    }
    let skip = (primary.len() == 2).then_some((a, b));
    s.run(
        g,
        a,
        Restrict {
            blocked: Some(blocked),
            skip_edge: skip,
            target: Some(b),
            cutoff,
            directed: true,
        },
    );
    for &w in interior {
        blocked[w as usize] = false;
    }
    s.path_to(b)
}

fn violation(g: &Graph, a: usize, b: usize, reason: ViolationReason, delay: Option<f64>, bound: f64) -> Violation {
    Violation {
        pair: [g.id(a), g.id(b)],
        reason,
        delay,
        bound,
    }
}

fn first_violation(g: &Graph, bound: f64) -> Option<Violation> {
    let n = g.len();
    let mut tree = Search::new();
    let mut s = Search::new();
    let mut blocked = vec![false; n];
    for a in 0..n {
        tree.run(g, a, Restrict::default());
        for b in (a + 1)..n {
            let Some(p) = tree.path_to(b) else {
                return Some(violation(g, a, b, ViolationReason::NoPrimary, None, bound));
            };
            let pd = tree.dist[b];
            if pd > bound {
                return Some(violation(g, a, b, ViolationReason::PrimaryDelay, Some(pd), bound));
            }
            match secondary_search(g, a, b, &p, &mut blocked, &mut s, None) {
                None => {
                    return Some(violation(g, a, b, ViolationReason::NoSecondary, None, bound));
                }
                Some(_) if s.dist[b] > bound => {
                    return Some(violation(g, a, b, ViolationReason::SecondaryDelay, Some(s.dist[b]), bound));
                }
                Some(_) => {}
            }
        }
    }
    None
}

/// Checks every unordered pair in increasing id order and reports the first violation.
pub fn check_acceptable(net: &Network, delay_bound: f64) -> Verdict {
    let g = Graph::from_network(net);
    let violation = first_violation(&g, delay_bound);
    Verdict {
        acceptable: violation.is_none(),
        violation,
    }
}

/// Whether any network over `points` can be acceptable. That is the case
/// exactly when the complete graph is: its primaries are the direct links and
/// its secondaries the best two-hop detours, which lower-bound every other
/// network's paths.
pub fn complete_graph_violation(points: &[Point], delay_bound: f64) -> Option<Violation> {
    let mut pts = points.to_vec();
    pts.sort_by_key(|p| p.id);
    let n = pts.len();
    for a in 0..n {
        for b in (a + 1)..n {
            let direct = distance(&pts[a], &pts[b]);
            let pair = [pts[a].id, pts[b].id];
            if direct > delay_bound {
                return Some(Violation {
                    pair,
                    reason: ViolationReason::PrimaryDelay,
                    delay: Some(direct),
                    bound: delay_bound,
                });
            }
            let detour = (0..n)
                .filter(|&w| w != a && w != b)
                .map(|w| distance(&pts[a], &pts[w]) + distance(&pts[w], &pts[b]))
                .fold(f64::INFINITY, f64::min);
            if detour.is_infinite() {
                return Some(Violation {
                    pair,
                    reason: ViolationReason::NoSecondary,
                    delay: None,
                    bound: delay_bound,
                });
            }
            if detour > delay_bound {
                return Some(Violation {
                    pair,
                    reason: ViolationReason::SecondaryDelay,
                    delay: Some(detour),
                    bound: delay_bound,
                });
            }
        }
    }
    None
}

/// Incremental acceptability tracker used inside the design loops.
///
/// After a successful full check it keeps the primary and secondary path of
/// every pair. Removing a link can only change the paths of pairs that route
/// over it, so `try_remove` re-evaluates just those pairs. Adding links
/// invalidates the cache; the next full check first retries recently violated
/// pairs before scanning everything.
pub(crate) struct Evaluator {
    g: Graph,
    bound: f64,
    primary: Vec<Vec<u32>>,
    secondary: Vec<Vec<u32>>,
    slack: Vec<f64>,
    watch: Vec<(u32, u32)>,
    ready: bool,
    tree: Search,
    search: Search,
    blocked: Vec<bool>,
    pub(crate) stats: EvalStats,
}

#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct EvalStats {
    pub full_scans: u64,
    pub searches: u64,
    pub trees: u64,
    pub removals_tried: u64,
}

const WATCH_LEN: usize = 16;

impl Evaluator {
    pub(crate) fn new(g: Graph, bound: f64) -> Self {
        let n = g.len();
        let pairs = n * n.saturating_sub(1) / 2;
        Self {
            g,
            bound,
            primary: vec![Vec::new(); pairs],
            secondary: vec![Vec::new(); pairs],
            slack: vec![0.0; pairs],
            watch: Vec::new(),
            ready: false,
            tree: Search::new(),
            search: Search::new(),
            blocked: vec![false; n],
            stats: EvalStats::default(),
        }
    }

    pub(crate) fn graph(&self) -> &Graph {
        &self.g
    }

    fn pair_index(&self, a: usize, b: usize) -> usize {
        let n = self.g.len();
        a * n - a * (a + 1) / 2 + (b - a - 1)
    }

    pub(crate) fn add_edge(&mut self, a: usize, b: usize) -> bool {
        let added = self.g.add_edge(a, b);
        if added {
            self.ready = false;
        }
        added
    }

    /// Evaluates one pair from a primary search tree rooted at `a`.
    /// Returns the two paths and the smaller slack, or `None` on violation.
    fn pair_from_tree(&mut self, a: usize, b: usize) -> Option<(Vec<u32>, Vec<u32>, f64)> {
        let p = self.tree.path_to(b)?;
        let pd = self.tree.dist[b];
        if pd > self.bound {
            return None;
        }
        self.stats.searches += 1;
        let s = secondary_search(
            &self.g,
            a,
            b,
            &p,
            &mut self.blocked,
            &mut self.search,
            Some(self.bound),
        )?;
        let sd = self.search.dist[b];
        if sd > self.bound {
            return None;
        }
        Some((p, s, (self.bound - pd).min(self.bound - sd)))
    }

    fn run_tree(&mut self, a: usize, target: Option<usize>) {
        self.stats.trees += 1;
        self.tree.run(
            &self.g,
            a,
            Restrict {
                target,
                ..Default::default()
            },
        );
    }

    fn note_violation(&mut self, a: usize, b: usize) {
        let key = (a as u32, b as u32);
        if let Some(i) = self.watch.iter().position(|&w| w == key) {
            self.watch.remove(i);
        }
        self.watch.insert(0, key);
        self.watch.truncate(WATCH_LEN);
    }

    /// Full acceptability check; on success every pair's paths are cached.
    pub(crate) fn check(&mut self) -> bool {
        if self.ready {
            return true;
        }
        for i in 0..self.watch.len() {
            let (a, b) = self.watch[i];
            let (a, b) = (a as usize, b as usize);
            self.run_tree(a, Some(b));
            if self.pair_from_tree(a, b).is_none() {
                self.note_violation(a, b);
                return false;
            }
        }
        self.stats.full_scans += 1;
        let n = self.g.len();
        for a in 0..n {
            self.run_tree(a, None);
            for b in (a + 1)..n {
                match self.pair_from_tree(a, b) {
                    None => {
                        self.note_violation(a, b);
                        return false;
                    }
                    Some((p, s, slack)) => {
                        let i = self.pair_index(a, b);
                        self.primary[i] = p;
                        self.secondary[i] = s;
                        self.slack[i] = slack;
                    }
                }
            }
        }
        self.ready = true;
        true
    }

    fn uses(path: &[u32], a: u32, b: u32) -> bool {
        path.windows(2)
            .any(|w| (w[0] == a && w[1] == b) || (w[0] == b && w[1] == a))
    }

    /// Removes the link if the network stays acceptable. Requires a prior successful [`check`].
    pub(crate) fn try_remove(&mut self, a: usize, b: usize) -> bool {
        if !self.check() {
            return false;
        }
        if !self.g.has_edge(a, b) {
            return false;
        }
        self.stats.removals_tried += 1;
        let n = self.g.len();
        let (ea, eb) = (a as u32, b as u32);
        let mut affected: Vec<(usize, usize, usize)> = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                let i = self.pair_index(u, v);
                if Self::uses(&self.primary[i], ea, eb) || Self::uses(&self.secondary[i], ea, eb) {
                    affected.push((u, v, i));
                }
            }
        }
        self.g.remove_edge(a, b);
        if affected.is_empty() {
            return true;
        }
        // tightest pair first: most removals fail, and they usually fail there
        let tightest = affected
            .iter()
            .enumerate()
            .min_by(|x, y| self.slack[x.1 .2].total_cmp(&self.slack[y.1 .2]))
            .map(|(k, _)| k)
            .expect("non-empty");
        let (tu, tv, ti) = affected[tightest];
        let mut root = None;
        if self.reevaluate(tu, tv, ti, (ea, eb), &mut root, Some(tv)).is_none() {
            self.g.add_edge(a, b);
            return false;
        }
        root = None;
        let mut updates = Vec::with_capacity(affected.len());
        for &(u, v, i) in &affected {
            match self.reevaluate(u, v, i, (ea, eb), &mut root, None) {
                Some(state) => updates.push((i, state)),
                None => {
                    self.g.add_edge(a, b);
                    return false;
                }
            }
        }
        for (i, (p, s, slack)) in updates {
            self.primary[i] = p;
            self.secondary[i] = s;
            self.slack[i] = slack;
        }
        true
    }

    /// Re-derives the paths of pair `i` = `(u, v)` after `edge` was removed.
    ///
    /// The primary only changes if it used the edge. The stored secondary is
    /// kept as a witness when it avoids the edge and stays node-disjoint from
    /// the primary: the best secondary is then no longer than the witness, so
    /// the pair's verdict is unchanged without a new search.
    fn reevaluate(
        &mut self,
        u: usize,
        v: usize,
        i: usize,
        edge: (u32, u32),
        root: &mut Option<usize>,
        target: Option<usize>,
    ) -> Option<(Vec<u32>, Vec<u32>, f64)> {
        let (ea, eb) = edge;
        let (p, pd) = if Self::uses(&self.primary[i], ea, eb) {
            if *root != Some(u) {
                self.run_tree(u, target);
                *root = if target.is_none() { Some(u) } else { None };
            }
            let p = self.tree.path_to(v)?;
            let pd = self.tree.dist[v];
            (p, pd)
        } else {
            let p = self.primary[i].clone();
            let pd = path_delay(&self.g, &p);
            (p, pd)
        };
        if pd > self.bound {
            return None;
        }
        let old = &self.secondary[i];
        let interior = |path: &[u32]| -> Vec<u32> {
            if path.len() > 2 {
                path[1..path.len() - 1].to_vec()
            } else {
                Vec::new()
            }
        };
        let p_in = interior(&p);
        let witness = !Self::uses(old, ea, eb)
            && *old != p
            && interior(old).iter().all(|w| !p_in.contains(w));
        let (s, sd) = if witness {
            let s = old.clone();
            let sd = path_delay(&self.g, &s);
            (s, sd)
        } else {
            self.stats.searches += 1;
            let s = secondary_search(
                &self.g,
                u,
                v,
                &p,
                &mut self.blocked,
                &mut self.search,
                Some(self.bound),
            )?;
            (s, self.search.dist[v])
        };
        if sd > self.bound {
            return None;
        }
        Some((p, s, (self.bound - pd).min(self.bound - sd)))
    }
}
