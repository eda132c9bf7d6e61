//! Ring topologies: a TSP heuristic for the optimized ring and cheapest-link
//! insertion for the evolved one.
//!
//! The optimized ring starts from the best nearest-neighbour tour over all
//! start nodes, improves it with 2-opt and Or-opt to a local optimum and then
//! runs `budget` perturbation restarts, keeping the cheapest tour found.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use thiserror::Error;

use crate::geometry::{approx_eq, distance, strictly_less, LinkKey, Network, NodeId, Point};
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum RingError {
    #[error("a ring needs at least 3 nodes, got {0}")]
    TooFewPoints(usize),
    #[error("exhaustive search is limited to 10 nodes, got {0}")]
    TooLarge(usize),
    #[error("node {0} appears twice")]
    DuplicateNode(NodeId),
    #[error("links do not form a single cycle through every node")]
    NotARing,
}

/// A closed tour. `nodes[i]` is linked to `nodes[i + 1]` and the last node to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Ring {
    nodes: Vec<Point>,
    cost: f64,
}

impl Ring {
    pub fn from_tour(nodes: Vec<Point>) -> Result<Self, RingError> {
        if nodes.len() < 3 {
            return Err(RingError::TooFewPoints(nodes.len()));
        }
        let mut seen = BTreeSet::new();
        for p in &nodes {
            if !seen.insert(p.id) {
                return Err(RingError::DuplicateNode(p.id));
            }
        }
        let cost = tour_length(&nodes);
        Ok(Self { nodes, cost })
    }

    /// Recovers the tour of a network whose links form one Hamiltonian cycle.
    pub fn from_network(net: &Network) -> Result<Self, RingError> {
        let n = net.node_count();
        if n < 3 {
            return Err(RingError::TooFewPoints(n));
        }
        let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for key in net.link_keys() {
            adj.entry(key.0).or_default().push(key.1);
            adj.entry(key.1).or_default().push(key.0);
        }
        if adj.len() != n || adj.values().any(|v| v.len() != 2) {
            return Err(RingError::NotARing);
        }
        let start = *adj.keys().next().expect("non-empty");
        let mut tour = vec![start];
        let (mut prev, mut cur) = (start, adj[&start][0]);
        while cur != start {
            tour.push(cur);
            let next = adj[&cur].iter().copied().find(|&x| x != prev).expect("degree two");
            prev = cur;
            cur = next;
        }
        if tour.len() != n {
            return Err(RingError::NotARing);
        }
        let pts = tour.iter().map(|id| *net.node(*id).expect("network node")).collect();
        Self::from_tour(pts)
    }

    pub fn points(&self) -> &[Point] {
        &self.nodes
    }

    pub fn ids(&self) -> Vec<NodeId> {
        self.nodes.iter().map(|p| p.id).collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.iter().any(|p| p.id == id)
    }

    /// Tour edges as link keys, in tour order.
    pub fn edges(&self) -> impl Iterator<Item = LinkKey> + '_ {
        let n = self.nodes.len();
        (0..n).map(move |i| LinkKey::new(self.nodes[i].id, self.nodes[(i + 1) % n].id))
    }

    pub fn to_network(&self) -> Network {
        let mut net = Network::with_nodes(self.nodes.iter().copied()).expect("ring nodes are unique");
        for key in self.edges() {
            net.add_link(key.0, key.1).expect("ring edge endpoints are members");
        }
        net
    }
}

fn tour_length(nodes: &[Point]) -> f64 {
    let n = nodes.len();
    (0..n).map(|i| distance(&nodes[i], &nodes[(i + 1) % n])).sum()
}

struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    fn new(points: &[Point]) -> Self {
        let n = points.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = distance(&points[i], &points[j]);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Self { n, d }
    }

    #[inline]
    fn get(&self, a: usize, b: usize) -> f64 {
        self.d[a * self.n + b]
    }

    fn tour_cost(&self, tour: &[usize]) -> f64 {
        let n = tour.len();
        (0..n).map(|i| self.get(tour[i], tour[(i + 1) % n])).sum()
    }
}

fn nearest_neighbor_tour(dm: &DistanceMatrix, start: usize) -> Vec<usize> {
    let n = dm.n;
    let mut visited = vec![false; n];
    let mut tour = Vec::with_capacity(n);
    let mut cur = start;
    visited[cur] = true;
    tour.push(cur);
    for _ in 1..n {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (j, &seen) in visited.iter().enumerate() {
            if !seen && dm.get(cur, j) < best_d {
                best_d = dm.get(cur, j);
                best = j;
            }
        }
        visited[best] = true;
        tour.push(best);
        cur = best;
    }
    tour
}

/// First-improvement 2-opt until no move gains more than `eps`.
fn two_opt(dm: &DistanceMatrix, tour: &mut [usize], eps: f64) -> bool {
    let n = tour.len();
    if n < 4 {
        return false;
    }
    let mut any = false;
    loop {
        let mut improved = false;
        for i in 0..n - 2 {
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (a, b) = (tour[i], tour[i + 1]);
                let (c, d) = (tour[j], tour[(j + 1) % n]);
                let delta = dm.get(a, c) + dm.get(b, d) - dm.get(a, b) - dm.get(c, d);
                if delta < -eps {
                    tour[i + 1..=j].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            return any;
        }
        any = true;
    }
}

/// Moves segments of 1 to 3 nodes elsewhere in the tour, either orientation.
/// Applies the first improving move found; returns whether one was applied.
fn or_opt(dm: &DistanceMatrix, tour: &mut Vec<usize>, eps: f64) -> bool {
    let n = tour.len();
    if n < 5 {
        return false;
    }
    for len in 1..=3usize {
        if n < len + 3 {
            break;
        }
        for i in 0..n {
            let seg: Vec<usize> = (0..len).map(|k| tour[(i + k) % n]).collect();
            let prev = tour[(i + n - 1) % n];
            let next = tour[(i + len) % n];
            let (first, last) = (seg[0], seg[len - 1]);
            let gain = dm.get(prev, first) + dm.get(last, next) - dm.get(prev, next);
            if gain <= eps {
                continue;
            }
            // remaining tour starting right after the segment
            let rest: Vec<usize> = (0..n - len).map(|k| tour[(i + len + k) % n]).collect();
            for j in 0..rest.len() {
                let c = rest[j];
                let d = rest[(j + 1) % rest.len()];
                if c == prev && d == next {
                    continue;
                }
                let fwd = dm.get(c, first) + dm.get(last, d) - dm.get(c, d);
                let rev = dm.get(c, last) + dm.get(first, d) - dm.get(c, d);
                let (cost, reversed) = if rev < fwd { (rev, true) } else { (fwd, false) };
                if cost < gain - eps {
                    let mut out = Vec::with_capacity(n);
                    out.extend_from_slice(&rest[..=j]);
                    if reversed {
                        out.extend(seg.iter().rev());
                    } else {
                        out.extend(seg.iter());
                    }
                    out.extend_from_slice(&rest[j + 1..]);
                    *tour = out;
                    return true;
                }
            }
        }
    }
    false
}

fn local_search(dm: &DistanceMatrix, tour: &mut Vec<usize>) {
    let eps = 1e-10 * dm.tour_cost(tour).max(f64::MIN_POSITIVE);
    loop {
        two_opt(dm, tour, eps);
        if !or_opt(dm, tour, eps) {
            break;
        }
    }
}

fn double_bridge<R: Rng + ?Sized>(tour: &[usize], rng: &mut R) -> Vec<usize> {
    let n = tour.len();
    let mut cuts = [0usize; 3];
    loop {
        for c in cuts.iter_mut() {
            *c = 1 + rng::index(rng, n - 1);
        }
        cuts.sort_unstable();
        if cuts[0] < cuts[1] && cuts[1] < cuts[2] {
            break;
        }
    }
    let (p1, p2, p3) = (cuts[0], cuts[1], cuts[2]);
    let mut out = Vec::with_capacity(n);
    out.extend_from_slice(&tour[..p1]);
    out.extend_from_slice(&tour[p2..p3]);
    out.extend_from_slice(&tour[p1..p2]);
    out.extend_from_slice(&tour[p3..]);
    out
}

/// Rotates to the smallest id and orients so the second node has the smaller id of the two neighbours.
fn canonical(points: &[Point], tour: &[usize]) -> Vec<Point> {
    let n = tour.len();
    let start = (0..n).min_by_key(|&i| points[tour[i]].id).unwrap_or(0);
    let mut out: Vec<Point> = (0..n).map(|k| points[tour[(start + k) % n]]).collect();
    if n > 2 && out[1].id > out[n - 1].id {
        out[1..].reverse();
    }
    out
}

/// Heuristic minimum-length ring over `points`. Deterministic given the stream state and budget.
pub fn tsp_heuristic<R: Rng + ?Sized>(
    points: &[Point],
    rng: &mut R,
    budget: usize,
) -> Result<Ring, RingError> {
    check_unique(points)?;
    let n = points.len();
    if n < 3 {
        return Err(RingError::TooFewPoints(n));
    }
    if n == 3 {
        return Ring::from_tour(canonical(points, &[0, 1, 2]));
    }
    let dm = DistanceMatrix::new(points);
    let mut best = (0..n)
        .map(|s| nearest_neighbor_tour(&dm, s))
        .map(|t| (dm.tour_cost(&t), t))
        .fold(None::<(f64, Vec<usize>)>, |acc, cand| match acc {
            Some(a) if a.0 <= cand.0 => Some(a),
            _ => Some(cand),
        })
        .map(|(_, t)| t)
        .expect("n >= 4");
    local_search(&dm, &mut best);
    let mut best_cost = dm.tour_cost(&best);
    for _ in 0..budget {
        let mut cand = if n >= 8 {
            double_bridge(&best, rng)
        } else {
            nearest_neighbor_tour(&dm, rng::index(rng, n))
        };
        local_search(&dm, &mut cand);
        let cost = dm.tour_cost(&cand);
        if strictly_less(cost, best_cost) {
            best = cand;
            best_cost = cost;
        }
    }
    Ring::from_tour(canonical(points, &best))
}

/// Best nearest-neighbour tour over all start nodes, without improvement.
pub fn nearest_neighbor_ring(points: &[Point]) -> Result<Ring, RingError> {
    check_unique(points)?;
    if points.len() < 3 {
        return Err(RingError::TooFewPoints(points.len()));
    }
    let dm = DistanceMatrix::new(points);
    let best = (0..points.len())
        .map(|s| nearest_neighbor_tour(&dm, s))
        .min_by(|a, b| dm.tour_cost(a).total_cmp(&dm.tour_cost(b)))
        .expect("non-empty");
    Ring::from_tour(canonical(points, &best))
}

/// Exact minimum ring by enumerating every tour with a fixed first node, one direction each.
pub fn tsp_bruteforce(points: &[Point]) -> Result<Ring, RingError> {
    check_unique(points)?;
    let n = points.len();
    if n < 3 {
        return Err(RingError::TooFewPoints(n));
    }
    if n > 10 {
        return Err(RingError::TooLarge(n));
    }
    let dm = DistanceMatrix::new(points);
    let mut rest: Vec<usize> = (1..n).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    permute(&mut rest, 0, &mut |perm| {
        if perm[0] > perm[perm.len() - 1] {
            return;
        }
        let mut cost = dm.get(0, perm[0]) + dm.get(perm[perm.len() - 1], 0);
        for w in perm.windows(2) {
            cost += dm.get(w[0], w[1]);
        }
        if best.as_ref().is_none_or(|b| cost < b.0) {
            let mut t = vec![0];
            t.extend_from_slice(perm);
            best = Some((cost, t));
        }
    });
    let (_, tour) = best.expect("at least one tour");
    Ring::from_tour(canonical(points, &tour))
}

fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

fn check_unique(points: &[Point]) -> Result<(), RingError> {
    let mut seen = BTreeSet::new();
    for p in points {
        if !seen.insert(p.id) {
            return Err(RingError::DuplicateNode(p.id));
        }
    }
    Ok(())
}

/// Where a node would be spliced into a ring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InsertionChoice {
    /// Tour position `i`: the node goes between `nodes[i]` and `nodes[i + 1]`.
    pub position: usize,
    /// `|z - x| + |z - y|`, the length of the two purchased links.
    pub mod_cost: f64,
    pub removed: LinkKey,
    pub removed_length: f64,
}

/// Adjacent pair minimizing the purchased length. Among equal purchased
/// lengths the longer removed edge wins (cheaper resulting ring), then the
/// smaller edge key.
pub fn best_insertion(ring: &Ring, z: &Point) -> InsertionChoice {
    let n = ring.nodes.len();
    let mut best: Option<InsertionChoice> = None;
    for i in 0..n {
        let x = &ring.nodes[i];
        let y = &ring.nodes[(i + 1) % n];
        let cand = InsertionChoice {
            position: i,
            mod_cost: distance(z, x) + distance(z, y),
            removed: LinkKey::new(x.id, y.id),
            removed_length: distance(x, y),
        };
        best = Some(match best {
            None => cand,
            Some(b) => {
                if better_insertion(&cand, &b) {
                    cand
                } else {
                    b
                }
            }
        });
    }
    best.expect("ring has edges")
}

fn better_insertion(a: &InsertionChoice, b: &InsertionChoice) -> bool {
    if !approx_eq(a.mod_cost, b.mod_cost, 0.0) {
        return a.mod_cost < b.mod_cost;
    }
    if !approx_eq(a.removed_length, b.removed_length, 0.0) {
        return a.removed_length > b.removed_length;
    }
    a.removed < b.removed
}

/// Connects `z` to the two adjacent ring nodes minimizing `|z-x| + |z-y|` and drops `(x, y)`.
pub fn insert_node(ring: &Ring, z: Point) -> Result<(Ring, f64), RingError> {
    if ring.contains(z.id) {
        return Err(RingError::DuplicateNode(z.id));
    }
    let choice = best_insertion(ring, &z);
    Ok((splice(ring, z, &choice), choice.mod_cost))
}

fn splice(ring: &Ring, z: Point, choice: &InsertionChoice) -> Ring {
    let mut nodes = ring.nodes.clone();
    nodes.insert(choice.position + 1, z);
    Ring {
        nodes,
        cost: ring.cost + choice.mod_cost - choice.removed_length,
    }
}

/// Greedy multi-node insertion: each round inserts the remaining node with the
/// globally smallest purchased length (ties to the smaller id).
pub fn insert_nodes_greedy(ring: &Ring, zs: &[Point]) -> Result<(Ring, f64), RingError> {
    let mut seen = BTreeSet::new();
    for z in zs {
        if ring.contains(z.id) || !seen.insert(z.id) {
            return Err(RingError::DuplicateNode(z.id));
        }
    }
    let mut remaining: Vec<Point> = zs.to_vec();
    remaining.sort_by_key(|p| p.id);
    let mut current = ring.clone();
    let mut total = 0.0;
    while !remaining.is_empty() {
        let mut pick: Option<(usize, InsertionChoice)> = None;
        for (i, z) in remaining.iter().enumerate() {
            let c = best_insertion(&current, z);
            match &pick {
                Some((_, b)) if !strictly_less(c.mod_cost, b.mod_cost) => {}
                _ => pick = Some((i, c)),
            }
        }
        let (i, choice) = pick.expect("non-empty");
        let z = remaining.remove(i);
        current = splice(&current, z, &choice);
        total += choice.mod_cost;
    }
    Ok((current, total))
}
