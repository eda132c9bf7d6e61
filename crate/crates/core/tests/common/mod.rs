//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use netevo::geometry::{distance, LinkKey, Network, NodeId, Point};
use rand::Rng;

pub fn random_points<R: Rng>(rng: &mut R, n: usize, width: f64, height: f64) -> Vec<Point> {
    let mut pts: Vec<Point> = Vec::with_capacity(n);
    while pts.len() < n {
        let p = Point::new(pts.len() as NodeId, rng.gen::<f64>() * width, rng.gen::<f64>() * height);
        if pts.iter().all(|q| distance(&p, q) > 1e-3 * width) {
            pts.push(p);
        }
    }
    pts
}


pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|a| ((a + 1)..n).map(move |b| (a, b))).collect()
}

/// Network over `points` with the links selected by the bits of `mask`, in `all_pairs` order.
pub fn masked_network(points: &[Point], mask: u64) -> Network {
    let mut net = Network::with_nodes(points.iter().copied()).unwrap();
    for (bit, (a, b)) in all_pairs(points.len()).into_iter().enumerate() {
        if mask >> bit & 1 == 1 {
            net.add_link(points[a].id, points[b].id).unwrap();
        }
    }
    net
}

/// Every simple path from `u` to `v` with its delay.
pub fn simple_paths(net: &Network, u: NodeId, v: NodeId) -> Vec<(Vec<NodeId>, f64)> {
    let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for LinkKey(a, b) in net.link_keys() {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    let mut out = Vec::new();
    let mut path = vec![u];
    walk(net, &adj, v, &mut path, 0.0, &mut out);
    out
}

fn walk(
    net: &Network,
    adj: &BTreeMap<NodeId, Vec<NodeId>>,
    target: NodeId,
    path: &mut Vec<NodeId>,
    delay: f64,
    out: &mut Vec<(Vec<NodeId>, f64)>,
) {
    let last = *path.last().unwrap();
    if last == target {
        out.push((path.clone(), delay));
        return;
    }
    for &next in adj.get(&last).map(Vec::as_slice).unwrap_or(&[]) {
        if path.contains(&next) {
            continue;
        }
        let d = distance(net.node(last).unwrap(), net.node(next).unwrap());
        path.push(next);
        walk(net, adj, target, path, delay + d, out);
        path.pop();
    }
}

fn interior(p: &[NodeId]) -> &[NodeId] {
    if p.len() <= 2 {
        &[]
    } else {
        &p[1..p.len() - 1]
    }
}

/// Primary and secondary delays of one pair by path enumeration.
pub fn brute_pair(net: &Network, u: NodeId, v: NodeId) -> (Option<f64>, Option<f64>) {
    let paths = simple_paths(net, u, v);
    let primary = paths.iter().min_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then(a.0.len().cmp(&b.0.len()))
            .then(a.0.cmp(&b.0))
    });
    let Some((p, pd)) = primary else {
        return (None, None);
    };
    let secondary = paths
        .iter()
        .filter(|(q, _)| q != p && interior(q).iter().all(|w| !interior(p).contains(w)))
        .map(|(_, d)| *d)
        .min_by(f64::total_cmp);
    (Some(*pd), secondary)
}

pub fn brute_acceptable(net: &Network, bound: f64) -> bool {
    let ids: Vec<NodeId> = net.node_ids().collect();
    for (i, &u) in ids.iter().enumerate() {
        for &v in &ids[i + 1..] {
            match brute_pair(net, u, v) {
                (Some(p), Some(s)) if p <= bound && s <= bound => {}
                _ => return false,
            }
        }
    }
    true
}

/// Cheapest acceptable network over every link subset.
pub fn brute_opt(points: &[Point], bound: f64) -> Option<f64> {
    let m = all_pairs(points.len()).len();
    (0..1u64 << m)
        .map(|mask| masked_network(points, mask))
        .filter(|net| brute_acceptable(net, bound))
        .map(|net| net.cost())
        .min_by(f64::total_cmp)
}

/// Cheapest purchased length of a single-node insertion over every adjacent pair.
pub fn brute_insertion(tour: &[Point], z: &Point) -> f64 {
    (0..tour.len())
        .map(|i| distance(z, &tour[i]) + distance(z, &tour[(i + 1) % tour.len()]))
        .fold(f64::INFINITY, f64::min)
}

pub fn region_diagonal(points: &[Point]) -> f64 {
    let (mut w, mut h) = (0.0f64, 0.0f64);
    for p in points {
        w = w.max(p.x);
        h = h.max(p.y);
    }
    w.hypot(h)
}
