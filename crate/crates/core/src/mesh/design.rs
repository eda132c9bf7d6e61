//! Probabilistic clean-slate (OPT) and incremental (EVO) mesh design.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::acceptability::{check_acceptable, complete_graph_violation, Evaluator};
use super::graph::Graph;
use super::MeshError;
use crate::geometry::{
    account_modification, approx_eq, distance, strictly_less, Inventory, LinkKey, Network,
    Point, Region,
};
use crate::ring::tsp_heuristic;
use crate::rng;

/// Knobs shared by both design procedures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    pub delay_bound: f64,
    pub p_add: f64,
    pub p_del: f64,
    /// Consecutive non-improving iterations before a design call stops.
    pub stall_window: usize,
    pub max_iterations: usize,
    /// Improvement restarts of the TSP heuristic that seeds OPT.
    pub tsp_budget: usize,
}

impl DesignParams {
    pub const DELAY_FACTOR: f64 = 1.3;

    pub fn for_region(region: &Region) -> Self {
        Self::with_delay_bound(Self::DELAY_FACTOR * region.diagonal())
    }

    pub fn with_delay_bound(delay_bound: f64) -> Self {
        Self {
            delay_bound,
            p_add: 0.9,
            p_del: 0.9,
            stall_window: 10,
            max_iterations: 500,
            tsp_budget: 8,
        }
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let bad = |msg: String| Err(MeshError::InvalidParams(msg));
        if !(self.delay_bound > 0.0 && self.delay_bound.is_finite()) {
            return bad(format!("delay bound must be positive, got {}", self.delay_bound));
        }
        for (name, p) in [("p_add", self.p_add), ("p_del", self.p_del)] {
            if !(p > 0.0 && p <= 1.0) {
                return bad(format!("{name} must lie in (0, 1], got {p}"));
            }
        }
        if self.stall_window == 0 {
            return bad("stall window must be at least 1".into());
        }
        if self.max_iterations == 0 {
            return bad("max iterations must be at least 1".into());
        }
        Ok(())
    }
}

impl Default for DesignParams {
    fn default() -> Self {
        Self::for_region(&Region::default())
    }
}

/// What happens to links the evolved network stops using.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InventoryPolicy {
    /// Unused links are banked and can be reused for free later.
    Inventory,
    /// Purchased links are never removed.
    Ownership,
    /// Unused links are returned and lost.
    Leasing,
}

impl InventoryPolicy {
    pub const ALL: [InventoryPolicy; 3] = [
        InventoryPolicy::Inventory,
        InventoryPolicy::Ownership,
        InventoryPolicy::Leasing,
    ];
}

impl fmt::Display for InventoryPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InventoryPolicy::Inventory => "inventory",
            InventoryPolicy::Ownership => "ownership",
            InventoryPolicy::Leasing => "leasing",
        })
    }
}

impl FromStr for InventoryPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inventory" => Ok(InventoryPolicy::Inventory),
            "ownership" => Ok(InventoryPolicy::Ownership),
            "leasing" => Ok(InventoryPolicy::Leasing),
            other => Err(format!("unknown inventory policy `{other}`")),
        }
    }
}

fn sorted_points(points: &[Point]) -> Result<Vec<Point>, MeshError> {
    let mut pts = points.to_vec();
    pts.sort_by_key(|p| p.id);
    if let Some(w) = pts.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(MeshError::DuplicateNode(w[0].id));
    }
    if pts.len() < 3 {
        return Err(MeshError::TooFewNodes(pts.len()));
    }
    Ok(pts)
}

/// Every node pair as `(length, a, b)`, by increasing length then index pair.
fn all_pairs(g: &Graph) -> Vec<(f64, u32, u32)> {
    let n = g.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for a in 0..n {
        for b in (a + 1)..n {
            out.push((g.length(a, b), a as u32, b as u32));
        }
    }
    out.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    out
}

/// Links of `g` accepted by `keep`, by decreasing length (ties by index pair).
fn by_decreasing_length(g: &Graph, keep: impl Fn(usize, usize) -> bool) -> Vec<(usize, usize)> {
    let mut links: Vec<(usize, usize)> = g.edges().into_iter().filter(|&(a, b)| keep(a, b)).collect();
    links.sort_by(|x, y| g.length(y.0, y.1).total_cmp(&g.length(x.0, x.1)).then(x.cmp(y)));
    links
}

/// Addition phase: walk the complement by increasing length, adding each link
/// with probability `p_add`, until the network is acceptable.
fn addition_phase<R: Rng + ?Sized>(
    ev: &mut Evaluator,
    pairs: &[(f64, u32, u32)],
    p_add: f64,
    rng: &mut R,
) -> bool {
    if ev.check() {
        return true;
    }
    for &(_, a, b) in pairs {
        let (a, b) = (a as usize, b as usize);
        if ev.graph().has_edge(a, b) {
            continue;
        }
        if rng::coin(rng, p_add) && ev.add_edge(a, b) && ev.check() {
            return true;
        }
    }
    false
}

/// Deletion phase over a fixed scan order. The coin is drawn for every link so
/// the stream position does not depend on acceptability outcomes.
fn deletion_phase<R: Rng + ?Sized>(
    ev: &mut Evaluator,
    order: &[(usize, usize)],
    p_del: f64,
    rng: &mut R,
) {
    for &(a, b) in order {
        if rng::coin(rng, p_del) {
            ev.try_remove(a, b);
        }
    }
}

/// Precomputed state of one OPT design call.
struct OptSetup {
    ring: Graph,
    pairs: Vec<(f64, u32, u32)>,
}

impl OptSetup {
    fn new<R: Rng + ?Sized>(nodes: &[Point], params: &DesignParams, rng: &mut R) -> Result<Self, MeshError> {
        params.validate()?;
        let pts = sorted_points(nodes)?;
        let ring = tsp_heuristic(&pts, rng, params.tsp_budget).map_err(|_| MeshError::TooFewNodes(pts.len()))?;
        let mut g = Graph::new(pts);
        for key in ring.edges() {
            let a = g.index_of(key.0).expect("ring node");
            let b = g.index_of(key.1).expect("ring node");
            g.add_edge(a, b);
        }
        let pairs = all_pairs(&g);
        Ok(Self { ring: g, pairs })
    }

    fn iterate<R: Rng + ?Sized>(&self, params: &DesignParams, rng: &mut R) -> (Graph, bool) {
        let mut ev = Evaluator::new(self.ring.clone(), params.delay_bound);
        if !addition_phase(&mut ev, &self.pairs, params.p_add, rng) {
            return (ev.graph().clone(), false);
        }
        let order = by_decreasing_length(ev.graph(), |_, _| true);
        deletion_phase(&mut ev, &order, params.p_del, rng);
        (ev.graph().clone(), true)
    }
}

/// One OPT iteration: start from a heuristic TSP ring, add short links until
/// acceptable, then try to drop links from the longest down.
pub fn opt_iteration<R: Rng + ?Sized>(
    nodes: &[Point],
    params: &DesignParams,
    rng: &mut R,
) -> Result<(Network, bool), MeshError> {
    let setup = OptSetup::new(nodes, params, rng)?;
    let (g, found) = setup.iterate(params, rng);
    Ok((g.to_network(), found))
}

fn infeasible(points: &[Point], params: &DesignParams) -> Result<(), MeshError> {
    match complete_graph_violation(points, params.delay_bound) {
        Some(v) => Err(MeshError::NoAcceptableNetwork {
            iterations: 0,
            violation: Some(v),
        }),
        None => Ok(()),
    }
}

/// Stall-window driver shared by both procedures. `better(a, b)` says whether
/// candidate `a` strictly improves on the incumbent `b`.
fn drive<T>(
    params: &DesignParams,
    mut iterate: impl FnMut() -> Option<T>,
    better: impl Fn(&T, &T) -> bool,
) -> (Option<T>, usize) {
    let mut best: Option<T> = None;
    let mut stall = 0;
    let mut done = 0;
    while done < params.max_iterations {
        done += 1;
        let cand = iterate();
        match (cand, &best) {
            (Some(c), None) => {
                best = Some(c);
                stall = 0;
            }
            (Some(c), Some(b)) if better(&c, b) => {
                best = Some(c);
                stall = 0;
            }
            _ => {
                if best.is_some() {
                    stall += 1;
                }
            }
        }
        if best.is_some() && stall >= params.stall_window {
            break;
        }
    }
    (best, done)
}

/// Minimum-cost acceptable network found by repeated OPT iterations.
pub fn opt_design<R: Rng + ?Sized>(
    nodes: &[Point],
    params: &DesignParams,
    rng: &mut R,
) -> Result<Network, MeshError> {
    let setup = OptSetup::new(nodes, params, rng)?;
    infeasible(setup.ring.points(), params)?;
    let mut last = None;
    let (best, iterations) = drive(
        params,
        || {
            let (g, found) = setup.iterate(params, rng);
            if found {
                let cost = g.to_network().cost();
                Some((g, cost))
            } else {
                last = Some(g);
                None
            }
        },
        |a, b| strictly_less(a.1, b.1),
    );
    match best {
        Some((g, _)) => Ok(g.to_network()),
        None => Err(MeshError::NoAcceptableNetwork {
            iterations,
            violation: last.and_then(|g| check_acceptable(&g.to_network(), params.delay_bound).violation),
        }),
    }
}

/// Winning design of an EVO call.
#[derive(Debug, Clone, PartialEq)]
pub struct EvoOutcome {
    pub network: Network,
    /// Reusable inventory after this environment; empty unless the policy is `Inventory`.
    pub inventory: Inventory,
    pub mod_cost: f64,
    /// Previously owned links (network or inventory) that the new network does not use.
    pub released: Inventory,
    pub iterations: usize,
}

struct EvoSetup {
    attached: Graph,
    /// `true` for links of the previous network or the reused inventory.
    base: BTreeSet<(usize, usize)>,
    pairs: Vec<(f64, u32, u32)>,
    policy: InventoryPolicy,
}

impl EvoSetup {
    fn new(
        prev: &Network,
        prev_inv: &Inventory,
        new_nodes: &[Point],
        params: &DesignParams,
        policy: InventoryPolicy,
    ) -> Result<Self, MeshError> {
        params.validate()?;
        let mut pts: Vec<Point> = prev.nodes().copied().collect();
        for z in new_nodes {
            if prev.has_node(z.id) {
                return Err(MeshError::DuplicateNode(z.id));
            }
        }
        pts.extend_from_slice(new_nodes);
        let pts = sorted_points(&pts)?;
        let mut g = Graph::new(pts);
        let idx = |g: &Graph, key: LinkKey| -> Result<(usize, usize), MeshError> {
            let a = g.index_of(key.0).ok_or(MeshError::UnknownNode(key.0))?;
            let b = g.index_of(key.1).ok_or(MeshError::UnknownNode(key.1))?;
            Ok((a.min(b), a.max(b)))
        };
        let mut base = BTreeSet::new();
        for l in prev.links() {
            let (a, b) = idx(&g, l.key)?;
            g.add_edge(a, b);
            base.insert((a, b));
        }
        if policy == InventoryPolicy::Inventory {
            for l in prev_inv.links() {
                let (a, b) = idx(&g, l.key)?;
                g.add_edge(a, b);
                base.insert((a, b));
            }
        }
        let mut zs: Vec<usize> = new_nodes
            .iter()
            .map(|z| g.index_of(z.id).expect("just inserted"))
            .collect();
        zs.sort_unstable();
        attach_new_nodes(&mut g, &zs, policy);
        let pairs = all_pairs(&g);
        Ok(Self {
            attached: g,
            base,
            pairs,
            policy,
        })
    }

    fn iterate<R: Rng + ?Sized>(&self, params: &DesignParams, rng: &mut R) -> (Graph, bool) {
        let mut ev = Evaluator::new(self.attached.clone(), params.delay_bound);
        if !addition_phase(&mut ev, &self.pairs, params.p_add, rng) {
            return (ev.graph().clone(), false);
        }
        let fresh = by_decreasing_length(ev.graph(), |a, b| !self.base.contains(&(a, b)));
        deletion_phase(&mut ev, &fresh, params.p_del, rng);
        if self.policy != InventoryPolicy::Ownership {
            let owned = by_decreasing_length(ev.graph(), |a, b| self.base.contains(&(a, b)));
            deletion_phase(&mut ev, &owned, params.p_del, rng);
        }
        (ev.graph().clone(), true)
    }
}

/// Greedy attachment of new nodes. Each round connects the pending node with
/// the cheapest option: to both endpoints of an existing link (which is then
/// dropped) or, under `Ownership`, to its two nearest attached nodes.
/// Ties go to the smaller node id, then the smaller link.
fn attach_new_nodes(g: &mut Graph, zs: &[usize], policy: InventoryPolicy) {
    let mut pending: Vec<usize> = zs.to_vec();
    let mut attached: Vec<bool> = vec![true; g.len()];
    for &z in zs {
        attached[z] = false;
    }
    while !pending.is_empty() {
        let mut pick: Option<(f64, usize, (usize, usize))> = None;
        for (i, &z) in pending.iter().enumerate() {
            let option = match policy {
                InventoryPolicy::Ownership => two_nearest(g, z, &attached),
                _ => cheapest_link(g, z),
            };
            let Some((cost, pair)) = option else { continue };
            match pick {
                Some((c, _, _)) if !strictly_less(cost, c) => {}
                _ => pick = Some((cost, i, pair)),
            }
        }
        let Some((_, i, (x, y))) = pick else { break };
        let z = pending.remove(i);
        if policy != InventoryPolicy::Ownership {
            g.remove_edge(x, y);
        }
        g.add_edge(z, x);
        g.add_edge(z, y);
        attached[z] = true;
    }
}

fn cheapest_link(g: &Graph, z: usize) -> Option<(f64, (usize, usize))> {
    let pz = g.points()[z];
    let mut best: Option<(f64, (usize, usize))> = None;
    for (x, y) in g.edges() {
        let c = distance(&pz, &g.points()[x]) + distance(&pz, &g.points()[y]);
        match best {
            Some((b, _)) if !strictly_less(c, b) => {}
            _ => best = Some((c, (x, y))),
        }
    }
    best
}

fn two_nearest(g: &Graph, z: usize, attached: &[bool]) -> Option<(f64, (usize, usize))> {
    let mut near: Vec<(f64, usize)> = (0..g.len())
        .filter(|&w| attached[w])
        .map(|w| (g.length(z, w), w))
        .collect();
    if near.len() < 2 {
        return None;
    }
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (x, y) = (near[0].1, near[1].1);
    Some((near[0].0 + near[1].0, (x.min(y), x.max(y))))
}

fn outcome_parts(
    prev: &Network,
    prev_inv: &Inventory,
    net: &Network,
    policy: InventoryPolicy,
) -> (Inventory, f64, Inventory) {
    let owned_inv = if policy == InventoryPolicy::Inventory {
        prev_inv.clone()
    } else {
        Inventory::new()
    };
    let m = account_modification(prev, &owned_inv, net);
    let kept = if policy == InventoryPolicy::Inventory {
        m.inventory.clone()
    } else {
        Inventory::new()
    };
    (kept, m.cost, m.inventory)
}

/// One EVO iteration. Returns the network, the policy's inventory and whether
/// an acceptable network was found.
pub fn evo_iteration<R: Rng + ?Sized>(
    prev: &Network,
    prev_inv: &Inventory,
    new_nodes: &[Point],
    params: &DesignParams,
    policy: InventoryPolicy,
    rng: &mut R,
) -> Result<(Network, Inventory, bool), MeshError> {
    let setup = EvoSetup::new(prev, prev_inv, new_nodes, params, policy)?;
    let (g, found) = setup.iterate(params, rng);
    let net = g.to_network();
    let (inv, _, _) = outcome_parts(prev, prev_inv, &net, policy);
    Ok((net, inv, found))
}

/// Minimum modification-cost acceptable network over repeated EVO iterations,
/// ties broken by total cost.
pub fn evo_design<R: Rng + ?Sized>(
    prev: &Network,
    prev_inv: &Inventory,
    new_nodes: &[Point],
    params: &DesignParams,
    policy: InventoryPolicy,
    rng: &mut R,
) -> Result<EvoOutcome, MeshError> {
    let setup = EvoSetup::new(prev, prev_inv, new_nodes, params, policy)?;
    infeasible(setup.attached.points(), params)?;
    let owned_inv = if policy == InventoryPolicy::Inventory {
        prev_inv.clone()
    } else {
        Inventory::new()
    };
    let mut last = None;
    let (best, iterations) = drive(
        params,
        || {
            let (g, found) = setup.iterate(params, rng);
            if found {
                let net = g.to_network();
                let m = account_modification(prev, &owned_inv, &net);
                let cost = net.cost();
                Some((net, m.cost, cost))
            } else {
                last = Some(g);
                None
            }
        },
        |a, b| {
            if !approx_eq(a.1, b.1, a.2.max(b.2)) {
                a.1 < b.1
            } else {
                strictly_less(a.2, b.2)
            }
        },
    );
    let Some((network, _, _)) = best else {
        return Err(MeshError::NoAcceptableNetwork {
            iterations,
            violation: last.and_then(|g| check_acceptable(&g.to_network(), params.delay_bound).violation),
        });
    };
    let (inventory, mod_cost, released) = outcome_parts(prev, prev_inv, &network, policy);
    Ok(EvoOutcome {
        network,
        inventory,
        mod_cost,
        released,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::NodeId;
    use crate::mesh::is_acceptable;

    fn pts(coords: &[(f64, f64)]) -> Vec<Point> {
        coords
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Point::new(i as NodeId, x, y))
            .collect()
    }

    fn exact(d: f64) -> DesignParams {
        DesignParams {
            p_add: 1.0,
            p_del: 1.0,
            ..DesignParams::with_delay_bound(d)
        }
    }

    #[test]
    fn params_validation() {
        assert!(DesignParams::default().validate().is_ok());
        let d = DesignParams::default();
        assert!((d.delay_bound - 1.3 * 3000f64.hypot(1500.0)).abs() < 1e-9);
        assert!(DesignParams { p_add: 0.0, ..d }.validate().is_err());
        assert!(DesignParams { p_del: 1.5, ..d }.validate().is_err());
        assert!(DesignParams { stall_window: 0, ..d }.validate().is_err());
        assert!(DesignParams { delay_bound: -1.0, ..d }.validate().is_err());
    }

    #[test]
    fn square_opt_is_ring() {
        let nodes = pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let mut r = rng::seeded(1);
        let (net, found) = opt_iteration(&nodes, &exact(100.0), &mut r).unwrap();
        assert!(found);
        assert_eq!(net.link_count(), 4);
        assert_eq!(net.cost(), 4.0);
        let best = opt_design(&nodes, &exact(100.0), &mut r).unwrap();
        assert_eq!(best.cost(), 4.0);
    }

    #[test]
    fn infeasible_bound() {
        let nodes = pts(&[(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)]);
        let mut r = rng::seeded(1);
        let (_, found) = opt_iteration(&nodes, &exact(5.0), &mut r).unwrap();
        assert!(!found);
        match opt_design(&nodes, &exact(5.0), &mut r) {
            Err(MeshError::NoAcceptableNetwork { violation: Some(v), .. }) => {
                assert_eq!(v.reason, crate::mesh::ViolationReason::PrimaryDelay)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn opt_replay() {
        let mut r = rng::seeded(5);
        let region = Region::default();
        let pool = crate::geometry::LocationPool::uniform(region, 14, &mut r);
        let params = DesignParams::for_region(&region);
        let a = opt_design(pool.points(), &params, &mut rng::seeded(9)).unwrap();
        let b = opt_design(pool.points(), &params, &mut rng::seeded(9)).unwrap();
        assert_eq!(a, b);
        assert!(is_acceptable(&a, &params).acceptable);
    }

    #[test]
    fn evo_no_new_nodes_is_free() {
        let nodes = pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let mut prev = Network::with_nodes(nodes).unwrap();
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
            prev.add_link(a, b).unwrap();
        }
        for policy in InventoryPolicy::ALL {
            let out = evo_design(&prev, &Inventory::new(), &[], &exact(100.0), policy, &mut rng::seeded(2)).unwrap();
            assert_eq!(out.mod_cost, 0.0);
            assert_eq!(out.network, prev);
        }
    }

    #[test]
    fn evo_splice_and_policies() {
        let nodes = pts(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)]);
        let mut prev = Network::with_nodes(nodes).unwrap();
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
            prev.add_link(a, b).unwrap();
        }
        let z = Point::new(4, 1.0, -0.2);
        let params = exact(100.0);
        let inv = evo_design(&prev, &Inventory::new(), &[z], &params, InventoryPolicy::Inventory, &mut rng::seeded(3)).unwrap();
        let splice = 2.0 * (1.0f64 + 0.04).sqrt();
        assert!((inv.mod_cost - splice).abs() < 1e-9);
        assert!(!inv.network.has_link(LinkKey::new(0, 1)));
        assert_eq!(inv.inventory.len(), 1);

        let lease = evo_design(&prev, &Inventory::new(), &[z], &params, InventoryPolicy::Leasing, &mut rng::seeded(3)).unwrap();
        assert!(lease.inventory.is_empty());
        assert_eq!(lease.released.len(), 1);

        let own = evo_design(&prev, &Inventory::new(), &[z], &params, InventoryPolicy::Ownership, &mut rng::seeded(3)).unwrap();
        assert!(prev.link_keys().is_subset(&own.network.link_keys()));
        assert!(own.inventory.is_empty());
    }

    #[test]
    fn ownership_attaches_to_nearest() {
        let mut g = Graph::new(pts(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0), (0.5, 0.6)]));
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
            g.add_edge(a, b);
        }
        attach_new_nodes(&mut g, &[4], InventoryPolicy::Ownership);
        assert!(g.has_edge(4, 0) && g.has_edge(4, 1) || g.has_edge(4, 0) && g.has_edge(4, 3));
        assert_eq!(g.edges().len(), 6);
    }
}
