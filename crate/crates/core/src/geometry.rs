//! Locations, links, networks and the modification/inventory cost accounting.
//!
//! Link identity is the unordered pair of endpoint ids. A link that leaves the
//! network keeps its identity, so an inventoried link can be reused as soon as
//! both of its endpoints are part of the node set again. Cost is length.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stable node identifier, unique within a location pool.
pub type NodeId = u32;

/// Relative tolerance used for every cost comparison in the crate.
pub const REL_TOL: f64 = 1e-9;

/// `a` and `b` agree to within [`REL_TOL`] relative to `scale` (or their own magnitude).
pub fn approx_eq(a: f64, b: f64, scale: f64) -> bool {
    let mag = a.abs().max(b.abs()).max(scale.abs());
    (a - b).abs() <= REL_TOL * mag.max(f64::MIN_POSITIVE)
}

/// `a < b` by more than the relative tolerance.
pub fn strictly_less(a: f64, b: f64) -> bool {
    a < b && !approx_eq(a, b, 0.0)
}

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("node {0} appears more than once")]
    DuplicateNode(NodeId),
    #[error("node {0} has non-finite coordinates")]
    NonFinite(NodeId),
    #[error("link ({0}, {1}) references a node outside the network")]
    UnknownEndpoint(NodeId, NodeId),
    #[error("link ({0}, {0}) is a self loop")]
    SelfLoop(NodeId),
    #[error("link ({0}, {1}) has zero length")]
    ZeroLength(NodeId, NodeId),
    #[error("region dimensions must be positive, got {width} x {height}")]
    BadRegion { width: f64, height: f64 },
    #[error("point {id} at ({x}, {y}) lies outside the region")]
    OutsideRegion { id: NodeId, x: f64, y: f64 },
    #[error("location pool is empty")]
    EmptyPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(id: NodeId, x: f64, y: f64) -> Self {
        Self { id, x, y }
    }
}

/// Euclidean distance between two locations.
pub fn distance(p: &Point, q: &Point) -> f64 {
    let dx = p.x - q.x;
    let dy = p.y - q.y;
    (dx * dx + dy * dy).sqrt()
}

/// Axis-aligned rectangle `[0, width] x [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub width: f64,
    pub height: f64,
}

impl Region {
    pub fn new(width: f64, height: f64) -> Result<Self, GeometryError> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(GeometryError::BadRegion { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn diagonal(&self) -> f64 {
        (self.width * self.width + self.height * self.height).sqrt()
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.height
    }
}

impl Default for Region {
    fn default() -> Self {
        Self {
            width: 3000.0,
            height: 1500.0,
        }
    }
}

/// The set of potential network locations inside a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoolDocument", into = "PoolDocument")]
pub struct LocationPool {
    region: Region,
    points: Vec<Point>,
    #[serde(skip)]
    index: HashMap<NodeId, usize>,
}

#[derive(Serialize, Deserialize)]
struct PoolDocument {
    region: Region,
    points: Vec<Point>,
}

impl TryFrom<PoolDocument> for LocationPool {
    type Error = GeometryError;

    fn try_from(doc: PoolDocument) -> Result<Self, Self::Error> {
        Region::new(doc.region.width, doc.region.height)?;
        LocationPool::new(doc.region, doc.points)
    }
}

impl From<LocationPool> for PoolDocument {
    fn from(pool: LocationPool) -> Self {
        PoolDocument {
            region: pool.region,
            points: pool.points,
        }
    }
}

impl LocationPool {
    pub fn new(region: Region, points: Vec<Point>) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptyPool);
        }
        let mut index = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(GeometryError::NonFinite(p.id));
            }
            if !region.contains(p) {
                return Err(GeometryError::OutsideRegion {
                    id: p.id,
                    x: p.x,
                    y: p.y,
                });
            }
            if index.insert(p.id, i).is_some() {
                return Err(GeometryError::DuplicateNode(p.id));
            }
        }
        Ok(Self {
            region,
            points,
            index,
        })
    }

    /// `count` points drawn uniformly from the region, ids `0..count`.
    pub fn uniform<R: rand::Rng + ?Sized>(region: Region, count: usize, rng: &mut R) -> Self {
        let points = (0..count)
            .map(|i| {
                let x = rng.gen::<f64>() * region.width;
                let y = rng.gen::<f64>() * region.height;
                Point::new(i as NodeId, x, y)
            })
            .collect();
        Self::new(region, points).expect("generated pool is valid")
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points per unit area.
    pub fn density(&self) -> f64 {
        self.points.len() as f64 / self.region.area()
    }

    pub fn get(&self, id: NodeId) -> Option<&Point> {
        self.index.get(&id).map(|&i| &self.points[i])
    }

    pub fn lookup(&self, ids: &[NodeId]) -> Option<Vec<Point>> {
        ids.iter().map(|&id| self.get(id).copied()).collect()
    }
}

/// Canonical unordered endpoint pair, smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkKey(pub NodeId, pub NodeId);

impl LinkKey {
    pub fn new(a: NodeId, b: NodeId) -> Self {
        if a <= b {
            LinkKey(a, b)
        } else {
            LinkKey(b, a)
        }
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.0 == id || self.1 == id
    }
}

/// A link with its cached length. Equality and ordering use the key only.
#[derive(Debug, Clone, Copy)]
pub struct Link {
    pub key: LinkKey,
    pub length: f64,
}

impl Link {
    pub fn between(p: &Point, q: &Point) -> Result<Self, GeometryError> {
        if p.id == q.id {
            return Err(GeometryError::SelfLoop(p.id));
        }
        let length = distance(p, q);
        if length <= 0.0 {
            return Err(GeometryError::ZeroLength(p.id, q.id));
        }
        Ok(Self {
            key: LinkKey::new(p.id, q.id),
            length,
        })
    }
}

impl PartialEq for Link {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for Link {}

impl std::hash::Hash for Link {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.key.hash(state);
    }
}

/// Undirected network over located nodes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Network {
    nodes: BTreeMap<NodeId, Point>,
    links: BTreeMap<LinkKey, f64>,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_nodes(points: impl IntoIterator<Item = Point>) -> Result<Self, GeometryError> {
        let mut net = Self::new();
        for p in points {
            net.add_node(p)?;
        }
        Ok(net)
    }

    pub fn add_node(&mut self, p: Point) -> Result<(), GeometryError> {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(GeometryError::NonFinite(p.id));
        }
        if self.nodes.insert(p.id, p).is_some() {
            return Err(GeometryError::DuplicateNode(p.id));
        }
        Ok(())
    }

    /// Adds the link between two member nodes; returns `false` if it was already present.
    pub fn add_link(&mut self, a: NodeId, b: NodeId) -> Result<bool, GeometryError> {
        let (p, q) = match (self.nodes.get(&a), self.nodes.get(&b)) {
            (Some(p), Some(q)) => (p, q),
            _ => return Err(GeometryError::UnknownEndpoint(a, b)),
        };
        let link = Link::between(p, q)?;
        Ok(self.links.insert(link.key, link.length).is_none())
    }

    pub fn remove_link(&mut self, key: LinkKey) -> bool {
        self.links.remove(&key).is_some()
    }

    pub fn has_link(&self, key: LinkKey) -> bool {
        self.links.contains_key(&key)
    }

    pub fn has_node(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn node(&self, id: NodeId) -> Option<&Point> {
        self.nodes.get(&id)
    }

    /// Nodes in increasing id order.
    pub fn nodes(&self) -> impl ExactSizeIterator<Item = &Point> + '_ {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl ExactSizeIterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    /// Links in canonical key order.
    pub fn links(&self) -> impl ExactSizeIterator<Item = Link> + '_ {
        self.links
            .iter()
            .map(|(&key, &length)| Link { key, length })
    }

    pub fn link_keys(&self) -> BTreeSet<LinkKey> {
        self.links.keys().copied().collect()
    }

    pub fn link_length(&self, key: LinkKey) -> Option<f64> {
        self.links.get(&key).copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// Total link length.
    pub fn cost(&self) -> f64 {
        self.links.values().sum()
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.links.keys().filter(|k| k.contains(id)).count()
    }

    pub fn same_nodes(&self, other: &Network) -> bool {
        self.nodes.len() == other.nodes.len() && self.nodes.keys().eq(other.nodes.keys())
    }
}

/// Sum of link lengths; zero for a network without links.
pub fn network_cost(net: &Network) -> f64 {
    net.cost()
}

/// Purchased links that are not part of the current network.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Inventory {
    links: BTreeMap<LinkKey, f64>,
}

impl Inventory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_links(links: impl IntoIterator<Item = Link>) -> Self {
        Self {
            links: links.into_iter().map(|l| (l.key, l.length)).collect(),
        }
    }

    pub fn links(&self) -> impl ExactSizeIterator<Item = Link> + '_ {
        self.links
            .iter()
            .map(|(&key, &length)| Link { key, length })
    }

    pub fn contains(&self, key: LinkKey) -> bool {
        self.links.contains_key(&key)
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn value(&self) -> f64 {
        self.links.values().sum()
    }
}

/// Result of comparing a new design against the previous network and inventory.
#[derive(Debug, Clone, PartialEq)]
pub struct Modification {
    /// Links that must be bought.
    pub purchased: Vec<Link>,
    pub cost: f64,
    /// Previously owned links that the new design does not use.
    pub inventory: Inventory,
}

/// Purchased set is `new \ (prev ∪ inv)`, new inventory is `(prev ∪ inv) \ new`.
pub fn account_modification(prev: &Network, prev_inv: &Inventory, new: &Network) -> Modification {
    let purchased: Vec<Link> = new
        .links()
        .filter(|l| !prev.has_link(l.key) && !prev_inv.contains(l.key))
        .collect();
    let cost = purchased.iter().map(|l| l.length).sum();
    let owned = prev.links().chain(prev_inv.links());
    let inventory = Inventory::from_links(owned.filter(|l| !new.has_link(l.key)));
    Modification {
        purchased,
        cost,
        inventory,
    }
}

/// Costs of one environment `k >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub c_evo: f64,
    pub c_mod: f64,
    pub c_inv: f64,
    pub c_opt: f64,
}

/// Per-environment cost series of one evolution trace. `C_inv(0)` is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub c_evo0: f64,
    pub entries: Vec<LedgerEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum LedgerViolation {
    #[error("ledger has no entries")]
    Empty,
    #[error("recursive cost identity fails at environment {index}: expected {expected}, found {found}")]
    Recursive {
        index: usize,
        expected: f64,
        found: f64,
    },
    #[error("closed-form cost identity fails at environment {index}: expected {expected}, found {found}")]
    ClosedForm {
        index: usize,
        expected: f64,
        found: f64,
    },
}

impl CostLedger {
    pub fn new(c_evo0: f64) -> Self {
        Self {
            c_evo0,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }

    fn c_evo(&self, k: usize) -> f64 {
        if k == 0 {
            self.c_evo0
        } else {
            self.entries[k - 1].c_evo
        }
    }

    fn c_inv(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.entries[k - 1].c_inv
        }
    }

    /// Checks `C_evo(k) = C_evo(k-1) + C_mod(k) - [C_inv(k) - C_inv(k-1)]` for every
    /// environment and the closed form `C_evo(K) = C_evo(0) + Σ C_mod - C_inv(K)`.
    /// Environments are indexed from 1.
    pub fn verify(&self) -> Result<(), LedgerViolation> {
        if self.entries.is_empty() {
            return Err(LedgerViolation::Empty);
        }
        let mut purchased = 0.0;
        let mut scale = self.c_evo0.abs();
        for k in 1..=self.entries.len() {
            let e = &self.entries[k - 1];
            purchased += e.c_mod;
            let expected = self.c_evo(k - 1) + e.c_mod - (e.c_inv - self.c_inv(k - 1));
            let local = [self.c_evo(k - 1), e.c_mod, e.c_inv, self.c_inv(k - 1), e.c_evo]
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            scale = scale.max(local);
            if !approx_eq(expected, e.c_evo, local) {
                return Err(LedgerViolation::Recursive {
                    index: k,
                    expected,
                    found: e.c_evo,
                });
            }
        }
        let last = self.entries.len();
        let expected = self.c_evo0 + purchased - self.c_inv(last);
        let found = self.c_evo(last);
        if !approx_eq(expected, found, scale.max(purchased)) {
            return Err(LedgerViolation::ClosedForm {
                index: last,
                expected,
                found,
            });
        }
        Ok(())
    }
}

/// Free-function form of [`CostLedger::verify`].
pub fn verify_ledger(ledger: &CostLedger) -> Result<(), LedgerViolation> {
    ledger.verify()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Network {
        let pts = [
            Point::new(0, 0.0, 0.0),
            Point::new(1, 1.0, 0.0),
            Point::new(2, 1.0, 1.0),
            Point::new(3, 0.0, 1.0),
        ];
        let mut net = Network::with_nodes(pts).unwrap();
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
            net.add_link(a, b).unwrap();
        }
        net
    }

    #[test]
    fn distances() {
        let o = Point::new(0, 0.0, 0.0);
        assert_eq!(distance(&o, &Point::new(1, 3.0, 4.0)), 5.0);
        assert_eq!(distance(&Point::new(0, 1.0, 1.0), &Point::new(1, 1.0, 1.0)), 0.0);
        let d = distance(&o, &Point::new(1, 1.0, 1.0));
        assert!((d - std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn costs() {
        assert_eq!(network_cost(&square()), 4.0);
        assert_eq!(network_cost(&Network::new()), 0.0);
        let mut net = Network::with_nodes([
            Point::new(0, 0.0, 0.0),
            Point::new(1, 3.0, 0.0),
            Point::new(2, 3.0, 4.0),
        ])
        .unwrap();
        net.add_link(0, 1).unwrap();
        net.add_link(1, 2).unwrap();
        assert_eq!(network_cost(&net), 7.0);
    }

    #[test]
    fn link_rules() {
        let mut net = square();
        assert!(!net.add_link(1, 0).unwrap());
        assert_eq!(net.add_link(0, 0), Err(GeometryError::SelfLoop(0)));
        assert_eq!(net.add_link(0, 9), Err(GeometryError::UnknownEndpoint(0, 9)));
        assert_eq!(LinkKey::new(5, 2), LinkKey(2, 5));
    }

    #[test]
    fn region_and_pool() {
        let r = Region::default();
        assert_eq!(r.area(), 4.5e6);
        assert!((r.diagonal() - 3354.101966249684).abs() < 1e-9);
        assert!(Region::new(0.0, 1.0).is_err());
        let pool = LocationPool::new(r, vec![Point::new(4, 1.0, 1.0), Point::new(7, 2.0, 2.0)]).unwrap();
        assert_eq!(pool.get(7).unwrap().x, 2.0);
        assert!(pool.density() > 0.0);
        assert!(LocationPool::new(r, vec![Point::new(1, -1.0, 0.0)]).is_err());
        assert!(LocationPool::new(r, vec![Point::new(1, 1.0, 0.0), Point::new(1, 2.0, 0.0)]).is_err());
    }

    fn line_net(ids: &[(NodeId, NodeId)]) -> Network {
        let pts = (0..6).map(|i| Point::new(i, i as f64, (i * i) as f64 * 0.5));
        let mut net = Network::with_nodes(pts).unwrap();
        for &(a, b) in ids {
            net.add_link(a, b).unwrap();
        }
        net
    }

    #[test]
    fn modification_set_algebra() {
        // a=(0,1) b=(1,2) c=(2,3) d=(3,4) e=(4,5)
        let prev = line_net(&[(0, 1), (1, 2), (2, 3)]);
        let inv_net = line_net(&[(3, 4)]);
        let inv = Inventory::from_links(inv_net.links());
        let new = line_net(&[(0, 1), (1, 2), (3, 4), (4, 5)]);
        let m = account_modification(&prev, &inv, &new);
        let keys: Vec<_> = m.purchased.iter().map(|l| l.key).collect();
        assert_eq!(keys, vec![LinkKey(4, 5)]);
        assert_eq!(m.cost, new.link_length(LinkKey(4, 5)).unwrap());
        let inv_keys: Vec<_> = m.inventory.links().map(|l| l.key).collect();
        assert_eq!(inv_keys, vec![LinkKey(2, 3)]);

        let same = account_modification(&prev, &Inventory::new(), &prev);
        assert!(same.purchased.is_empty());
        assert_eq!(same.cost, 0.0);
        assert!(same.inventory.is_empty());

        let empty = line_net(&[]);
        let boot = line_net(&[(0, 1), (1, 2)]);
        let m = account_modification(&empty, &Inventory::new(), &boot);
        assert_eq!(m.purchased.len(), 2);
        assert_eq!(m.cost, boot.cost());
    }

    #[test]
    fn ledger_substitution() {
        let mut ledger = CostLedger::new(10.0);
        ledger.push(LedgerEntry {
            c_evo: 13.0,
            c_mod: 5.0,
            c_inv: 2.0,
            c_opt: 12.0,
        });
        assert_eq!(ledger.verify(), Ok(()));

        ledger.push(LedgerEntry {
            c_evo: 14.0,
            c_mod: 1.0,
            c_inv: 2.0,
            c_opt: 12.5,
        });
        assert!(verify_ledger(&ledger).is_ok());
        ledger.entries[1].c_mod += 1.0;
        match ledger.verify() {
            Err(LedgerViolation::Recursive { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(CostLedger::new(1.0).verify(), Err(LedgerViolation::Empty));
    }
}
