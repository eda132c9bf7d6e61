//! Comparison metrics between optimized and evolved designs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expansion::ExpansionModel;
use crate::geometry::{LinkKey, Network, NodeId};
use crate::mesh::graph::{Graph, Restrict, Search};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("{0} must be positive")]
    ZeroDenominator(&'static str),
    #[error("networks are defined over different node sets")]
    NodeSetMismatch,
    #[error("nodes {0} and {1} are not connected")]
    Disconnected(NodeId, NodeId),
    #[error("network has no nodes")]
    NoNodes,
    #[error("network has no links")]
    NoLinks,
    #[error("network needs at least two nodes")]
    TooSmall,
}

fn positive(value: f64, what: &'static str) -> Result<f64, MetricsError> {
    if value > 0.0 {
        Ok(value)
    } else {
        Err(MetricsError::ZeroDenominator(what))
    }
}

/// `c_evo / c_opt - 1`.
pub fn cost_overhead(c_evo: f64, c_opt: f64) -> Result<f64, MetricsError> {
    Ok(c_evo / positive(c_opt, "optimized cost")? - 1.0)
}

/// `1 - c_mod / c_opt`. Negative when a clean-slate redesign would be cheaper than the modification.
pub fn evolvability(c_mod: f64, c_opt: f64) -> Result<f64, MetricsError> {
    Ok(1.0 - c_mod / positive(c_opt, "optimized cost")?)
}

/// `c_inv / c_evo`.
pub fn inventory_overhead(c_inv: f64, c_evo: f64) -> Result<f64, MetricsError> {
    Ok(c_inv / positive(c_evo, "evolved cost")?)
}

/// Jaccard coefficient of the two link sets; two empty link sets count as identical.
pub fn topological_similarity(a: &Network, b: &Network) -> Result<f64, MetricsError> {
    if !a.same_nodes(b) {
        return Err(MetricsError::NodeSetMismatch);
    }
    let ka = a.link_keys();
    let kb = b.link_keys();
    let union = ka.union(&kb).count();
    if union == 0 {
        return Ok(1.0);
    }
    Ok(ka.intersection(&kb).count() as f64 / union as f64)
}

/// Primary path of every unordered pair `(u, v)`, `u < v`, as index sequences
/// rooted at `u`, plus the delay.
fn primaries(g: &Graph) -> Result<Vec<(Vec<u32>, f64)>, MetricsError> {
    let n = g.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    let mut s = Search::new();
    for a in 0..n {
        s.run(g, a, Restrict::default());
        for b in (a + 1)..n {
            let p = s.path_to(b).ok_or(MetricsError::Disconnected(g.id(a), g.id(b)))?;
            out.push((p, s.dist[b]));
        }
    }
    Ok(out)
}

fn pair_count(n: usize) -> Result<f64, MetricsError> {
    if n < 2 {
        return Err(MetricsError::TooSmall);
    }
    Ok((n * (n - 1) / 2) as f64)
}

/// Fraction of all unordered pairs whose primary path passes through each node
/// as an interior node.
pub fn node_betweenness(net: &Network) -> Result<BTreeMap<NodeId, f64>, MetricsError> {
    let g = Graph::from_network(net);
    let pairs = pair_count(g.len())?;
    let mut counts = vec![0usize; g.len()];
    for (p, _) in primaries(&g)? {
        for &w in &p[1..p.len() - 1] {
            counts[w as usize] += 1;
        }
    }
    Ok(counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (g.id(i), c as f64 / pairs))
        .collect())
}

/// Fraction of all unordered pairs whose primary path uses each link.
pub fn link_betweenness(net: &Network) -> Result<BTreeMap<LinkKey, f64>, MetricsError> {
    let g = Graph::from_network(net);
    let pairs = pair_count(g.len())?;
    let mut counts: BTreeMap<LinkKey, usize> = net.link_keys().into_iter().map(|k| (k, 0)).collect();
    for (p, _) in primaries(&g)? {
        for w in p.windows(2) {
            *counts
                .get_mut(&g.key(w[0] as usize, w[1] as usize))
                .expect("path uses network links") += 1;
        }
    }
    Ok(counts.into_iter().map(|(k, c)| (k, c as f64 / pairs)).collect())
}

/// Mean of [`node_betweenness`] over all nodes.
pub fn mean_node_betweenness(net: &Network) -> Result<f64, MetricsError> {
    let bc = node_betweenness(net)?;
    Ok(bc.values().sum::<f64>() / bc.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeStatistics {
    /// Degree of every node, by node id.
    pub degrees: BTreeMap<NodeId, usize>,
    /// Number of nodes per degree value.
    pub histogram: BTreeMap<usize, usize>,
    /// Population skewness `m3 / m2^1.5`; zero when all degrees are equal.
    pub skewness: f64,
    pub fraction_degree_8_plus: f64,
    pub fraction_degree_2: f64,
}

pub fn degree_statistics(net: &Network) -> Result<DegreeStatistics, MetricsError> {
    let n = net.node_count();
    if n == 0 {
        return Err(MetricsError::NoNodes);
    }
    let degrees: BTreeMap<NodeId, usize> = net.node_ids().map(|id| (id, net.degree(id))).collect();
    let mut histogram = BTreeMap::new();
    for &d in degrees.values() {
        *histogram.entry(d).or_insert(0) += 1;
    }
    let nf = n as f64;
    let mean = degrees.values().map(|&d| d as f64).sum::<f64>() / nf;
    let (m2, m3) = degrees.values().fold((0.0, 0.0), |(m2, m3), &d| {
        let c = d as f64 - mean;
        (m2 + c * c / nf, m3 + c * c * c / nf)
    });
    let skewness = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    let count = |pred: &dyn Fn(usize) -> bool| degrees.values().filter(|&&d| pred(d)).count() as f64 / nf;
    Ok(DegreeStatistics {
        skewness,
        fraction_degree_8_plus: count(&|d| d >= 8),
        fraction_degree_2: count(&|d| d == 2),
        degrees,
        histogram,
    })
}

fn mean_primary_delay(net: &Network) -> Result<f64, MetricsError> {
    let g = Graph::from_network(net);
    let pairs = pair_count(g.len())?;
    Ok(primaries(&g)?.iter().map(|(_, d)| d).sum::<f64>() / pairs)
}

/// Mean primary delay of `evo` over that of `opt`, both over all unordered pairs.
pub fn primary_delay_ratio(evo: &Network, opt: &Network) -> Result<f64, MetricsError> {
    if !evo.same_nodes(opt) {
        return Err(MetricsError::NodeSetMismatch);
    }
    let opt_delay = mean_primary_delay(opt)?;
    Ok(mean_primary_delay(evo)? / positive(opt_delay, "optimized mean delay")?)
}

pub fn average_link_length(net: &Network) -> Result<f64, MetricsError> {
    if net.link_count() == 0 {
        return Err(MetricsError::NoLinks);
    }
    Ok(net.cost() / net.link_count() as f64)
}

/// One results-file row: a repetition at one environment.
///
/// Robustness columns (`mean_bc_*`, `delay_ratio`, `avg_len_*`, `skew_*`) are
/// left empty when they were not computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub run: usize,
    pub k: usize,
    pub n: usize,
    pub model: ExpansionModel,
    pub policy: String,
    pub c_opt: f64,
    pub c_evo: f64,
    pub c_mod: f64,
    pub c_inv: f64,
    pub v: f64,
    pub e: f64,
    pub r: f64,
    pub t: f64,
    pub mean_bc_opt: Option<f64>,
    pub mean_bc_evo: Option<f64>,
    pub delay_ratio: Option<f64>,
    pub avg_len_opt: Option<f64>,
    pub avg_len_evo: Option<f64>,
    pub skew_opt: Option<f64>,
    pub skew_evo: Option<f64>,
}

impl MetricsRecord {
    pub const COLUMNS: [&'static str; 20] = [
        "run", "k", "n", "model", "policy", "c_opt", "c_evo", "c_mod", "c_inv", "v", "e", "r", "t",
        "mean_bc_opt", "mean_bc_evo", "delay_ratio", "avg_len_opt", "avg_len_evo", "skew_opt",
        "skew_evo",
    ];
}

/// Inputs for one [`MetricsRecord`].
pub struct RecordInput<'a> {
    pub run: usize,
    pub k: usize,
    pub model: ExpansionModel,
    pub policy: &'a str,
    pub opt: &'a Network,
    pub evo: &'a Network,
    pub c_mod: f64,
    /// Ledger inventory term.
    pub c_inv: f64,
    /// Value of links that remain available for reuse.
    pub reusable: f64,
    pub robustness: bool,
}

pub fn metrics_record(input: RecordInput<'_>) -> Result<MetricsRecord, MetricsError> {
    let c_opt = input.opt.cost();
    let c_evo = input.evo.cost();
    let mut rec = MetricsRecord {
        run: input.run,
        k: input.k,
        n: input.evo.node_count(),
        model: input.model,
        policy: input.policy.to_string(),
        c_opt,
        c_evo,
        c_mod: input.c_mod,
        c_inv: input.c_inv,
        v: cost_overhead(c_evo, c_opt)?,
        e: evolvability(input.c_mod, c_opt)?,
        r: inventory_overhead(input.reusable, c_evo)?,
        t: topological_similarity(input.opt, input.evo)?,
        mean_bc_opt: None,
        mean_bc_evo: None,
        delay_ratio: None,
        avg_len_opt: None,
        avg_len_evo: None,
        skew_opt: None,
        skew_evo: None,
    };
    if input.robustness {
        rec.mean_bc_opt = Some(mean_node_betweenness(input.opt)?);
        rec.mean_bc_evo = Some(mean_node_betweenness(input.evo)?);
        rec.delay_ratio = Some(primary_delay_ratio(input.evo, input.opt)?);
        rec.avg_len_opt = Some(average_link_length(input.opt)?);
        rec.avg_len_evo = Some(average_link_length(input.evo)?);
        rec.skew_opt = Some(degree_statistics(input.opt)?.skewness);
        rec.skew_evo = Some(degree_statistics(input.evo)?.skewness);
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    fn net(points: &[(f64, f64)], links: &[(NodeId, NodeId)]) -> Network {
        let pts = points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Point::new(i as NodeId, x, y));
        let mut n = Network::with_nodes(pts).unwrap();
        for &(a, b) in links {
            n.add_link(a, b).unwrap();
        }
        n
    }

    const SQUARE: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];

    #[test]
    fn ratios() {
        assert_eq!(cost_overhead(5.0, 5.0).unwrap(), 0.0);
        assert!((cost_overhead(1.8, 1.0).unwrap() - 0.8).abs() < 1e-12);
        assert!((cost_overhead(1.25, 1.0).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(evolvability(0.0, 3.0).unwrap(), 1.0);
        assert_eq!(evolvability(3.0, 3.0).unwrap(), 0.0);
        assert_eq!(evolvability(6.0, 3.0).unwrap(), -1.0);
        assert_eq!(inventory_overhead(0.0, 2.0).unwrap(), 0.0);
        assert_eq!(inventory_overhead(2.0, 2.0).unwrap(), 1.0);
        assert!(cost_overhead(1.0, 0.0).is_err());
        assert!(evolvability(1.0, 0.0).is_err());
        assert!(inventory_overhead(1.0, 0.0).is_err());
    }

    #[test]
    fn jaccard() {
        let a = net(&SQUARE, &[(0, 1), (1, 2), (2, 3)]);
        let b = net(&SQUARE, &[(1, 2), (2, 3), (3, 0)]);
        assert_eq!(topological_similarity(&a, &b).unwrap(), 0.5);
        assert_eq!(topological_similarity(&a, &a).unwrap(), 1.0);
        let c = net(&SQUARE, &[(3, 0)]);
        assert_eq!(topological_similarity(&a, &c).unwrap(), 0.0);
        let e = net(&SQUARE, &[]);
        assert_eq!(topological_similarity(&e, &e).unwrap(), 1.0);
        let tri = net(&SQUARE[..3], &[]);
        assert_eq!(topological_similarity(&a, &tri), Err(MetricsError::NodeSetMismatch));
    }

    #[test]
    fn betweenness_small() {
        let tri = net(&[(0.0, 0.0), (1.0, 0.0), (0.5, 1.0)], &[(0, 1), (1, 2), (2, 0)]);
        assert!(node_betweenness(&tri).unwrap().values().all(|&v| v == 0.0));
        assert!(link_betweenness(&tri).unwrap().values().all(|&v| (v - 1.0 / 3.0).abs() < 1e-12));

        let line = net(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)], &[(0, 1), (1, 2)]);
        let bc = node_betweenness(&line).unwrap();
        assert!((bc[&1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(bc[&0], 0.0);
        let lbc = link_betweenness(&line).unwrap();
        assert!(lbc.values().all(|&v| (v - 2.0 / 3.0).abs() < 1e-12));

        // 0-2 goes through 1, 1-3 goes through 0
        let cyc = net(&SQUARE, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let bc = node_betweenness(&cyc).unwrap();
        assert_eq!(bc.values().copied().collect::<Vec<_>>(), vec![1.0 / 6.0, 1.0 / 6.0, 0.0, 0.0]);

        let split = net(&[(0.0, 0.0), (1.0, 0.0), (5.0, 0.0)], &[(0, 1)]);
        assert_eq!(node_betweenness(&split), Err(MetricsError::Disconnected(0, 2)));
    }

    #[test]
    fn degrees() {
        let ring = net(&SQUARE, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let s = degree_statistics(&ring).unwrap();
        assert_eq!(s.skewness, 0.0);
        assert_eq!(s.fraction_degree_2, 1.0);
        assert_eq!(s.fraction_degree_8_plus, 0.0);

        let star = net(
            &[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)],
            &[(0, 1), (0, 2), (0, 3), (0, 4)],
        );
        let s = degree_statistics(&star).unwrap();
        assert_eq!(s.degrees.values().copied().collect::<Vec<_>>(), vec![4, 1, 1, 1, 1]);
        // mean 1.6, m2 = 1.44, m3 = 1.728 -> 1.728 / 1.728 = 1.5
        assert!((s.skewness - 1.5).abs() < 1e-12);
        assert_eq!(s.histogram[&1], 4);
    }

    #[test]
    fn delay_and_lengths() {
        let ring = net(&SQUARE, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        assert_eq!(primary_delay_ratio(&ring, &ring).unwrap(), 1.0);
        let mut chord = ring.clone();
        chord.add_link(0, 2).unwrap();
        assert!(primary_delay_ratio(&chord, &ring).unwrap() < 1.0);
        assert_eq!(average_link_length(&ring).unwrap(), 1.0);
        let pair = net(&[(0.0, 0.0), (3.0, 0.0), (3.0, 4.0)], &[(0, 1), (1, 2)]);
        assert_eq!(average_link_length(&pair).unwrap(), 3.5);
        assert_eq!(average_link_length(&net(&SQUARE, &[])), Err(MetricsError::NoLinks));
    }
}
