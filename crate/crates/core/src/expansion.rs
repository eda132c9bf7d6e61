//! Which locations join the network at each environment.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{distance, strictly_less, LocationPool, NodeId, Point};
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum ExpansionError {
    #[error("location pool exhausted: requested {requested}, only {available} unused locations")]
    PoolExhausted { requested: usize, available: usize },
    #[error("gradual expansion needs at least one existing node")]
    NoAnchor,
    #[error("expansion factor needs a positive prior size")]
    ZeroSize,
    #[error("expansion plan has no steps")]
    NoSteps,
    #[error("expansion step {0} adds no nodes")]
    EmptyStep(usize),
    #[error("node {0} is not part of the pool")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "lowercase")]
pub enum ExpansionModel {
    Random,
    Gradual,
}

impl fmt::Display for ExpansionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExpansionModel::Random => "random",
            ExpansionModel::Gradual => "gradual",
        })
    }
}

impl FromStr for ExpansionModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(ExpansionModel::Random),
            "gradual" => Ok(ExpansionModel::Gradual),
            other => Err(format!("unknown expansion model `{other}`")),
        }
    }
}

/// `rho = (n + m) / n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionFactor {
    pub n: usize,
    pub m: usize,
    pub rho: f64,
}

pub fn expansion_factor(n: usize, m: usize) -> Result<ExpansionFactor, ExpansionError> {
    if n == 0 {
        return Err(ExpansionError::ZeroSize);
    }
    Ok(ExpansionFactor {
        n,
        m,
        rho: (n + m) as f64 / n as f64,
    })
}

/// Number of added nodes that takes a network of `n` nodes to `floor(rho * n)`.
pub fn added_for_factor(n: usize, rho: f64) -> usize {
    // guard against 1.15 * 20 = 22.999999...
    let target = (rho * n as f64 + 1e-9).floor() as usize;
    target.saturating_sub(n)
}

/// Growth schedule of one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionPlan {
    pub model: ExpansionModel,
    pub initial_size: usize,
    pub step_counts: Vec<usize>,
    pub seed: u64,
}

impl ExpansionPlan {
    pub fn validate(&self, pool: &LocationPool) -> Result<(), ExpansionError> {
        if self.step_counts.is_empty() {
            return Err(ExpansionError::NoSteps);
        }
        if let Some(i) = self.step_counts.iter().position(|&c| c == 0) {
            return Err(ExpansionError::EmptyStep(i));
        }
        let total = self.initial_size + self.step_counts.iter().sum::<usize>();
        if total > pool.len() {
            return Err(ExpansionError::PoolExhausted {
                requested: total,
                available: pool.len(),
            });
        }
        Ok(())
    }

    /// Node sets of every environment, starting with the initial set.
    pub fn realize(&self, pool: &LocationPool) -> Result<Vec<Vec<NodeId>>, ExpansionError> {
        self.validate(pool)?;
        let mut rng = rng::seeded(self.seed);
        let initial = initial_nodes(pool, self.model, self.initial_size, &mut rng)?;
        let mut current: BTreeSet<NodeId> = initial.iter().copied().collect();
        let mut out = vec![initial];
        for &count in &self.step_counts {
            let added = step(pool, &current, count, self.model, &mut rng)?;
            current.extend(added.iter().copied());
            let mut all = out.last().cloned().unwrap_or_default();
            all.extend(added);
            out.push(all);
        }
        Ok(out)
    }
}

fn unused(pool: &LocationPool, current: &BTreeSet<NodeId>) -> Vec<Point> {
    let mut free: Vec<Point> = pool
        .points()
        .iter()
        .filter(|p| !current.contains(&p.id))
        .copied()
        .collect();
    free.sort_by_key(|p| p.id);
    free
}

/// `count` locations drawn uniformly without replacement from the unused part of the pool.
pub fn random_step<R: Rng + ?Sized>(
    pool: &LocationPool,
    current: &BTreeSet<NodeId>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<NodeId>, ExpansionError> {
    let mut free = unused(pool, current);
    if count > free.len() {
        return Err(ExpansionError::PoolExhausted {
            requested: count,
            available: free.len(),
        });
    }
    // partial Fisher-Yates over the id-sorted candidates
    for i in 0..count {
        let j = i + rng::index(rng, free.len() - i);
        free.swap(i, j);
    }
    Ok(free[..count].iter().map(|p| p.id).collect())
}

/// Repeatedly picks the unused location closest to the current nodes or to
/// the locations picked so far. Ties go to the smallest id.
pub fn gradual_step(
    pool: &LocationPool,
    current: &BTreeSet<NodeId>,
    count: usize,
) -> Result<Vec<NodeId>, ExpansionError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if current.is_empty() {
        return Err(ExpansionError::NoAnchor);
    }
    let anchors: Vec<Point> = current
        .iter()
        .map(|id| pool.get(*id).copied().ok_or(ExpansionError::UnknownNode(*id)))
        .collect::<Result<_, _>>()?;
    let free = unused(pool, current);
    if count > free.len() {
        return Err(ExpansionError::PoolExhausted {
            requested: count,
            available: free.len(),
        });
    }
    let mut nearest: Vec<f64> = free
        .iter()
        .map(|c| {
            anchors
                .iter()
                .map(|a| distance(a, c))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut taken = vec![false; free.len()];
    let mut order = Vec::with_capacity(count);
    for _ in 0..count {
        let mut best: Option<usize> = None;
        for i in 0..free.len() {
            if taken[i] {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(b) if strictly_less(nearest[i], nearest[b]) => best = Some(i),
                _ => {}
            }
        }
        let b = best.expect("count checked against free locations");
        taken[b] = true;
        order.push(free[b].id);
        let picked = free[b];
        for i in 0..free.len() {
            if !taken[i] {
                nearest[i] = nearest[i].min(distance(&picked, &free[i]));
            }
        }
    }
    Ok(order)
}

/// One expansion step under `model`.
pub fn step<R: Rng + ?Sized>(
    pool: &LocationPool,
    current: &BTreeSet<NodeId>,
    count: usize,
    model: ExpansionModel,
    rng: &mut R,
) -> Result<Vec<NodeId>, ExpansionError> {
    match model {
        ExpansionModel::Random => random_step(pool, current, count, rng),
        ExpansionModel::Gradual => gradual_step(pool, current, count),
    }
}

/// First node uniformly at random, the rest by the active model.
pub fn initial_nodes<R: Rng + ?Sized>(
    pool: &LocationPool,
    model: ExpansionModel,
    size: usize,
    rng: &mut R,
) -> Result<Vec<NodeId>, ExpansionError> {
    if size == 0 {
        return Ok(Vec::new());
    }
    let first = random_step(pool, &BTreeSet::new(), 1, rng)?;
    let mut current: BTreeSet<NodeId> = first.iter().copied().collect();
    let mut out = first;
    let rest = step(pool, &current, size - 1, model, rng)?;
    current.extend(rest.iter().copied());
    out.extend(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Region;

    fn line_pool(xs: &[(NodeId, f64)]) -> LocationPool {
        let pts = xs.iter().map(|&(id, x)| Point::new(id, x, 0.0)).collect();
        LocationPool::new(Region::new(10.0, 10.0).unwrap(), pts).unwrap()
    }

    #[test]
    fn random_exhaustion_and_zero() {
        let pool = line_pool(&[(0, 0.0), (1, 1.0), (2, 2.0), (3, 3.0), (4, 4.0)]);
        let all: BTreeSet<_> = (0..5).collect();
        let mut r = rng::seeded(3);
        assert!(matches!(
            random_step(&pool, &all, 1, &mut r),
            Err(ExpansionError::PoolExhausted { .. })
        ));
        assert!(random_step(&pool, &BTreeSet::new(), 0, &mut r).unwrap().is_empty());
    }

    #[test]
    fn random_replay() {
        let pool = LocationPool::uniform(Region::default(), 50, &mut rng::seeded(1));
        let cur: BTreeSet<_> = [3, 9].into_iter().collect();
        let a = random_step(&pool, &cur, 2, &mut rng::seeded(42)).unwrap();
        let b = random_step(&pool, &cur, 2, &mut rng::seeded(42)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|id| !cur.contains(id)));
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn gradual_collinear() {
        let pool = line_pool(&[(0, 0.0), (1, 1.0), (2, 2.0), (3, 4.0)]);
        let cur: BTreeSet<_> = [0].into_iter().collect();
        assert_eq!(gradual_step(&pool, &cur, 3).unwrap(), vec![1, 2, 3]);
        assert!(gradual_step(&pool, &cur, 0).unwrap().is_empty());
        assert_eq!(gradual_step(&pool, &BTreeSet::new(), 1), Err(ExpansionError::NoAnchor));
        assert!(gradual_step(&pool, &cur, 4).is_err());
    }

    #[test]
    fn gradual_tie_smallest_id() {
        let pool = line_pool(&[(5, 5.0), (7, 6.0), (2, 4.0)]);
        let cur: BTreeSet<_> = [5].into_iter().collect();
        assert_eq!(gradual_step(&pool, &cur, 1).unwrap(), vec![2]);
    }

    #[test]
    fn factors() {
        assert_eq!(expansion_factor(15, 45).unwrap().rho, 4.0);
        assert_eq!(expansion_factor(50, 0).unwrap().rho, 1.0);
        assert_eq!(expansion_factor(50, 50).unwrap().rho, 2.0);
        assert_eq!(expansion_factor(0, 1), Err(ExpansionError::ZeroSize));
        assert_eq!(added_for_factor(15, 1.25), 3);
        assert_eq!(added_for_factor(15, 4.0), 45);
        assert_eq!(added_for_factor(20, 1.15), 3);
    }

    #[test]
    fn plan_realization() {
        let pool = LocationPool::uniform(Region::default(), 30, &mut rng::seeded(2));
        let plan = ExpansionPlan {
            model: ExpansionModel::Gradual,
            initial_size: 3,
            step_counts: vec![1, 2, 4],
            seed: 9,
        };
        let sets = plan.realize(&pool).unwrap();
        assert_eq!(sets.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 4, 6, 10]);
        let uniq: BTreeSet<_> = sets[3].iter().collect();
        assert_eq!(uniq.len(), 10);
        let bad = ExpansionPlan {
            step_counts: vec![40],
            ..plan
        };
        assert!(bad.validate(&pool).is_err());
    }
}
