use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use super::repr::{Graph, VertexId};
use super::space::SpaceSpec;
use crate::error::{domain, Result};

/// An explicitly enumerated distribution over a small space.
#[derive(Clone, Debug)]
pub struct DistributionTable<T: Clone + Eq + Hash> {
    support: Vec<T>,
    probs: Vec<f64>,
    index: HashMap<T, usize>,
}

pub(crate) fn sum_tolerance(n: usize) -> f64 {
    1e-12_f64.max(n as f64 * 4.0 * f64::EPSILON)
}

impl<T: Clone + Eq + Hash> DistributionTable<T> {
    pub fn new(support: Vec<T>, probs: Vec<f64>) -> Result<Self> {
        if support.len() != probs.len() {
            return domain("support and probabilities differ in length");
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return domain(format!("invalid probability {p}"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > sum_tolerance(probs.len()) {
            return domain(format!("probabilities sum to {total}"));
        }
        let mut index = HashMap::with_capacity(support.len());
        for (i, s) in support.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return domain("duplicate support entry");
            }
        }
        Ok(DistributionTable {
            support,
            probs,
            index,
        })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(support: Vec<T>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return domain(format!("weights sum to {total}"));
        }
        let probs = weights.iter().map(|w| w / total).collect();
        Self::new(support, probs)
    }

    pub fn point_mass(support: Vec<T>, at: &T) -> Result<Self> {
        let probs = support
            .iter()
            .map(|s| if s == at { 1.0 } else { 0.0 })
            .collect();
        Self::new(support, probs)
    }

    pub fn uniform(support: Vec<T>) -> Result<Self> {
        let n = support.len();
        Self::new(support, vec![1.0 / n as f64; n])
    }

    pub fn support(&self) -> &[T] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Probability of `x`; zero when `x` is not in the support.
    pub fn prob(&self, x: &T) -> f64 {
        self.index.get(x).map_or(0.0, |&i| self.probs[i])
    }

    pub fn position(&self, x: &T) -> Option<usize> {
        self.index.get(x).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, f64)> {
        self.support.iter().zip(self.probs.iter().copied())
    }
}

/// `P_V^marg(G) = Σ_{G' : π_V(G') = G} P(G')`, supported on `𝒢_V` in canonical order.
pub fn marginal(
    dist: &DistributionTable<Graph>,
    spec: &SpaceSpec,
    vs: &[VertexId],
) -> Result<DistributionTable<Graph>> {
    let n = spec.num_vertices() as VertexId;
    if let Some(v) = vs.iter().find(|&&v| v >= n) {
        return domain(format!("vertex index {v} outside the vertex space"));
    }
    let mut acc: BTreeMap<Graph, f64> = BTreeMap::new();
    for (g, p) in dist.iter() {
        *acc.entry(g.project(vs)).or_insert(0.0) += p;
    }
    let (support, probs) = acc.into_iter().unzip();
    DistributionTable::new(support, probs)
}

/// Whether `π_{V1}` and `π_{V2}` are independent under `dist`, within 1e-10.
pub fn check_independence(dist: &DistributionTable<Graph>, v1: &[VertexId], v2: &[VertexId]) -> bool {
    let mut joint: HashMap<(Graph, Graph), f64> = HashMap::new();
    let mut m1: BTreeMap<Graph, f64> = BTreeMap::new();
    let mut m2: BTreeMap<Graph, f64> = BTreeMap::new();
    for (g, p) in dist.iter() {
        let a = g.project(v1);
        let b = g.project(v2);
        *m1.entry(a.clone()).or_insert(0.0) += p;
        *m2.entry(b.clone()).or_insert(0.0) += p;
        *joint.entry((a, b)).or_insert(0.0) += p;
    }
    for (a, pa) in &m1 {
        for (b, pb) in &m2 {
            let pj = joint.get(&(a.clone(), b.clone())).copied().unwrap_or(0.0);
            if (pj - pa * pb).abs() > 1e-10 {
                return false;
            }
        }
    }
    true
}
