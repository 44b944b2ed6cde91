//! Binary branching tree spaces with path-labelled vertices: projections, path-tree
//! decomposition, rooted isomorphism, Galton-Watson and PCFG laws, and merge-tree validity.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{domain, Error, Result};
use crate::graph::{sum_tolerance, token};

/// A root-to-vertex branch sequence; the empty sequence is the root.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct PathVertex(Vec<u8>);

impl PathVertex {
    pub fn root() -> Self {
        PathVertex(Vec::new())
    }

    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return domain("branch indices must be 0 or 1");
        }
        Ok(PathVertex(bits))
    }

    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::Parse(format!("bad path vertex '{s}'"))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(PathVertex)
    }

    /// Number of branch steps from the root.
    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn child(&self, side: u8) -> PathVertex {
        let mut b = self.0.clone();
        b.push(side);
        PathVertex(b)
    }

    pub fn parent(&self) -> Option<PathVertex> {
        if self.0.is_empty() {
            None
        } else {
            Some(PathVertex(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    /// `π_{1:k}(v)`.
    pub fn prefix(&self, k: usize) -> PathVertex {
        PathVertex(self.0[..k.min(self.0.len())].to_vec())
    }

    pub fn has_prefix(&self, p: &PathVertex) -> bool {
        self.0.starts_with(&p.0)
    }
}

impl Ord for PathVertex {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for PathVertex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for PathVertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// An ancestor-closed set of path vertices, optionally attributed.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct BranchTree {
    verts: BTreeSet<PathVertex>,
    attrs: Option<BTreeMap<PathVertex, String>>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct TreeJson {
    vertices: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attrs: Option<BTreeMap<String, Value>>,
}

impl BranchTree {
    pub fn empty() -> Self {
        BranchTree::default()
    }

    pub fn new(verts: impl IntoIterator<Item = PathVertex>) -> Result<Self> {
        let t = BranchTree {
            verts: verts.into_iter().collect(),
            attrs: None,
        };
        t.check_closed()?;
        Ok(t)
    }

    pub fn attributed(verts: impl IntoIterator<Item = (PathVertex, String)>) -> Result<Self> {
        let attrs: BTreeMap<PathVertex, String> = verts.into_iter().collect();
        let t = BranchTree {
            verts: attrs.keys().cloned().collect(),
            attrs: if attrs.is_empty() { None } else { Some(attrs) },
        };
        t.check_closed()?;
        Ok(t)
    }

    /// Parses vertex strings such as `""`, `"0"`, `"01"`.
    pub fn from_strs(vs: &[&str]) -> Result<Self> {
        Self::new(vs.iter().map(|s| PathVertex::parse(s)).collect::<Result<Vec<_>>>()?)
    }

    /// The complete binary tree of the given depth.
    pub fn full(depth: usize) -> Self {
        let mut verts = BTreeSet::from([PathVertex::root()]);
        let mut frontier = vec![PathVertex::root()];
        for _ in 0..depth {
            frontier = frontier.iter().flat_map(|v| [v.child(0), v.child(1)]).collect();
            verts.extend(frontier.iter().cloned());
        }
        BranchTree { verts, attrs: None }
    }

    fn check_closed(&self) -> Result<()> {
        for v in &self.verts {
            if let Some(p) = v.parent() {
                if !self.verts.contains(&p) {
                    return domain(format!("vertex '{v}' present without its parent"));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let raw: TreeJson = serde_json::from_value(v.clone()).map_err(|e| Error::Parse(format!("tree: {e}")))?;
        let verts: Vec<PathVertex> = raw.vertices.iter().map(|s| PathVertex::parse(s)).collect::<Result<_>>()?;
        match raw.attrs {
            None => Self::new(verts),
            Some(a) => {
                let mut pairs = Vec::with_capacity(verts.len());
                for v in verts {
                    let x = a
                        .get(&v.to_string())
                        .ok_or_else(|| Error::Parse(format!("vertex '{v}' has no attribute")))?;
                    pairs.push((v, token(x)));
                }
                if a.len() != pairs.len() {
                    return Err(Error::Parse("attributes given for vertices not in the tree".into()));
                }
                Self::attributed(pairs)
            }
        }
    }

    pub fn to_json(&self) -> Value {
        let raw = TreeJson {
            vertices: self.verts.iter().map(|v| v.to_string()).collect(),
            attrs: self.attrs.as_ref().map(|a| {
                a.iter()
                    .map(|(k, x)| (k.to_string(), Value::from(x.as_str())))
                    .collect()
            }),
        };
        serde_json::to_value(raw).expect("tree serializes")
    }

    pub fn len(&self) -> usize {
        self.verts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verts.is_empty()
    }

    pub fn vertices(&self) -> impl Iterator<Item = &PathVertex> {
        self.verts.iter()
    }

    pub fn contains(&self, v: &PathVertex) -> bool {
        self.verts.contains(v)
    }

    pub fn is_attributed(&self) -> bool {
        self.attrs.is_some()
    }

    pub fn attr(&self, v: &PathVertex) -> Option<&str> {
        self.attrs.as_ref().and_then(|a| a.get(v)).map(String::as_str)
    }

    pub fn children(&self, v: &PathVertex) -> Vec<PathVertex> {
        [v.child(0), v.child(1)]
            .into_iter()
            .filter(|c| self.verts.contains(c))
            .collect()
    }

    pub fn depth(&self) -> Option<usize> {
        self.verts.iter().map(PathVertex::depth).max()
    }

    pub fn leaves(&self) -> Vec<PathVertex> {
        self.verts
            .iter()
            .filter(|v| self.children(v).is_empty())
            .cloned()
            .collect()
    }

    fn restricted(&self, keep: impl Fn(&PathVertex) -> bool) -> BranchTree {
        let verts: BTreeSet<PathVertex> = self.verts.iter().filter(|v| keep(v)).cloned().collect();
        let attrs = self
            .attrs
            .as_ref()
            .map(|a| a.iter().filter(|(k, _)| verts.contains(*k)).map(|(k, x)| (k.clone(), x.clone())).collect::<BTreeMap<_, _>>())
            .filter(|a| !a.is_empty());
        BranchTree { verts, attrs }
    }
}

/// `π_V(T) = T ∩ V`; `V` must itself be a tree.
pub fn tree_project(t: &BranchTree, v: &BranchTree) -> Result<BranchTree> {
    v.check_closed()?;
    Ok(t.restricted(|x| v.contains(x)))
}

/// A tree re-rooted at `root`, holding the descendants of `root` under their full labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShiftedTree {
    pub tree: BranchTree,
    pub root: PathVertex,
}

impl ShiftedTree {
    pub fn whole(t: &BranchTree) -> Self {
        ShiftedTree {
            tree: t.clone(),
            root: PathVertex::root(),
        }
    }
}

/// `(T ∩ Λ(v0), v0)` with `Λ(v0)` the descendants of `v0` (inclusive).
pub fn shifted_project(t: &BranchTree, v0: &PathVertex) -> ShiftedTree {
    ShiftedTree {
        tree: t.restricted(|x| x.has_prefix(v0)),
        root: v0.clone(),
    }
}

/// Root-to-leaf path-trees; their union is `T`.
pub fn path_tree_decomposition(t: &BranchTree) -> Vec<BranchTree> {
    t.leaves()
        .into_iter()
        .map(|leaf| t.restricted(|x| leaf.has_prefix(x)))
        .collect()
}

fn ahu(t: &BranchTree, v: &PathVertex) -> String {
    let mut kids: Vec<String> = t.children(v).iter().map(|c| ahu(t, c)).collect();
    kids.sort();
    let a = t.attr(v).map(|a| format!("{}:", a.len()) + a).unwrap_or_default();
    format!("({a}{})", kids.concat())
}

/// Canonical code of a shifted tree; equal codes iff rooted-isomorphic.
pub fn canonical_code(s: &ShiftedTree) -> String {
    if s.tree.contains(&s.root) {
        ahu(&s.tree, &s.root)
    } else {
        String::new()
    }
}

/// Whether a child-preserving (and attribute-preserving) bijection maps one onto the other.
pub fn rooted_isomorphic(a: &ShiftedTree, b: &ShiftedTree) -> Result<bool> {
    if !a.tree.is_empty() && !b.tree.is_empty() && a.tree.is_attributed() != b.tree.is_attributed() {
        return domain("cannot compare attributed and unattributed trees");
    }
    Ok(canonical_code(a) == canonical_code(b))
}

/// A child configuration: attributes of the left and right child, when present.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChildConfig {
    pub left: Option<String>,
    pub right: Option<String>,
}

/// Offspring laws on binary trees of depth at most `max_depth`.
#[derive(Clone, Debug)]
pub enum OffspringModel {
    /// `mu[k]` is the probability of `k` children; one child goes left or right with
    /// probability ½ each.
    GaltonWatson {
        mu: [f64; 3],
        root_present: f64,
        max_depth: usize,
    },
    Pcfg {
        leaf: BTreeSet<String>,
        non_leaf: BTreeSet<String>,
        /// Law of the root attribute; the remaining mass is the empty tree.
        root: BTreeMap<String, f64>,
        rules: BTreeMap<String, Vec<(ChildConfig, f64)>>,
        max_depth: usize,
    },
}

impl OffspringModel {
    pub fn validate(&self) -> Result<()> {
        let prob_ok = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        match self {
            OffspringModel::GaltonWatson { mu, root_present, .. } => {
                if !mu.iter().all(|&p| prob_ok(p)) || !prob_ok(*root_present) {
                    return domain("probabilities must lie in [0,1]");
                }
                let s: f64 = mu.iter().sum();
                if (s - 1.0).abs() > sum_tolerance(3) {
                    return domain(format!("offspring law sums to {s}"));
                }
            }
            OffspringModel::Pcfg {
                leaf,
                non_leaf,
                root,
                rules,
                ..
            } => {
                if let Some(x) = leaf.intersection(non_leaf).next() {
                    return domain(format!("attribute {x} is both leaf and non-leaf"));
                }
                let known = |x: &String| leaf.contains(x) || non_leaf.contains(x);
                let rs: f64 = root.values().sum();
                if root.keys().any(|x| !known(x)) || !root.values().all(|&p| prob_ok(p)) || rs > 1.0 + sum_tolerance(root.len()) {
                    return domain("root law is malformed");
                }
                for (a, rule) in rules {
                    if !non_leaf.contains(a) {
                        return domain(format!("rule for {a}, which is not a non-leaf attribute"));
                    }
                    let mut seen = BTreeSet::new();
                    for (c, p) in rule {
                        if c.left.is_none() && c.right.is_none() {
                            return domain(format!("rule for {a} produces no children"));
                        }
                        if c.left.iter().chain(&c.right).any(|x| !known(x)) || !prob_ok(*p) {
                            return domain(format!("rule for {a} is malformed"));
                        }
                        if !seen.insert(c) {
                            return domain(format!("rule for {a} repeats a configuration"));
                        }
                    }
                    let s: f64 = rule.iter().map(|(_, p)| p).sum();
                    if (s - 1.0).abs() > sum_tolerance(rule.len()) {
                        return domain(format!("rule for {a} sums to {s}"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn max_depth(&self) -> usize {
        match self {
            OffspringModel::GaltonWatson { max_depth, .. } | OffspringModel::Pcfg { max_depth, .. } => *max_depth,
        }
    }

    /// Probability of the children of `v` given `v`, for `v` above the depth cap.
    fn offspring(&self, t: &BranchTree, v: &PathVertex) -> Result<f64> {
        let kids = t.children(v);
        match self {
            OffspringModel::GaltonWatson { mu, .. } => Ok(match kids.len() {
                0 => mu[0],
                1 => mu[1] / 2.0,
                _ => mu[2],
            }),
            OffspringModel::Pcfg { leaf, rules, .. } => {
                let a = t.attr(v).ok_or_else(|| Error::Domain(format!("vertex '{v}' has no attribute")))?;
                if leaf.contains(a) {
                    if !kids.is_empty() {
                        return domain(format!("leaf attribute {a} at '{v}' has children"));
                    }
                    return Ok(1.0);
                }
                if kids.is_empty() {
                    return domain(format!("non-leaf attribute {a} at '{v}' has no children"));
                }
                let cfg = ChildConfig {
                    left: t.attr(&v.child(0)).map(str::to_owned),
                    right: t.attr(&v.child(1)).map(str::to_owned),
                };
                Ok(rules
                    .get(a)
                    .and_then(|r| r.iter().find(|(c, _)| *c == cfg))
                    .map_or(0.0, |(_, p)| *p))
            }
        }
    }

    fn check_tree(&self, t: &BranchTree) -> Result<()> {
        if let Some(d) = t.depth() {
            if d > self.max_depth() {
                return domain(format!("tree depth {d} exceeds the cap {}", self.max_depth()));
            }
        }
        if let OffspringModel::Pcfg { leaf, non_leaf, .. } = self {
            if !t.is_empty() && !t.is_attributed() {
                return domain("PCFG trees must be attributed");
            }
            for v in t.vertices() {
                let a = t.attr(v).unwrap();
                if !leaf.contains(a) && !non_leaf.contains(a) {
                    return domain(format!("unknown attribute {a}"));
                }
            }
        }
        Ok(())
    }
}

/// `log P(T)`: root law times one offspring factor per vertex above the depth cap.
pub fn branching_log_prob(t: &BranchTree, m: &OffspringModel) -> Result<f64> {
    m.validate()?;
    m.check_tree(t)?;
    let root_p = match m {
        OffspringModel::GaltonWatson { root_present, .. } => {
            if t.is_empty() {
                1.0 - root_present
            } else {
                *root_present
            }
        }
        OffspringModel::Pcfg { root, .. } => {
            if t.is_empty() {
                1.0 - root.values().sum::<f64>()
            } else {
                root.get(t.attr(&PathVertex::root()).unwrap()).copied().unwrap_or(0.0)
            }
        }
    };
    let mut lp = root_p.max(0.0).ln();
    for v in t.vertices() {
        if v.depth() < m.max_depth() {
            lp += m.offspring(t, v)?.ln();
        }
    }
    Ok(lp)
}

/// Conditional log-factor of the shifted tree below its root (offspring factors only).
pub fn subtree_log_factor(s: &ShiftedTree, m: &OffspringModel) -> Result<f64> {
    let mut lp = 0.0;
    for v in s.tree.vertices() {
        if v.depth() < m.max_depth() {
            lp += m.offspring(&s.tree, v)?.ln();
        }
    }
    Ok(lp)
}

fn draw<R: Rng>(rng: &mut R, probs: impl Iterator<Item = f64>) -> Option<usize> {
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.enumerate() {
        acc += p;
        if u < acc {
            return Some(i);
        }
    }
    None
}

/// Top-down sampling; vertices at the depth cap get no children.
pub fn branching_sample<R: Rng>(m: &OffspringModel, rng: &mut R) -> Result<BranchTree> {
    m.validate()?;
    let cap = m.max_depth();
    match m {
        OffspringModel::GaltonWatson { mu, root_present, .. } => {
            if rng.random::<f64>() >= *root_present {
                return Ok(BranchTree::empty());
            }
            let mut verts = BTreeSet::new();
            let mut stack = vec![PathVertex::root()];
            while let Some(v) = stack.pop() {
                if v.depth() < cap {
                    match draw(rng, mu.iter().copied()).unwrap_or(2) {
                        0 => {}
                        1 => {
                            let side = rng.random_range(0..2u8);
                            stack.push(v.child(side));
                        }
                        _ => {
                            stack.push(v.child(1));
                            stack.push(v.child(0));
                        }
                    }
                }
                verts.insert(v);
            }
            Ok(BranchTree { verts, attrs: None })
        }
        OffspringModel::Pcfg { root, rules, leaf, .. } => {
            let Some(ri) = draw(rng, root.values().copied()) else {
                return Ok(BranchTree::empty());
            };
            let mut attrs = BTreeMap::new();
            let mut stack = vec![(PathVertex::root(), root.keys().nth(ri).unwrap().clone())];
            while let Some((v, a)) = stack.pop() {
                if v.depth() < cap && !leaf.contains(&a) {
                    let rule = rules
                        .get(&a)
                        .ok_or_else(|| Error::Domain(format!("no rule for non-leaf attribute {a}")))?;
                    let i = draw(rng, rule.iter().map(|(_, p)| *p)).unwrap_or(rule.len() - 1);
                    let c = &rule[i].0;
                    if let Some(r) = &c.right {
                        stack.push((v.child(1), r.clone()));
                    }
                    if let Some(l) = &c.left {
                        stack.push((v.child(0), l.clone()));
                    }
                }
                attrs.insert(v, a);
            }
            BranchTree::attributed(attrs)
        }
    }
}

/// All unattributed trees of depth at most `max_depth`, including the empty tree.
pub fn enumerate_trees(max_depth: usize, cap: u64) -> Result<Vec<BranchTree>> {
    let mut count: f64 = 1.0;
    for _ in 0..max_depth {
        count = (1.0 + count) * (1.0 + count);
    }
    if count + 1.0 > cap as f64 {
        return Err(Error::Resource {
            what: "tree space".into(),
            size: count + 1.0,
            cap,
        });
    }
    let mut out = vec![BranchTree::empty()];
    for set in subtrees_at(&PathVertex::root(), max_depth) {
        out.push(BranchTree { verts: set, attrs: None });
    }
    out.sort();
    Ok(out)
}

fn subtrees_at(v: &PathVertex, cap: usize) -> Vec<BTreeSet<PathVertex>> {
    let own = BTreeSet::from([v.clone()]);
    if v.depth() >= cap {
        return vec![own];
    }
    let l = subtrees_at(&v.child(0), cap);
    let r = subtrees_at(&v.child(1), cap);
    let mut out = vec![own.clone()];
    for a in &l {
        out.push(own.union(a).cloned().collect());
    }
    for b in &r {
        out.push(own.union(b).cloned().collect());
    }
    for a in &l {
        for b in &r {
            let mut s = own.clone();
            s.extend(a.iter().cloned());
            s.extend(b.iter().cloned());
            out.push(s);
        }
    }
    out
}

/// All attributed trees of the PCFG space: leaf attributes exactly on childless vertices
/// above the cap, any attribute at the cap.
pub fn enumerate_pcfg_trees(m: &OffspringModel, cap: u64) -> Result<Vec<BranchTree>> {
    let OffspringModel::Pcfg {
        leaf,
        non_leaf,
        max_depth,
        ..
    } = m
    else {
        return domain("PCFG model required");
    };
    let (nl, nn) = (leaf.len() as f64, non_leaf.len() as f64);
    let mut size = nl + nn;
    for _ in 0..*max_depth {
        size = nl + nn * (2.0 * size + size * size);
    }
    if size + 1.0 > cap as f64 {
        return Err(Error::Resource {
            what: "attributed tree space".into(),
            size: size + 1.0,
            cap,
        });
    }
    let all: Vec<String> = leaf.iter().chain(non_leaf).cloned().collect();
    let mut out = vec![BranchTree::empty()];
    for a in attributed_at(&PathVertex::root(), *max_depth, leaf, non_leaf, &all) {
        out.push(BranchTree::attributed(a)?);
    }
    out.sort();
    Ok(out)
}

type AttrTree = BTreeMap<PathVertex, String>;

fn attributed_at(
    v: &PathVertex,
    cap: usize,
    leaf: &BTreeSet<String>,
    non_leaf: &BTreeSet<String>,
    all: &[String],
) -> Vec<AttrTree> {
    let single = |a: &String| BTreeMap::from([(v.clone(), a.clone())]);
    if v.depth() >= cap {
        return all.iter().map(single).collect();
    }
    let mut out: Vec<AttrTree> = leaf.iter().map(single).collect();
    let l = attributed_at(&v.child(0), cap, leaf, non_leaf, all);
    let r = attributed_at(&v.child(1), cap, leaf, non_leaf, all);
    for a in non_leaf {
        let base = single(a);
        for x in l.iter().chain(&r) {
            let mut t = base.clone();
            t.extend(x.iter().map(|(k, y)| (k.clone(), y.clone())));
            out.push(t);
        }
        for x in &l {
            for y in &r {
                let mut t = base.clone();
                t.extend(x.iter().map(|(k, z)| (k.clone(), z.clone())));
                t.extend(y.iter().map(|(k, z)| (k.clone(), z.clone())));
                out.push(t);
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct MergeReport {
    pub valid: bool,
    pub failures: Vec<String>,
}

/// Checks a merge tree given as subsets of `{1, …, N}`: a strictly largest vertex, power-of-two
/// sizes, and an equal binary split present for every non-leaf.
pub fn validate_merge_tree(vertices: &[BTreeSet<u32>]) -> MergeReport {
    let mut failures = Vec::new();
    let set: BTreeSet<&BTreeSet<u32>> = vertices.iter().collect();
    if set.len() != vertices.len() {
        failures.push("repeated vertex".to_string());
    }
    if vertices.iter().any(|v| v.is_empty()) {
        failures.push("empty vertex".to_string());
    }
    let show = |v: &BTreeSet<u32>| format!("{v:?}");
    if !vertices.is_empty() {
        let max = vertices.iter().map(BTreeSet::len).max().unwrap();
        let tops: Vec<&BTreeSet<u32>> = vertices.iter().filter(|v| v.len() == max).collect();
        if tops.len() != 1 {
            failures.push(format!("no strictly largest vertex: {}", tops.iter().map(|v| show(v)).collect::<Vec<_>>().join(", ")));
        }
    }
    for v in vertices {
        if !v.is_empty() && !v.len().is_power_of_two() {
            failures.push(format!("{} has size {}, not a power of two", show(v), v.len()));
        }
        if v.len() > 1 {
            let half = v.len() / 2;
            let split = v.len() % 2 == 0
                && set.iter().any(|a| {
                    a.len() == half && a.is_subset(v) && {
                        let rest: BTreeSet<u32> = v.difference(a).copied().collect();
                        set.contains(&rest)
                    }
                });
            if !split {
                failures.push(format!("{} has no equal binary partition in the tree", show(v)));
            }
        }
    }
    MergeReport {
        valid: failures.is_empty(),
        failures,
    }
}

/// `{"vertices": [[1],[2],[1,2]]}`.
pub fn merge_tree_from_json(v: &Value) -> Result<Vec<BTreeSet<u32>>> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Raw {
        vertices: Vec<Vec<u32>>,
    }
    let raw: Raw = serde_json::from_value(v.clone()).map_err(|e| Error::Parse(format!("merge tree: {e}")))?;
    Ok(raw.vertices.into_iter().map(|v| v.into_iter().collect()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DEFAULT_CAP;
    use crate::mcmc::chain_rng;

    fn gw(mu: [f64; 3], root: f64, n: usize) -> OffspringModel {
        OffspringModel::GaltonWatson {
            mu,
            root_present: root,
            max_depth: n,
        }
    }

    fn s(x: &str) -> String {
        x.to_string()
    }

    fn grammar(n: usize) -> OffspringModel {
        OffspringModel::Pcfg {
            leaf: BTreeSet::from([s("a")]),
            non_leaf: BTreeSet::from([s("S")]),
            root: BTreeMap::from([(s("S"), 0.7), (s("a"), 0.2)]),
            rules: BTreeMap::from([(
                s("S"),
                vec![
                    (ChildConfig { left: Some(s("a")), right: Some(s("a")) }, 0.4),
                    (ChildConfig { left: Some(s("S")), right: Some(s("a")) }, 0.3),
                    (ChildConfig { left: Some(s("a")), right: None }, 0.2),
                    (ChildConfig { left: None, right: Some(s("S")) }, 0.1),
                ],
            )]),
            max_depth: n,
        }
    }

    #[test]
    fn path_vertex_order_and_parse() {
        let v = PathVertex::parse("01").unwrap();
        assert_eq!(v.depth(), 2);
        assert_eq!(v.parent().unwrap(), PathVertex::parse("0").unwrap());
        assert!(PathVertex::parse("1").unwrap() < PathVertex::parse("00").unwrap());
        assert!(PathVertex::parse("2").is_err());
        assert_eq!(v.to_string(), "01");
    }

    #[test]
    fn ancestor_closure() {
        assert!(BranchTree::from_strs(&["", "0", "01"]).is_ok());
        assert!(BranchTree::from_strs(&["", "01"]).is_err());
    }

    #[test]
    fn projections() {
        let t = BranchTree::full(2);
        assert_eq!(tree_project(&t, &t).unwrap(), t);
        let root = BranchTree::from_strs(&[""]).unwrap();
        assert_eq!(tree_project(&t, &root).unwrap(), root);
        assert_eq!(tree_project(&BranchTree::empty(), &root).unwrap(), BranchTree::empty());
        let spine = BranchTree::from_strs(&["", "0", "00"]).unwrap();
        assert_eq!(tree_project(&t, &spine).unwrap(), spine);
        let bad = BranchTree {
            verts: BTreeSet::from([PathVertex::parse("0").unwrap()]),
            attrs: None,
        };
        assert!(tree_project(&t, &bad).is_err());
    }

    #[test]
    fn shifted() {
        let t = BranchTree::full(2);
        assert_eq!(shifted_project(&t, &PathVertex::root()), ShiftedTree::whole(&t));
        let leaf = PathVertex::parse("10").unwrap();
        assert_eq!(shifted_project(&t, &leaf).tree.len(), 1);
        let left = shifted_project(&t, &PathVertex::parse("0").unwrap());
        assert_eq!(left.tree, BranchTree { verts: ["0", "00", "01"].iter().map(|x| PathVertex::parse(x).unwrap()).collect(), attrs: None });
        assert!(shifted_project(&t, &PathVertex::parse("000").unwrap()).tree.is_empty());
    }

    #[test]
    fn decomposition() {
        let root = BranchTree::from_strs(&[""]).unwrap();
        assert_eq!(path_tree_decomposition(&root), vec![root.clone()]);
        let parts = path_tree_decomposition(&BranchTree::full(2));
        assert_eq!(parts.len(), 4);
        assert!(parts.iter().all(|p| p.len() == 3 && p.leaves().len() == 1));
        assert!(path_tree_decomposition(&BranchTree::empty()).is_empty());
    }

    #[test]
    fn isomorphism() {
        let l = BranchTree::from_strs(&["", "0", "00"]).unwrap();
        let r = BranchTree::from_strs(&["", "1", "11"]).unwrap();
        assert!(rooted_isomorphic(&ShiftedTree::whole(&l), &ShiftedTree::whole(&r)).unwrap());
        assert!(rooted_isomorphic(&ShiftedTree::whole(&l), &ShiftedTree::whole(&l)).unwrap());
        let zig = BranchTree::from_strs(&["", "0", "01"]).unwrap();
        assert!(rooted_isomorphic(&ShiftedTree::whole(&l), &ShiftedTree::whole(&zig)).unwrap());
        let fork = BranchTree::from_strs(&["", "0", "1"]).unwrap();
        assert!(!rooted_isomorphic(&ShiftedTree::whole(&l), &ShiftedTree::whole(&fork)).unwrap());
        let a1 = BranchTree::attributed([(PathVertex::root(), s("S")), (PathVertex::parse("0").unwrap(), s("a"))]).unwrap();
        let a2 = BranchTree::attributed([(PathVertex::root(), s("S")), (PathVertex::parse("1").unwrap(), s("b"))]).unwrap();
        assert!(!rooted_isomorphic(&ShiftedTree::whole(&a1), &ShiftedTree::whole(&a2)).unwrap());
        let a3 = BranchTree::attributed([(PathVertex::root(), s("S")), (PathVertex::parse("1").unwrap(), s("a"))]).unwrap();
        assert!(rooted_isomorphic(&ShiftedTree::whole(&a1), &ShiftedTree::whole(&a3)).unwrap());
        let plain = BranchTree::from_strs(&["", "0"]).unwrap();
        assert!(rooted_isomorphic(&ShiftedTree::whole(&a1), &ShiftedTree::whole(&plain)).is_err());
    }

    #[test]
    fn gw_factors() {
        let m = gw([0.5, 0.0, 0.5], 1.0, 2);
        let root = BranchTree::from_strs(&[""]).unwrap();
        assert!((branching_log_prob(&root, &m).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        let cherry = BranchTree::from_strs(&["", "0", "1"]).unwrap();
        assert!((branching_log_prob(&cherry, &m).unwrap() - 0.125f64.ln()).abs() < 1e-15);
        assert_eq!(branching_log_prob(&BranchTree::empty(), &m).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn space_sizes() {
        assert_eq!(enumerate_trees(0, DEFAULT_CAP).unwrap().len(), 2);
        assert_eq!(enumerate_trees(1, DEFAULT_CAP).unwrap().len(), 5);
        assert_eq!(enumerate_trees(2, DEFAULT_CAP).unwrap().len(), 26);
        assert_eq!(enumerate_trees(3, DEFAULT_CAP).unwrap().len(), 677);
        assert!(enumerate_trees(5, DEFAULT_CAP).is_err());
    }

    #[test]
    fn gw_normalizes() {
        for n in 0..=3 {
            let m = gw([0.2, 0.3, 0.5], 0.9, n);
            let total: f64 = enumerate_trees(n, DEFAULT_CAP)
                .unwrap()
                .iter()
                .map(|t| branching_log_prob(t, &m).unwrap().exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "{n}: {total}");
        }
    }

    #[test]
    fn pcfg_normalizes() {
        for n in 0..=3 {
            let m = grammar(n);
            let trees = enumerate_pcfg_trees(&m, DEFAULT_CAP).unwrap();
            let total: f64 = trees.iter().map(|t| branching_log_prob(t, &m).unwrap().exp()).sum();
            assert!((total - 1.0).abs() < 1e-12, "{n}: {total}");
        }
        assert_eq!(enumerate_pcfg_trees(&grammar(1), DEFAULT_CAP).unwrap().len(), 10);
    }

    #[test]
    fn pcfg_discipline() {
        let m = grammar(2);
        let bad = BranchTree::attributed([(PathVertex::root(), s("a")), (PathVertex::parse("0").unwrap(), s("a"))]).unwrap();
        assert!(branching_log_prob(&bad, &m).is_err());
        let childless = BranchTree::attributed([(PathVertex::root(), s("S"))]).unwrap();
        assert!(branching_log_prob(&childless, &m).is_err());
        let unused = BranchTree::attributed([(PathVertex::root(), s("S")), (PathVertex::parse("1").unwrap(), s("a"))]).unwrap();
        assert_eq!(branching_log_prob(&unused, &m).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn sampler_edge_cases() {
        let mut rng = chain_rng(1, 0);
        let m = gw([1.0, 0.0, 0.0], 1.0, 3);
        for _ in 0..50 {
            assert_eq!(branching_sample(&m, &mut rng).unwrap().len(), 1);
        }
        let m = gw([0.0, 0.0, 1.0], 1.0, 2);
        for _ in 0..50 {
            assert_eq!(branching_sample(&m, &mut rng).unwrap(), BranchTree::full(2));
        }
        let m = gw([0.5, 0.0, 0.5], 1.0, 1);
        let n = 20_000;
        let roots = (0..n).filter(|_| branching_sample(&m, &mut rng).unwrap().len() == 1).count();
        assert!((roots as f64 / n as f64 - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn gw_isomorphic_subtrees_share_factors() {
        let m = gw([0.2, 0.3, 0.5], 1.0, 4);
        let t = BranchTree::from_strs(&["", "0", "1", "00", "11"]).unwrap();
        let a = shifted_project(&t, &PathVertex::parse("0").unwrap());
        let b = shifted_project(&t, &PathVertex::parse("1").unwrap());
        assert!(rooted_isomorphic(&a, &b).unwrap());
        assert_eq!(subtree_log_factor(&a, &m).unwrap(), subtree_log_factor(&b, &m).unwrap());
    }

    #[test]
    fn tree_json_round_trip() {
        let t = BranchTree::attributed([(PathVertex::root(), s("S")), (PathVertex::parse("0").unwrap(), s("a"))]).unwrap();
        assert_eq!(BranchTree::from_json(&t.to_json()).unwrap(), t);
        let u = BranchTree::full(1);
        assert_eq!(u.to_json(), serde_json::json!({"vertices": ["", "0", "1"]}));
        assert_eq!(BranchTree::from_json(&u.to_json()).unwrap(), u);
    }

    #[test]
    fn merge_trees() {
        let set = |xs: &[u32]| xs.iter().copied().collect::<BTreeSet<u32>>();
        assert!(validate_merge_tree(&[set(&[1])]).valid);
        assert!(validate_merge_tree(&[set(&[1]), set(&[2]), set(&[1, 2])]).valid);
        assert!(!validate_merge_tree(&[set(&[1]), set(&[1, 2])]).valid);
        assert!(!validate_merge_tree(&[set(&[1]), set(&[2])]).valid);
        assert!(!validate_merge_tree(&[set(&[1]), set(&[2]), set(&[3]), set(&[1, 2, 3])]).valid);
        assert!(validate_merge_tree(&[]).valid);
        let v = merge_tree_from_json(&serde_json::json!({"vertices": [[1], [2], [1, 2]]})).unwrap();
        assert!(validate_merge_tree(&v).valid);
    }
}
