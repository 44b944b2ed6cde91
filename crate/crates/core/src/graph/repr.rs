use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};

use itertools::Itertools;

use crate::error::{domain, Result};

/// Index into the vertex space Λ_V.
pub type VertexId = u32;
/// Index into the edge space Λ_E; `0` is always the zero element.
pub type EdgeVal = u16;

/// A vertex attribute: a token from a finite attribute space, or a point of a real vector space.
#[derive(Clone, Debug)]
pub enum Attr {
    Cat(u32),
    Point(Vec<f64>),
}

impl Attr {
    fn rank(&self) -> u8 {
        match self {
            Attr::Cat(_) => 0,
            Attr::Point(_) => 1,
        }
    }
}

impl PartialEq for Attr {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Attr {}

impl PartialOrd for Attr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Attr {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Attr::Cat(a), Attr::Cat(b)) => a.cmp(b),
            (Attr::Point(a), Attr::Point(b)) => {
                for (x, y) in a.iter().zip(b) {
                    match x.total_cmp(y) {
                        Ordering::Equal => {}
                        o => return o,
                    }
                }
                a.len().cmp(&b.len())
            }
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl Hash for Attr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Attr::Cat(c) => {
                0u8.hash(state);
                c.hash(state);
            }
            Attr::Point(p) => {
                1u8.hash(state);
                p.len().hash(state);
                for x in p {
                    x.to_bits().hash(state);
                }
            }
        }
    }
}

/// A variable-order attributed graph `(V, X, E)`.
///
/// Vertices are kept sorted by their index in Λ_V, attributes (when present) are aligned with
/// them, and only nonzero edge values are stored, keyed by `(u, v)` with `u < v`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Graph {
    verts: Vec<VertexId>,
    attrs: Option<Vec<Attr>>,
    edges: BTreeMap<(VertexId, VertexId), EdgeVal>,
}

impl PartialOrd for Graph {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Canonical order: by order, then vertex set, then attributes, then edges.
impl Ord for Graph {
    fn cmp(&self, other: &Self) -> Ordering {
        self.verts
            .len()
            .cmp(&other.verts.len())
            .then_with(|| self.verts.cmp(&other.verts))
            .then_with(|| self.attrs.cmp(&other.attrs))
            .then_with(|| self.edges.iter().cmp(other.edges.iter()))
    }
}

fn key(u: VertexId, v: VertexId) -> (VertexId, VertexId) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl Graph {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Unattributed, edgeless graph on the given vertices.
    pub fn from_vertices(vs: impl IntoIterator<Item = VertexId>) -> Self {
        let mut verts: Vec<VertexId> = vs.into_iter().collect();
        verts.sort_unstable();
        verts.dedup();
        Graph {
            verts,
            attrs: None,
            edges: BTreeMap::new(),
        }
    }

    /// Attributed, edgeless graph.
    pub fn from_attributed(vs: impl IntoIterator<Item = (VertexId, Attr)>) -> Result<Self> {
        let mut pairs: Vec<(VertexId, Attr)> = vs.into_iter().collect();
        pairs.sort_by_key(|p| p.0);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return domain("duplicate vertex");
        }
        let (verts, attrs): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        Ok(Graph {
            attrs: if verts.is_empty() { None } else { Some(attrs) },
            verts,
            edges: BTreeMap::new(),
        })
    }

    /// Builder-style edge insertion; see [`Graph::set_edge`].
    pub fn with_edge(mut self, u: VertexId, v: VertexId, val: EdgeVal) -> Result<Self> {
        self.set_edge(u, v, val)?;
        Ok(self)
    }

    pub fn with_edges(
        mut self,
        edges: impl IntoIterator<Item = (VertexId, VertexId, EdgeVal)>,
    ) -> Result<Self> {
        for (u, v, e) in edges {
            self.set_edge(u, v, e)?;
        }
        Ok(self)
    }

    pub fn order(&self) -> usize {
        self.verts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verts.is_empty()
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.verts
    }

    pub fn position(&self, v: VertexId) -> Option<usize> {
        self.verts.binary_search(&v).ok()
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.position(v).is_some()
    }

    pub fn is_attributed(&self) -> bool {
        self.attrs.is_some()
    }

    pub fn attrs(&self) -> Option<&[Attr]> {
        self.attrs.as_deref()
    }

    pub fn attr(&self, v: VertexId) -> Option<&Attr> {
        let i = self.position(v)?;
        self.attrs.as_ref().map(|a| &a[i])
    }

    pub fn edge(&self, u: VertexId, v: VertexId) -> EdgeVal {
        self.edges.get(&key(u, v)).copied().unwrap_or(0)
    }

    /// Nonzero edges as `(u, v, value)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId, EdgeVal)> + '_ {
        self.edges.iter().map(|(&(u, v), &e)| (u, v, e))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.edges
            .keys()
            .filter(|&&(a, b)| a == v || b == v)
            .count()
    }

    pub fn neighbors(&self, v: VertexId) -> Vec<VertexId> {
        let mut out: Vec<VertexId> = self
            .edges
            .keys()
            .filter_map(|&(a, b)| {
                if a == v {
                    Some(b)
                } else if b == v {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Connectivity over nonzero edges. The empty graph counts as connected.
    pub fn is_connected(&self) -> bool {
        let n = self.verts.len();
        if n <= 1 {
            return true;
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut comps = n;
        for &(u, v) in self.edges.keys() {
            let a = find(&mut parent, self.position(u).unwrap());
            let b = find(&mut parent, self.position(v).unwrap());
            if a != b {
                parent[a] = b;
                comps -= 1;
            }
        }
        comps == 1
    }

    /// Sets `E(u,v)`. Setting the zero value removes the edge.
    pub fn set_edge(&mut self, u: VertexId, v: VertexId, val: EdgeVal) -> Result<()> {
        if u == v {
            return domain(format!("self loop at vertex {u}"));
        }
        if !self.contains(u) || !self.contains(v) {
            return domain(format!("edge endpoint ({u},{v}) not in V"));
        }
        if val == 0 {
            self.edges.remove(&key(u, v));
        } else {
            self.edges.insert(key(u, v), val);
        }
        Ok(())
    }

    pub fn add_vertex(&mut self, v: VertexId, attr: Option<Attr>) -> Result<()> {
        let pos = match self.verts.binary_search(&v) {
            Ok(_) => return domain(format!("vertex {v} already present")),
            Err(p) => p,
        };
        match (&mut self.attrs, attr) {
            (Some(a), Some(x)) => a.insert(pos, x),
            (None, None) => {}
            (None, Some(x)) if self.verts.is_empty() => self.attrs = Some(vec![x]),
            _ => return domain("attribute presence must match the graph"),
        }
        self.verts.insert(pos, v);
        Ok(())
    }

    /// Removes `v` together with its incident edges.
    pub fn remove_vertex(&mut self, v: VertexId) -> Result<()> {
        let Some(pos) = self.position(v) else {
            return domain(format!("vertex {v} not present"));
        };
        self.verts.remove(pos);
        if let Some(a) = &mut self.attrs {
            a.remove(pos);
            if a.is_empty() {
                self.attrs = None;
            }
        }
        self.edges.retain(|&(a, b), _| a != v && b != v);
        Ok(())
    }

    pub fn without_attrs(&self) -> Graph {
        Graph {
            verts: self.verts.clone(),
            attrs: None,
            edges: self.edges.clone(),
        }
    }

    /// Replaces the attribute map; `attrs` is aligned with [`Graph::vertices`].
    pub fn with_attrs(&self, attrs: Vec<Attr>) -> Result<Graph> {
        if attrs.len() != self.verts.len() {
            return domain("attribute vector length differs from vertex count");
        }
        Ok(Graph {
            verts: self.verts.clone(),
            attrs: if attrs.is_empty() { None } else { Some(attrs) },
            edges: self.edges.clone(),
        })
    }

    /// The subgraph induced by `vs`, which must be a subset of `V(G)`.
    pub fn induced_subgraph(&self, vs: &[VertexId]) -> Result<Graph> {
        let mut sorted = vs.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if let Some(v) = sorted.iter().find(|&&v| !self.contains(v)) {
            return domain(format!("vertex {v} is not in V(G)"));
        }
        Ok(self.restrict_sorted(&sorted))
    }

    /// `π_V(G) = G(V ∩ V(G))`.
    pub fn project(&self, vs: &[VertexId]) -> Graph {
        let keep: Vec<VertexId> = self
            .verts
            .iter()
            .copied()
            .filter(|v| vs.contains(v))
            .collect();
        self.restrict_sorted(&keep)
    }

    pub(crate) fn restrict_sorted(&self, keep: &[VertexId]) -> Graph {
        if keep.len() == self.verts.len() {
            return self.clone();
        }
        let attrs = match &self.attrs {
            Some(a) if !keep.is_empty() => Some(
                keep.iter()
                    .map(|&v| a[self.position(v).unwrap()].clone())
                    .collect(),
            ),
            _ => None,
        };
        let edges = self
            .edges
            .iter()
            .filter(|((u, v), _)| keep.binary_search(u).is_ok() && keep.binary_search(v).is_ok())
            .map(|(&k, &e)| (k, e))
            .collect();
        Graph {
            verts: keep.to_vec(),
            attrs,
            edges,
        }
    }

    /// Induced subgraphs `S(G)`, or `S_k(G)` when `k` is given, in canonical order.
    pub fn subgraphs(&self, k: Option<usize>) -> Vec<Graph> {
        match k {
            Some(k) if k > self.order() => Vec::new(),
            Some(k) => self
                .verts
                .iter()
                .copied()
                .combinations(k)
                .map(|s| self.restrict_sorted(&s))
                .collect(),
            None => self
                .verts
                .iter()
                .copied()
                .powerset()
                .map(|s| self.restrict_sorted(&s))
                .collect(),
        }
    }

    /// Canonical text encoding, e.g. `0,1|a=0,1|0-1:1`.
    pub fn encode(&self) -> String {
        let mut s = self.verts.iter().join(",");
        if let Some(a) = &self.attrs {
            s.push_str("|a=");
            let mut parts = a.iter().map(|x| match x {
                Attr::Cat(c) => c.to_string(),
                Attr::Point(p) => format!("({})", p.iter().map(|v| format!("{v:?}")).join(" ")),
            });
            s.push_str(&parts.join(","));
        }
        s.push('|');
        for (i, ((u, v), e)) in self.edges.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{u}-{v}:{e}");
        }
        s
    }
}
