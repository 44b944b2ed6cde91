use std::collections::HashMap;

use itertools::Itertools;
use rayon::prelude::*;
use serde_json::Value;

use super::repr::{Attr, EdgeVal, Graph, VertexId};
use crate::error::{domain, Error, Result};

/// Default ceiling on the number of graphs materialized by [`SpaceSpec::enumerate`].
pub const DEFAULT_CAP: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct VertexLabel {
    pub id: String,
    pub loc: Option<Vec<i64>>,
    pub color: Option<String>,
}

impl VertexLabel {
    pub fn plain(id: impl Into<String>) -> Self {
        VertexLabel {
            id: id.into(),
            loc: None,
            color: None,
        }
    }
}

/// Finite edge space with the zero element at index 0 and a partial order.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSpace {
    names: Vec<Value>,
    leq: Vec<Vec<bool>>,
}

impl EdgeSpace {
    /// `names[zero]` becomes index 0; the rest keep their listed order. `order` lists
    /// `(lo, hi)` index pairs into `names`; the zero is placed below everything. With no pairs
    /// the listing order (zero first) is taken as a total order.
    pub fn new(names: Vec<Value>, zero: usize, order: &[(usize, usize)]) -> Result<Self> {
        let n = names.len();
        if zero >= n {
            return domain("zero element is not a member of the edge space");
        }
        if n > EdgeVal::MAX as usize {
            return domain("edge space too large");
        }
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return domain(format!("duplicate edge value {a}"));
            }
        }
        let mut perm: Vec<usize> = vec![zero];
        perm.extend((0..n).filter(|&i| i != zero));
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut leq = vec![vec![false; n]; n];
        for i in 0..n {
            leq[i][i] = true;
            leq[0][i] = true;
        }
        if order.is_empty() {
            for i in 0..n {
                for j in i..n {
                    leq[i][j] = true;
                }
            }
        }
        for &(lo, hi) in order {
            if lo >= n || hi >= n {
                return domain("edge order refers to an unknown value");
            }
            leq[inv[lo]][inv[hi]] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if leq[i][k] && leq[k][j] {
                        leq[i][j] = true;
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && leq[i][j] && leq[j][i] {
                    return domain("edge order is not antisymmetric");
                }
            }
        }
        let names = perm.into_iter().map(|i| names[i].clone()).collect();
        Ok(EdgeSpace { names, leq })
    }

    /// `{0, 1, …, n-1}` with the usual total order.
    pub fn chain(n: usize) -> Self {
        let names = (0..n).map(|i| Value::from(i as u64)).collect();
        EdgeSpace::new(names, 0, &[]).expect("chain edge space")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn le(&self, a: EdgeVal, b: EdgeVal) -> bool {
        self.leq[a as usize][b as usize]
    }

    pub fn name(&self, e: EdgeVal) -> &Value {
        &self.names[e as usize]
    }

    pub fn index_of(&self, v: &Value) -> Option<EdgeVal> {
        self.names.iter().position(|n| n == v).map(|i| i as EdgeVal)
    }

    /// The last listed maximal element.
    pub fn top(&self) -> EdgeVal {
        let n = self.len();
        (0..n)
            .rev()
            .find(|&i| (0..n).all(|j| j == i || !self.leq[i][j]))
            .unwrap_or(0) as EdgeVal
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Distance {
    Euclidean,
    Manhattan,
    Chebyshev,
    Discrete,
}

impl Distance {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "euclidean" => Distance::Euclidean,
            "manhattan" => Distance::Manhattan,
            "chebyshev" => Distance::Chebyshev,
            "discrete" => Distance::Discrete,
            _ => return domain(format!("unknown distance '{name}'")),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Distance::Euclidean => "euclidean",
            Distance::Manhattan => "manhattan",
            Distance::Chebyshev => "chebyshev",
            Distance::Discrete => "discrete",
        }
    }

    /// Tokens are compared with the discrete metric under every distance.
    pub fn eval(self, a: &Attr, b: &Attr) -> f64 {
        match (self, a, b) {
            (Distance::Discrete, _, _) | (_, Attr::Cat(_), _) | (_, _, Attr::Cat(_)) => {
                if a == b {
                    0.0
                } else {
                    1.0
                }
            }
            (Distance::Euclidean, Attr::Point(x), Attr::Point(y)) => x
                .iter()
                .zip(y)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt(),
            (Distance::Manhattan, Attr::Point(x), Attr::Point(y)) => {
                x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum()
            }
            (Distance::Chebyshev, Attr::Point(x), Attr::Point(y)) => x
                .iter()
                .zip(y)
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AttributeSpace {
    Tokens(Vec<Value>),
    Real { dim: usize, distance: Distance },
}

impl AttributeSpace {
    /// Number of attribute values, or `None` for a real space.
    pub fn finite_len(&self) -> Option<usize> {
        match self {
            AttributeSpace::Tokens(t) => Some(t.len()),
            AttributeSpace::Real { .. } => None,
        }
    }
}

/// The finite space Λ_V, Λ_E, 𝒳 together with the master maps and the order cap N.
#[derive(Clone, Debug)]
pub struct SpaceSpec {
    vertices: Vec<VertexLabel>,
    vindex: HashMap<String, VertexId>,
    edges: EdgeSpace,
    attributes: Option<AttributeSpace>,
    max_order: Option<usize>,
    master_vertex: Option<Vec<EdgeVal>>,
    master_attr: Option<Vec<EdgeVal>>,
}

impl SpaceSpec {
    pub fn new(vertices: Vec<VertexLabel>, edges: EdgeSpace) -> Result<Self> {
        let mut vindex = HashMap::new();
        for (i, v) in vertices.iter().enumerate() {
            if vindex.insert(v.id.clone(), i as VertexId).is_some() {
                return domain(format!("duplicate vertex label '{}'", v.id));
            }
        }
        if edges.is_empty() {
            return domain("edge space is empty");
        }
        Ok(SpaceSpec {
            vertices,
            vindex,
            edges,
            attributes: None,
            max_order: None,
            master_vertex: None,
            master_attr: None,
        })
    }

    /// Vertices labelled `"1"…"n"` and edge values `0…m-1` in chain order.
    pub fn simple(n: usize, m: usize) -> Self {
        let labels = (1..=n).map(|i| VertexLabel::plain(i.to_string())).collect();
        SpaceSpec::new(labels, EdgeSpace::chain(m)).expect("simple space")
    }

    pub fn with_attributes(mut self, attrs: AttributeSpace) -> Result<Self> {
        match &attrs {
            AttributeSpace::Tokens(t) => {
                if t.is_empty() {
                    return domain("attribute space is empty");
                }
                for (i, a) in t.iter().enumerate() {
                    if t[..i].contains(a) {
                        return domain(format!("duplicate attribute token {a}"));
                    }
                }
            }
            AttributeSpace::Real { dim, .. } => {
                if *dim == 0 {
                    return domain("real attribute space needs dim >= 1");
                }
                if self.master_attr.is_some() {
                    return domain("attribute master map needs a finite attribute space");
                }
            }
        }
        self.attributes = Some(attrs);
        Ok(self)
    }

    pub fn with_max_order(mut self, n: usize) -> Result<Self> {
        if n == 0 {
            return domain("max order must be positive");
        }
        self.max_order = Some(n);
        Ok(self)
    }

    /// `table[u][v] = F_V(u, v)`; must be square over Λ_V and symmetric.
    pub fn with_master_vertex(mut self, table: Vec<Vec<EdgeVal>>) -> Result<Self> {
        self.master_vertex = Some(self.square_table(table, self.vertices.len(), "F_V")?);
        Ok(self)
    }

    /// `table[a][b] = F_X(a, b)` over attribute tokens; must be symmetric.
    pub fn with_master_attr(mut self, table: Vec<Vec<EdgeVal>>) -> Result<Self> {
        let m = match &self.attributes {
            Some(AttributeSpace::Tokens(t)) => t.len(),
            _ => return domain("attribute master map needs a finite attribute space"),
        };
        self.master_attr = Some(self.square_table(table, m, "F_X")?);
        Ok(self)
    }

    /// `F_V(v,v') = allow` when the Chebyshev distance between locations is at most `t`,
    /// zero otherwise.
    pub fn with_grid_threshold(self, t: f64, allow: Option<EdgeVal>) -> Result<Self> {
        let allow = allow.unwrap_or_else(|| self.edges.top());
        let n = self.vertices.len();
        let mut table = vec![vec![0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let (Some(a), Some(b)) = (&self.vertices[i].loc, &self.vertices[j].loc) else {
                    return domain("grid threshold rule needs a location on every vertex");
                };
                if a.len() != b.len() {
                    return domain("vertex locations differ in dimension");
                }
                let d = a.iter().zip(b).map(|(x, y)| (x - y).abs()).max().unwrap_or(0);
                if d as f64 <= t {
                    table[i][j] = allow;
                }
            }
        }
        self.with_master_vertex(table)
    }

    fn square_table(&self, table: Vec<Vec<EdgeVal>>, n: usize, what: &str) -> Result<Vec<EdgeVal>> {
        if table.len() != n || table.iter().any(|r| r.len() != n) {
            return domain(format!("{what} table must be {n}x{n}"));
        }
        let mut flat = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                if table[i][j] != table[j][i] {
                    return domain(format!("{what} is not symmetric at ({i},{j})"));
                }
                if table[i][j] as usize >= self.edges.len() {
                    return domain(format!("{what} value out of range at ({i},{j})"));
                }
                flat.push(table[i][j]);
            }
        }
        Ok(flat)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertex_labels(&self) -> &[VertexLabel] {
        &self.vertices
    }

    pub fn vertex_id(&self, label: &str) -> Option<VertexId> {
        self.vindex.get(label).copied()
    }

    pub fn label(&self, v: VertexId) -> &str {
        &self.vertices[v as usize].id
    }

    pub fn edge_space(&self) -> &EdgeSpace {
        &self.edges
    }

    pub fn attributes(&self) -> Option<&AttributeSpace> {
        self.attributes.as_ref()
    }

    pub fn max_order(&self) -> Option<usize> {
        self.max_order
    }

    /// Largest admissible order: N if declared, else |Λ_V|.
    pub fn order_cap(&self) -> usize {
        self.max_order
            .map_or(self.vertices.len(), |n| n.min(self.vertices.len()))
    }

    pub fn has_master(&self) -> bool {
        self.master_vertex.is_some() || self.master_attr.is_some()
    }

    pub fn master_vertex(&self, u: VertexId, v: VertexId) -> Option<EdgeVal> {
        let n = self.vertices.len();
        self.master_vertex
            .as_ref()
            .map(|t| t[u as usize * n + v as usize])
    }

    pub fn master_attr(&self, a: &Attr, b: &Attr) -> Option<EdgeVal> {
        let t = self.master_attr.as_ref()?;
        let m = self.attributes.as_ref()?.finite_len()?;
        match (a, b) {
            (Attr::Cat(x), Attr::Cat(y)) => Some(t[*x as usize * m + *y as usize]),
            _ => None,
        }
    }

    /// Whether `e` is admissible on the pair `{u, v}` with attributes `xu`, `xv`.
    pub fn admits(
        &self,
        u: VertexId,
        v: VertexId,
        xu: Option<&Attr>,
        xv: Option<&Attr>,
        e: EdgeVal,
    ) -> bool {
        if let Some(f) = self.master_vertex(u, v) {
            if !self.edges.le(e, f) {
                return false;
            }
        }
        if let (Some(a), Some(b)) = (xu, xv) {
            if let Some(f) = self.master_attr(a, b) {
                if !self.edges.le(e, f) {
                    return false;
                }
            }
        }
        true
    }

    /// Admissible values on a pair, zero first.
    pub fn admissible_values(
        &self,
        u: VertexId,
        v: VertexId,
        xu: Option<&Attr>,
        xv: Option<&Attr>,
    ) -> Vec<EdgeVal> {
        (0..self.edges.len() as EdgeVal)
            .filter(|&e| self.admits(u, v, xu, xv, e))
            .collect()
    }

    /// `E(v,v') ≤ F_V(v,v')` and `E(v,v') ≤ F_X(X(v),X(v'))` for every stored edge.
    pub fn respects_master(&self, g: &Graph) -> bool {
        g.edges()
            .all(|(u, v, e)| self.admits(u, v, g.attr(u), g.attr(v), e))
    }

    /// Every value of `𝒳`, for finite attribute spaces.
    pub fn attribute_values(&self) -> Option<Vec<Attr>> {
        match &self.attributes {
            None => Some(Vec::new()),
            Some(AttributeSpace::Tokens(t)) => Some((0..t.len() as u32).map(Attr::Cat).collect()),
            Some(AttributeSpace::Real { .. }) => None,
        }
    }

    pub fn check_attr(&self, a: &Attr) -> Result<()> {
        match (&self.attributes, a) {
            (Some(AttributeSpace::Tokens(t)), Attr::Cat(c)) if (*c as usize) < t.len() => Ok(()),
            (Some(AttributeSpace::Real { dim, .. }), Attr::Point(p)) if p.len() == *dim => Ok(()),
            (None, _) => domain("space has no attribute space"),
            _ => domain(format!("attribute {a:?} is not in the attribute space")),
        }
    }

    /// Full membership check: labels, attributes, edge values, master maps, N.
    pub fn validate(&self, g: &Graph) -> Result<()> {
        let n = self.vertices.len() as VertexId;
        if let Some(&v) = g.vertices().iter().find(|&&v| v >= n) {
            return domain(format!("vertex index {v} outside the vertex space"));
        }
        if let Some(cap) = self.max_order {
            if g.order() > cap {
                return domain(format!("graph order {} exceeds N = {cap}", g.order()));
            }
        }
        match (self.attributes.is_some(), g.attrs()) {
            (true, Some(attrs)) => {
                for a in attrs {
                    self.check_attr(a)?;
                }
            }
            (true, None) if !g.is_empty() => return domain("graph is missing attributes"),
            (false, Some(_)) => return domain("graph carries attributes but the space has none"),
            _ => {}
        }
        for (u, v, e) in g.edges() {
            if e as usize >= self.edges.len() {
                return domain(format!("edge value index {e} out of range"));
            }
            if !self.admits(u, v, g.attr(u), g.attr(v), e) {
                return domain(format!(
                    "edge {}-{} violates the master interaction functions",
                    self.label(u),
                    self.label(v)
                ));
            }
        }
        Ok(())
    }

    fn check_labels(&self, vs: &[VertexId]) -> Result<()> {
        let n = self.vertices.len() as VertexId;
        match vs.iter().find(|&&v| v >= n) {
            Some(v) => domain(format!("vertex index {v} outside the vertex space")),
            None => Ok(()),
        }
    }

    /// `π_V(G)`, rejecting labels outside Λ_V.
    pub fn project(&self, g: &Graph, vs: &[VertexId]) -> Result<Graph> {
        self.check_labels(vs)?;
        Ok(g.project(vs))
    }

    /// Analytic upper bound on the number of graphs in the space (attribute masters ignored).
    pub fn size_bound(&self) -> f64 {
        let x = match &self.attributes {
            None => 1.0,
            Some(AttributeSpace::Tokens(t)) => t.len() as f64,
            Some(AttributeSpace::Real { .. }) => return f64::INFINITY,
        };
        let n = self.vertices.len();
        let pair_choices = |u: usize, v: usize| -> f64 {
            match self.master_vertex(u as VertexId, v as VertexId) {
                Some(f) => (0..self.edges.len() as EdgeVal)
                    .filter(|&e| self.edges.le(e, f))
                    .count() as f64,
                None => self.edges.len() as f64,
            }
        };
        let cap = self.order_cap();
        (0..n)
            .powerset()
            .filter(|s| s.len() <= cap)
            .map(|s| {
                let mut t = x.powi(s.len() as i32);
                for (i, &u) in s.iter().enumerate() {
                    for &v in &s[i + 1..] {
                        t *= pair_choices(u, v);
                    }
                }
                t
            })
            .sum()
    }

    /// Every graph of the space in canonical order.
    pub fn enumerate(&self, cap: u64) -> Result<Vec<Graph>> {
        if matches!(self.attributes, Some(AttributeSpace::Real { .. })) {
            return domain("cannot enumerate a space with a real attribute space");
        }
        if self.vertices.len() > 40 {
            return Err(Error::Resource {
                what: "graph space enumeration".into(),
                size: 2f64.powi(self.vertices.len() as i32),
                cap,
            });
        }
        let bound = self.size_bound();
        if bound > cap as f64 {
            return Err(Error::Resource {
                what: "graph space enumeration".into(),
                size: bound,
                cap,
            });
        }
        let attr_vals = self.attribute_values().unwrap_or_default();
        let cap_order = self.order_cap();
        let subsets: Vec<Vec<VertexId>> = (0..self.vertices.len() as VertexId)
            .powerset()
            .filter(|s| s.len() <= cap_order)
            .collect();
        let mut out: Vec<Graph> = subsets
            .par_iter()
            .flat_map_iter(|s| self.graphs_on(s, &attr_vals))
            .collect();
        out.sort();
        Ok(out)
    }

    fn graphs_on(&self, s: &[VertexId], attr_vals: &[Attr]) -> Vec<Graph> {
        let bases: Vec<Graph> = if self.attributes.is_none() || s.is_empty() {
            vec![Graph::from_vertices(s.iter().copied())]
        } else {
            (0..s.len())
                .map(|_| attr_vals.iter().cloned())
                .multi_cartesian_product()
                .map(|xs| Graph::from_attributed(s.iter().copied().zip(xs)).unwrap())
                .collect()
        };
        let pairs: Vec<(VertexId, VertexId)> = s.iter().copied().tuple_combinations().collect();
        let mut out = Vec::new();
        for base in bases {
            let choices: Vec<Vec<EdgeVal>> = pairs
                .iter()
                .map(|&(u, v)| self.admissible_values(u, v, base.attr(u), base.attr(v)))
                .collect();
            if pairs.is_empty() {
                out.push(base);
                continue;
            }
            for combo in choices.iter().map(|c| c.iter().copied()).multi_cartesian_product() {
                let mut g = base.clone();
                for (&(u, v), e) in pairs.iter().zip(combo) {
                    g.set_edge(u, v, e).unwrap();
                }
                out.push(g);
            }
        }
        out
    }
}
