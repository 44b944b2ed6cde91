//! Isomorphism at orders plain/first/second, template compatibility, induced-subgraph match
//! counting, degree-based attribution and part contraction.

use std::collections::{BTreeMap, HashMap};

use itertools::Itertools;
use rayon::prelude::*;
use serde_json::Value;

use crate::error::{domain, Error, Result};
use crate::graph::{token, Attr, Distance, EdgeVal, Graph, SpaceSpec, VertexId};

/// Tolerance for comparing real-valued distances at second order.
pub const DISTANCE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IsoOrder {
    /// Edge structure only; attributes are ignored.
    Plain,
    /// Edge structure and equal attributes.
    First,
    /// Edge structure and equal pairwise attribute distances.
    Second,
}

impl IsoOrder {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "plain" => IsoOrder::Plain,
            "first" => IsoOrder::First,
            "second" => IsoOrder::Second,
            _ => return domain(format!("unknown iso order '{s}'")),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            IsoOrder::Plain => "plain",
            IsoOrder::First => "first",
            IsoOrder::Second => "second",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Template {
    pub graph: Graph,
    pub iso_order: IsoOrder,
    pub distance: Option<Distance>,
    pub connected_only: bool,
}

impl Template {
    pub fn new(
        graph: Graph,
        iso_order: IsoOrder,
        distance: Option<Distance>,
        connected_only: bool,
    ) -> Result<Self> {
        if graph.is_empty() {
            return domain("template graph is empty");
        }
        if iso_order != IsoOrder::Plain && !graph.is_attributed() {
            return domain(format!("{} order template needs attributes", iso_order.name()));
        }
        if iso_order == IsoOrder::Second && distance.is_none() {
            return domain("second order template needs a distance");
        }
        Ok(Template {
            graph,
            iso_order,
            distance,
            connected_only,
        })
    }

    pub fn plain(graph: Graph) -> Result<Self> {
        Template::new(graph, IsoOrder::Plain, None, false)
    }

    pub fn order(&self) -> usize {
        self.graph.order()
    }

    /// Template JSON; the graph uses template-local vertex ids, attribute tokens and edge
    /// values come from `spec`.
    pub fn from_json(v: &Value, spec: &SpaceSpec) -> Result<Template> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Parse("template must be an object".into()))?;
        let gv = obj
            .get("graph")
            .ok_or_else(|| Error::Parse("template is missing 'graph'".into()))?;
        let raw: crate::graph::GraphJson = serde_json::from_value(gv.clone())
            .map_err(|e| Error::Parse(format!("template graph: {e}")))?;
        let order = match obj.get("iso_order") {
            None => IsoOrder::Plain,
            Some(Value::String(s)) => IsoOrder::parse(s)?,
            Some(o) => return Err(Error::Parse(format!("bad iso_order {o}"))),
        };
        let distance = match obj.get("distance") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(Distance::parse(s)?),
            Some(o) => return Err(Error::Parse(format!("bad distance {o}"))),
        };
        let connected_only = obj
            .get("connected_only")
            .and_then(Value::as_bool)
            .unwrap_or(false);
        let mut local: HashMap<String, VertexId> = HashMap::new();
        let mut pairs = Vec::new();
        for (i, vj) in raw.vertices.iter().enumerate() {
            let id = token(&vj.id);
            if local.insert(id.clone(), i as VertexId).is_some() {
                return Err(Error::Parse(format!("duplicate template vertex '{id}'")));
            }
            let attr = match (&vj.attr, &vj.loc) {
                (Some(a), _) => Some(spec.attr_value(a)?),
                (None, Some(l)) => Some(Attr::Point(l.iter().map(|&x| x as f64).collect())),
                (None, None) => None,
            };
            pairs.push((i as VertexId, attr));
        }
        let attributed = pairs.iter().any(|p| p.1.is_some());
        if attributed && pairs.iter().any(|p| p.1.is_none()) {
            return Err(Error::Parse("template attributes must be given on all vertices or none".into()));
        }
        let mut g = if attributed {
            Graph::from_attributed(pairs.into_iter().map(|(i, a)| (i, a.unwrap())))?
        } else {
            Graph::from_vertices(pairs.into_iter().map(|p| p.0))
        };
        for e in &raw.edges {
            let lu = |x: &Value| {
                local
                    .get(&token(x))
                    .copied()
                    .ok_or_else(|| Error::Parse(format!("unknown template vertex '{}'", token(x))))
            };
            g.set_edge(lu(&e.u)?, lu(&e.v)?, spec.edge_value(&e.val)?)?;
        }
        Template::new(g, order, distance, connected_only)
    }
}

/// Dense view of a graph: vertex list, adjacency matrix, aligned attributes.
struct Dense<'a> {
    n: usize,
    adj: Vec<EdgeVal>,
    attrs: Option<Vec<&'a Attr>>,
}

impl<'a> Dense<'a> {
    fn of(g: &'a Graph) -> Self {
        let n = g.order();
        let mut adj = vec![0; n * n];
        for (u, v, e) in g.edges() {
            let (i, j) = (g.position(u).unwrap(), g.position(v).unwrap());
            adj[i * n + j] = e;
            adj[j * n + i] = e;
        }
        Dense {
            n,
            adj,
            attrs: g.attrs().map(|a| a.iter().collect()),
        }
    }

    fn sub(&self, idx: &[usize]) -> Dense<'a> {
        let k = idx.len();
        let mut adj = vec![0; k * k];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                adj[a * k + b] = self.adj[i * self.n + j];
            }
        }
        Dense {
            n: k,
            adj,
            attrs: self.attrs.as_ref().map(|at| idx.iter().map(|&i| at[i]).collect()),
        }
    }

    fn e(&self, i: usize, j: usize) -> EdgeVal {
        self.adj[i * self.n + j]
    }

    fn connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for j in 0..self.n {
                if !seen[j] && self.e(i, j) != 0 {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == self.n
    }

    fn vertex_sig(&self, i: usize, with_attr: bool) -> (Option<&'a Attr>, Vec<EdgeVal>) {
        let mut vals: Vec<EdgeVal> = (0..self.n)
            .map(|j| self.e(i, j))
            .filter(|&e| e != 0)
            .collect();
        vals.sort_unstable();
        let a = if with_attr {
            self.attrs.as_ref().map(|a| a[i])
        } else {
            None
        };
        (a, vals)
    }

    fn sigs(&self, with_attr: bool) -> Vec<(Option<&'a Attr>, Vec<EdgeVal>)> {
        (0..self.n).map(|i| self.vertex_sig(i, with_attr)).collect()
    }
}

fn sorted<T: Ord + Clone>(v: &[T]) -> Vec<T> {
    let mut s = v.to_vec();
    s.sort();
    s
}

/// Backtracking search for an order-respecting bijection `a → b`.
fn iso_dense(a: &Dense, b: &Dense, order: IsoOrder, distance: Option<Distance>) -> bool {
    if a.n != b.n {
        return false;
    }
    let n = a.n;
    if n == 0 {
        return true;
    }
    let with_attr = order == IsoOrder::First;
    let sa = a.sigs(with_attr);
    let sb = b.sigs(with_attr);
    if sorted(&sa) != sorted(&sb) {
        return false;
    }
    // Visit vertices of `a` so that each one after the first is adjacent to an earlier one
    // when possible; rarer signatures first.
    let rarity = |i: usize| sa.iter().filter(|s| **s == sa[i]).count();
    let mut visit: Vec<usize> = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    while visit.len() < n {
        let next = (0..n)
            .filter(|&i| !placed[i])
            .max_by_key(|&i| {
                let links = visit.iter().filter(|&&j| a.e(i, j) != 0).count();
                (links, usize::MAX - rarity(i), usize::MAX - i)
            })
            .unwrap();
        placed[next] = true;
        visit.push(next);
    }
    let cands: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| sa[i] == sb[j]).collect())
        .collect();
    let dist = distance.unwrap_or(Distance::Discrete);
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];

    fn rec(
        depth: usize,
        visit: &[usize],
        cands: &[Vec<usize>],
        map: &mut [usize],
        used: &mut [bool],
        a: &Dense,
        b: &Dense,
        order: IsoOrder,
        dist: Distance,
    ) -> bool {
        if depth == visit.len() {
            return true;
        }
        let i = visit[depth];
        for &j in &cands[i] {
            if used[j] {
                continue;
            }
            let ok = visit[..depth].iter().all(|&p| {
                let q = map[p];
                if a.e(i, p) != b.e(j, q) {
                    return false;
                }
                if order == IsoOrder::Second {
                    let (aa, bb) = (a.attrs.as_ref().unwrap(), b.attrs.as_ref().unwrap());
                    let da = dist.eval(aa[i], aa[p]);
                    let db = dist.eval(bb[j], bb[q]);
                    if (da - db).abs() > DISTANCE_TOL {
                        return false;
                    }
                }
                true
            });
            if !ok {
                continue;
            }
            map[i] = j;
            used[j] = true;
            if rec(depth + 1, visit, cands, map, used, a, b, order, dist) {
                return true;
            }
            used[j] = false;
            map[i] = usize::MAX;
        }
        false
    }

    rec(0, &visit, &cands, &mut map, &mut used, a, b, order, dist)
}

/// Exact isomorphism test at the given order.
pub fn isomorphic(g1: &Graph, g2: &Graph, order: IsoOrder, distance: Option<Distance>) -> Result<bool> {
    if order != IsoOrder::Plain {
        for g in [g1, g2] {
            if !g.is_empty() && !g.is_attributed() {
                return domain(format!("{} order isomorphism needs attributes", order.name()));
            }
        }
    }
    if order == IsoOrder::Second && distance.is_none() {
        return domain("second order isomorphism needs a distance");
    }
    if g1.order() != g2.order() || g1.edge_count() != g2.edge_count() {
        return Ok(false);
    }
    Ok(iso_dense(&Dense::of(g1), &Dense::of(g2), order, distance))
}

/// `R_k(G)`: `G ≃ T_k` at the template's order, plus the connectivity filter.
pub fn compatibility(g: &Graph, t: &Template) -> Result<bool> {
    if g.order() != t.order() {
        return Ok(false);
    }
    if t.connected_only && !g.is_connected() {
        return Ok(false);
    }
    isomorphic(g, &t.graph, t.iso_order, t.distance)
}

struct Prepared {
    k: usize,
    order: IsoOrder,
    distance: Option<Distance>,
    connected_only: bool,
    connected: bool,
    edge_hist: Vec<EdgeVal>,
    graph: Graph,
}

impl Prepared {
    fn of(t: &Template) -> Self {
        let d = Dense::of(&t.graph);
        Prepared {
            k: t.order(),
            order: t.iso_order,
            distance: t.distance,
            connected_only: t.connected_only,
            connected: d.connected(),
            edge_hist: sorted(&t.graph.edges().map(|e| e.2).collect::<Vec<_>>()),
            graph: t.graph.clone(),
        }
    }

    /// Only connected subsets can match.
    fn needs_connected(&self) -> bool {
        self.connected_only || self.connected
    }

    fn matches(&self, sub: &Dense, sub_connected: bool, hist: &[EdgeVal]) -> bool {
        if self.needs_connected() && !sub_connected {
            return false;
        }
        if hist != self.edge_hist.as_slice() {
            return false;
        }
        if self.order != IsoOrder::Plain && sub.attrs.is_none() {
            return false;
        }
        iso_dense(sub, &Dense::of(&self.graph), self.order, self.distance)
    }
}

/// Counts induced subgraphs matching each of a fixed list of templates.
pub struct Counter {
    prepared: Vec<Prepared>,
    by_size: BTreeMap<usize, Vec<usize>>,
}

impl Counter {
    pub fn new(templates: &[Template]) -> Self {
        let prepared: Vec<Prepared> = templates.iter().map(Prepared::of).collect();
        let mut by_size: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, p) in prepared.iter().enumerate() {
            by_size.entry(p.k).or_default().push(i);
        }
        Counter { prepared, by_size }
    }

    pub fn len(&self) -> usize {
        self.prepared.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prepared.is_empty()
    }

    pub fn needs_attributes(&self) -> bool {
        self.prepared.iter().any(|p| p.order != IsoOrder::Plain)
    }

    /// `U(G)`.
    pub fn count(&self, g: &Graph) -> Vec<u64> {
        self.count_with(g, &[])
    }

    /// Matches among subsets that contain every vertex of `required`.
    pub fn count_containing(&self, g: &Graph, required: &[VertexId]) -> Vec<u64> {
        self.count_with(g, required)
    }

    fn count_with(&self, g: &Graph, required: &[VertexId]) -> Vec<u64> {
        let mut out = vec![0u64; self.prepared.len()];
        let dense = Dense::of(g);
        let n = dense.n;
        let req: Vec<usize> = match required.iter().map(|&v| g.position(v)).collect() {
            Some(r) => r,
            None => return out,
        };
        let nbrs: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| dense.e(i, j) != 0).collect())
            .collect();
        for (&k, group) in &self.by_size {
            if k > n || k < req.len() || k == 0 {
                continue;
            }
            let connected_enum = group.iter().all(|&t| self.prepared[t].needs_connected());
            let visit = |s: &[usize], counts: &mut Vec<u64>| {
                let sub = dense.sub(s);
                let conn = connected_enum || sub.connected();
                let hist = {
                    let mut h: Vec<EdgeVal> = Vec::new();
                    for a in 0..sub.n {
                        for b in a + 1..sub.n {
                            let e = sub.e(a, b);
                            if e != 0 {
                                h.push(e);
                            }
                        }
                    }
                    h.sort_unstable();
                    h
                };
                for (slot, &t) in group.iter().enumerate() {
                    if self.prepared[t].matches(&sub, conn, &hist) {
                        counts[slot] += 1;
                    }
                }
            };
            let counts: Vec<u64> = if connected_enum {
                let roots: Vec<usize> = match req.first() {
                    Some(&r) => vec![r],
                    None => (0..n).collect(),
                };
                let rooted = !req.is_empty();
                roots
                    .par_iter()
                    .map(|&r| {
                        let mut c = vec![0u64; group.len()];
                        esu(r, k, &nbrs, &dense, rooted, &mut |s| {
                            if req.iter().all(|q| s.contains(q)) {
                                let mut s = s.to_vec();
                                s.sort_unstable();
                                visit(&s, &mut c);
                            }
                        });
                        c
                    })
                    .reduce(|| vec![0u64; group.len()], add_vecs)
            } else {
                let others: Vec<usize> = (0..n).filter(|i| !req.contains(i)).collect();
                let free = k - req.len();
                let firsts: Vec<Option<usize>> = if free == 0 {
                    vec![None]
                } else {
                    (0..others.len()).map(Some).collect()
                };
                firsts
                    .par_iter()
                    .map(|&first| {
                        let mut c = vec![0u64; group.len()];
                        let mut emit = |rest: Vec<usize>| {
                            let mut s: Vec<usize> = req.clone();
                            s.extend(rest);
                            s.sort_unstable();
                            visit(&s, &mut c);
                        };
                        match first {
                            None => emit(Vec::new()),
                            Some(f) => {
                                for tail in others[f + 1..].iter().copied().combinations(free - 1) {
                                    let mut rest = vec![others[f]];
                                    rest.extend(tail);
                                    emit(rest);
                                }
                            }
                        }
                        c
                    })
                    .reduce(|| vec![0u64; group.len()], add_vecs)
            };
            for (slot, &t) in group.iter().enumerate() {
                out[t] += counts[slot];
            }
        }
        out
    }
}

fn add_vecs(mut a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

/// Enumerates each connected `k`-subset whose distinguished vertex is `root` exactly once.
/// Unrooted: `root` is the smallest index in the subset. Rooted: every subset containing
/// `root` is produced.
fn esu(root: usize, k: usize, nbrs: &[Vec<usize>], dense: &Dense, rooted: bool, f: &mut dyn FnMut(&[usize])) {
    let allowed = |u: usize| if rooted { u != root } else { u > root };
    let mut sub = vec![root];
    let ext: Vec<usize> = nbrs[root].iter().copied().filter(|&u| allowed(u)).collect();

    fn extend(
        sub: &mut Vec<usize>,
        mut ext: Vec<usize>,
        k: usize,
        nbrs: &[Vec<usize>],
        dense: &Dense,
        allowed: &dyn Fn(usize) -> bool,
        f: &mut dyn FnMut(&[usize]),
    ) {
        if sub.len() == k {
            f(sub);
            return;
        }
        while let Some(w) = ext.pop() {
            let mut next = ext.clone();
            for &u in &nbrs[w] {
                if allowed(u)
                    && !sub.contains(&u)
                    && u != w
                    && !next.contains(&u)
                    && sub.iter().all(|&s| dense.e(u, s) == 0)
                {
                    next.push(u);
                }
            }
            sub.push(w);
            extend(sub, next, k, nbrs, dense, allowed, f);
            sub.pop();
        }
    }

    extend(&mut sub, ext, k, nbrs, dense, &allowed, f);
}

/// `U(G)` for a list of templates.
pub fn count_matches(g: &Graph, templates: &[Template]) -> Result<Vec<u64>> {
    let counter = Counter::new(templates);
    if counter.needs_attributes() && !g.is_empty() && !g.is_attributed() {
        return domain("attributed templates need an attributed graph");
    }
    Ok(counter.count(g))
}

/// Brute-force `U(G)` over every vertex subset; the oracle for [`count_matches`].
pub fn count_matches_naive(g: &Graph, templates: &[Template]) -> Result<Vec<u64>> {
    let mut out = vec![0u64; templates.len()];
    for s in g.vertices().iter().copied().powerset() {
        let sub = g.induced_subgraph(&s)?;
        for (i, t) in templates.iter().enumerate() {
            if compatibility(&sub, t)? {
                out[i] += 1;
            }
        }
    }
    Ok(out)
}

/// Attributes each vertex by degree: bucket `i` is the first with `degree <= thresholds[i]`,
/// the last bucket takes everything above.
pub fn attribute_by_degree(g: &Graph, thresholds: &[usize], colors: &[Attr], overwrite: bool) -> Result<Graph> {
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return domain("thresholds must be strictly increasing");
    }
    if colors.len() != thresholds.len() + 1 {
        return domain("need one more color than thresholds");
    }
    if g.is_attributed() && !overwrite {
        return domain("graph is already attributed");
    }
    let attrs = g
        .vertices()
        .iter()
        .map(|&v| {
            let d = g.degree(v);
            let b = thresholds.iter().position(|&t| d <= t).unwrap_or(thresholds.len());
            colors[b].clone()
        })
        .collect();
    g.with_attrs(attrs)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Occurrence {
    pub part: usize,
    pub vertices: Vec<VertexId>,
}

#[derive(Clone, Debug)]
pub struct Contraction {
    /// Super-graph: vertex `i` is `occurrences[i]`, attributed with its part index; edge value
    /// is the number of shared original vertices.
    pub graph: Graph,
    pub occurrences: Vec<Occurrence>,
    pub uncovered: Vec<VertexId>,
}

/// One super-vertex per occurrence of a part; occurrences sorted by (part, vertex set).
pub fn contract_parts(g: &Graph, parts: &[Template], occurrence_cap: usize) -> Result<Contraction> {
    let mut occ: Vec<Occurrence> = Vec::new();
    for (pi, t) in parts.iter().enumerate() {
        if t.order() > g.order() {
            continue;
        }
        for s in g.vertices().iter().copied().combinations(t.order()) {
            let sub = g.induced_subgraph(&s)?;
            if compatibility(&sub, t)? {
                occ.push(Occurrence {
                    part: pi,
                    vertices: s,
                });
                if occ.len() > occurrence_cap {
                    return Err(Error::Resource {
                        what: "part occurrences".into(),
                        size: occ.len() as f64,
                        cap: occurrence_cap as u64,
                    });
                }
            }
        }
    }
    occ.sort_by(|a, b| (a.part, &a.vertices).cmp(&(b.part, &b.vertices)));
    let mut sg = Graph::from_attributed(
        occ.iter()
            .enumerate()
            .map(|(i, o)| (i as VertexId, Attr::Cat(o.part as u32))),
    )?;
    for i in 0..occ.len() {
        for j in i + 1..occ.len() {
            let shared = occ[i]
                .vertices
                .iter()
                .filter(|v| occ[j].vertices.contains(v))
                .count();
            if shared > 0 {
                sg.set_edge(i as VertexId, j as VertexId, shared as EdgeVal)?;
            }
        }
    }
    let uncovered = g
        .vertices()
        .iter()
        .copied()
        .filter(|v| !occ.iter().any(|o| o.vertices.contains(v)))
        .collect();
    Ok(Contraction {
        graph: sg,
        occurrences: occ,
        uncovered,
    })
}
