//! Atomic variables of a graph space, neighborhood functions and their cliques, Gibbs and
//! Markov checks, the naive product model, and chain-graph analysis and evaluation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use itertools::Itertools;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{domain, Error, Result};
use crate::graph::{sum_tolerance, token, DistributionTable, Graph, SpaceSpec, VertexId, DEFAULT_CAP};
use crate::mcmc::chain_rng;

/// Singletons then pairs over `n` vertices, in lexicographic order within each size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AtomicIndex {
    n: usize,
    atoms: Vec<Vec<VertexId>>,
    pos: HashMap<Vec<VertexId>, usize>,
}

impl AtomicIndex {
    pub fn new(n: usize) -> Self {
        let mut atoms: Vec<Vec<VertexId>> = (0..n as VertexId).map(|v| vec![v]).collect();
        atoms.extend((0..n as VertexId).tuple_combinations().map(|(u, v)| vec![u, v]));
        let pos = atoms.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect();
        AtomicIndex { n, atoms, pos }
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Vec<VertexId>] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &[VertexId] {
        &self.atoms[i]
    }

    pub fn position(&self, vs: &[VertexId]) -> Option<usize> {
        self.pos.get(vs).copied()
    }

    pub fn is_subset(&self, i: usize, j: usize) -> bool {
        i != j && self.atoms[i].iter().all(|v| self.atoms[j].contains(v))
    }

    /// Text label such as `{1,2}` using the space's vertex labels.
    pub fn label(&self, i: usize, spec: &SpaceSpec) -> String {
        format!("{{{}}}", self.atoms[i].iter().map(|&v| spec.label(v)).join(","))
    }
}

/// A symmetric 0/1 table over the atomic index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborhoodFunction {
    index: AtomicIndex,
    table: Vec<bool>,
}

impl NeighborhoodFunction {
    fn filled(index: AtomicIndex, f: impl Fn(usize, usize) -> bool) -> Self {
        let m = index.len();
        let mut table = vec![false; m * m];
        for i in 0..m {
            for j in 0..m {
                table[i * m + j] = i != j && f(i, j);
            }
        }
        NeighborhoodFunction { index, table }
    }

    pub fn complete(index: AtomicIndex) -> Self {
        Self::filled(index, |_, _| true)
    }

    /// Only the required subset links: the naive model's structure, symmetrized.
    pub fn minimal(index: AtomicIndex) -> Self {
        let idx = index.clone();
        Self::filled(index, move |i, j| idx.is_subset(i, j) || idx.is_subset(j, i))
    }

    /// Pairs `(i, j)` that a valid function may set either way, in lexicographic order.
    pub fn free_pairs(index: &AtomicIndex) -> Vec<(usize, usize)> {
        (0..index.len())
            .tuple_combinations()
            .filter(|&(i, j)| !(index.is_subset(i, j) || index.is_subset(j, i)))
            .collect()
    }

    /// The valid function whose free pairs are switched on by the bits of `mask`.
    pub fn from_free_mask(index: AtomicIndex, mask: u64) -> Self {
        let mut n = Self::minimal(index);
        for (b, (i, j)) in Self::free_pairs(&n.index).into_iter().enumerate() {
            if mask >> b & 1 == 1 {
                n.set(i, j, true);
            }
        }
        n
    }

    /// Every valid function on the index.
    pub fn all_valid(index: &AtomicIndex) -> Result<Vec<NeighborhoodFunction>> {
        let free = Self::free_pairs(index).len();
        if free > 20 {
            return Err(Error::Resource {
                what: "neighborhood functions".into(),
                size: 2f64.powi(free as i32),
                cap: 1 << 20,
            });
        }
        Ok((0..1u64 << free).map(|m| Self::from_free_mask(index.clone(), m)).collect())
    }

    /// A table from explicit rows; validity is not enforced here.
    pub fn from_table(index: AtomicIndex, rows: Vec<Vec<bool>>) -> Result<Self> {
        let m = index.len();
        if rows.len() != m || rows.iter().any(|r| r.len() != m) {
            return domain("neighborhood table has the wrong shape");
        }
        Ok(NeighborhoodFunction {
            index,
            table: rows.into_iter().flatten().collect(),
        })
    }

    pub fn index(&self) -> &AtomicIndex {
        &self.index
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.table[i * self.index.len() + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        let m = self.index.len();
        self.table[i * m + j] = on;
        self.table[j * m + i] = on;
    }

    /// Symmetric, and linking every atom to the atoms it contains.
    pub fn validate(&self) -> bool {
        let m = self.index.len();
        (0..m).all(|i| {
            (0..m).all(|j| {
                self.get(i, j) == self.get(j, i)
                    && (!(self.index.is_subset(i, j) || self.index.is_subset(j, i)) || self.get(i, j))
            })
        })
    }

    /// `u(V) = {V' : V ⊆ V'}`.
    pub fn up_set(&self, i: usize) -> Vec<usize> {
        (0..self.index.len())
            .filter(|&j| j == i || self.index.is_subset(i, j))
            .collect()
    }

    /// `J_V = {V' ∉ u(V) : 𝒩(V, V') = 1}`.
    pub fn blanket(&self, i: usize) -> Vec<usize> {
        let up = self.up_set(i);
        (0..self.index.len())
            .filter(|j| !up.contains(j) && self.get(i, *j))
            .collect()
    }
}

/// Maximal cliques of an undirected graph on `≤ 128` nodes given as adjacency rows.
pub fn maximal_cliques(adj: &[Vec<bool>]) -> Result<Vec<Vec<usize>>> {
    let m = adj.len();
    if m > 128 {
        return domain("clique search is limited to 128 nodes");
    }
    let rows: Vec<u128> = adj
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.iter()
                .enumerate()
                .filter(|&(j, &b)| b && j != i)
                .fold(0u128, |acc, (j, _)| acc | 1 << j)
        })
        .collect();
    let mut out = Vec::new();
    let all = if m == 128 { u128::MAX } else { (1u128 << m) - 1 };
    bron_kerbosch(0, all, 0, &rows, &mut out);
    let mut cliques: Vec<Vec<usize>> = out
        .into_iter()
        .map(|c| (0..m).filter(|&i| c >> i & 1 == 1).collect())
        .collect();
    cliques.sort();
    Ok(cliques)
}

fn bron_kerbosch(r: u128, mut p: u128, mut x: u128, adj: &[u128], out: &mut Vec<u128>) {
    if p == 0 && x == 0 {
        out.push(r);
        return;
    }
    let pivot = (p | x).trailing_zeros() as usize;
    let mut cand = p & !adj[pivot];
    while cand != 0 {
        let v = cand.trailing_zeros() as usize;
        cand &= cand - 1;
        bron_kerbosch(r | 1 << v, p & adj[v], x & adj[v], adj, out);
        p &= !(1 << v);
        x |= 1 << v;
    }
}

/// `𝕍_𝒩`: unions of clique collections, ordered by size then lexicographically.
pub fn cliques(n: &NeighborhoodFunction) -> Result<Vec<Vec<VertexId>>> {
    let idx = n.index();
    let m = idx.len();
    let adj: Vec<Vec<bool>> = (0..m).map(|i| (0..m).map(|j| n.get(i, j)).collect()).collect();
    let mut unions: BTreeSet<Vec<VertexId>> = BTreeSet::new();
    for c in maximal_cliques(&adj)? {
        let mut masks: HashSet<u64> = HashSet::from([0u64]);
        for &a in &c {
            let bits = idx.atom(a).iter().fold(0u64, |acc, &v| acc | 1 << v);
            let next: Vec<u64> = masks.iter().map(|&s| s | bits).collect();
            masks.extend(next);
        }
        for s in masks.into_iter().filter(|&s| s != 0) {
            unions.insert((0..64).filter(|&v| s >> v & 1 == 1).collect());
        }
    }
    let mut out: Vec<Vec<VertexId>> = unions.into_iter().collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(out)
}

/// A Gibbs-wrt-`𝒩` law with the factor values that produced it.
#[derive(Clone, Debug)]
pub struct GibbsWrt {
    pub dist: DistributionTable<Graph>,
    pub cliques: Vec<Vec<VertexId>>,
    /// `φ_{V(H)}(H)` for every clique vertex set and every graph `H` on exactly that set.
    pub factors: BTreeMap<Graph, f64>,
}

/// `P(G) ∝ ∏_{V ∈ 𝕍_𝒩, V ⊆ V(G)} φ_V(G_V)` with `φ` drawn from `U[0.1, 1]` in canonical
/// order, or `φ ≡ 1` when `seed` is `None`.
pub fn random_gibbs_wrt(n: &NeighborhoodFunction, spec: &SpaceSpec, seed: Option<u64>) -> Result<GibbsWrt> {
    if n.index().num_vertices() != spec.num_vertices() {
        return domain("neighborhood function and space disagree on the vertex count");
    }
    let space = spec.enumerate(DEFAULT_CAP)?;
    let cl = cliques(n)?;
    let mut rng = seed.map(|s| chain_rng(s, 0));
    let mut factors = BTreeMap::new();
    for c in &cl {
        for h in space.iter().filter(|g| g.vertices() == c.as_slice()) {
            let phi = match rng.as_mut() {
                Some(r) => r.random_range(0.1..=1.0),
                None => 1.0,
            };
            factors.insert(h.clone(), phi);
        }
    }
    let weights: Vec<f64> = space
        .par_iter()
        .map(|g| {
            cl.iter()
                .filter(|c| c.iter().all(|v| g.contains(*v)))
                .map(|c| factors[&g.project(c)])
                .product()
        })
        .collect();
    let dist = DistributionTable::from_weights(space, weights)?;
    Ok(GibbsWrt {
        dist,
        cliques: cl,
        factors,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MarkovFailure {
    pub atom: Vec<VertexId>,
    pub state: String,
    pub full_conditional: f64,
    pub blanket_conditional: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MarkovReport {
    pub markov: bool,
    pub comparisons: usize,
    /// Conditioning contexts seen only on zero-probability graphs.
    pub skipped: usize,
    pub failures: Vec<MarkovFailure>,
}

/// Compares `P(G_V | G_{V'}, V' ∉ u(V))` with `P(G_V | G_{V'}, V' ∈ J_V)` at tolerance `tol`
/// for every atom `V` and every positive-probability context.
pub fn is_markov(dist: &DistributionTable<Graph>, n: &NeighborhoodFunction, tol: f64) -> MarkovReport {
    let idx = n.index();
    let m = idx.len();
    let mut interner: Vec<HashMap<Graph, u32>> = vec![HashMap::new(); m];
    let values: Vec<Vec<u32>> = dist
        .support()
        .iter()
        .map(|g| {
            (0..m)
                .map(|i| {
                    let pg = g.project(idx.atom(i));
                    let next = interner[i].len() as u32;
                    *interner[i].entry(pg).or_insert(next)
                })
                .collect()
        })
        .collect();
    let per_atom: Vec<(usize, usize, Vec<MarkovFailure>)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let up = n.up_set(i);
            let rest: Vec<usize> = (0..m).filter(|j| !up.contains(j)).collect();
            let blanket = n.blanket(i);
            let key = |row: &[u32], cols: &[usize]| -> Vec<u32> { cols.iter().map(|&c| row[c]).collect() };
            let mut full: HashMap<Vec<u32>, f64> = HashMap::new();
            let mut full_a: HashMap<(Vec<u32>, u32), f64> = HashMap::new();
            let mut bl: HashMap<Vec<u32>, f64> = HashMap::new();
            let mut bl_a: HashMap<(Vec<u32>, u32), f64> = HashMap::new();
            let mut zero_ctx: HashSet<Vec<u32>> = HashSet::new();
            let mut seen_a: BTreeSet<u32> = BTreeSet::new();
            let mut ctx_rows: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
            for (r, (row, p)) in values.iter().zip(dist.probs()).enumerate() {
                let b1 = key(row, &rest);
                if *p <= 0.0 {
                    zero_ctx.insert(b1);
                    continue;
                }
                let b2 = key(row, &blanket);
                let a = row[i];
                seen_a.insert(a);
                *full.entry(b1.clone()).or_insert(0.0) += p;
                *full_a.entry((b1.clone(), a)).or_insert(0.0) += p;
                *bl.entry(b2.clone()).or_insert(0.0) += p;
                *bl_a.entry((b2, a)).or_insert(0.0) += p;
                ctx_rows.entry(b1).or_insert(r);
            }
            let skipped = zero_ctx.iter().filter(|b| !full.contains_key(*b)).count();
            let mut comparisons = 0;
            let mut failures = Vec::new();
            for (b1, &r) in &ctx_rows {
                let b2 = key(&values[r], &blanket);
                for &a in &seen_a {
                    comparisons += 1;
                    let lhs = full_a.get(&(b1.clone(), a)).copied().unwrap_or(0.0) / full[b1];
                    let rhs = bl_a.get(&(b2.clone(), a)).copied().unwrap_or(0.0) / bl[&b2];
                    if (lhs - rhs).abs() > tol {
                        failures.push(MarkovFailure {
                            atom: idx.atom(i).to_vec(),
                            state: dist.support()[r].encode(),
                            full_conditional: lhs,
                            blanket_conditional: rhs,
                        });
                    }
                }
            }
            (comparisons, skipped, failures)
        })
        .collect();
    let mut report = MarkovReport {
        markov: true,
        comparisons: 0,
        skipped: 0,
        failures: Vec::new(),
    };
    for (c, s, f) in per_atom {
        report.comparisons += c;
        report.skipped += s;
        report.failures.extend(f);
    }
    report.markov = report.failures.is_empty();
    report
}

/// Independent vertex presences and, given both endpoints, independent edge values.
#[derive(Clone, Debug)]
pub struct NaiveModel {
    pub vertex_probs: Vec<f64>,
    /// Edge-value law for each pair `(u, v)`, `u < v`, used when both are present.
    pub edge_tables: BTreeMap<(VertexId, VertexId), Vec<f64>>,
}

impl NaiveModel {
    pub fn validate(&self, spec: &SpaceSpec) -> Result<()> {
        let n = spec.num_vertices();
        if spec.attributes().is_some() {
            return domain("the naive model covers unattributed spaces only");
        }
        if self.vertex_probs.len() != n || self.vertex_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return domain("one vertex probability in [0,1] per vertex is required");
        }
        let m = spec.edge_space().len();
        for (u, v) in (0..n as VertexId).tuple_combinations() {
            let t = self
                .edge_tables
                .get(&(u, v))
                .ok_or_else(|| Error::Domain(format!("no edge table for ({u},{v})")))?;
            if t.len() != m || t.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return domain(format!("edge table for ({u},{v}) is malformed"));
            }
            let s: f64 = t.iter().sum();
            if (s - 1.0).abs() > sum_tolerance(m) {
                return domain(format!("edge table for ({u},{v}) sums to {s}"));
            }
            let ok = spec.admissible_values(u, v, None, None);
            if t.iter().enumerate().any(|(e, &p)| p > 0.0 && !ok.contains(&(e as u16))) {
                return domain(format!("edge table for ({u},{v}) puts mass on inadmissible values"));
            }
        }
        Ok(())
    }

    /// A model whose edge law is the same table for every pair.
    pub fn homogeneous(vertex_probs: Vec<f64>, edge: Vec<f64>) -> Self {
        let n = vertex_probs.len() as VertexId;
        NaiveModel {
            vertex_probs,
            edge_tables: (0..n).tuple_combinations().map(|p| (p, edge.clone())).collect(),
        }
    }

    /// `∏_v P(G_{v}) ∏_{v,v'} P(G_{v,v'} | G_{v}, G_{v'})`.
    pub fn eval(&self, spec: &SpaceSpec, g: &Graph) -> Result<f64> {
        self.validate(spec)?;
        spec.validate(g)?;
        let mut p = 1.0;
        for v in 0..spec.num_vertices() as VertexId {
            let q = self.vertex_probs[v as usize];
            p *= if g.contains(v) { q } else { 1.0 - q };
        }
        for (&u, &v) in g.vertices().iter().tuple_combinations() {
            p *= self.edge_tables[&(u, v)][g.edge(u, v) as usize];
        }
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mark {
    Directed,
    Undirected,
}

/// A partially directed graph over labelled nodes; nodes may stand for atomic vertex sets.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureGraph {
    labels: Vec<String>,
    atoms: Option<Vec<Vec<VertexId>>>,
    /// `directed[a * n + b]`: `a → b`.
    directed: Vec<bool>,
    undirected: Vec<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeMarkJson {
    a: Value,
    b: Value,
    mark: Mark,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StructureJson {
    vertices: Vec<Value>,
    #[serde(default)]
    edges: Vec<EdgeMarkJson>,
}

impl StructureGraph {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        StructureGraph {
            labels,
            atoms: None,
            directed: vec![false; n * n],
            undirected: vec![false; n * n],
        }
    }

    /// Nodes are the atoms of `index`, labelled with the space's vertex labels.
    pub fn over_atoms(index: &AtomicIndex, spec: &SpaceSpec) -> Self {
        let labels = (0..index.len()).map(|i| index.label(i, spec)).collect();
        let mut h = Self::new(labels);
        h.atoms = Some(index.atoms().to_vec());
        h
    }

    /// Vertex atoms and pair atoms each fully joined by undirected edges, with `{v} → {v,v'}`.
    pub fn vertex_pair_chain(index: &AtomicIndex, spec: &SpaceSpec) -> Self {
        let mut h = Self::over_atoms(index, spec);
        let n = index.num_vertices();
        for i in 0..index.len() {
            for j in i + 1..index.len() {
                let (si, sj) = (index.atom(i).len(), index.atom(j).len());
                if si == sj {
                    h.set_mark(i, j, Some(Mark::Undirected)).unwrap();
                } else if index.is_subset(i, j) {
                    h.set_mark(i, j, Some(Mark::Directed)).unwrap();
                }
            }
        }
        debug_assert!(n == 0 || h.len() == n + n * (n - 1) / 2);
        h
    }

    /// Vertex tokens may be arrays of space vertex labels, which become atoms when `spec` is given.
    pub fn from_json(v: &Value, spec: Option<&SpaceSpec>) -> Result<Self> {
        let raw: StructureJson =
            serde_json::from_value(v.clone()).map_err(|e| Error::Parse(format!("structure graph: {e}")))?;
        let tokens: Vec<String> = raw.vertices.iter().map(token).collect();
        let mut h = Self::new(tokens.clone());
        if let Some(spec) = spec {
            if !raw.vertices.is_empty() && raw.vertices.iter().all(|t| t.is_array()) {
                let atoms = raw
                    .vertices
                    .iter()
                    .map(|t| {
                        let mut a: Vec<VertexId> = t
                            .as_array()
                            .unwrap()
                            .iter()
                            .map(|x| spec.vertex_ref(x))
                            .collect::<Result<_>>()?;
                        a.sort_unstable();
                        Ok(a)
                    })
                    .collect::<Result<Vec<_>>>()?;
                h.labels = atoms
                    .iter()
                    .map(|a| format!("{{{}}}", a.iter().map(|&v| spec.label(v)).join(",")))
                    .collect();
                h.atoms = Some(atoms);
            }
        }
        let find = |t: &Value| -> Result<usize> {
            let s = token(t);
            tokens
                .iter()
                .position(|l| *l == s)
                .ok_or_else(|| Error::Parse(format!("unknown structure vertex {s}")))
        };
        for e in raw.edges {
            let (a, b) = (find(&e.a)?, find(&e.b)?);
            h.set_mark(a, b, Some(e.mark))?;
        }
        Ok(h)
    }

    /// Atom-carrying graphs write each vertex as the array of its space vertex labels.
    pub fn to_json(&self, spec: Option<&SpaceSpec>) -> Value {
        let vertices: Vec<Value> = match (&self.atoms, spec) {
            (Some(atoms), Some(spec)) => atoms
                .iter()
                .map(|a| Value::from(a.iter().map(|&v| spec.label(v).to_string()).collect::<Vec<_>>()))
                .collect(),
            _ => self.labels.iter().map(|l| Value::from(l.as_str())).collect(),
        };
        let n = self.len();
        let mut edges = Vec::new();
        for a in 0..n {
            for b in 0..n {
                let node = |i: usize| vertices[i].clone();
                if self.directed[a * n + b] {
                    edges.push(serde_json::json!({"a": node(a), "b": node(b), "mark": "directed"}));
                } else if a < b && self.undirected[a * n + b] {
                    edges.push(serde_json::json!({"a": node(a), "b": node(b), "mark": "undirected"}));
                }
            }
        }
        serde_json::json!({"vertices": vertices, "edges": edges})
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn atoms(&self) -> Option<&[Vec<VertexId>]> {
        self.atoms.as_deref()
    }

    pub fn set_atoms(&mut self, atoms: Vec<Vec<VertexId>>) -> Result<()> {
        if atoms.len() != self.len() {
            return domain("one atom per structure vertex is required");
        }
        self.atoms = Some(atoms);
        Ok(())
    }

    /// Replaces whatever mark the pair carried; `a → b` for directed marks.
    pub fn set_mark(&mut self, a: usize, b: usize, mark: Option<Mark>) -> Result<()> {
        let n = self.len();
        if a >= n || b >= n || a == b {
            return domain(format!("invalid structure edge ({a},{b})"));
        }
        for (x, y) in [(a, b), (b, a)] {
            self.directed[x * n + y] = false;
            self.undirected[x * n + y] = false;
        }
        match mark {
            Some(Mark::Directed) => self.directed[a * n + b] = true,
            Some(Mark::Undirected) => {
                self.undirected[a * n + b] = true;
                self.undirected[b * n + a] = true;
            }
            None => {}
        }
        Ok(())
    }

    pub fn has_directed(&self, a: usize, b: usize) -> bool {
        self.directed[a * self.len() + b]
    }

    pub fn has_undirected(&self, a: usize, b: usize) -> bool {
        self.undirected[a * self.len() + b]
    }

    pub fn parents(&self, v: usize) -> Vec<usize> {
        (0..self.len()).filter(|&a| self.has_directed(a, v)).collect()
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        (0..self.len()).filter(|&a| self.has_undirected(a, v)).collect()
    }

    fn undirected_components(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut comp = vec![usize::MAX; n];
        let mut out = Vec::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![s];
            comp[s] = id;
            let mut q = VecDeque::from([s]);
            while let Some(x) = q.pop_front() {
                for y in self.neighbors(x) {
                    if comp[y] == usize::MAX {
                        comp[y] = id;
                        members.push(y);
                        q.push_back(y);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    fn undirected_path(&self, from: usize, to: usize) -> Vec<usize> {
        let n = self.len();
        let mut prev = vec![usize::MAX; n];
        prev[from] = from;
        let mut q = VecDeque::from([from]);
        while let Some(x) = q.pop_front() {
            if x == to {
                break;
            }
            for y in self.neighbors(x) {
                if prev[y] == usize::MAX {
                    prev[y] = x;
                    q.push_back(y);
                }
            }
        }
        let mut path = vec![to];
        let mut cur = to;
        while cur != from {
            cur = prev[cur];
            path.push(cur);
        }
        path.reverse();
        path
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainReport {
    pub is_chain_graph: bool,
    /// Node sequence `v1, …, vn`: each step follows an arrow forward or an undirected edge,
    /// returning to `v1`, with at least one arrow.
    pub cycle_witness: Option<Vec<usize>>,
    pub components: Vec<Vec<usize>>,
}

pub fn chain_analyze(h: &StructureGraph) -> ChainReport {
    let components = h.undirected_components();
    let n = h.len();
    let mut comp_of = vec![0; n];
    for (c, members) in components.iter().enumerate() {
        for &v in members {
            comp_of[v] = c;
        }
    }
    for a in 0..n {
        for b in 0..n {
            if h.has_directed(a, b) && comp_of[a] == comp_of[b] {
                let mut w = vec![a];
                let back = h.undirected_path(b, a);
                w.extend(&back[..back.len() - 1]);
                return ChainReport {
                    is_chain_graph: false,
                    cycle_witness: Some(w),
                    components,
                };
            }
        }
    }
    // cycles among components
    let k = components.len();
    let mut arcs: Vec<Vec<Arc>> = vec![Vec::new(); k];
    for a in 0..n {
        for b in 0..n {
            if h.has_directed(a, b) {
                arcs[comp_of[a]].push(Arc {
                    from: comp_of[a],
                    to: comp_of[b],
                    tail: a,
                    head: b,
                });
            }
        }
    }
    let mut state = vec![0u8; k];
    let mut stack = Vec::new();
    for s in 0..k {
        if state[s] != 0 {
            continue;
        }
        if let Some(cycle) = dfs_cycle(s, &arcs, &mut state, &mut stack) {
            let mut w = Vec::new();
            for (i, arc) in cycle.iter().enumerate() {
                let next_tail = cycle[(i + 1) % cycle.len()].tail;
                w.push(arc.tail);
                let path = h.undirected_path(arc.head, next_tail);
                w.extend(&path[..path.len() - 1]);
            }
            return ChainReport {
                is_chain_graph: false,
                cycle_witness: Some(w),
                components,
            };
        }
    }
    ChainReport {
        is_chain_graph: true,
        cycle_witness: None,
        components,
    }
}

#[derive(Clone, Copy, Debug)]
struct Arc {
    from: usize,
    to: usize,
    tail: usize,
    head: usize,
}

fn dfs_cycle(c: usize, arcs: &[Vec<Arc>], state: &mut [u8], stack: &mut Vec<Arc>) -> Option<Vec<Arc>> {
    state[c] = 1;
    for &arc in &arcs[c] {
        stack.push(arc);
        if state[arc.to] == 1 {
            let start = stack.iter().position(|x| x.from == arc.to).expect("component on stack");
            return Some(stack[start..].to_vec());
        }
        if state[arc.to] == 0 {
            if let Some(cy) = dfs_cycle(arc.to, arcs, state, stack) {
                return Some(cy);
            }
        }
        stack.pop();
    }
    state[c] = 2;
    None
}

/// `pa(K) = ∪_{v ∈ K} pa(v) ∖ K`.
pub fn component_parents(h: &StructureGraph, k: &[usize]) -> Vec<usize> {
    let mut pa: BTreeSet<usize> = BTreeSet::new();
    for &v in k {
        pa.extend(h.parents(v));
    }
    pa.into_iter().filter(|p| !k.contains(p)).collect()
}

/// Maximal cliques of the moralization of `H_{K ∪ pa(K)}`, as structure node indices.
pub fn moral_cliques(h: &StructureGraph, k: &[usize]) -> Result<Vec<Vec<usize>>> {
    let pa = component_parents(h, k);
    let nodes: Vec<usize> = k.iter().chain(&pa).copied().sorted().collect();
    let m = nodes.len();
    let mut adj = vec![vec![false; m]; m];
    for i in 0..m {
        for j in 0..m {
            let (a, b) = (nodes[i], nodes[j]);
            if i != j
                && (h.has_undirected(a, b)
                    || h.has_directed(a, b)
                    || h.has_directed(b, a)
                    || (pa.contains(&a) && pa.contains(&b)))
            {
                adj[i][j] = true;
            }
        }
    }
    Ok(maximal_cliques(&adj)?
        .into_iter()
        .map(|c| c.into_iter().map(|i| nodes[i]).collect())
        .collect())
}

/// `P(G) = ∏_K P(G_K | G_{pa(K)})` with each conditional normalized over the `K`-values
/// realizable in the space under the parent context. `factor(C, values)` receives the
/// clique's node indices and the projected graphs `G_V` of its atoms.
pub fn chain_eval<F>(h: &StructureGraph, spec: &SpaceSpec, factor: F) -> Result<DistributionTable<Graph>>
where
    F: Fn(&[usize], &[Graph]) -> f64 + Sync,
{
    let report = chain_analyze(h);
    if !report.is_chain_graph {
        return domain(format!(
            "not a chain graph; cycle {:?}",
            report.cycle_witness.unwrap_or_default()
        ));
    }
    let atoms = h
        .atoms()
        .ok_or_else(|| Error::Domain("structure vertices must carry atomic vertex sets".into()))?;
    let space = spec.enumerate(DEFAULT_CAP)?;
    let values: Vec<Vec<Graph>> = space
        .par_iter()
        .map(|g| atoms.iter().map(|a| g.project(a)).collect())
        .collect();
    let mut probs = vec![1.0; space.len()];
    for k in &report.components {
        let pa = component_parents(h, k);
        let cls = moral_cliques(h, k)?;
        let weight = |row: &[Graph]| -> f64 {
            cls.iter()
                .map(|c| {
                    let vals: Vec<Graph> = c.iter().map(|&i| row[i].clone()).collect();
                    factor(c, &vals)
                })
                .product()
        };
        // distinct K-values per parent context
        let mut contexts: HashMap<Vec<&Graph>, BTreeMap<Vec<&Graph>, usize>> = HashMap::new();
        for (r, row) in values.iter().enumerate() {
            let ctx: Vec<&Graph> = pa.iter().map(|&i| &row[i]).collect();
            let kv: Vec<&Graph> = k.iter().map(|&i| &row[i]).collect();
            contexts.entry(ctx).or_default().entry(kv).or_insert(r);
        }
        let mut z: HashMap<Vec<&Graph>, f64> = HashMap::new();
        for (ctx, reps) in &contexts {
            let total: f64 = reps.values().map(|&r| weight(&values[r])).sum();
            if !(total > 0.0) || !total.is_finite() {
                let desc = ctx.iter().map(|g| g.encode()).join(" ; ");
                return Err(Error::Degenerate(format!("normalizer is {total} in parent context [{desc}]")));
            }
            z.insert(ctx.clone(), total);
        }
        for (r, row) in values.iter().enumerate() {
            let ctx: Vec<&Graph> = pa.iter().map(|&i| &row[i]).collect();
            probs[r] *= weight(row) / z[&ctx];
        }
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return domain(format!(
            "component conditionals do not compose to a distribution (total {total})"
        ));
    }
    DistributionTable::new(space, probs)
}

#[derive(Clone, Debug, Serialize)]
pub struct BnReport {
    pub valid: bool,
    pub errors: Vec<String>,
    pub advisories: Vec<String>,
}

/// A Bayesian-network structure over the atoms: directed marks only, acyclic, and each pair
/// atom a child of both of its vertex atoms.
pub fn validate_bn_structure(h: &StructureGraph) -> BnReport {
    let mut errors = Vec::new();
    let mut advisories = Vec::new();
    let n = h.len();
    if (0..n).any(|a| (0..n).any(|b| h.has_undirected(a, b))) {
        errors.push("undirected edge in a Bayesian-network structure".into());
    }
    let r = chain_analyze(h);
    if !r.is_chain_graph {
        errors.push(format!("directed cycle {:?}", r.cycle_witness.unwrap_or_default()));
    }
    match h.atoms() {
        None => advisories.push("structure vertices carry no atoms; dependency rule not checked".into()),
        Some(atoms) => {
            for (j, pair) in atoms.iter().enumerate().filter(|(_, a)| a.len() == 2) {
                for &v in pair {
                    match atoms.iter().position(|a| a.as_slice() == [v]) {
                        Some(i) if h.has_directed(i, j) => {}
                        Some(i) => errors.push(format!("{} -> {} missing", h.labels[i], h.labels[j])),
                        None => advisories.push(format!("vertex atom for {v} absent")),
                    }
                }
            }
        }
    }
    BnReport {
        valid: errors.is_empty(),
        errors,
        advisories,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(n: usize) -> AtomicIndex {
        AtomicIndex::new(n)
    }

    #[test]
    fn atomic_index_order() {
        let i = idx(3);
        assert_eq!(i.atoms(), &[vec![0], vec![1], vec![2], vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(i.position(&[0, 2]), Some(4));
        assert!(i.is_subset(0, 3));
        assert!(!i.is_subset(3, 3));
    }

    #[test]
    fn neighborhood_validation() {
        assert!(NeighborhoodFunction::complete(idx(3)).validate());
        assert!(NeighborhoodFunction::minimal(idx(3)).validate());
        let mut n = NeighborhoodFunction::complete(idx(2));
        n.set(0, 2, false);
        assert!(!n.validate());
        assert_eq!(NeighborhoodFunction::free_pairs(&idx(3)).len(), 9);
        assert_eq!(NeighborhoodFunction::all_valid(&idx(3)).unwrap().len(), 512);
        assert!(NeighborhoodFunction::all_valid(&idx(3)).unwrap().iter().all(|n| n.validate()));
    }

    #[test]
    fn clique_sets() {
        assert_eq!(
            cliques(&NeighborhoodFunction::minimal(idx(2))).unwrap(),
            vec![vec![0], vec![1], vec![0, 1]]
        );
        assert!(cliques(&NeighborhoodFunction::complete(idx(3)))
            .unwrap()
            .contains(&vec![0, 1, 2]));
        assert_eq!(cliques(&NeighborhoodFunction::minimal(idx(1))).unwrap(), vec![vec![0]]);
        // minimal 𝒩 on three vertices: no clique reaches all three
        let c = cliques(&NeighborhoodFunction::minimal(idx(3))).unwrap();
        assert_eq!(c.len(), 6);
    }

    #[test]
    fn gibbs_hand_expansion() {
        let spec = SpaceSpec::simple(2, 2);
        let n = NeighborhoodFunction::minimal(idx(2));
        let gw = random_gibbs_wrt(&n, &spec, Some(11)).unwrap();
        let f = &gw.factors;
        let v0 = Graph::from_vertices([0]);
        let v1 = Graph::from_vertices([1]);
        let pair = Graph::from_vertices([0, 1]);
        let edge = pair.clone().with_edge(0, 1, 1).unwrap();
        let w = [
            1.0,
            f[&v0],
            f[&v1],
            f[&v0] * f[&v1] * f[&pair],
            f[&v0] * f[&v1] * f[&edge],
        ];
        let z: f64 = w.iter().sum();
        let gs = [Graph::empty(), v0, v1, pair, edge];
        for (g, wi) in gs.iter().zip(w) {
            assert!((gw.dist.prob(g) - wi / z).abs() < 1e-15);
        }
        assert!(f.values().all(|&x| (0.1..=1.0).contains(&x)));
        let other = random_gibbs_wrt(&n, &spec, Some(12)).unwrap();
        assert_ne!(other.dist.probs(), gw.dist.probs());
        let flat = random_gibbs_wrt(&n, &spec, None).unwrap();
        assert!(flat.dist.probs().iter().all(|p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn markov_complete_neighborhood() {
        let spec = SpaceSpec::simple(3, 2);
        let n = NeighborhoodFunction::complete(idx(3));
        for s in 0..5 {
            let gw = random_gibbs_wrt(&n, &spec, Some(s)).unwrap();
            assert!(is_markov(&gw.dist, &n, 1e-10).markov);
        }
    }

    #[test]
    fn uniform_is_markov_for_every_neighborhood() {
        let spec = SpaceSpec::simple(2, 2);
        let d = DistributionTable::uniform(spec.enumerate(DEFAULT_CAP).unwrap()).unwrap();
        for n in NeighborhoodFunction::all_valid(&idx(2)).unwrap() {
            // presences of 1 and 2 are dependent under the uniform law on this space
            let r = is_markov(&d, &n, 1e-10);
            assert_eq!(r.markov, n.get(0, 1));
        }
    }

    #[test]
    fn vertex_presences_couple_through_pair_factor() {
        // {1} and {2} not linked; the pair factor still makes presences dependent
        let spec = SpaceSpec::simple(2, 2);
        let n = NeighborhoodFunction::minimal(idx(2));
        let gw = random_gibbs_wrt(&n, &spec, Some(3)).unwrap();
        assert!(!is_markov(&gw.dist, &n, 1e-10).markov);
    }

    #[test]
    fn coupled_table_not_markov() {
        let spec = SpaceSpec::simple(3, 2);
        let all = spec.enumerate(DEFAULT_CAP).unwrap();
        let w: Vec<f64> = all
            .iter()
            .map(|g| if (g.edge(0, 1) == 1) == g.contains(2) { 2.0 } else { 1.0 })
            .collect();
        let d = DistributionTable::from_weights(all, w).unwrap();
        let mut n = NeighborhoodFunction::complete(idx(3));
        let i = n.index().position(&[0, 1]).unwrap();
        n.set(i, 2, false);
        let r = is_markov(&d, &n, 1e-10);
        assert!(!r.markov);
        assert!(r.failures.iter().any(|f| f.atom == vec![0, 1] || f.atom == vec![2]));
    }

    #[test]
    fn naive_model_cases() {
        let spec = SpaceSpec::simple(2, 2);
        let m = NaiveModel::homogeneous(vec![0.0, 0.0], vec![0.5, 0.5]);
        assert_eq!(m.eval(&spec, &Graph::empty()).unwrap(), 1.0);
        let m = NaiveModel::homogeneous(vec![0.5, 0.5], vec![0.5, 0.5]);
        let e = Graph::from_vertices([0, 1]).with_edge(0, 1, 1).unwrap();
        assert_eq!(m.eval(&spec, &e).unwrap(), 0.125);
        let total: f64 = spec
            .enumerate(DEFAULT_CAP)
            .unwrap()
            .iter()
            .map(|g| m.eval(&spec, g).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-15);
        let bad = NaiveModel::homogeneous(vec![0.5, 0.5], vec![0.5, 0.6]);
        assert!(bad.eval(&spec, &e).is_err());
    }

    fn labels(n: usize) -> StructureGraph {
        StructureGraph::new((1..=n).map(|i| i.to_string()).collect())
    }

    #[test]
    fn dag_is_chain_graph() {
        let mut h = labels(3);
        h.set_mark(0, 1, Some(Mark::Directed)).unwrap();
        h.set_mark(1, 2, Some(Mark::Directed)).unwrap();
        h.set_mark(0, 2, Some(Mark::Directed)).unwrap();
        let r = chain_analyze(&h);
        assert!(r.is_chain_graph);
        assert_eq!(r.components, vec![vec![0], vec![1], vec![2]]);
        assert!(validate_bn_structure(&h).valid);
    }

    #[test]
    fn partially_directed_cycle() {
        let mut h = labels(3);
        h.set_mark(0, 1, Some(Mark::Directed)).unwrap();
        h.set_mark(1, 2, Some(Mark::Undirected)).unwrap();
        h.set_mark(2, 0, Some(Mark::Directed)).unwrap();
        let r = chain_analyze(&h);
        assert!(!r.is_chain_graph);
        let w = r.cycle_witness.unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w.iter().copied().sorted().collect::<Vec<_>>(), vec![0, 1, 2]);
        // directed edge inside an undirected component
        let mut h = labels(3);
        h.set_mark(0, 1, Some(Mark::Undirected)).unwrap();
        h.set_mark(1, 2, Some(Mark::Undirected)).unwrap();
        h.set_mark(0, 2, Some(Mark::Directed)).unwrap();
        let r = chain_analyze(&h);
        assert!(!r.is_chain_graph);
        assert_eq!(r.cycle_witness.unwrap(), vec![0, 2, 1]);
    }

    #[test]
    fn longer_component_cycle_witness() {
        let mut h = labels(5);
        h.set_mark(0, 1, Some(Mark::Directed)).unwrap();
        h.set_mark(1, 2, Some(Mark::Undirected)).unwrap();
        h.set_mark(2, 3, Some(Mark::Directed)).unwrap();
        h.set_mark(3, 4, Some(Mark::Undirected)).unwrap();
        h.set_mark(4, 0, Some(Mark::Directed)).unwrap();
        let w = chain_analyze(&h).cycle_witness.unwrap();
        assert_eq!(w.len(), 5);
        for (i, &a) in w.iter().enumerate() {
            let b = w[(i + 1) % w.len()];
            assert!(h.has_directed(a, b) || h.has_undirected(a, b));
        }
    }

    #[test]
    fn vertex_pair_chain_components() {
        let spec = SpaceSpec::simple(3, 2);
        let h = StructureGraph::vertex_pair_chain(&idx(3), &spec);
        let r = chain_analyze(&h);
        assert!(r.is_chain_graph);
        assert_eq!(r.components, vec![vec![0, 1, 2], vec![3, 4, 5]]);
        assert_eq!(component_parents(&h, &[3, 4, 5]), vec![0, 1, 2]);
        let round = StructureGraph::from_json(&h.to_json(Some(&spec)), Some(&spec)).unwrap();
        assert_eq!(round, h);
    }

    #[test]
    fn chain_eval_constant_factors() {
        let spec = SpaceSpec::simple(3, 2);
        let h = StructureGraph::vertex_pair_chain(&idx(3), &spec);
        let d = chain_eval(&h, &spec, |_, _| 1.0).unwrap();
        for (g, p) in d.iter() {
            let k = g.order() as i32;
            let expect = 0.125 * 2f64.powi(-(k * (k - 1) / 2));
            assert!((p - expect).abs() < 1e-15, "{} {p}", g.encode());
        }
    }

    #[test]
    fn chain_eval_factorizes() {
        let spec = SpaceSpec::simple(3, 2);
        let h = StructureGraph::vertex_pair_chain(&idx(3), &spec);
        let phi = |c: &[usize], vals: &[Graph]| -> f64 {
            1.0 + 0.3 * c.len() as f64
                + vals.iter().map(|g| g.order() as f64 * 0.17 + g.edge_count() as f64 * 0.41).sum::<f64>()
        };
        let d = chain_eval(&h, &spec, phi).unwrap();
        // P(G) = P(G_{V1}) P(G_{V2} | G_{V1}); the vertex part depends only on V(G)
        let mut by_v: HashMap<Vec<VertexId>, f64> = HashMap::new();
        for (g, p) in d.iter() {
            *by_v.entry(g.vertices().to_vec()).or_default() += p;
        }
        let k1 = [0usize, 1, 2];
        let cl = moral_cliques(&h, &k1).unwrap();
        assert_eq!(cl, vec![vec![0, 1, 2]]);
        let atoms = h.atoms().unwrap();
        let w = |vs: &[VertexId]| {
            let g = Graph::from_vertices(vs.iter().copied());
            let vals: Vec<Graph> = k1.iter().map(|&i| g.project(&atoms[i])).collect();
            phi(&k1, &vals)
        };
        let z1: f64 = (0..3u32).powerset().map(|s| w(&s)).sum();
        for (vs, p) in &by_v {
            assert!((p - w(vs) / z1).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_eval_zero_normalizer() {
        let spec = SpaceSpec::simple(2, 2);
        let h = StructureGraph::vertex_pair_chain(&idx(2), &spec);
        let r = chain_eval(&h, &spec, |c, _| if c.contains(&2) { 0.0 } else { 1.0 });
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn bn_rule() {
        let spec = SpaceSpec::simple(2, 2);
        let mut h = StructureGraph::over_atoms(&idx(2), &spec);
        h.set_mark(0, 2, Some(Mark::Directed)).unwrap();
        let r = validate_bn_structure(&h);
        assert!(!r.valid);
        h.set_mark(1, 2, Some(Mark::Directed)).unwrap();
        assert!(validate_bn_structure(&h).valid);
    }
}
