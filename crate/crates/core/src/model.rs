//! Gibbs potentials, Möbius inversion, template (exponential-family) models, exact
//! normalization, incremental score changes, classic edge models and mode mass.

use std::collections::HashMap;

use itertools::Itertools;
use rayon::prelude::*;
use serde_json::Value;

use crate::error::{domain, Error, Result};
use crate::graph::{DistributionTable, Graph, SpaceSpec, VertexId};
use crate::iso::{Counter, IsoOrder, Template};
use crate::mcmc::Move;

/// `λ·U` with the convention `λ·0 = 0`, also for `λ = −∞`.
pub fn ext_mul(lambda: f64, count: f64) -> f64 {
    if count == 0.0 {
        0.0
    } else {
        lambda * count
    }
}

pub fn lambda_to_json(l: f64) -> Value {
    if l == f64::NEG_INFINITY {
        Value::from("-inf")
    } else {
        Value::from(l)
    }
}

pub fn lambda_from_json(v: &Value) -> Result<f64> {
    match v {
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| Error::Parse(format!("bad lambda {v}"))),
        Value::String(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
        _ => Err(Error::Parse(format!("lambda must be a number or \"-inf\", got {v}"))),
    }
}

/// Order-k potentials `ψ_k` keyed by labelled graph, plus the constant `ψ_0`.
#[derive(Clone, Debug, Default)]
pub struct PotentialSet {
    pub psi0: f64,
    psi: HashMap<Graph, f64>,
}

impl PotentialSet {
    pub fn new(psi0: f64) -> Self {
        PotentialSet {
            psi0,
            psi: HashMap::new(),
        }
    }

    pub fn set(&mut self, g: Graph, value: f64) -> Result<()> {
        if g.is_empty() {
            return domain("use psi0 for the empty graph");
        }
        if value.is_nan() || value == f64::INFINITY {
            return domain(format!("potential value {value} is not in R ∪ {{-inf}}"));
        }
        self.psi.insert(g, value);
        Ok(())
    }

    /// `ψ_{|G|}(G)`; undefined entries count as 0.
    pub fn get(&self, g: &Graph) -> f64 {
        match self.psi.get(g) {
            Some(&v) => v,
            None => {
                log::debug!("potential undefined for {}; using 0", g.encode());
                0.0
            }
        }
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Graph, f64)> {
        self.psi.iter().map(|(g, &v)| (g, v))
    }
}

/// `ψ_0 + Σ_k Σ_{G' ∈ S_k(G)} ψ_k(G')`.
pub fn gibbs_log_score(pot: &PotentialSet, g: &Graph) -> f64 {
    let mut s = pot.psi0;
    for sub in g.vertices().iter().copied().powerset().skip(1) {
        s += pot.get(&g.induced_subgraph(&sub).expect("subset of V(G)"));
        if s == f64::NEG_INFINITY {
            return s;
        }
    }
    s
}

/// Gibbs potentials of a strictly positive distribution on a projectable space:
/// `ψ(H) = Σ_{W' ⊆ V(H)} (−1)^{|V(H)|−|W'|} log(P(H_{W'}) / P(∅))`, `ψ_0 = log P(∅)`.
pub fn mobius_potentials(dist: &DistributionTable<Graph>) -> Result<PotentialSet> {
    if let Some((g, _)) = dist.iter().find(|(_, p)| *p <= 0.0) {
        return Err(Error::Positivity(format!("P({}) = 0", g.encode())));
    }
    let p_empty = dist.prob(&Graph::empty());
    if p_empty <= 0.0 {
        return Err(Error::Positivity("the empty graph is not in the support".into()));
    }
    let log_empty = p_empty.ln();
    let rows: Vec<Result<(Graph, f64)>> = dist
        .support()
        .par_iter()
        .filter(|h| !h.is_empty())
        .map(|h| {
            let n = h.order();
            let mut acc = 0.0;
            for w in h.vertices().iter().copied().powerset() {
                let sub = h.induced_subgraph(&w)?;
                let p = dist.prob(&sub);
                if p <= 0.0 {
                    return Err(Error::Domain(format!(
                        "support is not projectable: {} missing",
                        sub.encode()
                    )));
                }
                let phi = p.ln() - log_empty;
                if (n - w.len()) % 2 == 0 {
                    acc += phi;
                } else {
                    acc -= phi;
                }
            }
            Ok((h.clone(), acc))
        })
        .collect();
    let mut pot = PotentialSet::new(log_empty);
    for r in rows {
        let (h, v) = r?;
        pot.set(h, v)?;
    }
    Ok(pot)
}

/// Templates `T_k` with weights `λ_k` over a space: `P(G) ∝ exp Σ_k λ_k U_k(G)`.
#[derive(Clone)]
pub struct TemplateModel {
    spec: SpaceSpec,
    templates: Vec<Template>,
    lambdas: Vec<f64>,
    counter: std::sync::Arc<Counter>,
}

impl std::fmt::Debug for TemplateModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TemplateModel")
            .field("templates", &self.templates.len())
            .field("lambdas", &self.lambdas)
            .finish()
    }
}

/// Exact normalization of a template model.
#[derive(Clone, Debug)]
pub struct Normalized {
    pub log_z: f64,
    pub z: f64,
    pub dist: DistributionTable<Graph>,
}

impl TemplateModel {
    pub fn new(spec: SpaceSpec, templates: Vec<Template>, lambdas: Vec<f64>) -> Result<Self> {
        if templates.len() != lambdas.len() {
            return domain("templates and lambdas differ in length");
        }
        check_lambdas(&lambdas)?;
        for t in &templates {
            if t.iso_order != IsoOrder::Plain {
                if spec.attributes().is_none() {
                    return domain("attributed templates need a space with attributes");
                }
                for a in t.graph.attrs().unwrap_or(&[]) {
                    spec.check_attr(a)?;
                }
            }
            for (_, _, e) in t.graph.edges() {
                if e as usize >= spec.edge_space().len() {
                    return domain("template edge value outside the edge space");
                }
            }
        }
        let counter = std::sync::Arc::new(Counter::new(&templates));
        Ok(TemplateModel {
            spec,
            templates,
            lambdas,
            counter,
        })
    }

    /// `{"spec": …, "templates": [{…, "lambda": x}]}`.
    pub fn from_json(v: &Value) -> Result<Self> {
        let spec = SpaceSpec::from_json(
            v.get("spec")
                .ok_or_else(|| Error::Parse("model is missing 'spec'".into()))?,
        )?;
        let templates = v
            .get("templates")
            .ok_or_else(|| Error::Parse("model is missing 'templates'".into()))?;
        Self::from_templates_json(spec, templates)
    }

    /// A template list (as in a model file) over an already parsed space.
    pub fn from_templates_json(spec: SpaceSpec, templates: &Value) -> Result<Self> {
        let arr = templates
            .as_array()
            .ok_or_else(|| Error::Parse("'templates' must be an array".into()))?;
        let mut ts = Vec::with_capacity(arr.len());
        let mut ls = Vec::with_capacity(arr.len());
        for t in arr {
            ts.push(Template::from_json(t, &spec)?);
            ls.push(match t.get("lambda") {
                Some(l) => lambda_from_json(l)?,
                None => 0.0,
            });
        }
        TemplateModel::new(spec, ts, ls)
    }

    pub fn spec(&self) -> &SpaceSpec {
        &self.spec
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn set_lambdas(&mut self, lambdas: Vec<f64>) -> Result<()> {
        if lambdas.len() != self.templates.len() {
            return domain("lambda vector has the wrong length");
        }
        check_lambdas(&lambdas)?;
        self.lambdas = lambdas;
        Ok(())
    }

    pub fn with_lambdas(&self, lambdas: Vec<f64>) -> Result<Self> {
        let mut m = self.clone();
        m.set_lambdas(lambdas)?;
        Ok(m)
    }

    /// `U(G)`.
    pub fn stats(&self, g: &Graph) -> Vec<u64> {
        self.counter.count(g)
    }

    pub fn score_counts(&self, counts: &[u64]) -> f64 {
        self.lambdas
            .iter()
            .zip(counts)
            .map(|(&l, &c)| ext_mul(l, c as f64))
            .sum()
    }

    /// `Σ_k λ_k U_k(G)`.
    pub fn log_score(&self, g: &Graph) -> f64 {
        self.score_counts(&self.stats(g))
    }

    /// Scores and normalizes over the enumerated space.
    pub fn normalize(&self, cap: u64) -> Result<Normalized> {
        let support = self.spec.enumerate(cap)?;
        let scores: Vec<f64> = support.par_iter().map(|g| self.log_score(g)).collect();
        let log_z = log_sum_exp(&scores);
        if log_z == f64::NEG_INFINITY {
            return Err(Error::Degenerate("every graph has score -inf".into()));
        }
        let probs = scores.iter().map(|s| (s - log_z).exp()).collect();
        let dist = DistributionTable::new(support, probs)?;
        Ok(Normalized {
            log_z,
            z: log_z.exp(),
            dist,
        })
    }

    /// `E_λ[U]` by exact enumeration.
    pub fn expected_stats(&self, cap: u64) -> Result<Vec<f64>> {
        let norm = self.normalize(cap)?;
        let mut out = vec![0.0; self.templates.len()];
        for (g, p) in norm.dist.iter() {
            if p == 0.0 {
                continue;
            }
            for (o, c) in out.iter_mut().zip(self.stats(g)) {
                *o += p * c as f64;
            }
        }
        Ok(out)
    }

    /// `H(G_new) − H(G_old)` from the subgraphs that differ between the two states.
    pub fn delta_h(&self, g_old: &Graph, mv: &Move) -> Result<f64> {
        self.apply_move(g_old, mv).map(|(_, d)| d)
    }

    /// The new state together with its score change.
    pub fn apply_move(&self, g_old: &Graph, mv: &Move) -> Result<(Graph, f64)> {
        if self.log_score(g_old) == f64::NEG_INFINITY {
            return domain("current state has score -inf");
        }
        self.move_delta(g_old, mv)
    }

    /// As [`Self::apply_move`], trusting that `g_old` has a finite score.
    pub(crate) fn move_delta(&self, g_old: &Graph, mv: &Move) -> Result<(Graph, f64)> {
        let g_new = mv.apply(g_old, &self.spec)?;
        let k = self.templates.len();
        let (old, new) = match *mv {
            Move::AddVertex { v, .. } => (vec![0; k], self.counter.count_containing(&g_new, &[v])),
            Move::DeleteVertex { v } => (self.counter.count_containing(g_old, &[v]), vec![0; k]),
            Move::SetEdge { u, v, .. } => (
                self.counter.count_containing(g_old, &[u, v]),
                self.counter.count_containing(&g_new, &[u, v]),
            ),
        };
        let mut d = 0.0;
        for ((&l, &o), &n) in self.lambdas.iter().zip(&old).zip(&new) {
            let diff = n as f64 - o as f64;
            d += ext_mul(l, diff);
        }
        Ok((g_new, d))
    }

    /// Renders `U(G)` in expansion form, e.g. `17λ1 + 18λ2`.
    pub fn expansion(counts: &[u64]) -> String {
        let terms: Vec<String> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(i, c)| format!("{c}λ{}", i + 1))
            .collect();
        if terms.is_empty() {
            "0".into()
        } else {
            terms.join(" + ")
        }
    }
}

fn check_lambdas(l: &[f64]) -> Result<()> {
    match l.iter().find(|x| x.is_nan() || **x == f64::INFINITY) {
        Some(x) => domain(format!("lambda {x} is not in R ∪ {{-inf}}")),
        None => Ok(()),
    }
}

/// Streaming log-sum-exp; `−∞` entries contribute nothing.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    let mut s = 0.0;
    for &x in xs {
        if x == f64::NEG_INFINITY {
            continue;
        }
        if x <= m {
            s += (x - m).exp();
        } else {
            s = s * (m - x).exp() + 1.0;
            m = x;
        }
    }
    if m == f64::NEG_INFINITY {
        m
    } else {
        m + s.ln()
    }
}

/// Edge models conditioned on a fixed vertex set.
#[derive(Clone, Debug)]
pub enum Classic {
    ErdosRenyi { p: f64 },
    /// `labels[i]` is the block of the `i`-th vertex; `p[a][b]` the edge probability.
    Blockmodel { labels: Vec<usize>, p: Vec<Vec<f64>> },
}

/// The law of the edge function on `vertices` (binary edges), built from pairwise `ψ_2`
/// potentials `log p` / `log(1−p)`.
pub fn classic_conditional(kind: &Classic, vertices: &[VertexId]) -> Result<DistributionTable<Graph>> {
    let mut vs = vertices.to_vec();
    vs.sort_unstable();
    vs.dedup();
    if vs.len() != vertices.len() {
        return domain("duplicate vertex");
    }
    let pair_p = |i: usize, j: usize| -> f64 {
        match kind {
            Classic::ErdosRenyi { p } => *p,
            Classic::Blockmodel { labels, p } => p[labels[i]][labels[j]],
        }
    };
    match kind {
        Classic::ErdosRenyi { p } => {
            if !(0.0..=1.0).contains(p) {
                return domain("p must lie in [0,1]");
            }
        }
        Classic::Blockmodel { labels, p } => {
            if labels.len() != vertices.len() {
                return domain("one block label per vertex is required");
            }
            let b = p.len();
            if p.iter().any(|r| r.len() != b) || labels.iter().any(|&l| l >= b) {
                return domain("block probability table has the wrong shape");
            }
            for a in 0..b {
                for c in 0..b {
                    if p[a][c] != p[c][a] {
                        return domain(format!("block table is not symmetric at ({a},{c})"));
                    }
                    if !(0.0..=1.0).contains(&p[a][c]) {
                        return domain("block probabilities must lie in [0,1]");
                    }
                }
            }
        }
    }
    // `vertices` order defines label alignment; map sorted position back to it.
    let orig: Vec<usize> = vs
        .iter()
        .map(|v| vertices.iter().position(|w| w == v).unwrap())
        .collect();
    let pairs: Vec<(usize, usize)> = (0..vs.len()).tuple_combinations().collect();
    let base = Graph::from_vertices(vs.iter().copied());
    let mut support = Vec::with_capacity(1 << pairs.len());
    let mut weights = Vec::with_capacity(1 << pairs.len());
    for mask in 0u64..(1u64 << pairs.len()) {
        let mut g = base.clone();
        let mut log_p = 0.0;
        for (b, &(i, j)) in pairs.iter().enumerate() {
            let p = pair_p(orig[i], orig[j]);
            if mask >> b & 1 == 1 {
                g.set_edge(vs[i], vs[j], 1)?;
                log_p += p.ln();
            } else {
                log_p += (1.0 - p).ln();
            }
        }
        support.push(g);
        weights.push(log_p.exp());
    }
    let order: Vec<usize> = (0..support.len()).sorted_by(|&a, &b| support[a].cmp(&support[b])).collect();
    let support_sorted = order.iter().map(|&i| support[i].clone()).collect();
    let weights_sorted = order.iter().map(|&i| weights[i]).collect();
    DistributionTable::from_weights(support_sorted, weights_sorted)
}

/// Mass of the ε-mode set `{G : P(G) > (1−ε) P*}`.
pub fn mode_mass<T: Clone + Eq + std::hash::Hash>(dist: &DistributionTable<T>, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return domain("epsilon must lie in (0,1)");
    }
    let top = dist.probs().iter().copied().fold(0.0, f64::max);
    Ok(dist
        .probs()
        .iter()
        .filter(|&&p| p > (1.0 - epsilon) * top)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Attr, DEFAULT_CAP};

    fn five() -> SpaceSpec {
        SpaceSpec::simple(2, 2)
    }

    fn vertex_t() -> Template {
        Template::plain(Graph::from_vertices([0])).unwrap()
    }

    fn edge_t() -> Template {
        Template::plain(Graph::from_vertices([0, 1]).with_edge(0, 1, 1).unwrap()).unwrap()
    }

    #[test]
    fn zero_potentials_score_zero() {
        let pot = PotentialSet::new(0.0);
        let g = Graph::from_vertices([0, 1, 2]).with_edge(0, 1, 1).unwrap();
        assert_eq!(gibbs_log_score(&pot, &g), 0.0);
    }

    #[test]
    fn erdos_renyi_potentials() {
        let mut pot = PotentialSet::new(0.0);
        for (u, v) in [(0, 1), (0, 2), (1, 2)] {
            pot.set(Graph::from_vertices([u, v]).with_edge(u, v, 1).unwrap(), 0.5f64.ln())
                .unwrap();
            pot.set(Graph::from_vertices([u, v]), 0.5f64.ln()).unwrap();
        }
        let g = Graph::from_vertices([0, 1, 2]).with_edge(0, 2, 1).unwrap();
        assert!((gibbs_log_score(&pot, &g) - 3.0 * 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn hard_exclusion() {
        let mut pot = PotentialSet::new(0.0);
        pot.set(Graph::from_vertices([0]), f64::NEG_INFINITY).unwrap();
        assert_eq!(gibbs_log_score(&pot, &Graph::from_vertices([0])), f64::NEG_INFINITY);
    }

    #[test]
    fn mobius_of_uniform() {
        let all = five().enumerate(DEFAULT_CAP).unwrap();
        let d = DistributionTable::uniform(all.clone()).unwrap();
        let pot = mobius_potentials(&d).unwrap();
        assert!((pot.psi0 - 0.2f64.ln()).abs() < 1e-15);
        assert!(pot.iter().all(|(_, v)| v.abs() < 1e-15));
        let pm = DistributionTable::point_mass(all, &Graph::empty()).unwrap();
        assert!(matches!(mobius_potentials(&pm), Err(Error::Positivity(_))));
    }

    #[test]
    fn normalize_cases() {
        let m = TemplateModel::new(five(), vec![vertex_t(), edge_t()], vec![0.0, 0.0]).unwrap();
        let n = m.normalize(DEFAULT_CAP).unwrap();
        assert!((n.z - 5.0).abs() < 1e-12);
        assert!(n.dist.probs().iter().all(|p| (p - 0.2).abs() < 1e-15));

        let m = TemplateModel::new(five(), vec![edge_t()], vec![f64::NEG_INFINITY]).unwrap();
        let n = m.normalize(DEFAULT_CAP).unwrap();
        let e = Graph::from_vertices([0, 1]).with_edge(0, 1, 1).unwrap();
        assert_eq!(n.dist.prob(&e), 0.0);
        assert!((n.z - 4.0).abs() < 1e-12);

        let m = TemplateModel::new(five(), vec![vertex_t()], vec![2f64.ln()]).unwrap();
        assert!((m.normalize(DEFAULT_CAP).unwrap().z - 13.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_model() {
        let m = TemplateModel::new(SpaceSpec::simple(1, 2), vec![vertex_t()], vec![f64::NEG_INFINITY]).unwrap();
        assert_eq!(m.normalize(DEFAULT_CAP).unwrap().dist.prob(&Graph::empty()), 1.0);
    }

    #[test]
    fn template_scores() {
        let m = TemplateModel::new(five(), vec![vertex_t(), edge_t()], vec![0.7, f64::NEG_INFINITY]).unwrap();
        assert_eq!(m.log_score(&Graph::empty()), 0.0);
        assert_eq!(m.log_score(&Graph::from_vertices([1])), 0.7);
        assert_eq!(TemplateModel::expansion(&[17, 18, 0, 4]), "17λ1 + 18λ2 + 4λ4");
        assert_eq!(TemplateModel::expansion(&[0, 0]), "0");
    }

    #[test]
    fn delta_h_cases() {
        let m = TemplateModel::new(five(), vec![vertex_t(), edge_t()], vec![0.7, -0.3]).unwrap();
        let g = Graph::from_vertices([0, 1]);
        assert_eq!(m.delta_h(&g, &Move::SetEdge { u: 0, v: 1, val: 0 }).unwrap(), 0.0);
        let one = Graph::from_vertices([0]);
        assert_eq!(m.delta_h(&one, &Move::AddVertex { v: 1, attr: None }).unwrap(), 0.7);
        assert!((m.delta_h(&g, &Move::SetEdge { u: 0, v: 1, val: 1 }).unwrap() + 0.3).abs() < 1e-15);
        assert!(m.delta_h(&one, &Move::AddVertex { v: 0, attr: None }).is_err());
        let e = g.clone().with_edge(0, 1, 1).unwrap();
        assert!(m.delta_h(&e, &Move::DeleteVertex { v: 0 }).is_err());
    }

    #[test]
    fn erdos_renyi_tables() {
        let d = classic_conditional(&Classic::ErdosRenyi { p: 1.0 }, &[0, 1, 2]).unwrap();
        let full = Graph::from_vertices([0, 1, 2])
            .with_edges([(0, 1, 1), (0, 2, 1), (1, 2, 1)])
            .unwrap();
        assert_eq!(d.prob(&full), 1.0);
        let d = classic_conditional(&Classic::ErdosRenyi { p: 0.5 }, &[0, 1, 2]).unwrap();
        assert_eq!(d.len(), 8);
        assert!(d.probs().iter().all(|p| (p - 0.125).abs() < 1e-15));
    }

    #[test]
    fn blockmodel_tables() {
        let kind = Classic::Blockmodel {
            labels: vec![0, 0, 1],
            p: vec![vec![0.0, 0.4], vec![0.4, 0.9]],
        };
        let d = classic_conditional(&kind, &[0, 1, 2]).unwrap();
        let intra: f64 = d.iter().filter(|(g, _)| g.edge(0, 1) == 1).map(|(_, p)| p).sum();
        assert_eq!(intra, 0.0);
        let bad = Classic::Blockmodel {
            labels: vec![0, 1],
            p: vec![vec![0.0, 0.4], vec![0.3, 0.9]],
        };
        assert!(classic_conditional(&bad, &[0, 1]).is_err());
    }

    #[test]
    fn mode_mass_cases() {
        let d = DistributionTable::new(vec![0, 1, 2], vec![0.9, 0.05, 0.05]).unwrap();
        assert!((mode_mass(&d, 0.5).unwrap() - 0.9).abs() < 1e-15);
        let u = DistributionTable::uniform(vec![0, 1, 2, 3]).unwrap();
        assert!((mode_mass(&u, 0.1).unwrap() - 1.0).abs() < 1e-15);
        assert!(mode_mass(&u, 1.0).is_err());
        let pm = DistributionTable::point_mass(vec![0, 1], &1).unwrap();
        assert_eq!(mode_mass(&pm, 0.3).unwrap(), 1.0);
    }

    #[test]
    fn log_sum_exp_handles_neg_inf() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn attributed_model_rejected_without_attributes() {
        let t = Template::new(
            Graph::from_attributed([(0, Attr::Cat(0))]).unwrap(),
            IsoOrder::First,
            None,
            false,
        )
        .unwrap();
        assert!(TemplateModel::new(five(), vec![t], vec![0.0]).is_err());
    }
}
