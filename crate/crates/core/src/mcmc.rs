//! Metropolis-Hastings over graph spaces with add / delete / edge-change moves.

use std::collections::BTreeMap;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::graph::{Attr, DistributionTable, EdgeVal, Graph, SpaceSpec, VertexId};
use crate::model::TemplateModel;

/// A local change to a graph.
#[derive(Clone, Debug, PartialEq)]
pub enum Move {
    AddVertex { v: VertexId, attr: Option<Attr> },
    DeleteVertex { v: VertexId },
    SetEdge { u: VertexId, v: VertexId, val: EdgeVal },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    AddVertex,
    DeleteVertex,
    SetEdge,
}

impl MoveKind {
    pub const ALL: [MoveKind; 3] = [MoveKind::AddVertex, MoveKind::DeleteVertex, MoveKind::SetEdge];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn inverse(self) -> MoveKind {
        match self {
            MoveKind::AddVertex => MoveKind::DeleteVertex,
            MoveKind::DeleteVertex => MoveKind::AddVertex,
            MoveKind::SetEdge => MoveKind::SetEdge,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MoveKind::AddVertex => "add_vertex",
            MoveKind::DeleteVertex => "delete_vertex",
            MoveKind::SetEdge => "set_edge",
        }
    }
}

impl Move {
    pub fn kind(&self) -> MoveKind {
        match self {
            Move::AddVertex { .. } => MoveKind::AddVertex,
            Move::DeleteVertex { .. } => MoveKind::DeleteVertex,
            Move::SetEdge { .. } => MoveKind::SetEdge,
        }
    }

    /// The resulting graph; errors when the move is not valid on `g`.
    pub fn apply(&self, g: &Graph, spec: &SpaceSpec) -> Result<Graph> {
        let mut out = g.clone();
        match self {
            Move::AddVertex { v, attr } => {
                if *v as usize >= spec.num_vertices() {
                    return domain(format!("vertex {v} outside the vertex space"));
                }
                if g.contains(*v) {
                    return domain(format!("vertex {v} already present"));
                }
                if g.order() >= spec.order_cap() {
                    return domain("graph is already at the maximum order");
                }
                match (spec.attributes(), attr) {
                    (None, None) => {}
                    (Some(_), Some(a)) => spec.check_attr(a)?,
                    _ => return domain("attribute presence does not match the space"),
                }
                out.add_vertex(*v, attr.clone())?;
            }
            Move::DeleteVertex { v } => {
                if !g.contains(*v) {
                    return domain(format!("vertex {v} not present"));
                }
                if g.degree(*v) != 0 {
                    return domain(format!("vertex {v} has incident edges"));
                }
                out.remove_vertex(*v)?;
            }
            Move::SetEdge { u, v, val } => {
                if u == v || !g.contains(*u) || !g.contains(*v) {
                    return domain("edge change needs two distinct present vertices");
                }
                if *val as usize >= spec.edge_space().len() {
                    return domain(format!("edge value {val} outside the edge space"));
                }
                if !spec.admits(*u, *v, g.attr(*u), g.attr(*v), *val) {
                    return domain("edge value violates the master maps");
                }
                out.set_edge(*u, *v, *val)?;
            }
        }
        Ok(out)
    }
}

/// Proposal probabilities and run length. `weights` is indexed by [`MoveKind::index`].
#[derive(Clone, Debug, Serialize)]
pub struct KernelConfig {
    pub weights: [f64; 3],
    pub seed: u64,
    pub steps: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            weights: [1.0 / 3.0; 3],
            seed: 0,
            steps: 1000,
            burn_in: 0,
            thin: 1,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return domain("move probabilities must be nonnegative");
        }
        let s: f64 = self.weights.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return domain(format!("move probabilities sum to {s}"));
        }
        if self.thin == 0 {
            return domain("thinning must be at least 1");
        }
        Ok(())
    }
}

pub fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Number of moves of each kind available from `g`.
pub fn menu_sizes(g: &Graph, spec: &SpaceSpec) -> Result<[u64; 3]> {
    let add = if g.order() < spec.order_cap() {
        let values = spec
            .attribute_values()
            .ok_or_else(|| Error::Domain("vertex additions need a finite attribute space".into()))?;
        (spec.num_vertices() - g.order()) as u64 * values.len().max(1) as u64
    } else {
        0
    };
    let del = g.vertices().iter().filter(|&&v| g.degree(v) == 0).count() as u64;
    let edge = g
        .vertices()
        .iter()
        .tuple_combinations()
        .map(|(&u, &v)| spec.admissible_values(u, v, g.attr(u), g.attr(v)).len() as u64 - 1)
        .sum();
    Ok([add, del, edge])
}

/// The moves of one kind available from `g`, in a fixed order.
pub fn moves_of_kind<'a>(
    g: &'a Graph,
    spec: &'a SpaceSpec,
    kind: MoveKind,
) -> Result<Box<dyn Iterator<Item = Move> + 'a>> {
    Ok(match kind {
        MoveKind::AddVertex => {
            if g.order() >= spec.order_cap() {
                return Ok(Box::new(std::iter::empty()));
            }
            let values: Vec<Option<Attr>> = match spec.attribute_values() {
                None => return domain("vertex additions need a finite attribute space"),
                Some(v) if v.is_empty() => vec![None],
                Some(v) => v.into_iter().map(Some).collect(),
            };
            Box::new(
                (0..spec.num_vertices() as VertexId)
                    .filter(move |v| !g.contains(*v))
                    .flat_map(move |v| {
                        values
                            .clone()
                            .into_iter()
                            .map(move |attr| Move::AddVertex { v, attr })
                    }),
            )
        }
        MoveKind::DeleteVertex => Box::new(
            g.vertices()
                .iter()
                .filter(|&&v| g.degree(v) == 0)
                .map(|&v| Move::DeleteVertex { v }),
        ),
        MoveKind::SetEdge => Box::new(g.vertices().iter().tuple_combinations().flat_map(move |(&u, &v)| {
            let cur = g.edge(u, v);
            spec.admissible_values(u, v, g.attr(u), g.attr(v))
                .into_iter()
                .filter(move |&e| e != cur)
                .map(move |val| Move::SetEdge { u, v, val })
        })),
    })
}

fn feasible_mass(weights: &[f64; 3], sizes: &[u64; 3]) -> f64 {
    (0..3).filter(|&k| sizes[k] > 0).map(|k| weights[k]).sum()
}

/// `log q(m | g)` with infeasible kinds' mass redistributed proportionally.
fn log_q(weights: &[f64; 3], sizes: &[u64; 3], kind: MoveKind) -> f64 {
    let k = kind.index();
    let total = feasible_mass(weights, sizes);
    if sizes[k] == 0 || weights[k] == 0.0 || total == 0.0 {
        return f64::NEG_INFINITY;
    }
    (weights[k] / total).ln() - (sizes[k] as f64).ln()
}

/// A candidate move with its Hastings correction `log q(G|G') − log q(G'|G)`.
#[derive(Clone, Debug)]
pub struct Proposal {
    pub mv: Move,
    pub graph: Graph,
    pub log_q_ratio: f64,
}

pub fn propose<R: Rng>(g: &Graph, spec: &SpaceSpec, weights: &[f64; 3], rng: &mut R) -> Result<Proposal> {
    let sizes = menu_sizes(g, spec)?;
    let total = feasible_mass(weights, &sizes);
    if total <= 0.0 {
        return domain(format!("no feasible move from {}", g.encode()));
    }
    let mut u = rng.random::<f64>() * total;
    let mut kind = None;
    for k in MoveKind::ALL {
        if sizes[k.index()] == 0 || weights[k.index()] == 0.0 {
            continue;
        }
        kind = Some(k);
        if u < weights[k.index()] {
            break;
        }
        u -= weights[k.index()];
    }
    let kind = kind.expect("a feasible kind exists");
    let idx = rng.random_range(0..sizes[kind.index()]);
    let mv = moves_of_kind(g, spec, kind)?
        .nth(idx as usize)
        .expect("menu size matches enumeration");
    let graph = mv.apply(g, spec)?;
    let log_q_ratio = hastings(g, &graph, spec, weights, kind, &sizes)?;
    Ok(Proposal { mv, graph, log_q_ratio })
}

fn hastings(
    _g: &Graph,
    g_new: &Graph,
    spec: &SpaceSpec,
    weights: &[f64; 3],
    kind: MoveKind,
    sizes: &[u64; 3],
) -> Result<f64> {
    let back = menu_sizes(g_new, spec)?;
    Ok(log_q(weights, &back, kind.inverse()) - log_q(weights, sizes, kind))
}

/// `log q(G|G') − log q(G'|G)` for an explicit move.
pub fn log_q_ratio(g: &Graph, mv: &Move, spec: &SpaceSpec, weights: &[f64; 3]) -> Result<f64> {
    let g_new = mv.apply(g, spec)?;
    hastings(g, &g_new, spec, weights, mv.kind(), &menu_sizes(g, spec)?)
}

/// `u < min(1, exp(a))`.
pub fn accept(log_alpha: f64, u: f64) -> bool {
    log_alpha >= 0.0 || u < log_alpha.exp()
}

fn acceptance_prob(log_alpha: f64) -> f64 {
    if log_alpha >= 0.0 {
        1.0
    } else {
        log_alpha.exp()
    }
}

/// One MH transition in place. Returns the kind proposed and whether it was accepted.
pub fn mh_step<R: Rng>(
    model: &TemplateModel,
    state: &mut Graph,
    weights: &[f64; 3],
    rng: &mut R,
) -> Result<(MoveKind, bool)> {
    let p = propose(state, model.spec(), weights, rng)?;
    let (g_new, dh) = model.move_delta(state, &p.mv)?;
    debug_assert_eq!(g_new, p.graph);
    let u = rng.random::<f64>();
    let ok = accept(dh + p.log_q_ratio, u);
    if ok {
        *state = g_new;
    }
    debug_assert!(model.spec().validate(state).is_ok());
    Ok((p.mv.kind(), ok))
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ChainSummary {
    pub seed: u64,
    pub stream: u64,
    pub iterations: u64,
    pub accepted: u64,
    pub acceptance_rate: f64,
    pub proposed_by_kind: BTreeMap<&'static str, u64>,
    pub accepted_by_kind: BTreeMap<&'static str, u64>,
}

/// Runs `burn_in + steps·thin` transitions, calling `sink` on each retained state.
pub fn run_chain<F: FnMut(&Graph) -> Result<()>>(
    model: &TemplateModel,
    cfg: &KernelConfig,
    init: &Graph,
    stream: u64,
    mut sink: F,
) -> Result<ChainSummary> {
    cfg.validate()?;
    model.spec().validate(init)?;
    if model.log_score(init) == f64::NEG_INFINITY {
        return domain("initial state has score -inf");
    }
    let mut rng = chain_rng(cfg.seed, stream);
    let mut state = init.clone();
    let mut proposed = [0u64; 3];
    let mut acc = [0u64; 3];
    let total = cfg.burn_in as u64 + (cfg.steps as u64) * (cfg.thin as u64);
    for it in 1..=total {
        let (kind, ok) = mh_step(model, &mut state, &cfg.weights, &mut rng)?;
        proposed[kind.index()] += 1;
        acc[kind.index()] += ok as u64;
        if it > cfg.burn_in as u64 && (it - cfg.burn_in as u64).is_multiple_of(cfg.thin as u64) {
            sink(&state)?;
        }
    }
    let accepted: u64 = acc.iter().sum();
    Ok(ChainSummary {
        seed: cfg.seed,
        stream,
        iterations: total,
        accepted,
        acceptance_rate: if total == 0 { 0.0 } else { accepted as f64 / total as f64 },
        proposed_by_kind: MoveKind::ALL.iter().map(|k| (k.name(), proposed[k.index()])).collect(),
        accepted_by_kind: MoveKind::ALL.iter().map(|k| (k.name(), acc[k.index()])).collect(),
    })
}

/// Collects a single chain in memory.
pub fn mh_sample(model: &TemplateModel, cfg: &KernelConfig, init: &Graph) -> Result<(Vec<Graph>, ChainSummary)> {
    let mut out = Vec::with_capacity(cfg.steps);
    let summary = run_chain(model, cfg, init, 0, |g| {
        out.push(g.clone());
        Ok(())
    })?;
    Ok((out, summary))
}

/// Independent chains, one RNG stream each, run in parallel.
pub fn mh_sample_chains(
    model: &TemplateModel,
    cfg: &KernelConfig,
    init: &Graph,
    chains: usize,
) -> Result<Vec<(Vec<Graph>, ChainSummary)>> {
    (0..chains as u64)
        .into_par_iter()
        .map(|c| {
            let mut out = Vec::with_capacity(cfg.steps);
            let s = run_chain(model, cfg, init, c, |g| {
                out.push(g.clone());
                Ok(())
            })?;
            Ok((out, s))
        })
        .collect()
}

/// The exact kernel `T(x, y)` over `states` (rows sum to 1 when `states` is closed
/// under positive-probability transitions).
pub fn transition_matrix(model: &TemplateModel, weights: &[f64; 3], states: &[Graph]) -> Result<Vec<Vec<f64>>> {
    let index: std::collections::HashMap<&Graph, usize> = states.iter().enumerate().map(|(i, g)| (g, i)).collect();
    let spec = model.spec();
    states
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let mut row = vec![0.0; states.len()];
            if model.log_score(g) == f64::NEG_INFINITY {
                row[i] = 1.0;
                return Ok(row);
            }
            let sizes = menu_sizes(g, spec)?;
            for kind in MoveKind::ALL {
                let lq = log_q(weights, &sizes, kind);
                if lq == f64::NEG_INFINITY {
                    continue;
                }
                let q = lq.exp();
                for mv in moves_of_kind(g, spec, kind)? {
                    let (g_new, dh) = model.move_delta(g, &mv)?;
                    let a = acceptance_prob(dh + hastings(g, &g_new, spec, weights, kind, &sizes)?);
                    if a > 0.0 {
                        let j = *index
                            .get(&g_new)
                            .ok_or_else(|| Error::Domain(format!("state {} not listed", g_new.encode())))?;
                        row[j] += q * a;
                    }
                    row[i] += q * (1.0 - a);
                }
            }
            Ok(row)
        })
        .collect()
}

/// Empirical frequencies, in canonical order.
pub fn empirical(samples: &[Graph]) -> Result<DistributionTable<Graph>> {
    let mut counts: BTreeMap<&Graph, u64> = BTreeMap::new();
    for g in samples {
        *counts.entry(g).or_insert(0) += 1;
    }
    let (support, weights): (Vec<Graph>, Vec<f64>) = counts.into_iter().map(|(g, c)| (g.clone(), c as f64)).unzip();
    DistributionTable::from_weights(support, weights)
}

/// `½ Σ |p − q|` over the union of supports.
pub fn tv_distance<T: Clone + Eq + std::hash::Hash>(p: &DistributionTable<T>, q: &DistributionTable<T>) -> f64 {
    let mut s: f64 = p.iter().map(|(x, px)| (px - q.prob(x)).abs()).sum();
    s += q.iter().filter(|(x, _)| p.position(x).is_none()).map(|(_, qx)| qx).sum::<f64>();
    (0.5 * s).clamp(0.0, 1.0)
}
