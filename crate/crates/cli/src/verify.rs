//! The oracle battery behind `gmrg verify`.

use std::collections::BTreeMap;

use gmrg_core::family::{atomic_analysis, coordinate_family, family_report, graph_family, BridgeMode};
use gmrg_core::graph::{marginal, DistributionTable, Graph, SpaceSpec};
use gmrg_core::iso::Template;
use gmrg_core::mcmc::{chain_rng, propose, transition_matrix};
use gmrg_core::model::{gibbs_log_score, mobius_potentials, TemplateModel};
use gmrg_core::structure::{AtomicIndex, NeighborhoodFunction};
use gmrg_core::trees::{branching_log_prob, enumerate_pcfg_trees, enumerate_trees, ChildConfig, OffspringModel};
use gmrg_core::{Error, Result};
use rand::Rng;
use serde::Serialize;
use serde_json::Value;

use crate::{CliResult, Failure};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Serialize)]
pub struct Suite {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

type Check = Result<(bool, String)>;

fn suite(name: &'static str, f: impl FnOnce() -> Check) -> CliResult<Suite> {
    match f() {
        Ok((ok, detail)) => Ok(Suite {
            name,
            status: if ok { Status::Pass } else { Status::Fail },
            detail,
        }),
        Err(Error::Resource { what, size, cap }) => Ok(Suite {
            name,
            status: Status::Skipped,
            detail: format!("{what} needs {size:.0} > cap {cap}"),
        }),
        Err(e) => Err(Failure::from(e)),
    }
}

fn random_table(space: Vec<Graph>, seed: u64) -> Result<DistributionTable<Graph>> {
    let mut rng = chain_rng(seed, 0);
    let w = space.iter().map(|_| rng.random_range(0.05..1.0)).collect();
    DistributionTable::from_weights(space, w)
}

fn templates() -> Vec<Template> {
    let t = |g: Graph| Template::plain(g).expect("template");
    vec![
        t(Graph::from_vertices([0])),
        t(Graph::from_vertices([0, 1]).with_edge(0, 1, 1).expect("edge")),
        t(Graph::from_vertices([0, 1, 2]).with_edges([(0, 1, 1), (0, 2, 1)]).expect("edges")),
    ]
}

fn mobius(seed: u64, cap: u64) -> Check {
    let mut worst = 0.0f64;
    for n in 1..=3 {
        let space = SpaceSpec::simple(n, 2).enumerate(cap)?;
        for s in 0..20 {
            let p = random_table(space.clone(), seed.wrapping_add(s))?;
            let pot = mobius_potentials(&p)?;
            for (g, pg) in p.iter() {
                worst = worst.max((gibbs_log_score(&pot, g).exp() - pg).abs() / pg);
            }
        }
    }
    Ok((worst <= 1e-10, format!("max relative error {worst:.2e}")))
}

fn delta_h(seed: u64, cap: u64) -> Check {
    let mut rng = chain_rng(seed, 1);
    let mut worst = 0.0f64;
    for _ in 0..30 {
        let n = rng.random_range(2..=5usize);
        let spec = SpaceSpec::simple(n, 2);
        if spec.size_bound() > cap as f64 {
            return Err(Error::Resource { what: "delta-H spaces".into(), size: spec.size_bound(), cap });
        }
        let l = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let m = TemplateModel::new(spec.clone(), templates(), l)?;
        let mut g = Graph::empty();
        for _ in 0..10 {
            let p = propose(&g, &spec, &[0.4, 0.2, 0.4], &mut rng)?;
            let naive = m.log_score(&p.graph) - m.log_score(&g);
            worst = worst.max((m.delta_h(&g, &p.mv)? - naive).abs());
            g = p.graph;
        }
    }
    Ok((worst <= 1e-12, format!("300 moves, max deviation {worst:.2e}")))
}

fn detailed_balance(cap: u64) -> Check {
    let mut worst = 0.0f64;
    for (n, k, l) in [(2, 2, vec![0.5, -1.0, 0.0]), (3, 2, vec![-0.2, 0.8, 0.3]), (2, 3, vec![0.1, 0.2, 0.0])] {
        let m = TemplateModel::new(SpaceSpec::simple(n, k), templates(), l)?;
        let norm = m.normalize(cap)?;
        let states = norm.dist.support().to_vec();
        let t = transition_matrix(&m, &[0.3, 0.3, 0.4], &states)?;
        let pi = norm.dist.probs();
        for i in 0..states.len() {
            for j in 0..states.len() {
                worst = worst.max((pi[i] * t[i][j] - pi[j] * t[j][i]).abs());
            }
        }
    }
    Ok((worst <= 1e-10, format!("max balance defect {worst:.2e}")))
}

fn tower(seed: u64, cap: u64) -> Check {
    let spec = SpaceSpec::simple(3, 3);
    let p = random_table(spec.enumerate(cap)?, seed)?;
    let mut worst = 0.0f64;
    for v1 in itertools::Itertools::powerset(0..3u32) {
        let p1 = marginal(&p, &spec, &v1)?;
        for v0 in itertools::Itertools::powerset(v1.iter().copied()) {
            let a = marginal(&p, &spec, &v0)?;
            let b = marginal(&p1, &spec, &v0)?;
            for (g, q) in a.iter() {
                worst = worst.max((b.prob(g) - q).abs());
            }
        }
    }
    Ok((worst <= 1e-12, format!("max deviation {worst:.2e}")))
}

fn families(cap: u64) -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    for n in 1..=3 {
        let spec = SpaceSpec::simple(n, 2);
        if spec.size_bound() > cap as f64 {
            return Err(Error::Resource { what: "graph family".into(), size: spec.size_bound(), cap });
        }
        let f = graph_family(&spec)?;
        let r = family_report(&f, BridgeMode::Derived)?;
        let a = atomic_analysis(&f)?;
        let good = f.validate().is_ok()
            && r.consistent
            && r.strongly_consistent
            && r.complete
            && a.atomics.iter().all(|x| x.len() <= 2)
            && a.atomics.len() == n * (n + 1) / 2;
        ok &= good;
        notes.push(format!("graphs n={n}: {good}"));
    }
    let f = coordinate_family(&[2, 2, 2])?;
    let r = family_report(&f, BridgeMode::Derived)?;
    let a = atomic_analysis(&f)?;
    let good = r.consistent && r.strongly_consistent && r.complete && a.atomics.iter().all(|x| x.len() == 1);
    ok &= good;
    notes.push(format!("coordinates 2x2x2: {good}"));
    Ok((ok, notes.join(", ")))
}

fn trees(cap: u64) -> Check {
    let mut worst = 0.0f64;
    let s = |x: &str| x.to_string();
    for n in 0..=3 {
        let gw = OffspringModel::GaltonWatson {
            mu: [0.25, 0.35, 0.4],
            root_present: 0.9,
            max_depth: n,
        };
        let total: f64 = enumerate_trees(n, cap)?
            .iter()
            .map(|t| branching_log_prob(t, &gw).map(f64::exp))
            .sum::<Result<f64>>()?;
        worst = worst.max((total - 1.0).abs());
        let pcfg = OffspringModel::Pcfg {
            leaf: [s("a")].into(),
            non_leaf: [s("S")].into(),
            root: BTreeMap::from([(s("S"), 0.8)]),
            rules: BTreeMap::from([(
                s("S"),
                vec![
                    (ChildConfig { left: Some(s("S")), right: Some(s("a")) }, 0.5),
                    (ChildConfig { left: Some(s("a")), right: None }, 0.5),
                ],
            )]),
            max_depth: n,
        };
        let total: f64 = enumerate_pcfg_trees(&pcfg, cap)?
            .iter()
            .map(|t| branching_log_prob(t, &pcfg).map(f64::exp))
            .sum::<Result<f64>>()?;
        worst = worst.max((total - 1.0).abs());
    }
    Ok((worst <= 1e-10, format!("max |sum - 1| {worst:.2e} over depth caps 0..3")))
}

fn neighborhood(v: Option<&Value>) -> Check {
    let Some(v) = v else {
        let all = NeighborhoodFunction::all_valid(&AtomicIndex::new(3))?;
        let ok = all.iter().all(NeighborhoodFunction::validate);
        return Ok((ok, format!("{} generated tables on 3 vertices validate", all.len())));
    };
    let n = v
        .get("vertices")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Parse("neighborhood needs an integer 'vertices'".into()))? as usize;
    let rows: Vec<Vec<bool>> = v
        .get("table")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse("neighborhood needs a 'table' array".into()))?
        .iter()
        .map(|r| {
            r.as_array()
                .ok_or_else(|| Error::Parse("table rows must be arrays".into()))?
                .iter()
                .map(|x| match x {
                    Value::Bool(b) => Ok(*b),
                    Value::Number(k) => Ok(k.as_u64() == Some(1)),
                    _ => Err(Error::Parse("table entries must be 0/1 or booleans".into())),
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let nf = NeighborhoodFunction::from_table(AtomicIndex::new(n), rows)?;
    let ok = nf.validate();
    Ok((
        ok,
        if ok {
            "given table is symmetric and links nested atoms".into()
        } else {
            "given table is not a valid neighborhood function".into()
        },
    ))
}

pub fn battery(seed: u64, cap: u64, nb: Option<&Value>) -> CliResult<Vec<Suite>> {
    Ok(vec![
        suite("mobius_round_trip", || mobius(seed, cap))?,
        suite("delta_h_equivalence", || delta_h(seed, cap))?,
        suite("detailed_balance", || detailed_balance(cap))?,
        suite("marginal_tower", || tower(seed, cap))?,
        suite("family_axioms", || families(cap))?,
        suite("tree_normalization", || trees(cap))?,
        suite("neighborhood", || neighborhood(nb))?,
    ])
}
