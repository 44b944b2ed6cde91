//! Maximum-likelihood fitting of template weights: stochastic approximation with persistent
//! MH particles, and exact-gradient ascent on enumerable spaces.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::graph::{Graph, DEFAULT_CAP};
use crate::mcmc::{chain_rng, menu_sizes, mh_step};
use crate::model::{ext_mul, TemplateModel};

/// `Û = (1/N) Σ_i U(G_i)`.
pub fn empirical_stats(data: &[Graph], model: &TemplateModel) -> Result<Vec<f64>> {
    if data.is_empty() {
        return domain("no data");
    }
    let rows: Vec<Vec<u64>> = data.par_iter().map(|g| model.stats(g)).collect();
    let mut out = vec![0.0; model.templates().len()];
    for r in &rows {
        for (o, &c) in out.iter_mut().zip(r) {
            *o += c as f64;
        }
    }
    for o in &mut out {
        *o /= data.len() as f64;
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct SAConfig {
    pub iterations: usize,
    pub chains: usize,
    pub a: f64,
    pub b: f64,
    /// Starting weights; the model's current weights when `None`.
    pub lambda_init: Option<Vec<f64>>,
    /// Per-component gradient clip.
    pub clip: f64,
    /// Abort when `‖λ‖∞` exceeds this.
    pub bound: f64,
    pub seed: u64,
    pub move_weights: [f64; 3],
}

impl Default for SAConfig {
    fn default() -> Self {
        SAConfig {
            iterations: 1000,
            chains: 4,
            a: 0.1,
            b: 100.0,
            lambda_init: None,
            clip: 10.0,
            bound: 1e6,
            seed: 0,
            move_weights: [1.0 / 3.0; 3],
        }
    }
}

impl SAConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) || !(self.b >= 0.0 && self.b.is_finite()) {
            return domain("step schedule needs a > 0 and b >= 0");
        }
        if self.chains == 0 {
            return domain("at least one chain is required");
        }
        if !(self.clip > 0.0) || !(self.bound > 0.0) {
            return domain("clip and bound must be positive");
        }
        Ok(())
    }

    /// `α_t = a / (b + t)`, `t ≥ 1`.
    pub fn step(&self, t: usize) -> f64 {
        self.a / (self.b + t as f64)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub lambda: Vec<f64>,
    pub mean_stats: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SAFit {
    pub lambda: Vec<f64>,
    pub iterations: usize,
    pub acceptance_rates: Vec<f64>,
    pub trace: Vec<TraceRow>,
}

struct Particle {
    state: Graph,
    rng: ChaCha8Rng,
    proposed: u64,
    accepted: u64,
}

/// Stochastic approximation:
/// `λ^{t+1} = λ^t + α_t clip(Û − (1/M) Σ_m U(G^{t+1,m}))`, particles initialized from the
/// data (cycled) and advanced one sweep per iteration with the current weights.
pub fn sa_fit(data: &[Graph], model: &TemplateModel, cfg: &SAConfig) -> Result<SAFit> {
    cfg.validate()?;
    let target = empirical_stats(data, model)?;
    if target.iter().any(|u| !u.is_finite()) {
        return domain("empirical statistics are not finite");
    }
    let mut model = model.clone();
    if let Some(l) = &cfg.lambda_init {
        model.set_lambdas(l.clone())?;
    }
    let k = target.len();
    let mut particles: Vec<Particle> = (0..cfg.chains)
        .map(|m| Particle {
            state: data[m % data.len()].clone(),
            rng: chain_rng(cfg.seed, m as u64),
            proposed: 0,
            accepted: 0,
        })
        .collect();
    for p in &particles {
        model.spec().validate(&p.state)?;
        if model.log_score(&p.state) == f64::NEG_INFINITY {
            return domain(format!("data graph {} has score -inf", p.state.encode()));
        }
    }
    let mut trace = Vec::with_capacity(cfg.iterations);
    for t in 1..=cfg.iterations {
        let m_ref = &model;
        let stats: Vec<Vec<u64>> = particles
            .par_iter_mut()
            .map(|p| -> Result<Vec<u64>> {
                let sweep = menu_sizes(&p.state, m_ref.spec())?.iter().sum::<u64>();
                for _ in 0..sweep {
                    let (_, ok) = mh_step(m_ref, &mut p.state, &cfg.move_weights, &mut p.rng)?;
                    p.proposed += 1;
                    p.accepted += ok as u64;
                }
                Ok(m_ref.stats(&p.state))
            })
            .collect::<Result<_>>()?;
        let mut mean = vec![0.0; k];
        for s in &stats {
            for (m, &c) in mean.iter_mut().zip(s) {
                *m += c as f64;
            }
        }
        for m in &mut mean {
            *m /= cfg.chains as f64;
        }
        let alpha = cfg.step(t);
        let mut lambda = model.lambdas().to_vec();
        for j in 0..k {
            if lambda[j] == f64::NEG_INFINITY {
                continue;
            }
            let g = (target[j] - mean[j]).clamp(-cfg.clip, cfg.clip);
            lambda[j] += alpha * g;
        }
        let norm = lambda
            .iter()
            .filter(|l| l.is_finite())
            .fold(0.0f64, |a, l| a.max(l.abs()));
        if norm > cfg.bound {
            return Err(Error::Divergence { iteration: t, norm });
        }
        model.set_lambdas(lambda.clone())?;
        trace.push(TraceRow {
            iteration: t,
            lambda,
            mean_stats: mean,
        });
    }
    Ok(SAFit {
        lambda: model.lambdas().to_vec(),
        iterations: cfg.iterations,
        acceptance_rates: particles
            .iter()
            .map(|p| if p.proposed == 0 { 0.0 } else { p.accepted as f64 / p.proposed as f64 })
            .collect(),
        trace,
    })
}

/// `E_λ[U] − Û`, exactly.
pub fn moment_gap(model: &TemplateModel, target: &[f64]) -> Result<Vec<f64>> {
    if target.len() != model.templates().len() {
        return domain("target has the wrong length");
    }
    let e = model.expected_stats(DEFAULT_CAP)?;
    Ok(e.iter().zip(target).map(|(a, b)| a - b).collect())
}

/// Average log-likelihood `λ·Û − log Z(λ)`.
pub fn log_likelihood(model: &TemplateModel, target: &[f64]) -> Result<f64> {
    let z = model.normalize(DEFAULT_CAP)?.log_z;
    let dot: f64 = model
        .lambdas()
        .iter()
        .zip(target)
        .map(|(&l, &u)| ext_mul(l, u))
        .sum();
    Ok(dot - z)
}

#[derive(Clone, Debug)]
pub struct ExactFit {
    pub lambda: Vec<f64>,
    pub iterations: usize,
    pub gap: Vec<f64>,
    pub log_likelihood: Vec<f64>,
}

/// Fixed-step gradient ascent on the exact log-likelihood until `‖gap‖∞ < tol`.
pub fn exact_fit(model: &TemplateModel, target: &[f64], step: f64, tol: f64, max_iter: usize) -> Result<ExactFit> {
    let mut model = model.clone();
    let mut lls = Vec::new();
    for it in 0..=max_iter {
        let gap = moment_gap(&model, target)?;
        lls.push(log_likelihood(&model, target)?);
        let worst = gap
            .iter()
            .zip(model.lambdas())
            .filter(|(_, l)| l.is_finite())
            .fold(0.0f64, |a, (g, _)| a.max(g.abs()));
        if worst < tol {
            return Ok(ExactFit {
                lambda: model.lambdas().to_vec(),
                iterations: it,
                gap,
                log_likelihood: lls,
            });
        }
        let lambda: Vec<f64> = model
            .lambdas()
            .iter()
            .zip(&gap)
            .map(|(&l, &g)| if l.is_finite() { l - step * g } else { l })
            .collect();
        model.set_lambdas(lambda)?;
    }
    Err(Error::Degenerate(format!("no convergence within {max_iter} iterations")))
}
