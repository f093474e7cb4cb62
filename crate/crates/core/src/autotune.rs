//! Automated regularization search: differential evolution over the
//! (lambda_21, lambda_2) pair in log10 space.
//!
//! Classic DE/rand/1/bin: per generation each agent is challenged by a trial
//! built from three distinct partners, `a + F (b - c)`, crossed over with the
//! target at rate CR (one forced dimension) and clamped to the box; the
//! better of target and trial survives. Trial vectors are generated with a
//! single sequential RNG stream, then evaluated (possibly in parallel) and
//! applied in agent order, so results do not depend on evaluation order.

use rayon::prelude::*;
use std::time::{Duration, Instant};

use crate::error::{PsrError, Result};
use crate::forward::DefectMap;
use crate::field::Field2D;
use crate::metrics::reconstruction_cost;
use crate::psf::PsfStack;
use crate::rng::rng_from_seed;
use crate::solver::{admm_solve, SolverConfig, SpectralProblem};
use crate::stack::ThermogramStack;
use rand::Rng;

#[derive(Clone, Debug)]
pub struct SearchConfig {
    /// Per-parameter [lo, hi] search box. For regularization tuning these are
    /// log10(lambda) bounds.
    pub bounds: [[f64; 2]; 2],
    /// Population size, >= 4.
    pub n_agents: usize,
    /// Generation cap.
    pub n_generations: usize,
    /// Differential weight F in (0, 2].
    pub f_weight: f64,
    /// Crossover probability in (0, 1].
    pub cr: f64,
    pub seed: u64,
    /// Stop after this many generations without strict improvement.
    pub early_stop: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            bounds: [[-2.0, 4.0], [-2.0, 4.0]],
            n_agents: 15,
            n_generations: 40,
            f_weight: 0.8,
            cr: 0.9,
            seed: 0,
            early_stop: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 4 {
            return Err(PsrError::invalid("n_agents must be >= 4"));
        }
        if self.n_generations < 1 {
            return Err(PsrError::invalid("n_generations must be >= 1"));
        }
        if !(self.f_weight > 0.0 && self.f_weight <= 2.0) {
            return Err(PsrError::invalid("f_weight must lie in (0, 2]"));
        }
        if !(self.cr > 0.0 && self.cr <= 1.0) {
            return Err(PsrError::invalid("cr must lie in (0, 1]"));
        }
        for (i, b) in self.bounds.iter().enumerate() {
            let well_formed = b[0].is_finite() && b[1].is_finite() && b[0] < b[1];
            if !well_formed {
                return Err(PsrError::invalid(format!(
                    "bounds[{i}] must satisfy lo < hi, got {b:?}"
                )));
            }
        }
        Ok(())
    }
}

/// One cost evaluation, for the audit log.
#[derive(Clone, Debug)]
pub struct EvalRecord {
    /// 0 for the initial population, then the generation index.
    pub generation: usize,
    pub agent: usize,
    /// Point in the caller's parameter space (linear lambdas for tuning).
    pub point: (f64, f64),
    pub cost: f64,
    pub wall: Duration,
}

#[derive(Clone, Debug)]
pub struct TuneResult {
    /// Best point found, in the caller's parameter space.
    pub lambda_best: (f64, f64),
    pub cost_best: f64,
    /// Total cost evaluations: initialization plus one per trial.
    pub evaluations: usize,
    /// Per-generation (best, mean) cost, entry 0 for the initial population.
    pub history: Vec<(f64, f64)>,
    pub log: Vec<EvalRecord>,
}

fn sanitize(c: f64) -> f64 {
    if c.is_finite() {
        c
    } else {
        f64::INFINITY
    }
}

/// Minimizes a black-box cost over the 2D box by DE/rand/1/bin.
pub fn differential_evolution(
    cost: impl Fn(f64, f64) -> f64 + Sync,
    cfg: &SearchConfig,
) -> Result<TuneResult> {
    differential_evolution_mapped(cost, cfg, |x, y| (x, y))
}

/// DE with a map from search space to the reported parameter space (the
/// tuner searches log10 space but logs linear lambdas).
fn differential_evolution_mapped(
    cost: impl Fn(f64, f64) -> f64 + Sync,
    cfg: &SearchConfig,
    report: impl Fn(f64, f64) -> (f64, f64),
) -> Result<TuneResult> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let n = cfg.n_agents;
    let lo = [cfg.bounds[0][0], cfg.bounds[1][0]];
    let hi = [cfg.bounds[0][1], cfg.bounds[1][1]];

    let mut pop: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            [
                lo[0] + (hi[0] - lo[0]) * rng.random::<f64>(),
                lo[1] + (hi[1] - lo[1]) * rng.random::<f64>(),
            ]
        })
        .collect();

    let mut log: Vec<EvalRecord> = Vec::new();
    let evaluate = |points: &[[f64; 2]]| -> Vec<(f64, Duration)> {
        points
            .par_iter()
            .map(|p| {
                let start = Instant::now();
                let c = sanitize(cost(p[0], p[1]));
                (c, start.elapsed())
            })
            .collect()
    };

    let evals = evaluate(&pop);
    let mut costs: Vec<f64> = Vec::with_capacity(n);
    for (agent, (c, wall)) in evals.into_iter().enumerate() {
        let p = pop[agent];
        log.push(EvalRecord {
            generation: 0,
            agent,
            point: report(p[0], p[1]),
            cost: c,
            wall,
        });
        costs.push(c);
    }
    let mut evaluations = n;

    let best_of = |costs: &[f64]| -> (usize, f64) {
        let mut bi = 0;
        let mut bc = costs[0];
        for (i, &c) in costs.iter().enumerate() {
            if c < bc {
                bc = c;
                bi = i;
            }
        }
        (bi, bc)
    };
    let mean_of = |costs: &[f64]| costs.iter().sum::<f64>() / costs.len() as f64;

    let (best_idx, mut best_cost) = best_of(&costs);
    let mut best_point = pop[best_idx];
    let mut history = vec![(best_cost, mean_of(&costs))];
    let mut stale = 0usize;

    for generation in 1..=cfg.n_generations {
        // build all trials first so the RNG stream is independent of
        // evaluation order
        let mut trials: Vec<[f64; 2]> = Vec::with_capacity(n);
        for i in 0..n {
            let mut pick = || loop {
                let j = rng.random_range(0..n);
                if j != i {
                    return j;
                }
            };
            let (a, b, c) = loop {
                let a = pick();
                let b = pick();
                let c = pick();
                if a != b && b != c && a != c {
                    break (a, b, c);
                }
            };
            let mutant = [
                pop[a][0] + cfg.f_weight * (pop[b][0] - pop[c][0]),
                pop[a][1] + cfg.f_weight * (pop[b][1] - pop[c][1]),
            ];
            let forced = rng.random_range(0..2usize);
            let mut trial = pop[i];
            for dim in 0..2 {
                if dim == forced || rng.random::<f64>() < cfg.cr {
                    trial[dim] = mutant[dim];
                }
            }
            trial[0] = trial[0].clamp(lo[0], hi[0]);
            trial[1] = trial[1].clamp(lo[1], hi[1]);
            trials.push(trial);
        }

        let results = evaluate(&trials);
        evaluations += n;
        let mut improved = false;
        for (i, (c, wall)) in results.into_iter().enumerate() {
            log.push(EvalRecord {
                generation,
                agent: i,
                point: report(trials[i][0], trials[i][1]),
                cost: c,
                wall,
            });
            if c <= costs[i] {
                pop[i] = trials[i];
                costs[i] = c;
            }
            if c < best_cost {
                best_cost = c;
                best_point = trials[i];
                improved = true;
            }
        }
        history.push((best_cost, mean_of(&costs)));

        if improved {
            stale = 0;
        } else {
            stale += 1;
            if let Some(limit) = cfg.early_stop {
                if stale >= limit {
                    break;
                }
            }
        }
    }

    let (bx, by) = report(best_point[0], best_point[1]);
    Ok(TuneResult {
        lambda_best: (bx, by),
        cost_best: best_cost,
        evaluations,
        history,
        log,
    })
}

/// Finds the regularization pair minimizing the reconstruction cost against a
/// known ground truth. The search runs in log10(lambda) space over
/// `cfg.bounds`; solver errors and non-finite costs count as +inf and stay in
/// the audit log.
pub fn tune_regularization(
    t_diff: &[ThermogramStack],
    psf: &PsfStack,
    patterns: &[Field2D],
    truth: &DefectMap,
    solver_defaults: &SolverConfig,
    cfg: &SearchConfig,
) -> Result<TuneResult> {
    cfg.validate()?;
    solver_defaults.validate()?;
    if !truth.is_binary() {
        return Err(PsrError::invalid("tune_regularization: truth must be binary"));
    }
    let prob = SpectralProblem::build(t_diff, psf, patterns)?;
    let cost = |log_l21: f64, log_l2: f64| -> f64 {
        let solver_cfg = SolverConfig {
            lambda_21: 10f64.powf(log_l21),
            lambda_2: 10f64.powf(log_l2),
            ..solver_defaults.clone()
        };
        match admm_solve(&prob, &solver_cfg) {
            Ok(res) => reconstruction_cost(&res.defect_map, truth, psf).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    };
    differential_evolution_mapped(cost, cfg, |x, y| (10f64.powf(x), 10f64.powf(y)))
}
