//! Concurrent policy iteration: one policy per scalarization weight, all of them improved
//! against the best time/energy combination found anywhere in the population.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::sl_core::{average_objective, CostKind, SlProblem, SolveOptions, DEFAULT_EPSILON};
use crate::transform::convex_raw;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpiConfig {
    /// Ascending weights in `(0, 1]`.
    pub alphas: Vec<f64>,
    pub epsilon: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub max_sweeps: usize,
}

impl Default for CpiConfig {
    fn default() -> Self {
        let opts = SolveOptions::default();
        CpiConfig {
            alphas: log_spaced_alphas(14, 0.01, 1.0).expect("valid defaults"),
            epsilon: DEFAULT_EPSILON,
            tol: opts.tol,
            max_iters: 30,
            max_sweeps: opts.max_sweeps,
        }
    }
}

impl CpiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return config("at least one weight is required");
        }
        if self.alphas.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return config("weights must lie in (0, 1]");
        }
        if self.alphas.windows(2).any(|w| w[0] >= w[1]) {
            return config("weights must be strictly ascending");
        }
        if self.max_iters == 0 {
            return config("max_iters must be at least 1");
        }
        CostKind::Energy {
            epsilon: self.epsilon,
        }
        .validate()?;
        self.options().validate()
    }

    fn options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.tol,
            max_sweeps: self.max_sweeps,
            max_iters: self.max_iters,
            ..SolveOptions::default()
        }
    }
}

/// `n` weights in geometric progression from `lo` to `hi`, endpoints exact. A single weight is
/// allowed when `lo == hi`.
pub fn log_spaced_alphas(n: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi <= 1.0 && lo <= hi) {
        return config(format!("weights need 0 < lo <= hi <= 1, got [{lo}, {hi}]"));
    }
    match n {
        0 => config("at least one weight is required"),
        1 if lo == hi => Ok(vec![lo]),
        1 => config("a single weight needs lo == hi"),
        _ if lo == hi => config("several weights need lo < hi"),
        _ => {
            let ratio = hi / lo;
            Ok((0..n)
                .map(|k| match k {
                    0 => lo,
                    k if k == n - 1 => hi,
                    k => lo * ratio.powf(k as f64 / (n - 1) as f64),
                })
                .collect())
        }
    }
}

/// Pointwise `min_s harmonic_convex(t_s, e_s, alpha)`.
pub fn best_current_value(time_fields: &[&[f64]], energy_fields: &[&[f64]], alpha: f64) -> Vec<f64> {
    assert_eq!(time_fields.len(), energy_fields.len());
    assert!(!time_fields.is_empty(), "population must be non-empty");
    let n = time_fields[0].len();
    (0..n)
        .map(|x| {
            time_fields
                .iter()
                .zip(energy_fields)
                .map(|(t, e)| convex_raw(t[x], e[x], alpha))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaResult {
    pub alpha: f64,
    /// Control index per grid point.
    pub policy: Vec<usize>,
    pub time_field: Vec<f64>,
    pub energy_field: Vec<f64>,
    pub avg_time: f64,
    pub avg_energy: f64,
    /// Whether the last improvement step left this policy unchanged.
    pub converged: bool,
    /// Improvement steps after which this policy last changed.
    pub last_change: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpiSolution {
    pub results: Vec<AlphaResult>,
    pub iterations: usize,
    /// Every policy was unchanged in the same improvement step.
    pub converged: bool,
    /// Policy evaluations performed, both costs counted.
    pub evaluations: usize,
    /// Per improvement step, the scalarized objective of every weight before improving.
    pub history: Vec<Vec<f64>>,
    /// Some frozen-policy evaluation hit its sweep budget.
    pub evaluation_budget_hit: bool,
    /// Improved policies discarded because their scalarized objective went up.
    pub rejected_steps: usize,
}

struct Member {
    policy: Vec<usize>,
    time: Vec<f64>,
    energy: Vec<f64>,
    converged_eval: bool,
}

/// Runs concurrent policy iteration on `problem` (harmonic transform) for every weight.
pub fn run_cpi(problem: &SlProblem, cfg: &CpiConfig) -> Result<CpiSolution> {
    cfg.validate()?;
    let opts = cfg.options();
    let time = CostKind::Time;
    let energy = CostKind::Energy {
        epsilon: cfg.epsilon,
    };
    let n = problem.grid().len();
    let np = cfg.alphas.len();

    let evaluate = |policy: Vec<usize>, hint: Option<(&[f64], &[f64])>| {
        let t = problem.evaluate_indices(&policy, &time, &opts, hint.map(|h| h.0));
        let e = problem.evaluate_indices(&policy, &energy, &opts, hint.map(|h| h.1));
        Member {
            policy,
            converged_eval: t.converged && e.converged,
            time: t.field,
            energy: e.field,
        }
    };

    let rest = vec![problem.rest_control(); n];
    let mut members: Vec<Member> = (0..np)
        .into_par_iter()
        .map(|_| evaluate(rest.clone(), None))
        .collect();
    let mut evaluations = 2 * np;
    let mut unchanged = vec![false; np];
    let mut last_change = vec![0usize; np];
    let mut history: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut rejected_steps = 0;

    for iter in 1..=cfg.max_iters {
        iterations = iter;
        let times: Vec<&[f64]> = members.iter().map(|m| m.time.as_slice()).collect();
        let energies: Vec<&[f64]> = members.iter().map(|m| m.energy.as_slice()).collect();
        history.push(
            members
                .iter()
                .zip(&cfg.alphas)
                .map(|(m, &a)| scalarized_objective(problem, &m.time, &m.energy, a))
                .collect(),
        );
        let improved: Vec<Vec<usize>> = cfg
            .alphas
            .par_iter()
            .zip(&members)
            .map(|(&alpha, m)| {
                let best = best_current_value(&times, &energies, alpha);
                let cost = CostKind::Scalarized {
                    alpha,
                    epsilon: cfg.epsilon,
                };
                problem.improve(&best, &cost, &m.policy)
            })
            .collect();
        let mut changed = vec![false; np];
        for (i, p) in improved.iter().enumerate() {
            changed[i] = *p != members[i].policy;
        }
        if !changed.iter().any(|&c| c) {
            unchanged.iter_mut().for_each(|u| *u = true);
            converged = true;
            break;
        }
        // Unchanged policies keep their fields; re-evaluating them would reproduce them.
        evaluations += 2 * changed.iter().filter(|&&c| c).count();
        let old = std::mem::take(&mut members);
        let candidates: Vec<Option<Member>> = old
            .par_iter()
            .zip(improved)
            .zip(changed.par_iter())
            .map(|((m, p), &c)| c.then(|| evaluate(p, Some((&m.time, &m.energy)))))
            .collect();
        // The interpolated scalarized value is only nearly a fixed point of the scalarized
        // operator, so a greedy step can lose a little; such steps are rejected.
        let before = history.last().expect("recorded above");
        let mut accepted = 0;
        members = old
            .into_iter()
            .zip(candidates)
            .enumerate()
            .map(|(i, (m, cand))| match cand {
                Some(c)
                    if scalarized_objective(problem, &c.time, &c.energy, cfg.alphas[i])
                        <= before[i] =>
                {
                    accepted += 1;
                    unchanged[i] = false;
                    last_change[i] = iter;
                    c
                }
                Some(_) => {
                    rejected_steps += 1;
                    unchanged[i] = true;
                    m
                }
                None => {
                    unchanged[i] = true;
                    m
                }
            })
            .collect();
        if accepted == 0 {
            converged = true;
            break;
        }
    }

    let evaluation_budget_hit = members.iter().any(|m| !m.converged_eval);
    let results = members
        .into_iter()
        .zip(&cfg.alphas)
        .enumerate()
        .map(|(i, (m, &alpha))| AlphaResult {
            alpha,
            avg_time: average_objective(problem.grid(), &m.time),
            avg_energy: average_objective(problem.grid(), &m.energy),
            policy: m.policy,
            time_field: m.time,
            energy_field: m.energy,
            converged: unchanged[i],
            last_change: last_change[i],
        })
        .collect();
    Ok(CpiSolution {
        results,
        iterations,
        converged,
        evaluations,
        history,
        evaluation_budget_hit,
        rejected_steps,
    })
}

/// Mean over non-obstacle points of `harmonic_convex(t, e, alpha)`.
pub fn scalarized_objective(problem: &SlProblem, time: &[f64], energy: &[f64], alpha: f64) -> f64 {
    let combined: Vec<f64> = time
        .iter()
        .zip(energy)
        .map(|(&t, &e)| convex_raw(t, e, alpha))
        .collect();
    average_objective(problem.grid(), &combined)
}
