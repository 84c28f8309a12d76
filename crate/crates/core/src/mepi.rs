//! Multi-objective evolutionary policy iteration: an NSGA-II style search over whole policy
//! fields, with policy switching as the main variation operator.
//!
//! All random draws come from one ChaCha8 stream in a fixed order: initial policies
//! (individual, point, axis), then per generation the elite weight, the policy-switching
//! offspring (tournament picks, then weight, per offspring), the crossover offspring (two
//! picks, then `lambda`, per offspring), mutation noise (policy-switching offspring first), and
//! finally the roulette fill. Policy evaluation happens after the draws, so parallelism cannot
//! perturb the stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpi::best_current_value;
use crate::dynamics::ControlSet;
use crate::error::{config, Result};
use crate::nsga::{crowding_distance, fast_non_dominated_sort, fronts, roulette_weights, tournament_winner};
use crate::sl_core::{average_objective, CostKind, PolicyField, SlProblem, SolveOptions, Transition, DEFAULT_EPSILON};

/// Per-axis resolution of the fixed control lattice offered to the third elite.
pub const EXTRA_CONTROLS_PER_AXIS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MepiConfig {
    pub population: usize,
    pub generations: usize,
    /// Offspring produced by policy switching.
    pub n_cp: usize,
    /// Parents per policy-switching offspring.
    pub n_par: usize,
    /// Mutation standard deviation relative to each axis' half-range.
    pub sigma: f64,
    pub seed: u64,
    pub epsilon: f64,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for MepiConfig {
    fn default() -> Self {
        let opts = SolveOptions::default();
        MepiConfig {
            population: 20,
            generations: 60,
            n_cp: 15,
            n_par: 3,
            sigma: 0.2,
            seed: 0,
            epsilon: DEFAULT_EPSILON,
            tol: opts.tol,
            max_sweeps: opts.max_sweeps,
        }
    }
}

impl MepiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cp + 3 > self.population {
            return config(format!(
                "n_cp + 3 = {} exceeds the population of {}",
                self.n_cp + 3,
                self.population
            ));
        }
        if self.n_par < 2 {
            return config("n_par must be at least 2");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return config("sigma must be nonnegative");
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
            ..SolveOptions::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Individual {
    pub policy: PolicyField,
    pub time_field: Vec<f64>,
    pub energy_field: Vec<f64>,
    /// `(avg_time, avg_energy)` over non-obstacle points.
    pub objectives: [f64; 2],
    pub rank: usize,
    pub crowding: f64,
    /// Both frozen-policy evaluations met the tolerance.
    pub converged: bool,
    transitions: Vec<Transition>,
}

impl Individual {
    pub fn evaluate(problem: &SlProblem, policy: PolicyField, epsilon: f64, opts: &SolveOptions) -> Self {
        let transitions = problem.transitions_for(&policy);
        let t = problem.evaluate(&transitions, &CostKind::Time, opts, None);
        let e = problem.evaluate(&transitions, &CostKind::Energy { epsilon }, opts, None);
        let grid = problem.grid();
        Individual {
            objectives: [average_objective(grid, &t.field), average_objective(grid, &e.field)],
            converged: t.converged && e.converged,
            policy,
            time_field: t.field,
            energy_field: e.field,
            rank: 0,
            crowding: 0.0,
            transitions,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_time: f64,
    pub best_energy: f64,
    pub median_time: f64,
    pub median_energy: f64,
    pub front_size: usize,
}

#[derive(Debug, Clone)]
pub struct MepiResult {
    pub population: Vec<Individual>,
    /// Population indices of the rank-0 set, ascending.
    pub archive: Vec<usize>,
    /// One entry per generation, starting with the initial population.
    pub history: Vec<GenerationStats>,
}

/// Uniform random policy over the control box.
pub fn random_policy(points: usize, bounds: &ControlSet, rng: &mut ChaCha8Rng) -> PolicyField {
    let m = bounds.dim();
    let mut data = Vec::with_capacity(points * m);
    for _ in 0..points {
        for a in 0..m {
            let r: f64 = rng.random();
            data.push(bounds.lo[a] + (bounds.hi[a] - bounds.lo[a]) * r);
        }
    }
    PolicyField::new(m, data).expect("consistent dimensions")
}

/// Pointwise `lambda * u1 + (1 - lambda) * u2`.
pub fn simple_crossover(u1: &PolicyField, u2: &PolicyField, lambda: f64) -> Result<PolicyField> {
    if u1.dim() != u2.dim() || u1.len() != u2.len() {
        return config("crossover parents must share the grid and control dimension");
    }
    if !(0.0..=1.0).contains(&lambda) {
        return config(format!("crossover weight {lambda} outside [0, 1]"));
    }
    let data = u1
        .data()
        .iter()
        .zip(u2.data())
        .map(|(a, b)| if lambda == 1.0 { *a } else if lambda == 0.0 { *b } else { lambda * a + (1.0 - lambda) * b })
        .collect();
    PolicyField::new(u1.dim(), data)
}

/// Adds `N(0, (sigma * half_range)^2)` noise to every component, then clamps to the box.
pub fn gaussian_mutation(
    policy: &PolicyField,
    sigma: f64,
    bounds: &ControlSet,
    rng: &mut ChaCha8Rng,
) -> PolicyField {
    let mut out = policy.clone();
    for i in 0..out.len() {
        let u = out.control_mut(i);
        for (a, v) in u.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *v = (*v + z * sigma * bounds.half_range(a)).clamp(bounds.lo[a], bounds.hi[a]);
        }
    }
    out
}

/// Policy switching: per point, the candidate control (parents' controls in order, then the
/// table controls of `problem` when `use_extras`) with the best one-step value against the
/// pointwise best scalarized value of the parents.
pub fn policy_switching(
    problem: &SlProblem,
    parents: &[&Individual],
    alpha: f64,
    epsilon: f64,
    use_extras: bool,
) -> PolicyField {
    assert!(!parents.is_empty(), "policy switching needs at least one parent");
    let times: Vec<&[f64]> = parents.iter().map(|p| p.time_field.as_slice()).collect();
    let energies: Vec<&[f64]> = parents.iter().map(|p| p.energy_field.as_slice()).collect();
    let best = best_current_value(&times, &energies, alpha);
    let cost = CostKind::Scalarized { alpha, epsilon };
    let grid = problem.grid();
    let m = parents[0].policy.dim();
    let data: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .flat_map_iter(|x| {
            let mut choice: &[f64] = parents[0].policy.control(x);
            if !grid.is_pinned(x) {
                let mut best_v = f64::INFINITY;
                for p in parents {
                    let v = problem.candidate(&p.transitions[x], &best, &cost);
                    if v < best_v {
                        best_v = v;
                        choice = p.policy.control(x);
                    }
                }
                if use_extras {
                    for (c, u) in problem.controls().iter().enumerate() {
                        let v = problem.candidate(problem.transition(x, c), &best, &cost);
                        if v < best_v {
                            best_v = v;
                            choice = u;
                        }
                    }
                }
            }
            choice.to_vec()
        })
        .collect();
    PolicyField::new(m, data).expect("consistent dimensions")
}

fn assign_rank_and_crowding(pop: &mut [Individual]) {
    let objs: Vec<[f64; 2]> = pop.iter().map(|p| p.objectives).collect();
    let ranks = fast_non_dominated_sort(&objs);
    for front in fronts(&ranks) {
        let fo: Vec<[f64; 2]> = front.iter().map(|&i| objs[i]).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&fo)) {
            pop[i].rank = ranks[i];
            pop[i].crowding = d;
        }
    }
}

fn stats(generation: usize, pop: &[Individual]) -> GenerationStats {
    let median = |k: usize| {
        let mut v: Vec<f64> = pop.iter().map(|p| p.objectives[k]).collect();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    };
    let best = |k: usize| pop.iter().map(|p| p.objectives[k]).fold(f64::INFINITY, f64::min);
    GenerationStats {
        generation,
        best_time: best(0),
        best_energy: best(1),
        median_time: median(0),
        median_energy: median(1),
        front_size: pop.iter().filter(|p| p.rank == 0).count(),
    }
}

/// Picks `size` survivors: whole fronts while they fit, then from the cut front the extremes
/// of both objectives followed by a crowding-distance roulette.
fn select_survivors(objs: &[[f64; 2]], size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let ranks = fast_non_dominated_sort(objs);
    let mut chosen = Vec::with_capacity(size);
    for front in fronts(&ranks) {
        let room = size - chosen.len();
        if room == 0 {
            break;
        }
        if front.len() <= room {
            chosen.extend(front);
            continue;
        }
        let fo: Vec<[f64; 2]> = front.iter().map(|&i| objs[i]).collect();
        let crowd = crowding_distance(&fo);
        let mut keep: Vec<usize> = Vec::with_capacity(room);
        for k in 0..2 {
            let ext = (0..front.len())
                .min_by(|&a, &b| fo[a][k].total_cmp(&fo[b][k]).then(a.cmp(&b)))
                .expect("non-empty front");
            if keep.len() < room && !keep.contains(&ext) {
                keep.push(ext);
            }
        }
        let mut pool: Vec<usize> = (0..front.len()).filter(|p| !keep.contains(p)).collect();
        let mut weights = roulette_weights(&pool.iter().map(|&p| crowd[p]).collect::<Vec<_>>());
        while keep.len() < room {
            let total: f64 = weights.iter().sum();
            let pick = if total > 0.0 {
                let r = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut idx = weights.len() - 1;
                for (k, w) in weights.iter().enumerate() {
                    acc += w;
                    if r < acc {
                        idx = k;
                        break;
                    }
                }
                idx
            } else {
                rng.random_range(0..pool.len())
            };
            keep.push(pool.remove(pick));
            weights.remove(pick);
        }
        keep.sort_unstable();
        chosen.extend(keep.into_iter().map(|p| front[p]));
        break;
    }
    chosen
}

enum Recipe {
    Switch { parents: Vec<usize>, alpha: f64, extras: bool },
    Cross { a: usize, b: usize, lambda: f64 },
}

/// Runs the evolutionary search. `problem` carries the fixed extra control set offered to the
/// third elite; `bounds` is the control box.
pub fn run_mepi(problem: &SlProblem, bounds: &ControlSet, cfg: &MepiConfig) -> Result<MepiResult> {
    cfg.validate()?;
    bounds.validate()?;
    if bounds.dim() != problem.model().control_dim() {
        return config("control box dimension does not match the dynamics");
    }
    let opts = cfg.options();
    let n = problem.grid().len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let initial: Vec<PolicyField> = (0..cfg.population)
        .map(|_| random_policy(n, bounds, &mut rng))
        .collect();
    let mut population: Vec<Individual> = initial
        .into_par_iter()
        .map(|p| Individual::evaluate(problem, p, cfg.epsilon, &opts))
        .collect();
    assign_rank_and_crowding(&mut population);
    let mut history = vec![stats(0, &population)];

    for generation in 1..=cfg.generations {
        let pop = cfg.population;
        let ranks: Vec<usize> = population.iter().map(|p| p.rank).collect();
        let crowd: Vec<f64> = population.iter().map(|p| p.crowding).collect();
        let tournament = |rng: &mut ChaCha8Rng| {
            let a = rng.random_range(0..pop);
            let b = rng.random_range(0..pop);
            tournament_winner(&ranks, &crowd, a, b)
        };

        let everyone: Vec<usize> = (0..pop).collect();
        let elite_alpha: f64 = rng.random();
        let mut recipes = vec![
            Recipe::Switch { parents: everyone.clone(), alpha: 1.0, extras: false },
            Recipe::Switch { parents: everyone.clone(), alpha: 0.0, extras: false },
            Recipe::Switch { parents: everyone, alpha: elite_alpha, extras: true },
        ];
        for _ in 0..cfg.n_cp {
            let parents = (0..cfg.n_par).map(|_| tournament(&mut rng)).collect();
            let alpha = rng.random();
            recipes.push(Recipe::Switch { parents, alpha, extras: false });
        }
        for _ in 0..pop - cfg.n_cp - 3 {
            let a = tournament(&mut rng);
            let b = tournament(&mut rng);
            let lambda = rng.random();
            recipes.push(Recipe::Cross { a, b, lambda });
        }

        let mut children: Vec<PolicyField> = recipes
            .par_iter()
            .map(|r| match r {
                Recipe::Switch { parents, alpha, extras } => {
                    let ps: Vec<&Individual> = parents.iter().map(|&i| &population[i]).collect();
                    policy_switching(problem, &ps, *alpha, cfg.epsilon, *extras)
                }
                Recipe::Cross { a, b, lambda } => {
                    simple_crossover(&population[*a].policy, &population[*b].policy, *lambda)
                        .expect("population shares one grid")
                }
            })
            .collect();
        for child in children.iter_mut().skip(3) {
            *child = gaussian_mutation(child, cfg.sigma, bounds, &mut rng);
        }
        let offspring: Vec<Individual> = children
            .into_par_iter()
            .map(|p| Individual::evaluate(problem, p, cfg.epsilon, &opts))
            .collect();

        let mut combined = population;
        combined.extend(offspring);
        let objs: Vec<[f64; 2]> = combined.iter().map(|p| p.objectives).collect();
        let survivors = select_survivors(&objs, pop, &mut rng);
        let mut slots: Vec<Option<Individual>> = combined.into_iter().map(Some).collect();
        population = survivors
            .into_iter()
            .map(|i| slots[i].take().expect("each survivor chosen once"))
            .collect();
        assign_rank_and_crowding(&mut population);
        history.push(stats(generation, &population));
    }

    let archive = (0..population.len()).filter(|&i| population[i].rank == 0).collect();
    Ok(MepiResult {
        population,
        archive,
        history,
    })
}
