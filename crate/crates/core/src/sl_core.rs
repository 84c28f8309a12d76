//! Running costs, the transformed semi-Lagrangian Bellman operator, and the value-iteration and
//! policy-iteration solvers built on it.
//!
//! Value fields are plain `Vec<f64>` indexed by grid point, holding transformed values in
//! `[0, 1]`: `0` on goal points and `1` on obstacle-flagged points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{trapezoid_step_into, DynamicsModel};
use crate::error::{config, Result};
use crate::state_space::{SimplicialGrid, Stencil, MAX_DIM};
use crate::transform::{TransformKind, TransformedValue};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_EPSILON: f64 = 0.01;

/// Improvements smaller than this never displace the incumbent control.
const IMPROVE_MARGIN: f64 = 1e-12;

/// Which running cost `l(x, u)` is accumulated. Every cost is zero on the goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CostKind {
    /// `l = 1`.
    Time,
    /// `l = epsilon + u'u`.
    Energy { epsilon: f64 },
    /// `l = alpha * 1 + (1 - alpha) * (epsilon + u'u)`.
    Scalarized { alpha: f64, epsilon: f64 },
}

impl CostKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CostKind::Time => Ok(()),
            CostKind::Energy { epsilon } => check_epsilon(epsilon),
            CostKind::Scalarized { alpha, epsilon } => {
                if !(0.0..=1.0).contains(&alpha) {
                    return config(format!("scalarization weight {alpha} outside [0, 1]"));
                }
                check_epsilon(epsilon)
            }
        }
    }

    /// Running cost away from the goal, given `u'u`.
    #[inline]
    pub fn off_goal(&self, uu: f64) -> f64 {
        match *self {
            CostKind::Time => 1.0,
            CostKind::Energy { epsilon } => epsilon + uu,
            CostKind::Scalarized { alpha, epsilon } => alpha + (1.0 - alpha) * (epsilon + uu),
        }
    }

    pub fn running(&self, at_goal: bool, u: &[f64]) -> f64 {
        if at_goal {
            0.0
        } else {
            self.off_goal(dot(u, u))
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        config(format!("energy time-penalty {epsilon} must be positive"))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trapezoidal running cost over one step: `dt/2 (l(x_k, u) + l(x_next, u))`.
pub fn running_cost_g(
    cost: &CostKind,
    grid: &SimplicialGrid,
    x_k: &[f64],
    x_next: &[f64],
    u: &[f64],
    dt: f64,
) -> f64 {
    0.5 * dt
        * (cost.running(grid.is_goal_state(x_k), u) + cost.running(grid.is_goal_state(x_next), u))
}

/// One precomputed characteristic: where control `u` takes a grid point after one step.
#[derive(Debug, Clone, Copy, Default)]
pub struct Transition {
    stencil: Stencil,
    forbidden: bool,
    next_at_goal: bool,
    uu: f64,
}

impl Transition {
    /// Interpolated successor value; forbidden successors read as `1`.
    #[inline]
    pub fn successor(&self, field: &[f64]) -> f64 {
        if self.forbidden {
            1.0
        } else {
            self.stencil.apply(field)
        }
    }

    pub fn is_forbidden(&self) -> bool {
        self.forbidden
    }

    pub fn reaches_goal(&self) -> bool {
        self.next_at_goal
    }

    /// `g` for a step starting off the goal.
    #[inline]
    pub fn g(&self, cost: &CostKind, dt: f64) -> f64 {
        let l = cost.off_goal(self.uu);
        if self.next_at_goal {
            0.5 * dt * l
        } else {
            dt * l
        }
    }
}

/// Outcome of a value- or policy-iteration solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub field: Vec<f64>,
    /// Chosen control index per grid point.
    pub policy: Vec<usize>,
    /// Sweeps (value iteration) or improvement steps (policy iteration).
    pub iterations: usize,
    pub converged: bool,
}

/// Outcome of evaluating a frozen policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub field: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Sup-norm change at which sweeps stop.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Policy-improvement budget.
    pub max_iters: usize,
    /// Value iteration keeps sweeping at least this long. Under a transform that squashes large
    /// costs the per-sweep change can drop below `tol` before the front has crossed the domain.
    pub min_sweeps: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: DEFAULT_TOL,
            max_sweeps: 200_000,
            max_iters: 100,
            min_sweeps: 0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return config("solver tolerance must be positive");
        }
        if self.max_sweeps == 0 {
            return config("max_sweeps must be at least 1");
        }
        Ok(())
    }
}

/// A closed-loop policy holding one control vector per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyField {
    dim: usize,
    data: Vec<f64>,
}

impl PolicyField {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return config("policy data length must be a multiple of the control dimension");
        }
        Ok(PolicyField { dim, data })
    }

    pub fn constant(points: usize, u: &[f64]) -> Self {
        PolicyField {
            dim: u.len(),
            data: u.iter().copied().cycle().take(points * u.len()).collect(),
        }
    }

    pub fn from_indices(controls: &[Vec<f64>], indices: &[usize]) -> Self {
        let dim = controls.first().map_or(0, Vec::len);
        PolicyField {
            dim,
            data: indices
                .iter()
                .flat_map(|&k| controls[k].iter().copied())
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn control(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn control_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// A discretized control problem: grid, dynamics, a control list, and the transition of every
/// (grid point, control) pair.
pub struct SlProblem<'a> {
    grid: &'a SimplicialGrid,
    model: &'a DynamicsModel,
    controls: Vec<Vec<f64>>,
    dt: f64,
    transform: TransformKind,
    table: Vec<Transition>,
    free: Vec<usize>,
    rest: usize,
    approximate_steps: usize,
}

impl<'a> SlProblem<'a> {
    pub fn new(
        grid: &'a SimplicialGrid,
        model: &'a DynamicsModel,
        controls: Vec<Vec<f64>>,
        dt: f64,
    ) -> Result<Self> {
        if controls.is_empty() {
            return config("control list is empty");
        }
        let m = model.control_dim();
        if controls.iter().any(|u| u.len() != m) {
            return config(format!("every control must have {m} components"));
        }
        if grid.dim() != model.state_dim() {
            return config(format!(
                "grid dimension {} does not match state dimension {}",
                grid.dim(),
                model.state_dim()
            ));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return config("time step must be positive");
        }
        let n = grid.len();
        let nc = controls.len();
        let mut table = vec![Transition::default(); n * nc];
        let approximate_steps = table
            .par_chunks_mut(nc)
            .enumerate()
            .map(|(i, row)| {
                if grid.is_pinned(i) {
                    return 0;
                }
                let mut approx = 0;
                for (t, u) in row.iter_mut().zip(&controls) {
                    let (tr, exact) = transition(grid, model, grid.point(i), u, dt);
                    *t = tr;
                    approx += usize::from(!exact);
                }
                approx
            })
            .sum();
        let free = (0..n).filter(|&i| !grid.is_pinned(i)).collect();
        let rest = (0..nc)
            .min_by(|&a, &b| dot(&controls[a], &controls[a]).total_cmp(&dot(&controls[b], &controls[b])))
            .unwrap_or(0);
        Ok(SlProblem {
            grid,
            model,
            controls,
            dt,
            transform: TransformKind::Harmonic,
            table,
            free,
            rest,
            approximate_steps,
        })
    }

    pub fn with_transform(mut self, transform: TransformKind) -> Self {
        self.transform = transform;
        self
    }

    pub fn grid(&self) -> &SimplicialGrid {
        self.grid
    }

    pub fn model(&self) -> &DynamicsModel {
        self.model
    }

    pub fn controls(&self) -> &[Vec<f64>] {
        &self.controls
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn transform(&self) -> TransformKind {
        self.transform
    }

    /// Points whose value is not pinned by a boundary condition.
    pub fn free_points(&self) -> &[usize] {
        &self.free
    }

    /// Index of the smallest-norm control (lowest index on ties); the drift-only policy.
    pub fn rest_control(&self) -> usize {
        self.rest
    }

    /// Trapezoid steps that fell back to the explicit predictor-corrector.
    pub fn approximate_steps(&self) -> usize {
        self.approximate_steps
    }

    #[inline]
    pub fn transition(&self, i: usize, c: usize) -> &Transition {
        &self.table[i * self.controls.len() + c]
    }

    /// Transitions of an arbitrary continuous policy.
    pub fn transitions_for(&self, policy: &PolicyField) -> Vec<Transition> {
        assert_eq!(policy.len(), self.grid.len(), "policy length must match the grid");
        (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                if self.grid.is_pinned(i) {
                    Transition::default()
                } else {
                    transition(self.grid, self.model, self.grid.point(i), policy.control(i), self.dt).0
                }
            })
            .collect()
    }

    /// Transitions of an index policy, read from the table.
    pub fn transitions_of(&self, policy: &[usize]) -> Vec<Transition> {
        policy
            .iter()
            .enumerate()
            .map(|(i, &c)| *self.transition(i, c))
            .collect()
    }

    /// `0` on goal points, `1` everywhere else.
    pub fn initial_field(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| if self.grid.is_goal_point(i) { 0.0 } else { 1.0 })
            .collect()
    }

    /// Re-asserts the boundary conditions.
    pub fn pin(&self, field: &mut [f64]) {
        for (i, v) in field.iter_mut().enumerate() {
            if self.grid.is_goal_point(i) {
                *v = 0.0;
            } else if self.grid.is_obstacle(i) {
                *v = 1.0;
            }
        }
    }

    /// Value of taking transition `t` against `field`.
    #[inline]
    pub fn candidate(&self, t: &Transition, field: &[f64], cost: &CostKind) -> f64 {
        if t.forbidden {
            return 1.0;
        }
        self.transform.step(t.stencil.apply(field), t.g(cost, self.dt))
    }

    fn best_control(&self, i: usize, field: &[f64], cost: &CostKind) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for c in 0..self.controls.len() {
            let v = self.candidate(self.transition(i, c), field, cost);
            if v < best.0 {
                best = (v, c);
            }
        }
        best
    }

    /// One Jacobi sweep of the Bellman operator. Ties go to the lowest control index.
    pub fn bellman_update(&self, field: &[f64], cost: &CostKind) -> (Vec<f64>, Vec<usize>) {
        assert_eq!(field.len(), self.grid.len(), "field length must match the grid");
        let results: Vec<(f64, usize)> = (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                if self.grid.is_pinned(i) {
                    (field[i], self.rest)
                } else {
                    self.best_control(i, field, cost)
                }
            })
            .collect();
        let (mut values, policy): (Vec<f64>, Vec<usize>) = results.into_iter().unzip();
        self.pin(&mut values);
        (values, policy)
    }

    /// Jacobi value iteration from the pessimistic field.
    pub fn value_iteration(&self, cost: &CostKind, opts: &SolveOptions) -> Result<Solution> {
        cost.validate()?;
        opts.validate()?;
        let mut field = self.initial_field();
        let mut policy = vec![self.rest; self.grid.len()];
        if self.free.is_empty() {
            return Ok(Solution {
                field,
                policy,
                iterations: 0,
                converged: true,
            });
        }
        for sweep in 1..=opts.max_sweeps {
            let (next, pol) = self.bellman_update(&field, cost);
            let change = sup_diff(&next, &field);
            field = next;
            policy = pol;
            if change <= opts.tol && sweep >= opts.min_sweeps {
                return Ok(Solution {
                    field,
                    policy,
                    iterations: sweep,
                    converged: true,
                });
            }
        }
        Ok(Solution {
            field,
            policy,
            iterations: opts.max_sweeps,
            converged: false,
        })
    }

    /// Fixed point of the frozen-policy recursion.
    ///
    /// Gauss-Seidel sweeps start from the pessimistic field and visit points in ascending order
    /// of value (of `order_hint` on the first sweep, when given). A point's dependence on its own
    /// value through the interpolation stencil is solved exactly.
    pub fn evaluate(
        &self,
        transitions: &[Transition],
        cost: &CostKind,
        opts: &SolveOptions,
        order_hint: Option<&[f64]>,
    ) -> Evaluation {
        assert_eq!(transitions.len(), self.grid.len(), "one transition per point");
        let mut v = self.initial_field();
        if self.free.is_empty() {
            return Evaluation {
                field: v,
                sweeps: 0,
                converged: true,
            };
        }
        let g: Vec<f64> = transitions.iter().map(|t| t.g(cost, self.dt)).collect();
        let mut order = self.free.clone();
        if let Some(hint) = order_hint {
            sort_by_value(&mut order, hint);
        }
        let mut omega = 1.0;
        for sweep in 1..=opts.max_sweeps {
            let mut change: f64 = 0.0;
            let mut increased = false;
            for &i in &order {
                let t = &transitions[i];
                let target = if t.forbidden {
                    1.0
                } else {
                    let (own, rest) = t.stencil.split_self(i, &v);
                    solve_self(self.transform, own, rest, g[i])
                };
                let old = v[i];
                let new = (old + omega * (target - old)).clamp(0.0, 1.0);
                if new > old + 1e-14 {
                    increased = true;
                }
                change = change.max((new - old).abs());
                v[i] = new;
            }
            if increased {
                omega = 0.5;
            }
            if change <= opts.tol {
                return Evaluation {
                    field: v,
                    sweeps: sweep,
                    converged: true,
                };
            }
            sort_by_value(&mut order, &v);
        }
        Evaluation {
            field: v,
            sweeps: opts.max_sweeps,
            converged: false,
        }
    }

    pub fn evaluate_indices(
        &self,
        policy: &[usize],
        cost: &CostKind,
        opts: &SolveOptions,
        order_hint: Option<&[f64]>,
    ) -> Evaluation {
        self.evaluate(&self.transitions_of(policy), cost, opts, order_hint)
    }

    /// Greedy improvement against `field`; the incumbent survives unless beaten by more than a
    /// rounding margin.
    pub fn improve(&self, field: &[f64], cost: &CostKind, incumbent: &[usize]) -> Vec<usize> {
        (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                if self.grid.is_pinned(i) {
                    return incumbent[i];
                }
                let (best, c) = self.best_control(i, field, cost);
                let current = self.candidate(self.transition(i, incumbent[i]), field, cost);
                if current <= best + IMPROVE_MARGIN {
                    incumbent[i]
                } else {
                    c
                }
            })
            .collect()
    }

    /// Alternating evaluation and improvement from the drift-only policy.
    pub fn policy_iteration(&self, cost: &CostKind, opts: &SolveOptions) -> Result<Solution> {
        cost.validate()?;
        opts.validate()?;
        let mut policy = vec![self.rest; self.grid.len()];
        let mut eval = self.evaluate_indices(&policy, cost, opts, None);
        let mut converged_eval = eval.converged;
        for iter in 1..=opts.max_iters {
            let next = self.improve(&eval.field, cost, &policy);
            if next == policy {
                return Ok(Solution {
                    field: eval.field,
                    policy,
                    iterations: iter,
                    converged: converged_eval,
                });
            }
            policy = next;
            eval = self.evaluate_indices(&policy, cost, opts, Some(&eval.field));
            converged_eval = eval.converged;
        }
        Ok(Solution {
            field: eval.field,
            policy,
            iterations: opts.max_iters,
            converged: false,
        })
    }
}

/// Characteristic from `x` under `u`; the flag is `false` when the step was approximate.
fn transition(
    grid: &SimplicialGrid,
    model: &DynamicsModel,
    x: &[f64],
    u: &[f64],
    dt: f64,
) -> (Transition, bool) {
    let mut next = [0.0; MAX_DIM];
    let exact = trapezoid_step_into(model, x, u, dt, &mut next);
    let next = &next[..grid.dim()];
    let uu = dot(u, u);
    let stencil = if grid.is_forbidden_state(next) {
        None
    } else {
        grid.stencil(next)
    };
    let t = match stencil {
        Some(stencil) => Transition {
            stencil,
            forbidden: false,
            next_at_goal: grid.is_goal_state(next),
            uu,
        },
        None => Transition {
            forbidden: true,
            uu,
            ..Default::default()
        },
    };
    (t, exact)
}

/// Solves `v = step(own * v + rest, g)` for `v` in `[0, 1]`.
#[inline]
fn solve_self(transform: TransformKind, own: f64, rest: f64, g: f64) -> f64 {
    match transform {
        TransformKind::Harmonic => {
            // Smallest root of (own g) v^2 - b v + c, which lies in [0, 1].
            let a = own * g;
            let b = (1.0 - own) + g * (1.0 - rest + own);
            let c = rest + g * (1.0 - rest);
            let disc = (b * b - 4.0 * a * c).max(0.0);
            let q = 0.5 * (b + disc.sqrt());
            if q > 0.0 {
                (c / q).clamp(0.0, 1.0)
            } else {
                1.0
            }
        }
        TransformKind::Kruzkov => {
            let e = (-g).exp();
            let den = 1.0 - own * e;
            if den > 0.0 {
                ((1.0 - e * (1.0 - rest)) / den).clamp(0.0, 1.0)
            } else {
                1.0
            }
        }
    }
}

fn sort_by_value(order: &mut [usize], values: &[f64]) {
    order.sort_unstable_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Recovers untransformed values; obstacle points map to `+inf`.
pub fn recover_value(grid: &SimplicialGrid, field: &[f64], transform: TransformKind) -> Vec<f64> {
    field
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            if grid.is_obstacle(i) {
                f64::INFINITY
            } else {
                transform.inverse(TransformedValue::new(h.clamp(0.0, 1.0)).expect("clamped"))
            }
        })
        .collect()
}

/// Mean of a field over the points that are not obstacle-flagged.
pub fn average_objective(grid: &SimplicialGrid, field: &[f64]) -> f64 {
    let (sum, count) = field
        .iter()
        .enumerate()
        .filter(|&(i, _)| !grid.is_obstacle(i))
        .fold((0.0, 0usize), |(s, c), (_, &v)| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}
