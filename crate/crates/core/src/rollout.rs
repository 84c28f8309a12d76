//! Closed-loop simulation of a policy field and trajectory accounting.

use serde::{Deserialize, Serialize};

use crate::dynamics::{trapezoid_step, ControlSet, DynamicsModel};
use crate::error::{config, Result};
use crate::sl_core::PolicyField;
use crate::state_space::SimplicialGrid;

pub use crate::nsga::pareto_filter;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: Vec<f64>,
    pub control: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub total_time: f64,
    /// Trapezoidal accumulation of `u'u` over the samples.
    pub total_energy: f64,
    pub reached_goal: bool,
    pub hit_obstacle: bool,
}

impl Trajectory {
    fn empty(reached_goal: bool, hit_obstacle: bool) -> Self {
        Trajectory {
            samples: Vec::new(),
            total_time: 0.0,
            total_energy: 0.0,
            reached_goal,
            hit_obstacle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutOptions {
    pub dt: f64,
    pub t_max: f64,
    pub goal_radius: f64,
}

pub fn default_goal_radius(grid: &SimplicialGrid) -> f64 {
    1.5 * grid.max_spacing()
}

/// Longest spatial edge incident to a goal point: the grid resolution right at the goal, which
/// on irregular grids can be far finer than the global maximum spacing.
pub fn goal_spacing(grid: &SimplicialGrid) -> f64 {
    let ds = grid.goal().len();
    let mut longest: f64 = 0.0;
    for s in grid.simplices() {
        if !s.iter().any(|&v| grid.is_goal_point(v as usize)) {
            continue;
        }
        for (a, &i) in s.iter().enumerate() {
            for &j in &s[a + 1..] {
                let (p, q) = (grid.point(i as usize), grid.point(j as usize));
                let d: f64 = (0..ds).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>().sqrt();
                longest = longest.max(d);
            }
        }
    }
    longest
}

/// Ten times the recovered time at the start; when that is unavailable (forbidden start or
/// unreachable value) a budget of 1000 steps is used instead.
pub fn default_t_max(recovered_time: f64, dt: f64) -> f64 {
    if recovered_time.is_finite() && recovered_time > 0.0 {
        (10.0 * recovered_time).max(10.0 * dt)
    } else {
        1000.0 * dt
    }
}

/// Control at `x`: barycentric blend of the stored controls of the containing simplex, skipping
/// pinned vertices (their controls are never optimized) and clamped to the box. Outside the
/// triangulated region, or when every vertex is pinned, the nearest unpinned point is used.
pub fn interpolate_policy(
    policy: &PolicyField,
    grid: &SimplicialGrid,
    bounds: &ControlSet,
    x: &[f64],
) -> Vec<f64> {
    let m = policy.dim();
    let mut u = vec![0.0; m];
    let mut total = 0.0;
    if let Some(stencil) = grid.stencil(x) {
        for (i, w) in stencil.iter() {
            if grid.is_pinned(i) || w <= 0.0 {
                continue;
            }
            total += w;
            for (a, c) in u.iter_mut().zip(policy.control(i)) {
                *a += w * c;
            }
        }
    }
    if total > 0.0 {
        for a in &mut u {
            *a /= total;
        }
    } else if let Some(i) = nearest_unpinned(grid, x) {
        u.copy_from_slice(policy.control(i));
    }
    bounds.clamp(&mut u);
    u
}

fn nearest_unpinned(grid: &SimplicialGrid, x: &[f64]) -> Option<usize> {
    (0..grid.len())
        .filter(|&i| !grid.is_pinned(i))
        .map(|i| {
            let d: f64 = grid.point(i).iter().zip(x).map(|(p, q)| (p - q).powi(2)).sum();
            (d, i)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, i)| i)
}

/// Simulates the closed loop from `start` (spatial coordinates; an augmented model starts at
/// time `0`). Stops on reaching `goal_radius` of the goal, on entering an obstacle or leaving
/// the domain, or at `t_max`.
pub fn simulate(
    policy: &PolicyField,
    grid: &SimplicialGrid,
    model: &DynamicsModel,
    bounds: &ControlSet,
    start: &[f64],
    opts: &RolloutOptions,
) -> Result<Trajectory> {
    if !(opts.dt > 0.0) || !(opts.t_max >= 0.0) || !(opts.goal_radius >= 0.0) {
        return config("rollout needs dt > 0, t_max >= 0 and goal_radius >= 0");
    }
    if policy.len() != grid.len() || policy.dim() != model.control_dim() {
        return config("policy does not match the grid and dynamics");
    }
    let mut x = start.to_vec();
    if x.len() == model.spatial_dim() && model.time_period().is_some() {
        x.push(0.0);
    }
    if x.len() != model.state_dim() {
        return config(format!(
            "start needs {} coordinates",
            model.spatial_dim()
        ));
    }
    if grid.is_forbidden_state(&x) {
        return Ok(Trajectory::empty(false, true));
    }
    if grid.goal_distance(&x) <= opts.goal_radius {
        return Ok(Trajectory::empty(true, false));
    }

    let norm2 = |u: &[f64]| u.iter().map(|v| v * v).sum::<f64>();
    let mut samples: Vec<Sample> = Vec::new();
    let mut energy = 0.0;
    let mut k = 0usize;
    let (mut reached, mut hit) = (false, false);
    loop {
        let t = k as f64 * opts.dt;
        let u = interpolate_policy(policy, grid, bounds, &x);
        if let Some(prev) = samples.last() {
            energy += opts.dt * (0.5 * (norm2(&prev.control) + norm2(&u)));
        }
        if reached || hit || t + 0.5 * opts.dt > opts.t_max {
            samples.push(Sample { t, state: x, control: u });
            break;
        }
        let step = trapezoid_step(model, &x, &u, opts.dt);
        samples.push(Sample { t, state: x, control: u });
        x = step.state;
        k += 1;
        if grid.is_forbidden_state(&x) {
            hit = true;
        } else if grid.goal_distance(&x) <= opts.goal_radius {
            reached = true;
        }
    }
    Ok(Trajectory {
        total_time: k as f64 * opts.dt,
        total_energy: energy,
        reached_goal: reached,
        hit_obstacle: hit,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Flow, Steering};
    use crate::state_space::{build_structured_grid, DomainBox, ObstacleSet, Shape};

    fn setup(obstacles: ObstacleSet) -> (SimplicialGrid, DynamicsModel, ControlSet) {
        let dom = DomainBox::new(vec![0.0, 0.0], vec![10.0, 10.0]).unwrap();
        let grid = build_structured_grid(&dom, &[11, 11], &[false, false], &[9.0, 5.0], &obstacles).unwrap();
        let model = DynamicsModel::new(Flow::Zero { dim: 2 }, Steering::Identity(2)).unwrap();
        let bounds = ControlSet::new(vec![-1.0; 2], vec![1.0; 2], None).unwrap();
        (grid, model, bounds)
    }

    fn opts() -> RolloutOptions {
        RolloutOptions {
            dt: 0.5,
            t_max: 100.0,
            goal_radius: 0.3,
        }
    }

    #[test]
    fn goal_spacing_on_a_lattice() {
        let (grid, _, _) = setup(ObstacleSet::default());
        assert!((goal_spacing(&grid) - 2f64.sqrt()).abs() < 1e-12);
        assert!(goal_spacing(&grid) <= grid.max_spacing());
    }

    #[test]
    fn start_at_goal_is_empty() {
        let (grid, model, bounds) = setup(ObstacleSet::default());
        let p = PolicyField::constant(grid.len(), &[1.0, 0.0]);
        let tr = simulate(&p, &grid, &model, &bounds, &[9.0, 5.0], &opts()).unwrap();
        assert!(tr.reached_goal && tr.samples.is_empty());
        assert_eq!((tr.total_time, tr.total_energy), (0.0, 0.0));
    }

    #[test]
    fn straight_line_at_unit_speed() {
        let (grid, model, bounds) = setup(ObstacleSet::default());
        let p = PolicyField::constant(grid.len(), &[1.0, 0.0]);
        let tr = simulate(&p, &grid, &model, &bounds, &[1.0, 5.0], &opts()).unwrap();
        assert!(tr.reached_goal && !tr.hit_obstacle);
        assert!((tr.total_time - 8.0).abs() <= 0.5);
        let steps = (tr.total_time / 0.5).round();
        assert!((tr.total_energy - steps * 0.5).abs() < 1e-12);
        for w in tr.samples.windows(2) {
            assert!((w[1].t - w[0].t - 0.5).abs() < 1e-12);
            assert!((w[1].state[1] - 5.0).abs() < 1e-12);
        }
        assert_eq!(tr.samples.last().unwrap().t, tr.total_time);
    }

    #[test]
    fn obstacle_start_and_collision() {
        let wall = ObstacleSet::new(vec![Shape::Box {
            lo: vec![4.2, 2.0],
            hi: vec![5.8, 8.0],
        }]);
        let (grid, model, bounds) = setup(wall);
        let p = PolicyField::constant(grid.len(), &[1.0, 0.0]);
        let inside = simulate(&p, &grid, &model, &bounds, &[5.0, 5.0], &opts()).unwrap();
        assert!(inside.hit_obstacle && inside.samples.is_empty());
        let crash = simulate(&p, &grid, &model, &bounds, &[1.0, 5.0], &opts()).unwrap();
        assert!(crash.hit_obstacle && !crash.reached_goal);
    }

    #[test]
    fn time_budget_stops_the_loop() {
        let (grid, model, bounds) = setup(ObstacleSet::default());
        let p = PolicyField::constant(grid.len(), &[0.0, 0.0]);
        let o = RolloutOptions { t_max: 3.0, ..opts() };
        let tr = simulate(&p, &grid, &model, &bounds, &[1.0, 5.0], &o).unwrap();
        assert!(!tr.reached_goal && !tr.hit_obstacle);
        assert_eq!(tr.total_time, 3.0);
        assert_eq!(tr.samples.len(), 7);
    }

    #[test]
    fn policy_interpolation_is_clamped_and_blended() {
        let (grid, _, _) = setup(ObstacleSet::default());
        let mut p = PolicyField::constant(grid.len(), &[0.0, 0.0]);
        for i in 0..grid.len() {
            let x = grid.point(i)[0];
            p.control_mut(i)[0] = x / 5.0;
        }
        let narrow = ControlSet::new(vec![-1.0; 2], vec![1.0; 2], None).unwrap();
        let u = interpolate_policy(&p, &grid, &narrow, &[2.5, 3.3]);
        assert!((u[0] - 0.5).abs() < 1e-12);
        let u = interpolate_policy(&p, &grid, &narrow, &[8.5, 3.3]);
        assert_eq!(u[0], 1.0);
    }
}
