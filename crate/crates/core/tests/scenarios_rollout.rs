use flowplan::dynamics::{builtin_flow, ControlSet, Params};
use flowplan::rollout::{default_goal_radius, goal_spacing, interpolate_policy, simulate, RolloutOptions};
use flowplan::scenarios::{builtin_scenario, load_scenario, resolve_scenario, save_scenario, GridSpec, Scenario, BUILTIN_SCENARIOS};
use flowplan::sl_core::{recover_value, CostKind, PolicyField, SlProblem, SolveOptions};
use flowplan::state_space::obstacles::{ObstacleSet, Shape};
use flowplan::state_space::{build_structured_grid, DomainBox};
use flowplan::transform::TransformKind;

#[test]
fn builtin_grid_sizes() {
    let expect = [("ex1_obstacles", 19881), ("ex3_vortex", 796), ("ex5_doublegyre", 5625)];
    for (name, n) in expect {
        let s = builtin_scenario(name).unwrap();
        assert_eq!(s.build_grid().unwrap().len(), n, "{name}");
    }
    let ex3 = builtin_scenario("ex3_vortex").unwrap();
    assert_eq!(ex3.build_mepi_grid().unwrap().len(), 596);
    // The goal of ex2 sits on a lattice node, so no point is inserted.
    assert_eq!(builtin_scenario("ex2_linear3d").unwrap().build_grid().unwrap().len(), 1331);
}

#[test]
fn builtin_control_sets_and_weights() {
    let controls = |n: &str| builtin_scenario(n).unwrap().controls.enumerate().unwrap().len();
    assert_eq!(controls("ex2_linear3d"), 729);
    for name in ["ex3_vortex", "ex4_ocean", "ex5_doublegyre"] {
        assert_eq!(controls(name), 225, "{name}");
    }
    let alphas = |n: &str| builtin_scenario(n).unwrap().cpi_config().unwrap().alphas.len();
    assert_eq!(alphas("ex2_linear3d"), 14);
    assert_eq!(alphas("ex3_vortex"), 15);
    assert_eq!(alphas("ex5_doublegyre"), 12);
    assert_eq!(builtin_scenario("ex4_ocean").unwrap().goal, vec![80.0, 80.0]);
}

#[test]
fn scenarios_survive_a_file_round_trip() {
    let dir = std::env::temp_dir().join(format!("flowplan-scenarios-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    for name in BUILTIN_SCENARIOS {
        let s = builtin_scenario(name).unwrap();
        let path = dir.join(format!("{name}.json"));
        save_scenario(&s, &path).unwrap();
        assert_eq!(load_scenario(&path).unwrap(), s);
        assert_eq!(resolve_scenario(path.to_str().unwrap()).unwrap(), s);
        assert_eq!(resolve_scenario(name).unwrap(), s);
        assert_eq!(Scenario::from_json_str(&s.to_json_string()).unwrap(), s);
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn malformed_scenarios_are_rejected() {
    let mut s = builtin_scenario("ex3_vortex").unwrap();
    s.goal = vec![-0.2, 0.3];
    assert!(s.validate().is_err(), "goal inside the obstacle");
    let mut s = builtin_scenario("ex3_vortex").unwrap();
    s.dt = 0.0;
    assert!(s.validate().is_err());
    assert!(Scenario::from_json_str("{\"version\": 1}").is_err());
    assert!(resolve_scenario("definitely_not_a_scenario").is_err());
}

fn open_plane() -> (flowplan::state_space::SimplicialGrid, flowplan::dynamics::DynamicsModel, ControlSet) {
    let domain = DomainBox::new(vec![0.0; 2], vec![10.0; 2]).unwrap();
    let obstacles = ObstacleSet::new(vec![Shape::Box { lo: vec![6.0, 6.0], hi: vec![8.0, 8.0] }]);
    let grid = build_structured_grid(&domain, &[11, 11], &[false; 2], &[9.0, 1.0], &obstacles).unwrap();
    let model = builtin_flow("zero", &Params::new()).unwrap();
    let bounds = ControlSet::new(vec![-1.0; 2], vec![1.0; 2], None).unwrap();
    (grid, model, bounds)
}

#[test]
fn constant_control_energy() {
    let (grid, model, bounds) = open_plane();
    let policy = PolicyField::constant(grid.len(), &[0.5, 0.0]);
    let opts = RolloutOptions { dt: 0.1, t_max: 4.0, goal_radius: 0.5 };
    let traj = simulate(&policy, &grid, &model, &bounds, &[1.0, 5.0], &opts).unwrap();
    assert!(!traj.reached_goal && !traj.hit_obstacle);
    assert!((traj.total_time - 4.0).abs() < 1e-9);
    assert!((traj.total_energy - 0.25 * traj.total_time).abs() < 1e-9);
    let last = traj.samples.last().unwrap();
    assert!((last.state[0] - 3.0).abs() < 1e-9);
}

#[test]
fn rollouts_stop_at_the_goal_and_at_obstacles() {
    let (grid, model, bounds) = open_plane();
    let policy = PolicyField::constant(grid.len(), &[1.0, 1.0]);
    let opts = RolloutOptions { dt: 0.1, t_max: 20.0, goal_radius: 0.5 };
    let at_goal = simulate(&policy, &grid, &model, &bounds, &[9.0, 1.0], &opts).unwrap();
    assert!(at_goal.reached_goal);
    assert_eq!(at_goal.total_time, 0.0);
    let inside = simulate(&policy, &grid, &model, &bounds, &[7.0, 7.0], &opts).unwrap();
    assert!(inside.hit_obstacle && !inside.reached_goal);
    let into_wall = simulate(&policy, &grid, &model, &bounds, &[5.0, 5.0], &opts).unwrap();
    assert!(into_wall.hit_obstacle, "diagonal course runs into the box");
    assert!(into_wall.total_time > 0.9 && into_wall.total_time < 1.2);
}

#[test]
fn interpolated_controls_stay_in_bounds() {
    let (grid, _, bounds) = open_plane();
    let data: Vec<f64> = (0..2 * grid.len()).map(|k| ((k * 37 % 11) as f64 - 5.0) / 5.0).collect();
    let policy = PolicyField::new(2, data).unwrap();
    for x in [[0.3, 0.3], [9.0, 1.0], [7.0, 7.0], [12.0, 5.0]] {
        let u = interpolate_policy(&policy, &grid, &bounds, &x);
        assert!(bounds.contains(&u), "{x:?} -> {u:?}");
    }
}

#[test]
fn minimum_time_policy_reaches_the_vortex_goal() {
    let s = builtin_scenario("ex3_vortex").unwrap();
    let grid = s.build_grid_from(&GridSpec::Unstructured { target: 300, boundary_samples: 40 }).unwrap();
    let model = s.model().unwrap();
    let controls = s.controls.enumerate().unwrap();
    let p = SlProblem::new(&grid, &model, controls.clone(), s.dt).unwrap();
    let sol = p.policy_iteration(&CostKind::Time, &SolveOptions::default()).unwrap();
    let start = [0.0, 0.9];
    assert!(grid.interpolate(&sol.field, &start) < 1.0);
    let time = recover_value(&grid, &sol.field, TransformKind::Harmonic);
    let expected = grid.interpolate(&time, &start);
    assert!(expected.is_finite());
    let policy = PolicyField::from_indices(&controls, &sol.policy);
    let radius = goal_spacing(&grid);
    assert!(radius > 0.0 && radius <= default_goal_radius(&grid));
    let opts = RolloutOptions { dt: s.dt, t_max: 10.0 * expected, goal_radius: radius };
    let traj = simulate(&policy, &grid, &model, &s.controls, &start, &opts).unwrap();
    assert!(traj.reached_goal, "stopped after {} without reaching the goal", traj.total_time);
    assert!(!traj.hit_obstacle);
}
