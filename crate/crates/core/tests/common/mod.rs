#![allow(dead_code)]

use flowplan::dynamics::{ControlSet, DynamicsModel, Flow, Steering};
use flowplan::state_space::obstacles::{ObstacleSet, Shape};
use flowplan::state_space::{build_structured_grid, DomainBox, SimplicialGrid};

/// A rotating flow on a small lattice with one box obstacle.
pub struct Small {
    pub grid: SimplicialGrid,
    pub model: DynamicsModel,
    pub bounds: ControlSet,
    pub dt: f64,
}

pub fn small() -> Small {
    let domain = DomainBox::new(vec![-1.0; 2], vec![1.0; 2]).unwrap();
    let obstacles = ObstacleSet::new(vec![Shape::Box { lo: vec![0.1, -0.5], hi: vec![0.4, 0.3] }]);
    let grid = build_structured_grid(&domain, &[13, 13], &[false; 2], &[0.5, 0.5], &obstacles).unwrap();
    let model = DynamicsModel::new(
        Flow::Vortex { center: [0.0, 0.0], matrix: [[0.0, -1.0], [1.0, 0.0]], floor: 1.0 },
        Steering::Identity(2),
    )
    .unwrap();
    let bounds = ControlSet::new(vec![-1.0; 2], vec![1.0; 2], Some(vec![5, 5])).unwrap();
    Small { grid, model, bounds, dt: 0.2 }
}
