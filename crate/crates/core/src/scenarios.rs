//! Benchmark scenarios and their JSON file format.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cpi::{log_spaced_alphas, CpiConfig};
use crate::dynamics::{augment_time, builtin_flow, ControlSet, DynamicsModel, ParamValue, Params};
use crate::error::{config, Error, Result};
use crate::mepi::MepiConfig;
use crate::state_space::{
    build_structured_grid, build_unstructured_grid, DomainBox, ObstacleSet, Shape, SimplicialGrid,
};

pub const SCENARIO_VERSION: u32 = 1;

pub const BUILTIN_SCENARIOS: [&str; 5] = [
    "ex1_obstacles",
    "ex2_linear3d",
    "ex3_vortex",
    "ex4_ocean",
    "ex5_doublegyre",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub name: String,
    #[serde(default)]
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum GridSpec {
    Structured {
        counts: Vec<usize>,
        #[serde(default)]
        periodic: Vec<bool>,
    },
    Unstructured {
        target: usize,
        #[serde(default)]
        boundary_samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpiDefaults {
    pub alphas: usize,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub max_iters: usize,
}

impl Default for CpiDefaults {
    fn default() -> Self {
        CpiDefaults {
            alphas: 14,
            alpha_lo: 0.01,
            alpha_hi: 1.0,
            max_iters: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MepiDefaults {
    pub population: usize,
    pub generations: usize,
    pub n_cp: usize,
    pub n_par: usize,
    pub sigma: f64,
    /// Grid used by the evolutionary solver when it differs from `grid`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

impl Default for MepiDefaults {
    fn default() -> Self {
        MepiDefaults {
            population: 20,
            generations: 60,
            n_cp: 15,
            n_par: 3,
            sigma: 0.2,
            grid: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverDefaults {
    pub cpi: CpiDefaults,
    pub mepi: MepiDefaults,
}

/// A complete planning problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    pub dynamics: DynamicsSpec,
    /// State box; for time-augmented models the last axis is time over one period.
    pub domain: DomainBox,
    /// Goal in spatial coordinates.
    pub goal: Vec<f64>,
    #[serde(default)]
    pub obstacles: ObstacleSet,
    pub dt: f64,
    pub controls: ControlSet,
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_period: Option<f64>,
    #[serde(default)]
    pub defaults: SolverDefaults,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.version != SCENARIO_VERSION {
            return config(format!(
                "unsupported scenario version {} (expected {SCENARIO_VERSION})",
                self.version
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return config("dt must be positive");
        }
        self.domain.validate()?;
        self.controls.validate()?;
        let model = self.model()?;
        if model.state_dim() != self.domain.dim() {
            return config(format!(
                "domain has {} axes but the dynamics have {} states",
                self.domain.dim(),
                model.state_dim()
            ));
        }
        if model.control_dim() != self.controls.dim() {
            return config(format!(
                "control box has {} axes but the dynamics take {} controls",
                self.controls.dim(),
                model.control_dim()
            ));
        }
        if self.goal.len() != model.spatial_dim() {
            return config(format!("goal needs {} coordinates", model.spatial_dim()));
        }
        let d = model.spatial_dim();
        let inside = (0..d).all(|a| self.goal[a] >= self.domain.lo[a] && self.goal[a] <= self.domain.hi[a]);
        if !inside {
            return config("goal lies outside the domain");
        }
        if self.obstacles.contains(&self.goal) {
            return config("goal lies inside an obstacle");
        }
        if let Some(p) = self.time_period {
            let span = self.domain.hi[d] - self.domain.lo[d];
            if (span - p).abs() > 1e-12 * p {
                return config("time axis must span exactly one period");
            }
        }
        self.check_grid(&self.grid)?;
        if let Some(g) = &self.defaults.mepi.grid {
            self.check_grid(g)?;
        }
        Ok(())
    }

    fn check_grid(&self, spec: &GridSpec) -> Result<()> {
        match spec {
            GridSpec::Structured { counts, periodic } => {
                if counts.len() != self.domain.dim() {
                    return config("grid counts need one entry per domain axis");
                }
                if !periodic.is_empty() && periodic.len() != counts.len() {
                    return config("grid periodic flags need one entry per domain axis");
                }
                let time_axis = self.time_period.map(|_| self.domain.dim() - 1);
                for (a, &p) in self.periodic_flags(periodic).iter().enumerate() {
                    if p != (Some(a) == time_axis) {
                        return config("only the augmented time axis may be periodic");
                    }
                }
            }
            GridSpec::Unstructured { .. } => {
                if self.domain.dim() != 2 {
                    return config("unstructured grids are two-dimensional");
                }
            }
        }
        Ok(())
    }

    fn periodic_flags(&self, periodic: &[bool]) -> Vec<bool> {
        if periodic.is_empty() {
            let d = self.domain.dim();
            (0..d).map(|a| self.time_period.is_some() && a == d - 1).collect()
        } else {
            periodic.to_vec()
        }
    }

    pub fn model(&self) -> Result<DynamicsModel> {
        let base = builtin_flow(&self.dynamics.name, &self.dynamics.params)?;
        match self.time_period {
            Some(p) => augment_time(&base, p),
            None => Ok(base),
        }
    }

    pub fn build_grid(&self) -> Result<SimplicialGrid> {
        self.build_grid_from(&self.grid)
    }

    /// Grid for the evolutionary solver (falls back to `grid`).
    pub fn build_mepi_grid(&self) -> Result<SimplicialGrid> {
        self.build_grid_from(self.defaults.mepi.grid.as_ref().unwrap_or(&self.grid))
    }

    pub fn build_grid_from(&self, spec: &GridSpec) -> Result<SimplicialGrid> {
        self.check_grid(spec)?;
        match spec {
            GridSpec::Structured { counts, periodic } => build_structured_grid(
                &self.domain,
                counts,
                &self.periodic_flags(periodic),
                &self.goal,
                &self.obstacles,
            ),
            GridSpec::Unstructured {
                target,
                boundary_samples,
            } => build_unstructured_grid(
                &self.domain,
                *target,
                &self.goal,
                &self.obstacles,
                *boundary_samples,
            ),
        }
    }

    pub fn cpi_config(&self) -> Result<CpiConfig> {
        let d = &self.defaults.cpi;
        Ok(CpiConfig {
            alphas: log_spaced_alphas(d.alphas, d.alpha_lo, d.alpha_hi)?,
            max_iters: d.max_iters,
            ..CpiConfig::default()
        })
    }

    pub fn mepi_config(&self) -> MepiConfig {
        let d = &self.defaults.mepi;
        MepiConfig {
            population: d.population,
            generations: d.generations,
            n_cp: d.n_cp,
            n_par: d.n_par,
            sigma: d.sigma,
            ..MepiConfig::default()
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Parses and validates a scenario document; schema errors carry the offending field path.
    pub fn from_json_str(text: &str) -> Result<Scenario> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::from_json_str(&std::fs::read_to_string(path)?)
}

pub fn save_scenario(scenario: &Scenario, path: &Path) -> Result<()> {
    std::fs::write(path, scenario.to_json_string() + "\n")?;
    Ok(())
}

/// A builtin by name, or else a scenario file at that path.
pub fn resolve_scenario(name_or_path: &str) -> Result<Scenario> {
    if BUILTIN_SCENARIOS.contains(&name_or_path) {
        return builtin_scenario(name_or_path);
    }
    let path = Path::new(name_or_path);
    if path.is_file() {
        return load_scenario(path);
    }
    config(format!(
        "unknown scenario `{name_or_path}`; builtins are {}",
        BUILTIN_SCENARIOS.join(", ")
    ))
}

fn square(lo: f64, hi: f64, dim: usize) -> DomainBox {
    DomainBox::new(vec![lo; dim], vec![hi; dim]).expect("valid box")
}

fn controls(bound: f64, dim: usize, per_axis: usize) -> ControlSet {
    ControlSet::new(vec![-bound; dim], vec![bound; dim], Some(vec![per_axis; dim])).expect("valid controls")
}

fn regular_polygon(center: [f64; 2], radius: f64, sides: usize, phase: f64) -> Shape {
    Shape::Polygon {
        vertices: (0..sides)
            .map(|k| {
                let t = phase + 2.0 * PI * k as f64 / sides as f64;
                [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
            })
            .collect(),
    }
}

pub fn builtin_scenario(name: &str) -> Result<Scenario> {
    let dynamics = |name: &str| DynamicsSpec {
        name: name.into(),
        params: Params::new(),
    };
    let s = match name {
        "ex1_obstacles" => Scenario {
            version: SCENARIO_VERSION,
            name: name.into(),
            dynamics: DynamicsSpec {
                name: "zero".into(),
                params: Params::from([("dim".to_string(), ParamValue::Scalar(2.0))]),
            },
            domain: square(-10.0, 10.0, 2),
            goal: vec![0.0, 0.0],
            obstacles: ObstacleSet::new(vec![
                Shape::Box {
                    lo: vec![2.5, -7.0],
                    hi: vec![4.5, 5.0],
                },
                Shape::Box {
                    lo: vec![-7.5, -3.0],
                    hi: vec![-3.5, 6.0],
                },
            ]),
            dt: 1.0,
            controls: controls(0.2, 2, 5),
            grid: GridSpec::Structured {
                counts: vec![141, 141],
                periodic: vec![],
            },
            time_period: None,
            defaults: SolverDefaults::default(),
        },
        "ex2_linear3d" => Scenario {
            version: SCENARIO_VERSION,
            name: name.into(),
            dynamics: dynamics("linear"),
            domain: square(-1.0, 1.0, 3),
            goal: vec![-0.2, 0.2, 0.0],
            obstacles: ObstacleSet::default(),
            dt: 0.1,
            controls: controls(2.0, 3, 9),
            grid: GridSpec::Structured {
                counts: vec![11, 11, 11],
                periodic: vec![],
            },
            time_period: None,
            defaults: SolverDefaults {
                cpi: CpiDefaults {
                    alphas: 14,
                    max_iters: 30,
                    ..CpiDefaults::default()
                },
                mepi: MepiDefaults {
                    generations: 60,
                    ..MepiDefaults::default()
                },
            },
        },
        "ex3_vortex" => Scenario {
            version: SCENARIO_VERSION,
            name: name.into(),
            dynamics: dynamics("vortex"),
            domain: square(-1.0, 1.0, 2),
            goal: vec![-0.5, 0.6],
            obstacles: ObstacleSet::new(vec![Shape::Polygon {
                vertices: vec![[-0.3, 0.0], [-0.1, 0.0], [-0.1, 0.7], [-0.3, 0.7]],
            }]),
            dt: 0.05,
            controls: controls(2.0, 2, 15),
            grid: GridSpec::Unstructured {
                target: 796,
                boundary_samples: 95,
            },
            time_period: None,
            defaults: SolverDefaults {
                cpi: CpiDefaults {
                    alphas: 15,
                    max_iters: 30,
                    ..CpiDefaults::default()
                },
                mepi: MepiDefaults {
                    generations: 100,
                    grid: Some(GridSpec::Unstructured {
                        target: 596,
                        boundary_samples: 95,
                    }),
                    ..MepiDefaults::default()
                },
            },
        },
        "ex4_ocean" => Scenario {
            version: SCENARIO_VERSION,
            name: name.into(),
            dynamics: dynamics("lamb_sum"),
            domain: square(0.0, 100.0, 2),
            goal: vec![80.0, 80.0],
            obstacles: ObstacleSet::new(vec![
                regular_polygon([42.0, 50.0], 8.0, 7, 0.3),
                regular_polygon([78.0, 52.0], 6.0, 6, 0.0),
            ]),
            dt: 1.0,
            controls: controls(3.0, 2, 15),
            grid: GridSpec::Unstructured {
                target: 3412,
                boundary_samples: 120,
            },
            time_period: None,
            defaults: SolverDefaults {
                cpi: CpiDefaults {
                    alphas: 15,
                    max_iters: 30,
                    ..CpiDefaults::default()
                },
                mepi: MepiDefaults {
                    generations: 60,
                    ..MepiDefaults::default()
                },
            },
        },
        "ex5_doublegyre" => Scenario {
            version: SCENARIO_VERSION,
            name: name.into(),
            dynamics: dynamics("double_gyre"),
            domain: DomainBox::new(vec![0.0, 0.0, 0.0], vec![2.0, 1.0, 5.0]).expect("valid box"),
            goal: vec![1.5, 0.5],
            obstacles: ObstacleSet::default(),
            dt: 0.2,
            controls: controls(0.8, 2, 15),
            grid: GridSpec::Structured {
                counts: vec![15, 15, 25],
                periodic: vec![false, false, true],
            },
            time_period: Some(5.0),
            defaults: SolverDefaults {
                cpi: CpiDefaults {
                    alphas: 12,
                    max_iters: 30,
                    ..CpiDefaults::default()
                },
                mepi: MepiDefaults {
                    generations: 30,
                    // n_cp + 3 must fit in the population of 20.
                    n_cp: 15,
                    ..MepiDefaults::default()
                },
            },
        },
        other => {
            return config(format!(
                "unknown scenario `{other}`; builtins are {}",
                BUILTIN_SCENARIOS.join(", ")
            ))
        }
    };
    s.validate()?;
    Ok(s)
}
