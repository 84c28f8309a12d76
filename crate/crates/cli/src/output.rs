//! Run directory handling: manifest, CSV tables and solution files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use flowplan::scenarios::{GridSpec, Scenario};
use flowplan::state_space::SimplicialGrid;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, CliError, CliResult};

pub const SOLUTION_VERSION: u32 = 1;

/// Round-trip decimal form (17 significant digits); non-finite values as `inf`, `-inf`, `nan`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// A CSV document assembled in memory.
pub struct Csv {
    text: String,
    width: usize,
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut text = String::new();
        let cols: Vec<&str> = header.iter().map(|h| h.as_ref()).collect();
        text.push_str(&cols.join(","));
        text.push('\n');
        Csv {
            text,
            width: cols.len(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.width);
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    /// `incomplete` until the run finishes, then `complete`.
    pub status: String,
    pub scenario: String,
    pub scenario_config: Scenario,
    pub grid: GridSpec,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    pub converged: serde_json::Map<String, serde_json::Value>,
    pub outputs: Vec<String>,
}

/// Output directory of one run. The manifest is written on creation and rewritten on finish.
pub struct RunDir {
    dir: PathBuf,
    manifest: Manifest,
    started: Instant,
}

impl RunDir {
    pub fn create(
        dir: &Path,
        command: &str,
        scenario: &Scenario,
        grid: &GridSpec,
        config: serde_json::Value,
        seed: Option<u64>,
    ) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let run = RunDir {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                tool: env!("CARGO_PKG_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                args: std::env::args().skip(1).collect(),
                status: "incomplete".into(),
                scenario: scenario.name.clone(),
                scenario_config: scenario.clone(),
                grid: grid.clone(),
                config,
                seed,
                threads: rayon::current_num_threads(),
                wall_clock_seconds: 0.0,
                converged: serde_json::Map::new(),
                outputs: Vec::new(),
            },
            started: Instant::now(),
        };
        run.write_manifest()?;
        Ok(run)
    }

    fn write_manifest(&self) -> CliResult<()> {
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }

    /// Writes `rel` under the run directory and lists it in the manifest.
    pub fn write(&mut self, rel: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.manifest.outputs.push(rel.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).expect("output serializes");
        self.write(rel, &(text + "\n"))
    }

    pub fn set_converged(&mut self, key: &str, flag: bool) {
        self.manifest.converged.insert(key.into(), flag.into());
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.manifest.status = "complete".into();
        self.manifest.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        self.write_manifest()
    }
}

/// A policy with everything needed to replay it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub version: u32,
    pub method: String,
    pub label: String,
    pub scenario: Scenario,
    pub grid: GridSpec,
    /// `(avg_time, avg_energy)` in transformed units.
    pub objectives: [f64; 2],
    pub policy: Vec<Vec<f64>>,
    pub time_field: Vec<f64>,
    pub energy_field: Vec<f64>,
}

impl SolutionFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let sol: SolutionFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if sol.version != SOLUTION_VERSION {
            return config_err(format!("unsupported solution version {}", sol.version));
        }
        sol.scenario.validate()?;
        Ok(sol)
    }
}

/// Per-point table: coordinates, transformed and recovered values, controls.
pub fn field_csv(
    grid: &SimplicialGrid,
    time: &[f64],
    energy: &[f64],
    policy: &[f64],
    control_dim: usize,
) -> String {
    let d = grid.dim();
    let mut header = vec!["index".to_string()];
    header.extend((0..d).map(|k| format!("x{k}")));
    header.extend(["time_value", "energy_value", "time", "energy"].map(String::from));
    header.extend((0..control_dim).map(|k| format!("u{k}")));
    let mut csv = Csv::new(&header);
    let recovered_t = flowplan::sl_core::recover_value(grid, time, flowplan::transform::TransformKind::Harmonic);
    let recovered_e = flowplan::sl_core::recover_value(grid, energy, flowplan::transform::TransformKind::Harmonic);
    for i in 0..grid.len() {
        let mut row = vec![i.to_string()];
        row.extend(grid.point(i).iter().map(|&x| num(x)));
        row.extend([time[i], energy[i], recovered_t[i], recovered_e[i]].map(num));
        row.extend(policy[i * control_dim..(i + 1) * control_dim].iter().map(|&u| num(u)));
        csv.row(&row);
    }
    csv.into_string()
}
