use std::path::Path;

use flowplan::cpi::{log_spaced_alphas, run_cpi};
use flowplan::mepi::{run_mepi, EXTRA_CONTROLS_PER_AXIS};
use flowplan::rollout::{default_goal_radius, default_t_max, simulate, RolloutOptions};
use flowplan::scenarios::{resolve_scenario, GridSpec, Scenario};
use flowplan::sl_core::{recover_value, CostKind, PolicyField, SlProblem, SolveOptions};
use flowplan::state_space::SimplicialGrid;
use flowplan::transform::{harmonic_inverse, TransformKind, TransformedValue};
use serde_json::json;

use crate::error::{config_err, CliError, CliResult};
use crate::output::{field_csv, num, Csv, RunDir, SolutionFile, SOLUTION_VERSION};
use crate::{CompareArgs, CpiArgs, MepiArgs, ProblemArgs, RolloutArgs};

/// Same grid family at a new resolution.
fn resize_grid(spec: &GridSpec, n: usize) -> GridSpec {
    match spec {
        GridSpec::Structured { counts, periodic } => GridSpec::Structured {
            counts: vec![n; counts.len()],
            periodic: periodic.clone(),
        },
        GridSpec::Unstructured {
            boundary_samples, ..
        } => GridSpec::Unstructured {
            target: n,
            boundary_samples: *boundary_samples,
        },
    }
}

fn load_problem(args: &ProblemArgs) -> CliResult<Scenario> {
    let mut scenario = resolve_scenario(&args.scenario)?;
    if let Some(dt) = args.dt {
        scenario.dt = dt;
    }
    Ok(scenario)
}

fn dump_grid(grid: &SimplicialGrid, path: Option<&Path>) -> CliResult<()> {
    if let Some(path) = path {
        let text = serde_json::to_string(&grid.to_json()).expect("grid serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

fn to_value<T: serde::Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("config serializes")
}

#[allow(clippy::too_many_arguments)]
fn write_solution(
    run: &mut RunDir,
    label: &str,
    method: &str,
    scenario: &Scenario,
    grid_spec: &GridSpec,
    grid: &SimplicialGrid,
    objectives: [f64; 2],
    policy: &PolicyField,
    time: &[f64],
    energy: &[f64],
) -> CliResult<()> {
    let m = policy.dim();
    run.write(
        &format!("fields/{label}.csv"),
        &field_csv(grid, time, energy, policy.data(), m),
    )?;
    let file = SolutionFile {
        version: SOLUTION_VERSION,
        method: method.into(),
        label: label.into(),
        scenario: scenario.clone(),
        grid: grid_spec.clone(),
        objectives,
        policy: policy.data().chunks(m).map(<[f64]>::to_vec).collect(),
        time_field: time.to_vec(),
        energy_field: energy.to_vec(),
    };
    run.write_json(&format!("solutions/{label}.json"), &file)
}

pub fn solve_cpi(a: &CpiArgs) -> CliResult<bool> {
    let mut scenario = load_problem(&a.problem)?;
    if let Some(n) = a.controls_per_axis {
        if n == 0 {
            return config_err("--controls-per-axis must be at least 1");
        }
        scenario.controls = scenario.controls.with_counts(n);
    }
    scenario.validate()?;
    let grid_spec = a
        .problem
        .grid
        .map_or_else(|| scenario.grid.clone(), |n| resize_grid(&scenario.grid, n));
    let mut cfg = scenario.cpi_config()?;
    if a.alphas.is_some() || a.alpha_lo.is_some() || a.alpha_hi.is_some() {
        let d = &scenario.defaults.cpi;
        cfg.alphas = log_spaced_alphas(
            a.alphas.unwrap_or(d.alphas),
            a.alpha_lo.unwrap_or(d.alpha_lo),
            a.alpha_hi.unwrap_or(d.alpha_hi),
        )?;
    }
    if let Some(tol) = a.problem.tol {
        cfg.tol = tol;
    }
    if let Some(m) = a.max_iters {
        cfg.max_iters = m;
    }
    cfg.validate()?;

    let mut run = RunDir::create(&a.problem.out, "solve-cpi", &scenario, &grid_spec, to_value(&cfg), None)?;
    let grid = scenario.build_grid_from(&grid_spec)?;
    dump_grid(&grid, a.problem.dump_grid.as_deref())?;
    let model = scenario.model()?;
    let problem = SlProblem::new(&grid, &model, scenario.controls.enumerate()?, scenario.dt)?;
    let sol = run_cpi(&problem, &cfg)?;

    let mut table = Csv::new(&["alpha", "avg_time", "avg_energy", "converged", "iterations"]);
    for r in &sol.results {
        table.row(&[
            num(r.alpha),
            num(r.avg_time),
            num(r.avg_energy),
            r.converged.to_string(),
            r.last_change.to_string(),
        ]);
    }
    run.write("cpi_objectives.csv", &table.into_string())?;

    let mut history = Csv::new(&["iteration", "alpha", "objective"]);
    for (k, row) in sol.history.iter().enumerate() {
        for (alpha, v) in cfg.alphas.iter().zip(row) {
            history.row(&[k.to_string(), num(*alpha), num(*v)]);
        }
    }
    run.write("cpi_history.csv", &history.into_string())?;

    for (i, r) in sol.results.iter().enumerate() {
        let policy = PolicyField::from_indices(problem.controls(), &r.policy);
        write_solution(
            &mut run,
            &format!("cpi_alpha_{i:02}"),
            "cpi",
            &scenario,
            &grid_spec,
            &grid,
            [r.avg_time, r.avg_energy],
            &policy,
            &r.time_field,
            &r.energy_field,
        )?;
    }
    let ok = sol.converged && !sol.evaluation_budget_hit;
    run.set_converged("policies", sol.converged);
    run.set_converged("evaluations", !sol.evaluation_budget_hit);
    run.finish()?;
    Ok(ok)
}

pub fn solve_mepi(a: &MepiArgs) -> CliResult<bool> {
    let scenario = load_problem(&a.problem)?;
    scenario.validate()?;
    let base = scenario
        .defaults
        .mepi
        .grid
        .clone()
        .unwrap_or_else(|| scenario.grid.clone());
    let grid_spec = a.problem.grid.map_or_else(|| base.clone(), |n| resize_grid(&base, n));
    let mut cfg = scenario.mepi_config();
    cfg.population = a.pop.unwrap_or(cfg.population);
    cfg.generations = a.gens.unwrap_or(cfg.generations);
    cfg.n_cp = a.ncp.unwrap_or(cfg.n_cp);
    cfg.n_par = a.npar.unwrap_or(cfg.n_par);
    cfg.sigma = a.sigma.unwrap_or(cfg.sigma);
    cfg.tol = a.problem.tol.unwrap_or(cfg.tol);
    cfg.seed = a.seed;
    cfg.validate()?;

    let mut run = RunDir::create(
        &a.problem.out,
        "solve-mepi",
        &scenario,
        &grid_spec,
        to_value(&cfg),
        Some(cfg.seed),
    )?;
    let grid = scenario.build_grid_from(&grid_spec)?;
    dump_grid(&grid, a.problem.dump_grid.as_deref())?;
    let model = scenario.model()?;
    let extras = scenario.controls.with_counts(EXTRA_CONTROLS_PER_AXIS).enumerate()?;
    let problem = SlProblem::new(&grid, &model, extras, scenario.dt)?;
    let res = run_mepi(&problem, &scenario.controls, &cfg)?;

    let mut progress = Csv::new(&[
        "generation",
        "best_time",
        "best_energy",
        "median_time",
        "median_energy",
        "front_size",
    ]);
    for g in &res.history {
        progress.row(&[
            g.generation.to_string(),
            num(g.best_time),
            num(g.best_energy),
            num(g.median_time),
            num(g.median_energy),
            g.front_size.to_string(),
        ]);
    }
    run.write("mepi_progress.csv", &progress.into_string())?;

    let header = ["index", "avg_time", "avg_energy", "rank", "crowding", "converged"];
    let row = |i: usize| {
        let ind = &res.population[i];
        vec![
            i.to_string(),
            num(ind.objectives[0]),
            num(ind.objectives[1]),
            ind.rank.to_string(),
            num(ind.crowding),
            ind.converged.to_string(),
        ]
    };
    let mut population = Csv::new(&header);
    (0..res.population.len()).for_each(|i| population.row(&row(i)));
    run.write("mepi_population.csv", &population.into_string())?;
    let mut archive = Csv::new(&header);
    res.archive.iter().for_each(|&i| archive.row(&row(i)));
    run.write("mepi_archive.csv", &archive.into_string())?;

    for &i in &res.archive {
        let ind = &res.population[i];
        write_solution(
            &mut run,
            &format!("mepi_{i:02}"),
            "mepi",
            &scenario,
            &grid_spec,
            &grid,
            ind.objectives,
            &ind.policy,
            &ind.time_field,
            &ind.energy_field,
        )?;
    }
    let ok = res.archive.iter().all(|&i| res.population[i].converged);
    run.set_converged("evaluations", ok);
    run.finish()?;
    Ok(ok)
}

pub fn compare_transforms(a: &CompareArgs) -> CliResult<bool> {
    let scenario = resolve_scenario(&a.scenario)?;
    let grid_spec = a
        .grid
        .map_or_else(|| scenario.grid.clone(), |n| resize_grid(&scenario.grid, n));
    let opts = SolveOptions {
        tol: a.tol.unwrap_or(SolveOptions::default().tol),
        ..SolveOptions::default()
    };
    opts.validate()?;
    let config = json!({ "tol": opts.tol, "max_sweeps": opts.max_sweeps, "cost": "time" });
    let mut run = RunDir::create(&a.out, "compare-transforms", &scenario, &grid_spec, config, None)?;
    let grid = scenario.build_grid_from(&grid_spec)?;
    dump_grid(&grid, a.dump_grid.as_deref())?;
    let model = scenario.model()?;
    let controls = scenario.controls.enumerate()?;

    let solve = |kind: TransformKind, opts: &SolveOptions| -> CliResult<_> {
        let p = SlProblem::new(&grid, &model, controls.clone(), scenario.dt)?.with_transform(kind);
        Ok(p.value_iteration(&CostKind::Time, opts)?)
    };
    let harmonic = solve(TransformKind::Harmonic, &opts)?;
    // Sweep at least as long as the harmonic run so that an early stop cannot pass for
    // saturation: Kruzkov changes become tiny long before the front has crossed the domain.
    let kruzkov = solve(
        TransformKind::Kruzkov,
        &SolveOptions {
            min_sweeps: harmonic.iterations,
            ..opts
        },
    )?;
    let h_time = recover_value(&grid, &harmonic.field, TransformKind::Harmonic);
    let k_time = recover_value(&grid, &kruzkov.field, TransformKind::Kruzkov);

    let d = grid.dim();
    let mut header = vec!["index".to_string()];
    header.extend((0..d).map(|k| format!("x{k}")));
    header.extend(["harmonic_value", "harmonic_time", "kruzkov_value", "kruzkov_time"].map(String::from));
    let mut fields = Csv::new(&header);
    for i in 0..grid.len() {
        let mut row = vec![i.to_string()];
        row.extend(grid.point(i).iter().map(|&x| num(x)));
        row.extend([harmonic.field[i], h_time[i], kruzkov.field[i], k_time[i]].map(num));
        fields.row(&row);
    }
    run.write("transform_fields.csv", &fields.into_string())?;

    let mut summary = Csv::new(&["transform", "sweeps", "converged", "saturated", "max_finite_time"]);
    for (name, sol, times) in [("harmonic", &harmonic, &h_time), ("kruzkov", &kruzkov, &k_time)] {
        let free = (0..grid.len()).filter(|&i| !grid.is_obstacle(i));
        let saturated = free.clone().filter(|&i| !times[i].is_finite()).count();
        let max_finite = free
            .map(|i| times[i])
            .filter(|t| t.is_finite())
            .fold(0.0, f64::max);
        summary.row(&[
            name.to_string(),
            sol.iterations.to_string(),
            sol.converged.to_string(),
            saturated.to_string(),
            num(max_finite),
        ]);
    }
    run.write("transform_summary.csv", &summary.into_string())?;
    run.set_converged("harmonic", harmonic.converged);
    run.set_converged("kruzkov", kruzkov.converged);
    run.finish()?;
    Ok(harmonic.converged && kruzkov.converged)
}

fn parse_point(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Config(format!("bad coordinate `{s}` in --start")))
        })
        .collect()
}

pub fn rollout(a: &RolloutArgs) -> CliResult<bool> {
    let sol = SolutionFile::load(&a.solution)?;
    let named = resolve_scenario(&a.scenario)?;
    if named.name != sol.scenario.name {
        return config_err(format!(
            "solution belongs to scenario `{}`, not `{}`",
            sol.scenario.name, named.name
        ));
    }
    let scenario = &sol.scenario;
    let model = scenario.model()?;
    let grid = scenario.build_grid_from(&sol.grid)?;
    let m = model.control_dim();
    if sol.policy.len() != grid.len() || sol.policy.iter().any(|u| u.len() != m) {
        return config_err("solution policy does not match its grid");
    }
    if sol.time_field.len() != grid.len() {
        return config_err("solution time field does not match its grid");
    }
    let policy = PolicyField::new(m, sol.policy.concat())?;
    let start = parse_point(&a.start)?;
    if start.len() != model.spatial_dim() {
        return config_err(format!("--start needs {} coordinates", model.spatial_dim()));
    }

    let mut state = start.clone();
    if model.time_period().is_some() {
        state.push(0.0);
    }
    let recovered = if grid.is_forbidden_state(&state) {
        f64::INFINITY
    } else {
        TransformedValue::new(grid.interpolate(&sol.time_field, &state))
            .map_or(f64::INFINITY, harmonic_inverse)
    };
    let opts = RolloutOptions {
        dt: scenario.dt,
        t_max: a.t_max.unwrap_or_else(|| default_t_max(recovered, scenario.dt)),
        goal_radius: a.goal_radius.unwrap_or_else(|| default_goal_radius(&grid)),
    };
    let config = json!({
        "solution": a.solution.display().to_string(),
        "label": sol.label,
        "start": start,
        "dt": opts.dt,
        "t_max": opts.t_max,
        "goal_radius": opts.goal_radius,
    });
    let mut run = RunDir::create(&a.out, "rollout", scenario, &sol.grid, config, None)?;
    let tr = simulate(&policy, &grid, &model, &scenario.controls, &start, &opts)?;

    let mut header = vec!["t".to_string()];
    header.extend((0..model.state_dim()).map(|k| format!("x{k}")));
    header.extend((0..m).map(|k| format!("u{k}")));
    let mut csv = Csv::new(&header);
    for s in &tr.samples {
        let mut row = vec![num(s.t)];
        row.extend(s.state.iter().chain(&s.control).map(|&v| num(v)));
        csv.row(&row);
    }
    run.write("trajectory.csv", &csv.into_string())?;
    run.write_json(
        "rollout.json",
        &json!({
            "total_time": tr.total_time,
            "total_energy": tr.total_energy,
            "reached_goal": tr.reached_goal,
            "hit_obstacle": tr.hit_obstacle,
            "samples": tr.samples.len(),
        }),
    )?;
    run.finish()?;
    Ok(true)
}
