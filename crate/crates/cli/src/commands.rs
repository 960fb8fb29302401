//! Subcommand implementations. Each returns the paths it wrote.

use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use lobexit::boundary::{tabulate, BoundaryTable, GridSpec as BoundaryGrid};
use lobexit::montecarlo::{estimate_utility, impact_cost_direct, PathSampler};
use lobexit::oracle::{self, Action};
use lobexit::strategy::{self, InitialAction, StepControl};
use lobexit::valuation::{self, hjb_check, SampleSpec, ValueFunction};
use lobexit::{BookShape, JumpSpec, LevyModel, Problem, Resilience, VgParams};

use crate::config::{parse_config, Numerics, RunConfig};
use crate::output::{json_real, real, write_csv, write_json};
use crate::{Cli, CliError, Command, HjbArgs, OracleArgs, SimulateArgs, StateArgs};

/// Runs the selected subcommand.
pub fn dispatch(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let cfg = match (&cli.config, &cli.command) {
        (Some(path), _) => Some(parse_config(path)?),
        (None, Command::ReproduceFigure2) => None,
        (None, _) => {
            return Err(CliError::Usage(
                "this subcommand needs a configuration file (--config <path>)".into(),
            ))
        }
    };
    let mut numerics = cfg.as_ref().map_or_else(default_numerics, |c| c.numerics);
    if let Some(seed) = cli.seed {
        numerics.seed = seed;
    }
    if let Some(threads) = cli.threads {
        numerics.threads = threads;
    }
    // the global pool can only be configured once per process
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(numerics.threads)
        .build_global();

    std::fs::create_dir_all(&cli.out).map_err(|source| CliError::Io {
        path: cli.out.clone(),
        source,
    })?;
    let out = cli.out.as_path();

    let Some(mut cfg) = cfg else {
        return reproduce_figure2(&numerics, out);
    };
    cfg.numerics = numerics;
    match &cli.command {
        Command::Boundary => boundary(&cfg, out),
        Command::Strategy(args) => strategy_cmd(&cfg, args, out),
        Command::Value(args) => value(&cfg, args, out),
        Command::HjbCheck(args) => hjb(&cfg, args, out),
        Command::Oracle(args) => oracle_cmd(&cfg, args, out),
        Command::Simulate(args) => simulate(&cfg, args, out),
        Command::ReproduceFigure2 => reproduce_figure2(&cfg.numerics, out),
    }
}

fn default_numerics() -> Numerics {
    let cfg = crate::config::parse_str(FIGURE2_BM, Path::new("."), &[])
        .expect("built-in configuration is valid");
    cfg.numerics
}

/// The Brownian example configuration, also shipped as an example file.
const FIGURE2_BM: &str = "\
levy.mu = -0.0018
levy.sigma2 = 4.011e-4
book.n = 1000
book.xbar = -1
resilience.lambda = 5
agent.A = 1e-2
agent.b = 1
agent.y0 = 1e4
agent.z0 = 0
";

fn metadata(cfg: &RunConfig) -> Value {
    let p = &cfg.problem;
    let settings: Map<String, Value> = cfg
        .settings
        .iter()
        .map(|(k, v)| (k.clone(), Value::String(v.clone())))
        .collect();
    json!({
        "config": settings,
        "A": p.a(),
        "zbar": json_real(p.zbar()),
        "ybar": json_real(p.ybar()),
        "tolerances": numerics_json(&cfg.numerics),
    })
}

fn numerics_json(n: &Numerics) -> Value {
    json!({
        "y_max": n.y_max,
        "nodes": n.nodes,
        "rtol": n.rtol,
        "dt_max": json_real(n.dt_max),
        "horizon": n.horizon,
        "trunc_rel": n.trunc_rel,
        "hjb_tol": n.hjb_tol,
        "seed": n.seed,
    })
}

fn step_control(n: &Numerics, args: &StateArgs) -> Result<StepControl, CliError> {
    let ctl = StepControl {
        rtol: n.rtol,
        dt_max: args.dt_max.unwrap_or(n.dt_max),
        horizon: args.horizon.unwrap_or(n.horizon),
        trunc_rel: n.trunc_rel,
    };
    if !(ctl.dt_max > 0.0) {
        return Err(CliError::Invalid(format!(
            "--dt-max = {} must be positive",
            ctl.dt_max
        )));
    }
    if !(ctl.horizon > 0.0) {
        return Err(CliError::Invalid(format!(
            "--horizon = {} must be positive",
            ctl.horizon
        )));
    }
    Ok(ctl)
}

/// Initial state from the flags or the configuration, checked for solvency.
fn initial_state(cfg: &RunConfig, args: &StateArgs) -> Result<(f64, f64), CliError> {
    let y = args.y0.unwrap_or(cfg.agent.y0);
    let z = args.z0.unwrap_or(cfg.agent.z0);
    let p = &cfg.problem;
    if !(y >= 0.0 && y.is_finite()) {
        return Err(CliError::Invalid(format!("y0 = {y} must be non-negative")));
    }
    if !p.is_solvent(y, z) {
        return Err(CliError::Invalid(format!(
            "(y0, z0) = ({y}, {z}) is outside the solvency region (zbar = {}, ybar_A = {})",
            p.zbar(),
            p.ybar()
        )));
    }
    Ok((y, z))
}

fn table_to(p: &Problem, n: &Numerics, y_max: f64) -> Result<BoundaryTable, CliError> {
    let grid = BoundaryGrid {
        y_max: y_max.max(1e-9),
        nodes: n.nodes,
    };
    Ok(tabulate(p, &grid)?)
}

fn boundary_rows(table: &BoundaryTable) -> impl Iterator<Item = Vec<String>> + '_ {
    table
        .y
        .iter()
        .zip(table.upper.iter().zip(&table.lower))
        .map(|(&y, (&up, &lo))| vec![real(y), real(up), real(lo), real(up - y)])
}

const BOUNDARY_HEADER: [&str; 4] = ["y", "beta_star", "beta_lower", "gamma_beta"];

fn boundary(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let n = &cfg.numerics;
    let table = table_to(&cfg.problem, n, n.y_max)?;
    let csv = write_csv(out, "boundary.csv", &BOUNDARY_HEADER, boundary_rows(&table))?;
    let mut doc = metadata(cfg);
    doc["boundary"] = json!({
        "nodes": table.y.len(),
        "y_max": table.y_max(),
        "beta_zero_plus": table.lower[0],
        "vertices": table.vertex_count(),
    });
    let js = write_json(out, "boundary.json", &doc)?;
    Ok(vec![csv, js])
}

fn strategy_cmd(cfg: &RunConfig, args: &StateArgs, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let p = &cfg.problem;
    let (y, z) = initial_state(cfg, args)?;
    let ctl = step_control(&cfg.numerics, args)?;
    let table = table_to(p, &cfg.numerics, cfg.numerics.y_max.max(y))?;
    let path = strategy::simulate(p, &table, y, z, &ctl)?;
    let rows = (0..path.times.len()).map(|k| {
        vec![
            real(path.times[k]),
            real(path.y_vals[k]),
            real(path.z_vals[k]),
            path.phases[k].as_str().to_string(),
        ]
    });
    let csv = write_csv(out, "strategy.csv", &["t", "Y", "Z", "phase"], rows)?;
    let (risk, impact) = path.running_costs(p);
    let performance = risk + impact + p.a() * p.shape.psi_antiderivative(path.z_at_completion());
    let mut doc = metadata(cfg);
    doc["strategy"] = json!({
        "y0": y,
        "z0": z,
        "initial_block": path.initial_block,
        "wait_time": path.wait_time,
        "t_bar": json_real(path.t_bar),
        "t_end": json_real(path.t_end),
        "truncated": path.truncated(),
        "tail_bound": json_real(path.tail_bound),
        "waiting_intervals": path.waiting_intervals.len(),
        "total_impact_cost": json_real(impact_cost_direct(&path, p)),
        "risk_cost": json_real(risk),
        "performance": json_real(performance),
    });
    let js = write_json(out, "strategy.json", &doc)?;
    Ok(vec![csv, js])
}

fn value(cfg: &RunConfig, args: &StateArgs, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let p = &cfg.problem;
    let n = &cfg.numerics;
    let (y, z) = initial_state(cfg, args)?;
    let ctl = step_control(n, args)?;
    let table = table_to(p, n, n.y_max.max(y))?;
    let vf = ValueFunction::new(p, &table)?;
    let rep = valuation::report(&vf, y, z, cfg.agent.b, cfg.agent.c, &ctl)?;
    let spec = SampleSpec {
        n_points: n.hjb_points,
        seed: n.seed,
        ..SampleSpec::default()
    };
    let hjb = hjb_check(&vf, &spec, n.hjb_tol)?;
    let mut doc = metadata(cfg);
    doc["value"] = json!({
        "y0": y,
        "z0": z,
        "v_closed": json_real(rep.v_closed),
        "j_path": json_real(rep.j_path),
        "initial_block": rep.initial_block,
        "wait_time": rep.wait_time,
        "t_bar": json_real(rep.t_bar),
        "residuals": {
            "sell_region_max": json_real(hjb.sell_region_max()),
            "wait_region_max": json_real(hjb.wait_region_max()),
            "n_points": hjb.n_points,
            "violations": hjb.violations.len(),
        },
        "utility": {
            "lemma_form": json_real(rep.utility.lemma_form),
            "theorem_form": json_real(rep.utility.theorem_form),
        },
    });
    Ok(vec![write_json(out, "value.json", &doc)?])
}

fn hjb(cfg: &RunConfig, args: &HjbArgs, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let p = &cfg.problem;
    let n = &cfg.numerics;
    let points = args.points.unwrap_or(n.hjb_points);
    let tol = args.tol.unwrap_or(n.hjb_tol);
    if points == 0 || !(tol > 0.0) {
        return Err(CliError::Invalid(
            "--points must be positive and --tol > 0".into(),
        ));
    }
    let table = table_to(p, n, n.y_max)?;
    let vf = ValueFunction::new(p, &table)?;
    let spec = SampleSpec {
        n_points: points,
        seed: n.seed,
        ..SampleSpec::default()
    };
    let rep = hjb_check(&vf, &spec, tol)?;
    let mut doc = metadata(cfg);
    doc["hjb"] = json!({
        "tol": tol,
        "seed": n.seed,
        "n_points": rep.n_points,
        "n_sell": rep.n_sell,
        "n_wait": rep.n_wait,
        "n_graph": rep.n_graph,
        "max_h1": json_real(rep.max_h1),
        "max_h2": json_real(rep.max_h2),
        "max_h3": json_real(rep.max_h3),
        "max_h4": json_real(rep.max_h4),
        "residuals": {
            "sell_region_max": json_real(rep.sell_region_max()),
            "wait_region_max": json_real(rep.wait_region_max()),
        },
        "violations": rep.violations.iter().map(|v| json!({
            "y": v.y, "z": v.z, "worst": json_real(v.worst()),
        })).collect::<Vec<_>>(),
    });
    let js = write_json(out, "hjb.json", &doc)?;
    if !rep.violations.is_empty() {
        return Err(CliError::Check(format!(
            "{} of {} points exceed the residual tolerance {tol:e} (details in {})",
            rep.violations.len(),
            rep.n_points,
            js.display()
        )));
    }
    Ok(vec![js])
}

fn action_name(a: Action) -> &'static str {
    match a {
        Action::Done => "done",
        Action::Sell => "sell",
        Action::Wait => "wait",
    }
}

fn oracle_cmd(cfg: &RunConfig, args: &OracleArgs, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let p = &cfg.problem;
    let n = &cfg.numerics;
    let mut spec = oracle::GridSpec::new(
        args.ymax.unwrap_or(n.oracle_ymax),
        args.ny.unwrap_or(n.oracle_ny),
        args.nz.unwrap_or(n.oracle_nz),
    );
    spec.dt = args.dt.or(n.oracle_dt);
    if spec.n_y == 0 || spec.n_z == 0 || !(spec.y_max > 0.0 && spec.y_max.is_finite()) {
        return Err(CliError::Invalid(
            "--ny, --nz and --ymax must be positive".into(),
        ));
    }
    if let Some(dt) = spec.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CliError::Invalid(format!("--dt = {dt} must be positive")));
        }
    }
    let depth = spec.n_z as f64 * spec.quantum();
    if depth > -p.zbar() {
        return Err(CliError::Invalid(format!(
            "the lattice reaches z = {} below the book depth zbar = {}; lower --nz or --ymax",
            -depth,
            p.zbar()
        )));
    }
    let sol = oracle::solve_dp(p, &spec)?;
    let table = table_to(p, n, spec.y_max)?;
    let vf = ValueFunction::new(p, &table)?;
    let cmp = oracle::compare(&sol, &vf)?;

    let mut rows = Vec::with_capacity((spec.n_y + 1) * (spec.n_z + 1));
    for i in 0..=spec.n_y {
        for j in 0..=spec.n_z {
            let (y, z) = (sol.y(i), sol.z(j));
            let v_dp = sol.value(i, j);
            let v = vf.value(y, z)?;
            rows.push(vec![
                real(y),
                real(z),
                real(v_dp),
                action_name(sol.action(i, j)).to_string(),
                real(v),
                real(v_dp - v),
            ]);
        }
    }
    let csv = write_csv(
        out,
        "oracle_grid.csv",
        &["y", "z", "v_dp", "action", "v_closed", "error"],
        rows,
    )?;
    let mut doc = metadata(cfg);
    doc["oracle"] = json!({
        "n_y": spec.n_y,
        "n_z": spec.n_z,
        "y_max": spec.y_max,
        "dt": spec.dt.map_or(Value::Null, json_real),
        "q": cmp.q,
        "sweeps": sol.sweeps,
        "sweep_residual": json_real(sol.residual),
        "max_abs_error": json_real(cmp.max_abs_error),
        "at": [cmp.at.0, cmp.at.1],
        "step_cost_scale": json_real(cmp.step_cost_scale),
        "error_in_step_costs": json_real(cmp.max_abs_error / cmp.step_cost_scale),
        "frontier_cells": json_real(cmp.frontier_cells),
    });
    let js = write_json(out, "oracle.json", &doc)?;
    Ok(vec![csv, js])
}

fn simulate(cfg: &RunConfig, args: &SimulateArgs, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let p = &cfg.problem;
    let n = &cfg.numerics;
    let (y, z) = initial_state(cfg, &args.state)?;
    let ctl = step_control(n, &args.state)?;
    let paths = args.paths.unwrap_or(n.mc_paths);
    let eps = args.eps_trunc.unwrap_or(n.mc_eps);
    let dt = args.dt.unwrap_or(n.mc_dt);
    if paths < 2 {
        return Err(CliError::Invalid(format!(
            "--paths = {paths}: at least two paths are needed"
        )));
    }
    if !(eps > 0.0 && dt > 0.0) {
        return Err(CliError::Invalid(
            "--eps-trunc and --dt must be positive".into(),
        ));
    }
    let (b, c) = (cfg.agent.b, cfg.agent.c);
    let table = table_to(p, n, n.y_max.max(y))?;
    let path = strategy::simulate(p, &table, y, z, &ctl)?;
    let (risk, impact) = path.running_costs(p);
    let j = risk + impact + p.a() * p.shape.psi_antiderivative(path.z_at_completion());
    // predicted log(−E[U]) under the two printed exponents
    let forms = valuation::utility(p, b, c, y, z, j)?;
    let lemma = (-forms.lemma_form).ln();
    let theorem = (-forms.theorem_form).ln();

    let times = PathSampler::uniform_grid(path.t_end, dt);
    let sampler = PathSampler::new(p.levy.clone(), times, eps, n.seed)?;
    let est = estimate_utility(&path, p, &sampler, c, b, paths)?;
    let (m, se) = est.log_neg_mean();
    let z_lemma = (m - lemma) / se;
    let z_theorem = (m - theorem) / se;
    let mut doc = metadata(cfg);
    doc["simulate"] = json!({
        "y0": y,
        "z0": z,
        "paths": paths,
        "seed": n.seed,
        "eps_trunc": eps,
        "dt": dt,
        "mc_mean": json_real(est.mean),
        "mc_stderr": json_real(est.stderr),
        "mc_log_neg_mean": json_real(m),
        "mc_log_stderr": json_real(se),
        "clamped_paths": est.clamped,
        "closed_form_lemma": json_real(lemma),
        "closed_form_theorem": json_real(theorem),
        "z_scores": {
            "lemma": json_real(z_lemma),
            "theorem": json_real(z_theorem),
        },
    });
    Ok(vec![write_json(out, "simulate.json", &doc)?])
}

/// The two example models: Brownian motion and the linear approximation of
/// the exponential variance-gamma model with matching variance.
fn figure2_models() -> Result<[(&'static str, LevyModel); 2], CliError> {
    let mu = -0.0018;
    let vg = VgParams::new(0.02, 0.6, -0.002)?;
    Ok([
        ("bm", LevyModel::brownian(mu, 4.011e-4)?),
        ("lvg", LevyModel::new(mu, 0.0, JumpSpec::VarianceGamma(vg))?),
    ])
}

fn reproduce_figure2(n: &Numerics, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let (y0, n_book) = (1e4, 1000.0);
    let mut written = Vec::new();
    let mut summary = Vec::new();
    for (label, levy) in figure2_models()? {
        for (a_label, a) in [("1e-3", 1e-3), ("1e-2", 1e-2)] {
            let p = Problem::new(
                levy.clone(),
                BookShape::block(n_book, -1.0)?,
                Resilience::exponential(5.0)?,
                a,
            )?;
            let table = table_to(&p, n, y0)?;
            let name = format!("figure2_{label}_A{a_label}.csv");
            written.push(write_csv(
                out,
                &name,
                &BOUNDARY_HEADER,
                boundary_rows(&table),
            )?);
            let block = match strategy::initial_action(&p, &table, y0, 0.0)? {
                InitialAction::Block(b) => b,
                InitialAction::Wait(_) => 0.0,
            };
            summary.push(json!({
                "model": label,
                "A": a,
                "file": name,
                "initial_block": block,
                "post_block_bid": 1.0 + p.shape.psi(-block),
            }));
        }
    }
    let doc = json!({
        "n": n_book,
        "lambda": 5.0,
        "mu": -0.0018,
        "y0": y0,
        "z0": 0.0,
        "nodes": n.nodes,
        "boundaries": summary,
    });
    written.push(write_json(out, "figure2.json", &doc)?);
    Ok(written)
}
