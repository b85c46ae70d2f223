//! Subcommand drivers.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use prandtl_core::experiments::{
    approximation_rates, commutator_law, difference_law, forcing_corpus, interior_corpus, normal_oscillation_corpus,
    smoothing_law, tangential_corpus,
};
use prandtl_core::linearized::{energy_probe, solve_uv_direct, solve_w, uv_residual, Background, SolveOptions};
use prandtl_core::mollifier::Commutator;
use prandtl_core::nash_moser::{
    self, default_perturbation, stability_experiment, zeroth_approximation, InnerSolver, RunResult, StopReason,
};
use prandtl_core::norms::{lambda_diagnostic, NormReport};
use prandtl_core::oracle::solve_nonlinear;
use prandtl_core::shear_flow::ShearFlow;
use prandtl_core::{Field, Plane};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{cell, resolve_dir, RunDir, Status};
use crate::{Cli, CliError, Command, SweepParam};

/// What a driver hands back: a JSON summary and, when the run stopped at a
/// validity gate, the reason.
struct Outcome {
    summary: Value,
    gate: Option<String>,
}

impl Outcome {
    fn ok(summary: Value) -> Self {
        Outcome { summary, gate: None }
    }
}

pub fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<Value, CliError> {
    let base = cli.global.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    match &cli.command {
        Command::ShearFlow => in_run(&base, "shear-flow", cfg, json!({}), |run| shear_flow(cfg, run)),
        Command::Norms { field } => {
            in_run(&base, "norms", cfg, json!({ "field": field }), |run| norms(cfg, field.as_deref(), run))
        }
        Command::MollifierCheck { corpus, thetas } => {
            if *corpus == 0 || thetas.len() < 2 || thetas.iter().any(|t| !(*t > 0.0)) {
                return Err(CliError::Usage("mollifier-check needs --corpus >= 1 and at least two positive thetas".into()));
            }
            let args = json!({ "corpus": corpus, "thetas": thetas });
            in_run(&base, "mollifier-check", cfg, args, |run| mollifier_check(cfg, *corpus, thetas, run))
        }
        Command::RunLinearized => in_run(&base, "run-linearized", cfg, json!({}), |run| run_linearized(cfg, run)),
        Command::RunNashMoser => in_run(&base, "run-nash-moser", cfg, json!({}), |run| run_nash_moser(cfg, run)),
        Command::RunOracle => in_run(&base, "run-oracle", cfg, json!({}), |run| run_oracle(cfg, run)),
        Command::Compare { a, b } => in_run(&base, "compare", cfg, json!({ "a": a, "b": b }), |run| compare(cfg, a, b, run)),
        Command::Stability { epsilon_b } => {
            let eps_b = epsilon_b.unwrap_or(cfg.perturbation.epsilon / 2.0);
            if !(eps_b >= 0.0 && eps_b.is_finite()) {
                return Err(CliError::Usage(format!("--epsilon-b = {eps_b}: must be finite and >= 0")));
            }
            in_run(&base, "stability", cfg, json!({ "epsilon_b": eps_b }), |run| stability(cfg, eps_b, run))
        }
        Command::Sweep { param, values, jobs } => sweep(cfg, &base, *param, values, (*jobs).max(1)),
    }
}

/// Create the run directory and manifest, run `body`, record the outcome.
fn in_run(
    base: &Path,
    name: &str,
    cfg: &RunConfig,
    args: Value,
    body: impl FnOnce(&mut RunDir) -> Result<Outcome, CliError>,
) -> Result<Value, CliError> {
    let mut run = RunDir::create(resolve_dir(base, name), name, cfg, args)?;
    log::info!("{name}: writing to {}", run.dir().display());
    match body(&mut run) {
        Ok(Outcome { summary, gate: None }) => {
            run.finish(Status::Ok, None, summary.clone())?;
            Ok(with_dir(summary, run.dir()))
        }
        Ok(Outcome { summary, gate: Some(reason) }) => {
            run.finish(Status::Gate, Some(reason.clone()), summary)?;
            Err(CliError::Gate(reason))
        }
        Err(e) => {
            let status = if e.exit_code() == 2 { Status::Gate } else { Status::Failed };
            run.finish(status, Some(e.to_string()), Value::Null)?;
            Err(e)
        }
    }
}

fn with_dir(mut summary: Value, dir: &Path) -> Value {
    if let Value::Object(map) = &mut summary {
        map.insert("output_dir".into(), json!(dir.display().to_string()));
    }
    summary
}

fn shear(cfg: &RunConfig) -> Result<Arc<ShearFlow>, CliError> {
    Ok(Arc::new(ShearFlow::solve_heat_kernel(cfg.profile(), &cfg.grid_spec()?)?))
}

fn initial_perturbation(cfg: &RunConfig) -> Result<Plane, CliError> {
    Ok(default_perturbation(&cfg.grid_spec()?, cfg.perturbation.epsilon))
}

fn write_field(run: &mut RunDir, name: &str, f: &Field) -> Result<(), CliError> {
    let path = run.record(name);
    run.record(&format!("{name}.json"));
    f.write_csv(&path)?;
    Ok(())
}

fn shear_flow(cfg: &RunConfig, run: &mut RunDir) -> Result<Outcome, CliError> {
    let sh = shear(cfg)?;
    write_field(run, "u_s.csv", &sh.u_s)?;
    write_field(run, "d_y_u_s.csv", &sh.d_y_u_s)?;
    write_field(run, "alpha.csv", &sh.alpha)?;
    let diag = sh.diagnostics()?;
    run.write_json("diagnostics.json", &diag)?;
    Ok(Outcome::ok(serde_json::to_value(diag).map_err(prandtl_core::Error::from)?))
}

fn norms(cfg: &RunConfig, field: Option<&Path>, run: &mut RunDir) -> Result<Outcome, CliError> {
    let mode = cfg.solver.tangential_index_mode;
    let (f, background) = match field {
        Some(path) => (Field::read_csv(path)?, None),
        None => {
            let sh = shear(cfg)?;
            let z = zeroth_approximation(&initial_perturbation(cfg)?, &sh, cfg.schedule.k0 as usize)?;
            let bg = Background::assemble(&sh.u_s.add(&z.p0), &sh)?;
            (z.p0, Some(bg))
        }
    };
    let mut reports = Vec::new();
    for (k, ell, lambda) in cfg.tracked() {
        let mut r = NormReport::compute(&f, k, ell, lambda, mode)?;
        if let Some(bg) = &background {
            r.lambda_k_diag = Some(lambda_diagnostic(bg, k, ell)?);
        }
        reports.push(r);
    }
    let value = json!({ "source": field.map_or("zeroth_approximation".into(), |p| p.display().to_string()), "reports": reports });
    run.write_json("norms.json", &value)?;
    Ok(Outcome::ok(value))
}

fn mollifier_check(cfg: &RunConfig, n: usize, thetas: &[f64], run: &mut RunDir) -> Result<Outcome, CliError> {
    let spec = cfg.grid_spec()?;
    let seed = cfg.output.seed;
    let sh = shear(cfg)?;
    let tangential = tangential_corpus(&spec, n, 3, seed);
    let smoothing = smoothing_law(&tangential, thetas)?;
    let difference = difference_law(&tangential, thetas, 10)?;
    let rates = approximation_rates(&interior_corpus(&spec, n, seed), thetas)?;
    let oscillations = normal_oscillation_corpus(&sh, n, 0.25 / spec.dy(), seed);
    let c1 = commutator_law(&oscillations, &sh, thetas, Commutator::C1)?;
    let c2 = commutator_law(&oscillations, &sh, thetas, Commutator::C2)?;
    let law = |fit: &prandtl_core::experiments::LawFit| {
        json!({ "thetas": fit.thetas, "kappa": fit.kappa, "spread": fit.spread(), "slope": fit.slope() })
    };
    let value = json!({
        "smoothing": law(&smoothing),
        "difference": law(&difference),
        "approximation_rates": rates,
        "commutator_c1": law(&c1),
        "commutator_c2": law(&c2),
    });
    run.write_json("mollifier.json", &value)?;
    Ok(Outcome::ok(value))
}

fn run_linearized(cfg: &RunConfig, run: &mut RunDir) -> Result<Outcome, CliError> {
    let sh = shear(cfg)?;
    let z = zeroth_approximation(&initial_perturbation(cfg)?, &sh, cfg.schedule.k0 as usize)?;
    let bg = Background::assemble(&sh.u_s.add(&z.p0), &sh)?;
    let f = forcing_corpus(&sh, 1, cfg.output.seed).remove(0);
    let lambda = cfg.tracked().first().map_or(0.0, |t| t.2);
    let opts = SolveOptions { ell: cfg.norms.ell, lambda, ..SolveOptions::default() };
    let value = match cfg.solver.inner_solver {
        InnerSolver::ViaW => {
            let sol = solve_w(&bg, &f, &opts)?;
            write_field(run, "w.csv", &sol.w)?;
            write_field(run, "u.csv", &sol.u)?;
            write_field(run, "v.csv", &sol.v)?;
            let rows: Vec<Vec<String>> =
                sol.energy_trace.iter().map(|(n, t, e)| vec![n.to_string(), cell(*t), cell(*e)]).collect();
            run.write_csv("energy_trace.csv", &["step".into(), "t".into(), "value".into()], &rows)?;
            let probe = energy_probe(&sol, &bg, lambda, cfg.norms.ell)?;
            json!({
                "inner_solver": "via_w",
                "residual_w": sol.residual_w,
                "residual_uv": sol.residual_uv,
                "energy_probe": probe,
            })
        }
        InnerSolver::DirectUv => {
            let (u, v) = solve_uv_direct(&bg, &f, &opts)?;
            write_field(run, "u.csv", &u)?;
            write_field(run, "v.csv", &v)?;
            json!({ "inner_solver": "direct_uv", "residual_uv": uv_residual(&bg, &u, &v, &f)? })
        }
    };
    run.write_json("residuals.json", &value)?;
    Ok(Outcome::ok(value))
}

fn trace_table(cfg: &RunConfig, result: &RunResult) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header: Vec<String> = vec!["n".into(), "theta".into(), "dtheta".into()];
    for (k, ell, _) in cfg.tracked() {
        header.push(format!("w_norm_k{k}_l{ell}"));
    }
    for h in ["du_norm", "dv_norm", "e_norm", "residual", "lambda3"] {
        header.push(h.into());
    }
    let rows = result
        .trace
        .iter()
        .map(|r| {
            let mut row = vec![r.n.to_string(), cell(r.theta), cell(r.dtheta)];
            row.extend(r.w_norms.iter().map(|v| cell(*v)));
            row.extend([cell(r.du_norm), cell(r.dv_norm), cell(r.e_norm), cell(r.residual_next)]);
            row.push(r.lambda3.map_or(String::new(), cell));
            row
        })
        .collect();
    (header, rows)
}

fn stop_label(stop: &StopReason) -> &'static str {
    match stop {
        StopReason::Tolerance => "tolerance",
        StopReason::MaxIterations => "max_iterations",
        StopReason::MonotoneGate(_) => "monotone_gate",
    }
}

fn nash_moser_into(cfg: &RunConfig, run: &mut RunDir) -> Result<Outcome, CliError> {
    let sh = shear(cfg)?;
    let result = nash_moser::run(&cfg.iteration(), &sh, &initial_perturbation(cfg)?)?;
    let (header, rows) = trace_table(cfg, &result);
    run.write_csv("trace.csv", &header, &rows)?;
    write_field(run, "u.csv", &result.state.u(&sh))?;
    write_field(run, "v.csv", &result.state.v)?;
    let final_residual = result.trace.last().map_or(result.initial_residual, |r| r.residual_next);
    let worst = |f: fn(&nash_moser::StepRecord) -> f64| result.trace.iter().map(f).fold(0.0, f64::max);
    let summary = json!({
        "stop": stop_label(&result.stop),
        "steps": result.trace.len(),
        "initial_residual": result.initial_residual,
        "final_residual": final_residual,
        "residual_ratio": if result.initial_residual > 0.0 { final_residual / result.initial_residual } else { 0.0 },
        "max_identity_defect": worst(|r| r.identity_defect),
        "max_telescoping_defect": worst(|r| r.telescoping_defect),
        "max_mollified_divergence": worst(|r| r.mollified_divergence),
        "solver_wall_time_s": result.wall_time_s,
    });
    let gate = match &result.stop {
        StopReason::MonotoneGate(msg) => Some(msg.clone()),
        _ => None,
    };
    Ok(Outcome { summary, gate })
}

fn run_nash_moser(cfg: &RunConfig, run: &mut RunDir) -> Result<Outcome, CliError> {
    nash_moser_into(cfg, run)
}

fn run_oracle(cfg: &RunConfig, run: &mut RunDir) -> Result<Outcome, CliError> {
    let sh = shear(cfg)?;
    let spec = *sh.spec();
    let sol = solve_nonlinear(&initial_perturbation(cfg)?, &sh, &cfg.oracle())?;
    write_field(run, "u.csv", &sol.u)?;
    write_field(run, "v.csv", &sol.v)?;
    let rows: Vec<Vec<String>> = sol
        .picard_iterations
        .iter()
        .enumerate()
        .map(|(i, n)| vec![i.to_string(), cell(spec.t(i)), n.to_string()])
        .collect();
    run.write_csv("picard.csv", &["step".into(), "t".into(), "picard_iterations".into()], &rows)?;
    let (i, j, k, v) = sol.min_dy_u;
    let summary = json!({
        "max_picard_iterations": sol.picard_iterations.iter().max(),
        "min_dy_u": v,
        "min_dy_u_at": [spec.t(i), spec.x(j), spec.y(k)],
    });
    Ok(Outcome::ok(summary))
}

fn compare(cfg: &RunConfig, a: &Path, b: &Path, run: &mut RunDir) -> Result<Outcome, CliError> {
    let fa = Field::read_csv(a)?;
    let fb = Field::read_csv(b)?;
    if fa.spec() != fb.spec() {
        return Err(prandtl_core::Error::GridMismatch.into());
    }
    let diff = fa.sub(&fb);
    let mode = cfg.solver.tangential_index_mode;
    let mut reports = Vec::new();
    for (k, ell, lambda) in cfg.tracked() {
        let d = NormReport::compute(&diff, k, ell, lambda, mode)?;
        let r = NormReport::compute(&fb, k, ell, lambda, mode)?;
        let relative: serde_json::Map<String, Value> = d
            .values
            .iter()
            .map(|(name, e)| {
                let base = r.get(name).unwrap_or(0.0);
                let rel = if e.value == 0.0 { 0.0 } else { e.value / base };
                (name.clone(), json!(rel))
            })
            .collect();
        reports.push(json!({ "absolute": d, "relative": relative }));
    }
    let value = json!({ "a": a.display().to_string(), "b": b.display().to_string(), "max_abs": diff.max_abs(), "reports": reports });
    run.write_json("compare.json", &value)?;
    Ok(Outcome::ok(value))
}

fn stability(cfg: &RunConfig, eps_b: f64, run: &mut RunDir) -> Result<Outcome, CliError> {
    let sh = shear(cfg)?;
    let spec = cfg.grid_spec()?;
    let a = default_perturbation(&spec, cfg.perturbation.epsilon);
    let b = default_perturbation(&spec, eps_b);
    let report = stability_experiment(&cfg.iteration(), &sh, &a, &b)?;
    let value = json!({ "epsilon_a": cfg.perturbation.epsilon, "epsilon_b": eps_b, "report": report });
    run.write_json("stability.json", &value)?;
    Ok(Outcome::ok(value))
}

fn apply_sweep(cfg: &RunConfig, param: SweepParam, value: f64) -> Result<RunConfig, CliError> {
    let mut c = cfg.clone();
    let count = || {
        if value.fract() == 0.0 && value.is_finite() {
            Ok(value as i64)
        } else {
            Err(CliError::Usage(format!("{} needs integer values (got {value})", param.key())))
        }
    };
    match param {
        SweepParam::Epsilon => c.perturbation.epsilon = value,
        SweepParam::Theta0 => c.schedule.theta0 = value,
        SweepParam::NT => c.grid.n_t = count()?,
        SweepParam::NX => c.grid.n_x = count()?,
        SweepParam::NY => c.grid.n_y = count()?,
    }
    c.validate_with("")?;
    Ok(c)
}

/// Independent Nash–Moser runs, each in its own directory with its own
/// manifest; `jobs` of them at a time.
fn sweep(cfg: &RunConfig, base: &Path, param: SweepParam, values: &[f64], jobs: usize) -> Result<Value, CliError> {
    let configs: Vec<RunConfig> = values.iter().map(|&v| apply_sweep(cfg, param, v)).collect::<Result<_, _>>()?;
    let root = resolve_dir(base, "sweep");
    let args = json!({ "param": param.key(), "values": values, "jobs": jobs });
    let mut table = RunDir::create(root.clone(), "sweep", cfg, args)?;
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<Vec<String>>>> = Mutex::new(vec![None; values.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(values.len()) {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= values.len() {
                    break;
                }
                let label = format!("{}={}", param.key(), values[idx]);
                let dir = root.join(&label);
                let row = match RunDir::create(dir, "run-nash-moser", &configs[idx], json!({ "sweep": label })) {
                    Ok(mut run) => sweep_one(&configs[idx], &mut run, values[idx]),
                    Err(e) => vec![cell(values[idx]), "failed".into(), String::new(), String::new(), String::new(), e.to_string()],
                };
                rows.lock().expect("sweep rows")[idx] = Some(row);
            });
        }
    });
    let rows: Vec<Vec<String>> = rows.into_inner().expect("sweep rows").into_iter().flatten().collect();
    let header: Vec<String> =
        [param.key(), "stop", "steps", "initial_residual", "final_residual", "message"].iter().map(|s| s.to_string()).collect();
    table.write_csv("sweep.csv", &header, &rows)?;
    let num = |s: &str| s.parse::<f64>().ok();
    let summary: Vec<Value> =
        rows.iter().map(|r| json!({ "value": num(&r[0]), "stop": r[1], "final_residual": num(&r[4]) })).collect();
    let summary = json!({ "param": param.key(), "runs": summary });
    table.finish(Status::Ok, None, summary.clone())?;
    Ok(with_dir(summary, &root))
}

fn sweep_one(cfg: &RunConfig, run: &mut RunDir, value: f64) -> Vec<String> {
    let quote = |s: String| format!("\"{}\"", s.replace('"', "'"));
    match nash_moser_into(cfg, run) {
        Ok(out) => {
            let s = &out.summary;
            let status = if out.gate.is_some() { Status::Gate } else { Status::Ok };
            let _ = run.finish(status, out.gate.clone(), s.clone());
            vec![
                cell(value),
                s["stop"].as_str().unwrap_or("").into(),
                s["steps"].to_string(),
                cell(s["initial_residual"].as_f64().unwrap_or(f64::NAN)),
                cell(s["final_residual"].as_f64().unwrap_or(f64::NAN)),
                out.gate.map(quote).unwrap_or_default(),
            ]
        }
        Err(e) => {
            let status = if e.exit_code() == 2 { Status::Gate } else { Status::Failed };
            let _ = run.finish(status, Some(e.to_string()), Value::Null);
            vec![cell(value), "failed".into(), String::new(), String::new(), String::new(), quote(e.to_string())]
        }
    }
}
