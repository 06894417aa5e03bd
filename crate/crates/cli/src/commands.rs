//! Command implementations: experiment orchestration and output emission.

use std::cell::RefCell;
use std::time::Instant;

use bangopt::evolution::{cost_fidelity_with, trajectory_with, EvolutionSettings};
use bangopt::experiments::{
    extract_tau_star, fit_power_law, scaling_scan_sink, scan_tau_sink, ScalingStudyConfig,
    ScanRecord, ScanSink, SizeScan, TauStarCriterion,
};
use bangopt::models::{critical_gap, lmg_problem, lz_problem, ControlProblem};
use bangopt::optimize::{optimize_protocol_with, ProtocolOptimizeConfig};
use bangopt::protocols::{from_parameter_vector, parameter_vector, Protocol, ProtocolFamily};
use bangopt::quantum::spectral_gap;
use bangopt::rng::sub_seed;
use serde_json::json;

use crate::config::{CliError, CliResult, RunConfig};
use crate::output::{csv_path, ensure_parent, load_records, write_sidecar, PointKey, ScanWriter};

pub fn build_problem(config: &RunConfig) -> CliResult<ControlProblem<f64>> {
    let (g0, g1, g_max) = (
        config.effective_g0(),
        config.effective_g1(),
        config.effective_g_max(),
    );
    let problem = if config.is_lmg() {
        lmg_problem(config.n, g0, g1, g_max)?
    } else {
        lz_problem(g0, g1, g_max)?
    };
    Ok(problem)
}

fn optimize_config(config: &RunConfig, family: &ProtocolFamily, seed: u64) -> ProtocolOptimizeConfig<f64> {
    let mut oc = ProtocolOptimizeConfig::for_family(family, seed);
    if let Some(r) = config.restarts {
        oc.restarts = r;
    }
    if let Some(b) = config.budget {
        oc.options.max_evals = b;
    }
    oc.options.xatol = config.xatol;
    oc.options.fatol = config.fatol;
    oc.options.record_history = config.history;
    oc.report_settings = EvolutionSettings::default().with_converge_tol(config.evolve_tol);
    oc.search_settings = EvolutionSettings::default()
        .with_converge_tol(config.search_tol.unwrap_or(config.evolve_tol));
    oc
}

fn require_tau(config: &RunConfig) -> CliResult<f64> {
    config
        .tau
        .ok_or_else(|| CliError::Config("tau: this command needs --tau".into()))
}

/// `optimize`: one protocol optimization at fixed duration.
pub fn cmd_optimize(config: &RunConfig) -> CliResult<()> {
    let start = Instant::now();
    let tau = require_tau(config)?;
    let seed = config.resolve_seed();
    let family = config.family()?;
    let problem = build_problem(config)?;
    let oc = optimize_config(config, &family, seed);
    let result = optimize_protocol_with(&problem, &family, tau, &oc)?;

    let record = ScanRecord {
        model: problem.label.clone(),
        n: problem.dim() - 1,
        tau,
        g_max: problem.g_max,
        family: family.label(),
        fidelity: result.best_fidelity,
        best_x: result.best_x.clone(),
        seed: result.seed,
    };
    let path = csv_path(&config.output);
    ensure_parent(&path)?;
    let mut writer = ScanWriter::create(&path, record.best_x.len(), false)?;
    writer.write(&record)?;
    println!(
        "optimize: family={} tau={} fidelity={} ({} evaluations)",
        record.family, tau, record.fidelity, result.evaluations
    );
    write_sidecar(
        &config.output,
        "optimize",
        config,
        seed,
        json!({
            "fidelity": result.best_fidelity,
            "best_x": result.best_x,
            "evaluations": result.evaluations,
            "restarts_used": result.restarts_used,
            "winning_sub_seed": result.seed,
            "budget_exhausted": result.budget_exhausted,
            "history": result.history,
        }),
        start.elapsed().as_secs_f64(),
    )?;
    Ok(())
}

/// Shared resumable runner for record-producing scans.
fn run_with_writer<F>(
    config: &RunConfig,
    params: usize,
    keyed_on_p0: bool,
    body: F,
) -> CliResult<serde_json::Value>
where
    F: FnOnce(&mut ScanSink<f64>) -> CliResult<serde_json::Value>,
{
    let path = csv_path(&config.output);
    ensure_parent(&path)?;
    let writer = RefCell::new(ScanWriter::create(&path, params, keyed_on_p0)?);
    let lookup = |n: usize, tau: f64, g_max: f64| -> Option<ScanRecord<f64>> {
        let w = writer.borrow();
        let key = PointKey::new(n, tau, g_max, None);
        w.completed(&key).cloned()
    };
    let mut emit = |record: &ScanRecord<f64>| -> bangopt::Result<()> {
        writer
            .borrow_mut()
            .write(record)
            .map_err(|e| bangopt::Error::invalid("output", e.message().to_string()))
    };
    let mut sink = ScanSink {
        lookup: &lookup,
        emit: &mut emit,
    };
    body(&mut sink)
}

/// `scan-tau`: optimized fidelity over a duration grid.
pub fn cmd_scan_tau(config: &RunConfig) -> CliResult<()> {
    let start = Instant::now();
    let seed = config.resolve_seed();
    let family = config.family()?;
    let problem = build_problem(config)?;
    let taus = config.tau_grid()?;
    let oc = optimize_config(config, &family, seed);
    let template =
        family.template(problem.g0, problem.g1, problem.g_max, taus[0], seed)?;
    let params = parameter_vector(&template).0.len();

    let summary = run_with_writer(config, params, false, |sink| {
        let records = scan_tau_sink(&problem, &family, &taus, &oc, sink)?;
        let max_f = records.iter().map(|r| r.fidelity).fold(f64::NEG_INFINITY, f64::max);
        let thr = extract_tau_star(&records, TauStarCriterion::Threshold(config.threshold))
            .map(Some)
            .unwrap_or(None);
        Ok(json!({
            "points": records.len(),
            "max_fidelity": max_f,
            "tau_star_threshold": thr,
            "threshold_level": config.threshold,
        }))
    })?;
    println!("scan-tau: {} points -> {}", taus.len(), csv_path(&config.output).display());
    write_sidecar(&config.output, "scan-tau", config, seed, summary, start.elapsed().as_secs_f64())?;
    Ok(())
}

/// `scan-gmax`: full duration scan per energy bound.
pub fn cmd_scan_gmax(config: &RunConfig) -> CliResult<()> {
    let start = Instant::now();
    let seed = config.resolve_seed();
    let family = config.family()?;
    if !config.is_lmg() {
        return Err(CliError::Config("model: scan-gmax runs on the lmg model".into()));
    }
    let bounds = config
        .gmax_list
        .clone()
        .ok_or_else(|| CliError::Config("gmax_list: scan-gmax needs --gmax-list".into()))?;
    let taus = config.tau_grid()?;
    let template = family.template(
        config.effective_g0(),
        config.effective_g1(),
        bounds[0],
        taus[0],
        seed,
    )?;
    let params = parameter_vector(&template).0.len();

    let summary = run_with_writer(config, params, false, |sink| {
        let mut total = 0usize;
        for (bi, &g_max) in bounds.iter().enumerate() {
            let problem = lmg_problem(config.n, config.effective_g0(), config.effective_g1(), g_max)?;
            let oc = optimize_config(config, &family, sub_seed(seed, bi as u64));
            let records = scan_tau_sink(&problem, &family, &taus, &oc, sink)?;
            total += records.len();
        }
        Ok(json!({ "points": total, "bounds": bounds }))
    })?;
    println!("scan-gmax: -> {}", csv_path(&config.output).display());
    write_sidecar(&config.output, "scan-gmax", config, seed, summary, start.elapsed().as_secs_f64())?;
    Ok(())
}

/// `scan-size`: per-size adaptive scans of the minimal-time scaling study.
pub fn cmd_scan_size(config: &RunConfig) -> CliResult<()> {
    let start = Instant::now();
    let seed = config.resolve_seed();
    let family = config.family()?;
    let n_list = config
        .n_list
        .clone()
        .unwrap_or_else(|| vec![16, 32, 64, 128, 256, 512, 1024, 2048]);
    let oc = optimize_config(config, &family, seed);
    let study = ScalingStudyConfig {
        threshold: config.threshold,
        ..Default::default()
    };
    let template = family.template(0.0, 1.0, 1.7, 1.0, seed)?;
    let params = parameter_vector(&template).0.len();
    let g_max = config.effective_g_max();

    let scans = RefCell::new(Vec::<SizeScan<f64>>::new());
    let summary = run_with_writer(config, params, false, |sink| {
        let result = scaling_scan_sink(
            &n_list,
            g_max,
            &family,
            oc.restarts,
            seed,
            &study,
            &oc,
            sink,
        )?;
        let meta: Vec<_> = result
            .iter()
            .map(|s| {
                json!({
                    "n": s.n,
                    "gap": s.gap,
                    "kink_grid_spacing": s.kink_grid_spacing,
                    "kink_taus": s.kink_records.iter().map(|r| r.tau).collect::<Vec<_>>(),
                })
            })
            .collect();
        *scans.borrow_mut() = result;
        Ok(json!({ "sizes": meta, "threshold_level": study.threshold }))
    })?;
    println!("scan-size: {} sizes -> {}", n_list.len(), csv_path(&config.output).display());
    write_sidecar(&config.output, "scan-size", config, seed, summary, start.elapsed().as_secs_f64())?;
    Ok(())
}

/// `saturated-scan`: pure-grid fidelity map of the saturated double-bang.
pub fn cmd_saturated_scan(config: &RunConfig) -> CliResult<()> {
    let start = Instant::now();
    let seed = config.resolve_seed();
    if !config.is_lmg() {
        return Err(CliError::Config("model: saturated-scan runs on the lmg model".into()));
    }
    let taus = config.tau_grid()?;
    let fractions = config
        .fraction_list
        .clone()
        .unwrap_or_else(|| (0..=100).map(|k| 0.01 * k as f64).collect());
    for &f in &fractions {
        if !(0.0..=1.0).contains(&f) {
            return Err(CliError::Config(format!(
                "fraction_list: fraction {f} outside [0, 1]"
            )));
        }
    }
    let g_max = config.effective_g_max();
    let problem = lmg_problem(config.n, config.effective_g0(), config.effective_g1(), g_max)?;
    grid_scan(
        config,
        "saturated-scan",
        "saturated-db",
        &problem,
        &fractions,
        &taus,
        |fraction, tau| Protocol::saturated_double_bang(fraction * tau, tau, g_max),
        seed,
        start,
    )
}

/// `constant-scan`: pure-grid fidelity map of constant protocols.
pub fn cmd_constant_scan(config: &RunConfig) -> CliResult<()> {
    let start = Instant::now();
    let seed = config.resolve_seed();
    if !config.is_lmg() {
        return Err(CliError::Config("model: constant-scan runs on the lmg model".into()));
    }
    let taus = config.tau_grid()?;
    let gs = config
        .g_list
        .clone()
        .unwrap_or_else(|| (0..=20).map(|k| 0.1 * k as f64).collect());
    let bound = gs
        .iter()
        .fold(config.effective_g_max(), |a, &g| a.max(g.abs()));
    let problem = lmg_problem(config.n, config.effective_g0(), config.effective_g1(), bound)?;
    grid_scan(
        config,
        "constant-scan",
        "constant",
        &problem,
        &gs,
        &taus,
        |g, tau| Protocol::constant(g, tau, bound),
        seed,
        start,
    )
}

#[allow(clippy::too_many_arguments)]
fn grid_scan(
    config: &RunConfig,
    command: &str,
    family_label: &str,
    problem: &ControlProblem<f64>,
    params: &[f64],
    taus: &[f64],
    make: impl Fn(f64, f64) -> Protocol<f64> + Sync,
    seed: u64,
    start: Instant,
) -> CliResult<()> {
    use rayon::prelude::*;
    if params.is_empty() || taus.is_empty() {
        return Err(CliError::Config("grid: parameter and tau grids must be nonempty".into()));
    }
    let path = csv_path(&config.output);
    ensure_parent(&path)?;
    let mut writer = ScanWriter::create(&path, 1, true)?;
    let settings = EvolutionSettings::default().with_converge_tol(config.evolve_tol);
    let mut max_f = f64::NEG_INFINITY;
    // compute one parameter row at a time (parallel over tau), stream rows
    // out in deterministic order
    for &p in params {
        let row: Vec<ScanRecord<f64>> = taus
            .par_iter()
            .map(|&tau| {
                let key = PointKey::new(problem.dim() - 1, tau, problem.g_max, Some(p));
                if let Some(r) = writer.completed(&key) {
                    return Ok(r.clone());
                }
                let fidelity = cost_fidelity_with(problem, &make(p, tau), &settings)?.fidelity;
                Ok(ScanRecord {
                    model: problem.label.clone(),
                    n: problem.dim() - 1,
                    tau,
                    g_max: problem.g_max,
                    family: family_label.to_string(),
                    fidelity,
                    best_x: vec![p],
                    seed,
                })
            })
            .collect::<bangopt::Result<Vec<_>>>()?;
        for r in &row {
            max_f = max_f.max(r.fidelity);
            writer.write(r)?;
        }
    }
    println!(
        "{command}: {} x {} grid -> {}",
        params.len(),
        taus.len(),
        path.display()
    );
    write_sidecar(
        &config.output,
        command,
        config,
        seed,
        json!({
            "grid": [params.len(), taus.len()],
            "max_fidelity": max_f,
        }),
        start.elapsed().as_secs_f64(),
    )?;
    Ok(())
}

/// `gap`: minimum spectral gap; prints it and writes a one-row CSV.
pub fn cmd_gap(config: &RunConfig) -> CliResult<()> {
    let start = Instant::now();
    let seed = config.resolve_seed();
    let (g, gap) = if config.is_lmg() {
        (1.0, critical_gap::<f64>(config.n)?)
    } else {
        let problem = build_problem(config)?;
        let h = problem.hamiltonian(problem.g1)?;
        (problem.g1, spectral_gap(&h)?)
    };
    let n_out = if config.is_lmg() { config.n } else { 1 };
    println!("gap: model={} N={} g={} gap={}", config.model, n_out, g, gap);
    let path = csv_path(&config.output);
    ensure_parent(&path)?;
    std::fs::write(&path, format!("model,N,g,gap\n{},{},{},{}\n", config.model, n_out, g, gap))?;
    write_sidecar(
        &config.output,
        "gap",
        config,
        seed,
        json!({ "gap": gap, "g": g }),
        start.elapsed().as_secs_f64(),
    )?;
    Ok(())
}

/// `fit-scaling`: fits `tau* Delta_min ~ N^-alpha` from a scan-size CSV.
pub fn cmd_fit_scaling(config: &RunConfig) -> CliResult<()> {
    let start = Instant::now();
    let seed = config.resolve_seed();
    let input = config
        .input
        .clone()
        .ok_or_else(|| CliError::Config("input: fit-scaling needs --input records.csv".into()))?;
    // parameter count depends on family; accept any count by probing
    let family = config.family()?;
    let template = family.template(0.0, 1.0, 1.7, 1.0, 0)?;
    let params = parameter_vector(&template).0.len();
    let records = load_records(&input, params)?;
    if records.is_empty() {
        return Err(CliError::Config(format!(
            "input: no records with {params} parameters found in {}",
            input.display()
        )));
    }
    let criterion = match config.criterion.as_str() {
        "kink" => TauStarCriterion::Kink,
        _ => TauStarCriterion::Threshold(config.threshold),
    };
    // group by size
    let mut sizes: Vec<usize> = records.iter().map(|r| r.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut points = Vec::with_capacity(sizes.len());
    for &n in &sizes {
        let mut rs: Vec<ScanRecord<f64>> = records.iter().filter(|r| r.n == n).cloned().collect();
        rs.sort_by(|a, b| a.tau.partial_cmp(&b.tau).expect("non-NaN tau"));
        let rs_for_criterion = match criterion {
            TauStarCriterion::Kink => {
                // the kink needs the uniform grid; recover it from the sidecar
                let sidecar = input
                    .to_str()
                    .and_then(|s| s.strip_suffix(".csv"))
                    .map(|s| format!("{s}.meta.json"));
                let taus = sidecar.and_then(|p| kink_taus_from_sidecar(&p, n));
                match taus {
                    Some(taus) => rs
                        .iter()
                        .filter(|r| taus.iter().any(|&t| (t - r.tau).abs() < 1e-12))
                        .cloned()
                        .collect(),
                    None => {
                        return Err(CliError::Config(
                            "criterion: kink needs the scan-size sidecar (<input>.meta.json) \
                             to identify the uniform grid"
                                .into(),
                        ))
                    }
                }
            }
            TauStarCriterion::Threshold(_) => rs.clone(),
        };
        let tau_star = extract_tau_star(&rs_for_criterion, criterion)?;
        let gap = critical_gap::<f64>(n)?;
        points.push((n, tau_star * gap));
    }
    let fit = fit_power_law(&points)?;
    println!(
        "fit-scaling ({}): alpha = {} +- {} over {} sizes",
        config.criterion, fit.exponent, fit.standard_error, points.len()
    );
    let out_path = format!("{}.json", config.output);
    ensure_parent(std::path::Path::new(&out_path))?;
    std::fs::write(
        &out_path,
        serde_json::to_string_pretty(&json!({
            "criterion": config.criterion,
            "threshold_level": config.threshold,
            "exponent": fit.exponent,
            "standard_error": fit.standard_error,
            "amplitude": fit.amplitude,
            "points": fit.points,
        }))
        .map_err(|e| CliError::Io(e.to_string()))?,
    )?;
    write_sidecar(
        &config.output,
        "fit-scaling",
        config,
        seed,
        json!({ "exponent": fit.exponent, "standard_error": fit.standard_error }),
        start.elapsed().as_secs_f64(),
    )?;
    Ok(())
}

fn kink_taus_from_sidecar(path: &str, n: usize) -> Option<Vec<f64>> {
    let text = std::fs::read_to_string(path).ok()?;
    let value: serde_json::Value = serde_json::from_str(&text).ok()?;
    let sizes = value.get("summary")?.get("sizes")?.as_array()?;
    for entry in sizes {
        if entry.get("n")?.as_u64()? as usize == n {
            return entry
                .get("kink_taus")?
                .as_array()?
                .iter()
                .map(|v| v.as_f64())
                .collect();
        }
    }
    None
}

/// `trajectory`: state samples along one protocol's evolution.
pub fn cmd_trajectory(config: &RunConfig) -> CliResult<()> {
    let start = Instant::now();
    let seed = config.resolve_seed();
    let tau = require_tau(config)?;
    let family = config.family()?;
    let problem = build_problem(config)?;
    let settings = EvolutionSettings::default().with_converge_tol(config.evolve_tol);

    // protocol: explicit parameters if given, otherwise optimize first
    let (protocol, fidelity, used_params) = match &config.params {
        Some(x) => {
            let template = family.template(problem.g0, problem.g1, problem.g_max, tau, seed)?;
            let p = from_parameter_vector(&template, x)?;
            let f = cost_fidelity_with(&problem, &p, &settings)?.fidelity;
            (p, f, x.clone())
        }
        None => {
            let oc = optimize_config(config, &family, seed);
            let result = optimize_protocol_with(&problem, &family, tau, &oc)?;
            let template =
                family.template(problem.g0, problem.g1, problem.g_max, tau, result.seed)?;
            let p = from_parameter_vector(&template, &result.best_x)?;
            (p, result.best_fidelity, result.best_x)
        }
    };

    let points = trajectory_with(&problem, &protocol, config.samples, &settings)?;
    let path = csv_path(&config.output);
    ensure_parent(&path)?;
    let mut out = String::new();
    if problem.dim() == 2 {
        out.push_str("t,bloch_x,bloch_y,bloch_z\n");
        for pt in &points {
            let b = pt.bloch.expect("two-level system");
            out.push_str(&format!("{},{},{},{}\n", pt.t, b[0], b[1], b[2]));
        }
    } else {
        out.push('t');
        for k in 0..problem.dim() {
            out.push_str(&format!(",re{k},im{k}"));
        }
        out.push('\n');
        for pt in &points {
            out.push_str(&format!("{}", pt.t));
            for a in pt.state.amplitudes() {
                out.push_str(&format!(",{},{}", a.re, a.im));
            }
            out.push('\n');
        }
    }
    std::fs::write(&path, out)?;
    println!(
        "trajectory: {} samples, fidelity {} -> {}",
        points.len(),
        fidelity,
        path.display()
    );
    write_sidecar(
        &config.output,
        "trajectory",
        config,
        seed,
        json!({
            "fidelity": fidelity,
            "family": family.label(),
            "tau": tau,
            "params": used_params,
            "samples": config.samples,
        }),
        start.elapsed().as_secs_f64(),
    )?;
    Ok(())
}
