//! Derivative-free maximization of the fidelity over protocol parameters.
//!
//! Powell drives the bang families, adaptive Nelder-Mead the CRAB families;
//! both run from several seeded restarts (CRAB restarts redraw the random
//! frequencies) and the best result wins. Within one restart the minimizer
//! is re-launched from its own best point until it stops improving, which
//! polishes fidelities down to the 1e-10 scale the reference results quote.

mod nelder_mead;
mod powell;

use std::cell::{Cell, RefCell};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::{cost_fidelity_with, EvolutionSettings};
use crate::models::ControlProblem;
use crate::protocols::{from_parameter_vector, parameter_vector, Protocol, ProtocolFamily};
use crate::real::Real;
use crate::rng::{sub_seed, SplitMix64};

pub(crate) use nelder_mead::nelder_mead_min;
pub(crate) use powell::powell_min;

/// Default evaluation budget per restart for bang protocols.
pub const DEFAULT_BUDGET_BANG: usize = 5000;
/// Default evaluation budget per restart for CRAB protocols.
pub const DEFAULT_BUDGET_CRAB: usize = 20000;
/// Default number of random restarts for bang protocols.
pub const DEFAULT_RESTARTS_BANG: u32 = 20;
/// Default number of frequency redraws for CRAB protocols.
pub const DEFAULT_RESTARTS_CRAB: u32 = 10;

/// Termination and budget knobs shared by both optimizers.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OptimizerOptions<S: Real> {
    /// Evaluation budget (per restart when used through `optimize_protocol`).
    pub max_evals: usize,
    /// Simplex-diameter / sweep-displacement tolerance.
    pub xatol: S,
    /// Objective-spread tolerance.
    pub fatol: S,
    /// Record the best-so-far fidelity trace.
    pub record_history: bool,
}

impl<S: Real> Default for OptimizerOptions<S> {
    fn default() -> Self {
        Self {
            max_evals: DEFAULT_BUDGET_BANG,
            xatol: S::of(1e-10),
            fatol: S::of(1e-12),
            record_history: false,
        }
    }
}

pub(crate) struct MinimizeOptions<S: Real> {
    pub max_evals: usize,
    pub xatol: S,
    pub fatol: S,
}

pub(crate) struct MinimizeOutcome<S: Real> {
    pub x: Vec<S>,
    pub f: S,
    pub evaluations: usize,
    pub budget_exhausted: bool,
}

pub(crate) fn clamp_point<S: Real>(x: &mut [S], bounds: &[(S, S)]) {
    for (xi, (lb, ub)) in x.iter_mut().zip(bounds.iter()) {
        *xi = (*xi).max(*lb).min(*ub);
    }
}

/// Outcome of an optimization run.
#[derive(Clone, Debug, Serialize)]
pub struct OptimizationResult<S: Real> {
    pub best_x: Vec<S>,
    pub best_fidelity: S,
    pub evaluations: u64,
    pub restarts_used: u32,
    /// Seed that reconstructs the winning protocol (for CRAB families, the
    /// frequency sub-seed of the winning restart).
    pub seed: u64,
    /// Wall-clock seconds; excluded from determinism comparisons.
    pub wall_time: f64,
    pub budget_exhausted: bool,
    /// `(evaluation index, best-so-far fidelity)` of the winning restart.
    pub history: Option<Vec<(u64, S)>>,
}

enum Method {
    NelderMead,
    Powell,
}

/// Maximizes `f` over the box with adaptive Nelder-Mead. Budget exhaustion
/// returns the best point so far with a flag, not an error.
pub fn nelder_mead_adaptive<S: Real>(
    f: impl FnMut(&[S]) -> S,
    x0: &[S],
    bounds: &[(S, S)],
    opts: &OptimizerOptions<S>,
) -> OptimizationResult<S> {
    maximize_single(Method::NelderMead, f, x0, bounds, opts)
}

/// Maximizes `f` over the box with Powell's direction-set method.
pub fn powell<S: Real>(
    f: impl FnMut(&[S]) -> S,
    x0: &[S],
    bounds: &[(S, S)],
    opts: &OptimizerOptions<S>,
) -> OptimizationResult<S> {
    maximize_single(Method::Powell, f, x0, bounds, opts)
}

fn maximize_single<S: Real>(
    method: Method,
    mut f: impl FnMut(&[S]) -> S,
    x0: &[S],
    bounds: &[(S, S)],
    opts: &OptimizerOptions<S>,
) -> OptimizationResult<S> {
    let start = Instant::now();
    let mut count = 0u64;
    let mut best = S::neg_infinity();
    let mut history: Vec<(u64, S)> = Vec::new();
    let record = opts.record_history;
    let mut objective = |x: &[S]| -> S {
        let value = f(x);
        count += 1;
        if value > best {
            best = value;
            if record {
                history.push((count, best));
            }
        }
        -value
    };
    let min_opts = MinimizeOptions {
        max_evals: opts.max_evals,
        xatol: opts.xatol,
        fatol: opts.fatol,
    };
    let outcome = match method {
        Method::NelderMead => nelder_mead_min(&mut objective, x0, bounds, &min_opts),
        Method::Powell => powell_min(&mut objective, x0, bounds, &min_opts),
    };
    OptimizationResult {
        best_x: outcome.x,
        best_fidelity: -outcome.f,
        evaluations: outcome.evaluations as u64,
        restarts_used: 1,
        seed: 0,
        wall_time: start.elapsed().as_secs_f64(),
        budget_exhausted: outcome.budget_exhausted,
        history: record.then_some(history),
    }
}

/// Full configuration of a protocol optimization.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProtocolOptimizeConfig<S: Real> {
    pub restarts: u32,
    pub seed: u64,
    pub options: OptimizerOptions<S>,
    /// Evolution settings used while searching.
    pub search_settings: EvolutionSettings<S>,
    /// Evolution settings used for the reported fidelity of each restart.
    pub report_settings: EvolutionSettings<S>,
    /// Extra polishing cycles run at report settings once the search gets
    /// within this infidelity of the optimum (only when the settings
    /// differ).
    pub polish_gate: S,
}

impl<S: Real> ProtocolOptimizeConfig<S> {
    /// Defaults per family: Powell with 20 restarts and 5000 evaluations for
    /// bang protocols, adaptive Nelder-Mead with 10 frequency redraws and
    /// 20000 evaluations for CRAB.
    pub fn for_family(family: &ProtocolFamily, seed: u64) -> Self {
        let crab = family.uses_frequencies();
        Self {
            restarts: if crab {
                DEFAULT_RESTARTS_CRAB
            } else {
                DEFAULT_RESTARTS_BANG
            },
            seed,
            options: OptimizerOptions {
                max_evals: if crab {
                    DEFAULT_BUDGET_CRAB
                } else {
                    DEFAULT_BUDGET_BANG
                },
                ..Default::default()
            },
            search_settings: EvolutionSettings::default(),
            report_settings: EvolutionSettings::default(),
            polish_gate: S::of(1e-4),
        }
    }
}

struct RestartOutcome<S: Real> {
    sub_seed: u64,
    x: Vec<S>,
    fidelity: S,
    evaluations: u64,
    budget_exhausted: bool,
    history: Option<Vec<(u64, S)>>,
}

struct ObjectiveCtx<'a, S: Real> {
    problem: &'a ControlProblem<S>,
    template: &'a Protocol<S>,
    search: EvolutionSettings<S>,
    report: EvolutionSettings<S>,
    use_report: Cell<bool>,
    error: RefCell<Option<Error>>,
    count: Cell<u64>,
    best: Cell<S>,
    history: RefCell<Vec<(u64, S)>>,
    record: bool,
}

impl<'a, S: Real> ObjectiveCtx<'a, S> {
    fn eval(&self, x: &[S]) -> S {
        if self.error.borrow().is_some() {
            return S::infinity();
        }
        let settings = if self.use_report.get() {
            self.report
        } else {
            self.search
        };
        let fidelity = from_parameter_vector(self.template, x)
            .and_then(|p| cost_fidelity_with(self.problem, &p, &settings).map(|c| c.fidelity));
        match fidelity {
            Ok(f) => {
                let n = self.count.get() + 1;
                self.count.set(n);
                if f > self.best.get() {
                    self.best.set(f);
                    if self.record {
                        self.history.borrow_mut().push((n, f));
                    }
                }
                S::one() - f
            }
            Err(e) => {
                *self.error.borrow_mut() = Some(e);
                S::infinity()
            }
        }
    }
}

/// Optimizes a protocol family at fixed duration: Powell from random
/// interior points for bang families, adaptive Nelder-Mead from
/// zero-plus-jitter coefficients with per-restart frequency redraws for
/// CRAB. Deterministic given the seed; returns the best restart.
pub fn optimize_protocol<S: Real>(
    problem: &ControlProblem<S>,
    family: &ProtocolFamily,
    tau: S,
    restarts: u32,
    seed: u64,
) -> Result<OptimizationResult<S>> {
    let mut config = ProtocolOptimizeConfig::for_family(family, seed);
    config.restarts = restarts;
    optimize_protocol_with(problem, family, tau, &config)
}

pub fn optimize_protocol_with<S: Real>(
    problem: &ControlProblem<S>,
    family: &ProtocolFamily,
    tau: S,
    config: &ProtocolOptimizeConfig<S>,
) -> Result<OptimizationResult<S>> {
    if config.restarts < 1 {
        return Err(Error::invalid("restarts", "need at least one restart"));
    }
    if tau < S::zero() {
        return Err(Error::invalid("tau", "duration must be non-negative"));
    }
    let start = Instant::now();
    let outcomes: Vec<Result<RestartOutcome<S>>> = (0..config.restarts)
        .into_par_iter()
        .map(|i| run_restart(problem, family, tau, config, i))
        .collect();

    let mut winner: Option<RestartOutcome<S>> = None;
    let mut total_evals = 0u64;
    let mut any_budget = false;
    for outcome in outcomes {
        let o = outcome?;
        total_evals += o.evaluations;
        any_budget |= o.budget_exhausted;
        let better = match &winner {
            None => true,
            Some(w) => o.fidelity > w.fidelity,
        };
        if better {
            winner = Some(o);
        }
    }
    let w = winner.expect("at least one restart");
    Ok(OptimizationResult {
        best_x: w.x,
        best_fidelity: w.fidelity,
        evaluations: total_evals,
        restarts_used: config.restarts,
        seed: w.sub_seed,
        wall_time: start.elapsed().as_secs_f64(),
        budget_exhausted: any_budget,
        history: w.history,
    })
}

fn run_restart<S: Real>(
    problem: &ControlProblem<S>,
    family: &ProtocolFamily,
    tau: S,
    config: &ProtocolOptimizeConfig<S>,
    index: u32,
) -> Result<RestartOutcome<S>> {
    let sub = sub_seed(config.seed, index as u64);
    let template = family.template(problem.g0, problem.g1, problem.g_max, tau, sub)?;
    let (template_x, bounds) = parameter_vector(&template);
    let is_crab = family.uses_frequencies();

    let ctx = ObjectiveCtx {
        problem,
        template: &template,
        search: config.search_settings,
        report: config.report_settings,
        use_report: Cell::new(false),
        error: RefCell::new(None),
        count: Cell::new(0),
        best: Cell::new(S::neg_infinity()),
        history: RefCell::new(Vec::new()),
        record: config.options.record_history,
    };

    if bounds.is_empty() {
        // nothing to optimize (e.g. a plain linear ramp)
        ctx.use_report.set(true);
        let obj = ctx.eval(&template_x);
        take_error(&ctx)?;
        return Ok(RestartOutcome {
            sub_seed: sub,
            x: template_x,
            fidelity: S::one() - obj,
            evaluations: ctx.count.get(),
            budget_exhausted: false,
            history: ctx.record.then(|| ctx.history.borrow().clone()),
        });
    }

    // starting point: uniform in the box for bang families, template plus a
    // small jitter for CRAB coefficients
    let mut rng = SplitMix64::new(sub_seed(sub, 0x4a17));
    let mut x0: Vec<S> = if is_crab {
        template_x
            .iter()
            .zip(bounds.iter())
            .map(|(&v, &(lb, ub))| v + rng.next_range(S::of(-0.02), S::of(0.02)) * (ub - lb))
            .collect()
    } else {
        bounds.iter().map(|&(lb, ub)| rng.next_range(lb, ub)).collect()
    };
    clamp_point(&mut x0, &bounds);

    let budget = config.options.max_evals;
    let mut used = 0usize;
    let mut budget_exhausted = false;
    let mut best_x = x0;
    let mut best_obj = S::infinity();

    let run_cycles = |ctx: &ObjectiveCtx<S>,
                          best_x: &mut Vec<S>,
                          best_obj: &mut S,
                          used: &mut usize,
                          budget_exhausted: &mut bool|
     -> Result<()> {
        loop {
            let remaining = budget.saturating_sub(*used);
            if remaining < 10 {
                *budget_exhausted = true;
                return Ok(());
            }
            let min_opts = MinimizeOptions {
                max_evals: remaining,
                xatol: config.options.xatol,
                fatol: config.options.fatol,
            };
            let mut obj_fn = |x: &[S]| ctx.eval(x);
            let outcome = if is_crab {
                nelder_mead_min(&mut obj_fn, best_x, &bounds, &min_opts)
            } else {
                powell_min(&mut obj_fn, best_x, &bounds, &min_opts)
            };
            take_error(ctx)?;
            *used += outcome.evaluations;
            *budget_exhausted |= outcome.budget_exhausted;
            let improved = outcome.f < *best_obj - config.options.fatol;
            if outcome.f < *best_obj {
                *best_obj = outcome.f;
                *best_x = outcome.x;
            }
            if !improved || *budget_exhausted {
                return Ok(());
            }
        }
    };

    run_cycles(&ctx, &mut best_x, &mut best_obj, &mut used, &mut budget_exhausted)?;

    // polish at report settings once the search is close to the optimum
    let settings_differ = config.search_settings != config.report_settings;
    if settings_differ && best_obj < config.polish_gate {
        ctx.use_report.set(true);
        best_obj = ctx.eval(&best_x);
        take_error(&ctx)?;
        used += 1;
        run_cycles(&ctx, &mut best_x, &mut best_obj, &mut used, &mut budget_exhausted)?;
    }

    // reported fidelity is always re-evaluated at report settings
    ctx.use_report.set(true);
    let final_obj = ctx.eval(&best_x);
    take_error(&ctx)?;
    Ok(RestartOutcome {
        sub_seed: sub,
        x: best_x,
        fidelity: S::one() - final_obj,
        evaluations: ctx.count.get(),
        budget_exhausted,
        history: ctx.record.then(|| ctx.history.borrow().clone()),
    })
}

fn take_error<S: Real>(ctx: &ObjectiveCtx<S>) -> Result<()> {
    match ctx.error.borrow_mut().take() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::lz_default;

    #[test]
    fn maximizer_wrapper_quadratic() {
        // maximize -(x-2)^2 on [0, 5]
        let out = nelder_mead_adaptive(
            |x: &[f64]| -(x[0] - 2.0).powi(2),
            &[0.5],
            &[(0.0, 5.0)],
            &OptimizerOptions::default(),
        );
        assert!((out.best_x[0] - 2.0).abs() < 1e-6);
        assert!(out.best_fidelity > -1e-12);
    }

    #[test]
    fn maximize_linear_boundary() {
        let out = powell(
            |x: &[f64]| x[0],
            &[0.3],
            &[(0.0, 1.0)],
            &OptimizerOptions::default(),
        );
        assert!((out.best_x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn history_is_monotone() {
        let opts = OptimizerOptions {
            record_history: true,
            ..Default::default()
        };
        let out = powell(
            |x: &[f64]| -(x[0] - 1.0).powi(2) - (x[1] + 0.5).powi(2),
            &[2.0, 2.0],
            &[(-3.0, 3.0), (-3.0, 3.0)],
            &opts,
        );
        let hist = out.history.unwrap();
        assert!(!hist.is_empty());
        for w in hist.windows(2) {
            assert!(w[1].1 >= w[0].1);
            assert!(w[1].0 > w[0].0);
        }
    }

    #[test]
    fn seeded_quadratics_recovered() {
        // randomized bounded quadratics with known interior minima
        let mut rng = SplitMix64::new(424242);
        for case in 0..10 {
            let dim = 2 + (case % 3);
            let center: Vec<f64> = (0..dim).map(|_| rng.next_range(-1.5, 1.5)).collect();
            let scales: Vec<f64> = (0..dim).map(|_| rng.next_range(0.5, 3.0)).collect();
            let f = |x: &[f64]| {
                -x.iter()
                    .zip(center.iter().zip(scales.iter()))
                    .map(|(xi, (ci, si))| si * (xi - ci).powi(2))
                    .sum::<f64>()
            };
            let bounds = vec![(-2.0, 2.0); dim];
            let x0 = vec![0.0; dim];
            let opts = OptimizerOptions::default();
            for method in 0..2 {
                let out = if method == 0 {
                    powell(f, &x0, &bounds, &opts)
                } else {
                    nelder_mead_adaptive(f, &x0, &bounds, &opts)
                };
                for (xi, ci) in out.best_x.iter().zip(center.iter()) {
                    assert!(
                        (xi - ci).abs() < 1e-6,
                        "case {case} method {method}: {:?} vs {:?}",
                        out.best_x,
                        center
                    );
                }
            }
        }
    }

    #[test]
    fn protocol_optimization_is_deterministic() {
        let problem = lz_default::<f64>();
        let family = ProtocolFamily::DoubleBang;
        let a = optimize_protocol(&problem, &family, 0.5, 4, 7).unwrap();
        let b = optimize_protocol(&problem, &family, 0.5, 4, 7).unwrap();
        assert_eq!(a.best_x, b.best_x);
        assert_eq!(a.best_fidelity, b.best_fidelity);
        assert_eq!(a.evaluations, b.evaluations);
        assert_eq!(a.seed, b.seed);
    }

    #[test]
    fn best_fidelity_matches_reevaluation() {
        let problem = lz_default::<f64>();
        let family = ProtocolFamily::DoubleBang;
        let res = optimize_protocol(&problem, &family, 0.6, 4, 3).unwrap();
        let template = family
            .template(problem.g0, problem.g1, problem.g_max, 0.6, res.seed)
            .unwrap();
        let p = from_parameter_vector(&template, &res.best_x).unwrap();
        let again = cost_fidelity_with(&problem, &p, &EvolutionSettings::default())
            .unwrap()
            .fidelity;
        assert!((again - res.best_fidelity).abs() < 1e-12);
    }

    #[test]
    fn feasibility_of_best_point() {
        let problem = lz_default::<f64>();
        let family = ProtocolFamily::DoubleBang;
        let res = optimize_protocol(&problem, &family, 0.7, 3, 11).unwrap();
        let template = family
            .template(problem.g0, problem.g1, problem.g_max, 0.7, res.seed)
            .unwrap();
        let (_, bounds) = parameter_vector(&template);
        for (xi, (lb, ub)) in res.best_x.iter().zip(bounds) {
            assert!(*xi >= lb - 1e-12 && *xi <= ub + 1e-12);
        }
        let p = from_parameter_vector(&template, &res.best_x).unwrap();
        for g in crate::protocols::evaluate_grid(&p, 1000).unwrap() {
            assert!(g.abs() <= problem.g_max + 1e-12);
        }
    }
}
