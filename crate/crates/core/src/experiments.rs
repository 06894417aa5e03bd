//! Parameter scans, minimal-time extraction and scaling fits.
//!
//! Every scan emits `ScanRecord`s so downstream tooling (CSV output,
//! resumable runs, fits) sees one uniform row shape. A record is replayable:
//! the stored seed rebuilds the winning protocol and re-evaluating at
//! `best_x` reproduces the fidelity bit for bit.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::{cost_fidelity_with, EvolutionSettings};
use crate::models::{critical_gap, lmg_problem, ControlProblem};
use crate::optimize::{optimize_protocol_with, OptimizationResult, ProtocolOptimizeConfig};
use crate::protocols::{Protocol, ProtocolFamily};
use crate::real::Real;
use crate::rng::sub_seed;

/// One optimized (or directly evaluated) grid point.
#[derive(Clone, Debug, Serialize)]
pub struct ScanRecord<S: Real> {
    pub model: String,
    pub n: usize,
    pub tau: S,
    pub g_max: S,
    pub family: String,
    pub fidelity: S,
    pub best_x: Vec<S>,
    pub seed: u64,
}

impl<S: Real> ScanRecord<S> {
    fn from_result(
        problem: &ControlProblem<S>,
        family: &ProtocolFamily,
        tau: S,
        result: &OptimizationResult<S>,
    ) -> Self {
        Self {
            model: problem.label.clone(),
            n: problem.dim() - 1,
            tau,
            g_max: problem.g_max,
            family: family.label(),
            fidelity: result.best_fidelity,
            best_x: result.best_x.clone(),
            seed: result.seed,
        }
    }
}

/// Hooks that let a caller cache completed grid points (resumable runs) and
/// stream records out as they are produced, in deterministic scan order.
pub struct ScanSink<'a, S: Real> {
    /// Returns the completed record for `(n, tau, g_max)`, if any.
    pub lookup: &'a dyn Fn(usize, S, S) -> Option<ScanRecord<S>>,
    /// Called once per grid point, cached or fresh, in scan order.
    pub emit: &'a mut dyn FnMut(&ScanRecord<S>) -> Result<()>,
}

impl<'a, S: Real> ScanSink<'a, S> {
    fn obtain(
        &mut self,
        problem: &ControlProblem<S>,
        family: &ProtocolFamily,
        tau: S,
        config: &ProtocolOptimizeConfig<S>,
    ) -> Result<ScanRecord<S>> {
        let record = match (self.lookup)(problem.dim() - 1, tau, problem.g_max) {
            Some(cached) => cached,
            None => {
                let result = optimize_protocol_with(problem, family, tau, config)?;
                ScanRecord::from_result(problem, family, tau, &result)
            }
        };
        (self.emit)(&record)?;
        Ok(record)
    }
}

/// Optimizes the family at every duration in `tau_list`; one record per
/// duration, each an independent optimization (no warm starting).
pub fn scan_tau<S: Real>(
    problem: &ControlProblem<S>,
    family: &ProtocolFamily,
    tau_list: &[S],
    restarts: u32,
    seed: u64,
) -> Result<Vec<ScanRecord<S>>> {
    let mut config = ProtocolOptimizeConfig::for_family(family, seed);
    config.restarts = restarts;
    scan_tau_with(problem, family, tau_list, &config)
}

pub fn scan_tau_with<S: Real>(
    problem: &ControlProblem<S>,
    family: &ProtocolFamily,
    tau_list: &[S],
    config: &ProtocolOptimizeConfig<S>,
) -> Result<Vec<ScanRecord<S>>> {
    let mut emit = |_: &ScanRecord<S>| Ok(());
    let mut sink = ScanSink {
        lookup: &|_, _, _| None,
        emit: &mut emit,
    };
    scan_tau_sink(problem, family, tau_list, config, &mut sink)
}

pub fn scan_tau_sink<S: Real>(
    problem: &ControlProblem<S>,
    family: &ProtocolFamily,
    tau_list: &[S],
    config: &ProtocolOptimizeConfig<S>,
    sink: &mut ScanSink<S>,
) -> Result<Vec<ScanRecord<S>>> {
    validate_tau_list(tau_list)?;
    tau_list
        .iter()
        .enumerate()
        .map(|(idx, &tau)| {
            let mut point_config = *config;
            point_config.seed = sub_seed(config.seed, idx as u64);
            sink.obtain(problem, family, tau, &point_config)
        })
        .collect()
}

fn validate_tau_list<S: Real>(tau_list: &[S]) -> Result<()> {
    if tau_list.is_empty() {
        return Err(Error::invalid("tau_list", "need at least one duration"));
    }
    for w in tau_list.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::invalid("tau_list", "durations must be ascending"));
        }
    }
    if tau_list[0] <= S::zero() {
        return Err(Error::invalid("tau_list", "durations must be positive"));
    }
    Ok(())
}

/// Criterion deciding the minimal time from a fidelity-vs-duration scan.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub enum TauStarCriterion<S: Real> {
    /// First duration whose fidelity reaches the level, by linear
    /// interpolation between bracketing records. The reference level is
    /// 0.998.
    Threshold(S),
    /// Duration of the sharpest concave bend of `F(tau)` (most negative
    /// discrete second difference), searched after the fidelity first
    /// exceeds 0.9. Records must form a uniform grid for this criterion.
    Kink,
}

impl<S: Real> TauStarCriterion<S> {
    pub fn default_threshold() -> Self {
        Self::Threshold(S::of(0.998))
    }
}

/// Extracts the minimal time from records of one scan, ascending in `tau`.
pub fn extract_tau_star<S: Real>(
    records: &[ScanRecord<S>],
    criterion: TauStarCriterion<S>,
) -> Result<S> {
    if records.is_empty() {
        return Err(Error::invalid("records", "no scan records"));
    }
    match criterion {
        TauStarCriterion::Threshold(level) => {
            if records[0].fidelity >= level {
                return Ok(records[0].tau);
            }
            for w in records.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                if b.fidelity >= level {
                    let span = b.fidelity - a.fidelity;
                    if span <= S::zero() {
                        return Ok(b.tau);
                    }
                    let frac = (level - a.fidelity) / span;
                    return Ok(a.tau + frac * (b.tau - a.tau));
                }
            }
            Err(Error::ThresholdNotReached {
                max_fidelity: records
                    .iter()
                    .map(|r| r.fidelity.to_f64_value())
                    .fold(f64::NEG_INFINITY, f64::max),
            })
        }
        TauStarCriterion::Kink => {
            let level = S::of(0.9);
            let start = records
                .iter()
                .position(|r| r.fidelity > level)
                .ok_or(Error::NoKink)?;
            let d2_at = |i: usize| -> S {
                records[i + 1].fidelity - S::of(2.0) * records[i].fidelity
                    + records[i - 1].fidelity
            };
            let mut best: Option<(S, usize)> = None; // (second difference, index)
            for i in start.max(1)..records.len() - 1 {
                let d2 = d2_at(i);
                if best.map(|(b, _)| d2 < b).unwrap_or(true) {
                    best = Some((d2, i));
                }
            }
            let (d2, i) = match best {
                Some((d2, i)) if d2 < -S::of(1e-12) => (d2, i),
                _ => return Err(Error::NoKink),
            };
            // sub-grid refinement: parabolic vertex through the neighboring
            // second differences, clamped to half a grid step
            if i >= 2 && i + 2 < records.len() {
                let dm = d2_at(i - 1);
                let dp = d2_at(i + 1);
                let denom = dm - S::of(2.0) * d2 + dp;
                if denom > S::zero() {
                    let delta = (S::of(0.5) * (dm - dp) / denom)
                        .max(S::of(-0.5))
                        .min(S::of(0.5));
                    let tau = records[i].tau;
                    let step = if delta >= S::zero() {
                        records[i + 1].tau - tau
                    } else {
                        tau - records[i - 1].tau
                    };
                    return Ok(tau + delta * step);
                }
            }
            Ok(records[i].tau)
        }
    }
}

/// Power-law fit `y = amplitude * N^(-exponent)` by least squares in log-log
/// space.
#[derive(Clone, Debug, Serialize)]
pub struct ScalingFit<S: Real> {
    /// Exponent `alpha` in `y ~ N^(-alpha)`.
    pub exponent: S,
    pub amplitude: S,
    /// Least-squares standard error of the fitted exponent.
    pub standard_error: S,
    pub points: Vec<(usize, S)>,
}

/// Fits `log y = log a - alpha log N`.
pub fn fit_power_law<S: Real>(points: &[(usize, S)]) -> Result<ScalingFit<S>> {
    if points.len() < 2 {
        return Err(Error::invalid("points", "need at least two points to fit"));
    }
    let n = S::of(points.len() as f64);
    let xs: Vec<S> = points.iter().map(|&(k, _)| S::of(k as f64).ln()).collect();
    let ys: Vec<S> = points
        .iter()
        .map(|&(_, y)| {
            if y <= S::zero() {
                Err(Error::invalid("points", "power-law fit needs positive values"))
            } else {
                Ok(y.ln())
            }
        })
        .collect::<Result<Vec<S>>>()?;
    let mean_x = xs.iter().copied().sum::<S>() / n;
    let mean_y = ys.iter().copied().sum::<S>() / n;
    let sxx = xs.iter().map(|&x| (x - mean_x) * (x - mean_x)).sum::<S>();
    if sxx <= S::zero() {
        return Err(Error::invalid("points", "degenerate abscissae"));
    }
    let sxy = xs
        .iter()
        .zip(ys.iter())
        .map(|(&x, &y)| (x - mean_x) * (y - mean_y))
        .sum::<S>();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let dof = points.len().saturating_sub(2);
    let ss_res = xs
        .iter()
        .zip(ys.iter())
        .map(|(&x, &y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum::<S>();
    let standard_error = if dof > 0 {
        (ss_res / S::of(dof as f64) / sxx).sqrt()
    } else {
        S::zero()
    };
    Ok(ScalingFit {
        exponent: -slope,
        amplitude: intercept.exp(),
        standard_error,
        points: points.to_vec(),
    })
}

/// Per-size scan data of the scaling study.
#[derive(Clone, Debug, Serialize)]
pub struct SizeScan<S: Real> {
    pub n: usize,
    pub gap: S,
    /// All optimized records, ascending in tau (bracketing, bisection and
    /// the uniform kink grid combined).
    pub records: Vec<ScanRecord<S>>,
    /// The uniform-grid subset used by the kink criterion.
    pub kink_records: Vec<ScanRecord<S>>,
    /// Spacing of the uniform kink grid.
    pub kink_grid_spacing: S,
}

/// Behaviour knobs of the scaling study.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ScalingStudyConfig<S: Real> {
    pub threshold: S,
    /// Relative width at which the threshold bisection stops.
    pub bisect_rel_width: S,
    /// Number of points in the uniform kink grid.
    pub kink_points: usize,
    /// Half-width of the kink grid relative to the bracketed minimal time.
    pub kink_span: S,
}

impl<S: Real> Default for ScalingStudyConfig<S> {
    fn default() -> Self {
        Self {
            threshold: S::of(0.998),
            bisect_rel_width: S::of(1e-3),
            kink_points: 21,
            kink_span: S::of(0.3),
        }
    }
}

/// Runs the per-size scans of the minimal-time scaling study: coarse
/// geometric bracketing of the threshold crossing, bisection to the
/// configured relative width, then a uniform grid around the crossing for
/// the kink criterion.
pub fn scaling_scan<S: Real>(
    n_list: &[usize],
    g_max: S,
    family: &ProtocolFamily,
    restarts: u32,
    seed: u64,
    study: &ScalingStudyConfig<S>,
    optimize: &ProtocolOptimizeConfig<S>,
) -> Result<Vec<SizeScan<S>>> {
    let mut emit = |_: &ScanRecord<S>| Ok(());
    let mut sink = ScanSink {
        lookup: &|_, _, _| None,
        emit: &mut emit,
    };
    scaling_scan_sink(n_list, g_max, family, restarts, seed, study, optimize, &mut sink)
}

#[allow(clippy::too_many_arguments)]
pub fn scaling_scan_sink<S: Real>(
    n_list: &[usize],
    g_max: S,
    family: &ProtocolFamily,
    restarts: u32,
    seed: u64,
    study: &ScalingStudyConfig<S>,
    optimize: &ProtocolOptimizeConfig<S>,
    sink: &mut ScanSink<S>,
) -> Result<Vec<SizeScan<S>>> {
    if n_list.is_empty() {
        return Err(Error::invalid("n_list", "need at least one size"));
    }
    for w in n_list.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::invalid("n_list", "sizes must be ascending"));
        }
    }
    n_list
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            if n < 2 {
                return Err(Error::invalid("n_list", "LMG sizes must be >= 2"));
            }
            let problem = lmg_problem(n, S::zero(), S::one(), g_max)?;
            let size_seed = sub_seed(seed, i as u64);
            scan_one_size(&problem, n, family, restarts, size_seed, study, optimize, sink)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn scan_one_size<S: Real>(
    problem: &ControlProblem<S>,
    n: usize,
    family: &ProtocolFamily,
    restarts: u32,
    seed: u64,
    study: &ScalingStudyConfig<S>,
    optimize: &ProtocolOptimizeConfig<S>,
    sink: &mut ScanSink<S>,
) -> Result<SizeScan<S>> {
    let mut counter = 0u64;
    let mut records: Vec<ScanRecord<S>> = Vec::new();
    let run_point = |tau: S,
                         counter: &mut u64,
                         records: &mut Vec<ScanRecord<S>>,
                         sink: &mut ScanSink<S>|
     -> Result<S> {
        let mut config = *optimize;
        config.restarts = restarts;
        config.seed = sub_seed(seed, *counter);
        *counter += 1;
        let record = sink.obtain(problem, family, tau, &config)?;
        let fidelity = record.fidelity;
        records.push(record);
        Ok(fidelity)
    };

    // coarse geometric bracket around the threshold crossing; empirically
    // the crossing sits near 0.6 * N^0.13 for the critical LMG sweep
    let mut guess = S::of(0.6) * S::of(n as f64).powf(S::of(0.13));
    let ratio = S::of(1.3);
    let mut lo;
    let mut hi;
    let f_guess = run_point(guess, &mut counter, &mut records, sink)?;
    if f_guess >= study.threshold {
        hi = guess;
        loop {
            guess = guess / ratio;
            let f = run_point(guess, &mut counter, &mut records, sink)?;
            if f < study.threshold {
                lo = guess;
                break;
            }
            hi = guess;
            if guess < S::of(1e-3) {
                return Err(Error::invalid(
                    "scaling",
                    format!("threshold reached at arbitrarily small tau for N={n}"),
                ));
            }
        }
    } else {
        lo = guess;
        loop {
            guess = guess * ratio;
            let f = run_point(guess, &mut counter, &mut records, sink)?;
            if f >= study.threshold {
                hi = guess;
                break;
            }
            lo = guess;
            if guess > S::of(1e3) {
                return Err(Error::ThresholdNotReached {
                    max_fidelity: records
                        .iter()
                        .map(|r| r.fidelity.to_f64_value())
                        .fold(f64::NEG_INFINITY, f64::max),
                });
            }
        }
    }

    // bisection to the configured relative width
    while (hi - lo) / (S::of(0.5) * (hi + lo)) > study.bisect_rel_width {
        let mid = S::of(0.5) * (hi + lo);
        let f = run_point(mid, &mut counter, &mut records, sink)?;
        if f >= study.threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let tau_star_estimate = S::of(0.5) * (hi + lo);

    // uniform grid around the crossing for the kink criterion
    let span = study.kink_span * tau_star_estimate;
    let grid_lo = (tau_star_estimate - span).max(tau_star_estimate * S::of(0.05));
    let points = study.kink_points.max(5);
    let spacing = S::of(2.0) * span / S::of((points - 1) as f64);
    let mut kink_records: Vec<ScanRecord<S>> = Vec::with_capacity(points);
    for k in 0..points {
        let tau = grid_lo + spacing * S::of(k as f64);
        let before = records.len();
        run_point(tau, &mut counter, &mut records, sink)?;
        kink_records.push(records[before].clone());
    }

    records.sort_by(|a, b| a.tau.partial_cmp(&b.tau).expect("non-NaN tau"));
    kink_records.sort_by(|a, b| a.tau.partial_cmp(&b.tau).expect("non-NaN tau"));
    Ok(SizeScan {
        n,
        gap: critical_gap(n)?,
        records,
        kink_records,
        kink_grid_spacing: spacing,
    })
}

/// Fits `tau* Delta_min` against `N` from per-size scans under the given
/// criterion.
pub fn fit_scaling<S: Real>(
    scans: &[SizeScan<S>],
    criterion: TauStarCriterion<S>,
) -> Result<ScalingFit<S>> {
    let points: Vec<(usize, S)> = scans
        .iter()
        .map(|scan| {
            let records = match criterion {
                TauStarCriterion::Kink => &scan.kink_records,
                TauStarCriterion::Threshold(_) => &scan.records,
            };
            extract_tau_star(records, criterion).map(|t| (scan.n, t * scan.gap))
        })
        .collect::<Result<Vec<_>>>()?;
    fit_power_law(&points)
}

/// End-to-end scaling study: per-size scans plus the fit for one criterion.
pub fn scaling_study<S: Real>(
    n_list: &[usize],
    g_max: S,
    family: &ProtocolFamily,
    restarts: u32,
    seed: u64,
    criterion: TauStarCriterion<S>,
) -> Result<ScalingFit<S>> {
    let study = ScalingStudyConfig::default();
    let optimize = ProtocolOptimizeConfig::for_family(family, seed);
    let scans = scaling_scan(n_list, g_max, family, restarts, seed, &study, &optimize)?;
    fit_scaling(&scans, criterion)
}

/// Full duration scan per energy bound; record order follows the input
/// lists.
pub fn energy_bound_study<S: Real>(
    n: usize,
    g_max_list: &[S],
    family: &ProtocolFamily,
    tau_list: &[S],
    restarts: u32,
    seed: u64,
) -> Result<Vec<ScanRecord<S>>> {
    if g_max_list.is_empty() {
        return Err(Error::invalid("g_max_list", "need at least one bound"));
    }
    validate_tau_list(tau_list)?;
    let mut records = Vec::with_capacity(g_max_list.len() * tau_list.len());
    for (bi, &g_max) in g_max_list.iter().enumerate() {
        let problem = lmg_problem(n, S::zero(), S::one(), g_max)?;
        let bound_seed = sub_seed(seed, bi as u64);
        records.extend(scan_tau(&problem, family, tau_list, restarts, bound_seed)?);
    }
    Ok(records)
}

/// Fidelity map over a 2D grid; `values[i * taus.len() + j]` corresponds to
/// `(params[i], taus[j])`.
#[derive(Clone, Debug, Serialize)]
pub struct FidelityMap<S: Real> {
    pub taus: Vec<S>,
    pub params: Vec<S>,
    pub values: Vec<S>,
}

impl<S: Real> FidelityMap<S> {
    pub fn value(&self, param_idx: usize, tau_idx: usize) -> S {
        self.values[param_idx * self.taus.len() + tau_idx]
    }

    /// Smallest duration at which any parameter value reaches `level`.
    pub fn min_tau_reaching(&self, level: S) -> Option<S> {
        for (j, &tau) in self.taus.iter().enumerate() {
            for i in 0..self.params.len() {
                if self.value(i, j) > level {
                    return Some(tau);
                }
            }
        }
        None
    }
}

/// Saturated double-bang scan: fidelity of `+g_max` until `fraction * tau`
/// then `-g_max`, over the full grid. No optimization involved.
pub fn saturated_scan<S: Real>(
    n: usize,
    g_max: S,
    tau_grid: &[S],
    t1_fraction_grid: &[S],
) -> Result<FidelityMap<S>> {
    if tau_grid.is_empty() || t1_fraction_grid.is_empty() {
        return Err(Error::invalid("grid", "grids must be nonempty"));
    }
    for &f in t1_fraction_grid {
        if f < S::zero() || f > S::one() {
            return Err(Error::invalid("t1_fraction_grid", "fractions must lie in [0, 1]"));
        }
    }
    let problem = lmg_problem(n, S::zero(), S::one(), g_max)?;
    grid_map(&problem, t1_fraction_grid, tau_grid, |fraction, tau| {
        Protocol::saturated_double_bang(fraction * tau, tau, g_max)
    })
}

/// Constant-protocol scan: fidelity of `g(t) = g` per `(g, tau)`.
pub fn constant_scan<S: Real>(n: usize, g_grid: &[S], tau_grid: &[S]) -> Result<FidelityMap<S>> {
    if tau_grid.is_empty() || g_grid.is_empty() {
        return Err(Error::invalid("grid", "grids must be nonempty"));
    }
    let bound = g_grid
        .iter()
        .fold(S::one(), |a, &g| a.max(g.abs()))
        .max(S::one());
    let problem = lmg_problem(n, S::zero(), S::one(), bound)?;
    grid_map(&problem, g_grid, tau_grid, |g, tau| {
        Protocol::constant(g, tau, bound)
    })
}

fn grid_map<S: Real>(
    problem: &ControlProblem<S>,
    params: &[S],
    taus: &[S],
    make: impl Fn(S, S) -> Protocol<S> + Sync,
) -> Result<FidelityMap<S>> {
    let settings = EvolutionSettings::default();
    let values: Vec<S> = params
        .par_iter()
        .flat_map_iter(|&p| taus.iter().map(move |&tau| (p, tau)))
        .map(|(p, tau)| {
            cost_fidelity_with(problem, &make(p, tau), &settings).map(|c| c.fidelity)
        })
        .collect::<Result<Vec<S>>>()?;
    Ok(FidelityMap {
        taus: taus.to_vec(),
        params: params.to_vec(),
        values,
    })
}
