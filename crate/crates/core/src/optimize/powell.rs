//! Powell's direction-set method with bounded Brent line minimizations.
//!
//! Each line search runs on the exact intersection of the search ray with
//! the box, so iterates never leave the feasible region. After every sweep
//! the direction of largest decrease may be replaced by the net sweep
//! displacement, per the classic acceptance test.

use crate::real::Real;

use super::{clamp_point, MinimizeOptions, MinimizeOutcome};

pub(crate) fn powell_min<S: Real>(
    f: &mut dyn FnMut(&[S]) -> S,
    x0: &[S],
    bounds: &[(S, S)],
    opts: &MinimizeOptions<S>,
) -> MinimizeOutcome<S> {
    let n = x0.len();
    let mut evals = 0usize;
    let mut x = x0.to_vec();
    clamp_point(&mut x, bounds);
    let mut fx = {
        evals += 1;
        f(&x)
    };
    if n == 0 {
        return MinimizeOutcome {
            x,
            f: fx,
            evaluations: evals,
            budget_exhausted: false,
        };
    }

    // initial directions: coordinate axes
    let mut dirs: Vec<Vec<S>> = (0..n)
        .map(|i| {
            let mut d = vec![S::zero(); n];
            d[i] = S::one();
            d
        })
        .collect();

    let max_sweeps = 200;
    let mut budget_exhausted = false;
    for _sweep in 0..max_sweeps {
        let sweep_start_x = x.clone();
        let sweep_start_f = fx;
        let mut biggest_drop = S::zero();
        let mut biggest_idx = 0usize;

        for (k, d) in dirs.iter().enumerate() {
            let before = fx;
            line_minimize(f, &mut x, &mut fx, d, bounds, opts, &mut evals);
            let drop = before - fx;
            if drop > biggest_drop {
                biggest_drop = drop;
                biggest_idx = k;
            }
            if evals >= opts.max_evals {
                budget_exhausted = true;
                break;
            }
        }

        let displacement = x
            .iter()
            .zip(sweep_start_x.iter())
            .map(|(a, b)| (*a - *b).abs())
            .fold(S::zero(), S::max);
        let decrease = sweep_start_f - fx;
        let converged = S::of(2.0) * decrease
            <= opts.fatol * (sweep_start_f.abs() + fx.abs()) + S::of(1e-300)
            || displacement < opts.xatol;
        if budget_exhausted || converged {
            break;
        }

        // extrapolated point test for the direction update
        let mut xe: Vec<S> = x
            .iter()
            .zip(sweep_start_x.iter())
            .map(|(a, b)| *a + (*a - *b))
            .collect();
        clamp_point(&mut xe, bounds);
        evals += 1;
        let fe = f(&xe);
        if fe < sweep_start_f {
            let two = S::of(2.0);
            let t = two * (sweep_start_f - two * fx + fe)
                * (sweep_start_f - fx - biggest_drop).powi(2)
                - biggest_drop * (sweep_start_f - fe).powi(2);
            if t < S::zero() {
                let mut new_dir: Vec<S> = x
                    .iter()
                    .zip(sweep_start_x.iter())
                    .map(|(a, b)| *a - *b)
                    .collect();
                let norm = new_dir
                    .iter()
                    .map(|v| *v * *v)
                    .fold(S::zero(), |a, b| a + b)
                    .sqrt();
                if norm > S::zero() {
                    for v in new_dir.iter_mut() {
                        *v = *v / norm;
                    }
                    line_minimize(f, &mut x, &mut fx, &new_dir, bounds, opts, &mut evals);
                    dirs[biggest_idx] = new_dir;
                }
            }
        }
        if evals >= opts.max_evals {
            budget_exhausted = true;
            break;
        }
    }

    MinimizeOutcome {
        x,
        f: fx,
        evaluations: evals,
        budget_exhausted,
    }
}

/// Minimizes along `x + alpha d` within the box; updates `x` and `fx`.
fn line_minimize<S: Real>(
    f: &mut dyn FnMut(&[S]) -> S,
    x: &mut [S],
    fx: &mut S,
    d: &[S],
    bounds: &[(S, S)],
    opts: &MinimizeOptions<S>,
    evals: &mut usize,
) {
    let tiny = S::of(1e-300);
    let mut a_lo = S::neg_infinity();
    let mut a_hi = S::infinity();
    for i in 0..x.len() {
        let (lb, ub) = bounds[i];
        if d[i] > tiny {
            a_hi = a_hi.min((ub - x[i]) / d[i]);
            a_lo = a_lo.max((lb - x[i]) / d[i]);
        } else if d[i] < -tiny {
            a_hi = a_hi.min((lb - x[i]) / d[i]);
            a_lo = a_lo.max((ub - x[i]) / d[i]);
        }
    }
    if !a_lo.is_finite() || !a_hi.is_finite() {
        // direction is numerically zero or the box is unbounded: skip
        return;
    }
    a_lo = a_lo.min(S::zero());
    a_hi = a_hi.max(S::zero());
    if a_hi - a_lo <= S::of(1e-15) {
        return;
    }
    let mut probe = vec![S::zero(); x.len()];
    let mut phi = |alpha: S, evals: &mut usize| -> S {
        for (p, (xi, di)) in probe.iter_mut().zip(x.iter().zip(d.iter())) {
            *p = *xi + alpha * *di;
        }
        clamp_point(&mut probe, bounds);
        *evals += 1;
        f(&probe)
    };
    let line_tol = opts.xatol.max(S::of(1e-11));
    let remaining = opts.max_evals.saturating_sub(*evals).max(1);
    let (alpha, f_alpha) = fminbound(&mut phi, a_lo, a_hi, line_tol, remaining.min(100), evals);
    if f_alpha < *fx {
        for (xi, di) in x.iter_mut().zip(d.iter()) {
            *xi = *xi + alpha * *di;
        }
        clamp_point(x, bounds);
        *fx = f_alpha;
    }
}

/// Bounded scalar minimization by golden-section search with successive
/// parabolic interpolation.
fn fminbound<S: Real>(
    phi: &mut dyn FnMut(S, &mut usize) -> S,
    a0: S,
    b0: S,
    xatol: S,
    max_iter: usize,
    evals: &mut usize,
) -> (S, S) {
    let mut a = a0;
    let mut b = b0;
    let sqrt_eps = S::epsilon().sqrt();
    let golden = S::of(0.5) * (S::of(3.0) - S::of(5.0).sqrt());

    let mut xf = a + golden * (b - a);
    let mut nfc = xf;
    let mut fulc = xf;
    let mut rat = S::zero();
    let mut e = S::zero();
    let mut fx = phi(xf, evals);
    let mut fnfc = fx;
    let mut ffulc = fx;
    let mut iters = 1usize;

    let mut xm = S::of(0.5) * (a + b);
    let mut tol1 = sqrt_eps * xf.abs() + xatol / S::of(3.0);
    let mut tol2 = S::of(2.0) * tol1;

    while (xf - xm).abs() > tol2 - S::of(0.5) * (b - a) {
        let mut use_golden = true;
        if e.abs() > tol1 {
            // parabolic fit through (xf, nfc, fulc)
            let r = (xf - nfc) * (fx - ffulc);
            let mut q = (xf - fulc) * (fx - fnfc);
            let mut p = (xf - fulc) * q - (xf - nfc) * r;
            q = S::of(2.0) * (q - r);
            if q > S::zero() {
                p = -p;
            }
            q = q.abs();
            let r_prev = e;
            e = rat;
            if p.abs() < (S::of(0.5) * q * r_prev).abs()
                && p > q * (a - xf)
                && p < q * (b - xf)
            {
                rat = p / q;
                let x_try = xf + rat;
                use_golden = false;
                if (x_try - a) < tol2 || (b - x_try) < tol2 {
                    let sign = if xm - xf >= S::zero() { S::one() } else { -S::one() };
                    rat = tol1 * sign;
                }
            }
        }
        if use_golden {
            e = if xf >= xm { a - xf } else { b - xf };
            rat = golden * e;
        }
        let sign = if rat >= S::zero() { S::one() } else { -S::one() };
        let x = xf + sign * rat.abs().max(tol1);
        let fu = phi(x, evals);
        iters += 1;

        if fu <= fx {
            if x >= xf {
                a = xf;
            } else {
                b = xf;
            }
            fulc = nfc;
            ffulc = fnfc;
            nfc = xf;
            fnfc = fx;
            xf = x;
            fx = fu;
        } else {
            if x < xf {
                a = x;
            } else {
                b = x;
            }
            if fu <= fnfc || nfc == xf {
                fulc = nfc;
                ffulc = fnfc;
                nfc = x;
                fnfc = fu;
            } else if fu <= ffulc || fulc == xf || fulc == nfc {
                fulc = x;
                ffulc = fu;
            }
        }
        xm = S::of(0.5) * (a + b);
        tol1 = sqrt_eps * xf.abs() + xatol / S::of(3.0);
        tol2 = S::of(2.0) * tol1;
        if iters >= max_iter {
            break;
        }
    }
    (xf, fx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(max_evals: usize) -> MinimizeOptions<f64> {
        MinimizeOptions {
            max_evals,
            xatol: 1e-10,
            fatol: 1e-12,
        }
    }

    #[test]
    fn separable_quadratic_single_sweep() {
        let c = [1.5, -2.0, 0.5];
        let mut count = 0usize;
        let mut f = |x: &[f64]| {
            count += 1;
            x.iter()
                .zip(c.iter())
                .map(|(xi, ci)| (xi - ci).powi(2))
                .sum::<f64>()
        };
        let out = powell_min(&mut f, &[0.0, 0.0, 0.0], &[(-5.0, 5.0); 3], &opts(5000));
        for (xi, ci) in out.x.iter().zip(c.iter()) {
            assert!((xi - ci).abs() < 1e-8, "x = {:?}", out.x);
        }
    }

    #[test]
    fn rosenbrock_2d() {
        let mut f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let out = powell_min(&mut f, &[-1.2, 1.0], &[(-5.0, 5.0), (-5.0, 5.0)], &opts(20000));
        assert!((out.x[0] - 1.0).abs() < 1e-4, "x = {:?}", out.x);
        assert!((out.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn constant_objective_terminates_quickly() {
        let mut f = |_: &[f64]| 3.25;
        let out = powell_min(&mut f, &[0.4, -0.2], &[(-1.0, 1.0); 2], &opts(5000));
        assert_eq!(out.x, vec![0.4, -0.2]);
        assert!((out.f - 3.25).abs() < 1e-15);
        assert!(out.evaluations < 150, "used {} evals", out.evaluations);
    }

    #[test]
    fn boundary_optimum_reached() {
        let mut f = |x: &[f64]| -x[0];
        let out = powell_min(&mut f, &[0.1], &[(0.0, 1.0)], &opts(2000));
        assert!((out.x[0] - 1.0).abs() < 1e-9, "x = {}", out.x[0]);
    }
}
