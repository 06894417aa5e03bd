//! Independent numerical oracles used by the integration tests.
//!
//! Nothing here shares code with the library's eigendecomposition or
//! propagator paths: the Jacobi solver checks eigenvalues, the
//! scaling-and-squaring series checks matrix exponentials.

use bangopt::linalg::CMat;
use num_complex::Complex;

type C64 = Complex<f64>;

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations,
/// ascending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for sweep in 0..200 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-28 {
            break;
        }
        assert!(sweep < 199, "Jacobi oracle failed to converge");
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut vals: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
    vals
}

/// Eigenvalues of a complex Hermitian matrix through the real embedding
/// `[[Re, -Im], [Im, Re]]`, whose spectrum is the Hermitian spectrum with
/// every eigenvalue doubled.
pub fn hermitian_eigenvalues_oracle(m: &CMat<f64>) -> Vec<f64> {
    let n = m.dim();
    let mut big = vec![vec![0.0; 2 * n]; 2 * n];
    for i in 0..n {
        for j in 0..n {
            let z = m[(i, j)];
            big[i][j] = z.re;
            big[i + n][j + n] = z.re;
            big[i][j + n] = -z.im;
            big[i + n][j] = z.im;
        }
    }
    let doubled = jacobi_eigenvalues(big);
    // every eigenvalue appears twice; take every other one
    doubled.into_iter().step_by(2).collect()
}

/// `exp(A)` by scaling and squaring with a Taylor series; independent of the
/// eigendecomposition path.
pub fn expm_series(a: &CMat<f64>) -> CMat<f64> {
    let n = a.dim();
    let norm = a.max_abs() * n as f64;
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scale = 0.5f64.powi(squarings as i32);
    let mut scaled = CMat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            scaled[(i, j)] = a[(i, j)] * C64::new(scale, 0.0);
        }
    }
    let mut result = CMat::identity(n);
    let mut term = CMat::identity(n);
    for k in 1..60 {
        term = term.matmul(&scaled);
        for i in 0..n {
            for j in 0..n {
                term[(i, j)] = term[(i, j)] * C64::new(1.0 / k as f64, 0.0);
            }
        }
        let mut next = result.clone();
        for i in 0..n {
            for j in 0..n {
                next[(i, j)] = next[(i, j)] + term[(i, j)];
            }
        }
        result = next;
        if term.max_abs() < 1e-20 {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.matmul(&result);
    }
    result
}

/// `exp(-i H dt)` through the series oracle.
pub fn propagator_oracle(h: &CMat<f64>, dt: f64) -> CMat<f64> {
    let n = h.dim();
    let mut a = CMat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = h[(i, j)] * C64::new(0.0, -dt);
        }
    }
    expm_series(&a)
}
