//! Dense complex matrices and the Hermitian eigensolver.
//!
//! The eigensolver reduces a Hermitian matrix to real symmetric tridiagonal
//! form with complex Householder reflections, then runs implicit-shift QL on
//! the tridiagonal part. The tridiagonal QL routine is shared with the Lanczos
//! code, which needs eigensystems of the small projected matrices it builds.

use num_complex::Complex;

use crate::error::Error;
use crate::real::Real;

/// Square complex matrix, row-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat<S: Real> {
    n: usize,
    data: Vec<Complex<S>>,
}

impl<S: Real> CMat<S> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex::new(S::zero(), S::zero()); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = Complex::new(S::one(), S::zero());
        }
        m
    }

    /// Builds from a row-major list of entries; `data.len()` must be `n*n`.
    pub fn from_rows(n: usize, data: Vec<Complex<S>>) -> Self {
        assert_eq!(data.len(), n * n, "row-major data must have n*n entries");
        Self { n, data }
    }

    /// Builds a matrix from real row-major entries.
    pub fn from_real_rows(n: usize, data: &[S]) -> Self {
        assert_eq!(data.len(), n * n);
        Self {
            n,
            data: data.iter().map(|&x| Complex::new(x, S::zero())).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[Complex<S>] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<Complex<S>> {
        (0..self.n).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a.re == S::zero() && a.im == S::zero() {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[Complex<S>], y: &mut [Complex<S>]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            let mut acc = Complex::new(S::zero(), S::zero());
            for (a, b) in row.iter().zip(x.iter()) {
                acc = acc + a * b;
            }
            *yi = acc;
        }
    }

    /// Largest elementwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> S {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(S::zero(), S::max)
    }

    /// Largest modulus of any entry.
    pub fn max_abs(&self) -> S {
        self.data.iter().map(|a| a.norm()).fold(S::zero(), S::max)
    }

    /// Largest deviation from Hermiticity, `max |a_ij - conj(a_ji)|`.
    pub fn hermiticity_defect(&self) -> S {
        let mut worst = S::zero();
        for i in 0..self.n {
            for j in i..self.n {
                let dev = (self[(i, j)] - self[(j, i)].conj()).norm();
                worst = worst.max(dev);
            }
        }
        worst
    }

    /// `max |(U† U - I)_ij|`; zero for a unitary matrix.
    pub fn unitarity_defect(&self) -> S {
        self.adjoint().matmul(self).max_abs_diff(&Self::identity(self.n))
    }
}

impl<S: Real> std::ops::Index<(usize, usize)> for CMat<S> {
    type Output = Complex<S>;
    fn index(&self, (i, j): (usize, usize)) -> &Complex<S> {
        &self.data[i * self.n + j]
    }
}

impl<S: Real> std::ops::IndexMut<(usize, usize)> for CMat<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<S> {
        &mut self.data[i * self.n + j]
    }
}

/// Implicit-shift QL iteration on a real symmetric tridiagonal matrix.
///
/// `diag` holds the diagonal, `off[i]` couples rows `i` and `i+1`
/// (`off[n-1]` is scratch and must be zero on entry). Eigenvalues land in
/// `diag`, unsorted. Every plane rotation applied is reported through
/// `rotate(i, c, s)` so the caller can accumulate eigenvectors in whatever
/// representation it keeps (complex columns here, real columns in Lanczos).
pub fn sym_tridiag_ql<S: Real>(
    diag: &mut [S],
    off: &mut [S],
    mut rotate: impl FnMut(usize, S, S),
) -> Result<(), Error> {
    let n = diag.len();
    assert_eq!(off.len(), n, "off-diagonal buffer must have length n");
    if n == 0 {
        return Ok(());
    }
    off[n - 1] = S::zero();
    let two = S::of(2.0);
    for l in 0..n {
        let mut iter = 0usize;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= S::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Eigensolver(format!(
                    "QL iteration failed to converge for eigenvalue {l} of {n}"
                )));
            }
            let mut g = (diag[l + 1] - diag[l]) / (two * off[l]);
            let mut r = g.hypot(S::one());
            let sign_r = if g >= S::zero() { r } else { -r };
            g = diag[m] - diag[l] + off[l] / (g + sign_r);
            let mut s = S::one();
            let mut c = S::one();
            let mut p = S::zero();
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == S::zero() {
                    diag[i + 1] = diag[i + 1] - p;
                    off[m] = S::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + two * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                rotate(i, c, s);
            }
            if underflow {
                continue;
            }
            diag[l] = diag[l] - p;
            off[l] = g;
            off[m] = S::zero();
        }
    }
    Ok(())
}

/// Full eigensystem of a real symmetric tridiagonal matrix.
///
/// Returns eigenvalues in ascending order and a row-major real matrix whose
/// columns are the matching eigenvectors.
pub fn sym_tridiag_eigensystem<S: Real>(
    diag: &[S],
    off: &[S],
) -> Result<(Vec<S>, Vec<S>), Error> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![S::zero(); n];
    if n > 1 {
        e[..n - 1].copy_from_slice(&off[..n - 1]);
    }
    // identity to accumulate rotations into
    let mut z = vec![S::zero(); n * n];
    for i in 0..n {
        z[i * n + i] = S::one();
    }
    sym_tridiag_ql(&mut d, &mut e, |i, c, s| {
        for row in z.chunks_exact_mut(n) {
            let f = row[i + 1];
            row[i + 1] = s * row[i] + c * f;
            row[i] = c * row[i] - s * f;
        }
    })?;
    // sort ascending, permuting columns
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("non-NaN eigenvalues"));
    let values: Vec<S> = order.iter().map(|&k| d[k]).collect();
    let mut vectors = vec![S::zero(); n * n];
    for (new_j, &old_j) in order.iter().enumerate() {
        for i in 0..n {
            vectors[i * n + new_j] = z[i * n + old_j];
        }
    }
    Ok((values, vectors))
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Returns eigenvalues in ascending order and a unitary matrix whose columns
/// are the eigenvectors, so that `A = V diag(w) V†`.
pub fn hermitian_eig<S: Real>(a: &CMat<S>) -> Result<(Vec<S>, CMat<S>), Error> {
    let n = a.dim();
    if n == 0 {
        return Ok((Vec::new(), CMat::zeros(0)));
    }
    let mut work = a.clone();
    let mut q = CMat::identity(n);

    // Householder reduction to tridiagonal form, acting on trailing blocks.
    for k in 0..n.saturating_sub(2) {
        let m = n - k - 1; // size of trailing block below row k
        let x: Vec<Complex<S>> = (0..m).map(|i| work[(k + 1 + i, k)]).collect();
        let norm_x = vec_norm(&x);
        if norm_x <= S::epsilon() * work.max_abs() {
            continue;
        }
        let phase = if x[0].norm() == S::zero() {
            Complex::new(S::one(), S::zero())
        } else {
            x[0] / Complex::new(x[0].norm(), S::zero())
        };
        let alpha = -phase * Complex::new(norm_x, S::zero());
        let mut v = x.clone();
        v[0] = v[0] - alpha;
        let v_norm = vec_norm(&v);
        if v_norm <= S::epsilon() * norm_x {
            continue;
        }
        let inv = Complex::new(S::one() / v_norm, S::zero());
        for vi in v.iter_mut() {
            *vi = *vi * inv;
        }

        // Border column/row take their final values directly.
        work[(k + 1, k)] = alpha;
        work[(k, k + 1)] = alpha.conj();
        for i in 1..m {
            work[(k + 1 + i, k)] = Complex::new(S::zero(), S::zero());
            work[(k, k + 1 + i)] = Complex::new(S::zero(), S::zero());
        }

        // Two-sided update of the trailing block: B <- (I-2vv†) B (I-2vv†).
        let mut u = vec![Complex::new(S::zero(), S::zero()); m];
        for i in 0..m {
            let mut acc = Complex::new(S::zero(), S::zero());
            for j in 0..m {
                acc = acc + work[(k + 1 + i, k + 1 + j)] * v[j];
            }
            u[i] = acc;
        }
        let mut gamma = Complex::new(S::zero(), S::zero());
        for i in 0..m {
            gamma = gamma + v[i].conj() * u[i];
        }
        let two = Complex::new(S::of(2.0), S::zero());
        let four_gamma = Complex::new(S::of(4.0), S::zero()) * gamma;
        for i in 0..m {
            for j in 0..m {
                let upd = two * (v[i] * u[j].conj() + u[i] * v[j].conj())
                    - four_gamma * (v[i] * v[j].conj());
                work[(k + 1 + i, k + 1 + j)] = work[(k + 1 + i, k + 1 + j)] - upd;
            }
        }

        // Q <- Q (I - 2vv†) on columns k+1.. .
        for row in 0..n {
            let mut w = Complex::new(S::zero(), S::zero());
            for j in 0..m {
                w = w + q[(row, k + 1 + j)] * v[j];
            }
            let tw = two * w;
            for j in 0..m {
                q[(row, k + 1 + j)] = q[(row, k + 1 + j)] - tw * v[j].conj();
            }
        }
    }

    // Chase the subdiagonal phases into Q so the tridiagonal matrix is real:
    // with d_0 = 1 and d_i = d_{i-1} * phase(t_{i-1}), the scaled basis
    // Q diag(d) turns every subdiagonal entry t_i into |t_i|.
    let mut d = vec![S::zero(); n];
    let mut e = vec![S::zero(); n];
    let mut carried = Complex::new(S::one(), S::zero());
    for i in 0..n {
        if i > 0 {
            let t = work[(i, i - 1)];
            let mag = t.norm();
            e[i - 1] = mag;
            if mag > S::zero() {
                carried = carried * (t / Complex::new(mag, S::zero()));
            }
            for row in 0..n {
                q[(row, i)] = q[(row, i)] * carried;
            }
        }
        d[i] = work[(i, i)].re;
    }

    sym_tridiag_ql(&mut d, &mut e, |i, c, s| {
        for row in 0..n {
            let f = q[(row, i + 1)];
            q[(row, i + 1)] = q[(row, i)].scale(s) + f.scale(c);
            q[(row, i)] = q[(row, i)].scale(c) - f.scale(s);
        }
    })?;

    // Ascending eigenvalue order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("non-NaN eigenvalues"));
    let values: Vec<S> = order.iter().map(|&k| d[k]).collect();
    let mut vectors = CMat::zeros(n);
    for (new_j, &old_j) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, new_j)] = q[(i, old_j)];
        }
    }
    Ok((values, vectors))
}

fn vec_norm<S: Real>(v: &[Complex<S>]) -> S {
    v.iter()
        .map(|z| z.norm_sqr())
        .fold(S::zero(), |a, b| a + b)
        .sqrt()
}
