//! States, Hermitian operators, propagators and fidelity.
//!
//! Operators are immutable after construction; the eigendecomposition is
//! computed lazily exactly once behind a `OnceLock`, so operators can be
//! shared read-only across threads. All energies and times are expressed in
//! units of the model frequency scale (omega = 1 internally).

use std::sync::OnceLock;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, CMat};
use crate::real::Real;

/// Largest dimension for which full dense eigendecomposition is used for
/// ground states and propagators. Above this the matrix-free Lanczos paths
/// take over; the minimum-gap scaling study reaches dimension 2049 where
/// dense O(d^3) per evaluation is prohibitive.
pub const DENSE_EIG_DIM_MAX: usize = 512;

/// Two eigenvalues closer than this are flagged as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// Unit-norm complex state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<S: Real> {
    amps: Vec<Complex<S>>,
}

impl<S: Real> StateVector<S> {
    /// Normalizes the amplitudes; errors on the zero vector.
    pub fn new(amps: Vec<Complex<S>>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::invalid("amplitudes", "state must have dimension >= 1"));
        }
        let norm = vec_norm(&amps);
        if norm <= S::zero() {
            return Err(Error::invalid("amplitudes", "state has zero norm"));
        }
        let inv = S::one() / norm;
        let amps = amps.into_iter().map(|a| a.scale(inv)).collect();
        Ok(Self { amps })
    }

    /// Computational basis state `|index>` of the given dimension.
    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim, "basis index out of range");
        let mut amps = vec![Complex::new(S::zero(), S::zero()); dim];
        amps[index] = Complex::new(S::one(), S::zero());
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex<S>] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex<S>> {
        self.amps
    }

    pub fn norm(&self) -> S {
        vec_norm(&self.amps)
    }

    /// Inner product `<self|other>`.
    pub fn inner(&self, other: &Self) -> Result<Complex<S>> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
                context: "state inner product",
            });
        }
        let mut acc = Complex::new(S::zero(), S::zero());
        for (a, b) in self.amps.iter().zip(other.amps.iter()) {
            acc = acc + a.conj() * b;
        }
        Ok(acc)
    }

    /// Bloch vector `(<sx>, <sy>, <sz>)`; only defined for dimension 2.
    pub fn bloch(&self) -> Option<[S; 3]> {
        if self.dim() != 2 {
            return None;
        }
        let z = self.amps[0].conj() * self.amps[1];
        let two = S::of(2.0);
        Some([
            two * z.re,
            two * z.im,
            self.amps[0].norm_sqr() - self.amps[1].norm_sqr(),
        ])
    }

    pub(crate) fn from_raw_normalized(mut amps: Vec<Complex<S>>) -> Self {
        let norm = vec_norm(&amps);
        if norm > S::zero() {
            let inv = S::one() / norm;
            for a in amps.iter_mut() {
                *a = a.scale(inv);
            }
        }
        Self { amps }
    }
}

fn vec_norm<S: Real>(v: &[Complex<S>]) -> S {
    v.iter()
        .map(|z| z.norm_sqr())
        .fold(S::zero(), |a, b| a + b)
        .sqrt()
}

/// Real symmetric banded storage: diagonal plus bands above it.
///
/// `bands[k] = (offset, values)` with `values[i] = A[i, i + offset]`. This is
/// all the collective-spin models need (the LMG Hamiltonian couples `m` to
/// `m` and `m +/- 2` in the Dicke basis) and it makes matrix-vector products
/// O(dim), which carries the Lanczos paths to N = 2048.
#[derive(Clone, Debug, PartialEq)]
pub struct BandedSym<S: Real> {
    pub dim: usize,
    pub diag: Vec<S>,
    pub bands: Vec<(usize, Vec<S>)>,
}

impl<S: Real> BandedSym<S> {
    pub fn matvec(&self, x: &[Complex<S>], y: &mut [Complex<S>]) {
        let d = self.dim;
        for i in 0..d {
            y[i] = x[i].scale(self.diag[i]);
        }
        for (offset, values) in &self.bands {
            let off = *offset;
            for i in 0..d - off {
                let v = values[i];
                y[i] = y[i] + x[i + off].scale(v);
                y[i + off] = y[i + off] + x[i].scale(v);
            }
        }
    }

    fn gershgorin_bound(&self) -> S {
        let d = self.dim;
        let mut row_sum = vec![S::zero(); d];
        for (offset, values) in &self.bands {
            let off = *offset;
            for i in 0..d - off {
                let v = values[i].abs();
                row_sum[i] += v;
                row_sum[i + off] += v;
            }
        }
        (0..d)
            .map(|i| self.diag[i].abs() + row_sum[i])
            .fold(S::zero(), S::max)
    }

    fn element(&self, i: usize, j: usize) -> S {
        if i == j {
            return self.diag[i];
        }
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let off = hi - lo;
        for (offset, values) in &self.bands {
            if *offset == off {
                return values[lo];
            }
        }
        S::zero()
    }
}

#[derive(Clone, Debug)]
enum Repr<S: Real> {
    Dense(CMat<S>),
    Banded(BandedSym<S>),
}

/// Eigendecomposition with eigenvalues in ascending order.
#[derive(Clone, Debug)]
pub struct Eigendecomposition<S: Real> {
    pub values: Vec<S>,
    /// Unitary matrix whose columns are the eigenvectors.
    pub vectors: CMat<S>,
}

/// Dense or banded Hermitian operator with a cached eigendecomposition.
#[derive(Debug)]
pub struct HermitianOperator<S: Real> {
    repr: Repr<S>,
    dim: usize,
    eig: OnceLock<std::result::Result<Eigendecomposition<S>, Error>>,
    bound: OnceLock<S>,
}

impl<S: Real> Clone for HermitianOperator<S> {
    fn clone(&self) -> Self {
        Self {
            repr: self.repr.clone(),
            dim: self.dim,
            eig: OnceLock::new(),
            bound: OnceLock::new(),
        }
    }
}

impl<S: Real> HermitianOperator<S> {
    /// Builds from a dense matrix, verifying Hermiticity to 1e-12 relative to
    /// the largest entry, then symmetrizing to kill rounding asymmetry.
    pub fn from_dense(mat: CMat<S>) -> Result<Self> {
        let defect = mat.hermiticity_defect();
        let scale = mat.max_abs().max(S::one());
        if defect > S::of(1e-12) * scale {
            return Err(Error::NotHermitian {
                defect: defect.to_f64_value(),
            });
        }
        let n = mat.dim();
        let mut sym = mat;
        for i in 0..n {
            sym[(i, i)] = Complex::new(sym[(i, i)].re, S::zero());
            for j in i + 1..n {
                let avg = (sym[(i, j)] + sym[(j, i)].conj()).scale(S::of(0.5));
                sym[(i, j)] = avg;
                sym[(j, i)] = avg.conj();
            }
        }
        Ok(Self {
            dim: n,
            repr: Repr::Dense(sym),
            eig: OnceLock::new(),
            bound: OnceLock::new(),
        })
    }

    pub fn from_banded(banded: BandedSym<S>) -> Self {
        Self {
            dim: banded.dim,
            repr: Repr::Banded(banded),
            eig: OnceLock::new(),
            bound: OnceLock::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_banded(&self) -> bool {
        matches!(self.repr, Repr::Banded(_))
    }

    pub fn as_banded(&self) -> Option<&BandedSym<S>> {
        match &self.repr {
            Repr::Banded(b) => Some(b),
            Repr::Dense(_) => None,
        }
    }

    pub fn element(&self, i: usize, j: usize) -> Complex<S> {
        match &self.repr {
            Repr::Dense(m) => m[(i, j)],
            Repr::Banded(b) => Complex::new(b.element(i, j), S::zero()),
        }
    }

    pub fn to_dense(&self) -> CMat<S> {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            Repr::Banded(b) => {
                let mut m = CMat::zeros(self.dim);
                for i in 0..self.dim {
                    m[(i, i)] = Complex::new(b.diag[i], S::zero());
                }
                for (offset, values) in &b.bands {
                    for i in 0..self.dim - offset {
                        m[(i, i + offset)] = Complex::new(values[i], S::zero());
                        m[(i + offset, i)] = Complex::new(values[i], S::zero());
                    }
                }
                m
            }
        }
    }

    /// `y = H x`.
    pub fn matvec(&self, x: &[Complex<S>], y: &mut [Complex<S>]) {
        match &self.repr {
            Repr::Dense(m) => m.matvec(x, y),
            Repr::Banded(b) => b.matvec(x, y),
        }
    }

    /// Cheap upper bound on the spectral radius (Gershgorin).
    pub fn norm_bound(&self) -> S {
        *self.bound.get_or_init(|| match &self.repr {
            Repr::Banded(b) => b.gershgorin_bound(),
            Repr::Dense(m) => {
                let n = m.dim();
                let mut worst = S::zero();
                for i in 0..n {
                    let mut row = S::zero();
                    for j in 0..n {
                        row += m[(i, j)].norm();
                    }
                    worst = worst.max(row);
                }
                worst
            }
        })
    }

    /// Full dense eigendecomposition, computed once and cached.
    pub fn eigendecomposition(&self) -> Result<&Eigendecomposition<S>> {
        self.eig
            .get_or_init(|| {
                let dense = self.to_dense();
                hermitian_eig(&dense).map(|(values, vectors)| Eigendecomposition { values, vectors })
            })
            .as_ref()
            .map_err(|e| e.clone())
    }
}

/// Unitary time-evolution operator.
#[derive(Clone, Debug)]
pub struct Propagator<S: Real> {
    mat: CMat<S>,
}

impl<S: Real> Propagator<S> {
    pub fn matrix(&self) -> &CMat<S> {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn apply(&self, state: &StateVector<S>) -> Result<StateVector<S>> {
        if state.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: state.dim(),
                context: "propagator application",
            });
        }
        let mut out = vec![Complex::new(S::zero(), S::zero()); self.dim()];
        self.mat.matvec(state.amplitudes(), &mut out);
        Ok(StateVector::from_raw_normalized(out))
    }

    /// Composition `other * self` (apply `self` first).
    pub fn then(&self, other: &Self) -> Self {
        Self {
            mat: other.mat.matmul(&self.mat),
        }
    }

    pub fn unitarity_defect(&self) -> S {
        self.mat.unitarity_defect()
    }
}

/// `H0 + g H1`, preserving dense/banded structure where possible.
pub fn combine<S: Real>(
    h0: &HermitianOperator<S>,
    h1: &HermitianOperator<S>,
    g: S,
) -> Result<HermitianOperator<S>> {
    if h0.dim() != h1.dim() {
        return Err(Error::DimensionMismatch {
            left: h0.dim(),
            right: h1.dim(),
            context: "combine(H0, H1, g)",
        });
    }
    match (&h0.repr, &h1.repr) {
        (Repr::Banded(a), Repr::Banded(b)) => {
            let mut diag = a.diag.clone();
            for (x, y) in diag.iter_mut().zip(b.diag.iter()) {
                *x += g * *y;
            }
            let mut bands: Vec<(usize, Vec<S>)> = a.bands.clone();
            for (offset, values) in &b.bands {
                if let Some((_, existing)) = bands.iter_mut().find(|(o, _)| o == offset) {
                    for (x, y) in existing.iter_mut().zip(values.iter()) {
                        *x += g * *y;
                    }
                } else {
                    bands.push((*offset, values.iter().map(|&v| g * v).collect()));
                }
            }
            bands.sort_by_key(|(o, _)| *o);
            Ok(HermitianOperator::from_banded(BandedSym {
                dim: a.dim,
                diag,
                bands,
            }))
        }
        _ => {
            let a = h0.to_dense();
            let b = h1.to_dense();
            let n = a.dim();
            let mut out = CMat::zeros(n);
            let gz = Complex::new(g, S::zero());
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] = a[(i, j)] + gz * b[(i, j)];
                }
            }
            Ok(HermitianOperator {
                dim: n,
                repr: Repr::Dense(out),
                eig: OnceLock::new(),
                bound: OnceLock::new(),
            })
        }
    }
}

/// Ground state with a quasi-degeneracy flag.
#[derive(Clone, Debug)]
pub struct GroundState<S: Real> {
    pub energy: S,
    pub state: StateVector<S>,
    /// Set when the two lowest eigenvalues are closer than [`DEGENERACY_TOL`].
    pub degenerate: bool,
}

/// Ground state of `H`: dense eigendecomposition up to [`DENSE_EIG_DIM_MAX`],
/// matrix-free Lanczos above.
pub fn ground_state<S: Real>(h: &HermitianOperator<S>) -> Result<GroundState<S>> {
    if h.dim() <= DENSE_EIG_DIM_MAX || !h.is_banded() {
        let eig = h.eigendecomposition()?;
        let state = StateVector::from_raw_normalized(eig.vectors.column(0));
        let degenerate = eig.values.len() > 1
            && (eig.values[1] - eig.values[0]) < S::of(DEGENERACY_TOL);
        Ok(GroundState {
            energy: eig.values[0],
            state,
            degenerate,
        })
    } else {
        let pairs = crate::krylov::lanczos_lowest(h, 2, S::of(1e-12))?;
        let degenerate = pairs.values.len() > 1
            && (pairs.values[1] - pairs.values[0]) < S::of(DEGENERACY_TOL);
        Ok(GroundState {
            energy: pairs.values[0],
            state: StateVector::from_raw_normalized(pairs.vectors[0].clone()),
            degenerate,
        })
    }
}

/// Gap between the two lowest eigenvalues.
pub fn spectral_gap<S: Real>(h: &HermitianOperator<S>) -> Result<S> {
    if h.dim() < 2 {
        return Err(Error::invalid(
            "dimension",
            format!("spectral gap needs dimension >= 2, got {}", h.dim()),
        ));
    }
    if h.dim() <= DENSE_EIG_DIM_MAX || !h.is_banded() {
        let eig = h.eigendecomposition()?;
        Ok(eig.values[1] - eig.values[0])
    } else {
        let pairs = crate::krylov::lanczos_lowest(h, 2, S::of(1e-12))?;
        Ok(pairs.values[1] - pairs.values[0])
    }
}

/// `exp(-i H dt)` through the eigendecomposition: `V diag(e^{-i w dt}) V†`.
pub fn propagator<S: Real>(h: &HermitianOperator<S>, dt: S) -> Result<Propagator<S>> {
    let eig = h.eigendecomposition()?;
    let n = h.dim();
    // scale columns of V by the eigenvalue phases, then multiply by V†
    let mut scaled = eig.vectors.clone();
    for (k, &w) in eig.values.iter().enumerate() {
        let phase = Complex::from_polar(S::one(), -w * dt);
        for i in 0..n {
            scaled[(i, k)] = scaled[(i, k)] * phase;
        }
    }
    Ok(Propagator {
        mat: scaled.matmul(&eig.vectors.adjoint()),
    })
}

/// State fidelity `|<psi|phi>|^2`; symmetric and global-phase invariant.
pub fn fidelity<S: Real>(psi: &StateVector<S>, phi: &StateVector<S>) -> Result<S> {
    let overlap = psi.inner(phi)?;
    Ok(overlap.norm_sqr())
}
