//! Landau-Zener and Lipkin-Meshkov-Glick control problems.
//!
//! The LMG model lives in the maximal-spin Dicke sector |S=N/2, m>, so the
//! Hilbert space has dimension N+1. Both H0 = Sz and H1 = -Sx^2/N are real
//! and banded there (Sz diagonal, Sx^2 couples m to m and m +/- 2), which is
//! what makes the N = 2048 scaling study tractable: matrix-vector products
//! are O(N), and the Hamiltonian splits into even/odd parity blocks that are
//! plain symmetric tridiagonal matrices.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{sym_tridiag_ql, CMat};
use crate::quantum::{
    combine, fidelity, ground_state, BandedSym, HermitianOperator, StateVector, DENSE_EIG_DIM_MAX,
};
use crate::real::Real;
use crate::rng::SplitMix64;

/// Collective spin axis.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Pauli matrix as a 2x2 Hermitian operator.
pub fn pauli<S: Real>(axis: char) -> HermitianOperator<S> {
    let zero = Complex::new(S::zero(), S::zero());
    let one = Complex::new(S::one(), S::zero());
    let data = match axis {
        'x' => vec![zero, one, one, zero],
        'y' => vec![
            zero,
            Complex::new(S::zero(), -S::one()),
            Complex::new(S::zero(), S::one()),
            zero,
        ],
        'z' => vec![one, zero, zero, -one],
        _ => panic!("unknown Pauli axis {axis}"),
    };
    HermitianOperator::from_dense(CMat::from_rows(2, data)).expect("Pauli matrices are Hermitian")
}

/// `m` value of Dicke index `i`; the basis is ordered by descending `m`
/// (`i = 0` is `m = +S`), which makes `N = 1` reproduce the Pauli matrices
/// over two.
fn m_of_index<S: Real>(n: usize, i: usize) -> S {
    S::of(n as f64 / 2.0) - S::of(i as f64)
}

/// Sx coupling between Dicke indices `i` and `i+1`, i.e. half the ladder
/// amplitude `sqrt(S(S+1) - m(m-1))` at `m = m(i)`.
fn sx_coupling<S: Real>(n: usize, i: usize) -> S {
    let s = S::of(n as f64 / 2.0);
    let m = m_of_index::<S>(n, i);
    (s * (s + S::one()) - m * (m - S::one())).sqrt() * S::of(0.5)
}

/// Collective angular momentum operator `S_k` in the maximal-spin Dicke basis
/// `{|S=N/2, m>}`, dimension N+1, ordered by descending `m`.
pub fn collective_spin<S: Real>(n: usize, axis: Axis) -> Result<HermitianOperator<S>> {
    if n < 1 {
        return Err(Error::invalid("N", "collective spin needs N >= 1"));
    }
    let d = n + 1;
    let mut m = CMat::zeros(d);
    match axis {
        Axis::Z => {
            for i in 0..d {
                m[(i, i)] = Complex::new(m_of_index::<S>(n, i), S::zero());
            }
        }
        Axis::X => {
            for i in 0..d - 1 {
                let t = sx_coupling::<S>(n, i);
                m[(i + 1, i)] = Complex::new(t, S::zero());
                m[(i, i + 1)] = Complex::new(t, S::zero());
            }
        }
        Axis::Y => {
            for i in 0..d - 1 {
                let t = sx_coupling::<S>(n, i);
                m[(i + 1, i)] = Complex::new(S::zero(), t);
                m[(i, i + 1)] = Complex::new(S::zero(), -t);
            }
        }
    }
    HermitianOperator::from_dense(m)
}

/// One ground-state preparation task: drive the ground state of `H(g0)` to
/// the ground state of `H(g1)` under the bound `|g(t)| <= g_max`.
#[derive(Clone, Debug)]
pub struct ControlProblem<S: Real> {
    pub h0: HermitianOperator<S>,
    pub h1: HermitianOperator<S>,
    pub g0: S,
    pub g1: S,
    pub g_max: S,
    pub initial_state: StateVector<S>,
    pub target_state: StateVector<S>,
    pub label: String,
}

impl<S: Real> ControlProblem<S> {
    /// Builds a problem, computing the endpoint ground states.
    pub fn new(
        h0: HermitianOperator<S>,
        h1: HermitianOperator<S>,
        g0: S,
        g1: S,
        g_max: S,
        label: impl Into<String>,
    ) -> Result<Self> {
        check_bounds(g0, g1, g_max)?;
        let initial_state = ground_state(&combine(&h0, &h1, g0)?)?.state;
        let target_state = ground_state(&combine(&h0, &h1, g1)?)?.state;
        Ok(Self {
            h0,
            h1,
            g0,
            g1,
            g_max,
            initial_state,
            target_state,
            label: label.into(),
        })
    }

    fn with_states(
        h0: HermitianOperator<S>,
        h1: HermitianOperator<S>,
        g0: S,
        g1: S,
        g_max: S,
        initial_state: StateVector<S>,
        target_state: StateVector<S>,
        label: impl Into<String>,
    ) -> Result<Self> {
        check_bounds(g0, g1, g_max)?;
        Ok(Self {
            h0,
            h1,
            g0,
            g1,
            g_max,
            initial_state,
            target_state,
            label: label.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    /// `H(g) = H0 + g H1`.
    pub fn hamiltonian(&self, g: S) -> Result<HermitianOperator<S>> {
        combine(&self.h0, &self.h1, g)
    }

    /// Fidelity between the endpoint ground states (the do-nothing score).
    pub fn endpoint_overlap(&self) -> S {
        fidelity(&self.initial_state, &self.target_state).expect("matching dimensions")
    }
}

fn check_bounds<S: Real>(g0: S, g1: S, g_max: S) -> Result<()> {
    if g_max <= S::zero() {
        return Err(Error::invalid("g_max", "bound must be positive"));
    }
    if g0.abs() > g_max {
        return Err(Error::invalid(
            "g0",
            format!("|g0| = {g0} exceeds g_max = {g_max}"),
        ));
    }
    if g1.abs() > g_max {
        return Err(Error::invalid(
            "g1",
            format!("|g1| = {g1} exceeds g_max = {g_max}"),
        ));
    }
    Ok(())
}

/// Landau-Zener problem `H(g) = sigma_x + g sigma_z` (omega = 1 units).
/// The paper's experiment uses `g0 = -5, g1 = 0, g_max = 10`.
pub fn lz_problem<S: Real>(g0: S, g1: S, g_max: S) -> Result<ControlProblem<S>> {
    ControlProblem::new(pauli('x'), pauli('z'), g0, g1, g_max, "lz")
}

/// The paper's Landau-Zener setup: from `H(-5)` to the avoided crossing.
pub fn lz_default<S: Real>() -> ControlProblem<S> {
    lz_problem(S::of(-5.0), S::zero(), S::of(10.0)).expect("defaults satisfy bounds")
}

/// Banded `H0 = Sz` for the LMG model.
fn lmg_h0<S: Real>(n: usize) -> BandedSym<S> {
    let d = n + 1;
    BandedSym {
        dim: d,
        diag: (0..d).map(|i| m_of_index::<S>(n, i)).collect(),
        bands: Vec::new(),
    }
}

/// Banded `H1 = -Sx^2 / N` for the LMG model.
fn lmg_h1<S: Real>(n: usize) -> BandedSym<S> {
    let d = n + 1;
    let t: Vec<S> = (0..d - 1).map(|i| sx_coupling::<S>(n, i)).collect();
    let inv_n = S::one() / S::of(n as f64);
    let diag: Vec<S> = (0..d)
        .map(|i| {
            let below = if i > 0 { t[i - 1] * t[i - 1] } else { S::zero() };
            let above = if i < d - 1 { t[i] * t[i] } else { S::zero() };
            -(below + above) * inv_n
        })
        .collect();
    let band2: Vec<S> = (0..d - 2).map(|i| -t[i] * t[i + 1] * inv_n).collect();
    BandedSym {
        dim: d,
        diag,
        bands: vec![(2, band2)],
    }
}

/// Lipkin-Meshkov-Glick problem `H(g) = Sz - g Sx^2 / N` in the maximal-spin
/// sector. The paper's experiment drives `g0 = 0` to the critical point
/// `g1 = 1`.
pub fn lmg_problem<S: Real>(n: usize, g0: S, g1: S, g_max: S) -> Result<ControlProblem<S>> {
    if n < 2 {
        return Err(Error::invalid("N", "LMG needs N >= 2"));
    }
    let h0 = HermitianOperator::from_banded(lmg_h0::<S>(n));
    let h1 = HermitianOperator::from_banded(lmg_h1::<S>(n));
    if n + 1 <= DENSE_EIG_DIM_MAX {
        ControlProblem::new(h0, h1, g0, g1, g_max, "lmg")
    } else {
        // parity-block tridiagonal path for large N
        let initial = lmg_ground_state_vector(n, g0)?;
        let target = lmg_ground_state_vector(n, g1)?;
        ControlProblem::with_states(h0, h1, g0, g1, g_max, initial, target, "lmg")
    }
}

/// Which gap the LMG minimum-gap refers to when the parity sectors are
/// quasi-degenerate.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum GapMode {
    /// Gap between the two lowest levels of the full spectrum (default).
    Overall,
    /// Gap between the two lowest levels within the ground state's parity
    /// sector.
    ParitySector,
}

/// Even/odd parity blocks of `H_LMG(g)` as symmetric tridiagonal matrices.
/// Returns `(diag, off)` per block; the even block (Dicke indices 0, 2, ...)
/// contains the `g = 0` ground state.
fn lmg_parity_blocks<S: Real>(n: usize, g: S) -> [(Vec<S>, Vec<S>); 2] {
    let d = n + 1;
    let h0 = lmg_h0::<S>(n);
    let h1 = lmg_h1::<S>(n);
    let diag_full: Vec<S> = (0..d)
        .map(|i| h0.diag[i] + g * h1.diag[i])
        .collect();
    let band2_full: &[S] = &h1.bands[0].1;
    let mut blocks: [(Vec<S>, Vec<S>); 2] = [(Vec::new(), Vec::new()), (Vec::new(), Vec::new())];
    for parity in 0..2 {
        let idx: Vec<usize> = (parity..d).step_by(2).collect();
        let diag: Vec<S> = idx.iter().map(|&i| diag_full[i]).collect();
        let off: Vec<S> = idx
            .iter()
            .take(idx.len().saturating_sub(1))
            .map(|&i| g * band2_full[i])
            .collect();
        blocks[parity] = (diag, off);
    }
    blocks
}

fn tridiag_eigenvalues<S: Real>(diag: &[S], off: &[S]) -> Result<Vec<S>> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![S::zero(); n];
    if n > 1 {
        e[..n - 1].copy_from_slice(off);
    }
    sym_tridiag_ql(&mut d, &mut e, |_, _, _| {})?;
    d.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN eigenvalue"));
    Ok(d)
}

/// Solves `(T - sigma) x = b` in place for symmetric tridiagonal `T`,
/// Gaussian elimination with partial pivoting (fill-in limited to a second
/// superdiagonal). Near-singular pivots are nudged, which is exactly what
/// inverse iteration wants.
fn solve_shifted_tridiag<S: Real>(diag: &[S], off: &[S], sigma: S, b: &mut [S]) {
    let n = diag.len();
    let mut d: Vec<S> = diag.iter().map(|&x| x - sigma).collect();
    if n == 1 {
        let tiny = S::epsilon() * diag[0].abs().max(S::one());
        let piv = if d[0].abs() > tiny { d[0] } else { tiny };
        b[0] = b[0] / piv;
        return;
    }
    let mut du: Vec<S> = off.to_vec();
    let mut dl: Vec<S> = off.to_vec();
    let mut du2 = vec![S::zero(); n.saturating_sub(2)];
    let mut swapped = vec![false; n - 1];
    let scale = diag
        .iter()
        .chain(off.iter())
        .fold(S::one(), |a, &x| a.max(x.abs()));
    let tiny = S::epsilon() * scale;
    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            let piv = if d[i].abs() > tiny {
                d[i]
            } else {
                tiny.copysign(d[i])
            };
            d[i] = piv;
            let fact = dl[i] / piv;
            dl[i] = fact;
            d[i + 1] = d[i + 1] - fact * du[i];
            if i + 2 < n {
                du2[i] = S::zero();
            }
        } else {
            swapped[i] = true;
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            dl[i] = fact;
            let tmp = du[i];
            du[i] = d[i + 1];
            d[i + 1] = tmp - fact * d[i + 1];
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du[i + 1];
            }
        }
    }
    if d[n - 1].abs() <= tiny {
        d[n - 1] = tiny.copysign(d[n - 1]);
    }
    for i in 0..n - 1 {
        if swapped[i] {
            let tmp = b[i];
            b[i] = b[i + 1];
            b[i + 1] = tmp - dl[i] * b[i + 1];
        } else {
            b[i + 1] = b[i + 1] - dl[i] * b[i];
        }
    }
    b[n - 1] = b[n - 1] / d[n - 1];
    b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
    for i in (0..n.saturating_sub(2)).rev() {
        let mut rhs = b[i] - du[i] * b[i + 1];
        if i + 2 < n {
            rhs = rhs - du2[i] * b[i + 2];
        }
        b[i] = rhs / d[i];
    }
}

/// Ground eigenvector of a symmetric tridiagonal matrix with known lowest
/// eigenvalue, by inverse iteration.
fn tridiag_ground_vector<S: Real>(diag: &[S], off: &[S], lambda0: S) -> Result<Vec<S>> {
    let n = diag.len();
    let scale = diag
        .iter()
        .chain(off.iter())
        .fold(S::one(), |a, &x| a.max(x.abs()));
    let mut rng = SplitMix64::new(0x1ee7_57a7_e000_0001);
    let mut b: Vec<S> = (0..n).map(|_| rng.next_range(S::of(-0.5), S::of(0.5))).collect();
    normalize(&mut b);
    for attempt in 0..3 {
        let sigma = lambda0 + scale * S::epsilon() * S::of(10.0 * (attempt + 1) as f64);
        for _ in 0..4 {
            solve_shifted_tridiag(diag, off, sigma, &mut b);
            normalize(&mut b);
        }
        // residual check
        let mut res = S::zero();
        for i in 0..n {
            let mut t = (diag[i] - lambda0) * b[i];
            if i > 0 {
                t = t + off[i - 1] * b[i - 1];
            }
            if i + 1 < n {
                t = t + off[i] * b[i + 1];
            }
            res = res + t * t;
        }
        if res.sqrt() <= S::of(1e-10) * scale {
            return Ok(b);
        }
        // retry from a different start
        b = (0..n).map(|_| rng.next_range(S::of(-0.5), S::of(0.5))).collect();
        normalize(&mut b);
    }
    Err(Error::Eigensolver(
        "tridiagonal inverse iteration failed to converge".into(),
    ))
}

fn normalize<S: Real>(v: &mut [S]) {
    let n = v.iter().map(|&x| x * x).fold(S::zero(), |a, b| a + b).sqrt();
    if n > S::zero() {
        for x in v.iter_mut() {
            *x = *x / n;
        }
    }
}

/// LMG ground state at coupling `g`, through the parity-block tridiagonal
/// eigensolver. Works at any N; this is the production path above the dense
/// cutoff.
pub fn lmg_ground_state_vector<S: Real>(n: usize, g: S) -> Result<StateVector<S>> {
    let d = n + 1;
    let blocks = lmg_parity_blocks::<S>(n, g);
    let lowest: Vec<S> = blocks
        .iter()
        .map(|(diag, off)| tridiag_eigenvalues(diag, off).map(|v| v[0]))
        .collect::<Result<Vec<_>>>()?;
    let parity = if lowest[0] <= lowest[1] { 0 } else { 1 };
    let (diag, off) = &blocks[parity];
    let vec_block = tridiag_ground_vector(diag, off, lowest[parity])?;
    let mut amps = vec![Complex::new(S::zero(), S::zero()); d];
    for (p, &x) in vec_block.iter().enumerate() {
        amps[parity + 2 * p] = Complex::new(x, S::zero());
    }
    Ok(StateVector::from_raw_normalized(amps))
}

/// Spectral gap of `H_LMG(g)` at size N, using the parity-block structure.
pub fn lmg_gap<S: Real>(n: usize, g: S, mode: GapMode) -> Result<S> {
    if n < 2 {
        return Err(Error::invalid("N", "LMG needs N >= 2"));
    }
    let blocks = lmg_parity_blocks::<S>(n, g);
    let eigs: Vec<Vec<S>> = blocks
        .iter()
        .map(|(diag, off)| tridiag_eigenvalues(diag, off))
        .collect::<Result<Vec<_>>>()?;
    match mode {
        GapMode::Overall => {
            let mut lowest: Vec<S> = Vec::with_capacity(4);
            for e in &eigs {
                lowest.extend(e.iter().take(2).copied());
            }
            lowest.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN eigenvalue"));
            Ok(lowest[1] - lowest[0])
        }
        GapMode::ParitySector => {
            let ground_parity = if eigs[0][0] <= eigs[1][0] { 0 } else { 1 };
            let e = &eigs[ground_parity];
            if e.len() < 2 {
                return Err(Error::invalid("N", "parity sector has a single level"));
            }
            Ok(e[1] - e[0])
        }
    }
}

/// Minimum gap of the LMG path, i.e. the gap at the critical point `g = 1`,
/// between the two lowest levels of the full spectrum.
pub fn critical_gap<S: Real>(n: usize) -> Result<S> {
    lmg_gap(n, S::one(), GapMode::Overall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::spectral_gap;

    #[test]
    fn single_spin_is_half_pauli() {
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let s = collective_spin::<f64>(1, axis).unwrap();
            let p = pauli::<f64>(match axis {
                Axis::X => 'x',
                Axis::Y => 'y',
                Axis::Z => 'z',
            });
            for i in 0..2 {
                for j in 0..2 {
                    let expected = p.element(i, j) * Complex::new(0.5, 0.0);
                    assert!((s.element(i, j) - expected).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn spin_one_sx_entries() {
        // textbook spin-1 Sx has off-diagonal entries 1/sqrt(2)
        let sx = collective_spin::<f64>(2, Axis::X).unwrap();
        let expected = 1.0 / 2.0f64.sqrt();
        assert!((sx.element(0, 1).re - expected).abs() < 1e-14);
        assert!((sx.element(1, 2).re - expected).abs() < 1e-14);
        assert!(sx.element(0, 2).norm() < 1e-14);
    }

    #[test]
    fn spin_algebra_commutator() {
        // [Sx, Sy] = i Sz for a range of sizes
        for n in [1usize, 2, 3, 5, 8, 16] {
            let sx = collective_spin::<f64>(n, Axis::X).unwrap().to_dense();
            let sy = collective_spin::<f64>(n, Axis::Y).unwrap().to_dense();
            let sz = collective_spin::<f64>(n, Axis::Z).unwrap().to_dense();
            let comm = sx.matmul(&sy);
            let comm2 = sy.matmul(&sx);
            let d = n + 1;
            for i in 0..d {
                for j in 0..d {
                    let lhs = comm[(i, j)] - comm2[(i, j)];
                    let rhs = Complex::new(0.0, 1.0) * sz[(i, j)];
                    assert!((lhs - rhs).norm() < 1e-12, "N={n} entry ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn collective_spin_rejects_zero() {
        assert!(collective_spin::<f64>(0, Axis::X).is_err());
    }

    #[test]
    fn lz_default_states() {
        let p = lz_default::<f64>();
        // target = ground of sigma_x = (|0> - |1>)/sqrt(2) up to phase
        let t = p.target_state.amplitudes();
        assert!((t[0].norm() - 1.0 / 2.0f64.sqrt()).abs() < 1e-12);
        assert!((t[1].norm() - 1.0 / 2.0f64.sqrt()).abs() < 1e-12);
        let rel = (t[0] / t[1]).re;
        assert!((rel + 1.0).abs() < 1e-10, "relative sign should be -1, got {rel}");
        // initial state overlaps |0> (the g -> -inf ground state) at ~0.99
        let up = StateVector::basis(2, 0);
        let f = fidelity(&p.initial_state, &up).unwrap();
        assert!((f - 0.99).abs() < 0.003, "overlap with |0> was {f}");
    }

    #[test]
    fn lz_same_endpoints_unit_overlap() {
        let p = lz_problem::<f64>(0.0, 0.0, 10.0).unwrap();
        assert!((p.endpoint_overlap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lz_bound_violation_rejected() {
        assert!(lz_problem::<f64>(-5.0, 0.0, 4.0).is_err());
    }

    #[test]
    fn lmg_ground_state_at_zero_coupling() {
        let p = lmg_problem::<f64>(50, 0.0, 1.0, 1.7).unwrap();
        // ground of Sz is |m = -25>, the last basis index
        assert!((p.initial_state.amplitudes()[50].norm() - 1.0).abs() < 1e-12);
        // energy check via problem invariant: ground energy -N/2
        let gs = ground_state(&p.hamiltonian(0.0).unwrap()).unwrap();
        assert!((gs.energy + 25.0).abs() < 1e-12);
    }

    #[test]
    fn lmg_eight_spins_ground_energy() {
        let h = lmg_problem::<f64>(8, 0.0, 1.0, 2.0)
            .unwrap()
            .hamiltonian(0.0)
            .unwrap();
        let gs = ground_state(&h).unwrap();
        assert!((gs.energy + 4.0).abs() < 1e-13);
        // |S = 4, m = -4> sits at the last index
        assert!((gs.state.amplitudes()[8].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lmg_gap_at_zero_coupling_is_omega() {
        for n in [4usize, 10, 33] {
            let h = lmg_problem::<f64>(n, 0.0, 1.0, 2.0)
                .unwrap()
                .hamiltonian(0.0)
                .unwrap();
            let gap = spectral_gap(&h).unwrap();
            assert!((gap - 1.0).abs() < 1e-12, "N={n} gap {gap}");
        }
    }

    #[test]
    fn critical_point_near_one() {
        // Excitation gap over g in [0, 2] at N = 256 is minimized near the
        // QPT at g = 1. The parity-sector gap is the right probe here: past
        // the transition the overall gap collapses to the exponentially
        // small even/odd splitting of the broken phase instead of reopening.
        let mut best = (f64::INFINITY, 0.0);
        let mut g = 0.0;
        while g <= 2.0 + 1e-9 {
            let gap = lmg_gap::<f64>(256, g, GapMode::ParitySector).unwrap();
            if gap < best.0 {
                best = (gap, g);
            }
            g += 0.05;
        }
        assert!(
            (best.1 - 1.0).abs() < 0.15,
            "gap minimized at g = {} (gap {})",
            best.1,
            best.0
        );
    }

    #[test]
    fn critical_gap_monotone_in_n() {
        let gaps: Vec<f64> = [16usize, 32, 64, 128]
            .iter()
            .map(|&n| critical_gap::<f64>(n).unwrap())
            .collect();
        for w in gaps.windows(2) {
            assert!(w[1] < w[0], "gap should close with size: {gaps:?}");
        }
    }

    #[test]
    fn parity_blocks_match_dense_gap() {
        for n in [6usize, 17, 40] {
            let h = lmg_problem::<f64>(n, 0.0, 1.0, 2.0)
                .unwrap()
                .hamiltonian(1.0)
                .unwrap();
            let dense_gap = spectral_gap(&h).unwrap();
            let block_gap = critical_gap::<f64>(n).unwrap();
            assert!(
                (dense_gap - block_gap).abs() < 1e-11,
                "N={n}: dense {dense_gap} vs blocks {block_gap}"
            );
        }
    }

    #[test]
    fn lmg_ground_vector_matches_dense() {
        for (n, g) in [(24usize, 0.7), (51, 1.0)] {
            let p = lmg_problem::<f64>(n, 0.0, 1.0, 2.0).unwrap();
            let dense_gs = ground_state(&p.hamiltonian(g).unwrap()).unwrap();
            let block_gs = lmg_ground_state_vector::<f64>(n, g).unwrap();
            let f = fidelity(&dense_gs.state, &block_gs).unwrap();
            assert!((f - 1.0).abs() < 1e-10, "N={n} g={g} fidelity {f}");
        }
    }

    #[test]
    fn problem_states_are_endpoint_ground_states() {
        let lz = lz_default::<f64>();
        let lmg = lmg_problem::<f64>(24, 0.0, 1.0, 1.7).unwrap();
        for p in [&lz, &lmg] {
            let gs0 = ground_state(&p.hamiltonian(p.g0).unwrap()).unwrap().state;
            let gs1 = ground_state(&p.hamiltonian(p.g1).unwrap()).unwrap().state;
            assert!(fidelity(&p.initial_state, &gs0).unwrap() > 1.0 - 1e-12);
            assert!(fidelity(&p.target_state, &gs1).unwrap() > 1.0 - 1e-12);
        }
    }

    #[test]
    fn lmg_rejects_small_n() {
        assert!(lmg_problem::<f64>(1, 0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn lmg_rejects_bound_violation() {
        assert!(lmg_problem::<f64>(10, 0.0, 1.5, 1.0).is_err());
    }
}
