//! Oracle-backed checks of the quantum core: eigendecomposition, propagators
//! and the Krylov path are compared against independent reference
//! implementations.

mod support;

use bangopt::krylov::apply_propagator_krylov;
use bangopt::linalg::CMat;
use bangopt::models::{collective_spin, critical_gap, lmg_problem, Axis};
use bangopt::quantum::{combine, fidelity, ground_state, propagator, HermitianOperator, StateVector};
use bangopt::rng::SplitMix64;
use num_complex::Complex;

type C64 = Complex<f64>;

fn random_hermitian(n: usize, seed: u64) -> CMat<f64> {
    let mut rng = SplitMix64::new(seed);
    let mut m = CMat::zeros(n);
    for i in 0..n {
        m[(i, i)] = C64::new(rng.next_range(-1.0, 1.0), 0.0);
        for j in i + 1..n {
            let z = C64::new(rng.next_range(-1.0, 1.0), rng.next_range(-1.0, 1.0));
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

#[test]
fn propagator_matches_series_oracle() {
    // random 8x8 Hermitian H, dt = 0.37
    let h_mat = random_hermitian(8, 0xfeed);
    let h = HermitianOperator::from_dense(h_mat.clone()).unwrap();
    let u = propagator(&h, 0.37).unwrap();
    let reference = support::propagator_oracle(&h_mat, 0.37);
    let diff = u.matrix().max_abs_diff(&reference);
    assert!(diff < 1e-10, "propagator vs series oracle: {diff:.2e}");
    assert!(u.unitarity_defect() < 1e-10);
}

#[test]
fn eigenvalues_match_jacobi_oracle() {
    for (n, seed) in [(3usize, 11u64), (6, 12), (12, 13)] {
        let m = random_hermitian(n, seed);
        let h = HermitianOperator::from_dense(m.clone()).unwrap();
        let eig = h.eigendecomposition().unwrap();
        let reference = support::hermitian_eigenvalues_oracle(&m);
        for (a, b) in eig.values.iter().zip(reference.iter()) {
            assert!((a - b).abs() < 1e-10, "n={n}: {a} vs oracle {b}");
        }
    }
}

#[test]
fn lmg_four_spins_matches_tabulated_matrix() {
    // H(1) = Sz - Sx^2/4 at N = 4, assembled by hand in the descending-m
    // Dicke basis and diagonalized by the independent Jacobi oracle
    let s6 = 6.0f64.sqrt();
    let tabulated = vec![
        vec![2.0 - 0.25, 0.0, -s6 / 8.0, 0.0, 0.0],
        vec![0.0, 1.0 - 0.625, 0.0, -3.0 / 8.0, 0.0],
        vec![-s6 / 8.0, 0.0, 0.0 - 0.75, 0.0, -s6 / 8.0],
        vec![0.0, -3.0 / 8.0, 0.0, -1.0 - 0.625, 0.0],
        vec![0.0, 0.0, -s6 / 8.0, 0.0, -2.0 - 0.25],
    ];
    let oracle = support::jacobi_eigenvalues(tabulated);

    let problem = lmg_problem::<f64>(4, 0.0, 1.0, 2.0).unwrap();
    let h = problem.hamiltonian(1.0).unwrap();
    let eig = h.eigendecomposition().unwrap();
    for (a, b) in eig.values.iter().zip(oracle.iter()) {
        assert!((a - b).abs() < 1e-12, "{a} vs tabulated {b}");
    }

    // same spectrum through combine() on the collective operators
    let combined = combine(&problem.h0, &problem.h1, 1.0).unwrap();
    let eig2 = combined.eigendecomposition().unwrap();
    for (a, b) in eig2.values.iter().zip(oracle.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn critical_gap_two_spins_brute_force() {
    // N = 2: H(1) is an explicit 3x3 matrix
    let tabulated = vec![
        vec![1.0 - 0.25, 0.0, -0.25],
        vec![0.0, -0.5, 0.0],
        vec![-0.25, 0.0, -1.0 - 0.25],
    ];
    let oracle = support::jacobi_eigenvalues(tabulated);
    let expected_gap = oracle[1] - oracle[0];
    let gap = critical_gap::<f64>(2).unwrap();
    assert!(
        (gap - expected_gap).abs() < 1e-12,
        "gap {gap} vs brute force {expected_gap}"
    );
}

#[test]
fn krylov_agrees_with_dense_lmg32() {
    // N = 32, random g, dt = 1: matrix-free path vs dense eigendecomposition
    let problem = lmg_problem::<f64>(32, 0.0, 1.0, 2.0).unwrap();
    let mut rng = SplitMix64::new(99);
    for _ in 0..3 {
        let g = rng.next_range(-2.0, 2.0);
        let h = problem.hamiltonian(g).unwrap();
        let psi = StateVector::new(
            (0..33)
                .map(|_| C64::new(rng.next_range(-1.0, 1.0), rng.next_range(-1.0, 1.0)))
                .collect(),
        )
        .unwrap();
        let dense = propagator(&HermitianOperator::from_dense(h.to_dense()).unwrap(), 1.0)
            .unwrap()
            .apply(&psi)
            .unwrap();
        let krylov = apply_propagator_krylov(&h, 1.0, &psi, 1e-12).unwrap();
        let f = fidelity(&dense, &krylov).unwrap();
        assert!((1.0 - f).abs() < 1e-10, "g={g}: fidelity defect {:.2e}", 1.0 - f);
    }
}

#[test]
fn krylov_dense_agreement_up_to_65() {
    // fidelity difference below 1e-9 for d <= 65
    for n in [16usize, 40, 64] {
        let problem = lmg_problem::<f64>(n, 0.0, 1.0, 1.7).unwrap();
        let h = problem.hamiltonian(1.3).unwrap();
        let psi = problem.initial_state.clone();
        let dense = propagator(&HermitianOperator::from_dense(h.to_dense()).unwrap(), 0.8)
            .unwrap()
            .apply(&psi)
            .unwrap();
        let krylov = apply_propagator_krylov(&h, 0.8, &psi, 1e-11).unwrap();
        let f = fidelity(&dense, &krylov).unwrap();
        assert!((1.0 - f).abs() < 1e-9, "N={n}: defect {:.2e}", 1.0 - f);
    }
}

#[test]
fn banded_large_ground_state_matches_parity_path() {
    // quantum::ground_state dispatches to Lanczos above the dense cutoff;
    // the LMG parity-block solver is an independent check
    let n = 600;
    let problem = lmg_problem::<f64>(n, 0.0, 1.0, 1.7).unwrap();
    let h = problem.hamiltonian(1.0).unwrap();
    assert!(h.dim() > bangopt::quantum::DENSE_EIG_DIM_MAX);
    let gs = ground_state(&h).unwrap();
    let parity = bangopt::models::lmg_ground_state_vector::<f64>(n, 1.0).unwrap();
    let f = fidelity(&gs.state, &parity).unwrap();
    assert!((1.0 - f).abs() < 1e-9, "fidelity defect {:.2e}", 1.0 - f);
    // residual check
    let mut hv = vec![C64::new(0.0, 0.0); n + 1];
    h.matvec(gs.state.amplitudes(), &mut hv);
    let res: f64 = hv
        .iter()
        .zip(gs.state.amplitudes())
        .map(|(a, b)| (a - b.scale(gs.energy)).norm_sqr())
        .sum::<f64>()
        .sqrt();
    assert!(res < 1e-8 * h.norm_bound(), "residual {res:.2e}");
}

#[test]
fn spin_s_squared_identity() {
    // Sx^2 + Sy^2 + Sz^2 = S(S+1) I for N <= 64
    for n in [2usize, 9, 33, 64] {
        let sx = collective_spin::<f64>(n, Axis::X).unwrap().to_dense();
        let sy = collective_spin::<f64>(n, Axis::Y).unwrap().to_dense();
        let sz = collective_spin::<f64>(n, Axis::Z).unwrap().to_dense();
        let s = n as f64 / 2.0;
        let total = sx.matmul(&sx);
        let mut acc = total;
        for term in [sy.matmul(&sy), sz.matmul(&sz)] {
            for i in 0..=n {
                for j in 0..=n {
                    acc[(i, j)] = acc[(i, j)] + term[(i, j)];
                }
            }
        }
        for i in 0..=n {
            for j in 0..=n {
                let expected = if i == j { s * (s + 1.0) } else { 0.0 };
                assert!(
                    (acc[(i, j)] - C64::new(expected, 0.0)).norm() < 1e-10,
                    "N={n} entry ({i},{j})"
                );
            }
        }
    }
}

#[test]
fn lmg_parity_symmetry() {
    // H commutes with exp(i pi (Sz + N/2)) for N <= 64
    for n in [5usize, 16, 64] {
        let problem = lmg_problem::<f64>(n, 0.0, 1.0, 2.0).unwrap();
        let h = problem.hamiltonian(1.0).unwrap().to_dense();
        // parity operator is diagonal with entries (-1)^(m + S) = (-1)^(N - i)
        let signs: Vec<f64> = (0..=n).map(|i| if (n - i) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        for i in 0..=n {
            for j in 0..=n {
                let commutator = h[(i, j)] * C64::new(signs[j] - signs[i], 0.0);
                assert!(commutator.norm() < 1e-12, "N={n} entry ({i},{j})");
            }
        }
    }
}
