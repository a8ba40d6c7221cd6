use gge_core::lattice::{build_h0, build_h1, lindblad_ops, realize, s_minus, sz_total};
use gge_core::linalg::{eigvalsh, hermiticity_defect, trace, trace_distance};
use gge_core::liouville::{build_superoperator, chain_superoperator, steady_state, time_evolve};
use gge_core::ode::OdeOptions;
use gge_core::{LatticeOperator, OperatorPolynomial, SpinChainParams, C64};
use ndarray::linalg::kron;
use ndarray::{array, Array2};
use proptest::prelude::*;

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn mixed(d: usize) -> Array2<C64> {
    Array2::from_diag_elem(d, c(1.0 / d as f64))
}

fn expect(op: &Array2<C64>, rho: &Array2<C64>) -> f64 {
    trace(&op.dot(rho)).re
}

fn sigma(letter: &str) -> Array2<C64> {
    realize(&OperatorPolynomial::from_real(&[(letter, 2.0)]).unwrap(), 1)
        .unwrap()
        .to_dense()
}

#[test]
fn driven_decaying_spin_reaches_bloch_fixed_point() {
    for (h, eps) in [(1.0, 0.3), (0.4, 1.7), (2.0, 0.05)] {
        let hop = LatticeOperator::from_dense(sigma("X").mapv(|v| v * (h / 2.0)), true).unwrap();
        let s = build_superoperator(&hop, &[(s_minus(1, 0), eps)]).unwrap();
        let rho = steady_state(&s).unwrap().rho;

        // Bloch equations for H = (h/2)σ^x and decay at rate ε toward |↓⟩:
        //   ṙx = −ε rx/2,  ṙy = −h rz − ε ry/2,  ṙz = h ry − ε (1 + rz).
        let d = 2.0 * h * h + eps * eps;
        let (rx, ry, rz) = (0.0, 2.0 * h * eps / d, -eps * eps / d);
        assert!((-h * rz - eps * ry / 2.0).abs() < 1e-14);
        assert!((h * ry - eps * (1.0 + rz)).abs() < 1e-14);

        assert!((expect(&sigma("X"), &rho) - rx).abs() < 1e-10);
        assert!((expect(&sigma("Y"), &rho) - ry).abs() < 1e-10, "h={h} eps={eps}");
        assert!((expect(&sigma("Z"), &rho) - rz).abs() < 1e-10);
    }
}

#[test]
fn pure_decay_drains_magnetisation_of_mixed_state() {
    let p = SpinChainParams {
        n: 4,
        gamma: 0.0,
        epsilon: 0.1,
        ..SpinChainParams::default()
    };
    let s = chain_superoperator(&p, false).unwrap();
    let d = 1 << p.n;
    let drift = expect(&sz_total(p.n).to_dense(), &s.apply(&mixed(d)));
    // Each site loses ⟨S^z_j⟩ + ½ at rate ε; at infinite temperature that is ε/2.
    assert!(drift < 0.0);
    assert!((drift + p.n as f64 * p.epsilon / 2.0).abs() < 1e-12, "{drift}");
}

fn sy_at(n: usize, j: usize) -> Array2<C64> {
    let sy = array![[c(0.0), C64::new(0.0, 0.5)], [C64::new(0.0, -0.5), c(0.0)]];
    let mut m = Array2::from_diag_elem(1, c(1.0));
    for k in 0..n {
        let f = if k == j { sy.clone() } else { Array2::from_diag_elem(2, c(1.0)) };
        m = kron(&m, &f);
    }
    m
}

#[test]
fn next_nearest_term_matches_explicit_products() {
    let p = SpinChainParams {
        n: 6,
        jz: 0.0,
        epsilon1: Some(0.3),
        ..SpinChainParams::default()
    };
    let h1 = build_h1(&p).unwrap().to_dense();
    let mut expected = Array2::<C64>::zeros((64, 64));
    for j in 0..6 {
        expected = expected + sy_at(6, j).dot(&sy_at(6, (j + 2) % 6)).mapv(|v| v * 0.3);
    }
    let diff = (&h1 - &expected).iter().map(|v| v.norm()).fold(0.0, f64::max);
    assert!(diff < 1e-14, "{diff}");
}

fn random_matrix(d: usize, seed: &[(f64, f64)]) -> Array2<C64> {
    Array2::from_shape_fn((d, d), |(i, j)| {
        let (a, b) = seed[(i * d + j) % seed.len()];
        C64::new(a * (1.0 + i as f64).sin(), b * (2.0 + j as f64).cos())
    })
}

fn chain(jz: f64, h: f64, gamma: f64, epsilon: f64) -> SpinChainParams {
    SpinChainParams {
        n: 4,
        jz,
        h,
        gamma,
        epsilon,
        ..SpinChainParams::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generator_preserves_trace_and_hermiticity(
        jz in -1.0f64..1.0, h in 0.0f64..2.0, gamma in 0.0f64..=1.0, epsilon in 0.0f64..1.0,
        seed in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 7..40),
    ) {
        let s = chain_superoperator(&chain(jz, h, gamma, epsilon), false).unwrap();
        let x = random_matrix(16, &seed);
        let norm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(trace(&s.apply(&x)).norm() <= 1e-10 * norm);
        let herm = &x + &x.t().mapv(|v| v.conj());
        prop_assert!(hermiticity_defect(&s.apply(&herm)) <= 1e-10);
    }

    #[test]
    fn steady_states_are_valid_densities(
        jz in -1.0f64..1.0, h in 0.2f64..2.0, gamma in 0.0f64..=1.0, epsilon in 0.01f64..1.0,
    ) {
        let s = chain_superoperator(&chain(jz, h, gamma, epsilon), false).unwrap();
        let ss = steady_state(&s).unwrap();
        prop_assert!(ss.nullity_checked);
        prop_assert!(hermiticity_defect(&ss.rho) <= 1e-10);
        prop_assert!((trace(&ss.rho) - c(1.0)).norm() <= 1e-12);
        prop_assert!(eigvalsh(&ss.rho).unwrap()[0] >= -1e-8);
        prop_assert!(ss.min_eigenvalue >= -1e-8);
    }
}

#[test]
fn zero_generator_leaves_state_fixed() {
    let h = LatticeOperator::from_dense(Array2::zeros((4, 4)), true).unwrap();
    let s = build_superoperator(&h, &[]).unwrap();
    let rho0 = array![
        [c(0.4), C64::new(0.1, 0.2), c(0.0), c(0.0)],
        [C64::new(0.1, -0.2), c(0.3), c(0.0), c(0.0)],
        [c(0.0), c(0.0), c(0.2), c(0.0)],
        [c(0.0), c(0.0), c(0.0), c(0.1)],
    ];
    let tr = time_evolve(&s, &rho0, &[1.0, 10.0], &OdeOptions::default()).unwrap();
    for r in &tr.states {
        assert_eq!(r, &rho0);
    }
}

#[test]
fn long_evolution_reaches_the_null_vector() {
    let p = SpinChainParams {
        n: 4,
        epsilon: 0.2,
        ..SpinChainParams::default()
    };
    let s = chain_superoperator(&p, false).unwrap();
    let ss = steady_state(&s).unwrap();
    let tr = time_evolve(&s, &mixed(16), &[50.0, 600.0], &OdeOptions::default()).unwrap();
    assert!(tr.trace_drift <= 1e-9, "{}", tr.trace_drift);
    let dist = trace_distance(tr.states.last().unwrap(), &ss.rho).unwrap();
    assert!(dist <= 1e-6, "{dist}");
    // Not yet relaxed at the first sample.
    assert!(trace_distance(&tr.states[0], &ss.rho).unwrap() > 1e-6);
}

#[test]
fn next_nearest_term_shifts_energy_weakly() {
    let p = SpinChainParams::default();
    let h0 = build_h0(&p).unwrap().to_dense();
    let e = |include_h1| {
        let rho = steady_state(&chain_superoperator(&p, include_h1).unwrap()).unwrap().rho;
        expect(&h0, &rho) / p.n as f64
    };
    let (bare, with_h1) = (e(false), e(true));
    // ⟨H0⟩/N sits near zero here, so compare against the per-site bandwidth.
    let ev = eigvalsh(&h0).unwrap();
    let width = (ev[ev.len() - 1] - ev[0]) / p.n as f64;
    assert!((bare - with_h1).abs() <= 0.01 * width, "{bare} vs {with_h1}, width {width}");
    assert!(lindblad_ops(&p).unwrap().len() == 2 * p.n);
}
