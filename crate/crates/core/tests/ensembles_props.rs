use gge_core::ensembles::{
    charge_drift, gge_weights, rho_bd, solve_tgge, ChainSystem, EigenSystem, H1Drift, TggeOptions,
};
use gge_core::lattice::{build_h0, build_h1, lindblad_ops};
use gge_core::linalg::{adjoint, eigvalsh, trace};
use gge_core::{SpinChainParams, C64};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use std::sync::OnceLock;

fn params(n: usize) -> SpinChainParams {
    SpinChainParams {
        n,
        ..SpinChainParams::default()
    }
}

fn n4() -> &'static ChainSystem {
    static S: OnceLock<ChainSystem> = OnceLock::new();
    S.get_or_init(|| ChainSystem::new(&params(4), 2, false).unwrap())
}

fn n6() -> &'static ChainSystem {
    static S: OnceLock<ChainSystem> = OnceLock::new();
    S.get_or_init(|| ChainSystem::new(&params(6), 4, false).unwrap())
}

fn max_abs(a: &Array2<C64>) -> f64 {
    a.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// `Σ_j rate (L ρ L† − ½{L†L, ρ})`, written out densely.
fn lindblad_dissipator(p: &SpinChainParams, rho: &Array2<C64>) -> Array2<C64> {
    let mut out = Array2::zeros(rho.raw_dim());
    for j in lindblad_ops(p).unwrap() {
        let l = j.op.to_dense();
        let ld = adjoint(&l);
        let ldl = ld.dot(&l);
        let term = l.dot(rho).dot(&ld) - (ldl.dot(rho) + rho.dot(&ldl)).mapv(|v| v * 0.5);
        out = out + term.mapv(|v| v * j.rate);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn drift_equals_dense_lindblad_trace(
        raw in prop::collection::vec(0.0f64..1.0, 16),
        gamma in 0.0f64..=1.0,
    ) {
        let sys = n4();
        let w = Array1::from_vec(raw).mapv(|x| x + 1e-3);
        let w = &w / w.sum();
        let p = SpinChainParams { gamma, ..sys.params.clone() };
        let got = charge_drift(&sys.es, &sys.kernel, &w, p.epsilon, gamma, None).unwrap();
        let lr = lindblad_dissipator(&p, &sys.es.from_diagonal(&w));
        for (i, q) in sys.charges.iter().enumerate() {
            let direct = trace(&q.to_dense().dot(&lr)).re;
            prop_assert!((got[i] - direct).abs() <= 1e-10, "C{}: {} vs {}", sys.family.indices[i], got[i], direct);
        }
    }
}

#[test]
fn magnetisation_drains_at_infinite_temperature() {
    let p = SpinChainParams {
        n: 4,
        jz: 1.0,
        ..SpinChainParams::default()
    };
    let sys = ChainSystem::new(&p, 2, false).unwrap();
    assert_eq!(sys.family.indices[0], 1);
    let w = Array1::from_elem(16, 1.0 / 16.0);
    let drift = charge_drift(&sys.es, &sys.kernel, &w, 0.1, 0.0, None).unwrap();
    assert!(drift[0] < 0.0, "{}", drift[0]);
}

#[test]
fn tgge_is_stationary_positive_and_commutes_with_h0() {
    let sys = n6();
    let h0 = sys.h0.to_dense();
    for gamma in [0.25, 0.75] {
        let sol = sys.tgge(gamma, 4, None, &TggeOptions::default()).unwrap();
        let drift = charge_drift(&sys.es, &sys.kernel, &sol.weights, sys.params.epsilon, gamma, None).unwrap();
        for &c in &sol.charges {
            assert!(drift[c].abs() <= 1e-10, "γ={gamma} C{}: {:e}", sys.family.indices[c], drift[c]);
        }
        assert!(sol.weights.iter().all(|&w| w > 0.0));
        assert!(eigvalsh(&sol.rho).unwrap()[0] > 0.0);
        assert!((trace(&sol.rho) - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(max_abs(&(h0.dot(&sol.rho) - sol.rho.dot(&h0))) <= 1e-10);
    }
}

#[test]
fn doubling_the_charges_halves_the_multipliers() {
    let sys = n6();
    let rates = sys.kernel.rates(sys.params.epsilon, 0.5, None).unwrap();
    let sel = [0, 1, 2];
    let base = solve_tgge(&sys.es, &rates, &sel, &TggeOptions::default()).unwrap();
    let doubled = EigenSystem {
        charge_diagonals: sys.es.charge_diagonals.iter().map(|c| c * 2.0).collect(),
        ..sys.es.clone()
    };
    let scaled = solve_tgge(&doubled, &rates, &sel, &TggeOptions::default()).unwrap();
    for (a, b) in base.lambdas.iter().zip(scaled.lambdas.iter()) {
        assert!((a - 2.0 * b).abs() <= 1e-8 * a.abs().max(1e-3), "{a} vs 2·{b}");
    }
    let dw = (&base.weights - &scaled.weights).iter().map(|x| x.abs()).fold(0.0, f64::max);
    assert!(dw <= 1e-10, "{dw}");
    let rw = gge_weights(&doubled, &sel, &scaled.lambdas);
    assert!((&rw - &base.weights).iter().all(|x| x.abs() <= 1e-10));
}

#[test]
fn block_diagonal_state_ignores_overall_rate() {
    let sys = n4();
    let jumps = sys.jumps(0.4);
    let scaled: Vec<_> = jumps.iter().map(|(l, r)| (l.clone(), 7.5 * r)).collect();
    let a = rho_bd(&sys.es, &jumps).unwrap();
    let b = rho_bd(&sys.es, &scaled).unwrap();
    assert!(max_abs(&(&a.rho - &b.rho)) <= 1e-10);
    let h0 = sys.h0.to_dense();
    assert!(max_abs(&(h0.dot(&a.rho) - a.rho.dot(&h0))) <= 1e-10);
}

#[test]
fn commutant_dimension_counts_degenerate_pairs() {
    let sys = n6();
    let e = eigvalsh(&build_h0(&sys.params).unwrap().to_dense()).unwrap();
    let tol = sys.es.degeneracy_tol;
    let pairs = (0..e.len())
        .flat_map(|m| (0..e.len()).map(move |n| (m, n)))
        .filter(|&(m, n)| (e[m] - e[n]).abs() <= tol)
        .count();
    assert_eq!(sys.es.commutant_dim(), pairs);
    assert!(pairs > e.len(), "generic chain still has exact degeneracies");
}

#[test]
fn lorentzian_limit_keeps_only_degenerate_pairs() {
    let p = params(6);
    let sys = ChainSystem::new(&p, 1, true).unwrap();
    let base = sys.kernel.rates(p.epsilon, p.gamma, None).unwrap();
    let v = &sys.es.vectors;
    let h1 = adjoint(v).dot(&build_h1(&p).unwrap().to_sparse().matmul_dense(v));
    let e = &sys.es.energies;
    for eta in [1e-6, 1e-9] {
        let with = sys.kernel.rates(p.epsilon, p.gamma, Some(H1Drift { eta, scale: 1.0 })).unwrap();
        let mut worst: f64 = 0.0;
        for ((m, n), x) in with.indexed_iter() {
            // η·(golden-rule rate) → 2|⟨m|H1|n⟩|² on degenerate pairs, 0 elsewhere.
            let limit = if (e[m] - e[n]).abs() <= sys.es.degeneracy_tol {
                2.0 * h1[[m, n]].norm_sqr()
            } else {
                0.0
            };
            worst = worst.max((eta * (x - base[[m, n]]) - limit).abs());
        }
        assert!(worst <= 1e3 * eta, "η={eta}: {worst:e}");
    }
    assert!(sys.kernel.rates(p.epsilon, p.gamma, Some(H1Drift { eta: 0.0, scale: 1.0 })).is_err());
}

#[test]
fn eight_site_family_is_simultaneously_diagonal() {
    let sys = ChainSystem::new(&params(8), 4, false).unwrap();
    let v = &sys.es.vectors;
    let vd = adjoint(v);
    let u = vd.dot(v) - Array2::from_diag_elem(256, C64::new(1.0, 0.0));
    assert!(max_abs(&u) <= 1e-12);
    for q in &sys.charges {
        let m = vd.dot(&q.to_dense().dot(v));
        let off = m
            .indexed_iter()
            .filter(|((r, c), _)| r != c)
            .map(|(_, x)| x.norm())
            .fold(0.0, f64::max);
        assert!(off <= 1e-10, "{off:e}");
    }
    let reference = eigvalsh(&sys.h0.to_dense()).unwrap();
    let diff = (&sys.es.energies - &reference).iter().map(|x| x.abs()).fold(0.0, f64::max);
    assert!(diff <= 1e-10);
}
