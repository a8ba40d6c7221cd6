//! Fixtures shared by the benchmarks.

use gge_core::ion::IonSystemParams;
use gge_core::SpinChainParams;

/// The default chain at weak dissipation on `n` sites.
pub fn chain(n: usize) -> SpinChainParams {
    SpinChainParams {
        n,
        ..SpinChainParams::default()
    }
}

/// A near-optimal preparation for `t = 100/g`.
pub fn preparation() -> IonSystemParams {
    IonSystemParams {
        gamma_e1: 0.35,
        omega: 0.0685,
        delta: 0.968,
        delta_ph: 2.063,
        ..IonSystemParams::default()
    }
}
