//! Weakly open, nearly integrable spin chains: conserved charges, exact and
//! perturbative steady states, generalized Gibbs ensembles, and the two-ion
//! dissipation-engineering model used to realise the jump operators.

pub mod effops;
pub mod ensembles;
pub mod error;
pub mod ion;
pub mod lattice;
pub mod linalg;
pub mod liouville;
pub mod observables;
pub mod ode;
pub mod optimize;
pub mod pauli;
pub mod sparse;

pub use ndarray::{Array1, Array2};
pub use num_complex::Complex64 as C64;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use lattice::{LatticeOperator, SpinChainParams};
pub use pauli::{ChargeFamily, OperatorPolynomial, PauliString};
