//! Concrete operators on the periodic spin-1/2 ring.
//!
//! Basis convention: a state index reads as the binary word `s_0 s_1 … s_{N-1}`
//! with site 0 the most significant bit (Kronecker order). Bit 1 is spin up
//! (`|1⟩`), bit 0 is spin down (`|0⟩`), so `S^z|1⟩ = +½|1⟩`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{h0_density, h1_density, OperatorPolynomial, Pauli, PauliString};
use crate::sparse::CsrMatrix;
use crate::C64;

/// Largest Hilbert dimension stored densely.
pub const DENSE_MAX_DIM: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinChainParams {
    /// Number of sites (even, 2..=14).
    pub n: usize,
    pub jy: f64,
    pub jz: f64,
    pub h: f64,
    /// Decay exponent of the long-range couplings.
    pub alpha: f64,
    /// Next-nearest strength; `None` means `2^-alpha`.
    pub epsilon1: Option<f64>,
    /// Overall dissipation strength.
    pub epsilon: f64,
    /// Weight of the two-body dissipator, in [0, 1].
    pub gamma: f64,
}

impl Default for SpinChainParams {
    fn default() -> Self {
        Self {
            n: 6,
            jy: 1.0,
            jz: 0.1,
            h: 1.0,
            alpha: 2.0,
            epsilon1: None,
            epsilon: 0.01,
            gamma: 0.5,
        }
    }
}

impl SpinChainParams {
    pub fn eps1(&self) -> f64 {
        self.epsilon1.unwrap_or_else(|| 2f64.powf(-self.alpha))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n > 14 || self.n % 2 != 0 {
            return Err(Error::InvalidParams(format!(
                "N must be even and in 2..=14, got {}",
                self.n
            )));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidParams(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidParams(format!("gamma must lie in [0,1], got {}", self.gamma)));
        }
        for (name, v) in [("jy", self.jy), ("jz", self.jz), ("h", self.h), ("eps1", self.eps1())] {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} is not finite")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }
}

#[derive(Clone, Debug)]
pub enum Storage {
    Dense(Array2<C64>),
    Sparse(CsrMatrix),
}

/// Matrix on the 2^N-dimensional ring Hilbert space.
#[derive(Clone, Debug)]
pub struct LatticeOperator {
    dim: usize,
    storage: Storage,
    hermitian: bool,
}

impl LatticeOperator {
    /// Wrap a sparse matrix, choosing dense storage for small dimensions.
    /// With `hermitian` set, Hermiticity is verified.
    pub fn from_sparse(m: CsrMatrix, hermitian: bool) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch("operator must be square".into()));
        }
        let dim = m.nrows();
        let storage = if dim <= DENSE_MAX_DIM {
            Storage::Dense(m.to_dense())
        } else {
            Storage::Sparse(m)
        };
        let op = Self {
            dim,
            storage,
            hermitian,
        };
        if hermitian {
            op.check_hermitian()?;
        }
        Ok(op)
    }

    pub fn from_dense(a: Array2<C64>, hermitian: bool) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch("operator must be square".into()));
        }
        let op = Self {
            dim: a.nrows(),
            storage: Storage::Dense(a),
            hermitian,
        };
        if hermitian {
            op.check_hermitian()?;
        }
        Ok(op)
    }

    fn check_hermitian(&self) -> Result<()> {
        let d = self.to_dense();
        let scale = d.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let dev = d
            .indexed_iter()
            .map(|((i, j), v)| (v - d[[j, i]].conj()).norm())
            .fold(0.0, f64::max);
        if dev > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NonHermitian(dev));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn to_dense(&self) -> Array2<C64> {
        match &self.storage {
            Storage::Dense(a) => a.clone(),
            Storage::Sparse(m) => m.to_dense(),
        }
    }

    pub fn to_sparse(&self) -> CsrMatrix {
        match &self.storage {
            Storage::Dense(a) => CsrMatrix::from_dense(a),
            Storage::Sparse(m) => m.clone(),
        }
    }

    pub fn matvec(&self, x: &Array1<C64>) -> Array1<C64> {
        match &self.storage {
            Storage::Dense(a) => a.dot(x),
            Storage::Sparse(m) => m.matvec(x.view()),
        }
    }

    /// `self · b` for a dense matrix `b`.
    pub fn apply(&self, b: &Array2<C64>) -> Array2<C64> {
        match &self.storage {
            Storage::Dense(a) => a.dot(b),
            Storage::Sparse(m) => m.matmul_dense(b),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match &self.storage {
            Storage::Dense(a) => a.iter().map(|v| v.norm()).fold(0.0, f64::max),
            Storage::Sparse(m) => m.max_abs(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        match &self.storage {
            Storage::Dense(a) => a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt(),
            Storage::Sparse(m) => m.frobenius_norm(),
        }
    }

    /// Trace of `self · rho`.
    pub fn trace_with(&self, rho: &Array2<C64>) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        match &self.storage {
            Storage::Dense(a) => {
                for ((i, j), v) in a.indexed_iter() {
                    acc += v * rho[[j, i]];
                }
            }
            Storage::Sparse(m) => {
                for (i, j, v) in m.triplets() {
                    acc += v * rho[[j, i]];
                }
            }
        }
        acc
    }
}

/// `‖AB − BA‖_F`.
///
/// Products are formed sparsely: realized densities have a handful of
/// entries per row, so this avoids the O(dim) rounding accumulation of a
/// dense product.
pub fn commutator_norm(a: &LatticeOperator, b: &LatticeOperator) -> f64 {
    let (sa, sb) = (a.to_sparse(), b.to_sparse());
    sa.matmul(&sb).add(&sb.matmul(&sa).scaled(C64::new(-1.0, 0.0))).frobenius_norm()
}

/// Bit mask of `site` in a basis index.
#[inline]
pub fn site_bit(n: usize, site: usize) -> usize {
    1 << (n - 1 - site)
}

/// Action of a σ-level letter on one site: new state and phase.
#[inline]
fn apply_letter(p: Pauli, state: usize, bit: usize) -> (usize, C64) {
    let up = state & bit != 0;
    match p {
        Pauli::I => (state, C64::new(1.0, 0.0)),
        Pauli::X => (state ^ bit, C64::new(1.0, 0.0)),
        // σ^y|↑⟩ = i|↓⟩, σ^y|↓⟩ = −i|↑⟩
        Pauli::Y => (state ^ bit, if up { C64::new(0.0, 1.0) } else { C64::new(0.0, -1.0) }),
        Pauli::Z => (state, C64::new(if up { 1.0 } else { -1.0 }, 0.0)),
    }
}

/// Apply the spin string (S-normalised) placed with its first letter at
/// `start` (mod N) to a basis state.
pub fn apply_string(s: &PauliString, n: usize, start: usize, state: usize) -> (usize, C64) {
    let mut st = state;
    let mut ph = C64::new(2f64.powi(-(s.weight() as i32)), 0.0);
    for (k, &p) in s.letters().iter().enumerate() {
        let (ns, f) = apply_letter(p, st, site_bit(n, (start + k) % n));
        st = ns;
        ph *= f;
    }
    (st, ph)
}

/// Sum of all N translates of a density on the ring, as a sparse matrix.
pub fn realize_sparse(poly: &OperatorPolynomial, n: usize) -> Result<CsrMatrix> {
    if n == 0 || n > 20 {
        return Err(Error::InvalidParams(format!("unsupported ring size {n}")));
    }
    let support = poly.max_support();
    if support > n {
        return Err(Error::SupportTooLarge { support, n });
    }
    let dim = 1usize << n;
    let mut t = Vec::new();
    for (s, c) in poly.terms() {
        if s.is_identity() {
            for b in 0..dim {
                t.push((b, b, *c * n as f64));
            }
            continue;
        }
        for j in 0..n {
            for b in 0..dim {
                let (b2, ph) = apply_string(s, n, j, b);
                t.push((b2, b, c * ph));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(dim, dim, t))
}

/// Realize a translation-covariant density on an N-site ring.
pub fn realize(poly: &OperatorPolynomial, n: usize) -> Result<LatticeOperator> {
    let m = realize_sparse(poly, n)?;
    LatticeOperator::from_sparse(m, poly.is_hermitian(1e-12))
}

/// Realize a single string at a fixed position (no translation sum).
pub fn realize_local(s: &PauliString, n: usize, start: usize) -> CsrMatrix {
    let dim = 1usize << n;
    let t = (0..dim)
        .map(|b| {
            let (b2, ph) = apply_string(s, n, start, b);
            (b2, b, ph)
        })
        .collect();
    CsrMatrix::from_triplets(dim, dim, t)
}

pub fn build_h0(params: &SpinChainParams) -> Result<LatticeOperator> {
    params.validate()?;
    realize(&h0_density(params.jy, params.jz, params.h), params.n)
}

pub fn build_h1(params: &SpinChainParams) -> Result<LatticeOperator> {
    params.validate()?;
    if params.n < 5 {
        return Err(Error::InvalidParams(
            "next-nearest couplings need N >= 5".into(),
        ));
    }
    realize(&h1_density(params.jy, params.jz, params.eps1()), params.n)
}

/// Single-site matrix elements in the (down, up) local basis.
fn single_site(n: usize, site: usize, f: impl Fn(bool) -> Option<(bool, C64)>) -> CsrMatrix {
    let dim = 1usize << n;
    let bit = site_bit(n, site);
    let mut t = Vec::new();
    for b in 0..dim {
        if let Some((up2, v)) = f(b & bit != 0) {
            let b2 = if up2 { b | bit } else { b & !bit };
            t.push((b2, b, v));
        }
    }
    CsrMatrix::from_triplets(dim, dim, t)
}

/// `S^-_j = |0⟩⟨1|`.
pub fn s_minus(n: usize, site: usize) -> CsrMatrix {
    single_site(n, site, |up| up.then_some((false, C64::new(1.0, 0.0))))
}

/// `S^+_j = |1⟩⟨0|`.
pub fn s_plus(n: usize, site: usize) -> CsrMatrix {
    single_site(n, site, |up| (!up).then_some((true, C64::new(1.0, 0.0))))
}

/// `P^↓_j = ½ − S^z_j = |0⟩⟨0|`.
pub fn p_down(n: usize, site: usize) -> CsrMatrix {
    single_site(n, site, |up| (!up).then_some((false, C64::new(1.0, 0.0))))
}

/// `S^z_j`.
pub fn s_z(n: usize, site: usize) -> CsrMatrix {
    single_site(n, site, |up| Some((up, C64::new(if up { 0.5 } else { -0.5 }, 0.0))))
}

/// Which dissipator a jump operator belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum JumpKind {
    /// `S^-_j`, rate ε(1−γ).
    Lowering,
    /// `S^+_j P^↓_{j+1}`, rate εγ.
    ConditionalRaising,
}

#[derive(Clone, Debug)]
pub struct Jump {
    pub kind: JumpKind,
    pub site: usize,
    pub op: CsrMatrix,
    pub rate: f64,
}

/// Jump operators with their rates. Operators with vanishing rate are omitted.
pub fn lindblad_ops(params: &SpinChainParams) -> Result<Vec<Jump>> {
    params.validate()?;
    let n = params.n;
    let r1 = params.epsilon * (1.0 - params.gamma);
    let r2 = params.epsilon * params.gamma;
    let mut out = Vec::new();
    if r1 > 0.0 {
        for j in 0..n {
            out.push(Jump {
                kind: JumpKind::Lowering,
                site: j,
                op: s_minus(n, j),
                rate: r1,
            });
        }
    }
    if r2 > 0.0 {
        for j in 0..n {
            out.push(Jump {
                kind: JumpKind::ConditionalRaising,
                site: j,
                op: s_plus(n, j).matmul(&p_down(n, (j + 1) % n)),
                rate: r2,
            });
        }
    }
    Ok(out)
}

/// Unit-rate jump operators of one kind on all sites (rates stripped).
pub fn jump_operators(n: usize, kind: JumpKind) -> Vec<CsrMatrix> {
    (0..n)
        .map(|j| match kind {
            JumpKind::Lowering => s_minus(n, j),
            JumpKind::ConditionalRaising => s_plus(n, j).matmul(&p_down(n, (j + 1) % n)),
        })
        .collect()
}

/// Cyclic shift `T: site j → j+1` as a basis permutation: `T|b⟩ = |perm[b]⟩`.
pub fn shift_permutation(n: usize) -> Vec<usize> {
    let dim = 1usize << n;
    (0..dim)
        .map(|b| {
            let mut out = 0;
            for j in 0..n {
                if b & site_bit(n, j) != 0 {
                    out |= site_bit(n, (j + 1) % n);
                }
            }
            out
        })
        .collect()
}

pub fn shift_operator(n: usize) -> CsrMatrix {
    let perm = shift_permutation(n);
    let dim = perm.len();
    CsrMatrix::from_triplets(
        dim,
        dim,
        perm.iter().enumerate().map(|(b, &p)| (p, b, C64::new(1.0, 0.0))).collect(),
    )
}

/// Sum of `S^z_j` over the ring.
pub fn sz_total(n: usize) -> LatticeOperator {
    let dim = 1usize << n;
    let t = (0..dim)
        .map(|b| {
            let up = (b as u64).count_ones() as f64;
            (b, b, C64::new(up - n as f64 / 2.0, 0.0))
        })
        .collect();
    LatticeOperator::from_sparse(CsrMatrix::from_triplets(dim, dim, t), true).expect("diagonal")
}
