//! Vectorised Lindblad generators, exact steady states and time evolution.
//!
//! Density matrices are column-stacked: entry `(r, c)` of a `D×D` matrix sits
//! at index `r + D·c`. In this convention `vec(AρB) = (Bᵀ ⊗ A) vec ρ`, so
//!
//! ```text
//! 𝓛 = −i(1⊗H − Hᵀ⊗1) + Σ_a r_a (L̄_a⊗L_a − ½ 1⊗L_a†L_a − ½ (L_a†L_a)ᵀ⊗1).
//! ```

use std::io::Write;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::lattice::{build_h0, build_h1, lindblad_ops, shift_permutation, LatticeOperator, SpinChainParams};
use crate::linalg::{self, DenseLu};
use crate::ode::{dopri45, OdeOptions, OdeStats};
use crate::sparse::CsrMatrix;
use crate::C64;

/// Largest superoperator dimension `D²` handled without a symmetry reduction.
pub const DENSE_SUPER_MAX: usize = 4096;
/// Required ratio between the second-smallest and smallest singular values.
pub const NULLITY_RATIO: f64 = 1e6;

/// Which physical term a piece of the generator comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    /// Commutator with the integrable Hamiltonian.
    Coherent,
    /// Commutator with the integrability-breaking perturbation.
    Perturbation,
    /// Lindblad dissipator.
    Dissipative,
}

#[derive(Clone, Debug)]
pub struct Superoperator {
    dim: usize,
    matrix: CsrMatrix,
    parts: Vec<(Part, CsrMatrix)>,
    /// Hilbert-space translation under which the generator is invariant,
    /// with its order.
    translation: Option<(Vec<usize>, usize)>,
}

fn kron_id_left(d: usize, a: &CsrMatrix) -> CsrMatrix {
    CsrMatrix::identity(d).kron(a)
}

fn kron_id_right(a: &CsrMatrix, d: usize) -> CsrMatrix {
    a.kron(&CsrMatrix::identity(d))
}

/// `−i(1⊗H − Hᵀ⊗1)`.
pub fn coherent_part(h: &CsrMatrix) -> CsrMatrix {
    let d = h.nrows();
    let left = kron_id_left(d, h);
    let right = kron_id_right(&h.transpose(), d);
    left.add(&right.scaled(C64::new(-1.0, 0.0))).scaled(C64::new(0.0, -1.0))
}

/// `r (L̄⊗L − ½ 1⊗L†L − ½ (L†L)ᵀ⊗1)`.
pub fn dissipator_part(l: &CsrMatrix, rate: f64) -> Result<CsrMatrix> {
    if !(rate >= 0.0) {
        return Err(Error::NegativeRate(rate));
    }
    let d = l.nrows();
    let ldl = l.adjoint().matmul(l);
    let jump = l.conj().kron(l);
    let anti = kron_id_left(d, &ldl).add(&kron_id_right(&ldl.transpose(), d));
    Ok(jump.add(&anti.scaled(C64::new(-0.5, 0.0))).scaled(C64::new(rate, 0.0)))
}

impl Superoperator {
    /// Assemble from explicit pieces; all must be `D²×D²`.
    pub fn from_parts(dim: usize, parts: Vec<(Part, CsrMatrix)>) -> Result<Self> {
        let mut matrix = CsrMatrix::zeros(dim * dim, dim * dim);
        for (_, m) in &parts {
            if m.nrows() != dim * dim || m.ncols() != dim * dim {
                return Err(Error::DimensionMismatch(format!(
                    "superoperator piece is {}x{}, expected {}",
                    m.nrows(),
                    m.ncols(),
                    dim * dim
                )));
            }
            matrix = matrix.add(m);
        }
        Ok(Self {
            dim,
            matrix,
            parts,
            translation: None,
        })
    }

    /// Hilbert dimension `D`.
    pub fn hilbert_dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Sum of all pieces of the given kind (zero if absent).
    pub fn part(&self, kind: Part) -> CsrMatrix {
        let n = self.dim * self.dim;
        self.parts
            .iter()
            .filter(|(k, _)| *k == kind)
            .fold(CsrMatrix::zeros(n, n), |acc, (_, m)| acc.add(m))
    }

    pub fn has_symmetry(&self) -> bool {
        self.translation.is_some()
    }

    /// Declare invariance under the basis permutation `perm` (`T|b⟩ = |perm[b]⟩`).
    /// The commutation `[𝓛, T·T†] = 0` is verified entrywise.
    pub fn with_translation(mut self, perm: Vec<usize>) -> Result<Self> {
        let d = self.dim;
        if perm.len() != d {
            return Err(Error::DimensionMismatch("translation permutation".into()));
        }
        let pp = |p: usize| perm[p % d] + d * perm[p / d];
        let tol = 1e-12 * self.matrix.max_abs().max(1.0);
        for (r, c, v) in self.matrix.triplets() {
            if (self.matrix.get(pp(r), pp(c)) - v).norm() > tol {
                return Err(Error::InvalidParams(
                    "generator is not invariant under the declared translation".into(),
                ));
            }
        }
        let mut order = 1;
        let mut cur = perm.clone();
        while cur.iter().enumerate().any(|(i, &v)| i != v) {
            cur = cur.iter().map(|&v| perm[v]).collect();
            order += 1;
            if order > d {
                return Err(Error::InvalidParams("permutation order overflow".into()));
            }
        }
        self.translation = Some((perm, order));
        Ok(self)
    }

    /// `𝓛 vec ρ`.
    pub fn apply_vec(&self, x: &Array1<C64>) -> Array1<C64> {
        self.matrix.matvec(x.view())
    }

    /// `𝓛ρ` as a matrix.
    pub fn apply(&self, rho: &Array2<C64>) -> Array2<C64> {
        unvec(&self.apply_vec(&vec(rho)), self.dim)
    }

    /// `‖(vec 1)† 𝓛‖₂`, zero for a trace-preserving generator.
    pub fn trace_defect(&self) -> f64 {
        let d = self.dim;
        let mut row = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for (c, v) in self.matrix.row(i + d * i) {
                row[c] += v;
            }
        }
        row.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// `𝓛` for a Hamiltonian and (operator, rate) jumps.
pub fn build_superoperator(h: &LatticeOperator, jumps: &[(CsrMatrix, f64)]) -> Result<Superoperator> {
    let hs = h.to_sparse();
    let d = hs.nrows();
    let mut parts = vec![(Part::Coherent, coherent_part(&hs))];
    for (l, rate) in jumps {
        if l.nrows() != d || l.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "jump operator is {}x{}, Hamiltonian is {d}x{d}",
                l.nrows(),
                l.ncols()
            )));
        }
        parts.push((Part::Dissipative, dissipator_part(l, *rate)?));
    }
    Superoperator::from_parts(d, parts)
}

/// Generator of the driven chain, optionally including the next-nearest
/// perturbation. Translation symmetry is attached.
pub fn chain_superoperator(params: &SpinChainParams, include_h1: bool) -> Result<Superoperator> {
    let h0 = build_h0(params)?.to_sparse();
    let d = h0.nrows();
    let mut parts = vec![(Part::Coherent, coherent_part(&h0))];
    if include_h1 {
        parts.push((Part::Perturbation, coherent_part(&build_h1(params)?.to_sparse())));
    }
    for j in lindblad_ops(params)? {
        parts.push((Part::Dissipative, dissipator_part(&j.op, j.rate)?));
    }
    Superoperator::from_parts(d, parts)?.with_translation(shift_permutation(params.n))
}

/// Column-stacking vectorisation.
pub fn vec(rho: &Array2<C64>) -> Array1<C64> {
    let d = rho.nrows();
    Array1::from_shape_fn(d * rho.ncols(), |p| rho[[p % d, p / d]])
}

pub fn unvec(x: &Array1<C64>, d: usize) -> Array2<C64> {
    Array2::from_shape_fn((d, d), |(r, c)| x[r + d * c])
}

#[derive(Clone, Debug)]
pub struct SteadyState {
    pub rho: Array2<C64>,
    /// `‖𝓛 vec ρ̂‖` for the unit-norm null vector.
    pub residual: f64,
    pub nullity_checked: bool,
    /// Lower bound on `σ₂/σ₁` of the generator.
    pub singular_ratio: f64,
    pub min_eigenvalue: f64,
}

/// The unique stationary state of `𝓛`.
///
/// The null vector solves the bordered system `(𝓛 + α t̂t̂†) x = t̂`, with `t̂`
/// the normalised trace functional; the bordered matrix is nonsingular
/// exactly when the null space is one-dimensional. Its smallest singular
/// value bounds the second-smallest singular value of `𝓛` from below
/// (rank-one interlacing), which gives the uniqueness ratio. With a
/// translation symmetry attached the problem is split into momentum sectors.
pub fn steady_state(s: &Superoperator) -> Result<SteadyState> {
    let d = s.dim;
    let td = s.trace_defect();
    if td > 1e-10 * s.matrix.max_abs().max(1.0) {
        return Err(Error::InvalidParams(format!(
            "generator is not trace preserving (defect {td:.3e})"
        )));
    }
    let (x, sigma2) = match &s.translation {
        Some((perm, order)) => sector_null_vector(s, perm, *order)?,
        None => {
            if d * d > DENSE_SUPER_MAX {
                return Err(Error::InvalidParams(format!(
                    "superoperator dimension {} too large without a symmetry reduction",
                    d * d
                )));
            }
            dense_null_vector(&s.matrix.to_dense(), d)?
        }
    };
    let nrm = linalg::vec_norm(&x);
    let xhat = x.mapv(|v| v / nrm);
    let residual = linalg::vec_norm(&s.apply_vec(&xhat));
    let ratio = sigma2 / residual.max(1e-300);
    if ratio < NULLITY_RATIO {
        return Err(Error::DegenerateSteadyState { ratio });
    }
    let rho = normalize_density(unvec(&x, d))?;
    let min_eigenvalue = linalg::eigvalsh(&rho)?[0];
    Ok(SteadyState {
        rho,
        residual,
        nullity_checked: true,
        singular_ratio: ratio,
        min_eigenvalue,
    })
}

fn normalize_density(rho: Array2<C64>) -> Result<Array2<C64>> {
    let h = linalg::hermitize(&rho);
    let tr = linalg::trace(&h).re;
    if tr.abs() < 1e-300 || !tr.is_finite() {
        return Err(Error::DegenerateSteadyState { ratio: 0.0 });
    }
    Ok(h.mapv(|v| v / tr))
}

/// Bordered solve on a dense generator; returns the null vector and
/// `σ_min` of the bordered matrix (0 when it is numerically singular).
pub(crate) fn bordered_solve(l: &Array2<C64>, t: &Array1<C64>) -> Result<(Array1<C64>, f64)> {
    let alpha = linalg::max_abs(l.view()).max(1e-300);
    let mut m = l.clone();
    for i in 0..t.len() {
        if t[i] == C64::new(0.0, 0.0) {
            continue;
        }
        for j in 0..t.len() {
            m[[i, j]] += alpha * t[i] * t[j].conj();
        }
    }
    let apply = m.clone();
    let lu = match DenseLu::new(m) {
        Ok(lu) => lu,
        Err(_) => return Err(Error::DegenerateSteadyState { ratio: 0.0 }),
    };
    let x = lu.solve(t)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSteadyState { ratio: 0.0 });
    }
    let smin = sigma_min(&apply, &lu)?;
    Ok((x, smin))
}

fn sigma_min(a: &Array2<C64>, lu: &DenseLu) -> Result<f64> {
    linalg::smallest_singular_value(
        a.nrows(),
        2,
        &|x| a.dot(x),
        &|b| lu.solve(b),
        &|b| lu.solve_h(b),
        40,
    )
}

fn dense_null_vector(l: &Array2<C64>, d: usize) -> Result<(Array1<C64>, f64)> {
    let s = 1.0 / (d as f64).sqrt();
    let t = Array1::from_shape_fn(d * d, |p| if p % d == p / d { C64::new(s, 0.0) } else { C64::new(0.0, 0.0) });
    bordered_solve(l, &t)
}

/// Orbits of pair indices under `ρ ↦ TρT†`.
struct PairOrbits {
    reps: Vec<usize>,
    period: Vec<usize>,
    orbit_of: Vec<usize>,
    /// `y = 𝒯^{shift[y]} rep(orbit_of[y])`.
    shift: Vec<usize>,
}

fn pair_orbits(perm: &[usize]) -> PairOrbits {
    let d = perm.len();
    let n2 = d * d;
    let pp = |p: usize| perm[p % d] + d * perm[p / d];
    let mut orbit_of = vec![usize::MAX; n2];
    let mut shift = vec![0; n2];
    let mut reps = Vec::new();
    let mut period = Vec::new();
    for p in 0..n2 {
        if orbit_of[p] != usize::MAX {
            continue;
        }
        let id = reps.len();
        let mut y = p;
        let mut j = 0;
        loop {
            orbit_of[y] = id;
            shift[y] = j;
            y = pp(y);
            j += 1;
            if y == p {
                break;
            }
        }
        reps.push(p);
        period.push(j);
    }
    PairOrbits {
        reps,
        period,
        orbit_of,
        shift,
    }
}

/// Dense block of `𝓛` in momentum sector `k` (allowed orbits only), together
/// with the orbit ids spanning it.
fn sector_block(cols: &CsrMatrix, orb: &PairOrbits, order: usize, k: usize) -> (Array2<C64>, Vec<usize>) {
    let allowed: Vec<usize> = (0..orb.reps.len()).filter(|&o| (k * orb.period[o]) % order == 0).collect();
    let mut index = vec![usize::MAX; orb.reps.len()];
    for (i, &o) in allowed.iter().enumerate() {
        index[o] = i;
    }
    let theta = 2.0 * std::f64::consts::PI * k as f64 / order as f64;
    let m = allowed.len();
    let mut blk = Array2::<C64>::zeros((m, m));
    for (ci, &r) in allowed.iter().enumerate() {
        let pr = orb.period[r] as f64;
        for (y, v) in cols.row(orb.reps[r]) {
            let s = orb.orbit_of[y];
            let si = index[s];
            if si == usize::MAX {
                continue;
            }
            let ps = orb.period[s] as f64;
            let ph = C64::from_polar(1.0, theta * orb.shift[y] as f64);
            blk[[si, ci]] += v * ph * (pr / ps).sqrt();
        }
    }
    (blk, allowed)
}

fn sector_null_vector(s: &Superoperator, perm: &[usize], order: usize) -> Result<(Array1<C64>, f64)> {
    let d = s.dim;
    let orb = pair_orbits(perm);
    let cols = s.matrix.transpose();

    let (l0, allowed0) = sector_block(&cols, &orb, order, 0);
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let t0 = Array1::from_iter(allowed0.iter().map(|&o| {
        let rep = orb.reps[o];
        if rep % d == rep / d {
            C64::new((orb.period[o] as f64).sqrt() * inv_sqrt_d, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    }));
    let (c, mut sigma2) = bordered_solve(&l0, &t0)?;

    for k in 1..order {
        let (lk, _) = sector_block(&cols, &orb, order, k);
        if lk.nrows() == 0 {
            continue;
        }
        let smin = match DenseLu::new(lk.clone()) {
            Ok(lu) => sigma_min(&lk, &lu)?,
            Err(_) => 0.0,
        };
        sigma2 = sigma2.min(smin);
    }

    let mut x = Array1::<C64>::zeros(d * d);
    for (i, &o) in allowed0.iter().enumerate() {
        let amp = c[i] / (orb.period[o] as f64).sqrt();
        let mut y = orb.reps[o];
        for _ in 0..orb.period[o] {
            x[y] = amp;
            y = perm[y % d] + d * perm[y / d];
        }
    }
    Ok((x, sigma2))
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Array2<C64>>,
    /// Largest `|Tr ρ(t) − Tr ρ(0)|` over the output grid.
    pub trace_drift: f64,
    pub stats: OdeStats,
}

/// Integrate `ρ̇ = 𝓛ρ` and sample at the increasing `times` (relative to 0).
pub fn time_evolve(s: &Superoperator, rho0: &Array2<C64>, times: &[f64], opts: &OdeOptions) -> Result<Trajectory> {
    let d = s.dim;
    if rho0.nrows() != d || rho0.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "initial state is {}x{}, generator acts on {d}x{d}",
            rho0.nrows(),
            rho0.ncols()
        )));
    }
    let x0 = vec(rho0);
    let (xs, stats) = dopri45(
        |_, y, dy| s.matrix.matvec_into(y.view(), dy.as_slice_mut().expect("contiguous")),
        0.0,
        &x0,
        times,
        opts,
    )?;
    let tr0 = linalg::trace(rho0);
    let states: Vec<Array2<C64>> = xs.iter().map(|x| unvec(x, d)).collect();
    let trace_drift = states
        .iter()
        .map(|r| (linalg::trace(r) - tr0).norm())
        .fold(0.0, f64::max);
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        trace_drift,
        stats,
    })
}

/// Plain-text dump, one `row col re im` line per nonzero entry.
pub fn write_matrix_dump<W: Write>(rho: &Array2<C64>, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# row col re im")?;
    for ((r, c), v) in rho.indexed_iter() {
        if *v != C64::new(0.0, 0.0) {
            writeln!(w, "{r} {c} {:.17e} {:.17e}", v.re, v.im)?;
        }
    }
    Ok(())
}
