//! Steady-state ensembles of the weakly open chain: the block-diagonal
//! leading-order state, the truncated generalized Gibbs ensemble fixed by
//! charge stationarity, and the thermal reference.

use ndarray::{Array1, Array2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{build_h0, build_h1, jump_operators, realize, JumpKind, LatticeOperator, SpinChainParams};
use crate::linalg::{self, eigh};
use crate::liouville::{bordered_solve, NULLITY_RATIO};
use crate::pauli::{build_charge_family, ChargeFamily};
use crate::sparse::CsrMatrix;
use crate::C64;

/// Relative tolerance for treating eigenvalues as degenerate.
pub const DEGENERACY_RTOL: f64 = 1e-8;

/// Simultaneous eigenbasis of H0 and a commuting charge family.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub n_sites: usize,
    pub energies: Array1<f64>,
    /// Columns are the common eigenvectors, sorted by energy.
    pub vectors: Array2<C64>,
    /// `c_i(n)` for every charge passed in, in the same order.
    pub charge_diagonals: Vec<Array1<f64>>,
    /// Half-open column ranges of the H0 degenerate eigenspaces.
    pub blocks: Vec<(usize, usize)>,
    pub degeneracy_tol: f64,
    /// Largest off-diagonal element of any charge in the output basis.
    pub max_offdiag: f64,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Dimension of the commutant of H0, `Σ_b d_b²`.
    pub fn commutant_dim(&self) -> usize {
        self.blocks.iter().map(|(a, b)| (b - a) * (b - a)).sum()
    }

    /// `V diag(w) V†`.
    pub fn from_diagonal(&self, w: &Array1<f64>) -> Array2<C64> {
        let mut vw = self.vectors.clone();
        for (mut col, &wi) in vw.axis_iter_mut(Axis(1)).zip(w.iter()) {
            col.mapv_inplace(|x| x * wi);
        }
        vw.dot(&linalg::adjoint(&self.vectors))
    }

    /// `V† A V` for a sparse operator.
    pub fn transform(&self, a: &CsrMatrix) -> Array2<C64> {
        linalg::adjoint(&self.vectors).dot(&a.matmul_dense(&self.vectors))
    }

    /// Boltzmann weights `e^{−β E_n}/Z`.
    pub fn gibbs_weights(&self, beta: f64) -> Array1<f64> {
        boltzmann(&self.energies.mapv(|e| beta * e))
    }
}

/// Normalised `exp(−x_n)`, shifted to avoid overflow.
fn boltzmann(x: &Array1<f64>) -> Array1<f64> {
    let xmin = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let w = x.mapv(|v| (-(v - xmin)).exp());
    let z = w.sum();
    w / z
}

/// Spectral-norm bound `max_r Σ_c |a_rc|` (exact up to a factor ≤ √D).
fn norm_bound(a: &Array2<C64>) -> f64 {
    a.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Split a sorted spectrum into runs whose consecutive gaps are within `tol`.
fn degenerate_runs(vals: &[f64], tol: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=vals.len() {
        if i == vals.len() || vals[i] - vals[i - 1] > tol {
            out.push((start, i));
            start = i;
        }
    }
    out
}

/// Diagonalize H0, then each charge in turn inside the current degenerate
/// blocks. Charges must commute with H0 and with each other.
pub fn diagonalize_with_charges(h0: &LatticeOperator, charges: &[LatticeOperator]) -> Result<EigenSystem> {
    let hd = h0.to_dense();
    let d = hd.nrows();
    let cds: Vec<Array2<C64>> = charges.iter().map(|c| c.to_dense()).collect();
    let hn = norm_bound(&hd).max(1.0);
    for (i, c) in cds.iter().enumerate() {
        if c.nrows() != d {
            return Err(Error::DimensionMismatch(format!("charge {i} has dimension {}", c.nrows())));
        }
        let cn = norm_bound(c).max(1.0);
        let comm = hd.dot(c) - c.dot(&hd);
        let r = linalg::frobenius(comm.view());
        if r > 1e-9 * hn * cn {
            return Err(Error::CommutatorViolation(r));
        }
        for c2 in cds.iter().take(i) {
            let comm = c.dot(c2) - c2.dot(c);
            let r = linalg::frobenius(comm.view());
            if r > 1e-9 * cn * norm_bound(c2).max(1.0) {
                return Err(Error::CommutatorViolation(r));
            }
        }
    }

    let (e, mut v) = eigh(&hd)?;
    let enorm = e.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let tol = DEGENERACY_RTOL * enorm.max(1.0);
    let energy_blocks = degenerate_runs(e.as_slice().unwrap(), tol);
    for w in e.as_slice().unwrap().windows(2) {
        let gap = w[1] - w[0];
        if gap > tol && gap < 100.0 * tol {
            return Err(Error::IllConditionedProjection(format!(
                "energy gap {gap:.3e} within two decades of the degeneracy tolerance {tol:.3e}"
            )));
        }
    }

    let mut blocks = energy_blocks.clone();
    for c in &cds {
        let ctol = DEGENERACY_RTOL * norm_bound(c).max(1.0);
        let mut refined = Vec::new();
        for &(a, b) in &blocks {
            if b - a == 1 {
                refined.push((a, b));
                continue;
            }
            let vb = v.slice(ndarray::s![.., a..b]).to_owned();
            let cv = c.dot(&vb);
            let m = linalg::hermitize(&linalg::adjoint(&vb).dot(&cv));
            let leak = linalg::frobenius((&cv - &vb.dot(&m)).view());
            if leak > 1e-8 * norm_bound(c).max(1.0) {
                return Err(Error::CommutatorViolation(leak));
            }
            let (mu, u) = eigh(&m)?;
            v.slice_mut(ndarray::s![.., a..b]).assign(&vb.dot(&u));
            for (s, t) in degenerate_runs(mu.as_slice().unwrap(), ctol) {
                refined.push((a + s, a + t));
            }
        }
        blocks = refined;
    }

    let energies = diag_real(&hd, &v);
    let mut max_offdiag: f64 = 0.0;
    let mut charge_diagonals = Vec::with_capacity(cds.len());
    for c in &cds {
        let m = linalg::adjoint(&v).dot(&c.dot(&v));
        for ((r, cc), x) in m.indexed_iter() {
            if r != cc {
                max_offdiag = max_offdiag.max(x.norm());
            }
        }
        charge_diagonals.push(m.diag().mapv(|x| x.re));
    }
    Ok(EigenSystem {
        n_sites: (d as f64).log2().round() as usize,
        energies,
        vectors: v,
        charge_diagonals,
        blocks: energy_blocks,
        degeneracy_tol: tol,
        max_offdiag,
    })
}

fn diag_real(a: &Array2<C64>, v: &Array2<C64>) -> Array1<f64> {
    let av = a.dot(v);
    Array1::from_shape_fn(v.ncols(), |n| {
        v.column(n).iter().zip(av.column(n)).map(|(x, y)| x.conj() * y).sum::<C64>().re
    })
}

#[derive(Clone, Debug)]
pub struct BlockDiagonalState {
    /// Density matrix in the computational basis.
    pub rho: Array2<C64>,
    /// Density matrix in the eigenbasis (block diagonal).
    pub rho_eigen: Array2<C64>,
    pub block_index: Vec<(usize, usize)>,
    pub n_params: usize,
    pub singular_ratio: f64,
}

/// Leading-order steady state: null vector of the dissipator projected onto
/// the commutant of H0.
pub fn rho_bd(es: &EigenSystem, jumps: &[(CsrMatrix, f64)]) -> Result<BlockDiagonalState> {
    let d = es.dim();
    let mut idx: Vec<(usize, usize)> = Vec::with_capacity(es.commutant_dim());
    let mut block_of = vec![0usize; d];
    for (bi, &(a, b)) in es.blocks.iter().enumerate() {
        for m in a..b {
            block_of[m] = bi;
        }
    }
    // pos[(m, n)] for m, n in the same block: offset of block + local index.
    let mut block_offset = Vec::with_capacity(es.blocks.len());
    for &(a, b) in &es.blocks {
        block_offset.push(idx.len());
        for n in a..b {
            for m in a..b {
                idx.push((m, n));
            }
        }
    }
    let pos = |m: usize, n: usize| -> usize {
        let bi = block_of[m];
        let (a, b) = es.blocks[bi];
        block_offset[bi] + (m - a) + (b - a) * (n - a)
    };
    let k = idx.len();
    let mut g = Array2::<C64>::zeros((k, k));
    for (l, rate) in jumps {
        if !(*rate >= 0.0) {
            return Err(Error::NegativeRate(*rate));
        }
        if *rate == 0.0 {
            continue;
        }
        let a = es.transform(l);
        let ada = linalg::adjoint(&a).dot(&a);
        for (col, &(m, n)) in idx.iter().enumerate() {
            // A|m⟩⟨n|A†
            for &(b0, b1) in &es.blocks {
                for np in b0..b1 {
                    let an = a[[np, n]].conj();
                    if an == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for mp in b0..b1 {
                        let am = a[[mp, m]];
                        if am != C64::new(0.0, 0.0) {
                            g[[pos(mp, np), col]] += *rate * am * an;
                        }
                    }
                }
            }
            let (b0, b1) = es.blocks[block_of[m]];
            for mp in b0..b1 {
                g[[pos(mp, n), col]] -= 0.5 * *rate * ada[[mp, m]];
                g[[pos(m, mp), col]] -= 0.5 * *rate * ada[[n, mp]];
            }
        }
    }
    let s = 1.0 / (d as f64).sqrt();
    let t = Array1::from_iter(idx.iter().map(|&(m, n)| if m == n { C64::new(s, 0.0) } else { C64::new(0.0, 0.0) }));
    let (x, sigma2) = bordered_solve(&g, &t)?;
    let xhat = x.mapv(|v| v / linalg::vec_norm(&x));
    let residual = linalg::vec_norm(&g.dot(&xhat));
    let ratio = sigma2 / residual.max(1e-300);
    if ratio < NULLITY_RATIO {
        return Err(Error::DegenerateSteadyState { ratio });
    }
    let mut re = Array2::<C64>::zeros((d, d));
    for (kk, &(m, n)) in idx.iter().enumerate() {
        re[[m, n]] = x[kk];
    }
    let re = linalg::hermitize(&re);
    let tr = linalg::trace(&re).re;
    let re = re.mapv(|v| v / tr);
    let rho = es.vectors.dot(&re).dot(&linalg::adjoint(&es.vectors));
    Ok(BlockDiagonalState {
        rho,
        rho_eigen: re,
        block_index: es.blocks.clone(),
        n_params: k,
        singular_ratio: ratio,
    })
}

/// Golden-rule contribution of the integrability-breaking perturbation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct H1Drift {
    /// Lorentzian broadening η (> 0).
    pub eta: f64,
    /// Weight relative to the dissipative part.
    pub scale: f64,
}

/// Transition-strength matrices `W[m, n] = Σ_j |⟨m|L_j|n⟩|²` in the
/// eigenbasis, one per jump family, plus `|⟨m|H1|n⟩|²` when requested.
#[derive(Clone, Debug)]
pub struct DriftKernel {
    lowering: Array2<f64>,
    raising: Array2<f64>,
    h1_sq: Option<Array2<f64>>,
    energies: Array1<f64>,
}

fn transition_strengths(es: &EigenSystem, ops: &[CsrMatrix]) -> Array2<f64> {
    let d = es.dim();
    let mut w = Array2::<f64>::zeros((d, d));
    for l in ops {
        let a = es.transform(l);
        w.zip_mut_with(&a, |x, y| *x += y.norm_sqr());
    }
    w
}

impl DriftKernel {
    pub fn new(es: &EigenSystem, params: &SpinChainParams, include_h1: bool) -> Result<Self> {
        if params.n != es.n_sites {
            return Err(Error::DimensionMismatch(format!(
                "eigensystem has {} sites, parameters {}",
                es.n_sites, params.n
            )));
        }
        let n = params.n;
        let h1_sq = if include_h1 {
            let a = es.transform(&build_h1(params)?.to_sparse());
            Some(a.mapv(|x| x.norm_sqr()))
        } else {
            None
        };
        Ok(Self {
            lowering: transition_strengths(es, &jump_operators(n, JumpKind::Lowering)),
            raising: transition_strengths(es, &jump_operators(n, JumpKind::ConditionalRaising)),
            h1_sq,
            energies: es.energies.clone(),
        })
    }

    pub fn has_h1(&self) -> bool {
        self.h1_sq.is_some()
    }

    /// Total rate matrix `R[m, n]` for transitions `n → m`.
    pub fn rates(&self, epsilon: f64, gamma: f64, h1: Option<H1Drift>) -> Result<Array2<f64>> {
        let mut r = &self.lowering * (epsilon * (1.0 - gamma)) + &self.raising * (epsilon * gamma);
        if let Some(H1Drift { eta, scale }) = h1 {
            if !(eta > 0.0) {
                return Err(Error::InvalidParams(format!("broadening must be positive, got {eta}")));
            }
            let hsq = self
                .h1_sq
                .as_ref()
                .ok_or_else(|| Error::InvalidParams("kernel built without the perturbation".into()))?;
            let e = &self.energies;
            // 2π |⟨m|H1|n⟩|² · (1/π) η / ((E_n − E_m)² + η²)
            for ((m, n), x) in r.indexed_iter_mut() {
                let de = e[n] - e[m];
                *x += scale * 2.0 * hsq[[m, n]] * eta / (de * de + eta * eta);
            }
        }
        Ok(r)
    }
}

/// `⟨Ċ_i⟩ = Σ_{mn} (c_i(m) − c_i(n)) R[m, n] w_n` for every charge in `es`.
pub fn charge_drift_with_rates(es: &EigenSystem, rates: &Array2<f64>, weights: &Array1<f64>) -> Array1<f64> {
    let inflow = rates.dot(weights);
    let outflow = rates.sum_axis(Axis(0)) * weights;
    Array1::from_iter(
        es.charge_diagonals
            .iter()
            .map(|c| c.dot(&inflow) - c.dot(&outflow)),
    )
}

/// Charge drift for diagonal weights in the simultaneous eigenbasis.
pub fn charge_drift(
    es: &EigenSystem,
    kernel: &DriftKernel,
    weights: &Array1<f64>,
    epsilon: f64,
    gamma: f64,
    h1: Option<H1Drift>,
) -> Result<Array1<f64>> {
    if weights.len() != es.dim() {
        return Err(Error::DimensionMismatch("weight vector".into()));
    }
    Ok(charge_drift_with_rates(es, &kernel.rates(epsilon, gamma, h1)?, weights))
}

#[derive(Clone, Debug)]
pub struct TggeOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
}

impl Default for TggeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
            fd_step: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GgeSolution {
    /// Positions (into `EigenSystem::charge_diagonals`) of the charges used.
    pub charges: Vec<usize>,
    pub lambdas: Array1<f64>,
    /// Eigenbasis weights `w_n`.
    pub weights: Array1<f64>,
    pub rho: Array2<C64>,
    pub drift_residual: Array1<f64>,
    pub iterations: usize,
    pub eta_broadening: Option<f64>,
}

/// Weights of `exp(−Σ λ_i C_i)/Z`.
pub fn gge_weights(es: &EigenSystem, charges: &[usize], lambdas: &Array1<f64>) -> Array1<f64> {
    let mut x = Array1::<f64>::zeros(es.dim());
    for (&ci, &l) in charges.iter().zip(lambdas.iter()) {
        x.scaled_add(l, &es.charge_diagonals[ci]);
    }
    boltzmann(&x)
}

/// Stationarity `⟨Ċ_i⟩ = 0` for the selected charges, solved by damped
/// Newton with a central-difference Jacobian starting from infinite
/// temperature.
pub fn solve_tgge(es: &EigenSystem, rates: &Array2<f64>, charges: &[usize], opts: &TggeOptions) -> Result<GgeSolution> {
    if charges.is_empty() {
        return Err(Error::InvalidParams("at least one charge is required".into()));
    }
    let k = charges.len();
    let drift = |lam: &Array1<f64>| -> Array1<f64> {
        let w = gge_weights(es, charges, lam);
        let all = charge_drift_with_rates(es, rates, &w);
        Array1::from_iter(charges.iter().map(|&c| all[c]))
    };
    let norm = |f: &Array1<f64>| f.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let mut lam = Array1::<f64>::zeros(k);
    let mut f = drift(&lam);
    let mut res = norm(&f);
    let mut iterations = 0;
    while res > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence {
                iterations,
                residual: res,
            });
        }
        iterations += 1;
        let mut jac = Array2::<f64>::zeros((k, k));
        for j in 0..k {
            let h = opts.fd_step * lam[j].abs().max(1.0);
            let mut lp = lam.clone();
            lp[j] += h;
            let mut lm = lam.clone();
            lm[j] -= h;
            let col = (drift(&lp) - drift(&lm)) / (2.0 * h);
            jac.column_mut(j).assign(&col);
        }
        let jn = jac.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if (0..k).any(|j| jac.column(j).iter().all(|x| x.abs() <= 1e-14 * jn.max(1e-300))) {
            return Err(Error::SingularJacobian);
        }
        let step = linalg::solve_real(&jac, &(-&f))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=20 {
            let trial = &lam + &(&step * t);
            let ft = drift(&trial);
            let rt = norm(&ft);
            if rt.is_finite() && rt < res {
                lam = trial;
                f = ft;
                res = rt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                iterations,
                residual: res,
            });
        }
    }
    let weights = gge_weights(es, charges, &lam);
    Ok(GgeSolution {
        charges: charges.to_vec(),
        lambdas: lam,
        rho: es.from_diagonal(&weights),
        weights,
        drift_residual: f,
        iterations,
        eta_broadening: None,
    })
}

/// Thermal energy `Σ E_n e^{−βE_n}/Z`.
pub fn thermal_energy(es: &EigenSystem, beta: f64) -> f64 {
    es.gibbs_weights(beta).dot(&es.energies)
}

/// Inverse temperature whose Gibbs state has energy `target`.
pub fn thermal_fit(es: &EigenSystem, target: f64) -> Result<f64> {
    let emin = es.energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let emax = es.energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(target > emin && target < emax) {
        return Err(Error::TargetOutOfRange {
            target,
            min: emin,
            max: emax,
        });
    }
    let tol = 1e-12 * es.n_sites.max(1) as f64;
    let f = |b: f64| thermal_energy(es, b) - target;
    // E(β) decreases monotonically; bracket the root.
    let (mut lo, mut hi) = (-1.0, 1.0);
    while f(lo) < 0.0 {
        lo *= 2.0;
        if lo < -1e8 {
            return Err(Error::NoConvergence { iterations: 0, residual: f(lo) });
        }
    }
    while f(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::NoConvergence { iterations: 0, residual: f(hi) });
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-6 * hi.abs().max(1.0) {
            break;
        }
    }
    // Newton polish: dE/dβ = −Var(E).
    let mut b = 0.5 * (lo + hi);
    for _ in 0..50 {
        let w = es.gibbs_weights(b);
        let e1 = w.dot(&es.energies);
        let e2 = w.dot(&es.energies.mapv(|e| e * e));
        let r = e1 - target;
        if r.abs() <= tol {
            return Ok(b);
        }
        let var = e2 - e1 * e1;
        let nb = b + r / var.max(1e-300);
        b = if nb > lo && nb < hi { nb } else { 0.5 * (lo + hi) };
        if f(b) > 0.0 {
            lo = lo.max(b);
        } else {
            hi = hi.min(b);
        }
    }
    let r = f(b);
    if r.abs() <= tol {
        Ok(b)
    } else {
        Err(Error::NoConvergence { iterations: 50, residual: r.abs() })
    }
}

/// Positions of the charges used by a tGGE with `n_c` charges: H0 alone for
/// `n_c = 1`, otherwise the first `n_c` members of the family.
pub fn tgge_selection(family: &ChargeFamily, n_c: usize) -> Result<Vec<usize>> {
    if n_c == 0 || n_c > family.len() {
        return Err(Error::InvalidParams(format!(
            "cannot select {n_c} charges from a family of {}",
            family.len()
        )));
    }
    if n_c == 1 {
        let p = family
            .indices
            .iter()
            .position(|&i| i == 2)
            .expect("family always contains H0");
        return Ok(vec![p]);
    }
    Ok((0..n_c).collect())
}

/// H0, its charge family and their common eigenbasis for one parameter set.
#[derive(Clone, Debug)]
pub struct ChainSystem {
    pub params: SpinChainParams,
    pub family: ChargeFamily,
    pub h0: LatticeOperator,
    pub charges: Vec<LatticeOperator>,
    pub es: EigenSystem,
    pub kernel: DriftKernel,
}

impl ChainSystem {
    pub fn new(params: &SpinChainParams, n_charges: usize, include_h1: bool) -> Result<Self> {
        params.validate()?;
        let family = build_charge_family(params, n_charges)?;
        let h0 = build_h0(params)?;
        let charges = family
            .charges
            .iter()
            .map(|q| realize(q, params.n))
            .collect::<Result<Vec<_>>>()?;
        let es = diagonalize_with_charges(&h0, &charges)?;
        let kernel = DriftKernel::new(&es, params, include_h1)?;
        Ok(Self {
            params: params.clone(),
            family,
            h0,
            charges,
            es,
            kernel,
        })
    }

    /// Jump operators with the rates of this parameter set at dissipation
    /// asymmetry `gamma`.
    pub fn jumps(&self, gamma: f64) -> Vec<(CsrMatrix, f64)> {
        let n = self.params.n;
        let eps = self.params.epsilon;
        let mut out: Vec<(CsrMatrix, f64)> = jump_operators(n, JumpKind::Lowering)
            .into_iter()
            .map(|l| (l, eps * (1.0 - gamma)))
            .collect();
        out.extend(jump_operators(n, JumpKind::ConditionalRaising).into_iter().map(|l| (l, eps * gamma)));
        out
    }

    pub fn rho_bd(&self, gamma: f64) -> Result<BlockDiagonalState> {
        rho_bd(&self.es, &self.jumps(gamma))
    }

    pub fn tgge(&self, gamma: f64, n_c: usize, h1: Option<H1Drift>, opts: &TggeOptions) -> Result<GgeSolution> {
        let sel = tgge_selection(&self.family, n_c)?;
        let rates = self.kernel.rates(self.params.epsilon, gamma, h1)?;
        let mut sol = solve_tgge(&self.es, &rates, &sel, opts)?;
        sol.eta_broadening = h1.map(|h| h.eta);
        Ok(sol)
    }

    pub fn thermal_fit(&self, target_energy: f64) -> Result<f64> {
        thermal_fit(&self.es, target_energy)
    }

    pub fn gibbs_state(&self, beta: f64) -> Array2<C64> {
        self.es.from_diagonal(&self.es.gibbs_weights(beta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::s_z;
    use crate::liouville::{chain_superoperator, steady_state, Part};

    fn small() -> SpinChainParams {
        SpinChainParams {
            n: 4,
            ..SpinChainParams::default()
        }
    }

    #[test]
    fn runs_split_on_gaps() {
        assert_eq!(degenerate_runs(&[0.0, 1e-12, 1.0, 2.0, 2.0], 1e-9), vec![(0, 2), (2, 3), (3, 5)]);
    }

    #[test]
    fn magnetisation_spectrum_in_isotropic_basis() {
        let p = SpinChainParams {
            n: 4,
            jz: 1.0,
            ..SpinChainParams::default()
        };
        let sys = ChainSystem::new(&p, 2, false).unwrap();
        assert_eq!(sys.family.indices, vec![1, 2]);
        for &x in sys.es.charge_diagonals[0].iter() {
            assert!((x - x.round()).abs() < 1e-10 && x.abs() <= 2.0 + 1e-10, "{x}");
        }
        assert!(sys.es.max_offdiag < 1e-10);
    }

    #[test]
    fn noncommuting_charge_rejected() {
        let p = small();
        let h0 = build_h0(&p).unwrap();
        let bad = LatticeOperator::from_sparse(s_z(4, 0), true).unwrap();
        assert!(matches!(
            diagonalize_with_charges(&h0, &[bad]),
            Err(Error::CommutatorViolation(_))
        ));
    }

    #[test]
    fn drift_matches_superoperator_trace() {
        let p = small();
        let sys = ChainSystem::new(&p, 2, false).unwrap();
        let l = chain_superoperator(&p, false).unwrap();
        let l1 = l.part(Part::Dissipative);
        let w = Array1::from_shape_fn(16, |i| 0.1 + (i as f64 * 0.37).sin().abs());
        let w = &w / w.sum();
        let rho = sys.es.from_diagonal(&w);
        let got = charge_drift(&sys.es, &sys.kernel, &w, p.epsilon, p.gamma, None).unwrap();
        let lr = crate::liouville::unvec(&l1.matvec(crate::liouville::vec(&rho).view()), 16);
        for (i, q) in sys.charges.iter().enumerate() {
            let direct = q.trace_with(&lr).re;
            assert!((got[i] - direct).abs() < 1e-12, "{i}: {} vs {direct}", got[i]);
        }
    }

    #[test]
    fn bd_close_to_exact_at_small_epsilon() {
        let p = small();
        let sys = ChainSystem::new(&p, 2, false).unwrap();
        let bd = sys.rho_bd(p.gamma).unwrap();
        let ex = steady_state(&chain_superoperator(&p, false).unwrap()).unwrap();
        let e_bd = sys.h0.trace_with(&bd.rho).re;
        let e_ex = sys.h0.trace_with(&ex.rho).re;
        assert!((e_bd - e_ex).abs() / 4.0 < 0.05, "{e_bd} {e_ex}");
        assert_eq!(bd.n_params, sys.es.commutant_dim());
    }

    #[test]
    fn gibbs_limit_matches_thermal_fit() {
        let p = small();
        let sys = ChainSystem::new(&p, 2, false).unwrap();
        let sol = sys.tgge(p.gamma, 1, None, &TggeOptions::default()).unwrap();
        let e = sys.h0.trace_with(&sol.rho).re;
        let beta = sys.thermal_fit(e).unwrap();
        assert!((sol.lambdas[0] - beta).abs() < 1e-8, "{} {beta}", sol.lambdas[0]);
    }

    #[test]
    fn thermal_fit_range_and_symmetry() {
        let p = small();
        let sys = ChainSystem::new(&p, 1, false).unwrap();
        let emin = sys.es.energies[0];
        assert!(matches!(sys.thermal_fit(emin - 1.0), Err(Error::TargetOutOfRange { .. })));
        assert!(sys.thermal_fit(emin + 1e-3).unwrap() > 5.0);
    }
}
