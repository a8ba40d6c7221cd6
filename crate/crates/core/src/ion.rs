//! Two trapped ions sharing one motional mode: the driven, sideband-coupled
//! scheme that realises the conditional raising `|10⟩⟨00|` as an engineered
//! decay, and the optimisation of its preparation fidelity.
//!
//! Each ion has levels {0, 1, e}; the mode is truncated at `n_max` phonons.
//! Only states reachable from `|00⟩|0⟩` are kept.

use std::collections::VecDeque;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liouville::{build_superoperator, time_evolve, Superoperator};
use crate::ode::OdeOptions;
use crate::optimize::{nelder_mead, NelderMeadOptions};
use crate::sparse::CsrMatrix;
use crate::lattice::LatticeOperator;
use crate::C64;

/// Largest admissible top-phonon population.
pub const LEAKAGE_BOUND: f64 = 1e-4;

pub const LEVEL_0: u8 = 0;
pub const LEVEL_1: u8 = 1;
pub const LEVEL_E: u8 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IonSystemParams {
    /// Carrier Rabi frequency Ω on `|0⟩ ↔ |e⟩` of both ions.
    pub omega: f64,
    /// Sideband coupling (the unit of frequency).
    pub g: f64,
    /// Ionic detuning Δ.
    pub delta: f64,
    /// Motional detuning δ.
    pub delta_ph: f64,
    /// Engineered decay `|e⟩ → |1⟩` on ion 1.
    pub gamma_e1: f64,
    /// Optional repump `|1⟩ → |0⟩` on ion 1.
    pub gamma_rep: f64,
    /// Optional phonon damping.
    pub kappa: f64,
    pub n_max: usize,
    /// Energy offset of all states with ion 1 in `|1⟩`, for compensating the
    /// drive-induced light shift.
    pub stark_compensation: f64,
}

impl Default for IonSystemParams {
    fn default() -> Self {
        let s2 = std::f64::consts::SQRT_2;
        Self {
            omega: 0.05,
            g: 1.0,
            delta: s2,
            delta_ph: s2,
            gamma_e1: 0.29,
            gamma_rep: 0.0,
            kappa: 0.0,
            n_max: 3,
            stark_compensation: 0.0,
        }
    }
}

impl IonSystemParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_max < 1 {
            return Err(Error::InvalidParams("phonon cutoff must be at least 1".into()));
        }
        for v in [self.gamma_e1, self.gamma_rep, self.kappa] {
            if !(v >= 0.0) {
                return Err(Error::NegativeRate(v));
            }
        }
        for (name, v) in [
            ("omega", self.omega),
            ("g", self.g),
            ("delta", self.delta),
            ("delta_ph", self.delta_ph),
            ("stark_compensation", self.stark_compensation),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} is not finite")));
            }
        }
        if self.n_max > 20 {
            return Err(Error::InvalidParams(format!("phonon cutoff {} too large", self.n_max)));
        }
        Ok(())
    }

    /// All frequencies and rates multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            omega: self.omega * s,
            g: self.g * s,
            delta: self.delta * s,
            delta_ph: self.delta_ph * s,
            gamma_e1: self.gamma_e1 * s,
            gamma_rep: self.gamma_rep * s,
            kappa: self.kappa * s,
            stark_compensation: self.stark_compensation * s,
            n_max: self.n_max,
        }
    }
}

/// Basis label: (ion 1 level, ion 2 level, phonon number).
pub type IonState = (u8, u8, usize);

/// Reachable-subspace model.
#[derive(Clone, Debug)]
pub struct IonModel {
    pub params: IonSystemParams,
    pub states: Vec<IonState>,
    pub hamiltonian: CsrMatrix,
    pub jumps: Vec<(CsrMatrix, f64)>,
    pub superoperator: Superoperator,
}

fn full_index(s: IonState, n_max: usize) -> usize {
    (s.0 as usize * 3 + s.1 as usize) * (n_max + 1) + s.2
}

fn full_label(i: usize, n_max: usize) -> IonState {
    let np = n_max + 1;
    (((i / np) / 3) as u8, ((i / np) % 3) as u8, i % np)
}

/// Hamiltonian and jumps on the full `9(n_max+1)` space.
fn full_operators(p: &IonSystemParams) -> (CsrMatrix, Vec<(CsrMatrix, f64)>) {
    let nm = p.n_max;
    let dim = 9 * (nm + 1);
    let mut h = Vec::new();
    let mut le1 = Vec::new();
    let mut lrep = Vec::new();
    let mut la = Vec::new();
    for k in 0..dim {
        let (i1, i2, n) = full_label(k, nm);
        let mut diag = p.delta_ph * n as f64;
        diag += p.delta * ((i1 == LEVEL_E) as u8 + (i2 == LEVEL_E) as u8) as f64;
        if i1 == LEVEL_1 {
            diag += p.stark_compensation;
        }
        h.push((k, k, C64::new(diag, 0.0)));
        for ion in 0..2 {
            let lv = if ion == 0 { i1 } else { i2 };
            let with = |new: u8, n2: usize| {
                if ion == 0 {
                    full_index((new, i2, n2), nm)
                } else {
                    full_index((i1, new, n2), nm)
                }
            };
            if lv == LEVEL_0 {
                // (Ω/2)|e⟩⟨0| and g a|e⟩⟨0|
                h.push((with(LEVEL_E, n), k, C64::new(p.omega / 2.0, 0.0)));
                if n > 0 {
                    h.push((with(LEVEL_E, n - 1), k, C64::new(p.g * (n as f64).sqrt(), 0.0)));
                }
            }
            if lv == LEVEL_E {
                // (Ω/2)|0⟩⟨e| and g a†|0⟩⟨e|
                h.push((with(LEVEL_0, n), k, C64::new(p.omega / 2.0, 0.0)));
                if n < nm {
                    h.push((with(LEVEL_0, n + 1), k, C64::new(p.g * ((n + 1) as f64).sqrt(), 0.0)));
                }
            }
        }
        if i1 == LEVEL_E {
            le1.push((full_index((LEVEL_1, i2, n), nm), k, C64::new(1.0, 0.0)));
        }
        if i1 == LEVEL_1 {
            lrep.push((full_index((LEVEL_0, i2, n), nm), k, C64::new(1.0, 0.0)));
        }
        if n > 0 {
            la.push((full_index((i1, i2, n - 1), nm), k, C64::new((n as f64).sqrt(), 0.0)));
        }
    }
    let mk = |t| CsrMatrix::from_triplets(dim, dim, t);
    let mut jumps = Vec::new();
    for (t, r) in [(le1, p.gamma_e1), (lrep, p.gamma_rep), (la, p.kappa)] {
        if r > 0.0 {
            jumps.push((mk(t), r));
        }
    }
    (mk(h), jumps)
}

/// Breadth-first search from `|00⟩|0⟩` along nonzero couplings.
fn reachable(h: &CsrMatrix, jumps: &[(CsrMatrix, f64)], start: usize) -> Vec<usize> {
    let dim = h.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); dim];
    for (r, c, _) in h.triplets() {
        adj[c].push(r);
        adj[r].push(c);
    }
    for (l, _) in jumps {
        for (r, c, _) in l.triplets() {
            adj[c].push(r);
        }
    }
    let mut seen = vec![false; dim];
    let mut q = VecDeque::from([start]);
    seen[start] = true;
    while let Some(k) = q.pop_front() {
        for &m in &adj[k] {
            if !seen[m] {
                seen[m] = true;
                q.push_back(m);
            }
        }
    }
    (0..dim).filter(|&k| seen[k]).collect()
}

fn restrict(m: &CsrMatrix, keep: &[usize], map: &[usize]) -> CsrMatrix {
    let t = m
        .triplets()
        .filter(|(r, c, _)| map[*r] != usize::MAX && map[*c] != usize::MAX)
        .map(|(r, c, v)| (map[r], map[c], v))
        .collect();
    CsrMatrix::from_triplets(keep.len(), keep.len(), t)
}

impl IonModel {
    pub fn new(p: &IonSystemParams) -> Result<Self> {
        p.validate()?;
        let (h, jumps) = full_operators(p);
        let start = full_index((LEVEL_0, LEVEL_0, 0), p.n_max);
        let keep = reachable(&h, &jumps, start);
        let mut map = vec![usize::MAX; h.nrows()];
        for (i, &k) in keep.iter().enumerate() {
            map[k] = i;
        }
        let hr = restrict(&h, &keep, &map);
        let jr: Vec<(CsrMatrix, f64)> = jumps.iter().map(|(l, r)| (restrict(l, &keep, &map), *r)).collect();
        let superoperator = build_superoperator(&LatticeOperator::from_sparse(hr.clone(), true)?, &jr)?;
        Ok(Self {
            params: p.clone(),
            states: keep.iter().map(|&k| full_label(k, p.n_max)).collect(),
            hamiltonian: hr,
            jumps: jr,
            superoperator,
        })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, s: IonState) -> Option<usize> {
        self.states.iter().position(|&x| x == s)
    }

    /// `|00⟩|0⟩⟨00|⟨0|`.
    pub fn initial_state(&self) -> Array2<C64> {
        let mut rho = Array2::zeros((self.dim(), self.dim()));
        let i = self.index_of((LEVEL_0, LEVEL_0, 0)).expect("start state kept");
        rho[[i, i]] = C64::new(1.0, 0.0);
        rho
    }

    fn pop(&self, rho: &Array2<C64>, s: IonState) -> f64 {
        self.index_of(s).map(|i| rho[[i, i]].re).unwrap_or(0.0)
    }

    /// Populations reported along a trajectory.
    pub fn populations(&self, rho: &Array2<C64>) -> IonPopulations {
        let nm = self.params.n_max;
        let p1e = (0..=nm).map(|n| self.pop(rho, (LEVEL_1, LEVEL_E, n))).sum();
        let top = self
            .states
            .iter()
            .enumerate()
            .filter(|(_, s)| s.2 == nm)
            .map(|(i, _)| rho[[i, i]].re)
            .sum();
        // |ψ_e⟩|0⟩ = (|e0⟩ + |0e⟩)|0⟩/√2
        let a = self.index_of((LEVEL_E, LEVEL_0, 0));
        let b = self.index_of((LEVEL_0, LEVEL_E, 0));
        let psi_e = match (a, b) {
            (Some(a), Some(b)) => 0.5 * (rho[[a, a]] + rho[[b, b]] + rho[[a, b]] + rho[[b, a]]).re,
            _ => 0.0,
        };
        IonPopulations {
            p00: self.pop(rho, (LEVEL_0, LEVEL_0, 0)),
            p10: self.pop(rho, (LEVEL_1, LEVEL_0, 0)),
            p_psi_e: psi_e,
            p1e,
            p_phonon_top: top,
        }
    }

    pub fn ode_options() -> OdeOptions {
        OdeOptions {
            rtol: 1e-9,
            atol: 1e-12,
            ..OdeOptions::default()
        }
    }

    /// Looser tolerances used inside the optimiser's objective.
    pub fn search_ode_options() -> OdeOptions {
        OdeOptions {
            rtol: 1e-6,
            atol: 1e-10,
            ..OdeOptions::default()
        }
    }

    /// Populations at each of the increasing `times`.
    pub fn trajectory(&self, times: &[f64]) -> Result<Vec<IonPopulations>> {
        self.trajectory_with(times, &Self::ode_options())
    }

    pub fn trajectory_with(&self, times: &[f64], opts: &OdeOptions) -> Result<Vec<IonPopulations>> {
        let tr = time_evolve(&self.superoperator, &self.initial_state(), times, opts)?;
        Ok(tr.states.iter().map(|r| self.populations(r)).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IonPopulations {
    /// `|00⟩|0⟩`.
    pub p00: f64,
    /// `|10⟩|0⟩`, the target state.
    pub p10: f64,
    pub p_psi_e: f64,
    /// `|1e⟩`, summed over phonon number.
    pub p1e: f64,
    /// All states with `n_max` phonons.
    pub p_phonon_top: f64,
}

pub fn build_ion_liouvillian(p: &IonSystemParams) -> Result<Superoperator> {
    Ok(IonModel::new(p)?.superoperator)
}

/// Energies of the dressed states of `{|ψ_e⟩|0⟩, |00⟩|1⟩}`, i.e. the
/// eigenvalues of `[[Δ, √2 g], [√2 g, δ]]`, as `(Δ₊, Δ₋)`.
pub fn dressed_detunings(delta: f64, delta_ph: f64, g: f64) -> (f64, f64) {
    let mean = 0.5 * (delta + delta_ph);
    let half = 0.5 * ((delta - delta_ph).powi(2) + 8.0 * g * g).sqrt();
    (mean + half, mean - half)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PreparationOutcome {
    /// Population of `|10⟩|0⟩` at the final time.
    pub fidelity: f64,
    pub peak_p1e: f64,
    pub final_p1e: f64,
    /// Largest top-phonon population on the sampling grid.
    pub leakage: f64,
}

/// Evolve from `|00⟩|0⟩` to `t` on a uniform grid of `samples + 1` points.
pub fn simulate_preparation_sampled(p: &IonSystemParams, t: f64, samples: usize) -> Result<PreparationOutcome> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParams(format!("preparation time must be non-negative, got {t}")));
    }
    let model = IonModel::new(p)?;
    let s = samples.max(1);
    let times: Vec<f64> = (0..=s).map(|k| t * k as f64 / s as f64).collect();
    let pops = model.trajectory(&times)?;
    let last = pops.last().expect("non-empty grid");
    let out = PreparationOutcome {
        fidelity: last.p10,
        peak_p1e: pops.iter().map(|q| q.p1e).fold(0.0, f64::max),
        final_p1e: last.p1e,
        leakage: pops.iter().map(|q| q.p_phonon_top).fold(0.0, f64::max),
    };
    if out.leakage > LEAKAGE_BOUND {
        return Err(Error::CutoffLeakage(out.leakage));
    }
    Ok(out)
}

pub fn simulate_preparation(p: &IonSystemParams, t: f64) -> Result<PreparationOutcome> {
    simulate_preparation_sampled(p, t, 200)
}

/// Target population at `t` only (no sampling, no leakage check).
pub fn fidelity_at(p: &IonSystemParams, t: f64) -> Result<f64> {
    fidelity_at_with(p, t, &IonModel::ode_options())
}

pub fn fidelity_at_with(p: &IonSystemParams, t: f64, opts: &OdeOptions) -> Result<f64> {
    let model = IonModel::new(p)?;
    let pops = model.trajectory_with(&[t], opts)?;
    Ok(pops[0].p10)
}

/// Which of {Γ_e1, Ω, Δ, δ} the optimiser may vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FreeParams {
    pub gamma_e1: bool,
    pub omega: bool,
    pub delta: bool,
    pub delta_ph: bool,
}

impl Default for FreeParams {
    fn default() -> Self {
        Self {
            gamma_e1: true,
            omega: true,
            delta: true,
            delta_ph: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IonOptOptions {
    pub seeds: usize,
    pub max_evals: usize,
    pub xatol: f64,
    pub fatol: f64,
}

impl Default for IonOptOptions {
    fn default() -> Self {
        Self {
            seeds: 5,
            max_evals: 300,
            xatol: 1e-4,
            fatol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FidelityResult {
    pub t_opt: f64,
    pub f_opt: f64,
    pub params_opt: IonSystemParams,
    /// `|1e⟩` population at `t_opt`.
    pub residual_pe1: f64,
    pub peak_pe1: f64,
    pub leakage: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Best value reached from each starting point.
    pub seed_values: Vec<f64>,
}

/// Seeds for the multi-start: Ω = Γ/6 and Δ = δ = √2 g, with Γ spread
/// geometrically around the value for which the lowest-order effective
/// rate `4Ω²/Γ = Γ/9` completes about four e-folds by `t_opt`.
fn seeds(t_opt: f64, base: &IonSystemParams, count: usize) -> Vec<IonSystemParams> {
    let centre = 36.0 / t_opt;
    let s2 = std::f64::consts::SQRT_2 * base.g;
    (0..count)
        .map(|k| {
            let spread = if count == 1 { 0.0 } else { k as f64 / (count - 1) as f64 - 0.5 };
            let gamma = centre * 2f64.powf(1.2 * spread);
            IonSystemParams {
                gamma_e1: gamma,
                omega: gamma / 6.0,
                delta: s2,
                delta_ph: s2,
                ..base.clone()
            }
        })
        .collect()
}

/// Maximise the target population at `t_opt` over the free parameters.
/// Rates enter through their logarithms so they stay positive.
pub fn optimize_fidelity(t_opt: f64, base: &IonSystemParams, free: FreeParams, opts: &IonOptOptions) -> Result<FidelityResult> {
    if !(t_opt > 0.0) {
        return Err(Error::InvalidParams(format!("t_opt must be positive, got {t_opt}")));
    }
    base.validate()?;
    let encode = |p: &IonSystemParams| -> Vec<f64> {
        let mut x = Vec::new();
        if free.gamma_e1 {
            x.push(p.gamma_e1.max(1e-12).ln());
        }
        if free.omega {
            x.push(p.omega.abs().max(1e-12).ln());
        }
        if free.delta {
            x.push(p.delta);
        }
        if free.delta_ph {
            x.push(p.delta_ph);
        }
        x
    };
    let decode = |x: &[f64], start: &IonSystemParams| -> IonSystemParams {
        let mut p = start.clone();
        let mut it = x.iter();
        if free.gamma_e1 {
            p.gamma_e1 = it.next().unwrap().exp();
        }
        if free.omega {
            p.omega = it.next().unwrap().exp();
        }
        if free.delta {
            p.delta = *it.next().unwrap();
        }
        if free.delta_ph {
            p.delta_ph = *it.next().unwrap();
        }
        p
    };

    let search = IonModel::search_ode_options();
    let starts = if encode(base).is_empty() { vec![base.clone()] } else { seeds(t_opt, base, opts.seeds.max(1)) };
    let mut best: Option<(f64, IonSystemParams, bool)> = None;
    let mut evaluations = 0;
    let mut seed_values = Vec::new();
    for start in starts {
        let x0 = encode(&start);
        let dim = x0.len();
        let (x, f, conv) = if dim == 0 {
            evaluations += 1;
            (x0, -fidelity_at_with(&start, t_opt, &search)?, true)
        } else {
            let nm_opts = NelderMeadOptions {
                initial_step: vec![0.2; dim],
                xatol: opts.xatol,
                fatol: opts.fatol,
                max_evals: opts.max_evals,
            };
            let r = nelder_mead(
                |x| fidelity_at_with(&decode(x, &start), t_opt, &search).map(|f| -f).unwrap_or(f64::INFINITY),
                &x0,
                &nm_opts,
            );
            evaluations += r.evaluations;
            (r.x, r.f, r.converged)
        };
        seed_values.push(-f);
        let p = decode(&x, &start);
        if best.as_ref().map_or(true, |(bf, _, _)| f < *bf) {
            best = Some((f, p, conv));
        }
    }
    let (_, params_opt, converged) = best.expect("at least one start");
    let outcome = simulate_preparation(&params_opt, t_opt)?;
    Ok(FidelityResult {
        t_opt,
        f_opt: outcome.fidelity,
        params_opt,
        residual_pe1: outcome.final_p1e,
        peak_pe1: outcome.peak_p1e,
        leakage: outcome.leakage,
        evaluations,
        converged,
        seed_values,
    })
}
