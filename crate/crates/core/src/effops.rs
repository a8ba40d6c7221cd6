//! Effective operators for the two-ion scheme: the excited manifold is
//! eliminated by inverting the non-Hermitian excited-state Hamiltonian,
//! leaving Hamiltonian and jump terms on the four ground states
//! `{|00⟩, |01⟩, |10⟩, |11⟩}` (mode in its ground state).
//!
//! Only the two drive channels that start from `|00⟩` and `|10⟩` are
//! eliminated; `|01⟩` and `|11⟩` are carried along inertly.

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ion::{IonModel, IonSystemParams, LEVEL_0, LEVEL_1};
use crate::lattice::LatticeOperator;
use crate::linalg;
use crate::liouville::{build_superoperator, time_evolve};
use crate::ode::OdeOptions;
use crate::sparse::CsrMatrix;
use crate::C64;

/// Ratio above which an elimination is flagged as outside its regime.
pub const VALIDITY_RATIO: f64 = 0.2;

/// Prefactors `c` in `rate = c · coupling² / width`, as measured by the
/// three-level and damped-mode simulations below (drive written `(Ω/2)σ⁺ +
/// h.c.`, sideband written `g b†σ⁻ + h.c.`, jumps `√rate · L`).
pub mod prefactors {
    /// `Γ_0r Ω_rep² / Γ_r²`; the stated formula is exact to leading order.
    pub const RAMAN_REPUMP: f64 = 1.0;
    /// `g_b² / κ` is low by this factor for `L = √κ b`.
    pub const BOSON_ELIMINATION: f64 = 4.0;
}

/// Ground-state labels in matrix order.
pub const GROUND_STATES: [(u8, u8); 4] = [(LEVEL_0, LEVEL_0), (LEVEL_0, LEVEL_1), (LEVEL_1, LEVEL_0), (LEVEL_1, LEVEL_1)];
const G00: usize = 0;
const G01: usize = 1;
const G10: usize = 2;
const G11: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComplexDetunings {
    /// `Δ − iΓ/4` for the symmetric excitation `|ψ_e⟩|0⟩`.
    pub delta_00: C64,
    /// `Δ` for `|1e⟩|0⟩` (ion 2 does not decay).
    pub delta_10: C64,
    /// `δ − iκ/2`.
    pub delta_ph: C64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegimeFlags {
    pub omega_over_gamma: f64,
    pub gamma_over_g: f64,
    pub omega_over_g: f64,
    /// All three ratios below [`VALIDITY_RATIO`].
    pub perturbative: bool,
}

#[derive(Clone, Debug)]
pub struct EffectiveModel {
    pub h_eff: Array2<C64>,
    /// Ground-manifold jumps with their rates (operators have unit scale).
    pub l_eff: Vec<(Array2<C64>, f64)>,
    /// `|00⟩ → |10⟩` rate.
    pub gamma_eff: f64,
    /// Light shift of `|10⟩`.
    pub stark_shift: f64,
    /// Light shift of `|00⟩`.
    pub stark_shift_00: f64,
    pub complex_detunings: ComplexDetunings,
    /// `Δ̃ − g²/δ̃` in each block.
    pub delta_00_eff: C64,
    pub delta_10_eff: C64,
    /// Adiabatic estimate of the `|1e⟩` population while in `|10⟩`.
    pub p_e1_estimate: f64,
    pub flags: RegimeFlags,
}

/// Analytic inverse of the non-Hermitian block `[[a, g], [g, d]]`.
pub fn inverse_block(a: C64, g: f64, d: C64, label: &str) -> Result<[[C64; 2]; 2]> {
    let det = a * d - g * g;
    let scale = (a.norm() * d.norm()).max(g * g).max(1e-300);
    if det.norm() <= 1e-12 * scale {
        return Err(Error::SingularBlock(format!(
            "{label}: Δ̃ = {a}, δ̃ = {d}, g = {g} gives a vanishing determinant"
        )));
    }
    let inv = 1.0 / det;
    Ok([[d * inv, -g * inv], [-g * inv, a * inv]])
}

pub fn effective_model(p: &IonSystemParams) -> Result<EffectiveModel> {
    p.validate()?;
    let gamma = p.gamma_e1;
    let cd = ComplexDetunings {
        delta_00: C64::new(p.delta, -gamma / 4.0),
        delta_10: C64::new(p.delta, 0.0),
        delta_ph: C64::new(p.delta_ph, -p.kappa / 2.0),
    };
    let g00 = std::f64::consts::SQRT_2 * p.g;
    let g10 = p.g;
    // Block order: (ionic excitation, phonon excitation).
    let inv00 = inverse_block(cd.delta_00, g00, cd.delta_ph, "|00⟩ manifold")?;
    let inv10 = inverse_block(cd.delta_10, g10, cd.delta_ph, "|10⟩ manifold")?;

    // V₊|00⟩ = (Ω/√2)|ψ_e⟩|0⟩, V₊|10⟩ = (Ω/2)|1e⟩|0⟩.
    let v00 = p.omega / std::f64::consts::SQRT_2;
    let v10 = p.omega / 2.0;

    let mut h = Array2::<C64>::zeros((4, 4));
    let stark_shift_00 = -(v00 * v00) * inv00[0][0].re;
    let stark_shift = -(v10 * v10) * inv10[0][0].re;
    h[[G00, G00]] = C64::new(stark_shift_00, 0.0);
    h[[G10, G10]] = C64::new(stark_shift + p.stark_compensation, 0.0);
    h[[G11, G11]] = C64::new(p.stark_compensation, 0.0);

    let unit = |to: usize, from: usize| {
        let mut m = Array2::<C64>::zeros((4, 4));
        m[[to, from]] = C64::new(1.0, 0.0);
        m
    };
    let mut l_eff = Vec::new();
    // √(Γ/2)|10⟩⟨ψ_e| after the drive.
    let amp_gamma = (gamma / 2.0).sqrt() * v00 * inv00[0][0];
    let gamma_eff = amp_gamma.norm_sqr();
    if gamma_eff > 0.0 {
        l_eff.push((unit(G10, G00), gamma_eff));
    }
    if p.kappa > 0.0 {
        // Phonon loss returns each manifold to itself.
        for (g, amp) in [(G00, v00 * inv00[1][0]), (G10, v10 * inv10[1][0])] {
            let r = p.kappa * amp.norm_sqr();
            if r > 0.0 {
                l_eff.push((unit(g, g), r));
            }
        }
    }
    if p.gamma_rep > 0.0 {
        let mut m = unit(G00, G10);
        m[[G01, G11]] = C64::new(1.0, 0.0);
        l_eff.push((m, p.gamma_rep));
    }

    let ratio = |a: f64, b: f64| if b > 0.0 { a.abs() / b } else { f64::INFINITY };
    let omega_over_gamma = ratio(p.omega, gamma);
    let gamma_over_g = ratio(gamma, p.g);
    let omega_over_g = ratio(p.omega, p.g);
    Ok(EffectiveModel {
        h_eff: h,
        l_eff,
        gamma_eff,
        stark_shift,
        stark_shift_00,
        complex_detunings: cd,
        delta_00_eff: 1.0 / inv00[0][0],
        delta_10_eff: 1.0 / inv10[0][0],
        p_e1_estimate: (v10 * inv10[0][0]).norm_sqr(),
        flags: RegimeFlags {
            omega_over_gamma,
            gamma_over_g,
            omega_over_g,
            perturbative: omega_over_gamma < VALIDITY_RATIO && gamma_over_g < VALIDITY_RATIO && omega_over_g < VALIDITY_RATIO,
        },
    })
}

/// Lowest-order rate `4Ω²/Γ` at the dressed resonance.
pub fn gamma_eff_lowest_order(omega: f64, gamma: f64) -> f64 {
    4.0 * omega * omega / gamma
}

/// `4ΓΩ²/(Γ² + 16Ω²)`; zero when both arguments vanish.
pub fn gamma_eff_powerbroadened(omega: f64, gamma: f64) -> f64 {
    let den = gamma * gamma + 16.0 * omega * omega;
    if den == 0.0 {
        0.0
    } else {
        4.0 * gamma * omega * omega / den
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlaggedRate {
    pub rate: f64,
    /// The elimination's small parameter exceeds [`VALIDITY_RATIO`].
    pub outside_validity: bool,
}

/// Repump `|1⟩ → |0⟩` through a fast level `|r⟩` of width `Γ_r`, branching
/// `Γ_0r` into `|0⟩`: `Γ_0r Ω_rep² / Γ_r²`.
pub fn raman_repump_rate(gamma_0r: f64, omega_rep: f64, gamma_r: f64) -> Result<FlaggedRate> {
    for v in [gamma_0r, gamma_r] {
        if !(v >= 0.0) {
            return Err(Error::NegativeRate(v));
        }
    }
    if gamma_r == 0.0 {
        return Err(Error::InvalidParams("repump level width must be positive".into()));
    }
    Ok(FlaggedRate {
        rate: prefactors::RAMAN_REPUMP * gamma_0r * omega_rep * omega_rep / (gamma_r * gamma_r),
        outside_validity: omega_rep.abs() > VALIDITY_RATIO * gamma_r,
    })
}

/// Decay through a sympathetically cooled mode, `g_b² / κ`.
pub fn boson_elimination_rate(g_b: f64, kappa: f64) -> Result<FlaggedRate> {
    if !(kappa > 0.0) {
        return Err(Error::NegativeRate(kappa));
    }
    Ok(FlaggedRate {
        rate: g_b * g_b / kappa,
        outside_validity: g_b.abs() > VALIDITY_RATIO * kappa,
    })
}

/// Least-squares slope of `−ln y` against `t`, over samples with `y > 0`.
pub fn fit_decay_rate(times: &[f64], values: &[f64]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, &y)| y > 1e-300)
        .map(|(&t, &y)| (t, y.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidParams("need at least two positive samples to fit a rate".into()));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParams("fit window has zero width".into()));
    }
    Ok(-sxy / sxx)
}

fn uniform_grid(horizon: f64, samples: usize) -> Vec<f64> {
    (0..=samples).map(|k| horizon * k as f64 / samples as f64).collect()
}

/// Samples at or after `from` (fraction of the horizon).
fn window(times: &[f64], values: &[f64], from: f64) -> (Vec<f64>, Vec<f64>) {
    let t0 = from * times.last().copied().unwrap_or(0.0);
    times.iter().zip(values).filter(|(&t, _)| t >= t0).map(|(&t, &v)| (t, v)).unzip()
}

/// Fraction of the horizon skipped before fitting, to let fast transients die.
pub const FIT_SKIP: f64 = 0.2;

const SAMPLES: usize = 400;

fn tight() -> OdeOptions {
    OdeOptions {
        rtol: 1e-10,
        atol: 1e-13,
        ..OdeOptions::default()
    }
}

/// Population of the initial level of a small model, on a uniform grid.
fn simulate_population(h: Array2<C64>, jumps: Vec<(CsrMatrix, f64)>, start: usize, horizon: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = h.nrows();
    let s = build_superoperator(&LatticeOperator::from_dense(h, true)?, &jumps)?;
    let mut rho0 = Array2::<C64>::zeros((d, d));
    rho0[[start, start]] = C64::new(1.0, 0.0);
    let times = uniform_grid(horizon, SAMPLES);
    let tr = time_evolve(&s, &rho0, &times, &tight())?;
    let pops = tr.states.iter().map(|r| r[[start, start]].re).collect();
    Ok((times, pops))
}

fn jump(d: usize, to: usize, from: usize) -> CsrMatrix {
    CsrMatrix::from_triplets(d, d, vec![(to, from, C64::new(1.0, 0.0))])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateCheck {
    pub formula: f64,
    pub fitted: f64,
    /// `fitted / formula`.
    pub ratio: f64,
}

impl RateCheck {
    fn new(formula: f64, fitted: f64) -> Self {
        Self {
            formula,
            fitted,
            ratio: fitted / formula,
        }
    }
}

/// Levels `{1, r, 0}`: drive `(Ω_rep/2)(|r⟩⟨1| + h.c.)`, decay `r → 0` at
/// `Γ_0r` and `r → 1` at `Γ_r − Γ_0r`. Fits the decay of `P_1`.
pub fn simulate_raman_repump(gamma_0r: f64, omega_rep: f64, gamma_r: f64) -> Result<RateCheck> {
    if gamma_0r > gamma_r {
        return Err(Error::InvalidParams("branching rate exceeds the level width".into()));
    }
    let formula = raman_repump_rate(gamma_0r, omega_rep, gamma_r)?.rate;
    let (l1, lr, l0) = (0, 1, 2);
    let mut h = Array2::<C64>::zeros((3, 3));
    h[[lr, l1]] = C64::new(omega_rep / 2.0, 0.0);
    h[[l1, lr]] = C64::new(omega_rep / 2.0, 0.0);
    let mut jumps = vec![(jump(3, l0, lr), gamma_0r)];
    if gamma_r > gamma_0r {
        jumps.push((jump(3, l1, lr), gamma_r - gamma_0r));
    }
    let (t, p) = simulate_population(h, jumps, l1, 3.0 / formula)?;
    let (t, p) = window(&t, &p, FIT_SKIP);
    Ok(RateCheck::new(formula, fit_decay_rate(&t, &p)?))
}

/// Levels `{r, −}` and a mode `b` truncated at one phonon: sideband
/// `g_b(b†|−⟩⟨r| + h.c.)`, damping `√κ b`. Fits the decay of `P_r`.
pub fn simulate_boson_elimination(g_b: f64, kappa: f64) -> Result<RateCheck> {
    let formula = boson_elimination_rate(g_b, kappa)?.rate;
    // Index = 2·level + phonons, level r = 0, − = 1.
    let idx = |level: usize, n: usize| 2 * level + n;
    let mut h = Array2::<C64>::zeros((4, 4));
    h[[idx(1, 1), idx(0, 0)]] = C64::new(g_b, 0.0);
    h[[idx(0, 0), idx(1, 1)]] = C64::new(g_b, 0.0);
    let b = CsrMatrix::from_triplets(
        4,
        4,
        vec![
            (idx(0, 0), idx(0, 1), C64::new(1.0, 0.0)),
            (idx(1, 0), idx(1, 1), C64::new(1.0, 0.0)),
        ],
    );
    // Fit over a few lifetimes of the true (faster) process.
    let horizon = 3.0 / (prefactors::BOSON_ELIMINATION * formula);
    let (t, p) = simulate_population(h, vec![(b, kappa)], idx(0, 0), horizon)?;
    let (t, p) = window(&t, &p, FIT_SKIP);
    Ok(RateCheck::new(formula, fit_decay_rate(&t, &p)?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EffectiveValidation {
    pub horizon: f64,
    /// Largest trace distance between the full model's ground block and the
    /// effective model.
    pub max_trace_distance: f64,
    /// Exponential rate of `P_00(t)` in the full model.
    pub fitted_rate: f64,
    pub gamma_eff: f64,
    pub gamma_eff_lowest_order: f64,
    pub gamma_eff_powerbroadened: f64,
    /// Time average over the fit window of the `|1e⟩` population relative to
    /// the `{|10⟩, |1e⟩}` manifold it is driven from.
    pub mean_p1e: f64,
    pub p_e1_estimate: f64,
}

impl EffectiveValidation {
    pub fn ratio_to(&self, formula: f64) -> f64 {
        self.fitted_rate / formula
    }
}

/// Evolve the full model and the effective model from `|00⟩` over
/// `[0, horizon]` and compare.
pub fn validate_effective_vs_full(p: &IonSystemParams, horizon: f64) -> Result<EffectiveValidation> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidParams(format!("horizon must be positive, got {horizon}")));
    }
    let eff = effective_model(p)?;
    let full = IonModel::new(p)?;
    let times = uniform_grid(horizon, SAMPLES);
    let opts = IonModel::ode_options();
    let full_traj = time_evolve(&full.superoperator, &full.initial_state(), &times, &opts)?;

    let eff_jumps: Vec<(CsrMatrix, f64)> = eff.l_eff.iter().map(|(l, r)| (CsrMatrix::from_dense(l), *r)).collect();
    let eff_s = build_superoperator(&LatticeOperator::from_dense(eff.h_eff.clone(), true)?, &eff_jumps)?;
    let mut rho0 = Array2::<C64>::zeros((4, 4));
    rho0[[G00, G00]] = C64::new(1.0, 0.0);
    let eff_traj = time_evolve(&eff_s, &rho0, &times, &opts)?;

    let ground: Vec<Option<usize>> = GROUND_STATES.iter().map(|&(a, b)| full.index_of((a, b, 0))).collect();
    let mut max_td: f64 = 0.0;
    let mut p00 = Vec::with_capacity(times.len());
    let mut p1e = Vec::with_capacity(times.len());
    for (rf, re) in full_traj.states.iter().zip(&eff_traj.states) {
        let block = Array2::from_shape_fn((4, 4), |(a, b)| match (ground[a], ground[b]) {
            (Some(i), Some(j)) => rf[[i, j]],
            _ => C64::new(0.0, 0.0),
        });
        max_td = max_td.max(linalg::trace_distance(&block, re)?);
        p00.push(block[[G00, G00]].re);
        let q = full.populations(rf);
        p1e.push(if q.p1e + q.p10 > 0.0 { q.p1e / (q.p1e + q.p10) } else { 0.0 });
    }
    let (t, v) = window(&times, &p00, FIT_SKIP);
    let fitted_rate = fit_decay_rate(&t, &v)?;
    let (_, e) = window(&times, &p1e, FIT_SKIP);
    let mean_p1e = Array1::from(e).mean().unwrap_or(0.0);
    Ok(EffectiveValidation {
        horizon,
        max_trace_distance: max_td,
        fitted_rate,
        gamma_eff: eff.gamma_eff,
        gamma_eff_lowest_order: gamma_eff_lowest_order(p.omega, p.gamma_e1),
        gamma_eff_powerbroadened: gamma_eff_powerbroadened(p.omega, p.gamma_e1),
        mean_p1e,
        p_e1_estimate: eff.p_e1_estimate,
    })
}

/// Resonant point `Δ = δ = √2 g` with the given drive and decay.
pub fn resonant_params(omega: f64, gamma: f64) -> IonSystemParams {
    let s2 = std::f64::consts::SQRT_2;
    IonSystemParams {
        omega,
        gamma_e1: gamma,
        delta: s2,
        delta_ph: s2,
        ..IonSystemParams::default()
    }
}
