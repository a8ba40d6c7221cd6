//! Expectation values, non-thermality ratios and three-site correlators.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::ensembles::{ChainSystem, H1Drift, TggeOptions};
use crate::error::{Error, Result};
use crate::lattice::{realize, LatticeOperator, SpinChainParams};
use crate::pauli::{c4_closed_form, h0_density, OperatorPolynomial, Pauli, PauliString};
use crate::C64;

/// Below this magnitude the thermal denominator of `η` is treated as zero.
pub const THERMAL_DENOMINATOR_MIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    PerSite,
    Total,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ObservableSpec {
    EnergyDensity,
    /// Charge `C_i` of the parameter set's family (i = 4 uses the closed form).
    ChargeDensity(usize),
    /// `S^a_j S^b_{j+1} S^c_{j+2}` summed over the ring.
    Correlator([Pauli; 3]),
    Custom(OperatorPolynomial),
}

impl ObservableSpec {
    /// Parse `energy`, `c4`, `yxy`, … .
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "energy" | "e" | "h0" => return Ok(Self::EnergyDensity),
            _ => {}
        }
        if let Some(i) = t.strip_prefix('c') {
            if let Ok(i) = i.parse::<usize>() {
                return Ok(Self::ChargeDensity(i));
            }
        }
        if t.len() == 3 {
            let mut axes = [Pauli::I; 3];
            for (k, ch) in t.chars().enumerate() {
                axes[k] = match ch {
                    'x' => Pauli::X,
                    'y' => Pauli::Y,
                    'z' => Pauli::Z,
                    _ => return Err(Error::Parse(format!("bad correlator axis in {s:?}"))),
                };
            }
            return Ok(Self::Correlator(axes));
        }
        Err(Error::Parse(format!("unknown observable {s:?}")))
    }

    pub fn label(&self) -> String {
        match self {
            Self::EnergyDensity => "e_density".into(),
            Self::ChargeDensity(i) => format!("c{i}_density"),
            Self::Correlator(a) => a.iter().map(|p| p.to_char().to_ascii_lowercase()).collect(),
            Self::Custom(_) => "custom".into(),
        }
    }

    /// Translation-invariant density whose ring sum is the observable.
    pub fn density(&self, params: &SpinChainParams) -> Result<OperatorPolynomial> {
        match self {
            Self::EnergyDensity => Ok(h0_density(params.jy, params.jz, params.h)),
            Self::ChargeDensity(4) => Ok(c4_closed_form(params.jy, params.jz, params.h)),
            Self::ChargeDensity(i) => {
                let fam = crate::pauli::build_charge_family(params, (*i).max(2) - 1)?;
                fam.get(*i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidParams(format!("charge C{i} not in the family")))
            }
            Self::Correlator(a) => {
                if a.contains(&Pauli::I) {
                    return Err(Error::InvalidParams("correlator axes must be x, y or z".into()));
                }
                Ok(OperatorPolynomial::from_terms([(
                    PauliString::new(0, a.to_vec()),
                    C64::new(1.0, 0.0),
                )]))
            }
            Self::Custom(p) => {
                if !p.is_hermitian(1e-12) {
                    return Err(Error::NonHermitian(p.hermiticity_defect()));
                }
                Ok(p.clone())
            }
        }
    }

    pub fn realize(&self, params: &SpinChainParams) -> Result<LatticeOperator> {
        realize(&self.density(params)?, params.n)
    }
}

/// `Tr[Oρ]`, asserting that the imaginary part vanishes.
pub fn expval(o: &LatticeOperator, rho: &Array2<C64>) -> Result<f64> {
    if rho.nrows() != o.dim() || rho.ncols() != o.dim() {
        return Err(Error::DimensionMismatch("observable and state".into()));
    }
    let v = o.trace_with(rho);
    if v.im.abs() > 1e-10 * v.re.abs().max(1.0) {
        return Err(Error::ImaginaryResidue(v.im));
    }
    Ok(v.re)
}

/// Per-site or total expectation value.
pub fn normalized_expval(o: &LatticeOperator, rho: &Array2<C64>, n: usize, norm: Normalization) -> Result<f64> {
    let v = expval(o, rho)?;
    Ok(match norm {
        Normalization::PerSite => v / n as f64,
        Normalization::Total => v,
    })
}

/// How the thermal reference state is fixed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThermalReference {
    /// β from matching `⟨H0⟩` of the state under test.
    EnergyMatched,
    /// β from the stationarity condition with H0 as the only charge.
    Stationary { gamma: f64, h1: Option<H1Drift> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EtaValue {
    /// `(⟨O⟩_x − ⟨O⟩_th)/⟨O⟩_th`, or the bare difference when flagged.
    pub eta: f64,
    pub value: f64,
    pub thermal_value: f64,
    pub beta: f64,
    /// The thermal expectation was too small to divide by.
    pub thermal_denominator_near_zero: bool,
}

/// Non-thermality ratio of `O` in `rho_x`.
pub fn eta_ratio(o: &LatticeOperator, rho_x: &Array2<C64>, sys: &ChainSystem, reference: ThermalReference) -> Result<EtaValue> {
    let beta = match reference {
        ThermalReference::EnergyMatched => sys.thermal_fit(expval(&sys.h0, rho_x)?)?,
        ThermalReference::Stationary { gamma, h1 } => sys.tgge(gamma, 1, h1, &TggeOptions::default())?.lambdas[0],
    };
    let rho_th = sys.gibbs_state(beta);
    let value = expval(o, rho_x)?;
    let thermal_value = expval(o, &rho_th)?;
    let near_zero = thermal_value.abs() < THERMAL_DENOMINATOR_MIN * value.abs().max(1.0);
    let eta = if near_zero {
        value - thermal_value
    } else {
        (value - thermal_value) / thermal_value
    };
    Ok(EtaValue {
        eta,
        value,
        thermal_value,
        beta,
        thermal_denominator_near_zero: near_zero,
    })
}

/// Translation-averaged `⟨S^a_j S^b_{j+1} S^c_{j+2}⟩` for each requested
/// triple, keyed by lower-case axes (e.g. `"yxy"`).
pub fn correlator_scan(params: &SpinChainParams, rho: &Array2<C64>, triples: &[[Pauli; 3]]) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for t in triples {
        let spec = ObservableSpec::Correlator(*t);
        let o = spec.realize(params)?;
        out.insert(spec.label(), expval(&o, rho)? / params.n as f64);
    }
    Ok(out)
}

/// Every axis triple over {x, y, z}.
pub fn all_triples() -> Vec<[Pauli; 3]> {
    let ax = [Pauli::X, Pauli::Y, Pauli::Z];
    let mut v = Vec::with_capacity(27);
    for a in ax {
        for b in ax {
            for c in ax {
                v.push([a, b, c]);
            }
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::sz_total;

    #[test]
    fn parse_specs() {
        assert_eq!(ObservableSpec::parse("energy").unwrap(), ObservableSpec::EnergyDensity);
        assert_eq!(ObservableSpec::parse("C4").unwrap(), ObservableSpec::ChargeDensity(4));
        assert_eq!(
            ObservableSpec::parse("yxy").unwrap(),
            ObservableSpec::Correlator([Pauli::Y, Pauli::X, Pauli::Y])
        );
        assert!(ObservableSpec::parse("yxw").is_err());
        assert_eq!(ObservableSpec::parse("yyx").unwrap().label(), "yyx");
    }

    #[test]
    fn all_down_magnetisation() {
        let n = 4;
        let mut rho = Array2::<C64>::zeros((16, 16));
        rho[[0, 0]] = C64::new(1.0, 0.0);
        assert_eq!(expval(&sz_total(n), &rho).unwrap(), -2.0);
    }

    #[test]
    fn infinite_temperature_correlators_vanish() {
        let p = SpinChainParams {
            n: 4,
            ..SpinChainParams::default()
        };
        let rho = Array2::from_diag(&ndarray::Array1::from_elem(16, C64::new(1.0 / 16.0, 0.0)));
        for (_, v) in correlator_scan(&p, &rho, &all_triples()).unwrap() {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn imaginary_residue_detected() {
        let p = SpinChainParams {
            n: 2,
            ..SpinChainParams::default()
        };
        let o = ObservableSpec::EnergyDensity.realize(&p).unwrap();
        let mut rho = Array2::<C64>::zeros((4, 4));
        rho[[1, 0]] = C64::new(0.0, 1.0);
        rho[[0, 0]] = C64::new(1.0, 0.0);
        assert!(matches!(expval(&o, &rho), Err(Error::ImaginaryResidue(_))));
    }
}
