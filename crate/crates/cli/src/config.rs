//! Run configuration. Every section is optional; unknown keys are errors.

use std::path::Path;

use gge_core::ion::{FreeParams, IonOptOptions, IonSystemParams};
use gge_core::SpinChainParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Null vector of the full Liouvillian.
    Exact,
    /// Block-diagonal leading-order state.
    Bd,
    /// Truncated GGE with `n_c` charges.
    Tgge,
    /// Stationary Gibbs state (H0 as the only charge).
    Thermal,
}

impl Route {
    pub const ALL: [Route; 4] = [Route::Exact, Route::Bd, Route::Tgge, Route::Thermal];

    pub fn name(self) -> &'static str {
        match self {
            Route::Exact => "exact",
            Route::Bd => "bd",
            Route::Tgge => "tgge",
            Route::Thermal => "thermal",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CliError> {
        Route::ALL
            .into_iter()
            .find(|r| r.name() == s.trim())
            .ok_or_else(|| CliError::Config(format!("unknown route {s:?} (expected exact, bd, tgge or thermal)")))
    }
}

/// Explicit values, or `steps` evenly spaced points on `[start, stop]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum Grid {
    Values { values: Vec<f64> },
    Range { start: f64, stop: f64, steps: usize },
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        match self {
            Grid::Values { values } => values.clone(),
            Grid::Range { start, stop, steps } => match steps {
                0 => Vec::new(),
                1 => vec![*start],
                _ => (0..*steps)
                    .map(|k| start + (stop - start) * k as f64 / (*steps - 1) as f64)
                    .collect(),
            },
        }
    }

    /// Non-empty, finite and strictly monotone.
    pub fn validate(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let v = self.points();
        if v.is_empty() {
            return Err(CliError::Config(format!("{name}: grid is empty")));
        }
        if let Some(x) = v.iter().find(|x| !x.is_finite()) {
            return Err(CliError::Config(format!("{name}: non-finite grid value {x}")));
        }
        let up = v.windows(2).all(|w| w[1] > w[0]);
        let down = v.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(CliError::Config(format!("{name}: grid is not strictly monotone")));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub routes: Vec<Route>,
    /// Charges kept in the truncated GGE.
    pub n_c: usize,
    pub exact_sizes: Vec<usize>,
    pub bd_sizes: Vec<usize>,
    pub tgge_sizes: Vec<usize>,
    /// Add the next-nearest term to the exact Liouvillian and, via a
    /// Lorentzian-broadened golden rule, to the GGE drift.
    pub include_h1: bool,
    pub eta: f64,
    pub h1_scale: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            routes: vec![Route::Exact, Route::Bd, Route::Tgge],
            n_c: 4,
            exact_sizes: vec![6],
            bd_sizes: vec![6, 8],
            tgge_sizes: vec![8, 10],
            include_h1: false,
            eta: 0.05,
            h1_scale: 1.0,
        }
    }
}

impl EnsembleConfig {
    pub fn sizes(&self, route: Route) -> &[usize] {
        match route {
            Route::Exact => &self.exact_sizes,
            Route::Bd => &self.bd_sizes,
            Route::Tgge | Route::Thermal => &self.tgge_sizes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Figure1Config {
    pub gamma: Grid,
}

impl Default for Figure1Config {
    fn default() -> Self {
        Self {
            gamma: Grid::Range {
                start: 0.0,
                stop: 1.0,
                steps: 11,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Figure2Config {
    pub gamma: f64,
    /// `J_z/J_y` with `J_y` from `[model]`.
    pub anisotropy: Grid,
    /// Ring sizes, shared by all routes.
    pub sizes: Vec<usize>,
}

impl Default for Figure2Config {
    fn default() -> Self {
        Self {
            sizes: vec![6],
            gamma: 0.5,
            anisotropy: Grid::Range {
                start: 0.1,
                stop: 1.0,
                steps: 10,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Figure3Config {
    pub anisotropy: f64,
    pub gammas: Vec<f64>,
    pub field: Grid,
    /// Ring sizes, shared by all routes.
    pub sizes: Vec<usize>,
}

impl Default for Figure3Config {
    fn default() -> Self {
        Self {
            sizes: vec![6],
            anisotropy: 0.9,
            gammas: vec![0.1, 0.6, 0.9],
            field: Grid::Range {
                start: 0.2,
                stop: 2.0,
                steps: 10,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Figure4Config {
    pub gamma: f64,
    pub h: f64,
    pub anisotropy: Grid,
    /// Ring sizes, shared by all routes.
    pub sizes: Vec<usize>,
}

impl Default for Figure4Config {
    fn default() -> Self {
        Self {
            sizes: vec![6],
            gamma: 0.8,
            h: 0.5,
            anisotropy: Grid::Range {
                start: 0.1,
                stop: 1.0,
                steps: 10,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IonSimConfig {
    pub t_max: f64,
    pub samples: usize,
}

impl Default for IonSimConfig {
    fn default() -> Self {
        Self {
            t_max: 200.0,
            samples: 401,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IonOptConfig {
    pub t_opt: Vec<f64>,
    pub free: FreeParams,
    pub seeds: usize,
    pub max_evals: usize,
    pub xatol: f64,
    pub fatol: f64,
}

impl Default for IonOptConfig {
    fn default() -> Self {
        let o = IonOptOptions::default();
        Self {
            t_opt: vec![50.0, 100.0, 200.0],
            free: FreeParams::default(),
            seeds: o.seeds,
            max_evals: o.max_evals,
            xatol: o.xatol,
            fatol: o.fatol,
        }
    }
}

impl IonOptConfig {
    pub fn options(&self) -> IonOptOptions {
        IonOptOptions {
            seeds: self.seeds,
            max_evals: self.max_evals,
            xatol: self.xatol,
            fatol: self.fatol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EffopsConfig {
    /// Engineered decay Γ (units of g).
    pub gamma: f64,
    pub omega: Grid,
    /// Full-model integration horizon in lowest-order lifetimes `Γ/(4Ω²)`.
    pub lifetimes: f64,
    /// Raman repump check: level width, branching and drive.
    pub raman_gamma_r: f64,
    pub raman_gamma_0r: f64,
    pub raman_omega_rep: f64,
    /// Boson elimination check: mode damping and coupling.
    pub boson_kappa: f64,
    pub boson_g: f64,
}

impl Default for EffopsConfig {
    fn default() -> Self {
        Self {
            gamma: 0.2,
            omega: Grid::Values {
                values: vec![0.005, 0.01, 0.02, 0.05, 0.1, 0.2],
            },
            lifetimes: 4.0,
            raman_gamma_r: 1.0,
            raman_gamma_0r: 1.0,
            raman_omega_rep: 0.05,
            boson_kappa: 1.0,
            boson_g: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub svg: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { svg: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: SpinChainParams,
    pub ensembles: EnsembleConfig,
    pub figure1: Figure1Config,
    pub figure2: Figure2Config,
    pub figure3: Figure3Config,
    pub figure4: Figure4Config,
    pub ion: IonSystemParams,
    pub ion_sim: IonSimConfig,
    pub ion_opt: IonOptConfig,
    pub effops: EffopsConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => {
                let cfg = RunConfig::default();
                cfg.validate()?;
                Ok(cfg)
            }
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    /// Checks that do not depend on the subcommand.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: gge_core::Error| CliError::Config(e.to_string());
        self.model.validate().map_err(cfg)?;
        self.ion.validate().map_err(cfg)?;
        let e = &self.ensembles;
        if e.routes.is_empty() {
            return Err(CliError::Config("ensembles.routes is empty".into()));
        }
        if e.n_c == 0 {
            return Err(CliError::Config("ensembles.n_c must be at least 1".into()));
        }
        for &r in &e.routes {
            let sizes = e.sizes(r);
            if sizes.is_empty() {
                return Err(CliError::Config(format!("no system sizes for route {}", r.name())));
            }
            for &n in sizes {
                SpinChainParams { n, ..self.model.clone() }.validate().map_err(cfg)?;
            }
        }
        if e.include_h1 && !(e.eta > 0.0 && e.eta.is_finite()) {
            return Err(CliError::Config(format!("ensembles.eta must be positive, got {}", e.eta)));
        }
        self.figure1.gamma.validate("figure1.gamma")?;
        check_unit("figure2.gamma", self.figure2.gamma)?;
        self.figure2.anisotropy.validate("figure2.anisotropy")?;
        if self.figure3.gammas.is_empty() {
            return Err(CliError::Config("figure3.gammas is empty".into()));
        }
        for &g in &self.figure3.gammas {
            check_unit("figure3.gammas", g)?;
        }
        self.figure3.field.validate("figure3.field")?;
        check_unit("figure4.gamma", self.figure4.gamma)?;
        self.figure4.anisotropy.validate("figure4.anisotropy")?;
        for g in self.figure1.gamma.points() {
            check_unit("figure1.gamma", g)?;
        }
        if !(self.ion_sim.t_max > 0.0) || self.ion_sim.samples < 2 {
            return Err(CliError::Config("ion_sim needs t_max > 0 and at least 2 samples".into()));
        }
        if self.ion_opt.t_opt.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(CliError::Config("ion_opt.t_opt values must be positive".into()));
        }
        for (name, sizes) in [
            ("figure2.sizes", &self.figure2.sizes),
            ("figure3.sizes", &self.figure3.sizes),
            ("figure4.sizes", &self.figure4.sizes),
        ] {
            if sizes.is_empty() {
                return Err(CliError::Config(format!("{name} is empty")));
            }
            for &n in sizes {
                SpinChainParams { n, ..self.model.clone() }.validate().map_err(cfg)?;
            }
        }
        self.effops.omega.validate("effops.omega")?;
        if !(self.effops.gamma > 0.0) || !(self.effops.lifetimes > 0.0) {
            return Err(CliError::Config("effops.gamma and effops.lifetimes must be positive".into()));
        }
        Ok(())
    }
}

fn check_unit(name: &str, g: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&g) {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name}: γ = {g} outside [0, 1]")))
    }
}
