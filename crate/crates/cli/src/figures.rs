//! Sweeps over the dissipation asymmetry, anisotropy and field.

use gge_core::ensembles::{ChainSystem, H1Drift, TggeOptions};
use gge_core::liouville::{chain_superoperator, steady_state};
use gge_core::observables::{correlator_scan, eta_ratio, expval, ObservableSpec, ThermalReference};
use gge_core::pauli::Pauli;
use gge_core::{Array2, SpinChainParams, C64};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{EnsembleConfig, Route, RunConfig};
use crate::error::CliError;
use crate::output::{num, render_svg, Chart, RunRecord, Series, Table};

pub const FIGURE1_HEADER: [&str; 6] = ["gamma", "route", "N", "e_density", "c4_density", "error"];
pub const FIGURE2_HEADER: [&str; 10] =
    ["anisotropy", "gamma", "route", "N", "eta_c4", "eta_kind", "c4_density", "c4_thermal", "beta", "error"];
pub const FIGURE3_HEADER: [&str; 10] =
    ["h", "gamma", "route", "N", "eta_c4", "eta_kind", "c4_density", "c4_thermal", "beta", "error"];
pub const FIGURE4_HEADER: [&str; 10] =
    ["anisotropy", "gamma", "route", "N", "yyx", "yxy", "yyx_thermal", "yxy_thermal", "beta", "error"];

/// Command-line restrictions applied on top of the config.
#[derive(Clone, Debug, Default)]
pub struct Selection {
    pub routes: Vec<Route>,
    pub n: Option<usize>,
}

impl Selection {
    fn routes(&self, cfg: &EnsembleConfig) -> Vec<Route> {
        if self.routes.is_empty() {
            cfg.routes.clone()
        } else {
            self.routes.clone()
        }
    }

    fn sizes(&self, configured: &[usize]) -> Vec<usize> {
        match self.n {
            Some(n) => vec![n],
            None => configured.to_vec(),
        }
    }
}

fn h1_drift(e: &EnsembleConfig) -> Option<H1Drift> {
    e.include_h1.then_some(H1Drift {
        eta: e.eta,
        scale: e.h1_scale,
    })
}

/// Charges needed by the system behind the requested routes.
fn charges_needed(routes: &[Route], e: &EnsembleConfig) -> usize {
    if routes.contains(&Route::Tgge) {
        e.n_c
    } else {
        1
    }
}

/// Steady state of one route. `sys` must be present for every route but
/// `exact`.
fn route_state(
    route: Route,
    p: &SpinChainParams,
    sys: Option<&ChainSystem>,
    gamma: f64,
    e: &EnsembleConfig,
) -> Result<Array2<C64>, CliError> {
    let need = || sys.ok_or_else(|| CliError::Numerical("system unavailable".into()));
    Ok(match route {
        Route::Exact => {
            let q = SpinChainParams { gamma, ..p.clone() };
            steady_state(&chain_superoperator(&q, e.include_h1)?)?.rho
        }
        Route::Bd => need()?.rho_bd(gamma)?.rho,
        Route::Tgge => need()?.tgge(gamma, e.n_c, h1_drift(e), &TggeOptions::default())?.rho,
        Route::Thermal => need()?.tgge(gamma, 1, h1_drift(e), &TggeOptions::default())?.rho,
    })
}

fn densities(p: &SpinChainParams, rho: &Array2<C64>) -> Result<(f64, f64), CliError> {
    let n = p.n as f64;
    let h = ObservableSpec::EnergyDensity.realize(p)?;
    let c4 = ObservableSpec::ChargeDensity(4).realize(p)?;
    Ok((expval(&h, rho)? / n, expval(&c4, rho)? / n))
}

fn fmt_err(e: &CliError) -> String {
    e.to_string().replace(['\n', '\r'], " ")
}

fn series_key(route: Route, n: usize) -> String {
    format!("{} N={n}", route.name())
}

/// Energy and C4 densities against γ, one CSV per route plus an overlay.
pub fn figure1(cfg: &RunConfig, sel: &Selection, rec: &mut RunRecord) -> Result<usize, CliError> {
    let e = &cfg.ensembles;
    let gammas = cfg.figure1.gamma.validate("figure1.gamma")?;
    let routes = sel.routes(e);
    let n_charges = charges_needed(&routes, e);

    let mut sizes: Vec<usize> = routes
        .iter()
        .filter(|r| **r != Route::Exact)
        .flat_map(|r| sel.sizes(e.sizes(*r)))
        .collect();
    sizes.sort_unstable();
    sizes.dedup();
    let systems: Vec<(usize, Result<ChainSystem, String>)> = sizes
        .par_iter()
        .map(|&n| {
            let p = SpinChainParams { n, ..cfg.model.clone() };
            (n, ChainSystem::new(&p, n_charges, e.include_h1).map_err(|x| x.to_string()))
        })
        .collect();
    let system = |n: usize| systems.iter().find(|(m, _)| *m == n).map(|(_, s)| s);

    let mut tasks: Vec<(Route, usize, f64)> = Vec::new();
    for &r in &routes {
        for n in sel.sizes(e.sizes(r)) {
            tasks.extend(gammas.iter().map(|&g| (r, n, g)));
        }
    }
    let rows: Vec<(Route, usize, f64, Result<(f64, f64), CliError>)> = tasks
        .par_iter()
        .map(|&(route, n, gamma)| {
            let p = SpinChainParams { n, ..cfg.model.clone() };
            let sys = match (route, system(n)) {
                (Route::Exact, _) => Ok(None),
                (_, Some(Ok(s))) => Ok(Some(s)),
                (_, Some(Err(m))) => Err(CliError::Numerical(m.clone())),
                (_, None) => Err(CliError::Numerical("system not built".into())),
            };
            let out = sys.and_then(|s| route_state(route, &p, s, gamma, e)).and_then(|rho| densities(&p, &rho));
            (route, n, gamma, out)
        })
        .collect();

    let mut failed = 0;
    let mut e_chart = Vec::new();
    let mut c_chart = Vec::new();
    for &route in &routes {
        let mut t = Table::new(&FIGURE1_HEADER);
        for (r, n, g, out) in rows.iter().filter(|x| x.0 == route) {
            let (ev, cv, err) = match out {
                Ok((a, b)) => (*a, *b, String::new()),
                Err(x) => (f64::NAN, f64::NAN, fmt_err(x)),
            };
            t.push(vec![num(*g), r.name().into(), n.to_string(), num(ev), num(cv), err]);
            let key = series_key(*r, *n);
            push_point(&mut e_chart, &key, *g, ev);
            push_point(&mut c_chart, &key, *g, cv);
        }
        failed += t.failed_rows();
        rec.write_table(&format!("figure1_{}.csv", route.name()), &t)?;
    }
    if cfg.output.svg {
        let svg = render_svg(&[
            chart("Energy density vs γ", "γ", "⟨H0⟩/N", e_chart),
            chart("C4 density vs γ", "γ", "⟨C4⟩/N", c_chart),
        ]);
        rec.write_text("figure1.svg", &svg)?;
    }
    Ok(failed)
}

fn push_point(series: &mut Vec<Series>, key: &str, x: f64, y: f64) {
    match series.iter_mut().find(|s| s.name == key) {
        Some(s) => s.points.push((x, y)),
        None => series.push(Series {
            name: key.to_string(),
            points: vec![(x, y)],
        }),
    }
}

fn chart(title: &str, x: &str, y: &str, series: Vec<Series>) -> Chart {
    Chart {
        title: title.into(),
        x_label: x.into(),
        y_label: y.into(),
        series,
    }
}

/// One point of the η sweeps.
struct EtaPoint {
    eta: f64,
    ratio: bool,
    value: f64,
    thermal: f64,
    beta: f64,
}

fn eta_point(p: &SpinChainParams, sys: &ChainSystem, rho: &Array2<C64>) -> Result<EtaPoint, CliError> {
    let o = ObservableSpec::ChargeDensity(4).realize(p)?;
    let v = eta_ratio(&o, rho, sys, ThermalReference::EnergyMatched)?;
    let n = p.n as f64;
    Ok(EtaPoint {
        eta: v.eta,
        ratio: !v.thermal_denominator_near_zero,
        value: v.value / n,
        thermal: v.thermal_value / n,
        beta: v.beta,
    })
}

fn eta_row(x: f64, gamma: f64, route: Route, n: usize, out: &Result<EtaPoint, CliError>) -> Vec<String> {
    let mut row = vec![num(x), num(gamma), route.name().into(), n.to_string()];
    match out {
        Ok(v) => row.extend([
            num(v.eta),
            if v.ratio { "ratio" } else { "difference" }.into(),
            num(v.value),
            num(v.thermal),
            num(v.beta),
            String::new(),
        ]),
        Err(e) => row.extend([String::new(), String::new(), String::new(), String::new(), String::new(), fmt_err(e)]),
    }
    row
}

/// Evaluate `f` for every (sweep value, size, γ, route) with one system per
/// (sweep value, size). Results keep the sweep order.
#[allow(clippy::too_many_arguments)]
fn sweep<T: Send>(
    points: &[f64],
    sizes: &[usize],
    gammas: &[f64],
    routes: &[Route],
    params_at: impl Fn(f64, usize) -> SpinChainParams + Sync,
    n_charges: usize,
    include_h1: bool,
    f: impl Fn(&SpinChainParams, &ChainSystem, Route, f64) -> Result<T, CliError> + Sync,
) -> Vec<(f64, usize, f64, Route, Result<T, CliError>)> {
    let tasks: Vec<(f64, usize)> = points.iter().flat_map(|&x| sizes.iter().map(move |&n| (x, n))).collect();
    tasks
        .par_iter()
        .flat_map_iter(|&(x, n)| {
            let p = params_at(x, n);
            let sys = ChainSystem::new(&p, n_charges, include_h1).map_err(|e| e.to_string());
            let mut out = Vec::new();
            for &g in gammas {
                for &r in routes {
                    let res = match &sys {
                        Ok(s) => f(&p, s, r, g),
                        Err(m) => Err(CliError::Numerical(m.clone())),
                    };
                    out.push((x, n, g, r, res));
                }
            }
            out
        })
        .collect()
}

/// η_C4 against the anisotropy `J_z/J_y`.
pub fn figure2(cfg: &RunConfig, sel: &Selection, rec: &mut RunRecord) -> Result<usize, CliError> {
    let f = &cfg.figure2;
    let points = f.anisotropy.validate("figure2.anisotropy")?;
    let routes = sel.routes(&cfg.ensembles);
    let e = &cfg.ensembles;
    let res = sweep(
        &points,
        &sel.sizes(&f.sizes),
        &[f.gamma],
        &routes,
        |a, n| SpinChainParams {
            n,
            jz: a * cfg.model.jy,
            gamma: f.gamma,
            ..cfg.model.clone()
        },
        charges_needed(&routes, e),
        e.include_h1,
        |p, sys, r, g| eta_point(p, sys, &route_state(r, p, Some(sys), g, e)?),
    );
    let mut t = Table::new(&FIGURE2_HEADER);
    let mut series = Vec::new();
    for (a, n, g, r, out) in &res {
        t.push(eta_row(*a, *g, *r, *n, out));
        push_point(&mut series, &series_key(*r, *n), *a, out.as_ref().map(|v| v.eta).unwrap_or(f64::NAN));
    }
    rec.write_table("figure2.csv", &t)?;
    if cfg.output.svg {
        let svg = render_svg(&[chart(&format!("η_C4 vs J_z/J_y (γ = {})", f.gamma), "J_z/J_y", "η_C4", series)]);
        rec.write_text("figure2.svg", &svg)?;
    }
    Ok(t.failed_rows())
}

/// η_C4 against the field at fixed anisotropy, for several γ.
pub fn figure3(cfg: &RunConfig, sel: &Selection, rec: &mut RunRecord) -> Result<usize, CliError> {
    let f = &cfg.figure3;
    let points = f.field.validate("figure3.field")?;
    let routes = sel.routes(&cfg.ensembles);
    let e = &cfg.ensembles;
    let res = sweep(
        &points,
        &sel.sizes(&f.sizes),
        &f.gammas,
        &routes,
        |h, n| SpinChainParams {
            n,
            h,
            jz: f.anisotropy * cfg.model.jy,
            ..cfg.model.clone()
        },
        charges_needed(&routes, e),
        e.include_h1,
        |p, sys, r, g| eta_point(p, sys, &route_state(r, p, Some(sys), g, e)?),
    );
    let mut t = Table::new(&FIGURE3_HEADER);
    let mut series = Vec::new();
    for (h, n, g, r, out) in &res {
        t.push(eta_row(*h, *g, *r, *n, out));
        let key = format!("{} γ={g}", series_key(*r, *n));
        push_point(&mut series, &key, *h, out.as_ref().map(|v| v.eta).unwrap_or(f64::NAN));
    }
    rec.write_table("figure3.csv", &t)?;
    if cfg.output.svg {
        let svg = render_svg(&[chart(&format!("η_C4 vs h (J_z/J_y = {})", f.anisotropy), "h", "η_C4", series)]);
        rec.write_text("figure3.svg", &svg)?;
    }
    Ok(t.failed_rows())
}

struct Correlators {
    yyx: f64,
    yxy: f64,
    yyx_th: f64,
    yxy_th: f64,
    beta: f64,
}

const TRIPLES: [[Pauli; 3]; 2] = [[Pauli::Y, Pauli::Y, Pauli::X], [Pauli::Y, Pauli::X, Pauli::Y]];

fn correlators(p: &SpinChainParams, sys: &ChainSystem, rho: &Array2<C64>) -> Result<Correlators, CliError> {
    let ss = correlator_scan(p, rho, &TRIPLES)?;
    let beta = sys.thermal_fit(expval(&sys.h0, rho)?)?;
    let th = correlator_scan(p, &sys.gibbs_state(beta), &TRIPLES)?;
    Ok(Correlators {
        yyx: ss["yyx"],
        yxy: ss["yxy"],
        yyx_th: th["yyx"],
        yxy_th: th["yxy"],
        beta,
    })
}

/// Three-site correlators of the steady state and its energy-matched
/// thermal state against the anisotropy.
pub fn figure4(cfg: &RunConfig, sel: &Selection, rec: &mut RunRecord) -> Result<usize, CliError> {
    let f = &cfg.figure4;
    let points = f.anisotropy.validate("figure4.anisotropy")?;
    let routes = sel.routes(&cfg.ensembles);
    let e = &cfg.ensembles;
    let res = sweep(
        &points,
        &sel.sizes(&f.sizes),
        &[f.gamma],
        &routes,
        |a, n| SpinChainParams {
            n,
            h: f.h,
            jz: a * cfg.model.jy,
            gamma: f.gamma,
            ..cfg.model.clone()
        },
        charges_needed(&routes, e),
        e.include_h1,
        |p, sys, r, g| correlators(p, sys, &route_state(r, p, Some(sys), g, e)?),
    );
    let mut t = Table::new(&FIGURE4_HEADER);
    let mut series = Vec::new();
    for (a, n, g, r, out) in &res {
        let mut row = vec![num(*a), num(*g), r.name().into(), n.to_string()];
        match out {
            Ok(c) => row.extend([num(c.yyx), num(c.yxy), num(c.yyx_th), num(c.yxy_th), num(c.beta), String::new()]),
            Err(x) => row.extend([String::new(), String::new(), String::new(), String::new(), String::new(), fmt_err(x)]),
        }
        t.push(row);
        let key = series_key(*r, *n);
        let get = |k: fn(&Correlators) -> f64| out.as_ref().map(k).unwrap_or(f64::NAN);
        push_point(&mut series, &format!("{key} yxy"), *a, get(|c| c.yxy));
        push_point(&mut series, &format!("{key} yyx"), *a, get(|c| c.yyx));
        push_point(&mut series, &format!("{key} yxy th"), *a, get(|c| c.yxy_th));
        push_point(&mut series, &format!("{key} yyx th"), *a, get(|c| c.yyx_th));
    }
    rec.write_table("figure4.csv", &t)?;
    if cfg.output.svg {
        let title = format!("Three-site correlators (γ = {}, h = {})", f.gamma, f.h);
        rec.write_text("figure4.svg", &render_svg(&[chart(&title, "J_z/J_y", "⟨S S S⟩ per site", series)]))?;
    }
    Ok(t.failed_rows())
}

/// Manifest extras shared by the figure commands.
pub fn figure_extra(sel: &Selection) -> serde_json::Value {
    json!({
        "route_override": sel.routes.iter().map(|r| r.name()).collect::<Vec<_>>(),
        "n_override": sel.n,
    })
}
