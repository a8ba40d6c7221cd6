//! Trapped-ion preparation runs and effective-operator checks.

use std::path::Path;

use gge_core::effops::{
    boson_elimination_rate, effective_model, gamma_eff_lowest_order, gamma_eff_powerbroadened, prefactors,
    raman_repump_rate, simulate_boson_elimination, simulate_raman_repump, validate_effective_vs_full, RateCheck,
};
use gge_core::ion::{optimize_fidelity, simulate_preparation, FidelityResult, IonModel, IonSystemParams};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{num, render_svg, Chart, RunRecord, Series, Table};

pub const ION_SIM_HEADER: [&str; 6] = ["t", "P_00", "P_10", "P_psi_e", "P_1e", "P_phonon_top"];
pub const ION_OPT_HEADER: [&str; 14] = [
    "t_opt",
    "fidelity",
    "gamma_e1",
    "omega",
    "delta",
    "delta_ph",
    "omega_over_gamma",
    "peak_pe1",
    "residual_pe1",
    "leakage",
    "evaluations",
    "converged",
    "seed_values",
    "error",
];
pub const REPLAY_HEADER: [&str; 8] =
    ["t_opt", "stored_fidelity", "fidelity", "peak_pe1", "final_pe1", "leakage", "matches", "error"];
pub const EFFOPS_HEADER: [&str; 12] = [
    "omega",
    "gamma",
    "gamma_eff",
    "gamma_eff_lowest_order",
    "gamma_eff_powerbroadened",
    "stark_shift",
    "stark_shift_00",
    "p_e1_estimate",
    "omega_over_gamma",
    "gamma_over_g",
    "perturbative",
    "error",
];
pub const RATES_HEADER: [&str; 6] = ["check", "formula", "fitted", "ratio", "outside_validity", "error"];
pub const VALIDATE_HEADER: [&str; 14] = [
    "omega",
    "gamma",
    "horizon",
    "fitted_rate",
    "gamma_eff",
    "gamma_eff_lowest_order",
    "gamma_eff_powerbroadened",
    "ratio_effective",
    "ratio_lowest_order",
    "ratio_powerbroadened",
    "max_trace_distance",
    "mean_p1e",
    "p_e1_estimate",
    "error",
];

/// Population trajectory from `|00⟩|0⟩`.
pub fn ion_sim(cfg: &RunConfig, rec: &mut RunRecord) -> Result<usize, CliError> {
    let s = &cfg.ion_sim;
    let times: Vec<f64> = (0..s.samples).map(|k| s.t_max * k as f64 / (s.samples - 1) as f64).collect();
    let model = IonModel::new(&cfg.ion)?;
    let traj = model.trajectory(&times)?;
    let mut t = Table::new(&ION_SIM_HEADER);
    let mut series: Vec<Series> = ["P_00", "P_10", "P_1e"]
        .iter()
        .map(|n| Series {
            name: n.to_string(),
            points: Vec::new(),
        })
        .collect();
    for (ti, p) in times.iter().zip(&traj) {
        t.push(vec![num(*ti), num(p.p00), num(p.p10), num(p.p_psi_e), num(p.p1e), num(p.p_phonon_top)]);
        series[0].points.push((*ti, p.p00));
        series[1].points.push((*ti, p.p10));
        series[2].points.push((*ti, p.p1e));
    }
    rec.write_table("ion_sim.csv", &t)?;
    if cfg.output.svg {
        let c = Chart {
            title: "Preparation of |10⟩".into(),
            x_label: "t g".into(),
            y_label: "population".into(),
            series,
        };
        rec.write_text("ion_sim.svg", &render_svg(&[c]))?;
    }
    Ok(0)
}

/// Optimise the preparation fidelity at each `t_opt`.
pub fn ion_opt(cfg: &RunConfig, presets: &[f64], rec: &mut RunRecord) -> Result<(usize, Value), CliError> {
    let times: Vec<f64> = if presets.is_empty() { cfg.ion_opt.t_opt.clone() } else { presets.to_vec() };
    if times.is_empty() {
        return Err(CliError::Config("no t_opt values to optimise".into()));
    }
    let opts = cfg.ion_opt.options();
    let results: Vec<(f64, Result<FidelityResult, CliError>)> = times
        .par_iter()
        .map(|&t| (t, optimize_fidelity(t, &cfg.ion, cfg.ion_opt.free, &opts).map_err(CliError::from)))
        .collect();
    let mut table = Table::new(&ION_OPT_HEADER);
    let mut ok = Vec::new();
    for (t, r) in &results {
        match r {
            Ok(r) => {
                let p = &r.params_opt;
                let seeds: Vec<String> = r.seed_values.iter().map(|v| format!("{v:.6}")).collect();
                table.push(vec![
                    num(*t),
                    num(r.f_opt),
                    num(p.gamma_e1),
                    num(p.omega),
                    num(p.delta),
                    num(p.delta_ph),
                    num(p.omega / p.gamma_e1),
                    num(r.peak_pe1),
                    num(r.residual_pe1),
                    num(r.leakage),
                    r.evaluations.to_string(),
                    r.converged.to_string(),
                    seeds.join(";"),
                    String::new(),
                ]);
                ok.push(r.clone());
            }
            Err(e) => {
                let mut row = vec![num(*t)];
                row.extend(std::iter::repeat_n(String::new(), ION_OPT_HEADER.len() - 2));
                row.push(e.to_string());
                table.push(row);
            }
        }
    }
    rec.write_table("ion_opt.csv", &table)?;
    rec.write_json("ion_opt_results.json", &ok)?;
    Ok((table.failed_rows(), json!({ "results": ok })))
}

/// Stored optima: either a results array or a manifest carrying one under
/// `extra.results`.
fn stored_optima(path: &Path) -> Result<Vec<(f64, f64, IonSystemParams)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let list = match &v {
        Value::Array(a) => a.clone(),
        _ => v
            .pointer("/extra/results")
            .and_then(Value::as_array)
            .cloned()
            .ok_or_else(|| CliError::Config(format!("{}: no stored optima found", path.display())))?,
    };
    list.iter()
        .map(|entry| {
            let t = entry.get("t_opt").and_then(Value::as_f64);
            let f = entry.get("f_opt").and_then(Value::as_f64);
            let p = entry.get("params_opt").cloned();
            match (t, f, p) {
                (Some(t), Some(f), Some(p)) => {
                    let p: IonSystemParams = serde_json::from_value(p).map_err(|e| CliError::Config(e.to_string()))?;
                    Ok((t, f, p))
                }
                _ => Err(CliError::Config("stored optimum lacks t_opt, f_opt or params_opt".into())),
            }
        })
        .collect()
}

/// Re-simulate stored optima.
pub fn ion_replay(path: &Path, rec: &mut RunRecord) -> Result<usize, CliError> {
    let optima = stored_optima(path)?;
    if optima.is_empty() {
        return Err(CliError::Config(format!("{}: empty results", path.display())));
    }
    let mut t = Table::new(&REPLAY_HEADER);
    for (t_opt, stored, p) in optima {
        match simulate_preparation(&p, t_opt) {
            Ok(o) => t.push(vec![
                num(t_opt),
                num(stored),
                num(o.fidelity),
                num(o.peak_p1e),
                num(o.final_p1e),
                num(o.leakage),
                ((o.fidelity - stored).abs() <= 1e-6).to_string(),
                String::new(),
            ]),
            Err(e) => t.push(vec![
                num(t_opt),
                num(stored),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                e.to_string(),
            ]),
        }
    }
    rec.write_table("ion_replay.csv", &t)?;
    Ok(t.failed_rows())
}

fn rate_row(name: &str, check: Result<(RateCheck, bool), CliError>) -> Vec<String> {
    match check {
        Ok((c, outside)) => vec![name.into(), num(c.formula), num(c.fitted), num(c.ratio), outside.to_string(), String::new()],
        Err(e) => vec![name.into(), String::new(), String::new(), String::new(), String::new(), e.to_string()],
    }
}

/// Effective-operator rates over the drive grid, plus the repump and
/// boson-elimination formulas.
pub fn eff_ops(cfg: &RunConfig, rec: &mut RunRecord) -> Result<usize, CliError> {
    let e = &cfg.effops;
    let mut t = Table::new(&EFFOPS_HEADER);
    for omega in e.omega.validate("effops.omega")? {
        let p = IonSystemParams {
            omega,
            gamma_e1: e.gamma,
            ..cfg.ion.clone()
        };
        match effective_model(&p) {
            Ok(m) => t.push(vec![
                num(omega),
                num(e.gamma),
                num(m.gamma_eff),
                num(gamma_eff_lowest_order(omega, e.gamma)),
                num(gamma_eff_powerbroadened(omega, e.gamma)),
                num(m.stark_shift),
                num(m.stark_shift_00),
                num(m.p_e1_estimate),
                num(m.flags.omega_over_gamma),
                num(m.flags.gamma_over_g),
                m.flags.perturbative.to_string(),
                String::new(),
            ]),
            Err(err) => {
                let mut row = vec![num(omega), num(e.gamma)];
                row.extend(std::iter::repeat_n(String::new(), EFFOPS_HEADER.len() - 3));
                row.push(err.to_string());
                t.push(row);
            }
        }
    }
    rec.write_table("eff_ops.csv", &t)?;

    let mut r = Table::new(&["process", "rate", "outside_validity", "error"]);
    let raman = raman_repump_rate(e.raman_gamma_0r, e.raman_omega_rep, e.raman_gamma_r);
    let boson = boson_elimination_rate(e.boson_g, e.boson_kappa);
    for (name, res) in [("raman_repump", raman), ("boson_elimination", boson)] {
        match res {
            Ok(f) => r.push(vec![name.into(), num(f.rate), f.outside_validity.to_string(), String::new()]),
            Err(err) => r.push(vec![name.into(), String::new(), String::new(), err.to_string()]),
        }
    }
    rec.write_table("eff_ops_rates.csv", &r)?;
    Ok(t.failed_rows() + r.failed_rows())
}

/// Fitted full-model rates against the effective-operator formulas.
pub fn validate(cfg: &RunConfig, rec: &mut RunRecord) -> Result<(usize, Vec<String>), CliError> {
    let e = &cfg.effops;
    let omegas = e.omega.validate("effops.omega")?;
    let runs: Vec<(f64, f64, Result<gge_core::effops::EffectiveValidation, CliError>)> = omegas
        .par_iter()
        .map(|&omega| {
            let p = IonSystemParams {
                omega,
                gamma_e1: e.gamma,
                ..cfg.ion.clone()
            };
            let horizon = e.lifetimes / gamma_eff_powerbroadened(omega, e.gamma);
            (omega, horizon, validate_effective_vs_full(&p, horizon).map_err(CliError::from))
        })
        .collect();
    let mut t = Table::new(&VALIDATE_HEADER);
    let mut report = Vec::new();
    for (omega, horizon, v) in &runs {
        match v {
            Ok(v) => {
                let (re, rl, rp) = (
                    v.ratio_to(v.gamma_eff),
                    v.ratio_to(v.gamma_eff_lowest_order),
                    v.ratio_to(v.gamma_eff_powerbroadened),
                );
                report.push(format!(
                    "Ω = {omega}: fitted {:.5e}; ratio to effective {re:.3}, to 4Ω²/Γ {rl:.3}, to power-broadened {rp:.3}",
                    v.fitted_rate
                ));
                t.push(vec![
                    num(*omega),
                    num(e.gamma),
                    num(*horizon),
                    num(v.fitted_rate),
                    num(v.gamma_eff),
                    num(v.gamma_eff_lowest_order),
                    num(v.gamma_eff_powerbroadened),
                    num(re),
                    num(rl),
                    num(rp),
                    num(v.max_trace_distance),
                    num(v.mean_p1e),
                    num(v.p_e1_estimate),
                    String::new(),
                ]);
            }
            Err(err) => {
                report.push(format!("Ω = {omega}: {err}"));
                let mut row = vec![num(*omega), num(e.gamma), num(*horizon)];
                row.extend(std::iter::repeat_n(String::new(), VALIDATE_HEADER.len() - 4));
                row.push(err.to_string());
                t.push(row);
            }
        }
    }
    rec.write_table("validate.csv", &t)?;

    let mut r = Table::new(&RATES_HEADER);
    let raman = simulate_raman_repump(e.raman_gamma_0r, e.raman_omega_rep, e.raman_gamma_r).and_then(|c| {
        Ok((c, raman_repump_rate(e.raman_gamma_0r, e.raman_omega_rep, e.raman_gamma_r)?.outside_validity))
    });
    let boson = simulate_boson_elimination(e.boson_g, e.boson_kappa)
        .and_then(|c| Ok((c, boson_elimination_rate(e.boson_g, e.boson_kappa)?.outside_validity)));
    for (name, res) in [("raman_repump", raman), ("boson_elimination", boson)] {
        if let Ok((c, _)) = &res {
            report.push(format!("{name}: fitted {:.5e} vs formula {:.5e}, ratio {:.3}", c.fitted, c.formula, c.ratio));
            if name == "boson_elimination" {
                report.push(format!(
                    "  ratio after the calibrated prefactor {}: {:.3}",
                    prefactors::BOSON_ELIMINATION,
                    c.ratio / prefactors::BOSON_ELIMINATION
                ));
            }
        }
        r.push(rate_row(name, res.map_err(CliError::from)));
    }
    rec.write_table("validate_rates.csv", &r)?;
    Ok((t.failed_rows() + r.failed_rows(), report))
}
