//! Front end for the spin-chain and trapped-ion pipelines.
//!
//! Every command writes its files plus a `<command>_manifest.json` into the
//! output directory. Failed sweep points are kept as rows with an `error`
//! cell; the command then exits with the numerical-failure code.

pub mod charges;
pub mod config;
pub mod error;
pub mod figures;
pub mod ion_cmds;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

pub use config::{Grid, Route, RunConfig};
pub use error::CliError;
pub use figures::Selection;

#[derive(Debug, Parser)]
#[command(name = "gge", version, about = "Steady states of weakly open integrable spin chains and their trapped-ion preparation")]
pub struct Cli {
    /// TOML run configuration; defaults apply to everything omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for sweep points (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args, Clone, Default)]
pub struct SweepArgs {
    /// Restrict to these routes (exact, bd, tgge, thermal); repeatable.
    #[arg(long = "route", value_parser = parse_route)]
    pub routes: Vec<Route>,
    /// Use this ring size for every route.
    #[arg(long)]
    pub n: Option<usize>,
}

fn parse_route(s: &str) -> Result<Route, String> {
    Route::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Energy and C4 densities against the dissipation asymmetry γ.
    Figure1(SweepArgs),
    /// Non-thermality of C4 against the anisotropy.
    Figure2(SweepArgs),
    /// Non-thermality of C4 against the field.
    Figure3(SweepArgs),
    /// Three-site correlators against the anisotropy.
    Figure4(SweepArgs),
    /// Conserved-charge family.
    Charges {
        #[command(subcommand)]
        action: ChargesAction,
    },
    /// Population dynamics of the two-ion preparation.
    IonSim,
    /// Optimise the preparation fidelity, or replay stored optima.
    IonOpt {
        /// Preparation time(s) in units of 1/g (the bundled presets are 50, 100, 200).
        #[arg(long = "preset")]
        presets: Vec<f64>,
        /// Re-simulate the optima stored in an `ion-opt` manifest or results file.
        #[arg(long)]
        params_from: Option<PathBuf>,
    },
    /// Effective-operator rates over the drive grid.
    EffOps,
    /// Fit full-model decay rates against the effective-operator formulas.
    Validate,
}

#[derive(Debug, Subcommand)]
pub enum ChargesAction {
    /// Write the family and its commutator check.
    Dump {
        /// Ring size for the check (defaults to the model's).
        #[arg(long)]
        n: Option<usize>,
        /// Number of charges.
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
}

/// What a finished command produced.
#[derive(Debug)]
pub struct Summary {
    pub manifest: PathBuf,
    pub failed_points: usize,
    pub report: Vec<String>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Figure1(_) => "figure1",
            Command::Figure2(_) => "figure2",
            Command::Figure3(_) => "figure3",
            Command::Figure4(_) => "figure4",
            Command::Charges { .. } => "charges",
            Command::IonSim => "ion_sim",
            Command::IonOpt { params_from: Some(_), .. } => "ion_replay",
            Command::IonOpt { .. } => "ion_opt",
            Command::EffOps => "eff_ops",
            Command::Validate => "validate",
        }
    }
}

/// Run one command. Output files are complete even when points fail; the
/// failure count is in the summary.
pub fn run(cli: &Cli) -> Result<Summary, CliError> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    output::prepare_out_dir(&cli.out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let threads = pool.current_num_threads();
    let mut rec = output::RunRecord::new(cli.command.name(), &cli.out, threads);
    let (failed, extra, report) = pool.install(|| -> Result<(usize, Value, Vec<String>), CliError> {
        let sel = |a: &SweepArgs| {
            if let Some(n) = a.n {
                gge_core::SpinChainParams { n, ..cfg.model.clone() }.validate()?;
            }
            Ok::<_, CliError>(Selection {
                routes: a.routes.clone(),
                n: a.n,
            })
        };
        Ok(match &cli.command {
            Command::Figure1(a) => {
                let s = sel(a)?;
                (figures::figure1(&cfg, &s, &mut rec)?, figures::figure_extra(&s), Vec::new())
            }
            Command::Figure2(a) => {
                let s = sel(a)?;
                (figures::figure2(&cfg, &s, &mut rec)?, figures::figure_extra(&s), Vec::new())
            }
            Command::Figure3(a) => {
                let s = sel(a)?;
                (figures::figure3(&cfg, &s, &mut rec)?, figures::figure_extra(&s), Vec::new())
            }
            Command::Figure4(a) => {
                let s = sel(a)?;
                (figures::figure4(&cfg, &s, &mut rec)?, figures::figure_extra(&s), Vec::new())
            }
            Command::Charges {
                action: ChargesAction::Dump { n, count },
            } => (charges::dump(&cfg, *n, *count, &mut rec)?, json!({ "n": n, "count": count }), Vec::new()),
            Command::IonSim => (ion_cmds::ion_sim(&cfg, &mut rec)?, Value::Null, Vec::new()),
            Command::IonOpt {
                params_from: Some(path),
                ..
            } => (ion_cmds::ion_replay(path, &mut rec)?, json!({ "params_from": path }), Vec::new()),
            Command::IonOpt { presets, .. } => {
                if presets.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                    return Err(CliError::Config("--preset values must be positive".into()));
                }
                let (f, extra) = ion_cmds::ion_opt(&cfg, presets, &mut rec)?;
                (f, extra, Vec::new())
            }
            Command::EffOps => (ion_cmds::eff_ops(&cfg, &mut rec)?, Value::Null, Vec::new()),
            Command::Validate => {
                let (f, report) = ion_cmds::validate(&cfg, &mut rec)?;
                (f, json!({ "report": report }), report)
            }
        })
    })?;
    let manifest = rec.finish(&cfg, failed, extra)?;
    Ok(Summary {
        manifest,
        failed_points: failed,
        report,
    })
}
