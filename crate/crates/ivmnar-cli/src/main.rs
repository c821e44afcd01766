use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_rational::BigRational;
use thiserror::Error;

use ivmnar::catalog::{catalog, lookup, CatalogError, Mechanism};
use ivmnar::data::{empirical_observable, parse_dataset, write_csv, DataError, PlugIn};
use ivmnar::engine::{identify, IdentificationResult, IdentifyError};
use ivmnar::forward::{forward_observable, sample_dataset, ForwardError};
use ivmnar::io::{parse_observables, parse_params, write_catalog, write_observables, FormatError};
use ivmnar::model::{ObservableDistribution, Tolerances};
use ivmnar::oracle::{builtin_fixtures, render_table, verify_all};
use ivmnar::scalar::Scalar;
use ivmnar::sensitivity::{run_sensitivity, run_sensitivity_on_dataset};

#[derive(Parser)]
#[command(name = "ivmnar", version, about = "CACE identification under nonignorable missing treatment or outcome")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Seed for sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Sample this many records instead of writing the exact observable law.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Mechanism id; repeat for several.
    #[arg(long = "mechanism", global = true)]
    mechanisms: Vec<String>,
    /// Declare one-sided noncompliance.
    #[arg(long, global = true)]
    one_sided: bool,
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol_det: f64,
    #[arg(long, global = true, default_value_t = 1e-12)]
    tol_prob: f64,
    /// Add 0.5 to every cell count of a CSV dataset.
    #[arg(long, global = true)]
    smooth: bool,
    /// Write to this file instead of stdout.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parameters file to observables (TOML) or, with --n, a sampled CSV.
    Simulate { params: PathBuf },
    /// Identify the CACE from observables (TOML) or a CSV dataset.
    Identify {
        input: PathBuf,
        /// Rational arithmetic; TOML input only.
        #[arg(long)]
        exact: bool,
    },
    /// Read one dataset under several mechanisms (all of them by default).
    Sensitivity { input: PathBuf },
    /// Check the built-in counterexample fixtures.
    VerifyCounterexamples,
    /// Mechanism catalog.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
}

#[derive(Subcommand)]
enum CatalogAction {
    /// Every entry (or those given with --mechanism) as TOML.
    Dump,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Identify(#[from] IdentifyError),
    #[error(transparent)]
    Toml(#[from] toml::ser::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0} of {1} fixtures failed")]
    Fixtures(usize, usize),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Identify(e) if e.is_condition() => 2,
            Self::Identify(IdentifyError::UnknownMechanism(_)) => 1,
            Self::Identify(e) if e.is_refusal() => 3,
            _ => 1,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn emit(common: &Common, text: &str) -> Result<(), CliError> {
    match &common.output {
        Some(path) => {
            std::fs::write(path, text).map_err(|source| CliError::Io { path: path.display().to_string(), source })
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

impl Common {
    fn tolerances(&self) -> Tolerances {
        Tolerances { det: self.tol_det, prob: self.tol_prob }
    }

    fn plug_in(&self) -> PlugIn {
        PlugIn { one_sided: self.one_sided, smooth: self.smooth, tol: 1e-12 }
    }

    fn single_mechanism(&self) -> Result<&str, CliError> {
        match self.mechanisms.as_slice() {
            [one] => Ok(one),
            [] => Err(CliError::Usage("--mechanism is required".into())),
            _ => Err(CliError::Usage("give exactly one --mechanism".into())),
        }
    }

    fn observables<S: Scalar>(&self, input: &Path) -> Result<ObservableDistribution<S>, CliError> {
        let text = read(input)?;
        let mut obs: ObservableDistribution<S> = parse_observables(&text)?;
        obs.one_sided |= self.one_sided;
        Ok(obs)
    }
}

fn simulate(common: &Common, params_path: &Path) -> Result<(), CliError> {
    let (params, named) = parse_params::<BigRational>(&read(params_path)?)?;
    let mech: Mechanism = match (common.mechanisms.first(), named) {
        (Some(id), _) => lookup(id)?,
        (None, Some(m)) => m,
        (None, None) => return Err(CliError::Usage("no mechanism in the parameters file; pass --mechanism".into())),
    };
    let text = match common.n {
        Some(n) => write_csv(&sample_dataset(&params, &mech, n, common.seed)?),
        None => write_observables(&forward_observable(&params, &mech)?)?,
    };
    emit(common, &text)
}

fn result_toml<S: Scalar>(r: &IdentificationResult<S>) -> Result<String, CliError> {
    let mut doc = toml::Table::new();
    doc.insert("mechanism".into(), r.mechanism.clone().into());
    doc.insert("arithmetic".into(), format!("{:?}", r.arithmetic).into());
    doc.insert("cace".into(), r.cace.render().into());
    if let Some((m1, m0)) = &r.complier_means {
        doc.insert("complier_mean_treated".into(), m1.render().into());
        doc.insert("complier_mean_control".into(), m0.render().into());
    }
    let nuisance: toml::Table = r.nuisance.iter().map(|(k, v)| (k.clone(), v.render().into())).collect();
    doc.insert("nuisance".into(), nuisance.into());
    let diagnostics: Vec<toml::Value> = r
        .diagnostics
        .iter()
        .map(|d| {
            let mut t = toml::Table::new();
            t.insert("check".into(), d.check.clone().into());
            t.insert("magnitude".into(), d.magnitude.into());
            t.insert("threshold".into(), d.threshold.into());
            t.insert("passed".into(), d.passed.into());
            t.into()
        })
        .collect();
    doc.insert("diagnostic".into(), diagnostics.into());
    let positivity: Vec<toml::Value> = r
        .positivity
        .iter()
        .map(|p| {
            let mut t = toml::Table::new();
            t.insert("cell".into(), p.cell.clone().into());
            t.insert("mass".into(), p.mass.into());
            t.insert("passed".into(), p.passed.into());
            t.into()
        })
        .collect();
    doc.insert("positivity".into(), positivity.into());
    Ok(toml::to_string(&doc)?)
}

fn identify_cmd(common: &Common, input: &Path, exact: bool) -> Result<(), CliError> {
    let id = common.single_mechanism()?;
    let tol = common.tolerances();
    let text = if is_csv(input) {
        if exact {
            return Err(CliError::Usage("--exact needs a TOML observables file".into()));
        }
        let obs = empirical_observable(&parse_dataset(input)?, &common.plug_in())?;
        result_toml(&identify(id, &obs, &tol)?)?
    } else if exact {
        result_toml(&identify(id, &common.observables::<BigRational>(input)?, &tol)?)?
    } else {
        result_toml(&identify(id, &common.observables::<f64>(input)?, &tol)?)?
    };
    emit(common, &text)
}

fn sensitivity_cmd(common: &Common, input: &Path) -> Result<(), CliError> {
    let mechanisms: Vec<String> = if common.mechanisms.is_empty() {
        catalog().iter().map(|m| m.id.clone()).collect()
    } else {
        common.mechanisms.clone()
    };
    let tol = common.tolerances();
    let report = if is_csv(input) {
        run_sensitivity_on_dataset(&parse_dataset(input)?, &mechanisms, &common.plug_in(), &tol)?
    } else {
        run_sensitivity(&common.observables::<f64>(input)?, &mechanisms, &tol)
    };
    emit(common, &report.to_toml()?)
}

fn verify_cmd(common: &Common) -> Result<(), CliError> {
    let reports = verify_all(&builtin_fixtures());
    emit(common, &render_table(&reports))?;
    let failed = reports.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        return Err(CliError::Fixtures(failed, reports.len()));
    }
    Ok(())
}

fn catalog_dump(common: &Common) -> Result<(), CliError> {
    let mechs: Vec<Mechanism> = if common.mechanisms.is_empty() {
        catalog().to_vec()
    } else {
        common.mechanisms.iter().map(|id| lookup(id)).collect::<Result<_, _>>()?
    };
    emit(common, &write_catalog(&mechs)?)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let common = &cli.common;
    match &cli.command {
        Command::Simulate { params } => simulate(common, params),
        Command::Identify { input, exact } => identify_cmd(common, input, *exact),
        Command::Sensitivity { input } => sensitivity_cmd(common, input),
        Command::VerifyCounterexamples => verify_cmd(common),
        Command::Catalog { action: CatalogAction::Dump } => catalog_dump(common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
