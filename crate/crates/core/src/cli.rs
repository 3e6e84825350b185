//! Command-line interface.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or domain error, 4 numerical
//! failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::decompose::{fit, FitConfig, InitStrategy, RankVector};
use crate::error::{Error, Result};
use crate::experiments::{run_named, ExperimentName};
use crate::family::ExponentialFamily;
use crate::io::{self, FeatureSource};
use crate::metrics::EvalReport;
use crate::rank_select::{grid_search, BicTable};
use crate::simulate::{generate, generate_noiseless, SimSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "suptucker", version, about = "Supervised Tucker decomposition of exponential-family tensors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic data set with a planted low-rank structure.
    Simulate(SimulateArgs),
    /// Fit the decomposition at a fixed rank.
    Fit(FitArgs),
    /// Choose the rank by BIC over a grid of candidates.
    SelectRank(SelectRankArgs),
    /// Compare a fit against a ground truth.
    Evaluate(EvaluateArgs),
    /// Run a replicated simulation study and write a CSV table.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_family)]
    pub model: ExponentialFamily,
    /// Comma-separated tensor dimensions, e.g. 20,20,20.
    #[arg(long, value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
    /// Comma-separated feature dimensions; `identity` for no features.
    #[arg(long, value_delimiter = ',', value_parser = parse_feature_dim)]
    pub feature_dims: Vec<FeatureDim>,
    #[arg(long, value_parser = parse_rank)]
    pub rank: RankVector,
    /// Effect size multiplying the unit max-norm predictor.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gaussian only: the response equals its mean.
    #[arg(long)]
    pub noiseless: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Response tensor in `tns 1` format.
    #[arg(long)]
    pub tensor: PathBuf,
    /// Comma-separated feature CSV paths, one per mode; `identity` for none.
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_feature_source)]
    pub features: Vec<FeatureSource>,
    #[arg(long, value_parser = parse_family)]
    pub model: ExponentialFamily,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Bound on the absolute linear predictor; `inf` disables it.
    #[arg(long, default_value_t = 1e4)]
    pub alpha: f64,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    /// Relative objective change that ends the outer loop.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SolverArgs {
    fn config(&self, rank: RankVector, init: InitStrategy) -> FitConfig {
        let mut cfg = FitConfig::new(rank).with_init(init).with_seed(self.seed);
        cfg.max_outer_iters = self.max_iter;
        cfg.outer_tol = self.tol;
        cfg.glm.predictor_bound = self.alpha.is_finite().then_some(self.alpha);
        cfg
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_parser = parse_rank)]
    pub rank: RankVector,
    #[arg(long, default_value = "both", value_parser = parse_init)]
    pub init: InitStrategy,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectRankArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_parser = parse_rank)]
    pub grid_center: RankVector,
    #[arg(long, default_value_t = 1)]
    pub grid_radius: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Directory receiving `bic_table.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub fit: PathBuf,
    /// Truth bundle, or a simulation directory containing `truth/`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Defaults to `metrics.json` inside the fit directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long, value_parser = parse_experiment)]
    pub name: ExperimentName,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// CSV file to write.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_family(s: &str) -> std::result::Result<ExponentialFamily, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_init(s: &str) -> std::result::Result<InitStrategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_rank(s: &str) -> std::result::Result<RankVector, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_experiment(s: &str) -> std::result::Result<ExperimentName, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Feature dimension of one simulated mode; `None` is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureDim(pub Option<usize>);

fn parse_feature_dim(s: &str) -> std::result::Result<FeatureDim, String> {
    match s.trim() {
        "identity" => Ok(FeatureDim(None)),
        t => t.parse().map(|p| FeatureDim(Some(p))).map_err(|_| format!("{t:?} is neither an integer nor `identity`")),
    }
}

fn parse_feature_source(s: &str) -> std::result::Result<FeatureSource, String> {
    Ok(match s.trim() {
        "identity" => FeatureSource::Identity,
        path => FeatureSource::File(PathBuf::from(path)),
    })
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidRank(_) | Error::InvalidConfig(_) | Error::InvalidDims(_) | Error::EmptyGrid => EXIT_USAGE,
        Error::Numerical(_) => EXIT_NUMERICAL,
        Error::ShapeMismatch(_)
        | Error::ModeOutOfRange { .. }
        | Error::NonFinite(_)
        | Error::DuplicateMode(_)
        | Error::RankDeficient(_)
        | Error::NotOrthonormal(_)
        | Error::Domain { .. }
        | Error::ZeroVariance
        | Error::Parse(_)
        | Error::Io(_) => EXIT_DATA,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    // no feature dims means identity on every mode
    let feature_dims = if args.feature_dims.is_empty() {
        vec![None; args.dims.len()]
    } else {
        args.feature_dims.iter().map(|f| f.0).collect()
    };
    let spec = SimSpec {
        dims: args.dims.clone(),
        feature_dims,
        rank: args.rank.clone(),
        family: args.model,
        effect_size: args.alpha,
        seed: args.seed,
    };
    let inst = if args.noiseless { generate_noiseless(&spec)? } else { generate(&spec)? };
    io::write_simulation(&args.out, &inst, args.noiseless)?;
    writeln!(out, "wrote {}", args.out.display())?;
    Ok(())
}

fn run_fit(args: &FitArgs, out: &mut dyn Write) -> Result<()> {
    let problem = io::load_problem(&args.data.tensor, &args.data.features, args.data.model)?;
    let config = args.solver.config(args.rank.clone(), args.init);
    let f = fit(&problem, &config)?;
    let meta = io::write_fit_bundle(&args.out, &problem, &f, &config)?;
    writeln!(
        out,
        "objective {:.10e} after {} iterations (converged: {}, init: {})",
        meta.final_objective, meta.n_outer_iters, meta.converged, f.init_used
    )?;
    if f.aborted {
        return Err(Error::Numerical("a block update failed; the bundle holds the last valid iterate".into()));
    }
    Ok(())
}

/// `rank_1..rank_K,loglik,p_e,bic,converged`.
pub fn format_bic_table(table: &BicTable) -> String {
    let k = table.selected.order();
    let mut s: String = (1..=k).map(|i| format!("rank_{i},")).collect();
    s.push_str("loglik,p_e,bic,converged\n");
    for e in &table.entries {
        for r in e.rank.as_slice() {
            let _ = write!(s, "{r},");
        }
        let _ = writeln!(s, "{:.16e},{},{:.16e},{}", e.loglik, e.effective_params, e.bic, e.converged);
    }
    s
}

fn select_rank(args: &SelectRankArgs, out: &mut dyn Write) -> Result<()> {
    let problem = io::load_problem(&args.data.tensor, &args.data.features, args.data.model)?;
    let config = args.solver.config(args.grid_center.clone(), InitStrategy::Both);
    let table = grid_search(&problem, &args.grid_center, args.grid_radius, &config, args.jobs)?;
    create_dir(&args.out)?;
    let path = args.out.join("bic_table.csv");
    fs::write(&path, format_bic_table(&table)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    writeln!(out, "{}", table.selected)?;
    Ok(())
}

fn evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let fitted = io::read_bundle(&args.fit)?;
    let truth = io::read_bundle(&io::truth_dir(&args.truth))?;
    if fitted.meta.dims != truth.meta.dims || fitted.meta.feature_dims != truth.meta.feature_dims {
        return Err(Error::ShapeMismatch(format!(
            "fit has dims {:?} and feature dims {:?}, truth has {:?} and {:?}",
            fitted.meta.dims, fitted.meta.feature_dims, truth.meta.dims, truth.meta.feature_dims
        )));
    }
    let report = EvalReport::from_parts(
        &fitted.coefficient,
        &truth.coefficient,
        &fitted.factors,
        &truth.factors,
        &fitted.mean,
        &truth.mean,
        fitted.meta.final_objective,
    )?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    let path = args.out.clone().unwrap_or_else(|| args.fit.join("metrics.json"));
    fs::write(&path, &json).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    out.write_all(json.as_bytes())?;
    Ok(())
}

fn experiment(args: &ExperimentArgs, out: &mut dyn Write) -> Result<()> {
    let csv = run_named(args.name, args.reps, args.seed, args.jobs)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(&args.out, &csv).map_err(|e| Error::Io(format!("{}: {e}", args.out.display())))?;
    writeln!(out, "wrote {} rows to {}", csv.lines().count().saturating_sub(1), args.out.display())?;
    Ok(())
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a, out),
        Command::Fit(a) => run_fit(a, out),
        Command::SelectRank(a) => select_rank(a, out),
        Command::Evaluate(a) => evaluate(a, out),
        Command::Experiment(a) => experiment(a, out),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn comma_lists_parse() {
        let cli = Cli::try_parse_from([
            "suptucker", "simulate", "--model", "gaussian", "--dims", "20,20,20", "--feature-dims", "8,identity,8",
            "--rank", "3,3,3", "--out", "x",
        ])
        .unwrap();
        let Command::Simulate(a) = cli.command else { panic!("wrong subcommand") };
        assert_eq!(a.dims, vec![20, 20, 20]);
        assert_eq!(a.feature_dims, vec![FeatureDim(Some(8)), FeatureDim(None), FeatureDim(Some(8))]);
        assert_eq!(a.rank.as_slice(), &[3, 3, 3]);

        let cli = Cli::try_parse_from([
            "suptucker", "fit", "--tensor", "y.tns", "--features", "a.csv,identity", "--model", "poisson", "--rank",
            "2,2", "--out", "o",
        ])
        .unwrap();
        let Command::Fit(a) = cli.command else { panic!("wrong subcommand") };
        assert_eq!(a.data.features, vec![FeatureSource::File("a.csv".into()), FeatureSource::Identity]);
        assert_eq!(a.init, InitStrategy::Both);
        assert_eq!(a.solver.alpha, 1e4);
        assert!(Cli::try_parse_from(["suptucker", "simulate", "--model", "gaussian", "--dims", "2,x"]).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::EmptyGrid), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Domain { index: 0, message: String::new() }), EXIT_DATA);
        assert_eq!(exit_code(&Error::Numerical(String::new())), EXIT_NUMERICAL);
        assert_eq!(main_with_args(["suptucker", "fit", "--bogus"]), EXIT_USAGE);
    }
}
