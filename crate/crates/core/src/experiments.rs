//! Replicated simulation studies: objective trajectories, error scaling in
//! the dimension, and BIC rank recovery.
//!
//! Every run draws its seed from the plan seed and the run's coordinates, so
//! the output does not depend on how many workers execute it.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::decompose::{fit, relative_change, FitConfig, InitStrategy, RankVector};
use crate::error::{Error, Result};
use crate::family::ExponentialFamily;
use crate::metrics::EvalReport;
use crate::rank_select::grid_search;
use crate::simulate::{derive_seed, generate, SimSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentName {
    Fig2,
    Fig3,
    Table3,
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Fig2 => "fig2",
            Self::Fig3 => "fig3",
            Self::Table3 => "table3",
        })
    }
}

impl FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fig2" => Ok(Self::Fig2),
            "fig3" => Ok(Self::Fig3),
            "table3" => Ok(Self::Table3),
            other => Err(Error::InvalidConfig(format!("unknown experiment {other:?} (expected fig2, fig3 or table3)"))),
        }
    }
}

/// `p = round(0.4 d)`, the feature dimension used throughout the studies.
pub fn default_feature_dim(d: usize) -> usize {
    ((0.4 * d as f64).round() as usize).max(1)
}

fn family_index(f: ExponentialFamily) -> u64 {
    ExponentialFamily::ALL.iter().position(|&g| g == f).expect("family is listed") as u64
}

fn run_parallel<T: Send, R: Send>(jobs: usize, tasks: Vec<T>, f: impl Fn(T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    if jobs == 0 {
        return Err(Error::InvalidConfig("jobs must be at least 1".into()));
    }
    let out: Vec<Result<R>> = if jobs == 1 {
        tasks.into_iter().map(&f).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| tasks.into_par_iter().map(&f).collect())
    };
    out.into_iter().collect()
}

/// Rows that can be written as a CSV table.
pub trait CsvRow {
    fn header() -> Vec<&'static str>;
    fn fields(&self) -> Vec<String>;
}

pub fn to_csv<R: CsvRow>(rows: &[R]) -> String {
    let mut s = R::header().join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.fields().join(","));
        s.push('\n');
    }
    s
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Relative slack for rounding in the re-orthonormalization step.
pub const MONOTONE_SLACK: f64 = 1e-10;

/// Every step is an ascent up to `MONOTONE_SLACK` relative rounding.
pub fn non_decreasing(trajectory: &[f64]) -> bool {
    trajectory.windows(2).all(|w| w[1] >= w[0] - MONOTONE_SLACK * w[0].abs().max(1.0))
}

/// Objective trajectories from random starts.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPlan {
    pub families: Vec<ExponentialFamily>,
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    pub effect_size: f64,
    pub reps: usize,
    pub seed: u64,
}

impl TrajectoryPlan {
    pub fn new(reps: usize, seed: u64) -> Self {
        Self {
            families: ExponentialFamily::ALL.to_vec(),
            dims: vec![25, 30],
            ranks: vec![3, 6],
            effect_size: 10.0,
            reps,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub family: ExponentialFamily,
    pub d: usize,
    pub p: usize,
    pub r: usize,
    pub replicate: usize,
    pub seed: u64,
    /// First outer iteration whose relative objective change fell below
    /// the tolerance.
    pub iters_to_tol: Option<usize>,
    pub converged: bool,
    pub monotone: bool,
    pub final_objective: f64,
    pub truth_objective: f64,
    pub trajectory: Vec<f64>,
}

impl CsvRow for TrajectoryRow {
    fn header() -> Vec<&'static str> {
        vec![
            "family",
            "d",
            "p",
            "r",
            "replicate",
            "seed",
            "iters_to_tol",
            "converged",
            "monotone",
            "final_objective",
            "truth_objective",
            "trajectory",
        ]
    }

    fn fields(&self) -> Vec<String> {
        let traj: Vec<String> = self.trajectory.iter().map(|&v| real(v)).collect();
        vec![
            self.family.to_string(),
            self.d.to_string(),
            self.p.to_string(),
            self.r.to_string(),
            self.replicate.to_string(),
            self.seed.to_string(),
            self.iters_to_tol.map_or_else(String::new, |i| i.to_string()),
            self.converged.to_string(),
            self.monotone.to_string(),
            real(self.final_objective),
            real(self.truth_objective),
            traj.join(";"),
        ]
    }
}

pub fn run_trajectories(plan: &TrajectoryPlan, jobs: usize) -> Result<Vec<TrajectoryRow>> {
    let mut tasks = Vec::new();
    for &family in &plan.families {
        for &d in &plan.dims {
            for &r in &plan.ranks {
                for rep in 0..plan.reps {
                    tasks.push((family, d, r, rep));
                }
            }
        }
    }
    run_parallel(jobs, tasks, |(family, d, r, rep)| {
        let p = default_feature_dim(d);
        let seed = derive_seed(plan.seed, &[2, family_index(family), d as u64, r as u64, rep as u64]);
        let inst = generate(&SimSpec::cubic(d, p, r, family, plan.effect_size, seed)?)?;
        let config = FitConfig::new(RankVector::new(vec![r; 3])?)
            .with_init(InitStrategy::Random)
            .with_seed(derive_seed(seed, &[1]));
        let f = fit(&inst.problem, &config)?;
        let iters_to_tol = f
            .trajectory
            .windows(2)
            .position(|w| relative_change(w[0], w[1]) < config.outer_tol)
            .map(|i| i + 1);
        Ok(TrajectoryRow {
            family,
            d,
            p,
            r,
            replicate: rep,
            seed,
            iters_to_tol,
            converged: f.converged,
            monotone: non_decreasing(&f.trajectory),
            final_objective: f.final_objective(),
            truth_objective: inst.truth_objective()?,
            trajectory: f.trajectory,
        })
    })
}

/// Coefficient error as the dimension grows.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPlan {
    pub families: Vec<ExponentialFamily>,
    pub dims: Vec<usize>,
    pub rank: usize,
    pub effect_size: f64,
    pub reps: usize,
    pub seed: u64,
}

impl ScalingPlan {
    pub fn new(reps: usize, seed: u64) -> Self {
        Self {
            families: ExponentialFamily::ALL.to_vec(),
            dims: vec![30, 40, 50, 60],
            rank: 2,
            effect_size: 10.0,
            reps,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub family: ExponentialFamily,
    pub d: usize,
    pub p: usize,
    pub r: usize,
    pub replicate: usize,
    pub seed: u64,
    pub report: EvalReport,
    pub converged: bool,
    pub init_used: InitStrategy,
}

impl CsvRow for ScalingRow {
    fn header() -> Vec<&'static str> {
        vec![
            "family",
            "d",
            "p",
            "r",
            "replicate",
            "seed",
            "mse_coefficient",
            "max_sin_theta",
            "response_error",
            "final_objective",
            "converged",
            "init_used",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.family.to_string(),
            self.d.to_string(),
            self.p.to_string(),
            self.r.to_string(),
            self.replicate.to_string(),
            self.seed.to_string(),
            real(self.report.mse_coefficient),
            real(self.report.max_sin_theta),
            self.report.response_error.map_or_else(String::new, real),
            real(self.report.final_objective),
            self.converged.to_string(),
            self.init_used.to_string(),
        ]
    }
}

pub fn run_scaling(plan: &ScalingPlan, jobs: usize) -> Result<Vec<ScalingRow>> {
    let mut tasks = Vec::new();
    for &family in &plan.families {
        for &d in &plan.dims {
            for rep in 0..plan.reps {
                tasks.push((family, d, rep));
            }
        }
    }
    let r = plan.rank;
    run_parallel(jobs, tasks, |(family, d, rep)| {
        let p = default_feature_dim(d);
        let seed = derive_seed(plan.seed, &[3, family_index(family), d as u64, r as u64, rep as u64]);
        let inst = generate(&SimSpec::cubic(d, p, r, family, plan.effect_size, seed)?)?;
        let config = FitConfig::new(RankVector::new(vec![r; 3])?).with_seed(derive_seed(seed, &[1]));
        let f = fit(&inst.problem, &config)?;
        let report = EvalReport::from_parts(
            &f.coefficient,
            &inst.truth.coefficient,
            &f.factors,
            &inst.truth.factors,
            &f.fitted_mean(family),
            &inst.truth.mean,
            f.final_objective(),
        )?;
        Ok(ScalingRow { family, d, p, r, replicate: rep, seed, report, converged: f.converged, init_used: f.init_used })
    })
}

/// Least-squares slope of `log(mean mse)` against `log(d)` for one family.
pub fn scaling_slope(rows: &[ScalingRow], family: ExponentialFamily) -> Option<f64> {
    let mut dims: Vec<usize> = rows.iter().filter(|r| r.family == family).map(|r| r.d).collect();
    dims.sort_unstable();
    dims.dedup();
    if dims.len() < 2 {
        return None;
    }
    let points: Vec<(f64, f64)> = dims
        .iter()
        .map(|&d| {
            let cell: Vec<f64> = rows
                .iter()
                .filter(|r| r.family == family && r.d == d)
                .map(|r| r.report.mse_coefficient)
                .collect();
            let mean = cell.iter().sum::<f64>() / cell.len() as f64;
            ((d as f64).ln(), mean.ln())
        })
        .collect();
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

/// BIC rank recovery on replicated Gaussian data.
#[derive(Debug, Clone, PartialEq)]
pub struct RankPlan {
    pub family: ExponentialFamily,
    pub d: usize,
    pub p: usize,
    pub true_rank: RankVector,
    pub effect_size: f64,
    pub radius: usize,
    pub reps: usize,
    pub seed: u64,
}

impl RankPlan {
    pub fn new(reps: usize, seed: u64) -> Self {
        Self {
            family: ExponentialFamily::Gaussian,
            d: 40,
            p: 16,
            true_rank: RankVector::new(vec![3, 3, 3]).expect("positive rank"),
            effect_size: 4.0,
            radius: 2,
            reps,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankRow {
    pub family: ExponentialFamily,
    pub d: usize,
    pub p: usize,
    pub true_rank: RankVector,
    pub replicate: usize,
    pub seed: u64,
    pub selected: RankVector,
    pub selected_bic: f64,
    pub n_candidates: usize,
}

impl CsvRow for RankRow {
    fn header() -> Vec<&'static str> {
        vec![
            "family",
            "d",
            "p",
            "true_rank",
            "replicate",
            "seed",
            "selected_rank",
            "selected_rank_1",
            "selected_rank_2",
            "selected_rank_3",
            "selected_bic",
            "n_candidates",
        ]
    }

    fn fields(&self) -> Vec<String> {
        let mut out = vec![
            self.family.to_string(),
            self.d.to_string(),
            self.p.to_string(),
            self.true_rank.as_slice().iter().map(|r| r.to_string()).collect::<Vec<_>>().join("x"),
            self.replicate.to_string(),
            self.seed.to_string(),
            self.selected.as_slice().iter().map(|r| r.to_string()).collect::<Vec<_>>().join("x"),
        ];
        // fixed three columns so the header stays rectangular
        for k in 0..3 {
            out.push(self.selected.as_slice().get(k).map_or_else(String::new, |r| r.to_string()));
        }
        out.push(real(self.selected_bic));
        out.push(self.n_candidates.to_string());
        out
    }
}

/// Replicates run in parallel; each grid search runs serially inside its
/// worker.
pub fn run_rank_selection(plan: &RankPlan, jobs: usize) -> Result<Vec<RankRow>> {
    let order = plan.true_rank.order();
    let tasks: Vec<usize> = (0..plan.reps).collect();
    run_parallel(jobs, tasks, |rep| {
        let seed = derive_seed(plan.seed, &[4, family_index(plan.family), plan.d as u64, rep as u64]);
        let spec = SimSpec {
            dims: vec![plan.d; order],
            feature_dims: vec![Some(plan.p); order],
            rank: plan.true_rank.clone(),
            family: plan.family,
            effect_size: plan.effect_size,
            seed,
        };
        let inst = generate(&spec)?;
        let config = FitConfig::new(plan.true_rank.clone()).with_seed(derive_seed(seed, &[1]));
        let table = grid_search(&inst.problem, &plan.true_rank, plan.radius, &config, 1)?;
        Ok(RankRow {
            family: plan.family,
            d: plan.d,
            p: plan.p,
            true_rank: plan.true_rank.clone(),
            replicate: rep,
            seed,
            selected_bic: table.selected_entry().bic,
            selected: table.selected,
            n_candidates: table.entries.len(),
        })
    })
}

/// Runs a named study with its default plan and returns the CSV table.
pub fn run_named(name: ExperimentName, reps: usize, seed: u64, jobs: usize) -> Result<String> {
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    Ok(match name {
        ExperimentName::Fig2 => to_csv(&run_trajectories(&TrajectoryPlan::new(reps, seed), jobs)?),
        ExperimentName::Fig3 => to_csv(&run_scaling(&ScalingPlan::new(reps, seed), jobs)?),
        ExperimentName::Table3 => to_csv(&run_rank_selection(&RankPlan::new(reps, seed), jobs)?),
    })
}
