//! Rank selection by BIC over a box of candidate ranks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decompose::{fit, FitConfig, InitStrategy, RankVector, StdFit, SupervisedProblem};
use crate::error::{Error, Result};
use crate::simulate::derive_seed;

/// `sum_k (p_k - r_k) r_k + prod_k r_k`.
pub fn effective_params(rank: &RankVector, feature_dims: &[usize]) -> Result<usize> {
    let r = rank.as_slice();
    if r.len() != feature_dims.len() {
        return Err(Error::InvalidRank(format!(
            "rank has {} entries, expected {}",
            r.len(),
            feature_dims.len()
        )));
    }
    if let Some(k) = (0..r.len()).find(|&k| r[k] > feature_dims[k]) {
        return Err(Error::InvalidRank(format!(
            "r_{} = {} exceeds p_{} = {}",
            k + 1,
            r[k],
            k + 1,
            feature_dims[k]
        )));
    }
    let free: usize = r.iter().zip(feature_dims).map(|(&rk, &pk)| (pk - rk) * rk).sum();
    Ok(free + r.iter().product::<usize>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicEntry {
    pub rank: RankVector,
    pub bic: f64,
    pub loglik: f64,
    pub effective_params: usize,
    pub converged: bool,
}

/// `-2 loglik + p_e log(N)` with `N = prod_k d_k`.
pub fn bic_value(loglik: f64, effective_params: usize, n_entries: usize) -> f64 {
    -2.0 * loglik + effective_params as f64 * (n_entries as f64).ln()
}

pub fn bic(problem: &SupervisedProblem, fit: &StdFit) -> Result<BicEntry> {
    let rank = RankVector::new(fit.core.dims().to_vec())?;
    let p_e = effective_params(&rank, problem.feature_dims())?;
    let loglik = fit.final_objective();
    Ok(BicEntry {
        bic: bic_value(loglik, p_e, problem.y().len()),
        rank,
        loglik,
        effective_params: p_e,
        converged: fit.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicTable {
    /// Lexicographic order by rank.
    pub entries: Vec<BicEntry>,
    pub selected: RankVector,
}

impl BicTable {
    /// Minimum BIC; ties go to the lexicographically smallest rank.
    pub fn from_entries(mut entries: Vec<BicEntry>) -> Result<Self> {
        entries.sort_by(|a, b| a.rank.cmp(&b.rank));
        let best = entries
            .iter()
            .reduce(|best, e| if e.bic < best.bic { e } else { best })
            .ok_or(Error::EmptyGrid)?;
        let selected = best.rank.clone();
        Ok(Self { entries, selected })
    }

    pub fn selected_entry(&self) -> &BicEntry {
        self.entries.iter().find(|e| e.rank == self.selected).expect("selected rank is in the table")
    }
}

/// Ranks in `[center - radius, center + radius]` clipped to `[1, p_k]`,
/// keeping only admissible ones, in lexicographic order.
pub fn candidate_grid(center: &RankVector, radius: usize, feature_dims: &[usize]) -> Result<Vec<RankVector>> {
    let c = center.as_slice();
    if c.len() != feature_dims.len() {
        return Err(Error::InvalidRank(format!(
            "grid center has {} entries, expected {}",
            c.len(),
            feature_dims.len()
        )));
    }
    let ranges: Vec<(usize, usize)> = c
        .iter()
        .zip(feature_dims)
        .map(|(&ck, &pk)| (ck.saturating_sub(radius).max(1), (ck + radius).min(pk)))
        .collect();
    if ranges.iter().any(|&(lo, hi)| lo > hi) {
        return Err(Error::EmptyGrid);
    }
    let mut out = Vec::new();
    let mut cur: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    loop {
        let rank = RankVector::new(cur.clone())?;
        if rank.is_admissible() {
            out.push(rank);
        }
        // odometer with the last mode fastest
        let mut k = cur.len();
        loop {
            if k == 0 {
                return if out.is_empty() { Err(Error::EmptyGrid) } else { Ok(out) };
            }
            k -= 1;
            if cur[k] < ranges[k].1 {
                cur[k] += 1;
                break;
            }
            cur[k] = ranges[k].0;
        }
    }
}

/// Fits every candidate rank with both initializations and tabulates BIC.
/// Each candidate's seed derives from `config.seed` and the rank, so the
/// table does not depend on `jobs`.
pub fn grid_search(
    problem: &SupervisedProblem,
    center: &RankVector,
    radius: usize,
    config: &FitConfig,
    jobs: usize,
) -> Result<BicTable> {
    if jobs == 0 {
        return Err(Error::InvalidConfig("jobs must be at least 1".into()));
    }
    let candidates = candidate_grid(center, radius, problem.feature_dims())?;
    let evaluate = |rank: &RankVector| -> Result<BicEntry> {
        let path: Vec<u64> = rank.as_slice().iter().map(|&r| r as u64).collect();
        let mut cfg = config.clone().with_init(InitStrategy::Both).with_seed(derive_seed(config.seed, &path));
        cfg.rank = rank.clone();
        bic(problem, &fit(problem, &cfg)?)
    };
    let entries: Vec<Result<BicEntry>> = if jobs == 1 {
        candidates.iter().map(evaluate).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| candidates.par_iter().map(evaluate).collect())
    };
    BicTable::from_entries(entries.into_iter().collect::<Result<Vec<_>>>()?)
}
