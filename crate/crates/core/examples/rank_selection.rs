//! BIC over a box of candidate ranks around a guess.

use suptucker::decompose::{FitConfig, RankVector};
use suptucker::family::ExponentialFamily;
use suptucker::rank_select::grid_search;
use suptucker::simulate::{generate, SimSpec};

fn main() -> suptucker::Result<()> {
    let mut spec = SimSpec::cubic(24, 10, 2, ExponentialFamily::Gaussian, 4.0, 21)?;
    spec.rank = RankVector::new(vec![2, 3, 2])?;
    let inst = generate(&spec)?;

    let center = RankVector::new(vec![2, 2, 2])?;
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let table = grid_search(&inst.problem, &center, 1, &FitConfig::new(center.clone()).with_seed(9), jobs)?;
    for e in &table.entries {
        println!("{:>7}  loglik {:>12.2}  p_e {:>3}  bic {:>12.2}", e.rank.to_string(), e.loglik, e.effective_params, e.bic);
    }
    println!("selected {} (truth {})", table.selected, spec.rank);
    Ok(())
}
