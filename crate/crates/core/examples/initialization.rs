//! Spectral start versus random starts on the same data.

use suptucker::decompose::{fit_from, objective, random_init, spectral_init, FitConfig, InitStrategy};
use suptucker::family::ExponentialFamily;
use suptucker::linalg::sin_theta;
use suptucker::simulate::{generate, SimSpec};

fn main() -> suptucker::Result<()> {
    let spec = SimSpec::cubic(25, 10, 3, ExponentialFamily::Bernoulli, 6.0, 5)?;
    let inst = generate(&spec)?;
    let problem = &inst.problem;
    let config = FitConfig::new(spec.rank.clone());

    let (core, factors) = spectral_init(problem, &spec.rank)?;
    let angle = (0..3).map(|k| sin_theta(&factors[k], &inst.truth.factors[k])).collect::<Result<Vec<_>, _>>()?;
    println!("spectral start: objective {:.1}, sin-theta to truth {angle:.3?}", objective(problem, &core, &factors)?);
    let warm = fit_from(problem, core, factors, &config, InitStrategy::Spectral)?;
    println!("  -> {:.1} after {} iterations", warm.final_objective(), warm.n_outer_iters);

    for seed in 0..3 {
        let (core, factors) = random_init(problem, &spec.rank, seed)?;
        let start = objective(problem, &core, &factors)?;
        let cold = fit_from(problem, core, factors, &config, InitStrategy::Random)?;
        println!("random start {seed}: {start:.1} -> {:.1} after {} iterations", cold.final_objective(), cold.n_outer_iters);
    }
    Ok(())
}
