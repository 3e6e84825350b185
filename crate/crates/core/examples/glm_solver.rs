//! Logistic and Poisson regression with the Newton solver used by every
//! block update.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use suptucker::family::{solve_glm, ExponentialFamily, GlmOptions};
use suptucker::tensor::DenseMatrix;

fn main() -> suptucker::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let beta = [0.8, -0.5, 0.3];
    let x = DenseMatrix::from_fn(500, 3, |_, _| rng.sample(StandardNormal));
    let eta: Vec<f64> = (0..500).map(|i| (0..3).map(|j| x[(i, j)] * beta[j]).sum()).collect();

    for family in [ExponentialFamily::Bernoulli, ExponentialFamily::Poisson] {
        let y: Vec<f64> = eta
            .iter()
            .map(|&t| match family {
                ExponentialFamily::Poisson => Poisson::new(t.exp()).unwrap().sample(&mut rng),
                _ => f64::from(rng.random::<f64>() < family.mean(t)),
            })
            .collect();
        let fit = solve_glm(family, &y, &x, None, &GlmOptions::default())?;
        println!(
            "{family}: coefficients {:.3?} (truth {beta:?}), {} Newton steps, objective {:.3}",
            fit.coefficients, fit.n_iters, fit.final_objective
        );
    }
    Ok(())
}
