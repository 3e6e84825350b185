//! Draw a Poisson tensor with features on two modes, fit it at the true
//! rank and compare the estimate with the planted truth.

use suptucker::decompose::{fit, FitConfig};
use suptucker::family::ExponentialFamily;
use suptucker::metrics::EvalReport;
use suptucker::simulate::{generate, SimSpec};

fn main() -> suptucker::Result<()> {
    let mut spec = SimSpec::cubic(30, 12, 3, ExponentialFamily::Poisson, 4.0, 17)?;
    // no side information on the last mode
    spec.feature_dims[2] = None;
    let inst = generate(&spec)?;

    let config = FitConfig::new(spec.rank.clone()).with_seed(1);
    let f = fit(&inst.problem, &config)?;
    let report = EvalReport::from_parts(
        &f.coefficient,
        &inst.truth.coefficient,
        &f.factors,
        &inst.truth.factors,
        &f.fitted_mean(spec.family),
        &inst.truth.mean,
        f.final_objective(),
    )?;
    println!("init used: {}, {} outer iterations, converged: {}", f.init_used, f.n_outer_iters, f.converged);
    println!("objective {:.2} (truth {:.2})", f.final_objective(), inst.truth_objective()?);
    println!("relative coefficient error {:.3}", (report.mse_coefficient).sqrt() / inst.truth.coefficient.fro_norm());
    println!("sin-theta per mode {:.3?}", report.per_mode_sin_theta);
    println!("response error {:.4}", report.response_error.unwrap_or(f64::NAN));
    Ok(())
}
