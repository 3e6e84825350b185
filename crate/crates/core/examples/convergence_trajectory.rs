//! Objective after each outer sweep from a random start, next to the
//! objective at the true parameters.

use suptucker::decompose::{fit, FitConfig, InitStrategy};
use suptucker::family::ExponentialFamily;
use suptucker::simulate::{generate, SimSpec};

fn main() -> suptucker::Result<()> {
    for family in ExponentialFamily::ALL {
        let spec = SimSpec::cubic(25, 10, 3, family, 10.0, 8)?;
        let inst = generate(&spec)?;
        let config = FitConfig::new(spec.rank.clone()).with_init(InitStrategy::Random).with_seed(2);
        let f = fit(&inst.problem, &config)?;
        println!("{family} (truth {:.1}):", inst.truth_objective()?);
        for (i, v) in f.trajectory.iter().enumerate() {
            println!("  {i:>2}  {v:.3}");
        }
    }
    Ok(())
}
