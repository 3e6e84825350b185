//! Write a simulated data set to disk, load it back as a problem, fit it
//! and reload the saved result.

use suptucker::decompose::{fit, FitConfig};
use suptucker::family::ExponentialFamily;
use suptucker::io::{load_problem, read_bundle, read_simulation_meta, simulation_features, write_fit_bundle, write_simulation};
use suptucker::simulate::{generate, SimSpec};

fn main() -> suptucker::Result<()> {
    let dir = std::env::temp_dir().join("suptucker-round-trip");
    let spec = SimSpec::cubic(12, 5, 2, ExponentialFamily::Bernoulli, 3.0, 6)?;
    write_simulation(&dir, &generate(&spec)?, false)?;

    let meta = read_simulation_meta(&dir)?;
    let problem = load_problem(&dir.join("y.tns"), &simulation_features(&dir, &meta), meta.family)?;
    let config = FitConfig::new(meta.rank.clone());
    let f = fit(&problem, &config)?;
    write_fit_bundle(&dir.join("fit"), &problem, &f, &config)?;

    let back = read_bundle(&dir.join("fit"))?;
    println!("reloaded fit: rank {}, objective {:.4}, init {:?}", back.meta.rank, back.meta.final_objective, back.meta.init_used);
    println!("core identical after reload: {}", back.core == f.core);
    println!("files in {}", dir.display());
    Ok(())
}
