//! Coefficient error against dimension, with the fitted log-log slope.

use suptucker::experiments::{run_scaling, scaling_slope, ScalingPlan};
use suptucker::family::ExponentialFamily;

fn main() -> suptucker::Result<()> {
    let plan = ScalingPlan {
        families: vec![ExponentialFamily::Gaussian],
        dims: vec![20, 30, 40],
        reps: 3,
        ..ScalingPlan::new(3, 4)
    };
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let rows = run_scaling(&plan, jobs)?;
    for d in &plan.dims {
        let cell: Vec<f64> = rows.iter().filter(|r| r.d == *d).map(|r| r.report.mse_coefficient).collect();
        println!("d = {d}: mean squared error {:.4}", cell.iter().sum::<f64>() / cell.len() as f64);
    }
    if let Some(s) = scaling_slope(&rows, ExponentialFamily::Gaussian) {
        println!("log-log slope {s:.2}");
    }
    Ok(())
}
