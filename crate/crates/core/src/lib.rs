//! Supervised Tucker decomposition of exponential-family data tensors.

pub mod cli;
pub mod decompose;
pub mod error;
pub mod experiments;
pub mod family;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod rank_select;
pub mod simulate;
pub mod tensor;

pub use decompose::{
    block_design, fit, fit_from, linear_predictor, mode_update, objective, random_init, spectral_init,
    CoreDesign, DesignPath, Feature, FitConfig, InitStrategy, ModeDesign, RankVector, StdFit,
    SupervisedProblem,
};
pub use error::{Error, Result};
pub use family::{quasi_loglik, solve_glm, solve_glm_with, ExponentialFamily, GlmOptions, GlmResult, LinearDesign};
pub use linalg::{haar_orthonormal, hosvd, sin_theta, thin_qr, truncated_svd, QrResult, SvdResult};
pub use metrics::{angle_errors, mse, response_error, EvalReport};
pub use rank_select::{bic, candidate_grid, effective_params, grid_search, BicEntry, BicTable};
pub use simulate::{derive_seed, generate, generate_noiseless, SimInstance, SimSpec, Truth};
pub use tensor::{DenseMatrix, DenseTensor};
