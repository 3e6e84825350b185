//! Supervised Tucker decomposition.
//!
//! The mean of each entry of the response tensor `Y` is `f(theta)` with
//!
//! ```text
//! Theta = C x_1 (X_1 M_1) x_2 ... x_K (X_K M_K)
//! ```
//!
//! where `X_k` (`d_k x p_k`) are known feature matrices, `M_k` (`p_k x r_k`)
//! have orthonormal columns and `C` is the `r_1 x ... x r_K` core. The fit
//! maximizes the quasi log-likelihood by cycling through the factor blocks
//! and then the core, each block update being an exponential-family GLM.
//! After every factor update the solution is re-orthonormalized by QR and
//! the triangular part is absorbed into the core, which leaves `Theta`
//! unchanged.
//!
//! Factor-block GLMs are solved through [`ModeDesign`], which applies the
//! Kronecker-structured design without materializing it. [`block_design`]
//! builds the same design densely and serves as the reference path.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrixView, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{solve_glm, solve_glm_with, ExponentialFamily, GlmOptions, GlmResult, LinearDesign};
use crate::linalg::{self, hosvd, qr_unchecked, thin_qr, QrResult};
use crate::tensor::{DenseMatrix, DenseTensor};

/// Side information on one mode.
#[derive(Debug, Clone, PartialEq)]
pub enum Feature {
    /// No features: `X_k = I`, so `p_k = d_k`.
    Identity,
    Matrix(DenseMatrix),
}

#[derive(Debug, Clone)]
pub struct SupervisedProblem {
    y: DenseTensor,
    features: Vec<Feature>,
    family: ExponentialFamily,
    feature_dims: Vec<usize>,
    qr: Vec<Option<QrResult>>,
}

impl SupervisedProblem {
    /// Validates feature shapes, full column rank and the response domain.
    pub fn new(y: DenseTensor, features: Vec<Feature>, family: ExponentialFamily) -> Result<Self> {
        if features.len() != y.order() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature entries for an order-{} tensor",
                features.len(),
                y.order()
            )));
        }
        let mut feature_dims = Vec::with_capacity(features.len());
        let mut qr = Vec::with_capacity(features.len());
        for (k, (f, &d)) in features.iter().zip(y.dims()).enumerate() {
            match f {
                Feature::Identity => {
                    feature_dims.push(d);
                    qr.push(None);
                }
                Feature::Matrix(x) => {
                    if x.nrows() != d {
                        return Err(Error::ShapeMismatch(format!(
                            "feature matrix of mode {k} has {} rows, tensor has {d}",
                            x.nrows()
                        )));
                    }
                    if x.ncols() > d {
                        return Err(Error::RankDeficient(format!(
                            "feature matrix of mode {k} has more columns ({}) than rows ({d})",
                            x.ncols()
                        )));
                    }
                    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
                        return Err(Error::NonFinite(i));
                    }
                    let f = thin_qr(x).map_err(|e| match e {
                        Error::RankDeficient(m) => {
                            Error::RankDeficient(format!("feature matrix of mode {k}: {m}"))
                        }
                        other => other,
                    })?;
                    feature_dims.push(x.ncols());
                    qr.push(Some(f));
                }
            }
        }
        family.validate_response(y.values())?;
        Ok(Self {
            y,
            features,
            family,
            feature_dims,
            qr,
        })
    }

    pub fn y(&self) -> &DenseTensor {
        &self.y
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn family(&self) -> ExponentialFamily {
        self.family
    }

    pub fn order(&self) -> usize {
        self.y.order()
    }

    pub fn dims(&self) -> &[usize] {
        self.y.dims()
    }

    /// `p_k` for every mode.
    pub fn feature_dims(&self) -> &[usize] {
        &self.feature_dims
    }

    /// `X_k m`, or `m` itself on identity modes.
    pub fn apply_feature(&self, mode: usize, m: &DenseMatrix) -> DenseMatrix {
        match &self.features[mode] {
            Feature::Identity => m.clone(),
            Feature::Matrix(x) => x * m,
        }
    }

    /// Same problem with the response replaced, e.g. for refits on resampled data.
    pub fn with_response(&self, y: DenseTensor) -> Result<Self> {
        if y.dims() != self.y.dims() {
            return Err(Error::ShapeMismatch(format!(
                "response dims {:?} vs {:?}",
                y.dims(),
                self.y.dims()
            )));
        }
        self.family.validate_response(y.values())?;
        Ok(Self { y, ..self.clone() })
    }
}

/// Multilinear (Tucker) rank.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RankVector(Vec<usize>);

impl RankVector {
    pub fn new(r: Vec<usize>) -> Result<Self> {
        if r.is_empty() || r.iter().any(|&v| v == 0) {
            return Err(Error::InvalidRank(format!("ranks must be positive, got {r:?}")));
        }
        Ok(Self(r))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn is_admissible(&self) -> bool {
        linalg::rank_admissible(&self.0)
    }

    /// Checks `r_k <= p_k` and admissibility against the feature dimensions.
    pub fn check_against(&self, feature_dims: &[usize]) -> Result<()> {
        if self.0.len() != feature_dims.len() {
            return Err(Error::InvalidRank(format!(
                "rank {self} has {} modes, problem has {}",
                self.0.len(),
                feature_dims.len()
            )));
        }
        for (k, (&r, &p)) in self.0.iter().zip(feature_dims).enumerate() {
            if r > p {
                return Err(Error::InvalidRank(format!(
                    "rank {r} on mode {} exceeds feature dimension {p}",
                    k + 1
                )));
            }
        }
        if !self.is_admissible() {
            return Err(Error::InvalidRank(format!(
                "rank {self} violates r_k <= prod of the other ranks"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for RankVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|r| r.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for RankVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let r = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad rank entry `{p}` in `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitStrategy {
    Spectral,
    Random,
    /// Run both and keep the fit with the larger final objective.
    Both,
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Spectral => "spectral",
            Self::Random => "random",
            Self::Both => "both",
        })
    }
}

impl FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spectral" | "warm" => Ok(Self::Spectral),
            "random" | "cold" => Ok(Self::Random),
            "both" => Ok(Self::Both),
            other => Err(Error::InvalidConfig(format!("unknown init `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub rank: RankVector,
    pub init: InitStrategy,
    pub max_outer_iters: usize,
    /// Relative objective change that stops the outer loop.
    pub outer_tol: f64,
    pub glm: GlmOptions,
    /// Seed for the random initialization.
    pub seed: u64,
}

impl FitConfig {
    pub fn new(rank: RankVector) -> Self {
        Self {
            rank,
            init: InitStrategy::Both,
            max_outer_iters: 50,
            outer_tol: 1e-4,
            glm: GlmOptions::default(),
            seed: 0,
        }
    }

    pub fn with_init(mut self, init: InitStrategy) -> Self {
        self.init = init;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidConfig("max_outer_iters must be positive".into()));
        }
        if !(self.outer_tol > 0.0) {
            return Err(Error::InvalidConfig("outer tolerance must be positive".into()));
        }
        self.glm.validate()
    }
}

/// Fitted decomposition.
#[derive(Debug, Clone)]
pub struct StdFit {
    pub core: DenseTensor,
    /// `p_k x r_k`, orthonormal columns.
    pub factors: Vec<DenseMatrix>,
    /// `C x {M_1, ..., M_K}`, shape `p_1 x ... x p_K`.
    pub coefficient: DenseTensor,
    /// `Theta`, shape `d_1 x ... x d_K`.
    pub linear_predictor: DenseTensor,
    /// Objective at the initialization and after every outer sweep.
    pub trajectory: Vec<f64>,
    pub converged: bool,
    pub n_outer_iters: usize,
    /// Initialization that produced this fit (never `Both`).
    pub init_used: InitStrategy,
    /// A GLM sub-problem failed and the loop stopped early.
    pub aborted: bool,
}

impl StdFit {
    pub fn final_objective(&self) -> f64 {
        *self.trajectory.last().expect("trajectory is never empty")
    }

    /// Fitted mean tensor `f(Theta)`.
    pub fn fitted_mean(&self, family: ExponentialFamily) -> DenseTensor {
        self.linear_predictor.map(|t| family.mean(t))
    }
}

fn with_modes(mats: &[DenseMatrix]) -> Vec<(&DenseMatrix, usize)> {
    mats.iter().zip(0..).collect()
}

fn check_state(problem: &SupervisedProblem, core: &DenseTensor, factors: &[DenseMatrix]) -> Result<()> {
    let k = problem.order();
    if core.order() != k || factors.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "state has core order {} and {} factors, problem order is {k}",
            core.order(),
            factors.len()
        )));
    }
    for (mode, f) in factors.iter().enumerate() {
        if f.nrows() != problem.feature_dims()[mode] || f.ncols() != core.dims()[mode] {
            return Err(Error::ShapeMismatch(format!(
                "factor {} is {}x{}, expected {}x{}",
                mode + 1,
                f.nrows(),
                f.ncols(),
                problem.feature_dims()[mode],
                core.dims()[mode]
            )));
        }
    }
    Ok(())
}

/// `Theta = C x {X_1 M_1, ..., X_K M_K}`.
pub fn linear_predictor(problem: &SupervisedProblem, core: &DenseTensor, factors: &[DenseMatrix]) -> Result<DenseTensor> {
    check_state(problem, core, factors)?;
    let reduced: Vec<DenseMatrix> = factors
        .iter()
        .enumerate()
        .map(|(k, m)| problem.apply_feature(k, m))
        .collect();
    core.multilinear(&with_modes(&reduced))
}

/// Quasi log-likelihood of the state `(core, factors)`.
pub fn objective(problem: &SupervisedProblem, core: &DenseTensor, factors: &[DenseMatrix]) -> Result<f64> {
    let theta = linear_predictor(problem, core, factors)?;
    Ok(problem.family().loglik_sum(problem.y().values(), theta.values()))
}

fn normalized_response(problem: &SupervisedProblem) -> DenseTensor {
    let y = problem.y();
    match problem.family() {
        ExponentialFamily::Gaussian => y.clone(),
        ExponentialFamily::Bernoulli => y.map(|v| 2.0 * v - 1.0),
        ExponentialFamily::Poisson => y.map(|v| (v + 0.5).ln()),
    }
}

/// QR-adjusted spectral initialization.
pub fn spectral_init(problem: &SupervisedProblem, rank: &RankVector) -> Result<(DenseTensor, Vec<DenseMatrix>)> {
    rank.check_against(problem.feature_dims())?;
    let ybar = normalized_response(problem);
    let qts: Vec<(DenseMatrix, usize)> = problem
        .qr
        .iter()
        .enumerate()
        .filter_map(|(k, qr)| qr.as_ref().map(|f| (f.q.transpose(), k)))
        .collect();
    let pairs: Vec<(&DenseMatrix, usize)> = qts.iter().map(|(m, k)| (m, *k)).collect();
    let bbar = ybar.multilinear(&pairs)?;
    let (mut core, basis) = hosvd(&bbar, rank.as_slice())?;
    let mut factors = Vec::with_capacity(basis.len());
    for (k, u) in basis.into_iter().enumerate() {
        match &problem.qr[k] {
            None => factors.push(u),
            Some(f) => {
                let scaled = f.r.solve_upper_triangular(&u).ok_or_else(|| {
                    Error::RankDeficient(format!("feature matrix of mode {} has singular R", k + 1))
                })?;
                let qr = thin_qr(&scaled)?;
                core = core.ttm(&qr.r, k)?;
                factors.push(qr.q);
            }
        }
    }
    Ok((core, factors))
}

/// Haar-random factors and a Uniform[-1, 1] core, deterministic in `seed`.
pub fn random_init(problem: &SupervisedProblem, rank: &RankVector, seed: u64) -> Result<(DenseTensor, Vec<DenseMatrix>)> {
    rank.check_against(problem.feature_dims())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors = rank
        .as_slice()
        .iter()
        .zip(problem.feature_dims())
        .map(|(&r, &p)| linalg::haar_orthonormal(p, r, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let core = DenseTensor::from_fn(rank.as_slice(), |_| rng.random_range(-1.0..=1.0))?;
    Ok((core, factors))
}

/// Factor-block design for one mode, applied without materialization.
///
/// With `G = unfold_mode(C x_{j != mode} X_j M_j)`, the mode unfolding of
/// `Theta` is `X M G`, so the design is `G^T (kron) X` acting on
/// `vec(M)`. Rows follow the column-major order of the mode unfolding.
pub struct ModeDesign<'a> {
    x: Option<&'a DenseMatrix>,
    g: DenseMatrix,
    d: usize,
    p: usize,
    r: usize,
}

impl<'a> ModeDesign<'a> {
    pub fn new(problem: &'a SupervisedProblem, core: &DenseTensor, factors: &[DenseMatrix], mode: usize) -> Result<Self> {
        check_state(problem, core, factors)?;
        let mut partial = core.clone();
        for (k, m) in factors.iter().enumerate() {
            if k != mode {
                partial = partial.ttm(&problem.apply_feature(k, m), k)?;
            }
        }
        let g = partial.unfold(mode)?;
        let x = match &problem.features()[mode] {
            Feature::Identity => None,
            Feature::Matrix(x) => Some(x),
        };
        Ok(Self {
            x,
            g,
            d: problem.dims()[mode],
            p: problem.feature_dims()[mode],
            r: core.dims()[mode],
        })
    }

    fn times_x(&self, m: DenseMatrix) -> DenseMatrix {
        match self.x {
            Some(x) => x * m,
            None => m,
        }
    }
}

impl LinearDesign for ModeDesign<'_> {
    fn nrows(&self) -> usize {
        self.d * self.g.ncols()
    }

    fn ncols(&self) -> usize {
        self.p * self.r
    }

    fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        let m = DenseMatrix::from_column_slice(self.p, self.r, beta);
        let eta = self.times_x(m) * &self.g;
        eta.as_slice().to_vec()
    }

    fn tr_mul_vec(&self, resid: &[f64]) -> Vec<f64> {
        let rm = DMatrixView::from_slice(resid, self.d, self.g.ncols());
        let rg = rm * self.g.transpose();
        let out = match self.x {
            Some(x) => x.tr_mul(&rg),
            None => rg,
        };
        out.as_slice().to_vec()
    }

    fn weighted_gram(&self, w: &[f64]) -> DenseMatrix {
        let (d, p, r) = (self.d, self.p, self.r);
        let n = self.g.ncols();
        // omega[i, s + r t] = sum_j w[i, j] g[s, j] g[t, j]
        let mut pairs = DenseMatrix::zeros(n, r * r);
        for t in 0..r {
            for s in 0..r {
                let col = s + r * t;
                for j in 0..n {
                    pairs[(j, col)] = self.g[(s, j)] * self.g[(t, j)];
                }
            }
        }
        let omega = DMatrixView::from_slice(w, d, n) * pairs;
        let mut h = DenseMatrix::zeros(p * r, p * r);
        for t in 0..r {
            for s in 0..=t {
                let weights = omega.column(s + r * t);
                let block = match self.x {
                    Some(x) => {
                        let mut scaled = x.clone();
                        for (mut row, &wi) in scaled.row_iter_mut().zip(weights.iter()) {
                            row *= wi;
                        }
                        x.tr_mul(&scaled)
                    }
                    None => DenseMatrix::from_diagonal(&weights.clone_owned()),
                };
                h.view_mut((p * s, p * t), (p, p)).copy_from(&block);
                if s != t {
                    h.view_mut((p * t, p * s), (p, p)).copy_from(&block.transpose());
                }
            }
        }
        h
    }
}

/// Core-block design `kron_k (X_k M_k)` acting on `vec(C)`, rows in vec order of `Theta`.
pub struct CoreDesign {
    reduced: Vec<DenseMatrix>,
    rank: Vec<usize>,
    dims: Vec<usize>,
}

impl CoreDesign {
    pub fn new(problem: &SupervisedProblem, core: &DenseTensor, factors: &[DenseMatrix]) -> Result<Self> {
        check_state(problem, core, factors)?;
        Ok(Self {
            reduced: factors
                .iter()
                .enumerate()
                .map(|(k, m)| problem.apply_feature(k, m))
                .collect(),
            rank: core.dims().to_vec(),
            dims: problem.dims().to_vec(),
        })
    }
}

impl LinearDesign for CoreDesign {
    fn nrows(&self) -> usize {
        self.dims.iter().product()
    }

    fn ncols(&self) -> usize {
        self.rank.iter().product()
    }

    fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        let c = DenseTensor::new(self.rank.clone(), beta.to_vec()).expect("core shape");
        c.multilinear(&with_modes(&self.reduced))
            .expect("conformable core design")
            .into_values()
    }

    fn tr_mul_vec(&self, resid: &[f64]) -> Vec<f64> {
        let r = DenseTensor::new(self.dims.clone(), resid.to_vec()).expect("residual shape");
        let transposed: Vec<DenseMatrix> = self.reduced.iter().map(|a| a.transpose()).collect();
        r.multilinear(&with_modes(&transposed))
            .expect("conformable core design")
            .into_values()
    }

    fn weighted_gram(&self, w: &[f64]) -> DenseMatrix {
        // contract W against row-wise products P_k[i, a + r b] = A_k[i, a] A_k[i, b]
        let prods: Vec<DenseMatrix> = self
            .reduced
            .iter()
            .map(|a| {
                let r = a.ncols();
                DenseMatrix::from_fn(r * r, a.nrows(), |ab, i| a[(i, ab % r)] * a[(i, ab / r)])
            })
            .collect();
        let wt = DenseTensor::new(self.dims.clone(), w.to_vec()).expect("weight shape");
        let t = wt.multilinear(&with_modes(&prods)).expect("conformable core design");
        let total = self.ncols();
        let k = self.rank.len();
        let mut strides = vec![1usize; k];
        for m in 1..k {
            strides[m] = strides[m - 1] * self.rank[m - 1] * self.rank[m - 1];
        }
        let digits = |mut lin: usize| -> Vec<usize> {
            self.rank
                .iter()
                .map(|&r| {
                    let v = lin % r;
                    lin /= r;
                    v
                })
                .collect()
        };
        let all: Vec<Vec<usize>> = (0..total).map(digits).collect();
        let tv = t.values();
        DenseMatrix::from_fn(total, total, |i, j| {
            let idx: usize = (0..k)
                .map(|m| (all[i][m] + self.rank[m] * all[j][m]) * strides[m])
                .sum();
            tv[idx]
        })
    }
}

/// Dense `(prod d_j) x (p_mode r_mode)` design with `vec(Theta) = D vec(M_mode)`,
/// rows in vec order of `Theta`.
pub fn block_design(problem: &SupervisedProblem, core: &DenseTensor, factors: &[DenseMatrix], mode: usize) -> Result<DenseMatrix> {
    if mode >= problem.order() {
        return Err(Error::ModeOutOfRange {
            mode,
            order: problem.order(),
        });
    }
    let md = ModeDesign::new(problem, core, factors, mode)?;
    let (d, p, r) = (md.d, md.p, md.r);
    let n = md.g.ncols();
    let x = match md.x {
        Some(x) => x.clone(),
        None => DenseMatrix::identity(d, d),
    };
    let mut out = DenseMatrix::zeros(d * n, p * r);
    for s in 0..r {
        for a in 0..p {
            // Theta_(mode) = X e_a e_s^T G
            let unf = x.column(a) * md.g.row(s);
            let theta = DenseTensor::fold(&unf, mode, problem.dims())?;
            out.set_column(a + p * s, &DVector::from_column_slice(theta.values()));
        }
    }
    Ok(out)
}

/// How a factor-block GLM is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignPath {
    /// Kronecker-structured operator ([`ModeDesign`]).
    Structured,
    /// Materialized [`block_design`] passed to [`solve_glm`].
    Dense,
}

/// Solves the GLM for `vec(M_mode)` with every other block fixed, warm
/// started at the current factor. Returns the raw (not re-orthonormalized)
/// solution.
pub fn mode_update(
    problem: &SupervisedProblem,
    core: &DenseTensor,
    factors: &[DenseMatrix],
    mode: usize,
    glm: &GlmOptions,
    path: DesignPath,
) -> Result<GlmResult> {
    let warm = factors
        .get(mode)
        .ok_or(Error::ModeOutOfRange {
            mode,
            order: problem.order(),
        })?
        .as_slice()
        .to_vec();
    match path {
        DesignPath::Structured => {
            let design = ModeDesign::new(problem, core, factors, mode)?;
            let y = problem.y().unfold(mode)?;
            solve_glm_with(problem.family(), y.as_slice(), &design, Some(&warm), glm)
        }
        DesignPath::Dense => {
            let design = block_design(problem, core, factors, mode)?;
            solve_glm(problem.family(), problem.y().values(), &design, Some(&warm), glm)
        }
    }
}

/// `|next - prev| / max(|prev|, 1)`.
pub fn relative_change(prev: f64, next: f64) -> f64 {
    (next - prev).abs() / prev.abs().max(1.0)
}

/// Runs the alternating updates from a given starting state.
pub fn fit_from(
    problem: &SupervisedProblem,
    core: DenseTensor,
    factors: Vec<DenseMatrix>,
    config: &FitConfig,
    init_used: InitStrategy,
) -> Result<StdFit> {
    config.validate()?;
    check_state(problem, &core, &factors)?;
    let k_modes = problem.order();
    let family = problem.family();
    let y_unfolded = (0..k_modes)
        .map(|k| problem.y().unfold(k))
        .collect::<Result<Vec<_>>>()?;

    let mut core = core;
    let mut factors = factors;
    // start inside the predictor bound
    if let Some(alpha) = config.glm.predictor_bound {
        let peak = linear_predictor(problem, &core, &factors)?.max_norm();
        if peak > alpha {
            core = core.scale(alpha / peak);
        }
    }
    let mut trajectory = vec![objective(problem, &core, &factors)?];
    let mut converged = false;
    let mut aborted = false;
    let mut n_outer = 0;

    'outer: while n_outer < config.max_outer_iters {
        n_outer += 1;
        for mode in 0..k_modes {
            let design = ModeDesign::new(problem, &core, &factors, mode)?;
            let warm = factors[mode].as_slice().to_vec();
            let res = solve_glm_with(family, y_unfolded[mode].as_slice(), &design, Some(&warm), &config.glm)?;
            if res.failed {
                aborted = true;
                n_outer -= 1;
                break 'outer;
            }
            let raw = DenseMatrix::from_column_slice(factors[mode].nrows(), factors[mode].ncols(), &res.coefficients);
            let QrResult { q, r } = qr_unchecked(&raw);
            factors[mode] = q;
            core = core.ttm(&r, mode)?;
        }
        let design = CoreDesign::new(problem, &core, &factors)?;
        let res = solve_glm_with(family, problem.y().values(), &design, Some(core.values()), &config.glm)?;
        if res.failed {
            aborted = true;
            n_outer -= 1;
            break;
        }
        core = DenseTensor::new(core.dims().to_vec(), res.coefficients)?;
        let prev = *trajectory.last().unwrap();
        let next = res.final_objective;
        trajectory.push(next);
        if relative_change(prev, next) < config.outer_tol {
            converged = true;
            break;
        }
    }

    let coefficient = core.multilinear(&with_modes(&factors))?;
    let linear_predictor = linear_predictor(problem, &core, &factors)?;
    Ok(StdFit {
        core,
        factors,
        coefficient,
        linear_predictor,
        trajectory,
        converged: converged && !aborted,
        n_outer_iters: n_outer,
        init_used,
        aborted,
    })
}

/// Fits the model with the configured rank and initialization.
pub fn fit(problem: &SupervisedProblem, config: &FitConfig) -> Result<StdFit> {
    config.validate()?;
    config.rank.check_against(problem.feature_dims())?;
    let run = |init: InitStrategy| -> Result<StdFit> {
        let (core, factors) = match init {
            InitStrategy::Random => random_init(problem, &config.rank, config.seed)?,
            _ => spectral_init(problem, &config.rank)?,
        };
        fit_from(problem, core, factors, config, init)
    };
    match config.init {
        InitStrategy::Both => {
            let warm = run(InitStrategy::Spectral)?;
            let cold = run(InitStrategy::Random)?;
            // ties go to the spectral start
            Ok(if cold.final_objective() > warm.final_objective() { cold } else { warm })
        }
        init => run(init),
    }
}
