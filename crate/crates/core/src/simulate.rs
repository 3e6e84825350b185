//! Synthetic data from the low-rank model.
//!
//! The core has i.i.d. Uniform[-1, 1] entries, factors are Haar-random with
//! orthonormal columns, features are i.i.d. N(0, 1) (or identity), and the
//! linear predictor is rescaled to unit max norm before the effect size
//! multiplies it inside the mean. Each random object draws from its own
//! ChaCha stream so changing the shape of one leaves the others intact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::decompose::{self, Feature, RankVector, SupervisedProblem};
use crate::error::{Error, Result};
use crate::family::ExponentialFamily;
use crate::linalg::{haar_orthonormal, truncated_svd};
use crate::tensor::{DenseMatrix, DenseTensor};

const MAX_CORE_DRAWS: usize = 100;
const DEGENERACY_TOL: f64 = 1e-10;

const STREAM_CORE: u64 = 0;
const STREAM_FACTORS: u64 = 1;
const STREAM_FEATURES: u64 = 2;
const STREAM_NOISE: u64 = 3;

/// SplitMix64 finalizer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministically derives a child seed from a base seed and a path of
/// integers (replicate index, configuration index, rank entries, ...).
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p)))
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub dims: Vec<usize>,
    /// `None` marks an identity-feature mode.
    pub feature_dims: Vec<Option<usize>>,
    pub rank: RankVector,
    pub family: ExponentialFamily,
    pub effect_size: f64,
    pub seed: u64,
}

impl SimSpec {
    /// Balanced order-3 setting: `d_k = d`, `p_k = p`, `r_k = r`.
    pub fn cubic(d: usize, p: usize, r: usize, family: ExponentialFamily, effect_size: f64, seed: u64) -> Result<Self> {
        Ok(Self {
            dims: vec![d; 3],
            feature_dims: vec![Some(p); 3],
            rank: RankVector::new(vec![r; 3])?,
            family,
            effect_size,
            seed,
        })
    }

    /// `p_k` with identity modes resolved to `d_k`.
    pub fn resolved_feature_dims(&self) -> Vec<usize> {
        self.feature_dims
            .iter()
            .zip(&self.dims)
            .map(|(p, &d)| p.unwrap_or(d))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.dims.len();
        if k == 0 || self.dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidDims(format!("dims must be positive, got {:?}", self.dims)));
        }
        if self.feature_dims.len() != k {
            return Err(Error::InvalidConfig(format!(
                "{} feature dims for {k} modes",
                self.feature_dims.len()
            )));
        }
        for (m, (p, &d)) in self.feature_dims.iter().zip(&self.dims).enumerate() {
            if let Some(p) = *p {
                if p == 0 || p > d {
                    return Err(Error::InvalidConfig(format!(
                        "feature dimension p_{} = {p} must lie in [1, d_{} = {d}]",
                        m + 1,
                        m + 1
                    )));
                }
            }
        }
        if !(self.effect_size > 0.0) || !self.effect_size.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "effect size must be positive, got {}",
                self.effect_size
            )));
        }
        self.rank.check_against(&self.resolved_feature_dims())
    }
}

/// Ground truth of a simulated instance. `core` and `coefficient` are on
/// the natural-parameter scale (the effect size is folded in), so they are
/// directly comparable with a fitted model; `theta` is the unit max-norm
/// predictor before the effect size is applied.
#[derive(Debug, Clone)]
pub struct Truth {
    pub core: DenseTensor,
    pub factors: Vec<DenseMatrix>,
    pub coefficient: DenseTensor,
    pub theta: DenseTensor,
    /// `f(alpha * theta)`.
    pub mean: DenseTensor,
    pub effect_size: f64,
}

impl Truth {
    /// `alpha * theta`, the natural parameter of the sampled entries.
    pub fn linear_predictor(&self) -> DenseTensor {
        self.theta.scale(self.effect_size)
    }
}

#[derive(Debug, Clone)]
pub struct SimInstance {
    pub spec: SimSpec,
    pub problem: SupervisedProblem,
    pub truth: Truth,
}

impl SimInstance {
    /// Objective of the true parameters on the sampled response.
    pub fn truth_objective(&self) -> Result<f64> {
        decompose::objective(&self.problem, &self.truth.core, &self.truth.factors)
    }
}

struct Planted {
    features: Vec<Feature>,
    core_unit: DenseTensor,
    factors: Vec<DenseMatrix>,
    theta: DenseTensor,
    coefficient_unit: DenseTensor,
}

fn plant(spec: &SimSpec) -> Result<Planted> {
    spec.validate()?;
    let rank = spec.rank.as_slice();
    let p = spec.resolved_feature_dims();

    let mut feat_rng = stream(spec.seed, STREAM_FEATURES);
    let features: Vec<Feature> = spec
        .feature_dims
        .iter()
        .zip(&spec.dims)
        .map(|(pk, &d)| match pk {
            None => Feature::Identity,
            Some(pk) => Feature::Matrix(DenseMatrix::from_fn(d, *pk, |_, _| {
                feat_rng.sample::<f64, _>(StandardNormal)
            })),
        })
        .collect();

    let mut core_rng = stream(spec.seed, STREAM_CORE);
    let mut factor_rng = stream(spec.seed, STREAM_FACTORS);
    for _ in 0..MAX_CORE_DRAWS {
        let core = DenseTensor::from_fn(rank, |_| core_rng.random_range(-1.0..=1.0))?;
        let factors = rank
            .iter()
            .zip(&p)
            .map(|(&r, &pk)| haar_orthonormal(pk, r, &mut factor_rng))
            .collect::<Result<Vec<_>>>()?;
        let pairs: Vec<(&DenseMatrix, usize)> = factors.iter().zip(0..).collect();
        let coefficient = core.multilinear(&pairs)?;
        if !has_exact_rank(&coefficient, rank)? {
            continue;
        }
        let reduced: Vec<DenseMatrix> = factors
            .iter()
            .zip(&features)
            .map(|(m, f)| match f {
                Feature::Identity => m.clone(),
                Feature::Matrix(x) => x * m,
            })
            .collect();
        let pairs: Vec<(&DenseMatrix, usize)> = reduced.iter().zip(0..).collect();
        let raw = core.multilinear(&pairs)?;
        let peak = raw.max_norm();
        if peak == 0.0 {
            continue;
        }
        let s = 1.0 / peak;
        return Ok(Planted {
            features,
            core_unit: core.scale(s),
            factors,
            theta: raw.scale(s),
            coefficient_unit: coefficient.scale(s),
        });
    }
    Err(Error::Numerical(format!(
        "no core draw with exact multilinear rank {} after {MAX_CORE_DRAWS} attempts",
        spec.rank
    )))
}

fn has_exact_rank(t: &DenseTensor, rank: &[usize]) -> Result<bool> {
    for (k, &r) in rank.iter().enumerate() {
        let unf = t.unfold(k)?;
        let s = truncated_svd(&unf, r)?.s;
        if s[r - 1] <= DEGENERACY_TOL * s[0].max(1.0) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn assemble(spec: &SimSpec, planted: Planted, y: DenseTensor) -> Result<SimInstance> {
    let alpha = spec.effect_size;
    let family = spec.family;
    let mean = planted.theta.map(|t| family.mean(alpha * t));
    let problem = SupervisedProblem::new(y, planted.features, family)?;
    Ok(SimInstance {
        spec: spec.clone(),
        problem,
        truth: Truth {
            core: planted.core_unit.scale(alpha),
            factors: planted.factors,
            coefficient: planted.coefficient_unit.scale(alpha),
            theta: planted.theta,
            mean,
            effect_size: alpha,
        },
    })
}

/// Draws an instance; deterministic in `spec.seed`.
pub fn generate(spec: &SimSpec) -> Result<SimInstance> {
    let planted = plant(spec)?;
    let alpha = spec.effect_size;
    let mut noise = stream(spec.seed, STREAM_NOISE);
    let mut data = Vec::with_capacity(planted.theta.len());
    for &t in planted.theta.values() {
        let eta = alpha * t;
        let v = match spec.family {
            ExponentialFamily::Gaussian => eta + noise.sample::<f64, _>(StandardNormal),
            ExponentialFamily::Poisson => {
                let dist = Poisson::new(eta.exp())
                    .map_err(|e| Error::Numerical(format!("poisson rate {}: {e}", eta.exp())))?;
                dist.sample(&mut noise)
            }
            ExponentialFamily::Bernoulli => f64::from(noise.random::<f64>() < spec.family.mean(eta)),
        };
        data.push(v);
    }
    let y = DenseTensor::new(spec.dims.clone(), data)?;
    assemble(spec, planted, y)
}

/// Gaussian instance with `Y = alpha * theta` exactly.
pub fn generate_noiseless(spec: &SimSpec) -> Result<SimInstance> {
    if spec.family != ExponentialFamily::Gaussian {
        return Err(Error::InvalidConfig(format!(
            "noiseless generation needs the gaussian family, got {}",
            spec.family
        )));
    }
    let planted = plant(spec)?;
    let y = planted.theta.scale(spec.effect_size);
    assemble(spec, planted, y)
}
