//! Text file formats and result directories.
//!
//! Tensors use the `tns 1` format: a header line, the order `K`, the `K`
//! dimensions, then every entry in storage order (first index fastest), one
//! per line. Matrices are headerless CSV. Values are written with 17
//! significant digits so every `f64` survives a round trip.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decompose::{Feature, FitConfig, InitStrategy, RankVector, StdFit, SupervisedProblem};
use crate::error::{Error, Result};
use crate::family::ExponentialFamily;
use crate::linalg::{orthonormality_error, ORTHONORMAL_TOL};
use crate::simulate::{SimInstance, SimSpec};
use crate::tensor::{DenseMatrix, DenseTensor};

const TENSOR_HEADER: &str = "tns 1";

fn number(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_number(tok: &str, what: &str) -> Result<f64> {
    let v: f64 = tok.trim().parse().map_err(|_| Error::Parse(format!("{what}: cannot parse {tok:?} as a number")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("{what}: non-finite value {tok:?}")));
    }
    Ok(v)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn format_tensor(t: &DenseTensor) -> String {
    let mut s = String::with_capacity(24 * t.len() + 32);
    let dims: Vec<String> = t.dims().iter().map(|d| d.to_string()).collect();
    let _ = writeln!(s, "{TENSOR_HEADER}\n{}\n{}", t.order(), dims.join(" "));
    for &v in t.values() {
        s.push_str(&number(v));
        s.push('\n');
    }
    s
}

pub fn parse_tensor(text: &str) -> Result<DenseTensor> {
    let mut lines = text.lines();
    let header = lines.next().map(str::trim);
    if header != Some(TENSOR_HEADER) {
        return Err(Error::Parse(format!("expected header {TENSOR_HEADER:?}, found {header:?}")));
    }
    let order: usize = lines
        .next()
        .and_then(|l| l.trim().parse().ok())
        .ok_or_else(|| Error::Parse("missing or invalid tensor order".into()))?;
    let dims: Vec<usize> = lines
        .next()
        .ok_or_else(|| Error::Parse("missing dimension line".into()))?
        .split_whitespace()
        .map(|tok| tok.parse().map_err(|_| Error::Parse(format!("invalid dimension {tok:?}"))))
        .collect::<Result<_>>()?;
    if dims.len() != order {
        return Err(Error::Parse(format!("order {order} but {} dimensions", dims.len())));
    }
    let values: Vec<f64> = lines
        .flat_map(str::split_whitespace)
        .enumerate()
        .map(|(i, tok)| parse_number(tok, &format!("tensor entry {i}")))
        .collect::<Result<_>>()?;
    let expected: usize = dims.iter().product();
    if values.len() != expected {
        return Err(Error::Parse(format!("expected {expected} entries, found {}", values.len())));
    }
    DenseTensor::new(dims, values)
}

pub fn write_tensor(path: &Path, t: &DenseTensor) -> Result<()> {
    write_text(path, &format_tensor(t))
}

pub fn read_tensor(path: &Path) -> Result<DenseTensor> {
    parse_tensor(&read_text(path)?).map_err(|e| in_file(path, e))
}

pub fn format_matrix(m: &DenseMatrix) -> String {
    let mut s = String::with_capacity(24 * m.len() + m.nrows());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| number(m[(i, j)])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn parse_matrix(text: &str) -> Result<DenseMatrix> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split(',')
                .enumerate()
                .map(|(j, tok)| parse_number(tok, &format!("row {}, column {}", i + 1, j + 1)))
                .collect()
        })
        .collect::<Result<_>>()?;
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(Error::Parse("empty matrix".into()));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::Parse(format!("row {} has {} fields, expected {ncols}", i + 1, rows[i].len())));
    }
    Ok(DenseMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    write_text(path, &format_matrix(m))
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    parse_matrix(&read_text(path)?).map_err(|e| in_file(path, e))
}

fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Where a mode's side information comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureSource {
    Identity,
    File(PathBuf),
}

/// Loads a response tensor and its features into a validated problem.
pub fn load_problem(tensor: &Path, features: &[FeatureSource], family: ExponentialFamily) -> Result<SupervisedProblem> {
    let y = read_tensor(tensor)?;
    let features = features
        .iter()
        .map(|f| match f {
            FeatureSource::Identity => Ok(Feature::Identity),
            FeatureSource::File(p) => Ok(Feature::Matrix(read_matrix(p)?)),
        })
        .collect::<Result<Vec<_>>>()?;
    SupervisedProblem::new(y, features, family)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BundleKind {
    Fit,
    Truth,
}

/// Contents of `meta.json` in a fit or truth directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub kind: BundleKind,
    pub family: ExponentialFamily,
    pub dims: Vec<usize>,
    pub feature_dims: Vec<usize>,
    /// 1-based modes whose features are the identity.
    pub identity_modes: Vec<usize>,
    pub rank: RankVector,
    pub final_objective: f64,
    pub converged: bool,
    pub aborted: bool,
    pub n_outer_iters: usize,
    pub init_requested: Option<InitStrategy>,
    pub init_used: Option<InitStrategy>,
    pub seed: u64,
    pub config: Option<FitConfig>,
    pub effect_size: Option<f64>,
}

/// A fit or truth directory loaded back into memory.
#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub meta: BundleMeta,
    pub core: DenseTensor,
    pub factors: Vec<DenseMatrix>,
    pub coefficient: DenseTensor,
    pub linear_predictor: DenseTensor,
    pub mean: DenseTensor,
    /// `(iteration, objective)`; iteration 0 is the initialization.
    pub trajectory: Vec<(usize, f64)>,
}

fn identity_modes(problem: &SupervisedProblem) -> Vec<usize> {
    problem
        .features()
        .iter()
        .enumerate()
        .filter(|(_, f)| matches!(f, Feature::Identity))
        .map(|(k, _)| k + 1)
        .collect()
}

fn factor_path(dir: &Path, mode: usize) -> PathBuf {
    dir.join(format!("factor_{}.csv", mode + 1))
}

fn format_trajectory(objectives: &[f64]) -> String {
    let mut s = String::from("iteration,objective\n");
    for (i, v) in objectives.iter().enumerate() {
        let _ = writeln!(s, "{i},{}", number(*v));
    }
    s
}

fn parse_trajectory(text: &str) -> Result<Vec<(usize, f64)>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("iteration,objective") {
        return Err(Error::Parse("trajectory.csv: missing header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (i, v) = l.split_once(',').ok_or_else(|| Error::Parse(format!("trajectory.csv: bad line {l:?}")))?;
            let i = i.trim().parse().map_err(|_| Error::Parse(format!("trajectory.csv: bad iteration {i:?}")))?;
            Ok((i, parse_number(v, "trajectory.csv")?))
        })
        .collect()
}

struct BundleArrays<'a> {
    core: &'a DenseTensor,
    factors: &'a [DenseMatrix],
    coefficient: &'a DenseTensor,
    linear_predictor: &'a DenseTensor,
    mean: &'a DenseTensor,
    trajectory: &'a [f64],
}

fn write_bundle(dir: &Path, meta: &BundleMeta, arrays: BundleArrays<'_>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    write_tensor(&dir.join("core.tns"), arrays.core)?;
    for (k, f) in arrays.factors.iter().enumerate() {
        write_matrix(&factor_path(dir, k), f)?;
    }
    write_tensor(&dir.join("coefficient.tns"), arrays.coefficient)?;
    write_tensor(&dir.join("linear_predictor.tns"), arrays.linear_predictor)?;
    write_tensor(&dir.join("mean.tns"), arrays.mean)?;
    write_text(&dir.join("trajectory.csv"), &format_trajectory(arrays.trajectory))?;
    write_json(&dir.join("meta.json"), meta)
}

/// Writes a fit to `dir`. The requested initialization comes from `config`
/// and may be `Both`; the fit records the one that won.
pub fn write_fit_bundle(
    dir: &Path,
    problem: &SupervisedProblem,
    fit: &StdFit,
    config: &FitConfig,
) -> Result<BundleMeta> {
    let meta = BundleMeta {
        kind: BundleKind::Fit,
        family: problem.family(),
        dims: problem.dims().to_vec(),
        feature_dims: problem.feature_dims().to_vec(),
        identity_modes: identity_modes(problem),
        rank: config.rank.clone(),
        final_objective: fit.final_objective(),
        converged: fit.converged,
        aborted: fit.aborted,
        n_outer_iters: fit.n_outer_iters,
        init_requested: Some(config.init),
        init_used: Some(fit.init_used),
        seed: config.seed,
        config: Some(config.clone()),
        effect_size: None,
    };
    let mean = fit.fitted_mean(problem.family());
    write_bundle(
        dir,
        &meta,
        BundleArrays {
            core: &fit.core,
            factors: &fit.factors,
            coefficient: &fit.coefficient,
            linear_predictor: &fit.linear_predictor,
            mean: &mean,
            trajectory: &fit.trajectory,
        },
    )?;
    Ok(meta)
}

/// Writes the ground truth of a simulated instance to `dir`, including the
/// unit max-norm predictor as `theta.tns`.
pub fn write_truth_bundle(dir: &Path, inst: &SimInstance) -> Result<BundleMeta> {
    let truth_objective = inst.truth_objective()?;
    let meta = BundleMeta {
        kind: BundleKind::Truth,
        family: inst.spec.family,
        dims: inst.spec.dims.clone(),
        feature_dims: inst.spec.resolved_feature_dims(),
        identity_modes: identity_modes(&inst.problem),
        rank: inst.spec.rank.clone(),
        final_objective: truth_objective,
        converged: true,
        aborted: false,
        n_outer_iters: 0,
        init_requested: None,
        init_used: None,
        seed: inst.spec.seed,
        config: None,
        effect_size: Some(inst.truth.effect_size),
    };
    write_bundle(
        dir,
        &meta,
        BundleArrays {
            core: &inst.truth.core,
            factors: &inst.truth.factors,
            coefficient: &inst.truth.coefficient,
            linear_predictor: &inst.truth.linear_predictor(),
            mean: &inst.truth.mean,
            trajectory: &[truth_objective],
        },
    )?;
    write_tensor(&dir.join("theta.tns"), &inst.truth.theta)?;
    Ok(meta)
}

/// Loads a fit or truth directory and checks that its parts agree.
pub fn read_bundle(dir: &Path) -> Result<ResultBundle> {
    let meta: BundleMeta = read_json(&dir.join("meta.json"))?;
    let k = meta.dims.len();
    let core = read_tensor(&dir.join("core.tns"))?;
    let factors = (0..k).map(|m| read_matrix(&factor_path(dir, m))).collect::<Result<Vec<_>>>()?;
    let coefficient = read_tensor(&dir.join("coefficient.tns"))?;
    let linear_predictor = read_tensor(&dir.join("linear_predictor.tns"))?;
    let mean = read_tensor(&dir.join("mean.tns"))?;
    let trajectory = parse_trajectory(&read_text(&dir.join("trajectory.csv"))?)?;

    if core.dims() != meta.rank.as_slice() {
        return Err(Error::ShapeMismatch(format!(
            "{}: core dims {:?} disagree with rank {}",
            dir.display(),
            core.dims(),
            meta.rank
        )));
    }
    for (m, f) in factors.iter().enumerate() {
        if (f.nrows(), f.ncols()) != (meta.feature_dims[m], meta.rank.as_slice()[m]) {
            return Err(Error::ShapeMismatch(format!(
                "{}: factor {} is {}x{}",
                dir.display(),
                m + 1,
                f.nrows(),
                f.ncols()
            )));
        }
        let err = orthonormality_error(f);
        if err > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal(err));
        }
    }
    if coefficient.dims() != meta.feature_dims.as_slice()
        || linear_predictor.dims() != meta.dims.as_slice()
        || mean.dims() != meta.dims.as_slice()
    {
        return Err(Error::ShapeMismatch(format!("{}: array shapes disagree with meta.json", dir.display())));
    }
    Ok(ResultBundle { meta, core, factors, coefficient, linear_predictor, mean, trajectory })
}

/// Top-level `meta.json` of a simulated data directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationMeta {
    pub family: ExponentialFamily,
    pub dims: Vec<usize>,
    /// `null` marks an identity mode.
    pub feature_dims: Vec<Option<usize>>,
    /// 1-based.
    pub identity_modes: Vec<usize>,
    pub rank: RankVector,
    pub effect_size: f64,
    pub seed: u64,
    pub noiseless: bool,
    pub truth_objective: f64,
}

impl SimulationMeta {
    pub fn spec(&self) -> SimSpec {
        SimSpec {
            dims: self.dims.clone(),
            feature_dims: self.feature_dims.clone(),
            rank: self.rank.clone(),
            family: self.family,
            effect_size: self.effect_size,
            seed: self.seed,
        }
    }
}

/// Writes `y.tns`, `x_k.csv` for non-identity modes, `truth/` and `meta.json`.
pub fn write_simulation(dir: &Path, inst: &SimInstance, noiseless: bool) -> Result<SimulationMeta> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    write_tensor(&dir.join("y.tns"), inst.problem.y())?;
    for (k, f) in inst.problem.features().iter().enumerate() {
        if let Feature::Matrix(x) = f {
            write_matrix(&dir.join(format!("x_{}.csv", k + 1)), x)?;
        }
    }
    let truth = write_truth_bundle(&dir.join("truth"), inst)?;
    let meta = SimulationMeta {
        family: inst.spec.family,
        dims: inst.spec.dims.clone(),
        feature_dims: inst.spec.feature_dims.clone(),
        identity_modes: truth.identity_modes,
        rank: inst.spec.rank.clone(),
        effect_size: inst.spec.effect_size,
        seed: inst.spec.seed,
        noiseless,
        truth_objective: truth.final_objective,
    };
    write_json(&dir.join("meta.json"), &meta)?;
    Ok(meta)
}

pub fn read_simulation_meta(dir: &Path) -> Result<SimulationMeta> {
    read_json(&dir.join("meta.json"))
}

/// Feature sources of a simulated data directory, in mode order.
pub fn simulation_features(dir: &Path, meta: &SimulationMeta) -> Vec<FeatureSource> {
    meta.feature_dims
        .iter()
        .enumerate()
        .map(|(k, p)| match p {
            None => FeatureSource::Identity,
            Some(_) => FeatureSource::File(dir.join(format!("x_{}.csv", k + 1))),
        })
        .collect()
}

/// Resolves a truth location: either a bundle directory or a simulation
/// directory containing `truth/`.
pub fn truth_dir(path: &Path) -> PathBuf {
    let nested = path.join("truth");
    if nested.join("meta.json").is_file() {
        nested
    } else {
        path.to_path_buf()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::fit;
    use crate::simulate::generate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn tensor_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = DenseTensor::from_fn(&[3, 2, 4], |_| rng.sample::<f64, _>(StandardNormal) * 1e3).unwrap();
        let text = format_tensor(&t);
        assert!(text.starts_with("tns 1\n3\n3 2 4\n"));
        let back = parse_tensor(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(format_tensor(&back), text);
    }

    #[test]
    fn tensor_parse_accepts_any_whitespace() {
        let t = parse_tensor("tns 1\n2\n2 2\n1 2\n3   4\n").unwrap();
        assert_eq!(t.values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn tensor_parse_errors() {
        assert!(matches!(parse_tensor("tns 2\n1\n1\n0\n"), Err(Error::Parse(_))));
        assert!(matches!(parse_tensor("tns 1\n2\n2 2\n1 2 3\n"), Err(Error::Parse(_))));
        assert!(matches!(parse_tensor("tns 1\n2\n2\n1 2\n"), Err(Error::Parse(_))));
        assert!(matches!(parse_tensor("tns 1\n1\n2\n1 nan\n"), Err(Error::Parse(_))));
        assert!(matches!(parse_tensor("tns 1\n1\n2\n1 x\n"), Err(Error::Parse(_))));
    }

    #[test]
    fn matrix_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = DenseMatrix::from_fn(5, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let text = format_matrix(&m);
        assert_eq!(text.lines().count(), 5);
        assert_eq!(parse_matrix(&text).unwrap(), m);
        assert!(matches!(parse_matrix("1,2\n3\n"), Err(Error::Parse(_))));
        assert!(matches!(parse_matrix(""), Err(Error::Parse(_))));
        assert!(matches!(parse_matrix("1,inf\n"), Err(Error::Parse(_))));
    }

    #[test]
    fn bundles_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = SimSpec::cubic(8, 4, 2, ExponentialFamily::Poisson, 2.0, 9).unwrap();
        spec.feature_dims[1] = None;
        let inst = generate(&spec).unwrap();
        let sim = write_simulation(dir.path(), &inst, false).unwrap();
        assert_eq!(sim.identity_modes, vec![2]);
        assert!(!dir.path().join("x_2.csv").exists());
        assert_eq!(read_simulation_meta(dir.path()).unwrap(), sim);

        let truth = read_bundle(&truth_dir(dir.path())).unwrap();
        assert_eq!(truth.meta.kind, BundleKind::Truth);
        assert_eq!(truth.coefficient, inst.truth.coefficient);
        assert_eq!(read_tensor(&dir.path().join("truth/theta.tns")).unwrap(), inst.truth.theta);

        let problem = load_problem(&dir.path().join("y.tns"), &simulation_features(dir.path(), &sim), spec.family).unwrap();
        assert_eq!(problem.y(), inst.problem.y());
        let config = FitConfig::new(spec.rank.clone()).with_seed(3);
        let f = fit(&problem, &config).unwrap();
        let out = dir.path().join("fit");
        let meta = write_fit_bundle(&out, &problem, &f, &config).unwrap();
        let back = read_bundle(&out).unwrap();
        assert_eq!(back.meta, meta);
        assert_eq!(back.meta.init_requested, Some(InitStrategy::Both));
        assert_eq!(back.core, f.core);
        assert_eq!(back.factors, f.factors);
        assert_eq!(back.trajectory.len(), f.trajectory.len());
        assert_eq!(back.trajectory.last().unwrap().1, f.final_objective());
    }

    #[test]
    fn missing_feature_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let y = DenseTensor::zeros(&[2, 2]).unwrap();
        write_tensor(&dir.path().join("y.tns"), &y).unwrap();
        let features = [FeatureSource::Identity, FeatureSource::File(dir.path().join("absent.csv"))];
        let err = load_problem(&dir.path().join("y.tns"), &features, ExponentialFamily::Gaussian).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}
