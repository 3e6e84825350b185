//! Dense linear algebra used by the decomposition: sign-fixed thin QR and
//! truncated SVD, truncated HOSVD, the sin-theta subspace distance and
//! Haar-distributed orthonormal sampling.

use nalgebra::{SymmetricEigen, QR, SVD};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, DenseTensor};

/// Relative threshold on the R diagonal below which a matrix is treated as
/// column-rank deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Tolerance used when validating orthonormal inputs.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct QrResult {
    pub q: DenseMatrix,
    pub r: DenseMatrix,
}

#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

/// Householder thin QR with a nonnegative R diagonal.
pub fn thin_qr(m: &DenseMatrix) -> Result<QrResult> {
    let (n, p) = m.shape();
    if n < p {
        return Err(Error::ShapeMismatch(format!(
            "thin QR needs rows >= cols, got {n}x{p}"
        )));
    }
    let QrResult { q, r } = qr_unchecked(m);
    let diag_max = (0..p).fold(0.0f64, |a, j| a.max(r[(j, j)]));
    let diag_min = (0..p).fold(f64::INFINITY, |a, j| a.min(r[(j, j)]));
    if p > 0 && (diag_max == 0.0 || diag_min <= RANK_TOL * diag_max) {
        return Err(Error::RankDeficient(format!(
            "{n}x{p} matrix, R diagonal range [{diag_min:.3e}, {diag_max:.3e}]"
        )));
    }
    Ok(QrResult { q, r })
}

/// Sign-fixed thin QR without the rank check. `q` is orthonormal even when
/// the input is rank deficient; `q * r` still reproduces the input.
pub fn qr_unchecked(m: &DenseMatrix) -> QrResult {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..r.nrows() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
            r.row_mut(j).neg_mut();
        }
    }
    QrResult { q, r }
}

/// Top-`rank` singular triplets, sorted descending. Each left singular
/// vector is signed so that its largest-magnitude entry is positive.
pub fn truncated_svd(m: &DenseMatrix, rank: usize) -> Result<SvdResult> {
    let (rows, cols) = m.shape();
    let full = rows.min(cols);
    if rank == 0 || rank > full {
        return Err(Error::InvalidRank(format!(
            "truncated SVD rank {rank} outside [1, {full}]"
        )));
    }
    let svd = SVD::new(m.clone(), true, true);
    let u_all = svd
        .u
        .ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let vt_all = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return V^T".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut u = DenseMatrix::zeros(rows, rank);
    let mut v = DenseMatrix::zeros(cols, rank);
    let mut s = Vec::with_capacity(rank);
    for (j, &src) in order.iter().take(rank).enumerate() {
        let col = u_all.column(src);
        let mut pivot = 0;
        for i in 1..rows {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        u.set_column(j, &(col * sign));
        v.set_column(j, &(vt_all.row(src).transpose() * sign));
        s.push(svd.singular_values[src]);
    }
    Ok(SvdResult { u, s, v })
}

/// Rank `r_k <= prod_{j != k} r_j` for every mode.
pub fn rank_admissible(rank: &[usize]) -> bool {
    let total: usize = rank.iter().product();
    rank.iter()
        .all(|&r| r >= 1 && r * r <= total)
}

/// Truncated higher-order SVD. Returns the core and the per-mode factors
/// (top left singular vectors of each unfolding).
pub fn hosvd(t: &DenseTensor, rank: &[usize]) -> Result<(DenseTensor, Vec<DenseMatrix>)> {
    if rank.len() != t.order() {
        return Err(Error::InvalidRank(format!(
            "rank has {} entries for an order-{} tensor",
            rank.len(),
            t.order()
        )));
    }
    for (k, (&r, &d)) in rank.iter().zip(t.dims()).enumerate() {
        if r == 0 || r > d {
            return Err(Error::InvalidRank(format!(
                "rank {r} on mode {k} outside [1, {d}]"
            )));
        }
    }
    if !rank_admissible(rank) {
        return Err(Error::InvalidRank(format!(
            "rank {rank:?} is not a valid multilinear rank"
        )));
    }
    let mut factors = Vec::with_capacity(rank.len());
    for (k, &r) in rank.iter().enumerate() {
        factors.push(truncated_svd(&t.unfold(k)?, r)?.u);
    }
    let transposed: Vec<DenseMatrix> = factors.iter().map(|f| f.transpose()).collect();
    let pairs: Vec<(&DenseMatrix, usize)> = transposed.iter().zip(0..).collect();
    let core = t.multilinear(&pairs)?;
    Ok((core, factors))
}

/// Largest deviation of `m^T m` from the identity.
pub fn orthonormality_error(m: &DenseMatrix) -> f64 {
    let g = m.transpose() * m;
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Sine of the largest principal angle between the column spans of `a` and
/// `b`, computed as the spectral norm of `a a^T - b b^T`. That matrix lives
/// in the span of `[a b] = Q R`, so its eigenvalues are those of
/// `R_a R_a^T - R_b R_b^T`, which is formed without cancellation and stays
/// accurate for nearly-coincident spans.
pub fn sin_theta(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "sin_theta on {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    for m in [a, b] {
        let err = orthonormality_error(m);
        if err > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal(err));
        }
    }
    let (n, r) = a.shape();
    let stacked = DenseMatrix::from_fn(n, 2 * r, |i, j| if j < r { a[(i, j)] } else { b[(i, j - r)] });
    let tri = QR::new(stacked).r();
    let (ra, rb) = (tri.columns(0, r), tri.columns(r, r));
    let mut diff = ra * ra.transpose() - rb * rb.transpose();
    diff.fill_lower_triangle_with_upper_triangle();
    let sin = SymmetricEigen::new(diff).eigenvalues.amax();
    Ok(sin.clamp(0.0, 1.0))
}

/// Haar-distributed `n x r` matrix with orthonormal columns: thin QR of a
/// standard Gaussian matrix with the nonnegative-diagonal sign convention.
pub fn haar_orthonormal<R: Rng + ?Sized>(n: usize, r: usize, rng: &mut R) -> Result<DenseMatrix> {
    if r > n {
        return Err(Error::ShapeMismatch(format!(
            "cannot draw {r} orthonormal columns in dimension {n}"
        )));
    }
    loop {
        let g = DenseMatrix::from_fn(n, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        // rank deficiency has probability zero; redraw if it happens anyway
        if let Ok(qr) = thin_qr(&g) {
            return Ok(qr.q);
        }
    }
}
