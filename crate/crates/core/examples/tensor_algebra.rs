//! Unfolding, mode products and a truncated HOSVD on a small tensor.

use suptucker::linalg::hosvd;
use suptucker::tensor::{DenseMatrix, DenseTensor};

fn main() -> suptucker::Result<()> {
    // entries 1..=8 in storage order (first index fastest)
    let t = DenseTensor::new(vec![2, 2, 2], (1..=8).map(f64::from).collect())?;
    println!("mode-1 unfolding:\n{}", t.unfold(0)?);
    println!("mode-2 unfolding:\n{}", t.unfold(1)?);

    let a = DenseMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    let grown = t.ttm(&a, 2)?;
    println!("after a 3x2 product on mode 3: dims {:?}", grown.dims());

    let (core, factors) = hosvd(&grown, &[2, 2, 2])?;
    let pairs: Vec<(&DenseMatrix, usize)> = factors.iter().zip(0..).collect();
    let back = core.multilinear(&pairs)?;
    let err = back.sub(&grown)?.fro_norm() / grown.fro_norm();
    println!("rank-(2,2,2) HOSVD reconstruction error: {err:.2e}");
    println!("frobenius norm {:.6}, max norm {}", grown.fro_norm(), grown.max_norm());
    Ok(())
}
