//! Dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{PalError, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen(m: &DMatrix<f64>) -> Result<SortedEigen> {
    if m.nrows() != m.ncols() {
        return Err(PalError::DimensionMismatch {
            context: "sym_eigen",
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(PalError::NonFinite("eigendecomposition input"));
    }
    let n = m.nrows();
    let (eig, shift) = finite_eigen(m).ok_or(PalError::NonFinite("eigenvalues"))?;
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the solver's column order on exact ties.
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i] - shift));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        canonical_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    Ok(SortedEigen { values, vectors })
}

/// nalgebra's implicit QR can return NaN on exactly repeated eigenvalues,
/// such as block matrices of ones. A diagonal shift leaves the eigenvectors
/// unchanged and usually avoids it; the shift used is returned.
fn finite_eigen(m: &DMatrix<f64>) -> Option<(nalgebra::SymmetricEigen<f64, nalgebra::Dyn>, f64)> {
    let n = m.nrows();
    let scale = m.amax().max(1.0);
    [0.0, std::f64::consts::FRAC_1_PI, -0.6, std::f64::consts::SQRT_2]
        .into_iter()
        .find_map(|f| {
            let shift = f * scale;
            let eig = (m + DMatrix::identity(n, n) * shift).symmetric_eigen();
            let finite = eig.eigenvalues.iter().chain(eig.eigenvectors.iter()).all(|v| v.is_finite());
            finite.then_some((eig, shift))
        })
}

/// Flip `v` so its largest-magnitude entry is positive.
fn canonical_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() + 1e-12 {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(PalError::NonFinite(what));
    }
    let chol = m.clone().cholesky().ok_or(PalError::Singular(what))?;
    Ok(chol.inverse())
}

/// Solve `m x = b` for symmetric positive definite `m`.
pub fn spd_solve(m: &DMatrix<f64>, b: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if m.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(PalError::NonFinite(what));
    }
    let chol = m.clone().cholesky().ok_or(PalError::Singular(what))?;
    Ok(chol.solve(b))
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row `i` of `m` as an owned vector.
pub fn row(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_of_ones_with_repeated_sizes() {
        // Plain QR returns NaN on this one.
        let labels = [
            4, 4, 0, 0, 1, 0, 1, 1, 2, 4, 2, 1, 3, 3, 4, 4, 0, 3, 3, 0, 2, 0, 1, 1, 0, 2, 4, 4, 0, 2, 4, 0, 1, 4, 3, 4,
            2, 0, 2, 0, 2, 4, 1, 2, 0, 1, 0, 2, 3, 4, 2, 3, 1, 4, 3, 1, 1,
        ];
        let n = labels.len();
        let m = DMatrix::from_fn(n, n, |i, j| if labels[i] == labels[j] { 1.0 } else { 0.0 });
        let e = sym_eigen(&m).unwrap();
        let top: Vec<f64> = e.values.iter().take(6).copied().collect();
        for (v, want) in top.iter().zip([13.0, 13.0, 12.0, 11.0, 8.0, 0.0]) {
            assert!((v - want).abs() < 1e-9, "{top:?}");
        }
        let back = &e.vectors * DMatrix::from_diagonal(&e.values) * e.vectors.transpose();
        assert!((back - m).norm() < 1e-9);
    }

    #[test]
    fn eigen_sorted_and_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 5.0]);
        let e = sym_eigen(&m).unwrap();
        assert!((e.values[0] - 5.0).abs() < 1e-12);
        assert!((e.values[1] - 3.0).abs() < 1e-12);
        assert!((e.values[2] - 1.0).abs() < 1e-12);
        let back = &e.vectors * DMatrix::from_diagonal(&e.values) * e.vectors.transpose();
        assert!((back - m).norm() < 1e-12);
    }

    #[test]
    fn eigen_rejects_nan() {
        let m = DMatrix::from_element(2, 2, f64::NAN);
        assert!(matches!(sym_eigen(&m), Err(PalError::NonFinite(_))));
    }

    #[test]
    fn inverse_and_solve_agree() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let inv = spd_inverse(&m, "test").unwrap();
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let x = spd_solve(&m, &b, "test").unwrap();
        assert!((&inv * &b - x).norm() < 1e-12);
        let not_pd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(spd_inverse(&not_pd, "k"), Err(PalError::Singular("k")));
    }
}
