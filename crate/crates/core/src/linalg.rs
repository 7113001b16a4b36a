//! Dense linear-algebra helpers shared by the chain and quantum modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(c)
}

/// Max-norm of `A − B`.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff_real(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `‖U†U − I‖_max`.
pub fn unitarity_residual(u: &CMat) -> f64 {
    let n = u.ncols();
    max_abs_diff(&(u.adjoint() * u), &CMat::identity(n, n))
}

pub fn vec_dist(a: &CVec, b: &CVec) -> f64 {
    (a - b).norm()
}

/// Eigenpairs of a real symmetric matrix, eigenvalues in descending order.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(m.nrows(), idx.len(), |r, k| eig.eigenvectors[(r, idx[k])]);
    (vals, vecs)
}

/// Symmetric `T^{-1/2}` and `T^{1/2}`. Fails (returning the offending
/// eigenvalue) when the spectrum dips below `floor`.
pub fn sym_sqrt_pair(t: &DMatrix<f64>, floor: f64) -> Result<(DMatrix<f64>, DMatrix<f64>), f64> {
    let eig = SymmetricEigen::new(t.clone());
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > floor) {
        return Err(min);
    }
    let q = &eig.eigenvectors;
    let inv = q * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt())) * q.transpose();
    let sqrt = q * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * q.transpose();
    Ok((inv, sqrt))
}

/// Eigen-decomposition of a normal matrix (unitary operators here).
///
/// The Hermitian part `(W + W†)/2` is diagonalized first; inside each
/// cluster of (numerically) equal eigenvalues the skew part
/// `(W − W†)/2i` separates conjugate pairs. Eigenvalues are Rayleigh
/// quotients of `W` on the resulting orthonormal eigenvectors.
pub fn normal_eigen(w: &CMat) -> (Vec<Complex64>, CMat) {
    let n = w.nrows();
    let wa = w.adjoint();
    let herm = (w + &wa).map(|z| z * 0.5);
    let skew = (w - &wa).map(|z| z * Complex64::new(0.0, -0.5));
    let eig = SymmetricEigen::new(herm);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let scale = eig.eigenvalues.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let tol = 1e-7 * scale;

    let mut values = Vec::with_capacity(n);
    let mut vectors = CMat::zeros(n, n);
    let mut col = 0;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && eig.eigenvalues[idx[end]] - eig.eigenvalues[idx[end - 1]] <= tol {
            end += 1;
        }
        let basis = CMat::from_fn(n, end - start, |r, k| eig.eigenvectors[(r, idx[start + k])]);
        let sub = basis.adjoint() * &skew * &basis;
        let sub = (&sub + sub.adjoint()).map(|z| z * 0.5);
        let sub_eig = SymmetricEigen::new(sub);
        for k in 0..(end - start) {
            let z = &basis * sub_eig.eigenvectors.column(k);
            let lambda = (z.adjoint() * w * &z)[(0, 0)];
            values.push(lambda);
            vectors.set_column(col, &z);
            col += 1;
        }
        start = end;
    }
    (values, vectors)
}

/// Greedy nearest pairing of two complex multisets after sorting by
/// argument. Returns the largest pair distance (∞ on length mismatch).
pub fn multiset_mismatch(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut a = a.to_vec();
    a.sort_by(|x, y| x.arg().total_cmp(&y.arg()));
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for x in &a {
        let mut best = f64::INFINITY;
        let mut best_j = usize::MAX;
        for (j, y) in b.iter().enumerate() {
            if !used[j] {
                let d = (x - y).norm();
                if d < best {
                    best = d;
                    best_j = j;
                }
            }
        }
        used[best_j] = true;
        worst = worst.max(best);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_eigen_of_rotation_and_swap() {
        let (ct, st) = (0.3f64.cos(), 0.3f64.sin());
        let r = DMatrix::from_row_slice(2, 2, &[ct, -st, st, ct]);
        let (vals, vecs) = normal_eigen(&to_complex(&r));
        let want = [Complex64::from_polar(1.0, 0.3), Complex64::from_polar(1.0, -0.3)];
        assert!(multiset_mismatch(&vals, &want) < 1e-12);
        let w = to_complex(&r);
        for k in 0..2 {
            let v = vecs.column(k).into_owned();
            assert!((&w * &v - &v * vals[k]).norm() < 1e-12);
        }
        // Permutation matrices are a classic failure case for QR iterations.
        let swap = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let (vals, _) = normal_eigen(&to_complex(&swap));
        let want: Vec<Complex64> = (0..3).map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / 3.0)).collect();
        assert!(multiset_mismatch(&vals, &want) < 1e-12);
    }

    #[test]
    fn sqrt_pair_inverts() {
        let t = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (inv, sq) = sym_sqrt_pair(&t, 1e-10).unwrap();
        assert!(max_abs_diff_real(&(&inv * &t * &inv), &DMatrix::identity(2, 2)) < 1e-12);
        assert!(max_abs_diff_real(&(&sq * &sq), &t) < 1e-12);
        assert!(sym_sqrt_pair(&DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]), 1e-10).is_err());
    }

    #[test]
    fn mismatch_detects_difference() {
        let a = [ONE, c(-1.0)];
        assert_eq!(multiset_mismatch(&a, &[c(-1.0), ONE]), 0.0);
        assert!(multiset_mismatch(&a, &[ONE, ONE]) > 1.9);
        assert!(multiset_mismatch(&a, &[ONE]).is_infinite());
    }
}
