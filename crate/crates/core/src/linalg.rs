//! Small complex linear-algebra helpers shared by the channel, CSI and
//! precoding modules.

use nalgebra::{DMatrix, DVector};

pub use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

#[inline]
pub fn cis(phase: f64) -> C64 {
    C64::new(phase.cos(), phase.sin())
}

/// `aᴴ b`.
#[inline]
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[inline]
pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Largest entry modulus.
pub fn max_abs<'a>(values: impl IntoIterator<Item = &'a C64>) -> f64 {
    values.into_iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Unit-modulus phase of `z`, or 1 when `z` vanishes.
#[inline]
pub fn unit_phase(z: C64) -> C64 {
    let n = z.norm();
    if n > 0.0 {
        z / n
    } else {
        C64::new(1.0, 0.0)
    }
}

/// Scales every column to unit Euclidean norm. Returns the indices of columns
/// that were zero and left untouched.
pub fn normalize_columns(m: &mut CMatrix) -> Vec<usize> {
    let mut zero = Vec::new();
    for (j, mut col) in m.column_iter_mut().enumerate() {
        let n = col.norm();
        if n > 0.0 && n.is_finite() {
            col.unscale_mut(n);
        } else {
            zero.push(j);
        }
    }
    zero
}

fn to_faer(m: &CMatrix) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, C64>) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin singular value decomposition `m = U diag(s) Vᴴ`, singular values
/// nonincreasing.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub singular_values: Vec<f64>,
    pub v: CMatrix,
}

pub fn svd(m: &CMatrix) -> Svd {
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return Svd { u: CMatrix::zeros(m.nrows(), 0), singular_values: Vec::new(), v: CMatrix::zeros(m.ncols(), 0) };
    }
    match to_faer(m).thin_svd() {
        Ok(d) => {
            let s = d.S().column_vector();
            Svd { u: from_faer(d.U()), singular_values: (0..k).map(|i| s[i].re).collect(), v: from_faer(d.V()) }
        }
        // Non-convergence only happens for non-finite input.
        Err(_) => {
            Svd { u: CMatrix::zeros(m.nrows(), k), singular_values: vec![f64::NAN; k], v: CMatrix::zeros(m.ncols(), k) }
        }
    }
}

/// Eigenvalues of a general square matrix, unordered.
pub fn eigenvalues(m: &CMatrix) -> Option<Vec<C64>> {
    if m.nrows() == 0 {
        return Some(Vec::new());
    }
    to_faer(m).eigenvalues().ok()
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted
/// nonincreasing. Eigenvectors are the matching columns.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    match to_faer(m).self_adjoint_eigen(faer::Side::Lower) {
        Ok(e) => {
            let s = e.S().column_vector();
            let u = e.U();
            let values = (0..n).rev().map(|i| s[i].re).collect();
            let vectors = CMatrix::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
            (values, vectors)
        }
        Err(_) => (vec![f64::NAN; n], CMatrix::identity(n, n)),
    }
}

/// Least-squares / minimum-norm solution of `a x = b` through the SVD.
/// Singular values below `rcond * σ_max` are discarded; the flag reports
/// whether that happened.
pub fn lstsq(a: &CMatrix, b: &CMatrix, rcond: f64) -> (CMatrix, bool) {
    let d = svd(a);
    let smax = d.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = rcond * smax;
    let deficient = d.singular_values.iter().any(|&s| s <= tol);
    let mut x = CMatrix::zeros(a.ncols(), b.ncols());
    for (i, &s) in d.singular_values.iter().enumerate() {
        if s <= tol || s == 0.0 || !s.is_finite() {
            continue;
        }
        // x += v_i (u_iᴴ b) / s_i
        let ub = d.u.column(i).adjoint() * b;
        x += (d.v.column(i) * ub).unscale(s);
    }
    (x, deficient)
}

/// Solves a small square system with diagonal loading `loading * trace/n`.
pub fn loaded_solve(a: &CMatrix, b: &CVector, loading: f64) -> Option<CVector> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].re.abs()).sum::<f64>() / n.max(1) as f64;
    let eps = if scale > 0.0 { loading * scale } else { loading };
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] += C64::new(eps, 0.0);
    }
    m.lu().solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inner_conjugates_left_argument() {
        let a = [C64::new(0.0, 1.0)];
        let b = [C64::new(1.0, 0.0)];
        assert_eq!(inner(&a, &b), C64::new(0.0, -1.0));
    }

    #[test]
    fn lstsq_recovers_consistent_system() {
        let a =
            CMatrix::from_fn(6, 3, |i, j| C64::new(((i + 1) * (j + 2)) as f64 * 0.3, ((i * i * j) % 5) as f64 - 1.0));
        let x0 = CMatrix::from_fn(3, 2, |i, j| C64::new(i as f64 - j as f64, 0.5));
        let b = &a * &x0;
        let (x, deficient) = lstsq(&a, &b, 1e-12);
        assert!(!deficient);
        assert!((x - x0).norm() < 1e-10);
    }

    fn pseudo_random(r: usize, c: usize, seed: u64) -> CMatrix {
        let mut x = seed;
        let mut next = move || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        CMatrix::from_fn(r, c, |_, _| C64::new(next(), next()))
    }

    #[test]
    fn svd_recomposes() {
        for seed in 0..50 {
            for (r, c) in [(3, 3), (4, 7), (9, 2), (16, 16)] {
                let m = pseudo_random(r, c, seed);
                let d = svd(&m);
                let s = CMatrix::from_fn(d.singular_values.len(), d.singular_values.len(), |i, j| {
                    if i == j {
                        C64::new(d.singular_values[i], 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                });
                let back = &d.u * s * d.v.adjoint();
                assert!((back - &m).norm() < 1e-12 * (1.0 + m.norm()));
                assert!(d.singular_values.windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }

    #[test]
    fn general_eigenvalues_of_triangular() {
        let mut m = pseudo_random(4, 4, 3);
        for i in 0..4 {
            for j in 0..i {
                m[(i, j)] = C64::new(0.0, 0.0);
            }
        }
        let mut got = eigenvalues(&m).unwrap();
        let mut want: Vec<C64> = (0..4).map(|i| m[(i, i)]).collect();
        got.sort_by(|a, b| a.re.total_cmp(&b.re));
        want.sort_by(|a, b| a.re.total_cmp(&b.re));
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).norm() < 1e-12);
        }
    }

    #[test]
    fn hermitian_eigen_residual() {
        let a = pseudo_random(12, 12, 9);
        let h = &a * a.adjoint();
        let (vals, vecs) = hermitian_eigen(&h);
        for j in 0..12 {
            let v = vecs.column(j);
            assert!((&h * v - v * C64::new(vals[j], 0.0)).norm() < 1e-12 * h.norm());
        }
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn hermitian_eigen_sorted() {
        let m =
            CMatrix::from_fn(3, 3, |i, j| if i == j { C64::new([1.0, 5.0, 3.0][i], 0.0) } else { C64::new(0.0, 0.0) });
        let (vals, _) = hermitian_eigen(&m);
        for (v, want) in vals.iter().zip([5.0, 3.0, 1.0]) {
            assert!((v - want).abs() < 1e-12);
        }
    }
}
