//! Dense linear-algebra helpers shared by the geometric modules.
//!
//! All rank and kernel decisions go through singular values with a threshold
//! relative to the largest singular value.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type ComplexMatrix = DMatrix<Complex64>;

/// Default relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-9;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn zeros(n: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(n, n)
}

/// Elementary matrix `E_{ij}` (zero-based indices).
pub fn unit(n: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut m = zeros(n);
    m[(i, j)] = Complex64::new(1.0, 0.0);
    m
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.diagonal().iter().copied().sum()
}

pub fn frob(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn scale(m: &ComplexMatrix, s: Complex64) -> ComplexMatrix {
    m.map(|z| z * s)
}

pub fn rscale(m: &ComplexMatrix, s: f64) -> ComplexMatrix {
    m.map(|z| z * s)
}

/// Orthonormal basis of `su(n)` for the Hermitian inner product `tr(X^† Y)`.
///
/// Order: the `n - 1` diagonal generalized Gell-Mann elements, then for each
/// pair `j < k` (row-major) the symmetric element `i(E_jk + E_kj)/√2` followed
/// by the antisymmetric element `(E_jk - E_kj)/√2`. Being a unitary basis of
/// `su(n)`, it is also an orthonormal complex basis of `sl(n, C)`.
pub fn su_basis(n: usize) -> Vec<ComplexMatrix> {
    let mut basis = Vec::with_capacity(n * n - 1);
    for k in 1..n {
        let norm = ((k * (k + 1)) as f64).sqrt();
        let mut m = zeros(n);
        for j in 0..k {
            m[(j, j)] = c(0.0, 1.0 / norm);
        }
        m[(k, k)] = c(0.0, -(k as f64) / norm);
        basis.push(m);
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..n {
        for k in (j + 1)..n {
            let mut s = zeros(n);
            s[(j, k)] = c(0.0, r);
            s[(k, j)] = c(0.0, r);
            basis.push(s);
            let mut a = zeros(n);
            a[(j, k)] = c(r, 0.0);
            a[(k, j)] = c(-r, 0.0);
            basis.push(a);
        }
    }
    basis
}

/// Complex coordinates of a traceless matrix in [`su_basis`].
pub fn coords(basis: &[ComplexMatrix], m: &ComplexMatrix) -> Vec<Complex64> {
    basis
        .iter()
        .map(|b| b.iter().zip(m.iter()).map(|(x, y)| x.conj() * y).sum())
        .collect()
}

pub fn from_coords(basis: &[ComplexMatrix], cs: &[Complex64]) -> ComplexMatrix {
    let n = basis[0].nrows();
    let mut m = zeros(n);
    for (b, &z) in basis.iter().zip(cs) {
        m += scale(b, z);
    }
    m
}

pub fn from_real_coords(basis: &[ComplexMatrix], xs: &[f64]) -> ComplexMatrix {
    let n = basis[0].nrows();
    let mut m = zeros(n);
    for (b, &x) in basis.iter().zip(xs) {
        m += rscale(b, x);
    }
    m
}

/// Real coordinates of an anti-Hermitian traceless matrix (the imaginary parts
/// of the complex coordinates vanish for such input).
pub fn real_coords(basis: &[ComplexMatrix], m: &ComplexMatrix) -> Vec<f64> {
    coords(basis, m).into_iter().map(|z| z.re).collect()
}

pub fn singular_values<T>(m: &DMatrix<T>) -> Vec<f64>
where
    T: nalgebra::ComplexField<RealField = f64>,
{
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Numerical rank with threshold `rel_tol * σ_max`; the zero matrix has rank 0.
pub fn numerical_rank<T>(m: &DMatrix<T>, rel_tol: f64) -> usize
where
    T: nalgebra::ComplexField<RealField = f64>,
{
    let s = singular_values(m);
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&x| x > rel_tol * smax).count(),
        _ => 0,
    }
}

/// Orthonormal basis of the numerical kernel, returned as columns.
pub fn kernel<T>(m: &DMatrix<T>, rel_tol: f64) -> DMatrix<T>
where
    T: nalgebra::ComplexField<RealField = f64>,
{
    let smax = singular_values(m).first().copied().unwrap_or(0.0);
    kernel_below(m, rel_tol * smax)
}

/// Right singular vectors whose singular value is at most `threshold`.
pub fn kernel_below<T>(m: &DMatrix<T>, threshold: f64) -> DMatrix<T>
where
    T: nalgebra::ComplexField<RealField = f64>,
{
    let (rows, cols) = m.shape();
    // Pad to at least square so that the SVD yields a full right basis.
    let padded = if rows < cols {
        let mut p = DMatrix::<T>::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sv = &svd.singular_values;
    let keep: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= threshold).collect();
    let mut out = DMatrix::<T>::zeros(cols, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        for j in 0..cols {
            out[(j, c)] = v_t[(i, j)].clone().conjugate();
        }
    }
    out
}

/// Minimal-norm least-squares solution `A^+ b` with relative threshold.
pub fn lstsq<T>(a: &DMatrix<T>, b: &DVector<T>, rel_tol: f64) -> DVector<T>
where
    T: nalgebra::ComplexField<RealField = f64>,
{
    if a.is_empty() {
        return DVector::zeros(a.ncols());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return DVector::zeros(a.ncols());
    }
    svd.solve(b, rel_tol * smax).expect("SVD computed with U and V")
}

/// Ratio of extreme nonzero-threshold singular values; infinite when rank-deficient.
pub fn condition<T>(m: &DMatrix<T>) -> f64
where
    T: nalgebra::ComplexField<RealField = f64>,
{
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_complex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, n, |_, _| complex_gaussian(rng))
}

/// Random traceless complex matrix.
pub fn random_sl<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    let mut m = random_complex(rng, n);
    let t = trace(&m) / (n as f64);
    for i in 0..n {
        m[(i, i)] -= t;
    }
    m
}

/// Random element of `su(n)` with Gaussian coordinates.
pub fn random_su<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    let basis = su_basis(n);
    let xs: Vec<f64> = (0..basis.len()).map(|_| rng.sample(StandardNormal)).collect();
    from_real_coords(&basis, &xs)
}

/// Haar-like random element of `SU(n)` from the QR decomposition of a
/// complex Gaussian matrix.
pub fn random_special_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    let z = random_complex(rng, n);
    let (q, r) = z.qr().unpack();
    let mut q = q;
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    let det = q.determinant();
    let root = det.powf(1.0 / n as f64);
    q.map(|z| z / root)
}

/// Conjugation `g X g^{-1}` for unitary `g`.
pub fn conj_unitary(g: &ComplexMatrix, x: &ComplexMatrix) -> ComplexMatrix {
    g * x * g.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn su_basis_is_orthonormal_and_anti_hermitian() {
        for n in 2..=4 {
            let b = su_basis(n);
            assert_eq!(b.len(), n * n - 1);
            for (i, x) in b.iter().enumerate() {
                assert!(frob(&(x + x.adjoint())) < 1e-15);
                assert!(trace(x).norm() < 1e-15);
                for (j, y) in b.iter().enumerate() {
                    let ip = trace(&(x.adjoint() * y));
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((ip - c(expect, 0.0)).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn coordinates_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = su_basis(3);
        let m = random_sl(&mut rng, 3);
        let back = from_coords(&b, &coords(&b, &m));
        assert!(frob(&(back - &m)) < 1e-13);
    }

    #[test]
    fn kernel_of_wide_matrix_is_complete() {
        let a = DMatrix::<f64>::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let k = kernel(&a, RANK_TOL);
        assert_eq!(k.ncols(), 2);
        assert!((&a * &k).norm() < 1e-14);
    }

    #[test]
    fn random_special_unitary_is_special_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_special_unitary(&mut rng, 3);
        let id = ComplexMatrix::identity(3, 3);
        assert!(frob(&(g.adjoint() * &g - id)) < 1e-12);
        assert!((g.determinant() - c(1.0, 0.0)).norm() < 1e-12);
    }
}
