//! Floating-point primitives for `sl(n, C)`: brackets, the trace form,
//! regularity, power-sum invariants, sl(2)-triples and Slodowy slices.
//!
//! The trace form `tr(XY)` is used throughout in place of the Killing form;
//! the two differ by the positive factor `2n`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, coords, frob, su_basis, trace, unit, zeros, ComplexMatrix, RANK_TOL};

fn check_same(x: &ComplexMatrix, y: &ComplexMatrix) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), found: y.nrows() });
    }
    Ok(())
}

/// Commutator `XY - YX`.
pub fn bracket(x: &ComplexMatrix, y: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_same(x, y)?;
    Ok(x * y - y * x)
}

pub(crate) fn br(x: &ComplexMatrix, y: &ComplexMatrix) -> ComplexMatrix {
    x * y - y * x
}

/// Trace form `tr(XY)`.
pub fn trace_form(x: &ComplexMatrix, y: &ComplexMatrix) -> Result<Complex64> {
    check_same(x, y)?;
    Ok(tf(x, y))
}

pub(crate) fn tf(x: &ComplexMatrix, y: &ComplexMatrix) -> Complex64 {
    // tr(XY) = sum_{ij} X_ij Y_ji
    let n = x.nrows();
    let mut s = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            s += x[(i, j)] * y[(j, i)];
        }
    }
    s
}

/// Matrix of `ξ ↦ [X, ξ]` on `sl(n)` in the basis of [`su_basis`].
pub fn ad_matrix(x: &ComplexMatrix) -> DMatrix<Complex64> {
    let basis = su_basis(x.nrows());
    let dim = basis.len();
    let mut m = DMatrix::zeros(dim, dim);
    for (j, b) in basis.iter().enumerate() {
        let col = coords(&basis, &br(x, b));
        for (i, z) in col.into_iter().enumerate() {
            m[(i, j)] = z;
        }
    }
    m
}

/// Dimension of the centralizer together with the singular-value threshold used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralizerInfo {
    pub dim: usize,
    pub threshold: f64,
}

pub fn centralizer_info(x: &ComplexMatrix, rel_tol: f64) -> CentralizerInfo {
    let ad = ad_matrix(x);
    let s = linalg::singular_values(&ad);
    let smax = s.first().copied().unwrap_or(0.0);
    let threshold = rel_tol * smax;
    let rank = if smax > 0.0 { s.iter().filter(|&&v| v > threshold).count() } else { 0 };
    CentralizerInfo { dim: s.len() - rank, threshold }
}

/// Complex dimension of `ker ad_X` on `sl(n)`.
pub fn centralizer_dim(x: &ComplexMatrix) -> usize {
    centralizer_info(x, RANK_TOL).dim
}

/// Orthonormal basis of `ker ad_X ⊂ sl(n)`.
pub fn centralizer_basis(x: &ComplexMatrix, rel_tol: f64) -> Vec<ComplexMatrix> {
    let basis = su_basis(x.nrows());
    let k = linalg::kernel(&ad_matrix(x), rel_tol);
    (0..k.ncols())
        .map(|j| {
            let cs: Vec<Complex64> = k.column(j).iter().copied().collect();
            linalg::from_coords(&basis, &cs)
        })
        .collect()
}

/// Kostant regularity: the centralizer has the minimal dimension `n - 1`.
pub fn is_regular_element(x: &ComplexMatrix) -> bool {
    centralizer_dim(x) == x.nrows() - 1
}

/// `(tr X², …, tr Xⁿ)`.
pub fn power_sums(x: &ComplexMatrix) -> Vec<Complex64> {
    let n = x.nrows();
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    let mut p = x.clone();
    for _ in 2..=n {
        p = &p * x;
        out.push(trace(&p));
    }
    out
}

/// Directional derivative of `tr X^k` along `ξ`: `k tr(X^{k-1} ξ)`.
pub fn power_sum_differential(x: &ComplexMatrix, xi: &ComplexMatrix, k: usize) -> Result<Complex64> {
    check_same(x, xi)?;
    let n = x.nrows();
    if k < 2 || k > n {
        return Err(Error::OutOfRange { what: "power-sum degree", value: k as i64 });
    }
    let mut p = ComplexMatrix::identity(n, n);
    for _ in 1..k {
        p = &p * x;
    }
    Ok(tf(&p, xi) * (k as f64))
}

/// An `sl(2)`-triple `(h, e, f)` with `f = e^†`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sl2Triple {
    pub h: ComplexMatrix,
    pub e: ComplexMatrix,
    pub f: ComplexMatrix,
}

impl Sl2Triple {
    /// The zero triple, whose Slodowy slice is all of `sl(n)`.
    pub fn zero(n: usize) -> Self {
        Self { h: zeros(n), e: zeros(n), f: zeros(n) }
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    /// Largest violation of `[h,e]=2e`, `[h,f]=-2f`, `[e,f]=h`, `f=e^†`.
    pub fn relation_residual(&self) -> f64 {
        let r1 = frob(&(br(&self.h, &self.e) - linalg::rscale(&self.e, 2.0)));
        let r2 = frob(&(br(&self.h, &self.f) + linalg::rscale(&self.f, 2.0)));
        let r3 = frob(&(br(&self.e, &self.f) - &self.h));
        let r4 = frob(&(&self.f - self.e.adjoint()));
        r1.max(r2).max(r3).max(r4)
    }
}

fn sl2_irrep_block(dim: usize, offset: usize, t: &mut Sl2Triple) {
    // Standard basis of the irreducible representation of dimension `dim`.
    for i in 0..dim {
        t.h[(offset + i, offset + i)] = c((dim as f64) - 1.0 - 2.0 * i as f64, 0.0);
    }
    for i in 0..dim.saturating_sub(1) {
        let w = (((i + 1) * (dim - 1 - i)) as f64).sqrt();
        t.e[(offset + i, offset + i + 1)] = c(w, 0.0);
        t.f[(offset + i + 1, offset + i)] = c(w, 0.0);
    }
}

/// Principal triple: `e` is a single Jordan block.
pub fn principal_sl2(n: usize) -> Result<Sl2Triple> {
    if n < 2 {
        return Err(Error::OutOfRange { what: "n", value: n as i64 });
    }
    let mut t = Sl2Triple::zero(n);
    sl2_irrep_block(n, 0, &mut t);
    Ok(t)
}

/// Subregular triple: `e` of Jordan type `(n-1, 1)`.
pub fn subregular_sl2(n: usize) -> Result<Sl2Triple> {
    if n < 3 {
        return Err(Error::OutOfRange { what: "n", value: n as i64 });
    }
    let mut t = Sl2Triple::zero(n);
    sl2_irrep_block(n - 1, 0, &mut t);
    Ok(t)
}

/// Affine slice `e + ker ad_f`.
#[derive(Debug, Clone)]
pub struct SlodowySlice {
    pub base: ComplexMatrix,
    pub kernel_basis: Vec<ComplexMatrix>,
}

impl SlodowySlice {
    /// Distance of `x - e` from the linear span of the kernel basis.
    pub fn distance(&self, x: &ComplexMatrix) -> f64 {
        let d = x - &self.base;
        let mut r = d.clone();
        for b in &self.kernel_basis {
            let w = b.iter().zip(d.iter()).map(|(p, q)| p.conj() * q).sum::<Complex64>();
            r -= linalg::scale(b, w);
        }
        frob(&r)
    }
}

pub fn slodowy_slice(t: &Sl2Triple) -> SlodowySlice {
    SlodowySlice { base: t.e.clone(), kernel_basis: centralizer_basis(&t.f, RANK_TOL) }
}

/// `E_{ij}` re-exported for tests and fixtures.
pub fn elementary(n: usize, i: usize, j: usize) -> ComplexMatrix {
    unit(n, i, j)
}
