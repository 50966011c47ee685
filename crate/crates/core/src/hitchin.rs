//! The SU(2)-equivariant, conjugation-invariant map from triples to binary
//! forms, and the SU(2) action on both sides.
//!
//! Convention: for `u = [[α, β], [-β̄, ᾱ]]` acting on a form of degree `2d`,
//! `(u·f)(ζ) = (β̄ζ + α)^{2d} f((ᾱζ - β)/(β̄ζ + α))`, i.e. substitution by the
//! Möbius map of `u⁻¹`. This is a left action.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, ComplexMatrix};
use crate::sections::{adjoint_quotient, make_section, BinaryForm, InvariantSection, RealTriple, TwistorSection};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SU2Element {
    #[serde(with = "crate::json::complex")]
    pub alpha: Complex64,
    #[serde(with = "crate::json::complex")]
    pub beta: Complex64,
}

impl SU2Element {
    pub fn new(alpha: Complex64, beta: Complex64) -> Result<Self> {
        let det = alpha.norm_sqr() + beta.norm_sqr();
        if (det - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidTriple(format!("|α|² + |β|² = {det}, expected 1")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn identity() -> Self {
        Self { alpha: c(1.0, 0.0), beta: c(0.0, 0.0) }
    }

    pub fn diagonal(theta: f64) -> Self {
        Self { alpha: Complex64::from_polar(1.0, theta), beta: c(0.0, 0.0) }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let (a, b) = (linalg::complex_gaussian(rng), linalg::complex_gaussian(rng));
        let r = (a.norm_sqr() + b.norm_sqr()).sqrt();
        Self { alpha: a / r, beta: b / r }
    }

    pub fn matrix(&self) -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[self.alpha, self.beta, -self.beta.conj(), self.alpha.conj()])
    }

    /// Group product `self · other`.
    pub fn mul(&self, other: &Self) -> Self {
        let m = self.matrix() * other.matrix();
        Self { alpha: m[(0, 0)], beta: m[(0, 1)] }
    }

    pub fn neg(&self) -> Self {
        Self { alpha: -self.alpha, beta: -self.beta }
    }
}

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![c(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Coefficient weights: `(u·f)_l = Σ_j W[l][j] c_j`.
fn action_weights(u: &SU2Element, degree: usize) -> Vec<Vec<Complex64>> {
    let num = [-u.beta, u.alpha.conj()];
    let den = [u.alpha, u.beta.conj()];
    // powers[k] = num^k, dpowers[k] = den^k
    let mut np = vec![vec![c(1.0, 0.0)]];
    let mut dp = vec![vec![c(1.0, 0.0)]];
    for k in 1..=degree {
        np.push(poly_mul(&np[k - 1], &num));
        dp.push(poly_mul(&dp[k - 1], &den));
    }
    let mut w = vec![vec![c(0.0, 0.0); degree + 1]; degree + 1];
    for j in 0..=degree {
        let term = poly_mul(&np[j], &dp[degree - j]);
        for (l, v) in term.into_iter().enumerate() {
            w[l][j] = v;
        }
    }
    w
}

pub fn su2_act_form(u: &SU2Element, f: &BinaryForm) -> BinaryForm {
    let w = action_weights(u, f.degree());
    BinaryForm::new(w.iter().map(|row| row.iter().zip(&f.coeffs).map(|(a, b)| a * b).sum()).collect())
}

pub fn su2_act_section(u: &SU2Element, s: &InvariantSection) -> InvariantSection {
    InvariantSection { n: s.n, forms: s.forms.iter().map(|f| su2_act_form(u, f)).collect() }
}

/// Coefficientwise action on the quadratic section of a triple.
pub fn su2_act_triple(u: &SU2Element, t: &RealTriple) -> RealTriple {
    let a = make_section(t);
    let w = action_weights(u, 2);
    let src = a.coeffs();
    let mut out = Vec::with_capacity(3);
    for row in &w {
        let mut m = ComplexMatrix::zeros(t.n, t.n);
        for (x, s) in row.iter().zip(src) {
            m += linalg::scale(s, *x);
        }
        out.push(m);
    }
    let [a0, a1, a2]: [ComplexMatrix; 3] = out.try_into().expect("three coefficients");
    let mut r = TwistorSection::new(a0, a1, a2).to_triple();
    // Remove the rounding-level Hermitian part so the result validates.
    r = r.map(|m| linalg::rscale(&(m - m.adjoint()), 0.5));
    r
}

/// The real `3 × 3` matrix `R` with `(u·T)_i = Σ_j R_ij T_j`.
pub fn induced_rotation(u: &SU2Element) -> [[f64; 3]; 3] {
    let n = 2;
    let basis = linalg::su_basis(n);
    let mut r = [[0.0; 3]; 3];
    for j in 0..3 {
        let mut t = RealTriple::zero(n);
        let slot = match j {
            0 => &mut t.t1,
            1 => &mut t.t2,
            _ => &mut t.t3,
        };
        *slot = basis[0].clone();
        let ut = su2_act_triple(u, &t);
        for (i, m) in ut.components().iter().enumerate() {
            r[i][j] = linalg::real_coords(&basis, m)[0];
        }
    }
    r
}

/// Binary forms `tr(A(ζ)^k)` of the twistor section of `t`.
pub fn hitchin_map(t: &RealTriple) -> InvariantSection {
    adjoint_quotient(&make_section(t))
}

/// The map applied to the components `φ₁, φ₂, φ₃` of a Higgs field in an
/// orthonormal coframe at one point.
pub fn s_phi_pointwise(phi1: &ComplexMatrix, phi2: &ComplexMatrix, phi3: &ComplexMatrix) -> Result<InvariantSection> {
    let t = RealTriple::new(phi1.clone(), phi2.clone(), phi3.clone())?;
    Ok(hitchin_map(&t))
}
