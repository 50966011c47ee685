//! Quadratic `sl(n)`-valued twistor sections `A(ζ) = A₀ + A₁ζ + A₂ζ²`, their
//! reality structure, the adjoint quotient to binary forms, the Jacobian of
//! the quotient map and the two hypersurfaces `D₁`, `D₂`.
//!
//! The point `ζ = ∞` is only ever reached through [`TwistorSection::chart_flip`],
//! which reverses the coefficients.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{self, br, tf};
use crate::linalg::{self, c, frob, rscale, scale, su_basis, trace, zeros, ComplexMatrix, I};

/// Default tolerance for every boolean verdict in this module.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Triple `(T₁, T₂, T₃)` of traceless anti-Hermitian matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealTriple {
    pub n: usize,
    #[serde(with = "crate::json::matrix")]
    pub t1: ComplexMatrix,
    #[serde(with = "crate::json::matrix")]
    pub t2: ComplexMatrix,
    #[serde(with = "crate::json::matrix")]
    pub t3: ComplexMatrix,
}

fn anti_hermitian_defect(m: &ComplexMatrix) -> f64 {
    frob(&(m + m.adjoint())) + trace(m).norm()
}

impl RealTriple {
    pub fn new(t1: ComplexMatrix, t2: ComplexMatrix, t3: ComplexMatrix) -> Result<Self> {
        let n = t1.nrows();
        for t in [&t1, &t2, &t3] {
            if t.nrows() != n || t.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, found: t.nrows() });
            }
        }
        let scale = 1.0 + frob(&t1) + frob(&t2) + frob(&t3);
        for (name, t) in [("T1", &t1), ("T2", &t2), ("T3", &t3)] {
            let d = anti_hermitian_defect(t);
            if d > DEFAULT_TOL * scale {
                return Err(Error::InvalidTriple(format!("{name} is not traceless anti-Hermitian (defect {d:e})")));
            }
        }
        Ok(Self { n, t1, t2, t3 })
    }

    pub fn zero(n: usize) -> Self {
        Self { n, t1: zeros(n), t2: zeros(n), t3: zeros(n) }
    }

    pub fn components(&self) -> [&ComplexMatrix; 3] {
        [&self.t1, &self.t2, &self.t3]
    }

    pub fn map(&self, f: impl Fn(&ComplexMatrix) -> ComplexMatrix) -> Self {
        Self { n: self.n, t1: f(&self.t1), t2: f(&self.t2), t3: f(&self.t3) }
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|m| rscale(m, s))
    }

    pub fn negated(&self) -> Self {
        self.scaled(-1.0)
    }

    /// Simultaneous conjugation `g T_i g^{-1}` by a unitary `g`.
    pub fn conjugated(&self, g: &ComplexMatrix) -> Self {
        self.map(|m| linalg::conj_unitary(g, m))
    }

    pub fn norm(&self) -> f64 {
        (frob(&self.t1).powi(2) + frob(&self.t2).powi(2) + frob(&self.t3).powi(2)).sqrt()
    }

    /// Real coordinates `(x(T₁), x(T₂), x(T₃))` in the `su(n)` basis.
    pub fn to_vec(&self) -> Vec<f64> {
        let b = su_basis(self.n);
        let mut v = linalg::real_coords(&b, &self.t1);
        v.extend(linalg::real_coords(&b, &self.t2));
        v.extend(linalg::real_coords(&b, &self.t3));
        v
    }

    pub fn from_vec(n: usize, v: &[f64]) -> Self {
        let b = su_basis(n);
        let m = b.len();
        Self {
            n,
            t1: linalg::from_real_coords(&b, &v[..m]),
            t2: linalg::from_real_coords(&b, &v[m..2 * m]),
            t3: linalg::from_real_coords(&b, &v[2 * m..3 * m]),
        }
    }

    pub fn add_scaled(&self, other: &Self, s: f64) -> Self {
        Self {
            n: self.n,
            t1: &self.t1 + rscale(&other.t1, s),
            t2: &self.t2 + rscale(&other.t2, s),
            t3: &self.t3 + rscale(&other.t3, s),
        }
    }

    /// Real symmetric matrix `Σ_ij = ⟨T_i, T_j⟩` of trace-form pairings.
    pub fn pairing_matrix(&self) -> [[f64; 3]; 3] {
        let ts = self.components();
        let mut g = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] = tf(ts[i], ts[j]).re;
            }
        }
        g
    }
}

/// Coefficients `(A₀, A₁, A₂)` of a quadratic `sl(n)`-valued section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwistorSection {
    pub n: usize,
    #[serde(with = "crate::json::matrix")]
    pub a0: ComplexMatrix,
    #[serde(with = "crate::json::matrix")]
    pub a1: ComplexMatrix,
    #[serde(with = "crate::json::matrix")]
    pub a2: ComplexMatrix,
}

impl TwistorSection {
    pub fn new(a0: ComplexMatrix, a1: ComplexMatrix, a2: ComplexMatrix) -> Self {
        Self { n: a0.nrows(), a0, a1, a2 }
    }

    pub fn coeffs(&self) -> [&ComplexMatrix; 3] {
        [&self.a0, &self.a1, &self.a2]
    }

    pub fn eval(&self, zeta: Complex64) -> ComplexMatrix {
        &self.a0 + scale(&self.a1, zeta) + scale(&self.a2, zeta * zeta)
    }

    /// Reality: `A₂ = -A₀^†` and `A₁ = A₁^†`, relative to the coefficient norms.
    pub fn is_real(&self, tol: f64) -> bool {
        let s = frob(&self.a0) + frob(&self.a1) + frob(&self.a2);
        if s == 0.0 {
            return true;
        }
        let d = frob(&(&self.a2 + self.a0.adjoint())) + frob(&(&self.a1 - self.a1.adjoint()));
        d <= tol * s
    }

    /// The section in the chart at infinity: `(A₂, A₁, A₀)`.
    pub fn chart_flip(&self) -> Self {
        Self::new(self.a2.clone(), self.a1.clone(), self.a0.clone())
    }

    /// Inverse of [`make_section`]; meaningful when the section is real.
    pub fn to_triple(&self) -> RealTriple {
        let half = 0.5;
        RealTriple {
            n: self.n,
            t1: scale(&self.a1, c(0.0, -0.5)),
            t2: rscale(&(&self.a0 + &self.a2), half),
            t3: scale(&(&self.a0 - &self.a2), c(0.0, -0.5)),
        }
    }

    pub fn norm(&self) -> f64 {
        (frob(&self.a0).powi(2) + frob(&self.a1).powi(2) + frob(&self.a2).powi(2)).sqrt()
    }
}

/// `T_j = -(i/2) σ_j` for the Pauli matrices `σ_j`.
pub fn pauli_triple() -> RealTriple {
    let s1 = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
    let s2 = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]);
    let s3 = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
    let k = c(0.0, -0.5);
    RealTriple { n: 2, t1: scale(&s1, k), t2: scale(&s2, k), t3: scale(&s3, k) }
}

/// `A₀ = T₂ + iT₃`, `A₁ = 2iT₁`, `A₂ = T₂ - iT₃`.
pub fn make_section(t: &RealTriple) -> TwistorSection {
    TwistorSection::new(
        &t.t2 + scale(&t.t3, I),
        scale(&t.t1, c(0.0, 2.0)),
        &t.t2 - scale(&t.t3, I),
    )
}

/// A section of `O(2d)`: coefficients `c₀ … c_{2d}` in the chart at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryForm {
    #[serde(with = "crate::json::complex_vec")]
    pub coeffs: Vec<Complex64>,
}

impl BinaryForm {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        Self { coeffs }
    }

    pub fn zero(degree: usize) -> Self {
        Self { coeffs: vec![c(0.0, 0.0); degree + 1] }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn half_degree(&self) -> usize {
        self.degree() / 2
    }

    /// `ε = (-1)^d` for a form of degree `2d`.
    pub fn reality_sign(&self) -> f64 {
        if self.half_degree() % 2 == 0 { 1.0 } else { -1.0 }
    }

    /// Largest violation of `c_{2d-j} = (-1)^{d+j} conj(c_j)`, relative to `max |c_j|`.
    pub fn reality_defect(&self) -> f64 {
        let d = self.half_degree();
        let top = self.degree();
        let s = self.max_abs();
        if s == 0.0 {
            return 0.0;
        }
        (0..=top)
            .map(|j| {
                let sign = if (d + j) % 2 == 0 { 1.0 } else { -1.0 };
                (self.coeffs[top - j] - self.coeffs[j].conj() * sign).norm()
            })
            .fold(0.0, f64::max)
            / s
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.reality_defect() <= tol
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn eval(&self, zeta: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(c(0.0, 0.0), |acc, &z| acc * zeta + z)
    }

    pub fn reversed(&self) -> Self {
        Self { coeffs: self.coeffs.iter().rev().copied().collect() }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|z| z * s).collect() }
    }
}

/// `s = π(A)`: one binary form of degree `2k` for each `k = 2 … n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantSection {
    pub n: usize,
    pub forms: Vec<BinaryForm>,
}

impl InvariantSection {
    pub fn zero(n: usize) -> Self {
        Self { n, forms: (2..=n).map(|k| BinaryForm::zero(2 * k)).collect() }
    }

    /// Validates the degree sequence `4, 6, …, 2n`.
    pub fn new(n: usize, forms: Vec<BinaryForm>) -> Result<Self> {
        if forms.len() != n.saturating_sub(1) {
            return Err(Error::DimensionMismatch { expected: n - 1, found: forms.len() });
        }
        for (i, f) in forms.iter().enumerate() {
            if f.degree() != 2 * (i + 2) {
                return Err(Error::DimensionMismatch { expected: 2 * (i + 2), found: f.degree() });
            }
        }
        Ok(Self { n, forms })
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.forms.iter().all(|f| f.is_real(tol))
    }

    pub fn max_abs(&self) -> f64 {
        self.forms.iter().map(BinaryForm::max_abs).fold(0.0, f64::max)
    }

    /// The weighted `C^*`-action: form of degree `2k` scaled by `t^k`.
    pub fn weighted(&self, t: f64) -> Self {
        let forms = self.forms.iter().map(|f| f.scaled(t.powi(f.half_degree() as i32))).collect();
        Self { n: self.n, forms }
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self { n: self.n, forms: self.forms.iter().map(|f| f.scaled(t)).collect() }
    }

    /// `(1-t) self + t other`.
    pub fn lerp(&self, other: &Self, t: f64) -> Self {
        let forms = self
            .forms
            .iter()
            .zip(&other.forms)
            .map(|(a, b)| {
                BinaryForm::new(a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x * (1.0 - t) + y * t).collect())
            })
            .collect();
        Self { n: self.n, forms }
    }

    /// Stacked complex coefficients of all forms.
    pub fn flat(&self) -> Vec<Complex64> {
        self.forms.iter().flat_map(|f| f.coeffs.iter().copied()).collect()
    }

    pub fn max_distance(&self, other: &Self) -> f64 {
        self.flat().iter().zip(other.flat()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

pub(crate) fn poly_mul(a: &[ComplexMatrix], b: &[ComplexMatrix]) -> Vec<ComplexMatrix> {
    let n = a[0].nrows();
    let mut out = vec![zeros(n); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Coefficients of `A(ζ)^k` for `k = 0 … max_k`.
pub(crate) fn section_powers(a: &TwistorSection, max_k: usize) -> Vec<Vec<ComplexMatrix>> {
    let n = a.n;
    let lin = vec![a.a0.clone(), a.a1.clone(), a.a2.clone()];
    let mut out = vec![vec![ComplexMatrix::identity(n, n)]];
    for k in 1..=max_k {
        let next = poly_mul(&out[k - 1], &lin);
        out.push(next);
    }
    out
}

/// The adjoint quotient: `k`-th form is `tr(A(ζ)^k)`, `k = 2 … n`.
pub fn adjoint_quotient(a: &TwistorSection) -> InvariantSection {
    let powers = section_powers(a, a.n);
    let forms = (2..=a.n).map(|k| BinaryForm::new(powers[k].iter().map(trace).collect())).collect();
    InvariantSection { n: a.n, forms }
}

/// ζ-coefficients of `d p_k(A(ζ); Ȧ(ζ)) = k tr(A(ζ)^{k-1} Ȧ(ζ))` for every `k`,
/// stacked in order of increasing `k` then increasing power of `ζ`.
pub(crate) fn differential_coeffs(powers: &[Vec<ComplexMatrix>], dot: &TwistorSection) -> Vec<Complex64> {
    let n = dot.n;
    let dl = dot.coeffs();
    let mut out = Vec::new();
    for k in 2..=n {
        let q = &powers[k - 1];
        let mut coeffs = vec![c(0.0, 0.0); q.len() + 2];
        for (j, qj) in q.iter().enumerate() {
            for (m, dm) in dl.iter().enumerate() {
                coeffs[j + m] += tf(qj, dm) * (k as f64);
            }
        }
        out.extend(coeffs);
    }
    out
}

/// Matrix of `ξ ↦ (ζ-coefficients of k tr(A(ζ)^{k-1} ξ))_{k=2..n}` for constant
/// `ξ ∈ sl(n)`. Rows: block `k` ascending, then powers of `ζ` ascending
/// (`2k - 1` rows per block). Columns: the basis of [`su_basis`].
pub fn jacobian(a: &TwistorSection) -> DMatrix<Complex64> {
    let n = a.n;
    let basis = su_basis(n);
    let powers = section_powers(a, n - 1);
    let dim = basis.len();
    let mut m = DMatrix::zeros(dim, dim);
    let mut row = 0;
    for k in 2..=n {
        for qj in &powers[k - 1] {
            for (col, b) in basis.iter().enumerate() {
                m[(row, col)] = tf(qj, b) * (k as f64);
            }
            row += 1;
        }
    }
    debug_assert_eq!(row, dim);
    m
}

/// `p₁ = det d_Aπ`.
pub fn p1(a: &TwistorSection) -> Complex64 {
    jacobian(a).determinant()
}

/// `|p₁|` divided by the product of row norms (Hadamard bound), in `[0, 1]`.
pub fn p1_ratio(a: &TwistorSection) -> f64 {
    let j = jacobian(a);
    p1_ratio_of(&j)
}

pub(crate) fn p1_ratio_of(j: &DMatrix<Complex64>) -> f64 {
    let rows: f64 = (0..j.nrows()).map(|i| j.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).product();
    if rows == 0.0 {
        return 0.0;
    }
    j.determinant().norm() / rows
}

pub fn in_d1(a: &TwistorSection, tol: f64) -> bool {
    p1_ratio(a) <= tol
}

/// `p₂ = ⟨A₁, [A₀, A₂]⟩`. For a real section built from `T`, `p₂ = 4⟨T₁,[T₂,T₃]⟩`.
pub fn p2(a: &TwistorSection) -> Complex64 {
    tf(&a.a1, &br(&a.a0, &a.a2))
}

pub fn in_d2(a: &TwistorSection, tol: f64) -> bool {
    let s = frob(&a.a0) * frob(&a.a1) * frob(&a.a2);
    p2(a).norm() <= tol * s
}

/// A real triple is a regular twistor line when its section is real and
/// avoids `D₁`.
pub fn is_regular_twistor_line(t: &RealTriple, tol: f64) -> bool {
    let a = make_section(t);
    a.is_real(tol) && !in_d1(&a, tol)
}

/// `l(ζ) = (l₂ + il₃) + 2il₁ζ + (l₂ - il₃)ζ²`.
pub fn level_section(l: &RealTriple) -> TwistorSection {
    make_section(l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    #[serde(with = "crate::json::complex")]
    pub p1: Complex64,
    pub p1_ratio: f64,
    pub determinant_regular: bool,
    /// Largest `centralizer_dim(l(ζ)) - (n - 1)` over the grid, both charts.
    pub max_centralizer_excess: usize,
    pub worst_zeta: Option<[f64; 2]>,
    pub worst_chart_at_infinity: bool,
    pub grid_points: usize,
    pub grid_regular: bool,
    pub regular: bool,
}

/// Polar grid on the closed unit disc; the angular resolution is a multiple of
/// four so that `±1` and `±i` are always sampled.
pub fn unit_disc_grid(grid_size: usize) -> Vec<Complex64> {
    let rings = grid_size.max(1);
    let spokes = 4 * rings.max(2);
    let mut pts = vec![c(0.0, 0.0)];
    for r in 1..=rings {
        let rad = r as f64 / rings as f64;
        for a in 0..spokes {
            let th = 2.0 * std::f64::consts::PI * a as f64 / spokes as f64;
            let (s, co) = th.sin_cos();
            // Exact values on the axes.
            let (x, y) = match (4 * a) % spokes {
                0 => match 4 * a / spokes {
                    0 => (1.0, 0.0),
                    1 => (0.0, 1.0),
                    2 => (-1.0, 0.0),
                    _ => (0.0, -1.0),
                },
                _ => (co, s),
            };
            pts.push(c(rad * x, rad * y));
        }
    }
    pts
}

pub fn check_level_regular(l: &RealTriple, grid_size: usize) -> LevelReport {
    let a = level_section(l);
    let j = jacobian(&a);
    let p1v = j.determinant();
    let ratio = p1_ratio_of(&j);
    let det_ok = ratio > DEFAULT_TOL;
    let grid = unit_disc_grid(grid_size);
    let flipped = a.chart_flip();
    let base = l.n - 1;
    let mut worst = (0usize, None, false);
    let mut count = 0;
    for (sec, at_inf) in [(&a, false), (&flipped, true)] {
        for &z in &grid {
            count += 1;
            let excess = lie::centralizer_dim(&sec.eval(z)).saturating_sub(base);
            if excess > worst.0 || worst.1.is_none() {
                worst = (excess.max(worst.0), Some([z.re, z.im]), at_inf);
            }
        }
    }
    let grid_ok = worst.0 == 0;
    LevelReport {
        p1: p1v,
        p1_ratio: ratio,
        determinant_regular: det_ok,
        max_centralizer_excess: worst.0,
        worst_zeta: worst.1,
        worst_chart_at_infinity: worst.2,
        grid_points: count,
        grid_regular: grid_ok,
        regular: det_ok && grid_ok,
    }
}

/// Outcome of the attempt to factor `s` through quadratic eigenvalue sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CartanLift {
    Lift {
        /// One quadratic `(c₀, c₁, c₂)` per eigenvalue branch.
        #[serde(with = "crate::json::complex_rows")]
        quadratics: Vec<Vec<Complex64>>,
        fit_residual: f64,
    },
    NoLift {
        /// Branch permutation after one loop of the path.
        monodromy: Vec<usize>,
        fit_residual: f64,
        radius: f64,
    },
}

/// Roots of the polynomial `Σ coeffs[k] λ^k` (leading coefficient last, nonzero).
pub(crate) fn poly_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let deg = coeffs.len() - 1;
    let lead = coeffs[deg];
    if deg == 1 {
        return vec![-coeffs[0] / lead];
    }
    let mut comp = DMatrix::<Complex64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = c(1.0, 0.0);
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -coeffs[i] / lead;
    }
    let schur = nalgebra::Schur::new(comp);
    let (_, t) = schur.unpack();
    let f = |z: Complex64| coeffs.iter().rev().fold(c(0.0, 0.0), |acc, &a| acc * z + a);
    let df = |z: Complex64| {
        coeffs.iter().enumerate().skip(1).rev().fold(c(0.0, 0.0), |acc, (k, &a)| acc * z + a * (k as f64))
    };
    (0..deg)
        .map(|i| {
            let mut z = t[(i, i)];
            for _ in 0..2 {
                let d = df(z);
                if d.norm() > 1e-300 {
                    let step = f(z) / d;
                    if step.norm() < 1e-3 * (1.0 + z.norm()) {
                        z -= step;
                    }
                }
            }
            z
        })
        .collect()
}

/// Eigenvalues of an element of `sl(n)` with prescribed power sums `p_2 … p_n`.
pub(crate) fn eigen_from_power_sums(ps: &[Complex64], n: usize) -> Vec<Complex64> {
    // Newton identities with p_1 = 0.
    let mut p = vec![c(0.0, 0.0); n + 1];
    for (k, &v) in ps.iter().enumerate() {
        p[k + 2] = v;
    }
    let mut e = vec![c(0.0, 0.0); n + 1];
    e[0] = c(1.0, 0.0);
    for k in 1..=n {
        let mut acc = c(0.0, 0.0);
        for i in 1..=k {
            let sign = if (i - 1) % 2 == 0 { 1.0 } else { -1.0 };
            acc += e[k - i] * p[i] * sign;
        }
        e[k] = acc / (k as f64);
    }
    // λ^n - e1 λ^{n-1} + e2 λ^{n-2} - …
    let mut coeffs = vec![c(0.0, 0.0); n + 1];
    for k in 0..=n {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        coeffs[n - k] = e[k] * sign;
    }
    poly_roots(&coeffs)
}

fn best_matching(prev: &[Complex64], next: &[Complex64]) -> Vec<usize> {
    // perm[i] = index in `next` continuing branch i
    let n = prev.len();
    if n <= 6 {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut perm: Vec<usize> = (0..n).collect();
        permute(&mut perm, 0, &mut |p| {
            let cost: f64 = p.iter().enumerate().map(|(i, &j)| (prev[i] - next[j]).norm_sqr()).sum();
            if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                best = Some((cost, p.to_vec()));
            }
        });
        best.map(|b| b.1).unwrap_or_default()
    } else {
        let mut used = vec![false; n];
        prev.iter()
            .map(|&z| {
                let j = (0..n)
                    .filter(|&j| !used[j])
                    .min_by(|&a, &b| (next[a] - z).norm().partial_cmp(&(next[b] - z).norm()).unwrap())
                    .unwrap();
                used[j] = true;
                j
            })
            .collect()
    }
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

fn fit_quadratic(zs: &[Complex64], vals: &[Complex64]) -> (Vec<Complex64>, f64) {
    let v = DMatrix::from_fn(zs.len(), 3, |i, j| zs[i].powu(j as u32));
    let b = DVector::from_column_slice(vals);
    let x = linalg::lstsq(&v, &b, 1e-13);
    let r = (&v * &x - &b).norm();
    let s = b.norm().max(1e-300);
    (x.iter().copied().collect(), r / s)
}

/// Tries to write `s = q(ξ)` with quadratic eigenvalue sections `ξ_i(ζ)`.
///
/// Eigenvalues of `A(ζ)` are recovered from the power sums along circles
/// `|ζ| = R`, continued by nearest matching, and each branch is fitted with a
/// quadratic. A nontrivial closing permutation or a poor fit is evidence that
/// no lift exists. Paths on which branches come within `1e-6` (relative) of
/// each other are skipped; if every path collides the result is inconclusive.
pub fn cartan_lift(s: &InvariantSection, grid_size: usize) -> Result<CartanLift> {
    let n = s.n;
    if s.max_abs() == 0.0 {
        return Ok(CartanLift::Lift { quadratics: vec![vec![c(0.0, 0.0); 3]; n], fit_residual: 0.0 });
    }
    let samples = (16 * grid_size).max(64);
    let radii = [0.55, 0.8, 1.3, 1.7, 0.35, 2.3];
    let mut min_sep_seen = f64::INFINITY;
    for &rad in &radii {
        let zs: Vec<Complex64> = (0..=samples)
            .map(|i| Complex64::from_polar(rad, 2.0 * std::f64::consts::PI * i as f64 / samples as f64))
            .collect();
        let mut branches: Vec<Vec<Complex64>> = vec![Vec::with_capacity(zs.len()); n];
        let mut prev: Option<Vec<Complex64>> = None;
        let mut scale_max: f64 = 0.0;
        let mut min_sep = f64::INFINITY;
        let mut max_move: f64 = 0.0;
        for &z in &zs {
            let ps: Vec<Complex64> = s.forms.iter().map(|f| f.eval(z)).collect();
            let ev = eigen_from_power_sums(&ps, n);
            scale_max = ev.iter().map(|x| x.norm()).fold(scale_max, f64::max);
            for i in 0..n {
                for j in (i + 1)..n {
                    min_sep = min_sep.min((ev[i] - ev[j]).norm());
                }
            }
            let ordered: Vec<Complex64> = match &prev {
                None => ev,
                Some(p) => {
                    let perm = best_matching(p, &ev);
                    let o: Vec<Complex64> = perm.iter().map(|&j| ev[j]).collect();
                    for (a, b) in p.iter().zip(&o) {
                        max_move = max_move.max((a - b).norm());
                    }
                    o
                }
            };
            for i in 0..n {
                branches[i].push(ordered[i]);
            }
            prev = Some(ordered);
        }
        let rel_sep = min_sep / scale_max.max(1e-300);
        min_sep_seen = min_sep_seen.min(rel_sep);
        // A collision, or a path too coarse for matching to be trusted.
        if rel_sep < 1e-6 || min_sep < 4.0 * max_move {
            continue;
        }
        // Closing permutation: where does each branch end relative to the start?
        let start: Vec<Complex64> = branches.iter().map(|b| b[0]).collect();
        let end: Vec<Complex64> = branches.iter().map(|b| *b.last().unwrap()).collect();
        let monodromy = best_matching(&end, &start);
        let mut worst = 0.0f64;
        let mut quads = Vec::with_capacity(n);
        for b in &branches {
            let (q, r) = fit_quadratic(&zs, b);
            worst = worst.max(r);
            quads.push(q);
        }
        let identity = monodromy.iter().enumerate().all(|(i, &j)| i == j);
        if identity && worst < 1e-8 {
            return Ok(CartanLift::Lift { quadratics: quads, fit_residual: worst });
        }
        return Ok(CartanLift::NoLift { monodromy, fit_residual: worst, radius: rad });
    }
    Err(Error::Inconclusive { separation: min_sep_seen })
}

/// Null-space based numerical rank of a list of matrices viewed as linear
/// functionals `ξ ↦ tr(M ξ)` on `sl(n)`.
pub fn functional_rank(ms: &[ComplexMatrix], rel_tol: f64) -> usize {
    let n = ms[0].nrows();
    let basis = su_basis(n);
    let m = DMatrix::from_fn(ms.len(), basis.len(), |i, j| tf(&ms[i], &basis[j]));
    linalg::numerical_rank(&m, rel_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::principal_sl2;
    use crate::linalg::{random_special_unitary, random_su};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sl2() -> (ComplexMatrix, ComplexMatrix, ComplexMatrix) {
        let t = principal_sl2(2).unwrap();
        (t.e, t.h, t.f)
    }

    fn pauli() -> RealTriple {
        pauli_triple()
    }

    fn random_triple(rng: &mut ChaCha8Rng, n: usize) -> RealTriple {
        RealTriple::new(random_su(rng, n), random_su(rng, n), random_su(rng, n)).unwrap()
    }

    /// Oracle: expand tr(A(ζ)^k) by evaluating at 2k+1 roots of unity and
    /// inverting the discrete Fourier transform.
    fn quotient_by_interpolation(a: &TwistorSection, k: usize) -> Vec<Complex64> {
        let m = 2 * k + 1;
        let vals: Vec<Complex64> = (0..m)
            .map(|j| {
                let z = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / m as f64);
                let x = a.eval(z);
                let mut p = ComplexMatrix::identity(a.n, a.n);
                for _ in 0..k {
                    p = &p * &x;
                }
                trace(&p)
            })
            .collect();
        (0..m)
            .map(|l| {
                (0..m)
                    .map(|j| vals[j] * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (j * l) as f64 / m as f64))
                    .sum::<Complex64>()
                    / m as f64
            })
            .collect()
    }

    #[test]
    fn make_section_examples() {
        let (e, h, f) = sl2();
        let z = RealTriple::zero(2);
        let a = make_section(&z);
        assert_eq!(a.norm(), 0.0);
        let t = RealTriple::new(
            scale(&h, c(0.0, -0.5)),
            rscale(&(&e - &f), 0.5),
            scale(&(&e + &f), c(0.0, -0.5)),
        )
        .unwrap();
        let a = make_section(&t);
        assert!(frob(&(&a.a0 - &e)) < 1e-15);
        assert!(frob(&(&a.a1 - &h)) < 1e-15);
        assert!(frob(&(&a.a2 + &f)) < 1e-15);
        assert!(a.is_real(DEFAULT_TOL));
        let back = a.to_triple();
        assert!((back.norm() - t.norm()).abs() < 1e-14);

        let p = pauli();
        let a = make_section(&p);
        let s1 = scale(&p.t1, c(0.0, 2.0));
        assert!(frob(&(&a.a1 - s1)) < 1e-15);
        assert!(frob(&(&a.a0 - (&p.t2 + scale(&p.t3, I)))) < 1e-15);
    }

    #[test]
    fn invalid_triple_rejected() {
        let (e, h, _) = sl2();
        assert!(matches!(RealTriple::new(e, h.clone(), h), Err(Error::InvalidTriple(_))));
    }

    #[test]
    fn reality_and_chart_flip() {
        let (e, h, f) = sl2();
        let a = TwistorSection::new(e.clone(), h.clone(), -f.clone());
        assert!(a.is_real(DEFAULT_TOL));
        let b = TwistorSection::new(e.clone(), h.clone(), f.clone());
        assert!(!b.is_real(DEFAULT_TOL));
        let fl = a.chart_flip();
        assert_eq!(fl.a0, -f);
        assert_eq!(fl.a2, e);
        assert!(fl.is_real(DEFAULT_TOL));
        assert_eq!(fl.chart_flip(), a);
    }

    #[test]
    fn adjoint_quotient_examples() {
        let (e, h, f) = sl2();
        let cone = TwistorSection::new(e.clone(), -h.clone(), -f.clone());
        assert_eq!(adjoint_quotient(&cone).max_abs(), 0.0);

        // A(ζ) = [[0, 1-ζ²],[1-ζ², 0]]-type: A0 = E12 + E21, A2 = -(E12 + E21).
        let x = &e + &f;
        let a = TwistorSection::new(x.clone(), zeros(2), -x.clone());
        let q = adjoint_quotient(&a);
        let expect = [2.0, 0.0, -4.0, 0.0, 2.0];
        for (z, &v) in q.forms[0].coeffs.iter().zip(&expect) {
            assert!((z - c(v, 0.0)).norm() < 1e-14);
        }
        let oracle = quotient_by_interpolation(&a, 2);
        for (z, o) in q.forms[0].coeffs.iter().zip(&oracle) {
            assert!((z - o).norm() < 1e-12);
        }
        assert_eq!(adjoint_quotient(&TwistorSection::new(zeros(3), zeros(3), zeros(3))).max_abs(), 0.0);
    }

    #[test]
    fn jacobian_examples() {
        let (e, h, f) = sl2();
        // |det| is basis-independent for unitary bases: in (E12, E21, h/√2) the
        // rows are 2·(0,1,0), 2·(0,0,√2), 2·(1,0,0), so |det| = 8√2.
        let a = TwistorSection::new(e.clone(), h.clone(), f.clone());
        assert!((p1(&a).norm() - 8.0 * 2f64.sqrt()).abs() < 1e-12);
        let b = TwistorSection::new(e.clone(), rscale(&e, 2.0), rscale(&e, 3.0));
        assert!(p1(&b).norm() < 1e-12);
        assert!(in_d1(&b, DEFAULT_TOL));
        let z = TwistorSection::new(zeros(2), zeros(2), zeros(2));
        assert_eq!(jacobian(&z).norm(), 0.0);
        assert_eq!(p1(&z).norm(), 0.0);
        let seed = TwistorSection::new(e.clone(), h.clone(), -f.clone());
        assert!(!in_d1(&seed, DEFAULT_TOL));
    }

    #[test]
    fn su2_triple_in_span_lies_on_d1() {
        let b = su_basis(2);
        let (e1, e2) = (&b[0], &b[1]);
        let a = TwistorSection::new(e1 + scale(e2, I), scale(e1, c(0.0, 2.0)), e1 - scale(e2, I));
        assert!(p1(&a).norm() < 1e-12);
    }

    #[test]
    fn p2_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t2 = random_su(&mut rng, 3);
        let t = RealTriple::new(random_su(&mut rng, 3), t2.clone(), t2).unwrap();
        assert!(p2(&make_section(&t)).norm() < 1e-12);
        let p = pauli();
        let null = tf(&p.t1, &br(&p.t2, &p.t3));
        assert!((null - c(-0.5, 0.0)).norm() < 1e-15);
        assert!((p2(&make_section(&p)) - null * 4.0).norm() < 1e-14);
        let (e, _, f) = sl2();
        assert_eq!(p2(&TwistorSection::new(e, zeros(2), f)).norm(), 0.0);
    }

    #[test]
    fn regular_twistor_line_examples() {
        let (e, h, f) = sl2();
        let t = TwistorSection::new(e, h.clone(), -f).to_triple();
        assert!(is_regular_twistor_line(&t, DEFAULT_TOL));
        // T2 = T3 = 0 gives A = 2iT1 ζ only: rows at ζ^0 and ζ^2 vanish.
        let t1 = scale(&h, c(0.0, 0.5));
        let comm = RealTriple::new(t1, zeros(2), zeros(2)).unwrap();
        let j = jacobian(&make_section(&comm));
        assert!(linalg::numerical_rank(&j, 1e-12) < 3);
        assert!(!is_regular_twistor_line(&comm, DEFAULT_TOL));
        assert!(!is_regular_twistor_line(&RealTriple::zero(2), DEFAULT_TOL));
    }

    #[test]
    fn level_sections() {
        let (_, h, _) = sl2();
        let hp = scale(&h, c(0.0, -0.5));
        let l = RealTriple::new(zeros(2), hp, zeros(2)).unwrap();
        // l(ζ) = h'(1 + ζ²) vanishes at ζ = ±i.
        assert!(frob(&level_section(&l).eval(I)) < 1e-15);
        let r = check_level_regular(&l, 4);
        assert!(!r.regular && !r.determinant_regular && !r.grid_regular);
        let r = check_level_regular(&pauli(), 4);
        assert!(r.regular && r.determinant_regular && r.grid_regular);
        let r = check_level_regular(&RealTriple::zero(3), 3);
        assert!(!r.regular);
    }

    #[test]
    fn cartan_lift_examples() {
        let mk = |v: [f64; 5]| InvariantSection::new(2, vec![BinaryForm::new(v.iter().map(|&x| c(x, 0.0)).collect())]).unwrap();
        match cartan_lift(&mk([2.0, 0.0, 4.0, 0.0, 2.0]), 4).unwrap() {
            CartanLift::Lift { quadratics, .. } => {
                // ±(1 + ζ²)
                for q in &quadratics {
                    assert!((q[0].norm() - 1.0).abs() < 1e-9 && q[1].norm() < 1e-9 && (q[2] - q[0]).norm() < 1e-9);
                }
            }
            other => panic!("expected lift, got {other:?}"),
        }
        assert!(matches!(cartan_lift(&mk([0.0, -2.0, 0.0, 2.0, 0.0]), 4).unwrap(), CartanLift::NoLift { .. }));
        assert!(matches!(cartan_lift(&InvariantSection::zero(3), 4).unwrap(), CartanLift::Lift { .. }));
    }

    /// Square-detection oracle for sl(2): tr A²/2 must be a perfect square.
    #[test]
    fn cartan_lift_agrees_with_square_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            // Commuting triple: lift exists.
            let b = su_basis(2);
            let d = &b[0];
            let xs: Vec<f64> = (0..3).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
            let t = RealTriple::new(rscale(d, xs[0]), rscale(d, xs[1]), rscale(d, xs[2])).unwrap();
            let s = adjoint_quotient(&make_section(&t));
            assert!(matches!(cartan_lift(&s, 4).unwrap(), CartanLift::Lift { .. }));
            // Generic triple: tr A²/2 has four simple roots, not a square.
            let g = random_triple(&mut rng, 2);
            let s = adjoint_quotient(&make_section(&g));
            assert!(matches!(cartan_lift(&s, 4).unwrap(), CartanLift::NoLift { .. }));
        }
    }

    #[test]
    fn reality_transport_and_gluing() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for i in 0..200 {
            let n = 2 + i % 3;
            let t = random_triple(&mut rng, n);
            let a = make_section(&t);
            let s = adjoint_quotient(&a);
            for f in &s.forms {
                assert!(f.reality_defect() < 1e-10, "defect {}", f.reality_defect());
            }
            let sf = adjoint_quotient(&a.chart_flip());
            for (f, g) in s.forms.iter().zip(&sf.forms) {
                let r = f.reversed();
                for (x, y) in r.coeffs.iter().zip(&g.coeffs) {
                    assert!((x - y).norm() < 1e-10 * (1.0 + f.max_abs()));
                }
            }
        }
    }

    /// Oracle for basis independence: the Jacobian built from the differentials
    /// of the characteristic-polynomial coefficients, by finite differences.
    fn charpoly_jacobian(a: &TwistorSection) -> DMatrix<Complex64> {
        let n = a.n;
        let basis = su_basis(n);
        let dim = basis.len();
        // Characteristic coefficients e_k(X) of A(ζ) + tξ; ζ-coefficients by
        // sampling at roots of unity. d/dt by complex-step-free central difference.
        let charcoef = |x: &ComplexMatrix| -> Vec<Complex64> {
            let ps = lie::power_sums(x);
            let mut p = vec![c(0.0, 0.0); n + 1];
            for (k, &v) in ps.iter().enumerate() {
                p[k + 2] = v;
            }
            let mut e = vec![c(0.0, 0.0); n + 1];
            e[0] = c(1.0, 0.0);
            for k in 1..=n {
                let mut acc = c(0.0, 0.0);
                for i in 1..=k {
                    let sign = if (i - 1) % 2 == 0 { 1.0 } else { -1.0 };
                    acc += e[k - i] * p[i] * sign;
                }
                e[k] = acc / (k as f64);
            }
            e
        };
        let mut m = DMatrix::zeros(dim, dim);
        let h = 1e-5;
        for (col, b) in basis.iter().enumerate() {
            let mut row = 0;
            for k in 2..=n {
                let deg = 2 * (k - 1);
                let pts = deg + 1;
                let vals: Vec<Complex64> = (0..pts)
                    .map(|j| {
                        let z = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / pts as f64);
                        let x = a.eval(z);
                        let up = charcoef(&(&x + rscale(b, h)))[k];
                        let dn = charcoef(&(&x - rscale(b, h)))[k];
                        (up - dn) / (2.0 * h)
                    })
                    .collect();
                for l in 0..pts {
                    let v = (0..pts)
                        .map(|j| vals[j] * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (j * l) as f64 / pts as f64))
                        .sum::<Complex64>()
                        / pts as f64;
                    m[(row, col)] = v;
                    row += 1;
                }
            }
        }
        m
    }

    #[test]
    fn d1_verdict_is_basis_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 0..100 {
            let n = 2 + i % 2;
            let t = if i % 5 == 0 {
                // Commuting triples sit on D1.
                let d = su_basis(n)[0].clone();
                RealTriple::new(rscale(&d, 1.0), rscale(&d, -0.5), rscale(&d, 2.0)).unwrap()
            } else {
                random_triple(&mut rng, n)
            };
            let a = make_section(&t);
            let oracle = p1_ratio_of(&charpoly_jacobian(&a)) <= 1e-6;
            assert_eq!(in_d1(&a, 1e-6), oracle);
        }
    }

    #[test]
    fn p1_nonzero_implies_fibrewise_regular() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in 2..=3 {
            let t = random_triple(&mut rng, n);
            let a = make_section(&t);
            assert!(!in_d1(&a, DEFAULT_TOL));
            for j in 0..50 {
                let z = linalg::complex_gaussian(&mut rng) * 2.0;
                let x = if j == 0 { a.chart_flip().eval(c(0.0, 0.0)) } else { a.eval(z) };
                assert!(lie::is_regular_element(&x));
            }
        }
    }

    #[test]
    fn sl2_p1_proportional_to_p2() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = make_section(&random_triple(&mut rng, 2));
        let k = p1(&a) / p2(&a);
        for _ in 0..100 {
            let a = make_section(&random_triple(&mut rng, 2));
            let (q1, q2) = (p1(&a), p2(&a));
            assert!((q1 - k * q2).norm() < 1e-8 * q1.norm());
        }
    }

    #[test]
    fn quotient_is_conjugation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let t = random_triple(&mut rng, 3);
        let g = random_special_unitary(&mut rng, 3);
        let s = adjoint_quotient(&make_section(&t));
        let sg = adjoint_quotient(&make_section(&t.conjugated(&g)));
        assert!(s.max_distance(&sg) < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn triple_vector_round_trip(seed in 0u64..10_000, n in 2usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_triple(&mut rng, n);
            let back = RealTriple::from_vec(n, &t.to_vec());
            prop_assert!(back.add_scaled(&t, -1.0).norm() < 1e-12);
            let via = make_section(&t).to_triple();
            prop_assert!(via.add_scaled(&t, -1.0).norm() < 1e-12);
        }
    }
}
