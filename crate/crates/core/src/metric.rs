//! The pseudo-hyperkähler structure at a regular twistor line: tangent frames
//! as real solutions of the linearized invariant constraints, the KKS pencil,
//! the three 2-forms, `J₁` and the metric Gram matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{br, tf, SlodowySlice};
use crate::linalg::{self, c, frob, su_basis, ComplexMatrix, RANK_TOL};
use crate::sections::{self, make_section, BinaryForm, RealTriple, TwistorSection, DEFAULT_TOL};

/// Sign `ε` in `ω₁ = ε · c₁ / 2i`, fixed so that the `sl(2)` cone seed carries a
/// positive definite metric. Guarded by a calibration test.
pub const OMEGA1_SIGN: f64 = 1.0;

/// Relative threshold below which an eigenvalue counts as zero.
pub const ZERO_EIG_TOL: f64 = 1e-8;

/// Relative residual allowed in Sylvester solves and pencil fits.
pub const SOLVE_TOL: f64 = 1e-9;
pub const FIT_TOL: f64 = 1e-8;

/// Largest acceptable condition number of the evaluation map at `ζ = 0`.
pub const MAX_E0_CONDITION: f64 = 1e8;

/// Sample points for the pencil fit. Any regular line is regular at every `ζ`,
/// so the choice only affects conditioning.
const FIT_POINTS: [(f64, f64); 5] = [(0.0, 0.0), (0.8, 0.0), (0.0, 0.8), (-0.8, 0.0), (0.0, -0.8)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentFrame {
    pub base: RealTriple,
    pub vectors: Vec<RealTriple>,
}

impl TangentFrame {
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }
}

/// The linearized constraints `Ṫ ↦ (ζ-coefficients of k tr(A^{k-1} Ȧ))` as a
/// real matrix acting on the real coordinates of `Ṫ`.
pub fn constraint_matrix(t: &RealTriple) -> DMatrix<f64> {
    let n = t.n;
    let a = make_section(t);
    let powers = sections::section_powers(&a, n - 1);
    let dim = 3 * (n * n - 1);
    let mut cols = Vec::with_capacity(dim);
    for q in 0..dim {
        let mut e = vec![0.0; dim];
        e[q] = 1.0;
        let dot = make_section(&RealTriple::from_vec(n, &e));
        cols.push(sections::differential_coeffs(&powers, &dot));
    }
    let rows = cols[0].len();
    DMatrix::from_fn(2 * rows, dim, |i, j| if i < rows { cols[j][i].re } else { cols[j][i - rows].im })
}

pub fn expected_frame_dim(n: usize) -> usize {
    2 * (n * n - n)
}

fn require_regular(t: &RealTriple) -> Result<TwistorSection> {
    let a = make_section(t);
    let ratio = sections::p1_ratio(&a);
    if ratio <= DEFAULT_TOL || !a.is_real(DEFAULT_TOL) {
        return Err(Error::NotRegular { p1_ratio: ratio });
    }
    Ok(a)
}

/// Orthonormal (Euclidean in triple coordinates) basis of the tangent space to
/// `M(s)` at a regular twistor line.
pub fn tangent_frame(t: &RealTriple) -> Result<TangentFrame> {
    require_regular(t)?;
    let m = constraint_matrix(t);
    let k = linalg::kernel(&m, RANK_TOL);
    let expected = expected_frame_dim(t.n);
    if k.ncols() != expected {
        return Err(Error::KernelDimension { expected, found: k.ncols() });
    }
    let vectors = (0..k.ncols())
        .map(|j| RealTriple::from_vec(t.n, k.column(j).as_slice()))
        .collect();
    Ok(TangentFrame { base: t.clone(), vectors })
}

fn vec_of(m: &ComplexMatrix) -> DVector<Complex64> {
    DVector::from_iterator(m.len(), m.iter().copied())
}

fn mat_of(v: &DVector<Complex64>, n: usize) -> ComplexMatrix {
    ComplexMatrix::from_iterator(n, n, v.iter().copied())
}

/// Matrix of `X ↦ [X, A]` on `gl(n)` (column-major vectorization).
fn ad_right(a: &ComplexMatrix) -> DMatrix<Complex64> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(n * n, n * n);
    for j in 0..n {
        for i in 0..n {
            let e = linalg::unit(n, i, j);
            let col = vec_of(&br(&e, a));
            m.set_column(j * n + i, &col);
        }
    }
    m
}

/// Minimal-norm `X` with `[X, A(ζ)] = Ȧ(ζ)`.
pub fn vertical_potential(a: &TwistorSection, dot: &TwistorSection, zeta: Complex64) -> Result<ComplexMatrix> {
    let az = a.eval(zeta);
    let rhs = dot.eval(zeta);
    potential_at(&az, &rhs)
}

fn potential_at(az: &ComplexMatrix, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = az.nrows();
    let l = ad_right(az);
    let b = vec_of(rhs);
    let x = linalg::lstsq(&l, &b, RANK_TOL);
    let xm = mat_of(&x, n);
    let bn = frob(rhs);
    if bn == 0.0 {
        return Ok(xm);
    }
    let residual = frob(&(br(&xm, az) - rhs)) / bn;
    if residual > SOLVE_TOL {
        return Err(Error::Unsolvable { residual });
    }
    Ok(xm)
}

/// KKS value `⟨A(ζ), [X(ζ), Y(ζ)]⟩` for vertical vectors `Ȧ(ζ) = [X, A]`,
/// `Ḃ(ζ) = [Y, A]`.
pub fn kks_value(a: &TwistorSection, da: &TwistorSection, db: &TwistorSection, zeta: Complex64) -> Result<Complex64> {
    let x = vertical_potential(a, da, zeta)?;
    let y = vertical_potential(a, db, zeta)?;
    Ok(tf(&a.eval(zeta), &br(&x, &y)))
}

/// Pencil of the KKS form on two tangent vectors, fitted as a quadratic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pencil {
    pub form: BinaryForm,
    pub fit_residual: f64,
}

struct Potentials {
    zs: Vec<Complex64>,
    /// `az[k]` is `A(ζ_k)`; `xs[k][i]` the potential of frame vector `i` at `ζ_k`.
    az: Vec<ComplexMatrix>,
    xs: Vec<Vec<ComplexMatrix>>,
}

fn potentials(a: &TwistorSection, dots: &[TwistorSection], zs: &[Complex64]) -> Result<Potentials> {
    let mut az = Vec::with_capacity(zs.len());
    let mut xs = Vec::with_capacity(zs.len());
    for &z in zs {
        let azk = a.eval(z);
        let n = azk.nrows();
        let l = ad_right(&azk);
        // One SVD per sample point, reused for every frame vector.
        let svd = l.clone().svd(true, true);
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let mut row = Vec::with_capacity(dots.len());
        for d in dots {
            let rhs = d.eval(z);
            let x = svd.solve(&vec_of(&rhs), RANK_TOL * smax).expect("U and V computed");
            let xm = mat_of(&x, n);
            let bn = frob(&rhs);
            if bn > 0.0 {
                let residual = frob(&(br(&xm, &azk) - &rhs)) / bn;
                if residual > SOLVE_TOL {
                    return Err(Error::Unsolvable { residual });
                }
            }
            row.push(xm);
        }
        az.push(azk);
        xs.push(row);
    }
    Ok(Potentials { zs: zs.to_vec(), az, xs })
}

fn fit_points() -> Vec<Complex64> {
    FIT_POINTS.iter().map(|&(x, y)| c(x, y)).collect()
}

/// Least-squares quadratic through `(ζ_k, v_k)` and its relative residual.
/// The residual is measured against `max(max_k |v_k|, floor)`.
fn fit_quadratic(zs: &[Complex64], vals: &[Complex64], floor: f64) -> (Vec<Complex64>, f64) {
    let v = DMatrix::from_fn(zs.len(), 3, |i, j| zs[i].powu(j as u32));
    let b = DVector::from_column_slice(vals);
    let x = linalg::lstsq(&v, &b, 1e-14);
    let r = (&v * &x - &b).camax();
    let s = b.camax().max(floor);
    let rel = if s > 0.0 { r / s } else { 0.0 };
    (x.iter().copied().collect(), rel)
}

pub fn kks_pencil(a: &TwistorSection, da: &TwistorSection, db: &TwistorSection) -> Result<Pencil> {
    let zs = fit_points();
    let p = potentials(a, &[da.clone(), db.clone()], &zs)?;
    let vals: Vec<Complex64> = (0..zs.len()).map(|k| tf(&p.az[k], &br(&p.xs[k][0], &p.xs[k][1]))).collect();
    let floor = bound_floor(&p, 0, 1);
    let (coeffs, r) = fit_quadratic(&zs, &vals, floor);
    if r > FIT_TOL {
        return Err(Error::FitFailure { residual: r });
    }
    Ok(Pencil { form: BinaryForm::new(coeffs), fit_residual: r })
}

/// Scale below which KKS values are indistinguishable from rounding.
fn bound_floor(p: &Potentials, i: usize, j: usize) -> f64 {
    (0..p.zs.len())
        .map(|k| frob(&p.az[k]) * frob(&p.xs[k][i]) * frob(&p.xs[k][j]))
        .fold(0.0, f64::max)
        * 1e-10
}

/// Real-linear evaluation at `ζ = 0`: `Ṫ ↦ Ṫ₂ + iṪ₃` in coordinates
/// `(Re, Im)` of the `su(n)` basis.
fn e0_matrix(frame: &TangentFrame) -> DMatrix<f64> {
    let n = frame.base.n;
    let basis = su_basis(n);
    let dim = basis.len();
    let mut m = DMatrix::zeros(2 * dim, frame.dim());
    for (j, v) in frame.vectors.iter().enumerate() {
        let a0 = &v.t2 + linalg::scale(&v.t3, linalg::I);
        let cs = linalg::coords(&basis, &a0);
        for (i, z) in cs.iter().enumerate() {
            m[(i, j)] = z.re;
            m[(dim + i, j)] = z.im;
        }
    }
    m
}

/// `J₁ = E₀⁻¹ ∘ i ∘ E₀` in frame coordinates.
pub fn complex_structure_j1(frame: &TangentFrame) -> Result<DMatrix<f64>> {
    let e = e0_matrix(frame);
    let cond = linalg::condition(&e);
    if cond > MAX_E0_CONDITION {
        return Err(Error::IllConditioned { condition: cond });
    }
    let half = e.nrows() / 2;
    // multiplication by i on (Re, Im): (x, y) ↦ (-y, x)
    let mut ie = DMatrix::zeros(e.nrows(), e.ncols());
    for j in 0..e.ncols() {
        for i in 0..half {
            ie[(i, j)] = -e[(half + i, j)];
            ie[(half + i, j)] = e[(i, j)];
        }
    }
    let svd = e.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    Ok(svd.solve(&ie, 1e-12 * smax).expect("U and V computed"))
}

pub fn e0_condition(frame: &TangentFrame) -> f64 {
    linalg::condition(&e0_matrix(frame))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub positive: usize,
    pub zero: usize,
    pub negative: usize,
}

impl Signature {
    pub fn of(eigenvalues: &[f64], rel_tol: f64) -> Self {
        let m = eigenvalues.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let thr = rel_tol * m;
        let mut s = Signature { positive: 0, zero: 0, negative: 0 };
        for &x in eigenvalues {
            if m == 0.0 || x.abs() <= thr {
                s.zero += 1;
            } else if x > 0.0 {
                s.positive += 1;
            } else {
                s.negative += 1;
            }
        }
        s
    }

    pub fn reversed(&self) -> Self {
        Signature { positive: self.negative, zero: self.zero, negative: self.positive }
    }

    pub fn is_definite(&self) -> bool {
        self.zero == 0 && (self.positive == 0 || self.negative == 0)
    }

    pub fn is_indefinite(&self) -> bool {
        self.positive > 0 && self.negative > 0
    }

    pub fn as_tuple(&self) -> (usize, usize, usize) {
        (self.positive, self.zero, self.negative)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub zero_eigenvalue: f64,
    pub sylvester: f64,
    pub pencil_fit: f64,
    pub rank: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { zero_eigenvalue: ZERO_EIG_TOL, sylvester: SOLVE_TOL, pencil_fit: FIT_TOL, rank: RANK_TOL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramReport {
    pub dim: usize,
    #[serde(with = "crate::json::real_matrix")]
    pub gram: DMatrix<f64>,
    #[serde(with = "crate::json::real_matrix")]
    pub omega1: DMatrix<f64>,
    #[serde(with = "crate::json::real_matrix")]
    pub omega2: DMatrix<f64>,
    #[serde(with = "crate::json::real_matrix")]
    pub omega3: DMatrix<f64>,
    #[serde(with = "crate::json::real_matrix")]
    pub j1: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub signature: Signature,
    pub p1_ratio: f64,
    pub max_fit_residual: f64,
    pub e0_condition: f64,
    /// `max |Re c₁| / max |Im c₁|` over the frame pairs; zero in exact arithmetic.
    pub omega1_reality: f64,
    pub omega1_sign: f64,
    pub tolerances: Tolerances,
}

/// Metric data for an arbitrary (not necessarily orthonormal) basis of the
/// tangent space at `base`.
pub fn gram_for_frame(frame: &TangentFrame) -> Result<GramReport> {
    let t = &frame.base;
    let a = require_regular(t)?;
    let m = frame.dim();
    let dots: Vec<TwistorSection> = frame.vectors.iter().map(make_section).collect();
    let zs = fit_points();
    let p = potentials(&a, &dots, &zs)?;
    let mut c0 = DMatrix::<Complex64>::zeros(m, m);
    let mut c1 = DMatrix::<Complex64>::zeros(m, m);
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            let vals: Vec<Complex64> = (0..zs.len()).map(|k| tf(&p.az[k], &br(&p.xs[k][i], &p.xs[k][j]))).collect();
            let (q, r) = fit_quadratic(&zs, &vals, bound_floor(&p, i, j));
            worst = worst.max(r);
            c0[(i, j)] = q[0];
            c0[(j, i)] = -q[0];
            c1[(i, j)] = q[1];
            c1[(j, i)] = -q[1];
        }
    }
    if worst > FIT_TOL {
        return Err(Error::FitFailure { residual: worst });
    }
    let omega2 = c0.map(|z| z.re);
    let omega3 = c0.map(|z| z.im);
    // The ζ¹ coefficient of a pencil is purely imaginary on real lines.
    let omega1 = c1.map(|z| z.im * 0.5 * OMEGA1_SIGN);
    let omega1_reality = c1.map(|z| z.re).amax() / c1.map(|z| z.im).amax().max(1e-300);
    let frame_cond = e0_condition(frame);
    let j1 = complex_structure_j1(frame)?;
    let g = &omega1 * &j1;
    let g = (&g + g.transpose()) * 0.5;
    let mut eig: Vec<f64> = SymmetricEigen::new(g.clone()).eigenvalues.iter().copied().collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let signature = Signature::of(&eig, ZERO_EIG_TOL);
    Ok(GramReport {
        dim: m,
        gram: g,
        omega1,
        omega2,
        omega3,
        j1,
        eigenvalues: eig,
        signature,
        p1_ratio: sections::p1_ratio(&a),
        max_fit_residual: worst,
        e0_condition: frame_cond,
        omega1_reality,
        omega1_sign: OMEGA1_SIGN,
        tolerances: Tolerances::default(),
    })
}

pub fn metric_gram(t: &RealTriple) -> Result<GramReport> {
    gram_for_frame(&tangent_frame(t)?)
}

/// Residuals of the hyperkähler identities, all relative to the Gram scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgebraCheck {
    pub gram_symmetry: f64,
    pub omega_antisymmetry: f64,
    pub j1_square: f64,
    pub j1_isometry: f64,
    pub omega1_compatibility: f64,
    pub holomorphic_type: f64,
    pub omega1_reality: f64,
}

impl AlgebraCheck {
    pub fn max(&self) -> f64 {
        [
            self.gram_symmetry,
            self.omega_antisymmetry,
            self.j1_square,
            self.j1_isometry,
            self.omega1_compatibility,
            self.holomorphic_type,
            self.omega1_reality,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn algebra_check(r: &GramReport) -> AlgebraCheck {
    let s = r.gram.amax().max(1e-300);
    let id = DMatrix::<f64>::identity(r.dim, r.dim);
    let j = &r.j1;
    let raw = &r.omega1 * j;
    let oc = r.omega2.map(|x| c(x, 0.0)) + r.omega3.map(|x| c(0.0, x));
    let jc = j.map(|x| c(x, 0.0));
    // ω^c(J₁X, Y) = i ω^c(X, Y)  ⇔  J₁ᵀ Ω^c = i Ω^c
    let hol = (jc.transpose() * &oc - oc.map(|z| z * linalg::I)).camax() / oc.camax().max(1e-300);
    AlgebraCheck {
        gram_symmetry: (&raw - raw.transpose()).amax() / s,
        omega_antisymmetry: [&r.omega1, &r.omega2, &r.omega3]
            .iter()
            .map(|w| (*w + w.transpose()).amax() / w.amax().max(1e-300))
            .fold(0.0, f64::max),
        j1_square: (j * j + &id).amax(),
        j1_isometry: (j.transpose() * &r.gram * j - &r.gram).amax() / s,
        omega1_compatibility: (j.transpose() * &r.gram - &r.omega1).amax() / s,
        holomorphic_type: hol,
        omega1_reality: r.omega1_reality,
    }
}

/// `⟨T₁, [T₂, T₃]⟩`, real for anti-Hermitian arguments.
pub fn null_criterion(t: &RealTriple) -> f64 {
    tf(&t.t1, &br(&t.t2, &t.t3)).re
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub scale: f64,
    pub max_relative_deviation: f64,
    pub signature: Signature,
    pub scaled_signature: Signature,
}

/// Compares the Gram at `λT` on the frame `λv` with `λ` times the Gram at `T`.
pub fn scaling_check(t: &RealTriple, scale: f64) -> Result<ScalingReport> {
    let frame = tangent_frame(t)?;
    let g = gram_for_frame(&frame)?;
    let scaled = TangentFrame {
        base: t.scaled(scale),
        vectors: frame.vectors.iter().map(|v| v.scaled(scale)).collect(),
    };
    let gs = gram_for_frame(&scaled)?;
    let dev = (&gs.gram - &g.gram * scale).amax() / (scale * g.gram.amax());
    Ok(ScalingReport { scale, max_relative_deviation: dev, signature: g.signature, scaled_signature: gs.signature })
}

/// The metric restricted to the orbit of the conjugation action through a
/// line: `Q(ρ, ρ') = g([ρ,T], [ρ',T])` for `ρ` in the `su_basis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitForm {
    #[serde(with = "crate::json::real_matrix")]
    pub form: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Relative distance of the generating vectors from the tangent frame.
    pub tangency_residual: f64,
}

pub fn orbit_form(t: &RealTriple) -> Result<OrbitForm> {
    let frame = tangent_frame(t)?;
    let report = gram_for_frame(&frame)?;
    let f = DMatrix::from_fn(3 * (t.n * t.n - 1), frame.dim(), |i, j| frame.vectors[j].to_vec()[i]);
    let basis = su_basis(t.n);
    let mut ys = Vec::with_capacity(basis.len());
    let mut worst: f64 = 0.0;
    for b in &basis {
        // su_basis elements are anti-Hermitian, so each generates a real flow.
        let v = DVector::from_vec(t.map(|x| br(b, x)).to_vec());
        let y = f.transpose() * &v;
        worst = worst.max((&f * &y - &v).norm() / v.norm().max(1e-300));
        ys.push(y);
    }
    let k = ys.len();
    let form = DMatrix::from_fn(k, k, |i, j| (ys[i].transpose() * &report.gram * &ys[j])[(0, 0)]);
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(form.clone()).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    Ok(OrbitForm { form, eigenvalues, tangency_residual: worst })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub sub_dim: usize,
    #[serde(with = "crate::json::real_matrix")]
    pub gram: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub signature: Signature,
    pub slice_distance: f64,
}

/// Gram restricted to frame vectors whose `ζ = 0` value lies in the slice
/// directions `ker ad_f`.
pub fn slice_restrict(t: &RealTriple, slice: &SlodowySlice) -> Result<SliceReport> {
    let a = make_section(t);
    let dist = slice.distance(&a.a0);
    let scale = 1.0 + frob(&a.a0);
    if dist > 1e-8 * scale {
        return Err(Error::NotOnSlice { residual: dist });
    }
    let frame = tangent_frame(t)?;
    let report = gram_for_frame(&frame)?;
    let n = t.n;
    let basis = su_basis(n);
    let dim = basis.len();
    // Component of Ȧ₀ orthogonal to the slice directions, in (Re, Im) coordinates.
    let kb: Vec<Vec<Complex64>> = slice.kernel_basis.iter().map(|b| linalg::coords(&basis, b)).collect();
    let mut m = DMatrix::<f64>::zeros(2 * dim, frame.dim());
    for (j, v) in frame.vectors.iter().enumerate() {
        let a0 = &v.t2 + linalg::scale(&v.t3, linalg::I);
        let mut x = linalg::coords(&basis, &a0);
        for k in &kb {
            let w: Complex64 = k.iter().zip(&x).map(|(p, q)| p.conj() * q).sum();
            for (xi, ki) in x.iter_mut().zip(k) {
                *xi -= w * ki;
            }
        }
        for (i, z) in x.iter().enumerate() {
            m[(i, j)] = z.re;
            m[(dim + i, j)] = z.im;
        }
    }
    // Threshold relative to the size of the unprojected evaluation map.
    let e0_norm = linalg::singular_values(&e0_matrix(&frame)).first().copied().unwrap_or(0.0);
    let b = linalg::kernel_below(&m, 1e-8 * e0_norm);
    let sub = b.transpose() * &report.gram * &b;
    let sub = (&sub + sub.transpose()) * 0.5;
    let mut eig: Vec<f64> =
        if sub.is_empty() { Vec::new() } else { SymmetricEigen::new(sub.clone()).eigenvalues.iter().copied().collect() };
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let signature = Signature::of(&eig, ZERO_EIG_TOL);
    Ok(SliceReport { sub_dim: b.ncols(), gram: sub, eigenvalues: eig, signature, slice_distance: dist })
}
