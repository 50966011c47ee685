//! The explicit four-dimensional family of `Z₂` ALE metrics
//!
//! ```text
//! g = (Λ₁Λ₂Λ₃)^{-1/2} (dr² + ¼ r² Σ ΛⱼΛₖ σᵢ²),   Λᵢ = 1 − 16aᵢ/r⁴,
//! ```
//!
//! with its Eguchi–Hanson and flat members, the radial distance to the
//! boundary `r⁴ = 16a₃`, the boundary asymptotics, and a finite-difference
//! curvature check in Euler-angle coordinates.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Parameters `0 ≤ a₁ ≤ a₂ ≤ a₃`, sorted on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ALEParams {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl ALEParams {
    pub fn new(a1: f64, a2: f64, a3: f64) -> Result<Self> {
        let mut a = [a1, a2, a3];
        for &x in &a {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::InvalidParameter { what: "ALE parameter", value: x });
            }
        }
        a.sort_by(f64::total_cmp);
        Ok(Self { a1: a[0], a2: a[1], a3: a[2] })
    }

    pub fn flat() -> Self {
        Self { a1: 0.0, a2: 0.0, a3: 0.0 }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.a1, self.a2, self.a3]
    }

    /// `r* = (16 a₃)^{1/4}`.
    pub fn boundary_radius(&self) -> f64 {
        (16.0 * self.a3).powf(0.25)
    }

    pub fn lambdas(&self, r: f64) -> [f64; 3] {
        let r4 = r.powi(4);
        self.as_array().map(|a| 1.0 - 16.0 * a / r4)
    }

    pub fn is_eguchi_hanson(&self) -> bool {
        self.a1 == 0.0 && self.a2 == self.a3 && self.a3 > 0.0
    }
}

/// Coefficients in the coframe `(dr, σ₁, σ₂, σ₃)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ALEMetricSample {
    pub r: f64,
    pub g_rr: f64,
    pub g_11: f64,
    pub g_22: f64,
    pub g_33: f64,
}

impl ALEMetricSample {
    pub fn angular(&self) -> [f64; 3] {
        [self.g_11, self.g_22, self.g_33]
    }
}

/// The metric from precomputed `Λᵢ`, for callers that know them more
/// accurately than `1 − 16aᵢ/r⁴` near the boundary.
pub fn coeffs_from_lambdas(r: f64, l: [f64; 3]) -> ALEMetricSample {
    let f = 1.0 / (l[0] * l[1] * l[2]).sqrt();
    let q = 0.25 * r * r * f;
    ALEMetricSample { r, g_rr: f, g_11: q * l[1] * l[2], g_22: q * l[2] * l[0], g_33: q * l[0] * l[1] }
}

pub fn metric_coeffs(a: &ALEParams, r: f64) -> Result<ALEMetricSample> {
    let boundary = a.boundary_radius();
    if !(r > boundary) {
        return Err(Error::Domain { r, boundary });
    }
    Ok(coeffs_from_lambdas(r, a.lambdas(r)))
}

/// Closed-form Eguchi–Hanson coefficients `(Λ⁻¹, ¼r²Λ, ¼r², ¼r²)`.
pub fn eguchi_hanson(a: f64, r: f64) -> ALEMetricSample {
    let l = 1.0 - 16.0 * a / r.powi(4);
    let q = 0.25 * r * r;
    ALEMetricSample { r, g_rr: 1.0 / l, g_11: q * l, g_22: q, g_33: q }
}

/// `(Λ₁Λ₂Λ₃)^{-1/4}`, the speed of the radial geodesic.
pub fn distance_integrand(a: &ALEParams, r: f64) -> f64 {
    let l = a.lambdas(r);
    (l[0] * l[1] * l[2]).powf(-0.25)
}

fn simpson_rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let h = b - a;
    let left = h / 12.0 * (fa + 4.0 * flm + fm);
    let right = h / 12.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson with Richardson correction over `panels` equal pieces.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let panels = 16;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let (x0, x1) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            let (f0, fm, f1) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
            let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
            simpson_rec(&f, x0, x1, f0, fm, f1, whole, tol / panels as f64, 48)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub radius: f64,
    pub boundary: f64,
    /// Value at the fine tolerance.
    pub distance: f64,
    pub coarse: f64,
    /// `|fine − coarse|`: the Cauchy gap between the two refinements.
    pub cauchy_gap: f64,
}

pub const DISTANCE_TOL: f64 = 1e-11;

fn distance_at(a: &ALEParams, radius: f64, tol: f64) -> f64 {
    let rs = a.boundary_radius();
    if a.a3 == 0.0 {
        return radius;
    }
    let at = a.as_array();
    // r = r* + v⁴ turns each (r − r*)^{-1/4} into 1/v, cancelled by dr = 4v³dv.
    let integrand = |v: f64| {
        let v4 = v.powi(4);
        let r = rs + v4;
        let r4 = r.powi(4);
        let mut prod = 1.0;
        let mut cancelled = 0;
        for &ai in &at {
            if ai == a.a3 {
                prod *= (r + rs) * (r * r + rs * rs) / r4;
                cancelled += 1;
            } else {
                prod *= 1.0 - 16.0 * ai / r4;
            }
        }
        4.0 * v.powi(3 - cancelled) * prod.powf(-0.25)
    };
    let top = (radius - rs).powf(0.25);
    adaptive_simpson(integrand, 0.0, top, tol * radius.max(1.0))
}

/// `∫_{r*}^{R} (Λ₁Λ₂Λ₃)^{-1/4} dr`, or `R` for the flat cone.
pub fn boundary_distance(a: &ALEParams, radius: f64) -> Result<DistanceReport> {
    boundary_distance_tol(a, radius, DISTANCE_TOL)
}

pub fn boundary_distance_tol(a: &ALEParams, radius: f64, tol: f64) -> Result<DistanceReport> {
    let boundary = a.boundary_radius();
    if !(radius >= boundary) || !radius.is_finite() {
        return Err(Error::Domain { r: radius, boundary });
    }
    let distance = distance_at(a, radius, tol);
    let coarse = distance_at(a, radius, 100.0 * tol);
    Ok(DistanceReport { radius, boundary, distance, coarse, cauchy_gap: (distance - coarse).abs() })
}

/// Exact and model coefficients at one `ρ`, in the order
/// `(dρ², σ₁², σ₂², σ₃²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoSample {
    pub rho: f64,
    pub r: f64,
    /// `√(2/(3a₃))` times the exact coefficients.
    pub scaled: [f64; 4],
    /// `(ρ^{5/2}, ⅔ρ^{3/2}, ⅔ρ^{3/2}, ρ^{-3/2})`.
    pub model: [f64; 4],
    pub ratios: [f64; 4],
    /// Ratios of `√(3a₃/2)·g` to `(1, ⅔ρ^{3/2}, ⅔ρ^{3/2}, ρ^{-3/2})`.
    pub literal_ratios: [f64; 4],
}

impl RhoSample {
    pub fn max_deviation(&self) -> f64 {
        self.ratios.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoReport {
    pub a3: f64,
    pub samples: Vec<RhoSample>,
}

/// Boundary behaviour of the `a₁ = a₂ = 0` member in the variable
/// `r⁴ = 16a₃(1 + ⅔ρ³)`. `Λ₃ = ⅔ρ³/(1 + ⅔ρ³)` is used directly since
/// `1 − 16a₃/r⁴` cancels catastrophically for small `ρ`.
pub fn rho_asymptotics(a3: f64, rhos: &[f64]) -> Result<RhoReport> {
    if !(a3 > 0.0 && a3.is_finite()) {
        return Err(Error::InvalidParameter { what: "a3", value: a3 });
    }
    let samples = rhos
        .iter()
        .map(|&rho| {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(Error::InvalidParameter { what: "rho", value: rho });
            }
            let q = 1.0 + 2.0 / 3.0 * rho.powi(3);
            let r = (16.0 * a3 * q).powf(0.25);
            let l3 = (2.0 / 3.0 * rho.powi(3)) / q;
            let g = coeffs_from_lambdas(r, [1.0, 1.0, l3]);
            // dr/dρ = 8a₃ρ²/r³
            let drho = 8.0 * a3 * rho * rho / r.powi(3);
            let exact = [g.g_rr * drho * drho, g.g_11, g.g_22, g.g_33];
            let k = (2.0 / (3.0 * a3)).sqrt();
            let scaled = exact.map(|x| k * x);
            let s = 2.0 / 3.0 * rho.powf(1.5);
            let model = [rho.powf(2.5), s, s, rho.powf(-1.5)];
            let literal_model = [1.0, s, s, rho.powf(-1.5)];
            let kl = (1.5 * a3).sqrt();
            Ok(RhoSample {
                rho,
                r,
                scaled,
                model,
                ratios: std::array::from_fn(|i| scaled[i] / model[i]),
                literal_ratios: std::array::from_fn(|i| kl * exact[i] / literal_model[i]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RhoReport { a3, samples })
}

/// Left-invariant coframe on `SU(2)` in Euler angles `(θ, φ, ψ)`; row `i`
/// holds the components of `σᵢ` along `(dθ, dφ, dψ)`. Satisfies
/// `dσᵢ = −σⱼ∧σₖ`.
pub fn coframe(theta: f64, psi: f64) -> Matrix3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    Matrix3::new(sp, -cp * st, 0.0, cp, sp * st, 0.0, 0.0, ct, 1.0)
}

/// `max |dσᵢ + σⱼ∧σₖ|` at an angle point, with `d` by central differences.
pub fn coframe_defect(angles: [f64; 3], h: f64) -> f64 {
    let sigma = |x: [f64; 3]| coframe(x[0], x[2]);
    let s0 = sigma(angles);
    let mut ds = [Matrix3::zeros(); 3];
    for (c, d) in ds.iter_mut().enumerate() {
        let (mut p, mut m) = (angles, angles);
        p[c] += h;
        m[c] -= h;
        *d = (sigma(p) - sigma(m)) / (2.0 * h);
    }
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        for a in 0..3 {
            for b in 0..3 {
                let d_sigma = ds[a][(i, b)] - ds[b][(i, a)];
                let wedge = s0[(j, a)] * s0[(k, b)] - s0[(j, b)] * s0[(k, a)];
                worst = worst.max((d_sigma + wedge).abs());
            }
        }
    }
    worst
}

/// Coordinate metric in `(r, θ, φ, ψ)`.
pub fn coordinate_metric(a: &ALEParams, x: [f64; 4]) -> Result<Matrix4<f64>> {
    let s = metric_coeffs(a, x[0])?;
    let e = coframe(x[1], x[3]);
    let ang = e.transpose() * Matrix3::from_diagonal(&Vector3::from(s.angular())) * e;
    let mut g = Matrix4::zeros();
    g[(0, 0)] = s.g_rr;
    g.fixed_view_mut::<3, 3>(1, 1).copy_from(&ang);
    Ok(g)
}

/// First and second partial derivatives of the metric at one point.
#[derive(Clone)]
struct Jet {
    d1: [Matrix4<f64>; 4],
    d2: [[Matrix4<f64>; 4]; 4],
}

impl Jet {
    fn combine(&self, other: &Jet, wa: f64, wb: f64) -> Jet {
        Jet {
            d1: std::array::from_fn(|c| self.d1[c] * wa + other.d1[c] * wb),
            d2: std::array::from_fn(|c| std::array::from_fn(|d| self.d2[c][d] * wa + other.d2[c][d] * wb)),
        }
    }

    fn norms(&self) -> (f64, f64) {
        let n1 = self.d1.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
        let n2 = self.d2.iter().flatten().map(|m| m.norm_squared()).sum::<f64>().sqrt();
        (n1, n2)
    }
}

fn jet<F: Fn([f64; 4]) -> Result<Matrix4<f64>>>(metric: &F, x: [f64; 4], h: [f64; 4], g0: &Matrix4<f64>) -> Result<Jet> {
    let at = |shift: &[(usize, f64)]| {
        let mut y = x;
        for &(c, s) in shift {
            y[c] += s * h[c];
        }
        metric(y)
    };
    let mut d1 = [Matrix4::zeros(); 4];
    let mut d2 = [[Matrix4::zeros(); 4]; 4];
    for c in 0..4 {
        let (p, m) = (at(&[(c, 1.0)])?, at(&[(c, -1.0)])?);
        d1[c] = (p - m) / (2.0 * h[c]);
        d2[c][c] = (p - g0 * 2.0 + m) / (h[c] * h[c]);
        for d in 0..c {
            let v = (at(&[(c, 1.0), (d, 1.0)])? - at(&[(c, 1.0), (d, -1.0)])? - at(&[(c, -1.0), (d, 1.0)])?
                + at(&[(c, -1.0), (d, -1.0)])?)
                / (4.0 * h[c] * h[d]);
            d2[c][d] = v;
            d2[d][c] = v;
        }
    }
    Ok(Jet { d1, d2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RicciReport {
    pub params: ALEParams,
    pub point: [f64; 4],
    pub step: f64,
    pub ricci_norm: f64,
    pub riemann_norm: f64,
    /// `‖Ric‖/‖Rm‖`, or `0` when both vanish.
    pub relative: f64,
    /// Relative disagreement of the derivative estimates at steps `h` and `h/2`.
    pub richardson_gap: f64,
    pub ricci: [[f64; 4]; 4],
}

pub const DEFAULT_FD_STEP: f64 = 1e-4;
/// Richardson gaps above this mean the step does not resolve the metric.
pub const MAX_RICHARDSON_GAP: f64 = 1e-3;

/// Curvature from central differences of the coordinate metric, with one
/// Richardson extrapolation (`h`, `h/2`). The radial step is `step·r`, the
/// angular steps are `step`.
pub fn ricci_fd(a: &ALEParams, point: [f64; 4], step: f64) -> Result<RicciReport> {
    let c = curvature(|x| coordinate_metric(a, x), point, step)?;
    let relative = if c.riemann_norm > 0.0 { c.ricci_norm / c.riemann_norm } else { 0.0 };
    Ok(RicciReport {
        params: *a,
        point,
        step,
        ricci_norm: c.ricci_norm,
        riemann_norm: c.riemann_norm,
        relative,
        richardson_gap: c.gap,
        ricci: c.ricci,
    })
}

struct Curvature {
    ricci_norm: f64,
    riemann_norm: f64,
    gap: f64,
    ricci: [[f64; 4]; 4],
}

fn curvature<F: Fn([f64; 4]) -> Result<Matrix4<f64>>>(metric: F, point: [f64; 4], step: f64) -> Result<Curvature> {
    let g = metric(point)?;
    let h = [step * point[0], step, step, step];
    let coarse = jet(&metric, point, h, &g)?;
    let fine = jet(&metric, point, h.map(|x| 0.5 * x), &g)?;
    let (c1, c2) = coarse.norms();
    let (f1, f2) = fine.norms();
    let diff = coarse.combine(&fine, 1.0, -1.0).norms();
    let gap = (diff.0 / f1.max(f64::MIN_POSITIVE)).max(diff.1 / f2.max(f64::MIN_POSITIVE));
    if !(gap <= MAX_RICHARDSON_GAP) || !(c1 + c2).is_finite() {
        return Err(Error::StepTooLarge { gap });
    }
    let j = fine.combine(&coarse, 4.0 / 3.0, -1.0 / 3.0);
    let gi = g.try_inverse().ok_or(Error::StepTooLarge { gap: f64::INFINITY })?;

    // ∂_e g^{-1} = −g^{-1} (∂_e g) g^{-1}
    let dgi: [Matrix4<f64>; 4] = std::array::from_fn(|e| -(gi * j.d1[e] * gi));
    // Γ^a_{bc} and ∂_e Γ^a_{bc}
    let mut gam = [[[0.0; 4]; 4]; 4];
    let mut dgam = [[[[0.0; 4]; 4]; 4]; 4];
    for a_ in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                let mut s = 0.0;
                for d in 0..4 {
                    s += gi[(a_, d)] * (j.d1[b][(d, c)] + j.d1[c][(d, b)] - j.d1[d][(b, c)]);
                }
                gam[a_][b][c] = 0.5 * s;
                for e in 0..4 {
                    let mut s = 0.0;
                    for d in 0..4 {
                        let low = j.d1[b][(d, c)] + j.d1[c][(d, b)] - j.d1[d][(b, c)];
                        let dlow = j.d2[e][b][(d, c)] + j.d2[e][c][(d, b)] - j.d2[e][d][(b, c)];
                        s += dgi[e][(a_, d)] * low + gi[(a_, d)] * dlow;
                    }
                    dgam[e][a_][b][c] = 0.5 * s;
                }
            }
        }
    }
    // R^a_{bcd} = ∂_c Γ^a_{db} − ∂_d Γ^a_{cb} + Γ^a_{ce}Γ^e_{db} − Γ^a_{de}Γ^e_{cb}
    let mut riem = [[[[0.0; 4]; 4]; 4]; 4];
    for a_ in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let mut s = dgam[c][a_][d][b] - dgam[d][a_][c][b];
                    for e in 0..4 {
                        s += gam[a_][c][e] * gam[e][d][b] - gam[a_][d][e] * gam[e][c][b];
                    }
                    riem[a_][b][c][d] = s;
                }
            }
        }
    }
    let mut ric = [[0.0; 4]; 4];
    for b in 0..4 {
        for d in 0..4 {
            ric[b][d] = (0..4).map(|a_| riem[a_][b][a_][d]).sum();
        }
    }
    // Norms through an orthonormal coframe: with g = LLᵀ, Ê = L⁻¹ maps
    // coordinate components to frame components.
    let l = g.cholesky().ok_or(Error::StepTooLarge { gap: f64::INFINITY })?.l();
    let e = l.try_inverse().ok_or(Error::StepTooLarge { gap: f64::INFINITY })?;
    let et = e.transpose();
    // all-lower Riemann
    let mut low = [[[[0.0; 4]; 4]; 4]; 4];
    for a_ in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    low[a_][b][c][d] = (0..4).map(|x| g[(a_, x)] * riem[x][b][c][d]).sum();
                }
            }
        }
    }
    let frame4 = |t: &[[[[f64; 4]; 4]; 4]; 4]| {
        let mut t = *t;
        for slot in 0..4 {
            let mut u = [[[[0.0; 4]; 4]; 4]; 4];
            for i0 in 0..4 {
                for i1 in 0..4 {
                    for i2 in 0..4 {
                        for i3 in 0..4 {
                            let idx = [i0, i1, i2, i3];
                            let mut s = 0.0;
                            for k in 0..4 {
                                let mut jdx = idx;
                                jdx[slot] = k;
                                s += et[(k, idx[slot])] * t[jdx[0]][jdx[1]][jdx[2]][jdx[3]];
                            }
                            u[i0][i1][i2][i3] = s;
                        }
                    }
                }
            }
            t = u;
        }
        t.iter().flatten().flatten().flatten().map(|x| x * x).sum::<f64>().sqrt()
    };
    let riemann_norm = frame4(&low);
    let ricci_norm = (e * Matrix4::from_fn(|i, k| ric[i][k]) * et).norm();
    Ok(Curvature { ricci_norm, riemann_norm, gap, ricci: ric })
}

/// Least-squares match of orbit-restricted metric eigenvalues against the
/// family, normalized to `a₁ = 0`, `a₃ = 1`. One overall scale `c` and one
/// parameter `a₂` are shared by all points; each point has its own radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitFit {
    pub scale: f64,
    pub params: ALEParams,
    pub radii: Vec<f64>,
    /// Largest `|model/observed − 1|`.
    pub residual: f64,
    pub iterations: usize,
}

fn orbit_model(c: f64, a2: f64, r: f64) -> [f64; 3] {
    let r4 = r.powi(4);
    coeffs_from_lambdas(r, [1.0, 1.0 - 16.0 * a2 / r4, 1.0 - 16.0 / r4]).angular().map(|x| c * x)
}

fn orbit_residuals(p: &[f64], eigs: &[[f64; 3]]) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 * eigs.len());
    for (k, e) in eigs.iter().enumerate() {
        let m = orbit_model(p[0], p[1], p[2 + k]);
        out.extend((0..3).map(|i| m[i] / e[i] - 1.0));
    }
    out
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `eigs[k]` are the ascending eigenvalues at point `k`; all must be positive.
pub fn fit_orbit_eigenvalues(eigs: &[[f64; 3]]) -> Result<OrbitFit> {
    if eigs.is_empty() || eigs.iter().flatten().any(|&x| !(x > 0.0)) {
        return Err(Error::FitFailure { residual: f64::INFINITY });
    }
    // Each point alone is matched exactly: Λ₃ = λ₁/λ₃, Λ₂ = λ₁/λ₂.
    let k = eigs.len();
    let mut p = vec![0.0; 2 + k];
    let mut a_sum = 0.0;
    for (j, e) in eigs.iter().enumerate() {
        let l3 = (e[0] / e[2]).min(1.0 - 1e-12);
        let l2 = e[0] / e[1];
        let r = (16.0 / (1.0 - l3)).powf(0.25);
        p[2 + j] = r;
        a_sum += ((1.0 - l2) / (1.0 - l3)).clamp(0.0, 1.0);
    }
    p[1] = a_sum / k as f64;
    let m: f64 = eigs.iter().enumerate().map(|(j, e)| e[0] / orbit_model(1.0, p[1], p[2 + j])[0]).sum();
    p[0] = m / k as f64;
    let mut res = orbit_residuals(&p, eigs);
    let mut cost = res.iter().map(|x| x * x).sum::<f64>();
    let mut iterations = 0;
    for _ in 0..100 {
        iterations += 1;
        let n = p.len();
        let mut jac = nalgebra::DMatrix::zeros(res.len(), n);
        for q in 0..n {
            let h = 1e-7 * p[q].abs().max(1e-3);
            let (mut pp, mut pm) = (p.clone(), p.clone());
            pp[q] += h;
            pm[q] -= h;
            let (rp, rm) = (orbit_residuals(&pp, eigs), orbit_residuals(&pm, eigs));
            for i in 0..res.len() {
                jac[(i, q)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let rhs = -nalgebra::DVector::from_vec(res.clone());
        let step = crate::linalg::lstsq(&jac, &rhs, 1e-12);
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, d)| x + lambda * d).collect();
            let ok = trial[0] > 0.0 && (0.0..=1.0).contains(&trial[1]) && trial[2..].iter().all(|&r| r > 2.0);
            if ok {
                let r = orbit_residuals(&trial, eigs);
                let c = r.iter().map(|x| x * x).sum::<f64>();
                if c < cost {
                    p = trial;
                    res = r;
                    improved = cost - c > 1e-30 + 1e-14 * cost;
                    cost = c;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(OrbitFit {
        scale: p[0],
        params: ALEParams { a1: 0.0, a2: p[1], a3: 1.0 },
        radii: p[2..].to_vec(),
        residual: max_abs(&res),
        iterations,
    })
}

pub const CSV_HEADER: &str = "r,g_rr,g_11,g_22,g_33,integrand,cumulative_distance";

/// One CSV row per radius `r* + (rmax − r*)k/grid`, `k = 1..=grid`.
pub fn grid_csv(a: &ALEParams, rmax: f64, grid: usize) -> Result<String> {
    let rs = a.boundary_radius();
    if !(rmax > rs) || !rmax.is_finite() {
        return Err(Error::Domain { r: rmax, boundary: rs });
    }
    if grid == 0 {
        return Err(Error::OutOfRange { what: "grid", value: 0 });
    }
    let radii: Vec<f64> = (1..=grid).map(|k| rs + (rmax - rs) * k as f64 / grid as f64).collect();
    let rows = par::map(radii, |r| -> Result<String> {
        let s = metric_coeffs(a, r)?;
        let d = boundary_distance(a, r)?;
        Ok(format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r,
            s.g_rr,
            s.g_11,
            s.g_22,
            s.g_33,
            distance_integrand(a, r),
            d.distance
        ))
    });
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row?);
        out.push('\n');
    }
    Ok(out)
}
