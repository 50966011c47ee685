//! The `sl(3)` counterexample to `D₂ ⊆ D₁`: a graded complex witness and a
//! random search for regular real lines on `D₂`, where the metric is forced
//! to be indefinite.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::continuation::random_null_triple;
use crate::error::{Error, Result};
use crate::lie::{br, tf};
use crate::linalg::{self, c, frob, unit, zeros, ComplexMatrix};
use crate::metric::{self, Signature};
use crate::par;
use crate::sections::{self, adjoint_quotient, make_section, InvariantSection, RealTriple, TwistorSection, DEFAULT_TOL};

/// Eigenspaces of `Ad diag(1, ε, ε²)` on `sl(3)`, `ε = e^{2πi/3}`.
#[derive(Debug, Clone)]
pub struct Grading {
    pub v1: Vec<ComplexMatrix>,
    pub v_eps: Vec<ComplexMatrix>,
    pub v_eps2: Vec<ComplexMatrix>,
}

pub fn epsilon() -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0)
}

pub fn epsilon_grading() -> Grading {
    let mut h1 = zeros(3);
    h1[(0, 0)] = c(1.0, 0.0);
    h1[(1, 1)] = c(-1.0, 0.0);
    let mut h2 = zeros(3);
    h2[(1, 1)] = c(1.0, 0.0);
    h2[(2, 2)] = c(-1.0, 0.0);
    Grading {
        v1: vec![h1, h2],
        v_eps: vec![unit(3, 0, 2), unit(3, 1, 0), unit(3, 2, 1)],
        v_eps2: vec![unit(3, 0, 1), unit(3, 1, 2), unit(3, 2, 0)],
    }
}

fn combo<R: Rng + ?Sized>(rng: &mut R, basis: &[ComplexMatrix]) -> ComplexMatrix {
    let mut m = zeros(basis[0].nrows());
    for b in basis {
        m += linalg::scale(b, linalg::complex_gaussian(rng));
    }
    m
}

/// The eight matrices whose traceless parts must be independent:
/// `A₀, A₁, A₂` and the coefficients of `A(ζ)²`.
pub fn witness_coefficients(a: &TwistorSection) -> Vec<ComplexMatrix> {
    let (a0, a1, a2) = (&a.a0, &a.a1, &a.a2);
    vec![
        a0.clone(),
        a1.clone(),
        a2.clone(),
        a0 * a1 + a1 * a0,
        a2 * a1 + a1 * a2,
        a0 * a0,
        a2 * a2,
        a1 * a1 + a0 * a2 + a2 * a0,
    ]
}

/// Rank of the coefficient matrices as functionals `ξ ↦ tr(Mξ)` on `sl(3)`.
pub fn coefficient_rank(a: &TwistorSection) -> usize {
    sections::functional_rank(&witness_coefficients(a), 1e-9)
}

/// A random graded section `A₁ ∈ V₁`, `A₀, A₂ ∈ V₁ ⊕ V_ε`. It lies on `D₂`
/// identically and generically off `D₁`.
pub fn complex_witness<R: Rng + ?Sized>(rng: &mut R) -> Result<TwistorSection> {
    let g = epsilon_grading();
    let outer: Vec<ComplexMatrix> = g.v1.iter().chain(&g.v_eps).cloned().collect();
    let attempts = 16;
    for _ in 0..attempts {
        let a = TwistorSection::new(combo(rng, &outer), combo(rng, &g.v1), combo(rng, &outer));
        if !sections::in_d1(&a, DEFAULT_TOL) {
            return Ok(a);
        }
    }
    Err(Error::Degenerate { attempts })
}

/// A draw without the regularity filter, for statistics.
pub fn graded_draw<R: Rng + ?Sized>(rng: &mut R) -> TwistorSection {
    let g = epsilon_grading();
    let outer: Vec<ComplexMatrix> = g.v1.iter().chain(&g.v_eps).cloned().collect();
    TwistorSection::new(combo(rng, &outer), combo(rng, &g.v1), combo(rng, &outer))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub index: usize,
    pub triple: RealTriple,
    pub null_criterion: f64,
    /// `‖T₁‖ ‖T₂‖ ‖T₃‖`, the scale against which the null value is judged.
    pub scale: f64,
    pub p1_ratio: f64,
    pub signature: Signature,
    pub section: InvariantSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub n: usize,
    pub seed: u64,
    pub samples: usize,
    pub regular: usize,
    pub indefinite: usize,
    pub definite: usize,
    pub p1_tolerance: f64,
    pub zero_eigenvalue_tolerance: f64,
    pub witnesses: Vec<Witness>,
    pub failures: Vec<String>,
}

impl SearchReport {
    pub fn indefinite_rate(&self) -> f64 {
        if self.regular == 0 { 0.0 } else { self.indefinite as f64 / self.regular as f64 }
    }
}

enum Outcome {
    Singular,
    Failed(String),
    Line(Witness),
}

/// Samples real triples on `D₂` and keeps the regular ones. Works for any
/// `n`; for `n = 2` no sample is regular since `D₂ ⊆ D₁` there.
pub fn real_indefinite_search(n: usize, seed: u64, samples: usize) -> SearchReport {
    let outcomes = par::map((0..samples).collect(), |i: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(par::stream_seed(seed, i as u64));
        let t = random_null_triple(&mut rng, n);
        let a = make_section(&t);
        let ratio = sections::p1_ratio(&a);
        if ratio <= DEFAULT_TOL {
            return Outcome::Singular;
        }
        match metric::metric_gram(&t) {
            Ok(g) => Outcome::Line(Witness {
                index: i,
                null_criterion: metric::null_criterion(&t),
                scale: frob(&t.t1) * frob(&t.t2) * frob(&t.t3),
                p1_ratio: ratio,
                signature: g.signature,
                section: adjoint_quotient(&a),
                triple: t,
            }),
            Err(e) => Outcome::Failed(format!("sample {i}: {e}")),
        }
    });
    let mut report = SearchReport {
        n,
        seed,
        samples,
        regular: 0,
        indefinite: 0,
        definite: 0,
        p1_tolerance: DEFAULT_TOL,
        zero_eigenvalue_tolerance: metric::ZERO_EIG_TOL,
        witnesses: Vec::new(),
        failures: Vec::new(),
    };
    for o in outcomes {
        match o {
            Outcome::Singular => {}
            Outcome::Failed(msg) => report.failures.push(msg),
            Outcome::Line(w) => {
                report.regular += 1;
                if w.signature.is_indefinite() {
                    report.indefinite += 1;
                    report.witnesses.push(w);
                } else {
                    report.definite += 1;
                }
            }
        }
    }
    report
}

/// `⟨A₁, [A₀, A₂]⟩` evaluated without the intermediate trace-form helper, for
/// tests of exact vanishing.
pub fn graded_p2(a: &TwistorSection) -> Complex64 {
    tf(&a.a1, &br(&a.a0, &a.a2))
}
