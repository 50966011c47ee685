//! Continuation of twistor lines from the cone to a prescribed invariant
//! section, and an empirical census of the components of a fibre `M(s)`.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{br, principal_sl2, tf};
use crate::linalg::{self, random_special_unitary, random_su, rscale};
use crate::metric::{self, Signature};
use crate::par;
use crate::sections::{self, adjoint_quotient, make_section, InvariantSection, RealTriple, TwistorSection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    /// Form of degree `2k` scaled by `t^k`.
    Weighted,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationConfig {
    pub steps: usize,
    /// Absolute residual tolerance, multiplied by `max(1, |target|)`.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    /// Abort threshold on the normalized `|p₁|`.
    pub min_p1: f64,
    pub path: PathKind,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self { steps: 32, newton_tol: 1e-12, max_newton_iters: 40, min_p1: 1e-7, path: PathKind::Weighted }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::OutOfRange { what: "steps", value: self.steps as i64 });
        }
        if !(self.newton_tol > 0.0 && self.min_p1 > 0.0) {
            return Err(Error::OutOfRange { what: "tolerance", value: 0 });
        }
        Ok(())
    }
}

/// The line `A(ζ) = e - hζ - e^†ζ²` of the principal sl(2)-triple.
pub fn cone_seed(n: usize) -> Result<RealTriple> {
    let t = principal_sl2(n)?;
    Ok(TwistorSection::new(t.e.clone(), -t.h.clone(), -t.f.clone()).to_triple())
}

fn stacked(s: &InvariantSection) -> DVector<f64> {
    let flat = s.flat();
    let r = flat.len();
    DVector::from_fn(2 * r, |i, _| if i < r { flat[i].re } else { flat[i - r].im })
}

fn residual_of(t: &RealTriple, target: &InvariantSection) -> DVector<f64> {
    stacked(&adjoint_quotient(&make_section(t))) - stacked(target)
}

/// Outcome of a Gauss–Newton projection onto a fibre.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub triple: RealTriple,
    pub residual: f64,
    pub iterations: usize,
}

/// Gauss–Newton with minimal-norm steps and backtracking; every accepted step
/// strictly reduces the residual norm.
pub fn project_to_fiber(start: &RealTriple, target: &InvariantSection, cfg: &ContinuationConfig) -> Result<Projection> {
    let tol = cfg.newton_tol * target.max_abs().max(1.0);
    let mut t = start.clone();
    let mut f = residual_of(&t, target);
    let mut norm = f.norm();
    for it in 0..cfg.max_newton_iters {
        if f.amax() <= tol {
            return Ok(Projection { triple: t, residual: f.amax(), iterations: it });
        }
        let j = metric::constraint_matrix(&t);
        let step = linalg::lstsq(&j, &(-&f), 1e-12);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let cand = t.add_scaled(&RealTriple::from_vec(t.n, step.as_slice()), alpha);
            let fc = residual_of(&cand, target);
            let nc = fc.norm();
            if nc < norm {
                t = cand;
                f = fc;
                norm = nc;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if f.amax() <= tol {
        let r = f.amax();
        return Ok(Projection { triple: t, residual: r, iterations: cfg.max_newton_iters });
    }
    Err(Error::NoConvergence { t: f64::NAN, residual: f.amax() })
}

fn path_point(kind: PathKind, from: &InvariantSection, to: &InvariantSection, t: f64) -> InvariantSection {
    match kind {
        PathKind::Linear => from.lerp(to, t),
        PathKind::Weighted => {
            let a = from.weighted(1.0 - t);
            let b = to.weighted(t);
            a.lerp(&b, 0.5).scaled(2.0)
        }
    }
}

/// One point of a traced path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub t: f64,
    pub p1_ratio: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationResult {
    pub triple: RealTriple,
    pub residual: f64,
    pub path: Vec<PathSample>,
}

/// Follows the seed from `π(seed)` to `target` along the configured path.
///
/// Steps that fail to converge are bisected (at most six times). The path is
/// declared singular when the normalized `|p₁|` drops below `min_p1` or when
/// `p₁` changes sign between consecutive accepted points.
pub fn continue_line(seed: &RealTriple, target: &InvariantSection, cfg: &ContinuationConfig) -> Result<ContinuationResult> {
    cfg.validate()?;
    if target.n != seed.n {
        return Err(Error::DimensionMismatch { expected: seed.n, found: target.n });
    }
    if !target.is_real(1e-9) {
        return Err(Error::InvalidTriple("target section is not real".into()));
    }
    let a = make_section(seed);
    let ratio0 = sections::p1_ratio(&a);
    if ratio0 <= cfg.min_p1 {
        return Err(Error::NotRegular { p1_ratio: ratio0 });
    }
    let start = adjoint_quotient(&a);
    let mut t_cur = 0.0;
    let mut tri = seed.clone();
    let mut p1_prev = sections::p1(&a);
    let mut path = vec![PathSample { t: 0.0, p1_ratio: ratio0, residual: 0.0 }];
    let base = 1.0 / cfg.steps as f64;
    let mut h = base;
    let mut halvings = 0;
    let mut final_residual = 0.0;
    while t_cur < 1.0 {
        let t_next = (t_cur + h).min(1.0);
        let goal = path_point(cfg.path, &start, target, t_next);
        match project_to_fiber(&tri, &goal, cfg) {
            Ok(p) => {
                let sec = make_section(&p.triple);
                let j = sections::jacobian(&sec);
                let p1v: Complex64 = j.determinant();
                let ratio = sections::p1_ratio_of(&j);
                if ratio <= cfg.min_p1 || (p1v * p1_prev.conj()).re < 0.0 {
                    return Err(Error::PathSingular { t: t_next, p1_ratio: ratio });
                }
                p1_prev = p1v;
                tri = p.triple;
                t_cur = t_next;
                final_residual = p.residual;
                path.push(PathSample { t: t_cur, p1_ratio: ratio, residual: p.residual });
                if halvings > 0 {
                    halvings -= 1;
                    h = (h * 2.0).min(base);
                }
            }
            Err(Error::NoConvergence { residual, .. }) => {
                if halvings >= 6 {
                    return Err(Error::NoConvergence { t: t_next, residual });
                }
                halvings += 1;
                h *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ContinuationResult { triple: tri, residual: final_residual, path })
}

/// `π(size · T)` for a random triple `T`; real and in the image by construction.
pub fn random_real_section<R: Rng + ?Sized>(rng: &mut R, n: usize, size: f64) -> InvariantSection {
    let t = random_triple(rng, n);
    adjoint_quotient(&make_section(&t.scaled(size)))
}

pub fn random_triple<R: Rng + ?Sized>(rng: &mut R, n: usize) -> RealTriple {
    RealTriple { n, t1: random_su(rng, n), t2: random_su(rng, n), t3: random_su(rng, n) }
}

/// Random triple on `D₂`: `T₂`, `T₃` free, `T₁` orthogonal to `[T₂, T₃]`.
pub fn random_null_triple<R: Rng + ?Sized>(rng: &mut R, n: usize) -> RealTriple {
    let t2 = random_su(rng, n);
    let t3 = random_su(rng, n);
    let k = br(&t2, &t3);
    let mut t1 = random_su(rng, n);
    let kk = tf(&k, &k).re;
    if kk.abs() > 0.0 {
        let w = tf(&t1, &k).re / kk;
        t1 -= rscale(&k, w);
    }
    RealTriple { n, t1, t2, t3 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Conjugated cone seed, continued along the configured path.
    ConeSeed,
    /// Negated, conjugated cone seed.
    NegatedConeSeed,
    /// A random line on `D₂`, rescaled and moved to the target linearly.
    NullSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    DefinitePositive,
    DefiniteNegative,
    Indefinite,
    Unknown,
}

impl Class {
    pub fn of(sig: &Signature) -> Self {
        if sig.zero > 0 {
            Class::Unknown
        } else if sig.negative == 0 {
            Class::DefinitePositive
        } else if sig.positive == 0 {
            Class::DefiniteNegative
        } else {
            Class::Indefinite
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub strategy: Strategy,
    pub class: Class,
    pub signature: Option<Signature>,
    pub residual: Option<f64>,
    pub p1_ratio: Option<f64>,
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub triple: Option<RealTriple>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub definite_positive: usize,
    pub definite_negative: usize,
    pub indefinite: usize,
    pub unknown: usize,
}

impl ClassCounts {
    fn add(&mut self, c: Class) {
        match c {
            Class::DefinitePositive => self.definite_positive += 1,
            Class::DefiniteNegative => self.definite_negative += 1,
            Class::Indefinite => self.indefinite += 1,
            Class::Unknown => self.unknown += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub n: usize,
    pub seed: u64,
    pub target: InvariantSection,
    pub counts: ClassCounts,
    pub samples: Vec<SampleRecord>,
    /// One representative line per non-empty class.
    pub representatives: Vec<SampleRecord>,
    /// Pairs of sample indices joined by a regular path inside the fibre.
    pub edges: Vec<(usize, usize)>,
    pub failures: Vec<String>,
}

/// Fresh `D₂` starting lines tried per null sample.
pub const NULL_ATTEMPTS: usize = 6;

fn sample_line(
    index: usize,
    target: &InvariantSection,
    seed: u64,
    cfg: &ContinuationConfig,
) -> (SampleRecord, Option<RealTriple>) {
    let n = target.n;
    let mut rng = ChaCha8Rng::seed_from_u64(par::stream_seed(seed, index as u64));
    let strategy = match index % 4 {
        0 | 2 => Strategy::ConeSeed,
        1 => Strategy::NullSample,
        _ => Strategy::NegatedConeSeed,
    };
    let outcome: Result<RealTriple> = match strategy {
        Strategy::ConeSeed | Strategy::NegatedConeSeed => (|| {
            let g = random_special_unitary(&mut rng, n);
            let mut s = cone_seed(n)?.conjugated(&g);
            if strategy == Strategy::NegatedConeSeed {
                s = s.negated();
            }
            Ok(continue_line(&s, target, cfg)?.triple)
        })(),
        Strategy::NullSample => {
            // Linear paths from D₂ often meet D₁; a few fresh draws are cheap.
            let c = ContinuationConfig { path: PathKind::Linear, ..*cfg };
            let mut last = Err(Error::Degenerate { attempts: 0 });
            for _ in 0..NULL_ATTEMPTS {
                let t = random_null_triple(&mut rng, n);
                // Match the size of the quartic invariant to the target's.
                let q = adjoint_quotient(&make_section(&t)).max_abs();
                let goal = target.max_abs();
                let lam = if q > 0.0 && goal > 0.0 { (goal / q).sqrt() } else { 1.0 };
                last = continue_line(&t.scaled(lam), target, &c).map(|r| r.triple);
                if last.is_ok() {
                    break;
                }
            }
            last
        }
    };
    match outcome {
        Ok(t) => {
            let a = make_section(&t);
            let ratio = sections::p1_ratio(&a);
            let residual = residual_of(&t, target).amax();
            match metric::metric_gram(&t) {
                Ok(g) => (
                    SampleRecord {
                        index,
                        strategy,
                        class: Class::of(&g.signature),
                        signature: Some(g.signature),
                        residual: Some(residual),
                        p1_ratio: Some(ratio),
                        error: None,
                        triple: None,
                    },
                    Some(t),
                ),
                Err(e) => (failed(index, strategy, e), None),
            }
        }
        Err(e) => (failed(index, strategy, e), None),
    }
}

fn failed(index: usize, strategy: Strategy, e: Error) -> SampleRecord {
    SampleRecord {
        index,
        strategy,
        class: Class::Unknown,
        signature: None,
        residual: None,
        p1_ratio: None,
        error: Some(e.to_string()),
        triple: None,
    }
}

/// Tries to join two lines of the same fibre by projecting the straight
/// segment between them back onto the fibre at `pieces` points.
pub fn connect(a: &RealTriple, b: &RealTriple, target: &InvariantSection, pieces: usize, cfg: &ContinuationConfig) -> bool {
    let mut cur = a.clone();
    let mut p1_prev = sections::p1(&make_section(a));
    for i in 1..=pieces {
        let tau = i as f64 / pieces as f64;
        // Segment point, or the last fibre point advanced by one increment
        // when the segment itself leaves the regular region.
        let start = if i == pieces { b.clone() } else { a.scaled(1.0 - tau).add_scaled(b, tau) };
        let p = match project_to_fiber(&start, target, cfg) {
            Ok(p) => p,
            Err(_) => {
                let step = a.scaled(-1.0 / pieces as f64).add_scaled(b, 1.0 / pieces as f64);
                match project_to_fiber(&cur.add_scaled(&step, 1.0), target, cfg) {
                    Ok(p) => p,
                    Err(_) => return false,
                }
            }
        };
        let sec = make_section(&p.triple);
        let j = sections::jacobian(&sec);
        let p1v = j.determinant();
        if sections::p1_ratio_of(&j) <= cfg.min_p1 || (p1v * p1_prev.conj()).re < 0.0 {
            return false;
        }
        p1_prev = p1v;
        cur = p.triple;
    }
    true
}

/// Component census of `M(target)` from `samples` randomized starting lines.
///
/// Connectivity is tested between consecutive successful samples and a few
/// representatives per class. A pair that cannot be joined is simply not
/// reported as an edge; nothing is concluded from a missing edge.
pub fn explore_components(target: &InvariantSection, samples: usize, seed: u64, cfg: &ContinuationConfig) -> ComponentReport {
    let indices: Vec<usize> = (0..samples).collect();
    let results = par::map(indices, |i| sample_line(i, target, seed, cfg));
    let mut counts = ClassCounts::default();
    let mut recs = Vec::with_capacity(samples);
    let mut lines: Vec<(usize, Class, RealTriple)> = Vec::new();
    let mut failures = Vec::new();
    let mut representatives: Vec<SampleRecord> = Vec::new();
    for (rec, tri) in results {
        counts.add(rec.class);
        if let Some(e) = &rec.error {
            failures.push(format!("sample {}: {}", rec.index, e));
        }
        if let Some(t) = tri {
            if !representatives.iter().any(|r| r.class == rec.class) {
                representatives.push(SampleRecord { triple: Some(t.clone()), ..rec.clone() });
            }
            lines.push((rec.index, rec.class, t));
        }
        recs.push(rec);
    }
    // Candidate pairs: the first few lines of each class against each other
    // and against the first line of every other class.
    let mut pairs = Vec::new();
    let per_class = 3;
    for cls in [Class::DefinitePositive, Class::DefiniteNegative, Class::Indefinite, Class::Unknown] {
        let members: Vec<usize> = (0..lines.len()).filter(|&i| lines[i].1 == cls).take(per_class).collect();
        for w in members.windows(2) {
            pairs.push((w[0], w[1]));
        }
    }
    let firsts: Vec<usize> = representatives
        .iter()
        .filter_map(|r| lines.iter().position(|l| l.0 == r.index))
        .collect();
    for i in 0..firsts.len() {
        for j in (i + 1)..firsts.len() {
            pairs.push((firsts[i], firsts[j]));
        }
    }
    let joined = par::map(pairs, |(i, j)| {
        let ok = connect(&lines[i].2, &lines[j].2, target, 16, cfg);
        (lines[i].0, lines[j].0, ok)
    });
    let edges = joined.into_iter().filter(|e| e.2).map(|e| (e.0, e.1)).collect();
    ComponentReport { n: target.n, seed, target: target.clone(), counts, samples: recs, representatives, edges, failures }
}

/// Gram eigenvalues of the blow-down family: for targets `ε·s` along the
/// weighted action, the Gram at the continued line `T_ε` has the same
/// eigenvalues as `(1/ε)` times the Gram at `T_ε/ε ∈ M(s)`. Returns
/// `‖eig(T_ε) - eig(seed)‖ / ‖eig(seed)‖` for each `ε`.
pub fn blow_down_gaps(seed: &RealTriple, s: &InvariantSection, eps: &[f64], cfg: &ContinuationConfig) -> Result<Vec<f64>> {
    let g0 = metric::metric_gram(seed)?;
    let e0 = DVector::from_vec(g0.eigenvalues.clone());
    let mut out = Vec::with_capacity(eps.len());
    for &e in eps {
        let target = s.weighted(e);
        let t = continue_line(seed, &target, cfg)?.triple;
        // Gram on M(s) at T_ε/ε with the frame of T_ε, rescaled by 1/ε.
        let frame = metric::tangent_frame(&t)?;
        let big = metric::TangentFrame { base: t.scaled(1.0 / e), vectors: frame.vectors.clone() };
        let g = metric::gram_for_frame(&big)?;
        let ev = DVector::from_vec(g.eigenvalues.clone()) / e;
        out.push((ev - &e0).norm() / e0.norm());
    }
    Ok(out)
}
