//! Acceptance gate: one PASS/FAIL line per criterion. Runs without the test
//! harness so the lines are always printed.

use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use orbit_twistor::ale::{self, ALEParams};
use orbit_twistor::continuation::{self, cone_seed, random_real_section, random_triple, ContinuationConfig};
use orbit_twistor::hitchin::{self, SU2Element};
use orbit_twistor::linalg::{c, random_special_unitary};
use orbit_twistor::metric::{self, Signature};
use orbit_twistor::sections::{self, adjoint_quotient, make_section, pauli_triple, RealTriple, TwistorSection, DEFAULT_TOL};
use orbit_twistor::{json, witness};

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rel_section_gap(a: &sections::InvariantSection, b: &sections::InvariantSection) -> f64 {
    a.max_distance(b) / a.max_abs().max(b.max_abs()).max(1e-300)
}

fn random_frame_pair<R: Rng>(r: &mut R, frame: &metric::TangentFrame) -> (TwistorSection, TwistorSection) {
    let mut combo = || {
        let mut v = RealTriple::zero(frame.base.n);
        for f in &frame.vectors {
            v = v.add_scaled(f, r.random_range(-1.0..1.0));
        }
        make_section(&v)
    };
    (combo(), combo())
}

fn structure_suite() -> Verdict {
    let mut r = rng(101);
    let cases = 200;
    let (mut reality, mut gluing, mut algebra, mut pencil): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let extra: Vec<Complex64> = (0..7).map(|k| Complex64::from_polar(0.3 + 0.25 * k as f64, 0.9 * k as f64 + 0.2)).collect();
    for i in 0..cases {
        let n = 2 + i % 2;
        let t = random_triple(&mut r, n);
        let a = make_section(&t);
        let s = adjoint_quotient(&a);
        reality = reality.max(s.forms.iter().map(|f| f.reality_defect()).fold(0.0, f64::max));
        // tr(A'(ζ')^k) for the flipped chart is the reversal.
        let flipped = adjoint_quotient(&a.chart_flip());
        for (f, g) in s.forms.iter().zip(&flipped.forms) {
            let rev = f.reversed();
            let gap = rev.coeffs.iter().zip(&g.coeffs).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            gluing = gluing.max(gap / f.max_abs().max(1e-300));
        }
        let rep = metric::metric_gram(&t).map_err(|e| format!("case {i}: {e}"))?;
        algebra = algebra.max(metric::algebra_check(&rep).max());
        let frame = metric::tangent_frame(&t).map_err(|e| format!("case {i}: {e}"))?;
        let (da, db) = random_frame_pair(&mut r, &frame);
        let p = metric::kks_pencil(&a, &da, &db).map_err(|e| format!("case {i}: {e}"))?;
        let mut worst: f64 = 0.0;
        let mut scale: f64 = p.form.max_abs();
        for &z in &extra {
            let v = metric::kks_value(&a, &da, &db, z).map_err(|e| format!("case {i}: {e}"))?;
            scale = scale.max(v.norm());
            worst = worst.max((v - p.form.eval(z)).norm());
        }
        pencil = pencil.max(worst / scale.max(1e-300));
    }
    check(
        reality < 1e-10 && gluing < 1e-10 && algebra < 1e-8 && pencil < 1e-8,
        format!("{cases} cases: reality {reality:.1e}, gluing {gluing:.1e}, hyperkähler identities {algebra:.1e}, pencil {pencil:.1e}"),
    )
}

fn theorem_a_definite() -> Verdict {
    let cfg = ContinuationConfig::default();
    let mut r = rng(202);
    let mut lines = Vec::new();
    for n in [2usize, 3] {
        let dim = metric::expected_frame_dim(n);
        let seed = cone_seed(n).map_err(|e| e.to_string())?;
        for k in 0..10 {
            let s = random_real_section(&mut r, n, 0.2);
            let res = continuation::continue_line(&seed, &s, &cfg).map_err(|e| format!("sl{n} section {k}: {e}"))?;
            let g = metric::metric_gram(&res.triple).map_err(|e| format!("sl{n} section {k}: {e}"))?;
            let neg = metric::metric_gram(&res.triple.negated()).map_err(|e| format!("sl{n} section {k} negated: {e}"))?;
            let want = Signature { positive: dim, zero: 0, negative: 0 };
            if g.signature != want || neg.signature != want.reversed() {
                return Err(format!("sl{n} section {k}: {:?} / negated {:?}", g.signature.as_tuple(), neg.signature.as_tuple()));
            }
        }
        lines.push(format!("sl{n}: 10/10 ({dim},0,0), negations (0,0,{dim})"));
    }
    Ok(lines.join("; "))
}

fn theorem_a_indefinite() -> Verdict {
    let rep = witness::real_indefinite_search(3, 303, 500);
    let rate = rep.indefinite_rate();
    let null_ok = rep.witnesses.iter().all(|w| w.null_criterion.abs() < 1e-10 * w.scale);
    check(
        rep.regular >= 100 && rate >= 0.95 && null_ok && rep.witnesses.len() == rep.indefinite,
        format!("{} regular of 500, {} indefinite ({:.1}%), {} sections recorded", rep.regular, rep.indefinite, 100.0 * rate, rep.witnesses.len()),
    )
}

fn graded_witness() -> Verdict {
    let mut r = rng(404);
    let mut worst_p2: f64 = 0.0;
    let mut off = 0;
    for _ in 0..100 {
        let a = witness::graded_draw(&mut r);
        worst_p2 = worst_p2.max(witness::graded_p2(&a).norm());
        if !sections::in_d1(&a, DEFAULT_TOL) {
            off += 1;
        }
    }
    check(worst_p2 < 1e-13 && off >= 99, format!("max |p2| {worst_p2:.1e}, {off}/100 with p1 above tolerance"))
}

fn sl2_coincidence() -> Verdict {
    let mut r = rng(505);
    let first = make_section(&random_triple(&mut r, 2));
    let cst = sections::p1(&first) / sections::p2(&first);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let a = make_section(&random_triple(&mut r, 2));
        let p1 = sections::p1(&a);
        worst = worst.max((p1 - cst * sections::p2(&a)).norm() / p1.norm());
    }
    let census = witness::real_indefinite_search(2, 505, 100);
    let s = random_real_section(&mut r, 2, 0.5);
    let scan = continuation::explore_components(&s, 16, 505, &ContinuationConfig::default());
    check(
        worst < 1e-8 && census.regular == 0 && scan.counts.indefinite == 0,
        format!(
            "c = {:.6e}{:+.6e}i, max relative error {worst:.1e}; D2 census regular {}, scan indefinite {}",
            cst.re, cst.im, census.regular, scan.counts.indefinite
        ),
    )
}

fn scaling_law() -> Verdict {
    let mut r = rng(606);
    let mut worst: f64 = 0.0;
    let mut points = 0;
    while points < 20 {
        let n = 2 + points % 2;
        let t = random_triple(&mut r, n);
        for scale in [0.25, 4.0, 3.0] {
            let rep = metric::scaling_check(&t, scale).map_err(|e| e.to_string())?;
            if rep.signature != rep.scaled_signature {
                return Err(format!("signature changed under scaling {scale}"));
            }
            worst = worst.max(rep.max_relative_deviation);
        }
        points += 1;
    }
    let s = random_real_section(&mut r, 2, 0.02);
    let eps = [1.0, 0.5, 0.25, 0.125];
    let gaps = continuation::blow_down_gaps(&cone_seed(2).unwrap(), &s, &eps, &ContinuationConfig::default()).map_err(|e| e.to_string())?;
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    check(
        worst < 1e-8 && monotone && gaps[3] < 1e-3,
        format!("20 points, t in {{1/4, 4, 3}}: max deviation {worst:.1e}; blow-down gaps {:?}", gaps.iter().map(|g| format!("{g:.1e}")).collect::<Vec<_>>()),
    )
}

fn ale_suite() -> Verdict {
    let mut eh: f64 = 0.0;
    let mut flat: f64 = 0.0;
    for a in [0.3, 1.0, 2.5] {
        let p = ALEParams::new(0.0, a, a).unwrap();
        for k in 1..40 {
            let r = p.boundary_radius() * (1.0 + 0.05 * k as f64);
            let s = ale::metric_coeffs(&p, r).unwrap();
            let e = ale::eguchi_hanson(a, r);
            for (x, y) in [(s.g_rr, e.g_rr), (s.g_11, e.g_11), (s.g_22, e.g_22), (s.g_33, e.g_33)] {
                eh = eh.max((x - y).abs() / y.abs() / f64::EPSILON);
            }
            let f = ale::metric_coeffs(&ALEParams::flat(), r).unwrap();
            let q = r * r / 4.0;
            flat = flat.max((f.g_rr - 1.0).abs()).max((f.g_11 - q).abs()).max((f.g_22 - q).abs()).max((f.g_33 - q).abs());
        }
    }
    let rho = ale::rho_asymptotics(1.0, &[1e-2, 1e-4]).unwrap();
    let (d2, d4) = (rho.samples[0].max_deviation(), rho.samples[1].max_deviation());
    let lit = rho.samples[1].literal_ratios;
    let dist = ale::boundary_distance(&ALEParams::new(0.0, 0.0, 1.0).unwrap(), 3.0).unwrap();
    let mut ric = Vec::new();
    for a in [(0.0, 1.0, 1.0), (0.0, 0.3, 1.0), (0.0, 0.0, 1.0)] {
        let p = ALEParams::new(a.0, a.1, a.2).unwrap();
        let rep = ale::ricci_fd(&p, [2.6, 1.2, 0.3, -0.7], ale::DEFAULT_FD_STEP).map_err(|e| e.to_string())?;
        ric.push(rep.relative);
    }
    let ric_ok = ric.iter().all(|&x| x < 1e-4);
    check(
        eh <= 4.0 && flat == 0.0 && d2 < 1e-2 && d4 < 1e-4 && dist.cauchy_gap < 1e-8 && ric_ok,
        format!(
            "EH gap {eh:.1} ulp, flat gap {flat:.1e}; rho ratios off by {d2:.1e} at 1e-2 and {d4:.1e} at 1e-4 \
             (literal display ratios {:.3} {:.3} {:.3} {:.3}); distance {:.10} with Cauchy gap {:.1e}; relative Ric {:.1e} {:.1e} {:.1e}",
            lit[0], lit[1], lit[2], lit[3], dist.distance, dist.cauchy_gap, ric[0], ric[1], ric[2]
        ),
    )
}

fn hitchin_equivariance() -> Verdict {
    let mut r = rng(808);
    let (mut equi, mut inv): (f64, f64) = (0.0, 0.0);
    for i in 0..100 {
        let n = 2 + i % 3;
        let t = random_triple(&mut r, n);
        let u = SU2Element::random(&mut r);
        let g = random_special_unitary(&mut r, n);
        let h = hitchin::hitchin_map(&t);
        let lhs = hitchin::hitchin_map(&hitchin::su2_act_triple(&u, &t));
        let rhs = hitchin::su2_act_section(&u, &h);
        equi = equi.max(rel_section_gap(&lhs, &rhs));
        inv = inv.max(rel_section_gap(&hitchin::hitchin_map(&t.conjugated(&g)), &h));
    }
    check(equi < 1e-9 && inv < 1e-9, format!("100 cases: SU(2) equivariance {equi:.1e}, G-invariance {inv:.1e}"))
}

fn level_checks() -> Verdict {
    let pauli = sections::check_level_regular(&pauli_triple(), 8);
    // l = (0, h', 0), h' = −ih/2: l(ζ) = h'(1 + ζ²)
    let hp = pauli_triple().t1;
    let z = hp.clone() * c(0.0, 0.0);
    let hm = RealTriple::new(z.clone(), hp, z).unwrap();
    let bad = sections::check_level_regular(&hm, 8);
    let at = bad.worst_zeta.unwrap_or([f64::NAN; 2]);
    let mut r = rng(909);
    let mut agree = 0;
    let total = 400;
    for i in 0..total {
        let n = 2 + i % 2;
        let rep = sections::check_level_regular(&random_triple(&mut r, n), 4);
        if rep.determinant_regular == rep.grid_regular {
            agree += 1;
        }
    }
    check(
        pauli.regular && !bad.regular && !bad.determinant_regular && !bad.grid_regular && agree == total,
        format!(
            "Pauli regular {}; h-multiple rejected (worst zeta [{:.0}, {:.0}], excess {}); criteria agree on {agree}/{total} random levels",
            pauli.regular, at[0], at[1], bad.max_centralizer_excess
        ),
    )
}

fn cross_validation() -> Verdict {
    let cfg = ContinuationConfig::default();
    let seed = cone_seed(2).unwrap();
    let mut r = rng(1010);
    let mut lines = Vec::new();
    let mut ok = true;
    for k in 0..3 {
        let s = random_real_section(&mut r, 2, 0.5);
        let mut eigs = Vec::new();
        let mut off_diag: f64 = 0.0;
        for lam in [0.6, 0.8, 1.0, 1.4, 2.0] {
            let res = continuation::continue_line(&seed.scaled(lam), &s, &cfg).map_err(|e| format!("section {k}: {e}"))?;
            let o = metric::orbit_form(&res.triple).map_err(|e| format!("section {k}: {e}"))?;
            // Off-diagonal mass in the eigenframe, relative to the spectrum.
            let eig = nalgebra::SymmetricEigen::new(o.form.clone());
            let d = eig.eigenvectors.transpose() * &o.form * &eig.eigenvectors;
            let top = d.diagonal().amax();
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        off_diag = off_diag.max(d[(i, j)].abs() / top);
                    }
                }
            }
            eigs.push([o.eigenvalues[0], o.eigenvalues[1], o.eigenvalues[2]]);
        }
        let fit = ale::fit_orbit_eigenvalues(&eigs).map_err(|e| format!("section {k}: {e}"))?;
        ok &= fit.residual < 1e-3 && off_diag < 1e-10;
        lines.push(format!("s{k}: a2/a3 = {:.4}, residual {:.1e}", fit.params.a2, fit.residual));
    }
    check(ok, lines.join("; "))
}

fn determinism() -> Verdict {
    let dir = std::env::temp_dir().join(format!("orbit-twistor-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let section = dir.join("s.json");
    std::fs::write(&section, json::document("invariant_section", &random_real_section(&mut rng(1111), 3, 0.3))).map_err(|e| e.to_string())?;
    let runs: Vec<(Vec<&str>, &str)> = vec![
        (vec!["witness-su3", "--samples", "60", "--seed", "11"], "1"),
        (vec!["witness-su3", "--samples", "60", "--seed", "11"], "4"),
        (vec!["scan-signature", "--algebra", "sl3", "--samples", "8", "--seed", "11", "--section", section.to_str().unwrap()], "1"),
        (vec!["scan-signature", "--algebra", "sl3", "--samples", "8", "--seed", "11", "--section", section.to_str().unwrap()], "4"),
    ];
    let mut outs = Vec::new();
    for (args, threads) in &runs {
        let o = Command::new(env!("CARGO_BIN_EXE_orbit-twistor"))
            .env("THREADS", threads)
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("{args:?} exited with {:?}", o.status.code()));
        }
        outs.push(o.stdout);
    }
    let _ = std::fs::remove_dir_all(&dir);
    check(
        outs[0] == outs[1] && outs[2] == outs[3],
        format!("witness-su3 {} bytes, scan-signature {} bytes, identical across runs and thread counts", outs[0].len(), outs[2].len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("structure suite", structure_suite),
        ("definite components and sign flip", theorem_a_definite),
        ("indefinite lines on D2 for sl(3)", theorem_a_indefinite),
        ("graded sl(3) witness", graded_witness),
        ("sl(2) coincidence p1 = c p2", sl2_coincidence),
        ("scaling law and blow-down", scaling_law),
        ("ALE suite", ale_suite),
        ("invariant map equivariance", hitchin_equivariance),
        ("level sections", level_checks),
        ("orbit metric vs ALE family", cross_validation),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = f();
        let secs = start.elapsed().as_secs_f64();
        match v {
            Ok(d) => println!("PASS {:>2} {name} ({secs:.1}s): {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1}s): {d}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
