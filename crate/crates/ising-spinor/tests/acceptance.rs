//! Acceptance criteria, one line each. Exits non-zero if any criterion fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{rngs::StdRng, Rng, SeedableRng};

use ising_spinor::continuum::{pfaffian_ratio, theta, theta_ab};
use ising_spinor::harness::{catalogue, run_catalogue, run_convergence, CatalogueReport, ConvergenceSpec};
use ising_spinor::ising_enum::{spin_expectation, BoundaryCondition, SpinComponent};
use ising_spinor::lattice::{CoverPoint, Dir, DiscreteDomain, DoubleCover, Site};
use ising_spinor::shol_solve::{h_report_exact, h_report_float, solve_bvp};
use ising_spinor::spinor_obs::{discrete_pfaffian_ratio, observable_fields, CheckOptions, ObsOptions};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, title: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let o = f();
    let el = t.elapsed();
    let in_time = el <= limit;
    let pass = o.pass && in_time;
    println!(
        "{} [{id}] {title}: {} ({:.2} s, limit {} s)",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        el.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

const IDENTITIES: [&str; 9] = [
    "deck_antisymmetry",
    "s_holomorphicity",
    "boundary_condition",
    "source_value_correlation",
    "branching_cover_partition",
    "recursion",
    "g_matrix_real_antisymmetric",
    "pfaffian_expansion",
    "arc_removal",
];

fn criterion_1(cat: &CatalogueReport) -> Outcome {
    let mut failures = Vec::new();
    let mut checked = 0;
    for e in &cat.entries {
        if let Some(err) = &e.error {
            failures.push(format!("{}: {err}", e.name));
        }
        for c in &e.identities.checks {
            let multi = c.name == "multi_boundary_correlation" || c.name == "boundary_value_correlation";
            if IDENTITIES.contains(&c.name.as_str()) || multi {
                checked += c.checked;
                if !c.pass {
                    failures.push(format!("{} {} {:?}", e.name, c.name, c.locus));
                }
            }
        }
    }
    Outcome {
        pass: failures.is_empty() && cat.domains == 8 && cat.cover_instances >= 14,
        detail: format!("{} domains, {} covers, {checked} exact comparisons, failures {:?}", cat.domains, cat.cover_instances, failures),
    }
}

fn punctured_square(n: i64) -> Arc<DiscreteDomain> {
    let c = n / 2;
    let hole = [(c - 1, c - 1), (c - 1, c), (c, c - 1), (c, c)];
    let faces: Vec<_> = DiscreteDomain::rectangle(n, n).into_iter().filter(|f| !hole.contains(f)).collect();
    Arc::new(DiscreteDomain::from_faces(&faces).unwrap())
}

fn criterion_2() -> Outcome {
    let mut exact_fields = 0;
    let mut bad = Vec::new();
    for e in catalogue() {
        let d = e.domain().unwrap();
        let covers = e.covers(&d).unwrap();
        let a = e.source(&d).unwrap();
        let fields = observable_fields(&covers, a, None, &vec![1; covers.len()], ObsOptions::default()).unwrap();
        for f in &fields {
            exact_fields += 1;
            match h_report_exact(f) {
                Ok(r) if r.closure_defect == 0.0 && r.all_pass() => {}
                Ok(r) => bad.push(format!("{}: {:?}", e.name, r.properties.iter().find(|p| !p.pass))),
                Err(err) => bad.push(format!("{}: {err}", e.name)),
            }
        }
    }
    let mut float_fields = 0;
    let mut worst = 0.0f64;
    for n in [16i64, 32, 64] {
        let d = punctured_square(n);
        let a = d.half_at((0, n / 2), Dir::W).unwrap();
        for br in [false, true] {
            let cov = DoubleCover::new(d.clone(), &[br]).unwrap();
            match solve_bvp(&cov, CoverPoint::new(Site::Half(a), 1)).map(|s| h_report_float(&s.field)) {
                Ok(Ok(r)) => {
                    float_fields += 1;
                    worst = worst.max(r.closure_defect);
                    if !r.all_pass() || r.closure_defect > 1e-9 {
                        bad.push(format!("{n}x{n} cover {br}: {:?}", r.properties.iter().find(|p| !p.pass)));
                    }
                }
                Ok(Err(err)) | Err(err) => bad.push(format!("{n}x{n} cover {br}: {err}")),
            }
        }
    }
    Outcome {
        pass: bad.is_empty(),
        detail: format!("{exact_fields} exact fields closed exactly, {float_fields} solver fields up to 64x64 within 1e-9 (max defect {worst:.1e}), failures {bad:?}"),
    }
}

fn criterion_3(cat: &CatalogueReport) -> Outcome {
    let diff = cat.entries.iter().map(|e| e.solver_max_diff).fold(0.0, f64::max);
    let hom = cat.entries.iter().flat_map(|e| e.homogeneous.iter().map(|h| h.solution_norm)).fold(0.0, f64::max);
    let all_there = cat.entries.iter().all(|e| e.error.is_none() && e.homogeneous.len() == e.covers);
    Outcome {
        pass: all_there && diff < 1e-8 && hom < 1e-10,
        detail: format!("max field difference {diff:.2e} (< 1e-8), homogeneous solution norm {hom:.2e} (< 1e-10)"),
    }
}

fn criterion_4() -> Outcome {
    let mut worst_closed = 0.0f64;
    for i in 0..10 {
        for j in 0..10 {
            let w = Complex64::new(-2.25 + 0.5 * i as f64, 0.1 + 0.35 * j as f64);
            let t = theta(&[w]).unwrap().theta;
            worst_closed = worst_closed.max((t - w.re / w.norm()).abs());
        }
    }
    let mut rng = StdRng::seed_from_u64(20);
    let mut worst_res = 0.0f64;
    let mut worst_dil = 0.0f64;
    let mut specs = 0;
    while specs < 60 {
        let m = 2 + specs % 3;
        let w: Vec<Complex64> = (0..m).map(|_| Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(0.1..3.0))).collect();
        let spread = w.iter().all(|p| p.re.abs() > 0.05) && (0..m).all(|i| (i + 1..m).all(|j| (w[i].re - w[j].re).abs() > 0.05));
        if !spread {
            continue;
        }
        let Ok(r) = theta(&w) else { continue };
        worst_res = worst_res.max(r.residual);
        for s in [0.5, 2.0, 7.0] {
            let ws: Vec<_> = w.iter().map(|z| z * s).collect();
            worst_dil = worst_dil.max((theta(&ws).unwrap().theta - r.theta).abs());
        }
        specs += 1;
    }
    let pts = [-1.0, 0.5, 2.0, 3.5];
    let red0 = (pfaffian_ratio(&pts, &[]).unwrap().ratio - 1.0).abs();
    let w = [Complex64::new(0.3, 0.8), Complex64::new(1.7, 0.4)];
    let red1 = (pfaffian_ratio(&[-1.0, 2.0], &w).unwrap().ratio - theta_ab(-1.0, 2.0, &w).unwrap()).abs();
    Outcome {
        pass: worst_closed < 1e-14 && worst_res < 1e-12 && worst_dil < 1e-10 && red0 < 1e-14 && red1 < 1e-14,
        detail: format!(
            "closed form {worst_closed:.1e}, residual {worst_res:.1e} over {specs} specs, dilation {worst_dil:.1e}, reductions {red0:.1e}/{red1:.1e}"
        ),
    }
}

fn criterion_5() -> Outcome {
    let ns = vec![8, 16, 32];
    let sym = match run_convergence(&ConvergenceSpec::symmetric(ns.clone())) {
        Ok(r) => r,
        Err(e) => return Outcome { pass: false, detail: e.to_string() },
    };
    let off = match run_convergence(&ConvergenceSpec::off_center(ns)) {
        Ok(r) => r,
        Err(e) => return Outcome { pass: false, detail: e.to_string() },
    };
    let sym_ok = sym[2].ratio.abs() <= 0.05;
    let dec = off.windows(2).all(|w| w[1].abs_error < w[0].abs_error);
    let fin = off[2].abs_error < 0.1;
    let errs: Vec<String> = off.iter().map(|r| format!("{:.3e}", r.abs_error)).collect();
    Outcome {
        pass: sym_ok && dec && fin,
        detail: format!("symmetric |ratio| at n=32 {:.1e} (<= 0.05), off-center errors {} (decreasing, final < 0.1)", sym[2].ratio.abs(), errs.join(" > ")),
    }
}

fn criterion_6() -> Outcome {
    let e = catalogue().into_iter().find(|e| e.name == "3x3-center-marked").unwrap();
    let d = e.domain().unwrap();
    let a0 = e.source(&d).unwrap();
    let k0 = d.outer_halves.iter().position(|&h| h == a0).unwrap();
    let n = d.outer_halves.len();
    let pts: Vec<usize> = [0, 3, 6, 9].iter().map(|s| d.outer_halves[(k0 + s) % n]).collect();
    let cov = DoubleCover::new(d.clone(), &[true]).unwrap();
    let pf = discrete_pfaffian_ratio(&cov, &pts, ObsOptions::default()).unwrap();
    let hole = [SpinComponent::Hole(0)];
    let e1 = spin_expectation(&d, &BoundaryCondition::Marked(pts.clone()), &hole).unwrap();
    let e0 = spin_expectation(&d, &BoundaryCondition::Plus, &hole).unwrap();
    let want = e1.checked_div(&e0).unwrap();
    Outcome { pass: pf == want, detail: format!("Pfaffian ratio {} vs spin ratio {} (exact)", pf, want) }
}

fn criterion_7(cat: &CatalogueReport) -> Outcome {
    let checks: Vec<_> = cat.entries.iter().flat_map(|e| e.identities.get("positivity").into_iter().cloned()).collect();
    let n = checks.iter().map(|c| c.checked).sum::<usize>();
    let pass = checks.len() >= cat.cover_instances && checks.iter().all(|c| c.pass);
    Outcome { pass, detail: format!("{} cover instances, {n} exact sign checks in Q(√2)", checks.len()) }
}

fn main() {
    let mut ok = true;
    let mut cat = None;
    ok &= report(1, "exact identity suite", Duration::from_secs(300), || {
        let c = run_catalogue(CheckOptions::default());
        let o = criterion_1(&c);
        cat = Some(c);
        o
    });
    let cat = cat.expect("catalogue ran");
    ok &= report(2, "H-function suite", Duration::from_secs(180), criterion_2);
    ok &= report(3, "solver/oracle agreement", Duration::from_secs(300), || criterion_3(&cat));
    ok &= report(4, "continuum formulas", Duration::from_secs(10), criterion_4);
    ok &= report(5, "convergence at desk scale", Duration::from_secs(600), criterion_5);
    ok &= report(6, "discrete Pfaffian ratio", Duration::from_secs(300), criterion_6);
    ok &= report(7, "positivity", Duration::from_secs(300), || criterion_7(&cat));
    if !ok {
        std::process::exit(1);
    }
}
