use std::sync::Arc;

use ising_spinor::harness::{discrete_ratio, run_convergence, snap_boundary, ConvergenceSpec, RatioMethod};
use ising_spinor::ising_enum::{spin_expectation, BoundaryCondition, SpinComponent};
use ising_spinor::lattice::DiscreteDomain;

#[test]
fn symmetric_square_ratio_vanishes() {
    let rows = run_convergence(&ConvergenceSpec::symmetric(vec![8, 16, 32])).unwrap();
    for r in &rows {
        assert!(r.ratio.abs() <= 0.05, "{r:?}");
    }
    // errors are at roundoff level here; compare up to it
    for w in rows.windows(2) {
        assert!(w[1].abs_error <= w[0].abs_error + 1e-12);
    }
}

#[test]
fn off_center_error_decreases() {
    let rows = run_convergence(&ConvergenceSpec::off_center(vec![8, 16, 32])).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].abs_error < w[0].abs_error, "{rows:?}");
    }
    assert!(rows[2].abs_error < 0.1);
    // the lower arc carries "−": a puncture near it correlates negatively
    assert!(rows.iter().all(|r| r.ratio < 0.0 && r.theta < 0.0));
}

#[test]
fn enumeration_matches_solver_on_small_annulus() {
    let mut spec = ConvergenceSpec::symmetric(vec![3]);
    spec.method = RatioMethod::Enumeration;
    let (e, faces, _) = discrete_ratio(3, &spec).unwrap();
    assert_eq!(faces, vec![(1, 1)]);
    spec.method = RatioMethod::Solver;
    let (s, _, _) = discrete_ratio(3, &spec).unwrap();
    assert!((e - s).abs() < 1e-8, "{e} vs {s}");

    // the double ratio is E_ab[σ]/E_+[σ]
    let f: Vec<_> = DiscreteDomain::rectangle(3, 3).into_iter().filter(|&c| c != (1, 1)).collect();
    let d = Arc::new(DiscreteDomain::from_faces(&f).unwrap());
    let a = snap_boundary(&d, 3, spec.a).unwrap();
    let b = snap_boundary(&d, 3, spec.b).unwrap();
    let hole = [SpinComponent::Hole(0)];
    let eab = spin_expectation(&d, &BoundaryCondition::Dobrushin(a, b), &hole).unwrap();
    let ep = spin_expectation(&d, &BoundaryCondition::Plus, &hole).unwrap();
    let oracle = eab.checked_div(&ep).unwrap().to_c64().re;
    assert!((oracle - e).abs() < 1e-12, "{oracle} vs {e}");
}
