use ising_spinor::harness::catalogue;
use ising_spinor::ising_enum::{spin_expectation, BoundaryCondition, SpinComponent};
use ising_spinor::lattice::DoubleCover;
use ising_spinor::spinor_obs::{discrete_pfaffian_ratio, ObsOptions};

/// Four outer points on the annulus: the Pfaffian of two-point observables
/// against the spin expectation with four boundary changes.
#[test]
fn four_point_ratio_is_exact_on_annulus() {
    let e = catalogue().into_iter().find(|e| e.name == "3x3-center").unwrap();
    let d = e.domain().unwrap();
    let a0 = e.source(&d).unwrap();
    let k0 = d.outer_halves.iter().position(|&h| h == a0).unwrap();
    let n = d.outer_halves.len();
    for steps in [[0, 3, 6, 9], [0, 1, 5, 8], [0, 2, 3, 10]] {
        let pts: Vec<usize> = steps.iter().map(|s| d.outer_halves[(k0 + s) % n]).collect();
        let cov = DoubleCover::new(d.clone(), &[true]).unwrap();
        let pf = discrete_pfaffian_ratio(&cov, &pts, ObsOptions::default()).unwrap();
        let hole = [SpinComponent::Hole(0)];
        let e1 = spin_expectation(&d, &BoundaryCondition::Marked(pts.clone()), &hole).unwrap();
        let e0 = spin_expectation(&d, &BoundaryCondition::Plus, &hole).unwrap();
        assert_eq!(pf, e1.checked_div(&e0).unwrap(), "{steps:?}");
    }
}
