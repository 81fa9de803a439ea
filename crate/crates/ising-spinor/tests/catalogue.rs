use ising_spinor::harness::{catalogue, run_catalogue};
use ising_spinor::spinor_obs::CheckOptions;

#[test]
fn catalogue_passes_and_flipped_eta_is_caught() {
    let r = run_catalogue(CheckOptions::default());
    assert_eq!(r.domains, 8);
    assert!(r.cover_instances >= 14);
    for e in &r.entries {
        assert!(e.pass(), "{}: {:?}", e.name, e.first_failure());
    }
    assert!(r.all_pass);

    let flipped = run_catalogue(CheckOptions { eta_sign: -1, ..CheckOptions::default() });
    assert!(!flipped.all_pass);
    for e in &flipped.entries {
        let src = e.identities.get("source_value_correlation");
        assert!(!src.is_empty() && src.iter().all(|c| !c.pass), "{}", e.name);
    }
}

#[test]
fn marked_entries_have_every_cover() {
    for e in catalogue() {
        let d = e.domain().unwrap();
        assert_eq!(e.covers.len(), 1 << d.num_holes(), "{}", e.name);
        assert_eq!(e.boundary_points(&d).unwrap().len(), e.marked_steps.len());
    }
}
