use model::verify::{grad_suite, perm_suite, step_activations};
use model::{Aggregator, Base};

fn report(checks: &[model::verify::Check]) {
    for c in checks {
        println!("{}", c.line());
    }
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    assert!(failed.is_empty(), "failed: {failed:?}");
}

#[test]
fn gradients_match_finite_differences() {
    report(&grad_suite());
}

#[test]
fn symmetry_suite_holds() {
    report(&perm_suite());
}

#[test]
fn triplet_step_memory_grows_cubically() {
    let tri = |n| step_activations(Base::TripletGmpnn, Aggregator::Max, n).unwrap() as f64;
    let mp = |n| step_activations(Base::Mpnn, Aggregator::Max, n).unwrap() as f64;
    for n in [8, 16] {
        println!("n={n}: tri {} mpnn {}", tri(n), mp(n));
    }
    for n in [8, 16] {
        let block = (tri(2 * n) - mp(2 * n)) / (tri(n) - mp(n));
        let base = mp(2 * n) / mp(n);
        println!("n={n}: triplet block x{block:.2}, mpnn x{base:.2}");
        assert!((block / 8.0 - 1.0).abs() < 0.3);
        assert!((base / 4.0 - 1.0).abs() < 0.3);
    }
}
