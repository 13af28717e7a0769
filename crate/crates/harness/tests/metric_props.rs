use harness::micro_f1;
use proptest::prelude::*;
use taskgen::{FeatureSpec, Location, Probe, Stage};

fn spec(probe: Probe, location: Location) -> FeatureSpec {
    FeatureSpec::new("f", Stage::Output, location, probe)
}

/// Random valid targets for `probe` on `n` nodes.
fn target(probe: Probe, location: Location, n: usize, bits: &[u32]) -> Vec<f64> {
    match (probe, location) {
        (Probe::Pointer, _) => (0..n).map(|i| (bits[i] as usize % n) as f64).collect(),
        (Probe::Mask, _) => (0..n).map(|i| (bits[i] % 2) as f64).collect(),
        (Probe::MaskOne, _) => {
            let mut v = vec![0.0; n];
            v[bits[0] as usize % n] = 1.0;
            v
        }
        (Probe::Categorical(c), Location::Graph) => {
            let mut v = vec![0.0; c];
            v[bits[0] as usize % c] = 1.0;
            v
        }
        (Probe::Categorical(c), _) => {
            let mut v = vec![0.0; n * c];
            for i in 0..n {
                v[i * c + bits[i] as usize % c] = 1.0;
            }
            v
        }
        (Probe::Scalar, Location::Graph) => vec![bits[0] as f64 / u32::MAX as f64],
        (Probe::Scalar, _) => (0..n).map(|i| bits[i] as f64 / u32::MAX as f64).collect(),
    }
}

fn probes() -> Vec<(Probe, Location)> {
    vec![
        (Probe::Pointer, Location::Node),
        (Probe::Mask, Location::Node),
        (Probe::MaskOne, Location::Node),
        (Probe::Categorical(3), Location::Node),
        (Probe::Categorical(4), Location::Graph),
        (Probe::Scalar, Location::Node),
        (Probe::Scalar, Location::Graph),
    ]
}

proptest! {
    #[test]
    fn targets_score_one_against_themselves(n in 2usize..10, count in 1usize..6, bits in prop::collection::vec(any::<u32>(), 60)) {
        for (p, l) in probes() {
            let ts: Vec<Vec<f64>> = (0..count).map(|k| target(p, l, n, &bits[k * 10..])).collect();
            let masks = vec![vec![true; n]; count];
            prop_assert_eq!(micro_f1(&ts, &ts, &spec(p, l), &masks).unwrap(), 1.0);
        }
    }

    #[test]
    fn score_ignores_trajectory_order(
        n in 2usize..10,
        bits in prop::collection::vec(any::<u32>(), 60),
        noise in prop::collection::vec(any::<u32>(), 60),
        rot in 0usize..6,
    ) {
        for (p, l) in probes() {
            let ts: Vec<Vec<f64>> = (0..6).map(|k| target(p, l, n, &bits[k * 10..])).collect();
            let ps: Vec<Vec<f64>> = (0..6).map(|k| target(p, l, n, &noise[k * 10..])).collect();
            let masks = vec![vec![true; n]; 6];
            let a = micro_f1(&ps, &ts, &spec(p, l), &masks).unwrap();
            let (mut ps2, mut ts2) = (ps.clone(), ts.clone());
            ps2.rotate_left(rot);
            ts2.rotate_left(rot);
            ps2.reverse();
            ts2.reverse();
            let b = micro_f1(&ps2, &ts2, &spec(p, l), &masks).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
