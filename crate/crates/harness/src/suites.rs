//! Generator oracle suite: random instances of every task checked against
//! the plain reference algorithms and the trajectory invariants.

use model::verify::Check;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taskgen::{check_instance, Task};

pub const ORACLE_SIZES: std::ops::RangeInclusive<usize> = 4..=16;

/// `instances` random `(n, seed)` draws per task; one check per task whose
/// measured value is the mismatch count.
pub fn oracle_suite(instances: usize, seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Task::ALL
        .iter()
        .map(|&task| {
            let mut failures = 0usize;
            let mut first = String::new();
            for _ in 0..instances {
                let n = rng.gen_range(ORACLE_SIZES);
                let s: u64 = rng.gen();
                if let Err(e) = check_instance(task, n, s) {
                    failures += 1;
                    if first.is_empty() {
                        first = e.to_string();
                    }
                }
            }
            let c = Check::at_most("oracle", format!("{task} x{instances}"), failures as f64, 0.0);
            if first.is_empty() {
                c
            } else {
                c.with_detail(first)
            }
        })
        .collect()
}
