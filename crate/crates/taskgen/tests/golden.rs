//! Checked-in corpora: 5 seeds x 3 sizes per task. Set `RNAR_BLESS=1` to rewrite.

use std::fs;
use std::path::PathBuf;

use taskgen::{generate, Task, Trajectory};

pub const GOLDEN_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
pub const GOLDEN_SIZES: [usize; 3] = [4, 8, 16];

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn render(task: Task) -> String {
    let mut s = String::new();
    for n in GOLDEN_SIZES {
        for seed in GOLDEN_SEEDS {
            s.push_str(&generate(task, n, seed).unwrap().to_json_line());
            s.push('\n');
        }
    }
    s
}

#[test]
fn golden_corpora_are_byte_identical() {
    let bless = std::env::var_os("RNAR_BLESS").is_some();
    for task in Task::ALL {
        let path = golden_dir().join(format!("{}.ndjson", task.id()));
        let fresh = render(task);
        if bless {
            fs::create_dir_all(golden_dir()).unwrap();
            fs::write(&path, &fresh).unwrap();
        }
        let stored = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(stored == fresh, "{} differs from regenerated corpus", path.display());
        for line in stored.lines() {
            let t = Trajectory::from_json_line(line).unwrap();
            t.validate().unwrap();
        }
    }
}
