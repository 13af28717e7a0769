use proptest::prelude::*;
use taskgen::{batch, generate, Stage, Task};

fn task_strategy() -> impl Strategy<Value = Task> {
    (0..Task::ALL.len()).prop_map(|i| Task::ALL[i])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn batch_then_unbatch_is_identity(
        task in task_strategy(),
        items in prop::collection::vec((4usize..12, any::<u64>()), 1..6),
    ) {
        let trajs: Vec<_> = items.iter().map(|&(n, s)| generate(task, n, s).unwrap()).collect();
        let b = batch(&trajs).unwrap();
        prop_assert_eq!(b.unbatch(), trajs.clone());
        for (i, t) in trajs.iter().enumerate() {
            let real_nodes = (0..b.n_max).filter(|&v| b.node_valid(i, v)).count();
            prop_assert_eq!(real_nodes, t.n);
            let real_steps = b.step_mask[i * b.t_max..(i + 1) * b.t_max].iter().filter(|&&m| m == 1.0).count();
            prop_assert_eq!(real_steps, t.steps);
        }
    }

    #[test]
    fn padded_node_entries_are_zero(task in task_strategy(), n in 4usize..8, s in any::<u64>()) {
        let small = generate(task, n, s).unwrap();
        let large = generate(task, 10, s).unwrap();
        let b = batch(&[small, large]).unwrap();
        for (name, arr) in b.stage(Stage::Input) {
            if name == "pos" {
                prop_assert!(arr.data[n..b.n_max].iter().all(|&x| x == 0.0));
            }
        }
    }
}
