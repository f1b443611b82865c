use holonomic::scan::{
    random_table, sequential_holonomy, streaming_infer, tree_scan_holonomy, MemoryMeter, ScanMode, ScanPlan,
};
use holonomic::tasks::{path_product, swap_pair, swap_token, Curriculum, CurriculumSpec, Perm, Task};
use holonomic::tensor::{mat_exp, mat_exp_frechet, reorthonormalize, skew, Matrix, RngState};
use proptest::prelude::*;

fn random_generator(n: usize, scale: f64, seed: u64) -> Matrix {
    RngState::new(seed).gaussian_matrix(n, n, scale / (n as f64).sqrt())
}

fn perm_strategy(v: usize) -> impl Strategy<Value = Perm> {
    Just((0..v).collect::<Vec<_>>())
        .prop_shuffle()
        .prop_map(|im| Perm::from_image(im).unwrap())
}

/// Array simulation of the swap task, written without the permutation type.
fn simulate_swaps(vars: usize, tokens: &[usize], query: usize) -> usize {
    let mut values: Vec<usize> = (0..vars).collect();
    for &t in tokens {
        let (i, j) = swap_pair(vars, t);
        values.swap(i, j);
    }
    values[query]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exp_of_skew_is_orthogonal(n in 2usize..24, scale in 0.0f64..6.0, seed in any::<u64>()) {
        let u = mat_exp(&skew(&random_generator(n, scale, seed)).unwrap()).unwrap();
        prop_assert!(u.orthogonality_defect() < 1e-12, "defect {}", u.orthogonality_defect());
    }

    #[test]
    fn exp_of_negated_generator_inverts(n in 2usize..16, scale in 0.0f64..4.0, seed in any::<u64>()) {
        let a = skew(&random_generator(n, scale, seed)).unwrap();
        let u = mat_exp(&a).unwrap();
        let v = mat_exp(&a.scale(-1.0)).unwrap();
        let err = u.matmul(&v).unwrap().frobenius_distance(&Matrix::identity(n));
        prop_assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn frechet_derivative_is_linear_in_direction(
        n in 2usize..10,
        alpha in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let mut rng = RngState::new(seed);
        let a = rng.gaussian_matrix(n, n, 0.7);
        let e = rng.gaussian_matrix(n, n, 1.0);
        let f = rng.gaussian_matrix(n, n, 1.0);
        let (_, l_e) = mat_exp_frechet(&a, &e).unwrap();
        let (_, l_f) = mat_exp_frechet(&a, &f).unwrap();
        let mut combo = e.scale(alpha);
        combo.add_assign(&f);
        let (_, l_combo) = mat_exp_frechet(&a, &combo).unwrap();
        let mut expect = l_e.scale(alpha);
        expect.add_assign(&l_f);
        let err = l_combo.frobenius_distance(&expect) / expect.frobenius_norm().max(1.0);
        prop_assert!(err < 1e-11, "{err}");
    }

    #[test]
    fn reorthonormalization_fixes_small_drift(n in 2usize..16, drift in 0.0f64..1e-3, seed in any::<u64>()) {
        let u = mat_exp(&skew(&random_generator(n, 1.0, seed)).unwrap()).unwrap();
        let mut noisy = u.clone();
        noisy.add_assign(&RngState::new(seed ^ 1).gaussian_matrix(n, n, drift));
        let fixed = reorthonormalize(&noisy).unwrap();
        prop_assert!(fixed.orthogonality_defect() < 1e-12);
        // The polar factor is the nearest orthogonal matrix, so it cannot move
        // further than the perturbation did.
        prop_assert!(fixed.frobenius_distance(&u) <= 2.0 * noisy.frobenius_distance(&u) + 1e-12);
    }

    #[test]
    fn composition_is_associative_with_inverses(
        (a, b, c) in (3usize..9).prop_flat_map(|v| (perm_strategy(v), perm_strategy(v), perm_strategy(v)))
    ) {
        let left = a.compose(&b).unwrap().compose(&c).unwrap();
        let right = a.compose(&b.compose(&c).unwrap()).unwrap();
        prop_assert_eq!(&left, &right);
        prop_assert!(a.compose(&a.inverse()).unwrap().is_identity());
        prop_assert!(a.inverse().compose(&a).unwrap().is_identity());
    }

    #[test]
    fn path_product_applies_first_token_first(
        seq in (3usize..7).prop_flat_map(|v| prop::collection::vec(perm_strategy(v), 1..12))
    ) {
        let v = seq[0].size();
        let product = path_product(v, &seq).unwrap();
        for x in 0..v {
            let walked = seq.iter().fold(x, |y, g| g.apply(y));
            prop_assert_eq!(product.apply(x), walked);
        }
    }

    #[test]
    fn swap_vocabulary_round_trips(vars in 2usize..16, i in 0usize..16, j in 0usize..16) {
        prop_assume!(i < vars && j < vars && i != j);
        let t = swap_token(vars, i, j).unwrap();
        prop_assert!(t < vars * (vars - 1) / 2);
        prop_assert_eq!(t, swap_token(vars, j, i).unwrap());
        prop_assert_eq!(swap_pair(vars, t), (i.min(j), i.max(j)));
    }

    #[test]
    fn binding_targets_match_array_simulation(vars in 2usize..12, len in 1usize..60, seed in any::<u64>()) {
        let task = Task::binding(vars).unwrap();
        let ep = task.sample(&mut RngState::new(seed), len);
        let q = ep.query.unwrap();
        prop_assert_eq!(ep.target, simulate_swaps(vars, &ep.tokens, q));
    }

    #[test]
    fn repeated_swap_restores_the_query(vars in 2usize..12, i in 0usize..12, j in 0usize..12, q in 0usize..12) {
        prop_assume!(i < vars && j < vars && q < vars && i != j);
        let task = Task::binding(vars).unwrap();
        let t = swap_token(vars, i, j).unwrap();
        prop_assert_eq!(task.target(&[t, t], Some(q)).unwrap(), q);
    }

    #[test]
    fn ramp_caps_sampled_lengths(
        l_min in 1usize..20,
        extra in 0usize..60,
        progress in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let l_max = l_min + extra;
        let mut c = Curriculum::new(CurriculumSpec::linear_ramp(l_min, l_max, 1)).unwrap();
        c.advance_progress(progress);
        let expect = (l_min as f64 + (l_max - l_min) as f64 * (progress / 0.7).min(1.0)).round() as usize;
        prop_assert_eq!(c.max_len(), expect);
        let mut rng = RngState::new(seed);
        for _ in 0..50 {
            let l = c.sample_length(&mut rng);
            prop_assert!((1..=c.max_len()).contains(&l));
        }
    }

    #[test]
    fn split_streams_are_reproducible(seed in any::<u64>(), k in 0u64..64) {
        let a: Vec<u64> = { let mut r = RngState::new(seed).split(k); (0..8).map(|_| r.next_u64()).collect() };
        let b: Vec<u64> = { let mut r = RngState::new(seed).split(k); (0..8).map(|_| r.next_u64()).collect() };
        let c: Vec<u64> = { let mut r = RngState::new(seed).split(k + 1); (0..8).map(|_| r.next_u64()).collect() };
        prop_assert_eq!(&a, &b);
        prop_assert_ne!(&a, &c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scan_modes_agree(
        n in 2usize..12,
        vocab in 1usize..8,
        len in 1usize..600,
        workers in 1usize..5,
        renorm in 1usize..100,
        seed in any::<u64>(),
    ) {
        let mut rng = RngState::new(seed);
        let table = random_table(n, vocab, &mut rng).unwrap();
        let tokens: Vec<usize> = (0..len).map(|_| rng.below(vocab)).collect();
        let seq = sequential_holonomy(&table, &tokens, &ScanPlan { mode: ScanMode::Sequential, renorm_every: renorm }).unwrap();
        let tree = tree_scan_holonomy(&table, &tokens, &ScanPlan { mode: ScanMode::Tree, renorm_every: renorm }, workers).unwrap();
        prop_assert!(seq.frobenius_distance(&tree) < 1e-9, "{}", seq.frobenius_distance(&tree));

        let h0 = rng.gaussian(n).normalized();
        let plan = ScanPlan { mode: ScanMode::Streaming, renorm_every: renorm };
        let mut meter = MemoryMeter::default();
        let out = streaming_infer(&table, &h0, tokens.iter().copied(), &plan, false, &mut meter).unwrap();
        let expect = seq.mul_vec(&h0).unwrap();
        prop_assert!(out.state.max_abs_diff(&expect) < 1e-9);
        prop_assert!((out.state.norm() - 1.0).abs() < 1e-12);
    }
}
