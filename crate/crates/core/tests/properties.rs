use oqseed_core::datasets::{
    from_bytes, reduce_prefix, reduce_uniform, reduced_count, to_bytes, Dataset, DatasetMeta, Normalizer,
    Transition,
};
use oqseed_core::numerics::{project_onto_columns, svd_rank, Matrix, Rng, RANK_TOL_EXACT};
use oqseed_core::shared_qnet::SharedQNet;
use proptest::prelude::*;

fn dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = Rng::new(seed);
    let mut d = Dataset::new(2, 1, DatasetMeta::default());
    for i in 0..n {
        d.push(Transition {
            obs: vec![i as f64, rng.normal()],
            act: vec![rng.uniform_range(-1.0, 1.0)],
            reward: rng.normal(),
            next_obs: vec![i as f64 + 1.0, rng.normal()],
            done: rng.below(10) == 0,
        })
        .unwrap();
    }
    d
}

fn matrix(r: usize, c: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.normal()).collect()).unwrap()
}

fn order_key(t: &Transition) -> f64 {
    t.obs[0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn uniform_reduction_is_ordered_subsequence(n in 1usize..400, f in 0.001f64..=1.0, seed in any::<u64>()) {
        let d = dataset(n, 1);
        let r = reduce_uniform(&d, f, seed).unwrap();
        prop_assert_eq!(r.len(), reduced_count(n, f).unwrap());
        let keys: Vec<f64> = r.transitions().iter().map(order_key).collect();
        prop_assert!(keys.windows(2).all(|w| w[0] < w[1]));
        for t in r.transitions() {
            prop_assert_eq!(t, d.get(order_key(t) as usize));
        }
        let again = reduce_uniform(&d, f, seed).unwrap();
        prop_assert_eq!(again.transitions(), r.transitions());
    }

    #[test]
    fn prefix_reductions_compose(n in 1usize..400, f1 in 0.01f64..=1.0, f2 in 0.01f64..=1.0) {
        let d = dataset(n, 2);
        let once = reduce_prefix(&reduce_prefix(&d, f1).unwrap(), f2).unwrap();
        let k = once.len();
        prop_assert_eq!(once.transitions(), &d.transitions()[..k]);
        prop_assert!(k <= reduced_count(n, f1).unwrap());
    }

    #[test]
    fn product_rank_is_bounded(r in 1usize..12, inner in 1usize..8, c in 1usize..12, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let a = matrix(r, inner, &mut rng);
        let b = matrix(inner, c, &mut rng);
        let ra = svd_rank(&a, RANK_TOL_EXACT).unwrap();
        let rb = svd_rank(&b, RANK_TOL_EXACT).unwrap();
        let rab = svd_rank(&a.matmul(&b).unwrap(), RANK_TOL_EXACT).unwrap();
        prop_assert!(rab <= ra.min(rb));
        prop_assert!(ra <= r.min(inner));
    }

    #[test]
    fn projection_residual_monotone(rows in 4usize..20, c1 in 1usize..4, extra in 1usize..4, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let h1 = matrix(rows, c1, &mut rng);
        let h2 = h1.hstack(&matrix(rows, extra, &mut rng)).unwrap();
        let q: Vec<f64> = (0..rows).map(|_| rng.normal()).collect();
        let l2 = |p: Vec<f64>| p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let r1 = l2(project_onto_columns(&h1, &q, 1e-12).unwrap());
        let r2 = l2(project_onto_columns(&h2, &q, 1e-12).unwrap());
        prop_assert!(r2 <= r1 + 1e-10);
    }

    #[test]
    fn dataset_bytes_round_trip(n in 1usize..60, seed in any::<u64>()) {
        let mut d = dataset(n, seed);
        d.meta.env = "pointmass".into();
        d.meta.lineage.push("uniform:0.1:seed=3:n=6".into());
        let back = from_bytes(&to_bytes(&d).unwrap()).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn normalizer_round_trip(n in 2usize..60, seed in any::<u64>()) {
        let d = dataset(n, seed);
        let norm = Normalizer::fit(&d).unwrap();
        for t in d.transitions() {
            let back = norm.denormalize(&norm.normalize(&t.obs));
            for (a, b) in back.iter().zip(&t.obs) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn checkpoint_round_trip(w1 in 1usize..10, w2 in 1usize..10, seed in any::<u64>()) {
        let net = SharedQNet::new(3, 2, &[w1, w2], &mut Rng::new(seed)).unwrap();
        let back = SharedQNet::from_bytes(&net.to_bytes()).unwrap();
        prop_assert_eq!(back.phi_checksum(), net.phi_checksum());
        prop_assert_eq!(back, net);
    }
}
