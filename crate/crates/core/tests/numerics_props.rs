mod support;

use ndarray::Array2;
use proptest::prelude::*;
use support::*;
use uda_select::numerics::{adjusted_mutual_information, entropy, kmeans, nuclear_norm, pearson_corr, singular_values, ClusterAssignment};

fn matrix() -> impl Strategy<Value = Array2<f64>> {
    (1usize..40, 1usize..7).prop_flat_map(|(n, k)| {
        prop::collection::vec(-3.0..3.0f64, n * k).prop_map(move |v| Array2::from_shape_vec((n, k), v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn entropy_is_concave(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = 1 + (seed % 30) as usize;
        let k = 2 + (seed % 5) as usize;
        let p = prob_matrix_f64(&mut r, n, k);
        let mean_h = (0..n).map(|i| entropy(p.row(i).as_slice().unwrap()).unwrap()).sum::<f64>() / n as f64;
        let m = p.mean_axis(ndarray::Axis(0)).unwrap();
        prop_assert!(entropy(m.as_slice().unwrap()).unwrap() >= mean_h - 1e-9);
    }

    #[test]
    fn nuclear_norm_bounds_and_reference_singular_values(m in matrix()) {
        let sv = singular_values(&m).unwrap();
        let reference = naive_singular_values(&rows_f64(&m));
        let smax = reference[0];
        for (a, b) in sv.iter().zip(&reference) {
            prop_assert!((a - b).abs() <= 1e-6 * smax.max(1e-300), "{:?} vs {:?}", sv, reference);
        }
        let nn = nuclear_norm(&m).unwrap();
        let fro = m.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(nn >= sv[0] * (1.0 - 1e-12));
        prop_assert!(nn >= fro * (1.0 - 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn pearson_of_an_affine_image_is_plus_or_minus_one(s in prop::collection::vec(-10.0..10.0f64, 3..30), k in 0.1..10.0f64, c in -5.0..5.0f64) {
        prop_assume!(s.iter().any(|&v| (v - s[0]).abs() > 1e-3));
        let up: Vec<f64> = s.iter().map(|v| k * v + c).collect();
        let down: Vec<f64> = s.iter().map(|v| -k * v + c).collect();
        prop_assert!((pearson_corr(&s, &up).unwrap() - 1.0).abs() < 1e-9);
        prop_assert!((pearson_corr(&s, &down).unwrap() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn ami_is_symmetric(u in prop::collection::vec(0usize..4, 4..60), seed in any::<u64>()) {
        let mut r = rng(seed);
        let v: Vec<usize> = (0..u.len()).map(|_| rand::Rng::random_range(&mut r, 0..3)).collect();
        let (a, b) = (ClusterAssignment::from_labels(u), ClusterAssignment::from_labels(v));
        match (adjusted_mutual_information(&a, &b), adjusted_mutual_information(&b, &a)) {
            (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-9),
            (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
        }
    }

    #[test]
    fn kmeans_is_deterministic(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_matrix(&mut r, 40, 3);
        prop_assert_eq!(kmeans(&x, 4, seed).unwrap(), kmeans(&x, 4, seed).unwrap());
    }
}
