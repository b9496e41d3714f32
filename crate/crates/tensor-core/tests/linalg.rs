use proptest::prelude::*;
use tensor_core::rng::{normal, seeded};
use tensor_core::{svd, Tensor};

fn orthonormal_error(m: &Tensor) -> f64 {
    m.matmul_tn(m)
        .unwrap()
        .sub(&Tensor::identity(m.cols))
        .unwrap()
        .max_abs()
}

fn check_svd(w: &Tensor) {
    let r = svd(w).unwrap();
    let scale = w.frobenius();
    assert!(r.reconstruct().sub(w).unwrap().frobenius() <= 1e-8 * scale.max(f64::MIN_POSITIVE));
    assert!(orthonormal_error(&r.u) < 1e-6);
    assert!(orthonormal_error(&r.x) < 1e-6);
    assert!(r.s.windows(2).all(|p| p[0] >= p[1]));
    assert!(r.s.iter().all(|s| *s >= 0.0));
}

#[test]
fn random_six_by_four_eckart_young() {
    for seed in 0..50 {
        let w = normal(&mut seeded(seed), 6, 4, 1.0);
        check_svd(&w);
        let r = svd(&w).unwrap();
        for k in 0..=4 {
            let resid = r.truncated(k).sub(&w).unwrap().frobenius().powi(2);
            let tail: f64 = r.s[k..].iter().map(|s| s * s).sum();
            assert!(
                (resid - tail).abs() <= 1e-8 * w.frobenius().powi(2),
                "seed {seed} k {k}"
            );
        }
        // singular values squared are the eigenvalues of wᵀw: their sum is its trace
        let trace: f64 = (0..4).map(|i| w.matmul_tn(&w).unwrap().get(i, i)).sum();
        assert!((trace - r.s.iter().map(|s| s * s).sum::<f64>()).abs() < 1e-10 * trace);
    }
}

#[test]
fn column_norms_match_gram_diagonal() {
    let w = normal(&mut seeded(3), 4, 3, 1.0);
    let n = w.column_norms();
    let gram = w.matmul_tn(&w).unwrap();
    for j in 0..3 {
        assert!((n.data[j].powi(2) - gram.get(j, j)).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn svd_laws_on_random_shapes(d in 1usize..8, k in 1usize..8, seed in any::<u64>()) {
        let w = normal(&mut seeded(seed), d, k, 1.0);
        check_svd(&w);
    }

    #[test]
    fn svd_of_rank_deficient(d in 2usize..7, seed in any::<u64>()) {
        let a = normal(&mut seeded(seed), d, 1, 1.0);
        let b = normal(&mut seeded(seed ^ 1), 1, d, 1.0);
        let w = a.matmul(&b).unwrap();
        check_svd(&w);
    }

    #[test]
    fn softmax_rows_sum_to_one(r in 1usize..6, c in 1usize..6, seed in any::<u64>(), causal in any::<bool>()) {
        let x = normal(&mut seeded(seed), r, c, 30.0);
        let s = x.softmax_rows(causal).unwrap();
        for i in 0..r {
            let row = s.row_slice(i);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|v| *v >= 0.0));
        }
    }
}
