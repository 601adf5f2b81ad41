use ctbp::linalg::{kron, logdet_spd, mat_exp, solve_spd, unvec, vec, DenseMatrix, DEFAULT_EXP_TOL};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, bound: f64) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-bound..bound, rows * cols)
        .prop_map(move |data| DenseMatrix::new(rows, cols, data).unwrap())
}

fn square(max: usize, bound: f64) -> impl Strategy<Value = DenseMatrix> {
    (1..=max).prop_flat_map(move |n| matrix(n, n, bound))
}

/// Random matrix rescaled so its 1-norm is at most `limit`.
fn bounded_norm(max: usize, limit: f64) -> impl Strategy<Value = DenseMatrix> {
    square(max, 1.0).prop_map(move |a| {
        let n = a.norm1();
        if n > limit {
            a.scale(limit / n)
        } else {
            a
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exponential_semigroup(a in bounded_norm(6, 5.0)) {
        let e = mat_exp(&a, DEFAULT_EXP_TOL).unwrap();
        let e2 = mat_exp(&a.scale(2.0), DEFAULT_EXP_TOL).unwrap();
        let err = (&(&e * &e) - &e2).norm1();
        prop_assert!(err <= 1e-8 * e2.norm1(), "err {}", err);
    }

    #[test]
    fn generator_rows_sum_to_one(raw in square(6, 2.0)) {
        let n = raw.rows();
        let mut q = DenseMatrix::zeros(n, n);
        for i in 0..n {
            let mut off = 0.0;
            for j in 0..n {
                if i != j {
                    q[(i, j)] = raw[(i, j)].abs();
                    off += q[(i, j)];
                }
            }
            q[(i, i)] = -off;
        }
        let p = mat_exp(&q, DEFAULT_EXP_TOL).unwrap();
        for i in 0..n {
            let s: f64 = p.row(i).iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn vec_unvec_roundtrip((r, c) in (1usize..6, 1usize..6), seed in any::<u64>()) {
        let data: Vec<f64> = (0..r * c).map(|k| (seed.wrapping_mul(k as u64 + 1) % 1000) as f64).collect();
        let a = DenseMatrix::new(r, c, data).unwrap();
        prop_assert_eq!(unvec(&vec(&a), r, c).unwrap(), a);
    }

    #[test]
    fn kron_is_bilinear(a in matrix(2, 3, 5.0), b in matrix(2, 3, 5.0), c in matrix(3, 2, 5.0)) {
        let lhs = kron(&(&a + &b), &c);
        let rhs = &kron(&a, &c) + &kron(&b, &c);
        prop_assert!((&lhs - &rhs).max_abs() <= 1e-12);
    }

    #[test]
    fn vec_of_triple_product(a in matrix(2, 2, 3.0), x in matrix(2, 2, 3.0), b in matrix(2, 2, 3.0)) {
        let lhs = vec(&(&(&a * &x) * &b));
        let rhs = kron(&b.transpose(), &a).mul_vec(&vec(&x)).unwrap();
        for (l, r) in lhs.iter().zip(&rhs) {
            prop_assert!((l - r).abs() <= 1e-12);
        }
    }

    #[test]
    fn spd_solve_residual(m in square(6, 3.0)) {
        let n = m.rows();
        let mut a = &m.transpose() * &m;
        a.add_scaled(1.0, &DenseMatrix::identity(n));
        let inv = solve_spd(&a, &DenseMatrix::identity(n)).unwrap();
        let resid = (&(&inv * &a) - &DenseMatrix::identity(n)).max_abs();
        prop_assert!(resid <= 1e-10 * a.norm1().max(1.0));
        prop_assert!(logdet_spd(&a).unwrap() >= 0.0);
    }
}

#[test]
fn spd_examples() {
    let b = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
    assert_eq!(solve_spd(&DenseMatrix::identity(2), &b).unwrap(), b);
    let ld = logdet_spd(&DenseMatrix::from_diag(&[2.0, 3.0])).unwrap();
    assert!((ld - 6f64.ln()).abs() < 1e-15);
}
