use pivotfw::linalg::{factor, replace_column, SquareMatrix};
use pivotfw::Error;
use proptest::prelude::*;

fn matrix_from_flat(order: usize, flat: &[f64]) -> SquareMatrix {
    let cols: Vec<Vec<f64>> = (0..order).map(|j| flat[j * order..(j + 1) * order].to_vec()).collect();
    SquareMatrix::from_dense_columns(&cols).unwrap()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Exact rank of an integer matrix by fraction-free elimination.
fn bareiss_rank(rows: &[Vec<i64>]) -> usize {
    let mut a: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&v| v as i128).collect()).collect();
    let (m, n) = (a.len(), a[0].len());
    let mut rank = 0;
    let mut prev = 1i128;
    for c in 0..n {
        let Some(p) = (rank..m).find(|&i| a[i][c] != 0) else { continue };
        a.swap(rank, p);
        for i in rank + 1..m {
            for j in c + 1..n {
                a[i][j] = (a[rank][c] * a[i][j] - a[i][c] * a[rank][j]) / prev;
            }
            a[i][c] = 0;
        }
        prev = a[rank][c];
        rank += 1;
        if rank == m {
            break;
        }
    }
    rank
}

fn dense_strategy(max_order: usize) -> impl Strategy<Value = (usize, Vec<f64>)> {
    (1..=max_order).prop_flat_map(|n| (Just(n), prop::collection::vec(-1.0f64..1.0, n * n)))
}

/// `B C` with small integer factors of inner dimension `r`, so the rank is
/// at most `r` and often exactly `r`.
fn low_rank_strategy() -> impl Strategy<Value = (usize, Vec<Vec<i64>>)> {
    (1usize..=12)
        .prop_flat_map(|n| (Just(n), 1..=n))
        .prop_flat_map(|(n, r)| {
            (
                Just(n),
                prop::collection::vec(prop::collection::vec(-3i64..=3, r), n),
                prop::collection::vec(prop::collection::vec(-3i64..=3, n), r),
            )
        })
        .prop_map(|(n, b, c)| {
            let rows = (0..n)
                .map(|i| (0..n).map(|j| b[i].iter().zip(&c).map(|(bik, ck)| bik * ck[j]).sum()).collect())
                .collect();
            (n, rows)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solve_round_trips((n, flat) in dense_strategy(64), seed in any::<u64>()) {
        let a = matrix_from_flat(n, &flat);
        let f = match factor(&a) {
            Ok(f) => f,
            // Random dense matrices are nonsingular almost surely; a
            // rejection here would be a false singular report.
            Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
        };
        let b: Vec<f64> = (0..n).map(|i| ((seed.wrapping_add(i as u64) % 1000) as f64) / 500.0 - 1.0).collect();
        let r = f.solve(&b).unwrap();
        let back = a.mul_vec(&r);
        let diff: Vec<f64> = back.iter().zip(&b).map(|(x, y)| x - y).collect();
        prop_assert!(inf_norm(&diff) <= 1e-10 * inf_norm(&b).max(1e-300));
    }

    #[test]
    fn replace_column_matches_fresh_factor(
        (n, flat) in dense_strategy(24),
        col in prop::collection::vec(-1.0f64..1.0, 24),
        index in 0usize..24,
        rhs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 24), 100),
    ) {
        let index = index % n;
        let column = &col[..n];
        let mut a = matrix_from_flat(n, &flat);
        let mut f = factor(&a).unwrap();
        replace_column(&mut a, &mut f, index, column).unwrap();

        let mut edited = flat.clone();
        edited[index * n..(index + 1) * n].copy_from_slice(column);
        let fresh = factor(&matrix_from_flat(n, &edited)).unwrap();
        for b in &rhs {
            let (x, y) = (f.solve(&b[..n]).unwrap(), fresh.solve(&b[..n]).unwrap());
            let diff: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p - q).collect();
            prop_assert!(inf_norm(&diff) <= 1e-12 * inf_norm(&y).max(1.0));
        }
    }

    #[test]
    fn singular_exactly_when_rank_deficient((n, rows) in low_rank_strategy()) {
        let flat: Vec<f64> = (0..n).flat_map(|j| rows.iter().map(move |r| r[j] as f64)).collect();
        let a = matrix_from_flat(n, &flat);
        let deficient = bareiss_rank(&rows) < n;
        match factor(&a) {
            Ok(_) => prop_assert!(!deficient, "rank-deficient matrix was factored"),
            Err(Error::SingularMatrix { .. }) => prop_assert!(deficient, "full-rank matrix reported singular"),
            Err(e) => return Err(TestCaseError::fail(format!("unexpected error {e}"))),
        }
    }
}

#[test]
fn bareiss_oracle_examples() {
    assert_eq!(bareiss_rank(&[vec![1, 2], vec![2, 4]]), 1);
    assert_eq!(bareiss_rank(&[vec![0, 1], vec![1, 0]]), 2);
    assert_eq!(bareiss_rank(&[vec![0, 0], vec![0, 0]]), 0);
    assert_eq!(bareiss_rank(&[vec![1, 2, 3], vec![4, 5, 6], vec![7, 8, 9]]), 2);
}

#[test]
fn stale_factorization_refuses_to_solve() {
    let a = SquareMatrix::identity(3);
    let mut f = factor(&a).unwrap();
    f.mark_stale();
    assert_eq!(f.solve(&[1.0, 0.0, 0.0]), Err(Error::StaleFactorization));
}
