//! Reconstruction against an independent dense least-squares oracle
//! (normal equations, Gaussian elimination with partial pivoting).

use pettis_core::paths::NormalStream;
use pettis_core::vecspace::{apply, DualFamily, Functional, Vector, DEFAULT_RECONSTRUCT_TOL};
use proptest::prelude::*;

fn normal_matrix(key: u64, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    let mut z = NormalStream::new(key);
    (0..rows)
        .map(|_| (0..cols).map(|_| z.next().unwrap()).collect())
        .collect()
}

/// Solves `(AᵀA) x = Aᵀb`.
fn lstsq_oracle(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let d = a[0].len();
    let mut m = vec![vec![0.0; d + 1]; d];
    for i in 0..d {
        for j in 0..d {
            m[i][j] = a.iter().map(|row| row[i] * row[j]).sum();
        }
        m[i][d] = a.iter().zip(b).map(|(row, y)| row[i] * y).sum();
    }
    for col in 0..d {
        let piv = (col..d)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, piv);
        for r in 0..d {
            if r != col {
                let f = m[r][col] / m[col][col];
                let pivot_row = m[col].clone();
                for (x, p) in m[r].iter_mut().zip(&pivot_row).skip(col) {
                    *x -= f * p;
                }
            }
        }
    }
    (0..d).map(|i| m[i][d] / m[i][i]).collect()
}

fn family_from(rows: &[Vec<f64>]) -> DualFamily {
    DualFamily::spanning(
        rows.iter()
            .map(|r| Functional::new(r.clone()).unwrap())
            .collect(),
    )
    .unwrap()
}

#[test]
fn random_gaussian_family_round_trip_matches_oracle() {
    for (key, d) in [(1u64, 2usize), (2, 3), (3, 5), (4, 8)] {
        let rows = normal_matrix(key, 2 * d, d);
        let family = family_from(&rows);
        let v: Vec<f64> = NormalStream::new(key + 100).take(d).collect();
        let pairings: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().zip(&v).map(|(a, b)| a * b).sum())
            .collect();
        let oracle = lstsq_oracle(&rows, &pairings);
        let got = family
            .reconstruct(&pairings, DEFAULT_RECONSTRUCT_TOL)
            .unwrap();
        for i in 0..d {
            assert!((got.coords()[i] - v[i]).abs() < 1e-10, "d={d}");
            assert!((oracle[i] - v[i]).abs() < 1e-10, "oracle d={d}");
        }
    }
}

#[test]
fn inconsistent_pairings_match_oracle_residual() {
    // The oracle's residual on perturbed pairings is what the gate sees.
    let rows = normal_matrix(9, 6, 3);
    let family = family_from(&rows);
    let mut pairings: Vec<f64> = rows.iter().map(|r| r[0] - r[2]).collect();
    pairings[4] += 1e-3;
    let x = lstsq_oracle(&rows, &pairings);
    let residual = rows
        .iter()
        .zip(&pairings)
        .map(|(r, p)| (r.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() - p).abs())
        .fold(0.0, f64::max);
    assert!(residual > 1e-5);
    assert!(family
        .reconstruct(&pairings, DEFAULT_RECONSTRUCT_TOL)
        .is_err());
    assert!(family.reconstruct(&pairings, 2.0 * residual).is_ok());
}

fn arb_vec(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn round_trip(key in any::<u64>(), d in 1usize..7, extra in 0usize..5) {
        let rows = normal_matrix(key, d + extra, d);
        let family = match DualFamily::spanning(rows.iter().map(|r| Functional::new(r.clone()).unwrap()).collect()) {
            Ok(f) => f,
            Err(_) => return Ok(()),
        };
        let v: Vec<f64> = NormalStream::new(!key).take(d).map(|z| 10.0 * z).collect();
        let p = family.pairings(&v).unwrap();
        let back = family.reconstruct(&p, DEFAULT_RECONSTRUCT_TOL).unwrap();
        for i in 0..d {
            // random families can be ill-conditioned; scale by the norm
            prop_assert!((back.coords()[i] - v[i]).abs() < 1e-10 * (1.0 + v.iter().map(|x| x.abs()).sum::<f64>()));
        }
    }

    #[test]
    fn two_families_agree(v in arb_vec(3)) {
        let a = DualFamily::standard_basis(3).unwrap();
        let b = DualFamily::partial_sums(3).unwrap();
        let x = a.reconstruct(&a.pairings(&v).unwrap(), DEFAULT_RECONSTRUCT_TOL).unwrap();
        let y = b.reconstruct(&b.pairings(&v).unwrap(), DEFAULT_RECONSTRUCT_TOL).unwrap();
        for i in 0..3 {
            prop_assert!((x.coords()[i] - y.coords()[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn linear_in_pairings(u in arb_vec(3), w in arb_vec(3), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let fam = family_from(&[vec![1.0, 2.0, 0.0], vec![0.0, 1.0, -1.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 1.0]]);
        let p = fam.pairings(&u).unwrap();
        let q = fam.pairings(&w).unwrap();
        let mix: Vec<f64> = p.iter().zip(&q).map(|(x, y)| a * x + b * y).collect();
        let lhs = fam.reconstruct(&mix, DEFAULT_RECONSTRUCT_TOL).unwrap();
        let ru = fam.reconstruct(&p, DEFAULT_RECONSTRUCT_TOL).unwrap();
        let rw = fam.reconstruct(&q, DEFAULT_RECONSTRUCT_TOL).unwrap();
        for i in 0..3 {
            prop_assert!((lhs.coords()[i] - (a * ru.coords()[i] + b * rw.coords()[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn apply_is_dot_product(v in arb_vec(4), c in arb_vec(4)) {
        let f = Functional::new(c.clone()).unwrap();
        let x = Vector::new(v.clone()).unwrap();
        let expected: f64 = c.iter().zip(&v).map(|(a, b)| a * b).sum();
        prop_assert_eq!(apply(&f, &x).unwrap(), expected);
    }
}
