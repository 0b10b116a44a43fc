//! Proximal maps of the two penalties on one coefficient row.
//!
//! A row is laid out lag-major: entry `(l - 1) * k + j` is the coefficient on
//! source `j` at lag `l`.

/// Elementwise soft threshold.
pub fn lasso_prox(row: &[f64], threshold: f64) -> Vec<f64> {
    row.iter()
        .map(|&x| x.signum() * (x.abs() - threshold).max(0.0))
        .collect()
}

/// Nested-suffix group soft threshold, per source series. For each source the
/// suffix `l..p` is scaled by `max(1 - threshold / |suffix|, 0)`, starting at
/// `l = p` and moving out to the whole lag vector.
pub fn hglasso_prox(row: &[f64], k: usize, p: usize, threshold: f64) -> Vec<f64> {
    assert_eq!(row.len(), k * p, "row length must be k * p");
    let mut out = row.to_vec();
    for j in 0..k {
        for l in (0..p).rev() {
            let norm = suffix_norm(&out, k, p, j, l);
            let scale = if norm > 0.0 {
                (1.0 - threshold / norm).max(0.0)
            } else {
                0.0
            };
            for m in l..p {
                out[m * k + j] *= scale;
            }
        }
    }
    out
}

fn suffix_norm(row: &[f64], k: usize, p: usize, j: usize, l: usize) -> f64 {
    (l..p).map(|m| row[m * k + j].powi(2)).sum::<f64>().sqrt()
}

pub fn lasso_penalty(row: &[f64]) -> f64 {
    row.iter().map(|x| x.abs()).sum()
}

/// Sum over sources and lags `l` of the norm of the lag suffix `l..p`.
pub fn hglasso_penalty(row: &[f64], k: usize, p: usize) -> f64 {
    (0..k)
        .map(|j| (0..p).map(|l| suffix_norm(row, k, p, j, l)).sum::<f64>())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Golden section on each coordinate in turn, nested, over the box of
    // half-width |u|; the minimiser lies in that ball because the prox is
    // non-expansive and fixes zero. Partial minimisation keeps convexity, so
    // every level is a one-dimensional convex search.
    fn direct_minimize(u: &[f64], penalty: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
        let objective =
            |v: &[f64]| 0.5 * u.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + penalty(v);
        let radius = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut x = vec![0.0; u.len()];
        search(&objective, &mut x, 0, radius);
        x
    }

    fn search(f: &dyn Fn(&[f64]) -> f64, x: &mut Vec<f64>, d: usize, r: f64) -> f64 {
        if d == x.len() {
            return f(x);
        }
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (-r, r);
        let eval = |v: f64, x: &mut Vec<f64>| {
            x[d] = v;
            search(f, x, d + 1, r)
        };
        let mut a = hi - ratio * (hi - lo);
        let mut b = lo + ratio * (hi - lo);
        let (mut fa, mut fb) = (eval(a, x), eval(b, x));
        for _ in 0..70 {
            if fa <= fb {
                (hi, b, fb) = (b, a, fa);
                a = hi - ratio * (hi - lo);
                fa = eval(a, x);
            } else {
                (lo, a, fa) = (a, b, fb);
                b = lo + ratio * (hi - lo);
                fb = eval(b, x);
            }
        }
        let best = 0.5 * (lo + hi);
        if eval(best, x) < eval(0.0, x) {
            eval(best, x)
        } else {
            eval(0.0, x)
        }
    }

    // The penalties separate over source series (and, for the LASSO, over
    // coordinates), so each block is minimised on its own.
    fn brute_force_hglasso(u: &[f64], k: usize, p: usize, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; k * p];
        for j in 0..k {
            let block: Vec<f64> = (0..p).map(|l| u[l * k + j]).collect();
            let pen = |v: &[f64]| t * hglasso_penalty(v, 1, p);
            let v = direct_minimize(&block, &pen);
            for l in 0..p {
                out[l * k + j] = v[l];
            }
        }
        out
    }

    fn brute_force_lasso(u: &[f64], t: f64) -> Vec<f64> {
        u.iter()
            .map(|&x| direct_minimize(&[x], &|v: &[f64]| t * v[0].abs())[0])
            .collect()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(lasso_prox(&[3.0], 1.0), vec![2.0]);
        assert_eq!(lasso_prox(&[0.5], 1.0), vec![0.0]);
        assert_eq!(lasso_prox(&[-3.0], 0.0), vec![-3.0]);
        let oracle = brute_force_lasso(&[3.0], 1.0);
        assert!((oracle[0] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn inner_lag_zeroed_first() {
        // k = 1, p = 2: lag-2 norm 0.1 < 0.2 so it is cut before the outer group
        let out = hglasso_prox(&[0.3, 0.1], 1, 2, 0.2);
        assert_eq!(out[1], 0.0);
        assert!((out[0] - 0.1).abs() < 1e-12);
        let oracle = brute_force_hglasso(&[0.3, 0.1], 1, 2, 0.2);
        assert!(max_diff(&out, &oracle) < 1e-4, "{oracle:?}");
    }

    #[test]
    fn huge_threshold_zeroes_everything() {
        let row = [1.0, -2.0, 0.5, 3.0, -0.1, 0.7];
        assert!(hglasso_prox(&row, 2, 3, 100.0).iter().all(|v| *v == 0.0));
        assert!(lasso_prox(&row, 100.0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_group_stays_zero() {
        assert_eq!(hglasso_prox(&[0.0, 0.0], 1, 2, 0.5), vec![0.0, 0.0]);
    }

    fn row_and_shape() -> impl Strategy<Value = (usize, usize, Vec<f64>, f64)> {
        (1usize..=3, 1usize..=3)
            .prop_filter("length at most 6", |(k, p)| k * p <= 6)
            .prop_flat_map(|(k, p)| {
                (
                    Just(k),
                    Just(p),
                    prop::collection::vec(-3.0f64..3.0, k * p),
                    0.0f64..2.0,
                )
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn single_lag_matches_soft_threshold(row in prop::collection::vec(-5.0f64..5.0, 1..6), t in 0.0f64..3.0) {
            let k = row.len();
            let a = hglasso_prox(&row, k, 1, t);
            let b = lasso_prox(&row, t);
            prop_assert!(max_diff(&a, &b) < 1e-14);
        }

        #[test]
        fn closed_forms_match_brute_force((k, p, row, t) in row_and_shape()) {
            let h = hglasso_prox(&row, k, p, t);
            let oracle = brute_force_hglasso(&row, k, p, t);
            prop_assert!(max_diff(&h, &oracle) < 1e-4, "{:?} vs {:?}", h, oracle);
            let l = lasso_prox(&row, t);
            let oracle = brute_force_lasso(&row, t);
            prop_assert!(max_diff(&l, &oracle) < 1e-4);
        }

        #[test]
        fn output_support_is_a_lag_prefix((k, p, row, t) in row_and_shape()) {
            let out = hglasso_prox(&row, k, p, t);
            for j in 0..k {
                for l in 1..p {
                    if out[(l - 1) * k + j] == 0.0 {
                        prop_assert_eq!(out[l * k + j], 0.0);
                    }
                }
            }
        }
    }
}
