//! Nonnegatively constrained convex quadratic programs,
//! `min 0.5 x'Qx - c'x` subject to `x >= 0`, by the Lawson–Hanson active-set
//! method.

use nalgebra::{DMatrix, DVector};

/// `q` must be symmetric positive definite.
pub fn solve_nnqp(q: &DMatrix<f64>, c: &DVector<f64>) -> DVector<f64> {
    let n = c.len();
    let tol = 1e-12 * c.amax().max(1e-300);
    let mut x = DVector::zeros(n);
    let mut free = vec![false; n];
    let max_outer = 3 * n + 10;

    let solve_free = |free: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let k = idx.len();
        let sub = DMatrix::from_fn(k, k, |a, b| q[(idx[a], idx[b])]);
        let rhs = DVector::from_fn(k, |a, _| c[idx[a]]);
        let sol = sub
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&rhs))
            .or_else(|| sub.lu().solve(&rhs))
            .unwrap_or_else(|| DVector::zeros(k));
        let mut z = DVector::zeros(n);
        for (a, &i) in idx.iter().enumerate() {
            z[i] = sol[a];
        }
        z
    };

    for _ in 0..max_outer {
        let w = c - q * &x;
        let pick = (0..n)
            .filter(|&i| !free[i] && w[i] > tol)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(j) = pick else { break };
        free[j] = true;
        loop {
            let z = solve_free(&free);
            if (0..n).filter(|&i| free[i]).all(|i| z[i] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for i in (0..n).filter(|&i| free[i] && z[i] <= 0.0) {
                alpha = alpha.min(x[i] / (x[i] - z[i]));
            }
            x += (z - &x) * alpha;
            let floor = f64::EPSILON * x.amax();
            for i in 0..n {
                if free[i] && x[i] <= floor {
                    free[i] = false;
                    x[i] = 0.0;
                }
            }
            if !free.iter().any(|&f| f) {
                break;
            }
        }
    }
    x
}
