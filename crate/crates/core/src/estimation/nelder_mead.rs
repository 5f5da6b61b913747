//! Box-constrained Nelder–Mead minimization. Trial points are clamped to the
//! box, which is adequate for the low-dimensional smooth profiles used here.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmOptions {
    /// Converged once every vertex lies within this distance (max-norm) of
    /// the best vertex.
    pub x_tol: f64,
    pub max_iter: usize,
    pub initial_step: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self {
            x_tol: 1e-3,
            max_iter: 200,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn clamp(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

/// Minimizes `f` over the box `[lower, upper]`. Non-finite values are
/// treated as `+inf`.
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &NmOptions,
) -> NmResult {
    let n = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut start = x0.to_vec();
    clamp(&mut start, lower, upper);
    let mut simplex = vec![start.clone()];
    for i in 0..n {
        let mut v = start.clone();
        v[i] += opts.initial_step;
        if v[i] > upper[i] {
            v[i] = start[i] - opts.initial_step;
        }
        clamp(&mut v, lower, upper);
        simplex.push(v);
    }
    let mut fv: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();

    let mut iterations = 0;
    let mut converged = false;
    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        fv = order.iter().map(|&i| fv[i]).collect();

        let spread = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread < opts.x_tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = (0..n)
                .map(|k| centroid[k] + t * (simplex[n][k] - centroid[k]))
                .collect();
            clamp(&mut p, lower, upper);
            p
        };
        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < fv[0] {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[n] = xe;
                fv[n] = fe;
            } else {
                simplex[n] = xr;
                fv[n] = fr;
            }
            continue;
        }
        if fr < fv[n - 1] {
            simplex[n] = xr;
            fv[n] = fr;
            continue;
        }
        let xc = along(if fr < fv[n] { -0.5 } else { 0.5 });
        let fc = eval(&xc, &mut evals);
        if fc < fv[n].min(fr) {
            simplex[n] = xc;
            fv[n] = fc;
            continue;
        }
        for i in 1..=n {
            let mut v: Vec<f64> = (0..n)
                .map(|k| simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k]))
                .collect();
            clamp(&mut v, lower, upper);
            fv[i] = eval(&v, &mut evals);
            simplex[i] = v;
        }
    }
    NmResult {
        x: simplex[0].clone(),
        f: fv[0],
        iterations,
        evaluations: evals,
        converged,
    }
}
