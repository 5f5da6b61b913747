//! Clamped cubic B-spline bases on `[0, 1]`.

pub const DEGREE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    /// Full knot vector: `DEGREE + 1` zeros, the interior knots, `DEGREE + 1` ones.
    knots: Vec<f64>,
}

impl BSplineBasis {
    /// Basis with the given strictly increasing interior knots in `(0, 1)`.
    pub fn with_interior(interior: &[f64]) -> Option<Self> {
        let mut all = vec![0.0];
        all.extend_from_slice(interior);
        all.push(1.0);
        if all.windows(2).any(|w| !(w[1] - w[0] > 1e-9)) {
            return None;
        }
        let mut knots = vec![0.0; DEGREE + 1];
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat_n(1.0, DEGREE + 1));
        Some(Self { knots })
    }

    pub fn uniform(n_basis: usize) -> Self {
        let m = n_basis - DEGREE - 1;
        let interior: Vec<f64> = (1..=m).map(|k| k as f64 / (m + 1) as f64).collect();
        Self::with_interior(&interior).expect("uniform knots are distinct")
    }

    /// Interior knots at evenly spaced quantiles of `xs` (sorted, in `[0, 1]`).
    /// `None` when the quantiles collide.
    pub fn at_quantiles(sorted: &[f64], n_basis: usize) -> Option<Self> {
        let m = n_basis - DEGREE - 1;
        if sorted.len() < 2 {
            return None;
        }
        let interior: Vec<f64> = (1..=m)
            .map(|k| {
                let pos = k as f64 / (m + 1) as f64 * (sorted.len() - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(sorted.len() - 1);
                sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
            })
            .collect();
        Self::with_interior(&interior)
    }

    pub fn n_basis(&self) -> usize {
        self.knots.len() - DEGREE - 1
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.knots[DEGREE + 1..self.knots.len() - DEGREE - 1]
    }

    /// Index `mu` with `knots[mu] <= x < knots[mu + 1]`, clamped so `x = 1`
    /// falls in the last nonempty span.
    fn span(&self, x: f64) -> usize {
        let last = self.n_basis() - 1;
        if x >= self.knots[last + 1] {
            return last;
        }
        if x <= self.knots[DEGREE] {
            return DEGREE;
        }
        self.knots.partition_point(|&k| k <= x) - 1
    }

    /// Nonzero basis functions of degree `p` at `x` in span `mu`:
    /// `N_{mu-p}, ..., N_mu`.
    fn funs(&self, mu: usize, x: f64, p: usize) -> [f64; DEGREE + 1] {
        let t = &self.knots;
        let mut n = [0.0; DEGREE + 1];
        let mut left = [0.0; DEGREE + 1];
        let mut right = [0.0; DEGREE + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[mu + 1 - j];
            right[j] = t[mu + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
        }
        n
    }

    /// `(first, values)`: basis functions `first..first + 4` at `x`.
    pub fn eval(&self, x: f64) -> (usize, [f64; DEGREE + 1]) {
        let mu = self.span(x);
        (mu - DEGREE, self.funs(mu, x, DEGREE))
    }

    /// `(first, derivatives)` of the basis functions at `x`.
    pub fn eval_deriv(&self, x: f64) -> (usize, [f64; DEGREE + 1]) {
        let mu = self.span(x);
        let lower = self.funs(mu, x, DEGREE - 1);
        let t = &self.knots;
        let p = DEGREE as f64;
        let mut d = [0.0; DEGREE + 1];
        // lower[r] is N_{mu-p+1+r, p-1}.
        for (r, slot) in d.iter_mut().enumerate() {
            let i = mu - DEGREE + r;
            let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
            let a = if r >= 1 {
                ratio(lower[r - 1], t[i + DEGREE] - t[i])
            } else {
                0.0
            };
            let b = if r < DEGREE {
                ratio(lower[r], t[i + DEGREE + 1] - t[i + 1])
            } else {
                0.0
            };
            *slot = p * (a - b);
        }
        (mu - DEGREE, d)
    }

    /// Greville abscissae: knot averages at which coefficients sit.
    pub fn greville(&self) -> Vec<f64> {
        (0..self.n_basis())
            .map(|i| self.knots[i + 1..=i + DEGREE].iter().sum::<f64>() / DEGREE as f64)
            .collect()
    }
}
