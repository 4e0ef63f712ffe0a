//! Non-negative least squares (Lawson-Hanson active set) and an iteratively reweighted variant
//! that drives the worst relative residual down.

use nalgebra::{DMatrix, DVector};

fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.clone()
        .svd(true, true)
        .solve(b, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

fn columns(a: &DMatrix<f64>, set: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), set.len(), |r, c| a[(r, set[c])])
}

/// Minimises `|A x - b|` subject to `x >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-10 * a.norm().max(1.0) * b.norm().max(1.0);

    for _ in 0..(3 * n + 10) {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        passive[j] = true;

        loop {
            let set: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let zp = lstsq(&columns(a, &set), b);
            let mut z = DVector::zeros(n);
            for (k, &col) in set.iter().enumerate() {
                z[col] = zp[k];
            }
            if set.iter().all(|&k| z[k] > 0.0) {
                x = z;
                break;
            }
            let alpha = set
                .iter()
                .filter(|&&k| z[k] <= 0.0)
                .map(|&k| x[k] / (x[k] - z[k]))
                .fold(f64::INFINITY, f64::min);
            x += (&z - &x) * alpha;
            for &k in &set {
                if x[k] <= 1e-15 {
                    x[k] = 0.0;
                    passive[k] = false;
                }
            }
            if passive.iter().all(|p| !p) {
                break;
            }
        }
    }
    x
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub coeffs: Vec<f64>,
    /// `|prediction - target| / scale` per row.
    pub residuals: Vec<f64>,
}

impl Fit {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Non-negative fit of `rows * c ~ targets`, judged by residuals relative to `scale`.
///
/// Starts from relative least squares and reweights rows by their residual (Lawson's
/// algorithm), keeping the iterate with the smallest worst-case relative error.
pub fn fit_minimax(rows: &[Vec<f64>], targets: &[f64], scale: &[f64], iterations: usize) -> Fit {
    let m = rows.len();
    let n = rows.first().map(Vec::len).unwrap_or(0);
    let a = DMatrix::from_fn(m, n, |r, c| rows[r][c]);
    let col_scale: Vec<f64> = (0..n)
        .map(|c| {
            let s = (0..m).map(|r| a[(r, c)].abs()).fold(0.0, f64::max);
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();

    let residuals = |c: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|r| {
                let pred: f64 = (0..n).map(|k| a[(r, k)] * c[k]).sum();
                (pred - targets[r]).abs() / scale[r]
            })
            .collect()
    };

    let mut weights = vec![1.0 / m.max(1) as f64; m];
    let mut best: Option<Fit> = None;
    for _ in 0..iterations.max(1) {
        let sw: Vec<f64> = (0..m).map(|r| weights[r].sqrt() / scale[r]).collect();
        let aw = DMatrix::from_fn(m, n, |r, c| a[(r, c)] / col_scale[c] * sw[r]);
        let bw = DVector::from_fn(m, |r, _| targets[r] * sw[r]);
        let x = nnls(&aw, &bw);
        let coeffs: Vec<f64> = (0..n).map(|c| x[c] / col_scale[c]).collect();
        let res = residuals(&coeffs);
        let worst = res.iter().copied().fold(0.0, f64::max);
        if best.as_ref().is_none_or(|b| worst < b.max_residual()) {
            best = Some(Fit {
                coeffs,
                residuals: res.clone(),
            });
        }
        let total: f64 = weights.iter().zip(&res).map(|(w, r)| w * r).sum();
        if total <= 0.0 {
            break;
        }
        for (w, r) in weights.iter_mut().zip(&res) {
            *w = (*w * r / total).max(1e-12);
        }
    }
    best.unwrap_or(Fit {
        coeffs: vec![0.0; n],
        residuals: vec![0.0; m],
    })
}
