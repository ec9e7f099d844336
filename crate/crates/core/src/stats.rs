//! Small statistics and exact-summation helpers.

/// Least-squares fit y ≈ b0 + Σ b_k x_k.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinearFit {
    pub coef: Vec<f64>,
    pub stderr: Vec<f64>,
    pub r2: f64,
    pub residuals: Vec<f64>,
}

/// Ordinary least squares with intercept. Columns of `x` are regressors.
pub fn ols(x: &[Vec<f64>], y: &[f64]) -> Option<LinearFit> {
    let w = vec![1.0; y.len()];
    wls(x, y, &w, true)
}

/// Weighted least squares; `intercept` adds a constant column first.
pub fn wls(x: &[Vec<f64>], y: &[f64], w: &[f64], intercept: bool) -> Option<LinearFit> {
    let n = y.len();
    let p = x.first().map_or(0, |r| r.len()) + usize::from(intercept);
    if n < p || p == 0 {
        return None;
    }
    let design = nalgebra::DMatrix::from_fn(n, p, |i, j| {
        if intercept {
            if j == 0 {
                1.0
            } else {
                x[i][j - 1]
            }
        } else {
            x[i][j]
        }
    });
    let sw = nalgebra::DVector::from_iterator(n, w.iter().map(|v| v.sqrt()));
    let mut a = design.clone();
    for i in 0..n {
        for j in 0..p {
            a[(i, j)] *= sw[i];
        }
    }
    let b = nalgebra::DVector::from_iterator(n, y.iter().zip(sw.iter()).map(|(v, s)| v * s));
    let ata = a.transpose() * &a;
    let inv = ata.clone().try_inverse()?;
    let coef = &inv * (a.transpose() * &b);
    let fitted = &design * &coef;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    let wsum: f64 = w.iter().sum();
    let ybar = y.iter().zip(w).map(|(v, wi)| v * wi).sum::<f64>() / wsum;
    let ss_res: f64 = residuals.iter().zip(w).map(|(r, wi)| wi * r * r).sum();
    let ss_tot: f64 = y.iter().zip(w).map(|(v, wi)| wi * (v - ybar).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let dof = n.saturating_sub(p);
    let sigma2 = if dof > 0 { ss_res / dof as f64 } else { 0.0 };
    let stderr = (0..p).map(|j| (inv[(j, j)] * sigma2).max(0.0).sqrt()).collect();
    Some(LinearFit { coef: coef.iter().copied().collect(), stderr, r2, residuals })
}

/// Slope of log y against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let lx: Vec<Vec<f64>> = x.iter().map(|v| vec![v.ln()]).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    ols(&lx, &ly).map(|f| f.coef[1])
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Mean and standard error from `batches` contiguous batch means.
pub fn batch_means(x: &[f64], batches: usize) -> (f64, f64) {
    let m = mean(x);
    let b = batches.max(2).min(x.len().max(1));
    let size = x.len() / b;
    if size == 0 {
        return (m, f64::NAN);
    }
    let bm: Vec<f64> = (0..b).map(|i| mean(&x[i * size..(i + 1) * size])).collect();
    let mb = mean(&bm);
    let var = bm.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / (b - 1) as f64;
    (m, (var / b as f64).sqrt())
}

/// Delete-one-block jackknife: returns (full estimate, standard error).
pub fn jackknife<F: Fn(&[usize]) -> f64>(n: usize, blocks: usize, estimator: F) -> (f64, f64) {
    let all: Vec<usize> = (0..n).collect();
    let full = estimator(&all);
    let b = blocks.max(2).min(n.max(2));
    let size = n / b;
    if size == 0 {
        return (full, f64::NAN);
    }
    let mut reps = Vec::with_capacity(b);
    for k in 0..b {
        let idx: Vec<usize> = all.iter().copied().filter(|&i| i / size != k || i >= b * size).collect();
        reps.push(estimator(&idx));
    }
    let mr = mean(&reps);
    let var = reps.iter().map(|v| (v - mr).powi(2)).sum::<f64>() * (b - 1) as f64 / b as f64;
    (full, var.sqrt())
}

/// Error-free transformation a + b = s + e.
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Correctly rounded sum of a sequence of doubles (Shewchuk partials).
pub fn fsum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    // Round the expansion to nearest, half-even handled as in CPython's math.fsum.
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}
