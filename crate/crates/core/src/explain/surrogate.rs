//! Weighted ridge surrogate.
//!
//! The fit minimizes `Σ wᵢ (yᵢ − b − xᵢ·β)² / Σ wᵢ + λ |β|²` on features
//! standardized by their weighted mean and deviation, then maps the
//! coefficients back to mask units. Normalizing by `Σ w` makes the fit
//! invariant to repeating the sample set.

use serde::{Deserialize, Serialize};

use super::ExplainError;
use crate::fewshot::tensor::{matmul, Mat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateFit {
    /// Per-feature weights in mask units; zero outside the retained set.
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Indices of retained features, by decreasing `|weight|`.
    pub selected: Vec<usize>,
    /// Weighted R² of the retained surrogate on the sample set.
    pub fidelity: f64,
}

/// Fits the surrogate to `z` (`n × p`, row-major), targets `y` and sample
/// weights `w`, keeping the `top_k` largest-magnitude weights.
pub fn fit_surrogate(
    z: &[f64],
    p: usize,
    y: &[f64],
    w: &[f64],
    lambda: f64,
    top_k: usize,
) -> Result<SurrogateFit, ExplainError> {
    let n = y.len();
    if z.len() != n * p || w.len() != n {
        return Err(ExplainError::InvalidInput(format!(
            "design {} values for {n} samples × {p} features, {} weights",
            z.len(),
            w.len()
        )));
    }
    if !(lambda >= 0.0) || w.iter().any(|&v| !(v >= 0.0)) {
        return Err(ExplainError::InvalidInput(
            "ridge λ and sample weights must be non-negative".into(),
        ));
    }
    let selected_n = top_k.min(p);
    if n < 2 * selected_n.max(1) {
        return Err(ExplainError::TooFewSamples {
            have: n,
            need: 2 * selected_n.max(1),
        });
    }
    let wsum: f64 = w.iter().sum();
    if wsum <= 0.0 {
        return Err(ExplainError::InvalidInput(
            "sample weights sum to zero".into(),
        ));
    }
    let y_mean = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / wsum;
    let mut mean = vec![0.0; p];
    for (row, &wi) in z.chunks_exact(p).zip(w) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += wi * v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= wsum);
    let mut sd = vec![0.0; p];
    for (row, &wi) in z.chunks_exact(p).zip(w) {
        for j in 0..p {
            let d = row[j] - mean[j];
            sd[j] += wi * d * d;
        }
    }
    sd.iter_mut().for_each(|s| *s = (*s / wsum).sqrt());
    let active: Vec<usize> = (0..p).filter(|&j| sd[j] > 1e-12).collect();
    let q = active.len();

    let mut weights = vec![0.0; p];
    if q > 0 {
        // rows scaled by sqrt(w / Σw)
        let mut xs = vec![0.0; n * q];
        let mut ys = vec![0.0; n];
        for i in 0..n {
            let s = (w[i] / wsum).sqrt();
            for (k, &j) in active.iter().enumerate() {
                xs[i * q + k] = s * (z[i * p + j] - mean[j]) / sd[j];
            }
            ys[i] = s * (y[i] - y_mean);
        }
        let mut gram = vec![0.0; q * q];
        matmul(
            &mut gram,
            Mat::new(&xs, n, q).t(),
            Mat::new(&xs, n, q),
            false,
        );
        for k in 0..q {
            gram[k * q + k] += lambda;
        }
        let mut rhs = vec![0.0; q];
        matmul(
            &mut rhs,
            Mat::new(&xs, n, q).t(),
            Mat::new(&ys, n, 1),
            false,
        );
        let beta = cholesky_solve(gram, rhs, q).ok_or(ExplainError::SingularSystem)?;
        for (k, &j) in active.iter().enumerate() {
            weights[j] = beta[k] / sd[j];
        }
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        weights[b]
            .abs()
            .total_cmp(&weights[a].abs())
            .then(a.cmp(&b))
    });
    let selected: Vec<usize> = order.into_iter().take(selected_n).collect();
    let mut kept = vec![0.0; p];
    for &j in &selected {
        kept[j] = weights[j];
    }
    let intercept = y_mean - kept.iter().zip(&mean).map(|(a, b)| a * b).sum::<f64>();

    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (i, row) in z.chunks_exact(p).enumerate() {
        let pred = intercept + selected.iter().map(|&j| kept[j] * row[j]).sum::<f64>();
        ss_res += w[i] * (y[i] - pred).powi(2);
        ss_tot += w[i] * (y[i] - y_mean).powi(2);
    }
    let fidelity = if ss_tot > 1e-300 {
        1.0 - ss_res / ss_tot
    } else {
        0.0
    };
    Ok(SurrogateFit {
        weights: kept,
        intercept,
        selected,
        fidelity,
    })
}

/// Solves `A x = b` for symmetric positive definite `A` (`n × n`).
fn cholesky_solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    let scale = (0..n)
        .map(|i| a[i * n + i].abs())
        .fold(0.0, f64::max)
        .max(1.0);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 1e-12 * scale) {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Some(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_segment_hand_solution() {
        let z = [1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let y = [1.0, 0.9, 0.1, 0.0];
        let fit = fit_surrogate(&z, 2, &y, &[1.0; 4], 1e-10, 2).unwrap();
        assert!((fit.weights[0] - 0.9).abs() < 1e-6);
        assert!((fit.weights[1] - 0.1).abs() < 1e-6);
        assert_eq!(fit.selected, vec![0, 1]);
        assert!(fit.fidelity > 0.999);
    }

    #[test]
    fn constant_target_gives_zero_weights() {
        let z = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        let fit = fit_surrogate(&z, 2, &[0.4; 4], &[1.0; 4], 1.0, 2).unwrap();
        assert!(fit.weights.iter().all(|w| w.abs() < 1e-12));
        assert_eq!(fit.fidelity, 0.0);
        assert!((fit.intercept - 0.4).abs() < 1e-12);
    }

    #[test]
    fn cholesky_detects_singular() {
        assert!(cholesky_solve(vec![1.0, 1.0, 1.0, 1.0], vec![1.0, 1.0], 2).is_none());
        let x = cholesky_solve(vec![4.0, 2.0, 2.0, 3.0], vec![2.0, 1.0], 2).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12 && x[1].abs() < 1e-12);
    }

    #[test]
    fn collinear_without_ridge_is_singular() {
        // two identical columns
        let z = [1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let err = fit_surrogate(&z, 2, &[1.0, 0.0, 1.0, 0.0], &[1.0; 4], 0.0, 1).unwrap_err();
        assert!(matches!(err, ExplainError::SingularSystem));
    }
}
