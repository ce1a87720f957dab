use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ShrunkCovariance {
    pub covariance: Array2<f64>,
    /// Shrinkage intensity in `[0, 1]`.
    pub lambda: f64,
    /// Scale of the identity target, `trace(S) / p`.
    pub target_scale: f64,
}

/// Maximum-likelihood (1/n) covariance of the centred data.
pub fn empirical_covariance(data: ArrayView2<f64>) -> Array2<f64> {
    let n = data.nrows() as f64;
    let mean: Array1<f64> = data.mean_axis(Axis(0)).expect("non-empty data");
    let centered = &data - &mean;
    centered.t().dot(&centered) / n
}

/// Ledoit-Wolf shrinkage towards a scaled identity:
/// `(1 - lambda) * S + lambda * mu * I` with `mu = trace(S) / p` and the
/// analytic intensity estimate clamped to `[0, 1]`.
pub fn ledoit_wolf(data: ArrayView2<f64>) -> Result<ShrunkCovariance> {
    let (n, p) = data.dim();
    if n < 2 || p == 0 {
        return Err(Error::InvalidArgument(format!(
            "shrinkage estimate needs at least 2 samples and 1 feature, got {n}x{p}"
        )));
    }
    let nf = n as f64;
    let pf = p as f64;
    let mean: Array1<f64> = data.mean_axis(Axis(0)).expect("n >= 2");
    let x = &data - &mean;
    let s = x.t().dot(&x) / nf;
    let mu = s.diag().sum() / pf;

    // ||S - mu I||_F^2 / p
    let s_norm2: f64 = s.iter().map(|v| v * v).sum();
    let delta = (s_norm2 - 2.0 * mu * s.diag().sum() + pf * mu * mu) / pf;
    // (1/n^2) sum_k ||x_k x_k^T - S||_F^2 / p, expanded
    let x2 = x.mapv(|v| v * v);
    let beta_sum: f64 = x2.t().dot(&x2).sum();
    let beta = (beta_sum / nf - s_norm2) / (pf * nf);
    let beta = beta.min(delta);
    let lambda = if delta <= 0.0 || beta <= 0.0 {
        0.0
    } else {
        (beta / delta).clamp(0.0, 1.0)
    };

    Ok(ShrunkCovariance {
        covariance: shrink(&s, lambda, mu),
        lambda,
        target_scale: mu,
    })
}

pub(crate) fn shrink(s: &Array2<f64>, lambda: f64, mu: f64) -> Array2<f64> {
    let mut out = s * (1.0 - lambda);
    for i in 0..s.nrows() {
        out[(i, i)] += lambda * mu;
    }
    out
}
