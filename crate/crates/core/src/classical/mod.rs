//! Nearest-neighbour and shrinkage discriminant classifiers on PCA scores.

mod knn;
mod lda;
mod shrinkage;

pub use knn::{knn_fit, knn_predict, KnnModel};
pub use lda::{lda_fit, lda_predict, LdaModel, Shrinkage};
pub use shrinkage::{empirical_covariance, ledoit_wolf, ShrunkCovariance};

use crate::error::{Error, Result};

pub(crate) fn check_labels(n_rows: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != n_rows {
        return Err(Error::Dimension {
            expected: n_rows,
            got: labels.len(),
        });
    }
    Ok(())
}
