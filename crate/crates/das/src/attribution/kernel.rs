//! Damped Gram matrix H = ΦᵀΦ + λI shared by every kernel-form score.

use crate::error::{DasError, Result};
use crate::features::AveragedFeatures;
use crate::linalg::{Cholesky, Mat};

#[derive(Debug)]
pub struct Kernel {
    pub lambda: f64,
    pub dim: usize,
    chol: Cholesky,
}

/// Accumulates the outer products of every gradient row (all d rows per
/// sample in exact-Jacobian mode), adds λI, and factorizes once.
pub fn build_kernel(train: &[AveragedFeatures], lambda: f64) -> Result<Kernel> {
    if lambda < 0.0 {
        return Err(DasError::Parameter(format!("negative damping {lambda}")));
    }
    if train.is_empty() {
        return Err(DasError::Parameter("empty training feature set".into()));
    }
    let k = train[0].g.cols;
    let mut h = Mat::zeros(k, k);
    for f in train {
        if f.g.cols != k {
            return Err(DasError::Shape(format!(
                "feature width {} does not match {}",
                f.g.cols, k
            )));
        }
        for i in 0..f.g.rows {
            h.add_outer(f.g.row(i), 1.0);
        }
    }
    h.add_diag(lambda);
    let chol = Cholesky::factor(&h).map_err(|e| match e {
        DasError::Singular { pivot, .. } => DasError::Singular {
            pivot,
            context: format!(
                "gram matrix not positive definite at lambda = {lambda} \
                 (rank-deficient features need lambda > 0)"
            ),
        },
        other => other,
    })?;
    Ok(Kernel { lambda, dim: k, chol })
}

impl Kernel {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.chol.solve(b)
    }

    /// H⁻¹ Gᵀ for a block G of gradient rows, returned as rows H⁻¹g_i
    /// (same layout as G).
    pub fn solve_rows(&self, g: &Mat) -> Mat {
        let rows: Vec<Vec<f64>> = (0..g.rows).map(|i| self.chol.solve(g.row(i))).collect();
        Mat::from_rows(&rows)
    }
}
