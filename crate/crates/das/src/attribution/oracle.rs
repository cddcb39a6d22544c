//! Slow reference implementations: dense explicit-inverse evaluations of
//! every kernel score, explicit removal-and-refactorization for the Newton
//! step, and true leave-one-out retraining. Validation only.

use crate::ddpm::{train, DataPoint, NoisePredictor, TrainConfig};
use crate::error::{DasError, Result};
use crate::features::{AveragedFeatures, SampleFeatures};
use crate::linalg::{dot, norm2, Mat};

/// Explicit inverse of ΦᵀΦ + λI (all gradient rows accumulated densely).
pub fn dense_hinv(train: &[AveragedFeatures], lambda: f64) -> Result<Mat> {
    let k = train[0].g.cols;
    let mut h = Mat::zeros(k, k);
    for f in train {
        for i in 0..f.g.rows {
            h.add_outer(f.g.row(i), 1.0);
        }
    }
    h.add_diag(lambda);
    h.inverse_gauss_jordan()
}

/// Eq-by-the-book DAS through the explicit inverse, no Cholesky, no
/// Sherman–Morrison shortcuts beyond the formula itself.
pub fn dense_das(
    target: &AveragedFeatures,
    train: &[AveragedFeatures],
    lambda: f64,
) -> Result<Vec<f64>> {
    let hinv = dense_hinv(train, lambda)?;
    let dg = target.g.rows;
    train
        .iter()
        .map(|f| {
            // W = H⁻¹G_iᵀ as rows
            let w: Vec<Vec<f64>> = (0..dg).map(|a| hinv.matvec(f.g.row(a))).collect();
            let mut d = Mat::identity(dg);
            for a in 0..dg {
                for b in 0..dg {
                    d[(a, b)] -= dot(f.g.row(a), &w[b]);
                }
            }
            let d_inv = d.inverse_gauss_jordan()?;
            if dg == 1 && f.r.len() != 1 {
                let c = dot(target.g.row(0), &w[0]);
                let s = c * d_inv[(0, 0)] * norm2(&f.r);
                Ok(s * s)
            } else {
                let dr = d_inv.matvec(&f.r);
                let mut hgtdr = vec![0.0; hinv.rows];
                for a in 0..dg {
                    for (out, &wv) in hgtdr.iter_mut().zip(&w[a]) {
                        *out += dr[a] * wv;
                    }
                }
                let v = target.g.matvec(&hgtdr);
                Ok(dot(&v, &v))
            }
        })
        .collect()
}

/// Kernel numerators φ_genᵀH⁻¹φ_i through the explicit inverse.
pub fn dense_numerators(
    target: &AveragedFeatures,
    train: &[AveragedFeatures],
    lambda: f64,
) -> Result<Vec<f64>> {
    let hinv = dense_hinv(train, lambda)?;
    let hg = hinv.matvec(target.g.row(0));
    Ok(train.iter().map(|f| dot(f.g.row(0), &hg)).collect())
}

pub fn dense_trak(
    target: &AveragedFeatures,
    train: &[AveragedFeatures],
    lambda: f64,
) -> Result<Vec<f64>> {
    Ok(dense_numerators(target, train, lambda)?
        .into_iter()
        .zip(train)
        .map(|(c, f)| c * norm2(&f.r))
        .collect())
}

pub fn dense_normalized_if(
    target: &AveragedFeatures,
    train: &[AveragedFeatures],
    lambda: f64,
    relative: bool,
) -> Result<Vec<f64>> {
    let hinv = dense_hinv(train, lambda)?;
    let hg = hinv.matvec(target.g.row(0));
    Ok(train
        .iter()
        .map(|f| {
            let c = dot(f.g.row(0), &hg);
            let norm =
                if relative { norm2(&hinv.matvec(f.g.row(0))) } else { norm2(f.g.row(0)) };
            if norm == 0.0 {
                0.0
            } else {
                c / norm
            }
        })
        .collect())
}

pub fn dense_journey(
    trajectory: &SampleFeatures,
    train: &[AveragedFeatures],
    lambda: f64,
) -> Result<Vec<f64>> {
    let hinv = dense_hinv(train, lambda)?;
    let mut scores = vec![0.0; train.len()];
    for b in &trajectory.blocks {
        let hg = hinv.matvec(b.g.row(0));
        for (s, f) in scores.iter_mut().zip(train) {
            *s += dot(f.g.row(0), &hg) / trajectory.blocks.len() as f64;
        }
    }
    Ok(scores)
}

/// θ* − θ*_{\i} by actually removing sample i's rows from H and inverting:
/// (H − G_iᵀG_i)⁻¹ G_iᵀ r_i. The removal route the fast path must match.
pub fn explicit_removal_delta(
    train: &[AveragedFeatures],
    lambda: f64,
    i: usize,
) -> Result<Vec<f64>> {
    let f = train.get(i).ok_or(DasError::Index { index: i, len: train.len() })?;
    let k = f.g.cols;
    let mut h = Mat::zeros(k, k);
    for (j, other) in train.iter().enumerate() {
        if j == i {
            continue;
        }
        for a in 0..other.g.rows {
            h.add_outer(other.g.row(a), 1.0);
        }
    }
    h.add_diag(lambda);
    let hinv = h.inverse_gauss_jordan()?;
    let mut gr = vec![0.0; k];
    for a in 0..f.g.rows {
        for (out, &gv) in gr.iter_mut().zip(f.g.row(a)) {
            *out += f.r[a] * gv;
        }
    }
    Ok(hinv.matvec(&gr))
}

/// Retrains from the same seeded initialization with sample i held out.
pub fn true_loo_oracle(
    dataset: &[DataPoint],
    i: usize,
    config: &TrainConfig,
) -> Result<NoisePredictor> {
    if i >= dataset.len() {
        return Err(DasError::Index { index: i, len: dataset.len() });
    }
    let mut reduced = Vec::with_capacity(dataset.len() - 1);
    reduced.extend_from_slice(&dataset[..i]);
    reduced.extend_from_slice(&dataset[i + 1..]);
    Ok(train(&reduced, config)?.model)
}
