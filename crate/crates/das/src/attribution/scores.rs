//! The attribution scores themselves: the Newton-step score and the
//! kernel/similarity baselines it is compared against.

use super::kernel::Kernel;
use crate::error::{DasError, Result};
use crate::features::{AveragedFeatures, SampleFeatures};
use crate::linalg::{dot, norm2, Mat};

/// A scored training set for one target. `leverage[i]` marks samples whose
/// Sherman–Morrison denominator was singular; their score is pinned to 0
/// instead of ±∞.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionResult {
    pub target_id: u64,
    pub method: String,
    pub lambda: f64,
    pub scores: Vec<f64>,
    pub leverage: Vec<bool>,
}

impl AttributionResult {
    pub fn new(target_id: u64, method: &str, lambda: f64, scores: Vec<f64>) -> Self {
        let n = scores.len();
        AttributionResult { target_id, method: method.into(), lambda, scores, leverage: vec![false; n] }
    }

    /// Ranks 1..n by descending score, ties broken by training index.
    pub fn ranks(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| {
            self.scores[b].partial_cmp(&self.scores[a]).unwrap().then(a.cmp(&b))
        });
        let mut ranks = vec![0; self.scores.len()];
        for (pos, &i) in order.iter().enumerate() {
            ranks[i] = pos + 1;
        }
        ranks
    }

    /// Indices of the k highest-scored samples, descending.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| {
            self.scores[b].partial_cmp(&self.scores[a]).unwrap().then(a.cmp(&b))
        });
        order.truncate(k);
        order
    }
}

const LEVERAGE_TOL: f64 = 1e-12;

/// Sherman–Morrison/Woodbury pieces for one training sample: W = H⁻¹G_iᵀ
/// (row layout), M = G_i H⁻¹ G_iᵀ, and D = I − M.
struct SmPieces {
    w: Mat,
    d_inv: Option<Mat>,
}

fn sm_pieces(kernel: &Kernel, g: &Mat) -> SmPieces {
    let w = kernel.solve_rows(g);
    let dg = g.rows;
    let mut d = Mat::identity(dg);
    for a in 0..dg {
        for b in 0..dg {
            d[(a, b)] -= dot(g.row(a), w.row(b));
        }
    }
    // a singular (or negative-pivot) denominator is the leverage-one case
    let d_inv = match d.inverse_gauss_jordan() {
        Ok(inv) => {
            let det_ok = (0..dg).all(|a| d[(a, a)].is_finite());
            if det_ok && frobenius_min_pivot(&d) > LEVERAGE_TOL {
                Some(inv)
            } else {
                None
            }
        }
        Err(_) => None,
    };
    SmPieces { w, d_inv }
}

/// Smallest absolute diagonal entry after an LU-free cheap proxy: for the
/// tiny d×d denominators we gauge near-singularity by the smallest singular
/// value bound |det|^(1/d) via the Gauss-Jordan success plus a direct check
/// of ‖D x‖ on the worst inverse column.
fn frobenius_min_pivot(d: &Mat) -> f64 {
    // for the scalar case this is just |D|
    if d.rows == 1 {
        return d[(0, 0)].abs();
    }
    // lower bound: 1 / ‖D⁻¹‖_F computed lazily by the caller's inverse; here
    // use |det| of the small matrix via Gauss elimination
    let mut a = d.clone();
    let n = a.rows;
    let mut det: f64 = 1.0;
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[(r, col)].abs() > a[(piv, col)].abs() {
                piv = r;
            }
        }
        if a[(piv, col)].abs() < LEVERAGE_TOL {
            return 0.0;
        }
        if piv != col {
            for j in 0..n {
                let t = a[(piv, j)];
                a[(piv, j)] = a[(col, j)];
                a[(col, j)] = t;
            }
            det = -det;
        }
        det *= a[(col, col)];
        for r in col + 1..n {
            let f = a[(r, col)] / a[(col, col)];
            for j in col..n {
                a[(r, j)] -= f * a[(col, j)];
            }
        }
    }
    det.abs().powf(1.0 / n as f64)
}

fn check_shapes(target: &AveragedFeatures, train: &[AveragedFeatures], kernel: &Kernel) -> Result<()> {
    if target.g.cols != kernel.dim {
        return Err(DasError::Shape(format!(
            "target feature width {} vs kernel dim {}",
            target.g.cols, kernel.dim
        )));
    }
    for f in train {
        if f.g.cols != kernel.dim || f.g.rows != target.g.rows {
            return Err(DasError::Shape(format!(
                "train feature block {}x{} vs target {}x{}",
                f.g.rows, f.g.cols, target.g.rows, target.g.cols
            )));
        }
    }
    Ok(())
}

/// Squared norm of the predicted output change when sample i is removed:
/// ‖G_gen H⁻¹ G_iᵀ (I − G_i H⁻¹ G_iᵀ)⁻¹ r̄_i‖². In scalarized mode the
/// denominator is the scalar 1 − ḡ_iᵀH⁻¹ḡ_i and the residual enters by norm.
pub fn das_score(
    target: &AveragedFeatures,
    train: &[AveragedFeatures],
    kernel: &Kernel,
) -> Result<AttributionResult> {
    check_shapes(target, train, kernel)?;
    let dg = target.g.rows;
    let mut scores = Vec::with_capacity(train.len());
    let mut leverage = vec![false; train.len()];
    for (idx, f) in train.iter().enumerate() {
        let pieces = sm_pieces(kernel, &f.g);
        let Some(d_inv) = pieces.d_inv else {
            leverage[idx] = true;
            scores.push(0.0);
            continue;
        };
        if dg == 1 && f.r.len() != 1 {
            // scalarized gradients with a d-dimensional residual
            let c = dot(target.g.row(0), pieces.w.row(0));
            let s = c * d_inv[(0, 0)] * norm2(&f.r);
            scores.push(s * s);
        } else {
            // per-output rows: v = G_gen · W · D⁻¹ r
            let dr = d_inv.matvec(&f.r);
            let wt_dr = pieces.w.matvec_t(&dr); // k-vector: Wᵀ (D⁻¹ r) = H⁻¹Gᵀ... rows
            // W rows are H⁻¹g_a, so Σ_a (D⁻¹r)_a H⁻¹ g_a = H⁻¹Gᵀ(D⁻¹r)
            let v = target.g.matvec(&wt_dr);
            scores.push(dot(&v, &v));
        }
    }
    let mut out = AttributionResult::new(target.sample_id, "das", kernel.lambda, scores);
    out.leverage = leverage;
    Ok(out)
}

/// `das_score` on each retained (timestep, draw) block separately.
pub fn das_per_timestep(
    target_blocks: &SampleFeatures,
    train_blocks: &[SampleFeatures],
    lambda: f64,
) -> Result<Vec<(usize, AttributionResult)>> {
    let nb = target_blocks.blocks.len();
    for s in train_blocks {
        if s.blocks.len() != nb {
            return Err(DasError::Shape(format!(
                "sample {} has {} blocks, target has {}",
                s.sample_id,
                s.blocks.len(),
                nb
            )));
        }
    }
    let mut out = Vec::with_capacity(nb);
    for b in 0..nb {
        let target = AveragedFeatures {
            sample_id: target_blocks.sample_id,
            g: target_blocks.blocks[b].g.clone(),
            r: target_blocks.blocks[b].r.clone(),
            normalized: false,
        };
        let train: Vec<AveragedFeatures> = train_blocks
            .iter()
            .map(|s| AveragedFeatures {
                sample_id: s.sample_id,
                g: s.blocks[b].g.clone(),
                r: s.blocks[b].r.clone(),
                normalized: false,
            })
            .collect();
        let kernel = super::kernel::build_kernel(&train, lambda)?;
        let mut res = das_score(&target, &train, &kernel)?;
        res.method = "das_per_timestep".into();
        out.push((target_blocks.blocks[b].t, res));
    }
    Ok(out)
}

/// Predicted parameter change θ* − θ*_{\i} from removing sample i, without
/// refactorizing: H⁻¹G_iᵀ(I − G_i H⁻¹G_iᵀ)⁻¹ r_i (all under the damped H).
pub fn newton_loo_delta(
    train: &[AveragedFeatures],
    kernel: &Kernel,
    i: usize,
) -> Result<Vec<f64>> {
    let f = train.get(i).ok_or(DasError::Index { index: i, len: train.len() })?;
    if f.g.rows != f.r.len() {
        return Err(DasError::Shape(format!(
            "newton step needs one gradient row per residual coordinate ({} rows, {} residuals)",
            f.g.rows,
            f.r.len()
        )));
    }
    let pieces = sm_pieces(kernel, &f.g);
    let Some(d_inv) = pieces.d_inv else {
        return Err(DasError::Singular {
            pivot: 0.0,
            context: format!("leverage-one training sample {i}"),
        });
    };
    let dr = d_inv.matvec(&f.r);
    Ok(pieces.w.matvec_t(&dr))
}

fn kernel_numerators(
    target_row: &[f64],
    train: &[AveragedFeatures],
    kernel: &Kernel,
) -> Vec<f64> {
    let hg = kernel.solve(target_row);
    train.iter().map(|f| dot(f.g.row(0), &hg)).collect()
}

fn require_scalar_rows(target: &AveragedFeatures, train: &[AveragedFeatures]) -> Result<()> {
    if target.g.rows != 1 || train.iter().any(|f| f.g.rows != 1) {
        return Err(DasError::Config(
            "this method needs scalarized gradient features (one row per sample)".into(),
        ));
    }
    Ok(())
}

/// φ_genᵀH⁻¹φ_i scaled by ‖r̄_i‖ (the diffusion stand-in for the
/// classification residual factor).
pub fn trak_score(
    target: &AveragedFeatures,
    train: &[AveragedFeatures],
    kernel: &Kernel,
) -> Result<AttributionResult> {
    require_scalar_rows(target, train)?;
    check_shapes(target, train, kernel)?;
    let nums = kernel_numerators(target.g.row(0), train, kernel);
    let scores = nums
        .iter()
        .zip(train)
        .map(|(c, f)| c * norm2(&f.r))
        .collect();
    Ok(AttributionResult::new(target.sample_id, "trak", kernel.lambda, scores))
}

/// φ_genᵀH⁻¹φ_i with no residual factor; which scalarizer produced φ is the
/// caller's (method variant's) choice.
pub fn dtrak_score(
    target: &AveragedFeatures,
    train: &[AveragedFeatures],
    kernel: &Kernel,
    method: &str,
) -> Result<AttributionResult> {
    require_scalar_rows(target, train)?;
    check_shapes(target, train, kernel)?;
    let scores = kernel_numerators(target.g.row(0), train, kernel);
    Ok(AttributionResult::new(target.sample_id, method, kernel.lambda, scores))
}

/// Mean over the sampling trajectory's steps of the kernel numerator with the
/// step's own gradient as target.
pub fn journey_trak_score(
    trajectory: &SampleFeatures,
    train: &[AveragedFeatures],
    kernel: &Kernel,
) -> Result<AttributionResult> {
    if trajectory.blocks.is_empty() {
        return Err(DasError::Config("journey score needs a recorded trajectory".into()));
    }
    if trajectory.blocks.iter().any(|b| b.g.rows != 1) || train.iter().any(|f| f.g.rows != 1) {
        return Err(DasError::Config(
            "journey score needs scalarized gradient features".into(),
        ));
    }
    let mut scores = vec![0.0; train.len()];
    for b in &trajectory.blocks {
        let nums = kernel_numerators(b.g.row(0), train, kernel);
        for (s, c) in scores.iter_mut().zip(nums) {
            *s += c / trajectory.blocks.len() as f64;
        }
    }
    Ok(AttributionResult::new(trajectory.sample_id, "journey_trak", kernel.lambda, scores))
}

/// Kernel numerator divided by ‖H⁻¹φ_i‖ (relative) or ‖φ_i‖ (renormalized);
/// zero-norm training features score 0.
pub fn normalized_if_score(
    target: &AveragedFeatures,
    train: &[AveragedFeatures],
    kernel: &Kernel,
    relative: bool,
) -> Result<AttributionResult> {
    require_scalar_rows(target, train)?;
    check_shapes(target, train, kernel)?;
    let nums = kernel_numerators(target.g.row(0), train, kernel);
    let scores = nums
        .iter()
        .zip(train)
        .map(|(c, f)| {
            let norm = if relative {
                norm2(&kernel.solve(f.g.row(0)))
            } else {
                norm2(f.g.row(0))
            };
            if norm == 0.0 {
                0.0
            } else {
                c / norm
            }
        })
        .collect();
    let name = if relative { "relative_if" } else { "renormalized_if" };
    Ok(AttributionResult::new(target.sample_id, name, kernel.lambda, scores))
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm2(a), norm2(b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Plain inner products (or cosines) of averaged gradient features.
pub fn gradient_similarity(
    target: &AveragedFeatures,
    train: &[AveragedFeatures],
    cos: bool,
) -> Result<AttributionResult> {
    require_scalar_rows(target, train)?;
    let t = target.g.row(0);
    let scores = train
        .iter()
        .map(|f| if cos { cosine(t, f.g.row(0)) } else { dot(t, f.g.row(0)) })
        .collect();
    let name = if cos { "gradient_cos" } else { "gradient_dot" };
    Ok(AttributionResult::new(target.sample_id, name, 0.0, scores))
}

/// Mean gradient inner product (or cosine, for the GAS variant) across
/// checkpoint feature sets; entry c holds (target features, train features)
/// extracted from checkpoint c.
pub fn tracincp_score(
    per_checkpoint: &[(AveragedFeatures, Vec<AveragedFeatures>)],
    cos: bool,
) -> Result<AttributionResult> {
    if per_checkpoint.is_empty() {
        return Err(DasError::Config("tracincp needs at least one checkpoint".into()));
    }
    let n = per_checkpoint[0].1.len();
    let mut scores = vec![0.0; n];
    for (target, train) in per_checkpoint {
        if train.len() != n {
            return Err(DasError::Shape("inconsistent train size across checkpoints".into()));
        }
        let part = gradient_similarity(target, train, cos)?;
        for (s, p) in scores.iter_mut().zip(part.scores) {
            *s += p / per_checkpoint.len() as f64;
        }
    }
    let name = if cos { "gas" } else { "tracincp" };
    Ok(AttributionResult::new(per_checkpoint[0].0.sample_id, name, 0.0, scores))
}

/// Similarity on the raw sample vectors themselves.
pub fn raw_similarity(
    target_id: u64,
    target_x: &[f64],
    train_x: &[Vec<f64>],
    cos: bool,
) -> AttributionResult {
    let scores = train_x
        .iter()
        .map(|x| if cos { cosine(target_x, x) } else { dot(target_x, x) })
        .collect();
    let name = if cos { "raw_pixel_cos" } else { "raw_pixel_dot" };
    AttributionResult::new(target_id, name, 0.0, scores)
}

/// Indices of the m most-cosine-similar training samples; ties break toward
/// the lower index.
pub fn candidate_filter(target_x: &[f64], train_x: &[Vec<f64>], m: usize) -> Result<Vec<usize>> {
    if m == 0 || m > train_x.len() {
        return Err(DasError::Parameter(format!(
            "candidate count {m} outside [1, {}]",
            train_x.len()
        )));
    }
    let sims: Vec<f64> = train_x.iter().map(|x| cosine(target_x, x)).collect();
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    order.sort_by(|&a, &b| sims[b].partial_cmp(&sims[a]).unwrap().then(a.cmp(&b)));
    order.truncate(m);
    order.sort_unstable();
    Ok(order)
}

/// Zeroes every score outside the candidate subset.
pub fn apply_candidate_filter(result: &mut AttributionResult, keep: &[usize]) {
    let mut mask = vec![false; result.scores.len()];
    for &i in keep {
        mask[i] = true;
    }
    for (s, keep) in result.scores.iter_mut().zip(mask) {
        if !keep {
            *s = 0.0;
        }
    }
}
