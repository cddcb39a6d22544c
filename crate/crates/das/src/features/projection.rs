//! Seeded Gaussian random projection. The matrix is regenerated from the
//! seed on demand, one row at a time, and never persisted.

use crate::error::{DasError, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSpec {
    pub k: usize,
    pub seed: u64,
    /// Apply the 1/sqrt(k) normalization.
    pub scale: bool,
    /// Optional parameter-subset mask of length p; None keeps all parameters.
    pub mask: Option<Vec<bool>>,
    /// Debug escape hatch: the projection is the identity map (requires k ==
    /// effective dimension).
    pub debug_identity: bool,
}

impl ProjectionSpec {
    pub fn new(k: usize, seed: u64) -> Self {
        ProjectionSpec { k, seed, scale: true, mask: None, debug_identity: false }
    }

    pub fn identity(p: usize) -> Self {
        ProjectionSpec { k: p, seed: 0, scale: false, mask: None, debug_identity: true }
    }
}

/// Rows are materialized in memory only while p*k stays below this budget;
/// above it (the 10⁵ × 4096 regime) rows are regenerated per batch instead.
const ROW_CACHE_BUDGET_FLOATS: usize = 1 << 24;

pub struct Projection {
    spec: ProjectionSpec,
    p_effective: usize,
    mask_indices: Option<Vec<usize>>,
    row_cache: std::sync::OnceLock<Vec<f64>>,
}

pub fn make_projection(spec: &ProjectionSpec, p: usize) -> Result<Projection> {
    let mask_indices = match &spec.mask {
        Some(m) => {
            if m.len() != p {
                return Err(DasError::Shape(format!(
                    "mask length {} != parameter count {p}",
                    m.len()
                )));
            }
            Some(m.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect::<Vec<_>>())
        }
        None => None,
    };
    let p_effective = mask_indices.as_ref().map(|v| v.len()).unwrap_or(p);
    if spec.k == 0 || spec.k > p_effective {
        return Err(DasError::Parameter(format!(
            "projection dimension k={} outside [1, {p_effective}]",
            spec.k
        )));
    }
    if spec.debug_identity && spec.k != p_effective {
        return Err(DasError::Parameter(
            "debug-identity projection requires k == effective dimension".into(),
        ));
    }
    Ok(Projection {
        spec: spec.clone(),
        p_effective,
        mask_indices,
        row_cache: std::sync::OnceLock::new(),
    })
}

impl Projection {
    pub fn out_dim(&self) -> usize {
        self.spec.k
    }

    pub fn p_effective(&self) -> usize {
        self.p_effective
    }

    fn row_rng(&self, row: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        rng.set_stream(row as u64 + 1);
        rng
    }

    /// Pᵀ v for a single full-length vector (length p before masking).
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.project_batch(&[v]).pop().unwrap()
    }

    /// Pᵀ v for many vectors at once. Each row of P is generated once and
    /// applied to every input; chunked partial sums are combined in fixed
    /// order so the result does not depend on thread scheduling.
    pub fn project_batch(&self, vs: &[&[f64]]) -> Vec<Vec<f64>> {
        let masked: Vec<Vec<f64>> = vs
            .iter()
            .map(|v| match &self.mask_indices {
                Some(idx) => idx.iter().map(|&i| v[i]).collect(),
                None => v.to_vec(),
            })
            .collect();
        if self.spec.debug_identity {
            return masked;
        }
        let k = self.spec.k;
        let cached: Option<&[f64]> = if self.p_effective * k <= ROW_CACHE_BUDGET_FLOATS {
            Some(self.row_cache.get_or_init(|| {
                let mut rows = vec![0.0; self.p_effective * k];
                rows.par_chunks_mut(k).enumerate().for_each(|(i, row)| {
                    let mut rng = self.row_rng(i);
                    for r in row.iter_mut() {
                        *r = rng.sample(StandardNormal);
                    }
                });
                rows
            }))
        } else {
            None
        };
        let chunk = 256usize;
        let starts: Vec<usize> = (0..self.p_effective).step_by(chunk).collect();
        let partials: Vec<Vec<Vec<f64>>> = starts
            .par_iter()
            .map(|&start| {
                let end = (start + chunk).min(self.p_effective);
                let mut acc = vec![vec![0.0; k]; masked.len()];
                let mut row_buf = vec![0.0; k];
                for i in start..end {
                    let row: &[f64] = match cached {
                        Some(rows) => &rows[i * k..(i + 1) * k],
                        None => {
                            let mut rng = self.row_rng(i);
                            for r in row_buf.iter_mut() {
                                *r = rng.sample(StandardNormal);
                            }
                            &row_buf
                        }
                    };
                    for (m, a) in masked.iter().zip(acc.iter_mut()) {
                        let vi = m[i];
                        if vi == 0.0 {
                            continue;
                        }
                        for j in 0..k {
                            a[j] += vi * row[j];
                        }
                    }
                }
                acc
            })
            .collect();
        let scale = if self.spec.scale { 1.0 / (k as f64).sqrt() } else { 1.0 };
        let mut out = vec![vec![0.0; k]; masked.len()];
        for part in &partials {
            for (o, p) in out.iter_mut().zip(part) {
                for j in 0..k {
                    o[j] += p[j];
                }
            }
        }
        if scale != 1.0 {
            for o in out.iter_mut() {
                for j in o.iter_mut() {
                    *j *= scale;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_mode_is_exact() {
        let spec = ProjectionSpec::identity(5);
        let proj = make_projection(&spec, 5).unwrap();
        let v = [1.0, -2.0, 3.0, 0.5, 0.0];
        assert_eq!(proj.project(&v), v.to_vec());
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = ProjectionSpec::new(16, 42);
        let proj = make_projection(&spec, 100).unwrap();
        let proj2 = make_projection(&spec, 100).unwrap();
        let v: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        assert_eq!(proj.project(&v), proj2.project(&v));
    }

    #[test]
    fn linearity() {
        let spec = ProjectionSpec::new(8, 7);
        let proj = make_projection(&spec, 40).unwrap();
        let u: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).cos()).collect();
        let v: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin()).collect();
        let comb: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let pu = proj.project(&u);
        let pv = proj.project(&v);
        let pc = proj.project(&comb);
        for j in 0..8 {
            assert!((pc[j] - (2.0 * pu[j] - 3.0 * pv[j])).abs() < 1e-10);
        }
    }

    #[test]
    fn k_out_of_range_rejected() {
        assert!(make_projection(&ProjectionSpec::new(0, 1), 10).is_err());
        assert!(make_projection(&ProjectionSpec::new(11, 1), 10).is_err());
    }

    #[test]
    fn mask_selects_subset() {
        let mut spec = ProjectionSpec::new(3, 1);
        spec.mask = Some(vec![true, false, true, false, true]);
        spec.debug_identity = true;
        spec.scale = false;
        let proj = make_projection(&spec, 5).unwrap();
        assert_eq!(proj.project(&[1.0, 2.0, 3.0, 4.0, 5.0]), vec![1.0, 3.0, 5.0]);
    }

    #[test]
    fn inner_products_preserved_small() {
        // small-scale Monte-Carlo JL check; the full-scale variant is in the
        // acceptance suite
        use rand::prelude::*;
        let p = 2000;
        let k = 512;
        let proj = make_projection(&ProjectionSpec::new(k, 5), p).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut total_err = 0.0;
        let pairs = 20;
        for _ in 0..pairs {
            let mut u: Vec<f64> = (0..p).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
            let mut v: Vec<f64> = (0..p).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
            let nu = crate::linalg::norm2(&u);
            let nv = crate::linalg::norm2(&v);
            u.iter_mut().for_each(|x| *x /= nu);
            v.iter_mut().for_each(|x| *x /= nv);
            let exact = crate::linalg::dot(&u, &v);
            let pr = proj.project_batch(&[&u, &v]);
            let approx = crate::linalg::dot(&pr[0], &pr[1]);
            total_err += (exact - approx).abs();
        }
        assert!(total_err / (pairs as f64) < 0.15);
    }
}
