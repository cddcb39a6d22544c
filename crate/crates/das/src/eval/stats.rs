//! Rank and linear correlation statistics used by the benchmarks.

use crate::error::{DasError, Result};

/// Mid-ranks (average rank over ties), 1-based.
pub fn midranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(DasError::Parameter(format!(
            "correlation needs two equal-length vectors of size >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(DasError::UndefinedCorrelation(
            "zero variance in correlation input".into(),
        ));
    }
    Ok(cov / (va * vb).sqrt())
}

/// Pearson correlation of mid-ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(DasError::Parameter(format!(
            "spearman needs two equal-length vectors of size >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    pearson(&midranks(a), &midranks(b)).map_err(|e| match e {
        DasError::UndefinedCorrelation(_) => {
            DasError::UndefinedCorrelation("zero variance in ranks".into())
        }
        other => other,
    })
}

/// Report-level convention: a degenerate correlation counts as 0 and is
/// flagged, so constant-score methods still appear in tables.
pub fn spearman_or_zero(a: &[f64], b: &[f64]) -> (f64, bool) {
    match spearman(a, b) {
        Ok(r) => (r, false),
        Err(_) => (0.0, true),
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
    }

    #[test]
    fn spearman_symmetric_and_monotone_invariant() {
        let a = [0.3, -1.2, 4.0, 2.2, 0.0];
        let b = [1.0, 0.5, 9.0, 3.0, 2.0];
        let ab = spearman(&a, &b).unwrap();
        let ba = spearman(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        let bt: Vec<f64> = b.iter().map(|x| x.exp() * 3.0 + 7.0).collect();
        assert!((spearman(&a, &bt).unwrap() - ab).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(DasError::UndefinedCorrelation(_))
        ));
        let (r, flag) = spearman_or_zero(&[1.0, 1.0], &[1.0, 2.0]);
        assert_eq!(r, 0.0);
        assert!(flag);
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn midranks_handle_ties() {
        assert_eq!(midranks(&[10.0, 20.0, 20.0, 30.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn pearson_self_is_one() {
        let v = [0.4, 1.9, -2.0, 0.7];
        assert!((pearson(&v, &v).unwrap() - 1.0).abs() < 1e-12);
    }
}
