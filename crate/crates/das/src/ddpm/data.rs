//! Synthetic two-class datasets and their on-disk format.

use crate::error::{DasError, Result};
use crate::io_util::{read_exact_at, read_f64, read_u32, write_f64, write_u32};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub features: Vec<f64>,
    pub label: Option<u32>,
}

pub const DATASET_MAGIC: &[u8; 4] = b"DASD";

/// 200 points from two 2-D Gaussians with means (±2, 0) and sigma 0.5.
pub fn gen_gauss2(n: usize, seed: u64) -> Vec<DataPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = (i % 2) as u32;
            let mean_x = if label == 0 { -2.0 } else { 2.0 };
            let x: f64 = rng.sample::<f64, _>(StandardNormal) * 0.5 + mean_x;
            let y: f64 = rng.sample::<f64, _>(StandardNormal) * 0.5;
            DataPoint { features: vec![x, y], label: Some(label) }
        })
        .collect()
}

/// 200 8x8 images: a Gaussian bump at a class-dependent corner plus pixel
/// noise with sigma 0.1.
pub fn gen_blobs8(n: usize, seed: u64) -> Vec<DataPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = (i % 2) as u32;
            let (cx, cy) = if label == 0 { (2.0, 2.0) } else { (5.0, 5.0) };
            // jitter the bump center slightly so samples differ beyond noise
            let jx: f64 = rng.sample::<f64, _>(StandardNormal) * 0.4;
            let jy: f64 = rng.sample::<f64, _>(StandardNormal) * 0.4;
            let mut px = vec![0.0; 64];
            for r in 0..8 {
                for c in 0..8 {
                    let dx = c as f64 - (cx + jx);
                    let dy = r as f64 - (cy + jy);
                    let bump = (-(dx * dx + dy * dy) / 2.0).exp();
                    let noise: f64 = rng.sample::<f64, _>(StandardNormal) * 0.1;
                    px[r * 8 + c] = bump + noise;
                }
            }
            DataPoint { features: px, label: Some(label) }
        })
        .collect()
}

pub fn generate_dataset(name: &str, n: usize, seed: u64) -> Result<Vec<DataPoint>> {
    match name {
        "gauss2" => Ok(gen_gauss2(n, seed)),
        "blobs8" => Ok(gen_blobs8(n, seed)),
        other => Err(DasError::Parameter(format!(
            "unknown dataset '{other}' (expected gauss2 or blobs8)"
        ))),
    }
}

pub fn write_dataset(path: &Path, data: &[DataPoint]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(DATASET_MAGIC)?;
    write_u32(&mut w, 1)?; // version
    let d = data.first().map(|p| p.features.len()).unwrap_or(0);
    write_u32(&mut w, d as u32)?;
    write_u32(&mut w, data.len() as u32)?;
    let has_labels = data.iter().all(|p| p.label.is_some());
    write_u32(&mut w, has_labels as u32)?;
    for p in data {
        if p.features.len() != d {
            return Err(DasError::Shape("inconsistent feature dims".into()));
        }
        for &f in &p.features {
            write_f64(&mut w, f)?;
        }
        if has_labels {
            write_u32(&mut w, p.label.unwrap())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<DataPoint>> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut offset = 0u64;
    let mut magic = [0u8; 4];
    read_exact_at(&mut r, &mut magic, &mut offset)?;
    if &magic != DATASET_MAGIC {
        return Err(DasError::Format { msg: "bad dataset magic".into(), offset: 0 });
    }
    let version = read_u32(&mut r, &mut offset)?;
    if version != 1 {
        return Err(DasError::Format {
            msg: format!("unsupported dataset version {version}"),
            offset: 4,
        });
    }
    let d = read_u32(&mut r, &mut offset)? as usize;
    let n = read_u32(&mut r, &mut offset)? as usize;
    let has_labels = read_u32(&mut r, &mut offset)? != 0;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut features = Vec::with_capacity(d);
        for _ in 0..d {
            features.push(read_f64(&mut r, &mut offset)?);
        }
        let label = if has_labels {
            Some(read_u32(&mut r, &mut offset)?)
        } else {
            None
        };
        out.push(DataPoint { features, label });
    }
    // trailing garbage counts as corruption
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(DasError::Format { msg: "trailing bytes after records".into(), offset });
    }
    Ok(out)
}
