//! On-disk feature store: magic "DASF", version, extraction metadata, then
//! per-sample (timestep, gradient block, residual) records. Little-endian.

use super::{FeatureMode, FeatureSet, SampleFeatures, TimestepFeatures};
use crate::error::{DasError, Result};
use crate::io_util::*;
use crate::linalg::Mat;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"DASF";
const VERSION: u32 = 1;

pub fn store_write(path: &Path, set: &FeatureSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    let (mode, scalarizer) = set.mode.tag();
    write_u32(&mut w, mode as u32)?;
    write_u32(&mut w, scalarizer as u32)?;
    write_u32(&mut w, set.k as u32)?;
    write_u32(&mut w, set.d as u32)?;
    write_u32(&mut w, set.draws as u32)?;
    write_u32(&mut w, set.timesteps.len() as u32)?;
    for &t in &set.timesteps {
        write_u64(&mut w, t as u64)?;
    }
    write_u32(&mut w, set.samples.len() as u32)?;
    for s in &set.samples {
        write_u64(&mut w, s.sample_id)?;
        write_u32(&mut w, s.blocks.len() as u32)?;
        for b in &s.blocks {
            write_u64(&mut w, b.t as u64)?;
            write_u32(&mut w, b.g.rows as u32)?;
            write_u32(&mut w, b.g.cols as u32)?;
            for i in 0..b.g.rows {
                for &v in b.g.row(i) {
                    write_f64(&mut w, v)?;
                }
            }
            write_u32(&mut w, b.r.len() as u32)?;
            for &v in &b.r {
                write_f64(&mut w, v)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn store_read(path: &Path) -> Result<FeatureSet> {
    let mut r = BufReader::new(File::open(path)?);
    let mut offset = 0u64;
    let mut magic = [0u8; 4];
    read_exact_at(&mut r, &mut magic, &mut offset)?;
    if &magic != MAGIC {
        return Err(DasError::Format { msg: "bad feature-store magic".into(), offset: 0 });
    }
    let version = read_u32(&mut r, &mut offset)?;
    if version != VERSION {
        return Err(DasError::Format {
            msg: format!("unsupported feature-store version {version}"),
            offset: offset - 4,
        });
    }
    let mode_tag = read_u32(&mut r, &mut offset)?;
    let scalarizer_tag = read_u32(&mut r, &mut offset)?;
    let mode = FeatureMode::from_tag(mode_tag as u8, scalarizer_tag as u8).map_err(|_| {
        DasError::Format {
            msg: format!("unknown feature mode tag ({mode_tag}, {scalarizer_tag})"),
            offset: offset - 8,
        }
    })?;
    let k = read_u32(&mut r, &mut offset)? as usize;
    let d = read_u32(&mut r, &mut offset)? as usize;
    let draws = read_u32(&mut r, &mut offset)? as usize;
    let nt = read_u32(&mut r, &mut offset)? as usize;
    let mut timesteps = Vec::with_capacity(nt);
    for _ in 0..nt {
        timesteps.push(read_u64(&mut r, &mut offset)? as usize);
    }
    let ns = read_u32(&mut r, &mut offset)? as usize;
    let mut samples = Vec::with_capacity(ns);
    for _ in 0..ns {
        let sample_id = read_u64(&mut r, &mut offset)?;
        let nb = read_u32(&mut r, &mut offset)? as usize;
        let mut blocks = Vec::with_capacity(nb);
        for _ in 0..nb {
            let t = read_u64(&mut r, &mut offset)? as usize;
            let rows = read_u32(&mut r, &mut offset)? as usize;
            let cols = read_u32(&mut r, &mut offset)? as usize;
            let mut g = Mat::zeros(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    g[(i, j)] = read_f64(&mut r, &mut offset)?;
                }
            }
            let rd = read_u32(&mut r, &mut offset)? as usize;
            let mut res = Vec::with_capacity(rd);
            for _ in 0..rd {
                res.push(read_f64(&mut r, &mut offset)?);
            }
            blocks.push(TimestepFeatures { t, g, r: res });
        }
        samples.push(SampleFeatures { sample_id, blocks });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(DasError::Format { msg: "trailing bytes after feature data".into(), offset });
    }
    Ok(FeatureSet { mode, k, d, timesteps, draws, samples })
}
