//! Model file: magic "DAS1", little-endian u32 layer count, layer sizes,
//! u32 T, f64 schedule params, f64 parameter vector.

use crate::ddpm::model::{param_count, NoisePredictor};
use crate::ddpm::schedule::{make_linear_schedule, DiffusionSchedule};
use crate::error::{DasError, Result};
use crate::io_util::{read_exact_at, read_f64, read_u32, write_f64, write_u32};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MODEL_MAGIC: &[u8; 4] = b"DAS1";

pub fn write_model(path: &Path, model: &NoisePredictor, schedule: &DiffusionSchedule) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MODEL_MAGIC)?;
    write_u32(&mut w, model.layer_sizes.len() as u32)?;
    for &s in &model.layer_sizes {
        write_u32(&mut w, s as u32)?;
    }
    write_u32(&mut w, schedule.num_timesteps as u32)?;
    write_f64(&mut w, schedule.beta_start)?;
    write_f64(&mut w, schedule.beta_end)?;
    for &p in &model.params {
        write_f64(&mut w, p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<(NoisePredictor, DiffusionSchedule)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut offset = 0u64;
    let mut magic = [0u8; 4];
    read_exact_at(&mut r, &mut magic, &mut offset)?;
    if &magic != MODEL_MAGIC {
        return Err(DasError::Format { msg: "bad model magic".into(), offset: 0 });
    }
    let n_sizes = read_u32(&mut r, &mut offset)? as usize;
    if n_sizes < 2 || n_sizes > 64 {
        return Err(DasError::Format {
            msg: format!("implausible layer count {n_sizes}"),
            offset: 4,
        });
    }
    let mut layer_sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        layer_sizes.push(read_u32(&mut r, &mut offset)? as usize);
    }
    let t = read_u32(&mut r, &mut offset)? as usize;
    let beta_start = read_f64(&mut r, &mut offset)?;
    let beta_end = read_f64(&mut r, &mut offset)?;
    let p = param_count(&layer_sizes);
    let mut params = Vec::with_capacity(p);
    for _ in 0..p {
        params.push(read_f64(&mut r, &mut offset)?);
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(DasError::Format { msg: "trailing bytes after parameters".into(), offset });
    }
    let schedule = make_linear_schedule(t, beta_start, beta_end)?;
    Ok((NoisePredictor { layer_sizes, params }, schedule))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn model_roundtrip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let model = NoisePredictor::init(2, &[8, 8], 2, &mut rng);
        let schedule = make_linear_schedule(100, 1e-4, 0.02).unwrap();
        write_model(&path, &model, &schedule).unwrap();
        let (m2, s2) = read_model(&path).unwrap();
        assert_eq!(m2, model);
        assert_eq!(s2, schedule);
    }

    #[test]
    fn truncated_model_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let model = NoisePredictor::new(2, &[4], 2);
        let schedule = make_linear_schedule(10, 1e-4, 0.02).unwrap();
        write_model(&path, &model, &schedule).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        match read_model(&path) {
            Err(DasError::Format { offset, .. }) => assert!(offset > 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        std::fs::write(&path, b"NOPE....").unwrap();
        assert!(matches!(read_model(&path), Err(DasError::Format { .. })));
    }
}
