//! Little-endian binary primitives with offset tracking for format errors.

use crate::error::{DasError, Result};
use std::io::{Read, Write};

pub fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn read_exact_at<R: Read>(r: &mut R, buf: &mut [u8], offset: &mut u64) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            DasError::Format { msg: "unexpected end of file".into(), offset: *offset }
        } else {
            DasError::Io(e)
        }
    })?;
    *offset += buf.len() as u64;
    Ok(())
}

pub fn read_u32<R: Read>(r: &mut R, offset: &mut u64) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_at(r, &mut b, offset)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_u64<R: Read>(r: &mut R, offset: &mut u64) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact_at(r, &mut b, offset)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_f64<R: Read>(r: &mut R, offset: &mut u64) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact_at(r, &mut b, offset)?;
    Ok(f64::from_le_bytes(b))
}
