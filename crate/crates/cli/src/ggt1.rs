//! The `GGT1` tensor file format.
//!
//! Layout: 4-byte magic `GGT1`, `u32` little-endian rank, `rank` × `u32` LE
//! extents, then `product(extents)` IEEE-754 `f32` LE values in row-major
//! order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ggt_core::Tensor;

use crate::error::{CliError, Result};

pub const MAGIC: [u8; 4] = *b"GGT1";
const MAX_RANK: u32 = 8;

pub fn write_tensor<W: Write>(mut w: W, t: &Tensor<f32>) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &extent in t.shape() {
        w.write_all(&(extent as u32).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<Tensor<f32>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| CliError::Input("file too short for a GGT1 header".into()))?;
    if magic != MAGIC {
        return Err(CliError::Input(format!(
            "bad magic {:?}, expected \"GGT1\"",
            String::from_utf8_lossy(&magic)
        )));
    }
    let rank = read_u32(&mut r)?;
    if rank == 0 || rank > MAX_RANK {
        return Err(CliError::Input(format!(
            "unsupported tensor rank {rank} (expected 1..={MAX_RANK})"
        )));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    let mut numel: usize = 1;
    for _ in 0..rank {
        let extent = read_u32(&mut r)? as usize;
        if extent == 0 {
            return Err(CliError::Input("zero extent in tensor shape".into()));
        }
        numel = numel
            .checked_mul(extent)
            .ok_or_else(|| CliError::Input("tensor shape overflows".into()))?;
        shape.push(extent);
    }
    let mut data = Vec::with_capacity(numel);
    let mut buf = [0u8; 4];
    for _ in 0..numel {
        r.read_exact(&mut buf).map_err(|_| {
            CliError::Input("file truncated: fewer values than the shape implies".into())
        })?;
        data.push(f32::from_le_bytes(buf));
    }
    if r.read(&mut buf)? != 0 {
        return Err(CliError::Input("trailing bytes after tensor values".into()));
    }
    Ok(Tensor::from_vec(shape, data)?)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| CliError::Input("file truncated inside the GGT1 header".into()))?;
    Ok(u32::from_le_bytes(buf))
}

pub fn save(path: &Path, t: &Tensor<f32>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    write_tensor(&mut file, t)?;
    file.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Tensor<f32>> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    read_tensor(std::io::BufReader::new(file))
}

/// Serialized byte image of one tensor (used for checkpoint concatenation).
pub fn tensor_bytes(t: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.rank() + 4 * t.numel());
    write_tensor(&mut out, t).expect("writing to a Vec cannot fail");
    out
}
