//! Parameter checkpoint file.
//!
//! Layout (all integers little-endian):
//!   magic   8 bytes  "MASSCKPT"
//!   version u32      currently 1
//!   count   u32      number of tensors
//! then per tensor:
//!   name_len u16, name bytes (UTF-8),
//!   rows u32, cols u32,
//!   rows*cols f64 values.
//!
//! Values are stored as f64 regardless of the in-memory scalar type, so
//! checkpoints are portable between 32- and 64-bit modes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{MassError, Result};
use crate::nn::store::ParamStore;
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"MASSCKPT";
const VERSION: u32 = 1;

pub fn save_params<S: Scalar>(path: &Path, store: &ParamStore<S>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for entry in store.iter() {
        let name = entry.name.as_bytes();
        if name.len() > u16::MAX as usize {
            return Err(MassError::Checkpoint(format!("name too long: {}", entry.name)));
        }
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(entry.rows as u32).to_le_bytes())?;
        w.write_all(&(entry.cols as u32).to_le_bytes())?;
        for &v in &entry.data {
            w.write_all(&v.to_f64_c().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a checkpoint into an existing store. Tensor names and shapes must
/// match the store exactly (the store defines the model architecture).
pub fn load_params<S: Scalar>(path: &Path, store: &mut ParamStore<S>) -> Result<()> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(MassError::Checkpoint("bad magic".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(MassError::Checkpoint(format!("unsupported version {version}")));
    }
    r.read_exact(&mut u32buf)?;
    let count = u32::from_le_bytes(u32buf) as usize;
    if count != store.len() {
        return Err(MassError::Checkpoint(format!(
            "checkpoint has {count} tensors, model expects {}",
            store.len()
        )));
    }
    for id in 0..count {
        let mut u16buf = [0u8; 2];
        r.read_exact(&mut u16buf)?;
        let name_len = u16::from_le_bytes(u16buf) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| MassError::Checkpoint("non-UTF-8 tensor name".into()))?;
        r.read_exact(&mut u32buf)?;
        let rows = u32::from_le_bytes(u32buf) as usize;
        r.read_exact(&mut u32buf)?;
        let cols = u32::from_le_bytes(u32buf) as usize;
        {
            let entry = store.entry(id);
            if entry.name != name || entry.rows != rows || entry.cols != cols {
                return Err(MassError::Checkpoint(format!(
                    "tensor {id}: file has {name} [{rows}, {cols}], model expects {} [{}, {}]",
                    entry.name, entry.rows, entry.cols
                )));
            }
        }
        let mut data = Vec::with_capacity(rows * cols);
        let mut f64buf = [0u8; 8];
        for _ in 0..rows * cols {
            r.read_exact(&mut f64buf)?;
            data.push(S::from_f64_c(f64::from_le_bytes(f64buf)));
        }
        store.entry_mut(id).data = data;
    }
    Ok(())
}
