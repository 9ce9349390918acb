use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::VideoTensor;
use crate::error::{Error, Result};

pub(crate) const MAGIC: &[u8; 8] = b"RIDGEVT1";

pub(super) fn save(v: &VideoTensor, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    write(MAGIC)?;
    for d in v.dims() {
        write(&(d as u64).to_le_bytes())?;
    }
    for x in v.data() {
        write(&x.to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(super) fn load(path: &Path) -> Result<VideoTensor> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format(path, "truncated header"))?;
    if &magic != MAGIC {
        return Err(Error::format(path, "bad magic"));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)
            .map_err(|_| Error::format(path, "truncated header"))?;
        *d = usize::try_from(u64::from_le_bytes(b))
            .map_err(|_| Error::format(path, "dimension overflows usize"))?;
    }
    let [m, n, t] = dims;
    if m == 0 || n == 0 || t == 0 {
        return Err(Error::NonPositiveDimension(m, n, t));
    }
    let count = m
        .checked_mul(n)
        .and_then(|c| c.checked_mul(t))
        .ok_or_else(|| Error::format(path, "dimensions overflow"))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(|e| Error::io(path, e))?;
    if payload.len() != count * 8 {
        return Err(Error::format(
            path,
            format!(
                "truncated payload: expected {} bytes, found {}",
                count * 8,
                payload.len()
            ),
        ));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    VideoTensor::new(m, n, t, data)
}
