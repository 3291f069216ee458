//! Binary dump of the integrated map for offline plotting.
//!
//! Layout (little endian): `u64 N_R`, `u64 N_D`, then `N_R * N_D` `f64`
//! values in row-major (range-major) order.

use ndarray::Array2;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub fn write_rdm_dump(path: &Path, power: &Array2<f64>) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let (n_r, n_d) = power.dim();
    out.write_all(&(n_r as u64).to_le_bytes()).map_err(io)?;
    out.write_all(&(n_d as u64).to_le_bytes()).map_err(io)?;
    for v in power.iter() {
        out.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_rdm_dump(path: &Path) -> Result<Array2<f64>> {
    let io = |e| Error::io(path, e);
    let mut input = BufReader::new(File::open(path).map_err(io)?);
    let mut word = [0u8; 8];
    input.read_exact(&mut word).map_err(io)?;
    let n_r = u64::from_le_bytes(word) as usize;
    input.read_exact(&mut word).map_err(io)?;
    let n_d = u64::from_le_bytes(word) as usize;
    let mut data = Vec::with_capacity(n_r * n_d);
    for _ in 0..n_r * n_d {
        input.read_exact(&mut word).map_err(io)?;
        data.push(f64::from_le_bytes(word));
    }
    Array2::from_shape_vec((n_r, n_d), data).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rdm.bin");
        let p = Array2::from_shape_fn((3, 2), |(m, n)| (m * 10 + n) as f64);
        write_rdm_dump(&path, &p).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 16 + 6 * 8);
        assert_eq!(u64::from_le_bytes(bytes[0..8].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), 1.0);
        assert_eq!(read_rdm_dump(&path).unwrap(), p);
    }
}
