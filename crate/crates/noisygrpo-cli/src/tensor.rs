//! NGT1 tensor files: magic bytes "NGT1", little-endian u32 rank, one
//! little-endian u32 per dimension, then the row-major payload as
//! little-endian f64 values. The byte length must match the header exactly.

use anyhow::{bail, Context, Result};
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 4] = b"NGT1";
const MAX_RANK: u32 = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub data: Vec<f64>,
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_tensor(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn parse_tensor(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 8 {
        bail!("file is {} bytes, too short for an NGT1 header", bytes.len());
    }
    if &bytes[0..4] != MAGIC {
        bail!("bad magic bytes {:?}, expected \"NGT1\"", &bytes[0..4]);
    }
    let rank = u32::from_le_bytes(bytes[4..8].try_into().expect("4-byte slice"));
    if rank == 0 {
        bail!("rank 0 is not a valid tensor shape");
    }
    if rank > MAX_RANK {
        bail!("rank {rank} exceeds the supported maximum of {MAX_RANK}");
    }
    let header_len = 8 + 4 * rank as usize;
    if bytes.len() < header_len {
        bail!(
            "truncated header: rank {rank} needs {header_len} bytes, file has {}",
            bytes.len()
        );
    }
    let mut dims = Vec::with_capacity(rank as usize);
    let mut count: usize = 1;
    for i in 0..rank as usize {
        let start = 8 + 4 * i;
        let dim = u32::from_le_bytes(bytes[start..start + 4].try_into().expect("4-byte slice"));
        if dim == 0 {
            bail!("dimension {i} is zero");
        }
        count = count
            .checked_mul(dim as usize)
            .with_context(|| format!("element count overflows at dimension {i}"))?;
        dims.push(dim);
    }
    let expected = header_len + 8 * count;
    if bytes.len() != expected {
        bail!(
            "payload length mismatch: shape {:?} needs {expected} bytes total, file has {}",
            dims,
            bytes.len()
        );
    }
    let data = bytes[header_len..]
        .chunks_exact(8)
        .map(|chunk| f64::from_le_bytes(chunk.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Tensor { dims, data })
}

pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + 4 * tensor.dims.len() + 8 * tensor.data.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(tensor.dims.len() as u32).to_le_bytes());
    for dim in &tensor.dims {
        bytes.extend_from_slice(&dim.to_le_bytes());
    }
    for value in &tensor.data {
        bytes.extend_from_slice(&value.to_le_bytes());
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode(dims: &[u32], data: &[f64]) -> Vec<u8> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes
    }

    #[test]
    fn parses_a_well_formed_tensor() {
        let bytes = encode(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let tensor = parse_tensor(&bytes).unwrap();
        assert_eq!(tensor.dims, vec![2, 3]);
        assert_eq!(tensor.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn write_then_read_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ngt");
        let tensor = Tensor {
            dims: vec![4],
            data: vec![0.5, -1.5, f64::MIN_POSITIVE, 1e300],
        };
        write_tensor(&path, &tensor).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back, tensor);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = encode(&[1], &[1.0]);
        bytes[0] = b'X';
        let err = parse_tensor(&bytes).unwrap_err().to_string();
        assert!(err.contains("magic"), "{err}");
    }

    #[test]
    fn rejects_rank_zero_and_huge_rank() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&0u32.to_le_bytes());
        let err = parse_tensor(&bytes).unwrap_err().to_string();
        assert!(err.contains("rank 0"), "{err}");

        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&65u32.to_le_bytes());
        let err = parse_tensor(&bytes).unwrap_err().to_string();
        assert!(err.contains("65"), "{err}");
    }

    #[test]
    fn rejects_length_mismatches() {
        let bytes = encode(&[2, 2], &[1.0, 2.0, 3.0]);
        let err = parse_tensor(&bytes).unwrap_err().to_string();
        assert!(err.contains("length mismatch"), "{err}");

        let mut bytes = encode(&[2], &[1.0, 2.0]);
        bytes.push(0);
        let err = parse_tensor(&bytes).unwrap_err().to_string();
        assert!(err.contains("length mismatch"), "{err}");
    }

    #[test]
    fn rejects_zero_dimension_and_short_header() {
        let bytes = encode(&[2, 0], &[]);
        let err = parse_tensor(&bytes).unwrap_err().to_string();
        assert!(err.contains("dimension 1 is zero"), "{err}");

        let bytes = &encode(&[2, 2], &[1.0; 4])[..10];
        let err = parse_tensor(bytes).unwrap_err().to_string();
        assert!(err.contains("truncated header"), "{err}");
    }
}
