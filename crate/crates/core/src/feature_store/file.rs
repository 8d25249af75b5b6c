//! The `OCLF` feature container.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "OCLF"
//!      4     4  version (u32 LE, currently 1)
//!      8     8  n_samples (u64 LE)
//!     16     4  dim (u32 LE)
//!     20     1  dtype code (0 = f32 LE, 1 = f64 LE)
//!     21     7  reserved, zero
//!     28     -  row-major sample data
//! ```
//!
//! Datasets use dtype 0. Dtype 1 holds learner checkpoints, where the
//! accumulators must survive a round trip without narrowing.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"OCLF";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

impl Dtype {
    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            other => Err(Error::UnsupportedDtype(other)),
        }
    }

    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureFileHeader {
    pub version: u32,
    pub n_samples: u64,
    pub dim: u32,
    pub dtype: Dtype,
}

impl FeatureFileHeader {
    pub fn new(n_samples: u64, dim: u32, dtype: Dtype) -> Self {
        Self {
            version: FORMAT_VERSION,
            n_samples,
            dim,
            dtype,
        }
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..8].copy_from_slice(&self.version.to_le_bytes());
        out[8..16].copy_from_slice(&self.n_samples.to_le_bytes());
        out[16..20].copy_from_slice(&self.dim.to_le_bytes());
        out[20] = self.dtype as u8;
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN as u64,
                actual: bytes.len() as u64,
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let n_samples = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dim must be >= 1".into()));
        }
        let dtype = Dtype::from_code(bytes[20])?;
        Ok(Self {
            version,
            n_samples,
            dim,
            dtype,
        })
    }

    pub fn data_len(&self) -> u64 {
        self.n_samples * u64::from(self.dim) * self.dtype.width() as u64
    }

    pub fn file_len(&self) -> u64 {
        HEADER_LEN as u64 + self.data_len()
    }
}

#[derive(Debug, Clone)]
enum Storage {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

/// An opened feature file held in memory. Immutable once built.
#[derive(Debug, Clone)]
pub struct FeatureFile {
    header: FeatureFileHeader,
    data: Storage,
}

impl FeatureFile {
    pub fn from_f32(dim: usize, data: Vec<f32>) -> Result<Self> {
        let n = rows_for(dim, data.len())?;
        Ok(Self {
            header: FeatureFileHeader::new(n, dim as u32, Dtype::F32),
            data: Storage::F32(data),
        })
    }

    pub fn from_f64(dim: usize, data: Vec<f64>) -> Result<Self> {
        let n = rows_for(dim, data.len())?;
        Ok(Self {
            header: FeatureFileHeader::new(n, dim as u32, Dtype::F64),
            data: Storage::F64(data),
        })
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = FeatureFileHeader::parse(bytes)?;
        let expected = header.file_len();
        let actual = bytes.len() as u64;
        if actual < expected {
            return Err(Error::Truncated { expected, actual });
        }
        if actual > expected {
            return Err(Error::LengthMismatch { expected, actual });
        }
        let body = &bytes[HEADER_LEN..];
        let data = match header.dtype {
            Dtype::F32 => Storage::F32(
                body.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::F64 => Storage::F64(
                body.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        Ok(Self { header, data })
    }

    pub fn header(&self) -> &FeatureFileHeader {
        &self.header
    }

    pub fn n_samples(&self) -> u64 {
        self.header.n_samples
    }

    pub fn dim(&self) -> usize {
        self.header.dim as usize
    }

    /// Row `i` widened to f64.
    pub fn get_row(&self, i: u64) -> Result<Vec<f64>> {
        let range = self.row_range(i)?;
        Ok(match &self.data {
            Storage::F32(v) => v[range].iter().map(|&x| f64::from(x)).collect(),
            Storage::F64(v) => v[range].to_vec(),
        })
    }

    /// Row `i` exactly as stored, for f32 files.
    pub fn get_row_f32(&self, i: u64) -> Result<&[f32]> {
        let range = self.row_range(i)?;
        match &self.data {
            Storage::F32(v) => Ok(&v[range]),
            Storage::F64(_) => Err(Error::InvalidArgument(
                "get_row_f32 on an f64 container".into(),
            )),
        }
    }

    fn row_range(&self, i: u64) -> Result<std::ops::Range<usize>> {
        if i >= self.header.n_samples {
            return Err(Error::RowOutOfRange {
                index: i,
                n_samples: self.header.n_samples,
            });
        }
        let d = self.dim();
        let start = i as usize * d;
        Ok(start..start + d)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.header.file_len() as usize);
        out.extend_from_slice(&self.header.to_bytes());
        match &self.data {
            Storage::F32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Storage::F64(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<FeatureFileHeader> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&self.to_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))?;
        Ok(self.header)
    }
}

fn rows_for(dim: usize, len: usize) -> Result<u64> {
    if dim == 0 || dim > u32::MAX as usize {
        return Err(Error::InvalidArgument(format!("invalid feature dim {dim}")));
    }
    if !len.is_multiple_of(dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: len % dim,
        });
    }
    Ok((len / dim) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_28_bytes_with_reserved_zeros() {
        let h = FeatureFileHeader::new(3, 5, Dtype::F32);
        let b = h.to_bytes();
        assert_eq!(b.len(), 28);
        assert_eq!(&b[0..4], b"OCLF");
        assert!(b[21..28].iter().all(|&x| x == 0));
        assert_eq!(FeatureFileHeader::parse(&b).unwrap(), h);
    }

    #[test]
    fn empty_file_is_header_only() {
        let f = FeatureFile::from_f32(5, vec![]).unwrap();
        assert_eq!(f.n_samples(), 0);
        assert_eq!(f.to_bytes().len(), HEADER_LEN);
    }

    #[test]
    fn two_rows_of_three() {
        let f = FeatureFile::from_f32(3, vec![1.0; 6]).unwrap();
        assert_eq!(f.to_bytes().len(), HEADER_LEN + 24);
    }

    #[test]
    fn bad_magic() {
        let mut b = FeatureFile::from_f32(2, vec![1.0, 2.0]).unwrap().to_bytes();
        b[0] = b'X';
        let err = FeatureFile::from_bytes(&b).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
    }

    #[test]
    fn truncated_and_overlong() {
        let b = FeatureFile::from_f32(2, vec![1.0, 2.0, 3.0, 4.0])
            .unwrap()
            .to_bytes();
        assert!(matches!(
            FeatureFile::from_bytes(&b[..b.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(
            FeatureFile::from_bytes(&b[..10]),
            Err(Error::Truncated { .. })
        ));
        let mut long = b.clone();
        long.push(0);
        assert!(matches!(
            FeatureFile::from_bytes(&long),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn unsupported_version_and_dtype() {
        let mut b = FeatureFile::from_f32(1, vec![1.0]).unwrap().to_bytes();
        b[4] = 9;
        assert!(matches!(
            FeatureFile::from_bytes(&b),
            Err(Error::UnsupportedVersion(9))
        ));
        let mut b = FeatureFile::from_f32(1, vec![1.0]).unwrap().to_bytes();
        b[20] = 7;
        assert!(matches!(
            FeatureFile::from_bytes(&b),
            Err(Error::UnsupportedDtype(7))
        ));
    }

    #[test]
    fn row_out_of_range() {
        let f = FeatureFile::from_f32(2, vec![1.0, 2.0]).unwrap();
        assert!(f.get_row(0).is_ok());
        assert!(matches!(f.get_row(1), Err(Error::RowOutOfRange { .. })));
    }

    #[test]
    fn f64_container_keeps_precision() {
        let v = vec![0.1f64, 1.0 / 3.0, -2.5e-300];
        let f = FeatureFile::from_f64(3, v.clone()).unwrap();
        let back = FeatureFile::from_bytes(&f.to_bytes()).unwrap();
        assert_eq!(back.get_row(0).unwrap(), v);
    }
}
