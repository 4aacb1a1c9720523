//! Binary sampled tensors: a little-endian `u64` header with one entry per
//! axis, followed by `(re, im)` pairs of little-endian `f64` in row-major
//! order. Kernels use three axes `(x, s, y)`, right-hand sides two `(x, y)`.

use std::fs;
use std::path::Path;

use pie_core::Complex64;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<const D: usize> {
    pub dims: [usize; D],
    pub values: Vec<Complex64>,
}

impl<const D: usize> Tensor<D> {
    pub fn new(dims: [usize; D], values: Vec<Complex64>) -> CliResult<Self> {
        let expected: usize = dims.iter().product();
        if values.len() != expected {
            return Err(CliError::validation(
                "tensor",
                format!("{} values do not fill dimensions {dims:?}", values.len()),
            ));
        }
        Ok(Self { dims, values })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * D + 16 * self.values.len());
        for d in self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
        out
    }

    /// Parses a tensor; `field` names the problem-file entry in errors.
    pub fn from_bytes(bytes: &[u8], field: &str) -> CliResult<Self> {
        let dims = Self::header(bytes, field)?;
        let body = &bytes[8 * D..];
        let expected = dims.iter().try_fold(16usize, |acc, &d| acc.checked_mul(d));
        if expected != Some(body.len()) {
            return Err(CliError::validation(
                field,
                format!("header {dims:?} does not match {} payload bytes", body.len()),
            ));
        }
        let values = body
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        Ok(Self { dims, values })
    }

    fn header(bytes: &[u8], field: &str) -> CliResult<[usize; D]> {
        if bytes.len() < 8 * D {
            return Err(CliError::validation(field, "file is shorter than its header"));
        }
        let mut dims = [0usize; D];
        for (k, d) in dims.iter_mut().enumerate() {
            let raw = u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
            *d = usize::try_from(raw).map_err(|_| CliError::validation(field, "dimension overflows usize"))?;
        }
        Ok(dims)
    }

    pub fn read(path: &Path, field: &str) -> CliResult<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes, field)
    }

    /// Reads only the header.
    pub fn read_dims(path: &Path, field: &str) -> CliResult<[usize; D]> {
        use std::io::Read;
        let mut buf = vec![0u8; 8 * D];
        let mut file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        let n = file.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        Self::header(&buf[..n], field)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }
}

pub type KernelTensor = Tensor<3>;
pub type RhsTensor = Tensor<2>;
