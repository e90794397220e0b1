use std::path::Path;

use crate::error::{CoreError, Result};
use crate::geometry::voxel_center;
use crate::io;

pub const FIELD_MAGIC: &[u8] = b"S2MFLD1";

/// Samples at the `n³` voxel centers of `[0,1]³`, x fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    n: usize,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || values.len() != n * n * n {
            return Err(CoreError::InvalidArgument(format!(
                "field of {} values does not match resolution {n}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidArgument("field values must be finite".into()));
        }
        Ok(Self { n, values })
    }

    /// Sample `f` at every voxel center.
    pub fn from_fn(n: usize, f: impl Fn([f64; 3]) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(n * n * n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    values.push(f([voxel_center(i, n), voxel_center(j, n), voxel_center(k, n)]));
                }
            }
        }
        Self::new(n, values)
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[i + self.n * (j + self.n * k)]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = io::create(path)?;
        io::write_all(&mut w, path, FIELD_MAGIC)?;
        io::write_all(&mut w, path, &(self.n as u32).to_le_bytes())?;
        io::write_f32s(&mut w, path, self.values.iter().copied())?;
        io::flush(w, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = io::open(path)?;
        io::expect_magic(&mut r, path, FIELD_MAGIC)?;
        let n = io::read_u32(&mut r, path)? as usize;
        if n == 0 || n > 2048 {
            return Err(CoreError::format(path, format!("implausible resolution {n}")));
        }
        let values = io::read_f32s(&mut r, path, n * n * n)?;
        io::expect_eof(&mut r, path)?;
        Self::new(n, values.into_iter().map(f64::from).collect())
    }
}
