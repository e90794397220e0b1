use std::path::Path;

use crate::error::{CoreError, Result};
use crate::io;

pub const MAP_MAGIC: &[u8] = b"S2M25D1";
pub const SKETCH_MAGIC: &[u8] = b"S2MSKT1";
pub const MAP_CHANNELS: usize = 5;

/// One view's depth, normal and foreground mask, stored planar as
/// `5 × size × size` in channel order depth, nx, ny, nz, mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewMap25D {
    size: usize,
    data: Vec<f64>,
}

/// Background encoding: farthest depth, zero normal, zero mask.
pub const BACKGROUND: [f64; 5] = [1.0, 0.0, 0.0, 0.0, 0.0];

impl ViewMap25D {
    pub fn background(size: usize) -> Self {
        let mut data = vec![0.0; MAP_CHANNELS * size * size];
        data[..size * size].iter_mut().for_each(|d| *d = 1.0);
        Self { size, data }
    }

    /// Wrap planar `5 × size × size` data.
    pub fn from_planar(size: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != MAP_CHANNELS * size * size {
            return Err(CoreError::InvalidArgument(format!(
                "map data has {} values, expected {}",
                data.len(),
                MAP_CHANNELS * size * size
            )));
        }
        Ok(Self { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn planar(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.size * self.size;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn pixel(&self, col: usize, row: usize) -> [f64; 5] {
        let n = self.size * self.size;
        let i = row * self.size + col;
        std::array::from_fn(|c| self.data[c * n + i])
    }

    pub fn set_pixel(&mut self, col: usize, row: usize, v: [f64; 5]) {
        let n = self.size * self.size;
        let i = row * self.size + col;
        for (c, x) in v.into_iter().enumerate() {
            self.data[c * n + i] = x;
        }
    }

    pub fn depth(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.size + col]
    }

    pub fn normal(&self, col: usize, row: usize) -> [f64; 3] {
        let p = self.pixel(col, row);
        [p[1], p[2], p[3]]
    }

    pub fn is_foreground(&self, col: usize, row: usize) -> bool {
        self.pixel(col, row)[4] >= 0.5
    }

    pub fn foreground_count(&self) -> usize {
        self.channel(4).iter().filter(|&&m| m >= 0.5).count()
    }

    /// Check the rendered-map invariants, returning the first violation.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for row in 0..self.size {
            for col in 0..self.size {
                let p = self.pixel(col, row);
                if p.iter().any(|v| !v.is_finite()) {
                    return Err(format!("non-finite value at ({col}, {row})"));
                }
                if !(0.0..=1.0).contains(&p[4]) {
                    return Err(format!("mask {} outside [0,1] at ({col}, {row})", p[4]));
                }
                if p[4] >= 0.5 {
                    let n = (p[1] * p[1] + p[2] * p[2] + p[3] * p[3]).sqrt();
                    if (n - 1.0).abs() > 1e-4 {
                        return Err(format!("normal norm {n} at ({col}, {row})"));
                    }
                    if !(-1.0..=1.0).contains(&p[0]) {
                        return Err(format!("depth {} outside [-1,1] at ({col}, {row})", p[0]));
                    }
                } else if p[..4] != BACKGROUND[..4] {
                    return Err(format!("background pixel ({col}, {row}) is {p:?}"));
                }
            }
        }
        Ok(())
    }

    /// Header then float32 pixels, row-major with the five channels of
    /// each pixel adjacent.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_image(path.as_ref(), MAP_MAGIC, self.size, MAP_CHANNELS, &self.data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (size, data) = read_image(path.as_ref(), MAP_MAGIC, MAP_CHANNELS)?;
        Ok(Self { size, data })
    }
}

/// Binary line image, 1 = stroke.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchImage {
    pub size: usize,
    pub data: Vec<f64>,
}

impl SketchImage {
    pub fn blank(size: usize) -> Self {
        Self {
            size,
            data: vec![0.0; size * size],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.size + col]
    }

    pub fn stroke_count(&self) -> usize {
        self.data.iter().filter(|&&v| v > 0.5).count()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_image(path.as_ref(), SKETCH_MAGIC, self.size, 1, &self.data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (size, data) = read_image(path.as_ref(), SKETCH_MAGIC, 1)?;
        Ok(Self { size, data })
    }
}

fn write_image(path: &Path, magic: &[u8], size: usize, channels: usize, planar: &[f64]) -> Result<()> {
    let mut w = io::create(path)?;
    io::write_all(&mut w, path, magic)?;
    io::write_all(&mut w, path, &(size as u32).to_le_bytes())?;
    io::write_all(&mut w, path, &(size as u32).to_le_bytes())?;
    io::write_all(&mut w, path, &[channels as u8])?;
    let n = size * size;
    io::write_f32s(
        &mut w,
        path,
        (0..n).flat_map(|i| (0..channels).map(move |c| planar[c * n + i])),
    )?;
    io::flush(w, path)
}

fn read_image(path: &Path, magic: &[u8], channels: usize) -> Result<(usize, Vec<f64>)> {
    let mut r = io::open(path)?;
    io::expect_magic(&mut r, path, magic)?;
    let width = io::read_u32(&mut r, path)? as usize;
    let height = io::read_u32(&mut r, path)? as usize;
    let ch = io::read_exact::<1>(&mut r, path)?[0] as usize;
    if width != height || width == 0 || width > 8192 {
        return Err(CoreError::format(path, format!("unsupported image size {width}x{height}")));
    }
    if ch != channels {
        return Err(CoreError::format(path, format!("expected {channels} channels, found {ch}")));
    }
    let n = width * height;
    let interleaved = io::read_f32s(&mut r, path, n * channels)?;
    io::expect_eof(&mut r, path)?;
    let mut planar = vec![0.0; n * channels];
    for i in 0..n {
        for c in 0..channels {
            planar[c * n + i] = interleaved[i * channels + c] as f64;
        }
    }
    Ok((width, planar))
}
