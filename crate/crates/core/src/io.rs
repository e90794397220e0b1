//! Little-endian binary helpers shared by the file formats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{CoreError, Result};

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CoreError::io(path, e))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CoreError::io(path, e))
}

pub fn write_all(w: &mut impl Write, path: &Path, bytes: &[u8]) -> Result<()> {
    w.write_all(bytes).map_err(|e| CoreError::io(path, e))
}

pub fn read_exact<const N: usize>(r: &mut impl Read, path: &Path) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| CoreError::format(path, "unexpected end of file"))?;
    Ok(buf)
}

pub fn expect_magic(r: &mut impl Read, path: &Path, magic: &[u8]) -> Result<()> {
    let mut buf = vec![0u8; magic.len()];
    r.read_exact(&mut buf)
        .map_err(|_| CoreError::format(path, "file too short"))?;
    if buf != magic {
        return Err(CoreError::format(
            path,
            format!("expected magic {:?}", String::from_utf8_lossy(magic)),
        ));
    }
    Ok(())
}

pub fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact::<4>(r, path)?))
}

pub fn read_f32s(r: &mut impl Read, path: &Path, count: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| CoreError::format(path, "truncated float data"))?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_f32s(w: &mut impl Write, path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        write_all(w, path, &(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn expect_eof(r: &mut impl Read, path: &Path) -> Result<()> {
    let mut extra = [0u8; 1];
    match r.read(&mut extra) {
        Ok(0) => Ok(()),
        Ok(_) => Err(CoreError::format(path, "trailing bytes after payload")),
        Err(e) => Err(CoreError::io(path, e)),
    }
}

pub fn flush(mut w: impl Write, path: &Path) -> Result<()> {
    w.flush().map_err(|e| CoreError::io(path, e))
}
