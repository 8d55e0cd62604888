//! Depth map files.
//!
//! * PGM: binary P5, 16-bit big-endian, `depth = raw / 256` meters; raw 0 means
//!   "no measurement" (KITTI depth benchmark convention).
//! * BIN: 8-byte header (height, width as little-endian u32) followed by
//!   `height·width` little-endian f32 values in row-major order.

use std::path::Path;

use super::{DepthMap, SparseDepthImage};
use crate::error::{Error, Result};
use crate::image::{write_file, Pnm};

const PGM_SCALE: f64 = 256.0;

fn depth_to_raw(d: f64) -> u16 {
    (d * PGM_SCALE).round().clamp(0.0, 65535.0) as u16
}

fn read_pgm_raw(path: &Path) -> Result<Pnm> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let pnm = Pnm::decode(&bytes).map_err(|m| Error::format(path, m))?;
    if pnm.channels != 1 {
        return Err(Error::format(path, "depth PGM must have one channel"));
    }
    Ok(pnm)
}

pub fn write_sparse_pgm(path: &Path, img: &SparseDepthImage, comment: Option<&str>) -> Result<()> {
    let samples = img
        .depth
        .iter()
        .zip(&img.valid)
        .map(|(&d, &ok)| if ok { depth_to_raw(d).max(1) } else { 0 })
        .collect();
    let pnm = Pnm {
        width: img.width,
        height: img.height,
        channels: 1,
        maxval: 65535,
        samples,
    };
    write_file(path, &pnm.encode(comment))
}

pub fn read_sparse_pgm(path: &Path) -> Result<SparseDepthImage> {
    let pnm = read_pgm_raw(path)?;
    Ok(SparseDepthImage {
        width: pnm.width,
        height: pnm.height,
        depth: pnm.samples.iter().map(|&s| s as f64 / PGM_SCALE).collect(),
        valid: pnm.samples.iter().map(|&s| s != 0).collect(),
    })
}

pub fn write_depth_pgm(path: &Path, map: &DepthMap, comment: Option<&str>) -> Result<()> {
    write_sparse_pgm(path, &SparseDepthImage::from_dense(map), comment)
}

/// Dense PGM read; every pixel must carry a measurement.
pub fn read_depth_pgm(path: &Path) -> Result<DepthMap> {
    let sparse = read_sparse_pgm(path)?;
    if sparse.n_valid() != sparse.valid.len() {
        return Err(Error::format(path, "dense depth PGM contains empty pixels"));
    }
    DepthMap::new(sparse.width, sparse.height, sparse.depth)
}

pub fn write_depth_bin(path: &Path, map: &DepthMap) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + 4 * map.data.len());
    bytes.extend_from_slice(&(map.height as u32).to_le_bytes());
    bytes.extend_from_slice(&(map.width as u32).to_le_bytes());
    for &d in &map.data {
        bytes.extend_from_slice(&(d as f32).to_le_bytes());
    }
    write_file(path, &bytes)
}

pub fn read_depth_bin(path: &Path) -> Result<DepthMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 {
        return Err(Error::format(path, "depth file shorter than its 8-byte header"));
    }
    let height = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != 4 * width * height {
        return Err(Error::format(
            path,
            format!(
                "expected {} bytes of f32 depth for {}x{}, found {}",
                4 * width * height,
                width,
                height,
                body.len()
            ),
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    DepthMap::new(width, height, data)
}

/// Reads either format, chosen by file extension (`.pgm` or `.bin`).
pub fn read_depth(path: &Path) -> Result<DepthMap> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => read_depth_pgm(path),
        Some("bin") => read_depth_bin(path),
        _ => Err(Error::format(path, "unknown depth file extension (expected .pgm or .bin)")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.bin");
        let m = DepthMap::from_fn(5, 3, |u, v| ((1.0 + u as f64 * 0.37 + v as f64) as f32) as f64);
        write_depth_bin(&p, &m).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[0..4], &3u32.to_le_bytes());
        assert_eq!(&bytes[4..8], &5u32.to_le_bytes());
        let back = read_depth_bin(&p).unwrap();
        assert_eq!(back, m);
        write_depth_bin(&p, &back).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), bytes);
    }

    #[test]
    fn pgm_uses_256_scale() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pgm");
        let mut s = SparseDepthImage::empty(3, 2);
        s.depth[1] = 12.5;
        s.valid[1] = true;
        write_sparse_pgm(&p, &s, None).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let raster = &bytes[bytes.len() - 12..];
        assert_eq!(&raster[2..4], &(3200u16).to_be_bytes());
        let back = read_sparse_pgm(&p).unwrap();
        assert_eq!(back, s);
        write_sparse_pgm(&p, &back, None).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), bytes);
        assert!(read_depth_pgm(&p).is_err());
    }

    #[test]
    fn truncated_bin_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.bin");
        write_depth_bin(&p, &DepthMap::constant(4, 4, 1.0)).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&p, bytes).unwrap();
        assert!(read_depth_bin(&p).is_err());
        assert!(read_depth(&dir.path().join("x.tiff")).is_err());
    }
}
