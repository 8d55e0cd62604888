//! Dense and sparse depth maps and the learnable coarse depth field.

mod field;
mod io;

pub use field::{DepthField, DepthFieldConfig};
pub use io::{read_depth, read_depth_bin, read_depth_pgm, write_depth_bin, write_depth_pgm, read_sparse_pgm, write_sparse_pgm};

use crate::error::{Error, Result};
use crate::geometry::Pixel;
use crate::image::BilinearCell;

/// Dense per-pixel depth in meters, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "depth buffer has {} values for {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(DepthMap {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Self {
        DepthMap {
            width,
            height,
            data: vec![depth; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        DepthMap {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    pub fn is_valid(&self) -> bool {
        self.data.len() == self.width * self.height && self.data.iter().all(|d| d.is_finite() && *d > 0.0)
    }

    pub fn scaled(&self, factor: f64) -> DepthMap {
        DepthMap {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|d| d * factor).collect(),
        }
    }

    /// Bilinear depth at `p`, or `None` outside `[0, w-1] × [0, h-1]`.
    pub fn interpolate(&self, p: Pixel) -> Option<f64> {
        interpolate_depth(self, p)
    }
}

/// Bilinear interpolation of the four depths surrounding `p`.
pub fn interpolate_depth(map: &DepthMap, p: Pixel) -> Option<f64> {
    if !(p.u >= 0.0 && p.v >= 0.0 && p.u <= (map.width - 1) as f64 && p.v <= (map.height - 1) as f64) {
        return None;
    }
    let cell = BilinearCell::locate(p, map.width, map.height);
    Some(cell.eval(map.width, |i| map.data[i]).0)
}

/// Depth grid with a validity mask, e.g. projected LiDAR returns.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDepthImage {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub valid: Vec<bool>,
}

impl SparseDepthImage {
    pub fn empty(width: usize, height: usize) -> Self {
        SparseDepthImage {
            width,
            height,
            depth: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    /// Every pixel valid.
    pub fn from_dense(map: &DepthMap) -> Self {
        SparseDepthImage {
            width: map.width,
            height: map.height,
            depth: map.data.clone(),
            valid: vec![true; map.data.len()],
        }
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Indices of valid pixels in row-major order.
    pub fn valid_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.valid.iter().enumerate().filter(|(_, v)| **v).map(|(i, _)| i)
    }

    pub fn scaled(&self, factor: f64) -> SparseDepthImage {
        SparseDepthImage {
            depth: self.depth.iter().map(|d| d * factor).collect(),
            ..self.clone()
        }
    }
}
