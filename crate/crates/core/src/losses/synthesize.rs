use nalgebra::Vector3;
use rayon::prelude::*;

use crate::depthfield::DepthMap;
use crate::geometry::{CameraIntrinsics, Pixel, Pose};
use crate::image::{BilinearCell, Image};

/// Per-pixel validity of a warp: lands inside the source image in front of
/// the source camera.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityMask {
    pub width: usize,
    pub height: usize,
    pub valid: Vec<bool>,
}

impl ValidityMask {
    pub fn all(width: usize, height: usize, value: bool) -> Self {
        ValidityMask {
            width,
            height,
            valid: vec![value; width * height],
        }
    }

    pub fn count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.valid.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.valid.len() as f64
        }
    }

    /// Mask rendered as a black/white image.
    pub fn to_image(&self) -> Image {
        Image::from_fn(self.width, self.height, |u, v| {
            if self.valid[v * self.width + u] {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// View synthesis output: the source image resampled into the target view.
#[derive(Debug, Clone)]
pub struct Synthesis {
    /// Î_s; zero at invalid pixels.
    pub image: Image,
    pub mask: ValidityMask,
    /// Depth of each transformed target point in the source camera.
    pub z: Vec<f64>,
    /// Source-image coordinates of each target pixel.
    pub coords: Vec<Pixel>,
}

/// Target pixels pushed through depth and pose, with what the backward pass needs.
#[derive(Debug, Clone)]
pub(crate) struct WarpField {
    pub width: usize,
    pub height: usize,
    pub valid: Vec<bool>,
    pub coords: Vec<Pixel>,
    /// Transformed point Y = R·X + t.
    pub points: Vec<Vector3<f64>>,
    /// ∂Y/∂depth = R·K⁻¹·[u, v, 1].
    pub depth_dir: Vec<Vector3<f64>>,
}

pub(crate) fn warp_field(k: &CameraIntrinsics, depth: &DepthMap, pose: &Pose) -> WarpField {
    let (w, h) = (depth.width, depth.height);
    let rows: Vec<Vec<(bool, Pixel, Vector3<f64>, Vector3<f64>)>> = (0..h)
        .into_par_iter()
        .map(|v| {
            (0..w)
                .map(|u| {
                    let ray = k.ray(Pixel::new(u as f64, v as f64));
                    let dir = pose.rotation * ray;
                    let y = dir * depth.data[v * w + u] + pose.translation;
                    if y.z > 0.0 {
                        let p = k.project(&y);
                        (k.contains(p) && p.is_finite(), p, y, dir)
                    } else {
                        (false, Pixel::new(f64::NAN, f64::NAN), y, dir)
                    }
                })
                .collect()
        })
        .collect();
    let n = w * h;
    let mut out = WarpField {
        width: w,
        height: h,
        valid: Vec::with_capacity(n),
        coords: Vec::with_capacity(n),
        points: Vec::with_capacity(n),
        depth_dir: Vec::with_capacity(n),
    };
    for (ok, p, y, dir) in rows.into_iter().flatten() {
        out.valid.push(ok);
        out.coords.push(p);
        out.points.push(y);
        out.depth_dir.push(dir);
    }
    out
}

/// Bilinear samples of the source at warped coordinates, plus spatial
/// derivatives (per pixel and channel) for the backward pass.
pub(crate) struct Sampled {
    pub image: Image,
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
}

pub(crate) fn sample(source: &Image, warp: &WarpField) -> Sampled {
    let ch = source.channels;
    let n = warp.width * warp.height;
    let mut image = Image::new(warp.width, warp.height, ch);
    let mut du = vec![0.0; n * ch];
    let mut dv = vec![0.0; n * ch];
    for q in 0..n {
        if !warp.valid[q] {
            continue;
        }
        let cell = BilinearCell::locate(warp.coords[q], source.width, source.height);
        for c in 0..ch {
            let (val, gu, gv) = cell.eval(source.width, |i| source.data[i * ch + c]);
            image.data[q * ch + c] = val;
            du[q * ch + c] = gu;
            dv[q * ch + c] = gv;
        }
    }
    Sampled { image, du, dv }
}

/// Warps `source` into the target view using target depth and pose
/// (target camera → source camera).
pub fn synthesize(source: &Image, target_depth: &DepthMap, pose: &Pose, k: &CameraIntrinsics) -> Synthesis {
    let warp = warp_field(k, target_depth, pose);
    let sampled = sample(source, &warp);
    Synthesis {
        image: sampled.image,
        mask: ValidityMask {
            width: warp.width,
            height: warp.height,
            valid: warp.valid,
        },
        z: warp.points.iter().map(|y| y.z).collect(),
        coords: warp.coords,
    }
}
