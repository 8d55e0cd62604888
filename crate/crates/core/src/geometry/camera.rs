use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::se3::Pose;
use crate::error::{Error, Result};

/// Rectified pinhole camera without distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Pixel { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

/// Result of transferring a target pixel into the source view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Warp {
    pub pixel: Pixel,
    /// Depth of the transformed point in the source camera.
    pub depth: f64,
}

impl Warp {
    pub fn in_front(&self) -> bool {
        self.depth > 0.0
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cy > 0.0
            && self.cx < self.width as f64
            && self.cy < self.height as f64
            && self.fx.is_finite()
            && self.fy.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Intrinsics(format!("{self:?}")))
        }
    }

    /// `K⁻¹ [u, v, 1]ᵀ`, a ray with unit z.
    #[inline]
    pub fn ray(&self, p: Pixel) -> Vector3<f64> {
        Vector3::new((p.u - self.cx) / self.fx, (p.v - self.cy) / self.fy, 1.0)
    }

    #[inline]
    pub fn back_project(&self, p: Pixel, depth: f64) -> Vector3<f64> {
        self.ray(p) * depth
    }

    /// Pinhole projection; meaningful only for `x.z > 0`.
    #[inline]
    pub fn project(&self, x: &Vector3<f64>) -> Pixel {
        Pixel::new(self.fx * x.x / x.z + self.cx, self.fy * x.y / x.z + self.cy)
    }

    /// Closed-interval bounds check `[0, w-1] × [0, h-1]`, the domain where
    /// bilinear sampling has all four neighbours.
    #[inline]
    pub fn contains(&self, p: Pixel) -> bool {
        p.u >= 0.0 && p.v >= 0.0 && p.u <= (self.width - 1) as f64 && p.v <= (self.height - 1) as f64
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Same camera at a different resolution (pixel-center convention kept).
    pub fn scaled(&self, width: usize, height: usize) -> CameraIntrinsics {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        CameraIntrinsics {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: (self.cx + 0.5) * sx - 0.5,
            cy: (self.cy + 0.5) * sy - 0.5,
            width,
            height,
        }
    }
}

/// Transfers target pixel `p_t` at `depth` into the source view through `T`.
///
/// The returned depth is the z coordinate of the transformed point; a
/// non-positive value means the point is behind the source camera.
pub fn warp_pixel(p_t: Pixel, depth: f64, k: &CameraIntrinsics, t: &Pose) -> Warp {
    let y = t.apply(&k.back_project(p_t, depth));
    Warp {
        pixel: k.project(&y),
        depth: y.z,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::se3::{exp, Twist};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::new(110.0, 110.0, 95.5, 31.5, 192, 64).unwrap()
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(CameraIntrinsics::new(-1.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 5.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 1.0, 0.0, 4, 4).is_err());
    }

    #[test]
    fn identity_warp_is_identity() {
        let k = cam();
        for &(u, v, d) in &[(0.0, 0.0, 1.0), (13.0, 7.0, 3.3), (191.0, 63.0, 80.0)] {
            let w = warp_pixel(Pixel::new(u, v), d, &k, &Pose::identity());
            assert!((w.pixel.u - u).abs() < 1e-12 && (w.pixel.v - v).abs() < 1e-12);
            assert!((w.depth - d).abs() < 1e-12 * d);
        }
    }

    #[test]
    fn on_axis_point_moves_along_axis() {
        let k = cam();
        let t = Pose::from_translation(Vector3::new(0.0, 0.0, -1.0));
        let w = warp_pixel(Pixel::new(k.cx, k.cy), 5.0, &k, &t);
        assert_eq!(w.pixel, Pixel::new(k.cx, k.cy));
        assert_eq!(w.depth, 4.0);
    }

    #[test]
    fn behind_camera_flagged() {
        let k = cam();
        let t = Pose::from_translation(Vector3::new(0.0, 0.0, -10.0));
        let w = warp_pixel(Pixel::new(k.cx, k.cy), 5.0, &k, &t);
        assert!(!w.in_front());
    }

    #[test]
    fn warp_round_trip() {
        let k = cam();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let t = exp(&Twist::from_array([
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
            ]));
            let p = Pixel::new(rng.random_range(0.0..191.0), rng.random_range(0.0..63.0));
            let d = rng.random_range(3.0..50.0);
            let w = warp_pixel(p, d, &k, &t);
            let back = warp_pixel(w.pixel, w.depth, &k, &t.inverse());
            assert!((back.pixel.u - p.u).abs() < 1e-8 && (back.pixel.v - p.v).abs() < 1e-8);
            assert!((back.depth - d).abs() < 1e-8);
        }
    }
}
