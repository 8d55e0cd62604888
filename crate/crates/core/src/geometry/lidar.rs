use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Vector3, Vector4};

use super::camera::CameraIntrinsics;
use crate::depthfield::SparseDepthImage;
use crate::error::{Error, Result};

/// LiDAR → image calibration chain `P2 · R_rect · Tr_velo_to_cam`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    /// 3×4 projection of rectified camera 2.
    pub p2: Matrix3x4<f64>,
    /// Rectifying rotation padded to 4×4 with a unit homogeneous row.
    pub rect: Matrix4<f64>,
    /// LiDAR → camera 0 rigid transform.
    pub velo_to_cam: Matrix4<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub reflectance: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        PointCloud {
            points,
            reflectance: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.iter().all(|x| x.is_finite()))
    }
}

fn check_homogeneous(name: &str, m: &Matrix4<f64>) -> Result<()> {
    let bottom = m.row(3);
    if bottom[0] != 0.0 || bottom[1] != 0.0 || bottom[2] != 0.0 || bottom[3] != 1.0 {
        return Err(Error::Calibration(format!("{name}: bottom row must be (0,0,0,1)")));
    }
    let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    let err = (r.transpose() * r - Matrix3::identity()).norm();
    if err > 1e-6 {
        return Err(Error::Calibration(format!(
            "{name}: rotation block not orthonormal (error {err:e})"
        )));
    }
    Ok(())
}

impl CalibrationSet {
    pub fn new(p2: Matrix3x4<f64>, rect: Matrix4<f64>, velo_to_cam: Matrix4<f64>) -> Result<Self> {
        let c = CalibrationSet {
            p2,
            rect,
            velo_to_cam,
        };
        c.validate()?;
        Ok(c)
    }

    /// `P2 = [K | 0]`, identity rectification and identity LiDAR transform.
    pub fn identity(k: &CameraIntrinsics) -> Self {
        CalibrationSet {
            p2: Matrix3x4::new(k.fx, 0.0, k.cx, 0.0, 0.0, k.fy, k.cy, 0.0, 0.0, 0.0, 1.0, 0.0),
            rect: Matrix4::identity(),
            velo_to_cam: Matrix4::identity(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_homogeneous("R_rect", &self.rect)?;
        check_homogeneous("Tr_velo_to_cam", &self.velo_to_cam)?;
        if !self.p2.iter().all(|x| x.is_finite()) {
            return Err(Error::Calibration("P2 has non-finite entries".into()));
        }
        Ok(())
    }

    /// Full 3×4 LiDAR → homogeneous image map.
    pub fn lidar_to_image(&self) -> Matrix3x4<f64> {
        self.p2 * self.rect * self.velo_to_cam
    }

    /// Pinhole intrinsics read off P2 for an image of the given size.
    pub fn intrinsics(&self, width: usize, height: usize) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(
            self.p2[(0, 0)],
            self.p2[(1, 1)],
            self.p2[(0, 2)],
            self.p2[(1, 2)],
            width,
            height,
        )
    }

    /// Parses KITTI-style `KEY: v1 v2 ...` lines.
    ///
    /// Recognised keys: `P2` (12 values), `R0_rect` or `R_rect` (9 values),
    /// `Tr_velo_to_cam` or `Tr_velo_cam` (12 values). Other keys are ignored.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut p2 = None;
        let mut rect = None;
        let mut tr = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, rest)) = line.split_once(':') else {
                return Err(format!("line {}: missing ':'", lineno + 1));
            };
            let values: std::result::Result<Vec<f64>, _> =
                rest.split_whitespace().map(str::parse::<f64>).collect();
            let values = values.map_err(|e| format!("line {}: {e}", lineno + 1))?;
            let expect = |n: usize| {
                if values.len() == n {
                    Ok(())
                } else {
                    Err(format!(
                        "line {}: {key} expects {n} values, found {}",
                        lineno + 1,
                        values.len()
                    ))
                }
            };
            match key.trim() {
                "P2" => {
                    expect(12)?;
                    p2 = Some(Matrix3x4::from_row_slice(&values));
                }
                "R0_rect" | "R_rect" => {
                    expect(9)?;
                    let r = Matrix3::from_row_slice(&values);
                    let mut m = Matrix4::identity();
                    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
                    rect = Some(m);
                }
                "Tr_velo_to_cam" | "Tr_velo_cam" => {
                    expect(12)?;
                    let top = Matrix3x4::from_row_slice(&values);
                    let mut m = Matrix4::identity();
                    m.fixed_view_mut::<3, 4>(0, 0).copy_from(&top);
                    tr = Some(m);
                }
                _ => {}
            }
        }
        let calib = CalibrationSet {
            p2: p2.ok_or("missing P2")?,
            rect: rect.ok_or("missing R0_rect")?,
            velo_to_cam: tr.ok_or("missing Tr_velo_to_cam")?,
        };
        calib.validate().map_err(|e| e.to_string())?;
        Ok(calib)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|m| Error::format(path, m))
    }

    /// Writes the three keys in the order `P2`, `R0_rect`, `Tr_velo_to_cam`,
    /// numbers in shortest round-trip decimal form separated by one space.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let join = |vals: Vec<f64>| {
            vals.iter()
                .map(|v| format!("{v:?}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let p2: Vec<f64> = (0..3).flat_map(|r| (0..4).map(move |c| (r, c))).map(|rc| self.p2[rc]).collect();
        let rect: Vec<f64> = (0..3).flat_map(|r| (0..3).map(move |c| (r, c))).map(|rc| self.rect[rc]).collect();
        let tr: Vec<f64> = (0..3)
            .flat_map(|r| (0..4).map(move |c| (r, c)))
            .map(|rc| self.velo_to_cam[rc])
            .collect();
        writeln!(out, "P2: {}", join(p2)).unwrap();
        writeln!(out, "R0_rect: {}", join(rect)).unwrap();
        writeln!(out, "Tr_velo_to_cam: {}", join(tr)).unwrap();
        out
    }
}

/// Projects a LiDAR scan into a sparse depth image.
///
/// Hits are snapped to the nearest integer pixel; points behind the camera or
/// outside the image are dropped, and when several points land on one pixel
/// the smallest depth wins.
pub fn project_lidar(
    cloud: &PointCloud,
    calib: &CalibrationSet,
    width: usize,
    height: usize,
) -> SparseDepthImage {
    let m = calib.lidar_to_image();
    let mut out = SparseDepthImage::empty(width, height);
    for p in &cloud.points {
        let d = m * Vector4::new(p.x, p.y, p.z, 1.0);
        let z = d.z;
        if !(z > 0.0) {
            continue;
        }
        let u = (d.x / z).round();
        let v = (d.y / z).round();
        if !(u >= 0.0 && v >= 0.0 && u < width as f64 && v < height as f64) {
            continue;
        }
        let idx = v as usize * width + u as usize;
        if !out.valid[idx] || z < out.depth[idx] {
            out.depth[idx] = z;
            out.valid[idx] = true;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 20.5, 15.5, 40, 30).unwrap()
    }

    /// KITTI-like calibration: velodyne axes (x fwd, y left, z up) to camera axes.
    fn kitti_like(k: &CameraIntrinsics) -> CalibrationSet {
        let mut tr = Matrix4::identity();
        tr.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0));
        tr[(0, 3)] = 0.01;
        tr[(1, 3)] = -0.07;
        tr[(2, 3)] = -0.27;
        let mut c = CalibrationSet::identity(k);
        c.velo_to_cam = tr;
        c
    }

    #[test]
    fn on_axis_point_lands_on_principal_point() {
        let k = CameraIntrinsics::new(100.0, 100.0, 20.0, 15.0, 40, 30).unwrap();
        let calib = CalibrationSet::identity(&k);
        let img = project_lidar(&PointCloud::new(vec![Vector3::new(0.0, 0.0, 5.0)]), &calib, 40, 30);
        assert_eq!(img.n_valid(), 1);
        assert!(img.valid[15 * 40 + 20]);
        assert_eq!(img.depth[15 * 40 + 20], 5.0);
    }

    #[test]
    fn behind_camera_discarded() {
        let k = cam();
        let img = project_lidar(
            &PointCloud::new(vec![Vector3::new(0.0, 0.0, -1.0)]),
            &CalibrationSet::identity(&k),
            40,
            30,
        );
        assert_eq!(img.n_valid(), 0);
    }

    #[test]
    fn z_buffer_keeps_nearest() {
        let k = CameraIntrinsics::new(100.0, 100.0, 20.0, 15.0, 40, 30).unwrap();
        let cloud = PointCloud::new(vec![Vector3::new(0.0, 0.0, 7.0), Vector3::new(0.0, 0.0, 4.0)]);
        let img = project_lidar(&cloud, &CalibrationSet::identity(&k), 40, 30);
        assert_eq!(img.depth[15 * 40 + 20], 4.0);
    }

    #[test]
    fn projection_matches_brute_force_nearest_scan() {
        let k = cam();
        let calib = kitti_like(&k);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vector3<f64>> = (0..1000)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-2.0..30.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-2.0..2.0),
                )
            })
            .collect();
        let cloud = PointCloud::new(pts.clone());
        let img = project_lidar(&cloud, &calib, k.width, k.height);
        // Brute force: per pixel, scan every point independently.
        let m = calib.lidar_to_image();
        for v in 0..k.height {
            for u in 0..k.width {
                let mut best: Option<f64> = None;
                for p in &pts {
                    let d = m * Vector4::new(p.x, p.y, p.z, 1.0);
                    if d.z <= 0.0 {
                        continue;
                    }
                    if (d.x / d.z).round() == u as f64 && (d.y / d.z).round() == v as f64 {
                        best = Some(best.map_or(d.z, |b: f64| b.min(d.z)));
                    }
                }
                let idx = v * k.width + u;
                assert_eq!(img.valid[idx], best.is_some());
                if let Some(b) = best {
                    assert_eq!(img.depth[idx], b);
                }
            }
        }
        assert!(img.n_valid() > 50);
    }

    #[test]
    fn calib_text_round_trip_and_aliases() {
        let k = cam();
        let c = kitti_like(&k);
        let text = c.to_text();
        let back = CalibrationSet::parse(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), text);

        let alias = text.replace("R0_rect", "R_rect").replace("Tr_velo_to_cam", "Tr_velo_cam");
        assert_eq!(CalibrationSet::parse(&alias).unwrap(), c);
    }

    #[test]
    fn calib_parse_errors() {
        assert!(CalibrationSet::parse("P2: 1 2 3").is_err());
        assert!(CalibrationSet::parse("garbage").is_err());
        let k = cam();
        let text = CalibrationSet::identity(&k).to_text();
        let no_rect: String = text.lines().filter(|l| !l.starts_with("R0")).collect::<Vec<_>>().join("\n");
        assert!(CalibrationSet::parse(&no_rect).unwrap_err().contains("R0_rect"));
        // Non-orthonormal rotation block.
        let bad = text.replace("R0_rect: 1.0", "R0_rect: 2.0");
        assert!(CalibrationSet::parse(&bad).is_err());
    }
}
