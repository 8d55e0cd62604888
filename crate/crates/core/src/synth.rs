//! Ray-cast synthetic scenes with exact ground truth.
//!
//! The world is a textured height field `Z = base + Σ aₖ sin(kₖ·(X, Y) + φₖ)`
//! seen by a camera looking down +Z. Every frame is rendered independently by
//! intersecting pixel rays with the surface, so images, depths and poses are
//! mutually consistent up to floating point.

use nalgebra::{Matrix3, Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use std::path::Path;

use crate::dataio;
use crate::depthfield::{write_depth_bin, write_sparse_pgm, DepthMap, SparseDepthImage};
use crate::error::{Error, Result};
use crate::geometry::{se3_exp, CalibrationSet, CameraIntrinsics, Pixel, PointCloud, Pose, Twist};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceSpec {
    /// Distance of the mean surface plane from the first camera (m).
    pub base_depth: f64,
    pub waves: usize,
    /// Amplitude of each height wave (m).
    pub amplitude: f64,
    pub min_wavelength: f64,
    pub max_wavelength: f64,
}

impl Default for SurfaceSpec {
    fn default() -> Self {
        SurfaceSpec {
            base_depth: 6.0,
            waves: 3,
            amplitude: 0.08,
            min_wavelength: 6.0,
            max_wavelength: 12.0,
        }
    }
}

/// Band-limited texture: a sum of random sinusoids over world (X, Y).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextureSpec {
    pub components: usize,
    /// Standard deviation of the intensity around 0.5.
    pub contrast: f64,
    pub min_wavelength: f64,
    pub max_wavelength: f64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        TextureSpec {
            components: 16,
            contrast: 0.12,
            min_wavelength: 3.5,
            max_wavelength: 10.0,
        }
    }
}

/// Per-frame motion: `velocity` plus uniform jitter in `[-jitter, jitter]`,
/// both as twists (translation m, rotation rad).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySpec {
    pub velocity: [f64; 6],
    pub jitter: [f64; 6],
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec {
            velocity: [0.3, 0.0, 0.08, 0.0, 0.003, 0.0],
            jitter: [0.05, 0.02, 0.03, 0.002, 0.002, 0.001],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Additive Gaussian image noise σ.
    pub image_sigma: f64,
    /// Fraction of pixels receiving a LiDAR return.
    pub lidar_density: f64,
    /// Fraction of those returns dropped.
    pub lidar_dropout: f64,
    /// The "pretrained" prediction is ground truth divided by this factor.
    pub pretrained_scale: f64,
    /// Pointwise σ of the multiplicative prediction error.
    pub pretrained_sigma: f64,
    /// Correlation length of the prediction error (pixels); 0 gives
    /// independent per-pixel errors.
    pub pretrained_length: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            image_sigma: 0.0,
            lidar_density: 0.06,
            lidar_dropout: 0.0,
            pretrained_scale: 33.0,
            pretrained_sigma: 0.05,
            pretrained_length: 24.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels (fx = fy); principal point at the image center.
    pub focal: f64,
    pub frames: usize,
    pub surface: SurfaceSpec,
    pub texture: TextureSpec,
    pub trajectory: TrajectorySpec,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            width: 192,
            height: 64,
            focal: 110.0,
            frames: 20,
            surface: SurfaceSpec::default(),
            texture: TextureSpec::default(),
            trajectory: TrajectorySpec::default(),
            noise: NoiseSpec::default(),
            seed: 0,
        }
    }
}

/// Minimum admissible surface depth (m).
pub const MIN_SURFACE_DEPTH: f64 = 0.5;
/// Maximum per-frame rotation (rad).
pub const MAX_FRAME_ROTATION: f64 = 0.1;

impl SceneSpec {
    /// Noise-free variant of this spec (image, LiDAR and prediction noise off).
    pub fn noiseless(mut self) -> Self {
        self.noise.image_sigma = 0.0;
        self.noise.lidar_dropout = 0.0;
        self.noise.pretrained_sigma = 0.0;
        self
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(
            self.focal,
            self.focal,
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
            self.width,
            self.height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Scene(m.to_string()));
        if self.width < 8 || self.height < 8 {
            return bad("image must be at least 8x8");
        }
        if self.frames < 2 {
            return bad("need at least two frames");
        }
        self.intrinsics().map_err(|e| Error::Scene(e.to_string()))?;
        let s = &self.surface;
        if s.base_depth - s.waves as f64 * s.amplitude.abs() <= MIN_SURFACE_DEPTH {
            return bad("surface comes closer than the minimum depth");
        }
        if !(s.min_wavelength > 0.0 && s.max_wavelength >= s.min_wavelength) {
            return bad("surface wavelengths must be positive and ordered");
        }
        let t = &self.texture;
        if t.components == 0 || !(t.min_wavelength > 0.0 && t.max_wavelength >= t.min_wavelength) {
            return bad("texture needs components with positive ordered wavelengths");
        }
        let tr = &self.trajectory;
        let max_rot = (0..3)
            .map(|i| (tr.velocity[3 + i].abs() + tr.jitter[3 + i].abs()).powi(2))
            .sum::<f64>()
            .sqrt();
        if max_rot >= MAX_FRAME_ROTATION {
            return bad("per-frame rotation must stay below 0.1 rad");
        }
        let n = &self.noise;
        if !(n.pretrained_scale > 0.0)
            || !(0.0..=1.0).contains(&n.lidar_density)
            || !(0.0..=1.0).contains(&n.lidar_dropout)
            || n.image_sigma < 0.0
            || n.pretrained_sigma < 0.0
            || !(n.pretrained_length >= 0.0)
        {
            return bad("noise settings out of range");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SceneFrame {
    pub image: Image,
    pub depth: DepthMap,
    /// Camera → world.
    pub pose: Pose,
    /// LiDAR surrogate: ground-truth depth at the sampled pixels.
    pub lidar: SparseDepthImage,
    /// The same samples as a point cloud in the LiDAR frame (f32-exact).
    pub cloud: PointCloud,
    /// "Pretrained" prediction: ground truth / s_pre · (1 + η).
    pub pretrained: DepthMap,
}

#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub spec: SceneSpec,
    pub intrinsics: CameraIntrinsics,
    pub calibration: CalibrationSet,
    pub frames: Vec<SceneFrame>,
    /// Seconds, 10 Hz.
    pub timestamps: Vec<f64>,
}

impl SyntheticSequence {
    /// Pose mapping camera `i` to camera `i + 1`.
    pub fn pair_pose(&self, i: usize) -> Pose {
        self.frames[i + 1].pose.inverse().compose(&self.frames[i].pose)
    }

    pub fn pair_poses(&self) -> Vec<Pose> {
        (0..self.frames.len() - 1).map(|i| self.pair_pose(i)).collect()
    }

    pub fn gt_poses(&self) -> Vec<Pose> {
        self.frames.iter().map(|f| f.pose).collect()
    }
}

struct Wave {
    amp: f64,
    kx: f64,
    ky: f64,
    phase: f64,
}

fn random_waves(rng: &mut ChaCha8Rng, n: usize, amp: f64, lmin: f64, lmax: f64) -> Vec<Wave> {
    (0..n)
        .map(|_| {
            let lambda = rng.random_range(lmin..=lmax);
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let k = std::f64::consts::TAU / lambda;
            Wave {
                amp,
                kx: k * theta.cos(),
                ky: k * theta.sin(),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            }
        })
        .collect()
}

/// Height and its (X, Y) gradient.
fn eval_waves(waves: &[Wave], x: f64, y: f64) -> (f64, f64, f64) {
    let (mut h, mut hx, mut hy) = (0.0, 0.0, 0.0);
    for w in waves {
        let (s, c) = (w.kx * x + w.ky * y + w.phase).sin_cos();
        h += w.amp * s;
        hx += w.amp * w.kx * c;
        hy += w.amp * w.ky * c;
    }
    (h, hx, hy)
}

struct Scene {
    base: f64,
    surface: Vec<Wave>,
    texture: Vec<Wave>,
}

impl Scene {
    /// Ray parameter `s` where `o + s·d` meets the surface (Newton).
    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        if d.z <= 0.0 {
            return None;
        }
        let mut s = (self.base - o.z) / d.z;
        for _ in 0..50 {
            let p = o + d * s;
            let (h, hx, hy) = eval_waves(&self.surface, p.x, p.y);
            let f = p.z - self.base - h;
            let df = d.z - hx * d.x - hy * d.y;
            let step = f / df;
            s -= step;
            if step.abs() < 1e-14 * s.abs().max(1.0) {
                return Some(s);
            }
        }
        Some(s)
    }

    fn intensity(&self, x: f64, y: f64) -> f64 {
        (0.5 + eval_waves(&self.texture, x, y).0).clamp(0.0, 1.0)
    }
}

/// KITTI-like LiDAR mounting: velodyne axes (x forward, y left, z up) mapped
/// to camera axes, plus a small rectifying rotation.
pub fn synthetic_calibration(k: &CameraIntrinsics) -> CalibrationSet {
    let mut calib = CalibrationSet::identity(k);
    let rect = se3_exp(&Twist::from_array([0.0, 0.0, 0.0, 0.002, -0.001, 0.0015])).rotation;
    calib.rect.fixed_view_mut::<3, 3>(0, 0).copy_from(&rect);
    let mut tr = Matrix4::identity();
    tr.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0));
    tr[(0, 3)] = 0.0625;
    tr[(1, 3)] = -0.125;
    tr[(2, 3)] = -0.25;
    calib.velo_to_cam = tr;
    calib
}

fn f32_exact(x: f64) -> f64 {
    x as f32 as f64
}

/// Renders a synthetic sequence.
pub fn generate(spec: &SceneSpec) -> Result<SyntheticSequence> {
    spec.validate()?;
    let k = spec.intrinsics()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sf = &spec.surface;
    let tx = &spec.texture;
    let scene = Scene {
        base: sf.base_depth,
        surface: random_waves(&mut rng, sf.waves, sf.amplitude, sf.min_wavelength, sf.max_wavelength),
        texture: random_waves(
            &mut rng,
            tx.components,
            tx.contrast * (2.0 / tx.components as f64).sqrt(),
            tx.min_wavelength,
            tx.max_wavelength,
        ),
    };

    let mut poses = vec![Pose::identity()];
    let tr = &spec.trajectory;
    for _ in 1..spec.frames {
        let mut xi = [0.0; 6];
        for j in 0..6 {
            let jit = if tr.jitter[j] > 0.0 {
                rng.random_range(-tr.jitter[j]..=tr.jitter[j])
            } else {
                0.0
            };
            xi[j] = tr.velocity[j] + jit;
        }
        let step = se3_exp(&Twist::from_array(xi));
        poses.push(poses.last().unwrap().compose(&step));
    }

    let calib = synthetic_calibration(&k);
    // Camera (rectified) → LiDAR.
    let cam_to_velo = (calib.rect * calib.velo_to_cam)
        .try_inverse()
        .ok_or_else(|| Error::Scene("calibration not invertible".into()))?;
    let noise = &spec.noise;
    let image_noise = rand_distr::Normal::new(0.0, noise.image_sigma.max(0.0))
        .map_err(|e| Error::Scene(e.to_string()))?;

    let mut frames = Vec::with_capacity(spec.frames);
    for pose in &poses {
        let mut image = Image::new(w, h, 1);
        let mut depth = vec![0.0; w * h];
        for v in 0..h {
            for u in 0..w {
                let d = pose.rotation * k.ray(Pixel::new(u as f64, v as f64));
                let s = scene
                    .intersect(&pose.translation, &d)
                    .ok_or_else(|| Error::Scene("ray misses surface".into()))?;
                if !(s > MIN_SURFACE_DEPTH) {
                    return Err(Error::Scene(format!("surface depth {s} below {MIN_SURFACE_DEPTH} m")));
                }
                let p = pose.translation + d * s;
                depth[v * w + u] = s;
                image.data[v * w + u] = scene.intensity(p.x, p.y);
            }
        }
        if noise.image_sigma > 0.0 {
            for x in &mut image.data {
                *x = (*x + rng.sample(image_noise)).clamp(0.0, 1.0);
            }
        }
        image.quantize16();
        let depth = DepthMap::new(w, h, depth)?;

        // LiDAR surrogate.
        let mut lidar = SparseDepthImage::empty(w, h);
        let mut points = Vec::new();
        let mut refl = Vec::new();
        for q in 0..w * h {
            if !rng.random_bool(noise.lidar_density) {
                continue;
            }
            if noise.lidar_dropout > 0.0 && rng.random_bool(noise.lidar_dropout) {
                continue;
            }
            let (u, v) = ((q % w) as f64, (q / w) as f64);
            let x = k.back_project(Pixel::new(u, v), depth.data[q]);
            let pv = cam_to_velo * x.push(1.0);
            points.push(Vector3::new(f32_exact(pv.x), f32_exact(pv.y), f32_exact(pv.z)));
            refl.push(f32_exact(image.data[q]));
            lidar.valid[q] = true;
            lidar.depth[q] = depth.data[q];
        }

        // Multiplicative prediction error with pointwise σ, either smooth
        // (random waves over pixel coordinates) or independent per pixel.
        let eta: Vec<f64> = if noise.pretrained_sigma == 0.0 {
            vec![0.0; w * h]
        } else if noise.pretrained_length > 0.0 {
            let err = random_waves(
                &mut rng,
                8,
                noise.pretrained_sigma * (2.0f64 / 8.0).sqrt(),
                noise.pretrained_length,
                noise.pretrained_length * 2.0,
            );
            (0..w * h)
                .map(|q| eval_waves(&err, (q % w) as f64, (q / w) as f64).0)
                .collect()
        } else {
            let normal = rand_distr::Normal::new(0.0, noise.pretrained_sigma).map_err(|e| Error::Scene(e.to_string()))?;
            (0..w * h).map(|_| rng.sample(normal)).collect()
        };
        let pretrained = DepthMap::from_fn(w, h, |u, v| {
            f32_exact(depth.get(u, v) / noise.pretrained_scale * (1.0 + eta[v * w + u]).max(0.2))
        });

        frames.push(SceneFrame {
            image,
            depth,
            pose: *pose,
            lidar,
            cloud: PointCloud {
                points,
                reflectance: Some(refl),
            },
            pretrained,
        });
    }
    Ok(SyntheticSequence {
        spec: spec.clone(),
        intrinsics: k,
        calibration: calib,
        timestamps: (0..spec.frames).map(|i| i as f64 * 0.1).collect(),
        frames,
    })
}

/// Writes a sequence in the layout read by [`crate::dataio::load_sequence`],
/// plus dense ground-truth depth under `depth_gt/` and projected LiDAR under
/// `proj_depth/`. `comment` is stamped into every PGM header.
pub fn write_dataset(seq: &SyntheticSequence, root: &Path, id: &str, comment: Option<&str>) -> Result<()> {
    let dir = dataio::sequence_dir(root, id);
    let comment = comment.map_or_else(|| format!("synthetic seed {}", seq.spec.seed), str::to_string);
    for (i, f) in seq.frames.iter().enumerate() {
        let name = format!("{i:06}");
        f.image
            .write_pnm16(&dir.join("image_2").join(format!("{name}.pgm")), Some(&comment))?;
        dataio::write_scan(&dir.join("velodyne").join(format!("{name}.bin")), &f.cloud)?;
        write_depth_bin(&dir.join("depth_pred").join(format!("{name}.bin")), &f.pretrained)?;
        write_depth_bin(&dir.join("depth_gt").join(format!("{name}.bin")), &f.depth)?;
        write_sparse_pgm(&dir.join("proj_depth").join(format!("{name}.pgm")), &f.lidar, Some(&comment))?;
    }
    crate::image::write_file(&dir.join("calib.txt"), seq.calibration.to_text().as_bytes())?;
    dataio::write_timestamps(&dir.join("times.txt"), &seq.timestamps)?;
    dataio::write_poses(&dataio::poses_path(root, id), &seq.gt_poses())
}
