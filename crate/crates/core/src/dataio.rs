//! KITTI-style sequence directories.
//!
//! ```text
//! <root>/sequences/<id>/image_2/000000.pgm     8/16-bit PGM or PPM
//! <root>/sequences/<id>/velodyne/000000.bin    f32 LE records (x, y, z, reflectance)
//! <root>/sequences/<id>/depth_pred/000000.bin  optional unscaled depth predictions
//! <root>/sequences/<id>/calib.txt
//! <root>/sequences/<id>/times.txt              image timestamps, one per line
//! <root>/sequences/<id>/velodyne_times.txt     optional LiDAR timestamps
//! <root>/poses/<id>.txt                        optional 3×4 row-major camera poses
//! ```
//!
//! When `velodyne_times.txt` is present, scans are associated with images by
//! nearest timestamp; otherwise they are paired by index.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use crate::depthfield::{read_depth, DepthMap, SparseDepthImage};
use crate::error::{Error, Result};
use crate::geometry::{project_lidar, CalibrationSet, CameraIntrinsics, PointCloud, Pose};
use crate::image::{write_file, Image};

/// Bytes per LiDAR record.
pub const LIDAR_RECORD: u64 = 16;
/// Default maximum image/LiDAR timestamp gap (s).
pub const DEFAULT_MAX_DT: f64 = 0.025;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub sequence: String,
    pub images: Vec<PathBuf>,
    /// Associated scan per frame, when LiDAR is present.
    pub scans: Option<Vec<PathBuf>>,
    pub pretrained: Option<Vec<PathBuf>>,
    pub calibration: PathBuf,
    pub gt_poses: Option<PathBuf>,
    pub timestamps: Vec<f64>,
    /// Image frames dropped for lack of a close LiDAR scan.
    pub dropped: Vec<usize>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// A loaded manifest with its calibration and poses; frames load on demand.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub manifest: DatasetManifest,
    pub calibration: CalibrationSet,
    /// Camera → world per frame.
    pub gt_poses: Option<Vec<Pose>>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.manifest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.is_empty()
    }

    pub fn image(&self, i: usize) -> Result<Image> {
        Image::read_pnm(&self.manifest.images[i])
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        let first = self.image(0)?;
        self.calibration.intrinsics(first.width, first.height)
    }

    pub fn scan(&self, i: usize) -> Result<PointCloud> {
        let scans = self
            .manifest
            .scans
            .as_ref()
            .ok_or_else(|| Error::format(&self.manifest.calibration, "sequence has no LiDAR scans"))?;
        read_scan(&scans[i])
    }

    /// Scan `i` projected into the image plane.
    pub fn lidar_depth(&self, i: usize, width: usize, height: usize) -> Result<SparseDepthImage> {
        Ok(project_lidar(&self.scan(i)?, &self.calibration, width, height))
    }

    pub fn pretrained(&self, i: usize) -> Result<DepthMap> {
        let files = self
            .manifest
            .pretrained
            .as_ref()
            .ok_or_else(|| Error::format(&self.manifest.calibration, "sequence has no depth predictions"))?;
        read_depth(&files[i])
    }
}

/// Directory of one sequence under a dataset root.
pub fn sequence_dir(root: &Path, id: &str) -> PathBuf {
    root.join("sequences").join(id)
}

pub fn poses_path(root: &Path, id: &str) -> PathBuf {
    root.join("poses").join(format!("{id}.txt"))
}

fn list_frames(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if path.is_file() && exts.contains(&ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Scans a sequence directory and checks that its streams are consistent.
pub fn load_manifest(root: &Path, id: &str) -> Result<DatasetManifest> {
    let dir = sequence_dir(root, id);
    let images = list_frames(&dir.join("image_2"), &["pgm", "ppm"])?;
    if images.is_empty() {
        return Err(Error::format(dir.join("image_2"), "no images found"));
    }
    let times_path = dir.join("times.txt");
    let timestamps = if times_path.exists() {
        read_timestamps(&times_path)?
    } else {
        (0..images.len()).map(|i| i as f64 * 0.1).collect()
    };
    if timestamps.len() != images.len() {
        return Err(Error::format(
            &times_path,
            format!("{} timestamps for {} images", timestamps.len(), images.len()),
        ));
    }

    let velo_dir = dir.join("velodyne");
    let mut keep: Vec<usize> = (0..images.len()).collect();
    let mut dropped = Vec::new();
    let scans = if velo_dir.is_dir() {
        let all = list_frames(&velo_dir, &["bin"])?;
        let velo_times = dir.join("velodyne_times.txt");
        if velo_times.exists() {
            let lt = read_timestamps(&velo_times)?;
            if lt.len() != all.len() {
                return Err(Error::format(
                    &velo_times,
                    format!("{} timestamps for {} scans", lt.len(), all.len()),
                ));
            }
            let a = nearest_timestamp_align(&timestamps, &lt, DEFAULT_MAX_DT)?;
            keep = a.pairs.iter().map(|p| p.0).collect();
            dropped = a.dropped;
            Some(a.pairs.iter().map(|p| all[p.1].clone()).collect::<Vec<_>>())
        } else {
            if all.len() != images.len() {
                return Err(Error::format(
                    &velo_dir,
                    format!("{} scans for {} images", all.len(), images.len()),
                ));
            }
            Some(all)
        }
    } else {
        None
    };

    let pred_dir = dir.join("depth_pred");
    let pretrained = if pred_dir.is_dir() {
        let all = list_frames(&pred_dir, &["bin", "pgm"])?;
        if all.len() != images.len() {
            return Err(Error::format(
                &pred_dir,
                format!("{} depth predictions for {} images", all.len(), images.len()),
            ));
        }
        Some(keep.iter().map(|&i| all[i].clone()).collect())
    } else {
        None
    };

    let gt = poses_path(root, id);
    Ok(DatasetManifest {
        sequence: id.to_string(),
        images: keep.iter().map(|&i| images[i].clone()).collect(),
        scans,
        pretrained,
        calibration: dir.join("calib.txt"),
        gt_poses: gt.exists().then_some(gt),
        timestamps: keep.iter().map(|&i| timestamps[i]).collect(),
        dropped,
    })
}

/// Loads the manifest, calibration and ground-truth poses of a sequence.
pub fn load_sequence(root: &Path, id: &str) -> Result<Sequence> {
    let manifest = load_manifest(root, id)?;
    let calibration = CalibrationSet::load(&manifest.calibration)?;
    let gt_poses = match &manifest.gt_poses {
        Some(p) => {
            let all = read_poses(p)?;
            // Pose lines follow the original image indices.
            let n_images = all.len();
            if n_images != manifest.len() + manifest.dropped.len() {
                return Err(Error::format(
                    p,
                    format!("{} poses for {} images", n_images, manifest.len() + manifest.dropped.len()),
                ));
            }
            Some(
                all.into_iter()
                    .enumerate()
                    .filter(|(i, _)| !manifest.dropped.contains(i))
                    .map(|(_, p)| p)
                    .collect(),
            )
        }
        None => None,
    };
    Ok(Sequence {
        manifest,
        calibration,
        gt_poses,
    })
}

/// Reads a LiDAR scan of `(x, y, z, reflectance)` f32 records.
pub fn read_scan(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let size = bytes.len() as u64;
    if size % LIDAR_RECORD != 0 {
        return Err(Error::RecordSize {
            path: path.to_path_buf(),
            size,
            record: LIDAR_RECORD,
        });
    }
    let f = |c: &[u8]| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
    let mut points = Vec::with_capacity(bytes.len() / 16);
    let mut refl = Vec::with_capacity(bytes.len() / 16);
    for rec in bytes.chunks_exact(16) {
        points.push(Vector3::new(f(&rec[0..4]), f(&rec[4..8]), f(&rec[8..12])));
        refl.push(f(&rec[12..16]));
    }
    Ok(PointCloud {
        points,
        reflectance: Some(refl),
    })
}

/// Writes a scan as f32 records; missing reflectance is written as 0.
pub fn write_scan(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut bytes = Vec::with_capacity(cloud.len() * 16);
    for (i, p) in cloud.points.iter().enumerate() {
        let r = cloud.reflectance.as_ref().map_or(0.0, |r| r[i]);
        for x in [p.x, p.y, p.z, r] {
            bytes.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    write_file(path, &bytes)
}

pub fn parse_poses(text: &str) -> std::result::Result<Vec<Pose>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| format!("line {}: bad number {t:?}", n + 1)))
            .collect::<std::result::Result<_, _>>()?;
        let arr: [f64; 12] = vals
            .try_into()
            .map_err(|v: Vec<f64>| format!("line {}: expected 12 values, found {}", n + 1, v.len()))?;
        out.push(Pose::from_row_major_3x4(&arr));
    }
    Ok(out)
}

/// Reads a KITTI odometry pose file (camera → world per line).
pub fn read_poses(path: &Path) -> Result<Vec<Pose>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_poses(&text).map_err(|m| Error::format(path, m))
}

pub fn format_poses(poses: &[Pose]) -> String {
    let mut s = String::new();
    for p in poses {
        let row: Vec<String> = p.to_row_major_3x4().iter().map(|x| format!("{x:?}")).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn write_poses(path: &Path, poses: &[Pose]) -> Result<()> {
    write_file(path, format_poses(poses).as_bytes())
}

/// Reads one timestamp (seconds) per line; the sequence must be increasing.
pub fn read_timestamps(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let x: f64 = t
            .parse()
            .map_err(|_| Error::format(path, format!("line {}: bad timestamp {t:?}", n + 1)))?;
        if out.last().is_some_and(|&prev| x <= prev) {
            return Err(Error::format(path, format!("line {}: timestamps not increasing", n + 1)));
        }
        out.push(x);
    }
    Ok(out)
}

pub fn write_timestamps(path: &Path, stamps: &[f64]) -> Result<()> {
    let text: String = stamps.iter().map(|t| format!("{t:?}\n")).collect();
    write_file(path, text.as_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    /// `(primary index, secondary index)` per kept frame.
    pub pairs: Vec<(usize, usize)>,
    /// Primary frames whose nearest secondary stamp was too far away.
    pub dropped: Vec<usize>,
}

/// Pairs each primary stamp with the nearest secondary stamp, dropping pairs
/// further apart than `max_dt`. Ties go to the earlier secondary stamp.
pub fn nearest_timestamp_align(primary: &[f64], secondary: &[f64], max_dt: f64) -> Result<Association> {
    let monotone = |s: &[f64]| s.windows(2).all(|w| w[0] < w[1]);
    if !monotone(primary) || !monotone(secondary) {
        return Err(Error::Alignment("timestamps must be strictly increasing".into()));
    }
    if primary.is_empty() || secondary.is_empty() {
        return Err(Error::Alignment("a timestamp stream is empty".into()));
    }
    let mut pairs = Vec::new();
    let mut dropped = Vec::new();
    let mut j = 0;
    for (i, &t) in primary.iter().enumerate() {
        while j + 1 < secondary.len() && (secondary[j + 1] - t).abs() < (secondary[j] - t).abs() {
            j += 1;
        }
        if (secondary[j] - t).abs() <= max_dt {
            pairs.push((i, j));
        } else {
            dropped.push(i);
        }
    }
    if pairs.is_empty() {
        return Err(Error::Alignment(format!("no stamps within {max_dt} s of each other")));
    }
    Ok(Association { pairs, dropped })
}
