//! Pinhole camera, SE(3) algebra and LiDAR projection.

mod camera;
mod lidar;
mod se3;

pub use camera::{warp_pixel, CameraIntrinsics, Pixel, Warp};
pub use lidar::{project_lidar, CalibrationSet, PointCloud};
pub use se3::{exp as se3_exp, hat, log as se3_log, rotation_angle, Pose, Twist, LOG_PI_MARGIN};
