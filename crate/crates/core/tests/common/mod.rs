//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use camsmooth::classifier::CentroidModel;
use camsmooth::classifier::{Classifier, LabelDistribution, Prediction};
use camsmooth::geometry::{project_point, CameraIntrinsics, Mat3, MotionParams, Point3, Vec3};
use camsmooth::motion::MotionAxis;
use camsmooth::pipeline::{train, LabeledScenes, TrainOptions};
use camsmooth::pointcloud::ColoredPointCloud;
use camsmooth::renderer::ProjectedImage;
use camsmooth::scene::{build_scene_set, desk_specs, PoseLayout};

/// Pixel coordinates and depth of `p` after a one-axis motion of size
/// `value`, written out per axis from the pinhole model.
pub fn closed_form(axis: MotionAxis, value: f64, p: &Point3, k: &CameraIntrinsics) -> (f64, f64, f64) {
    let (x, y, z) = (p.x, p.y, p.z);
    let (s, c) = value.sin_cos();
    match axis {
        MotionAxis::Tz => {
            let d = z - value;
            ((k.fx * x + k.cx * d) / d, (k.fy * y + k.cy * d) / d, d)
        }
        MotionAxis::Tx => ((k.fx * (x - value) + k.cx * z) / z, (k.fy * y + k.cy * z) / z, z),
        MotionAxis::Ty => ((k.fx * x + k.cx * z) / z, (k.fy * (y - value) + k.cy * z) / z, z),
        // The roll image row uses cos*Y - sin*X: the inverse rotation
        // carries the minus sign on the X term.
        MotionAxis::Rz => (k.fx * (c * x + s * y) / z + k.cx, k.fy * (c * y - s * x) / z + k.cy, z),
        MotionAxis::Rx => {
            let d = -s * y + c * z;
            (k.fx * x / d + k.cx, (y * c + z * s) / d * k.fy + k.cy, d)
        }
        MotionAxis::Ry => {
            let d = s * x + c * z;
            ((x * c - z * s) / d * k.fx + k.cx, k.fy * y / d + k.cy, d)
        }
    }
}

/// Rotation matrix of the unit quaternion for `rotvec`.
pub fn quaternion_rotation(rotvec: &Vec3) -> Mat3 {
    let theta = rotvec.norm();
    let (w, axis) =
        if theta == 0.0 { (1.0, Vec3::zeros()) } else { ((0.5 * theta).cos(), rotvec / theta * (0.5 * theta).sin()) };
    let (x, y, z) = (axis.x, axis.y, axis.z);
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - z * w),
        2.0 * (x * z + y * w),
        2.0 * (x * y + z * w),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - x * w),
        2.0 * (x * z - y * w),
        2.0 * (y * z + x * w),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Per-pixel scan over every point: the nearest point in front of the camera
/// that lands in the pixel wins, the lowest index on exact depth ties.
pub fn naive_render(cloud: &ColoredPointCloud, pose: &MotionParams, k: &CameraIntrinsics) -> (Vec<f32>, Vec<bool>) {
    let hits: Vec<Option<(i64, i64, f64)>> = cloud
        .positions()
        .iter()
        .map(|p| project_point(p, pose, k).ok().map(|(uv, d)| (uv.x.floor() as i64, uv.y.floor() as i64, d)))
        .collect();
    let c = cloud.channel_count();
    let (w, h) = (k.width as i64, k.height as i64);
    let mut pixels = vec![0.0f32; (w * h) as usize * c];
    let mut coverage = vec![false; (w * h) as usize];
    for row in 0..h {
        for col in 0..w {
            let mut best: Option<(f64, usize)> = None;
            for (i, hit) in hits.iter().enumerate() {
                if let Some((u, v, d)) = *hit {
                    if u == col && v == row && best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, i));
                    }
                }
            }
            if let Some((_, i)) = best {
                let idx = (row * w + col) as usize;
                coverage[idx] = true;
                pixels[idx * c..(idx + 1) * c].copy_from_slice(cloud.color(i));
            }
        }
    }
    (pixels, coverage)
}

/// One-row strip camera: a point at `(0, 0, 2)` lands on column
/// `1000 - 1000 * tx` under a pure x translation.
pub fn strip_camera() -> CameraIntrinsics {
    CameraIntrinsics { fx: 2000.0, fy: 2000.0, cx: 1000.0, cy: 0.5, width: 2000, height: 1 }
}

pub fn single_point(p: Point3) -> ColoredPointCloud {
    ColoredPointCloud::new(vec![p], vec![1.0, 1.0, 1.0], 3).unwrap()
}

/// Class 0 when a covered column is at or right of `column`, class 1
/// otherwise (including an empty image).
pub struct ColumnThreshold {
    pub column: usize,
}

impl Classifier for ColumnThreshold {
    fn class_count(&self) -> usize {
        2
    }

    fn predict(&self, image: &ProjectedImage) -> camsmooth::Result<Prediction> {
        let w = image.width();
        let right = image.coverage().iter().enumerate().any(|(i, &c)| c && i % w >= self.column);
        Ok(Prediction::from_probs(LabelDistribution::one_hot(usize::from(!right), 2)))
    }
}

/// Fixed-seed desk dataset: five classes, 50 train and 12 test poses per
/// class, 10 degree gap.
pub const DESK_SEED: u64 = 2024;

pub fn desk_reference() -> (LabeledScenes, CentroidModel, CameraIntrinsics) {
    let layout = PoseLayout { test_count: 12, ..PoseLayout::default() };
    let set = build_scene_set(desk_specs(DESK_SEED), &layout, 50, 10.0, DESK_SEED).unwrap();
    let scenes = LabeledScenes::from_scene_set(&set);
    let k = CameraIntrinsics::evaluation_default();
    let model = train(&scenes, &k, &TrainOptions::default()).unwrap();
    (scenes, model, k)
}
