//! Glue between labeled scenes, the built-in classifier and evaluation.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{train_centroid, CentroidModel, FeatureSpec};
use crate::evaluate::EvalTask;
use crate::geometry::{CameraIntrinsics, MotionParams};
use crate::motion::{sample_gaussian, SeedSpec, SmoothingSpec};
use crate::pointcloud::{parse_ply, ColoredPointCloud, DownsampleConfig};
use crate::renderer::{render, ProjectedImage, SceneFrame};
use crate::scene::{SceneManifest, SceneSet};
use crate::Result;

/// Per-class clouds with their camera poses. Class ids are indices.
#[derive(Debug, Clone)]
pub struct LabeledScenes {
    pub clouds: Vec<Arc<ColoredPointCloud>>,
    pub train_poses: Vec<Vec<MotionParams>>,
    pub test_poses: Vec<Vec<MotionParams>>,
}

impl LabeledScenes {
    pub fn from_scene_set(set: &SceneSet) -> Self {
        let poses =
            |v: &Vec<Vec<crate::scene::PoseSample>>| v.iter().map(|c| c.iter().map(|p| p.pose).collect()).collect();
        Self {
            clouds: set.clouds.iter().cloned().map(Arc::new).collect(),
            train_poses: poses(&set.train_poses),
            test_poses: poses(&set.test_poses),
        }
    }

    /// Reads every PLY referenced by `manifest`, resolving relative paths
    /// against `base_dir`.
    pub fn load(manifest: &SceneManifest, base_dir: &Path) -> Result<Self> {
        manifest.check(base_dir)?;
        let clouds = manifest
            .classes
            .par_iter()
            .map(|c| Ok(Arc::new(parse_ply(&std::fs::read(base_dir.join(&c.ply_path))?)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            clouds,
            train_poses: manifest.classes.iter().map(|c| c.train_poses.clone()).collect(),
            test_poses: manifest.classes.iter().map(|c| c.test_poses.clone()).collect(),
        })
    }

    pub fn class_count(&self) -> usize {
        self.clouds.len()
    }

    pub fn downsampled(&self, config: &DownsampleConfig) -> Result<Self> {
        let clouds = self.clouds.par_iter().map(|c| Ok(Arc::new(config.apply(c)?))).collect::<Result<Vec<_>>>()?;
        Ok(Self { clouds, ..self.clone() })
    }

    /// One task per test pose, classes in order; pose ids count up from 0.
    pub fn eval_tasks(&self) -> Vec<EvalTask> {
        let mut tasks = Vec::new();
        for (label, (cloud, poses)) in self.clouds.iter().zip(&self.test_poses).enumerate() {
            for pose in poses {
                tasks.push(EvalTask {
                    pose_id: tasks.len(),
                    true_label: label,
                    frame: SceneFrame::new(Arc::clone(cloud), *pose),
                });
            }
        }
        tasks
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub feature_spec: FeatureSpec,
    pub temperature: f64,
    /// Extra renders per training pose under motions drawn from `augment_spec`.
    pub augment_per_pose: u64,
    pub augment_spec: SmoothingSpec,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            feature_spec: FeatureSpec::default(),
            temperature: 1.0,
            augment_per_pose: 0,
            augment_spec: SmoothingSpec::default(),
            seed: 0,
        }
    }
}

/// Labeled renders of every training pose, plus augmented copies.
pub fn training_images(
    scenes: &LabeledScenes,
    intrinsics: &CameraIntrinsics,
    options: &TrainOptions,
) -> Result<Vec<(ProjectedImage, usize)>> {
    let jobs: Vec<(usize, usize)> =
        scenes.train_poses.iter().enumerate().flat_map(|(c, poses)| (0..poses.len()).map(move |j| (c, j))).collect();
    let per_pose = jobs
        .par_iter()
        .map(|&(c, j)| {
            let frame = SceneFrame::new(Arc::clone(&scenes.clouds[c]), scenes.train_poses[c][j]);
            let mut out = vec![(render(&frame, &MotionParams::identity(), intrinsics)?, c)];
            let seed = SeedSpec::new(options.seed, c as u64).derive(j as u64);
            for i in 0..options.augment_per_pose {
                out.push((render(&frame, &sample_gaussian(&options.augment_spec, seed, i), intrinsics)?, c));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_pose.into_iter().flatten().collect())
}

/// Fits the nearest-centroid model on [`training_images`].
pub fn train(scenes: &LabeledScenes, intrinsics: &CameraIntrinsics, options: &TrainOptions) -> Result<CentroidModel> {
    options.augment_spec.validate()?;
    let images = training_images(scenes, intrinsics, options)?;
    train_centroid(images.iter().map(|(i, l)| (i, *l)), scenes.class_count(), options.feature_spec, options.temperature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Classifier;
    use crate::scene::{build_scene_set, PoseLayout, SceneSpec, Shape};

    fn small_set() -> LabeledScenes {
        let specs: Vec<SceneSpec> = [Shape::Sphere, Shape::Box]
            .iter()
            .enumerate()
            .map(|(i, &s)| SceneSpec { point_density_m: 0.04, ..SceneSpec::desk(i, s, 5) })
            .collect();
        let layout = PoseLayout { test_count: 3, ..PoseLayout::default() };
        LabeledScenes::from_scene_set(&build_scene_set(specs, &layout, 4, 15.0, 5).unwrap())
    }

    #[test]
    fn tasks_enumerate_class_major() {
        let scenes = small_set();
        let tasks = scenes.eval_tasks();
        assert_eq!(tasks.len(), 6);
        assert_eq!(tasks.iter().map(|t| t.true_label).collect::<Vec<_>>(), vec![0, 0, 0, 1, 1, 1]);
        assert!(tasks.iter().enumerate().all(|(i, t)| t.pose_id == i));
    }

    #[test]
    fn augmentation_adds_images() {
        let scenes = small_set();
        let k = CameraIntrinsics::evaluation_default();
        let opts = TrainOptions {
            augment_per_pose: 2,
            augment_spec: SmoothingSpec::one_axis(crate::motion::MotionAxis::Tz, 0.05).unwrap(),
            ..TrainOptions::default()
        };
        assert_eq!(training_images(&scenes, &k, &opts).unwrap().len(), 2 * 4 * 3);
    }

    #[test]
    fn trained_model_separates_colors() {
        let scenes = small_set();
        let k = CameraIntrinsics::evaluation_default();
        let model = train(&scenes, &k, &TrainOptions::default()).unwrap();
        assert_eq!(model.class_count(), 2);
        let correct = scenes
            .eval_tasks()
            .iter()
            .filter(|t| {
                model.predict(&render(&t.frame, &MotionParams::identity(), &k).unwrap()).unwrap().class == t.true_label
            })
            .count();
        assert!(correct >= 5, "{correct}/6");
    }
}
