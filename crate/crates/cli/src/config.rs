//! Run configuration: JSON file, flag overrides, defaults and validation.
//!
//! Relative paths in a config file resolve against the file's directory;
//! paths given on the command line resolve against the working directory.

use std::path::{Path, PathBuf};

use camsmooth::geometry::CameraIntrinsics;
use camsmooth::motion::MotionAxis;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// One value per motion axis, with the unit in each field name.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisValues {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ty_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tz_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rx_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ry_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rz_rad: Option<f64>,
}

impl AxisValues {
    /// Smoothing and augmentation noise of the reference experiments.
    pub fn reference_sigmas() -> Self {
        Self::full([0.05, 0.05, 0.1, 0.0436, 0.0436, 0.122])
    }

    /// Attack radii of the reference experiments: 0.05 m sideways, 0.1 m
    /// along the optical axis, 2.5 degrees of pitch or yaw, 7 degrees of roll.
    pub fn reference_radii() -> Self {
        Self::full([0.05, 0.05, 0.1, 2.5f64.to_radians(), 2.5f64.to_radians(), 7f64.to_radians()])
    }

    fn full(v: [f64; 6]) -> Self {
        Self {
            tx_m: Some(v[0]),
            ty_m: Some(v[1]),
            tz_m: Some(v[2]),
            rx_rad: Some(v[3]),
            ry_rad: Some(v[4]),
            rz_rad: Some(v[5]),
        }
    }

    fn slot(&mut self, axis: MotionAxis) -> &mut Option<f64> {
        match axis {
            MotionAxis::Tx => &mut self.tx_m,
            MotionAxis::Ty => &mut self.ty_m,
            MotionAxis::Tz => &mut self.tz_m,
            MotionAxis::Rx => &mut self.rx_rad,
            MotionAxis::Ry => &mut self.ry_rad,
            MotionAxis::Rz => &mut self.rz_rad,
        }
    }

    pub fn field_name(axis: MotionAxis) -> &'static str {
        match axis {
            MotionAxis::Tx => "tx_m",
            MotionAxis::Ty => "ty_m",
            MotionAxis::Tz => "tz_m",
            MotionAxis::Rx => "rx_rad",
            MotionAxis::Ry => "ry_rad",
            MotionAxis::Rz => "rz_rad",
        }
    }

    fn value(&self, axis: MotionAxis) -> Option<f64> {
        match axis {
            MotionAxis::Tx => self.tx_m,
            MotionAxis::Ty => self.ty_m,
            MotionAxis::Tz => self.tz_m,
            MotionAxis::Rx => self.rx_rad,
            MotionAxis::Ry => self.ry_rad,
            MotionAxis::Rz => self.rz_rad,
        }
    }

    /// The value for `axis`; only meaningful after [`AxisValues::fill`].
    pub fn get(&self, axis: MotionAxis) -> f64 {
        self.value(axis).expect("axis values are filled before use")
    }

    pub fn set(&mut self, axis: MotionAxis, value: f64) {
        *self.slot(axis) = Some(value);
    }

    fn fill(&mut self, defaults: &AxisValues) {
        for axis in MotionAxis::ALL {
            if self.value(axis).is_none() {
                *self.slot(axis) = defaults.value(axis);
            }
        }
    }
}

/// Where predictions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClassifierSource {
    /// Nearest-centroid model; defaults to `<out_dir>/model.json`.
    Builtin {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model_path: Option<PathBuf>,
    },
    /// Program speaking the image-request protocol on stdin/stdout.
    External { command: Vec<String> },
}

impl Default for ClassifierSource {
    fn default() -> Self {
        ClassifierSource::Builtin { model_path: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneOptions {
    /// Number of classes, taken in order from the five desk shapes.
    pub classes: usize,
    pub train_poses: usize,
    pub test_poses: usize,
    pub gap_degrees: f64,
    pub point_density_m: f64,
}

impl Default for SceneOptions {
    fn default() -> Self {
        Self { classes: 5, train_poses: 50, test_poses: 12, gap_degrees: 10.0, point_density_m: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// Extra renders per training pose under the axis smoothing noise.
    pub augment_per_pose: u64,
    pub feature_block_px: usize,
    pub temperature: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { augment_per_pose: 0, feature_block_px: 10, temperature: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Png,
    Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderOptions {
    /// Test views to render; all of them when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pose_ids: Option<Vec<usize>>,
    /// Motion sizes along the configured axis, in its unit.
    pub motions: Vec<f64>,
    pub format: ImageFormat,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { pose_ids: None, motions: vec![0.0], format: ImageFormat::Png }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Defaults to `<out_dir>/manifest.json`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest_path: Option<PathBuf>,
    /// Defaults to the manifest's camera, or the evaluation camera for
    /// `gen-scene`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<CameraIntrinsics>,
    pub axis: MotionAxis,
    pub sigma: AxisValues,
    pub attack_radius: AxisValues,
    pub attack_ks: Vec<usize>,
    pub random_attacks: bool,
    pub n0: u64,
    pub n: u64,
    pub alpha_conf: f64,
    pub seed: u64,
    pub classifier: ClassifierSource,
    pub out_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Apply the per-axis uniform and voxel downsampling presets to loaded clouds.
    pub downsample: bool,
    pub sweep_steps: usize,
    pub scene: SceneOptions,
    pub train: TrainSection,
    pub render: RenderOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest_path: None,
            intrinsics: None,
            axis: MotionAxis::Tz,
            sigma: AxisValues::default(),
            attack_radius: AxisValues::default(),
            attack_ks: vec![5, 100],
            random_attacks: false,
            n0: 100,
            n: 1000,
            alpha_conf: 0.01,
            seed: 0,
            classifier: ClassifierSource::default(),
            out_dir: PathBuf::from("out"),
            workers: None,
            downsample: false,
            sweep_steps: 50,
            scene: SceneOptions::default(),
            train: TrainSection::default(),
            render: RenderOptions::default(),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub axis: Option<MotionAxis>,
    pub radius: Option<f64>,
    pub sigma: Option<f64>,
    pub n: Option<u64>,
    pub n0: Option<u64>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Which inputs a subcommand reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Needs {
    pub manifest: bool,
    pub classifier: bool,
    pub positive_sigma: bool,
}

fn schema(msg: impl Into<String>) -> Failure {
    Failure::Schema(msg.into())
}

fn anchor(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Parses a config file, reporting the path of the offending field.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let bytes = std::fs::read(path).map_err(|e| schema(format!("config '{}': {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_slice(&bytes);
        let mut config: RunConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| schema(format!("config '{}': {}: {}", path.display(), e.path(), e.inner())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.anchor_paths(base);
        Ok(config)
    }

    fn anchor_paths(&mut self, base: &Path) {
        self.out_dir = anchor(base, &self.out_dir);
        if let Some(p) = &self.manifest_path {
            self.manifest_path = Some(anchor(base, p));
        }
        if let ClassifierSource::Builtin { model_path: Some(p) } = &self.classifier {
            self.classifier = ClassifierSource::Builtin { model_path: Some(anchor(base, p)) };
        }
    }

    /// Applies flag overrides and fills every default that depends on
    /// other fields. Path defaults follow the final output directory.
    pub fn resolve(mut self, o: &Overrides) -> Self {
        if let Some(axis) = o.axis {
            self.axis = axis;
        }
        self.sigma.fill(&AxisValues::reference_sigmas());
        self.attack_radius.fill(&AxisValues::reference_radii());
        if let Some(r) = o.radius {
            self.attack_radius.set(self.axis, r);
        }
        if let Some(s) = o.sigma {
            self.sigma.set(self.axis, s);
        }
        self.n = o.n.unwrap_or(self.n);
        self.n0 = o.n0.unwrap_or(self.n0);
        self.alpha_conf = o.alpha.unwrap_or(self.alpha_conf);
        self.seed = o.seed.unwrap_or(self.seed);
        self.workers = o.workers.or(self.workers);
        if let Some(out) = &o.out {
            self.out_dir = out.clone();
        }
        self.manifest_path.get_or_insert_with(|| self.out_dir.join("manifest.json"));
        if let ClassifierSource::Builtin { model_path: p @ None } = &mut self.classifier {
            *p = Some(self.out_dir.join("model.json"));
        }
        self
    }

    pub fn manifest_path(&self) -> &Path {
        self.manifest_path.as_deref().expect("resolved config has a manifest path")
    }

    pub fn sigma_for_axis(&self) -> f64 {
        self.sigma.get(self.axis)
    }

    pub fn radius_for_axis(&self) -> f64 {
        self.attack_radius.get(self.axis)
    }

    /// Checks value ranges and that every input the subcommand reads exists.
    pub fn validate(&self, needs: Needs) -> Result<(), Failure> {
        if self.n0 == 0 {
            return Err(schema("n0: must be >= 1"));
        }
        if self.n == 0 {
            return Err(schema("n: must be >= 1"));
        }
        if !(self.alpha_conf > 0.0 && self.alpha_conf < 1.0) {
            return Err(schema(format!("alpha_conf: must lie in (0, 1), got {}", self.alpha_conf)));
        }
        for axis in MotionAxis::ALL {
            let name = AxisValues::field_name(axis);
            let s = self.sigma.get(axis);
            if !(s.is_finite() && s >= 0.0) {
                return Err(schema(format!("sigma.{name}: must be finite and >= 0, got {s}")));
            }
            let r = self.attack_radius.get(axis);
            if !(r.is_finite() && r >= 0.0) {
                return Err(schema(format!("attack_radius.{name}: must be finite and >= 0, got {r}")));
            }
        }
        if needs.positive_sigma && self.sigma_for_axis() <= 0.0 {
            return Err(schema(format!(
                "sigma.{}: certification needs a positive sigma on the {} axis",
                AxisValues::field_name(self.axis),
                self.axis
            )));
        }
        if self.attack_ks.is_empty() {
            return Err(schema("attack_ks: must not be empty"));
        }
        if let Some(i) = self.attack_ks.iter().position(|&k| k == 0) {
            return Err(schema(format!("attack_ks[{i}]: must be >= 1")));
        }
        if self.workers == Some(0) {
            return Err(schema("workers: must be >= 1"));
        }
        if let Some(k) = &self.intrinsics {
            k.validate().map_err(|e| schema(format!("intrinsics: {e}")))?;
        }
        let s = &self.scene;
        if !(1..=camsmooth::scene::Shape::ALL.len()).contains(&s.classes) {
            return Err(schema(format!("scene.classes: must lie in 1..=5, got {}", s.classes)));
        }
        if s.train_poses == 0 {
            return Err(schema("scene.train_poses: must be >= 1"));
        }
        if s.test_poses == 0 {
            return Err(schema("scene.test_poses: must be >= 1"));
        }
        if !(s.gap_degrees.is_finite() && s.gap_degrees >= 0.0) {
            return Err(schema(format!("scene.gap_degrees: must be >= 0, got {}", s.gap_degrees)));
        }
        if !(s.point_density_m.is_finite() && s.point_density_m > 0.0) {
            return Err(schema(format!("scene.point_density_m: must be > 0, got {}", s.point_density_m)));
        }
        if self.train.feature_block_px == 0 {
            return Err(schema("train.feature_block_px: must be >= 1"));
        }
        if !(self.train.temperature.is_finite() && self.train.temperature > 0.0) {
            return Err(schema(format!("train.temperature: must be > 0, got {}", self.train.temperature)));
        }
        if let Some(i) = self.render.motions.iter().position(|m| !m.is_finite()) {
            return Err(schema(format!("render.motions[{i}]: must be finite")));
        }
        if needs.manifest && !self.manifest_path().is_file() {
            return Err(schema(format!("manifest_path: file '{}' does not exist", self.manifest_path().display())));
        }
        if needs.classifier {
            match &self.classifier {
                ClassifierSource::Builtin { model_path } => {
                    let p = model_path.as_deref().expect("resolved config has a model path");
                    if !p.is_file() {
                        return Err(schema(format!("classifier.model_path: file '{}' does not exist", p.display())));
                    }
                }
                ClassifierSource::External { command } => {
                    if command.is_empty() {
                        return Err(schema("classifier.command: must name a program"));
                    }
                }
            }
        }
        Ok(())
    }
}
