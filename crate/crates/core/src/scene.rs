//! Procedural desk-scale scenes: a room shell, a pedestal and one primitive
//! object whose shape and color define the class, plus look-at camera poses
//! split into a fixed test ring and angularly separated training views.
//!
//! The world frame is z-up with the object centered at the origin. Camera
//! poses use the usual optical frame (x right, y down, z forward).

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, Mat3, MotionParams, Point3, Vec3};
use crate::motion::SeedSpec;
use crate::pointcloud::ColoredPointCloud;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Sphere,
    Box,
    Cylinder,
    Cone,
    Torus,
}

impl Shape {
    pub const ALL: [Shape; 5] = [Shape::Sphere, Shape::Box, Shape::Cylinder, Shape::Cone, Shape::Torus];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Sphere => "sphere",
            Shape::Box => "box",
            Shape::Cylinder => "cylinder",
            Shape::Cone => "cone",
            Shape::Torus => "torus",
        }
    }

    /// Default object color of the class built on this shape.
    pub fn palette_color(self) -> [f32; 3] {
        match self {
            Shape::Sphere => [0.85, 0.15, 0.12],
            Shape::Box => [0.15, 0.75, 0.2],
            Shape::Cylinder => [0.15, 0.3, 0.9],
            Shape::Cone => [0.92, 0.85, 0.1],
            Shape::Torus => [0.8, 0.2, 0.8],
        }
    }

    /// Radius of the smallest origin-centered ball holding an object of
    /// characteristic size `s`.
    pub fn bounding_radius(self, s: f64) -> f64 {
        match self {
            Shape::Sphere | Shape::Torus => s,
            Shape::Box => BOX_HALF * s * 3f64.sqrt(),
            Shape::Cylinder => s * (CYL_RADIUS * CYL_RADIUS + 1.0).sqrt(),
            Shape::Cone => s * (CONE_RADIUS * CONE_RADIUS + 1.0).sqrt(),
        }
    }

    fn lowest_z(self, s: f64) -> f64 {
        match self {
            Shape::Box => -BOX_HALF * s,
            Shape::Torus => -TORUS_MINOR * s,
            _ => -s,
        }
    }

    fn surface_area(self, s: f64) -> f64 {
        match self {
            Shape::Sphere => 4.0 * PI * s * s,
            Shape::Box => 24.0 * (BOX_HALF * s).powi(2),
            Shape::Cylinder => {
                let r = CYL_RADIUS * s;
                2.0 * PI * r * 2.0 * s + 2.0 * PI * r * r
            }
            Shape::Cone => {
                let r = CONE_RADIUS * s;
                PI * r * (r * r + 4.0 * s * s).sqrt() + PI * r * r
            }
            Shape::Torus => 4.0 * PI * PI * TORUS_MAJOR * TORUS_MINOR * s * s,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

// Shape proportions relative to the characteristic size.
const BOX_HALF: f64 = 0.8;
const CYL_RADIUS: f64 = 0.7;
const CONE_RADIUS: f64 = 0.8;
const TORUS_MAJOR: f64 = 0.7;
const TORUS_MINOR: f64 = 0.3;

const FLOOR_CLEARANCE_M: f64 = 0.3;
const PEDESTAL_HALF_WIDTH: f64 = 0.5;
const JITTER: f64 = 0.1;
const COLOR_NOISE: f32 = 0.04;

pub const DEFAULT_POINT_BUDGET: usize = 2_000_000;

/// Parameters of one labeled scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub class_id: usize,
    pub shape: Shape,
    pub object_color: [f32; 3],
    /// Characteristic object size; the sphere radius.
    pub object_size_m: f64,
    pub room_half_extent_m: f64,
    /// Spacing between neighbouring surface samples.
    pub point_density_m: f64,
    pub rng_seed: u64,
    pub point_budget: usize,
}

impl SceneSpec {
    /// Desk-scale defaults for a class built on `shape`.
    pub fn desk(class_id: usize, shape: Shape, rng_seed: u64) -> Self {
        Self {
            class_id,
            shape,
            object_color: shape.palette_color(),
            object_size_m: 0.15,
            room_half_extent_m: 1.2,
            point_density_m: 0.02,
            rng_seed,
            point_budget: DEFAULT_POINT_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.point_density_m;
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::invalid(format!("point density must be positive, got {d}")));
        }
        if !(self.object_size_m.is_finite() && self.object_size_m > 0.0) {
            return Err(Error::invalid(format!("object size must be positive, got {}", self.object_size_m)));
        }
        let r = self.shape.bounding_radius(self.object_size_m);
        if !(self.room_half_extent_m.is_finite() && self.room_half_extent_m > r) {
            return Err(Error::invalid(format!(
                "room half extent {} must exceed the object bounding radius {r}",
                self.room_half_extent_m
            )));
        }
        if self.object_color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid("object color must lie in [0, 1]"));
        }
        Ok(())
    }

    fn floor_z(&self) -> f64 {
        -(self.shape.bounding_radius(self.object_size_m) + FLOOR_CLEARANCE_M)
    }

    fn estimated_points(&self, with_room: bool) -> f64 {
        let s = self.object_size_m;
        let mut area = self.shape.surface_area(s);
        if with_room {
            let h = self.room_half_extent_m;
            let height = h - self.floor_z();
            let w = PEDESTAL_HALF_WIDTH * s;
            let ped = self.shape.lowest_z(s) - self.floor_z();
            area += 2.0 * (2.0 * h).powi(2) + 8.0 * h * height + 8.0 * w * ped + 4.0 * w * w;
        }
        area / (self.point_density_m * self.point_density_m)
    }
}

#[derive(Debug, Clone, Copy)]
enum Material {
    Floor,
    Wall,
    Ceiling,
    Pedestal,
    Object,
}

fn count_to_usize(n: f64) -> usize {
    n.round().max(1.0) as usize
}

/// Axis-aligned rectangle `origin + a*u + b*v` for `a, b` in `[0, 1]`.
fn rect(origin: Point3, u: Vec3, v: Vec3, d: f64, m: Material, sink: &mut dyn FnMut(Point3, Material)) {
    let (nu, nv) = (count_to_usize(u.norm() / d), count_to_usize(v.norm() / d));
    for i in 0..nu {
        for j in 0..nv {
            let a = (i as f64 + 0.5) / nu as f64;
            let b = (j as f64 + 0.5) / nv as f64;
            sink(origin + u * a + v * b, m);
        }
    }
}

/// Horizontal disk sampled on concentric rings.
fn disk(center: Point3, radius: f64, d: f64, sink: &mut dyn FnMut(Point3, Material)) {
    let rings = count_to_usize(radius / d);
    for j in 0..rings {
        let rho = (j as f64 + 0.5) * radius / rings as f64;
        let n = count_to_usize(2.0 * PI * rho / d);
        let phase = if j % 2 == 0 { 0.0 } else { 0.5 };
        for k in 0..n {
            let t = 2.0 * PI * (k as f64 + phase) / n as f64;
            sink(center + Vec3::new(rho * t.cos(), rho * t.sin(), 0.0), Material::Object);
        }
    }
}

fn object_surface(shape: Shape, s: f64, d: f64, sink: &mut dyn FnMut(Point3, Material)) {
    let o = Material::Object;
    match shape {
        Shape::Sphere => {
            let n = count_to_usize(4.0 * PI * s * s / (d * d));
            let golden = PI * (3.0 - 5f64.sqrt());
            for i in 0..n {
                let z = 1.0 - (2 * i + 1) as f64 / n as f64;
                let rho = (1.0 - z * z).max(0.0).sqrt();
                let phi = golden * i as f64;
                sink(Point3::new(s * rho * phi.cos(), s * rho * phi.sin(), s * z), o);
            }
        }
        Shape::Box => {
            let a = BOX_HALF * s;
            let e = 2.0 * a;
            let (x, y, z) = (Vec3::x() * e, Vec3::y() * e, Vec3::z() * e);
            rect(Point3::new(-a, -a, -a), x, y, d, o, sink);
            rect(Point3::new(-a, -a, a), x, y, d, o, sink);
            rect(Point3::new(-a, -a, -a), x, z, d, o, sink);
            rect(Point3::new(-a, a, -a), x, z, d, o, sink);
            rect(Point3::new(-a, -a, -a), y, z, d, o, sink);
            rect(Point3::new(a, -a, -a), y, z, d, o, sink);
        }
        Shape::Cylinder => {
            let r = CYL_RADIUS * s;
            let (nt, nz) = (count_to_usize(2.0 * PI * r / d), count_to_usize(2.0 * s / d));
            for k in 0..nt {
                let t = 2.0 * PI * k as f64 / nt as f64;
                for j in 0..nz {
                    let z = -s + 2.0 * s * (j as f64 + 0.5) / nz as f64;
                    sink(Point3::new(r * t.cos(), r * t.sin(), z), o);
                }
            }
            disk(Point3::new(0.0, 0.0, s), r, d, sink);
            disk(Point3::new(0.0, 0.0, -s), r, d, sink);
        }
        Shape::Cone => {
            let r = CONE_RADIUS * s;
            let height = 2.0 * s;
            let slant = (r * r + height * height).sqrt();
            let rings = count_to_usize(slant / d);
            for j in 0..rings {
                let f = (j as f64 + 0.5) / rings as f64;
                let rho = r * f;
                let z = s - height * f;
                let n = count_to_usize(2.0 * PI * rho / d);
                for k in 0..n {
                    let t = 2.0 * PI * k as f64 / n as f64;
                    sink(Point3::new(rho * t.cos(), rho * t.sin(), z), o);
                }
            }
            disk(Point3::new(0.0, 0.0, -s), r, d, sink);
        }
        Shape::Torus => {
            let (big, small) = (TORUS_MAJOR * s, TORUS_MINOR * s);
            let (nu, nv) = (count_to_usize(2.0 * PI * big / d), count_to_usize(2.0 * PI * small / d));
            for i in 0..nu {
                let u = 2.0 * PI * i as f64 / nu as f64;
                for j in 0..nv {
                    let v = 2.0 * PI * j as f64 / nv as f64;
                    let rho = big + small * v.cos();
                    sink(Point3::new(rho * u.cos(), rho * u.sin(), small * v.sin()), o);
                }
            }
        }
    }
}

fn room_surface(spec: &SceneSpec, sink: &mut dyn FnMut(Point3, Material)) {
    let d = spec.point_density_m;
    let h = spec.room_half_extent_m;
    let floor = spec.floor_z();
    let height = h - floor;
    let (x, y, z) = (Vec3::x() * 2.0 * h, Vec3::y() * 2.0 * h, Vec3::z() * height);
    rect(Point3::new(-h, -h, floor), x, y, d, Material::Floor, sink);
    rect(Point3::new(-h, -h, h), x, y, d, Material::Ceiling, sink);
    rect(Point3::new(-h, -h, floor), x, z, d, Material::Wall, sink);
    rect(Point3::new(-h, h, floor), x, z, d, Material::Wall, sink);
    rect(Point3::new(-h, -h, floor), y, z, d, Material::Wall, sink);
    rect(Point3::new(h, -h, floor), y, z, d, Material::Wall, sink);

    let s = spec.object_size_m;
    let w = PEDESTAL_HALF_WIDTH * s;
    let top = spec.shape.lowest_z(s);
    let (px, py, pz) = (Vec3::x() * 2.0 * w, Vec3::y() * 2.0 * w, Vec3::z() * (top - floor));
    let p = Material::Pedestal;
    rect(Point3::new(-w, -w, top), px, py, d, p, sink);
    rect(Point3::new(-w, -w, floor), px, pz, d, p, sink);
    rect(Point3::new(-w, w, floor), px, pz, d, p, sink);
    rect(Point3::new(-w, -w, floor), py, pz, d, p, sink);
    rect(Point3::new(w, -w, floor), py, pz, d, p, sink);
}

fn build(spec: &SceneSpec, with_room: bool) -> Result<ColoredPointCloud> {
    spec.validate()?;
    let estimate = spec.estimated_points(with_room);
    if estimate > 2.0 * spec.point_budget as f64 {
        return Err(Error::Budget { requested: estimate.min(usize::MAX as f64) as usize, budget: spec.point_budget });
    }
    let visit = |sink: &mut dyn FnMut(Point3, Material)| {
        if with_room {
            room_surface(spec, sink);
        }
        object_surface(spec.shape, spec.object_size_m, spec.point_density_m, sink);
    };
    let mut count = 0usize;
    visit(&mut |_, _| count += 1);
    if count > spec.point_budget {
        return Err(Error::Budget { requested: count, budget: spec.point_budget });
    }

    let mut rng = SeedSpec::new(spec.rng_seed, spec.class_id as u64).rng(0);
    let jitter = JITTER * spec.point_density_m;
    let mut positions = Vec::with_capacity(count);
    let mut colors = Vec::with_capacity(3 * count);
    visit(&mut |p, m| {
        let base = material_color(spec, m);
        let offset = Vec3::new(
            rng.random_range(-jitter..=jitter),
            rng.random_range(-jitter..=jitter),
            rng.random_range(-jitter..=jitter),
        );
        positions.push(p + offset);
        for c in base {
            colors.push((c + noise(&mut rng)).clamp(0.0, 1.0));
        }
    });
    ColoredPointCloud::new(positions, colors, 3)
}

fn noise(rng: &mut ChaCha8Rng) -> f32 {
    rng.random_range(-COLOR_NOISE..=COLOR_NOISE)
}

fn material_color(spec: &SceneSpec, m: Material) -> [f32; 3] {
    match m {
        Material::Floor => [0.5, 0.5, 0.5],
        Material::Wall => [0.55, 0.55, 0.55],
        Material::Ceiling => [0.6, 0.6, 0.6],
        Material::Pedestal => [0.45, 0.45, 0.45],
        Material::Object => spec.object_color,
    }
}

/// Room shell, pedestal and object, each surface sampled at the spec density.
pub fn generate_scene(spec: &SceneSpec) -> Result<ColoredPointCloud> {
    build(spec, true)
}

/// The class-determining object alone.
pub fn generate_object(spec: &SceneSpec) -> Result<ColoredPointCloud> {
    build(spec, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// A camera pose looking at the scene center, with the angles it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub pose: MotionParams,
    pub split: Split,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    /// Rotation about the optical axis after look-at alignment.
    pub roll_deg: f64,
    pub distance_m: f64,
}

/// Where test and training cameras may sit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseLayout {
    pub test_count: usize,
    pub test_distance_m: f64,
    pub test_pitch_deg: f64,
    pub train_distance_m: [f64; 2],
    pub train_pitch_deg: [f64; 2],
    pub train_roll_deg: [f64; 2],
    pub retry_budget: u64,
}

impl Default for PoseLayout {
    fn default() -> Self {
        Self {
            test_count: 6,
            test_distance_m: 1.0,
            test_pitch_deg: 10.0,
            train_distance_m: [0.85, 1.1],
            train_pitch_deg: [0.0, 75.0],
            train_roll_deg: [-60.0, 60.0],
            retry_budget: 1_000_000,
        }
    }
}

/// Camera at `distance` from the origin, at azimuth `yaw` and elevation
/// `pitch`, looking at the origin and rolled about its optical axis.
pub fn look_at_pose(distance: f64, yaw_deg: f64, pitch_deg: f64, roll_deg: f64) -> Result<MotionParams> {
    if !(distance.is_finite() && distance > 0.0) {
        return Err(Error::invalid(format!("camera distance must be positive, got {distance}")));
    }
    if !(pitch_deg.abs() < 89.0) {
        return Err(Error::invalid(format!("pitch {pitch_deg} deg is too close to vertical")));
    }
    let (yaw, pitch, roll) = (yaw_deg.to_radians(), pitch_deg.to_radians(), roll_deg.to_radians());
    let center = Vec3::new(pitch.cos() * yaw.cos(), pitch.cos() * yaw.sin(), pitch.sin()) * distance;
    let forward = -center.normalize();
    let right = forward.cross(&Vec3::z()).normalize();
    let down = forward.cross(&right);
    let (c, s) = (roll.cos(), roll.sin());
    let roll_m = Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    let rotation = Mat3::from_columns(&[right, down, forward]) * roll_m;
    MotionParams::from_rotation(&rotation, center)
}

/// Per-angle separation (yaw on the circle, pitch, roll) in degrees.
pub fn angular_separation(a: &PoseSample, b: &PoseSample) -> [f64; 3] {
    let dy = (a.yaw_deg - b.yaw_deg).rem_euclid(360.0);
    [dy.min(360.0 - dy), (a.pitch_deg - b.pitch_deg).abs(), (a.roll_deg - b.roll_deg).abs()]
}

fn test_ring(layout: &PoseLayout, count: usize) -> Result<Vec<PoseSample>> {
    (0..count)
        .map(|i| {
            let yaw = 360.0 * i as f64 / count as f64;
            Ok(PoseSample {
                pose: look_at_pose(layout.test_distance_m, yaw, layout.test_pitch_deg, 0.0)?,
                split: Split::Test,
                yaw_deg: yaw,
                pitch_deg: layout.test_pitch_deg,
                roll_deg: 0.0,
                distance_m: layout.test_distance_m,
            })
        })
        .collect()
}

/// Test poses sit on a ring at evenly spaced yaws. Training poses are drawn
/// until each is at least `gap_degrees` away from every test pose of the
/// layout in yaw, pitch and roll separately.
pub fn sample_poses(
    split: Split,
    count: usize,
    gap_degrees: f64,
    rng_seed: u64,
    layout: &PoseLayout,
) -> Result<Vec<PoseSample>> {
    if count == 0 {
        return Err(Error::invalid("pose count must be at least 1"));
    }
    if !(gap_degrees.is_finite() && gap_degrees >= 0.0) {
        return Err(Error::invalid(format!("gap must be finite and >= 0, got {gap_degrees}")));
    }
    if split == Split::Test {
        return test_ring(layout, count);
    }
    if layout.test_count == 0 {
        return Err(Error::invalid("layout needs at least one test pose"));
    }
    let tests = test_ring(layout, layout.test_count)?;
    let mut rng = SeedSpec::new(rng_seed, 0x0074_7261_696e).rng(0);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0u64;
    let [d0, d1] = layout.train_distance_m;
    let [p0, p1] = layout.train_pitch_deg;
    let [r0, r1] = layout.train_roll_deg;
    while out.len() < count {
        if attempts >= layout.retry_budget {
            return Err(Error::Infeasible(format!(
                "placed {} of {count} training poses with a {gap_degrees} deg gap after {attempts} draws",
                out.len()
            )));
        }
        attempts += 1;
        let candidate = PoseSample {
            pose: MotionParams::identity(),
            split: Split::Train,
            yaw_deg: rng.random_range(0.0..360.0),
            pitch_deg: rng.random_range(p0..=p1),
            roll_deg: rng.random_range(r0..=r1),
            distance_m: rng.random_range(d0..=d1),
        };
        let separated = tests.iter().all(|t| angular_separation(&candidate, t).iter().all(|&g| g >= gap_degrees));
        if separated {
            let pose = look_at_pose(candidate.distance_m, candidate.yaw_deg, candidate.pitch_deg, candidate.roll_deg)?;
            out.push(PoseSample { pose, ..candidate });
        }
    }
    Ok(out)
}

/// One class of a generated scene set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestClass {
    pub class_id: usize,
    pub name: String,
    /// Relative paths resolve against the manifest's directory.
    pub ply_path: PathBuf,
    pub spec: SceneSpec,
    pub train_poses: Vec<MotionParams>,
    pub test_poses: Vec<MotionParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub intrinsics: CameraIntrinsics,
    pub gap_degrees: f64,
    pub layout: PoseLayout,
    pub classes: Vec<ManifestClass>,
}

impl SceneManifest {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut out, self)?;
        std::io::Write::flush(&mut out)?;
        Ok(())
    }

    /// Checks class ids and that every referenced PLY exists.
    pub fn check(&self, base_dir: &Path) -> Result<()> {
        for (i, c) in self.classes.iter().enumerate() {
            if c.class_id != i {
                return Err(Error::Schema(format!("classes[{i}].class_id: expected {i}, found {}", c.class_id)));
            }
            let path = base_dir.join(&c.ply_path);
            if !path.is_file() {
                return Err(Error::Schema(format!("classes[{i}].ply_path: file '{}' does not exist", path.display())));
            }
        }
        Ok(())
    }
}

/// In-memory counterpart of a manifest: clouds and poses for every class.
#[derive(Debug, Clone)]
pub struct SceneSet {
    pub specs: Vec<SceneSpec>,
    pub clouds: Vec<ColoredPointCloud>,
    pub train_poses: Vec<Vec<PoseSample>>,
    pub test_poses: Vec<Vec<PoseSample>>,
}

impl SceneSet {
    /// Writes one PLY per class into `dir` and returns a manifest that refers
    /// to them by file name.
    pub fn write(
        &self,
        dir: &Path,
        intrinsics: CameraIntrinsics,
        gap_degrees: f64,
        layout: &PoseLayout,
    ) -> Result<SceneManifest> {
        std::fs::create_dir_all(dir)?;
        let mut classes = Vec::with_capacity(self.specs.len());
        for (i, spec) in self.specs.iter().enumerate() {
            let ply_path = PathBuf::from(format!("class_{i}_{}.ply", spec.shape));
            std::fs::write(dir.join(&ply_path), crate::pointcloud::write_ply(&self.clouds[i])?)?;
            classes.push(ManifestClass {
                class_id: i,
                name: spec.shape.to_string(),
                ply_path,
                spec: spec.clone(),
                train_poses: self.train_poses[i].iter().map(|p| p.pose).collect(),
                test_poses: self.test_poses[i].iter().map(|p| p.pose).collect(),
            });
        }
        Ok(SceneManifest { intrinsics, gap_degrees, layout: layout.clone(), classes })
    }
}

/// Generates `specs` with `train_count` training poses per class. Classes get
/// independent pose seeds derived from `seed`.
pub fn build_scene_set(
    specs: Vec<SceneSpec>,
    layout: &PoseLayout,
    train_count: usize,
    gap_degrees: f64,
    seed: u64,
) -> Result<SceneSet> {
    use rayon::prelude::*;
    let clouds = specs.par_iter().map(generate_scene).collect::<Result<Vec<_>>>()?;
    let test = sample_poses(Split::Test, layout.test_count, gap_degrees, seed, layout)?;
    let train_poses = (0..specs.len())
        .map(|c| {
            let s = SeedSpec::new(seed, 0).derive(c as u64).stream_id;
            sample_poses(Split::Train, train_count, gap_degrees, s, layout)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneSet { test_poses: vec![test; specs.len()], specs, clouds, train_poses })
}

/// The default five-class desk set.
pub fn desk_specs(seed: u64) -> Vec<SceneSpec> {
    Shape::ALL.iter().enumerate().map(|(i, &shape)| SceneSpec::desk(i, shape, seed)).collect()
}
