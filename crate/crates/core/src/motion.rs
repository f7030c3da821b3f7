//! Motion-space algebra and the seeded motion samplers.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::{MotionParams, Vec3};
use crate::{Error, Result};

/// One of the six one-axis camera motions.
///
/// `Tx`/`Ty` translate along the horizontal/vertical image axes, `Tz` along
/// the optical axis; `Rx` (pitch), `Ry` (yaw) and `Rz` (roll) rotate about
/// the same three axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MotionAxis {
    Tx,
    Ty,
    Tz,
    Rx,
    Ry,
    Rz,
}

impl MotionAxis {
    pub const ALL: [MotionAxis; 6] =
        [MotionAxis::Tx, MotionAxis::Ty, MotionAxis::Tz, MotionAxis::Rx, MotionAxis::Ry, MotionAxis::Rz];

    pub fn is_rotation(self) -> bool {
        matches!(self, MotionAxis::Rx | MotionAxis::Ry | MotionAxis::Rz)
    }

    /// Camera-frame unit vector of the axis.
    pub fn unit(self) -> Vec3 {
        match self {
            MotionAxis::Tx | MotionAxis::Rx => Vec3::x(),
            MotionAxis::Ty | MotionAxis::Ry => Vec3::y(),
            MotionAxis::Tz | MotionAxis::Rz => Vec3::z(),
        }
    }

    /// The coordinate of `motion` along this axis (meters or radians).
    pub fn coordinate(self, motion: &MotionParams) -> f64 {
        let i = match self {
            MotionAxis::Tx | MotionAxis::Rx => 0,
            MotionAxis::Ty | MotionAxis::Ry => 1,
            MotionAxis::Tz | MotionAxis::Rz => 2,
        };
        if self.is_rotation() {
            motion.rotvec()[i]
        } else {
            motion.translation()[i]
        }
    }

    pub fn unit_name(self) -> &'static str {
        if self.is_rotation() {
            "rad"
        } else {
            "m"
        }
    }
}

impl fmt::Display for MotionAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for MotionAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tx" => Ok(MotionAxis::Tx),
            "ty" => Ok(MotionAxis::Ty),
            "tz" => Ok(MotionAxis::Tz),
            "rx" => Ok(MotionAxis::Rx),
            "ry" => Ok(MotionAxis::Ry),
            "rz" => Ok(MotionAxis::Rz),
            _ => Err(Error::invalid(format!("unknown motion axis {s:?}"))),
        }
    }
}

/// Composition of camera motions: moving by `first`, then by `second`
/// expressed in the moved camera frame.
///
/// `R = R1 R2`, `t = R1 t2 + t1`. Rotations about a common axis add exactly.
pub fn compose(first: &MotionParams, second: &MotionParams) -> MotionParams {
    let (w1, w2) = (first.rotvec(), second.rotvec());
    let r1 = first.rotation();
    let translation = r1 * second.translation() + first.translation();
    let zero = Vec3::zeros();
    let rotvec = if w1 == zero {
        w2
    } else if w2 == zero {
        w1
    } else if w1.cross(&w2) == zero {
        w1 + w2
    } else {
        crate::geometry::axis_angle_from_rotation(&(r1 * second.rotation()))
    };
    MotionParams::from_parts(rotvec, translation)
}

/// Inverse motion: `compose(m, inverse(m))` is the identity.
pub fn inverse(motion: &MotionParams) -> MotionParams {
    let rt = motion.rotation().transpose();
    MotionParams::from_parts(-motion.rotvec(), -(rt * motion.translation()))
}

/// Motion with a single nonzero coordinate `value` on `axis`.
pub fn axis_motion(axis: MotionAxis, value: f64) -> Result<MotionParams> {
    if !value.is_finite() {
        return Err(Error::invalid(format!("axis value must be finite, got {value}")));
    }
    let v = axis.unit() * value;
    if axis.is_rotation() {
        MotionParams::from_rotvec(v)
    } else {
        MotionParams::from_translation(v)
    }
}

/// Standard deviations of the zero-mean Gaussian smoothing motion.
///
/// Rotation noise is `theta * fixed_axis` with `theta ~ N(0, sigma_theta^2)`.
/// A zero sigma leaves that coordinate untouched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SmoothingSpec {
    pub sigma_x_m: f64,
    pub sigma_y_m: f64,
    pub sigma_z_m: f64,
    pub sigma_theta_rad: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_axis: Option<[f64; 3]>,
}

impl SmoothingSpec {
    /// Gaussian noise on one axis only.
    pub fn one_axis(axis: MotionAxis, sigma: f64) -> Result<Self> {
        let mut spec = SmoothingSpec::default();
        match axis {
            MotionAxis::Tx => spec.sigma_x_m = sigma,
            MotionAxis::Ty => spec.sigma_y_m = sigma,
            MotionAxis::Tz => spec.sigma_z_m = sigma,
            _ => {
                spec.sigma_theta_rad = sigma;
                spec.fixed_axis = Some(axis.unit().into());
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [self.sigma_x_m, self.sigma_y_m, self.sigma_z_m, self.sigma_theta_rad];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid(format!("sigmas must be finite and >= 0, got {sigmas:?}")));
        }
        if let Some(n) = self.fixed_axis {
            let n = Vec3::from(n);
            if !((n.norm() - 1.0).abs() <= 1e-9) {
                return Err(Error::invalid(format!("fixed rotation axis must be a unit vector, got {n:?}")));
            }
        } else if self.sigma_theta_rad > 0.0 {
            return Err(Error::invalid("rotational smoothing requires a fixed rotation axis"));
        }
        Ok(())
    }

    pub fn is_degenerate(&self) -> bool {
        self.sigma_x_m == 0.0 && self.sigma_y_m == 0.0 && self.sigma_z_m == 0.0 && self.sigma_theta_rad == 0.0
    }

    /// Noise level acting on `axis`. Rotational axes only see the rotation
    /// noise when the fixed axis coincides with them.
    pub fn sigma_for(&self, axis: MotionAxis) -> f64 {
        match axis {
            MotionAxis::Tx => self.sigma_x_m,
            MotionAxis::Ty => self.sigma_y_m,
            MotionAxis::Tz => self.sigma_z_m,
            _ => match self.fixed_axis {
                Some(n) if (Vec3::from(n) - axis.unit()).norm() <= 1e-9 => self.sigma_theta_rad,
                _ => 0.0,
            },
        }
    }
}

/// Seed for the counter-based motion streams: the draw for sample `i` is a
/// pure function of `(master_seed, stream_id, i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

/// Words reserved per sample index inside a ChaCha stream.
const WORDS_PER_SAMPLE: u128 = 1 << 20;

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self { master_seed, stream_id }
    }

    /// Independent child stream keyed by `tag`.
    pub fn derive(&self, tag: u64) -> SeedSpec {
        SeedSpec {
            master_seed: self.master_seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(tag.wrapping_add(0x632b_e59b_d9b4_e019))),
        }
    }

    /// Generator positioned at the start of sample `index`.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = self.master_seed;
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng.set_word_pos(index as u128 * WORDS_PER_SAMPLE);
        rng
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The `index`-th Gaussian smoothing motion of the stream.
pub fn sample_gaussian(spec: &SmoothingSpec, seed: SeedSpec, index: u64) -> MotionParams {
    let mut rng = seed.rng(index);
    let mut draw = |sigma: f64| {
        // Always consume the draw so coordinates stay aligned across specs.
        let z: f64 = rng.sample(StandardNormal);
        if sigma == 0.0 {
            0.0
        } else {
            sigma * z
        }
    };
    let t = Vec3::new(draw(spec.sigma_x_m), draw(spec.sigma_y_m), draw(spec.sigma_z_m));
    let theta = draw(spec.sigma_theta_rad);
    let rotvec = match spec.fixed_axis {
        Some(n) if theta != 0.0 => Vec3::from(n) * theta,
        _ => Vec3::zeros(),
    };
    MotionParams::from_parts(rotvec, t)
}

/// `k` evenly spaced values over `[-radius, radius]`, endpoints included.
/// A single value sits at the center.
pub fn uniform_grid_values(radius: f64, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::invalid("grid needs at least one sample"));
    }
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(Error::invalid(format!("grid radius must be finite and >= 0, got {radius}")));
    }
    if k == 1 {
        return Ok(vec![0.0]);
    }
    let span = (k - 1) as f64;
    Ok((0..k).map(|i| radius * ((2 * i) as f64 - span) / span).collect())
}

/// Evenly spaced one-axis motions over `[-radius, radius]`.
pub fn sample_uniform_grid(axis: MotionAxis, radius: f64, k: usize) -> Result<Vec<MotionParams>> {
    uniform_grid_values(radius, k)?.into_iter().map(|v| axis_motion(axis, v)).collect()
}

/// `k` one-axis motions drawn uniformly from `[-radius, radius]`.
pub fn sample_uniform_random(axis: MotionAxis, radius: f64, k: usize, seed: SeedSpec) -> Result<Vec<MotionParams>> {
    if k == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(Error::invalid(format!("radius must be finite and >= 0, got {radius}")));
    }
    (0..k as u64)
        .map(|i| {
            let u: f64 = seed.rng(i).random();
            axis_motion(axis, radius * (2.0 * u - 1.0))
        })
        .collect()
}
