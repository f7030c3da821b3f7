//! Z-buffered floor splatting of colored clouds onto the pixel grid.
//!
//! Every point is projected with the camera motion, assigned to the pixel
//! `(floor(v), floor(u))` and kept if it is the nearest point seen there so
//! far. Depths closer than [`DEPTH_TIE`] count as equal and the lower cloud
//! index wins. Pixels no point lands on hold [`HOLE_VALUE`] and are marked
//! uncovered.

use std::io::Write;
use std::sync::Arc;

use crate::geometry::{CameraIntrinsics, MotionParams, Projector, DEPTH_EPSILON};
use crate::motion::compose;
use crate::pointcloud::{quantize, ColoredPointCloud};
use crate::{Error, Result};

/// Fill value of uncovered pixels, on every channel.
pub const HOLE_VALUE: f32 = 0.0;

/// Depth difference (meters) below which two points are treated as tied.
pub const DEPTH_TIE: f64 = 1e-12;

pub const TENSOR_MAGIC: &[u8; 8] = b"CMSIMG01";

/// Rendered `H x W x C` image plus its coverage mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedImage {
    pixels: Vec<f32>,
    coverage: Vec<bool>,
    intrinsics: CameraIntrinsics,
    channel_count: usize,
}

impl ProjectedImage {
    /// An image with every pixel uncovered.
    pub fn blank(intrinsics: CameraIntrinsics, channel_count: usize) -> Self {
        let n = intrinsics.pixel_count();
        Self { pixels: vec![HOLE_VALUE; n * channel_count], coverage: vec![false; n], intrinsics, channel_count }
    }

    /// Fully covered image from raw row-major values.
    pub fn from_pixels(intrinsics: CameraIntrinsics, channel_count: usize, pixels: Vec<f32>) -> Result<Self> {
        Self::with_coverage(intrinsics, channel_count, pixels, vec![true; intrinsics.pixel_count()])
    }

    pub fn with_coverage(
        intrinsics: CameraIntrinsics,
        channel_count: usize,
        pixels: Vec<f32>,
        coverage: Vec<bool>,
    ) -> Result<Self> {
        let n = intrinsics.pixel_count();
        if channel_count == 0 || pixels.len() != n * channel_count || coverage.len() != n {
            return Err(Error::invalid(format!(
                "image buffers do not match {}x{}x{}",
                intrinsics.height, intrinsics.width, channel_count
            )));
        }
        Ok(Self { pixels, coverage, intrinsics, channel_count })
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height as usize
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width as usize
    }

    pub fn channel_count(&self) -> usize {
        self.channel_count
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn coverage(&self) -> &[bool] {
        &self.coverage
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let i = (row * self.width() + col) * self.channel_count;
        &self.pixels[i..i + self.channel_count]
    }

    pub fn is_covered(&self, row: usize, col: usize) -> bool {
        self.coverage[row * self.width() + col]
    }

    pub fn covered_count(&self) -> usize {
        self.coverage.iter().filter(|&&c| c).count()
    }
}

/// A cloud together with the pose of the camera at the motion origin.
#[derive(Debug, Clone)]
pub struct SceneFrame {
    pub cloud: Arc<ColoredPointCloud>,
    pub base_pose: MotionParams,
}

impl SceneFrame {
    pub fn new(cloud: Arc<ColoredPointCloud>, base_pose: MotionParams) -> Self {
        Self { cloud, base_pose }
    }

    /// Same cloud, motion origin moved by `motion` in the current camera frame.
    pub fn moved(&self, motion: &MotionParams) -> Self {
        Self { cloud: Arc::clone(&self.cloud), base_pose: compose(&self.base_pose, motion) }
    }

    /// The cloud expressed in the camera frame reached by `motion`, with an
    /// identity base pose. Renders the same images as [`SceneFrame::moved`].
    pub fn reexpressed(&self, motion: &MotionParams) -> Result<Self> {
        let pose = compose(&self.base_pose, motion);
        let rot_t = pose.rotation().transpose();
        let t = pose.translation();
        let cloud = self.cloud.map_positions(|p| (rot_t * (p.coords - t)).into())?;
        Ok(Self { cloud: Arc::new(cloud), base_pose: MotionParams::identity() })
    }
}

/// Renders `frame` seen from the camera moved by `motion`.
pub fn render(frame: &SceneFrame, motion: &MotionParams, intrinsics: &CameraIntrinsics) -> Result<ProjectedImage> {
    let cloud = &frame.cloud;
    if cloud.is_empty() {
        return Err(Error::invalid("cannot render an empty cloud"));
    }
    intrinsics.validate()?;
    let pose = compose(&frame.base_pose, motion);
    let projector = Projector::new(&pose, intrinsics);
    let (w, h) = (intrinsics.width as usize, intrinsics.height as usize);
    let (wf, hf) = (w as f64, h as f64);

    let mut depth = vec![f64::INFINITY; w * h];
    let mut owner = vec![u32::MAX; w * h];
    for (i, p) in cloud.positions().iter().enumerate() {
        let cam = projector.camera_coords(p);
        let d = cam.z;
        if !(d > DEPTH_EPSILON) {
            continue;
        }
        let (u, v) = projector.pixel(&cam);
        // On [0, w) truncation equals floor; the comparisons also reject NaN.
        if !(u >= 0.0 && u < wf && v >= 0.0 && v < hf) {
            continue;
        }
        let (col, row) = (u as usize, v as usize);
        let idx = row * w + col;
        if d < depth[idx] - DEPTH_TIE {
            depth[idx] = d;
            owner[idx] = i as u32;
        }
    }

    let c = cloud.channel_count();
    let mut image = ProjectedImage::blank(*intrinsics, c);
    for (idx, &o) in owner.iter().enumerate() {
        if o != u32::MAX {
            image.coverage[idx] = true;
            image.pixels[idx * c..(idx + 1) * c].copy_from_slice(cloud.color(o as usize));
        }
    }
    Ok(image)
}

/// Re-renders the scene behind a benign view under an additional motion.
/// With an identity motion this is the benign image itself.
pub fn relative_project(
    frame: &SceneFrame,
    motion: &MotionParams,
    intrinsics: &CameraIntrinsics,
) -> Result<ProjectedImage> {
    render(frame, motion, intrinsics)
}

/// Decoded image tensor file.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pub height: u32,
    pub width: u32,
    pub channels: usize,
    pub data: Vec<f32>,
}

/// `CMSIMG01`, `u32 H`, `u32 W`, then `H*W*C` little-endian f32 values.
pub fn encode_tensor(image: &ProjectedImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + image.pixels.len() * 4);
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&image.intrinsics.height.to_le_bytes());
    out.extend_from_slice(&image.intrinsics.width.to_le_bytes());
    for v in &image.pixels {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Inverse of [`encode_tensor`]; the channel count follows from the payload size.
pub fn decode_tensor(bytes: &[u8]) -> Result<ImageTensor> {
    if bytes.len() < 16 || &bytes[..8] != TENSOR_MAGIC {
        return Err(Error::Format("missing CMSIMG01 header".into()));
    }
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let width = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let payload = &bytes[16..];
    let pixels = height as usize * width as usize;
    if pixels == 0 || !payload.len().is_multiple_of(4 * pixels) || payload.is_empty() {
        return Err(Error::Format(format!(
            "payload of {} bytes does not hold a {height}x{width}xC f32 tensor",
            payload.len()
        )));
    }
    let data = payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    Ok(ImageTensor { height, width, channels: payload.len() / (4 * pixels), data })
}

/// 8-bit PNG for inspection: RGB for three channels, gray for one.
pub fn write_png(image: &ProjectedImage, out: impl Write) -> Result<()> {
    let color = match image.channel_count {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => return Err(Error::Format(format!("PNG export supports 1 or 3 channels, not {c}"))),
    };
    let mut encoder = png::Encoder::new(out, image.intrinsics.width, image.intrinsics.height);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let data: Vec<u8> = image.pixels.iter().map(|&v| quantize(v.clamp(0.0, 1.0))).collect();
    encoder.write_header().and_then(|mut w| w.write_image_data(&data)).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point3, Vec3};
    use crate::motion::axis_motion;
    use crate::motion::MotionAxis;
    use proptest::prelude::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 80.0, 45.0, 160, 90).unwrap()
    }

    fn frame(points: &[[f64; 3]], colors: &[[f32; 3]]) -> SceneFrame {
        let cloud = ColoredPointCloud::new(
            points.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect(),
            colors.iter().flatten().copied().collect(),
            3,
        )
        .unwrap();
        SceneFrame::new(Arc::new(cloud), MotionParams::identity())
    }

    #[test]
    fn single_point_single_pixel() {
        let f = frame(&[[0.0, 0.0, 2.0]], &[[1.0, 0.0, 0.0]]);
        let img = render(&f, &MotionParams::identity(), &k()).unwrap();
        assert_eq!(img.covered_count(), 1);
        assert!(img.is_covered(45, 80));
        assert_eq!(img.pixel(45, 80), &[1.0, 0.0, 0.0]);
        assert_eq!(img.pixel(0, 0), &[HOLE_VALUE; 3]);
    }

    #[test]
    fn nearest_point_wins() {
        let f = frame(&[[0.0, 0.0, 2.0], [0.0, 0.0, 1.0]], &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let img = render(&f, &MotionParams::identity(), &k()).unwrap();
        assert_eq!(img.pixel(45, 80), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn exact_ties_go_to_lowest_index() {
        let f = frame(
            &[[0.0, 0.0, 2.0], [0.0, 0.0, 2.0], [0.0, 0.0, 2.0 - 1e-13]],
            &[[0.2, 0.0, 0.0], [0.4, 0.0, 0.0], [0.6, 0.0, 0.0]],
        );
        let img = render(&f, &MotionParams::identity(), &k()).unwrap();
        assert_eq!(img.pixel(45, 80)[0], 0.2);
    }

    #[test]
    fn empty_cloud_rejected() {
        let f = SceneFrame::new(Arc::new(ColoredPointCloud::empty(3)), MotionParams::identity());
        assert!(matches!(render(&f, &MotionParams::identity(), &k()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn out_of_grid_and_behind_points_dropped() {
        let f = frame(&[[0.0, 0.0, -1.0], [10.0, 0.0, 1.0], [-0.81, 0.0, 1.0], [0.0, 0.0, 0.0]], &[[1.0; 3]; 4]);
        let img = render(&f, &MotionParams::identity(), &k()).unwrap();
        assert_eq!(img.covered_count(), 0);
    }

    #[test]
    fn identity_relative_projection_is_benign_view() {
        let f = frame(&[[0.1, 0.2, 2.0], [-0.3, 0.1, 3.0]], &[[1.0, 0.5, 0.0], [0.0, 0.5, 1.0]]);
        let benign = render(&f, &MotionParams::identity(), &k()).unwrap();
        assert_eq!(relative_project(&f, &MotionParams::identity(), &k()).unwrap(), benign);
    }

    #[test]
    fn depth_axis_motion_keeps_optical_axis_pixel() {
        let f = frame(&[[0.0, 0.0, 2.0]], &[[1.0, 0.0, 0.0]]);
        let m = axis_motion(MotionAxis::Tz, 0.05).unwrap();
        let img = relative_project(&f, &m, &k()).unwrap();
        assert!(img.is_covered(45, 80));
        let d = crate::geometry::depth(&f.cloud.positions()[0], &m);
        assert!((d - 1.95).abs() < 1e-15);
    }

    #[test]
    fn moved_and_reexpressed_frames_agree() {
        let f = frame(
            &[[0.1, 0.2, 2.0], [-0.3, 0.1, 3.0], [0.05, -0.1, 1.5]],
            &[[1.0, 0.5, 0.0], [0.0, 0.5, 1.0], [0.3, 0.3, 0.3]],
        );
        let a1 = MotionParams::new(Vec3::new(0.01, -0.02, 0.03), Vec3::new(0.05, 0.0, -0.1)).unwrap();
        let a2 = axis_motion(MotionAxis::Ry, 0.02).unwrap();
        let composed = render(&f.moved(&a1), &a2, &k()).unwrap();
        let two_step = render(&f.reexpressed(&a1).unwrap(), &a2, &k()).unwrap();
        assert_eq!(composed, two_step);
    }

    #[test]
    fn tensor_roundtrip_and_header() {
        let f = frame(&[[0.0, 0.0, 2.0]], &[[1.0, 0.25, 0.0]]);
        let img = render(&f, &MotionParams::identity(), &k()).unwrap();
        let bytes = encode_tensor(&img);
        assert_eq!(&bytes[..8], b"CMSIMG01");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 90);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 160);
        assert_eq!(bytes.len(), 16 + 90 * 160 * 3 * 4);
        let t = decode_tensor(&bytes).unwrap();
        assert_eq!((t.height, t.width, t.channels), (90, 160, 3));
        assert_eq!(t.data, img.pixels());
        assert!(decode_tensor(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_tensor(b"CMSIMG00").is_err());
    }

    #[test]
    fn png_export() {
        let f = frame(&[[0.0, 0.0, 2.0]], &[[1.0, 0.25, 0.0]]);
        let img = render(&f, &MotionParams::identity(), &k()).unwrap();
        let mut buf = Vec::new();
        write_png(&img, &mut buf).unwrap();
        assert_eq!(&buf[1..4], b"PNG");
    }

    proptest! {
        #[test]
        fn adding_a_point_never_uncovers(
            pts in prop::collection::vec(prop::array::uniform3(-1.0..1.0f64), 1..60),
            extra in prop::array::uniform3(-1.0..1.0f64),
        ) {
            let shift = |p: [f64; 3]| [p[0], p[1], p[2] + 2.0];
            let base: Vec<[f64; 3]> = pts.iter().copied().map(shift).collect();
            let mut more = base.clone();
            more.push(shift(extra));
            let a = render(&frame(&base, &vec![[0.5; 3]; base.len()]), &MotionParams::identity(), &k()).unwrap();
            let b = render(&frame(&more, &vec![[0.5; 3]; more.len()]), &MotionParams::identity(), &k()).unwrap();
            for (ca, cb) in a.coverage().iter().zip(b.coverage()) {
                prop_assert!(!*ca || *cb);
            }
        }
    }
}
