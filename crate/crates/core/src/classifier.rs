//! Base classifiers over rendered images.
//!
//! [`CentroidModel`] is the built-in nearest-centroid model on block-pooled
//! colors. [`ExternalClassifier`] drives any program speaking the
//! request/response protocol below over its standard streams:
//!
//! * request: `CMSCLS01`, `u32 H`, `u32 W`, `u32 C`, then `H*W*C` f32 values
//! * response: `u32 class_count`, then `class_count` f32 probabilities
//!
//! All integers and floats are little-endian. [`serve`] implements the child
//! side for any [`Classifier`].

use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::geometry::CameraIntrinsics;
use crate::renderer::{ProjectedImage, HOLE_VALUE};
use crate::{Error, Result};

pub const REQUEST_MAGIC: &[u8; 8] = b"CMSCLS01";

/// Tolerance on the probability sum reported by external classifiers.
const EXTERNAL_SUM_TOLERANCE: f64 = 1e-4;

/// Per-class probabilities summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LabelDistribution {
    probs: Vec<f64>,
}

impl LabelDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("label distribution needs at least one class"));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("probabilities must lie in [0, 1]"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    /// All mass on `class`.
    pub fn one_hot(class: usize, class_count: usize) -> Self {
        let mut probs = vec![0.0; class_count];
        probs[class] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

impl TryFrom<Vec<f64>> for LabelDistribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<LabelDistribution> for Vec<f64> {
    fn from(d: LabelDistribution) -> Self {
        d.probs
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probs: LabelDistribution,
}

impl Prediction {
    pub fn from_probs(probs: LabelDistribution) -> Self {
        Self { class: probs.argmax(), probs }
    }
}

/// A base classifier. Implementations must be deterministic.
pub trait Classifier: Send + Sync {
    fn class_count(&self) -> usize;

    fn predict(&self, image: &ProjectedImage) -> Result<Prediction>;
}

impl<T: Classifier + ?Sized> Classifier for &T {
    fn class_count(&self) -> usize {
        (**self).class_count()
    }

    fn predict(&self, image: &ProjectedImage) -> Result<Prediction> {
        (**self).predict(image)
    }
}

impl<T: Classifier + ?Sized> Classifier for Box<T> {
    fn class_count(&self) -> usize {
        (**self).class_count()
    }

    fn predict(&self, image: &ProjectedImage) -> Result<Prediction> {
        (**self).predict(image)
    }
}

/// Block pooling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Side length of the square pooling blocks, in pixels. Edge blocks may
    /// be smaller.
    pub block: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self { block: 10 }
    }
}

/// Mean of each channel over the covered pixels of every block, blocks in
/// row-major order. Blocks without covered pixels yield zeros.
pub fn featurize(image: &ProjectedImage, spec: &FeatureSpec) -> Vec<f64> {
    let (h, w, c) = (image.height(), image.width(), image.channel_count());
    let f = spec.block.max(1);
    let (bh, bw) = (h.div_ceil(f), w.div_ceil(f));
    let mut sums = vec![0.0f64; bh * bw * c];
    let mut counts = vec![0u32; bh * bw];
    let (pixels, coverage) = (image.pixels(), image.coverage());
    for row in 0..h {
        let brow = (row / f) * bw;
        for col in 0..w {
            let idx = row * w + col;
            if !coverage[idx] {
                continue;
            }
            let b = brow + col / f;
            counts[b] += 1;
            for (s, &v) in sums[b * c..(b + 1) * c].iter_mut().zip(&pixels[idx * c..(idx + 1) * c]) {
                *s += v as f64;
            }
        }
    }
    for (b, &n) in counts.iter().enumerate() {
        if n > 0 {
            for s in &mut sums[b * c..(b + 1) * c] {
                *s /= n as f64;
            }
        }
    }
    sums
}

/// Nearest-centroid model with a softmax over negative squared distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidModel {
    pub feature_spec: FeatureSpec,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub temperature: f64,
    pub centroids: Vec<Vec<f64>>,
}

impl CentroidModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.centroids.is_empty() {
            return Err(Error::invalid("model has no classes"));
        }
        let dim = self.height.div_ceil(self.feature_spec.block.max(1))
            * self.width.div_ceil(self.feature_spec.block.max(1))
            * self.channels;
        for (i, c) in self.centroids.iter().enumerate() {
            if c.len() != dim || c.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("centroid {i} is not a finite {dim}-vector")));
            }
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let model: Self = serde_json::from_reader(BufReader::new(std::fs::File::open(path)?))?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut out, self)?;
        out.flush()?;
        Ok(())
    }

    pub fn squared_distances(&self, features: &[f64]) -> Vec<f64> {
        self.centroids.iter().map(|c| c.iter().zip(features).map(|(a, b)| (a - b) * (a - b)).sum()).collect()
    }
}

impl Classifier for CentroidModel {
    fn class_count(&self) -> usize {
        self.centroids.len()
    }

    fn predict(&self, image: &ProjectedImage) -> Result<Prediction> {
        if (image.height(), image.width(), image.channel_count()) != (self.height, self.width, self.channels) {
            return Err(Error::invalid(format!(
                "model expects {}x{}x{} images, got {}x{}x{}",
                self.height,
                self.width,
                self.channels,
                image.height(),
                image.width(),
                image.channel_count()
            )));
        }
        let d2 = self.squared_distances(&featurize(image, &self.feature_spec));
        // Shift by the smallest distance so the largest exponent is 0.
        let min = d2.iter().copied().fold(f64::INFINITY, f64::min);
        let weights: Vec<f64> = d2.iter().map(|d| (-(d - min) / self.temperature).exp()).collect();
        let total: f64 = weights.iter().sum();
        let probs = LabelDistribution { probs: weights.iter().map(|w| w / total).collect() };
        Ok(Prediction::from_probs(probs))
    }
}

/// Mean feature per class. Every class in `0..class_count` needs an example.
pub fn train_centroid<'a>(
    examples: impl IntoIterator<Item = (&'a ProjectedImage, usize)>,
    class_count: usize,
    feature_spec: FeatureSpec,
    temperature: f64,
) -> Result<CentroidModel> {
    let mut sums: Vec<Vec<f64>> = vec![Vec::new(); class_count];
    let mut counts = vec![0usize; class_count];
    let mut dims: Option<(usize, usize, usize)> = None;
    for (image, label) in examples {
        if label >= class_count {
            return Err(Error::Training(format!("label {label} outside 0..{class_count}")));
        }
        let d = (image.height(), image.width(), image.channel_count());
        if *dims.get_or_insert(d) != d {
            return Err(Error::Training("training images differ in size".into()));
        }
        let f = featurize(image, &feature_spec);
        if sums[label].is_empty() {
            sums[label] = vec![0.0; f.len()];
        }
        for (s, v) in sums[label].iter_mut().zip(&f) {
            *s += v;
        }
        counts[label] += 1;
    }
    if let Some(missing) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Training(format!("class {missing} has no training examples")));
    }
    let (height, width, channels) = dims.ok_or_else(|| Error::Training("no training examples".into()))?;
    let centroids =
        sums.into_iter().zip(&counts).map(|(s, &n)| s.into_iter().map(|v| v / n as f64).collect()).collect();
    let model = CentroidModel { feature_spec, height, width, channels, temperature, centroids };
    model.validate()?;
    Ok(model)
}

struct Connection {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl Drop for Connection {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Black-box classifier running as child processes. Each concurrent caller
/// gets its own process; idle processes are reused.
pub struct ExternalClassifier {
    program: String,
    args: Vec<String>,
    class_count: usize,
    idle: Mutex<Vec<Connection>>,
}

impl ExternalClassifier {
    /// `command[0]` is the program, the rest its arguments. Responses must
    /// report `class_count` classes.
    pub fn new(command: &[String], class_count: usize) -> Result<Self> {
        let (program, args) =
            command.split_first().ok_or_else(|| Error::invalid("external classifier command is empty"))?;
        if class_count == 0 {
            return Err(Error::invalid("class count must be positive"));
        }
        let classifier =
            Self { program: program.clone(), args: args.to_vec(), class_count, idle: Mutex::new(Vec::new()) };
        // Fail early if the program cannot start.
        let conn = classifier.spawn()?;
        classifier.idle.lock().unwrap().push(conn);
        Ok(classifier)
    }

    fn spawn(&self) -> Result<Connection> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::ClassifierIo(format!("cannot start '{}': {e}", self.program)))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Connection { child, stdin, stdout })
    }

    fn exchange(&self, conn: &mut Connection, image: &ProjectedImage) -> Result<LabelDistribution> {
        let io = |e: std::io::Error| {
            if e.kind() == ErrorKind::UnexpectedEof {
                Error::ClassifierIo("classifier process exited mid-response".into())
            } else {
                Error::ClassifierIo(e.to_string())
            }
        };
        write_request(&mut conn.stdin, image).map_err(io)?;
        conn.stdin.flush().map_err(io)?;
        let count = read_u32(&mut conn.stdout).map_err(io)? as usize;
        if count != self.class_count {
            return Err(Error::ClassifierIo(format!(
                "classifier reported {count} classes, expected {}",
                self.class_count
            )));
        }
        let mut raw = vec![0u8; 4 * count];
        conn.stdout.read_exact(&mut raw).map_err(io)?;
        let probs: Vec<f64> = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect();
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::ClassifierIo("classifier returned a negative or non-finite probability".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > EXTERNAL_SUM_TOLERANCE {
            return Err(Error::ClassifierIo(format!("classifier probabilities sum to {sum}")));
        }
        Ok(LabelDistribution { probs: probs.iter().map(|p| (p / sum).min(1.0)).collect() })
    }
}

impl Classifier for ExternalClassifier {
    fn class_count(&self) -> usize {
        self.class_count
    }

    fn predict(&self, image: &ProjectedImage) -> Result<Prediction> {
        let idle = self.idle.lock().unwrap().pop();
        let mut conn = match idle {
            Some(c) => c,
            None => self.spawn()?,
        };
        // A failed exchange leaves the stream in an unknown state, so the
        // connection is dropped rather than returned to the pool.
        let probs = self.exchange(&mut conn, image)?;
        self.idle.lock().unwrap().push(conn);
        Ok(Prediction::from_probs(probs))
    }
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_request(w: &mut impl Write, image: &ProjectedImage) -> std::io::Result<()> {
    w.write_all(REQUEST_MAGIC)?;
    for v in [image.height(), image.width(), image.channel_count()] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(image.pixels().len() * 4);
    for v in image.pixels() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

/// Reads one request. `None` on a clean end of stream before a new request.
/// Pixels whose channels all equal the hole value are treated as uncovered,
/// since the wire format carries no coverage mask.
pub fn read_request(r: &mut impl Read) -> Result<Option<ProjectedImage>> {
    let mut magic = [0u8; 8];
    let mut filled = 0;
    while filled < magic.len() {
        match r.read(&mut magic[filled..])? {
            0 if filled == 0 => return Ok(None),
            0 => return Err(Error::ClassifierIo("request truncated".into())),
            n => filled += n,
        }
    }
    if &magic != REQUEST_MAGIC {
        return Err(Error::ClassifierIo("bad request magic".into()));
    }
    let h = read_u32(r)?;
    let w = read_u32(r)?;
    let c = read_u32(r)? as usize;
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::ClassifierIo(format!("bad request shape {h}x{w}x{c}")));
    }
    let mut raw = vec![0u8; h as usize * w as usize * c * 4];
    r.read_exact(&mut raw)?;
    let pixels: Vec<f32> = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    let coverage = pixels.chunks_exact(c).map(|px| px.iter().any(|&v| v != HOLE_VALUE)).collect();
    let k = CameraIntrinsics { fx: 1.0, fy: 1.0, cx: 0.0, cy: 0.0, width: w, height: h };
    Ok(Some(ProjectedImage::with_coverage(k, c, pixels, coverage)?))
}

pub fn write_response(w: &mut impl Write, probs: &LabelDistribution) -> std::io::Result<()> {
    w.write_all(&(probs.len() as u32).to_le_bytes())?;
    for &p in probs.probs() {
        w.write_all(&(p as f32).to_le_bytes())?;
    }
    w.flush()
}

/// Answers requests from `input` with `classifier` until end of stream.
pub fn serve(classifier: &dyn Classifier, mut input: impl Read, mut output: impl Write) -> Result<()> {
    while let Some(image) = read_request(&mut input)? {
        let prediction = classifier.predict(&image)?;
        write_response(&mut output, &prediction.probs)?;
    }
    Ok(())
}
