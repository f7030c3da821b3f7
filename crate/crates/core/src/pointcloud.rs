//! Colored point clouds, PLY I/O and the two-stage downsampling used to
//! speed up smoothing.

use std::collections::BTreeMap;
use std::io::Write;

use crate::geometry::Point3;
use crate::motion::MotionAxis;
use crate::{Error, Result};

/// Points with per-point colors in `[0, 1]`, `channel_count` values each.
#[derive(Debug, Clone, PartialEq)]
pub struct ColoredPointCloud {
    positions: Vec<Point3>,
    colors: Vec<f32>,
    channel_count: usize,
}

impl ColoredPointCloud {
    pub fn new(positions: Vec<Point3>, colors: Vec<f32>, channel_count: usize) -> Result<Self> {
        if channel_count == 0 {
            return Err(Error::invalid("a cloud needs at least one color channel"));
        }
        if colors.len() != positions.len() * channel_count {
            return Err(Error::invalid(format!(
                "{} positions need {} color values, got {}",
                positions.len(),
                positions.len() * channel_count,
                colors.len()
            )));
        }
        if let Some(i) = positions.iter().position(|p| !p.coords.iter().all(|v| v.is_finite())) {
            return Err(Error::invalid(format!("position {i} is not finite")));
        }
        if let Some(i) = colors.iter().position(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid(format!(
                "color value {} of point {} outside [0, 1]",
                colors[i],
                i / channel_count
            )));
        }
        Ok(Self { positions, colors, channel_count })
    }

    pub fn empty(channel_count: usize) -> Self {
        Self { positions: Vec::new(), colors: Vec::new(), channel_count }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn channel_count(&self) -> usize {
        self.channel_count
    }

    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    pub fn colors(&self) -> &[f32] {
        &self.colors
    }

    pub fn color(&self, i: usize) -> &[f32] {
        &self.colors[i * self.channel_count..(i + 1) * self.channel_count]
    }

    /// Appends all points of `other`; channel counts must agree.
    pub fn extend(&mut self, other: &ColoredPointCloud) -> Result<()> {
        if other.channel_count != self.channel_count {
            return Err(Error::invalid("channel counts differ"));
        }
        self.positions.extend_from_slice(&other.positions);
        self.colors.extend_from_slice(&other.colors);
        Ok(())
    }

    /// Same colors, positions mapped through `f`.
    pub fn map_positions(&self, f: impl Fn(&Point3) -> Point3) -> Result<Self> {
        let positions = self.positions.iter().map(f).collect();
        Self::new(positions, self.colors.clone(), self.channel_count)
    }

    /// Axis-aligned bounding box, `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let first = *self.positions.first()?;
        Some(self.positions.iter().fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.is_empty() {
            return None;
        }
        let sum = self.positions.iter().fold(nalgebra::Vector3::zeros(), |acc, p| acc + p.coords);
        Some(Point3::from(sum / self.len() as f64))
    }

    fn select(&self, indices: impl Iterator<Item = usize>) -> Self {
        let mut positions = Vec::new();
        let mut colors = Vec::new();
        for i in indices {
            positions.push(self.positions[i]);
            colors.extend_from_slice(self.color(i));
        }
        Self { positions, colors, channel_count: self.channel_count }
    }
}

/// Keeps points `0, k, 2k, ...` in their original order.
pub fn uniform_downsample(cloud: &ColoredPointCloud, k: usize) -> Result<ColoredPointCloud> {
    if k == 0 {
        return Err(Error::invalid("uniform downsampling factor must be >= 1"));
    }
    Ok(cloud.select((0..cloud.len()).step_by(k)))
}

/// Integer voxel coordinates of `p`, ordered `(z, y, x)`.
pub fn voxel_key(p: &Point3, voxel_size: f64) -> (i64, i64, i64) {
    ((p.z / voxel_size).floor() as i64, (p.y / voxel_size).floor() as i64, (p.x / voxel_size).floor() as i64)
}

struct VoxelAccum {
    sum: [f64; 3],
    lo: Point3,
    hi: Point3,
    colors: Vec<f64>,
    count: usize,
}

/// One point per occupied voxel: the centroid of its points with their mean
/// color. Output is ordered by voxel key, z-major, then y, then x.
pub fn voxel_downsample(cloud: &ColoredPointCloud, voxel_size: f64) -> Result<ColoredPointCloud> {
    if !(voxel_size.is_finite() && voxel_size > 0.0) {
        return Err(Error::invalid(format!("voxel size must be > 0, got {voxel_size}")));
    }
    let c = cloud.channel_count;
    let mut voxels: BTreeMap<(i64, i64, i64), VoxelAccum> = BTreeMap::new();
    for (i, p) in cloud.positions.iter().enumerate() {
        let acc = voxels.entry(voxel_key(p, voxel_size)).or_insert_with(|| VoxelAccum {
            sum: [0.0; 3],
            lo: *p,
            hi: *p,
            colors: vec![0.0; c],
            count: 0,
        });
        acc.sum[0] += p.x;
        acc.sum[1] += p.y;
        acc.sum[2] += p.z;
        acc.lo = acc.lo.inf(p);
        acc.hi = acc.hi.sup(p);
        for (dst, src) in acc.colors.iter_mut().zip(cloud.color(i)) {
            *dst += *src as f64;
        }
        acc.count += 1;
    }
    let mut positions = Vec::with_capacity(voxels.len());
    let mut colors = Vec::with_capacity(voxels.len() * c);
    for acc in voxels.values() {
        let n = acc.count as f64;
        // Rounding in the mean must not leave the voxel's own extent.
        let centroid = Point3::new(acc.sum[0] / n, acc.sum[1] / n, acc.sum[2] / n);
        positions.push(centroid.sup(&acc.lo).inf(&acc.hi));
        colors.extend(acc.colors.iter().map(|s| ((s / n) as f32).clamp(0.0, 1.0)));
    }
    Ok(ColoredPointCloud { positions, colors, channel_count: c })
}

/// Parameters of the uniform-then-voxel downsampling pass.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DownsampleConfig {
    pub uniform_every: usize,
    pub voxel_size_m: f64,
}

impl DownsampleConfig {
    /// Reference per-axis settings for dense clouds.
    pub fn for_axis(axis: MotionAxis) -> Self {
        let (uniform_every, voxel_size_m) = match axis {
            MotionAxis::Tz => (7, 0.0133),
            MotionAxis::Tx => (6, 0.01365),
            MotionAxis::Ty => (7, 0.0137),
            MotionAxis::Rz => (7, 0.0135),
            MotionAxis::Rx => (6, 0.01355),
            MotionAxis::Ry => (7, 0.0134),
        };
        Self { uniform_every, voxel_size_m }
    }

    pub fn apply(&self, cloud: &ColoredPointCloud) -> Result<ColoredPointCloud> {
        voxel_downsample(&uniform_downsample(cloud, self.uniform_every)?, self.voxel_size_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Format {
    Ascii,
    BinaryLittleEndian,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    /// Byte offset of the first data byte.
    data_start: usize,
    /// 1-based line number of the first data line.
    data_line: usize,
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        line_no += 1;
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| parse_error(line_no, "header is not terminated by end_header"))?;
        let raw = &bytes[pos..pos + end];
        pos += end + 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| parse_error(line_no, "header line is not valid UTF-8"))?
            .trim_end_matches('\r')
            .trim();
        let mut words = line.split_whitespace();
        let keyword = words.next().unwrap_or("");
        if line_no == 1 {
            if line != "ply" {
                return Err(parse_error(1, "missing 'ply' magic"));
            }
            continue;
        }
        match keyword {
            "format" => {
                format = Some(match (words.next(), words.next()) {
                    (Some("ascii"), Some("1.0")) => Format::Ascii,
                    (Some("binary_little_endian"), Some("1.0")) => Format::BinaryLittleEndian,
                    (Some(other), _) => return Err(parse_error(line_no, format!("unsupported format {other:?}"))),
                    _ => return Err(parse_error(line_no, "malformed format line")),
                });
            }
            "comment" | "obj_info" | "" => {}
            "element" => {
                let name = words.next().ok_or_else(|| parse_error(line_no, "element without name"))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| parse_error(line_no, "element count is not a non-negative integer"))?;
                elements.push(Element { name: name.to_string(), count, properties: Vec::new() });
            }
            "property" => {
                let element = elements.last_mut().ok_or_else(|| parse_error(line_no, "property before any element"))?;
                let ty = words.next().ok_or_else(|| parse_error(line_no, "property without type"))?;
                let prop = if ty == "list" {
                    let count = words.next().and_then(Scalar::parse);
                    let item = words.next().and_then(Scalar::parse);
                    match (count, item, words.next()) {
                        (Some(count), Some(item), Some(_)) => Property::List { count, item },
                        _ => return Err(parse_error(line_no, "malformed list property")),
                    }
                } else {
                    let ty = Scalar::parse(ty)
                        .ok_or_else(|| parse_error(line_no, format!("unknown property type {ty:?}")))?;
                    let name = words.next().ok_or_else(|| parse_error(line_no, "property without name"))?;
                    Property::Scalar { name: name.to_string(), ty }
                };
                element.properties.push(prop);
            }
            "end_header" => break,
            other => return Err(parse_error(line_no, format!("unexpected header keyword {other:?}"))),
        }
    }
    let format = format.ok_or_else(|| parse_error(line_no, "missing format line"))?;
    Ok(Header { format, elements, data_start: pos, data_line: line_no + 1 })
}

/// Indices of x, y, z, red, green, blue within the vertex properties.
fn vertex_layout(element: &Element) -> Result<[(usize, Scalar); 6]> {
    let find = |wanted: &str| {
        element
            .properties
            .iter()
            .enumerate()
            .find_map(|(i, p)| match p {
                Property::Scalar { name, ty } if name == wanted => Some((i, *ty)),
                _ => None,
            })
            .ok_or_else(|| Error::Schema(format!("vertex element has no '{wanted}' property")))
    };
    Ok([find("x")?, find("y")?, find("z")?, find("red")?, find("green")?, find("blue")?])
}

fn color_value(v: f64, ty: Scalar) -> Result<f32> {
    let c = match ty {
        Scalar::U8 => v / 255.0,
        t if t.is_float() => v,
        _ => return Err(Error::Schema("color properties must be uchar or float".into())),
    };
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::Schema(format!("color value {v} out of range")));
    }
    Ok(c as f32)
}

/// Reads an ASCII or binary-little-endian PLY with `x y z red green blue`
/// vertex properties. Other elements and properties are skipped.
pub fn parse_ply(bytes: &[u8]) -> Result<ColoredPointCloud> {
    let header = parse_header(bytes)?;
    let vertex_idx = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::Schema("no vertex element".into()))?;
    let layout = vertex_layout(&header.elements[vertex_idx])?;
    let n = header.elements[vertex_idx].count;
    let mut positions = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n * 3);
    let mut emit = |values: &[f64]| -> Result<()> {
        let p = Point3::new(values[layout[0].0], values[layout[1].0], values[layout[2].0]);
        if !p.coords.iter().all(|v| v.is_finite()) {
            return Err(Error::Schema("non-finite vertex position".into()));
        }
        positions.push(p);
        for &(i, ty) in &layout[3..] {
            colors.push(color_value(values[i], ty)?);
        }
        Ok(())
    };

    let data = &bytes[header.data_start..];
    match header.format {
        Format::Ascii => {
            let text = std::str::from_utf8(data)
                .map_err(|_| parse_error(header.data_line, "ASCII body is not valid UTF-8"))?;
            let mut lines =
                text.lines().enumerate().map(|(i, l)| (header.data_line + i, l)).filter(|(_, l)| !l.trim().is_empty());
            for (ei, element) in header.elements.iter().enumerate().take(vertex_idx + 1) {
                for row in 0..element.count {
                    let (line_no, line) = lines.next().ok_or_else(|| {
                        Error::Truncated(format!(
                            "element '{}' declares {} rows, found {}",
                            element.name, element.count, row
                        ))
                    })?;
                    let tokens: Vec<&str> = line.split_whitespace().collect();
                    let values = ascii_row(element, &tokens, line_no)?;
                    if ei == vertex_idx {
                        emit(&values)?;
                    }
                }
            }
        }
        Format::BinaryLittleEndian => {
            let mut cursor = 0usize;
            for (ei, element) in header.elements.iter().enumerate().take(vertex_idx + 1) {
                let mut values = Vec::with_capacity(element.properties.len());
                for row in 0..element.count {
                    values.clear();
                    let truncated = || {
                        Error::Truncated(format!(
                            "element '{}' declares {} rows, data ends in row {}",
                            element.name, element.count, row
                        ))
                    };
                    for prop in &element.properties {
                        match prop {
                            Property::Scalar { ty, .. } => {
                                let b = data.get(cursor..cursor + ty.size()).ok_or_else(truncated)?;
                                values.push(ty.read_le(b));
                                cursor += ty.size();
                            }
                            Property::List { count, item } => {
                                let b = data.get(cursor..cursor + count.size()).ok_or_else(truncated)?;
                                let len = count.read_le(b) as usize;
                                cursor += count.size() + len * item.size();
                                if cursor > data.len() {
                                    return Err(truncated());
                                }
                                values.push(f64::NAN);
                            }
                        }
                    }
                    if ei == vertex_idx {
                        emit(&values)?;
                    }
                }
            }
        }
    }
    ColoredPointCloud::new(positions, colors, 3)
}

fn ascii_row(element: &Element, tokens: &[&str], line_no: usize) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(element.properties.len());
    let mut t = 0;
    let next = |t: &mut usize| -> Result<f64> {
        let tok = tokens
            .get(*t)
            .ok_or_else(|| parse_error(line_no, format!("expected {} values", element.properties.len())))?;
        *t += 1;
        tok.parse::<f64>().map_err(|_| parse_error(line_no, format!("invalid number {tok:?}")))
    };
    for prop in &element.properties {
        match prop {
            Property::Scalar { .. } => values.push(next(&mut t)?),
            Property::List { .. } => {
                let len = next(&mut t)? as usize;
                for _ in 0..len {
                    next(&mut t)?;
                }
                values.push(f64::NAN);
            }
        }
    }
    Ok(values)
}

/// Binary little-endian PLY with float positions and uchar colors,
/// quantized as `floor(c * 255 + 0.5)`. Only three-channel clouds map onto
/// the RGB properties.
pub fn write_ply(cloud: &ColoredPointCloud) -> Result<Vec<u8>> {
    if cloud.channel_count != 3 {
        return Err(Error::invalid(format!("PLY export needs 3 color channels, cloud has {}", cloud.channel_count)));
    }
    let mut out = Vec::with_capacity(200 + cloud.len() * 15);
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    )?;
    for (i, p) in cloud.positions.iter().enumerate() {
        for v in [p.x, p.y, p.z] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        for &c in cloud.color(i) {
            out.push(quantize(c));
        }
    }
    Ok(out)
}

/// Round-half-up 8-bit quantization of a `[0, 1]` value.
pub fn quantize(c: f32) -> u8 {
    (c * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}
