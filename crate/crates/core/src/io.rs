//! Dataset ingestion and output writers.
//!
//! Dataset layout:
//!
//! ```text
//! root/cameras.txt                 calibration, one block per camera
//! root/frames/<t>/<cam>.png        RGB frames, t = 0, 1, ...
//! root/matches/<t>.txt             optional sparse matches per frame
//! root/flow/<cam>_<t>.flo-txt      optional flow per camera and frame
//! root/gt/depth_<cam>_<t>.png16    optional ground-truth depth
//! root/gt/mask_<cam>_<t>.png       optional ground-truth masks
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage as Gray8, ImageBuffer, ImageFormat, ImageReader, Luma, RgbImage};
use nalgebra::{Matrix3, Vector2, Vector3};

use crate::coarse::{Region, RegionMask};
use crate::energy::EnergyParams;
use crate::error::{Error, Result};
use crate::geometry::CameraView;
use crate::raster::{ColorImage, DepthMap, Mask, Raster};
use crate::sparse::{FlowField, Observation, SparseCloud, SparsePoint};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => fs::create_dir_all(parent).map_err(|e| Error::io(parent, e)),
        _ => Ok(()),
    }
}

fn image_error(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

fn open_image(path: &Path) -> Result<image::DynamicImage> {
    ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| image_error(path, e))
}

/// Intrinsics and pose of one camera as stored in `cameras.txt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub id: usize,
    pub k: Matrix3<f64>,
    pub r: Matrix3<f64>,
    pub t: Vector3<f64>,
}

/// Parses calibration blocks: a camera id followed by K (3×3, row-major),
/// R (3×3, row-major) and t (3), all whitespace separated. `#` starts a
/// comment.
pub fn parse_calibration(text: &str, path: &Path) -> Result<Vec<Calibration>> {
    let mut tokens: Vec<(usize, &str)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        tokens.extend(line.split_whitespace().map(|t| (n + 1, t)));
    }
    if tokens.is_empty() {
        return Err(Error::parse(path, 1, "no camera blocks"));
    }
    if !tokens.len().is_multiple_of(22) {
        let line = tokens.last().map_or(1, |t| t.0);
        return Err(Error::parse(
            path,
            line,
            format!("{} values do not form 22-value camera blocks", tokens.len()),
        ));
    }
    let mut cams = Vec::new();
    for block in tokens.chunks(22) {
        let (line, id_tok) = block[0];
        let id: usize = id_tok
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad camera id `{id_tok}`")))?;
        let mut v = [0.0f64; 21];
        for (slot, &(line, tok)) in v.iter_mut().zip(&block[1..]) {
            *slot = tok
                .parse()
                .map_err(|_| Error::parse(path, line, format!("bad number `{tok}`")))?;
        }
        if cams.iter().any(|c: &Calibration| c.id == id) {
            return Err(Error::parse(path, line, format!("duplicate camera id {id}")));
        }
        cams.push(Calibration {
            id,
            k: Matrix3::from_row_slice(&v[0..9]),
            r: Matrix3::from_row_slice(&v[9..18]),
            t: Vector3::new(v[18], v[19], v[20]),
        });
    }
    cams.sort_by_key(|c| c.id);
    Ok(cams)
}

pub fn format_calibration(cams: &[CameraView]) -> String {
    let mut s = String::new();
    for c in cams {
        let _ = writeln!(s, "{}", c.id);
        for m in [c.k(), c.r()] {
            for row in 0..3 {
                let _ = writeln!(s, "{:?} {:?} {:?}", m[(row, 0)], m[(row, 1)], m[(row, 2)]);
            }
        }
        let _ = writeln!(s, "{:?} {:?} {:?}", c.t().x, c.t().y, c.t().z);
    }
    s
}

/// Validated description of a dataset directory.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub frame_count: usize,
    /// Camera ids in ascending order.
    pub camera_ids: Vec<usize>,
    /// `images[t][c]` for frame `t` and camera index `c`.
    pub images: Vec<Vec<PathBuf>>,
    /// Width and height per camera index.
    pub resolutions: Vec<(u32, u32)>,
    pub calibration: PathBuf,
    pub matches: Option<PathBuf>,
    pub flow: Option<PathBuf>,
    pub calibrations: Vec<Calibration>,
}

impl DatasetManifest {
    pub fn camera_count(&self) -> usize {
        self.camera_ids.len()
    }

    /// Calibrated cameras with image sizes taken from the frames.
    pub fn cameras(&self) -> Result<Vec<CameraView>> {
        self.calibrations
            .iter()
            .zip(&self.resolutions)
            .map(|(c, &(w, h))| CameraView::new(c.id, c.k, c.r, c.t, w as usize, h as usize))
            .collect()
    }

    pub fn matches_path(&self, frame: usize) -> Option<PathBuf> {
        self.matches.as_ref().map(|m| m.join(format!("{frame}.txt")))
    }

    pub fn flow_path(&self, camera_id: usize, frame: usize) -> Option<PathBuf> {
        self.flow
            .as_ref()
            .map(|f| f.join(format!("{camera_id}_{frame}.flo-txt")))
    }

    pub fn gt_dir(&self) -> PathBuf {
        self.root.join("gt")
    }

    /// RGB frames of all cameras at frame `t`.
    pub fn load_frame(&self, t: usize) -> Result<Vec<ColorImage>> {
        self.images[t].iter().map(|p| read_color_image(p)).collect()
    }

    /// Sparse matches of frame `t`, if the dataset has any.
    pub fn load_matches(&self, t: usize) -> Result<Option<SparseCloud>> {
        match self.matches_path(t) {
            Some(p) if p.exists() => read_matches(&p).map(Some),
            _ => Ok(None),
        }
    }

    /// Flow of every camera for frame `t`; missing files give `None`.
    pub fn load_flows(&self, t: usize) -> Result<Vec<Option<FlowField>>> {
        self.camera_ids
            .iter()
            .map(|&id| match self.flow_path(id, t) {
                Some(p) if p.exists() => read_flow(&p).map(Some),
                _ => Ok(None),
            })
            .collect()
    }
}

/// Reads and validates the dataset layout under `root` without writing.
pub fn load_dataset(root: &Path) -> Result<DatasetManifest> {
    let calibration = root.join("cameras.txt");
    if !calibration.is_file() {
        return Err(Error::CalibrationNotFound(calibration));
    }
    let calibrations = parse_calibration(&read_text(&calibration)?, &calibration)?;
    let camera_ids: Vec<usize> = calibrations.iter().map(|c| c.id).collect();

    let frames_dir = root.join("frames");
    let entries = fs::read_dir(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let mut frame_ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&frames_dir, e))?;
        if entry.path().is_dir() {
            let name = entry.file_name().to_string_lossy().into_owned();
            let t: usize = name
                .parse()
                .map_err(|_| Error::Dataset(format!("frame directory `{name}` is not a frame index")))?;
            frame_ids.push(t);
        }
    }
    frame_ids.sort_unstable();
    if frame_ids.is_empty() {
        return Err(Error::Dataset(format!("no frames under {}", frames_dir.display())));
    }
    if frame_ids.iter().enumerate().any(|(i, &t)| i != t) {
        return Err(Error::Dataset("frame indices are not contiguous from 0".into()));
    }

    let mut images = Vec::with_capacity(frame_ids.len());
    let mut resolutions: Vec<(u32, u32)> = Vec::new();
    for &t in &frame_ids {
        let mut row = Vec::with_capacity(camera_ids.len());
        for (ci, &cam) in camera_ids.iter().enumerate() {
            let path = frames_dir.join(t.to_string()).join(format!("{cam}.png"));
            if !path.is_file() {
                return Err(Error::Dataset(format!("missing frame image {}", path.display())));
            }
            let dims = ImageReader::open(&path)
                .map_err(|e| Error::io(&path, e))?
                .with_guessed_format()
                .map_err(|e| Error::io(&path, e))?
                .into_dimensions()
                .map_err(|e| image_error(&path, e))?;
            if t == 0 {
                resolutions.push(dims);
            } else if resolutions[ci] != dims {
                return Err(Error::ResolutionMismatch {
                    camera: cam,
                    frame: t,
                    expected: resolutions[ci],
                    found: dims,
                });
            }
            row.push(path);
        }
        images.push(row);
    }

    let matches = Some(root.join("matches")).filter(|p| p.is_dir());
    let flow = Some(root.join("flow")).filter(|p| p.is_dir());
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        frame_count: frame_ids.len(),
        camera_ids,
        images,
        resolutions,
        calibration,
        matches,
        flow,
        calibrations,
    })
}

/// Every tunable of the pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub energy: EnergyParams,
    /// Flood-fill hop distance; `None` uses twice the median nearest-neighbour
    /// distance of the cleaned cloud.
    pub cluster_dist: Option<f64>,
    pub cluster_min_size: usize,
    pub outlier_k: usize,
    pub outlier_stddev: f64,
    pub labels_inner: usize,
    pub labels_outer: usize,
    /// Outer band radius as a percentage of the mean outline-to-centroid distance.
    pub extrap_percent: f64,
    /// Outer depth tolerance as a percentage of the capture-volume diagonal.
    pub volume_percent_outer: f64,
    pub motion_threshold: f64,
    pub match_radius: f64,
    pub max_sweeps: usize,
    pub flow_block: usize,
    pub flow_search: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            energy: EnergyParams::default(),
            cluster_dist: None,
            cluster_min_size: 20,
            outlier_k: 8,
            outlier_stddev: 2.0,
            labels_inner: 5,
            labels_outer: 9,
            extrap_percent: 5.0,
            volume_percent_outer: 1.0,
            motion_threshold: 1.0,
            match_radius: 6.0,
            max_sweeps: 8,
            flow_block: 7,
            flow_search: 8,
            output_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.energy.validate()?;
        if let Some(d) = self.cluster_dist {
            if !(d > 0.0) {
                return Err(Error::config("cluster_dist", format!("must be positive, got {d}")));
            }
        }
        if self.outlier_k == 0 {
            return Err(Error::config("outlier_k", "must be at least 1"));
        }
        if !(self.outlier_stddev >= 0.0) {
            return Err(Error::config("outlier_stddev", "must be non-negative"));
        }
        if self.labels_inner < 2 {
            return Err(Error::config("labels_inner", "must be at least 2"));
        }
        if self.labels_inner >= self.labels_outer {
            return Err(Error::config(
                "labels_inner",
                format!(
                    "must be smaller than labels_outer ({} >= {})",
                    self.labels_inner, self.labels_outer
                ),
            ));
        }
        for (field, v) in [
            ("extrap_percent", self.extrap_percent),
            ("volume_percent_outer", self.volume_percent_outer),
            ("match_radius", self.match_radius),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        if !(self.motion_threshold >= 0.0) {
            return Err(Error::config("motion_threshold", "must be non-negative"));
        }
        if self.max_sweeps == 0 {
            return Err(Error::config("max_sweeps", "must be at least 1"));
        }
        if self.flow_block.is_multiple_of(2) {
            return Err(Error::config("flow_block", "must be odd"));
        }
        Ok(())
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

/// Parses flat `key = value` text; absent keys keep their defaults.
pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    let mut c = PipelineConfig::default();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(line, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        let e = &mut c.energy;
        match key {
            "lambda_data" => e.lambda_data = parse_value(key, value)?,
            "lambda_contrast" => e.lambda_contrast = parse_value(key, value)?,
            "lambda_smooth" => e.lambda_smooth = parse_value(key, value)?,
            "sigma_i" => e.sigma_i = parse_value(key, value)?,
            "epsilon" => e.epsilon = parse_value(key, value)?,
            "d_max_steps" => e.d_max_steps = parse_value(key, value)?,
            "m_unknown" => e.m_unknown = parse_value(key, value)?,
            "ncc_window" => e.ncc_window = parse_value(key, value)?,
            "k_views" => e.k_views = parse_value(key, value)?,
            "bilateral_sigma_spatial" => e.bilateral_sigma_spatial = parse_value(key, value)?,
            "bilateral_sigma_range" => e.bilateral_sigma_range = parse_value(key, value)?,
            "cluster_dist" => {
                c.cluster_dist = match value {
                    "auto" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "cluster_min_size" => c.cluster_min_size = parse_value(key, value)?,
            "outlier_k" => c.outlier_k = parse_value(key, value)?,
            "outlier_stddev" => c.outlier_stddev = parse_value(key, value)?,
            "labels_inner" => c.labels_inner = parse_value(key, value)?,
            "labels_outer" => c.labels_outer = parse_value(key, value)?,
            "extrap_percent" => c.extrap_percent = parse_value(key, value)?,
            "volume_percent_outer" => c.volume_percent_outer = parse_value(key, value)?,
            "motion_threshold" => c.motion_threshold = parse_value(key, value)?,
            "match_radius" => c.match_radius = parse_value(key, value)?,
            "max_sweeps" => c.max_sweeps = parse_value(key, value)?,
            "flow_block" => c.flow_block = parse_value(key, value)?,
            "flow_search" => c.flow_search = parse_value(key, value)?,
            "output_dir" => c.output_dir = Some(PathBuf::from(value)),
            other => return Err(Error::config(other, "unknown key")),
        }
    }
    c.validate()?;
    Ok(c)
}

pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    parse_config(&read_text(path)?)
}

/// Parses `X Y Z n (cam u v)×n` lines.
pub fn parse_matches(text: &str, path: &Path) -> Result<SparseCloud> {
    let mut points = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: String| Error::parse(path, n + 1, msg);
        if tok.len() < 4 {
            return Err(bad("expected `X Y Z n (cam u v)×n`".into()));
        }
        let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| bad(format!("bad number `{s}`"))) };
        let position = Vector3::new(num(tok[0])?, num(tok[1])?, num(tok[2])?);
        let count: usize = tok[3].parse().map_err(|_| bad(format!("bad count `{}`", tok[3])))?;
        if tok.len() != 4 + 3 * count {
            return Err(bad(format!(
                "expected {} observations, found {} values",
                count,
                tok.len() - 4
            )));
        }
        let mut observations = Vec::with_capacity(count);
        for o in tok[4..].chunks(3) {
            let camera: usize = o[0].parse().map_err(|_| bad(format!("bad camera id `{}`", o[0])))?;
            observations.push(Observation {
                camera,
                pixel: Vector2::new(num(o[1])?, num(o[2])?),
            });
        }
        points.push(SparsePoint { position, observations });
    }
    Ok(SparseCloud::new(points))
}

pub fn read_matches(path: &Path) -> Result<SparseCloud> {
    parse_matches(&read_text(path)?, path)
}

pub fn write_matches(cloud: &SparseCloud, path: &Path) -> Result<()> {
    let mut s = String::new();
    for p in &cloud.points {
        let _ = write!(
            s,
            "{:?} {:?} {:?} {}",
            p.position.x,
            p.position.y,
            p.position.z,
            p.observations.len()
        );
        for o in &p.observations {
            let _ = write!(s, " {} {:?} {:?}", o.camera, o.pixel.x, o.pixel.y);
        }
        s.push('\n');
    }
    write_text(path, &s)
}

/// Reads a text flow file: `W H`, then `W·H` row-major lines `u v valid`.
pub fn read_flow(path: &Path) -> Result<FlowField> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (n0, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty flow file"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::parse(path, n0 + 1, format!("bad size `{t}`")))
        })
        .collect::<Result<_>>()?;
    let [w, h] = dims[..] else {
        return Err(Error::parse(path, n0 + 1, "expected `W H`"));
    };
    let mut flow = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for (n, line) in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 3 {
            return Err(Error::parse(path, n + 1, "expected `u v valid`"));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::parse(path, n + 1, format!("bad number `{s}`")))
        };
        flow.push([num(tok[0])?, num(tok[1])?]);
        valid.push(match tok[2] {
            "1" | "true" => true,
            "0" | "false" => false,
            t => return Err(Error::parse(path, n + 1, format!("bad validity `{t}`"))),
        });
    }
    if flow.len() != w * h {
        return Err(Error::parse(
            path,
            1,
            format!("expected {} flow vectors, found {}", w * h, flow.len()),
        ));
    }
    FlowField::new(Raster::from_vec(w, h, flow)?, Raster::from_vec(w, h, valid)?)
}

pub fn write_flow(field: &FlowField, path: &Path) -> Result<()> {
    let (w, h) = field.flow.dims();
    let mut s = String::with_capacity(w * h * 16);
    let _ = writeln!(s, "{w} {h}");
    for (f, &v) in field.flow.data().iter().zip(field.valid.data()) {
        let _ = writeln!(s, "{:?} {:?} {}", f[0], f[1], u8::from(v));
    }
    write_text(path, &s)
}

pub fn read_color_image(path: &Path) -> Result<ColorImage> {
    let img = open_image(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| [p[0] as f32, p[1] as f32, p[2] as f32]).collect();
    Raster::from_vec(w as usize, h as usize, data)
}

pub fn write_color_image(image: &ColorImage, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let buf: Vec<u8> = image
        .data()
        .iter()
        .flat_map(|p| p.map(|c| c.round().clamp(0.0, 255.0) as u8))
        .collect();
    let img = RgbImage::from_raw(image.width() as u32, image.height() as u32, buf).expect("buffer size");
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| image_error(path, e))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Quantisation parameters of a depth map: stored value `v > 0` decodes to
/// `offset + (v − 1) · scale`, value 0 is the unknown label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthQuantization {
    pub scale: f64,
    pub offset: f64,
}

impl DepthQuantization {
    pub fn for_map(map: &DepthMap) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for d in map.data().iter().flatten() {
            lo = lo.min(*d);
            hi = hi.max(*d);
        }
        if !lo.is_finite() {
            return Self {
                scale: 1.0,
                offset: 0.0,
            };
        }
        let scale = if hi > lo { (hi - lo) / 65534.0 } else { 1.0 };
        Self { scale, offset: lo }
    }

    pub fn encode(&self, d: Option<f64>) -> u16 {
        match d {
            None => 0,
            Some(d) => (((d - self.offset) / self.scale).round().clamp(0.0, 65534.0) as u16) + 1,
        }
    }

    pub fn decode(&self, v: u16) -> Option<f64> {
        (v > 0).then(|| self.offset + (v - 1) as f64 * self.scale)
    }
}

/// Writes a 16-bit PNG plus a `<path>.meta` sidecar with scale and offset.
pub fn write_depth_map(map: &DepthMap, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let q = DepthQuantization::for_map(map);
    let data: Vec<u16> = map.data().iter().map(|&d| q.encode(d)).collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width() as u32, map.height() as u32, data).expect("buffer size");
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| image_error(path, e))?;
    write_text(
        &sidecar(path),
        &format!("scale = {:?}\noffset = {:?}\n", q.scale, q.offset),
    )
}

pub fn read_depth_map(path: &Path) -> Result<DepthMap> {
    let meta_path = sidecar(path);
    let meta = read_text(&meta_path)?;
    let mut scale = None;
    let mut offset = None;
    for (n, line) in meta.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(&meta_path, n + 1, "expected `key = value`"))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::parse(&meta_path, n + 1, format!("bad number `{}`", v.trim())))?;
        match k.trim() {
            "scale" => scale = Some(v),
            "offset" => offset = Some(v),
            other => return Err(Error::parse(&meta_path, n + 1, format!("unknown key `{other}`"))),
        }
    }
    let (Some(scale), Some(offset)) = (scale, offset) else {
        return Err(Error::parse(&meta_path, 1, "missing scale or offset"));
    };
    let q = DepthQuantization { scale, offset };
    let img = open_image(path)?.into_luma16();
    let (w, h) = img.dimensions();
    Raster::from_vec(w as usize, h as usize, img.pixels().map(|p| q.decode(p[0])).collect())
}

fn write_gray8(data: Vec<u8>, w: usize, h: usize, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let img = Gray8::from_raw(w as u32, h as u32, data).expect("buffer size");
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| image_error(path, e))
}

/// Binary mask as an 8-bit PNG (0 or 255).
pub fn write_mask(mask: &Mask, path: &Path) -> Result<()> {
    write_gray8(
        mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect(),
        mask.width(),
        mask.height(),
        path,
    )
}

/// Reads a mask PNG; any non-zero pixel is foreground.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let img = open_image(path)?.into_luma8();
    let (w, h) = img.dimensions();
    Raster::from_vec(w as usize, h as usize, img.pixels().map(|p| p[0] > 0).collect())
}

/// Region debug dump: 0 Outside, 128 Outer, 255 Inner.
pub fn write_region_mask(mask: &RegionMask, path: &Path) -> Result<()> {
    let data = mask
        .data()
        .iter()
        .map(|r| match r {
            Region::Outside => 0,
            Region::Outer => 128,
            Region::Inner => 255,
        })
        .collect();
    write_gray8(data, mask.width(), mask.height(), path)
}

/// ASCII PLY with optional per-vertex normals and triangle faces.
pub fn write_cloud(
    points: &[Vector3<f64>],
    normals: Option<&[Vector3<f64>]>,
    faces: &[[usize; 3]],
    path: &Path,
) -> Result<()> {
    if let Some(n) = normals {
        if n.len() != points.len() {
            return Err(Error::InvalidArgument("normal count differs from point count".into()));
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "ply\nformat ascii 1.0\nelement vertex {}", points.len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if normals.is_some() {
        s.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    if !faces.is_empty() {
        let _ = writeln!(
            s,
            "element face {}\nproperty list uchar int vertex_indices",
            faces.len()
        );
    }
    s.push_str("end_header\n");
    for (i, p) in points.iter().enumerate() {
        let _ = write!(s, "{:?} {:?} {:?}", p.x, p.y, p.z);
        if let Some(n) = normals {
            let _ = write!(s, " {:?} {:?} {:?}", n[i].x, n[i].y, n[i].z);
        }
        s.push('\n');
    }
    for f in faces {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    write_text(path, &s)
}

/// Ordered `key = value` report, one metric per line.
pub fn format_metrics(metrics: &[(String, f64)]) -> String {
    let mut s = String::new();
    for (k, v) in metrics {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

pub fn write_metrics(metrics: &[(String, f64)], path: &Path) -> Result<()> {
    write_text(path, &format_metrics(metrics))
}

pub fn read_metrics(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = read_text(path)?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, n + 1, "expected `key = value`"))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, n + 1, format!("bad number `{}`", v.trim())))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}
