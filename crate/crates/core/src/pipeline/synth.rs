//! Ray-cast synthetic multi-view sequences with exact ground truth.
//!
//! Scene description, flat `key = value` lines (`#` starts a comment):
//!
//! ```text
//! width = 192
//! height = 192
//! frames = 3
//! seed = 7
//! match_spacing = 0.03        # object sample spacing (world units)
//! background_spacing = 0.08   # ground sample spacing
//! supersample = 3             # colour samples per pixel side
//! ground = 0.0 6.0            # plane height z and half extent
//! camera = 0  4 -2 3.5  0 0 0.5  260        # id, eye, target, focal
//! object = sphere 0 0 0.8  0.35  0.06 0 0   # center, radius, velocity
//! object = box 1 0 0.7  0.3 0.2 0.2  45  0 0.06 0  until=1 texture=5
//! ```
//!
//! Boxes take half sizes and a yaw in degrees about +z. An object moves by
//! its velocity every frame until frame `until` and stays put afterwards.

use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::CameraView;
use crate::io::{format_calibration, write_color_image, write_depth_map, write_flow, write_mask, write_matches};
use crate::raster::{ColorImage, DepthMap, Mask, Raster};
use crate::sparse::{FlowField, Observation, SparseCloud, SparsePoint};

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Sphere { radius: f64 },
    Box { half: Vector3<f64>, yaw_deg: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectSpec {
    pub shape: Shape,
    pub center: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Last frame index at which the object still moves.
    pub until: Option<usize>,
    pub texture: u64,
}

impl ObjectSpec {
    pub fn position(&self, frame: usize) -> Vector3<f64> {
        let steps = self.until.map_or(frame, |u| frame.min(u));
        self.center + self.velocity * steps as f64
    }

    fn rotation(&self) -> Matrix3<f64> {
        match self.shape {
            Shape::Sphere { .. } => Matrix3::identity(),
            Shape::Box { yaw_deg, .. } => {
                let (s, c) = yaw_deg.to_radians().sin_cos();
                Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraSpec {
    pub id: usize,
    pub eye: Vector3<f64>,
    pub target: Vector3<f64>,
    pub focal: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundSpec {
    pub z: f64,
    pub half_extent: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    pub match_spacing: f64,
    pub background_spacing: f64,
    pub supersample: usize,
    pub ground: Option<GroundSpec>,
    pub cameras: Vec<CameraSpec>,
    pub objects: Vec<ObjectSpec>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 192,
            height: 192,
            frames: 1,
            seed: 0,
            match_spacing: 0.03,
            background_spacing: 0.08,
            supersample: 3,
            ground: None,
            cameras: Vec::new(),
            objects: Vec::new(),
        }
    }
}

impl SceneSpec {
    pub fn build_cameras(&self) -> Result<Vec<CameraView>> {
        self.cameras
            .iter()
            .map(|c| CameraView::look_at(c.id, c.eye, c.target, Vector3::z(), c.focal, self.width, self.height))
            .collect()
    }
}

fn numbers(key: &str, tokens: &[&str]) -> Result<Vec<f64>> {
    tokens
        .iter()
        .map(|t| t.parse().map_err(|_| Error::config(key, format!("bad number `{t}`"))))
        .collect()
}

fn v3(v: &[f64]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

fn parse_object(value: &str) -> Result<ObjectSpec> {
    let tokens: Vec<&str> = value.split_whitespace().collect();
    let (positional, options): (Vec<&str>, Vec<&str>) = tokens.iter().partition(|t| !t.contains('='));
    let Some((kind, rest)) = positional.split_first() else {
        return Err(Error::config("object", "missing shape"));
    };
    let v = numbers("object", rest)?;
    let (shape, center, velocity) = match (*kind, v.len()) {
        ("sphere", 7) => (Shape::Sphere { radius: v[3] }, v3(&v[0..3]), v3(&v[4..7])),
        ("box", 10) => (
            Shape::Box {
                half: v3(&v[3..6]),
                yaw_deg: v[6],
            },
            v3(&v[0..3]),
            v3(&v[7..10]),
        ),
        ("sphere", _) => return Err(Error::config("object", "sphere needs cx cy cz r vx vy vz")),
        ("box", _) => return Err(Error::config("object", "box needs cx cy cz hx hy hz yaw vx vy vz")),
        (other, _) => return Err(Error::config("object", format!("unknown shape `{other}`"))),
    };
    match &shape {
        Shape::Sphere { radius } if !(*radius > 0.0) => return Err(Error::config("object", "radius must be positive")),
        Shape::Box { half, .. } if !half.iter().all(|&h| h > 0.0) => {
            return Err(Error::config("object", "box half sizes must be positive"))
        }
        _ => {}
    }
    let mut obj = ObjectSpec {
        shape,
        center,
        velocity,
        until: None,
        texture: 0,
    };
    for opt in options {
        let (k, val) = opt.split_once('=').expect("partitioned on '='");
        match k {
            "until" => {
                obj.until = Some(
                    val.parse()
                        .map_err(|_| Error::config("object", format!("bad until `{val}`")))?,
                )
            }
            "texture" => {
                obj.texture = val
                    .parse()
                    .map_err(|_| Error::config("object", format!("bad texture `{val}`")))?
            }
            other => return Err(Error::config("object", format!("unknown option `{other}`"))),
        }
    }
    Ok(obj)
}

pub fn parse_scene_spec(text: &str) -> Result<SceneSpec> {
    let mut spec = SceneSpec::default();
    let mut textures_set = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(line, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        let scalar =
            |v: &str| -> Result<f64> { v.parse().map_err(|_| Error::config(key, format!("bad number `{v}`"))) };
        let count =
            |v: &str| -> Result<usize> { v.parse().map_err(|_| Error::config(key, format!("bad count `{v}`"))) };
        match key {
            "width" => spec.width = count(value)?,
            "height" => spec.height = count(value)?,
            "frames" => spec.frames = count(value)?,
            "seed" => {
                spec.seed = value
                    .parse()
                    .map_err(|_| Error::config(key, format!("bad seed `{value}`")))?
            }
            "match_spacing" => spec.match_spacing = scalar(value)?,
            "background_spacing" => spec.background_spacing = scalar(value)?,
            "supersample" => spec.supersample = count(value)?,
            "ground" => {
                let v = numbers(key, &value.split_whitespace().collect::<Vec<_>>())?;
                let [z, half_extent] = v[..] else {
                    return Err(Error::config(key, "expected `z half_extent`"));
                };
                spec.ground = Some(GroundSpec { z, half_extent });
            }
            "camera" => {
                let tokens: Vec<&str> = value.split_whitespace().collect();
                if tokens.len() != 8 {
                    return Err(Error::config(key, "expected `id ex ey ez tx ty tz focal`"));
                }
                let id = count(tokens[0])?;
                let v = numbers(key, &tokens[1..])?;
                if spec.cameras.iter().any(|c| c.id == id) {
                    return Err(Error::config(key, format!("duplicate camera id {id}")));
                }
                spec.cameras.push(CameraSpec {
                    id,
                    eye: v3(&v[0..3]),
                    target: v3(&v[3..6]),
                    focal: v[6],
                });
            }
            "object" => {
                textures_set.push(value.contains("texture="));
                spec.objects.push(parse_object(value)?);
            }
            other => return Err(Error::config(other, "unknown key")),
        }
    }
    for (i, (obj, explicit)) in spec.objects.iter_mut().zip(textures_set).enumerate() {
        if !explicit {
            obj.texture = i as u64 + 1;
        }
    }
    validate_spec(&spec)?;
    Ok(spec)
}

fn validate_spec(spec: &SceneSpec) -> Result<()> {
    if spec.width < 2 || spec.height < 2 {
        return Err(Error::config("width", "image must be at least 2×2"));
    }
    if spec.frames == 0 {
        return Err(Error::config("frames", "need at least one frame"));
    }
    if spec.cameras.is_empty() {
        return Err(Error::config("camera", "need at least one camera"));
    }
    if spec.objects.is_empty() {
        return Err(Error::config("object", "need at least one object"));
    }
    for (field, v) in [
        ("match_spacing", spec.match_spacing),
        ("background_spacing", spec.background_spacing),
    ] {
        if !(v > 0.0) {
            return Err(Error::config(field, "must be positive"));
        }
    }
    if spec.supersample == 0 {
        return Err(Error::config("supersample", "must be at least 1"));
    }
    Ok(())
}

pub fn load_scene_spec(path: &Path) -> Result<SceneSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scene_spec(&text)
}

/// Surface hit along a unit ray.
#[derive(Clone, Copy, Debug)]
struct Hit {
    t: f64,
    /// Object index, `None` for the ground.
    object: Option<usize>,
    normal: Vector3<f64>,
    /// Texture coordinate in the surface's own frame.
    local: Vector3<f64>,
}

/// Scene geometry frozen at one frame.
struct FrameScene<'a> {
    spec: &'a SceneSpec,
    positions: Vec<Vector3<f64>>,
    rotations: Vec<Matrix3<f64>>,
}

impl<'a> FrameScene<'a> {
    fn new(spec: &'a SceneSpec, frame: usize) -> Self {
        Self {
            spec,
            positions: spec.objects.iter().map(|o| o.position(frame)).collect(),
            rotations: spec.objects.iter().map(ObjectSpec::rotation).collect(),
        }
    }

    fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let mut offer = |h: Hit| {
            if best.is_none_or(|b| h.t < b.t) {
                best = Some(h);
            }
        };
        if let Some(g) = self.spec.ground {
            if dir.z.abs() > 1e-12 {
                let t = (g.z - origin.z) / dir.z;
                let p = origin + dir * t;
                if t > 0.0 && p.x.abs() <= g.half_extent && p.y.abs() <= g.half_extent {
                    offer(Hit {
                        t,
                        object: None,
                        normal: Vector3::z() * -dir.z.signum(),
                        local: p,
                    });
                }
            }
        }
        for (i, obj) in self.spec.objects.iter().enumerate() {
            let c = self.positions[i];
            match obj.shape {
                Shape::Sphere { radius } => {
                    let oc = origin - c;
                    let b = oc.dot(dir);
                    let disc = b * b - (oc.norm_squared() - radius * radius);
                    if disc < 0.0 {
                        continue;
                    }
                    let t = -b - disc.sqrt();
                    if t > 0.0 {
                        let p = origin + dir * t;
                        offer(Hit {
                            t,
                            object: Some(i),
                            normal: (p - c) / radius,
                            local: p - c,
                        });
                    }
                }
                Shape::Box { half, .. } => {
                    let rt = self.rotations[i].transpose();
                    let o = rt * (origin - c);
                    let d = rt * dir;
                    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                    let mut axis = 0;
                    let mut hit = true;
                    for k in 0..3 {
                        if d[k].abs() < 1e-15 {
                            if o[k].abs() > half[k] {
                                hit = false;
                                break;
                            }
                            continue;
                        }
                        let (a, b) = ((-half[k] - o[k]) / d[k], (half[k] - o[k]) / d[k]);
                        let (near, far) = if a < b { (a, b) } else { (b, a) };
                        if near > t0 {
                            t0 = near;
                            axis = k;
                        }
                        t1 = t1.min(far);
                    }
                    if hit && t0 <= t1 && t0 > 0.0 {
                        let mut n = Vector3::zeros();
                        n[axis] = -d[axis].signum();
                        offer(Hit {
                            t: t0,
                            object: Some(i),
                            normal: self.rotations[i] * n,
                            local: o + d * t0,
                        });
                    }
                }
            }
        }
        best
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn lattice(ix: i64, iy: i64, iz: i64, seed: u64) -> f64 {
    let h = splitmix(seed ^ splitmix(ix as u64 ^ splitmix(iy as u64 ^ splitmix(iz as u64))));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(p: Vector3<f64>, seed: u64) -> f64 {
    let f = p.map(f64::floor);
    let fade = (p - f).map(|t| t * t * (3.0 - 2.0 * t));
    let (ix, iy, iz) = (f.x as i64, f.y as i64, f.z as i64);
    let mut acc = 0.0;
    for c in 0..8 {
        let (dx, dy, dz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
        let w = (if dx == 1 { fade.x } else { 1.0 - fade.x })
            * (if dy == 1 { fade.y } else { 1.0 - fade.y })
            * (if dz == 1 { fade.z } else { 1.0 - fade.z });
        acc += w * lattice(ix + dx, iy + dy, iz + dz, seed);
    }
    acc
}

fn texture(p: Vector3<f64>, seed: u64, base_freq: f64) -> [f32; 3] {
    let mut rgb = [0.0f32; 3];
    for (k, ch) in rgb.iter_mut().enumerate() {
        let s = splitmix(seed.wrapping_mul(31).wrapping_add(k as u64));
        let mut v = 0.0;
        for (octave, amp) in [(1.0, 0.5), (2.0, 0.3), (4.0, 0.2)] {
            v += amp * value_noise(p * (base_freq * octave), s.wrapping_add(octave as u64));
        }
        *ch = (255.0 * (0.5 + 2.2 * (v - 0.5)).clamp(0.03, 0.97)) as f32;
    }
    rgb
}

const SKY: [f32; 3] = [120.0, 140.0, 170.0];

fn shade(hit: &Hit, spec: &SceneSpec) -> [f32; 3] {
    let (seed, freq) = match hit.object {
        Some(i) => (spec.seed.wrapping_add(1000 * spec.objects[i].texture), 18.0),
        None => (spec.seed, 10.0),
    };
    let light = Vector3::new(0.3, 0.5, 1.0).normalize();
    let lambert = 0.6 + 0.4 * hit.normal.dot(&light).max(0.0);
    texture(hit.local, seed, freq).map(|c| c * lambert as f32)
}

/// Rendering and ground truth of one camera at one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticView {
    pub image: ColorImage,
    /// Camera-frame depth of the first surface at each pixel center.
    pub depth: DepthMap,
    /// Object index visible at each pixel center.
    pub objects: Raster<Option<usize>>,
    /// Displacement towards the previous frame (the next one on frame 0).
    pub flow: FlowField,
}

impl SyntheticView {
    /// Pixels covered by any object.
    pub fn mask(&self) -> Mask {
        self.objects.map(Option::is_some)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub cameras: Vec<CameraView>,
    /// `frames[t][c]`.
    pub frames: Vec<Vec<SyntheticView>>,
    /// Exact sparse matches per frame.
    pub matches: Vec<SparseCloud>,
}

fn render_view(scene: &FrameScene<'_>, other: Option<&FrameScene<'_>>, cam: &CameraView) -> SyntheticView {
    let spec = scene.spec;
    let (w, h) = (cam.width, cam.height);
    let center = cam.center();
    let n = spec.supersample;
    let offsets: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64 - 0.5).collect();
    let rows: Vec<Vec<([f32; 3], Option<f64>, Option<usize>, [f64; 2])>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let pixel = Vector2::new(x as f64, y as f64);
                    let hit = scene.cast(&center, &cam.ray_direction(&pixel));
                    let mut acc = [0.0f32; 3];
                    for &oy in &offsets {
                        for &ox in &offsets {
                            let sub = Vector2::new(x as f64 + ox, y as f64 + oy);
                            let c = scene
                                .cast(&center, &cam.ray_direction(&sub))
                                .map_or(SKY, |h| shade(&h, spec));
                            for k in 0..3 {
                                acc[k] += c[k];
                            }
                        }
                    }
                    let color = acc.map(|c| c / (n * n) as f32);
                    let (depth, object, flow) = match hit {
                        None => (None, None, [0.0, 0.0]),
                        Some(hit) => {
                            let p = center + cam.ray_direction(&pixel) * hit.t;
                            let depth = cam.to_camera(&p).z;
                            let flow = match (hit.object, other) {
                                (Some(i), Some(o)) => {
                                    let moved = p + o.positions[i] - scene.positions[i];
                                    cam.project(&moved)
                                        .map_or([0.0, 0.0], |(q, _)| [q.x - pixel.x, q.y - pixel.y])
                                }
                                _ => [0.0, 0.0],
                            };
                            (Some(depth), hit.object, flow)
                        }
                    };
                    (color, depth, object, flow)
                })
                .collect()
        })
        .collect();
    let flat: Vec<_> = rows.into_iter().flatten().collect();
    let image = Raster::from_vec(w, h, flat.iter().map(|r| r.0).collect()).expect("dims");
    let depth = Raster::from_vec(w, h, flat.iter().map(|r| r.1).collect()).expect("dims");
    let objects = Raster::from_vec(w, h, flat.iter().map(|r| r.2).collect()).expect("dims");
    let flow = Raster::from_vec(w, h, flat.iter().map(|r| r.3).collect()).expect("dims");
    SyntheticView {
        image,
        depth,
        objects,
        flow: FlowField {
            flow,
            valid: Raster::new(w, h, true),
        },
    }
}

/// Vertices of an icosahedron whose faces are split into `n × n` triangular
/// grids, pushed onto the sphere. Neighbouring samples sit about `spacing`
/// apart, far more evenly than a spiral lattice.
fn geodesic_sphere(radius: f64, spacing: f64) -> Vec<Vector3<f64>> {
    let area = 4.0 * std::f64::consts::PI * radius * radius;
    // An n-frequency geodesic sphere has 10 n² + 2 vertices.
    let n = ((area / (spacing * spacing) - 2.0) / 10.0).sqrt().ceil().max(1.0) as usize;
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let v = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .map(Vector3::from);
    const FACES: [[usize; 3]; 20] = [
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    // Shared edge and corner samples are generated by several faces; the
    // quantised direction identifies them.
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(10 * n * n + 2);
    for [a, b, c] in FACES {
        for i in 0..=n {
            for j in 0..=n - i {
                let p = v[a] + (v[b] - v[a]) * (i as f64 / n as f64) + (v[c] - v[a]) * (j as f64 / n as f64);
                let d = p.normalize();
                let key = d.map(|x| (x * 1e9).round() as i64);
                if seen.insert((key.x, key.y, key.z)) {
                    out.push(d * radius);
                }
            }
        }
    }
    out
}

/// Surface samples of object `obj` in its own frame.
fn object_samples(obj: &ObjectSpec, spacing: f64) -> Vec<Vector3<f64>> {
    match obj.shape {
        Shape::Sphere { radius } => geodesic_sphere(radius, spacing),
        Shape::Box { half, .. } => {
            let steps = half.map(|h| ((2.0 * h / spacing).ceil() as usize).max(1));
            let coord = |k: usize, i: usize| -half[k] + 2.0 * half[k] * i as f64 / steps[k] as f64;
            let mut out = Vec::new();
            for i in 0..=steps.x {
                for j in 0..=steps.y {
                    for k in 0..=steps.z {
                        let on_face = i == 0 || i == steps.x || j == 0 || j == steps.y || k == 0 || k == steps.z;
                        if on_face {
                            out.push(Vector3::new(coord(0, i), coord(1, j), coord(2, k)));
                        }
                    }
                }
            }
            out
        }
    }
}

fn ground_samples(g: &GroundSpec, spacing: f64, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (2.0 * g.half_extent / spacing).floor() as i64;
    let mut out = Vec::new();
    for i in 0..=n {
        for j in 0..=n {
            let jx: f64 = rng.random_range(-0.1..0.1);
            let jy: f64 = rng.random_range(-0.1..0.1);
            let x = (-g.half_extent + (i as f64 + 0.5 + jx) * spacing).clamp(-g.half_extent, g.half_extent);
            let y = (-g.half_extent + (j as f64 + 0.5 + jy) * spacing).clamp(-g.half_extent, g.half_extent);
            out.push(Vector3::new(x, y, g.z));
        }
    }
    out
}

fn observe(scene: &FrameScene<'_>, cameras: &[CameraView], points: Vec<Vector3<f64>>) -> Vec<SparsePoint> {
    let min_views = cameras.len().min(2);
    points
        .into_par_iter()
        .filter_map(|x| {
            let observations: Vec<Observation> = cameras
                .iter()
                .filter_map(|cam| {
                    let (pixel, _) = cam.project(&x).ok()?;
                    if !cam.contains(&pixel) {
                        return None;
                    }
                    let c = cam.center();
                    let dist = (x - c).norm();
                    let hit = scene.cast(&c, &((x - c) / dist))?;
                    (hit.t >= dist * (1.0 - 1e-9) - 1e-9).then_some(Observation { camera: cam.id, pixel })
                })
                .collect();
            (observations.len() >= min_views).then_some(SparsePoint {
                position: x,
                observations,
            })
        })
        .collect()
}

/// Renders every frame and camera of `spec` with exact depth, masks, flow
/// and sparse matches.
pub fn render_synthetic(spec: &SceneSpec) -> Result<SyntheticData> {
    validate_spec(spec)?;
    let cameras = spec.build_cameras()?;
    let scenes: Vec<FrameScene<'_>> = (0..spec.frames).map(|t| FrameScene::new(spec, t)).collect();
    let ground_pts = spec
        .ground
        .map(|g| ground_samples(&g, spec.background_spacing, spec.seed))
        .unwrap_or_default();
    let local_samples: Vec<Vec<Vector3<f64>>> = spec
        .objects
        .iter()
        .map(|o| object_samples(o, spec.match_spacing))
        .collect();

    let mut frames = Vec::with_capacity(spec.frames);
    let mut matches = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let other = match (t, spec.frames) {
            (_, 1) => None,
            (0, _) => Some(&scenes[1]),
            (t, _) => Some(&scenes[t - 1]),
        };
        let views: Vec<SyntheticView> = cameras.iter().map(|c| render_view(&scenes[t], other, c)).collect();
        for i in 0..spec.objects.len() {
            if !views.iter().any(|v| v.objects.data().contains(&Some(i))) {
                return Err(Error::ObjectOutsideFrusta(i));
            }
        }
        let mut points = ground_pts.clone();
        for (i, samples) in local_samples.iter().enumerate() {
            let (c, r) = (scenes[t].positions[i], scenes[t].rotations[i]);
            points.extend(samples.iter().map(|s| c + r * s));
        }
        matches.push(SparseCloud::new(observe(&scenes[t], &cameras, points)));
        frames.push(views);
    }
    Ok(SyntheticData {
        cameras,
        frames,
        matches,
    })
}

/// Writes the dataset layout with ground truth under `out`.
pub fn write_synthetic(data: &SyntheticData, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let cal = out.join("cameras.txt");
    std::fs::write(&cal, format_calibration(&data.cameras)).map_err(|e| Error::io(&cal, e))?;
    let jobs: Vec<(usize, usize)> = (0..data.frames.len())
        .flat_map(|t| (0..data.cameras.len()).map(move |c| (t, c)))
        .collect();
    jobs.par_iter().try_for_each(|&(t, c)| -> Result<()> {
        let id = data.cameras[c].id;
        let v = &data.frames[t][c];
        write_color_image(&v.image, &out.join(format!("frames/{t}/{id}.png")))?;
        write_flow(&v.flow, &out.join(format!("flow/{id}_{t}.flo-txt")))?;
        write_depth_map(&v.depth, &out.join(format!("gt/depth_{id}_{t}.png16")))?;
        write_mask(&v.mask(), &out.join(format!("gt/mask_{id}_{t}.png")))
    })?;
    for (t, m) in data.matches.iter().enumerate() {
        write_matches(m, &out.join(format!("matches/{t}.txt")))?;
    }
    Ok(())
}

pub fn generate_synthetic(spec: &SceneSpec, out: &Path) -> Result<SyntheticData> {
    let data = render_synthetic(spec)?;
    write_synthetic(&data, out)?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_camera(eye: Vector3<f64>, target: Vector3<f64>) -> CameraSpec {
        CameraSpec {
            id: 0,
            eye,
            target,
            focal: 100.0,
        }
    }

    #[test]
    fn plane_depth_is_constant() {
        let spec = SceneSpec {
            width: 24,
            height: 24,
            ground: Some(GroundSpec {
                z: 0.0,
                half_extent: 10.0,
            }),
            cameras: vec![one_camera(Vector3::new(0.0, 0.0, 2.0), Vector3::zeros())],
            objects: vec![ObjectSpec {
                shape: Shape::Sphere { radius: 0.05 },
                center: Vector3::new(0.0, 0.0, 0.5),
                velocity: Vector3::zeros(),
                until: None,
                texture: 1,
            }],
            supersample: 1,
            ..SceneSpec::default()
        };
        let data = render_synthetic(&spec).unwrap();
        let v = &data.frames[0][0];
        for (d, o) in v.depth.data().iter().zip(v.objects.data()) {
            if o.is_none() {
                assert!((d.unwrap() - 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sphere_front_depth() {
        let spec = SceneSpec {
            width: 33,
            height: 33,
            cameras: vec![one_camera(Vector3::zeros(), Vector3::new(0.0, 3.0, 0.0))],
            objects: vec![ObjectSpec {
                shape: Shape::Sphere { radius: 0.5 },
                center: Vector3::new(0.0, 3.0, 0.0),
                velocity: Vector3::zeros(),
                until: None,
                texture: 1,
            }],
            supersample: 1,
            ..SceneSpec::default()
        };
        let data = render_synthetic(&spec).unwrap();
        let depth = &data.frames[0][0].depth;
        let min = depth.data().iter().flatten().copied().fold(f64::INFINITY, f64::min);
        assert!((depth.get(16, 16).unwrap() - 2.5).abs() < 1e-12);
        assert!((min - 2.5).abs() < 1e-12);
    }

    #[test]
    fn object_outside_frusta() {
        let spec = SceneSpec {
            width: 16,
            height: 16,
            cameras: vec![one_camera(Vector3::zeros(), Vector3::new(0.0, 3.0, 0.0))],
            objects: vec![ObjectSpec {
                shape: Shape::Sphere { radius: 0.5 },
                center: Vector3::new(0.0, -3.0, 0.0),
                velocity: Vector3::zeros(),
                until: None,
                texture: 1,
            }],
            ..SceneSpec::default()
        };
        assert!(matches!(render_synthetic(&spec), Err(Error::ObjectOutsideFrusta(0))));
    }

    #[test]
    fn spec_parsing() {
        let spec = parse_scene_spec(
            "width = 64\nheight = 48\nframes = 2\nground = 0 3\n\
             camera = 0 3 0 2 0 0 0.5 120\ncamera = 1 0 3 2 0 0 0.5 120\n\
             object = sphere 0 0 0.6 0.3 0.1 0 0\n\
             object = box 1 0 0.6 0.2 0.2 0.2 30 0 0.1 0 until=0 texture=9\n",
        )
        .unwrap();
        assert_eq!((spec.width, spec.height, spec.frames), (64, 48, 2));
        assert_eq!(spec.cameras.len(), 2);
        assert_eq!(spec.objects[0].texture, 1);
        assert_eq!(spec.objects[1].texture, 9);
        assert_eq!(spec.objects[1].position(1), spec.objects[1].center);
        assert!(parse_scene_spec("object = cone 1 2 3").is_err());
        assert!(parse_scene_spec("camera = 0 1 2").is_err());
    }

    #[test]
    fn box_samples_lie_on_faces() {
        let obj = ObjectSpec {
            shape: Shape::Box {
                half: Vector3::new(0.2, 0.1, 0.3),
                yaw_deg: 0.0,
            },
            center: Vector3::zeros(),
            velocity: Vector3::zeros(),
            until: None,
            texture: 0,
        };
        let pts = object_samples(&obj, 0.05);
        let half = Vector3::new(0.2, 0.1, 0.3);
        for p in &pts {
            let on = (0..3).any(|k| (p[k].abs() - half[k]).abs() < 1e-12);
            assert!(on && (0..3).all(|k| p[k].abs() <= half[k] + 1e-12));
        }
    }

    #[test]
    fn geodesic_sphere_counts_and_spacing() {
        for n in 1..6usize {
            // Spacing that yields exactly frequency n.
            let spacing = (4.0 * std::f64::consts::PI / (10.0 * (n * n) as f64 + 2.0)).sqrt();
            let pts = geodesic_sphere(1.0, spacing);
            assert_eq!(pts.len(), 10 * n * n + 2);
            assert!(pts.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
        }
        // Nearest-neighbour gaps stay within a narrow band around the spacing.
        let pts = geodesic_sphere(0.35, 0.02);
        let nn: Vec<f64> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| {
                pts.iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, q)| (p - q).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let (lo, hi) = nn
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &d| (a.min(d), b.max(d)));
        assert!(hi / lo < 1.5, "nearest-neighbour spread {lo}..{hi}");
    }
}
