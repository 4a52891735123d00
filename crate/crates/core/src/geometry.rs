//! Pinhole cameras, ray sampling, Delaunay triangulation and per-triangle
//! affine transfer between two views.
//!
//! Pixel coordinates are continuous with integer values at pixel centres, so
//! pixel `(x, y)` of a raster covers `[x - 0.5, x + 0.5) × [y - 0.5, y + 0.5)`.

use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};
use spade::{DelaunayTriangulation, Point2, Triangulation};

use crate::error::{Error, Result};

/// Orthonormality tolerance for rotations and the upper-triangular check on K.
const CAMERA_TOLERANCE: f64 = 1e-9;

/// Lowest depth produced by [`sample_ray`] when the tolerance window would
/// otherwise reach behind the camera.
pub const MIN_SAMPLE_DEPTH: f64 = 1e-6;

/// Calibrated pinhole camera for one view: `x ~ K (R X + t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraView {
    pub id: usize,
    k: Matrix3<f64>,
    k_inv: Matrix3<f64>,
    r: Matrix3<f64>,
    t: Vector3<f64>,
    pub width: usize,
    pub height: usize,
}

impl CameraView {
    pub fn new(
        id: usize,
        k: Matrix3<f64>,
        r: Matrix3<f64>,
        t: Vector3<f64>,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if k[(1, 0)].abs() > CAMERA_TOLERANCE
            || k[(2, 0)].abs() > CAMERA_TOLERANCE
            || k[(2, 1)].abs() > CAMERA_TOLERANCE
        {
            return Err(Error::Camera(format!("camera {id}: K is not upper triangular")));
        }
        if k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 || k[(2, 2)] <= 0.0 {
            return Err(Error::Camera(format!("camera {id}: K diagonal must be positive")));
        }
        // Normalise so that K[2][2] == 1.
        let k = k / k[(2, 2)];
        let rtr = r.transpose() * r;
        if (rtr - Matrix3::identity()).abs().max() > CAMERA_TOLERANCE
            || (r.determinant() - 1.0).abs() > CAMERA_TOLERANCE
        {
            return Err(Error::Camera(format!("camera {id}: R is not a rotation")));
        }
        if width == 0 || height == 0 {
            return Err(Error::Camera(format!("camera {id}: empty image size")));
        }
        let k_inv = k
            .try_inverse()
            .ok_or_else(|| Error::Camera(format!("camera {id}: K is singular")))?;
        Ok(Self {
            id,
            k,
            k_inv,
            r,
            t,
            width,
            height,
        })
    }

    /// Camera at `eye` looking at `target`, principal point at the image centre.
    pub fn look_at(
        id: usize,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Camera("eye and target coincide".into()))?;
        let mut right = forward.cross(&up);
        if right.norm() < 1e-9 {
            right = forward.cross(&Vector3::y());
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(r * eye);
        let k = Matrix3::new(
            focal,
            0.0,
            (width as f64 - 1.0) / 2.0,
            0.0,
            focal,
            (height as f64 - 1.0) / 2.0,
            0.0,
            0.0,
            1.0,
        );
        Self::new(id, k, r, t, width, height)
    }

    pub fn k(&self) -> &Matrix3<f64> {
        &self.k
    }

    pub fn r(&self) -> &Matrix3<f64> {
        &self.r
    }

    pub fn t(&self) -> &Vector3<f64> {
        &self.t
    }

    pub fn k_inv(&self) -> &Matrix3<f64> {
        &self.k_inv
    }

    /// Optical centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.r.transpose() * self.t)
    }

    /// Unit viewing direction (camera +z) in world coordinates.
    pub fn axis(&self) -> Vector3<f64> {
        self.r.row(2).transpose()
    }

    pub fn to_camera(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.r * world + self.t
    }

    /// Projects a world point, returning the pixel and its camera-frame depth.
    pub fn project(&self, world: &Vector3<f64>) -> Result<(Vector2<f64>, f64)> {
        let pc = self.to_camera(world);
        if pc.z <= 0.0 {
            return Err(Error::BehindCamera(pc.z));
        }
        let h = self.k * pc;
        Ok((Vector2::new(h.x / h.z, h.y / h.z), pc.z))
    }

    /// World point on the ray through `pixel` whose camera-frame depth is `depth`.
    pub fn backproject(&self, pixel: &Vector2<f64>, depth: f64) -> Result<Vector3<f64>> {
        if !(depth > 0.0) {
            return Err(Error::NonPositiveDepth(depth));
        }
        let ray = self.k_inv * Vector3::new(pixel.x, pixel.y, 1.0);
        let pc = ray * (depth / ray.z);
        Ok(self.r.transpose() * (pc - self.t))
    }

    /// Unit ray direction through `pixel` in world coordinates.
    pub fn ray_direction(&self, pixel: &Vector2<f64>) -> Vector3<f64> {
        let ray = self.k_inv * Vector3::new(pixel.x, pixel.y, 1.0);
        (self.r.transpose() * ray).normalize()
    }

    /// Whether a continuous pixel coordinate falls on the image.
    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= -0.5 && pixel.y >= -0.5 && pixel.x < self.width as f64 - 0.5 && pixel.y < self.height as f64 - 0.5
    }

    /// Fundamental matrix `F` with `x_otherᵀ F x_self = 0`.
    pub fn fundamental_to(&self, other: &CameraView) -> Matrix3<f64> {
        let r_rel = other.r * self.r.transpose();
        let t_rel = other.t - r_rel * self.t;
        let tx = Matrix3::new(0.0, -t_rel.z, t_rel.y, t_rel.z, 0.0, -t_rel.x, -t_rel.y, t_rel.x, 0.0);
        other.k_inv.transpose() * tx * r_rel * self.k_inv
    }
}

/// Distance in pixels from `x_other` to the epipolar line of `x_self`.
pub fn epipolar_distance(f: &Matrix3<f64>, x_self: &Vector2<f64>, x_other: &Vector2<f64>) -> f64 {
    let line = f * Vector3::new(x_self.x, x_self.y, 1.0);
    let norm = (line.x * line.x + line.y * line.y).sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    (line.x * x_other.x + line.y * x_other.y + line.z).abs() / norm
}

/// Midpoint of the shortest segment between two rays, or `None` when they
/// are closer to parallel than `min_angle` radians.
pub fn triangulate_midpoint(
    origin_a: &Vector3<f64>,
    dir_a: &Vector3<f64>,
    origin_b: &Vector3<f64>,
    dir_b: &Vector3<f64>,
    min_angle: f64,
) -> Option<Vector3<f64>> {
    let a = dir_a.normalize();
    let b = dir_b.normalize();
    let cos = a.dot(&b).clamp(-1.0, 1.0);
    if cos.abs() > min_angle.cos() {
        return None;
    }
    let w = origin_a - origin_b;
    let d = a.dot(&w);
    let e = b.dot(&w);
    let denom = 1.0 - cos * cos;
    if denom <= 0.0 {
        return None;
    }
    let s = (cos * e - d) / denom;
    let u = (e - cos * d) / denom;
    Some(((origin_a + a * s) + (origin_b + b * u)) * 0.5)
}

/// Depth hypotheses along one optical ray.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySamples {
    pub depths: Vec<f64>,
    pub step: f64,
    /// The lower end was raised to [`MIN_SAMPLE_DEPTH`].
    pub clamped: bool,
}

/// `n_labels` depths uniformly spanning `[center - tolerance, center + tolerance]`.
pub fn sample_ray(center_depth: f64, tolerance: f64, n_labels: usize) -> Result<RaySamples> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ray tolerance must be positive, got {tolerance}"
        )));
    }
    if n_labels < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 depth labels, got {n_labels}"
        )));
    }
    let hi = center_depth + tolerance;
    if !(hi > MIN_SAMPLE_DEPTH) {
        return Err(Error::NonPositiveDepth(hi));
    }
    let mut lo = center_depth - tolerance;
    let clamped = lo <= 0.0;
    if clamped {
        lo = MIN_SAMPLE_DEPTH;
    }
    let step = (hi - lo) / (n_labels - 1) as f64;
    let depths = (0..n_labels)
        .map(|i| if i + 1 == n_labels { hi } else { lo + step * i as f64 })
        .collect();
    Ok(RaySamples { depths, step, clamped })
}

/// A triangle in one image, carrying the indices of the sparse points at its
/// corners. Corners are stored counter-clockwise in image coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Triangle2D {
    pub indices: [usize; 3],
    pub corners: [Vector2<f64>; 3],
}

impl Triangle2D {
    pub fn new(indices: [usize; 3], corners: [Vector2<f64>; 3]) -> Self {
        Self { indices, corners }
    }

    /// Signed area, positive for counter-clockwise corners.
    pub fn signed_area(&self) -> f64 {
        let [a, b, c] = &self.corners;
        0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x))
    }

    pub fn edge_lengths(&self) -> [f64; 3] {
        let [a, b, c] = &self.corners;
        [(b - a).norm(), (c - b).norm(), (a - c).norm()]
    }

    pub fn max_edge(&self) -> f64 {
        let [a, b, c] = self.edge_lengths();
        a.max(b).max(c)
    }

    /// Barycentric coordinates of `p`.
    pub fn barycentric(&self, p: &Vector2<f64>) -> Option<[f64; 3]> {
        let [a, b, c] = &self.corners;
        let det = (b.y - c.y) * (a.x - c.x) + (c.x - b.x) * (a.y - c.y);
        if det == 0.0 {
            return None;
        }
        let l0 = ((b.y - c.y) * (p.x - c.x) + (c.x - b.x) * (p.y - c.y)) / det;
        let l1 = ((c.y - a.y) * (p.x - c.x) + (a.x - c.x) * (p.y - c.y)) / det;
        Some([l0, l1, 1.0 - l0 - l1])
    }

    /// Inside-or-on-boundary test with a small absolute barycentric slack.
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        const SLACK: f64 = 1e-9;
        match self.barycentric(p) {
            Some(l) => l.iter().all(|&v| v >= -SLACK),
            None => false,
        }
    }

    /// Pixel centres covered by the triangle, clipped to a `width × height` grid.
    pub fn rasterize(&self, width: usize, height: usize) -> Vec<(usize, usize)> {
        let xs = self.corners.iter().map(|c| c.x);
        let ys = self.corners.iter().map(|c| c.y);
        let min_x = xs.clone().fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let max_x = xs.fold(f64::NEG_INFINITY, f64::max).floor();
        let min_y = ys.clone().fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let max_y = ys.fold(f64::NEG_INFINITY, f64::max).floor();
        let max_x = max_x.min(width as f64 - 1.0);
        let max_y = max_y.min(height as f64 - 1.0);
        let mut out = Vec::new();
        if max_x < min_x || max_y < min_y {
            return out;
        }
        for y in min_y as usize..=max_y as usize {
            for x in min_x as usize..=max_x as usize {
                if self.contains(&Vector2::new(x as f64, y as f64)) {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

/// Corresponding triangles in a source and a destination view; both share the
/// same sparse point indices.
#[derive(Clone, Debug, PartialEq)]
pub struct TrianglePair {
    pub source: Triangle2D,
    pub target: Triangle2D,
}

impl TrianglePair {
    pub fn new(source: Triangle2D, target: Triangle2D) -> Result<Self> {
        if source.indices != target.indices {
            return Err(Error::InvalidArgument(
                "triangle pair corners index different points".into(),
            ));
        }
        Ok(Self { source, target })
    }
}

/// Delaunay triangulation of a 2D point set. Returned triangles index into
/// `points`; duplicate points are represented by their first occurrence.
pub fn delaunay(points: &[Vector2<f64>]) -> Result<Vec<Triangle2D>> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    // Insert in lexicographic order so co-circular ties resolve reproducibly.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .x
            .total_cmp(&points[b].x)
            .then(points[a].y.total_cmp(&points[b].y))
            .then(a.cmp(&b))
    });
    let mut tri: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    let mut handle_to_point: Vec<usize> = Vec::with_capacity(points.len());
    for &i in &order {
        let p = points[i];
        let handle = tri
            .insert(Point2::new(p.x, p.y))
            .map_err(|e| Error::Degenerate(format!("cannot insert point {i}: {e:?}")))?;
        if handle.index() == handle_to_point.len() {
            handle_to_point.push(i);
        }
    }
    if tri.num_inner_faces() == 0 {
        return Err(Error::Degenerate("all points are collinear".into()));
    }
    let triangles = tri
        .inner_faces()
        .map(|face| {
            let vs = face.vertices();
            let indices = vs.map(|v| handle_to_point[v.fix().index()]);
            let corners = indices.map(|i| points[i]);
            Triangle2D::new(indices, corners)
        })
        .collect();
    Ok(triangles)
}

/// Median of the multiset of all edge lengths (three per triangle).
pub fn median_edge_length<'a>(triangles: impl IntoIterator<Item = &'a Triangle2D>) -> Option<f64> {
    let mut lengths: Vec<f64> = triangles.into_iter().flat_map(|t| t.edge_lengths()).collect();
    if lengths.is_empty() {
        return None;
    }
    lengths.sort_by(f64::total_cmp);
    let n = lengths.len();
    Some(if n % 2 == 1 {
        lengths[n / 2]
    } else {
        0.5 * (lengths[n / 2 - 1] + lengths[n / 2])
    })
}

/// Keeps triangles whose longest edge does not exceed `threshold`.
pub fn filter_max_edge(triangles: &[Triangle2D], threshold: f64) -> Vec<Triangle2D> {
    triangles
        .iter()
        .filter(|t| t.max_edge() <= threshold)
        .cloned()
        .collect()
}

/// Removes every triangle having an edge longer than the median edge length.
pub fn filter_median_edge(triangles: &[Triangle2D]) -> Vec<Triangle2D> {
    match median_edge_length(triangles) {
        Some(median) => filter_max_edge(triangles, median),
        None => Vec::new(),
    }
}

/// 2×3 affine map from source to destination pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    pub matrix: Matrix2x3<f64>,
}

impl AffineMap {
    pub fn identity() -> Self {
        Self {
            matrix: Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0),
        }
    }

    pub fn apply(&self, p: &Vector2<f64>) -> Vector2<f64> {
        self.matrix * Vector3::new(p.x, p.y, 1.0)
    }
}

/// Exact affine map interpolating the three corner correspondences.
pub fn affine_dlt(pair: &TrianglePair) -> Result<AffineMap> {
    let src = &pair.source.corners;
    let dst = &pair.target.corners;
    // Each destination coordinate is a linear function of (x, y, 1); the
    // 6x6 DLT system splits into two identical 3x3 solves.
    let a = Matrix3::new(
        src[0].x, src[0].y, 1.0, src[1].x, src[1].y, 1.0, src[2].x, src[2].y, 1.0,
    );
    let scale = src.iter().flat_map(|p| [p.x.abs(), p.y.abs()]).fold(1.0f64, f64::max);
    if a.determinant().abs() <= 1e-12 * scale * scale {
        return Err(Error::Degenerate("source triangle has zero area".into()));
    }
    let lu = a.lu();
    let bx = Vector3::new(dst[0].x, dst[1].x, dst[2].x);
    let by = Vector3::new(dst[0].y, dst[1].y, dst[2].y);
    let row_x = lu
        .solve(&bx)
        .ok_or_else(|| Error::Degenerate("singular affine system".into()))?;
    let row_y = lu
        .solve(&by)
        .ok_or_else(|| Error::Degenerate("singular affine system".into()))?;
    Ok(AffineMap {
        matrix: Matrix2x3::new(row_x.x, row_x.y, row_x.z, row_y.x, row_y.y, row_y.z),
    })
}

/// Displacement `A(p) - p` of a pixel inside (or on) the source triangle.
pub fn interpolate_displacement(pair: &TrianglePair, pixel: &Vector2<f64>) -> Result<Vector2<f64>> {
    if !pair.source.contains(pixel) {
        return Err(Error::OutsideTriangle { x: pixel.x, y: pixel.y });
    }
    let map = affine_dlt(pair)?;
    Ok(map.apply(pixel) - pixel)
}
