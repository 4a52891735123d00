//! Coarse per-object reconstruction in one view: the inner region covered by
//! propagated triangles, the extrapolated outer band, and the per-pixel depth
//! hypotheses that the refinement chooses from.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    affine_dlt, delaunay, epipolar_distance, filter_max_edge, median_edge_length, sample_ray, triangulate_midpoint,
    CameraView, Triangle2D, TrianglePair,
};
use crate::raster::Raster;
use crate::sparse::{Cluster, SparseCloud};

/// Fraction of the capture-volume diagonal used as the outer tolerance.
pub const OUTER_TOLERANCE_FRACTION: f64 = 0.01;
/// Maximum distance (px) between a propagated pixel and its epipolar line.
pub const EPIPOLAR_GATE_PX: f64 = 2.0;
/// Minimum angle between the two rays of a triangulated pixel.
pub const MIN_RAY_ANGLE_DEG: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Region {
    #[default]
    Outside,
    Inner,
    Outer,
}

pub type RegionMask = Raster<Region>;

/// Axis-aligned bounds of the cleaned sparse cloud.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaptureVolume {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl CaptureVolume {
    pub fn from_points(points: &[Vector3<f64>]) -> Result<Self> {
        let first = points.first().ok_or(Error::TooFewPoints { needed: 0, got: 0 })?;
        let (mut min, mut max) = (*first, *first);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        let volume = Self { min, max };
        if !(volume.diagonal() > 0.0) {
            return Err(Error::Degenerate("capture volume has zero extent".into()));
        }
        Ok(volume)
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn outer_tolerance(&self) -> f64 {
        OUTER_TOLERANCE_FRACTION * self.diagonal()
    }

    pub fn inner_tolerance(&self) -> f64 {
        self.outer_tolerance() / 2.0
    }
}

/// Delaunay triangulation of the cluster members observed in `view`, with
/// triangle indices referring to cloud points.
pub fn triangulate_cluster(members: &[usize], cloud: &SparseCloud, view: usize) -> Result<Vec<Triangle2D>> {
    let (ids, pixels): (Vec<usize>, Vec<Vector2<f64>>) = members
        .iter()
        .filter_map(|&i| cloud.points[i].observation(view).map(|o| (i, o.pixel)))
        .unzip();
    let tris = delaunay(&pixels)?;
    Ok(tris
        .into_iter()
        .map(|t| Triangle2D::new(t.indices.map(|k| ids[k]), t.corners))
        .collect())
}

/// Median edge length over the triangulations of every cluster in `view`.
/// Clusters too small or too flat to triangulate are skipped.
pub fn scene_median_edge(clusters: &[Cluster], cloud: &SparseCloud, view: usize) -> Option<f64> {
    let all: Vec<Triangle2D> = clusters
        .iter()
        .filter_map(|c| triangulate_cluster(&c.members, cloud, view).ok())
        .flatten()
        .collect();
    median_edge_length(&all)
}

/// Kept reference-view triangles of one cluster, paired with their images in
/// the partner view. A corner not matched in the partner view is transferred
/// by projecting its 3D position.
pub fn triangle_pairs(
    members: &[usize],
    cloud: &SparseCloud,
    reference: &CameraView,
    partner: &CameraView,
    max_edge: f64,
) -> Result<Vec<TrianglePair>> {
    let tris = filter_max_edge(&triangulate_cluster(members, cloud, reference.id)?, max_edge);
    let target_pixel = |i: usize| -> Option<Vector2<f64>> {
        let p = &cloud.points[i];
        match p.observation(partner.id) {
            Some(o) => Some(o.pixel),
            None => partner.project(&p.position).ok().map(|(px, _)| px),
        }
    };
    let mut pairs = Vec::with_capacity(tris.len());
    for t in tris {
        let corners = [
            target_pixel(t.indices[0]),
            target_pixel(t.indices[1]),
            target_pixel(t.indices[2]),
        ];
        if let [Some(a), Some(b), Some(c)] = corners {
            pairs.push(TrianglePair::new(t.clone(), Triangle2D::new(t.indices, [a, b, c]))?);
        }
    }
    Ok(pairs)
}

/// Inner region of one object in the reference view with its initial depth.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerRegion {
    pub mask: RegionMask,
    pub depth: Raster<Option<f64>>,
    /// Covered pixels rejected by the epipolar gate.
    pub epipolar_rejected: usize,
    /// Covered pixels whose rays were too close to parallel or met behind
    /// the reference camera.
    pub triangulation_rejected: usize,
}

impl InnerRegion {
    pub fn inner_count(&self) -> usize {
        self.mask.data().iter().filter(|&&r| r == Region::Inner).count()
    }
}

/// Rasterises the pairs' source triangles and triangulates every covered
/// pixel against its affinely displaced partner pixel.
pub fn build_inner_region(reference: &CameraView, partner: &CameraView, pairs: &[TrianglePair]) -> InnerRegion {
    let (w, h) = (reference.width, reference.height);
    let mut mask = Raster::new(w, h, Region::Outside);
    let mut depth = Raster::new(w, h, None);
    let mut covered = Raster::new(w, h, false);
    let f = reference.fundamental_to(partner);
    let min_angle = MIN_RAY_ANGLE_DEG.to_radians();
    let (c_ref, c_par) = (reference.center(), partner.center());
    let mut epipolar_rejected = 0;
    let mut triangulation_rejected = 0;
    for pair in pairs {
        let Ok(map) = affine_dlt(pair) else { continue };
        for (x, y) in pair.source.rasterize(w, h) {
            if *covered.get(x, y) {
                continue;
            }
            covered.set(x, y, true);
            let p = Vector2::new(x as f64, y as f64);
            let q = map.apply(&p);
            if epipolar_distance(&f, &p, &q) > EPIPOLAR_GATE_PX {
                epipolar_rejected += 1;
                continue;
            }
            let point = triangulate_midpoint(
                &c_ref,
                &reference.ray_direction(&p),
                &c_par,
                &partner.ray_direction(&q),
                min_angle,
            );
            match point.map(|x3| reference.to_camera(&x3).z) {
                Some(z) if z > 0.0 => {
                    mask.set(x, y, Region::Inner);
                    depth.set(x, y, Some(z));
                }
                _ => triangulation_rejected += 1,
            }
        }
    }
    InnerRegion {
        mask,
        depth,
        epipolar_rejected,
        triangulation_rejected,
    }
}

/// Inner region plus outer band with a center depth on every non-Outside pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseRegion {
    pub mask: RegionMask,
    pub center: Raster<Option<f64>>,
    /// Extrapolation radius in pixels.
    pub radius: f64,
}

const NEIGHBORS4: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Inner pixels on the outline of the region: on the image border or next to
/// a non-Inner pixel connected to the image border. Holes do not count.
pub fn outline_pixels(mask: &RegionMask) -> Vec<(usize, usize)> {
    let (w, h) = mask.dims();
    let inner = |x: usize, y: usize| *mask.get(x, y) == Region::Inner;
    // Flood the exterior from the border through non-Inner pixels.
    let mut exterior = Raster::new(w, h, false);
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if (x == 0 || y == 0 || x + 1 == w || y + 1 == h) && !inner(x, y) {
                exterior.set(x, y, true);
                stack.push((x, y));
            }
        }
    }
    while let Some((x, y)) = stack.pop() {
        for (dx, dy) in NEIGHBORS4 {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if mask.contains(nx, ny) {
                let (nx, ny) = (nx as usize, ny as usize);
                if !inner(nx, ny) && !*exterior.get(nx, ny) {
                    exterior.set(nx, ny, true);
                    stack.push((nx, ny));
                }
            }
        }
    }
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !inner(x, y) {
                continue;
            }
            let on_border = x == 0 || y == 0 || x + 1 == w || y + 1 == h;
            let touches = NEIGHBORS4.iter().any(|&(dx, dy)| {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                mask.contains(nx, ny) && *exterior.get(nx as usize, ny as usize)
            });
            if on_border || touches {
                out.push((x, y));
            }
        }
    }
    out
}

/// Extrapolation radius: the given fraction of the mean distance from the
/// outline pixels to the Inner centroid.
pub fn extrapolation_radius(mask: &RegionMask, fraction: f64) -> Option<f64> {
    let mut sum = Vector2::zeros();
    let mut n = 0usize;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if *mask.get(x, y) == Region::Inner {
                sum += Vector2::new(x as f64, y as f64);
                n += 1;
            }
        }
    }
    if n == 0 {
        return None;
    }
    let centroid = sum / n as f64;
    let outline = outline_pixels(mask);
    let mean = outline
        .iter()
        .map(|&(x, y)| (Vector2::new(x as f64, y as f64) - centroid).norm())
        .sum::<f64>()
        / outline.len() as f64;
    Some(fraction * mean)
}

/// Adds the Outer band: every non-Inner pixel within `radius` of an Inner
/// pixel, seeded with the depth of its nearest Inner pixel (ties go to the
/// first in row-major order).
pub fn extrapolate_outer(inner: &InnerRegion, fraction: f64) -> Result<CoarseRegion> {
    let radius = extrapolation_radius(&inner.mask, fraction)
        .ok_or_else(|| Error::InvalidArgument("inner region is empty".into()))?;
    let (w, h) = inner.mask.dims();
    let mut mask = inner.mask.clone();
    let mut center = inner.depth.clone();
    // Nearest Inner pixels of non-Inner pixels always lie on the Inner edge.
    let edge: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| {
            *inner.mask.get(x, y) == Region::Inner
                && NEIGHBORS4.iter().any(|&(dx, dy)| {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    inner.mask.contains(nx, ny) && *inner.mask.get(nx as usize, ny as usize) != Region::Inner
                })
        })
        .collect();
    let reach = radius.floor() as i64;
    let r2 = radius * radius;
    // (squared distance, inner index) of the best Inner pixel per pixel.
    let mut best: Raster<Option<(i64, usize)>> = Raster::new(w, h, None);
    for &(ex, ey) in &edge {
        let e_idx = inner.mask.index(ex, ey);
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let d2 = dx * dx + dy * dy;
                if d2 as f64 > r2 {
                    continue;
                }
                let (nx, ny) = (ex as i64 + dx, ey as i64 + dy);
                if !inner.mask.contains(nx, ny) {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if *inner.mask.get(nx, ny) == Region::Inner {
                    continue;
                }
                let slot = best.get_mut(nx, ny);
                if slot.is_none_or(|(bd, bi)| (d2, e_idx) < (bd, bi)) {
                    *slot = Some((d2, e_idx));
                }
            }
        }
    }
    for y in 0..h {
        for x in 0..w {
            if let Some((_, idx)) = *best.get(x, y) {
                let (ix, iy) = inner.mask.coords(idx);
                mask.set(x, y, Region::Outer);
                center.set(x, y, *inner.depth.get(ix, iy));
            }
        }
    }
    Ok(CoarseRegion { mask, center, radius })
}

/// Depth hypotheses of one pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelLabels {
    pub region: Region,
    pub center: f64,
    pub tolerance: f64,
    /// Strictly increasing candidate depths.
    pub depths: Vec<f64>,
}

/// Per-pixel candidate depths of one object in one view plus the shared
/// label numbering.
///
/// Label `l` denotes a nominal offset along the ray from the pixel's center
/// depth (`offsets[l]`); label `unknown()` is the unknown label. Inner pixels
/// admit `inner_labels`, Outer pixels `outer_labels`, both in ascending
/// depth order.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthLabelSet {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Option<PixelLabels>>,
    pub offsets: Vec<f64>,
    pub inner_labels: Vec<usize>,
    pub outer_labels: Vec<usize>,
    pub inner_step: f64,
    pub outer_step: f64,
    /// Pixels dropped because their center depth was not positive.
    pub dropped: usize,
    /// Pixels whose lowest candidate had to be clamped in front of the camera.
    pub clamped: usize,
}

impl DepthLabelSet {
    pub fn unknown(&self) -> usize {
        self.offsets.len()
    }

    pub fn num_labels(&self) -> usize {
        self.offsets.len() + 1
    }

    fn rank_table(&self, region: Region) -> &[usize] {
        match region {
            Region::Inner => &self.inner_labels,
            Region::Outer => &self.outer_labels,
            Region::Outside => &[],
        }
    }

    /// Whether `label` may be assigned at pixel index `p`.
    pub fn admissible(&self, p: usize, label: usize) -> bool {
        match &self.pixels[p] {
            None => false,
            Some(px) => label == self.unknown() || self.rank_table(px.region).contains(&label),
        }
    }

    /// Depth of `label` at pixel index `p`; `None` for the unknown label or
    /// an inadmissible one.
    pub fn depth(&self, p: usize, label: usize) -> Option<f64> {
        let px = self.pixels[p].as_ref()?;
        let rank = self.rank_table(px.region).iter().position(|&l| l == label)?;
        Some(px.depths[rank])
    }

    /// Pixel indices carrying labels, in row-major order.
    pub fn domain(&self) -> Vec<usize> {
        (0..self.pixels.len()).filter(|&p| self.pixels[p].is_some()).collect()
    }

    /// Label whose depth is nearest the pixel's center.
    pub fn center_label(&self, p: usize) -> Option<usize> {
        let px = self.pixels[p].as_ref()?;
        let table = self.rank_table(px.region);
        let rank = (0..px.depths.len()).min_by(|&a, &b| {
            (px.depths[a] - px.center)
                .abs()
                .total_cmp(&(px.depths[b] - px.center).abs())
        })?;
        Some(table[rank])
    }

    /// Smoothness truncation: `steps` inner sampling steps.
    pub fn d_max(&self, steps: f64) -> f64 {
        steps * self.inner_step
    }

    pub fn region_mask(&self) -> RegionMask {
        Raster::from_vec(
            self.width,
            self.height,
            self.pixels
                .iter()
                .map(|p| p.as_ref().map_or(Region::Outside, |p| p.region))
                .collect(),
        )
        .expect("pixel vector matches dimensions")
    }
}

fn nominal_offsets(tolerance: f64, n: usize) -> Vec<f64> {
    let step = 2.0 * tolerance / (n - 1) as f64;
    (0..n)
        .map(|i| {
            if i + 1 == n {
                tolerance
            } else {
                -tolerance + step * i as f64
            }
        })
        .collect()
}

/// Candidate depths around the coarse surface: Inner pixels sample
/// `labels_inner` depths within half the outer tolerance, Outer pixels
/// sample `labels_outer` depths within the full outer tolerance.
pub fn build_depth_labels(
    region: &CoarseRegion,
    capture: &CaptureVolume,
    labels_inner: usize,
    labels_outer: usize,
) -> Result<DepthLabelSet> {
    build_depth_labels_with_tolerance(region, capture.outer_tolerance(), labels_inner, labels_outer)
}

/// As [`build_depth_labels`] with an explicit Outer tolerance; Inner pixels
/// use half of it.
pub fn build_depth_labels_with_tolerance(
    region: &CoarseRegion,
    tol_outer: f64,
    labels_inner: usize,
    labels_outer: usize,
) -> Result<DepthLabelSet> {
    if !(tol_outer > 0.0) || !tol_outer.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "outer tolerance must be positive, got {tol_outer}"
        )));
    }
    if labels_inner < 2 || labels_inner >= labels_outer {
        return Err(Error::config(
            "labels_inner",
            format!("need 2 <= labels_inner < labels_outer, got {labels_inner} and {labels_outer}"),
        ));
    }
    region.mask.same_dims(&region.center)?;
    let tol_inner = tol_outer / 2.0;
    let inner_offsets = nominal_offsets(tol_inner, labels_inner);
    let outer_offsets = nominal_offsets(tol_outer, labels_outer);

    // Merge both offset lists; offsets closer than a tiny fraction of the
    // smaller step are the same label.
    let merge_eps = 1e-9 * tol_outer;
    let mut offsets: Vec<f64> = inner_offsets.iter().chain(&outer_offsets).copied().collect();
    offsets.sort_by(f64::total_cmp);
    offsets.dedup_by(|a, b| (*a - *b).abs() <= merge_eps);
    let lookup = |o: f64| {
        offsets
            .iter()
            .position(|&x| (x - o).abs() <= merge_eps)
            .expect("merged offset")
    };
    let inner_labels: Vec<usize> = inner_offsets.iter().map(|&o| lookup(o)).collect();
    let outer_labels: Vec<usize> = outer_offsets.iter().map(|&o| lookup(o)).collect();

    let results: Vec<(Option<PixelLabels>, bool, bool)> = region
        .mask
        .data()
        .par_iter()
        .zip(region.center.data().par_iter())
        .map(|(&reg, &center)| {
            let (tol, n) = match reg {
                Region::Outside => return (None, false, false),
                Region::Inner => (tol_inner, labels_inner),
                Region::Outer => (tol_outer, labels_outer),
            };
            match center {
                Some(c) if c > 0.0 => match sample_ray(c, tol, n) {
                    Ok(s) => (
                        Some(PixelLabels {
                            region: reg,
                            center: c,
                            tolerance: tol,
                            depths: s.depths,
                        }),
                        false,
                        s.clamped,
                    ),
                    Err(_) => (None, true, false),
                },
                _ => (None, true, false),
            }
        })
        .collect();
    let dropped = results.iter().filter(|r| r.1).count();
    let clamped = results.iter().filter(|r| r.2).count();
    if dropped > 0 {
        log::warn!("{dropped} pixels dropped for non-positive center depth");
    }
    Ok(DepthLabelSet {
        width: region.mask.width(),
        height: region.mask.height(),
        pixels: results.into_iter().map(|r| r.0).collect(),
        offsets,
        inner_labels,
        outer_labels,
        inner_step: 2.0 * tol_inner / (labels_inner - 1) as f64,
        outer_step: 2.0 * tol_outer / (labels_outer - 1) as f64,
        dropped,
        clamped,
    })
}
