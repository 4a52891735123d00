//! Sparse scene cloud: statistical cleaning, Euclidean flood-fill clustering,
//! block-matching flow and flow-based motion labelling with persistent ids.

use std::collections::HashMap;

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::CameraView;
use crate::raster::{GrayImage, Mask, Raster};

/// Sighting of a sparse point in one camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub camera: usize,
    pub pixel: Vector2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparsePoint {
    pub position: Vector3<f64>,
    pub observations: Vec<Observation>,
}

impl SparsePoint {
    pub fn observation(&self, camera: usize) -> Option<&Observation> {
        self.observations.iter().find(|o| o.camera == camera)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseCloud {
    pub points: Vec<SparsePoint>,
}

impl SparseCloud {
    pub fn new(points: Vec<SparsePoint>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.points.iter().map(|p| p.position).collect()
    }

    /// Checks that every point has two or more observations, all inside
    /// their camera's image.
    pub fn validate(&self, cameras: &[CameraView]) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if p.observations.len() < 2 {
                return Err(Error::Dataset(format!(
                    "sparse point {i} has {} observations, need 2",
                    p.observations.len()
                )));
            }
            for o in &p.observations {
                let cam = cameras.iter().find(|c| c.id == o.camera).ok_or_else(|| {
                    Error::Dataset(format!("sparse point {i} observed by unknown camera {}", o.camera))
                })?;
                if !cam.contains(&o.pixel) {
                    return Err(Error::Dataset(format!(
                        "sparse point {i} observed outside camera {} at ({}, {})",
                        o.camera, o.pixel.x, o.pixel.y
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> SparseCloud {
        SparseCloud {
            points: indices.iter().map(|&i| self.points[i].clone()).collect(),
        }
    }
}

/// Uniform voxel hash used as the spatial index for radius queries. With the
/// leaf size equal to the query radius only the 27 surrounding cells need to
/// be visited.
#[derive(Clone, Debug)]
pub struct VoxelGrid {
    leaf: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl VoxelGrid {
    pub fn new(points: &[Vector3<f64>], leaf: f64) -> Self {
        assert!(leaf > 0.0, "voxel leaf size must be positive");
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key_for(p, leaf)).or_default().push(i);
        }
        Self { leaf, cells }
    }

    fn key_for(p: &Vector3<f64>, leaf: f64) -> [i64; 3] {
        [
            (p.x / leaf).floor() as i64,
            (p.y / leaf).floor() as i64,
            (p.z / leaf).floor() as i64,
        ]
    }

    /// Indices of points within `radius <= leaf` of `center` (inclusive).
    pub fn neighbors(&self, points: &[Vector3<f64>], center: &Vector3<f64>, radius: f64) -> Vec<usize> {
        debug_assert!(radius <= self.leaf);
        let k = Self::key_for(center, self.leaf);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(cell) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        out.extend(cell.iter().copied().filter(|&j| (points[j] - center).norm() <= radius));
                    }
                }
            }
        }
        out
    }
}

/// Mean distance from every point to its `k` nearest other points, with the
/// distances summed in ascending order.
pub fn knn_mean_distances(points: &[Vector3<f64>], k: usize) -> Vec<f64> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| (q - p).norm())
                .collect();
            d.select_nth_unstable_by(k - 1, f64::total_cmp);
            let mut nearest = d[..k].to_vec();
            nearest.sort_by(f64::total_cmp);
            nearest.iter().sum::<f64>() / k as f64
        })
        .collect()
}

/// Keep-mask of the statistical outlier filter: point `i` survives iff its
/// k-NN mean distance is at most `μ + α·σ` (σ is the sample deviation).
pub fn outlier_mask(points: &[Vector3<f64>], k: usize, alpha: f64) -> Result<Vec<bool>> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "outlier neighbour count must be positive".into(),
        ));
    }
    if points.len() <= k {
        return Err(Error::TooFewPoints {
            needed: k,
            got: points.len(),
        });
    }
    let stats = knn_mean_distances(points, k);
    let n = stats.len() as f64;
    let mean = stats.iter().sum::<f64>() / n;
    let var = stats.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    let threshold = mean + alpha * var.sqrt();
    Ok(stats.iter().map(|&s| s <= threshold).collect())
}

/// Statistical outlier removal. Returns the cleaned cloud and the original
/// indices of the surviving points.
pub fn remove_outliers(cloud: &SparseCloud, k: usize, alpha: f64) -> Result<(SparseCloud, Vec<usize>)> {
    let keep = outlier_mask(&cloud.positions(), k, alpha)?;
    let kept: Vec<usize> = (0..cloud.len()).filter(|&i| keep[i]).collect();
    Ok((cloud.subset(&kept), kept))
}

/// Median distance from each point to its nearest neighbour.
pub fn median_nn_distance(points: &[Vector3<f64>]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let mut d = knn_mean_distances(points, 1);
    d.sort_by(f64::total_cmp);
    let n = d.len();
    Some(if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    })
}

/// Group of sparse points believed to belong to one object.
#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    /// Indices into the cloud, ascending.
    pub members: Vec<usize>,
    pub id: u32,
    pub dynamic: bool,
    /// The previous frame's reconstruction of this object may be reused.
    pub reuse: bool,
    pub best_view: Option<usize>,
}

/// Connected components of the graph joining points at distance
/// `<= dist_threshold`, discarding components smaller than `min_size`.
/// Clusters are ordered by their smallest member and numbered from 0.
pub fn flood_fill_cluster(points: &[Vector3<f64>], dist_threshold: f64, min_size: usize) -> Result<Vec<Cluster>> {
    if !(dist_threshold > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cluster distance must be positive, got {dist_threshold}"
        )));
    }
    let grid = VoxelGrid::new(points, dist_threshold);
    let mut visited = vec![false; points.len()];
    let mut clusters = Vec::new();
    let mut stack = Vec::new();
    for seed in 0..points.len() {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        stack.push(seed);
        let mut members = Vec::new();
        while let Some(i) = stack.pop() {
            members.push(i);
            for j in grid.neighbors(points, &points[i], dist_threshold) {
                if !visited[j] {
                    visited[j] = true;
                    stack.push(j);
                }
            }
        }
        if members.len() >= min_size.max(1) {
            members.sort_unstable();
            clusters.push(Cluster {
                members,
                id: clusters.len() as u32,
                dynamic: false,
                reuse: false,
                best_view: None,
            });
        }
    }
    Ok(clusters)
}

/// Per-pixel displacement field with validity.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub flow: Raster<[f64; 2]>,
    pub valid: Mask,
}

impl FlowField {
    pub fn new(flow: Raster<[f64; 2]>, valid: Mask) -> Result<Self> {
        flow.same_dims(&valid)?;
        let mut flow = flow;
        for (f, &v) in flow.data_mut().iter_mut().zip(valid.data()) {
            if !v {
                *f = [0.0, 0.0];
            }
        }
        Ok(Self { flow, valid })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            flow: Raster::new(width, height, [0.0, 0.0]),
            valid: Raster::new(width, height, true),
        }
    }

    /// Displacement at the pixel nearest to `p`, if valid.
    pub fn at(&self, p: &Vector2<f64>) -> Option<Vector2<f64>> {
        let x = p.x.round();
        let y = p.y.round();
        if !self.valid.contains(x as i64, y as i64) {
            return None;
        }
        let (x, y) = (x as usize, y as usize);
        if !*self.valid.get(x, y) {
            return None;
        }
        let f = self.flow.get(x, y);
        Some(Vector2::new(f[0], f[1]))
    }
}

/// Minimum standard deviation (gray levels) of a block for its match to be
/// trusted.
pub const FLOW_MIN_CONTRAST: f32 = 2.0;

/// Block-matching flow from `a` to `b`: each pixel whose `block × block`
/// window and search range fit inside the image gets the integer
/// displacement within `±search` minimising the sum of absolute differences.
/// Ties prefer the smaller displacement, then row-major scan order.
pub fn compute_flow(a: &GrayImage, b: &GrayImage, block: usize, search: usize) -> Result<FlowField> {
    a.same_dims(b)?;
    if block.is_multiple_of(2) || block == 0 {
        return Err(Error::InvalidArgument(format!("flow block must be odd, got {block}")));
    }
    let (w, h) = a.dims();
    let r = (block / 2) as i64;
    let s = search as i64;
    let margin = r + s;
    let rows: Vec<Vec<([f64; 2], bool)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let (xi, yi) = (x as i64, y as i64);
                    if xi < margin || yi < margin || xi + margin >= w as i64 || yi + margin >= h as i64 {
                        return ([0.0, 0.0], false);
                    }
                    let mut sum = 0.0f64;
                    let mut sum2 = 0.0f64;
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let v = *a.get((xi + dx) as usize, (yi + dy) as usize) as f64;
                            sum += v;
                            sum2 += v * v;
                        }
                    }
                    let n = (block * block) as f64;
                    let var = (sum2 / n - (sum / n).powi(2)).max(0.0);
                    if var.sqrt() < FLOW_MIN_CONTRAST as f64 {
                        return ([0.0, 0.0], false);
                    }
                    let mut best = (f32::INFINITY, i64::MAX, 0i64, 0i64);
                    for vy in -s..=s {
                        for vx in -s..=s {
                            let mut sad = 0.0f32;
                            for dy in -r..=r {
                                for dx in -r..=r {
                                    let pa = a.get((xi + dx) as usize, (yi + dy) as usize);
                                    let pb = b.get((xi + vx + dx) as usize, (yi + vy + dy) as usize);
                                    sad += (pa - pb).abs();
                                }
                            }
                            let mag = vx * vx + vy * vy;
                            if sad < best.0 || (sad == best.0 && mag < best.1) {
                                best = (sad, mag, vx, vy);
                            }
                        }
                    }
                    ([best.2 as f64, best.3 as f64], true)
                })
                .collect()
        })
        .collect();
    let mut flow = Raster::new(w, h, [0.0, 0.0]);
    let mut valid = Raster::new(w, h, false);
    for (y, row) in rows.into_iter().enumerate() {
        for (x, (f, v)) in row.into_iter().enumerate() {
            flow.set(x, y, f);
            valid.set(x, y, v);
        }
    }
    Ok(FlowField { flow, valid })
}

/// Camera observing the most members of `cluster`; ties go to the smaller id.
pub fn select_best_view(members: &[usize], cloud: &SparseCloud) -> Option<usize> {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &i in members {
        for o in &cloud.points[i].observations {
            *counts.entry(o.camera).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(cam, _)| cam)
}

/// Camera other than `best` sharing the most member observations with it;
/// ties go to the smaller id.
pub fn select_partner_view(members: &[usize], cloud: &SparseCloud, best: usize) -> Option<usize> {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &i in members {
        let p = &cloud.points[i];
        if p.observation(best).is_none() {
            continue;
        }
        for o in &p.observations {
            if o.camera != best {
                *counts.entry(o.camera).or_default() += 1;
            }
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(cam, _)| cam)
}

/// Image footprint of a cluster retained for matching in the next frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterFootprint {
    pub id: u32,
    pub pixels: Vec<Observation>,
}

impl ClusterFootprint {
    pub fn of(cluster: &Cluster, cloud: &SparseCloud) -> Self {
        Self {
            id: cluster.id,
            pixels: cluster
                .members
                .iter()
                .flat_map(|&i| cloud.points[i].observations.iter().copied())
                .collect(),
        }
    }
}

/// Motion-labelling parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionParams {
    /// Median flow magnitude (px) above which a cluster is dynamic.
    pub motion_threshold: f64,
    /// Pixel radius within which an advected member counts as overlapping a
    /// previous-frame observation.
    pub match_radius: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            motion_threshold: 1.0,
            match_radius: 6.0,
        }
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Median flow magnitude over the members observed in `camera`, ignoring
/// members that land on invalid flow.
pub fn median_member_flow(members: &[usize], cloud: &SparseCloud, camera: usize, flow: &FlowField) -> Option<f64> {
    let mut mags: Vec<f64> = members
        .iter()
        .filter_map(|&i| cloud.points[i].observation(camera))
        .filter_map(|o| flow.at(&o.pixel))
        .map(|f| f.norm())
        .collect();
    median(&mut mags)
}

/// Labels clusters dynamic or static and assigns persistent ids.
///
/// `flows[c]` is the flow field of camera `c` from this frame towards the
/// previous one (or towards the next one on the first frame); cameras
/// without flow leave their clusters static. Ids are carried over from
/// `previous` by greedy maximal overlap after advecting member pixels along
/// the flow; unmatched clusters get fresh ids starting at `*next_id`.
pub fn label_dynamic(
    clusters: &[Cluster],
    cloud: &SparseCloud,
    flows: &[Option<FlowField>],
    previous: &[ClusterFootprint],
    next_id: &mut u32,
    params: &MotionParams,
) -> Vec<Cluster> {
    let mut out: Vec<Cluster> = clusters
        .iter()
        .map(|c| {
            let mut c = c.clone();
            let best = c.best_view.or_else(|| select_best_view(&c.members, cloud));
            c.best_view = best;
            let moving = best
                .and_then(|v| flows.get(v).and_then(Option::as_ref))
                .and_then(|f| median_member_flow(&c.members, cloud, best.unwrap(), f))
                .is_some_and(|m| m > params.motion_threshold);
            c.dynamic = moving;
            c.reuse = !moving;
            c
        })
        .collect();

    // Overlap scores between current and previous clusters.
    let r2 = params.match_radius * params.match_radius;
    let mut scores: Vec<(usize, usize, usize)> = Vec::new();
    for (ci, c) in out.iter().enumerate() {
        for (pi, prev) in previous.iter().enumerate() {
            let mut count = 0;
            for &m in &c.members {
                let hit = cloud.points[m].observations.iter().any(|o| {
                    let Some(flow) = flows.get(o.camera).and_then(Option::as_ref) else {
                        return false;
                    };
                    let Some(d) = flow.at(&o.pixel) else {
                        return false;
                    };
                    let moved = o.pixel + d;
                    prev.pixels
                        .iter()
                        .any(|q| q.camera == o.camera && (q.pixel - moved).norm_squared() <= r2)
                });
                if hit {
                    count += 1;
                }
            }
            if count > 0 {
                scores.push((count, ci, pi));
            }
        }
    }
    scores.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assigned: Vec<Option<u32>> = vec![None; out.len()];
    let mut taken = vec![false; previous.len()];
    for (_, ci, pi) in scores {
        if assigned[ci].is_none() && !taken[pi] {
            assigned[ci] = Some(previous[pi].id);
            taken[pi] = true;
        }
    }
    for (c, id) in out.iter_mut().zip(assigned) {
        c.id = match id {
            Some(id) => id,
            None => {
                let id = *next_id;
                *next_id += 1;
                id
            }
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v3(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    fn grid27() -> Vec<Vector3<f64>> {
        let mut pts = Vec::new();
        for x in 0..3 {
            for y in 0..3 {
                for z in 0..3 {
                    pts.push(v3(x as f64 * 0.5, y as f64 * 0.5, z as f64 * 0.5));
                }
            }
        }
        pts
    }

    /// Independent statistic filter: full sort of all pairwise distances.
    fn brute_outliers(points: &[Vector3<f64>], k: usize, alpha: f64) -> Vec<bool> {
        let stats: Vec<f64> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut d: Vec<f64> = points
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, q)| (q - p).norm())
                    .collect();
                d.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut s = 0.0;
                for v in &d[..k] {
                    s += v;
                }
                s / k as f64
            })
            .collect();
        let n = stats.len() as f64;
        let mut mean = 0.0;
        for s in &stats {
            mean += s;
        }
        mean /= n;
        let mut var = 0.0;
        for s in &stats {
            var += (s - mean) * (s - mean);
        }
        let sigma = (var / (n - 1.0)).sqrt();
        stats.iter().map(|&s| s <= mean + alpha * sigma).collect()
    }

    /// Independent connected components via union-find over all pairs.
    fn brute_components(points: &[Vector3<f64>], t: f64, min_size: usize) -> Vec<Vec<usize>> {
        let n = points.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            p[i] = r;
            r
        }
        for i in 0..n {
            for j in i + 1..n {
                if (points[i] - points[j]).norm() <= t {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        let mut out: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() >= min_size.max(1)).collect();
        out.sort();
        out
    }

    #[test]
    fn far_point_is_the_only_outlier() {
        let mut pts = grid27();
        pts.push(v3(100.0, 0.0, 0.0));
        let keep = outlier_mask(&pts, 4, 1.0).unwrap();
        assert_eq!(keep.iter().filter(|k| !**k).count(), 1);
        assert!(!keep[27]);
        assert_eq!(keep, brute_outliers(&pts, 4, 1.0));
    }

    #[test]
    fn symmetric_cloud_keeps_everything() {
        // Cube corners: every point has identical neighbour distances.
        let pts: Vec<_> = (0..8)
            .map(|i| {
                v3(
                    (i & 1) as f64 * 2.0,
                    (i >> 1 & 1) as f64 * 2.0,
                    (i >> 2 & 1) as f64 * 2.0,
                )
            })
            .collect();
        assert!(outlier_mask(&pts, 4, 1.0).unwrap().iter().all(|&k| k));
    }

    #[test]
    fn too_small_cloud_is_an_error() {
        let pts = vec![v3(0.0, 0.0, 0.0); 4];
        assert!(matches!(outlier_mask(&pts, 4, 1.0), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn two_blobs_make_two_clusters() {
        let t = 0.1;
        let mut pts = Vec::new();
        for i in 0..10 {
            pts.push(v3(i as f64 * 0.05, 0.0, 0.0));
            pts.push(v3(0.45 + 5.0 * t + i as f64 * 0.05, 0.0, 0.0));
        }
        let clusters = flood_fill_cluster(&pts, t, 1).unwrap();
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].members.len(), 10);
    }

    #[test]
    fn chain_below_threshold_is_one_cluster() {
        let pts: Vec<_> = (0..30).map(|i| v3(i as f64 * 0.9, 0.0, 0.0)).collect();
        assert_eq!(flood_fill_cluster(&pts, 1.0, 1).unwrap().len(), 1);
    }

    #[test]
    fn small_blobs_are_discarded() {
        let pts = vec![v3(0.0, 0.0, 0.0), v3(0.1, 0.0, 0.0)];
        assert!(flood_fill_cluster(&pts, 1.0, 3).unwrap().is_empty());
    }

    fn cloud_strategy() -> impl Strategy<Value = Vec<Vector3<f64>>> {
        proptest::collection::vec((0u32..40, 0u32..40, 0u32..40), 6..200).prop_map(|v| {
            v.into_iter()
                .map(|(x, y, z)| v3(x as f64 * 0.25, y as f64 * 0.25, z as f64 * 0.25))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn clustering_matches_brute_force(pts in cloud_strategy(), t in 0.2f64..2.0, min_size in 1usize..5) {
            let ours: Vec<Vec<usize>> = flood_fill_cluster(&pts, t, min_size).unwrap()
                .into_iter().map(|c| c.members).collect();
            prop_assert_eq!(ours, brute_components(&pts, t, min_size));
        }

        #[test]
        fn outlier_filter_matches_brute_force(pts in cloud_strategy(), k in 1usize..6, alpha in 0.0f64..3.0) {
            prop_assert_eq!(outlier_mask(&pts, k, alpha).unwrap(), brute_outliers(&pts, k, alpha));
        }
    }

    fn textured(w: usize, h: usize) -> GrayImage {
        // Deterministic hash texture, periodic with period w in x.
        Raster::from_fn(w, h, |x, y| {
            let v = ((x as u64 * 2654435761) ^ (y as u64 * 40503)).wrapping_mul(2246822519) >> 7;
            (v % 256) as f32
        })
    }

    #[test]
    fn identical_images_have_zero_flow() {
        let img = textured(32, 32);
        let f = compute_flow(&img, &img, 5, 3).unwrap();
        assert!(f.valid.count() > 0);
        for (d, v) in f.flow.data().iter().zip(f.valid.data()) {
            if *v {
                assert_eq!(*d, [0.0, 0.0]);
            }
        }
    }

    #[test]
    fn translated_texture_gives_uniform_flow() {
        let a = textured(40, 40);
        let b = Raster::from_fn(40, 40, |x, y| *a.get((x + 40 - 3) % 40, y));
        let f = compute_flow(&a, &b, 5, 4).unwrap();
        assert!(f.valid.count() > 0);
        for (d, v) in f.flow.data().iter().zip(f.valid.data()) {
            if *v {
                assert_eq!(*d, [3.0, 0.0]);
            }
        }
    }

    #[test]
    fn flat_images_have_no_valid_flow() {
        let img = Raster::new(20, 20, 80.0f32);
        assert_eq!(compute_flow(&img, &img, 5, 2).unwrap().valid.count(), 0);
    }

    fn obs(camera: usize, x: f64, y: f64) -> Observation {
        Observation {
            camera,
            pixel: Vector2::new(x, y),
        }
    }

    #[test]
    fn best_view_counts_and_ties() {
        let mut points = Vec::new();
        for i in 0..10 {
            let mut o = vec![obs(0, i as f64, 0.0)];
            if i < 7 {
                o.push(obs(1, i as f64, 1.0));
            }
            points.push(SparsePoint {
                position: Vector3::zeros(),
                observations: o,
            });
        }
        let cloud = SparseCloud::new(points);
        let all: Vec<usize> = (0..10).collect();
        assert_eq!(select_best_view(&all, &cloud), Some(0));
        assert_eq!(select_best_view(&all[..7], &cloud), Some(0));
        let single = SparseCloud::new(vec![SparsePoint {
            position: Vector3::zeros(),
            observations: vec![obs(2, 1.0, 1.0)],
        }]);
        assert_eq!(select_best_view(&[0], &single), Some(2));
    }

    fn cluster_of(members: Vec<usize>) -> Cluster {
        Cluster {
            members,
            id: 0,
            dynamic: false,
            reuse: false,
            best_view: None,
        }
    }

    #[test]
    fn motion_threshold_and_identity_carry_over() {
        // Ten members seen by cameras 0 and 1, each moving 5 px along x.
        let points: Vec<_> = (0..10)
            .map(|i| SparsePoint {
                position: Vector3::zeros(),
                observations: vec![obs(0, 10.0 + i as f64, 10.0), obs(1, 10.0, 10.0 + i as f64)],
            })
            .collect();
        let cloud = SparseCloud::new(points);
        let mut moving = FlowField::zeros(64, 64);
        for d in moving.flow.data_mut() {
            *d = [-5.0, 0.0];
        }
        let flows = vec![Some(moving), Some(FlowField::zeros(64, 64))];
        // Previous footprint: 9 of the 10 members' positions 5 px to the left.
        let previous = vec![
            ClusterFootprint {
                id: 7,
                pixels: (0..9).map(|i| obs(0, 5.0 + i as f64, 10.0)).collect(),
            },
            ClusterFootprint {
                id: 3,
                pixels: vec![obs(0, 60.0, 60.0)],
            },
        ];
        let mut next_id = 8;
        let out = label_dynamic(
            &[cluster_of((0..10).collect())],
            &cloud,
            &flows,
            &previous,
            &mut next_id,
            &MotionParams::default(),
        );
        assert!(out[0].dynamic && !out[0].reuse);
        assert_eq!(out[0].best_view, Some(0));
        assert_eq!(out[0].id, 7);
        assert_eq!(next_id, 8);

        let still = vec![Some(FlowField::zeros(64, 64)), Some(FlowField::zeros(64, 64))];
        let out = label_dynamic(
            &[cluster_of((0..10).collect())],
            &cloud,
            &still,
            &[],
            &mut next_id,
            &MotionParams::default(),
        );
        assert!(!out[0].dynamic && out[0].reuse);
        assert_eq!(out[0].id, 8);
        assert_eq!(next_id, 9);
    }

    #[test]
    fn persistent_ids_are_injective() {
        let points: Vec<_> = (0..4)
            .map(|i| SparsePoint {
                position: Vector3::zeros(),
                observations: vec![obs(0, 10.0 + i as f64, 10.0), obs(1, 1.0, 1.0)],
            })
            .collect();
        let cloud = SparseCloud::new(points);
        let flows = vec![Some(FlowField::zeros(32, 32)), None];
        let previous = vec![ClusterFootprint {
            id: 1,
            pixels: vec![obs(0, 11.0, 10.0)],
        }];
        let mut next_id = 2;
        let out = label_dynamic(
            &[cluster_of(vec![0, 1]), cluster_of(vec![2, 3])],
            &cloud,
            &flows,
            &previous,
            &mut next_id,
            &MotionParams::default(),
        );
        assert_ne!(out[0].id, out[1].id);
        assert!(out.iter().any(|c| c.id == 1));
    }
}
