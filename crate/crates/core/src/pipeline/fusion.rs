//! Fusion of per-view depth maps into one oriented point set.

use std::collections::HashMap;

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::CameraView;
use crate::raster::DepthMap;

#[derive(Clone, Debug, PartialEq)]
pub struct OrientedPoint {
    pub position: Vector3<f64>,
    /// Unit normal facing the source camera.
    pub normal: Vector3<f64>,
    pub view: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FusedModel {
    pub points: Vec<OrientedPoint>,
    /// Triangles over `points`, present when requested.
    pub mesh: Option<Vec<[usize; 3]>>,
}

impl FusedModel {
    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.points.iter().map(|p| p.position).collect()
    }

    pub fn normals(&self) -> Vec<Vector3<f64>> {
        self.points.iter().map(|p| p.normal).collect()
    }
}

/// Hash grid that keeps the first point of every merge neighbourhood.
struct MergeGrid {
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl MergeGrid {
    fn key(&self, p: &Vector3<f64>) -> [i64; 3] {
        [
            (p.x / self.cell).floor() as i64,
            (p.y / self.cell).floor() as i64,
            (p.z / self.cell).floor() as i64,
        ]
    }

    fn find(&self, p: &Vector3<f64>, points: &[OrientedPoint], radius: f64) -> Option<usize> {
        let k = self.key(p);
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(ids) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) else {
                        continue;
                    };
                    for &i in ids {
                        let d = (points[i].position - p).norm();
                        if d < radius && best.is_none_or(|(bd, _)| d < bd) {
                            best = Some((d, i));
                        }
                    }
                }
            }
        }
        best.map(|b| b.1)
    }

    fn insert(&mut self, p: &Vector3<f64>, index: usize) {
        let k = self.key(p);
        self.cells.entry(k).or_default().push(index);
    }
}

fn pixel_normal(cam: &CameraView, map: &DepthMap, x: usize, y: usize, at: &Vector3<f64>) -> Vector3<f64> {
    let point = |x: i64, y: i64| -> Option<Vector3<f64>> {
        if !map.contains(x, y) {
            return None;
        }
        let d = (*map.get(x as usize, y as usize))?;
        cam.backproject(&Vector2::new(x as f64, y as f64), d).ok()
    };
    let (xi, yi) = (x as i64, y as i64);
    let du = point(xi + 1, yi)
        .map(|q| q - at)
        .or_else(|| point(xi - 1, yi).map(|q| at - q));
    let dv = point(xi, yi + 1)
        .map(|q| q - at)
        .or_else(|| point(xi, yi - 1).map(|q| at - q));
    let toward_camera = (cam.center() - at).normalize();
    let n = match (du, dv) {
        (Some(a), Some(b)) => a.cross(&b).try_normalize(1e-15),
        _ => None,
    }
    .unwrap_or(toward_camera);
    if n.dot(&toward_camera) < 0.0 {
        -n
    } else {
        n
    }
}

/// Backprojects every non-unknown pixel, estimates normals from neighbouring
/// pixels and merges points closer than `merge_radius` into the first one
/// seen. With `with_mesh`, each view's pixel grid is triangulated and the
/// triangles are stitched through the merge.
pub fn fuse(views: &[(&CameraView, &DepthMap)], merge_radius: f64, with_mesh: bool) -> Result<FusedModel> {
    if views.iter().all(|(_, m)| m.data().iter().all(Option::is_none)) {
        return Err(Error::EmptyDepthMaps);
    }
    for (cam, map) in views {
        if map.dims() != (cam.width, cam.height) {
            return Err(Error::DimensionMismatch(
                map.width(),
                map.height(),
                cam.width,
                cam.height,
            ));
        }
    }
    let mut grid = MergeGrid {
        cell: merge_radius.max(1e-12),
        cells: HashMap::new(),
    };
    let mut points: Vec<OrientedPoint> = Vec::new();
    let mut faces = Vec::new();
    for (cam, map) in views {
        let mut index_of: Vec<Option<usize>> = vec![None; map.len()];
        for y in 0..map.height() {
            for x in 0..map.width() {
                let Some(d) = *map.get(x, y) else { continue };
                let position = cam.backproject(&Vector2::new(x as f64, y as f64), d)?;
                let idx = match (merge_radius > 0.0)
                    .then(|| grid.find(&position, &points, merge_radius))
                    .flatten()
                {
                    Some(existing) => existing,
                    None => {
                        let normal = pixel_normal(cam, map, x, y, &position);
                        points.push(OrientedPoint {
                            position,
                            normal,
                            view: cam.id,
                        });
                        grid.insert(&position, points.len() - 1);
                        points.len() - 1
                    }
                };
                index_of[map.index(x, y)] = Some(idx);
            }
        }
        if with_mesh {
            let w = map.width();
            for y in 0..map.height().saturating_sub(1) {
                for x in 0..w.saturating_sub(1) {
                    let q = [y * w + x, y * w + x + 1, (y + 1) * w + x, (y + 1) * w + x + 1].map(|i| index_of[i]);
                    for tri in [[q[0], q[2], q[1]], [q[1], q[2], q[3]]] {
                        if let [Some(a), Some(b), Some(c)] = tri {
                            if a != b && b != c && a != c {
                                faces.push([a, b, c]);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(FusedModel {
        points,
        mesh: with_mesh.then_some(faces),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Raster;

    fn cam(id: usize, eye: Vector3<f64>) -> CameraView {
        CameraView::look_at(id, eye, eye + Vector3::new(0.0, 0.0, 1.0), -Vector3::y(), 100.0, 32, 32).unwrap()
    }

    #[test]
    fn fronto_parallel_plane() {
        let c = cam(0, Vector3::zeros());
        let map = Raster::new(32, 32, Some(2.0));
        let model = fuse(&[(&c, &map)], 0.0, false).unwrap();
        assert_eq!(model.points.len(), 32 * 32);
        let axis = c.axis();
        for p in &model.points {
            assert!((c.to_camera(&p.position).z - 2.0).abs() < 1e-9);
            assert!((p.normal.norm() - 1.0).abs() < 1e-12);
            assert!(p.normal.angle(&-axis).to_degrees() < 1.0);
        }
    }

    #[test]
    fn duplicate_views_merge() {
        let a = cam(0, Vector3::zeros());
        let b = cam(1, Vector3::new(0.001, 0.0, 0.0));
        let map = Raster::new(32, 32, Some(2.0));
        let model = fuse(&[(&a, &map), (&b, &map)], 0.01, true).unwrap();
        assert!(model.points.len() < 2 * 32 * 32);
        let mesh = model.mesh.unwrap();
        assert!(!mesh.is_empty());
        assert!(mesh.iter().flatten().all(|&i| i < model.points.len()));
    }

    #[test]
    fn empty_maps_fail() {
        let c = cam(0, Vector3::zeros());
        let map: DepthMap = Raster::new(32, 32, None);
        assert!(matches!(fuse(&[(&c, &map)], 0.01, false), Err(Error::EmptyDepthMaps)));
        assert!(matches!(fuse(&[], 0.01, false), Err(Error::EmptyDepthMaps)));
    }

    #[test]
    fn count_bounded_by_valid_pixels() {
        let c = cam(0, Vector3::zeros());
        let map = Raster::from_fn(32, 32, |x, y| {
            ((x * 7 + y * 3) % 5 != 0).then_some(1.5 + 0.01 * x as f64)
        });
        let valid = map.data().iter().filter(|d| d.is_some()).count();
        for r in [0.0, 0.005, 0.05] {
            let model = fuse(&[(&c, &map), (&c, &map)], r, false).unwrap();
            assert!(model.points.len() <= 2 * valid);
        }
    }
}
