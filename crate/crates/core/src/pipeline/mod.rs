//! Per-frame and per-sequence orchestration, fusion, evaluation and
//! synthetic data.

pub mod fusion;
pub mod metrics;
pub mod synth;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use log::{debug, info, warn};
use rayon::prelude::*;

pub use fusion::{fuse, FusedModel, OrientedPoint};
pub use metrics::{median_depth_error, seg_metrics, SegMetrics};
pub use synth::{generate_synthetic, load_scene_spec, parse_scene_spec, render_synthetic, SceneSpec, SyntheticData};

use crate::coarse::{
    build_depth_labels_with_tolerance, build_inner_region, extrapolate_outer, scene_median_edge, triangle_pairs,
    CaptureVolume, RegionMask,
};
use crate::energy::{bilateral_filter, data_costs, AuxView, DepthMrf, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::geometry::CameraView;
use crate::io::{self, DatasetManifest, PipelineConfig};
use crate::raster::{to_gray, ColorImage, DepthMap, GrayImage, Mask, Raster};
use crate::solver::{minimize, Labeling};
use crate::sparse::{
    compute_flow, flood_fill_cluster, label_dynamic, median_nn_distance, remove_outliers, select_partner_view, Cluster,
    ClusterFootprint, FlowField, MotionParams, SparseCloud,
};

/// Refined depth and mask of one object in one view.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewResult {
    pub camera: usize,
    pub depth: DepthMap,
    /// `mask(p)` iff `depth(p)` is known.
    pub mask: Mask,
    pub region: RegionMask,
    /// Energy before the first sweep and after every sweep.
    pub energy_trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub truncations: usize,
    pub inner_step: f64,
    pub breakdown: EnergyBreakdown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectResult {
    pub id: u32,
    pub views: Vec<ViewResult>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameStatus {
    Ok,
    /// No cluster moved; only retained results, if any.
    NoMotion,
    /// Some object or view was skipped.
    Degraded,
}

impl FrameStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            FrameStatus::Ok => "ok",
            FrameStatus::NoMotion => "no motion",
            FrameStatus::Degraded => "degraded",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameResult {
    pub frame: usize,
    pub status: FrameStatus,
    /// Objects in ascending id order.
    pub objects: Vec<ObjectResult>,
    /// Ids of static objects whose previous result was retained.
    pub reused: Vec<u32>,
    pub diagnostics: Vec<String>,
}

impl FrameResult {
    pub fn object(&self, id: u32) -> Option<&ObjectResult> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Union of all object masks in `camera`.
    pub fn view_mask(&self, camera: &CameraView) -> Mask {
        let mut mask = Raster::new(camera.width, camera.height, false);
        for v in self
            .objects
            .iter()
            .flat_map(|o| &o.views)
            .filter(|v| v.camera == camera.id)
        {
            for (m, &b) in mask.data_mut().iter_mut().zip(v.mask.data()) {
                *m |= b;
            }
        }
        mask
    }

    /// Nearest object depth per pixel of `camera`.
    pub fn view_depth(&self, camera: &CameraView) -> DepthMap {
        let mut depth: DepthMap = Raster::new(camera.width, camera.height, None);
        for v in self
            .objects
            .iter()
            .flat_map(|o| &o.views)
            .filter(|v| v.camera == camera.id)
        {
            for (d, &n) in depth.data_mut().iter_mut().zip(v.depth.data()) {
                if let Some(n) = n {
                    if d.is_none_or(|d| n < d) {
                        *d = Some(n);
                    }
                }
            }
        }
        depth
    }
}

/// Temporal state carried from one frame to the next.
#[derive(Clone, Debug, Default)]
pub struct SequenceState {
    pub footprints: Vec<ClusterFootprint>,
    pub next_id: u32,
    pub objects: HashMap<u32, ObjectResult>,
}

/// Everything `reconstruct_frame` reads for one frame.
#[derive(Clone, Debug)]
pub struct FrameInput {
    pub cameras: Vec<CameraView>,
    /// Colour image per camera, in camera order.
    pub images: Vec<ColorImage>,
    pub matches: SparseCloud,
    /// Flow per camera towards the previous frame; `None` where unknown.
    pub flows: Vec<Option<FlowField>>,
}

impl FrameInput {
    /// Loads frame `t`, computing block-matching flow where no flow file exists.
    pub fn load(manifest: &DatasetManifest, t: usize, config: &PipelineConfig) -> Result<Self> {
        let cameras = manifest.cameras()?;
        let images = manifest.load_frame(t)?;
        let matches = manifest
            .load_matches(t)?
            .ok_or_else(|| Error::Dataset(format!("no sparse matches for frame {t}")))?;
        let mut flows = manifest.load_flows(t)?;
        if flows.iter().any(Option::is_none) && manifest.frame_count > 1 {
            let other = if t == 0 { 1 } else { t - 1 };
            let other_images = manifest.load_frame(other)?;
            for (c, slot) in flows.iter_mut().enumerate() {
                if slot.is_none() {
                    *slot = Some(compute_flow(
                        &to_gray(&images[c]),
                        &to_gray(&other_images[c]),
                        config.flow_block,
                        config.flow_search,
                    )?);
                }
            }
        }
        Ok(Self {
            cameras,
            images,
            matches,
            flows,
        })
    }
}

/// Per-frame data shared by all object reconstructions.
struct FrameContext<'a> {
    cameras: &'a [CameraView],
    gray: Vec<GrayImage>,
    filtered: Vec<Option<ColorImage>>,
    cloud: &'a SparseCloud,
    median_edges: Vec<Option<f64>>,
    capture: CaptureVolume,
    config: &'a PipelineConfig,
}

impl FrameContext<'_> {
    fn index_of(&self, camera: usize) -> Option<usize> {
        self.cameras.iter().position(|c| c.id == camera)
    }
}

fn coarse_error(cluster: u32, view: usize, reason: impl std::fmt::Display) -> Error {
    Error::CoarseInit {
        cluster,
        view,
        reason: reason.to_string(),
    }
}

fn reconstruct_view(ctx: &FrameContext<'_>, cluster: &Cluster, vi: usize) -> Result<ViewResult> {
    let cam = &ctx.cameras[vi];
    let cfg = ctx.config;
    let fail = |reason: String| coarse_error(cluster.id, cam.id, reason);
    let partner_id =
        select_partner_view(&cluster.members, ctx.cloud, cam.id).ok_or_else(|| fail("no partner view".into()))?;
    let partner = &ctx.cameras[ctx
        .index_of(partner_id)
        .ok_or_else(|| fail(format!("unknown camera {partner_id}")))?];
    let max_edge = ctx.median_edges[vi].ok_or_else(|| fail("no triangulation in this view".into()))?;
    let pairs = triangle_pairs(&cluster.members, ctx.cloud, cam, partner, max_edge).map_err(|e| fail(e.to_string()))?;
    let inner = build_inner_region(cam, partner, &pairs);
    if inner.inner_count() == 0 {
        return Err(fail("empty inner region".into()));
    }
    let coarse = extrapolate_outer(&inner, cfg.extrap_percent / 100.0)?;
    let tol_outer = ctx.capture.diagonal() * cfg.volume_percent_outer / 100.0;
    let labels = build_depth_labels_with_tolerance(&coarse, tol_outer, cfg.labels_inner, cfg.labels_outer)?;
    let aux: Vec<AuxView<'_>> = ctx
        .cameras
        .iter()
        .zip(&ctx.gray)
        .enumerate()
        .filter(|&(i, _)| i != vi)
        .map(|(_, (camera, image))| AuxView { camera, image })
        .collect();
    let data = data_costs(cam, &ctx.gray[vi], &aux, &labels, &cfg.energy)?;
    let filtered = ctx.filtered[vi]
        .as_ref()
        .expect("filtered image prepared for every processed view");
    let mrf = DepthMrf::new(&labels, data, filtered, &cfg.energy)?;
    let initial = Labeling::new(&mrf, mrf.center_labeling())?;
    let result = minimize(&mrf, initial, cfg.max_sweeps)?;

    let mut depth: DepthMap = Raster::new(cam.width, cam.height, None);
    for (&p, &l) in mrf.nodes.iter().zip(&result.labeling.labels) {
        depth.data_mut()[p] = labels.depth(p, l);
    }
    debug!(
        "object {} view {}: {} nodes, {} sweeps, energy {:.3} -> {:.3}",
        cluster.id,
        cam.id,
        mrf.nodes.len(),
        result.sweeps,
        result.sweep_trace[0],
        result.labeling.energy
    );
    Ok(ViewResult {
        camera: cam.id,
        mask: depth.map(Option::is_some),
        depth,
        region: labels.region_mask(),
        energy_trace: result.sweep_trace,
        sweeps: result.sweeps,
        converged: result.converged,
        truncations: result.truncations,
        inner_step: labels.inner_step,
        breakdown: mrf.breakdown(&result.labeling.labels),
    })
}

/// Views in which `cluster` can be reconstructed: at least three member
/// observations, restricted to `only` when given.
fn candidate_views(ctx: &FrameContext<'_>, cluster: &Cluster, only: Option<&[usize]>) -> Vec<usize> {
    (0..ctx.cameras.len())
        .filter(|&vi| {
            let id = ctx.cameras[vi].id;
            only.is_none_or(|o| o.contains(&id))
                && cluster
                    .members
                    .iter()
                    .filter(|&&m| ctx.cloud.points[m].observation(id).is_some())
                    .count()
                    >= 3
        })
        .collect()
}

/// Reconstructs every moving object of one frame and retains the previous
/// result of static ones. `views` restricts processing to the given camera
/// ids.
pub fn reconstruct_input(
    input: &FrameInput,
    frame: usize,
    config: &PipelineConfig,
    state: &mut SequenceState,
    views: Option<&[usize]>,
) -> Result<FrameResult> {
    config.validate()?;
    if input.images.len() != input.cameras.len() || input.flows.len() != input.cameras.len() {
        return Err(Error::InvalidArgument(
            "one image and one flow slot per camera required".into(),
        ));
    }
    input.matches.validate(&input.cameras)?;
    let (cloud, _) = remove_outliers(&input.matches, config.outlier_k, config.outlier_stddev)?;
    let positions = cloud.positions();
    let cluster_dist = match config.cluster_dist {
        Some(d) => d,
        None => {
            2.0 * median_nn_distance(&positions).ok_or(Error::TooFewPoints {
                needed: 2,
                got: positions.len(),
            })?
        }
    };
    let clusters = flood_fill_cluster(&positions, cluster_dist, config.cluster_min_size)?;

    // Flow slots are looked up by camera id.
    let max_id = input.cameras.iter().map(|c| c.id).max().unwrap_or(0);
    let mut flows_by_id: Vec<Option<FlowField>> = vec![None; max_id + 1];
    for (cam, f) in input.cameras.iter().zip(&input.flows) {
        flows_by_id[cam.id] = f.clone();
    }
    let motion = MotionParams {
        motion_threshold: config.motion_threshold,
        match_radius: config.match_radius,
    };
    let mut labeled = label_dynamic(
        &clusters,
        &cloud,
        &flows_by_id,
        &state.footprints,
        &mut state.next_id,
        &motion,
    );
    if input.flows.iter().all(Option::is_none) {
        // Without any temporal information every cluster is treated as moving.
        for c in &mut labeled {
            c.dynamic = true;
            c.reuse = false;
        }
    }
    info!(
        "frame {frame}: {} points kept, {} clusters, {} dynamic",
        cloud.len(),
        labeled.len(),
        labeled.iter().filter(|c| c.dynamic).count()
    );

    let capture = CaptureVolume::from_points(&positions)?;
    let dynamic: Vec<&Cluster> = labeled.iter().filter(|c| c.dynamic).collect();
    let gray: Vec<GrayImage> = input.images.par_iter().map(to_gray).collect();
    let mut ctx = FrameContext {
        cameras: &input.cameras,
        gray,
        filtered: vec![None; input.cameras.len()],
        cloud: &cloud,
        median_edges: Vec::new(),
        capture,
        config,
    };
    let jobs: Vec<(usize, Vec<usize>)> = dynamic
        .iter()
        .enumerate()
        .map(|(k, c)| (k, candidate_views(&ctx, c, views)))
        .collect();
    let mut needed = vec![false; input.cameras.len()];
    for (_, vs) in &jobs {
        for &v in vs {
            needed[v] = true;
        }
    }
    let e = &config.energy;
    ctx.filtered = input
        .images
        .par_iter()
        .zip(needed.par_iter())
        .map(|(img, &need)| {
            need.then(|| bilateral_filter(img, e.bilateral_sigma_spatial, e.bilateral_sigma_range))
                .transpose()
        })
        .collect::<Result<_>>()?;
    ctx.median_edges = input
        .cameras
        .par_iter()
        .zip(needed.par_iter())
        .map(|(cam, &need)| {
            if need {
                scene_median_edge(&labeled, &cloud, cam.id)
            } else {
                None
            }
        })
        .collect();

    let per_view: Vec<(usize, usize, Result<ViewResult>)> = jobs
        .par_iter()
        .flat_map(|(k, vs)| vs.par_iter().map(move |&vi| (*k, vi)))
        .map(|(k, vi)| (k, vi, reconstruct_view(&ctx, dynamic[k], vi)))
        .collect();

    let mut diagnostics = Vec::new();
    let mut by_object: BTreeMap<u32, Vec<ViewResult>> = BTreeMap::new();
    for (k, vs) in &jobs {
        if vs.is_empty() {
            diagnostics.push(format!("object {}: no view with enough observations", dynamic[*k].id));
        }
    }
    for (k, _, r) in per_view {
        match r {
            Ok(v) => by_object.entry(dynamic[k].id).or_default().push(v),
            Err(e) => {
                warn!("frame {frame}: {e}");
                diagnostics.push(e.to_string());
            }
        }
    }
    let mut objects: Vec<ObjectResult> = by_object
        .into_iter()
        .map(|(id, mut views)| {
            views.sort_by_key(|v| v.camera);
            ObjectResult { id, views }
        })
        .collect();

    let mut reused = Vec::new();
    for c in labeled.iter().filter(|c| !c.dynamic && c.reuse) {
        if let Some(prev) = state.objects.get(&c.id) {
            objects.push(prev.clone());
            reused.push(c.id);
        }
    }
    objects.sort_by_key(|o| o.id);
    reused.sort_unstable();

    let status = if !diagnostics.is_empty() {
        FrameStatus::Degraded
    } else if dynamic.is_empty() {
        FrameStatus::NoMotion
    } else {
        FrameStatus::Ok
    };
    state.footprints = labeled.iter().map(|c| ClusterFootprint::of(c, &cloud)).collect();
    state.objects = objects.iter().map(|o| (o.id, o.clone())).collect();
    Ok(FrameResult {
        frame,
        status,
        objects,
        reused,
        diagnostics,
    })
}

/// Loads frame `t` of `manifest` and reconstructs it.
pub fn reconstruct_frame(
    manifest: &DatasetManifest,
    t: usize,
    config: &PipelineConfig,
    state: &mut SequenceState,
    views: Option<&[usize]>,
) -> Result<FrameResult> {
    if t >= manifest.frame_count {
        return Err(Error::InvalidArgument(format!(
            "frame {t} out of range 0..{}",
            manifest.frame_count
        )));
    }
    let input = FrameInput::load(manifest, t, config)?;
    reconstruct_input(&input, t, config, state, views)
}

/// Ground-truth comparison of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameEvaluation {
    /// `(camera id, metrics)` for every evaluated view.
    pub per_view: Vec<(usize, SegMetrics)>,
    pub mean: SegMetrics,
    /// Median depth error over the views' true-foreground pixels.
    pub depth_error: Option<f64>,
}

/// Compares `result` against the dataset's `gt/` masks and depths. Views
/// without a ground-truth mask or with an empty one are skipped.
pub fn evaluate_frame(
    manifest: &DatasetManifest,
    result: &FrameResult,
    views: Option<&[usize]>,
) -> Result<Option<FrameEvaluation>> {
    let cameras = manifest.cameras()?;
    let gt = manifest.gt_dir();
    let t = result.frame;
    let mut per_view = Vec::new();
    let mut errors = Vec::new();
    for cam in cameras.iter().filter(|c| views.is_none_or(|v| v.contains(&c.id))) {
        let mask_path = gt.join(format!("mask_{}_{t}.png", cam.id));
        if !mask_path.is_file() {
            continue;
        }
        let gt_mask = io::read_mask(&mask_path)?;
        if gt_mask.count() == 0 {
            continue;
        }
        per_view.push((cam.id, seg_metrics(&result.view_mask(cam), &gt_mask)?));
        let depth_path = gt.join(format!("depth_{}_{t}.png16", cam.id));
        if depth_path.is_file() {
            let gt_depth = io::read_depth_map(&depth_path)?;
            let ours = result.view_depth(cam);
            for ((r, g), &m) in ours.data().iter().zip(gt_depth.data()).zip(gt_mask.data()) {
                if let (Some(r), Some(g), true) = (r, g, m) {
                    errors.push((r - g).abs());
                }
            }
        }
    }
    let Some(mean) = SegMetrics::mean(&per_view.iter().map(|v| v.1).collect::<Vec<_>>()) else {
        return Ok(None);
    };
    Ok(Some(FrameEvaluation {
        per_view,
        mean,
        depth_error: median(errors),
    }))
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Outcome of one frame within a sequence run.
#[derive(Clone, Debug)]
pub struct FrameOutcome {
    pub frame: usize,
    pub result: std::result::Result<FrameResult, String>,
    pub evaluation: Option<FrameEvaluation>,
}

impl FrameOutcome {
    pub fn degraded(&self) -> bool {
        match &self.result {
            Ok(r) => r.status == FrameStatus::Degraded,
            Err(_) => true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SequenceResult {
    pub frames: Vec<FrameOutcome>,
}

impl SequenceResult {
    pub fn any_degraded(&self) -> bool {
        self.frames.iter().any(FrameOutcome::degraded)
    }

    /// Arithmetic mean of the per-frame mean metrics.
    pub fn mean_metrics(&self) -> Option<SegMetrics> {
        let all: Vec<SegMetrics> = self
            .frames
            .iter()
            .filter_map(|f| f.evaluation.as_ref().map(|e| e.mean))
            .collect();
        SegMetrics::mean(&all)
    }

    /// Key-value report: one block of rows per frame, then the means.
    pub fn report(&self) -> Vec<(String, f64)> {
        let mut rows = Vec::new();
        let mut depth_errors = Vec::new();
        for f in &self.frames {
            let t = f.frame;
            rows.push((format!("frame_{t}_degraded"), f64::from(u8::from(f.degraded()))));
            if let Ok(r) = &f.result {
                rows.push((format!("frame_{t}_objects"), r.objects.len() as f64));
                rows.push((
                    format!("frame_{t}_no_motion"),
                    f64::from(u8::from(r.status == FrameStatus::NoMotion)),
                ));
            }
            if let Some(e) = &f.evaluation {
                rows.push((format!("frame_{t}_hit"), e.mean.hit));
                rows.push((format!("frame_{t}_bkg"), e.mean.bkg));
                rows.push((format!("frame_{t}_overlap"), e.mean.overlap));
                if let Some(d) = e.depth_error {
                    rows.push((format!("frame_{t}_depth_error"), d));
                    depth_errors.push(d);
                }
            }
        }
        if let Some(m) = self.mean_metrics() {
            rows.push(("mean_hit".into(), m.hit));
            rows.push(("mean_bkg".into(), m.bkg));
            rows.push(("mean_overlap".into(), m.overlap));
        }
        if !depth_errors.is_empty() {
            rows.push((
                "mean_depth_error".into(),
                depth_errors.iter().sum::<f64>() / depth_errors.len() as f64,
            ));
        }
        rows.push((
            "degraded_frames".into(),
            self.frames.iter().filter(|f| f.degraded()).count() as f64,
        ));
        rows
    }
}

/// Runs every frame in order, carrying temporal state; per-frame errors are
/// recorded and the run continues.
pub fn run_sequence(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
    views: Option<&[usize]>,
) -> Result<SequenceResult> {
    config.validate()?;
    let mut state = SequenceState::default();
    let mut frames = Vec::with_capacity(manifest.frame_count);
    for t in 0..manifest.frame_count {
        let outcome = match reconstruct_frame(manifest, t, config, &mut state, views) {
            Ok(r) => {
                let evaluation = evaluate_frame(manifest, &r, views)?;
                FrameOutcome {
                    frame: t,
                    result: Ok(r),
                    evaluation,
                }
            }
            Err(e) => {
                warn!("frame {t} failed: {e}");
                FrameOutcome {
                    frame: t,
                    result: Err(e.to_string()),
                    evaluation: None,
                }
            }
        };
        frames.push(outcome);
    }
    Ok(SequenceResult { frames })
}

/// Writes per-object and per-view artifacts of one frame under `dir`:
/// `obj<id>_cam<c>_depth.png16`, `obj<id>_cam<c>_mask.png`,
/// `obj<id>_cam<c>_region.png`, `obj<id>.ply`, plus the per-camera unions
/// `depth_<c>.png16` and `mask_<c>.png`.
pub fn write_frame_outputs(result: &FrameResult, cameras: &[CameraView], dir: &Path, with_mesh: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for obj in &result.objects {
        for v in &obj.views {
            let stem = format!("obj{}_cam{}", obj.id, v.camera);
            io::write_depth_map(&v.depth, &dir.join(format!("{stem}_depth.png16")))?;
            io::write_mask(&v.mask, &dir.join(format!("{stem}_mask.png")))?;
            io::write_region_mask(&v.region, &dir.join(format!("{stem}_region.png")))?;
        }
        let pairs: Vec<(&CameraView, &DepthMap)> = obj
            .views
            .iter()
            .filter_map(|v| cameras.iter().find(|c| c.id == v.camera).map(|c| (c, &v.depth)))
            .collect();
        let merge = obj.views.first().map_or(0.0, |v| v.inner_step / 2.0);
        match fuse(&pairs, merge, with_mesh) {
            Ok(model) => io::write_cloud(
                &model.positions(),
                Some(&model.normals()),
                model.mesh.as_deref().unwrap_or(&[]),
                &dir.join(format!("obj{}.ply", obj.id)),
            )?,
            Err(Error::EmptyDepthMaps) => warn!("object {} has no depth to fuse", obj.id),
            Err(e) => return Err(e),
        }
    }
    for cam in cameras {
        if result.objects.iter().flat_map(|o| &o.views).any(|v| v.camera == cam.id) {
            io::write_depth_map(&result.view_depth(cam), &dir.join(format!("depth_{}.png16", cam.id)))?;
            io::write_mask(&result.view_mask(cam), &dir.join(format!("mask_{}.png", cam.id)))?;
        }
    }
    Ok(())
}

/// Compares written outputs (`<result>/<t>/mask_<c>.png`, `depth_<c>.png16`)
/// with ground truth (`<gt>/mask_<c>_<t>.png`, `depth_<c>_<t>.png16`).
/// `gt` may be a dataset root containing `gt/`.
pub fn evaluate_outputs(result_dir: &Path, gt: &Path) -> Result<Vec<(String, f64)>> {
    let gt = if gt.join("gt").is_dir() {
        gt.join("gt")
    } else {
        gt.to_path_buf()
    };
    let mut frames: Vec<usize> = std::fs::read_dir(result_dir)
        .map_err(|e| Error::io(result_dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_string_lossy().parse().ok())
        .collect();
    frames.sort_unstable();
    let mut rows = Vec::new();
    let mut means = Vec::new();
    let mut depth_means = Vec::new();
    for t in frames {
        let dir = result_dir.join(t.to_string());
        let mut per_view = Vec::new();
        let mut errors = Vec::new();
        let mut cams: Vec<usize> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                name.strip_prefix("mask_")?.strip_suffix(".png")?.parse().ok()
            })
            .collect();
        cams.sort_unstable();
        for c in cams {
            let gt_mask_path = gt.join(format!("mask_{c}_{t}.png"));
            if !gt_mask_path.is_file() {
                continue;
            }
            let gt_mask = io::read_mask(&gt_mask_path)?;
            if gt_mask.count() == 0 {
                continue;
            }
            let ours = io::read_mask(&dir.join(format!("mask_{c}.png")))?;
            per_view.push(seg_metrics(&ours, &gt_mask)?);
            let (dp, gp) = (
                dir.join(format!("depth_{c}.png16")),
                gt.join(format!("depth_{c}_{t}.png16")),
            );
            if dp.is_file() && gp.is_file() {
                let (d, g) = (io::read_depth_map(&dp)?, io::read_depth_map(&gp)?);
                for ((r, g), &m) in d.data().iter().zip(g.data()).zip(gt_mask.data()) {
                    if let (Some(r), Some(g), true) = (r, g, m) {
                        errors.push((r - g).abs());
                    }
                }
            }
        }
        if let Some(m) = SegMetrics::mean(&per_view) {
            rows.push((format!("frame_{t}_hit"), m.hit));
            rows.push((format!("frame_{t}_bkg"), m.bkg));
            rows.push((format!("frame_{t}_overlap"), m.overlap));
            means.push(m);
        }
        if let Some(d) = median(errors) {
            rows.push((format!("frame_{t}_depth_error"), d));
            depth_means.push(d);
        }
    }
    let mean =
        SegMetrics::mean(&means).ok_or_else(|| Error::Dataset("no frame with ground truth to evaluate".into()))?;
    rows.push(("mean_hit".into(), mean.hit));
    rows.push(("mean_bkg".into(), mean.bkg));
    rows.push(("mean_overlap".into(), mean.overlap));
    if !depth_means.is_empty() {
        rows.push((
            "mean_depth_error".into(),
            depth_means.iter().sum::<f64>() / depth_means.len() as f64,
        ));
    }
    Ok(rows)
}
