//! Photo-consistency, contrast and smoothness terms of the per-view labelling
//! energy, and the MRF that combines them over one object's pixels.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::coarse::DepthLabelSet;
use crate::error::{Error, Result};
use crate::geometry::CameraView;
use crate::raster::{ColorImage, GrayImage, Raster};
use crate::solver::MrfProblem;

/// Weights and constants of the labelling energy.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyParams {
    pub lambda_data: f64,
    pub lambda_contrast: f64,
    pub lambda_smooth: f64,
    /// Per-view matching noise deviation in the confidence softmin.
    pub sigma_i: f64,
    pub epsilon: f64,
    /// Smoothness truncation in units of the inner depth step.
    pub d_max_steps: f64,
    /// Data cost of the unknown label.
    pub m_unknown: f64,
    /// Odd NCC window side in pixels.
    pub ncc_window: usize,
    /// Number of best auxiliary views summed in the data term.
    pub k_views: usize,
    pub bilateral_sigma_spatial: f64,
    pub bilateral_sigma_range: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            lambda_data: 0.5,
            lambda_contrast: 1.0,
            lambda_smooth: 0.005,
            sigma_i: 0.3,
            epsilon: 1.0,
            d_max_steps: 50.0,
            m_unknown: 0.6,
            ncc_window: 15,
            k_views: 1,
            bilateral_sigma_spatial: 3.0,
            bilateral_sigma_range: 10.0,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            ("lambda_data", self.lambda_data),
            ("lambda_contrast", self.lambda_contrast),
            ("lambda_smooth", self.lambda_smooth),
            ("epsilon", self.epsilon),
            ("m_unknown", self.m_unknown),
        ];
        for (field, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(field, format!("must be a non-negative number, got {v}")));
            }
        }
        let positive = [
            ("sigma_i", self.sigma_i),
            ("d_max_steps", self.d_max_steps),
            ("bilateral_sigma_spatial", self.bilateral_sigma_spatial),
            ("bilateral_sigma_range", self.bilateral_sigma_range),
        ];
        for (field, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        if self.ncc_window < 3 || self.ncc_window.is_multiple_of(2) {
            return Err(Error::config(
                "ncc_window",
                format!("must be odd and >= 3, got {}", self.ncc_window),
            ));
        }
        if self.k_views == 0 {
            return Err(Error::config("k_views", "must be at least 1"));
        }
        Ok(())
    }
}

/// Zero-mean normalised cross-correlation, or `None` when either patch has
/// zero variance.
pub fn ncc(a: &[f32], b: &[f32]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "NCC patches differ in size");
    let n = a.len() as f64;
    let mean_a = a.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mean_b = b.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x as f64 - mean_a, y as f64 - mean_b);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // Relative guard: patches that are flat up to rounding count as flat.
    let floor = 1e-12 * n * (mean_a.abs().max(mean_b.abs()).max(1.0)).powi(2);
    if saa <= floor || sbb <= floor {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Matching cost `1 - NCC` in `[0, 2]`; flat patches cost a neutral 1.
pub fn ncc_cost(a: &[f32], b: &[f32]) -> f64 {
    ncc(a, b).map_or(1.0, |v| 1.0 - v)
}

/// Softmin confidence of every candidate: `exp(-c/2σ²)` normalised over the
/// candidates. Evaluated relative to the minimum cost for stability.
pub fn confidence(costs: &[f64], sigma: f64) -> Result<Vec<f64>> {
    if costs.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let c_min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let two_var = 2.0 * sigma * sigma;
    let w: Vec<f64> = costs.iter().map(|&c| (-(c - c_min) / two_var).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// Edge-preserving bilateral filter on an RGB image with a window of three
/// spatial deviations. The range kernel uses the Euclidean RGB distance.
pub fn bilateral_filter(image: &ColorImage, sigma_spatial: f64, sigma_range: f64) -> Result<ColorImage> {
    if !(sigma_spatial > 0.0 && sigma_range > 0.0) {
        return Err(Error::InvalidArgument("bilateral deviations must be positive".into()));
    }
    let (w, h) = image.dims();
    let radius = (3.0 * sigma_spatial).ceil() as i64;
    let spatial: Vec<f64> = (-radius..=radius)
        .flat_map(|dy| (-radius..=radius).map(move |dx| (dx, dy)))
        .map(|(dx, dy)| (-((dx * dx + dy * dy) as f64) / (2.0 * sigma_spatial * sigma_spatial)).exp())
        .collect();
    let side = (2 * radius + 1) as usize;
    let inv_range = 1.0 / (2.0 * sigma_range * sigma_range);
    let rows: Vec<Vec<[f32; 3]>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let c = image.get(x, y);
                    let mut acc = [0.0f64; 3];
                    let mut norm = 0.0;
                    for dy in -radius..=radius {
                        let ny = y as i64 + dy;
                        if ny < 0 || ny >= h as i64 {
                            continue;
                        }
                        for dx in -radius..=radius {
                            let nx = x as i64 + dx;
                            if nx < 0 || nx >= w as i64 {
                                continue;
                            }
                            let q = image.get(nx as usize, ny as usize);
                            let d2: f64 = (0..3).map(|k| ((q[k] - c[k]) as f64).powi(2)).sum();
                            let wgt = spatial[(dy + radius) as usize * side + (dx + radius) as usize]
                                * (-d2 * inv_range).exp();
                            for k in 0..3 {
                                acc[k] += wgt * q[k] as f64;
                            }
                            norm += wgt;
                        }
                    }
                    [(acc[0] / norm) as f32, (acc[1] / norm) as f32, (acc[2] / norm) as f32]
                })
                .collect()
        })
        .collect();
    Raster::from_vec(w, h, rows.into_iter().flatten().collect())
}

fn color_dist2(a: &[f32; 3], b: &[f32; 3]) -> f64 {
    (0..3).map(|k| ((a[k] - b[k]) as f64).powi(2)).sum()
}

/// Normaliser `σ²` of the contrast exponent: the mean over all 4-connected
/// pixel pairs of `‖B(p) − B(q)‖² / d_pq²` (with `d_pq = 1`).
pub fn contrast_normalizer(filtered: &ColorImage) -> f64 {
    let (w, h) = filtered.dims();
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..h {
        for x in 0..w {
            let p = filtered.get(x, y);
            if x + 1 < w {
                sum += color_dist2(p, filtered.get(x + 1, y));
                n += 1;
            }
            if y + 1 < h {
                sum += color_dist2(p, filtered.get(x, y + 1));
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Contrast penalty for two neighbours taking different labels:
/// `(ε + exp(−C)) / (1 + ε)` with `C = ‖ΔB‖² / (2 σ² d²)`; a zero
/// normaliser gives `C = 0`.
pub fn contrast_weight(bp: &[f32; 3], bq: &[f32; 3], d_pq: f64, sigma2: f64, epsilon: f64) -> f64 {
    let c = if sigma2 > 0.0 {
        color_dist2(bp, bq) / (2.0 * sigma2 * d_pq * d_pq)
    } else {
        0.0
    };
    (epsilon + (-c).exp()) / (1.0 + epsilon)
}

/// Contrast term: zero for equal labels, the contrast weight otherwise.
pub fn contrast_term(same_label: bool, weight: f64) -> f64 {
    if same_label {
        0.0
    } else {
        weight
    }
}

/// Truncated depth difference; `None` is the unknown label.
pub fn smoothness_term(d_p: Option<f64>, d_q: Option<f64>, d_max: f64) -> f64 {
    match (d_p, d_q) {
        (Some(a), Some(b)) => (a - b).abs().min(d_max),
        (None, None) => 0.0,
        _ => d_max,
    }
}

/// An auxiliary camera with its luminance image.
#[derive(Clone, Copy, Debug)]
pub struct AuxView<'a> {
    pub camera: &'a CameraView,
    pub image: &'a GrayImage,
}

/// Maps reference pixels on the fronto-parallel plane at depth `d` into an
/// auxiliary view: `x_a ~ d · M x + k_t`.
struct PlaneSweep {
    m: Matrix3<f64>,
    kt: Vector3<f64>,
}

impl PlaneSweep {
    fn new(reference: &CameraView, aux: &CameraView) -> Self {
        let r_ar = aux.r() * reference.r().transpose();
        let t_ar = aux.t() - r_ar * reference.t();
        Self {
            m: aux.k() * r_ar * reference.k_inv(),
            kt: aux.k() * t_ar,
        }
    }

    #[inline]
    fn map(&self, x: f64, y: f64, depth: f64) -> Option<(f64, f64)> {
        let h = self.m * Vector3::new(x, y, 1.0) * depth + self.kt;
        (h.z > 0.0).then(|| (h.x / h.z, h.y / h.z))
    }
}

/// Per-pixel, per-label data costs (`m_unknown` for the unknown label,
/// `f64::INFINITY` for inadmissible labels), stored row-major by domain node.
#[derive(Clone, Debug, PartialEq)]
pub struct DataCosts {
    pub num_labels: usize,
    pub costs: Vec<f64>,
    /// Pixels with no usable auxiliary view.
    pub occluded: usize,
}

impl DataCosts {
    pub fn get(&self, node: usize, label: usize) -> f64 {
        self.costs[node * self.num_labels + label]
    }
}

/// Photo-consistency data costs for every domain pixel of `labels`.
///
/// For each auxiliary view, the reference window around `p` is compared with
/// the auxiliary window warped through the fronto-parallel plane at each
/// candidate depth. Views where some candidate center leaves the image are
/// excluded. The `k_views` views with the lowest best cost contribute
/// `1 − m` each, `m` being the candidate's softmin confidence.
pub fn data_costs(
    reference: &CameraView,
    image: &GrayImage,
    aux: &[AuxView<'_>],
    labels: &DepthLabelSet,
    params: &EnergyParams,
) -> Result<DataCosts> {
    let domain = labels.domain();
    let num_labels = labels.num_labels();
    let unknown = labels.unknown();
    let half = (params.ncc_window / 2) as i64;
    let sweeps: Vec<PlaneSweep> = aux.iter().map(|a| PlaneSweep::new(reference, a.camera)).collect();

    let per_node: Vec<(Vec<f64>, bool)> = domain
        .par_iter()
        .map(|&p| {
            let px = labels.pixels[p].as_ref().expect("domain pixel has labels");
            let (x, y) = (p % labels.width, p / labels.width);
            let (xf, yf) = (x as f64, y as f64);
            let ref_patch: Vec<f32> = (-half..=half)
                .flat_map(|dy| (-half..=half).map(move |dx| (dx, dy)))
                .map(|(dx, dy)| image.sample_bilinear(xf + dx as f64, yf + dy as f64))
                .collect();

            // (best cost, confidences) per usable view.
            let mut views: Vec<(f64, Vec<f64>)> = Vec::with_capacity(aux.len());
            let mut aux_patch = vec![0.0f32; ref_patch.len()];
            'view: for (a, sweep) in aux.iter().zip(&sweeps) {
                let mut costs = Vec::with_capacity(px.depths.len());
                for &d in &px.depths {
                    match sweep.map(xf, yf, d) {
                        Some((u, v)) if a.camera.contains(&nalgebra::Vector2::new(u, v)) => {}
                        _ => continue 'view,
                    }
                    let mut k = 0;
                    for dy in -half..=half {
                        for dx in -half..=half {
                            let (u, v) = sweep
                                .map(xf + dx as f64, yf + dy as f64, d)
                                .unwrap_or((f64::NAN, f64::NAN));
                            aux_patch[k] = if u.is_finite() {
                                a.image.sample_bilinear(u, v)
                            } else {
                                0.0
                            };
                            k += 1;
                        }
                    }
                    costs.push(ncc_cost(&ref_patch, &aux_patch));
                }
                let best = costs.iter().copied().fold(f64::INFINITY, f64::min);
                let m = confidence(&costs, params.sigma_i).expect("non-empty candidates");
                views.push((best, m));
            }

            let mut row = vec![f64::INFINITY; num_labels];
            row[unknown] = params.m_unknown;
            let table = match px.region {
                crate::coarse::Region::Inner => &labels.inner_labels,
                _ => &labels.outer_labels,
            };
            if views.is_empty() {
                for &l in table {
                    row[l] = params.m_unknown;
                }
                return (row, true);
            }
            views.sort_by(|a, b| a.0.total_cmp(&b.0));
            views.truncate(params.k_views);
            for (rank, &l) in table.iter().enumerate() {
                row[l] = views.iter().map(|(_, m)| 1.0 - m[rank]).sum();
            }
            (row, false)
        })
        .collect();
    let occluded = per_node.iter().filter(|r| r.1).count();
    Ok(DataCosts {
        num_labels,
        costs: per_node.into_iter().flat_map(|r| r.0).collect(),
        occluded,
    })
}

/// Labelling problem of one object in one view.
#[derive(Clone, Debug)]
pub struct DepthMrf<'a> {
    pub labels: &'a DepthLabelSet,
    /// Pixel index of every node.
    pub nodes: Vec<usize>,
    pub data: DataCosts,
    edges: Vec<(usize, usize)>,
    contrast: Vec<f64>,
    pub params: EnergyParams,
    pub d_max: f64,
}

/// Energy split into its three weighted terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub data: f64,
    pub contrast: f64,
    pub smooth: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.data + self.contrast + self.smooth
    }
}

impl<'a> DepthMrf<'a> {
    /// Assembles the MRF over the label domain with 4-connected interactions.
    pub fn new(
        labels: &'a DepthLabelSet,
        data: DataCosts,
        filtered: &ColorImage,
        params: &EnergyParams,
    ) -> Result<Self> {
        if filtered.dims() != (labels.width, labels.height) {
            return Err(Error::DimensionMismatch(
                filtered.width(),
                filtered.height(),
                labels.width,
                labels.height,
            ));
        }
        let nodes = labels.domain();
        if data.costs.len() != nodes.len() * labels.num_labels() {
            return Err(Error::InvalidArgument(
                "data costs do not match the label domain".into(),
            ));
        }
        let mut node_of = vec![usize::MAX; labels.pixels.len()];
        for (n, &p) in nodes.iter().enumerate() {
            node_of[p] = n;
        }
        let sigma2 = contrast_normalizer(filtered);
        let w = labels.width;
        let mut edges = Vec::new();
        let mut contrast = Vec::new();
        for (n, &p) in nodes.iter().enumerate() {
            let (x, y) = (p % w, p / w);
            for q in [(x + 1 < w).then(|| p + 1), (y + 1 < labels.height).then(|| p + w)]
                .into_iter()
                .flatten()
            {
                if node_of[q] != usize::MAX {
                    edges.push((n, node_of[q]));
                    let (qx, qy) = (q % w, q / w);
                    contrast.push(contrast_weight(
                        filtered.get(x, y),
                        filtered.get(qx, qy),
                        1.0,
                        sigma2,
                        params.epsilon,
                    ));
                }
            }
        }
        Ok(Self {
            labels,
            nodes,
            data,
            edges,
            contrast,
            params: params.clone(),
            d_max: labels.d_max(params.d_max_steps),
        })
    }

    fn depth(&self, node: usize, label: usize) -> Option<f64> {
        self.labels.depth(self.nodes[node], label)
    }

    /// Per-term weighted sums for a full labelling of the nodes.
    pub fn breakdown(&self, labels: &[usize]) -> EnergyBreakdown {
        let mut out = EnergyBreakdown::default();
        for (n, &l) in labels.iter().enumerate() {
            out.data += self.params.lambda_data * self.data.get(n, l);
        }
        for (e, &(p, q)) in self.edges.iter().enumerate() {
            let (lp, lq) = (labels[p], labels[q]);
            out.contrast += self.params.lambda_contrast * contrast_term(lp == lq, self.contrast[e]);
            out.smooth += self.params.lambda_smooth * smoothness_term(self.depth(p, lp), self.depth(q, lq), self.d_max);
        }
        out
    }

    /// Initial labelling: the label nearest the coarse surface everywhere.
    pub fn center_labeling(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .map(|&p| self.labels.center_label(p).unwrap_or(self.labels.unknown()))
            .collect()
    }
}

impl MrfProblem for DepthMrf<'_> {
    fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn num_labels(&self) -> usize {
        self.labels.num_labels()
    }

    fn admissible(&self, node: usize, label: usize) -> bool {
        self.data.get(node, label).is_finite()
    }

    fn unary(&self, node: usize, label: usize) -> f64 {
        self.params.lambda_data * self.data.get(node, label)
    }

    fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    fn pairwise(&self, edge: usize, lp: usize, lq: usize) -> f64 {
        let (p, q) = self.edges[edge];
        self.params.lambda_contrast * contrast_term(lp == lq, self.contrast[edge])
            + self.params.lambda_smooth * smoothness_term(self.depth(p, lp), self.depth(q, lq), self.d_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::{build_depth_labels, CaptureVolume, CoarseRegion, Region};
    use crate::solver::{energy, Labeling};
    use nalgebra::Vector2;
    use proptest::prelude::*;

    fn patch(seed: u32) -> Vec<f32> {
        (0..225u32).map(|i| ((i * 37 + seed * 101) % 97) as f32).collect()
    }

    #[test]
    fn ncc_identity_negation_and_affine() {
        let a = patch(1);
        assert!((ncc(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(ncc_cost(&a, &a).abs() < 1e-12);
        let mean = a.iter().sum::<f32>() / a.len() as f32;
        let neg: Vec<f32> = a.iter().map(|v| 2.0 * mean - v).collect();
        assert!((ncc(&a, &neg).unwrap() + 1.0).abs() < 1e-6);
        assert!((ncc_cost(&a, &neg) - 2.0).abs() < 1e-6);
        let b: Vec<f32> = a.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((ncc(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let flat = vec![5.0; 225];
        assert_eq!(ncc(&a, &flat), None);
        assert_eq!(ncc_cost(&a, &flat), 1.0);
    }

    proptest! {
        #[test]
        fn ncc_is_affine_invariant(
            a in proptest::collection::vec(0u8..=255, 9),
            b in proptest::collection::vec(0u8..=255, 9),
            alpha in 1u32..=8,
            beta in 0u32..=64,
        ) {
            // Power-of-two gains and small integer offsets keep f32 values exact.
            let a: Vec<f32> = a.into_iter().map(f32::from).collect();
            let b: Vec<f32> = b.into_iter().map(f32::from).collect();
            let gain = (1u32 << (alpha % 4)) as f32;
            let scaled: Vec<f32> = b.iter().map(|v| gain * v + beta as f32).collect();
            match (ncc(&a, &b), ncc(&a, &scaled)) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
        }

        #[test]
        fn confidences_sum_to_one(costs in proptest::collection::vec(0.0f64..2.0, 1..20)) {
            let m = confidence(&costs, 0.3).unwrap();
            prop_assert!((m.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(m.iter().all(|&v| v > 0.0 && v <= 1.0));
        }
    }

    #[test]
    fn confidence_examples() {
        let m = confidence(&[0.4; 4], 0.3).unwrap();
        assert!(m.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let m = confidence(&[0.0, 0.6], 0.3).unwrap();
        let e = (-0.6f64 / 0.18).exp();
        assert!((m[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((m[0] - 0.9655).abs() < 1e-4 && (m[1] - 0.0345).abs() < 1e-4);
        let m = confidence(&[0.0, 50.0, 60.0], 0.3).unwrap();
        assert!(m[0] > 1.0 - 1e-12);
        assert!(matches!(confidence(&[], 0.3), Err(Error::EmptyCandidates)));
    }

    #[test]
    fn bilateral_examples() {
        let flat = Raster::new(12, 12, [40.0f32, 40.0, 40.0]);
        let out = bilateral_filter(&flat, 3.0, 10.0).unwrap();
        assert!(out.data().iter().all(|p| p.iter().all(|&c| (c - 40.0).abs() < 1e-4)));

        let step = Raster::from_fn(20, 20, |x, _| if x < 10 { [0.0f32; 3] } else { [100.0f32; 3] });
        let out = bilateral_filter(&step, 3.0, 5.0).unwrap();
        for y in 0..20 {
            assert!(out.get(9, y)[0] < 1.0);
            assert!(out.get(10, y)[0] > 99.0);
        }

        let mut impulse = Raster::new(21, 21, [10.0f32; 3]);
        impulse.set(10, 10, [30.0; 3]);
        let out = bilateral_filter(&impulse, 2.0, 50.0).unwrap();
        let v = out.get(10, 10)[0];
        // Kernel-sum oracle: the centre weight is 1, every neighbour carries
        // spatial * range weight, and the neighbours are all at 10.
        let mut others = 0.0f64;
        for dy in -6i64..=6 {
            for dx in -6i64..=6 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let s = (-((dx * dx + dy * dy) as f64) / 8.0).exp();
                let r = (-(3.0 * 400.0) / (2.0 * 2500.0f64)).exp();
                others += s * r;
            }
        }
        let expected = (30.0 + 10.0 * others) / (1.0 + others);
        assert!((v as f64 - expected).abs() < 1e-3);
        assert!(v < 30.0 && v > 10.0);
    }

    #[test]
    fn contrast_cases() {
        let a = [10.0f32, 20.0, 30.0];
        assert_eq!(contrast_term(true, contrast_weight(&a, &a, 1.0, 4.0, 1.0)), 0.0);
        assert_eq!(contrast_weight(&a, &a, 1.0, 4.0, 1.0), 1.0);
        let b = [250.0f32, 0.0, 0.0];
        assert!((contrast_weight(&a, &b, 1.0, 1e-3, 1.0) - 0.5).abs() < 1e-12);
        assert_eq!(contrast_weight(&a, &b, 1.0, 0.0, 1.0), 1.0);
        let w1 = contrast_weight(&a, &b, 1.0, 30.0, 1.0);
        let w2 = contrast_weight(&b, &a, 1.0, 30.0, 1.0);
        assert_eq!(w1, w2);
        assert!((0.5..=1.0).contains(&w1));
    }

    #[test]
    fn smoothness_cases() {
        assert_eq!(smoothness_term(None, None, 1.25), 0.0);
        assert!((smoothness_term(Some(2.0), Some(2.1), 1.25) - 0.1).abs() < 1e-12);
        assert_eq!(smoothness_term(Some(2.0), None, 1.25), 1.25);
        assert_eq!(smoothness_term(None, Some(2.0), 1.25), 1.25);
        assert_eq!(smoothness_term(Some(0.0), Some(9.0), 1.25), 1.25);
    }

    #[test]
    fn truncated_distance_with_unknown_is_a_metric() {
        let values: Vec<Option<f64>> = (0..8).map(|i| Some(i as f64 * 0.375)).chain([None]).collect();
        let d_max = 1.25;
        for &a in &values {
            for &b in &values {
                assert_eq!(smoothness_term(a, b, d_max), smoothness_term(b, a, d_max));
                assert_eq!(smoothness_term(a, b, d_max) == 0.0, a == b);
                for &c in &values {
                    assert!(
                        smoothness_term(a, c, d_max)
                            <= smoothness_term(a, b, d_max) + smoothness_term(b, c, d_max) + 1e-12
                    );
                }
            }
        }
    }

    /// Fronto-parallel textured plane at depth `z` seen by a reference camera
    /// and one camera shifted along x.
    fn plane_scene(z: f64) -> (CameraView, CameraView, GrayImage, GrayImage) {
        let k = Matrix3::new(120.0, 0.0, 32.0, 0.0, 120.0, 32.0, 0.0, 0.0, 1.0);
        let reference = CameraView::new(0, k, Matrix3::identity(), Vector3::zeros(), 64, 64).unwrap();
        let aux = CameraView::new(1, k, Matrix3::identity(), Vector3::new(-0.4, 0.0, 0.0), 64, 64).unwrap();
        let texture = |x: f64, y: f64| -> f32 {
            (128.0 + 60.0 * (23.0 * x).sin() * (17.0 * y).cos() + 40.0 * (41.0 * (x + y)).sin()) as f32
        };
        let render = |cam: &CameraView| {
            Raster::from_fn(64, 64, |u, v| {
                let p = cam.backproject(&Vector2::new(u as f64, v as f64), z).unwrap();
                texture(p.x, p.y)
            })
        };
        let (a, b) = (render(&reference), render(&aux));
        (reference, aux, a, b)
    }

    fn single_pixel_labels(x: usize, y: usize, center: f64, w: usize, h: usize) -> DepthLabelSet {
        let mut mask = Raster::new(w, h, Region::Outside);
        mask.set(x, y, Region::Inner);
        let region = CoarseRegion {
            mask,
            center: Raster::new(w, h, Some(center)),
            radius: 0.0,
        };
        let cap = CaptureVolume {
            min: Vector3::zeros(),
            max: Vector3::new(20.0, 0.0, 0.0),
        };
        build_depth_labels(&region, &cap, 5, 9).unwrap()
    }

    #[test]
    fn correct_depth_has_lowest_data_cost() {
        let z = 2.0;
        let (reference, aux, img_r, img_a) = plane_scene(z);
        let labels = single_pixel_labels(32, 32, z, 64, 64);
        let params = EnergyParams::default();
        let costs = data_costs(
            &reference,
            &img_r,
            &[AuxView {
                camera: &aux,
                image: &img_a,
            }],
            &labels,
            &params,
        )
        .unwrap();
        let center = labels.center_label(32 * 64 + 32).unwrap();
        let best = costs.get(0, center);
        for &l in &labels.inner_labels {
            if l != center {
                assert!(
                    costs.get(0, l) > best + 1e-3,
                    "label {l}: {} vs {best}",
                    costs.get(0, l)
                );
            }
        }
        assert_eq!(costs.get(0, labels.unknown()), params.m_unknown);
    }

    #[test]
    fn off_image_projections_fall_back_to_unknown_cost() {
        let (reference, aux, img_r, img_a) = plane_scene(2.0);
        // Near the left border the shifted view sees nothing.
        let labels = single_pixel_labels(0, 32, 2.0, 64, 64);
        let params = EnergyParams::default();
        let costs = data_costs(
            &reference,
            &img_r,
            &[AuxView {
                camera: &aux,
                image: &img_a,
            }],
            &labels,
            &params,
        )
        .unwrap();
        assert_eq!(costs.occluded, 1);
        for &l in &labels.inner_labels {
            assert_eq!(costs.get(0, l), params.m_unknown);
        }
    }

    fn two_pixel_problem() -> (DepthLabelSet, ColorImage) {
        let region = CoarseRegion {
            mask: Raster::new(2, 1, Region::Inner),
            center: Raster::from_vec(2, 1, vec![Some(2.0), Some(2.05)]).unwrap(),
            radius: 0.0,
        };
        let cap = CaptureVolume {
            min: Vector3::zeros(),
            max: Vector3::new(10.0, 0.0, 0.0),
        };
        let labels = build_depth_labels(&region, &cap, 5, 9).unwrap();
        let img = Raster::from_vec(2, 1, vec![[0.0f32; 3], [30.0, 0.0, 0.0]]).unwrap();
        (labels, img)
    }

    #[test]
    fn hand_summed_two_pixel_energy() {
        let params = EnergyParams::default();
        let (labels, img) = two_pixel_problem();
        let n = labels.num_labels();
        let mut costs = vec![f64::INFINITY; 2 * n];
        for &l in &labels.inner_labels {
            costs[l] = 0.25;
            costs[n + l] = 0.75;
        }
        costs[labels.unknown()] = params.m_unknown;
        costs[n + labels.unknown()] = params.m_unknown;
        let data = DataCosts {
            num_labels: n,
            costs,
            occluded: 0,
        };
        let mrf = DepthMrf::new(&labels, data, &img, &params).unwrap();
        // Pixel 0 at depth 2.0 (label 4), pixel 1 at 2.05 + 0.025 (label 5).
        let e = energy(&mrf, &[4, 5]).unwrap();
        // Single pair: σ² = 900, C = 900 / 1800 = 0.5.
        let contrast = (1.0 + (-0.5f64).exp()) / 2.0;
        let expected = 0.5 * (0.25 + 0.75) + 1.0 * contrast + 0.005 * 0.075;
        assert!((e - expected).abs() < 1e-12, "{e} vs {expected}");
        let b = mrf.breakdown(&[4, 5]);
        assert!((b.total() - e).abs() < 1e-9);
        // All-unknown: only data terms remain.
        let u = labels.unknown();
        assert!((energy(&mrf, &[u, u]).unwrap() - 0.5 * 2.0 * 0.6).abs() < 1e-12);
        assert!(Labeling::new(&mrf, vec![0, 0]).is_err());
    }

    #[test]
    fn params_are_validated() {
        assert!(EnergyParams::default().validate().is_ok());
        let bad = EnergyParams {
            lambda_data: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = EnergyParams {
            ncc_window: 4,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = EnergyParams {
            k_views: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
