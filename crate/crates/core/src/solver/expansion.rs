//! α-expansion over a generic pairwise MRF.

use log::debug;

use super::maxflow::{Graph, Segment};
use crate::error::{Error, Result};

/// Discrete pairwise energy `Σ_p U_p(l_p) + Σ_(p,q) V_pq(l_p, l_q)`.
pub trait MrfProblem {
    fn num_nodes(&self) -> usize;
    /// Labels are `0..num_labels()`.
    fn num_labels(&self) -> usize;
    fn admissible(&self, node: usize, label: usize) -> bool;
    fn unary(&self, node: usize, label: usize) -> f64;
    /// Undirected interacting pairs, each listed once.
    fn edges(&self) -> &[(usize, usize)];
    /// Cost of edge `edge = (p, q)` when `p` takes `lp` and `q` takes `lq`.
    fn pairwise(&self, edge: usize, lp: usize, lq: usize) -> f64;
}

/// Per-node label assignment with its cached energy.
#[derive(Clone, Debug, PartialEq)]
pub struct Labeling {
    pub labels: Vec<usize>,
    pub energy: f64,
}

impl Labeling {
    pub fn new<P: MrfProblem + ?Sized>(problem: &P, labels: Vec<usize>) -> Result<Self> {
        let energy = energy(problem, &labels)?;
        Ok(Self { labels, energy })
    }
}

/// Total energy of `labels`; fails on an inadmissible label.
pub fn energy<P: MrfProblem + ?Sized>(problem: &P, labels: &[usize]) -> Result<f64> {
    if labels.len() != problem.num_nodes() {
        return Err(Error::InvalidArgument(format!(
            "labeling has {} nodes, problem has {}",
            labels.len(),
            problem.num_nodes()
        )));
    }
    let mut total = 0.0;
    for (node, &label) in labels.iter().enumerate() {
        if label >= problem.num_labels() || !problem.admissible(node, label) {
            return Err(Error::InadmissibleLabel { node, label });
        }
        total += problem.unary(node, label);
    }
    for (e, &(p, q)) in problem.edges().iter().enumerate() {
        total += problem.pairwise(e, labels[p], labels[q]);
    }
    Ok(total)
}

/// Result of one expansion move.
#[derive(Clone, Debug, PartialEq)]
pub struct MoveOutcome {
    pub labeling: Labeling,
    /// The returned labeling differs from the input one.
    pub changed: bool,
    /// Pairwise terms whose binary projection was not submodular and had to
    /// be truncated.
    pub truncations: usize,
}

/// Best labeling in which every node keeps its label or switches to `alpha`.
///
/// Nodes where `alpha` is inadmissible stay frozen. The move never returns a
/// labeling with higher energy than the input, and ties keep the input.
pub fn expansion_move<P: MrfProblem + ?Sized>(problem: &P, labeling: &Labeling, alpha: usize) -> Result<MoveOutcome> {
    let n = problem.num_nodes();
    let labels = &labeling.labels;
    // Variable index per node, or NONE when frozen.
    const FROZEN: usize = usize::MAX;
    let mut var = vec![FROZEN; n];
    let mut vars = Vec::new();
    for node in 0..n {
        if labels[node] != alpha && problem.admissible(node, alpha) {
            var[node] = vars.len();
            vars.push(node);
        }
    }
    if vars.is_empty() {
        return Ok(MoveOutcome {
            labeling: labeling.clone(),
            changed: false,
            truncations: 0,
        });
    }

    // Unary costs of each variable for x = 0 (keep) and x = 1 (switch).
    let mut e0: Vec<f64> = vars.iter().map(|&p| problem.unary(p, labels[p])).collect();
    let mut e1: Vec<f64> = vars.iter().map(|&p| problem.unary(p, alpha)).collect();
    let mut graph = Graph::new(vars.len());
    let mut truncations = 0;

    for (e, &(p, q)) in problem.edges().iter().enumerate() {
        match (var[p], var[q]) {
            (FROZEN, FROZEN) => {}
            (vp, FROZEN) => {
                e0[vp] += problem.pairwise(e, labels[p], labels[q]);
                e1[vp] += problem.pairwise(e, alpha, labels[q]);
            }
            (FROZEN, vq) => {
                e0[vq] += problem.pairwise(e, labels[p], labels[q]);
                e1[vq] += problem.pairwise(e, labels[p], alpha);
            }
            (vp, vq) => {
                let a = problem.pairwise(e, labels[p], labels[q]);
                let mut b = problem.pairwise(e, labels[p], alpha);
                let c = problem.pairwise(e, alpha, labels[q]);
                let d = problem.pairwise(e, alpha, alpha);
                if a + d > b + c {
                    // Raising the (keep, switch) entry bounds the energy from
                    // above while leaving the current labeling's energy intact.
                    b = a + d - c;
                    truncations += 1;
                }
                // E = A + (C - A) x_p + (D - C) x_q + (B + C - A - D)(1 - x_p) x_q
                e0[vp] += a;
                e1[vp] += c;
                e1[vq] += d - c;
                let w = b + c - a - d;
                if w > 0.0 {
                    graph.add_edge(vp, vq, w, 0.0);
                }
            }
        }
    }
    for v in 0..vars.len() {
        let m = e0[v].min(e1[v]);
        graph.add_tweights(v, e1[v] - m, e0[v] - m);
    }
    graph.maxflow();

    let mut proposal = labels.clone();
    let mut switched = false;
    for (v, &p) in vars.iter().enumerate() {
        if graph.segment(v) == Segment::Sink {
            proposal[p] = alpha;
            switched = true;
        }
    }
    if truncations > 0 {
        debug!("expansion on label {alpha}: {truncations} truncated pairwise terms");
    }
    if !switched {
        return Ok(MoveOutcome {
            labeling: labeling.clone(),
            changed: false,
            truncations,
        });
    }
    let new_energy = energy(problem, &proposal)?;
    if new_energy < labeling.energy {
        Ok(MoveOutcome {
            labeling: Labeling {
                labels: proposal,
                energy: new_energy,
            },
            changed: true,
            truncations,
        })
    } else {
        Ok(MoveOutcome {
            labeling: labeling.clone(),
            changed: false,
            truncations,
        })
    }
}

/// Outcome of [`minimize`].
#[derive(Clone, Debug, PartialEq)]
pub struct Minimized {
    pub labeling: Labeling,
    /// Sweeps run, including the final one that changed nothing.
    pub sweeps: usize,
    /// A full sweep changed nothing before the sweep limit.
    pub converged: bool,
    /// Energy before the first move and after every move, in order.
    pub move_trace: Vec<f64>,
    /// Energy before the first sweep and after every sweep.
    pub sweep_trace: Vec<f64>,
    pub truncations: usize,
}

/// Repeated α-expansion sweeps in ascending label order until a sweep makes
/// no change or `max_sweeps` is reached.
pub fn minimize<P: MrfProblem + ?Sized>(problem: &P, initial: Labeling, max_sweeps: usize) -> Result<Minimized> {
    let mut labeling = initial;
    let mut move_trace = vec![labeling.energy];
    let mut sweep_trace = vec![labeling.energy];
    let mut truncations = 0;
    let mut sweeps = 0;
    let mut converged = false;
    let useful: Vec<usize> = (0..problem.num_labels())
        .filter(|&l| (0..problem.num_nodes()).any(|p| problem.admissible(p, l)))
        .collect();
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut changed = false;
        for &alpha in &useful {
            let outcome = expansion_move(problem, &labeling, alpha)?;
            truncations += outcome.truncations;
            changed |= outcome.changed;
            labeling = outcome.labeling;
            move_trace.push(labeling.energy);
        }
        sweep_trace.push(labeling.energy);
        if !changed {
            converged = true;
            break;
        }
    }
    Ok(Minimized {
        labeling,
        sweeps,
        converged,
        move_trace,
        sweep_trace,
        truncations,
    })
}

/// Dense table-driven MRF: per-node unary rows and per-edge pairwise matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct TableMrf {
    pub num_labels: usize,
    /// `unary[p][l]`; `f64::INFINITY` marks an inadmissible label.
    pub unary: Vec<Vec<f64>>,
    pub edges: Vec<(usize, usize)>,
    /// `pairwise[e][lp * num_labels + lq]`.
    pub pairwise: Vec<Vec<f64>>,
}

impl TableMrf {
    /// 4-connected `width × height` grid with edges in row-major order.
    pub fn grid_edges(width: usize, height: usize) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for y in 0..height {
            for x in 0..width {
                let p = y * width + x;
                if x + 1 < width {
                    edges.push((p, p + 1));
                }
                if y + 1 < height {
                    edges.push((p, p + width));
                }
            }
        }
        edges
    }
}

impl MrfProblem for TableMrf {
    fn num_nodes(&self) -> usize {
        self.unary.len()
    }

    fn num_labels(&self) -> usize {
        self.num_labels
    }

    fn admissible(&self, node: usize, label: usize) -> bool {
        self.unary[node][label].is_finite()
    }

    fn unary(&self, node: usize, label: usize) -> f64 {
        self.unary[node][label]
    }

    fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    fn pairwise(&self, edge: usize, lp: usize, lq: usize) -> f64 {
        self.pairwise[edge][lp * self.num_labels + lq]
    }
}

/// Exhaustive minimum energy over every admissible labeling. Exponential;
/// intended for verification on tiny problems.
pub fn brute_force_minimum<P: MrfProblem + ?Sized>(problem: &P) -> Option<(Vec<usize>, f64)> {
    let n = problem.num_nodes();
    let options: Vec<Vec<usize>> = (0..n)
        .map(|p| {
            (0..problem.num_labels())
                .filter(|&l| problem.admissible(p, l))
                .collect()
        })
        .collect();
    if options.iter().any(Vec::is_empty) {
        return None;
    }
    let mut idx = vec![0usize; n];
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let labels: Vec<usize> = idx.iter().zip(&options).map(|(&i, o)| o[i]).collect();
        let e = energy(problem, &labels).ok()?;
        if best.as_ref().is_none_or(|(_, b)| e < *b) {
            best = Some((labels, e));
        }
        let mut k = 0;
        loop {
            if k == n {
                return best;
            }
            idx[k] += 1;
            if idx[k] < options[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Costs on a 1/64 grid keep every sum exact in binary floating point.
    fn dyadic(x: u32) -> f64 {
        x as f64 / 64.0
    }

    fn potts_grid(w: usize, h: usize, labels: usize, unary: Vec<u32>, weights: Vec<u32>) -> TableMrf {
        let edges = TableMrf::grid_edges(w, h);
        let unary = (0..w * h)
            .map(|p| (0..labels).map(|l| dyadic(unary[p * labels + l])).collect())
            .collect();
        let pairwise = edges
            .iter()
            .enumerate()
            .map(|(e, _)| {
                let wgt = dyadic(weights[e]);
                (0..labels * labels)
                    .map(|k| if k / labels == k % labels { 0.0 } else { wgt })
                    .collect()
            })
            .collect();
        TableMrf {
            num_labels: labels,
            unary,
            edges,
            pairwise,
        }
    }

    #[test]
    fn zero_problem_has_zero_energy() {
        let mrf = potts_grid(2, 2, 3, vec![0; 12], vec![0; 4]);
        let init = Labeling::new(&mrf, vec![0, 1, 2, 1]).unwrap();
        assert_eq!(init.energy, 0.0);
        let out = minimize(&mrf, init.clone(), 8).unwrap();
        assert_eq!(out.labeling, init);
        assert_eq!(out.sweeps, 1);
    }

    #[test]
    fn optimal_start_is_a_fixed_point() {
        // Each node strongly prefers label 0.
        let mut unary = Vec::new();
        for _ in 0..4 {
            unary.extend([0, 640, 640]);
        }
        let mrf = potts_grid(2, 2, 3, unary, vec![64; 4]);
        let init = Labeling::new(&mrf, vec![0; 4]).unwrap();
        for alpha in 0..3 {
            let out = expansion_move(&mrf, &init, alpha).unwrap();
            assert!(!out.changed);
            assert_eq!(out.labeling, init);
        }
        let out = minimize(&mrf, init.clone(), 8).unwrap();
        assert_eq!(out.sweeps, 1);
        assert!(out.converged);
    }

    #[test]
    fn inadmissible_initial_label_is_rejected() {
        let mut mrf = potts_grid(2, 1, 2, vec![0; 4], vec![0]);
        mrf.unary[1][1] = f64::INFINITY;
        assert!(matches!(
            Labeling::new(&mrf, vec![0, 1]),
            Err(Error::InadmissibleLabel { node: 1, label: 1 })
        ));
    }

    #[test]
    fn frozen_nodes_keep_their_labels() {
        let mut mrf = potts_grid(2, 1, 2, vec![640, 0, 640, 0], vec![0]);
        mrf.unary[1][1] = f64::INFINITY;
        let init = Labeling::new(&mrf, vec![0, 0]).unwrap();
        let out = expansion_move(&mrf, &init, 1).unwrap();
        assert_eq!(out.labeling.labels, vec![1, 0]);
    }

    #[test]
    fn hand_computed_three_label_instance() {
        // Labels 0/1/2 as depths with |a - b| truncated at 2: every node's
        // unary favours a different label, and smoothness pulls them together.
        let edges = TableMrf::grid_edges(2, 2);
        let pairwise = vec![
            (0..9)
                .map(|k| ((k / 3) as f64 - (k % 3) as f64).abs().min(2.0))
                .collect::<Vec<_>>();
            edges.len()
        ];
        let mrf = TableMrf {
            num_labels: 3,
            unary: vec![
                vec![0.0, 1.0, 4.0],
                vec![1.0, 0.0, 4.0],
                vec![4.0, 0.5, 0.0],
                vec![3.0, 0.0, 3.0],
            ],
            edges,
            pairwise,
        };
        let (_, best) = brute_force_minimum(&mrf).unwrap();
        let init = Labeling::new(&mrf, vec![2, 2, 0, 2]).unwrap();
        let out = minimize(&mrf, init, 8).unwrap();
        assert_eq!(out.labeling.energy, best);
        assert!(out.move_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    fn binary_strategy() -> impl Strategy<Value = (TableMrf, Vec<usize>)> {
        (1usize..=3, 1usize..=3).prop_flat_map(|(w, h)| {
            let n = w * h;
            let m = TableMrf::grid_edges(w, h).len();
            (
                proptest::collection::vec(0u32..=640, 2 * n),
                proptest::collection::vec(0u32..=640, m),
                proptest::collection::vec(0usize..2, n),
            )
                .prop_map(move |(u, wts, init)| (potts_grid(w, h, 2, u, wts), init))
        })
    }

    proptest! {
        #[test]
        fn one_sweep_solves_binary_problems((mrf, init) in binary_strategy()) {
            let (_, best) = brute_force_minimum(&mrf).unwrap();
            let start = Labeling::new(&mrf, init).unwrap();
            let out = minimize(&mrf, start, 1).unwrap();
            prop_assert_eq!(out.labeling.energy, best);
        }

        #[test]
        fn moves_never_increase_energy(
            u in proptest::collection::vec(0u32..=640, 12),
            wts in proptest::collection::vec(0u32..=640, 4),
            init in proptest::collection::vec(0usize..3, 4),
        ) {
            let mrf = potts_grid(2, 2, 3, u, wts);
            let start = Labeling::new(&mrf, init).unwrap();
            let out = minimize(&mrf, start, 8).unwrap();
            prop_assert!(out.move_trace.windows(2).all(|w| w[1] <= w[0]));
            prop_assert_eq!(energy(&mrf, &out.labeling.labels).unwrap(), out.labeling.energy);
        }
    }
}
