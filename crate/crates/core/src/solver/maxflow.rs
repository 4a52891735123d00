//! Boykov–Kolmogorov augmenting-path max-flow with search-tree reuse.
//!
//! Terminal capacities are folded into a single signed residual per node:
//! positive means residual capacity from the source, negative means residual
//! capacity to the sink.

use std::collections::VecDeque;

const NONE: usize = usize::MAX;
const TERMINAL: usize = usize::MAX - 1;
const ORPHAN: usize = usize::MAX - 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Segment {
    Source,
    Sink,
}

#[derive(Clone, Debug)]
struct Node {
    first: usize,
    parent: usize,
    tr_cap: f64,
    is_sink: bool,
    active: bool,
    ts: u64,
    dist: u32,
}

#[derive(Clone, Debug)]
struct Arc {
    head: usize,
    next: usize,
    r_cap: f64,
}

/// Capacitated graph over `n` inner nodes plus implicit source and sink.
#[derive(Clone, Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    arcs: Vec<Arc>,
    flow: f64,
    queue: VecDeque<usize>,
    orphans: VecDeque<usize>,
    time: u64,
    solved: bool,
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Self {
            nodes: vec![
                Node {
                    first: NONE,
                    parent: NONE,
                    tr_cap: 0.0,
                    is_sink: false,
                    active: false,
                    ts: 0,
                    dist: 0,
                };
                n
            ],
            arcs: Vec::new(),
            flow: 0.0,
            queue: VecDeque::new(),
            orphans: VecDeque::new(),
            time: 0,
            solved: false,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Adds capacities `source → i` and `i → sink`. Both must be non-negative.
    pub fn add_tweights(&mut self, i: usize, mut cap_source: f64, mut cap_sink: f64) {
        debug_assert!(cap_source >= 0.0 && cap_sink >= 0.0);
        let delta = self.nodes[i].tr_cap;
        if delta > 0.0 {
            cap_source += delta;
        } else {
            cap_sink -= delta;
        }
        self.flow += cap_source.min(cap_sink);
        self.nodes[i].tr_cap = cap_source - cap_sink;
    }

    /// Adds the arc pair `i → j` with `cap` and `j → i` with `rev_cap`.
    pub fn add_edge(&mut self, i: usize, j: usize, cap: f64, rev_cap: f64) {
        debug_assert!(i != j && cap >= 0.0 && rev_cap >= 0.0);
        let a = self.arcs.len();
        self.arcs.push(Arc {
            head: j,
            next: self.nodes[i].first,
            r_cap: cap,
        });
        self.nodes[i].first = a;
        self.arcs.push(Arc {
            head: i,
            next: self.nodes[j].first,
            r_cap: rev_cap,
        });
        self.nodes[j].first = a + 1;
    }

    /// Runs the max-flow computation and returns its value.
    pub fn maxflow(&mut self) -> f64 {
        if !self.solved {
            self.run();
            self.solved = true;
        }
        self.flow
    }

    /// Side of the minimum cut. Nodes that cannot reach the sink in the
    /// residual graph are reported on the source side.
    pub fn segment(&self, i: usize) -> Segment {
        let node = &self.nodes[i];
        if node.parent != NONE && node.is_sink {
            Segment::Sink
        } else {
            Segment::Source
        }
    }

    fn set_active(&mut self, i: usize) {
        if !self.nodes[i].active {
            self.nodes[i].active = true;
            self.queue.push_back(i);
        }
    }

    fn next_active(&mut self) -> Option<usize> {
        while let Some(i) = self.queue.pop_front() {
            self.nodes[i].active = false;
            if self.nodes[i].parent != NONE {
                return Some(i);
            }
        }
        None
    }

    #[inline]
    fn sister(a: usize) -> usize {
        a ^ 1
    }

    fn run(&mut self) {
        for i in 0..self.nodes.len() {
            let tr = self.nodes[i].tr_cap;
            let node = &mut self.nodes[i];
            node.ts = 0;
            if tr != 0.0 {
                node.is_sink = tr < 0.0;
                node.parent = TERMINAL;
                node.dist = 1;
                self.set_active(i);
            } else {
                node.parent = NONE;
            }
        }

        let mut current: Option<usize> = None;
        loop {
            let mut i = None;
            if let Some(c) = current {
                self.nodes[c].active = false;
                if self.nodes[c].parent != NONE {
                    i = Some(c);
                }
            }
            let i = match i.or_else(|| self.next_active()) {
                Some(i) => i,
                None => break,
            };

            let middle = self.grow(i);
            self.time += 1;
            match middle {
                Some(a) => {
                    // Keep `i` current so its remaining arcs are scanned again.
                    self.nodes[i].active = true;
                    current = Some(i);
                    self.augment(a);
                    while let Some(o) = self.orphans.pop_front() {
                        if self.nodes[o].is_sink {
                            self.process_sink_orphan(o);
                        } else {
                            self.process_source_orphan(o);
                        }
                    }
                }
                None => current = None,
            }
        }
    }

    /// Grows the tree containing `i`; returns an arc from the source tree to
    /// the sink tree when the trees touch.
    fn grow(&mut self, i: usize) -> Option<usize> {
        let (ts, dist, sink_tree) = {
            let n = &self.nodes[i];
            (n.ts, n.dist, n.is_sink)
        };
        let mut a = self.nodes[i].first;
        while a != NONE {
            let residual = if sink_tree {
                self.arcs[Self::sister(a)].r_cap
            } else {
                self.arcs[a].r_cap
            };
            if residual > 0.0 {
                let j = self.arcs[a].head;
                let nj = &self.nodes[j];
                if nj.parent == NONE {
                    let nj = &mut self.nodes[j];
                    nj.is_sink = sink_tree;
                    nj.parent = Self::sister(a);
                    nj.ts = ts;
                    nj.dist = dist + 1;
                    self.set_active(j);
                } else if nj.is_sink != sink_tree {
                    return Some(if sink_tree { Self::sister(a) } else { a });
                } else if nj.ts <= ts && nj.dist > dist {
                    let nj = &mut self.nodes[j];
                    nj.parent = Self::sister(a);
                    nj.ts = ts;
                    nj.dist = dist + 1;
                }
            }
            a = self.arcs[a].next;
        }
        None
    }

    fn augment(&mut self, middle: usize) {
        let mut bottleneck = self.arcs[middle].r_cap;
        // Source side.
        let mut i = self.arcs[Self::sister(middle)].head;
        loop {
            let a = self.nodes[i].parent;
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.arcs[Self::sister(a)].r_cap);
            i = self.arcs[a].head;
        }
        bottleneck = bottleneck.min(self.nodes[i].tr_cap);
        // Sink side.
        let mut i = self.arcs[middle].head;
        loop {
            let a = self.nodes[i].parent;
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.arcs[a].r_cap);
            i = self.arcs[a].head;
        }
        bottleneck = bottleneck.min(-self.nodes[i].tr_cap);

        self.arcs[Self::sister(middle)].r_cap += bottleneck;
        self.arcs[middle].r_cap -= bottleneck;

        let mut i = self.arcs[Self::sister(middle)].head;
        loop {
            let a = self.nodes[i].parent;
            if a == TERMINAL {
                break;
            }
            self.arcs[a].r_cap += bottleneck;
            self.arcs[Self::sister(a)].r_cap -= bottleneck;
            if self.arcs[Self::sister(a)].r_cap <= 0.0 {
                self.arcs[Self::sister(a)].r_cap = 0.0;
                self.set_orphan_front(i);
            }
            i = self.arcs[a].head;
        }
        self.nodes[i].tr_cap -= bottleneck;
        if self.nodes[i].tr_cap <= 0.0 {
            self.nodes[i].tr_cap = 0.0;
            self.set_orphan_front(i);
        }

        let mut i = self.arcs[middle].head;
        loop {
            let a = self.nodes[i].parent;
            if a == TERMINAL {
                break;
            }
            self.arcs[Self::sister(a)].r_cap += bottleneck;
            self.arcs[a].r_cap -= bottleneck;
            if self.arcs[a].r_cap <= 0.0 {
                self.arcs[a].r_cap = 0.0;
                self.set_orphan_front(i);
            }
            i = self.arcs[a].head;
        }
        self.nodes[i].tr_cap += bottleneck;
        if self.nodes[i].tr_cap >= 0.0 {
            self.nodes[i].tr_cap = 0.0;
            self.set_orphan_front(i);
        }

        self.flow += bottleneck;
    }

    fn set_orphan_front(&mut self, i: usize) {
        self.nodes[i].parent = ORPHAN;
        self.orphans.push_front(i);
    }

    fn set_orphan_rear(&mut self, i: usize) {
        self.nodes[i].parent = ORPHAN;
        self.orphans.push_back(i);
    }

    /// Distance from `j` to its terminal through valid parents, or `None`
    /// when the path ends at an orphan. Marks the traversed path.
    fn origin_distance(&mut self, start: usize) -> Option<u32> {
        let mut j = start;
        let mut d: u32 = 0;
        loop {
            if self.nodes[j].ts == self.time {
                d += self.nodes[j].dist;
                break;
            }
            let a = self.nodes[j].parent;
            d += 1;
            if a == TERMINAL {
                self.nodes[j].ts = self.time;
                self.nodes[j].dist = 1;
                break;
            }
            if a == ORPHAN || a == NONE {
                return None;
            }
            j = self.arcs[a].head;
        }
        // Cache distances along the path.
        let mut j = start;
        let mut dd = d;
        while self.nodes[j].ts != self.time {
            self.nodes[j].ts = self.time;
            self.nodes[j].dist = dd;
            dd -= 1;
            j = self.arcs[self.nodes[j].parent].head;
        }
        Some(d)
    }

    fn process_orphan(&mut self, i: usize, sink_tree: bool) {
        let mut best: Option<(usize, u32)> = None;
        let mut a0 = self.nodes[i].first;
        while a0 != NONE {
            let residual = if sink_tree {
                self.arcs[a0].r_cap
            } else {
                self.arcs[Self::sister(a0)].r_cap
            };
            if residual > 0.0 {
                let j = self.arcs[a0].head;
                if self.nodes[j].is_sink == sink_tree && self.nodes[j].parent != NONE {
                    if let Some(d) = self.origin_distance(j) {
                        if best.is_none_or(|(_, bd)| d < bd) {
                            best = Some((a0, d));
                        }
                    }
                }
            }
            a0 = self.arcs[a0].next;
        }

        if let Some((a, d)) = best {
            let n = &mut self.nodes[i];
            n.parent = a;
            n.ts = self.time;
            n.dist = d + 1;
            return;
        }

        // No valid parent: `i` becomes free and its children become orphans.
        self.nodes[i].parent = NONE;
        let mut a0 = self.nodes[i].first;
        while a0 != NONE {
            let j = self.arcs[a0].head;
            let nj_parent = self.nodes[j].parent;
            if self.nodes[j].is_sink == sink_tree && nj_parent != NONE {
                let residual = if sink_tree {
                    self.arcs[a0].r_cap
                } else {
                    self.arcs[Self::sister(a0)].r_cap
                };
                if residual > 0.0 {
                    self.set_active(j);
                }
                if nj_parent != TERMINAL && nj_parent != ORPHAN && self.arcs[nj_parent].head == i {
                    self.set_orphan_rear(j);
                }
            }
            a0 = self.arcs[a0].next;
        }
    }

    fn process_source_orphan(&mut self, i: usize) {
        self.process_orphan(i, false);
    }

    fn process_sink_orphan(&mut self, i: usize) {
        self.process_orphan(i, true);
    }
}

/// Explicit s-t network with arbitrary directed edges, for callers that do
/// not want to fold terminal arcs themselves.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowNetwork {
    pub num_nodes: usize,
    pub source: usize,
    pub sink: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

/// Minimum cut of a [`FlowNetwork`].
#[derive(Clone, Debug, PartialEq)]
pub struct MinCut {
    pub value: f64,
    /// `true` for nodes on the source side; always includes the source.
    pub source_side: Vec<bool>,
}

impl MinCut {
    /// Total capacity of edges leaving the source side.
    pub fn capacity(&self, network: &FlowNetwork) -> f64 {
        network
            .edges
            .iter()
            .filter(|&&(u, v, _)| self.source_side[u] && !self.source_side[v])
            .map(|&(_, _, c)| c)
            .sum()
    }
}

/// Max-flow value and a minimum cut of an explicit network.
pub fn max_flow(network: &FlowNetwork) -> MinCut {
    let n = network.num_nodes;
    let (s, t) = (network.source, network.sink);
    let inner: Vec<usize> = (0..n).filter(|&v| v != s && v != t).collect();
    let mut index = vec![NONE; n];
    for (k, &v) in inner.iter().enumerate() {
        index[v] = k;
    }
    let mut graph = Graph::new(inner.len());
    let mut direct = 0.0;
    for &(u, v, c) in &network.edges {
        if u == v || c <= 0.0 || u == t || v == s {
            continue;
        }
        match (u == s, v == t) {
            (true, true) => direct += c,
            (true, false) => graph.add_tweights(index[v], c, 0.0),
            (false, true) => graph.add_tweights(index[u], 0.0, c),
            (false, false) => graph.add_edge(index[u], index[v], c, 0.0),
        }
    }
    let value = graph.maxflow() + direct;
    let mut source_side = vec![false; n];
    source_side[s] = true;
    for (k, &v) in inner.iter().enumerate() {
        source_side[v] = graph.segment(k) == Segment::Source;
    }
    MinCut { value, source_side }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive minimum over all cuts separating source from sink.
    fn brute_force_min_cut(net: &FlowNetwork) -> f64 {
        let free: Vec<usize> = (0..net.num_nodes)
            .filter(|&v| v != net.source && v != net.sink)
            .collect();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << free.len()) {
            let mut side = vec![false; net.num_nodes];
            side[net.source] = true;
            for (b, &v) in free.iter().enumerate() {
                side[v] = mask >> b & 1 == 1;
            }
            let cap: f64 = net
                .edges
                .iter()
                .filter(|&&(u, v, _)| side[u] && !side[v])
                .map(|e| e.2)
                .sum();
            best = best.min(cap);
        }
        best
    }

    #[test]
    fn single_edge() {
        let net = FlowNetwork {
            num_nodes: 2,
            source: 0,
            sink: 1,
            edges: vec![(0, 1, 5.0)],
        };
        let cut = max_flow(&net);
        assert_eq!(cut.value, 5.0);
        assert_eq!(cut.source_side, vec![true, false]);
    }

    #[test]
    fn two_disjoint_paths_add_up() {
        let net = FlowNetwork {
            num_nodes: 4,
            source: 0,
            sink: 3,
            edges: vec![(0, 1, 3.0), (1, 3, 3.0), (0, 2, 4.0), (2, 3, 4.0)],
        };
        assert_eq!(max_flow(&net).value, 7.0);
    }

    #[test]
    fn free_nodes_fall_on_source_side() {
        let mut g = Graph::new(2);
        g.add_tweights(0, 1.0, 1.0);
        assert_eq!(g.maxflow(), 1.0);
        assert_eq!(g.segment(0), Segment::Source);
        assert_eq!(g.segment(1), Segment::Source);
    }

    fn network_strategy() -> impl Strategy<Value = FlowNetwork> {
        (2usize..=8).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n, 0u32..=10), 0..30).prop_map(move |edges| FlowNetwork {
                num_nodes: n,
                source: 0,
                sink: n - 1,
                edges: edges.into_iter().map(|(u, v, c)| (u, v, c as f64)).collect(),
            })
        })
    }

    proptest! {
        #[test]
        fn flow_equals_brute_force_min_cut(net in network_strategy()) {
            let cut = max_flow(&net);
            prop_assert_eq!(cut.value, brute_force_min_cut(&net));
            prop_assert_eq!(cut.capacity(&net), cut.value);
        }
    }
}
