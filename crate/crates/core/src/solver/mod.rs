//! Discrete pairwise-MRF minimisation by graph cuts.

mod expansion;
mod maxflow;

pub use expansion::{
    brute_force_minimum, energy, expansion_move, minimize, Labeling, Minimized, MoveOutcome, MrfProblem, TableMrf,
};
pub use maxflow::{max_flow, FlowNetwork, Graph, MinCut, Segment};
