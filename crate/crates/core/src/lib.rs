//! Item-listing optimization with a diversity penalty.
//!
//! A listing instance assigns `n` items to `n` list positions, trading the
//! estimated sales of each placement against the similarity of neighbouring
//! items. The problem is a quadratic assignment problem; this crate encodes
//! it as a penalized QUBO and solves it either exactly (small lists), through
//! the linear assignment relaxation of the sales term, or with a decomposing
//! large-neighbourhood search whose subproblems are chosen either along the
//! item/position structure or by per-variable energy impact.
//!
//! Modules, bottom-up:
//!
//! * [`model`]: instances, assignments, objective terms, instance files.
//! * [`assign`]: Hungarian solver and exhaustive permutation search.
//! * [`qubo`]: QUBO construction, energies, decoding and repair.
//! * [`subsolve`]: exhaustive and simulated-annealing QUBO subsolvers.
//! * [`decomp`]: the decomposition loop and the two-stage solve.
//! * [`ingest`]: access-log parsing, sales and similarity estimation, synthetic instances.
//! * [`experiments`]: diversity-weight sweeps and decomposition benchmarks.

pub mod assign;
pub mod decomp;
pub mod error;
pub mod experiments;
pub mod ingest;
pub mod matrix;
pub mod model;
pub mod qubo;
pub mod subsolve;

pub use assign::{brute_force_qap, solve_lap, LapResult};
pub use decomp::{solve_decomposed, two_stage_solve, DecompParams, Policy, SolveReport};
pub use error::{Error, Result};
pub use matrix::SquareMatrix;
pub use model::{
    banded_adjacency, diversity_term, qap_objective, sales_term, validate_instance, Assignment, ListingInstance,
    ObjectiveBreakdown,
};
pub use qubo::{build_qubo, decode, default_m, repair, BitVector, QuboMatrix, QuboProblem};
pub use subsolve::{Exhaustive, SimulatedAnnealing, Subsolver, SubsolverParams};

#[cfg(test)]
pub(crate) mod testutil {
    use crate::model::ListingInstance;
    use crate::qubo::BitVector;

    /// sales [[2,1],[1,2]], similarity 3 between the two items, band 1.
    pub fn two_item(w: f64) -> ListingInstance {
        ListingInstance::from_rows(
            vec![vec![2.0, 1.0], vec![1.0, 2.0]],
            vec![vec![0.0, 3.0], vec![3.0, 0.0]],
            1,
            w,
        )
        .unwrap()
    }

    pub fn all_bit_vectors(len: usize) -> impl Iterator<Item = BitVector> {
        (0u32..1 << len).map(move |m| BitVector::from_bits((0..len).map(|k| m >> k & 1 == 1).collect()))
    }
}
