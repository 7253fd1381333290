//! Curved-manifold classification data, distribution shifts and reveal
//! paths.
//!
//! Class `c` lives on `x = μ_c + U_c τ + q·w_c ⊙ sin(V_c τ) + σ·ε` with
//! `τ ~ U[−1,1]^k`. A reveal path orders the input coordinates (or DCT
//! coefficients) into blocks that are exposed cumulatively, with a 0/1 mask
//! channel appended so the model can tell hidden from zero.

mod data;
mod ood;
mod paths;

pub use data::{
    generate_manifold, linear_probe_accuracy, Difficulty, LabeledSet, ManifoldGenerator,
    ManifoldSpec,
};
pub use ood::{apply_ood, OodKind, OodSpec};
pub use paths::{
    build_paths, dct_matrix, read_path_manifest, reveal, reveal_schedule, write_path_manifest,
    Domain, PathKind, RevealPath,
};
