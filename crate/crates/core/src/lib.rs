//! Verifiable bounds on the sparsity level up to which l1 recovery of
//! sign-restricted sparse signals is exact, plus l1 recovery and
//! non-Euclidean matching pursuit with error guarantees.

pub mod cert_lower;
pub mod cert_upper;
pub mod ensembles;
pub mod error;
pub mod io;
pub mod lp;
pub mod model;
pub mod recovery;
pub mod rng;

pub use error::{Error, Result};
pub use model::{
    best_s_approx, mutual_incoherence, normalize_sign_restrictions, phi_s, psi, s_top_norm,
    CertParams, ResidualNorm, SenseMatrix, SignPattern, SparseSignal,
};
