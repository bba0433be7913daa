//! Stochastic BDDC preconditioners for Monte Carlo sampling of a
//! two-dimensional elliptic equation with a lognormal random diffusion
//! coefficient.
//!
//! Per sample, the discretized problem reduces to an interface system solved
//! by preconditioned conjugate gradients. A deterministic BDDC preconditioner
//! would rebuild and refactor every subdomain block for each sample; here the
//! sample-dependent pieces are instead expanded offline in an orthonormal
//! Hermite chaos of subdomain-local Karhunen–Loève coordinates (by stochastic
//! Galerkin block solves or stochastic collocation quadrature), and each
//! sample only evaluates those expansions and factors a small coarse matrix.
//!
//! The crate splits along the pipeline:
//!
//! - [`mesh`], [`partition`]: structured triangulation, interior/dual/primal
//!   classification, index maps between interface spaces;
//! - [`field`]: covariance kernel, discrete KL bases, sampling, local
//!   coordinates;
//! - [`chaos`]: multi-index sets, Hermite evaluation, Gaussian moments,
//!   matrix-valued expansions;
//! - [`assembly`]: P1 stiffness and chaos coefficient matrices;
//! - [`bddc`]: the deterministic preconditioner and interface operator;
//! - [`offline`], [`online`]: the two-stage stochastic construction;
//! - [`krylov`]: PCG with Lanczos condition estimates;
//! - [`harness`]: experiment configuration, Monte Carlo driver, reports;
//! - [`cache`]: versioned binary artifact files.
//!
//! The `stoch-bddc` binary drives experiment cells from the command line; the
//! book under `book/` walks through the method with runnable snippets.

pub mod assembly;
pub mod bddc;
pub mod cache;
pub mod chaos;
pub mod error;
pub mod field;
pub mod harness;
pub mod krylov;
pub mod mesh;
pub mod offline;
pub mod online;
pub mod partition;

pub mod linalg;

pub use error::{Error, Result};
pub use linalg::Matrix;

// Keep the book's code snippets compiling: each chapter is attached as a
// doctest so `cargo test` exercises them.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            #[allow(dead_code)]
            struct $name;
        };
    }
    chapter!(Introduction, "../../../book/src/introduction.md");
    chapter!(ModelProblem, "../../../book/src/model-problem.md");
    chapter!(DeterministicBddc, "../../../book/src/deterministic-bddc.md");
    chapter!(RandomField, "../../../book/src/random-field.md");
    chapter!(Chaos, "../../../book/src/chaos.md");
    chapter!(OfflineOnline, "../../../book/src/offline-online.md");
    chapter!(Experiments, "../../../book/src/experiments.md");
}
