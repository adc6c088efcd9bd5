//! Laplacian eigenbases on discretized domains, spectral projections of
//! pointwise eigenfunction products, exact exponent tables, low-rank density
//! fitting, and density-fitted four-center repulsion integrals.
//!
//! The crate is organized around a small pipeline: build a [`domains::Grid`],
//! assemble the [`operators::SparseOperator`], compute or sample an
//! [`spectra::EigenBasis`], then study products of its modes with
//! [`products`], [`bounds`] and [`fitting`].

pub mod basis_io;
pub mod bounds;
pub mod domains;
pub mod error;
pub mod fitting;
mod linalg;
pub mod operators;
pub mod products;
pub mod report;
pub mod spectra;

pub use domains::{build_grid, BoundaryKind, DensitySpec, DomainSpec, Grid};
pub use error::{Error, Result};
pub use operators::{assemble_laplacian, SparseOperator};
pub use products::{NormKind, RemainderReport, SpectralField};
pub use spectra::{analytic_basis, compute_basis, BasisSource, EigMethod, EigenBasis};
