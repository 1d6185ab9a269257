//! Leaf averaging for singular Riemannian foliations of round spheres.
//!
//! The crate computes the averaging operator `f -> [f]` (mean of `f` over the
//! leaf through each point) for three families of foliations, discovers
//! generators of the ring of basic polynomials degree by degree, and checks on
//! samples that the resulting polynomial map separates leaves.
//!
//! * [`poly`]: exact and floating sparse polynomials, calculus, sphere moments.
//! * [`models`]: finite groups, tori and isoparametric (Cartan–Münzner) foliations.
//! * [`averaging`]: the averaging operator with exact and least-squares engines.
//! * [`basic_ring`]: basic subspaces, generator discovery, Molien series.
//! * [`separation`]: the map `rho`, separation certificates, quotient export.
//! * [`runner`]: config-driven batch runs used by the `leafavg` binary.

pub mod averaging;
pub mod basic_ring;
pub mod exec;
pub mod linalg;
pub mod models;
pub mod poly;
pub mod runner;
pub mod separation;
pub mod sphere;
