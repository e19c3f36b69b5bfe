//! Symbolic-numeric engine for integrating vector fields that live in a
//! finite-dimensional solvable transitive Lie algebra, using only
//! quadratures, function inversion, matrix exponentials and linear algebra.
//!
//! The crate is organized along the pipeline:
//!
//! * [`expr`] — exact rational-function coefficients (parse, differentiate,
//!   evaluate, canonical forms).
//! * [`vfield`] — vector fields, Lie brackets, pointwise rank and
//!   transitivity probes.
//! * [`lie`] — exact structure theory over structure constants: derived,
//!   central and subalgebra-relative series, solvability, small Abelian
//!   ideals, triangular bases.
//! * [`rectify`] — adapted charts built by quadratures: straighten an
//!   Abelian ideal and split the dynamics into a fiber-linear block over a
//!   reduced base system.
//! * [`integrate`] — the quadrature integrator itself plus the closed-form
//!   linear solvers, with a strict audit that no ODE stepping happened.
//! * [`harness`] — corpus files, the independent Runge–Kutta oracle,
//!   comparison reports and case generation.

pub mod expr;
pub mod harness;
pub mod integrate;
pub mod lie;
pub mod linalg;
pub mod rectify;
pub mod vfield;
