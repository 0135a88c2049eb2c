//! Semilinear equations `L u = m f(·, u) + μ` with measure data on finite
//! Dirichlet forms, solved deterministically and through the associated
//! Markov chain and its backward equations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bsde;
pub mod catalog;
pub mod elliptic;
pub mod form;
pub mod harness;
pub mod linalg;
pub mod markov;
pub mod measure;
pub mod random;
pub mod relax;
