//! Analytic solutions of a linearly damped quantum harmonic oscillator
//! (moment evolution, Fock-basis density matrix, Gaussian phase-space
//! distributions, steady states) together with a truncated-basis
//! master-equation integrator that serves as an independent numerical check
//! for every closed form.

pub mod density_matrix;
pub mod error;
pub mod linalg;
pub mod moments;
pub mod oracle;
pub mod params;
pub mod wigner;

pub use error::{Error, Result};
