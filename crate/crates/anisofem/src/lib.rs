//! Finite element solvers for elliptic problems whose diffusion is dominated
//! by one direction, with asymptotic-preserving reformulations that stay
//! well posed as the anisotropy ratio goes to zero.
//!
//! Pipeline: [`geometry`] builds a structured mesh, [`anisofield`] supplies the
//! unit field `b` and diffusion tensor, [`fem`] assembles the bilinear forms,
//! [`schemes`] builds and solves the block systems on top of [`sparse`], and
//! [`studies`] runs the parameter sweeps. [`spectral`] is an independent
//! Fourier-series oracle for the aligned case.

pub mod anisofield;
pub mod check;
pub mod exec;
pub mod fem;
pub mod geometry;
pub mod schemes;
pub mod sparse;
pub mod spectral;
pub mod studies;

pub use exec::Exec;
