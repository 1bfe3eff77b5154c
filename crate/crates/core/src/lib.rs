//! Spectral simulation and normal-form verification toolkit for the
//! renormalized cubic fourth-order NLS on the circle, truncated to finitely
//! many Fourier modes.

pub mod bitree;
pub mod dynamics;
pub mod measure;
pub mod normal_form;
pub mod spectral;

pub use num_complex::Complex64;
