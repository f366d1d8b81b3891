//! Spherical needlet frames and block-thresholding regression on the sphere.
//!
//! The crate is layered bottom-up:
//!
//! * [`sphere`]: points, geodesic distance, ε-nets, Voronoi blocks
//! * [`harmonic`]: Legendre polynomials and spherical harmonics
//! * [`cubature`] and [`sht`]: exact product quadrature and fast transforms
//! * [`needlet`]: the window, the frame, coefficient pyramids
//! * [`observation`]: the Gaussian observation model
//! * [`threshold`]: block statistics, the estimator and rate exponents
//! * [`besov`]: Besov seminorms and random test functions
//! * [`bench`]: Monte Carlo risk measurement
//! * [`config`]: run configuration shared by the command-line tool

pub mod besov;
pub mod bench;
pub mod config;
pub mod cubature;
pub mod error;
pub mod harmonic;
pub mod needlet;
pub mod observation;
pub mod rng;
pub mod sht;
pub mod sphere;
pub mod threshold;

pub use error::{Error, Result};
