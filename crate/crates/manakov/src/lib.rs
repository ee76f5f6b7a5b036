//! `manakov` — a numerical toolkit for the integrable four-dimensional
//! (so(4)) Manakov top.
//!
//! The library covers the full pipeline from dynamics to closed-form
//! solutions:
//!
//! * [`core`] — angular-momentum state on so(4), inertia parameters,
//!   Poisson structure, and the four conserved integrals;
//! * [`dynamics`] — the Euler–Frahm vector field, fixed-step RK4
//!   integration, the generating function of integrals, and a Lax-pair
//!   residual check;
//! * [`spectral`] — the genus-2 spectral curve: quartic roots, isotropic
//!   vectors, the linearizing change of variables and its coefficients,
//!   normal-form moduli;
//! * [`wurzel`] — Wurzelfunktionen (root functions) on the curve, their
//!   quadratic identities, and recovery of the divisor from dynamical data;
//! * [`abelian`] — period matrix, Riemann theta functions with
//!   half-integer characteristics, the Abel map, calibration of theta
//!   quotients, and reconstruction of the trajectory from theta data;
//! * [`cli`] — configuration, report types, and the command entry points
//!   used by the `manakov` binary.

pub mod abelian;
pub mod cli;
pub mod core;
pub mod dynamics;
pub mod error;
pub mod spectral;
pub mod wurzel;

pub use error::ManakovError;
