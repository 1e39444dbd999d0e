//! Finite-difference solver for axisymmetric Navier-Stokes flow in a finite
//! cylinder with Navier-Hodge-Lions walls, evolved in the meridian plane
//! through the swirl circulation `Gamma = r v_theta` and the scaled vorticity
//! `Omega = omega_theta / r`, together with runtime checks of the a-priori
//! estimates that govern global regularity.

pub mod error;
pub mod grid;
pub mod harness;
pub mod io;
pub mod convergence;
pub mod diagnostics;
pub mod dynamics;
pub mod elliptic;
pub mod initdata;
pub mod operators;

pub use error::{Error, Result};
