//! Spectral Nash-Moser solver for `-Lap u + u + (-1)^rho eps a Lap^rho u = eps f(x, u)`
//! on flat tori `T^n` (`n <= 3`) and the round sphere `S^2`.

pub mod block;
pub mod error;
pub mod lattice;
pub mod linear_solver;
pub mod nash_moser;
pub mod nonlinearity;
pub mod problem;
pub mod sampling;
pub mod small_divisors;
pub mod sphere;
pub mod torus;

pub use num_complex::Complex64;
