//! Optimal control on almost Lie algebroids.
//!
//! Structure checks for algebroids given by local data, integration of control
//! systems and of the transport equations in `E` and `E*`, Hamiltonian
//! maximization and extremal synthesis, needle-variation cones with a
//! separation test, and a set of runnable scenarios.
//!
//! ```
//! use algoc::algebroid::so3;
//! use algoc::control::{solve_extremal, ExtremalOptions, HorizonMode};
//! use algoc::problem::{ControlProblem, ControlSet};
//!
//! let problem = ControlProblem::new(
//!     so3(),
//!     |_, u| vec![0.6 * u[0], 0.0, 1.0],
//!     |_, _| 1.0,
//!     ControlSet::Finite(vec![vec![-1.0], vec![1.0]]),
//! );
//! let ex = solve_extremal(
//!     &problem, &[], &[0.3, 1.0, 0.2], -1.0, 0.0, 8.0,
//!     HorizonMode::Free, &ExtremalOptions::default(),
//! )?;
//! assert_eq!(ex.switches.len(), 2);
//! # Ok::<(), algoc::Error>(())
//! ```

pub mod algebroid;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod homotopy;
pub mod needle;
pub mod problem;
pub mod scenarios;

pub use error::{Error, Result};
