//! Ground-state alkali-metal spin dynamics under spin-exchange collisions.
//!
//! The crate covers the whole chain from angular-momentum algebra to the
//! numbers an experiment reports:
//!
//! * [`angular`]: Clebsch-Gordan coefficients and irreducible tensor operators.
//! * [`hilbert`]: the coupled electron/nuclear space, spin operators and states.
//! * [`dynamics`]: the density-matrix equation of motion and its RK4 integrator.
//! * [`multipole`]: projection of states onto multipole moments `rho_LM(F,F')`.
//! * [`superop`]: the linear Liouville superoperator, its eigenmodes, the
//!   nonlinear mean-field couplings and the perturbative birefringent prediction.
//! * [`observables`]: probe-absorption signals and the birefringent oscillator ratio.
//! * [`fitting`]: free-induction-decay fits and the low-field threshold fit.

pub mod angular;
pub mod dynamics;
pub mod eigen;
pub mod error;
pub mod fitting;
pub mod hilbert;
pub mod multipole;
pub mod observables;
pub mod superop;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix used for operators and states.
pub type CMatrix = nalgebra::DMatrix<C64>;

/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;
