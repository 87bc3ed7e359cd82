//! Eigenenergy bounds for Schrödinger-type problems whose power moments obey a
//! linear recursion in the energy.
//!
//! The pipeline is:
//!
//! 1. [`mer`] turns a problem's moment recursion into coefficient tables
//!    `M_E(p, ℓ)` expressing every moment through the free (missing) moments.
//! 2. [`weight`] builds orthonormal polynomials for a reference weight.
//! 3. [`cdr`] projects the moment tables onto those polynomials, giving the
//!    Λ-vectors, the positive matrices `P_I(E)` and the energy functionals
//!    (`λ_I` for a unit-norm constraint, `L_I` for `u₀ = 1`).
//! 4. [`bounds`] locates local minima of a functional in the energy, picks a
//!    coarse cap and brackets the level set to produce lower/upper bounds.
//!
//! [`problems`] registers the harmonic oscillator, the `x⁴ − 5x²` double well
//! and the quadratic Zeeman problem in parabolic coordinates.

pub mod bounds;
pub mod cdr;
pub mod error;
pub mod linalg;
pub mod mer;
pub mod poly;
pub mod precision;
pub mod problems;
pub mod weight;

pub use error::{Error, Result};
pub use precision::{Decimal, Precision, Real};
