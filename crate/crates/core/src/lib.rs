//! Time-consistent investment, consumption and life-insurance policies for a
//! CRRA agent with general (non-exponential) discounting.
//!
//! The equilibrium value function has the form `v(t,x) = a(t) U(x + b(t))`.
//! [`ie_solver`] computes `a` from its integral equation, [`closed_form`]
//! holds `b` and the special cases where `a` is explicit, [`policy`] turns
//! the pair into feedback maps and [`simulate`] checks the fixed point by
//! Monte Carlo.

pub mod closed_form;
pub mod curve;
pub mod error;
pub mod fixtures;
pub mod ie_solver;
pub mod model;
pub mod policy;
pub mod quadrature;
pub mod simulate;

pub use curve::Curve;
pub use error::{Error, Result};
pub use ie_solver::{solve_a, SolutionGrid};
pub use model::{
    DiscountKernel, InsuranceIncomeSpec, MarketParams, ModelSpec, MortalityModel, ParetoWeight, PayoutRatio,
    PreferenceParams, TimeFunction,
};
pub use policy::PolicyTriple;
pub use simulate::{Scheme, SimConfig};
