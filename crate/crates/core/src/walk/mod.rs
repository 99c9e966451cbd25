//! Walk simulation, the switch-walk-switch product chain, fiber-factorized
//! return probabilities and their estimators.

pub mod confine;
pub mod estimate;
pub mod fait0;
pub mod fit;
pub mod product;
pub mod strata;
pub mod trace;

pub use confine::{confined_prob, confinement_prob};
pub use estimate::{parse_estimates, Method, ReturnEstimate, Welford};
pub use fait0::{calibrate_fait0_convention, fait0_rhs_exact, Convention, Dynamics, Fait0Model};
pub use fit::{fit_neg_log, fit_stretched_exponent, StretchedFit};
pub use product::{exact_product_return, product_step, ProductKernel};
pub use trace::{simulate, LocalTimes, WalkTrace};
