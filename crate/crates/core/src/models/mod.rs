//! The experiment models and their reference values.

pub mod banana;
pub mod conjugate;
pub mod gaussian;
pub mod radon;
pub mod sir;

pub use banana::Banana;
pub use conjugate::Conjugate;
pub use gaussian::{gaussian_predictive_ground_truth, GaussianPredictive};
pub use radon::{load_radon_csv, parse_radon_csv, Radon, RadonData};
pub use sir::{generate_sir_data, sir_ground_truth, solve_sir_ode, Sir, SirData, SirState};
