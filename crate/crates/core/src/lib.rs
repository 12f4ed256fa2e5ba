//! Tree-ensemble regression: slow-growing trees (SGT), CART, random forests,
//! stochastic gradient boosting, booging and a lasso benchmark, plus the
//! simulation and benchmark harnesses used to compare them.
//!
//! All learners consume a [`tabular::Dataset`] and produce models that
//! implement [`model::Regressor`]. Randomness is always driven by explicit
//! 64-bit seeds; see [`seed`] for how child streams are derived.

pub mod cart;
pub mod ensembles;
pub mod error;
pub mod eval;
pub mod lasso;
pub mod model;
pub mod seed;
pub mod sgt;
pub mod simlab;
pub mod splitcore;
pub mod tabular;

pub use error::{Error, Result};

pub use model::{Model, ModelSpec, Regressor};
pub use tabular::{Dataset, FeatureMatrix};
