pub mod belief;
pub mod env;
pub mod error;
pub mod harness;
pub mod model;
pub mod si;
pub mod table;
pub mod tom;
pub mod tree;

pub use error::PlanError;
