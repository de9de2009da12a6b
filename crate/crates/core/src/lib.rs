pub mod ambiguity;
pub mod approx;
pub mod ddwass;
pub mod disjunctive;
pub mod error;
pub mod harness;
pub mod interdiction;
pub mod lp;
pub mod model;
pub mod sddp;

pub use error::{Error, Result};
