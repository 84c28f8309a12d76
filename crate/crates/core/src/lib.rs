pub mod cpi;
pub mod dynamics;
pub mod error;
pub mod mepi;
pub mod nsga;
pub mod rollout;
pub mod scenarios;
pub mod sl_core;
pub mod state_space;
pub mod transform;

pub use error::{Error, Result};
