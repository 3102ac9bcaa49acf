pub mod asymp;
pub mod cli;
pub mod cocycle;
pub mod driving;
pub mod error;
pub mod exactness;
pub mod measure;
pub mod mixing;
pub mod scenario;
pub mod skewprod;
pub mod transfer;

pub use error::{Error, Result};
