pub mod bench;
pub mod cache;
pub mod catalog;
pub mod cluster;
pub mod engine;
pub mod error;
pub mod gen;
pub mod lgc;
pub mod reference;
pub mod store;
pub mod topology;

pub use error::{Error, Result};
pub use lakegraph_core as core;
