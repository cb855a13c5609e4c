//! Uplink-aided downlink channel estimation for massive MIMO-OTFS.

pub mod channel;
pub mod error;
pub mod exec;
pub mod numeric;
pub mod otfs;
pub mod sbl;
pub mod ul;
pub mod dl;
pub mod harness;

pub use error::{Error, Result};
