//! Downlink side: UL-to-DL parameter reconstruction, the three DL estimation
//! schemes, multi-user path scheduling and pilot-overhead accounting.

pub mod estimate;
pub mod reconstruct;
pub mod schedule;

pub use estimate::*;
pub use reconstruct::*;
pub use schedule::*;
