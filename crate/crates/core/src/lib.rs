//! Distribution-grid operations engine: radial power flow, DER models,
//! transmission voltage-support tariffs and a mixed-integer conic OPF.

pub mod model;
pub mod network;
pub mod powerflow;
pub mod der;
pub mod vsupport;
pub mod opf;
pub mod sim;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
